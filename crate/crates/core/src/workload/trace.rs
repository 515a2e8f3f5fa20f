//! Line-oriented workload trace format.
//!
//! ```text
//! diffuse-trace 1
//! objects <count>
//! <object id> <transfer bytes> <working bytes>      (count lines)
//! tasks <count>
//! <task id> <compute seconds> <object id>[,<object id>...]   (count lines)
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Compute times are
//! written with Rust's shortest round-trip float formatting.

use std::io::{BufRead, Write};

use super::{DataObject, Task, Workload};
use crate::error::{Error, Result};
use crate::ids::{ObjectId, TaskId};

pub const TRACE_MAGIC: &str = "diffuse-trace 1";

pub fn write_trace<W: Write>(workload: &Workload, mut out: W) -> Result<()> {
    writeln!(out, "{TRACE_MAGIC}")?;
    writeln!(out, "objects {}", workload.objects().len())?;
    for o in workload.objects() {
        writeln!(out, "{} {} {}", o.id.0, o.transfer_size, o.working_size)?;
    }
    writeln!(out, "tasks {}", workload.tasks().len())?;
    for t in workload.tasks() {
        write!(out, "{} {} ", t.id.0, t.compute_time)?;
        for (i, o) in t.required_objects.iter().enumerate() {
            if i > 0 {
                out.write_all(b",")?;
            }
            write!(out, "{}", o.0)?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Workload> {
    let mut lines = input
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| match l {
            Ok(s) => {
                let s = s.trim();
                !s.is_empty() && !s.starts_with('#')
            }
            Err(_) => true,
        });
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(s))) => Ok((n, s.trim().to_owned())),
            Some((_, Err(e))) => Err(e.into()),
            None => Err(Error::parse(0, format!("unexpected end of trace, expected {what}"))),
        }
    };

    let (n, magic) = next("header")?;
    if magic != TRACE_MAGIC {
        return Err(Error::parse(n, format!("expected `{TRACE_MAGIC}`, found `{magic}`")));
    }
    let n_objects = section_count(next("objects header")?, "objects")?;
    let mut objects = Vec::with_capacity(n_objects);
    for _ in 0..n_objects {
        let (n, line) = next("object line")?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::parse(n, "object line needs `id transfer_size working_size`"));
        }
        objects.push(DataObject::new(
            ObjectId(num(n, f[0])?),
            num(n, f[1])?,
            num(n, f[2])?,
        ));
    }
    let n_tasks = section_count(next("tasks header")?, "tasks")?;
    let mut tasks = Vec::with_capacity(n_tasks);
    for _ in 0..n_tasks {
        let (n, line) = next("task line")?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::parse(n, "task line needs `id compute_time objects`"));
        }
        let required = f[2]
            .split(',')
            .map(|s| num(n, s).map(ObjectId))
            .collect::<Result<Vec<_>>>()?;
        tasks.push(Task {
            id: TaskId(num(n, f[0])?),
            required_objects: required,
            compute_time: num(n, f[1])?,
        });
    }
    if let Some((n, _)) = lines.next() {
        return Err(Error::parse(n, "trailing content after last task"));
    }
    Workload::new(objects, tasks)
}

fn section_count((n, line): (usize, String), name: &str) -> Result<usize> {
    match line.split_once(' ') {
        Some((head, count)) if head == name => num(n, count.trim()),
        _ => Err(Error::parse(n, format!("expected `{name} <count>`"))),
    }
}

fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse()
        .map_err(|e| Error::parse(line, format!("bad number `{s}`: {e}")))
}
