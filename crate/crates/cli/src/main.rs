//! `diffuse`: run scenarios, sweeps and the index microbenchmark.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use diffuse_core::engine::{preset, preset_names, run_with_log, PRESETS, SWEEP_AXES};
use diffuse_core::index::{index_microbench, index_microbench_concurrent, MicrobenchReport, PrlsModel};
use diffuse_core::metrics::{export, hit_ratio, per_task_data_movement, ExportFormat, ReportSummary};
use diffuse_core::{Error, LogRecord, MetricsReport, Scenario, ScenarioFile};
use rayon::prelude::*;

const OUT_DIR_ENV: &str = "DIFFUSE_OUT_DIR";
const HASH_TABLE_LOOKUPS_PER_SEC: f64 = 4.18e6;

#[derive(Parser)]
#[command(name = "diffuse", version, about = "Data diffusion cluster simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file or preset and write its report.
    Run(RunArgs),
    /// Run a scenario once per value of one parameter.
    Sweep(SweepArgs),
    /// List presets, or print one as a scenario file.
    Presets {
        name: Option<String>,
    },
    /// Time index inserts and lookups and report the P-RLS crossover.
    Microbench(MicrobenchArgs),
    /// Check scenario files without running them.
    Validate {
        #[arg(required = true)]
        scenarios: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ExportFormat::Csv,
            Format::Json => ExportFormat::Json,
        }
    }
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; `-` writes to stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Directory for outputs when --out is not given.
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file, or a preset name (optionally written presets/NAME).
    scenario: String,
    #[command(flatten)]
    output: OutputArgs,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override a parameter, e.g. --set executors=64. Repeatable.
    #[arg(long = "set", value_name = "AXIS=VALUE")]
    overrides: Vec<String>,
    /// Write the event log as JSON lines.
    #[arg(long, value_name = "PATH")]
    events: Option<PathBuf>,
    /// Write one CSV row per dispatch decision.
    #[arg(long, value_name = "PATH")]
    decisions: Option<PathBuf>,
    /// Measure wall-clock decision time (makes reports non-reproducible).
    #[arg(long)]
    decision_timing: bool,
}

#[derive(Args)]
struct SweepArgs {
    template: String,
    #[arg(long)]
    axis: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    values: Vec<f64>,
    #[command(flatten)]
    output: OutputArgs,
    /// Also write each run's full report into this directory.
    #[arg(long, value_name = "DIR")]
    reports: Option<PathBuf>,
    /// Parallel runs; defaults to the number of CPUs.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct MicrobenchArgs {
    #[arg(long, default_value_t = 1_000_000)]
    entries: u64,
    /// Lookups per reader.
    #[arg(long, default_value_t = 1_000_000)]
    lookups: u64,
    #[arg(long, default_value_t = 100_000)]
    inserts: u64,
    /// Concurrent reader threads; more than one adds a concurrent writer.
    #[arg(long, default_value_t = 1)]
    readers: u64,
    /// Lookup rate the P-RLS model must match.
    #[arg(long, default_value_t = HASH_TABLE_LOOKUPS_PER_SEC)]
    prls_target: f64,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

/// Exit status 1 for bad input, 2 for failures while running.
enum Failure {
    Invalid(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Runtime(m) => m,
        }
    }
}

fn invalid(context: &str, e: Error) -> Failure {
    Failure::Invalid(format!("{context}: {e}"))
}

fn runtime(context: &str, e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{context}: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Presets { name } => cmd_presets(name),
        Command::Microbench(a) => cmd_microbench(a),
        Command::Validate { scenarios } => cmd_validate(&scenarios),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

/// Reads a scenario file, falling back to the built-in presets.
fn load(spec: &str) -> Result<(ScenarioFile, PathBuf), Failure> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{spec}: {e}")))?;
        let file = ScenarioFile::from_toml_str(&text).map_err(|e| invalid(spec, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        return Ok((file, base));
    }
    let name = spec.strip_prefix("presets/").unwrap_or(spec);
    let name = name.strip_suffix(".toml").unwrap_or(name);
    if PRESETS.iter().any(|(n, _)| *n == name) {
        let file = preset(name).map_err(|e| invalid(spec, e))?;
        return Ok((file, PathBuf::from(".")));
    }
    Err(Failure::Invalid(format!("{spec}: no such scenario file or preset")))
}

fn build(file: &ScenarioFile, base: &Path, what: &str) -> Result<Scenario, Failure> {
    let sc = file.build(base).map_err(|e| invalid(what, e))?;
    sc.validate().map_err(|e| invalid(what, e))?;
    Ok(sc)
}

fn apply_override(file: &mut ScenarioFile, kv: &str) -> Result<(), Failure> {
    let (axis, value) = kv
        .split_once('=')
        .ok_or_else(|| Failure::Invalid(format!("--set expects AXIS=VALUE, got `{kv}`")))?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| Failure::Invalid(format!("--set {axis}: `{value}` is not a number")))?;
    file.set_param(axis.trim(), value).map_err(|e| invalid("--set", e))
}

/// Writes `bytes` via a temporary sibling so a failed run leaves nothing.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if path == Path::new("-") {
        return match io::stdout().lock().write_all(bytes) {
            Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(runtime("stdout", e)),
            _ => Ok(()),
        };
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| runtime(&dir.display().to_string(), e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let res = fs::write(&tmp, bytes).and_then(|()| fs::rename(&tmp, path));
    if let Err(e) = res {
        let _ = fs::remove_file(&tmp);
        return Err(runtime(&path.display().to_string(), e));
    }
    Ok(())
}

fn output_path(out: &OutputArgs, stem: &str) -> PathBuf {
    out.out
        .clone()
        .unwrap_or_else(|| out.out_dir.join(format!("{stem}.{}", out.format.ext())))
}

fn summary_line(r: &MetricsReport) -> String {
    let moved = per_task_data_movement(r);
    let hit = hit_ratio(r).map_or("n/a".to_owned(), |h| format!("{h:.4}"));
    match moved {
        Some(m) => format!(
            "{}: {}/{} tasks, makespan {:.2}s, hit ratio {hit}, MB/task persistent {:.4} peer {:.4} local {:.4}",
            r.scenario, r.tasks_completed, r.tasks_total, r.makespan, m.persistent_mb, m.peer_mb, m.local_mb
        ),
        None => format!("{}: no tasks completed", r.scenario),
    }
}

fn decisions_csv(log: &[LogRecord]) -> String {
    let mut s = String::from("time,task,executor,policy,score,hints,index_lookups\n");
    for rec in log {
        if let LogRecord::Dispatch {
            time,
            task,
            executor,
            policy,
            score,
            hints,
            index_lookups,
        } = rec
        {
            s.push_str(&format!(
                "{time},{},{},{},{score},{hints},{index_lookups}\n",
                task.0,
                executor.0,
                policy.as_str()
            ));
        }
    }
    s
}

fn events_jsonl(log: &[LogRecord]) -> Result<String, Failure> {
    let mut s = String::new();
    for rec in log {
        s.push_str(&serde_json::to_string(rec).map_err(|e| runtime("event log", e))?);
        s.push('\n');
    }
    Ok(s)
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let (mut file, base) = load(&a.scenario)?;
    if let Some(seed) = a.seed {
        file.seed = seed;
    }
    for kv in &a.overrides {
        apply_override(&mut file, kv)?;
    }
    let mut sc = build(&file, &base, &a.scenario)?;
    sc.record_decision_wall_time = a.decision_timing;
    let (report, log) = if a.events.is_some() || a.decisions.is_some() {
        run_with_log(&sc).map_err(|e| runtime(&a.scenario, e))?
    } else {
        (diffuse_core::run(&sc).map_err(|e| runtime(&a.scenario, e))?, Vec::new())
    };
    let text = export(&report, a.output.format.into()).map_err(|e| runtime("report", e))?;
    let path = output_path(&a.output, &report.scenario);
    write_atomic(&path, text.as_bytes())?;
    if let Some(p) = &a.events {
        write_atomic(p, events_jsonl(&log)?.as_bytes())?;
    }
    if let Some(p) = &a.decisions {
        write_atomic(p, decisions_csv(&log).as_bytes())?;
    }
    let dest = if path == Path::new("-") { "stdout".to_owned() } else { path.display().to_string() };
    eprintln!("{} -> {dest}", summary_line(&report));
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    if !SWEEP_AXES.contains(&a.axis.as_str()) {
        return Err(Failure::Invalid(format!(
            "unknown sweep axis `{}` (known: {})",
            a.axis,
            SWEEP_AXES.join(", ")
        )));
    }
    let (template, base) = load(&a.template)?;
    let mut values = a.values.clone();
    values.sort_by(f64::total_cmp);
    values.dedup();

    // build everything first so bad values fail before any run starts
    let mut scenarios = Vec::new();
    for &v in &values {
        let mut file = template.clone();
        file.set_param(&a.axis, v).map_err(|e| invalid(&format!("{}={v}", a.axis), e))?;
        file.name = format!("{}[{}={v}]", template.name, a.axis);
        scenarios.push(build(&file, &base, &file.name)?);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.unwrap_or(0))
        .build()
        .map_err(|e| runtime("thread pool", e))?;
    let results: Vec<Result<MetricsReport, Error>> =
        pool.install(|| scenarios.par_iter().map(diffuse_core::run).collect());

    let out = output_path(&a.output, &format!("{}-{}-sweep", template.name, a.axis));
    let mut rows = Vec::new();
    let mut first_error = None;
    for (sc, r) in scenarios.iter().zip(results) {
        match r {
            Ok(report) => {
                if let Some(dir) = &a.reports {
                    let text = export(&report, a.output.format.into()).map_err(|e| runtime("report", e))?;
                    write_atomic(&dir.join(format!("{}.{}", report.scenario, a.output.format.ext())), text.as_bytes())?;
                }
                eprintln!("{}", summary_line(&report));
                rows.push(report);
            }
            Err(e) => {
                first_error.get_or_insert_with(|| runtime(&sc.name, e));
            }
        }
    }
    let body = combined(&rows, a.output.format)?;
    if let Some(err) = first_error {
        // keep finished rows, under a name that cannot be mistaken for a result
        if out != Path::new("-") {
            let mut partial = out.as_os_str().to_owned();
            partial.push(".partial");
            write_atomic(Path::new(&partial), &body)?;
            eprintln!("sweep aborted; {} completed rows in {}", rows.len(), Path::new(&partial).display());
        }
        return Err(err);
    }
    write_atomic(&out, &body)?;
    if out != Path::new("-") {
        eprintln!("{} rows -> {}", rows.len(), out.display());
    }
    Ok(())
}

fn combined(rows: &[MetricsReport], format: Format) -> Result<Vec<u8>, Failure> {
    match format {
        Format::Csv => {
            let summaries: Vec<ReportSummary> = rows.iter().map(MetricsReport::summary).collect();
            let mut buf = Vec::new();
            ReportSummary::write_csv(&summaries, &mut buf).map_err(|e| runtime("csv", e))?;
            Ok(buf)
        }
        Format::Json => serde_json::to_vec_pretty(rows).map_err(|e| runtime("json", e)),
    }
}

fn cmd_presets(name: Option<String>) -> Result<(), Failure> {
    let text = match name {
        None => preset_names().map(|n| format!("{n}\n")).collect::<String>(),
        Some(name) => PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| (*t).to_owned())
            .ok_or_else(|| Failure::Invalid(format!("unknown preset `{name}`")))?,
    };
    write_atomic(Path::new("-"), text.as_bytes())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cmd_microbench(a: MicrobenchArgs) -> Result<(), Failure> {
    if a.entries == 0 || a.readers == 0 {
        return Err(Failure::Invalid("entries and readers must be at least 1".into()));
    }
    if !(a.prls_target > 0.0 && a.prls_target.is_finite()) {
        return Err(Failure::Invalid("--prls-target must be positive".into()));
    }
    let report: MicrobenchReport = if a.readers > 1 {
        index_microbench_concurrent(a.entries, a.lookups, a.readers, a.inserts)
    } else {
        index_microbench(a.entries, a.lookups, a.inserts)
    };
    let prls = PrlsModel::default();
    let crossover = prls.crossover(a.prls_target).map_err(|e| invalid("prls", e))?;
    let measured_crossover = report.lookups_per_sec.map(|l| prls.crossover(l)).transpose().map_err(|e| runtime("prls", e))?;
    let text = match a.format {
        Format::Json => {
            let v = serde_json::json!({
                "microbench": report,
                "prls": {
                    "target_lookups_per_sec": a.prls_target,
                    "crossover_nodes": crossover,
                    "crossover_nodes_for_measured": measured_crossover,
                    "latency_ms_at_1m_nodes": prls.latency_ms(1_000_000).map_err(|e| runtime("prls", e))?,
                },
            });
            let mut s = serde_json::to_string_pretty(&v).map_err(|e| runtime("json", e))?;
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut cols: Vec<&str> = MicrobenchReport::CSV_HEADER.to_vec();
            cols.extend(["prls_target", "prls_crossover_nodes", "prls_crossover_nodes_for_measured"]);
            format!(
                "{}\n{},{},{},{},{},{},{},{},{},{},{}\n",
                cols.join(","),
                report.entries,
                report.inserts,
                report.lookups,
                report.readers,
                opt(report.insert_ns_mean),
                opt(report.lookup_ns_mean),
                opt(report.lookups_per_sec),
                report.bytes_per_entry,
                a.prls_target,
                crossover,
                measured_crossover.map(|c| c.to_string()).unwrap_or_default()
            )
        }
    };
    write_atomic(a.out.as_deref().unwrap_or(Path::new("-")), text.as_bytes())?;
    eprintln!("P-RLS needs {crossover} nodes to reach {:.3e} lookups/s", a.prls_target);
    Ok(())
}

fn cmd_validate(specs: &[String]) -> Result<(), Failure> {
    let mut bad = 0;
    for spec in specs {
        match load(spec).and_then(|(file, base)| build(&file, &base, spec)) {
            Ok(sc) => println!("ok {spec} ({}, {} tasks)", sc.name, sc.workload.tasks().len()),
            Err(f) => {
                bad += 1;
                eprintln!("error: {}", f.message());
            }
        }
    }
    if bad > 0 {
        Err(Failure::Invalid(format!("{bad} of {} scenarios invalid", specs.len())))
    } else {
        Ok(())
    }
}
