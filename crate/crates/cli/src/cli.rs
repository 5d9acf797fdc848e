use std::io::Write;
use std::path::{Path, PathBuf};

use bloomsim::kmer::Sabotage;
use clap::{Args, Parser, Subcommand};

use crate::config::{
    parse_fail, parse_join, parse_partition, parse_sabotage, parse_seeds, RunConfig, Workload,
};
use crate::run::{execute, RunError};
use crate::verify::verify;

#[derive(Debug, Parser)]
#[command(
    name = "bloomsim",
    version,
    about = "Run lattice workloads on a simulated cluster"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one workload to quiescence and compare it with its oracle.
    Run(RunArgs),
    /// Run one workload under several seeds and check they all agree.
    Verify {
        /// Seeds as a comma list with inclusive ranges, e.g. `1-25` or `3,5,9`.
        #[arg(long, value_parser = |s: &str| parse_seeds(s).map(SeedList))]
        seeds: SeedList,
        /// Seeds simulated at once.
        #[arg(long, default_value_t = 4)]
        jobs: usize,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// File of `key=value` lines; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = |s: &str| s.parse::<Workload>())]
    pub workload: Option<Workload>,
    /// Newline-separated DNA sequences.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(short = 'k', long = "k")]
    pub k: Option<usize>,
    #[arg(long)]
    pub threshold: Option<usize>,
    #[arg(long)]
    pub workers: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "dup-prob")]
    pub dup_prob: Option<f64>,
    #[arg(long = "reorder-window")]
    pub reorder_window: Option<u64>,
    #[arg(long = "drop-prob")]
    pub drop_prob: Option<f64>,
    /// `tick:worker`; repeatable.
    #[arg(long = "fail", value_parser = parse_fail)]
    pub fail: Vec<(u64, u32)>,
    /// `tick:a-b,c-d`, or `tick:` to heal; repeatable.
    #[arg(long = "partition", value_parser = parse_partition)]
    pub partition: Vec<(u64, Vec<(u32, u32)>)>,
    /// Tick at which a new worker registers; repeatable.
    #[arg(long = "join", value_parser = parse_join)]
    pub join: Vec<u64>,
    /// Write the event log here.
    #[arg(long = "emit-events")]
    pub emit_events: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// k-mers each worker reads per tick.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long = "tick-cap")]
    pub tick_cap: Option<u64>,
    /// Write the histogram after every tick, one JSON object per line.
    #[arg(long)]
    pub partials: Option<PathBuf>,
    #[arg(long, hide = true, value_parser = parse_sabotage)]
    pub sabotage: Option<Sabotage>,
}

impl RunArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig, RunError> {
        let mut c = RunConfig::default();
        if let Some(path) = &self.config {
            c.apply_file(path)?;
        }
        macro_rules! set {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { c.$target = v; })*
            };
        }
        set!(
            workload => workload,
            k => k,
            threshold => threshold,
            workers => workers,
            seed => seed,
            dup_prob => duplicate_prob,
            reorder_window => reorder_window,
            drop_prob => drop_prob,
            eps => eps,
            delta => delta,
            batch => batch,
            tick_cap => tick_cap,
        );
        if let Some(p) = &self.input {
            c.input = Some(p.clone());
        }
        if self.sabotage.is_some() {
            c.sabotage = self.sabotage;
        }
        if !self.fail.is_empty() {
            c.failure_events = self.fail.clone();
        }
        if !self.partition.is_empty() {
            c.partition_events = self.partition.clone();
        }
        if !self.join.is_empty() {
            c.join_events = self.join.clone();
        }
        Ok(c)
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text)
        .map_err(|e| RunError::Failed(format!("cannot write {}: {e}", path.display())))
}

fn run_cmd(args: &RunArgs, out: &mut dyn Write) -> Result<i32, RunError> {
    let cfg = args.resolve()?;
    let exec = execute(&cfg, args.partials.is_some())?;
    if let Some(path) = &args.emit_events {
        write_file(path, &exec.log.render())?;
    }
    if let Some(path) = &args.partials {
        write_file(path, &exec.partials_text())?;
    }
    match &args.report {
        Some(path) => {
            write_file(path, &exec.report_text())?;
            let _ = writeln!(out, "match={}", exec.matched);
        }
        None => {
            let _ = out.write_all(exec.report_text().as_bytes());
        }
    }
    Ok(exec.exit_code())
}

fn verify_cmd(
    run: &RunArgs,
    seeds: &[u64],
    jobs: usize,
    out: &mut dyn Write,
) -> Result<i32, RunError> {
    let cfg = run.resolve()?;
    let summary = verify(&cfg, seeds, jobs)?;
    let mut text = serde_json::to_string_pretty(&summary.to_json(&cfg)).expect("plain JSON");
    text.push('\n');
    match &run.report {
        Some(path) => write_file(path, &text)?,
        None => {
            let _ = out.write_all(text.as_bytes());
        }
    }
    Ok(summary.exit_code())
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                return 2;
            }
            let _ = out.write_all(text.as_bytes());
            return 0;
        }
    };
    let result = match &cli.command {
        Command::Run(args) => run_cmd(args, out),
        Command::Verify { seeds, jobs, run } => verify_cmd(run, &seeds.0, *jobs, out),
    };
    match result {
        Ok(code) => {
            if code == 1 {
                let _ = writeln!(err, "result does not match the oracle");
            }
            code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
