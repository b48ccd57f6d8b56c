//! `duetbench` command line.
//!
//! Exit codes: 0 pass, 1 regression, 3 inconclusive, 2 on any error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use duetbench::harness::{self, ComparisonRow, ReportFormat, ERROR_EXIT_CODE};
use duetbench::strategies::PairingRule;
use duetbench::{Backend, ClockMode, ExperimentConfig, Report, Strategy, WorkloadKind};

#[derive(Parser, Debug)]
#[command(name = "duetbench", version, about = "Paired performance-change detection for cloud functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured strategies and report a verdict.
    Run(ExperimentArgs),
    /// Run several strategies on identical workloads and tabulate CI widths.
    /// Uses all three strategies unless `--strategies` is given.
    Compare(ExperimentArgs),
    /// Like `compare`, and also writes sweep.csv with CI width per sample size.
    Sweep(ExperimentArgs),
    /// Re-analyze a raw.csv written by an earlier run.
    Analyze {
        /// Raw measurement file.
        raw: PathBuf,
        #[command(flatten)]
        args: ExperimentArgs,
    },
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Comma-separated: independent, rmit, duet.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
    /// live or simulated.
    #[arg(long)]
    backend: Option<Backend>,
    #[arg(long)]
    repetitions: Option<u32>,
    #[arg(long)]
    instances: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// cpu-mutation or mem-sieve.
    #[arg(long)]
    workload: Option<WorkloadKind>,
    #[arg(long)]
    scale: Option<u64>,
    /// Extra work injected into version B, in percent.
    #[arg(long, allow_hyphen_values = true)]
    regression_pct: Option<f64>,
    #[arg(long)]
    ci_level: Option<f64>,
    #[arg(long)]
    resamples: Option<usize>,
    #[arg(long)]
    threshold_pct: Option<f64>,
    /// Also compute the sample-size sweep.
    #[arg(long)]
    sweep_enabled: bool,
    #[arg(long)]
    sweep_from: Option<usize>,
    #[arg(long)]
    sweep_to: Option<usize>,
    #[arg(long)]
    sweep_step: Option<usize>,
    /// Force cpu-time or wall-clock for every strategy.
    #[arg(long)]
    clock: Option<ClockMode>,
    /// index-order or shuffled (independent strategy only).
    #[arg(long)]
    pairing: Option<PairingRule>,
    /// Live backend: fall back to unpinned threads if affinity is refused.
    #[arg(long)]
    allow_unpinned: bool,
    #[arg(long, short)]
    output_dir: Option<PathBuf>,
    /// Summary format: json or csv.
    #[arg(long, default_value = "json")]
    format: ReportFormat,
    /// Do not print the summary table.
    #[arg(long, short)]
    quiet: bool,

    #[arg(long)]
    instance_quality_cv: Option<f64>,
    #[arg(long)]
    temporal_sigma: Option<f64>,
    #[arg(long)]
    cold_penalty_ms: Option<f64>,
    #[arg(long)]
    base_cost_ns_per_unit: Option<f64>,
    #[arg(long)]
    drift_period_s: Option<f64>,
    #[arg(long)]
    drift_amplitude: Option<f64>,
    #[arg(long)]
    duet_jitter_cv: Option<f64>,
    #[arg(long)]
    time_step_ms: Option<f64>,
    #[arg(long)]
    warm_pool: Option<u32>,
}

macro_rules! apply {
    ($target:expr, $($field:ident <- $value:expr),+ $(,)?) => {
        $(if let Some(v) = $value { $target.$field = v; })+
    };
}

impl ExperimentArgs {
    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        apply!(cfg,
            strategies <- self.strategies.clone(),
            backend <- self.backend,
            repetitions <- self.repetitions,
            instances <- self.instances,
            seed <- self.seed,
            workload <- self.workload,
            scale <- self.scale,
            regression_pct <- self.regression_pct,
            ci_level <- self.ci_level,
            resamples <- self.resamples,
            threshold_pct <- self.threshold_pct,
            pairing <- self.pairing,
            output_dir <- self.output_dir.clone(),
        );
        apply!(cfg.sweep,
            from <- self.sweep_from,
            to <- self.sweep_to,
            step <- self.sweep_step,
        );
        apply!(cfg.model,
            instance_quality_cv <- self.instance_quality_cv,
            temporal_sigma <- self.temporal_sigma,
            cold_penalty_ms <- self.cold_penalty_ms,
            base_cost_ns_per_unit <- self.base_cost_ns_per_unit,
            drift_period_s <- self.drift_period_s,
            drift_amplitude <- self.drift_amplitude,
            duet_jitter_cv <- self.duet_jitter_cv,
            time_step_ms <- self.time_step_ms,
            warm_pool <- self.warm_pool,
        );
        if self.clock.is_some() {
            cfg.clock = self.clock;
        }
        cfg.sweep_enabled |= self.sweep_enabled;
        cfg.allow_unpinned |= self.allow_unpinned;
        Ok(cfg)
    }
}

fn print_summary(report: &Report) {
    println!(
        "{:<12} {:<11} {:>10} {:>22} {:>9}  verdict",
        "strategy", "clock", "median %", "CI %", "width pp"
    );
    for s in &report.strategies {
        println!(
            "{:<12} {:<11} {:>10.4} {:>22} {:>9.4}  {:?}",
            s.strategy.as_str(),
            s.clock_mode.as_str(),
            s.median_change_pct,
            format!("[{:.4}, {:.4}]", s.ci.lower_pct, s.ci.upper_pct),
            s.ci.width_pp,
            s.verdict,
        );
    }
    println!("overall: {:?}", report.verdict);
}

fn print_comparison(rows: &[ComparisonRow]) {
    println!("{:<12} {:>10} {:>10}", "strategy", "width pp", "median %");
    for row in rows {
        println!("{:<12} {:>10.4} {:>10.4}", row.strategy.as_str(), row.width_pp, row.median_change_pct);
    }
}

fn execute(command: Command) -> anyhow::Result<i32> {
    let (report, rows, args) = match command {
        Command::Run(args) => {
            let cfg = args.config()?;
            (harness::run_experiment(&cfg)?, None, args)
        }
        Command::Compare(args) => return execute_compare(args, false),
        Command::Sweep(args) => return execute_compare(args, true),
        Command::Analyze { raw, args } => {
            let cfg = args.config()?;
            let measurements = harness::read_raw_csv(&raw)?;
            (harness::analyze_measurements(&cfg, measurements)?, None, args)
        }
    };
    finish(&report, rows, &args)
}

fn execute_compare(mut args: ExperimentArgs, sweep: bool) -> anyhow::Result<i32> {
    args.strategies.get_or_insert_with(|| Strategy::ALL.to_vec());
    let mut cfg = args.config()?;
    cfg.sweep_enabled |= sweep;
    let (report, rows) = harness::compare_strategies(&cfg)?;
    finish(&report, Some(rows), &args)
}

fn finish(report: &Report, rows: Option<Vec<ComparisonRow>>, args: &ExperimentArgs) -> anyhow::Result<i32> {
    let dir = &report.config.output_dir;
    let written = harness::emit_report(report, dir, args.format)
        .with_context(|| format!("writing report to {}", dir.display()))?;
    if !args.quiet {
        print_summary(report);
        if let Some(rows) = rows {
            println!();
            print_comparison(&rows);
        }
        for path in written {
            println!("wrote {}", path.display());
        }
    }
    Ok(report.verdict.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            let chain: Vec<String> = err.chain().map(|e| e.to_string()).collect();
            let body = serde_json::json!({
                "error": chain.first().cloned().unwrap_or_default(),
                "causes": &chain[1.min(chain.len())..],
                "exit_code": ERROR_EXIT_CODE,
            });
            eprintln!("{body}");
            ExitCode::from(ERROR_EXIT_CODE as u8)
        }
    }
}
