//! Command-line front end.
//!
//! One subcommand per pipeline stage. All randomness flows from `--seed`,
//! tunables come from the `--config` key-value file (with `JOINTDIFF_*`
//! environment overrides) and every artifact-producing run appends a
//! manifest line to `<out>/manifest.jsonl`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::allocator::{compare_schedules, optimize, read_schedule_pair, AllocationProblem, ScheduleComparison};
use crate::archive::{sha256_hex, DrawArchive, ARCHIVE_FILE};
use crate::config::{self, Config};
use crate::diagnostics::{
    convergence_report, fit_variant, forecast_from_archive, variant_panel, VariantSpec, MIN_SINGLE_CHAIN_DRAWS,
};
use crate::endogeneity::{liv_fit_effort, liv_fit_releases, write_effort_table, write_release_table};
use crate::error::{Error, Result};
use crate::manifest::{hash_tree, RunManifest};
use crate::panel::{ObservationPanel, TransformSet};
use crate::preprocess::{assemble_panel, read_raw_inputs};
use crate::report;
use crate::sampler::run_chain;
use crate::simulate::simulate_panel;

pub const PANEL_FILE: &str = "panel.json";
pub const TRANSFORMS_FILE: &str = "transforms.json";
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Parser)]
#[command(name = "jointdiff", version, about = "Joint platform and complement diffusion toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Key-value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed of every random stream in the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a standardized panel from raw CSV inputs.
    Ingest {
        #[arg(long)]
        platform: PathBuf,
        #[arg(long)]
        complements: PathBuf,
        #[arg(long)]
        metadata: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a panel from the configured truth.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the sampler on a panel.
    Fit {
        #[arg(long)]
        panel: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// One-step-ahead forecasts at the posterior mean of a fit.
    Forecast {
        /// Directory holding a fitted archive.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        panel: PathBuf,
        /// Only use data up to this day.
        #[arg(long)]
        truncate: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit model variants and tabulate DIC.
    Compare {
        #[arg(long)]
        panel: PathBuf,
        /// Comma-separated variant names or 1-based catalogue rows; `all` for every row.
        #[arg(long, value_delimiter = ',', required = true)]
        variants: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Reallocate the effort budget with the genetic algorithm, or compare
    /// two given schedules.
    Optimize {
        #[arg(long, required_unless_present = "schedules")]
        run: Option<PathBuf>,
        #[arg(long, required_unless_present = "schedules")]
        panel: Option<PathBuf>,
        /// Transform records of the panel (default: next to the panel).
        #[arg(long)]
        transforms: Option<PathBuf>,
        /// Total budget (default: observed total).
        #[arg(long)]
        budget: Option<f64>,
        /// CSV with `actual` and `model_based` columns to compare instead of optimizing.
        #[arg(long, conflicts_with = "run")]
        schedules: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Latent-instrumental-variable endogeneity test.
    Endogeneity {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        panel: PathBuf,
        #[arg(long, value_enum, default_value_t = Target::Effort)]
        target: Target,
        #[command(flatten)]
        common: Common,
    },
    /// Posterior summary tables and plot series from a fit.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// Panel used for forecast series (optional).
        #[arg(long)]
        panel: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Target {
    Effort,
    Releases,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Simulate { .. } => "simulate",
            Command::Fit { .. } => "fit",
            Command::Forecast { .. } => "forecast",
            Command::Compare { .. } => "compare",
            Command::Optimize { .. } => "optimize",
            Command::Endogeneity { .. } => "endogeneity",
            Command::Report { .. } => "report",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Ingest { common, .. }
            | Command::Simulate { common }
            | Command::Fit { common, .. }
            | Command::Forecast { common, .. }
            | Command::Compare { common, .. }
            | Command::Optimize { common, .. }
            | Command::Endogeneity { common, .. }
            | Command::Report { common, .. } => common,
        }
    }
}

/// Parse `argv` and run; returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}

struct Run<'a> {
    command: &'static str,
    common: &'a Common,
    config: Config,
    out: PathBuf,
    inputs: BTreeMap<String, String>,
    started: String,
}

impl<'a> Run<'a> {
    fn new(command: &'static str, common: &'a Common) -> Result<Self> {
        let mut config = match &common.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        config.apply_env(std::env::vars());
        config::validate_all(&config, common.seed)?;
        let out = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let mut inputs = BTreeMap::new();
        if let Some(p) = &common.config {
            inputs.extend(hash_tree(p)?);
        }
        Ok(Self { command, common, config, out, inputs, started: chrono::Utc::now().to_rfc3339() })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
            ));
        }
        for (k, v) in hash_tree(path)? {
            let key = if path.is_dir() { path.join(k).display().to_string() } else { k };
            self.inputs.insert(key, v);
        }
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.common.seed
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn finish(self) -> Result<()> {
        RunManifest {
            subcommand: self.command.into(),
            config_hash: sha256_hex(self.config.canonical().as_bytes()),
            inputs: self.inputs,
            seed: self.common.seed,
            version: env!("CARGO_PKG_VERSION").into(),
            started: self.started,
            finished: chrono::Utc::now().to_rfc3339(),
            outputs: hash_tree(&self.out)?,
        }
        .append(&self.out)
    }
}

fn load_panel(run: &mut Run, path: &Path) -> Result<ObservationPanel> {
    run.input(path)?;
    ObservationPanel::load(path)
}

fn load_archive(run: &mut Run, dir: &Path) -> Result<DrawArchive> {
    if !dir.join(ARCHIVE_FILE).exists() {
        return Err(Error::MissingArchive(dir.into()));
    }
    run.input(dir)?;
    DrawArchive::load(dir)
}

fn execute(cmd: &Command) -> Result<()> {
    let common = cmd.common();
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut run = Run::new(cmd.name(), common)?;
    match cmd {
        Command::Ingest { platform, complements, metadata, .. } => {
            for p in [platform, complements, metadata] {
                run.input(p)?;
            }
            let pre = config::preprocess_config(&run.config)?;
            let raw = read_raw_inputs(platform, complements, metadata)?;
            let assembled = assemble_panel(&raw, &pre)?;
            assembled.panel.save(&run.path(PANEL_FILE))?;
            assembled.transforms.save(&run.path(TRANSFORMS_FILE))?;
            let mut w = csv::Writer::from_path(run.path("warnings.csv"))?;
            w.write_record(["complement", "day", "message"])?;
            for warn in &assembled.warnings {
                w.write_record([warn.complement.clone(), warn.day.to_string(), warn.message.clone()])?;
            }
            w.flush().map_err(|e| Error::io(run.path("warnings.csv"), e))?;
        }
        Command::Simulate { .. } => {
            let sim_cfg = config::simulation_config(&run.config, run.seed())?;
            let sim = simulate_panel(&sim_cfg)?;
            sim.panel.save(&run.path(PANEL_FILE))?;
            sim.transforms.save(&run.path(TRANSFORMS_FILE))?;
            sim.truth.save(&run.path(TRUTH_FILE))?;
        }
        Command::Fit { panel, .. } => {
            let panel = load_panel(&mut run, panel)?;
            let mcmc = config::mcmc_config(&run.config, run.seed())?;
            let priors = config::prior_config(&run.config)?;
            let model = config::model_config(&run.config)?;
            let panel = variant_panel(&panel, &model)?;
            let archive = run_chain(&panel, &priors, &mcmc, &model)?;
            archive.save(&run.out)?;
        }
        Command::Forecast { run: dir, panel, truncate, .. } => {
            let archive = load_archive(&mut run, dir)?;
            let mut panel = variant_panel(&load_panel(&mut run, panel)?, &archive.header.model)?;
            if let Some(day) = truncate {
                panel = panel.truncate(*day);
            }
            let series = forecast_from_archive(&archive, &panel)?;
            report::write_forecast_series(&run.path("forecast_series.csv"), &series)?;
            report::write_forecast_metrics(&run.path("forecast_metrics.csv"), &series)?;
        }
        Command::Compare { panel, variants, .. } => {
            let panel = load_panel(&mut run, panel)?;
            let mcmc = config::mcmc_config(&run.config, run.seed())?;
            let priors = config::prior_config(&run.config)?;
            let specs: Vec<VariantSpec> = if variants.iter().any(|v| v == "all") {
                VariantSpec::catalogue()
            } else {
                variants.iter().map(|v| VariantSpec::named(v)).collect::<Result<_>>()?
            };
            let mut rows = Vec::with_capacity(specs.len());
            for spec in &specs {
                let (_, d) = fit_variant(&panel, spec, &priors, &mcmc)?;
                rows.push((spec.name.clone(), d));
            }
            report::write_variant_table(&run.path("variants.csv"), &rows)?;
        }
        Command::Optimize { run: dir, panel, transforms, budget, schedules, .. } => {
            let (ga, granularity) = config::ga_config(&run.config, run.seed())?;
            if let Some(path) = schedules {
                run.input(path)?;
                let (a, b) = read_schedule_pair(path)?;
                let cmp = compare_schedules(&a, &b, None)?;
                write_schedule_outputs(&run, &cmp)?;
            } else {
                let (dir, panel_path) = (dir.as_ref().unwrap(), panel.as_ref().unwrap());
                let archive = load_archive(&mut run, dir)?;
                let panel = load_panel(&mut run, panel_path)?;
                let tpath = transforms.clone().unwrap_or_else(|| panel_path.with_file_name(TRANSFORMS_FILE));
                run.input(&tpath)?;
                let tset = TransformSet::load(&tpath)?;
                let transform = tset
                    .get("platform.effort")
                    .cloned()
                    .ok_or_else(|| Error::MissingColumn(format!("platform.effort in {}", tpath.display())))?;
                let (params, _) = archive.posterior_mean()?;
                let problem =
                    AllocationProblem::new(&panel, &params, archive.header.platform_init, transform, granularity)?;
                let observed = problem.observed();
                let result = optimize(&problem, budget.unwrap_or(observed.budget), &ga)?;
                let cmp = compare_schedules(&observed.effort, &result.best.effort, Some(&problem))?;
                write_schedule_outputs(&run, &cmp)?;
                let mut w = csv::Writer::from_path(run.path("ga_history.csv"))?;
                w.write_record(["generation", "best_objective"])?;
                for (g, v) in result.history.iter().enumerate() {
                    w.write_record([g.to_string(), format!("{v:.10e}")])?;
                }
                w.flush().map_err(|e| Error::io(run.path("ga_history.csv"), e))?;
            }
        }
        Command::Endogeneity { run: dir, panel, target, .. } => {
            let archive = load_archive(&mut run, dir)?;
            let panel = load_panel(&mut run, panel)?;
            let liv = config::liv_config(&run.config, run.seed())?;
            let (platform, complements) = archive.posterior_mean()?;
            match target {
                Target::Effort => {
                    let r = liv_fit_effort(&panel, platform.m0, platform.kappa, &liv)?;
                    let label = format!("{:?}", liv.model).to_lowercase();
                    write_effort_table(&run.path("endogeneity_effort.csv"), &[(label, r)])?;
                }
                Target::Releases => {
                    let path = platform_path_plugin(&archive, &panel);
                    let rows = liv_fit_releases(&panel, &complements, &path, &liv)?;
                    write_release_table(&run.path("endogeneity_releases.csv"), &rows)?;
                }
            }
        }
        Command::Report { run: dir, panel, .. } => {
            let archive = load_archive(&mut run, dir)?;
            let rows = report::summary_rows(&archive)?;
            report::write_summary_csv(&run.path("summary_platform.csv"), &rows, report::Block::Platform)?;
            report::write_summary_csv(&run.path("summary_hierarchy.csv"), &rows, report::Block::Hierarchy)?;
            report::write_summary_csv(&run.path("summary_complements.csv"), &rows, report::Block::Complement)?;
            let text = report::render_summary(&rows);
            std::fs::write(run.path("summary.txt"), &text).map_err(|e| Error::io(run.path("summary.txt"), e))?;
            print!("{text}");
            report::write_traces(&run.path("traces.csv"), &archive)?;
            if archive.draws.len() >= MIN_SINGLE_CHAIN_DRAWS {
                let conv = convergence_report(std::slice::from_ref(&archive))?;
                let mut w = csv::Writer::from_path(run.path("convergence.csv"))?;
                w.write_record(["parameter", "mean", "sd", "rhat", "ess"])?;
                for p in &conv.parameters {
                    w.write_record([
                        p.name.clone(),
                        format!("{:.6e}", p.mean),
                        format!("{:.6e}", p.sd),
                        format!("{:.4}", p.rhat),
                        format!("{:.1}", p.ess),
                    ])?;
                }
                w.flush().map_err(|e| Error::io(run.path("convergence.csv"), e))?;
            }
            if let Some(p) = panel {
                let panel = variant_panel(&load_panel(&mut run, p)?, &archive.header.model)?;
                let launches: Vec<usize> = panel.complements.iter().map(|c| c.launch).collect();
                report::write_path_series(&run.path("path_series.csv"), &archive, &launches)?;
                let series = forecast_from_archive(&archive, &panel)?;
                report::write_forecast_series(&run.path("forecast_series.csv"), &series)?;
                report::write_forecast_metrics(&run.path("forecast_metrics.csv"), &series)?;
            }
        }
    }
    run.finish()
}

fn write_schedule_outputs(run: &Run, cmp: &ScheduleComparison) -> Result<()> {
    crate::allocator::write_comparison_csv(&run.path("schedule.csv"), cmp, ("actual", "model_based"))?;
    let mut w = csv::Writer::from_path(run.path("schedule_summary.csv"))?;
    w.write_record(["quantity", "actual", "model_based"])?;
    w.write_record(["sd".to_string(), format!("{:.4}", cmp.sd_a), format!("{:.4}", cmp.sd_b)])?;
    if let (Some(a), Some(b)) = (cmp.objective_a, cmp.objective_b) {
        w.write_record(["objective".to_string(), format!("{a:.10e}"), format!("{b:.10e}")])?;
    }
    w.flush().map_err(|e| Error::io(run.path("schedule_summary.csv"), e))
}

/// Platform level per day: the posterior mean of the stored paths, or the
/// forward-filled observations when the archive kept none.
fn platform_path_plugin(archive: &DrawArchive, panel: &ObservationPanel) -> Vec<f64> {
    let stored: Vec<&Vec<f64>> = archive.draws.iter().filter_map(|d| d.platform_path.as_ref()).collect();
    if let Some(first) = stored.first() {
        let n = stored.len() as f64;
        return (0..first.len()).map(|i| stored.iter().map(|p| p[i]).sum::<f64>() / n).collect();
    }
    let mut last = panel.platform.observations.iter().flatten().next().copied().unwrap_or(0.0);
    panel
        .platform
        .observations
        .iter()
        .map(|y| {
            if let Some(y) = y {
                last = *y;
            }
            last
        })
        .collect()
}
