//! Command-line surface. Every subcommand writes its outputs plus a
//! `run_manifest.toml` into `--out`.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use lbmpc_core::l2nw_oracle::{fsc_check, DataSource, Dataset, Region};
use lbmpc_core::lpr_filter::TwoRateFilter;
use lbmpc_core::observability::pbh_necessary_test;
use lbmpc_core::system_sim::{discretize, simulate, DiscreteResidual};
use lbmpc_core::DVector;
use serde::Serialize;

use crate::config::Config;
use crate::experiments::{
    run_filter_convergence, run_oracle_convergence, run_rollout_deviation, ORACLE_FLOW_STEPS,
};
use crate::io::{self, Manifest};

#[derive(Debug, Parser)]
#[command(name = "lbmpc", version, about = "Two-rate filtering and oracle learning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// TOML experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct Runner {
    /// Master seed; required, there is no clock-based default.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `experiment.trials`.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Worker threads; does not affect results.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a trajectory with noisy two-rate samples.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Filter a measurement CSV into boundary estimates.
    Filter {
        #[command(flatten)]
        common: Common,
        /// Measurement CSV with `t, xi_1..xi_p` (and optionally `u_held`).
        #[arg(long)]
        input: PathBuf,
    },
    /// Build an oracle dataset and check its sample cover.
    Learn {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV from `simulate`.
        #[arg(long)]
        trajectory: PathBuf,
        /// Estimate CSV from `filter`; uses true states when absent.
        #[arg(long)]
        estimates: Option<PathBuf>,
        /// Cover radius; defaults to the first entry of `oracle.h_schedule`.
        #[arg(long)]
        h: Option<f64>,
    },
    /// PBH necessary condition for state plus constant-disturbance estimation.
    Pbh {
        #[command(flatten)]
        common: Common,
    },
    /// Filter error rate in `k`.
    ConvFilter {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        runner: Runner,
    },
    /// Oracle sup error over the bandwidth schedule.
    ConvOracle {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        runner: Runner,
    },
    /// Rollout deviation against the true model per oracle quality level.
    RolloutDev {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        runner: Runner,
    },
}

fn require_seed(seed: Option<u64>) -> Result<u64> {
    seed.context("--seed is required (runs are never seeded from the clock)")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct Run {
    out: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn new(command: &str, out: &Path, config_bytes: &[u8], seed: Option<u64>, trials: Option<usize>) -> Result<Self> {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self {
            out: out.to_path_buf(),
            manifest: Manifest::new(command, config_bytes, seed, trials),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn finish(self) -> Result<()> {
        self.manifest.write(&self.out)
    }
}

/// Runs a parsed command; returns text for stdout.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Simulate { common, seed } => cmd_simulate(&common, require_seed(seed)?),
        Command::Filter { common, input } => cmd_filter(&common, &input),
        Command::Learn {
            common,
            trajectory,
            estimates,
            h,
        } => cmd_learn(&common, &trajectory, estimates.as_deref(), h),
        Command::Pbh { common } => cmd_pbh(&common),
        Command::ConvFilter { common, runner } => cmd_conv_filter(&common, &runner),
        Command::ConvOracle { common, runner } => cmd_conv_oracle(&common, &runner),
        Command::RolloutDev { common, runner } => cmd_rollout_dev(&common, &runner),
    }
}

fn cmd_simulate(common: &Common, seed: u64) -> Result<String> {
    let (cfg, bytes) = Config::from_path(&common.config)?;
    let (model, x0) = cfg.model()?;
    let scheme = cfg.scheme_with_k(cfg.scheme.k)?;
    let bounds = cfg.noise_bounds(model.state_dim())?;
    let inputs = cfg.inputs(&model, cfg.scheme.windows)?;
    let traj = simulate(&model, &scheme, &x0, &inputs, &bounds, seed, cfg.scheme.substeps)?;
    let mut run = Run::new("simulate", &common.out, &bytes, Some(seed), None)?;
    io::write_trajectory(&traj, io::create(&run.path("trajectory.csv"))?)?;
    run.finish()?;
    let mut msg = format!("simulated {} samples over {} windows\n", traj.times.len(), traj.windows());
    if !bounds.is_zero_mean() {
        msg.push_str("warning: asymmetric noise bounds violate the zero-mean assumption\n");
    }
    Ok(msg)
}

fn cmd_filter(common: &Common, input: &Path) -> Result<String> {
    let (cfg, bytes) = Config::from_path(&common.config)?;
    let (model, _) = cfg.model()?;
    let scheme = cfg.scheme_with_k(cfg.scheme.k)?;
    let table = io::read_measurements(input)?;
    ensure!(
        table.xi[0].len() == model.state_dim(),
        "measurement CSV has {} components, model has {}",
        table.xi[0].len(),
        model.state_dim()
    );
    let n = table.windows(scheme.k(), scheme.t_s())?;
    let inputs = match table.window_inputs(scheme.k()) {
        Some(u) => u,
        None => cfg.inputs(&model, n)?,
    };
    let bounds = cfg.noise_bounds(model.state_dim())?;
    let kernel = cfg.filter_kernel()?;
    let settings = cfg.filter_settings()?;
    let mut filter = TwoRateFilter::new(
        scheme,
        model.a_c.clone(),
        model.b_c.clone(),
        bounds,
        &kernel,
        &settings,
        table.xi[0].clone(),
    )?;
    let k = scheme.k();
    for (m, u) in inputs.iter().enumerate().take(n) {
        filter
            .push_window(&table.xi[m * k..=m * k + k], u)
            .with_context(|| format!("window {m}"))?;
    }
    let mut run = Run::new("filter", &common.out, &bytes, None, None)?;
    filter.bank().write_csv(io::create(&run.path("bank.csv"))?)?;
    io::write_estimates(filter.ledger(), scheme.t_u(), io::create(&run.path("estimates.csv"))?)?;
    run.finish()?;
    Ok(format!("filtered {n} windows\n"))
}

#[derive(Serialize)]
struct LearnSummary {
    pairs: usize,
    source: String,
    h: f64,
    covered: bool,
    worst_gap: f64,
    probes: usize,
    max_output_norm: f64,
}

fn cmd_learn(common: &Common, trajectory: &Path, estimates: Option<&Path>, h: Option<f64>) -> Result<String> {
    let (cfg, bytes) = Config::from_path(&common.config)?;
    let (model, _) = cfg.model()?;
    let scheme = cfg.scheme_with_k(cfg.scheme.k)?;
    let table = io::read_measurements(trajectory)?;
    let n = table.windows(scheme.k(), scheme.t_s())?;
    let inputs = match table.window_inputs(scheme.k()) {
        Some(u) => u,
        None => cfg.inputs(&model, n)?,
    };
    let (a, b) = discretize(&model.a_c, &model.b_c, scheme.t_u())?;
    let (states, source, joint_box) = match estimates {
        Some(path) => {
            let est = io::read_estimates(path)?;
            ensure!(est.len() == n + 1, "estimate CSV has {} rows, expected {}", est.len(), n + 1);
            // the last estimate is one-sided, so its pair is dropped
            (est[..n].to_vec(), DataSource::Filtered, None)
        }
        None => {
            let x = table.x.as_ref().context("trajectory CSV has no x_ columns")?;
            let boundary: Vec<DVector<f64>> = (0..=n).map(|m| x[m * scheme.k()].clone()).collect();
            (boundary, DataSource::True, Some(model.joint_box()))
        }
    };
    let pairs = states.len() - 1;
    let data = Dataset::from_sequence(&states, &inputs[..pairs], &a, &b, source, joint_box)?;
    let h = match h {
        Some(h) => h,
        None => *cfg.oracle.h_schedule.first().context("oracle.h_schedule is empty")?,
    };
    let region = cfg.oracle_region(&model)?;
    let report = fsc_check(&data, &Region::Box(region), h, h / 4.0)?;
    let mut run = Run::new("learn", &common.out, &bytes, None, None)?;
    data.write_csv(io::create(&run.path("dataset.csv"))?)?;
    report.write_csv(io::create(&run.path("cover.csv"))?)?;
    let summary = LearnSummary {
        pairs: data.len(),
        source: source.as_str().into(),
        h,
        covered: report.covered,
        worst_gap: report.worst_gap,
        probes: report.probes.len(),
        max_output_norm: data.max_output_norm(),
    };
    io::write_toml(&run.path("learn_summary.toml"), &summary)?;
    run.finish()?;
    Ok(format!(
        "{} pairs; cover at h = {h}: {} (worst gap {})\n",
        data.len(),
        if report.covered { "verified" } else { "NOT covered" },
        report.worst_gap
    ))
}

fn cmd_pbh(common: &Common) -> Result<String> {
    let (cfg, bytes) = Config::from_path(&common.config)?;
    let (model, _) = cfg.model()?;
    let verdict = pbh_necessary_test(&model.a_c, &model.c)?;
    let text = verdict.to_structured_text();
    let mut run = Run::new("pbh", &common.out, &bytes, None, None)?;
    std::fs::write(run.path("pbh.txt"), &text)?;
    run.finish()?;
    Ok(text)
}

#[derive(Serialize)]
struct FilterSummary {
    order: usize,
    trials: usize,
    k_list: Vec<usize>,
    slope: Option<f64>,
    half_width: Option<f64>,
    intercept: Option<f64>,
    target: f64,
    flag: Option<String>,
    noise_warning: Option<String>,
    containment_violations: usize,
}

fn cmd_conv_filter(common: &Common, runner: &Runner) -> Result<String> {
    let seed = require_seed(runner.seed)?;
    let (cfg, bytes) = Config::from_path(&common.config)?;
    let trials = runner.trials.unwrap_or(cfg.experiment.trials);
    let res = run_filter_convergence(&cfg, seed, trials, runner.jobs)?;
    let mut run = Run::new("conv-filter", &common.out, &bytes, Some(seed), Some(trials))?;
    io::write_rows(
        io::create(&run.path("conv_filter_trials.csv"))?,
        &["k", "trial", "seed", "error", "containment_violations"],
        res.trials.iter().map(|t| {
            vec![
                t.k.to_string(),
                t.trial.to_string(),
                t.seed.to_string(),
                t.error.to_string(),
                t.containment_violations.to_string(),
            ]
        }),
    )?;
    io::write_rows(
        io::create(&run.path("conv_filter.csv"))?,
        &["k", "median_error", "min_error", "max_error"],
        res.per_k.iter().map(|s| {
            vec![
                s.k.to_string(),
                s.median_error.to_string(),
                s.min_error.to_string(),
                s.max_error.to_string(),
            ]
        }),
    )?;
    let summary = FilterSummary {
        order: res.order,
        trials,
        k_list: cfg.scheme.k_list.clone(),
        slope: res.fit.as_ref().map(|f| f.slope),
        half_width: res.fit.as_ref().map(|f| f.half_width),
        intercept: res.fit.as_ref().map(|f| f.intercept),
        target: crate::experiments::target_exponent(res.order),
        flag: res.flag.clone(),
        noise_warning: res.noise_warning.clone(),
        containment_violations: res.trials.iter().map(|t| t.containment_violations).sum(),
    };
    io::write_toml(&run.path("summary.toml"), &summary)?;
    run.finish()?;
    Ok(match (&res.fit, &res.flag) {
        (Some(f), _) => format!(
            "slope {:.4} ± {:.4} (target {:.4})\n",
            f.slope,
            f.half_width,
            summary.target
        ),
        (None, Some(flag)) => format!("FLAGGED: {flag}\n"),
        (None, None) => bail!("no fit and no flag"),
    })
}

#[derive(Serialize)]
struct OracleSummary {
    lipschitz: f64,
    m_g: f64,
    m_state: f64,
    flow_steps: usize,
    all_within_bound: bool,
    noiseless_slope: Option<f64>,
}

fn cmd_conv_oracle(common: &Common, runner: &Runner) -> Result<String> {
    let seed = require_seed(runner.seed)?;
    let (cfg, bytes) = Config::from_path(&common.config)?;
    let trials = runner.trials.unwrap_or(cfg.experiment.trials);
    let res = run_oracle_convergence(&cfg, seed, trials, runner.jobs)?;
    let mut run = Run::new("conv-oracle", &common.out, &bytes, Some(seed), Some(trials))?;
    io::write_rows(
        io::create(&run.path("oracle_noiseless.csv"))?,
        &["h", "lambda", "covered", "worst_gap", "probes", "sup_error", "bias_bound", "within_bound"],
        res.noiseless.iter().map(|l| {
            vec![
                l.h.to_string(),
                l.lambda.to_string(),
                l.covered.to_string(),
                l.worst_gap.to_string(),
                l.probes.to_string(),
                opt(l.sup_error),
                l.bias_bound.to_string(),
                l.within_bound.map(|b| b.to_string()).unwrap_or_default(),
            ]
        }),
    )?;
    io::write_rows(
        io::create(&run.path("oracle_filtered.csv"))?,
        &["h", "k", "trial", "seed", "sup_error"],
        res.filtered.iter().map(|r| {
            vec![
                r.h.to_string(),
                r.k.to_string(),
                r.trial.to_string(),
                r.seed.to_string(),
                r.sup_error.to_string(),
            ]
        }),
    )?;
    io::write_rows(
        io::create(&run.path("oracle_paired.csv"))?,
        &["h", "k_low", "k_high", "fraction"],
        res.paired.iter().map(|p| {
            vec![
                p.h.to_string(),
                p.k_low.to_string(),
                p.k_high.to_string(),
                p.fraction.to_string(),
            ]
        }),
    )?;
    let all_within = res.noiseless.iter().all(|l| l.within_bound != Some(false));
    let summary = OracleSummary {
        lipschitz: res.lipschitz,
        m_g: res.m_g,
        m_state: res.m_state,
        flow_steps: ORACLE_FLOW_STEPS,
        all_within_bound: all_within,
        noiseless_slope: res.noiseless_rate.as_ref().map(|f| f.slope),
    };
    io::write_toml(&run.path("summary.toml"), &summary)?;
    run.finish()?;
    let covered = res.noiseless.iter().filter(|l| l.covered).count();
    Ok(format!(
        "{covered}/{} bandwidths covered; bias bound {}\n",
        res.noiseless.len(),
        if all_within { "holds" } else { "VIOLATED" }
    ))
}

fn cmd_rollout_dev(common: &Common, runner: &Runner) -> Result<String> {
    let seed = require_seed(runner.seed)?;
    let (cfg, bytes) = Config::from_path(&common.config)?;
    let res = run_rollout_deviation(&cfg, seed, runner.jobs)?;
    let mut run = Run::new("rollout-dev", &common.out, &bytes, Some(seed), None)?;
    io::write_rows(
        io::create(&run.path("rollout_deviation.csv"))?,
        &["level", "h", "lambda", "deviation", "extrapolated_steps"],
        res.levels.iter().map(|l| {
            vec![
                l.level.clone(),
                opt(l.h),
                opt(l.lambda),
                l.deviation.to_string(),
                l.extrapolated_steps.to_string(),
            ]
        }),
    )?;
    run.finish()?;
    Ok(format!(
        "horizon {}, {} samples; deviation {}\n",
        res.horizon,
        res.samples,
        if res.nonincreasing { "nonincreasing" } else { "NOT monotone" }
    ))
}

/// Residual map used by the oracle experiments, for external checks.
pub fn residual_for(cfg: &Config) -> Result<DiscreteResidual> {
    let (model, _) = cfg.model()?;
    Ok(DiscreteResidual::new(model, cfg.scheme.t_u, ORACLE_FLOW_STEPS)?)
}
