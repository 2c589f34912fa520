//! Convergence studies and bound audits.
//!
//! Each run is a pure function of `(config, seed)`. Trials draw from
//! independent streams derived from the master seed and the trial index and
//! are collected in trial order, so the worker count never changes output.

use anyhow::{anyhow, bail, ensure, Context, Result};
use lbmpc_core::kernels::Kernel;
use lbmpc_core::l2nw_oracle::{
    bias_bound, box_probes, fsc_check, l2nw_predict, max_box_norm, rollout, DataSource, Dataset,
    OracleConfig, Region,
};
use lbmpc_core::lpr_filter::{FilterBank, NoiseBounds, SamplingScheme, TwoRateFilter};
use lbmpc_core::system_sim::{add_noise, integrate_trajectory, DiscreteResidual, SystemModel};
use lbmpc_core::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::Config;

/// RK4 steps per hold period for the residual map and oracle data.
pub const ORACLE_FLOW_STEPS: usize = 256;

/// SplitMix64 finalizer; mixes `(master, stream, index)` into a seed.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| anyhow!("building worker pool: {e}"))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn stack(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len() + u.len(), x.iter().chain(u.iter()).cloned())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    /// `(ln k, ln error)`.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// 95% half-width of the slope from the OLS residuals.
    pub half_width: f64,
    pub target: Option<f64>,
}

/// Least squares slope of `ln error` against `ln k`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<RateFit> {
    ensure!(points.len() >= 4, "rate fit needs at least 4 points, got {}", points.len());
    if let Some((k, e)) = points.iter().find(|(k, e)| !(*k > 0.0 && *e > 0.0)) {
        bail!("rate fit needs positive values, got ({k}, {e})");
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(k, e)| (k.ln(), e.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    ensure!(sxx > 0.0, "rate fit needs at least two distinct k");
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = logs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let dof = n - 2.0;
    let se = (sse / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| anyhow!("t distribution: {e}"))?
        .inverse_cdf(0.975);
    Ok(RateFit {
        points: logs,
        slope,
        intercept,
        half_width: t * se,
        target: None,
    })
}

/// `-(r + 1) / (2r + 3)`.
pub fn target_exponent(order: usize) -> f64 {
    -((order + 1) as f64) / (2 * order + 3) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterTrial {
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    /// Max over window boundaries of the Euclidean estimate error.
    pub error: f64,
    /// Boundaries where `x̂ - x` left `[l - s, s - l]`.
    pub containment_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSummary {
    pub k: usize,
    pub median_error: f64,
    pub min_error: f64,
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConvergence {
    pub order: usize,
    pub trials: Vec<FilterTrial>,
    pub per_k: Vec<KSummary>,
    pub fit: Option<RateFit>,
    /// Set when the slope fit was skipped.
    pub flag: Option<String>,
    /// Set for asymmetric noise bounds.
    pub noise_warning: Option<String>,
}

fn contained(err: &DVector<f64>, bounds: &NoiseBounds) -> bool {
    let (l, s) = (bounds.lower(), bounds.upper());
    (0..err.len()).all(|i| err[i] >= l[i] - s[i] && err[i] <= s[i] - l[i])
}

/// Filters one noisy realization of `states` and scores it.
#[allow(clippy::too_many_arguments)]
fn filter_trial(
    model: &SystemModel,
    scheme: &SamplingScheme,
    states: &[DVector<f64>],
    inputs: &[DVector<f64>],
    bounds: &NoiseBounds,
    kernel: &Kernel,
    cfg: &Config,
    bank: &FilterBank,
    seed: u64,
) -> Result<(f64, usize)> {
    let k = scheme.k();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi = add_noise(states, bounds, &mut rng);
    let settings = cfg.filter_settings()?;
    let mut filter = TwoRateFilter::with_bank(
        *scheme,
        model.a_c.clone(),
        model.b_c.clone(),
        bounds.clone(),
        kernel,
        &settings,
        bank.clone(),
        xi[0].clone(),
    )?;
    for (m, u) in inputs.iter().enumerate() {
        filter.push_window(&xi[m * k..=m * k + k], u)?;
    }
    let mut worst = 0.0_f64;
    let mut violations = 0;
    for (m, entry) in filter.ledger().entries().iter().enumerate() {
        let est = entry.saturated.as_ref().expect("every boundary has an estimate");
        let err = est - &states[m * k];
        if !contained(&err, bounds) {
            violations += 1;
        }
        worst = worst.max(err.norm());
    }
    Ok((worst, violations))
}

pub fn run_filter_convergence(cfg: &Config, seed: u64, trials: usize, jobs: usize) -> Result<FilterConvergence> {
    ensure!(trials >= 1, "trial count must be at least 1");
    let (model, x0) = cfg.model()?;
    let p = model.state_dim();
    let bounds = cfg.noise_bounds(p)?;
    let kernel = cfg.filter_kernel()?;
    let settings = cfg.filter_settings()?;
    let n = cfg.scheme.windows;
    let inputs = cfg.inputs(&model, n)?;
    let pool = thread_pool(jobs)?;

    let mut all = Vec::new();
    let mut per_k = Vec::new();
    for (ki, &k) in cfg.scheme.k_list.iter().enumerate() {
        let scheme = cfg.scheme_with_k(k)?;
        let (_, states) = integrate_trajectory(&model, &scheme, &x0, &inputs, cfg.scheme.substeps)
            .with_context(|| format!("ground truth for k = {k}"))?;
        let grid = settings
            .grid
            .clone()
            .unwrap_or_else(|| FilterBank::log_grid(&scheme, settings.grid_size));
        let bank = FilterBank::build_with_origin(&scheme, settings.order, grid, &kernel, settings.origin)?;
        let results: Vec<FilterTrial> = pool.install(|| {
            (0..trials)
                .into_par_iter()
                .map(|trial| {
                    let s = derive_seed(seed, ki as u64, trial as u64);
                    let (error, containment_violations) =
                        filter_trial(&model, &scheme, &states, &inputs, &bounds, &kernel, cfg, &bank, s)
                            .with_context(|| format!("trial {trial} (k = {k}, seed {s})"))?;
                    Ok(FilterTrial {
                        k,
                        trial,
                        seed: s,
                        error,
                        containment_violations,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let mut errs: Vec<f64> = results.iter().map(|t| t.error).collect();
        let med = median(&mut errs);
        per_k.push(KSummary {
            k,
            median_error: med,
            min_error: errs[0],
            max_error: errs[errs.len() - 1],
        });
        all.extend(results);
    }

    let (fit, flag) = if bounds.is_zero() {
        (None, Some("zero noise: errors are at machine scale, slope fit skipped".to_string()))
    } else if per_k.len() < 4 {
        (None, Some(format!("only {} k values, slope fit needs 4", per_k.len())))
    } else {
        let pts: Vec<(f64, f64)> = per_k.iter().map(|s| (s.k as f64, s.median_error)).collect();
        let mut fit = fit_loglog_slope(&pts)?;
        fit.target = Some(target_exponent(settings.order));
        (Some(fit), None)
    };
    let noise_warning = (!bounds.is_zero_mean()).then(|| {
        "asymmetric noise bounds violate the zero-mean assumption of the rate result".to_string()
    });
    Ok(FilterConvergence {
        order: settings.order,
        trials: all,
        per_k,
        fit,
        flag,
        noise_warning,
    })
}

/// Noiseless excitation data from the residual map.
pub struct OracleSetup {
    pub model: SystemModel,
    pub residual: DiscreteResidual,
    pub region: Vec<(f64, f64)>,
    pub data: Dataset,
    /// States `x_0..x_n` of the excitation run.
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub x0: DVector<f64>,
    pub lipschitz: f64,
    pub m_g: f64,
    /// The state-norm constant `max ‖x‖` over the state box, for reference.
    pub m_state: f64,
}

pub fn oracle_setup(cfg: &Config) -> Result<OracleSetup> {
    let (model, x0) = cfg.model()?;
    let t_u = cfg.scheme.t_u;
    let residual = DiscreteResidual::new(model.clone(), t_u, ORACLE_FLOW_STEPS)?;
    let n = cfg.oracle.excitation_steps;
    ensure!(n >= 1, "oracle.excitation_steps must be at least 1");
    let inputs = cfg.inputs(&model, n)?;
    let mut states = Vec::with_capacity(n + 1);
    states.push(x0.clone());
    for u in &inputs {
        let next = residual.next_state(states.last().expect("nonempty"), u)?;
        states.push(next);
    }
    let data = Dataset::from_sequence(
        &states,
        &inputs,
        &residual.a,
        &residual.b,
        DataSource::True,
        Some(model.joint_box()),
    )
    .context("excitation run left the declared box")?;
    let region = cfg.oracle_region(&model)?;
    let lipschitz = residual.lipschitz_bound();
    let m_g = residual.max_norm_on_box(cfg.oracle.m_g_grid)?;
    let m_state = max_box_norm(&model.state_box);
    Ok(OracleSetup {
        model,
        residual,
        region,
        data,
        states,
        inputs,
        x0,
        lipschitz,
        m_g,
        m_state,
    })
}

fn split(z: &DVector<f64>, p: usize) -> (DVector<f64>, DVector<f64>) {
    (z.rows(0, p).into_owned(), z.rows(p, z.len() - p).into_owned())
}

/// Sup of `‖g - 𝒪‖` over `probes`, given `g` already evaluated there.
fn sup_error(probes: &[DVector<f64>], truth: &[DVector<f64>], data: &Dataset, oc: &OracleConfig) -> f64 {
    probes
        .iter()
        .zip(truth)
        .map(|(q, g)| (g - l2nw_predict(q, data, oc).value).norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiselessLevel {
    pub h: f64,
    pub lambda: f64,
    pub covered: bool,
    pub worst_gap: f64,
    pub probes: usize,
    /// `None` when the region is not covered at this `h`.
    pub sup_error: Option<f64>,
    pub bias_bound: f64,
    pub within_bound: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilteredRun {
    pub h: f64,
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    pub sup_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedCheck {
    pub h: f64,
    pub k_low: usize,
    pub k_high: usize,
    /// Fraction of seeds where the error at `k_high` is not larger.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConvergence {
    pub lipschitz: f64,
    pub m_g: f64,
    pub m_state: f64,
    pub noiseless: Vec<NoiselessLevel>,
    pub filtered: Vec<FilteredRun>,
    pub paired: Vec<PairedCheck>,
    pub noiseless_rate: Option<RateFit>,
}

/// Bandwidths of the schedule whose region passes the cover check, with
/// their probe grids and true residuals.
struct CoveredLevel {
    h: f64,
    oc: OracleConfig,
    probes: Vec<DVector<f64>>,
    truth: Vec<DVector<f64>>,
}

fn noiseless_levels(cfg: &Config, setup: &OracleSetup, kernel: &Kernel) -> Result<(Vec<NoiselessLevel>, Vec<CoveredLevel>)> {
    let p = setup.model.state_dim();
    let mut levels = Vec::new();
    let mut covered = Vec::new();
    for &h in &cfg.oracle.h_schedule {
        let lambda = cfg.oracle.lambda_scale * h;
        let oc = OracleConfig::new(h, lambda, kernel.clone(), cfg.oracle.c_lambda)?;
        let report = fsc_check(&setup.data, &Region::Box(setup.region.clone()), h, h / 4.0)?;
        let bound = bias_bound(lambda, kernel, setup.lipschitz, setup.m_g, h);
        if !report.covered {
            levels.push(NoiselessLevel {
                h,
                lambda,
                covered: false,
                worst_gap: report.worst_gap,
                probes: report.probes.len(),
                sup_error: None,
                bias_bound: bound,
                within_bound: None,
            });
            continue;
        }
        let probes = box_probes(&setup.region, h / 4.0);
        let truth = probes
            .iter()
            .map(|q| {
                let (x, u) = split(q, p);
                setup.residual.eval(&x, &u).map_err(anyhow::Error::from)
            })
            .collect::<Result<Vec<_>>>()?;
        let err = sup_error(&probes, &truth, &setup.data, &oc);
        levels.push(NoiselessLevel {
            h,
            lambda,
            covered: true,
            worst_gap: report.worst_gap,
            probes: probes.len(),
            sup_error: Some(err),
            bias_bound: bound,
            within_bound: Some(err <= bound),
        });
        covered.push(CoveredLevel { h, oc, probes, truth });
    }
    if covered.is_empty() {
        bail!(
            "experiment infeasible: no bandwidth in the schedule covers the region; \
             use a longer excitation trajectory (oracle.excitation_steps) or a smaller region"
        );
    }
    Ok((levels, covered))
}

/// Filtered boundary estimates of one noisy excitation run.
fn filtered_states(cfg: &Config, setup: &OracleSetup, k: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let scheme = cfg.scheme_with_k(k)?;
    let model = &setup.model;
    let bounds = cfg.noise_bounds(model.state_dim())?;
    let kernel = cfg.filter_kernel()?;
    let settings = cfg.filter_settings()?;
    let (_, states) = integrate_trajectory(model, &scheme, &setup.x0, &setup.inputs, cfg.scheme.substeps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi = add_noise(&states, &bounds, &mut rng);
    let mut filter = TwoRateFilter::new(
        scheme,
        model.a_c.clone(),
        model.b_c.clone(),
        bounds,
        &kernel,
        &settings,
        xi[0].clone(),
    )?;
    for (m, u) in setup.inputs.iter().enumerate() {
        filter.push_window(&xi[m * k..=m * k + k], u)?;
    }
    Ok(filter
        .ledger()
        .entries()
        .iter()
        .map(|e| e.saturated.clone().expect("every boundary has an estimate"))
        .collect())
}

pub fn run_oracle_convergence(cfg: &Config, seed: u64, trials: usize, jobs: usize) -> Result<OracleConvergence> {
    let setup = oracle_setup(cfg)?;
    let kernel = cfg.oracle_kernel()?;
    let (noiseless, covered) = noiseless_levels(cfg, &setup, &kernel)?;

    let noiseless_rate = {
        let pts: Vec<(f64, f64)> = noiseless
            .iter()
            .filter_map(|l| l.sup_error.map(|e| (l.h, e)))
            .collect();
        if pts.len() >= 4 && pts.iter().all(|p| p.1 > 0.0) {
            Some(fit_loglog_slope(&pts)?)
        } else {
            None
        }
    };

    let pool = thread_pool(jobs)?;
    let p = setup.model.state_dim();
    let mut filtered = Vec::new();
    for &k in &cfg.oracle.k_list {
        let runs: Vec<Vec<FilteredRun>> = pool.install(|| {
            (0..trials)
                .into_par_iter()
                .map(|trial| {
                    // the same stream for every k pairs the seeds across k
                    let s = derive_seed(seed, 1000, trial as u64);
                    let est = filtered_states(cfg, &setup, k, s)
                        .with_context(|| format!("filtered run k = {k}, seed {s}"))?;
                    let data = Dataset::from_sequence(
                        &est,
                        &setup.inputs,
                        &setup.residual.a,
                        &setup.residual.b,
                        DataSource::Filtered,
                        None,
                    )?;
                    debug_assert_eq!(data.state_dim(), p);
                    Ok(covered
                        .iter()
                        .map(|lvl| FilteredRun {
                            h: lvl.h,
                            k,
                            trial,
                            seed: s,
                            sup_error: sup_error(&lvl.probes, &lvl.truth, &data, &lvl.oc),
                        })
                        .collect())
                })
                .collect::<Result<Vec<_>>>()
        })?;
        filtered.extend(runs.into_iter().flatten());
    }

    let mut paired = Vec::new();
    for lvl in &covered {
        for w in cfg.oracle.k_list.windows(2) {
            let err = |k: usize, t: usize| {
                filtered
                    .iter()
                    .find(|r| r.h == lvl.h && r.k == k && r.trial == t)
                    .map(|r| r.sup_error)
                    .expect("run recorded")
            };
            let wins = (0..trials).filter(|&t| err(w[1], t) <= err(w[0], t)).count();
            paired.push(PairedCheck {
                h: lvl.h,
                k_low: w[0],
                k_high: w[1],
                fraction: wins as f64 / trials as f64,
            });
        }
    }

    Ok(OracleConvergence {
        lipschitz: setup.lipschitz,
        m_g: setup.m_g,
        m_state: setup.m_state,
        noiseless,
        filtered,
        paired,
        noiseless_rate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolloutLevel {
    /// `zero`, `h=<value>` or `true-g`.
    pub level: String,
    pub h: Option<f64>,
    pub lambda: Option<f64>,
    pub deviation: f64,
    pub extrapolated_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutDeviation {
    pub horizon: usize,
    pub samples: usize,
    pub levels: Vec<RolloutLevel>,
    /// Deviation over the covered `h` levels never increases.
    pub nonincreasing: bool,
}

fn uniform_in(bounds: &[(f64, f64)], rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_iterator(bounds.len(), bounds.iter().map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>()))
}

fn max_deviation(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn run_rollout_deviation(cfg: &Config, seed: u64, jobs: usize) -> Result<RolloutDeviation> {
    let horizon = cfg.rollout.horizon;
    ensure!(horizon >= 1, "rollout.horizon must be at least 1");
    ensure!(cfg.rollout.samples >= 1, "rollout.samples must be at least 1");
    let setup = oracle_setup(cfg)?;
    let kernel = cfg.oracle_kernel()?;
    let model = &setup.model;
    let p = model.state_dim();
    let gain = cfg.rollout_gain(model)?;
    let offset_box = cfg.offset_box(model)?;
    let joint_box = model.joint_box();
    let (a, b) = (&setup.residual.a, &setup.residual.b);

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2000, 0));
    let state_region = &setup.region[..p];
    let samples: Vec<(DVector<f64>, Vec<DVector<f64>>)> = (0..cfg.rollout.samples)
        .map(|_| {
            let x = uniform_in(state_region, &mut rng);
            let c = (0..horizon).map(|_| uniform_in(&offset_box, &mut rng)).collect();
            (x, c)
        })
        .collect();

    let true_g = |x: &DVector<f64>, v: &DVector<f64>| setup.residual.eval(x, v);
    let reference: Vec<Vec<DVector<f64>>> = samples
        .iter()
        .map(|(x, c)| Ok(rollout(x, &gain, c, a, b, true_g, horizon, None)?.states))
        .collect::<Result<_>>()?;

    let mut levels = Vec::new();
    // an independent recursion through the true flow
    let direct_dev = samples
        .iter()
        .zip(&reference)
        .map(|((x0, c), r)| {
            let mut x = x0.clone();
            let mut traj = Vec::with_capacity(horizon);
            for ci in c {
                let v = &gain * &x + ci;
                x = setup.residual.next_state(&x, &v)?;
                traj.push(x.clone());
            }
            Ok(max_deviation(&traj, r))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    levels.push(RolloutLevel {
        level: "true-g".into(),
        h: None,
        lambda: None,
        deviation: direct_dev,
        extrapolated_steps: 0,
    });

    let evaluate = |oracle: &(dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Sync)| -> Result<(f64, usize)> {
        let pool = thread_pool(jobs)?;
        let per: Vec<(f64, usize)> = pool.install(|| {
            samples
                .par_iter()
                .zip(&reference)
                .map(|((x, c), r)| {
                    let ro = rollout(x, &gain, c, a, b, |x, v| Ok(oracle(x, v)), horizon, Some(&joint_box))?;
                    Ok((max_deviation(&ro.states, r), ro.extrapolated_steps.len()))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        Ok(per.iter().fold((0.0, 0), |acc, &(d, e)| (acc.0.max(d), acc.1 + e)))
    };

    let (dev, ext) = evaluate(&|_, _| DVector::zeros(p))?;
    levels.push(RolloutLevel {
        level: "zero".into(),
        h: None,
        lambda: None,
        deviation: dev,
        extrapolated_steps: ext,
    });

    let mut schedule = cfg.oracle.h_schedule.clone();
    schedule.sort_by(|x, y| y.total_cmp(x));
    let mut curve = Vec::new();
    for h in schedule {
        let lambda = cfg.oracle.lambda_scale * h;
        let oc = OracleConfig::new(h, lambda, kernel.clone(), cfg.oracle.c_lambda)?;
        let (dev, ext) = evaluate(&|x, v| l2nw_predict(&stack(x, v), &setup.data, &oc).value)?;
        curve.push(dev);
        levels.push(RolloutLevel {
            level: format!("h={h}"),
            h: Some(h),
            lambda: Some(lambda),
            deviation: dev,
            extrapolated_steps: ext,
        });
    }
    let nonincreasing = curve.windows(2).all(|w| w[1] <= w[0]);
    Ok(RolloutDeviation {
        horizon,
        samples: samples.len(),
        levels,
        nonincreasing,
    })
}
