//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use lbmpc_cli::experiments::{oracle_setup, run_filter_convergence, run_rollout_deviation};
use lbmpc_cli::{catalog, Cli, Config};
use lbmpc_core::kernels::{kernel_constant_a, Kernel, KernelSpec, KernelTable};
use lbmpc_core::l2nw_oracle::{
    bias_bound, box_probes, fsc_check, l2nw_predict, DataSource, Dataset, OracleConfig, Region,
};
use lbmpc_core::lpr_filter::{
    filter_coefficients, filter_update, BandwidthRule, EstimateLedger, FilterBank, FilterSettings,
    NoiseBounds, SamplingScheme, Side, TwoRateFilter,
};
use lbmpc_core::observability::pbh_necessary_test;
use lbmpc_core::system_sim::{discretize, integrate_trajectory, simulate};
use lbmpc_core::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> Config {
    Config::from_path(&configs().join(name)).expect("bundled config").0
}

fn check(ok: bool, pass: String, fail: String) -> Outcome {
    if ok {
        Ok(pass)
    } else {
        Err(fail)
    }
}

fn filter_rate() -> Outcome {
    let cfg = load("filter_rate.toml");
    assert_eq!(cfg.scheme.k_list, vec![8, 16, 32, 64, 128, 256]);
    assert_eq!(cfg.filter.order, 1);
    let start = Instant::now();
    let res = run_filter_convergence(&cfg, 20261015, 200, 1).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let fit = res.fit.ok_or("no slope fit")?;
    let msg = format!(
        "slope {:.4} ± {:.4}, target -0.4 ± 0.15, 200 trials, {secs:.1}s single-threaded",
        fit.slope, fit.half_width
    );
    check((fit.slope + 0.4).abs() <= 0.15 && secs < 300.0, msg.clone(), msg)
}

fn containment() -> Outcome {
    let (model, x0) = catalog::builtin("double-integrator-sinusoid").unwrap();
    let kernel = Kernel::epanechnikov();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut windows, mut estimates, mut violations) = (0usize, 0usize, 0usize);
    let mut run = 0u64;
    while windows < 10_000 {
        let k = rng.random_range(2..=24usize);
        let n = 40;
        let scheme = SamplingScheme::new(rng.random_range(0.2..2.0), k).unwrap();
        let lower: Vec<f64> = (0..2).map(|_| -rng.random_range(0.0..1.0)).collect();
        let upper: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..1.0)).collect();
        let bounds = NoiseBounds::new(DVector::from_vec(lower), DVector::from_vec(upper)).unwrap();
        let inputs: Vec<DVector<f64>> =
            (0..n).map(|_| DVector::from_element(1, rng.random_range(-1.0..1.0))).collect();
        let rule = match run % 3 {
            0 => BandwidthRule::PlugIn,
            1 => BandwidthRule::Fixed(scheme.t_s()),
            _ => BandwidthRule::Fixed(scheme.t_u()),
        };
        let settings = FilterSettings {
            order: if k >= 3 { run as usize % 3 } else { 0 },
            rule,
            ..FilterSettings::default()
        };
        let traj = simulate(&model, &scheme, &x0, &inputs, &bounds, run, 16).unwrap();
        let mut f = TwoRateFilter::new(
            scheme,
            model.a_c.clone(),
            model.b_c.clone(),
            bounds.clone(),
            &kernel,
            &settings,
            traj.measurements[0].clone(),
        )
        .unwrap();
        for m in 0..n {
            f.push_window(traj.window(m), &traj.inputs[m]).unwrap();
            windows += 1;
        }
        for (m, e) in f.ledger().entries().iter().enumerate() {
            let err = e.saturated.as_ref().unwrap() - traj.boundary_state(m);
            estimates += 1;
            let (l, s) = (bounds.lower(), bounds.upper());
            if (0..2).any(|i| err[i] < l[i] - s[i] || err[i] > s[i] - l[i]) {
                violations += 1;
            }
        }
        run += 1;
    }
    let msg = format!("{violations} violations over {estimates} estimates from {windows} windows");
    check(violations == 0, msg.clone(), msg)
}

fn polynomial_reproduction() -> Outcome {
    let mut worst = 0.0_f64;
    for r in 0..=2usize {
        for k in [4usize, 16] {
            let scheme = SamplingScheme::new(1.0, k).unwrap();
            let coeffs = [0.7, -1.3, 0.45];
            let poly = |t: f64| (0..=r).map(|i| coeffs[i] * t.powi(i as i32)).sum::<f64>();
            let n = 6;
            let samples: Vec<DVector<f64>> = (0..=n * k)
                .map(|i| {
                    let t = i as f64 * scheme.t_s();
                    DVector::from_vec(vec![poly(t), 2.0 * poly(t) - 1.0])
                })
                .collect();
            let grid = FilterBank::log_grid(&scheme, 16);
            let bank = FilterBank::build(&scheme, r, grid, &Kernel::epanechnikov()).unwrap();
            // every grid entry, including promoted ones, must reproduce
            for idx in 0..bank.len() {
                if bank.entry(idx).order_effective != r {
                    continue;
                }
                let bounds = NoiseBounds::symmetric(&[1.0, 1.0]).unwrap();
                let mut ledger = EstimateLedger::new(samples[0].clone(), bounds).unwrap();
                for m in 0..n {
                    filter_update(&mut ledger, &samples[m * k..=m * k + k], &bank, &[idx, idx], &[idx, idx])
                        .unwrap();
                }
                for (m, e) in ledger.entries().iter().enumerate() {
                    let truth = &samples[m * k];
                    let est = e.raw.as_ref().unwrap();
                    for i in 0..2 {
                        worst = worst.max((est[i] - truth[i]).abs() / truth[i].abs().max(1.0));
                    }
                }
            }
        }
    }
    let msg = format!("max relative error {worst:.2e} for r in 0..=2, k in {{4, 16}} (limit 1e-8)");
    check(worst <= 1e-8, msg.clone(), msg)
}

fn coefficient_oracles() -> Outcome {
    let kernel = Kernel::epanechnikov();
    let mut worst0 = 0.0_f64;
    for k in [2usize, 5, 8, 16, 33] {
        let t_s = 1.0 / k as f64;
        for h in [0.3, 0.55, 1.0] {
            for side in [Side::Left, Side::Right] {
                let c = filter_coefficients(k, t_s, 0, h, side, &kernel).unwrap();
                let w: Vec<f64> = (0..=k)
                    .map(|j| {
                        let d = if side == Side::Right { j } else { k - j };
                        kernel.eval(d as f64 * t_s / h)
                    })
                    .collect();
                let total: f64 = w.iter().sum();
                for (ci, wi) in c.iter().zip(&w) {
                    worst0 = worst0.max((ci - wi / total).abs());
                }
            }
        }
    }
    let uniform = Kernel::new(KernelSpec::Tabulated(
        KernelTable::new(vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap(),
    ))
    .unwrap();
    let c = filter_coefficients(2, 1.0, 1, 10.0, Side::Right, &uniform).unwrap();
    let want = [5.0 / 6.0, 2.0 / 6.0, -1.0 / 6.0];
    let worst1 = c.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let msg = format!("r=0 vs normalized weights {worst0:.1e} (limit 1e-10); uniform r=1 k=2 vs (5/6, 2/6, -1/6) {worst1:.1e}");
    check(worst0 <= 1e-10 && worst1 <= 1e-12, msg.clone(), msg)
}

fn kernel_constants() -> Outcome {
    // analytic: a = ∫κ² / (∫ν²κ)²
    // epanechnikov: ∫κ² = 9/16 · 16/15 = 3/5, ∫ν²κ = 3/4 · (2/3 - 2/5) = 1/5
    // triangular: ∫κ² = 2/3, ∫ν²κ = 2 (1/3 - 1/4) = 1/6
    let epa_oracle = (3.0 / 5.0) / (1.0f64 / 5.0).powi(2);
    let tri_oracle = (2.0 / 3.0) / (1.0f64 / 6.0).powi(2);
    let epa = kernel_constant_a(&Kernel::new(KernelSpec::Epanechnikov).unwrap()).unwrap();
    let tri = kernel_constant_a(&Kernel::new(KernelSpec::Triangular).unwrap()).unwrap();
    let msg = format!("epanechnikov {epa:.9} (analytic {epa_oracle}), triangular {tri:.9} (analytic {tri_oracle})");
    check(
        (epa - epa_oracle).abs() <= 1e-6 && (tri - tri_oracle).abs() <= 1e-6 && (epa_oracle - 15.0).abs() < 1e-12,
        msg.clone(),
        msg,
    )
}

fn bias_bound_audit() -> Outcome {
    let cfg = load("oracle.toml");
    let setup = oracle_setup(&cfg).map_err(|e| e.to_string())?;
    let kernel = Kernel::epanechnikov();
    let p = setup.model.state_dim();
    let mut lines = Vec::new();
    let mut ok = true;
    for (h, lambda) in [(0.6, kernel.eval(0.5)), (0.3, 0.03), (0.2, 0.0)] {
        let oc = OracleConfig::new(h, lambda, kernel.clone(), 1.0).unwrap();
        let cover = fsc_check(&setup.data, &Region::Box(setup.region.clone()), h, h / 4.0).unwrap();
        if !cover.covered {
            ok = false;
            lines.push(format!("h={h}: region not covered"));
            continue;
        }
        let bound = bias_bound(lambda, &kernel, setup.lipschitz, setup.m_g, h);
        let mut worst = 0.0_f64;
        let mut failures = 0;
        for q in box_probes(&setup.region, h / 4.0) {
            let x = q.rows(0, p).into_owned();
            let u = q.rows(p, q.len() - p).into_owned();
            let err = (setup.residual.eval(&x, &u).unwrap() - l2nw_predict(&q, &setup.data, &oc).value).norm();
            worst = worst.max(err);
            if err > bound {
                failures += 1;
            }
        }
        ok &= failures == 0;
        lines.push(format!("(h={h}, λ={lambda}): max err {worst:.4} ≤ bound {bound:.4}, {failures} probe failures"));
    }
    let msg = lines.join("; ");
    check(ok, msg.clone(), msg)
}

fn l2nw_limits() -> Outcome {
    let kernel = Kernel::epanechnikov();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let v = |x: &[f64]| DVector::from_column_slice(x);

    let mut single = Dataset::new(2, 1, DataSource::True, None).unwrap();
    single.push(v(&[0.3, -0.2, 0.5]), v(&[1.25, -0.75])).unwrap();
    let oc0 = OracleConfig::new(0.4, 0.0, kernel.clone(), 1.0).unwrap();
    let exact = l2nw_predict(&v(&[0.3, -0.2, 0.5]), &single, &oc0).value == v(&[1.25, -0.75]);
    let far = l2nw_predict(&v(&[0.3, 0.2, 0.5]), &single, &oc0).value;
    let outside = far.iter().all(|x| *x == 0.0);

    let mut data = Dataset::new(2, 1, DataSource::True, None).unwrap();
    for _ in 0..300 {
        let x = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
        data.push(x, y).unwrap();
    }
    let ymax = data.max_output_norm();
    let mut violations = 0;
    for _ in 0..1000 {
        let h = rng.random_range(0.05..1.0);
        let lambda = rng.random_range(0.0..h);
        let oc = OracleConfig::new(h, lambda, kernel.clone(), 1.0).unwrap();
        let q = DVector::from_fn(3, |_, _| rng.random_range(-1.5..1.5));
        if l2nw_predict(&q, &data, &oc).value.norm() > ymax * (1.0 + 1e-12) {
            violations += 1;
        }
    }
    let msg = format!(
        "single-point exact: {exact}; zero outside support: {outside}; convex bound violations {violations}/1000"
    );
    check(exact && outside && violations == 0, msg.clone(), msg)
}

fn pbh_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut mismatches, mut wrong_verdicts, mut deficient) = (0, 0, 0);
    for _ in 0..100 {
        let p = rng.random_range(1..=5usize);
        let q = rng.random_range(1..=6usize);
        let rank = rng.random_range(0..=p.min(q));
        let left = DMatrix::from_fn(q, rank, |_, _| rng.random_range(-1.0..1.0));
        let right = DMatrix::from_fn(rank, p, |_, _| rng.random_range(-1.0..1.0));
        let c = &left * &right;
        let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-3.0..3.0));
        let verdict = pbh_necessary_test(&a, &c).unwrap();
        if verdict.rank_phi_at_zero != p + verdict.rank_c || verdict.rank_c != rank {
            mismatches += 1;
        }
        if verdict.necessary_condition_holds != (rank == p) {
            wrong_verdicts += 1;
        }
        if rank < p {
            deficient += 1;
        }
    }
    let msg = format!(
        "100 systems ({deficient} rank-deficient C): {mismatches} rank mismatches, {wrong_verdicts} wrong verdicts"
    );
    check(mismatches == 0 && wrong_verdicts == 0, msg.clone(), msg)
}

fn discretization() -> Outcome {
    let (model, _) = catalog::builtin("double-integrator").unwrap();
    let t_u = 0.7;
    let scheme = SamplingScheme::new(t_u, 4).unwrap();
    let (a, b) = discretize(&model.a_c, &model.b_c, t_u).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inputs: Vec<DVector<f64>> = (0..50).map(|_| DVector::from_element(1, rng.random_range(-1.0..1.0))).collect();
    let x0 = DVector::from_vec(vec![0.4, -0.3]);
    let (_, states) = integrate_trajectory(&model, &scheme, &x0, &inputs, 16).unwrap();
    let mut x = x0;
    let mut worst = 0.0_f64;
    for (m, u) in inputs.iter().enumerate() {
        x = &a * &x + &b * u;
        let sim = &states[(m + 1) * 4];
        worst = worst.max((sim - &x).norm() / x.norm().max(1.0));
    }
    let (ad, bd) = discretize(&model.a_c, &model.b_c, 1.0).unwrap();
    let exact = ad == DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])
        && bd == DMatrix::from_row_slice(2, 1, &[0.5, 1.0]);
    let msg = format!("50-step recursion max relative gap {worst:.2e} (limit 1e-8); double integrator ZOH exact: {exact}");
    check(worst <= 1e-8 && exact, msg.clone(), msg)
}

fn rollout_deviation() -> Outcome {
    let cfg = load("oracle.toml");
    assert_eq!(cfg.rollout.horizon, 5);
    let res = run_rollout_deviation(&cfg, 11, 1).map_err(|e| e.to_string())?;
    let curve: Vec<String> = res
        .levels
        .iter()
        .filter(|l| l.h.is_some())
        .map(|l| format!("{:.4}", l.deviation))
        .collect();
    let true_g = res.levels.iter().find(|l| l.level == "true-g").unwrap().deviation;
    let msg = format!(
        "curve over 4 levels [{}] nonincreasing: {}; true-g deviation {true_g:.1e} at N=5",
        curve.join(", "),
        res.nonincreasing
    );
    check(res.nonincreasing && curve.len() == 4 && true_g <= 1e-8, msg.clone(), msg)
}

fn cli(args: &[&str]) -> Result<String, String> {
    let mut full = vec!["lbmpc"];
    full.extend_from_slice(args);
    lbmpc_cli::run(Cli::try_parse_from(full).map_err(|e| e.to_string())?).map_err(|e| format!("{e:#}"))
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let small = root.join("small.toml");
    std::fs::write(
        &small,
        r#"
[system]
builtin = "damped-sinusoid"
[scheme]
t_u = 0.5
k = 8
k_list = [4, 8, 16, 32]
windows = 30
[noise]
upper = [0.2]
[inputs]
kind = "hold-probe"
hold = 3
[oracle]
h_schedule = [0.8, 0.6]
lambda_scale = 0.1
region = [[-0.5, 0.5], [-0.8, 0.8]]
excitation_steps = 400
k_list = [4, 8]
[rollout]
horizon = 3
gain = [[-0.5]]
samples = 10
[experiment]
trials = 3
"#,
    )
    .unwrap();
    let cfg = small.to_str().unwrap();
    let mut compared = 0;
    for pass in ["a", "b"] {
        let d = |name: &str| root.join(pass).join(name).to_string_lossy().into_owned();
        let jobs = if pass == "a" { "1" } else { "3" };
        cli(&["simulate", "--config", cfg, "--seed", "5", "--out", &d("sim")])?;
        let traj = d("sim") + "/trajectory.csv";
        cli(&["filter", "--config", cfg, "--input", &traj, "--out", &d("filter")])?;
        let est = d("filter") + "/estimates.csv";
        cli(&["learn", "--config", cfg, "--trajectory", &traj, "--out", &d("learn")])?;
        cli(&["learn", "--config", cfg, "--trajectory", &traj, "--estimates", &est, "--out", &d("learn_f")])?;
        cli(&["pbh", "--config", cfg, "--out", &d("pbh")])?;
        for sub in ["conv-filter", "conv-oracle", "rollout-dev"] {
            cli(&[sub, "--config", cfg, "--seed", "5", "--jobs", jobs, "--out", &d(sub)])?;
        }
    }
    let mut differing = Vec::new();
    for sub in ["sim", "filter", "learn", "learn_f", "pbh", "conv-filter", "conv-oracle", "rollout-dev"] {
        let a = csv_files(&root.join("a").join(sub));
        let b = csv_files(&root.join("b").join(sub));
        if a != b {
            differing.push(sub.to_string());
        }
        compared += a.len();
        let ma = std::fs::read(root.join("a").join(sub).join("run_manifest.toml")).unwrap();
        let mb = std::fs::read(root.join("b").join(sub).join("run_manifest.toml")).unwrap();
        if ma != mb {
            differing.push(format!("{sub} manifest"));
        }
    }
    let missing_seed = cli(&["simulate", "--config", cfg, "--out", &root.join("x").to_string_lossy()]).is_err();
    let msg = format!(
        "{compared} CSVs across 7 subcommands compared (worker counts 1 vs 3); differing: [{}]; missing seed rejected: {missing_seed}",
        differing.join(", ")
    );
    check(differing.is_empty() && compared > 0 && missing_seed, msg.clone(), msg)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("filter rate", filter_rate),
        ("containment", containment),
        ("polynomial reproduction", polynomial_reproduction),
        ("coefficient oracles", coefficient_oracles),
        ("kernel constants", kernel_constants),
        ("L2NW bias bound", bias_bound_audit),
        ("L2NW limits", l2nw_limits),
        ("PBH identity", pbh_identity),
        ("discretization", discretization),
        ("rollout deviation", rollout_deviation),
        ("determinism", determinism),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if let Some(pat) = &filter {
            if !name.contains(pat.as_str()) {
                continue;
            }
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}) [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail}) [{secs:.1}s]", i + 1)
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
