//! wasm-bindgen bindings for the browser demo in `www/`.
//!
//! Three operations: filter weights for one window, a simulated noisy
//! trajectory with its filtered estimates, and a one-dimensional L2NW fit.

use lbmpc_core::kernels::{Kernel, KernelSpec};
use lbmpc_core::l2nw_oracle::{l2nw_predict, DataSource, Dataset, OracleConfig};
use lbmpc_core::lpr_filter::{
    filter_coefficients, BandwidthRule, FilterSettings, NoiseBounds, SamplingScheme, Side, TwoRateFilter,
};
use lbmpc_core::system_sim::{simulate, Atom, NonlinearTerm, SystemModel};
use lbmpc_core::{DMatrix, DVector};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn kernel(name: &str) -> Result<Kernel, JsError> {
    Kernel::new(KernelSpec::from_name(name).map_err(js_err)?).map_err(js_err)
}

/// Weights `c_0..c_k` applied to the `k + 1` samples of a unit window.
#[wasm_bindgen]
pub fn window_weights(k: usize, order: usize, h: f64, right_side: bool, kernel_name: &str) -> Result<Vec<f64>, JsError> {
    let side = if right_side { Side::Right } else { Side::Left };
    filter_coefficients(k, 1.0 / k as f64, order, h, side, &kernel(kernel_name)?).map_err(js_err)
}

/// A filtered run on `ẍ = u + 0.2 sin(x)`, position component only.
#[wasm_bindgen]
pub struct FilterRun {
    times: Vec<f64>,
    truth: Vec<f64>,
    measured: Vec<f64>,
    boundary_times: Vec<f64>,
    estimates: Vec<f64>,
}

#[wasm_bindgen]
impl FilterRun {
    #[wasm_bindgen(getter)]
    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> Vec<f64> {
        self.truth.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn measured(&self) -> Vec<f64> {
        self.measured.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn boundary_times(&self) -> Vec<f64> {
        self.boundary_times.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn estimates(&self) -> Vec<f64> {
        self.estimates.clone()
    }

    /// Max boundary error of the estimates.
    pub fn max_error(&self) -> f64 {
        self.boundary_times
            .iter()
            .zip(&self.estimates)
            .map(|(t, e)| {
                let i = self.times.iter().position(|s| s == t).expect("boundary is a sample");
                (e - self.truth[i]).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn demo_model() -> SystemModel {
    SystemModel::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::identity(2, 2),
        NonlinearTerm::new(vec![Atom::Sinusoid {
            target: 1,
            coeff: 0.2,
            index: 0,
            freq: 1.0,
            phase: 0.0,
        }]),
        vec![(-20.0, 20.0), (-5.0, 5.0)],
        vec![(-1.0, 1.0)],
    )
    .expect("demo model is valid")
}

/// Simulates `windows` hold periods with `k` samples each and filters them.
/// `fixed_h <= 0` selects the curvature plug-in bandwidth.
#[wasm_bindgen]
pub fn filter_run(k: usize, windows: usize, noise: f64, fixed_h: f64, seed: u64) -> Result<FilterRun, JsError> {
    let model = demo_model();
    let scheme = SamplingScheme::new(1.0, k).map_err(js_err)?;
    let bounds = NoiseBounds::symmetric(&[noise, noise]).map_err(js_err)?;
    let inputs: Vec<DVector<f64>> = (0..windows.max(1))
        .map(|m| DVector::from_element(1, if m % 2 == 0 { 0.8 } else { -0.6 }))
        .collect();
    let x0 = DVector::zeros(2);
    let traj = simulate(&model, &scheme, &x0, &inputs, &bounds, seed, 16).map_err(js_err)?;
    let settings = FilterSettings {
        rule: if fixed_h > 0.0 { BandwidthRule::Fixed(fixed_h) } else { BandwidthRule::PlugIn },
        ..FilterSettings::default()
    };
    let mut filter = TwoRateFilter::new(
        scheme,
        model.a_c.clone(),
        model.b_c.clone(),
        bounds,
        &Kernel::epanechnikov(),
        &settings,
        traj.measurements[0].clone(),
    )
    .map_err(js_err)?;
    for m in 0..traj.windows() {
        filter.push_window(traj.window(m), &traj.inputs[m]).map_err(js_err)?;
    }
    let estimates = filter
        .ledger()
        .entries()
        .iter()
        .map(|e| e.saturated.as_ref().map_or(e.measurement[0], |v| v[0]))
        .collect();
    Ok(FilterRun {
        times: traj.times.clone(),
        truth: traj.states.iter().map(|x| x[0]).collect(),
        measured: traj.measurements.iter().map(|x| x[0]).collect(),
        boundary_times: (0..=traj.windows()).map(|m| m as f64 * scheme.t_u()).collect(),
        estimates,
    })
}

/// L2NW fit of `0.5 sin(2x)` from `n` evenly spaced samples on `[-1, 1]`,
/// evaluated at `queries`.
#[wasm_bindgen]
pub fn l2nw_curve(n: usize, h: f64, lambda: f64, queries: Vec<f64>) -> Result<Vec<f64>, JsError> {
    let mut data = Dataset::new(1, 0, DataSource::True, None).map_err(js_err)?;
    for i in 0..n {
        let x = if n == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 };
        data.push(DVector::from_element(1, x), DVector::from_element(1, target(x)))
            .map_err(js_err)?;
    }
    let cfg = OracleConfig::new(h, lambda, Kernel::epanechnikov(), f64::INFINITY).map_err(js_err)?;
    Ok(queries
        .iter()
        .map(|&q| l2nw_predict(&DVector::from_element(1, q), &data, &cfg).value[0])
        .collect())
}

/// The function the L2NW demo learns.
#[wasm_bindgen]
pub fn target(x: f64) -> f64 {
    0.5 * (2.0 * x).sin()
}
