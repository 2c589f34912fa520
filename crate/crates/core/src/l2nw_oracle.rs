//! L2-regularized Nadaraya-Watson oracle for the one-step modeling error
//! of a linear model, plus excitation (finite sample cover) checking, the
//! noiseless bias bound and multi-step rollouts through the learned model.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::system_sim::box_grid;

/// Whether regression pairs came from true states or filtered estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    True,
    Filtered,
}

impl DataSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            DataSource::True => "true",
            DataSource::Filtered => "filtered",
        }
    }
}

/// `X_i = [x_i; u_i]`, `Y_i = x_{i+1} - (A x_i + B u_i)`.
pub fn ingest_pair(
    x: &DVector<f64>,
    u: &DVector<f64>,
    x_next: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let p = x.len();
    if a.nrows() != p || a.ncols() != p || b.nrows() != p || b.ncols() != u.len() || x_next.len() != p {
        return Err(Error::Config(format!(
            "ingest_pair dimensions: x {p}, u {}, x_next {}, A {}x{}, B {}x{}",
            u.len(),
            x_next.len(),
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let joint = DVector::from_iterator(p + u.len(), x.iter().chain(u.iter()).cloned());
    let residual = x_next - (a * x + b * u);
    Ok((joint, residual))
}

/// Append-only regression data for the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    state_dim: usize,
    input_dim: usize,
    source: DataSource,
    joint_box: Option<Vec<(f64, f64)>>,
    xs: Vec<DVector<f64>>,
    ys: Vec<DVector<f64>>,
}

impl Dataset {
    /// `joint_box`, when given, is enforced on every `X_i`.
    pub fn new(
        state_dim: usize,
        input_dim: usize,
        source: DataSource,
        joint_box: Option<Vec<(f64, f64)>>,
    ) -> Result<Self> {
        if let Some(b) = &joint_box {
            if b.len() != state_dim + input_dim {
                return Err(Error::Config(format!(
                    "dataset box has {} axes, expected {}",
                    b.len(),
                    state_dim + input_dim
                )));
            }
        }
        Ok(Self {
            state_dim,
            input_dim,
            source,
            joint_box,
            xs: Vec::new(),
            ys: Vec::new(),
        })
    }

    pub fn push(&mut self, x: DVector<f64>, y: DVector<f64>) -> Result<()> {
        if x.len() != self.state_dim + self.input_dim || y.len() != self.state_dim {
            return Err(Error::Config(format!(
                "pair dimensions ({}, {}) do not match dataset ({}, {})",
                x.len(),
                y.len(),
                self.state_dim + self.input_dim,
                self.state_dim
            )));
        }
        if let Some(b) = &self.joint_box {
            if let Some(i) = (0..x.len()).find(|&i| x[i] < b[i].0 || x[i] > b[i].1) {
                return Err(Error::Data(format!(
                    "X_{} component {i} = {} lies outside [{}, {}]",
                    self.xs.len(),
                    x[i],
                    b[i].0,
                    b[i].1
                )));
            }
        }
        self.xs.push(x);
        self.ys.push(y);
        Ok(())
    }

    /// Builds pairs from consecutive states (true or filtered) and the held
    /// inputs: pair `i` uses `states[i]`, `inputs[i]`, `states[i + 1]`.
    pub fn from_sequence(
        states: &[DVector<f64>],
        inputs: &[DVector<f64>],
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        source: DataSource,
        joint_box: Option<Vec<(f64, f64)>>,
    ) -> Result<Self> {
        let p = a.nrows();
        let m = b.ncols();
        if states.len() < inputs.len() + 1 {
            return Err(Error::Data(format!(
                "{} inputs need {} states, got {}",
                inputs.len(),
                inputs.len() + 1,
                states.len()
            )));
        }
        let mut data = Self::new(p, m, source, joint_box)?;
        for (i, u) in inputs.iter().enumerate() {
            let (x, y) = ingest_pair(&states[i], u, &states[i + 1], a, b)?;
            data.push(x, y)?;
        }
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn source(&self) -> DataSource {
        self.source
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.xs
    }

    pub fn outputs(&self) -> &[DVector<f64>] {
        &self.ys
    }

    /// Largest `‖Y_i‖`.
    pub fn max_output_norm(&self) -> f64 {
        self.ys.iter().map(|y| y.norm()).fold(0.0, f64::max)
    }

    /// CSV with header `i,X_1..X_{p+m},Y_1..Y_p,source`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "i")?;
        for j in 1..=self.state_dim + self.input_dim {
            write!(out, ",X_{j}")?;
        }
        for j in 1..=self.state_dim {
            write!(out, ",Y_{j}")?;
        }
        writeln!(out, ",source")?;
        for (i, (x, y)) in self.xs.iter().zip(&self.ys).enumerate() {
            write!(out, "{i}")?;
            for v in x.iter().chain(y.iter()) {
                write!(out, ",{v}")?;
            }
            writeln!(out, ",{}", self.source.as_str())?;
        }
        Ok(())
    }
}

/// Bandwidth, regularizer and kernel of the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    h: f64,
    lambda: f64,
    kernel: Kernel,
}

impl OracleConfig {
    /// Requires `h > 0`, `0 <= λ <= c_λ h` and a differentiable kernel.
    pub fn new(h: f64, lambda: f64, kernel: Kernel, c_lambda: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("oracle bandwidth must be positive, got {h}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("regularizer must be nonnegative, got {lambda}")));
        }
        if lambda > c_lambda * h {
            return Err(Error::Config(format!(
                "regularizer {lambda} exceeds c_lambda * h = {}",
                c_lambda * h
            )));
        }
        if !kernel.is_differentiable() {
            return Err(Error::Config(format!(
                "kernel '{}' is not differentiable; the oracle needs a smooth kernel",
                kernel.spec().name()
            )));
        }
        Ok(Self { h, lambda, kernel })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub value: DVector<f64>,
    /// `Σ_i κ(Ξ_i)`.
    pub weight_sum: f64,
    /// True when the dataset was empty and the zero vector was returned.
    pub cold_start: bool,
}

/// `Σ Y_i κ(Ξ_i) / (λ + Σ κ(Ξ_i))` with `Ξ_i = ‖ξ - X_i‖² / h²`.
///
/// Returns the zero vector when every weight vanishes (including `λ = 0`)
/// and when the dataset is empty.
pub fn l2nw_predict(query: &DVector<f64>, data: &Dataset, cfg: &OracleConfig) -> Prediction {
    let p = data.state_dim();
    let mut num = DVector::zeros(p);
    if data.is_empty() {
        return Prediction {
            value: num,
            weight_sum: 0.0,
            cold_start: true,
        };
    }
    let inv_h2 = 1.0 / (cfg.h * cfg.h);
    let mut den = 0.0;
    for (x, y) in data.inputs().iter().zip(data.outputs()) {
        let xi = (query - x).norm_squared() * inv_h2;
        if xi >= 1.0 {
            continue;
        }
        let w = cfg.kernel.eval(xi);
        num.axpy(w, y, 1.0);
        den += w;
    }
    let total = cfg.lambda + den;
    let value = if total > 0.0 { num / total } else { num };
    Prediction {
        value,
        weight_sum: den,
        cold_start: false,
    }
}

/// Region to be covered by the sample balls.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// Axis-aligned box, probed on a uniform grid.
    Box(Vec<(f64, f64)>),
    /// Explicit probe points.
    Points(Vec<DVector<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub point: DVector<f64>,
    pub nearest: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverReport {
    pub h: f64,
    pub probes: Vec<Probe>,
    /// True iff every probe lies within `h/2` of some `X_i`.
    pub covered: bool,
    /// Largest nearest-sample distance over the probes.
    pub worst_gap: f64,
}

impl CoverReport {
    /// CSV with header `z_1..z_d,nearest,covered`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let d = self.probes.first().map_or(0, |p| p.point.len());
        let header: Vec<String> = (1..=d).map(|j| format!("z_{j}")).collect();
        writeln!(out, "{}{}nearest,covered", header.join(","), if d > 0 { "," } else { "" })?;
        for p in &self.probes {
            for v in p.point.iter() {
                write!(out, "{v},")?;
            }
            writeln!(out, "{},{}", p.nearest, p.covered)?;
        }
        Ok(())
    }
}

/// Nearest-neighbour distances with the samples sorted along the first
/// coordinate so that the scan can stop early.
struct NearestIndex<'a> {
    order: Vec<usize>,
    keys: Vec<f64>,
    points: &'a [DVector<f64>],
}

impl<'a> NearestIndex<'a> {
    fn new(points: &'a [DVector<f64>]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]));
        let keys = order.iter().map(|&i| points[i][0]).collect();
        Self { order, keys, points }
    }

    fn nearest(&self, q: &DVector<f64>) -> f64 {
        if self.order.is_empty() {
            return f64::INFINITY;
        }
        let start = self.keys.partition_point(|&k| k < q[0]);
        let mut best2 = f64::INFINITY;
        let mut lo = start;
        let mut hi = start;
        loop {
            let mut progressed = false;
            if hi < self.order.len() {
                let dx = self.keys[hi] - q[0];
                if dx * dx < best2 {
                    best2 = best2.min((q - &self.points[self.order[hi]]).norm_squared());
                    hi += 1;
                    progressed = true;
                } else {
                    hi = self.order.len();
                }
            }
            if lo > 0 {
                let dx = q[0] - self.keys[lo - 1];
                if dx * dx < best2 {
                    best2 = best2.min((q - &self.points[self.order[lo - 1]]).norm_squared());
                    lo -= 1;
                    progressed = true;
                } else {
                    lo = 0;
                }
            }
            if !progressed {
                break;
            }
        }
        best2.sqrt()
    }
}

/// Checks whether the `h/2` balls around the samples cover `region`.
///
/// For a box region the probe grid spacing must not exceed `h/4`; the
/// reported worst gap bounds how far off-grid points can be from data.
pub fn fsc_check(data: &Dataset, region: &Region, h: f64, spacing: f64) -> Result<CoverReport> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("cover radius needs h > 0, got {h}")));
    }
    let dim = data.state_dim() + data.input_dim();
    let probes: Vec<DVector<f64>> = match region {
        Region::Box(bounds) => {
            if bounds.len() != dim {
                return Err(Error::Config(format!(
                    "region has {} axes, data has {dim}",
                    bounds.len()
                )));
            }
            if !(spacing > 0.0 && spacing <= h / 4.0) {
                return Err(Error::Config(format!(
                    "probe spacing {spacing} must be positive and at most h/4 = {}",
                    h / 4.0
                )));
            }
            box_probes(bounds, spacing)
        }
        Region::Points(points) => {
            if points.iter().any(|p| p.len() != dim) {
                return Err(Error::Config("probe point dimension mismatch".into()));
            }
            points.clone()
        }
    };
    let index = NearestIndex::new(data.inputs());
    let radius = h / 2.0;
    let mut worst_gap = 0.0_f64;
    let mut all = true;
    let probes: Vec<Probe> = probes
        .into_iter()
        .map(|point| {
            let nearest = index.nearest(&point);
            let covered = nearest <= radius;
            all &= covered;
            worst_gap = worst_gap.max(nearest);
            Probe {
                point,
                nearest,
                covered,
            }
        })
        .collect();
    Ok(CoverReport {
        h,
        probes,
        covered: all,
        worst_gap,
    })
}

/// Uniform probe grid over a box with spacing at most `spacing` per axis.
pub fn box_probes(bounds: &[(f64, f64)], spacing: f64) -> Vec<DVector<f64>> {
    let widest = bounds.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
    if widest == 0.0 {
        return vec![DVector::from_iterator(bounds.len(), bounds.iter().map(|b| b.0))];
    }
    // per-axis counts differ, so build each axis separately
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(lo, hi)| {
            let n = ((hi - lo) / spacing).ceil() as usize + 1;
            box_grid(&[(lo, hi)], n).into_iter().map(|v| v[0]).collect()
        })
        .collect();
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    points.into_iter().map(DVector::from_vec).collect()
}

/// Noiseless bias bound `μ M_g + (1 - μ) L h` with `μ = λ / (λ + κ(1/2))`.
pub fn bias_bound(lambda: f64, kernel: &Kernel, lipschitz: f64, m_g: f64, h: f64) -> f64 {
    let mu = shrinkage_weight(lambda, kernel);
    mu * m_g + (1.0 - mu) * lipschitz * h
}

/// `μ = λ / (λ + κ(1/2))`.
pub fn shrinkage_weight(lambda: f64, kernel: &Kernel) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    lambda / (lambda + kernel.eval(0.5))
}

/// Largest state norm over a box, `max ‖x‖ : x ∈ X`.
pub fn max_box_norm(bounds: &[(f64, f64)]) -> f64 {
    bounds
        .iter()
        .map(|(lo, hi)| {
            let a = lo.abs().max(hi.abs());
            a * a
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// `x̃_{n+1}, …, x̃_{n+N}`.
    pub states: Vec<DVector<f64>>,
    /// Steps whose oracle query fell outside the declared box.
    pub extrapolated_steps: Vec<usize>,
}

/// Iterates `x̃⁺ = A x̃ + B v + 𝒪(x̃, v)` with `v = K x̃ + c_i` for `horizon`
/// steps. Queries outside `joint_box` are flagged, not rejected.
pub fn rollout<F>(
    x_n: &DVector<f64>,
    gain: &DMatrix<f64>,
    offsets: &[DVector<f64>],
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    mut oracle: F,
    horizon: usize,
    joint_box: Option<&[(f64, f64)]>,
) -> Result<Rollout>
where
    F: FnMut(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
{
    let p = x_n.len();
    if a.nrows() != p || a.ncols() != p || b.nrows() != p || gain.ncols() != p || gain.nrows() != b.ncols() {
        return Err(Error::Config("rollout: inconsistent A, B, K dimensions".into()));
    }
    if offsets.len() < horizon {
        return Err(Error::Config(format!(
            "rollout horizon {horizon} needs that many offsets, got {}",
            offsets.len()
        )));
    }
    let mut states = Vec::with_capacity(horizon);
    let mut extrapolated_steps = Vec::new();
    let mut x = x_n.clone();
    for (i, c) in offsets.iter().take(horizon).enumerate() {
        let v = gain * &x + c;
        if let Some(bounds) = joint_box {
            let outside = x
                .iter()
                .chain(v.iter())
                .zip(bounds)
                .any(|(z, (lo, hi))| z < lo || z > hi);
            if outside {
                extrapolated_steps.push(i);
            }
        }
        let correction = oracle(&x, &v)?;
        x = a * &x + b * &v + correction;
        states.push(x.clone());
    }
    Ok(Rollout {
        states,
        extrapolated_steps,
    })
}
