//! Two-sided local polynomial state filter for two-rate sampling.
//!
//! Inputs change every `T_u`; states are measured every `T_s = T_u / k`.
//! Inside one input window the trajectory is smooth, so each window is fit
//! by a kernel-weighted polynomial of order `r` twice: once anchored at the
//! window start (the right-side filter, data to the right of the target)
//! and once at the window end (the left-side filter). The estimate at
//! `mT_u` averages the left fit from window `m-1` with the right fit from
//! window `m`, then is clamped to the band implied by the noise bounds.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{kernel_constant_a, Kernel};

/// Local fits with a (scaled) normal-matrix condition number above this are
/// treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Curvature magnitudes below this are treated as zero by the plug-in rule.
pub const CURVATURE_FLOOR: f64 = 1e-12;

/// Default number of log-spaced bandwidths in a [`FilterBank`].
pub const DEFAULT_GRID_SIZE: usize = 16;

/// Input hold period `T_u` and its subdivision `k` into measurement periods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingScheme {
    t_u: f64,
    k: usize,
}

impl SamplingScheme {
    pub fn new(t_u: f64, k: usize) -> Result<Self> {
        if !(t_u > 0.0 && t_u.is_finite()) {
            return Err(Error::Config(format!("input period must be positive, got {t_u}")));
        }
        if k == 0 {
            return Err(Error::Config("k must be a positive integer".into()));
        }
        Ok(Self { t_u, k })
    }

    pub fn t_u(&self) -> f64 {
        self.t_u
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Measurement period, always derived as `T_u / k`.
    pub fn t_s(&self) -> f64 {
        self.t_u / self.k as f64
    }

    /// A window must hold at least `r + 1` samples for an order-`r` fit.
    pub fn check_order(&self, r: usize) -> Result<()> {
        if self.k < r + 1 {
            return Err(Error::Config(format!(
                "k = {} too small for filter order {r} (need k >= r + 1)",
                self.k
            )));
        }
        Ok(())
    }

    /// Time of sample `j` in window `m`.
    pub fn sample_time(&self, m: usize, j: usize) -> f64 {
        m as f64 * self.t_u + j as f64 * self.t_s()
    }
}

/// Per-component noise bounds `l ≤ ε ≤ s`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBounds {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl NoiseBounds {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Config("noise bound vectors differ in length".into()));
        }
        for (j, (&l, &s)) in lower.iter().zip(upper.iter()).enumerate() {
            if !(l.is_finite() && s.is_finite() && l <= 0.0 && 0.0 <= s) {
                return Err(Error::Config(format!(
                    "noise bounds for component {j} must satisfy l <= 0 <= s, got [{l}, {s}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Bounds `[-s_j, s_j]`.
    pub fn symmetric(half_width: &[f64]) -> Result<Self> {
        let upper = DVector::from_column_slice(half_width);
        Self::new(-upper.clone(), upper)
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            lower: DVector::zeros(dim),
            upper: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    /// Uniform noise on `[l, s]` has zero mean only when `l = -s`.
    pub fn is_zero_mean(&self) -> bool {
        self.lower.iter().zip(self.upper.iter()).all(|(l, s)| *l == -*s)
    }

    pub fn is_zero(&self) -> bool {
        self.lower.iter().chain(self.upper.iter()).all(|v| *v == 0.0)
    }

    /// Variance of the uniform law on each `[l_j, s_j]`.
    pub fn uniform_variance(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(self.upper.iter())
            .map(|(l, s)| (s - l) * (s - l) / 12.0)
            .collect()
    }
}

/// Which side of the target time the filtered data lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Data to the left: the target is the window end.
    Left,
    /// Data to the right: the target is the window start.
    Right,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// Where the polynomial basis is centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VandermondeOrigin {
    /// Local times `t_j - t*` measured from the estimation target.
    #[default]
    TargetCentered,
    /// Local times `j T_s` measured from the window start for both sides.
    /// For the left side this extrapolates to the window start, so it is
    /// kept only for comparison.
    WindowStart,
}

/// Local polynomial weights for one side of a window of `k + 1` samples.
///
/// Returns `c` such that `Σ_j c_j ξ_j` is the order-`r` weighted least
/// squares fit evaluated at the target.
pub fn filter_coefficients(
    k: usize,
    t_s: f64,
    r: usize,
    h: f64,
    side: Side,
    kernel: &Kernel,
) -> Result<Vec<f64>> {
    filter_coefficients_with_origin(k, t_s, r, h, side, kernel, VandermondeOrigin::TargetCentered)
}

pub fn filter_coefficients_with_origin(
    k: usize,
    t_s: f64,
    r: usize,
    h: f64,
    side: Side,
    kernel: &Kernel,
    origin: VandermondeOrigin,
) -> Result<Vec<f64>> {
    if !(h > 0.0) || !(t_s > 0.0) {
        return Err(Error::Config(format!("bandwidth and T_s must be positive (h = {h}, T_s = {t_s})")));
    }
    let n = k + 1;
    let weights: Vec<f64> = (0..n)
        .map(|j| {
            let dist = match side {
                Side::Right => j,
                Side::Left => k - j,
            };
            kernel.eval(dist as f64 * t_s / h)
        })
        .collect();
    let active = weights.iter().filter(|w| **w > 0.0).count();
    if active < r + 1 {
        return Err(Error::BandwidthTooSmall {
            h,
            order: r,
            cond: f64::INFINITY,
        });
    }

    let target = match (origin, side) {
        (VandermondeOrigin::TargetCentered, Side::Left) => k as f64 * t_s,
        _ => 0.0,
    };
    // Regressors are scaled by h; the intercept is unaffected and the normal
    // matrix stays well conditioned regardless of time units.
    let local: Vec<f64> = (0..n).map(|j| (j as f64 * t_s - target) / h).collect();
    let basis = DMatrix::from_fn(n, r + 1, |j, a| local[j].powi(a as i32));

    let mut normal = DMatrix::<f64>::zeros(r + 1, r + 1);
    for j in 0..n {
        if weights[j] == 0.0 {
            continue;
        }
        for a in 0..=r {
            for b in 0..=r {
                normal[(a, b)] += weights[j] * basis[(j, a)] * basis[(j, b)];
            }
        }
    }

    let sv = normal.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::BandwidthTooSmall { h, order: r, cond });
    }

    let mut e1 = DVector::<f64>::zeros(r + 1);
    e1[0] = 1.0;
    let beta = normal
        .lu()
        .solve(&e1)
        .ok_or(Error::BandwidthTooSmall { h, order: r, cond })?;
    let fitted = &basis * beta;
    Ok((0..n).map(|j| weights[j] * fitted[j]).collect())
}

/// Precomputed coefficients for one bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    /// Grid bandwidth this entry answers for.
    pub h: f64,
    /// Bandwidth actually used after promotion past singular fits.
    pub h_effective: f64,
    /// Polynomial order actually used (0 after the last-resort fallback).
    pub order_effective: usize,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl BankEntry {
    pub fn coefficients(&self, side: Side) -> &[f64] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

/// Filter coefficients precomputed over a bandwidth grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    order: usize,
    k: usize,
    t_s: f64,
    entries: Vec<BankEntry>,
}

impl FilterBank {
    /// `size` log-spaced values from `T_s` to `T_u` inclusive.
    pub fn log_grid(scheme: &SamplingScheme, size: usize) -> Vec<f64> {
        let (lo, hi) = (scheme.t_s(), scheme.t_u());
        if size <= 1 || lo == hi {
            return vec![hi];
        }
        let (llo, lhi) = (lo.ln(), hi.ln());
        (0..size)
            .map(|i| {
                if i == 0 {
                    lo
                } else if i == size - 1 {
                    hi
                } else {
                    (llo + (lhi - llo) * i as f64 / (size - 1) as f64).exp()
                }
            })
            .collect()
    }

    /// Builds the bank. An entry whose fit is singular is promoted to the
    /// next larger grid bandwidth that works; if none does, it falls back
    /// to order-0 weights at its own bandwidth.
    pub fn build(
        scheme: &SamplingScheme,
        order: usize,
        grid: Vec<f64>,
        kernel: &Kernel,
    ) -> Result<Self> {
        Self::build_with_origin(scheme, order, grid, kernel, VandermondeOrigin::TargetCentered)
    }

    pub fn build_with_origin(
        scheme: &SamplingScheme,
        order: usize,
        mut grid: Vec<f64>,
        kernel: &Kernel,
        origin: VandermondeOrigin,
    ) -> Result<Self> {
        scheme.check_order(order)?;
        if grid.is_empty() {
            return Err(Error::Config("bandwidth grid is empty".into()));
        }
        if grid.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(Error::Config("bandwidth grid values must be positive".into()));
        }
        grid.sort_by(f64::total_cmp);
        grid.dedup();

        let (k, t_s) = (scheme.k(), scheme.t_s());
        let fits: Vec<Option<(Vec<f64>, Vec<f64>)>> = grid
            .iter()
            .map(|&h| {
                let left =
                    filter_coefficients_with_origin(k, t_s, order, h, Side::Left, kernel, origin).ok()?;
                let right =
                    filter_coefficients_with_origin(k, t_s, order, h, Side::Right, kernel, origin).ok()?;
                Some((left, right))
            })
            .collect();

        let mut entries = Vec::with_capacity(grid.len());
        for (i, &h) in grid.iter().enumerate() {
            let promoted = (i..grid.len()).find(|&q| fits[q].is_some());
            let entry = match promoted {
                Some(q) => {
                    let (left, right) = fits[q].clone().expect("checked above");
                    BankEntry {
                        h,
                        h_effective: grid[q],
                        order_effective: order,
                        left,
                        right,
                    }
                }
                None => BankEntry {
                    h,
                    h_effective: h,
                    order_effective: 0,
                    left: filter_coefficients_with_origin(k, t_s, 0, h, Side::Left, kernel, origin)?,
                    right: filter_coefficients_with_origin(k, t_s, 0, h, Side::Right, kernel, origin)?,
                },
            };
            entries.push(entry);
        }
        Ok(Self {
            order,
            k,
            t_s,
            entries,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn t_s(&self) -> f64 {
        self.t_s
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn entry(&self, index: usize) -> &BankEntry {
        &self.entries[index]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One row per grid entry and side: `h,side,c_0,...,c_k`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "h,side")?;
        for j in 0..=self.k {
            write!(out, ",c_{j}")?;
        }
        writeln!(out)?;
        for e in &self.entries {
            for side in [Side::Left, Side::Right] {
                write!(out, "{},{}", e.h, side.as_str())?;
                for c in e.coefficients(side) {
                    write!(out, ",{c}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }
}

/// Index of the grid bandwidth closest to `h`; ties go to the smaller one.
pub fn quantize_bandwidth(h: f64, bank: &FilterBank) -> usize {
    let entries = bank.entries();
    // entries are sorted ascending
    let upper = entries.partition_point(|e| e.h < h);
    if upper == 0 {
        return 0;
    }
    if upper == entries.len() {
        return entries.len() - 1;
    }
    let below = h - entries[upper - 1].h;
    let above = entries[upper].h - h;
    if above < below {
        upper
    } else {
        upper - 1
    }
}

/// Plug-in second derivative `A_c² ξ + A_c B_c u` of the linear model.
pub fn estimate_curvature(
    a_c: &DMatrix<f64>,
    b_c: &DMatrix<f64>,
    xi: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let p = a_c.nrows();
    if a_c.ncols() != p || b_c.nrows() != p || xi.len() != p || b_c.ncols() != u.len() {
        return Err(Error::Config(format!(
            "curvature dimensions: A_c {}x{}, B_c {}x{}, xi {}, u {}",
            a_c.nrows(),
            a_c.ncols(),
            b_c.nrows(),
            b_c.ncols(),
            xi.len(),
            u.len()
        )));
    }
    Ok(a_c * (a_c * xi + b_c * u))
}

/// Plug-in bandwidth `(a σ² T_u / (2 |ẍ| k))^{1/5}` clamped to `[T_s, T_u]`.
///
/// With no noise the smallest bandwidth `T_s` is returned; with (near) zero
/// curvature the largest, `T_u`.
pub fn select_bandwidth(sigma2: f64, t_u: f64, k: usize, curvature: f64, a: f64) -> f64 {
    let t_s = t_u / k as f64;
    if sigma2 <= 0.0 {
        return t_s;
    }
    let curv = curvature.abs();
    if !(curv >= CURVATURE_FLOOR) {
        return t_u;
    }
    let h = (a * sigma2 * t_u / (2.0 * curv * k as f64)).powf(0.2);
    h.clamp(t_s, t_u)
}

/// Clamp `raw` into `[ξ - s, ξ - l]` component-wise.
pub fn saturate_estimate(
    raw: &DVector<f64>,
    xi: &DVector<f64>,
    bounds: &NoiseBounds,
) -> DVector<f64> {
    DVector::from_iterator(
        raw.len(),
        (0..raw.len()).map(|i| {
            let hi = xi[i] - bounds.lower()[i];
            let lo = xi[i] - bounds.upper()[i];
            hi.min(lo.max(raw[i]))
        }),
    )
}

/// Estimate for one target time `mT_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    /// Measurement `ξ(mT_u)`.
    pub measurement: DVector<f64>,
    /// Raw estimate `x̄_m`, absent until a window touching `mT_u` is filtered.
    pub raw: Option<DVector<f64>>,
    /// Saturated estimate `x̂_m`.
    pub saturated: Option<DVector<f64>>,
    /// Set once both neighbouring windows (or the only one, for `m = 0`)
    /// have contributed; the entry never changes afterwards.
    pub finalized: bool,
    /// Per-component bandwidth of the left-side fit (window `m - 1`).
    pub h_left: Option<Vec<f64>>,
    /// Per-component bandwidth of the right-side fit (window `m`).
    pub h_right: Option<Vec<f64>>,
}

/// Running record of state estimates at the input switching times.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateLedger {
    entries: Vec<LedgerEntry>,
    bounds: NoiseBounds,
}

impl EstimateLedger {
    /// Starts at time index 0 with the first boundary measurement.
    pub fn new(xi0: DVector<f64>, bounds: NoiseBounds) -> Result<Self> {
        if xi0.len() != bounds.dim() {
            return Err(Error::Config(format!(
                "measurement has {} components but noise bounds have {}",
                xi0.len(),
                bounds.dim()
            )));
        }
        Ok(Self {
            entries: vec![LedgerEntry {
                measurement: xi0,
                raw: None,
                saturated: None,
                finalized: false,
                h_left: None,
                h_right: None,
            }],
            bounds,
        })
    }

    /// Current time index `n`.
    pub fn time_index(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn entry(&self, m: usize) -> Option<&LedgerEntry> {
        self.entries.get(m)
    }

    pub fn bounds(&self) -> &NoiseBounds {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }
}

/// Advances the ledger from `n - 1` to `n` using window `n - 1`.
///
/// `left_idx[i]` and `right_idx[i]` select the bank entry applied to
/// component `i` on each side. The new estimate at `nT_u` comes from the
/// left-side fit; the estimate at `(n-1)T_u` averages its previous value
/// with the right-side fit. For `n - 1 = 0` there is no previous value and
/// the right-side fit is used alone.
pub fn filter_update(
    ledger: &mut EstimateLedger,
    window: &[DVector<f64>],
    bank: &FilterBank,
    left_idx: &[usize],
    right_idx: &[usize],
) -> Result<()> {
    let k = bank.k();
    if window.len() != k + 1 {
        return Err(Error::IncompleteWindow {
            expected: k + 1,
            got: window.len(),
        });
    }
    let p = ledger.dim();
    if left_idx.len() != p || right_idx.len() != p {
        return Err(Error::Config(format!(
            "need one bank index per component ({p}), got {} left and {} right",
            left_idx.len(),
            right_idx.len()
        )));
    }
    if let Some(bad) = window.iter().position(|s| s.len() != p || s.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data(format!("window sample {bad} is malformed or non-finite")));
    }
    if left_idx.iter().chain(right_idx).any(|&i| i >= bank.len()) {
        return Err(Error::Config("bank index out of range".into()));
    }

    let apply = |coeffs: &[f64], comp: usize| -> f64 {
        coeffs
            .iter()
            .zip(window)
            .map(|(c, xi)| c * xi[comp])
            .sum()
    };

    let right_fit = DVector::from_iterator(
        p,
        (0..p).map(|i| apply(&bank.entry(right_idx[i]).right, i)),
    );
    let left_fit = DVector::from_iterator(
        p,
        (0..p).map(|i| apply(&bank.entry(left_idx[i]).left, i)),
    );
    let h_left: Vec<f64> = left_idx.iter().map(|&i| bank.entry(i).h_effective).collect();
    let h_right: Vec<f64> = right_idx.iter().map(|&i| bank.entry(i).h_effective).collect();

    let bounds = ledger.bounds.clone();
    let prev = ledger.entries.last_mut().expect("ledger is never empty");
    let raw_prev = match &prev.raw {
        Some(e) => (e + &right_fit) * 0.5,
        None => right_fit,
    };
    prev.saturated = Some(saturate_estimate(&raw_prev, &prev.measurement, &bounds));
    prev.raw = Some(raw_prev);
    prev.h_right = Some(h_right);
    prev.finalized = true;

    let xi_n = window[k].clone();
    let saturated = saturate_estimate(&left_fit, &xi_n, &bounds);
    ledger.entries.push(LedgerEntry {
        measurement: xi_n,
        raw: Some(left_fit),
        saturated: Some(saturated),
        finalized: false,
        h_left: Some(h_left),
        h_right: None,
    });
    Ok(())
}

/// How the filter picks a bandwidth per window, component and side.
#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthRule {
    /// Curvature plug-in from the linear model (derived for `r = 1`).
    PlugIn,
    /// The same bandwidth everywhere.
    Fixed(f64),
    /// `scale · T_u · k^{-1/(2r+3)}`, the rate-optimal scaling without a
    /// curvature estimate.
    RateScaled(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSettings {
    pub order: usize,
    pub rule: BandwidthRule,
    /// Per-component noise variance; `None` uses the uniform-law value
    /// implied by the bounds.
    pub noise_variance: Option<Vec<f64>>,
    /// Bandwidth grid; `None` uses [`DEFAULT_GRID_SIZE`] log-spaced values.
    pub grid: Option<Vec<f64>>,
    /// Size of the log-spaced grid when `grid` is `None`.
    pub grid_size: usize,
    pub origin: VandermondeOrigin,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            order: 1,
            rule: BandwidthRule::PlugIn,
            noise_variance: None,
            grid: None,
            grid_size: DEFAULT_GRID_SIZE,
            origin: VandermondeOrigin::TargetCentered,
        }
    }
}

/// Online two-rate filter: bank, bandwidth rule and ledger.
#[derive(Debug, Clone)]
pub struct TwoRateFilter {
    scheme: SamplingScheme,
    bank: FilterBank,
    rule: BandwidthRule,
    sigma2: Vec<f64>,
    kernel_a: f64,
    a_c: DMatrix<f64>,
    b_c: DMatrix<f64>,
    ledger: EstimateLedger,
}

impl TwoRateFilter {
    /// `a_c`/`b_c` are the nominal continuous-time model used by the
    /// curvature plug-in. `xi0` is the measurement at `t = 0`.
    pub fn new(
        scheme: SamplingScheme,
        a_c: DMatrix<f64>,
        b_c: DMatrix<f64>,
        bounds: NoiseBounds,
        kernel: &Kernel,
        settings: &FilterSettings,
        xi0: DVector<f64>,
    ) -> Result<Self> {
        let grid = settings
            .grid
            .clone()
            .unwrap_or_else(|| FilterBank::log_grid(&scheme, settings.grid_size));
        let bank = FilterBank::build_with_origin(&scheme, settings.order, grid, kernel, settings.origin)?;
        Self::with_bank(scheme, a_c, b_c, bounds, kernel, settings, bank, xi0)
    }

    /// Like [`TwoRateFilter::new`] but reuses a prebuilt bank.
    #[allow(clippy::too_many_arguments)]
    pub fn with_bank(
        scheme: SamplingScheme,
        a_c: DMatrix<f64>,
        b_c: DMatrix<f64>,
        bounds: NoiseBounds,
        kernel: &Kernel,
        settings: &FilterSettings,
        bank: FilterBank,
        xi0: DVector<f64>,
    ) -> Result<Self> {
        let p = bounds.dim();
        if a_c.nrows() != p || a_c.ncols() != p || b_c.nrows() != p {
            return Err(Error::Config("model dimensions disagree with noise bounds".into()));
        }
        if bank.k() != scheme.k() {
            return Err(Error::Config("bank and sampling scheme disagree on k".into()));
        }
        let sigma2 = match &settings.noise_variance {
            Some(v) if v.len() == p => v.clone(),
            Some(v) => {
                return Err(Error::Config(format!(
                    "noise variance has {} components, state has {p}",
                    v.len()
                )))
            }
            None => bounds.uniform_variance(),
        };
        let kernel_a = kernel_constant_a(kernel)?;
        let ledger = EstimateLedger::new(xi0, bounds)?;
        Ok(Self {
            scheme,
            bank,
            rule: settings.rule.clone(),
            sigma2,
            kernel_a,
            a_c,
            b_c,
            ledger,
        })
    }

    pub fn bank(&self) -> &FilterBank {
        &self.bank
    }

    pub fn ledger(&self) -> &EstimateLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> EstimateLedger {
        self.ledger
    }

    fn bandwidths(&self, xi: &DVector<f64>, u: &DVector<f64>) -> Result<Vec<usize>> {
        let (t_u, k) = (self.scheme.t_u(), self.scheme.k());
        let hs: Vec<f64> = match &self.rule {
            BandwidthRule::PlugIn => {
                let curv = estimate_curvature(&self.a_c, &self.b_c, xi, u)?;
                (0..xi.len())
                    .map(|i| select_bandwidth(self.sigma2[i], t_u, k, curv[i], self.kernel_a))
                    .collect()
            }
            BandwidthRule::Fixed(h) => vec![*h; xi.len()],
            BandwidthRule::RateScaled(scale) => {
                let r = self.bank.order() as f64;
                let h = scale * t_u * (k as f64).powf(-1.0 / (2.0 * r + 3.0));
                vec![h.clamp(self.scheme.t_s(), t_u); xi.len()]
            }
        };
        Ok(hs.iter().map(|&h| quantize_bandwidth(h, &self.bank)).collect())
    }

    /// Filters the next window, whose `k + 1` samples run from the current
    /// time index to the next, under the held input `u`.
    pub fn push_window(&mut self, window: &[DVector<f64>], u: &DVector<f64>) -> Result<()> {
        let k = self.scheme.k();
        if window.len() != k + 1 {
            return Err(Error::IncompleteWindow {
                expected: k + 1,
                got: window.len(),
            });
        }
        // each side's curvature uses the input active on the filtered window
        // and the measurement at its own target
        let left_idx = self.bandwidths(&window[k], u)?;
        let right_idx = self.bandwidths(&window[0], u)?;
        filter_update(&mut self.ledger, window, &self.bank, &left_idx, &right_idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelSpec, KernelTable};
    use approx::assert_abs_diff_eq;

    fn uniform_kernel() -> Kernel {
        Kernel::new(KernelSpec::Tabulated(
            KernelTable::new(vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap(),
        ))
        .unwrap()
    }

    /// Brute-force weighted least squares by explicit normal equations in
    /// raw (unscaled) time, evaluated at `target`.
    fn brute_force_fit(times: &[f64], weights: &[f64], r: usize, target: f64) -> Vec<f64> {
        let n = times.len();
        // coefficient j is the fitted value at target when sample j is 1, others 0
        (0..n)
            .map(|unit| {
                let mut m = DMatrix::<f64>::zeros(r + 1, r + 1);
                let mut rhs = DVector::<f64>::zeros(r + 1);
                for i in 0..n {
                    let y = if i == unit { 1.0 } else { 0.0 };
                    for a in 0..=r {
                        rhs[a] += weights[i] * times[i].powi(a as i32) * y;
                        for b in 0..=r {
                            m[(a, b)] += weights[i] * times[i].powi((a + b) as i32);
                        }
                    }
                }
                let beta = m.lu().solve(&rhs).unwrap();
                (0..=r).map(|a| beta[a] * target.powi(a as i32)).sum()
            })
            .collect()
    }

    #[test]
    fn uniform_line_fit_intercept_weights() {
        let c = filter_coefficients(2, 1.0, 1, 10.0, Side::Right, &uniform_kernel()).unwrap();
        let expected = [5.0 / 6.0, 2.0 / 6.0, -1.0 / 6.0];
        for (a, b) in c.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn order_zero_is_normalized_kernel_weights() {
        let kernel = Kernel::epanechnikov();
        for &(k, h) in &[(4usize, 0.7), (10, 0.35), (16, 1.0)] {
            let t_s = 1.0 / k as f64;
            let c = filter_coefficients(k, t_s, 0, h, Side::Right, &kernel).unwrap();
            let w: Vec<f64> = (0..=k).map(|j| kernel.eval(j as f64 * t_s / h)).collect();
            let total: f64 = w.iter().sum();
            for (ci, wi) in c.iter().zip(&w) {
                assert_abs_diff_eq!(*ci, wi / total, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn matches_brute_force_least_squares() {
        let kernel = Kernel::epanechnikov();
        let (k, t_s) = (12usize, 0.05);
        for r in 0..=2 {
            for &h in &[0.3, 0.45, 0.6] {
                let times: Vec<f64> = (0..=k).map(|j| j as f64 * t_s).collect();
                let wr: Vec<f64> = times.iter().map(|t| kernel.eval(t / h)).collect();
                let wl: Vec<f64> =
                    times.iter().map(|t| kernel.eval((k as f64 * t_s - t) / h)).collect();
                let right = filter_coefficients(k, t_s, r, h, Side::Right, &kernel).unwrap();
                let left = filter_coefficients(k, t_s, r, h, Side::Left, &kernel).unwrap();
                let want_r = brute_force_fit(&times, &wr, r, 0.0);
                let want_l = brute_force_fit(&times, &wl, r, k as f64 * t_s);
                for j in 0..=k {
                    assert_abs_diff_eq!(right[j], want_r[j], epsilon = 1e-9);
                    assert_abs_diff_eq!(left[j], want_l[j], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn window_start_origin_extrapolates_left_fit() {
        let kernel = Kernel::epanechnikov();
        let (k, t_s, h) = (8usize, 0.125, 0.8);
        let centered = filter_coefficients(k, t_s, 1, h, Side::Left, &kernel).unwrap();
        let literal = filter_coefficients_with_origin(
            k,
            t_s,
            1,
            h,
            Side::Left,
            &kernel,
            VandermondeOrigin::WindowStart,
        )
        .unwrap();
        let times: Vec<f64> = (0..=k).map(|j| j as f64 * t_s).collect();
        let wl: Vec<f64> = times.iter().map(|t| kernel.eval((1.0 - t) / h)).collect();
        let at_start = brute_force_fit(&times, &wl, 1, 0.0);
        for j in 0..=k {
            assert_abs_diff_eq!(literal[j], at_start[j], epsilon = 1e-9);
        }
        assert!(centered.iter().zip(&literal).any(|(a, b)| (a - b).abs() > 1e-3));
        // identical on the right side
        let r1 = filter_coefficients(k, t_s, 1, h, Side::Right, &kernel).unwrap();
        let r2 = filter_coefficients_with_origin(
            k,
            t_s,
            1,
            h,
            Side::Right,
            &kernel,
            VandermondeOrigin::WindowStart,
        )
        .unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn too_few_active_samples() {
        let kernel = Kernel::epanechnikov();
        // only j = 0 has positive weight when h = T_s
        let err = filter_coefficients(8, 0.125, 1, 0.125, Side::Right, &kernel).unwrap_err();
        assert!(matches!(err, Error::BandwidthTooSmall { .. }));
        assert!(filter_coefficients(8, 0.125, 0, 0.125, Side::Right, &kernel).is_ok());
    }

    #[test]
    fn bank_promotes_singular_entries() {
        let scheme = SamplingScheme::new(1.0, 8).unwrap();
        let grid = FilterBank::log_grid(&scheme, DEFAULT_GRID_SIZE);
        assert_eq!(grid.len(), 16);
        assert_abs_diff_eq!(grid[0], 0.125);
        assert_eq!(grid[15], 1.0);
        let bank = FilterBank::build(&scheme, 1, grid, &Kernel::epanechnikov()).unwrap();
        let first = bank.entry(0);
        assert!(first.h_effective > first.h);
        assert_eq!(first.order_effective, 1);
        for e in bank.entries() {
            assert_abs_diff_eq!(e.left.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
            let mirrored: Vec<f64> = e.right.iter().rev().cloned().collect();
            for (a, b) in e.left.iter().zip(&mirrored) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn bank_falls_back_to_order_zero() {
        let scheme = SamplingScheme::new(1.0, 4).unwrap();
        // every grid value leaves a single active sample
        let bank = FilterBank::build(&scheme, 1, vec![0.1, 0.2], &Kernel::epanechnikov()).unwrap();
        for e in bank.entries() {
            assert_eq!(e.order_effective, 0);
            assert_eq!(e.right[0], 1.0);
        }
    }

    #[test]
    fn bank_rejects_small_k() {
        let scheme = SamplingScheme::new(1.0, 2).unwrap();
        assert!(FilterBank::build(&scheme, 2, vec![1.0], &Kernel::epanechnikov()).is_err());
    }

    #[test]
    fn bank_csv_layout() {
        let scheme = SamplingScheme::new(1.0, 4).unwrap();
        let bank = FilterBank::build(&scheme, 1, vec![0.5, 1.0], &Kernel::epanechnikov()).unwrap();
        let mut buf = Vec::new();
        bank.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "h,side,c_0,c_1,c_2,c_3,c_4");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0.5,left,"));
        assert!(lines[2].starts_with("0.5,right,"));
    }

    #[test]
    fn quantize_nearest_with_ties_to_smaller() {
        let scheme = SamplingScheme::new(1.0, 20).unwrap();
        let kernel = Kernel::epanechnikov();
        let bank = FilterBank::build(&scheme, 0, vec![0.1, 0.2, 0.4], &kernel).unwrap();
        assert_eq!(quantize_bandwidth(0.19, &bank), 1);
        assert_eq!(quantize_bandwidth(0.01, &bank), 0);
        assert_eq!(quantize_bandwidth(9.0, &bank), 2);
        assert_eq!(quantize_bandwidth(0.3, &bank), 1);
        let bank2 = FilterBank::build(&scheme, 0, vec![0.125, 0.25], &kernel).unwrap();
        assert_eq!(quantize_bandwidth(0.1875, &bank2), 0);
        let single = FilterBank::build(&scheme, 0, vec![0.1], &kernel).unwrap();
        assert_eq!(quantize_bandwidth(123.0, &single), 0);
    }

    #[test]
    fn curvature_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let xi = DVector::from_vec(vec![0.3, -2.0]);
        let u = DVector::from_vec(vec![3.0]);
        let c = estimate_curvature(&a, &b, &xi, &u).unwrap();
        assert_eq!(c.as_slice(), &[3.0, 0.0]);

        let zero = DMatrix::zeros(2, 2);
        let c = estimate_curvature(&zero, &b, &xi, &u).unwrap();
        assert_eq!(c.as_slice(), &[0.0, 0.0]);

        let c = estimate_curvature(
            &DMatrix::identity(2, 2),
            &DMatrix::zeros(2, 1),
            &DVector::from_vec(vec![2.0, -1.0]),
            &u,
        )
        .unwrap();
        assert_eq!(c.as_slice(), &[2.0, -1.0]);

        assert!(estimate_curvature(&a, &b, &DVector::zeros(3), &u).is_err());
    }

    #[test]
    fn plug_in_bandwidth() {
        let h = select_bandwidth(1.0, 1.0, 100, 1.0, 15.0);
        assert_abs_diff_eq!(h, (15.0f64 / 200.0).powf(0.2), epsilon = 1e-12);
        assert_abs_diff_eq!(h, 0.5957, epsilon = 1e-4);
        assert_eq!(select_bandwidth(1.0, 1.0, 100, 0.0, 15.0), 1.0);
        assert_eq!(select_bandwidth(0.0, 1.0, 100, 1.0, 15.0), 0.01);
        // negative curvature uses its magnitude
        assert_eq!(select_bandwidth(1.0, 1.0, 100, -1.0, 15.0), h);
        // huge noise clamps to T_u
        assert_eq!(select_bandwidth(1e6, 1.0, 10, 1.0, 15.0), 1.0);
    }

    #[test]
    fn saturation_cases() {
        let bounds = NoiseBounds::new(
            DVector::from_vec(vec![-0.1, -0.2]),
            DVector::from_vec(vec![0.1, 0.3]),
        )
        .unwrap();
        let xi = DVector::from_vec(vec![1.0, 2.0]);
        let inside = DVector::from_vec(vec![1.05, 1.9]);
        assert_eq!(saturate_estimate(&inside, &xi, &bounds), inside);
        let high = DVector::from_vec(vec![5.0, -5.0]);
        let s = saturate_estimate(&high, &xi, &bounds);
        assert_abs_diff_eq!(s[0], 1.1, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], 1.7, epsilon = 1e-15);
        let tight = NoiseBounds::zero(2);
        assert_eq!(saturate_estimate(&high, &xi, &tight), xi);
    }

    #[test]
    fn noise_bounds_must_admit_zero() {
        assert!(NoiseBounds::new(DVector::from_vec(vec![0.1]), DVector::from_vec(vec![0.2])).is_err());
        assert!(NoiseBounds::new(DVector::from_vec(vec![-0.1]), DVector::from_vec(vec![-0.05])).is_err());
        let b = NoiseBounds::symmetric(&[0.5]).unwrap();
        assert!(b.is_zero_mean());
        assert_abs_diff_eq!(b.uniform_variance()[0], 1.0 / 12.0);
        let asym = NoiseBounds::new(DVector::from_vec(vec![-0.1]), DVector::from_vec(vec![0.3])).unwrap();
        assert!(!asym.is_zero_mean());
    }

    #[test]
    fn scheme_invariants() {
        let s = SamplingScheme::new(2.0, 8).unwrap();
        assert_eq!(s.t_s(), 0.25);
        assert_eq!(s.t_s() * 8.0, 2.0);
        assert!(s.check_order(7).is_ok());
        assert!(s.check_order(8).is_err());
        assert!(SamplingScheme::new(0.0, 4).is_err());
        assert!(SamplingScheme::new(1.0, 0).is_err());
        assert_eq!(s.sample_time(1, 2), 2.5);
    }

    fn constant_bank(k: usize, r: usize) -> FilterBank {
        let scheme = SamplingScheme::new(1.0, k).unwrap();
        FilterBank::build(&scheme, r, vec![1.0], &Kernel::epanechnikov()).unwrap()
    }

    #[test]
    fn update_averages_with_previous_right_fit() {
        let bank = constant_bank(4, 0);
        let bounds = NoiseBounds::symmetric(&[10.0]).unwrap();
        let mut ledger = EstimateLedger::new(DVector::from_vec(vec![0.0]), bounds).unwrap();
        let w0: Vec<DVector<f64>> = (0..5).map(|_| DVector::from_vec(vec![2.0])).collect();
        filter_update(&mut ledger, &w0, &bank, &[0], &[0]).unwrap();
        // m = 0 has no left side; the right fit stands alone
        assert_eq!(ledger.entry(0).unwrap().raw.as_ref().unwrap()[0], 2.0);
        let e = ledger.entry(1).unwrap().raw.as_ref().unwrap()[0];
        assert_eq!(e, 2.0);
        let w1: Vec<DVector<f64>> = (0..5).map(|_| DVector::from_vec(vec![4.0])).collect();
        filter_update(&mut ledger, &w1, &bank, &[0], &[0]).unwrap();
        // (e + f) / 2 with f = 4
        assert_eq!(ledger.entry(1).unwrap().raw.as_ref().unwrap()[0], 3.0);
        assert!(ledger.entry(1).unwrap().finalized);
        assert!(!ledger.entry(2).unwrap().finalized);
        assert_eq!(ledger.time_index(), 2);
    }

    #[test]
    fn update_rejects_short_window() {
        let bank = constant_bank(4, 0);
        let mut ledger =
            EstimateLedger::new(DVector::from_vec(vec![0.0]), NoiseBounds::zero(1)).unwrap();
        let w: Vec<DVector<f64>> = (0..3).map(|_| DVector::from_vec(vec![1.0])).collect();
        let err = filter_update(&mut ledger, &w, &bank, &[0], &[0]).unwrap_err();
        assert_eq!(err, Error::IncompleteWindow { expected: 5, got: 3 });
    }

    #[test]
    fn linear_trajectory_exact_at_endpoints() {
        let k = 6;
        let bank = constant_bank(k, 1);
        let mut ledger =
            EstimateLedger::new(DVector::from_vec(vec![0.5]), NoiseBounds::symmetric(&[1.0]).unwrap())
                .unwrap();
        let x = |t: f64| 0.5 - 1.5 * t;
        for m in 0..3 {
            let w: Vec<DVector<f64>> = (0..=k)
                .map(|j| DVector::from_vec(vec![x(m as f64 + j as f64 / k as f64)]))
                .collect();
            filter_update(&mut ledger, &w, &bank, &[0], &[0]).unwrap();
        }
        for (m, e) in ledger.entries().iter().enumerate() {
            assert_abs_diff_eq!(e.raw.as_ref().unwrap()[0], x(m as f64), epsilon = 1e-12);
        }
    }
}
