//! Finite-support kernels shared by the state filter and the L2NW oracle.
//!
//! A [`KernelSpec`] is an unchecked description; [`Kernel`] is the validated
//! form that every numerical routine takes. Validation checks the kernel
//! axioms on a grid and produces a [`ValidationReport`].

use std::fmt;

use crate::error::{Error, Result};

/// Number of points used by the composite Simpson rule on [-1, 1].
pub const QUADRATURE_POINTS: usize = 2049;

/// Number of uniform grid points used by [`validate_kernel`].
pub const VALIDATION_POINTS: usize = 2001;

const SYMMETRY_TOL: f64 = 1e-12;

/// A kernel sampled on a grid over [-1, 1], linearly interpolated between
/// nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    nu: Vec<f64>,
    values: Vec<f64>,
}

impl KernelTable {
    /// Builds a table from `(ν, κ(ν))` nodes. Nodes must be strictly
    /// increasing, finite, and span exactly `[-1, 1]`.
    pub fn new(nu: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nu.len() != values.len() {
            return Err(Error::Config(format!(
                "kernel table has {} abscissae but {} values",
                nu.len(),
                values.len()
            )));
        }
        if nu.len() < 2 {
            return Err(Error::Config("kernel table needs at least two nodes".into()));
        }
        if nu.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("kernel table contains non-finite entries".into()));
        }
        if nu.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("kernel table abscissae must be strictly increasing".into()));
        }
        if nu[0] != -1.0 || nu[nu.len() - 1] != 1.0 {
            return Err(Error::Config("kernel table must span exactly [-1, 1]".into()));
        }
        Ok(Self { nu, values })
    }

    /// Tabulates `f` on `n` uniform nodes over [-1, 1].
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config("kernel table needs at least two nodes".into()));
        }
        let nu = uniform_grid(n);
        let values = nu.iter().map(|&v| f(v)).collect();
        Self::new(nu, values)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nu
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn interpolate(&self, nu: f64) -> f64 {
        // partition_point gives the first node strictly greater than nu
        let idx = self.nu.partition_point(|&x| x <= nu);
        if idx == 0 {
            return self.values[0];
        }
        if idx >= self.nu.len() {
            return self.values[self.values.len() - 1];
        }
        let (x0, x1) = (self.nu[idx - 1], self.nu[idx]);
        let (y0, y1) = (self.values[idx - 1], self.values[idx]);
        let t = (nu - x0) / (x1 - x0);
        y0 + t * (y1 - y0)
    }
}

/// Kernel family plus, for custom kernels, the tabulated values.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum KernelSpec {
    /// `0.75 (1 - ν²)`
    #[default]
    Epanechnikov,
    /// `1 - |ν|`
    Triangular,
    /// `15/16 (1 - ν²)²`
    Quartic,
    Tabulated(KernelTable),
}

impl KernelSpec {
    /// Looks up a built-in family by its config name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "epanechnikov" => Ok(Self::Epanechnikov),
            "triangular" => Ok(Self::Triangular),
            "quartic" | "biweight" => Ok(Self::Quartic),
            other => Err(Error::Config(format!("unknown kernel family '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Epanechnikov => "epanechnikov",
            Self::Triangular => "triangular",
            Self::Quartic => "quartic",
            Self::Tabulated(_) => "tabulated",
        }
    }

    /// Evaluates the kernel without any validation. Zero outside (-1, 1).
    fn raw_eval(&self, nu: f64) -> f64 {
        if !(nu.abs() < 1.0) {
            return 0.0;
        }
        match self {
            Self::Epanechnikov => 0.75 * (1.0 - nu * nu),
            Self::Triangular => 1.0 - nu.abs(),
            Self::Quartic => {
                let q = 1.0 - nu * nu;
                0.9375 * q * q
            }
            Self::Tabulated(table) => table.interpolate(nu),
        }
    }
}

/// A kernel axiom checked by [`validate_kernel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axiom {
    FiniteSupport,
    EvenSymmetry,
    Positivity,
    Differentiability,
    Nonincreasing,
    Bounded,
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axiom::FiniteSupport => "finite-support",
            Axiom::EvenSymmetry => "even-symmetry",
            Axiom::Positivity => "positivity",
            Axiom::Differentiability => "differentiability",
            Axiom::Nonincreasing => "nonincreasing",
            Axiom::Bounded => "bounded",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomCheck {
    pub axiom: Axiom,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<AxiomCheck>,
}

impl ValidationReport {
    pub fn passed(&self, axiom: Axiom) -> bool {
        self.checks.iter().any(|c| c.axiom == axiom && c.passed)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AxiomCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = if c.passed { "pass" } else { "FAIL" };
            writeln!(f, "{:<18} {status}  {}", c.axiom.to_string(), c.detail)?;
        }
        Ok(())
    }
}

/// Checks every kernel axiom on a uniform grid of [`VALIDATION_POINTS`]
/// points (plus the table nodes for tabulated kernels).
pub fn validate_kernel(spec: &KernelSpec) -> ValidationReport {
    let uniform = uniform_grid(VALIDATION_POINTS);
    let mut grid = uniform.clone();
    if let KernelSpec::Tabulated(table) = spec {
        grid.extend_from_slice(table.nodes());
        grid.sort_by(f64::total_cmp);
        grid.dedup();
    }
    let values: Vec<f64> = grid.iter().map(|&v| spec.raw_eval(v)).collect();

    let mut checks = Vec::with_capacity(6);

    let outside = [-10.0, -1.5, -1.0, 1.0, 1.5, 10.0];
    let support_ok = outside.iter().all(|&v| spec.raw_eval(v) == 0.0);
    checks.push(AxiomCheck {
        axiom: Axiom::FiniteSupport,
        passed: support_ok,
        detail: "kappa(nu) = 0 for |nu| >= 1".into(),
    });

    let bounded = values.iter().all(|v| v.is_finite());
    let sup = values.iter().cloned().fold(0.0_f64, f64::max);
    checks.push(AxiomCheck {
        axiom: Axiom::Bounded,
        passed: bounded,
        detail: format!("sup kappa = {sup}"),
    });

    let mut worst_asym = 0.0_f64;
    let mut asym_at = 0.0;
    for &v in &grid {
        let (a, b) = (spec.raw_eval(v), spec.raw_eval(-v));
        let d = (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        if d > worst_asym {
            worst_asym = d;
            asym_at = v;
        }
    }
    checks.push(AxiomCheck {
        axiom: Axiom::EvenSymmetry,
        passed: worst_asym <= SYMMETRY_TOL,
        detail: format!("max relative asymmetry {worst_asym:.3e} at nu = {asym_at}"),
    });

    let nonpositive = grid
        .iter()
        .zip(&values)
        .find(|(v, k)| v.abs() < 1.0 && !(**k > 0.0));
    checks.push(AxiomCheck {
        axiom: Axiom::Positivity,
        passed: nonpositive.is_none(),
        detail: match nonpositive {
            Some((v, k)) => format!("kappa({v}) = {k}"),
            None => "kappa > 0 on (-1, 1)".into(),
        },
    });

    let mut increase = None;
    let right: Vec<(f64, f64)> = grid
        .iter()
        .zip(&values)
        .filter(|(v, _)| **v >= 0.0 && **v < 1.0)
        .map(|(v, k)| (*v, *k))
        .collect();
    for w in right.windows(2) {
        if w[1].1 > w[0].1 + SYMMETRY_TOL * w[0].1.abs().max(1.0) {
            increase = Some(w[1].0);
            break;
        }
    }
    checks.push(AxiomCheck {
        axiom: Axiom::Nonincreasing,
        passed: increase.is_none(),
        detail: match increase {
            Some(v) => format!("kappa increases at nu = {v}"),
            None => "nonincreasing on [0, 1)".into(),
        },
    });

    checks.push(slope_continuity(spec, &uniform));

    ValidationReport { checks }
}

/// Finite-difference slope continuity on the interior of the support. The
/// two grid steps nearest to ±1 are excluded since kernels are only
/// required to be smooth inside the support.
fn slope_continuity(spec: &KernelSpec, grid: &[f64]) -> AxiomCheck {
    let step = grid[1] - grid[0];
    let interior: Vec<f64> = grid
        .iter()
        .cloned()
        .filter(|v| v.abs() <= 1.0 - 2.0 * step)
        .collect();
    let slopes: Vec<f64> = interior
        .windows(2)
        .map(|w| (spec.raw_eval(w[1]) - spec.raw_eval(w[0])) / (w[1] - w[0]))
        .collect();
    let max_slope = slopes.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    let tol = 100.0 * step * (1.0 + max_slope);
    let mut worst = 0.0_f64;
    let mut at = 0.0;
    for (i, w) in slopes.windows(2).enumerate() {
        let jump = (w[1] - w[0]).abs();
        if jump > worst {
            worst = jump;
            at = interior[i + 1];
        }
    }
    AxiomCheck {
        axiom: Axiom::Differentiability,
        passed: worst <= tol,
        detail: format!("max slope jump {worst:.3e} at nu = {at} (tolerance {tol:.3e})"),
    }
}

/// A kernel that has passed validation.
///
/// Construction requires finite support, boundedness, even symmetry,
/// positivity and monotonicity. Differentiability is recorded but not
/// required here; the oracle checks it separately through
/// [`Kernel::is_differentiable`].
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    spec: KernelSpec,
    differentiable: bool,
}

impl Kernel {
    pub fn new(spec: KernelSpec) -> Result<Self> {
        let report = validate_kernel(&spec);
        let blocking: Vec<String> = report
            .failures()
            .filter(|c| c.axiom != Axiom::Differentiability)
            .map(|c| format!("{} ({})", c.axiom, c.detail))
            .collect();
        if !blocking.is_empty() {
            return Err(Error::Config(format!(
                "kernel '{}' fails: {}",
                spec.name(),
                blocking.join("; ")
            )));
        }
        Ok(Self {
            differentiable: report.passed(Axiom::Differentiability),
            spec,
        })
    }

    pub fn epanechnikov() -> Self {
        Self::new(KernelSpec::Epanechnikov).expect("built-in kernel is valid")
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn is_differentiable(&self) -> bool {
        self.differentiable
    }

    /// `κ(ν)`; exactly zero when `|ν| >= 1`.
    #[inline]
    pub fn eval(&self, nu: f64) -> f64 {
        self.spec.raw_eval(nu)
    }
}

impl Default for Kernel {
    fn default() -> Self {
        Self::epanechnikov()
    }
}

/// `a = ∫κ² / (∫ν²κ)²` by composite Simpson on [`QUADRATURE_POINTS`] points.
pub fn kernel_constant_a(kernel: &Kernel) -> Result<f64> {
    kernel_constant_a_with(kernel, QUADRATURE_POINTS)
}

/// Same as [`kernel_constant_a`] with an explicit (odd) number of quadrature
/// points.
pub fn kernel_constant_a_with(kernel: &Kernel, points: usize) -> Result<f64> {
    let energy = simpson(points, |v| {
        let k = kernel.eval(v);
        k * k
    })?;
    let second = simpson(points, |v| v * v * kernel.eval(v))?;
    if !(second.abs() > 1e-300) {
        return Err(Error::DegenerateKernel(format!(
            "second moment of '{}' is numerically zero",
            kernel.spec().name()
        )));
    }
    let a = energy / (second * second);
    if !a.is_finite() || a <= 0.0 {
        return Err(Error::DegenerateKernel(format!("kernel constant a = {a}")));
    }
    Ok(a)
}

fn simpson(points: usize, f: impl Fn(f64) -> f64) -> Result<f64> {
    if points < 3 || points.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "Simpson rule needs an odd number of points >= 3, got {points}"
        )));
    }
    let grid = uniform_grid(points);
    let step = 2.0 / (points - 1) as f64;
    let mut acc = f(grid[0]) + f(grid[points - 1]);
    for (i, &v) in grid.iter().enumerate().take(points - 1).skip(1) {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(v);
    }
    Ok(acc * step / 3.0)
}

/// `n` uniformly spaced points on [-1, 1], endpoints exact.
fn uniform_grid(n: usize) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| {
            if i == n - 1 {
                1.0
            } else {
                -1.0 + 2.0 * i as f64 / last
            }
        })
        .collect()
}
