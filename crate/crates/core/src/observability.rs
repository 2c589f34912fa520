//! PBH rank test for joint estimation of the state and a constant additive
//! disturbance from `y = C x`.
//!
//! The augmented system `ẋ = A_c x + K`, `K̇ = 0` is observable only if
//! `rank(C) = p`: at `s = 0` the PBH matrix has rank `p + rank(C)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative factor in the singular value threshold.
pub const RANK_RTOL: f64 = 1e-12;

/// `[[sI - A_c, -I], [0, sI], [C, 0]]`, a `(2p + q) × 2p` matrix.
pub fn pbh_matrix(a_c: &DMatrix<f64>, c: &DMatrix<f64>, s: Complex64) -> Result<DMatrix<Complex64>> {
    let p = a_c.nrows();
    if a_c.ncols() != p || c.ncols() != p {
        return Err(Error::Config(format!(
            "PBH matrix needs square A_c and C with p columns (A_c {}x{}, C {}x{})",
            a_c.nrows(),
            a_c.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let q = c.nrows();
    let zero = Complex64::new(0.0, 0.0);
    let mut phi = DMatrix::from_element(2 * p + q, 2 * p, zero);
    for i in 0..p {
        for j in 0..p {
            let diag = if i == j { s } else { zero };
            phi[(i, j)] = diag - Complex64::new(a_c[(i, j)], 0.0);
        }
        phi[(i, p + i)] = Complex64::new(-1.0, 0.0);
        phi[(p + i, p + i)] = s;
    }
    for r in 0..q {
        for j in 0..p {
            phi[(2 * p + r, j)] = Complex64::new(c[(r, j)], 0.0);
        }
    }
    Ok(phi)
}

/// Numerical rank with the threshold `max(rows, cols) · σ_max · 1e-12`.
pub fn numerical_rank(singular_values: &DVector<f64>, rows: usize, cols: usize) -> usize {
    let smax = singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = rows.max(cols) as f64 * smax * RANK_RTOL;
    singular_values.iter().filter(|&&s| s > tol).count()
}

fn complex_rank(m: &DMatrix<Complex64>) -> (usize, DVector<f64>) {
    if m.is_empty() {
        return (0, DVector::zeros(0));
    }
    let sv = m.clone().singular_values();
    (numerical_rank(&sv, m.nrows(), m.ncols()), sv)
}

fn real_rank(m: &DMatrix<f64>) -> (usize, DVector<f64>) {
    if m.is_empty() {
        return (0, DVector::zeros(0));
    }
    let sv = m.clone().singular_values();
    (numerical_rank(&sv, m.nrows(), m.ncols()), sv)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservabilityVerdict {
    pub p: usize,
    pub rank_c: usize,
    /// `rank(C) = p`.
    pub necessary_condition_holds: bool,
    pub rank_phi_at_zero: usize,
    pub singular_values_c: Vec<f64>,
    pub singular_values_phi: Vec<f64>,
}

impl ObservabilityVerdict {
    /// `key = value` lines, one per field.
    pub fn to_structured_text(&self) -> String {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:e}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        format!(
            "p = {}\nrank_c = {}\nnecessary_condition_holds = {}\nrank_phi_at_zero = {}\nsingular_values_c = [{}]\nsingular_values_phi = [{}]\n",
            self.p,
            self.rank_c,
            self.necessary_condition_holds,
            self.rank_phi_at_zero,
            list(&self.singular_values_c),
            list(&self.singular_values_phi)
        )
    }
}

/// Necessary condition at `s = 0`: fails exactly when `rank(C) < p`.
pub fn pbh_necessary_test(a_c: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<ObservabilityVerdict> {
    let phi = pbh_matrix(a_c, c, Complex64::new(0.0, 0.0))?;
    let p = a_c.nrows();
    let (rank_c, sv_c) = real_rank(c);
    let (rank_phi, sv_phi) = complex_rank(&phi);
    Ok(ObservabilityVerdict {
        p,
        rank_c,
        necessary_condition_holds: rank_c == p,
        rank_phi_at_zero: rank_phi,
        singular_values_c: sv_c.iter().cloned().collect(),
        singular_values_phi: sv_phi.iter().cloned().collect(),
    })
}

/// Rank of the PBH matrix at one candidate `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub s: Complex64,
    pub rank: usize,
    pub full_rank: bool,
}

/// Diagnostic only: evaluates the PBH rank at every eigenvalue of the
/// augmented matrix `[[A_c, I], [0, 0]]` with nonnegative real part.
pub fn pbh_sweep(a_c: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<Vec<SweepPoint>> {
    let p = a_c.nrows();
    let mut candidates: Vec<Complex64> = a_c.clone().complex_eigenvalues().iter().cloned().collect();
    // the disturbance block contributes eigenvalue 0
    candidates.push(Complex64::new(0.0, 0.0));
    candidates.retain(|s| s.re >= -1e-12);
    candidates.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    candidates.dedup_by(|a, b| (*a - *b).norm() < 1e-9);
    candidates
        .into_iter()
        .map(|s| {
            let phi = pbh_matrix(a_c, c, s)?;
            let (rank, _) = complex_rank(&phi);
            Ok(SweepPoint {
                s,
                rank,
                full_rank: rank == 2 * p,
            })
        })
        .collect()
}
