//! Bundled systems and deterministic input sequences.

use anyhow::{bail, Result};
use lbmpc_core::system_sim::{Atom, NonlinearTerm, SystemModel};
use lbmpc_core::{DMatrix, DVector};

pub const BUILTIN_NAMES: &[&str] = &["double-integrator", "double-integrator-sinusoid", "damped-sinusoid"];

/// A bundled model and its default initial state.
pub fn builtin(name: &str) -> Result<(SystemModel, DVector<f64>)> {
    let di_a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let di_b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let di_box = vec![(-20.0, 20.0), (-5.0, 5.0)];
    let model = match name {
        "double-integrator" => SystemModel::new(
            di_a,
            di_b,
            DMatrix::identity(2, 2),
            NonlinearTerm::zero(),
            di_box,
            vec![(-1.0, 1.0)],
        )?,
        // ẍ = u + 0.2 sin(x)
        "double-integrator-sinusoid" => SystemModel::new(
            di_a,
            di_b,
            DMatrix::identity(2, 2),
            NonlinearTerm::new(vec![Atom::Sinusoid {
                target: 1,
                coeff: 0.2,
                index: 0,
                freq: 1.0,
                phase: 0.0,
            }]),
            di_box,
            vec![(-1.0, 1.0)],
        )?,
        // ẋ = -x + u + 0.5 sin(2x)
        "damped-sinusoid" => SystemModel::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::identity(1, 1),
            NonlinearTerm::new(vec![Atom::Sinusoid {
                target: 0,
                coeff: 0.5,
                index: 0,
                freq: 2.0,
                phase: 0.0,
            }]),
            vec![(-1.5, 1.5)],
            vec![(-1.0, 1.0)],
        )?,
        other => bail!("unknown builtin system '{other}' (known: {})", BUILTIN_NAMES.join(", ")),
    };
    let x0 = DVector::zeros(model.state_dim());
    Ok((model, x0))
}

const PRIMES: &[u64] = &[2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Van der Corput radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    out
}

/// Point `i` (from 1) of the Halton sequence in `[0, 1)^dim`.
pub fn halton(i: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "Halton dimension {dim} not supported");
    PRIMES[..dim].iter().map(|&b| radical_inverse(i, b)).collect()
}

/// `n` inputs from the Halton sequence mapped into `input_box`.
pub fn halton_inputs(input_box: &[(f64, f64)], n: usize) -> Vec<DVector<f64>> {
    (1..=n as u64)
        .map(|i| {
            let v = halton(i, input_box.len());
            DVector::from_iterator(
                input_box.len(),
                input_box.iter().zip(v).map(|((lo, hi), t)| lo + (hi - lo) * t),
            )
        })
        .collect()
}

/// Inputs `(-1)^i (min + (max - min) v_i)` with Halton magnitudes; keeps
/// the state bounded while the acceleration stays away from zero.
pub fn alternating_inputs(m: usize, min: f64, max: f64, n: usize) -> Vec<DVector<f64>> {
    (0..n)
        .map(|i| {
            let v = halton(i as u64 + 1, m);
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            DVector::from_iterator(m, v.into_iter().map(|t| sign * (min + (max - min) * t)))
        })
        .collect()
}

/// Holds the first half of each Halton point for `hold` windows, then
/// applies the second half once; truncated to `n` windows.
pub fn hold_probe_inputs(input_box: &[(f64, f64)], hold: usize, n: usize) -> Vec<DVector<f64>> {
    let m = input_box.len();
    let map = |v: &[f64]| {
        DVector::from_iterator(m, input_box.iter().zip(v).map(|((lo, hi), t)| lo + (hi - lo) * t))
    };
    let mut out = Vec::with_capacity(n + hold + 1);
    let mut i = 1;
    while out.len() < n {
        let point = halton(i, 2 * m);
        let (s, v) = (map(&point[..m]), map(&point[m..]));
        out.extend(std::iter::repeat_n(s, hold));
        out.push(v);
        i += 1;
    }
    out.truncate(n);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_two() {
        let got: Vec<f64> = (1..=4).map(|i| radical_inverse(i, 2)).collect();
        assert_eq!(got, vec![0.5, 0.25, 0.75, 0.125]);
        assert_eq!(radical_inverse(5, 3), 2.0 / 3.0 + 1.0 / 9.0);
    }

    #[test]
    fn halton_inputs_stay_in_box() {
        let inputs = halton_inputs(&[(-1.0, 1.0), (0.0, 2.0)], 500);
        assert!(inputs
            .iter()
            .all(|u| (-1.0..1.0).contains(&u[0]) && (0.0..2.0).contains(&u[1])));
    }

    #[test]
    fn alternating_signs_and_magnitudes() {
        let u = alternating_inputs(1, 0.5, 1.0, 10);
        for (i, v) in u.iter().enumerate() {
            assert_eq!(v[0] > 0.0, i % 2 == 0);
            assert!((0.5..=1.0).contains(&v[0].abs()));
        }
    }

    #[test]
    fn hold_probe_pattern() {
        let u = hold_probe_inputs(&[(-1.0, 1.0)], 3, 10);
        assert_eq!(u.len(), 10);
        // point 1 is (1/2, 1/3) in bases 2 and 3
        assert_eq!(u[0][0], 0.0);
        assert_eq!(u[1], u[0]);
        assert_eq!(u[2], u[0]);
        assert!((u[3][0] - (-1.0 / 3.0)).abs() < 1e-15);
        assert_eq!(u[4][0], -0.5);
    }

    #[test]
    fn builtins_load() {
        for name in BUILTIN_NAMES {
            let (model, x0) = builtin(name).unwrap();
            assert_eq!(x0.len(), model.state_dim());
        }
        assert!(builtin("pendulum").is_err());
    }
}
