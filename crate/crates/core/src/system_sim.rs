//! Ground-truth trajectories for `ẋ = A_c x + B_c u + g_c(x, u)` under
//! zero-order-hold inputs, with two-rate noisy sampling and exact
//! discretization of the linear part.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lpr_filter::{NoiseBounds, SamplingScheme};

/// Default RK4 substeps per measurement period.
pub const DEFAULT_SUBSTEPS: usize = 16;

/// One term of the unmodeled dynamics. Arguments index the stacked vector
/// `z = [x; u]`; `target` is the state component the term is added to.
#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    /// `coeff · Π z_i^e_i`
    Monomial {
        target: usize,
        coeff: f64,
        powers: Vec<(usize, u32)>,
    },
    /// `coeff · sin(freq · z_index + phase)`
    Sinusoid {
        target: usize,
        coeff: f64,
        index: usize,
        freq: f64,
        phase: f64,
    },
    /// `coeff · tanh(gain · z_index)`
    Tanh {
        target: usize,
        coeff: f64,
        index: usize,
        gain: f64,
    },
    Zero,
}

impl Atom {
    fn target(&self) -> Option<usize> {
        match self {
            Atom::Monomial { target, .. } | Atom::Sinusoid { target, .. } | Atom::Tanh { target, .. } => {
                Some(*target)
            }
            Atom::Zero => None,
        }
    }

    fn arguments(&self) -> Vec<usize> {
        match self {
            Atom::Monomial { powers, .. } => powers.iter().map(|(i, _)| *i).collect(),
            Atom::Sinusoid { index, .. } | Atom::Tanh { index, .. } => vec![*index],
            Atom::Zero => Vec::new(),
        }
    }

    fn eval(&self, z: &[f64]) -> f64 {
        match self {
            Atom::Monomial { coeff, powers, .. } => {
                coeff * powers.iter().map(|&(i, e)| z[i].powi(e as i32)).product::<f64>()
            }
            Atom::Sinusoid {
                coeff,
                index,
                freq,
                phase,
                ..
            } => coeff * (freq * z[*index] + phase).sin(),
            Atom::Tanh {
                coeff, index, gain, ..
            } => coeff * (gain * z[*index]).tanh(),
            Atom::Zero => 0.0,
        }
    }

    /// Euclidean-norm Lipschitz constant on the box `bounds` (over `z`).
    fn lipschitz(&self, bounds: &[(f64, f64)]) -> f64 {
        match self {
            Atom::Monomial { coeff, powers, .. } => {
                let amax = |i: usize| bounds[i].0.abs().max(bounds[i].1.abs());
                // merge repeated indices into a single exponent
                let mut merged: Vec<(usize, u32)> = Vec::new();
                for &(i, e) in powers {
                    match merged.iter_mut().find(|(j, _)| *j == i) {
                        Some(entry) => entry.1 += e,
                        None => merged.push((i, e)),
                    }
                }
                let mut sq = 0.0;
                for (v, &(i, e)) in merged.iter().enumerate() {
                    if e == 0 {
                        continue;
                    }
                    let mut partial = e as f64 * amax(i).powi(e as i32 - 1);
                    for (w, &(j, f)) in merged.iter().enumerate() {
                        if w != v {
                            partial *= amax(j).powi(f as i32);
                        }
                    }
                    sq += partial * partial;
                }
                coeff.abs() * sq.sqrt()
            }
            Atom::Sinusoid { coeff, freq, .. } => (coeff * freq).abs(),
            Atom::Tanh { coeff, gain, .. } => (coeff * gain).abs(),
            Atom::Zero => 0.0,
        }
    }
}

/// Sum of catalog atoms standing in for `g_c(x, u)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NonlinearTerm {
    atoms: Vec<Atom>,
}

impl NonlinearTerm {
    pub fn new(atoms: Vec<Atom>) -> Self {
        Self { atoms }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.iter().all(|a| matches!(a, Atom::Zero))
    }

    /// Adds the term evaluated at `z = [x; u]` into `out` (length `p`).
    pub fn accumulate(&self, z: &[f64], out: &mut [f64]) {
        for atom in &self.atoms {
            if let Some(t) = atom.target() {
                out[t] += atom.eval(z);
            }
        }
    }

    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let z: Vec<f64> = x.iter().chain(u.iter()).cloned().collect();
        let mut out = DVector::zeros(x.len());
        self.accumulate(&z, out.as_mut_slice());
        out
    }

    /// Lipschitz constant on the box, as the sum of per-atom constants.
    pub fn lipschitz(&self, bounds: &[(f64, f64)]) -> f64 {
        self.atoms.iter().map(|a| a.lipschitz(bounds)).sum()
    }
}

/// Continuous-time model with a declared state and input box.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub a_c: DMatrix<f64>,
    pub b_c: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub g: NonlinearTerm,
    pub state_box: Vec<(f64, f64)>,
    pub input_box: Vec<(f64, f64)>,
}

impl SystemModel {
    pub fn new(
        a_c: DMatrix<f64>,
        b_c: DMatrix<f64>,
        c: DMatrix<f64>,
        g: NonlinearTerm,
        state_box: Vec<(f64, f64)>,
        input_box: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let p = a_c.nrows();
        if a_c.ncols() != p {
            return Err(Error::Config(format!("A_c must be square, got {}x{}", p, a_c.ncols())));
        }
        if b_c.nrows() != p {
            return Err(Error::Config(format!("B_c must have {p} rows, got {}", b_c.nrows())));
        }
        if c.ncols() != p {
            return Err(Error::Config(format!("C must have {p} columns, got {}", c.ncols())));
        }
        let m = b_c.ncols();
        if state_box.len() != p || input_box.len() != m {
            return Err(Error::Config(format!(
                "box dimensions ({}, {}) disagree with (p, m) = ({p}, {m})",
                state_box.len(),
                input_box.len()
            )));
        }
        if state_box.iter().chain(&input_box).any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::Config("box bounds must satisfy lo <= hi".into()));
        }
        for atom in g.atoms() {
            if let Some(t) = atom.target() {
                if t >= p {
                    return Err(Error::Config(format!("atom target {t} out of range for p = {p}")));
                }
            }
            if let Some(i) = atom.arguments().into_iter().find(|&i| i >= p + m) {
                return Err(Error::Config(format!(
                    "atom argument {i} out of range for p + m = {}",
                    p + m
                )));
            }
        }
        Ok(Self {
            a_c,
            b_c,
            c,
            g,
            state_box,
            input_box,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a_c.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b_c.ncols()
    }

    /// State box followed by input box.
    pub fn joint_box(&self) -> Vec<(f64, f64)> {
        self.state_box.iter().chain(&self.input_box).cloned().collect()
    }

    pub fn vector_field(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut dx = &self.a_c * x + &self.b_c * u;
        if !self.g.is_zero() {
            let z: Vec<f64> = x.iter().chain(u.iter()).cloned().collect();
            self.g.accumulate(&z, dx.as_mut_slice());
        }
        dx
    }

    /// Lipschitz constant of `g_c` on the declared joint box.
    pub fn g_lipschitz(&self) -> f64 {
        self.g.lipschitz(&self.joint_box())
    }
}

fn rk4(model: &SystemModel, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> DVector<f64> {
    let k1 = model.vector_field(x, u);
    let k2 = model.vector_field(&(x + &k1 * (dt / 2.0)), u);
    let k3 = model.vector_field(&(x + &k2 * (dt / 2.0)), u);
    let k4 = model.vector_field(&(x + &k3 * dt), u);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// One classical Runge-Kutta step with `u` held constant.
pub fn integrate_step(
    model: &SystemModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    step_at(model, x, u, dt, 0.0)
}

fn step_at(
    model: &SystemModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
    t: f64,
) -> Result<DVector<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {dt}")));
    }
    let next = rk4(model, x, u, dt);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { t: t + dt });
    }
    Ok(next)
}

/// State after holding `u` for `duration`, using `steps` RK4 steps.
pub fn flow(
    model: &SystemModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    duration: f64,
    steps: usize,
) -> Result<DVector<f64>> {
    let dt = duration / steps.max(1) as f64;
    let mut state = x.clone();
    for s in 0..steps.max(1) {
        state = step_at(model, &state, u, dt, s as f64 * dt)?;
    }
    Ok(state)
}

/// True states and noisy measurements on the two-rate grid.
///
/// Sample `i = m k + j` is taken at `mT_u + jT_s`; the sample at a window
/// boundary is shared by the two adjacent windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub scheme: SamplingScheme,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
    /// Held input `u_m` for each window.
    pub inputs: Vec<DVector<f64>>,
    pub seed: u64,
}

impl Trajectory {
    pub fn windows(&self) -> usize {
        self.inputs.len()
    }

    /// The `k + 1` measurements of window `m`.
    pub fn window(&self, m: usize) -> &[DVector<f64>] {
        let k = self.scheme.k();
        &self.measurements[m * k..=m * k + k]
    }

    /// True state at `mT_u`.
    pub fn boundary_state(&self, m: usize) -> &DVector<f64> {
        &self.states[m * self.scheme.k()]
    }

    pub fn boundary_measurement(&self, m: usize) -> &DVector<f64> {
        &self.measurements[m * self.scheme.k()]
    }

    /// Held input active at sample `i` (the last boundary sample reports
    /// the last input).
    pub fn input_at_sample(&self, i: usize) -> &DVector<f64> {
        let m = (i / self.scheme.k()).min(self.inputs.len() - 1);
        &self.inputs[m]
    }
}

/// Noise-free states at every sample time.
pub fn integrate_trajectory(
    model: &SystemModel,
    scheme: &SamplingScheme,
    x0: &DVector<f64>,
    inputs: &[DVector<f64>],
    substeps: usize,
) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    if inputs.is_empty() {
        return Err(Error::Config("at least one input is required".into()));
    }
    if substeps == 0 {
        return Err(Error::Config("substep count must be positive".into()));
    }
    if x0.len() != model.state_dim() {
        return Err(Error::Config(format!(
            "initial state has {} components, model has {}",
            x0.len(),
            model.state_dim()
        )));
    }
    if let Some(u) = inputs.iter().find(|u| u.len() != model.input_dim()) {
        return Err(Error::Config(format!(
            "input has {} components, model has {}",
            u.len(),
            model.input_dim()
        )));
    }
    let k = scheme.k();
    let dt = scheme.t_s() / substeps as f64;
    let total = inputs.len() * k + 1;
    let mut times = Vec::with_capacity(total);
    let mut states = Vec::with_capacity(total);
    let mut x = x0.clone();
    times.push(0.0);
    states.push(x.clone());
    for (m, u) in inputs.iter().enumerate() {
        for j in 0..k {
            let t0 = scheme.sample_time(m, j);
            for s in 0..substeps {
                x = step_at(model, &x, u, dt, t0 + s as f64 * dt)?;
            }
            times.push(scheme.sample_time(m, j + 1));
            states.push(x.clone());
        }
    }
    Ok((times, states))
}

/// Adds i.i.d. uniform noise on `[l_j, s_j]` to each component.
///
/// The computed difference `ξ - x` is guaranteed to lie in `[l, s]` in
/// floating point, not just in exact arithmetic.
pub fn add_noise(states: &[DVector<f64>], bounds: &NoiseBounds, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let (lo, hi) = (bounds.lower(), bounds.upper());
    states
        .iter()
        .map(|x| {
            DVector::from_iterator(
                x.len(),
                (0..x.len()).map(|i| {
                    let (l, s) = (lo[i], hi[i]);
                    if l == s {
                        return x[i] + l;
                    }
                    let eps = l + (s - l) * rng.random::<f64>();
                    let mut xi = x[i] + eps;
                    while xi - x[i] > s {
                        xi = xi.next_down();
                    }
                    while xi - x[i] < l {
                        xi = xi.next_up();
                    }
                    xi
                }),
            )
        })
        .collect()
}

/// Integrates the model under the held inputs and samples it with noise.
/// Deterministic in `seed`.
pub fn simulate(
    model: &SystemModel,
    scheme: &SamplingScheme,
    x0: &DVector<f64>,
    inputs: &[DVector<f64>],
    bounds: &NoiseBounds,
    seed: u64,
    substeps: usize,
) -> Result<Trajectory> {
    if bounds.dim() != model.state_dim() {
        return Err(Error::Config("noise bounds dimension differs from state dimension".into()));
    }
    let (times, states) = integrate_trajectory(model, scheme, x0, inputs, substeps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let measurements = add_noise(&states, bounds, &mut rng);
    Ok(Trajectory {
        scheme: *scheme,
        times,
        states,
        measurements,
        inputs: inputs.to_vec(),
        seed,
    })
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm1 = (0..n)
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm1 * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = m * scale;
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for i in 1..=30 {
        term = &term * &a / i as f64;
        result += &term;
        if term.iter().all(|v| v.abs() <= f64::EPSILON * 1e-3) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Exact zero-order-hold discretization: `A = e^{A_c T}`,
/// `B = ∫₀^T e^{A_c τ} dτ B_c`, both read off one augmented exponential.
pub fn discretize(a_c: &DMatrix<f64>, b_c: &DMatrix<f64>, t_u: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (p, m) = (a_c.nrows(), b_c.ncols());
    if a_c.ncols() != p || b_c.nrows() != p {
        return Err(Error::Config("discretize: inconsistent A_c/B_c dimensions".into()));
    }
    if !(t_u > 0.0) {
        return Err(Error::Config(format!("discretize: T_u must be positive, got {t_u}")));
    }
    let mut aug = DMatrix::zeros(p + m, p + m);
    aug.view_mut((0, 0), (p, p)).copy_from(&(a_c * t_u));
    aug.view_mut((0, p), (p, m)).copy_from(&(b_c * t_u));
    let e = expm(&aug);
    Ok((
        e.view((0, 0), (p, p)).into_owned(),
        e.view((0, p), (p, m)).into_owned(),
    ))
}

/// One-step modeling error of the discrete linear model:
/// `g(x, u) = Φ_{T_u}(x, u) - (A x + B u)` where `Φ` is the true flow.
#[derive(Debug, Clone)]
pub struct DiscreteResidual {
    pub model: SystemModel,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub t_u: f64,
    pub steps: usize,
}

impl DiscreteResidual {
    pub fn new(model: SystemModel, t_u: f64, steps: usize) -> Result<Self> {
        let (a, b) = discretize(&model.a_c, &model.b_c, t_u)?;
        Ok(Self {
            model,
            a,
            b,
            t_u,
            steps,
        })
    }

    pub fn next_state(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        flow(&self.model, x, u, self.t_u, self.steps)
    }

    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.next_state(x, u)? - &self.a * x - &self.b * u)
    }

    /// Upper bound on the Lipschitz constant of the residual map, from a
    /// Grönwall argument using the logarithmic norm of `A_c`, `‖B_c‖` and
    /// the catalog Lipschitz constant of `g_c`. The catalog constant is
    /// taken on the declared box, so the bound assumes trajectories stay in
    /// it over one hold period.
    pub fn lipschitz_bound(&self) -> f64 {
        let l_c = self.model.g_lipschitz();
        if l_c == 0.0 {
            return 0.0;
        }
        let sym = (&self.model.a_c + self.model.a_c.transpose()) * 0.5;
        let mu = SymmetricEigen::new(sym).eigenvalues.max();
        let beta = self.model.b_c.clone().singular_values().max();
        let gamma = mu + l_c;
        let phi = |t: f64| {
            if gamma.abs() < 1e-12 {
                t
            } else {
                ((gamma * t).exp() - 1.0) / gamma
            }
        };
        let t = self.t_u;
        let integrand = |tau: f64| {
            let growth = (gamma * tau).exp() + (beta + l_c) * phi(tau);
            (mu * (t - tau)).exp() * (growth + 1.0)
        };
        // Simpson; the integrand is smooth
        let n = 1000;
        let step = t / n as f64;
        let mut acc = integrand(0.0) + integrand(t);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * integrand(i as f64 * step);
        }
        // small cushion for the quadrature error of a convex integrand
        l_c * acc * step / 3.0 * (1.0 + 1e-6)
    }

    /// Maximum of `‖g‖` over a uniform grid on the joint box with
    /// `per_axis` points per coordinate.
    pub fn max_norm_on_box(&self, per_axis: usize) -> Result<f64> {
        let bounds = self.model.joint_box();
        let p = self.model.state_dim();
        let mut best = 0.0_f64;
        for z in box_grid(&bounds, per_axis) {
            let x = DVector::from_column_slice(&z[..p]);
            let u = DVector::from_column_slice(&z[p..]);
            best = best.max(self.eval(&x, &u)?.norm());
        }
        Ok(best)
    }
}

/// Uniform tensor grid over a box, `per_axis` points per coordinate
/// (degenerate axes contribute one point).
pub fn box_grid(bounds: &[(f64, f64)], per_axis: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(lo, hi)| {
            if hi == lo || per_axis < 2 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..per_axis)
                    .map(|i| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let mut points = vec![Vec::with_capacity(bounds.len())];
    for axis in &axes {
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for p in &points {
            for &v in axis {
                let mut q = p.clone();
                q.push(v);
                next.push(q);
            }
        }
        points = next;
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_model(a: f64, b: f64, g: NonlinearTerm) -> SystemModel {
        SystemModel::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::identity(1, 1),
            g,
            vec![(-2.0, 2.0)],
            vec![(-1.0, 1.0)],
        )
        .unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn zero_field_keeps_state() {
        let m = scalar_model(0.0, 0.0, NonlinearTerm::zero());
        let x = integrate_step(&m, &v(&[0.7]), &v(&[5.0]), 0.3).unwrap();
        assert_eq!(x[0], 0.7);
    }

    #[test]
    fn exponential_decay_step() {
        let m = scalar_model(-1.0, 0.0, NonlinearTerm::zero());
        let x = integrate_step(&m, &v(&[1.0]), &v(&[0.0]), 0.01).unwrap();
        assert_abs_diff_eq!(x[0], (-0.01f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn constant_field_integrates_linearly() {
        let m = scalar_model(0.0, 1.0, NonlinearTerm::zero());
        let x = integrate_step(&m, &v(&[0.0]), &v(&[2.0]), 0.5).unwrap();
        assert_eq!(x[0], 1.0);
    }

    #[test]
    fn divergence_is_reported() {
        let g = NonlinearTerm::new(vec![Atom::Monomial {
            target: 0,
            coeff: 1.0,
            powers: vec![(0, 3)],
        }]);
        let m = scalar_model(0.0, 0.0, g);
        let err = flow(&m, &v(&[1e80]), &v(&[0.0]), 1.0, 10).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn sampling_grid() {
        let m = scalar_model(-0.5, 1.0, NonlinearTerm::zero());
        let scheme = SamplingScheme::new(1.0, 4).unwrap();
        let traj = simulate(&m, &scheme, &v(&[1.0]), &[v(&[0.2])], &NoiseBounds::zero(1), 3, 16)
            .unwrap();
        assert_eq!(traj.times, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(traj.measurements, traj.states);
        assert_eq!(traj.window(0).len(), 5);
    }

    #[test]
    fn seeded_noise_is_reproducible_and_bounded() {
        let m = scalar_model(-0.5, 1.0, NonlinearTerm::zero());
        let scheme = SamplingScheme::new(1.0, 8).unwrap();
        let inputs: Vec<_> = (0..5).map(|i| v(&[(i as f64).sin()])).collect();
        let bounds = NoiseBounds::new(v(&[-0.05]), v(&[0.2])).unwrap();
        let a = simulate(&m, &scheme, &v(&[0.0]), &inputs, &bounds, 11, 16).unwrap();
        let b = simulate(&m, &scheme, &v(&[0.0]), &inputs, &bounds, 11, 16).unwrap();
        let c = simulate(&m, &scheme, &v(&[0.0]), &inputs, &bounds, 12, 16).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.measurements, c.measurements);
        for (x, xi) in a.states.iter().zip(&a.measurements) {
            let d = xi[0] - x[0];
            assert!((-0.05..=0.2).contains(&d));
        }
    }

    #[test]
    fn discretize_zero_matrix() {
        let b_c = DMatrix::from_row_slice(2, 1, &[1.0, -2.0]);
        let (a, b) = discretize(&DMatrix::zeros(2, 2), &b_c, 0.7).unwrap();
        assert_eq!(a, DMatrix::identity(2, 2));
        assert_abs_diff_eq!(b, &b_c * 0.7, epsilon = 1e-15);
    }

    #[test]
    fn discretize_scalar_closed_form() {
        for &(a_c, t) in &[(-1.3, 0.5), (0.4, 2.0), (-20.0, 1.0)] {
            let (a, b) =
                discretize(&DMatrix::from_element(1, 1, a_c), &DMatrix::from_element(1, 1, 2.0), t)
                    .unwrap();
            let ea: f64 = (a_c * t).exp();
            assert_abs_diff_eq!(a[(0, 0)], ea, epsilon = 1e-12 * ea.max(1.0));
            assert_abs_diff_eq!(b[(0, 0)], (ea - 1.0) / a_c * 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn discretize_double_integrator_exactly() {
        let a_c = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b_c = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let (a, b) = discretize(&a_c, &b_c, 1.0).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]));
        assert_eq!(b, DMatrix::from_row_slice(2, 1, &[0.5, 1.0]));
    }

    #[test]
    fn monomial_lipschitz() {
        // g = 0.5 x² on |x| <= 2 has |g'| <= 2
        let atom = Atom::Monomial {
            target: 0,
            coeff: 0.5,
            powers: vec![(0, 2)],
        };
        assert_abs_diff_eq!(atom.lipschitz(&[(-2.0, 2.0)]), 2.0);
        // x·u on [-2,2]x[-1,1]: gradient (u, x) has norm <= sqrt(1 + 4)
        let atom = Atom::Monomial {
            target: 0,
            coeff: 1.0,
            powers: vec![(0, 1), (1, 1)],
        };
        assert_abs_diff_eq!(atom.lipschitz(&[(-2.0, 2.0), (-1.0, 1.0)]), 5f64.sqrt());
    }

    #[test]
    fn rejects_bad_dimensions() {
        let g = NonlinearTerm::new(vec![Atom::Tanh {
            target: 3,
            coeff: 1.0,
            index: 0,
            gain: 1.0,
        }]);
        let r = SystemModel::new(
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            g,
            vec![(-1.0, 1.0)],
            vec![(-1.0, 1.0)],
        );
        assert!(r.is_err());
    }

    #[test]
    fn residual_lipschitz_bound_dominates_finite_differences() {
        let g = NonlinearTerm::new(vec![Atom::Sinusoid {
            target: 0,
            coeff: 0.5,
            index: 0,
            freq: 2.0,
            phase: 0.0,
        }]);
        let model = scalar_model(-1.0, 1.0, g);
        let res = DiscreteResidual::new(model, 0.5, 64).unwrap();
        let bound = res.lipschitz_bound();
        let mut worst = 0.0_f64;
        for z in box_grid(&[(-2.0, 2.0), (-1.0, 1.0)], 21) {
            let d = 1e-5;
            let base = res.eval(&v(&[z[0]]), &v(&[z[1]])).unwrap()[0];
            let gx = (res.eval(&v(&[z[0] + d]), &v(&[z[1]])).unwrap()[0] - base) / d;
            let gu = (res.eval(&v(&[z[0]]), &v(&[z[1] + d])).unwrap()[0] - base) / d;
            worst = worst.max((gx * gx + gu * gu).sqrt());
        }
        assert!(worst <= bound, "finite-difference slope {worst} exceeds bound {bound}");
    }

    #[test]
    fn box_grid_counts() {
        let g = box_grid(&[(0.0, 1.0), (2.0, 2.0), (-1.0, 1.0)], 3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![0.0, 2.0, -1.0]);
    }
}
