//! Experiment configuration, read from TOML.
//!
//! Every section except `[system]` is optional. Atom argument indices and
//! targets are zero-based into `z = [x; u]` and `x` respectively.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use lbmpc_core::kernels::{Kernel, KernelSpec, KernelTable};
use lbmpc_core::lpr_filter::{BandwidthRule, FilterSettings, NoiseBounds, SamplingScheme, VandermondeOrigin};
use lbmpc_core::system_sim::{Atom, NonlinearTerm, SystemModel};
use lbmpc_core::{DMatrix, DVector};
use serde::Deserialize;

use crate::catalog;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub system: SystemSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub inputs: InputSection,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub rollout: RolloutSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Name of a bundled system; inline matrices are ignored when set.
    pub builtin: Option<String>,
    pub a_c: Option<Vec<Vec<f64>>>,
    pub b_c: Option<Vec<Vec<f64>>>,
    pub c: Option<Vec<Vec<f64>>>,
    pub state_box: Option<Vec<[f64; 2]>>,
    pub input_box: Option<Vec<[f64; 2]>>,
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub atoms: Vec<AtomConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AtomConfig {
    Monomial {
        target: usize,
        coeff: f64,
        /// `[index, exponent]` pairs.
        powers: Vec<[u32; 2]>,
    },
    Sinusoid {
        target: usize,
        coeff: f64,
        index: usize,
        freq: f64,
        #[serde(default)]
        phase: f64,
    },
    Tanh {
        target: usize,
        coeff: f64,
        index: usize,
        gain: f64,
    },
    Zero,
}

impl AtomConfig {
    fn to_atom(&self) -> Atom {
        match self {
            AtomConfig::Monomial { target, coeff, powers } => Atom::Monomial {
                target: *target,
                coeff: *coeff,
                powers: powers.iter().map(|[i, e]| (*i as usize, *e)).collect(),
            },
            AtomConfig::Sinusoid {
                target,
                coeff,
                index,
                freq,
                phase,
            } => Atom::Sinusoid {
                target: *target,
                coeff: *coeff,
                index: *index,
                freq: *freq,
                phase: *phase,
            },
            AtomConfig::Tanh {
                target,
                coeff,
                index,
                gain,
            } => Atom::Tanh {
                target: *target,
                coeff: *coeff,
                index: *index,
                gain: *gain,
            },
            AtomConfig::Zero => Atom::Zero,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSection {
    pub t_u: f64,
    /// Samples per window for `simulate`/`filter`.
    pub k: usize,
    /// Strictly increasing `k` values for `conv-filter`.
    pub k_list: Vec<usize>,
    /// Number of input windows.
    pub windows: usize,
    /// RK4 substeps per measurement period.
    pub substeps: usize,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self {
            t_u: 1.0,
            k: 16,
            k_list: vec![8, 16, 32, 64, 128, 256],
            windows: 20,
            substeps: lbmpc_core::system_sim::DEFAULT_SUBSTEPS,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Upper bounds `s`; absent means noiseless.
    pub upper: Option<Vec<f64>>,
    /// Lower bounds `l`; defaults to `-s`.
    pub lower: Option<Vec<f64>>,
    /// Noise variance for the bandwidth plug-in; defaults to `(s - l)² / 12`.
    pub variance: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputSection {
    /// Halton sequence mapped into the input box.
    #[default]
    Halton,
    /// Halton magnitudes in `[min, max]` with alternating sign.
    Alternating { min: f64, max: f64 },
    /// Per Halton point `(s, v)`: hold `s` for `hold` windows, then apply
    /// `v` once. Moves the state around so `(x, u)` pairs spread out.
    HoldProbe { hold: usize },
    /// Explicit per-window inputs (cycled if shorter than the run).
    List { values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub order: usize,
    pub kernel: String,
    /// Two-column CSV `(nu, kappa)` overriding `kernel`.
    pub kernel_csv: Option<PathBuf>,
    pub fixed_h: Option<f64>,
    pub rate_scale: Option<f64>,
    pub grid_size: usize,
    pub grid: Option<Vec<f64>>,
    /// `target-centered` or `window-start`.
    pub origin: String,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            order: 1,
            kernel: "epanechnikov".into(),
            kernel_csv: None,
            fixed_h: None,
            rate_scale: None,
            grid_size: lbmpc_core::lpr_filter::DEFAULT_GRID_SIZE,
            grid: None,
            origin: "target-centered".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub kernel: String,
    /// Decreasing bandwidth schedule `h_n` (query-space units).
    pub h_schedule: Vec<f64>,
    /// `λ_n = lambda_scale · h_n`; must not exceed `c_lambda`.
    pub lambda_scale: f64,
    pub c_lambda: f64,
    /// Region `Z` for cover checks and sup errors; defaults to the joint box.
    pub region: Option<Vec<[f64; 2]>>,
    /// Length of the excitation trajectory, in input windows.
    pub excitation_steps: usize,
    /// Samples per window for the filtered-data runs.
    pub k_list: Vec<usize>,
    /// Grid points per axis when estimating `M_g`.
    pub m_g_grid: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            kernel: "epanechnikov".into(),
            h_schedule: vec![0.6, 0.45, 0.3, 0.2],
            lambda_scale: 1.0,
            c_lambda: 1.0,
            region: None,
            excitation_steps: 2000,
            k_list: vec![4, 16, 64],
            m_g_grid: 41,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutSection {
    pub horizon: usize,
    /// Feedback gain `K` (`m × p`); defaults to zero.
    pub gain: Option<Vec<Vec<f64>>>,
    /// Number of sampled `(x_n, c)` pairs.
    pub samples: usize,
    /// Box for the offsets `c_i`; defaults to a quarter of the input box.
    pub offset_box: Option<Vec<[f64; 2]>>,
}

impl Default for RolloutSection {
    fn default() -> Self {
        Self {
            horizon: 5,
            gain: None,
            samples: 100,
            offset_box: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub trials: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self { trials: 200 }
    }
}

fn matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    ensure!(!rows.is_empty(), "{name} has no rows");
    let ncols = rows[0].len();
    ensure!(rows.iter().all(|r| r.len() == ncols), "{name} rows differ in length");
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn boxes(b: &[[f64; 2]]) -> Vec<(f64, f64)> {
    b.iter().map(|[lo, hi]| (*lo, *hi)).collect()
}

impl Config {
    pub fn from_path(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
        let text = std::str::from_utf8(&bytes).context("config is not UTF-8")?;
        let cfg = Self::from_toml(text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok((cfg, bytes))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        ensure!(self.scheme.t_u > 0.0, "scheme.t_u must be positive");
        ensure!(self.scheme.k >= 1, "scheme.k must be at least 1");
        ensure!(self.scheme.windows >= 1, "scheme.windows must be at least 1");
        ensure!(self.scheme.substeps >= 1, "scheme.substeps must be at least 1");
        ensure!(
            self.scheme.k_list.windows(2).all(|w| w[0] < w[1]),
            "scheme.k_list must be strictly increasing"
        );
        ensure!(self.experiment.trials >= 1, "experiment.trials must be at least 1");
        ensure!(
            self.oracle.lambda_scale >= 0.0 && self.oracle.lambda_scale <= self.oracle.c_lambda,
            "oracle.lambda_scale must lie in [0, c_lambda]"
        );
        ensure!(
            self.oracle.h_schedule.iter().all(|h| *h > 0.0),
            "oracle.h_schedule entries must be positive"
        );
        ensure!(
            self.oracle.k_list.windows(2).all(|w| w[0] < w[1]),
            "oracle.k_list must be strictly increasing"
        );
        Ok(())
    }

    /// The system model and its initial state.
    pub fn model(&self) -> Result<(SystemModel, DVector<f64>)> {
        let sys = &self.system;
        let (model, default_x0) = match &sys.builtin {
            Some(name) => catalog::builtin(name)?,
            None => {
                let a_c = matrix(sys.a_c.as_deref().context("system.a_c is required")?, "a_c")?;
                let b_c = matrix(sys.b_c.as_deref().context("system.b_c is required")?, "b_c")?;
                let p = a_c.nrows();
                let c = match &sys.c {
                    Some(rows) => matrix(rows, "c")?,
                    None => DMatrix::identity(p, p),
                };
                let state_box = boxes(sys.state_box.as_deref().context("system.state_box is required")?);
                let input_box = boxes(sys.input_box.as_deref().context("system.input_box is required")?);
                let g = NonlinearTerm::new(sys.atoms.iter().map(AtomConfig::to_atom).collect());
                let model = SystemModel::new(a_c, b_c, c, g, state_box, input_box)?;
                (model, DVector::zeros(p))
            }
        };
        let x0 = match &sys.x0 {
            Some(v) => {
                ensure!(v.len() == model.state_dim(), "system.x0 has the wrong length");
                DVector::from_column_slice(v)
            }
            None => default_x0,
        };
        Ok((model, x0))
    }

    pub fn scheme_with_k(&self, k: usize) -> Result<SamplingScheme> {
        Ok(SamplingScheme::new(self.scheme.t_u, k)?)
    }

    pub fn noise_bounds(&self, p: usize) -> Result<NoiseBounds> {
        match &self.noise.upper {
            None => {
                ensure!(self.noise.lower.is_none(), "noise.lower given without noise.upper");
                Ok(NoiseBounds::zero(p))
            }
            Some(upper) => {
                ensure!(upper.len() == p, "noise.upper needs {p} entries");
                let upper = DVector::from_column_slice(upper);
                let lower = match &self.noise.lower {
                    Some(l) => {
                        ensure!(l.len() == p, "noise.lower needs {p} entries");
                        DVector::from_column_slice(l)
                    }
                    None => -upper.clone(),
                };
                Ok(NoiseBounds::new(lower, upper)?)
            }
        }
    }

    pub fn filter_kernel(&self) -> Result<Kernel> {
        let spec = match &self.filter.kernel_csv {
            Some(path) => KernelSpec::Tabulated(read_kernel_csv(path)?),
            None => KernelSpec::from_name(&self.filter.kernel)?,
        };
        Ok(Kernel::new(spec)?)
    }

    pub fn oracle_kernel(&self) -> Result<Kernel> {
        Ok(Kernel::new(KernelSpec::from_name(&self.oracle.kernel)?)?)
    }

    pub fn filter_settings(&self) -> Result<FilterSettings> {
        let f = &self.filter;
        let rule = match (f.fixed_h, f.rate_scale) {
            (Some(_), Some(_)) => bail!("filter.fixed_h and filter.rate_scale are mutually exclusive"),
            (Some(h), None) => BandwidthRule::Fixed(h),
            (None, Some(c)) => BandwidthRule::RateScaled(c),
            (None, None) => BandwidthRule::PlugIn,
        };
        let origin = match f.origin.as_str() {
            "target-centered" => VandermondeOrigin::TargetCentered,
            "window-start" => VandermondeOrigin::WindowStart,
            other => bail!("unknown filter.origin '{other}'"),
        };
        Ok(FilterSettings {
            order: f.order,
            rule,
            noise_variance: self.noise.variance.clone(),
            grid: f.grid.clone(),
            grid_size: f.grid_size,
            origin,
        })
    }

    /// Per-window inputs for `n` windows.
    pub fn inputs(&self, model: &SystemModel, n: usize) -> Result<Vec<DVector<f64>>> {
        let m = model.input_dim();
        match &self.inputs {
            InputSection::Halton => Ok(catalog::halton_inputs(&model.input_box, n)),
            InputSection::Alternating { min, max } => {
                ensure!(0.0 <= *min && min <= max, "alternating inputs need 0 <= min <= max");
                Ok(catalog::alternating_inputs(m, *min, *max, n))
            }
            InputSection::HoldProbe { hold } => Ok(catalog::hold_probe_inputs(&model.input_box, *hold, n)),
            InputSection::List { values } => {
                ensure!(!values.is_empty(), "inputs.values is empty");
                ensure!(values.iter().all(|v| v.len() == m), "inputs.values entries need {m} components");
                Ok((0..n).map(|i| DVector::from_column_slice(&values[i % values.len()])).collect())
            }
        }
    }

    /// Region `Z` for the oracle.
    pub fn oracle_region(&self, model: &SystemModel) -> Result<Vec<(f64, f64)>> {
        match &self.oracle.region {
            Some(r) => {
                ensure!(
                    r.len() == model.state_dim() + model.input_dim(),
                    "oracle.region needs p + m axes"
                );
                Ok(boxes(r))
            }
            None => Ok(model.joint_box()),
        }
    }

    pub fn rollout_gain(&self, model: &SystemModel) -> Result<DMatrix<f64>> {
        let (p, m) = (model.state_dim(), model.input_dim());
        match &self.rollout.gain {
            Some(rows) => {
                let k = matrix(rows, "rollout.gain")?;
                ensure!(k.nrows() == m && k.ncols() == p, "rollout.gain must be {m}x{p}");
                Ok(k)
            }
            None => Ok(DMatrix::zeros(m, p)),
        }
    }

    pub fn offset_box(&self, model: &SystemModel) -> Result<Vec<(f64, f64)>> {
        match &self.rollout.offset_box {
            Some(b) => {
                ensure!(b.len() == model.input_dim(), "rollout.offset_box needs m axes");
                Ok(boxes(b))
            }
            None => Ok(model
                .input_box
                .iter()
                .map(|(lo, hi)| {
                    let (c, w) = (0.5 * (lo + hi), 0.125 * (hi - lo));
                    (c - w, c + w)
                })
                .collect()),
        }
    }
}

/// Reads a two-column `(nu, kappa)` CSV; a header row is optional.
pub fn read_kernel_csv(path: &Path) -> Result<KernelTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening kernel table {}", path.display()))?;
    let mut nu = Vec::new();
    let mut kappa = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        ensure!(record.len() == 2, "kernel table line {} needs two columns", line + 1);
        match (record[0].parse::<f64>(), record[1].parse::<f64>()) {
            (Ok(a), Ok(b)) => {
                nu.push(a);
                kappa.push(b);
            }
            _ if line == 0 => continue,
            _ => bail!("kernel table line {} is not numeric", line + 1),
        }
    }
    Ok(KernelTable::new(nu, kappa)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_with_defaults() {
        let cfg = Config::from_toml("[system]\nbuiltin = \"double-integrator-sinusoid\"\n").unwrap();
        let (model, x0) = cfg.model().unwrap();
        assert_eq!(model.state_dim(), 2);
        assert_eq!(x0.len(), 2);
        assert_eq!(cfg.experiment.trials, 200);
        assert_eq!(cfg.scheme.k_list, vec![8, 16, 32, 64, 128, 256]);
        assert!(cfg.noise_bounds(2).unwrap().is_zero());
    }

    #[test]
    fn inline_system() {
        let text = r#"
[system]
a_c = [[0.0, 1.0], [-1.0, -0.2]]
b_c = [[0.0], [1.0]]
state_box = [[-2.0, 2.0], [-2.0, 2.0]]
input_box = [[-1.0, 1.0]]
x0 = [0.5, 0.0]

[[system.atoms]]
kind = "sinusoid"
target = 1
coeff = 0.3
index = 0
freq = 2.0

[[system.atoms]]
kind = "monomial"
target = 0
coeff = -0.1
powers = [[0, 3]]

[noise]
upper = [0.1, 0.2]

[inputs]
kind = "list"
values = [[0.5], [-0.5]]
"#;
        let cfg = Config::from_toml(text).unwrap();
        let (model, x0) = cfg.model().unwrap();
        assert_eq!(model.g.atoms().len(), 2);
        assert_eq!(x0[0], 0.5);
        let bounds = cfg.noise_bounds(2).unwrap();
        assert_eq!(bounds.lower()[1], -0.2);
        let u = cfg.inputs(&model, 3).unwrap();
        assert_eq!(u[2][0], 0.5);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(Config::from_toml("[system]\nbuiltin = \"nope\"\n").unwrap().model().is_err());
        assert!(Config::from_toml("[system]\n[scheme]\nk_list = [8, 8]\n").is_err());
        assert!(Config::from_toml("[system]\n[oracle]\nlambda_scale = 2.0\n").is_err());
        assert!(Config::from_toml("[system]\nunknown = 1\n").is_err());
        let cfg = Config::from_toml("[system]\n[filter]\nfixed_h = 0.2\nrate_scale = 1.0\n").unwrap();
        assert!(cfg.filter_settings().is_err());
    }

    #[test]
    fn kernel_csv_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.csv");
        std::fs::write(&path, "nu,kappa\n-1,0\n0,1\n1,0\n").unwrap();
        let table = read_kernel_csv(&path).unwrap();
        assert_eq!(table.nodes(), &[-1.0, 0.0, 1.0]);
    }
}
