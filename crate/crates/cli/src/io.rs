//! CSV readers/writers and the run manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use lbmpc_core::lpr_filter::EstimateLedger;
use lbmpc_core::system_sim::Trajectory;
use lbmpc_core::DVector;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// Column names `prefix_1..prefix_n`, or just `prefix` when `n == 1` and
/// `bare_single` is set.
pub fn indexed(prefix: &str, n: usize, bare_single: bool) -> Vec<String> {
    if n == 1 && bare_single {
        vec![prefix.to_string()]
    } else {
        (1..=n).map(|i| format!("{prefix}_{i}")).collect()
    }
}

pub fn write_trajectory<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let p = traj.states[0].len();
    let m = traj.inputs[0].len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(indexed("u_held", m, true));
    header.extend(indexed("x", p, false));
    header.extend(indexed("xi", p, false));
    w.write_record(&header)?;
    for i in 0..traj.states.len() {
        let mut row = vec![traj.times[i].to_string()];
        row.extend(traj.input_at_sample(i).iter().map(f64::to_string));
        row.extend(traj.states[i].iter().map(f64::to_string));
        row.extend(traj.measurements[i].iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Contents of a measurement or trajectory CSV.
#[derive(Debug, Clone)]
pub struct MeasurementTable {
    pub times: Vec<f64>,
    pub xi: Vec<DVector<f64>>,
    /// Per-sample held inputs, when the file has `u_held` columns.
    pub u_held: Option<Vec<DVector<f64>>>,
    /// True states, when the file has `x_` columns.
    pub x: Option<Vec<DVector<f64>>>,
}

fn columns(headers: &csv::StringRecord, prefix: &str) -> Vec<usize> {
    let bare = headers.iter().position(|h| h == prefix);
    let mut idx: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(col, h)| {
            h.strip_prefix(prefix)
                .and_then(|rest| rest.strip_prefix('_'))
                .and_then(|n| n.parse::<usize>().ok())
                .map(|n| (n, col))
        })
        .collect();
    idx.sort();
    match (bare, idx.is_empty()) {
        (Some(col), true) => vec![col],
        _ => idx.into_iter().map(|(_, c)| c).collect(),
    }
}

pub fn read_measurements(path: &Path) -> Result<MeasurementTable> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let t_col = headers.iter().position(|h| h == "t").context("measurement CSV needs a 't' column")?;
    let xi_cols = columns(&headers, "xi");
    ensure!(!xi_cols.is_empty(), "measurement CSV needs xi_1..xi_p columns");
    let u_cols = columns(&headers, "u_held");
    let x_cols = columns(&headers, "x");
    let mut table = MeasurementTable {
        times: Vec::new(),
        xi: Vec::new(),
        u_held: (!u_cols.is_empty()).then(Vec::new),
        x: (!x_cols.is_empty()).then(Vec::new),
    };
    let parse = |rec: &csv::StringRecord, cols: &[usize], line: usize| -> Result<DVector<f64>> {
        let vals = cols
            .iter()
            .map(|&c| {
                rec.get(c)
                    .unwrap_or("")
                    .trim()
                    .parse::<f64>()
                    .with_context(|| format!("line {line}: bad number in column {}", headers.get(c).unwrap_or("?")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(vals))
    };
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        table.times.push(parse(&rec, &[t_col], line)?[0]);
        table.xi.push(parse(&rec, &xi_cols, line)?);
        if let Some(u) = &mut table.u_held {
            u.push(parse(&rec, &u_cols, line)?);
        }
        if let Some(x) = &mut table.x {
            x.push(parse(&rec, &x_cols, line)?);
        }
    }
    ensure!(!table.times.is_empty(), "{} has no samples", path.display());
    Ok(table)
}

impl MeasurementTable {
    /// Checks the two-rate grid and returns the number of windows.
    pub fn windows(&self, k: usize, t_s: f64) -> Result<usize> {
        let n = self.times.len();
        if n < k + 1 || !(n - 1).is_multiple_of(k) {
            bail!(
                "incomplete window: {n} samples do not form whole windows of {} samples",
                k + 1
            );
        }
        for (i, t) in self.times.iter().enumerate() {
            let want = i as f64 * t_s;
            ensure!(
                (t - want).abs() <= 1e-9 * want.abs().max(1.0),
                "sample {i} at t = {t} is off the measurement grid (expected {want})"
            );
        }
        Ok((n - 1) / k)
    }

    /// Held input of each window, read at the window's first sample.
    pub fn window_inputs(&self, k: usize) -> Option<Vec<DVector<f64>>> {
        let u = self.u_held.as_ref()?;
        Some((0..(u.len() - 1) / k).map(|m| u[m * k].clone()).collect())
    }
}

/// Rows `m, t, xhat_1..xhat_p, h_used_left, h_used_right`; with `p > 1`
/// the bandwidth columns are per component.
pub fn write_estimates<W: Write>(ledger: &EstimateLedger, t_u: f64, out: W) -> Result<()> {
    let p = ledger.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["m".to_string(), "t".to_string()];
    header.extend(indexed("xhat", p, false));
    header.extend(indexed("h_used_left", p, true));
    header.extend(indexed("h_used_right", p, true));
    w.write_record(&header)?;
    let opt = |v: &Option<Vec<f64>>| -> Vec<String> {
        match v {
            Some(h) => h.iter().map(f64::to_string).collect(),
            None => vec![String::new(); p],
        }
    };
    for (m, e) in ledger.entries().iter().enumerate() {
        let est = e.saturated.as_ref().unwrap_or(&e.measurement);
        let mut row = vec![m.to_string(), (m as f64 * t_u).to_string()];
        row.extend(est.iter().map(f64::to_string));
        row.extend(opt(&e.h_left));
        row.extend(opt(&e.h_right));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `xhat_*` columns of an estimate CSV.
pub fn read_estimates(path: &Path) -> Result<Vec<DVector<f64>>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let cols = columns(&headers, "xhat");
    ensure!(!cols.is_empty(), "estimate CSV needs xhat_1..xhat_p columns");
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let vals = cols
            .iter()
            .map(|&c| Ok(rec.get(c).unwrap_or("").parse::<f64>()?))
            .collect::<Result<Vec<_>>>()?;
        out.push(DVector::from_vec(vals));
    }
    Ok(out)
}

/// Writes rows of displayable cells under a fixed header.
pub fn write_rows<W: Write>(out: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything needed to reproduce a run; no timestamps or host data.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub lbmpc_cli_version: String,
    pub lbmpc_core_version: String,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config_bytes: &[u8], seed: Option<u64>, trials: Option<usize>) -> Self {
        Self {
            command: command.into(),
            config_sha256: sha256_hex(config_bytes),
            seed,
            trials,
            lbmpc_cli_version: env!("CARGO_PKG_VERSION").into(),
            lbmpc_core_version: lbmpc_core::VERSION.into(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut f = create(&dir.join("run_manifest.toml"))?;
        f.write_all(toml::to_string(self)?.as_bytes())?;
        Ok(())
    }
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(toml::to_string(value)?.as_bytes())?;
    Ok(())
}
