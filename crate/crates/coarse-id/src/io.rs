//! File formats: rollouts (CSV plus JSON header), bootstrap trials, estimates,
//! synthesis results and FIR coefficient dumps.

use crate::config::{mat_from_rows, rows_from_mat, Rows};
use anyhow::{bail, ensure, Context, Result};
use coarse_id_core::bootstrap::BootstrapTrial;
use coarse_id_core::linalg::Mat;
use coarse_id_core::lti::{NoiseSpec, StateFeedbackGain};
use coarse_id_core::synthesis::{Controller, FirResponse, SynthesisResult, SynthesisStatus};
use coarse_id_core::sysid::{ErrorSource, EstimateWithError, Rollout, RolloutData};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const FORMAT_VERSION: u32 = 1;

/// Writes `bytes` to `path` through a sibling temporary file and a rename, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().with_context(|| format!("{} has no file name", path.display()))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `"inf"`, `"-inf"` and `"nan"` spelled out; everything else in shortest
/// round-trip form.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    match s.trim() {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        "nan" | "" => Ok(f64::NAN),
        t => t.parse().with_context(|| format!("not a number: {t:?}")),
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

// ---------------------------------------------------------------- rollouts

/// JSON header stored next to a rollout CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutHeader {
    pub version: u32,
    pub n: usize,
    pub p: usize,
    #[serde(rename = "N")]
    pub rollouts: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seed: u64,
    pub sigma_u: f64,
    pub sigma_w: f64,
}

/// Header path for a rollout CSV: `data.csv` → `data.json`.
pub fn header_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Columns `rollout, t, x_1..x_n, u_1..u_p`; the row at `t = T` leaves the
/// inputs empty.
pub fn write_rollouts(csv_path: &Path, data: &RolloutData) -> Result<()> {
    let (n, p, t_len) = (data.n(), data.p(), data.horizon());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["rollout".to_string(), "t".to_string()];
    head.extend((1..=n).map(|i| format!("x_{i}")));
    head.extend((1..=p).map(|j| format!("u_{j}")));
    w.write_record(&head)?;
    for (l, r) in data.rollouts().iter().enumerate() {
        for t in 0..=t_len {
            let mut rec = vec![l.to_string(), t.to_string()];
            rec.extend((0..n).map(|i| fmt_f64(r.states[(i, t)])));
            rec.extend((0..p).map(|j| if t < t_len { fmt_f64(r.inputs[(j, t)]) } else { String::new() }));
            w.write_record(&rec)?;
        }
    }
    write_atomic(csv_path, &w.into_inner()?)?;
    let header = RolloutHeader {
        version: FORMAT_VERSION,
        n,
        p,
        rollouts: data.len(),
        horizon: t_len,
        seed: data.seed,
        sigma_u: data.noise.sigma_u,
        sigma_w: data.noise.sigma_w,
    };
    write_json(&header_path(csv_path), &header)
}

pub fn read_rollouts(csv_path: &Path) -> Result<RolloutData> {
    let header: RolloutHeader = read_json(&header_path(csv_path))?;
    ensure!(header.version == FORMAT_VERSION, "rollout format version {} is not supported", header.version);
    let (n, p, t_len) = (header.n, header.p, header.horizon);
    let mut rollouts: Vec<Rollout> =
        (0..header.rollouts).map(|_| Rollout { states: Mat::zeros(n, t_len + 1), inputs: Mat::zeros(p, t_len), noises: None }).collect();
    let mut rd = csv::Reader::from_path(csv_path).with_context(|| format!("opening {}", csv_path.display()))?;
    let mut seen = 0usize;
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: record {}", csv_path.display(), line + 1))?;
        ensure!(rec.len() == 2 + n + p, "{}: record {} has {} fields, expected {}", csv_path.display(), line + 1, rec.len(), 2 + n + p);
        let l: usize = rec[0].parse()?;
        let t: usize = rec[1].parse()?;
        ensure!(l < header.rollouts && t <= t_len, "{}: record {} is out of range", csv_path.display(), line + 1);
        for i in 0..n {
            rollouts[l].states[(i, t)] = parse_f64(&rec[2 + i])?;
        }
        if t < t_len {
            for j in 0..p {
                rollouts[l].inputs[(j, t)] = parse_f64(&rec[2 + n + j])?;
            }
        }
        seen += 1;
    }
    ensure!(
        seen == header.rollouts * (t_len + 1),
        "{}: expected {} records, found {seen}",
        csv_path.display(),
        header.rollouts * (t_len + 1)
    );
    Ok(RolloutData::new(n, p, t_len, rollouts, header.seed, NoiseSpec::new(header.sigma_u, header.sigma_w)?)?)
}

/// Per-trial bootstrap deviations: `trial, eps_A_tilde, eps_B_tilde`.
pub fn write_bootstrap_trials(path: &Path, trials: &[BootstrapTrial]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial", "eps_A_tilde", "eps_B_tilde"])?;
    for t in trials {
        w.write_record([t.trial.to_string(), fmt_f64(t.eps_a), fmt_f64(t.eps_b)])?;
    }
    write_atomic(path, &w.into_inner()?)
}

// --------------------------------------------------------------- estimates

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub version: u32,
    pub a_hat: Rows,
    pub b_hat: Rows,
    pub eps_a: f64,
    pub eps_b: f64,
    pub source: String,
}

impl EstimateRecord {
    pub fn from_estimate(est: &EstimateWithError) -> Self {
        Self {
            version: FORMAT_VERSION,
            a_hat: rows_from_mat(&est.a_hat),
            b_hat: rows_from_mat(&est.b_hat),
            eps_a: est.eps_a,
            eps_b: est.eps_b,
            source: est.source.label().to_string(),
        }
    }

    pub fn to_estimate(&self) -> Result<EstimateWithError> {
        ensure!(self.version == FORMAT_VERSION, "estimate format version {} is not supported", self.version);
        let source = match self.source.as_str() {
            "theory-independent" => ErrorSource::TheoryIndependent,
            "data-dependent" => ErrorSource::DataDependent,
            "bootstrap" => ErrorSource::Bootstrap,
            "oracle" => ErrorSource::Oracle,
            other => bail!("unknown error source {other:?}"),
        };
        Ok(EstimateWithError::new(
            mat_from_rows(&self.a_hat, "A_hat")?,
            mat_from_rows(&self.b_hat, "B_hat")?,
            self.eps_a,
            self.eps_b,
            source,
        )?)
    }
}

// ------------------------------------------------------- synthesis results

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ControllerRecord {
    Static { k: Rows },
    Fir { phi_x: Vec<Rows>, phi_u: Vec<Rows>, v: Rows },
}

impl ControllerRecord {
    pub fn from_controller(c: &Controller) -> Self {
        match c {
            Controller::Static(k) => ControllerRecord::Static { k: rows_from_mat(k.matrix()) },
            Controller::Fir(r) => ControllerRecord::Fir {
                phi_x: r.phi_x().iter().map(rows_from_mat).collect(),
                phi_u: r.phi_u().iter().map(rows_from_mat).collect(),
                v: rows_from_mat(r.v()),
            },
        }
    }

    pub fn to_controller(&self) -> Result<Controller> {
        Ok(match self {
            ControllerRecord::Static { k } => Controller::Static(StateFeedbackGain::new(mat_from_rows(k, "K")?)?),
            ControllerRecord::Fir { phi_x, phi_u, v } => {
                let px = phi_x.iter().map(|m| mat_from_rows(m, "Phi_x")).collect::<Result<Vec<_>>>()?;
                let pu = phi_u.iter().map(|m| mat_from_rows(m, "Phi_u")).collect::<Result<Vec<_>>>()?;
                Controller::Fir(FirResponse::new(px, pu, mat_from_rows(v, "V")?)?)
            }
        })
    }
}

/// JSON form of a synthesis result. Non-finite numbers become `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisRecord {
    pub version: u32,
    pub method: String,
    pub status: String,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub robust_upper_bound: Option<f64>,
    pub nominal_cost: Option<f64>,
    pub h_value: Option<f64>,
    pub evaluations: usize,
    pub controller: Option<ControllerRecord>,
}

impl SynthesisRecord {
    pub fn from_result(method: &str, r: &SynthesisResult) -> Self {
        Self {
            version: FORMAT_VERSION,
            method: method.to_string(),
            status: status_label(r.status).to_string(),
            gamma: finite(r.gamma_star),
            alpha: finite(r.alpha),
            robust_upper_bound: finite(r.robust_upper_bound),
            nominal_cost: finite(r.nominal_cost),
            h_value: finite(r.h_value),
            evaluations: r.evaluations.len(),
            controller: r.controller.as_ref().map(ControllerRecord::from_controller),
        }
    }
}

pub fn status_label(s: SynthesisStatus) -> &'static str {
    match s {
        SynthesisStatus::Feasible => "feasible",
        SynthesisStatus::Infeasible => "infeasible",
    }
}

/// Long-format coefficient dump: `block, k, row, col, value` with
/// `block ∈ {phi_x, phi_u, v}` and `k` 1-based (0 for `V`).
pub fn write_fir_csv(path: &Path, resp: &FirResponse) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["block", "k", "row", "col", "value"])?;
    let mut dump = |name: &str, k: usize, m: &Mat| -> Result<()> {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                w.write_record([name.to_string(), k.to_string(), i.to_string(), j.to_string(), fmt_f64(m[(i, j)])])?;
            }
        }
        Ok(())
    };
    for (k, m) in resp.phi_x().iter().enumerate() {
        dump("phi_x", k + 1, m)?;
    }
    for (k, m) in resp.phi_u().iter().enumerate() {
        dump("phi_u", k + 1, m)?;
    }
    dump("v", 0, resp.v())?;
    write_atomic(path, &w.into_inner()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn special_values_round_trip() {
        for v in [f64::INFINITY, f64::NEG_INFINITY, 0.1, -3.5e-12] {
            assert_eq!(parse_f64(&fmt_f64(v)).unwrap(), v);
        }
        assert!(parse_f64(&fmt_f64(f64::NAN)).unwrap().is_nan());
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }
}
