//! Reference-versus-synthetic comparison: normalized covariance deltas,
//! a table of ensemble-averaged metrics, and C-CDF discrepancies.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data_model::{read_json, write_file, write_json, Ensemble};
use crate::error::{Error, Result};
use crate::estimation::{flattened_log_parts, normalize_covariance, sample_covariance};
use crate::metrics::{ccdf, compute_metrics, MetricAverages, MetricsReport, NoiseModel, TxSpec};

/// Probability levels used for the horizontal C-CDF distance.
pub const QUANTILE_LEVELS: usize = 99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovDelta {
    pub max_abs: f64,
    pub rmse: f64,
}

/// Entrywise max-abs and RMS difference of two equally sized matrices.
pub fn compare_covariance(r_ref: &DMatrix<f64>, r_sim: &DMatrix<f64>) -> Result<CovDelta> {
    if r_ref.shape() != r_sim.shape() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", r_ref.shape(), r_sim.shape())));
    }
    let diff = r_ref - r_sim;
    let max_abs = diff.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let rmse = (diff.iter().map(|v| v * v).sum::<f64>() / diff.len() as f64).sqrt();
    Ok(CovDelta { max_abs, rmse })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcdfDelta {
    pub max_vertical_prob: f64,
    pub max_horizontal_bps: f64,
}

/// Empirical quantile of sorted data, linear interpolation between order
/// statistics at position `(n − 1)·p`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

pub fn compare_ccdf(ref_values: &[f64], sim_values: &[f64]) -> Result<CcdfDelta> {
    if ref_values.is_empty() || sim_values.is_empty() {
        return Err(Error::EmptyInput("ccdf comparison values"));
    }
    // Both C-CDFs only jump at sample values, so the merged sample set is an exact grid.
    let grid: Vec<f64> = ref_values.iter().chain(sim_values).copied().collect();
    let a = ccdf(ref_values, &grid)?;
    let b = ccdf(sim_values, &grid)?;
    let max_vertical_prob = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let (sr, ss) = (sorted(ref_values), sorted(sim_values));
    let max_horizontal_bps = (1..=QUANTILE_LEVELS)
        .map(|i| i as f64 / 100.0)
        .fold(0.0f64, |m, p| m.max((quantile(&sr, p) - quantile(&ss, p)).abs()));
    Ok(CcdfDelta { max_vertical_prob, max_horizontal_bps })
}

/// Ensemble averages in reporting units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub acg_db: f64,
    pub rms_ds_us: f64,
    pub cb_khz: f64,
    pub capacity_gbps: f64,
}

impl From<&MetricAverages> for TableRow {
    fn from(a: &MetricAverages) -> Self {
        TableRow {
            acg_db: a.acg_db,
            rms_ds_us: a.rms_ds_s * 1e6,
            cb_khz: a.cb_hz * 1e-3,
            capacity_gbps: a.capacity_bps * 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub reference: TableRow,
    pub simulated: TableRow,
    /// `(sim − ref)/|ref|` per column; ACG is compared in dB.
    pub relative_diff: TableRow,
    pub absolute_diff: TableRow,
}

fn rel(r: f64, s: f64) -> f64 {
    if r == 0.0 {
        if s == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (s - r) / r.abs()
    }
}

pub fn summary_table(ref_metrics: &MetricsReport, sim_metrics: &MetricsReport) -> SummaryTable {
    let r = TableRow::from(&ref_metrics.averages);
    let s = TableRow::from(&sim_metrics.averages);
    SummaryTable {
        reference: r,
        simulated: s,
        relative_diff: TableRow {
            acg_db: rel(r.acg_db, s.acg_db),
            rms_ds_us: rel(r.rms_ds_us, s.rms_ds_us),
            cb_khz: rel(r.cb_khz, s.cb_khz),
            capacity_gbps: rel(r.capacity_gbps, s.capacity_gbps),
        },
        absolute_diff: TableRow {
            acg_db: s.acg_db - r.acg_db,
            rms_ds_us: s.rms_ds_us - r.rms_ds_us,
            cb_khz: s.cb_khz - r.cb_khz,
            capacity_gbps: s.capacity_gbps - r.capacity_gbps,
        },
    }
}

/// Upper bounds checked by `validate`; absent fields are report-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amp_cov_max_abs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_cov_max_abs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_vertical_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_horizontal_bps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acg_abs_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rms_ds_abs_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cb_rel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_rel: Option<f64>,
}

impl Default for Thresholds {
    /// ACG within ±2 dB and RMS-DS within ±0.05 µs.
    fn default() -> Self {
        Thresholds {
            amp_cov_max_abs: None,
            phase_cov_max_abs: None,
            max_vertical_prob: None,
            max_horizontal_bps: None,
            acg_abs_db: Some(2.0),
            rms_ds_abs_us: Some(0.05),
            cb_rel: None,
            capacity_rel: None,
        }
    }
}

impl Thresholds {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub amp_cov_delta: CovDelta,
    pub phase_cov_delta: CovDelta,
    pub table: SummaryTable,
    pub ccdf_delta: CcdfDelta,
    pub checks: Vec<ThresholdCheck>,
    pub passed: bool,
    /// Free-form provenance: seeds, input files, method notes.
    pub config: serde_json::Value,
}

fn normalized_covs(ens: &Ensemble) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (amp, phase) = flattened_log_parts(&ens.to_mimo())?;
    let (_, ca) = sample_covariance(&amp)?;
    let (_, cp) = sample_covariance(&phase)?;
    Ok((normalize_covariance(&ca), normalize_covariance(&cp)))
}

/// Metrics of both ensembles plus the correlation structure comparison.
pub struct ValidationInputs {
    pub ref_metrics: MetricsReport,
    pub sim_metrics: MetricsReport,
    pub amp_cov_delta: CovDelta,
    pub phase_cov_delta: CovDelta,
}

pub fn evaluate(
    reference: &Ensemble,
    simulated: &Ensemble,
    tx: &TxSpec,
    noise: &NoiseModel,
) -> Result<ValidationInputs> {
    reference.grid().ensure_compatible(simulated.grid())?;
    let (rm, sm) = (reference.to_mimo(), simulated.to_mimo());
    if (rm.n_r(), rm.n_t()) != (sm.n_r(), sm.n_t()) {
        return Err(Error::DimensionMismatch(format!(
            "reference is {}x{}, simulated is {}x{}",
            rm.n_r(),
            rm.n_t(),
            sm.n_r(),
            sm.n_t()
        )));
    }
    let (ra, rp) = normalized_covs(reference)?;
    let (sa, sp) = normalized_covs(simulated)?;
    Ok(ValidationInputs {
        ref_metrics: compute_metrics(&rm, tx, noise)?,
        sim_metrics: compute_metrics(&sm, tx, noise)?,
        amp_cov_delta: compare_covariance(&ra, &sa)?,
        phase_cov_delta: compare_covariance(&rp, &sp)?,
    })
}

impl ValidationReport {
    pub fn build(inputs: &ValidationInputs, thresholds: &Thresholds, config: serde_json::Value) -> Result<Self> {
        let table = summary_table(&inputs.ref_metrics, &inputs.sim_metrics);
        let ccdf_delta = compare_ccdf(&inputs.ref_metrics.capacity_bps, &inputs.sim_metrics.capacity_bps)?;
        let mut checks = Vec::new();
        let mut check = |name: &str, value: f64, limit: Option<f64>| {
            if let Some(limit) = limit {
                checks.push(ThresholdCheck { name: name.into(), value, limit, passed: value <= limit });
            }
        };
        check("amp_cov_max_abs", inputs.amp_cov_delta.max_abs, thresholds.amp_cov_max_abs);
        check("phase_cov_max_abs", inputs.phase_cov_delta.max_abs, thresholds.phase_cov_max_abs);
        check("max_vertical_prob", ccdf_delta.max_vertical_prob, thresholds.max_vertical_prob);
        check("max_horizontal_bps", ccdf_delta.max_horizontal_bps, thresholds.max_horizontal_bps);
        check("acg_abs_db", table.absolute_diff.acg_db.abs(), thresholds.acg_abs_db);
        check("rms_ds_abs_us", table.absolute_diff.rms_ds_us.abs(), thresholds.rms_ds_abs_us);
        check("cb_rel", table.relative_diff.cb_khz.abs(), thresholds.cb_rel);
        check("capacity_rel", table.relative_diff.capacity_gbps.abs(), thresholds.capacity_rel);
        let passed = checks.iter().all(|c| c.passed);
        Ok(ValidationReport {
            amp_cov_delta: inputs.amp_cov_delta,
            phase_cov_delta: inputs.phase_cov_delta,
            table,
            ccdf_delta,
            checks,
            passed,
            config,
        })
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let t = &self.table;
        let _ =
            writeln!(s, "{:<12} {:>10} {:>10} {:>12} {:>10}", "", "ACG [dB]", "RMS-DS [us]", "CB0.9 [kHz]", "C [Gbps]");
        for (name, r) in [("reference", &t.reference), ("simulated", &t.simulated)] {
            let _ = writeln!(
                s,
                "{:<12} {:>10.2} {:>11.3} {:>12.2} {:>10.3}",
                name, r.acg_db, r.rms_ds_us, r.cb_khz, r.capacity_gbps
            );
        }
        let d = &t.relative_diff;
        let _ = writeln!(
            s,
            "{:<12} {:>9.2}% {:>10.2}% {:>11.2}% {:>9.2}%",
            "rel. diff",
            100.0 * d.acg_db,
            100.0 * d.rms_ds_us,
            100.0 * d.cb_khz,
            100.0 * d.capacity_gbps
        );
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "amplitude covariance  max_abs {:.4}  rmse {:.4}",
            self.amp_cov_delta.max_abs, self.amp_cov_delta.rmse
        );
        let _ = writeln!(
            s,
            "phase covariance      max_abs {:.4}  rmse {:.4}",
            self.phase_cov_delta.max_abs, self.phase_cov_delta.rmse
        );
        let _ = writeln!(
            s,
            "capacity C-CDF        vertical {:.4}  horizontal {:.4} Gbps",
            self.ccdf_delta.max_vertical_prob,
            self.ccdf_delta.max_horizontal_bps * 1e-9
        );
        if !self.checks.is_empty() {
            let _ = writeln!(s);
        }
        for c in &self.checks {
            let verdict = if c.passed { "ok" } else { "FAIL" };
            let _ = writeln!(s, "{:<20} {:>14.6} <= {:<14.6} {verdict}", c.name, c.value, c.limit);
        }
        let _ = writeln!(s, "\nresult: {}", if self.passed { "pass" } else { "fail" });
        s
    }

    /// Writes `report.json`, `report.txt`, `ccdf.csv` and `covariance.csv` into `dir`.
    pub fn write(&self, inputs: &ValidationInputs, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("report.json"), self)?;
        write_file(&dir.join("report.txt"), self.to_text().as_bytes())?;
        write_file(&dir.join("ccdf.csv"), ccdf_csv(&inputs.ref_metrics, &inputs.sim_metrics).as_bytes())?;
        let cov = format!(
            "quantity,max_abs,rmse\namplitude,{},{}\nphase,{},{}\n",
            self.amp_cov_delta.max_abs,
            self.amp_cov_delta.rmse,
            self.phase_cov_delta.max_abs,
            self.phase_cov_delta.rmse
        );
        write_file(&dir.join("covariance.csv"), cov.as_bytes())
    }
}

/// Capacity C-CDF of both ensembles on the merged, sorted sample grid.
pub fn ccdf_csv(ref_metrics: &MetricsReport, sim_metrics: &MetricsReport) -> String {
    let mut grid = sorted(&[ref_metrics.capacity_bps.as_slice(), sim_metrics.capacity_bps.as_slice()].concat());
    grid.dedup();
    let mut out = String::from("capacity_bps,ccdf_reference,ccdf_simulated\n");
    if let (Ok(a), Ok(b)) = (ccdf(&ref_metrics.capacity_bps, &grid), ccdf(&sim_metrics.capacity_bps, &grid)) {
        for ((g, x), y) in grid.iter().zip(a).zip(b) {
            let _ = writeln!(out, "{g},{x},{y}");
        }
    }
    out
}

/// Full comparison of two ensembles under one transmit/noise configuration.
pub fn validate(
    reference: &Ensemble,
    simulated: &Ensemble,
    tx: &TxSpec,
    noise: &NoiseModel,
    thresholds: &Thresholds,
    config: serde_json::Value,
) -> Result<(ValidationReport, ValidationInputs)> {
    let inputs = evaluate(reference, simulated, tx, noise)?;
    Ok((ValidationReport::build(&inputs, thresholds, config)?, inputs))
}
