//! Channel statistics: average channel gain, RMS delay spread, coherence
//! bandwidth, MIMO capacity under correlated noise, and the empirical C-CDF.
//!
//! Definitions used throughout:
//!
//! * ACG: `10·log10(mean_k |H(f_k)|²)`; for MIMO the power mean also runs
//!   over all (rx, tx) links of a realization.
//! * RMS delay spread: `h = IDFT(H)` (rectangular window), `p[n] = |h[n]|²`,
//!   delays `t_n = n/(M·Δf)`; second central moment of `p` over `t`.
//! * Coherence bandwidth at level `c`: `ρ(Δ) = |mean_k H_k·H*_{k+Δ}| /
//!   mean_k |H_k|²`, the numerator averaged over the `M − Δ` overlapping
//!   pairs; the first lag with `ρ < c`, linearly interpolated, times `Δf`.
//!   The full band is returned when `ρ` never falls below `c`.
//! * Capacity: `Δf·Σ_k log2 det(I + (P_k/N_T)·R_w(f_k)⁻¹·H_k·H_kᴴ)` with equal
//!   power per transmit port.
//!
//! RMS-DS and CB of a MIMO realization are averages over its links.

use std::f64::consts::LN_2;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::data_model::{read_json, write_json, ChannelEnsemble, FrequencyGrid, MimoChannelEnsemble};
use crate::error::{Error, Result};
use crate::estimation::max_asymmetry;

pub const DEFAULT_TX_PSD_DBM_PER_HZ: f64 = -55.0;
pub const DEFAULT_NOISE_PSD_DBM_PER_HZ: f64 = -110.0;
pub const DEFAULT_CB_LEVEL: f64 = 0.9;

/// dBm/Hz to W/Hz.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Per-receive-mode noise PSD plus a frequency-independent correlation
/// between receive modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseRepr", into = "NoiseRepr")]
pub struct NoiseModel {
    grid: Option<FrequencyGrid>,
    psd_dbm_per_hz: Vec<Vec<f64>>,
    rx_correlation: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct NoiseRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<FrequencyGrid>,
    psd_dbm_per_hz: Vec<Vec<f64>>,
    rx_correlation: Vec<Vec<f64>>,
}

impl TryFrom<NoiseRepr> for NoiseModel {
    type Error = Error;

    fn try_from(r: NoiseRepr) -> Result<Self> {
        let n = r.rx_correlation.len();
        if r.rx_correlation.iter().any(|row| row.len() != n) {
            return Err(Error::DimensionMismatch("rx_correlation must be square".into()));
        }
        let corr = DMatrix::from_fn(n, n, |i, j| r.rx_correlation[i][j]);
        NoiseModel::new(r.grid, r.psd_dbm_per_hz, corr)
    }
}

impl From<NoiseModel> for NoiseRepr {
    fn from(m: NoiseModel) -> Self {
        let n = m.rx_correlation.nrows();
        NoiseRepr {
            grid: m.grid,
            psd_dbm_per_hz: m.psd_dbm_per_hz,
            rx_correlation: (0..n).map(|i| m.rx_correlation.row(i).iter().copied().collect()).collect(),
        }
    }
}

impl NoiseModel {
    /// `psd_dbm_per_hz[rx]` holds one value (white) when `grid` is `None`,
    /// otherwise one value per grid sample.
    pub fn new(
        grid: Option<FrequencyGrid>,
        psd_dbm_per_hz: Vec<Vec<f64>>,
        rx_correlation: DMatrix<f64>,
    ) -> Result<Self> {
        let n_r = psd_dbm_per_hz.len();
        if n_r == 0 {
            return Err(Error::InvalidArgument("noise model needs at least one receive mode".into()));
        }
        if rx_correlation.shape() != (n_r, n_r) {
            return Err(Error::DimensionMismatch(format!(
                "{n_r} PSD vectors but rx_correlation is {:?}",
                rx_correlation.shape()
            )));
        }
        let want = grid.map_or(1, |g| g.len());
        if let Some(v) = psd_dbm_per_hz.iter().find(|v| v.len() != want) {
            return Err(Error::DimensionMismatch(format!("noise PSD vector has {} values, expected {want}", v.len())));
        }
        if psd_dbm_per_hz.iter().flatten().chain(rx_correlation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("noise model".into()));
        }
        let asym = max_asymmetry(&rx_correlation);
        if asym > 1e-10 {
            return Err(Error::NotSymmetric(asym));
        }
        if (0..n_r).any(|i| (rx_correlation[(i, i)] - 1.0).abs() > 1e-10) {
            return Err(Error::InvalidCorrelation("rx_correlation diagonal must be 1".into()));
        }
        let min_eig = nalgebra::SymmetricEigen::new(rx_correlation.clone()).eigenvalues.min();
        if min_eig < -1e-10 * n_r as f64 {
            return Err(Error::InvalidCorrelation(format!("rx_correlation is not PSD (eigenvalue {min_eig:e})")));
        }
        Ok(NoiseModel { grid, psd_dbm_per_hz, rx_correlation })
    }

    /// Same white level on every mode, identity correlation.
    pub fn white(n_r: usize, psd_dbm_per_hz: f64) -> Self {
        NoiseModel::new(None, vec![vec![psd_dbm_per_hz]; n_r], DMatrix::identity(n_r, n_r))
            .expect("white noise model is valid")
    }

    pub fn white_per_mode(levels_dbm_per_hz: Vec<f64>, rx_correlation: DMatrix<f64>) -> Result<Self> {
        NoiseModel::new(None, levels_dbm_per_hz.into_iter().map(|v| vec![v]).collect(), rx_correlation)
    }

    /// Default placeholder: −110 dBm/Hz white, uncorrelated.
    pub fn default_for(n_r: usize) -> Self {
        Self::white(n_r, DEFAULT_NOISE_PSD_DBM_PER_HZ)
    }

    pub fn n_r(&self) -> usize {
        self.psd_dbm_per_hz.len()
    }

    pub fn grid(&self) -> Option<&FrequencyGrid> {
        self.grid.as_ref()
    }

    pub fn rx_correlation(&self) -> &DMatrix<f64> {
        &self.rx_correlation
    }

    fn psd_watts(&self, rx: usize, k: usize) -> f64 {
        let v = &self.psd_dbm_per_hz[rx];
        dbm_to_watts(if v.len() == 1 { v[0] } else { v[k] })
    }

    /// Noise covariance (W/Hz) at tone `k`: `√p_i·√p_j·C_ij`.
    pub fn covariance_at(&self, k: usize) -> DMatrix<f64> {
        let n = self.n_r();
        let sd: Vec<f64> = (0..n).map(|i| self.psd_watts(i, k).sqrt()).collect();
        DMatrix::from_fn(n, n, |i, j| sd[i] * sd[j] * self.rx_correlation[(i, j)])
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TxPsd {
    Flat(f64),
    PerFrequency(Vec<f64>),
}

/// Transmit PSD mask; power is split equally over the transmit ports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxSpec {
    pub psd_dbm_per_hz: TxPsd,
}

impl Default for TxSpec {
    fn default() -> Self {
        TxSpec { psd_dbm_per_hz: TxPsd::Flat(DEFAULT_TX_PSD_DBM_PER_HZ) }
    }
}

impl TxSpec {
    pub fn flat(dbm_per_hz: f64) -> Self {
        TxSpec { psd_dbm_per_hz: TxPsd::Flat(dbm_per_hz) }
    }

    fn check(&self, grid: &FrequencyGrid) -> Result<()> {
        match &self.psd_dbm_per_hz {
            TxPsd::Flat(v) if !v.is_finite() => Err(Error::NonFiniteInput("transmit PSD".into())),
            TxPsd::PerFrequency(v) if v.len() != grid.len() => {
                Err(Error::GridMismatch(format!("transmit mask has {} values, grid has {}", v.len(), grid.len())))
            }
            TxPsd::PerFrequency(v) if v.iter().any(|x| !x.is_finite()) => {
                Err(Error::NonFiniteInput("transmit PSD".into()))
            }
            _ => Ok(()),
        }
    }

    /// Total transmit PSD (W/Hz) at tone `k`.
    pub fn psd_watts(&self, k: usize) -> f64 {
        match &self.psd_dbm_per_hz {
            TxPsd::Flat(v) => dbm_to_watts(*v),
            TxPsd::PerFrequency(v) => dbm_to_watts(v[k]),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Average channel gain of one CFR, dB.
pub fn acg_link(h: &[Complex64]) -> f64 {
    10.0 * (h.iter().map(|v| v.norm_sqr()).sum::<f64>() / h.len() as f64).log10()
}

/// Per-realization ACG (dB).
pub fn acg(ens: &ChannelEnsemble) -> Vec<f64> {
    ens.rows().map(acg_link).collect()
}

/// Per-realization ACG (dB), the power mean running over every link.
pub fn acg_mimo(mimo: &MimoChannelEnsemble) -> Vec<f64> {
    (0..mimo.n_meas()).map(|r| acg_link(mimo.realization(r))).collect()
}

/// Optional tap floor for the delay spread: taps weaker than
/// `floor_db` below the strongest tap are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DelaySpreadOptions {
    pub floor_db: Option<f64>,
}

/// Reusable inverse-DFT plan for a fixed number of samples.
#[derive(Clone)]
pub struct DelayProfiler {
    fft: Arc<dyn Fft<f64>>,
    delta_t: f64,
    options: DelaySpreadOptions,
}

impl DelayProfiler {
    pub fn new(grid: &FrequencyGrid, options: DelaySpreadOptions) -> Self {
        let m = grid.len();
        let fft = FftPlanner::new().plan_fft_inverse(m);
        DelayProfiler { fft, delta_t: 1.0 / (m as f64 * grid.delta_f()), options }
    }

    /// Impulse response `h[n] = (1/M)·Σ_k H_k·e^{j2πkn/M}`.
    pub fn impulse_response(&self, cfr: &[Complex64]) -> Vec<Complex64> {
        let mut buf = cfr.to_vec();
        self.fft.process(&mut buf);
        let scale = 1.0 / cfr.len() as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
        buf
    }

    /// RMS delay spread (s) of one CFR.
    pub fn rms_delay_spread(&self, cfr: &[Complex64]) -> f64 {
        let h = self.impulse_response(cfr);
        let mut p: Vec<f64> = h.iter().map(|v| v.norm_sqr()).collect();
        if let Some(floor_db) = self.options.floor_db {
            let peak = p.iter().copied().fold(0.0, f64::max);
            let threshold = peak * 10f64.powf(-floor_db.abs() / 10.0);
            p.iter_mut().filter(|v| **v < threshold).for_each(|v| *v = 0.0);
        }
        delay_spread_of_profile(&p, self.delta_t)
    }
}

/// Second central moment of a power-delay profile sampled every `delta_t`.
pub fn delay_spread_of_profile(p: &[f64], delta_t: f64) -> f64 {
    let total: f64 = p.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let mean = p.iter().enumerate().map(|(n, v)| n as f64 * v).sum::<f64>() / total;
    let var = p.iter().enumerate().map(|(n, v)| (n as f64 - mean).powi(2) * v).sum::<f64>() / total;
    var.max(0.0).sqrt() * delta_t
}

fn physical_grid(ens: &ChannelEnsemble) -> Result<&FrequencyGrid> {
    if ens.flat_axis().is_some() {
        return Err(Error::DegenerateGrid("ensemble axis is a flattened MIMO index, not frequency".into()));
    }
    Ok(ens.grid())
}

/// Per-realization RMS delay spread (s).
pub fn rms_delay_spread(ens: &ChannelEnsemble) -> Result<Vec<f64>> {
    rms_delay_spread_with(ens, DelaySpreadOptions::default())
}

pub fn rms_delay_spread_with(ens: &ChannelEnsemble, options: DelaySpreadOptions) -> Result<Vec<f64>> {
    let profiler = DelayProfiler::new(physical_grid(ens)?, options);
    Ok(ens.rows().collect::<Vec<_>>().par_iter().map(|row| profiler.rms_delay_spread(row)).collect())
}

/// Per-realization RMS delay spread (s), averaged over links.
pub fn rms_delay_spread_mimo(mimo: &MimoChannelEnsemble, options: DelaySpreadOptions) -> Vec<f64> {
    let profiler = DelayProfiler::new(mimo.grid(), options);
    per_realization_link_mean(mimo, |link| profiler.rms_delay_spread(link))
}

fn per_realization_link_mean(mimo: &MimoChannelEnsemble, f: impl Fn(&[Complex64]) -> f64 + Sync) -> Vec<f64> {
    let m = mimo.m_samples();
    let links = (mimo.n_r() * mimo.n_t()) as f64;
    (0..mimo.n_meas())
        .into_par_iter()
        .map(|r| mimo.realization(r).chunks_exact(m).map(&f).sum::<f64>() / links)
        .collect()
}

/// Frequency autocorrelation magnitude at integer lag `lag`.
pub fn frequency_autocorrelation(cfr: &[Complex64], lag: usize) -> f64 {
    let m = cfr.len();
    let power = cfr.iter().map(|v| v.norm_sqr()).sum::<f64>() / m as f64;
    if power == 0.0 || lag >= m {
        return 0.0;
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..m - lag {
        acc += cfr[k] * cfr[k + lag].conj();
    }
    (acc / (m - lag) as f64).norm() / power
}

/// Coherence bandwidth (Hz) of one CFR at correlation `level`.
pub fn coherence_bandwidth_link(cfr: &[Complex64], delta_f: f64, level: f64) -> f64 {
    let m = cfr.len();
    let mut prev = 1.0;
    for lag in 1..m {
        let rho = frequency_autocorrelation(cfr, lag);
        if rho < level {
            let frac = if prev > rho { (prev - level) / (prev - rho) } else { 1.0 };
            return ((lag - 1) as f64 + frac) * delta_f;
        }
        prev = rho;
    }
    (m - 1) as f64 * delta_f
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("coherence level must be in (0, 1), got {level}")));
    }
    Ok(())
}

/// Per-realization coherence bandwidth (Hz).
pub fn coherence_bandwidth(ens: &ChannelEnsemble, level: f64) -> Result<Vec<f64>> {
    check_level(level)?;
    let df = physical_grid(ens)?.delta_f();
    Ok(ens.rows().collect::<Vec<_>>().par_iter().map(|row| coherence_bandwidth_link(row, df, level)).collect())
}

/// Per-realization coherence bandwidth (Hz), averaged over links.
pub fn coherence_bandwidth_mimo(mimo: &MimoChannelEnsemble, level: f64) -> Result<Vec<f64>> {
    check_level(level)?;
    let df = mimo.grid().delta_f();
    Ok(per_realization_link_mean(mimo, |link| coherence_bandwidth_link(link, df, level)))
}

/// `log2 det(I + snr·G·Gᴴ)` for a whitened channel `G`.
fn log2_det_identity_plus(g: &DMatrix<Complex64>, snr: f64) -> f64 {
    let n = g.nrows();
    let gram = g * g.adjoint() * Complex64::new(snr, 0.0);
    let a = DMatrix::<Complex64>::identity(n, n) + gram;
    let l = Cholesky::new(a).expect("I + PSD is positive definite");
    2.0 * l.l_dirty().diagonal().iter().map(|d| d.re.ln()).sum::<f64>() / LN_2
}

/// Per-realization capacity (bit/s).
pub fn mimo_capacity(mimo: &MimoChannelEnsemble, tx: &TxSpec, noise: &NoiseModel) -> Result<Vec<f64>> {
    let grid = mimo.grid();
    if noise.n_r() != mimo.n_r() {
        return Err(Error::DimensionMismatch(format!(
            "noise model has {} receive modes, ensemble has {}",
            noise.n_r(),
            mimo.n_r()
        )));
    }
    if let Some(g) = noise.grid() {
        g.ensure_compatible(grid)?;
    }
    tx.check(grid)?;
    let m = grid.len();
    // Lower Cholesky factor L of each tone's noise covariance; whitening is L⁻¹·H.
    let tones = if noise.grid().is_some() { m } else { 1 };
    let whiteners = (0..tones)
        .map(|k| {
            let cov = noise.covariance_at(k);
            let scale = cov.diagonal().max();
            let l = Cholesky::new(cov.map(|v| Complex64::new(v, 0.0))).map(|c| c.l());
            // Pivots at rounding level mean the covariance is numerically singular.
            let floor = scale * f64::EPSILON * (4 * mimo.n_r()) as f64;
            l.filter(|l| l.diagonal().iter().all(|d| d.re * d.re > floor)).ok_or(Error::SingularNoise { tone: k })
        })
        .collect::<Result<Vec<_>>>()?;
    let n_t = mimo.n_t() as f64;
    let df = grid.delta_f();
    Ok((0..mimo.n_meas())
        .into_par_iter()
        .map(|r| {
            let mut bits = 0.0;
            for k in 0..m {
                let l = &whiteners[if tones == 1 { 0 } else { k }];
                let h = mimo.tone_matrix(r, k);
                let g = l.solve_lower_triangular(&h).expect("Cholesky factor has a positive diagonal");
                bits += log2_det_identity_plus(&g, tx.psd_watts(k) / n_t);
            }
            bits * df
        })
        .collect())
}

/// Fraction of `values` strictly greater than each grid point.
pub fn ccdf(values: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("ccdf values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(grid.iter().map(|g| (sorted.len() - sorted.partition_point(|v| v <= g)) as f64 / n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricAverages {
    pub acg_db: f64,
    pub rms_ds_s: f64,
    pub cb_hz: f64,
    pub capacity_bps: f64,
}

/// Per-realization metrics and their ensemble averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cb_level: f64,
    pub acg_db: Vec<f64>,
    pub rms_ds_s: Vec<f64>,
    pub cb_hz: Vec<f64>,
    pub capacity_bps: Vec<f64>,
    pub averages: MetricAverages,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl MetricsReport {
    pub fn from_vectors(
        cb_level: f64,
        acg_db: Vec<f64>,
        rms_ds_s: Vec<f64>,
        cb_hz: Vec<f64>,
        capacity_bps: Vec<f64>,
    ) -> Self {
        let averages = MetricAverages {
            acg_db: mean(&acg_db),
            rms_ds_s: mean(&rms_ds_s),
            cb_hz: mean(&cb_hz),
            capacity_bps: mean(&capacity_bps),
        };
        MetricsReport { cb_level, acg_db, rms_ds_s, cb_hz, capacity_bps, averages }
    }

    /// One line per realization: `index,acg_db,rms_ds_s,cb_hz,capacity_bps`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("realization,acg_db,rms_ds_s,cb_hz,capacity_bps\n");
        for i in 0..self.acg_db.len() {
            out.push_str(&format!(
                "{i},{},{},{},{}\n",
                self.acg_db[i], self.rms_ds_s[i], self.cb_hz[i], self.capacity_bps[i]
            ));
        }
        out
    }
}

/// All four metrics for every realization of a (possibly 1×1) MIMO ensemble.
pub fn compute_metrics(mimo: &MimoChannelEnsemble, tx: &TxSpec, noise: &NoiseModel) -> Result<MetricsReport> {
    Ok(MetricsReport::from_vectors(
        DEFAULT_CB_LEVEL,
        acg_mimo(mimo),
        rms_delay_spread_mimo(mimo, DelaySpreadOptions::default()),
        coherence_bandwidth_mimo(mimo, DEFAULT_CB_LEVEL)?,
        mimo_capacity(mimo, tx, noise)?,
    ))
}
