//! Closed-form reference models and the small demo ensembles drawn from them.
//!
//! All fixtures live on the 1.8–100 MHz band.
//!
//! * Log-amplitude mean (dB): `−35 − 15·(f − f_start)/B`, plus a per-mode
//!   offset of −4 dB for receive mode `CM` and −2 dB for transmit mode `L-PE`.
//! * Log-amplitude standard deviation: 5 dB everywhere.
//! * Log-amplitude correlation: `ρ_freq(k, l) = exp(−|k − l|/L)`, and for MIMO
//!   the Kronecker product with a spatial factor `0.6` per differing receive
//!   mode and `0.5` per differing transmit mode.
//! * SISO phase correlation: the same `exp(−|k − l|/L)`.
//! * MIMO phase slopes: 64 delays evenly spaced over [0.1, 0.6] µs, slope
//!   `−2π·τ`. The upper end stays below `1/(2·Δf)` for grids of 128 or more
//!   samples on this band, so fitted slopes are unaliased.

use std::f64::consts::{LN_10, PI};

use nalgebra::{DMatrix, DVector};

use crate::data_model::{ChannelEnsemble, FrequencyGrid, MimoChannelEnsemble};
use crate::estimation::{GaussianFieldParams, PhaseCovParams, SlopeDistribution};
use crate::generator::{
    generate_mimo, generate_siso, FitMeta, MimoChannelModel, SisoChannelModel, MODEL_FORMAT_VERSION,
};
use crate::metrics::{NoiseModel, TxSpec};

pub const BAND_START_HZ: f64 = 1.8e6;
pub const BAND_END_HZ: f64 = 100e6;
pub const FIXTURE_SEED: u64 = 20_160_101;
pub const AMP_STD_DB: f64 = 5.0;

const DB_TO_NEPER: f64 = LN_10 / 20.0;

pub fn band(m: usize) -> FrequencyGrid {
    FrequencyGrid::new(BAND_START_HZ, BAND_END_HZ, m).expect("fixture band is valid")
}

pub fn rx_modes() -> Vec<String> {
    ["P", "N", "CM"].map(String::from).to_vec()
}

pub fn tx_modes() -> Vec<String> {
    ["L-N", "L-PE"].map(String::from).to_vec()
}

/// `exp(−|i − j|/len)` on `m` points.
pub fn exp_decay_correlation(m: usize, len: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| (-(i as f64 - j as f64).abs() / len).exp())
}

fn mean_db(grid: &FrequencyGrid, k: usize) -> f64 {
    -35.0 - 15.0 * (grid.frequency(k) - grid.f_start()) / grid.bandwidth()
}

fn mode_offset_db(rx: &str, tx: &str) -> f64 {
    (if rx == "CM" { -4.0 } else { 0.0 }) + (if tx == "L-PE" { -2.0 } else { 0.0 })
}

fn meta() -> FitMeta {
    FitMeta { source_n_meas: 0, decimation: 1, format_version: MODEL_FORMAT_VERSION }
}

/// SISO model with exponential-decay amplitude and phase correlation.
pub fn siso_reference_model(grid: FrequencyGrid, corr_len: f64) -> SisoChannelModel {
    let m = grid.len();
    let r = exp_decay_correlation(m, corr_len);
    let sigma = AMP_STD_DB * DB_TO_NEPER;
    let mean = DVector::from_fn(m, |k, _| mean_db(&grid, k) * DB_TO_NEPER);
    let amp = GaussianFieldParams::from_mean_cov(mean, &r * (sigma * sigma)).expect("valid covariance");
    let phase = PhaseCovParams::new(r).expect("valid correlation");
    SisoChannelModel::new(grid, amp, phase, meta()).expect("consistent dimensions")
}

/// Delays evenly spaced over [0.1, 0.6] µs, as slopes `−2π·τ`.
pub fn reference_slopes() -> SlopeDistribution {
    let slopes = (0..64).map(|i| -2.0 * PI * (0.1e-6 + 0.5e-6 * i as f64 / 63.0)).collect();
    SlopeDistribution::from_samples(slopes).expect("non-empty")
}

/// MIMO model with Kronecker spatial × frequency log-amplitude correlation.
pub fn mimo_reference_model(
    grid: FrequencyGrid,
    rx_modes: Vec<String>,
    tx_modes: Vec<String>,
    corr_len: f64,
) -> MimoChannelModel {
    let (n_r, n_t, m) = (rx_modes.len(), tx_modes.len(), grid.len());
    let d = n_r * n_t * m;
    let freq = exp_decay_correlation(m, corr_len);
    let sigma = AMP_STD_DB * DB_TO_NEPER;
    let split = |i: usize| (i / (n_t * m), (i / m) % n_t, i % m);
    let cov = DMatrix::from_fn(d, d, |i, j| {
        let (ri, ti, ki) = split(i);
        let (rj, tj, kj) = split(j);
        let spatial = if ri == rj { 1.0 } else { 0.6 } * if ti == tj { 1.0 } else { 0.5 };
        spatial * freq[(ki, kj)] * sigma * sigma
    });
    let mean = DVector::from_fn(d, |i, _| {
        let (r, t, k) = split(i);
        (mean_db(&grid, k) + mode_offset_db(&rx_modes[r], &tx_modes[t])) * DB_TO_NEPER
    });
    let amp = GaussianFieldParams::from_mean_cov(mean, cov).expect("valid covariance");
    MimoChannelModel::new(grid, rx_modes, tx_modes, amp, reference_slopes(), meta()).expect("consistent dimensions")
}

/// 16 realizations × 64 samples.
pub fn siso_demo() -> ChannelEnsemble {
    generate_siso(&siso_reference_model(band(64), 6.0), 16, FIXTURE_SEED).expect("fixture generation")
}

/// 32 realizations × 3 rx (P, N, CM) × 2 tx (L-N, L-PE) × 128 samples.
pub fn mimo_demo() -> MimoChannelEnsemble {
    let model = mimo_reference_model(band(128), rx_modes(), tx_modes(), 10.0);
    generate_mimo(&model, 32, FIXTURE_SEED).expect("fixture generation")
}

/// Flat transmit PSD of −55 dBm/Hz.
pub fn demo_tx() -> TxSpec {
    TxSpec::default()
}

/// White noise at −125 dBm/Hz on P and N, −120 dBm/Hz on CM, with 0.3
/// correlation between P and N and 0.1 between either and CM.
pub fn demo_noise() -> NoiseModel {
    let corr = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 1.0, 0.1, 0.1, 0.1, 1.0]);
    NoiseModel::white_per_mode(vec![-125.0, -125.0, -120.0], corr).expect("valid noise model")
}
