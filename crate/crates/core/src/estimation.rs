//! Statistical ingredients of the model, estimated from a reference ensemble.
//!
//! All matrices here are `N × D`: one realization per row, one variable
//! (frequency sample, or flattened mode/frequency index) per column.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{log_transform, reshape_mimo, FrequencyGrid, MimoChannelEnsemble};
use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;

/// Mean, covariance and normalized covariance of a Gaussian field.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFieldParams {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub norm_cov: DMatrix<f64>,
}

impl GaussianFieldParams {
    /// Validates `cov` and derives the normalized covariance from it.
    pub fn from_mean_cov(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!("mean has {d} entries, covariance is {:?}", cov.shape())));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("gaussian field parameters".into()));
        }
        let asym = max_asymmetry(&cov);
        if asym > SYMMETRY_TOL * cov.amax().max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        if let Some(i) = (0..d).find(|&i| cov[(i, i)] < 0.0) {
            return Err(Error::InvalidArgument(format!("negative variance at index {i}")));
        }
        let norm_cov = normalize_covariance(&cov);
        Ok(GaussianFieldParams { mean, cov, norm_cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std_devs(&self) -> DVector<f64> {
        self.cov.diagonal().map(f64::sqrt)
    }
}

/// Normalized covariance of the wrapped phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCovParams {
    pub norm_cov: DMatrix<f64>,
}

impl PhaseCovParams {
    pub fn new(norm_cov: DMatrix<f64>) -> Result<Self> {
        check_normalized(&norm_cov)?;
        Ok(PhaseCovParams { norm_cov })
    }

    pub fn dim(&self) -> usize {
        self.norm_cov.nrows()
    }
}

/// Amplitude/phase coupling diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossCovReport {
    /// Mean of `|R_amp,phase|` over all entries.
    pub mean_abs_cross: f64,
    /// Mean of `|R_amp,phaseᵀ − R_amp,phase|`, the imaginary part of the
    /// normalized covariance of the complex log-CFR.
    pub mean_abs_imag: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Resample the stored slopes uniformly.
    #[default]
    Empirical,
    /// Draw from a normal law with the stored mean and standard deviation.
    Gaussian,
}

impl std::str::FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(SamplingMode::Empirical),
            "gaussian" => Ok(SamplingMode::Gaussian),
            _ => Err(Error::InvalidArgument(format!("unknown sampling mode {s:?}"))),
        }
    }
}

/// Distribution of unwrapped phase slopes (rad/Hz).
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeDistribution {
    samples: Vec<f64>,
    mean: f64,
    std: f64,
    mode: SamplingMode,
}

impl SlopeDistribution {
    /// Empirical distribution; mean and (N−1) standard deviation are computed
    /// from the samples.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySlopeSamples);
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFiniteInput("slope samples".into()));
        }
        let (mean, std) = mean_std(&samples);
        Ok(SlopeDistribution { samples, mean, std, mode: SamplingMode::Empirical })
    }

    /// Summary-only distribution, always sampled in Gaussian mode.
    pub fn from_summary(mean: f64, std: f64) -> Result<Self> {
        if !(mean.is_finite() && std.is_finite()) || std < 0.0 {
            return Err(Error::InvalidArgument(format!("bad slope summary mean={mean}, std={std}")));
        }
        Ok(SlopeDistribution { samples: Vec::new(), mean, std, mode: SamplingMode::Gaussian })
    }

    pub fn with_mode(mut self, mode: SamplingMode) -> Result<Self> {
        if mode == SamplingMode::Empirical && self.samples.is_empty() {
            return Err(Error::EmptySlopeSamples);
        }
        self.mode = mode;
        Ok(self)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in j + 1..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn check_normalized(r: &DMatrix<f64>) -> Result<()> {
    if !r.is_square() {
        return Err(Error::DimensionMismatch(format!("normalized covariance is {:?}", r.shape())));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("normalized covariance".into()));
    }
    let asym = max_asymmetry(r);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    if (0..r.nrows()).any(|i| (r[(i, i)] - 1.0).abs() > SYMMETRY_TOL) {
        return Err(Error::InvalidCorrelation("diagonal entries must be 1".into()));
    }
    if r.amax() > 1.0 + SYMMETRY_TOL {
        return Err(Error::InvalidCorrelation(format!("entry magnitude {} exceeds 1", r.amax())));
    }
    Ok(())
}

fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

fn centered(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    xc
}

/// Unbiased (divisor `N − 1`) sample covariance of the columns of `x`.
pub fn sample_covariance(x: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::TooFewRealizations(n));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("sample matrix".into()));
    }
    let mean = column_means(x);
    let xc = centered(x, &mean);
    let mut cov = xc.tr_mul(&xc) / (n - 1) as f64;
    symmetrize_lower_from_upper(&mut cov);
    Ok((mean, cov))
}

fn symmetrize_lower_from_upper(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for j in 0..d {
        for i in j + 1..d {
            m[(i, j)] = m[(j, i)];
        }
    }
}

/// Covariance divided by the product of the standard deviations.
///
/// Variables with zero variance get a row/column of zeros and a unit
/// diagonal entry.
pub fn normalize_covariance(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let d = cov.nrows();
    let sd: Vec<f64> = (0..d).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else if sd[i] == 0.0 || sd[j] == 0.0 {
            0.0
        } else {
            (cov[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
        }
    })
}

/// Mean vector, covariance and normalized covariance of log-amplitudes.
pub fn estimate_gaussian_params(amp: &DMatrix<f64>) -> Result<GaussianFieldParams> {
    let (mean, cov) = sample_covariance(amp)?;
    let norm_cov = normalize_covariance(&cov);
    Ok(GaussianFieldParams { mean, cov, norm_cov })
}

/// Normalized covariance of wrapped phases.
pub fn estimate_phase_cov(phase: &DMatrix<f64>) -> Result<PhaseCovParams> {
    if let Some(v) = phase.iter().find(|v| !(**v > -PI - 1e-12 && **v <= PI + 1e-12)) {
        return Err(Error::InvalidArgument(format!("phase {v} outside (−π, π]")));
    }
    let (_, cov) = sample_covariance(phase)?;
    Ok(PhaseCovParams { norm_cov: normalize_covariance(&cov) })
}

/// Cross normalized covariance `R[i][j] = corr(amp_i, phase_j)`.
pub fn cross_normalized_covariance(amp: &DMatrix<f64>, phase: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if amp.shape() != phase.shape() {
        return Err(Error::ShapeMismatch(format!("amplitude {:?} vs phase {:?}", amp.shape(), phase.shape())));
    }
    let n = amp.nrows();
    if n < 2 {
        return Err(Error::TooFewRealizations(n));
    }
    let standardize = |x: &DMatrix<f64>| {
        let mean = column_means(x);
        let mut xc = centered(x, &mean);
        for mut col in xc.column_iter_mut() {
            let ss = col.norm_squared();
            if ss > 0.0 {
                col /= ss.sqrt();
            }
        }
        xc
    };
    Ok(standardize(amp).tr_mul(&standardize(phase)))
}

pub fn cross_cov_diagnostics(amp: &DMatrix<f64>, phase: &DMatrix<f64>) -> Result<CrossCovReport> {
    let r = cross_normalized_covariance(amp, phase)?;
    let count = r.len() as f64;
    let mean_abs_cross = r.iter().map(|v| v.abs()).sum::<f64>() / count;
    let imag = r.transpose() - &r;
    let mean_abs_imag = imag.iter().map(|v| v.abs()).sum::<f64>() / count;
    Ok(CrossCovReport { mean_abs_cross, mean_abs_imag })
}

/// Removes 2π jumps so that consecutive samples differ by at most π.
///
/// Output differs from the input by whole turns only; a difference of
/// exactly +π is kept as +π.
pub fn unwrap_phase(wrapped: &[f64]) -> Vec<f64> {
    let two_pi = 2.0 * PI;
    let mut out = Vec::with_capacity(wrapped.len());
    let mut turns = 0.0f64;
    for (k, &x) in wrapped.iter().enumerate() {
        if k > 0 {
            let d = x - wrapped[k - 1];
            let mut n = (d / two_pi).round();
            let r = d - n * two_pi;
            if r > PI {
                n += 1.0;
            } else if r < -PI || (r == -PI && d > 0.0) {
                n -= 1.0;
            }
            turns += n;
        }
        out.push(x - turns * two_pi);
    }
    out
}

/// Ordinary least-squares line `y ≈ slope·x + intercept`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope (rad/Hz) of the unwrapped phase of one CFR.
pub fn phase_slope(grid: &FrequencyGrid, cfr: &[num_complex::Complex64]) -> f64 {
    let wrapped: Vec<f64> = cfr.iter().map(|h| h.arg()).collect();
    let unwrapped = unwrap_phase(&wrapped);
    // Offsets from f_start keep the normal equations well conditioned.
    let x: Vec<f64> = (0..grid.len()).map(|k| k as f64 * grid.delta_f()).collect();
    fit_line(&x, &unwrapped).0
}

/// Slopes for every (realization, rx, tx), in that order.
fn all_slopes(mimo: &MimoChannelEnsemble) -> Vec<f64> {
    let (n_r, n_t) = (mimo.n_r(), mimo.n_t());
    (0..mimo.n_meas() * n_r * n_t)
        .into_par_iter()
        .map(|i| {
            let (r, rx, tx) = (i / (n_r * n_t), (i / n_t) % n_r, i % n_t);
            phase_slope(mimo.grid(), mimo.link(r, rx, tx))
        })
        .collect()
}

/// Pooled distribution of unwrapped phase slopes over all realizations and
/// mode pairs.
pub fn estimate_slope_distribution(mimo: &MimoChannelEnsemble) -> Result<SlopeDistribution> {
    SlopeDistribution::from_samples(all_slopes(mimo))
}

/// One slope distribution per (rx, tx) pair, indexed `rx·N_T + tx`.
pub fn estimate_slope_distribution_per_mode(mimo: &MimoChannelEnsemble) -> Result<Vec<SlopeDistribution>> {
    let pairs = mimo.n_r() * mimo.n_t();
    let all = all_slopes(mimo);
    (0..pairs).map(|p| SlopeDistribution::from_samples(all.iter().skip(p).step_by(pairs).copied().collect())).collect()
}

/// Log-amplitude and wrapped phase of the flattened MIMO ensemble.
pub fn flattened_log_parts(mimo: &MimoChannelEnsemble) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let l = log_transform(&reshape_mimo(mimo))?;
    Ok((l.amp, l.phase))
}
