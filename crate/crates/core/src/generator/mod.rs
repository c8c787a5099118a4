//! Fitting SISO/MIMO channel models and drawing new realizations.
//!
//! SISO: log-amplitudes are correlated normals with the reference mean and
//! covariance; phases are correlated uniforms on (−π, π) with the reference
//! normalized phase covariance. Amplitude and phase are drawn independently.
//!
//! MIMO: log-amplitudes of all `N_R·N_T·M` (rx, tx, freq) samples are drawn
//! jointly, so spatial and frequency correlation are both kept. Each link's
//! phase is a straight line in frequency whose slope comes from the
//! reference slope distribution and whose intercept is uniform.

mod model_file;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{psd_sqrt, sample_correlated_uniforms, sample_with_root, CorrelationMatrix};
use crate::data_model::{
    log_transform, reshape_mimo, unreshape_mimo_named, wrap_phase, ChannelEnsemble, FrequencyGrid, MimoChannelEnsemble,
};
use crate::error::{Error, Result};
use crate::estimation::{
    estimate_gaussian_params, estimate_phase_cov, estimate_slope_distribution, GaussianFieldParams, PhaseCovParams,
    SlopeDistribution,
};
use crate::rng::{Domain, StreamSeed};

pub use model_file::{load_model, save_model, ChannelModel, ModelEnvelope, MODEL_FORMAT_VERSION};

/// Where a fitted model came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    /// Number of reference realizations.
    pub source_n_meas: usize,
    /// Frequency decimation applied before fitting (1 = none).
    pub decimation: usize,
    pub format_version: u32,
}

impl FitMeta {
    fn new(source_n_meas: usize) -> Self {
        FitMeta { source_n_meas, decimation: 1, format_version: MODEL_FORMAT_VERSION }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SisoChannelModel {
    pub grid: FrequencyGrid,
    pub amp: GaussianFieldParams,
    pub phase_cov: PhaseCovParams,
    pub fit_meta: FitMeta,
}

impl SisoChannelModel {
    pub fn new(
        grid: FrequencyGrid,
        amp: GaussianFieldParams,
        phase_cov: PhaseCovParams,
        fit_meta: FitMeta,
    ) -> Result<Self> {
        if amp.dim() != grid.len() || phase_cov.dim() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "grid has {} samples, amplitude dim {}, phase dim {}",
                grid.len(),
                amp.dim(),
                phase_cov.dim()
            )));
        }
        Ok(SisoChannelModel { grid, amp, phase_cov, fit_meta })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MimoChannelModel {
    pub grid: FrequencyGrid,
    pub rx_mode_names: Vec<String>,
    pub tx_mode_names: Vec<String>,
    /// Log-amplitude field over the flattened (rx, tx, freq) axis.
    pub amp_joint: GaussianFieldParams,
    pub slope_dist: SlopeDistribution,
    pub fit_meta: FitMeta,
}

impl MimoChannelModel {
    pub fn new(
        grid: FrequencyGrid,
        rx_mode_names: Vec<String>,
        tx_mode_names: Vec<String>,
        amp_joint: GaussianFieldParams,
        slope_dist: SlopeDistribution,
        fit_meta: FitMeta,
    ) -> Result<Self> {
        let d = rx_mode_names.len() * tx_mode_names.len() * grid.len();
        if d == 0 || amp_joint.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "{}×{}×{} flattened axis but amplitude dim {}",
                rx_mode_names.len(),
                tx_mode_names.len(),
                grid.len(),
                amp_joint.dim()
            )));
        }
        Ok(MimoChannelModel { grid, rx_mode_names, tx_mode_names, amp_joint, slope_dist, fit_meta })
    }

    pub fn n_r(&self) -> usize {
        self.rx_mode_names.len()
    }

    pub fn n_t(&self) -> usize {
        self.tx_mode_names.len()
    }
}

pub fn fit_siso(ens: &ChannelEnsemble) -> Result<SisoChannelModel> {
    if ens.n_meas() < 2 {
        return Err(Error::TooFewRealizations(ens.n_meas()));
    }
    let l = log_transform(ens)?;
    let amp = estimate_gaussian_params(&l.amp)?;
    let phase_cov = estimate_phase_cov(&l.phase)?;
    SisoChannelModel::new(*ens.grid(), amp, phase_cov, FitMeta::new(ens.n_meas()))
}

fn assemble(amp_ln: &DMatrix<f64>, phase: impl Fn(usize, usize) -> f64) -> Vec<Complex64> {
    let (n, d) = amp_ln.shape();
    let mut data = Vec::with_capacity(n * d);
    for r in 0..n {
        for k in 0..d {
            data.push(Complex64::from_polar(amp_ln[(r, k)].exp(), phase(r, k)));
        }
    }
    data
}

/// Draws `n` SISO realizations. Amplitudes use [`Domain::Amplitude`]
/// substreams and phases [`Domain::Phase`] substreams of `seed`.
pub fn generate_siso(model: &SisoChannelModel, n: usize, seed: u64) -> Result<ChannelEnsemble> {
    if n == 0 {
        return Err(Error::InvalidArgument("number of realizations must be >= 1".into()));
    }
    let root = psd_sqrt(&model.amp.cov)?;
    let amp = sample_with_root(&root, &model.amp.mean, n, &StreamSeed::new(seed, Domain::Amplitude));
    let r_phase = CorrelationMatrix::new(model.phase_cov.norm_cov.clone())?;
    let u = sample_correlated_uniforms(&r_phase, n, &StreamSeed::new(seed, Domain::Phase))?;
    let data = assemble(&amp, |r, k| PI * (2.0 * u[(r, k)] - 1.0));
    ChannelEnsemble::new(model.grid, n, data)
}

pub fn fit_mimo(mimo: &MimoChannelEnsemble) -> Result<MimoChannelModel> {
    if mimo.n_meas() < 2 {
        return Err(Error::TooFewRealizations(mimo.n_meas()));
    }
    let l = log_transform(&reshape_mimo(mimo))?;
    let amp_joint = estimate_gaussian_params(&l.amp)?;
    let slope_dist = estimate_slope_distribution(mimo)?;
    MimoChannelModel::new(
        *mimo.grid(),
        mimo.rx_mode_names().to_vec(),
        mimo.tx_mode_names().to_vec(),
        amp_joint,
        slope_dist,
        FitMeta::new(mimo.n_meas()),
    )
}

/// Linear phase profiles, flattened in (realization, rx, tx, freq) order.
///
/// For each link a slope `s` is drawn (uniform resampling of the stored
/// slopes, or `N(mean, std)` in Gaussian mode) followed by an intercept
/// `b ∈ (−π, π]`; the phase is `wrap(s·(f_k − f_0) + b)`. Realization `r`
/// uses substream `r` of [`Domain::Slope`].
pub fn synthesize_phase(
    slope_dist: &SlopeDistribution,
    grid: &FrequencyGrid,
    n_r: usize,
    n_t: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    use crate::estimation::SamplingMode;
    if slope_dist.mode() == SamplingMode::Empirical && slope_dist.samples().is_empty() {
        return Err(Error::EmptySlopeSamples);
    }
    let m = grid.len();
    let per_real = n_r * n_t * m;
    let stream = StreamSeed::new(seed, Domain::Slope);
    let offsets: Vec<f64> = (0..m).map(|k| k as f64 * grid.delta_f()).collect();
    let mut out = vec![0.0f64; n * per_real];
    if per_real == 0 {
        return Ok(out);
    }
    out.par_chunks_mut(per_real).enumerate().for_each(|(r, chunk)| {
        let mut rng = stream.stream(r as u64);
        for link in chunk.chunks_exact_mut(m) {
            let s = match slope_dist.mode() {
                SamplingMode::Empirical => {
                    let samples = slope_dist.samples();
                    samples[rng.gen_range(0..samples.len())]
                }
                SamplingMode::Gaussian => {
                    let z: f64 = rng.sample(StandardNormal);
                    slope_dist.mean() + slope_dist.std() * z
                }
            };
            let b = PI - 2.0 * PI * rng.gen::<f64>();
            for (v, df) in link.iter_mut().zip(&offsets) {
                *v = wrap_phase(s * df + b);
            }
        }
    });
    Ok(out)
}

/// Draws `n` MIMO realizations on the model's grid.
pub fn generate_mimo(model: &MimoChannelModel, n: usize, seed: u64) -> Result<MimoChannelEnsemble> {
    if n == 0 {
        return Err(Error::InvalidArgument("number of realizations must be >= 1".into()));
    }
    let root = psd_sqrt(&model.amp_joint.cov)?;
    let amp = sample_with_root(&root, &model.amp_joint.mean, n, &StreamSeed::new(seed, Domain::Amplitude));
    let phase = synthesize_phase(&model.slope_dist, &model.grid, model.n_r(), model.n_t(), n, seed)?;
    let d = amp.ncols();
    let data = assemble(&amp, |r, k| phase[r * d + k]);
    let flat = ChannelEnsemble::new(
        FrequencyGrid::new(model.grid.f_start(), model.grid.f_start() + (d - 1) as f64 * model.grid.delta_f(), d)?,
        n,
        data,
    )?;
    unreshape_mimo_named(&flat, model.rx_mode_names.clone(), model.tx_mode_names.clone(), model.grid.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{cross_cov_diagnostics, phase_slope, SamplingMode};
    use nalgebra::DVector;

    fn exp_decay(m: usize, len: f64) -> DMatrix<f64> {
        DMatrix::from_fn(m, m, |i, j| (-(i as f64 - j as f64).abs() / len).exp())
    }

    fn siso_model(m: usize, len: f64) -> SisoChannelModel {
        let grid = FrequencyGrid::new(1.8e6, 100e6, m).unwrap();
        let mean = DVector::from_fn(m, |k, _| -4.0 - 0.01 * k as f64);
        let amp = GaussianFieldParams::from_mean_cov(mean, exp_decay(m, len) * 0.5).unwrap();
        let phase = PhaseCovParams::new(exp_decay(m, len)).unwrap();
        SisoChannelModel::new(grid, amp, phase, FitMeta::new(0)).unwrap()
    }

    #[test]
    fn flat_channels_fit() {
        let grid = FrequencyGrid::new(1e6, 2e6, 4).unwrap();
        let g = Complex64::new(0.1, 0.0);
        let ens = ChannelEnsemble::new(grid, 3, vec![g; 12]).unwrap();
        let m = fit_siso(&ens).unwrap();
        assert!(m.amp.mean.iter().all(|&v| (v - 0.1f64.ln()).abs() < 1e-15));
        assert!(m.amp.cov.iter().all(|&v| v == 0.0));
        let one = ChannelEnsemble::new(grid, 1, vec![g; 4]).unwrap();
        assert!(matches!(fit_siso(&one), Err(Error::TooFewRealizations(1))));
    }

    #[test]
    fn zero_cov_model_has_unit_magnitude() {
        let grid = FrequencyGrid::new(1e6, 2e6, 5).unwrap();
        let amp = GaussianFieldParams::from_mean_cov(DVector::zeros(5), DMatrix::zeros(5, 5)).unwrap();
        let model =
            SisoChannelModel::new(grid, amp, PhaseCovParams::new(DMatrix::identity(5, 5)).unwrap(), FitMeta::new(0))
                .unwrap();
        let e = generate_siso(&model, 20, 1).unwrap();
        assert!(e.data().iter().all(|h| (h.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn siso_closed_loop_small() {
        // Strong correlation keeps sampling error of every entry near 0.01.
        let model = siso_model(6, 16.0);
        let e = generate_siso(&model, 2000, 11).unwrap();
        let refit = fit_siso(&e).unwrap();
        assert!((&refit.amp.norm_cov - &model.amp.norm_cov).amax() <= 0.05);
        assert!((&refit.phase_cov.norm_cov - &model.phase_cov.norm_cov).amax() <= 0.05);
        let l = log_transform(&e).unwrap();
        let diag = cross_cov_diagnostics(&l.amp, &l.phase).unwrap();
        assert!(diag.mean_abs_cross <= 0.03);
    }

    #[test]
    fn siso_generation_is_deterministic() {
        let model = siso_model(8, 4.0);
        assert_eq!(generate_siso(&model, 30, 5).unwrap(), generate_siso(&model, 30, 5).unwrap());
        assert_ne!(generate_siso(&model, 30, 5).unwrap(), generate_siso(&model, 30, 6).unwrap());
        assert!(generate_siso(&model, 0, 5).is_err());
    }

    #[test]
    fn degenerate_slope_gives_constant_phase() {
        let grid = FrequencyGrid::new(1e6, 2e6, 8).unwrap();
        let d = SlopeDistribution::from_samples(vec![0.0]).unwrap();
        let p = synthesize_phase(&d, &grid, 2, 3, 4, 9).unwrap();
        assert_eq!(p.len(), 4 * 6 * 8);
        for link in p.chunks_exact(8) {
            assert!(link.iter().all(|&v| v == link[0]));
            assert!(link[0] > -PI && link[0] <= PI);
        }
        // Intercepts differ between links.
        assert_ne!(p[0], p[8]);
    }

    #[test]
    fn fit_after_synthesize_recovers_slope() {
        let grid = FrequencyGrid::new(1.8e6, 100e6, 256).unwrap();
        let s = -2.0 * PI * 0.5e-6;
        let d = SlopeDistribution::from_samples(vec![s]).unwrap();
        let p = synthesize_phase(&d, &grid, 1, 2, 5, 3).unwrap();
        for link in p.chunks_exact(256) {
            let h: Vec<_> = link.iter().map(|&ph| Complex64::from_polar(1.0, ph)).collect();
            assert!((phase_slope(&grid, &h) - s).abs() <= 1e-9 * s.abs());
        }
    }

    #[test]
    fn synthesize_phase_modes() {
        let grid = FrequencyGrid::new(1e6, 2e6, 4).unwrap();
        let d = SlopeDistribution::from_samples(vec![1e-7, 2e-7, 3e-7]).unwrap();
        assert_eq!(
            synthesize_phase(&d, &grid, 1, 1, 10, 1).unwrap(),
            synthesize_phase(&d, &grid, 1, 1, 10, 1).unwrap()
        );
        let g = SlopeDistribution::from_summary(0.0, 1e-7).unwrap();
        assert!(synthesize_phase(&g, &grid, 1, 1, 10, 1).is_ok());
        let g = d.clone().with_mode(SamplingMode::Gaussian).unwrap();
        assert_ne!(
            synthesize_phase(&g, &grid, 1, 1, 10, 1).unwrap(),
            synthesize_phase(&d, &grid, 1, 1, 10, 1).unwrap()
        );
    }

    #[test]
    fn degenerate_mimo_matches_siso_fit() {
        let model = siso_model(8, 4.0);
        let siso = generate_siso(&model, 40, 2).unwrap();
        let mimo = MimoChannelEnsemble::from_siso(&siso);
        let a = fit_siso(&siso).unwrap();
        let b = fit_mimo(&mimo).unwrap();
        assert_eq!(a.amp, b.amp_joint);
        assert_eq!(b.slope_dist.samples().len(), 40);
    }

    #[test]
    fn zero_cov_mimo_amplitude_is_mean() {
        let grid = FrequencyGrid::new(1e6, 2e6, 4).unwrap();
        let mean = DVector::from_fn(8, |i, _| -(i as f64) * 0.1);
        let amp = GaussianFieldParams::from_mean_cov(mean.clone(), DMatrix::zeros(8, 8)).unwrap();
        let model = MimoChannelModel::new(
            grid,
            vec!["a".into(), "b".into()],
            vec!["x".into()],
            amp,
            SlopeDistribution::from_samples(vec![-1e-6]).unwrap(),
            FitMeta::new(0),
        )
        .unwrap();
        let e = generate_mimo(&model, 3, 4).unwrap();
        assert_eq!(e.rx_mode_names(), &["a".to_string(), "b".to_string()]);
        for r in 0..3 {
            for (k, h) in e.realization(r).iter().enumerate() {
                assert!((h.norm() - mean[k].exp()).abs() <= 1e-14 * mean[k].exp());
            }
        }
    }
}
