//! Matrix square roots and correlated sampling.
//!
//! Correlated normals are produced as `S·z + m` with `S·Sᵀ = K` taken from a
//! symmetric eigendecomposition, so rank-deficient covariances (fewer
//! realizations than variables) are handled without a Cholesky failure.
//! Correlated uniforms use a Gaussian copula: the target correlation `r` is
//! mapped to `2·sin(π·r/6)` before drawing normals, and each normal is pushed
//! through the standard normal CDF. With that map the linear correlation of
//! the resulting uniforms equals `r`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{max_asymmetry, GaussianFieldParams};
use crate::rng::StreamSeed;

const SYMMETRY_TOL: f64 = 1e-10;

/// Symmetric, unit-diagonal, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix(DMatrix<f64>);

impl CorrelationMatrix {
    /// Checks symmetry, unit diagonal and entry bounds. Positive
    /// semidefiniteness is not checked here; see [`nearest_psd_repair`].
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!("correlation matrix is {:?}", m.shape())));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("correlation matrix".into()));
        }
        let asym = max_asymmetry(&m);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        if (0..m.nrows()).any(|i| (m[(i, i)] - 1.0).abs() > SYMMETRY_TOL) {
            return Err(Error::InvalidCorrelation("diagonal entries must be 1".into()));
        }
        if m.amax() > 1.0 + SYMMETRY_TOL {
            return Err(Error::InvalidCorrelation(format!("entry magnitude {} exceeds 1", m.amax())));
        }
        Ok(CorrelationMatrix(m))
    }

    pub fn identity(d: usize) -> Self {
        CorrelationMatrix(DMatrix::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.0)
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Returns `S` with `S·Sᵀ = K`, namely `S = V·diag(√λ)` from `K = V·Λ·Vᵀ`.
///
/// Eigenvalues within round-off of zero, and negative eigenvalues down to
/// `−1e−8·λ_max`, are treated as zero.
pub fn psd_sqrt(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !k.is_square() {
        return Err(Error::DimensionMismatch(format!("matrix is {:?}", k.shape())));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("matrix to factor".into()));
    }
    let scale = k.amax();
    let asym = max_asymmetry(k);
    if asym > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric(asym));
    }
    let d = k.nrows();
    if scale == 0.0 {
        return Ok(DMatrix::zeros(d, d));
    }
    let eig = SymmetricEigen::new(k.clone());
    let lambda_max = eig.eigenvalues.max();
    let lambda_min = eig.eigenvalues.min();
    let tolerance = 1e-8 * lambda_max.max(0.0);
    if lambda_min < -tolerance || lambda_max <= 0.0 {
        return Err(Error::IndefiniteMatrix { min_eigenvalue: lambda_min, tolerance });
    }
    let noise_floor = d as f64 * f64::EPSILON * lambda_max;
    let roots = eig.eigenvalues.map(|l| if l <= noise_floor { 0.0 } else { l.sqrt() });
    let mut s = eig.eigenvectors;
    for (j, mut col) in s.column_iter_mut().enumerate() {
        col *= roots[j];
    }
    Ok(s)
}

/// Projects a symmetric unit-diagonal matrix onto the PSD cone by clipping
/// negative eigenvalues, then rescales to unit diagonal.
///
/// Inputs whose smallest eigenvalue is at least `−1e−10·D` are returned
/// unchanged.
pub fn nearest_psd_repair(a: &DMatrix<f64>) -> Result<CorrelationMatrix> {
    let input = CorrelationMatrix::new(a.clone())?;
    let d = a.nrows();
    if d == 0 {
        return Ok(input);
    }
    let eig = SymmetricEigen::new(a.clone());
    if eig.eigenvalues.min() >= -1e-10 * d as f64 {
        return Ok(input);
    }
    let clipped = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0)));
    let v = &eig.eigenvectors;
    let mut r = v * clipped * v.transpose();
    let sd: Vec<f64> = (0..d).map(|i| r[(i, i)].max(0.0).sqrt()).collect();
    for j in 0..d {
        for i in 0..d {
            r[(i, j)] = if i == j {
                1.0
            } else if sd[i] == 0.0 || sd[j] == 0.0 {
                0.0
            } else {
                (r[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
            };
        }
    }
    for j in 0..d {
        for i in j + 1..d {
            r[(i, j)] = r[(j, i)];
        }
    }
    Ok(CorrelationMatrix(r))
}

/// Entrywise `2·sin(π·r/6)`, followed by [`nearest_psd_repair`].
pub fn spearman_to_pearson(r: &CorrelationMatrix) -> Result<CorrelationMatrix> {
    // ±1 are fixed points of the map; keep them exact.
    let mut m = r.0.map(|v| if v.abs() == 1.0 { v } else { 2.0 * (v * PI / 6.0).sin() });
    m.fill_diagonal(1.0);
    nearest_psd_repair(&m)
}

/// Standard normal CDF, `Φ(x) = erfc(−x/√2)/2`.
///
/// `erfc` is the correctly-rounded-to-within-1-ulp libm routine, so the
/// absolute error is far below 1e−10 over the whole real line.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `D × n` matrix of independent standard normals; column `j` comes from
/// substream `j`.
fn standard_normal_columns(d: usize, n: usize, seed: &StreamSeed) -> DMatrix<f64> {
    let mut buf = vec![0.0f64; d * n];
    if d > 0 {
        buf.par_chunks_mut(d).enumerate().for_each(|(j, col)| {
            let mut rng = seed.stream(j as u64);
            for v in col.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
        });
    }
    DMatrix::from_vec(d, n, buf)
}

/// Draws `n` rows of `S·z + mean` where `S = psd_sqrt(cov)`.
///
/// Row `r` uses substream `r` of `seed`, so results do not depend on the
/// number of worker threads.
pub fn sample_correlated_normals(params: &GaussianFieldParams, n: usize, seed: &StreamSeed) -> Result<DMatrix<f64>> {
    let s = psd_sqrt(&params.cov)?;
    Ok(sample_with_root(&s, &params.mean, n, seed))
}

/// As [`sample_correlated_normals`] with a precomputed square root.
pub fn sample_with_root(root: &DMatrix<f64>, mean: &DVector<f64>, n: usize, seed: &StreamSeed) -> DMatrix<f64> {
    let d = mean.len();
    let z = standard_normal_columns(root.ncols(), n, seed);
    let mut x = (root * z).transpose();
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col.add_scalar_mut(mean[j]);
    }
    debug_assert_eq!(x.ncols(), d);
    x
}

/// Draws `n` rows of uniforms on (0, 1) whose linear correlation targets
/// `r_target`.
pub fn sample_correlated_uniforms(r_target: &CorrelationMatrix, n: usize, seed: &StreamSeed) -> Result<DMatrix<f64>> {
    let r_hat = spearman_to_pearson(r_target)?;
    let s = psd_sqrt(r_hat.as_matrix())?;
    let zero = DVector::zeros(r_target.dim());
    let x = sample_with_root(&s, &zero, n, seed);
    let upper = 1.0 - f64::EPSILON / 2.0;
    Ok(x.map(|v| normal_cdf(v).clamp(f64::MIN_POSITIVE, upper)))
}
