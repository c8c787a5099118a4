use std::f64::consts::{LN_10, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::ensemble::ChannelEnsemble;
use super::grid::FrequencyGrid;
use crate::error::{Error, Result};

/// Base of the stored log-amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    /// `ln |H|`, used for all model math.
    #[default]
    Natural,
    /// `20·log10 |H|`, used only for reporting.
    Db20,
}

impl LogBase {
    /// Factor taking a natural-log amplitude to this base.
    pub fn scale_from_natural(self) -> f64 {
        match self {
            LogBase::Natural => 1.0,
            LogBase::Db20 => 20.0 / LN_10,
        }
    }
}

/// Log-domain view of an ensemble: `log H = amp + j·phase`.
///
/// Both matrices are `N_M × M`; phases are wrapped to (−π, π].
#[derive(Debug, Clone, PartialEq)]
pub struct LogCfr {
    pub grid: FrequencyGrid,
    pub base: LogBase,
    pub amp: DMatrix<f64>,
    pub phase: DMatrix<f64>,
}

impl LogCfr {
    pub fn n_meas(&self) -> usize {
        self.amp.nrows()
    }

    /// Re-expresses the amplitude in another log base.
    pub fn to_base(&self, base: LogBase) -> LogCfr {
        let k = base.scale_from_natural() / self.base.scale_from_natural();
        LogCfr { grid: self.grid, base, amp: &self.amp * k, phase: self.phase.clone() }
    }
}

/// Wraps an angle to (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        PI
    } else {
        y
    }
}

/// Natural-log amplitude and wrapped phase of every CFR sample.
pub fn log_transform(ens: &ChannelEnsemble) -> Result<LogCfr> {
    let (n, m) = (ens.n_meas(), ens.m_samples());
    if let Some(i) = ens.data().iter().position(|h| h.norm_sqr() == 0.0) {
        return Err(Error::ZeroEntry { row: i / m, col: i % m });
    }
    let amp = DMatrix::from_fn(n, m, |r, k| ens.row(r)[k].norm().ln());
    let phase = DMatrix::from_fn(n, m, |r, k| {
        let h = ens.row(r)[k];
        // atan2 returns [−π, π]; −π only for a negative real with −0.0 imaginary part.
        let p = h.arg();
        if p <= -PI {
            PI
        } else {
            p
        }
    });
    Ok(LogCfr { grid: *ens.grid(), base: LogBase::Natural, amp, phase })
}

/// Inverse of [`log_transform`].
pub fn exp_transform(log_cfr: &LogCfr) -> Result<ChannelEnsemble> {
    if log_cfr.amp.shape() != log_cfr.phase.shape() {
        return Err(Error::ShapeMismatch(format!(
            "amplitude {:?} vs phase {:?}",
            log_cfr.amp.shape(),
            log_cfr.phase.shape()
        )));
    }
    if log_cfr.amp.ncols() != log_cfr.grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} columns for a {}-sample grid",
            log_cfr.amp.ncols(),
            log_cfr.grid.len()
        )));
    }
    if let Some(i) = log_cfr.amp.iter().chain(log_cfr.phase.iter()).position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(format!("log-CFR entry {i} (column-major)")));
    }
    let to_nat = 1.0 / log_cfr.base.scale_from_natural();
    let (n, m) = log_cfr.amp.shape();
    let mut data = Vec::with_capacity(n * m);
    for r in 0..n {
        for k in 0..m {
            data.push(Complex64::from_polar((log_cfr.amp[(r, k)] * to_nat).exp(), log_cfr.phase[(r, k)]));
        }
    }
    ChannelEnsemble::new(log_cfr.grid, n, data)
}
