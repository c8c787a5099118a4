use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform frequency axis shared by ensembles, models and metrics.
///
/// Two grids are compatible only when all three defining fields are equal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct FrequencyGrid {
    f_start: f64,
    f_end: f64,
    m_samples: usize,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    f_start_hz: f64,
    f_end_hz: f64,
    m_samples: usize,
}

impl TryFrom<GridRepr> for FrequencyGrid {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        FrequencyGrid::new(r.f_start_hz, r.f_end_hz, r.m_samples)
    }
}

impl From<FrequencyGrid> for GridRepr {
    fn from(g: FrequencyGrid) -> Self {
        GridRepr { f_start_hz: g.f_start, f_end_hz: g.f_end, m_samples: g.m_samples }
    }
}

impl FrequencyGrid {
    pub fn new(f_start: f64, f_end: f64, m_samples: usize) -> Result<Self> {
        if !(f_start.is_finite() && f_end.is_finite()) {
            return Err(Error::InvalidGrid("band edges must be finite".into()));
        }
        if f_start <= 0.0 {
            return Err(Error::InvalidGrid(format!("f_start must be > 0, got {f_start}")));
        }
        if f_end <= f_start {
            return Err(Error::InvalidGrid(format!("f_end ({f_end}) must exceed f_start ({f_start})")));
        }
        if m_samples < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 samples, got {m_samples}")));
        }
        Ok(FrequencyGrid { f_start, f_end, m_samples })
    }

    pub fn f_start(&self) -> f64 {
        self.f_start
    }

    pub fn f_end(&self) -> f64 {
        self.f_end
    }

    pub fn len(&self) -> usize {
        self.m_samples
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn delta_f(&self) -> f64 {
        (self.f_end - self.f_start) / (self.m_samples - 1) as f64
    }

    pub fn bandwidth(&self) -> f64 {
        self.f_end - self.f_start
    }

    pub fn frequency(&self, k: usize) -> f64 {
        self.f_start + k as f64 * self.delta_f()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.m_samples).map(|k| self.frequency(k)).collect()
    }

    /// Keeps every `factor`-th sample starting at `f_start`; the result has
    /// `ceil(M / factor)` samples.
    pub fn decimate(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidArgument("decimation factor must be >= 1".into()));
        }
        if factor == 1 {
            return Ok(*self);
        }
        let m = self.m_samples.div_ceil(factor);
        if m < 2 {
            return Err(Error::InvalidGrid(format!(
                "decimating {} samples by {factor} leaves fewer than 2",
                self.m_samples
            )));
        }
        FrequencyGrid::new(self.f_start, self.frequency((m - 1) * factor), m)
    }

    pub(crate) fn ensure_compatible(&self, other: &FrequencyGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}
