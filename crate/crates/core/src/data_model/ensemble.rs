use num_complex::Complex64;

use super::grid::FrequencyGrid;
use crate::error::{Error, Result};

/// Records that an ensemble's column axis is a flattened (rx, tx, freq)
/// index rather than physical frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatAxis {
    pub n_r: usize,
    pub n_t: usize,
    pub physical_grid: FrequencyGrid,
}

/// `N_M × M` complex channel frequency responses, one realization per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEnsemble {
    grid: FrequencyGrid,
    n_meas: usize,
    data: Vec<Complex64>,
    labels: Option<Vec<String>>,
    flat_axis: Option<FlatAxis>,
}

impl ChannelEnsemble {
    /// Builds an ensemble from row-major data (`n_meas` rows of `grid.len()`).
    pub fn new(grid: FrequencyGrid, n_meas: usize, data: Vec<Complex64>) -> Result<Self> {
        let m = grid.len();
        if n_meas == 0 {
            return Err(Error::InvalidEnsemble("ensemble has no realizations".into()));
        }
        if data.len() != n_meas * m {
            return Err(Error::DimensionMismatch(format!("{} entries for {n_meas} rows of {m} samples", data.len())));
        }
        if let Some(i) = data.iter().position(|h| !(h.re.is_finite() && h.im.is_finite())) {
            return Err(Error::NonFiniteInput(format!("row {}, column {}", i / m, i % m)));
        }
        if let Some(r) = data.chunks_exact(m).position(|row| row.iter().all(|h| h.norm_sqr() == 0.0)) {
            return Err(Error::InvalidEnsemble(format!("row {r} is identically zero")));
        }
        Ok(ChannelEnsemble { grid, n_meas, data, labels: None, flat_axis: None })
    }

    /// Builds an ensemble from a list of equally long rows.
    pub fn from_rows(grid: FrequencyGrid, rows: &[Vec<Complex64>]) -> Result<Self> {
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != grid.len()) {
            return Err(Error::DimensionMismatch(format!("row {i} has {} samples, grid has {}", r.len(), grid.len())));
        }
        Self::new(grid, rows.len(), rows.concat())
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_meas {
            return Err(Error::DimensionMismatch(format!("{} labels for {} realizations", labels.len(), self.n_meas)));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn n_meas(&self) -> usize {
        self.n_meas
    }

    pub fn m_samples(&self) -> usize {
        self.grid.len()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        let m = self.m_samples();
        &self.data[r * m..(r + 1) * m]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, Complex64> {
        self.data.chunks_exact(self.m_samples())
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn flat_axis(&self) -> Option<&FlatAxis> {
        self.flat_axis.as_ref()
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    /// Keeps every `factor`-th frequency sample.
    pub fn decimate(&self, factor: usize) -> Result<Self> {
        if self.flat_axis.is_some() {
            return Err(Error::InvalidArgument("cannot decimate a flattened MIMO axis".into()));
        }
        let grid = self.grid.decimate(factor)?;
        let data = self.rows().flat_map(|row| row.iter().step_by(factor).take(grid.len()).copied()).collect();
        let mut out = ChannelEnsemble::new(grid, self.n_meas, data)?;
        out.labels = self.labels.clone();
        Ok(out)
    }
}

/// `N_M × N_R × N_T × M` complex MIMO responses stored row-major in
/// (meas, rx, tx, freq) order.
#[derive(Debug, Clone, PartialEq)]
pub struct MimoChannelEnsemble {
    grid: FrequencyGrid,
    n_meas: usize,
    n_r: usize,
    n_t: usize,
    data: Vec<Complex64>,
    rx_mode_names: Vec<String>,
    tx_mode_names: Vec<String>,
    labels: Option<Vec<String>>,
}

impl MimoChannelEnsemble {
    pub fn new(
        grid: FrequencyGrid,
        n_meas: usize,
        rx_mode_names: Vec<String>,
        tx_mode_names: Vec<String>,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        let (n_r, n_t) = (rx_mode_names.len(), tx_mode_names.len());
        if n_meas == 0 || n_r == 0 || n_t == 0 {
            return Err(Error::InvalidEnsemble(format!("empty dimension: n_meas={n_meas}, n_r={n_r}, n_t={n_t}")));
        }
        let expect = n_meas * n_r * n_t * grid.len();
        if data.len() != expect {
            return Err(Error::DimensionMismatch(format!(
                "{} entries, expected {n_meas}×{n_r}×{n_t}×{} = {expect}",
                data.len(),
                grid.len()
            )));
        }
        if let Some(i) = data.iter().position(|h| !(h.re.is_finite() && h.im.is_finite())) {
            return Err(Error::NonFiniteInput(format!("flat index {i}")));
        }
        Ok(MimoChannelEnsemble { grid, n_meas, n_r, n_t, data, rx_mode_names, tx_mode_names, labels: None })
    }

    /// Default mode names `rx0..`, `tx0..`.
    pub fn with_default_modes(
        grid: FrequencyGrid,
        n_meas: usize,
        n_r: usize,
        n_t: usize,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        let rx = (0..n_r).map(|i| format!("rx{i}")).collect();
        let tx = (0..n_t).map(|i| format!("tx{i}")).collect();
        Self::new(grid, n_meas, rx, tx, data)
    }

    /// Views a SISO ensemble as a 1×1 MIMO ensemble.
    pub fn from_siso(ens: &ChannelEnsemble) -> Self {
        MimoChannelEnsemble {
            grid: ens.grid,
            n_meas: ens.n_meas,
            n_r: 1,
            n_t: 1,
            data: ens.data.clone(),
            rx_mode_names: vec!["rx0".into()],
            tx_mode_names: vec!["tx0".into()],
            labels: ens.labels.clone(),
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_meas {
            return Err(Error::DimensionMismatch(format!("{} labels for {} realizations", labels.len(), self.n_meas)));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn n_meas(&self) -> usize {
        self.n_meas
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn m_samples(&self) -> usize {
        self.grid.len()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn rx_mode_names(&self) -> &[String] {
        &self.rx_mode_names
    }

    pub fn tx_mode_names(&self) -> &[String] {
        &self.tx_mode_names
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// All `N_R·N_T·M` samples of one realization.
    pub fn realization(&self, r: usize) -> &[Complex64] {
        let d = self.n_r * self.n_t * self.m_samples();
        &self.data[r * d..(r + 1) * d]
    }

    /// CFR of a single (rx, tx) link.
    pub fn link(&self, r: usize, rx: usize, tx: usize) -> &[Complex64] {
        let m = self.m_samples();
        let start = ((r * self.n_r + rx) * self.n_t + tx) * m;
        &self.data[start..start + m]
    }

    /// Channel matrix `H_k` (N_R × N_T) at tone `k`.
    pub fn tone_matrix(&self, r: usize, k: usize) -> nalgebra::DMatrix<Complex64> {
        nalgebra::DMatrix::from_fn(self.n_r, self.n_t, |rx, tx| self.link(r, rx, tx)[k])
    }

    pub fn decimate(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.decimate(factor)?;
        let data = self
            .data
            .chunks_exact(self.m_samples())
            .flat_map(|link| link.iter().step_by(factor).take(grid.len()).copied())
            .collect();
        let mut out =
            MimoChannelEnsemble::new(grid, self.n_meas, self.rx_mode_names.clone(), self.tx_mode_names.clone(), data)?;
        out.labels = self.labels.clone();
        Ok(out)
    }
}

/// Flattens each MIMO realization into one row of `N_R·N_T·M` columns.
///
/// Column order is rx-major, then tx, then frequency:
/// `col = ((rx·N_T) + tx)·M + k`. The output grid is synthetic (same start
/// and spacing, `N_R·N_T·M` samples); [`ChannelEnsemble::flat_axis`] records
/// the physical layout.
pub fn reshape_mimo(mimo: &MimoChannelEnsemble) -> ChannelEnsemble {
    let m_flat = mimo.n_r * mimo.n_t * mimo.m_samples();
    let grid = if mimo.n_r * mimo.n_t == 1 {
        mimo.grid
    } else {
        let g = &mimo.grid;
        FrequencyGrid::new(g.f_start(), g.f_start() + (m_flat - 1) as f64 * g.delta_f(), m_flat)
            .expect("flattened grid is valid whenever the physical grid is")
    };
    let flat_axis =
        (mimo.n_r * mimo.n_t != 1).then_some(FlatAxis { n_r: mimo.n_r, n_t: mimo.n_t, physical_grid: mimo.grid });
    ChannelEnsemble {
        grid,
        n_meas: mimo.n_meas,
        // (meas, rx, tx, freq) row-major storage already is the flattened order.
        data: mimo.data.clone(),
        labels: mimo.labels.clone(),
        flat_axis,
    }
}

/// Inverse of [`reshape_mimo`]. `grid` is the physical frequency grid of the
/// unflattened ensemble; when `flat` carries a [`FlatAxis`], it is used and
/// must agree with `n_r`, `n_t` and `m`.
pub fn unreshape_mimo(flat: &ChannelEnsemble, n_r: usize, n_t: usize, m: usize) -> Result<MimoChannelEnsemble> {
    if n_r * n_t * m != flat.m_samples() {
        return Err(Error::DimensionMismatch(format!(
            "{n_r}·{n_t}·{m} = {} but ensemble has {} columns",
            n_r * n_t * m,
            flat.m_samples()
        )));
    }
    let grid = match &flat.flat_axis {
        Some(ax) => {
            if ax.n_r != n_r || ax.n_t != n_t || ax.physical_grid.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "flattened axis is {}×{}×{}, requested {n_r}×{n_t}×{m}",
                    ax.n_r,
                    ax.n_t,
                    ax.physical_grid.len()
                )));
            }
            ax.physical_grid
        }
        None if n_r * n_t == 1 => flat.grid,
        None => {
            let g = &flat.grid;
            FrequencyGrid::new(g.f_start(), g.f_start() + (m - 1) as f64 * g.delta_f(), m)?
        }
    };
    let mut out = MimoChannelEnsemble::with_default_modes(grid, flat.n_meas, n_r, n_t, flat.data.clone())?;
    out.labels = flat.labels.clone();
    Ok(out)
}

/// Like [`unreshape_mimo`] but keeps the given mode names.
pub fn unreshape_mimo_named(
    flat: &ChannelEnsemble,
    rx_mode_names: Vec<String>,
    tx_mode_names: Vec<String>,
    m: usize,
) -> Result<MimoChannelEnsemble> {
    let base = unreshape_mimo(flat, rx_mode_names.len(), tx_mode_names.len(), m)?;
    let mut out = MimoChannelEnsemble::new(base.grid, base.n_meas, rx_mode_names, tx_mode_names, base.data)?;
    out.labels = base.labels;
    Ok(out)
}
