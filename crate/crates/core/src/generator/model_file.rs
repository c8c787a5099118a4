//! Model files: a JSON envelope plus little-endian `f64` sidecars holding the
//! amplitude mean vector, the amplitude covariance and (SISO) the phase
//! normalized covariance. Matrices are stored row-major.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{FitMeta, MimoChannelModel, SisoChannelModel};
use crate::data_model::{
    decode_f64le, encode_f64le, read_file, read_json, write_file, write_json, EnsembleKind, FrequencyGrid,
};
use crate::error::{Error, Result};
use crate::estimation::{GaussianFieldParams, PhaseCovParams, SamplingMode, SlopeDistribution};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const DTYPE_F64LE: &str = "f64le";

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    Siso(SisoChannelModel),
    Mimo(MimoChannelModel),
}

impl ChannelModel {
    pub fn kind(&self) -> EnsembleKind {
        match self {
            ChannelModel::Siso(_) => EnsembleKind::Siso,
            ChannelModel::Mimo(_) => EnsembleKind::Mimo,
        }
    }

    pub fn grid(&self) -> &FrequencyGrid {
        match self {
            ChannelModel::Siso(m) => &m.grid,
            ChannelModel::Mimo(m) => &m.grid,
        }
    }

    pub fn fit_meta(&self) -> &FitMeta {
        match self {
            ChannelModel::Siso(m) => &m.fit_meta,
            ChannelModel::Mimo(m) => &m.fit_meta,
        }
    }

    pub fn fit_meta_mut(&mut self) -> &mut FitMeta {
        match self {
            ChannelModel::Siso(m) => &mut m.fit_meta,
            ChannelModel::Mimo(m) => &mut m.fit_meta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPayload {
    pub amp_mean: String,
    pub amp_cov: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_norm_cov: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEnvelope {
    pub format_version: u32,
    pub kind: EnsembleKind,
    pub grid: FrequencyGrid,
    pub n_r: usize,
    pub n_t: usize,
    #[serde(default)]
    pub rx_modes: Vec<String>,
    #[serde(default)]
    pub tx_modes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_mode: Option<SamplingMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_samples: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_summary: Option<SlopeSummary>,
    pub dtype: String,
    pub payload: ModelPayload,
    pub fit_meta: FitMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

fn sidecar_name(manifest_path: &Path, part: &str) -> Result<String> {
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::format(manifest_path, "model path has no usable file name"))?;
    Ok(format!("{stem}.{part}.bin"))
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Writes the model envelope to `path` and its sidecars next to it.
pub fn save_model(model: &ChannelModel, path: &Path, provenance: Option<serde_json::Value>) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let (amp, grid, fit_meta) = match model {
        ChannelModel::Siso(m) => (&m.amp, m.grid, m.fit_meta.clone()),
        ChannelModel::Mimo(m) => (&m.amp_joint, m.grid, m.fit_meta.clone()),
    };
    let payload = ModelPayload {
        amp_mean: sidecar_name(path, "amp_mean")?,
        amp_cov: sidecar_name(path, "amp_cov")?,
        phase_norm_cov: match model {
            ChannelModel::Siso(_) => Some(sidecar_name(path, "phase_cov")?),
            ChannelModel::Mimo(_) => None,
        },
    };
    write_file(&dir.join(&payload.amp_mean), &encode_f64le(amp.mean.as_slice()))?;
    write_file(&dir.join(&payload.amp_cov), &encode_f64le(&row_major(&amp.cov)))?;
    let mut env = ModelEnvelope {
        format_version: MODEL_FORMAT_VERSION,
        kind: model.kind(),
        grid,
        n_r: 1,
        n_t: 1,
        rx_modes: vec![],
        tx_modes: vec![],
        sampling_mode: None,
        slope_samples: None,
        slope_summary: None,
        dtype: DTYPE_F64LE.into(),
        payload,
        fit_meta,
        provenance,
    };
    match model {
        ChannelModel::Siso(m) => {
            let name = env.payload.phase_norm_cov.as_ref().expect("siso has phase sidecar");
            write_file(&dir.join(name), &encode_f64le(&row_major(&m.phase_cov.norm_cov)))?;
        }
        ChannelModel::Mimo(m) => {
            env.n_r = m.n_r();
            env.n_t = m.n_t();
            env.rx_modes = m.rx_mode_names.clone();
            env.tx_modes = m.tx_mode_names.clone();
            env.sampling_mode = Some(m.slope_dist.mode());
            env.slope_samples = (!m.slope_dist.samples().is_empty()).then(|| m.slope_dist.samples().to_vec());
            env.slope_summary = Some(SlopeSummary { mean: m.slope_dist.mean(), std: m.slope_dist.std() });
        }
    }
    write_json(path, &env)
}

fn read_vector(path: &Path, len: usize) -> Result<Vec<f64>> {
    let bytes = read_file(path)?;
    if bytes.len() != len * 8 {
        return Err(Error::format(path, format!("{} bytes, expected {}", bytes.len(), len * 8)));
    }
    Ok(decode_f64le(&bytes))
}

fn read_square(path: &Path, d: usize) -> Result<DMatrix<f64>> {
    Ok(DMatrix::from_row_slice(d, d, &read_vector(path, d * d)?))
}

pub fn load_model(path: &Path) -> Result<ChannelModel> {
    let env: ModelEnvelope = read_json(path)?;
    let bad = |msg: String| Error::format(path, msg);
    if env.format_version != MODEL_FORMAT_VERSION {
        return Err(bad(format!("unsupported format_version {}", env.format_version)));
    }
    if env.dtype != DTYPE_F64LE {
        return Err(bad(format!("unsupported dtype {:?}", env.dtype)));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let m = env.grid.len();
    match env.kind {
        EnsembleKind::Siso => {
            let mean = DVector::from_vec(read_vector(&dir.join(&env.payload.amp_mean), m)?);
            let cov = read_square(&dir.join(&env.payload.amp_cov), m)?;
            let phase_name = env
                .payload
                .phase_norm_cov
                .as_ref()
                .ok_or_else(|| bad("siso model without phase_norm_cov payload".into()))?;
            let phase = read_square(&dir.join(phase_name), m)?;
            let model = SisoChannelModel::new(
                env.grid,
                GaussianFieldParams::from_mean_cov(mean, cov)?,
                PhaseCovParams::new(phase)?,
                env.fit_meta,
            )?;
            Ok(ChannelModel::Siso(model))
        }
        EnsembleKind::Mimo => {
            let rx =
                if env.rx_modes.is_empty() { (0..env.n_r).map(|i| format!("rx{i}")).collect() } else { env.rx_modes };
            let tx =
                if env.tx_modes.is_empty() { (0..env.n_t).map(|i| format!("tx{i}")).collect() } else { env.tx_modes };
            if rx.len() != env.n_r || tx.len() != env.n_t {
                return Err(bad("mode name lists disagree with n_r/n_t".into()));
            }
            let d = env.n_r * env.n_t * m;
            let mean = DVector::from_vec(read_vector(&dir.join(&env.payload.amp_mean), d)?);
            let cov = read_square(&dir.join(&env.payload.amp_cov), d)?;
            let slope_dist = match (env.slope_samples, env.slope_summary) {
                (Some(samples), _) => {
                    SlopeDistribution::from_samples(samples)?.with_mode(env.sampling_mode.unwrap_or_default())?
                }
                (None, Some(s)) => {
                    if env.sampling_mode == Some(SamplingMode::Empirical) {
                        return Err(Error::EmptySlopeSamples);
                    }
                    SlopeDistribution::from_summary(s.mean, s.std)?
                }
                (None, None) => return Err(bad("mimo model without slope_samples or slope_summary".into())),
            };
            let model = MimoChannelModel::new(
                env.grid,
                rx,
                tx,
                GaussianFieldParams::from_mean_cov(mean, cov)?,
                slope_dist,
                env.fit_meta,
            )?;
            Ok(ChannelModel::Mimo(model))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::generator::{fit_mimo, fit_siso};

    #[test]
    fn siso_model_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = ChannelModel::Siso(fit_siso(&fixtures::siso_demo()).unwrap());
        save_model(&model, &path, None).unwrap();
        assert!(dir.path().join("model.amp_cov.bin").exists());
        assert_eq!(load_model(&path).unwrap(), model);
    }

    #[test]
    fn mimo_model_roundtrip_and_summary_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = ChannelModel::Mimo(fit_mimo(&fixtures::mimo_demo()).unwrap());
        save_model(&model, &path, Some(serde_json::json!({"seed": 1}))).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);

        let mut env: ModelEnvelope = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        env.slope_samples = None;
        env.sampling_mode = None;
        std::fs::write(&path, serde_json::to_vec(&env).unwrap()).unwrap();
        let ChannelModel::Mimo(m) = load_model(&path).unwrap() else { panic!("kind changed") };
        assert_eq!(m.slope_dist.mode(), SamplingMode::Gaussian);
        assert!(m.slope_dist.samples().is_empty());

        env.sampling_mode = Some(SamplingMode::Empirical);
        std::fs::write(&path, serde_json::to_vec(&env).unwrap()).unwrap();
        assert!(matches!(load_model(&path), Err(Error::EmptySlopeSamples)));
    }

    #[test]
    fn corrupt_sidecar_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&ChannelModel::Siso(fit_siso(&fixtures::siso_demo()).unwrap()), &path, None).unwrap();
        std::fs::write(dir.path().join("model.amp_mean.bin"), [0u8; 12]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format { .. })));
    }
}
