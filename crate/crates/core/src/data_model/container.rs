//! Two-file ensemble container.
//!
//! A JSON manifest describes the tensor; a sibling binary payload holds
//! little-endian `f64` pairs `(re, im)` in row-major `(meas, rx, tx, freq)`
//! order. SISO ensembles are stored with `n_rx = n_tx = 1`.
//!
//! ```json
//! {"format_version":1,"kind":"mimo","n_meas":32,"n_rx":3,"n_tx":2,
//!  "m_samples":128,"f_start_hz":1.8e6,"f_end_hz":1.0e8,"dtype":"c128le",
//!  "payload":"demo.bin","rx_modes":["P","N","CM"],"tx_modes":["L-N","L-PE"]}
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::ensemble::{ChannelEnsemble, MimoChannelEnsemble};
use super::grid::FrequencyGrid;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_C128LE: &str = "c128le";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    Siso,
    Mimo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: EnsembleKind,
    pub n_meas: usize,
    pub n_rx: usize,
    pub n_tx: usize,
    pub m_samples: usize,
    pub f_start_hz: f64,
    pub f_end_hz: f64,
    pub dtype: String,
    pub payload: String,
    #[serde(default)]
    pub rx_modes: Vec<String>,
    #[serde(default)]
    pub tx_modes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    /// Free-form record of how the file was produced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

/// Either kind of ensemble, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Ensemble {
    Siso(ChannelEnsemble),
    Mimo(MimoChannelEnsemble),
}

impl Ensemble {
    pub fn kind(&self) -> EnsembleKind {
        match self {
            Ensemble::Siso(_) => EnsembleKind::Siso,
            Ensemble::Mimo(_) => EnsembleKind::Mimo,
        }
    }

    pub fn grid(&self) -> &FrequencyGrid {
        match self {
            Ensemble::Siso(e) => e.grid(),
            Ensemble::Mimo(e) => e.grid(),
        }
    }

    pub fn n_meas(&self) -> usize {
        match self {
            Ensemble::Siso(e) => e.n_meas(),
            Ensemble::Mimo(e) => e.n_meas(),
        }
    }

    /// MIMO view (1×1 for SISO).
    pub fn to_mimo(&self) -> MimoChannelEnsemble {
        match self {
            Ensemble::Siso(e) => MimoChannelEnsemble::from_siso(e),
            Ensemble::Mimo(e) => e.clone(),
        }
    }
}

impl From<ChannelEnsemble> for Ensemble {
    fn from(e: ChannelEnsemble) -> Self {
        Ensemble::Siso(e)
    }
}

impl From<MimoChannelEnsemble> for Ensemble {
    fn from(e: MimoChannelEnsemble) -> Self {
        Ensemble::Mimo(e)
    }
}

/// Payload path written next to `manifest_path`: same stem, `.bin` extension.
pub fn payload_path_for(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

/// Little-endian interleaved encoding of complex samples.
pub fn encode_c128le(data: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() * 16);
    for h in data {
        out.extend_from_slice(&h.re.to_le_bytes());
        out.extend_from_slice(&h.im.to_le_bytes());
    }
    out
}

pub fn decode_c128le(bytes: &[u8]) -> Vec<Complex64> {
    bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect()
}

pub fn encode_f64le(data: &[f64]) -> Vec<u8> {
    data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_f64le(bytes: &[u8]) -> Vec<f64> {
    bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

/// Builds the manifest and payload bytes for an ensemble without touching
/// the filesystem.
pub fn to_container(ens: &Ensemble, payload_name: &str) -> (Manifest, Vec<u8>) {
    let g = ens.grid();
    let (n_rx, n_tx, rx_modes, tx_modes, labels, data) = match ens {
        Ensemble::Siso(e) => (1, 1, vec![], vec![], e.labels(), e.data()),
        Ensemble::Mimo(e) => {
            (e.n_r(), e.n_t(), e.rx_mode_names().to_vec(), e.tx_mode_names().to_vec(), e.labels(), e.data())
        }
    };
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        kind: ens.kind(),
        n_meas: ens.n_meas(),
        n_rx,
        n_tx,
        m_samples: g.len(),
        f_start_hz: g.f_start(),
        f_end_hz: g.f_end(),
        dtype: DTYPE_C128LE.into(),
        payload: payload_name.into(),
        rx_modes,
        tx_modes,
        labels: labels.map(<[String]>::to_vec),
        provenance: None,
    };
    (manifest, encode_c128le(data))
}

/// Writes `manifest_path` and its `.bin` payload.
pub fn save_ensemble(ens: &Ensemble, manifest_path: &Path, provenance: Option<serde_json::Value>) -> Result<()> {
    let payload = payload_path_for(manifest_path);
    let payload_name = payload
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::format(manifest_path, "manifest path has no usable file name"))?;
    let (mut manifest, bytes) = to_container(ens, payload_name);
    manifest.provenance = provenance;
    write_file(&payload, &bytes)?;
    write_json(manifest_path, &manifest)
}

pub fn read_manifest(manifest_path: &Path) -> Result<Manifest> {
    read_json(manifest_path)
}

/// Reads a manifest and its payload, validating every dimension.
pub fn load_ensemble(manifest_path: &Path) -> Result<Ensemble> {
    let manifest = read_manifest(manifest_path)?;
    let bad = |msg: String| Error::format(manifest_path, msg);
    if manifest.format_version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format_version {}", manifest.format_version)));
    }
    if manifest.dtype != DTYPE_C128LE {
        return Err(bad(format!("unsupported dtype {:?}", manifest.dtype)));
    }
    let grid = FrequencyGrid::new(manifest.f_start_hz, manifest.f_end_hz, manifest.m_samples)?;
    let payload = manifest_path.parent().unwrap_or(Path::new(".")).join(&manifest.payload);
    let bytes = read_file(&payload)?;
    let count = manifest.n_meas * manifest.n_rx * manifest.n_tx * manifest.m_samples;
    if bytes.len() != count * 16 {
        return Err(Error::format(
            &payload,
            format!("payload has {} bytes, manifest implies {}", bytes.len(), count * 16),
        ));
    }
    let data = decode_c128le(&bytes);
    match manifest.kind {
        EnsembleKind::Siso => {
            if manifest.n_rx != 1 || manifest.n_tx != 1 {
                return Err(bad(format!("siso ensemble with n_rx={}, n_tx={}", manifest.n_rx, manifest.n_tx)));
            }
            let mut e = ChannelEnsemble::new(grid, manifest.n_meas, data)?;
            if let Some(l) = manifest.labels {
                e = e.with_labels(l)?;
            }
            Ok(Ensemble::Siso(e))
        }
        EnsembleKind::Mimo => {
            let rx = if manifest.rx_modes.is_empty() {
                (0..manifest.n_rx).map(|i| format!("rx{i}")).collect()
            } else {
                manifest.rx_modes
            };
            let tx = if manifest.tx_modes.is_empty() {
                (0..manifest.n_tx).map(|i| format!("tx{i}")).collect()
            } else {
                manifest.tx_modes
            };
            if rx.len() != manifest.n_rx || tx.len() != manifest.n_tx {
                return Err(bad(format!(
                    "{} rx / {} tx mode names for n_rx={}, n_tx={}",
                    rx.len(),
                    tx.len(),
                    manifest.n_rx,
                    manifest.n_tx
                )));
            }
            let mut e = MimoChannelEnsemble::new(grid, manifest.n_meas, rx, tx, data)?;
            if let Some(l) = manifest.labels {
                e = e.with_labels(l)?;
            }
            Ok(Ensemble::Mimo(e))
        }
    }
}

/// Reads a small SISO ensemble from CSV: one realization per line,
/// alternating `re,im` columns. Blank lines and lines starting with `#` are
/// skipped.
pub fn read_csv_ensemble(path: &Path, grid: FrequencyGrid) -> Result<ChannelEnsemble> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_ensemble(&text, grid).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(path, message),
        other => other,
    })
}

pub fn parse_csv_ensemble(text: &str, grid: FrequencyGrid) -> Result<ChannelEnsemble> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format("<csv>", format!("line {}: {e}", lineno + 1)))?;
        if values.len() != 2 * grid.len() {
            return Err(Error::format(
                "<csv>",
                format!("line {}: {} values, expected {}", lineno + 1, values.len(), 2 * grid.len()),
            ));
        }
        rows.push(values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect::<Vec<_>>());
    }
    ChannelEnsemble::from_rows(grid, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(m: usize) -> FrequencyGrid {
        FrequencyGrid::new(1.8e6, 100e6, m).unwrap()
    }

    fn mimo_fixture() -> MimoChannelEnsemble {
        let data: Vec<_> =
            (0..2 * 3 * 2 * 4).map(|i| Complex64::new((i as f64).sin() + 1e-3 * i as f64, -(i as f64) / 7.0)).collect();
        MimoChannelEnsemble::new(
            grid(4),
            2,
            vec!["P".into(), "N".into(), "CM".into()],
            vec!["L-N".into(), "L-PE".into()],
            data,
        )
        .unwrap()
    }

    #[test]
    fn mimo_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ens.json");
        let ens = Ensemble::Mimo(mimo_fixture());
        save_ensemble(&ens, &path, Some(serde_json::json!({"seed": 3}))).unwrap();
        let back = load_ensemble(&path).unwrap();
        assert_eq!(back, ens);
        let m = read_manifest(&path).unwrap();
        assert_eq!(m.payload, "ens.bin");
        assert_eq!(m.provenance.unwrap()["seed"], 3);
        let bytes = fs::read(dir.path().join("ens.bin")).unwrap();
        assert_eq!(bytes.len(), 2 * 3 * 2 * 4 * 16);
    }

    #[test]
    fn payload_layout_is_le_interleaved() {
        let e = ChannelEnsemble::new(grid(2), 1, vec![Complex64::new(1.5, -2.0), Complex64::new(0.25, 4.0)]).unwrap();
        let (m, bytes) = to_container(&Ensemble::Siso(e), "x.bin");
        assert_eq!(m.kind, EnsembleKind::Siso);
        assert_eq!((m.n_rx, m.n_tx), (1, 1));
        assert_eq!(&bytes[0..8], &1.5f64.to_le_bytes());
        assert_eq!(&bytes[8..16], &(-2.0f64).to_le_bytes());
        assert_eq!(&bytes[24..32], &4.0f64.to_le_bytes());
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["kind"], "siso");
        assert_eq!(json["dtype"], "c128le");
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ens.json");
        save_ensemble(&Ensemble::Mimo(mimo_fixture()), &path, None).unwrap();
        let bin = dir.path().join("ens.bin");
        let mut bytes = fs::read(&bin).unwrap();
        bytes.truncate(bytes.len() - 16);
        fs::write(&bin, bytes).unwrap();
        assert!(matches!(load_ensemble(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_manifest_is_io_error_with_path() {
        let err = load_ensemble(Path::new("/nonexistent/meas.json")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/meas.json"));
    }

    #[test]
    fn csv_import() {
        let text = "# two realizations\n1,0,0,1\n\n2,2,-1,0\n";
        let e = parse_csv_ensemble(text, grid(2)).unwrap();
        assert_eq!(e.n_meas(), 2);
        assert_eq!(e.row(0), &[Complex64::new(1., 0.), Complex64::new(0., 1.)]);
        assert_eq!(e.row(1)[0], Complex64::new(2., 2.));
        assert!(parse_csv_ensemble("1,0,0\n", grid(2)).is_err());
        assert!(parse_csv_ensemble("1,0,x,1\n", grid(2)).is_err());
    }
}
