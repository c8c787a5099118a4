//! Channel tensors, the frequency grid, log-domain transforms and the
//! on-disk ensemble container.

mod container;
mod ensemble;
mod grid;
mod log_cfr;

pub use container::{
    decode_c128le, decode_f64le, encode_c128le, encode_f64le, load_ensemble, parse_csv_ensemble, payload_path_for,
    read_csv_ensemble, read_manifest, save_ensemble, to_container, Ensemble, EnsembleKind, Manifest, DTYPE_C128LE,
    FORMAT_VERSION,
};
pub(crate) use container::{read_file, read_json, write_file, write_json};
pub use ensemble::{
    reshape_mimo, unreshape_mimo, unreshape_mimo_named, ChannelEnsemble, FlatAxis, MimoChannelEnsemble,
};
pub use grid::FrequencyGrid;
pub use log_cfr::{exp_transform, log_transform, wrap_phase, LogBase, LogCfr};
