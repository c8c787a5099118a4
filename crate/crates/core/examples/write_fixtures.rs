//! Regenerates the bundled demo files: `cargo run -p plcsynth --example write_fixtures -- <dir>`.

use std::path::PathBuf;

use plcsynth::data_model::{save_ensemble, Ensemble};
use plcsynth::fixtures::{self, FIXTURE_SEED};
use plcsynth::validation::Thresholds;
use serde_json::json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir)?;
    let siso = Ensemble::Siso(fixtures::siso_demo());
    let mimo = Ensemble::Mimo(fixtures::mimo_demo());
    save_ensemble(&siso, &dir.join("siso_demo.json"), Some(json!({ "source": "siso_demo", "seed": FIXTURE_SEED })))?;
    save_ensemble(&mimo, &dir.join("mimo_demo.json"), Some(json!({ "source": "mimo_demo", "seed": FIXTURE_SEED })))?;
    fixtures::demo_noise().save(&dir.join("noise.json"))?;
    fixtures::demo_tx().save(&dir.join("tx.json"))?;
    std::fs::write(dir.join("thresholds.json"), serde_json::to_string_pretty(&Thresholds::default())? + "\n")?;
    println!("wrote fixtures to {}", dir.display());
    Ok(())
}
