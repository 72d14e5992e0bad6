//! Read the raw platform, complement and metadata CSVs and assemble a
//! standardized observation panel.
//!
//! `cargo run --release --example ingest_csv -- [dir]` (defaults to `fixtures/raw`)

use std::path::PathBuf;

use jointdiff::preprocess::{assemble_panel, read_raw_inputs, PreprocessConfig};

fn main() -> jointdiff::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/raw"));
    let raw = read_raw_inputs(&dir.join("platform.csv"), &dir.join("complements.csv"), &dir.join("metadata.csv"))?;
    let assembled = assemble_panel(&raw, &PreprocessConfig::default())?;
    let panel = &assembled.panel;

    println!("horizon {} days from {}", panel.horizon, panel.start_date.as_deref().unwrap_or("?"));
    println!("{} competitors, {} governance covariates", panel.n_competitors(), panel.n_governance());
    for c in &panel.complements {
        let observed = c.observations.iter().flatten().count();
        println!("{:<8} {:<10} days {:>3}..{:<3} observed {observed}", c.id, c.category, c.launch, c.end);
    }
    for w in assembled.warnings.iter().take(5) {
        println!("warning: {} day {}: {}", w.complement, w.day, w.message);
    }
    if assembled.warnings.len() > 5 {
        println!("... {} more warnings", assembled.warnings.len() - 5);
    }
    Ok(())
}
