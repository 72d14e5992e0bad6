//! Write a simulated panel in the raw CSV layout read by `jointdiff ingest`
//! (platform, long-format complements, complement metadata).
//!
//! `cargo run --release --example export_raw -- <dir> [horizon] [complements] [seed]`
//!
//! The bundled `fixtures/raw/` inputs were produced with
//! `export_raw fixtures/raw 120 3 11`.

use std::path::PathBuf;

use chrono::{Days, NaiveDate};
use jointdiff::model::DUMMY_NAMES;
use jointdiff::panel::TransformSet;
use jointdiff::simulate::{default_truth, simulate_panel};

const UNIT: f64 = 1e6;

fn raw(transforms: &TransformSet, name: &str, z: f64) -> f64 {
    transforms.get(name).map_or(z, |t| t.invert(z))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().ok_or("usage: export_raw <dir> [horizon] [complements] [seed]")?);
    let horizon: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(120);
    let j: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(11);

    let mut cfg = default_truth();
    cfg.horizon = horizon;
    cfg.seed = seed;
    cfg.launches = (0..j).map(|i| 1 + 20 * i).collect();
    cfg.complements = vec![cfg.complements[0].clone(); j];
    cfg.dummies = vec![Vec::new(); j];
    let sim = simulate_panel(&cfg)?;
    let (panel, tf) = (&sim.panel, &sim.transforms);
    std::fs::create_dir_all(&dir)?;
    let start = NaiveDate::from_ymd_opt(2009, 7, 1).unwrap();
    let date = |day: usize| (start + Days::new(day as u64 - 1)).format("%Y-%m-%d").to_string();

    let mut w = csv::Writer::from_path(dir.join("platform.csv"))?;
    let nx = panel.platform.frames[0].x.len();
    let mut header = vec!["date".to_string(), "adopters".into()];
    header.extend((1..=nx).map(|i| format!("competitor_{i}")));
    header.extend(["amo_contributions", "amo_queue", "addons_cumulative", "release"].map(String::from));
    w.write_record(&header)?;
    let effort = panel.platform.effort_raw.as_ref().ok_or("simulation without raw effort")?;
    let mut addons = 0.0f64;
    for (i, f) in panel.platform.frames.iter().enumerate() {
        let day = i + 1;
        let mut row = vec![date(day)];
        row.push(match panel.platform.observations[i] {
            Some(y) => format!("{:.0}", (y * UNIT).max(0.0)),
            None => "NA".into(),
        });
        for k in 0..nx {
            // one gap per competitor exercises forward filling
            if day == 10 + k {
                row.push("NA".into());
            } else {
                row.push(format!("{:.6}", 0.3 + raw(tf, &format!("platform.competitor{k}"), f.x[k])));
            }
        }
        row.push(format!("{:.3}", effort[i]));
        row.push(format!("{:.3}", raw(tf, "platform.queue", f.z[1])));
        addons = addons.max(raw(tf, "platform.addons", f.addons).round());
        row.push(format!("{addons:.0}"));
        row.push(if panel.platform_releases.contains(&day) { "1" } else { "0" }.into());
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("complements.csv"))?;
    w.write_record(["date", "complement_id", "downloads_cumulative", "usage", "rating_mean", "rating_var", "release"])?;
    let mut meta = csv::Writer::from_path(dir.join("metadata.csv"))?;
    let mut mh = vec!["complement_id", "category"];
    mh.extend(DUMMY_NAMES);
    meta.write_record(&mh)?;
    for (jj, c) in panel.complements.iter().enumerate() {
        let mut downloads = 0.0f64;
        for (i, f) in c.frames.iter().enumerate() {
            let day = c.launch + i;
            if let Some(y) = c.observations[i] {
                downloads = downloads.max((y * UNIT).round());
            }
            let id = &c.id;
            w.write_record([
                date(day),
                id.clone(),
                format!("{downloads:.0}"),
                format!("{:.3}", 1000.0 * (0.5 + raw(tf, &format!("complement.{id}.ol"), f.ol)).max(0.0)),
                format!("{:.4}", 3.5 + raw(tf, &format!("complement.{id}.stavg"), f.stavg)),
                format!("{:.4}", (1.0 + raw(tf, &format!("complement.{id}.rtv"), f.rtv)).max(0.0)),
                if c.releases.contains(&day) { "1" } else { "0" }.into(),
            ])?;
        }
        let mut row = vec![c.id.clone(), c.category.clone()];
        row.extend((0..DUMMY_NAMES.len()).map(|k| ((jj + k) % 2).to_string()));
        meta.write_record(&row)?;
    }
    w.flush()?;
    meta.flush()?;
    println!("wrote {} days, {} complements to {}", horizon, j, dir.display());
    Ok(())
}
