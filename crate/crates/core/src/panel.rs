//! The unbalanced daily observation panel and its on-disk form.
//!
//! Days are 1-based: the platform is observed on `1..=horizon`, complement `j`
//! on `launch..=end`. Observations are `None` when missing; covariates are
//! always present.
//!
//! On disk a panel is one JSON document (`schema = "jointdiff.panel/1"`) with
//! every series stored column-wise; see `docs/formats.md` at the repository
//! root.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ComplementFrame, PlatformFrame};
use crate::preprocess::TransformRecord;

pub const PANEL_SCHEMA: &str = "jointdiff.panel/1";
pub const TRANSFORMS_SCHEMA: &str = "jointdiff.transforms/1";

/// Index of the AMO-contribution column inside `PlatformFrame::z`.
pub const EFFORT_COLUMN: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct PlatformSeries {
    pub observations: Vec<Option<f64>>,
    pub frames: Vec<PlatformFrame>,
    /// Raw daily AMO contributions, before standardization. `frames[t].z[EFFORT_COLUMN]`
    /// is its transform.
    pub effort_raw: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplementSeries {
    pub id: String,
    pub category: String,
    pub launch: usize,
    pub end: usize,
    pub observations: Vec<Option<f64>>,
    pub frames: Vec<ComplementFrame>,
    /// Business-model / license dummies, without the intercept.
    pub dummies: Vec<f64>,
    /// Release days of the complement.
    pub releases: Vec<usize>,
}

impl ComplementSeries {
    pub fn len(&self) -> usize {
        self.end + 1 - self.launch
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.launch
    }

    pub fn days(&self) -> std::ops::RangeInclusive<usize> {
        self.launch..=self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPanel {
    pub horizon: usize,
    /// ISO-8601 date of day 1, when known.
    pub start_date: Option<String>,
    pub platform: PlatformSeries,
    pub complements: Vec<ComplementSeries>,
    pub platform_releases: Vec<usize>,
    /// Decay used to build the smoothed release signals.
    pub release_decay: f64,
}

impl ObservationPanel {
    pub fn n_competitors(&self) -> usize {
        self.platform.frames.first().map_or(0, |f| f.x.len())
    }

    pub fn n_governance(&self) -> usize {
        self.platform.frames.first().map_or(0, |f| f.z.len())
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.horizon;
        if t < 2 {
            return Err(Error::WindowViolation(format!("horizon {t} < 2")));
        }
        if self.platform.observations.len() != t || self.platform.frames.len() != t {
            return Err(Error::DimensionMismatch {
                what: "platform series length",
                expected: t,
                got: self.platform.observations.len().min(self.platform.frames.len()),
            });
        }
        let (nx, nz) = (self.n_competitors(), self.n_governance());
        for f in &self.platform.frames {
            if f.x.len() != nx || f.z.len() != nz {
                return Err(Error::DimensionMismatch {
                    what: "platform covariate width",
                    expected: nx + nz,
                    got: f.x.len() + f.z.len(),
                });
            }
        }
        if let Some(raw) = &self.platform.effort_raw {
            if raw.len() != t {
                return Err(Error::DimensionMismatch { what: "raw effort length", expected: t, got: raw.len() });
            }
        }
        for c in &self.complements {
            if c.launch < 1 || c.end > t || c.launch > c.end {
                return Err(Error::WindowViolation(format!(
                    "complement '{}' window [{}, {}] outside [1, {}]",
                    c.id, c.launch, c.end, t
                )));
            }
            if c.observations.len() != c.len() || c.frames.len() != c.len() {
                return Err(Error::DimensionMismatch {
                    what: "complement series length",
                    expected: c.len(),
                    got: c.observations.len().min(c.frames.len()),
                });
            }
        }
        Ok(())
    }

    /// Keep days `1..=day` only. Complements launched after `day` are dropped.
    pub fn truncate(&self, day: usize) -> ObservationPanel {
        let day = day.min(self.horizon);
        let mut out = self.clone();
        out.horizon = day;
        out.platform.observations.truncate(day);
        out.platform.frames.truncate(day);
        if let Some(raw) = out.platform.effort_raw.as_mut() {
            raw.truncate(day);
        }
        out.platform_releases.retain(|&d| d <= day);
        out.complements.retain(|c| c.launch <= day);
        for c in &mut out.complements {
            if c.end > day {
                c.end = day;
                let n = c.len();
                c.observations.truncate(n);
                c.frames.truncate(n);
            }
            c.releases.retain(|&d| d <= day);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = PanelFile::from(self);
        let text = serde_json::to_string_pretty(&file)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: PanelFile =
            serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.into(), message: e.to_string() })?;
        if file.schema != PANEL_SCHEMA {
            return Err(Error::Parse { path: path.into(), message: format!("unexpected schema '{}'", file.schema) });
        }
        let panel = ObservationPanel::try_from(file)?;
        panel.validate()?;
        Ok(panel)
    }
}

/// Named transform records written next to a panel.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TransformSet {
    pub records: Vec<TransformRecord>,
}

impl TransformSet {
    pub fn get(&self, name: &str) -> Option<&TransformRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn push(&mut self, rec: TransformRecord) {
        self.records.push(rec);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct File<'a> {
            schema: &'a str,
            records: &'a [TransformRecord],
        }
        let text = serde_json::to_string_pretty(&File { schema: TRANSFORMS_SCHEMA, records: &self.records })?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            records: Vec<TransformRecord>,
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let f: File =
            serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.into(), message: e.to_string() })?;
        Ok(Self { records: f.records })
    }
}

// ---------------------------------------------------------------------------
// column-wise file representation

#[derive(Debug, Serialize, Deserialize)]
struct PanelFile {
    schema: String,
    horizon: usize,
    start_date: Option<String>,
    release_decay: f64,
    platform_releases: Vec<usize>,
    platform: PlatformColumns,
    complements: Vec<ComplementColumns>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PlatformColumns {
    adopters: Vec<Option<f64>>,
    /// One column per competitor.
    competitors: Vec<Vec<f64>>,
    /// One column per governance covariate; column 0 is AMO contributions.
    governance: Vec<Vec<f64>>,
    addons: Vec<f64>,
    effort_raw: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ComplementColumns {
    id: String,
    category: String,
    launch: usize,
    end: usize,
    dummies: Vec<f64>,
    releases: Vec<usize>,
    adopters: Vec<Option<f64>>,
    pv: Vec<f64>,
    av: Vec<f64>,
    rtv: Vec<f64>,
    stavg: Vec<f64>,
    ol: Vec<f64>,
}

impl From<&ObservationPanel> for PanelFile {
    fn from(p: &ObservationPanel) -> Self {
        let nx = p.n_competitors();
        let nz = p.n_governance();
        let frames = &p.platform.frames;
        PanelFile {
            schema: PANEL_SCHEMA.into(),
            horizon: p.horizon,
            start_date: p.start_date.clone(),
            release_decay: p.release_decay,
            platform_releases: p.platform_releases.clone(),
            platform: PlatformColumns {
                adopters: p.platform.observations.clone(),
                competitors: (0..nx).map(|i| frames.iter().map(|f| f.x[i]).collect()).collect(),
                governance: (0..nz).map(|i| frames.iter().map(|f| f.z[i]).collect()).collect(),
                addons: frames.iter().map(|f| f.addons).collect(),
                effort_raw: p.platform.effort_raw.clone(),
            },
            complements: p
                .complements
                .iter()
                .map(|c| ComplementColumns {
                    id: c.id.clone(),
                    category: c.category.clone(),
                    launch: c.launch,
                    end: c.end,
                    dummies: c.dummies.clone(),
                    releases: c.releases.clone(),
                    adopters: c.observations.clone(),
                    pv: c.frames.iter().map(|f| f.pv).collect(),
                    av: c.frames.iter().map(|f| f.av).collect(),
                    rtv: c.frames.iter().map(|f| f.rtv).collect(),
                    stavg: c.frames.iter().map(|f| f.stavg).collect(),
                    ol: c.frames.iter().map(|f| f.ol).collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<PanelFile> for ObservationPanel {
    type Error = Error;

    fn try_from(f: PanelFile) -> Result<Self> {
        let t = f.horizon;
        let col_len = |what: &'static str, len: usize, expected: usize| {
            if len == expected {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { what, expected, got: len })
            }
        };
        col_len("platform adopters", f.platform.adopters.len(), t)?;
        col_len("platform addons", f.platform.addons.len(), t)?;
        for c in f.platform.competitors.iter().chain(&f.platform.governance) {
            col_len("platform covariate column", c.len(), t)?;
        }
        let frames = (0..t)
            .map(|i| PlatformFrame {
                x: f.platform.competitors.iter().map(|c| c[i]).collect(),
                z: f.platform.governance.iter().map(|c| c[i]).collect(),
                addons: f.platform.addons[i],
            })
            .collect();
        let mut complements = Vec::with_capacity(f.complements.len());
        for c in f.complements {
            let n = c.adopters.len();
            for col in [&c.pv, &c.av, &c.rtv, &c.stavg, &c.ol] {
                col_len("complement covariate column", col.len(), n)?;
            }
            let frames = (0..n)
                .map(|i| ComplementFrame { pv: c.pv[i], av: c.av[i], rtv: c.rtv[i], stavg: c.stavg[i], ol: c.ol[i] })
                .collect();
            complements.push(ComplementSeries {
                id: c.id,
                category: c.category,
                launch: c.launch,
                end: c.end,
                observations: c.adopters,
                frames,
                dummies: c.dummies,
                releases: c.releases,
            });
        }
        Ok(ObservationPanel {
            horizon: t,
            start_date: f.start_date,
            platform: PlatformSeries { observations: f.platform.adopters, frames, effort_raw: f.platform.effort_raw },
            complements,
            platform_releases: f.platform_releases,
            release_decay: f.release_decay,
        })
    }
}
