//! Covariate construction: release smoothing, observational-learning shares,
//! standardization with recorded inverse transforms, and panel assembly from
//! raw daily inputs.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ComplementFrame, PlatformFrame};
use crate::panel::{ComplementSeries, ObservationPanel, PlatformSeries, TransformSet};

pub const DEFAULT_RELEASE_DECAY: f64 = 0.89;

/// Sorted release days of one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseLog {
    pub id: String,
    days: Vec<usize>,
}

impl ReleaseLog {
    pub fn new(id: impl Into<String>, days: Vec<usize>) -> Result<Self> {
        if days.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("release days must be strictly increasing".into()));
        }
        Ok(Self { id: id.into(), days })
    }

    pub fn days(&self) -> &[usize] {
        &self.days
    }

    fn check_window(&self, start: usize, end: usize) -> Result<()> {
        match (self.days.first(), self.days.last()) {
            (Some(&f), Some(&l)) if f < start || l > end => {
                Err(Error::WindowViolation(format!("release log '{}' has days outside [{start}, {end}]", self.id)))
            }
            _ => Ok(()),
        }
    }
}

/// `gamma^(t - tau*)` with `tau*` the most recent release at or before `t`,
/// zero before the first release. Output covers days `start..=end`.
pub fn smooth_releases(log: &ReleaseLog, gamma: f64, start: usize, end: usize) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("release decay {gamma} not in (0,1)")));
    }
    log.check_window(start, end)?;
    let mut out = Vec::with_capacity(end + 1 - start);
    let mut next = 0;
    let mut last: Option<usize> = None;
    for t in start..=end {
        while next < log.days.len() && log.days[next] <= t {
            last = Some(log.days[next]);
            next += 1;
        }
        out.push(match last {
            Some(tau) => gamma.powi((t - tau) as i32),
            None => 0.0,
        });
    }
    Ok(out)
}

/// Release-day indicator (no carry-over).
pub fn release_indicator(log: &ReleaseLog, start: usize, end: usize) -> Result<Vec<f64>> {
    log.check_window(start, end)?;
    Ok((start..=end).map(|t| if log.days.binary_search(&t).is_ok() { 1.0 } else { 0.0 }).collect())
}

/// Complement id to category label.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryMap(pub BTreeMap<String, String>);

impl CategoryMap {
    pub fn category(&self, id: &str) -> Option<&str> {
        self.0.get(id).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlShares {
    pub shares: BTreeMap<String, f64>,
    /// Categories whose total usage was zero; their members get share 0.
    pub zero_categories: Vec<String>,
}

/// Within-category usage shares for one day.
pub fn observational_learning(usage: &BTreeMap<String, f64>, categories: &CategoryMap) -> Result<OlShares> {
    let mut totals: BTreeMap<&str, f64> = BTreeMap::new();
    for (id, &u) in usage {
        if !(u >= 0.0) {
            return Err(Error::InvalidParameter(format!("usage of '{id}' is negative")));
        }
        let cat = categories
            .category(id)
            .ok_or_else(|| Error::InvalidParameter(format!("complement '{id}' has no category")))?;
        *totals.entry(cat).or_default() += u;
    }
    let mut shares = BTreeMap::new();
    for (id, &u) in usage {
        let total = totals[categories.category(id).unwrap()];
        shares.insert(id.clone(), if total > 0.0 { u / total } else { 0.0 });
    }
    let zero_categories = totals.iter().filter(|(_, &t)| t == 0.0).map(|(c, _)| c.to_string()).collect();
    Ok(OlShares { shares, zero_categories })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Largest absolute value of the (possibly demeaned) series.
    MaxAbs,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    None,
    Demean,
    Rescale(Scale),
    DemeanThenRescale(Scale),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    None,
    Demean,
    Rescale,
    DemeanThenRescale,
}

/// Fitted standardization constants: `y = (x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub name: String,
    pub kind: TransformKind,
    pub mean: f64,
    pub scale: f64,
}

impl TransformRecord {
    pub fn identity(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: TransformKind::None, mean: 0.0, scale: 1.0 }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.scale
    }

    pub fn invert(&self, y: f64) -> f64 {
        y * self.scale + self.mean
    }
}

pub fn standardize(name: &str, series: &[f64], policy: Policy) -> Result<(Vec<f64>, TransformRecord)> {
    if series.is_empty() {
        return Err(Error::EmptySeries(name.into()));
    }
    let mean_of = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (kind, mean, scale) = match policy {
        Policy::None => (TransformKind::None, 0.0, None),
        Policy::Demean => (TransformKind::Demean, mean_of(series), None),
        Policy::Rescale(s) => (TransformKind::Rescale, 0.0, Some(s)),
        Policy::DemeanThenRescale(s) => (TransformKind::DemeanThenRescale, mean_of(series), Some(s)),
    };
    let scale = match scale {
        None => 1.0,
        Some(Scale::Fixed(s)) => {
            if s == 0.0 || !s.is_finite() {
                return Err(Error::InvalidParameter(format!("scale constant {s} for '{name}'")));
            }
            s
        }
        Some(Scale::MaxAbs) => {
            let m = series.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
            if m == 0.0 {
                return Err(Error::DegenerateSeries(name.into()));
            }
            m
        }
    };
    let rec = TransformRecord { name: name.into(), kind, mean, scale };
    let out = series.iter().map(|&x| rec.apply(x)).collect();
    Ok((out, rec))
}

// ---------------------------------------------------------------------------
// panel assembly

/// Raw platform inputs indexed by day `1..=horizon` (vector index `day - 1`).
#[derive(Debug, Clone, Default)]
pub struct RawPlatform {
    pub adopters: Vec<Option<f64>>,
    pub competitors: Vec<Vec<Option<f64>>>,
    /// AMO contributions per day.
    pub effort: Vec<Option<f64>>,
    /// AMO nomination-queue length.
    pub queue: Vec<Option<f64>>,
    /// Cumulative add-ons created.
    pub addons: Vec<Option<f64>>,
    pub releases: Vec<usize>,
}

/// Raw complement inputs over its window `launch..=end`.
#[derive(Debug, Clone, Default)]
pub struct RawComplement {
    pub id: String,
    pub category: String,
    pub dummies: Vec<f64>,
    pub launch: usize,
    pub end: usize,
    pub downloads: Vec<Option<f64>>,
    pub usage: Vec<Option<f64>>,
    pub rating_mean: Vec<Option<f64>>,
    pub rating_var: Vec<Option<f64>>,
    pub releases: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct RawInputs {
    pub start_date: Option<NaiveDate>,
    pub horizon: usize,
    pub platform: RawPlatform,
    pub complements: Vec<RawComplement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub release_decay: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { release_decay: DEFAULT_RELEASE_DECAY }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessWarning {
    pub complement: String,
    pub day: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct AssembledPanel {
    pub panel: ObservationPanel,
    pub transforms: TransformSet,
    pub warnings: Vec<PreprocessWarning>,
}

fn forward_fill(column: &str, start: usize, values: &[Option<f64>]) -> Result<Vec<f64>> {
    let mut last = None;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if let Some(v) = v {
                last = Some(*v);
            }
            last.ok_or_else(|| Error::MissingValue { column: column.into(), day: start + i })
        })
        .collect()
}

fn check_monotone(series: &str, start: usize, values: &[Option<f64>]) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            if v < prev {
                return Err(Error::NonMonotoneCumulative { series: series.into(), day: start + i });
            }
            prev = v;
        }
    }
    Ok(())
}

fn check_len(what: &'static str, len: usize, expected: usize) -> Result<()> {
    if len != expected {
        return Err(Error::DimensionMismatch { what, expected, got: len });
    }
    Ok(())
}

fn demean(name: &str, xs: &[f64], transforms: &mut TransformSet) -> Result<Vec<f64>> {
    let (out, rec) = standardize(name, xs, Policy::Demean)?;
    transforms.push(rec);
    Ok(out)
}

/// Build a validated, standardized panel from raw inputs.
///
/// Platform adopters and cumulative add-ons are rescaled by their maximum;
/// complement downloads share the platform scale so that `n <= alpha·m` stays
/// meaningful. Competitor usage and AMO covariates are demeaned then rescaled.
/// Complement covariates are demeaned over each complement's own window.
pub fn assemble_panel(raw: &RawInputs, config: &PreprocessConfig) -> Result<AssembledPanel> {
    let t = raw.horizon;
    if t < 2 {
        return Err(Error::WindowViolation(format!("horizon {t} < 2")));
    }
    let p = &raw.platform;
    check_len("platform adopters", p.adopters.len(), t)?;
    check_len("platform effort", p.effort.len(), t)?;
    check_len("platform queue", p.queue.len(), t)?;
    check_len("platform addons", p.addons.len(), t)?;
    if p.competitors.is_empty() {
        return Err(Error::MissingColumn("competitor".into()));
    }
    let mut transforms = TransformSet::default();
    let mut warnings = Vec::new();

    check_monotone("addons", 1, &p.addons)?;
    let observed: Vec<f64> = p.adopters.iter().flatten().copied().collect();
    if observed.is_empty() {
        return Err(Error::EmptySeries("platform adopters".into()));
    }
    let (_, adopters_rec) = standardize("platform.adopters", &observed, Policy::Rescale(Scale::MaxAbs))?;
    let adopters: Vec<Option<f64>> = p.adopters.iter().map(|v| v.map(|x| adopters_rec.apply(x))).collect();
    let platform_scale = adopters_rec.scale;
    transforms.push(adopters_rec);

    let mut competitor_cols = Vec::new();
    for (i, col) in p.competitors.iter().enumerate() {
        check_len("competitor column", col.len(), t)?;
        let name = format!("platform.competitor{i}");
        let filled = forward_fill(&name, 1, col)?;
        let (z, rec) = standardize(&name, &filled, Policy::DemeanThenRescale(Scale::MaxAbs))?;
        transforms.push(rec);
        competitor_cols.push(z);
    }
    let effort_raw = forward_fill("platform.effort", 1, &p.effort)?;
    let (effort, rec) = standardize("platform.effort", &effort_raw, Policy::DemeanThenRescale(Scale::MaxAbs))?;
    transforms.push(rec);
    let queue_raw = forward_fill("platform.queue", 1, &p.queue)?;
    let (queue, rec) = standardize("platform.queue", &queue_raw, Policy::DemeanThenRescale(Scale::MaxAbs))?;
    transforms.push(rec);
    let addons_raw = forward_fill("platform.addons", 1, &p.addons)?;
    let (addons, rec) = standardize("platform.addons", &addons_raw, Policy::Rescale(Scale::MaxAbs))?;
    transforms.push(rec);

    let frames: Vec<PlatformFrame> = (0..t)
        .map(|i| PlatformFrame {
            x: competitor_cols.iter().map(|c| c[i]).collect(),
            z: vec![effort[i], queue[i]],
            addons: addons[i],
        })
        .collect();

    let platform_log = ReleaseLog::new("platform", p.releases.clone())?;
    let pv_full = smooth_releases(&platform_log, config.release_decay, 1, t)?;

    // usage per complement on every platform day, zero outside its window
    let mut usage_by_day: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); t];
    let mut categories = CategoryMap::default();
    for c in &raw.complements {
        if c.launch < 1 || c.end > t || c.launch > c.end {
            return Err(Error::WindowViolation(format!(
                "complement '{}' window [{}, {}] outside [1, {t}]",
                c.id, c.launch, c.end
            )));
        }
        categories.0.insert(c.id.clone(), c.category.clone());
        let n = c.end + 1 - c.launch;
        check_len("complement usage", c.usage.len(), n)?;
        let usage = forward_fill(&format!("{}.usage", c.id), c.launch, &c.usage)?;
        for (day, u) in usage_by_day.iter_mut().enumerate() {
            let d = day + 1;
            let v = if d >= c.launch && d <= c.end { usage[d - c.launch] } else { 0.0 };
            u.insert(c.id.clone(), v);
        }
    }

    let mut complements = Vec::with_capacity(raw.complements.len());
    for c in &raw.complements {
        let n = c.end + 1 - c.launch;
        check_len("complement downloads", c.downloads.len(), n)?;
        check_len("complement rating mean", c.rating_mean.len(), n)?;
        check_len("complement rating variance", c.rating_var.len(), n)?;
        check_monotone(&format!("{}.downloads", c.id), c.launch, &c.downloads)?;

        let rec = TransformRecord {
            name: format!("complement.{}.adopters", c.id),
            kind: TransformKind::Rescale,
            mean: 0.0,
            scale: platform_scale,
        };
        let observations = c.downloads.iter().map(|v| v.map(|x| rec.apply(x))).collect();
        transforms.push(rec);

        let pv = demean(&format!("complement.{}.pv", c.id), &pv_full[c.launch - 1..c.end], &mut transforms)?;
        let log = ReleaseLog::new(c.id.clone(), c.releases.clone())?;
        let av = demean(
            &format!("complement.{}.av", c.id),
            &smooth_releases(&log, config.release_decay, c.launch, c.end)?,
            &mut transforms,
        )?;
        let rtv = demean(
            &format!("complement.{}.rtv", c.id),
            &forward_fill(&format!("{}.rating_var", c.id), c.launch, &c.rating_var)?,
            &mut transforms,
        )?;
        let stavg = demean(
            &format!("complement.{}.stavg", c.id),
            &forward_fill(&format!("{}.rating_mean", c.id), c.launch, &c.rating_mean)?,
            &mut transforms,
        )?;
        // previous-day usage share within the category
        let mut ol_raw = Vec::with_capacity(n);
        for d in c.launch..=c.end {
            if d == 1 {
                ol_raw.push(0.0);
                warnings.push(PreprocessWarning {
                    complement: c.id.clone(),
                    day: d,
                    message: "no previous-day usage; OL set to 0".into(),
                });
                continue;
            }
            let day_usage = &usage_by_day[d - 2];
            let shares = observational_learning(day_usage, &categories)?;
            if shares.zero_categories.iter().any(|z| z == &c.category) {
                warnings.push(PreprocessWarning {
                    complement: c.id.clone(),
                    day: d,
                    message: format!("zero usage in category '{}'; OL set to 0", c.category),
                });
            }
            ol_raw.push(shares.shares[&c.id]);
        }
        let ol = demean(&format!("complement.{}.ol", c.id), &ol_raw, &mut transforms)?;

        let frames =
            (0..n).map(|i| ComplementFrame { pv: pv[i], av: av[i], rtv: rtv[i], stavg: stavg[i], ol: ol[i] }).collect();
        complements.push(ComplementSeries {
            id: c.id.clone(),
            category: c.category.clone(),
            launch: c.launch,
            end: c.end,
            observations,
            frames,
            dummies: c.dummies.clone(),
            releases: c.releases.clone(),
        });
    }

    let panel = ObservationPanel {
        horizon: t,
        start_date: raw.start_date.map(|d| d.format("%Y-%m-%d").to_string()),
        platform: PlatformSeries { observations: adopters, frames, effort_raw: Some(effort_raw) },
        complements,
        platform_releases: p.releases.clone(),
        release_decay: config.release_decay,
    };
    panel.validate()?;
    Ok(AssembledPanel { panel, transforms, warnings })
}

/// Rebuild the PV/AV columns of every complement, either smoothed with the
/// panel's decay or as raw release-day indicators, demeaned per window.
pub fn rebuild_release_signals(panel: &mut ObservationPanel, indicator_only: bool) -> Result<()> {
    let t = panel.horizon;
    let platform_log = ReleaseLog::new("platform", panel.platform_releases.clone())?;
    let signal = |log: &ReleaseLog, start: usize, end: usize| {
        if indicator_only {
            release_indicator(log, start, end)
        } else {
            smooth_releases(log, panel.release_decay, start, end)
        }
    };
    let pv_full = signal(&platform_log, 1, t)?;
    let mut scratch = TransformSet::default();
    let mut rebuilt = Vec::with_capacity(panel.complements.len());
    for c in &panel.complements {
        let log = ReleaseLog::new(c.id.clone(), c.releases.clone())?;
        let pv = demean("pv", &pv_full[c.launch - 1..c.end], &mut scratch)?;
        let av = demean("av", &signal(&log, c.launch, c.end)?, &mut scratch)?;
        rebuilt.push((pv, av));
    }
    for (c, (pv, av)) in panel.complements.iter_mut().zip(rebuilt) {
        for (f, (p, a)) in c.frames.iter_mut().zip(pv.into_iter().zip(av)) {
            f.pv = p;
            f.av = a;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV ingestion

fn parse_date(path: &Path, s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| Error::Parse { path: path.into(), message: format!("bad date '{s}': {e}") })
}

fn parse_opt(path: &Path, s: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|e| Error::Parse { path: path.into(), message: format!("bad number '{s}': {e}") })
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::MissingColumn(name.into()))
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

/// Read raw inputs from the three CSV files described in `docs/formats.md`:
/// a platform file, a long-format complement file and a complement metadata
/// file.
pub fn read_raw_inputs(platform_csv: &Path, complements_csv: &Path, metadata_csv: &Path) -> Result<RawInputs> {
    // platform
    let mut rdr = open_csv(platform_csv)?;
    let headers = rdr.headers()?.clone();
    let c_date = column(&headers, "date")?;
    let c_adopters = column(&headers, "adopters")?;
    let c_effort = column(&headers, "amo_contributions")?;
    let c_queue = column(&headers, "amo_queue")?;
    let c_addons = column(&headers, "addons_cumulative")?;
    let c_release = column(&headers, "release")?;
    let c_comp: Vec<usize> =
        headers.iter().enumerate().filter(|(_, h)| h.starts_with("competitor_")).map(|(i, _)| i).collect();
    if c_comp.is_empty() {
        return Err(Error::MissingColumn("competitor_*".into()));
    }
    let mut rows: BTreeMap<NaiveDate, csv::StringRecord> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.insert(parse_date(platform_csv, &rec[c_date])?, rec);
    }
    let (&start, &last) = match (rows.keys().next(), rows.keys().next_back()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::EmptySeries(platform_csv.display().to_string())),
    };
    let horizon = (last - start).num_days() as usize + 1;
    let day_of = |d: NaiveDate| (d - start).num_days() + 1;
    let mut platform = RawPlatform {
        adopters: vec![None; horizon],
        competitors: vec![vec![None; horizon]; c_comp.len()],
        effort: vec![None; horizon],
        queue: vec![None; horizon],
        addons: vec![None; horizon],
        releases: Vec::new(),
    };
    for (date, rec) in &rows {
        let i = day_of(*date) as usize - 1;
        platform.adopters[i] = parse_opt(platform_csv, &rec[c_adopters])?;
        for (k, &c) in c_comp.iter().enumerate() {
            platform.competitors[k][i] = parse_opt(platform_csv, &rec[c])?;
        }
        platform.effort[i] = parse_opt(platform_csv, &rec[c_effort])?;
        platform.queue[i] = parse_opt(platform_csv, &rec[c_queue])?;
        platform.addons[i] = parse_opt(platform_csv, &rec[c_addons])?;
        if parse_opt(platform_csv, &rec[c_release])?.unwrap_or(0.0) > 0.0 {
            platform.releases.push(i + 1);
        }
    }

    // metadata
    let mut rdr = open_csv(metadata_csv)?;
    let headers = rdr.headers()?.clone();
    let m_id = column(&headers, "complement_id")?;
    let m_cat = column(&headers, "category")?;
    let m_dummies: Vec<usize> = crate::model::DUMMY_NAMES.iter().map(|n| column(&headers, n)).collect::<Result<_>>()?;
    let mut meta: BTreeMap<String, (String, Vec<f64>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let dummies = m_dummies
            .iter()
            .map(|&c| parse_opt(metadata_csv, &rec[c]).map(|v| v.unwrap_or(0.0)))
            .collect::<Result<_>>()?;
        meta.insert(rec[m_id].to_string(), (rec[m_cat].to_string(), dummies));
    }

    // complements, long format
    let mut rdr = open_csv(complements_csv)?;
    let headers = rdr.headers()?.clone();
    let k_date = column(&headers, "date")?;
    let k_id = column(&headers, "complement_id")?;
    let k_down = column(&headers, "downloads_cumulative")?;
    let k_usage = column(&headers, "usage")?;
    let k_mean = column(&headers, "rating_mean")?;
    let k_var = column(&headers, "rating_var")?;
    let k_rel = column(&headers, "release")?;
    let mut by_id: BTreeMap<String, BTreeMap<i64, csv::StringRecord>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let day = day_of(parse_date(complements_csv, &rec[k_date])?);
        if day < 1 || day > horizon as i64 {
            return Err(Error::WindowViolation(format!(
                "complement '{}' observed outside the platform window",
                &rec[k_id]
            )));
        }
        by_id.entry(rec[k_id].to_string()).or_default().insert(day, rec);
    }
    let mut complements = Vec::with_capacity(by_id.len());
    for (id, days) in by_id {
        let (category, dummies) =
            meta.get(&id).cloned().ok_or_else(|| Error::MissingColumn(format!("metadata for complement '{id}'")))?;
        let launch = *days.keys().next().unwrap() as usize;
        let end = *days.keys().next_back().unwrap() as usize;
        let n = end + 1 - launch;
        let mut c = RawComplement {
            id: id.clone(),
            category,
            dummies,
            launch,
            end,
            downloads: vec![None; n],
            usage: vec![None; n],
            rating_mean: vec![None; n],
            rating_var: vec![None; n],
            releases: Vec::new(),
        };
        for (day, rec) in &days {
            let i = *day as usize - launch;
            c.downloads[i] = parse_opt(complements_csv, &rec[k_down])?;
            c.usage[i] = parse_opt(complements_csv, &rec[k_usage])?;
            c.rating_mean[i] = parse_opt(complements_csv, &rec[k_mean])?;
            c.rating_var[i] = parse_opt(complements_csv, &rec[k_var])?;
            if parse_opt(complements_csv, &rec[k_rel])?.unwrap_or(0.0) > 0.0 {
                c.releases.push(*day as usize);
            }
        }
        complements.push(c);
    }

    Ok(RawInputs { start_date: Some(start), horizon, platform, complements })
}
