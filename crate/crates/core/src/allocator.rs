//! Editorial-effort reallocation: choose a schedule of AMO contributions
//! with a fixed total that maximizes the cumulative one-step-ahead platform
//! forecast, searched with a genetic algorithm.
//!
//! A schedule is substituted for the effort covariate (column
//! [`EFFORT_COLUMN`] of the governance block) through the same transform the
//! panel was built with, and the platform EKF is rerun on the observed data
//! with the fitted parameters.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{ekf_forward, FilterInit, FilterOptions, PlatformTransition};
use crate::model::{PlatformFrame, PlatformParams};
use crate::panel::{ObservationPanel, EFFORT_COLUMN};
use crate::preprocess::TransformRecord;
use crate::stats::{sample_sd, std_normal};

/// Days per block in monthly mode.
pub const MONTH_DAYS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Granularity {
    Daily,
    /// Blocks of this many days; a block's effort is spread evenly over its days.
    Blocks(usize),
}

impl Granularity {
    pub fn monthly() -> Self {
        Granularity::Blocks(MONTH_DAYS)
    }

    fn block_len(self) -> usize {
        match self {
            Granularity::Daily => 1,
            Granularity::Blocks(n) => n.max(1),
        }
    }

    pub fn periods(self, horizon: usize) -> usize {
        horizon.div_ceil(self.block_len())
    }

    /// Day range (0-based, half open) of period `k`.
    pub fn days(self, k: usize, horizon: usize) -> std::ops::Range<usize> {
        let b = self.block_len();
        k * b..((k + 1) * b).min(horizon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortSchedule {
    pub granularity: Granularity,
    /// Effort per period, in raw units.
    pub effort: Vec<f64>,
    pub budget: f64,
    pub objective: Option<f64>,
}

impl EffortSchedule {
    pub fn total(&self) -> f64 {
        self.effort.iter().sum()
    }

    /// Sample standard deviation of the per-period effort.
    pub fn dispersion(&self) -> f64 {
        sample_sd(&self.effort)
    }
}

/// Project onto `{x >= 0, sum x = budget}` by clipping and rescaling; an
/// all-zero vector becomes uniform.
pub fn project_to_budget(x: &mut [f64], budget: f64) {
    for v in x.iter_mut() {
        if !(v.is_finite() && *v > 0.0) {
            *v = 0.0;
        }
    }
    let total: f64 = x.iter().sum();
    if budget <= 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
    } else if total > 0.0 {
        let f = budget / total;
        x.iter_mut().for_each(|v| *v *= f);
    } else {
        let each = budget / x.len() as f64;
        x.iter_mut().for_each(|v| *v = each);
    }
}

/// Everything needed to score a schedule: the panel, the fitted platform
/// parameters, the filter initialization and the effort transform.
#[derive(Debug, Clone)]
pub struct AllocationProblem<'a> {
    pub panel: &'a ObservationPanel,
    pub params: &'a PlatformParams,
    pub init: FilterInit,
    pub transform: TransformRecord,
    pub granularity: Granularity,
}

impl<'a> AllocationProblem<'a> {
    pub fn new(
        panel: &'a ObservationPanel,
        params: &'a PlatformParams,
        init: FilterInit,
        transform: TransformRecord,
        granularity: Granularity,
    ) -> Result<Self> {
        if panel.platform.frames.first().is_none_or(|f| f.z.get(EFFORT_COLUMN).is_none()) {
            return Err(Error::MissingColumn("effort covariate in the governance block".into()));
        }
        if panel.platform.effort_raw.is_none() {
            return Err(Error::MissingColumn("raw effort series".into()));
        }
        Ok(Self { panel, params, init, transform, granularity })
    }

    pub fn periods(&self) -> usize {
        self.granularity.periods(self.panel.horizon)
    }

    /// Observed effort aggregated to periods.
    pub fn observed(&self) -> EffortSchedule {
        let raw = self.panel.platform.effort_raw.as_ref().expect("checked in new");
        let effort: Vec<f64> =
            (0..self.periods()).map(|k| self.granularity.days(k, self.panel.horizon).map(|d| raw[d]).sum()).collect();
        let budget = effort.iter().sum();
        EffortSchedule { granularity: self.granularity, effort, budget, objective: None }
    }

    pub fn uniform(&self, budget: f64) -> EffortSchedule {
        let p = self.periods();
        EffortSchedule { granularity: self.granularity, effort: vec![budget / p as f64; p], budget, objective: None }
    }

    fn daily_effort(&self, effort: &[f64]) -> Vec<f64> {
        let t = self.panel.horizon;
        let mut daily = vec![0.0; t];
        for (k, &e) in effort.iter().enumerate() {
            let days = self.granularity.days(k, t);
            let share = e / days.len() as f64;
            daily[days].iter_mut().for_each(|d| *d = share);
        }
        daily
    }

    /// `sum_t E[y_t | D_{t-1}]` with `effort` in place of the observed effort.
    pub fn evaluate(&self, effort: &[f64]) -> Result<f64> {
        if effort.len() != self.periods() {
            return Err(Error::HorizonMismatch(format!(
                "schedule has {} periods, horizon needs {}",
                effort.len(),
                self.periods()
            )));
        }
        let daily = self.daily_effort(effort);
        let frames: Vec<PlatformFrame> = self
            .panel
            .platform
            .frames
            .iter()
            .zip(&daily)
            .map(|(f, &e)| {
                let mut f = f.clone();
                f.z[EFFORT_COLUMN] = self.transform.apply(e);
                f
            })
            .collect();
        let t = PlatformTransition::new(self.params, &frames)?;
        let out = ekf_forward(&t, &self.panel.platform.observations, self.init, &FilterOptions::default())?;
        Ok(out.fc_mean.iter().sum())
    }

    pub fn evaluate_schedule(&self, schedule: &mut EffortSchedule) -> Result<f64> {
        let v = self.evaluate(&schedule.effort)?;
        schedule.objective = Some(v);
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Probability that a gene is mutated.
    pub mutation_rate: f64,
    /// Mutation sd as a fraction of the mean per-period effort.
    pub mutation_scale: f64,
    pub elitism: usize,
    pub tournament: usize,
    pub seed: u64,
    /// Discrete mode: genes index these levels and a schedule is
    /// `budget · l_k / sum(l)`.
    pub levels: Option<Vec<f64>>,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 300,
            crossover_rate: 0.8,
            mutation_rate: 0.05,
            mutation_scale: 0.1,
            elitism: 2,
            tournament: 2,
            seed: 0,
            levels: None,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let rate = |x: f64| (0.0..=1.0).contains(&x);
        if self.population < 2 || !rate(self.crossover_rate) || !rate(self.mutation_rate) {
            return Err(Error::InvalidParameter("GA needs population >= 2 and rates in [0, 1]".into()));
        }
        if self.elitism >= self.population || self.tournament == 0 {
            return Err(Error::InvalidParameter("GA needs elitism < population and tournament >= 1".into()));
        }
        if let Some(l) = &self.levels {
            if l.is_empty() || l.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidParameter("effort levels must be nonnegative and nonempty".into()));
            }
        }
        Ok(())
    }
}

/// Result of a GA run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimized {
    pub best: EffortSchedule,
    /// Best objective after each generation (generation 0 = initial population).
    pub history: Vec<f64>,
    pub seeds: Vec<EffortSchedule>,
}

#[derive(Debug, Clone)]
enum Genome {
    Continuous(Vec<f64>),
    Discrete(Vec<usize>),
}

impl Genome {
    fn decode(&self, levels: Option<&[f64]>, budget: f64) -> Vec<f64> {
        match (self, levels) {
            (Genome::Continuous(x), _) => {
                let mut x = x.clone();
                project_to_budget(&mut x, budget);
                x
            }
            (Genome::Discrete(ix), Some(levels)) => {
                let raw: Vec<f64> = ix.iter().map(|&i| levels[i]).collect();
                let total: f64 = raw.iter().sum();
                if total > 0.0 {
                    raw.iter().map(|v| budget * v / total).collect()
                } else {
                    vec![0.0; raw.len()]
                }
            }
            (Genome::Discrete(_), None) => unreachable!("discrete genome without levels"),
        }
    }
}

fn nearest_level(levels: &[f64], v: f64) -> usize {
    (0..levels.len()).min_by(|&a, &b| (levels[a] - v).abs().total_cmp(&(levels[b] - v).abs())).unwrap_or(0)
}

fn encode(levels: Option<&[f64]>, effort: &[f64]) -> Genome {
    match levels {
        None => Genome::Continuous(effort.to_vec()),
        Some(levels) => {
            // match the shape: scale so the largest period hits the top level
            let top = levels.iter().cloned().fold(0.0, f64::max);
            let max = effort.iter().cloned().fold(0.0, f64::max);
            let f = if max > 0.0 { top / max } else { 0.0 };
            Genome::Discrete(effort.iter().map(|e| nearest_level(levels, e * f)).collect())
        }
    }
}

fn individual_rng(seed: u64, generation: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((generation as u64) << 32) | index as u64);
    rng
}

/// Genetic search for the schedule maximizing the cumulative forecast.
pub fn optimize(problem: &AllocationProblem, budget: f64, ga: &GaConfig) -> Result<Optimized> {
    ga.validate()?;
    let periods = problem.periods();
    if periods < 2 {
        return Err(Error::HorizonMismatch(format!("need at least 2 periods, have {periods}")));
    }
    let levels = ga.levels.as_deref();
    let g = problem.granularity;

    let mut observed = problem.observed();
    project_to_budget(&mut observed.effort, budget);
    observed.budget = budget;
    let mut uniform = problem.uniform(budget);
    if budget <= 0.0 {
        let mut zero = EffortSchedule { granularity: g, effort: vec![0.0; periods], budget: 0.0, objective: None };
        let v = problem.evaluate_schedule(&mut zero)?;
        problem.evaluate_schedule(&mut observed)?;
        problem.evaluate_schedule(&mut uniform)?;
        return Ok(Optimized { best: zero, history: vec![v], seeds: vec![observed, uniform] });
    }

    let mean_effort = budget / periods as f64;
    let mut population: Vec<Genome> = vec![encode(levels, &observed.effort), encode(levels, &uniform.effort)];
    let mut init_rng = individual_rng(ga.seed, 0, usize::MAX >> 32);
    while population.len() < ga.population {
        population.push(match levels {
            None => Genome::Continuous((0..periods).map(|_| init_rng.random::<f64>() * 2.0 * mean_effort).collect()),
            Some(l) => Genome::Discrete((0..periods).map(|_| init_rng.random_range(0..l.len())).collect()),
        });
    }
    // seeds are scored exactly as given so the result dominates them
    problem.evaluate_schedule(&mut observed)?;
    problem.evaluate_schedule(&mut uniform)?;

    let score = |pop: &[Genome]| -> Result<Vec<(Vec<f64>, f64)>> {
        pop.par_iter()
            .map(|gen| {
                let x = gen.decode(levels, budget);
                let v = problem.evaluate(&x)?;
                Ok((x, v))
            })
            .collect()
    };
    let mut scored = score(&population)?;
    let mut best = best_of(&scored);
    let seed_best = observed.objective.unwrap().max(uniform.objective.unwrap());
    if seed_best > best.1 {
        // can only happen in discrete mode, where seeds are rounded to levels
        let s = if observed.objective >= uniform.objective { &observed } else { &uniform };
        best = (s.effort.clone(), seed_best);
    }
    let mut history = vec![best.1];

    for gen in 1..=ga.generations {
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| scored[b].1.total_cmp(&scored[a].1));
        let mut next: Vec<Genome> = order[..ga.elitism].iter().map(|&i| population[i].clone()).collect();
        let children: Vec<Genome> = (ga.elitism..ga.population)
            .into_par_iter()
            .map(|i| {
                let mut rng = individual_rng(ga.seed, gen, i);
                let pick = |rng: &mut ChaCha8Rng| -> usize {
                    let contenders: Vec<usize> =
                        (0..ga.tournament).map(|_| rng.random_range(0..population.len())).collect();
                    *contenders.iter().max_by(|&&a, &&b| scored[a].1.total_cmp(&scored[b].1)).unwrap()
                };
                let (a, b) = (pick(&mut rng), pick(&mut rng));
                let cross = rng.random::<f64>() < ga.crossover_rate;
                match (&population[a], &population[b]) {
                    (Genome::Continuous(x), Genome::Continuous(y)) => {
                        let mut child: Vec<f64> =
                            x.iter().zip(y).map(|(u, v)| if cross && rng.random::<bool>() { *v } else { *u }).collect();
                        for c in child.iter_mut() {
                            if rng.random::<f64>() < ga.mutation_rate {
                                *c = (*c + ga.mutation_scale * mean_effort * std_normal(&mut rng)).max(0.0);
                            }
                        }
                        project_to_budget(&mut child, budget);
                        Genome::Continuous(child)
                    }
                    (Genome::Discrete(x), Genome::Discrete(y)) => {
                        let n = levels.map_or(1, <[f64]>::len);
                        let mut child: Vec<usize> =
                            x.iter().zip(y).map(|(u, v)| if cross && rng.random::<bool>() { *v } else { *u }).collect();
                        for c in child.iter_mut() {
                            if rng.random::<f64>() < ga.mutation_rate.max(1.0 / periods as f64) {
                                let choices: Vec<usize> = (0..n).collect();
                                *c = *choices.choose(&mut rng).unwrap();
                            }
                        }
                        Genome::Discrete(child)
                    }
                    _ => unreachable!("mixed genomes"),
                }
            })
            .collect();
        next.extend(children);
        population = next;
        scored = score(&population)?;
        let gen_best = best_of(&scored);
        if gen_best.1 > best.1 {
            best = gen_best;
        }
        history.push(best.1);
    }
    Ok(Optimized {
        best: EffortSchedule { granularity: g, effort: best.0, budget, objective: Some(best.1) },
        history,
        seeds: vec![observed, uniform],
    })
}

fn best_of(scored: &[(Vec<f64>, f64)]) -> (Vec<f64>, f64) {
    scored.iter().max_by(|a, b| a.1.total_cmp(&b.1)).map(|(x, v)| (x.clone(), *v)).expect("non-empty population")
}

/// Exhaustive search over `levels^periods` discrete schedules (small cases only).
pub fn enumerate_discrete(problem: &AllocationProblem, budget: f64, levels: &[f64]) -> Result<EffortSchedule> {
    let p = problem.periods();
    let k = levels.len();
    let count = k
        .checked_pow(p as u32)
        .filter(|c| *c <= 1_000_000)
        .ok_or_else(|| Error::InvalidParameter(format!("{k}^{p} schedules is too many to enumerate")))?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for code in 0..count {
        let ix: Vec<usize> = (0..p).map(|d| (code / k.pow(d as u32)) % k).collect();
        let x = Genome::Discrete(ix).decode(Some(levels), budget);
        let v = problem.evaluate(&x)?;
        if best.as_ref().is_none_or(|b| v > b.1) {
            best = Some((x, v));
        }
    }
    let (effort, v) = best.expect("at least one schedule");
    Ok(EffortSchedule { granularity: problem.granularity, effort, budget, objective: Some(v) })
}

// ---------------------------------------------------------------------------
// comparison

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub period: usize,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleComparison {
    pub rows: Vec<ComparisonRow>,
    pub sd_a: f64,
    pub sd_b: f64,
    /// Objectives and `b - a`, when a model was supplied.
    pub objective_a: Option<f64>,
    pub objective_b: Option<f64>,
    pub gap: Option<f64>,
    /// Running sum of `b - a` effort per period.
    pub cumulative_difference: Vec<f64>,
}

/// Side-by-side comparison of two schedules; objectives are filled in when a
/// problem is supplied.
pub fn compare_schedules(a: &[f64], b: &[f64], problem: Option<&AllocationProblem>) -> Result<ScheduleComparison> {
    if a.len() != b.len() {
        return Err(Error::HorizonMismatch(format!("schedules have {} and {} periods", a.len(), b.len())));
    }
    let (objective_a, objective_b) = match problem {
        Some(p) => (Some(p.evaluate(a)?), Some(p.evaluate(b)?)),
        None => (None, None),
    };
    let mut acc = 0.0;
    let cumulative_difference = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            acc += y - x;
            acc
        })
        .collect();
    Ok(ScheduleComparison {
        rows: a.iter().zip(b).enumerate().map(|(k, (x, y))| ComparisonRow { period: k + 1, a: *x, b: *y }).collect(),
        sd_a: sample_sd(a),
        sd_b: sample_sd(b),
        objective_a,
        objective_b,
        gap: objective_a.zip(objective_b).map(|(x, y)| y - x),
        cumulative_difference,
    })
}

/// Two schedules read from a CSV with `actual` and `model_based` columns
/// (other columns such as year/month are ignored).
pub fn read_schedule_pair(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr =
        csv::Reader::from_path(path).map_err(|e| Error::Parse { path: path.into(), message: e.to_string() })?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(format!("{name} in {}", path.display())))
    };
    let (ia, ib) = (col("actual")?, col("model_based")?);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse { path: path.into(), message: format!("row {}: {e}", line + 2) })
        };
        a.push(parse(ia)?);
        b.push(parse(ib)?);
    }
    Ok((a, b))
}

/// Write a schedule comparison as `period,a,b` rows with the given column names.
pub fn write_comparison_csv(path: &Path, cmp: &ScheduleComparison, names: (&str, &str)) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse { path: path.into(), message: e.to_string() })?;
    w.write_record(["period", names.0, names.1])?;
    for r in &cmp.rows {
        w.write_record([r.period.to_string(), format!("{}", r.a), format!("{}", r.b)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_hits_budget() {
        let mut x = vec![1.0, -2.0, 3.0, f64::NAN];
        project_to_budget(&mut x, 10.0);
        assert!(x.iter().all(|v| *v >= 0.0));
        assert!((x.iter().sum::<f64>() - 10.0).abs() < 1e-12);
        let mut z = vec![0.0; 4];
        project_to_budget(&mut z, 8.0);
        assert_eq!(z, vec![2.0; 4]);
    }

    #[test]
    fn identical_schedules_have_zero_gap() {
        let a = vec![1.0, 5.0, 3.0];
        let c = compare_schedules(&a, &a, None).unwrap();
        assert!(c.cumulative_difference.iter().all(|d| *d == 0.0));
        assert_eq!(c.sd_a, c.sd_b);
    }

    #[test]
    fn block_ranges_cover_horizon() {
        let g = Granularity::monthly();
        assert_eq!(g.periods(61), 3);
        assert_eq!(g.days(2, 61), 60..61);
        assert_eq!(Granularity::Daily.periods(5), 5);
    }
}
