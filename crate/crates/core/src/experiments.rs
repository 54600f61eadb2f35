//! Replicated experiments, summary statistics, scaling fits and the
//! statistical probes (selection goodness of fit, drift, stagnation).

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::bitstring::Bitstring;
use crate::engine::{run_ea, run_opo, EAConfig, RunResult, DEFAULT_GAMMA0};
use crate::error::{invalid, Error, Result};
use crate::fitness::{FitnessSpec, FunctionKind};
use crate::mutation::{MutationSpec, Mutator};
use crate::rng::derive_seed;
use crate::selection::{selection_distribution, SelectionSpec, TieBreak};

/// Selection goodness-of-fit tests pass when p exceeds this.
pub const SELECTION_P_THRESHOLD: f64 = 1e-3;

/// A drift estimate is flagged when it exceeds the bound by more than this
/// many standard errors.
pub const DRIFT_SE_MARGIN: f64 = 4.0;

/// Offspring sampled per population by the drift probe.
pub const DEFAULT_DRIFT_SAMPLES: usize = 10_000;

/// Smallest expected count of a chi-square cell after merging.
pub const MIN_EXPECTED_CELL: f64 = 5.0;

pub const MIN_SELECTION_DRAWS: usize = 1000;

pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Ea,
    /// Elitist (1+1) EA; selection and lambda are ignored.
    Opo,
}

/// How the mutation's χ depends on n.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiScale {
    #[default]
    Constant,
    /// χ is divided by n.
    PerN,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaPolicy {
    Fixed { value: usize },
    /// ⌈c ln n⌉
    LogN { coefficient: f64 },
    /// ⌈c n² ln n⌉
    N2LogN { coefficient: f64 },
    /// ⌈c n^e⌉
    Power { coefficient: f64, exponent: f64 },
}

impl LambdaPolicy {
    pub fn lambda(&self, n: usize) -> usize {
        let n = n as f64;
        let raw = match *self {
            LambdaPolicy::Fixed { value } => return value,
            LambdaPolicy::LogN { coefficient } => coefficient * n.ln(),
            LambdaPolicy::N2LogN { coefficient } => coefficient * n * n * n.ln(),
            LambdaPolicy::Power { coefficient, exponent } => coefficient * n.powf(exponent),
        };
        // shave float noise so exact products such as 16^2.5 stay put
        (raw - 1e-9).ceil().max(1.0) as usize
    }
}

impl Default for LambdaPolicy {
    fn default() -> Self {
        LambdaPolicy::LogN { coefficient: 20.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum BudgetPolicy {
    Fixed { evaluations: u64 },
    /// ⌈c n^e⌉ evaluations.
    Polynomial { coefficient: f64, exponent: f64 },
    /// λ(G + 1) evaluations: initialisation plus G generations.
    Generations { generations: u64 },
}

impl BudgetPolicy {
    pub fn evaluations(&self, n: usize, lambda: usize) -> u64 {
        match *self {
            BudgetPolicy::Fixed { evaluations } => evaluations,
            BudgetPolicy::Polynomial { coefficient, exponent } => {
                (coefficient * (n as f64).powf(exponent)).ceil() as u64
            }
            BudgetPolicy::Generations { generations } => lambda as u64 * (generations + 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    #[serde(default)]
    pub algorithm: Algorithm,
    pub function: FunctionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionSpec>,
    pub mutation: MutationSpec,
    #[serde(default)]
    pub chi_scale: ChiScale,
    #[serde(default)]
    pub lambda: LambdaPolicy,
    pub budget: BudgetPolicy,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub tie_break: TieBreak,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Fully resolved settings of one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub n: usize,
    pub fitness: FitnessSpec,
    pub mutation: MutationSpec,
    pub lambda: usize,
    pub budget: u64,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return invalid("replications ≥ 1");
        }
        if self.n_grid.is_empty() {
            return invalid("n_grid must not be empty");
        }
        if self.algorithm == Algorithm::Ea && self.selection.is_none() {
            return invalid("the ea algorithm needs a selection");
        }
        for &n in &self.n_grid {
            let p = self.grid_point(n)?;
            if self.algorithm == Algorithm::Ea {
                self.ea_config(&p, 0).validate()?;
            } else {
                p.mutation.validate(n)?;
                if p.budget < 1 {
                    return invalid("budget ≥ 1");
                }
            }
        }
        Ok(())
    }

    pub fn grid_point(&self, n: usize) -> Result<GridPoint> {
        let fitness = match self.function {
            FunctionKind::OneMax => FitnessSpec::onemax(n)?,
            FunctionKind::Plateau => {
                let r = self.r.ok_or_else(|| Error::Invalid("plateau experiments need r".into()))?;
                FitnessSpec::plateau(n, r)?
            }
        };
        let mutation = match (&self.mutation, self.chi_scale) {
            (MutationSpec::Bitwise { chi }, ChiScale::PerN) => MutationSpec::bitwise(chi / n as f64),
            (m, _) => m.clone(),
        };
        let lambda = match self.algorithm {
            Algorithm::Ea => self.lambda.lambda(n),
            Algorithm::Opo => 1,
        };
        Ok(GridPoint {
            n,
            fitness,
            mutation,
            lambda,
            budget: self.budget.evaluations(n, lambda),
        })
    }

    fn ea_config(&self, p: &GridPoint, seed: u64) -> EAConfig {
        EAConfig {
            fitness: p.fitness.clone(),
            selection: self.selection.unwrap_or(SelectionSpec::FitnessProportionate),
            mutation: p.mutation.clone(),
            lambda: p.lambda,
            budget: p.budget,
            seed,
            record_trajectory: false,
            trajectory_stride: 1,
            gamma0: DEFAULT_GAMMA0,
            tie_break: self.tie_break,
        }
    }
}

/// Seed of replication `rep` at problem size `n`.
pub fn replication_seed(base: u64, n: usize, rep: usize) -> u64 {
    derive_seed(derive_seed(base, n as u64), rep as u64)
}

/// One line of `runs.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub function: String,
    pub n: usize,
    pub r: Option<usize>,
    pub selection_kind: String,
    pub selection_param: Option<usize>,
    pub mutation_kind: String,
    pub chi: Option<f64>,
    pub lambda: usize,
    pub seed: u64,
    pub generations: u64,
    pub evaluations: u64,
    pub success: bool,
    pub best_fitness: u64,
}

/// One line of `summary.csv`. Runtime statistics cover successful runs only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub reps: usize,
    pub successes: usize,
    pub mean_evals: Option<f64>,
    pub median_evals: Option<f64>,
    pub stderr_evals: Option<f64>,
    /// Runs that hit the budget.
    pub censored: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub runs: Vec<RunRow>,
    pub summary: Vec<SummaryRow>,
}

impl RunRow {
    /// `selection` is `None` for the (1+1) EA.
    pub fn new(
        fitness: &FitnessSpec,
        selection: Option<&SelectionSpec>,
        mutation: &MutationSpec,
        lambda: usize,
        seed: u64,
        result: &RunResult,
    ) -> Self {
        Self {
            function: fitness.name().to_string(),
            n: fitness.n(),
            r: fitness.r(),
            selection_kind: selection.map_or("elitist", |s| s.kind_name()).to_string(),
            selection_param: selection.and_then(|s| s.param()),
            mutation_kind: mutation.kind_name().to_string(),
            chi: mutation.chi(),
            lambda,
            seed,
            generations: result.generations,
            evaluations: result.evaluations,
            success: result.success,
            best_fitness: result.best_fitness,
        }
    }
}

fn run_one(plan: &ExperimentPlan, p: &GridPoint, rep: usize) -> Result<RunRow> {
    let seed = replication_seed(plan.base_seed, p.n, rep);
    Ok(match plan.algorithm {
        Algorithm::Ea => {
            let cfg = plan.ea_config(p, seed);
            RunRow::new(&p.fitness, Some(&cfg.selection), &p.mutation, p.lambda, seed, &run_ea(&cfg)?)
        }
        Algorithm::Opo => {
            let result = run_opo(&p.fitness, &p.mutation, p.budget, seed)?;
            RunRow::new(&p.fitness, None, &p.mutation, 1, seed, &result)
        }
    })
}

/// Runs every (n, replication) pair, in parallel, and writes `runs.csv` and
/// `summary.csv` under `out_dir` (falling back to the plan's `output_dir`).
/// Rows are ordered by grid position, then replication index.
pub fn run_experiment(plan: &ExperimentPlan, out_dir: Option<&Path>) -> Result<ExperimentOutput> {
    plan.validate()?;
    let points = plan
        .n_grid
        .iter()
        .map(|&n| plan.grid_point(n))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(&GridPoint, usize)> = points
        .iter()
        .flat_map(|p| (0..plan.replications).map(move |rep| (p, rep)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(p, rep)| run_one(plan, p, rep))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&runs);
    if let Some(dir) = out_dir.or(plan.output_dir.as_deref()) {
        fs::create_dir_all(dir)?;
        write_csv(&dir.join(RUNS_FILE), &runs)?;
        write_csv(&dir.join(SUMMARY_FILE), &summary)?;
    }
    Ok(ExperimentOutput { runs, summary })
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Summary rows per n, in order of first appearance.
pub fn summarize(runs: &[RunRow]) -> Vec<SummaryRow> {
    let mut order: Vec<usize> = Vec::new();
    for row in runs {
        if !order.contains(&row.n) {
            order.push(row.n);
        }
    }
    order
        .into_iter()
        .map(|n| {
            let group: Vec<&RunRow> = runs.iter().filter(|r| r.n == n).collect();
            let mut evals: Vec<f64> = group.iter().filter(|r| r.success).map(|r| r.evaluations as f64).collect();
            evals.sort_by(f64::total_cmp);
            let k = evals.len();
            let mean = (k > 0).then(|| evals.iter().sum::<f64>() / k as f64);
            let median = (k > 0).then(|| {
                if k % 2 == 1 {
                    evals[k / 2]
                } else {
                    (evals[k / 2 - 1] + evals[k / 2]) / 2.0
                }
            });
            let stderr = mean.filter(|_| k > 1).map(|m| {
                let var = evals.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (k - 1) as f64;
                (var / k as f64).sqrt()
            });
            SummaryRow {
                n,
                reps: group.len(),
                successes: k,
                mean_evals: mean,
                median_evals: median,
                stderr_evals: stderr,
                censored: group.len() - k,
            }
        })
        .collect()
}

/// (n, median runtime) for every summary row with at least one success.
pub fn scaling_points(summary: &[SummaryRow]) -> Vec<(f64, f64)> {
    summary
        .iter()
        .filter_map(|s| s.median_evals.map(|m| (s.n as f64, m)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
}

/// Least squares of ln(runtime) on ln(n).
pub fn fit_scaling_exponent(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.iter().any(|&(n, t)| !(n > 0.0 && t > 0.0)) {
        return invalid("scaling fit needs positive n and runtimes");
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return invalid("scaling fit needs at least 3 distinct n");
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = (sse / (k - 2.0) / sxx).sqrt();
    Ok(ScalingFit { slope, stderr, intercept })
}

/// Groups consecutive cells until each group's expected count reaches
/// [`MIN_EXPECTED_CELL`]; a short tail joins the last group.
fn merge_cells(observed: &[f64], expected: &[f64]) -> Vec<(f64, f64)> {
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&oi, &ei) in observed.iter().zip(expected) {
        o += oi;
        e += ei;
        if e >= MIN_EXPECTED_CELL {
            groups.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match groups.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => groups.push((o, e)),
        }
    }
    groups
}

/// Goodness-of-fit p-value of `observed` counts against `probabilities`.
///
/// Any count in a zero-probability cell gives p = 0.
pub fn chi_square_gof(observed: &[u64], probabilities: &[f64]) -> Result<f64> {
    if observed.len() != probabilities.len() {
        return Err(Error::LengthMismatch {
            left: observed.len(),
            right: probabilities.len(),
        });
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return invalid("no observations");
    }
    if observed.iter().zip(probabilities).any(|(&o, &p)| p <= 0.0 && o > 0) {
        return Ok(0.0);
    }
    let obs: Vec<f64> = observed.iter().map(|&o| o as f64).collect();
    let exp: Vec<f64> = probabilities.iter().map(|&p| p * total as f64).collect();
    let groups = merge_cells(&obs, &exp);
    if groups.len() < 2 {
        return Ok(1.0);
    }
    let stat: f64 = groups.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    chi_square_sf(stat, groups.len() - 1)
}

/// Homogeneity p-value of two count vectors over the same cells.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    if na == 0.0 || nb == 0.0 {
        return invalid("no observations");
    }
    let total = na + nb;
    let small = na.min(nb);
    // cells merge on the smaller sample's expected counts
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut ca, mut cb) = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        ca += x as f64;
        cb += y as f64;
        if (ca + cb) * small / total >= MIN_EXPECTED_CELL {
            cells.push((ca, cb));
            ca = 0.0;
            cb = 0.0;
        }
    }
    if ca + cb > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += ca;
                last.1 += cb;
            }
            None => cells.push((ca, cb)),
        }
    }
    if cells.len() < 2 {
        return Ok(1.0);
    }
    let stat: f64 = cells
        .iter()
        .map(|&(oa, ob)| {
            let p = oa + ob;
            let (ea, eb) = (p * na / total, p * nb / total);
            (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb
        })
        .sum();
    chi_square_sf(stat, cells.len() - 1)
}

fn chi_square_sf(stat: f64, df: usize) -> Result<f64> {
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(dist.sf(stat))
}

/// Draws `draws` parents from the selection model of `fitnesses` and tests
/// the counts against it.
pub fn chi_square_selection_test<R: Rng + ?Sized>(
    spec: &SelectionSpec,
    fitnesses: &[u64],
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    if draws < MIN_SELECTION_DRAWS {
        return invalid(format!("need at least {MIN_SELECTION_DRAWS} draws"));
    }
    let dist = selection_distribution(spec, fitnesses)?;
    let sampler = dist.sampler();
    let mut counts = vec![0u64; fitnesses.len()];
    for _ in 0..draws {
        counts[sampler.sample(rng)] += 1;
    }
    chi_square_gof(&counts, dist.probabilities())
}

/// Monte Carlo estimate of the next generation's total zero count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    /// Zeros in the current population.
    pub zeros: u64,
    pub estimate: f64,
    /// λχ + Z(1 − 2χ/n)
    pub bound: f64,
    pub stderr: f64,
    pub flagged: bool,
}

/// Expected zero count of the next population under proportionate
/// selection on `fitness` and bitwise mutation with rate `chi`/n, from
/// `samples` independent offspring.
pub fn drift_at<R: Rng + ?Sized>(
    population: &[Bitstring],
    fitness: &FitnessSpec,
    chi: f64,
    samples: usize,
    rng: &mut R,
) -> Result<DriftEstimate> {
    if population.is_empty() || samples < 2 {
        return invalid("drift estimate needs a population and at least 2 samples");
    }
    let n = fitness.n();
    let lambda = population.len() as f64;
    let values = population.iter().map(|x| fitness.evaluate(x)).collect::<Result<Vec<_>>>()?;
    let sampler = selection_distribution(&SelectionSpec::FitnessProportionate, &values)?.sampler();
    let mutator = Mutator::new(&MutationSpec::bitwise(chi), n)?;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let child = mutator.mutate(&population[sampler.sample(rng)], rng);
        let z = child.count_zeros() as f64;
        sum += z;
        sum_sq += z * z;
    }
    let k = samples as f64;
    let mean = sum / k;
    let var = ((sum_sq - k * mean * mean) / (k - 1.0)).max(0.0);
    let zeros: u64 = population.iter().map(|x| x.count_zeros() as u64).sum();
    let estimate = lambda * mean;
    let stderr = lambda * (var / k).sqrt();
    let bound = lambda * chi + zeros as f64 * (1.0 - 2.0 * chi / n as f64);
    Ok(DriftEstimate {
        zeros,
        estimate,
        bound,
        stderr,
        flagged: estimate > bound + DRIFT_SE_MARGIN * stderr,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftProbe {
    pub n: usize,
    pub lambda: usize,
    pub chi: f64,
    /// Plateau width of the fitness the population is selected on.
    pub r: usize,
    pub trials: usize,
    pub samples: usize,
}

impl DriftProbe {
    pub fn new(n: usize, lambda: usize, chi: f64, trials: usize) -> Self {
        Self {
            n,
            lambda,
            chi,
            r: 2,
            trials,
            samples: DEFAULT_DRIFT_SAMPLES,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub populations: Vec<DriftEstimate>,
    pub flagged: usize,
}

/// Drift estimates on `trials` random populations. Each population draws a
/// density q uniformly from [0, 1] and sets every bit to one with
/// probability q.
pub fn drift_probe<R: Rng + ?Sized>(probe: &DriftProbe, rng: &mut R) -> Result<DriftReport> {
    let fitness = FitnessSpec::plateau(probe.n, probe.r)?;
    if probe.lambda == 0 {
        return invalid("lambda ≥ 1");
    }
    let mut populations = Vec::with_capacity(probe.trials);
    for _ in 0..probe.trials {
        let q: f64 = rng.random();
        let pop: Vec<Bitstring> = (0..probe.lambda)
            .map(|_| {
                let bits: Vec<bool> = (0..probe.n).map(|_| rng.random_bool(q)).collect();
                Bitstring::from_bools(&bits)
            })
            .collect();
        populations.push(drift_at(&pop, &fitness, probe.chi, probe.samples, rng)?);
    }
    let flagged = populations.iter().filter(|d| d.flagged).count();
    Ok(DriftReport { populations, flagged })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagnationReport {
    /// λ(n/2)(1 − ε)
    pub threshold: f64,
    pub min_sum_ones: u64,
    /// Whether the total ones count ever fell below the threshold.
    pub fell_below: bool,
    pub optimum_found: bool,
    pub generations: u64,
    pub evaluations: u64,
}

/// Runs `config` to its budget with proportionate selection, tracking the
/// population's total number of ones every generation.
pub fn stagnation_probe(config: &EAConfig, eps: f64) -> Result<StagnationReport> {
    if config.selection != SelectionSpec::FitnessProportionate {
        return invalid("stagnation probe needs fitness-proportionate selection");
    }
    if !(0.0..=1.0).contains(&eps) {
        return invalid("eps must lie in [0, 1]");
    }
    let mut cfg = config.clone();
    cfg.record_trajectory = true;
    cfg.trajectory_stride = 1;
    let result = run_ea(&cfg)?;
    let threshold = cfg.lambda as f64 * cfg.n() as f64 / 2.0 * (1.0 - eps);
    let min_sum_ones = result
        .trajectory
        .as_ref()
        .and_then(|t| t.iter().map(|r| r.sum_ones).min())
        .unwrap_or(0);
    Ok(StagnationReport {
        threshold,
        min_sum_ones,
        fell_below: (min_sum_ones as f64) < threshold,
        optimum_found: result.success,
        generations: result.generations,
        evaluations: result.evaluations,
    })
}
