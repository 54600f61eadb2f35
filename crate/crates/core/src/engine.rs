//! The non-elitist population EA and the elitist (1+1) EA baseline.
//!
//! Each generation produces exactly λ offspring, each by one independent
//! selection draw on the parent population followed by one mutation. Every
//! created individual, the initial population included, costs one
//! evaluation. A run stops at the first evaluation of an optimal point or
//! once the evaluation budget is spent at a generation boundary.

use serde::{Deserialize, Serialize};

use crate::bitstring::Bitstring;
use crate::error::{invalid, Result};
use crate::fitness::FitnessSpec;
use crate::mutation::{MutationSpec, Mutator};
use crate::rng::RandomSource;
use crate::selection::{
    beta_from, selection_distribution_with, SelectionDistribution, SelectionSpec, TieBreak,
};

/// Optimality is checked after every single evaluation, not at the end of a
/// generation.
pub const STOP_ON_FIRST_OPTIMAL_EVALUATION: bool = true;

/// Default γ₀ for the β column of trajectory records.
pub const DEFAULT_GAMMA0: f64 = 0.25;

/// Default evaluation budget when a config omits one.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// Population size used when a config omits λ: ⌈20 ln n⌉.
pub fn default_lambda(n: usize) -> usize {
    ((20.0 * (n as f64).ln()).ceil() as usize).max(1)
}

/// Trajectory stride used when a config omits one.
pub fn default_stride(lambda: usize) -> usize {
    if lambda <= 2048 {
        1
    } else {
        10
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "crate::config::RunConfigFile")]
pub struct EAConfig {
    pub fitness: FitnessSpec,
    pub selection: SelectionSpec,
    pub mutation: MutationSpec,
    pub lambda: usize,
    /// Maximum number of fitness evaluations (checked between generations).
    pub budget: u64,
    pub seed: u64,
    pub record_trajectory: bool,
    pub trajectory_stride: usize,
    pub gamma0: f64,
    pub tie_break: TieBreak,
}

impl EAConfig {
    /// Config with documented defaults for everything but the operators.
    pub fn new(fitness: FitnessSpec, selection: SelectionSpec, mutation: MutationSpec, lambda: usize) -> Self {
        Self {
            fitness,
            selection,
            mutation,
            lambda,
            budget: DEFAULT_BUDGET,
            seed: 0,
            record_trajectory: false,
            trajectory_stride: default_stride(lambda),
            gamma0: DEFAULT_GAMMA0,
            tie_break: TieBreak::LowestIndex,
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trajectory(mut self, stride: usize) -> Self {
        self.record_trajectory = true;
        self.trajectory_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda < 1 {
            return invalid("lambda ≥ 1");
        }
        if self.budget < self.lambda as u64 {
            return invalid(format!(
                "budget ≥ lambda (budget={}, lambda={})",
                self.budget, self.lambda
            ));
        }
        if self.trajectory_stride < 1 {
            return invalid("trajectory_stride ≥ 1");
        }
        if !(self.gamma0 > 0.0 && self.gamma0 <= 1.0) {
            return invalid("gamma0 in (0, 1]");
        }
        self.selection.validate(self.lambda)?;
        self.mutation.validate(self.fitness.n())
    }

    pub fn n(&self) -> usize {
        self.fitness.n()
    }
}

/// Snapshot of one parent population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub generation: u64,
    pub best_fitness: u64,
    /// Σ_j |P_t(j)|, ones counted after the instance transform.
    pub sum_ones: u64,
    /// Individuals with at least n − r ones.
    pub plateau_count: u64,
    /// λ·max_i p_sel(i | P_t), from the exact selection model.
    pub max_reproductive_rate: f64,
    pub beta_at_gamma0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub success: bool,
    /// Evaluations up to and including the first optimal one, or all
    /// evaluations performed when the budget ran out.
    pub evaluations: u64,
    pub generations: u64,
    pub best_fitness: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<TrajectoryRecord>>,
}

/// Individuals with cached fitness and ones counts.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    individuals: Vec<Bitstring>,
    fitness: Vec<u64>,
    ones: Vec<usize>,
}

impl Population {
    pub fn with_capacity(lambda: usize) -> Self {
        Self {
            individuals: Vec::with_capacity(lambda),
            fitness: Vec::with_capacity(lambda),
            ones: Vec::with_capacity(lambda),
        }
    }

    pub fn evaluate(individuals: Vec<Bitstring>, spec: &FitnessSpec) -> Result<Self> {
        let mut p = Self::with_capacity(individuals.len());
        for x in individuals {
            p.push(x, spec)?;
        }
        Ok(p)
    }

    /// Appends `x` and returns its fitness.
    pub fn push(&mut self, x: Bitstring, spec: &FitnessSpec) -> Result<u64> {
        let k = spec.ones(&x)?;
        let f = spec.value_from_ones(k);
        self.individuals.push(x);
        self.fitness.push(f);
        self.ones.push(k);
        Ok(f)
    }

    pub fn individuals(&self) -> &[Bitstring] {
        &self.individuals
    }

    pub fn fitness(&self) -> &[u64] {
        &self.fitness
    }

    pub fn ones(&self) -> &[usize] {
        &self.ones
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn best_fitness(&self) -> u64 {
        self.fitness.iter().copied().max().unwrap_or(0)
    }

    pub fn sum_ones(&self) -> u64 {
        self.ones.iter().map(|&k| k as u64).sum()
    }

    /// Σ zero-bits over the population, Z(P).
    pub fn sum_zeros(&self, n: usize) -> u64 {
        (self.len() * n) as u64 - self.sum_ones()
    }
}

fn record(
    pop: &Population,
    dist: &SelectionDistribution,
    cfg: &EAConfig,
    generation: u64,
) -> Result<TrajectoryRecord> {
    let threshold = cfg.fitness.plateau_threshold();
    Ok(TrajectoryRecord {
        generation,
        best_fitness: pop.best_fitness(),
        sum_ones: pop.sum_ones(),
        plateau_count: pop.ones.iter().filter(|&&k| k >= threshold).count() as u64,
        max_reproductive_rate: cfg.lambda as f64 * dist.max(),
        beta_at_gamma0: beta_from(cfg.gamma0, dist, &pop.fitness)?,
    })
}

/// Selection model for `pop` under `cfg` (draws from `rng` only for random tie-breaking).
pub fn parent_distribution(pop: &Population, cfg: &EAConfig, rng: &mut RandomSource) -> Result<SelectionDistribution> {
    selection_distribution_with(&cfg.selection, &pop.fitness, cfg.tie_break, rng)
}

/// Uniformly random initial population, evaluated.
pub fn initial_population(cfg: &EAConfig, rng: &mut RandomSource) -> Result<Population> {
    let n = cfg.n();
    let xs = (0..cfg.lambda).map(|_| Bitstring::random(n, rng)).collect();
    Population::evaluate(xs, &cfg.fitness)
}

/// One full generation from `parents`: λ offspring by select-then-mutate.
/// The record describes the parent population.
pub fn run_generation(
    parents: &Population,
    cfg: &EAConfig,
    generation: u64,
    rng: &mut RandomSource,
) -> Result<(Population, TrajectoryRecord)> {
    if parents.len() != cfg.lambda {
        return invalid(format!("population has {} individuals, lambda is {}", parents.len(), cfg.lambda));
    }
    let mutator = Mutator::new(&cfg.mutation, cfg.n())?;
    let dist = parent_distribution(parents, cfg, rng)?;
    let rec = record(parents, &dist, cfg, generation)?;
    let sampler = dist.sampler();
    let mut next = Population::with_capacity(cfg.lambda);
    for _ in 0..cfg.lambda {
        let parent = &parents.individuals[sampler.sample(rng)];
        next.push(mutator.mutate(parent, rng), &cfg.fitness)?;
    }
    Ok((next, rec))
}

/// Runs the non-elitist EA.
pub fn run_ea(cfg: &EAConfig) -> Result<RunResult> {
    cfg.validate()?;
    let n = cfg.n();
    let optimum = cfg.fitness.optimum_value();
    let mutator = Mutator::new(&cfg.mutation, n)?;
    let mut rng = RandomSource::new(cfg.seed);
    let mut trajectory = cfg.record_trajectory.then(Vec::new);

    let mut evaluations = 0u64;
    let mut best = 0u64;
    let mut pop = Population::with_capacity(cfg.lambda);
    for _ in 0..cfg.lambda {
        let f = pop.push(Bitstring::random(n, &mut rng), &cfg.fitness)?;
        evaluations += 1;
        best = best.max(f);
        if f == optimum {
            return Ok(RunResult {
                success: true,
                evaluations,
                generations: 0,
                best_fitness: f,
                trajectory,
            });
        }
    }

    let mut generation = 0u64;
    loop {
        let dist = parent_distribution(&pop, cfg, &mut rng)?;
        let exhausted = evaluations >= cfg.budget;
        if let Some(t) = trajectory.as_mut() {
            if exhausted || generation.is_multiple_of(cfg.trajectory_stride as u64) {
                t.push(record(&pop, &dist, cfg, generation)?);
            }
        }
        if exhausted {
            return Ok(RunResult {
                success: false,
                evaluations,
                generations: generation,
                best_fitness: best,
                trajectory,
            });
        }

        let sampler = dist.sampler();
        let mut next = Population::with_capacity(cfg.lambda);
        for _ in 0..cfg.lambda {
            let parent = &pop.individuals[sampler.sample(&mut rng)];
            let f = next.push(mutator.mutate(parent, &mut rng), &cfg.fitness)?;
            evaluations += 1;
            best = best.max(f);
            if f == optimum && STOP_ON_FIRST_OPTIMAL_EVALUATION {
                return Ok(RunResult {
                    success: true,
                    evaluations,
                    generations: generation + 1,
                    best_fitness: f,
                    trajectory,
                });
            }
        }
        pop = next;
        generation += 1;
    }
}

/// Elitist (1+1) EA from a uniformly random start.
pub fn run_opo(fitness: &FitnessSpec, mutation: &MutationSpec, budget: u64, seed: u64) -> Result<RunResult> {
    run_opo_from(fitness, mutation, budget, seed, None)
}

/// (1+1) EA; `start` overrides the random initial point.
pub fn run_opo_from(
    fitness: &FitnessSpec,
    mutation: &MutationSpec,
    budget: u64,
    seed: u64,
    start: Option<Bitstring>,
) -> Result<RunResult> {
    if budget < 1 {
        return invalid("budget ≥ 1");
    }
    let n = fitness.n();
    let mutator = Mutator::new(mutation, n)?;
    let mut rng = RandomSource::new(seed);
    let mut x = match start {
        Some(s) => s,
        None => Bitstring::random(n, &mut rng),
    };
    let mut fx = fitness.evaluate(&x)?;
    let optimum = fitness.optimum_value();
    let mut evaluations = 1u64;
    let mut steps = 0u64;
    while fx != optimum && evaluations < budget {
        let y = mutator.mutate(&x, &mut rng);
        let fy = fitness.evaluate(&y)?;
        evaluations += 1;
        steps += 1;
        if fy >= fx {
            x = y;
            fx = fy;
        }
    }
    Ok(RunResult {
        success: fx == optimum,
        evaluations,
        generations: steps,
        best_fitness: fx,
        trajectory: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plateau_cfg(n: usize, lambda: usize) -> EAConfig {
        EAConfig::new(
            FitnessSpec::plateau(n, 2).unwrap(),
            SelectionSpec::Tournament { k: 3 },
            MutationSpec::bitwise(1.0),
            lambda,
        )
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = plateau_cfg(20, 12).with_seed(77).with_budget(20_000).with_trajectory(1);
        assert_eq!(run_ea(&cfg).unwrap(), run_ea(&cfg).unwrap());
        let f = FitnessSpec::plateau(20, 2).unwrap();
        let a = run_opo(&f, &MutationSpec::bitwise(1.0), 100_000, 5).unwrap();
        assert_eq!(a, run_opo(&f, &MutationSpec::bitwise(1.0), 100_000, 5).unwrap());
    }

    #[test]
    fn budget_accounting_without_success() {
        // n large enough that the optimum is out of reach
        for (lambda, budget) in [(10, 100), (10, 105), (7, 7), (1, 50)] {
            let cfg = plateau_cfg(200, lambda).with_budget(budget).with_seed(3);
            let r = run_ea(&cfg).unwrap();
            assert!(!r.success);
            assert_eq!(r.evaluations, lambda as u64 * (r.generations + 1));
            assert!(r.evaluations >= budget && r.evaluations < budget + lambda as u64);
        }
    }

    #[test]
    fn success_invariants() {
        for seed in 0..20 {
            let cfg = plateau_cfg(10, 8).with_seed(seed).with_budget(1_000_000);
            let r = run_ea(&cfg).unwrap();
            assert!(r.success);
            assert_eq!(r.best_fitness, 10);
            assert!(r.evaluations <= cfg.budget + cfg.lambda as u64);
            assert!(r.evaluations > cfg.lambda as u64 * r.generations);
            assert!(r.evaluations <= cfg.lambda as u64 * (r.generations + 1));
        }
    }

    #[test]
    fn onemax_small_succeeds() {
        let mut ok = 0;
        for seed in 0..100 {
            let cfg = EAConfig::new(
                FitnessSpec::onemax(4).unwrap(),
                SelectionSpec::Tournament { k: 2 },
                MutationSpec::bitwise(1.0),
                8,
            )
            .with_budget(10_000)
            .with_seed(seed);
            ok += run_ea(&cfg).unwrap().success as usize;
        }
        assert!(ok >= 99);
    }

    #[test]
    fn identity_mutation_copies_identical_population() {
        let mut cfg = plateau_cfg(8, 10);
        cfg.mutation = MutationSpec::flip_distribution(vec![1.0]);
        let x: Bitstring = "01101001".parse().unwrap();
        let parents = Population::evaluate(vec![x; 10], &cfg.fitness).unwrap();
        let mut rng = RandomSource::new(1);
        let (next, _) = run_generation(&parents, &cfg, 0, &mut rng).unwrap();
        assert_eq!(next, parents);
        assert_eq!(next.len(), 10);
    }

    #[test]
    fn record_on_all_ones() {
        let cfg = EAConfig::new(
            FitnessSpec::plateau(8, 2).unwrap(),
            SelectionSpec::FitnessProportionate,
            MutationSpec::bitwise(1.0),
            10,
        );
        let parents = Population::evaluate(vec![Bitstring::ones(8); 10], &cfg.fitness).unwrap();
        let mut rng = RandomSource::new(1);
        let (next, rec) = run_generation(&parents, &cfg, 4, &mut rng).unwrap();
        assert_eq!(next.len(), 10);
        assert_eq!(rec.generation, 4);
        assert_eq!(rec.sum_ones, 80);
        assert_eq!(rec.plateau_count, 10);
        assert_eq!(rec.best_fitness, 8);
        assert!((rec.max_reproductive_rate - 1.0).abs() < 1e-12);
        assert!((rec.beta_at_gamma0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_respects_stride_and_bounds() {
        let cfg = plateau_cfg(300, 20).with_budget(20 * 26).with_trajectory(5).with_seed(9);
        let r = run_ea(&cfg).unwrap();
        let t = r.trajectory.unwrap();
        let gens: Vec<u64> = t.iter().map(|x| x.generation).collect();
        assert_eq!(gens, vec![0, 5, 10, 15, 20, 25]);
        for rec in &t {
            assert!(rec.sum_ones <= 20 * 300);
            assert!(rec.plateau_count <= 20);
            // a k-tournament gives nobody more than k expected offspring
            assert!(rec.max_reproductive_rate <= 3.0 + 1e-12);
        }
    }

    #[test]
    fn zero_generation_budget_records_only_initial() {
        let cfg = plateau_cfg(300, 16).with_budget(16).with_trajectory(1);
        let r = run_ea(&cfg).unwrap();
        assert_eq!(r.generations, 0);
        assert_eq!(r.evaluations, 16);
        assert_eq!(r.trajectory.unwrap().len(), 1);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = plateau_cfg(10, 4);
        cfg.lambda = 0;
        assert!(cfg.validate().is_err());
        let cfg = plateau_cfg(10, 4).with_budget(3);
        assert!(run_ea(&cfg).is_err());
        let mut cfg = plateau_cfg(10, 4);
        cfg.selection = SelectionSpec::Comma { mu: 5 };
        assert!(run_ea(&cfg).is_err());
        let mut cfg = plateau_cfg(10, 4);
        cfg.mutation = MutationSpec::bitwise(10.0);
        assert!(run_ea(&cfg).is_err());
    }

    #[test]
    fn opo_from_optimum_costs_one_evaluation() {
        let f = FitnessSpec::plateau(12, 3).unwrap();
        let r = run_opo_from(&f, &MutationSpec::bitwise(1.0), 1000, 1, Some(Bitstring::ones(12))).unwrap();
        assert!(r.success);
        assert_eq!(r.evaluations, 1);
        assert_eq!(r.generations, 0);
    }

    #[test]
    fn opo_budget_cap() {
        let f = FitnessSpec::plateau(100, 4).unwrap();
        let r = run_opo(&f, &MutationSpec::bitwise(1.0), 500, 1).unwrap();
        assert!(!r.success);
        assert_eq!(r.evaluations, 500);
        assert!(r.best_fitness <= 96);
    }

    #[test]
    fn comma_with_random_ties_still_solves() {
        let mut cfg = plateau_cfg(16, 40).with_budget(2_000_000);
        cfg.selection = SelectionSpec::Comma { mu: 10 };
        cfg.tie_break = TieBreak::Random;
        let solved = (0..10)
            .filter(|&s| run_ea(&cfg.clone().with_seed(s)).unwrap().success)
            .count();
        assert_eq!(solved, 10);
    }

    #[test]
    fn default_lambda_values() {
        assert_eq!(default_lambda(16), 56);
        assert_eq!(default_lambda(64), 84);
        assert_eq!(default_lambda(1), 1);
        assert_eq!(default_stride(2048), 1);
        assert_eq!(default_stride(2049), 10);
    }
}
