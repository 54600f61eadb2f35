//! Fitness-proportionate, k-tournament and (μ,λ) selection with exact
//! per-index probability models.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectionSpec {
    FitnessProportionate,
    /// Sample `k` individuals with replacement, return the fittest; ties go to
    /// the one sampled first.
    Tournament { k: usize },
    /// Uniform over the `mu` fittest; ranking ties are broken by index.
    Comma { mu: usize },
}

impl SelectionSpec {
    pub fn validate(&self, lambda: usize) -> Result<()> {
        match *self {
            SelectionSpec::FitnessProportionate => Ok(()),
            SelectionSpec::Tournament { k: 0 } => invalid("tournament size k ≥ 1"),
            SelectionSpec::Tournament { .. } => Ok(()),
            SelectionSpec::Comma { mu: 0 } => invalid("comma selection mu ≥ 1"),
            SelectionSpec::Comma { mu } if mu > lambda => {
                invalid(format!("comma selection needs mu ≤ lambda (mu={mu}, lambda={lambda})"))
            }
            SelectionSpec::Comma { .. } => Ok(()),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            SelectionSpec::FitnessProportionate => "fitness_proportionate",
            SelectionSpec::Tournament { .. } => "tournament",
            SelectionSpec::Comma { .. } => "comma",
        }
    }

    /// `k` or `mu`; `None` for fitness-proportionate.
    pub fn param(&self) -> Option<usize> {
        match *self {
            SelectionSpec::FitnessProportionate => None,
            SelectionSpec::Tournament { k } => Some(k),
            SelectionSpec::Comma { mu } => Some(mu),
        }
    }
}

/// How ranking ties at the (μ,λ) cut are resolved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
    /// Fresh uniformly random order among equal fitnesses on every call.
    Random,
}

/// Probability of each population index being returned by one selection draw.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionDistribution {
    probabilities: Vec<f64>,
}

impl SelectionDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return invalid("selection distribution needs lambda ≥ 1");
        }
        if probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return invalid("selection probabilities must be finite and non-negative");
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("selection probabilities sum to {total}, not 1"));
        }
        Ok(Self { probabilities })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.probabilities.iter().copied().fold(0.0, f64::max)
    }

    pub fn sampler(&self) -> SelectionSampler {
        SelectionSampler {
            index: WeightedIndex::new(&self.probabilities).expect("validated distribution"),
        }
    }
}

/// Precomputed sampler for repeated draws from one distribution.
#[derive(Clone, Debug)]
pub struct SelectionSampler {
    index: WeightedIndex<f64>,
}

impl SelectionSampler {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index.sample(rng)
    }
}

/// Exact selection distribution of `spec` on a population with these fitnesses.
pub fn selection_distribution(spec: &SelectionSpec, fitnesses: &[u64]) -> Result<SelectionDistribution> {
    let lambda = fitnesses.len();
    if lambda == 0 {
        return invalid("population must be non-empty (lambda ≥ 1)");
    }
    spec.validate(lambda)?;
    let p = match *spec {
        SelectionSpec::FitnessProportionate => proportionate(fitnesses),
        SelectionSpec::Tournament { k } => tournament(fitnesses, k),
        SelectionSpec::Comma { mu } => {
            let mut order: Vec<usize> = (0..lambda).collect();
            order.sort_by(|&a, &b| fitnesses[b].cmp(&fitnesses[a]).then(a.cmp(&b)));
            comma(lambda, mu, &order)
        }
    };
    SelectionDistribution::new(p)
}

/// Like [`selection_distribution`], but (μ,λ) ties are resolved by `tie_break`.
pub fn selection_distribution_with<R: Rng + ?Sized>(
    spec: &SelectionSpec,
    fitnesses: &[u64],
    tie_break: TieBreak,
    rng: &mut R,
) -> Result<SelectionDistribution> {
    match (spec, tie_break) {
        (SelectionSpec::Comma { mu }, TieBreak::Random) => {
            let lambda = fitnesses.len();
            spec.validate(lambda)?;
            let mut order: Vec<usize> = (0..lambda).collect();
            order.shuffle(rng);
            // stable sort keeps the shuffled order inside each tie group
            order.sort_by(|&a, &b| fitnesses[b].cmp(&fitnesses[a]));
            SelectionDistribution::new(comma(lambda, *mu, &order))
        }
        _ => selection_distribution(spec, fitnesses),
    }
}

fn proportionate(fitnesses: &[u64]) -> Vec<f64> {
    let lambda = fitnesses.len();
    let total: u128 = fitnesses.iter().map(|&f| f as u128).sum();
    if total == 0 {
        return vec![1.0 / lambda as f64; lambda];
    }
    let total = total as f64;
    fitnesses.iter().map(|&f| f as f64 / total).collect()
}

/// Closed form: an index in a tie group of size `g` with `b` strictly better
/// individuals wins with probability `((λ−b)^k − (λ−b−g)^k) / (g·λ^k)`.
fn tournament(fitnesses: &[u64], k: usize) -> Vec<f64> {
    let lambda = fitnesses.len();
    let mut sorted = fitnesses.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));

    // (fitness, better count, group size)
    let mut groups: Vec<(u64, usize, usize)> = Vec::new();
    let mut i = 0;
    while i < lambda {
        let f = sorted[i];
        let mut j = i;
        while j < lambda && sorted[j] == f {
            j += 1;
        }
        groups.push((f, i, j - i));
        i = j;
    }

    let k32 = u32::try_from(k).ok();
    let exact_total = k32.and_then(|k| (lambda as u128).checked_pow(k));
    let per_member = |better: usize, size: usize| -> f64 {
        if let (Some(k), Some(total)) = (k32, exact_total) {
            let hi = ((lambda - better) as u128).pow(k);
            let lo = ((lambda - better - size) as u128).pow(k);
            // every member of the group wins equally often, so this divides exactly
            let count = (hi - lo) / size as u128;
            count as f64 / total as f64
        } else {
            let l = lambda as f64;
            let hi = ((lambda - better) as f64 / l).powf(k as f64);
            let lo = ((lambda - better - size) as f64 / l).powf(k as f64);
            (hi - lo) / size as f64
        }
    };

    fitnesses
        .iter()
        .map(|f| {
            let g = groups
                .iter()
                .find(|g| g.0 == *f)
                .expect("fitness present in its own population");
            per_member(g.1, g.2)
        })
        .collect()
}

fn comma(lambda: usize, mu: usize, order: &[usize]) -> Vec<f64> {
    let mut p = vec![0.0; lambda];
    for &i in &order[..mu] {
        p[i] = 1.0 / mu as f64;
    }
    p
}

/// One selection draw.
pub fn sample_index<R: Rng + ?Sized>(d: &SelectionDistribution, rng: &mut R) -> usize {
    d.sampler().sample(rng)
}

/// Cumulative selection probability β(γ, P): the chance that one draw returns
/// an individual at least as fit as the ⌈γλ⌉-ranked member.
pub fn beta(gamma: f64, spec: &SelectionSpec, fitnesses: &[u64]) -> Result<f64> {
    let d = selection_distribution(spec, fitnesses)?;
    beta_from(gamma, &d, fitnesses)
}

pub fn beta_from(gamma: f64, d: &SelectionDistribution, fitnesses: &[u64]) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return invalid(format!("gamma must lie in (0, 1], got {gamma}"));
    }
    let lambda = fitnesses.len();
    let mut sorted = fitnesses.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let threshold = sorted[rank_index(gamma, lambda)];
    Ok(d
        .probabilities()
        .iter()
        .zip(fitnesses)
        .filter(|(_, &f)| f >= threshold)
        .map(|(p, _)| p)
        .sum())
}

/// 0-based position of the ⌈γλ⌉-ranked individual. The 1e-9 slack keeps
/// products such as 0.3·10 from rounding up a rank.
fn rank_index(gamma: f64, lambda: usize) -> usize {
    let rank = (gamma * lambda as f64 - 1e-9).ceil().max(1.0) as usize;
    rank.min(lambda) - 1
}

/// Reproductive rates α(i) = λ·p_sel(i | P).
pub fn reproductive_rates(spec: &SelectionSpec, fitnesses: &[u64]) -> Result<Vec<f64>> {
    let d = selection_distribution(spec, fitnesses)?;
    Ok(rates_from(&d))
}

pub fn rates_from(d: &SelectionDistribution) -> Vec<f64> {
    let lambda = d.len() as f64;
    d.probabilities().iter().map(|p| lambda * p).collect()
}
