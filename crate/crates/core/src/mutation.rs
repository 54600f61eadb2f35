//! Unbiased mutation: bitwise, point, and the generic operator defined by a
//! flip-count distribution.
//!
//! All three draw the number of flipped bits ξ first and then flip a
//! uniformly random subset of exactly ξ positions. For bitwise mutation ξ is
//! Binomial(n, χ/n), which gives the same law as independent per-bit flips.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Binomial;
use serde::{Deserialize, Serialize};

use crate::bitstring::Bitstring;
use crate::error::{invalid, Error, Result};

/// Default flip-count distribution of the generic operator: Pr(ξ=0) = Pr(ξ=1) = 1/2.
pub const DEFAULT_FLIP_PMF: [f64; 2] = [0.5, 0.5];

/// Largest length accepted by [`exact_offspring_distribution`].
pub const MAX_ENUMERATION_LEN: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MutationSpec {
    /// Each bit flips independently with probability χ/n.
    Bitwise { chi: f64 },
    /// Exactly one uniformly chosen bit flips.
    Point,
    /// ξ ~ pmf (entries p₀, p₁, …; missing tail entries are zero), then a
    /// uniform ξ-subset flips.
    FlipDistribution {
        #[serde(default = "default_pmf")]
        pmf: Vec<f64>,
    },
}

fn default_pmf() -> Vec<f64> {
    DEFAULT_FLIP_PMF.to_vec()
}

impl MutationSpec {
    pub fn bitwise(chi: f64) -> Self {
        MutationSpec::Bitwise { chi }
    }

    pub fn flip_distribution(pmf: Vec<f64>) -> Self {
        MutationSpec::FlipDistribution { pmf }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            MutationSpec::Bitwise { .. } => "bitwise",
            MutationSpec::Point => "point",
            MutationSpec::FlipDistribution { .. } => "flip_distribution",
        }
    }

    pub fn chi(&self) -> Option<f64> {
        match self {
            MutationSpec::Bitwise { chi } => Some(*chi),
            _ => None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if n == 0 {
            return invalid("mutation needs n ≥ 1");
        }
        match self {
            MutationSpec::Bitwise { chi } => {
                if !(*chi > 0.0 && *chi < n as f64) {
                    return invalid(format!("bitwise mutation needs 0 < chi < n (chi={chi}, n={n})"));
                }
            }
            MutationSpec::Point => {}
            MutationSpec::FlipDistribution { pmf } => {
                if pmf.is_empty() || pmf.len() > n + 1 {
                    return invalid(format!("flip pmf must have 1..={} entries", n + 1));
                }
                if pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return invalid("flip pmf entries must be non-negative");
                }
                let s: f64 = pmf.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return invalid(format!("flip pmf sums to {s}, not 1"));
                }
            }
        }
        Ok(())
    }

    /// Distribution of ξ, the number of flipped bits, as a vector of length n+1.
    pub fn flip_count_pmf(&self, n: usize) -> Result<Vec<f64>> {
        self.validate(n)?;
        let mut out = vec![0.0; n + 1];
        match self {
            MutationSpec::Bitwise { chi } => {
                let p = chi / n as f64;
                let (lp, lq) = (p.ln(), (-p).ln_1p());
                for (d, slot) in out.iter_mut().enumerate() {
                    *slot = (ln_binomial(n, d) + d as f64 * lp + (n - d) as f64 * lq).exp();
                }
            }
            MutationSpec::Point => out[1] = 1.0,
            MutationSpec::FlipDistribution { pmf } => out[..pmf.len()].copy_from_slice(pmf),
        }
        Ok(out)
    }

    /// Exact probability of producing `y` from `x`.
    pub fn transition_probability(&self, x: &Bitstring, y: &Bitstring) -> Result<f64> {
        let n = x.len();
        let h = x.hamming(y)?;
        self.validate(n)?;
        Ok(match self {
            MutationSpec::Bitwise { chi } => {
                let p = chi / n as f64;
                p.powi(h as i32) * (1.0 - p).powi((n - h) as i32)
            }
            MutationSpec::Point => {
                if h == 1 {
                    1.0 / n as f64
                } else {
                    0.0
                }
            }
            MutationSpec::FlipDistribution { pmf } => {
                pmf.get(h).copied().unwrap_or(0.0) / binomial(n, h)
            }
        })
    }

    pub fn mutate<R: Rng + ?Sized>(&self, x: &Bitstring, rng: &mut R) -> Result<Bitstring> {
        Ok(Mutator::new(self, x.len())?.mutate(x, rng))
    }
}

/// A mutation operator prepared for one string length.
#[derive(Clone, Debug)]
pub struct Mutator {
    n: usize,
    flips: FlipSampler,
}

#[derive(Clone, Debug)]
enum FlipSampler {
    Binomial(Binomial),
    Fixed(usize),
    Table(WeightedIndex<f64>),
}

impl Mutator {
    pub fn new(spec: &MutationSpec, n: usize) -> Result<Self> {
        spec.validate(n)?;
        let flips = match spec {
            MutationSpec::Bitwise { chi } => FlipSampler::Binomial(
                Binomial::new(n as u64, chi / n as f64).map_err(|e| Error::Invalid(e.to_string()))?,
            ),
            MutationSpec::Point => FlipSampler::Fixed(1),
            MutationSpec::FlipDistribution { pmf } => {
                let support: Vec<usize> = (0..pmf.len()).filter(|&d| pmf[d] > 0.0).collect();
                if support.len() == 1 {
                    FlipSampler::Fixed(support[0])
                } else {
                    FlipSampler::Table(
                        WeightedIndex::new(pmf).map_err(|e| Error::Invalid(e.to_string()))?,
                    )
                }
            }
        };
        Ok(Self { n, flips })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Draws ξ.
    #[inline]
    pub fn flip_count<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.flips {
            FlipSampler::Binomial(b) => b.sample(rng) as usize,
            FlipSampler::Fixed(d) => *d,
            FlipSampler::Table(t) => t.sample(rng),
        }
    }

    #[inline]
    pub fn mutate<R: Rng + ?Sized>(&self, x: &Bitstring, rng: &mut R) -> Bitstring {
        let mut y = x.clone();
        self.mutate_in_place(&mut y, rng);
        y
    }

    pub fn mutate_in_place<R: Rng + ?Sized>(&self, x: &mut Bitstring, rng: &mut R) {
        debug_assert_eq!(x.len(), self.n);
        let xi = self.flip_count(rng);
        match xi {
            0 => {}
            1 => x.flip(rng.random_range(0..self.n)),
            _ => {
                for i in rand::seq::index::sample(rng, self.n, xi) {
                    x.flip(i);
                }
            }
        }
    }
}

/// Applies `spec` to `x` once.
pub fn mutate<R: Rng + ?Sized>(spec: &MutationSpec, x: &Bitstring, rng: &mut R) -> Result<Bitstring> {
    spec.mutate(x, rng)
}

pub fn transition_probability(spec: &MutationSpec, x: &Bitstring, y: &Bitstring) -> Result<f64> {
    spec.transition_probability(x, y)
}

pub fn flip_count_pmf(spec: &MutationSpec, n: usize) -> Result<Vec<f64>> {
    spec.flip_count_pmf(n)
}

/// Full offspring distribution of `x` (zero-probability strings omitted).
pub fn exact_offspring_distribution(spec: &MutationSpec, x: &Bitstring) -> Result<BTreeMap<Bitstring, f64>> {
    let n = x.len();
    if n > MAX_ENUMERATION_LEN {
        return invalid(format!("enumeration limited to n ≤ {MAX_ENUMERATION_LEN}, got {n}"));
    }
    let mut out = BTreeMap::new();
    for v in 0..(1u64 << n) {
        let y = Bitstring::from_index(v, n);
        let p = spec.transition_probability(x, &y)?;
        if p > 0.0 {
            out.insert(y, p);
        }
    }
    Ok(out)
}

/// C(n, k) as a float, by a running product.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    statrs::function::factorial::ln_binomial(n as u64, k as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;
    use crate::transform::InstanceTransform;

    fn bs(s: &str) -> Bitstring {
        s.parse().unwrap()
    }

    fn all_specs(n: usize) -> Vec<MutationSpec> {
        let mut pmf = vec![0.0; n + 1];
        pmf[0] = 0.2;
        pmf[1] = 0.3;
        pmf[n / 2] += 0.1;
        pmf[n] += 0.4;
        vec![
            MutationSpec::bitwise(1.0),
            MutationSpec::bitwise(0.37),
            MutationSpec::Point,
            MutationSpec::flip_distribution(DEFAULT_FLIP_PMF.to_vec()),
            MutationSpec::flip_distribution(pmf),
        ]
    }

    #[test]
    fn point_is_distance_one() {
        let mut rng = RandomSource::new(1);
        let x = bs("0110");
        for _ in 0..1000 {
            let y = MutationSpec::Point.mutate(&x, &mut rng).unwrap();
            assert_eq!(x.hamming(&y).unwrap(), 1);
        }
    }

    #[test]
    fn identity_pmf() {
        let mut rng = RandomSource::new(2);
        let x = bs("0110101");
        let spec = MutationSpec::flip_distribution(vec![1.0]);
        for _ in 0..100 {
            assert_eq!(spec.mutate(&x, &mut rng).unwrap(), x);
        }
    }

    #[test]
    fn bitwise_mean_distance() {
        let mut rng = RandomSource::new(3);
        let n = 100;
        let x = Bitstring::zeros(n);
        let m = Mutator::new(&MutationSpec::bitwise(1.0), n).unwrap();
        let draws = 100_000;
        let total: usize = (0..draws).map(|_| m.mutate(&x, &mut rng).count_ones()).sum();
        let mean = total as f64 / draws as f64;
        let var = n as f64 * 0.01 * 0.99;
        let se = (var / draws as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn transition_examples() {
        let b = MutationSpec::bitwise(1.0);
        for y in ["00", "01", "10", "11"] {
            assert_eq!(b.transition_probability(&bs("00"), &bs(y)).unwrap(), 0.25);
        }
        let p = MutationSpec::Point;
        assert_eq!(p.transition_probability(&bs("0000"), &bs("0100")).unwrap(), 0.25);
        assert_eq!(p.transition_probability(&bs("0000"), &bs("0000")).unwrap(), 0.0);
        let g = MutationSpec::flip_distribution(vec![0.5, 0.5]);
        let t = g.transition_probability(&bs("000"), &bs("001")).unwrap();
        assert!((t - 1.0 / 6.0).abs() < 1e-16);
    }

    #[test]
    fn flip_count_examples() {
        assert_eq!(MutationSpec::Point.flip_count_pmf(5).unwrap(), vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let pmf = MutationSpec::bitwise(1.0).flip_count_pmf(30).unwrap();
        // 30·(1/30)·(29/30)^29, evaluated in exact rational arithmetic
        assert!((pmf[1] - 0.3741326001327005).abs() < 1e-13);
        let s: f64 = pmf.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        let g = MutationSpec::flip_distribution(vec![0.25, 0.5, 0.25]);
        assert_eq!(g.flip_count_pmf(2).unwrap(), vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn validation() {
        assert!(MutationSpec::bitwise(0.0).validate(5).is_err());
        assert!(MutationSpec::bitwise(5.0).validate(5).is_err());
        assert!(MutationSpec::flip_distribution(vec![0.5, 0.4]).validate(5).is_err());
        assert!(MutationSpec::flip_distribution(vec![0.5, 0.5, 0.0, 0.0]).validate(2).is_err());
        assert!(MutationSpec::flip_distribution(vec![-0.5, 1.5]).validate(2).is_err());
    }

    #[test]
    fn exact_distribution_examples() {
        let d = exact_offspring_distribution(&MutationSpec::Point, &bs("00")).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[&bs("01")], 0.5);
        assert_eq!(d[&bs("10")], 0.5);
        let d = exact_offspring_distribution(&MutationSpec::bitwise(1.0), &bs("00")).unwrap();
        assert!(d.values().all(|&p| p == 0.25) && d.len() == 4);
        for spec in all_specs(7) {
            let d = exact_offspring_distribution(&spec, &bs("0110100")).unwrap();
            let s: f64 = d.values().sum();
            assert!((s - 1.0).abs() < 1e-10, "{spec:?}: {s}");
        }
        assert!(exact_offspring_distribution(&MutationSpec::Point, &Bitstring::zeros(17)).is_err());
    }

    #[test]
    fn depends_on_distance_only() {
        for n in 1..=6 {
            for spec in all_specs(n).into_iter().filter(|s| s.validate(n).is_ok()) {
                let mut by_h: Vec<Option<f64>> = vec![None; n + 1];
                for a in 0..(1u64 << n) {
                    for b in 0..(1u64 << n) {
                        let (x, y) = (Bitstring::from_index(a, n), Bitstring::from_index(b, n));
                        let h = x.hamming(&y).unwrap();
                        let p = spec.transition_probability(&x, &y).unwrap();
                        match by_h[h] {
                            None => by_h[h] = Some(p),
                            Some(q) => assert_eq!(p, q),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn bitwise_rows_sum_to_one() {
        for n in 1..=10 {
            let spec = MutationSpec::bitwise(0.8);
            let x = Bitstring::from_index(0b1011 & ((1 << n) - 1), n);
            let s: f64 = (0..(1u64 << n))
                .map(|v| spec.transition_probability(&x, &Bitstring::from_index(v, n)).unwrap())
                .sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unbiased_under_transforms() {
        let n = 6;
        let mut rng = RandomSource::new(99);
        for spec in all_specs(n) {
            for _ in 0..10 {
                let t = InstanceTransform::random(n, &mut rng);
                let x = Bitstring::random(n, &mut rng);
                let base = exact_offspring_distribution(&spec, &x).unwrap();
                let moved = exact_offspring_distribution(&spec, &t.apply(&x).unwrap()).unwrap();
                assert_eq!(base.len(), moved.len());
                for (y, p) in &base {
                    let q = moved[&t.apply(y).unwrap()];
                    assert!((p - q).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(30, 15), 155117520.0);
        assert_eq!(binomial(3, 4), 0.0);
    }
}
