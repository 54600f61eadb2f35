//! Closed-form bound calculators, level partitions, and the exact
//! expected-runtime oracle of the elitist (1+1) EA.
//!
//! `log` in these formulas is base 2 and `ln` natural, following the
//! notation the bounds are stated in.

use std::collections::BTreeMap;
use std::f64::consts::{E, LN_2};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fitness::FitnessSpec;
use crate::mutation::MutationSpec;

/// Largest problem size accepted by the exact chain.
pub const MAX_CHAIN_N: usize = 200;

/// Default constant C of condition (M4').
pub const DEFAULT_M4_PRIME_C: f64 = 1.0;

const FIXED_POINT_START: u64 = 16;
const FIXED_POINT_CAP: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    /// A proven inequality evaluated at the given parameters.
    Bound,
    /// An O(·) expression evaluated with leading constant 1; not a bound.
    OrderExpression,
    /// A threshold on a parameter.
    Threshold,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub holds: bool,
    /// Signed slack: positive when the condition holds.
    pub margin: f64,
}

impl Condition {
    /// `lhs < rhs`.
    fn strict(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            holds: lhs < rhs,
            margin: rhs - lhs,
        }
    }

    /// `lhs ≥ rhs`.
    fn at_least(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            holds: lhs >= rhs,
            margin: lhs - rhs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub kind: ReportKind,
    pub value: f64,
    /// Named intermediate quantities, sorted by name.
    pub quantities: BTreeMap<String, f64>,
    pub conditions: Vec<Condition>,
}

impl BoundReport {
    fn new(name: &str, kind: ReportKind, value: f64) -> Self {
        Self {
            name: name.into(),
            kind,
            value,
            quantities: BTreeMap::new(),
            conditions: Vec::new(),
        }
    }

    fn with(mut self, key: &str, v: f64) -> Self {
        self.quantities.insert(key.into(), v);
        self
    }

    pub fn quantity(&self, key: &str) -> Option<f64> {
        self.quantities.get(key).copied()
    }

    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn all_hold(&self) -> bool {
        self.conditions.iter().all(|c| c.holds)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelKind {
    /// m = n − r + 1; A_i = {|x| = i−1} for i < m, A_m = {|x| ≥ n − r}.
    PlateauLevels,
    /// m = n + 1; A_i = {|x| = i−1}.
    OneMaxLevels,
}

/// Partition of {0,1}^n into levels by number of ones.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelPartition {
    pub n: usize,
    pub r: Option<usize>,
    pub kind: LevelKind,
    pub m: usize,
}

impl LevelPartition {
    /// 1-based level of a point with `ones` ones.
    pub fn level_of(&self, ones: usize) -> usize {
        assert!(ones <= self.n);
        (ones + 1).min(self.m)
    }

    /// Smallest ones count in level `j` (1-based).
    pub fn min_ones(&self, j: usize) -> usize {
        assert!(j >= 1 && j <= self.m);
        j - 1
    }

    /// Ones counts in level `j`.
    pub fn ones_in(&self, j: usize) -> std::ops::RangeInclusive<usize> {
        if j == self.m {
            self.min_ones(j)..=self.n
        } else {
            self.min_ones(j)..=self.min_ones(j)
        }
    }
}

pub fn plateau_levels(n: usize, r: Option<usize>, kind: LevelKind) -> Result<LevelPartition> {
    match kind {
        LevelKind::PlateauLevels => {
            let r = r.ok_or_else(|| Error::Invalid("plateau levels need r".into()))?;
            FitnessSpec::plateau(n, r)?;
            Ok(LevelPartition {
                n,
                r: Some(r),
                kind,
                m: n - r + 1,
            })
        }
        LevelKind::OneMaxLevels => {
            if n == 0 {
                return invalid("n ≥ 1");
            }
            Ok(LevelPartition { n, r, kind, m: n + 1 })
        }
    }
}

/// Parameters of the level-based theorems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelParams {
    /// Upgrade probabilities s_1, …, s_{m−1}.
    pub s: Vec<f64>,
    #[serde(default = "one")]
    pub p0: f64,
    pub gamma0: f64,
    pub delta: f64,
    /// Unused by the (M4') floor search.
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_c")]
    pub c: f64,
}

fn one() -> f64 {
    1.0
}

fn default_c() -> f64 {
    DEFAULT_M4_PRIME_C
}

impl LevelParams {
    pub fn s_star(&self) -> f64 {
        self.s.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn check(&self, m: usize) -> Result<()> {
        if m == 0 {
            return invalid("level count m ≥ 1");
        }
        if self.s.len() != m - 1 {
            return invalid(format!("need m − 1 = {} upgrade probabilities, got {}", m - 1, self.s.len()));
        }
        if self.s.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
            return invalid("upgrade probabilities must lie in (0, 1]");
        }
        if !(self.p0 > 0.0 && self.p0 <= 1.0) {
            return invalid("p0 must lie in (0, 1]");
        }
        if !(self.gamma0 > 0.0 && self.gamma0 < 1.0) {
            return invalid("gamma0 must lie in (0, 1)");
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return invalid("delta must lie in (0, 1]");
        }
        if !(self.lambda > 0.0) {
            return invalid("lambda must be positive");
        }
        if !(self.c > 0.0) {
            return invalid("C must be positive");
        }
        Ok(())
    }
}

/// Level-based bound on the expected number of generations until γ₀λ
/// individuals sit in the top level; reports condition (M4).
pub fn level_based_bound(p: &LevelParams, m: usize) -> Result<BoundReport> {
    p.check(m)?;
    let (d, g, l) = (p.delta, p.gamma0, p.lambda);
    let sum: f64 = p
        .s
        .iter()
        .map(|&s| (6.0 * d * l / (4.0 + g * s * d * l)).ln() + 1.0 / (g * s * l))
        .sum();
    let value = 8.0 / (d * d) * sum;
    let mut report = BoundReport::new("level-based", ReportKind::Bound, value);
    if m > 1 {
        let s_star = p.s_star();
        let need = 4.0 / (g * d * d) * (128.0 * m as f64 / (g * s_star * d * d)).ln();
        report = report.with("s_star", s_star).with("m4_lambda_min", need);
        report.conditions.push(Condition::at_least("M4", l, need));
    }
    Ok(report.with("m", m as f64))
}

/// Right-hand side of (M4') at population size `lambda`.
pub fn m4_prime_rhs(p: &LevelParams, m: usize, lambda: f64) -> f64 {
    let (d, g) = (p.delta, p.gamma0);
    let inner = p.c * m as f64 / d * (lambda.log2() + 1.0 / (g * p.s_star() * lambda));
    8.0 / (g * d * d) * inner.log2()
}

/// Multiplicative up-drift runtime expression (evaluations) with constant 1.
pub fn updrift_bound(p: &LevelParams, m: usize) -> Result<BoundReport> {
    p.check(m)?;
    let (d, g, l) = (p.delta, p.gamma0, p.lambda);
    if g * l <= 1.0 {
        return invalid("up-drift expression needs gamma0·lambda > 1");
    }
    let first = l * m as f64 * (g * l).log2() / d;
    let second = p.s.iter().map(|&s| 1.0 / (g * s)).sum::<f64>() / d;
    let mut report = BoundReport::new("updrift", ReportKind::OrderExpression, first + second)
        .with("population_term", first)
        .with("level_term", second)
        .with("m", m as f64);
    if m > 1 {
        let rhs = m4_prime_rhs(p, m, l);
        report = report.with("m4_prime_rhs", rhs);
        report.conditions.push(Condition::at_least("M4'", l, rhs));
    }
    Ok(report)
}

/// Smallest λ meeting (M4'), by iterating λ ← ⌈rhs(λ)⌉ from 16.
pub fn lambda_floor_m4prime(p: &LevelParams, m: usize) -> Result<u64> {
    let mut probe = p.clone();
    probe.lambda = FIXED_POINT_START as f64;
    probe.check(m)?;
    if m < 2 {
        return invalid("(M4') needs m ≥ 2");
    }
    let mut lambda = FIXED_POINT_START;
    for _ in 0..FIXED_POINT_CAP {
        let next = (m4_prime_rhs(p, m, lambda as f64).ceil().max(1.0)) as u64;
        if next == lambda {
            return Ok(lambda);
        }
        lambda = next;
    }
    Err(Error::NoFixedPoint(FIXED_POINT_CAP))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HighPressure {
    pub k_min: u64,
    /// Minimum λ/μ for (μ,λ)-selection.
    pub ratio_min: f64,
    pub expected_generations: f64,
}

/// Selection-pressure floors under which the top level is reached within
/// e·m generations in expectation.
pub fn high_pressure_params(m: usize, s_star: f64) -> Result<HighPressure> {
    if m == 0 || !(s_star > 0.0 && s_star <= 1.0) {
        return invalid("need m ≥ 1 and s_star in (0, 1]");
    }
    let ratio_min = (1.0 + (m as f64).ln()) / s_star;
    Ok(HighPressure {
        k_min: (ratio_min * E).ceil() as u64,
        ratio_min,
        expected_generations: E * m as f64,
    })
}

/// Tournament size and λ/μ floors for plateau runs driven purely by
/// single-bit flips, given Pr(ξ = 1).
pub fn plateau_high_pressure_params(n: usize, p_xi1: f64) -> Result<(u64, f64)> {
    if n == 0 || !(p_xi1 > 0.0 && p_xi1 <= 1.0) {
        return invalid("need n ≥ 1 and Pr(xi=1) in (0, 1]");
    }
    let ratio_min = n as f64 * (1.0 + (n as f64).ln()) / p_xi1;
    Ok(((ratio_min * E).ceil() as u64, ratio_min))
}

/// Conditions of the population negative-drift theorem.
///
/// `value` is the admissible upper bound on b(n)/n, zero when ψ ≥ 1.
pub fn negative_drift_report(alpha: f64, chi: f64, delta: f64, n: Option<usize>) -> Result<BoundReport> {
    if !(chi > 0.0 && delta > 0.0 && alpha > 0.0) {
        return invalid("need alpha, chi, delta > 0");
    }
    let psi = alpha.ln() / chi + delta;
    let threshold = if psi < 1.0 {
        (0.5 - (psi * (2.0 - psi) / 4.0).sqrt()).min(0.2)
    } else {
        0.0
    };
    let mut report = BoundReport::new("negative-drift", ReportKind::Threshold, threshold)
        .with("psi", psi)
        .with("b_over_n_max", threshold);
    if let Some(n) = n {
        let n = n as f64;
        report = report.with("b_cap", n / chi).with("b_max", (threshold * n).min(n / chi));
    }
    report.conditions.push(Condition::strict("alpha > 1", 1.0, alpha));
    report.conditions.push(Condition::strict("psi < 1", psi, 1.0));
    Ok(report)
}

/// Whether α < e^χ − δ.
pub fn pk10_holds(alpha: f64, chi: f64, delta: f64) -> bool {
    alpha < chi.exp() - delta
}

pub fn pk10_report(alpha: f64, chi: f64, delta: f64) -> BoundReport {
    let limit = chi.exp() - delta;
    let mut r = BoundReport::new("pk10", ReportKind::Threshold, limit).with("alpha", alpha);
    r.conditions.push(Condition::strict("alpha < e^chi - delta", alpha, limit));
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxLimits {
    pub rho: f64,
    pub m_chi: f64,
    /// Zero-bit count below which points are unreachable.
    pub z: f64,
    /// Largest approximation slack covered.
    pub w_max: f64,
}

/// M(χ) through ψ = ln 2/(2χ) + 1/2.
pub fn m_chi_via_psi(chi: f64) -> f64 {
    let psi = LN_2 / (2.0 * chi) + 0.5;
    (1.0 - (psi * (2.0 - psi)).sqrt()) / 2.0
}

/// M(χ) through ρ = ln 2/χ.
pub fn m_chi_via_rho(chi: f64) -> f64 {
    let rho = LN_2 / chi;
    (1.0 - (rho / 2.0 - rho * rho / 4.0 + 0.75).sqrt()) / 2.0
}

pub fn approximation_limits(chi: f64, epsilon: f64, n: usize) -> Result<ApproxLimits> {
    if !(chi > LN_2) {
        return invalid(format!("chi must exceed ln 2, got {chi}"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return invalid("epsilon must lie in (0, 1)");
    }
    let rho = LN_2 / chi;
    let (a, b) = (m_chi_via_psi(chi), m_chi_via_rho(chi));
    if (a - b).abs() > 1e-10 {
        return invalid(format!("M(chi) forms disagree: {a} vs {b}"));
    }
    let half = rho / 2.0;
    let z = n as f64 * (1.0 - epsilon) / 2.0 * (1.0 - (half - half * half + 0.75).sqrt());
    Ok(ApproxLimits {
        rho,
        m_chi: b,
        z,
        w_max: (1.0 - rho).powi(2) / 2.0,
    })
}

/// Reproductive-rate ceiling 2n / ((1−ε′)(n−r)) of proportionate selection
/// while Σ fitness stays above (1−ε′)λ(n−r)/2.
pub fn fprop_alpha_bound(n: usize, r: usize, eps_prime: f64) -> Result<f64> {
    if r >= n {
        return invalid("need r < n");
    }
    if !(0.0..1.0).contains(&eps_prime) {
        return invalid("eps_prime must lie in [0, 1)");
    }
    Ok(2.0 * n as f64 / ((1.0 - eps_prime) * (n - r) as f64))
}

/// n^r / (r! · Pr(1 ≤ ξ ≤ r)): leading term of the (1+1) EA's expected
/// runtime on the plateau function.
pub fn opo_plateau_asymptote(n: usize, r: usize, mutation: &MutationSpec) -> Result<f64> {
    let pmf = mutation.flip_count_pmf(n)?;
    let hit: f64 = pmf[1..=r.min(n)].iter().sum();
    let r_fact: f64 = (1..=r).map(|i| i as f64).product();
    Ok((n as f64).powi(r as i32) / (r_fact * hit))
}

/// ln k! for k = 0..=n, summed with Kahan compensation.
struct LnFactorials(Vec<f64>);

impl LnFactorials {
    fn new(n: usize) -> Self {
        let mut table = Vec::with_capacity(n + 1);
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        table.push(0.0);
        for k in 1..=n {
            let y = (k as f64).ln() - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            table.push(sum);
        }
        Self(table)
    }

    fn ln_choose(&self, n: usize, k: usize) -> f64 {
        self.0[n] - self.0[k] - self.0[n - k]
    }
}

/// Mutation transition matrix on the ones count: entry `[k][j]` is the
/// probability that a parent with `k` ones produces an offspring with `j`.
pub fn ones_transition_matrix(n: usize, mutation: &MutationSpec) -> Result<Vec<Vec<f64>>> {
    if n > MAX_CHAIN_N {
        return invalid(format!("exact chain limited to n ≤ {MAX_CHAIN_N}"));
    }
    mutation.validate(n)?;
    let lf = LnFactorials::new(n);
    // ln of the probability of one particular set of d flipped positions
    let ln_subset: Vec<f64> = match mutation {
        MutationSpec::Bitwise { chi } => {
            let p = chi / n as f64;
            (0..=n)
                .map(|d| d as f64 * p.ln() + (n - d) as f64 * (-p).ln_1p())
                .collect()
        }
        _ => {
            let pmf = mutation.flip_count_pmf(n)?;
            (0..=n)
                .map(|d| if pmf[d] > 0.0 { pmf[d].ln() - lf.ln_choose(n, d) } else { f64::NEG_INFINITY })
                .collect()
        }
    };
    let mut rows = vec![vec![0.0; n + 1]; n + 1];
    for (k, row) in rows.iter_mut().enumerate() {
        for a in 0..=k {
            for b in 0..=(n - k) {
                let ls = ln_subset[a + b];
                if ls == f64::NEG_INFINITY {
                    continue;
                }
                row[k - a + b] += (lf.ln_choose(k, a) + lf.ln_choose(n - k, b) + ls).exp();
            }
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return invalid(format!("transition row {k} sums to {total}"));
        }
    }
    Ok(rows)
}

/// (1+1) EA chain on the ones count: offspring accepted iff f(y) ≥ f(x).
/// State n is absorbing.
pub fn opo_chain(fitness: &FitnessSpec, mutation: &MutationSpec) -> Result<Vec<Vec<f64>>> {
    let n = fitness.n();
    let mut rows = ones_transition_matrix(n, mutation)?;
    for (k, row) in rows.iter_mut().enumerate() {
        if k == n {
            row.iter_mut().for_each(|p| *p = 0.0);
            row[n] = 1.0;
            continue;
        }
        let fk = fitness.value_from_ones(k);
        let mut rejected = 0.0;
        for j in 0..=n {
            if j != k && fitness.value_from_ones(j) < fk {
                rejected += row[j];
                row[j] = 0.0;
            }
        }
        row[k] += rejected;
    }
    Ok(rows)
}

/// Expected number of steps to hit state `n` from each state, for a chain
/// whose only absorbing state is the last one.
pub fn hitting_times(chain: &[Vec<f64>]) -> Result<Vec<f64>> {
    let size = chain.len() - 1;
    let a = DMatrix::from_fn(size, size, |i, j| {
        (if i == j { 1.0 } else { 0.0 }) - chain[i][j]
    });
    let b = DVector::from_element(size, 1.0);
    let h = a.lu().solve(&b).ok_or(Error::Singular)?;
    if h.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Singular);
    }
    let mut out: Vec<f64> = h.iter().copied().collect();
    out.push(0.0);
    Ok(out)
}

/// Exact expected evaluations of the (1+1) EA from a uniform start,
/// counting the initial evaluation.
pub fn opo_exact_expected_runtime(fitness: &FitnessSpec, mutation: &MutationSpec) -> Result<f64> {
    let n = fitness.n();
    let chain = opo_chain(fitness, mutation)?;
    let h = hitting_times(&chain)?;
    let lf = LnFactorials::new(n);
    let start: f64 = (0..=n)
        .map(|k| (lf.ln_choose(n, k) - n as f64 * LN_2).exp() * h[k])
        .sum();
    Ok(1.0 + start)
}

/// Upgrade probabilities s_j and no-degradation probability p₀ of a
/// mutation operator on a level partition, minimised over each level.
pub fn level_probabilities(partition: &LevelPartition, mutation: &MutationSpec) -> Result<(Vec<f64>, f64)> {
    let t = ones_transition_matrix(partition.n, mutation)?;
    let level_of = |k: usize| partition.level_of(k);
    let mut s = Vec::with_capacity(partition.m.saturating_sub(1));
    let mut p0 = f64::INFINITY;
    for j in 1..partition.m {
        let mut up = f64::INFINITY;
        for k in partition.ones_in(j) {
            let row = &t[k];
            let above: f64 = (0..=partition.n).filter(|&i| level_of(i) > j).map(|i| row[i]).sum();
            let stay: f64 = (0..=partition.n).filter(|&i| level_of(i) >= j).map(|i| row[i]).sum();
            up = up.min(above);
            p0 = p0.min(stay);
        }
        s.push(up);
    }
    Ok((s, p0))
}

/// A named bound evaluation, as read from the command line or a JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "theorem", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundQuery {
    /// Level count is `s.len() + 1`.
    LevelBased {
        #[serde(flatten)]
        params: LevelParams,
    },
    Updrift {
        #[serde(flatten)]
        params: LevelParams,
    },
    M4PrimeFloor {
        #[serde(flatten)]
        params: LevelParams,
    },
    HighPressure { m: usize, s_star: f64 },
    PlateauHighPressure { n: usize, p_xi1: f64 },
    NegativeDrift {
        alpha: f64,
        chi: f64,
        delta: f64,
        #[serde(default)]
        n: Option<usize>,
    },
    Pk10 { alpha: f64, chi: f64, delta: f64 },
    Approximation { chi: f64, epsilon: f64, n: usize },
    Fprop { n: usize, r: usize, eps_prime: f64 },
    /// Exact expected runtime of the (1+1) EA with bitwise mutation; OneMax
    /// when `r` is absent.
    OpoExact {
        n: usize,
        #[serde(default)]
        r: Option<usize>,
        chi: f64,
    },
}

pub fn evaluate_bound(query: &BoundQuery) -> Result<BoundReport> {
    match query {
        BoundQuery::LevelBased { params } => level_based_bound(params, params.s.len() + 1),
        BoundQuery::Updrift { params } => updrift_bound(params, params.s.len() + 1),
        BoundQuery::M4PrimeFloor { params } => {
            let m = params.s.len() + 1;
            let floor = lambda_floor_m4prime(params, m)?;
            Ok(BoundReport::new("m4-prime-floor", ReportKind::Threshold, floor as f64)
                .with("m", m as f64)
                .with("s_star", params.s_star())
                .with("rhs_at_floor", m4_prime_rhs(params, m, floor as f64)))
        }
        BoundQuery::HighPressure { m, s_star } => {
            let h = high_pressure_params(*m, *s_star)?;
            Ok(BoundReport::new("high-pressure", ReportKind::Threshold, h.k_min as f64)
                .with("k_min", h.k_min as f64)
                .with("ratio_min", h.ratio_min)
                .with("expected_generations", h.expected_generations))
        }
        BoundQuery::PlateauHighPressure { n, p_xi1 } => {
            let (k, ratio) = plateau_high_pressure_params(*n, *p_xi1)?;
            Ok(BoundReport::new("plateau-high-pressure", ReportKind::Threshold, k as f64)
                .with("k_min", k as f64)
                .with("ratio_min", ratio))
        }
        BoundQuery::NegativeDrift { alpha, chi, delta, n } => negative_drift_report(*alpha, *chi, *delta, *n),
        BoundQuery::Pk10 { alpha, chi, delta } => Ok(pk10_report(*alpha, *chi, *delta)),
        BoundQuery::Approximation { chi, epsilon, n } => {
            let a = approximation_limits(*chi, *epsilon, *n)?;
            Ok(BoundReport::new("approximation", ReportKind::Threshold, a.z)
                .with("rho", a.rho)
                .with("m_chi", a.m_chi)
                .with("z", a.z)
                .with("w_max", a.w_max))
        }
        BoundQuery::Fprop { n, r, eps_prime } => Ok(BoundReport::new(
            "fprop",
            ReportKind::Bound,
            fprop_alpha_bound(*n, *r, *eps_prime)?,
        )),
        BoundQuery::OpoExact { n, r, chi } => {
            let fitness = match r {
                Some(r) => FitnessSpec::plateau(*n, *r)?,
                None => FitnessSpec::onemax(*n)?,
            };
            let mutation = MutationSpec::bitwise(*chi);
            let exact = opo_exact_expected_runtime(&fitness, &mutation)?;
            let mut report = BoundReport::new("opo-exact", ReportKind::Bound, exact);
            if let Some(r) = r {
                report = report.with("asymptote", opo_plateau_asymptote(*n, *r, &mutation)?);
            }
            Ok(report)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn params(s: Vec<f64>, gamma0: f64, delta: f64, lambda: f64) -> LevelParams {
        LevelParams {
            s,
            p0: 1.0,
            gamma0,
            delta,
            lambda,
            c: 1.0,
        }
    }

    #[test]
    fn level_based_examples() {
        let p = params(vec![0.1], 0.1, 1.0, 100.0);
        let r = level_based_bound(&p, 2).unwrap();
        assert!(rel(r.value, 8.0 * (120f64.ln() + 1.0)) < 1e-12);
        assert_eq!(r.kind, ReportKind::Bound);
        let r = level_based_bound(&params(vec![], 0.1, 1.0, 100.0), 1).unwrap();
        assert_eq!(r.value, 0.0);
        let base = params(vec![0.01, 0.2, 0.05], 0.2, 0.5, 500.0);
        let doubled = LevelParams {
            s: base.s.iter().map(|s| s * 2.0).collect(),
            ..base.clone()
        };
        assert!(level_based_bound(&doubled, 4).unwrap().value <= level_based_bound(&base, 4).unwrap().value);
        assert!(level_based_bound(&base, 3).is_err());
        assert!(level_based_bound(&params(vec![0.0], 0.1, 1.0, 100.0), 2).is_err());
    }

    #[test]
    fn m4_condition_margin_sign() {
        let small = level_based_bound(&params(vec![0.01], 0.1, 0.5, 10.0), 2).unwrap();
        let c = small.condition("M4").unwrap();
        assert!(!c.holds && c.margin < 0.0);
        let large = level_based_bound(&params(vec![0.01], 0.1, 0.5, 1e6), 2).unwrap();
        let c = large.condition("M4").unwrap();
        assert!(c.holds && c.margin > 0.0);
    }

    #[test]
    fn updrift_examples() {
        let p = params(vec![0.1], 0.1, 0.5, 100.0);
        let r = updrift_bound(&p, 2).unwrap();
        assert!(rel(r.value, 1528.7712379549448) < 1e-9);
        assert_eq!(r.kind, ReportKind::OrderExpression);
        let full = updrift_bound(&params(vec![0.1], 0.1, 1.0, 100.0), 2).unwrap();
        assert!(rel(full.value, r.value / 2.0) < 1e-12);
        let big = updrift_bound(&params(vec![0.1], 0.1, 0.5, 400.0), 2).unwrap();
        let ratio = big.quantity("population_term").unwrap() / r.quantity("population_term").unwrap();
        assert!(rel(ratio, 4.0 * 40f64.log2() / 10f64.log2()) < 1e-12);
        assert!(updrift_bound(&params(vec![0.1], 0.01, 0.5, 100.0), 2).is_err());
    }

    /// Smallest λ with λ ≥ rhs(λ), by linear scan.
    fn scan_floor(p: &LevelParams, m: usize) -> u64 {
        (1u64..).find(|&l| l as f64 >= m4_prime_rhs(p, m, l as f64)).unwrap()
    }

    #[test]
    fn m4_prime_floor() {
        let mut s = vec![1.0; 10];
        s[3] = 0.01;
        let p = params(s, 0.25, 0.1, 0.0);
        let floor = lambda_floor_m4prime(&p, 11).unwrap();
        assert_eq!(floor, scan_floor(&p, 11));
        assert_eq!(floor, 34226);

        let wider = LevelParams {
            delta: 0.2,
            ..p.clone()
        };
        let shrunk = lambda_floor_m4prime(&wider, 11).unwrap();
        assert_eq!(shrunk, scan_floor(&wider, 11));
        assert!(floor as f64 > 3.0 * shrunk as f64);

        let mut last = u64::MAX;
        for s_star in [0.001, 0.01, 0.1, 0.5, 1.0] {
            let mut q = p.clone();
            q.s[3] = s_star;
            let f = lambda_floor_m4prime(&q, 11).unwrap();
            assert!(f <= last);
            last = f;
        }
    }

    #[test]
    fn high_pressure_examples() {
        let h = high_pressure_params(10, 0.01).unwrap();
        assert_eq!(h.k_min, 898);
        assert!(rel(h.ratio_min, 330.2585092994046) < 1e-12);
        assert!(rel(h.expected_generations, 27.18281828459045) < 1e-12);
        assert_eq!(high_pressure_params(1, 0.5).unwrap().k_min, (E / 0.5).ceil() as u64);
        assert_eq!(high_pressure_params(1, 1.0).unwrap().k_min, 3);
        assert!(high_pressure_params(3, 0.0).is_err());
    }

    #[test]
    fn plateau_high_pressure_examples() {
        let (k, ratio) = plateau_high_pressure_params(10, 0.5).unwrap();
        assert_eq!(k, 180);
        assert!(rel(ratio * E, 179.5471409045088) < 1e-12);
        assert_eq!(plateau_high_pressure_params(1, 1.0).unwrap().0, 3);
    }

    #[test]
    fn negative_drift_examples() {
        let r = negative_drift_report(2.0, 1.0, 0.01, Some(100)).unwrap();
        assert!(rel(r.quantity("psi").unwrap(), 0.7031471805599453) < 1e-12);
        assert!(rel(r.value, 0.02253837756567012) < 1e-9);
        assert!(r.all_hold());
        let r = negative_drift_report(1f64.exp(), 1.0, 0.01, None).unwrap();
        assert!(rel(r.quantity("psi").unwrap(), 1.01) < 1e-12);
        assert!(!r.condition("psi < 1").unwrap().holds);
        assert_eq!(r.value, 0.0);
        for alpha in [1.01, 1.1, 1.5] {
            for chi in [1.0, 3.0, 10.0] {
                assert!(negative_drift_report(alpha, chi, 0.001, Some(50)).unwrap().value <= 0.2);
            }
        }
    }

    #[test]
    fn pk10_examples() {
        assert!(pk10_holds(1.9, 1.0, 0.05));
        assert!(!pk10_holds(2.7, 1.0, 0.05));
        assert!(!pk10_holds(2.0, 2f64.ln(), 1e-9));
        assert!(pk10_report(1.9, 1.0, 0.05).all_hold());
    }

    #[test]
    fn approximation_examples() {
        // reference values: the closed forms evaluated independently in double precision
        let a = approximation_limits(1.0, 0.1, 100).unwrap();
        assert!(rel(a.rho, LN_2) < 1e-15);
        assert!(rel(a.m_chi, 0.005919961746980118) < 1e-9);
        assert!(rel(a.w_max, 0.04707932639915541) < 1e-9);
        assert!(rel(a.z, 0.5327965572282106) < 1e-9);
        assert!(approximation_limits(LN_2, 0.1, 100).is_err());
        assert!(approximation_limits(0.5, 0.1, 100).is_err());
        let grid = [0.8, 1.0, 2.0, 4.0];
        for w in grid.windows(2) {
            assert!(m_chi_via_rho(w[0]) < m_chi_via_rho(w[1]));
        }
        for chi in [0.7, 0.8, 1.0, 1.5, 2.0, 4.0, 10.0, 100.0] {
            assert!((m_chi_via_psi(chi) - m_chi_via_rho(chi)).abs() < 1e-10);
        }
    }

    #[test]
    fn fprop_examples() {
        assert!(rel(fprop_alpha_bound(100, 2, 0.1).unwrap(), 200.0 / (0.9 * 98.0)) < 1e-12);
        assert_eq!(fprop_alpha_bound(100, 0, 0.0).unwrap(), 2.0);
        assert!(fprop_alpha_bound(100, 3, 0.1).unwrap() > fprop_alpha_bound(100, 2, 0.1).unwrap());
        assert!(fprop_alpha_bound(5, 5, 0.1).is_err());
    }

    #[test]
    fn partitions() {
        let p = plateau_levels(5, Some(2), LevelKind::PlateauLevels).unwrap();
        assert_eq!(p.m, 4);
        assert_eq!(p.ones_in(4), 3..=5);
        assert_eq!(p.level_of(0), 1);
        assert_eq!(p.level_of(4), 4);
        let q = plateau_levels(3, None, LevelKind::OneMaxLevels).unwrap();
        assert_eq!(q.m, 4);
        assert_eq!(q.ones_in(4), 3..=3);
        assert_eq!(q.level_of(2), 3);
        assert!(plateau_levels(5, Some(1), LevelKind::PlateauLevels).is_err());
    }

    #[test]
    fn level_probabilities_point_mutation() {
        let part = plateau_levels(6, Some(2), LevelKind::PlateauLevels).unwrap();
        let (s, p0) = level_probabilities(&part, &MutationSpec::Point).unwrap();
        // from k ones a point mutation climbs with probability (n − k)/n
        let want: Vec<f64> = (0..4).map(|k| (6 - k) as f64 / 6.0).collect();
        for (a, b) in s.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        // the worst non-top level keeps its ones with probability 1 − 3/6
        assert!((p0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_state_chain_by_hand() {
        let f = FitnessSpec::onemax(1).unwrap();
        let t = opo_exact_expected_runtime(&f, &MutationSpec::bitwise(0.5)).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
    }

    #[test]
    fn chain_rows_and_absorption() {
        for spec in [
            MutationSpec::bitwise(1.0),
            MutationSpec::Point,
            MutationSpec::flip_distribution(vec![0.3, 0.4, 0.3]),
        ] {
            let f = FitnessSpec::plateau(40, 3).unwrap();
            let c = opo_chain(&f, &spec).unwrap();
            for row in &c {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
            assert_eq!(c[40][40], 1.0);
        }
        let big = ones_transition_matrix(200, &MutationSpec::bitwise(1.0)).unwrap();
        for row in &big {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        assert!(ones_transition_matrix(201, &MutationSpec::Point).is_err());
    }

    #[test]
    fn identity_mutation_is_singular() {
        let f = FitnessSpec::onemax(4).unwrap();
        assert!(opo_exact_expected_runtime(&f, &MutationSpec::flip_distribution(vec![1.0])).is_err());
    }

    /// Full 2^n chain from per-string transition probabilities, solved by
    /// Gauss–Jordan elimination.
    fn brute_force_runtime(f: &FitnessSpec, m: &MutationSpec) -> f64 {
        use crate::bitstring::Bitstring;
        let n = f.n();
        let size = 1usize << n;
        let xs: Vec<Bitstring> = (0..size as u64).map(|v| Bitstring::from_index(v, n)).collect();
        let opt = size - 1;
        let idx: Vec<usize> = (0..size).filter(|&i| i != opt).collect();
        let t = idx.len();
        let mut a = vec![vec![0.0; t + 1]; t];
        for (r, &i) in idx.iter().enumerate() {
            let fi = f.evaluate(&xs[i]).unwrap();
            a[r][r] += 1.0;
            a[r][t] = 1.0;
            let mut stay = 0.0;
            for j in 0..size {
                let p = m.transition_probability(&xs[i], &xs[j]).unwrap();
                if j == i || f.evaluate(&xs[j]).unwrap() < fi {
                    stay += p;
                } else if j != opt {
                    let c = idx.iter().position(|&q| q == j).unwrap();
                    a[r][c] -= p;
                }
            }
            a[r][r] -= stay;
        }
        for col in 0..t {
            let piv = (col..t).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
            a.swap(col, piv);
            let d = a[col][col];
            for v in a[col].iter_mut() {
                *v /= d;
            }
            for row in 0..t {
                if row != col {
                    let factor = a[row][col];
                    if factor != 0.0 {
                        for k in col..=t {
                            a[row][k] -= factor * a[col][k];
                        }
                    }
                }
            }
        }
        let total: f64 = a.iter().map(|row| row[t]).sum();
        1.0 + total / size as f64
    }

    #[test]
    fn chain_matches_brute_force() {
        for n in 1..=8 {
            let f = FitnessSpec::onemax(n).unwrap();
            for m in [MutationSpec::bitwise(0.5), MutationSpec::Point, MutationSpec::flip_distribution(vec![0.5, 0.5])] {
                if m.validate(n).is_err() {
                    continue;
                }
                let exact = opo_exact_expected_runtime(&f, &m).unwrap();
                let brute = brute_force_runtime(&f, &m);
                assert!(rel(exact, brute) < 1e-9, "n={n} {m:?}: {exact} vs {brute}");
            }
        }
        for n in 3..=7 {
            let f = FitnessSpec::plateau(n, 2).unwrap();
            let m = MutationSpec::bitwise(1.0);
            let exact = opo_exact_expected_runtime(&f, &m).unwrap();
            assert!(rel(exact, brute_force_runtime(&f, &m)) < 1e-9);
        }
    }

    #[test]
    fn asymptote_value() {
        let a = opo_plateau_asymptote(30, 2, &MutationSpec::bitwise(1.0)).unwrap();
        // exact rational arithmetic gives Pr(ξ=1)+Pr(ξ=2) = 0.5611989001990507
        assert!(rel(a, 900.0 / (2.0 * 0.5611989001990507)) < 1e-12);
    }

    #[test]
    fn exact_runtime_approaches_asymptote() {
        let m = MutationSpec::bitwise(1.0);
        let mut last_gap = f64::INFINITY;
        for n in [20, 30, 40] {
            let f = FitnessSpec::plateau(n, 2).unwrap();
            let ratio = opo_exact_expected_runtime(&f, &m).unwrap() / opo_plateau_asymptote(n, 2, &m).unwrap();
            assert!((0.7..=1.3).contains(&ratio), "n={n}: {ratio}");
            let gap = (ratio - 1.0).abs();
            assert!(gap < last_gap, "n={n}: {ratio}");
            last_gap = gap;
        }
    }

    #[test]
    fn queries_from_json() {
        let q: BoundQuery =
            serde_json::from_str(r#"{"theorem":"negative-drift","alpha":2,"chi":1,"delta":0.01}"#).unwrap();
        let r = evaluate_bound(&q).unwrap();
        assert!(rel(r.quantity("psi").unwrap(), 0.7031471805599453) < 1e-12);
        let q: BoundQuery = serde_json::from_str(
            r#"{"theorem":"level-based","s":[0.1],"gamma0":0.1,"delta":1.0,"lambda":100}"#,
        )
        .unwrap();
        assert!(rel(evaluate_bound(&q).unwrap().value, 46.29993394225637) < 1e-9);
        assert!(serde_json::from_str::<BoundQuery>(r#"{"theorem":"pk10","alpha":1,"chi":1,"delta":0,"x":1}"#).is_err());
        let q: BoundQuery = serde_json::from_str(r#"{"theorem":"opo-exact","n":1,"chi":0.5}"#).unwrap();
        assert!((evaluate_bound(&q).unwrap().value - 2.0).abs() < 1e-12);
    }
}
