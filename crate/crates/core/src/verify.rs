//! Fast self-checks behind the `verify` command.

use rand::Rng;

use crate::bitstring::Bitstring;
use crate::config::parse_config_str;
use crate::engine::{run_ea, EAConfig};
use crate::error::Result;
use crate::experiments::{chi_square_selection_test, SELECTION_P_THRESHOLD};
use crate::fitness::FitnessSpec;
use crate::mutation::{exact_offspring_distribution, MutationSpec};
use crate::rng::RandomSource;
use crate::selection::{selection_distribution, SelectionSpec};
use crate::theory::{
    approximation_limits, fprop_alpha_bound, high_pressure_params, level_based_bound, negative_drift_report,
    opo_exact_expected_runtime, updrift_bound, LevelParams,
};
use crate::transform::InstanceTransform;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn() -> Result<(bool, String)>;

const CHECKS: &[(&str, Check)] = &[
    ("bound calculator examples", bound_examples),
    ("tournament closed form vs enumeration", tournament_enumeration),
    ("selection distributions sum to one and respect fitness order", selection_shape),
    ("selection sampler goodness of fit", selection_sampling),
    ("mutation commutes with instance transforms", unbiasedness),
    ("exact chain on a one-bit string", tiny_chain),
    ("seeded runs are reproducible", determinism),
    ("config round trip", config_round_trip),
];

/// Runs every check; a check that errors counts as failed.
pub fn run_checks() -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|&(name, check)| match check() {
            Ok((passed, detail)) => CheckOutcome { name, passed, detail },
            Err(e) => CheckOutcome {
                name,
                passed: false,
                detail: e.to_string(),
            },
        })
        .collect()
}

fn close(value: f64, want: f64) -> bool {
    ((value - want) / want).abs() < 1e-9
}

fn bound_examples() -> Result<(bool, String)> {
    let level = |delta: f64| LevelParams {
        s: vec![0.1],
        p0: 1.0,
        gamma0: 0.1,
        delta,
        lambda: 100.0,
        c: 1.0,
    };
    let lb = level_based_bound(&level(1.0), 2)?.value;
    let up = updrift_bound(&level(0.5), 2)?.value;
    let k = high_pressure_params(10, 0.01)?.k_min;
    let nd = negative_drift_report(2.0, 1.0, 0.01, None)?;
    let psi = nd.quantity("psi").unwrap_or(f64::NAN);
    let approx = approximation_limits(1.0, 0.1, 100)?;
    let fprop = fprop_alpha_bound(100, 2, 0.1)?;
    let ok = close(lb, 46.29993394225637)
        && close(up, 1528.7712379549448)
        && k == 898
        && close(psi, 0.7031471805599453)
        && close(nd.value, 0.02253837756567012)
        && close(approx.m_chi, 0.005919961746980118)
        && close(approx.z, 0.5327965572282106)
        && close(approx.w_max, 0.04707932639915541)
        && close(fprop, 2.2675736961451247);
    Ok((ok, format!("level {lb:.4}, updrift {up:.2}, k_min {k}, psi {psi:.5}")))
}

fn tournament_enumeration() -> Result<(bool, String)> {
    let mut rng = RandomSource::new(11);
    for lambda in 1..=5usize {
        for k in 1..=3usize {
            for _ in 0..5 {
                let f: Vec<u64> = (0..lambda).map(|_| rng.random_range(0..4)).collect();
                let model = selection_distribution(&SelectionSpec::Tournament { k }, &f)?;
                let mut wins = vec![0u64; lambda];
                let total = lambda.pow(k as u32);
                for code in 0..total {
                    let mut rest = code;
                    let mut winner = rest % lambda;
                    for _ in 1..k {
                        rest /= lambda;
                        let idx = rest % lambda;
                        if f[idx] > f[winner] {
                            winner = idx;
                        }
                    }
                    wins[winner] += 1;
                }
                let exact: Vec<f64> = wins.iter().map(|&w| w as f64 / total as f64).collect();
                if exact != model.probabilities() {
                    return Ok((false, format!("lambda {lambda}, k {k}, f {f:?}")));
                }
            }
        }
    }
    Ok((true, "lambda ≤ 5, k ≤ 3".into()))
}

fn selection_shape() -> Result<(bool, String)> {
    let mut rng = RandomSource::new(12);
    let specs = [
        SelectionSpec::FitnessProportionate,
        SelectionSpec::Tournament { k: 2 },
        SelectionSpec::Tournament { k: 5 },
        SelectionSpec::Comma { mu: 3 },
    ];
    for _ in 0..200 {
        let f: Vec<u64> = (0..8).map(|_| rng.random_range(0..20)).collect();
        for spec in &specs {
            let d = selection_distribution(spec, &f)?;
            let p = d.probabilities();
            if (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Ok((false, format!("{spec:?} on {f:?} does not sum to one")));
            }
            for i in 0..f.len() {
                for j in 0..f.len() {
                    if f[i] > f[j] && p[i] < p[j] {
                        return Ok((false, format!("{spec:?} on {f:?} inverts {i} and {j}")));
                    }
                }
            }
        }
    }
    Ok((true, "200 random populations".into()))
}

fn selection_sampling() -> Result<(bool, String)> {
    let mut rng = RandomSource::new(13);
    let f = [7, 5, 5, 1];
    let mut worst = 1.0f64;
    for spec in [
        SelectionSpec::FitnessProportionate,
        SelectionSpec::Tournament { k: 2 },
        SelectionSpec::Comma { mu: 2 },
    ] {
        worst = worst.min(chi_square_selection_test(&spec, &f, 100_000, &mut rng)?);
    }
    Ok((worst > SELECTION_P_THRESHOLD, format!("smallest p {worst:.4}")))
}

fn unbiasedness() -> Result<(bool, String)> {
    let mut rng = RandomSource::new(14);
    let n = 6;
    let mut worst = 0.0f64;
    for spec in [
        MutationSpec::bitwise(1.0),
        MutationSpec::Point,
        MutationSpec::flip_distribution(vec![0.2, 0.3, 0.1, 0.4]),
    ] {
        for _ in 0..5 {
            let t = InstanceTransform::random(n, &mut rng);
            let x = Bitstring::random(n, &mut rng);
            let direct = exact_offspring_distribution(&spec, &t.apply(&x)?)?;
            let mapped = exact_offspring_distribution(&spec, &x)?;
            for (y, p) in &mapped {
                let q = direct.get(&t.apply(y)?).copied().unwrap_or(0.0);
                worst = worst.max((p - q).abs());
            }
        }
    }
    Ok((worst < 1e-12, format!("max deviation {worst:e}")))
}

fn tiny_chain() -> Result<(bool, String)> {
    let t = opo_exact_expected_runtime(&FitnessSpec::onemax(1)?, &MutationSpec::bitwise(0.5))?;
    Ok(((t - 2.0).abs() < 1e-12, format!("{t}")))
}

fn determinism() -> Result<(bool, String)> {
    let cfg = EAConfig::new(
        FitnessSpec::plateau(12, 2)?,
        SelectionSpec::Tournament { k: 3 },
        MutationSpec::bitwise(1.0),
        50,
    )
    .with_budget(50_000)
    .with_seed(99);
    let a = run_ea(&cfg)?;
    let b = run_ea(&cfg)?;
    Ok((a == b, format!("{} evaluations", a.evaluations)))
}

fn config_round_trip() -> Result<(bool, String)> {
    let text = r#"{"fitness":{"function":"plateau","n":20,"r":3},
                   "selection":{"kind":"comma","mu":5},
                   "mutation":{"kind":"bitwise","chi":1.5}}"#;
    let cfg: EAConfig = parse_config_str(text, &[])?;
    let again: EAConfig = parse_config_str(&serde_json::to_string(&cfg)?, &[])?;
    Ok((cfg == again, format!("lambda {}", cfg.lambda)))
}
