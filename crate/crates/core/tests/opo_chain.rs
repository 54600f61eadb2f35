//! Simulated (1+1) EA runtimes against the exact ones-count chain.

use plateau_ea::engine::run_opo;
use plateau_ea::theory::opo_exact_expected_runtime;
use plateau_ea::{FitnessSpec, InstanceTransform, MutationSpec, RandomSource};

fn simulated_mean(fitness: &FitnessSpec, mutation: &MutationSpec, reps: u64) -> (f64, f64) {
    let xs: Vec<f64> = (0..reps)
        .map(|s| {
            let r = run_opo(fitness, mutation, u64::MAX, s).unwrap();
            assert!(r.success);
            r.evaluations as f64
        })
        .collect();
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

#[test]
fn simulation_agrees_with_chain() {
    let cases = [
        (FitnessSpec::onemax(10).unwrap(), MutationSpec::bitwise(1.0)),
        (FitnessSpec::plateau(10, 2).unwrap(), MutationSpec::bitwise(1.0)),
        (FitnessSpec::plateau(12, 3).unwrap(), MutationSpec::flip_distribution(vec![0.2, 0.5, 0.2, 0.1])),
        (FitnessSpec::plateau(8, 2).unwrap(), MutationSpec::Point),
    ];
    for (fitness, mutation) in cases {
        let exact = opo_exact_expected_runtime(&fitness, &mutation).unwrap();
        let (mean, se) = simulated_mean(&fitness, &mutation, 4000);
        assert!(
            (mean - exact).abs() < 4.0 * se,
            "{} {:?}: simulated {mean} ± {se}, exact {exact}",
            fitness.name(),
            mutation
        );
    }
}

#[test]
fn transformed_instance_has_same_runtime() {
    let mut rng = RandomSource::new(31);
    let base = FitnessSpec::plateau(10, 2).unwrap();
    let moved = base.clone().with_transform(InstanceTransform::random(10, &mut rng)).unwrap();
    let mutation = MutationSpec::bitwise(1.0);
    let exact = opo_exact_expected_runtime(&base, &mutation).unwrap();
    let (mean, se) = simulated_mean(&moved, &mutation, 4000);
    assert!((mean - exact).abs() < 4.0 * se, "simulated {mean} ± {se}, exact {exact}");
}
