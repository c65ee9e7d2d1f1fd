use bsde_mlp::analysis::{deterministic_picard, run_replications, theorem_bound, SpaceQuadrature};
use bsde_mlp::mlp::{MlpConfig, Scheme};
use bsde_mlp::problem::{builtin_problem, BsdeProblem, ProblemOptions, LINEAR_Y, ZERO_GENERATOR};

fn problem(name: &str, dim: usize) -> BsdeProblem {
    builtin_problem(
        name,
        &ProblemOptions {
            dim,
            ..ProblemOptions::default()
        },
    )
    .unwrap()
}

#[test]
fn original_scheme_matches_oracle() {
    let p = problem(LINEAR_Y, 1);
    let c = MlpConfig::new(Scheme::Original, 3, 8, 4, 71);
    let stats = run_replications(&p, &c, 0.0, &[0.4], 200).unwrap();
    let oracle = deterministic_picard(&p, 3, 4, 0.0, 0.4, &SpaceQuadrature::default()).unwrap();
    let band = 4.0 * stats.std_y / 200f64.sqrt();
    assert!((stats.mean_y - oracle).abs() <= band, "{} vs {oracle} (band {band})", stats.mean_y);
}

#[test]
fn linear_bound_example() {
    let p = problem(LINEAR_Y, 1);
    let c = MlpConfig::new(Scheme::Modified, 3, 16, 4, 72);
    let bound = theorem_bound(&p, &c, 0.0).unwrap();
    assert!(bound.bias_bound > 0.0 && bound.bias_bound.is_finite());
    let stats = run_replications(&p, &c, 0.0, &[0.0], 400).unwrap();
    let err = stats.abs_error.unwrap();
    assert!(err <= bound.bias_bound + 4.0 * stats.std_y / 20.0, "{err} vs {}", bound.bias_bound);
}

#[test]
fn variance_bound_dominates() {
    let r = 100;
    for name in [ZERO_GENERATOR, LINEAR_Y] {
        for dim in [1, 5] {
            let x = vec![0.2; dim];
            let p = problem(name, dim);
            for depth in 1..=3 {
                let c = MlpConfig::new(Scheme::Modified, depth, 4, 3, 73);
                let stats = run_replications(&p, &c, 0.0, &x, r).unwrap();
                let bound = theorem_bound(&p, &c, 0.0).unwrap().variance_bound;
                // Standard error of a sample standard deviation.
                let allowance = 4.0 * stats.std_y / (2.0 * (r - 1) as f64).sqrt();
                assert!(stats.std_y - allowance <= bound, "{name} d={dim} n={depth}");
            }
        }
    }
}

/// Errors in depth order must not grow, except for at most one step, and
/// never by more than the Monte-Carlo band.
fn check_bias_decay(samples: usize, quad_order: usize, replications: usize) {
    let p = problem(LINEAR_Y, 1);
    let mut errors = Vec::new();
    let mut bands = Vec::new();
    for depth in 1..=4 {
        let c = MlpConfig::new(Scheme::Modified, depth, samples, quad_order, 74);
        let stats = run_replications(&p, &c, 0.0, &[0.0], replications).unwrap();
        errors.push(stats.abs_error.unwrap());
        bands.push(4.0 * stats.std_error());
    }
    let increases = errors.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(increases <= 1, "{errors:?}");
    for n in 1..errors.len() {
        assert!(errors[n] <= errors[n - 1] + bands[n], "{errors:?} {bands:?}");
    }
}

#[test]
fn bias_decays_with_depth() {
    check_bias_decay(8, 4, 200);
}

#[test]
#[ignore = "about 10^10 generator evaluations"]
fn bias_decays_with_depth_full_size() {
    check_bias_decay(16, 8, 400);
}
