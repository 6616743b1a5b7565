//! Statistical cross-checks between the sampler and the analytic kernel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cbt_krawtchouk::kernel::build_kernel;
use cbt_krawtchouk::params::ModelParams;
use cbt_krawtchouk::sim::{run, step, SimConfig};
use cbt_krawtchouk::Tolerances;

/// Single-step frequencies from every source state match the kernel columns
/// within four binomial standard deviations.
#[test]
fn kernel_matches_monte_carlo_columns() {
    let params = ModelParams::new(2, 3, vec![0.3, 0.2], vec![0.25, 0.35]).unwrap();
    let tol = Tolerances::default();
    let kernel = build_kernel(&params, &tol).unwrap();
    let en = kernel.enumeration();
    let samples = 1_000_000u64;

    for (from, state) in en.iter() {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + from as u64);
        let mut counts = vec![0u64; en.len()];
        for _ in 0..samples {
            let next = step(state.entries(), &params, &mut rng);
            counts[en.index_of(&next).unwrap()] += 1;
        }
        for to in 0..en.len() {
            let p = kernel.matrix()[(to, from)];
            let sigma = (p * (1.0 - p) / samples as f64).sqrt();
            let observed = counts[to] as f64 / samples as f64;
            assert!(
                (observed - p).abs() <= 4.0 * sigma + 1e-7,
                "entry ({to},{from}): observed {observed}, expected {p}, sigma {sigma}"
            );
        }
    }
}

/// Two-point chain: empirical single-step frequencies from both states match
/// the analytic kernel within four binomial standard deviations.
#[test]
fn two_point_chain_empirical_frequencies() {
    let params = ModelParams::new(1, 1, vec![0.5], vec![0.5]).unwrap();
    let tol = Tolerances::default();
    let kernel = build_kernel(&params, &tol).unwrap();
    let samples = 1_000_000u64;
    for from in 0..2u32 {
        let mut rng = ChaCha8Rng::seed_from_u64(501 + from as u64);
        let mut ones = 0u64;
        for _ in 0..samples {
            ones += u64::from(step(&[from], &params, &mut rng)[0]);
        }
        let p = kernel.matrix()[(1, from as usize)];
        let sigma = (p * (1.0 - p) / samples as f64).sqrt();
        let observed = ones as f64 / samples as f64;
        assert!(
            (observed - p).abs() <= 4.0 * sigma,
            "from {from}: observed {observed}, expected {p}"
        );
    }
}

/// The fitted autocorrelation decay matches the analytic second eigenvalue
/// within 5% on a long one-variable chain.
#[test]
fn decay_rate_estimate_one_variable() {
    for big_n in [2u32, 4] {
        let params = ModelParams::new(1, big_n, vec![0.5], vec![0.5]).unwrap();
        let config = SimConfig::new(params, 10_000_000, 10_000, 1729);
        let report = run(&config).unwrap();
        let estimated = report.decay.estimated.expect("estimate available");
        let analytic = report.decay.analytic.expect("solvable");
        assert!((analytic - 0.25).abs() < 1e-12);
        assert!(
            (estimated - analytic).abs() / analytic <= 0.05,
            "N={big_n}: estimated {estimated} vs analytic {analytic}"
        );
    }
}

/// Long-run occupancy matches the stationary law for a two-variable chain.
#[test]
fn occupancy_matches_stationary_two_variables() {
    let params = ModelParams::new(2, 3, vec![0.3, 0.2], vec![0.25, 0.35]).unwrap();
    let config = SimConfig::new(params, 1_000_000, 10_000, 31337);
    let report = run(&config).unwrap();
    assert!(
        report.stationary_chi2.p_value > 1e-3,
        "{:?}",
        report.stationary_chi2
    );
    assert!(report.transition_chi2_min_p > 1e-3);
}
