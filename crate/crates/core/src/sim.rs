//! Seeded Monte Carlo sampling of the dice process, with chi-square
//! comparisons of the empirical behavior against the analytic kernel and
//! stationary law.
//!
//! Reproducibility contract: a report is a pure function of (config, chain
//! count). Chain c draws from the ChaCha8 stream c of the configured seed, so
//! results are independent of scheduling and thread count, and merging is by
//! chain index.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::combinatorics::{enumerate_simplex, DEFAULT_STATE_LIMIT};
use crate::error::{CbtError, Result};
use crate::kernel::{build_kernel, TransitionKernel};
use crate::params::{ModelParams, SpectralParamSet};
use crate::tolerances::Tolerances;

/// Number of autocovariance lags tracked for the decay-rate estimate.
const DECAY_LAGS: usize = 24;

/// Cells with expected count below this are pooled before the chi-square.
const POOL_THRESHOLD: f64 = 5.0;

/// Simulation request: model, length, burn-in, seed, start state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ModelParams,
    pub steps: u64,
    pub burn_in: u64,
    pub seed: u64,
    pub initial_state: Vec<u32>,
}

impl SimConfig {
    pub fn new(params: ModelParams, steps: u64, burn_in: u64, seed: u64) -> Self {
        let initial_state = vec![0; params.n];
        SimConfig {
            params,
            steps,
            burn_in,
            seed,
            initial_state,
        }
    }
}

/// One chi-square goodness-of-fit outcome after pooling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Chi2Result {
    pub statistic: f64,
    pub df: u64,
    pub p_value: f64,
    pub cells: usize,
}

/// Autocorrelation-based estimate of the slowest mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayEstimate {
    /// Fitted from the log-autocorrelation of a linear observable.
    pub estimated: Option<f64>,
    /// Largest eigenvalue factor max_i (1 - omega_i), when the parameter web solves.
    pub analytic: Option<f64>,
}

/// Everything measured by a run. Serializes deterministically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    pub params: ModelParams,
    pub steps: u64,
    pub burn_in: u64,
    pub seed: u64,
    pub chains: u64,
    /// States in enumeration order (graded colex).
    pub states: Vec<Vec<u32>>,
    /// Post-burn-in visit counts per state; sums to chains * (steps - burn_in).
    pub occupancy: Vec<u64>,
    /// Post-burn-in transition counts, indexed `[from][to]`.
    pub transition_counts: Vec<Vec<u64>>,
    pub stationary_chi2: Chi2Result,
    /// Per-source-column tests against the analytic kernel; None for unvisited columns.
    pub transition_chi2: Vec<Option<Chi2Result>>,
    pub transition_chi2_min_p: f64,
    pub decay: DecayEstimate,
}

impl SimReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// CSV of post-burn-in occupancy: index, state entries, count.
    pub fn occupancy_csv(&self) -> String {
        let n = self.params.n;
        let mut out = String::from("state_index");
        for r in 0..n {
            out.push_str(&format!(",x{r}"));
        }
        out.push_str(",count\n");
        for (i, (state, count)) in self.states.iter().zip(&self.occupancy).enumerate() {
            out.push_str(&i.to_string());
            for v in state {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{count}\n"));
        }
        out
    }
}

/// One two-stage round: keep each banked success in category r with
/// probability alpha_r, then reroll the remaining dice into the categories
/// with the second-roll multinomial (sequential conditional binomials).
pub fn step<R: Rng>(state: &[u32], params: &ModelParams, rng: &mut R) -> Vec<u32> {
    let n = params.n;
    let mut next = vec![0u32; n];
    let mut kept_sum = 0u32;
    for r in 0..n {
        let kept = binomial_inversion(state[r], params.alpha[r], rng);
        next[r] = kept;
        kept_sum += kept;
    }
    let mut remaining = params.big_n - kept_sum;
    let mut rest = 1.0f64;
    for r in 0..n {
        let p = (params.beta[r] / rest).min(1.0);
        let inc = binomial_inversion(remaining, p, rng);
        next[r] += inc;
        remaining -= inc;
        rest -= params.beta[r];
    }
    next
}

/// Exact inversion sampling of Binomial(trials, p) by walking the CDF.
fn binomial_inversion<R: Rng>(trials: u32, p: f64, rng: &mut R) -> u32 {
    if trials == 0 {
        return 0;
    }
    let q = 1.0 - p;
    let draw: f64 = rng.random();
    let mut pmf = q.powi(trials as i32);
    let mut cum = pmf;
    let mut k = 0u32;
    while draw >= cum && k < trials {
        pmf *= (trials - k) as f64 / (k + 1) as f64 * (p / q);
        k += 1;
        cum += pmf;
    }
    k
}

struct ChainCounts {
    occupancy: Vec<u64>,
    transitions: Vec<Vec<u64>>,
    lag_products: Vec<f64>,
    lag_samples: Vec<u64>,
    obs_sum: f64,
    obs_count: u64,
}

impl ChainCounts {
    fn new(states: usize) -> Self {
        ChainCounts {
            occupancy: vec![0; states],
            transitions: vec![vec![0; states]; states],
            lag_products: vec![0.0; DECAY_LAGS + 1],
            lag_samples: vec![0; DECAY_LAGS + 1],
            obs_sum: 0.0,
            obs_count: 0,
        }
    }

    fn merge(&mut self, other: &ChainCounts) {
        for (a, b) in self.occupancy.iter_mut().zip(&other.occupancy) {
            *a += b;
        }
        for (row_a, row_b) in self.transitions.iter_mut().zip(&other.transitions) {
            for (a, b) in row_a.iter_mut().zip(row_b) {
                *a += b;
            }
        }
        for (a, b) in self.lag_products.iter_mut().zip(&other.lag_products) {
            *a += b;
        }
        for (a, b) in self.lag_samples.iter_mut().zip(&other.lag_samples) {
            *a += b;
        }
        self.obs_sum += other.obs_sum;
        self.obs_count += other.obs_count;
    }
}

/// A linear observable with nonzero weight on every category, used for the
/// autocorrelation decay estimate.
fn observable(state: &[u32]) -> f64 {
    state
        .iter()
        .enumerate()
        .map(|(r, &v)| (r as f64 + 1.0) * v as f64)
        .sum()
}

/// Run one chain (stream 0). See [`run_ensemble`] for the multi-chain form.
pub fn run(config: &SimConfig) -> Result<SimReport> {
    run_ensemble(config, 1)
}

/// Run `chains` independent chains (ChaCha streams 0..chains) and merge their
/// counts by chain index. Each chain executes the full config.
pub fn run_ensemble(config: &SimConfig, chains: u64) -> Result<SimReport> {
    if chains == 0 {
        return Err(CbtError::domain("need at least one chain"));
    }
    if config.steps <= config.burn_in {
        return Err(CbtError::domain(format!(
            "steps ({}) must exceed burn_in ({})",
            config.steps, config.burn_in
        )));
    }
    let params = &config.params;
    let en = enumerate_simplex(params.n, params.big_n, DEFAULT_STATE_LIMIT)?;
    let initial_index = en.index_of(&config.initial_state).ok_or_else(|| {
        CbtError::domain(format!(
            "initial state {:?} is not in the simplex for n={}, N={}",
            config.initial_state, params.n, params.big_n
        ))
    })?;
    let s = en.len();

    let mut merged = ChainCounts::new(s);
    let chain_results: Vec<ChainCounts> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains)
            .map(|c| {
                let en = &en;
                scope.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                    rng.set_stream(c);
                    let mut counts = ChainCounts::new(s);
                    let mut window = [0.0f64; DECAY_LAGS + 1];
                    let mut nobs: usize = 0;
                    let mut current = config.initial_state.clone();
                    let mut current_idx = initial_index;
                    for t in 1..=config.steps {
                        let next = step(&current, params, &mut rng);
                        let next_idx = en.index_of(&next).expect("step stays inside the simplex");
                        if t > config.burn_in {
                            counts.occupancy[next_idx] += 1;
                            counts.transitions[current_idx][next_idx] += 1;
                            let f = observable(&next);
                            counts.obs_sum += f;
                            counts.obs_count += 1;
                            let pos = nobs % (DECAY_LAGS + 1);
                            window[pos] = f;
                            for lag in 0..=DECAY_LAGS.min(nobs) {
                                let prev = window[(pos + DECAY_LAGS + 1 - lag) % (DECAY_LAGS + 1)];
                                counts.lag_products[lag] += f * prev;
                                counts.lag_samples[lag] += 1;
                            }
                            nobs += 1;
                        }
                        current = next;
                        current_idx = next_idx;
                    }
                    counts
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread"))
            .collect()
    });
    for counts in &chain_results {
        merged.merge(counts);
    }

    let kernel = build_kernel(params, &Tolerances::default())?;
    let stationary_chi2 = stationary_test(&merged, &kernel);
    let (transition_chi2, transition_chi2_min_p) = transition_tests(&merged, &kernel);
    let decay = decay_estimate(&merged, params);

    Ok(SimReport {
        params: params.clone(),
        steps: config.steps,
        burn_in: config.burn_in,
        seed: config.seed,
        chains,
        states: en.states().iter().map(|m| m.entries().to_vec()).collect(),
        occupancy: merged.occupancy,
        transition_counts: merged.transitions,
        stationary_chi2,
        transition_chi2,
        transition_chi2_min_p,
        decay,
    })
}

fn stationary_test(counts: &ChainCounts, kernel: &TransitionKernel) -> Chi2Result {
    let total: u64 = counts.occupancy.iter().sum();
    let expected: Vec<f64> = kernel
        .stationary()
        .iter()
        .map(|&p| p * total as f64)
        .collect();
    chi_square_pooled(&counts.occupancy, &expected)
}

fn transition_tests(
    counts: &ChainCounts,
    kernel: &TransitionKernel,
) -> (Vec<Option<Chi2Result>>, f64) {
    let s = kernel.len();
    let mut results = Vec::with_capacity(s);
    let mut min_p = 1.0f64;
    for from in 0..s {
        let observed = &counts.transitions[from];
        let visits: u64 = observed.iter().sum();
        if visits == 0 {
            results.push(None);
            continue;
        }
        let expected: Vec<f64> = (0..s)
            .map(|to| kernel.matrix()[(to, from)] * visits as f64)
            .collect();
        let r = chi_square_pooled(observed, &expected);
        min_p = min_p.min(r.p_value);
        results.push(Some(r));
    }
    (results, min_p)
}

/// Chi-square with pooling: cells whose expected count is below 5 are merged
/// into one bucket; if that bucket is still small it joins the smallest
/// regular cell. Degrees of freedom = final cells - 1.
pub fn chi_square_pooled(observed: &[u64], expected: &[f64]) -> Chi2Result {
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0f64, 0.0f64);
    for (&o, &e) in observed.iter().zip(expected) {
        if e < POOL_THRESHOLD {
            pooled.0 += o as f64;
            pooled.1 += e;
        } else {
            cells.push((o as f64, e));
        }
    }
    if pooled.1 > 0.0 {
        if pooled.1 >= POOL_THRESHOLD || cells.is_empty() {
            cells.push(pooled);
        } else {
            let smallest = cells
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            cells[smallest].0 += pooled.0;
            cells[smallest].1 += pooled.1;
        }
    }
    if cells.len() < 2 {
        return Chi2Result {
            statistic: 0.0,
            df: 0,
            p_value: 1.0,
            cells: cells.len(),
        };
    }
    let statistic: f64 = cells
        .iter()
        .map(|&(o, e)| {
            let d = o - e;
            d * d / e
        })
        .sum();
    let df = (cells.len() - 1) as u64;
    let dist = ChiSquared::new(df as f64).expect("positive df");
    let p_value = 1.0 - dist.cdf(statistic);
    Chi2Result {
        statistic,
        df,
        p_value,
        cells: cells.len(),
    }
}

/// Least-squares fit of log |autocorrelation| against lag. The observable is
/// linear in the state, so for reversible chains the autocorrelation is a
/// positive mixture of powers of eigenvalues and the fitted slope estimates
/// the dominant one.
fn decay_estimate(counts: &ChainCounts, params: &ModelParams) -> DecayEstimate {
    let analytic = SpectralParamSet::solve(params, &Tolerances::default())
        .ok()
        .map(|sp| {
            sp.omega
                .iter()
                .map(|&w| (1.0 - w).abs())
                .fold(0.0, f64::max)
        });

    let mean = counts.obs_sum / counts.obs_count.max(1) as f64;
    let autocov: Vec<Option<f64>> = (0..=DECAY_LAGS)
        .map(|lag| {
            if counts.lag_samples[lag] == 0 {
                None
            } else {
                Some(counts.lag_products[lag] / counts.lag_samples[lag] as f64 - mean * mean)
            }
        })
        .collect();
    let var = match autocov[0] {
        Some(v) if v > 0.0 => v,
        _ => {
            return DecayEstimate {
                estimated: None,
                analytic,
            }
        }
    };
    // usable lags: autocorrelation clearly above sampling noise
    let noise_floor = 10.0 / (counts.obs_count.max(1) as f64).sqrt();
    let mut points = Vec::new();
    for lag in 1..=DECAY_LAGS {
        if let Some(cov) = autocov[lag] {
            let rho = cov / var;
            if rho > noise_floor.max(1e-4) {
                points.push((lag as f64, rho.ln()));
            } else {
                break;
            }
        }
    }
    if points.len() < 2 {
        return DecayEstimate {
            estimated: None,
            analytic,
        };
    }
    let m = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    DecayEstimate {
        estimated: Some(slope.exp()),
        analytic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_inversion_bounds_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let k = binomial_inversion(6, 0.3, &mut rng);
            assert!(k <= 6);
        }
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            assert_eq!(
                binomial_inversion(10, 0.42, &mut a),
                binomial_inversion(10, 0.42, &mut b)
            );
        }
    }

    #[test]
    fn step_from_empty_state_keeps_nothing_first_stage() {
        // With state = 0 the keep stage contributes nothing; all mass comes
        // from the reroll, so the result sums to at most N.
        let params = ModelParams::new(2, 3, vec![0.3, 0.2], vec![0.25, 0.35]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let next = step(&[0, 0], &params, &mut rng);
            assert!(next.iter().sum::<u32>() <= 3);
        }
    }

    #[test]
    fn run_rejects_degenerate_window() {
        let params = ModelParams::new(1, 2, vec![0.5], vec![0.5]).unwrap();
        let config = SimConfig::new(params, 100, 100, 3);
        assert!(run(&config).is_err());
    }

    #[test]
    fn run_rejects_bad_initial_state() {
        let params = ModelParams::new(1, 2, vec![0.5], vec![0.5]).unwrap();
        let mut config = SimConfig::new(params, 100, 10, 3);
        config.initial_state = vec![5];
        assert!(run(&config).is_err());
    }

    #[test]
    fn occupancy_sums_to_window() {
        let params = ModelParams::new(1, 2, vec![0.5], vec![0.5]).unwrap();
        let config = SimConfig::new(params, 5000, 500, 11);
        let report = run(&config).unwrap();
        assert_eq!(report.occupancy.iter().sum::<u64>(), 4500);
        let trans_total: u64 = report
            .transition_counts
            .iter()
            .map(|row| row.iter().sum::<u64>())
            .sum();
        assert_eq!(trans_total, 4500);
    }

    #[test]
    fn identical_seeds_identical_reports() {
        let params = ModelParams::new(2, 3, vec![0.3, 0.2], vec![0.25, 0.35]).unwrap();
        let config = SimConfig::new(params, 20_000, 1000, 42);
        let a = run(&config).unwrap().to_json_string();
        let b = run(&config).unwrap().to_json_string();
        assert_eq!(a, b);
    }

    #[test]
    fn ensemble_merge_is_chain_order_deterministic() {
        let params = ModelParams::new(1, 3, vec![0.4], vec![0.3]).unwrap();
        let config = SimConfig::new(params, 10_000, 500, 5);
        let a = run_ensemble(&config, 3).unwrap();
        let b = run_ensemble(&config, 3).unwrap();
        assert_eq!(a.to_json_string(), b.to_json_string());
        assert_eq!(a.occupancy.iter().sum::<u64>(), 3 * 9500);
    }

    #[test]
    fn chi_square_p_value_known_point() {
        // P(chi2_2 > 2) = e^-1
        let r = chi_square_pooled(&[12, 8, 10], &[10.0, 10.0, 10.0]);
        assert_eq!(r.df, 2);
        assert!((r.statistic - 0.8).abs() < 1e-12);
        let dist = ChiSquared::new(2.0).unwrap();
        assert!((1.0 - dist.cdf(2.0) - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn chi_square_pooling() {
        // all cells large: no pooling
        let r = chi_square_pooled(&[50, 60, 40], &[50.0, 50.0, 50.0]);
        assert_eq!(r.cells, 3);
        assert_eq!(r.df, 2);
        // tiny expected cells collapse
        let r = chi_square_pooled(&[100, 1, 0, 2], &[100.0, 1.0, 1.0, 1.0]);
        assert!(r.cells <= 2);
        // degenerate single cell is a trivial pass
        let r = chi_square_pooled(&[10], &[10.0]);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn stationary_fit_small_chain() {
        let params = ModelParams::new(1, 2, vec![0.5], vec![0.5]).unwrap();
        let config = SimConfig::new(params, 200_000, 5_000, 271828);
        let report = run(&config).unwrap();
        assert!(
            report.stationary_chi2.p_value > 1e-3,
            "{:?}",
            report.stationary_chi2
        );
        assert!(report.transition_chi2_min_p > 1e-3);
    }
}
