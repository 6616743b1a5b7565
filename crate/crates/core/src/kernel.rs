//! The dense transition kernel of the chain, its stationary law, and the
//! closed-form eigensystem verification.
//!
//! Entries follow the "from column, to row" convention: `matrix[(to, from)]`
//! is the probability of moving to state `to` from state `from`, so each
//! column sums to 1 and column-stochasticity checks are cheap.

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use crate::combinatorics::{
    enumerate_simplex, multinomial_pmf, SimplexEnumeration, DEFAULT_STATE_LIMIT,
};
use crate::error::{CbtError, Result};
use crate::hypergeo::value_table;
use crate::numerics::KahanSum;
use crate::params::{ModelParams, SpectralParamSet};
use crate::tolerances::Tolerances;

/// Dense column-stochastic kernel over the enumerated state simplex, with
/// its stationary vector.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    params: ModelParams,
    enumeration: SimplexEnumeration,
    matrix: DMatrix<f64>,
    stationary: Vec<f64>,
}

impl TransitionKernel {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn enumeration(&self) -> &SimplexEnumeration {
        &self.enumeration
    }

    /// `matrix[(to, from)]`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn len(&self) -> usize {
        self.enumeration.len()
    }

    pub fn is_empty(&self) -> bool {
        self.enumeration.is_empty()
    }

    /// CSV export: one row per destination state, one column per source
    /// state, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let s = self.len();
        let mut out = String::new();
        out.push_str("to_state");
        for from in 0..s {
            out.push_str(&format!(",from_{from}"));
        }
        out.push('\n');
        for to in 0..s {
            out.push_str(&to.to_string());
            for from in 0..s {
                out.push_str(&format!(",{:.16e}", self.matrix[(to, from)]));
            }
            out.push('\n');
        }
        out
    }

    /// JSON export with the enumeration metadata needed to interpret indices.
    pub fn to_json(&self) -> serde_json::Value {
        let states: Vec<Vec<u32>> = self
            .enumeration
            .states()
            .iter()
            .map(|s| s.entries().to_vec())
            .collect();
        let rows: Vec<Vec<f64>> = (0..self.len())
            .map(|to| {
                (0..self.len())
                    .map(|from| self.matrix[(to, from)])
                    .collect()
            })
            .collect();
        json!({
            "n": self.params.n,
            "N": self.params.big_n,
            "order": "graded-colex",
            "states": states,
            "stationary": self.stationary,
            "matrix_to_from": rows,
        })
    }
}

/// Build the kernel for `params`.
///
/// The entry from state i to state j sums over the kept successes k
/// (componentwise 0..=min(i_r, j_r)): keep k_r of i_r with probability
/// alpha_r each, then reroll the N - sum(k) remaining dice into increments
/// j - k with the second-roll multinomial.
pub fn build_kernel(params: &ModelParams, tol: &Tolerances) -> Result<TransitionKernel> {
    build_kernel_with_limit(params, tol, DEFAULT_STATE_LIMIT)
}

pub fn build_kernel_with_limit(
    params: &ModelParams,
    tol: &Tolerances,
    limit: u128,
) -> Result<TransitionKernel> {
    let n = params.n;
    let big_n = params.big_n;
    let enumeration = enumerate_simplex(n, big_n, limit)?;
    let states = enumeration.len();

    let (eta, _) = crate::params::compute_eta(params, tol)?;
    let stationary: Vec<f64> = enumeration
        .states()
        .iter()
        .map(|x| multinomial_pmf(x.entries(), big_n, &eta))
        .collect::<Result<_>>()?;

    // Tables so the inner loop is pure multiplication:
    // keep_pmf[r][i][k] = C(i,k) alpha_r^k (1-alpha_r)^(i-k)
    let nb = big_n as usize;
    let mut keep_pmf = vec![vec![vec![0.0; nb + 1]; nb + 1]; n];
    for r in 0..n {
        for i in 0..=nb {
            for k in 0..=i {
                keep_pmf[r][i][k] =
                    crate::combinatorics::binomial_pmf(k as i64, i as i64, params.alpha[r])?;
            }
        }
    }
    let mut fact = vec![1.0f64; nb + 1];
    for k in 1..=nb {
        fact[k] = fact[k - 1] * k as f64;
    }
    let mut beta_pow = vec![vec![0.0; nb + 1]; n];
    for r in 0..n {
        let mut p = 1.0;
        for slot in beta_pow[r].iter_mut() {
            *slot = p;
            p *= params.beta[r];
        }
    }
    let beta_rest = 1.0 - params.beta.iter().sum::<f64>();
    let mut rest_pow = vec![0.0; nb + 1];
    let mut p = 1.0;
    for slot in rest_pow.iter_mut() {
        *slot = p;
        p *= beta_rest;
    }

    let mut matrix = DMatrix::zeros(states, states);
    let mut k = vec![0u32; n];
    for (from, i_state) in enumeration.iter() {
        for (to, j_state) in enumeration.iter() {
            let caps: Vec<u32> = (0..n).map(|r| i_state.get(r).min(j_state.get(r))).collect();
            let mut acc = KahanSum::new();
            k.iter_mut().for_each(|v| *v = 0);
            loop {
                let k_sum: u32 = k.iter().sum();
                let reroll_budget = big_n - k_sum;
                // increments sum to sum(j) - sum(k) <= N - sum(k), so they
                // always fit in the reroll budget
                let incr_sum: u32 = (0..n).map(|r| j_state.get(r) - k[r]).sum();
                let mut term = 1.0;
                for r in 0..n {
                    term *= keep_pmf[r][i_state.get(r) as usize][k[r] as usize];
                }
                let mut coeff = fact[reroll_budget as usize];
                let mut powers = 1.0;
                for r in 0..n {
                    let e = (j_state.get(r) - k[r]) as usize;
                    coeff /= fact[e];
                    powers *= beta_pow[r][e];
                }
                coeff /= fact[(reroll_budget - incr_sum) as usize];
                powers *= rest_pow[(reroll_budget - incr_sum) as usize];
                acc.add(term * coeff * powers);
                // odometer over 0..=caps
                let mut pos = 0;
                loop {
                    if pos == n {
                        break;
                    }
                    if k[pos] < caps[pos] {
                        k[pos] += 1;
                        break;
                    }
                    k[pos] = 0;
                    pos += 1;
                }
                if pos == n {
                    break;
                }
            }
            matrix[(to, from)] = acc.value();
        }
    }

    // Column stochasticity and stationarity are structural; failures here
    // mean a bug or parameter corruption, not a property to report.
    for from in 0..states {
        let col_sum: f64 = (0..states).map(|to| matrix[(to, from)]).sum();
        if (col_sum - 1.0).abs() > tol.column_stochastic {
            return Err(CbtError::domain(format!(
                "column {from} sums to 1{:+.3e}",
                col_sum - 1.0
            )));
        }
        if (0..states).any(|to| matrix[(to, from)] < 0.0) {
            return Err(CbtError::domain(format!("negative entry in column {from}")));
        }
    }
    for to in 0..states {
        let image: f64 =
            KahanSum::sum_iter((0..states).map(|from| matrix[(to, from)] * stationary[from]));
        if (image - stationary[to]).abs() > tol.stationarity {
            return Err(CbtError::domain(format!(
                "stationary vector not fixed at state {to}: residual {:.3e}",
                (image - stationary[to]).abs()
            )));
        }
    }

    Ok(TransitionKernel {
        params: params.clone(),
        enumeration,
        matrix,
        stationary,
    })
}

/// Max over state pairs of |K(j;i) phi0(i) - K(i;j) phi0(j)|. Reversibility
/// is strictly stronger than stationarity and certifies the stationary law.
pub fn check_detailed_balance(kernel: &TransitionKernel) -> f64 {
    let s = kernel.len();
    let mut worst = 0.0f64;
    for i in 0..s {
        for j in (i + 1)..s {
            let forward = kernel.matrix[(j, i)] * kernel.stationary[i];
            let backward = kernel.matrix[(i, j)] * kernel.stationary[j];
            worst = worst.max((forward - backward).abs());
        }
    }
    worst
}

/// One verified eigenpair.
#[derive(Debug, Clone, Serialize)]
pub struct EigenPair {
    pub degrees: Vec<u32>,
    pub lambda: f64,
    /// max |K psi - lambda psi| / max |psi|
    pub residual: f64,
    /// Rayleigh quotient in the reversible inner product <f,g> = sum f g / phi0.
    pub rayleigh: f64,
}

/// Eigen verification over every degree vector with sum <= N.
#[derive(Debug, Clone, Serialize)]
pub struct EigenReport {
    pub pairs: Vec<EigenPair>,
    pub max_residual: f64,
    pub max_rayleigh_deviation: f64,
}

/// Verify the closed-form eigensystem: for every degree vector m, the vector
/// psi_m(x) = phi0(x) P_m(x) is an eigenvector of K with eigenvalue
/// prod_i (1 - omega_i)^{m_i}.
pub fn eigen_check(
    kernel: &TransitionKernel,
    sp: &SpectralParamSet,
    tol: &Tolerances,
) -> Result<EigenReport> {
    if sp.n() != kernel.params.n {
        return Err(CbtError::domain("parameter set dimension mismatch"));
    }
    let en = &kernel.enumeration;
    let s = en.len();
    let u = sp.u_matrix();
    let table = value_table(&u, en)?;

    let mut pairs = Vec::with_capacity(s);
    let mut max_residual = 0.0f64;
    let mut max_rayleigh_deviation = 0.0f64;
    for (m_idx, m) in en.iter() {
        let lambda = sp.eigenvalue(m.entries());
        let psi: Vec<f64> = (0..s)
            .map(|x| kernel.stationary[x] * table[(m_idx, x)])
            .collect();
        let mut resid = 0.0f64;
        let mut scale = 0.0f64;
        let mut num = KahanSum::new();
        let mut den = KahanSum::new();
        for to in 0..s {
            let image =
                KahanSum::sum_iter((0..s).map(|from| kernel.matrix[(to, from)] * psi[from]));
            resid = resid.max((image - lambda * psi[to]).abs());
            scale = scale.max(psi[to].abs());
            // reversible inner product weights 1/phi0
            num.add(psi[to] * image / kernel.stationary[to]);
            den.add(psi[to] * psi[to] / kernel.stationary[to]);
        }
        let residual = resid / scale;
        let rayleigh = num.value() / den.value();
        max_residual = max_residual.max(residual);
        max_rayleigh_deviation = max_rayleigh_deviation.max((rayleigh - lambda).abs());
        if residual > tol.eigen_residual {
            return Err(CbtError::domain(format!(
                "eigenpair {m} residual {residual:.3e} exceeds {:.1e}",
                tol.eigen_residual
            )));
        }
        pairs.push(EigenPair {
            degrees: m.entries().to_vec(),
            lambda,
            residual,
            rayleigh,
        });
    }
    Ok(EigenReport {
        pairs,
        max_residual,
        max_rayleigh_deviation,
    })
}

/// Rebuild the kernel from its eigensystem,
/// Khat(j;i) = phi0(j) sum_m lambda_m P_m(i) P_m(j) / norm_m,
/// with `norms` the brute-force-verified Gram diagonal, and return the max
/// entrywise deviation from the direct kernel.
pub fn spectral_reconstruct(
    kernel: &TransitionKernel,
    sp: &SpectralParamSet,
    norms: &[f64],
) -> Result<f64> {
    let en = &kernel.enumeration;
    let s = en.len();
    if norms.len() != s {
        return Err(CbtError::domain(format!(
            "expected {s} norms, got {}",
            norms.len()
        )));
    }
    if let Some(bad) = norms.iter().position(|&v| v <= 0.0) {
        return Err(CbtError::domain(format!(
            "norm {bad} is not positive: {}",
            norms[bad]
        )));
    }
    let u = sp.u_matrix();
    let table = value_table(&u, en)?;
    let lambdas: Vec<f64> = en
        .states()
        .iter()
        .map(|m| sp.eigenvalue(m.entries()))
        .collect();

    let mut worst = 0.0f64;
    for from in 0..s {
        for to in 0..s {
            let mut acc = KahanSum::new();
            for m_idx in 0..s {
                acc.add(lambdas[m_idx] * table[(m_idx, from)] * table[(m_idx, to)] / norms[m_idx]);
            }
            let rebuilt = kernel.stationary[to] * acc.value();
            worst = worst.max((rebuilt - kernel.matrix[(to, from)]).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ortho::gram_matrix;
    use crate::params::SpectralParamSet;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    /// Independent one-variable kernel straight from the two-roll sum.
    fn one_variable_kernel(big_n: u32, alpha: f64, beta: f64) -> Vec<Vec<f64>> {
        let b = |k: i64, n: i64, p: f64| crate::combinatorics::binomial_pmf(k, n, p).unwrap();
        let s = big_n as i64;
        (0..=s)
            .map(|j| {
                (0..=s)
                    .map(|i| {
                        (0..=i.min(j))
                            .map(|k| b(k, i, alpha) * b(j - k, s - k, beta))
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn one_variable_matches_direct_formula() {
        let p = ModelParams::new(1, 4, vec![0.5], vec![0.5]).unwrap();
        let kernel = build_kernel(&p, &tol()).unwrap();
        let direct = one_variable_kernel(4, 0.5, 0.5);
        for to in 0..kernel.len() {
            for from in 0..kernel.len() {
                assert!(
                    (kernel.matrix()[(to, from)] - direct[to][from]).abs() < 1e-14,
                    "({to},{from})"
                );
            }
        }
    }

    #[test]
    fn two_state_chain_hand_values() {
        // N=1, alpha=beta=1/2: from 0 the only path is the reroll (1/2 each);
        // from 1, keep (1/2) or lose-and-reroll (1/4 each).
        let p = ModelParams::new(1, 1, vec![0.5], vec![0.5]).unwrap();
        let kernel = build_kernel(&p, &tol()).unwrap();
        let m = kernel.matrix();
        assert!((m[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((m[(1, 0)] - 0.5).abs() < 1e-15);
        assert!((m[(0, 1)] - 0.25).abs() < 1e-15);
        assert!((m[(1, 1)] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn detailed_balance_small_cases() {
        let p = ModelParams::new(1, 2, vec![0.5], vec![0.5]).unwrap();
        let kernel = build_kernel(&p, &tol()).unwrap();
        assert!(check_detailed_balance(&kernel) < 1e-14);

        let p = ModelParams::demo();
        let kernel = build_kernel(&p, &tol()).unwrap();
        assert!(check_detailed_balance(&kernel) < 1e-12);
    }

    #[test]
    fn eigen_check_one_variable_eigenvalues() {
        // lambda_k = (alpha (1 - beta))^k = 0.25^k at alpha = beta = 1/2.
        let p = ModelParams::new(1, 3, vec![0.5], vec![0.5]).unwrap();
        let kernel = build_kernel(&p, &tol()).unwrap();
        let sp = SpectralParamSet::solve(&p, &tol()).unwrap();
        let report = eigen_check(&kernel, &sp, &tol()).unwrap();
        for (k, pair) in report.pairs.iter().enumerate() {
            assert!((pair.lambda - 0.25f64.powi(k as i32)).abs() < 1e-12);
        }
        // degree zero is the stationary mode
        assert_eq!(report.pairs[0].lambda, 1.0);
        assert!(report.pairs[0].residual < 1e-12);
        assert!(report.max_rayleigh_deviation < 1e-9);
    }

    #[test]
    fn eigen_check_two_variable_demo() {
        let p = ModelParams::demo();
        let kernel = build_kernel(&p, &tol()).unwrap();
        let sp = SpectralParamSet::solve(&p, &tol()).unwrap();
        let report = eigen_check(&kernel, &sp, &tol()).unwrap();
        assert_eq!(report.pairs.len(), 28);
        assert!(report.max_residual < 1e-9, "{}", report.max_residual);
        assert!(report.max_rayleigh_deviation < 1e-9);
        // the spectrum sits in (0, 1], led by the stationary mode
        for pair in &report.pairs {
            assert!(pair.lambda > 0.0 && pair.lambda <= 1.0);
        }
        // eigenvalue multiplicativity over unit degree steps
        let en = kernel.enumeration();
        for (m_idx, m) in en.iter() {
            for r in 0..p.n {
                let mut up = m.entries().to_vec();
                up[r] += 1;
                if let Some(up_idx) = en.index_of(&up) {
                    let expected = report.pairs[m_idx].lambda * (1.0 - sp.omega[r]);
                    assert!((report.pairs[up_idx].lambda - expected).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn eigenvalue_family_matches_kernel_trace() {
        // trace(K) = sum over all degree vectors of the closed-form
        // eigenvalue; a global check on the whole family, independent of the
        // per-pair residuals.
        for params in [
            ModelParams::new(1, 5, vec![0.45], vec![0.3]).unwrap(),
            ModelParams::demo(),
            ModelParams::new(3, 4, vec![0.3, 0.2, 0.4], vec![0.25, 0.35, 0.2]).unwrap(),
        ] {
            let kernel = build_kernel(&params, &tol()).unwrap();
            let sp = SpectralParamSet::solve(&params, &tol()).unwrap();
            let trace: f64 = (0..kernel.len()).map(|i| kernel.matrix()[(i, i)]).sum();
            let lambda_sum: f64 = kernel
                .enumeration()
                .states()
                .iter()
                .map(|m| sp.eigenvalue(m.entries()))
                .sum();
            assert!(
                (trace - lambda_sum).abs() < 1e-12,
                "n={}: trace {trace} vs eigenvalue sum {lambda_sum}",
                params.n
            );
        }
    }

    #[test]
    fn reconstruction_small_and_demo() {
        let p = ModelParams::new(1, 2, vec![0.5], vec![0.5]).unwrap();
        let kernel = build_kernel(&p, &tol()).unwrap();
        let sp = SpectralParamSet::solve(&p, &tol()).unwrap();
        let gram = gram_matrix(&sp, 2, &tol()).unwrap();
        let resid = spectral_reconstruct(&kernel, &sp, &gram.diagonal).unwrap();
        assert!(resid < 1e-12, "{resid}");

        let p = ModelParams::new(2, 4, vec![0.3, 0.2], vec![0.25, 0.35]).unwrap();
        let kernel = build_kernel(&p, &tol()).unwrap();
        let sp = SpectralParamSet::solve(&p, &tol()).unwrap();
        let gram = gram_matrix(&sp, 4, &tol()).unwrap();
        let resid = spectral_reconstruct(&kernel, &sp, &gram.diagonal).unwrap();
        assert!(resid < 1e-9, "{resid}");

        // truncating the degree sum to zero leaves only the rank-one
        // stationary projector Khat(j;i) = phi0(j), which is far from K
        let s = kernel.len();
        let mut worst = 0.0f64;
        for from in 0..s {
            for to in 0..s {
                worst = worst.max((kernel.stationary()[to] - kernel.matrix()[(to, from)]).abs());
            }
        }
        assert!(worst > 1e-2);
    }

    #[test]
    fn reconstruction_rejects_bad_norms() {
        let p = ModelParams::new(1, 2, vec![0.5], vec![0.5]).unwrap();
        let kernel = build_kernel(&p, &tol()).unwrap();
        let sp = SpectralParamSet::solve(&p, &tol()).unwrap();
        assert!(spectral_reconstruct(&kernel, &sp, &[1.0, -0.5, 1.0]).is_err());
        assert!(spectral_reconstruct(&kernel, &sp, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn capacity_limit_enforced() {
        let p = ModelParams::new(2, 6, vec![0.3, 0.2], vec![0.25, 0.35]).unwrap();
        assert!(matches!(
            build_kernel_with_limit(&p, &tol(), 10),
            Err(CbtError::Capacity { .. })
        ));
    }

    #[test]
    fn csv_export_shape() {
        let p = ModelParams::new(1, 2, vec![0.5], vec![0.5]).unwrap();
        let kernel = build_kernel(&p, &tol()).unwrap();
        let csv = kernel.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("to_state,from_0"));
        // 17 significant digits
        assert!(lines[1].contains("e0") || lines[1].contains("e-"));
    }
}
