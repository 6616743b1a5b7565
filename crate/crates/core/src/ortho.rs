//! Brute-force Gram computations over the state simplex.
//!
//! Direct weighted summation is the ground truth here; every closed-form
//! norm expression is treated as a hypothesis to be confirmed against it.
//! The printed literature forms disagree with each other at n = 1 (a squared
//! versus unsquared dual weight, and a stray global constant), so
//! [`adjudicate_norm_formulas`] reports all candidates side by side instead
//! of hardcoding one.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::combinatorics::{
    enumerate_simplex, multinomial_coefficient_f64, multinomial_pmf, SimplexEnumeration,
    DEFAULT_STATE_LIMIT,
};
use crate::error::{CbtError, Result};
use crate::hypergeo::value_table;
use crate::numerics::KahanSum;
use crate::params::SpectralParamSet;
use crate::tolerances::Tolerances;

/// Result of a weighted Gram computation over degree pairs.
#[derive(Debug, Clone, Serialize)]
pub struct GramReport {
    pub n: usize,
    pub budget: u32,
    /// Degree vectors in enumeration order.
    pub degrees: Vec<Vec<u32>>,
    /// Full Gram matrix `I[m][m2]`.
    pub gram: Vec<Vec<f64>>,
    pub diagonal: Vec<f64>,
    /// Candidate closed form per degree (see `closed_form_label`).
    pub closed_form: Vec<f64>,
    pub closed_form_label: String,
    /// Max `|I[m][m2]| / sqrt(I[m][m] I[m2][m2])` over distinct degree pairs.
    pub max_offdiag_rel: f64,
    /// Max relative deviation of the diagonal from `closed_form`.
    pub max_diag_rel_dev: f64,
    /// Max `|I[m][m2] - I[m2][m]|` (the sum is manifestly symmetric).
    pub max_symmetry_residual: f64,
    /// Whether the weight/matrix pair satisfied the orthogonality conditions;
    /// false marks a negative-control run.
    pub conditions_hold: bool,
    /// Condition number of the polynomial value table (completeness check).
    pub completeness_condition: f64,
    /// Dual runs only: fitted constant in diagonal ~ constant / weight(state).
    pub global_constant: Option<f64>,
    /// Dual runs only: max relative spread of the fitted constant.
    pub global_constant_rel_spread: f64,
}

fn safe_rel(diff: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / scale
    }
}

/// Core Gram computation with explicit weights and matrix.
fn gram_core(
    eta: &[f64],
    u: &DMatrix<f64>,
    budget: u32,
    tol: &Tolerances,
) -> Result<(SimplexEnumeration, DMatrix<f64>, GramReport)> {
    let n = eta.len();
    if u.nrows() != n || u.ncols() != n {
        return Err(CbtError::domain("weight and matrix dimensions must agree"));
    }
    let en = enumerate_simplex(n, budget, DEFAULT_STATE_LIMIT)?;
    let s = en.len();
    let weights: Vec<f64> = en
        .states()
        .iter()
        .map(|x| multinomial_pmf(x.entries(), budget, eta))
        .collect::<Result<_>>()?;
    let table = value_table(u, &en)?;

    let mut gram = vec![vec![0.0; s]; s];
    for a in 0..s {
        for b in a..s {
            let mut acc = KahanSum::new();
            for x in 0..s {
                acc.add(weights[x] * table[(a, x)] * table[(b, x)]);
            }
            let v = acc.value();
            gram[a][b] = v;
            gram[b][a] = v;
        }
    }
    // With both triangles filled from one sum the stored matrix is exactly
    // symmetric; recompute the lower triangle independently to measure the
    // summation-order sensitivity instead of asserting a tautology.
    let mut max_symmetry_residual = 0.0f64;
    for a in 0..s {
        for b in 0..a {
            let mut acc = KahanSum::new();
            for x in 0..s {
                acc.add(weights[x] * table[(b, x)] * table[(a, x)]);
            }
            max_symmetry_residual = max_symmetry_residual.max((acc.value() - gram[a][b]).abs());
        }
    }

    let diagonal: Vec<f64> = (0..s).map(|i| gram[i][i]).collect();
    let mut max_offdiag_rel = 0.0f64;
    for a in 0..s {
        for b in 0..s {
            if a != b {
                let scale = (diagonal[a] * diagonal[b]).sqrt();
                max_offdiag_rel = max_offdiag_rel.max(safe_rel(gram[a][b].abs(), scale));
            }
        }
    }

    // Orthogonality conditions for this exact weight/matrix pair.
    let mut cond_resid = 0.0f64;
    for i in 0..n {
        let row: f64 = (0..n).map(|j| eta[j] * u[(i, j)]).sum();
        cond_resid = cond_resid.max((row - 1.0).abs());
    }
    for r in 0..n {
        for sx in 0..n {
            if r != sx {
                let cross: f64 = (0..n).map(|j| eta[j] * u[(r, j)] * u[(sx, j)]).sum();
                cond_resid = cond_resid.max((cross - 1.0).abs());
            }
        }
    }

    let svd = table.clone().svd(false, false);
    let smin = svd.singular_values.min();
    let completeness_condition = if smin > 0.0 {
        svd.singular_values.max() / smin
    } else {
        f64::INFINITY
    };

    let degrees = en.states().iter().map(|m| m.entries().to_vec()).collect();
    let report = GramReport {
        n,
        budget,
        degrees,
        gram,
        diagonal,
        closed_form: Vec::new(),
        closed_form_label: String::new(),
        max_offdiag_rel,
        max_diag_rel_dev: 0.0,
        max_symmetry_residual,
        conditions_hold: cond_resid <= tol.condition_pass,
        completeness_condition,
        global_constant: None,
        global_constant_rel_spread: 0.0,
    };
    Ok((en, table, report))
}

/// Product closed form prod_j delta_j^{m_j} / multinomial(N; m).
fn product_closed_form(delta: &[f64], degrees: &[Vec<u32>], budget: u32) -> Result<Vec<f64>> {
    degrees
        .iter()
        .map(|m| {
            let coeff = multinomial_coefficient_f64(budget, m)?;
            let prod: f64 = m
                .iter()
                .zip(delta)
                .map(|(&mi, &d)| d.powi(mi as i32))
                .product();
            Ok(prod / coeff)
        })
        .collect()
}

/// Gram matrix of the polynomial family under the stationary weight, with
/// the diagonal compared against the product closed form.
pub fn gram_matrix(sp: &SpectralParamSet, budget: u32, tol: &Tolerances) -> Result<GramReport> {
    gram_matrix_generic(&sp.eta, &sp.u_matrix(), budget, tol)
}

/// As [`gram_matrix`] but for an arbitrary weight/matrix pair (negative
/// controls included); `conditions_hold` records whether the pair satisfies
/// the orthogonality conditions.
pub fn gram_matrix_generic(
    eta: &[f64],
    u: &DMatrix<f64>,
    budget: u32,
    tol: &Tolerances,
) -> Result<GramReport> {
    let (_, _, mut report) = gram_core(eta, u, budget, tol)?;
    let delta = crate::params::compute_delta(u, eta);
    report.closed_form = product_closed_form(&delta, &report.degrees, budget)?;
    report.closed_form_label = "product of delta powers over multinomial".to_string();
    report.max_diag_rel_dev = report
        .diagonal
        .iter()
        .zip(&report.closed_form)
        .map(|(&d, &c)| safe_rel((d - c).abs(), c.abs().max(d.abs())))
        .fold(0.0, f64::max);
    Ok(report)
}

/// Dual Gram matrix: the same polynomial family summed over degrees with the
/// dual weight. By the degree/argument symmetry P_m(x; u) = P_x(m; u^T) this
/// is the primal computation with (eta_bar, u^T). The diagonal is compared
/// against constant / primal_weight(state) with the constant fitted
/// empirically and reported.
pub fn dual_gram_matrix(
    sp: &SpectralParamSet,
    budget: u32,
    tol: &Tolerances,
) -> Result<GramReport> {
    let ut = sp.u_matrix().transpose();
    let (en, _, mut report) = gram_core(&sp.eta_bar, &ut, budget, tol)?;

    let primal_weights: Vec<f64> = en
        .states()
        .iter()
        .map(|x| multinomial_pmf(x.entries(), budget, &sp.eta))
        .collect::<Result<_>>()?;
    // diagonal(x) * weight(x) should be one global constant
    let products: Vec<f64> = report
        .diagonal
        .iter()
        .zip(&primal_weights)
        .map(|(&d, &w)| d * w)
        .collect();
    let constant = products.iter().sum::<f64>() / products.len() as f64;
    let spread = products
        .iter()
        .map(|&p| safe_rel((p - constant).abs(), constant.abs()))
        .fold(0.0, f64::max);
    report.closed_form = primal_weights.iter().map(|&w| constant / w).collect();
    report.closed_form_label = "fitted constant over primal weight".to_string();
    report.max_diag_rel_dev = report
        .diagonal
        .iter()
        .zip(&report.closed_form)
        .map(|(&d, &c)| safe_rel((d - c).abs(), c.abs().max(d.abs())))
        .fold(0.0, f64::max);
    report.global_constant = Some(constant);
    report.global_constant_rel_spread = spread;
    Ok(report)
}

/// Absolute residual of the generating identity
/// sum_x weight(x) P_m(x) = prod_i (1 - sum_j eta_j u_ij)^{m_i},
/// which holds for any matrix u. On condition-satisfying parameters both
/// sides vanish for m != 0.
pub fn generating_function_residual(
    eta: &[f64],
    u: &DMatrix<f64>,
    budget: u32,
    m: &[u32],
) -> Result<f64> {
    let n = eta.len();
    if m.len() != n {
        return Err(CbtError::domain("degree dimension mismatch"));
    }
    let en = enumerate_simplex(n, budget, DEFAULT_STATE_LIMIT)?;
    let mut acc = KahanSum::new();
    for x in en.states() {
        let w = multinomial_pmf(x.entries(), budget, eta)?;
        let p = crate::hypergeo::eval_f1n_at(m, x.entries(), budget, u)?;
        acc.add(w * p);
    }
    let lhs = acc.value();
    let rhs: f64 = (0..n)
        .map(|i| {
            let row: f64 = (0..n).map(|j| eta[j] * u[(i, j)]).sum();
            (1.0 - row).powi(m[i] as i32)
        })
        .product();
    Ok((lhs - rhs).abs())
}

/// [`generating_function_residual`] on a solved parameter set.
pub fn check_generating_function(sp: &SpectralParamSet, budget: u32, m: &[u32]) -> Result<f64> {
    generating_function_residual(&sp.eta, &sp.u_matrix(), budget, m)
}

/// One candidate closed form in a [`NormAdjudication`].
#[derive(Debug, Clone, Serialize)]
pub struct NormCandidate {
    pub label: String,
    pub values: Vec<f64>,
    pub max_rel_dev: f64,
}

/// Side-by-side comparison of norm formulas against the brute-force diagonal.
#[derive(Debug, Clone, Serialize)]
pub struct NormAdjudication {
    pub n: usize,
    pub budget: u32,
    pub degrees: Vec<Vec<u32>>,
    /// Ground truth: brute-force Gram diagonal.
    pub brute: Vec<f64>,
    pub candidates: Vec<NormCandidate>,
}

impl NormAdjudication {
    pub fn candidate(&self, label: &str) -> Option<&NormCandidate> {
        self.candidates.iter().find(|c| c.label == label)
    }
}

/// Evaluate the competing closed-form norm expressions for each degree:
///
/// - `delta_product`: prod delta_j^{m_j} / multinomial, delta from its
///   defining sum;
/// - `dual_squared` / `dual_unsquared`: the same product with delta replaced
///   by (1 - sum etabar^2)/etabar_r resp. (1 - sum etabar)/etabar_r;
/// - `reciprocal_dual_weight`: 1 / weight_dual(m);
/// - `scaled_reciprocal_dual_weight`: (1 - sum etabar)^N / weight_dual(m).
///
/// The brute-force diagonal is ground truth; deviations are reported, not
/// asserted, so the disagreement between the printed forms is documented by
/// the run itself.
pub fn adjudicate_norm_formulas(
    sp: &SpectralParamSet,
    budget: u32,
    tol: &Tolerances,
) -> Result<NormAdjudication> {
    let report = gram_matrix(sp, budget, tol)?;
    let degrees = report.degrees.clone();
    let brute = report.diagonal.clone();
    let n = sp.n();

    let bar_sum: f64 = sp.eta_bar.iter().sum();
    let bar_sq_sum: f64 = sp.eta_bar.iter().map(|&e| e * e).sum();
    let delta_def = sp.delta.clone();
    let delta_squared: Vec<f64> = sp.eta_bar.iter().map(|&e| (1.0 - bar_sq_sum) / e).collect();
    let delta_unsquared: Vec<f64> = sp.eta_bar.iter().map(|&e| (1.0 - bar_sum) / e).collect();

    let mut candidates = Vec::new();
    for (label, delta) in [
        ("delta_product", &delta_def),
        ("dual_squared", &delta_squared),
        ("dual_unsquared", &delta_unsquared),
    ] {
        let values = product_closed_form(delta, &degrees, budget)?;
        candidates.push(make_candidate(label, values, &brute));
    }

    let dual_weights: Vec<f64> = degrees
        .iter()
        .map(|m| multinomial_pmf(m, budget, &sp.eta_bar))
        .collect::<Result<_>>()?;
    let recip: Vec<f64> = dual_weights.iter().map(|&w| 1.0 / w).collect();
    candidates.push(make_candidate("reciprocal_dual_weight", recip, &brute));
    let scale = (1.0 - bar_sum).powi(budget as i32);
    let scaled: Vec<f64> = dual_weights.iter().map(|&w| scale / w).collect();
    candidates.push(make_candidate(
        "scaled_reciprocal_dual_weight",
        scaled,
        &brute,
    ));

    Ok(NormAdjudication {
        n,
        budget,
        degrees,
        brute,
        candidates,
    })
}

fn make_candidate(label: &str, values: Vec<f64>, brute: &[f64]) -> NormCandidate {
    let max_rel_dev = values
        .iter()
        .zip(brute)
        .map(|(&v, &b)| safe_rel((v - b).abs(), b.abs()))
        .fold(0.0, f64::max);
    NormCandidate {
        label: label.to_string(),
        values,
        max_rel_dev,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ModelParams, SpectralParamSet};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    /// alpha = 1/2, beta = 1/5 gives eta = 1/3 and u = 3 in one variable.
    fn params_eta_third() -> ModelParams {
        ModelParams::new(1, 2, vec![0.5], vec![0.2]).unwrap()
    }

    #[test]
    fn gram_zero_degree_is_one() {
        let sp = SpectralParamSet::solve(&ModelParams::demo(), &tol()).unwrap();
        let report = gram_matrix(&sp, 4, &tol()).unwrap();
        assert!((report.diagonal[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gram_one_variable_hand_value() {
        let p = params_eta_third();
        let sp = SpectralParamSet::solve(&p, &tol()).unwrap();
        assert!((sp.eta[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!((sp.u[0][0] - 3.0).abs() < 1e-12);
        let report = gram_matrix(&sp, 2, &tol()).unwrap();
        // Hand sum over x = 0,1,2 with weight b(x;2;1/3): diagonal at m = 1 is
        // delta / C(2,1) = 2/2 = 1.
        assert!((report.diagonal[1] - 1.0).abs() < 1e-12, "{report:?}");
        assert!(report.conditions_hold);
    }

    #[test]
    fn gram_demo_orthogonality() {
        let sp = SpectralParamSet::solve(&ModelParams::demo(), &tol()).unwrap();
        let report = gram_matrix(&sp, 6, &tol()).unwrap();
        assert_eq!(report.degrees.len(), 28);
        assert!(report.max_offdiag_rel < 1e-9, "{}", report.max_offdiag_rel);
        assert!(
            report.max_diag_rel_dev < 1e-9,
            "{}",
            report.max_diag_rel_dev
        );
        assert!(report.max_symmetry_residual < 1e-12);
        assert!(report.completeness_condition.is_finite());
    }

    #[test]
    fn gram_negative_control() {
        // A generic matrix with valid weights: orthogonality must visibly fail.
        let eta = [0.3, 0.25];
        let u = nalgebra::DMatrix::from_row_slice(2, 2, &[1.4, 0.6, 2.2, -0.8]);
        let report = gram_matrix_generic(&eta, &u, 4, &tol()).unwrap();
        assert!(!report.conditions_hold);
        assert!(report.max_offdiag_rel > 1e-3, "{}", report.max_offdiag_rel);
    }

    #[test]
    fn dual_gram_one_variable_hand_values() {
        // alpha = 1/2, beta = 1/3 gives eta = etabar = 1/2, u = 2 at N = 1.
        let p = ModelParams::new(1, 1, vec![0.5], vec![1.0 / 3.0]).unwrap();
        let sp = SpectralParamSet::solve(&p, &tol()).unwrap();
        assert!((sp.eta[0] - 0.5).abs() < 1e-14);
        assert!((sp.u[0][0] - 2.0).abs() < 1e-12);
        let report = dual_gram_matrix(&sp, 1, &tol()).unwrap();
        // Two-term hand sum: sum_m b(m;1;1/2) P_m(x)^2 = 1 at both states,
        // and the ratio to 1/b(x;1;1/2) is the constant (1 - eta)^N = 1/2.
        assert!((report.diagonal[0] - 1.0).abs() < 1e-12);
        assert!((report.diagonal[1] - 1.0).abs() < 1e-12);
        let c = report.global_constant.unwrap();
        assert!((c - 0.5).abs() < 1e-12);
        assert!(report.global_constant_rel_spread < 1e-12);
        assert!(report.max_offdiag_rel < 1e-12);
    }

    #[test]
    fn dual_gram_demo() {
        let p = ModelParams::new(2, 4, vec![0.3, 0.2], vec![0.25, 0.35]).unwrap();
        let sp = SpectralParamSet::solve(&p, &tol()).unwrap();
        let report = dual_gram_matrix(&sp, 4, &tol()).unwrap();
        assert!(report.max_offdiag_rel < 1e-9, "{}", report.max_offdiag_rel);
        // the dual pair (etabar, u^T) satisfies its own orthogonality web
        assert!(report.conditions_hold);
        // the empirical constant matches (1 - sum etabar)^N
        let bar_sum: f64 = sp.eta_bar.iter().sum();
        let expected = (1.0 - bar_sum).powi(4);
        let c = report.global_constant.unwrap();
        assert!(
            (c - expected).abs() < 1e-9 * expected.abs(),
            "{c} vs {expected}"
        );
    }

    #[test]
    fn generating_function_zero_degree() {
        let sp = SpectralParamSet::solve(&ModelParams::demo(), &tol()).unwrap();
        let r = check_generating_function(&sp, 4, &[0, 0]).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn generating_function_solved_instance_vanishes() {
        let sp = SpectralParamSet::solve(&ModelParams::demo(), &tol()).unwrap();
        for m in [[1, 0], [0, 2], [2, 1]] {
            let r = check_generating_function(&sp, 5, &m).unwrap();
            assert!(r < 1e-10, "m={m:?}: {r}");
            // with the conditions in force both sides are individually tiny
            let u = sp.u_matrix();
            let rhs: f64 = (0..2)
                .map(|i| {
                    let row: f64 = (0..2).map(|j| sp.eta[j] * u[(i, j)]).sum();
                    (1.0 - row).powi(m[i] as i32)
                })
                .product();
            assert!(rhs.abs() < 1e-10);
        }
    }

    #[test]
    fn generating_function_generic_identity() {
        // The identity holds for arbitrary u, nonzero sides included.
        let eta = [0.35, 0.2];
        let u = nalgebra::DMatrix::from_row_slice(2, 2, &[0.9, -0.4, 0.3, 0.75]);
        for m in [[1, 0], [2, 2], [0, 3]] {
            let r = generating_function_residual(&eta, &u, 4, &m).unwrap();
            assert!(r < 1e-12, "m={m:?}: {r}");
        }
    }

    #[test]
    fn adjudication_one_variable() {
        let p = params_eta_third();
        let sp = SpectralParamSet::solve(&p, &tol()).unwrap();
        let adj = adjudicate_norm_formulas(&sp, 2, &tol()).unwrap();
        // ground truth at m = 1 is 1 (three-term hand sum)
        assert!((adj.brute[1] - 1.0).abs() < 1e-12);
        // the defining-sum product matches to machine precision
        assert!(adj.candidate("delta_product").unwrap().max_rel_dev < 1e-12);
        // the unsquared dual form matches too
        assert!(adj.candidate("dual_unsquared").unwrap().max_rel_dev < 1e-12);
        // the squared dual form deviates by the documented factor 4/3 at m = 1
        let squared = adj.candidate("dual_squared").unwrap();
        let ratio = squared.values[1] / adj.brute[1];
        assert!((ratio - 4.0 / 3.0).abs() < 1e-9, "{ratio}");
        // the bare reciprocal dual weight misses the global constant
        assert!(adj.candidate("reciprocal_dual_weight").unwrap().max_rel_dev > 0.1);
        // restoring (1 - sum etabar)^N fixes it
        assert!(
            adj.candidate("scaled_reciprocal_dual_weight")
                .unwrap()
                .max_rel_dev
                < 1e-12
        );
    }

    #[test]
    fn adjudication_two_variable_runs() {
        let p = ModelParams::new(2, 4, vec![0.3, 0.2], vec![0.25, 0.35]).unwrap();
        let sp = SpectralParamSet::solve(&p, &tol()).unwrap();
        let adj = adjudicate_norm_formulas(&sp, 4, &tol()).unwrap();
        assert!(adj.candidate("delta_product").unwrap().max_rel_dev < 1e-9);
    }
}
