//! The parameter web of the chain: success probabilities (alpha, beta) map to
//! the stationary weights eta, the polynomial matrix u, the row weights omega,
//! the norm factors delta, and the dual weights etabar, tied together by a set
//! of consistency relations that this module solves and verifies.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CbtError, Result};
use crate::tolerances::Tolerances;

/// Probabilistic inputs of the chain: n success categories, N dice, first-
/// and second-roll success probabilities per category.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: u32,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl ModelParams {
    /// Validate and build. Requires 0 < alpha_k, beta_k < 1, sum(beta) < 1,
    /// and pairwise-distinct alpha (the row solver divides by alpha gaps).
    pub fn new(n: usize, big_n: u32, alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(CbtError::domain("need at least one category"));
        }
        if alpha.len() != n || beta.len() != n {
            return Err(CbtError::domain(format!(
                "expected {n} alpha and beta entries, got {} and {}",
                alpha.len(),
                beta.len()
            )));
        }
        for (k, &a) in alpha.iter().enumerate() {
            if !(a > 0.0 && a < 1.0) {
                return Err(CbtError::domain(format!("alpha[{k}] = {a} outside (0,1)")));
            }
        }
        for (k, &b) in beta.iter().enumerate() {
            if !(b > 0.0 && b < 1.0) {
                return Err(CbtError::domain(format!("beta[{k}] = {b} outside (0,1)")));
            }
        }
        let beta_sum: f64 = beta.iter().sum();
        if beta_sum >= 1.0 {
            return Err(CbtError::domain(format!(
                "beta entries sum to {beta_sum} >= 1; the second roll is not a distribution"
            )));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (alpha[i] - alpha[j]).abs() < 1e-12 {
                    return Err(CbtError::domain(format!(
                        "alpha[{i}] and alpha[{j}] coincide; the row solver requires \
                         pairwise-distinct first-roll probabilities"
                    )));
                }
            }
        }
        Ok(ModelParams {
            n,
            big_n,
            alpha,
            beta,
        })
    }

    /// The stock two-category instance used by the CLI and the test suite.
    pub fn demo() -> Self {
        ModelParams::new(2, 6, vec![0.3, 0.2], vec![0.25, 0.35]).expect("demo instance is valid")
    }
}

/// Everything derived from a [`ModelParams`]: the bridge between the
/// probabilistic and polynomial descriptions of the chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralParamSet {
    /// Stationary multinomial weights.
    pub eta: Vec<f64>,
    /// Dual orthogonality weights.
    pub eta_bar: Vec<f64>,
    /// Normalization scalar: 1 + sum_k alpha_k beta_k / (1 - alpha_k).
    pub dn: f64,
    /// Polynomial parameter matrix, one row per eigenfunction direction.
    pub u: Vec<Vec<f64>>,
    /// Row weights omega_i = sum_j beta_j u_ij; eigenvalue factors are 1 - omega_i.
    pub omega: Vec<f64>,
    /// Norm factors delta_r = sum_s eta_s u_rs^2 - 1.
    pub delta: Vec<f64>,
    /// Entries 1 - 1/u_ij, the coordinates in which the admissible parameter
    /// surface factorizes into rank-one ratio relations.
    pub u_ratio: Vec<Vec<f64>>,
    /// Condition number of u reported by the dual solve.
    pub u_condition: f64,
}

impl SpectralParamSet {
    /// Solve the full parameter web for `params` and verify every invariant.
    pub fn solve(params: &ModelParams, tol: &Tolerances) -> Result<Self> {
        let (eta, dn) = compute_eta(params, tol)?;
        let u = solve_u_matrix(params, tol)?;
        let omega = compute_omega(&u, &params.beta);
        let delta = compute_delta(&u, &eta);
        let (eta_bar, u_condition) = compute_dual_eta(&u, &eta, tol)?;

        let n = params.n;
        for k in 0..n {
            if eta_bar[k] <= 0.0 {
                return Err(CbtError::domain(format!(
                    "dual weight eta_bar[{k}] = {} is not positive for these parameters",
                    eta_bar[k]
                )));
            }
        }
        let eta_bar_sum: f64 = eta_bar.iter().sum();
        if eta_bar_sum >= 1.0 {
            return Err(CbtError::domain(format!(
                "dual weights sum to {eta_bar_sum} >= 1"
            )));
        }
        for i in 0..n {
            for j in 0..n {
                if u[(i, j)] == 0.0 {
                    return Err(CbtError::domain(format!(
                        "parameter matrix entry ({i},{j}) is zero"
                    )));
                }
            }
        }
        // Cross products sum_j eta_j u_rj u_sj = 1 for r != s; necessary and
        // sufficient for the Gram matrix to be diagonal.
        for r in 0..n {
            for s in 0..n {
                if r == s {
                    continue;
                }
                let cross: f64 = (0..n).map(|j| eta[j] * u[(r, j)] * u[(s, j)]).sum();
                if (cross - 1.0).abs() > tol.cross_product {
                    return Err(CbtError::domain(format!(
                        "cross product for rows ({r},{s}) deviates from 1 by {:.3e}",
                        (cross - 1.0).abs()
                    )));
                }
            }
        }

        let u_ratio = (0..n)
            .map(|i| (0..n).map(|j| 1.0 - 1.0 / u[(i, j)]).collect())
            .collect();
        Ok(SpectralParamSet {
            eta,
            eta_bar,
            dn,
            u: matrix_rows(&u),
            omega,
            delta,
            u_ratio,
            u_condition,
        })
    }

    pub fn n(&self) -> usize {
        self.eta.len()
    }

    /// The u matrix as a dense nalgebra matrix.
    pub fn u_matrix(&self) -> DMatrix<f64> {
        rows_to_matrix(&self.u)
    }

    /// Eigenvalue attached to a degree vector: prod_i (1 - omega_i)^{m_i}.
    pub fn eigenvalue(&self, degrees: &[u32]) -> f64 {
        degrees
            .iter()
            .zip(&self.omega)
            .map(|(&mi, &wi)| (1.0 - wi).powi(mi as i32))
            .product()
    }
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, rows.first().map_or(0, Vec::len), |i, j| rows[i][j])
}

/// Stationary weights and normalization scalar from (alpha, beta):
/// D = 1 + sum alpha_k beta_k / (1 - alpha_k), eta_k = beta_k / ((1 - alpha_k) D).
///
/// Two independent algebraic routes to 1/D are rechecked as a floating-point
/// self-test: (1 - sum eta) / (1 - sum beta) and 1 - sum alpha_k eta_k.
pub fn compute_eta(params: &ModelParams, tol: &Tolerances) -> Result<(Vec<f64>, f64)> {
    let dn = 1.0
        + params
            .alpha
            .iter()
            .zip(&params.beta)
            .map(|(&a, &b)| a * b / (1.0 - a))
            .sum::<f64>();
    let eta: Vec<f64> = params
        .alpha
        .iter()
        .zip(&params.beta)
        .map(|(&a, &b)| b / ((1.0 - a) * dn))
        .collect();

    let eta_sum: f64 = eta.iter().sum();
    if eta.iter().any(|&e| e <= 0.0) || eta_sum >= 1.0 {
        return Err(CbtError::domain(
            "derived eta is not a strict sub-distribution; inputs out of range",
        ));
    }
    let beta_sum: f64 = params.beta.iter().sum();
    let route_a = (1.0 - eta_sum) / (1.0 - beta_sum);
    let route_b = 1.0
        - params
            .alpha
            .iter()
            .zip(&eta)
            .map(|(&a, &e)| a * e)
            .sum::<f64>();
    let inv_dn = 1.0 / dn;
    if (route_a - inv_dn).abs() > tol.eta_consistency
        || (route_b - inv_dn).abs() > tol.eta_consistency
    {
        return Err(CbtError::domain(format!(
            "eta consistency checks failed: {:.3e}, {:.3e}",
            (route_a - inv_dn).abs(),
            (route_b - inv_dn).abs()
        )));
    }
    Ok((eta, dn))
}

/// Row weights omega_i = sum_j beta_j u_ij.
pub fn compute_omega(u: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    (0..u.nrows())
        .map(|i| beta.iter().enumerate().map(|(j, &b)| b * u[(i, j)]).sum())
        .collect()
}

/// Norm factors delta_r = sum_s eta_s u_rs^2 - 1.
pub fn compute_delta(u: &DMatrix<f64>, eta: &[f64]) -> Vec<f64> {
    (0..u.nrows())
        .map(|r| {
            eta.iter()
                .enumerate()
                .map(|(s, &e)| e * u[(r, s)] * u[(r, s)])
                .sum::<f64>()
                - 1.0
        })
        .collect()
}

/// Solve the eigenfunction condition for the parameter matrix u.
///
/// Anchoring on the first category, the scalar unknown t = u_{i,1} satisfies
///
///   (1 - a1)/(t - a1) = b1 + (1 - a1) sum_{k>1} a_k b_k / (a1(1 - a_k) - (a1 - a_k) t),
///
/// which clears to a degree-n polynomial. Roots come from the companion
/// matrix, polished by Newton iteration; each real root generates one row via
///
///   u_{i,k} = a_k (1 - a1) t_i / (a1 (1 - a_k) - (a1 - a_k) t_i).
///
/// Rows are ordered by ascending root so the labeling is reproducible.
pub fn solve_u_matrix(params: &ModelParams, tol: &Tolerances) -> Result<DMatrix<f64>> {
    let n = params.n;
    let alpha = &params.alpha;
    let beta = &params.beta;

    let coeffs = row_polynomial(alpha, beta);
    let roots = real_roots(&coeffs, tol)?;

    let mut u = DMatrix::zeros(n, n);
    for (i, &t) in roots.iter().enumerate() {
        u[(i, 0)] = t;
        for k in 1..n {
            let denom = alpha[0] * (1.0 - alpha[k]) - (alpha[0] - alpha[k]) * t;
            let scale = (alpha[0] * (1.0 - alpha[k])).abs() + ((alpha[0] - alpha[k]) * t).abs();
            if denom.abs() <= 1e-13 * scale.max(1.0) {
                return Err(CbtError::SingularLink { row: i, col: k });
            }
            u[(i, k)] = alpha[k] * (1.0 - alpha[0]) * t / denom;
        }
    }

    // Per-entry eigenfunction condition: a_j (1 - u_ij) / (a_j - u_ij) = 1 - omega_i.
    let omega = compute_omega(&u, beta);
    for i in 0..n {
        for j in 0..n {
            let gap = alpha[j] - u[(i, j)];
            if gap.abs() <= 1e-13 {
                return Err(CbtError::SingularLink { row: i, col: j });
            }
            let lhs = alpha[j] * (1.0 - u[(i, j)]) / gap;
            let resid = (lhs - (1.0 - omega[i])).abs();
            if resid > tol.eigen_link * (1.0 + omega[i].abs()) {
                return Err(CbtError::domain(format!(
                    "eigenfunction condition residual {resid:.3e} at entry ({i},{j})"
                )));
            }
        }
    }

    // Necessary condition: each row satisfies sum_j eta_j u_ij = 1.
    let (eta, _) = compute_eta(params, tol)?;
    for i in 0..n {
        let row_sum: f64 = (0..n).map(|j| eta[j] * u[(i, j)]).sum();
        if (row_sum - 1.0).abs() > tol.row_sum {
            return Err(CbtError::domain(format!(
                "row {i} weighted sum deviates from 1 by {:.3e}",
                (row_sum - 1.0).abs()
            )));
        }
    }

    Ok(u)
}

/// Coefficients (ascending) of the degree-n polynomial satisfied by t = u_{i,1}.
fn row_polynomial(alpha: &[f64], beta: &[f64]) -> Vec<f64> {
    let n = alpha.len();
    // g_k(t) = a1 (1 - a_k) - (a1 - a_k) t, linear in t.
    let g = |k: usize| vec![alpha[0] * (1.0 - alpha[k]), alpha[k] - alpha[0]];
    let t_minus_a1 = vec![-alpha[0], 1.0];

    // prod_{k>=1} g_k
    let mut g_all = vec![1.0];
    for k in 1..n {
        g_all = poly_mul(&g_all, &g(k));
    }

    // b1 (t - a1) prod g_k
    let mut p = poly_scale(&poly_mul(&t_minus_a1, &g_all), beta[0]);

    // (1 - a1)(t - a1) sum_{k>1} a_k b_k prod_{l != 1, l != k} g_l
    for k in 1..n {
        let mut partial = vec![1.0];
        for l in 1..n {
            if l != k {
                partial = poly_mul(&partial, &g(l));
            }
        }
        let term = poly_scale(
            &poly_mul(&t_minus_a1, &partial),
            (1.0 - alpha[0]) * alpha[k] * beta[k],
        );
        p = poly_add(&p, &term);
    }

    // -(1 - a1) prod g_k
    p = poly_add(&p, &poly_scale(&g_all, -(1.0 - alpha[0])));
    p
}

fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, &pi) in p.iter().enumerate() {
        for (j, &qj) in q.iter().enumerate() {
            out[i + j] += pi * qj;
        }
    }
    out
}

fn poly_add(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len().max(q.len())];
    for (i, &pi) in p.iter().enumerate() {
        out[i] += pi;
    }
    for (j, &qj) in q.iter().enumerate() {
        out[j] += qj;
    }
    out
}

fn poly_scale(p: &[f64], s: f64) -> Vec<f64> {
    p.iter().map(|&c| c * s).collect()
}

fn horner_with_derivative(coeffs: &[f64], t: Complex<f64>) -> (Complex<f64>, Complex<f64>) {
    let mut p = Complex::new(0.0, 0.0);
    let mut dp = Complex::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * t + p;
        p = p * t + Complex::new(c, 0.0);
    }
    (p, dp)
}

/// All roots of `coeffs` (ascending), required real within `tol.root_imag`,
/// pairwise separated by `tol.root_gap`, sorted ascending.
fn real_roots(coeffs: &[f64], tol: &Tolerances) -> Result<Vec<f64>> {
    let deg = coeffs.len() - 1;
    let lead = coeffs[deg];
    if lead == 0.0 {
        return Err(CbtError::domain("row polynomial lost its leading term"));
    }
    let monic: Vec<f64> = coeffs.iter().map(|&c| c / lead).collect();

    let mut raw: Vec<Complex<f64>> = if deg == 1 {
        vec![Complex::new(-monic[0], 0.0)]
    } else {
        let mut companion = DMatrix::zeros(deg, deg);
        for i in 1..deg {
            companion[(i, i - 1)] = 1.0;
        }
        for i in 0..deg {
            companion[(i, deg - 1)] = -monic[i];
        }
        companion.complex_eigenvalues().iter().copied().collect()
    };

    for root in raw.iter_mut() {
        let mut t = *root;
        for _ in 0..60 {
            let (p, dp) = horner_with_derivative(coeffs, t);
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            t -= step;
            if step.norm() <= 1e-16 * (1.0 + t.norm()) {
                break;
            }
        }
        let (p, _) = horner_with_derivative(coeffs, t);
        let scale: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| c.abs() * t.norm().powi(k as i32))
            .sum();
        if p.norm() > tol.root_residual * scale.max(1.0) {
            return Err(CbtError::domain(format!(
                "root polishing stalled at residual {:.3e}",
                p.norm() / scale.max(1.0)
            )));
        }
        *root = t;
    }

    for root in &raw {
        if root.im.abs() > tol.root_imag {
            return Err(CbtError::ComplexRoot {
                re: root.re,
                im: root.im,
                tol: tol.root_imag,
            });
        }
    }
    let mut roots: Vec<f64> = raw.iter().map(|r| r.re).collect();
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for w in roots.windows(2) {
        if (w[1] - w[0]).abs() < tol.root_gap {
            return Err(CbtError::DegenerateRoots {
                a: w[0],
                b: w[1],
                tol: tol.root_gap,
            });
        }
    }
    Ok(roots)
}

/// Dual weights from the linear system sum_j etabar_j u_ji = 1, i = 1..n.
/// Returns (etabar, condition number of u). The sums of eta and etabar must
/// agree; that equality is rechecked here.
pub fn compute_dual_eta(
    u: &DMatrix<f64>,
    eta: &[f64],
    tol: &Tolerances,
) -> Result<(Vec<f64>, f64)> {
    let n = u.nrows();
    let svd = u.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !cond.is_finite() || cond > tol.condition_limit {
        return Err(CbtError::SingularMatrix {
            cond,
            limit: tol.condition_limit,
        });
    }
    let rhs = DVector::from_element(n, 1.0);
    let eta_bar = u
        .transpose()
        .lu()
        .solve(&rhs)
        .ok_or(CbtError::SingularMatrix {
            cond,
            limit: tol.condition_limit,
        })?;
    let eta_bar: Vec<f64> = eta_bar.iter().copied().collect();

    let eta_sum: f64 = eta.iter().sum();
    let bar_sum: f64 = eta_bar.iter().sum();
    if (eta_sum - bar_sum).abs() > tol.eta_sum_match {
        return Err(CbtError::domain(format!(
            "primal and dual weight sums disagree by {:.3e}",
            (eta_sum - bar_sum).abs()
        )));
    }
    Ok((eta_bar, cond))
}

/// Residuals |U_jk U_nn - U_nk U_jn| for j, k < n, with U_ij = 1 - 1/u_ij.
/// Solved parameter sets satisfy these ratio relations; generic matrices
/// do not.
pub fn check_geometry(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = u.nrows();
    for i in 0..n {
        for j in 0..n {
            if u[(i, j)] == 0.0 {
                return Err(CbtError::domain(format!(
                    "matrix entry ({i},{j}) is zero; ratio coordinates are undefined"
                )));
            }
        }
    }
    let cap = |i: usize, j: usize| 1.0 - 1.0 / u[(i, j)];
    let last = n - 1;
    Ok(DMatrix::from_fn(n - 1, n - 1, |j, k| {
        (cap(j, k) * cap(last, last) - cap(last, k) * cap(j, last)).abs()
    }))
}

/// One named residual in a [`ConditionReport`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Residual summary of the orthogonality conditions on a solved set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub checks: Vec<ConditionCheck>,
    pub pass: bool,
}

/// Max residuals of the four orthogonality conditions, each with pass/fail:
/// row sums, dual column sums, cross products, and the mixed annihilation
/// sums sum_j eta_j u_rj (1 - u_sj) = 0 for r != s.
pub fn check_orthogonality_conditions(sp: &SpectralParamSet, tol: &Tolerances) -> ConditionReport {
    let n = sp.n();
    let u = &sp.u;

    let mut row = 0.0f64;
    for i in 0..n {
        let s: f64 = (0..n).map(|j| sp.eta[j] * u[i][j]).sum();
        row = row.max((s - 1.0).abs());
    }
    let mut col = 0.0f64;
    for i in 0..n {
        let s: f64 = (0..n).map(|j| sp.eta_bar[j] * u[j][i]).sum();
        col = col.max((s - 1.0).abs());
    }
    let mut cross = 0.0f64;
    let mut mixed = 0.0f64;
    for r in 0..n {
        for s in 0..n {
            if r == s {
                continue;
            }
            let c: f64 = (0..n).map(|j| sp.eta[j] * u[r][j] * u[s][j]).sum();
            cross = cross.max((c - 1.0).abs());
            let m: f64 = (0..n).map(|j| sp.eta[j] * u[r][j] * (1.0 - u[s][j])).sum();
            mixed = mixed.max(m.abs());
        }
    }

    let checks: Vec<ConditionCheck> = [
        ("eta_row_sums", row),
        ("eta_bar_col_sums", col),
        ("cross_products", cross),
        ("mixed_annihilation", mixed),
    ]
    .into_iter()
    .map(|(name, residual)| ConditionCheck {
        name: name.to_string(),
        residual,
        tolerance: tol.condition_pass,
        pass: residual <= tol.condition_pass,
    })
    .collect();
    let pass = checks.iter().all(|c| c.pass);
    ConditionReport { checks, pass }
}
