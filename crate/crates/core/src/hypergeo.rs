//! Evaluation of the terminating matrix-argument hypergeometric series
//! F1n(-m; -x; -N; u) that defines the multivariable Krawtchouk polynomials,
//! together with its transformation identities and an integral-representation
//! quadrature oracle.
//!
//! The series runs over n x n grids of nonnegative integers k with
//!
//!   term(k) = prod_i (a_i)_{rowsum_i} prod_j (b_j)_{colsum_j}
//!             / (prod_ij k_ij! * (c)_{total}) * prod_ij u_ij^{k_ij},
//!
//! where for the polynomial case a = -m, b = -x, c = -N. Nonpositive-integer
//! parameters truncate the corresponding row/column sums, which is what makes
//! the sum finite.

use nalgebra::DMatrix;

use crate::combinatorics::{pochhammer, MultiIndex};
use crate::error::{CbtError, Result};
use crate::numerics::{gauss_jacobi_unit, KahanSum};

/// Arguments of the polynomial case: degrees m, argument x, budget N, matrix u.
#[derive(Debug, Clone)]
pub struct F1nArguments {
    pub m: MultiIndex,
    pub x: MultiIndex,
    pub big_n: u32,
    pub u: DMatrix<f64>,
}

impl F1nArguments {
    pub fn new(m: MultiIndex, x: MultiIndex, big_n: u32, u: DMatrix<f64>) -> Result<Self> {
        let n = m.dim();
        if x.dim() != n || u.nrows() != n || u.ncols() != n {
            return Err(CbtError::domain(
                "degree, argument, and matrix dimensions must agree",
            ));
        }
        if m.sum() > big_n || x.sum() > big_n {
            return Err(CbtError::domain(
                "degree and argument sums must not exceed the budget",
            ));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(CbtError::domain("matrix entries must be finite"));
        }
        Ok(F1nArguments { m, x, big_n, u })
    }
}

/// Arguments of the general (not necessarily terminating) series, used for
/// the quadrature cross-check: row parameters a, column parameters b,
/// denominator parameter c, matrix u.
#[derive(Debug, Clone)]
pub struct GeneralF1nArguments {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
    pub u: DMatrix<f64>,
}

/// Tensor quadrature order for the integral oracle.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureRule {
    /// Points per axis; the refinement estimate compares against points/2.
    pub points: usize,
    /// Largest acceptable refinement estimate.
    pub max_error: f64,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule {
            points: 64,
            max_error: 1e-6,
        }
    }
}

/// Returns `k` if `v` is the floating-point image of the nonpositive integer
/// `-k`, else `None`.
fn nonpositive_integer(v: f64) -> Option<usize> {
    if v <= 0.0 && v.fract() == 0.0 && v >= -(u32::MAX as f64) {
        Some((-v) as usize)
    } else {
        None
    }
}

/// Shared grid-summation engine.
///
/// Row/column caps come from nonpositive-integer parameters where available,
/// otherwise from the hard total cap. Terms are generated depth-first in
/// row-major cell order with ascending cell values, and accumulated into
/// per-total-degree shells with compensated summation, so results are
/// bit-reproducible.
struct GridSeries<'a> {
    n: usize,
    u_pow: Vec<Vec<f64>>,
    inv_fact: Vec<f64>,
    row_poch: Vec<Vec<f64>>,
    col_poch: Vec<Vec<f64>>,
    denom_poch: Vec<f64>,
    row_caps: &'a [usize],
    col_caps: &'a [usize],
}

impl<'a> GridSeries<'a> {
    fn prepare(
        a: &[f64],
        b: &[f64],
        c: f64,
        u: &DMatrix<f64>,
        row_caps: &'a [usize],
        col_caps: &'a [usize],
        total_cap: usize,
    ) -> Result<Self> {
        let n = a.len();
        let row_total: usize = row_caps.iter().sum();
        let col_total: usize = col_caps.iter().sum();
        let max_total = total_cap.min(row_total).min(col_total);

        let denom_poch: Vec<f64> = (0..=max_total).map(|t| pochhammer(c, t)).collect();
        if let Some(pos) = denom_poch.iter().position(|&p| p == 0.0) {
            return Err(CbtError::domain(format!(
                "denominator parameter {c} makes ({c})_{pos} vanish inside the summation range"
            )));
        }

        let mut inv_fact = vec![1.0; max_total + 1];
        for k in 1..=max_total {
            inv_fact[k] = inv_fact[k - 1] / k as f64;
        }

        let row_poch = a
            .iter()
            .zip(row_caps)
            .map(|(&ai, &cap)| {
                (0..=cap.min(max_total))
                    .map(|r| pochhammer(ai, r))
                    .collect()
            })
            .collect();
        let col_poch = b
            .iter()
            .zip(col_caps)
            .map(|(&bj, &cap)| {
                (0..=cap.min(max_total))
                    .map(|s| pochhammer(bj, s))
                    .collect()
            })
            .collect();

        let mut u_pow = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let cap = row_caps[i].min(col_caps[j]).min(max_total);
                let mut powers = Vec::with_capacity(cap + 1);
                let mut p = 1.0;
                for _ in 0..=cap {
                    powers.push(p);
                    p *= u[(i, j)];
                }
                u_pow.push(powers);
            }
        }

        Ok(GridSeries {
            n,
            u_pow,
            inv_fact,
            row_poch,
            col_poch,
            denom_poch,
            row_caps,
            col_caps,
        })
    }

    /// Sum all terms, bucketed by total grid weight.
    fn shells(&self) -> Vec<KahanSum> {
        let max_total = self.denom_poch.len() - 1;
        let mut shells = vec![KahanSum::new(); max_total + 1];
        let mut row_used = vec![0usize; self.n];
        let mut col_used = vec![0usize; self.n];
        self.descend(0, 0, 1.0, &mut row_used, &mut col_used, &mut shells);
        shells
    }

    fn descend(
        &self,
        cell: usize,
        total: usize,
        prefix: f64,
        row_used: &mut [usize],
        col_used: &mut [usize],
        shells: &mut [KahanSum],
    ) {
        let max_total = self.denom_poch.len() - 1;
        if cell == self.n * self.n {
            let mut term = prefix / self.denom_poch[total];
            for (i, &r) in row_used.iter().enumerate() {
                term *= self.row_poch[i][r];
            }
            for (j, &s) in col_used.iter().enumerate() {
                term *= self.col_poch[j][s];
            }
            shells[total].add(term);
            return;
        }
        let i = cell / self.n;
        let j = cell % self.n;
        let cap = (self.row_caps[i] - row_used[i])
            .min(self.col_caps[j] - col_used[j])
            .min(max_total - total);
        for k in 0..=cap {
            row_used[i] += k;
            col_used[j] += k;
            let factor = self.u_pow[cell][k] * self.inv_fact[k];
            self.descend(
                cell + 1,
                total + k,
                prefix * factor,
                row_used,
                col_used,
                shells,
            );
            row_used[i] -= k;
            col_used[j] -= k;
        }
    }
}

/// Evaluate the general series with explicit caps. Rows and columns whose
/// parameter is a nonpositive integer terminate there; anything else is
/// truncated at `total_cap`.
pub fn eval_f1n_general(
    a: &[f64],
    b: &[f64],
    c: f64,
    u: &DMatrix<f64>,
    total_cap: usize,
) -> Result<f64> {
    let (value, _) = eval_f1n_general_with_tail(a, b, c, u, total_cap)?;
    Ok(value)
}

/// As [`eval_f1n_general`], also returning a tail estimate: the summed
/// magnitude of the last two total-degree shells. For a terminating series
/// whose caps are inside `total_cap` the estimate is exact rounding noise.
pub fn eval_f1n_general_with_tail(
    a: &[f64],
    b: &[f64],
    c: f64,
    u: &DMatrix<f64>,
    total_cap: usize,
) -> Result<(f64, f64)> {
    let n = a.len();
    if b.len() != n || u.nrows() != n || u.ncols() != n {
        return Err(CbtError::domain(
            "parameter vectors and matrix dimensions must agree",
        ));
    }
    let row_caps: Vec<usize> = a
        .iter()
        .map(|&ai| nonpositive_integer(ai).map_or(total_cap, |k| k.min(total_cap)))
        .collect();
    let col_caps: Vec<usize> = b
        .iter()
        .map(|&bj| nonpositive_integer(bj).map_or(total_cap, |k| k.min(total_cap)))
        .collect();
    let series = GridSeries::prepare(a, b, c, u, &row_caps, &col_caps, total_cap)?;
    let shells = series.shells();
    let mut acc = KahanSum::new();
    for shell in &shells {
        acc.add(shell.value());
    }
    // A tail only exists when the hard cap actually truncates; a naturally
    // terminating sum is exact and its last shells are legitimate terms.
    let terminated = row_caps.iter().sum::<usize>().min(col_caps.iter().sum()) < total_cap;
    let tail = if terminated || shells.len() < 2 {
        0.0
    } else {
        shells[shells.len() - 1].value().abs() + shells[shells.len() - 2].value().abs()
    };
    Ok((acc.value(), tail))
}

/// Evaluate the Krawtchouk-defining terminating series at degrees `m`,
/// argument `x`, budget `N`, matrix `u`.
pub fn eval_f1n(args: &F1nArguments) -> Result<f64> {
    eval_f1n_at(args.m.entries(), args.x.entries(), args.big_n, &args.u)
}

/// Slice-level entry point used by the table builders in `ortho` / `kernel`.
pub fn eval_f1n_at(m: &[u32], x: &[u32], big_n: u32, u: &DMatrix<f64>) -> Result<f64> {
    let n = m.len();
    if x.len() != n || u.nrows() != n || u.ncols() != n {
        return Err(CbtError::domain(
            "degree, argument, and matrix dimensions must agree",
        ));
    }
    let sum_m: u32 = m.iter().sum();
    if sum_m > big_n {
        return Err(CbtError::domain("degree sum exceeds budget"));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(CbtError::domain("matrix entries must be finite"));
    }
    let a: Vec<f64> = m.iter().map(|&v| -(v as f64)).collect();
    let b: Vec<f64> = x.iter().map(|&v| -(v as f64)).collect();
    eval_f1n_general(&a, &b, -(big_n as f64), u, big_n as usize)
}

/// Table of polynomial values P_m(x) over a common degree/state enumeration:
/// row = degree index, column = state index.
pub fn value_table(
    u: &DMatrix<f64>,
    enumeration: &crate::combinatorics::SimplexEnumeration,
) -> Result<DMatrix<f64>> {
    let s = enumeration.len();
    let big_n = enumeration.budget();
    let mut table = DMatrix::zeros(s, s);
    for (m_idx, m) in enumeration.iter() {
        for (x_idx, x) in enumeration.iter() {
            table[(m_idx, x_idx)] = eval_f1n_at(m.entries(), x.entries(), big_n, u)?;
        }
    }
    Ok(table)
}

/// Terminating Gauss series sum_{k=0}^{deg} (-deg)_k (a)_k z^k / (k! (c)_k).
pub fn eval_2f1_terminating(deg: u32, a: f64, c: f64, z: f64) -> Result<f64> {
    let mut acc = KahanSum::new();
    let mut term = 1.0;
    acc.add(term);
    for k in 0..deg {
        let kf = k as f64;
        let denom = (kf + 1.0) * (c + kf);
        if denom == 0.0 {
            return Err(CbtError::domain(format!(
                "denominator parameter {c} vanishes at term {} before the series terminates",
                k + 1
            )));
        }
        term *= (kf - deg as f64) * (a + kf) * z / denom;
        acc.add(term);
    }
    Ok(acc.value())
}

/// Relative residual |LHS - RHS| / max(|LHS|, |RHS|) of the argument-reflection
/// identity that sends u to 1-u with a shifted denominator parameter.
/// Requires sum(m) + sum(x) <= N so no transformed denominator vanishes.
pub fn check_euler_transform(args: &F1nArguments) -> Result<f64> {
    let n = args.m.dim();
    let sum_m = args.m.sum() as usize;
    let sum_x = args.x.sum() as usize;
    let big_n = args.big_n as usize;
    if sum_m + sum_x > big_n {
        return Err(CbtError::domain(format!(
            "degree sum {sum_m} plus argument sum {sum_x} exceeds budget {big_n}; \
             the transformed parameter would vanish inside the summation range"
        )));
    }
    let lhs = eval_f1n(args)?;

    let prefactor =
        pochhammer(sum_x as f64 - big_n as f64, sum_m) / pochhammer(-(big_n as f64), sum_m);
    let a: Vec<f64> = args.m.entries().iter().map(|&v| -(v as f64)).collect();
    let b: Vec<f64> = args.x.entries().iter().map(|&v| -(v as f64)).collect();
    let c = big_n as f64 + 1.0 - (sum_x + sum_m) as f64;
    let u_reflected = DMatrix::from_fn(n, n, |i, j| 1.0 - args.u[(i, j)]);
    let rhs = prefactor * eval_f1n_general(&a, &b, c, &u_reflected, big_n)?;

    Ok(relative_residual(lhs, rhs))
}

/// Relative residual of the last-column elimination identity: each row i
/// gains a prefactor (1 - u_in)^{m_i}, the last column parameter becomes
/// sum(x) - N, and the matrix maps to (u_ij - u_in)/(1 - u_in) with last
/// column -u_in/(1 - u_in).
pub fn check_pfaff_transform(args: &F1nArguments) -> Result<f64> {
    let n = args.m.dim();
    let last = n - 1;
    for i in 0..n {
        if args.u[(i, last)] == 1.0 {
            return Err(CbtError::domain(format!(
                "matrix entry ({i}, {last}) equals 1; the transformed arguments are undefined"
            )));
        }
    }
    let lhs = eval_f1n(args)?;

    let mut prefactor = 1.0;
    for i in 0..n {
        prefactor *= (1.0 - args.u[(i, last)]).powi(args.m.get(i) as i32);
    }
    let a: Vec<f64> = args.m.entries().iter().map(|&v| -(v as f64)).collect();
    let mut b: Vec<f64> = args.x.entries().iter().map(|&v| -(v as f64)).collect();
    b[last] = args.x.sum() as f64 - args.big_n as f64;
    let u_new = DMatrix::from_fn(n, n, |i, j| {
        let denom = 1.0 - args.u[(i, last)];
        if j == last {
            -args.u[(i, last)] / denom
        } else {
            (args.u[(i, j)] - args.u[(i, last)]) / denom
        }
    });
    let rhs =
        prefactor * eval_f1n_general(&a, &b, -(args.big_n as f64), &u_new, args.big_n as usize)?;

    Ok(relative_residual(lhs, rhs))
}

/// |LHS - RHS| relative to max(|LHS|, |RHS|, 1). Every series here contains
/// the k = 0 term equal to 1, so result magnitudes below 1 come from
/// cancellation; the unit floor keeps the metric meaningful at polynomial
/// zeros instead of dividing rounding noise by itself.
fn relative_residual(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0)
}

/// Evaluate the general series through its simplex integral representation
/// with tensor Gauss-Jacobi rules (n <= 2).
///
/// Requires 0 < a_i and c - sum(a) > 0 for the Beta-type weight to be
/// integrable, and each column either bounded (1 - sum_k xi_k u_kj > 0 on
/// the simplex) or raised to a nonnegative integer power.
pub fn eval_f1n_quadrature(args: &GeneralF1nArguments, rule: &QuadratureRule) -> Result<f64> {
    let n = args.a.len();
    if args.b.len() != n || args.u.nrows() != n || args.u.ncols() != n {
        return Err(CbtError::domain(
            "parameter vectors and matrix dimensions must agree",
        ));
    }
    if n == 0 || n > 2 {
        return Err(CbtError::domain(
            "quadrature oracle supports dimensions 1 and 2 only",
        ));
    }
    if rule.points < 4 {
        return Err(CbtError::domain(
            "quadrature rule needs at least 4 points per axis",
        ));
    }
    if args.a.iter().any(|&ai| ai <= 0.0) {
        return Err(CbtError::domain("row parameters must be positive"));
    }
    let a_sum: f64 = args.a.iter().sum();
    if args.c - a_sum <= 0.0 {
        return Err(CbtError::domain(
            "denominator parameter minus row-parameter sum must be positive",
        ));
    }
    // Column powers: integer exponents for nonpositive-integer b_j, otherwise
    // the base must stay positive on the whole simplex. The base is affine in
    // xi, so vertex positivity suffices.
    let mut int_power: Vec<Option<i32>> = Vec::with_capacity(n);
    for j in 0..n {
        match nonpositive_integer(args.b[j]) {
            Some(k) => int_power.push(Some(k as i32)),
            None => {
                for k in 0..n {
                    if 1.0 - args.u[(k, j)] <= 0.0 {
                        return Err(CbtError::domain(format!(
                            "column {j} has a non-integer parameter and its base \
                             1 - u_{{{k}{j}}} xi is not positive on the simplex"
                        )));
                    }
                }
                int_power.push(None);
            }
        }
    }

    let lo = integrate_simplex(args, &int_power, rule.points / 2);
    let hi = integrate_simplex(args, &int_power, rule.points);
    let estimate = (hi - lo).abs();
    if estimate > rule.max_error {
        return Err(CbtError::Quadrature {
            estimate,
            tol: rule.max_error,
        });
    }

    let ln_prefactor = statrs::function::gamma::ln_gamma(args.c)
        - statrs::function::gamma::ln_gamma(args.c - a_sum)
        - args
            .a
            .iter()
            .map(|&ai| statrs::function::gamma::ln_gamma(ai))
            .sum::<f64>();
    Ok(ln_prefactor.exp() * hi)
}

fn column_factor(base: f64, b: f64, int_power: Option<i32>) -> f64 {
    match int_power {
        Some(k) => base.powi(k),
        None => base.powf(-b),
    }
}

/// Integrate the simplex representation with the Beta-type weight absorbed
/// into per-axis Jacobi rules, leaving only the smooth column product to the
/// quadrature. Under the substitution xi1 = s, xi2 = t(1-s) the weight
/// factorizes as s^(a1-1)(1-s)^(c-a1-1) times t^(a2-1)(1-t)^(c-a1-a2-1),
/// Jacobian included.
fn integrate_simplex(args: &GeneralF1nArguments, int_power: &[Option<i32>], points: usize) -> f64 {
    let n = args.a.len();
    let mut acc = KahanSum::new();
    match n {
        1 => {
            let (nodes, weights) = gauss_jacobi_unit(points, args.a[0], args.c - args.a[0]);
            for (&xi, &wi) in nodes.iter().zip(&weights) {
                let f = column_factor(1.0 - xi * args.u[(0, 0)], args.b[0], int_power[0]);
                acc.add(wi * f);
            }
        }
        2 => {
            let (s_nodes, s_weights) = gauss_jacobi_unit(points, args.a[0], args.c - args.a[0]);
            let (t_nodes, t_weights) =
                gauss_jacobi_unit(points, args.a[1], args.c - args.a[0] - args.a[1]);
            for (&s, &ws) in s_nodes.iter().zip(&s_weights) {
                for (&t, &wt) in t_nodes.iter().zip(&t_weights) {
                    let xi1 = s;
                    let xi2 = t * (1.0 - s);
                    let mut f = 1.0;
                    for j in 0..2 {
                        let base = 1.0 - xi1 * args.u[(0, j)] - xi2 * args.u[(1, j)];
                        f *= column_factor(base, args.b[j], int_power[j]);
                    }
                    acc.add(ws * wt * f);
                }
            }
        }
        _ => unreachable!(),
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::MultiIndex;

    fn args(m: Vec<u32>, x: Vec<u32>, big_n: u32, u: DMatrix<f64>) -> F1nArguments {
        F1nArguments::new(
            MultiIndex::new(m, big_n).unwrap(),
            MultiIndex::new(x, big_n).unwrap(),
            big_n,
            u,
        )
        .unwrap()
    }

    /// Independent quadruple-loop oracle for the n = 2 series.
    fn brute_force_n2(m: &[u32; 2], x: &[u32; 2], big_n: u32, u: &DMatrix<f64>) -> f64 {
        let mut total = 0.0;
        let nn = big_n as usize;
        let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
        for k11 in 0..=nn {
            for k12 in 0..=nn {
                for k21 in 0..=nn {
                    for k22 in 0..=nn {
                        let tot = k11 + k12 + k21 + k22;
                        if tot > nn {
                            continue;
                        }
                        let r1 = k11 + k12;
                        let r2 = k21 + k22;
                        let c1 = k11 + k21;
                        let c2 = k12 + k22;
                        if r1 > m[0] as usize
                            || r2 > m[1] as usize
                            || c1 > x[0] as usize
                            || c2 > x[1] as usize
                        {
                            continue;
                        }
                        let num = pochhammer(-(m[0] as f64), r1)
                            * pochhammer(-(m[1] as f64), r2)
                            * pochhammer(-(x[0] as f64), c1)
                            * pochhammer(-(x[1] as f64), c2);
                        let den = fact(k11)
                            * fact(k12)
                            * fact(k21)
                            * fact(k22)
                            * pochhammer(-(big_n as f64), tot);
                        let upart = u[(0, 0)].powi(k11 as i32)
                            * u[(0, 1)].powi(k12 as i32)
                            * u[(1, 0)].powi(k21 as i32)
                            * u[(1, 1)].powi(k22 as i32);
                        total += num / den * upart;
                    }
                }
            }
        }
        total
    }

    #[test]
    fn zero_degree_is_one() {
        let u = DMatrix::from_row_slice(2, 2, &[0.3, -1.2, 2.0, 0.7]);
        let a = args(vec![0, 0], vec![2, 1], 4, u);
        assert_eq!(eval_f1n(&a).unwrap(), 1.0);
    }

    #[test]
    fn zero_matrix_is_one() {
        let u = DMatrix::zeros(2, 2);
        let a = args(vec![2, 1], vec![1, 1], 4, u);
        assert_eq!(eval_f1n(&a).unwrap(), 1.0);
    }

    #[test]
    fn one_variable_case_matches_hand_sum() {
        // 2F1(-1, -1; -2; 1.5) = 1 - 1.5/2 = 0.25
        let u = DMatrix::from_element(1, 1, 1.5);
        let a = args(vec![1], vec![1], 2, u);
        assert!((eval_f1n(&a).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn one_variable_case_matches_gauss_series() {
        // Sweep (m, x, N, u) at n = 1 against the direct 2F1 evaluator.
        for big_n in 1..=6u32 {
            for m in 0..=big_n {
                for x in 0..=big_n {
                    for &uval in &[-1.5, -0.25, 0.4, 1.0, 2.5] {
                        let u = DMatrix::from_element(1, 1, uval);
                        let a = args(vec![m], vec![x], big_n, u);
                        let f1n = eval_f1n(&a).unwrap();
                        let gauss =
                            eval_2f1_terminating(m, -(x as f64), -(big_n as f64), uval).unwrap();
                        assert!(
                            (f1n - gauss).abs() <= 1e-13 * f1n.abs().max(gauss.abs()).max(1.0),
                            "m={m} x={x} N={big_n} u={uval}: {f1n} vs {gauss}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn two_variable_case_matches_brute_force() {
        let u = DMatrix::from_row_slice(2, 2, &[1.25, -0.5, 0.75, 2.0]);
        for big_n in [3u32, 5] {
            for m1 in 0..=2 {
                for m2 in 0..=2 {
                    for x1 in 0..=2 {
                        for x2 in 0..=2 {
                            if m1 + m2 > big_n || x1 + x2 > big_n {
                                continue;
                            }
                            let a = args(vec![m1, m2], vec![x1, x2], big_n, u.clone());
                            let fast = eval_f1n(&a).unwrap();
                            let slow = brute_force_n2(&[m1, m2], &[x1, x2], big_n, &u);
                            assert!(
                                (fast - slow).abs() <= 1e-12 * fast.abs().max(slow.abs()).max(1.0),
                                "m=({m1},{m2}) x=({x1},{x2}) N={big_n}: {fast} vs {slow}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn gauss_series_edge_cases() {
        assert_eq!(eval_2f1_terminating(0, 3.7, -2.0, 0.9).unwrap(), 1.0);
        // 1 + z a (-1)/c at deg = 1
        let v = eval_2f1_terminating(1, -1.0, -2.0, 1.5).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        // (c)_k vanishes before termination
        assert!(eval_2f1_terminating(3, 1.0, -2.0, 0.5).is_err());
    }

    #[test]
    fn euler_transform_small_cases() {
        // Classical one-variable check frozen by hand:
        // F(-1,-1;-2;1.5) = 0.25 and the reflected side gives (1/2) * F(-1,-1;1;-0.5) = 0.25.
        let u = DMatrix::from_element(1, 1, 1.5);
        let a = args(vec![1], vec![1], 2, u);
        assert!(check_euler_transform(&a).unwrap() < 1e-14);

        // m = 0 makes both sides 1.
        let u = DMatrix::from_row_slice(2, 2, &[0.4, 1.7, -0.3, 0.9]);
        let a = args(vec![0, 0], vec![1, 2], 6, u);
        assert_eq!(check_euler_transform(&a).unwrap(), 0.0);

        // Oversized sums are rejected, not mis-evaluated.
        let u = DMatrix::from_row_slice(2, 2, &[0.4, 1.7, -0.3, 0.9]);
        let a = args(vec![2, 1], vec![2, 2], 6, u);
        assert!(check_euler_transform(&a).is_err());
    }

    #[test]
    fn pfaff_transform_small_cases() {
        // n = 1 reduces to the classical reflection z -> z/(z-1).
        let u = DMatrix::from_element(1, 1, 1.5);
        let a = args(vec![1], vec![1], 2, u);
        assert!(check_pfaff_transform(&a).unwrap() < 1e-14);

        // m = 0: both sides 1.
        let u = DMatrix::from_row_slice(2, 2, &[0.4, 1.7, -0.3, 0.9]);
        let a = args(vec![0, 0], vec![2, 1], 5, u);
        assert_eq!(check_pfaff_transform(&a).unwrap(), 0.0);

        // u_in = 1 is rejected.
        let u = DMatrix::from_row_slice(2, 2, &[0.4, 1.0, -0.3, 0.9]);
        let a = args(vec![1, 1], vec![2, 1], 5, u);
        assert!(check_pfaff_transform(&a).is_err());
    }

    #[test]
    fn quadrature_constant_integrand() {
        // a=1, b=0, c=2: the integrand is the Beta(1,1) weight, so the value is 1.
        let qargs = GeneralF1nArguments {
            a: vec![1.0],
            b: vec![0.0],
            c: 2.0,
            u: DMatrix::from_element(1, 1, 0.7),
        };
        let v = eval_f1n_quadrature(&qargs, &QuadratureRule::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn quadrature_matches_two_term_series() {
        // a=1, b=-1, c=3, u=0.5: series is 1 - (1*1/3)*0.5 = 5/6.
        let qargs = GeneralF1nArguments {
            a: vec![1.0],
            b: vec![-1.0],
            c: 3.0,
            u: DMatrix::from_element(1, 1, 0.5),
        };
        let v = eval_f1n_quadrature(&qargs, &QuadratureRule::default()).unwrap();
        assert!((v - 5.0 / 6.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn quadrature_reports_unconverged_rules() {
        // A degree-24 integrand against a 4-point rule: the refinement
        // estimate must trip instead of returning a bad value silently.
        let qargs = GeneralF1nArguments {
            a: vec![1.5],
            b: vec![-24.0],
            c: 4.0,
            u: DMatrix::from_element(1, 1, 0.95),
        };
        let rule = QuadratureRule {
            points: 4,
            max_error: 1e-6,
        };
        assert!(matches!(
            eval_f1n_quadrature(&qargs, &rule),
            Err(CbtError::Quadrature { .. })
        ));
        // the same integrand converges at the default order
        let v = eval_f1n_quadrature(&qargs, &QuadratureRule::default()).unwrap();
        let (series, tail) =
            eval_f1n_general_with_tail(&[1.5], &[-24.0], 4.0, &qargs.u, 40).unwrap();
        assert_eq!(tail, 0.0);
        assert!(
            (v - series).abs() < 1e-9 * series.abs().max(1.0),
            "{v} vs {series}"
        );
    }

    #[test]
    fn quadrature_rejects_inadmissible_parameters() {
        let qargs = GeneralF1nArguments {
            a: vec![-1.0],
            b: vec![0.0],
            c: 2.0,
            u: DMatrix::from_element(1, 1, 0.5),
        };
        assert!(eval_f1n_quadrature(&qargs, &QuadratureRule::default()).is_err());
        let qargs = GeneralF1nArguments {
            a: vec![1.0],
            b: vec![0.5],
            c: 3.0,
            u: DMatrix::from_element(1, 1, 1.5),
        };
        assert!(eval_f1n_quadrature(&qargs, &QuadratureRule::default()).is_err());
    }

    #[test]
    fn general_series_tail_is_small_for_contracting_arguments() {
        let u = DMatrix::from_row_slice(2, 2, &[0.3, -0.2, 0.1, 0.25]);
        let (v60, tail) =
            eval_f1n_general_with_tail(&[0.8, 1.3], &[0.5, -0.7], 4.2, &u, 60).unwrap();
        let (v50, _) = eval_f1n_general_with_tail(&[0.8, 1.3], &[0.5, -0.7], 4.2, &u, 50).unwrap();
        assert!(tail < 1e-12);
        assert!((v60 - v50).abs() < 1e-12);
    }
}
