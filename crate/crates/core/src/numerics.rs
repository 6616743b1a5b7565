//! Small numeric helpers: compensated summation and Gaussian quadrature rules.

/// Neumaier-compensated accumulator.
///
/// Tracks the low-order bits lost by each addition so long alternating sums
/// (hypergeometric terms, Gram sums) stay accurate to a few ulps.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }

    pub fn sum_iter<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
        let mut acc = Self::new();
        for v in iter {
            acc.add(v);
        }
        acc.value()
    }
}

/// Nodes and weights of the `points`-point Gauss-Legendre rule on [0, 1].
///
/// Roots of the Legendre polynomial are found by Newton iteration from the
/// Chebyshev-angle initial guess; weights from the standard derivative
/// formula. Accurate to machine precision for the orders used here (<= 64).
pub fn gauss_legendre_unit(points: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(points >= 1);
    let n = points;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Initial guess for the i-th root of P_n on [-1, 1].
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n and P_n' by the three-term recurrence.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map [-1, 1] -> [0, 1]; the rule is symmetric.
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 0.5 * w;
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Nodes and weights integrating x^(gamma-1) (1-x)^(delta-1) f(x) on [0, 1]:
/// returns (nodes, weights) with sum_i w_i f(x_i) ~ integral, the weight
/// function folded into the w_i.
///
/// Golub-Welsch on the monic Jacobi recurrence: nodes are eigenvalues of the
/// symmetric tridiagonal recurrence matrix, weights come from the first
/// eigenvector components scaled by the zeroth moment. Exact for polynomial
/// f of degree <= 2 points - 1, spectrally accurate for smooth f, which is
/// what makes the integral-representation oracle reliable for fractional
/// exponents.
pub fn gauss_jacobi_unit(points: usize, gamma_exp: f64, delta_exp: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(points >= 1);
    assert!(gamma_exp > 0.0 && delta_exp > 0.0);
    // weight on [-1, 1]: (1-x)^A (1+x)^B
    let a = delta_exp - 1.0;
    let b = gamma_exp - 1.0;
    let ab = a + b;

    let ln_gamma = statrs::function::gamma::ln_gamma;
    // zeroth moment of the [-1, 1] weight
    let mu0 = (ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(a + 1.0) + ln_gamma(b + 1.0)
        - ln_gamma(ab + 2.0);
    let mu0 = mu0.exp();

    let mut diag = vec![0.0; points];
    let mut off = vec![0.0; points.saturating_sub(1)];
    diag[0] = (b - a) / (ab + 2.0);
    for k in 1..points {
        let kf = k as f64;
        let nab = 2.0 * kf + ab;
        diag[k] = (b * b - a * a) / (nab * (nab + 2.0));
        let beta_k = if k == 1 {
            4.0 * (a + 1.0) * (b + 1.0) / ((ab + 2.0) * (ab + 2.0) * (ab + 3.0))
        } else {
            4.0 * kf * (kf + a) * (kf + b) * (kf + ab) / (nab * nab * (nab + 1.0) * (nab - 1.0))
        };
        off[k - 1] = beta_k.sqrt();
    }

    let mut jacobi = nalgebra::DMatrix::zeros(points, points);
    for k in 0..points {
        jacobi[(k, k)] = diag[k];
        if k + 1 < points {
            jacobi[(k, k + 1)] = off[k];
            jacobi[(k + 1, k)] = off[k];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..points)
        .map(|k| {
            let x = eig.eigenvalues[k];
            let q0 = eig.eigenvectors[(0, k)];
            (x, mu0 * q0 * q0)
        })
        .collect();
    pairs.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());

    // map [-1, 1] -> [0, 1]; the 2^-(A+B+1) measure factor rescales weights
    let scale = (-(ab + 1.0) * std::f64::consts::LN_2).exp();
    let nodes = pairs.iter().map(|&(x, _)| 0.5 * (1.0 + x)).collect();
    let weights = pairs.iter().map(|&(_, w)| w * scale).collect();
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::ln_gamma;

    #[test]
    fn kahan_recovers_cancellation() {
        // Naive summation of these loses the small term entirely.
        let vals = [1e16, 1.0, -1e16];
        assert_eq!(KahanSum::sum_iter(vals.iter().copied()), 1.0);
    }

    #[test]
    fn gauss_legendre_integrates_monomials_exactly() {
        // An n-point rule is exact for degree <= 2n-1.
        for &n in &[4usize, 16, 32, 64] {
            let (x, w) = gauss_legendre_unit(n);
            for deg in 0..(2 * n).min(40) {
                let quad: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(&xi, &wi)| wi * xi.powi(deg as i32))
                    .sum();
                let exact = 1.0 / (deg as f64 + 1.0);
                assert!(
                    (quad - exact).abs() < 1e-13,
                    "n={n} deg={deg}: {quad} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn gauss_legendre_weights_sum_to_one() {
        let (_, w) = gauss_legendre_unit(64);
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_jacobi_reduces_to_legendre() {
        let (xj, wj) = gauss_jacobi_unit(16, 1.0, 1.0);
        let (xl, wl) = gauss_legendre_unit(16);
        for k in 0..16 {
            assert!((xj[k] - xl[k]).abs() < 1e-12);
            assert!((wj[k] - wl[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn gauss_jacobi_integrates_beta_moments_exactly() {
        // integral of x^(g-1) (1-x)^(d-1) x^k = Beta(g+k, d)
        for &(g, d) in &[(1.3f64, 2.7f64), (2.0, 1.0), (1.01, 1.99), (2.5, 2.5)] {
            let (x, w) = gauss_jacobi_unit(24, g, d);
            for k in 0..10 {
                let quad: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(k)).sum();
                let exact =
                    (ln_gamma(g + k as f64) + ln_gamma(d) - ln_gamma(g + d + k as f64)).exp();
                assert!(
                    (quad - exact).abs() < 1e-13 * exact.abs().max(1.0),
                    "g={g} d={d} k={k}: {quad} vs {exact}"
                );
            }
        }
    }
}
