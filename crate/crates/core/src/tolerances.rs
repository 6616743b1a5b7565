//! Centralized numeric tolerances.
//!
//! Every threshold used by solvers, invariant checks, and reports lives here
//! so that a run can be tightened or relaxed in one place (the CLI exposes
//! `--tol NAME=VALUE` for this).

use serde::{Deserialize, Serialize};

use crate::error::{CbtError, Result};

/// All numeric thresholds used by the library.
///
/// Defaults reflect what compensated double-precision summation achieves at
/// desk scale (n <= 3, N <= 8) with comfortable margin.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Self-consistency of the eta/D relations after computing eta from (alpha, beta).
    pub eta_consistency: f64,
    /// Polished polynomial-root residual, relative to the coefficient scale.
    pub root_residual: f64,
    /// Largest imaginary part accepted for a root before reporting it as complex.
    pub root_imag: f64,
    /// Smallest gap between two roots before the family is declared degenerate.
    pub root_gap: f64,
    /// Per-entry residual of the eigenfunction condition linking u, omega, alpha.
    pub eigen_link: f64,
    /// Row sums sum_j eta_j u_ij = 1.
    pub row_sum: f64,
    /// Column sums sum_j etabar_j u_ji = 1.
    pub col_sum: f64,
    /// Cross products sum_j eta_j u_rj u_sj = 1 (r != s).
    pub cross_product: f64,
    /// Pass level for the aggregated orthogonality-condition report.
    pub condition_pass: f64,
    /// U-matrix ratio relations among the n^2 polynomial parameters.
    pub geometry: f64,
    /// |sum eta - sum etabar|.
    pub eta_sum_match: f64,
    /// Condition-number limit before a linear solve is declared singular.
    pub condition_limit: f64,
    /// Kernel column-stochasticity residual.
    pub column_stochastic: f64,
    /// Stationarity residual of K phi0 = phi0.
    pub stationarity: f64,
    /// Detailed-balance residual.
    pub detailed_balance: f64,
    /// Relative eigenpair residual.
    pub eigen_residual: f64,
    /// Entrywise spectral-reconstruction residual.
    pub spectral_reconstruct: f64,
    /// Gram off-diagonal relative to the diagonal scale, n <= 2.
    pub gram_offdiag: f64,
    /// Gram off-diagonal relative to the diagonal scale, n = 3.
    pub gram_offdiag_n3: f64,
    /// Gram diagonal vs the product closed form, relative.
    pub gram_diag: f64,
    /// Gram symmetry residual.
    pub gram_symmetry: f64,
    /// Transformation-identity relative residuals.
    pub transform: f64,
    /// Quadrature vs series agreement, and quadrature refinement estimate.
    pub quadrature: f64,
    /// Generating-function residual.
    pub generating_fn: f64,
    /// One-variable closed-form agreement.
    pub closed_form_n1: f64,
    /// Chi-square significance level for simulation goodness-of-fit.
    pub chi2_significance: f64,
    /// Relative error allowed for the autocorrelation decay-rate estimate.
    pub decay_rate_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eta_consistency: 1e-12,
            root_residual: 1e-12,
            root_imag: 1e-9,
            root_gap: 1e-8,
            eigen_link: 1e-10,
            row_sum: 1e-10,
            col_sum: 1e-10,
            cross_product: 1e-9,
            condition_pass: 1e-9,
            geometry: 1e-9,
            eta_sum_match: 1e-10,
            condition_limit: 1e12,
            column_stochastic: 1e-12,
            stationarity: 1e-11,
            detailed_balance: 1e-12,
            eigen_residual: 1e-9,
            spectral_reconstruct: 1e-8,
            gram_offdiag: 1e-9,
            gram_offdiag_n3: 1e-8,
            gram_diag: 1e-9,
            gram_symmetry: 1e-12,
            transform: 1e-10,
            quadrature: 1e-6,
            generating_fn: 1e-10,
            closed_form_n1: 1e-12,
            chi2_significance: 1e-3,
            decay_rate_rel: 0.05,
        }
    }
}

impl Tolerances {
    /// Set a tolerance by its field name (used for `--tol NAME=VALUE`).
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value > 0.0) {
            return Err(CbtError::domain(format!(
                "tolerance {name} must be positive and finite, got {value}"
            )));
        }
        match name {
            "eta_consistency" => self.eta_consistency = value,
            "root_residual" => self.root_residual = value,
            "root_imag" => self.root_imag = value,
            "root_gap" => self.root_gap = value,
            "eigen_link" => self.eigen_link = value,
            "row_sum" => self.row_sum = value,
            "col_sum" => self.col_sum = value,
            "cross_product" => self.cross_product = value,
            "condition_pass" => self.condition_pass = value,
            "geometry" => self.geometry = value,
            "eta_sum_match" => self.eta_sum_match = value,
            "condition_limit" => self.condition_limit = value,
            "column_stochastic" => self.column_stochastic = value,
            "stationarity" => self.stationarity = value,
            "detailed_balance" => self.detailed_balance = value,
            "eigen_residual" => self.eigen_residual = value,
            "spectral_reconstruct" => self.spectral_reconstruct = value,
            "gram_offdiag" => self.gram_offdiag = value,
            "gram_offdiag_n3" => self.gram_offdiag_n3 = value,
            "gram_diag" => self.gram_diag = value,
            "gram_symmetry" => self.gram_symmetry = value,
            "transform" => self.transform = value,
            "quadrature" => self.quadrature = value,
            "generating_fn" => self.generating_fn = value,
            "closed_form_n1" => self.closed_form_n1 = value,
            "chi2_significance" => self.chi2_significance = value,
            "decay_rate_rel" => self.decay_rate_rel = value,
            other => {
                return Err(CbtError::domain(format!("unknown tolerance name: {other}")));
            }
        }
        Ok(())
    }
}
