//! Multi-index arithmetic, simplex enumeration, and elementary probability
//! primitives used by every other module.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{CbtError, Result};

/// Default cap on the number of enumerated states.
pub const DEFAULT_STATE_LIMIT: u128 = 200_000;

/// An ordered tuple of nonnegative integers with a bounded sum.
///
/// Serves both as a chain state (success counts per category) and as a
/// polynomial degree (one degree per variable).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex {
    entries: Vec<u32>,
    cap: u32,
}

impl MultiIndex {
    /// Build a multi-index, checking the sum bound.
    pub fn new(entries: Vec<u32>, cap: u32) -> Result<Self> {
        let total: u64 = entries.iter().map(|&e| e as u64).sum();
        if total > cap as u64 {
            return Err(CbtError::domain(format!(
                "multi-index sum {total} exceeds cap {cap}"
            )));
        }
        Ok(MultiIndex { entries, cap })
    }

    pub fn zero(n: usize, cap: u32) -> Self {
        MultiIndex {
            entries: vec![0; n],
            cap,
        }
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn get(&self, i: usize) -> u32 {
        self.entries[i]
    }

    pub fn sum(&self) -> u32 {
        self.entries.iter().sum()
    }
}

impl std::fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// The complete list of multi-indices in `n` variables with sum <= `N`,
/// in graded colexicographic order, with O(1) inverse lookup.
///
/// Graded colex: ascending total sum; ties broken by the last coordinate at
/// which two tuples differ (smaller entry first). The order is fixed so that
/// kernels, Gram matrices, and reports are reproducible byte for byte.
#[derive(Debug, Clone)]
pub struct SimplexEnumeration {
    n: usize,
    budget: u32,
    states: Vec<MultiIndex>,
    lookup: HashMap<Vec<u32>, usize>,
}

impl SimplexEnumeration {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[MultiIndex] {
        &self.states
    }

    pub fn state(&self, idx: usize) -> &MultiIndex {
        &self.states[idx]
    }

    /// Ordinal of a state, if it belongs to the simplex.
    pub fn index_of(&self, entries: &[u32]) -> Option<usize> {
        self.lookup.get(entries).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &MultiIndex)> {
        self.states.iter().enumerate()
    }
}

/// Enumerate all multi-indices with `n >= 1` entries and sum <= `N`.
///
/// Fails with `Capacity` if the state count C(N+n, n) exceeds `limit`
/// (use [`DEFAULT_STATE_LIMIT`] unless there is a reason not to).
pub fn enumerate_simplex(n: usize, budget: u32, limit: u128) -> Result<SimplexEnumeration> {
    if n == 0 {
        return Err(CbtError::domain("dimension must be at least 1"));
    }
    let count = simplex_cardinality(n, budget)?;
    if count > limit {
        return Err(CbtError::Capacity {
            states: count,
            limit,
        });
    }
    let mut states = Vec::with_capacity(count as usize);
    let mut current = vec![0u32; n];
    for total in 0..=budget {
        push_compositions_colex(&mut states, &mut current, n, total, budget);
    }
    let lookup = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.entries.clone(), i))
        .collect();
    Ok(SimplexEnumeration {
        n,
        budget,
        states,
        lookup,
    })
}

/// Compositions of `total` into the first `pos` coordinates, colex ascending:
/// the last coordinate varies slowest and takes small values first.
fn push_compositions_colex(
    out: &mut Vec<MultiIndex>,
    current: &mut Vec<u32>,
    pos: usize,
    total: u32,
    cap: u32,
) {
    if pos == 1 {
        current[0] = total;
        out.push(MultiIndex {
            entries: current.clone(),
            cap,
        });
        return;
    }
    for last in 0..=total {
        current[pos - 1] = last;
        push_compositions_colex(out, current, pos - 1, total - last, cap);
    }
    current[pos - 1] = 0;
}

/// C(N+n, n) as an exact integer.
pub fn simplex_cardinality(n: usize, budget: u32) -> Result<u128> {
    binomial_u128(budget as u128 + n as u128, n as u128)
}

/// Exact binomial coefficient in 128-bit arithmetic.
pub fn binomial_u128(n: u128, k: u128) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 1..=k {
        // r * (n-k+i) is divisible by i because r holds C(n-k+i-1, i-1) * ...
        r = r
            .checked_mul(n - k + i)
            .ok_or(CbtError::Overflow("binomial coefficient"))?
            / i;
    }
    Ok(r)
}

/// Rising factorial a(a+1)...(a+k-1); the empty product is 1.
///
/// Returns exactly 0 when `a` is a nonpositive integer with -a < k, because
/// one factor is exactly zero.
pub fn pochhammer(a: f64, k: usize) -> f64 {
    let mut p = 1.0;
    for j in 0..k {
        p *= a + j as f64;
    }
    p
}

/// N! / (parts_1! ... parts_n! (N - sum)!) as an exact integer.
///
/// The implicit last part is N - sum(parts). Overflow of the 128-bit
/// intermediate is reported, never wrapped.
pub fn multinomial_coefficient(n_total: u32, parts: &[u32]) -> Result<u128> {
    let sum: u64 = parts.iter().map(|&p| p as u64).sum();
    if sum > n_total as u64 {
        return Err(CbtError::domain(format!(
            "parts sum {sum} exceeds total {n_total}"
        )));
    }
    let mut remaining = n_total as u128;
    let mut result: u128 = 1;
    for &p in parts {
        let b = binomial_u128(remaining, p as u128)?;
        result = result
            .checked_mul(b)
            .ok_or(CbtError::Overflow("multinomial coefficient"))?;
        remaining -= p as u128;
    }
    Ok(result)
}

/// Same as [`multinomial_coefficient`] but converted to floating point at the
/// boundary (exact integers internally).
pub fn multinomial_coefficient_f64(n_total: u32, parts: &[u32]) -> Result<f64> {
    Ok(multinomial_coefficient(n_total, parts)? as f64)
}

/// Binomial point mass C(n,k) p^k (1-p)^(n-k); zero outside 0 <= k <= n.
pub fn binomial_pmf(k: i64, n: i64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(CbtError::domain(format!("probability {p} outside [0,1]")));
    }
    if k < 0 || k > n || n < 0 {
        return Ok(0.0);
    }
    let coeff = binomial_u128(n as u128, k as u128)? as f64;
    Ok(coeff * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32))
}

/// Multinomial point mass over n categories plus an implicit failure class:
/// multinomial_coefficient(N, x) * prod_k eta_k^{x_k} * (1 - sum eta)^(N - sum x).
pub fn multinomial_pmf(x: &[u32], n_total: u32, eta: &[f64]) -> Result<f64> {
    if x.len() != eta.len() {
        return Err(CbtError::domain(format!(
            "x has {} entries but eta has {}",
            x.len(),
            eta.len()
        )));
    }
    let eta_sum: f64 = eta.iter().sum();
    if eta.iter().any(|&e| e <= 0.0) || eta_sum >= 1.0 {
        return Err(CbtError::domain(
            "eta entries must be positive with sum < 1",
        ));
    }
    let x_sum: u64 = x.iter().map(|&v| v as u64).sum();
    if x_sum > n_total as u64 {
        return Err(CbtError::domain(format!(
            "state sum {x_sum} exceeds budget {n_total}"
        )));
    }
    let coeff = multinomial_coefficient_f64(n_total, x)?;
    let mut value = coeff;
    for (xi, ei) in x.iter().zip(eta) {
        value *= ei.powi(*xi as i32);
    }
    value *= (1.0 - eta_sum).powi((n_total as u64 - x_sum) as i32);
    Ok(value)
}
