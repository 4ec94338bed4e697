//! Closed-form feasibility and cardinality bounds for `(m, b_rel)`.
//!
//! Exponents are rates `E` with `log N ~ E d`, always in nats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PairedConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionLabel {
    pub feasible: bool,
    pub exponential_exists: bool,
    pub modality_gap_guaranteed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentBounds {
    pub lower_nats: f64,
    pub upper_nats: f64,
    pub alpha_star: f64,
}

/// A violated margin constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarginConstraint {
    /// `m + b_rel <= 1`
    MarginPlusBias,
    /// `(3 - 4/N) m <= 1 + b_rel`
    FiniteN,
    /// `3m <= 1 + b_rel`
    Asymptotic,
}

pub fn nats_to_bits(x: f64) -> f64 {
    x / std::f64::consts::LN_2
}

pub fn bits_to_nats(x: f64) -> f64 {
    x * std::f64::consts::LN_2
}

/// Code parameter `(1 + b_rel - 3m) / (1 + b_rel + m)`.
pub fn alpha_star(m: f64, b_rel: f64) -> f64 {
    (1.0 + b_rel - 3.0 * m) / (1.0 + b_rel + m)
}

/// Checks the necessary conditions on `(m, b_rel)`; with `n` the finite-size
/// form of the second inequality is used.
pub fn margin_feasibility(m: f64, b_rel: f64, n: Option<usize>) -> (bool, Vec<MarginConstraint>) {
    let mut violated = Vec::new();
    if m + b_rel > 1.0 {
        violated.push(MarginConstraint::MarginPlusBias);
    }
    match n {
        Some(n) if n > 0 => {
            if (3.0 - 4.0 / n as f64) * m > 1.0 + b_rel {
                violated.push(MarginConstraint::FiniteN);
            }
        }
        _ => {
            if 3.0 * m > 1.0 + b_rel {
                violated.push(MarginConstraint::Asymptotic);
            }
        }
    }
    (violated.is_empty(), violated)
}

fn strict_interior(m: f64, b_rel: f64) -> bool {
    m > 0.0 && b_rel.abs() <= 1.0 && m + b_rel < 1.0 && 3.0 * m < 1.0 + b_rel
}

fn infeasible(m: f64, b_rel: f64, reason: &str) -> Error {
    Error::InfeasibleParams {
        margin: m,
        rel_bias: b_rel,
        reason: reason.into(),
    }
}

/// Growth rate achieved by the lifted spherical-code construction:
/// `-ln(1 - alpha^2) / 2`.
pub fn lower_exponent(m: f64, b_rel: f64) -> Result<f64> {
    if !strict_interior(m, b_rel) {
        return Err(infeasible(m, b_rel, "need m > 0, m + b_rel < 1 and 3m < 1 + b_rel"));
    }
    let a = alpha_star(m, b_rel);
    Ok(-0.5 * (1.0 - a * a).ln())
}

/// Growth-rate ceiling `-ln(1 - alpha_star) / 2 = -ln(4m / (1 + b_rel + m)) / 2`.
pub fn upper_exponent(m: f64, b_rel: f64) -> Result<f64> {
    if !(m > 0.0 && b_rel.abs() <= 1.0 && m + b_rel <= 1.0 && 3.0 * m <= 1.0 + b_rel) {
        return Err(infeasible(m, b_rel, "need m > 0, m + b_rel <= 1 and 3m <= 1 + b_rel"));
    }
    let a = alpha_star(m, b_rel).max(0.0);
    Ok(-0.5 * (1.0 - a).ln())
}

pub fn exponent_bounds(m: f64, b_rel: f64) -> Result<ExponentBounds> {
    Ok(ExponentBounds {
        lower_nats: lower_exponent(m, b_rel)?,
        upper_nats: upper_exponent(m, b_rel)?,
        alpha_star: alpha_star(m, b_rel),
    })
}

/// Boundary points are feasible but not exponential.
pub fn classify_region(m: f64, b_rel: f64) -> RegionLabel {
    let feasible = m >= 0.0 && b_rel.abs() <= 1.0 && margin_feasibility(m, b_rel, None).0;
    let exponential_exists = feasible && strict_interior(m, b_rel);
    RegionLabel {
        feasible,
        exponential_exists,
        modality_gap_guaranteed: exponential_exists && m > b_rel.abs(),
    }
}

/// Both sides of
/// `(1/N^2) sum_{i != j} <U_i, V_j> >= ((N - 2) / (2 N^2)) sum_i <U_i, V_i> - 1/2`.
pub fn averaged_gram_inequality_check(pair: &PairedConfig) -> (f64, f64, bool) {
    let n = pair.count();
    let nf = n as f64;
    let d = pair.dim();
    let mut su = vec![0.0; d];
    let mut sv = vec![0.0; d];
    let mut diag = 0.0;
    for i in 0..n {
        su.iter_mut().zip(pair.u.row(i)).for_each(|(a, b)| *a += b);
        sv.iter_mut().zip(pair.v.row(i)).for_each(|(a, b)| *a += b);
        diag += pair.inner(i, i);
    }
    let total: f64 = su.iter().zip(&sv).map(|(a, b)| a * b).sum();
    let lhs = (total - diag) / (nf * nf);
    let rhs = (nf - 2.0) / (2.0 * nf * nf) * diag - 0.5;
    (lhs, rhs, lhs >= rhs - 1e-12)
}
