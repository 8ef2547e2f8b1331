//! Two-species Lotka–Volterra competition with extraction of species 2:
//!
//! ```text
//! x₁' = x₁(a − b₁x₁ − c₁x₂ − D₁)
//! x₂' = x₂(a − c₂x₁ − b₂x₂ − qD₂) − (1 − q)k x₂ᵖ
//! ```
//!
//! With `u = 1/x₂` the second equation becomes
//! `u' = c₂x₁u + b₂ − (a − qD₂)u + (1 − q)k u^(2−p)`, which dominates the
//! scalar equation `u' = C₁u^l − C₂u` (`C₁ = (1−q)k`, `C₂ = a − qD₂`,
//! `l = 2 − p`). That equation blows up from `u(0) > (C₂/C₁)^(1/(l−1))`, so
//! `x₂` vanishes in finite time from any `x₂(0)` below the reciprocal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{integrate, IntegrationError, IntegrationOptions, Trajectory, VectorField};
use crate::model::NEGATIVE_TOLERANCE;

/// Exponents `1/(1 − p)` above this make the threshold numerically fragile.
const STEEP_EXPONENT: f64 = 50.0;

/// Allowed relative gap between `x₁(t_end)` and `(a − D₁)/b₁`.
pub const EXCLUSION_LIMIT_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReductionError {
    #[error("invalid parameter {name} = {value}: requires {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("{name} = {value} is negative")]
    NegativeState { name: &'static str, value: f64 },
    #[error("u = {0} must be positive")]
    NonPositiveU(f64),
    #[error("extinction threshold needs 0 < p < 1 and q < 1 (got p = {p}, q = {q})")]
    NoSublinearExtraction { p: f64, q: f64 },
    #[error("x2 did not go extinct by t = {}", .trajectory.final_time())]
    NoExtinction { trajectory: Box<Trajectory> },
    #[error("x1(t_end) = {observed} differs from (a − D1)/b1 = {expected} by more than 1%")]
    LimitMismatch {
        observed: f64,
        expected: f64,
        trajectory: Box<Trajectory>,
    },
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LVParams {
    /// Common intrinsic rate `a`.
    pub intrinsic_rate: f64,
    /// `[b₁, b₂]`.
    pub self_limitation: [f64; 2],
    /// `[c₁, c₂]`: effect of species 2 on 1, and of species 1 on 2.
    pub cross_limitation: [f64; 2],
    /// `[D₁, D₂]`.
    pub removal: [f64; 2],
    pub retained_fraction: f64,
    pub extraction_rate: f64,
    pub extraction_exponent: f64,
}

fn positive(name: &'static str, value: f64) -> Result<(), ReductionError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ReductionError::InvalidParameter {
            name,
            value,
            constraint: "a finite value > 0",
        })
    }
}

impl LVParams {
    pub fn validate(&self) -> Result<(), ReductionError> {
        positive("a", self.intrinsic_rate)?;
        positive("b1", self.self_limitation[0])?;
        positive("b2", self.self_limitation[1])?;
        positive("c1", self.cross_limitation[0])?;
        positive("c2", self.cross_limitation[1])?;
        positive("D1", self.removal[0])?;
        positive("D2", self.removal[1])?;
        positive("k", self.extraction_rate)?;
        let q = self.retained_fraction;
        if !(0.0..=1.0).contains(&q) {
            return Err(ReductionError::InvalidParameter {
                name: "q",
                value: q,
                constraint: "0 ≤ q ≤ 1",
            });
        }
        let p = self.extraction_exponent;
        if !(p > 0.0 && p <= 1.0) {
            return Err(ReductionError::InvalidParameter {
                name: "p",
                value: p,
                constraint: "0 < p ≤ 1",
            });
        }
        if self.intrinsic_rate <= self.removal[0] {
            return Err(ReductionError::InvalidParameter {
                name: "a",
                value: self.intrinsic_rate,
                constraint: "a > D1",
            });
        }
        Ok(())
    }

    /// `(a − D₁)/b₁`, the density species 1 settles at alone.
    pub fn exclusion_limit(&self) -> f64 {
        (self.intrinsic_rate - self.removal[0]) / self.self_limitation[0]
    }

    fn extraction(&self, x2: f64) -> f64 {
        if x2 <= NEGATIVE_TOLERANCE {
            return 0.0;
        }
        let coefficient = (1.0 - self.retained_fraction) * self.extraction_rate;
        if coefficient == 0.0 {
            0.0
        } else {
            coefficient * x2.powf(self.extraction_exponent)
        }
    }

    fn rhs_unchecked(&self, x1: f64, x2: f64) -> (f64, f64) {
        let a = self.intrinsic_rate;
        let [b1, b2] = self.self_limitation;
        let [c1, c2] = self.cross_limitation;
        let [d1, d2] = self.removal;
        let q = self.retained_fraction;
        (
            x1 * (a - b1 * x1 - c1 * x2 - d1),
            x2 * (a - c2 * x1 - b2 * x2 - q * d2) - self.extraction(x2),
        )
    }
}

impl VectorField for LVParams {
    fn dimension(&self) -> usize {
        2
    }

    fn population_count(&self) -> usize {
        2
    }

    fn evaluate(&self, state: &[f64], derivative: &mut [f64]) {
        let (d1, d2) = self.rhs_unchecked(state[0].max(0.0), state[1].max(0.0));
        derivative[0] = d1;
        derivative[1] = d2;
    }
}

fn clamp_density(name: &'static str, value: f64) -> Result<f64, ReductionError> {
    if value < -NEGATIVE_TOLERANCE || value.is_nan() {
        Err(ReductionError::NegativeState { name, value })
    } else {
        Ok(value.max(0.0))
    }
}

pub fn lv_rhs(params: &LVParams, x1: f64, x2: f64) -> Result<(f64, f64), ReductionError> {
    params.validate()?;
    let x1 = clamp_density("x1", x1)?;
    let x2 = clamp_density("x2", x2)?;
    Ok(params.rhs_unchecked(x1, x2))
}

/// `du/dt` for `u = 1/x₂`.
pub fn u_transform_rhs(params: &LVParams, x1: f64, u: f64) -> Result<f64, ReductionError> {
    params.validate()?;
    let x1 = clamp_density("x1", x1)?;
    if !(u > 0.0) {
        return Err(ReductionError::NonPositiveU(u));
    }
    let a = params.intrinsic_rate;
    let b2 = params.self_limitation[1];
    let c2 = params.cross_limitation[1];
    let q = params.retained_fraction;
    let linear = a - q * params.removal[1];
    let coefficient = (1.0 - q) * params.extraction_rate;
    Ok(c2 * x1 * u + b2 - linear * u + coefficient * u.powf(2.0 - params.extraction_exponent))
}

/// Sufficient condition for finite-time extinction of species 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionCertificate {
    /// Every `x₂(0)` strictly below this dies out in finite time. Infinite when
    /// `C₂ ≤ 0`.
    #[serde(with = "crate::float_repr")]
    pub threshold: f64,
    /// `1/threshold`, the matching bound on `u(0)`.
    #[serde(with = "crate::float_repr")]
    pub transformed_threshold: f64,
    /// `(1 − q)k`.
    pub c1: f64,
    /// `a − qD₂`.
    pub c2: f64,
    /// `2 − p`.
    pub l: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn extinction_threshold(params: &LVParams) -> Result<ExtinctionCertificate, ReductionError> {
    params.validate()?;
    let p = params.extraction_exponent;
    let q = params.retained_fraction;
    if p >= 1.0 || q >= 1.0 {
        return Err(ReductionError::NoSublinearExtraction { p, q });
    }
    let c1 = (1.0 - q) * params.extraction_rate;
    let c2 = params.intrinsic_rate - q * params.removal[1];
    let exponent = 1.0 / (1.0 - p);
    let (threshold, transformed_threshold) = if c2 > 0.0 {
        ((c1 / c2).powf(exponent), (c2 / c1).powf(exponent))
    } else {
        (f64::INFINITY, 0.0)
    };
    let note = (exponent > STEEP_EXPONENT).then(|| {
        format!(
            "exponent 1/(1 − p) = {exponent:.3e}: the threshold tends to 0 or ∞ as p → 1 depending on whether C1 < C2"
        )
    });
    Ok(ExtinctionCertificate {
        threshold,
        transformed_threshold,
        c1,
        c2,
        l: 2.0 - p,
        note,
    })
}

/// Outcome of a run in which species 2 went extinct and species 1 approached
/// its single-species level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub extinction_time: f64,
    pub final_x1: f64,
    pub expected_limit: f64,
    pub relative_error: f64,
    pub trajectory: Trajectory,
}

pub fn verify_exclusion_limit(
    params: &LVParams,
    x1_0: f64,
    x2_0: f64,
    opts: &IntegrationOptions,
) -> Result<ExclusionReport, ReductionError> {
    params.validate()?;
    let x1_0 = clamp_density("x1", x1_0)?;
    let x2_0 = clamp_density("x2", x2_0)?;
    let trajectory = integrate(params, &[x1_0, x2_0], opts)?;
    let Some(extinction_time) = trajectory.extinction_time(1) else {
        return Err(ReductionError::NoExtinction {
            trajectory: Box::new(trajectory),
        });
    };
    let final_x1 = trajectory.final_state()[0];
    let expected_limit = params.exclusion_limit();
    let relative_error = (final_x1 - expected_limit).abs() / expected_limit;
    if !(relative_error <= EXCLUSION_LIMIT_TOLERANCE) {
        return Err(ReductionError::LimitMismatch {
            observed: final_x1,
            expected: expected_limit,
            trajectory: Box::new(trajectory),
        });
    }
    Ok(ExclusionReport {
        extinction_time,
        final_x1,
        expected_limit,
        relative_error,
        trajectory,
    })
}

/// Scalar comparison equation `x' = C₁xˡ − C₂x` on `x ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonOde {
    pub c1: f64,
    pub c2: f64,
    pub l: f64,
}

impl ComparisonOde {
    pub fn from_certificate(cert: &ExtinctionCertificate) -> Self {
        Self {
            c1: cert.c1,
            c2: cert.c2,
            l: cert.l,
        }
    }

    /// Unstable positive equilibrium `(C₂/C₁)^(1/(l−1))`.
    pub fn critical_value(&self) -> f64 {
        (self.c2 / self.c1).powf(1.0 / (self.l - 1.0))
    }
}

impl VectorField for ComparisonOde {
    fn dimension(&self) -> usize {
        1
    }

    fn population_count(&self) -> usize {
        0
    }

    fn evaluate(&self, state: &[f64], derivative: &mut [f64]) {
        let x = state[0].max(0.0);
        derivative[0] = self.c1 * x.powf(self.l) - self.c2 * x;
    }
}
