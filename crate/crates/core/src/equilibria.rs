//! Equilibria of the extraction chemostat, their Jacobians and stability.
//!
//! Species `0..n-1` are removed linearly; the last species carries the
//! extraction term. When the extracted species sits at zero with `p < 1` and
//! `q < 1` the vector field has no derivative in that direction. Boundary
//! points of that kind are linearized on the face `xₙ = 0` only: the dropped
//! direction collapses in finite time near the face, so the reduced spectrum
//! decides stability.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{eigenvalues, EigenError, Matrix};
use crate::model::{BreakEven, ChemostatParams, ModelError, SystemState, NEGATIVE_TOLERANCE, TIE_TOLERANCE};

/// Real parts with magnitude at or below this count as zero.
pub const ZERO_EIGENVALUE_TOLERANCE: f64 = 1e-8;

/// Uniform samples used when bracketing roots of the extracted-species balance.
const SCAN_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquilibriumError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error("the Jacobian does not exist at x{} = 0 when 0 < p < 1 and q < 1", .component + 1)]
    SingularDerivative { component: usize },
    #[error("no equilibrium: {0}")]
    NoEquilibrium(String),
    #[error(
        "nullclines are inconsistent: species {} and {} need S = {first_level} and S = {second_level}",
        .first + 1,
        .second + 1
    )]
    InconsistentNullclines {
        first: usize,
        second: usize,
        first_level: f64,
        second_level: f64,
    },
    #[error("the linearly removed species share one break-even level; interior equilibria form a continuum")]
    Continuum,
    #[error("{0}")]
    NotApplicable(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum EquilibriumKind {
    Washout,
    /// Only the linearly removed species `species` (0-based) is present.
    Boundary {
        species: usize,
    },
    /// Only the extracted species is present.
    BoundaryExtracted,
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    Sink,
    Source,
    Saddle,
    /// At least one zero eigenvalue and at least one with positive real part.
    DegenerateSaddle,
    /// Zero eigenvalues with the rest stable.
    Degenerate,
}

impl Stability {
    pub fn from_eigenvalues(values: &[Complex64]) -> Self {
        let tol = ZERO_EIGENVALUE_TOLERANCE;
        let positive = values.iter().filter(|l| l.re > tol).count();
        let negative = values.iter().filter(|l| l.re < -tol).count();
        let zero = values.len() - positive - negative;
        match (positive, negative, zero) {
            (0, _, 0) => Stability::Sink,
            (_, 0, 0) => Stability::Source,
            (_, _, 0) => Stability::Saddle,
            (0, _, _) => Stability::Degenerate,
            _ => Stability::DegenerateSaddle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linearization {
    pub jacobian: Matrix,
    pub eigenvalues: Vec<Complex64>,
    pub classification: Stability,
    /// State component removed from the linearization, if any.
    pub dropped_component: Option<usize>,
}

impl Linearization {
    fn new(jacobian: Matrix, dropped_component: Option<usize>) -> Result<Self, EquilibriumError> {
        let eigenvalues = eigenvalues(&jacobian)?;
        Ok(Self {
            classification: Stability::from_eigenvalues(&eigenvalues),
            jacobian,
            eigenvalues,
            dropped_component,
        })
    }

    pub fn zero_eigenvalue_count(&self) -> usize {
        self.eigenvalues
            .iter()
            .filter(|l| l.norm() < ZERO_EIGENVALUE_TOLERANCE)
            .count()
    }

    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `lhs < rhs`, with both sides kept for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Inequality {
    fn less(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            holds: lhs < rhs,
        }
    }
}

/// Sink test for the extracted-species boundary equilibrium.
///
/// With `α = (fₙ − qDₙ)(1 − p)`, `β = xₙ f′ₙ`, `g = fₙ/γₙ`, `δ = f′ₙ xₙ/γₙ`
/// the `(xₙ, S)` block is `[[α, β], [−g, −D − δ]]`, so it is stable iff
/// `α − δ < D` (trace) and `α(D + δ) < gβ` (determinant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkChecks {
    pub trace_condition: Inequality,
    pub determinant_condition: Inequality,
    /// `α − g + δ < D`. Reported for comparison; not used for the verdict.
    pub alternate_trace_condition: Inequality,
    /// `D < δ + gαβ`. Reported for comparison; not used for the verdict.
    pub alternate_determinant_condition: Inequality,
    /// `fᵢ(S*) < Dᵢ` for every linearly removed species.
    pub others_decline: bool,
    pub block: Matrix,
    pub sink: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub kind: EquilibriumKind,
    pub location: SystemState,
    /// Max-norm of the vector field at `location`.
    pub residual: f64,
    pub linearization: Linearization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sink_checks: Option<SinkChecks>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum InteriorOutcome {
    Positive {
        report: Box<EquilibriumReport>,
    },
    /// Nullclines intersect but some coordinate is not positive.
    NonPositive {
        candidate: SystemState,
        reason: String,
    },
    Absent {
        reason: String,
    },
    /// Nullclines inconsistent or degenerate; see the reason.
    Unresolved {
        reason: String,
    },
}

impl InteriorOutcome {
    pub fn report(&self) -> Option<&EquilibriumReport> {
        match self {
            InteriorOutcome::Positive { report } => Some(report),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSummary {
    pub washout: EquilibriumReport,
    pub boundary: Vec<EquilibriumReport>,
    pub extracted: Vec<EquilibriumReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted_note: Option<String>,
    pub interior: InteriorOutcome,
}

/// Analytic Jacobian of the vector field at `point`, ordered `[x₁..xₙ, S]`.
pub fn jacobian_at(params: &ChemostatParams, point: &SystemState) -> Result<Matrix, EquilibriumError> {
    params.validate()?;
    let n = params.species();
    if point.species.len() != n {
        return Err(ModelError::DimensionMismatch {
            name: "state",
            expected: n,
            found: point.species.len(),
        }
        .into());
    }
    let point = point.clamped()?;
    let last = n - 1;
    if params.is_sublinear() && point.species[last] <= NEGATIVE_TOLERANCE {
        return Err(EquilibriumError::SingularDerivative { component: last });
    }
    let s = point.substrate;
    let mut j = Matrix::zeros(n + 1, n + 1);
    let mut substrate_diag = -params.dilution;
    for i in 0..n {
        let x = point.species[i];
        let f = params.growth(i, s);
        let slope = params.growth_slope(i, s);
        j[(i, i)] = if i < last {
            f - params.removal[i]
        } else {
            f - params.linear_removal_last() - extraction_derivative(params, x)
        };
        j[(i, n)] = x * slope;
        j[(n, i)] = -f / params.yields[i];
        substrate_diag -= slope * x / params.yields[i];
    }
    j[(n, n)] = substrate_diag;
    Ok(j)
}

/// `d/dx [(1 − q)k xᵖ]` for `x > 0`.
fn extraction_derivative(params: &ChemostatParams, x: f64) -> f64 {
    let coefficient = (1.0 - params.retained_fraction) * params.extraction_rate;
    if coefficient == 0.0 {
        return 0.0;
    }
    let p = params.extraction_exponent;
    if p == 1.0 {
        coefficient
    } else {
        coefficient * p * x.powf(p - 1.0)
    }
}

/// Rewrites diagonal entries using the nullclines that hold at an
/// equilibrium: `fᵢ − Dᵢ = 0` for every present linearly removed species and
/// `(fₙ − qDₙ)(1 − p)` for a present extracted species.
fn substitute_nullclines(params: &ChemostatParams, point: &SystemState, j: &mut Matrix) {
    let n = params.species();
    let last = n - 1;
    for i in 0..last {
        if point.species[i] > 0.0 {
            j[(i, i)] = 0.0;
        }
    }
    if point.species[last] > 0.0 {
        j[(last, last)] = if params.is_sublinear() {
            (params.growth(last, point.substrate) - params.linear_removal_last()) * (1.0 - params.extraction_exponent)
        } else {
            0.0
        };
    }
}

fn residual(params: &ChemostatParams, point: &SystemState) -> f64 {
    let y = point.to_vec();
    let mut dy = vec![0.0; y.len()];
    params.rhs_into(&y, &mut dy);
    dy.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

fn linearize(params: &ChemostatParams, point: &SystemState) -> Result<Linearization, EquilibriumError> {
    let n = params.species();
    let last = n - 1;
    if params.is_sublinear() && point.species[last] <= NEGATIVE_TOLERANCE {
        // With xₙ = 0 its column entries vanish, and switching extraction off
        // leaves every other entry unchanged.
        let mut full = jacobian_at(&params.with_retained_fraction(1.0), point)?;
        substitute_nullclines(params, point, &mut full);
        let keep: Vec<usize> = (0..=n).filter(|&c| c != last).collect();
        return Linearization::new(full.principal_submatrix(&keep), Some(last));
    }
    let mut j = jacobian_at(params, point)?;
    substitute_nullclines(params, point, &mut j);
    Linearization::new(j, None)
}

fn report(
    params: &ChemostatParams,
    kind: EquilibriumKind,
    location: SystemState,
) -> Result<EquilibriumReport, EquilibriumError> {
    let linearization = linearize(params, &location)?;
    let mut out = EquilibriumReport {
        kind,
        residual: residual(params, &location),
        location,
        linearization,
        sink_checks: None,
    };
    if kind == EquilibriumKind::BoundaryExtracted {
        out.sink_checks = Some(sink_conditions_xn(params, &out)?);
    }
    Ok(out)
}

pub fn washout(params: &ChemostatParams) -> Result<EquilibriumReport, EquilibriumError> {
    params.validate()?;
    let location = SystemState::new(vec![0.0; params.species()], params.feed);
    report(params, EquilibriumKind::Washout, location)
}

/// Single-species equilibrium of linearly removed species `i`, if it lies in
/// the positive orthant.
pub fn solve_boundary(params: &ChemostatParams, i: usize) -> Result<EquilibriumReport, EquilibriumError> {
    params.validate()?;
    let n = params.species();
    if i + 1 >= n {
        return Err(EquilibriumError::NotApplicable(
            "solve_boundary takes a linearly removed species; use solve_boundary_xn for the extracted one",
        ));
    }
    let (m, d) = (params.max_growth[i], params.removal[i]);
    if m <= d {
        return Err(EquilibriumError::NoEquilibrium(format!(
            "species {} cannot balance its removal (m = {m} ≤ D = {d})",
            i + 1
        )));
    }
    let level = params.half_saturation[i] * d / (m - d);
    if level >= params.feed {
        return Err(EquilibriumError::NoEquilibrium(format!(
            "break-even level {level} of species {} is not below the feed {}",
            i + 1,
            params.feed
        )));
    }
    let mut species = vec![0.0; n];
    species[i] = params.yields[i] * params.dilution * (params.feed - level) / params.growth(i, level);
    report(
        params,
        EquilibriumKind::Boundary { species: i },
        SystemState::new(species, level),
    )
}

/// Density of the extracted species implied by the substrate balance at `s`.
fn extracted_density(params: &ChemostatParams, s: f64) -> f64 {
    let last = params.species() - 1;
    params.yields[last] * params.dilution * (params.feed - s) / params.growth(last, s)
}

/// Growth nullcline of the extracted species after eliminating its density.
fn extracted_balance(params: &ChemostatParams, s: f64) -> f64 {
    let last = params.species() - 1;
    let x = extracted_density(params, s);
    let coefficient = (1.0 - params.retained_fraction) * params.extraction_rate;
    params.growth(last, s) - params.linear_removal_last() - coefficient * x.powf(params.extraction_exponent - 1.0)
}

fn scan_grid(feed: f64) -> Vec<f64> {
    let mut grid: Vec<f64> = (1..SCAN_POINTS).map(|j| feed * j as f64 / SCAN_POINTS as f64).collect();
    // Roots crowd the ends of the interval when extraction is weak or strong.
    for j in 20..=280 {
        let t = 10f64.powf(-(j as f64) / 20.0);
        grid.push(feed * t);
        grid.push(feed * (1.0 - t));
    }
    grid.retain(|&s| s > 0.0 && s < feed);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

fn bisect<G: Fn(f64) -> f64>(g: G, mut lo: f64, mut hi: f64) -> f64 {
    let mut g_lo = g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g(mid);
        if g_mid == 0.0 {
            return mid;
        }
        if (g_mid > 0.0) == (g_lo > 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Equilibria with only the extracted species present, sorted by `S*`.
pub fn solve_boundary_xn(params: &ChemostatParams) -> Result<Vec<EquilibriumReport>, EquilibriumError> {
    params.validate()?;
    let n = params.species();
    let last = n - 1;
    let feed = params.feed;
    let mut roots: Vec<f64> = if params.is_sublinear() {
        let grid = scan_grid(feed);
        let values: Vec<f64> = grid.iter().map(|&s| extracted_balance(params, s)).collect();
        let mut roots = Vec::new();
        for w in 0..grid.len() - 1 {
            let (a, b) = (values[w], values[w + 1]);
            if !(a.is_finite() && b.is_finite()) {
                continue;
            }
            if a == 0.0 {
                roots.push(grid[w]);
            } else if (a < 0.0) != (b < 0.0) && b != 0.0 {
                roots.push(bisect(|s| extracted_balance(params, s), grid[w], grid[w + 1]));
            }
        }
        roots
    } else {
        let removal = if params.retained_fraction == 1.0 {
            params.removal[last]
        } else {
            params.linear_removal_last() + (1.0 - params.retained_fraction) * params.extraction_rate
        };
        let m = params.max_growth[last];
        if m <= removal {
            Vec::new()
        } else {
            let level = params.half_saturation[last] * removal / (m - removal);
            if level < feed {
                vec![level]
            } else {
                Vec::new()
            }
        }
    };
    // Densities inside the clamp band are zero as far as the vector field is
    // concerned, so such roots are not equilibria of the clamped model.
    roots.retain(|&s| extracted_density(params, s) > NEGATIVE_TOLERANCE);
    if roots.is_empty() {
        return Err(EquilibriumError::NoEquilibrium(format!(
            "species {n} has no positive equilibrium with S in (0, {feed})"
        )));
    }
    roots
        .into_iter()
        .map(|s| {
            let mut species = vec![0.0; n];
            species[last] = extracted_density(params, s);
            report(params, EquilibriumKind::BoundaryExtracted, SystemState::new(species, s))
        })
        .collect()
}

/// Interior equilibrium with every species present.
pub fn solve_interior(params: &ChemostatParams) -> Result<InteriorOutcome, EquilibriumError> {
    params.validate()?;
    let n = params.species();
    if n == 1 {
        return Ok(InteriorOutcome::Absent {
            reason: "a single species has no interior equilibrium beyond its boundary one".into(),
        });
    }
    if !params.is_sublinear() {
        return Ok(InteriorOutcome::Absent {
            reason: "with linear removal every species needs its own break-even level; they coincide only on a measure-zero set".into(),
        });
    }
    let report_levels = raw_levels(params);
    let last = n - 1;
    let mut levels = Vec::with_capacity(last);
    for (i, level) in report_levels.levels.iter().take(last).enumerate() {
        match level {
            BreakEven::Attainable(v) => levels.push(*v),
            BreakEven::Unattainable => {
                return Ok(InteriorOutcome::Absent {
                    reason: format!("species {} cannot balance its removal", i + 1),
                })
            }
        }
    }
    let s_star = levels[0];
    for (i, &level) in levels.iter().enumerate().skip(1) {
        if (level - s_star).abs() > TIE_TOLERANCE * s_star.abs().max(1.0) {
            return Err(EquilibriumError::InconsistentNullclines {
                first: 0,
                second: i,
                first_level: s_star,
                second_level: level,
            });
        }
    }
    if last > 1 {
        return Err(EquilibriumError::Continuum);
    }

    let mut candidate = SystemState::new(vec![0.0; n], s_star);
    let surplus = params.growth(last, s_star) - params.linear_removal_last();
    if surplus <= 0.0 {
        return Ok(InteriorOutcome::NonPositive {
            candidate,
            reason: format!("f{n}(S*) − qD{n} = {surplus} is not positive"),
        });
    }
    let coefficient = (1.0 - params.retained_fraction) * params.extraction_rate;
    let x_last = (surplus / coefficient).powf(1.0 / (params.extraction_exponent - 1.0));
    let x_first = params.yields[0]
        * (params.dilution * (params.feed - s_star) - params.growth(last, s_star) * x_last / params.yields[last])
        / params.growth(0, s_star);
    candidate.species[0] = x_first;
    candidate.species[last] = x_last;
    if x_first <= 0.0 || s_star >= params.feed {
        return Ok(InteriorOutcome::NonPositive {
            candidate,
            reason: format!("x1* = {x_first} is not positive"),
        });
    }
    if x_last <= NEGATIVE_TOLERANCE {
        return Ok(InteriorOutcome::NonPositive {
            candidate,
            reason: format!("x{n}* = {x_last:e} lies inside the zero-clamp band"),
        });
    }
    Ok(InteriorOutcome::Positive {
        report: Box::new(report(params, EquilibriumKind::Interior, candidate)?),
    })
}

/// Break-even levels under linear removal, without winner selection.
fn raw_levels(params: &ChemostatParams) -> crate::model::BreakEvenReport {
    let levels = (0..params.species())
        .map(|i| {
            let (m, d) = (params.max_growth[i], params.removal[i]);
            if m > d {
                BreakEven::Attainable(params.half_saturation[i] * d / (m - d))
            } else {
                BreakEven::Unattainable
            }
        })
        .collect();
    crate::model::BreakEvenReport {
        levels,
        effective_removal: params.removal.clone(),
        predicted_winner: crate::model::WinnerLabel::Undecided,
        density_dependent: false,
    }
}

/// Evaluates the sink test at an extracted-species boundary equilibrium.
pub fn sink_conditions_xn(params: &ChemostatParams, eq: &EquilibriumReport) -> Result<SinkChecks, EquilibriumError> {
    if eq.kind != EquilibriumKind::BoundaryExtracted {
        return Err(EquilibriumError::NotApplicable(
            "sink conditions apply to the extracted-species boundary equilibrium only",
        ));
    }
    let n = params.species();
    let last = n - 1;
    let s = eq.location.substrate;
    let x = eq.location.species[last];
    let f = params.growth(last, s);
    let slope = params.growth_slope(last, s);
    let gamma = params.yields[last];
    let d = params.dilution;

    let alpha = (f - params.linear_removal_last()) * (1.0 - params.extraction_exponent);
    let beta = x * slope;
    let g = f / gamma;
    let delta = slope * x / gamma;

    let trace_condition = Inequality::less(alpha - delta, d);
    let determinant_condition = Inequality::less(alpha * (d + delta), g * beta);
    let others_decline = (0..last).all(|i| params.growth(i, s) < params.removal[i]);
    Ok(SinkChecks {
        trace_condition,
        determinant_condition,
        alternate_trace_condition: Inequality::less(alpha - g + delta, d),
        alternate_determinant_condition: Inequality::less(d, delta + g * alpha * beta),
        others_decline,
        block: Matrix::from_rows(&[vec![alpha, beta], vec![-g, -d - delta]]),
        sink: trace_condition.holds && determinant_condition.holds && others_decline,
    })
}

/// Every equilibrium the solvers can locate. Missing boundary equilibria are
/// skipped; an unresolvable interior is reported rather than raised.
pub fn all_equilibria(params: &ChemostatParams) -> Result<EquilibriumSummary, EquilibriumError> {
    let washout = washout(params)?;
    let n = params.species();
    let mut boundary = Vec::new();
    for i in 0..n - 1 {
        match solve_boundary(params, i) {
            Ok(r) => boundary.push(r),
            Err(EquilibriumError::NoEquilibrium(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let (extracted, extracted_note) = match solve_boundary_xn(params) {
        Ok(r) => (r, None),
        Err(EquilibriumError::NoEquilibrium(msg)) => (Vec::new(), Some(msg)),
        Err(e) => return Err(e),
    };
    let interior = match solve_interior(params) {
        Ok(outcome) => outcome,
        Err(e @ (EquilibriumError::InconsistentNullclines { .. } | EquilibriumError::Continuum)) => {
            InteriorOutcome::Unresolved { reason: e.to_string() }
        }
        Err(e) => return Err(e),
    };
    Ok(EquilibriumSummary {
        washout,
        boundary,
        extracted,
        extracted_note,
        interior,
    })
}
