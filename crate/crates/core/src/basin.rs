//! Winner maps over initial conditions.
//!
//! Every initial point is classified independently, so scans, bisection
//! batches and sweeps map over their work items with [`Execution`]. With the
//! `parallel` feature the parallel mode runs on the current rayon pool;
//! without it both modes run sequentially. Results never depend on the mode.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{classify_field, IntegrationError, IntegrationOptions, VectorField};
use crate::model::{ChemostatParams, WinnerLabel};

/// Bracket length at which separatrix bisection stops.
pub const DEFAULT_SEPARATRIX_TOL: f64 = 1e-4;

/// Horizon multiplier for the single re-run of an undecided point.
const HORIZON_EXTENSION: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn map<T, R, G>(self, items: &[T], f: G) -> Vec<R>
    where
        T: Sync,
        R: Send,
        G: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BasinError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("both bracket endpoints are labeled {0}")]
    SameLabel(WinnerLabel),
    #[error("bracket endpoint {point:?} is undecided")]
    UndecidedEndpoint { point: Vec<f64> },
    #[error("undecided label persists at {point:?} inside the bracket")]
    PersistentUndecided { point: Vec<f64> },
    #[error("integration from {point:?} failed: {source}")]
    Integration {
        point: Vec<f64>,
        #[source]
        source: IntegrationError,
    },
}

/// One lattice axis: `points` evenly spaced values of `component` over
/// `[start, end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub component: usize,
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.start, self.end, self.points)
    }
}

fn linspace(start: f64, end: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..points)
            .map(|i| start + (end - start) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type", deny_unknown_fields)]
pub enum GridSpec {
    /// Cartesian product of `axes`; components not on an axis come from
    /// `base`.
    Lattice { base: Vec<f64>, axes: Vec<Axis> },
    /// `samples` evenly spaced points on the segment from `start` to `end`.
    Ray {
        start: Vec<f64>,
        end: Vec<f64>,
        samples: usize,
    },
}

impl GridSpec {
    fn validate(&self, dimension: usize) -> Result<(), BasinError> {
        let invalid = |msg: String| Err(BasinError::InvalidQuery(msg));
        let nonnegative = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x >= 0.0);
        match self {
            GridSpec::Lattice { base, axes } => {
                if base.len() != dimension {
                    return invalid(format!("base has {} components, expected {dimension}", base.len()));
                }
                if !nonnegative(base) {
                    return invalid("base must be finite and nonnegative".into());
                }
                if axes.is_empty() {
                    return invalid("lattice needs at least one axis".into());
                }
                for (i, axis) in axes.iter().enumerate() {
                    if axis.component >= dimension {
                        return invalid(format!("axis component {} out of range", axis.component));
                    }
                    if axes[..i].iter().any(|a| a.component == axis.component) {
                        return invalid(format!("component {} appears on two axes", axis.component));
                    }
                    if axis.points == 0 || !nonnegative(&[axis.start, axis.end]) {
                        return invalid("axis bounds must be nonnegative with at least one point".into());
                    }
                }
            }
            GridSpec::Ray { start, end, samples } => {
                if start.len() != dimension || end.len() != dimension {
                    return invalid(format!("ray endpoints need {dimension} components"));
                }
                if !nonnegative(start) || !nonnegative(end) {
                    return invalid("ray endpoints must be finite and nonnegative".into());
                }
                if start == end {
                    return invalid("ray direction is zero".into());
                }
                if *samples < 2 {
                    return invalid("a ray needs at least two samples".into());
                }
            }
        }
        Ok(())
    }

    /// Grid points in row-major order (last axis fastest) and the index pairs
    /// of neighbouring points.
    fn points(&self) -> (Vec<Vec<f64>>, Vec<(usize, usize)>) {
        match self {
            GridSpec::Ray { start, end, samples } => {
                let pts = linspace(0.0, 1.0, *samples)
                    .into_iter()
                    .map(|t| start.iter().zip(end).map(|(a, b)| a + t * (b - a)).collect())
                    .collect();
                let pairs = (1..*samples).map(|i| (i - 1, i)).collect();
                (pts, pairs)
            }
            GridSpec::Lattice { base, axes } => {
                let values: Vec<Vec<f64>> = axes.iter().map(Axis::values).collect();
                let shape: Vec<usize> = values.iter().map(Vec::len).collect();
                let total: usize = shape.iter().product();
                let mut strides = vec![1; shape.len()];
                for k in (0..shape.len().saturating_sub(1)).rev() {
                    strides[k] = strides[k + 1] * shape[k + 1];
                }
                let mut pts = Vec::with_capacity(total);
                let mut pairs = Vec::new();
                for flat in 0..total {
                    let mut p = base.clone();
                    for (k, axis) in axes.iter().enumerate() {
                        let idx = (flat / strides[k]) % shape[k];
                        p[axis.component] = values[k][idx];
                        if idx + 1 < shape[k] {
                            pairs.push((flat, flat + strides[k]));
                        }
                    }
                    pts.push(p);
                }
                (pts, pairs)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasinQuery<F> {
    pub field: F,
    pub grid: GridSpec,
    pub options: IntegrationOptions,
    pub separatrix_tol: f64,
    pub execution: Execution,
}

impl<F> BasinQuery<F> {
    pub fn new(field: F, grid: GridSpec, options: IntegrationOptions) -> Self {
        Self {
            field,
            grid,
            options,
            separatrix_tol: DEFAULT_SEPARATRIX_TOL,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinPoint {
    pub initial: Vec<f64>,
    pub label: WinnerLabel,
    /// Whether the label needed the extended horizon.
    pub extended: bool,
}

/// A bisected crossing between two differently labeled points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower_label: WinnerLabel,
    pub upper_label: WinnerLabel,
    pub bracket_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub point: Vec<f64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinResult {
    pub points: Vec<BasinPoint>,
    pub separatrix: Vec<Crossing>,
    pub failures: Vec<PointFailure>,
}

impl BasinResult {
    pub fn labels(&self) -> Vec<WinnerLabel> {
        self.points.iter().map(|p| p.label).collect()
    }
}

/// Classifies `initial`, re-running once with a longer horizon when the first
/// attempt is undecided. Returns the label and whether the re-run was needed.
pub fn classify_point<F: VectorField + ?Sized>(
    field: &F,
    initial: &[f64],
    opts: &IntegrationOptions,
) -> Result<(WinnerLabel, bool), IntegrationError> {
    let label = classify_field(field, initial, opts)?;
    if label != WinnerLabel::Undecided {
        return Ok((label, false));
    }
    let longer = opts.with_t_end(opts.t_end * HORIZON_EXTENSION);
    Ok((classify_field(field, initial, &longer)?, true))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

fn integration_error(point: &[f64], source: IntegrationError) -> BasinError {
    BasinError::Integration {
        point: point.to_vec(),
        source,
    }
}

/// Bisection with endpoint labels already known.
fn bisect_labeled<F: VectorField + ?Sized>(
    field: &F,
    (mut lower, lower_label): (Vec<f64>, WinnerLabel),
    (mut upper, mut upper_label): (Vec<f64>, WinnerLabel),
    tol: f64,
    opts: &IntegrationOptions,
) -> Result<Crossing, BasinError> {
    if lower_label == upper_label {
        return Err(BasinError::SameLabel(lower_label));
    }
    for (p, l) in [(&lower, lower_label), (&upper, upper_label)] {
        if !l.is_decided() {
            return Err(BasinError::UndecidedEndpoint { point: p.clone() });
        }
    }
    while distance(&lower, &upper) > tol {
        let mid = midpoint(&lower, &upper);
        if mid == lower || mid == upper {
            break;
        }
        let (label, _) = classify_point(field, &mid, opts).map_err(|e| integration_error(&mid, e))?;
        if !label.is_decided() {
            return Err(BasinError::PersistentUndecided { point: mid });
        }
        if label == lower_label {
            lower = mid;
        } else {
            // A third label narrows onto the first change of outcome.
            upper = mid;
            upper_label = label;
        }
    }
    Ok(Crossing {
        point: midpoint(&lower, &upper),
        bracket_length: distance(&lower, &upper),
        lower,
        upper,
        lower_label,
        upper_label,
    })
}

/// Bisects the segment between two initial states with different winners
/// until the bracket is no longer than `tol`.
pub fn bisect_separatrix<F: VectorField + ?Sized>(
    field: &F,
    a: &[f64],
    b: &[f64],
    tol: f64,
    opts: &IntegrationOptions,
) -> Result<Crossing, BasinError> {
    if !(tol > 0.0) {
        return Err(BasinError::InvalidQuery(format!("tolerance {tol} must be positive")));
    }
    let (la, _) = classify_point(field, a, opts).map_err(|e| integration_error(a, e))?;
    let (lb, _) = classify_point(field, b, opts).map_err(|e| integration_error(b, e))?;
    bisect_labeled(field, (a.to_vec(), la), (b.to_vec(), lb), tol, opts)
}

/// Classifies every grid point and bisects every neighbouring pair whose
/// decided labels differ. Per-point failures are collected, not raised.
pub fn scan_grid<F: VectorField + Sync + ?Sized>(query: &BasinQuery<&F>) -> Result<BasinResult, BasinError> {
    let field = query.field;
    query.grid.validate(field.dimension())?;
    query
        .options
        .validate()
        .map_err(|e| BasinError::InvalidQuery(e.to_string()))?;
    if !(query.separatrix_tol > 0.0) {
        return Err(BasinError::InvalidQuery("separatrix tolerance must be positive".into()));
    }
    let (initials, pairs) = query.grid.points();
    let classified = query
        .execution
        .map(&initials, |p| classify_point(field, p, &query.options));

    let mut points = Vec::with_capacity(initials.len());
    let mut failures = Vec::new();
    for (initial, outcome) in initials.iter().zip(classified) {
        match outcome {
            Ok((label, extended)) => points.push(BasinPoint {
                initial: initial.clone(),
                label,
                extended,
            }),
            Err(e) => {
                failures.push(PointFailure {
                    point: initial.clone(),
                    message: e.to_string(),
                });
                points.push(BasinPoint {
                    initial: initial.clone(),
                    label: WinnerLabel::Undecided,
                    extended: false,
                });
            }
        }
    }

    let brackets: Vec<(usize, usize)> = pairs
        .into_iter()
        .filter(|&(i, j)| {
            let (a, b) = (points[i].label, points[j].label);
            a != b && a.is_decided() && b.is_decided()
        })
        .collect();
    let crossings = query.execution.map(&brackets, |&(i, j)| {
        bisect_labeled(
            field,
            (points[i].initial.clone(), points[i].label),
            (points[j].initial.clone(), points[j].label),
            query.separatrix_tol,
            &query.options,
        )
    });
    let mut separatrix = Vec::new();
    for ((i, j), c) in brackets.iter().zip(crossings) {
        match c {
            Ok(c) => separatrix.push(c),
            Err(e) => failures.push(PointFailure {
                point: midpoint(&points[*i].initial, &points[*j].initial),
                message: e.to_string(),
            }),
        }
    }
    Ok(BasinResult {
        points,
        separatrix,
        failures,
    })
}

/// Outcome of re-running a sample of points with a doubled horizon and ten
/// times tighter tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotCheck {
    pub checked: usize,
    pub mismatches: Vec<BasinPoint>,
}

pub fn spot_check<F: VectorField + Sync + ?Sized>(
    field: &F,
    result: &BasinResult,
    opts: &IntegrationOptions,
    count: usize,
    seed: u64,
    execution: Execution,
) -> SpotCheck {
    let decided: Vec<&BasinPoint> = result.points.iter().filter(|p| p.label.is_decided()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<&BasinPoint> = sample(&mut rng, decided.len(), count.min(decided.len()))
        .into_iter()
        .map(|i| decided[i])
        .collect();
    let strict = IntegrationOptions {
        t_end: 2.0 * opts.t_end,
        rel_tol: opts.rel_tol / 10.0,
        abs_tol: opts.abs_tol / 10.0,
        ..opts.clone()
    };
    let relabeled = execution.map(&chosen, |p| classify_point(field, &p.initial, &strict));
    let mismatches = chosen
        .iter()
        .zip(relabeled)
        .filter(|(p, r)| !matches!(r, Ok((l, _)) if *l == p.label))
        .map(|(p, _)| (*p).clone())
        .collect();
    SpotCheck {
        checked: chosen.len(),
        mismatches,
    }
}

/// Base lattice and vertical rays for a dilution sweep. Rays vary
/// `ray_component` over `[ray_start, ray_end]` above every point of the
/// two-axis base grid; other components come from `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceGrid {
    pub base: Vec<f64>,
    pub axes: [Axis; 2],
    pub ray_component: usize,
    pub ray_start: f64,
    pub ray_end: f64,
    pub ray_samples: usize,
}

/// Labels along one ray and the first crossing on it, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayOutcome {
    /// Values of the two base axes.
    pub base: [f64; 2],
    pub samples: Vec<f64>,
    pub labels: Vec<WinnerLabel>,
    pub crossing: Option<Crossing>,
    /// Ray coordinate of the crossing.
    pub level: Option<f64>,
    /// Labels switch at most once along the sampled ray.
    pub sided: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl RayOutcome {
    pub fn lower_label(&self) -> Option<WinnerLabel> {
        self.labels.first().copied()
    }

    pub fn upper_label(&self) -> Option<WinnerLabel> {
        self.labels.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilutionSurface {
    pub dilution: f64,
    pub rays: Vec<RayOutcome>,
    /// Every sampled point washed out.
    pub washout: bool,
}

impl DilutionSurface {
    pub fn failures(&self) -> impl Iterator<Item = &RayOutcome> {
        self.rays.iter().filter(|r| r.failure.is_some())
    }

    pub fn all_sided(&self) -> bool {
        self.rays.iter().all(|r| r.sided && r.failure.is_none())
    }
}

fn ray_outcome<F: VectorField + ?Sized>(
    field: &F,
    grid: &SurfaceGrid,
    base: [f64; 2],
    tol: f64,
    opts: &IntegrationOptions,
) -> RayOutcome {
    let samples = linspace(grid.ray_start, grid.ray_end, grid.ray_samples);
    let state_at = |v: f64| {
        let mut p = grid.base.clone();
        p[grid.axes[0].component] = base[0];
        p[grid.axes[1].component] = base[1];
        p[grid.ray_component] = v;
        p
    };
    let mut out = RayOutcome {
        base,
        samples: samples.clone(),
        labels: Vec::with_capacity(samples.len()),
        crossing: None,
        level: None,
        sided: false,
        failure: None,
    };
    for &v in &samples {
        match classify_point(field, &state_at(v), opts) {
            Ok((label, _)) => out.labels.push(label),
            Err(e) => {
                out.failure = Some(integration_error(&state_at(v), e).to_string());
                return out;
            }
        }
    }
    let switches: Vec<usize> = (1..out.labels.len())
        .filter(|&i| out.labels[i] != out.labels[i - 1])
        .collect();
    out.sided = switches.len() <= 1 && out.labels.iter().all(WinnerLabel::is_decided);
    if let Some(&i) = switches.first() {
        let lower = (state_at(samples[i - 1]), out.labels[i - 1]);
        let upper = (state_at(samples[i]), out.labels[i]);
        match bisect_labeled(field, lower, upper, tol, opts) {
            Ok(c) => {
                out.level = Some(c.point[grid.ray_component]);
                out.crossing = Some(c);
            }
            Err(e) => out.failure = Some(e.to_string()),
        }
    }
    out
}

/// One separatrix surface per dilution rate. All rays of all rates are
/// scheduled as one batch.
pub fn sweep_dilution(
    params: &ChemostatParams,
    dilutions: &[f64],
    grid: &SurfaceGrid,
    tol: f64,
    opts: &IntegrationOptions,
    execution: Execution,
) -> Result<Vec<DilutionSurface>, BasinError> {
    params.validate().map_err(|e| BasinError::InvalidQuery(e.to_string()))?;
    opts.validate().map_err(|e| BasinError::InvalidQuery(e.to_string()))?;
    if dilutions.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(BasinError::InvalidQuery("dilution rates must be positive".into()));
    }
    let dim = params.species() + 1;
    let components = [grid.axes[0].component, grid.axes[1].component, grid.ray_component];
    if grid.base.len() != dim || components.iter().any(|&c| c >= dim) {
        return Err(BasinError::InvalidQuery(format!(
            "surface grid must address {dim} components"
        )));
    }
    if components[0] == components[1] || components[..2].contains(&grid.ray_component) {
        return Err(BasinError::InvalidQuery(
            "base axes and ray must use distinct components".into(),
        ));
    }
    if grid.ray_samples < 2 || !(grid.ray_start >= 0.0 && grid.ray_end > grid.ray_start) {
        return Err(BasinError::InvalidQuery(
            "ray needs 0 ≤ start < end and at least two samples".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(BasinError::InvalidQuery("separatrix tolerance must be positive".into()));
    }
    let fields: Vec<ChemostatParams> = dilutions.iter().map(|&d| params.with_dilution(d)).collect();
    let bases: Vec<[f64; 2]> = grid.axes[0]
        .values()
        .into_iter()
        .flat_map(|u| grid.axes[1].values().into_iter().map(move |v| [u, v]))
        .collect();
    let tasks: Vec<(usize, [f64; 2])> = (0..fields.len())
        .flat_map(|k| bases.iter().map(move |&b| (k, b)))
        .collect();
    let outcomes = execution.map(&tasks, |&(k, b)| ray_outcome(&fields[k], grid, b, tol, opts));

    let mut surfaces: Vec<DilutionSurface> = dilutions
        .iter()
        .map(|&dilution| DilutionSurface {
            dilution,
            rays: Vec::with_capacity(bases.len()),
            washout: false,
        })
        .collect();
    for ((k, _), ray) in tasks.iter().zip(outcomes) {
        surfaces[*k].rays.push(ray);
    }
    for s in &mut surfaces {
        s.washout = s
            .rays
            .iter()
            .all(|r| r.labels.iter().all(|l| *l == WinnerLabel::Washout) && !r.labels.is_empty());
    }
    Ok(surfaces)
}

/// Winner labels for each initial state at each retained fraction `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainedFractionRow {
    pub retained_fraction: f64,
    pub labels: Vec<WinnerLabel>,
}

pub fn sweep_retained_fraction(
    params: &ChemostatParams,
    fractions: &[f64],
    initials: &[Vec<f64>],
    opts: &IntegrationOptions,
    execution: Execution,
) -> Result<Vec<RetainedFractionRow>, BasinError> {
    let fields = fractions
        .iter()
        .map(|&q| {
            let p = params.with_retained_fraction(q);
            p.validate().map(|_| p)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| BasinError::InvalidQuery(e.to_string()))?;
    let tasks: Vec<(usize, usize)> = (0..fields.len())
        .flat_map(|k| (0..initials.len()).map(move |i| (k, i)))
        .collect();
    let labels = execution.map(&tasks, |&(k, i)| {
        classify_point(&fields[k], &initials[i], opts)
            .map(|(l, _)| l)
            .map_err(|e| integration_error(&initials[i], e))
    });
    let mut rows: Vec<RetainedFractionRow> = fractions
        .iter()
        .map(|&q| RetainedFractionRow {
            retained_fraction: q,
            labels: Vec::with_capacity(initials.len()),
        })
        .collect();
    for ((k, _), l) in tasks.iter().zip(labels) {
        rows[*k].labels.push(l?);
    }
    Ok(rows)
}
