use std::collections::BTreeMap;

use chemostat_core::basin::{
    scan_grid, spot_check, sweep_dilution, BasinQuery, DilutionSurface, Execution, PointFailure, SpotCheck,
};
use chemostat_core::equilibria::{all_equilibria, EquilibriumSummary};
use chemostat_core::integrator::{classify_field, integrate, Event, VectorField};
use chemostat_core::model::{break_even, BreakEvenReport};
use chemostat_core::reduction::{extinction_threshold, ExtinctionCertificate, EXCLUSION_LIMIT_TOLERANCE};
use chemostat_core::{classify_winner, IntegrationOptions, WinnerLabel};
use serde::Serialize;

use crate::error::CliError;
use crate::output::{basin_csv, basin_rows, json, separatrix_csv, surface_csv, trajectory_csv};
use crate::scenario::{Experiment, Model, Scenario, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Equilibria,
    Classify,
    Basin,
    SweepD,
    LvExtinction,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Equilibria => "equilibria",
            Command::Classify => "classify",
            Command::Basin => "basin",
            Command::SweepD => "sweep-d",
            Command::LvExtinction => "lv-extinction",
        }
    }
}

/// Files to write (name, contents) and text for standard output.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(String, String)>,
    pub stdout: String,
}

pub struct RunContext {
    pub execution: Execution,
    pub seed: u64,
}

pub fn execute(command: Command, scenario: &Scenario, ctx: &RunContext) -> Result<Outcome, CliError> {
    match command {
        Command::Simulate => simulate(scenario),
        Command::Equilibria => equilibria(scenario),
        Command::Classify => classify(scenario),
        Command::Basin => basin(scenario, ctx),
        Command::SweepD => sweep_d(scenario, ctx),
        Command::LvExtinction => lv_extinction(scenario),
    }
}

#[derive(Serialize)]
struct EventsFile<'a> {
    format_version: u32,
    final_time: f64,
    final_label: WinnerLabel,
    events: &'a [Event],
}

fn simulate(scenario: &Scenario) -> Result<Outcome, CliError> {
    let initial = scenario.model.initial_vector();
    let opts = &scenario.options;
    let trajectory = match &scenario.model {
        Model::Cem { params, .. } => integrate(params, &initial, opts)?,
        Model::Lv { params, .. } => integrate(params, &initial, opts)?,
    };
    let populations = trajectory.population_count;
    let final_label = if trajectory.blew_up() {
        WinnerLabel::Undecided
    } else {
        chemostat_core::integrator::label_final_state(trajectory.final_state(), populations, opts)
    };
    let events = EventsFile {
        format_version: FORMAT_VERSION,
        final_time: trajectory.final_time(),
        final_label,
        events: &trajectory.events,
    };
    Ok(Outcome {
        files: vec![
            (
                "trajectory.csv".into(),
                trajectory_csv(&scenario.model.columns(), &trajectory),
            ),
            ("events.json".into(), json(&events)),
        ],
        stdout: format!("{} samples to t = {}\n", trajectory.len(), trajectory.final_time()),
    })
}

#[derive(Serialize)]
struct EquilibriaFile {
    format_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    break_even: Option<BreakEvenReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    break_even_note: Option<String>,
    equilibria: EquilibriumSummary,
}

fn equilibria(scenario: &Scenario) -> Result<Outcome, CliError> {
    let Model::Cem { params, .. } = &scenario.model else {
        return Err(CliError::Usage("equilibria needs a cem scenario".into()));
    };
    let summary = all_equilibria(params)?;
    let (break_even, break_even_note) = match break_even(params) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let stdout = format!(
        "washout: {:?}; boundary: {}; extracted: {}; interior: {}\n",
        summary.washout.linearization.classification,
        summary.boundary.len(),
        summary.extracted.len(),
        interior_status(&summary),
    );
    let file = EquilibriaFile {
        format_version: FORMAT_VERSION,
        break_even,
        break_even_note,
        equilibria: summary,
    };
    Ok(Outcome {
        files: vec![("equilibria.json".into(), json(&file))],
        stdout,
    })
}

fn interior_status(summary: &EquilibriumSummary) -> &'static str {
    use chemostat_core::equilibria::InteriorOutcome::*;
    match summary.interior {
        Positive { .. } => "positive",
        NonPositive { .. } => "non-positive",
        Absent { .. } => "absent",
        Unresolved { .. } => "unresolved",
    }
}

fn classify(scenario: &Scenario) -> Result<Outcome, CliError> {
    let label = match &scenario.model {
        Model::Cem { params, initial } => classify_winner(params, initial, &scenario.options)?,
        Model::Lv { params, .. } => classify_field(params, &scenario.model.initial_vector(), &scenario.options)?,
    };
    Ok(Outcome {
        files: Vec::new(),
        stdout: format!("{label}\n"),
    })
}

fn experiment(scenario: &Scenario) -> Result<&Experiment, CliError> {
    scenario
        .experiment
        .as_ref()
        .ok_or_else(|| CliError::Usage("scenario has no [experiment] block".into()))
}

#[derive(Serialize)]
struct BasinFile {
    format_version: u32,
    points: usize,
    labels: BTreeMap<String, usize>,
    extended: usize,
    crossings: usize,
    failures: Vec<PointFailure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spot_check: Option<SpotCheck>,
}

/// The rate reported in the `D` column: the dilution rate for the chemostat,
/// the removal rate of the extracted species for the reduced model.
fn reported_rate(model: &Model) -> f64 {
    match model {
        Model::Cem { params, .. } => params.dilution,
        Model::Lv { params, .. } => params.removal[1],
    }
}

fn basin(scenario: &Scenario, ctx: &RunContext) -> Result<Outcome, CliError> {
    let exp = experiment(scenario)?;
    let grid = exp
        .grid
        .clone()
        .ok_or_else(|| CliError::Usage("basin needs experiment.grid".into()))?;
    match &scenario.model {
        Model::Cem { params, .. } => basin_for(params, scenario, exp, grid, ctx),
        Model::Lv { params, .. } => basin_for(params, scenario, exp, grid, ctx),
    }
}

fn basin_for<F: VectorField + Sync>(
    field: &F,
    scenario: &Scenario,
    exp: &Experiment,
    grid: chemostat_core::basin::GridSpec,
    ctx: &RunContext,
) -> Result<Outcome, CliError> {
    let query = BasinQuery {
        field,
        grid,
        options: scenario.options.clone(),
        separatrix_tol: exp.separatrix_tol,
        execution: ctx.execution,
    };
    let result = scan_grid(&query)?;
    let spot = (exp.spot_checks > 0).then(|| {
        spot_check(
            field,
            &result,
            &scenario.options,
            exp.spot_checks,
            ctx.seed,
            ctx.execution,
        )
    });
    let d = reported_rate(&scenario.model);
    let columns = scenario.model.columns();
    let mut labels = BTreeMap::new();
    for p in &result.points {
        *labels.entry(p.label.to_string()).or_insert(0) += 1;
    }
    let crossings: Vec<_> = result.separatrix.iter().map(|c| (c, d)).collect();
    let stdout = format!(
        "{} points, {} crossings, {} failures\n",
        result.points.len(),
        result.separatrix.len(),
        result.failures.len()
    );
    let report = BasinFile {
        format_version: FORMAT_VERSION,
        points: result.points.len(),
        labels,
        extended: result.points.iter().filter(|p| p.extended).count(),
        crossings: result.separatrix.len(),
        failures: result.failures.clone(),
        spot_check: spot,
    };
    Ok(Outcome {
        files: vec![
            ("basin.csv".into(), basin_csv(&columns, &basin_rows(&result.points, d))),
            ("separatrix.csv".into(), separatrix_csv(&columns, &crossings)),
            ("basin.json".into(), json(&report)),
        ],
        stdout,
    })
}

#[derive(Serialize)]
struct RayFailure {
    base: [f64; 2],
    message: String,
}

#[derive(Serialize)]
struct SurfaceSummary {
    dilution: f64,
    rays: usize,
    crossings: usize,
    sided: usize,
    washout: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    level_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    level_max: Option<f64>,
    failures: Vec<RayFailure>,
}

#[derive(Serialize)]
struct SweepFile {
    format_version: u32,
    surfaces: Vec<SurfaceSummary>,
}

fn summarize(s: &DilutionSurface) -> SurfaceSummary {
    let levels: Vec<f64> = s.rays.iter().filter_map(|r| r.level).collect();
    SurfaceSummary {
        dilution: s.dilution,
        rays: s.rays.len(),
        crossings: levels.len(),
        sided: s.rays.iter().filter(|r| r.sided && r.failure.is_none()).count(),
        washout: s.washout,
        level_min: levels.iter().copied().reduce(f64::min),
        level_max: levels.iter().copied().reduce(f64::max),
        failures: s
            .failures()
            .map(|r| RayFailure {
                base: r.base,
                message: r.failure.clone().unwrap_or_default(),
            })
            .collect(),
    }
}

fn sweep_d(scenario: &Scenario, ctx: &RunContext) -> Result<Outcome, CliError> {
    let Model::Cem { params, .. } = &scenario.model else {
        return Err(CliError::Usage("sweep-d needs a cem scenario".into()));
    };
    let exp = experiment(scenario)?;
    let (Some(grid), Some(dilutions)) = (&exp.surface, &exp.dilutions) else {
        return Err(CliError::Usage(
            "sweep-d needs experiment.surface and experiment.dilutions".into(),
        ));
    };
    let surfaces = sweep_dilution(
        params,
        dilutions,
        grid,
        exp.separatrix_tol,
        &scenario.options,
        ctx.execution,
    )?;
    let columns = scenario.model.columns();
    let mut rows = Vec::new();
    let mut crossings = Vec::new();
    for s in &surfaces {
        for r in &s.rays {
            for (v, label) in r.samples.iter().zip(&r.labels) {
                let mut x = grid.base.clone();
                x[grid.axes[0].component] = r.base[0];
                x[grid.axes[1].component] = r.base[1];
                x[grid.ray_component] = *v;
                rows.push((x, *label, s.dilution));
            }
            if let Some(c) = &r.crossing {
                crossings.push((c, s.dilution));
            }
        }
    }
    let summaries: Vec<SurfaceSummary> = surfaces.iter().map(summarize).collect();
    let mut stdout = String::new();
    for s in &summaries {
        stdout.push_str(&format!(
            "D = {}: {}/{} rays cross, {} sided{}\n",
            s.dilution,
            s.crossings,
            s.rays,
            s.sided,
            if s.washout { ", washout" } else { "" }
        ));
    }
    let axes = [grid.axes[0].component, grid.axes[1].component];
    Ok(Outcome {
        files: vec![
            (
                "surface.csv".into(),
                surface_csv(&columns, axes, grid.ray_component, &surfaces),
            ),
            ("basin.csv".into(), basin_csv(&columns, &rows)),
            ("separatrix.csv".into(), separatrix_csv(&columns, &crossings)),
            (
                "sweep.json".into(),
                json(&SweepFile {
                    format_version: FORMAT_VERSION,
                    surfaces: summaries,
                }),
            ),
        ],
        stdout,
    })
}

#[derive(Serialize)]
struct Verification {
    x1_initial: f64,
    x2_initial: f64,
    below_threshold: bool,
    extinction_time: Option<f64>,
    final_x1: f64,
    expected_limit: f64,
    relative_error: f64,
    limit_within_tolerance: bool,
}

#[derive(Serialize)]
struct CertificateFile {
    format_version: u32,
    certificate: ExtinctionCertificate,
    verification: Verification,
}

fn lv_extinction(scenario: &Scenario) -> Result<Outcome, CliError> {
    let Model::Lv { params, initial } = &scenario.model else {
        return Err(CliError::Usage("lv-extinction needs an lv scenario".into()));
    };
    let certificate = extinction_threshold(params)?;
    let trajectory = integrate(params, &[initial.x1, initial.x2], &scenario.options)?;
    let below_threshold = initial.x2 < certificate.threshold;
    let extinction_time = trajectory.extinction_time(1);
    if below_threshold && extinction_time.is_none() {
        return Err(CliError::Numerical(format!(
            "x2(0) = {} lies below the threshold {} but x2 did not reach zero by t = {}",
            initial.x2,
            certificate.threshold,
            trajectory.final_time()
        )));
    }
    let final_x1 = trajectory.final_state()[0];
    let expected_limit = params.exclusion_limit();
    let relative_error = (final_x1 - expected_limit).abs() / expected_limit;
    let verification = Verification {
        x1_initial: initial.x1,
        x2_initial: initial.x2,
        below_threshold,
        extinction_time,
        final_x1,
        expected_limit,
        relative_error,
        limit_within_tolerance: extinction_time.is_some() && relative_error <= EXCLUSION_LIMIT_TOLERANCE,
    };
    let stdout = match extinction_time {
        Some(t) => format!("x2 extinct at t = {t}; threshold {}\n", certificate.threshold),
        None => format!(
            "x2 persists to t = {}; threshold {}\n",
            trajectory.final_time(),
            certificate.threshold
        ),
    };
    let file = CertificateFile {
        format_version: FORMAT_VERSION,
        certificate,
        verification,
    };
    Ok(Outcome {
        files: vec![
            ("extinction_certificate.json".into(), json(&file)),
            (
                "trajectory.csv".into(),
                trajectory_csv(&scenario.model.columns(), &trajectory),
            ),
        ],
        stdout,
    })
}

/// Applies command-line overrides and re-validates.
pub fn with_overrides(mut scenario: Scenario, t_end: Option<f64>) -> Result<Scenario, CliError> {
    if let Some(t) = t_end {
        scenario.options = IntegrationOptions {
            t_end: t,
            ..scenario.options
        };
    }
    scenario.validate()?;
    Ok(scenario)
}
