//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! nonzero status if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use chemostat_core::basin::{
    spot_check, sweep_dilution, sweep_retained_fraction, Axis, BasinPoint, BasinResult, Execution, SurfaceGrid,
};
use chemostat_core::equilibria::{solve_boundary_xn, solve_interior, EquilibriumError, ZERO_EIGENVALUE_TOLERANCE};
use chemostat_core::integrator::{integrate, EventKind, IntegrationOptions, Trajectory};
use chemostat_core::reduction::{extinction_threshold, verify_exclusion_limit, ComparisonOde, LVParams};
use chemostat_core::{break_even, classify_winner, ChemostatParams, SystemState, WinnerLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SURVIVOR_MIN: f64 = 0.1;
const LOSER_MAX: f64 = 1e-4;
const SINGLE_RUN_BUDGET: Duration = Duration::from_secs(5);
const SWEEP_BUDGET: Duration = Duration::from_secs(600);
const NEGATIVITY_FLOOR: f64 = -1e-12;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

/// Lowest trajectory component seen by any suite.
struct Positivity {
    min: f64,
    trajectories: usize,
}

impl Positivity {
    fn record(&mut self, t: &Trajectory) {
        self.trajectories += 1;
        for v in t.states.iter().flatten() {
            self.min = self.min.min(*v);
        }
    }
}

fn reversal_params(q: f64) -> ChemostatParams {
    ChemostatParams {
        max_growth: vec![2.0, 1.0, 3.0],
        half_saturation: vec![1.0, 1.0, 1.0],
        removal: vec![1.0, 0.9, 0.8],
        yields: vec![1.0, 1.0, 0.5],
        dilution: 2.0,
        feed: 1.0,
        retained_fraction: q,
        extraction_rate: 0.2,
        extraction_exponent: 0.5,
    }
}

fn flip_params(q: f64) -> ChemostatParams {
    ChemostatParams {
        max_growth: vec![2.4, 1.0, 2.3],
        half_saturation: vec![1.0, 1.0, 1.0],
        removal: vec![1.0, 0.9, 1.1],
        yields: vec![1.0, 1.0, 0.5],
        dilution: 1.5,
        feed: 1.0,
        retained_fraction: q,
        extraction_rate: 0.2,
        extraction_exponent: 0.5,
    }
}

/// Retained fraction shared by the flip and sweep experiments.
const FLIP_Q: f64 = 0.7;

struct Run {
    label: WinnerLabel,
    final_state: Vec<f64>,
    elapsed: Duration,
}

fn run_once(params: &ChemostatParams, initial: &[f64], opts: &IntegrationOptions, pos: &mut Positivity) -> Run {
    let start = Instant::now();
    let traj = integrate(params, initial, opts).expect("integration");
    let label = classify_winner(params, &SystemState::from_slice(initial), opts).expect("classification");
    let elapsed = start.elapsed();
    pos.record(&traj);
    Run {
        label,
        final_state: traj.final_state().to_vec(),
        elapsed,
    }
}

/// Winner `expected` survives above the floor and every other species is
/// below the loser bound, within the time budget.
fn clean_win(run: &Run, expected: usize, species: usize) -> bool {
    run.label == WinnerLabel::Species(expected)
        && run.final_state[expected] > SURVIVOR_MIN
        && (0..species)
            .filter(|&i| i != expected)
            .all(|i| run.final_state[i] < LOSER_MAX)
        && run.elapsed < SINGLE_RUN_BUDGET
}

fn fmt_state(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("({})", parts.join(", "))
}

fn initial_density_reversal(opts: &IntegrationOptions, pos: &mut Positivity) -> Outcome {
    let low = vec![1.0, 1.0, 0.25, 2.0];
    let high = vec![1.0, 1.0, 1.0, 2.0];
    let fractions: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let rows = sweep_retained_fraction(
        &reversal_params(1.0),
        &fractions,
        &[low.clone(), high.clone()],
        opts,
        Execution::default(),
    )
    .expect("q sweep");
    println!("  retained-fraction sweep (x3(0) = 0.25 | x3(0) = 1):");
    for r in &rows {
        println!("    q = {:.2}: {} | {}", r.retained_fraction, r.labels[0], r.labels[1]);
    }
    let flipping: Vec<f64> = rows
        .iter()
        .filter(|r| r.labels == [WinnerLabel::Species(0), WinnerLabel::Species(2)])
        .map(|r| r.retained_fraction)
        .collect();
    let q = flipping.first().copied().unwrap_or(FLIP_Q);
    let params = reversal_params(q);
    let a = run_once(&params, &low, opts, pos);
    let b = run_once(&params, &high, opts, pos);
    let pass = clean_win(&a, 0, 3) && clean_win(&b, 2, 3);
    Outcome {
        id: 1,
        name: "initial-density reversal",
        pass,
        detail: format!(
            "q = {q} ({}); x3(0)=0.25 -> {} final {} in {:.2?}; x3(0)=1 -> {} final {} in {:.2?}",
            if flipping.is_empty() {
                "no q in [0, 1] flips the winner".to_string()
            } else {
                format!("{} of 21 q values flip", flipping.len())
            },
            a.label,
            fmt_state(&a.final_state),
            a.elapsed,
            b.label,
            fmt_state(&b.final_state),
            b.elapsed
        ),
    }
}

fn retained_fraction_flip(opts: &IntegrationOptions, pos: &mut Positivity) -> Outcome {
    let initial = [1.0, 1.0, 0.7, 2.0];
    let classical = run_once(&flip_params(1.0), &initial, opts, pos);
    let extracted = run_once(&flip_params(FLIP_Q), &initial, opts, pos);
    let levels: Vec<f64> = break_even(&flip_params(1.0))
        .unwrap()
        .levels
        .iter()
        .map(|l| l.level().unwrap_or(f64::INFINITY))
        .collect();
    let ordering = (levels[0] - 1.0 / 1.4).abs() < 1e-12
        && (levels[2] - 1.1 / 1.2).abs() < 1e-12
        && (levels[1] - 9.0).abs() < 1e-12;
    let pass = clean_win(&classical, 0, 3) && clean_win(&extracted, 2, 3) && ordering;
    Outcome {
        id: 2,
        name: "retained-fraction flip",
        pass,
        detail: format!(
            "break-even {}; q=1 -> {} final {}; q={FLIP_Q} -> {} final {}",
            fmt_state(&levels),
            classical.label,
            fmt_state(&classical.final_state),
            extracted.label,
            fmt_state(&extracted.final_state)
        ),
    }
}

fn dilution_sweep(opts: &IntegrationOptions) -> Outcome {
    let dilutions = [1.0, 1.5, 2.0, 2.5];
    let axis = |component| Axis {
        component,
        start: 0.1,
        end: 2.0,
        points: 21,
    };
    let grid = SurfaceGrid {
        base: vec![0.0, 1.0, 0.0, 2.0],
        axes: [axis(0), axis(1)],
        ray_component: 2,
        ray_start: 0.0,
        ray_end: 3.0,
        ray_samples: 7,
    };
    let params = flip_params(FLIP_Q);
    let start = Instant::now();
    let surfaces = sweep_dilution(&params, &dilutions, &grid, 1e-4, opts, Execution::default()).expect("sweep");
    let elapsed = start.elapsed();

    let mut pass = elapsed < SWEEP_BUDGET && surfaces.len() == dilutions.len();
    let mut parts = Vec::new();
    for s in &surfaces {
        let below_then_above = s.rays.iter().all(|r| {
            r.failure.is_none()
                && r.sided
                && r.labels
                    .iter()
                    .all(|l| matches!(l, WinnerLabel::Species(0) | WinnerLabel::Species(2)))
                && r.labels
                    .windows(2)
                    .all(|w| !(w[0] == WinnerLabel::Species(2) && w[1] == WinnerLabel::Species(0)))
        });
        let levels: Vec<f64> = s.rays.iter().filter_map(|r| r.level).collect();
        let points: Vec<BasinPoint> = s
            .rays
            .iter()
            .flat_map(|r| {
                r.samples.iter().zip(&r.labels).map(|(&v, &label)| {
                    let mut p = grid.base.clone();
                    p[0] = r.base[0];
                    p[1] = r.base[1];
                    p[2] = v;
                    BasinPoint {
                        initial: p,
                        label,
                        extended: false,
                    }
                })
            })
            .collect();
        let result = BasinResult {
            points,
            separatrix: Vec::new(),
            failures: Vec::new(),
        };
        let check = spot_check(
            &params.with_dilution(s.dilution),
            &result,
            opts,
            32,
            s.dilution.to_bits(),
            Execution::default(),
        );
        let ok = below_then_above && !s.washout && !levels.is_empty() && check.mismatches.is_empty();
        pass &= ok;
        let (lo, hi) = levels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        parts.push(format!(
            "D={}: {} crossings in [{lo:.3}, {hi:.3}], sided={below_then_above}, spot-check {}/{} stable",
            s.dilution,
            levels.len(),
            check.checked - check.mismatches.len(),
            check.checked
        ));
    }
    Outcome {
        id: 3,
        name: "dilution sweep separatrix",
        pass,
        detail: format!("{}; {:.1?} total", parts.join("; "), elapsed),
    }
}

fn random_chemostat(rng: &mut ChaCha8Rng, n: usize) -> ChemostatParams {
    ChemostatParams {
        max_growth: (0..n).map(|_| rng.gen_range(0.5..3.0)).collect(),
        half_saturation: (0..n).map(|_| rng.gen_range(0.2..2.0)).collect(),
        removal: (0..n).map(|_| rng.gen_range(0.1..1.5)).collect(),
        yields: (0..n).map(|_| rng.gen_range(0.3..2.0)).collect(),
        dilution: rng.gen_range(0.3..3.0),
        feed: rng.gen_range(0.5..3.0),
        retained_fraction: rng.gen_range(0.0..0.95),
        extraction_rate: rng.gen_range(0.01..1.0),
        extraction_exponent: rng.gen_range(0.2..0.9),
    }
}

fn interior_saddle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut found, mut zero_ok, mut positive_ok) = (0, 0, 0);
    let mut zero_counts = [0usize; 4];
    while found < 50 {
        let params = random_chemostat(&mut rng, 2);
        let Some(r) = solve_interior(&params).unwrap().report().cloned() else {
            continue;
        };
        found += 1;
        let lin = &r.linearization;
        let zeros = lin.zero_eigenvalue_count();
        zero_counts[zeros.min(3)] += 1;
        zero_ok += usize::from(zeros == 1);
        positive_ok += usize::from(lin.max_real_part() > ZERO_EIGENVALUE_TOLERANCE);
    }
    Outcome {
        id: 4,
        name: "interior saddle structure",
        pass: zero_ok == found && positive_ok == found,
        detail: format!(
            "{found} interior points; exactly n-1 = 1 zero eigenvalue: {zero_ok}/{found} \
             (zero-eigenvalue counts 0/1/2/3+: {zero_counts:?}); positive real part: {positive_ok}/{found}"
        ),
    }
}

fn sink_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut sets, mut agree, mut alternate_agree, mut sinks) = (0, 0, 0, 0);
    while sets < 200 {
        let n = rng.gen_range(1..=4);
        let params = random_chemostat(&mut rng, n);
        let roots = match solve_boundary_xn(&params) {
            Ok(r) => r,
            Err(EquilibriumError::NoEquilibrium(_)) => continue,
            Err(e) => panic!("{e}"),
        };
        sets += 1;
        let eq = &roots[0];
        let checks = eq.sink_checks.as_ref().unwrap();
        let stable = eq
            .linearization
            .eigenvalues
            .iter()
            .all(|l| l.re < -ZERO_EIGENVALUE_TOLERANCE);
        agree += usize::from(checks.sink == stable);
        let alternate = checks.alternate_trace_condition.holds
            && checks.alternate_determinant_condition.holds
            && checks.others_decline;
        alternate_agree += usize::from(alternate == stable);
        sinks += usize::from(stable);
    }
    Outcome {
        id: 5,
        name: "sink test consistency",
        pass: agree == sets,
        detail: format!(
            "{agree}/{sets} agree with the spectrum ({sinks} sinks); alternate grouping agrees in {alternate_agree}/{sets}"
        ),
    }
}

fn random_lv(rng: &mut ChaCha8Rng) -> LVParams {
    loop {
        let a = rng.gen_range(1.0..3.0);
        let params = LVParams {
            intrinsic_rate: a,
            self_limitation: [rng.gen_range(0.2..2.0), rng.gen_range(0.2..2.0)],
            cross_limitation: [rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)],
            removal: [a * rng.gen_range(0.1..0.9), rng.gen_range(0.1..3.0)],
            retained_fraction: rng.gen_range(0.0..0.95),
            extraction_rate: rng.gen_range(0.05..2.0),
            extraction_exponent: rng.gen_range(0.1..0.9),
        };
        if params.intrinsic_rate <= params.retained_fraction * params.removal[1] {
            continue;
        }
        // Thresholds far below the extinction tolerance would be pinned at t = 0.
        if extinction_threshold(&params).unwrap().threshold >= 1e-6 {
            return params;
        }
    }
}

fn finite_time_extinction(opts: &IntegrationOptions, pos: &mut Positivity) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut ok = 0;
    let mut worst: f64 = 0.0;
    let mut latest: f64 = 0.0;
    for _ in 0..100 {
        let params = random_lv(&mut rng);
        let cert = extinction_threshold(&params).unwrap();
        let x1 = rng.gen_range(0.1..3.0);
        match verify_exclusion_limit(&params, x1, 0.9 * cert.threshold, opts) {
            Ok(report) => {
                ok += 1;
                worst = worst.max(report.relative_error);
                latest = latest.max(report.extinction_time);
                pos.record(&report.trajectory);
            }
            Err(e) => println!("  extinction failure: {params:?}: {e}"),
        }
    }

    let example = LVParams {
        intrinsic_rate: 1.0,
        self_limitation: [1.0, 1.0],
        cross_limitation: [0.5, 0.5],
        removal: [0.5, 1.0],
        retained_fraction: 0.5,
        extraction_rate: 0.2,
        extraction_exponent: 0.5,
    };
    let cert = extinction_threshold(&example).unwrap();
    let direct = integrate(&example, &[0.5, 0.039], opts).unwrap();
    pos.record(&direct);
    let ode = ComparisonOde::from_certificate(&cert);
    let long = IntegrationOptions {
        t_end: 1e3,
        blowup_bound: 1e8,
        ..opts.clone()
    };
    let above = integrate(&ode, &[1.01 * ode.critical_value()], &long).unwrap();
    let below = integrate(&ode, &[0.99 * ode.critical_value()], &long).unwrap();
    let oracle = (cert.threshold - 0.04).abs() < 1e-14
        && direct.extinction_time(1).is_some()
        && above.events.iter().any(|e| e.kind == EventKind::Blowup)
        && !below.blew_up()
        && below.final_state()[0] < 1e-6;

    Outcome {
        id: 6,
        name: "finite-time extinction",
        pass: ok == 100 && oracle,
        detail: format!(
            "{ok}/100 runs extinct with x1 within {:.2e} relative (latest extinction t = {latest:.2}); \
             threshold 0.04 example: direct extinction at t = {:.4}, comparison blow-up above / decay below = {}",
            worst,
            direct.extinction_time(1).unwrap_or(f64::NAN),
            oracle
        ),
    }
}

fn conservation(opts: &IntegrationOptions, pos: &mut Positivity) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ok = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..50 {
        let n = rng.gen_range(1..=4);
        let mut params = random_chemostat(&mut rng, n);
        params.retained_fraction = 1.0;
        params.removal = vec![params.dilution; n];
        let mut initial: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        initial.push(rng.gen_range(0.0..3.0));
        let traj = integrate(&params, &initial, opts).unwrap();
        pos.record(&traj);
        let total = |y: &[f64]| y[n] + (0..n).map(|i| y[i] / params.yields[i]).sum::<f64>();
        let lhs = (total(traj.final_state()) - params.feed).abs();
        let rhs =
            (total(&initial) - params.feed).abs() * (-params.dilution * traj.final_time()).exp() + 10.0 * opts.abs_tol;
        worst_excess = worst_excess.max(lhs - rhs);
        ok += usize::from(lhs <= rhs);
    }
    Outcome {
        id: 7,
        name: "conservation",
        pass: ok == 50,
        detail: format!("{ok}/50 within bound; worst |total - S0| minus bound = {worst_excess:.3e}"),
    }
}

/// Scenarios near a stable extracted-species equilibrium: parameters within
/// 10% of the flip set, invaders start small, the winner near equilibrium.
fn yield_invariance(opts: &IntegrationOptions, pos: &mut Positivity) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut scenarios, mut tried, mut unchanged) = (0, 0, 0);
    let base = flip_params(FLIP_Q);
    while scenarios < 25 {
        tried += 1;
        let mut jitter = |v: f64| v * rng.gen_range(0.9..1.1);
        let mut params = base.clone();
        params.max_growth = base.max_growth.iter().map(|&v| jitter(v)).collect();
        params.half_saturation = base.half_saturation.iter().map(|&v| jitter(v)).collect();
        params.removal = base.removal.iter().map(|&v| jitter(v)).collect();
        params.extraction_rate = jitter(base.extraction_rate);
        params.retained_fraction = rng.gen_range(0.6..0.8);
        let Ok(roots) = solve_boundary_xn(&params) else {
            continue;
        };
        let Some(sink) = roots.iter().find(|r| r.sink_checks.as_ref().is_some_and(|c| c.sink)) else {
            continue;
        };
        let n = params.species();
        let mut initial: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.0..0.05)).collect();
        initial.push(sink.location.species[n - 1] * rng.gen_range(0.8..1.2));
        initial.push(sink.location.substrate * rng.gen_range(0.8..1.2));
        let before = run_once(&params, &initial, opts, pos);
        if before.label != WinnerLabel::Species(n - 1) {
            continue;
        }
        scenarios += 1;
        let mut halved = params.clone();
        for g in halved.yields.iter_mut().take(n - 1) {
            *g *= 0.5;
        }
        let after = run_once(&halved, &initial, opts, pos);
        unchanged += usize::from(after.label == before.label);
    }
    Outcome {
        id: 8,
        name: "yield invariance",
        pass: unchanged == scenarios,
        detail: format!("{unchanged}/{scenarios} winners unchanged after halving yields ({tried} candidates drawn)"),
    }
}

fn main() -> ExitCode {
    let opts = IntegrationOptions::default();
    let mut pos = Positivity {
        min: f64::INFINITY,
        trajectories: 0,
    };
    let mut outcomes = vec![
        initial_density_reversal(&opts, &mut pos),
        retained_fraction_flip(&opts, &mut pos),
        dilution_sweep(&opts),
        interior_saddle(),
        sink_consistency(),
        finite_time_extinction(&opts, &mut pos),
        conservation(&opts, &mut pos),
        yield_invariance(&opts, &mut pos),
    ];
    outcomes.push(Outcome {
        id: 9,
        name: "quasi-positivity",
        pass: pos.min >= NEGATIVITY_FLOOR,
        detail: format!("minimum component {:e} over {} trajectories", pos.min, pos.trajectories),
    });

    let mut failed = 0;
    for o in &outcomes {
        println!(
            "criterion {} [{}] {}: {}",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
