//! Dormand–Prince 5(4) integration with extinction pinning and blow-up abort.
//!
//! The vector fields handled here are defined on the nonnegative orthant and
//! may be non-Lipschitz at zero density, where solutions can reach zero in
//! finite time. After every accepted step a population below
//! `extinction_eps` whose drift is nonpositive is set to exactly zero and kept
//! there; the crossing time is located on the dense-output polynomial.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ChemostatParams, SystemState, WinnerLabel, NEGATIVE_TOLERANCE};

/// An autonomous vector field whose leading `population_count` components
/// are population densities.
pub trait VectorField {
    fn dimension(&self) -> usize;
    fn population_count(&self) -> usize;
    fn evaluate(&self, state: &[f64], derivative: &mut [f64]);

    /// Whether the field lives on the nonnegative orthant. Negative
    /// components are then rejected initially and clamped after each step.
    fn nonnegative(&self) -> bool {
        true
    }
}

impl<F: VectorField + ?Sized> VectorField for &F {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn population_count(&self) -> usize {
        (**self).population_count()
    }
    fn evaluate(&self, state: &[f64], derivative: &mut [f64]) {
        (**self).evaluate(state, derivative)
    }
    fn nonnegative(&self) -> bool {
        (**self).nonnegative()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationOptions {
    pub t_end: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Densities below this (with nonpositive drift) are pinned to zero.
    pub extinction_eps: f64,
    /// Upper step bound. Near equilibrium the step otherwise grows until
    /// `h·D` reaches the edge of the method's stability region, where the
    /// error controller holds the dilution mode at the `rel_tol` level.
    pub max_step: f64,
    pub min_step: f64,
    /// Integration aborts once the max-norm of the state exceeds this.
    pub blowup_bound: f64,
    pub max_steps: usize,
    /// Density a species must exceed at `t_end` to be called the winner.
    pub survivor_floor: f64,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            t_end: 500.0,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            extinction_eps: 1e-9,
            max_step: 1.0,
            min_step: 1e-12,
            blowup_bound: 1e6,
            max_steps: 2_000_000,
            survivor_floor: 1e-2,
        }
    }
}

impl IntegrationOptions {
    pub fn validate(&self) -> Result<(), IntegrationError> {
        let check = |ok: bool, what: &'static str| {
            if ok {
                Ok(())
            } else {
                Err(IntegrationError::InvalidOptions(what))
            }
        };
        check(self.t_end > 0.0 && self.t_end.is_finite(), "t_end > 0")?;
        check(self.rel_tol > 0.0, "rel_tol > 0")?;
        check(self.abs_tol > 0.0, "abs_tol > 0")?;
        check(self.extinction_eps > 0.0, "extinction_eps > 0")?;
        check(
            self.min_step > 0.0 && self.min_step < self.max_step,
            "0 < min_step < max_step",
        )?;
        check(self.blowup_bound > 0.0, "blowup_bound > 0")?;
        check(self.max_steps > 0, "max_steps > 0")?;
        check(
            self.survivor_floor > self.extinction_eps,
            "survivor_floor > extinction_eps",
        )
    }

    pub fn with_t_end(&self, t_end: f64) -> Self {
        Self { t_end, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Extinction,
    Blowup,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    /// 0-based population index; `None` for blow-up.
    pub component: Option<usize>,
    pub time: f64,
}

/// Accepted steps of an integration. Rows of `states` use the flat layout of
/// the vector field (for the chemostat `[x₁, …, xₙ, S]`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub events: Vec<Event>,
    pub population_count: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn extinction_time(&self, component: usize) -> Option<f64> {
        self.events
            .iter()
            .find(|e| e.kind == EventKind::Extinction && e.component == Some(component))
            .map(|e| e.time)
    }

    pub fn blew_up(&self) -> bool {
        self.events.iter().any(|e| e.kind == EventKind::Blowup)
    }

    /// Chemostat view of sample `index`.
    pub fn system_state(&self, index: usize) -> SystemState {
        SystemState::from_slice(&self.states[index])
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("invalid integration options: requires {0}")]
    InvalidOptions(&'static str),
    #[error("initial state has {found} components, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("initial component {component} = {value} is negative")]
    NegativeInitial { component: usize, value: f64 },
    #[error("step size underflow at t = {time} (h = {step}); problem is too stiff for the explicit method")]
    StepUnderflow {
        time: f64,
        step: f64,
        partial: Box<Trajectory>,
    },
    #[error("step budget of {limit} exhausted at t = {time}")]
    StepBudget {
        limit: usize,
        time: f64,
        partial: Box<Trajectory>,
    },
}

// Dormand–Prince 5(4) tableau. The fields are autonomous, so the nodes cᵢ
// never appear.
const A21: f64 = 0.2;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// Step-size controller (PI, Hairer's DOPRI5 defaults).
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - BETA * 0.75;
const MAX_SHRINK: f64 = 5.0;
const MAX_GROWTH: f64 = 0.1;

/// Event times are bisected on the dense output to this accuracy.
const EVENT_TIME_TOL: f64 = 1e-10;

struct Stepper<'f, F: ?Sized> {
    field: &'f F,
    opts: &'f IntegrationOptions,
    dim: usize,
    pinned: Vec<bool>,
}

impl<F: VectorField + ?Sized> Stepper<'_, F> {
    fn eval(&mut self, y: &[f64], dy: &mut [f64]) {
        self.field.evaluate(y, dy);
        for (d, &pinned) in dy.iter_mut().zip(&self.pinned) {
            if pinned {
                *d = 0.0;
            }
        }
    }

    fn error_scale(&self, a: f64, b: f64) -> f64 {
        self.opts.abs_tol + self.opts.rel_tol * a.abs().max(b.abs())
    }

    fn initial_step(&mut self, y: &[f64], f0: &[f64]) -> f64 {
        let dim = self.dim as f64;
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..self.dim {
            let sk = self.error_scale(y[i], y[i]);
            d0 += (y[i] / sk).powi(2);
            d1 += (f0[i] / sk).powi(2);
        }
        let (d0, d1) = ((d0 / dim).sqrt(), (d1 / dim).sqrt());
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(self.opts.max_step).min(self.opts.t_end);
        let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
        let mut f1 = vec![0.0; self.dim];
        self.eval(&y1, &mut f1);
        let mut d2 = 0.0;
        for i in 0..self.dim {
            let sk = self.error_scale(y[i], y[i]);
            d2 += ((f1[i] - f0[i]) / sk).powi(2);
        }
        let d2 = (d2 / dim).sqrt() / h0;
        let dmax = d1.max(d2);
        let h1 = if dmax <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / dmax).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.opts.max_step).max(self.opts.min_step)
    }
}

/// Dense-output coefficients of one accepted step.
struct Dense<'a> {
    y0: &'a [f64],
    diff: &'a [f64],
    c2: &'a [f64],
    c3: &'a [f64],
    c4: &'a [f64],
}

impl Dense<'_> {
    fn component(&self, i: usize, theta: f64) -> f64 {
        let s1 = 1.0 - theta;
        self.y0[i] + theta * (self.diff[i] + s1 * (self.c2[i] + theta * (self.c3[i] + s1 * self.c4[i])))
    }
}

/// Integrates `field` from `initial` over `[0, opts.t_end]`, recording every
/// accepted step.
pub fn integrate<F: VectorField + ?Sized>(
    field: &F,
    initial: &[f64],
    opts: &IntegrationOptions,
) -> Result<Trajectory, IntegrationError> {
    run(field, initial, opts, true)
}

/// Like [`integrate`] but keeps only the initial and final samples.
pub fn integrate_to_end<F: VectorField + ?Sized>(
    field: &F,
    initial: &[f64],
    opts: &IntegrationOptions,
) -> Result<Trajectory, IntegrationError> {
    run(field, initial, opts, false)
}

fn run<F: VectorField + ?Sized>(
    field: &F,
    initial: &[f64],
    opts: &IntegrationOptions,
    record: bool,
) -> Result<Trajectory, IntegrationError> {
    opts.validate()?;
    let dim = field.dimension();
    let populations = field.population_count();
    if initial.len() != dim {
        return Err(IntegrationError::Dimension {
            expected: dim,
            found: initial.len(),
        });
    }
    let orthant = field.nonnegative();
    let mut y = Vec::with_capacity(dim);
    for (i, &v) in initial.iter().enumerate() {
        if orthant && (v < -NEGATIVE_TOLERANCE || v.is_nan()) {
            return Err(IntegrationError::NegativeInitial { component: i, value: v });
        }
        y.push(if orthant { v.max(0.0) } else { v });
    }

    let mut st = Stepper {
        field,
        opts,
        dim,
        pinned: vec![false; dim],
    };
    let mut traj = Trajectory {
        population_count: populations,
        ..Trajectory::default()
    };

    let mut k1 = vec![0.0; dim];
    st.eval(&y, &mut k1);
    let mut pinned_any = false;
    for i in 0..populations {
        if y[i] < opts.extinction_eps && k1[i] <= 0.0 {
            y[i] = 0.0;
            st.pinned[i] = true;
            pinned_any = true;
            traj.events.push(Event {
                kind: EventKind::Extinction,
                component: Some(i),
                time: 0.0,
            });
        }
    }
    if pinned_any {
        st.eval(&y, &mut k1);
    }
    let mut t = 0.0;
    traj.times.push(t);
    traj.states.push(y.clone());
    if max_norm(&y) > opts.blowup_bound {
        traj.events.push(Event {
            kind: EventKind::Blowup,
            component: None,
            time: 0.0,
        });
        return Ok(traj);
    }

    let mut h = st.initial_step(&y, &k1);
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut steps = 0usize;

    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut k5 = vec![0.0; dim];
    let mut k6 = vec![0.0; dim];
    let mut k7 = vec![0.0; dim];
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut diff = vec![0.0; dim];
    let mut c2 = vec![0.0; dim];
    let mut c3 = vec![0.0; dim];
    let mut c4 = vec![0.0; dim];

    while t < opts.t_end {
        if steps >= opts.max_steps {
            push_final(&mut traj, record, t, &y);
            return Err(IntegrationError::StepBudget {
                limit: opts.max_steps,
                time: t,
                partial: Box::new(traj),
            });
        }
        steps += 1;

        let remaining = opts.t_end - t;
        let last = h >= remaining;
        if last {
            h = remaining;
        }

        for i in 0..dim {
            stage[i] = y[i] + h * A21 * k1[i];
        }
        st.eval(&stage, &mut k2);
        for i in 0..dim {
            stage[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        st.eval(&stage, &mut k3);
        for i in 0..dim {
            stage[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        st.eval(&stage, &mut k4);
        for i in 0..dim {
            stage[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        st.eval(&stage, &mut k5);
        for i in 0..dim {
            stage[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        st.eval(&stage, &mut k6);
        for i in 0..dim {
            y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        st.eval(&y_new, &mut k7);

        let mut err = 0.0;
        for i in 0..dim {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = st.error_scale(y[i], y_new[i]);
            err += (e / sk).powi(2);
        }
        let err = (err / dim as f64).sqrt();

        let fac11 = err.powf(EXPO);
        if err <= 1.0 && err.is_finite() {
            // Dense output for this step, taken before any clamping.
            for i in 0..dim {
                diff[i] = y_new[i] - y[i];
                c2[i] = h * k1[i] - diff[i];
                c3[i] = diff[i] - h * k7[i] - c2[i];
                c4[i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let t_new = if last { opts.t_end } else { t + h };

            let mut modified = false;
            for i in 0..populations {
                if st.pinned[i] {
                    continue;
                }
                if y_new[i] < opts.extinction_eps && k7[i] <= 0.0 {
                    let dense = Dense {
                        y0: &y,
                        diff: &diff,
                        c2: &c2,
                        c3: &c3,
                        c4: &c4,
                    };
                    let time = crossing_time(&dense, i, opts.extinction_eps, t, h);
                    traj.events.push(Event {
                        kind: EventKind::Extinction,
                        component: Some(i),
                        time,
                    });
                    st.pinned[i] = true;
                    y_new[i] = 0.0;
                    modified = true;
                }
            }
            for v in y_new.iter_mut().filter(|_| orthant) {
                if *v < 0.0 {
                    *v = 0.0;
                    modified = true;
                }
            }
            if modified {
                st.eval(&y_new, &mut k7);
            }

            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            if record {
                traj.times.push(t);
                traj.states.push(y.clone());
            }
            if max_norm(&y) > opts.blowup_bound {
                push_final(&mut traj, record, t, &y);
                traj.events.push(Event {
                    kind: EventKind::Blowup,
                    component: None,
                    time: t,
                });
                return Ok(traj);
            }

            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(MAX_GROWTH, MAX_SHRINK);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            fac_old = err.max(1e-4);
            last_rejected = false;
            h = h_new.min(opts.max_step);
        } else {
            let shrink = if err.is_finite() {
                (fac11 / SAFETY).min(MAX_SHRINK)
            } else {
                MAX_SHRINK
            };
            h /= shrink.max(1.0);
            last_rejected = true;
            if h < opts.min_step && opts.t_end - t > opts.min_step {
                push_final(&mut traj, record, t, &y);
                return Err(IntegrationError::StepUnderflow {
                    time: t,
                    step: h,
                    partial: Box::new(traj),
                });
            }
        }
    }

    push_final(&mut traj, record, t, &y);
    Ok(traj)
}

fn push_final(traj: &mut Trajectory, record: bool, t: f64, y: &[f64]) {
    if !record && traj.times.last() != Some(&t) {
        traj.times.push(t);
        traj.states.push(y.to_vec());
    }
}

fn max_norm(y: &[f64]) -> f64 {
    y.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn crossing_time(dense: &Dense<'_>, i: usize, level: f64, t: f64, h: f64) -> f64 {
    if dense.y0[i] <= level {
        return t;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while h * (hi - lo) > EVENT_TIME_TOL {
        let mid = 0.5 * (lo + hi);
        if dense.component(i, mid) >= level {
            lo = mid;
        } else {
            hi = mid;
        }
        if mid == lo && mid == hi {
            break;
        }
    }
    t + h * 0.5 * (lo + hi)
}

/// Labels the outcome of a final state: the sole population above
/// `survivor_floor` with every other below `extinction_eps`, washout when all
/// are below `extinction_eps`, undecided otherwise.
pub fn label_final_state(state: &[f64], populations: usize, opts: &IntegrationOptions) -> WinnerLabel {
    let densities = &state[..populations];
    let survivors: Vec<usize> = (0..populations)
        .filter(|&i| densities[i] > opts.survivor_floor)
        .collect();
    let extinct = densities.iter().filter(|&&x| x < opts.extinction_eps).count();
    if extinct == populations {
        WinnerLabel::Washout
    } else if survivors.len() == 1 && extinct == populations - 1 {
        WinnerLabel::Species(survivors[0])
    } else {
        WinnerLabel::Undecided
    }
}

/// Integrates to `t_end` and labels the surviving population. A run that
/// blows up is undecided.
pub fn classify_field<F: VectorField + ?Sized>(
    field: &F,
    initial: &[f64],
    opts: &IntegrationOptions,
) -> Result<WinnerLabel, IntegrationError> {
    let traj = integrate_to_end(field, initial, opts)?;
    if traj.blew_up() {
        return Ok(WinnerLabel::Undecided);
    }
    Ok(label_final_state(traj.final_state(), field.population_count(), opts))
}

/// Winner of the chemostat competition started from `initial`.
pub fn classify_winner(
    params: &ChemostatParams,
    initial: &SystemState,
    opts: &IntegrationOptions,
) -> Result<WinnerLabel, IntegrationError> {
    classify_field(params, &initial.to_vec(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay(f64);

    impl VectorField for Decay {
        fn dimension(&self) -> usize {
            1
        }
        fn population_count(&self) -> usize {
            0
        }
        fn evaluate(&self, y: &[f64], dy: &mut [f64]) {
            dy[0] = -self.0 * y[0];
        }
        fn nonnegative(&self) -> bool {
            false
        }
    }

    struct Harmonic;

    impl VectorField for Harmonic {
        fn dimension(&self) -> usize {
            2
        }
        fn population_count(&self) -> usize {
            0
        }
        fn evaluate(&self, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
        fn nonnegative(&self) -> bool {
            false
        }
    }

    /// `x' = −c·√x`: reaches zero at `t* = 2√x₀ / c`.
    struct SqrtDecay(f64);

    impl VectorField for SqrtDecay {
        fn dimension(&self) -> usize {
            1
        }
        fn population_count(&self) -> usize {
            1
        }
        fn evaluate(&self, y: &[f64], dy: &mut [f64]) {
            dy[0] = -self.0 * y[0].max(0.0).sqrt();
        }
    }

    /// `u' = u²`, blowing up at `t = 1/u₀`.
    struct Quadratic;

    impl VectorField for Quadratic {
        fn dimension(&self) -> usize {
            1
        }
        fn population_count(&self) -> usize {
            0
        }
        fn evaluate(&self, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[0] * y[0];
        }
    }

    fn opts(t_end: f64) -> IntegrationOptions {
        IntegrationOptions {
            t_end,
            ..IntegrationOptions::default()
        }
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        let traj = integrate(&Decay(0.7), &[2.0], &opts(5.0)).unwrap();
        let exact = 2.0 * (-0.7f64 * 5.0).exp();
        assert_eq!(traj.final_time(), 5.0);
        assert!((traj.final_state()[0] - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn harmonic_oscillator_phase() {
        let traj = integrate(&Harmonic, &[1.0, 0.0], &opts(10.0)).unwrap();
        let y = traj.final_state();
        assert!((y[0] - 10f64.cos()).abs() < 1e-7);
        assert!((y[1] + 10f64.sin()).abs() < 1e-7);
    }

    #[test]
    fn finite_time_extinction_is_located() {
        let traj = integrate(&SqrtDecay(1.0), &[1.0], &opts(5.0)).unwrap();
        let t = traj.extinction_time(0).expect("extinction event");
        // Level crossing at eps: √x = 1 − t/2 ⇒ t = 2(1 − √eps).
        let expected = 2.0 * (1.0 - 1e-9f64.sqrt());
        assert!((t - expected).abs() < 1e-6, "t = {t}, expected {expected}");
        assert_eq!(traj.final_state()[0], 0.0);
        for (time, state) in traj.times.iter().zip(&traj.states) {
            if *time > t {
                assert_eq!(state[0], 0.0);
            }
        }
    }

    #[test]
    fn blowup_aborts_with_event() {
        let traj = integrate(&Quadratic, &[1.0], &opts(5.0)).unwrap();
        assert!(traj.blew_up());
        let t = traj.final_time();
        assert!(t < 1.0 && t > 0.99, "aborted at {t}");
    }

    #[test]
    fn times_strictly_increasing() {
        let traj = integrate(&Harmonic, &[1.0, 0.0], &opts(3.0)).unwrap();
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn tiny_step_budget_reports_partial_trajectory() {
        let o = IntegrationOptions {
            max_steps: 3,
            ..opts(100.0)
        };
        match integrate(&Harmonic, &[1.0, 0.0], &o) {
            Err(IntegrationError::StepBudget { partial, .. }) => assert!(!partial.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn step_underflow_is_reported() {
        // Blow-up disabled: the solution runs into a pole and steps collapse.
        let o = IntegrationOptions {
            blowup_bound: f64::INFINITY,
            min_step: 1e-6,
            ..opts(2.0)
        };
        match integrate(&Quadratic, &[1.0], &o) {
            Err(IntegrationError::StepUnderflow { time, partial, .. }) => {
                assert!((time - 1.0).abs() < 1e-6, "stopped at {time}");
                assert!(!partial.is_empty());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_options_and_inputs() {
        let bad = IntegrationOptions {
            min_step: 1.0,
            max_step: 0.5,
            ..opts(1.0)
        };
        assert!(matches!(
            integrate(&Decay(1.0), &[1.0], &bad),
            Err(IntegrationError::InvalidOptions(_))
        ));
        assert!(matches!(
            integrate(&Decay(1.0), &[1.0, 2.0], &opts(1.0)),
            Err(IntegrationError::Dimension { .. })
        ));
        assert!(matches!(
            integrate(&SqrtDecay(1.0), &[-1.0], &opts(1.0)),
            Err(IntegrationError::NegativeInitial { .. })
        ));
    }

    #[test]
    fn labels_final_states() {
        let o = IntegrationOptions::default();
        assert_eq!(label_final_state(&[0.5, 0.0, 0.0, 1.0], 3, &o), WinnerLabel::Species(0));
        assert_eq!(label_final_state(&[0.0, 0.0, 0.0, 1.0], 3, &o), WinnerLabel::Washout);
        assert_eq!(label_final_state(&[0.5, 0.5, 0.0, 1.0], 3, &o), WinnerLabel::Undecided);
        assert_eq!(label_final_state(&[0.5, 1e-5, 0.0, 1.0], 3, &o), WinnerLabel::Undecided);
    }
}
