//! Chemostat extraction model: parameters, state, Monod kinetics and the
//! right-hand side of the competition system.
//!
//! The model tracks `n` species competing for a single substrate `S`:
//!
//! ```text
//! dxᵢ/dt = xᵢ (fᵢ(S) − Dᵢ)                         i < n
//! dxₙ/dt = xₙ (fₙ(S) − q·Dₙ) − (1 − q)·k·xₙᵖ
//! dS/dt  = D (S⁰ − S) − Σᵢ fᵢ(S) xᵢ / γᵢ            i = 1..n
//! fᵢ(S)  = mᵢ S / (S + aᵢ)
//! ```
//!
//! Only the last species is subject to the density-dependent extraction
//! term. With `q = 1` the system is the classical chemostat.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::VectorField;

/// Negative values down to this magnitude are treated as rounding noise and
/// clamped to zero.
pub const NEGATIVE_TOLERANCE: f64 = 1e-12;

/// Relative tolerance under which two break-even levels count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}` = {value}: requires {constraint}")]
    InvalidParameter {
        name: String,
        value: String,
        constraint: &'static str,
    },
    #[error("`{name}` has {found} entries but the model has {expected} species")]
    DimensionMismatch {
        name: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("state component `{component}` = {value} is negative")]
    NegativeState { component: String, value: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("break-even levels of species {first} and {second} tie at {level}")]
    BreakEvenTie { first: usize, second: usize, level: f64 },
}

fn invalid(name: impl Into<String>, value: impl fmt::Display, constraint: &'static str) -> ModelError {
    ModelError::InvalidParameter {
        name: name.into(),
        value: value.to_string(),
        constraint,
    }
}

/// Monod (Michaelis–Menten) response `m·S/(S + a)`.
pub fn monod(substrate: f64, max_rate: f64, half_saturation: f64) -> Result<f64, ModelError> {
    if !(substrate >= 0.0) {
        return Err(ModelError::Domain(format!(
            "substrate concentration must be nonnegative, got {substrate}"
        )));
    }
    if !(max_rate > 0.0) || !(half_saturation > 0.0) {
        return Err(ModelError::Domain(format!(
            "Monod constants must be positive, got m = {max_rate}, a = {half_saturation}"
        )));
    }
    Ok(monod_unchecked(substrate, max_rate, half_saturation))
}

#[inline]
pub(crate) fn monod_unchecked(substrate: f64, max_rate: f64, half_saturation: f64) -> f64 {
    max_rate * substrate / (substrate + half_saturation)
}

/// Full parameter set of the extraction chemostat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChemostatParams {
    /// Maximal growth rates `mᵢ`.
    pub max_growth: Vec<f64>,
    /// Half-saturation constants `aᵢ`.
    pub half_saturation: Vec<f64>,
    /// Per-species removal rates `Dᵢ`, stored independently of the dilution rate.
    pub removal: Vec<f64>,
    /// Yield constants `γᵢ`.
    pub yields: Vec<f64>,
    /// Substrate dilution rate `D`.
    pub dilution: f64,
    /// Substrate feed concentration `S⁰`.
    pub feed: f64,
    /// Fraction `q` of the last species' removal that stays linear.
    pub retained_fraction: f64,
    /// Density-dependent removal coefficient `k`.
    pub extraction_rate: f64,
    /// Removal exponent `p`.
    pub extraction_exponent: f64,
}

impl ChemostatParams {
    pub fn species(&self) -> usize {
        self.max_growth.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.species();
        if n == 0 {
            return Err(invalid("max_growth", "[]", "n ≥ 1"));
        }
        for (name, values) in [
            ("half_saturation", &self.half_saturation),
            ("removal", &self.removal),
            ("yields", &self.yields),
        ] {
            if values.len() != n {
                return Err(ModelError::DimensionMismatch {
                    name,
                    expected: n,
                    found: values.len(),
                });
            }
        }
        for (name, values) in [
            ("max_growth", &self.max_growth),
            ("half_saturation", &self.half_saturation),
            ("removal", &self.removal),
            ("yields", &self.yields),
        ] {
            for (i, &v) in values.iter().enumerate() {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(invalid(format!("{name}[{}]", i + 1), v, "a finite value > 0"));
                }
            }
        }
        for (name, v) in [
            ("dilution", self.dilution),
            ("feed", self.feed),
            ("extraction_rate", self.extraction_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, v, "a finite value > 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.retained_fraction) {
            return Err(invalid("retained_fraction", self.retained_fraction, "0 ≤ q ≤ 1"));
        }
        if !(self.extraction_exponent > 0.0 && self.extraction_exponent <= 1.0) {
            return Err(invalid("extraction_exponent", self.extraction_exponent, "0 < p ≤ 1"));
        }
        Ok(())
    }

    /// Growth rate `fᵢ(S)` of species `i` (0-based).
    #[inline]
    pub fn growth(&self, i: usize, substrate: f64) -> f64 {
        monod_unchecked(substrate, self.max_growth[i], self.half_saturation[i])
    }

    /// `dfᵢ/dS = aᵢmᵢ/(S + aᵢ)²`.
    #[inline]
    pub fn growth_slope(&self, i: usize, substrate: f64) -> f64 {
        let a = self.half_saturation[i];
        a * self.max_growth[i] / ((substrate + a) * (substrate + a))
    }

    /// True when the extraction term vanishes identically (`q = 1`).
    pub fn is_classical(&self) -> bool {
        self.retained_fraction == 1.0
    }

    /// True when the extraction term is sublinear and active, the regime in
    /// which the vector field is not Lipschitz at `xₙ = 0`.
    pub fn is_sublinear(&self) -> bool {
        self.retained_fraction < 1.0 && self.extraction_exponent < 1.0
    }

    /// Linear removal applied to the extracted species, `q·Dₙ`.
    pub fn linear_removal_last(&self) -> f64 {
        self.retained_fraction * self.removal[self.species() - 1]
    }

    /// Extraction term `(1 − q)·k·xᵖ`, with `x` clamped to zero at or below
    /// [`NEGATIVE_TOLERANCE`].
    #[inline]
    pub fn extraction(&self, density: f64) -> f64 {
        if density <= NEGATIVE_TOLERANCE {
            return 0.0;
        }
        let coefficient = (1.0 - self.retained_fraction) * self.extraction_rate;
        if coefficient == 0.0 {
            0.0
        } else if self.extraction_exponent == 1.0 {
            coefficient * density
        } else {
            coefficient * density.powf(self.extraction_exponent)
        }
    }

    pub fn with_dilution(&self, dilution: f64) -> Self {
        Self {
            dilution,
            ..self.clone()
        }
    }

    pub fn with_retained_fraction(&self, retained_fraction: f64) -> Self {
        Self {
            retained_fraction,
            ..self.clone()
        }
    }

    /// Writes the clamped right-hand side for the flat state `[x₁..xₙ, S]`.
    pub(crate) fn rhs_into(&self, y: &[f64], dy: &mut [f64]) {
        let n = self.species();
        let substrate = y[n].max(0.0);
        let mut uptake = 0.0;
        for i in 0..n {
            let x = y[i].max(0.0);
            let f = self.growth(i, substrate);
            uptake += f * x / self.yields[i];
            dy[i] = if i + 1 < n {
                x * (f - self.removal[i])
            } else {
                x * (f - self.linear_removal_last()) - self.extraction(x)
            };
        }
        dy[n] = self.dilution * (self.feed - substrate) - uptake;
    }
}

/// Species densities plus substrate at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemState {
    pub species: Vec<f64>,
    pub substrate: f64,
}

impl SystemState {
    pub fn new(species: Vec<f64>, substrate: f64) -> Self {
        Self { species, substrate }
    }

    /// Flat `[x₁, …, xₙ, S]` layout used by the integrator.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.species.clone();
        v.push(self.substrate);
        v
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let (substrate, species) = values.split_last().expect("state has a substrate entry");
        Self {
            species: species.to_vec(),
            substrate: *substrate,
        }
    }

    /// Checks nonnegativity, clamping entries inside the rounding band.
    pub fn clamped(&self) -> Result<Self, ModelError> {
        let clamp = |name: String, v: f64| -> Result<f64, ModelError> {
            if v >= 0.0 {
                Ok(v)
            } else if v >= -NEGATIVE_TOLERANCE {
                Ok(0.0)
            } else {
                Err(ModelError::NegativeState {
                    component: name,
                    value: v,
                })
            }
        };
        let species = self
            .species
            .iter()
            .enumerate()
            .map(|(i, &v)| clamp(format!("x{}", i + 1), v))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            species,
            substrate: clamp("S".into(), self.substrate)?,
        })
    }
}

/// Time derivative of a [`SystemState`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateDerivative {
    pub species: Vec<f64>,
    pub substrate: f64,
}

/// Right-hand side of the extraction chemostat at `state`.
pub fn cem_rhs(params: &ChemostatParams, state: &SystemState) -> Result<StateDerivative, ModelError> {
    params.validate()?;
    if state.species.len() != params.species() {
        return Err(ModelError::DimensionMismatch {
            name: "species",
            expected: params.species(),
            found: state.species.len(),
        });
    }
    let state = state.clamped()?;
    let y = state.to_vec();
    let mut dy = vec![0.0; y.len()];
    params.rhs_into(&y, &mut dy);
    Ok(StateDerivative::from_slice(&dy))
}

impl StateDerivative {
    fn from_slice(values: &[f64]) -> Self {
        let (substrate, species) = values.split_last().expect("derivative has a substrate entry");
        Self {
            species: species.to_vec(),
            substrate: *substrate,
        }
    }
}

impl VectorField for ChemostatParams {
    fn dimension(&self) -> usize {
        self.species() + 1
    }

    fn population_count(&self) -> usize {
        self.species()
    }

    fn evaluate(&self, state: &[f64], derivative: &mut [f64]) {
        self.rhs_into(state, derivative);
    }
}

/// Outcome of a competition: which species (0-based index) is the sole
/// survivor, or none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WinnerLabel {
    Species(usize),
    Washout,
    Undecided,
}

impl WinnerLabel {
    pub fn is_decided(&self) -> bool {
        !matches!(self, WinnerLabel::Undecided)
    }
}

impl fmt::Display for WinnerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WinnerLabel::Species(i) => write!(f, "species-{}", i + 1),
            WinnerLabel::Washout => f.write_str("washout"),
            WinnerLabel::Undecided => f.write_str("undecided"),
        }
    }
}

impl std::str::FromStr for WinnerLabel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "washout" => Ok(WinnerLabel::Washout),
            "undecided" => Ok(WinnerLabel::Undecided),
            other => other
                .strip_prefix("species-")
                .and_then(|i| i.parse::<usize>().ok())
                .filter(|&i| i >= 1)
                .map(|i| WinnerLabel::Species(i - 1))
                .ok_or_else(|| ModelError::Domain(format!("unknown winner label `{other}`"))),
        }
    }
}

impl Serialize for WinnerLabel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for WinnerLabel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "level")]
pub enum BreakEven {
    Attainable(f64),
    Unattainable,
}

impl BreakEven {
    pub fn level(&self) -> Option<f64> {
        match self {
            BreakEven::Attainable(g) => Some(*g),
            BreakEven::Unattainable => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakEvenReport {
    pub levels: Vec<BreakEven>,
    /// Removal rate each level was solved against.
    pub effective_removal: Vec<f64>,
    pub predicted_winner: WinnerLabel,
    /// Set when the last species has sublinear extraction: its level is then
    /// the high-density limit `fₙ(Γ) = q·Dₙ` and the actual outcome depends
    /// on initial densities.
    pub density_dependent: bool,
}

/// Break-even substrate levels `Γᵢ` solving `fᵢ(Γᵢ) = Dᵢ` and the classical
/// competitive-exclusion prediction.
///
/// The last species is solved against `q·Dₙ + (1 − q)·k` when `p = 1`, against
/// `Dₙ` when `q = 1`, and against `q·Dₙ` otherwise.
pub fn break_even(params: &ChemostatParams) -> Result<BreakEvenReport, ModelError> {
    params.validate()?;
    let n = params.species();
    let q = params.retained_fraction;
    let density_dependent = params.is_sublinear();
    let effective_removal: Vec<f64> = (0..n)
        .map(|i| {
            if i + 1 < n || q == 1.0 {
                params.removal[i]
            } else if params.extraction_exponent == 1.0 {
                q * params.removal[i] + (1.0 - q) * params.extraction_rate
            } else {
                q * params.removal[i]
            }
        })
        .collect();
    let levels: Vec<BreakEven> = (0..n)
        .map(|i| {
            let (m, a, d) = (params.max_growth[i], params.half_saturation[i], effective_removal[i]);
            if m > d {
                BreakEven::Attainable(a * d / (m - d))
            } else {
                BreakEven::Unattainable
            }
        })
        .collect();

    let best = levels
        .iter()
        .enumerate()
        .filter_map(|(i, level)| level.level().map(|g| (i, g)))
        .filter(|&(_, g)| g < params.feed)
        .min_by(|a, b| a.1.total_cmp(&b.1));
    if let Some((w, g)) = best {
        for (i, level) in levels.iter().enumerate() {
            let Some(h) = level.level() else { continue };
            if i != w && (g - h).abs() <= TIE_TOLERANCE * g.max(h) {
                return Err(ModelError::BreakEvenTie {
                    first: w.min(i) + 1,
                    second: w.max(i) + 1,
                    level: g,
                });
            }
        }
    }

    Ok(BreakEvenReport {
        levels,
        effective_removal,
        predicted_winner: best.map_or(WinnerLabel::Washout, |(i, _)| WinnerLabel::Species(i)),
        density_dependent,
    })
}
