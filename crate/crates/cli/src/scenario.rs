use chemostat_core::basin::{GridSpec, SurfaceGrid, DEFAULT_SEPARATRIX_TOL};
use chemostat_core::reduction::LVParams;
use chemostat_core::{ChemostatParams, IntegrationOptions, SystemState};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version written into, and required from, every scenario and output file.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cem,
    Lv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LvInitial {
    pub x1: f64,
    pub x2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Cem {
        params: ChemostatParams,
        initial: SystemState,
    },
    Lv {
        params: LVParams,
        initial: LvInitial,
    },
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Cem { .. } => ModelKind::Cem,
            Model::Lv { .. } => ModelKind::Lv,
        }
    }

    /// Names of the state components in file column order.
    pub fn columns(&self) -> Vec<String> {
        match self {
            Model::Cem { params, .. } => (1..=params.species())
                .map(|i| format!("x{i}"))
                .chain(std::iter::once("S".to_string()))
                .collect(),
            Model::Lv { .. } => vec!["x1".into(), "x2".into()],
        }
    }

    pub fn initial_vector(&self) -> Vec<f64> {
        match self {
            Model::Cem { initial, .. } => initial.to_vec(),
            Model::Lv { initial, .. } => vec![initial.x1, initial.x2],
        }
    }
}

/// Optional basin or sweep block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<SurfaceGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dilutions: Option<Vec<f64>>,
    #[serde(default = "default_separatrix_tol")]
    pub separatrix_tol: f64,
    /// Number of basin points re-run under stricter settings.
    #[serde(default)]
    pub spot_checks: usize,
}

fn default_separatrix_tol() -> f64 {
    DEFAULT_SEPARATRIX_TOL
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model: Model,
    pub options: IntegrationOptions,
    pub experiment: Option<Experiment>,
}

/// A field that was absent from the file and took its default value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Defaulted {
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub scenario: Scenario,
    pub defaults: Vec<Defaulted>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    kind: ModelKind,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document<P, I> {
    #[serde(default = "default_version")]
    format_version: u32,
    model: ModelSection,
    params: P,
    initial: I,
    #[serde(default)]
    options: IntegrationOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    experiment: Option<Experiment>,
}

fn default_version() -> u32 {
    FORMAT_VERSION
}

fn typed<P: DeserializeOwned, I: DeserializeOwned>(text: &str) -> Result<Document<P, I>, ScenarioError> {
    toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string().trim_end().to_string()))
}

pub fn parse_scenario(text: &str) -> Result<Parsed, ScenarioError> {
    let raw: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string().trim_end().to_string()))?;
    let kind = raw
        .get("model")
        .and_then(|m| m.get("kind"))
        .and_then(|k| k.as_str())
        .ok_or_else(|| ScenarioError::Parse("missing [model] kind = \"cem\" | \"lv\"".into()))?;
    let scenario = match kind {
        "cem" => {
            let doc = typed::<ChemostatParams, SystemState>(text)?;
            check_version(doc.format_version)?;
            Scenario {
                model: Model::Cem {
                    params: doc.params,
                    initial: doc.initial,
                },
                options: doc.options,
                experiment: doc.experiment,
            }
        }
        "lv" => {
            let doc = typed::<LVParams, LvInitial>(text)?;
            check_version(doc.format_version)?;
            Scenario {
                model: Model::Lv {
                    params: doc.params,
                    initial: doc.initial,
                },
                options: doc.options,
                experiment: doc.experiment,
            }
        }
        other => return Err(ScenarioError::Parse(format!("unknown model kind `{other}`"))),
    };
    scenario.validate()?;
    Ok(Parsed {
        defaults: defaults_of(&raw, &scenario),
        scenario,
    })
}

fn check_version(version: u32) -> Result<(), ScenarioError> {
    if version == FORMAT_VERSION {
        Ok(())
    } else {
        Err(ScenarioError::Version(version))
    }
}

fn defaults_of(raw: &toml::Table, scenario: &Scenario) -> Vec<Defaulted> {
    let mut out = Vec::new();
    if !raw.contains_key("format_version") {
        out.push(Defaulted {
            key: "format_version".into(),
            value: FORMAT_VERSION.to_string(),
        });
    }
    let mut echo = |section: &str, filled: toml::Table| {
        let given = raw.get(section).and_then(|v| v.as_table());
        for (key, value) in filled {
            if !given.is_some_and(|t| t.contains_key(&key)) {
                out.push(Defaulted {
                    key: format!("{section}.{key}"),
                    value: match value {
                        toml::Value::Float(f) => format!("{f:?}"),
                        other => other.to_string(),
                    },
                });
            }
        }
    };
    if let Ok(filled) = toml::Table::try_from(&scenario.options) {
        echo("options", filled);
    }
    if let Some(experiment) = &scenario.experiment {
        if let Ok(mut filled) = toml::Table::try_from(experiment) {
            filled.retain(|k, _| k == "separatrix_tol" || k == "spot_checks");
            echo("experiment", filled);
        }
    }
    out
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |e: &dyn std::fmt::Display| ScenarioError::Invalid(e.to_string());
        match &self.model {
            Model::Cem { params, initial } => {
                params.validate().map_err(|e| invalid(&e))?;
                if initial.species.len() != params.species() {
                    return Err(ScenarioError::Invalid(format!(
                        "[initial] species has {} entries but the model has {} species",
                        initial.species.len(),
                        params.species()
                    )));
                }
                initial.clamped().map_err(|e| invalid(&e))?;
            }
            Model::Lv { params, initial } => {
                params.validate().map_err(|e| invalid(&e))?;
                for (name, v) in [("x1", initial.x1), ("x2", initial.x2)] {
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(ScenarioError::Invalid(format!(
                            "[initial] {name} = {v}: requires a finite value ≥ 0"
                        )));
                    }
                }
            }
        }
        self.options.validate().map_err(|e| invalid(&e))?;
        if let Some(e) = &self.experiment {
            if !(e.separatrix_tol > 0.0) {
                return Err(ScenarioError::Invalid(format!(
                    "experiment.separatrix_tol = {}: requires a value > 0",
                    e.separatrix_tol
                )));
            }
            if let Some(d) = &e.dilutions {
                if d.is_empty() || d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(ScenarioError::Invalid(
                        "experiment.dilutions: requires a nonempty list of values > 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Serializes every field explicitly, defaults included.
    pub fn to_toml(&self) -> String {
        let result = match &self.model {
            Model::Cem { params, initial } => toml::to_string(&Document {
                format_version: FORMAT_VERSION,
                model: ModelSection { kind: ModelKind::Cem },
                params,
                initial,
                options: self.options.clone(),
                experiment: self.experiment.clone(),
            }),
            Model::Lv { params, initial } => toml::to_string(&Document {
                format_version: FORMAT_VERSION,
                model: ModelSection { kind: ModelKind::Lv },
                params,
                initial,
                options: self.options.clone(),
                experiment: self.experiment.clone(),
            }),
        };
        result.expect("scenario types serialize to TOML")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
kind = "cem"

[params]
max_growth = [2.0, 1.0, 3.0]
half_saturation = [1.0, 1.0, 1.0]
removal = [1.0, 0.9, 0.8]
yields = [1.0, 1.0, 0.5]
dilution = 2.0
feed = 1.0
retained_fraction = 0.7
extraction_rate = 0.2
extraction_exponent = 0.5

[initial]
species = [1.0, 1.0, 1.0]
substrate = 2.0
"#;

    #[test]
    fn minimal_scenario_takes_listed_values() {
        let parsed = parse_scenario(MINIMAL).unwrap();
        let Model::Cem { params, initial } = &parsed.scenario.model else {
            panic!("expected cem");
        };
        assert_eq!(params.max_growth, vec![2.0, 1.0, 3.0]);
        assert_eq!(params.yields, vec![1.0, 1.0, 0.5]);
        assert_eq!(params.retained_fraction, 0.7);
        assert_eq!(initial.substrate, 2.0);
        assert_eq!(parsed.scenario.options, IntegrationOptions::default());
    }

    #[test]
    fn omitted_options_are_echoed() {
        let parsed = parse_scenario(MINIMAL).unwrap();
        let find = |k: &str| parsed.defaults.iter().find(|d| d.key == k).map(|d| d.value.clone());
        assert_eq!(find("options.t_end").as_deref(), Some("500.0"));
        assert_eq!(find("options.rel_tol").as_deref(), Some("1e-8"));
        assert_eq!(find("format_version").as_deref(), Some("1"));
    }

    #[test]
    fn out_of_range_fraction_names_invariant() {
        let text = MINIMAL.replace("retained_fraction = 0.7", "retained_fraction = 1.5");
        let err = parse_scenario(&text).unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid(_)));
        assert!(err.to_string().contains("0 ≤ q ≤ 1"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let text = MINIMAL.replace("feed = 1.0", "feed = 1.0\nfeeed = 2.0");
        let err = parse_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("feeed") && err.contains("line"), "{err}");
        let text = format!("{MINIMAL}\n[extra]\nx = 1\n");
        assert!(parse_scenario(&text).is_err());
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_scenario("[model]\nkind = \n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn serialized_scenario_round_trips() {
        let mut scenario = parse_scenario(MINIMAL).unwrap().scenario;
        scenario.experiment = Some(Experiment {
            grid: Some(GridSpec::Ray {
                start: vec![0.0, 0.0, 0.0, 1.0],
                end: vec![1.0, 1.0, 1.0, 1.0],
                samples: 5,
            }),
            surface: None,
            dilutions: Some(vec![1.0, 1.5]),
            separatrix_tol: 1e-3,
            spot_checks: 3,
        });
        let text = scenario.to_toml();
        let back = parse_scenario(&text).unwrap();
        assert_eq!(back.scenario, scenario);
        assert!(back.defaults.is_empty(), "{:?}", back.defaults);
    }
}
