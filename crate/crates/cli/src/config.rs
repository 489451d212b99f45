//! Experiment file loading. The file is TOML with an optional `preset`, a
//! `[scenario]` table merged over the preset and an `[experiment]` table.

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::Path;

use vtg::analysis::UpliftInformation;
use vtg::ScenarioConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Enumerate,
    Tree,
    Audit,
    Starvation,
    Nontermination,
    Entropy,
    Payoff,
    Equilibrium,
    Optimize,
    Centralized,
    Summary,
    Montecarlo,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Enumerate => "enumerate",
            Command::Tree => "tree",
            Command::Audit => "audit",
            Command::Starvation => "starvation",
            Command::Nontermination => "nontermination",
            Command::Entropy => "entropy",
            Command::Payoff => "payoff",
            Command::Equilibrium => "equilibrium",
            Command::Optimize => "optimize",
            Command::Centralized => "centralized",
            Command::Summary => "summary",
            Command::Montecarlo => "montecarlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Tetrahedral,
    Grid,
}

impl Preset {
    fn scenario(self) -> ScenarioConfig {
        match self {
            Preset::Tetrahedral => ScenarioConfig::tetrahedral(),
            Preset::Grid => ScenarioConfig::grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    /// Step of the priority sweep used by starvation, nontermination and entropy.
    pub grid_step: f64,
    /// Strategy values of the payoff table.
    pub values: Vec<f64>,
    /// Objective evaluations for optimize, centralized and summary.
    pub budget: usize,
    /// Priority vector for tree and montecarlo.
    pub priorities: Vec<f64>,
    pub config_index: usize,
    pub episodes: usize,
    /// Initial fuel of the starvation sweep.
    pub phi0: f64,
    /// Fixed shared priority for centralized; searched when absent.
    pub uplift: Option<f64>,
    pub uplift_information: UpliftInformation,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            command: None,
            seed: None,
            jobs: None,
            grid_step: 0.1,
            values: vec![0.0, 0.51],
            budget: 100,
            priorities: vec![0.5, 0.5, 0.5],
            config_index: 0,
            episodes: 1000,
            phi0: 5.0,
            uplift: None,
            uplift_information: UpliftInformation::OwnMission,
        }
    }
}

/// Fully resolved configuration, embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub preset: Preset,
    pub scenario: ScenarioConfig,
    pub experiment: Experiment,
}

impl Resolved {
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    #[serde(default)]
    preset: Preset,
    #[serde(default)]
    scenario: Option<toml::Table>,
    #[serde(default)]
    experiment: Option<toml::Table>,
}

pub fn load(path: Option<&Path>) -> Result<Resolved, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    parse(&text)
}

pub fn parse(text: &str) -> Result<Resolved, CliError> {
    let raw: RawFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    let scenario = merged(raw.preset.scenario(), raw.scenario, "scenario")?;
    let experiment = merged(Experiment::default(), raw.experiment, "experiment")?;
    Ok(Resolved { preset: raw.preset, scenario, experiment })
}

fn merged<T>(base: T, user: Option<toml::Table>, section: &str) -> Result<T, CliError>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let mut value = serde_json::to_value(&base).expect("defaults serialize");
    if let Some(t) = user {
        let over = serde_json::to_value(t).map_err(|e| CliError::Config(format!("{section}: {e}")))?;
        merge(&mut value, over);
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{section}.{path}: {}", e.into_inner()))
    })
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
