//! Scenario documents: JSON in, validated `Environment` + `Task` +
//! `SimulationConfig` out.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environment::{Environment, Floor, Issue, Location, NamedPoint, Portal, SemanticModel, Sign};
use crate::engine::SimulationConfig;

pub const DEFAULT_ARRIVAL_RADIUS: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum StartKeyword {
    Previous,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LegStartRepr {
    Point(NamedPoint),
    Keyword(StartKeyword),
}

/// Where a leg begins: an explicit spawn point, or wherever the previous
/// leg ended (`"previous"` in the document).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "LegStartRepr", into = "LegStartRepr")]
pub enum LegStart {
    Previous,
    Point(NamedPoint),
}

impl From<LegStartRepr> for LegStart {
    fn from(r: LegStartRepr) -> Self {
        match r {
            LegStartRepr::Point(p) => LegStart::Point(p),
            LegStartRepr::Keyword(StartKeyword::Previous) => LegStart::Previous,
        }
    }
}

impl From<LegStart> for LegStartRepr {
    fn from(s: LegStart) -> Self {
        match s {
            LegStart::Point(p) => LegStartRepr::Point(p),
            LegStart::Previous => LegStartRepr::Keyword(StartKeyword::Previous),
        }
    }
}

fn default_arrival_radius() -> f64 {
    DEFAULT_ARRIVAL_RADIUS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub start: LegStart,
    pub target_label: String,
    pub target_point: Location,
    #[serde(default = "default_arrival_radius")]
    pub arrival_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub legs: Vec<Leg>,
}

/// On-disk layout of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub floors: Vec<Floor>,
    #[serde(default)]
    pub portals: Vec<Portal>,
    #[serde(default)]
    pub signs: Vec<Sign>,
    #[serde(default)]
    pub base_points: Vec<NamedPoint>,
    #[serde(default)]
    pub goal_points: Vec<NamedPoint>,
    #[serde(default)]
    pub semantic_model: SemanticModel,
    pub task: Task,
    #[serde(default)]
    pub config: SimulationConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub environment: Environment,
    pub task: Task,
    pub config: SimulationConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario:\n{}", format_issues(.0))]
    Invalid(Vec<Issue>),
}

fn format_issues(issues: &[Issue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

impl Scenario {
    pub fn into_document(self) -> ScenarioDocument {
        let Environment {
            floors,
            portals,
            signs,
            base_points,
            goal_points,
            semantic_model,
        } = self.environment;
        ScenarioDocument {
            floors,
            portals,
            signs,
            base_points,
            goal_points,
            semantic_model,
            task: self.task,
            config: self.config,
        }
    }

    pub fn from_document(doc: ScenarioDocument) -> Result<Scenario, ScenarioError> {
        let scenario = Scenario {
            environment: Environment {
                floors: doc.floors,
                portals: doc.portals,
                signs: doc.signs,
                base_points: doc.base_points,
                goal_points: doc.goal_points,
                semantic_model: doc.semantic_model,
            },
            task: doc.task,
            config: doc.config,
        };
        let issues = scenario.validate();
        if issues.is_empty() {
            Ok(scenario)
        } else {
            Err(ScenarioError::Invalid(issues))
        }
    }

    pub fn validate(&self) -> Vec<Issue> {
        let mut issues = self.environment.validate();
        let env = &self.environment;
        let walkable = |floor: &str, p| env.floor(floor).map(|f| f.is_walkable(p));
        if self.task.legs.is_empty() {
            issues.push(Issue {
                path: "task.legs".into(),
                message: "at least one leg is required".into(),
            });
        }
        for (i, leg) in self.task.legs.iter().enumerate() {
            let path = format!("task.legs[{i}]");
            let mut push = |p: String, m: String| issues.push(Issue { path: p, message: m });
            if leg.target_label.trim().is_empty() {
                push(path.clone(), "target_label must not be empty".into());
            }
            if !(leg.arrival_radius > 0.0) {
                push(path.clone(), "arrival_radius must be positive".into());
            }
            match walkable(&leg.target_point.floor, leg.target_point.position) {
                None => push(format!("{path}.target_point"), format!("unknown floor '{}'", leg.target_point.floor)),
                Some(false) => push(format!("{path}.target_point"), "target is outside the walkable region".into()),
                Some(true) => {}
            }
            match &leg.start {
                LegStart::Previous if i == 0 => {
                    push(format!("{path}.start"), "the first leg needs an explicit start point".into())
                }
                LegStart::Previous => {}
                LegStart::Point(p) => match walkable(&p.floor, p.position) {
                    None => push(format!("{path}.start"), format!("unknown floor '{}'", p.floor)),
                    Some(false) => push(format!("{path}.start"), "start is outside the walkable region".into()),
                    Some(true) => {}
                },
            }
        }
        if let Err(m) = self.config.validate() {
            issues.push(Issue {
                path: "config".into(),
                message: m,
            });
        }
        issues
    }

    /// Serializes back to the scenario JSON layout.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.clone().into_document()).expect("scenario is serializable")
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDocument = serde_json::from_str(text)?;
    Scenario::from_document(doc)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    parse_scenario(&fs::read_to_string(path)?)
}

/// The station-like example scenario shipped with the crate.
pub const BUNDLED_STATION: &str = include_str!("../scenarios/station.json");

pub fn bundled_station() -> Scenario {
    parse_scenario(BUNDLED_STATION).expect("bundled scenario is valid")
}
