//! JSON scenario configuration.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionMode;
use crate::scheduler::{on_period_boundary, AdjustParams, GammaSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Normal,
    Malicious,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Normal => "normal",
            Role::Malicious => "malicious",
        }
    }
}

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: usize,
    pub role: Role,
    /// Fixed target; drawn from the seeded generator when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Rows>,
}

/// Shared plant. Each agent's `A` gets `+ s * perturbation * I` with `s ~ U[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub a: Rows,
    pub b: Rows,
    pub r: Rows,
    #[serde(default)]
    pub perturbation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSpec {
    pub eta: Vec<f64>,
    pub r: f64,
}

/// Radii of the balls targets are drawn from (around `eta` and `-eta`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub normal_radius: f64,
    pub malicious_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsolationSpec {
    pub rho: f64,
    pub cut_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(rename = "T")]
    pub period: usize,
    pub levels: Vec<f64>,
    pub initial: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub lambda: f64,
    pub beta: f64,
    pub delta: f64,
    pub malicious_gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub eps: f64,
    pub dwell: usize,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self { eps: 0.05, dwell: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReferenceSpec {
    /// `"norm_center"`.
    Named(String),
    /// One opinion shared by every malicious agent.
    Shared(Vec<f64>),
    /// Keyed by malicious agent id (JSON object keys are strings).
    PerAgent(BTreeMap<String, Vec<f64>>),
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        ReferenceSpec::Named("norm_center".into())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterfactualSpec {
    #[serde(default)]
    pub reference: ReferenceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub agents: Vec<AgentSpec>,
    pub system: SystemSpec,
    pub edges: Vec<(usize, usize)>,
    pub norm: NormSpec,
    pub targets: TargetSpec,
    pub isolation: IsolationSpec,
    pub schedule: ScheduleSpec,
    pub horizon: usize,
    pub seed: u64,
    #[serde(default)]
    pub fusion_mode: FusionMode,
    /// Scale applied to the normalized trust weights inside the fusion rule.
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    #[serde(default)]
    pub convergence: ConvergenceSpec,
    #[serde(default)]
    pub counterfactual: CounterfactualSpec,
}

fn default_coupling() -> f64 {
    1.0
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Replaces the normal agents' schedule with a constant one, widening the
    /// bounds and grid if needed.
    pub fn set_constant_schedule(&mut self, gamma: f64) {
        let t = self.schedule.period;
        self.schedule.initial = vec![gamma; t];
        for lo in &mut self.schedule.lower {
            *lo = lo.min(gamma);
        }
        for hi in &mut self.schedule.upper {
            *hi = hi.max(gamma);
        }
        if !self.schedule.levels.contains(&gamma) {
            self.schedule.levels.push(gamma);
            self.schedule.levels.sort_by(f64::total_cmp);
        }
    }

    /// Holds the normal agents' schedule fixed at `seq`, widening bounds if needed.
    pub fn set_fixed_schedule(&mut self, seq: &[f64]) -> Result<()> {
        if seq.len() != self.schedule.period {
            return Err(Error::LengthMismatch {
                expected: self.schedule.period,
                actual: seq.len(),
            });
        }
        self.schedule.initial = seq.to_vec();
        for (tau, &g) in seq.iter().enumerate() {
            self.schedule.lower[tau] = self.schedule.lower[tau].min(g);
            self.schedule.upper[tau] = self.schedule.upper[tau].max(g);
        }
        Ok(())
    }

    /// Applies a schedule label and returns whether period-boundary
    /// adjustment should run:
    /// `tv` keeps the configured schedule and adjusts, `periodN` holds the
    /// sequence reached after `N - 1` suspicious boundaries fixed, and a
    /// number holds a constant rate fixed.
    pub fn apply_schedule_label(&mut self, label: &str) -> Result<bool> {
        if label == "tv" {
            return Ok(true);
        }
        if let Some(n) = label.strip_prefix("period") {
            let n: usize = n
                .parse()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| Error::InvalidConfig(format!("bad schedule label {label:?}")))?;
            let s = &self.schedule;
            let params = AdjustParams::new(s.lambda, s.beta, s.delta)?;
            let mut sched = GammaSchedule::new(s.initial.clone(), s.levels.clone(), s.lower.clone(), s.upper.clone())?;
            for _ in 1..n {
                sched = on_period_boundary(&sched, true, &params)?.0;
            }
            let row = sched.current().to_vec();
            self.set_fixed_schedule(&row)?;
            return Ok(false);
        }
        let gamma: f64 = label
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad schedule label {label:?}")))?;
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidConfig(format!("constant rate {gamma} outside (0, 1)")));
        }
        self.set_constant_schedule(gamma);
        Ok(false)
    }

    /// Built-in ten-agent scenario: four normal agents, six malicious ones.
    pub fn reference() -> Self {
        let neighbor_sets: [(usize, &[usize]); 4] = [
            (1, &[2, 3, 4, 5, 6, 10]),
            (2, &[1, 3, 4, 7, 9, 10]),
            (3, &[1, 2, 7, 8, 10]),
            (4, &[1, 2, 5, 7, 8, 10]),
        ];
        let mut edges = Vec::new();
        for (i, nbs) in neighbor_sets {
            for &j in nbs {
                if !edges.contains(&(j, i)) {
                    edges.push((i, j));
                }
            }
        }
        let agents = (1..=10)
            .map(|id| AgentSpec {
                id,
                role: if id <= 4 { Role::Normal } else { Role::Malicious },
                target: None,
                a: None,
                b: None,
                r: None,
            })
            .collect();
        let row1 = vec![0.0850, 0.1175, 0.1413, 0.1500, 0.1413, 0.1175, 0.0850];
        Self {
            agents,
            system: SystemSpec {
                a: vec![vec![0.99, -0.01, 0.0], vec![-0.01, 0.99, 0.0], vec![0.0, 0.0, 0.99]],
                b: vec![vec![0.0, 0.5], vec![0.5, 0.0], vec![-0.5, 0.0]],
                r: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                perturbation: 0.01,
            },
            edges,
            norm: NormSpec { eta: vec![3.0; 3], r: 0.3 },
            targets: TargetSpec { normal_radius: 0.02, malicious_radius: 0.3 },
            isolation: IsolationSpec { rho: 0.95, cut_threshold: 0.02 },
            schedule: ScheduleSpec {
                period: 7,
                levels: vec![0.0850, 0.1175, 0.1413, 0.1500],
                initial: row1,
                lower: vec![0.085; 7],
                upper: vec![0.15; 7],
                lambda: 1.0,
                beta: 0.0,
                delta: 0.1,
                malicious_gamma: 0.15,
            },
            horizon: 200,
            seed: 1,
            fusion_mode: FusionMode::Boomerang,
            coupling: 0.01,
            convergence: ConvergenceSpec::default(),
            counterfactual: CounterfactualSpec::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_round_trips_through_json() {
        let cfg = ScenarioConfig::reference();
        let back = ScenarioConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.edges.len(), 18);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&ScenarioConfig::reference().to_json().unwrap()).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(ScenarioConfig::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&ScenarioConfig::reference().to_json().unwrap()).unwrap();
        v["schedule"]["gamma"] = serde_json::json!(0.1);
        assert!(ScenarioConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn reference_spec_forms() {
        let named: ReferenceSpec = serde_json::from_str("\"norm_center\"").unwrap();
        assert_eq!(named, ReferenceSpec::default());
        let shared: ReferenceSpec = serde_json::from_str("[1.0, 2.0]").unwrap();
        assert_eq!(shared, ReferenceSpec::Shared(vec![1.0, 2.0]));
        let per: ReferenceSpec = serde_json::from_str("{\"5\": [0.0]}").unwrap();
        assert_eq!(per, ReferenceSpec::PerAgent(BTreeMap::from([("5".to_string(), vec![0.0])])));
    }

    #[test]
    fn schedule_labels() {
        let mut cfg = ScenarioConfig::reference();
        assert!(cfg.clone().apply_schedule_label("tv").unwrap());
        assert!(!cfg.apply_schedule_label("period3").unwrap());
        assert_eq!(cfg.schedule.initial, vec![0.0850, 0.1175, 0.1175, 0.1175, 0.1175, 0.1175, 0.0850]);
        let mut cfg = ScenarioConfig::reference();
        cfg.apply_schedule_label("period1").unwrap();
        assert_eq!(cfg.schedule.initial, ScenarioConfig::reference().schedule.initial);
        let mut cfg = ScenarioConfig::reference();
        assert!(!cfg.apply_schedule_label("0.1413").unwrap());
        assert_eq!(cfg.schedule.initial, vec![0.1413; 7]);
        for bad in ["period0", "fast", "1.5", "periodx"] {
            assert!(ScenarioConfig::reference().apply_schedule_label(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn constant_schedule_widens_bounds() {
        let mut cfg = ScenarioConfig::reference();
        cfg.set_constant_schedule(0.2);
        assert_eq!(cfg.schedule.initial, vec![0.2; 7]);
        assert_eq!(cfg.schedule.upper, vec![0.2; 7]);
        assert_eq!(*cfg.schedule.levels.last().unwrap(), 0.2);
    }
}
