//! Turning a config into a ready-to-run scenario.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ConvergenceSpec, ReferenceSpec, Role, Rows, ScenarioConfig};
use crate::error::{Error, Result};
use crate::fusion::{in_norm_range, FusionMode, SocialNorm};
use crate::network::{AgentNetwork, IsolationPolicy};
use crate::riccati::{solve_pdare, DiscountedLqrProblem, RiccatiSolution, SolverOptions};
use crate::scheduler::{AdjustParams, GammaSchedule};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub role: Role,
    pub x: DVector<f64>,
    pub target: DVector<f64>,
    pub problem: DiscountedLqrProblem,
    pub schedule: GammaSchedule,
    pub solution: RiccatiSolution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Indexed by `id - 1`.
    pub agents: Vec<AgentState>,
    pub network: AgentNetwork,
    pub policy: IsolationPolicy,
    pub params: AdjustParams,
    pub norm: SocialNorm,
    pub fusion_mode: FusionMode,
    pub coupling: f64,
    pub horizon: usize,
    pub convergence: ConvergenceSpec,
    /// Stand-in opinions for malicious agents in the counterfactual.
    pub references: BTreeMap<usize, DVector<f64>>,
    pub solver: SolverOptions,
}

impl Scenario {
    pub fn agent(&self, id: usize) -> Result<&AgentState> {
        id.checked_sub(1)
            .and_then(|i| self.agents.get(i))
            .ok_or(Error::UnknownAgent(id))
    }

    pub fn state_dim(&self) -> usize {
        self.norm.center().len()
    }

    pub fn input_dim(&self) -> usize {
        self.agents.first().map_or(0, |a| a.problem.input_dim())
    }

    pub fn normal_ids(&self) -> Vec<usize> {
        self.agents.iter().filter(|a| a.role == Role::Normal).map(|a| a.id).collect()
    }
}

fn matrix(rows: &Rows, what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidConfig(format!("{what} must be a non-empty rectangular matrix")));
    }
    Ok(DMatrix::from_row_iterator(nrows, ncols, rows.iter().flatten().copied()))
}

/// Uniform draw from the ball of radius `radius` by rejection from the cube.
fn ball_offset(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        if v.norm() <= 1.0 {
            return v * radius;
        }
    }
}

fn check_schedule_shape(cfg: &ScenarioConfig) -> Result<()> {
    let s = &cfg.schedule;
    if s.period == 0 {
        return Err(Error::InvalidConfig("schedule period must be at least 1".into()));
    }
    for (name, len) in [("initial", s.initial.len()), ("lower", s.lower.len()), ("upper", s.upper.len())] {
        if len != s.period {
            return Err(Error::InvalidConfig(format!(
                "schedule.{name} has {len} entries but the period is {}",
                s.period
            )));
        }
    }
    if !(s.malicious_gamma > 0.0 && s.malicious_gamma < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "malicious_gamma must lie in (0, 1), got {}",
            s.malicious_gamma
        )));
    }
    Ok(())
}

fn references(cfg: &ScenarioConfig, malicious: &[usize], dim: usize) -> Result<BTreeMap<usize, DVector<f64>>> {
    let mut out = BTreeMap::new();
    for &id in malicious {
        let v = match &cfg.counterfactual.reference {
            ReferenceSpec::Named(name) if name == "norm_center" => cfg.norm.eta.clone(),
            ReferenceSpec::Named(name) => {
                return Err(Error::InvalidConfig(format!("unknown counterfactual reference {name:?}")))
            }
            ReferenceSpec::Shared(v) => v.clone(),
            ReferenceSpec::PerAgent(map) => map.get(&id.to_string()).cloned().ok_or(Error::MissingReference(id))?,
        };
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: v.len() });
        }
        out.insert(id, DVector::from_vec(v));
    }
    if let ReferenceSpec::PerAgent(map) = &cfg.counterfactual.reference {
        for key in map.keys() {
            let id: usize = key
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("reference key {key:?} is not an agent id")))?;
            if !malicious.contains(&id) {
                return Err(Error::InvalidConfig(format!("reference given for non-malicious agent {id}")));
            }
        }
    }
    Ok(out)
}

/// Validates the config, draws the seeded perturbations and targets, and
/// solves every agent's initial Riccati equation.
pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    if cfg.horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    if !(cfg.coupling > 0.0) || !cfg.coupling.is_finite() {
        return Err(Error::InvalidConfig(format!("coupling must be positive, got {}", cfg.coupling)));
    }
    if !(cfg.convergence.eps > 0.0) || cfg.convergence.dwell == 0 {
        return Err(Error::InvalidConfig("convergence needs eps > 0 and dwell >= 1".into()));
    }
    if cfg.agents.is_empty() {
        return Err(Error::InvalidConfig("no agents".into()));
    }
    for (pos, spec) in cfg.agents.iter().enumerate() {
        if spec.id != pos + 1 {
            return Err(Error::InvalidConfig(format!(
                "agents must be listed with ids 1..=N in order; entry {} has id {}",
                pos + 1,
                spec.id
            )));
        }
    }
    if cfg.targets.normal_radius < 0.0 || cfg.targets.malicious_radius < 0.0 {
        return Err(Error::InvalidConfig("target radii must be nonnegative".into()));
    }
    check_schedule_shape(cfg)?;

    let n = cfg.norm.eta.len();
    let norm = SocialNorm::new(DVector::from_vec(cfg.norm.eta.clone()), cfg.norm.r)?;
    let policy = IsolationPolicy::new(cfg.isolation.rho, cfg.isolation.cut_threshold)?;
    let params = AdjustParams::new(cfg.schedule.lambda, cfg.schedule.beta, cfg.schedule.delta)?;
    let solver = SolverOptions::default();
    let template_a = matrix(&cfg.system.a, "system.a")?;
    let template_b = matrix(&cfg.system.b, "system.b")?;
    let template_r = matrix(&cfg.system.r, "system.r")?;

    let malicious: Vec<usize> = cfg.agents.iter().filter(|a| a.role == Role::Malicious).map(|a| a.id).collect();
    let network = AgentNetwork::new(cfg.agents.len(), &cfg.edges, &malicious)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut agents = Vec::with_capacity(cfg.agents.len());
    let mut input_dim = None;
    for spec in &cfg.agents {
        // both draws happen for every agent so overrides do not shift the stream
        let scale: f64 = rng.random();
        let (center, radius) = match spec.role {
            Role::Normal => (norm.center().clone(), cfg.targets.normal_radius),
            Role::Malicious => (-norm.center(), cfg.targets.malicious_radius),
        };
        let drawn = center + ball_offset(&mut rng, n, radius);

        let a = match &spec.a {
            Some(rows) => matrix(rows, "agent a")?,
            None => &template_a + DMatrix::identity(n, n) * (scale * cfg.system.perturbation),
        };
        let b = spec.b.as_ref().map_or(Ok(template_b.clone()), |rows| matrix(rows, "agent b"))?;
        let r = spec.r.as_ref().map_or(Ok(template_r.clone()), |rows| matrix(rows, "agent r"))?;
        if a.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: a.nrows() });
        }
        if *input_dim.get_or_insert(b.ncols()) != b.ncols() {
            return Err(Error::InvalidConfig("all agents must share the input dimension".into()));
        }
        let problem = DiscountedLqrProblem::new(a, b, r)?;

        let target = match &spec.target {
            Some(t) if t.len() != n => return Err(Error::DimensionMismatch { expected: n, actual: t.len() }),
            Some(t) => DVector::from_vec(t.clone()),
            None => drawn,
        };
        let inside = in_norm_range(&target, &norm)?;
        if inside != (spec.role == Role::Normal) {
            return Err(Error::InvalidConfig(format!(
                "agent {} is {} but its target is {} the norm region",
                spec.id,
                spec.role.as_str(),
                if inside { "inside" } else { "outside" }
            )));
        }

        let s = &cfg.schedule;
        let schedule = match spec.role {
            Role::Normal => GammaSchedule::new(s.initial.clone(), s.levels.clone(), s.lower.clone(), s.upper.clone())?,
            Role::Malicious => GammaSchedule::constant(s.malicious_gamma, s.period)?,
        };
        let solution = solve_pdare(&problem, schedule.current(), solver)?;
        agents.push(AgentState {
            id: spec.id,
            role: spec.role,
            x: DVector::zeros(n),
            target,
            problem,
            schedule,
            solution,
        });
    }

    Ok(Scenario {
        references: references(cfg, &malicious, n)?,
        agents,
        network,
        policy,
        params,
        norm,
        fusion_mode: cfg.fusion_mode,
        coupling: cfg.coupling,
        horizon: cfg.horizon,
        convergence: cfg.convergence.clone(),
        solver,
    })
}
