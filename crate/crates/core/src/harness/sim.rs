//! The synchronous simulation loop and its counterfactual twin.

use nalgebra::DVector;

use super::config::Role;
use super::scenario::{AgentState, Scenario};
use super::trace::{AgentRecord, SimTrace, WeightRecord};
use crate::costs::{additional_cost, metrics, separable_bound, spectral_bound, DeviationBoundInputs};
use crate::error::{Error, Result};
use crate::fusion::{counterfactual_fuse, fuse, stubborn_fuse, Neighbor};
use crate::riccati::{is_positive_definite, pd_tolerance, solve_pdare};
use crate::scheduler::{on_period_boundary, phase_of, BoundaryOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Peak clipping and rate adjustment at period boundaries.
    pub adjust: bool,
    /// Trust decay and link cutting toward flagged agents.
    pub isolate: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { adjust: true, isolate: true }
    }
}

/// Additional cost of one normal agent at one step, with both bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRecord {
    pub k: usize,
    pub agent: usize,
    pub additional_cost: f64,
    pub spectral: f64,
    pub separable: f64,
    pub delta_total: f64,
    pub malicious_neighbors: usize,
}

impl BoundRecord {
    pub fn holds(&self, rel_tol: f64) -> bool {
        let slack = |b: f64| self.additional_cost <= b + rel_tol * b.max(f64::MIN_POSITIVE);
        slack(self.spectral) && slack(self.separable)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualRun {
    pub actual: SimTrace,
    pub baseline: SimTrace,
    pub bounds: Vec<BoundRecord>,
}

#[derive(Debug, Clone)]
struct Twin {
    x: Vec<DVector<f64>>,
    trace: SimTrace,
    bounds: Vec<BoundRecord>,
}

struct Advance {
    u: DVector<f64>,
    x: DVector<f64>,
}

/// Target-relative update `x+ = t + A (x_f - t) + B u` with `u = -K (x_f - t)`.
fn advance(agent: &AgentState, x_fused: &DVector<f64>, phase: usize) -> Advance {
    let e = x_fused - &agent.target;
    let u = -(agent.solution.gain(phase) * &e);
    let x = &agent.target + agent.problem.a() * &e + agent.problem.b() * &u;
    Advance { u, x }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    opts: RunOptions,
    k: usize,
    trace: SimTrace,
    twin: Option<Twin>,
    isolated: bool,
}

impl Simulation {
    pub fn new(scenario: Scenario, opts: RunOptions) -> Self {
        Self {
            scenario,
            opts,
            k: 0,
            trace: SimTrace::default(),
            twin: None,
            isolated: false,
        }
    }

    /// Also runs the baseline twin and evaluates the bounds every step.
    pub fn with_counterfactual(scenario: Scenario, opts: RunOptions) -> Self {
        let x = scenario.agents.iter().map(|a| a.x.clone()).collect();
        let mut sim = Self::new(scenario, opts);
        sim.twin = Some(Twin {
            x,
            trace: SimTrace::default(),
            bounds: Vec::new(),
        });
        sim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn trace(&self) -> &SimTrace {
        &self.trace
    }

    fn fused(&self, id: usize, xs: &[DVector<f64>], substitute: bool) -> Result<DVector<f64>> {
        let sc = &self.scenario;
        let own = &xs[id - 1];
        if sc.agents[id - 1].role == Role::Malicious {
            return Ok(stubborn_fuse(own));
        }
        let weights = sc.network.weights(id)?;
        if substitute {
            let nbs = weights
                .iter()
                .map(|&(j, w)| {
                    Ok(Neighbor {
                        id: j,
                        opinion: &xs[j - 1],
                        weight: w * sc.coupling,
                        malicious: sc.network.is_malicious(j)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            counterfactual_fuse(sc.fusion_mode, own, &nbs, &sc.references)
        } else {
            let ops: Vec<&DVector<f64>> = weights.iter().map(|&(j, _)| &xs[j - 1]).collect();
            let ws: Vec<f64> = weights.iter().map(|&(_, w)| w * sc.coupling).collect();
            fuse(sc.fusion_mode, own, &ops, &ws)
        }
    }

    fn bound_record(&self, id: usize, snap: &[DVector<f64>], u: &DVector<f64>, k: usize) -> Result<BoundRecord> {
        let sc = &self.scenario;
        let agent = &sc.agents[id - 1];
        let phase = phase_of(k, agent.schedule.period());
        let gamma = agent.schedule.gamma_at(k);
        let u_cf = advance(agent, &self.fused(id, snap, true)?, phase).u;
        let mut omegas = Vec::new();
        let mut delta_per = Vec::new();
        for (j, w) in sc.network.weights(id)? {
            if sc.network.is_malicious(j)? {
                let reference = sc.references.get(&j).ok_or(Error::MissingReference(j))?;
                omegas.push(w * sc.coupling);
                delta_per.push((reference - &snap[j - 1]).norm());
            }
        }
        let delta_total = delta_per.iter().map(|d| d * d).sum::<f64>().sqrt();
        let inputs = DeviationBoundInputs {
            k: agent.solution.gain(phase).clone(),
            r: agent.problem.r().clone(),
            omegas,
            delta_total,
            delta_per,
            gamma,
            step: k,
        };
        Ok(BoundRecord {
            k,
            agent: id,
            additional_cost: additional_cost(u, &u_cf, agent.problem.r(), gamma, k)?,
            spectral: spectral_bound(&inputs),
            separable: separable_bound(&inputs)?,
            delta_total,
            malicious_neighbors: inputs.omegas.len(),
        })
    }

    fn record(agent: &AgentState, k: usize, step: &Advance) -> AgentRecord {
        let gamma = agent.schedule.gamma_at(k);
        let cost = step.u.dot(&(agent.problem.r() * &step.u));
        AgentRecord {
            k,
            agent_id: agent.id,
            role: agent.role,
            x: step.x.iter().copied().collect(),
            u: step.u.iter().copied().collect(),
            step_cost: cost,
            discounted_cost: cost * crate::costs::discount_factor(gamma, k),
            dist_to_target: (&step.x - &agent.target).norm(),
            gamma,
            active_malicious_links: 0,
        }
    }

    pub fn step(&mut self) -> Result<()> {
        let order: Vec<usize> = (1..=self.scenario.agents.len()).collect();
        self.step_in_order(&order)
    }

    /// Same as [`Simulation::step`] but visits agents in `order`.
    #[doc(hidden)]
    pub fn step_in_order(&mut self, order: &[usize]) -> Result<()> {
        let k = self.k + 1;
        let n_agents = self.scenario.agents.len();
        let snap: Vec<DVector<f64>> = self.scenario.agents.iter().map(|a| a.x.clone()).collect();
        let mut next: Vec<Option<(Advance, AgentRecord)>> = (0..n_agents).map(|_| None).collect();
        let mut twin_next: Vec<Option<(DVector<f64>, AgentRecord)>> = (0..n_agents).map(|_| None).collect();
        let mut bounds: Vec<Option<BoundRecord>> = vec![None; n_agents];

        for &id in order {
            let agent = self.scenario.agent(id)?;
            let phase = phase_of(k, agent.schedule.period());
            let step = advance(agent, &self.fused(id, &snap, false)?, phase);
            let rec = Self::record(agent, k, &step);
            if let Some(twin) = &self.twin {
                if agent.role == Role::Normal {
                    bounds[id - 1] = Some(self.bound_record(id, &snap, &step.u, k)?);
                }
                let b = advance(agent, &self.fused(id, &twin.x, true)?, phase);
                let brec = Self::record(agent, k, &b);
                twin_next[id - 1] = Some((b.x, brec));
            }
            next[id - 1] = Some((step, rec));
        }
        if next.iter().any(Option::is_none) {
            return Err(Error::InvalidConfig("step order must visit every agent once".into()));
        }

        if self.opts.isolate {
            let policy = self.scenario.policy;
            for cut in self.scenario.network.decay_and_cut(&policy, k) {
                self.trace.push_event(k, "link_cut", format!("{}-{}", cut.i, cut.j));
            }
        }

        let net = &self.scenario.network;
        let mut records = Vec::with_capacity(n_agents);
        for (idx, slot) in next.into_iter().enumerate() {
            let (step, mut rec) = slot.expect("checked above");
            rec.active_malicious_links = net.active_malicious_neighbors(idx + 1)?.len();
            self.scenario.agents[idx].x = step.x;
            records.push(rec);
        }
        self.trace.steps.push(records);
        for i in 1..=n_agents {
            for (j, weight) in net.weights(i)? {
                self.trace.weights.push(WeightRecord { k, i, j, weight });
            }
        }
        if let Some(twin) = &mut self.twin {
            let mut recs = Vec::with_capacity(n_agents);
            for (idx, slot) in twin_next.into_iter().enumerate() {
                let (x, mut rec) = slot.expect("twin visits every agent");
                rec.active_malicious_links = net.active_malicious_neighbors(idx + 1)?.len();
                twin.x[idx] = x;
                recs.push(rec);
            }
            twin.trace.steps.push(recs);
            twin.bounds.extend(bounds.into_iter().flatten());
        }

        if !self.isolated && net.all_isolated() {
            self.isolated = true;
            self.trace.push_event(k, "isolation_complete", "");
        }

        self.k = k;
        if self.opts.adjust {
            self.period_boundary(k)?;
        }
        Ok(())
    }

    fn period_boundary(&mut self, k: usize) -> Result<()> {
        let params = self.scenario.params;
        let solver = self.scenario.solver;
        for idx in 0..self.scenario.agents.len() {
            let agent = &self.scenario.agents[idx];
            let id = agent.id;
            if agent.role != Role::Normal || !k.is_multiple_of(agent.schedule.period()) {
                continue;
            }
            let flag = !self.scenario.network.active_malicious_neighbors(id)?.is_empty();
            let (schedule, outcome) = on_period_boundary(&agent.schedule, flag, &params)?;
            let outcome_name = match outcome {
                BoundaryOutcome::Adjusted => "adjusted",
                BoundaryOutcome::AtFloor => "at_floor",
                BoundaryOutcome::AtCeiling => "at_ceiling",
            };
            self.trace.push_event(
                k,
                "period_boundary",
                format!("agent={id} flag={} outcome={outcome_name}", u8::from(flag)),
            );
            let changed = schedule.current() != agent.schedule.current();
            let agent = &mut self.scenario.agents[idx];
            agent.schedule = schedule;
            if changed {
                let solution = solve_pdare(&agent.problem, agent.schedule.current(), solver)?;
                let mut min_eig = f64::INFINITY;
                for p in &solution.p {
                    if !is_positive_definite(p, pd_tolerance(p)) {
                        return Err(Error::NotPositiveDefinite {
                            min_eigenvalue: p.symmetric_eigenvalues().min(),
                        });
                    }
                    min_eig = min_eig.min(p.symmetric_eigenvalues().min());
                }
                agent.solution = solution;
                let seq: Vec<String> = agent.schedule.current().iter().map(|g| format!("{g}")).collect();
                self.trace.push_event(k, "schedule_change", format!("agent={id} gamma=[{}]", seq.join(" ")));
                self.trace.push_event(k, "pd_check", format!("agent={id} min_eig={min_eig:.6e}"));
            }
        }
        Ok(())
    }

    fn close(trace: &mut SimTrace, eps: f64, dwell: usize) -> Result<()> {
        if let Some(c) = metrics(trace, eps, dwell)?.convergence_step {
            trace.push_event(c, "convergence", format!("eps={eps} dwell={dwell}"));
        }
        trace.events.sort_by_key(|e| e.k);
        Ok(())
    }

    /// Adds the convergence event and returns the trace.
    pub fn finish(self) -> Result<SimTrace> {
        Ok(self.finish_with_twin()?.0)
    }

    fn finish_with_twin(mut self) -> Result<(SimTrace, Option<Twin>)> {
        let (eps, dwell) = (self.scenario.convergence.eps, self.scenario.convergence.dwell);
        if !self.trace.is_empty() {
            Self::close(&mut self.trace, eps, dwell)?;
        }
        if let Some(twin) = &mut self.twin {
            twin.trace.weights = self.trace.weights.clone();
            twin.trace.events = self.trace.events.iter().filter(|e| e.kind != "convergence").cloned().collect();
            if !twin.trace.is_empty() {
                Self::close(&mut twin.trace, eps, dwell)?;
            }
        }
        Ok((self.trace, self.twin))
    }
}

pub fn run(scenario: &Scenario, horizon: usize, opts: RunOptions) -> Result<SimTrace> {
    let mut sim = Simulation::new(scenario.clone(), opts);
    for _ in 0..horizon {
        sim.step()?;
    }
    sim.finish()
}

pub fn run_with_counterfactual(scenario: &Scenario, horizon: usize, opts: RunOptions) -> Result<CounterfactualRun> {
    let mut sim = Simulation::with_counterfactual(scenario.clone(), opts);
    for _ in 0..horizon {
        sim.step()?;
    }
    let (actual, twin) = sim.finish_with_twin()?;
    let twin = twin.expect("twin requested");
    Ok(CounterfactualRun {
        actual,
        baseline: twin.trace,
        bounds: twin.bounds,
    })
}
