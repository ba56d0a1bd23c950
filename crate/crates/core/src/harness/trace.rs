//! Simulation records and their CSV form.

use std::fs::File;
use std::fmt::Write as _;
use std::path::Path;

use super::config::Role;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    pub k: usize,
    pub agent_id: usize,
    pub role: Role,
    /// Opinion after step `k`.
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub step_cost: f64,
    pub discounted_cost: f64,
    pub dist_to_target: f64,
    pub gamma: f64,
    pub active_malicious_links: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightRecord {
    pub k: usize,
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub k: usize,
    pub kind: String,
    pub detail: String,
}

/// One entry per step `k = 1..=horizon`, each holding every agent's record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    pub(crate) steps: Vec<Vec<AgentRecord>>,
    pub(crate) weights: Vec<WeightRecord>,
    pub(crate) events: Vec<Event>,
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn trace_header(n: usize, m: usize) -> Vec<String> {
    let mut h: Vec<String> = ["k", "agent_id", "role"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=n).map(|i| format!("x_{i}")));
    h.extend((1..=m).map(|i| format!("u_{i}")));
    h.extend(
        ["step_cost", "discounted_cost", "dist_to_target", "gamma", "active_malicious_links"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Vec<AgentRecord>] {
        &self.steps
    }

    pub fn records(&self) -> impl Iterator<Item = &AgentRecord> {
        self.steps.iter().flatten()
    }

    pub fn weights(&self) -> &[WeightRecord] {
        &self.weights
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn events_of<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Event> + 'a {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Summed normal-agent step cost per step.
    pub fn normal_cost_series(&self) -> Vec<f64> {
        self.steps
            .iter()
            .map(|s| s.iter().filter(|r| r.role == Role::Normal).map(|r| r.step_cost).sum())
            .collect()
    }

    /// Largest normal-agent distance to target per step.
    pub fn max_normal_distance_series(&self) -> Vec<f64> {
        self.steps
            .iter()
            .map(|s| {
                s.iter()
                    .filter(|r| r.role == Role::Normal)
                    .map(|r| r.dist_to_target)
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    pub fn agent_series(&self, id: usize) -> Vec<&AgentRecord> {
        self.records().filter(|r| r.agent_id == id).collect()
    }

    /// Step after which no normal agent is linked to a flagged one.
    pub fn isolation_step(&self) -> Option<usize> {
        self.events_of("isolation_complete").next().map(|e| e.k)
    }

    pub(crate) fn push_event(&mut self, k: usize, kind: &str, detail: impl Into<String>) {
        self.events.push(Event {
            k,
            kind: kind.to_string(),
            detail: detail.into(),
        });
    }

    fn dims(&self) -> (usize, usize) {
        self.records().next().map_or((0, 0), |r| (r.x.len(), r.u.len()))
    }

    /// Writes the per-agent trace; an empty trace yields a header-only file.
    pub fn write_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_trace_csv_with_dims(path, self.dims())
    }

    pub fn write_trace_csv_with_dims(&self, path: impl AsRef<Path>, (n, m): (usize, usize)) -> Result<()> {
        let mut w = create(path.as_ref())?;
        w.write_record(trace_header(n, m))?;
        for r in self.records() {
            let mut row = vec![r.k.to_string(), r.agent_id.to_string(), r.role.as_str().to_string()];
            row.extend(r.x.iter().copied().map(fmt));
            row.extend(r.u.iter().copied().map(fmt));
            row.extend([r.step_cost, r.discounted_cost, r.dist_to_target, r.gamma].map(fmt));
            row.push(r.active_malicious_links.to_string());
            w.write_record(row)?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn write_events_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = create(path.as_ref())?;
        w.write_record(["k", "type", "detail"])?;
        for e in &self.events {
            w.write_record([e.k.to_string().as_str(), &e.kind, &e.detail])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn write_weights_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = create(path.as_ref())?;
        w.write_record(["k", "i", "j", "weight"])?;
        for r in &self.weights {
            w.write_record([r.k.to_string(), r.i.to_string(), r.j.to_string(), fmt(r.weight)])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }
}

fn parse<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T> {
    field
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::InvalidConfig(format!("malformed trace field {what}")))
}

/// Reads a file written by [`SimTrace::write_trace_csv`].
pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Vec<AgentRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers()?.clone();
    let n = header.iter().filter(|h| h.starts_with("x_")).count();
    let m = header.iter().filter(|h| h.starts_with("u_")).count();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let role = match row.get(2) {
            Some("normal") => Role::Normal,
            Some("malicious") => Role::Malicious,
            other => return Err(Error::InvalidConfig(format!("unknown role {other:?}"))),
        };
        let num = |i: usize| parse::<f64>(row.get(i), &header[i]);
        out.push(AgentRecord {
            k: parse(row.get(0), "k")?,
            agent_id: parse(row.get(1), "agent_id")?,
            role,
            x: (3..3 + n).map(num).collect::<Result<_>>()?,
            u: (3 + n..3 + n + m).map(num).collect::<Result<_>>()?,
            step_cost: num(3 + n + m)?,
            discounted_cost: num(4 + n + m)?,
            dist_to_target: num(5 + n + m)?,
            gamma: num(6 + n + m)?,
            active_malicious_links: parse(row.get(7 + n + m), "active_malicious_links")?,
        });
    }
    Ok(out)
}

pub fn write_bounds_csv(path: impl AsRef<Path>, bounds: &[super::sim::BoundRecord]) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_record([
        "k",
        "agent_id",
        "additional_cost",
        "spectral_bound",
        "separable_bound",
        "delta_total",
        "malicious_neighbors",
    ])?;
    for b in bounds {
        w.write_record([
            b.k.to_string(),
            b.agent.to_string(),
            fmt(b.additional_cost),
            fmt(b.spectral),
            fmt(b.separable),
            fmt(b.delta_total),
            b.malicious_neighbors.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// Plain-text table of labelled metrics.
pub fn metrics_table(rows: &[(String, crate::costs::MetricsReport)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:>12} {:>12} {:>12} {:>12}",
        "schedule", "ESC", "LSC", "convergence", "isolation"
    );
    for (label, m) in rows {
        let opt = |v: Option<usize>| v.map_or("-".to_string(), |k| k.to_string());
        let lsc = m.lsc.map_or("-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(
            s,
            "{:<16} {:>12.4} {:>12} {:>12} {:>12}",
            label,
            m.esc,
            lsc,
            opt(m.convergence_step),
            opt(m.isolation_step)
        );
    }
    s
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[(String, crate::costs::MetricsReport)]) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_record(["schedule", "esc", "lsc", "convergence_step", "isolation_step"])?;
    let opt = |v: Option<usize>| v.map_or(String::new(), |k| k.to_string());
    for (label, m) in rows {
        w.write_record([
            label.clone(),
            fmt(m.esc),
            m.lsc.map_or(String::new(), fmt),
            opt(m.convergence_step),
            opt(m.isolation_step),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}
