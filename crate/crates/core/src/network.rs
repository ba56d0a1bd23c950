//! Undirected interaction graph with decaying trust toward flagged agents.
//!
//! Each agent keeps a raw trust value per active neighbor. Trust toward a
//! flagged neighbor shrinks by `rho` every step and the link is cut (in both
//! directions) once the raw value drops below the threshold. Fusion sees the
//! row-normalized view, so active rows always sum to one.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsolationPolicy {
    rho: f64,
    cut_threshold: f64,
}

impl IsolationPolicy {
    pub fn new(rho: f64, cut_threshold: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidConfig(format!("rho must lie in (0, 1), got {rho}")));
        }
        if !(cut_threshold > 0.0) || !cut_threshold.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "cut_threshold must be positive, got {cut_threshold}"
            )));
        }
        Ok(Self { rho, cut_threshold })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn cut_threshold(&self) -> f64 {
        self.cut_threshold
    }

    /// Upper bound on the number of decay steps before a link of raw trust `w` is cut.
    pub fn steps_to_cut(&self, w: f64) -> usize {
        if w < self.cut_threshold {
            return 0;
        }
        ((self.cut_threshold / w).ln() / self.rho.ln()).floor() as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutEvent {
    pub k: usize,
    pub i: usize,
    pub j: usize,
}

/// Agents are numbered `1..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNetwork {
    trust: Vec<BTreeMap<usize, f64>>,
    malicious: Vec<bool>,
    cut_log: Vec<CutEvent>,
}

impl AgentNetwork {
    /// Builds the graph from undirected edges; initial trust is `1/|N_i|`.
    pub fn new(n: usize, edges: &[(usize, usize)], malicious: &[usize]) -> Result<Self> {
        let mut adj = vec![BTreeSet::new(); n];
        for &(i, j) in edges {
            if i == 0 || i > n {
                return Err(Error::UnknownAgent(i));
            }
            if j == 0 || j > n {
                return Err(Error::UnknownAgent(j));
            }
            if i == j {
                return Err(Error::InvalidConfig(format!("self-loop on agent {i}")));
            }
            adj[i - 1].insert(j);
            adj[j - 1].insert(i);
        }
        let mut flags = vec![false; n];
        for &m in malicious {
            if m == 0 || m > n {
                return Err(Error::UnknownAgent(m));
            }
            flags[m - 1] = true;
        }
        let trust = adj
            .into_iter()
            .map(|nbs| {
                let w = 1.0 / nbs.len().max(1) as f64;
                nbs.into_iter().map(|j| (j, w)).collect()
            })
            .collect();
        Ok(Self {
            trust,
            malicious: flags,
            cut_log: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.trust.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trust.is_empty()
    }

    fn row(&self, i: usize) -> Result<&BTreeMap<usize, f64>> {
        if i == 0 {
            return Err(Error::UnknownAgent(i));
        }
        self.trust.get(i - 1).ok_or(Error::UnknownAgent(i))
    }

    pub fn is_malicious(&self, i: usize) -> Result<bool> {
        self.row(i)?;
        Ok(self.malicious[i - 1])
    }

    pub fn malicious_ids(&self) -> Vec<usize> {
        (1..=self.len()).filter(|&i| self.malicious[i - 1]).collect()
    }

    /// Currently linked neighbors, ascending.
    pub fn neighbors(&self, i: usize) -> Result<Vec<usize>> {
        Ok(self.row(i)?.keys().copied().collect())
    }

    pub fn raw_trust(&self, i: usize, j: usize) -> Result<Option<f64>> {
        Ok(self.row(i)?.get(&j).copied())
    }

    /// Row-normalized weights over active neighbors; empty when isolated.
    pub fn weights(&self, i: usize) -> Result<Vec<(usize, f64)>> {
        let row = self.row(i)?;
        let total: f64 = row.values().sum();
        Ok(row.iter().map(|(&j, &w)| (j, w / total)).collect())
    }

    pub fn weight(&self, i: usize, j: usize) -> Result<Option<f64>> {
        Ok(self.weights(i)?.into_iter().find(|&(id, _)| id == j).map(|(_, w)| w))
    }

    pub fn cut_log(&self) -> &[CutEvent] {
        &self.cut_log
    }

    pub fn active_malicious_neighbors(&self, i: usize) -> Result<BTreeSet<usize>> {
        Ok(self
            .row(i)?
            .keys()
            .copied()
            .filter(|&j| self.malicious[j - 1])
            .collect())
    }

    /// Number of directed normal -> flagged links still active.
    pub fn active_malicious_links(&self) -> usize {
        (1..=self.len())
            .filter(|&i| !self.malicious[i - 1])
            .map(|i| self.trust[i - 1].keys().filter(|&&j| self.malicious[j - 1]).count())
            .sum()
    }

    pub fn all_isolated(&self) -> bool {
        self.active_malicious_links() == 0
    }

    /// One decay step at time `k`. Returns the links cut during this step.
    pub fn decay_and_cut(&mut self, policy: &IsolationPolicy, k: usize) -> Vec<CutEvent> {
        let mut cuts = Vec::new();
        for i in 1..=self.len() {
            if self.malicious[i - 1] {
                continue;
            }
            for (&j, w) in self.trust[i - 1].iter_mut() {
                if self.malicious[j - 1] {
                    *w *= policy.rho;
                    if *w < policy.cut_threshold {
                        cuts.push(CutEvent { k, i, j });
                    }
                }
            }
        }
        for c in &cuts {
            self.trust[c.i - 1].remove(&c.j);
            self.trust[c.j - 1].remove(&c.i);
        }
        self.cut_log.extend_from_slice(&cuts);
        cuts
    }
}
