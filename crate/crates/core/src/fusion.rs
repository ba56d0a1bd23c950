//! Opinion fusion rules.
//!
//! Normal agents fuse with the repulsive (Boomerang) rule
//! `x_f = x_i - sum_j w_ij (x_j - x_i)`; stubborn agents keep their own
//! opinion. The averaging rule `x_i + sum_j w_ij (x_j - x_i)` is kept as a
//! comparison baseline. The counterfactual rule evaluates the Boomerang rule
//! with every malicious neighbor's opinion replaced by a reference opinion.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Opinion = DVector<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    #[default]
    Boomerang,
    Averaging,
}

/// Norm ball `{x : |x - eta| <= r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialNorm {
    eta: Opinion,
    r: f64,
}

impl SocialNorm {
    pub fn new(eta: Opinion, r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidConfig(format!("norm radius must be positive, got {r}")));
        }
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("norm center must be finite".into()));
        }
        Ok(Self { eta, r })
    }

    pub fn center(&self) -> &Opinion {
        &self.eta
    }

    pub fn radius(&self) -> f64 {
        self.r
    }
}

pub fn in_norm_range(x: &Opinion, norm: &SocialNorm) -> Result<bool> {
    if x.len() != norm.eta.len() {
        return Err(Error::DimensionMismatch {
            expected: norm.eta.len(),
            actual: x.len(),
        });
    }
    Ok((x - &norm.eta).norm() <= norm.r)
}

fn check_inputs(x_i: &Opinion, neighbors: &[&Opinion], weights: &[f64]) -> Result<()> {
    if neighbors.len() != weights.len() {
        return Err(Error::LengthMismatch {
            expected: neighbors.len(),
            actual: weights.len(),
        });
    }
    if let Some(x) = neighbors.iter().find(|x| x.len() != x_i.len()) {
        return Err(Error::DimensionMismatch {
            expected: x_i.len(),
            actual: x.len(),
        });
    }
    Ok(())
}

/// `x_i + sign * sum_j w_ij (x_j - x_i)`.
fn weighted_pull(x_i: &Opinion, neighbors: &[&Opinion], weights: &[f64], sign: f64) -> Result<Opinion> {
    check_inputs(x_i, neighbors, weights)?;
    let mut out = x_i.clone();
    for (x_j, &w) in neighbors.iter().zip(weights) {
        out.axpy(sign * w, &(*x_j - x_i), 1.0);
    }
    Ok(out)
}

/// Repulsive fusion `x_i - sum_j w_ij (x_j - x_i)`; no neighbors returns `x_i`.
pub fn boomerang_fuse(x_i: &Opinion, neighbors: &[&Opinion], weights: &[f64]) -> Result<Opinion> {
    weighted_pull(x_i, neighbors, weights, -1.0)
}

pub fn averaging_fuse(x_i: &Opinion, neighbors: &[&Opinion], weights: &[f64]) -> Result<Opinion> {
    weighted_pull(x_i, neighbors, weights, 1.0)
}

pub fn fuse(mode: FusionMode, x_i: &Opinion, neighbors: &[&Opinion], weights: &[f64]) -> Result<Opinion> {
    match mode {
        FusionMode::Boomerang => boomerang_fuse(x_i, neighbors, weights),
        FusionMode::Averaging => averaging_fuse(x_i, neighbors, weights),
    }
}

/// Malicious agents ignore their neighbors.
pub fn stubborn_fuse(x_i: &Opinion) -> Opinion {
    x_i.clone()
}

/// A neighbor as seen by a fusing agent.
#[derive(Debug, Clone, Copy)]
pub struct Neighbor<'a> {
    pub id: usize,
    pub opinion: &'a Opinion,
    pub weight: f64,
    pub malicious: bool,
}

/// Boomerang fusion with every malicious neighbor's opinion replaced by `refs[id]`.
pub fn counterfactual_fuse(
    mode: FusionMode,
    x_i: &Opinion,
    neighbors: &[Neighbor<'_>],
    refs: &BTreeMap<usize, Opinion>,
) -> Result<Opinion> {
    let mut opinions = Vec::with_capacity(neighbors.len());
    for nb in neighbors {
        if nb.malicious {
            opinions.push(refs.get(&nb.id).ok_or(Error::MissingReference(nb.id))?);
        } else {
            opinions.push(nb.opinion);
        }
    }
    let weights: Vec<f64> = neighbors.iter().map(|nb| nb.weight).collect();
    fuse(mode, x_i, &opinions, &weights)
}
