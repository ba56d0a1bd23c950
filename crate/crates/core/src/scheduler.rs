//! Periodic evolution-rate schedules, peak clipping and the projected
//! rate adjustment applied once per period.

use crate::error::{Error, Result};

/// Periodic sequence of evolution rates with its level grid and bounds.
///
/// `previous` is the sequence in effect one period before `current`; the
/// momentum point of the adjustment extrapolates from the pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSchedule {
    current: Vec<f64>,
    previous: Vec<f64>,
    levels: Vec<f64>,
    flag: bool,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

fn in_unit_open(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

impl GammaSchedule {
    pub fn new(initial: Vec<f64>, levels: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let t = initial.len();
        if t == 0 {
            return Err(Error::InvalidSchedule("empty sequence".into()));
        }
        if lower.len() != t {
            return Err(Error::LengthMismatch { expected: t, actual: lower.len() });
        }
        if upper.len() != t {
            return Err(Error::LengthMismatch { expected: t, actual: upper.len() });
        }
        if levels.is_empty() || !levels.iter().copied().all(in_unit_open) {
            return Err(Error::InvalidSchedule("levels must be non-empty and inside (0, 1)".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSchedule("levels must be strictly increasing".into()));
        }
        for tau in 0..t {
            let (g, lo, hi) = (initial[tau], lower[tau], upper[tau]);
            if !in_unit_open(g) || !in_unit_open(lo) || !in_unit_open(hi) {
                return Err(Error::InvalidSchedule(format!("phase {} has a value outside (0, 1)", tau + 1)));
            }
            if lo > hi {
                return Err(Error::InfeasibleBounds { phase: tau + 1, lower: lo, upper: hi });
            }
            if g < lo || g > hi {
                return Err(Error::InvalidSchedule(format!(
                    "phase {} value {g} outside [{lo}, {hi}]",
                    tau + 1
                )));
            }
        }
        Ok(Self {
            previous: initial.clone(),
            current: initial,
            levels,
            flag: false,
            lower,
            upper,
        })
    }

    /// Constant schedule with bounds pinned to the value.
    pub fn constant(gamma: f64, period: usize) -> Result<Self> {
        let v = vec![gamma; period];
        Self::new(v.clone(), vec![gamma], v.clone(), v)
    }

    pub fn period(&self) -> usize {
        self.current.len()
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }

    pub fn previous(&self) -> &[f64] {
        &self.previous
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn flag(&self) -> bool {
        self.flag
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Rate in effect at step `k >= 1`; step 1 is phase 1.
    pub fn gamma_at(&self, k: usize) -> f64 {
        self.current[phase_of(k, self.period())]
    }
}

/// Zero-based phase of step `k >= 1`.
pub fn phase_of(k: usize, period: usize) -> usize {
    (k.max(1) - 1) % period
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustParams {
    lambda: f64,
    beta: f64,
    delta: f64,
}

impl AdjustParams {
    pub fn new(lambda: f64, beta: f64, delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidConfig(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::InvalidConfig(format!("beta must lie in [0, 1), got {beta}")));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidConfig(format!("delta must be positive, got {delta}")));
        }
        Ok(Self { lambda, beta, delta })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

impl Default for AdjustParams {
    fn default() -> Self {
        Self { lambda: 1.0, beta: 0.0, delta: 0.1 }
    }
}

/// Moves every occurrence of the maximum to the next strict grid level,
/// down when `flag` is set and up otherwise.
pub fn peak_clip(seq: &[f64], levels: &[f64], flag: bool) -> Result<Vec<f64>> {
    let peak = seq.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let target = if flag {
        levels.iter().copied().rfind(|&l| l < peak).ok_or(Error::AtFloor)?
    } else {
        levels.iter().copied().find(|&l| l > peak).ok_or(Error::AtCeiling)?
    };
    Ok(seq.iter().map(|&g| if g == peak { target } else { g }).collect())
}

/// Minimizer of `(1-lambda)/2 (u-v)^2 + lambda/2 (u-r)^2`.
pub fn blend(v: f64, r: f64, lambda: f64) -> f64 {
    (1.0 - lambda) * v + lambda * r
}

/// One projected adjustment toward `ref_seq`; shifts the history.
pub fn rate_adjust(sched: &GammaSchedule, ref_seq: &[f64], params: &AdjustParams) -> Result<GammaSchedule> {
    let t = sched.period();
    if ref_seq.len() != t {
        return Err(Error::LengthMismatch { expected: t, actual: ref_seq.len() });
    }
    let mut next = Vec::with_capacity(t);
    for tau in 0..t {
        let lo = sched.lower[tau].max(ref_seq[tau]);
        let hi = sched.upper[tau];
        if lo > hi {
            return Err(Error::InfeasibleBounds { phase: tau + 1, lower: lo, upper: hi });
        }
        let cur = sched.current[tau];
        let v = cur + params.beta * (cur - sched.previous[tau]);
        let u = blend(v, ref_seq[tau], params.lambda);
        // taking u itself inside the region keeps grid values bit-exact
        let stepped = if (u - v).abs() <= params.delta {
            u
        } else {
            v + params.delta.copysign(u - v)
        };
        let mut out = stepped.clamp(lo, hi);
        out = if sched.flag { out.min(v) } else { out.max(v) };
        next.push(out.clamp(lo, hi));
    }
    Ok(GammaSchedule {
        previous: sched.current.clone(),
        current: next,
        ..sched.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryOutcome {
    Adjusted,
    AtFloor,
    AtCeiling,
}

/// Peak clipping followed by the rate adjustment. Saturation leaves the
/// sequence unchanged but still shifts the history.
pub fn on_period_boundary(
    sched: &GammaSchedule,
    flag: bool,
    params: &AdjustParams,
) -> Result<(GammaSchedule, BoundaryOutcome)> {
    let mut s = sched.clone();
    s.flag = flag;
    match peak_clip(&s.current, &s.levels, flag) {
        Ok(reference) => Ok((rate_adjust(&s, &reference, params)?, BoundaryOutcome::Adjusted)),
        Err(e @ (Error::AtFloor | Error::AtCeiling)) => {
            s.previous = s.current.clone();
            let outcome = if matches!(e, Error::AtFloor) {
                BoundaryOutcome::AtFloor
            } else {
                BoundaryOutcome::AtCeiling
            };
            Ok((s, outcome))
        }
        Err(e) => Err(e),
    }
}
