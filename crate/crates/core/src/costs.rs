//! Input-cost accounting, the additional cost caused by malicious neighbors
//! and its upper bounds, and the summary metrics of a run.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::harness::SimTrace;
use crate::linalg::max_symmetric_eigenvalue;

/// `(1-gamma)^(-k)`.
pub fn discount_factor(gamma: f64, k: usize) -> f64 {
    (1.0 - gamma).powi(-(k as i32))
}

fn quad(u: &DVector<f64>, r: &DMatrix<f64>) -> f64 {
    u.dot(&(r * u))
}

/// `(1-gamma)^(-k) u^T R u`.
pub fn discounted_step_cost(u: &DVector<f64>, r: &DMatrix<f64>, gamma: f64, k: usize) -> f64 {
    discount_factor(gamma, k) * quad(u, r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostRecord {
    pub k: usize,
    pub agent: usize,
    pub step_cost: f64,
    pub discounted_cost: f64,
    pub gamma: f64,
}

/// Per-step input costs of every agent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostLedger {
    records: Vec<CostRecord>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, k: usize, agent: usize, u: &DVector<f64>, r: &DMatrix<f64>, gamma: f64) -> CostRecord {
        let step_cost = quad(u, r);
        let rec = CostRecord {
            k,
            agent,
            step_cost,
            discounted_cost: discount_factor(gamma, k) * step_cost,
            gamma,
        };
        self.records.push(rec);
        rec
    }

    pub fn records(&self) -> &[CostRecord] {
        &self.records
    }

    pub fn total_discounted(&self, agent: usize) -> f64 {
        self.records.iter().filter(|r| r.agent == agent).map(|r| r.discounted_cost).sum()
    }

    pub fn total_step(&self, agent: usize) -> f64 {
        self.records.iter().filter(|r| r.agent == agent).map(|r| r.step_cost).sum()
    }
}

/// `S = [w_1 I, ..., w_m I]`, of size `n x (n m)`.
pub fn selection_matrix(omegas: &[f64], n: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(n, n * omegas.len());
    for (j, &w) in omegas.iter().enumerate() {
        for d in 0..n {
            s[(d, j * n + d)] = w;
        }
    }
    s
}

/// `S^T (K^T R K) S`.
pub fn gram_operator(k: &DMatrix<f64>, r: &DMatrix<f64>, omegas: &[f64], n: usize) -> DMatrix<f64> {
    let s = selection_matrix(omegas, n);
    let g = s.transpose() * (k.transpose() * r * k) * &s;
    (&g + g.transpose()) * 0.5
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationBoundInputs {
    pub k: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub omegas: Vec<f64>,
    /// Bound on the stacked deviation `|z|`.
    pub delta_total: f64,
    /// Per-neighbor bounds, one per entry of `omegas`.
    pub delta_per: Vec<f64>,
    pub gamma: f64,
    pub step: usize,
}

impl DeviationBoundInputs {
    fn dim(&self) -> usize {
        self.k.ncols()
    }
}

pub fn spectral_bound(inp: &DeviationBoundInputs) -> f64 {
    if inp.omegas.is_empty() {
        return 0.0;
    }
    let g = gram_operator(&inp.k, &inp.r, &inp.omegas, inp.dim());
    max_symmetric_eigenvalue(&g).max(0.0) * inp.delta_total.powi(2) * discount_factor(inp.gamma, inp.step)
}

pub fn separable_bound(inp: &DeviationBoundInputs) -> Result<f64> {
    if inp.delta_per.len() < inp.omegas.len() {
        return Err(Error::MissingPerNeighborBound(inp.delta_per.len()));
    }
    if inp.omegas.is_empty() {
        return Ok(0.0);
    }
    let krk = inp.k.transpose() * &inp.r * &inp.k;
    let lam = max_symmetric_eigenvalue(&krk).max(0.0);
    let sum: f64 = inp.omegas.iter().zip(&inp.delta_per).map(|(w, d)| (w * d).powi(2)).sum();
    Ok(lam * sum * discount_factor(inp.gamma, inp.step))
}

/// `lambda_max(K^T R K) (sum w_j^2) (sum delta_j^2) / (1-gamma)^k`, the form
/// Cauchy-Schwarz actually yields. Always at least [`separable_bound`].
pub fn cauchy_schwarz_bound(inp: &DeviationBoundInputs) -> Result<f64> {
    if inp.delta_per.len() < inp.omegas.len() {
        return Err(Error::MissingPerNeighborBound(inp.delta_per.len()));
    }
    if inp.omegas.is_empty() {
        return Ok(0.0);
    }
    let krk = inp.k.transpose() * &inp.r * &inp.k;
    let lam = max_symmetric_eigenvalue(&krk).max(0.0);
    let w2: f64 = inp.omegas.iter().map(|w| w * w).sum();
    let d2: f64 = inp.delta_per[..inp.omegas.len()].iter().map(|d| d * d).sum();
    Ok(lam * w2 * d2 * discount_factor(inp.gamma, inp.step))
}

/// `(1-gamma)^(-k) |u_a - u_b|_R^2`.
pub fn additional_cost(
    u_actual: &DVector<f64>,
    u_baseline: &DVector<f64>,
    r: &DMatrix<f64>,
    gamma: f64,
    k: usize,
) -> Result<f64> {
    if u_actual.len() != u_baseline.len() {
        return Err(Error::DimensionMismatch {
            expected: u_actual.len(),
            actual: u_baseline.len(),
        });
    }
    if r.nrows() != u_actual.len() {
        return Err(Error::DimensionMismatch {
            expected: r.nrows(),
            actual: u_actual.len(),
        });
    }
    Ok(discounted_step_cost(&(u_actual - u_baseline), r, gamma, k))
}

/// `tr(G Sigma) / (1-gamma)^k`.
pub fn expected_additional_cost(gram: &DMatrix<f64>, sigma: &DMatrix<f64>, gamma: f64, k: usize) -> Result<f64> {
    if gram.shape() != sigma.shape() || gram.nrows() != gram.ncols() {
        return Err(Error::DimensionMismatch {
            expected: gram.nrows(),
            actual: sigma.nrows(),
        });
    }
    Ok((gram * sigma).trace() * discount_factor(gamma, k))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    /// Mean normal-agent cost per step up to isolation.
    pub esc: f64,
    /// Mean normal-agent cost per step after isolation; `None` for an empty window.
    pub lsc: Option<f64>,
    pub convergence_step: Option<usize>,
    pub isolation_step: Option<usize>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Metrics from per-step series indexed by `k - 1`.
pub fn metrics_from_series(
    costs: &[f64],
    max_dist: &[f64],
    isolation_step: Option<usize>,
    eps: f64,
    dwell: usize,
) -> Result<MetricsReport> {
    let h = costs.len();
    if h == 0 {
        return Err(Error::EmptyTrace);
    }
    if max_dist.len() != h {
        return Err(Error::LengthMismatch { expected: h, actual: max_dist.len() });
    }
    if dwell == 0 {
        return Err(Error::InvalidConfig("dwell must be at least 1".into()));
    }
    let convergence_step = (dwell <= h)
        .then(|| (0..=h - dwell).find(|&s| max_dist[s..s + dwell].iter().all(|&d| d <= eps)))
        .flatten()
        .map(|s| s + 1);
    let k_iso = isolation_step.unwrap_or(h / 2).clamp(1, h);
    let end = convergence_step.unwrap_or(h);
    Ok(MetricsReport {
        esc: mean(&costs[..k_iso]).unwrap_or(0.0),
        lsc: if end > k_iso { mean(&costs[k_iso..end]) } else { None },
        convergence_step,
        isolation_step,
    })
}

pub fn metrics(trace: &SimTrace, eps: f64, dwell: usize) -> Result<MetricsReport> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    metrics_from_series(
        &trace.normal_cost_series(),
        &trace.max_normal_distance_series(),
        trace.isolation_step(),
        eps,
        dwell,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn m(rows: usize, cols: usize, xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, xs)
    }

    fn scalar_inputs(omegas: Vec<f64>, delta_total: f64, delta_per: Vec<f64>, gamma: f64, step: usize) -> DeviationBoundInputs {
        DeviationBoundInputs {
            k: m(1, 1, &[2.0]),
            r: m(1, 1, &[1.0]),
            omegas,
            delta_total,
            delta_per,
            gamma,
            step,
        }
    }

    #[test]
    fn step_cost_examples() {
        let eye = DMatrix::identity(2, 2);
        assert!((discounted_step_cost(&dvector![1.0, 1.0], &eye, 0.1, 2) - 2.0 / 0.81).abs() < 1e-12);
        assert_eq!(discounted_step_cost(&dvector![0.0, 0.0], &eye, 0.3, 9), 0.0);
        assert_eq!(discounted_step_cost(&dvector![1.0], &m(1, 1, &[4.0]), 0.0, 5), 4.0);
    }

    #[test]
    fn gram_examples() {
        let g = gram_operator(&m(1, 1, &[2.0]), &m(1, 1, &[1.0]), &[0.6], 1);
        assert!((g[(0, 0)] - 1.44).abs() < 1e-12);
        let g = gram_operator(&m(1, 1, &[2.0]), &m(1, 1, &[1.0]), &[0.3, 0.4], 1);
        let expected = m(2, 2, &[0.36, 0.48, 0.48, 0.64]);
        assert!((g - expected).amax() < 1e-12);
        let g = gram_operator(&DMatrix::identity(2, 3), &DMatrix::identity(2, 2), &[0.0, 0.0], 3);
        assert_eq!(g, DMatrix::zeros(6, 6));
    }

    #[test]
    fn spectral_examples() {
        let b = spectral_bound(&scalar_inputs(vec![0.6], 0.5, vec![0.5], 0.0, 0));
        assert!((b - 0.36).abs() < 1e-12);
        assert_eq!(spectral_bound(&scalar_inputs(vec![0.6], 0.0, vec![0.0], 0.0, 0)), 0.0);
        let b1 = spectral_bound(&scalar_inputs(vec![0.6], 0.5, vec![0.5], 0.1, 1));
        assert!((b1 - 0.36 / 0.9).abs() < 1e-12);
        // brute force over the interval |z| <= 0.5
        let brute = (0..=1000)
            .map(|i| -0.5 + i as f64 / 1000.0)
            .map(|z| 1.44 * z * z)
            .fold(0.0, f64::max);
        assert!((brute - b).abs() < 1e-12 / 0.9);
    }

    #[test]
    fn separable_examples() {
        let inp = scalar_inputs(vec![0.3, 0.4], 1.0, vec![1.0, 1.0], 0.0, 0);
        assert!((separable_bound(&inp).unwrap() - 1.0).abs() < 1e-12);
        let single = scalar_inputs(vec![0.6], 0.5, vec![0.5], 0.2, 3);
        assert!((separable_bound(&single).unwrap() - spectral_bound(&single)).abs() < 1e-12);
        assert_eq!(separable_bound(&scalar_inputs(vec![], 1.0, vec![], 0.0, 0)).unwrap(), 0.0);
        assert!(matches!(
            separable_bound(&scalar_inputs(vec![0.3, 0.4], 1.0, vec![1.0], 0.0, 0)),
            Err(Error::MissingPerNeighborBound(_))
        ));
    }

    #[test]
    fn separable_form_undercounts_aligned_neighbors() {
        // two neighbors pushing the same way: |S z|^2 = (0.5 + 0.5)^2
        let inp = scalar_inputs(vec![0.5, 0.5], 2f64.sqrt(), vec![1.0, 1.0], 0.0, 0);
        let du = 2.0 * (0.5 + 0.5);
        let cost = additional_cost(&dvector![du], &dvector![0.0], &inp.r, 0.0, 0).unwrap();
        assert!((cost - 4.0).abs() < 1e-12);
        assert!((separable_bound(&inp).unwrap() - 2.0).abs() < 1e-12);
        assert!((cauchy_schwarz_bound(&inp).unwrap() - 4.0).abs() < 1e-12);
        assert!((spectral_bound(&inp) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn additional_cost_examples() {
        let r = m(1, 1, &[1.0]);
        assert_eq!(additional_cost(&dvector![0.7], &dvector![0.7], &r, 0.2, 4).unwrap(), 0.0);
        // du = K S z = 2 * 0.6 * 0.5
        let du = additional_cost(&dvector![1.2 * 0.5], &dvector![0.0], &r, 0.0, 0).unwrap();
        assert!((du - 0.36).abs() < 1e-12);
        let base = additional_cost(&dvector![1.0], &dvector![0.0], &r, 0.0, 0).unwrap();
        let disc = additional_cost(&dvector![1.0], &dvector![0.0], &r, 0.5, 2).unwrap();
        assert_eq!(disc, 4.0 * base);
        assert!(matches!(
            additional_cost(&dvector![1.0], &dvector![1.0, 2.0], &r, 0.0, 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn expectation_examples() {
        let e = expected_additional_cost(&m(1, 1, &[1.44]), &m(1, 1, &[0.25]), 0.0, 0).unwrap();
        assert!((e - 0.36).abs() < 1e-12);
        assert_eq!(expected_additional_cost(&m(1, 1, &[1.44]), &m(1, 1, &[0.0]), 0.0, 0).unwrap(), 0.0);
        let e = expected_additional_cost(&DMatrix::identity(2, 2), &m(2, 2, &[1.0, 0.0, 0.0, 2.0]), 0.1, 3).unwrap();
        assert!((e - 3.0 / 0.9f64.powi(3)).abs() < 1e-12);
        assert!(expected_additional_cost(&DMatrix::identity(2, 2), &DMatrix::identity(3, 3), 0.0, 0).is_err());
    }

    #[test]
    fn ledger_totals_are_sums() {
        let mut ledger = CostLedger::new();
        let r = DMatrix::identity(2, 2);
        let mut by_hand = 0.0;
        for k in 1..=50 {
            let u = dvector![(k as f64).sin(), 0.5];
            let rec = ledger.record(k, 1, &u, &r, 0.1);
            assert!(rec.discounted_cost >= rec.step_cost);
            by_hand += u.norm_squared() / 0.9f64.powi(k as i32);
        }
        assert!((ledger.total_discounted(1) - by_hand).abs() <= 1e-12 * by_hand);
        assert_eq!(ledger.total_discounted(2), 0.0);
    }

    #[test]
    fn convergence_window() {
        let h = 120;
        let dist: Vec<f64> = (1..=h).map(|k| if k >= 40 { 0.01 } else { 1.0 }).collect();
        let costs = vec![1.0; h];
        let rep = metrics_from_series(&costs, &dist, Some(20), 0.05, 10).unwrap();
        assert_eq!(rep.convergence_step, Some(40));
        assert_eq!(rep.esc, 1.0);
        assert_eq!(rep.lsc, Some(1.0));

        let never = vec![1.0; h];
        let rep = metrics_from_series(&costs, &never, None, 0.05, 10).unwrap();
        assert_eq!(rep.convergence_step, None);

        // a dip shorter than the dwell window does not count
        let mut blip = vec![1.0; h];
        for d in &mut blip[9..14] {
            *d = 0.0;
        }
        assert_eq!(metrics_from_series(&costs, &blip, None, 0.05, 10).unwrap().convergence_step, None);
        assert!(matches!(
            metrics_from_series(&[], &[], None, 0.05, 10),
            Err(Error::EmptyTrace)
        ));
    }

    #[test]
    fn cost_windows_split_at_isolation() {
        let costs: Vec<f64> = (1..=10).map(|k| k as f64).collect();
        let dist: Vec<f64> = (1..=10).map(|k| if k >= 8 { 0.0 } else { 1.0 }).collect();
        let rep = metrics_from_series(&costs, &dist, Some(4), 0.05, 2).unwrap();
        assert_eq!(rep.convergence_step, Some(8));
        assert_eq!(rep.esc, 2.5);
        assert_eq!(rep.lsc, Some((5.0 + 6.0 + 7.0 + 8.0) / 4.0));
        // no isolation: early window is the first half
        let rep = metrics_from_series(&costs, &[1.0; 10], None, 0.05, 2).unwrap();
        assert_eq!(rep.esc, 3.0);
        assert_eq!(rep.lsc, Some(8.0));
    }
}
