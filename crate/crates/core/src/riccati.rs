//! Discounted LQR gains from the periodic, state-weight-free Riccati recursion
//!
//! ```text
//! (1 - g(t)) P(t) = A' P(t+1) A - A' P(t+1) B (R + B' P(t+1) B)^-1 B' P(t+1) A,   P(T+1) = P(1)
//! ```
//!
//! solved by cyclic backward fixed-point sweeps from `P(t) = I`. The gain applied
//! in phase `t` is `K(t) = (R + B' P(t+1) B)^-1 B' P(t+1) A`, which makes the
//! composed one-period closed loop `prod(1 - g) / a^T` in the scalar case.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::linalg;

/// Default relative tolerance on the sweep-to-sweep Frobenius change.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Default cap on full backward sweeps.
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Plant `x(k+1) = A x + B u` with input metric `R` (no state weighting).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedLqrProblem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl DiscountedLqrProblem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::InvalidProblem(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::InvalidProblem(format!(
                "B must be {n}xm with m >= 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        let m = b.ncols();
        if r.nrows() != m || r.ncols() != m {
            return Err(Error::InvalidProblem(format!(
                "R must be {m}x{m}, got {}x{}",
                r.nrows(),
                r.ncols()
            )));
        }
        if !linalg::all_finite(&a) || !linalg::all_finite(&b) || !linalg::all_finite(&r) {
            return Err(Error::InvalidProblem("non-finite entry".into()));
        }
        if linalg::asymmetry(&r) > 1e-12 {
            return Err(Error::InvalidProblem("R is not symmetric".into()));
        }
        let min_eig = linalg::min_symmetric_eigenvalue(&r);
        if !(min_eig > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "R is not positive definite (min eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(Self { a, b, r })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// `A' P A - A' P B (R + B' P B)^-1 B' P A`, symmetrized.
    fn riccati_map(&self, p: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let (a, b, r) = (&self.a, &self.b, &self.r);
        let pa = p * a;
        let bt_pa = b.transpose() * &pa;
        let s = r + b.transpose() * p * b;
        let chol = s.cholesky()?;
        let x = chol.solve(&bt_pa);
        let out = a.transpose() * &pa - bt_pa.transpose() * x;
        Some(linalg::symmetrize(&out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// One periodic solution: `p[t]` and `k[t]` for phases `t = 0..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub gammas: Vec<f64>,
    pub p: Vec<DMatrix<f64>>,
    pub k: Vec<DMatrix<f64>>,
    /// Max relative Frobenius residual of the periodic equation over all phases.
    pub residual: f64,
    pub iterations: usize,
}

impl RiccatiSolution {
    pub fn period(&self) -> usize {
        self.p.len()
    }

    /// Gain for the zero-based phase index.
    pub fn gain(&self, phase: usize) -> &DMatrix<f64> {
        &self.k[phase % self.k.len()]
    }

    /// `(A - B K(T)) ... (A - B K(1))`.
    pub fn closed_loop_monodromy(&self, problem: &DiscountedLqrProblem) -> DMatrix<f64> {
        let n = problem.state_dim();
        self.k.iter().fold(DMatrix::identity(n, n), |acc, k| {
            (problem.a() - problem.b() * k) * acc
        })
    }
}

/// Diagnostic for the periodic existence condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict {
    pub stabilizable: bool,
    pub product_condition_holds: bool,
    /// `prod over phases of (1 - g)`.
    pub product_value: f64,
    /// `min |lambda(A)|^2`.
    pub min_eig_sq: f64,
    /// `min |lambda(A^T)|^2 = min_eig_sq^T` for period `T`.
    pub threshold: f64,
}

impl StabilityVerdict {
    pub fn holds(&self) -> bool {
        self.stabilizable && self.product_condition_holds
    }
}

/// Scale-aware PD floor used throughout the solver.
pub fn pd_tolerance(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows().max(1) as f64;
    1e-12 * (1.0 + (m.trace() / n).abs())
}

/// Symmetric within `tol` and minimum eigenvalue above `tol`.
pub fn is_positive_definite(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() || m.is_empty() || !linalg::all_finite(m) {
        return false;
    }
    if linalg::asymmetry(m) > tol {
        return false;
    }
    linalg::min_symmetric_eigenvalue(m) > tol
}

fn check_pd(m: &DMatrix<f64>) -> Result<()> {
    let tol = pd_tolerance(m);
    if is_positive_definite(m, tol) {
        Ok(())
    } else {
        Err(Error::NotPositiveDefinite {
            min_eigenvalue: linalg::min_symmetric_eigenvalue(m),
        })
    }
}

/// PBH test restricted to eigenvalues on or outside the unit circle.
pub fn is_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "A must be square");
    assert_eq!(b.nrows(), n, "B must have as many rows as A");
    let m = b.ncols();
    for lambda in linalg::eigenvalues(a) {
        if lambda.norm() < 1.0 - 1e-12 {
            continue;
        }
        let mut pbh = DMatrix::<Complex<f64>>::zeros(n, n + m);
        for i in 0..n {
            for j in 0..n {
                let diag = if i == j { lambda } else { Complex::new(0.0, 0.0) };
                pbh[(i, j)] = diag - Complex::new(a[(i, j)], 0.0);
            }
            for j in 0..m {
                pbh[(i, n + j)] = Complex::new(b[(i, j)], 0.0);
            }
        }
        if linalg::complex_rank(&pbh) < n {
            return false;
        }
    }
    true
}

/// Evaluates `prod(1 - g) <= min |lambda(A^T)|^2` together with stabilizability.
pub fn check_stability_condition(problem: &DiscountedLqrProblem, gammas: &[f64]) -> StabilityVerdict {
    let product_value: f64 = gammas.iter().map(|g| 1.0 - g).product();
    let min_modulus = linalg::eigenvalues(problem.a())
        .iter()
        .map(|z| z.norm())
        .fold(f64::INFINITY, f64::min);
    let min_eig_sq = min_modulus * min_modulus;
    let threshold = min_eig_sq.powi(gammas.len() as i32);
    StabilityVerdict {
        stabilizable: is_stabilizable(problem.a(), problem.b()),
        product_condition_holds: product_value <= threshold,
        product_value,
        min_eig_sq,
        threshold,
    }
}

/// `(R + B' P B)^-1 B' P A`.
pub fn compute_gain(p: &DMatrix<f64>, problem: &DiscountedLqrProblem) -> Result<DMatrix<f64>> {
    let n = problem.state_dim();
    if p.nrows() != n || p.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: p.nrows(),
        });
    }
    check_pd(p)?;
    let (a, b, r) = (problem.a(), problem.b(), problem.r());
    let s = r + b.transpose() * p * b;
    let chol = s.cholesky().ok_or(Error::NotPositiveDefinite {
        min_eigenvalue: f64::NAN,
    })?;
    Ok(chol.solve(&(b.transpose() * p * a)))
}

fn validate_gammas(gammas: &[f64]) -> Result<()> {
    if gammas.is_empty() {
        return Err(Error::InvalidSchedule("empty gamma sequence".into()));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
        return Err(Error::InvalidSchedule(format!("gamma {g} outside (0, 1)")));
    }
    Ok(())
}

/// Checks the existence condition, then iterates.
pub fn solve_pdare(
    problem: &DiscountedLqrProblem,
    gammas: &[f64],
    opts: SolverOptions,
) -> Result<RiccatiSolution> {
    validate_gammas(gammas)?;
    let verdict = check_stability_condition(problem, gammas);
    if !verdict.stabilizable {
        return Err(Error::NotStabilizable);
    }
    if !verdict.product_condition_holds {
        return Err(Error::ConditionViolated {
            product: verdict.product_value,
            threshold: verdict.threshold,
        });
    }
    iterate_pdare(problem, gammas, opts)
}

/// The raw sweep iteration without the up-front existence check.
pub fn iterate_pdare(
    problem: &DiscountedLqrProblem,
    gammas: &[f64],
    opts: SolverOptions,
) -> Result<RiccatiSolution> {
    validate_gammas(gammas)?;
    let n = problem.state_dim();
    let period = gammas.len();
    let mut p = vec![DMatrix::<f64>::identity(n, n); period];
    let mut change = f64::INFINITY;
    let mut residual = f64::INFINITY;

    for sweep in 1..=opts.max_iter {
        change = 0.0;
        for t in (0..period).rev() {
            let next = &p[(t + 1) % period];
            let mapped = problem.riccati_map(next).ok_or(Error::NotPositiveDefinite {
                min_eigenvalue: linalg::min_symmetric_eigenvalue(next),
            })?;
            let updated = mapped / (1.0 - gammas[t]);
            if !linalg::all_finite(&updated) {
                return Err(Error::NonConvergence {
                    iterations: sweep,
                    change: f64::INFINITY,
                    residual: f64::INFINITY,
                });
            }
            check_pd(&updated)?;
            let scale = updated.norm();
            let delta = (&updated - &p[t]).norm();
            change = change.max(if scale > 0.0 { delta / scale } else { delta });
            p[t] = updated;
        }
        if change <= opts.tol {
            residual = periodic_residual(problem, gammas, &p);
            if residual <= opts.tol {
                let k = (0..period)
                    .map(|t| compute_gain(&p[(t + 1) % period], problem))
                    .collect::<Result<Vec<_>>>()?;
                return Ok(RiccatiSolution {
                    gammas: gammas.to_vec(),
                    p,
                    k,
                    residual,
                    iterations: sweep,
                });
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        change,
        residual,
    })
}

/// Max over phases of `|(1-g)P(t) - Ric(P(t+1))|_F / |(1-g)P(t)|_F`.
pub fn periodic_residual(problem: &DiscountedLqrProblem, gammas: &[f64], p: &[DMatrix<f64>]) -> f64 {
    let period = p.len();
    (0..period)
        .map(|t| {
            let lhs = &p[t] * (1.0 - gammas[t]);
            match problem.riccati_map(&p[(t + 1) % period]) {
                Some(rhs) => {
                    let scale = lhs.norm();
                    let diff = (&lhs - rhs).norm();
                    if scale > 0.0 {
                        diff / scale
                    } else {
                        diff
                    }
                }
                None => f64::INFINITY,
            }
        })
        .fold(0.0, f64::max)
}
