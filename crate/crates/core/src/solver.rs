//! FISTA with constant stepsize for the multipenalty subproblem, the soft
//! thresholding prox and the projected-gradient warm start.
//!
//! Gradient convention: the smooth part `‖Kf − s‖² + ω1·Σλᵢ(Lf)ᵢ²` has
//! gradient `2·(Kᵀ(Kf − s) + ω1·LᵀΛLf)`. Its Lipschitz constant is twice
//! `λmax(KᵀK + LᵀΛL)`, which `ξ` only bounds once, so the step applied to the
//! full gradient is `1/(2ξ)` and the L1 threshold is `ω2·α/(2ξ)`. A step of
//! `1/ξ` on the full gradient diverges along the leading singular direction.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{check_len, Error, Result};
use crate::operator::{sum_sq, KroneckerOperator};
use crate::regularizer::{laplacian_into, PenaltyWeights, LAPLACIAN_NORM_BOUND};

/// How often (in iterations) the objective is sampled into the history.
pub const OBJECTIVE_SAMPLE_EVERY: usize = 50;

#[inline]
pub(crate) fn shrink(z: f64, theta: f64) -> f64 {
    z.signum() * (z.abs() - theta).max(0.0)
}

/// Elementwise `sign(zᵢ)·max(|zᵢ| − θ, 0)`, the prox of `θ‖·‖₁`.
pub fn soft_threshold(z: ArrayView1<f64>, theta: f64) -> Result<Array1<f64>> {
    if theta.is_nan() || theta < 0.0 {
        return Err(Error::Config(format!(
            "soft threshold must be non-negative, got {theta}"
        )));
    }
    Ok(z.mapv(|v| shrink(v, theta)))
}

/// `ξ = (σ1·σ2)² + 64·maxᵢ λᵢ`, an upper bound on `λmax(KᵀK + LᵀΛL)`.
pub fn stepsize<'a>(sigma1: f64, sigma2: f64, lambda: impl IntoIterator<Item = &'a f64>) -> f64 {
    let max_lambda = lambda.into_iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    (sigma1 * sigma2).powi(2) + LAPLACIAN_NORM_BOUND * LAPLACIAN_NORM_BOUND * max_lambda
}

#[derive(Debug, Clone, PartialEq)]
pub struct FistaConfig {
    /// Stop once `‖f_j − f_{j−1}‖ ≤ tol·‖f_j‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// Replaces the computed `ξ` when set.
    pub stepsize_override: Option<f64>,
    /// Sample the objective every [`OBJECTIVE_SAMPLE_EVERY`] iterations.
    pub record_history: bool,
}

impl Default for FistaConfig {
    fn default() -> Self {
        Self {
            tol: 5e-6,
            max_iter: 100_000,
            stepsize_override: None,
            record_history: false,
        }
    }
}

impl FistaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Config(format!("FISTA tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("FISTA iteration cap must be at least 1".into()));
        }
        if let Some(xi) = self.stepsize_override {
            if !(xi.is_finite() && xi > 0.0) {
                return Err(Error::Config(format!("stepsize override must be positive, got {xi}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FistaTrace {
    pub iterations: usize,
    pub converged: bool,
    pub stepsize: f64,
    pub final_objective: f64,
    /// `(iteration, objective)` samples, when requested.
    pub objective_history: Option<Vec<(usize, f64)>>,
}

/// Multipenalty least-squares problem `‖Kf − s‖² + ω1·Σλᵢ(Lf)ᵢ² + ω2·α‖f‖₁`.
#[derive(Debug, Clone, Copy)]
pub struct MultipenaltyProblem<'a> {
    pub operator: &'a KroneckerOperator,
    pub data: ArrayView2<'a, f64>,
    pub lambda: ArrayView2<'a, f64>,
    pub alpha: f64,
    pub weights: PenaltyWeights,
}

impl MultipenaltyProblem<'_> {
    fn check(&self) -> Result<()> {
        let (n1, n2) = self.operator.map_shape();
        let (m1, m2) = self.operator.data_shape();
        check_len("problem: data rows", m1, self.data.nrows())?;
        check_len("problem: data columns", m2, self.data.ncols())?;
        check_len("problem: lambda rows", n1, self.lambda.nrows())?;
        check_len("problem: lambda columns", n2, self.lambda.ncols())?;
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if self.lambda.iter().any(|&l| !(l.is_finite() && l >= 0.0)) {
            return Err(Error::Config("lambda entries must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn objective(&self, map: ArrayView2<f64>) -> Result<f64> {
        let fit = self.operator.residual_norm_sq(map, self.data)?;
        let mut lap = Array2::zeros(map.dim());
        laplacian_into(map, &mut lap);
        let smooth: f64 = Zip::from(&self.lambda)
            .and(&lap)
            .fold(0.0, |acc, &l, &v| acc + l * v * v);
        let l1: f64 = map.iter().map(|v| v.abs()).sum();
        Ok(fit + self.weights.omega1 * smooth + self.weights.omega2 * self.alpha * l1)
    }
}

/// Gram form of the data term, so that `Kᵀ(Kf − s) = G1·F·G2 − B`.
struct NormalEquations {
    g1: Array2<f64>,
    g2: Array2<f64>,
    b: Array2<f64>,
}

impl NormalEquations {
    fn new(op: &KroneckerOperator, data: ArrayView2<f64>) -> Result<Self> {
        Ok(Self {
            g1: op.k1().t().dot(op.k1()),
            g2: op.k2().t().dot(op.k2()),
            b: op.adjoint_map(data)?,
        })
    }

    /// Writes `Kᵀ(K·F − s)` into `out`.
    fn half_gradient(&self, map: ArrayView2<f64>, out: &mut Array2<f64>) {
        let tmp = self.g1.dot(&map);
        ndarray::linalg::general_mat_mul(1.0, &tmp, &self.g2, 0.0, out);
        *out -= &self.b;
    }
}

/// Runs FISTA from `start` and returns the last iterate.
pub fn fista_solve(
    problem: &MultipenaltyProblem<'_>,
    start: ArrayView2<f64>,
    config: &FistaConfig,
) -> Result<(Array2<f64>, FistaTrace)> {
    problem.check()?;
    config.validate()?;
    let (n1, n2) = problem.operator.map_shape();
    check_len("fista: start rows", n1, start.nrows())?;
    check_len("fista: start columns", n2, start.ncols())?;

    let (s1, s2) = problem.operator.sigmas();
    let xi = config
        .stepsize_override
        .unwrap_or_else(|| stepsize(s1, s2, problem.lambda.iter()));
    let step = 1.0 / xi;
    let threshold = problem.weights.omega2 * problem.alpha / (2.0 * xi);
    let omega1 = problem.weights.omega1;
    let smooth_active = omega1 > 0.0 && problem.lambda.iter().any(|&l| l > 0.0);
    let normal = NormalEquations::new(problem.operator, problem.data)?;

    let mut prev = start.to_owned();
    let mut y = start.to_owned();
    let mut next = Array2::zeros((n1, n2));
    let mut grad = Array2::zeros((n1, n2));
    let mut lap = Array2::zeros((n1, n2));
    let mut lap2 = Array2::zeros((n1, n2));
    let mut t = 1.0f64;
    let mut history = config.record_history.then(Vec::new);
    let mut iterations = 0;
    let mut converged = false;

    for j in 1..=config.max_iter {
        iterations = j;
        normal.half_gradient(y.view(), &mut grad);
        if smooth_active {
            laplacian_into(y.view(), &mut lap);
            Zip::from(&mut lap).and(&problem.lambda).for_each(|v, &l| *v *= l);
            laplacian_into(lap.view(), &mut lap2);
            grad.scaled_add(omega1, &lap2);
        }
        Zip::from(&mut next)
            .and(&y)
            .and(&grad)
            .for_each(|f, &yv, &g| *f = shrink(yv - step * g, threshold));

        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: j });
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        let mut change_sq = 0.0;
        let mut norm_sq = 0.0;
        Zip::from(&mut y).and(&next).and(&prev).for_each(|yv, &f, &p| {
            let d = f - p;
            change_sq += d * d;
            norm_sq += f * f;
            *yv = f + momentum * d;
        });
        if !(norm_sq.is_finite() && change_sq.is_finite()) {
            return Err(Error::Diverged { iteration: j });
        }
        std::mem::swap(&mut prev, &mut next);
        t = t_next;

        if let Some(h) = history.as_mut() {
            if j % OBJECTIVE_SAMPLE_EVERY == 0 {
                h.push((j, problem.objective(prev.view())?));
            }
        }
        if change_sq.sqrt() <= config.tol * norm_sq.sqrt() {
            converged = true;
            break;
        }
    }

    let final_objective = problem.objective(prev.view())?;
    Ok((
        prev,
        FistaTrace {
            iterations,
            converged,
            stepsize: xi,
            final_objective,
            objective_history: history,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpTrace {
    pub iterations: usize,
    pub converged: bool,
}

/// Projected gradient for `min_{f ≥ 0} ‖Kf − s‖²`, started from
/// `c·max(Kᵀs, 0)` (with `c ≥ 0` the least-squares scale of that direction)
/// and run with stepsize `1/(σ1·σ2)²`.
///
/// Stops when the projected-gradient norm has dropped by a factor `tol`
/// relative to the starting point, or after `max_iter` steps.
pub fn gradient_projection_init(
    op: &KroneckerOperator,
    data: ArrayView2<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(Array2<f64>, GpTrace)> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("data contain non-finite values".into()));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Config(format!("projected gradient tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::Config("projected gradient iteration cap must be at least 1".into()));
    }
    let normal = NormalEquations::new(op, data)?;
    let step = 1.0 / op.norm().powi(2);
    let mut f = normal.b.mapv(|v| v.max(0.0));
    // Kᵀs carries a factor of order σ²; rescale it onto the data
    let kf = op.apply_map(f.view())?;
    let kf_sq = sum_sq(kf.view());
    if kf_sq > 0.0 {
        let scale = (kf.iter().zip(data.iter()).map(|(a, b)| a * b).sum::<f64>() / kf_sq).max(0.0);
        f *= scale;
    }
    let mut grad = Array2::zeros(f.dim());

    let projected_norm = |f: &Array2<f64>, g: &Array2<f64>| -> f64 {
        let mut acc = 0.0;
        Zip::from(f).and(g).for_each(|&fv, &gv| {
            let p = if fv > 0.0 { gv } else { gv.min(0.0) };
            acc += p * p;
        });
        acc.sqrt()
    };

    normal.half_gradient(f.view(), &mut grad);
    let initial = projected_norm(&f, &grad);
    if initial == 0.0 {
        return Ok((f, GpTrace { iterations: 0, converged: true }));
    }
    for it in 1..=max_iter {
        Zip::from(&mut f).and(&grad).for_each(|fv, &g| *fv = (*fv - step * g).max(0.0));
        normal.half_gradient(f.view(), &mut grad);
        if projected_norm(&f, &grad) <= tol * initial {
            return Ok((f, GpTrace { iterations: it, converged: true }));
        }
    }
    Ok((f, GpTrace { iterations: max_iter, converged: false }))
}

/// `‖F‖₂` over all entries.
pub(crate) fn frobenius(a: ArrayView2<f64>) -> f64 {
    sum_sq(a).sqrt()
}
