//! Smoothness operator, gradient-magnitude map and the uniform-penalty
//! (UPEN) update of the local L2 parameters `λᵢ` and the global L1
//! parameter `α`.

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};

/// Operator norm bound of the 5-point Laplacian with Neumann boundaries.
pub const LAPLACIAN_NORM_BOUND: f64 = 8.0;

/// Tuning coefficients of the λ rule.
///
/// The defaults are starting values only; the best choice depends on the
/// sample being measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpenCoefficients {
    pub beta0: f64,
    pub betap: f64,
    pub betac: f64,
}

impl Default for UpenCoefficients {
    fn default() -> Self {
        Self {
            beta0: 1e-4,
            betap: 1e-2,
            betac: 1.0,
        }
    }
}

impl UpenCoefficients {
    pub fn new(beta0: f64, betap: f64, betac: f64) -> Result<Self> {
        let c = Self { beta0, betap, betac };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta0", self.beta0), ("betap", self.betap), ("betac", self.betac)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Weights `(ω1, ω2)` of the L2 and L1 penalty terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyWeights {
    pub omega1: f64,
    pub omega2: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self {
            omega1: 1.0,
            omega2: 1.0,
        }
    }
}

/// Regularization parameters for one outer iteration.
#[derive(Debug, Clone)]
pub struct RegularizationState {
    /// Local L2 parameters, laid out like the map (`N1 × N2`).
    pub lambda: Array2<f64>,
    pub alpha: f64,
    pub coefficients: UpenCoefficients,
    pub weights: PenaltyWeights,
}

impl RegularizationState {
    pub fn max_lambda(&self) -> f64 {
        self.lambda.iter().copied().fold(0.0, f64::max)
    }
}

fn check_min_shape(map: ArrayView2<f64>, min: usize, what: &str) -> Result<()> {
    let (n1, n2) = map.dim();
    if n1 < min || n2 < min {
        return Err(Error::Config(format!(
            "{what} needs a map of at least {min}x{min}, got {n1}x{n2}"
        )));
    }
    Ok(())
}

/// 5-point Laplacian with replicated (Neumann) boundaries.
pub fn laplacian_apply(map: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_min_shape(map, 3, "the Laplacian")?;
    let mut out = Array2::zeros(map.dim());
    laplacian_into(map, &mut out);
    Ok(out)
}

/// Unchecked Laplacian writing into `out`; a missing neighbour is replaced
/// by the center value, so it contributes nothing.
pub(crate) fn laplacian_into(map: ArrayView2<f64>, out: &mut Array2<f64>) {
    let (n1, n2) = map.dim();
    for i in 0..n1 {
        let up = i.saturating_sub(1);
        let down = (i + 1).min(n1 - 1);
        for j in 0..n2 {
            let left = j.saturating_sub(1);
            let right = (j + 1).min(n2 - 1);
            let c = map[[i, j]];
            out[[i, j]] = map[[up, j]] + map[[down, j]] + map[[i, left]] + map[[i, right]] - 4.0 * c;
        }
    }
}

/// Per-pixel Euclidean norm of the forward-difference gradient; the
/// difference across the last row/column is zero.
pub fn gradient_magnitude(map: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_min_shape(map, 2, "the gradient")?;
    let (n1, n2) = map.dim();
    Ok(Array2::from_shape_fn((n1, n2), |(i, j)| {
        let c = map[[i, j]];
        let d1 = if i + 1 < n1 { map[[i + 1, j]] - c } else { 0.0 };
        let d2 = if j + 1 < n2 { map[[i, j + 1]] - c } else { 0.0 };
        d1.hypot(d2)
    }))
}

/// Maximum over the 3×3 neighbourhood of each pixel, clipped at the edges.
pub(crate) fn neighbourhood_max(map: ArrayView2<f64>) -> Array2<f64> {
    let (n1, n2) = map.dim();
    let rows = Array2::from_shape_fn((n1, n2), |(i, j)| {
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(n1 - 1);
        (lo..=hi).map(|r| map[[r, j]]).fold(f64::NEG_INFINITY, f64::max)
    });
    Array2::from_shape_fn((n1, n2), |(i, j)| {
        let lo = j.saturating_sub(1);
        let hi = (j + 1).min(n2 - 1);
        (lo..=hi).map(|c| rows[[i, c]]).fold(f64::NEG_INFINITY, f64::max)
    })
}

/// UPEN update from the current map and its squared residual norm.
///
/// `α = r² / ((N+1)·‖f‖₁)` and
/// `λᵢ = r² / ((N+1)·(β0 + βp·max_{Iᵢ} ‖∇F‖² + βc·max_{Iᵢ} (LF)²))`
/// where `Iᵢ` is the 3×3 neighbourhood of pixel `i`.
pub fn update_parameters(
    map: ArrayView2<f64>,
    residual_sq: f64,
    coefficients: UpenCoefficients,
) -> Result<RegularizationState> {
    coefficients.validate()?;
    if !(residual_sq.is_finite() && residual_sq >= 0.0) {
        return Err(Error::Data(format!(
            "squared residual must be finite and non-negative, got {residual_sq}"
        )));
    }
    check_min_shape(map, 3, "the parameter update")?;
    let l1: f64 = map.iter().map(|v| v.abs()).sum();
    if l1 == 0.0 {
        return Err(Error::DegenerateIterate);
    }
    let n_plus_1 = (map.len() + 1) as f64;
    let alpha = residual_sq / (n_plus_1 * l1);

    let grad_sq = gradient_magnitude(map)?.mapv(|g| g * g);
    let curv_sq = laplacian_apply(map)?.mapv(|c| c * c);
    let grad_max = neighbourhood_max(grad_sq.view());
    let curv_max = neighbourhood_max(curv_sq.view());
    let UpenCoefficients { beta0, betap, betac } = coefficients;
    let lambda = Zip::from(&grad_max).and(&curv_max).map_collect(|&g, &c| {
        residual_sq / (n_plus_1 * (beta0 + betap * g + betac * c))
    });
    Ok(RegularizationState {
        lambda,
        alpha,
        coefficients,
        weights: PenaltyWeights::default(),
    })
}
