//! Outer loop: projected-gradient warm start, then alternating UPEN
//! parameter updates and FISTA solves until the map stops changing.

use std::time::Instant;

use log::{debug, info, warn};
use ndarray::{Array2, ArrayView2};

use crate::error::{check_len, Error, Result};
use crate::kernels::SeparableKernel;
use crate::operator::{CompressedProblem, KroneckerOperator};
use crate::regularizer::{update_parameters, PenaltyWeights, UpenCoefficients};
use crate::solver::{fista_solve, frobenius, gradient_projection_init, FistaConfig, MultipenaltyProblem};

/// `raw ∈ [0, 1]` gives `(1 − raw, raw)`; anything else gives `(1, 1)`.
pub fn resolve_weights(raw: f64) -> PenaltyWeights {
    if (0.0..=1.0).contains(&raw) {
        PenaltyWeights {
            omega1: 1.0 - raw,
            omega2: raw,
        }
    } else {
        PenaltyWeights::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionConfig {
    /// Outer stopping tolerance τ: stop once `‖f⁽ᵏ⁺¹⁾ − f⁽ᵏ⁾‖ ≤ τ‖f⁽ᵏ⁾‖`.
    pub outer_tol: f64,
    pub max_outer: usize,
    pub fista: FistaConfig,
    pub gp_tol: f64,
    pub gp_max_iter: usize,
    pub coefficients: UpenCoefficients,
    /// Raw weight flag, see [`resolve_weights`].
    pub weight: f64,
    /// Relative singular-value cutoff for data compression.
    pub svd_threshold: f64,
    /// Solve in the retained singular subspaces rather than on the raw data.
    pub compress: bool,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            outer_tol: 1e-4,
            max_outer: 100,
            fista: FistaConfig::default(),
            gp_tol: 1e-4,
            gp_max_iter: 1000,
            coefficients: UpenCoefficients::default(),
            weight: -1.0,
            svd_threshold: 1e-16,
            compress: true,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.outer_tol > 0.0 && self.outer_tol < 1.0) {
            return Err(Error::Config(format!(
                "outer tolerance must lie in (0, 1), got {}",
                self.outer_tol
            )));
        }
        if self.max_outer == 0 || self.gp_max_iter == 0 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        if !(self.gp_tol.is_finite() && self.gp_tol > 0.0) {
            return Err(Error::Config(format!(
                "projected gradient tolerance must be positive, got {}",
                self.gp_tol
            )));
        }
        if !self.weight.is_finite() {
            return Err(Error::Config("weight flag must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.svd_threshold) {
            return Err(Error::Config(format!(
                "SVD threshold must lie in [0, 1), got {}",
                self.svd_threshold
            )));
        }
        self.fista.validate()?;
        self.coefficients.validate()
    }
}

/// Parameters and fit quality recorded at one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub iteration: usize,
    pub alpha: f64,
    pub max_lambda: f64,
    /// Relative residual of the iterate the parameters were computed from.
    pub relative_residual: f64,
    pub fista_iterations: usize,
    pub fista_converged: bool,
}

#[derive(Debug, Clone)]
pub struct InversionResult {
    /// Signed map `F` (`N1 × N2`).
    pub map: Array2<f64>,
    /// `max(F, 0)`, used for display and projections.
    pub display_map: Array2<f64>,
    /// `‖Kf − s‖ / ‖s‖` of the returned map.
    pub relative_residual: f64,
    pub warm_start_relative_residual: f64,
    pub warm_start_iterations: usize,
    pub outer_iterations: usize,
    pub total_fista_iterations: usize,
    pub converged: bool,
    pub seconds: f64,
    pub weights: PenaltyWeights,
    pub history: Vec<OuterRecord>,
    pub warnings: Vec<String>,
}

fn relative(residual_sq: f64, data_norm_sq: f64) -> f64 {
    if data_norm_sq > 0.0 {
        (residual_sq / data_norm_sq).sqrt()
    } else {
        residual_sq.sqrt()
    }
}

pub fn invert(kernel: &SeparableKernel, data: ArrayView2<f64>, config: &InversionConfig) -> Result<InversionResult> {
    config.validate()?;
    let (m1, m2) = kernel.data_shape();
    check_len("data rows vs first time axis", m1, data.nrows())?;
    check_len("data columns vs second time axis", m2, data.ncols())?;
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("data contain non-finite values".into()));
    }

    let started = Instant::now();
    let op = KroneckerOperator::new(kernel.k1.clone(), kernel.k2.clone())?;
    let compressed = if config.compress {
        op.compress(data, config.svd_threshold)?
    } else {
        CompressedProblem::uncompressed(&op, data)?
    };
    debug!(
        "compressed data to {}x{} (sigma1 = {:.6e}, sigma2 = {:.6e})",
        compressed.ranks.0,
        compressed.ranks.1,
        op.sigmas().0,
        op.sigmas().1
    );
    let weights = resolve_weights(config.weight);
    let mut warnings = Vec::new();

    let (mut map, gp) = gradient_projection_init(
        &compressed.operator,
        compressed.data.view(),
        config.gp_tol,
        config.gp_max_iter,
    )?;
    let warm_start_relative_residual = compressed.relative_residual(map.view())?;
    info!(
        "warm start: {} projected gradient iterations, relative residual {:.4e}",
        gp.iterations, warm_start_relative_residual
    );

    let mut history = Vec::new();
    let mut total_fista_iterations = 0;
    let mut converged = false;
    for k in 0..config.max_outer {
        let residual_sq = compressed.residual_norm_sq(map.view())?;
        let mut state = update_parameters(map.view(), residual_sq, config.coefficients)?;
        state.weights = weights;
        let problem = MultipenaltyProblem {
            operator: &compressed.operator,
            data: compressed.data.view(),
            lambda: state.lambda.view(),
            alpha: state.alpha,
            weights,
        };
        let (next, trace) = fista_solve(&problem, map.view(), &config.fista)?;
        total_fista_iterations += trace.iterations;
        if !trace.converged {
            let msg = format!(
                "outer iteration {}: FISTA stopped at its cap of {} iterations without meeting tol {:e}",
                k + 1,
                config.fista.max_iter,
                config.fista.tol
            );
            warn!("{msg}");
            warnings.push(msg);
        }
        let record = OuterRecord {
            iteration: k + 1,
            alpha: state.alpha,
            max_lambda: state.max_lambda(),
            relative_residual: relative(residual_sq, compressed.data_norm_sq),
            fista_iterations: trace.iterations,
            fista_converged: trace.converged,
        };
        info!(
            "outer {:>3}: alpha = {:.4e}, max lambda = {:.4e}, relative residual = {:.4e}, FISTA iterations = {}",
            record.iteration, record.alpha, record.max_lambda, record.relative_residual, record.fista_iterations
        );
        history.push(record);

        let change = frobenius((&next - &map).view());
        let size = frobenius(map.view());
        map = next;
        if change <= config.outer_tol * size {
            converged = true;
            break;
        }
    }
    if !converged {
        let msg = format!("outer loop reached its cap of {} iterations", config.max_outer);
        warn!("{msg}");
        warnings.push(msg);
    }

    let relative_residual = relative(op.residual_norm_sq(map.view(), data)?, compressed.data_norm_sq);
    if relative_residual > 10.0 * warm_start_relative_residual {
        let msg = format!(
            "final relative residual {relative_residual:.4e} exceeds ten times the warm start's {warm_start_relative_residual:.4e}"
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    let display_map = map.mapv(|v| v.max(0.0));
    Ok(InversionResult {
        map,
        display_map,
        relative_residual,
        warm_start_relative_residual,
        warm_start_iterations: gp.iterations,
        outer_iterations: history.len(),
        total_fista_iterations,
        converged,
        seconds: started.elapsed().as_secs_f64(),
        weights,
        history,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_kernel_pair, make_log_grid, AcquisitionTimes, KernelKind};

    #[test]
    fn weight_rule() {
        assert_eq!(resolve_weights(0.3), PenaltyWeights { omega1: 0.7, omega2: 0.3 });
        assert_eq!(resolve_weights(-1.0), PenaltyWeights { omega1: 1.0, omega2: 1.0 });
        assert_eq!(resolve_weights(0.0), PenaltyWeights { omega1: 1.0, omega2: 0.0 });
        assert_eq!(resolve_weights(1.0), PenaltyWeights { omega1: 0.0, omega2: 1.0 });
        assert_eq!(resolve_weights(1.5), PenaltyWeights { omega1: 1.0, omega2: 1.0 });
    }

    fn small_kernel() -> SeparableKernel {
        let times = AcquisitionTimes::new(
            make_log_grid(0.1, 1e4, 16).unwrap().values().to_vec(),
            (1..=32).map(|k| 0.2 * k as f64).collect(),
        )
        .unwrap();
        build_kernel_pair(
            KernelKind::IrCpmg,
            times,
            make_log_grid(1.0, 1e4, 8).unwrap(),
            make_log_grid(0.1, 1e3, 8).unwrap(),
        )
    }

    #[test]
    fn zero_data_is_degenerate() {
        let kernel = small_kernel();
        let err = invert(&kernel, Array2::zeros((16, 32)).view(), &InversionConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateIterate));
    }

    #[test]
    fn data_shape_is_checked() {
        let kernel = small_kernel();
        let err = invert(&kernel, Array2::ones((15, 32)).view(), &InversionConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn config_validation() {
        let c = InversionConfig {
            outer_tol: 1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = InversionConfig {
            svd_threshold: 1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert!(InversionConfig::default().validate().is_ok());
    }
}
