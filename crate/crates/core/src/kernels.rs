//! Acquisition grids, logarithmic relaxation grids and the discretized
//! kernel matrices of the supported experiments.
//!
//! Every kernel is separable: the signal model is `S = K1 · F · K2ᵀ`, with
//! `K1[i, j] = k1(t1[i], grid1[j])` and `K2[i, j] = k2(t2[i], grid2[j])`.
//! Grid values are bin centers; no quadrature weights are applied.
//! Units are never converted, the times and the grid limits only have to
//! agree with each other.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Evolution times of the two acquisition dimensions.
///
/// For D-T2 data the second axis carries the effective diffusion encoding
/// value, so that the kernel reads `exp(-t2 * D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionTimes {
    t1: Vec<f64>,
    t2: Vec<f64>,
}

impl AcquisitionTimes {
    pub fn new(t1: Vec<f64>, t2: Vec<f64>) -> Result<Self> {
        check_axis("t1", &t1)?;
        check_axis("t2", &t2)?;
        Ok(Self { t1, t2 })
    }

    pub fn t1(&self) -> &[f64] {
        &self.t1
    }

    pub fn t2(&self) -> &[f64] {
        &self.t2
    }

    /// `(M1, M2)`
    pub fn shape(&self) -> (usize, usize) {
        (self.t1.len(), self.t2.len())
    }
}

fn check_axis(name: &str, t: &[f64]) -> Result<()> {
    if t.is_empty() {
        return Err(Error::Data(format!("{name} axis is empty")));
    }
    for (i, &v) in t.iter().enumerate() {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::Data(format!(
                "{name}[{i}] = {v} is not a finite positive time"
            )));
        }
    }
    if let Some(i) = t.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Data(format!(
            "{name} is not strictly increasing at index {}",
            i + 1
        )));
    }
    Ok(())
}

/// Logarithmically spaced relaxation-parameter bins between two inversion
/// limits (inclusive).
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationGrid {
    values: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl RelaxationGrid {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Natural-log spacing between adjacent bins.
    pub fn log_step(&self) -> f64 {
        (self.hi / self.lo).ln() / (self.len() - 1) as f64
    }

    /// Fractional bin index of `value` on the log axis.
    pub fn log_position(&self, value: f64) -> f64 {
        (value / self.lo).ln() / self.log_step()
    }
}

/// Geometric progression of `n` points from `lo` to `hi`.
pub fn make_log_grid(lo: f64, hi: f64, n: usize) -> Result<RelaxationGrid> {
    if !(lo.is_finite() && lo > 0.0) {
        return Err(Error::Config(format!(
            "lower inversion limit must be positive, got {lo}"
        )));
    }
    if !(hi.is_finite() && hi > lo) {
        return Err(Error::Config(format!(
            "upper inversion limit must exceed the lower one, got [{lo}, {hi}]"
        )));
    }
    if n < 2 {
        return Err(Error::Config(format!(
            "a relaxation grid needs at least 2 bins, got {n}"
        )));
    }
    let log_lo = lo.ln();
    let step = (hi.ln() - log_lo) / (n - 1) as f64;
    let mut values: Vec<f64> = (0..n).map(|k| (log_lo + step * k as f64).exp()).collect();
    // pin the endpoints exactly
    values[0] = lo;
    values[n - 1] = hi;
    Ok(RelaxationGrid { values, lo, hi })
}

/// Experiment type, selecting the analytic `(k1, k2)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// Inversion recovery detected by CPMG: `k1 = 1 - 2 exp(-t/T1)`.
    IrCpmg,
    /// Saturation recovery detected by CPMG: `k1 = 1 - exp(-t/T1)`.
    SrCpmg,
    /// CPMG-CPMG (T2-T2 exchange): `k1 = exp(-t/T2)`.
    CpmgCpmg,
    /// Diffusion editing: `k1 = exp(-t/T2)`, `k2 = exp(-t * D)`.
    DiffusionCpmg,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [
        KernelKind::IrCpmg,
        KernelKind::SrCpmg,
        KernelKind::CpmgCpmg,
        KernelKind::DiffusionCpmg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::IrCpmg => "IR-CPMG",
            KernelKind::SrCpmg => "SR-CPMG",
            KernelKind::CpmgCpmg => "CPMG-CPMG",
            KernelKind::DiffusionCpmg => "D-CPMG",
        }
    }

    /// Labels of the two relaxation axes, used in outputs and plots.
    pub fn axis_labels(self) -> (&'static str, &'static str) {
        match self {
            KernelKind::IrCpmg | KernelKind::SrCpmg => ("T1", "T2"),
            KernelKind::CpmgCpmg => ("T2,1", "T2,2"),
            KernelKind::DiffusionCpmg => ("T2", "D"),
        }
    }

    pub fn k1(self, t: f64, param: f64) -> f64 {
        match self {
            KernelKind::IrCpmg => 1.0 - 2.0 * (-t / param).exp(),
            KernelKind::SrCpmg => 1.0 - (-t / param).exp(),
            KernelKind::CpmgCpmg | KernelKind::DiffusionCpmg => (-t / param).exp(),
        }
    }

    pub fn k2(self, t: f64, param: f64) -> f64 {
        match self {
            KernelKind::DiffusionCpmg => (-t * param).exp(),
            _ => (-t / param).exp(),
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_uppercase();
        match key.as_str() {
            "IRCPMG" | "T1T2IR" | "IR" => Ok(KernelKind::IrCpmg),
            "SRCPMG" | "T1T2SR" | "SR" => Ok(KernelKind::SrCpmg),
            "CPMGCPMG" | "T2T2" => Ok(KernelKind::CpmgCpmg),
            "DCPMG" | "DT2" | "T2D" => Ok(KernelKind::DiffusionCpmg),
            _ => Err(Error::Config(format!(
                "unknown kernel type '{s}' (expected one of IR-CPMG, SR-CPMG, CPMG-CPMG, D-CPMG)"
            ))),
        }
    }
}

/// Pair of dense kernel matrices whose Kronecker product `K2 ⊗ K1` is the
/// forward model.
#[derive(Debug, Clone)]
pub struct SeparableKernel {
    pub k1: Array2<f64>,
    pub k2: Array2<f64>,
    pub kind: KernelKind,
    pub grid1: RelaxationGrid,
    pub grid2: RelaxationGrid,
    pub times: AcquisitionTimes,
}

impl SeparableKernel {
    /// `(N1, N2)`
    pub fn map_shape(&self) -> (usize, usize) {
        (self.grid1.len(), self.grid2.len())
    }

    /// `(M1, M2)`
    pub fn data_shape(&self) -> (usize, usize) {
        self.times.shape()
    }
}

pub fn build_kernel_pair(
    kind: KernelKind,
    times: AcquisitionTimes,
    grid1: RelaxationGrid,
    grid2: RelaxationGrid,
) -> SeparableKernel {
    let k1 = Array2::from_shape_fn((times.t1.len(), grid1.len()), |(i, j)| {
        kind.k1(times.t1[i], grid1.values[j])
    });
    let k2 = Array2::from_shape_fn((times.t2.len(), grid2.len()), |(i, j)| {
        kind.k2(times.t2[i], grid2.values[j])
    });
    SeparableKernel {
        k1,
        k2,
        kind,
        grid1,
        grid2,
        times,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_times(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        make_log_grid(lo, hi, n).unwrap().values().to_vec()
    }

    #[test]
    fn log_grid_midpoint() {
        let g = make_log_grid(1.0, 100.0, 3).unwrap();
        assert_eq!(g.values()[0], 1.0);
        assert!((g.values()[1] - 10.0).abs() < 1e-12);
        assert_eq!(g.values()[2], 100.0);
    }

    #[test]
    fn log_grid_two_points_is_endpoints() {
        let g = make_log_grid(0.3, 7.5, 2).unwrap();
        assert_eq!(g.values(), &[0.3, 7.5]);
    }

    #[test]
    fn log_grid_matches_closed_form() {
        let g = make_log_grid(0.5, 3000.0, 128).unwrap();
        let expected = 0.5 * 6000f64.powf(64.0 / 127.0);
        assert!((g.values()[64] - expected).abs() / expected < 1e-12);
        let r0 = g.values()[1] / g.values()[0];
        for w in g.values().windows(2) {
            assert!(((w[1] / w[0]) - r0).abs() / r0 < 1e-12);
        }
    }

    #[test]
    fn log_grid_rejects_bad_limits() {
        assert!(matches!(make_log_grid(0.0, 1.0, 5), Err(Error::Config(_))));
        assert!(matches!(make_log_grid(-1.0, 1.0, 5), Err(Error::Config(_))));
        assert!(matches!(make_log_grid(2.0, 2.0, 5), Err(Error::Config(_))));
        assert!(matches!(make_log_grid(1.0, 2.0, 1), Err(Error::Config(_))));
    }

    #[test]
    fn times_must_increase() {
        assert!(AcquisitionTimes::new(vec![1.0, 1.0], vec![1.0]).is_err());
        assert!(AcquisitionTimes::new(vec![1.0, f64::NAN], vec![1.0]).is_err());
        assert!(AcquisitionTimes::new(vec![], vec![1.0]).is_err());
        assert!(AcquisitionTimes::new(vec![0.5, 1.0], vec![0.2, 0.4]).is_ok());
    }

    #[test]
    fn ir_null_point() {
        let t1 = 100.0;
        assert!(KernelKind::IrCpmg.k1(t1 * 2f64.ln(), t1).abs() < 1e-15);
    }

    #[test]
    fn cpmg_at_zero_time_is_one() {
        assert_eq!(KernelKind::CpmgCpmg.k2(0.0, 3.7), 1.0);
        assert_eq!(KernelKind::DiffusionCpmg.k2(0.0, 3.7), 1.0);
    }

    #[test]
    fn ir_kernel_on_synthetic_sizes() {
        let times = AcquisitionTimes::new(
            log_times(0.1, 1e4, 128),
            (1..=64).map(|k| 0.2 * k as f64).collect(),
        )
        .unwrap();
        let g1 = make_log_grid(1.0, 1e4, 80).unwrap();
        let g2 = make_log_grid(0.1, 1e3, 80).unwrap();
        let k = build_kernel_pair(KernelKind::IrCpmg, times, g1, g2);
        assert_eq!(k.k1.dim(), (128, 80));
        for col in k.k1.columns() {
            assert!(col.iter().all(|&v| (-1.0..=1.0).contains(&v)));
            assert!(col.windows(2).into_iter().all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn column_sign_structure() {
        let times = AcquisitionTimes::new(log_times(0.1, 1e4, 40), log_times(0.1, 10.0, 30)).unwrap();
        for kind in KernelKind::ALL {
            let k = build_kernel_pair(
                kind,
                times.clone(),
                make_log_grid(1.0, 1e3, 12).unwrap(),
                make_log_grid(0.05, 10.0, 9).unwrap(),
            );
            for col in k.k2.columns() {
                assert!(col.iter().all(|&v| v > 0.0 && v <= 1.0));
                assert!(col.windows(2).into_iter().all(|w| w[1] <= w[0]));
            }
            for col in k.k1.columns() {
                let changes = col
                    .windows(2)
                    .into_iter()
                    .filter(|w| w[0].signum() != w[1].signum())
                    .count();
                match kind {
                    KernelKind::IrCpmg => assert_eq!(changes, 1),
                    _ => assert_eq!(changes, 0),
                }
            }
        }
    }

    #[test]
    fn kernel_build_is_deterministic() {
        let times = AcquisitionTimes::new(log_times(0.5, 3000.0, 16), log_times(0.2, 50.0, 20)).unwrap();
        let g1 = make_log_grid(1.0, 1e3, 10).unwrap();
        let g2 = make_log_grid(0.1, 100.0, 11).unwrap();
        let a = build_kernel_pair(KernelKind::SrCpmg, times.clone(), g1.clone(), g2.clone());
        let b = build_kernel_pair(KernelKind::SrCpmg, times, g1, g2);
        assert!(a.k1.iter().zip(b.k1.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.k2.iter().zip(b.k2.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn kernel_kind_parsing() {
        for kind in KernelKind::ALL {
            assert_eq!(kind.name().parse::<KernelKind>().unwrap(), kind);
        }
        assert_eq!("ir_cpmg".parse::<KernelKind>().unwrap(), KernelKind::IrCpmg);
        assert!("MRI".parse::<KernelKind>().is_err());
    }
}
