//! Residual statistics, 1D marginal projections and peak summaries of a
//! computed map.

use std::collections::VecDeque;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{check_len, Error, Result};
use crate::kernels::{RelaxationGrid, SeparableKernel};

/// Residuals count as Gaussian when skewness and (non-excess) kurtosis both
/// fall inside these open intervals.
pub const SKEWNESS_LIMIT: f64 = 2.0;
pub const KURTOSIS_LIMIT: f64 = 7.0;
/// Box-plot whisker length in units of the interquartile range.
pub const WHISKER_IQR: f64 = 1.5;
/// Default segmentation threshold of [`peak_summary`], relative to the map maximum.
pub const PEAK_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub std_dev: f64,
    /// `m3 / m2^{3/2}` from biased central moments.
    pub skewness: f64,
    /// `m4 / m2²`, equal to 3 for a Gaussian.
    pub kurtosis: f64,
    pub percentile25: f64,
    pub median: f64,
    pub percentile75: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outlier_indices: Vec<usize>,
    /// Points inside the whiskers.
    pub inlier_count: usize,
    pub normal: bool,
}

impl ResidualReport {
    pub fn outlier_count(&self) -> usize {
        self.outlier_indices.len()
    }

    pub fn inlier_percent(&self) -> f64 {
        100.0 * self.inlier_count as f64 / self.count as f64
    }
}

/// `R = S − K1·F·K2ᵀ`
pub fn fit_residual(kernel: &SeparableKernel, map: ArrayView2<f64>, data: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_len("map rows", kernel.k1.ncols(), map.nrows())?;
    check_len("map columns", kernel.k2.ncols(), map.ncols())?;
    check_len("data rows", kernel.k1.nrows(), data.nrows())?;
    check_len("data columns", kernel.k2.nrows(), data.ncols())?;
    Ok(&data - &kernel.k1.dot(&map).dot(&kernel.k2.t()))
}

/// Linear interpolation between order statistics at rank `p·(n − 1)`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn residual_stats(residual: &[f64]) -> Result<ResidualReport> {
    let n = residual.len();
    if n < 4 {
        return Err(Error::Data(format!(
            "residual statistics need at least 4 points, got {n}"
        )));
    }
    if residual.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("residual contains non-finite values".into()));
    }
    let nf = n as f64;
    let mean = residual.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &r in residual {
        let d = r - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let variance = m2 / (nf - 1.0);
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let (skewness, kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (f64::NAN, f64::NAN)
    };

    let mut sorted = residual.to_vec();
    sorted.sort_by(f64::total_cmp);
    let percentile25 = percentile_sorted(&sorted, 0.25);
    let median = percentile_sorted(&sorted, 0.5);
    let percentile75 = percentile_sorted(&sorted, 0.75);
    let iqr = percentile75 - percentile25;
    let whisker_low = percentile25 - WHISKER_IQR * iqr;
    let whisker_high = percentile75 + WHISKER_IQR * iqr;
    let outlier_indices: Vec<usize> = residual
        .iter()
        .enumerate()
        .filter(|(_, &r)| r < whisker_low || r > whisker_high)
        .map(|(i, _)| i)
        .collect();
    let normal = skewness.abs() < SKEWNESS_LIMIT && kurtosis.abs() < KURTOSIS_LIMIT;

    Ok(ResidualReport {
        count: n,
        mean,
        variance,
        std_dev: variance.sqrt(),
        skewness,
        kurtosis,
        percentile25,
        median,
        percentile75,
        whisker_low,
        whisker_high,
        inlier_count: n - outlier_indices.len(),
        outlier_indices,
        normal,
    })
}

/// Marginals of the clipped map along each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Projections {
    /// Sum over the second axis, one value per first-axis bin.
    pub first: Array1<f64>,
    /// Sum over the first axis, one value per second-axis bin.
    pub second: Array1<f64>,
}

impl Projections {
    /// Total mass, summed from the first-axis projection.
    pub fn mass(&self) -> f64 {
        self.first.sum()
    }
}

fn check_map(map: ArrayView2<f64>, grid1: &RelaxationGrid, grid2: &RelaxationGrid) -> Result<()> {
    check_len("map rows vs first grid", grid1.len(), map.nrows())?;
    check_len("map columns vs second grid", grid2.len(), map.ncols())
}

pub fn project(map: ArrayView2<f64>, grid1: &RelaxationGrid, grid2: &RelaxationGrid) -> Result<Projections> {
    check_map(map, grid1, grid2)?;
    let clipped = map.mapv(|v| v.max(0.0));
    Ok(Projections {
        first: clipped.sum_axis(Axis(1)),
        second: clipped.sum_axis(Axis(0)),
    })
}

/// One connected component of the thresholded map.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakSummary {
    /// Amplitude-weighted geometric mean of the first coordinate.
    pub geometric_mean1: f64,
    pub geometric_mean2: f64,
    /// Share of the summed mass of all components, in percent.
    pub area_percent: f64,
    pub mass: f64,
    pub max_amplitude: f64,
    pub argmax: (usize, usize),
    pub pixels: usize,
}

/// Segments the clipped map into 8-connected components above
/// `relative_threshold · max` and summarizes each, largest mass first.
pub fn peak_summary(
    map: ArrayView2<f64>,
    grid1: &RelaxationGrid,
    grid2: &RelaxationGrid,
    relative_threshold: f64,
) -> Result<Vec<PeakSummary>> {
    check_map(map, grid1, grid2)?;
    let clipped = map.mapv(|v| v.max(0.0));
    let max = clipped.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok(Vec::new());
    }
    let level = relative_threshold * max;
    let (n1, n2) = clipped.dim();
    let mut label = Array2::<usize>::zeros((n1, n2));
    let mut peaks = Vec::new();
    let mut queue = VecDeque::new();

    for start in ndarray::indices((n1, n2)) {
        if clipped[start] <= level || label[start] != 0 {
            continue;
        }
        let id = peaks.len() + 1;
        label[start] = id;
        queue.push_back(start);
        let (mut mass, mut log1, mut log2) = (0.0, 0.0, 0.0);
        let mut best = (0.0, start);
        let mut pixels = 0;
        while let Some((i, j)) = queue.pop_front() {
            let a = clipped[[i, j]];
            mass += a;
            log1 += a * grid1.values()[i].ln();
            log2 += a * grid2.values()[j].ln();
            pixels += 1;
            if a > best.0 {
                best = (a, (i, j));
            }
            for di in -1isize..=1 {
                for dj in -1isize..=1 {
                    let (ni, nj) = (i as isize + di, j as isize + dj);
                    if ni < 0 || nj < 0 || ni >= n1 as isize || nj >= n2 as isize {
                        continue;
                    }
                    let nb = (ni as usize, nj as usize);
                    if clipped[nb] > level && label[nb] == 0 {
                        label[nb] = id;
                        queue.push_back(nb);
                    }
                }
            }
        }
        peaks.push(PeakSummary {
            geometric_mean1: (log1 / mass).exp(),
            geometric_mean2: (log2 / mass).exp(),
            area_percent: 0.0,
            mass,
            max_amplitude: best.0,
            argmax: best.1,
            pixels,
        });
    }
    let total: f64 = peaks.iter().map(|p| p.mass).sum();
    for p in &mut peaks {
        p.area_percent = 100.0 * p.mass / total;
    }
    peaks.sort_by(|a, b| b.mass.total_cmp(&a.mass));
    Ok(peaks)
}

/// Everything derived from a map and its data.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub residual: Array2<f64>,
    /// Statistics over the residual in row-major order.
    pub report: ResidualReport,
    pub projections: Projections,
    pub peaks: Vec<PeakSummary>,
}

pub fn analyze(kernel: &SeparableKernel, map: ArrayView2<f64>, data: ArrayView2<f64>) -> Result<Analysis> {
    let residual = fit_residual(kernel, map, data)?;
    let flat: Vec<f64> = residual.iter().copied().collect();
    Ok(Analysis {
        report: residual_stats(&flat)?,
        projections: project(map, &kernel.grid1, &kernel.grid2)?,
        peaks: peak_summary(map, &kernel.grid1, &kernel.grid2, PEAK_THRESHOLD)?,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::make_log_grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn grids(n1: usize, n2: usize) -> (RelaxationGrid, RelaxationGrid) {
        (make_log_grid(1.0, 1e4, n1).unwrap(), make_log_grid(0.1, 1e3, n2).unwrap())
    }

    fn blob(n1: usize, n2: usize, c: (f64, f64), w: f64) -> Array2<f64> {
        Array2::from_shape_fn((n1, n2), |(i, j)| {
            let a = (i as f64 - c.0) / w;
            let b = (j as f64 - c.1) / w;
            (-0.5 * (a * a + b * b)).exp()
        })
    }

    #[test]
    fn gaussian_sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let r: Vec<f64> = (0..200_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let rep = residual_stats(&r).unwrap();
        assert!(rep.skewness.abs() < 0.05);
        assert!((rep.kurtosis - 3.0).abs() < 0.1);
        assert!(rep.normal);
        assert!(rep.percentile25 <= rep.median && rep.median <= rep.percentile75);
        assert_eq!(rep.inlier_count + rep.outlier_count(), r.len());
        // about 0.7% of a normal sample lies beyond the 1.5 IQR whiskers
        assert!((rep.inlier_percent() - 99.3).abs() < 0.2);
    }

    #[test]
    fn single_spike_fails_normality() {
        let mut r = vec![0.0; 100];
        r[37] = 1e3;
        let rep = residual_stats(&r).unwrap();
        assert!(rep.kurtosis > KURTOSIS_LIMIT);
        assert!(!rep.normal);
        assert_eq!(rep.outlier_indices, vec![37]);
    }

    #[test]
    fn too_few_points() {
        assert!(residual_stats(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn percentiles_interpolate() {
        let rep = residual_stats(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!(rep.median, 3.0);
        assert_eq!(rep.percentile25, 2.0);
        assert_eq!(rep.percentile75, 4.0);
        let rep = residual_stats(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(rep.median, 2.5);
        assert_eq!(rep.percentile25, 1.75);
    }

    #[test]
    fn spike_projections() {
        let (g1, g2) = grids(6, 5);
        let mut map = Array2::zeros((6, 5));
        map[[4, 1]] = 2.0;
        let p = project(map.view(), &g1, &g2).unwrap();
        assert_eq!(p.first.to_vec(), vec![0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        assert_eq!(p.second.to_vec(), vec![0.0, 2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn projections_conserve_mass_and_clip() {
        let (g1, g2) = grids(7, 9);
        let map = Array2::from_shape_fn((7, 9), |(i, j)| ((i * 3 + j) % 5) as f64 - 1.0);
        let p = project(map.view(), &g1, &g2).unwrap();
        let clipped_mass: f64 = map.iter().map(|v| v.max(0.0)).sum();
        assert!((p.first.sum() - p.second.sum()).abs() < 1e-12);
        assert!((p.mass() - clipped_mass).abs() < 1e-12);
        assert!(p.first.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn single_blob_summary() {
        let (g1, g2) = grids(40, 30);
        let map = blob(40, 30, (20.0, 12.0), 2.0);
        let peaks = peak_summary(map.view(), &g1, &g2, PEAK_THRESHOLD).unwrap();
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].area_percent - 100.0).abs() < 1e-12);
        assert!((g1.log_position(peaks[0].geometric_mean1) - 20.0).abs() < 1.0);
        assert!((g2.log_position(peaks[0].geometric_mean2) - 12.0).abs() < 1.0);
        assert_eq!(peaks[0].argmax, (20, 12));
    }

    #[test]
    fn two_equal_blobs_split_evenly() {
        let (g1, g2) = grids(40, 40);
        let map = blob(40, 40, (10.0, 10.0), 1.5) + blob(40, 40, (30.0, 30.0), 1.5);
        let peaks = peak_summary(map.view(), &g1, &g2, PEAK_THRESHOLD).unwrap();
        assert_eq!(peaks.len(), 2);
        for p in &peaks {
            assert!((p.area_percent - 50.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_map_has_no_peaks() {
        let (g1, g2) = grids(5, 5);
        let map = Array2::from_elem((5, 5), -1.0);
        assert!(peak_summary(map.view(), &g1, &g2, PEAK_THRESHOLD).unwrap().is_empty());
    }
}
