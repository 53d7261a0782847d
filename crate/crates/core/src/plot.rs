//! SVG figures: map heatmap and contours, projections, residual histogram
//! and box plot.

use std::path::Path;

use ndarray::ArrayView2;
use plotters::prelude::*;

use crate::diagnostics::ResidualReport;
use crate::error::{Error, Result};
use crate::io::{write_atomic, Diagnostics};
use crate::kernels::RelaxationGrid;

const SIZE: (u32, u32) = (720, 600);
/// Contour levels as fractions of the map maximum.
pub const CONTOUR_LEVELS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
const HISTOGRAM_BINS: usize = 80;

type Chart<'a, 'b> = ChartContext<
    'a,
    SVGBackend<'b>,
    Cartesian2d<LogCoord<f64>, LogCoord<f64>>,
>;

fn render<F>(path: &Path, draw: F) -> Result<()>
where
    F: FnOnce(&DrawingArea<SVGBackend<'_>, plotters::coord::Shift>) -> std::result::Result<(), String>,
{
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        let fail = |message: String| Error::Plot {
            path: path.into(),
            message,
        };
        root.fill(&WHITE).map_err(|e| fail(e.to_string()))?;
        draw(&root).map_err(fail)?;
        root.present().map_err(|e| fail(e.to_string()))?;
    }
    write_atomic(path, &svg)
}

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Bin edges halfway between grid points in log space.
fn log_edges(grid: &RelaxationGrid) -> Vec<f64> {
    let v = grid.values();
    let half = 0.5 * grid.log_step();
    let mut edges: Vec<f64> = v.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
    edges.insert(0, (v[0].ln() - half).exp());
    edges.push((v[v.len() - 1].ln() + half).exp());
    edges
}

fn map_chart<'a, 'b>(
    root: &'a DrawingArea<SVGBackend<'b>, plotters::coord::Shift>,
    grid1: &RelaxationGrid,
    grid2: &RelaxationGrid,
    labels: (&str, &str),
    title: &str,
) -> std::result::Result<Chart<'a, 'b>, String> {
    let e1 = log_edges(grid1);
    let e2 = log_edges(grid2);
    let mut chart = ChartBuilder::on(root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(48)
        .y_label_area_size(64)
        .build_cartesian_2d(
            (e2[0]..e2[e2.len() - 1]).log_scale(),
            (e1[0]..e1[e1.len() - 1]).log_scale(),
        )
        .map_err(s)?;
    chart
        .configure_mesh()
        .x_desc(format!("{} (ms)", labels.1))
        .y_desc(format!("{} (ms)", labels.0))
        .disable_mesh()
        .draw()
        .map_err(s)?;
    Ok(chart)
}

pub fn heatmap(
    path: &Path,
    map: ArrayView2<f64>,
    grid1: &RelaxationGrid,
    grid2: &RelaxationGrid,
    labels: (&str, &str),
) -> Result<()> {
    render(path, |root| {
        let mut chart = map_chart(root, grid1, grid2, labels, "Relaxation map")?;
        let e1 = log_edges(grid1);
        let e2 = log_edges(grid2);
        let max = map.iter().copied().fold(0.0, f64::max);
        let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
        chart
            .draw_series(ndarray::indices(map.dim()).into_iter().map(|(i, j)| {
                let h = (map[(i, j)].max(0.0) * scale) as f32;
                let colour = ViridisRGB.get_color(h);
                Rectangle::new([(e2[j], e1[i]), (e2[j + 1], e1[i + 1])], colour.filled())
            }))
            .map_err(s)?;
        Ok(())
    })
}

/// Segments of the `level` iso-line, in `(second axis, first axis)`
/// coordinates, by marching squares on the log-spaced grid.
pub fn contour_segments(
    map: ArrayView2<f64>,
    grid1: &RelaxationGrid,
    grid2: &RelaxationGrid,
    level: f64,
) -> Vec<[(f64, f64); 2]> {
    let (n1, n2) = map.dim();
    let x: Vec<f64> = grid2.values().iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = grid1.values().iter().map(|v| v.ln()).collect();
    let mut out = Vec::new();
    if n1 < 2 || n2 < 2 {
        return out;
    }
    for i in 0..n1 - 1 {
        for j in 0..n2 - 1 {
            // Corners counter-clockwise from (i, j).
            let corners = [(i, j), (i, j + 1), (i + 1, j + 1), (i + 1, j)];
            let vals = corners.map(|c| map[c]);
            let mut crossings = Vec::with_capacity(4);
            for k in 0..4 {
                let (a, b) = (vals[k], vals[(k + 1) % 4]);
                if (a > level) != (b > level) {
                    let t = (level - a) / (b - a);
                    let (ca, cb) = (corners[k], corners[(k + 1) % 4]);
                    let px = x[ca.1] + t * (x[cb.1] - x[ca.1]);
                    let py = y[ca.0] + t * (y[cb.0] - y[ca.0]);
                    crossings.push((px.exp(), py.exp()));
                }
            }
            match crossings.len() {
                2 => out.push([crossings[0], crossings[1]]),
                4 => {
                    // Saddle: pair edges according to the cell centre value.
                    let centre = vals.iter().sum::<f64>() / 4.0;
                    if (centre > level) == (vals[0] > level) {
                        out.push([crossings[0], crossings[3]]);
                        out.push([crossings[1], crossings[2]]);
                    } else {
                        out.push([crossings[0], crossings[1]]);
                        out.push([crossings[2], crossings[3]]);
                    }
                }
                _ => {}
            }
        }
    }
    out
}

pub fn contour(
    path: &Path,
    map: ArrayView2<f64>,
    grid1: &RelaxationGrid,
    grid2: &RelaxationGrid,
    labels: (&str, &str),
) -> Result<()> {
    render(path, |root| {
        let mut chart = map_chart(root, grid1, grid2, labels, "Contour map")?;
        let max = map.iter().copied().fold(0.0, f64::max);
        if max <= 0.0 {
            return Ok(());
        }
        for (k, frac) in CONTOUR_LEVELS.iter().enumerate() {
            let colour = ViridisRGB.get_color(k as f32 / (CONTOUR_LEVELS.len() - 1) as f32);
            let segments = contour_segments(map, grid1, grid2, frac * max);
            chart
                .draw_series(segments.into_iter().map(|seg| PathElement::new(seg.to_vec(), colour.stroke_width(2))))
                .map_err(s)?;
        }
        Ok(())
    })
}

pub fn projection(path: &Path, grid: &RelaxationGrid, values: &[f64], label: &str) -> Result<()> {
    render(path, |root| {
        let top = values.iter().copied().fold(0.0, f64::max);
        let top = if top > 0.0 { 1.05 * top } else { 1.0 };
        let mut chart = ChartBuilder::on(root)
            .caption(format!("{label} projection"), ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(48)
            .y_label_area_size(72)
            .build_cartesian_2d((grid.lo()..grid.hi()).log_scale(), 0.0..top)
            .map_err(s)?;
        chart
            .configure_mesh()
            .x_desc(format!("{label} (ms)"))
            .y_desc("amplitude")
            .draw()
            .map_err(s)?;
        chart
            .draw_series(LineSeries::new(
                grid.values().iter().copied().zip(values.iter().copied()),
                BLUE.stroke_width(2),
            ))
            .map_err(s)?;
        Ok(())
    })
}

pub fn residual_histogram(path: &Path, residual: &[f64], report: &ResidualReport) -> Result<()> {
    render(path, |root| {
        let lo = residual.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = residual.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
        let width = (hi - lo) / HISTOGRAM_BINS as f64;
        let mut counts = vec![0usize; HISTOGRAM_BINS];
        for &r in residual {
            let b = (((r - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
            counts[b] += 1;
        }
        let density = |c: usize| c as f64 / (residual.len() as f64 * width);
        let sd = report.std_dev;
        let normal = |x: f64| {
            let z = (x - report.mean) / sd;
            (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
        };
        let peak_bar = counts.iter().map(|&c| density(c)).fold(0.0, f64::max);
        let peak_fit = if sd > 0.0 { normal(report.mean) } else { 0.0 };
        let top = 1.05 * peak_bar.max(peak_fit).max(f64::MIN_POSITIVE);

        let mut chart = ChartBuilder::on(root)
            .caption("Residual histogram", ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(48)
            .y_label_area_size(72)
            .build_cartesian_2d(lo..hi, 0.0..top)
            .map_err(s)?;
        chart
            .configure_mesh()
            .x_desc("residual")
            .y_desc("density")
            .draw()
            .map_err(s)?;
        chart
            .draw_series(counts.iter().enumerate().map(|(b, &c)| {
                let x0 = lo + b as f64 * width;
                Rectangle::new([(x0, 0.0), (x0 + width, density(c))], BLUE.mix(0.5).filled())
            }))
            .map_err(s)?;
        if sd > 0.0 {
            let steps = 400;
            chart
                .draw_series(LineSeries::new(
                    (0..=steps).map(|k| {
                        let x = lo + (hi - lo) * k as f64 / steps as f64;
                        (x, normal(x))
                    }),
                    RED.stroke_width(2),
                ))
                .map_err(s)?;
        }
        Ok(())
    })
}

pub fn residual_boxplot(path: &Path, residual: &[f64], report: &ResidualReport) -> Result<()> {
    render(path, |root| {
        // Whiskers end at the most extreme points inside the fences.
        let inside = residual
            .iter()
            .copied()
            .filter(|r| (report.whisker_low..=report.whisker_high).contains(r));
        let (wlo, whi) = inside.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r), b.max(r)));
        let lo = residual.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = residual.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = 0.05 * (hi - lo).max(f64::MIN_POSITIVE);

        let mut chart = ChartBuilder::on(root)
            .caption("Residual box plot", ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(24)
            .y_label_area_size(72)
            .build_cartesian_2d(0.0..2.0, (lo - pad)..(hi + pad))
            .map_err(s)?;
        chart
            .configure_mesh()
            .disable_x_mesh()
            .x_labels(0)
            .y_desc("residual")
            .draw()
            .map_err(s)?;
        let boxed = [(0.7, report.percentile25), (1.3, report.percentile75)];
        chart.draw_series([Rectangle::new(boxed, BLUE.stroke_width(2))]).map_err(s)?;
        let lines = [
            vec![(0.7, report.median), (1.3, report.median)],
            vec![(1.0, report.percentile75), (1.0, whi)],
            vec![(1.0, report.percentile25), (1.0, wlo)],
            vec![(0.85, whi), (1.15, whi)],
            vec![(0.85, wlo), (1.15, wlo)],
        ];
        chart
            .draw_series(lines.into_iter().enumerate().map(|(k, pts)| {
                let colour = if k == 0 { RED } else { BLACK };
                PathElement::new(pts, colour.stroke_width(2))
            }))
            .map_err(s)?;
        chart
            .draw_series(report.outlier_indices.iter().map(|&i| Cross::new((1.0, residual[i]), 3, RED)))
            .map_err(s)?;
        Ok(())
    })
}

/// All figures for one run.
pub fn write_all(out_dir: &Path, d: &Diagnostics<'_>) -> Result<()> {
    let (k, a) = (d.kernel, d.analysis);
    let labels = k.kind.axis_labels();
    let display = d.map.mapv(|v| v.max(0.0));
    heatmap(&out_dir.join("map.svg"), display.view(), &k.grid1, &k.grid2, labels)?;
    contour(&out_dir.join("contour.svg"), display.view(), &k.grid1, &k.grid2, labels)?;
    projection(
        &out_dir.join("projection1.svg"),
        &k.grid1,
        &a.projections.first.to_vec(),
        labels.0,
    )?;
    projection(
        &out_dir.join("projection2.svg"),
        &k.grid2,
        &a.projections.second.to_vec(),
        labels.1,
    )?;
    // Same order as the statistics, so outlier indices line up.
    let residual: Vec<f64> = a.residual.iter().copied().collect();
    residual_histogram(&out_dir.join("residual_histogram.svg"), &residual, &a.report)?;
    residual_boxplot(&out_dir.join("residual_boxplot.svg"), &residual, &a.report)
}
