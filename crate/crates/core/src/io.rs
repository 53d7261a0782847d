//! Input folders and output files.
//!
//! An input folder holds three keyword files and three ASCII data files:
//!
//! ```text
//! FileSetInput.par   Filenamedata, filenameTimeX, filenameTimeY, nx, ny
//! FileFlag.par       FL_typeKernel, FL_InversionTimeLimits (lo1 hi1 lo2 hi2)
//! FilePar.par        solver parameters, every key optional
//! ```
//!
//! Keyword files hold one `keyword value...` entry per line; an optional `=`
//! after the keyword is accepted and `#` starts a comment. Data files are
//! whitespace (or comma) separated decimal numbers.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::diagnostics::{Analysis, PeakSummary, ResidualReport};
use crate::error::{Error, Result};
use crate::inversion::{InversionConfig, InversionResult};
use crate::kernels::{make_log_grid, AcquisitionTimes, KernelKind, RelaxationGrid, SeparableKernel};
use crate::regularizer::UpenCoefficients;

pub const SET_INPUT_FILE: &str = "FileSetInput.par";
pub const FLAG_FILE: &str = "FileFlag.par";
pub const PAR_FILE: &str = "FilePar.par";
pub const PARAMETERS_FILE: &str = "Parameters.txt";
/// Signed map at 6 significant digits.
pub const MAP_FILE: &str = "map.dat";
/// Signed map at full precision, read back by `stats`.
pub const MAP_FULL_FILE: &str = "map_full.dat";

/// Everything read from the three keyword files.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub data_file: String,
    pub time1_file: String,
    pub time2_file: String,
    pub nx: usize,
    pub ny: usize,
    pub kind: KernelKind,
    pub limits1: (f64, f64),
    pub limits2: (f64, f64),
    pub inversion: InversionConfig,
    /// Unknown keywords, kept for reporting.
    pub warnings: Vec<String>,
}

impl ParsedConfig {
    pub fn grids(&self) -> Result<(RelaxationGrid, RelaxationGrid)> {
        Ok((
            make_log_grid(self.limits1.0, self.limits1.1, self.nx)?,
            make_log_grid(self.limits2.0, self.limits2.1, self.ny)?,
        ))
    }

    fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::Config(format!(
                "nx and ny must be at least 2, got {} and {}",
                self.nx, self.ny
            )));
        }
        for (lo, hi) in [self.limits1, self.limits2] {
            if !(lo > 0.0 && hi > lo) {
                return Err(Error::Config(format!(
                    "inversion time limits must be positive and increasing, got [{lo}, {hi}]"
                )));
            }
        }
        self.inversion.validate()
    }
}

/// A loaded input folder.
#[derive(Debug, Clone)]
pub struct InputData {
    pub config: ParsedConfig,
    pub times: AcquisitionTimes,
    pub data: Array2<f64>,
}

struct Entry {
    values: Vec<String>,
    line: usize,
}

struct KeywordFile {
    path: PathBuf,
    entries: HashMap<String, Entry>,
}

fn read_text(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile { path: path.into() });
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.into(),
        line,
        message: message.into(),
    }
}

impl KeywordFile {
    fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut entries = HashMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let mut tokens = strip_comment(raw).split_whitespace();
            let Some(key) = tokens.next() else { continue };
            let (key, rest) = match key.split_once('=') {
                Some((key, v)) => (key, Some(v)),
                None => (key, None),
            };
            let mut values: Vec<String> = rest.into_iter().filter(|v| !v.is_empty()).map(String::from).collect();
            values.extend(tokens.filter(|t| *t != "=").map(String::from));
            if values.is_empty() {
                return Err(parse_error(path, line, format!("keyword '{key}' has no value")));
            }
            if let Some(first) = entries.insert(key.to_string(), Entry { values, line }) {
                return Err(parse_error(
                    path,
                    line,
                    format!("keyword '{key}' repeats the one on line {}", first.line),
                ));
            }
        }
        Ok(Self {
            path: path.into(),
            entries,
        })
    }

    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn required(&mut self, key: &str) -> Result<Entry> {
        self.take(key).ok_or_else(|| {
            Error::Config(format!("{}: missing mandatory keyword '{key}'", self.path.display()))
        })
    }

    fn single(&self, entry: &Entry, key: &str) -> Result<String> {
        match entry.values.as_slice() {
            [v] => Ok(v.clone()),
            _ => Err(parse_error(&self.path, entry.line, format!("'{key}' expects one value"))),
        }
    }

    fn number(&self, entry: &Entry, token: &str) -> Result<f64> {
        parse_number(token).ok_or_else(|| {
            parse_error(&self.path, entry.line, format!("'{token}' is not a finite number"))
        })
    }

    fn float(&mut self, key: &str, target: &mut f64) -> Result<()> {
        if let Some(entry) = self.take(key) {
            let v = self.single(&entry, key)?;
            *target = self.number(&entry, &v)?;
        }
        Ok(())
    }

    fn count(&self, entry: &Entry, key: &str) -> Result<usize> {
        let v = self.single(entry, key)?;
        // MATLAB-written files sometimes carry integers as "80.0" or "1e5".
        let x = self.number(entry, &v)?;
        if x < 0.0 || x.fract() != 0.0 || x > usize::MAX as f64 {
            return Err(parse_error(&self.path, entry.line, format!("'{key}' must be a non-negative integer")));
        }
        Ok(x as usize)
    }

    fn integer(&mut self, key: &str, target: &mut usize) -> Result<()> {
        if let Some(entry) = self.take(key) {
            *target = self.count(&entry, key)?;
        }
        Ok(())
    }

    /// Reports whatever was not consumed.
    fn leftovers(self, warnings: &mut Vec<String>) {
        let mut rest: Vec<_> = self.entries.into_iter().collect();
        rest.sort_by_key(|(_, e)| e.line);
        for (key, entry) in rest {
            let msg = format!("{}:{}: unknown keyword '{key}' ignored", self.path.display(), entry.line);
            warn!("{msg}");
            warnings.push(msg);
        }
    }
}

fn parse_number(token: &str) -> Option<f64> {
    token.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads the three keyword files of `folder`.
pub fn load_config(folder: &Path) -> Result<ParsedConfig> {
    let mut set = KeywordFile::read(&folder.join(SET_INPUT_FILE))?;
    let mut flag = KeywordFile::read(&folder.join(FLAG_FILE))?;
    let mut par = KeywordFile::read(&folder.join(PAR_FILE))?;

    let e = set.required("Filenamedata")?;
    let data_file = set.single(&e, "Filenamedata")?;
    let e = set.required("filenameTimeX")?;
    let time1_file = set.single(&e, "filenameTimeX")?;
    let e = set.required("filenameTimeY")?;
    let time2_file = set.single(&e, "filenameTimeY")?;
    let e = set.required("nx")?;
    let nx = set.count(&e, "nx")?;
    let e = set.required("ny")?;
    let ny = set.count(&e, "ny")?;

    let e = flag.required("FL_typeKernel")?;
    let name = flag.single(&e, "FL_typeKernel")?;
    let kind: KernelKind = name
        .parse()
        .map_err(|err: Error| parse_error(&flag.path, e.line, err.to_string()))?;
    let e = flag.required("FL_InversionTimeLimits")?;
    if e.values.len() != 4 {
        return Err(parse_error(
            &flag.path,
            e.line,
            format!("FL_InversionTimeLimits expects 4 values, got {}", e.values.len()),
        ));
    }
    let mut limits = [0.0; 4];
    for (slot, token) in limits.iter_mut().zip(&e.values) {
        *slot = flag.number(&e, token)?;
    }

    let mut inv = InversionConfig::default();
    let mut beta = UpenCoefficients::default();
    par.float("par.upen.tol", &mut inv.outer_tol)?;
    par.integer("par.upen.iter", &mut inv.max_outer)?;
    par.float("par.fista.tol", &mut inv.fista.tol)?;
    par.integer("par.fista.iter", &mut inv.fista.max_iter)?;
    par.float("par.gpnnls.tol", &mut inv.gp_tol)?;
    par.integer("par.gpnnls.iter", &mut inv.gp_max_iter)?;
    par.float("par.upen.beta0", &mut beta.beta0)?;
    par.float("par.upen.betap", &mut beta.betap)?;
    par.float("par.upen.betac", &mut beta.betac)?;
    par.float("par.fista.weight", &mut inv.weight)?;
    par.float("par.svd.threshold", &mut inv.svd_threshold)?;
    inv.coefficients = beta;

    let mut warnings = Vec::new();
    set.leftovers(&mut warnings);
    flag.leftovers(&mut warnings);
    par.leftovers(&mut warnings);

    let config = ParsedConfig {
        data_file,
        time1_file,
        time2_file,
        nx,
        ny,
        kind,
        limits1: (limits[0], limits[1]),
        limits2: (limits[2], limits[3]),
        inversion: inv,
        warnings,
    };
    config.validate()?;
    Ok(config)
}

/// Reads a whitespace- or comma-separated numeric matrix, one row per line.
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let text = read_text(path)?;
    let mut values = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for (k, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let before = values.len();
        for token in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let v = parse_number(token)
                .ok_or_else(|| parse_error(path, k + 1, format!("'{token}' is not a finite number")))?;
            values.push(v);
        }
        let width = values.len() - before;
        match ncols {
            None => ncols = Some(width),
            Some(n) if n != width => {
                return Err(parse_error(path, k + 1, format!("row has {width} values, expected {n}")));
            }
            _ => {}
        }
        nrows += 1;
    }
    let ncols = ncols.ok_or_else(|| Error::Data(format!("{} contains no numbers", path.display())))?;
    Ok(Array2::from_shape_vec((nrows, ncols), values).expect("row widths checked"))
}

/// Reads a numeric vector; a single column or a single row both work.
pub fn read_vector(path: &Path) -> Result<Array1<f64>> {
    let m = read_matrix(path)?;
    if m.nrows() != 1 && m.ncols() != 1 {
        return Err(Error::Data(format!(
            "{} should hold a single column, found {}x{}",
            path.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(Array1::from_iter(m.iter().copied()))
}

/// Reads a complete input folder and checks the data against the time axes.
pub fn load_input(folder: &Path) -> Result<InputData> {
    if !folder.is_dir() {
        return Err(Error::MissingFile { path: folder.into() });
    }
    let config = load_config(folder)?;
    let t1 = read_vector(&folder.join(&config.time1_file))?;
    let t2 = read_vector(&folder.join(&config.time2_file))?;
    let data_path = folder.join(&config.data_file);
    let data = read_matrix(&data_path)?;
    if data.dim() != (t1.len(), t2.len()) {
        return Err(Error::Data(format!(
            "{} is {}x{} but the time files give {}x{}",
            data_path.display(),
            data.nrows(),
            data.ncols(),
            t1.len(),
            t2.len()
        )));
    }
    let times = AcquisitionTimes::new(t1.to_vec(), t2.to_vec())?;
    Ok(InputData { config, times, data })
}

/// Number formatting for written matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    /// Six significant digits.
    Display,
    /// Shortest representation that reads back to the same bits.
    Full,
}

fn push_number(out: &mut String, v: f64, precision: Precision) {
    match precision {
        Precision::Display => write!(out, "{v:.5e}"),
        Precision::Full => write!(out, "{v:e}"),
    }
    .expect("writing to a String");
}

pub fn format_matrix(m: ArrayView2<f64>, precision: Precision) -> String {
    let mut out = String::new();
    for row in m.rows() {
        for (j, &v) in row.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            push_number(&mut out, v, precision);
        }
        out.push('\n');
    }
    out
}

pub fn format_vector(v: ArrayView1<f64>, precision: Precision) -> String {
    let mut out = String::new();
    for &x in v {
        push_number(&mut out, x, precision);
        out.push('\n');
    }
    out
}

/// Writes through a temporary file in the same directory, so a failed write
/// never leaves a truncated file behind.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// The three keyword files for `config`, in the grammar [`load_config`] reads.
pub fn format_keyword_files(config: &ParsedConfig) -> [(&'static str, String); 3] {
    let inv = &config.inversion;
    let set = format!(
        "# data and time axis files, relaxation bins per axis\n\
         Filenamedata {}\nfilenameTimeX {}\nfilenameTimeY {}\nnx {}\nny {}\n",
        config.data_file, config.time1_file, config.time2_file, config.nx, config.ny
    );
    let flag = format!(
        "# kernel: IR-CPMG, SR-CPMG, CPMG-CPMG or D-CPMG\n\
         FL_typeKernel {}\n\
         # lower and upper limit along the first axis, then the second\n\
         FL_InversionTimeLimits {:e} {:e} {:e} {:e}\n",
        config.kind, config.limits1.0, config.limits1.1, config.limits2.0, config.limits2.1
    );
    let par = format!(
        "par.upen.tol {:e}\npar.upen.iter {}\n\
         par.fista.tol {:e}\npar.fista.iter {}\n\
         par.gpnnls.tol {:e}\npar.gpnnls.iter {}\n\
         # sample dependent, tune per dataset\n\
         par.upen.beta0 {:e}\npar.upen.betap {:e}\npar.upen.betac {:e}\n\
         # in [0, 1]: omega1 = 1 - w, omega2 = w; otherwise both 1\n\
         par.fista.weight {:e}\n\
         par.svd.threshold {:e}\n",
        inv.outer_tol,
        inv.max_outer,
        inv.fista.tol,
        inv.fista.max_iter,
        inv.gp_tol,
        inv.gp_max_iter,
        inv.coefficients.beta0,
        inv.coefficients.betap,
        inv.coefficients.betac,
        inv.weight,
        inv.svd_threshold
    );
    [(SET_INPUT_FILE, set), (FLAG_FILE, flag), (PAR_FILE, par)]
}

/// Writes a complete input folder that [`load_input`] reads back exactly.
pub fn write_input(folder: &Path, config: &ParsedConfig, times: &AcquisitionTimes, data: ArrayView2<f64>) -> Result<()> {
    if data.dim() != times.shape() {
        return Err(Error::Data(format!(
            "data are {}x{} but the time axes give {}x{}",
            data.nrows(),
            data.ncols(),
            times.t1().len(),
            times.t2().len()
        )));
    }
    create_dir(folder)?;
    for (name, text) in format_keyword_files(config) {
        write_atomic(&folder.join(name), &text)?;
    }
    write_atomic(
        &folder.join(&config.time1_file),
        &format_vector(ArrayView1::from(times.t1()), Precision::Full),
    )?;
    write_atomic(
        &folder.join(&config.time2_file),
        &format_vector(ArrayView1::from(times.t2()), Precision::Full),
    )?;
    write_atomic(&folder.join(&config.data_file), &format_matrix(data, Precision::Full))
}

/// C-style `%.{digits}E`, e.g. `2.5421E-03`.
pub fn format_sci(v: f64, digits: usize) -> String {
    pad_exponent(&format!("{v:.digits$E}"))
}

/// Shortest `E` notation with a two-digit exponent, e.g. `1E-16`.
fn format_sci_short(v: f64) -> String {
    pad_exponent(&format!("{v:E}"))
}

fn pad_exponent(s: &str) -> String {
    match s.split_once('E') {
        Some((mantissa, exp)) => {
            let (sign, digits) = match exp.strip_prefix('-') {
                Some(d) => ('-', d),
                None => ('+', exp),
            };
            format!("{mantissa}E{sign}{digits:0>2}")
        }
        None => s.to_string(),
    }
}

/// Text of `Parameters.txt`. `overrides` are `(flag, value)` pairs from the
/// command line, echoed so the run can be reconstructed.
pub fn format_parameters(
    config: &ParsedConfig,
    data_shape: (usize, usize),
    result: &InversionResult,
    overrides: &[(String, String)],
) -> String {
    let inv = &config.inversion;
    let rule = "-".repeat(69);
    let mut s = String::new();
    let mut line = |text: String| {
        s.push_str(&text);
        s.push('\n');
    };
    line(rule.clone());
    line("MUpen2D Input Parameters ".into());
    line(format!(" MUpen2D tol = {},", format_sci(inv.outer_tol, 6)));
    line(format!(" Projected Gradient Tol = {} ", format_sci(inv.gp_tol, 6)));
    line(format!(" FISTA tol = {} ", format_sci(inv.fista.tol, 6)));
    line(format!(" SVD Threshold = {} ", format_sci_short(inv.svd_threshold)));
    line(format!(" Kernel = {} ", config.kind));
    line(format!(
        " Beta0 = {}, Betap = {}, Betac = {} ",
        format_sci(inv.coefficients.beta0, 6),
        format_sci(inv.coefficients.betap, 6),
        format_sci(inv.coefficients.betac, 6)
    ));
    line(format!(
        " Weight = {} (omega1 = {}, omega2 = {}) ",
        inv.weight, result.weights.omega1, result.weights.omega2
    ));
    line(format!(" Data size = {} x {}  ", data_shape.0, data_shape.1));
    if !overrides.is_empty() {
        let echoed: Vec<String> = overrides.iter().map(|(k, v)| format!("{k} {v}")).collect();
        line(format!(" Command line overrides: {} ", echoed.join(" ")));
    }
    line(rule.clone());
    line(format!(
        "Number of Inversion channels:  horizontal {}, vertical  {} ",
        config.nx, config.ny
    ));
    line(format!("Final Relative Residual Norm = {} ", format_sci(result.relative_residual, 4)));
    line(format!("Total MUpen2D Iterations = {}", result.outer_iterations));
    line(format!("Total FISTA Iterations = {} ", result.total_fista_iterations));
    line(format!("Computation Time = {:.5} s", result.seconds));
    line(rule);
    for w in &result.warnings {
        line(format!("Warning: {w}"));
    }
    s
}

pub fn format_residual_report(report: &ResidualReport) -> String {
    let mut s = String::new();
    let mut kv = |key: &str, value: String| {
        writeln!(s, "{key} = {value}").expect("writing to a String");
    };
    kv("count", report.count.to_string());
    kv("mean", format!("{:e}", report.mean));
    kv("variance", format!("{:e}", report.variance));
    kv("std_dev", format!("{:e}", report.std_dev));
    kv("skewness", format!("{:e}", report.skewness));
    kv("kurtosis", format!("{:e}", report.kurtosis));
    kv("percentile25", format!("{:e}", report.percentile25));
    kv("median", format!("{:e}", report.median));
    kv("percentile75", format!("{:e}", report.percentile75));
    kv("whisker_low", format!("{:e}", report.whisker_low));
    kv("whisker_high", format!("{:e}", report.whisker_high));
    kv("inliers", report.inlier_count.to_string());
    kv("inlier_percent", format!("{:e}", report.inlier_percent()));
    kv("outliers", report.outlier_count().to_string());
    kv("normal", report.normal.to_string());
    s
}

pub fn format_peaks(peaks: &[PeakSummary], labels: (&str, &str)) -> String {
    let mut s = format!("# peak  {}_gm  {}_gm  area_percent  max_amplitude\n", labels.0, labels.1);
    for (k, p) in peaks.iter().enumerate() {
        writeln!(
            s,
            "{} {:.6e} {:.6e} {:.4} {:.6e}",
            k + 1,
            p.geometric_mean1,
            p.geometric_mean2,
            p.area_percent,
            p.max_amplitude
        )
        .expect("writing to a String");
    }
    s
}

fn format_projection(grid: &RelaxationGrid, values: ArrayView1<f64>) -> String {
    let mut s = String::new();
    for (t, v) in grid.values().iter().zip(values) {
        writeln!(s, "{t:e} {v:.5e}").expect("writing to a String");
    }
    s
}

/// Diagnostics shared by the `invert` and `stats` paths.
pub struct Diagnostics<'a> {
    pub kernel: &'a SeparableKernel,
    pub map: ArrayView2<'a, f64>,
    pub analysis: &'a Analysis,
}

/// Writes statistics, peaks, projections and all plots into `out_dir`.
pub fn write_diagnostics(out_dir: &Path, d: &Diagnostics<'_>) -> Result<()> {
    create_dir(out_dir)?;
    let a = d.analysis;
    write_atomic(&out_dir.join("residual_stats.txt"), &format_residual_report(&a.report))?;
    write_atomic(
        &out_dir.join("peaks.txt"),
        &format_peaks(&a.peaks, d.kernel.kind.axis_labels()),
    )?;
    write_atomic(
        &out_dir.join("projection1.dat"),
        &format_projection(&d.kernel.grid1, a.projections.first.view()),
    )?;
    write_atomic(
        &out_dir.join("projection2.dat"),
        &format_projection(&d.kernel.grid2, a.projections.second.view()),
    )?;
    crate::plot::write_all(out_dir, d)
}

/// Writes the map files, grids, `Parameters.txt` and the diagnostics.
pub fn write_outputs(
    out_dir: &Path,
    config: &ParsedConfig,
    data_shape: (usize, usize),
    result: &InversionResult,
    diagnostics: &Diagnostics<'_>,
    overrides: &[(String, String)],
) -> Result<()> {
    create_dir(out_dir)?;
    write_atomic(&out_dir.join(MAP_FILE), &format_matrix(result.map.view(), Precision::Display))?;
    write_atomic(&out_dir.join(MAP_FULL_FILE), &format_matrix(result.map.view(), Precision::Full))?;
    write_atomic(
        &out_dir.join("grid1.dat"),
        &format_vector(ArrayView1::from(diagnostics.kernel.grid1.values()), Precision::Full),
    )?;
    write_atomic(
        &out_dir.join("grid2.dat"),
        &format_vector(ArrayView1::from(diagnostics.kernel.grid2.values()), Precision::Full),
    )?;
    write_diagnostics(out_dir, diagnostics)?;
    write_atomic(
        &out_dir.join(PARAMETERS_FILE),
        &format_parameters(config, data_shape, result, overrides),
    )
}
