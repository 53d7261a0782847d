use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn, LevelFilter};
use nmr2d::io::{self, Diagnostics, InputData, MAP_FULL_FILE};
use nmr2d::synth::{self, SyntheticSpec};
use nmr2d::{analyze, build_kernel_pair, invert, Analysis, Error, ErrorCategory, SeparableKernel};

#[derive(Parser)]
#[command(name = "nmr2d", version, about = "Multipenalty inversion of 2D NMR relaxation data")]
struct Cli {
    /// Only print warnings and errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    /// Also print solver details.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Invert the data in an input folder and write the results.
    Invert(InvertArgs),
    /// Generate the two-peak IR-CPMG test case as an input folder.
    Synth(SynthArgs),
    /// Recompute diagnostics from a saved map.
    Stats(StatsArgs),
}

#[derive(Args)]
struct InvertArgs {
    #[arg(long)]
    input: PathBuf,
    /// Defaults to `<input>/output_files`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Outer stopping tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    /// In [0, 1] selects (1 - w, w) penalty weights; otherwise both are 1.
    #[arg(long, allow_negative_numbers = true)]
    weight: Option<f64>,
    #[arg(long)]
    beta0: Option<f64>,
    #[arg(long)]
    betap: Option<f64>,
    #[arg(long)]
    betac: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Folder to create.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Noise norm ‖e‖.
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: PathBuf,
    /// Defaults to `<input>/output_files`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Full-precision map; defaults to `map_full.dat` in the output folder.
    #[arg(long)]
    map: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 3,
        ErrorCategory::Data => 4,
        ErrorCategory::Solver => 5,
        ErrorCategory::Io => 6,
    }
}

fn output_dir(input: &Path, output: Option<PathBuf>) -> PathBuf {
    output.unwrap_or_else(|| input.join("output_files"))
}

fn kernel_for(input: &InputData) -> nmr2d::Result<SeparableKernel> {
    let (g1, g2) = input.config.grids()?;
    Ok(build_kernel_pair(input.config.kind, input.times.clone(), g1, g2))
}

fn print_analysis(a: &Analysis, kernel: &SeparableKernel) {
    let r = &a.report;
    println!(
        "residual: skewness {:.4e}, kurtosis {:.4}, {} of {} points inside the whiskers ({:.2}%), normal: {}",
        r.skewness,
        r.kurtosis,
        r.inlier_count,
        r.count,
        r.inlier_percent(),
        if r.normal { "yes" } else { "no" }
    );
    let (l1, l2) = kernel.kind.axis_labels();
    for (k, p) in a.peaks.iter().enumerate() {
        println!(
            "peak {}: {l1} = {:.4} ms, {l2} = {:.4} ms, area {:.2}%",
            k + 1,
            p.geometric_mean1,
            p.geometric_mean2,
            p.area_percent
        );
    }
}

fn run_invert(args: InvertArgs) -> nmr2d::Result<()> {
    let mut input = io::load_input(&args.input)?;
    let mut overrides = Vec::new();
    let inv = &mut input.config.inversion;
    let mut set = |flag: &str, value: Option<f64>, target: &mut f64| {
        if let Some(v) = value {
            *target = v;
            overrides.push((flag.to_string(), v.to_string()));
        }
    };
    set("--tol", args.tol, &mut inv.outer_tol);
    set("--weight", args.weight, &mut inv.weight);
    set("--beta0", args.beta0, &mut inv.coefficients.beta0);
    set("--betap", args.betap, &mut inv.coefficients.betap);
    set("--betac", args.betac, &mut inv.coefficients.betac);
    if let Some(n) = args.max_outer {
        inv.max_outer = n;
        overrides.push(("--max-outer".to_string(), n.to_string()));
    }
    inv.validate()?;

    let kernel = kernel_for(&input)?;
    info!(
        "{} data {}x{}, map {}x{}",
        kernel.kind,
        input.data.nrows(),
        input.data.ncols(),
        input.config.nx,
        input.config.ny
    );
    let result = invert(&kernel, input.data.view(), &input.config.inversion)?;
    let analysis = analyze(&kernel, result.map.view(), input.data.view())?;
    let out = output_dir(&args.input, args.output);
    let diagnostics = Diagnostics {
        kernel: &kernel,
        map: result.map.view(),
        analysis: &analysis,
    };
    io::write_outputs(&out, &input.config, input.data.dim(), &result, &diagnostics, &overrides)?;

    println!(
        "relative residual {}, {} outer iterations, {} FISTA iterations, {:.2} s",
        io::format_sci(result.relative_residual, 4),
        result.outer_iterations,
        result.total_fista_iterations,
        result.seconds
    );
    print_analysis(&analysis, &kernel);
    for w in &result.warnings {
        warn!("{w}");
    }
    println!("results written to {}", out.display());
    Ok(())
}

fn run_synth(args: SynthArgs) -> nmr2d::Result<()> {
    let mut spec = SyntheticSpec::two_peaks();
    spec.seed = args.seed;
    if let Some(noise) = args.noise {
        spec.noise = noise;
    }
    let dataset = synth::generate(&spec)?;
    synth::write_folder(&args.output, &spec, &dataset)?;
    println!(
        "wrote {} ({}x{} data, seed {})",
        args.output.display(),
        spec.m1,
        spec.m2,
        spec.seed
    );
    Ok(())
}

fn run_stats(args: StatsArgs) -> nmr2d::Result<()> {
    let input = io::load_input(&args.input)?;
    let out = output_dir(&args.input, args.output);
    let map_path = args.map.unwrap_or_else(|| out.join(MAP_FULL_FILE));
    let map = io::read_matrix(&map_path)?;
    let kernel = kernel_for(&input)?;
    if map.dim() != kernel.map_shape() {
        return Err(Error::Data(format!(
            "{} is {}x{}, the input folder describes a {}x{} map",
            map_path.display(),
            map.nrows(),
            map.ncols(),
            input.config.nx,
            input.config.ny
        )));
    }
    let analysis = analyze(&kernel, map.view(), input.data.view())?;
    io::write_diagnostics(
        &out,
        &Diagnostics {
            kernel: &kernel,
            map: map.view(),
            analysis: &analysis,
        },
    )?;
    print_analysis(&analysis, &kernel);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        LevelFilter::Warn
    } else if cli.verbose {
        LevelFilter::Debug
    } else {
        LevelFilter::Info
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .init();

    let outcome = match cli.command {
        Command::Invert(a) => run_invert(a),
        Command::Synth(a) => run_synth(a),
        Command::Stats(a) => run_stats(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
