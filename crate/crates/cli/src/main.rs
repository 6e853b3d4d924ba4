use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use singular_lq::experiments::{
    decade_range, run_sweep, slope_report, write_records_csv, write_slopes_csv, Axis, Family, SlopeSummary,
    SweepConfig,
};
use singular_lq::io::{parse_dae, parse_problem};
use singular_lq::linear_dae::dae_constraint_chain;
use singular_lq::nalgebra::DMatrix;
use singular_lq::{run_with, Error, Options, RankRule, Recursion};

const EXIT_USAGE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Constraint chains and consistent initial subspaces of singular LQ problems.
#[derive(Debug, Parser)]
#[command(name = "singular-lq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the constraint algorithm on a JSON problem file.
    Solve {
        path: PathBuf,
        #[command(flatten)]
        tol: TolArg,
        /// Rank threshold rule: mixed, relative or absolute.
        #[arg(long, default_value = "mixed")]
        rank_rule: RankRule,
        /// Use the uncoupled recursion.
        #[arg(long)]
        literal: bool,
    },
    /// Constraint chain of a linear DAE `A x' = B x` from a JSON file.
    Dae {
        path: PathBuf,
        #[command(flatten)]
        tol: TolArg,
    },
    /// Perturbation sweep over one experiment family, written as CSV.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct TolArg {
    /// Rank tolerance.
    #[arg(long, default_value_t = 1e-6, value_parser = parse_tol)]
    tol: f64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Experiment family: 1, 2 or 3.
    #[arg(long, value_parser = parse_family)]
    family: Family,
    /// Problem sizes, comma separated.
    #[arg(long = "n", value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    /// Perturbation sizes: a comma list (`1e-8,1e-6`) or a decade range
    /// (`1e-16..1e-1`). Defaults to the family's standard range.
    #[arg(long, value_parser = parse_deltas)]
    deltas: Option<Deltas>,
    #[command(flatten)]
    tol: TolArg,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    jobs: Option<usize>,
    /// Records CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Slope summary CSV.
    #[arg(long)]
    slopes_out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct Deltas(Vec<f64>);

fn parse_tol(s: &str) -> Result<f64, String> {
    let tol: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if tol.is_finite() && tol > 0.0 {
        Ok(tol)
    } else {
        Err("must be a positive finite number".into())
    }
}

fn parse_family(s: &str) -> Result<Family, String> {
    let k: u8 = s.parse().map_err(|_| format!("expected 1, 2 or 3, got `{s}`"))?;
    Family::from_number(k).map_err(|e| e.to_string())
}

fn decade_exponent(s: &str) -> Result<i32, String> {
    let x: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    let e = x.log10().round();
    if !(x > 0.0) || (10f64.powi(e as i32) / x - 1.0).abs() > 1e-12 {
        return Err(format!("range endpoint `{s}` is not a power of ten"));
    }
    Ok(e as i32)
}

fn parse_deltas(s: &str) -> Result<Deltas, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("the delta list is empty".into());
    }
    let deltas = if let Some((lo, hi)) = s.split_once("..") {
        let (lo, hi) = (decade_exponent(lo)?, decade_exponent(hi)?);
        if lo > hi {
            return Err("decade range must be increasing".into());
        }
        decade_range(lo, hi)
    } else {
        s.split(',')
            .map(|t| {
                let d: f64 = t.trim().parse().map_err(|_| format!("`{t}` is not a number"))?;
                if d.is_finite() && d >= 0.0 {
                    Ok(d)
                } else {
                    Err(format!("delta `{t}` must be nonnegative"))
                }
            })
            .collect::<Result<_, _>>()?
    };
    Ok(Deltas(deltas))
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<fs::File, Failure> {
    fs::File::create(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn finish(r: io::Result<()>) -> Result<(), Failure> {
    match r {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Failure::Input(format!("write failed: {e}"))),
        _ => Ok(()),
    }
}

fn print_matrix(out: &mut impl Write, label: &str, m: &DMatrix<f64>) -> io::Result<()> {
    writeln!(out, "{label} {}x{}", m.nrows(), m.ncols())?;
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
        writeln!(out, "{}", cells.join(" "))?;
    }
    Ok(())
}

fn solve(path: &Path, tol: f64, rank_rule: RankRule, literal: bool) -> Result<(), Failure> {
    let problem = parse_problem(&read(path)?)?;
    let options = Options {
        tol,
        rank_rule,
        recursion: if literal { Recursion::Literal } else { Recursion::Coupled },
    };
    let res = run_with(&problem, &options)?;
    let kernel = res.final_submanifold();
    let mut out = io::stdout().lock();
    finish((|| {
        writeln!(out, "steps={} codim={} reason={}", res.steps, res.codim, res.halt_reason)?;
        print_matrix(&mut out, "phi", res.phi.matrix())?;
        print_matrix(&mut out, "kernel", kernel.basis())
    })())
}

fn dae(path: &Path, tol: f64) -> Result<(), Failure> {
    let dae = parse_dae(&read(path)?)?;
    let chain = dae_constraint_chain(&dae, tol)?;
    let dims: Vec<String> = chain.dims().iter().map(usize::to_string).collect();
    let mut out = io::stdout().lock();
    finish((|| {
        writeln!(out, "steps={} dim={}", chain.steps, chain.final_subspace().dim())?;
        writeln!(out, "chain {}", dims.join(" "))?;
        print_matrix(&mut out, "basis", chain.final_subspace().basis())
    })())
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let deltas = args.deltas.map_or_else(|| args.family.default_deltas(), |d| d.0);
    let config = SweepConfig {
        family: args.family,
        sizes: args.sizes,
        deltas,
        options: Options::with_tol(args.tol.tol),
        trials: args.trials,
        seed: args.seed,
        jobs: args.jobs,
    };
    // open outputs first so an unwritable path fails before the sweep runs
    let records_file = args.out.as_deref().map(create).transpose()?;
    let slopes_file = args.slopes_out.as_deref().map(create).transpose()?;

    let records = run_sweep(&config)?;
    let mut slopes = Vec::new();
    for (axis, points) in [(Axis::Delta, config.deltas.len()), (Axis::N, config.sizes.len())] {
        if points < 2 {
            continue;
        }
        match slope_report(&records, axis) {
            Ok(fit) => slopes.push(SlopeSummary {
                family: config.family,
                axis,
                fit,
            }),
            Err(e) => eprintln!("no {axis} slope: {e}"),
        }
    }

    finish(match records_file {
        Some(f) => write_records_csv(&records, io::BufWriter::new(f)),
        None => write_records_csv(&records, io::stdout().lock()),
    })?;
    if let Some(f) = slopes_file {
        finish(write_slopes_csv(&slopes, io::BufWriter::new(f)))?;
    }
    if args.out.is_some() {
        finish(write_slopes_csv(&slopes, io::stdout().lock()))?;
    } else {
        for s in &slopes {
            eprintln!("slope {} {:.6} r2={:.6} points={}", s.axis, s.fit.slope, s.fit.r_squared, s.fit.num_points);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let result = match cli.command {
        Command::Solve {
            path,
            tol,
            rank_rule,
            literal,
        } => solve(&path, tol.tol, rank_rule, literal),
        Command::Dae { path, tol } => dae(&path, tol.tol),
        Command::Sweep(args) => sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}
