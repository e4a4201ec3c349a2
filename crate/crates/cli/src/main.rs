//! `herglotz` — scale-calculus operators and Herglotz variational reports
//! from the command line.
//!
//! Exit codes: 0 success (and certified, where certification applies),
//! 1 not certified, 2 schema/parse errors, 3 numeric precondition
//! failures, 4 iteration budget exhausted (best iterate still written).

mod problem;
mod report;
mod source;
mod variants;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use herglotz_core::holder::holder_exponent;
use herglotz_core::numerics::linear_regression;
use herglotz_core::scale::{
    box_derivative, box_integral, delta_derivative, higher_order_box, leibniz_residual,
    nabla_derivative, DerivativeMode, ScaleParams,
};
use herglotz_core::signal::fmt_f64;
use herglotz_core::{Error, Result, UniformGrid};

use problem::ProblemFile;
use report::{write_json, HolderJson, StudyJson};
use source::{parse_ladder, SignalSource};
use variants::CmdContext;

#[derive(Parser)]
#[command(
    name = "herglotz",
    version,
    about = "Complex scale derivatives and the Herglotz variational principle on sampled signals"
)]
struct Cli {
    /// Certification tolerance for residual reports.
    #[arg(long, global = true, default_value_t = 1e-6)]
    tol: f64,

    /// Directory receiving every output artifact.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Worker threads (falls back to HERGLOTZ_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a scale-derivative operator and write the result as CSV.
    Derive(DeriveArgs),
    /// Certify the Euler–Lagrange residual of a candidate trajectory.
    Residual(ResidualArgs),
    /// Search for a trajectory making z(b) stationary.
    Solve(SolveArgs),
    /// Sweep an h-ladder and fit the log-log convergence slope.
    Study(StudyArgs),
    /// Estimate the Hölder exponent of a signal.
    Holder(HolderArgs),
}

#[derive(Args)]
struct DeriveArgs {
    /// Expression of `t` to synthesize (exclusive with --input).
    #[arg(long)]
    expr: Option<String>,
    /// Signal CSV written by this tool (grid sidecar required).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Interval start (expression input only).
    #[arg(long)]
    a: Option<f64>,
    /// Interval end (expression input only).
    #[arg(long)]
    b: Option<f64>,
    /// Grid step (expression input only).
    #[arg(long)]
    step: Option<f64>,
    /// Scale step; must be a multiple of the grid step.
    #[arg(long)]
    h: f64,
    /// Derivative order (box mode; 0 returns the signal unchanged).
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// One of: box, delta, nabla, extrapolated.
    #[arg(long, default_value = "box")]
    mode: String,
    /// Comma-separated h ladder (extrapolated mode).
    #[arg(long)]
    ladder: Option<String>,
}

#[derive(Args)]
struct ResidualArgs {
    /// Problem file (JSON).
    #[arg(long)]
    problem: PathBuf,
    /// Trajectory CSV, once per coordinate; defaults to `initial`.
    #[arg(long)]
    trajectory: Vec<PathBuf>,
    /// Also write residual and lambda CSV dumps.
    #[arg(long)]
    dump_signals: bool,
}

#[derive(Args)]
struct SolveArgs {
    /// Problem file (JSON).
    #[arg(long)]
    problem: PathBuf,
    /// Starting trajectory CSV, once per coordinate; defaults to
    /// `initial`, then to the affine interpolant of the boundary data.
    #[arg(long)]
    trajectory: Vec<PathBuf>,
    /// Also write residual and lambda CSV dumps.
    #[arg(long)]
    dump_signals: bool,
}

#[derive(Args)]
struct StudyArgs {
    /// What to sweep: el (problem residual), leibniz, or barrow.
    #[arg(long, default_value = "el")]
    kind: String,
    /// Comma-separated decreasing h ladder (at least 3 rungs).
    #[arg(long)]
    ladder: String,
    /// Problem file (el studies).
    #[arg(long)]
    problem: Option<PathBuf>,
    /// Trajectory CSV for el studies, once per coordinate.
    #[arg(long)]
    trajectory: Vec<PathBuf>,
    /// First signal, as an expression of `t` (leibniz/barrow).
    #[arg(long)]
    f: Option<String>,
    /// First signal, as a Weierstrass pair `amp,freq` (leibniz/barrow).
    #[arg(long)]
    f_weierstrass: Option<String>,
    /// Second signal, as an expression of `t` (leibniz only).
    #[arg(long)]
    g: Option<String>,
    /// Second signal, as a Weierstrass pair `amp,freq` (leibniz only).
    #[arg(long)]
    g_weierstrass: Option<String>,
    /// Interval start (signal studies).
    #[arg(long)]
    a: Option<f64>,
    /// Interval end (signal studies).
    #[arg(long)]
    b: Option<f64>,
    /// Grid step (signal studies).
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Args)]
struct HolderArgs {
    /// Expression of `t` to synthesize.
    #[arg(long)]
    expr: Option<String>,
    /// Signal CSV written by this tool.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Weierstrass pair `amp,freq`.
    #[arg(long)]
    weierstrass: Option<String>,
    /// Interval start (synthesized signals).
    #[arg(long)]
    a: Option<f64>,
    /// Interval end (synthesized signals).
    #[arg(long)]
    b: Option<f64>,
    /// Grid step (synthesized signals).
    #[arg(long)]
    step: Option<f64>,
}

fn main() {
    let cli = Cli::parse();
    init_threads(cli.threads);
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric_precondition() {
                3
            } else {
                2
            }
        }
    };
    std::process::exit(code);
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("HERGLOTZ_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    if let Some(n) = n {
        // Ignore failure: the global pool can only be set once.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn run(cli: Cli) -> Result<i32> {
    std::fs::create_dir_all(&cli.out_dir)?;
    match cli.command {
        Command::Derive(args) => cmd_derive(&cli.out_dir, args),
        Command::Residual(args) => cmd_residual(cli.tol, &cli.out_dir, args),
        Command::Solve(args) => cmd_solve(cli.tol, &cli.out_dir, args),
        Command::Study(args) => cmd_study(cli.tol, &cli.out_dir, args),
        Command::Holder(args) => cmd_holder(&cli.out_dir, args),
    }
}

/// Grid for a synthesized signal: interval flags plus enough margin for
/// the requested operator at the requested scale(s).
fn synth_grid(
    a: Option<f64>,
    b: Option<f64>,
    step: Option<f64>,
    margin: usize,
) -> Result<Option<UniformGrid>> {
    match (a, b, step) {
        (Some(a), Some(b), Some(step)) => Ok(Some(UniformGrid::symmetric(a, b, step, margin)?)),
        (None, None, None) => Ok(None),
        _ => Err(Error::Schema(
            "give all of --a, --b, --step, or none of them".into(),
        )),
    }
}

/// Nodes per scale step, before the grid exists; the exact divisibility
/// check happens when the scale is bound to the grid.
fn rough_nodes(h: f64, step: f64) -> usize {
    ((h / step).round() as usize).max(1)
}

fn cmd_derive(out_dir: &std::path::Path, args: DeriveArgs) -> Result<i32> {
    let ladder = args.ladder.as_deref().map(parse_ladder).transpose()?;
    let source = SignalSource::from_flags(args.expr, args.input, None, "derive")?;

    let margin = match (args.step, &ladder) {
        (Some(step), Some(ladder)) => {
            let widest = ladder.iter().copied().fold(args.h, f64::max);
            args.order.max(1) * rough_nodes(widest, step)
        }
        (Some(step), None) => args.order.max(1) * rough_nodes(args.h, step),
        (None, _) => 0,
    };
    let signal = source.realize(synth_grid(args.a, args.b, args.step, margin)?)?;

    let mut scale = ScaleParams::for_grid(args.h, signal.grid())?;
    if let Some(ladder) = ladder {
        scale = scale.with_ladder(ladder, signal.grid())?;
    }

    let out = match args.mode.as_str() {
        "box" => higher_order_box(&signal, args.order, &scale)?,
        "delta" | "nabla" => {
            if args.order != 1 {
                return Err(Error::Schema(format!(
                    "--order applies to box mode; {} is first-order only",
                    args.mode
                )));
            }
            match args.mode.as_str() {
                "delta" => delta_derivative(&signal, &scale)?,
                _ => nabla_derivative(&signal, &scale)?,
            }
        }
        "extrapolated" => {
            if args.order != 1 {
                return Err(Error::Schema(
                    "--order applies to box mode; extrapolation is first-order only".into(),
                ));
            }
            let (out, defect) = box_derivative(&signal, &scale, DerivativeMode::Extrapolated)?;
            println!("fit variance max = {}", fmt_f64(defect.max_variance));
            out
        }
        other => {
            return Err(Error::Schema(format!(
                "unknown mode `{other}`: expected box, delta, nabla, or extrapolated"
            )));
        }
    };

    let path = out_dir.join("derivative.csv");
    out.restrict(0, 0)?.write_csv(&path)?;
    println!("wrote {} ({} nodes)", path.display(), out.grid().core_len());
    Ok(0)
}

fn cmd_residual(tol: f64, out_dir: &std::path::Path, args: ResidualArgs) -> Result<i32> {
    let file = ProblemFile::load(&args.problem)?;
    let variant = variants::select(&file.variant)?;
    let ctx = CmdContext {
        tol,
        out_dir: out_dir.to_path_buf(),
        trajectories: args.trajectory,
        dump: args.dump_signals,
    };
    let run = variant.residual(&file, &ctx)?;
    println!(
        "certified: {} (sup |Re residual| = {}, tol = {})",
        run.certified,
        fmt_f64(run.sup_norm),
        fmt_f64(tol)
    );
    println!("wrote {}", run.report_path.display());
    Ok(if run.certified { 0 } else { 1 })
}

fn cmd_solve(tol: f64, out_dir: &std::path::Path, args: SolveArgs) -> Result<i32> {
    let file = ProblemFile::load(&args.problem)?;
    let variant = variants::select(&file.variant)?;
    let ctx = CmdContext {
        tol,
        out_dir: out_dir.to_path_buf(),
        trajectories: args.trajectory,
        dump: args.dump_signals,
    };
    let run = variant.solve(&file, &ctx)?;
    println!(
        "converged: {} after {} iterations; certified: {} (sup |Re residual| = {})",
        run.converged,
        run.iterations,
        run.certified,
        fmt_f64(run.sup_norm)
    );
    println!("wrote {}", run.report_path.display());
    if run.hit_budget {
        eprintln!("iteration budget exhausted; outputs hold the best iterate");
        return Ok(4);
    }
    Ok(if run.certified { 0 } else { 1 })
}

fn cmd_study(tol: f64, out_dir: &std::path::Path, args: StudyArgs) -> Result<i32> {
    let ladder = parse_ladder(&args.ladder)?;
    let rows: Vec<[f64; 2]> = match args.kind.as_str() {
        "el" => {
            let path = args
                .problem
                .ok_or_else(|| Error::Schema("el studies need --problem".into()))?;
            let file = ProblemFile::load(&path)?;
            let variant = variants::select(&file.variant)?;
            let ctx = CmdContext {
                tol,
                out_dir: out_dir.to_path_buf(),
                trajectories: args.trajectory,
                dump: false,
            };
            ladder
                .iter()
                .map(|&h| Ok([h, variant.residual_at(&file, h, &ctx)?]))
                .collect::<Result<_>>()?
        }
        "barrow" => {
            let f = SignalSource::from_flags(args.f, None, args.f_weierstrass, "study --f")?;
            let grid = synth_grid(args.a, args.b, args.step, 0)?;
            let signal = f.realize(grid)?;
            ladder
                .iter()
                .map(|&h| {
                    let scale = ScaleParams::for_grid(h, signal.grid())?;
                    let (_, defect) = box_integral(&signal, &scale)?;
                    Ok([h, defect])
                })
                .collect::<Result<_>>()?
        }
        "leibniz" => {
            let widest = ladder.iter().copied().fold(0.0, f64::max);
            let margin = args.step.map_or(0, |s| rough_nodes(widest, s));
            let grid = synth_grid(args.a, args.b, args.step, margin)?;
            let f = SignalSource::from_flags(args.f, None, args.f_weierstrass, "study --f")?
                .realize(grid)?;
            let g = SignalSource::from_flags(args.g, None, args.g_weierstrass, "study --g")?
                .realize(grid)?;
            ladder
                .iter()
                .map(|&h| {
                    let scale = ScaleParams::for_grid(h, f.grid())?;
                    let residual = leibniz_residual(&f, &g, &scale)?;
                    Ok([h, residual.sup_core()])
                })
                .collect::<Result<_>>()?
        }
        other => {
            return Err(Error::Schema(format!(
                "unknown study kind `{other}`: expected el, leibniz, or barrow"
            )));
        }
    };

    // Machine-level defects (Barrow telescoping) would send log(0) to
    // -inf; clamp so the fit stays finite.
    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|&[h, v]| (h.ln(), v.max(1e-300).ln()))
        .collect();
    let (intercept, slope, r_squared) = linear_regression(&points);

    let csv_path = out_dir.join("study.csv");
    let mut csv = String::from("h,value\n");
    for &[h, v] in &rows {
        csv.push_str(&format!("{},{}\n", fmt_f64(h), fmt_f64(v)));
    }
    std::fs::write(&csv_path, csv)?;
    write_json(
        &out_dir.join("study.json"),
        &StudyJson {
            kind: args.kind.clone(),
            slope,
            intercept,
            r_squared,
            rows,
        },
    )?;
    println!("slope = {} (r^2 = {})", fmt_f64(slope), fmt_f64(r_squared));
    println!("wrote {}", csv_path.display());
    Ok(0)
}

fn cmd_holder(out_dir: &std::path::Path, args: HolderArgs) -> Result<i32> {
    let source = SignalSource::from_flags(args.expr, args.input, args.weierstrass, "holder")?;
    let signal = source.realize(synth_grid(args.a, args.b, args.step, 0)?)?;
    let estimate = holder_exponent(&signal)?;
    write_json(
        &out_dir.join("holder.json"),
        &HolderJson {
            alpha_hat: estimate.alpha_hat,
            r_squared: estimate.r_squared,
            points: estimate
                .regression_points
                .iter()
                .map(|&(x, y)| [x, y])
                .collect(),
        },
    )?;
    println!("alpha_hat = {}", fmt_f64(estimate.alpha_hat));
    Ok(0)
}
