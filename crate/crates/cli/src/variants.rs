//! Problem variants behind one trait.
//!
//! Each variant (scalar, vector, higher-order, field) knows how to build
//! its core problem from a [`ProblemFile`], realize a candidate
//! trajectory, and run the residual/solve/study operations. Variants are
//! registered by name and selected at runtime from the file's `variant`
//! key, so adding a problem family means adding one entry here and
//! nothing else changes.

use std::path::{Path, PathBuf};

use herglotz_core::expr::{self, Alphabet};
use herglotz_core::fieldgrid::{FieldSamples, ProductGrid};
use herglotz_core::fields::{el_residual_field, integrate_z_field, FieldProblem};
use herglotz_core::herglotz::{
    el_residual, integrate_z, Boundary, ELReport, HerglotzProblem, Trajectory,
};
use herglotz_core::higher_order::{el_residual_ho, integrate_z_ho, HigherOrderProblem};
use herglotz_core::lagrangian::LagrangianSpec;
use herglotz_core::signal::fmt_f64;
use herglotz_core::solver::{extremize, SolveMode, SolveOutcome, StopReason};
use herglotz_core::{Error, Result, SampledSignal, ScaleParams, SignalKind, UniformGrid};
use num_complex::Complex64;

use crate::problem::ProblemFile;
use crate::report::{write_json, ReportJson, SolveMetaJson};

/// Flags shared by the problem-file commands.
pub struct CmdContext {
    pub tol: f64,
    pub out_dir: PathBuf,
    /// Trajectory CSVs, one per coordinate; empty means "use `initial`".
    pub trajectories: Vec<PathBuf>,
    pub dump: bool,
}

pub struct ResidualRun {
    pub certified: bool,
    pub sup_norm: f64,
    pub report_path: PathBuf,
}

pub struct SolveRun {
    pub certified: bool,
    pub converged: bool,
    pub hit_budget: bool,
    pub iterations: usize,
    pub sup_norm: f64,
    pub report_path: PathBuf,
}

pub trait ProblemVariant: Sync {
    fn name(&self) -> &'static str;

    /// Certify a candidate trajectory and write `report.json`.
    fn residual(&self, file: &ProblemFile, ctx: &CmdContext) -> Result<ResidualRun>;

    /// The sup residual norm at one ladder rung (grid and trajectory
    /// unchanged, scale rebound) — the datum a convergence study plots.
    fn residual_at(&self, file: &ProblemFile, h: f64, ctx: &CmdContext) -> Result<f64>;

    /// Run the direct solver. Only first-order problems support this.
    fn solve(&self, _file: &ProblemFile, _ctx: &CmdContext) -> Result<SolveRun> {
        Err(Error::Schema(format!(
            "the {} variant supports residual certification only, not solving",
            self.name()
        )))
    }
}

/// Every variant this build ships, in registration order.
pub fn registry() -> Vec<Box<dyn ProblemVariant>> {
    vec![
        Box::new(ScalarVariant),
        Box::new(VectorVariant),
        Box::new(HigherOrderVariant),
        Box::new(FieldVariant),
    ]
}

/// Select a registered variant by its name.
pub fn select(name: &str) -> Result<Box<dyn ProblemVariant>> {
    registry()
        .into_iter()
        .find(|v| v.name() == name)
        .ok_or_else(|| {
            let known: Vec<&str> = registry().iter().map(|v| v.name()).collect();
            Error::Schema(format!(
                "unknown variant `{name}`: expected one of {}",
                known.join(", ")
            ))
        })
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn time_grid(file: &ProblemFile) -> Result<UniformGrid> {
    let [a, b] = file.interval;
    UniformGrid::symmetric(a, b, file.grid.step, file.grid.margin_nodes)
}

fn scale_for(file: &ProblemFile, grid: &UniformGrid, h: f64) -> Result<ScaleParams> {
    let scale = ScaleParams::for_grid(h, grid)?;
    match &file.scale.ladder {
        Some(ladder) => scale.with_ladder(ladder.clone(), grid),
        None => Ok(scale),
    }
}

/// Candidate trajectory with `n` components: CSV files if given, else the
/// `initial` expressions.
fn load_trajectory(
    file: &ProblemFile,
    n: usize,
    grid: &UniformGrid,
    ctx: &CmdContext,
) -> Result<Trajectory> {
    if !ctx.trajectories.is_empty() {
        if ctx.trajectories.len() != n {
            return Err(Error::Schema(format!(
                "expected {n} trajectory files (one per coordinate), got {}",
                ctx.trajectories.len()
            )));
        }
        let components = ctx
            .trajectories
            .iter()
            .map(|p| SampledSignal::read_csv(p))
            .collect::<Result<Vec<_>>>()?;
        return Trajectory::new(components);
    }
    let initial = file.initial.as_ref().ok_or_else(|| {
        Error::Schema("no trajectory given: pass --trajectory or set `initial`".into())
    })?;
    let components = (0..n)
        .map(|i| crate::source::expr_signal(initial.component(i, n)?, *grid))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(components)
}

/// Solver starting point: CSV, `initial` expression, or the affine
/// interpolant of the boundary data (constant when the right end is free).
fn starting_trajectory(
    file: &ProblemFile,
    problem: &HerglotzProblem,
    grid: &UniformGrid,
    ctx: &CmdContext,
) -> Result<Trajectory> {
    if !ctx.trajectories.is_empty() || file.initial.is_some() {
        return load_trajectory(file, problem.dimension(), grid, ctx);
    }
    let (a, b) = (problem.a(), problem.b());
    let components = problem
        .boundary()
        .iter()
        .map(|bp| {
            let left = bp.left;
            let slope = match bp.right {
                Boundary::Fixed(r) => (r - left) / (b - a),
                Boundary::Free => 0.0,
            };
            Ok(SampledSignal::from_real_fn(*grid, |t| {
                left + slope * (t - a)
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(components)
}

fn report_path(ctx: &CmdContext) -> PathBuf {
    ctx.out_dir.join("report.json")
}

fn dump_scalar_signals(report: &ELReport, ctx: &CmdContext) -> Result<()> {
    for (i, res) in report.residual.iter().enumerate() {
        res.write_csv(&ctx.out_dir.join(format!("residual_x{}.csv", i + 1)))?;
    }
    report.lambda.write_csv(&ctx.out_dir.join("lambda.csv"))?;
    Ok(())
}

fn max_sup(report: &ELReport) -> f64 {
    report.sup_norms.iter().copied().fold(0.0, f64::max)
}

fn write_trace(path: &Path, outcome: &SolveOutcome) -> Result<()> {
    let mut out = String::from("iter,objective_re,objective_im,grad_norm,step\n");
    for p in &outcome.trace {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.iteration,
            fmt_f64(p.objective.re),
            fmt_f64(p.objective.im),
            fmt_f64(p.grad_norm),
            fmt_f64(p.step)
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn stop_label(stop: StopReason) -> &'static str {
    match stop {
        StopReason::GradientConverged => "gradient_converged",
        StopReason::LineSearchFailure => "line_search_failure",
        StopReason::MaxIterations => "max_iterations",
    }
}

fn mode_label(mode: SolveMode) -> &'static str {
    match mode {
        SolveMode::Stationary => "stationary",
        SolveMode::Minimize => "minimize",
        SolveMode::Maximize => "maximize",
    }
}

// ---------------------------------------------------------------------------
// First-order problems (scalar = vector with one coordinate)
// ---------------------------------------------------------------------------

fn vector_problem(file: &ProblemFile, n: usize, h: f64) -> Result<(HerglotzProblem, UniformGrid)> {
    let grid = time_grid(file)?;
    let scale = scale_for(file, &grid, h)?;
    let lagrangian = LagrangianSpec::parse(&file.lagrangian, Alphabet::scalar_vector(n))?;
    let [a, b] = file.interval;
    let problem = HerglotzProblem::new(
        a,
        b,
        file.z_a.value(),
        file.boundary_pairs()?,
        lagrangian,
        scale,
    )?;
    Ok((problem, grid))
}

fn first_order_residual(
    variant: &str,
    file: &ProblemFile,
    n: usize,
    ctx: &CmdContext,
) -> Result<ResidualRun> {
    let (problem, grid) = vector_problem(file, n, file.scale.h)?;
    let x = load_trajectory(file, n, &grid, ctx)?;
    let z = integrate_z(&problem, &x)?;
    let report = el_residual(&problem, &x, &z, ctx.tol)?;
    let path = report_path(ctx);
    write_json(&path, &ReportJson::from_el(variant, &report, z.terminal))?;
    if ctx.dump {
        dump_scalar_signals(&report, ctx)?;
    }
    Ok(ResidualRun {
        certified: report.certified,
        sup_norm: max_sup(&report),
        report_path: path,
    })
}

fn first_order_residual_at(file: &ProblemFile, n: usize, h: f64, ctx: &CmdContext) -> Result<f64> {
    let (problem, grid) = vector_problem(file, n, h)?;
    let x = load_trajectory(file, n, &grid, ctx)?;
    let z = integrate_z(&problem, &x)?;
    let report = el_residual(&problem, &x, &z, ctx.tol)?;
    Ok(max_sup(&report))
}

fn first_order_solve(
    variant: &str,
    file: &ProblemFile,
    n: usize,
    ctx: &CmdContext,
) -> Result<SolveRun> {
    let (problem, grid) = vector_problem(file, n, file.scale.h)?;
    let init = starting_trajectory(file, &problem, &grid, ctx)?;
    let options = file.solve_options(ctx.tol)?;
    let outcome = extremize(&problem, &init, &options)?;

    for (i, component) in outcome.trajectory.components().iter().enumerate() {
        component.write_csv(&ctx.out_dir.join(format!("trajectory_x{}.csv", i + 1)))?;
    }
    write_trace(&ctx.out_dir.join("trace.csv"), &outcome)?;

    let mut report = ReportJson::from_el(variant, &outcome.report, outcome.z.terminal);
    report.solve = Some(SolveMetaJson {
        mode: mode_label(options.mode).to_string(),
        iterations: outcome.iterations,
        converged: outcome.converged,
        stop: stop_label(outcome.stop).to_string(),
        gradient_norm: outcome.trace.last().map_or(f64::NAN, |p| p.grad_norm),
    });
    let path = report_path(ctx);
    write_json(&path, &report)?;
    if ctx.dump {
        dump_scalar_signals(&outcome.report, ctx)?;
    }

    Ok(SolveRun {
        certified: outcome.report.certified,
        converged: outcome.converged,
        hit_budget: outcome.stop == StopReason::MaxIterations,
        iterations: outcome.iterations,
        sup_norm: max_sup(&outcome.report),
        report_path: path,
    })
}

struct ScalarVariant;

impl ProblemVariant for ScalarVariant {
    fn name(&self) -> &'static str {
        "scalar"
    }

    fn residual(&self, file: &ProblemFile, ctx: &CmdContext) -> Result<ResidualRun> {
        first_order_residual("scalar", file, 1, ctx)
    }

    fn residual_at(&self, file: &ProblemFile, h: f64, ctx: &CmdContext) -> Result<f64> {
        first_order_residual_at(file, 1, h, ctx)
    }

    fn solve(&self, file: &ProblemFile, ctx: &CmdContext) -> Result<SolveRun> {
        first_order_solve("scalar", file, 1, ctx)
    }
}

struct VectorVariant;

impl ProblemVariant for VectorVariant {
    fn name(&self) -> &'static str {
        "vector"
    }

    fn residual(&self, file: &ProblemFile, ctx: &CmdContext) -> Result<ResidualRun> {
        let n = file.dimension.unwrap_or(1);
        first_order_residual("vector", file, n, ctx)
    }

    fn residual_at(&self, file: &ProblemFile, h: f64, ctx: &CmdContext) -> Result<f64> {
        let n = file.dimension.unwrap_or(1);
        first_order_residual_at(file, n, h, ctx)
    }

    fn solve(&self, file: &ProblemFile, ctx: &CmdContext) -> Result<SolveRun> {
        let n = file.dimension.unwrap_or(1);
        first_order_solve("vector", file, n, ctx)
    }
}

// ---------------------------------------------------------------------------
// Higher-order problems
// ---------------------------------------------------------------------------

fn ho_problem(file: &ProblemFile, h: f64) -> Result<(HigherOrderProblem, UniformGrid)> {
    let order = file.order.unwrap_or(1);
    let grid = time_grid(file)?;
    let scale = scale_for(file, &grid, h)?;
    let lagrangian = LagrangianSpec::parse(&file.lagrangian, Alphabet::higher_order(order))?;
    let [a, b] = file.interval;
    let problem = HigherOrderProblem::new(
        a,
        b,
        file.z_a.value(),
        file.boundary_pairs()?,
        lagrangian,
        scale,
    )?;
    Ok((problem, grid))
}

struct HigherOrderVariant;

impl HigherOrderVariant {
    fn run(&self, file: &ProblemFile, h: f64, ctx: &CmdContext) -> Result<(ELReport, Complex64)> {
        let (problem, grid) = ho_problem(file, h)?;
        let x = load_trajectory(file, 1, &grid, ctx)?;
        let z = integrate_z_ho(&problem, &x)?;
        let report = el_residual_ho(&problem, &x, &z, ctx.tol)?;
        Ok((report, z.terminal))
    }
}

impl ProblemVariant for HigherOrderVariant {
    fn name(&self) -> &'static str {
        "higher_order"
    }

    fn residual(&self, file: &ProblemFile, ctx: &CmdContext) -> Result<ResidualRun> {
        let (report, z_terminal) = self.run(file, file.scale.h, ctx)?;
        let path = report_path(ctx);
        write_json(
            &path,
            &ReportJson::from_el("higher_order", &report, z_terminal),
        )?;
        if ctx.dump {
            dump_scalar_signals(&report, ctx)?;
        }
        Ok(ResidualRun {
            certified: report.certified,
            sup_norm: max_sup(&report),
            report_path: path,
        })
    }

    fn residual_at(&self, file: &ProblemFile, h: f64, ctx: &CmdContext) -> Result<f64> {
        let (report, _) = self.run(file, h, ctx)?;
        Ok(max_sup(&report))
    }
}

// ---------------------------------------------------------------------------
// Field problems
// ---------------------------------------------------------------------------

fn field_problem(file: &ProblemFile, h: f64) -> Result<(FieldProblem, ProductGrid)> {
    let nspace = file.dimension.unwrap_or(1);
    let time = time_grid(file)?;
    let space = file
        .space
        .as_ref()
        .ok_or_else(|| Error::Schema("field problems need `space` boxes".into()))?;
    let mut axes = vec![time];
    for &[lo, hi] in space {
        axes.push(UniformGrid::symmetric(
            lo,
            hi,
            file.grid.step,
            file.grid.margin_nodes,
        )?);
    }
    let grid = ProductGrid::new(axes)?;
    let scale = ScaleParams::for_grid(h, grid.axis(0))?;
    let lagrangian = LagrangianSpec::parse(&file.lagrangian, Alphabet::field(nspace))?;
    let [a, b] = file.interval;
    let problem = FieldProblem::new(a, b, file.z_a.value(), nspace, lagrangian, scale)?;
    Ok((problem, grid))
}

/// Sample a `(t, s1[, s2])` expression over every node of the product
/// grid, margins included.
fn field_trajectory(file: &ProblemFile, nspace: usize, grid: &ProductGrid) -> Result<FieldSamples> {
    let initial = file.initial.as_ref().ok_or_else(|| {
        Error::Schema("field problems take their trajectory from `initial`".into())
    })?;
    let text = initial.component(0, 1)?;
    let mut names = vec!["t".to_string()];
    for i in 1..=nspace {
        names.push(format!("s{i}"));
    }
    let alphabet = Alphabet::new(names);
    let e = expr::parse(text, &alphabet)?;
    let dims = grid.dims();
    let strides = grid.strides();
    let values = (0..grid.len())
        .map(|lin| {
            let bindings: Vec<Option<Complex64>> = (0..grid.naxes())
                .map(|i| {
                    let k = lin / strides[i] % dims[i];
                    Some(Complex64::new(grid.axis(i).node(k), 0.0))
                })
                .collect();
            expr::evaluate(&e, &bindings, &alphabet)
        })
        .collect::<Result<Vec<_>>>()?;
    let kind = if values.iter().all(|v| v.im == 0.0) {
        SignalKind::Real
    } else {
        SignalKind::Complex
    };
    FieldSamples::from_values(grid.clone(), values, kind)
}

struct FieldVariant;

impl ProblemVariant for FieldVariant {
    fn name(&self) -> &'static str {
        "field"
    }

    fn residual(&self, file: &ProblemFile, ctx: &CmdContext) -> Result<ResidualRun> {
        if !ctx.trajectories.is_empty() {
            return Err(Error::Schema(
                "field trajectories come from `initial`, not --trajectory".into(),
            ));
        }
        let (problem, grid) = field_problem(file, file.scale.h)?;
        let u = field_trajectory(file, problem.nspace(), &grid)?;
        let z = integrate_z_field(&problem, &u)?;
        let report = el_residual_field(&problem, &u, &z, ctx.tol)?;
        let path = report_path(ctx);
        write_json(
            &path,
            &ReportJson {
                variant: "field".to_string(),
                certified: report.certified,
                tolerance: report.tolerance,
                h: report.h,
                step: file.grid.step,
                sup_norms: vec![report.sup_norm],
                sup_modulus: vec![report.sup_modulus],
                sup_im: vec![report.sup_im],
                transversality: Vec::new(),
                z_terminal: [z.terminal.re, z.terminal.im],
                im_z_max: report.im_z_max,
                barrow_defect: Vec::new(),
                solve: None,
            },
        )?;
        if ctx.dump {
            report.residual.write_slices(&ctx.out_dir, "residual")?;
            report.lambda.write_csv(&ctx.out_dir.join("lambda.csv"))?;
        }
        Ok(ResidualRun {
            certified: report.certified,
            sup_norm: report.sup_norm,
            report_path: path,
        })
    }

    fn residual_at(&self, file: &ProblemFile, h: f64, ctx: &CmdContext) -> Result<f64> {
        let (problem, grid) = field_problem(file, h)?;
        let u = field_trajectory(file, problem.nspace(), &grid)?;
        let z = integrate_z_field(&problem, &u)?;
        let report = el_residual_field(&problem, &u, &z, ctx.tol)?;
        Ok(report.sup_norm)
    }
}
