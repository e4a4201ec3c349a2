//! Herglotz problem with several independent variables: a field
//! `u(t, x)` on a space box Ω drives `ż(t) = ∫_Ω L(t, x, u, □u/□t,
//! □u/□x_i, z) dⁿx`, and the necessary condition for `u` to extremize
//! `z(b)` is the field Euler–Lagrange equation
//!
//! ```text
//! ∂L/∂u + ∂L/∂u_t·∫_Ω ∂L/∂z dⁿx − □_t(∂L/∂u_t) − Σ_i □_{x_i}(∂L/∂u_{x_i}) = 0
//! ```
//!
//! at every interior space-time node. One scale step `h` is shared by all
//! axes; each axis resolves it to its own node count. Up to two space
//! axes are supported. The density alphabet is `t, s1..sn, u, ut,
//! ux1..uxn, z`.
//!
//! The stated condition writes the `z`-coupling under the integral as a
//! partial with respect to a box derivative of `z`; no such argument
//! exists in the density's list, and the weight construction uses
//! `∂L/∂z`, which is what this module evaluates.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::Alphabet;
use crate::fieldgrid::{FieldSamples, ProductGrid};
use crate::herglotz::{eval_error, rk4_z_values, StagePoint, ZSolution};
use crate::lagrangian::LagrangianSpec;
use crate::numerics::{cumulative_trapezoid, interp_midpoint};
use crate::scale::ScaleParams;
use crate::signal::{SampledSignal, SignalKind};

/// A field Herglotz problem: time interval, number of space axes, and the
/// Lagrangian density. The space box itself travels with the sampled
/// field, so one problem can be evaluated on several grids.
#[derive(Debug, Clone)]
pub struct FieldProblem {
    a: f64,
    b: f64,
    z_a: Complex64,
    nspace: usize,
    lagrangian: LagrangianSpec,
    scale: ScaleParams,
}

impl FieldProblem {
    pub fn new(
        a: f64,
        b: f64,
        z_a: Complex64,
        nspace: usize,
        lagrangian: LagrangianSpec,
        scale: ScaleParams,
    ) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidParameter(format!(
                "interval [{a}, {b}] must be finite with a < b"
            )));
        }
        if !(1..=2).contains(&nspace) {
            return Err(Error::InvalidParameter(format!(
                "field problems support 1 or 2 space axes, got {nspace}"
            )));
        }
        let expected = Alphabet::field(nspace);
        let got = lagrangian.alphabet();
        let matches = got.len() == expected.len()
            && (0..expected.len()).all(|id| got.name(id) == expected.name(id));
        if !matches {
            return Err(Error::Schema(format!(
                "density alphabet does not match a field problem with {nspace} space axes"
            )));
        }
        Ok(FieldProblem {
            a,
            b,
            z_a,
            nspace,
            lagrangian,
            scale,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn z_a(&self) -> Complex64 {
        self.z_a
    }

    pub fn nspace(&self) -> usize {
        self.nspace
    }

    pub fn lagrangian(&self) -> &LagrangianSpec {
        &self.lagrangian
    }

    pub fn scale(&self) -> &ScaleParams {
        &self.scale
    }

    fn ids(&self) -> FieldIds {
        let alphabet = self.lagrangian.alphabet();
        FieldIds {
            t: alphabet.index_of("t").unwrap(),
            s: (1..=self.nspace)
                .map(|i| alphabet.index_of(&format!("s{i}")).unwrap())
                .collect(),
            u: alphabet.index_of("u").unwrap(),
            ut: alphabet.index_of("ut").unwrap(),
            ux: (1..=self.nspace)
                .map(|i| alphabet.index_of(&format!("ux{i}")).unwrap())
                .collect(),
            z: alphabet.index_of("z").unwrap(),
        }
    }
}

struct FieldIds {
    t: usize,
    s: Vec<usize>,
    u: usize,
    ut: usize,
    ux: Vec<usize>,
    z: usize,
}

/// Residual report for a field problem. Field boundaries are always
/// fixed, so there is no transversality block.
#[derive(Debug, Clone)]
pub struct FieldELReport {
    /// Complex residual on the doubly-shrunk product grid (core covers
    /// the full interior box).
    pub residual: FieldSamples,
    /// `sup |Re residual|` over core nodes — the certification norm.
    pub sup_norm: f64,
    /// `sup |residual|` — diagnostic and refinement metric.
    pub sup_modulus: f64,
    /// `sup |Im residual|` — diagnostic.
    pub sup_im: f64,
    /// `λ(t) = exp(−∫_a^t ∫_Ω ∂L/∂z)`, restricted to `[a, b]`.
    pub lambda: SampledSignal,
    pub certified: bool,
    pub tolerance: f64,
    pub h: f64,
    pub im_z_max: f64,
}

/// Density arguments at one node: `u`, `□_t u`, and the spatial boxes.
type NodeArgs = (Complex64, Complex64, Vec<Complex64>);

/// Density partials at one node: `∂L/∂u`, `∂L/∂(□_t u)`, the spatial
/// gradient block, and `∂L/∂z`.
type DensityPartials = (Complex64, Complex64, Vec<Complex64>, Complex64);

/// The field and its scale partials aligned on the common grid (every
/// axis shrunk by its resolution of `h`).
struct FieldStage {
    grid: ProductGrid,
    us: FieldSamples,
    uts: FieldSamples,
    uxs: Vec<FieldSamples>,
}

fn stage_field(problem: &FieldProblem, u: &FieldSamples) -> Result<FieldStage> {
    if u.grid().naxes() != problem.nspace + 1 {
        return Err(Error::GridMismatch(format!(
            "field has {} axes but the problem declares {} space axes",
            u.grid().naxes(),
            problem.nspace
        )));
    }
    let time = u.grid().axis(0);
    if (time.a() - problem.a).abs() > 1e-9 * time.step()
        || (time.b() - problem.b).abs() > 1e-9 * time.step()
    {
        return Err(Error::GridMismatch(format!(
            "field time axis [{}, {}] does not match the problem interval [{}, {}]",
            time.a(),
            time.b(),
            problem.a,
            problem.b
        )));
    }
    let uts = u.partial_box(0, &problem.scale)?;
    let mut uxs = Vec::with_capacity(problem.nspace);
    for axis in 1..=problem.nspace {
        uxs.push(u.partial_box(axis, &problem.scale)?);
    }
    // Common grid: every axis shrunk by its node resolution of h.
    let mut axes = Vec::with_capacity(u.grid().naxes());
    for i in 0..u.grid().naxes() {
        let g = u.grid().axis(i);
        axes.push(g.shrink_both(g.nodes_for(problem.scale.h())?)?);
    }
    let grid = ProductGrid::new(axes)?;
    let us = u.restrict_to(&grid)?;
    let uts = uts.restrict_to(&grid)?;
    let uxs = uxs
        .iter()
        .map(|s| s.restrict_to(&grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(FieldStage { grid, us, uts, uxs })
}

/// One spatial quadrature node: its weight, coordinates, and the time
/// columns of every density argument, contiguous for interpolation.
struct SpaceColumn {
    weight: f64,
    coords: Vec<f64>,
    u: Vec<Complex64>,
    ut: Vec<Complex64>,
    ux: Vec<Vec<Complex64>>,
}

fn space_columns(stage: &FieldStage) -> Vec<SpaceColumn> {
    let grid = &stage.grid;
    let strides = grid.strides();
    let nt = grid.axis(0).len();
    // Enumerate core space nodes with tensor-product trapezoid weights.
    let mut nodes: Vec<(usize, f64, Vec<f64>)> = Vec::new();
    match grid.naxes() {
        1 => nodes.push((0, 1.0, Vec::new())),
        2 => {
            let ax = grid.axis(1);
            for k in ax.core_range() {
                let w = axis_weight(ax, k);
                nodes.push((k * strides[1], w, vec![ax.node(k)]));
            }
        }
        3 => {
            let ax1 = grid.axis(1);
            let ax2 = grid.axis(2);
            for k1 in ax1.core_range() {
                for k2 in ax2.core_range() {
                    let w = axis_weight(ax1, k1) * axis_weight(ax2, k2);
                    nodes.push((
                        k1 * strides[1] + k2 * strides[2],
                        w,
                        vec![ax1.node(k1), ax2.node(k2)],
                    ));
                }
            }
        }
        _ => unreachable!(),
    }
    nodes
        .into_par_iter()
        .map(|(offset, weight, coords)| {
            let column = |samples: &FieldSamples| -> Vec<Complex64> {
                (0..nt)
                    .map(|k| samples.values()[k * strides[0] + offset])
                    .collect()
            };
            SpaceColumn {
                weight,
                coords,
                u: column(&stage.us),
                ut: column(&stage.uts),
                ux: stage.uxs.iter().map(column).collect(),
            }
        })
        .collect()
}

fn axis_weight(g: &crate::grid::UniformGrid, k: usize) -> f64 {
    if k == g.index_of_a() || k == g.index_of_b() {
        0.5 * g.step()
    } else {
        g.step()
    }
}

/// Integrate `ż = ∫_Ω L dⁿx` by RK4 at the time step, with the spatial
/// integral evaluated by tensor-product trapezoid over the core box at
/// every stage (time midpoints use cubic interpolation of the columns).
pub fn integrate_z_field(problem: &FieldProblem, u: &FieldSamples) -> Result<ZSolution> {
    let stage = stage_field(problem, u)?;
    let columns = space_columns(&stage);
    integrate_z_staged(problem, &stage, &columns)
}

fn integrate_z_staged(
    problem: &FieldProblem,
    stage: &FieldStage,
    columns: &[SpaceColumn],
) -> Result<ZSolution> {
    let ids = problem.ids();
    let lag = &problem.lagrangian;
    let time = *stage.grid.axis(0);
    let mut bindings = vec![None; lag.alphabet().len()];
    // The two half-step stages of one RK4 step share their interpolated
    // arguments; cache them per time index.
    let mut mid_cache: Option<(usize, Vec<NodeArgs>)> = None;

    let z = rk4_z_values(&time, problem.z_a, |at, zv| {
        let (t, per_node): (f64, Box<dyn Fn(usize) -> NodeArgs>) = match at {
            StagePoint::Node(k) => (
                time.node(k),
                Box::new(move |ni| {
                    let col = &columns[ni];
                    (col.u[k], col.ut[k], col.ux.iter().map(|c| c[k]).collect())
                }),
            ),
            StagePoint::Midpoint(k) => {
                if mid_cache.as_ref().map(|(kk, _)| *kk) != Some(k) {
                    let cached = columns
                        .iter()
                        .map(|col| {
                            (
                                interp_midpoint(&col.u, k),
                                interp_midpoint(&col.ut, k),
                                col.ux.iter().map(|c| interp_midpoint(c, k)).collect(),
                            )
                        })
                        .collect();
                    mid_cache = Some((k, cached));
                }
                let cache = mid_cache.as_ref().unwrap().1.clone();
                (
                    time.node(k) + 0.5 * time.step(),
                    Box::new(move |ni| cache[ni].clone()),
                )
            }
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for (ni, col) in columns.iter().enumerate() {
            let (uv, utv, uxv) = per_node(ni);
            bindings[ids.t] = Some(Complex64::new(t, 0.0));
            for (slot, &c) in ids.s.iter().zip(&col.coords) {
                bindings[*slot] = Some(Complex64::new(c, 0.0));
            }
            bindings[ids.u] = Some(uv);
            bindings[ids.ut] = Some(utv);
            for (slot, v) in ids.ux.iter().zip(&uxv) {
                bindings[*slot] = Some(*v);
            }
            bindings[ids.z] = Some(zv);
            acc += lag.eval(&bindings).map_err(|e| eval_error(t, e))? * col.weight;
        }
        Ok(acc)
    })?;

    let ia = time.index_of_a();
    let ib = time.index_of_b();
    let terminal = z[ib];
    let im_diagnostic = z[ia..=ib].iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    Ok(ZSolution {
        z: SampledSignal::from_values(time, z, SignalKind::Complex)?,
        terminal,
        im_diagnostic,
    })
}

/// `λ(t) = exp(−∫_a^t ∫_Ω ∂L/∂z dⁿx dτ)` on the common time axis, with
/// `λ(a) = 1` exactly.
pub fn lambda_field(
    problem: &FieldProblem,
    u: &FieldSamples,
    z: &ZSolution,
) -> Result<SampledSignal> {
    let stage = stage_field(problem, u)?;
    let columns = space_columns(&stage);
    lambda_staged(problem, &stage, &columns, z)
}

fn lambda_staged(
    problem: &FieldProblem,
    stage: &FieldStage,
    columns: &[SpaceColumn],
    z: &ZSolution,
) -> Result<SampledSignal> {
    let time = *stage.grid.axis(0);
    if *z.z.grid() != time {
        return Err(Error::GridMismatch(
            "z was integrated on a different grid than this field".into(),
        ));
    }
    let ids = problem.ids();
    let lag = &problem.lagrangian;
    let mut bindings = vec![None; lag.alphabet().len()];
    let mut gz = Vec::with_capacity(time.len());
    for k in 0..time.len() {
        let t = time.node(k);
        let mut acc = Complex64::new(0.0, 0.0);
        for col in columns {
            bindings[ids.t] = Some(Complex64::new(t, 0.0));
            for (slot, &c) in ids.s.iter().zip(&col.coords) {
                bindings[*slot] = Some(Complex64::new(c, 0.0));
            }
            bindings[ids.u] = Some(col.u[k]);
            bindings[ids.ut] = Some(col.ut[k]);
            for (slot, cx) in ids.ux.iter().zip(&col.ux) {
                bindings[*slot] = Some(cx[k]);
            }
            bindings[ids.z] = Some(z.z.value(k));
            acc += lag
                .partial(ids.z, &bindings)
                .map_err(|e| eval_error(t, e))?
                * col.weight;
        }
        gz.push(acc);
    }
    let cum = cumulative_trapezoid(&gz, time.step(), time.index_of_a());
    let lambda = cum.iter().map(|c| (-c).exp()).collect();
    SampledSignal::from_values(time, lambda, SignalKind::Complex)
}

/// Evaluate the field Euler–Lagrange residual at every interior
/// space-time node and certify `sup |Re residual| ≤ tolerance`.
pub fn el_residual_field(
    problem: &FieldProblem,
    u: &FieldSamples,
    z: &ZSolution,
    tolerance: f64,
) -> Result<FieldELReport> {
    let stage = stage_field(problem, u)?;
    let columns = space_columns(&stage);
    let time = *stage.grid.axis(0);
    if *z.z.grid() != time {
        return Err(Error::GridMismatch(
            "z was integrated on a different grid than this field".into(),
        ));
    }
    let ids = problem.ids();
    let lag = &problem.lagrangian;
    let grid = &stage.grid;
    let dims = grid.dims();
    let strides = grid.strides();
    let naxes = grid.naxes();

    // Tabulate the density partials over the whole common grid.
    let tabulated: Result<Vec<DensityPartials>> = (0..grid.len())
        .into_par_iter()
        .map_init(
            || vec![None; lag.alphabet().len()],
            |bindings, lin| {
                let mut idx = [0usize; 3];
                for i in 0..naxes {
                    idx[i] = lin / strides[i] % dims[i];
                }
                let t = grid.axis(0).node(idx[0]);
                bindings[ids.t] = Some(Complex64::new(t, 0.0));
                for i in 0..ids.s.len() {
                    bindings[ids.s[i]] =
                        Some(Complex64::new(grid.axis(i + 1).node(idx[i + 1]), 0.0));
                }
                bindings[ids.u] = Some(stage.us.values()[lin]);
                bindings[ids.ut] = Some(stage.uts.values()[lin]);
                for (slot, samples) in ids.ux.iter().zip(&stage.uxs) {
                    bindings[*slot] = Some(samples.values()[lin]);
                }
                bindings[ids.z] = Some(z.z.value(idx[0]));
                let lu = lag.partial(ids.u, bindings).map_err(|e| eval_error(t, e))?;
                let lut = lag
                    .partial(ids.ut, bindings)
                    .map_err(|e| eval_error(t, e))?;
                let lux = ids
                    .ux
                    .iter()
                    .map(|&slot| lag.partial(slot, bindings).map_err(|e| eval_error(t, e)))
                    .collect::<Result<Vec<_>>>()?;
                let lz = lag.partial(ids.z, bindings).map_err(|e| eval_error(t, e))?;
                Ok((lu, lut, lux, lz))
            },
        )
        .collect();
    let tabulated = tabulated?;

    let lu_field = FieldSamples::from_values(
        grid.clone(),
        tabulated.iter().map(|r| r.0).collect(),
        SignalKind::Complex,
    )?;
    let lut_field = FieldSamples::from_values(
        grid.clone(),
        tabulated.iter().map(|r| r.1).collect(),
        SignalKind::Complex,
    )?;
    let lux_fields = (0..problem.nspace)
        .map(|i| {
            FieldSamples::from_values(
                grid.clone(),
                tabulated.iter().map(|r| r.2[i]).collect(),
                SignalKind::Complex,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let lz_field = FieldSamples::from_values(
        grid.clone(),
        tabulated.iter().map(|r| r.3).collect(),
        SignalKind::Complex,
    )?;

    // Spatial integral of ∂L/∂z per time node — the coupling factor.
    let coupling: Vec<Complex64> = (0..time.len())
        .map(|k| lz_field.integrate_space_core(k))
        .collect();

    // Box the flux terms; every axis loses another h of margin.
    let box_t_lut = lut_field.partial_box(0, &problem.scale)?;
    let box_x_lux = lux_fields
        .iter()
        .enumerate()
        .map(|(i, f)| f.partial_box(i + 1, &problem.scale))
        .collect::<Result<Vec<_>>>()?;

    let mut final_axes = Vec::with_capacity(naxes);
    for i in 0..naxes {
        let g = grid.axis(i);
        final_axes.push(g.shrink_both(g.nodes_for(problem.scale.h())?)?);
    }
    let final_grid = ProductGrid::new(final_axes)?;
    let lu_f = lu_field.restrict_to(&final_grid)?;
    let lut_f = lut_field.restrict_to(&final_grid)?;
    let box_t_f = box_t_lut.restrict_to(&final_grid)?;
    let box_x_f = box_x_lux
        .iter()
        .map(|f| f.restrict_to(&final_grid))
        .collect::<Result<Vec<_>>>()?;

    let f_dims = final_grid.dims();
    let f_strides = final_grid.strides();
    let t_offset = grid.axis(0).margin_left() - final_grid.axis(0).margin_left();
    let res_values: Vec<Complex64> = (0..final_grid.len())
        .map(|lin| {
            let kt = lin / f_strides[0] % f_dims[0] + t_offset;
            let mut r =
                lu_f.values()[lin] + lut_f.values()[lin] * coupling[kt] - box_t_f.values()[lin];
            for bx in &box_x_f {
                r -= bx.values()[lin];
            }
            r
        })
        .collect();
    let residual = FieldSamples::from_values(final_grid, res_values, SignalKind::Complex)?;

    let sup_norm = residual.sup_core_re();
    let sup_modulus = residual.sup_core();
    let sup_im = residual.sup_core_im();
    let lambda = lambda_staged(problem, &stage, &columns, z)?.restrict(0, 0)?;

    Ok(FieldELReport {
        residual,
        sup_norm,
        sup_modulus,
        sup_im,
        lambda,
        certified: sup_norm <= tolerance,
        tolerance,
        h: problem.scale.h(),
        im_z_max: z.im_diagnostic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::UniformGrid;

    fn problem(source: &str, nspace: usize, h: f64, z_a: Complex64) -> FieldProblem {
        let lag = LagrangianSpec::parse(source, Alphabet::field(nspace)).unwrap();
        // Any grid with the right step works for resolving h here; the ops
        // rebind per axis.
        let probe = UniformGrid::symmetric(0.0, 1.0, h, 1).unwrap();
        FieldProblem::new(
            0.0,
            1.0,
            z_a,
            nspace,
            lag,
            ScaleParams::for_grid(h, &probe).unwrap(),
        )
        .unwrap()
    }

    fn grid_1p1(step: f64, margin: usize) -> ProductGrid {
        ProductGrid::new(vec![
            UniformGrid::symmetric(0.0, 1.0, step, margin).unwrap(),
            UniformGrid::symmetric(0.0, 1.0, step, margin).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn unit_density_accumulates_spacetime_volume() {
        let u = FieldSamples::from_real_fn(grid_1p1(0.02, 4), |c| c[0] * c[1]);
        let p = problem("1", 1, 0.04, Complex64::new(0.0, 0.0));
        let z = integrate_z_field(&p, &u).unwrap();
        assert!(
            (z.terminal - Complex64::new(1.0, 0.0)).norm() <= 1e-10,
            "{}",
            z.terminal
        );
    }

    #[test]
    fn linear_density_integrates_to_half() {
        let u = FieldSamples::from_real_fn(grid_1p1(0.02, 4), |c| c[1]); // u = x
        let p = problem("u", 1, 0.04, Complex64::new(0.0, 0.0));
        let z = integrate_z_field(&p, &u).unwrap();
        assert!(
            (z.terminal - Complex64::new(0.5, 0.0)).norm() <= 1e-8,
            "{}",
            z.terminal
        );
    }

    #[test]
    fn z_coupling_grows_exponentially() {
        let u = FieldSamples::from_real_fn(grid_1p1(0.02, 4), |c| c[0] + c[1]);
        let p = problem("z", 1, 0.04, Complex64::new(1.0, 0.0));
        let z = integrate_z_field(&p, &u).unwrap();
        assert!(
            (z.terminal - Complex64::new(1.0f64.exp(), 0.0)).norm() <= 1e-8,
            "{}",
            z.terminal
        );
    }

    #[test]
    fn lambda_matches_the_analytic_exponential() {
        let u = FieldSamples::from_real_fn(grid_1p1(0.02, 4), |c| c[0] * c[1]);
        let p = problem("u^2 + z", 1, 0.04, Complex64::new(0.0, 0.0));
        let z = integrate_z_field(&p, &u).unwrap();
        let lambda = lambda_field(&p, &u, &z).unwrap();
        let ia = lambda.grid().index_of_a();
        assert_eq!(lambda.value(ia), Complex64::new(1.0, 0.0));
        for k in 0..lambda.len() {
            let t = lambda.grid().node(k);
            assert!((lambda.value(k).re - (-t).exp()).abs() <= 1e-8);
            assert!(lambda.value(k).im.abs() <= 1e-12);
        }
    }

    #[test]
    fn lambda_is_one_for_z_free_densities() {
        let u = FieldSamples::from_real_fn(grid_1p1(0.05, 2), |c| c[0] * c[1]);
        let p = problem("ut^2 - ux1^2", 1, 0.05, Complex64::new(0.0, 0.0));
        let z = integrate_z_field(&p, &u).unwrap();
        let lambda = lambda_field(&p, &u, &z).unwrap();
        for k in 0..lambda.len() {
            assert_eq!(lambda.value(k), Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn pure_u_density_has_unit_residual() {
        let u = FieldSamples::from_real_fn(grid_1p1(0.02, 6), |c| (c[0] - c[1]).sin());
        let p = problem("u", 1, 0.04, Complex64::new(0.0, 0.0));
        let z = integrate_z_field(&p, &u).unwrap();
        let report = el_residual_field(&p, &u, &z, 1e-6).unwrap();
        let vals = report.residual.values();
        assert!(vals
            .iter()
            .all(|v| (v - Complex64::new(1.0, 0.0)).norm() <= 1e-10));
        assert!(!report.certified);
    }

    #[test]
    fn affine_time_field_annihilates_the_kinetic_density() {
        // L = ut², u = t: ut ≡ 1 exactly, so □_t(2·ut) ≡ 0 to rounding.
        let u = FieldSamples::from_real_fn(grid_1p1(0.02, 6), |c| c[0]);
        let p = problem("ut^2", 1, 0.04, Complex64::new(0.0, 0.0));
        let z = integrate_z_field(&p, &u).unwrap();
        let report = el_residual_field(&p, &u, &z, 1e-6).unwrap();
        assert!(report.sup_modulus <= 1e-10, "{}", report.sup_modulus);
        assert!(report.certified);
    }

    #[test]
    fn standing_wave_certifies_against_the_wave_density() {
        // u = sin(πx)sin(πt) solves u_tt = u_xx; the h² terms of the two
        // second boxes cancel in the real part.
        let step = 0.02;
        let g = grid_1p1(step, 8);
        let pi = std::f64::consts::PI;
        let u = FieldSamples::from_real_fn(g, |c| (pi * c[1]).sin() * (pi * c[0]).sin());
        let p = problem("ut^2 - ux1^2", 1, 2.0 * step, Complex64::new(0.0, 0.0));
        let z = integrate_z_field(&p, &u).unwrap();
        let report = el_residual_field(&p, &u, &z, 0.1).unwrap();
        assert!(report.sup_norm <= 0.1, "sup re {}", report.sup_norm);
        assert!(report.certified);
        // The modulus keeps the O(h) asymmetry of the scale derivative.
        assert!(report.sup_im > report.sup_norm);
    }

    #[test]
    fn two_space_axes_are_supported() {
        let g = ProductGrid::new(vec![
            UniformGrid::symmetric(0.0, 1.0, 0.05, 2).unwrap(),
            UniformGrid::symmetric(0.0, 1.0, 0.05, 2).unwrap(),
            UniformGrid::symmetric(0.0, 1.0, 0.05, 2).unwrap(),
        ])
        .unwrap();
        let u = FieldSamples::from_real_fn(g, |c| c[1] * c[2]);
        let p = problem("u", 2, 0.05, Complex64::new(0.0, 0.0));
        let z = integrate_z_field(&p, &u).unwrap();
        // ż = ∫∫ x·y dx dy = 1/4.
        assert!(
            (z.terminal - Complex64::new(0.25, 0.0)).norm() <= 1e-8,
            "{}",
            z.terminal
        );
    }

    #[test]
    fn spatially_constant_density_reduces_to_the_scalar_problem() {
        use crate::herglotz::{integrate_z, Boundary, BoundaryPair, HerglotzProblem, Trajectory};
        let step = 0.01;
        let tg = UniformGrid::symmetric(0.0, 1.0, step, 4).unwrap();
        let fg =
            ProductGrid::new(vec![tg, UniformGrid::symmetric(0.0, 1.0, 0.02, 2).unwrap()]).unwrap();
        let u = FieldSamples::from_real_fn(fg, |c| c[0] * c[0]); // u = t²
        let fp = problem("u^2 + ut + z", 1, 0.02, Complex64::new(0.5, 0.0));
        let zf = integrate_z_field(&fp, &u).unwrap();

        let lag = LagrangianSpec::parse("x1^2 + v1 + z", Alphabet::scalar_vector(1)).unwrap();
        let sp = HerglotzProblem::new(
            0.0,
            1.0,
            Complex64::new(0.5, 0.0),
            vec![BoundaryPair {
                left: 0.0,
                right: Boundary::Fixed(1.0),
            }],
            lag,
            ScaleParams::for_grid(0.02, &tg).unwrap(),
        )
        .unwrap();
        let x = Trajectory::new(vec![SampledSignal::from_real_fn(tg, |t| t * t)]).unwrap();
        let zs = integrate_z(&sp, &x).unwrap();
        assert!(
            (zf.terminal - zs.terminal).norm() <= 1e-8,
            "{} vs {}",
            zf.terminal,
            zs.terminal
        );
    }

    #[test]
    fn margins_are_enforced_per_axis() {
        let g = ProductGrid::new(vec![
            UniformGrid::symmetric(0.0, 1.0, 0.02, 4).unwrap(),
            UniformGrid::symmetric(0.0, 1.0, 0.02, 1).unwrap(), // too thin
        ])
        .unwrap();
        let u = FieldSamples::from_real_fn(g, |c| c[0] + c[1]);
        let p = problem("ut^2 - ux1^2", 1, 0.04, Complex64::new(0.0, 0.0));
        match integrate_z_field(&p, &u) {
            Err(Error::InsufficientMargin { .. }) => {}
            other => panic!("expected InsufficientMargin, got {other:?}"),
        }
    }
}
