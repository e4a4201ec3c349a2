//! Higher-order Herglotz machinery: `ż = L(t, x, □x, …, □ⁿx, z)`.
//!
//! The necessary condition generalizes the first-order one with an
//! alternating sum,
//!
//! ```text
//! λ·∂L/∂x + Σ_{i=1..n} (−1)^i □^i( λ·∂L/∂□^i x ) = 0,
//! ```
//!
//! and, when `□^j x(b)` is left free, the boundary family
//!
//! ```text
//! Σ_{k=i..n} (−1)^{k−i} □^{k−i}( λ·∂L/∂□^k x )(b) = 0   for i = j+1.
//! ```
//!
//! Unlike the first-order form, λ stays *inside* the iterated box
//! derivatives: the product rule that would pull it out is not available
//! at finite `h`, so the residual is evaluated exactly as stated.
//!
//! The expression alphabet is `t, x1, v1_1..v1_n, z`, where `v1_k` means
//! `□^k x` (and plain `v1` aliases `v1_1`).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::expr::Alphabet;
use crate::grid::UniformGrid;
use crate::herglotz::{
    eval_error, rk4_z_values, Boundary, BoundaryPair, ELReport, StagePoint, Trajectory, ZSolution,
};
use crate::lagrangian::LagrangianSpec;
use crate::numerics::{cumulative_trapezoid, interp_midpoint, trapezoid};
use crate::scale::{box_h_derivative, higher_order_box, ScaleParams};
use crate::signal::{SampledSignal, SignalKind};

/// A scalar Herglotz problem of order `n`: boundary entry `i ∈ {0..n−1}`
/// pins `□^i x(a)` on the left and fixes or frees `□^i x(b)` on the right.
#[derive(Debug, Clone)]
pub struct HigherOrderProblem {
    a: f64,
    b: f64,
    z_a: Complex64,
    order: usize,
    boundary: Vec<BoundaryPair>,
    lagrangian: LagrangianSpec,
    scale: ScaleParams,
}

impl HigherOrderProblem {
    pub fn new(
        a: f64,
        b: f64,
        z_a: Complex64,
        boundary: Vec<BoundaryPair>,
        lagrangian: LagrangianSpec,
        scale: ScaleParams,
    ) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidParameter(format!(
                "interval [{a}, {b}] must be finite with a < b"
            )));
        }
        let order = boundary.len();
        if order == 0 {
            return Err(Error::InvalidParameter(
                "order must be at least one (one boundary pair per derivative order)".into(),
            ));
        }
        for (i, pair) in boundary.iter().enumerate() {
            let right_ok = match pair.right {
                Boundary::Fixed(v) => v.is_finite(),
                Boundary::Free => true,
            };
            if !pair.left.is_finite() || !right_ok {
                return Err(Error::InvalidParameter(format!(
                    "boundary values for derivative order {i} must be finite"
                )));
            }
        }
        let expected = Alphabet::higher_order(order);
        let got = lagrangian.alphabet();
        let matches = got.len() == expected.len()
            && (0..expected.len()).all(|id| got.name(id) == expected.name(id));
        if !matches {
            return Err(Error::Schema(format!(
                "Lagrangian alphabet does not match an order-{order} problem"
            )));
        }
        Ok(HigherOrderProblem {
            a,
            b,
            z_a,
            order,
            boundary,
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

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn boundary(&self) -> &[BoundaryPair] {
        &self.boundary
    }

    pub fn lagrangian(&self) -> &LagrangianSpec {
        &self.lagrangian
    }

    pub fn scale(&self) -> &ScaleParams {
        &self.scale
    }

    /// Boundary indices `j` whose `□^j x(b)` is free, ascending.
    pub fn free_orders(&self) -> Vec<usize> {
        self.boundary
            .iter()
            .enumerate()
            .filter(|(_, p)| p.right == Boundary::Free)
            .map(|(j, _)| j)
            .collect()
    }

    fn ids(&self) -> HoIds {
        let alphabet = self.lagrangian.alphabet();
        HoIds {
            t: alphabet.index_of("t").unwrap(),
            x: alphabet.index_of("x1").unwrap(),
            v: (1..=self.order)
                .map(|k| alphabet.index_of(&format!("v1_{k}")).unwrap())
                .collect(),
            z: alphabet.index_of("z").unwrap(),
        }
    }
}

struct HoIds {
    t: usize,
    x: usize,
    v: Vec<usize>,
    z: usize,
}

/// Node samples on the common grid (trajectory margins shrunk by `n·h`):
/// `x` and every `□^k x`, `k = 1..n`.
struct HoSamples {
    grid: UniformGrid,
    scale: ScaleParams,
    ts: Vec<f64>,
    xs: Vec<Complex64>,
    vs: Vec<Vec<Complex64>>,
}

fn sample_ho(problem: &HigherOrderProblem, x: &Trajectory) -> Result<HoSamples> {
    if x.dimension() != 1 {
        return Err(Error::InvalidParameter(format!(
            "higher-order problems are scalar; trajectory has {} components",
            x.dimension()
        )));
    }
    let full = *x.grid();
    if (full.a() - problem.a).abs() > 1e-9 * full.step()
        || (full.b() - problem.b).abs() > 1e-9 * full.step()
    {
        return Err(Error::GridMismatch(format!(
            "trajectory core [{}, {}] does not match the problem interval [{}, {}]",
            full.a(),
            full.b(),
            problem.a,
            problem.b
        )));
    }
    let scale = problem.scale.rebind(&full)?;
    let p = scale.h_nodes();
    let n = problem.order;
    let signal = x.component(0);
    let mut vs = Vec::with_capacity(n);
    for k in 1..=n {
        let boxed = higher_order_box(signal, k, &scale)?;
        let trim = (n - k) * p;
        vs.push(boxed.values()[trim..boxed.len() - trim].to_vec());
    }
    let grid = full.shrink_both(n * p)?;
    let xs = signal.values()[n * p..signal.len() - n * p].to_vec();
    let ts = (0..grid.len()).map(|k| grid.node(k)).collect();
    Ok(HoSamples {
        grid,
        scale,
        ts,
        xs,
        vs,
    })
}

impl HoSamples {
    fn bind_node(&self, ids: &HoIds, k: usize, bindings: &mut [Option<Complex64>]) {
        bindings[ids.t] = Some(Complex64::new(self.ts[k], 0.0));
        bindings[ids.x] = Some(self.xs[k]);
        for (order, slot) in ids.v.iter().enumerate() {
            bindings[*slot] = Some(self.vs[order][k]);
        }
    }

    fn bind_midpoint(&self, ids: &HoIds, k: usize, bindings: &mut [Option<Complex64>]) {
        bindings[ids.t] = Some(Complex64::new(self.ts[k] + 0.5 * self.grid.step(), 0.0));
        bindings[ids.x] = Some(interp_midpoint(&self.xs, k));
        for (order, slot) in ids.v.iter().enumerate() {
            bindings[*slot] = Some(interp_midpoint(&self.vs[order], k));
        }
    }
}

/// Integrate `ż = L(t, x, □x, …, □ⁿx, z)` from `z(a) = z_a` by RK4 at the
/// grid step, with `□^k x` precomputed by iterated box derivatives.
pub fn integrate_z_ho(problem: &HigherOrderProblem, x: &Trajectory) -> Result<ZSolution> {
    let ns = sample_ho(problem, x)?;
    let ids = problem.ids();
    let lag = &problem.lagrangian;
    let mut bindings = vec![None; lag.alphabet().len()];
    let z = rk4_z_values(&ns.grid, problem.z_a, |at, zv| {
        match at {
            StagePoint::Node(k) => ns.bind_node(&ids, k, &mut bindings),
            StagePoint::Midpoint(k) => ns.bind_midpoint(&ids, k, &mut bindings),
        }
        bindings[ids.z] = Some(zv);
        let t = bindings[ids.t].unwrap().re;
        lag.eval(&bindings).map_err(|e| eval_error(t, e))
    })?;
    let ia = ns.grid.index_of_a();
    let ib = ns.grid.index_of_b();
    let terminal = z[ib];
    let im_diagnostic = z[ia..=ib].iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    Ok(ZSolution {
        z: SampledSignal::from_values(ns.grid, z, SignalKind::Complex)?,
        terminal,
        im_diagnostic,
    })
}

/// Tabulated ingredients shared by the residual and transversality sums:
/// λ and the weighted partials `q_k = λ·∂L/∂□^k x` on the common grid.
struct HoTerms {
    ns: HoSamples,
    lambda: Vec<Complex64>,
    lx: Vec<Complex64>,
    qs: Vec<Vec<Complex64>>,
}

fn ho_terms(problem: &HigherOrderProblem, x: &Trajectory, z: &ZSolution) -> Result<HoTerms> {
    let ns = sample_ho(problem, x)?;
    if *z.z.grid() != ns.grid {
        return Err(Error::GridMismatch(
            "z was integrated on a different grid than this trajectory".into(),
        ));
    }
    let ids = problem.ids();
    let lag = &problem.lagrangian;
    let n = ns.grid.len();
    let mut bindings = vec![None; lag.alphabet().len()];

    let mut lz = Vec::with_capacity(n);
    let mut lx = Vec::with_capacity(n);
    let mut partials: Vec<Vec<Complex64>> = vec![Vec::with_capacity(n); problem.order];
    for k in 0..n {
        ns.bind_node(&ids, k, &mut bindings);
        bindings[ids.z] = Some(z.z.value(k));
        lz.push(
            lag.partial(ids.z, &bindings)
                .map_err(|e| eval_error(ns.ts[k], e))?,
        );
        lx.push(
            lag.partial(ids.x, &bindings)
                .map_err(|e| eval_error(ns.ts[k], e))?,
        );
        for (order, slot) in ids.v.iter().enumerate() {
            partials[order].push(
                lag.partial(*slot, &bindings)
                    .map_err(|e| eval_error(ns.ts[k], e))?,
            );
        }
    }
    let cum = cumulative_trapezoid(&lz, ns.grid.step(), ns.grid.index_of_a());
    let lambda: Vec<Complex64> = cum.iter().map(|c| (-c).exp()).collect();
    let qs = partials
        .into_iter()
        .map(|pv| {
            pv.iter()
                .zip(&lambda)
                .map(|(p, l)| p * l)
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(HoTerms { ns, lambda, lx, qs })
}

/// Evaluate the alternating-sum Euler–Lagrange residual and certify it
/// against `tolerance` (see [`ELReport`] for the norms used).
pub fn el_residual_ho(
    problem: &HigherOrderProblem,
    x: &Trajectory,
    z: &ZSolution,
    tolerance: f64,
) -> Result<ELReport> {
    let terms = ho_terms(problem, x, z)?;
    let ns = &terms.ns;
    let p = ns.scale.h_nodes();
    let n = problem.order;

    // Each summand □^i(q_i) loses i·h of margin; slice everything to the
    // tightest grid (total 2n·h consumed from the trajectory margins).
    let final_grid = ns.grid.shrink_both(n * p)?;
    let m = final_grid.len();
    let offset = n * p;
    let mut res_vals: Vec<Complex64> = (0..m)
        .map(|k| terms.lambda[k + offset] * terms.lx[k + offset])
        .collect();
    for i in 1..=n {
        let q_sig =
            SampledSignal::from_values(ns.grid, terms.qs[i - 1].clone(), SignalKind::Complex)?;
        let boxed = higher_order_box(&q_sig, i, &ns.scale)?;
        let trim = (n - i) * p;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        for (k, r) in res_vals.iter_mut().enumerate() {
            *r += sign * boxed.value(k + trim);
        }
    }
    let res =
        SampledSignal::from_values(final_grid, res_vals, SignalKind::Complex)?.restrict(0, 0)?;

    let sup_norms = vec![res.sup_core_re()];
    let sup_modulus = vec![res.sup_core()];
    let sup_im = vec![res.sup_core_im()];

    let transversality = transversality_values(problem, &terms)?;
    let certified = sup_norms.iter().all(|&s| s <= tolerance)
        && transversality.iter().all(|t| t.norm() <= tolerance);

    // Barrow defect of the first-order integrand □(q_1), as in the
    // first-order report.
    let q1 = SampledSignal::from_values(ns.grid, terms.qs[0].clone(), SignalKind::Complex)?;
    let box_q1 = box_h_derivative(&q1, &ns.scale)?.restrict(0, 0)?;
    let quad = trapezoid(box_q1.values(), ns.grid.step());
    let ia = ns.grid.index_of_a();
    let ib = ns.grid.index_of_b();
    let barrow = (quad - (terms.qs[0][ib] - terms.qs[0][ia])).norm();

    let lambda_sig =
        SampledSignal::from_values(ns.grid, terms.lambda.clone(), SignalKind::Complex)?
            .restrict(0, 0)?;

    Ok(ELReport {
        residual: vec![res],
        sup_norms,
        sup_modulus,
        sup_im,
        lambda: lambda_sig,
        transversality,
        certified,
        tolerance,
        h: ns.scale.h(),
        step: ns.grid.step(),
        im_z_max: z.im_diagnostic,
        barrow_defect: vec![barrow],
    })
}

fn transversality_values(problem: &HigherOrderProblem, terms: &HoTerms) -> Result<Vec<Complex64>> {
    let ns = &terms.ns;
    let ib = ns.grid.index_of_b();
    let n = problem.order;
    let mut out = Vec::new();
    for j in problem.free_orders() {
        // Freeing □^j x(b) activates the family member i = j + 1.
        let i = j + 1;
        let mut total = Complex64::new(0.0, 0.0);
        for k in i..=n {
            let reach = k - i;
            let term = if reach == 0 {
                terms.qs[k - 1][ib]
            } else {
                let q_sig = SampledSignal::from_values(
                    ns.grid,
                    terms.qs[k - 1].clone(),
                    SignalKind::Complex,
                )?;
                let boxed = higher_order_box(&q_sig, reach, &ns.scale)?;
                let shift = reach * ns.scale.h_nodes();
                boxed.value(ib - shift)
            };
            let sign = if reach % 2 == 0 { 1.0 } else { -1.0 };
            total += sign * term;
        }
        out.push(total);
    }
    Ok(out)
}

/// The boundary family of the free right endpoints: for each free
/// `□^j x(b)`, the value `Σ_{k=j+1..n} (−1)^{k−j−1} □^{k−j−1}(λ·∂L/∂□^k x)(b)`.
pub fn transversality_ho(
    problem: &HigherOrderProblem,
    x: &Trajectory,
    z: &ZSolution,
) -> Result<Vec<Complex64>> {
    if problem.free_orders().is_empty() {
        return Err(Error::NoFreeBoundary);
    }
    let terms = ho_terms(problem, x, z)?;
    transversality_values(problem, &terms)
}
