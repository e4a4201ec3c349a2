//! First-order Herglotz machinery on sampled trajectories.
//!
//! A problem couples a trajectory `x : [a,b] → ℝⁿ` to the terminal value
//! `z(b)` of the driven ODE `ż = L(t, x, □x, z)`, `z(a) = z_a`. This
//! module integrates `z`, computes the weight `λ(t) = exp(−∫ ∂L/∂z)`,
//! and evaluates the Euler–Lagrange residual
//!
//! ```text
//! □(∂L/∂□x_i) − ∂L/∂x_i − (∂L/∂z)·(∂L/∂□x_i)
//! ```
//!
//! along a candidate trajectory, plus the transversality values
//! `∂L/∂□x_i(b)` for coordinates whose right endpoint is free. A residual
//! that vanishes as `h → 0` is the necessary condition for `x` to
//! extremize `z(b)`.
//!
//! Everything here evaluates complex scale derivatives, so residuals and
//! `z` carry imaginary parts of order `h` whenever the trajectory bends;
//! reports keep `sup |Re·|` (which converges at the discretization rate
//! and is what certification checks) separate from the modulus and
//! imaginary-part diagnostics.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::Alphabet;
use crate::grid::UniformGrid;
use crate::lagrangian::LagrangianSpec;
use crate::numerics::{cumulative_trapezoid, interp_midpoint, trapezoid};
use crate::scale::{box_h_derivative, ScaleParams};
use crate::signal::{SampledSignal, SignalKind};

/// Right-endpoint condition for one coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    Fixed(f64),
    Free,
}

/// Boundary data for one coordinate: `x_i(a)` is always pinned, `x_i(b)`
/// may be free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPair {
    pub left: f64,
    pub right: Boundary,
}

/// A first-order scale Herglotz problem.
#[derive(Debug, Clone)]
pub struct HerglotzProblem {
    a: f64,
    b: f64,
    z_a: Complex64,
    boundary: Vec<BoundaryPair>,
    lagrangian: LagrangianSpec,
    scale: ScaleParams,
}

impl HerglotzProblem {
    /// Build a problem over `[a, b]` with one boundary pair per coordinate.
    /// The Lagrangian must use the alphabet `t, x1..xn, v1..vn, z`.
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
        if boundary.is_empty() {
            return Err(Error::InvalidParameter(
                "problem needs at least one coordinate".into(),
            ));
        }
        for (i, pair) in boundary.iter().enumerate() {
            let right_ok = match pair.right {
                Boundary::Fixed(v) => v.is_finite(),
                Boundary::Free => true,
            };
            if !pair.left.is_finite() || !right_ok {
                return Err(Error::InvalidParameter(format!(
                    "boundary values for coordinate {} must be finite",
                    i + 1
                )));
            }
        }
        let expected = Alphabet::scalar_vector(boundary.len());
        let got = lagrangian.alphabet();
        let matches = got.len() == expected.len()
            && (0..expected.len()).all(|id| got.name(id) == expected.name(id));
        if !matches {
            return Err(Error::Schema(format!(
                "Lagrangian alphabet does not match a {}-dimensional problem",
                boundary.len()
            )));
        }
        Ok(HerglotzProblem {
            a,
            b,
            z_a,
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

    pub fn dimension(&self) -> usize {
        self.boundary.len()
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

    /// Indices of the coordinates whose right endpoint is free.
    pub fn free_coordinates(&self) -> Vec<usize> {
        self.boundary
            .iter()
            .enumerate()
            .filter(|(_, p)| p.right == Boundary::Free)
            .map(|(i, _)| i)
            .collect()
    }

    /// Write the fixed boundary values into the trajectory nodes exactly.
    /// Residual certification assumes boundaries hold to the bit, so this
    /// runs before any variational computation that may have perturbed them.
    pub fn enforce_boundaries(&self, x: &mut Trajectory) {
        let ia = x.grid().index_of_a();
        let ib = x.grid().index_of_b();
        for (i, pair) in self.boundary.iter().enumerate() {
            let values = x.components[i].values_mut();
            values[ia] = Complex64::new(pair.left, 0.0);
            if let Boundary::Fixed(v) = pair.right {
                values[ib] = Complex64::new(v, 0.0);
            }
        }
    }

    pub(crate) fn ids(&self) -> ScalarIds {
        let alphabet = self.lagrangian.alphabet();
        let n = self.boundary.len();
        ScalarIds {
            t: alphabet.index_of("t").unwrap(),
            x: (1..=n)
                .map(|i| alphabet.index_of(&format!("x{i}")).unwrap())
                .collect(),
            v: (1..=n)
                .map(|i| alphabet.index_of(&format!("v{i}")).unwrap())
                .collect(),
            z: alphabet.index_of("z").unwrap(),
        }
    }
}

/// Resolved alphabet slots for the scalar/vector problem.
pub(crate) struct ScalarIds {
    pub t: usize,
    pub x: Vec<usize>,
    pub v: Vec<usize>,
    pub z: usize,
}

/// A candidate trajectory: one real-valued signal per coordinate, all on
/// the same grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    components: Vec<SampledSignal>,
}

impl Trajectory {
    pub fn new(components: Vec<SampledSignal>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidParameter("trajectory needs a component".into()))?
            .clone();
        for c in &components {
            if c.kind() != SignalKind::Real {
                return Err(Error::InvalidParameter(
                    "trajectory components must be real-valued".into(),
                ));
            }
            first.check_same_grid(c)?;
        }
        Ok(Trajectory { components })
    }

    pub fn components(&self) -> &[SampledSignal] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &SampledSignal {
        &self.components[i]
    }

    pub(crate) fn components_mut(&mut self) -> &mut [SampledSignal] {
        &mut self.components
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn grid(&self) -> &UniformGrid {
        self.components[0].grid()
    }
}

/// The integrated `z` along a trajectory. The signal lives on the common
/// grid of the box derivatives (trajectory margins shrunk by `h` on each
/// side, which still covers `[a−h, b+h]` whenever residuals are wanted),
/// so downstream residual evaluations can read `z` on margin nodes.
#[derive(Debug, Clone)]
pub struct ZSolution {
    pub z: SampledSignal,
    /// `z(b)` — the quantity the variational principle extremizes.
    pub terminal: Complex64,
    /// `max |Im z|` over `[a, b]`: the price of the complex scale
    /// derivative along this trajectory.
    pub im_diagnostic: f64,
}

/// Euler–Lagrange residual report for one trajectory.
#[derive(Debug, Clone)]
pub struct ELReport {
    /// Complex residual per coordinate, restricted to `[a, b]`.
    pub residual: Vec<SampledSignal>,
    /// `sup |Re residual_i|` over `[a, b]` — the certification norm; the
    /// real part converges at the discretization rate while the modulus
    /// carries the intrinsic `O(h)` asymmetry term.
    pub sup_norms: Vec<f64>,
    /// `sup |residual_i|` (modulus) — diagnostic and refinement metric.
    pub sup_modulus: Vec<f64>,
    /// `sup |Im residual_i|` — diagnostic.
    pub sup_im: Vec<f64>,
    /// The weight `λ(t) = exp(−∫_a^t ∂L/∂z)`, restricted to `[a, b]`.
    pub lambda: SampledSignal,
    /// `∂L/∂□x_i(b)` for each free coordinate, in coordinate order.
    pub transversality: Vec<Complex64>,
    /// True iff every `sup_norms` entry and every `|transversality|`
    /// entry is at most `tolerance`.
    pub certified: bool,
    pub tolerance: f64,
    pub h: f64,
    pub step: f64,
    /// `max |Im z|` carried over from the z-solution.
    pub im_z_max: f64,
    /// Per-coordinate defect of the discrete Barrow identity for
    /// `□(λ·∂L/∂□x_i)`: |trapezoid of the box derivative − boundary
    /// difference|. The limit condition behind the integral identity is
    /// not checkable from samples; this records the analogous defect at
    /// the working `h` without claiming the condition holds.
    pub barrow_defect: Vec<f64>,
}

/// Node-aligned samples shared by the operations: the common grid (the
/// trajectory grid shrunk by `h_nodes`), with `x_i` and `v_i = □x_i`
/// tabulated on it.
pub(crate) struct NodeSamples {
    pub grid: UniformGrid,
    pub scale: ScaleParams,
    pub ts: Vec<f64>,
    pub xs: Vec<Vec<Complex64>>,
    pub vs: Vec<Vec<Complex64>>,
}

pub(crate) fn sample_nodes(problem: &HerglotzProblem, x: &Trajectory) -> Result<NodeSamples> {
    if x.dimension() != problem.dimension() {
        return Err(Error::InvalidParameter(format!(
            "trajectory has {} components but the problem has dimension {}",
            x.dimension(),
            problem.dimension()
        )));
    }
    let full = *x.grid();
    if !(full.a() - problem.a).abs().le(&(1e-9 * full.step()))
        || !(full.b() - problem.b).abs().le(&(1e-9 * full.step()))
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
    let mut xs = Vec::with_capacity(x.dimension());
    let mut vs = Vec::with_capacity(x.dimension());
    let mut grid = None;
    for c in x.components() {
        let v = box_h_derivative(c, &scale)?;
        grid = Some(*v.grid());
        xs.push(c.values()[p..c.len() - p].to_vec());
        vs.push(v.values().to_vec());
    }
    let grid = grid.unwrap();
    let ts = (0..grid.len()).map(|k| grid.node(k)).collect();
    Ok(NodeSamples {
        grid,
        scale,
        ts,
        xs,
        vs,
    })
}

impl NodeSamples {
    /// Fill the evaluation slots for node `k` (everything except `z`).
    pub fn bind_node(&self, ids: &ScalarIds, k: usize, bindings: &mut [Option<Complex64>]) {
        bindings[ids.t] = Some(Complex64::new(self.ts[k], 0.0));
        for i in 0..self.xs.len() {
            bindings[ids.x[i]] = Some(self.xs[i][k]);
            bindings[ids.v[i]] = Some(self.vs[i][k]);
        }
    }

    /// Fill the slots for the midpoint between nodes `k` and `k+1`,
    /// interpolating `x` and `v` cubically.
    pub fn bind_midpoint(&self, ids: &ScalarIds, k: usize, bindings: &mut [Option<Complex64>]) {
        bindings[ids.t] = Some(Complex64::new(self.ts[k] + 0.5 * self.grid.step(), 0.0));
        for i in 0..self.xs.len() {
            bindings[ids.x[i]] = Some(interp_midpoint(&self.xs[i], k));
            bindings[ids.v[i]] = Some(interp_midpoint(&self.vs[i], k));
        }
    }
}

pub(crate) fn eval_error(t: f64, err: Error) -> Error {
    match err {
        Error::DomainError(msg) => {
            Error::EvaluationError(format!("Lagrangian undefined near t = {t:.6}: {msg}"))
        }
        other => other,
    }
}

/// Where an RK4 stage asks for the right-hand side: a grid node, or the
/// midpoint between node `k` and node `k+1`.
#[derive(Debug, Clone, Copy)]
pub(crate) enum StagePoint {
    Node(usize),
    Midpoint(usize),
}

/// Classical RK4 for `ż = f(t, z)` at the grid step, seeded with `z_a` at
/// the node of `a`, marching forward to the last node and backward to the
/// first so margin nodes carry values too.
pub(crate) fn rk4_z_values(
    grid: &UniformGrid,
    z_a: Complex64,
    mut rhs: impl FnMut(StagePoint, Complex64) -> Result<Complex64>,
) -> Result<Vec<Complex64>> {
    let n = grid.len();
    let ia = grid.index_of_a();
    let s = grid.step();
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    z[ia] = z_a;
    for k in ia..n - 1 {
        let k1 = rhs(StagePoint::Node(k), z[k])?;
        let k2 = rhs(StagePoint::Midpoint(k), z[k] + 0.5 * s * k1)?;
        let k3 = rhs(StagePoint::Midpoint(k), z[k] + 0.5 * s * k2)?;
        let k4 = rhs(StagePoint::Node(k + 1), z[k] + s * k3)?;
        z[k + 1] = z[k] + (s / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    for k in (1..=ia).rev() {
        let k1 = rhs(StagePoint::Node(k), z[k])?;
        let k2 = rhs(StagePoint::Midpoint(k - 1), z[k] - 0.5 * s * k1)?;
        let k3 = rhs(StagePoint::Midpoint(k - 1), z[k] - 0.5 * s * k2)?;
        let k4 = rhs(StagePoint::Node(k - 1), z[k] - s * k3)?;
        z[k - 1] = z[k] - (s / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    Ok(z)
}

/// Integrate `ż = L(t, x, □x, z)` from `z(a) = z_a` with classical RK4 at
/// the grid step, forward to the right end of the common grid and backward
/// to its left end, so margin nodes carry `z` values too. Half-step values
/// of `x` and `□x` come from cubic interpolation of the node samples.
pub fn integrate_z(problem: &HerglotzProblem, x: &Trajectory) -> Result<ZSolution> {
    let ns = sample_nodes(problem, x)?;
    integrate_z_sampled(problem, &ns)
}

pub(crate) fn integrate_z_sampled(
    problem: &HerglotzProblem,
    ns: &NodeSamples,
) -> Result<ZSolution> {
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

/// The weight `λ(t) = exp(−∫_a^t ∂L/∂z dτ)` on the common grid, by
/// cumulative trapezoid quadrature anchored at `a` (so `λ(a) = 1` exactly).
pub fn lambda_weight(
    problem: &HerglotzProblem,
    x: &Trajectory,
    z: &ZSolution,
) -> Result<SampledSignal> {
    let ns = sample_nodes(problem, x)?;
    lambda_weight_sampled(problem, &ns, z)
}

pub(crate) fn lambda_weight_sampled(
    problem: &HerglotzProblem,
    ns: &NodeSamples,
    z: &ZSolution,
) -> Result<SampledSignal> {
    if *z.z.grid() != ns.grid {
        return Err(Error::GridMismatch(
            "z was integrated on a different grid than this trajectory".into(),
        ));
    }
    let ids = problem.ids();
    let lag = &problem.lagrangian;
    let mut bindings = vec![None; lag.alphabet().len()];
    let mut lz = Vec::with_capacity(ns.grid.len());
    for k in 0..ns.grid.len() {
        ns.bind_node(&ids, k, &mut bindings);
        bindings[ids.z] = Some(z.z.value(k));
        lz.push(
            lag.partial(ids.z, &bindings)
                .map_err(|e| eval_error(ns.ts[k], e))?,
        );
    }
    let cum = cumulative_trapezoid(&lz, ns.grid.step(), ns.grid.index_of_a());
    let lambda = cum.iter().map(|c| (-c).exp()).collect();
    SampledSignal::from_values(ns.grid, lambda, SignalKind::Complex)
}

/// Evaluate the Euler–Lagrange residual of a candidate trajectory and
/// certify it against `tolerance` (on `sup |Re residual|` and the
/// transversality moduli).
pub fn el_residual(
    problem: &HerglotzProblem,
    x: &Trajectory,
    z: &ZSolution,
    tolerance: f64,
) -> Result<ELReport> {
    let ns = sample_nodes(problem, x)?;
    let lambda = lambda_weight_sampled(problem, &ns, z)?;
    let ids = problem.ids();
    let lag = &problem.lagrangian;
    let p = ns.scale.h_nodes();
    let n = ns.grid.len();

    // Tabulate the three partials along the trajectory once, per coordinate.
    let per_coord: Vec<Result<(Vec<Complex64>, Vec<Complex64>)>> = (0..problem.dimension())
        .into_par_iter()
        .map(|i| {
            let mut bindings = vec![None; lag.alphabet().len()];
            let mut pvals = Vec::with_capacity(n);
            let mut lx = Vec::with_capacity(n);
            for k in 0..n {
                ns.bind_node(&ids, k, &mut bindings);
                bindings[ids.z] = Some(z.z.value(k));
                pvals.push(
                    lag.partial(ids.v[i], &bindings)
                        .map_err(|e| eval_error(ns.ts[k], e))?,
                );
                lx.push(
                    lag.partial(ids.x[i], &bindings)
                        .map_err(|e| eval_error(ns.ts[k], e))?,
                );
            }
            Ok((pvals, lx))
        })
        .collect();

    let mut bindings = vec![None; lag.alphabet().len()];
    let mut lz = Vec::with_capacity(n);
    for k in 0..n {
        ns.bind_node(&ids, k, &mut bindings);
        bindings[ids.z] = Some(z.z.value(k));
        lz.push(
            lag.partial(ids.z, &bindings)
                .map_err(|e| eval_error(ns.ts[k], e))?,
        );
    }

    let mut residual = Vec::with_capacity(problem.dimension());
    let mut sup_norms = Vec::with_capacity(problem.dimension());
    let mut sup_modulus = Vec::with_capacity(problem.dimension());
    let mut sup_im = Vec::with_capacity(problem.dimension());
    let mut transversality = Vec::new();
    let mut barrow_defect = Vec::with_capacity(problem.dimension());
    let ib = ns.grid.index_of_b();

    for (i, entry) in per_coord.into_iter().enumerate() {
        let (pvals, lx) = entry?;
        let p_sig = SampledSignal::from_values(ns.grid, pvals.clone(), SignalKind::Complex)?;
        let box_p = box_h_derivative(&p_sig, &ns.scale)?;
        let mut res_vals = Vec::with_capacity(box_p.len());
        for kk in 0..box_p.len() {
            let k = kk + p;
            res_vals.push(box_p.value(kk) - lx[k] - lz[k] * pvals[k]);
        }
        let res = SampledSignal::from_values(*box_p.grid(), res_vals, SignalKind::Complex)?
            .restrict(0, 0)?;
        sup_norms.push(res.sup_core_re());
        sup_modulus.push(res.sup_core());
        sup_im.push(res.sup_core_im());
        residual.push(res);

        if problem.boundary[i].right == Boundary::Free {
            transversality.push(pvals[ib]);
        }

        // Barrow defect of □(λ·p_i): quadrature of the box derivative at
        // the grid step against the boundary difference over [a, b].
        let weighted: Vec<Complex64> = pvals
            .iter()
            .zip(lambda.values())
            .map(|(pv, lv)| pv * lv)
            .collect();
        let w_sig = SampledSignal::from_values(ns.grid, weighted.clone(), SignalKind::Complex)?;
        let box_w = box_h_derivative(&w_sig, &ns.scale)?;
        let core = box_w.restrict(0, 0)?;
        let quad = trapezoid(core.values(), ns.grid.step());
        let ia = ns.grid.index_of_a();
        barrow_defect.push((quad - (weighted[ib] - weighted[ia])).norm());
    }

    let certified = sup_norms.iter().all(|&s| s <= tolerance)
        && transversality.iter().all(|t| t.norm() <= tolerance);

    Ok(ELReport {
        residual,
        sup_norms,
        sup_modulus,
        sup_im,
        lambda: lambda.restrict(0, 0)?,
        transversality,
        certified,
        tolerance,
        h: ns.scale.h(),
        step: ns.grid.step(),
        im_z_max: z.im_diagnostic,
        barrow_defect,
    })
}

/// `∂L/∂□x_i(b)` for every free coordinate, in coordinate order.
pub fn transversality_residual(
    problem: &HerglotzProblem,
    x: &Trajectory,
    z: &ZSolution,
) -> Result<Vec<Complex64>> {
    let free = problem.free_coordinates();
    if free.is_empty() {
        return Err(Error::NoFreeBoundary);
    }
    let ns = sample_nodes(problem, x)?;
    if *z.z.grid() != ns.grid {
        return Err(Error::GridMismatch(
            "z was integrated on a different grid than this trajectory".into(),
        ));
    }
    let ids = problem.ids();
    let ib = ns.grid.index_of_b();
    let mut bindings = vec![None; problem.lagrangian.alphabet().len()];
    ns.bind_node(&ids, ib, &mut bindings);
    bindings[ids.z] = Some(z.z.value(ib));
    free.iter()
        .map(|&i| {
            problem
                .lagrangian
                .partial(ids.v[i], &bindings)
                .map_err(|e| eval_error(problem.b, e))
        })
        .collect()
}

/// For a z-free Lagrangian, compare the integrated terminal value against
/// the classical reduction `z(b) = ∫_a^b L dt + z_a` (trapezoid over the
/// same node samples). Returns the modulus of the difference.
pub fn classical_reduction_check(problem: &HerglotzProblem, x: &Trajectory) -> Result<f64> {
    if !problem.lagrangian.is_z_free() {
        return Err(Error::NotZFree(
            "∂L/∂z is not identically zero, so the classical reduction does not apply".into(),
        ));
    }
    let ns = sample_nodes(problem, x)?;
    let z = integrate_z_sampled(problem, &ns)?;
    let ids = problem.ids();
    let mut bindings = vec![None; problem.lagrangian.alphabet().len()];
    let ia = ns.grid.index_of_a();
    let ib = ns.grid.index_of_b();
    let mut lvals = Vec::with_capacity(ib - ia + 1);
    for k in ia..=ib {
        ns.bind_node(&ids, k, &mut bindings);
        bindings[ids.z] = Some(Complex64::new(0.0, 0.0));
        lvals.push(
            problem
                .lagrangian
                .eval(&bindings)
                .map_err(|e| eval_error(ns.ts[k], e))?,
        );
    }
    let quad = trapezoid(&lvals, ns.grid.step()) + problem.z_a;
    Ok((z.terminal - quad).norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(step: f64, margin: usize) -> UniformGrid {
        UniformGrid::symmetric(0.0, 1.0, step, margin).unwrap()
    }

    fn scalar_problem(
        source: &str,
        right: Boundary,
        z_a: Complex64,
        g: &UniformGrid,
    ) -> HerglotzProblem {
        let lag = LagrangianSpec::parse(source, Alphabet::scalar_vector(1)).unwrap();
        HerglotzProblem::new(
            0.0,
            1.0,
            z_a,
            vec![BoundaryPair { left: 0.0, right }],
            lag,
            ScaleParams::for_grid(0.02, g).unwrap(),
        )
        .unwrap()
    }

    fn line(g: UniformGrid) -> Trajectory {
        Trajectory::new(vec![SampledSignal::from_real_fn(g, |t| t)]).unwrap()
    }

    #[test]
    fn z_of_constant_lagrangian_stays_put() {
        let g = grid(0.01, 4);
        let problem = scalar_problem("0", Boundary::Fixed(1.0), Complex64::new(2.0, 0.5), &g);
        let z = integrate_z(&problem, &line(g)).unwrap();
        assert_eq!(z.terminal, Complex64::new(2.0, 0.5));
        for k in 0..z.z.len() {
            assert_eq!(z.z.value(k), Complex64::new(2.0, 0.5));
        }
    }

    #[test]
    fn z_of_box_speed_recovers_the_length() {
        // L = v1 along x(t) = t: □x ≡ 1 exactly, so Re z(b) = 1.
        let g = grid(0.01, 4);
        let problem = scalar_problem("v1", Boundary::Fixed(1.0), Complex64::new(0.0, 0.0), &g);
        let z = integrate_z(&problem, &line(g)).unwrap();
        assert!((z.terminal.re - 1.0).abs() <= 1e-10, "{}", z.terminal);
        assert!(z.im_diagnostic <= 1e-12);
    }

    #[test]
    fn z_feedback_grows_exponentially() {
        // ż = z, z(0) = 1 → z(1) = e, independent of the trajectory.
        let g = grid(0.01, 4);
        let problem = scalar_problem("z", Boundary::Fixed(1.0), Complex64::new(1.0, 0.0), &g);
        let z = integrate_z(&problem, &line(g)).unwrap();
        assert!(
            (z.terminal.re - 1.0f64.exp()).abs() <= 1e-8,
            "{}",
            z.terminal
        );
        // Backward fill reaches the left margin: z(a − 2·step) = e^{−2·step}.
        let ia = z.z.grid().index_of_a();
        assert!((z.z.value(ia - 2).re - (-0.02f64).exp()).abs() <= 1e-8);
    }

    #[test]
    fn lambda_is_exponential_for_linear_z_dependence() {
        let g = grid(0.01, 4);
        let problem = scalar_problem(
            "v1^2 + z",
            Boundary::Fixed(1.0),
            Complex64::new(0.0, 0.0),
            &g,
        );
        let x = line(g);
        let z = integrate_z(&problem, &x).unwrap();
        let lambda = lambda_weight(&problem, &x, &z).unwrap();
        let ia = lambda.grid().index_of_a();
        assert_eq!(lambda.value(ia), Complex64::new(1.0, 0.0));
        for k in 0..lambda.len() {
            let t = lambda.grid().node(k);
            assert!((lambda.value(k).re - (-t).exp()).abs() <= 1e-8);
            assert!(lambda.value(k).im.abs() <= 1e-12);
        }
    }

    #[test]
    fn lambda_is_one_for_z_free_lagrangians() {
        let g = grid(0.01, 4);
        let problem = scalar_problem("v1^2", Boundary::Fixed(1.0), Complex64::new(0.0, 0.0), &g);
        let x = line(g);
        let z = integrate_z(&problem, &x).unwrap();
        let lambda = lambda_weight(&problem, &x, &z).unwrap();
        for k in 0..lambda.len() {
            assert_eq!(lambda.value(k), Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn pure_position_lagrangian_has_residual_minus_one() {
        let g = grid(0.01, 8);
        let problem = scalar_problem("x1", Boundary::Fixed(1.0), Complex64::new(0.0, 0.0), &g);
        let x = line(g);
        let z = integrate_z(&problem, &x).unwrap();
        let report = el_residual(&problem, &x, &z, 1e-6).unwrap();
        for k in 0..report.residual[0].len() {
            assert!(
                (report.residual[0].value(k) + Complex64::new(1.0, 0.0)).norm() <= 1e-10,
                "node {k}: {}",
                report.residual[0].value(k)
            );
        }
        assert!(!report.certified);
    }

    #[test]
    fn straight_line_nearly_solves_the_free_lagrangian() {
        // L = v1²: p = 2·□x is constant along x(t) = t, so □p ≡ 0 and the
        // residual vanishes to rounding.
        let g = grid(0.01, 8);
        let problem = scalar_problem("v1^2", Boundary::Fixed(1.0), Complex64::new(0.0, 0.0), &g);
        let x = line(g);
        let z = integrate_z(&problem, &x).unwrap();
        let report = el_residual(&problem, &x, &z, 1e-6).unwrap();
        assert!(report.sup_modulus[0] <= 1e-10, "{}", report.sup_modulus[0]);
        assert!(report.certified);
        assert!(report.barrow_defect[0] <= 1e-10);
    }

    #[test]
    fn exponential_extremal_residual_is_small_and_real_dominated() {
        // L = v1² + z has the analytic extremal x(t) = e^t − 1; the
        // residual along it is 2·w·(w−1)·e^t with w the box weight of the
        // exponential, so sup|Re| ~ h²·e/6 while sup|Im| ~ h·e.
        let step = 0.01;
        let h = 0.02;
        let g = grid(step, 8);
        let lag = LagrangianSpec::parse("v1^2 + z", Alphabet::scalar_vector(1)).unwrap();
        let problem = HerglotzProblem::new(
            0.0,
            1.0,
            Complex64::new(0.0, 0.0),
            vec![BoundaryPair {
                left: 0.0,
                right: Boundary::Fixed(1.0f64.exp() - 1.0),
            }],
            lag,
            ScaleParams::for_grid(h, &g).unwrap(),
        )
        .unwrap();
        let x = Trajectory::new(vec![SampledSignal::from_real_fn(g, |t| t.exp() - 1.0)]).unwrap();
        let z = integrate_z(&problem, &x).unwrap();
        let report = el_residual(&problem, &x, &z, 5e-2).unwrap();
        let e = 1.0f64.exp();
        // Frozen against the closed form: w−1 = h²/6 + ih/2 + O(h³).
        assert!(
            (report.sup_im[0] - h * e).abs() <= 0.1 * h * e,
            "sup im {} vs {}",
            report.sup_im[0],
            h * e
        );
        assert!(
            report.sup_norms[0] <= 1e-3,
            "sup re {}",
            report.sup_norms[0]
        );
        assert!(report.certified);
        // λ = e^{−t} for this Lagrangian.
        let ib = report.lambda.grid().index_of_b();
        assert!((report.lambda.value(ib).re - (-1.0f64).exp()).abs() <= 1e-6);
    }

    #[test]
    fn transversality_reports_constant_partial() {
        let g = grid(0.01, 8);
        let problem = scalar_problem("v1", Boundary::Free, Complex64::new(0.0, 0.0), &g);
        let x = line(g);
        let z = integrate_z(&problem, &x).unwrap();
        let tv = transversality_residual(&problem, &x, &z).unwrap();
        assert_eq!(tv.len(), 1);
        assert!((tv[0] - Complex64::new(1.0, 0.0)).norm() <= 1e-12);
        let report = el_residual(&problem, &x, &z, 1e-6).unwrap();
        assert!(!report.certified);
    }

    #[test]
    fn transversality_of_constant_trajectory_vanishes() {
        let g = grid(0.01, 8);
        let lag = LagrangianSpec::parse("v1^2 + z", Alphabet::scalar_vector(1)).unwrap();
        let problem = HerglotzProblem::new(
            0.0,
            1.0,
            Complex64::new(0.0, 0.0),
            vec![BoundaryPair {
                left: 0.5,
                right: Boundary::Free,
            }],
            lag,
            ScaleParams::for_grid(0.02, &g).unwrap(),
        )
        .unwrap();
        let x = Trajectory::new(vec![SampledSignal::from_real_fn(g, |_| 0.5)]).unwrap();
        let z = integrate_z(&problem, &x).unwrap();
        let tv = transversality_residual(&problem, &x, &z).unwrap();
        assert_eq!(tv[0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn fixed_problems_have_no_transversality() {
        let g = grid(0.01, 8);
        let problem = scalar_problem("v1", Boundary::Fixed(1.0), Complex64::new(0.0, 0.0), &g);
        let x = line(g);
        let z = integrate_z(&problem, &x).unwrap();
        match transversality_residual(&problem, &x, &z) {
            Err(Error::NoFreeBoundary) => {}
            other => panic!("expected NoFreeBoundary, got {other:?}"),
        }
    }

    #[test]
    fn classical_reduction_recovers_plain_integrals() {
        let g = UniformGrid::symmetric(0.0, 1.0, 0.001, 4).unwrap();
        let lag = LagrangianSpec::parse("v1^2", Alphabet::scalar_vector(1)).unwrap();
        let problem = HerglotzProblem::new(
            0.0,
            1.0,
            Complex64::new(3.0, 0.0),
            vec![BoundaryPair {
                left: 0.0,
                right: Boundary::Fixed(1.0),
            }],
            lag,
            ScaleParams::for_grid(0.002, &g).unwrap(),
        )
        .unwrap();
        let x = line(g);
        // z(b) = ∫ (□x)² dt + 3 = 4 for the straight line.
        let z = integrate_z(&problem, &x).unwrap();
        assert!((z.terminal - Complex64::new(4.0, 0.0)).norm() <= 1e-6);
        assert!(classical_reduction_check(&problem, &x).unwrap() <= 1e-10);

        let time = HerglotzProblem::new(
            0.0,
            1.0,
            Complex64::new(0.0, 0.0),
            vec![BoundaryPair {
                left: 0.0,
                right: Boundary::Fixed(1.0),
            }],
            LagrangianSpec::parse("t", Alphabet::scalar_vector(1)).unwrap(),
            ScaleParams::for_grid(0.002, &g).unwrap(),
        )
        .unwrap();
        let zt = integrate_z(&time, &line(g)).unwrap();
        assert!((zt.terminal - Complex64::new(0.5, 0.0)).norm() <= 1e-8);
    }

    #[test]
    fn classical_reduction_rejects_z_dependence() {
        let g = grid(0.01, 4);
        let problem = scalar_problem("z", Boundary::Fixed(1.0), Complex64::new(1.0, 0.0), &g);
        match classical_reduction_check(&problem, &line(g)) {
            Err(Error::NotZFree(_)) => {}
            other => panic!("expected NotZFree, got {other:?}"),
        }
    }

    #[test]
    fn boundary_enforcement_is_exact() {
        let g = grid(0.01, 4);
        let problem = scalar_problem("v1", Boundary::Fixed(1.0), Complex64::new(0.0, 0.0), &g);
        let mut x = Trajectory::new(vec![SampledSignal::from_real_fn(g, |t| t + 0.37)]).unwrap();
        problem.enforce_boundaries(&mut x);
        let ia = g.index_of_a();
        let ib = g.index_of_b();
        assert_eq!(x.component(0).value(ia), Complex64::new(0.0, 0.0));
        assert_eq!(x.component(0).value(ib), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn problem_validation_catches_bad_inputs() {
        let g = grid(0.01, 4);
        let lag = LagrangianSpec::parse("v1", Alphabet::scalar_vector(1)).unwrap();
        let scale = ScaleParams::for_grid(0.02, &g).unwrap();
        assert!(HerglotzProblem::new(
            1.0,
            0.0,
            Complex64::new(0.0, 0.0),
            vec![BoundaryPair {
                left: 0.0,
                right: Boundary::Fixed(1.0)
            }],
            lag.clone(),
            scale.clone(),
        )
        .is_err());
        // Alphabet arity mismatch: scalar Lagrangian on a 2d problem.
        assert!(HerglotzProblem::new(
            0.0,
            1.0,
            Complex64::new(0.0, 0.0),
            vec![
                BoundaryPair {
                    left: 0.0,
                    right: Boundary::Fixed(1.0)
                },
                BoundaryPair {
                    left: 0.0,
                    right: Boundary::Fixed(1.0)
                }
            ],
            lag,
            scale,
        )
        .is_err());
    }

    #[test]
    fn decoupled_coordinates_match_the_scalar_problem() {
        let g = grid(0.01, 8);
        let scalar = scalar_problem("v1^2", Boundary::Fixed(1.0), Complex64::new(0.0, 0.0), &g);
        let lag2 = LagrangianSpec::parse("v1^2 + sin(v2)", Alphabet::scalar_vector(2)).unwrap();
        let vector = HerglotzProblem::new(
            0.0,
            1.0,
            Complex64::new(0.0, 0.0),
            vec![
                BoundaryPair {
                    left: 0.0,
                    right: Boundary::Fixed(1.0),
                },
                BoundaryPair {
                    left: 0.0,
                    right: Boundary::Fixed(0.25),
                },
            ],
            lag2,
            ScaleParams::for_grid(0.02, &g).unwrap(),
        )
        .unwrap();
        let xs = Trajectory::new(vec![SampledSignal::from_real_fn(g, |t| t)]).unwrap();
        let xv = Trajectory::new(vec![
            SampledSignal::from_real_fn(g, |t| t),
            SampledSignal::from_real_fn(g, |t| 0.25 * t * t),
        ])
        .unwrap();
        let zs = integrate_z(&scalar, &xs).unwrap();
        let zv = integrate_z(&vector, &xv).unwrap();
        let rs = el_residual(&scalar, &xs, &zs, 1e-6).unwrap();
        let rv = el_residual(&vector, &xv, &zv, 1e-6).unwrap();
        for k in 0..rs.residual[0].len() {
            assert!(
                (rs.residual[0].value(k) - rv.residual[0].value(k)).norm() <= 1e-12,
                "node {k}"
            );
        }
    }
}
