//! Product grids and field samples for the several-independent-variables
//! problem: one time axis plus up to two space axes, each a `UniformGrid`
//! with its own margins.

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::scale::ScaleParams;
use crate::signal::{fmt_f64, SignalKind};

/// Time axis plus up to two space axes.
pub const MAX_AXES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ProductGrid {
    axes: Vec<UniformGrid>,
}

impl ProductGrid {
    /// Axis 0 is time; the remaining axes are space.
    pub fn new(axes: Vec<UniformGrid>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_AXES {
            return Err(Error::InvalidGrid(format!(
                "a field grid needs 1 to {MAX_AXES} axes, got {}",
                axes.len()
            )));
        }
        Ok(ProductGrid { axes })
    }

    pub fn naxes(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, i: usize) -> &UniformGrid {
        &self.axes[i]
    }

    pub fn axes(&self) -> &[UniformGrid] {
        &self.axes
    }

    /// Node count along each axis, margins included.
    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(|g| g.len()).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|g| g.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major strides matching `dims`.
    pub fn strides(&self) -> Vec<usize> {
        let dims = self.dims();
        let mut strides = vec![1; dims.len()];
        for i in (0..dims.len() - 1).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        strides
    }

    fn with_axis(&self, i: usize, axis: UniformGrid) -> Self {
        let mut axes = self.axes.clone();
        axes[i] = axis;
        ProductGrid { axes }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSamples {
    grid: ProductGrid,
    values: Vec<Complex64>,
    kind: SignalKind,
}

impl FieldSamples {
    /// Sample a real-valued function of the node coordinates
    /// (time first, then space), margins included.
    pub fn from_real_fn(grid: ProductGrid, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        let dims = grid.dims();
        let strides = grid.strides();
        let values: Vec<Complex64> = (0..grid.len())
            .into_par_iter()
            .map(|lin| {
                let mut coords = [0.0; MAX_AXES];
                for (i, (&d, &s)) in dims.iter().zip(&strides).enumerate() {
                    coords[i] = grid.axis(i).node(lin / s % d);
                }
                Complex64::new(f(&coords[..dims.len()]), 0.0)
            })
            .collect();
        FieldSamples {
            grid,
            values,
            kind: SignalKind::Real,
        }
    }

    pub fn from_values(
        grid: ProductGrid,
        values: Vec<Complex64>,
        kind: SignalKind,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a field grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(FieldSamples { grid, values, kind })
    }

    pub fn grid(&self) -> &ProductGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn kind(&self) -> SignalKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at a multi-index (one entry per axis, margins included).
    pub fn at(&self, idx: &[usize]) -> Complex64 {
        let strides = self.grid.strides();
        let lin: usize = idx.iter().zip(&strides).map(|(&i, &s)| i * s).sum();
        self.values[lin]
    }

    /// h-scale partial derivative along one axis; that axis loses `h_nodes`
    /// of margin on both sides, the others are untouched.
    pub fn partial_box(&self, axis: usize, scale: &ScaleParams) -> Result<FieldSamples> {
        if axis >= self.grid.naxes() {
            return Err(Error::AxisOutOfRange {
                axis,
                dims: self.grid.naxes(),
            });
        }
        let h = scale.h();
        let p = self.grid.axis(axis).nodes_for(h)?;
        let new_axis = self.grid.axis(axis).shrink_both(p)?;
        let out_grid = self.grid.with_axis(axis, new_axis);

        let in_dims = self.grid.dims();
        let in_strides = self.grid.strides();
        let out_dims = out_grid.dims();
        let out_strides = out_grid.strides();
        let naxes = in_dims.len();
        let axis_stride = in_strides[axis];

        let values: Vec<Complex64> = (0..out_grid.len())
            .into_par_iter()
            .map(|out_lin| {
                // map the output multi-index to the input linear index,
                // offset by p along the differentiated axis
                let mut in_lin = 0;
                for i in 0..naxes {
                    let mut idx = out_lin / out_strides[i] % out_dims[i];
                    if i == axis {
                        idx += p;
                    }
                    in_lin += idx * in_strides[i];
                }
                let fw = self.values[in_lin + p * axis_stride];
                let cur = self.values[in_lin];
                let bw = self.values[in_lin - p * axis_stride];
                let d = (fw - cur) / h;
                let n = (cur - bw) / h;
                let mean = (d + n) * 0.5;
                let half_diff = (d - n) * 0.5;
                Complex64::new(mean.re - half_diff.im, mean.im + half_diff.re)
            })
            .collect();
        FieldSamples::from_values(out_grid, values, SignalKind::Complex)
    }

    /// Pointwise map; the result is treated as complex.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64 + Sync) -> FieldSamples {
        FieldSamples {
            grid: self.grid.clone(),
            values: self.values.par_iter().map(|&v| f(v)).collect(),
            kind: SignalKind::Complex,
        }
    }

    /// Largest modulus over core nodes (every axis inside its `[a, b]`).
    pub fn sup_core(&self) -> f64 {
        let dims = self.grid.dims();
        let strides = self.grid.strides();
        self.values
            .iter()
            .enumerate()
            .filter(|(lin, _)| {
                (0..dims.len()).all(|i| {
                    let idx = lin / strides[i] % dims[i];
                    self.grid.axis(i).core_range().contains(&idx)
                })
            })
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
    }

    /// Largest `|Re|` over core nodes.
    pub fn sup_core_re(&self) -> f64 {
        let dims = self.grid.dims();
        let strides = self.grid.strides();
        self.values
            .iter()
            .enumerate()
            .filter(|(lin, _)| {
                (0..dims.len()).all(|i| {
                    let idx = lin / strides[i] % dims[i];
                    self.grid.axis(i).core_range().contains(&idx)
                })
            })
            .map(|(_, v)| v.re.abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|Im|` over core nodes.
    pub fn sup_core_im(&self) -> f64 {
        let dims = self.grid.dims();
        let strides = self.grid.strides();
        self.values
            .iter()
            .enumerate()
            .filter(|(lin, _)| {
                (0..dims.len()).all(|i| {
                    let idx = lin / strides[i] % dims[i];
                    self.grid.axis(i).core_range().contains(&idx)
                })
            })
            .map(|(_, v)| v.im.abs())
            .fold(0.0, f64::max)
    }

    /// Re-sample onto a grid with the same axes but smaller margins,
    /// dropping the trimmed nodes.
    pub fn restrict_to(&self, grid: &ProductGrid) -> Result<FieldSamples> {
        if grid.naxes() != self.grid.naxes() {
            return Err(Error::GridMismatch(format!(
                "cannot restrict a {}-axis field onto {} axes",
                self.grid.naxes(),
                grid.naxes()
            )));
        }
        let mut offsets = Vec::with_capacity(grid.naxes());
        for i in 0..grid.naxes() {
            let src = self.grid.axis(i);
            let dst = grid.axis(i);
            if !src.same_axis(dst)
                || dst.margin_left() > src.margin_left()
                || dst.margin_right() > src.margin_right()
            {
                return Err(Error::GridMismatch(format!(
                    "axis {i} of the target is not a restriction of the source axis"
                )));
            }
            offsets.push(src.margin_left() - dst.margin_left());
        }
        let in_strides = self.grid.strides();
        let out_dims = grid.dims();
        let out_strides = grid.strides();
        let naxes = out_dims.len();
        let values: Vec<Complex64> = (0..grid.len())
            .map(|out_lin| {
                let mut in_lin = 0;
                for i in 0..naxes {
                    let idx = out_lin / out_strides[i] % out_dims[i] + offsets[i];
                    in_lin += idx * in_strides[i];
                }
                self.values[in_lin]
            })
            .collect();
        FieldSamples::from_values(grid.clone(), values, self.kind)
    }

    /// Trapezoid integral over the spatial core box at one time node
    /// (index counted with margins). With no space axes this is just the
    /// value at that node.
    pub fn integrate_space_core(&self, time_idx: usize) -> Complex64 {
        let strides = self.grid.strides();
        let base = time_idx * strides[0];
        match self.grid.naxes() {
            1 => self.values[base],
            2 => {
                let ax = self.grid.axis(1);
                let mut acc = Complex64::new(0.0, 0.0);
                for (w, k) in trapezoid_weights(ax) {
                    acc += self.values[base + k * strides[1]] * w;
                }
                acc
            }
            3 => {
                let ax1 = self.grid.axis(1);
                let ax2 = self.grid.axis(2);
                let mut acc = Complex64::new(0.0, 0.0);
                for (w1, k1) in trapezoid_weights(ax1) {
                    for (w2, k2) in trapezoid_weights(ax2) {
                        acc += self.values[base + k1 * strides[1] + k2 * strides[2]] * (w1 * w2);
                    }
                }
                acc
            }
            _ => unreachable!("ProductGrid enforces at most {MAX_AXES} axes"),
        }
    }

    /// Write one CSV per core time node (`x1[,x2],re,im`) plus a JSON
    /// manifest listing the axes and the slice files.
    pub fn write_slices(&self, dir: &Path, base: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let time_axis = self.grid.axis(0);
        let strides = self.grid.strides();
        let naxes = self.grid.naxes();
        let mut files = Vec::new();
        for (slice_no, kt) in time_axis.core_range().enumerate() {
            let name = format!("{base}_t{slice_no:04}.csv");
            let mut out = String::new();
            match naxes {
                2 => {
                    out.push_str("x1,re,im\n");
                    let ax = self.grid.axis(1);
                    for k in 0..ax.len() {
                        let v = self.values[kt * strides[0] + k * strides[1]];
                        out.push_str(&format!(
                            "{},{},{}\n",
                            fmt_f64(ax.node(k)),
                            fmt_f64(v.re),
                            fmt_f64(v.im)
                        ));
                    }
                }
                3 => {
                    out.push_str("x1,x2,re,im\n");
                    let ax1 = self.grid.axis(1);
                    let ax2 = self.grid.axis(2);
                    for k1 in 0..ax1.len() {
                        for k2 in 0..ax2.len() {
                            let v =
                                self.values[kt * strides[0] + k1 * strides[1] + k2 * strides[2]];
                            out.push_str(&format!(
                                "{},{},{},{}\n",
                                fmt_f64(ax1.node(k1)),
                                fmt_f64(ax2.node(k2)),
                                fmt_f64(v.re),
                                fmt_f64(v.im)
                            ));
                        }
                    }
                }
                _ => {
                    return Err(Error::InvalidGrid(
                        "slice output needs at least one space axis".into(),
                    ))
                }
            }
            std::fs::write(dir.join(&name), out)?;
            files.push((time_axis.node(kt), name));
        }

        #[derive(Serialize)]
        struct AxisMeta {
            a: f64,
            b: f64,
            step: f64,
            margin_left: usize,
            margin_right: usize,
        }
        #[derive(Serialize)]
        struct Manifest {
            axes: Vec<AxisMeta>,
            slices: Vec<SliceMeta>,
        }
        #[derive(Serialize)]
        struct SliceMeta {
            t: f64,
            file: String,
        }
        let manifest = Manifest {
            axes: self
                .grid
                .axes()
                .iter()
                .map(|g| AxisMeta {
                    a: g.a(),
                    b: g.b(),
                    step: g.step(),
                    margin_left: g.margin_left(),
                    margin_right: g.margin_right(),
                })
                .collect(),
            slices: files
                .into_iter()
                .map(|(t, file)| SliceMeta { t, file })
                .collect(),
        };
        let json =
            serde_json::to_string_pretty(&manifest).map_err(|e| Error::Schema(e.to_string()))?;
        std::fs::write(dir.join(format!("{base}.manifest.json")), json + "\n")?;
        Ok(())
    }
}

/// Core-node trapezoid weights for one axis: (weight, node index with
/// margins), endpoints at half weight.
fn trapezoid_weights(g: &UniformGrid) -> Vec<(f64, usize)> {
    let step = g.step();
    g.core_range()
        .map(|k| {
            let w = if k == g.index_of_a() || k == g.index_of_b() {
                0.5 * step
            } else {
                step
            };
            (w, k)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_2d(margin_t: usize, margin_x: usize) -> ProductGrid {
        ProductGrid::new(vec![
            UniformGrid::symmetric(0.0, 1.0, 0.1, margin_t).unwrap(),
            UniformGrid::symmetric(0.0, 1.0, 0.1, margin_x).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn partial_box_sees_only_its_axis() {
        let u = FieldSamples::from_real_fn(grid_2d(2, 2), |c| c[1]); // u = x
        let p = ScaleParams::for_grid(0.1, u.grid().axis(0)).unwrap();
        let du = u.partial_box(0, &p).unwrap();
        assert!(du.values().iter().all(|v| v.norm() < 1e-13));

        let v = FieldSamples::from_real_fn(grid_2d(2, 2), |c| c[0] + c[1]); // t + x
        let dv = v.partial_box(1, &p).unwrap();
        assert!(dv
            .values()
            .iter()
            .all(|w| (w.re - 1.0).abs() < 1e-12 && w.im.abs() < 1e-12));
    }

    #[test]
    fn partial_box_of_product_at_a_point() {
        let g = ProductGrid::new(vec![
            UniformGrid::symmetric(0.0, 2.0, 0.1, 1).unwrap(),
            UniformGrid::symmetric(0.0, 3.0, 0.1, 1).unwrap(),
        ])
        .unwrap();
        let u = FieldSamples::from_real_fn(g, |c| c[0] * c[1]); // t·x
        let p = ScaleParams::for_grid(0.1, u.grid().axis(0)).unwrap();
        let du = u.partial_box(0, &p).unwrap();
        // t = 1 is node 10 of the shrunk time axis (margin now 0); x = 2 is
        // node 21 of the untouched x axis (margin 1)
        let val = du.at(&[10, 21]);
        assert!((val - Complex64::new(2.0, 0.0)).norm() < 1e-12, "{val}");
    }

    #[test]
    fn axis_and_margin_errors() {
        let u = FieldSamples::from_real_fn(grid_2d(1, 0), |c| c[0]);
        let p = ScaleParams::for_grid(0.1, u.grid().axis(0)).unwrap();
        assert!(matches!(
            u.partial_box(5, &p),
            Err(Error::AxisOutOfRange { axis: 5, dims: 2 })
        ));
        assert!(matches!(
            u.partial_box(1, &p),
            Err(Error::InsufficientMargin { .. })
        ));
    }

    #[test]
    fn spatial_core_integral_ignores_margins() {
        let u = FieldSamples::from_real_fn(grid_2d(0, 3), |_| 1.0);
        let t0 = u.grid().axis(0).index_of_a();
        let vol = u.integrate_space_core(t0);
        assert!((vol.re - 1.0).abs() < 1e-14);

        let w = FieldSamples::from_real_fn(grid_2d(0, 3), |c| c[1]); // ∫x dx = 1/2
        let half = w.integrate_space_core(t0);
        assert!((half.re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn sup_core_skips_margin_nodes() {
        let g = grid_2d(1, 1);
        let mut u = FieldSamples::from_real_fn(g, |_| 0.25);
        let n = u.len();
        // corner of the margin frame
        u.values = {
            let mut v = u.values.clone();
            v[0] = Complex64::new(50.0, 0.0);
            v[n - 1] = Complex64::new(-50.0, 0.0);
            v
        };
        assert_eq!(u.sup_core(), 0.25);
    }
}
