//! Complex-valued samples on a uniform grid, with CSV round-tripping.
//!
//! Signals are stored on the extended interval, margins included. A signal
//! carries a `SignalKind` so real-valued data stays recognizably real even
//! though storage is complex throughout.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::UniformGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    Real,
    Complex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    grid: UniformGrid,
    values: Vec<Complex64>,
    kind: SignalKind,
}

/// Grid metadata stored next to a signal CSV.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSidecar {
    pub a: f64,
    pub b: f64,
    pub step: f64,
    #[serde(default)]
    pub margin_nodes: Option<usize>,
    #[serde(default)]
    pub margin_left: Option<usize>,
    #[serde(default)]
    pub margin_right: Option<usize>,
}

impl SampledSignal {
    /// Sample a real-valued function at every node, margins included.
    pub fn from_real_fn(grid: UniformGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|k| Complex64::new(f(grid.node(k)), 0.0))
            .collect();
        SampledSignal {
            grid,
            values,
            kind: SignalKind::Real,
        }
    }

    /// Sample a complex-valued function at every node.
    pub fn from_complex_fn(grid: UniformGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.node(k))).collect();
        SampledSignal {
            grid,
            values,
            kind: SignalKind::Complex,
        }
    }

    pub fn from_real_values(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(SampledSignal {
            grid,
            values: values.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
            kind: SignalKind::Real,
        })
    }

    /// Wrap existing complex values. `kind == Real` requires every imaginary
    /// part to be exactly zero; the check happens here, at construction.
    pub fn from_values(
        grid: UniformGrid,
        values: Vec<Complex64>,
        kind: SignalKind,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if kind == SignalKind::Real && values.iter().any(|v| v.im != 0.0) {
            return Err(Error::InvalidParameter(
                "real-kind signal has nonzero imaginary parts".into(),
            ));
        }
        Ok(SampledSignal { grid, values, kind })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn value(&self, k: usize) -> Complex64 {
        self.values[k]
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

    /// Value at the node `t = a`.
    pub fn at_a(&self) -> Complex64 {
        self.values[self.grid.index_of_a()]
    }

    /// Value at the node `t = b`.
    pub fn at_b(&self) -> Complex64 {
        self.values[self.grid.index_of_b()]
    }

    /// Largest modulus over the core interval `[a, b]`.
    pub fn sup_core(&self) -> f64 {
        self.grid
            .core_range()
            .map(|k| self.values[k].norm())
            .fold(0.0, f64::max)
    }

    /// Largest `|Re|` over the core interval.
    pub fn sup_core_re(&self) -> f64 {
        self.grid
            .core_range()
            .map(|k| self.values[k].re.abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|Im|` over the core interval.
    pub fn sup_core_im(&self) -> f64 {
        self.grid
            .core_range()
            .map(|k| self.values[k].im.abs())
            .fold(0.0, f64::max)
    }

    /// Copy of this signal restricted to smaller margins.
    pub fn restrict(&self, margin_left: usize, margin_right: usize) -> Result<Self> {
        if margin_left > self.grid.margin_left() {
            return Err(Error::InsufficientMargin {
                needed: margin_left,
                available: self.grid.margin_left(),
                side: "left",
            });
        }
        if margin_right > self.grid.margin_right() {
            return Err(Error::InsufficientMargin {
                needed: margin_right,
                available: self.grid.margin_right(),
                side: "right",
            });
        }
        let drop_left = self.grid.margin_left() - margin_left;
        let keep = self.grid.len() - drop_left - (self.grid.margin_right() - margin_right);
        let values = self.values[drop_left..drop_left + keep].to_vec();
        Ok(SampledSignal {
            grid: self.grid.with_margin_counts(margin_left, margin_right),
            values,
            kind: self.kind,
        })
    }

    /// Pointwise map; the result is treated as complex.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        SampledSignal {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            kind: SignalKind::Complex,
        }
    }

    /// Pointwise product with another signal on the identical grid.
    pub fn pointwise_mul(&self, other: &SampledSignal) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&x, &y)| x * y)
            .collect();
        let kind = if self.kind == SignalKind::Real && other.kind == SignalKind::Real {
            SignalKind::Real
        } else {
            SignalKind::Complex
        };
        Ok(SampledSignal {
            grid: self.grid,
            values,
            kind,
        })
    }

    pub fn check_same_grid(&self, other: &SampledSignal) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(
                "signals live on different grids".into(),
            ));
        }
        Ok(())
    }

    /// Write the signal as CSV (`t,re,im`, one row per node) plus a JSON
    /// grid sidecar at `sidecar_path_for(path)`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.values.len() * 64 + 16);
        out.push_str("t,re,im\n");
        for (k, v) in self.values.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_f64(self.grid.node(k)),
                fmt_f64(v.re),
                fmt_f64(v.im)
            ));
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(out.as_bytes())?;

        let sidecar = if self.grid.is_symmetric() {
            GridSidecar {
                a: self.grid.a(),
                b: self.grid.b(),
                step: self.grid.step(),
                margin_nodes: Some(self.grid.margin_nodes()),
                margin_left: None,
                margin_right: None,
            }
        } else {
            GridSidecar {
                a: self.grid.a(),
                b: self.grid.b(),
                step: self.grid.step(),
                margin_nodes: None,
                margin_left: Some(self.grid.margin_left()),
                margin_right: Some(self.grid.margin_right()),
            }
        };
        let json =
            serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Schema(e.to_string()))?;
        std::fs::write(sidecar_path_for(path), json + "\n")?;
        Ok(())
    }

    /// Read a signal written by [`SampledSignal::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let sidecar_path = sidecar_path_for(path);
        let sidecar_text = std::fs::read_to_string(&sidecar_path).map_err(|e| {
            Error::Schema(format!(
                "cannot read grid sidecar {}: {e}",
                sidecar_path.display()
            ))
        })?;
        let sidecar: GridSidecar = serde_json::from_str(&sidecar_text)
            .map_err(|e| Error::Schema(format!("bad grid sidecar: {e}")))?;
        let (ml, mr) = match (
            sidecar.margin_nodes,
            sidecar.margin_left,
            sidecar.margin_right,
        ) {
            (Some(m), None, None) => (m, m),
            (None, Some(l), Some(r)) => (l, r),
            _ => {
                return Err(Error::Schema(
                    "sidecar must give either margin_nodes or margin_left/margin_right".into(),
                ))
            }
        };
        let grid = UniformGrid::with_margins(sidecar.a, sidecar.b, sidecar.step, ml, mr)?;

        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        match lines.next() {
            Some(Ok(header)) if header.trim() == "t,re,im" => {}
            _ => return Err(Error::Schema("signal CSV must start with `t,re,im`".into())),
        }
        let mut values = Vec::with_capacity(grid.len());
        let mut kind = SignalKind::Real;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|x| x.trim().parse::<f64>().ok()).ok_or_else(|| {
                    Error::Schema(format!("bad CSV row {} in {}", lineno + 2, path.display()))
                })
            };
            let _t = parse(parts.next())?;
            let re = parse(parts.next())?;
            let im = parse(parts.next())?;
            if im != 0.0 {
                kind = SignalKind::Complex;
            }
            values.push(Complex64::new(re, im));
        }
        if values.len() != grid.len() {
            return Err(Error::Schema(format!(
                "CSV has {} rows but the sidecar grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(SampledSignal { grid, values, kind })
    }
}

/// Sidecar path: `foo.csv` -> `foo.grid.json`.
pub fn sidecar_path_for(path: &Path) -> std::path::PathBuf {
    let mut p = path.to_path_buf();
    p.set_extension("grid.json");
    p
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_kind_rejects_imaginary_values() {
        let g = UniformGrid::symmetric(0.0, 1.0, 0.5, 0).unwrap();
        let vals = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(2.0, 0.1),
            Complex64::new(3.0, 0.0),
        ];
        assert!(SampledSignal::from_values(g, vals.clone(), SignalKind::Real).is_err());
        assert!(SampledSignal::from_values(g, vals, SignalKind::Complex).is_ok());
    }

    #[test]
    fn restrict_drops_margin_values() {
        let g = UniformGrid::symmetric(0.0, 1.0, 0.5, 2).unwrap();
        let s = SampledSignal::from_real_fn(g, |t| t);
        let r = s.restrict(0, 1).unwrap();
        assert_eq!(r.len(), 4);
        assert_eq!(r.grid().node(0), 0.0);
        assert_eq!(r.value(0).re, 0.0);
        assert_eq!(r.value(3).re, 1.5);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = std::env::temp_dir().join("herglotz_signal_rt");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sig.csv");
        let g = UniformGrid::symmetric(-1.0, 1.0, 0.125, 3).unwrap();
        let s = SampledSignal::from_complex_fn(g, |t| Complex64::new(t.sin(), t.cos() / 3.0));
        s.write_csv(&path).unwrap();
        let back = SampledSignal::read_csv(&path).unwrap();
        assert_eq!(s.grid(), back.grid());
        for (x, y) in s.values().iter().zip(back.values()) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }

    #[test]
    fn sup_norms_split_parts() {
        let g = UniformGrid::symmetric(0.0, 1.0, 0.5, 1).unwrap();
        let mut s = SampledSignal::from_real_fn(g, |_| 0.0).map(|v| v);
        // margin nodes carry large values that must not affect core sups
        s.values_mut()[0] = Complex64::new(100.0, 100.0);
        s.values_mut()[1] = Complex64::new(3.0, -4.0);
        assert_eq!(s.sup_core(), 5.0);
        assert_eq!(s.sup_core_re(), 3.0);
        assert_eq!(s.sup_core_im(), 4.0);
    }
}
