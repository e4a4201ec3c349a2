//! Report JSON with deterministic numeric formatting.
//!
//! Every float is written at 17 significant digits (the same `fmt_f64`
//! used for CSV), so identical inputs produce byte-identical files and
//! regression tests can diff outputs directly.

use std::io::{self, Write};
use std::path::Path;

use herglotz_core::herglotz::ELReport;
use herglotz_core::signal::fmt_f64;
use herglotz_core::{Error, Result};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};

/// One residual/solve report, shared by every variant (fields leave
/// `transversality` and `barrow_defect` empty).
#[derive(Serialize)]
pub struct ReportJson {
    pub variant: String,
    pub certified: bool,
    pub tolerance: f64,
    pub h: f64,
    pub step: f64,
    pub sup_norms: Vec<f64>,
    pub sup_modulus: Vec<f64>,
    pub sup_im: Vec<f64>,
    /// `[re, im]` per free boundary entry.
    pub transversality: Vec<[f64; 2]>,
    pub z_terminal: [f64; 2],
    pub im_z_max: f64,
    pub barrow_defect: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveMetaJson>,
}

#[derive(Serialize)]
pub struct SolveMetaJson {
    pub mode: String,
    pub iterations: usize,
    pub converged: bool,
    pub stop: String,
    pub gradient_norm: f64,
}

#[derive(Serialize)]
pub struct StudyJson {
    pub kind: String,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `[h, value]` rows, as in the CSV.
    pub rows: Vec<[f64; 2]>,
}

#[derive(Serialize)]
pub struct HolderJson {
    pub alpha_hat: f64,
    pub r_squared: f64,
    /// `[log delta, log modulus]` regression points.
    pub points: Vec<[f64; 2]>,
}

impl ReportJson {
    pub fn from_el(variant: &str, report: &ELReport, z_terminal: Complex64) -> Self {
        ReportJson {
            variant: variant.to_string(),
            certified: report.certified,
            tolerance: report.tolerance,
            h: report.h,
            step: report.step,
            sup_norms: report.sup_norms.clone(),
            sup_modulus: report.sup_modulus.clone(),
            sup_im: report.sup_im.clone(),
            transversality: report.transversality.iter().map(|c| [c.re, c.im]).collect(),
            z_terminal: [z_terminal.re, z_terminal.im],
            im_z_max: report.im_z_max,
            barrow_defect: report.barrow_defect.clone(),
            solve: None,
        }
    }
}

/// Pretty JSON whose floats go through [`fmt_f64`]; non-finite values
/// (which should never reach a report) degrade to `null`.
struct SciFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Formatter for SciFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            writer.write_all(fmt_f64(value).as_bytes())
        } else {
            writer.write_all(b"null")
        }
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut buf = Vec::new();
    let formatter = SciFormatter {
        inner: PrettyFormatter::new(),
    };
    let mut ser = Serializer::with_formatter(&mut buf, formatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Schema(e.to_string()))?;
    buf.push(b'\n');
    std::fs::write(path, buf)?;
    Ok(())
}
