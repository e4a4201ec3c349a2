//! Numerical scale calculus and the scale variational principle of
//! Herglotz.
//!
//! The crate works with complex h-scale derivatives of (possibly highly
//! non-differentiable) sampled signals: forward/backward quotients at a
//! scale `h` combine into a complex derivative whose imaginary part measures
//! local asymmetry. On top of the operators sit Herglotz-type variational
//! problems — trajectories are scored by the terminal value `z(b)` of
//! `ż = L(t, x, □x, z)` — with Euler–Lagrange residual certification for
//! scalar, vector, higher-order and field variants, plus a direct solver
//! that extremizes `z(b)` over discretized trajectories.

pub mod error;
pub mod expr;
pub mod fieldgrid;
pub mod fields;
pub mod grid;
pub mod herglotz;
pub mod higher_order;
pub mod holder;
pub mod lagrangian;
pub mod numerics;
pub mod scale;
pub mod signal;
pub mod solver;
pub mod weierstrass;

pub use error::{Error, Result};
pub use grid::UniformGrid;
pub use scale::{
    box_derivative, box_h_derivative, box_integral, delta_derivative, higher_order_box,
    integration_by_parts_defect, leibniz_residual, nabla_derivative, DefectReport, DerivativeMode,
    ScaleParams,
};
pub use signal::{SampledSignal, SignalKind};
