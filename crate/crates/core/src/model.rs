//! Domain types and exact 2-D geometry shared by the rest of the crate.
//!
//! All distances are in meters. Propagation delays are carried as distances
//! (`c * tau`), which is what the measurement extraction produces.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Ratio between the covariance of a scattering ellipse and its squared
/// semi-axes. A uniform density over a solid ellipse with semi-axis `a` has
/// second moment `a^2 / 4` along that axis.
pub const EXTENT_SCALE: f64 = 0.25;

/// Kinematic state of the extended agent at one time step.
///
/// The body center sits at `position + bias`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub bias: Vec2,
}

impl AgentState {
    pub fn new(position: Vec2, velocity: Vec2, bias: Vec2) -> Self {
        Self {
            position,
            velocity,
            bias,
        }
    }

    pub fn body_center(&self) -> Vec2 {
        self.position + self.bias
    }

    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(self.velocity.iter())
            .chain(self.bias.iter())
            .all(|x| x.is_finite())
    }
}

/// Body shape: a fixed base matrix `E` that is rotated with the heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtentModel {
    base: Mat2,
    semi_axes: (f64, f64),
}

impl ExtentModel {
    /// Ellipse with the long semi-axis along the heading direction.
    pub fn from_semi_axes(long: f64, short: f64) -> Result<Self> {
        if !(long.is_finite() && short.is_finite()) || long < 0.0 || short < 0.0 {
            return Err(Error::invalid(
                "semi_axes",
                "semi-axes must be finite and nonnegative",
            ));
        }
        let base = Mat2::new(long * long, 0.0, 0.0, short * short) * EXTENT_SCALE;
        Ok(Self {
            base,
            semi_axes: (long, short),
        })
    }

    pub fn base(&self) -> &Mat2 {
        &self.base
    }

    pub fn semi_axes(&self) -> (f64, f64) {
        self.semi_axes
    }

    /// `A(theta) E A(theta)^T`.
    pub fn oriented(&self, theta: f64) -> Mat2 {
        oriented_extent(&self.base, theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AnchorId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub id: AnchorId,
    pub position: Vec2,
    pub can_transmit_passive: bool,
}

impl Anchor {
    pub fn new(id: u32, x: f64, y: f64) -> Self {
        Self {
            id: AnchorId(id),
            position: Vec2::new(x, y),
            can_transmit_passive: false,
        }
    }
}

/// Who emitted the signal a measurement was extracted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transmitter {
    Agent,
    Anchor(AnchorId),
}

/// One extracted `(distance, normalized amplitude)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub distance: f64,
    pub amplitude: f64,
    pub rx: AnchorId,
    pub tx: Transmitter,
}

impl Measurement {
    pub fn is_active(&self) -> bool {
        self.tx == Transmitter::Agent
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveChannel {
    pub rx: AnchorId,
    pub measurements: Vec<Measurement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassiveChannel {
    pub tx: AnchorId,
    pub rx: AnchorId,
    pub measurements: Vec<Measurement>,
}

/// All measurements of one time step, grouped per channel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementSet {
    pub step: usize,
    pub active: Vec<ActiveChannel>,
    pub passive: Vec<PassiveChannel>,
}

impl MeasurementSet {
    pub fn empty(step: usize) -> Self {
        Self {
            step,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.active
            .iter()
            .map(|c| c.measurements.len())
            .sum::<usize>()
            + self
                .passive
                .iter()
                .map(|c| c.measurements.len())
                .sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Measurement> {
        self.active
            .iter()
            .flat_map(|c| c.measurements.iter())
            .chain(self.passive.iter().flat_map(|c| c.measurements.iter()))
    }
}

/// Heading of the velocity vector in `(-pi, pi]`.
pub fn orientation_from_velocity(velocity: &Vec2) -> Result<f64> {
    if velocity.x == 0.0 && velocity.y == 0.0 {
        return Err(Error::UndefinedOrientation);
    }
    let theta = velocity.y.atan2(velocity.x);
    // atan2 returns -pi for (-x, -0.0)
    Ok(if theta <= -PI { PI } else { theta })
}

pub fn rotation_matrix(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    Mat2::new(c, -s, s, c)
}

pub fn oriented_extent(base: &Mat2, theta: f64) -> Mat2 {
    let rot = rotation_matrix(theta);
    let x = rot * base * rot.transpose();
    // exact symmetry, the product leaves rounding asymmetry
    let off = 0.5 * (x[(0, 1)] + x[(1, 0)]);
    Mat2::new(x[(0, 0)], off, off, x[(1, 1)])
}

/// Range of the direct path from the agent to an anchor.
pub fn los_distance(position: &Vec2, anchor: &Anchor) -> f64 {
    (position - anchor.position).norm()
}

/// Range from a scatter point on the body to the receiving anchor. The
/// agent-to-scatter leg is not included.
pub fn active_scatter_distance(
    position: &Vec2,
    bias: &Vec2,
    scatter: &Vec2,
    anchor: &Anchor,
) -> f64 {
    (position + bias + scatter - anchor.position).norm()
}

/// Bistatic range transmitter -> scatter point -> receiver.
pub fn passive_scatter_distance(
    position: &Vec2,
    bias: &Vec2,
    scatter: &Vec2,
    tx: &Anchor,
    rx: &Anchor,
) -> f64 {
    let point = position + bias + scatter;
    (point - tx.position).norm() + (point - rx.position).norm()
}

/// Principal square root of a symmetric positive semidefinite 2x2 matrix.
///
/// Uses `sqrt(M) = (M + s I) / t` with `s = sqrt(det M)` and
/// `t = sqrt(tr M + 2 s)`, which stays well defined for rank-deficient input.
pub fn sqrtm_psd(m: &Mat2) -> Mat2 {
    let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).max(0.0);
    let s = det.sqrt();
    let t2 = m[(0, 0)] + m[(1, 1)] + 2.0 * s;
    if t2 <= 0.0 {
        return Mat2::zeros();
    }
    (m + Mat2::identity() * s) / t2.sqrt()
}
