//! Distance and approach velocity between the headset and the avatar.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Maximum timestamp disagreement between paired frames, seconds.
pub const FRAME_TOLERANCE_S: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Rotation about the vertical (y) axis followed by a translation.
    pub fn from_yaw(yaw: f64, translation: [f64; 3]) -> Self {
        let (s, c) = yaw.sin_cos();
        Self {
            rotation: [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
            translation,
        }
    }

    /// Rejects rotations that are not orthonormal with determinant +1.
    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-6 {
                    return Err(invalid("rotation is not orthonormal"));
                }
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        if (det - 1.0).abs() > 1e-6 {
            return Err(invalid("rotation has a reflection"));
        }
        if self.translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        core::array::from_fn(|i| {
            r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + self.translation[i]
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionSample {
    pub t: f64,
    pub position: [f64; 3],
}

impl PositionSample {
    pub fn new(t: f64, position: [f64; 3]) -> Self {
        Self { t, position }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxemicsSample {
    pub t: f64,
    pub hmd: [f64; 3],
    /// Avatar centroid after the configured transform.
    pub avatar: [f64; 3],
    pub distance: f64,
    /// Rate of change of distance; negative while approaching.
    pub velocity: f64,
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Pairs frames one-to-one, maps the avatar into the headset frame and
/// differentiates the distance (central differences inside, one-sided at the
/// ends).
pub fn proxemics(
    hmd: &[PositionSample],
    avatar: &[PositionSample],
    transform: &RigidTransform,
) -> Result<Vec<ProxemicsSample>> {
    if hmd.len() != avatar.len() {
        return Err(Error::DimensionMismatch {
            expected: hmd.len(),
            got: avatar.len(),
        });
    }
    transform.validate()?;
    let mut out: Vec<ProxemicsSample> = Vec::with_capacity(hmd.len());
    for (h, a) in hmd.iter().zip(avatar) {
        if (h.t - a.t).abs() > FRAME_TOLERANCE_S {
            return Err(invalid(format!(
                "frame mismatch: headset at {} s, avatar at {} s",
                h.t, a.t
            )));
        }
        if let Some(prev) = out.last() {
            if !(h.t > prev.t) {
                return Err(invalid("frames must be strictly increasing in time"));
            }
        }
        let av = transform.apply(a.position);
        out.push(ProxemicsSample {
            t: h.t,
            hmd: h.position,
            avatar: av,
            distance: distance(h.position, av),
            velocity: 0.0,
        });
    }
    let n = out.len();
    if n >= 2 {
        for i in 0..n {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            out[i].velocity = (out[hi].distance - out[lo].distance) / (out[hi].t - out[lo].t);
        }
    }
    Ok(out)
}
