//! Synthetic BlazePose-style skeletons for oracle datasets and simulation.
//! Each gesture class has fixed arm, torso and stance parameters; samples
//! add per-person body scale, joint-angle jitter, landmark noise and a
//! random rigid placement.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Landmark, PoseFrame, LANDMARK_COUNT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseNoise {
    /// Standard deviation of joint-angle jitter, radians.
    pub angle_sd: f64,
    /// Standard deviation of per-landmark position noise, meters.
    pub position_sd: f64,
    /// Body scale drawn uniformly from `1 ± scale_spread`.
    pub scale_spread: f64,
}

impl Default for PoseNoise {
    fn default() -> Self {
        Self {
            angle_sd: 0.08,
            position_sd: 0.01,
            scale_spread: 0.15,
        }
    }
}

/// Shoulder elevation from hanging, shoulder azimuth (0 = sideways,
/// π/2 = forward) and elbow flexion, per arm.
#[derive(Debug, Clone, Copy)]
struct ArmPose {
    elevation: f64,
    azimuth: f64,
    flexion: f64,
}

#[derive(Debug, Clone, Copy)]
struct ClassPose {
    left: ArmPose,
    right: ArmPose,
    lean: f64,
    stance: f64,
}

fn class_pose(class: usize) -> ClassPose {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e57_0000 + class as u64);
    let arm = |rng: &mut ChaCha8Rng| ArmPose {
        elevation: rng.random_range(0.0..0.95 * PI),
        azimuth: rng.random_range(-0.3..PI / 2.0 + 0.3),
        flexion: rng.random_range(0.0..0.8 * PI),
    };
    ClassPose {
        left: arm(&mut rng),
        right: arm(&mut rng),
        lean: rng.random_range(-0.25..0.25),
        stance: rng.random_range(0.08..0.3),
    }
}

const UPPER_ARM: f64 = 0.30;
const FOREARM: f64 = 0.27;
const HAND: f64 = 0.08;

fn add(a: [f64; 3], b: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

/// Unit direction for an arm on side `side` (+1 left, −1 right).
fn direction(elevation: f64, azimuth: f64, side: f64) -> [f64; 3] {
    let (se, ce) = elevation.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    [side * se * ca, -ce, se * sa]
}

/// Landmarks 13..=22 of one arm: elbow, wrist, pinky, index, thumb.
fn arm_points(shoulder: [f64; 3], arm: &ArmPose, side: f64) -> [[f64; 3]; 5] {
    let upper = direction(arm.elevation, arm.azimuth, side);
    let fore = direction(arm.elevation + arm.flexion, arm.azimuth + 0.5 * arm.flexion, side);
    let elbow = add(shoulder, upper, UPPER_ARM);
    let wrist = add(elbow, fore, FOREARM);
    let tip = add(wrist, fore, HAND);
    [
        elbow,
        wrist,
        add(tip, [side * 0.02, 0.0, -0.01], 1.0),
        add(tip, [-side * 0.01, 0.0, 0.01], 1.0),
        add(wrist, [-side * 0.03, 0.02, 0.02], 1.0),
    ]
}

fn jitter(a: ArmPose, sd: f64, rng: &mut ChaCha8Rng) -> ArmPose {
    let n = Normal::new(0.0, sd.max(0.0)).unwrap_or(Normal::new(0.0, 0.0).unwrap());
    ArmPose {
        elevation: a.elevation + n.sample(rng),
        azimuth: a.azimuth + n.sample(rng),
        flexion: a.flexion + n.sample(rng),
    }
}

/// Canonical (noise-free, upright, origin-placed) skeleton of `class`.
pub fn prototype(class: usize) -> Vec<[f64; 3]> {
    let p = class_pose(class);
    skeleton(&p, 1.0)
}

fn skeleton(p: &ClassPose, scale: f64) -> Vec<[f64; 3]> {
    let w = p.stance;
    let mut pts: Vec<[f64; 3]> = alloc::vec![
        [0.0, 1.60, 0.08],
        [0.015, 1.64, 0.07],
        [0.03, 1.64, 0.065],
        [0.045, 1.64, 0.06],
        [-0.015, 1.64, 0.07],
        [-0.03, 1.64, 0.065],
        [-0.045, 1.64, 0.06],
        [0.075, 1.62, 0.0],
        [-0.075, 1.62, 0.0],
        [0.02, 1.56, 0.07],
        [-0.02, 1.56, 0.07],
        [0.18, 1.42, 0.0],
        [-0.18, 1.42, 0.0],
    ];
    let (ls, rs) = (pts[11], pts[12]);
    let left = arm_points(ls, &p.left, 1.0);
    let right = arm_points(rs, &p.right, -1.0);
    for k in 0..5 {
        pts.push(left[k]);
        pts.push(right[k]);
    }
    // Elbows, wrists, pinkies, indices and thumbs alternate left/right.
    pts.extend_from_slice(&[
        [0.1, 0.95, 0.0],
        [-0.1, 0.95, 0.0],
        [w, 0.5, 0.02],
        [-w, 0.5, 0.02],
        [w, 0.08, 0.0],
        [-w, 0.08, 0.0],
        [w, 0.05, -0.05],
        [-w, 0.05, -0.05],
        [w, 0.02, 0.12],
        [-w, 0.02, 0.12],
    ]);
    debug_assert_eq!(pts.len(), LANDMARK_COUNT);
    // Lean the upper body forward about the hip line.
    let (sl, cl) = p.lean.sin_cos();
    for pt in pts.iter_mut().take(23) {
        let (y, z) = (pt[1] - 0.95, pt[2]);
        pt[1] = 0.95 + cl * y - sl * z;
        pt[2] = sl * y + cl * z;
    }
    pts.iter().map(|v| [scale * v[0], scale * v[1], scale * v[2]]).collect()
}

/// One noisy observation of `class` with random yaw and floor position.
pub fn sample_pose(rng: &mut ChaCha8Rng, class: usize, noise: &PoseNoise) -> PoseFrame {
    let base = class_pose(class);
    let pose = ClassPose {
        left: jitter(base.left, noise.angle_sd, rng),
        right: jitter(base.right, noise.angle_sd, rng),
        ..base
    };
    let scale = 1.0 + rng.random_range(-1.0..=1.0) * noise.scale_spread;
    let pts = skeleton(&pose, scale);
    let yaw: f64 = rng.random_range(-PI..PI);
    let (sy, cy) = yaw.sin_cos();
    let shift = [rng.random_range(-2.0..2.0), 0.0, rng.random_range(-2.0..2.0)];
    let n = Normal::new(0.0, noise.position_sd.max(0.0)).unwrap_or(Normal::new(0.0, 0.0).unwrap());
    let landmarks = pts
        .iter()
        .map(|p| {
            let x = cy * p[0] + sy * p[2] + shift[0] + n.sample(rng);
            let z = -sy * p[0] + cy * p[2] + shift[2] + n.sample(rng);
            let y = p[1] + n.sample(rng);
            Landmark::new(x, y, z, rng.random_range(0.6..1.0))
        })
        .collect();
    PoseFrame {
        view_id: alloc::string::String::from("synthetic"),
        t: 0.0,
        landmarks,
    }
}

/// `per_class` feature vectors for each of `classes` gestures.
pub fn feature_dataset(
    classes: usize,
    per_class: usize,
    noise: &PoseNoise,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(classes * per_class);
    let mut y = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        for _ in 0..per_class {
            let f = sample_pose(&mut rng, c, noise);
            let v = super::extract_features(&f, super::ReferenceLength::ShoulderHip)
                .expect("synthetic poses have a torso");
            x.push(v.distances);
            y.push(c);
        }
    }
    (x, y)
}
