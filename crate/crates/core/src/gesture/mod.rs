//! Skeletal gesture cues: multi-view landmark merging, normalized pairwise
//! distance features, a decision forest and per-stream vote smoothing.

pub mod forest;
pub mod synth;

#[allow(unused_imports)]
use num_traits::Float;
use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{degenerate, invalid, Error, Result};

pub use forest::{
    cross_validate, train_forest, CvReport, FeatureSubsample, ForestConfig, ForestModel, Node, Tree,
};

pub const LANDMARK_COUNT: usize = 33;
/// Number of unordered landmark pairs.
pub const FEATURE_DIM: usize = LANDMARK_COUNT * (LANDMARK_COUNT - 1) / 2;
pub const LEFT_SHOULDER: usize = 11;
pub const RIGHT_SHOULDER: usize = 12;
pub const LEFT_HIP: usize = 23;
pub const RIGHT_HIP: usize = 24;
/// Poses whose reference length falls below this are rejected, meters.
pub const MIN_REFERENCE_LENGTH: f64 = 1e-3;
/// Length of the majority-vote buffer applied to per-frame predictions.
pub const VOTE_WINDOW_S: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub visibility: f64,
}

impl Landmark {
    pub fn new(x: f64, y: f64, z: f64, visibility: f64) -> Self {
        Self { x, y, z, visibility }
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFrame {
    pub view_id: String,
    pub t: f64,
    pub landmarks: Vec<Landmark>,
}

impl PoseFrame {
    pub fn new(view_id: impl Into<String>, t: f64, landmarks: Vec<Landmark>) -> Result<Self> {
        let f = Self {
            view_id: view_id.into(),
            t,
            landmarks,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.landmarks.len() != LANDMARK_COUNT {
            return Err(Error::DimensionMismatch {
                expected: LANDMARK_COUNT,
                got: self.landmarks.len(),
            });
        }
        if self.landmarks.iter().any(|l| !(0.0..=1.0).contains(&l.visibility)) {
            return Err(invalid("landmark visibility outside [0, 1]"));
        }
        Ok(())
    }

    /// Flattened `[x, y, z, visibility]` per landmark.
    pub fn to_values(&self) -> Vec<f64> {
        self.landmarks
            .iter()
            .flat_map(|l| [l.x, l.y, l.z, l.visibility])
            .collect()
    }

    pub fn from_values(view_id: impl Into<String>, t: f64, values: &[f64]) -> Result<Self> {
        if values.len() != 4 * LANDMARK_COUNT {
            return Err(Error::DimensionMismatch {
                expected: 4 * LANDMARK_COUNT,
                got: values.len(),
            });
        }
        let landmarks = values
            .chunks_exact(4)
            .map(|c| Landmark::new(c[0], c[1], c[2], c[3]))
            .collect();
        Self::new(view_id, t, landmarks)
    }
}

/// Combines simultaneous views landmark by landmark, taking each landmark
/// from the most visible view. Equal visibilities go to the view id that
/// sorts first. Timestamps must agree within `frame_period`.
pub fn merge_views(frames: &[PoseFrame], frame_period: f64) -> Result<PoseFrame> {
    let mut sorted: Vec<&PoseFrame> = frames.iter().collect();
    sorted.sort_by(|a, b| a.view_id.cmp(&b.view_id));
    let first = *sorted.first().ok_or(Error::Empty)?;
    for f in &sorted {
        f.validate()?;
        if (f.t - first.t).abs() > frame_period {
            return Err(invalid(alloc::format!(
                "views `{}` and `{}` are {} s apart",
                first.view_id,
                f.view_id,
                (f.t - first.t).abs()
            )));
        }
    }
    if sorted.len() == 1 {
        return Ok(first.clone());
    }
    let landmarks = (0..LANDMARK_COUNT)
        .map(|i| {
            let mut best = first.landmarks[i];
            for f in &sorted[1..] {
                if f.landmarks[i].visibility > best.visibility {
                    best = f.landmarks[i];
                }
            }
            best
        })
        .collect();
    Ok(PoseFrame {
        view_id: String::from("merged"),
        t: sorted.iter().map(|f| f.t).fold(f64::INFINITY, f64::min),
        landmarks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceLength {
    /// Mean of the left and right shoulder-to-hip distances.
    #[default]
    ShoulderHip,
    ShoulderWidth,
    HipWidth,
}

impl ReferenceLength {
    pub fn measure(&self, frame: &PoseFrame) -> f64 {
        let p = |i: usize| frame.landmarks[i].position();
        match self {
            Self::ShoulderHip => {
                0.5 * (dist(p(LEFT_SHOULDER), p(LEFT_HIP)) + dist(p(RIGHT_SHOULDER), p(RIGHT_HIP)))
            }
            Self::ShoulderWidth => dist(p(LEFT_SHOULDER), p(RIGHT_SHOULDER)),
            Self::HipWidth => dist(p(LEFT_HIP), p(RIGHT_HIP)),
        }
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureFeatureVector {
    /// Normalized distances for pairs (i, j), i < j, in lexicographic order.
    pub distances: Vec<f64>,
    pub reference_length: f64,
}

/// Index of pair (i, j), i < j, in the feature vector.
pub fn pair_index(i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < LANDMARK_COUNT);
    i * (2 * LANDMARK_COUNT - i - 1) / 2 + (j - i - 1)
}

pub fn extract_features(frame: &PoseFrame, reference: ReferenceLength) -> Result<GestureFeatureVector> {
    frame.validate()?;
    if frame
        .landmarks
        .iter()
        .any(|l| !(l.x.is_finite() && l.y.is_finite() && l.z.is_finite()))
    {
        return Err(Error::NonFinite);
    }
    let reference_length = reference.measure(frame);
    if !(reference_length >= MIN_REFERENCE_LENGTH) {
        return Err(degenerate("pose reference length below 1 mm"));
    }
    let mut distances = Vec::with_capacity(FEATURE_DIM);
    for i in 0..LANDMARK_COUNT {
        for j in i + 1..LANDMARK_COUNT {
            let d = dist(frame.landmarks[i].position(), frame.landmarks[j].position());
            distances.push(d / reference_length);
        }
    }
    Ok(GestureFeatureVector {
        distances,
        reference_length,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionClass {
    RoutineAlert,
    Calming,
    Commanding,
    SpaceControlling,
    Reactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureDefinition {
    pub id: String,
    pub function_class: FunctionClass,
}

/// Ordered gesture set; class index `k` of a model refers to entry `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub gestures: Vec<GestureDefinition>,
}

const PLACEHOLDER_TAXONOMY: [(&str, FunctionClass); 19] = [
    ("attention_raised_hand", FunctionClass::RoutineAlert),
    ("pointing_at_person", FunctionClass::RoutineAlert),
    ("beckoning", FunctionClass::RoutineAlert),
    ("radio_to_mouth", FunctionClass::RoutineAlert),
    ("palms_down_lowering", FunctionClass::Calming),
    ("open_palms_forward", FunctionClass::Calming),
    ("hands_at_chest", FunctionClass::Calming),
    ("slow_nod_hands_low", FunctionClass::Calming),
    ("stop_palm_out", FunctionClass::Commanding),
    ("point_to_ground", FunctionClass::Commanding),
    ("come_here_wave", FunctionClass::Commanding),
    ("hands_behind_head_order", FunctionClass::Commanding),
    ("arm_extended_barrier", FunctionClass::SpaceControlling),
    ("both_arms_spread", FunctionClass::SpaceControlling),
    ("step_back_palms_out", FunctionClass::SpaceControlling),
    ("hand_on_belt", FunctionClass::SpaceControlling),
    ("arms_crossed_defensive", FunctionClass::Reactive),
    ("hands_raised_guard", FunctionClass::Reactive),
    ("flinch_back", FunctionClass::Reactive),
];

impl Default for Taxonomy {
    /// Nineteen placeholder gestures spread over the five function classes.
    fn default() -> Self {
        Self {
            gestures: PLACEHOLDER_TAXONOMY
                .iter()
                .map(|(id, c)| GestureDefinition {
                    id: String::from(*id),
                    function_class: *c,
                })
                .collect(),
        }
    }
}

impl Taxonomy {
    pub fn validate(&self) -> Result<()> {
        if self.gestures.is_empty() {
            return Err(Error::Empty);
        }
        for (i, g) in self.gestures.iter().enumerate() {
            if self.gestures[..i].iter().any(|o| o.id == g.id) {
                return Err(invalid(alloc::format!("duplicate gesture id `{}`", g.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.gestures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gestures.is_empty()
    }

    pub fn label(&self, class: usize) -> Result<GestureLabel> {
        let g = self
            .gestures
            .get(class)
            .ok_or_else(|| invalid(alloc::format!("class {class} outside the taxonomy")))?;
        Ok(GestureLabel {
            class,
            gesture_id: g.id.clone(),
            function_class: g.function_class,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureLabel {
    pub class: usize,
    pub gesture_id: String,
    pub function_class: FunctionClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GesturePrediction {
    pub label: GestureLabel,
    pub probabilities: Vec<f64>,
}

/// Label and class probabilities for one feature vector.
pub fn predict_gesture(
    model: &ForestModel,
    taxonomy: &Taxonomy,
    features: &GestureFeatureVector,
) -> Result<GesturePrediction> {
    let (class, probabilities) = model.predict(&features.distances)?;
    Ok(GesturePrediction {
        label: taxonomy.label(class)?,
        probabilities,
    })
}

/// Majority vote over the predictions of the last `window` seconds. Ties go
/// to the lowest class index.
#[derive(Debug, Clone)]
pub struct VoteBuffer {
    window: f64,
    entries: VecDeque<(f64, usize)>,
}

impl Default for VoteBuffer {
    fn default() -> Self {
        Self::new(VOTE_WINDOW_S)
    }
}

impl VoteBuffer {
    pub fn new(window: f64) -> Self {
        Self {
            window,
            entries: VecDeque::new(),
        }
    }

    /// Adds the prediction at time `t` and returns the smoothed class.
    pub fn push(&mut self, t: f64, class: usize) -> usize {
        self.entries.push_back((t, class));
        while let Some(&(t0, _)) = self.entries.front() {
            if t - t0 >= self.window {
                self.entries.pop_front();
            } else {
                break;
            }
        }
        let n = self.entries.iter().map(|e| e.1).max().unwrap_or(0) + 1;
        let mut counts = alloc::vec![0.0; n];
        for (_, c) in &self.entries {
            counts[*c] += 1.0;
        }
        crate::math::argmax(&counts).unwrap_or(class)
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frame_with(points: &[(usize, [f64; 3])]) -> PoseFrame {
        let mut lm = vec![Landmark::new(0.0, 0.0, 0.0, 1.0); LANDMARK_COUNT];
        lm[LEFT_SHOULDER] = Landmark::new(0.0, 1.0, 0.0, 1.0);
        lm[RIGHT_SHOULDER] = Landmark::new(0.5, 1.0, 0.0, 1.0);
        lm[LEFT_HIP] = Landmark::new(0.0, 0.0, 0.0, 1.0);
        lm[RIGHT_HIP] = Landmark::new(0.5, 0.0, 0.0, 1.0);
        for (i, p) in points {
            lm[*i] = Landmark::new(p[0], p[1], p[2], 1.0);
        }
        PoseFrame::new("cam", 0.0, lm).unwrap()
    }

    #[test]
    fn pair_indexing_is_lexicographic() {
        let mut k = 0;
        for i in 0..LANDMARK_COUNT {
            for j in i + 1..LANDMARK_COUNT {
                assert_eq!(pair_index(i, j), k);
                k += 1;
            }
        }
        assert_eq!(k, 528);
    }

    // Unit equilateral triangle in slots 0, 1, 2 with a reference length of 1.
    #[test]
    fn triangle_distances() {
        let h = 3f64.sqrt() / 2.0;
        let f = frame_with(&[(0, [0.0, 5.0, 0.0]), (1, [1.0, 5.0, 0.0]), (2, [0.5, 5.0 + h, 0.0])]);
        let v = extract_features(&f, ReferenceLength::ShoulderHip).unwrap();
        assert_eq!(v.reference_length, 1.0);
        assert_eq!(v.distances.len(), FEATURE_DIM);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!((v.distances[pair_index(i, j)] - 1.0).abs() < 1e-12);
        }
        assert!((v.distances[pair_index(0, LEFT_HIP)] - 5.0).abs() < 1e-12);
        assert_eq!(v.distances[pair_index(LEFT_SHOULDER, RIGHT_SHOULDER)], 0.5);
    }

    #[test]
    fn degenerate_and_malformed_poses() {
        let lm = vec![Landmark::new(1.0, 1.0, 1.0, 0.5); LANDMARK_COUNT];
        let f = PoseFrame::new("cam", 0.0, lm.clone()).unwrap();
        assert!(matches!(
            extract_features(&f, ReferenceLength::ShoulderHip),
            Err(Error::Degenerate(_))
        ));
        assert!(PoseFrame::new("cam", 0.0, lm[..32].to_vec()).is_err());
        let mut bad = lm;
        bad[0].visibility = 1.5;
        assert!(PoseFrame::new("cam", 0.0, bad).is_err());
    }

    #[test]
    fn merge_rules() {
        let a = frame_with(&[]);
        assert_eq!(merge_views(core::slice::from_ref(&a), 0.034).unwrap(), a);
        let mut b = a.clone();
        b.view_id = "b".into();
        let mut c = a.clone();
        c.view_id = "a".into();
        b.landmarks[5] = Landmark::new(9.0, 9.0, 9.0, 0.9);
        c.landmarks[5] = Landmark::new(1.0, 1.0, 1.0, 0.2);
        let m = merge_views(&[b.clone(), c.clone()], 0.034).unwrap();
        assert_eq!(m.landmarks[5].x, 9.0);
        b.landmarks[5].visibility = 0.2;
        let m = merge_views(&[b.clone(), c.clone()], 0.034).unwrap();
        assert_eq!(m.landmarks[5].x, 1.0);
        assert!(merge_views(&[], 0.034).is_err());
        b.t = 0.5;
        assert!(merge_views(&[b, c], 0.034).is_err());
    }

    #[test]
    fn taxonomy_default() {
        let t = Taxonomy::default();
        t.validate().unwrap();
        assert_eq!(t.len(), 19);
        for class in [
            FunctionClass::RoutineAlert,
            FunctionClass::Calming,
            FunctionClass::Commanding,
            FunctionClass::SpaceControlling,
            FunctionClass::Reactive,
        ] {
            assert!(t.gestures.iter().any(|g| g.function_class == class));
        }
        assert!(t.label(19).is_err());
    }

    #[test]
    fn vote_buffer_majority() {
        let mut v = VoteBuffer::new(0.5);
        assert_eq!(v.push(0.0, 3), 3);
        assert_eq!(v.push(0.1, 1), 1);
        assert_eq!(v.push(0.2, 3), 3);
        assert_eq!(v.push(0.3, 1), 1);
        assert_eq!(v.push(0.7, 1), 1);
        assert_eq!(v.push(0.8, 2), 1);
    }

    fn rotation(yaw: f64, pitch: f64, roll: f64) -> [[f64; 3]; 3] {
        let (a, b, c) = (yaw.sin_cos(), pitch.sin_cos(), roll.sin_cos());
        let rz = [[a.1, -a.0, 0.0], [a.0, a.1, 0.0], [0.0, 0.0, 1.0]];
        let ry = [[b.1, 0.0, b.0], [0.0, 1.0, 0.0], [-b.0, 0.0, b.1]];
        let rx = [[1.0, 0.0, 0.0], [0.0, c.1, -c.0], [0.0, c.0, c.1]];
        let mul = |p: [[f64; 3]; 3], q: [[f64; 3]; 3]| -> [[f64; 3]; 3] {
            core::array::from_fn(|i| core::array::from_fn(|j| (0..3).map(|k| p[i][k] * q[k][j]).sum()))
        };
        mul(rz, mul(ry, rx))
    }

    proptest! {
        #[test]
        fn rigid_and_scale_invariance(
            seed in 0u64..1000,
            angles in (-3.1f64..3.1, -1.5f64..1.5, -3.1f64..3.1),
            shift in prop::array::uniform3(-5.0f64..5.0),
            scale in 0.3f64..3.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = synth::sample_pose(&mut rng, (seed % 19) as usize, &synth::PoseNoise::default());
            let r = rotation(angles.0, angles.1, angles.2);
            let mut g = f.clone();
            for l in &mut g.landmarks {
                let p = l.position();
                let q: [f64; 3] = core::array::from_fn(|i| {
                    scale * (r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2]) + shift[i]
                });
                (l.x, l.y, l.z) = (q[0], q[1], q[2]);
            }
            let a = extract_features(&f, ReferenceLength::ShoulderHip).unwrap();
            let b = extract_features(&g, ReferenceLength::ShoulderHip).unwrap();
            prop_assert_eq!(b.distances.len(), FEATURE_DIM);
            for (x, y) in a.distances.iter().zip(&b.distances) {
                prop_assert!((x - y).abs() <= 1e-9);
                prop_assert!(*y >= 0.0);
            }
        }
    }
}
