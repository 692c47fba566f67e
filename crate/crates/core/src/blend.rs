//! Transitions between consecutive clips: per-joint slerp on rotations and a
//! cubic Hermite ease on the root translation.

use thiserror::Error;

use crate::bvh::{joint_rotation, BvhJoint};
use crate::quat::{self, UnitQuaternion};

/// Below this `sin θ` slerp falls back to normalized lerp.
const SLERP_EPS: f64 = 1e-6;

/// Default cross-fade length between clips, seconds.
pub const DEFAULT_OVERLAP: f64 = 0.3;

#[derive(Debug, Error, PartialEq)]
pub enum BlendError {
    #[error("skeleton mismatch: {0} vs {1} joints")]
    SkeletonMismatch(usize, usize),
    #[error("invalid transition: {0}")]
    InvalidPlan(String),
}

/// Spherical linear interpolation along the shorter arc.
pub fn slerp(q1: &UnitQuaternion, q2: &UnitQuaternion, t: f64) -> UnitQuaternion {
    let mut q2 = *q2;
    let mut dot = q1.dot(&q2);
    if dot < 0.0 {
        q2 = -q2;
        dot = -dot;
    }
    if t <= 0.0 {
        return *q1;
    }
    if t >= 1.0 {
        return q2;
    }
    let dot = dot.min(1.0);
    let theta = dot.acos();
    let sin_theta = theta.sin();
    let (a, b) = if sin_theta < SLERP_EPS {
        (1.0 - t, t)
    } else {
        (
            ((1.0 - t) * theta).sin() / sin_theta,
            (t * theta).sin() / sin_theta,
        )
    };
    UnitQuaternion::new_normalize(
        a * q1.w + b * q2.w,
        a * q1.x + b * q2.x,
        a * q1.y + b * q2.y,
        a * q1.z + b * q2.z,
    )
}

/// `(2t³−3t²+1)·L1 + (−2t³+3t²)·L2`
pub fn cubic_blend(l1: [f64; 3], l2: [f64; 3], t: f64) -> [f64; 3] {
    let t2 = t * t;
    let t3 = t2 * t;
    let a = 2.0 * t3 - 3.0 * t2 + 1.0;
    let b = -2.0 * t3 + 3.0 * t2;
    [
        a * l1[0] + b * l2[0],
        a * l1[1] + b * l2[1],
        a * l1[2] + b * l2[2],
    ]
}

/// Derivative of [`cubic_blend`] with respect to `t`; zero at both ends.
pub fn blend_velocity(l1: [f64; 3], l2: [f64; 3], t: f64) -> [f64; 3] {
    let a = 6.0 * t * t - 6.0 * t;
    let b = -6.0 * t * t + 6.0 * t;
    [
        a * l1[0] + b * l2[0],
        a * l1[1] + b * l2[1],
        a * l1[2] + b * l2[2],
    ]
}

/// Skeleton pose in quaternion form.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    /// Translation channels per joint; `None` for rotation-only joints.
    pub positions: Vec<Option<[f64; 3]>>,
    pub rotations: Vec<UnitQuaternion>,
}

impl Pose {
    pub fn from_row(joints: &[BvhJoint], row: &[f64]) -> Pose {
        let mut positions = Vec::with_capacity(joints.len());
        let mut rotations = Vec::with_capacity(joints.len());
        let mut base = 0;
        for j in joints {
            positions.push(
                j.position_slots()
                    .map(|s| [row[base + s[0]], row[base + s[1]], row[base + s[2]]]),
            );
            rotations.push(joint_rotation(j, row, base));
            base += j.channels.len();
        }
        Pose {
            positions,
            rotations,
        }
    }

    /// Writes the pose as BVH channel values. Euler angles are chosen close to
    /// `reference` when one is given so recorded tracks stay continuous.
    pub fn to_row(&self, joints: &[BvhJoint], reference: Option<&[f64]>, out: &mut [f64]) {
        let mut base = 0;
        for (ji, j) in joints.iter().enumerate() {
            if let (Some(s), Some(p)) = (j.position_slots(), self.positions[ji]) {
                for axis in 0..3 {
                    out[base + s[axis]] = p[axis];
                }
            }
            if let Some(s) = j.rotation_slots() {
                let q = &self.rotations[ji];
                let e = match reference {
                    Some(r) => quat::quaternion_to_euler_near(
                        q,
                        j.rotation_order,
                        [r[base + s[0]], r[base + s[1]], r[base + s[2]]],
                    ),
                    None => quat::quaternion_to_euler(q, j.rotation_order),
                };
                for axis in 0..3 {
                    out[base + s[axis]] = e[axis];
                }
            }
            base += j.channels.len();
        }
    }

    pub fn root_position(&self) -> [f64; 3] {
        self.positions
            .first()
            .copied()
            .flatten()
            .unwrap_or([0.0; 3])
    }
}

/// Blends two poses at `t ∈ [0, 1]`: slerp per joint, cubic ease on the root
/// translation, linear on any other translation channels.
pub fn blend_poses(from: &Pose, to: &Pose, t: f64) -> Result<Pose, BlendError> {
    if from.rotations.len() != to.rotations.len() {
        return Err(BlendError::SkeletonMismatch(
            from.rotations.len(),
            to.rotations.len(),
        ));
    }
    let rotations = from
        .rotations
        .iter()
        .zip(&to.rotations)
        .map(|(a, b)| slerp(a, b, t))
        .collect();
    let positions = from
        .positions
        .iter()
        .zip(&to.positions)
        .enumerate()
        .map(|(i, (a, b))| match (a, b) {
            (Some(a), Some(b)) if i == 0 => Some(cubic_blend(*a, *b, t)),
            // this form is exact at both t = 0 and t = 1
            (Some(a), Some(b)) => Some([
                (1.0 - t) * a[0] + t * b[0],
                (1.0 - t) * a[1] + t * b[1],
                (1.0 - t) * a[2] + t * b[2],
            ]),
            _ => *a,
        })
        .collect();
    Ok(Pose {
        positions,
        rotations,
    })
}

/// A scheduled cross-fade on the output timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionPlan {
    pub from_clip: usize,
    pub to_clip: usize,
    /// Local time in `from_clip` where the fade begins.
    pub from_offset: f64,
    pub overlap: f64,
    pub start_time: f64,
}

/// Frames covering the overlap of `plan`, sampled at `fps`.
///
/// The first frame is the `from_clip` pose and the last frame is the
/// `to_clip` pose at the end of the overlap. Returns `(timeline seconds, pose)`.
pub fn blend_transition<F>(
    plan: &TransitionPlan,
    fps: f64,
    mut pose_at: F,
) -> Result<Vec<(f64, Pose)>, BlendError>
where
    F: FnMut(usize, f64) -> Pose,
{
    if !(plan.overlap > 0.0) {
        return Err(BlendError::InvalidPlan("overlap must be positive".into()));
    }
    let steps = ((plan.overlap * fps).round() as usize).max(1);
    let mut frames = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let dt = k as f64 / fps;
        let t = k as f64 / steps as f64;
        let from = pose_at(plan.from_clip, plan.from_offset + dt);
        let to = pose_at(plan.to_clip, dt);
        frames.push((plan.start_time + dt, blend_poses(&from, &to, t)?));
    }
    Ok(frames)
}
