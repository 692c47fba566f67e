//! Unit quaternions and Euler-channel conversion.
//!
//! Euler angles are always passed as `[x, y, z]` degrees, independent of the
//! order in which the rotations are composed. The composition order comes from
//! [`RotationOrder`], which for BVH data is the order of the rotation channels:
//! `Zrotation Xrotation Yrotation` means `R = Rz · Rx · Ry` (intrinsic).

use std::fmt;
use std::ops::{Mul, Neg};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Axis {
        match i {
            0 => Axis::X,
            1 => Axis::Y,
            _ => Axis::Z,
        }
    }
}

/// Permutation of the three axes, first axis applied outermost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RotationOrder(pub [Axis; 3]);

impl RotationOrder {
    pub const XYZ: RotationOrder = RotationOrder([Axis::X, Axis::Y, Axis::Z]);
    pub const XZY: RotationOrder = RotationOrder([Axis::X, Axis::Z, Axis::Y]);
    pub const YXZ: RotationOrder = RotationOrder([Axis::Y, Axis::X, Axis::Z]);
    pub const YZX: RotationOrder = RotationOrder([Axis::Y, Axis::Z, Axis::X]);
    pub const ZXY: RotationOrder = RotationOrder([Axis::Z, Axis::X, Axis::Y]);
    pub const ZYX: RotationOrder = RotationOrder([Axis::Z, Axis::Y, Axis::X]);

    pub const ALL: [RotationOrder; 6] = [
        Self::XYZ,
        Self::XZY,
        Self::YXZ,
        Self::YZX,
        Self::ZXY,
        Self::ZYX,
    ];

    /// Builds an order from axes; `None` unless they form a permutation.
    pub fn new(axes: [Axis; 3]) -> Option<RotationOrder> {
        let mut seen = [false; 3];
        for a in axes {
            if seen[a.index()] {
                return None;
            }
            seen[a.index()] = true;
        }
        Some(RotationOrder(axes))
    }

    fn indices(self) -> [usize; 3] {
        [self.0[0].index(), self.0[1].index(), self.0[2].index()]
    }

    /// +1 for cyclic orders (XYZ, YZX, ZXY), -1 otherwise.
    fn parity(self) -> f64 {
        let [i, j, _] = self.indices();
        if (i + 1) % 3 == j {
            1.0
        } else {
            -1.0
        }
    }
}

impl Default for RotationOrder {
    fn default() -> Self {
        RotationOrder::ZXY
    }
}

impl fmt::Display for RotationOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in self.0 {
            write!(f, "{a:?}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes the four components. A zero input yields the identity.
    pub fn new_normalize(w: f64, x: f64, y: f64, z: f64) -> UnitQuaternion {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Self::IDENTITY;
        }
        UnitQuaternion {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    pub fn from_axis_angle(axis: Axis, radians: f64) -> UnitQuaternion {
        let (s, c) = (radians * 0.5).sin_cos();
        let mut q = UnitQuaternion { w: c, x: 0.0, y: 0.0, z: 0.0 };
        match axis {
            Axis::X => q.x = s,
            Axis::Y => q.y = s,
            Axis::Z => q.z = s,
        }
        q
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &UnitQuaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn conjugate(&self) -> UnitQuaternion {
        UnitQuaternion {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Rotation angle (radians, in `[0, π]`) between the two orientations.
    pub fn angle_to(&self, other: &UnitQuaternion) -> f64 {
        let d = self.conjugate() * *other;
        let v = (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
        2.0 * v.atan2(d.w.abs())
    }

    /// Distance modulo double cover: `min(‖q−p‖, ‖q+p‖)`.
    pub fn cover_distance(&self, other: &UnitQuaternion) -> f64 {
        let minus = [
            self.w - other.w,
            self.x - other.x,
            self.y - other.y,
            self.z - other.z,
        ];
        let plus = [
            self.w + other.w,
            self.x + other.x,
            self.y + other.y,
            self.z + other.z,
        ];
        let n = |v: [f64; 4]| v.iter().map(|c| c * c).sum::<f64>().sqrt();
        n(minus).min(n(plus))
    }

    /// Row-major rotation matrix.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let UnitQuaternion { w, x, y, z } = *self;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        let m = self.to_matrix();
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;

    fn mul(self, r: UnitQuaternion) -> UnitQuaternion {
        let l = self;
        UnitQuaternion {
            w: l.w * r.w - l.x * r.x - l.y * r.y - l.z * r.z,
            x: l.w * r.x + l.x * r.w + l.y * r.z - l.z * r.y,
            y: l.w * r.y - l.x * r.z + l.y * r.w + l.z * r.x,
            z: l.w * r.z + l.x * r.y - l.y * r.x + l.z * r.w,
        }
    }
}

impl Neg for UnitQuaternion {
    type Output = UnitQuaternion;

    fn neg(self) -> UnitQuaternion {
        UnitQuaternion {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

/// Intrinsic rotation `R_a · R_b · R_c` for `order = (a, b, c)`.
pub fn euler_to_quaternion(angles_deg: [f64; 3], order: RotationOrder) -> UnitQuaternion {
    let mut q = UnitQuaternion::IDENTITY;
    for axis in order.0 {
        let angle = angles_deg[axis.index()].to_radians();
        q = q * UnitQuaternion::from_axis_angle(axis, angle);
    }
    UnitQuaternion::new_normalize(q.w, q.x, q.y, q.z)
}

// Below this cos(middle angle) the first and third axes are treated as aligned.
// Outer angles come from atan2 of entries scaled by cos(middle), so their
// rounding error grows like 1e-16 / cos; treating the band as locked instead
// costs O(cos). 1e-7 keeps both below ~1e-7.
const GIMBAL_EPS: f64 = 1e-7;

/// Canonical Euler decomposition, middle angle in `[-90°, 90°]`.
///
/// At gimbal lock the third angle is fixed to 0.
pub fn quaternion_to_euler(q: &UnitQuaternion, order: RotationOrder) -> [f64; 3] {
    let m = q.to_matrix();
    let [i, j, k] = order.indices();
    let s = order.parity();

    let cos_b = m[i][i].hypot(m[i][j]);
    let b = (s * m[i][k]).atan2(cos_b);
    let (a, c) = if cos_b > GIMBAL_EPS {
        (
            (-s * m[j][k]).atan2(m[k][k]),
            (-s * m[i][j]).atan2(m[i][i]),
        )
    } else {
        ((s * m[k][j]).atan2(m[j][j]), 0.0)
    };

    let mut out = [0.0; 3];
    out[i] = a.to_degrees();
    out[j] = b.to_degrees();
    out[k] = c.to_degrees();
    out
}

/// Euler decomposition closest to `reference`, choosing between the two
/// equivalent triples and unwrapping each angle by multiples of 360°.
///
/// Used when converting interpolated rotations back to channels so that
/// smoothly varying tracks stay continuous.
pub fn quaternion_to_euler_near(
    q: &UnitQuaternion,
    order: RotationOrder,
    reference: [f64; 3],
) -> [f64; 3] {
    let primary = quaternion_to_euler(q, order);
    let [i, j, k] = order.indices();
    let mut alternate = primary;
    alternate[i] = primary[i] + 180.0;
    alternate[j] = 180.0 - primary[j];
    alternate[k] = primary[k] + 180.0;

    let unwrap = |mut angles: [f64; 3]| {
        for (a, r) in angles.iter_mut().zip(reference.iter()) {
            *a += 360.0 * ((r - *a) / 360.0).round();
        }
        angles
    };
    let p = unwrap(primary);
    let a = unwrap(alternate);
    let dist = |v: &[f64; 3]| {
        v.iter()
            .zip(reference.iter())
            .map(|(x, r)| (x - r) * (x - r))
            .sum::<f64>()
    };
    if dist(&a) < dist(&p) {
        a
    } else {
        p
    }
}
