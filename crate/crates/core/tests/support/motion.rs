#![allow(dead_code)]

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use cospeech_core::bvh::{BvhClip, BvhJoint, Channel};
use cospeech_core::quat::{Axis, RotationOrder, UnitQuaternion};

pub type M3 = [[f64; 3]; 3];

pub fn axis_matrix(axis: Axis, deg: f64) -> M3 {
    let (s, c) = deg.to_radians().sin_cos();
    match axis {
        Axis::X => [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        Axis::Y => [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        Axis::Z => [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
    }
}

pub fn mat_mul(a: &M3, b: &M3) -> M3 {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    o
}

pub fn mat_vec(a: &M3, v: [f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub const IDENTITY: M3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Product of elementary rotations in channel order.
pub fn euler_matrix(angles_deg: [f64; 3], order: RotationOrder) -> M3 {
    order
        .0
        .iter()
        .fold(IDENTITY, |m, &a| mat_mul(&m, &axis_matrix(a, angles_deg[a.index()])))
}

/// Rotation matrix of a unit quaternion, written out from the Hamilton product.
pub fn quat_matrix(q: &UnitQuaternion) -> M3 {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn mat_diff(a: &M3, b: &M3) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

/// World joint positions with matrices: translation channels add to the offset.
pub fn fk_oracle(joints: &[BvhJoint], row: &[f64]) -> Vec<[f64; 3]> {
    let mut pos: Vec<[f64; 3]> = Vec::new();
    let mut rot: Vec<M3> = Vec::new();
    let mut base = 0;
    for j in joints {
        let mut local = j.offset;
        let mut angles = [0.0; 3];
        let mut axes = Vec::new();
        for (c, ch) in j.channels.iter().enumerate() {
            let v = row[base + c];
            let a = ch.axis().index();
            if ch.is_rotation() {
                angles[a] = v;
                axes.push(ch.axis());
            } else {
                local[a] += v;
            }
        }
        let r = axes.iter().fold(IDENTITY, |m, &ax| mat_mul(&m, &axis_matrix(ax, angles[ax.index()])));
        match j.parent {
            None => {
                pos.push(local);
                rot.push(r);
            }
            Some(p) => {
                let d = mat_vec(&rot[p], local);
                pos.push([pos[p][0] + d[0], pos[p][1] + d[1], pos[p][2] + d[2]]);
                rot.push(mat_mul(&rot[p], &r));
            }
        }
        base += j.channels.len();
    }
    pos
}

fn rotation_channels<R: Rng>(rng: &mut R) -> Vec<Channel> {
    let mut c = vec![Channel::Xrotation, Channel::Yrotation, Channel::Zrotation];
    c.shuffle(rng);
    c
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Random hierarchy of 1..=10 joints; the root always has translation
/// channels, some inner joints do too.
pub fn random_skeleton<R: Rng>(rng: &mut R) -> Vec<BvhJoint> {
    let n = rng.random_range(1..=10);
    let mut joints: Vec<BvhJoint> = Vec::with_capacity(n);
    for i in 0..n {
        let parent = if i == 0 { None } else { Some(rng.random_range(0..i)) };
        let mut channels = Vec::new();
        if i == 0 || rng.random_bool(0.15) {
            let mut p = vec![Channel::Xposition, Channel::Yposition, Channel::Zposition];
            if i != 0 {
                p.shuffle(rng);
            }
            channels.extend(p);
        }
        let rot = rotation_channels(rng);
        let order = RotationOrder::new([rot[0].axis(), rot[1].axis(), rot[2].axis()]).unwrap();
        channels.extend(rot);
        let offset = [(); 3].map(|_| round6(rng.random_range(-20.0..20.0)));
        joints.push(BvhJoint {
            name: format!("joint_{i}"),
            parent,
            offset,
            channels,
            rotation_order: order,
            end_site: None,
        });
    }
    // joints with no children get an end site, as BVH requires
    for i in 0..n {
        if !joints.iter().any(|j| j.parent == Some(i)) {
            joints[i].end_site = Some([(); 3].map(|_| round6(rng.random_range(-10.0..10.0))));
        }
    }
    // the writer emits children depth-first; reorder to match parse order
    depth_first(joints)
}

fn depth_first(joints: Vec<BvhJoint>) -> Vec<BvhJoint> {
    let mut order = Vec::with_capacity(joints.len());
    fn visit(i: usize, joints: &[BvhJoint], order: &mut Vec<usize>) {
        order.push(i);
        for (c, j) in joints.iter().enumerate() {
            if j.parent == Some(i) {
                visit(c, joints, order);
            }
        }
    }
    visit(0, &joints, &mut order);
    let mut new_index = vec![0; joints.len()];
    for (ni, &oi) in order.iter().enumerate() {
        new_index[oi] = ni;
    }
    order
        .iter()
        .map(|&oi| {
            let mut j = joints[oi].clone();
            j.parent = j.parent.map(|p| new_index[p]);
            j
        })
        .collect()
}

pub fn random_clip<R: Rng>(rng: &mut R) -> BvhClip {
    let joints = random_skeleton(rng);
    let w: usize = joints.iter().map(|j| j.channels.len()).sum();
    let frames = rng.random_range(1..=40);
    let fps = *[24.0, 30.0, 60.0, 120.0].choose(rng).unwrap();
    let data = (0..frames * w).map(|_| rng.random_range(-180.0..180.0)).collect();
    BvhClip {
        joints,
        frame_time: 1.0 / fps,
        frames: data,
    }
}

pub fn random_unit<R: Rng>(rng: &mut R) -> UnitQuaternion {
    loop {
        let v: [f64; 4] = [(); 4].map(|_| rng.random_range(-1.0..1.0));
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return UnitQuaternion::new_normalize(v[0], v[1], v[2], v[3]);
        }
    }
}
