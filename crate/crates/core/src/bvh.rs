//! BVH 1.0 motion files: parsing, writing, resampling and segmentation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quat::{self, Axis, RotationOrder, UnitQuaternion};

/// Shortest and longest atomic action clip kept by [`segment_clips`], seconds.
pub const MIN_CLIP_SECONDS: f64 = 0.8;
pub const MAX_CLIP_SECONDS: f64 = 20.0;

#[derive(Debug, Error, PartialEq)]
pub enum BvhError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: frame row has {found} values, expected {expected}")]
    FrameWidth {
        line: usize,
        found: usize,
        expected: usize,
    },
    #[error("line {line}: non-numeric frame value {token:?}")]
    NonNumeric { line: usize, token: String },
    #[error("declared {declared} frames but found {found}")]
    FrameCount { declared: usize, found: usize },
    #[error("invalid clip: {0}")]
    Invalid(String),
    #[error("inverted boundary ({start} s, {end} s)")]
    InvertedBoundary { start: f64, end: f64 },
    #[error("boundary ({start} s, {end} s) is outside the clip or overlaps its predecessor")]
    BoundaryOutOfRange { start: f64, end: f64 },
    #[error("skeletons differ: {0}")]
    SkeletonMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
}

impl Channel {
    fn parse(s: &str) -> Option<Channel> {
        Some(match s {
            "Xposition" => Channel::Xposition,
            "Yposition" => Channel::Yposition,
            "Zposition" => Channel::Zposition,
            "Xrotation" => Channel::Xrotation,
            "Yrotation" => Channel::Yrotation,
            "Zrotation" => Channel::Zrotation,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Xposition => "Xposition",
            Channel::Yposition => "Yposition",
            Channel::Zposition => "Zposition",
            Channel::Xrotation => "Xrotation",
            Channel::Yrotation => "Yrotation",
            Channel::Zrotation => "Zrotation",
        }
    }

    pub fn is_rotation(self) -> bool {
        matches!(
            self,
            Channel::Xrotation | Channel::Yrotation | Channel::Zrotation
        )
    }

    pub fn axis(self) -> Axis {
        match self {
            Channel::Xposition | Channel::Xrotation => Axis::X,
            Channel::Yposition | Channel::Yrotation => Axis::Y,
            Channel::Zposition | Channel::Zrotation => Axis::Z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvhJoint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: [f64; 3],
    pub channels: Vec<Channel>,
    pub rotation_order: RotationOrder,
    /// Offset of the `End Site` child, if the joint has one.
    pub end_site: Option<[f64; 3]>,
}

impl BvhJoint {
    /// Column offsets (within the joint's own channels) of the X/Y/Z position channels.
    pub fn position_slots(&self) -> Option<[usize; 3]> {
        let mut slots = [usize::MAX; 3];
        for (i, c) in self.channels.iter().enumerate() {
            if !c.is_rotation() {
                slots[c.axis().index()] = i;
            }
        }
        slots.iter().all(|&s| s != usize::MAX).then_some(slots)
    }

    /// Column offsets (within the joint's own channels) of the X/Y/Z rotation channels.
    pub fn rotation_slots(&self) -> Option<[usize; 3]> {
        let mut slots = [usize::MAX; 3];
        for (i, c) in self.channels.iter().enumerate() {
            if c.is_rotation() {
                slots[c.axis().index()] = i;
            }
        }
        slots.iter().all(|&s| s != usize::MAX).then_some(slots)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvhClip {
    pub joints: Vec<BvhJoint>,
    pub frame_time: f64,
    /// Row-major `[num_frames × total_channels]`.
    pub frames: Vec<f64>,
}

impl BvhClip {
    pub fn total_channels(&self) -> usize {
        self.joints.iter().map(|j| j.channels.len()).sum()
    }

    pub fn num_frames(&self) -> usize {
        let w = self.total_channels();
        if w == 0 {
            0
        } else {
            self.frames.len() / w
        }
    }

    pub fn duration(&self) -> f64 {
        self.num_frames() as f64 * self.frame_time
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let w = self.total_channels();
        &self.frames[i * w..(i + 1) * w]
    }

    /// First column of each joint's channels in a frame row.
    pub fn channel_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.joints
            .iter()
            .map(|j| {
                let o = acc;
                acc += j.channels.len();
                o
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), BvhError> {
        if self.joints.is_empty() {
            return Err(BvhError::Invalid("no joints".into()));
        }
        for (i, j) in self.joints.iter().enumerate() {
            match j.parent {
                None if i != 0 => {
                    return Err(BvhError::Invalid(format!("joint {} has no parent", j.name)))
                }
                Some(p) if p >= i => {
                    return Err(BvhError::Invalid(format!(
                        "joint {} parent is not earlier in the hierarchy",
                        j.name
                    )))
                }
                _ => {}
            }
            if j.channels.len() != 3 && j.channels.len() != 6 {
                return Err(BvhError::Invalid(format!(
                    "joint {} has {} channels",
                    j.name,
                    j.channels.len()
                )));
            }
        }
        if !(self.frame_time > 0.0) {
            return Err(BvhError::Invalid("frame time must be positive".into()));
        }
        let w = self.total_channels();
        if self.frames.is_empty() || self.frames.len() % w != 0 {
            return Err(BvhError::Invalid(format!(
                "{} values do not form whole frames of width {w}",
                self.frames.len()
            )));
        }
        Ok(())
    }

    pub fn same_skeleton(&self, other: &BvhClip) -> bool {
        self.joints.len() == other.joints.len()
            && self
                .joints
                .iter()
                .zip(&other.joints)
                .all(|(a, b)| a.name == b.name && a.parent == b.parent && a.channels == b.channels)
    }

    /// Copy of frames `[start, end)` with the same skeleton.
    pub fn slice_frames(&self, start: usize, end: usize) -> BvhClip {
        let w = self.total_channels();
        BvhClip {
            joints: self.joints.clone(),
            frame_time: self.frame_time,
            frames: self.frames[start * w..end * w].to_vec(),
        }
    }
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn line(&self) -> usize {
        self.items
            .get(self.pos)
            .or_else(|| self.items.last())
            .map(|t| t.0)
            .unwrap_or(1)
    }

    fn next(&mut self) -> Result<(usize, &'a str), BvhError> {
        let t = self.items.get(self.pos).copied().ok_or_else(|| BvhError::Syntax {
            line: self.line(),
            msg: "unexpected end of file".into(),
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn peek(&self) -> Option<&'a str> {
        self.items.get(self.pos).map(|t| t.1)
    }

    fn expect(&mut self, word: &str) -> Result<(), BvhError> {
        let (line, t) = self.next()?;
        if t != word {
            return Err(BvhError::Syntax {
                line,
                msg: format!("expected {word:?}, found {t:?}"),
            });
        }
        Ok(())
    }

    fn number(&mut self) -> Result<f64, BvhError> {
        let (line, t) = self.next()?;
        t.parse::<f64>().map_err(|_| BvhError::Syntax {
            line,
            msg: format!("expected a number, found {t:?}"),
        })
    }
}

/// Parses BVH text.
pub fn parse_bvh(text: &str) -> Result<BvhClip, BvhError> {
    let mut lines = text.lines().enumerate();
    let mut items = Vec::new();
    let mut motion_line = None;
    for (idx, line) in lines.by_ref() {
        let trimmed = line.trim();
        if trimmed == "MOTION" {
            motion_line = Some(idx + 1);
            break;
        }
        items.extend(trimmed.split_whitespace().map(|t| (idx + 1, t)));
    }
    let motion_line = motion_line.ok_or_else(|| BvhError::Syntax {
        line: text.lines().count().max(1),
        msg: "missing MOTION section".into(),
    })?;

    let mut toks = Tokens { items, pos: 0 };
    toks.expect("HIERARCHY")?;
    let mut joints = Vec::new();
    toks.expect("ROOT")?;
    parse_joint(&mut toks, None, &mut joints)?;
    if let Some(t) = toks.peek() {
        return Err(BvhError::Syntax {
            line: toks.line(),
            msg: format!("unexpected {t:?} after hierarchy"),
        });
    }
    let width: usize = joints.iter().map(|j: &BvhJoint| j.channels.len()).sum();

    let mut header = |label: &str| -> Result<(usize, String), BvhError> {
        for (idx, line) in lines.by_ref() {
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let rest = t.strip_prefix(label).ok_or_else(|| BvhError::Syntax {
                line: idx + 1,
                msg: format!("expected {label:?}"),
            })?;
            return Ok((idx + 1, rest.trim().to_string()));
        }
        Err(BvhError::Syntax {
            line: motion_line,
            msg: format!("missing {label:?}"),
        })
    };
    let (line, v) = header("Frames:")?;
    let declared: usize = v.parse().map_err(|_| BvhError::Syntax {
        line,
        msg: format!("bad frame count {v:?}"),
    })?;
    let (line, v) = header("Frame Time:")?;
    let frame_time: f64 = v.parse().map_err(|_| BvhError::Syntax {
        line,
        msg: format!("bad frame time {v:?}"),
    })?;
    if !(frame_time > 0.0) {
        return Err(BvhError::Syntax {
            line,
            msg: "frame time must be positive".into(),
        });
    }

    let mut frames = Vec::with_capacity(declared * width);
    let mut found = 0;
    for (idx, line) in lines {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let before = frames.len();
        for tok in t.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| BvhError::NonNumeric {
                line: idx + 1,
                token: tok.to_string(),
            })?;
            frames.push(v);
        }
        if frames.len() - before != width {
            return Err(BvhError::FrameWidth {
                line: idx + 1,
                found: frames.len() - before,
                expected: width,
            });
        }
        found += 1;
    }
    if found != declared {
        return Err(BvhError::FrameCount { declared, found });
    }
    let clip = BvhClip {
        joints,
        frame_time,
        frames,
    };
    clip.validate()?;
    Ok(clip)
}

fn parse_joint(
    toks: &mut Tokens<'_>,
    parent: Option<usize>,
    joints: &mut Vec<BvhJoint>,
) -> Result<(), BvhError> {
    let (_, name) = toks.next()?;
    toks.expect("{")?;
    toks.expect("OFFSET")?;
    let offset = [toks.number()?, toks.number()?, toks.number()?];
    toks.expect("CHANNELS")?;
    let (line, n) = toks.next()?;
    let n: usize = n.parse().map_err(|_| BvhError::Syntax {
        line,
        msg: format!("bad channel count {n:?}"),
    })?;
    if n != 3 && n != 6 {
        return Err(BvhError::Syntax {
            line,
            msg: format!("channel count must be 3 or 6, found {n}"),
        });
    }
    let mut channels = Vec::with_capacity(n);
    for _ in 0..n {
        let (line, c) = toks.next()?;
        channels.push(Channel::parse(c).ok_or_else(|| BvhError::Syntax {
            line,
            msg: format!("unknown channel {c:?}"),
        })?);
    }
    let rot_axes: Vec<Axis> = channels
        .iter()
        .filter(|c| c.is_rotation())
        .map(|c| c.axis())
        .collect();
    let rotation_order = match rot_axes.len() {
        0 => RotationOrder::default(),
        3 => RotationOrder::new([rot_axes[0], rot_axes[1], rot_axes[2]]).ok_or_else(|| {
            BvhError::Syntax {
                line,
                msg: "repeated rotation axis".into(),
            }
        })?,
        _ => {
            return Err(BvhError::Syntax {
                line,
                msg: "rotation channels must cover X, Y and Z".into(),
            })
        }
    };
    let index = joints.len();
    joints.push(BvhJoint {
        name: name.to_string(),
        parent,
        offset,
        channels,
        rotation_order,
        end_site: None,
    });

    loop {
        let (line, t) = toks.next()?;
        match t {
            "JOINT" => parse_joint(toks, Some(index), joints)?,
            "End" => {
                toks.expect("Site")?;
                toks.expect("{")?;
                toks.expect("OFFSET")?;
                let o = [toks.number()?, toks.number()?, toks.number()?];
                toks.expect("}")?;
                joints[index].end_site = Some(o);
            }
            "}" => return Ok(()),
            other => {
                return Err(BvhError::Syntax {
                    line,
                    msg: format!("unexpected {other:?} in joint {name}"),
                })
            }
        }
    }
}

/// Serializes a clip as BVH text. Channel values are written with six
/// decimals, the frame time with nine.
pub fn write_bvh(clip: &BvhClip) -> String {
    let mut out = String::new();
    out.push_str("HIERARCHY\n");
    if !clip.joints.is_empty() {
        write_joint(clip, 0, 0, &mut out);
    }
    out.push_str("MOTION\n");
    let _ = writeln!(out, "Frames: {}", clip.num_frames());
    let _ = writeln!(out, "Frame Time: {:.9}", clip.frame_time);
    let w = clip.total_channels();
    for row in clip.frames.chunks(w.max(1)) {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            // avoid "-0.000000"
            let v = if v.abs() < 5e-7 { 0.0 } else { *v };
            let _ = write!(out, "{v:.6}");
        }
        out.push('\n');
    }
    out
}

fn write_joint(clip: &BvhClip, index: usize, depth: usize, out: &mut String) {
    let j = &clip.joints[index];
    let pad = "\t".repeat(depth);
    let kw = if j.parent.is_none() { "ROOT" } else { "JOINT" };
    let _ = writeln!(out, "{pad}{kw} {}", j.name);
    let _ = writeln!(out, "{pad}{{");
    let _ = writeln!(
        out,
        "{pad}\tOFFSET {:.6} {:.6} {:.6}",
        j.offset[0], j.offset[1], j.offset[2]
    );
    let names: Vec<&str> = j.channels.iter().map(|c| c.name()).collect();
    let _ = writeln!(out, "{pad}\tCHANNELS {} {}", j.channels.len(), names.join(" "));
    for (child, cj) in clip.joints.iter().enumerate() {
        if cj.parent == Some(index) {
            write_joint(clip, child, depth + 1, out);
        }
    }
    if let Some(o) = j.end_site {
        let _ = writeln!(out, "{pad}\tEnd Site");
        let _ = writeln!(out, "{pad}\t{{");
        let _ = writeln!(out, "{pad}\t\tOFFSET {:.6} {:.6} {:.6}", o[0], o[1], o[2]);
        let _ = writeln!(out, "{pad}\t}}");
    }
    let _ = writeln!(out, "{pad}}}");
}

/// Rotation of `joint` in a frame row; identity for joints without rotation channels.
pub fn joint_rotation(joint: &BvhJoint, row: &[f64], base: usize) -> UnitQuaternion {
    match joint.rotation_slots() {
        Some(s) => quat::euler_to_quaternion(
            [row[base + s[0]], row[base + s[1]], row[base + s[2]]],
            joint.rotation_order,
        ),
        None => UnitQuaternion::IDENTITY,
    }
}

/// World-space joint positions for one frame row. Translation channels are
/// added to the joint offset; parents precede children in `joints`.
pub fn forward_kinematics(joints: &[BvhJoint], row: &[f64]) -> Vec<[f64; 3]> {
    let mut pos: Vec<[f64; 3]> = Vec::with_capacity(joints.len());
    let mut rot: Vec<UnitQuaternion> = Vec::with_capacity(joints.len());
    let mut base = 0;
    for j in joints {
        let mut local = j.offset;
        if let Some(s) = j.position_slots() {
            for (axis, slot) in s.iter().enumerate() {
                local[axis] += row[base + slot];
            }
        }
        let r = joint_rotation(j, row, base);
        match j.parent {
            Some(p) => {
                let d = rot[p].rotate(local);
                pos.push([pos[p][0] + d[0], pos[p][1] + d[1], pos[p][2] + d[2]]);
                rot.push(rot[p] * r);
            }
            None => {
                pos.push(local);
                rot.push(r);
            }
        }
        base += j.channels.len();
    }
    pos
}

/// Interpolates between two frame rows: linear on position channels, slerp on
/// each joint's rotation. `t` must lie strictly inside (0, 1).
pub(crate) fn interpolate_row(joints: &[BvhJoint], a: &[f64], b: &[f64], t: f64, out: &mut [f64]) {
    let mut base = 0;
    for j in joints {
        let n = j.channels.len();
        for (c, ch) in j.channels.iter().enumerate() {
            if !ch.is_rotation() {
                out[base + c] = a[base + c] + (b[base + c] - a[base + c]) * t;
            }
        }
        if let Some(s) = j.rotation_slots() {
            let qa = joint_rotation(j, a, base);
            let qb = joint_rotation(j, b, base);
            let q = crate::blend::slerp(&qa, &qb, t);
            let reference = [
                a[base + s[0]] + (b[base + s[0]] - a[base + s[0]]) * t,
                a[base + s[1]] + (b[base + s[1]] - a[base + s[1]]) * t,
                a[base + s[2]] + (b[base + s[2]] - a[base + s[2]]) * t,
            ];
            let e = quat::quaternion_to_euler_near(&q, j.rotation_order, reference);
            for axis in 0..3 {
                out[base + s[axis]] = e[axis];
            }
        }
        base += n;
    }
}

/// Resamples to `target_frames` frames spanning the same time interval.
///
/// Endpoint frames are copied exactly. A single-frame clip is replicated.
pub fn resample_clip(clip: &BvhClip, target_frames: usize) -> Result<BvhClip, BvhError> {
    if target_frames < 2 {
        return Err(BvhError::Invalid("target_frames must be at least 2".into()));
    }
    let n = clip.num_frames();
    let w = clip.total_channels();
    if n == 0 {
        return Err(BvhError::Invalid("clip has no frames".into()));
    }
    if n == 1 {
        return Ok(BvhClip {
            joints: clip.joints.clone(),
            frame_time: clip.frame_time,
            frames: clip.frames.repeat(target_frames),
        });
    }
    let mut frames = vec![0.0; target_frames * w];
    let scale = (n - 1) as f64 / (target_frames - 1) as f64;
    for k in 0..target_frames {
        let out = &mut frames[k * w..(k + 1) * w];
        // exact integer arithmetic locates source frames that need no interpolation
        let num = k * (n - 1);
        let den = target_frames - 1;
        let lo = num / den;
        if num % den == 0 {
            out.copy_from_slice(clip.frame(lo));
            continue;
        }
        let t = k as f64 * scale - lo as f64;
        interpolate_row(&clip.joints, clip.frame(lo), clip.frame(lo + 1), t, out);
    }
    Ok(BvhClip {
        joints: clip.joints.clone(),
        frame_time: clip.frame_time * scale,
        frames,
    })
}

/// The clip's pose at `t` seconds, interpolated like [`resample_clip`].
/// Times outside the clip hold the first or last frame.
pub fn sample_row(clip: &BvhClip, t: f64, out: &mut [f64]) {
    let n = clip.num_frames();
    let pos = if clip.frame_time > 0.0 { t / clip.frame_time } else { 0.0 };
    if n == 1 || pos <= 0.0 {
        out.copy_from_slice(clip.frame(0));
        return;
    }
    if pos >= (n - 1) as f64 {
        out.copy_from_slice(clip.frame(n - 1));
        return;
    }
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    // snap to a source frame when within rounding noise of it
    if frac < 1e-9 {
        out.copy_from_slice(clip.frame(lo));
    } else if frac > 1.0 - 1e-9 {
        out.copy_from_slice(clip.frame(lo + 1));
    } else {
        interpolate_row(&clip.joints, clip.frame(lo), clip.frame(lo + 1), frac, out);
    }
}

/// A segment rejected by [`segment_clips`].
#[derive(Debug, Clone, PartialEq)]
pub struct DroppedSegment {
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub duration: f64,
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub clips: Vec<BvhClip>,
    /// Index of the boundary pair each kept clip came from.
    pub kept: Vec<usize>,
    pub dropped: Vec<DroppedSegment>,
}

/// Cuts `clip` at the given `(start_s, end_s)` spans, keeping clips whose
/// duration lies in `[0.8 s, 20 s]`.
pub fn segment_clips(clip: &BvhClip, boundaries: &[(f64, f64)]) -> Result<Segmentation, BvhError> {
    let n = clip.num_frames();
    let duration = clip.duration();
    let tol = 1e-9;
    let mut prev_end = 0.0;
    let mut out = Segmentation {
        clips: Vec::new(),
        kept: Vec::new(),
        dropped: Vec::new(),
    };
    for (index, &(start, end)) in boundaries.iter().enumerate() {
        if end <= start {
            return Err(BvhError::InvertedBoundary { start, end });
        }
        if start < prev_end - tol || start < -tol || end > duration + tol {
            return Err(BvhError::BoundaryOutOfRange { start, end });
        }
        prev_end = end;
        let first = ((start / clip.frame_time).round() as usize).min(n);
        let last = ((end / clip.frame_time).round() as usize).min(n);
        let len = last.saturating_sub(first);
        let seg_duration = len as f64 * clip.frame_time;
        if len == 0
            || seg_duration < MIN_CLIP_SECONDS - tol
            || seg_duration > MAX_CLIP_SECONDS + tol
        {
            log::info!(
                "dropping segment {index} ({start:.3}-{end:.3} s): duration {seg_duration:.3} s"
            );
            out.dropped.push(DroppedSegment {
                index,
                start,
                end,
                duration: seg_duration,
            });
            continue;
        }
        out.clips.push(clip.slice_frames(first, last));
        out.kept.push(index);
    }
    Ok(out)
}
