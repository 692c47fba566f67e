use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::blend::{blend_poses, Pose, TransitionPlan};
use crate::bvh::{sample_row, BvhClip, BvhJoint};
use crate::model::FeatureWindow;

/// One bone of a streamed frame. Rotations are local, `[w, x, y, z]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoneState {
    pub name: String,
    pub pos: [f64; 3],
    pub quat: [f64; 4],
}

/// Wire representation of one output frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFrame {
    pub frame: u64,
    pub timestamp_ms: f64,
    pub starved: bool,
    pub bones: Vec<BoneState>,
}

impl PoseFrame {
    pub fn from_pose(joints: &[BvhJoint], pose: &Pose, frame: u64, fps: u32, starved: bool) -> PoseFrame {
        let bones = joints
            .iter()
            .enumerate()
            .map(|(i, j)| BoneState {
                name: j.name.clone(),
                pos: if i == 0 { pose.root_position() } else { [0.0; 3] },
                quat: pose.rotations[i].as_array(),
            })
            .collect();
        PoseFrame {
            frame,
            timestamp_ms: frame as f64 * 1000.0 / fps as f64,
            starved,
            bones,
        }
    }

    /// Compact JSON, no trailing newline.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pose frames always serialize")
    }
}

/// A clip placed on the output frame grid. It covers frames
/// `start..=start + len`; the first `fade_in` of them cross-fade from the
/// previous segment.
#[derive(Debug, Clone)]
pub struct Segment {
    pub clip: Arc<BvhClip>,
    /// Graph node the clip came from; `None` for generated clips.
    pub node: Option<usize>,
    pub start: u64,
    pub len: u64,
    pub fade_in: u64,
}

impl Segment {
    pub fn end(&self) -> u64 {
        self.start + self.len
    }

    fn covers(&self, f: u64) -> bool {
        self.start <= f && f <= self.end()
    }
}

/// Frames spanned by a clip at `fps`, first to last sample.
pub fn clip_span_frames(clip: &BvhClip, fps: u32) -> u64 {
    let n = clip.num_frames();
    if n < 2 {
        return 0;
    }
    ((n - 1) as f64 * clip.frame_time * fps as f64).round() as u64
}

/// Inference-side state: the feature window and the previously retrieved
/// feature that anchors the next search.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub window: FeatureWindow,
    pub last_feature: Option<Vec<f32>>,
    pub sentences: usize,
    /// Searches that found nothing under τ and were retried with τ = 0.
    pub relaxations: usize,
}

impl Predictor {
    pub fn new(window: usize, d_text: usize, d_audio: usize) -> Predictor {
        Predictor {
            window: FeatureWindow::zeros(window, d_text, d_audio),
            last_feature: None,
            sentences: 0,
            relaxations: 0,
        }
    }
}

/// Emission-side state: scheduled segments, the frame clock and the recorder.
#[derive(Debug, Clone)]
pub struct Timeline {
    pub joints: Vec<BvhJoint>,
    pub fps: u32,
    pub overlap_frames: u64,
    segments: VecDeque<Segment>,
    playhead: u64,
    last_row: Vec<f64>,
    recorder: Option<Vec<f64>>,
}

impl Timeline {
    pub fn new(joints: Vec<BvhJoint>, fps: u32, overlap: f64, record: bool) -> Timeline {
        let width = joints.iter().map(|j| j.channels.len()).sum();
        Timeline {
            joints,
            fps,
            overlap_frames: (overlap * fps as f64).round() as u64,
            segments: VecDeque::new(),
            playhead: 0,
            last_row: vec![0.0; width],
            recorder: record.then(Vec::new),
        }
    }

    /// Index of the next frame to be emitted.
    pub fn playhead(&self) -> u64 {
        self.playhead
    }

    pub fn segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter()
    }

    /// Last frame covered by any scheduled segment.
    pub fn scheduled_end(&self) -> Option<u64> {
        self.segments.back().map(Segment::end)
    }

    /// Places `clip` after the current tail, overlapping it by up to the
    /// configured overlap, never before the playhead. Returns the placed
    /// segment.
    pub fn schedule(&mut self, clip: Arc<BvhClip>, node: Option<usize>) -> &Segment {
        let len = clip_span_frames(&clip, self.fps);
        let (start, fade_in) = match self.segments.back() {
            None => (self.playhead, 0),
            Some(prev) => {
                // leave the previous fade-in intact so at most two segments blend
                let room = prev.len - prev.fade_in;
                let ov = self.overlap_frames.min(room).min(len);
                let start = (prev.end() - ov).max(self.playhead);
                (start, prev.end().saturating_sub(start))
            }
        };
        self.segments.push_back(Segment {
            clip,
            node,
            start,
            len,
            fade_in,
        });
        self.segments.back().expect("just pushed")
    }

    /// The cross-fade into the newest segment, if it has one, in timeline seconds.
    pub fn last_transition(&self) -> Option<TransitionPlan> {
        let n = self.segments.len();
        if n < 2 {
            return None;
        }
        let (a, b) = (&self.segments[n - 2], &self.segments[n - 1]);
        if b.fade_in == 0 {
            return None;
        }
        let fps = self.fps as f64;
        Some(TransitionPlan {
            from_clip: a.node.unwrap_or(usize::MAX),
            to_clip: b.node.unwrap_or(usize::MAX),
            from_offset: (b.start - a.start) as f64 / fps,
            overlap: b.fade_in as f64 / fps,
            start_time: b.start as f64 / fps,
        })
    }

    fn local_row(&self, seg: &Segment, f: u64) -> Vec<f64> {
        let mut row = vec![0.0; self.last_row.len()];
        sample_row(&seg.clip, (f - seg.start) as f64 / self.fps as f64, &mut row);
        row
    }

    /// Produces the frame at the playhead and advances it.
    pub fn next_frame(&mut self) -> PoseFrame {
        let f = self.playhead;
        while self.segments.len() > 1 && self.segments[0].end() < f && self.segments[1].start <= f {
            self.segments.pop_front();
        }
        let newest = self.segments.iter().rposition(|s| s.covers(f));
        let (row, pose, starved) = match newest {
            None => {
                let pose = Pose::from_row(&self.joints, &self.last_row);
                (self.last_row.clone(), pose, true)
            }
            Some(bi) => {
                let b = &self.segments[bi];
                let to_row = self.local_row(b, f);
                let fading = bi > 0 && b.fade_in > 0 && self.segments[bi - 1].covers(f);
                if fading {
                    let a = &self.segments[bi - 1];
                    let from = Pose::from_row(&self.joints, &self.local_row(a, f));
                    let to = Pose::from_row(&self.joints, &to_row);
                    let t = (f - b.start) as f64 / (a.end() - b.start) as f64;
                    let pose = blend_poses(&from, &to, t).expect("segments share a skeleton");
                    let mut row = self.last_row.clone();
                    pose.to_row(&self.joints, Some(&self.last_row), &mut row);
                    (row, pose, false)
                } else {
                    let pose = Pose::from_row(&self.joints, &to_row);
                    (to_row, pose, false)
                }
            }
        };
        if let Some(rec) = self.recorder.as_mut() {
            rec.extend_from_slice(&row);
        }
        self.last_row = row;
        self.playhead += 1;
        PoseFrame::from_pose(&self.joints, &pose, f, self.fps, starved)
    }

    /// Emits frames until the playhead passes `last` (inclusive).
    pub fn emit_through(&mut self, last: u64) -> Vec<PoseFrame> {
        let mut out = Vec::new();
        while self.playhead <= last {
            out.push(self.next_frame());
        }
        out
    }

    /// Everything recorded so far as a clip at the output rate.
    pub fn recording(&self) -> Option<BvhClip> {
        self.recorder.as_ref().map(|frames| BvhClip {
            joints: self.joints.clone(),
            frame_time: 1.0 / self.fps as f64,
            frames: frames.clone(),
        })
    }
}

/// Both halves of a session for single-threaded use.
#[derive(Debug, Clone)]
pub struct SessionState {
    pub predictor: Predictor,
    pub timeline: Timeline,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvh::parse_bvh;

    fn clip(frames: usize, angle: f64) -> Arc<BvhClip> {
        let mut text = String::from(
            "HIERARCHY\nROOT Hips\n{\n OFFSET 0 0 0\n CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation\n End Site\n {\n  OFFSET 0 1 0\n }\n}\nMOTION\n",
        );
        text.push_str(&format!("Frames: {frames}\nFrame Time: 0.0333333\n"));
        for i in 0..frames {
            text.push_str(&format!("{} 0 0 {} 0 0\n", i as f64, angle));
        }
        Arc::new(parse_bvh(&text).unwrap())
    }

    #[test]
    fn placement_respects_overlap_and_playhead() {
        let c = clip(31, 0.0);
        let mut tl = Timeline::new(c.joints.clone(), 60, 0.3, false);
        let a = tl.schedule(c.clone(), Some(0)).clone();
        assert_eq!((a.start, a.len, a.fade_in), (0, 60, 0));
        let b = tl.schedule(c.clone(), Some(1)).clone();
        assert_eq!((b.start, b.fade_in), (42, 18));
        tl.emit_through(200);
        let late = tl.schedule(c, Some(2)).clone();
        assert_eq!((late.start, late.fade_in), (201, 0));
    }

    #[test]
    fn starved_frames_hold_last_pose() {
        let c = clip(4, 30.0);
        let mut tl = Timeline::new(c.joints.clone(), 30, 0.3, true);
        tl.schedule(c, None);
        let frames = tl.emit_through(5);
        assert!(!frames[3].starved && frames[4].starved && frames[5].starved);
        assert_eq!(frames[3].bones, frames[5].bones);
        assert_eq!(tl.recording().unwrap().num_frames(), 6);
    }
}
