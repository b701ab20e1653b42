//! Sparse sensor synthesis from full-body clips.
//!
//! Device poses emulate a headset and two hand controllers: the world pose
//! of the head/hand link composed with the fixed sensor offset. No noise is
//! added. Traces serialize as JSON lines, one frame per line, with fields
//! `t`, `head.p`, `head.q`, `left.p`, `left.q`, `right.p`, `right.q`;
//! quaternions are `[x, y, z, w]`.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::skeleton::{link, ScaledSkeleton, SensorOffset};
use crate::sim::{fk_on_model, ArticulatedModel, LinkPose};

use super::{MocapError, MotionClip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorSource {
    Synthetic,
    Recorded,
}

/// 6-DoF pose of one tracked device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DevicePose {
    pub position: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl DevicePose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorFrame {
    pub head: DevicePose,
    pub left: DevicePose,
    pub right: DevicePose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorTrace {
    pub frame_rate: f64,
    pub source: SensorSource,
    /// Hash of the configuration that produced this artifact.
    pub producer_hash: u64,
    pub frames: Vec<SensorFrame>,
}

fn compose(link_pose: &LinkPose, offset: &SensorOffset) -> DevicePose {
    DevicePose {
        position: link_pose.position + link_pose.rotation * offset.translation,
        rotation: link_pose.rotation * offset.rotation,
    }
}

/// Synthesizes the paired sensor trace for a clip on the given skeleton:
/// per frame, each device pose is the world pose of its carrier link
/// composed with the fixed sensor offset.
pub fn synthesize_sensors(clip: &MotionClip, skeleton: &ScaledSkeleton) -> SensorTrace {
    let model = ArticulatedModel::from_skeleton(skeleton, false);
    let offsets = skeleton.sensor_offsets();
    let frames = clip
        .frames
        .iter()
        .map(|frame| {
            let (poses, _) = fk_on_model(&model, frame);
            SensorFrame {
                head: compose(&poses[link::HEAD], &offsets.head),
                left: compose(&poses[link::L_HAND], &offsets.left_wrist),
                right: compose(&poses[link::R_HAND], &offsets.right_wrist),
            }
        })
        .collect();
    SensorTrace {
        frame_rate: clip.frame_rate,
        source: SensorSource::Synthetic,
        producer_hash: clip.producer_hash,
        frames,
    }
}

#[derive(Serialize, Deserialize)]
struct DevicePoseWire {
    p: [f64; 3],
    q: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct SensorFrameWire {
    t: f64,
    head: DevicePoseWire,
    left: DevicePoseWire,
    right: DevicePoseWire,
}

fn to_wire(p: &DevicePose) -> DevicePoseWire {
    let q = p.rotation.quaternion();
    DevicePoseWire {
        p: [p.position.x, p.position.y, p.position.z],
        q: [q.i, q.j, q.k, q.w],
    }
}

fn from_wire(w: &DevicePoseWire) -> DevicePose {
    // Components were written from a unit quaternion; skip renormalization
    // so the round trip is bit-exact.
    DevicePose {
        position: Vector3::new(w.p[0], w.p[1], w.p[2]),
        rotation: UnitQuaternion::new_unchecked(Quaternion::new(w.q[3], w.q[0], w.q[1], w.q[2])),
    }
}

#[derive(Serialize, Deserialize)]
struct TraceMetaWire {
    meta: TraceMeta,
}

#[derive(Serialize, Deserialize)]
struct TraceMeta {
    producer_hash: u64,
    source: SensorSource,
}

impl SensorTrace {
    /// Serializes to JSON lines: an initial meta line carrying provenance,
    /// then one frame per line.
    pub fn to_jsonl(&self) -> Result<String, MocapError> {
        let mut out = String::new();
        out.push_str(&serde_json::to_string(&TraceMetaWire {
            meta: TraceMeta {
                producer_hash: self.producer_hash,
                source: self.source,
            },
        })?);
        out.push('\n');
        for (i, f) in self.frames.iter().enumerate() {
            let wire = SensorFrameWire {
                t: i as f64 / self.frame_rate,
                head: to_wire(&f.head),
                left: to_wire(&f.left),
                right: to_wire(&f.right),
            };
            out.push_str(&serde_json::to_string(&wire)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str, source: SensorSource) -> Result<Self, MocapError> {
        let mut frames = Vec::new();
        let mut dt = None;
        let mut prev_t = None;
        let mut producer_hash = 0;
        let mut source = source;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Ok(meta) = serde_json::from_str::<TraceMetaWire>(line) {
                producer_hash = meta.meta.producer_hash;
                source = meta.meta.source;
                continue;
            }
            let wire: SensorFrameWire = serde_json::from_str(line)?;
            if let Some(p) = prev_t {
                dt = Some(wire.t - p);
            }
            prev_t = Some(wire.t);
            frames.push(SensorFrame {
                head: from_wire(&wire.head),
                left: from_wire(&wire.left),
                right: from_wire(&wire.right),
            });
        }
        if frames.len() < 2 {
            return Err(MocapError::InvalidClip(
                "sensor trace needs at least 2 frames".into(),
            ));
        }
        let dt = dt.filter(|d| *d > 0.0).ok_or_else(|| {
            MocapError::InvalidClip("sensor trace has non-increasing timestamps".into())
        })?;
        Ok(Self {
            frame_rate: 1.0 / dt,
            source,
            producer_hash,
            frames,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), MocapError> {
        std::fs::write(path, self.to_jsonl()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path, source: SensorSource) -> Result<Self, MocapError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?, source)
    }
}
