//! BVH motion-capture file parsing.
//!
//! Strict on the HIERARCHY/MOTION grammar, tolerant of whitespace. Rotations
//! are stored in degrees as written in the file and composed in channel
//! order; any of the six axis permutations is accepted, repeated axes are
//! not.

use nalgebra::{Rotation3, Vector3};

use super::MocapError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BvhChannel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
}

impl BvhChannel {
    fn parse(word: &str) -> Option<Self> {
        match word {
            "Xposition" => Some(Self::Xposition),
            "Yposition" => Some(Self::Yposition),
            "Zposition" => Some(Self::Zposition),
            "Xrotation" => Some(Self::Xrotation),
            "Yrotation" => Some(Self::Yrotation),
            "Zrotation" => Some(Self::Zrotation),
            _ => None,
        }
    }

    pub fn is_rotation(&self) -> bool {
        matches!(self, Self::Xrotation | Self::Yrotation | Self::Zrotation)
    }
}

#[derive(Debug, Clone)]
pub struct BvhJoint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: Vector3<f64>,
    /// (channel, column in each motion frame).
    pub channels: Vec<(BvhChannel, usize)>,
    /// Offset of an End Site child, if present.
    pub end_site: Option<Vector3<f64>>,
}

#[derive(Debug, Clone)]
pub struct BvhHierarchy {
    pub joints: Vec<BvhJoint>,
}

#[derive(Debug, Clone)]
pub struct BvhMotion {
    pub frame_time: f64,
    pub frames: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct RawBvh {
    pub hierarchy: BvhHierarchy,
    pub motion: BvhMotion,
}

impl RawBvh {
    pub fn frame_rate(&self) -> f64 {
        1.0 / self.motion.frame_time
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.hierarchy.joints.iter().position(|j| j.name == name)
    }

    /// Local rotation of a joint at a frame: the channel rotations composed
    /// in listed order, angles in degrees.
    pub fn local_rotation(&self, joint: usize, frame: usize) -> Rotation3<f64> {
        let mut r = Rotation3::identity();
        for (ch, col) in &self.hierarchy.joints[joint].channels {
            let value = self.motion.frames[frame][*col].to_radians();
            let axis = match ch {
                BvhChannel::Xrotation => Vector3::x_axis(),
                BvhChannel::Yrotation => Vector3::y_axis(),
                BvhChannel::Zrotation => Vector3::z_axis(),
                _ => continue,
            };
            r *= Rotation3::from_axis_angle(&axis, value);
        }
        r
    }

    /// Local translation channels of a joint at a frame (file units).
    pub fn local_translation(&self, joint: usize, frame: usize) -> Vector3<f64> {
        let mut t = Vector3::zeros();
        for (ch, col) in &self.hierarchy.joints[joint].channels {
            let value = self.motion.frames[frame][*col];
            match ch {
                BvhChannel::Xposition => t.x = value,
                BvhChannel::Yposition => t.y = value,
                BvhChannel::Zposition => t.z = value,
                _ => {}
            }
        }
        t
    }

    /// World pose of every joint at a frame: (rotation, position in file
    /// units).
    pub fn world_poses(&self, frame: usize) -> Vec<(Rotation3<f64>, Vector3<f64>)> {
        let mut out: Vec<(Rotation3<f64>, Vector3<f64>)> =
            Vec::with_capacity(self.hierarchy.joints.len());
        for (i, joint) in self.hierarchy.joints.iter().enumerate() {
            let local_r = self.local_rotation(i, frame);
            let local_t = joint.offset + self.local_translation(i, frame);
            let (r, p) = match joint.parent {
                Some(p) => {
                    let (pr, pp) = out[p];
                    (pr * local_r, pp + pr * local_t)
                }
                None => (local_r, local_t),
            };
            out.push((r, p));
        }
        out
    }
}

struct Tokenizer<'a> {
    words: Vec<(&'a str, usize, usize)>,
    pos: usize,
}

impl<'a> Tokenizer<'a> {
    fn new(text: &'a str) -> Self {
        let mut words = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let mut col = 0usize;
            for word in line.split_whitespace() {
                let at = line[col..].find(word).map(|o| col + o).unwrap_or(col);
                words.push((word, ln + 1, at + 1));
                col = at + word.len();
            }
        }
        Self { words, pos: 0 }
    }

    fn peek(&self) -> Option<&(&'a str, usize, usize)> {
        self.words.get(self.pos)
    }

    fn next(&mut self) -> Option<(&'a str, usize, usize)> {
        let w = self.words.get(self.pos).copied();
        self.pos += 1;
        w
    }

    fn location(&self) -> (usize, usize) {
        self.words
            .get(self.pos.min(self.words.len().saturating_sub(1)))
            .map(|&(_, l, c)| (l, c))
            .unwrap_or((0, 0))
    }

    fn err(&self, message: impl Into<String>) -> MocapError {
        let (line, column) = self.location();
        MocapError::ParseError {
            line,
            column,
            message: message.into(),
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), MocapError> {
        match self.next() {
            Some((w, _, _)) if w == token => Ok(()),
            Some((w, l, c)) => Err(MocapError::ParseError {
                line: l,
                column: c,
                message: format!("expected '{token}', found '{w}'"),
            }),
            None => Err(self.err(format!("expected '{token}', found end of input"))),
        }
    }

    fn number(&mut self) -> Result<f64, MocapError> {
        match self.next() {
            Some((w, l, c)) => w.parse().map_err(|_| MocapError::ParseError {
                line: l,
                column: c,
                message: format!("expected number, found '{w}'"),
            }),
            None => Err(self.err("expected number, found end of input")),
        }
    }

    fn integer(&mut self) -> Result<usize, MocapError> {
        match self.next() {
            Some((w, l, c)) => w.parse().map_err(|_| MocapError::ParseError {
                line: l,
                column: c,
                message: format!("expected integer, found '{w}'"),
            }),
            None => Err(self.err("expected integer, found end of input")),
        }
    }
}

/// Parses BVH text into the raw hierarchy and motion channels.
pub fn parse_bvh(text: &str) -> Result<RawBvh, MocapError> {
    let mut tk = Tokenizer::new(text);
    tk.expect("HIERARCHY")?;
    tk.expect("ROOT")?;
    let mut joints = Vec::new();
    let mut channel_count = 0usize;
    parse_joint(&mut tk, None, &mut joints, &mut channel_count)?;

    tk.expect("MOTION")?;
    tk.expect("Frames:")?;
    let n_frames = tk.integer()?;
    // "Frame Time:" splits into two words.
    tk.expect("Frame")?;
    tk.expect("Time:")?;
    let frame_time = tk.number()?;
    if frame_time <= 0.0 {
        return Err(tk.err("frame time must be positive"));
    }
    let mut frames = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        let mut row = Vec::with_capacity(channel_count);
        for _ in 0..channel_count {
            row.push(tk.number()?);
        }
        frames.push(row);
    }
    if let Some(&(w, l, c)) = tk.peek() {
        return Err(MocapError::ParseError {
            line: l,
            column: c,
            message: format!("unexpected trailing token '{w}'"),
        });
    }
    Ok(RawBvh {
        hierarchy: BvhHierarchy { joints },
        motion: BvhMotion { frame_time, frames },
    })
}

fn parse_joint(
    tk: &mut Tokenizer,
    parent: Option<usize>,
    joints: &mut Vec<BvhJoint>,
    channel_count: &mut usize,
) -> Result<(), MocapError> {
    let name = match tk.next() {
        Some((w, _, _)) => w.to_string(),
        None => return Err(tk.err("expected joint name")),
    };
    tk.expect("{")?;
    tk.expect("OFFSET")?;
    let offset = Vector3::new(tk.number()?, tk.number()?, tk.number()?);
    tk.expect("CHANNELS")?;
    let n = tk.integer()?;
    let mut channels = Vec::with_capacity(n);
    let mut rot_axes = Vec::new();
    for _ in 0..n {
        match tk.next() {
            Some((w, l, c)) => match BvhChannel::parse(w) {
                Some(ch) => {
                    if ch.is_rotation() {
                        if rot_axes.contains(&ch) {
                            return Err(MocapError::UnsupportedChannelOrder(format!(
                                "repeated rotation channel {w} on joint {name}"
                            )));
                        }
                        rot_axes.push(ch);
                    }
                    channels.push((ch, *channel_count));
                    *channel_count += 1;
                }
                None => {
                    return Err(MocapError::ParseError {
                        line: l,
                        column: c,
                        message: format!("unknown channel '{w}'"),
                    })
                }
            },
            None => return Err(tk.err("expected channel name")),
        }
    }
    let index = joints.len();
    joints.push(BvhJoint {
        name,
        parent,
        offset,
        channels,
        end_site: None,
    });

    loop {
        match tk.peek() {
            Some(&("JOINT", _, _)) => {
                tk.next();
                parse_joint(tk, Some(index), joints, channel_count)?;
            }
            Some(&("End", _, _)) => {
                tk.next();
                tk.expect("Site")?;
                tk.expect("{")?;
                tk.expect("OFFSET")?;
                let end = Vector3::new(tk.number()?, tk.number()?, tk.number()?);
                tk.expect("}")?;
                joints[index].end_site = Some(end);
            }
            Some(&("}", _, _)) => {
                tk.next();
                return Ok(());
            }
            Some(&(w, l, c)) => {
                return Err(MocapError::ParseError {
                    line: l,
                    column: c,
                    message: format!("expected JOINT, End Site or '}}', found '{w}'"),
                })
            }
            None => return Err(tk.err("unexpected end of input inside joint block")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_JOINT: &str = "\
HIERARCHY
ROOT hip
{
    OFFSET 0.0 1.0 0.0
    CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
    JOINT knee
    {
        OFFSET 0.0 -0.5 0.0
        CHANNELS 3 Zrotation Xrotation Yrotation
        End Site
        {
            OFFSET 0.0 -0.4 0.0
        }
    }
}
MOTION
Frames: 3
Frame Time: 0.033333
0 1 0 0 0 0 0 0 0
0 1 0 10 20 30 5 0 0
0 1 0 0 0 0 0 45 0
";

    #[test]
    fn parses_two_joint_fixture() {
        let bvh = parse_bvh(TWO_JOINT).unwrap();
        assert_eq!(bvh.hierarchy.joints.len(), 2);
        assert_eq!(bvh.motion.frames.len(), 3);
        assert_eq!(bvh.hierarchy.joints[1].parent, Some(0));
        assert_eq!(
            bvh.hierarchy.joints[1].end_site,
            Some(Vector3::new(0.0, -0.4, 0.0))
        );
    }

    #[test]
    fn missing_motion_is_parse_error() {
        let text = TWO_JOINT.split("MOTION").next().unwrap();
        match parse_bvh(text) {
            Err(MocapError::ParseError { .. }) => {}
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn zxy_rotation_order_composes_correctly() {
        let bvh = parse_bvh(TWO_JOINT).unwrap();
        // Frame 1 root channels: Z=10, X=20, Y=30 degrees, composed Z then
        // X then Y. Compare against an independent composition.
        let got = bvh.local_rotation(0, 1);
        let z = Rotation3::from_axis_angle(&Vector3::z_axis(), 10f64.to_radians());
        let x = Rotation3::from_axis_angle(&Vector3::x_axis(), 20f64.to_radians());
        let y = Rotation3::from_axis_angle(&Vector3::y_axis(), 30f64.to_radians());
        let expected = z * x * y;
        assert!((got.matrix() - expected.matrix()).norm() < 1e-12);
    }

    #[test]
    fn repeated_rotation_axis_is_unsupported() {
        let text = TWO_JOINT.replace(
            "CHANNELS 3 Zrotation Xrotation Yrotation",
            "CHANNELS 3 Zrotation Zrotation Yrotation",
        );
        match parse_bvh(&text) {
            Err(MocapError::UnsupportedChannelOrder(_)) => {}
            other => panic!("expected UnsupportedChannelOrder, got {other:?}"),
        }
    }

    #[test]
    fn world_poses_accumulate_offsets() {
        let bvh = parse_bvh(TWO_JOINT).unwrap();
        let poses = bvh.world_poses(0);
        // Root offset (0,1,0) plus translation channels (0,1,0), then the
        // knee offset (0,-0.5,0).
        assert!((poses[1].1 - Vector3::new(0.0, 1.5, 0.0)).norm() < 1e-12);
    }
}
