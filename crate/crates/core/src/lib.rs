//! Physics-based full-body motion reconstruction from sparse upper-body
//! sensors (headset + two controllers).
//!
//! The crate trains a torque-controlled simulated humanoid to imitate
//! reference motion, observing only the 6-DoF poses of three tracked devices
//! plus its own simulated state. Modules:
//!
//! - [`skeleton`]: canonical humanoid definition and height scaling
//! - [`mocap`]: BVH ingestion, retargeting, resampling, sensor synthesis
//! - [`sim`]: reduced-coordinate articulated dynamics with ground contact
//! - [`obs`]: policy observation encoding in the heading frame
//! - [`reward`]: multi-term Gaussian-kernel imitation reward
//! - [`nn`]: MLP policy/value networks with manual reverse-mode gradients
//! - [`rl`]: PPO training loop with GAE advantages
//! - [`eval`]: tracking-quality metrics and reports
//! - [`config`]: experiment configuration

pub mod config;
pub mod eval;
pub mod mocap;
pub mod pipeline;
pub mod nn;
pub mod obs;
pub mod reward;
pub mod rl;
pub mod sim;
pub mod skeleton;

pub use skeleton::{build_default_skeleton, scale_skeleton, ScaledSkeleton, SkeletonSpec};
