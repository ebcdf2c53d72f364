//! Multi-ROI kernelized correlation filter tracking for low-frame-rate
//! aerial (hyperspectral) imagery.
//!
//! One correlation filter is evaluated over an overlapping grid of
//! detection windows; the per-window responses are fused by their
//! peak-to-sidelobe ratios. Around that core the crate provides feature
//! encoders, frame registration, a synthetic sequence simulator and the
//! precision / centre-location-error evaluation used to compare
//! configurations.

pub mod error;
pub mod eval;
pub mod features;
pub mod fft;
pub mod imaging;
pub mod kcf;
pub mod registration;
pub mod registry;
pub mod sim;
pub mod tracker;
pub mod cli;

pub use error::{Error, Result};
pub use imaging::{ChannelStack, Rect};
