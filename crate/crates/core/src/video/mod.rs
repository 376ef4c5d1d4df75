//! Numerical pieces of the video pipeline: temporal smoothing of landmark
//! tracks, landmark masks, Poisson seamless cloning and latent-sequence
//! editing.

mod image;
mod mask;
mod poisson;
mod sequence;
mod smooth;

pub use image::{ImageGrid, MaskGrid};
pub use mask::{convex_hull, mask_from_landmarks};
pub use poisson::{poisson_blend, poisson_blend_with_stats, solve_poisson_channel, BlendStats, ChannelSolve, CG_TOLERANCE};
pub use sequence::{edit_sequence, stability_report, temporal_consistency, AlphaSchedule, LatentSequence, StabilityReport};
pub use smooth::{gaussian_kernel, gaussian_smooth_track, smooth_series, LandmarkTrack};
