//! Shadow-conditioned relighting: guided diffusion sampling with shadow
//! synthesis, compositing and evaluation utilities.

// Pairwise matrices read more clearly with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod compositor;
pub mod denoisers;
pub mod guidance;
pub mod imagecore;
pub mod io;
pub mod lighting;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod scheduler;
pub mod shadowsynth;
pub mod synthetic;
