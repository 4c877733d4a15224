//! Denoiser and codec backends: the in-process analytic toy model, the
//! identity codec, and a client for out-of-process backbones speaking the
//! framed sidecar protocol.

mod client;
pub mod loopback;
mod toy;
pub mod wire;

pub use client::{SidecarClient, SidecarCodec, SidecarDenoiser, SidecarError};
pub use toy::{TargetRule, ToyDenoiser};

use crate::guidance::{BackendError, Codec};
use crate::imagecore::{ColorSpace, ImageError, LatentTensor, PixelMap};

/// Codec with downscale 1 whose latents are the linear pixels themselves.
#[derive(Debug, Clone, Copy)]
pub struct IdentityCodec {
    channels: usize,
}

impl IdentityCodec {
    pub fn new(channels: usize) -> Self {
        Self { channels }
    }

    pub fn rgb() -> Self {
        Self::new(3)
    }
}

impl Codec for IdentityCodec {
    fn downscale(&self) -> usize {
        1
    }

    fn latent_channels(&self) -> usize {
        self.channels
    }

    fn encode(&self, img: &PixelMap) -> Result<LatentTensor, BackendError> {
        if img.channels() != self.channels {
            return Err(ImageError::BadChannels(img.channels()).into());
        }
        Ok(LatentTensor::from_pixel_map(img))
    }

    fn decode(&self, latents: &LatentTensor) -> Result<PixelMap, BackendError> {
        Ok(latents.to_pixel_map(ColorSpace::Linear)?)
    }
}
