//! Runs the sampler against a denoiser served over TCP with the sidecar
//! wire protocol. The loopback server wraps the toy denoiser, so the remote
//! render must match the in-process one.

use spotlight::denoisers::loopback::{LoopbackMode, LoopbackServer};
use spotlight::denoisers::{IdentityCodec, SidecarClient, SidecarCodec, SidecarDenoiser, TargetRule, ToyDenoiser};
use spotlight::guidance::{GuidanceConfig, PredictionKind};
use spotlight::metrics::pixel_metrics;
use spotlight::pipeline::{point_light_shadows, relight};
use spotlight::synthetic::DemoScene;
use std::time::{Duration, Instant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let toy = ToyDenoiser::new(1000, TargetRule::Composite)?;
    let (addr, _server) = LoopbackServer::new(LoopbackMode::Toy(toy.clone())).spawn_tcp()?;
    let addr = addr.to_string();
    println!("loopback sidecar on {addr}");

    let scene = DemoScene::random(12, 48, 40);
    let shadows = point_light_shadows(&scene.mask(), &scene.point_light(1.0), 8)?;
    let bundle = scene.bundle(shadows.positive, shadows.negative);
    let cfg = GuidanceConfig::default();

    let timeout = Duration::from_secs(10);
    let client = SidecarClient::connect(addr.as_str(), timeout)?;
    let hello = *client.peer().expect("handshake done");
    println!(
        "peer: max frame {} bytes, downscale {}, {} latent channels",
        hello.max_frame_bytes, hello.codec_downscale, hello.latent_channels
    );

    let denoiser = SidecarDenoiser::connect(&addr, timeout, PredictionKind::V)?;
    let codec = SidecarCodec::new(client)?;
    let t = Instant::now();
    let remote = relight(&bundle, &cfg, &denoiser, &codec)?;
    let remote_time = t.elapsed();

    let t = Instant::now();
    let local = relight(&bundle, &cfg, &toy, &IdentityCodec::rgb())?;
    let local_time = t.elapsed();

    let diff = remote.sampler.latents_with.max_abs_diff(&local.sampler.latents_with);
    let psnr = pixel_metrics(&remote.sampler.image_with, &local.sampler.image_with, None)?.psnr;
    println!(
        "{} steps: remote {remote_time:.2?}, in-process {local_time:.2?}",
        cfg.steps
    );
    println!("max latent difference {diff:.2e}, PSNR {psnr:.1} dB");
    Ok(())
}
