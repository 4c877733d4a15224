use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spotlight::denoisers::loopback::{LoopbackMode, LoopbackServer};
use spotlight::denoisers::wire::{self, error_code, ErrorPayload, MsgType};
use spotlight::denoisers::{
    IdentityCodec, SidecarClient, SidecarCodec, SidecarDenoiser, SidecarError, TargetRule, ToyDenoiser,
};
use spotlight::guidance::{run_sampler, Branch, BranchInputs, GuidanceConfig, PredictionKind};
use spotlight::imagecore::{ColorSpace, IntrinsicKind, IntrinsicStack, LatentTensor, MaskMap, PixelMap};
use spotlight::synthetic::DemoScene;
use std::io::Read;
use std::net::TcpStream;
use std::time::{Duration, Instant};

const TIMEOUT: Duration = Duration::from_secs(10);

fn toy() -> ToyDenoiser {
    ToyDenoiser::new(1000, TargetRule::Composite).unwrap()
}

fn inputs(w: usize, h: usize) -> BranchInputs {
    BranchInputs {
        intrinsics: IntrinsicStack::new()
            .with(
                IntrinsicKind::Albedo,
                PixelMap::filled(w, h, 3, 0.4, ColorSpace::Linear),
            )
            .unwrap(),
        shadow_mask: MaskMap::from_fn(w, h, |x, y| ((x + y) % 3 == 0) as u8 as f64).unwrap(),
        object_mask: MaskMap::from_fn(w, h, |x, _| (x < w / 2) as u8 as f64).unwrap(),
        guidance_composite: PixelMap::from_fn(w, h, 3, ColorSpace::Linear, |x, y, c| {
            ((x * 3 + y + c) % 7) as f64 / 7.0
        })
        .unwrap(),
    }
}

fn fuzz_value(rng: &mut ChaCha8Rng) -> f32 {
    match rng.random_range(0..6) {
        0 => -0.0,
        1 => f32::MIN_POSITIVE / rng.random_range(1.0..1e6f32),
        2 => rng.random_range(-1e30f32..1e30),
        3 => f32::from_bits(rng.random::<u32>() & 0x7f7f_ffff) * if rng.random() { 1.0 } else { -1.0 },
        _ => rng.random_range(-4.0f32..4.0),
    }
}

#[test]
fn echo_round_trips_fuzzed_tensors_bit_exact() {
    let (addr, _) = LoopbackServer::new(LoopbackMode::Echo).spawn_tcp().unwrap();
    let mut client = SidecarClient::connect(addr, TIMEOUT).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let cond = inputs(3, 2);
    for i in 0..1000 {
        let (c, h, w) = (rng.random_range(1..6), rng.random_range(1..9), rng.random_range(1..9));
        let data: Vec<f32> = (0..c * h * w).map(|_| fuzz_value(&mut rng)).collect();
        let z = LatentTensor::new(c, h, w, data).unwrap();
        let branch = if i % 2 == 0 { Branch::Positive } else { Branch::Negative };
        let back = client
            .denoise(&z, &cond, rng.random_range(0..1000), branch, PredictionKind::V)
            .unwrap();
        assert_eq!(back.shape(), z.shape());
        let bits = |t: &LatentTensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&z), "tensor {i}");
    }
}

#[test]
fn toy_over_tcp_matches_in_process_sampler() {
    let scene = DemoScene::random(9, 32, 24);
    let light = scene.point_light(-1.0);
    let pair = spotlight::pipeline::point_light_shadows(&scene.mask(), &light, 4).unwrap();
    let bundle = scene.bundle(pair.positive, pair.negative);
    let cfg = GuidanceConfig {
        gamma: 3.0,
        beta: 0.05,
        seed: 11,
        ..Default::default()
    };
    assert_eq!(cfg.steps, 50);

    let local = run_sampler(&bundle, &cfg, &toy(), &IdentityCodec::rgb()).unwrap();

    let (addr, _) = LoopbackServer::new(LoopbackMode::Toy(toy())).spawn_tcp().unwrap();
    let addr = addr.to_string();
    let denoiser = SidecarDenoiser::connect(&addr, TIMEOUT, PredictionKind::V).unwrap();
    let codec = SidecarCodec::new(SidecarClient::connect(addr.as_str(), TIMEOUT).unwrap()).unwrap();
    let remote = run_sampler(&bundle, &cfg, &denoiser, &codec).unwrap();

    let diff = remote.latents_with.max_abs_diff(&local.latents_with);
    assert!(diff < 1e-6, "{diff}");
    assert!(remote.latents_without.max_abs_diff(&local.latents_without) < 1e-6);

    // one connection serves both branches the same way
    let single = SidecarDenoiser::new(
        vec![SidecarClient::connect(addr.as_str(), TIMEOUT).unwrap()],
        PredictionKind::V,
    )
    .unwrap();
    let one = run_sampler(&bundle, &cfg, &single, &IdentityCodec::rgb()).unwrap();
    assert_eq!(one.latents_with, remote.latents_with);
    assert_eq!(one.latents_without, remote.latents_without);
}

#[test]
fn lpips_is_refused_promptly() {
    let (addr, _) = LoopbackServer::new(LoopbackMode::Toy(toy())).spawn_tcp().unwrap();
    let mut client = SidecarClient::connect(addr, TIMEOUT).unwrap();
    let img = PixelMap::filled(4, 4, 3, 0.5, ColorSpace::Linear);
    let start = Instant::now();
    let err = client.lpips(&img, &img).unwrap_err();
    assert!(matches!(err, SidecarError::Unsupported(MsgType::MetricLpips)), "{err}");
    assert!(start.elapsed() < Duration::from_secs(2));

    // bypassing the capability check gets an ERROR frame, not a hang
    let mut raw = TcpStream::connect(addr).unwrap();
    raw.set_read_timeout(Some(TIMEOUT)).unwrap();
    wire::write_frame(&mut raw, MsgType::Hello.code(), &[], 1 << 20).unwrap();
    wire::read_frame(&mut raw, 1 << 20).unwrap().unwrap();
    wire::write_frame(&mut raw, MsgType::MetricLpips.code(), &[], 1 << 20).unwrap();
    let f = wire::read_frame(&mut raw, 1 << 20).unwrap().unwrap();
    assert_eq!(f.kind(), Some(MsgType::Error));
    assert_eq!(ErrorPayload::parse(&f.payload).unwrap().code, error_code::UNSUPPORTED);
}

#[test]
fn oversized_frame_over_tcp() {
    let (addr, _) = LoopbackServer::new(LoopbackMode::Echo)
        .with_max_frame(1024)
        .spawn_tcp()
        .unwrap();
    let mut raw = TcpStream::connect(addr).unwrap();
    raw.set_read_timeout(Some(TIMEOUT)).unwrap();
    wire::write_frame(&mut raw, MsgType::Encode.code(), &vec![0u8; 4096], 1 << 20).unwrap();
    let f = wire::read_frame(&mut raw, 1 << 20).unwrap().unwrap();
    assert_eq!(
        ErrorPayload::parse(&f.payload).unwrap().code,
        error_code::FRAME_TOO_LARGE
    );
    // the server hangs up afterwards
    let mut rest = Vec::new();
    let _ = raw.read_to_end(&mut rest);

    // the client side sees the same limit before sending anything
    let mut client = SidecarClient::connect(addr, TIMEOUT).unwrap();
    let big = LatentTensor::zeros(4, 16, 16);
    assert!(matches!(
        client.denoise(&big, &inputs(16, 16), 10, Branch::Positive, PredictionKind::V),
        Err(SidecarError::FrameTooLarge { .. })
    ));
}

#[test]
fn garbage_does_not_kill_the_server() {
    let (addr, _) = LoopbackServer::new(LoopbackMode::Echo).spawn_tcp().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mut raw = TcpStream::connect(addr).unwrap();
        raw.set_read_timeout(Some(TIMEOUT)).unwrap();
        let junk: Vec<u8> = (0..rng.random_range(1..64)).map(|_| rng.random()).collect();
        // the server may hang up before we finish
        let _ = std::io::Write::write_all(&mut raw, &junk);
        let _ = raw.shutdown(std::net::Shutdown::Write);
        let mut rest = Vec::new();
        let _ = raw.read_to_end(&mut rest);
    }
    let mut client = SidecarClient::connect(addr, TIMEOUT).unwrap();
    assert!(client
        .encode(&PixelMap::filled(2, 2, 3, 0.25, ColorSpace::Linear))
        .is_ok());
}
