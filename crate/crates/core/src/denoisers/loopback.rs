//! In-process reference server for the sidecar protocol.
//!
//! `Echo` answers DENOISE with the latents it was given, which is enough to
//! exercise framing. `Toy` answers with the analytic [`ToyDenoiser`], so a
//! sampler run through the wire can be compared with an in-process run.

use super::client::{latent_from_wire, latent_tensor};
use super::wire::{self, error_code, DenoiseRequest, ErrorPayload, Hello, MsgType, WireTensor};
use super::{SidecarError, ToyDenoiser};
use crate::guidance::BranchInputs;
use crate::imagecore::{ColorSpace, IntrinsicKind, IntrinsicStack, LatentTensor, MaskMap, PixelMap};
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener};
use std::thread::JoinHandle;

#[derive(Debug, Clone)]
pub enum LoopbackMode {
    Echo,
    Toy(ToyDenoiser),
}

#[derive(Debug, Clone)]
pub struct LoopbackServer {
    pub mode: LoopbackMode,
    pub max_frame: u64,
    /// Announced codec geometry. ENCODE and DECODE are identities, so the
    /// downscale is 1 and channels pass through unchanged.
    pub latent_channels: u8,
}

impl LoopbackServer {
    pub fn new(mode: LoopbackMode) -> Self {
        Self {
            mode,
            max_frame: wire::DEFAULT_MAX_FRAME,
            latent_channels: 3,
        }
    }

    pub fn with_max_frame(mut self, max_frame: u64) -> Self {
        self.max_frame = max_frame;
        self
    }

    pub fn hello(&self) -> Hello {
        let mut supported = 0;
        for m in [MsgType::Hello, MsgType::Encode, MsgType::Decode, MsgType::Denoise] {
            supported |= m.capability_bit().unwrap();
        }
        Hello {
            max_frame_bytes: self.max_frame,
            supported,
            codec_downscale: 1,
            latent_channels: self.latent_channels,
        }
    }

    /// Serves requests until the peer hangs up. Oversized frames get an
    /// ERROR 4 and close the connection.
    pub fn serve_connection<S: Read + Write>(&self, mut stream: S) -> Result<(), SidecarError> {
        loop {
            let frame = match wire::read_frame(&mut stream, self.max_frame) {
                Ok(Some(f)) => f,
                Ok(None) => return Ok(()),
                Err(SidecarError::FrameTooLarge { size, max }) => {
                    let msg = format!("frame of {size} bytes exceeds {max}");
                    send_error(&mut stream, error_code::FRAME_TOO_LARGE, &msg, self.max_frame)?;
                    return Ok(());
                }
                Err(e) => return Err(e),
            };
            let reply = match frame.kind() {
                Some(m) if !frame.is_response() && self.hello().supports(m) => self.handle(m, &frame.payload),
                _ => Err((
                    error_code::UNSUPPORTED,
                    format!("message type 0x{:04x} not supported", frame.msg_type),
                )),
            };
            match reply {
                Ok(payload) => wire::write_frame(
                    &mut stream,
                    frame.msg_type | wire::RESPONSE_BIT,
                    &payload,
                    self.max_frame,
                )?,
                Err((code, msg)) => send_error(&mut stream, code, &msg, self.max_frame)?,
            }
        }
    }

    fn handle(&self, msg: MsgType, payload: &[u8]) -> Result<Vec<u8>, (u32, String)> {
        let bad = |e: SidecarError| (error_code::BAD_TENSOR, e.to_string());
        match msg {
            MsgType::Hello => {
                Hello::parse(payload).map_err(bad)?;
                Ok(self.hello().to_bytes())
            }
            MsgType::Encode | MsgType::Decode => {
                let t = wire::single_tensor(payload).map_err(bad)?;
                latent_from_wire(t.clone()).map_err(bad)?;
                Ok(t.to_bytes())
            }
            MsgType::Denoise => {
                let req = DenoiseRequest::parse(payload).map_err(bad)?;
                let z = latent_from_wire(req.latents.clone()).map_err(bad)?;
                let v = match &self.mode {
                    LoopbackMode::Echo => z,
                    LoopbackMode::Toy(toy) => {
                        if req.prediction_kind != 0 {
                            return Err((error_code::UNSUPPORTED, "only v-prediction is served".into()));
                        }
                        let inputs = inputs_from_groups(&req.groups).map_err(|m| (error_code::BAD_TENSOR, m))?;
                        toy.denoise_v(&z, &inputs, req.timestep as usize)
                            .map_err(|e| (error_code::MODEL_FAILURE, e.to_string()))?
                            .into_tensor()
                    }
                };
                Ok(latent_tensor(&v).to_bytes())
            }
            MsgType::MetricLpips | MsgType::Error => Err((error_code::UNSUPPORTED, format!("{msg:?} not supported"))),
        }
    }

    /// Binds an ephemeral localhost port and serves each connection on its
    /// own thread. The listener thread runs until the process exits.
    pub fn spawn_tcp(self) -> std::io::Result<(SocketAddr, JoinHandle<()>)> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let server = self.clone();
                let _ = stream.set_nodelay(true);
                std::thread::spawn(move || {
                    let _ = server.serve_connection(stream);
                });
            }
        });
        Ok((addr, handle))
    }
}

fn send_error<S: Write>(stream: &mut S, code: u32, message: &str, max: u64) -> Result<(), SidecarError> {
    let payload = ErrorPayload {
        code,
        message: message.to_string(),
    };
    wire::write_frame(stream, MsgType::Error.response_code(), &payload.to_bytes(), max)
}

fn group_map(t: &WireTensor, space: ColorSpace) -> Result<PixelMap, String> {
    latent_from_wire(t.clone())
        .and_then(|l: LatentTensor| l.to_pixel_map(space).map_err(|e| SidecarError::Protocol(e.to_string())))
        .map_err(|e| e.to_string())
}

fn group_mask(t: &WireTensor) -> Result<MaskMap, String> {
    let m = group_map(t, ColorSpace::Raw)?;
    if m.channels() != 1 {
        return Err(format!("mask has {} channels", m.channels()));
    }
    MaskMap::from_clamped(m.width(), m.height(), m.into_data()).map_err(|e| e.to_string())
}

fn inputs_from_groups(groups: &[(String, WireTensor)]) -> Result<BranchInputs, String> {
    let find = |name: &str| {
        groups
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| format!("missing channel group {name}"))
    };
    let mut intrinsics = IntrinsicStack::new();
    for (name, t) in groups {
        if let Some(kind) = IntrinsicKind::parse(name) {
            let space = match kind {
                IntrinsicKind::Normals | IntrinsicKind::Depth => ColorSpace::Raw,
                _ => ColorSpace::Linear,
            };
            intrinsics
                .insert(kind, group_map(t, space)?)
                .map_err(|e| e.to_string())?;
        }
    }
    Ok(BranchInputs {
        intrinsics,
        shadow_mask: group_mask(find("shadow_mask")?)?,
        object_mask: group_mask(find("object_mask")?)?,
        guidance_composite: group_map(find("guidance_composite")?, ColorSpace::Linear)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoisers::{SidecarClient, TargetRule};
    use crate::guidance::{Branch, PredictionKind};
    use std::os::unix::net::UnixStream;

    fn pair(server: LoopbackServer) -> SidecarClient<UnixStream> {
        let (a, b) = UnixStream::pair().unwrap();
        std::thread::spawn(move || server.serve_connection(b));
        let mut c = SidecarClient::new(a);
        c.handshake().unwrap();
        c
    }

    fn inputs() -> BranchInputs {
        BranchInputs {
            intrinsics: IntrinsicStack::new()
                .with(
                    IntrinsicKind::Albedo,
                    PixelMap::filled(4, 3, 3, 0.5, ColorSpace::Linear),
                )
                .unwrap(),
            shadow_mask: MaskMap::from_fn(4, 3, |x, _| (x == 3) as u8 as f64).unwrap(),
            object_mask: MaskMap::from_fn(4, 3, |x, _| (x == 1) as u8 as f64).unwrap(),
            guidance_composite: PixelMap::from_fn(4, 3, 3, ColorSpace::Linear, |x, y, c| (x + y + c) as f64 / 8.0)
                .unwrap(),
        }
    }

    #[test]
    fn echo_round_trips_latents_exactly() {
        let mut c = pair(LoopbackServer::new(LoopbackMode::Echo));
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        let z = LatentTensor::randn(3, 3, 4, &mut rng);
        let v = c
            .denoise(&z, &inputs(), 981, Branch::Negative, PredictionKind::V)
            .unwrap();
        assert_eq!(v, z);
        let img = inputs().guidance_composite;
        let lat = c.encode(&img).unwrap();
        assert_eq!(c.decode(&lat).unwrap(), img);
    }

    #[test]
    fn toy_over_the_wire_matches_in_process() {
        let toy = ToyDenoiser::new(1000, TargetRule::Composite).unwrap();
        let mut c = pair(LoopbackServer::new(LoopbackMode::Toy(toy.clone())));
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(2);
        let z = LatentTensor::randn(3, 3, 4, &mut rng);
        let remote = c
            .denoise(&z, &inputs(), 500, Branch::Positive, PredictionKind::V)
            .unwrap();
        let local = toy.denoise_v(&z, &inputs(), 500).unwrap().into_tensor();
        assert!(remote.max_abs_diff(&local) < 1e-6);
    }

    #[test]
    fn unsupported_and_missing_groups_are_remote_errors() {
        let mut c = pair(LoopbackServer::new(LoopbackMode::Echo));
        let img = PixelMap::filled(2, 2, 3, 0.5, ColorSpace::Linear);
        assert!(matches!(
            c.lpips(&img, &img),
            Err(SidecarError::Unsupported(MsgType::MetricLpips))
        ));

        let toy = ToyDenoiser::new(1000, TargetRule::Composite).unwrap();
        let server = LoopbackServer::new(LoopbackMode::Toy(toy));
        let (mut a, b) = UnixStream::pair().unwrap();
        std::thread::spawn(move || server.serve_connection(b));
        let req = DenoiseRequest {
            latents: latent_tensor(&LatentTensor::zeros(3, 2, 2)),
            groups: vec![],
            timestep: 1,
            branch: 0,
            prediction_kind: 0,
        };
        wire::write_frame(&mut a, MsgType::Denoise.code(), &req.to_bytes().unwrap(), 1 << 20).unwrap();
        let f = wire::read_frame(&mut a, 1 << 20).unwrap().unwrap();
        assert_eq!(f.kind(), Some(MsgType::Error));
        assert_eq!(ErrorPayload::parse(&f.payload).unwrap().code, error_code::BAD_TENSOR);

        // LPIPS sent anyway, bypassing the capability check
        wire::write_frame(&mut a, MsgType::MetricLpips.code(), &[], 1 << 20).unwrap();
        let f = wire::read_frame(&mut a, 1 << 20).unwrap().unwrap();
        assert_eq!(ErrorPayload::parse(&f.payload).unwrap().code, error_code::UNSUPPORTED);
    }

    #[test]
    fn oversized_frame_gets_error_4() {
        let server = LoopbackServer::new(LoopbackMode::Echo).with_max_frame(64);
        let (mut a, b) = UnixStream::pair().unwrap();
        let h = std::thread::spawn(move || server.serve_connection(b));
        wire::write_frame(&mut a, MsgType::Encode.code(), &[0u8; 100], 1 << 20).unwrap();
        let f = wire::read_frame(&mut a, 1 << 20).unwrap().unwrap();
        assert_eq!(
            ErrorPayload::parse(&f.payload).unwrap().code,
            error_code::FRAME_TOO_LARGE
        );
        h.join().unwrap().unwrap();
    }

    #[test]
    fn client_refuses_to_send_past_peer_limit() {
        let mut c = pair(LoopbackServer::new(LoopbackMode::Echo).with_max_frame(256));
        let big = PixelMap::filled(16, 16, 3, 0.5, ColorSpace::Linear);
        assert!(matches!(c.encode(&big), Err(SidecarError::FrameTooLarge { .. })));
        // the connection is still usable
        let small = PixelMap::filled(2, 2, 3, 0.5, ColorSpace::Linear);
        assert!(c.encode(&small).is_ok());
    }

    #[test]
    fn tcp_round_trip() {
        let (addr, _h) = LoopbackServer::new(LoopbackMode::Echo).spawn_tcp().unwrap();
        let mut c = SidecarClient::connect(addr, std::time::Duration::from_secs(5)).unwrap();
        assert_eq!(c.peer().unwrap().codec_downscale, 1);
        let z = LatentTensor::zeros(3, 2, 2);
        assert_eq!(c.decode(&z).unwrap().dims(), (2, 2, 3));
    }
}
