use super::wire::{
    self, DenoiseRequest, ErrorPayload, Hello, MsgType, WireTensor, ALL_CAPABILITIES, DEFAULT_MAX_FRAME,
};
use crate::guidance::{BackendError, Branch, BranchInputs, Codec, Denoiser, PredictionKind};
use crate::imagecore::{ColorSpace, ImageError, LatentTensor, MaskMap, PixelMap};
use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Mutex;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SidecarError {
    /// Connection-level failure (refused, reset, timed out).
    #[error("sidecar transport error: {source}")]
    Transport {
        #[source]
        source: io::Error,
        retryable: bool,
    },
    /// The sidecar answered with an ERROR frame.
    #[error("sidecar error {code}: {message}")]
    Remote { code: u32, message: String },
    /// Malformed or unexpected traffic; the connection is unusable.
    #[error("sidecar protocol error: {0}")]
    Protocol(String),
    #[error("frame of {size} bytes exceeds the {max}-byte limit")]
    FrameTooLarge { size: u64, max: u64 },
    #[error("sidecar does not support {0:?}")]
    Unsupported(MsgType),
}

impl SidecarError {
    pub(crate) fn from_io(e: io::Error) -> Self {
        use io::ErrorKind::*;
        let retryable = matches!(
            e.kind(),
            ConnectionRefused | ConnectionReset | ConnectionAborted | TimedOut | WouldBlock | Interrupted | BrokenPipe
        );
        SidecarError::Transport { source: e, retryable }
    }

    /// True for failures worth retrying on a fresh connection.
    pub fn is_retryable(&self) -> bool {
        matches!(self, SidecarError::Transport { retryable: true, .. })
    }
}

/// Blocking protocol client over any byte stream.
pub struct SidecarClient<S> {
    stream: S,
    local_max_frame: u64,
    peer: Option<Hello>,
}

impl SidecarClient<TcpStream> {
    /// Connects and performs the HELLO handshake. `timeout` bounds the
    /// connect and every subsequent read and write.
    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> Result<Self, SidecarError> {
        let mut last = None;
        let addrs = addr.to_socket_addrs().map_err(SidecarError::from_io)?;
        for a in addrs {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(s) => {
                    s.set_read_timeout(Some(timeout)).map_err(SidecarError::from_io)?;
                    s.set_write_timeout(Some(timeout)).map_err(SidecarError::from_io)?;
                    s.set_nodelay(true).map_err(SidecarError::from_io)?;
                    let mut client = SidecarClient::new(s);
                    client.handshake()?;
                    return Ok(client);
                }
                Err(e) => last = Some(e),
            }
        }
        Err(SidecarError::from_io(last.unwrap_or_else(|| {
            io::Error::new(io::ErrorKind::NotFound, "address resolved to nothing")
        })))
    }
}

impl<S: Read + Write> SidecarClient<S> {
    pub fn new(stream: S) -> Self {
        Self::with_max_frame(stream, DEFAULT_MAX_FRAME)
    }

    pub fn with_max_frame(stream: S, local_max_frame: u64) -> Self {
        Self {
            stream,
            local_max_frame,
            peer: None,
        }
    }

    /// Capabilities announced by the peer, once the handshake is done.
    pub fn peer(&self) -> Option<&Hello> {
        self.peer.as_ref()
    }

    /// Smaller of the two announced frame limits.
    pub fn max_frame(&self) -> u64 {
        match &self.peer {
            Some(h) => h.max_frame_bytes.min(self.local_max_frame),
            None => self.local_max_frame,
        }
    }

    pub fn handshake(&mut self) -> Result<Hello, SidecarError> {
        let ours = Hello {
            max_frame_bytes: self.local_max_frame,
            supported: ALL_CAPABILITIES,
            codec_downscale: 0,
            latent_channels: 0,
        };
        let payload = self.exchange(MsgType::Hello, &ours.to_bytes())?;
        let hello = Hello::parse(&payload)?;
        self.peer = Some(hello);
        Ok(hello)
    }

    fn exchange(&mut self, msg: MsgType, payload: &[u8]) -> Result<Vec<u8>, SidecarError> {
        let max = self.max_frame();
        wire::write_frame(&mut self.stream, msg.code(), payload, max)?;
        let frame = wire::read_frame(&mut self.stream, self.local_max_frame)?
            .ok_or_else(|| SidecarError::Protocol("sidecar closed the connection".into()))?;
        if frame.kind() == Some(MsgType::Error) {
            let e = ErrorPayload::parse(&frame.payload)?;
            return Err(SidecarError::Remote {
                code: e.code,
                message: e.message,
            });
        }
        if frame.msg_type != msg.response_code() {
            return Err(SidecarError::Protocol(format!(
                "expected response 0x{:04x}, got 0x{:04x}",
                msg.response_code(),
                frame.msg_type
            )));
        }
        Ok(frame.payload)
    }

    fn call(&mut self, msg: MsgType, payload: &[u8]) -> Result<Vec<u8>, SidecarError> {
        let peer = self
            .peer
            .ok_or_else(|| SidecarError::Protocol("request sent before HELLO".into()))?;
        if !peer.supports(msg) {
            return Err(SidecarError::Unsupported(msg));
        }
        self.exchange(msg, payload)
    }

    pub fn encode(&mut self, img: &PixelMap) -> Result<LatentTensor, SidecarError> {
        let t = pixel_tensor(img);
        let out = wire::single_tensor(&self.call(MsgType::Encode, &t.to_bytes())?)?;
        latent_from_wire(out)
    }

    pub fn decode(&mut self, latents: &LatentTensor) -> Result<PixelMap, SidecarError> {
        let t = latent_tensor(latents);
        let out = latent_from_wire(wire::single_tensor(&self.call(MsgType::Decode, &t.to_bytes())?)?)?;
        out.to_pixel_map(ColorSpace::Linear)
            .map_err(|e| SidecarError::Protocol(format!("decoded image unusable: {e}")))
    }

    pub fn denoise(
        &mut self,
        latents: &LatentTensor,
        inputs: &BranchInputs,
        timestep: usize,
        branch: Branch,
        kind: PredictionKind,
    ) -> Result<LatentTensor, SidecarError> {
        let req = DenoiseRequest {
            latents: latent_tensor(latents),
            groups: branch_groups(inputs),
            timestep: u32::try_from(timestep).map_err(|_| SidecarError::Protocol("timestep overflows u32".into()))?,
            branch: branch.wire_id(),
            prediction_kind: match kind {
                PredictionKind::V => 0,
                PredictionKind::Eps => 1,
            },
        };
        let out = latent_from_wire(wire::single_tensor(&self.call(MsgType::Denoise, &req.to_bytes()?)?)?)?;
        if out.shape() != latents.shape() {
            return Err(SidecarError::Protocol(format!(
                "prediction shape {:?} does not match latents {:?}",
                out.shape(),
                latents.shape()
            )));
        }
        Ok(out)
    }

    pub fn lpips(&mut self, a: &PixelMap, b: &PixelMap) -> Result<f64, SidecarError> {
        let mut payload = pixel_tensor(a).to_bytes();
        pixel_tensor(b).write_to(&mut payload);
        let out = wire::single_tensor(&self.call(MsgType::MetricLpips, &payload)?)?;
        match out.data.as_slice() {
            [v] => Ok(*v as f64),
            other => Err(SidecarError::Protocol(format!(
                "LPIPS reply has {} values",
                other.len()
            ))),
        }
    }
}

/// `[C, H, W]` planar tensor of an image.
pub(crate) fn pixel_tensor(img: &PixelMap) -> WireTensor {
    latent_tensor(&LatentTensor::from_pixel_map(img))
}

pub(crate) fn mask_tensor(m: &MaskMap) -> WireTensor {
    pixel_tensor(&m.to_pixel_map())
}

pub(crate) fn latent_tensor(t: &LatentTensor) -> WireTensor {
    let (c, h, w) = t.shape();
    WireTensor {
        dims: vec![c as u32, h as u32, w as u32],
        data: t.data().to_vec(),
    }
}

pub(crate) fn latent_from_wire(t: WireTensor) -> Result<LatentTensor, SidecarError> {
    let [c, h, w] = t.dims[..] else {
        return Err(SidecarError::Protocol(format!(
            "expected a 3-d tensor, got dims {:?}",
            t.dims
        )));
    };
    LatentTensor::new(c as usize, h as usize, w as usize, t.data)
        .map_err(|e: ImageError| SidecarError::Protocol(format!("bad tensor: {e}")))
}

/// Named channel groups sent with every DENOISE request.
pub(crate) fn branch_groups(inputs: &BranchInputs) -> Vec<(String, WireTensor)> {
    let mut groups: Vec<(String, WireTensor)> = inputs
        .intrinsics
        .iter()
        .map(|(k, m)| (k.as_str().to_string(), pixel_tensor(m)))
        .collect();
    groups.push(("shadow_mask".into(), mask_tensor(&inputs.shadow_mask)));
    groups.push(("object_mask".into(), mask_tensor(&inputs.object_mask)));
    groups.push(("guidance_composite".into(), pixel_tensor(&inputs.guidance_composite)));
    groups
}

/// Denoiser backed by sidecar connections.
///
/// With two connections the positive and negative branches run on their
/// own stream and may be evaluated concurrently.
pub struct SidecarDenoiser<S> {
    clients: Vec<Mutex<SidecarClient<S>>>,
    kind: PredictionKind,
}

impl<S: Read + Write + Send> SidecarDenoiser<S> {
    pub fn new(clients: Vec<SidecarClient<S>>, kind: PredictionKind) -> Result<Self, SidecarError> {
        if clients.is_empty() || clients.len() > 2 {
            return Err(SidecarError::Protocol(format!(
                "expected one or two connections, got {}",
                clients.len()
            )));
        }
        Ok(Self {
            clients: clients.into_iter().map(Mutex::new).collect(),
            kind,
        })
    }
}

impl SidecarDenoiser<TcpStream> {
    pub fn connect(addr: &str, timeout: Duration, kind: PredictionKind) -> Result<Self, SidecarError> {
        let a = SidecarClient::connect(addr, timeout)?;
        let b = SidecarClient::connect(addr, timeout)?;
        Self::new(vec![a, b], kind)
    }
}

impl<S: Read + Write + Send> Denoiser for SidecarDenoiser<S> {
    fn prediction_kind(&self) -> PredictionKind {
        self.kind
    }

    fn denoise(
        &self,
        latents: &LatentTensor,
        inputs: &BranchInputs,
        timestep: usize,
        branch: Branch,
    ) -> Result<LatentTensor, BackendError> {
        let slot = match branch {
            Branch::Negative if self.clients.len() > 1 => 1,
            _ => 0,
        };
        let mut client = self.clients[slot]
            .lock()
            .map_err(|_| BackendError::Other("sidecar connection poisoned".into()))?;
        Ok(client.denoise(latents, inputs, timestep, branch, self.kind)?)
    }

    fn concurrent_branches(&self) -> bool {
        self.clients.len() > 1
    }
}

/// Codec backed by a sidecar connection; geometry comes from its HELLO.
pub struct SidecarCodec<S> {
    client: Mutex<SidecarClient<S>>,
    downscale: usize,
    channels: usize,
}

impl<S: Read + Write + Send> SidecarCodec<S> {
    pub fn new(client: SidecarClient<S>) -> Result<Self, SidecarError> {
        let hello = *client
            .peer()
            .ok_or_else(|| SidecarError::Protocol("codec needs a completed handshake".into()))?;
        if hello.codec_downscale == 0 || hello.latent_channels == 0 {
            return Err(SidecarError::Protocol(
                "sidecar announced an empty codec geometry".into(),
            ));
        }
        Ok(Self {
            client: Mutex::new(client),
            downscale: hello.codec_downscale as usize,
            channels: hello.latent_channels as usize,
        })
    }
}

impl<S: Read + Write + Send> Codec for SidecarCodec<S> {
    fn downscale(&self) -> usize {
        self.downscale
    }

    fn latent_channels(&self) -> usize {
        self.channels
    }

    fn encode(&self, img: &PixelMap) -> Result<LatentTensor, BackendError> {
        let mut c = self
            .client
            .lock()
            .map_err(|_| BackendError::Other("sidecar connection poisoned".into()))?;
        Ok(c.encode(img)?)
    }

    fn decode(&self, latents: &LatentTensor) -> Result<PixelMap, BackendError> {
        let mut c = self
            .client
            .lock()
            .map_err(|_| BackendError::Other("sidecar connection poisoned".into()))?;
        Ok(c.decode(latents)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retryable_classification() {
        let e = SidecarError::from_io(io::Error::from(io::ErrorKind::ConnectionRefused));
        assert!(e.is_retryable());
        let e = SidecarError::from_io(io::Error::from(io::ErrorKind::TimedOut));
        assert!(e.is_retryable());
        assert!(!SidecarError::from_io(io::Error::from(io::ErrorKind::PermissionDenied)).is_retryable());
        assert!(!SidecarError::Protocol("x".into()).is_retryable());
        assert!(!SidecarError::Remote {
            code: 3,
            message: "x".into()
        }
        .is_retryable());
    }

    #[test]
    fn requests_need_a_handshake() {
        let mut c = SidecarClient::new(io::Cursor::new(Vec::new()));
        let img = PixelMap::filled(2, 2, 3, 0.5, ColorSpace::Linear);
        assert!(matches!(c.encode(&img), Err(SidecarError::Protocol(_))));
    }

    #[test]
    fn refused_connection_is_retryable() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let err = SidecarClient::connect(addr, Duration::from_millis(500)).err().unwrap();
        assert!(err.is_retryable(), "{err}");
    }

    #[test]
    fn groups_carry_masks_and_composite() {
        let inputs = BranchInputs {
            intrinsics: Default::default(),
            shadow_mask: MaskMap::zeros(3, 2),
            object_mask: MaskMap::zeros(3, 2),
            guidance_composite: PixelMap::filled(3, 2, 3, 0.25, ColorSpace::Linear),
        };
        let g = branch_groups(&inputs);
        let names: Vec<_> = g.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["shadow_mask", "object_mask", "guidance_composite"]);
        assert_eq!(g[0].1.dims, [1, 2, 3]);
        assert_eq!(g[2].1.dims, [3, 2, 3]);
    }
}
