//! Framed binary protocol (v1) spoken with backbone sidecars.
//!
//! ```text
//! frame   = magic "SPLT" | version u16 | msg_type u16 | payload_len u64 | payload
//! tensor  = dtype u8 (0 = f32) | ndim u8 | dims u32 x ndim | f32 data, row-major
//! ```
//!
//! The magic is the four ASCII bytes `S P L T` (0x53504C54 read big-endian);
//! every other integer and all floats are little-endian. Responses echo the
//! request type with the high bit set. Errors travel as `0x80FF` (`0x00FF`
//! is accepted too) with a `code u32 | utf8 message` payload.

use super::SidecarError;
use std::io::{Read, Write};

pub const MAGIC: [u8; 4] = *b"SPLT";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 16;
pub const RESPONSE_BIT: u16 = 0x8000;

/// Default frame ceiling (256 MiB).
pub const DEFAULT_MAX_FRAME: u64 = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum MsgType {
    Hello = 0x0001,
    Encode = 0x0002,
    Decode = 0x0003,
    Denoise = 0x0004,
    MetricLpips = 0x0005,
    Error = 0x00FF,
}

impl MsgType {
    pub fn from_code(code: u16) -> Option<Self> {
        Some(match code & !RESPONSE_BIT {
            0x0001 => MsgType::Hello,
            0x0002 => MsgType::Encode,
            0x0003 => MsgType::Decode,
            0x0004 => MsgType::Denoise,
            0x0005 => MsgType::MetricLpips,
            0x00FF => MsgType::Error,
            _ => return None,
        })
    }

    pub fn code(self) -> u16 {
        self as u16
    }

    pub fn response_code(self) -> u16 {
        self as u16 | RESPONSE_BIT
    }

    /// Bit in the HELLO capability mask (`None` for ERROR).
    pub fn capability_bit(self) -> Option<u32> {
        match self {
            MsgType::Error => None,
            other => Some(1 << (other as u16 - 1)),
        }
    }
}

/// All request types a v1 peer may advertise.
pub const ALL_CAPABILITIES: u32 = 0b1_1111;

/// Error codes carried in ERROR frames.
pub mod error_code {
    pub const UNSUPPORTED: u32 = 1;
    pub const BAD_TENSOR: u32 = 2;
    pub const MODEL_FAILURE: u32 = 3;
    pub const FRAME_TOO_LARGE: u32 = 4;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: u16,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn is_response(&self) -> bool {
        self.msg_type & RESPONSE_BIT != 0
    }

    pub fn kind(&self) -> Option<MsgType> {
        MsgType::from_code(self.msg_type)
    }
}

pub fn frame_len(payload_len: usize) -> u64 {
    HEADER_LEN + payload_len as u64
}

/// Writes one frame; refuses to send anything larger than `max_frame`.
pub fn write_frame<W: Write>(w: &mut W, msg_type: u16, payload: &[u8], max_frame: u64) -> Result<(), SidecarError> {
    let size = frame_len(payload.len());
    if size > max_frame {
        return Err(SidecarError::FrameTooLarge { size, max: max_frame });
    }
    let mut header = [0u8; HEADER_LEN as usize];
    header[..4].copy_from_slice(&MAGIC);
    header[4..6].copy_from_slice(&VERSION.to_le_bytes());
    header[6..8].copy_from_slice(&msg_type.to_le_bytes());
    header[8..16].copy_from_slice(&(payload.len() as u64).to_le_bytes());
    w.write_all(&header).map_err(SidecarError::from_io)?;
    w.write_all(payload).map_err(SidecarError::from_io)?;
    w.flush().map_err(SidecarError::from_io)
}

/// Reads one frame. `Ok(None)` on a clean end of stream before any header byte.
pub fn read_frame<R: Read>(r: &mut R, max_frame: u64) -> Result<Option<Frame>, SidecarError> {
    let mut header = [0u8; HEADER_LEN as usize];
    let mut got = 0;
    while got < header.len() {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(SidecarError::Protocol("stream ended inside a frame header".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(SidecarError::from_io(e)),
        }
    }
    if header[..4] != MAGIC {
        return Err(SidecarError::Protocol(format!("bad magic {:02x?}", &header[..4])));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(SidecarError::Protocol(format!(
            "unsupported protocol version {version}"
        )));
    }
    let msg_type = u16::from_le_bytes([header[6], header[7]]);
    let len = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let size = HEADER_LEN.saturating_add(len);
    if size > max_frame {
        return Err(SidecarError::FrameTooLarge { size, max: max_frame });
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            SidecarError::Protocol("stream ended inside a frame payload".into())
        } else {
            SidecarError::from_io(e)
        }
    })?;
    Ok(Some(Frame { msg_type, payload }))
}

/// Dense f32 tensor as carried on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct WireTensor {
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl WireTensor {
    pub fn new(dims: Vec<u32>, data: Vec<f32>) -> Result<Self, SidecarError> {
        let n: u64 = dims.iter().map(|&d| d as u64).product();
        if dims.is_empty() || dims.len() > 255 || n != data.len() as u64 {
            return Err(SidecarError::Protocol(format!(
                "tensor dims {dims:?} do not match {} values",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn encoded_len(&self) -> usize {
        2 + 4 * self.dims.len() + 4 * self.data.len()
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.push(0);
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.reserve(self.data.len() * 4);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out);
        out
    }

    pub fn read_from(cur: &mut Cursor<'_>) -> Result<Self, SidecarError> {
        let dtype = cur.u8()?;
        if dtype != 0 {
            return Err(SidecarError::Protocol(format!("unsupported tensor dtype {dtype}")));
        }
        let ndim = cur.u8()? as usize;
        if ndim == 0 {
            return Err(SidecarError::Protocol("tensor with zero dimensions".into()));
        }
        let dims = (0..ndim).map(|_| cur.u32()).collect::<Result<Vec<_>, _>>()?;
        let n: u64 = dims.iter().map(|&d| d as u64).product();
        if n.saturating_mul(4) > cur.remaining() as u64 {
            return Err(SidecarError::Protocol(format!("tensor {dims:?} exceeds payload")));
        }
        let bytes = cur.take(n as usize * 4)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dims, data })
    }
}

/// Bounds-checked little-endian reader over a payload.
pub struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], SidecarError> {
        if n > self.remaining() {
            return Err(SidecarError::Protocol(format!(
                "payload truncated: wanted {n} bytes at offset {}, {} left",
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, SidecarError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, SidecarError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, SidecarError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn finish(&self) -> Result<(), SidecarError> {
        if self.remaining() != 0 {
            return Err(SidecarError::Protocol(format!(
                "{} trailing payload bytes",
                self.remaining()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hello {
    pub max_frame_bytes: u64,
    pub supported: u32,
    pub codec_downscale: u8,
    pub latent_channels: u8,
}

impl Hello {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(14);
        out.extend_from_slice(&self.max_frame_bytes.to_le_bytes());
        out.extend_from_slice(&self.supported.to_le_bytes());
        out.push(self.codec_downscale);
        out.push(self.latent_channels);
        out
    }

    pub fn parse(payload: &[u8]) -> Result<Self, SidecarError> {
        let mut c = Cursor::new(payload);
        let hello = Self {
            max_frame_bytes: c.u64()?,
            supported: c.u32()?,
            codec_downscale: c.u8()?,
            latent_channels: c.u8()?,
        };
        c.finish()?;
        Ok(hello)
    }

    pub fn supports(&self, msg: MsgType) -> bool {
        msg.capability_bit().is_some_and(|b| self.supported & b != 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseRequest {
    pub latents: WireTensor,
    pub groups: Vec<(String, WireTensor)>,
    pub timestep: u32,
    pub branch: u8,
    /// 0 = v, 1 = eps.
    pub prediction_kind: u8,
}

impl DenoiseRequest {
    pub fn to_bytes(&self) -> Result<Vec<u8>, SidecarError> {
        if self.groups.len() > 255 {
            return Err(SidecarError::Protocol("more than 255 channel groups".into()));
        }
        let mut out = Vec::new();
        self.latents.write_to(&mut out);
        out.push(self.groups.len() as u8);
        for (name, t) in &self.groups {
            let bytes = name.as_bytes();
            if bytes.len() > 255 {
                return Err(SidecarError::Protocol(format!("group name too long: {name}")));
            }
            out.push(bytes.len() as u8);
            out.extend_from_slice(bytes);
            t.write_to(&mut out);
        }
        out.extend_from_slice(&self.timestep.to_le_bytes());
        out.push(self.branch);
        out.push(self.prediction_kind);
        Ok(out)
    }

    pub fn parse(payload: &[u8]) -> Result<Self, SidecarError> {
        let mut c = Cursor::new(payload);
        let latents = WireTensor::read_from(&mut c)?;
        let count = c.u8()?;
        let mut groups = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let len = c.u8()? as usize;
            let name = std::str::from_utf8(c.take(len)?)
                .map_err(|_| SidecarError::Protocol("group name is not utf-8".into()))?
                .to_string();
            groups.push((name, WireTensor::read_from(&mut c)?));
        }
        let req = Self {
            latents,
            groups,
            timestep: c.u32()?,
            branch: c.u8()?,
            prediction_kind: c.u8()?,
        };
        c.finish()?;
        Ok(req)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorPayload {
    pub code: u32,
    pub message: String,
}

impl ErrorPayload {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.code.to_le_bytes().to_vec();
        out.extend_from_slice(self.message.as_bytes());
        out
    }

    pub fn parse(payload: &[u8]) -> Result<Self, SidecarError> {
        let mut c = Cursor::new(payload);
        let code = c.u32()?;
        let rest = c.take(c.remaining())?;
        Ok(Self {
            code,
            message: String::from_utf8_lossy(rest).into_owned(),
        })
    }
}

pub fn single_tensor(payload: &[u8]) -> Result<WireTensor, SidecarError> {
    let mut c = Cursor::new(payload);
    let t = WireTensor::read_from(&mut c)?;
    c.finish()?;
    Ok(t)
}
