//! Wire format: each frame is a 4-byte big-endian length followed by that
//! many bytes of JSON. Binary payloads ride inside the JSON as base64 of
//! little-endian row-major bytes.

use std::io::{self, Read, Write};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const MAX_FRAME: usize = 256 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("frame of {0} bytes exceeds the {MAX_FRAME} byte limit")]
    TooLarge(usize),
    #[error("stream ended inside a frame")]
    Truncated,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode_frame(payload: &[u8]) -> Result<Vec<u8>, FrameError> {
    if payload.len() > MAX_FRAME {
        return Err(FrameError::TooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(4 + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> Result<(), FrameError> {
    w.write_all(&encode_frame(payload)?)?;
    w.flush()?;
    Ok(())
}

/// Blocking read of one frame. `Ok(None)` means the stream closed cleanly
/// between frames.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, FrameError> {
    let mut dec = FrameDecoder::default();
    let mut buf = [0u8; 64 * 1024];
    loop {
        if let Some(f) = dec.next_frame()? {
            return Ok(Some(f));
        }
        let want = dec.bytes_wanted().min(buf.len()).max(1);
        match r.read(&mut buf[..want]) {
            Ok(0) => return if dec.is_idle() { Ok(None) } else { Err(FrameError::Truncated) },
            Ok(n) => dec.push(&buf[..n]),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
}

/// Incremental decoder for use with non-blocking or timed-out reads.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// No partial frame is buffered.
    pub fn is_idle(&self) -> bool {
        self.buf.is_empty()
    }

    fn declared(&self) -> Option<usize> {
        (self.buf.len() >= 4).then(|| u32::from_be_bytes([self.buf[0], self.buf[1], self.buf[2], self.buf[3]]) as usize)
    }

    /// Bytes still needed to complete the current frame (at least the header).
    pub fn bytes_wanted(&self) -> usize {
        match self.declared() {
            None => 4 - self.buf.len(),
            Some(n) => (4 + n).saturating_sub(self.buf.len()),
        }
    }

    /// Fails as soon as an oversize length header is seen.
    pub fn next_frame(&mut self) -> Result<Option<Vec<u8>>, FrameError> {
        let Some(n) = self.declared() else { return Ok(None) };
        if n > MAX_FRAME {
            return Err(FrameError::TooLarge(n));
        }
        if self.buf.len() < 4 + n {
            return Ok(None);
        }
        let rest = self.buf.split_off(4 + n);
        let mut frame = std::mem::replace(&mut self.buf, rest);
        frame.drain(..4);
        Ok(Some(frame))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    pub id: i64,
    pub cmd: String,
    #[serde(default)]
    pub args: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    U16,
    U32,
    U8,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 | DType::U32 => 4,
            DType::U16 => 2,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub encoding: String,
    pub data: String,
}

macro_rules! tensor_codec {
    ($from:ident, $to:ident, $t:ty, $dt:expr) => {
        pub fn $from(name: &str, shape: Vec<usize>, values: &[$t]) -> Tensor {
            let mut bytes = Vec::with_capacity(values.len() * std::mem::size_of::<$t>());
            for v in values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            Tensor::from_bytes(name, $dt, shape, &bytes)
        }

        pub fn $to(&self) -> Result<Vec<$t>, String> {
            let bytes = self.bytes_of($dt)?;
            Ok(bytes.chunks_exact(std::mem::size_of::<$t>()).map(|c| <$t>::from_le_bytes(c.try_into().unwrap())).collect())
        }
    };
}

impl Tensor {
    pub fn from_bytes(name: &str, dtype: DType, shape: Vec<usize>, bytes: &[u8]) -> Tensor {
        debug_assert_eq!(bytes.len(), shape.iter().product::<usize>() * dtype.size());
        Tensor { name: name.into(), dtype, shape, encoding: "base64".into(), data: B64.encode(bytes) }
    }

    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    /// Decoded bytes, checked against dtype and shape.
    pub fn bytes_of(&self, dtype: DType) -> Result<Vec<u8>, String> {
        if self.dtype != dtype {
            return Err(format!("tensor {} has dtype {:?}, not {:?}", self.name, self.dtype, dtype));
        }
        if self.encoding != "base64" {
            return Err(format!("unsupported encoding {:?}", self.encoding));
        }
        let bytes = B64.decode(&self.data).map_err(|e| e.to_string())?;
        if bytes.len() != self.element_count() * dtype.size() {
            return Err(format!("tensor {}: {} bytes for shape {:?}", self.name, bytes.len(), self.shape));
        }
        Ok(bytes)
    }

    tensor_codec!(from_f32, to_f32, f32, DType::F32);
    tensor_codec!(from_u16, to_u16, u16, DType::U16);
    tensor_codec!(from_u32, to_u32, u32, DType::U32);
    tensor_codec!(from_u8, to_u8, u8, DType::U8);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    /// Echo of the request id; null when the request could not be parsed.
    pub id: Option<i64>,
    pub status: String,
    #[serde(default)]
    pub data: Map<String, Value>,
    #[serde(default)]
    pub tensors: Vec<Tensor>,
}

impl Response {
    pub fn ok(id: i64, data: Map<String, Value>) -> Response {
        Response { id: Some(id), status: "ok".into(), data, tensors: Vec::new() }
    }

    pub fn error(id: Option<i64>, code: &str, message: impl Into<String>) -> Response {
        let mut data = Map::new();
        data.insert("message".into(), Value::String(message.into()));
        Response { id, status: code.into(), data, tensors: Vec::new() }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("responses serialize")
    }
}

/// Parses a frame payload. On failure returns the error response to send,
/// carrying the id when one could be recovered.
pub fn parse_request(payload: &[u8]) -> Result<Request, Response> {
    let value: Value = serde_json::from_slice(payload)
        .map_err(|e| Response::error(None, "unknown_argument_format", format!("malformed JSON: {e}")))?;
    let id = value.get("id").and_then(Value::as_i64);
    serde_json::from_value(value).map_err(|e| Response::error(id, "unknown_argument_format", format!("malformed envelope: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_counts_payload_bytes() {
        let f = encode_frame(b"{}").unwrap();
        assert_eq!(f, vec![0, 0, 0, 2, b'{', b'}']);
    }

    #[test]
    fn back_to_back_frames_split() {
        let mut bytes = encode_frame(b"first").unwrap();
        bytes.extend(encode_frame(b"second").unwrap());
        let mut r = &bytes[..];
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"first");
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"second");
        assert!(read_frame(&mut r).unwrap().is_none());
    }

    #[test]
    fn oversize_and_truncated_frames_fail() {
        let mut huge = &(1u32 << 30).to_be_bytes()[..];
        assert!(matches!(read_frame(&mut huge), Err(FrameError::TooLarge(n)) if n == 1 << 30));
        let mut short = &[0u8, 0, 0, 9, 1, 2][..];
        assert!(matches!(read_frame(&mut short), Err(FrameError::Truncated)));
        let mut half_header = &[0u8, 0][..];
        assert!(matches!(read_frame(&mut half_header), Err(FrameError::Truncated)));
    }

    #[test]
    fn decoder_handles_byte_at_a_time() {
        let bytes = [encode_frame(b"ab").unwrap(), encode_frame(b"").unwrap()].concat();
        let mut d = FrameDecoder::default();
        let mut got = Vec::new();
        for b in bytes {
            d.push(&[b]);
            while let Some(f) = d.next_frame().unwrap() {
                got.push(f);
            }
        }
        assert_eq!(got, vec![b"ab".to_vec(), Vec::new()]);
        assert!(d.is_idle());
    }

    #[test]
    fn f32_round_trip_is_bit_exact() {
        let v = [0.0f32, -0.0, 1.5, f32::INFINITY, f32::NAN, f32::MIN_POSITIVE, 1e-45];
        let t = Tensor::from_f32("x", vec![v.len()], &v);
        let back = t.to_f32().unwrap();
        assert!(v.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(t.to_u32().is_err());
    }

    #[test]
    fn envelope_errors_keep_the_id() {
        let e = parse_request(br#"{"id": 7, "cmdx": "list_objects"}"#).unwrap_err();
        assert_eq!((e.id, e.status.as_str()), (Some(7), "unknown_argument_format"));
        let e = parse_request(b"\xff\x00").unwrap_err();
        assert_eq!(e.id, None);
        let r = parse_request(br#"{"id": 1, "cmd": "list_objects"}"#).unwrap();
        assert!(r.args.is_empty());
    }
}
