//! Wire framing: magic byte, big-endian schema id, UTF-8 record payload.

use thiserror::Error;

pub const MAGIC: u8 = 0x01;
pub const HEADER_LEN: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame too short: {0} bytes, need at least 5")]
    TooShort(usize),
    #[error("bad magic byte 0x{0:02x}, expected 0x01")]
    BadMagic(u8),
    #[error("payload is not valid UTF-8")]
    Utf8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramedMessage {
    pub schema_id: u32,
    pub payload: String,
}

impl FramedMessage {
    pub fn new(schema_id: u32, payload: impl Into<String>) -> FramedMessage {
        FramedMessage {
            schema_id,
            payload: payload.into(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.push(MAGIC);
        out.extend_from_slice(&self.schema_id.to_be_bytes());
        out.extend_from_slice(self.payload.as_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<FramedMessage, FrameError> {
        if bytes.len() < HEADER_LEN {
            return Err(FrameError::TooShort(bytes.len()));
        }
        if bytes[0] != MAGIC {
            return Err(FrameError::BadMagic(bytes[0]));
        }
        let id = u32::from_be_bytes([bytes[1], bytes[2], bytes[3], bytes[4]]);
        let payload = std::str::from_utf8(&bytes[HEADER_LEN..]).map_err(|_| FrameError::Utf8)?;
        Ok(FramedMessage::new(id, payload))
    }
}
