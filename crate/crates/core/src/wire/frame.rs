//! Message framing: the 24-byte header that wraps every P2P payload.

use super::hash::checksum;
use super::network::NetworkId;
use super::EncodeError;

pub const HEADER_LEN: usize = 24;
pub const COMMAND_LEN: usize = 12;
/// Largest payload we accept; larger declared lengths abort the connection.
pub const MAX_PAYLOAD_LEN: u32 = 4_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageHeader {
    pub magic: [u8; 4],
    pub command: String,
    pub payload_length: u32,
    pub checksum: [u8; 4],
}

impl MessageHeader {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..4].copy_from_slice(&self.magic);
        out[4..4 + self.command.len()].copy_from_slice(self.command.as_bytes());
        out[16..20].copy_from_slice(&self.payload_length.to_le_bytes());
        out[20..].copy_from_slice(&self.checksum);
        out
    }

    pub fn decode(raw: &[u8; HEADER_LEN]) -> Result<Self, FrameError> {
        let command = parse_command(&raw[4..16]).ok_or(FrameError::MalformedCommand)?;
        Ok(MessageHeader {
            magic: raw[..4].try_into().unwrap(),
            command,
            payload_length: u32::from_le_bytes(raw[16..20].try_into().unwrap()),
            checksum: raw[20..].try_into().unwrap(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrameError {
    #[error("payload checksum mismatch")]
    BadChecksum,
    #[error("frame carries the magic of another network")]
    WrongNetwork,
    #[error("need more data")]
    NeedMoreData,
    #[error("declared payload length {0} exceeds limit")]
    PayloadTooLarge(u32),
    #[error("command field is not null-padded printable ASCII")]
    MalformedCommand,
}

/// A frame recovered from a byte stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub command: String,
    pub payload: Vec<u8>,
    /// Bytes of the input consumed, including any skipped garbage.
    pub consumed: usize,
    /// Garbage bytes skipped before the frame's magic.
    pub skipped: usize,
}

fn valid_command(command: &str) -> bool {
    command.len() <= COMMAND_LEN && command.bytes().all(|b| b.is_ascii_graphic())
}

fn parse_command(field: &[u8]) -> Option<String> {
    let end = field.iter().position(|&b| b == 0).unwrap_or(field.len());
    if field[end..].iter().any(|&b| b != 0) {
        return None;
    }
    let cmd = std::str::from_utf8(&field[..end]).ok()?;
    valid_command(cmd).then(|| cmd.to_string())
}

/// Wrap `payload` in a header for `network`.
pub fn frame_message(
    network: NetworkId,
    command: &str,
    payload: &[u8],
) -> Result<Vec<u8>, EncodeError> {
    frame_with_magic(network.magic(), command, payload)
}

pub(crate) fn frame_with_magic(
    magic: [u8; 4],
    command: &str,
    payload: &[u8],
) -> Result<Vec<u8>, EncodeError> {
    if command.len() > COMMAND_LEN {
        return Err(EncodeError::CommandTooLong(command.len()));
    }
    if !valid_command(command) {
        return Err(EncodeError::InvalidCommand);
    }
    if payload.len() > MAX_PAYLOAD_LEN as usize {
        return Err(EncodeError::PayloadTooLarge(payload.len()));
    }
    let header = MessageHeader {
        magic,
        command: command.to_string(),
        payload_length: payload.len() as u32,
        checksum: checksum(payload),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&header.encode());
    out.extend_from_slice(payload);
    Ok(out)
}

/// Pull the next frame for `network` out of `buf`.
///
/// Bytes before a recognisable magic are skipped and counted. A complete
/// frame under another known network's magic yields `WrongNetwork`; a frame
/// under our magic whose checksum fails yields `BadChecksum`.
pub fn unframe_message(buf: &[u8], network: NetworkId) -> Result<Frame, FrameError> {
    let ours = network.magic();
    let mut offset = 0;
    loop {
        let rest = &buf[offset..];
        if rest.len() < 4 {
            return Err(FrameError::NeedMoreData);
        }
        let magic: [u8; 4] = rest[..4].try_into().unwrap();
        let foreign = network.is_foreign_magic(magic);
        if magic != ours && !foreign {
            offset += 1;
            continue;
        }
        if rest.len() < HEADER_LEN {
            return Err(FrameError::NeedMoreData);
        }
        let header = match MessageHeader::decode(rest[..HEADER_LEN].try_into().unwrap()) {
            Ok(h) => h,
            Err(_) if foreign => {
                offset += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if header.payload_length > MAX_PAYLOAD_LEN {
            if foreign {
                offset += 1;
                continue;
            }
            return Err(FrameError::PayloadTooLarge(header.payload_length));
        }
        let total = HEADER_LEN + header.payload_length as usize;
        if rest.len() < total {
            return Err(FrameError::NeedMoreData);
        }
        let payload = &rest[HEADER_LEN..total];
        let checksum_ok = checksum(payload) == header.checksum;
        if foreign {
            if checksum_ok {
                return Err(FrameError::WrongNetwork);
            }
            offset += 1;
            continue;
        }
        if !checksum_ok {
            return Err(FrameError::BadChecksum);
        }
        return Ok(Frame {
            command: header.command,
            payload: payload.to_vec(),
            consumed: offset + total,
            skipped: offset,
        });
    }
}
