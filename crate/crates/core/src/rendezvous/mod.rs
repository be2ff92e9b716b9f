//! Endpoint payloads in OP_RETURN outputs: encoding, optional sealing and
//! fragmentation, chain scanning and detection.

mod checkpoint;
mod detect;
mod endpoint;
mod fragment;
mod payload;
mod scan;
mod source;

pub use checkpoint::{CheckpointError, ScanCheckpoint};
pub use detect::{
    detect, detect_block, detect_tx, DetectionPolicy, DetectionReport, HeuristicMatch,
    DEFAULT_THRESHOLD, SCORE_ASCII_LOCATOR, SCORE_ENDPOINT_SHAPE, SCORE_EXACT_DECODE,
    SCORE_HEADER_SHAPE,
};
pub use endpoint::{Endpoint, EndpointError};
pub use fragment::{
    fragment, fragment_with_chunk_len, reassemble, Completed, Fragment, MsgId, PendingMessage,
    Reassembler, FRAGMENT_HEADER_LEN, MAX_CHUNK_LEN, MAX_FRAGMENTED_BODY, MAX_FRAGMENTS,
};
pub use payload::{
    decode_payload, encode_endpoint, Decoded, FragmentPart, PayloadCodec, AEAD_TAG_LEN,
    DEFAULT_TAG, FLAG_ENCRYPTED, FLAG_FRAGMENT, KEY_LEN, MAX_BODY_LEN, NONCE_LEN, PAYLOAD_VERSION,
    PREFIX_LEN,
};
pub use scan::{
    scan_blocks, scan_blocks_with, Discovery, ScanDiagnostics, ScanError, ScanOptions, ScanReport,
    DEFAULT_FRAGMENT_HORIZON,
};
pub use source::{BlockSource, MemorySource, PeerSource, SourceError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RendezvousError {
    #[error("key must be 32 bytes, got {0}")]
    KeyWrongSize(usize),
    #[error("payload is encrypted and no key was given")]
    MissingKey,
    #[error("authentication tag did not verify")]
    AuthFailed,
    #[error("malformed payload body: {0}")]
    MalformedBody(&'static str),
    #[error("encoded payload of {0} bytes exceeds the output limit")]
    PayloadTooLarge(usize),
    #[error("body of {0} bytes needs more than 255 fragments")]
    BodyTooLarge(usize),
    #[error("chunk length {0} is outside 1..=70")]
    BadChunkLen(usize),
    #[error("fragments missing: {missing:?}")]
    Incomplete { missing: Vec<u8> },
    #[error("fragment claims {got} parts but the message has {expected}")]
    TotalMismatch { expected: u8, got: u8 },
    #[error("fragments belong to different messages")]
    MixedMessages,
}
