//! The single-output payload format.
//!
//! ```text
//! tag(2) ‖ version(1) ‖ flags(1) ‖ body
//! flags: bit0 encrypted, bit1 fragment
//! plain body:     ipver(1) ‖ addr(4|16) ‖ port(2, big-endian)
//! sealed body:    nonce(12) ‖ ciphertext ‖ poly1305 tag(16)
//! fragment body:  msg_id(4) ‖ index(1) ‖ total(1) ‖ chunk
//! ```

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::RngCore;

use super::endpoint::Endpoint;
use super::fragment::{fragment_with_chunk_len, Fragment, MAX_CHUNK_LEN};
use super::RendezvousError;
use crate::wire::MAX_OP_RETURN_DATA;

/// Arbitrary default marker ("RV"); any two bytes work if both sides agree.
pub const DEFAULT_TAG: [u8; 2] = [0x52, 0x56];
pub const PAYLOAD_VERSION: u8 = 1;
pub const FLAG_ENCRYPTED: u8 = 0x01;
pub const FLAG_FRAGMENT: u8 = 0x02;
pub const PREFIX_LEN: usize = 4;
/// Largest body that fits without fragmenting.
pub const MAX_BODY_LEN: usize = MAX_OP_RETURN_DATA - PREFIX_LEN;
pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const AEAD_TAG_LEN: usize = 16;

/// A fragment as seen in one output, before reassembly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentPart {
    pub encrypted: bool,
    pub fragment: Fragment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Endpoint(Endpoint),
    Fragment(FragmentPart),
    NotOurs,
}

/// Encoder and decoder for one tag value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PayloadCodec {
    pub tag: [u8; 2],
}

impl Default for PayloadCodec {
    fn default() -> Self {
        PayloadCodec { tag: DEFAULT_TAG }
    }
}

fn check_key(key: Option<&[u8]>) -> Result<Option<&[u8]>, RendezvousError> {
    match key {
        Some(k) if k.len() != KEY_LEN => Err(RendezvousError::KeyWrongSize(k.len())),
        other => Ok(other),
    }
}

impl PayloadCodec {
    pub fn new(tag: [u8; 2]) -> Self {
        PayloadCodec { tag }
    }

    fn aad(&self) -> [u8; 3] {
        [self.tag[0], self.tag[1], PAYLOAD_VERSION]
    }

    fn prefix(&self, flags: u8) -> Vec<u8> {
        vec![self.tag[0], self.tag[1], PAYLOAD_VERSION, flags]
    }

    pub fn encode_endpoint(
        &self,
        ep: &Endpoint,
        key: Option<&[u8]>,
    ) -> Result<Vec<Vec<u8>>, RendezvousError> {
        self.encode_endpoint_with(ep, key, MAX_CHUNK_LEN, &mut rand::thread_rng())
    }

    /// Like [`PayloadCodec::encode_endpoint`] with an explicit randomness
    /// source and a chunk size used if the body has to be fragmented.
    pub fn encode_endpoint_with(
        &self,
        ep: &Endpoint,
        key: Option<&[u8]>,
        chunk_len: usize,
        rng: &mut impl RngCore,
    ) -> Result<Vec<Vec<u8>>, RendezvousError> {
        self.encode_body(&ep.encode_body(), key, chunk_len, rng)
    }

    /// Seal (if keyed) and wrap an arbitrary body, fragmenting it when it
    /// exceeds [`MAX_BODY_LEN`].
    pub fn encode_body(
        &self,
        plain: &[u8],
        key: Option<&[u8]>,
        chunk_len: usize,
        rng: &mut impl RngCore,
    ) -> Result<Vec<Vec<u8>>, RendezvousError> {
        let (body, encrypted, msg_id) = self.seal(plain, key, rng)?;
        if body.len() <= MAX_BODY_LEN {
            let mut out = self.prefix(if encrypted { FLAG_ENCRYPTED } else { 0 });
            out.extend_from_slice(&body);
            return Ok(vec![out]);
        }
        self.wrap_fragments(
            &fragment_with_chunk_len(&body, msg_id, chunk_len)?,
            encrypted,
        )
    }

    /// Always emit fragments of at most `chunk_len` body bytes, even for a
    /// body that would fit in one output. Useful for spreading a message
    /// over several transactions.
    pub fn encode_fragmented(
        &self,
        plain: &[u8],
        key: Option<&[u8]>,
        chunk_len: usize,
        rng: &mut impl RngCore,
    ) -> Result<Vec<Vec<u8>>, RendezvousError> {
        let (body, encrypted, msg_id) = self.seal(plain, key, rng)?;
        self.wrap_fragments(
            &fragment_with_chunk_len(&body, msg_id, chunk_len)?,
            encrypted,
        )
    }

    fn seal(
        &self,
        plain: &[u8],
        key: Option<&[u8]>,
        rng: &mut impl RngCore,
    ) -> Result<(Vec<u8>, bool, [u8; 4]), RendezvousError> {
        match check_key(key)? {
            Some(k) => {
                let mut nonce = [0u8; NONCE_LEN];
                rng.fill_bytes(&mut nonce);
                let cipher = ChaCha20Poly1305::new(Key::from_slice(k));
                let sealed = cipher
                    .encrypt(
                        Nonce::from_slice(&nonce),
                        Payload {
                            msg: plain,
                            aad: &self.aad(),
                        },
                    )
                    .expect("chacha20poly1305 encryption is infallible for in-range lengths");
                let mut body = nonce.to_vec();
                body.extend_from_slice(&sealed);
                Ok((body, true, [nonce[0], nonce[1], nonce[2], nonce[3]]))
            }
            None => {
                let mut id = [0u8; 4];
                rng.fill_bytes(&mut id);
                Ok((plain.to_vec(), false, id))
            }
        }
    }

    /// Serialize already-split fragments as individual payloads.
    pub fn wrap_fragments(
        &self,
        frags: &[Fragment],
        encrypted: bool,
    ) -> Result<Vec<Vec<u8>>, RendezvousError> {
        let flags = FLAG_FRAGMENT | if encrypted { FLAG_ENCRYPTED } else { 0 };
        frags
            .iter()
            .map(|f| {
                let mut out = self.prefix(flags);
                f.encode_into(&mut out);
                if out.len() > MAX_OP_RETURN_DATA {
                    return Err(RendezvousError::PayloadTooLarge(out.len()));
                }
                Ok(out)
            })
            .collect()
    }

    /// Classify one OP_RETURN payload. Foreign data, and encrypted data we
    /// hold no key for, is `NotOurs`.
    pub fn decode_payload(
        &self,
        data: &[u8],
        key: Option<&[u8]>,
    ) -> Result<Decoded, RendezvousError> {
        let key = check_key(key)?;
        if data.len() < PREFIX_LEN || data[..2] != self.tag || data[2] != PAYLOAD_VERSION {
            return Ok(Decoded::NotOurs);
        }
        let flags = data[3];
        if flags & !(FLAG_ENCRYPTED | FLAG_FRAGMENT) != 0 {
            return Err(RendezvousError::MalformedBody("unknown flag bits"));
        }
        let encrypted = flags & FLAG_ENCRYPTED != 0;
        if encrypted && key.is_none() {
            return Ok(Decoded::NotOurs);
        }
        let body = &data[PREFIX_LEN..];
        if flags & FLAG_FRAGMENT != 0 {
            let fragment = Fragment::decode(body)?;
            return Ok(Decoded::Fragment(FragmentPart {
                encrypted,
                fragment,
            }));
        }
        self.open_body(body, encrypted, key).map(Decoded::Endpoint)
    }

    /// Decrypt (if needed) and parse a complete body, e.g. after reassembly.
    pub fn open_body(
        &self,
        body: &[u8],
        encrypted: bool,
        key: Option<&[u8]>,
    ) -> Result<Endpoint, RendezvousError> {
        let plain;
        let body = if encrypted {
            let key = check_key(key)?.ok_or(RendezvousError::MissingKey)?;
            if body.len() < NONCE_LEN + AEAD_TAG_LEN {
                return Err(RendezvousError::MalformedBody(
                    "sealed body shorter than nonce and tag",
                ));
            }
            let cipher = ChaCha20Poly1305::new(Key::from_slice(key));
            let (nonce, sealed) = body.split_at(NONCE_LEN);
            plain = cipher
                .decrypt(
                    Nonce::from_slice(nonce),
                    Payload {
                        msg: sealed,
                        aad: &self.aad(),
                    },
                )
                .map_err(|_| RendezvousError::AuthFailed)?;
            &plain[..]
        } else {
            body
        };
        Endpoint::decode_body(body).ok_or(RendezvousError::MalformedBody(
            "not an ipv4 or ipv6 endpoint body",
        ))
    }
}

pub fn encode_endpoint(ep: &Endpoint, key: Option<&[u8]>) -> Result<Vec<Vec<u8>>, RendezvousError> {
    PayloadCodec::default().encode_endpoint(ep, key)
}

pub fn decode_payload(data: &[u8], key: Option<&[u8]>) -> Result<Decoded, RendezvousError> {
    PayloadCodec::default().decode_payload(data, key)
}
