//! Splitting a body over several outputs and collating it back.

use std::collections::BTreeMap;

use super::payload::{FragmentPart, MAX_BODY_LEN};
use super::RendezvousError;

pub const FRAGMENT_HEADER_LEN: usize = 6;
/// Chunk bytes that fit beside the payload prefix and fragment header.
pub const MAX_CHUNK_LEN: usize = MAX_BODY_LEN - FRAGMENT_HEADER_LEN;
pub const MAX_FRAGMENTS: usize = 255;
pub const MAX_FRAGMENTED_BODY: usize = MAX_CHUNK_LEN * MAX_FRAGMENTS;

pub type MsgId = [u8; 4];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    pub msg_id: MsgId,
    pub index: u8,
    pub total: u8,
    pub chunk: Vec<u8>,
}

impl Fragment {
    pub(crate) fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.msg_id);
        out.push(self.index);
        out.push(self.total);
        out.extend_from_slice(&self.chunk);
    }

    pub fn decode(body: &[u8]) -> Result<Self, RendezvousError> {
        if body.len() < FRAGMENT_HEADER_LEN {
            return Err(RendezvousError::MalformedBody("fragment header truncated"));
        }
        let (index, total) = (body[4], body[5]);
        if total == 0 || index >= total {
            return Err(RendezvousError::MalformedBody(
                "fragment index out of range",
            ));
        }
        if body.len() - FRAGMENT_HEADER_LEN > MAX_CHUNK_LEN {
            return Err(RendezvousError::MalformedBody("fragment chunk too long"));
        }
        Ok(Fragment {
            msg_id: [body[0], body[1], body[2], body[3]],
            index,
            total,
            chunk: body[FRAGMENT_HEADER_LEN..].to_vec(),
        })
    }
}

pub fn fragment(body: &[u8], msg_id: MsgId) -> Result<Vec<Fragment>, RendezvousError> {
    fragment_with_chunk_len(body, msg_id, MAX_CHUNK_LEN)
}

/// Split into chunks of `chunk_len` bytes (the last may be shorter). An
/// empty body yields a single empty fragment.
pub fn fragment_with_chunk_len(
    body: &[u8],
    msg_id: MsgId,
    chunk_len: usize,
) -> Result<Vec<Fragment>, RendezvousError> {
    if chunk_len == 0 || chunk_len > MAX_CHUNK_LEN {
        return Err(RendezvousError::BadChunkLen(chunk_len));
    }
    let total = body.len().div_ceil(chunk_len).max(1);
    if total > MAX_FRAGMENTS {
        return Err(RendezvousError::BodyTooLarge(body.len()));
    }
    if body.is_empty() {
        return Ok(vec![Fragment {
            msg_id,
            index: 0,
            total: 1,
            chunk: Vec::new(),
        }]);
    }
    Ok(body
        .chunks(chunk_len)
        .enumerate()
        .map(|(i, c)| Fragment {
            msg_id,
            index: i as u8,
            total: total as u8,
            chunk: c.to_vec(),
        })
        .collect())
}

/// Collate fragments of a single message in any order. Duplicates keep the
/// first copy seen.
pub fn reassemble(frags: &[Fragment]) -> Result<Vec<u8>, RendezvousError> {
    let first = frags
        .first()
        .ok_or(RendezvousError::Incomplete { missing: vec![0] })?;
    let mut chunks: BTreeMap<u8, &[u8]> = BTreeMap::new();
    for f in frags {
        if f.msg_id != first.msg_id {
            return Err(RendezvousError::MixedMessages);
        }
        if f.total != first.total {
            return Err(RendezvousError::TotalMismatch {
                expected: first.total,
                got: f.total,
            });
        }
        chunks.entry(f.index).or_insert(&f.chunk);
    }
    let missing: Vec<u8> = (0..first.total)
        .filter(|i| !chunks.contains_key(i))
        .collect();
    if !missing.is_empty() {
        return Err(RendezvousError::Incomplete { missing });
    }
    Ok(chunks.values().flat_map(|c| c.iter().copied()).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingMessage {
    pub total: u8,
    pub encrypted: bool,
    pub received: BTreeMap<u8, Vec<u8>>,
    pub first_seen_height: u32,
}

/// A message whose last fragment just arrived.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completed {
    pub msg_id: MsgId,
    pub encrypted: bool,
    pub body: Vec<u8>,
}

/// Fragment collation state that survives across scans. Completed message
/// ids are remembered for the horizon so re-scanned fragments are ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Reassembler {
    pub pending: BTreeMap<MsgId, PendingMessage>,
    pub completed: BTreeMap<MsgId, u32>,
}

impl Reassembler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one fragment seen at `height`.
    pub fn push(
        &mut self,
        part: FragmentPart,
        height: u32,
    ) -> Result<Option<Completed>, RendezvousError> {
        let f = part.fragment;
        if self.completed.contains_key(&f.msg_id) {
            return Ok(None);
        }
        let entry = self
            .pending
            .entry(f.msg_id)
            .or_insert_with(|| PendingMessage {
                total: f.total,
                encrypted: part.encrypted,
                received: BTreeMap::new(),
                first_seen_height: height,
            });
        if entry.total != f.total {
            return Err(RendezvousError::TotalMismatch {
                expected: entry.total,
                got: f.total,
            });
        }
        if entry.encrypted != part.encrypted {
            return Err(RendezvousError::MixedMessages);
        }
        entry.received.entry(f.index).or_insert(f.chunk);
        if entry.received.len() < entry.total as usize {
            return Ok(None);
        }
        let done = self.pending.remove(&f.msg_id).expect("entry exists");
        self.completed.insert(f.msg_id, height);
        Ok(Some(Completed {
            msg_id: f.msg_id,
            encrypted: done.encrypted,
            body: done.received.into_values().flatten().collect(),
        }))
    }

    /// Drop partial messages first seen more than `horizon` blocks before
    /// `height`, and forget completed ids just as old.
    pub fn expire(&mut self, height: u32, horizon: u32) -> usize {
        let before = self.pending.len();
        self.pending
            .retain(|_, p| height.saturating_sub(p.first_seen_height) <= horizon);
        self.completed
            .retain(|_, h| height.saturating_sub(*h) <= horizon);
        before - self.pending.len()
    }
}
