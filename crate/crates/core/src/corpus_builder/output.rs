//! Block serialization.
//!
//! JSONL: one object per line, `{"source":..,"ids":[..],"origin":{"start":..,"end":..}}`.
//!
//! Frames: a flat file of little-endian u32 ids, `block_size * 4` bytes per
//! block and no header, plus a JSON index listing the source and origin of
//! each frame in file order.

use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use super::{RecordRange, TokenBlock};
use crate::tokenizer::TokenId;

pub const FRAME_FORMAT: &str = "u32le";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub source: String,
    pub origin: RecordRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameIndex {
    pub format: String,
    pub block_size: usize,
    pub frames: Vec<FrameEntry>,
}

pub fn write_blocks_jsonl<W: Write>(mut w: W, blocks: &[TokenBlock]) -> io::Result<()> {
    for b in blocks {
        serde_json::to_writer(&mut w, b)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_blocks_jsonl<R: BufRead>(r: R) -> io::Result<Vec<TokenBlock>> {
    r.lines()
        .filter(|l| !matches!(l, Ok(s) if s.is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

/// Writes frames to `data` and returns the matching index.
pub fn write_frames<W: Write>(mut data: W, blocks: &[TokenBlock], block_size: usize) -> io::Result<FrameIndex> {
    let mut frames = Vec::with_capacity(blocks.len());
    for b in blocks {
        if b.ids.len() != block_size {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("block of {} ids does not fit frame size {block_size}", b.ids.len()),
            ));
        }
        for id in &b.ids {
            data.write_all(&id.to_le_bytes())?;
        }
        frames.push(FrameEntry {
            source: b.source.clone(),
            origin: b.origin,
        });
    }
    Ok(FrameIndex {
        format: FRAME_FORMAT.to_string(),
        block_size,
        frames,
    })
}

pub fn read_frames<R: Read>(mut data: R, index: &FrameIndex) -> io::Result<Vec<TokenBlock>> {
    let mut bytes = Vec::new();
    data.read_to_end(&mut bytes)?;
    let frame_bytes = index.block_size * 4;
    if index.format != FRAME_FORMAT || bytes.len() != frame_bytes * index.frames.len() {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame data does not match index"));
    }
    Ok(bytes
        .chunks_exact(frame_bytes)
        .zip(&index.frames)
        .map(|(chunk, entry)| TokenBlock {
            source: entry.source.clone(),
            ids: chunk
                .chunks_exact(4)
                .map(|b| TokenId::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
            origin: entry.origin,
        })
        .collect())
}
