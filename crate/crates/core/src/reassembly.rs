//! Best-effort, per-direction TCP payload reassembly.
//!
//! No window or state-machine emulation: segments are placed by sequence
//! number relative to the SYN (or the lowest observed sequence number when
//! the handshake was not captured), the first-seen copy of every byte wins,
//! and the stream ends at the first hole.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::packet::{DecodedPacket, TcpFlags};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn opposite(self) -> Direction {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

/// Where a contiguous run of stream bytes came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentMark {
    pub offset: usize,
    pub packet_index: usize,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectionalStream {
    pub direction: Direction,
    /// Contiguous in-order payload up to the first gap.
    pub bytes: Vec<u8>,
    /// Sorted by offset; each mark covers bytes up to the next mark.
    pub segment_boundaries: Vec<SegmentMark>,
    /// Set when payload exists beyond a missing range.
    pub gap_at: Option<usize>,
    pub duplicate_segments: usize,
    pub conflicting_overlaps: usize,
}

impl DirectionalStream {
    pub fn empty(direction: Direction) -> Self {
        DirectionalStream {
            direction,
            bytes: Vec::new(),
            segment_boundaries: Vec::new(),
            gap_at: None,
            duplicate_segments: 0,
            conflicting_overlaps: 0,
        }
    }

    /// Timestamp of the packet that carried the byte at `offset`.
    pub fn timestamp_at(&self, offset: usize) -> Option<Timestamp> {
        let idx = self
            .segment_boundaries
            .partition_point(|m| m.offset <= offset)
            .checked_sub(1)?;
        Some(self.segment_boundaries[idx].timestamp)
    }

    pub fn packet_index_at(&self, offset: usize) -> Option<usize> {
        let idx = self
            .segment_boundaries
            .partition_point(|m| m.offset <= offset)
            .checked_sub(1)?;
        Some(self.segment_boundaries[idx].packet_index)
    }
}

struct Piece {
    data: Vec<u8>,
    packet_index: usize,
    timestamp: Timestamp,
}

/// Reassembles one direction of a connection. `packets` yields
/// `(index, packet)` in arrival order; the index is echoed in the segment
/// boundaries.
pub fn reassemble_direction<'a, I>(packets: I, direction: Direction) -> DirectionalStream
where
    I: IntoIterator<Item = (usize, &'a DecodedPacket)>,
{
    let packets: Vec<(usize, &DecodedPacket)> = packets.into_iter().collect();
    let mut out = DirectionalStream::empty(direction);
    let Some(anchor) = packets.first().map(|(_, p)| p.seq) else {
        return out;
    };
    // Relative positions are signed so that segments slightly before the
    // anchor (reordering) and sequence wraparound both work.
    let rel = |seq: u32| i64::from(seq.wrapping_sub(anchor) as i32);

    let start = packets
        .iter()
        .find(|(_, p)| p.flags.contains(TcpFlags::SYN))
        .map(|(_, p)| rel(p.seq) + 1)
        .or_else(|| {
            packets
                .iter()
                .filter(|(_, p)| !p.payload.is_empty())
                .map(|(_, p)| rel(p.seq))
                .min()
        });
    let Some(start) = start else {
        return out;
    };

    let mut pieces: BTreeMap<i64, Piece> = BTreeMap::new();
    for &(index, p) in &packets {
        if p.payload.is_empty() {
            continue;
        }
        let mut seg_start = rel(p.seq);
        let mut data: &[u8] = &p.payload;
        if seg_start < start {
            let skip = (start - seg_start) as usize;
            if skip >= data.len() {
                continue;
            }
            data = &data[skip..];
            seg_start = start;
        }
        let seg_end = seg_start + data.len() as i64;

        let mut cursor = seg_start;
        let mut inserted = Vec::new();
        let mut conflict = false;
        let overlapping: Vec<(i64, i64)> = pieces
            .range(..seg_end)
            .filter(|(s, pc)| **s + pc.data.len() as i64 > seg_start)
            .map(|(s, pc)| (*s, *s + pc.data.len() as i64))
            .collect();
        for (ps, pe) in overlapping {
            if ps > cursor {
                inserted.push((cursor, ps));
            }
            let ov_start = ps.max(seg_start);
            let ov_end = pe.min(seg_end);
            let existing = &pieces[&ps].data[(ov_start - ps) as usize..(ov_end - ps) as usize];
            let incoming = &data[(ov_start - seg_start) as usize..(ov_end - seg_start) as usize];
            if existing != incoming {
                conflict = true;
            }
            cursor = cursor.max(pe);
        }
        if cursor < seg_end {
            inserted.push((cursor, seg_end));
        }
        if conflict {
            out.conflicting_overlaps += 1;
        }
        if inserted.is_empty() && !conflict {
            out.duplicate_segments += 1;
        }
        for (s, e) in inserted {
            pieces.insert(
                s,
                Piece {
                    data: data[(s - seg_start) as usize..(e - seg_start) as usize].to_vec(),
                    packet_index: index,
                    timestamp: p.timestamp,
                },
            );
        }
    }

    let mut cursor = start;
    for (s, piece) in &pieces {
        if *s != cursor {
            out.gap_at = Some(out.bytes.len());
            break;
        }
        let offset = out.bytes.len();
        match out.segment_boundaries.last() {
            Some(last) if last.packet_index == piece.packet_index => {}
            _ => out.segment_boundaries.push(SegmentMark {
                offset,
                packet_index: piece.packet_index,
                timestamp: piece.timestamp,
            }),
        }
        out.bytes.extend_from_slice(&piece.data);
        cursor += piece.data.len() as i64;
    }
    if out.conflicting_overlaps > 0 {
        log::debug!(
            "reassembly: {} conflicting overlap(s) in {:?} stream, first-seen bytes kept",
            out.conflicting_overlaps,
            direction
        );
    }
    out
}
