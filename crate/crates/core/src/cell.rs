//! ATM cells.

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

/// Bytes on the wire per cell.
pub const CELL_BYTES: u32 = 53;
/// Payload bytes per cell.
pub const CELL_PAYLOAD_BYTES: u32 = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VcId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Data,
    ForwardRm,
    BackwardRm,
    VbrData,
}

/// A single cell. Rates are in cells/s.
///
/// Data cells carry a segment tag: `seg_id` is the first byte sequence
/// number of the segment and `seg_len` its payload length. A data cell with
/// `seg_len == 0` carries a pure ACK and `seg_id` is the acknowledgement
/// number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub kind: CellKind,
    pub vc: VcId,
    pub er: f64,
    pub ccr: f64,
    pub seg_id: u64,
    pub seg_len: u32,
    pub last_of_segment: bool,
    pub created_at: SimTime,
}

impl Cell {
    pub fn data(vc: VcId, seg_id: u64, seg_len: u32, last_of_segment: bool, now: SimTime) -> Self {
        Cell {
            kind: CellKind::Data,
            vc,
            er: 0.0,
            ccr: 0.0,
            seg_id,
            seg_len,
            last_of_segment,
            created_at: now,
        }
    }

    pub fn ack(vc: VcId, ack_no: u64, now: SimTime) -> Self {
        Cell::data(vc, ack_no, 0, true, now)
    }

    pub fn forward_rm(vc: VcId, ccr: f64, er: f64, now: SimTime) -> Self {
        debug_assert!(er > 0.0 && ccr >= 0.0);
        Cell {
            kind: CellKind::ForwardRm,
            vc,
            er,
            ccr,
            seg_id: 0,
            seg_len: 0,
            last_of_segment: false,
            created_at: now,
        }
    }

    pub fn vbr(vc: VcId, now: SimTime) -> Self {
        Cell {
            kind: CellKind::VbrData,
            ..Cell::data(vc, 0, 0, false, now)
        }
    }

    pub fn is_rm(&self) -> bool {
        matches!(self.kind, CellKind::ForwardRm | CellKind::BackwardRm)
    }

    pub fn is_ack(&self) -> bool {
        self.kind == CellKind::Data && self.seg_len == 0
    }
}
