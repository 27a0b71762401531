//! A small TCP: slow start and congestion avoidance over a scaled receiver
//! window, an always-backlogged application, segmentation into cells and
//! reassembly with cumulative ACKs.
//!
//! Only whole-MSS segments are sent. The retransmission timeout is fixed
//! (no RTT estimation); on expiry the sender goes back to `snd_una`.

use std::collections::BTreeMap;

use crate::cell::{Cell, VcId, CELL_PAYLOAD_BYTES};
use crate::error::ConfigError;
use crate::time::SimTime;

/// Per-segment framing overhead used when cutting a segment into cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Encapsulation {
    /// TCP/IP header bytes.
    pub header_bytes: u32,
    /// AAL5 trailer bytes.
    pub trailer_bytes: u32,
    pub cell_payload: u32,
}

impl Default for Encapsulation {
    fn default() -> Self {
        Self {
            header_bytes: 40,
            trailer_bytes: 8,
            cell_payload: CELL_PAYLOAD_BYTES,
        }
    }
}

impl Encapsulation {
    pub fn cells_for(&self, payload_len: u32) -> u32 {
        let bytes = payload_len + self.header_bytes + self.trailer_bytes;
        bytes.div_ceil(self.cell_payload).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcpConfig {
    pub mss: u32,
    pub rcvwnd: u64,
    pub encap: Encapsulation,
    pub rto: SimTime,
    pub delayed_ack: bool,
    pub delayed_ack_timeout: SimTime,
}

impl TcpConfig {
    /// 512-byte MSS, a 34000-byte window scaled by 2^8, RTO of two RTTs.
    pub fn new(rtt: SimTime) -> Self {
        Self {
            mss: 512,
            rcvwnd: 34_000 << 8,
            encap: Encapsulation::default(),
            rto: SimTime(rtt.0 * 2),
            delayed_ack: false,
            delayed_ack_timeout: SimTime::from_millis(200),
        }
    }

    pub fn cells_per_segment(&self) -> u32 {
        self.encap.cells_for(self.mss)
    }

    /// Receiver window expressed in cells: whole segments times cells per segment.
    pub fn window_cells(&self) -> u64 {
        self.rcvwnd.div_ceil(self.mss as u64) * self.cells_per_segment() as u64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.mss == 0 {
            return Err(ConfigError::invalid("mss", self.mss, "must be positive"));
        }
        if self.rcvwnd < self.mss as u64 {
            return Err(ConfigError::invalid(
                "rcvwnd",
                self.rcvwnd,
                "must hold at least one mss",
            ));
        }
        if self.encap.cell_payload == 0 {
            return Err(ConfigError::invalid("cell_payload", 0, "must be positive"));
        }
        if self.rto == SimTime::ZERO {
            return Err(ConfigError::invalid("rto", "0", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub seq: u64,
    pub len: u32,
    pub is_ack: bool,
    pub ack_no: u64,
}

impl Segment {
    pub fn data(seq: u64, len: u32) -> Self {
        Segment {
            seq,
            len,
            is_ack: false,
            ack_no: 0,
        }
    }

    pub fn ack(ack_no: u64) -> Self {
        Segment {
            seq: 0,
            len: 0,
            is_ack: true,
            ack_no,
        }
    }
}

/// Cuts a data segment into cells; the last one is flagged.
pub fn segment_to_cells(
    seg: &Segment,
    vc: VcId,
    encap: &Encapsulation,
    now: SimTime,
) -> impl Iterator<Item = Cell> {
    debug_assert!(!seg.is_ack && seg.len > 0);
    let n = encap.cells_for(seg.len);
    let (seq, len) = (seg.seq, seg.len);
    (0..n).map(move |i| Cell::data(vc, seq, len, i + 1 == n, now))
}

#[derive(Debug, Clone)]
pub struct TcpSender {
    cfg: TcpConfig,
    cwnd: u64,
    ssthresh: u64,
    snd_una: u64,
    snd_nxt: u64,
    /// Highest sequence number sent so far, for counting retransmissions.
    high_water: u64,
    rto_deadline: Option<SimTime>,
    timeouts: u64,
    retransmitted_segments: u64,
    rounds: u64,
    round_end: Option<u64>,
    round_start_cwnd: Vec<u64>,
    rounds_to_full_window: Option<u64>,
}

impl TcpSender {
    pub fn new(cfg: TcpConfig) -> Self {
        let mss = cfg.mss as u64;
        let ssthresh = cfg.rcvwnd;
        Self {
            cfg,
            cwnd: mss,
            ssthresh,
            snd_una: 0,
            snd_nxt: 0,
            high_water: 0,
            rto_deadline: None,
            timeouts: 0,
            retransmitted_segments: 0,
            rounds: 0,
            round_end: None,
            round_start_cwnd: Vec::new(),
            rounds_to_full_window: None,
        }
    }

    pub fn config(&self) -> &TcpConfig {
        &self.cfg
    }

    pub fn cwnd(&self) -> u64 {
        self.cwnd
    }

    pub fn ssthresh(&self) -> u64 {
        self.ssthresh
    }

    pub fn snd_una(&self) -> u64 {
        self.snd_una
    }

    pub fn snd_nxt(&self) -> u64 {
        self.snd_nxt
    }

    pub fn outstanding(&self) -> u64 {
        self.snd_nxt - self.snd_una
    }

    pub fn timeouts(&self) -> u64 {
        self.timeouts
    }

    pub fn retransmitted_segments(&self) -> u64 {
        self.retransmitted_segments
    }

    pub fn rto_deadline(&self) -> Option<SimTime> {
        self.rto_deadline
    }

    /// Completed round trips. A round ends when everything sent before it
    /// began has been acknowledged.
    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// `cwnd` at the start of each round, starting with round 1.
    pub fn round_start_cwnd(&self) -> &[u64] {
        &self.round_start_cwnd
    }

    /// Number of completed rounds when `cwnd` first reached `rcvwnd`.
    pub fn rounds_to_full_window(&self) -> Option<u64> {
        self.rounds_to_full_window
    }

    fn window(&self) -> u64 {
        self.cwnd.min(self.cfg.rcvwnd)
    }

    /// Emits as many whole-MSS segments as the window allows.
    pub fn try_send(&mut self, now: SimTime) -> Vec<Segment> {
        let mss = self.cfg.mss as u64;
        let limit = self.snd_una + self.window();
        let mut out = Vec::new();
        while self.snd_nxt + mss <= limit {
            if self.snd_nxt < self.high_water {
                self.retransmitted_segments += 1;
            }
            out.push(Segment::data(self.snd_nxt, self.cfg.mss));
            self.snd_nxt += mss;
        }
        self.high_water = self.high_water.max(self.snd_nxt);
        if self.round_end.is_none() && !out.is_empty() {
            self.round_end = Some(self.snd_nxt);
            self.round_start_cwnd.push(self.cwnd);
        }
        if self.rto_deadline.is_none() && self.outstanding() > 0 {
            self.rto_deadline = Some(now + self.cfg.rto);
        }
        out
    }

    /// Processes a cumulative ACK and sends whatever the grown window allows.
    /// Old and duplicate ACKs change nothing.
    pub fn on_ack(&mut self, now: SimTime, ack_no: u64) -> Vec<Segment> {
        if ack_no <= self.snd_una || ack_no > self.high_water {
            return Vec::new();
        }
        let mss = self.cfg.mss as u64;
        let acked = ack_no - self.snd_una;
        self.snd_una = ack_no;
        // after a go-back-N restart an ACK may cover data beyond snd_nxt
        self.snd_nxt = self.snd_nxt.max(self.snd_una);
        if self.cwnd < self.ssthresh {
            self.cwnd += mss * acked.div_ceil(mss);
        } else {
            self.cwnd += (mss * mss / self.cwnd).max(1);
        }
        self.cwnd = self.cwnd.min(self.cfg.rcvwnd);
        if self.rounds_to_full_window.is_none() && self.cwnd >= self.cfg.rcvwnd {
            self.rounds_to_full_window = Some(self.rounds + 1);
        }
        self.rto_deadline = (self.outstanding() > 0).then(|| now + self.cfg.rto);

        let round_done = self.round_end.is_some_and(|end| ack_no >= end);
        if round_done {
            self.rounds += 1;
            self.round_end = None;
        }
        self.try_send(now)
    }

    /// Fires the retransmission timer if it is due. Returns `true` on a timeout.
    pub fn on_timeout(&mut self, now: SimTime) -> bool {
        match self.rto_deadline {
            Some(d) if d <= now && self.outstanding() > 0 => {}
            _ => return false,
        }
        let mss = self.cfg.mss as u64;
        self.ssthresh = (self.outstanding() / 2).max(2 * mss);
        self.cwnd = mss;
        self.snd_nxt = self.snd_una;
        self.rto_deadline = None;
        self.timeouts += 1;
        // the partially acknowledged round is abandoned
        if self.round_end.is_some() {
            self.round_end = None;
        }
        true
    }
}

/// What the receiver wants sent back after a cell arrives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckAction {
    None,
    Ack(u64),
    /// Hold the ACK; fire a delayed-ACK timer.
    ArmDelayedAck,
}

#[derive(Debug, Clone)]
pub struct TcpReceiver {
    mss: u32,
    encap: Encapsulation,
    delayed_ack: bool,
    rcv_nxt: u64,
    out_of_order: BTreeMap<u64, u32>,
    assembling: Option<(u64, u32)>,
    delivered_bytes: u64,
    discarded_segments: u64,
    unacked_segments: u32,
    delack_armed: bool,
}

impl TcpReceiver {
    pub fn new(cfg: &TcpConfig) -> Self {
        Self {
            mss: cfg.mss,
            encap: cfg.encap,
            delayed_ack: cfg.delayed_ack,
            rcv_nxt: 0,
            out_of_order: BTreeMap::new(),
            assembling: None,
            delivered_bytes: 0,
            discarded_segments: 0,
            unacked_segments: 0,
            delack_armed: false,
        }
    }

    pub fn rcv_nxt(&self) -> u64 {
        self.rcv_nxt
    }

    pub fn delivered_bytes(&self) -> u64 {
        self.delivered_bytes
    }

    pub fn discarded_segments(&self) -> u64 {
        self.discarded_segments
    }

    pub fn mss(&self) -> u32 {
        self.mss
    }

    /// Accepts one data cell. A segment is delivered once its last cell
    /// arrives with all earlier cells present.
    pub fn on_cell(&mut self, cell: &Cell) -> AckAction {
        let expected = self.encap.cells_for(cell.seg_len);
        let seen = match self.assembling {
            Some((id, n)) if id == cell.seg_id => n + 1,
            Some(_) => {
                // a new segment began before the previous one completed
                self.discarded_segments += 1;
                1
            }
            None => 1,
        };
        if !cell.last_of_segment {
            self.assembling = Some((cell.seg_id, seen));
            return AckAction::None;
        }
        self.assembling = None;
        if seen != expected {
            self.discarded_segments += 1;
            return AckAction::None;
        }
        self.on_segment(cell.seg_id, cell.seg_len)
    }

    fn on_segment(&mut self, seq: u64, len: u32) -> AckAction {
        if seq == self.rcv_nxt {
            self.rcv_nxt += len as u64;
            self.delivered_bytes += len as u64;
            while let Some(l) = self.out_of_order.remove(&self.rcv_nxt) {
                self.rcv_nxt += l as u64;
                self.delivered_bytes += l as u64;
            }
            if self.delayed_ack {
                self.unacked_segments += 1;
                if self.unacked_segments < 2 {
                    if self.delack_armed {
                        return AckAction::None;
                    }
                    self.delack_armed = true;
                    return AckAction::ArmDelayedAck;
                }
            }
            self.unacked_segments = 0;
            self.delack_armed = false;
            AckAction::Ack(self.rcv_nxt)
        } else {
            if seq > self.rcv_nxt {
                self.out_of_order.insert(seq, len);
            }
            self.unacked_segments = 0;
            AckAction::Ack(self.rcv_nxt)
        }
    }

    /// Delayed-ACK timer expiry.
    pub fn on_delayed_ack_timer(&mut self) -> Option<u64> {
        if !self.delack_armed {
            return None;
        }
        self.delack_armed = false;
        if self.unacked_segments == 0 {
            return None;
        }
        self.unacked_segments = 0;
        Some(self.rcv_nxt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TcpConfig {
        TcpConfig::new(SimTime::from_millis(550))
    }

    fn cells(seq: u64, c: &TcpConfig) -> Vec<Cell> {
        segment_to_cells(&Segment::data(seq, c.mss), VcId(0), &c.encap, SimTime::ZERO).collect()
    }

    #[test]
    fn default_window_and_cells() {
        let c = cfg();
        assert_eq!(c.rcvwnd, 8_704_000);
        assert_eq!(c.cells_per_segment(), 12);
        assert_eq!(c.window_cells(), 204_000);
    }

    #[test]
    fn cells_per_segment_examples() {
        let e = Encapsulation::default();
        assert_eq!(e.cells_for(512), 12);
        assert_eq!(e.cells_for(1), 2);
        let bare = Encapsulation {
            header_bytes: 0,
            trailer_bytes: 0,
            ..e
        };
        assert_eq!(bare.cells_for(512), 11);
    }

    #[test]
    fn segmentation_flags_last_cell() {
        let c = cfg();
        let v = cells(1024, &c);
        assert_eq!(v.len(), 12);
        assert!(v[..11]
            .iter()
            .all(|x| !x.last_of_segment && x.seg_id == 1024));
        assert!(v[11].last_of_segment);
    }

    #[test]
    fn fresh_connection_sends_one_segment() {
        let mut s = TcpSender::new(cfg());
        let segs = s.try_send(SimTime::ZERO);
        assert_eq!(segs, [Segment::data(0, 512)]);
        assert!(s.try_send(SimTime::ZERO).is_empty());
        assert_eq!(s.rto_deadline(), Some(SimTime::from_millis(1100)));
    }

    #[test]
    fn whole_mss_only() {
        let mut c = cfg();
        c.rcvwnd = 1000;
        let mut s = TcpSender::new(c);
        s.cwnd = 100_000;
        assert_eq!(s.try_send(SimTime::ZERO).len(), 1);
    }

    #[test]
    fn slow_start_doubles_per_round() {
        let mut s = TcpSender::new(cfg());
        s.try_send(SimTime::ZERO);
        let segs = s.on_ack(SimTime(1), 512);
        assert_eq!(s.cwnd(), 1024);
        assert_eq!(segs.len(), 2);
        assert_eq!(s.rounds(), 1);
    }

    #[test]
    fn cwnd_capped_at_receiver_window() {
        let mut c = cfg();
        c.rcvwnd = 4 * 512;
        let mut s = TcpSender::new(c);
        let mut outstanding: Vec<Segment> = s.try_send(SimTime::ZERO);
        for _ in 0..20 {
            let seg = outstanding.remove(0);
            outstanding.extend(s.on_ack(SimTime(1), seg.seq + 512));
            assert!(s.outstanding() <= 4 * 512);
        }
        assert_eq!(s.cwnd(), 4 * 512);
    }

    #[test]
    fn duplicate_and_old_acks_ignored() {
        let mut s = TcpSender::new(cfg());
        s.try_send(SimTime::ZERO);
        s.on_ack(SimTime(1), 512);
        let before = (s.cwnd(), s.snd_una());
        assert!(s.on_ack(SimTime(2), 512).is_empty());
        assert!(s.on_ack(SimTime(2), 0).is_empty());
        assert_eq!((s.cwnd(), s.snd_una()), before);
    }

    /// Acks whole rounds at once and checks the doubling schedule.
    #[test]
    fn rounds_to_fill_default_window() {
        let mut s = TcpSender::new(cfg());
        let mut inflight = s.try_send(SimTime::ZERO);
        let mut t = 0;
        while s.rounds_to_full_window().is_none() {
            t += 1;
            let round: Vec<Segment> = std::mem::take(&mut inflight);
            for seg in round {
                inflight.extend(s.on_ack(SimTime(t), seg.seq + seg.len as u64));
            }
        }
        assert_eq!(s.rounds_to_full_window(), Some(15));
        for (k, &w) in s.round_start_cwnd().iter().enumerate() {
            assert_eq!(w, (512u64 << k).min(8_704_000));
        }
    }

    #[test]
    fn congestion_avoidance_is_linear() {
        let mut s = TcpSender::new(cfg());
        s.ssthresh = 512;
        s.cwnd = 5120;
        s.try_send(SimTime::ZERO);
        s.on_ack(SimTime(1), 512);
        assert_eq!(s.cwnd(), 5120 + 512 * 512 / 5120);
    }

    #[test]
    fn timeout_resets_cwnd_and_goes_back() {
        let mut s = TcpSender::new(cfg());
        s.cwnd = 8 * 512;
        s.try_send(SimTime::ZERO);
        assert_eq!(s.outstanding(), 8 * 512);
        assert!(!s.on_timeout(SimTime::from_millis(1000)));
        assert!(s.on_timeout(SimTime::from_millis(1100)));
        assert_eq!(s.cwnd(), 512);
        assert_eq!(s.ssthresh(), 4 * 512);
        assert_eq!(s.snd_nxt(), 0);
        let resent = s.try_send(SimTime::from_millis(1100));
        assert_eq!(resent, [Segment::data(0, 512)]);
        assert_eq!(s.retransmitted_segments(), 1);
    }

    #[test]
    fn new_ack_rearms_timer() {
        let mut s = TcpSender::new(cfg());
        s.cwnd = 4 * 512;
        s.try_send(SimTime::ZERO);
        s.on_ack(SimTime::from_millis(600), 512);
        assert_eq!(s.rto_deadline(), Some(SimTime::from_millis(1700)));
        assert!(!s.on_timeout(SimTime::from_millis(1100)));
    }

    #[test]
    fn in_order_segment_is_acked() {
        let c = cfg();
        let mut r = TcpReceiver::new(&c);
        let v = cells(0, &c);
        let acts: Vec<AckAction> = v.iter().map(|x| r.on_cell(x)).collect();
        assert!(acts[..11].iter().all(|a| *a == AckAction::None));
        assert_eq!(acts[11], AckAction::Ack(512));
        assert_eq!(r.delivered_bytes(), 512);
    }

    #[test]
    fn out_of_order_segment_gets_duplicate_ack() {
        let c = cfg();
        let mut r = TcpReceiver::new(&c);
        let last = cells(512, &c).into_iter().map(|x| r.on_cell(&x)).last();
        assert_eq!(last, Some(AckAction::Ack(0)));
        let last = cells(0, &c).into_iter().map(|x| r.on_cell(&x)).last();
        assert_eq!(last, Some(AckAction::Ack(1024)));
    }

    #[test]
    fn missing_cell_discards_segment() {
        let c = cfg();
        let mut r = TcpReceiver::new(&c);
        let v = cells(0, &c);
        for (i, x) in v.iter().enumerate() {
            if i != 4 {
                assert_eq!(r.on_cell(x), AckAction::None);
            }
        }
        assert_eq!(r.rcv_nxt(), 0);
        assert_eq!(r.discarded_segments(), 1);
    }

    #[test]
    fn delayed_ack_every_second_segment() {
        let mut c = cfg();
        c.delayed_ack = true;
        let mut r = TcpReceiver::new(&c);
        let a = cells(0, &c).into_iter().map(|x| r.on_cell(&x)).last();
        assert_eq!(a, Some(AckAction::ArmDelayedAck));
        let a = cells(512, &c).into_iter().map(|x| r.on_cell(&x)).last();
        assert_eq!(a, Some(AckAction::Ack(1024)));
        assert_eq!(r.on_delayed_ack_timer(), None);
        cells(1024, &c).into_iter().for_each(|x| {
            r.on_cell(&x);
        });
        assert_eq!(r.on_delayed_ack_timer(), Some(1536));
    }
}
