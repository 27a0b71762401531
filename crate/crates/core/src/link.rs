//! Point-to-point links and output-port queues.
//!
//! Every link is fed by an output port with two FIFOs. VBR cells are served
//! with strict, non-preemptive priority over everything else (ABR data, RM
//! cells, UBR data).

use std::collections::VecDeque;

use crate::cell::{Cell, CellKind};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Accepted,
    Dropped,
}

/// Queue depth summary for one sampling window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DepthSample {
    pub window: u64,
    /// Largest ABR-class depth seen in the window.
    pub max_abr: u64,
    /// Largest total (ABR + VBR) depth seen in the window.
    pub max_total: u64,
    end_abr: u64,
    end_total: u64,
}

/// Queue depth over time, compressed to one sample per fixed window.
#[derive(Debug, Clone)]
pub struct DepthSeries {
    window_len: SimTime,
    samples: Vec<DepthSample>,
}

impl DepthSeries {
    pub fn new(window_len: SimTime) -> Self {
        assert!(window_len > SimTime::ZERO);
        Self {
            window_len,
            samples: Vec::new(),
        }
    }

    pub fn window_len(&self) -> SimTime {
        self.window_len
    }

    pub fn record(&mut self, now: SimTime, abr: u64, total: u64) {
        let window = now.0 / self.window_len.0;
        match self.samples.last_mut() {
            Some(s) if s.window == window => {
                s.max_abr = s.max_abr.max(abr);
                s.max_total = s.max_total.max(total);
                s.end_abr = abr;
                s.end_total = total;
            }
            last => {
                // the level carried in from earlier is part of this window too
                let (carry_abr, carry_total) = last.map_or((0, 0), |s| (s.end_abr, s.end_total));
                self.samples.push(DepthSample {
                    window,
                    max_abr: abr.max(carry_abr),
                    max_total: total.max(carry_total),
                    end_abr: abr,
                    end_total: total,
                });
            }
        }
    }

    /// Samples for windows that saw at least one transition.
    pub fn samples(&self) -> &[DepthSample] {
        &self.samples
    }

    /// One sample per window covering `[0, end)`, filling quiet windows with
    /// the level carried over from the previous transition.
    pub fn dense(&self, end: SimTime) -> Vec<DepthSample> {
        let n_windows = end.0.div_ceil(self.window_len.0);
        let mut out = Vec::with_capacity(n_windows as usize);
        let mut recorded = self.samples.iter().peekable();
        let (mut carry_abr, mut carry_total) = (0, 0);
        for window in 0..n_windows {
            match recorded.peek() {
                Some(s) if s.window == window => {
                    out.push(**s);
                    carry_abr = s.end_abr;
                    carry_total = s.end_total;
                    recorded.next();
                }
                _ => out.push(DepthSample {
                    window,
                    max_abr: carry_abr,
                    max_total: carry_total,
                    end_abr: carry_abr,
                    end_total: carry_total,
                }),
            }
        }
        out
    }
}

/// Output-port queues feeding one link.
#[derive(Debug, Clone)]
pub struct PortQueues {
    abr: VecDeque<Cell>,
    vbr: VecDeque<Cell>,
    capacity: Option<usize>,
    max_abr_depth: u64,
    max_total_depth: u64,
    drop_count: u64,
    series: Option<DepthSeries>,
}

impl PortQueues {
    /// `capacity` of `None` means unbounded.
    pub fn new(capacity: Option<usize>) -> Self {
        Self {
            abr: VecDeque::new(),
            vbr: VecDeque::new(),
            capacity,
            max_abr_depth: 0,
            max_total_depth: 0,
            drop_count: 0,
            series: None,
        }
    }

    /// Enables depth sampling with the given window length.
    pub fn with_series(mut self, window_len: SimTime) -> Self {
        self.series = Some(DepthSeries::new(window_len));
        self
    }

    pub fn enqueue(&mut self, now: SimTime, cell: Cell) -> EnqueueOutcome {
        if let Some(cap) = self.capacity {
            if self.len() >= cap {
                self.drop_count += 1;
                return EnqueueOutcome::Dropped;
            }
        }
        if cell.kind == CellKind::VbrData {
            self.vbr.push_back(cell);
        } else {
            self.abr.push_back(cell);
        }
        self.max_abr_depth = self.max_abr_depth.max(self.abr.len() as u64);
        self.max_total_depth = self.max_total_depth.max(self.len() as u64);
        self.sample(now);
        EnqueueOutcome::Accepted
    }

    /// Strict priority: VBR head first, then ABR head.
    pub fn dequeue(&mut self, now: SimTime) -> Option<Cell> {
        let cell = self.vbr.pop_front().or_else(|| self.abr.pop_front())?;
        self.sample(now);
        Some(cell)
    }

    fn sample(&mut self, now: SimTime) {
        let (abr, total) = (self.abr.len() as u64, self.len() as u64);
        if let Some(series) = &mut self.series {
            series.record(now, abr, total);
        }
    }

    pub fn len(&self) -> usize {
        self.abr.len() + self.vbr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abr.is_empty() && self.vbr.is_empty()
    }

    pub fn abr_len(&self) -> usize {
        self.abr.len()
    }

    pub fn vbr_len(&self) -> usize {
        self.vbr.len()
    }

    pub fn max_abr_depth(&self) -> u64 {
        self.max_abr_depth
    }

    pub fn max_total_depth(&self) -> u64 {
        self.max_total_depth
    }

    pub fn drop_count(&self) -> u64 {
        self.drop_count
    }

    pub fn series(&self) -> Option<&DepthSeries> {
        self.series.as_ref()
    }

    pub fn abr_cells(&self) -> impl Iterator<Item = &Cell> {
        self.abr.iter()
    }
}

/// A unidirectional link with its feeding output port.
#[derive(Debug, Clone)]
pub struct Link {
    pub cell_tx_time: SimTime,
    pub prop_delay: SimTime,
    busy_until: SimTime,
    pub port: PortQueues,
    /// A transmitter-free event is outstanding for this link.
    pub(crate) wake_pending: bool,
    transmitted: u64,
}

impl Link {
    pub fn new(cell_rate: f64, prop_delay: SimTime, port: PortQueues) -> Self {
        Self {
            cell_tx_time: SimTime::cell_interval(cell_rate),
            prop_delay,
            busy_until: SimTime::ZERO,
            port,
            wake_pending: false,
            transmitted: 0,
        }
    }

    pub fn busy_until(&self) -> SimTime {
        self.busy_until
    }

    pub fn is_idle(&self, now: SimTime) -> bool {
        self.busy_until <= now
    }

    /// Serializes one cell and returns the time it reaches the far end.
    pub fn transmit(&mut self, now: SimTime) -> SimTime {
        let start = now.max(self.busy_until);
        self.busy_until = start + self.cell_tx_time;
        self.transmitted += 1;
        self.busy_until + self.prop_delay
    }

    /// Cells put on the wire so far.
    pub fn transmitted(&self) -> u64 {
        self.transmitted
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::VcId;

    fn abr(vc: u32, seq: u64) -> Cell {
        Cell::data(VcId(vc), seq, 48, false, SimTime::ZERO)
    }

    fn vbr() -> Cell {
        Cell::vbr(VcId(999), SimTime::ZERO)
    }

    #[test]
    fn idle_link_delivery_is_one_cell_time() {
        let mut link = Link::new(365_000.0, SimTime::ZERO, PortQueues::new(None));
        let now = SimTime::from_millis(3);
        assert_eq!(link.transmit(now), now + SimTime(2_739_726));
    }

    #[test]
    fn back_to_back_cells_are_serialized() {
        let mut link = Link::new(365_000.0, SimTime::ZERO, PortQueues::new(None));
        let a = link.transmit(SimTime::ZERO);
        let b = link.transmit(SimTime::ZERO);
        assert_eq!(b - a, link.cell_tx_time);
    }

    #[test]
    fn propagation_delay_adds() {
        let mut link = Link::new(365_000.0, SimTime::from_millis(275), PortQueues::new(None));
        assert_eq!(
            link.transmit(SimTime::ZERO),
            SimTime(2_739_726) + SimTime::from_millis(275)
        );
    }

    #[test]
    fn unbounded_port_never_drops() {
        let mut p = PortQueues::new(None);
        for i in 0..1_000_000 {
            assert_eq!(
                p.enqueue(SimTime::ZERO, abr(0, i)),
                EnqueueOutcome::Accepted
            );
        }
        assert_eq!(p.drop_count(), 0);
        assert_eq!(p.max_abr_depth(), 1_000_000);
    }

    #[test]
    fn tail_drop_at_capacity() {
        let mut p = PortQueues::new(Some(100));
        for i in 0..100 {
            p.enqueue(SimTime::ZERO, abr(0, i));
        }
        assert_eq!(
            p.enqueue(SimTime::ZERO, abr(0, 100)),
            EnqueueOutcome::Dropped
        );
        assert_eq!(p.drop_count(), 1);
        assert_eq!(p.len(), 100);
    }

    #[test]
    fn vbr_served_first() {
        let mut p = PortQueues::new(None);
        for i in 0..5 {
            p.enqueue(SimTime::ZERO, abr(0, i));
        }
        p.enqueue(SimTime::ZERO, vbr());
        assert_eq!(p.dequeue(SimTime::ZERO).unwrap().kind, CellKind::VbrData);
        assert_eq!(p.dequeue(SimTime::ZERO).unwrap().seg_id, 0);
    }

    #[test]
    fn empty_port_dequeues_nothing() {
        let mut p = PortQueues::new(None);
        assert!(p.dequeue(SimTime::ZERO).is_none());
    }

    #[test]
    fn classes_keep_fifo_order_when_interleaved() {
        let mut p = PortQueues::new(None);
        for i in 0..10 {
            p.enqueue(SimTime::ZERO, abr(1, i));
            if i % 3 == 0 {
                p.enqueue(SimTime::ZERO, Cell::vbr(VcId(999), SimTime(i)));
            }
        }
        let out: Vec<Cell> = std::iter::from_fn(|| p.dequeue(SimTime::ZERO)).collect();
        let vbr_times: Vec<u64> = out
            .iter()
            .filter(|c| c.kind == CellKind::VbrData)
            .map(|c| c.created_at.0)
            .collect();
        let abr_seqs: Vec<u64> = out
            .iter()
            .filter(|c| c.kind == CellKind::Data)
            .map(|c| c.seg_id)
            .collect();
        assert_eq!(vbr_times, [0, 3, 6, 9]);
        assert_eq!(abr_seqs, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn max_depth_tracked_per_class() {
        let mut p = PortQueues::new(None);
        p.enqueue(SimTime::ZERO, abr(0, 0));
        p.enqueue(SimTime::ZERO, vbr());
        p.enqueue(SimTime::ZERO, vbr());
        p.dequeue(SimTime::ZERO);
        assert_eq!(p.max_abr_depth(), 1);
        assert_eq!(p.max_total_depth(), 3);
    }

    #[test]
    fn depth_series_compresses_and_carries_levels() {
        let ms = SimTime::from_millis(1);
        let mut p = PortQueues::new(None).with_series(ms);
        p.enqueue(SimTime::from_micros(100), abr(0, 0));
        p.enqueue(SimTime::from_micros(200), abr(0, 1));
        p.dequeue(SimTime::from_micros(300));
        // nothing happens in window 1; window 2 sees one more arrival
        p.enqueue(SimTime::from_micros(2_500), abr(0, 2));
        let s = p.series().unwrap();
        assert_eq!(s.samples().len(), 2);
        let dense = s.dense(SimTime::from_millis(4));
        let maxes: Vec<u64> = dense.iter().map(|d| d.max_abr).collect();
        assert_eq!(maxes, [2, 1, 2, 2]);
        assert!(dense.windows(2).all(|w| w[0].window < w[1].window));
    }
}
