//! The "n sources + VBR" topology wired onto the event kernel.
//!
//! ```text
//!  src_i --access--> SW1 ==satellite==> SW2 --dest_leg--> dst_i
//!  src_i <--access-- SW1 <==satellite== SW2 <--dest_leg-- dst_i
//!                     ^ VBR source
//! ```
//!
//! SW1's satellite-facing port is the bottleneck and runs ERICA/ERICA+.
//! Backward RM cells are stamped by that port's allocator as they pass SW1
//! on the way back to the sources.

use crate::abr::{dest_turnaround, AbrSource, ServiceClass};
use crate::cell::{Cell, CellKind, VcId};
use crate::engine::{Event, Scheduler};
use crate::erica::{EricaPort, IntervalSummary};
use crate::error::ConfigError;
use crate::link::{EnqueueOutcome, Link, PortQueues};
use crate::scenario::config::{PathDelays, ScenarioConfig};
use crate::tcp::{segment_to_cells, AckAction, Segment, TcpReceiver, TcpSender};
use crate::time::SimTime;
use crate::vbr::VbrSource;

/// Which traces to keep in memory during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TraceOptions {
    pub acr: bool,
    pub cwnd: bool,
    pub erica: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcrSample {
    pub time: SimTime,
    pub vc: VcId,
    pub acr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CwndSample {
    pub time: SimTime,
    pub conn: u32,
    pub cwnd: u64,
    pub snd_una: u64,
    pub snd_nxt: u64,
}

#[derive(Debug, Default, Clone)]
pub struct Traces {
    pub acr: Vec<AcrSample>,
    pub cwnd: Vec<CwndSample>,
    pub erica: Vec<IntervalSummary>,
}

/// Where a link delivers its cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Hop {
    Sw1Forward,
    Sw2Forward,
    Destination(u32),
    Sw2Reverse,
    Sw1Reverse,
    Source(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LinkId(u32);

#[derive(Debug, Clone)]
enum Ev {
    SourceEmit { src: u32, gen: u32 },
    TxDone { link: LinkId },
    Arrive { link: LinkId, cell: Cell },
    EricaTimer { gen: u64 },
    VbrEmit,
    Rto { conn: u32 },
    DelayedAck { conn: u32 },
    TailMark,
}

/// Cell accounting across the whole network.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CellLedger {
    pub injected: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub queued: u64,
}

impl CellLedger {
    pub fn balanced(&self) -> bool {
        self.injected == self.delivered + self.dropped + self.in_flight + self.queued
    }
}

struct Endpoint {
    source: AbrSource,
    sender: TcpSender,
    receiver: TcpReceiver,
    emit_at: Option<SimTime>,
    emit_gen: u32,
    rto_pending: bool,
    access_fwd: LinkId,
    access_rev: LinkId,
    dest_fwd: LinkId,
    dest_rev: LinkId,
}

struct World {
    cfg: ScenarioConfig,
    links: Vec<Link>,
    hops: Vec<Hop>,
    endpoints: Vec<Endpoint>,
    sat_fwd: LinkId,
    sat_rev: LinkId,
    erica: Option<EricaPort>,
    erica_gen: u64,
    vbr: Option<VbrSource>,
    vbr_vc: VcId,
    ledger: CellLedger,
    bottleneck_abr_tx: u64,
    tail_mark: Option<(SimTime, u64)>,
    traces: Traces,
    trace_opts: TraceOptions,
    digest: u64,
}

/// A wired, runnable scenario.
pub struct Simulation {
    sched: Scheduler<Ev>,
    world: World,
}

fn mix(h: u64, v: u64) -> u64 {
    // FNV-1a over the 8 bytes of v
    let mut h = h;
    for b in v.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Simulation {
    /// Builds the topology for `cfg`.
    pub fn new(cfg: &ScenarioConfig, trace_opts: TraceOptions) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let delays: PathDelays = cfg.path_delays()?;
        let rate = cfg.link_cell_rate;
        let capacity = cfg.buffer_capacity.map(|c| c as usize);
        let window = SimTime::from_millis_f64(cfg.sample_window_ms);

        let mut links = Vec::new();
        let mut hops = Vec::new();
        let mut add = |delay: SimTime, hop: Hop, port: PortQueues| {
            links.push(Link::new(rate, delay, port));
            hops.push(hop);
            LinkId(links.len() as u32 - 1)
        };
        let sat_fwd = add(
            delays.satellite,
            Hop::Sw2Forward,
            PortQueues::new(capacity).with_series(window),
        );
        let sat_rev = add(delays.satellite, Hop::Sw1Reverse, PortQueues::new(None));

        let tcp_cfg = cfg.tcp_config();
        let src_cfg = cfg.source_config();
        let mut endpoints = Vec::with_capacity(cfg.n_sources as usize);
        for i in 0..cfg.n_sources {
            let access_fwd = add(delays.access, Hop::Sw1Forward, PortQueues::new(None));
            let access_rev = add(delays.access, Hop::Source(i), PortQueues::new(None));
            let dest_fwd = add(delays.dest_leg, Hop::Destination(i), PortQueues::new(None));
            let dest_rev = add(delays.dest_leg, Hop::Sw2Reverse, PortQueues::new(None));
            endpoints.push(Endpoint {
                source: AbrSource::new(VcId(i), src_cfg),
                sender: TcpSender::new(tcp_cfg.clone()),
                receiver: TcpReceiver::new(&tcp_cfg),
                emit_at: None,
                emit_gen: 0,
                rto_pending: false,
                access_fwd,
                access_rev,
                dest_fwd,
                dest_rev,
            });
        }

        let erica = (cfg.service == ServiceClass::Abr).then(|| EricaPort::new(cfg.erica_config()));
        let vbr = cfg.vbr.then(|| VbrSource::new(cfg.vbr_config()));
        let world = World {
            cfg: cfg.clone(),
            links,
            hops,
            endpoints,
            sat_fwd,
            sat_rev,
            erica,
            erica_gen: 0,
            vbr,
            vbr_vc: VcId(cfg.n_sources),
            ledger: CellLedger::default(),
            bottleneck_abr_tx: 0,
            tail_mark: None,
            traces: Traces::default(),
            trace_opts,
            digest: 0xcbf2_9ce4_8422_2325,
        };
        let mut sim = Simulation {
            sched: Scheduler::new(),
            world,
        };
        sim.start();
        Ok(sim)
    }

    fn start(&mut self) {
        let (sched, w) = (&mut self.sched, &mut self.world);
        if let Some(e) = &w.erica {
            sched.schedule(e.config().interval_len_time, Ev::EricaTimer { gen: 0 });
        }
        if let Some(v) = &w.vbr {
            sched.schedule(v.next_emission(), Ev::VbrEmit);
        }
        let tail = w.cfg.rtt().0.saturating_mul(5);
        let end = w.cfg.duration();
        sched.schedule(end.saturating_sub(SimTime(tail)), Ev::TailMark);
        for i in 0..w.endpoints.len() as u32 {
            let segs = w.endpoints[i as usize].sender.try_send(SimTime::ZERO);
            w.queue_segments(sched, i, &segs);
            w.arm_rto(sched, i);
        }
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.world.cfg
    }

    /// Runs to `t_end` and returns the number of events dispatched.
    pub fn run_until(&mut self, t_end: SimTime) -> u64 {
        let world = &mut self.world;
        self.sched
            .run_until(t_end, |sched, ev| world.dispatch(sched, ev))
    }

    /// Runs to `t_end`, calling `audit` every `every` events.
    pub fn run_audited<F>(&mut self, t_end: SimTime, every: u64, mut audit: F) -> u64
    where
        F: FnMut(SimTime, CellLedger),
    {
        let mut n = 0;
        while let Some(ev) = self.sched.pop_due(t_end) {
            self.world.dispatch(&mut self.sched, ev);
            n += 1;
            if n % every == 0 {
                audit(self.sched.now(), self.ledger());
            }
        }
        self.sched.run_until(t_end, |_, _| unreachable!());
        audit(self.sched.now(), self.ledger());
        n
    }

    /// Runs the configured duration.
    pub fn run(&mut self) -> u64 {
        let end = self.world.cfg.duration();
        self.run_until(end)
    }

    pub fn events_dispatched(&self) -> u64 {
        self.sched.dispatched()
    }

    /// Order-sensitive digest of every dispatched event.
    pub fn trace_digest(&self) -> u64 {
        self.world.digest
    }

    pub fn ledger(&self) -> CellLedger {
        let mut l = self.world.ledger;
        l.queued = self.world.links.iter().map(|k| k.port.len() as u64).sum();
        l
    }

    pub fn bottleneck(&self) -> &Link {
        &self.world.links[self.world.sat_fwd.0 as usize]
    }

    pub fn erica(&self) -> Option<&EricaPort> {
        self.world.erica.as_ref()
    }

    pub fn senders(&self) -> impl Iterator<Item = &TcpSender> {
        self.world.endpoints.iter().map(|e| &e.sender)
    }

    pub fn receivers(&self) -> impl Iterator<Item = &TcpReceiver> {
        self.world.endpoints.iter().map(|e| &e.receiver)
    }

    pub fn sources(&self) -> impl Iterator<Item = &AbrSource> {
        self.world.endpoints.iter().map(|e| &e.source)
    }

    pub fn vbr(&self) -> Option<&VbrSource> {
        self.world.vbr.as_ref()
    }

    /// Total drops over all ports.
    pub fn drops(&self) -> u64 {
        self.world.ledger.dropped
    }

    /// ABR-class cells sent on the bottleneck link so far.
    pub fn bottleneck_abr_cells(&self) -> u64 {
        self.world.bottleneck_abr_tx
    }

    /// Time and bottleneck ABR count at the start of the last five round trips.
    pub fn tail_mark(&self) -> Option<(SimTime, u64)> {
        self.world.tail_mark
    }

    pub fn traces(&self) -> &Traces {
        &self.world.traces
    }
}

impl World {
    fn dispatch(&mut self, sched: &mut Scheduler<Ev>, ev: Event<Ev>) {
        let tag = match &ev.payload {
            Ev::SourceEmit { src, .. } => 1 | (*src as u64) << 8,
            Ev::TxDone { link } => 2 | (link.0 as u64) << 8,
            Ev::Arrive { link, cell } => 3 | (link.0 as u64) << 8 | (cell.vc.0 as u64) << 32,
            Ev::EricaTimer { .. } => 4,
            Ev::VbrEmit => 5,
            Ev::Rto { conn } => 6 | (*conn as u64) << 8,
            Ev::DelayedAck { conn } => 7 | (*conn as u64) << 8,
            Ev::TailMark => 8,
        };
        self.digest = mix(mix(mix(self.digest, ev.fire_at.0), ev.seqno), tag);

        match ev.payload {
            Ev::SourceEmit { src, gen } => self.on_source_emit(sched, src, gen),
            Ev::TxDone { link } => self.on_tx_done(sched, link),
            Ev::Arrive { link, cell } => self.on_arrive(sched, link, cell),
            Ev::EricaTimer { gen } => {
                if gen == self.erica_gen {
                    self.close_interval(sched);
                }
            }
            Ev::VbrEmit => self.on_vbr_emit(sched),
            Ev::Rto { conn } => self.on_rto(sched, conn),
            Ev::DelayedAck { conn } => {
                let e = &mut self.endpoints[conn as usize];
                if let Some(ack) = e.receiver.on_delayed_ack_timer() {
                    self.send_ack(sched, conn, ack);
                }
            }
            Ev::TailMark => self.tail_mark = Some((sched.now(), self.bottleneck_abr_tx)),
        }
    }

    fn link(&mut self, id: LinkId) -> &mut Link {
        &mut self.links[id.0 as usize]
    }

    /// Hands a cell to a link's output port.
    fn send(&mut self, sched: &mut Scheduler<Ev>, id: LinkId, cell: Cell) {
        let now = sched.now();
        let link = &mut self.links[id.0 as usize];
        if link.port.is_empty() && link.is_idle(now) {
            let at = link.transmit(now);
            self.on_transmit(sched, id, at, cell);
            return;
        }
        match link.port.enqueue(now, cell) {
            EnqueueOutcome::Dropped => self.ledger.dropped += 1,
            EnqueueOutcome::Accepted => {
                if !link.wake_pending {
                    link.wake_pending = true;
                    let at = link.busy_until();
                    sched.schedule(at, Ev::TxDone { link: id });
                }
            }
        }
    }

    fn on_transmit(&mut self, sched: &mut Scheduler<Ev>, id: LinkId, at: SimTime, cell: Cell) {
        if id == self.sat_fwd && cell.kind != CellKind::VbrData {
            self.bottleneck_abr_tx += 1;
        }
        self.ledger.in_flight += 1;
        sched.schedule(at, Ev::Arrive { link: id, cell });
    }

    fn on_tx_done(&mut self, sched: &mut Scheduler<Ev>, id: LinkId) {
        let now = sched.now();
        let link = self.link(id);
        link.wake_pending = false;
        let Some(cell) = link.port.dequeue(now) else {
            return;
        };
        let at = link.transmit(now);
        if !link.port.is_empty() {
            link.wake_pending = true;
            let next = link.busy_until();
            sched.schedule(next, Ev::TxDone { link: id });
        }
        self.on_transmit(sched, id, at, cell);
    }

    fn on_arrive(&mut self, sched: &mut Scheduler<Ev>, id: LinkId, mut cell: Cell) {
        self.ledger.in_flight -= 1;
        match self.hops[id.0 as usize] {
            Hop::Sw1Forward => self.enter_bottleneck(sched, cell),
            Hop::Sw2Forward => {
                if cell.kind == CellKind::VbrData {
                    self.ledger.delivered += 1;
                } else {
                    let next = self.endpoints[cell.vc.0 as usize].dest_fwd;
                    self.send(sched, next, cell);
                }
            }
            Hop::Destination(i) => self.at_destination(sched, i, cell),
            Hop::Sw2Reverse => {
                let next = self.sat_rev;
                self.send(sched, next, cell);
            }
            Hop::Sw1Reverse => {
                if cell.kind == CellKind::BackwardRm {
                    if let Some(erica) = &self.erica {
                        erica.stamp_backward_rm(&mut cell);
                    }
                }
                let next = self.endpoints[cell.vc.0 as usize].access_rev;
                self.send(sched, next, cell);
            }
            Hop::Source(i) => self.at_source(sched, i, cell),
        }
    }

    /// A forward cell reaches SW1 and is queued for the satellite link.
    fn enter_bottleneck(&mut self, sched: &mut Scheduler<Ev>, cell: Cell) {
        let quota_reached = match &mut self.erica {
            Some(e) => e.observe_forward_cell(&cell),
            None => false,
        };
        let id = self.sat_fwd;
        self.send(sched, id, cell);
        if quota_reached {
            self.close_interval(sched);
        }
    }

    fn close_interval(&mut self, sched: &mut Scheduler<Ev>) {
        let now = sched.now();
        let queue = self.links[self.sat_fwd.0 as usize].port.abr_len() as u64;
        let Some(erica) = &mut self.erica else {
            return;
        };
        let summary = erica.end_interval(now, queue);
        self.erica_gen += 1;
        let next = now + erica.config().interval_len_time;
        sched.schedule(
            next,
            Ev::EricaTimer {
                gen: self.erica_gen,
            },
        );
        if self.trace_opts.erica {
            self.traces.erica.push(summary);
        }
    }

    fn on_vbr_emit(&mut self, sched: &mut Scheduler<Ev>) {
        let now = sched.now();
        let vc = self.vbr_vc;
        let Some(vbr) = &mut self.vbr else {
            return;
        };
        vbr.advance();
        let next = vbr.next_emission();
        sched.schedule(next, Ev::VbrEmit);
        self.ledger.injected += 1;
        self.enter_bottleneck(sched, Cell::vbr(vc, now));
    }

    fn at_destination(&mut self, sched: &mut Scheduler<Ev>, i: u32, cell: Cell) {
        self.ledger.delivered += 1;
        let now = sched.now();
        match cell.kind {
            CellKind::ForwardRm => {
                let pcr = self.endpoints[i as usize].source.config().pcr;
                let back = dest_turnaround(&cell, pcr, now);
                let link = self.endpoints[i as usize].dest_rev;
                self.ledger.injected += 1;
                self.send(sched, link, back);
            }
            CellKind::Data => match self.endpoints[i as usize].receiver.on_cell(&cell) {
                AckAction::None => {}
                AckAction::Ack(ack) => self.send_ack(sched, i, ack),
                AckAction::ArmDelayedAck => {
                    let t = self.cfg.tcp_config().delayed_ack_timeout;
                    sched.schedule_in(t, Ev::DelayedAck { conn: i });
                }
            },
            CellKind::BackwardRm | CellKind::VbrData => {
                debug_assert!(false, "unexpected {:?} at destination", cell.kind)
            }
        }
    }

    fn send_ack(&mut self, sched: &mut Scheduler<Ev>, i: u32, ack: u64) {
        let cell = Cell::ack(VcId(i), ack, sched.now());
        let link = self.endpoints[i as usize].dest_rev;
        self.ledger.injected += 1;
        self.send(sched, link, cell);
    }

    fn at_source(&mut self, sched: &mut Scheduler<Ev>, i: u32, cell: Cell) {
        self.ledger.delivered += 1;
        let now = sched.now();
        let e = &mut self.endpoints[i as usize];
        match cell.kind {
            CellKind::BackwardRm => {
                e.source.on_backward_rm(&cell);
                if self.trace_opts.acr {
                    self.traces.acr.push(AcrSample {
                        time: now,
                        vc: cell.vc,
                        acr: e.source.acr(),
                    });
                }
                self.reschedule_emission(sched, i);
            }
            CellKind::Data if cell.is_ack() => {
                let segs = e.sender.on_ack(now, cell.seg_id);
                if self.trace_opts.cwnd {
                    self.traces.cwnd.push(CwndSample {
                        time: now,
                        conn: i,
                        cwnd: e.sender.cwnd(),
                        snd_una: e.sender.snd_una(),
                        snd_nxt: e.sender.snd_nxt(),
                    });
                }
                self.queue_segments(sched, i, &segs);
                self.arm_rto(sched, i);
            }
            _ => debug_assert!(false, "unexpected {:?} at source", cell.kind),
        }
    }

    fn queue_segments(&mut self, sched: &mut Scheduler<Ev>, i: u32, segs: &[Segment]) {
        if segs.is_empty() {
            return;
        }
        let now = sched.now();
        let e = &mut self.endpoints[i as usize];
        let encap = e.sender.config().encap;
        for seg in segs {
            e.source.extend(segment_to_cells(seg, VcId(i), &encap, now));
        }
        self.reschedule_emission(sched, i);
    }

    /// Makes sure exactly one live emission event matches the source's pacing.
    fn reschedule_emission(&mut self, sched: &mut Scheduler<Ev>, i: u32) {
        let now = sched.now();
        let e = &mut self.endpoints[i as usize];
        let want = e.source.next_emission(now);
        if want == e.emit_at {
            return;
        }
        e.emit_gen = e.emit_gen.wrapping_add(1);
        e.emit_at = want;
        if let Some(at) = want {
            sched.schedule(
                at,
                Ev::SourceEmit {
                    src: i,
                    gen: e.emit_gen,
                },
            );
        }
    }

    fn on_source_emit(&mut self, sched: &mut Scheduler<Ev>, i: u32, gen: u32) {
        let now = sched.now();
        let e = &mut self.endpoints[i as usize];
        if gen != e.emit_gen {
            return;
        }
        e.emit_at = None;
        let Some(cell) = e.source.emit(now) else {
            return;
        };
        let link = e.access_fwd;
        self.ledger.injected += 1;
        self.send(sched, link, cell);
        self.reschedule_emission(sched, i);
    }

    fn arm_rto(&mut self, sched: &mut Scheduler<Ev>, i: u32) {
        let e = &mut self.endpoints[i as usize];
        if e.rto_pending {
            return;
        }
        if let Some(d) = e.sender.rto_deadline() {
            e.rto_pending = true;
            sched.schedule(d.max(sched.now()), Ev::Rto { conn: i });
        }
    }

    fn on_rto(&mut self, sched: &mut Scheduler<Ev>, i: u32) {
        let now = sched.now();
        let e = &mut self.endpoints[i as usize];
        e.rto_pending = false;
        if e.sender.on_timeout(now) {
            // go back N: whatever is still waiting to be paced out is resent anyway
            e.source.clear_backlog();
            let segs = e.sender.try_send(now);
            self.queue_segments(sched, i, &segs);
            self.reschedule_emission(sched, i);
        }
        self.arm_rto(sched, i);
    }
}
