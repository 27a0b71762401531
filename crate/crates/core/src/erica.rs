//! ERICA and ERICA+ explicit-rate allocation for one switch output port.
//!
//! The port measures its input over averaging intervals. An interval closes
//! after a fixed time or after a fixed number of ABR input cells, whichever
//! comes first. At the close it computes the ABR capacity, the overload
//! factor and the fair share; backward RM cells passing the switch are then
//! stamped with `min(ER, max(fair share, CCR / overload))`.
//!
//! ERICA+ replaces the fixed target utilization with a factor that shrinks
//! as the queueing delay at the port grows past a target delay.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::cell::{Cell, CellKind, VcId};
use crate::error::ConfigError;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwitchScheme {
    #[serde(rename = "erica")]
    Erica,
    #[serde(rename = "erica+")]
    EricaPlus,
}

impl SwitchScheme {
    pub fn name(self) -> &'static str {
        match self {
            SwitchScheme::Erica => "erica",
            SwitchScheme::EricaPlus => "erica+",
        }
    }
}

impl std::str::FromStr for SwitchScheme {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "erica" => Ok(SwitchScheme::Erica),
            "erica+" | "erica_plus" | "ericaplus" => Ok(SwitchScheme::EricaPlus),
            _ => Err(ConfigError::invalid(
                "scheme",
                s,
                "expected erica or erica+",
            )),
        }
    }
}

/// Queue-control parameters for ERICA+.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EricaPlusParams {
    /// Target queueing delay.
    pub target_delay: SimTime,
    /// Hyperbola shape parameter, `> 1`.
    pub b: f64,
    /// Lower bound on the capacity factor (queue drain limit).
    pub qdlf: f64,
}

impl Default for EricaPlusParams {
    fn default() -> Self {
        Self {
            target_delay: SimTime::from_micros(500),
            b: 1.05,
            qdlf: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EricaConfig {
    pub scheme: SwitchScheme,
    pub target_utilization: f64,
    /// Output link rate in cells/s.
    pub link_rate: f64,
    pub interval_len_time: SimTime,
    pub interval_len_cells: u64,
    /// Constant CBR reservation in cells/s.
    pub cbr_reserved: f64,
    pub overload_floor: f64,
    pub capacity_floor: f64,
    /// Never hand a VC more than the whole ABR capacity.
    pub clamp_er_to_capacity: bool,
    /// Per-interval decay of a VC's activity level once it goes quiet.
    /// Zero counts only the VCs seen in the interval just closed.
    pub active_vc_decay: f64,
    pub plus: EricaPlusParams,
}

impl EricaConfig {
    pub fn new(scheme: SwitchScheme, link_rate: f64) -> Self {
        Self {
            scheme,
            target_utilization: 0.9,
            link_rate,
            interval_len_time: SimTime::from_millis(1),
            interval_len_cells: 100,
            cbr_reserved: 0.0,
            overload_floor: 0.05,
            capacity_floor: 10.0,
            clamp_er_to_capacity: true,
            active_vc_decay: 0.0,
            plus: EricaPlusParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let u = self.target_utilization;
        if !(u > 0.0 && u <= 1.0) {
            return Err(ConfigError::invalid(
                "target_utilization",
                u,
                "must be in (0, 1]",
            ));
        }
        if !(self.link_rate > 0.0) {
            return Err(ConfigError::invalid(
                "link_rate",
                self.link_rate,
                "must be positive",
            ));
        }
        if self.interval_len_time == SimTime::ZERO || self.interval_len_cells == 0 {
            return Err(ConfigError::invalid(
                "interval",
                format!(
                    "({}, {} cells)",
                    self.interval_len_time, self.interval_len_cells
                ),
                "both limits must be positive",
            ));
        }
        if !(self.cbr_reserved >= 0.0) {
            return Err(ConfigError::invalid(
                "cbr_reserved",
                self.cbr_reserved,
                "must be >= 0",
            ));
        }
        if !(self.overload_floor > 0.0) || !(self.capacity_floor > 0.0) {
            return Err(ConfigError::invalid(
                "floors",
                format!("{}/{}", self.overload_floor, self.capacity_floor),
                "must be positive",
            ));
        }
        if !(self.active_vc_decay >= 0.0 && self.active_vc_decay < 1.0) {
            return Err(ConfigError::invalid(
                "active_vc_decay",
                self.active_vc_decay,
                "must be in [0, 1)",
            ));
        }
        let p = &self.plus;
        if !(p.b > 1.0) {
            return Err(ConfigError::invalid("erica_plus_b", p.b, "must be > 1"));
        }
        if !(p.qdlf > 0.0 && p.qdlf < 1.0) {
            return Err(ConfigError::invalid(
                "erica_plus_qdlf",
                p.qdlf,
                "must be in (0, 1)",
            ));
        }
        if p.target_delay == SimTime::ZERO {
            return Err(ConfigError::invalid(
                "erica_plus_t0",
                "0",
                "must be positive",
            ));
        }
        Ok(())
    }
}

/// What one interval measured and decided; one row of the allocator trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalSummary {
    pub end_time: SimTime,
    pub elapsed: SimTime,
    pub abr_capacity: f64,
    pub input_rate: f64,
    pub vbr_rate: f64,
    pub overload: f64,
    pub n_active: usize,
    pub fair_share: f64,
}

#[derive(Debug, Clone)]
pub struct EricaPort {
    cfg: EricaConfig,
    interval_start: SimTime,
    abr_input_count: u64,
    vbr_cbr_count: u64,
    active_vcs: BTreeSet<VcId>,
    activity: BTreeMap<VcId, f64>,
    ccr_table: HashMap<VcId, f64>,
    overload: f64,
    fair_share: f64,
    abr_capacity: f64,
    intervals: u64,
}

impl EricaPort {
    pub fn new(cfg: EricaConfig) -> Self {
        let abr_capacity = cfg.target_utilization * cfg.link_rate;
        Self {
            cfg,
            interval_start: SimTime::ZERO,
            abr_input_count: 0,
            vbr_cbr_count: 0,
            active_vcs: BTreeSet::new(),
            activity: BTreeMap::new(),
            ccr_table: HashMap::new(),
            overload: 1.0,
            fair_share: abr_capacity,
            abr_capacity,
            intervals: 0,
        }
    }

    pub fn config(&self) -> &EricaConfig {
        &self.cfg
    }

    pub fn overload(&self) -> f64 {
        self.overload
    }

    pub fn fair_share(&self) -> f64 {
        self.fair_share
    }

    pub fn abr_capacity(&self) -> f64 {
        self.abr_capacity
    }

    pub fn intervals_completed(&self) -> u64 {
        self.intervals
    }

    pub fn interval_start(&self) -> SimTime {
        self.interval_start
    }

    pub fn abr_input_count(&self) -> u64 {
        self.abr_input_count
    }

    pub fn vbr_cbr_count(&self) -> u64 {
        self.vbr_cbr_count
    }

    pub fn active_vc_count(&self) -> usize {
        self.active_vcs.len()
    }

    pub fn ccr(&self, vc: VcId) -> Option<f64> {
        self.ccr_table.get(&vc).copied()
    }

    /// `Target Utilization x Link Rate`.
    pub fn target_rate(&self) -> f64 {
        self.cfg.target_utilization * self.cfg.link_rate
    }

    /// ERICA+ capacity factor for an ABR queue of `queue` cells when the
    /// capacity left after VBR and CBR is `available` cells/s.
    pub fn queue_control_factor(&self, available: f64, queue: u64) -> f64 {
        let p = &self.cfg.plus;
        let q0 = p.target_delay.as_secs_f64() * available;
        if q0 <= 0.0 {
            return p.qdlf;
        }
        let f = p.b * q0 / ((p.b - 1.0) * q0 + queue as f64);
        f.clamp(p.qdlf, 1.0)
    }

    /// ERICA+ ABR capacity: the queue-control factor times the capacity left
    /// after the measured VBR rate and the CBR reservation.
    pub fn queue_control_capacity(&self, vbr_rate: f64, queue: u64) -> f64 {
        let available = (self.cfg.link_rate - vbr_rate - self.cfg.cbr_reserved).max(0.0);
        self.queue_control_factor(available, queue) * available
    }

    /// Accounts one cell entering the port in the forward direction.
    /// Returns `true` once the interval has collected its cell quota.
    pub fn observe_forward_cell(&mut self, cell: &Cell) -> bool {
        match cell.kind {
            CellKind::VbrData => self.vbr_cbr_count += 1,
            CellKind::Data | CellKind::ForwardRm => {
                self.abr_input_count += 1;
                self.active_vcs.insert(cell.vc);
                if cell.kind == CellKind::ForwardRm {
                    self.ccr_table.insert(cell.vc, cell.ccr);
                }
            }
            CellKind::BackwardRm => {}
        }
        self.abr_input_count >= self.cfg.interval_len_cells
    }

    /// Whether the time limit of the current interval has passed.
    pub fn interval_expired(&self, now: SimTime) -> bool {
        now >= self.interval_start + self.cfg.interval_len_time
    }

    /// Closes the current interval at `now`. `abr_queue` is the ABR queue
    /// depth at the port, used only by ERICA+.
    pub fn end_interval(&mut self, now: SimTime, abr_queue: u64) -> IntervalSummary {
        let elapsed = now.saturating_sub(self.interval_start);
        let secs = elapsed.as_secs_f64();
        let (input_rate, vbr_rate) = if secs > 0.0 {
            (
                self.abr_input_count as f64 / secs,
                self.vbr_cbr_count as f64 / secs,
            )
        } else {
            (0.0, 0.0)
        };
        let capacity = match self.cfg.scheme {
            SwitchScheme::Erica => self.target_rate() - vbr_rate - self.cfg.cbr_reserved,
            SwitchScheme::EricaPlus => self.queue_control_capacity(vbr_rate, abr_queue),
        };
        self.abr_capacity = capacity.max(self.cfg.capacity_floor);
        self.overload = (input_rate / self.abr_capacity).max(self.cfg.overload_floor);
        let n_active = self.active_vcs.len();
        let n_effective = self.effective_active_count();
        self.fair_share = self.abr_capacity / n_effective.max(1.0);
        self.intervals += 1;

        self.interval_start = now;
        self.abr_input_count = 0;
        self.vbr_cbr_count = 0;
        self.active_vcs.clear();

        IntervalSummary {
            end_time: now,
            elapsed,
            abr_capacity: self.abr_capacity,
            input_rate,
            vbr_rate,
            overload: self.overload,
            n_active,
            fair_share: self.fair_share,
        }
    }

    /// Number of active VCs used for the fair share. Without decay this is
    /// the count seen in the closing interval; with decay every VC seen now
    /// counts 1 and a quiet VC's weight shrinks by the decay factor per
    /// interval.
    fn effective_active_count(&mut self) -> f64 {
        let decay = self.cfg.active_vc_decay;
        if decay == 0.0 {
            return self.active_vcs.len() as f64;
        }
        for level in self.activity.values_mut() {
            *level *= decay;
        }
        for vc in &self.active_vcs {
            self.activity.insert(*vc, 1.0);
        }
        self.activity.retain(|_, level| *level >= 1e-3);
        self.activity.values().sum()
    }

    /// The explicit rate this port currently allows `vc`, or `None` before
    /// the first interval has closed. Unknown VCs count as CCR 0.
    pub fn er_for_vc(&self, vc: VcId) -> Option<f64> {
        if self.intervals == 0 {
            return None;
        }
        let ccr = self.ccr_table.get(&vc).copied().unwrap_or(0.0);
        let vc_share = ccr / self.overload;
        let mut er = self.fair_share.max(vc_share);
        if self.cfg.clamp_er_to_capacity {
            er = er.min(self.abr_capacity);
        }
        Some(er)
    }

    /// Lowers the ER field of a backward RM cell to this port's allocation.
    pub fn stamp_backward_rm(&self, cell: &mut Cell) {
        debug_assert_eq!(cell.kind, CellKind::BackwardRm);
        if let Some(er) = self.er_for_vc(cell.vc) {
            cell.er = cell.er.min(er);
        }
    }
}
