//! ABR/UBR end-system behaviour.
//!
//! An ABR source paces its backlog at the allowed cell rate (ACR). Every
//! `nrm`-th cell it sends is a forward RM cell carrying the current ACR as
//! CCR; the RM cell counts against the paced rate. Backward RM cells set the
//! ACR directly to the stamped ER. A UBR source has no RM cells and sends at
//! the peak cell rate whenever it has something queued.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::cell::{Cell, CellKind, VcId};
use crate::error::ConfigError;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceClass {
    Abr,
    Ubr,
}

impl ServiceClass {
    pub fn name(self) -> &'static str {
        match self {
            ServiceClass::Abr => "abr",
            ServiceClass::Ubr => "ubr",
        }
    }
}

impl std::str::FromStr for ServiceClass {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "abr" => Ok(ServiceClass::Abr),
            "ubr" => Ok(ServiceClass::Ubr),
            _ => Err(ConfigError::invalid("service", s, "expected abr or ubr")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbrSourceConfig {
    pub service: ServiceClass,
    pub pcr: f64,
    pub icr: f64,
    pub nrm: u32,
    pub mcr_floor: f64,
}

impl AbrSourceConfig {
    /// Defaults: `nrm = 32`, `icr = pcr / 32`, floor 10 cells/s.
    pub fn new(service: ServiceClass, pcr: f64) -> Self {
        Self {
            service,
            pcr,
            icr: pcr / 32.0,
            nrm: 32,
            mcr_floor: 10.0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.pcr > 0.0) {
            return Err(ConfigError::invalid("pcr", self.pcr, "must be positive"));
        }
        if !(self.mcr_floor > 0.0 && self.mcr_floor <= self.pcr) {
            return Err(ConfigError::invalid(
                "mcr_floor",
                self.mcr_floor,
                "must be in (0, pcr]",
            ));
        }
        if !(self.icr >= self.mcr_floor && self.icr <= self.pcr) {
            return Err(ConfigError::invalid(
                "icr",
                self.icr,
                "must be in [mcr_floor, pcr]",
            ));
        }
        if self.nrm < 2 {
            return Err(ConfigError::invalid("nrm", self.nrm, "must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AbrSource {
    vc: VcId,
    cfg: AbrSourceConfig,
    acr: f64,
    cells_since_rm: u32,
    backlog: VecDeque<Cell>,
    last_emit: Option<SimTime>,
    next_allowed: SimTime,
    rm_sent: u64,
    data_sent: u64,
}

impl AbrSource {
    pub fn new(vc: VcId, cfg: AbrSourceConfig) -> Self {
        let acr = match cfg.service {
            ServiceClass::Abr => cfg.icr,
            ServiceClass::Ubr => cfg.pcr,
        };
        Self {
            vc,
            cfg,
            acr,
            // the first cell of a fresh source is an RM cell
            cells_since_rm: cfg.nrm - 1,
            backlog: VecDeque::new(),
            last_emit: None,
            next_allowed: SimTime::ZERO,
            rm_sent: 0,
            data_sent: 0,
        }
    }

    pub fn vc(&self) -> VcId {
        self.vc
    }

    pub fn config(&self) -> &AbrSourceConfig {
        &self.cfg
    }

    pub fn acr(&self) -> f64 {
        self.acr
    }

    pub fn backlog_len(&self) -> usize {
        self.backlog.len()
    }

    pub fn rm_sent(&self) -> u64 {
        self.rm_sent
    }

    pub fn data_sent(&self) -> u64 {
        self.data_sent
    }

    pub fn push(&mut self, cell: Cell) {
        self.backlog.push_back(cell);
    }

    pub fn extend(&mut self, cells: impl IntoIterator<Item = Cell>) {
        self.backlog.extend(cells);
    }

    /// Drops every queued cell; returns how many were discarded.
    pub fn clear_backlog(&mut self) -> usize {
        let n = self.backlog.len();
        self.backlog.clear();
        n
    }

    /// Earliest time the next cell may leave, or `None` with an empty backlog.
    pub fn next_emission(&self, now: SimTime) -> Option<SimTime> {
        if self.backlog.is_empty() {
            None
        } else {
            Some(now.max(self.next_allowed))
        }
    }

    /// Sends the next cell. The caller must respect [`Self::next_emission`].
    pub fn emit(&mut self, now: SimTime) -> Option<Cell> {
        if self.backlog.is_empty() {
            return None;
        }
        debug_assert!(now >= self.next_allowed);
        let cell =
            if self.cfg.service == ServiceClass::Abr && self.cells_since_rm + 1 >= self.cfg.nrm {
                self.cells_since_rm = 0;
                self.rm_sent += 1;
                Cell::forward_rm(self.vc, self.acr, self.cfg.pcr, now)
            } else {
                self.cells_since_rm += 1;
                self.data_sent += 1;
                self.backlog.pop_front().expect("backlog checked above")
            };
        self.last_emit = Some(now);
        self.next_allowed = now + SimTime::cell_interval(self.acr);
        Some(cell)
    }

    /// Applies a backward RM cell. Returns `true` if the pacing deadline moved.
    pub fn on_backward_rm(&mut self, cell: &Cell) -> bool {
        debug_assert_eq!(cell.kind, CellKind::BackwardRm);
        if self.cfg.service == ServiceClass::Ubr {
            return false;
        }
        self.acr = cell.er.min(self.cfg.pcr).max(self.cfg.mcr_floor);
        match self.last_emit {
            Some(last) => {
                let next = last + SimTime::cell_interval(self.acr);
                let moved = next != self.next_allowed;
                self.next_allowed = next;
                moved
            }
            None => false,
        }
    }
}

/// Turns a forward RM cell around at the destination.
pub fn dest_turnaround(cell: &Cell, pcr: f64, now: SimTime) -> Cell {
    debug_assert_eq!(cell.kind, CellKind::ForwardRm);
    Cell {
        kind: CellKind::BackwardRm,
        er: pcr,
        created_at: now,
        ..*cell
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PCR: f64 = 365_000.0;

    fn data(seq: u64) -> Cell {
        Cell::data(VcId(0), seq, 512, false, SimTime::ZERO)
    }

    fn brm(er: f64) -> Cell {
        dest_turnaround(
            &Cell::forward_rm(VcId(0), 1.0, PCR, SimTime::ZERO),
            er,
            SimTime::ZERO,
        )
    }

    fn drain(src: &mut AbrSource) -> Vec<(SimTime, Cell)> {
        let mut out = vec![];
        let mut now = SimTime::ZERO;
        while let Some(t) = src.next_emission(now) {
            now = t;
            out.push((now, src.emit(now).unwrap()));
        }
        out
    }

    #[test]
    fn pacing_gap_at_link_rate() {
        let mut cfg = AbrSourceConfig::new(ServiceClass::Abr, PCR);
        cfg.icr = PCR;
        let mut src = AbrSource::new(VcId(0), cfg);
        src.extend((0..4).map(data));
        let out = drain(&mut src);
        assert_eq!(out[1].0 - out[0].0, SimTime(2_739_726));
    }

    #[test]
    fn one_rm_cell_per_nrm_cells() {
        let mut src = AbrSource::new(VcId(0), AbrSourceConfig::new(ServiceClass::Abr, PCR));
        // 62 data cells plus 2 RM cells make 64 emissions
        src.extend((0..62).map(data));
        let out = drain(&mut src);
        assert_eq!(out.len(), 64);
        let rm_at: Vec<usize> = out
            .iter()
            .enumerate()
            .filter(|(_, (_, c))| c.kind == CellKind::ForwardRm)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(rm_at, [0, 32]);
        assert_eq!(out[0].1.ccr, PCR / 32.0);
    }

    #[test]
    fn empty_backlog_emits_nothing() {
        let mut src = AbrSource::new(VcId(0), AbrSourceConfig::new(ServiceClass::Abr, PCR));
        assert_eq!(src.next_emission(SimTime::ZERO), None);
        assert!(src.emit(SimTime::ZERO).is_none());
        src.push(data(0));
        assert_eq!(src.next_emission(SimTime(5)), Some(SimTime(5)));
    }

    #[test]
    fn backward_rm_sets_acr() {
        let mut src = AbrSource::new(VcId(0), AbrSourceConfig::new(ServiceClass::Abr, PCR));
        src.on_backward_rm(&brm(100_000.0));
        assert_eq!(src.acr(), 100_000.0);
        src.on_backward_rm(&brm(500_000.0));
        assert_eq!(src.acr(), PCR);
        src.on_backward_rm(&brm(0.001));
        assert_eq!(src.acr(), 10.0);
    }

    #[test]
    fn ubr_ignores_feedback_and_sends_no_rm() {
        let mut src = AbrSource::new(VcId(0), AbrSourceConfig::new(ServiceClass::Ubr, PCR));
        assert_eq!(src.acr(), PCR);
        src.on_backward_rm(&brm(1_000.0));
        assert_eq!(src.acr(), PCR);
        src.extend((0..100).map(data));
        let out = drain(&mut src);
        assert!(out.iter().all(|(_, c)| c.kind == CellKind::Data));
        assert!(out
            .windows(2)
            .all(|w| w[1].0 - w[0].0 == SimTime(2_739_726)));
    }

    #[test]
    fn rate_increase_pulls_next_emission_forward() {
        let mut src = AbrSource::new(VcId(0), AbrSourceConfig::new(ServiceClass::Abr, PCR));
        src.extend((0..3).map(data));
        src.emit(SimTime::ZERO);
        let slow = src.next_emission(SimTime::ZERO).unwrap();
        assert!(src.on_backward_rm(&brm(PCR)));
        let fast = src.next_emission(SimTime::ZERO).unwrap();
        assert!(fast < slow);
        assert_eq!(fast, SimTime(2_739_726));
    }

    #[test]
    fn turnaround_keeps_vc_and_ccr() {
        let f = Cell::forward_rm(VcId(3), 50_000.0, PCR, SimTime::ZERO);
        let b = dest_turnaround(&f, PCR, SimTime(9));
        assert_eq!(b.kind, CellKind::BackwardRm);
        assert_eq!(b.vc, VcId(3));
        assert_eq!(b.er, PCR);
        assert_eq!(b.ccr, 50_000.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = AbrSourceConfig::new(ServiceClass::Abr, PCR);
        assert!(cfg.validate().is_ok());
        cfg.icr = PCR * 2.0;
        assert!(cfg.validate().is_err());
        let mut cfg = AbrSourceConfig::new(ServiceClass::Abr, PCR);
        cfg.nrm = 1;
        assert!(cfg.validate().is_err());
    }
}
