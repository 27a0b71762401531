//! Deterministic ON-OFF VBR background source.
//!
//! Cycles start at `start_at + k * (on + off)`. During ON, cell `i` of the
//! period leaves at `i / peak_rate` after the period start, and only if the
//! whole cell slot fits before the period ends.

use crate::error::ConfigError;
use crate::time::{SimTime, PS_PER_SEC};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VbrConfig {
    pub on_time: SimTime,
    pub off_time: SimTime,
    /// Peak rate in cells/s.
    pub peak_rate: f64,
    pub start_at: SimTime,
}

impl VbrConfig {
    /// 1 ms ON, 1 ms OFF, starting at 2 ms, peak 80% of `link_rate`.
    pub fn new(link_rate: f64) -> Self {
        Self {
            on_time: SimTime::from_millis(1),
            off_time: SimTime::from_millis(1),
            peak_rate: 0.8 * link_rate,
            start_at: SimTime::from_millis(2),
        }
    }

    pub fn duty_cycle(&self) -> f64 {
        self.on_time.0 as f64 / (self.on_time.0 + self.off_time.0) as f64
    }

    pub fn mean_rate(&self) -> f64 {
        self.duty_cycle() * self.peak_rate
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.on_time == SimTime::ZERO {
            return Err(ConfigError::invalid("vbr_on_ms", "0", "must be positive"));
        }
        if !(self.peak_rate > 0.0) || self.peak_rate.fract() != 0.0 {
            return Err(ConfigError::invalid(
                "vbr_peak_rate",
                self.peak_rate,
                "must be a positive whole number of cells/s",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VbrPhase {
    Idle,
    On,
    Off,
}

#[derive(Debug, Clone)]
pub struct VbrSource {
    cfg: VbrConfig,
    rate: u128,
    period: SimTime,
    cycle: u64,
    index: u64,
    emitted: u64,
}

impl VbrSource {
    pub fn new(cfg: VbrConfig) -> Self {
        Self {
            rate: cfg.peak_rate as u128,
            period: cfg.on_time + cfg.off_time,
            cfg,
            cycle: 0,
            index: 0,
            emitted: 0,
        }
    }

    pub fn config(&self) -> &VbrConfig {
        &self.cfg
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    pub fn phase_at(&self, t: SimTime) -> VbrPhase {
        if t < self.cfg.start_at {
            return VbrPhase::Idle;
        }
        let into = (t - self.cfg.start_at).0 % self.period.0;
        if into < self.cfg.on_time.0 {
            VbrPhase::On
        } else {
            VbrPhase::Off
        }
    }

    /// Offset of cell `i` from the start of an ON period.
    fn offset(&self, i: u64) -> u64 {
        (i as u128 * PS_PER_SEC as u128 / self.rate) as u64
    }

    fn fits(&self, i: u64) -> bool {
        self.offset(i + 1) <= self.cfg.on_time.0
    }

    /// Cells emitted in each full ON period.
    pub fn cells_per_on_period(&self) -> u64 {
        (self.cfg.on_time.0 as u128 * self.rate / PS_PER_SEC as u128) as u64
    }

    /// Time of the next cell emission.
    pub fn next_emission(&self) -> SimTime {
        let cycle_start = self.cfg.start_at + SimTime(self.period.0 * self.cycle);
        cycle_start + SimTime(self.offset(self.index))
    }

    /// Records an emission at the current [`Self::next_emission`] time and
    /// advances to the following slot.
    pub fn advance(&mut self) {
        self.emitted += 1;
        self.index += 1;
        if !self.fits(self.index) {
            self.cycle += 1;
            self.index = 0;
        }
    }

    /// Emission times in `[from, to)`, without changing state.
    pub fn emissions_between(&self, from: SimTime, to: SimTime) -> Vec<SimTime> {
        let mut probe = self.clone();
        let mut out = vec![];
        loop {
            let t = probe.next_emission();
            if t >= to {
                break;
            }
            if t >= from {
                out.push(t);
            }
            probe.advance();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src() -> VbrSource {
        VbrSource::new(VbrConfig::new(365_000.0))
    }

    #[test]
    fn default_peak_and_mean() {
        let c = VbrConfig::new(365_000.0);
        assert_eq!(c.peak_rate, 292_000.0);
        assert_eq!(c.duty_cycle(), 0.5);
        // mean 146,000 cells/s = 40% of the link
        assert!((c.mean_rate() / 365_000.0 - 0.4).abs() < 1e-12);
        // 124.41 Mbps peak x 0.5 duty = 62.2 Mbps mean
        assert!((0.5 * 124.41f64 - 62.2).abs() < 0.01);
    }

    #[test]
    fn silent_before_start() {
        let s = src();
        assert!(s
            .emissions_between(SimTime::ZERO, SimTime::from_millis(2))
            .is_empty());
        assert_eq!(s.next_emission(), SimTime::from_millis(2));
        assert_eq!(s.phase_at(SimTime::from_millis(1)), VbrPhase::Idle);
    }

    #[test]
    fn one_on_period_holds_292_cells() {
        let s = src();
        assert_eq!(s.cells_per_on_period(), 292);
        let on = s.emissions_between(SimTime::from_millis(2), SimTime::from_millis(3));
        assert_eq!(on.len(), 292);
        let off = s.emissions_between(SimTime::from_millis(3), SimTime::from_millis(4));
        assert!(off.is_empty());
        assert!(on.iter().all(|&t| s.phase_at(t) == VbrPhase::On));
    }

    #[test]
    fn long_run_rate_matches_duty_cycle() {
        let s = src();
        let n = s
            .emissions_between(SimTime::ZERO, SimTime::from_millis(1002))
            .len();
        // 500 full cycles after the 2 ms start
        assert_eq!(n, 500 * 292);
    }

    #[test]
    fn spacing_is_one_peak_slot() {
        let s = src();
        let on = s.emissions_between(SimTime::ZERO, SimTime::from_millis(3));
        for w in on.windows(2) {
            let gap = (w[1] - w[0]).0;
            assert!((3_424_657..=3_424_658).contains(&gap), "gap {gap}");
        }
    }
}
