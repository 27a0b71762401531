//! Scenario description, the flat `key = value` config format and presets.

use std::path::Path;

use serde::Serialize;

use crate::abr::{AbrSourceConfig, ServiceClass};
use crate::erica::{EricaConfig, EricaPlusParams, SwitchScheme};
use crate::error::ConfigError;
use crate::tcp::{Encapsulation, TcpConfig};
use crate::time::SimTime;
use crate::vbr::VbrConfig;

/// Full description of one "n sources + optional VBR" experiment.
///
/// Times are in milliseconds as written in config files. `scale` divides the
/// round-trip time, the feedback delay, the destination leg and the receiver
/// window together; link rate, ERICA averaging interval and VBR timing are
/// left alone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub n_sources: u32,
    pub service: ServiceClass,
    pub scheme: SwitchScheme,
    pub feedback_delay_ms: f64,
    pub rtt_ms: f64,
    pub vbr: bool,
    pub duration_rtts: f64,
    pub link_cell_rate: f64,
    /// Bottleneck buffer in cells; `None` is unbounded.
    pub buffer_capacity: Option<u64>,
    pub scale: f64,
    pub dest_leg_ms: f64,

    pub mss: u32,
    pub rcvwnd_bytes: u64,
    pub header_bytes: u32,
    pub trailer_bytes: u32,
    pub delayed_ack: bool,
    pub rto_rtts: f64,

    pub nrm: u32,
    pub icr_divisor: f64,
    pub mcr_floor: f64,

    pub target_utilization: f64,
    pub interval_ms: f64,
    pub interval_cells: u64,
    pub cbr_reserved: f64,
    pub clamp_er_to_capacity: bool,
    pub active_vc_decay: f64,
    pub erica_plus_t0_us: f64,
    pub erica_plus_b: f64,
    pub erica_plus_qdlf: f64,

    pub vbr_on_ms: f64,
    pub vbr_off_ms: f64,
    pub vbr_peak_fraction: f64,
    pub vbr_start_ms: f64,

    pub sample_window_ms: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_sources: 5,
            service: ServiceClass::Abr,
            scheme: SwitchScheme::Erica,
            feedback_delay_ms: 10.0,
            rtt_ms: 550.0,
            vbr: false,
            duration_rtts: 20.0,
            link_cell_rate: 365_000.0,
            buffer_capacity: None,
            scale: 1.0,
            dest_leg_ms: 0.005,
            mss: 512,
            rcvwnd_bytes: 34_000 << 8,
            header_bytes: 40,
            trailer_bytes: 8,
            delayed_ack: false,
            rto_rtts: 2.0,
            nrm: 32,
            icr_divisor: 32.0,
            mcr_floor: 10.0,
            target_utilization: 0.9,
            interval_ms: 1.0,
            interval_cells: 100,
            cbr_reserved: 0.0,
            clamp_er_to_capacity: true,
            active_vc_decay: 0.0,
            erica_plus_t0_us: 500.0,
            erica_plus_b: 1.05,
            erica_plus_qdlf: 0.5,
            vbr_on_ms: 1.0,
            vbr_off_ms: 1.0,
            vbr_peak_fraction: 0.8,
            vbr_start_ms: 2.0,
            sample_window_ms: 1.0,
        }
    }
}

/// Names of the built-in experiments.
pub const PRESETS: &[&str] = &[
    "table1a", "table1b", "table1c", "table1d", "table2a", "table2b", "table3a", "table3b",
    "table3c", "table3d", "ubr5",
];

/// One-way delays of the topology after scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathDelays {
    /// Source to first switch.
    pub access: SimTime,
    /// First switch to second switch (the satellite hop).
    pub satellite: SimTime,
    /// Second switch to destination.
    pub dest_leg: SimTime,
}

impl PathDelays {
    pub fn round_trip(&self) -> SimTime {
        let one_way = self.access + self.satellite + self.dest_leg;
        one_way + one_way
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::invalid(key, v, "expected on/off")),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.replace('_', "")
        .parse()
        .map_err(|_| ConfigError::invalid(key, v, "not a number"))
}

impl ScenarioConfig {
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let mut c = ScenarioConfig::default();
        let (n, fd, scheme, vbr) = match name {
            "table1a" => (5, 0.01, SwitchScheme::Erica, false),
            "table1b" => (15, 0.01, SwitchScheme::Erica, false),
            "table1c" => (5, 10.0, SwitchScheme::Erica, false),
            "table1d" => (15, 10.0, SwitchScheme::Erica, false),
            "table2a" => (15, 550.0, SwitchScheme::Erica, false),
            "table2b" => (15, 550.0, SwitchScheme::EricaPlus, false),
            "table3a" => (15, 0.01, SwitchScheme::Erica, true),
            "table3b" => (15, 10.0, SwitchScheme::Erica, true),
            "table3c" => (15, 0.01, SwitchScheme::EricaPlus, true),
            "table3d" => (15, 10.0, SwitchScheme::EricaPlus, true),
            "ubr5" => {
                c.service = ServiceClass::Ubr;
                (5, 10.0, SwitchScheme::Erica, false)
            }
            _ => return Err(ConfigError::UnknownPreset(name.to_string())),
        };
        c.n_sources = n;
        c.feedback_delay_ms = fd;
        c.scheme = scheme;
        c.vbr = vbr;
        Ok(c)
    }

    /// Parses `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = ScenarioConfig::default();
        c.apply(text)?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "n_sources" | "n" => self.n_sources = parse_num(key, v)?,
            "service" => self.service = v.parse()?,
            "scheme" => self.scheme = v.parse()?,
            "feedback_delay_ms" | "feedback_delay" => self.feedback_delay_ms = parse_num(key, v)?,
            "rtt_ms" | "rtt" => self.rtt_ms = parse_num(key, v)?,
            "vbr" => self.vbr = parse_bool(key, v)?,
            "duration_rtts" | "duration" => self.duration_rtts = parse_num(key, v)?,
            "link_cell_rate" => self.link_cell_rate = parse_num(key, v)?,
            "buffer_capacity" => {
                self.buffer_capacity = match v.to_ascii_lowercase().as_str() {
                    "unbounded" | "inf" | "none" => None,
                    _ => Some(parse_num(key, v)?),
                }
            }
            "scale" => self.scale = parse_num(key, v)?,
            "dest_leg_ms" => self.dest_leg_ms = parse_num(key, v)?,
            "mss" => self.mss = parse_num(key, v)?,
            "rcvwnd_bytes" | "rcvwnd" => self.rcvwnd_bytes = parse_num(key, v)?,
            "header_bytes" => self.header_bytes = parse_num(key, v)?,
            "trailer_bytes" => self.trailer_bytes = parse_num(key, v)?,
            "delayed_ack" => self.delayed_ack = parse_bool(key, v)?,
            "rto_rtts" => self.rto_rtts = parse_num(key, v)?,
            "nrm" => self.nrm = parse_num(key, v)?,
            "icr_divisor" => self.icr_divisor = parse_num(key, v)?,
            "mcr_floor" => self.mcr_floor = parse_num(key, v)?,
            "target_utilization" => self.target_utilization = parse_num(key, v)?,
            "interval_ms" => self.interval_ms = parse_num(key, v)?,
            "interval_cells" => self.interval_cells = parse_num(key, v)?,
            "cbr_reserved" => self.cbr_reserved = parse_num(key, v)?,
            "clamp_er_to_capacity" => self.clamp_er_to_capacity = parse_bool(key, v)?,
            "active_vc_decay" => self.active_vc_decay = parse_num(key, v)?,
            "erica_plus_t0_us" => self.erica_plus_t0_us = parse_num(key, v)?,
            "erica_plus_b" => self.erica_plus_b = parse_num(key, v)?,
            "erica_plus_qdlf" => self.erica_plus_qdlf = parse_num(key, v)?,
            "vbr_on_ms" => self.vbr_on_ms = parse_num(key, v)?,
            "vbr_off_ms" => self.vbr_off_ms = parse_num(key, v)?,
            "vbr_peak_fraction" => self.vbr_peak_fraction = parse_num(key, v)?,
            "vbr_start_ms" => self.vbr_start_ms = parse_num(key, v)?,
            "sample_window_ms" => self.sample_window_ms = parse_num(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    fn ms(v: f64) -> SimTime {
        SimTime::from_millis_f64(v)
    }

    pub fn rtt(&self) -> SimTime {
        Self::ms(self.rtt_ms / self.scale)
    }

    pub fn feedback_delay(&self) -> SimTime {
        Self::ms(self.feedback_delay_ms / self.scale)
    }

    pub fn duration(&self) -> SimTime {
        Self::ms(self.rtt_ms / self.scale * self.duration_rtts)
    }

    /// Round trip expressed in cell slots of the bottleneck.
    pub fn rtt_in_cells(&self) -> u64 {
        (self.rtt_ms / self.scale * self.link_cell_rate / 1000.0).round() as u64
    }

    pub fn rcvwnd(&self) -> u64 {
        (self.rcvwnd_bytes as f64 / self.scale).round() as u64
    }

    /// Splits the round trip into access, satellite and destination legs.
    ///
    /// The access leg is half the feedback delay. When the feedback delay
    /// leaves less than `dest_leg` for the rest of the half round trip, the
    /// destination leg shrinks to fit and the satellite hop is zero.
    pub fn path_delays(&self) -> Result<PathDelays, ConfigError> {
        let half_rtt = self.rtt_ms / self.scale / 2.0;
        let access = self.feedback_delay_ms / self.scale / 2.0;
        let rest = half_rtt - access;
        if rest < -1e-12 {
            return Err(ConfigError::invalid(
                "feedback_delay_ms",
                self.feedback_delay_ms,
                "exceeds the round-trip time; satellite delay would be negative",
            ));
        }
        let dest_leg = (self.dest_leg_ms / self.scale).min(rest.max(0.0));
        let satellite = (rest - dest_leg).max(0.0);
        Ok(PathDelays {
            access: Self::ms(access),
            satellite: Self::ms(satellite),
            dest_leg: Self::ms(dest_leg),
        })
    }

    pub fn tcp_config(&self) -> TcpConfig {
        TcpConfig {
            mss: self.mss,
            rcvwnd: self.rcvwnd(),
            encap: Encapsulation {
                header_bytes: self.header_bytes,
                trailer_bytes: self.trailer_bytes,
                ..Encapsulation::default()
            },
            rto: Self::ms(self.rtt_ms / self.scale * self.rto_rtts),
            delayed_ack: self.delayed_ack,
            delayed_ack_timeout: SimTime::from_millis(200),
        }
    }

    pub fn source_config(&self) -> AbrSourceConfig {
        let pcr = self.link_cell_rate;
        AbrSourceConfig {
            service: self.service,
            pcr,
            icr: pcr / self.icr_divisor,
            nrm: self.nrm,
            mcr_floor: self.mcr_floor,
        }
    }

    pub fn erica_config(&self) -> EricaConfig {
        EricaConfig {
            scheme: self.scheme,
            target_utilization: self.target_utilization,
            link_rate: self.link_cell_rate,
            interval_len_time: Self::ms(self.interval_ms),
            interval_len_cells: self.interval_cells,
            cbr_reserved: self.cbr_reserved,
            clamp_er_to_capacity: self.clamp_er_to_capacity,
            active_vc_decay: self.active_vc_decay,
            plus: EricaPlusParams {
                target_delay: SimTime::from_secs_f64(self.erica_plus_t0_us * 1e-6),
                b: self.erica_plus_b,
                qdlf: self.erica_plus_qdlf,
            },
            ..EricaConfig::new(self.scheme, self.link_cell_rate)
        }
    }

    pub fn vbr_config(&self) -> VbrConfig {
        VbrConfig {
            on_time: Self::ms(self.vbr_on_ms),
            off_time: Self::ms(self.vbr_off_ms),
            peak_rate: (self.vbr_peak_fraction * self.link_cell_rate).round(),
            start_at: Self::ms(self.vbr_start_ms),
        }
    }

    /// Receiver window of one connection in cells.
    pub fn window_cells(&self) -> u64 {
        self.tcp_config().window_cells()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=64).contains(&self.n_sources) {
            return Err(ConfigError::invalid(
                "n_sources",
                self.n_sources,
                "must be in 1..=64",
            ));
        }
        let positive = [
            ("rtt_ms", self.rtt_ms),
            ("duration_rtts", self.duration_rtts),
            ("link_cell_rate", self.link_cell_rate),
            ("scale", self.scale),
            ("rto_rtts", self.rto_rtts),
            ("icr_divisor", self.icr_divisor),
            ("interval_ms", self.interval_ms),
            ("sample_window_ms", self.sample_window_ms),
        ];
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::invalid(k, v, "must be positive"));
            }
        }
        let non_negative = [
            ("feedback_delay_ms", self.feedback_delay_ms),
            ("dest_leg_ms", self.dest_leg_ms),
            ("vbr_off_ms", self.vbr_off_ms),
            ("vbr_start_ms", self.vbr_start_ms),
        ];
        for (k, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::invalid(k, v, "must be >= 0"));
            }
        }
        if self.feedback_delay_ms > self.rtt_ms {
            return Err(ConfigError::invalid(
                "feedback_delay_ms",
                self.feedback_delay_ms,
                "must not exceed rtt_ms",
            ));
        }
        if self.buffer_capacity == Some(0) {
            return Err(ConfigError::invalid(
                "buffer_capacity",
                0,
                "must be positive or unbounded",
            ));
        }
        if !(self.vbr_peak_fraction > 0.0 && self.vbr_peak_fraction <= 1.0) {
            return Err(ConfigError::invalid(
                "vbr_peak_fraction",
                self.vbr_peak_fraction,
                "must be in (0, 1]",
            ));
        }
        self.path_delays()?;
        self.tcp_config().validate()?;
        self.source_config().validate()?;
        self.erica_config().validate()?;
        if self.vbr {
            let v = self.vbr_config();
            v.validate()?;
            if SimTime::cell_interval(v.peak_rate) > v.on_time {
                return Err(ConfigError::invalid(
                    "vbr_on_ms",
                    self.vbr_on_ms,
                    "shorter than one cell slot",
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rtt_in_cells() {
        let c = ScenarioConfig::default();
        assert_eq!(c.rtt_in_cells(), 200_750);
        let c = ScenarioConfig { scale: 10.0, ..c };
        assert_eq!(c.rtt_in_cells(), 20_075);
        assert_eq!(c.rcvwnd(), 870_400);
        assert_eq!(c.window_cells(), 20_400);
    }

    #[test]
    fn delay_split_for_10ms_feedback() {
        let c = ScenarioConfig::default();
        let d = c.path_delays().unwrap();
        assert_eq!(d.access, SimTime::from_millis(5));
        assert_eq!(d.satellite, SimTime::from_millis_f64(269.995));
        assert_eq!(d.dest_leg, SimTime::from_millis_f64(0.005));
        assert_eq!(d.round_trip(), SimTime::from_millis(550));
    }

    #[test]
    fn feedback_equal_to_rtt_leaves_no_satellite_hop() {
        let c = ScenarioConfig::preset("table2a").unwrap();
        let d = c.path_delays().unwrap();
        assert_eq!(d.satellite, SimTime::ZERO);
        assert_eq!(d.access, SimTime::from_millis(275));
        assert_eq!(d.round_trip(), SimTime::from_millis(550));
    }

    #[test]
    fn feedback_beyond_rtt_rejected() {
        let c = ScenarioConfig {
            feedback_delay_ms: 600.0,
            ..ScenarioConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(c.path_delays().is_err());
    }

    #[test]
    fn presets_resolve_and_validate() {
        for name in PRESETS {
            let c = ScenarioConfig::preset(name).unwrap();
            c.validate().unwrap();
        }
        assert!(matches!(
            ScenarioConfig::preset("table9"),
            Err(ConfigError::UnknownPreset(_))
        ));
        let u = ScenarioConfig::preset("ubr5").unwrap();
        assert_eq!((u.n_sources, u.service), (5, ServiceClass::Ubr));
        let t = ScenarioConfig::preset("table3d").unwrap();
        assert!(t.vbr && t.scheme == SwitchScheme::EricaPlus && t.n_sources == 15);
    }

    #[test]
    fn parse_key_values_with_comments() {
        let c = ScenarioConfig::parse(
            "# experiment\n n_sources = 15\nscheme = erica+  # queue control\n\nvbr=on\nbuffer_capacity = unbounded\nfeedback_delay_ms = 0.01\n",
        )
        .unwrap();
        assert_eq!(c.n_sources, 15);
        assert_eq!(c.scheme, SwitchScheme::EricaPlus);
        assert!(c.vbr);
        assert_eq!(c.buffer_capacity, None);
        assert_eq!(c.feedback_delay_ms, 0.01);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            ScenarioConfig::parse("bogus = 1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            ScenarioConfig::parse("n_sources 5"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(ScenarioConfig::parse("n_sources = five").is_err());
        assert!(ScenarioConfig::parse("vbr = maybe").is_err());
    }

    #[test]
    fn source_count_bounds() {
        let mut c = ScenarioConfig {
            n_sources: 0,
            ..ScenarioConfig::default()
        };
        assert!(c.validate().is_err());
        c.n_sources = 65;
        assert!(c.validate().is_err());
        c.n_sources = 64;
        assert!(c.validate().is_ok());
    }
}
