//! Run summaries, the boundedness rule and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{ConfigError, ReportError};
use crate::link::DepthSample;
use crate::scenario::config::ScenarioConfig;
use crate::scenario::network::{Simulation, TraceOptions, Traces};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Bounded,
    Unbounded,
}

/// Round trips the boundedness rule needs.
pub const MIN_VERDICT_RTTS: u64 = 10;

/// Classifies a queue trajectory as growing without bound or not.
///
/// `window_max[i]` is the largest depth in `[i*window, (i+1)*window)`. The
/// queue is UNBOUNDED when the maxima over each of the last five RTT-long
/// windows strictly increase and the overall maximum exceeds twice the
/// maximum seen up to the midpoint of the run. Returns `None` for runs
/// shorter than [`MIN_VERDICT_RTTS`] round trips.
pub fn boundedness_verdict(window_max: &[u64], window: SimTime, rtt: SimTime) -> Option<Verdict> {
    assert!(window > SimTime::ZERO && rtt > SimTime::ZERO);
    let end = window.0 * window_max.len() as u64;
    if end < rtt.0 * MIN_VERDICT_RTTS {
        return None;
    }
    let max_over = |lo: u64, hi: u64| {
        window_max
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let start = *i as u64 * window.0;
                start >= lo && start < hi
            })
            .map(|(_, &q)| q)
            .max()
            .unwrap_or(0)
    };
    let tail: Vec<u64> = (1..=5u64)
        .rev()
        .map(|k| max_over(end - k * rtt.0, end - (k - 1) * rtt.0))
        .collect();
    let growing = tail.windows(2).all(|w| w[1] > w[0]);
    let final_max = window_max.iter().copied().max().unwrap_or(0);
    let mid_max = max_over(0, end / 2);
    if growing && final_max > 2 * mid_max {
        Some(Verdict::Unbounded)
    } else {
        Some(Verdict::Bounded)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub label: String,
    pub config: ScenarioConfig,
    pub simulated_ms: f64,
    pub rtt_in_cells: u64,
    pub max_abr_queue_cells: u64,
    pub max_total_queue_cells: u64,
    pub max_queue_rtt_fraction: f64,
    pub window_cells_per_conn: u64,
    pub window_sum_cells: u64,
    pub per_conn_goodput: Vec<f64>,
    pub bottleneck_utilization: f64,
    pub tail_abr_utilization: f64,
    pub drops: u64,
    pub timeouts: u64,
    pub retransmitted_segments: u64,
    pub bounded_verdict: Option<Verdict>,
    pub events: u64,
    #[serde(skip)]
    pub queue_series: Vec<DepthSample>,
    #[serde(skip)]
    pub sample_window: SimTime,
    #[serde(skip)]
    pub traces: Traces,
}

impl RunReport {
    pub fn from_simulation(label: &str, sim: &Simulation) -> Self {
        let cfg = sim.config().clone();
        let end = sim.now();
        let secs = end.as_secs_f64();
        let rate = cfg.link_cell_rate;
        let bottleneck = sim.bottleneck();
        let series = bottleneck
            .port
            .series()
            .expect("bottleneck keeps a depth series");
        let sample_window = series.window_len();
        let queue_series = series.dense(end);
        let window_max: Vec<u64> = queue_series.iter().map(|s| s.max_abr).collect();
        let rtt_in_cells = cfg.rtt_in_cells();
        let max_abr = bottleneck.port.max_abr_depth();
        let tail_abr_utilization = match sim.tail_mark() {
            Some((t, count)) if end > t => {
                (sim.bottleneck_abr_cells() - count) as f64 / ((end - t).as_secs_f64() * rate)
            }
            _ => 0.0,
        };
        let window_cells = cfg.window_cells();
        RunReport {
            label: label.to_string(),
            simulated_ms: end.as_millis_f64(),
            rtt_in_cells,
            max_abr_queue_cells: max_abr,
            max_total_queue_cells: bottleneck.port.max_total_depth(),
            max_queue_rtt_fraction: max_abr as f64 / rtt_in_cells as f64,
            window_cells_per_conn: window_cells,
            window_sum_cells: window_cells * cfg.n_sources as u64,
            per_conn_goodput: sim
                .receivers()
                .map(|r| {
                    if secs > 0.0 {
                        r.delivered_bytes() as f64 / secs
                    } else {
                        0.0
                    }
                })
                .collect(),
            bottleneck_utilization: if secs > 0.0 {
                bottleneck.transmitted() as f64 / (secs * rate)
            } else {
                0.0
            },
            tail_abr_utilization,
            drops: sim.drops(),
            timeouts: sim.senders().map(|s| s.timeouts()).sum(),
            retransmitted_segments: sim.senders().map(|s| s.retransmitted_segments()).sum(),
            bounded_verdict: boundedness_verdict(&window_max, sample_window, cfg.rtt()),
            events: sim.events_dispatched(),
            queue_series,
            sample_window,
            traces: sim.traces().clone(),
            config: cfg,
        }
    }

    /// Flat `key: value` summary.
    pub fn summary_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let verdict = match self.bounded_verdict {
            Some(Verdict::Bounded) => "BOUNDED",
            Some(Verdict::Unbounded) => "UNBOUNDED",
            None => "n/a",
        };
        let goodput: Vec<String> = self
            .per_conn_goodput
            .iter()
            .map(|g| format!("{g:.1}"))
            .collect();
        let rows: [(&str, String); 22] = [
            ("label", self.label.clone()),
            ("n_sources", c.n_sources.to_string()),
            ("service", c.service.name().to_string()),
            ("scheme", c.scheme.name().to_string()),
            ("feedback_delay_ms", c.feedback_delay_ms.to_string()),
            ("rtt_ms", c.rtt_ms.to_string()),
            ("vbr", if c.vbr { "on" } else { "off" }.to_string()),
            ("scale", c.scale.to_string()),
            ("duration_rtts", c.duration_rtts.to_string()),
            ("simulated_ms", format!("{:.3}", self.simulated_ms)),
            ("rtt_in_cells", self.rtt_in_cells.to_string()),
            ("max_abr_queue_cells", self.max_abr_queue_cells.to_string()),
            (
                "max_total_queue_cells",
                self.max_total_queue_cells.to_string(),
            ),
            (
                "max_queue_rtt_fraction",
                format!("{:.6}", self.max_queue_rtt_fraction),
            ),
            ("window_sum_cells", self.window_sum_cells.to_string()),
            (
                "bottleneck_utilization",
                format!("{:.6}", self.bottleneck_utilization),
            ),
            (
                "tail_abr_utilization",
                format!("{:.6}", self.tail_abr_utilization),
            ),
            ("per_conn_goodput_bytes_per_s", goodput.join(",")),
            ("drops", self.drops.to_string()),
            ("timeouts", self.timeouts.to_string()),
            ("bounded_verdict", verdict.to_string()),
            ("events", self.events.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k}: {v}");
        }
        s
    }

    pub fn summary_json(&self) -> Result<String, ReportError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// `time_ms,abr_queue_cells,total_queue_cells`, one row per sample window.
    pub fn queue_csv(&self) -> String {
        let mut s = String::from("time_ms,abr_queue_cells,total_queue_cells\n");
        for q in &self.queue_series {
            let t = SimTime(q.window * self.sample_window.0).as_millis_f64();
            let _ = writeln!(s, "{t:.3},{},{}", q.max_abr, q.max_total);
        }
        s
    }

    fn acr_csv(&self) -> String {
        let mut s = String::from("time_ms,vc,acr_cells_per_s\n");
        for a in &self.traces.acr {
            let _ = writeln!(s, "{:.6},{},{:.3}", a.time.as_millis_f64(), a.vc.0, a.acr);
        }
        s
    }

    fn cwnd_csv(&self) -> String {
        let mut s = String::from("time_ms,conn,cwnd,snd_una,snd_nxt\n");
        for c in &self.traces.cwnd {
            let _ = writeln!(
                s,
                "{:.6},{},{},{},{}",
                c.time.as_millis_f64(),
                c.conn,
                c.cwnd,
                c.snd_una,
                c.snd_nxt
            );
        }
        s
    }

    fn erica_csv(&self) -> String {
        let mut s = String::from(
            "interval_end_time_ms,abr_capacity,input_rate,overload,n_active,fair_share\n",
        );
        for e in &self.traces.erica {
            let _ = writeln!(
                s,
                "{:.6},{:.3},{:.3},{:.6},{},{:.3}",
                e.end_time.as_millis_f64(),
                e.abr_capacity,
                e.input_rate,
                e.overload,
                e.n_active,
                e.fair_share
            );
        }
        s
    }

    /// Writes `summary.txt`, `summary.json`, `queue.csv` and any enabled
    /// traces into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path, traces: TraceOptions) -> Result<Vec<String>, ReportError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| ReportError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut files = vec![
            ("summary.txt", self.summary_text()),
            ("summary.json", self.summary_json()?),
            ("queue.csv", self.queue_csv()),
        ];
        if traces.acr {
            files.push(("acr.csv", self.acr_csv()));
        }
        if traces.cwnd {
            files.push(("cwnd.csv", self.cwnd_csv()));
        }
        if traces.erica {
            files.push(("erica.csv", self.erica_csv()));
        }
        let mut written = vec![];
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(io(&path))?;
            written.push(name.to_string());
        }
        Ok(written)
    }
}

/// Builds, runs and summarizes one scenario.
pub fn run_scenario(
    label: &str,
    cfg: &ScenarioConfig,
    traces: TraceOptions,
) -> Result<RunReport, ConfigError> {
    let mut sim = Simulation::new(cfg, traces)?;
    sim.run();
    Ok(RunReport::from_simulation(label, &sim))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MS: SimTime = SimTime::from_millis(1);
    const RTT: SimTime = SimTime::from_millis(10);

    #[test]
    fn monotone_ramp_is_unbounded() {
        let ramp: Vec<u64> = (0..200).collect();
        assert_eq!(
            boundedness_verdict(&ramp, MS, RTT),
            Some(Verdict::Unbounded)
        );
    }

    #[test]
    fn oscillation_under_ceiling_is_bounded() {
        let osc: Vec<u64> = (0..200).map(|i| 100 + (i % 7) * 10).collect();
        assert_eq!(boundedness_verdict(&osc, MS, RTT), Some(Verdict::Bounded));
    }

    #[test]
    fn slow_growth_without_doubling_is_bounded() {
        // strictly increasing tail but only +10% over the second half
        let q: Vec<u64> = (0..200).map(|i| 1000 + i).collect();
        assert_eq!(boundedness_verdict(&q, MS, RTT), Some(Verdict::Bounded));
    }

    #[test]
    fn early_spike_then_plateau_is_bounded() {
        let mut q = vec![5000u64; 20];
        q.extend(std::iter::repeat_n(100, 180));
        assert_eq!(boundedness_verdict(&q, MS, RTT), Some(Verdict::Bounded));
    }

    #[test]
    fn short_runs_have_no_verdict() {
        let q: Vec<u64> = (0..99).collect();
        assert_eq!(boundedness_verdict(&q, MS, RTT), None);
    }
}
