use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser};
use satsim_core::scenario::{run_scenario, ScenarioConfig, TraceOptions, PRESETS};
use satsim_core::ConfigError;

/// Run one TCP over ABR/UBR satellite scenario and write its report.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
#[command(group(ArgGroup::new("source").required(true).args(["preset", "config"])))]
struct Args {
    /// Built-in experiment (table1a..d, table2a..b, table3a..d, ubr5).
    #[arg(long)]
    preset: Option<String>,
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of TCP sources.
    #[arg(long = "n")]
    n: Option<u32>,
    /// Feedback delay in milliseconds (before scaling).
    #[arg(long)]
    feedback_delay: Option<f64>,
    /// erica | erica+
    #[arg(long)]
    scheme: Option<String>,
    /// abr | ubr
    #[arg(long)]
    service: Option<String>,
    /// on | off
    #[arg(long)]
    vbr: Option<String>,
    /// Simulated length in round trips.
    #[arg(long)]
    duration: Option<f64>,
    /// Divide RTT, feedback delay and receiver window by this factor.
    #[arg(long)]
    scale: Option<f64>,
    /// Any other config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Extra traces: queue,acr,cwnd,erica (queue is always written).
    #[arg(long, value_delimiter = ',')]
    trace: Vec<String>,
}

fn build_config(args: &Args) -> Result<(String, ScenarioConfig, TraceOptions), ConfigError> {
    let (label, mut cfg) = match (&args.preset, &args.config) {
        (Some(p), _) => (p.clone(), ScenarioConfig::preset(p)?),
        (None, Some(path)) => (
            path.file_stem()
                .map_or("custom".into(), |s| s.to_string_lossy().into_owned()),
            ScenarioConfig::from_file(path)?,
        ),
        (None, None) => unreachable!("clap requires one of --preset/--config"),
    };
    let overrides = [
        ("n_sources", args.n.map(|v| v.to_string())),
        (
            "feedback_delay_ms",
            args.feedback_delay.map(|v| v.to_string()),
        ),
        ("scheme", args.scheme.clone()),
        ("service", args.service.clone()),
        ("vbr", args.vbr.clone()),
        ("duration_rtts", args.duration.map(|v| v.to_string())),
        ("scale", args.scale.map(|v| v.to_string())),
    ];
    for (k, v) in overrides {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: kv.clone(),
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;

    let mut traces = TraceOptions::default();
    for t in &args.trace {
        match t.trim() {
            "queue" | "" => {}
            "acr" => traces.acr = true,
            "cwnd" => traces.cwnd = true,
            "erica" => traces.erica = true,
            other => {
                return Err(ConfigError::invalid(
                    "trace",
                    other,
                    "expected queue, acr, cwnd or erica",
                ))
            }
        }
    }
    Ok((label, cfg, traces))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let (label, cfg, traces) = match build_config(&args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("config error: {e}");
            if matches!(e, ConfigError::UnknownPreset(_)) {
                eprintln!("known presets: {}", PRESETS.join(", "));
            }
            return ExitCode::from(1);
        }
    };
    let report = match run_scenario(&label, &cfg, traces) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = report.write_to(&args.out, traces) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    print!("{}", report.summary_text());
    ExitCode::SUCCESS
}
