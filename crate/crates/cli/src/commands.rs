use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use isctrack_core::config::dump_config;
use isctrack_core::simkit::{compute_metrics, run_trials, write_metrics_csv, write_trace_csv};
use isctrack_core::verify::{run_checks, Suite, VerifyOptions};
use isctrack_core::{run_episode, ControllerKind, Error, ScenarioConfig, TrialMetrics};
use serde::Serialize;

use crate::Failure;

pub fn prepare_dir(out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

/// Writes the resolved configuration next to the outputs so a run can be repeated.
pub fn write_config(cfg: &ScenarioConfig, out: &Path) -> Result<(), Failure> {
    let path = out.join("config.toml");
    fs::write(&path, dump_config(cfg)?).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

pub fn simulate(cfg: &ScenarioConfig, out: &Path, controller: ControllerKind, seed: u64) -> Result<(), Failure> {
    let sc = cfg.resolve()?;
    let trace = run_episode(&sc, controller, seed)?;
    prepare_dir(out)?;
    let path = out.join(format!("trace_{controller}_seed{seed}.csv"));
    write_trace_csv(&trace, create(&path)?)?;
    write_config(cfg, out)?;
    if let Some(reason) = &trace.aborted {
        eprintln!("episode stopped after {} slots: {reason}", trace.records.len());
    }
    println!("{}", path.display());
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ControllerSummary {
    pub controller: ControllerKind,
    pub trials: usize,
    pub mean_fraction: f64,
    pub min_fraction: f64,
    pub min_fraction_optimal: f64,
    pub final_rms_e: f64,
    pub final_rmse_p: f64,
    pub final_rmse_v: f64,
    pub mean_control_energy: f64,
    pub metrics_file: String,
    pub seconds: f64,
}

impl ControllerSummary {
    pub fn new(controller: ControllerKind, m: &TrialMetrics, metrics_file: String, seconds: f64) -> Self {
        let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
        Self {
            controller,
            trials: m.trials,
            mean_fraction: m.mean_fraction,
            min_fraction: m.min_fraction,
            min_fraction_optimal: m.min_fraction_optimal(),
            final_rms_e: last(&m.rms_e),
            final_rmse_p: last(&m.rmse_p),
            final_rmse_v: last(&m.rmse_v),
            mean_control_energy: m.control_energy.iter().sum::<f64>() / m.control_energy.len().max(1) as f64,
            metrics_file,
            seconds,
        }
    }
}

#[derive(Debug, Serialize)]
struct Summary {
    init: String,
    slots: usize,
    trials: usize,
    seed_base: u64,
    controllers: Vec<ControllerSummary>,
}

pub fn run_controller(
    cfg: &ScenarioConfig,
    controller: ControllerKind,
    trials: usize,
    seed: u64,
) -> Result<(TrialMetrics, f64), Failure> {
    let sc = cfg.resolve()?;
    let start = Instant::now();
    let metrics = compute_metrics(&run_trials(&sc, controller, trials, seed)?)?;
    Ok((metrics, start.elapsed().as_secs_f64()))
}

pub fn montecarlo(
    cfg: &ScenarioConfig,
    out: &Path,
    controllers: &[ControllerKind],
    trials: usize,
    seed: u64,
) -> Result<(), Failure> {
    if controllers.is_empty() {
        return Err(Error::InvalidArgument("no controllers selected".into()).into());
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()).into());
    }
    prepare_dir(out)?;
    let mut summaries = Vec::new();
    for &c in controllers {
        let (metrics, seconds) = run_controller(cfg, c, trials, seed)?;
        let name = format!("metrics_{c}.csv");
        write_metrics_csv(&metrics, create(&out.join(&name))?)?;
        let s = ControllerSummary::new(c, &metrics, name, seconds);
        println!(
            "{c:>9}: final rms_e {:.3} m, rmse_p {:.3} m, rmse_v {:.3} m/s, rate ok mean {:.3} min {:.3} ({seconds:.1} s)",
            s.final_rms_e, s.final_rmse_p, s.final_rmse_v, s.mean_fraction, s.min_fraction
        );
        summaries.push(s);
    }
    let summary = Summary {
        init: cfg.scenario.init.as_str().to_owned(),
        slots: cfg.scenario.slots,
        trials,
        seed_base: seed,
        controllers: summaries,
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_config(cfg, out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    serde_json::to_writer_pretty(create(path)?, value).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

pub fn verify(config: ScenarioConfig, suite: Suite, trials: usize, seed: u64) -> Result<(), Failure> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()).into());
    }
    let opts = VerifyOptions { config, seed, trials };
    let outcomes = run_checks(&suite.checks(), &opts, |o| println!("{o}"))?;
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    println!("{suite}: {} passed, {} failed", outcomes.len() - failed.len(), failed.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(failed))
    }
}
