//! Columnar data behind the tracking figures.
//!
//! Every file is a CSV with a header row; `manifest.json` lists each file with
//! its figure, axes and series. Episode figures use one seed; the statistics
//! figures use `trials` seeds starting at `seed`, for both initializations.

use std::io::Write;
use std::path::Path;

use isctrack_core::config::PRESETS;
use isctrack_core::simkit::{compute_metrics, run_trials};
use isctrack_core::{run_episode, ControllerKind, EpisodeTrace, InitMode, ScenarioConfig, TrialMetrics};
use serde::Serialize;

use crate::commands::{create, prepare_dir, write_config, write_json};
use crate::{Common, Failure};

const INITS: [InitMode; 2] = [InitMode::Accurate, InitMode::Inaccurate];
const ESTIMATING: [ControllerKind; 2] = [ControllerKind::Iscc, ControllerKind::Lqg];

#[derive(Debug, Serialize)]
struct Axis {
    column: String,
    label: String,
}

#[derive(Debug, Serialize)]
struct Entry {
    figure: String,
    file: String,
    title: String,
    /// `trajectory` pairs `*_x`/`*_y` columns in the plane; `series` plots each column against `x`.
    kind: &'static str,
    x: Axis,
    y: Axis,
    series: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    seed: u64,
    trials: usize,
    dt: f64,
    altitude: f64,
    gu_position: [f64; 2],
    files: Vec<Entry>,
}

fn axis(column: &str, label: &str) -> Axis {
    Axis { column: column.into(), label: label.into() }
}

/// Named columns of possibly different lengths; short columns leave empty cells.
struct Table {
    columns: Vec<(String, Vec<String>)>,
}

impl Table {
    fn new() -> Self {
        Self { columns: Vec::new() }
    }

    fn push(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.columns.push((name.into(), values.iter().map(|x| format!("{x:.9e}")).collect()));
    }

    fn push_text(&mut self, name: impl Into<String>, values: Vec<String>) {
        self.columns.push((name.into(), values));
    }

    fn names(&self) -> Vec<String> {
        self.columns.iter().map(|(n, _)| n.clone()).collect()
    }

    fn write(&self, path: &Path) -> Result<(), Failure> {
        let io = |e: std::io::Error| Failure::Runtime(format!("{}: {e}", path.display()));
        let mut out = create(path)?;
        writeln!(out, "{}", self.names().join(",")).map_err(io)?;
        let rows = self.columns.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
        for k in 0..rows {
            let cells: Vec<String> = self.columns.iter().map(|(_, v)| v.get(k).cloned().unwrap_or_default()).collect();
            writeln!(out, "{}", cells.join(",")).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

fn slots(trace: &EpisodeTrace) -> Vec<String> {
    trace.records.iter().map(|r| r.n.to_string()).collect()
}

fn trajectory_table(traces: &[EpisodeTrace]) -> Table {
    let mut t = Table::new();
    let longest = traces.iter().max_by_key(|t| t.records.len()).expect("at least one trace");
    t.push_text("n", slots(longest));
    t.push("target_x", longest.records.iter().map(|r| r.target.p.x).collect());
    t.push("target_y", longest.records.iter().map(|r| r.target.p.y).collect());
    for tr in traces {
        t.push(format!("{}_x", tr.controller), tr.records.iter().map(|r| r.uav.p.x).collect());
        t.push(format!("{}_y", tr.controller), tr.records.iter().map(|r| r.uav.p.y).collect());
    }
    t
}

fn estimation_table(traces: &[EpisodeTrace]) -> Table {
    let mut t = Table::new();
    let longest = traces.iter().max_by_key(|t| t.records.len()).expect("at least one trace");
    t.push_text("n", slots(longest));
    for tr in traces {
        let err: Vec<_> = tr.records.iter().map(|r| r.estimation_error()).collect();
        t.push(format!("{}_pos_err", tr.controller), err.iter().map(|e| e.fixed_rows::<2>(0).norm()).collect());
        t.push(format!("{}_vel_err", tr.controller), err.iter().map(|e| e.fixed_rows::<2>(2).norm()).collect());
    }
    t
}

fn episodes(cfg: &ScenarioConfig, controllers: &[ControllerKind], seed: u64) -> Result<Vec<EpisodeTrace>, Failure> {
    let sc = cfg.resolve()?;
    let traces = controllers.iter().map(|&c| run_episode(&sc, c, seed)).collect::<Result<Vec<_>, _>>()?;
    for t in &traces {
        if let Some(reason) = &t.aborted {
            eprintln!("{} episode (seed {seed}) stopped after {} slots: {reason}", t.controller, t.records.len());
        }
    }
    Ok(traces)
}

fn trajectory_entry(figure: &str, file: &str, title: String, table: &Table) -> Entry {
    Entry {
        figure: figure.into(),
        file: file.into(),
        title,
        kind: "trajectory",
        x: axis("*_x", "x (m)"),
        y: axis("*_y", "y (m)"),
        series: table.names().into_iter().filter(|n| n != "n").collect(),
    }
}

fn series_entry(figure: &str, file: &str, title: String, x: Axis, y: &str, table: &Table) -> Entry {
    let xc = x.column.clone();
    Entry {
        figure: figure.into(),
        file: file.into(),
        title,
        kind: "series",
        x,
        y: axis("", y),
        series: table.names().into_iter().filter(|n| *n != xc).collect(),
    }
}

fn write_entry(out: &Path, table: &Table, entry: Entry, files: &mut Vec<Entry>) -> Result<(), Failure> {
    table.write(&out.join(&entry.file))?;
    println!("{}", entry.file);
    files.push(entry);
    Ok(())
}

pub fn export(common: &Common, trials: usize, seed: u64) -> Result<(), Failure> {
    if trials == 0 {
        return Err(Failure::Usage("need at least one trial".into()));
    }
    let out = common.out.as_path();
    let base_preset = match (&common.preset, &common.config) {
        (Some(p), _) => Some(p.as_str()),
        (None, None) => Some("case2"),
        (None, Some(_)) => None,
    };
    let base = common.load_with(base_preset, Some(InitMode::Accurate))?;
    prepare_dir(out)?;
    let mut files = Vec::new();
    let slot_axis = || axis("n", "time slot n");

    for (k, case) in PRESETS.iter().enumerate() {
        let cfg = common.load_with(Some(case), Some(InitMode::Accurate))?;
        let label = format!("case {}", k + 1);
        let all = episodes(&cfg, &ControllerKind::ALL, seed)?;
        let table = trajectory_table(&all);
        let file = format!("fig4_{case}.csv");
        let entry = trajectory_entry(
            "4",
            &file,
            format!("UAV and target trajectories, {label}, accurate initialization"),
            &table,
        );
        write_entry(out, &table, entry, &mut files)?;

        let est: Vec<EpisodeTrace> = all.into_iter().filter(|t| ESTIMATING.contains(&t.controller)).collect();
        let table = estimation_table(&est);
        let file = format!("fig5_{case}.csv");
        let title = format!("Target estimation error, {label}, accurate initialization");
        write_entry(
            out,
            &table,
            series_entry("5", &file, title, slot_axis(), "error norm (m, m/s)", &table),
            &mut files,
        )?;
    }

    let inaccurate = common.load_with(base_preset, Some(InitMode::Inaccurate))?;
    let all = episodes(&inaccurate, &ControllerKind::ALL, seed)?;
    let table = trajectory_table(&all);
    let entry = trajectory_entry("7a", "fig7a.csv", "Trajectories with inaccurate initialization".into(), &table);
    write_entry(out, &table, entry, &mut files)?;
    let est: Vec<EpisodeTrace> = all.into_iter().filter(|t| ESTIMATING.contains(&t.controller)).collect();
    let table = estimation_table(&est);
    let entry = series_entry(
        "7b",
        "fig7b.csv",
        "Estimation error with inaccurate initialization".into(),
        slot_axis(),
        "error norm (m, m/s)",
        &table,
    );
    write_entry(out, &table, entry, &mut files)?;

    let mut stats: Vec<(ControllerKind, InitMode, TrialMetrics)> = Vec::new();
    for init in INITS {
        let cfg = common.load_with(base_preset, Some(init))?;
        let sc = cfg.resolve()?;
        for c in ControllerKind::ALL {
            stats.push((c, init, compute_metrics(&run_trials(&sc, c, trials, seed)?)?));
        }
    }
    let n_axis: Vec<String> = (1..=stats[0].2.slots()).map(|n| n.to_string()).collect();
    let curves = |pick: fn(&TrialMetrics) -> &Vec<f64>, only: &[ControllerKind]| {
        let mut t = Table::new();
        t.push_text("n", n_axis.clone());
        for (c, init, m) in stats.iter().filter(|(c, _, _)| only.contains(c)) {
            t.push(format!("{c}_{}", init.as_str()), pick(m).clone());
        }
        t
    };
    let table = curves(|m| &m.rms_e, &ControllerKind::ALL);
    let entry = series_entry("8", "fig8.csv", "RMS tracking error".into(), slot_axis(), "RMS ||e_n|| (m)", &table);
    write_entry(out, &table, entry, &mut files)?;
    let table = curves(|m| &m.rmse_p, &ESTIMATING);
    let entry = series_entry("9", "fig9.csv", "Position estimation RMSE".into(), slot_axis(), "RMSE (m)", &table);
    write_entry(out, &table, entry, &mut files)?;
    let table = curves(|m| &m.rmse_v, &ESTIMATING);
    let entry = series_entry("10", "fig10.csv", "Velocity estimation RMSE".into(), slot_axis(), "RMSE (m/s)", &table);
    write_entry(out, &table, entry, &mut files)?;

    let mut table = Table::new();
    table.push_text("trial", (0..trials).map(|m| m.to_string()).collect());
    for (c, init, m) in &stats {
        table.push(format!("{c}_{}", init.as_str()), m.rate_ok_fraction.clone());
    }
    let entry = series_entry(
        "11",
        "fig11.csv",
        "Fraction of slots meeting the rate threshold per trial".into(),
        axis("trial", "trial index m"),
        "fraction",
        &table,
    );
    write_entry(out, &table, entry, &mut files)?;
    let mut table = Table::new();
    table.push_text("controller", stats.iter().map(|(c, _, _)| c.to_string()).collect());
    table.push_text("init", stats.iter().map(|(_, i, _)| i.as_str().to_owned()).collect());
    table.push("mean_fraction", stats.iter().map(|(_, _, m)| m.mean_fraction).collect());
    table.push("min_fraction", stats.iter().map(|(_, _, m)| m.min_fraction).collect());
    let entry = Entry {
        figure: "11".into(),
        file: "fig11_summary.csv".into(),
        title: "Mean and minimum rate-satisfaction fraction across trials".into(),
        kind: "table",
        x: axis("controller", "controller and initialization"),
        y: axis("", "fraction"),
        series: vec!["mean_fraction".into(), "min_fraction".into()],
    };
    write_entry(out, &table, entry, &mut files)?;

    let manifest = Manifest {
        seed,
        trials,
        dt: base.scenario.dt,
        altitude: base.scenario.altitude,
        gu_position: base.scenario.gu_position,
        files,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    write_config(&base, out)
}
