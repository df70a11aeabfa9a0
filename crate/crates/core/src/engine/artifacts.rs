//! Run directory layout: `config.json`, `tasks.json`, `archive_k{k}.csv`,
//! `hv_curve.csv`, GP and generator checkpoints, and `run_log.txt`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{EngineConfig, Method};
use super::inverse::InverseModel;
use super::run::RunArtifacts;
use super::state::{Counters, EvaluationRecord, Mode, RunState};
use crate::error::{Error, Result};
use crate::generative::GeneratorCheckpoint;
use crate::scalarize::Preference;

pub const CONFIG_FILE: &str = "config.json";
pub const TASKS_FILE: &str = "tasks.json";
pub const HV_CURVE_FILE: &str = "hv_curve.csv";
pub const GENERATOR_FILE: &str = "generator.json";
pub const LOG_FILE: &str = "run_log.txt";

pub fn archive_file(k: usize) -> String {
    format!("archive_k{k}.csv")
}

pub fn gp_file(group: usize, m: usize) -> String {
    format!("gp_g{group}_m{m}.json")
}

/// Resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub benchmark: String,
    pub seed: u64,
    pub engine: EngineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFile {
    pub tasks: Vec<Vec<f64>>,
    /// Scalarization reference point of each task at the end of the run.
    pub references: Vec<Vec<f64>>,
    pub hv_reference: Vec<f64>,
    pub rounds_completed: usize,
    pub counters: Counters,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HvRow {
    pub method: String,
    pub task: usize,
    pub round: usize,
    pub hv: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn write_archive(path: &Path, records: &[EvaluationRecord], d: usize, m: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string(), "mode".to_string()];
    header.extend((0..m).map(|i| format!("lambda_{i}")));
    header.extend((0..d).map(|i| format!("x_{i}")));
    header.extend((0..m).map(|i| format!("f_{i}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.round.to_string(), r.mode.name().to_string()];
        match &r.lambda {
            Some(l) => row.extend(l.as_slice().iter().map(f64::to_string)),
            None => row.extend(std::iter::repeat_n(String::new(), m)),
        }
        row.extend(r.x.iter().map(f64::to_string));
        row.extend(r.f.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an archive CSV; dimensions come from the header.
pub fn read_archive(path: &Path, theta: &[f64]) -> Result<Vec<EvaluationRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
    let (m, d) = (count("f_"), count("x_"));
    if header.len() != 2 + 2 * m + d || count("lambda_") != m {
        return Err(Error::Input(format!("{}: unexpected archive header", path.display())));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Input(format!("bad number '{s}' in {}", path.display())));
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let round = row[0].parse().map_err(|_| Error::Input(format!("bad round '{}'", &row[0])))?;
        let mode = Mode::parse(&row[1])?;
        let lambda = if row[2].is_empty() {
            None
        } else {
            Some(Preference::new((2..2 + m).map(|i| num(&row[i])).collect::<Result<Vec<_>>>()?)?)
        };
        let x = (2 + m..2 + m + d).map(|i| num(&row[i])).collect::<Result<Vec<_>>>()?;
        let f = (2 + m + d..2 + 2 * m + d).map(|i| num(&row[i])).collect::<Result<Vec<_>>>()?;
        out.push(EvaluationRecord { x, theta: theta.to_vec(), f, round, lambda, mode });
    }
    Ok(out)
}

pub fn hv_rows(method: Method, state: &RunState) -> Vec<HvRow> {
    state
        .hv_history
        .iter()
        .enumerate()
        .flat_map(|(task, h)| {
            h.iter().enumerate().map(move |(round, &hv)| HvRow { method: method.name().to_string(), task, round, hv })
        })
        .collect()
}

pub fn write_hv_curve(path: &Path, rows: &[HvRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "task", "round", "hv"])?;
    for r in rows {
        w.write_record([r.method.clone(), r.task.to_string(), r.round.to_string(), r.hv.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_hv_curve(path: &Path) -> Result<Vec<HvRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != ["method", "task", "round", "hv"] {
        return Err(Error::Input(format!("{}: unexpected header {header:?}", path.display())));
    }
    let rows = r.deserialize().collect::<std::result::Result<Vec<HvRow>, _>>()?;
    if let Some(bad) = rows.iter().find(|r| !r.hv.is_finite()) {
        return Err(Error::Input(format!("{}: non-finite hypervolume {}", path.display(), bad.hv)));
    }
    Ok(rows)
}

/// Writes everything except the generator, which only completed runs carry.
fn write_state(dir: &Path, benchmark: &str, cfg: &EngineConfig, state: &RunState, completed: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join(CONFIG_FILE), &RunManifest { benchmark: benchmark.to_string(), seed: state.seed, engine: cfg.clone() })?;
    write_json(
        &dir.join(TASKS_FILE),
        &TaskFile {
            tasks: state.tasks.clone(),
            references: state.references.clone(),
            hv_reference: state.hv_reference.clone(),
            rounds_completed: state.round,
            counters: state.counters.clone(),
            completed,
        },
    )?;
    for (k, a) in state.archives.iter().enumerate() {
        write_archive(&dir.join(archive_file(k)), a, state.decision_dim(), state.num_objectives())?;
    }
    write_hv_curve(&dir.join(HV_CURVE_FILE), &hv_rows(cfg.method, state))?;
    for (g, row) in state.models.iter().enumerate() {
        for (m, model) in row.iter().enumerate() {
            let data_ref = if state.task_aware { "archive_k*.csv".to_string() } else { archive_file(g) };
            write_json(&dir.join(gp_file(g, m)), &model.to_checkpoint(&format!("{data_ref}:f_{m}")))?;
        }
    }
    let mut log = state.log.join("\n");
    log.push('\n');
    fs::write(dir.join(LOG_FILE), log)?;
    Ok(())
}

pub fn write_run_dir(dir: &Path, artifacts: &RunArtifacts) -> Result<()> {
    write_state(dir, &artifacts.problem, &artifacts.config, &artifacts.state, true)?;
    if let Some(model) = &artifacts.inverse_model {
        write_json(&dir.join(GENERATOR_FILE), &model.to_checkpoint()?)?;
    }
    Ok(())
}

/// Persists what a failed run had produced, with the error appended to the log.
pub fn write_partial_run(dir: &Path, benchmark: &str, cfg: &EngineConfig, state: &RunState, error: &Error) -> Result<()> {
    let mut state = state.clone();
    state.log.push(format!("aborted: {error}"));
    write_state(dir, benchmark, cfg, &state, false)
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    read_json(&dir.join(CONFIG_FILE))
}

pub fn read_tasks(dir: &Path) -> Result<TaskFile> {
    read_json(&dir.join(TASKS_FILE))
}

/// The inverse model stored in a run directory, if the run trained one.
pub fn read_inverse_model(dir: &Path) -> Result<Option<InverseModel>> {
    let path = dir.join(GENERATOR_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let ckpt: GeneratorCheckpoint = read_json(&path)?;
    InverseModel::from_checkpoint(&ckpt).map(Some)
}
