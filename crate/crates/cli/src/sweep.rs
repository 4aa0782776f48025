//! Grid runs over one config axis and several seeds.

use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Result};
use geossl::evaluation::aggregate_trials;
use geossl::training::get_path;
use serde::{Deserialize, Serialize};

use crate::experiment::{value_label, ExperimentFile};
use crate::manifest::{RunStore, CODE_HASH};
use crate::runner::{eval_run, metrics_for, train_run};
use crate::table::Table;

pub const SWEEP_FILE: &str = "sweep.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: String,
    pub seed: u64,
    pub run_id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    /// Output width of the regression head, if the cell has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_l2: Option<f64>,
    /// Every recorded loss component was finite.
    pub finite: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub name: String,
    pub axis: String,
    pub values: Vec<String>,
    pub seeds: Vec<u64>,
    pub confidence: f64,
    pub code_hash: String,
    pub cells: Vec<SweepCell>,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub name: String,
    pub axis: String,
    pub values: Vec<toml::Value>,
    pub seeds: Vec<u64>,
    pub overrides: Vec<String>,
    pub jobs: usize,
    pub confidence: f64,
    pub progress: bool,
}

fn id_part(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

fn run_cell(store: &RunStore, file: &ExperimentFile, opts: &SweepOptions, value: &toml::Value, seed: u64) -> SweepCell {
    let label = value_label(value);
    let run_id = format!("{}/{}/seed-{seed}", id_part(&opts.name), id_part(&label));
    let mut cell = SweepCell {
        value: label,
        seed,
        run_id: run_id.clone(),
        ok: false,
        accuracy: None,
        head_dim: None,
        final_l2: None,
        finite: true,
        error: None,
    };
    let result = (|| -> Result<()> {
        let mut sets = opts.overrides.clone();
        sets.push(format!("{}={}", opts.axis, value));
        sets.push(format!("seed={seed}"));
        let cfg = file.resolve(&sets)?;
        cell.head_dim = cfg.bundle_spec().head.map(|h| h.output_dim());
        let outcome = train_run(store, &run_id, &cfg, false);
        if let Ok(records) = metrics_for(store, &run_id) {
            cell.finite = records.iter().all(|r| r.l1.is_finite() && r.l2.is_finite() && r.total.is_finite());
            cell.final_l2 = records.last().map(|r| r.l2);
        }
        outcome?;
        let last = eval_run(store, &run_id, None, None, None)?.pop().expect("non-empty");
        cell.accuracy = Some(last.1.accuracy);
        Ok(())
    })();
    match result {
        Ok(()) => cell.ok = true,
        Err(e) => cell.error = Some(format!("{e:#}")),
    }
    cell
}

/// Runs every (value, seed) cell, up to `jobs` at a time. A failing cell is
/// recorded and the sweep continues.
pub fn run_sweep(store: &RunStore, file: &ExperimentFile, opts: &SweepOptions) -> Result<SweepRecord> {
    if opts.values.is_empty() || opts.seeds.is_empty() {
        bail!(geossl::Error::Config("a sweep needs at least one value and one seed".into()));
    }
    let base = file.resolve(&opts.overrides)?;
    get_path(&base, &opts.axis)?;
    let grid: Vec<(&toml::Value, u64)> = opts.values.iter().flat_map(|v| opts.seeds.iter().map(move |&s| (v, s))).collect();
    let next = AtomicUsize::new(0);
    let cells: Mutex<Vec<Option<SweepCell>>> = Mutex::new(vec![None; grid.len()]);
    std::thread::scope(|scope| {
        for _ in 0..opts.jobs.clamp(1, grid.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(v, s)) = grid.get(i) else { break };
                let cell = run_cell(store, file, opts, v, s);
                if opts.progress {
                    match (&cell.accuracy, &cell.error) {
                        (Some(a), _) => eprintln!("[{}/{}] {} = {} seed {}: {:.2}%", i + 1, grid.len(), opts.axis, cell.value, s, a * 100.0),
                        (_, Some(e)) => eprintln!("[{}/{}] {} = {} seed {}: failed: {e}", i + 1, grid.len(), opts.axis, cell.value, s),
                        _ => {}
                    }
                }
                cells.lock().expect("cell lock")[i] = Some(cell);
            });
        }
    });
    let record = SweepRecord {
        name: opts.name.clone(),
        axis: opts.axis.clone(),
        values: opts.values.iter().map(value_label).collect(),
        seeds: opts.seeds.clone(),
        confidence: opts.confidence,
        code_hash: CODE_HASH.to_string(),
        cells: cells.into_inner().expect("cell lock").into_iter().map(|c| c.expect("every cell ran")).collect(),
    };
    let dir = sweep_dir(store, &opts.name);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(SWEEP_FILE), serde_json::to_vec_pretty(&record)?)?;
    let table = sweep_table(&record)?;
    fs::write(dir.join("table.txt"), table.render())?;
    fs::write(dir.join("table.csv"), table.to_csv()?)?;
    Ok(record)
}

pub fn sweep_dir(store: &RunStore, name: &str) -> PathBuf {
    store.root.join(id_part(name))
}

pub fn load_sweep(store: &RunStore, name: &str) -> Result<SweepRecord> {
    let path = sweep_dir(store, name).join(SWEEP_FILE);
    Ok(serde_json::from_slice(&fs::read(&path)?)?)
}

/// One row per value: head width, successful seeds, mean ± CI accuracy.
/// The best mean is marked with `*`. Built from the record alone.
pub fn sweep_table(rec: &SweepRecord) -> Result<Table> {
    let mut table = Table::new([rec.axis.as_str(), "m", "seeds", "accuracy (%)", "best", "failed"]);
    let mut summaries = Vec::new();
    for v in &rec.values {
        let cells: Vec<&SweepCell> = rec.cells.iter().filter(|c| &c.value == v).collect();
        let accs: Vec<f64> = cells.iter().filter_map(|c| c.accuracy).collect();
        let s = if accs.is_empty() { None } else { Some(aggregate_trials(&accs, rec.confidence)?) };
        summaries.push((v, cells, s));
    }
    let best = summaries
        .iter()
        .filter_map(|(_, _, s)| s.map(|s| s.mean))
        .fold(f64::NEG_INFINITY, f64::max);
    for (v, cells, s) in &summaries {
        let m = cells.iter().find_map(|c| c.head_dim).map_or("-".to_string(), |m| m.to_string());
        let ok = cells.iter().filter(|c| c.ok).count();
        let acc = s.map_or("—".to_string(), |s| s.display_percent());
        let mark = if s.is_some_and(|s| s.mean == best) { "*" } else { "" };
        table.push(vec![v.to_string(), m, ok.to_string(), acc, mark.to_string(), (cells.len() - ok).to_string()]);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(value: &str, seed: u64, acc: Option<f64>) -> SweepCell {
        SweepCell {
            value: value.into(),
            seed,
            run_id: format!("s/{value}/seed-{seed}"),
            ok: acc.is_some(),
            accuracy: acc,
            head_dim: Some(1),
            final_l2: None,
            finite: true,
            error: None,
        }
    }

    #[test]
    fn table_marks_best_and_undefined_interval() {
        let rec = SweepRecord {
            name: "s".into(),
            axis: "module".into(),
            values: vec!["rotation".into(), "shear".into(), "scale".into()],
            seeds: vec![0],
            confidence: 0.99,
            code_hash: String::new(),
            cells: vec![cell("rotation", 0, Some(0.5)), cell("shear", 0, Some(0.6)), cell("scale", 0, None)],
        };
        let t = sweep_table(&rec).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.rows[0][3], "50.00 ± —");
        assert_eq!((t.rows[0][4].as_str(), t.rows[1][4].as_str(), t.rows[2][4].as_str()), ("", "*", ""));
        assert_eq!(t.rows[1][3], "60.00 ± —");
        assert_eq!(t.rows[2][3], "—");
        assert_eq!(t.rows[2][5], "1");
    }
}
