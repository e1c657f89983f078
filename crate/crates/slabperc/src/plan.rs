//! Experiment plans: a JSON-described grid of cells executed in
//! parallel, persisted as JSON-lines, and resumable by skipping cells
//! already present in the output file.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlabError};
use crate::geometry::Vertex;
use crate::harness::{self, EstimateRecord};
use crate::labels::tag_bytes;

/// One grid cell; which fields are required depends on the experiment
/// kind.
#[derive(Clone, Debug, Serialize, Deserialize, Default)]
pub struct CellParams {
    pub k: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<[i32; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<i32>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentPlan {
    /// crossing | pc-estimate | box-crossing | one-arm | circuit |
    /// single-tree | kesten
    pub experiment: String,
    pub grid: Vec<CellParams>,
    pub trials: u64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentPlan {
    pub fn from_file(path: &Path) -> Result<ExperimentPlan> {
        let f = File::open(path)?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }
}

fn cell_id(plan: &ExperimentPlan, cell: &CellParams) -> String {
    let text = format!(
        "{}|{}|{}|{}",
        plan.experiment,
        serde_json::to_string(cell).unwrap(),
        plan.trials,
        plan.seed
    );
    format!("{:016x}", tag_bytes(text.as_bytes()))
}

fn need_i32(v: Option<i32>, name: &str) -> Result<i32> {
    v.ok_or_else(|| SlabError::InvalidParameter(format!("cell missing {name}")))
}

fn need_f64(v: Option<f64>, name: &str) -> Result<f64> {
    v.ok_or_else(|| SlabError::InvalidParameter(format!("cell missing {name}")))
}

fn run_cell(plan: &ExperimentPlan, cell: &CellParams) -> Result<Vec<EstimateRecord>> {
    let (trials, seed) = (plan.trials, plan.seed);
    let recs = match plan.experiment.as_str() {
        "crossing" => vec![harness::estimate_crossing(
            cell.k,
            need_f64(cell.p, "p")?,
            need_i32(cell.m, "m")?,
            need_i32(cell.n, "n")?,
            trials,
            seed,
        )?],
        "pc-estimate" => vec![harness::estimate_pc(
            cell.k,
            need_i32(cell.n, "n")?,
            need_f64(cell.tol, "tol")?,
            trials,
            seed,
        )?],
        "box-crossing" => harness::box_crossing_suite(
            cell.k,
            need_f64(cell.p, "p")?,
            &[need_f64(cell.rho, "rho")?],
            &[need_i32(cell.n, "n")?],
            trials,
            seed,
        )?,
        "one-arm" => {
            let radii = cell
                .radii
                .clone()
                .ok_or_else(|| SlabError::InvalidParameter("cell missing radii".into()))?;
            harness::one_arm_suite(
                cell.k,
                need_f64(cell.p, "p")?,
                need_i32(cell.m, "m")?,
                &radii,
                trials,
                seed,
            )?
            .records
        }
        "circuit" => harness::circuit_suite(
            cell.k,
            need_f64(cell.p, "p")?,
            &[need_i32(cell.n, "n")?],
            trials,
            seed,
        )?,
        "single-tree" => {
            let x = cell
                .x
                .ok_or_else(|| SlabError::InvalidParameter("cell missing x".into()))?;
            let radii = cell
                .radii
                .clone()
                .ok_or_else(|| SlabError::InvalidParameter("cell missing radii".into()))?;
            harness::single_tree_suite(
                cell.k,
                Vertex::new(x[0], x[1], x[2]),
                &radii,
                trials,
                seed,
            )?
        }
        other => {
            return Err(SlabError::InvalidParameter(format!("unknown experiment {other}")))
        }
    };
    Ok(recs)
}

fn annotate(mut recs: Vec<EstimateRecord>, id: &str) -> Vec<EstimateRecord> {
    for r in &mut recs {
        if let serde_json::Value::Object(map) = &mut r.params {
            map.insert("cell_id".into(), serde_json::Value::String(id.to_string()));
        }
    }
    recs
}

fn completed_cells(path: &Path) -> Result<std::collections::HashSet<String>> {
    let mut done = std::collections::HashSet::new();
    if !path.exists() {
        return Ok(done);
    }
    let f = File::open(path)?;
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EstimateRecord = serde_json::from_str(&line)?;
        if let Some(id) = rec.params.get("cell_id").and_then(|v| v.as_str()) {
            done.insert(id.to_string());
        }
    }
    Ok(done)
}

/// Executes every not-yet-completed cell of the plan in parallel and
/// appends the records (in cell order) to the sink, returning all newly
/// produced records. Rerunning a completed plan is a no-op.
pub fn run_plan(plan: &ExperimentPlan) -> Result<Vec<EstimateRecord>> {
    if plan.trials == 0 {
        return Err(SlabError::InvalidParameter("trials must be >= 1".into()));
    }
    let done = match &plan.out {
        Some(path) => completed_cells(path)?,
        None => Default::default(),
    };
    let pending: Vec<&CellParams> = plan
        .grid
        .iter()
        .filter(|cell| !done.contains(&cell_id(plan, cell)))
        .collect();
    let results: Vec<Result<Vec<EstimateRecord>>> = pending
        .par_iter()
        .map(|cell| run_cell(plan, cell).map(|r| annotate(r, &cell_id(plan, cell))))
        .collect();
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    if let Some(path) = &plan.out {
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        for rec in &out {
            writeln!(f, "{}", serde_json::to_string(rec)?)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_plan(out: Option<PathBuf>) -> ExperimentPlan {
        ExperimentPlan {
            experiment: "crossing".into(),
            grid: vec![
                CellParams { k: 0, p: Some(0.4), m: Some(4), n: Some(4), ..Default::default() },
                CellParams { k: 1, p: Some(0.5), m: Some(4), n: Some(4), ..Default::default() },
            ],
            trials: 200,
            seed: 13,
            out,
        }
    }

    #[test]
    fn empty_grid_ok() {
        let plan = ExperimentPlan {
            experiment: "crossing".into(),
            grid: vec![],
            trials: 10,
            seed: 1,
            out: None,
        };
        assert!(run_plan(&plan).unwrap().is_empty());
    }

    #[test]
    fn resume_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.jsonl");
        let plan = small_plan(Some(path.clone()));
        let first = run_plan(&plan).unwrap();
        assert_eq!(first.len(), 2);
        let before = std::fs::read(&path).unwrap();
        let second = run_plan(&plan).unwrap();
        assert!(second.is_empty());
        assert_eq!(std::fs::read(&path).unwrap(), before, "file must not change on rerun");
    }

    #[test]
    fn worker_count_invariance() {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let plan = small_plan(None);
        let a = one.install(|| run_plan(&plan).unwrap());
        let b = four.install(|| run_plan(&plan).unwrap());
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
