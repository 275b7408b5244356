use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use super::experiment::{Algorithm, CellResult, ExperimentConfig, ExperimentMatrixResult, FailureRecord, ReplicateRecord};
use super::HarnessError;
use crate::optim::{GapEstimate, Termination};

#[derive(Debug, Serialize, Deserialize)]
struct DesignRow {
    algorithm: String,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    t: usize,
    x: f64,
    y: Option<f64>,
    termination: String,
    iters: usize,
    wall_s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReestimateRow {
    algorithm: String,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    t: usize,
    u_hat: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct GapRow {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    t: usize,
    upper: f64,
    lower: f64,
    gap: f64,
    variance: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct IterationRow {
    algorithm: String,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    t: usize,
    iters: usize,
    objective_evals: usize,
    gradient_evals: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct MseRow {
    algorithm: String,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    mean_runtime_s: Option<f64>,
    mse: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CellSummary {
    algorithm: Algorithm,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    replicates: usize,
    failures: Vec<FailureRecord>,
    mean_u_hat: Option<f64>,
    mse: Option<f64>,
    mean_runtime_s: Option<f64>,
    mean_gap: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Summary {
    #[serde(rename = "U_ref")]
    u_ref: Option<f64>,
    cells: Vec<CellSummary>,
    config: ExperimentConfig,
}

pub const REPORT_FILES: [&str; 6] = [
    "designs.csv",
    "reestimates.csv",
    "gaps.csv",
    "iterations.csv",
    "mse_vs_time.csv",
    "summary.json",
];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(|e| format_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| format_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| format_err(path, e))?;
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let text = fs::read(path).map_err(io_err(path))?;
    csv::Reader::from_reader(text.as_slice())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| format_err(path, e))
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Writes `designs.csv`, `reestimates.csv`, `gaps.csv`, `iterations.csv`,
/// `mse_vs_time.csv` and `summary.json` into `out_dir`.
pub fn emit_reports(result: &ExperimentMatrixResult, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut designs = Vec::new();
    let mut reestimates = Vec::new();
    let mut gaps = Vec::new();
    let mut iterations = Vec::new();
    let mut mse_rows = Vec::new();
    let mut summaries = Vec::new();
    for cell in &result.cells {
        let alg = cell.algorithm.as_str().to_string();
        for r in &cell.replicates {
            if r.design.is_empty() || r.design.len() > 2 {
                return Err(HarnessError::Config(format!(
                    "reports support 1- or 2-dimensional designs, got {}",
                    r.design.len()
                )));
            }
            designs.push(DesignRow {
                algorithm: alg.clone(),
                n: cell.n,
                m: cell.m,
                t: r.t,
                x: r.design[0],
                y: r.design.get(1).copied(),
                termination: r.termination.as_str().to_string(),
                iters: r.iters,
                wall_s: r.wall_s,
            });
            reestimates.push(ReestimateRow {
                algorithm: alg.clone(),
                n: cell.n,
                m: cell.m,
                t: r.t,
                u_hat: r.u_hat,
            });
            iterations.push(IterationRow {
                algorithm: alg.clone(),
                n: cell.n,
                m: cell.m,
                t: r.t,
                iters: r.iters,
                objective_evals: r.objective_evals,
                gradient_evals: r.gradient_evals,
            });
        }
        for g in &cell.gaps {
            gaps.push(GapRow {
                n: cell.n,
                m: cell.m,
                t: g.t,
                upper: g.upper,
                lower: g.lower,
                gap: g.gap,
                variance: g.variance,
            });
        }
        let mse = result.cell_mse(cell);
        mse_rows.push(MseRow {
            algorithm: alg.clone(),
            n: cell.n,
            m: cell.m,
            mean_runtime_s: cell.mean_runtime(),
            mse,
        });
        summaries.push(CellSummary {
            algorithm: cell.algorithm,
            n: cell.n,
            m: cell.m,
            replicates: cell.replicates.len(),
            failures: cell.failures.clone(),
            mean_u_hat: mean(&cell.u_hats()),
            mse,
            mean_runtime_s: cell.mean_runtime(),
            mean_gap: mean(&cell.gaps.iter().map(|g| g.gap).collect::<Vec<_>>()),
        });
    }

    let path = |name: &str| out_dir.join(name);
    let mut written = Vec::new();
    write_csv(
        &path("designs.csv"),
        &["algorithm", "N", "M", "t", "x", "y", "termination", "iters", "wall_s"],
        &designs,
    )?;
    write_csv(&path("reestimates.csv"), &["algorithm", "N", "M", "t", "u_hat"], &reestimates)?;
    write_csv(&path("gaps.csv"), &["N", "M", "t", "upper", "lower", "gap", "variance"], &gaps)?;
    write_csv(
        &path("iterations.csv"),
        &["algorithm", "N", "M", "t", "iters", "objective_evals", "gradient_evals"],
        &iterations,
    )?;
    write_csv(
        &path("mse_vs_time.csv"),
        &["algorithm", "N", "M", "mean_runtime_s", "mse"],
        &mse_rows,
    )?;
    let summary = Summary {
        u_ref: result.u_ref(),
        cells: summaries,
        config: result.config.clone(),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| format_err(&path("summary.json"), e))?;
    fs::write(path("summary.json"), json + "\n").map_err(io_err(&path("summary.json")))?;
    for name in REPORT_FILES {
        written.push(path(name));
    }
    Ok(written)
}

/// Reassembles a result from files written by [`emit_reports`].
pub fn read_reports(dir: &Path) -> Result<ExperimentMatrixResult, HarnessError> {
    let summary_path = dir.join("summary.json");
    let text = fs::read_to_string(&summary_path).map_err(io_err(&summary_path))?;
    let summary: Summary = serde_json::from_str(&text).map_err(|e| format_err(&summary_path, e))?;
    let designs: Vec<DesignRow> = read_csv(&dir.join("designs.csv"))?;
    let reestimates: Vec<ReestimateRow> = read_csv(&dir.join("reestimates.csv"))?;
    let iterations: Vec<IterationRow> = read_csv(&dir.join("iterations.csv"))?;
    let gaps: Vec<GapRow> = read_csv(&dir.join("gaps.csv"))?;

    let designs_path = dir.join("designs.csv");
    let mut cells: Vec<CellResult> = summary
        .cells
        .iter()
        .map(|c| CellResult {
            algorithm: c.algorithm,
            n: c.n,
            m: c.m,
            replicates: Vec::new(),
            gaps: Vec::new(),
            failures: c.failures.clone(),
        })
        .collect();
    let find = |cells: &mut Vec<CellResult>, alg: Algorithm, n: usize, m: usize| -> Option<usize> {
        cells.iter().position(|c| c.algorithm == alg && c.n == n && c.m == m)
    };
    for ((d, r), it) in designs.iter().zip(&reestimates).zip(&iterations) {
        let alg = Algorithm::parse(&d.algorithm).ok_or_else(|| format_err(&designs_path, "unknown algorithm"))?;
        if (r.algorithm.as_str(), r.n, r.m, r.t) != (d.algorithm.as_str(), d.n, d.m, d.t)
            || (it.algorithm.as_str(), it.n, it.m, it.t) != (d.algorithm.as_str(), d.n, d.m, d.t)
        {
            return Err(format_err(dir, "designs, reestimates and iterations rows disagree"));
        }
        let k = find(&mut cells, alg, d.n, d.m).ok_or_else(|| format_err(&designs_path, "row for unknown cell"))?;
        let mut design = vec![d.x];
        design.extend(d.y);
        cells[k].replicates.push(ReplicateRecord {
            t: d.t,
            design,
            termination: Termination::parse(&d.termination)
                .ok_or_else(|| format_err(&designs_path, format!("unknown termination {}", d.termination)))?,
            iters: d.iters,
            objective_evals: it.objective_evals,
            gradient_evals: it.gradient_evals,
            wall_s: d.wall_s,
            u_hat: r.u_hat,
        });
    }
    if designs.len() != reestimates.len() || designs.len() != iterations.len() {
        return Err(format_err(dir, "designs, reestimates and iterations row counts disagree"));
    }
    for g in gaps {
        let k = find(&mut cells, Algorithm::Saa, g.n, g.m)
            .ok_or_else(|| format_err(&dir.join("gaps.csv"), "row for unknown cell"))?;
        cells[k].gaps.push(GapEstimate {
            t: g.t,
            upper: g.upper,
            lower: g.lower,
            gap: g.gap,
            variance: g.variance,
        });
    }
    Ok(ExperimentMatrixResult {
        config: summary.config,
        cells,
    })
}
