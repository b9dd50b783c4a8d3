use super::compare::{compare, tridiagonality, z_scores, CompareSummary, TridiagonalTest};
use super::config::{DeviceSpec, ExperimentConfig};
use super::reconstruct::{ColumnDiagnostics, ExtractionRecord, Reconstruction};
use super::run::{OutcomeEstimate, TheoryModel};
use crate::error::Result;
use crate::fock::write_matrix_csv;
use crate::homodyne::lossy_cutoff;
use crate::json::to_string_pretty;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const QUADRATURE_CONVENTION: &str = "x = (a + a^dagger)/sqrt(2), vacuum variance 1/2";

/// r̂ table entry as reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOutcome {
    pub n: usize,
    pub p_n: f64,
    pub samples: u64,
    pub r: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub device_dim: usize,
    pub reconstructed_size: usize,
    pub compare_size: usize,
    /// Highest lossy Fock index estimated before loss compensation.
    pub homodyne_lossy_cutoff: usize,
    pub retained_outcomes: Vec<usize>,
    pub columns: Vec<ColumnDiagnostics>,
}

/// Self-describing result of one reconstruction. Carries no timing or worker count,
/// so identical inputs give byte-identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub quadrature_convention: String,
    pub tau: f64,
    pub outcomes: Vec<ReportOutcome>,
    pub g_hat: Vec<Vec<f64>>,
    pub g_sigma: Vec<Vec<f64>>,
    pub g_theory: Vec<Vec<f64>>,
    pub l_hat: Vec<Vec<f64>>,
    pub l_sigma: Vec<Vec<f64>>,
    pub l_theory: Vec<Vec<f64>>,
    /// z-scores of L̂ on the guarded compare block; null where σ = 0 under a residual.
    pub z: Vec<Vec<Option<f64>>>,
    pub extraction: ExtractionRecord,
    pub summary: CompareSummary,
    pub green_summary: CompareSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tridiagonality: Option<TridiagonalTest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tridiagonality_diagonal: Option<TridiagonalTest>,
    pub truncation: Truncation,
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

fn lead(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    m.view((0, 0), (k, k)).into_owned()
}

pub fn assemble_report(cfg: &ExperimentConfig, theory: &TheoryModel, estimates: &[OutcomeEstimate], rec: &Reconstruction) -> Result<ReconstructionReport> {
    let size = rec.extraction.size;
    let c = cfg.reconstruction.compare().min(size);
    let l_theory = lead(theory.liouvillian.matrix(), size);
    let g_theory = lead(theory.green.matrix(), cfg.reconstruction.size);

    let (lh, ls, lt) = (lead(&rec.l_hat, c), lead(&rec.l_sigma, c), lead(&l_theory, c));
    let summary = compare(&lh, &ls, &lt)?;
    let green_summary = compare(&lead(&rec.g_hat, c), &lead(&rec.g_sigma, c), &lead(&g_theory, c))?;
    let z = z_scores(&lh, &ls, &lt);
    let (tri, tri_diag) = if matches!(cfg.device, DeviceSpec::Pia(_)) {
        let diag = tridiagonality(&lh, &ls, None)?;
        match &rec.l_cov {
            Some(cov) => (Some(tridiagonality(&lh, &ls, Some(cov))?), Some(diag)),
            None => (Some(diag), None),
        }
    } else {
        (None, None)
    };

    Ok(ReconstructionReport {
        config_hash: cfg.hash()?,
        config: cfg.canonical(),
        seed: cfg.seed,
        quadrature_convention: QUADRATURE_CONVENTION.to_string(),
        tau: theory.tau(),
        outcomes: estimates
            .iter()
            .map(|e| ReportOutcome { n: e.n, p_n: e.p_n, samples: e.samples, r: e.r.clone(), sigma: e.sigma.clone() })
            .collect(),
        g_hat: rows(&rec.g_hat),
        g_sigma: rows(&rec.g_sigma),
        g_theory: rows(&g_theory),
        l_hat: rows(&rec.l_hat),
        l_sigma: rows(&rec.l_sigma),
        l_theory: rows(&l_theory),
        z: z.row_iter().map(|r| r.iter().copied().collect()).collect(),
        extraction: rec.extraction.clone(),
        summary,
        green_summary,
        tridiagonality: tri,
        tridiagonality_diagonal: tri_diag,
        truncation: Truncation {
            device_dim: theory.dim(),
            reconstructed_size: cfg.reconstruction.size,
            compare_size: c,
            homodyne_lossy_cutoff: lossy_cutoff(cfg.homodyne.eta_h, cfg.homodyne.k_max),
            retained_outcomes: cfg.retained_outcomes(),
            columns: rec.columns.clone(),
        },
    })
}

fn write_csv(dir: &Path, name: &str, value: &DMatrix<f64>, sigma: Option<&DMatrix<f64>>, hash: &str) -> Result<()> {
    let f = std::fs::File::create(dir.join(name))?;
    write_matrix_csv(std::io::BufWriter::new(f), value, sigma, Some(hash))
}

/// Writes `report.json`, `G_hat.csv`, `L_hat.csv`, `L_theory.csv` and `z.csv` into `dir`.
pub fn write_report(dir: &Path, report: &ReconstructionReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let h = &report.config_hash;
    std::fs::write(dir.join("report.json"), to_string_pretty(report)?)?;
    write_csv(dir, "G_hat.csv", &from_rows(&report.g_hat), Some(&from_rows(&report.g_sigma)), h)?;
    write_csv(dir, "L_hat.csv", &from_rows(&report.l_hat), Some(&from_rows(&report.l_sigma)), h)?;
    write_csv(dir, "L_theory.csv", &from_rows(&report.l_theory), None, h)?;
    // undefined z-scores are written as NaN in the CSV
    let z = DMatrix::from_fn(report.z.len(), report.z.first().map_or(0, Vec::len), |i, j| report.z[i][j].unwrap_or(f64::NAN));
    write_csv(dir, "z.csv", &z, None, h)
}
