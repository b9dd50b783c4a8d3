//! End-to-end Monte Carlo: conditioned inputs, homodyne data, inversion to Ĝ,
//! extraction of L̂ and comparison with the theoretical device.

mod compare;
mod config;
mod reconstruct;
mod report;
mod run;

pub use compare::{compare, off_tridiagonal, tridiagonality, z_scores, CompareSummary, TridiagonalTest};
pub use config::{
    DeviceSpec, ExperimentConfig, GreenCsvDevice, GreenSource, LaserDevice, PiaDevice, ReconstructionConfig, DESK_MAX_TOTAL_SAMPLES,
    DESK_MAX_TRAJECTORIES,
};
pub use reconstruct::{reconstruct, ColumnDiagnostics, ExtractionRecord, Reconstruction};
pub use report::{assemble_report, from_rows, rows, write_report, ReconstructionReport, ReportOutcome, Truncation, QUADRATURE_CONVENTION};
pub use run::{allocation, estimate_outcomes, outcome_table, output_distribution, run_experiment, theory, Dataset, OutcomeData, OutcomeEstimate, TheoryModel};

use crate::error::Result;

/// Estimates every outcome of a raw dataset and reconstructs the device.
pub fn reconstruct_dataset(data: &Dataset, cfg: &ExperimentConfig, theory: &TheoryModel) -> Result<ReconstructionReport> {
    let estimates = estimate_outcomes(data, cfg)?;
    let rec = reconstruct(&estimates, cfg, theory.tau())?;
    assemble_report(cfg, theory, &estimates, &rec)
}

/// Theory, simulation, estimation and reconstruction in one call.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<ReconstructionReport> {
    let th = theory(cfg)?;
    let data = run_experiment(cfg, &th)?;
    reconstruct_dataset(&data, cfg, &th)
}
