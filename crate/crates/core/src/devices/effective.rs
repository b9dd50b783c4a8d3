use crate::error::{invalid, Result};
use crate::fock::{matrix_log, GreenMatrix, LiouvillianMatrix};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// How a generator is extracted from a finite-time Green matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMethod {
    /// log(G)/τ
    #[default]
    MatrixLog,
    /// (G − I)/τ
    FiniteDifference,
}

pub fn effective_liouvillian(g: &GreenMatrix, method: ExtractionMethod) -> Result<LiouvillianMatrix> {
    if !(g.tau() > 0.0) {
        return invalid(format!("effective liouvillian: tau = {} must be positive", g.tau()));
    }
    match method {
        ExtractionMethod::MatrixLog => matrix_log(g),
        ExtractionMethod::FiniteDifference => {
            let n = g.dim();
            LiouvillianMatrix::from_estimate((g.matrix() - DMatrix::<f64>::identity(n, n)) / g.tau())
        }
    }
}
