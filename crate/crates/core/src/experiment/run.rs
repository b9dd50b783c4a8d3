use super::config::{DeviceSpec, ExperimentConfig, GreenSource};
use crate::devices::{build_pia, effective_liouvillian, laser_green_ode, laser_green_qjump, ExtractionMethod, OdeOptions};
use crate::error::{Error, Result};
use crate::fock::{apply_green, matrix_exp, read_matrix_csv, GreenMatrix, LiouvillianMatrix};
use crate::homodyne::{cumulative, DiagonalEstimate, Estimator, QuadratureBatch, QuadratureSampler};
use crate::rng::{derive_seed, stream_id, substream};
use crate::twinbeam::{conditional_state, outcome_distribution, OutcomeRecord, OutcomeTable};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Theoretical device: its Green matrix and generator.
#[derive(Debug, Clone)]
pub struct TheoryModel {
    pub green: GreenMatrix,
    pub liouvillian: LiouvillianMatrix,
    /// Standard errors of `green` when it is itself a Monte Carlo estimate.
    pub green_stderr: Option<DMatrix<f64>>,
}

impl TheoryModel {
    pub fn dim(&self) -> usize {
        self.green.dim()
    }

    pub fn tau(&self) -> f64 {
        self.green.tau()
    }
}

/// Builds the theoretical model named by the configuration.
pub fn theory(cfg: &ExperimentConfig) -> Result<TheoryModel> {
    let model = match &cfg.device {
        DeviceSpec::Pia(p) => {
            let l = build_pia(&p.params(), p.dim)?;
            let g = matrix_exp(&l, p.tau)?;
            TheoryModel { green: g, liouvillian: l, green_stderr: None }
        }
        DeviceSpec::Laser(d) => {
            let (green, stderr) = match d.green {
                GreenSource::Ode => (laser_green_ode(&d.params(), d.dim, d.init, &OdeOptions::default())?, None),
                GreenSource::QuantumJump => {
                    let q = laser_green_qjump(&d.params(), d.dim, d.init, d.trajectories, derive_seed(cfg.seed, "trajectories"))?;
                    (q.green, Some(q.stderr))
                }
            };
            let l = effective_liouvillian(&green, ExtractionMethod::MatrixLog)?;
            TheoryModel { green, liouvillian: l, green_stderr: stderr }
        }
        DeviceSpec::GreenCsv(c) => {
            let file = std::fs::File::open(&c.path).map_err(|e| Error::InvalidInput(format!("device: cannot open {}: {e}", c.path.display())))?;
            let m = read_matrix_csv(file)?;
            if m.value.nrows() != m.value.ncols() {
                return Err(Error::InvalidInput(format!("device: {} is not square", c.path.display())));
            }
            let green = GreenMatrix::new(m.value, c.tau)?;
            let l = effective_liouvillian(&green, ExtractionMethod::MatrixLog)?;
            TheoryModel { green, liouvillian: l, green_stderr: m.sigma }
        }
    };
    cfg.check_dim(model.dim())?;
    Ok(model)
}

/// Homodyne data for one conditioning outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeData {
    pub n: usize,
    pub p_n: f64,
    /// One batch per block, in block order.
    pub batches: Vec<QuadratureBatch>,
}

impl OutcomeData {
    pub fn samples(&self) -> u64 {
        self.batches.iter().map(|b| b.samples.len() as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub outcomes: Vec<OutcomeData>,
}

impl Dataset {
    pub fn samples(&self) -> u64 {
        self.outcomes.iter().map(|o| o.samples()).sum()
    }
}

fn split(total: u64, blocks: usize, b: usize) -> u64 {
    total / blocks as u64 + u64::from((b as u64) < total % blocks as u64)
}

/// Samples assigned to each retained outcome.
pub fn allocation(cfg: &ExperimentConfig, outcomes: &[usize]) -> Vec<u64> {
    let per = cfg.homodyne.samples_per_state;
    if !cfg.reconstruction.weighted_allocation || per == 0 {
        return vec![per; outcomes.len()];
    }
    let p: Vec<f64> = outcomes.iter().map(|&n| outcome_distribution(&cfg.twin_beam, n)).collect();
    let total = per as f64 * outcomes.len() as f64;
    let norm: f64 = p.iter().sum();
    let least = 2 * cfg.homodyne.blocks as u64;
    p.iter().map(|pn| ((total * pn / norm).round() as u64).max(least)).collect()
}

/// Output photon distribution for conditioning outcome `n`.
pub fn output_distribution(theory: &TheoryModel, cfg: &ExperimentConfig, n: usize) -> Result<Vec<f64>> {
    let input = conditional_state(&cfg.twin_beam, n, theory.dim())?;
    if input.leakage() > 1e-9 {
        log::warn!("outcome {n}: conditional input loses {:.2e} beyond dim {}", input.leakage(), theory.dim());
    }
    Ok(apply_green(&theory.green, &input)?.probs().to_vec())
}

/// Draws the homodyne data for every retained outcome.
///
/// Block b of outcome n uses its own substream, so the dataset does not depend on
/// how tasks are scheduled across workers.
pub fn run_experiment(cfg: &ExperimentConfig, theory: &TheoryModel) -> Result<Dataset> {
    cfg.validate()?;
    let outcomes = cfg.retained_outcomes();
    let counts = allocation(cfg, &outcomes);
    if counts.iter().all(|c| *c == 0) {
        return Ok(Dataset { outcomes: Vec::new() });
    }
    let sampler = QuadratureSampler::new(theory.dim());
    let cums: Vec<Vec<f64>> = outcomes
        .iter()
        .map(|&n| output_distribution(theory, cfg, n).map(|r| cumulative(&r)))
        .collect::<Result<_>>()?;
    let seed = derive_seed(cfg.seed, "homodyne");
    let blocks = cfg.homodyne.blocks;
    let eta = cfg.homodyne.eta_h;
    let tasks: Vec<(usize, usize)> = (0..outcomes.len()).flat_map(|i| (0..blocks).map(move |b| (i, b))).collect();
    let batches: Vec<QuadratureBatch> = tasks
        .par_iter()
        .map(|&(i, b)| {
            let n = outcomes[i];
            let mut rng = substream(seed, stream_id(n as u32, b as u32));
            let len = split(counts[i], blocks, b);
            let xs = (0..len).map(|_| sampler.sample(&cums[i], eta, &mut rng)).collect();
            QuadratureBatch { samples: xs, block_id: b, outcome_n: n }
        })
        .collect();
    let mut it = batches.into_iter();
    let outcomes = outcomes
        .iter()
        .map(|&n| OutcomeData { n, p_n: outcome_distribution(&cfg.twin_beam, n), batches: it.by_ref().take(blocks).collect() })
        .collect();
    Ok(Dataset { outcomes })
}

/// Estimated output distribution of one outcome, as stored between pipeline stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeEstimate {
    pub n: usize,
    pub p_n: f64,
    pub samples: u64,
    pub r: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Per-block compensated estimates; empty for noise-free tables.
    #[serde(default)]
    pub block_r: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<Vec<Vec<f64>>>,
}

impl OutcomeEstimate {
    fn from_estimate(n: usize, p_n: f64, e: DiagonalEstimate) -> Self {
        let cov = e.cov.map(|c| c.row_iter().map(|row| row.iter().copied().collect()).collect());
        Self { n, p_n, samples: e.samples, r: e.r, sigma: e.sigma, block_r: e.block_r, cov }
    }

    pub fn record(&self) -> OutcomeRecord {
        OutcomeRecord { n: self.n, counts: self.samples, r: self.r.clone(), sigma: self.sigma.clone(), cov: self.cov.clone() }
    }

    /// Noise-free estimate from the theoretical output distribution.
    pub fn exact(theory: &TheoryModel, cfg: &ExperimentConfig, n: usize) -> Result<Self> {
        let mut r = output_distribution(theory, cfg, n)?;
        r.resize(cfg.homodyne.k_max + 1, 0.0);
        let sigma = vec![0.0; r.len()];
        Ok(Self { n, p_n: outcome_distribution(&cfg.twin_beam, n), samples: 0, r, sigma, block_r: Vec::new(), cov: None })
    }
}

/// Runs the pattern-function estimator on every outcome that has data.
pub fn estimate_outcomes(data: &Dataset, cfg: &ExperimentConfig) -> Result<Vec<OutcomeEstimate>> {
    let with_data: Vec<&OutcomeData> = data.outcomes.iter().filter(|o| o.samples() > 0).collect();
    if with_data.is_empty() {
        return Ok(Vec::new());
    }
    let est = Estimator::new(&cfg.homodyne, cfg.reconstruction.covariance)?;
    with_data
        .par_iter()
        .map(|o| Ok(OutcomeEstimate::from_estimate(o.n, o.p_n, est.estimate(&o.batches)?)))
        .collect()
}

/// Outcome table in the form the inversion consumes.
pub fn outcome_table(estimates: &[OutcomeEstimate]) -> OutcomeTable {
    let mut t = OutcomeTable::default();
    for e in estimates {
        t.insert(e.record());
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::PiaDevice;
    use crate::homodyne::HomodyneConfig;
    use crate::rng::with_workers;
    use crate::twinbeam::{predict_outputs, TwinBeamConfig};

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            device: DeviceSpec::Pia(PiaDevice { a_gain: 0.194, b_loss: 0.00945, tau: 0.1, dim: 32 }),
            twin_beam: TwinBeamConfig { kappa2: 0.36, eta_d: 0.8, n_outcome_max: 6 },
            homodyne: HomodyneConfig { eta_h: 0.85, k_max: 6, samples_per_state: 2_000, blocks: 4 },
            reconstruction: serde_json::from_str(r#"{"size": 5, "guard": 1}"#).unwrap(),
            seed: 11,
            workers: None,
            output_dir: None,
        }
    }

    #[test]
    fn outcomes_and_blocks_are_complete() {
        let cfg = small();
        let th = theory(&cfg).unwrap();
        let data = run_experiment(&cfg, &th).unwrap();
        let ns: Vec<usize> = data.outcomes.iter().map(|o| o.n).collect();
        assert_eq!(ns, cfg.retained_outcomes());
        for o in &data.outcomes {
            assert_eq!(o.batches.len(), 4);
            assert_eq!(o.samples(), 2_000);
            assert!(o.batches.iter().enumerate().all(|(b, x)| x.block_id == b && x.outcome_n == o.n));
        }
    }

    #[test]
    fn zero_samples_give_empty_dataset() {
        let mut cfg = small();
        cfg.homodyne.samples_per_state = 0;
        let th = theory(&cfg).unwrap();
        let data = run_experiment(&cfg, &th).unwrap();
        assert!(data.outcomes.is_empty());
        assert!(estimate_outcomes(&data, &cfg).unwrap().is_empty());
    }

    #[test]
    fn identical_across_worker_counts() {
        let cfg = small();
        let th = theory(&cfg).unwrap();
        let a = with_workers(1, || run_experiment(&cfg, &th).unwrap());
        let b = with_workers(8, || run_experiment(&cfg, &th).unwrap());
        assert_eq!(a, b);
        let ea = with_workers(1, || estimate_outcomes(&a, &cfg).unwrap());
        let eb = with_workers(8, || estimate_outcomes(&b, &cfg).unwrap());
        assert_eq!(ea, eb);
    }

    #[test]
    fn weighted_allocation_follows_p_n() {
        let mut cfg = small();
        cfg.reconstruction.weighted_allocation = true;
        let outs = cfg.retained_outcomes();
        let c = allocation(&cfg, &outs);
        assert!(c.windows(2).all(|w| w[0] >= w[1]));
        assert!(c.iter().all(|x| *x >= 8));
    }

    #[test]
    fn exact_estimates_match_prediction() {
        let cfg = small();
        let th = theory(&cfg).unwrap();
        let e = OutcomeEstimate::exact(&th, &cfg, 2).unwrap();
        let want = predict_outputs(&th.green, &cfg.twin_beam, 2, 1e-9).unwrap().values;
        for k in 0..=cfg.homodyne.k_max {
            assert!((e.r[k] - want[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn estimates_track_predictions() {
        // PIA output on the n = 0 input, κ² = 0.36, η_D = 0.8
        let mut cfg = small();
        cfg.homodyne.samples_per_state = 400_000;
        cfg.homodyne.k_max = 8;
        cfg.twin_beam.n_outcome_max = 0;
        cfg.reconstruction = serde_json::from_str(r#"{"size": 1, "guard": 0, "outcome_floor": 0.5, "covariance": true}"#).unwrap();
        let th = theory(&cfg).unwrap();
        let est = estimate_outcomes(&run_experiment(&cfg, &th).unwrap(), &cfg).unwrap();
        let want = predict_outputs(&th.green, &cfg.twin_beam, 0, 1e-9).unwrap().values;
        let e = &est[0];
        let cov = e.cov.as_ref().unwrap();
        let within = (0..=8).filter(|&k| (e.r[k] - want[k]).abs() <= 3.0 * cov[k][k].sqrt()).count();
        assert!(within * 100 >= 95 * 9, "{within} of 9 within 3σ");
    }
}
