use crate::dataset::{read_outcomes, read_raw, write_outcomes, write_raw, RAW_FILE};
use crate::{Common, Failure};
use liouvtomo::devices::{effective_liouvillian, laser_green_ode, laser_green_qjump, ExtractionMethod, OdeOptions};
use liouvtomo::experiment::{
    assemble_report, compare as compare_matrices, estimate_outcomes, from_rows, reconstruct as reconstruct_tables, run_experiment, theory as device_theory,
    write_report, CompareSummary, DeviceSpec, ExperimentConfig, ReconstructionReport, TridiagonalTest,
};
use liouvtomo::fock::{read_matrix_csv, write_matrix_csv};
use liouvtomo::homodyne::{wavefunctions, PatternQuadrature};
use liouvtomo::json::{fmt17, to_string_pretty};
use liouvtomo::rng::{derive_seed, with_workers};
use nalgebra::DMatrix;
use serde::Serialize;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Parses and validates the config before anything is written.
pub fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| Failure::config(format!("cannot read {}: {e}", common.config.display())))?;
    let mut cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", common.config.display())))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| Failure::config(format!("{}: {e}", common.config.display())))?;
    cfg.check_scale(common.paper_scale)?;
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> Result<PathBuf, Failure> {
    let dir = common.out.clone().or_else(|| cfg.output_dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn in_pool<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match workers {
        Some(n) => with_workers(n, f),
        None => f(),
    }
}

fn write_csv(path: &Path, value: &DMatrix<f64>, sigma: Option<&DMatrix<f64>>, hash: &str) -> Result<(), Failure> {
    let f = std::fs::File::create(path)?;
    write_matrix_csv(BufWriter::new(f), value, sigma, Some(hash))?;
    Ok(())
}

#[derive(Serialize)]
struct Timing<'a> {
    command: &'a str,
    config_hash: &'a str,
    seconds: f64,
    /// Null when the default pool was used.
    workers: Option<usize>,
}

fn write_timing(dir: &Path, command: &str, hash: &str, start: Instant, workers: Option<usize>) -> Result<(), Failure> {
    let t = Timing {
        command,
        config_hash: hash,
        seconds: start.elapsed().as_secs_f64(),
        workers,
    };
    std::fs::write(dir.join("timing.json"), to_string_pretty(&t)?)?;
    Ok(())
}

pub fn theory(common: &Common, workers: Option<usize>, laser_variants: bool) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let workers = workers.or(cfg.workers);
    let hash = cfg.hash()?;
    let th = in_pool(workers, || device_theory(&cfg))?;
    let dir = out_dir(common, &cfg)?;
    write_csv(&dir.join("G_theory.csv"), th.green.matrix(), th.green_stderr.as_ref(), &hash)?;
    write_csv(&dir.join("L_theory.csv"), th.liouvillian.matrix(), None, &hash)?;
    // the last column of an amplifier leaks past the Fock cut, so it is left out
    let sums = th.liouvillian.column_sums();
    let worst = sums[..sums.len() - 1].iter().fold(0.0f64, |a, s| a.max(s.abs()));
    println!("dim {}, tau {}, largest |column sum of L| below the cut {:.2e}", th.dim(), th.tau(), worst);

    if laser_variants {
        let DeviceSpec::Laser(d) = &cfg.device else {
            log::warn!("--laser-variants ignored for a non-laser device");
            return Ok(());
        };
        let (ode, qj) = in_pool(workers, || -> liouvtomo::Result<_> {
            let ode = laser_green_ode(&d.params(), d.dim, d.init, &OdeOptions::default())?;
            let qj = laser_green_qjump(&d.params(), d.dim, d.init, d.trajectories, derive_seed(cfg.seed, "trajectories"))?;
            Ok((ode, qj))
        })?;
        write_csv(&dir.join("G_ode.csv"), ode.matrix(), None, &hash)?;
        write_csv(&dir.join("L_ode.csv"), effective_liouvillian(&ode, ExtractionMethod::MatrixLog)?.matrix(), None, &hash)?;
        write_csv(&dir.join("G_qjump.csv"), qj.green.matrix(), Some(&qj.stderr), &hash)?;
        write_csv(&dir.join("L_qjump.csv"), effective_liouvillian(&qj.green, ExtractionMethod::MatrixLog)?.matrix(), None, &hash)?;
        println!("laser variants: {} trajectories, {} jumps", qj.n_traj, qj.jumps);
    }
    Ok(())
}

pub fn simulate(common: &Common, workers: Option<usize>, raw: bool) -> Result<(), Failure> {
    let start = Instant::now();
    let cfg = load_config(common)?;
    let workers = workers.or(cfg.workers);
    let hash = cfg.hash()?;
    let (data, estimates) = in_pool(workers, || -> liouvtomo::Result<_> {
        let th = device_theory(&cfg)?;
        let data = run_experiment(&cfg, &th)?;
        let est = estimate_outcomes(&data, &cfg)?;
        Ok((data, est))
    })?;
    let dir = out_dir(common, &cfg)?;
    std::fs::write(dir.join("config.json"), to_string_pretty(&cfg.canonical())?)?;
    write_outcomes(&dir, &hash, &estimates)?;
    if raw {
        write_raw(&dir, &hash, &data)?;
    }
    write_timing(&dir, "simulate", &hash, start, workers)?;
    println!("{} outcome files, {} samples, config {}", estimates.len(), data.samples(), &hash[..16]);
    Ok(())
}

pub fn reconstruct(common: &Common, workers: Option<usize>, data_dir: &Path) -> Result<(), Failure> {
    let start = Instant::now();
    let cfg = load_config(common)?;
    let workers = workers.or(cfg.workers);
    let hash = cfg.hash()?;
    if !data_dir.is_dir() {
        return Err(Failure::config(format!("dataset directory {} does not exist", data_dir.display())));
    }
    let mut estimates = read_outcomes(data_dir, &hash)?;
    let raw_path = data_dir.join(RAW_FILE);
    let report = in_pool(workers, || -> Result<ReconstructionReport, Failure> {
        if estimates.is_empty() && raw_path.exists() {
            log::info!("no outcome files, estimating from {}", raw_path.display());
            estimates = estimate_outcomes(&read_raw(&raw_path, &cfg)?, &cfg)?;
        }
        let th = device_theory(&cfg)?;
        let rec = reconstruct_tables(&estimates, &cfg, th.tau())?;
        Ok(assemble_report(&cfg, &th, &estimates, &rec)?)
    })?;
    let dir = out_dir(common, &cfg)?;
    write_report(&dir, &report)?;
    write_timing(&dir, "reconstruct", &hash, start, workers)?;
    print_summary("L", &report.summary);
    if let Some(t) = &report.tridiagonality {
        print_tridiagonal(t);
    }
    if let Some(f) = &report.extraction.fallback {
        println!("extraction fallback: {f}");
    }
    Ok(())
}

fn print_summary(what: &str, s: &CompareSummary) {
    println!(
        "{what}: {}/{} within 3 sigma ({:.3}), rmse {}, max |z| {:.3}, flagged {:?}",
        s.within_3sigma, s.elements, s.fraction_within_3sigma, fmt17(s.rmse), s.max_abs_z, s.flagged
    );
}

fn print_tridiagonal(t: &TridiagonalTest) {
    println!("off-tridiagonal chi2 {:.3} on {} dof ({}), p = {:.4}", t.chi2, t.dof, t.method, t.p_value);
}

#[derive(Serialize)]
struct CompareFile {
    config_hash: String,
    theory: String,
    liouvillian: CompareSummary,
    green: CompareSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    tridiagonality: Option<TridiagonalTest>,
}

pub fn compare(report_path: &Path, theory: Option<&Path>, out: Option<&Path>) -> Result<(), Failure> {
    let text = std::fs::read_to_string(report_path).map_err(|e| Failure::config(format!("cannot read {}: {e}", report_path.display())))?;
    let report: ReconstructionReport = serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", report_path.display())))?;
    let c = report.truncation.compare_size;
    let lead = |m: &DMatrix<f64>| -> Result<DMatrix<f64>, Failure> {
        if m.nrows() < c || m.ncols() < c {
            return Err(Failure::config(format!("matrix is {}x{}, compare block is {c}x{c}", m.nrows(), m.ncols())));
        }
        Ok(m.view((0, 0), (c, c)).into_owned())
    };
    let (l_theory, source) = match theory {
        Some(p) => {
            let f = std::fs::File::open(p).map_err(|e| Failure::config(format!("cannot read {}: {e}", p.display())))?;
            (read_matrix_csv(f)?.value, p.display().to_string())
        }
        None => (from_rows(&report.l_theory), "report".to_string()),
    };
    let summary = compare_matrices(&lead(&from_rows(&report.l_hat))?, &lead(&from_rows(&report.l_sigma))?, &lead(&l_theory)?)?;
    let file = CompareFile {
        config_hash: report.config_hash.clone(),
        theory: source,
        liouvillian: summary,
        green: report.green_summary.clone(),
        tridiagonality: report.tridiagonality.clone(),
    };
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("summary.json"), to_string_pretty(&file)?)?;
    println!("config {}", &file.config_hash[..16.min(file.config_hash.len())]);
    print_summary("L", &file.liouvillian);
    print_summary("G", &file.green);
    if let Some(t) = &file.tridiagonality {
        print_tridiagonal(t);
    }
    Ok(())
}

/// Simpson rule for ∫ f_n ψ_m² over [-a, a].
fn biorthogonality(quad: &PatternQuadrature, n_max: usize) -> DMatrix<f64> {
    let (a, steps) = (14.0, 14_000usize);
    let h = 2.0 * a / steps as f64;
    let mut m = DMatrix::zeros(n_max + 1, n_max + 1);
    for i in 0..=steps {
        let x = -a + i as f64 * h;
        let w = if i == 0 || i == steps { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 } * h / 3.0;
        let f = quad.eval(x);
        let psi = wavefunctions(n_max, x);
        for n in 0..=n_max {
            for k in 0..=n_max {
                m[(n, k)] += w * f[n] * psi[k] * psi[k];
            }
        }
    }
    m
}

pub fn patterns(n_max: usize, x_max: f64, points: usize, out: Option<&Path>) -> Result<(), Failure> {
    if !(x_max > 0.0 && x_max.is_finite()) || points < 2 {
        return Err(Failure::config(format!("patterns: need x_max > 0 and at least 2 points (got {x_max}, {points})")));
    }
    let quad = PatternQuadrature::new(n_max);
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    let mut w = BufWriter::new(std::fs::File::create(dir.join("patterns.csv"))?);
    let header: Vec<String> = std::iter::once("x".to_string()).chain((0..=n_max).map(|n| format!("f{n}"))).collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..points {
        let x = -x_max + 2.0 * x_max * i as f64 / (points - 1) as f64;
        let row: Vec<String> = std::iter::once(fmt17(x)).chain(quad.eval(x).into_iter().map(fmt17)).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;

    let spot = n_max.min(20);
    let m = biorthogonality(&PatternQuadrature::new(spot), spot);
    let off = (0..=spot).flat_map(|n| (0..=spot).map(move |k| (n, k))).filter(|(n, k)| n != k).fold(0.0f64, |a, (n, k)| a.max(m[(n, k)].abs()));
    let diag = (0..=spot).fold(0.0f64, |a, n| a.max((m[(n, n)] - 1.0).abs()));
    println!("vacuum: integral of f0 psi0^2 = {}", fmt17(m[(0, 0)]));
    println!("biorthogonality n, m <= {spot}: max |diag - 1| {diag:.2e}, max |off-diag| {off:.2e}");
    Ok(())
}
