//! Dataset directory layout: `outcome_NN.json` estimate files, optional `raw.csv`.

use crate::Failure;
use liouvtomo::experiment::{Dataset, ExperimentConfig, OutcomeData, OutcomeEstimate};
use liouvtomo::homodyne::QuadratureBatch;
use liouvtomo::json::{fmt17, to_string_pretty};
use liouvtomo::twinbeam::outcome_distribution;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub const RAW_FILE: &str = "raw.csv";

/// One estimated outcome as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeFile {
    pub config_hash: String,
    pub estimate: OutcomeEstimate,
}

pub fn outcome_path(dir: &Path, n: usize) -> PathBuf {
    dir.join(format!("outcome_{n:02}.json"))
}

pub fn write_outcomes(dir: &Path, hash: &str, estimates: &[OutcomeEstimate]) -> Result<(), Failure> {
    for e in estimates {
        let f = OutcomeFile { config_hash: hash.to_string(), estimate: e.clone() };
        std::fs::write(outcome_path(dir, e.n), to_string_pretty(&f)?)?;
    }
    Ok(())
}

/// Reads every `outcome_*.json` in `dir`, ascending in n.
pub fn read_outcomes(dir: &Path, hash: &str) -> Result<Vec<OutcomeEstimate>, Failure> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("");
        if !(name.starts_with("outcome_") && name.ends_with(".json")) {
            continue;
        }
        let text = std::fs::read_to_string(&path)?;
        let f: OutcomeFile = serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        if f.config_hash != hash {
            log::warn!("{} was written under config {}, reconstructing under {}", path.display(), &f.config_hash[..12.min(f.config_hash.len())], &hash[..12]);
        }
        out.push(f.estimate);
    }
    out.sort_by_key(|e| e.n);
    Ok(out)
}

pub fn write_raw(dir: &Path, hash: &str, data: &Dataset) -> Result<(), Failure> {
    let mut w = BufWriter::new(std::fs::File::create(dir.join(RAW_FILE))?);
    writeln!(w, "# config_hash: {hash}")?;
    writeln!(w, "outcome_n,block,x")?;
    for o in &data.outcomes {
        for b in &o.batches {
            for x in &b.samples {
                writeln!(w, "{},{},{}", o.n, b.block_id, fmt17(*x))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `outcome_n,block,x` records back into a dataset.
pub fn read_raw(path: &Path, cfg: &ExperimentConfig) -> Result<Dataset, Failure> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut groups: BTreeMap<usize, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    let mut header = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header {
            if line != "outcome_n,block,x" {
                return Err(Failure::config(format!("{}: expected header outcome_n,block,x, found {line:?}", path.display())));
            }
            header = true;
            continue;
        }
        let bad = || Failure::config(format!("{}: line {}: malformed record {line:?}", path.display(), i + 1));
        let mut parts = line.split(',');
        let n: usize = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
        let b: usize = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
        let x: f64 = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        groups.entry(n).or_default().entry(b).or_default().push(x);
    }
    let outcomes = groups
        .into_iter()
        .map(|(n, blocks)| {
            let batches = blocks.into_iter().map(|(b, xs)| QuadratureBatch::new(xs, b, n)).collect::<liouvtomo::Result<Vec<_>>>()?;
            Ok(OutcomeData { n, p_n: outcome_distribution(&cfg.twin_beam, n), batches })
        })
        .collect::<liouvtomo::Result<Vec<_>>>()?;
    Ok(Dataset { outcomes })
}
