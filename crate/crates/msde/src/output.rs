//! CSV tables, JSON reports and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use msde_core::ldp::{LaplaceEstimate, McEstimate, SlopeReport};
use msde_core::{RateResult, SolutionPath};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::HarnessError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects artifacts under one output directory and records their names.
#[derive(Debug)]
pub struct ArtifactDir {
    root: PathBuf,
    written: Vec<String>,
}

impl ArtifactDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, HarnessError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| HarnessError::io(&root, e))?;
        Ok(ArtifactDir { root, written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn artifacts(&self) -> &[String] {
        &self.written
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.root.join(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), HarnessError> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Failed(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))
    }

    fn write_rows(&mut self, name: &str, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<(), HarnessError> {
        let path = self.path(name);
        let err = |e: csv::Error| HarnessError::Failed(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(err)?;
        w.write_record(header).map_err(err)?;
        for row in rows {
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| HarnessError::io(&path, e))
    }

    /// Columns `step, t, X_1..X_m, K_1..K_m, totalvar`.
    pub fn write_path_csv(&mut self, name: &str, path: &SolutionPath) -> Result<(), HarnessError> {
        let m = path.dim();
        let mut header = vec!["step".to_string(), "t".to_string()];
        header.extend((1..=m).map(|i| format!("X_{i}")));
        header.extend((1..=m).map(|i| format!("K_{i}")));
        header.push("totalvar".into());
        let grid = path.grid();
        let rows = (0..path.len()).map(|k| {
            let mut r = vec![k.to_string(), grid.time(k).to_string()];
            r.extend(path.state(k).iter().map(f64::to_string));
            r.extend(path.compensator(k).iter().map(f64::to_string));
            r.push(path.total_variation()[k].to_string());
            r
        });
        self.write_rows(name, &header, rows)
    }

    /// Columns `epsilon, p_hat, stderr, neg_eps_log_p, ess`.
    pub fn write_estimates_csv(&mut self, name: &str, estimates: &[McEstimate]) -> Result<(), HarnessError> {
        let header: Vec<String> = ["epsilon", "p_hat", "stderr", "neg_eps_log_p", "ess"].map(String::from).to_vec();
        let rows = estimates.iter().map(|e| {
            vec![e.epsilon.to_string(), e.p_hat.to_string(), e.stderr.to_string(), e.neg_eps_log_p.to_string(), e.ess.to_string()]
        });
        self.write_rows(name, &header, rows)
    }

    /// Columns `epsilon, value, n_paths`.
    pub fn write_laplace_csv(&mut self, name: &str, estimates: &[LaplaceEstimate]) -> Result<(), HarnessError> {
        let header: Vec<String> = ["epsilon", "value", "n_paths"].map(String::from).to_vec();
        let rows = estimates.iter().map(|e| vec![e.epsilon.to_string(), e.value.to_string(), e.n_paths.to_string()]);
        self.write_rows(name, &header, rows)
    }

    /// `manifest.json`: subcommand, effective seed, SHA-256 of the config
    /// bytes, crate versions and the artifacts written before it.
    pub fn write_manifest(&mut self, subcommand: &str, config_bytes: &[u8], seed: u64) -> Result<(), HarnessError> {
        let manifest = json!({
            "subcommand": subcommand,
            "config_sha256": sha256_hex(config_bytes),
            "seed": seed,
            "versions": {
                "msde": env!("CARGO_PKG_VERSION"),
                "msde-core": env!("CARGO_PKG_VERSION"),
            },
            "artifacts": self.written.clone(),
        });
        self.write_json("manifest.json", &manifest)
    }
}

/// Finite numbers as JSON numbers, the rest as strings (`"inf"`, `"NaN"`).
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

pub fn rate_json(r: &RateResult) -> Value {
    let grid = r.path.grid();
    json!({
        "value": num(r.value),
        "residual": num(r.residual),
        "iterations": r.iterations,
        "converged": r.converged,
        "gradient_norm": num(r.gradient_norm),
        "endpoint": r.path.endpoint(),
        "control": {
            "values": r.control.values(),
            "intervals": r.control.intervals(),
            "dim": r.control.dim(),
        },
        "grid": {"T": grid.horizon(), "N": grid.steps(), "M": r.control.intervals()},
    })
}

pub fn slope_json(r: &SlopeReport) -> Value {
    json!({
        "intercept": num(r.intercept),
        "slope": num(r.slope),
        "log_coefficient": r.log_coefficient.map(num),
        "epsilons": r.epsilons,
        "residuals": r.residuals,
        "rms_residual": num(r.rms_residual),
        "excluded": r.excluded,
    })
}

pub fn estimate_json(e: &McEstimate) -> Value {
    json!({
        "epsilon": e.epsilon,
        "event_id": e.event_id,
        "n_paths": e.n_paths,
        "p_hat": num(e.p_hat),
        "stderr": num(e.stderr),
        "neg_eps_log_p": num(e.neg_eps_log_p),
        "tilted": e.tilted,
        "ess": num(e.ess),
        "degenerate": e.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use msde_core::{BrownianPath, Model, MonotoneOperator, TimeGrid};

    #[test]
    fn hash_is_hex_sha256() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn path_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = ArtifactDir::create(dir.path()).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let model = Model::brownian(2).unwrap();
        let p = msde_core::sim::simulate(&model, &MonotoneOperator::zero(2).unwrap(), &[0.0, 0.0], 1.0, &BrownianPath::generate(grid, 2, 1, 0)).unwrap();
        out.write_path_csv("path.csv", &p).unwrap();
        let text = fs::read_to_string(dir.path().join("path.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,t,X_1,X_2,K_1,K_2,totalvar");
        assert_eq!(lines.len(), 6);
        assert!(lines[1].starts_with("0,0,0,0,0,0,0"));
        assert!(lines[5].starts_with("4,1,"));
    }
}
