//! Plot-ready CSV and JSON writers. Numbers use Rust's shortest round-trip
//! formatting.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use cdl_core::ldp::{DeltaPoint, ErrorCurve};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const CURVE_HEADER: &str = "k,node,alpha,beta,pe,log10_pe";
pub const MC_HEADER: &str =
    "k,node,source,alpha,beta,pe,log10_pe,stderr_alpha,stderr_beta,stderr_pe";
pub const DELTA_HEADER: &str = "k,node,hypothesis,mu,delta,delta_from_moments,bound";

fn log10(ln: f64) -> f64 {
    ln / std::f64::consts::LN_10
}

pub fn exact_curves_csv<'a>(curves: impl IntoIterator<Item = &'a ErrorCurve>) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for c in curves {
        let label = c.node.label();
        for (i, &k) in c.ks.iter().enumerate() {
            let _ = writeln!(
                s,
                "{k},{label},{},{},{},{}",
                c.alpha(i),
                c.beta(i),
                c.pe(i),
                log10(c.log_pe[i])
            );
        }
    }
    s
}

/// Monte Carlo rows and the matching exact rows, told apart by `source`.
pub fn mc_curves_csv<'a>(curves: impl IntoIterator<Item = &'a ErrorCurve>) -> String {
    let mut s = String::from(MC_HEADER);
    s.push('\n');
    for c in curves {
        let label = c.node.label();
        let src = c.source.as_str();
        for (i, &k) in c.ks.iter().enumerate() {
            let _ = write!(
                s,
                "{k},{label},{src},{},{},{},{}",
                c.alpha(i),
                c.beta(i),
                c.pe(i),
                log10(c.log_pe[i])
            );
            match &c.stderr {
                Some(se) => {
                    let _ = writeln!(s, ",{},{},{}", se[i].alpha, se[i].beta, se[i].pe);
                }
                None => s.push_str(",,,\n"),
            }
        }
    }
    s
}

pub fn delta_csv(rows: &[(&str, DeltaPoint)]) -> String {
    let mut s = String::from(DELTA_HEADER);
    s.push('\n');
    for (h, p) in rows {
        let _ = writeln!(
            s,
            "{},{},{h},{},{},{},{}",
            p.k,
            p.node + 1,
            p.mu,
            p.delta,
            p.delta_from_moments,
            p.bound
        );
    }
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

#[derive(Debug, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub n_trials: Option<u64>,
    pub master_seed: Option<u64>,
    pub files: Vec<ManifestEntry>,
}

/// Collects files for one output directory and records their hashes.
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<ManifestEntry>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> io::Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.written.push(ManifestEntry {
            file: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn finish(mut self, mut manifest: Manifest) -> io::Result<()> {
        manifest.files = std::mem::take(&mut self.written);
        self.write_json("manifest.json", &manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cdl_core::ldp::{CurveNode, CurveSource, Priors};

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn curve_rows_round_trip() {
        let c = ErrorCurve::from_log_probabilities(
            CurveNode::Node(1),
            CurveSource::Exact,
            Priors::default(),
            vec![3],
            vec![0.1f64.ln()],
            vec![0.3f64.ln()],
        );
        let text = exact_curves_csv([&c]);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CURVE_HEADER));
        let cells: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(&cells[..2], &["3", "2"]);
        let pe: f64 = cells[4].parse().unwrap();
        assert_eq!(pe, c.pe(0));
        assert!((pe - 0.2).abs() < 1e-15);
    }
}
