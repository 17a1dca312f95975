//! File emission and caching: CSV writers for grids, spectra, and peak
//! tables, a binary grid cache keyed by a canonical config hash, and the run
//! manifest.
//!
//! Float formatting uses the shortest round-trip representation, so repeated
//! runs of the same configuration produce byte-identical files.

use std::collections::BTreeMap;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::RunConfig;
use crate::demod::ComplexSpectrum;
use crate::perturbation::HarmonicSignal;
use crate::propagator::SignalGrid;
use crate::sweep::PeakTable;

const GRID_CACHE_MAGIC: &[u8; 8] = b"PMSPECG1";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cache file {path} is not a valid signal grid")]
    BadCache { path: String },
    #[error(transparent)]
    Serialize(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.display().to_string(), source }
}

/// JSON with recursively sorted object keys; the hashing base.
pub fn canonical_json(value: &serde_json::Value) -> String {
    fn sort(value: &serde_json::Value) -> serde_json::Value {
        match value {
            serde_json::Value::Object(map) => {
                let sorted: BTreeMap<&String, serde_json::Value> =
                    map.iter().map(|(k, v)| (k, sort(v))).collect();
                serde_json::to_value(sorted).expect("sorted map serializes")
            }
            serde_json::Value::Array(items) => {
                serde_json::Value::Array(items.iter().map(sort).collect())
            }
            other => other.clone(),
        }
    }
    sort(value).to_string()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the full resolved configuration.
pub fn config_hash(cfg: &RunConfig) -> Result<String, OutputError> {
    let value = serde_json::to_value(cfg)?;
    Ok(sha256_hex(canonical_json(&value).as_bytes()))
}

/// Hash of the subset of the configuration that determines the signal grid.
pub fn grid_hash(cfg: &RunConfig) -> Result<String, OutputError> {
    let value = serde_json::json!({
        "system": cfg.system,
        "pulses": cfg.pulses,
        "propagation": cfg.propagation,
        "t21_grid": cfg.t21_grid,
    });
    Ok(sha256_hex(canonical_json(&value).as_bytes()))
}

/// Run manifest: resolved configuration, its hash, and the hashes of every
/// file the run produced. Feeding a manifest back as `--config` reproduces
/// the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config_hash: String,
    pub resolved_config: RunConfig,
    /// Output file name -> sha256 of its bytes.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(subcommand: &str, cfg: &RunConfig) -> Result<Self, OutputError> {
        Ok(Self {
            tool: "pmspec".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            config_hash: config_hash(cfg)?,
            resolved_config: cfg.clone(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn record(&mut self, path: &Path) -> Result<(), OutputError> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.outputs.insert(name, sha256_hex(&bytes));
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), OutputError> {
        let value = serde_json::to_value(self)?;
        std::fs::write(path, canonical_json(&value)).map_err(io_err(path))
    }
}

/// Format a float in shortest round-trip form.
fn fmt(x: f64) -> String {
    format!("{x}")
}

/// Grid CSV: header row of tau_m values, one row per delay with t21 first.
pub fn write_grid_csv(path: &Path, grid: &SignalGrid) -> Result<(), OutputError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut header = String::from("t21");
    for tau in &grid.tau_m_values {
        header.push(',');
        header.push_str(&fmt(*tau));
    }
    writeln!(w, "{header}").map_err(io_err(path))?;
    for (i, t21) in grid.t21_values.iter().enumerate() {
        let mut line = fmt(*t21);
        for j in 0..grid.tau_m_values.len() {
            line.push(',');
            line.push_str(&fmt(grid.values[[i, j]]));
        }
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Spectrum CSV: omega, re, im.
pub fn write_spectrum_csv(path: &Path, spec: &ComplexSpectrum) -> Result<(), OutputError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "omega,re,im").map_err(io_err(path))?;
    for (omega, v) in spec.omega.iter().zip(&spec.values) {
        writeln!(w, "{},{},{}", fmt(*omega), fmt(v.re), fmt(v.im)).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Sidecar metadata next to a spectrum file.
pub fn write_spectrum_meta(
    path: &Path,
    cfg: &RunConfig,
    spec: &ComplexSpectrum,
    route: &str,
) -> Result<(), OutputError> {
    let meta = serde_json::json!({
        "config_hash": config_hash(cfg)?,
        "kappa": spec.kappa,
        "window_sigma": spec.window_sigma,
        "resolution_fwhm": spec.resolution_fwhm(),
        "route": route,
    });
    std::fs::write(path, canonical_json(&meta)).map_err(io_err(path))
}

/// Per-resonance spectra of a perturbative signal in long form:
/// omega, re, im plus a `component` column (e, f, ee, ef, ff).
pub fn write_components_csv(
    path: &Path,
    sig: &HarmonicSignal,
    window_sigma: f64,
    omega: &[f64],
) -> Result<(), OutputError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "omega,re,im,component").map_err(io_err(path))?;
    for component in &sig.components {
        let single = HarmonicSignal {
            kappa: sig.kappa,
            t21_values: sig.t21_values.clone(),
            components: vec![*component],
        };
        let spec = crate::perturbation::analytic_spectrum(&single, window_sigma, omega);
        let label = component.label.as_str().trim_start_matches("S_");
        for (omega, v) in spec.omega.iter().zip(&spec.values) {
            writeln!(w, "{},{},{},{label}", fmt(*omega), fmt(v.re), fmt(v.im))
                .map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Peak table CSV: sweep_value, label, omega_peak, re, im, route.
pub fn write_peaks_csv(path: &Path, table: &PeakTable) -> Result<(), OutputError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "sweep_value,label,omega_peak,re,im,route").map_err(io_err(path))?;
    for row in &table.rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt(row.sweep_value),
            row.label.as_str(),
            fmt(row.omega_peak),
            fmt(row.height.re),
            fmt(row.height.im),
            row.route_str(),
        )
        .map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// One comparison line between the numeric and perturbative routes.
pub struct CompareRow {
    pub label: &'static str,
    pub kappa: u32,
    pub omega_numeric: f64,
    pub numeric: C64,
    pub omega_analytic: f64,
    pub analytic: C64,
    pub rel_deviation: f64,
}

pub fn write_compare_csv(path: &Path, rows: &[CompareRow]) -> Result<(), OutputError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "label,kappa,omega_numeric,re_numeric,im_numeric,omega_analytic,re_analytic,im_analytic,rel_deviation")
        .map_err(io_err(path))?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.label,
            r.kappa,
            fmt(r.omega_numeric),
            fmt(r.numeric.re),
            fmt(r.numeric.im),
            fmt(r.omega_analytic),
            fmt(r.analytic.re),
            fmt(r.analytic.im),
            fmt(r.rel_deviation),
        )
        .map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Cache path of a signal grid under `dir`.
pub fn grid_cache_path(dir: &Path, hash: &str) -> PathBuf {
    dir.join(format!("grid-{}.bin", &hash[..16.min(hash.len())]))
}

/// Binary dump of a signal grid (little-endian f64 payload).
pub fn write_grid_cache(path: &Path, grid: &SignalGrid) -> Result<(), OutputError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let write_f64s = |w: &mut BufWriter<std::fs::File>, xs: &[f64]| -> std::io::Result<()> {
        for x in xs {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    };
    (|| -> std::io::Result<()> {
        w.write_all(GRID_CACHE_MAGIC)?;
        w.write_all(&(grid.t21_values.len() as u64).to_le_bytes())?;
        w.write_all(&(grid.tau_m_values.len() as u64).to_le_bytes())?;
        w.write_all(&grid.omega_21.to_le_bytes())?;
        w.write_all(&grid.max_norm_drift.to_le_bytes())?;
        write_f64s(&mut w, &grid.t21_values)?;
        write_f64s(&mut w, &grid.tau_m_values)?;
        write_f64s(&mut w, &grid.ref_extra_phase)?;
        write_f64s(&mut w, grid.values.as_slice().expect("grid is contiguous"))?;
        w.flush()
    })()
    .map_err(io_err(path))
}

pub fn read_grid_cache(path: &Path) -> Result<SignalGrid, OutputError> {
    let mut file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(io_err(path))?;
    let bad = || OutputError::BadCache { path: path.display().to_string() };

    if bytes.len() < 8 + 16 + 16 || &bytes[..8] != GRID_CACHE_MAGIC {
        return Err(bad());
    }
    let mut off = 8;
    let mut read_u64 = |bytes: &[u8]| -> u64 {
        let v = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        off += 8;
        v
    };
    let n_t21 = read_u64(&bytes) as usize;
    let n_tau = read_u64(&bytes) as usize;
    let mut read_f64 = |count: usize| -> Result<Vec<f64>, OutputError> {
        let need = count * 8;
        if bytes.len() < off + need {
            return Err(bad());
        }
        let out = bytes[off..off + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        off += need;
        Ok(out)
    };
    let omega_21 = read_f64(1)?[0];
    let max_norm_drift = read_f64(1)?[0];
    let t21_values = read_f64(n_t21)?;
    let tau_m_values = read_f64(n_tau)?;
    let ref_extra_phase = read_f64(n_t21)?;
    let flat = read_f64(n_t21 * n_tau)?;
    if off != bytes.len() {
        return Err(bad());
    }
    let values = Array2::from_shape_vec((n_t21, n_tau), flat).map_err(|_| bad())?;
    Ok(SignalGrid { t21_values, tau_m_values, values, omega_21, ref_extra_phase, max_norm_drift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn canonical_json_sorts_keys_recursively() {
        let v = serde_json::json!({"b": {"d": 1, "c": [ {"z": 0, "a": 1} ]}, "a": 2});
        assert_eq!(canonical_json(&v), r#"{"a":2,"b":{"c":[{"a":1,"z":0}],"d":1}}"#);
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = parse_config(r#"{"v_ee": 0.01}"#).unwrap();
        let b = parse_config(r#"{"v_ee": 0.01}"#).unwrap();
        let c = parse_config(r#"{"v_ee": 0.02}"#).unwrap();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_ne!(config_hash(&a).unwrap(), config_hash(&c).unwrap());
    }

    #[test]
    fn grid_cache_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let mut values = Array2::zeros((3, 4));
        for i in 0..3 {
            for j in 0..4 {
                values[[i, j]] = (i * 7 + j) as f64 * 0.1379 + 1e-17;
            }
        }
        let grid = SignalGrid {
            t21_values: vec![0.0, 0.5, 1.0],
            tau_m_values: vec![0.0, 1.0, 2.0, 3.0],
            values,
            omega_21: std::f64::consts::TAU * 1e-3,
            ref_extra_phase: vec![0.0, 1e-3, 2e-3],
            max_norm_drift: 3.2e-11,
        };
        let path = dir.path().join("grid.bin");
        write_grid_cache(&path, &grid).unwrap();
        let back = read_grid_cache(&path).unwrap();
        assert_eq!(back.t21_values, grid.t21_values);
        assert_eq!(back.tau_m_values, grid.tau_m_values);
        assert_eq!(back.ref_extra_phase, grid.ref_extra_phase);
        assert_eq!(back.values, grid.values);
        assert_eq!(back.omega_21.to_bits(), grid.omega_21.to_bits());
        assert_eq!(back.max_norm_drift.to_bits(), grid.max_norm_drift.to_bits());

        // corrupt magic
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_grid_cache(&path), Err(OutputError::BadCache { .. })));
    }

    #[test]
    fn manifest_records_output_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config("").unwrap();
        let file = dir.path().join("out.csv");
        std::fs::write(&file, "omega,re,im\n").unwrap();
        let mut manifest = Manifest::new("simulate", &cfg).unwrap();
        manifest.record(&file).unwrap();
        let mpath = dir.path().join("manifest.json");
        manifest.write(&mpath).unwrap();

        let loaded: Manifest =
            serde_json::from_str(&std::fs::read_to_string(&mpath).unwrap()).unwrap();
        assert_eq!(loaded.outputs["out.csv"], sha256_hex(b"omega,re,im\n"));
        assert_eq!(loaded.config_hash, config_hash(&cfg).unwrap());
    }
}
