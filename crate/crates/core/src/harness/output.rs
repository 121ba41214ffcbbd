//! Result files. CSV files open with a `# seed=... config_hash=...` line;
//! JSON documents carry the same data under `meta`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::control::CompiledProgram;
use crate::memory::grid_csv;

use super::config::Setup;
use super::experiments::{EfficiencyScan, QubitRow, RunReport, SlotRecord};
use super::HarnessError;

type Column = (&'static str, fn(&SlotRecord) -> f64);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Meta {
    pub seed: u64,
    pub config_hash: String,
}

impl Meta {
    pub fn from_setup(setup: &Setup) -> Self {
        Self {
            seed: setup.config.seed,
            config_hash: setup.config_hash.clone(),
        }
    }

    pub fn csv_line(&self) -> String {
        format!("# seed={} config_hash={}\n", self.seed, self.config_hash)
    }

    pub fn csv(&self, body: &str) -> String {
        self.csv_line() + body
    }

    pub fn json<T: Serialize>(&self, data: &T) -> String {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            meta: &'a Meta,
            #[serde(flatten)]
            data: &'a T,
        }
        let mut s = serde_json::to_string_pretty(&Doc { meta: self, data }).expect("serializable");
        s.push('\n');
        s
    }
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

/// `characterization.json` plus 15 × 7 heatmaps of fidelity, standard
/// deviation, efficiency, bound and margin.
pub fn write_characterization(
    meta: &Meta,
    report: &RunReport,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let grids: [Column; 5] = [
        ("fidelity.csv", |r| r.mean_fidelity),
        ("std_dev.csv", |r| r.std_dev),
        ("efficiency.csv", |r| r.efficiency),
        ("classical_bound.csv", |r| r.classical_bound),
        ("margin.csv", |r| r.margin),
    ];
    let mut paths = vec![write_file(
        dir,
        "characterization.json",
        &meta.json(report),
    )?];
    for (name, f) in grids {
        paths.push(write_file(
            dir,
            name,
            &meta.csv(&grid_csv(&report.grid(f))),
        )?);
    }
    Ok(paths)
}

/// 15 × 14 heatmaps. `efficiency_map.csv` loads back as an efficiency map.
pub fn write_efficiency_scan(
    meta: &Meta,
    scan: &EfficiencyScan,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let with_t = |rows: &[Vec<f64>]| {
        meta.csv(&format!(
            "# t_ref_us={}\n# shots={}\n{}",
            scan.t_us,
            scan.shots,
            grid_csv(rows)
        ))
    };
    Ok(vec![
        write_file(dir, "efficiency_map.csv", &with_t(&scan.estimates))?,
        write_file(dir, "efficiency_std_error.csv", &with_t(&scan.std_errors))?,
    ])
}

pub const RANDOM_ACCESS_CSV_HEADER: &str = "order,qubit,row,k,write_time_us,read_time_us,storage_time_us,efficiency,mean_fidelity,std_dev,single_photon_bound,coherent_bound,efficiency_bound,n_min,margin,sigmas";

pub fn random_access_csv(rows: &[QubitRow]) -> String {
    let mut s = String::new();
    writeln!(s, "{RANDOM_ACCESS_CSV_HEADER}").unwrap();
    for r in rows {
        let sigmas = r.sigmas.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.order,
            r.qubit_id,
            r.row,
            r.k,
            r.write_time_us,
            r.read_time_us,
            r.storage_time_us,
            r.efficiency,
            r.mean_fidelity,
            r.std_dev,
            r.single_photon_bound,
            r.coherent_bound,
            r.efficiency_bound,
            r.n_min,
            r.margin,
            sigmas
        )
        .unwrap();
    }
    s
}

pub fn write_random_access(
    meta: &Meta,
    rows: &[QubitRow],
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    #[derive(Serialize)]
    struct Qubits<'a> {
        qubits: &'a [QubitRow],
    }
    Ok(vec![
        write_file(
            dir,
            "random_access.json",
            &meta.json(&Qubits { qubits: rows }),
        )?,
        write_file(
            dir,
            "random_access.csv",
            &meta.csv(&random_access_csv(rows)),
        )?,
    ])
}

pub fn write_bounds(meta: &Meta, csv: &str, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    Ok(vec![write_file(dir, "bounds.csv", &meta.csv(csv))?])
}

pub fn write_compiled(
    meta: &Meta,
    compiled: &CompiledProgram,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    Ok(vec![write_file(
        dir,
        "compiled.json",
        &meta.json(compiled),
    )?])
}
