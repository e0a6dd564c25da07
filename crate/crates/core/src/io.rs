//! File formats. Every file written here starts with a header block naming the
//! tool version and the SHA-256 of the canonical JSON form of the run config:
//! `#`-comment lines for CSV, a `meta` object for JSON.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::banded::BandMatrix;
use crate::blowup::{OscillationSweep, TracePoint};
use crate::discretize::{DiscreteOperator, Eigenbasis, Grid};
use crate::error::{invalid, Result};
use crate::geometry::FoliationProfile;
use crate::solvers::{DmOutcome, Sweep};
use crate::variational::SolutionRecord;

pub const TOOL: &str = "paneitz-lab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
}

impl Meta {
    pub fn new(config_sha256: impl Into<String>) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            config_sha256: config_sha256.into(),
        }
    }

    /// Meta for `cfg`, hashed with [`config_hash`].
    pub fn for_config<T: Serialize>(cfg: &T) -> Result<Self> {
        Ok(Self::new(config_hash(cfg)?))
    }

    fn comment_block(&self) -> String {
        format!(
            "# {} {}\n# config-sha256 {}\n",
            self.tool, self.version, self.config_sha256
        )
    }
}

/// SHA-256 (hex) of `cfg` serialized as JSON with sorted keys.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    // Value maps are ordered, so re-serializing gives a canonical byte string
    let canonical = serde_json::to_string(&serde_json::to_value(cfg)?)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

/// Shortest round-trip text for `x`, switching to exponent form outside `[1e-4, 1e15)`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes a CSV with the header block, a column header and `rows`.
pub fn write_csv<I, R>(path: &Path, meta: &Meta, columns: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut out = create(path)?;
    out.write_all(meta.comment_block().as_bytes())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct WithMeta<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: &'a T,
}

/// Writes `{ "meta": …, <fields of body> }`, pretty-printed.
pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, body: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, &WithMeta { meta, body })?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Solution record as stored on disk, with the problem data it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFile {
    pub profile: String,
    #[serde(rename = "N")]
    pub cells: usize,
    pub alpha: f64,
    pub beta: f64,
    pub q: f64,
    #[serde(rename = "I")]
    pub i_value: f64,
    #[serde(rename = "E")]
    pub e_value: f64,
    pub residual: f64,
    pub sign_changes: usize,
    pub solver: String,
    pub iterations: usize,
    pub converged: bool,
    pub trivial: bool,
    pub u: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub u_lo: Vec<f64>,
}

impl RecordFile {
    pub fn new(op: &DiscreteOperator, rec: &SolutionRecord) -> Self {
        Self {
            profile: op.grid.profile.clone(),
            cells: op.len(),
            alpha: op.coeffs.alpha,
            beta: op.coeffs.beta,
            q: op.coeffs.q,
            i_value: rec.i_value,
            e_value: rec.e_value,
            residual: rec.residual,
            sign_changes: rec.sign_changes,
            solver: rec.solver.clone(),
            iterations: rec.iterations,
            converged: rec.converged,
            trivial: rec.trivial,
            u: rec.u.clone(),
            u_lo: rec.u_lo.clone(),
        }
    }
}

#[derive(Deserialize)]
struct RecordOnDisk {
    #[allow(dead_code)]
    meta: Meta,
    #[serde(flatten)]
    record: RecordFile,
}

pub fn write_record(path: &Path, meta: &Meta, op: &DiscreteOperator, rec: &SolutionRecord) -> Result<()> {
    write_json(path, meta, &RecordFile::new(op, rec))
}

pub fn read_record(path: &Path) -> Result<RecordFile> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str::<RecordOnDisk>(&text)?.record)
}

/// Plot-ready `t,u` table.
pub fn write_profile_values(path: &Path, meta: &Meta, grid: &Grid, u: &[f64]) -> Result<()> {
    grid.check(u)?;
    write_csv(
        path,
        meta,
        &["t", "u"],
        grid.t.iter().zip(u).map(|(t, v)| [fmt_f64(*t), fmt_f64(*v)]),
    )
}

#[derive(Serialize)]
struct SweepFile<'a> {
    profile: &'a str,
    #[serde(rename = "N")]
    cells: usize,
    alpha: f64,
    beta: f64,
    q: f64,
    records: Vec<RecordFile>,
}

/// `records.json` (deduplicated records) and `summary.csv` (one row per `m`).
pub fn write_sweep(dir: &Path, meta: &Meta, op: &DiscreteOperator, sweep: &Sweep) -> Result<()> {
    let body = SweepFile {
        profile: &op.grid.profile,
        cells: op.len(),
        alpha: op.coeffs.alpha,
        beta: op.coeffs.beta,
        q: op.coeffs.q,
        records: sweep.records.iter().map(|r| RecordFile::new(op, r)).collect(),
    };
    write_json(&dir.join("records.json"), meta, &body)?;
    write_csv(
        &dir.join("summary.csv"),
        meta,
        &["m", "d_m", "I", "E", "residual", "sign_changes", "converged"],
        sweep.rows.iter().map(summary_row),
    )
}

fn summary_row(row: &DmOutcome) -> [String; 7] {
    let r = &row.refined;
    [
        row.m.to_string(),
        fmt_f64(row.d_m),
        fmt_f64(r.i_value),
        fmt_f64(r.e_value),
        fmt_f64(r.residual),
        r.sign_changes.to_string(),
        r.converged.to_string(),
    ]
}

/// `gamma,classification,radius`.
pub fn write_oscillation(path: &Path, meta: &Meta, sweep: &OscillationSweep) -> Result<()> {
    write_csv(
        path,
        meta,
        &["gamma", "classification", "radius"],
        sweep.outcomes.iter().map(|o| {
            [
                fmt_f64(o.gamma),
                o.classification.label().to_string(),
                fmt_f64(o.classification.radius()),
            ]
        }),
    )
}

/// `r,w,w1,w2,w3`.
pub fn write_trace(path: &Path, meta: &Meta, trace: &[TracePoint]) -> Result<()> {
    write_csv(
        path,
        meta,
        &["r", "w", "w1", "w2", "w3"],
        trace.iter().map(|p| [p.r, p.w, p.w1, p.w2, p.w3].map(fmt_f64)),
    )
}

/// Nonzero band entries as `row,col,value`.
pub fn write_triplets(path: &Path, meta: &Meta, m: &BandMatrix) -> Result<()> {
    write_csv(
        path,
        meta,
        &["row", "col", "value"],
        m.triplets()
            .into_iter()
            .map(|(i, j, v)| [i.to_string(), j.to_string(), fmt_f64(v)]),
    )
}

/// Long format `k,lambda,t,value`, one line per eigenvector entry.
pub fn write_eigenpairs(path: &Path, meta: &Meta, grid: &Grid, basis: &Eigenbasis) -> Result<()> {
    let rows = basis.values.iter().zip(&basis.vectors).enumerate().flat_map(|(k, (lam, vec))| {
        grid.t
            .iter()
            .zip(vec)
            .map(move |(t, v)| [k.to_string(), fmt_f64(*lam), fmt_f64(*t), fmt_f64(*v)])
    });
    write_csv(path, meta, &["k", "lambda", "t", "value"], rows)
}

/// `(t, log A)` samples from a CSV with header `t,logA`; `#` lines are skipped.
pub fn read_profile_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "logA" {
        return Err(invalid(format!(
            "{}: expected header \"t,logA\", got \"{}\"",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize::<(f64, f64)>() {
        out.push(rec?);
    }
    Ok(out)
}

/// Exported profile: `{name, n, m0, m1, D, samples: [{t, logA}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub name: String,
    pub n: usize,
    pub m0: usize,
    pub m1: usize,
    #[serde(rename = "D")]
    pub length: f64,
    pub samples: Vec<ProfileSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub t: f64,
    #[serde(rename = "logA")]
    pub log_a: f64,
}

impl ProfileFile {
    pub fn from_profile(p: &FoliationProfile, count: usize) -> Self {
        Self {
            name: p.name.clone(),
            n: p.n,
            m0: p.m0,
            m1: p.m1,
            length: p.length,
            samples: p
                .samples(count)
                .into_iter()
                .map(|(t, log_a)| ProfileSample { t, log_a })
                .collect(),
        }
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.log_a)).collect()
    }
}

/// Reads a profile JSON; a `meta` block, if present, is ignored.
pub fn read_profile_json(path: &Path) -> Result<ProfileFile> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{builtin_profile, load_profile, PaneitzCoefficients};

    #[test]
    fn hash_ignores_key_order() {
        let a: serde_json::Value = serde_json::from_str(r#"{"b": 1, "a": [1, 2]}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"a": [1, 2], "b": 1}"#).unwrap();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
    }

    #[test]
    fn record_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = builtin_profile("sphere_point", 5, None).unwrap();
        let op = DiscreteOperator::new(&p, 32, PaneitzCoefficients::new(5.5, 6.5625, 3.0).unwrap()).unwrap();
        let rec = SolutionRecord::evaluate(&op, vec![2.5; 32], "test", 3, 1e-8).unwrap();
        let meta = Meta::new("abc");
        let path = dir.path().join("r.json");
        write_record(&path, &meta, &op, &rec).unwrap();
        let back = read_record(&path).unwrap();
        assert_eq!(back, RecordFile::new(&op, &rec));
        let text = std::fs::read_to_string(&path).unwrap();
        for key in ["\"meta\"", "\"N\"", "\"I\"", "\"E\"", "\"sign_changes\"", "\"u\""] {
            assert!(text.contains(key), "{key}");
        }
    }

    #[test]
    fn profile_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = builtin_profile("sphere_point", 5, None).unwrap();
        let file = ProfileFile::from_profile(&p, 400);
        let meta = Meta::new("x");
        let jp = dir.path().join("p.json");
        write_json(&jp, &meta, &file).unwrap();
        assert_eq!(read_profile_json(&jp).unwrap(), file);

        let cp = dir.path().join("p.csv");
        write_csv(
            &cp,
            &meta,
            &["t", "logA"],
            file.samples.iter().map(|s| [fmt_f64(s.t), fmt_f64(s.log_a)]),
        )
        .unwrap();
        let pairs = read_profile_csv(&cp).unwrap();
        assert_eq!(pairs, file.pairs());
        let loaded = load_profile("table", &pairs, 5, 0, 0, p.length).unwrap();
        assert!((loaded.mean_curvature(1.0) - p.mean_curvature(1.0)).abs() < 1e-4);
    }

    #[test]
    fn float_text_round_trips() {
        for x in [0.0, 1.5, -2.5e-15, 3.0e20, 1e-4, 123456.789, f64::MIN_POSITIVE] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(5.643720839988805e-15), "5.643720839988805e-15");
        assert_eq!(fmt_f64(101.5), "101.5");
    }

    #[test]
    fn csv_header_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x,y\n1,2\n").unwrap();
        assert!(read_profile_csv(&path).is_err());
    }
}
