//! File formats: yield CSV input, path CSV and binary ensemble output,
//! report CSVs with a schema line, and the JSON run manifest.
//! Byte-level layouts are described in `docs/formats.md`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crc::{PathEnsemble, PathRecord};
use crate::error::{AdmissibilityError, CrcError, Result};
use crate::estimate::YieldPanel;

pub const ENSEMBLE_MAGIC: [u8; 8] = *b"CRCENSB\0";
pub const ENSEMBLE_VERSION: u32 = 1;

/// Reads `date,tau_0.25,...` rows. Lines starting with `#` are ignored,
/// empty cells become NaN. Rows are sorted by date; duplicates are an error.
pub fn load_yield_panel(path: impl AsRef<Path>, delta: f64) -> Result<YieldPanel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CrcError::io(path, e))?;
    read_yield_panel(BufReader::new(file), delta)
}

pub fn read_yield_panel(reader: impl Read, delta: f64) -> Result<YieldPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| CrcError::Parse { line: 1, msg: e.to_string() })?
        .clone();
    let line_of = |pos: Option<&csv::Position>| pos.map(|p| p.line() as usize).unwrap_or(1);
    if header.get(0) != Some("date") {
        return Err(CrcError::Parse {
            line: 1,
            msg: "first column must be `date`".into(),
        });
    }
    let mut maturities = Vec::with_capacity(header.len() - 1);
    for col in header.iter().skip(1) {
        let tau = col
            .strip_prefix("tau_")
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| CrcError::Parse {
                line: 1,
                msg: format!("bad maturity column `{col}`, expected tau_<years>"),
            })?;
        maturities.push(tau);
    }
    if maturities.is_empty() {
        return Err(CrcError::Parse {
            line: 1,
            msg: "no maturity columns".into(),
        });
    }
    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CrcError::Parse {
            line: line_of(e.position()),
            msg: e.to_string(),
        })?;
        let line = line_of(rec.position());
        if rec.len() != header.len() {
            return Err(CrcError::Parse {
                line,
                msg: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|e| CrcError::Parse {
            line,
            msg: format!("bad date `{}`: {e}", &rec[0]),
        })?;
        let mut vals = Vec::with_capacity(maturities.len());
        for cell in rec.iter().skip(1) {
            if cell.is_empty() {
                vals.push(f64::NAN);
            } else {
                vals.push(cell.parse::<f64>().map_err(|e| CrcError::Parse {
                    line,
                    msg: format!("bad yield `{cell}`: {e}"),
                })?);
            }
        }
        rows.push((date, vals));
    }
    rows.sort_by_key(|(d, _)| *d);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(CrcError::Validation(format!("duplicated date {}", w[0].0)));
    }
    let dates = rows.iter().map(|(d, _)| *d).collect();
    let yields = rows.into_iter().flat_map(|(_, v)| v).collect();
    YieldPanel::new(dates, maturities, yields, delta)
}

/// Writes a yield panel in the input format.
pub fn write_yield_panel(path: impl AsRef<Path>, panel: &YieldPanel) -> Result<()> {
    let mut header = vec!["date".to_string()];
    header.extend(panel.maturities().iter().map(|m| format!("tau_{m}")));
    let rows = (0..panel.n_dates()).map(|t| {
        let mut row = vec![panel.dates()[t].format("%Y-%m-%d").to_string()];
        row.extend(panel.row(t).iter().map(|v| fmt_f64(*v)));
        row
    });
    write_table(path, None, &header, rows)
}

/// Shortest round-trip representation; NaN as an empty cell.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

/// Writes a CSV table, preceded by `#schema=<schema>` when given.
pub fn write_table<I, R>(path: impl AsRef<Path>, schema: Option<&str>, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CrcError::io(path, e))?;
    let mut out = BufWriter::new(file);
    if let Some(s) = schema {
        writeln!(out, "#schema={s}").map_err(|e| CrcError::io(path, e))?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header).map_err(|e| CrcError::io(path, e))?;
        for row in rows {
            w.write_record(row).map_err(|e| CrcError::io(path, e))?;
        }
        w.flush().map_err(|e| CrcError::io(path, e))?;
    }
    out.flush().map_err(|e| CrcError::io(path, e))
}

pub fn write_paths_csv(path: impl AsRef<Path>, ens: &PathEnsemble) -> Result<()> {
    let mut header: Vec<String> = ["path", "step", "t", "r", "B"].iter().map(|s| s.to_string()).collect();
    header.extend(ens.maturities.iter().map(|m| format!("y_{m}")));
    header.extend(["level", "beta", "rejected"].iter().map(|s| s.to_string()));
    let k = ens.maturities.len();
    let rows = ens.paths.iter().enumerate().flat_map(|(p, rec)| {
        (0..rec.len()).map(move |s| {
            let mut row = vec![
                p.to_string(),
                s.to_string(),
                fmt_f64(s as f64 * ens.delta),
                fmt_f64(rec.short_rate[s]),
                fmt_f64(rec.discount[s]),
            ];
            row.extend(rec.yields[s * k..(s + 1) * k].iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(rec.params[s][0]));
            row.push(fmt_f64(rec.params[s][1]));
            let rejected = rec.rejection.is_some() && s + 1 == rec.len();
            row.push(u8::from(rejected).to_string());
            row
        })
    });
    write_table(path, Some("crc.paths/1"), &header, rows)
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

/// Serialises an ensemble: header, per-path rejection block, then one
/// record `[r, B, yields.., level, beta]` per path and step, NaN-padded
/// after a rejection.
pub fn encode_ensemble(ens: &PathEnsemble) -> Vec<u8> {
    let k = ens.maturities.len();
    let steps = ens.n_steps + 1;
    let width = 4 + k;
    let mut buf = Vec::with_capacity(48 + 8 * (k + ens.paths.len() * (3 + steps * width)));
    buf.extend_from_slice(&ENSEMBLE_MAGIC);
    put_u32(&mut buf, ENSEMBLE_VERSION);
    put_u32(&mut buf, 0);
    put_u64(&mut buf, ens.paths.len() as u64);
    put_u64(&mut buf, steps as u64);
    put_u64(&mut buf, k as u64);
    put_f64(&mut buf, ens.delta);
    for &m in &ens.maturities {
        put_f64(&mut buf, m);
    }
    for rec in &ens.paths {
        match &rec.rejection {
            Some(e) => {
                put_f64(&mut buf, e.step as f64);
                put_f64(&mut buf, e.theta0);
                put_f64(&mut buf, e.theta_delta);
            }
            None => {
                put_f64(&mut buf, -1.0);
                put_f64(&mut buf, 0.0);
                put_f64(&mut buf, 0.0);
            }
        }
    }
    for rec in &ens.paths {
        for s in 0..steps {
            if s < rec.len() {
                put_f64(&mut buf, rec.short_rate[s]);
                put_f64(&mut buf, rec.discount[s]);
                for v in &rec.yields[s * k..(s + 1) * k] {
                    put_f64(&mut buf, *v);
                }
                put_f64(&mut buf, rec.params[s][0]);
                put_f64(&mut buf, rec.params[s][1]);
            } else {
                for _ in 0..width {
                    put_f64(&mut buf, f64::NAN);
                }
            }
        }
    }
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CrcError::Parse {
                line: 0,
                msg: format!("ensemble truncated at byte {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_ensemble(bytes: &[u8]) -> Result<PathEnsemble> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != ENSEMBLE_MAGIC {
        return Err(CrcError::Parse {
            line: 0,
            msg: "not an ensemble file".into(),
        });
    }
    let version = c.u32()?;
    if version != ENSEMBLE_VERSION {
        return Err(CrcError::Parse {
            line: 0,
            msg: format!("unsupported ensemble version {version}"),
        });
    }
    c.u32()?;
    let n_paths = c.u64()? as usize;
    let steps = c.u64()? as usize;
    let k = c.u64()? as usize;
    let delta = c.f64()?;
    let maturities = (0..k).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let mut rejections = Vec::with_capacity(n_paths);
    for _ in 0..n_paths {
        let step = c.f64()?;
        let theta0 = c.f64()?;
        let theta_delta = c.f64()?;
        rejections.push(if step < 0.0 {
            None
        } else {
            Some(AdmissibilityError {
                step: step as usize,
                t: step * delta,
                theta0,
                theta_delta,
            })
        });
    }
    let mut paths = Vec::with_capacity(n_paths);
    for rejection in rejections {
        let len = rejection.as_ref().map(|e| e.step + 1).unwrap_or(steps).min(steps);
        let mut rec = PathRecord {
            short_rate: Vec::with_capacity(len),
            discount: Vec::with_capacity(len),
            yields: Vec::with_capacity(len * k),
            params: Vec::with_capacity(len),
            rejection,
        };
        for s in 0..steps {
            let r = c.f64()?;
            let b = c.f64()?;
            let ys = (0..k).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
            let level = c.f64()?;
            let beta = c.f64()?;
            if s < len {
                rec.short_rate.push(r);
                rec.discount.push(b);
                rec.yields.extend(ys);
                rec.params.push([level, beta]);
            }
        }
        paths.push(rec);
    }
    Ok(PathEnsemble {
        delta,
        n_steps: steps - 1,
        maturities,
        paths,
    })
}

pub fn write_ensemble_bin(path: impl AsRef<Path>, ens: &PathEnsemble) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_ensemble(ens)).map_err(|e| CrcError::io(path, e))
}

pub fn read_ensemble_bin(path: impl AsRef<Path>) -> Result<PathEnsemble> {
    let path = path.as_ref();
    decode_ensemble(&std::fs::read(path).map_err(|e| CrcError::io(path, e))?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| CrcError::io(path, e))?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run. Contains no timestamps so that
/// repeated runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub git_describe: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// `git describe --always --dirty` of the working directory, or `unknown`.
pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// Writes `manifest.json` into `out_dir`, listing checksums of `outputs`
/// (file names relative to `out_dir`) and `inputs`.
pub fn write_reports(
    out_dir: impl AsRef<Path>,
    command: &str,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: &[PathBuf],
    outputs: &[&str],
) -> Result<RunManifest> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| CrcError::io(out_dir, e))?;
    let digest = |p: &Path, label: String| -> Result<FileDigest> {
        Ok(FileDigest {
            path: label,
            sha256: sha256_file(p)?,
        })
    };
    let inputs = inputs
        .iter()
        .map(|p| digest(p, p.display().to_string()))
        .collect::<Result<Vec<_>>>()?;
    let outputs = outputs
        .iter()
        .map(|name| digest(&out_dir.join(name), name.to_string()))
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        schema: "crc.manifest/1".into(),
        command: command.into(),
        config,
        seed,
        git_describe: git_describe(),
        inputs,
        outputs,
    };
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CrcError::io(&path, e))?;
    std::fs::write(&path, text + "\n").map_err(|e| CrcError::io(&path, e))?;
    Ok(manifest)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<RunManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CrcError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CrcError::Parse {
        line: e.line(),
        msg: e.to_string(),
    })
}
