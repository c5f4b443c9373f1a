//! On-disk run directory: a JSON header plus flat little-endian record files.
//!
//! ```text
//! header.json       format_version, params, seed (hex), task_id, nonce, lean
//! roots.bin         (K+1) x 32   r_0..r_K
//! transcripts.bin   (K+1) x 32   T_0..T_K
//! steps.bin         K x d x 8    read coordinates, step-major      (full runs only)
//! writes.bin        K x 112      t, v_w, old block, final cursor   (full runs only)
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arena::Block;
use crate::engine::{bound_block, RunLog, WriteLogEntry};
use crate::error::RunError;
use crate::hashing::{Digest, Vertex};
use crate::params::RunParams;

pub const FORMAT_VERSION: u32 = 1;
pub const HEADER: &str = "header.json";
pub const ROOTS: &str = "roots.bin";
pub const TRANSCRIPTS: &str = "transcripts.bin";
pub const STEPS: &str = "steps.bin";
pub const WRITES: &str = "writes.bin";

/// Bytes per write-log record.
pub const WRITE_RECORD: usize = 8 + 8 + 64 + 32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunHeader {
    pub format_version: u32,
    pub params: RunParams,
    pub seed: Digest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonce: Option<String>,
    pub lean: bool,
}

impl RunHeader {
    pub fn new(log: &RunLog) -> RunHeader {
        RunHeader {
            format_version: FORMAT_VERSION,
            params: log.params,
            seed: log.seed,
            task_id: None,
            nonce: None,
            lean: log.is_lean(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |e| RunError::io(path, e)
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    Ok(BufWriter::with_capacity(
        1 << 20,
        File::create(path).map_err(io_err(path))?,
    ))
}

fn write_digests(path: &Path, ds: &[Digest]) -> Result<(), RunError> {
    let mut w = create(path)?;
    for d in ds {
        w.write_all(&d.0).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes `log` under `dir`, creating it if needed.
pub fn write_run(dir: &Path, log: &RunLog, header: &RunHeader) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let hp = dir.join(HEADER);
    let json = serde_json::to_string_pretty(header).expect("header serializes");
    fs::write(&hp, json + "\n").map_err(io_err(&hp))?;
    write_digests(&dir.join(ROOTS), &log.roots)?;
    write_digests(&dir.join(TRANSCRIPTS), &log.transcripts)?;
    if log.is_lean() {
        for f in [STEPS, WRITES] {
            let p = dir.join(f);
            if p.exists() {
                fs::remove_file(&p).map_err(io_err(&p))?;
            }
        }
        return Ok(());
    }
    let sp = dir.join(STEPS);
    let mut w = create(&sp)?;
    for v in log.all_reads() {
        w.write_all(&v.0.to_le_bytes()).map_err(io_err(&sp))?;
    }
    w.flush().map_err(io_err(&sp))?;

    let wp = dir.join(WRITES);
    let mut w = create(&wp)?;
    let mut rec = [0u8; WRITE_RECORD];
    for e in log.write_log() {
        rec[0..8].copy_from_slice(&e.t.to_le_bytes());
        rec[8..16].copy_from_slice(&e.vertex.0.to_le_bytes());
        rec[16..48].copy_from_slice(&e.old.data.0);
        rec[48..80].copy_from_slice(&e.old.causal.0);
        rec[80..112].copy_from_slice(&e.cursor.0);
        w.write_all(&rec).map_err(io_err(&wp))?;
    }
    w.flush().map_err(io_err(&wp))
}

pub fn read_header(dir: &Path) -> Result<RunHeader, RunError> {
    let hp = dir.join(HEADER);
    let text = fs::read_to_string(&hp).map_err(io_err(&hp))?;
    // The version is checked before the rest of the header is interpreted.
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| RunError::Header {
        path: hp.clone(),
        detail: e.to_string(),
    })?;
    let found = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| RunError::Header {
            path: hp.clone(),
            detail: "missing format_version".into(),
        })?;
    if found != FORMAT_VERSION as u64 {
        return Err(RunError::FormatVersion {
            found: found.min(u32::MAX as u64) as u32,
            expected: FORMAT_VERSION,
        });
    }
    let header: RunHeader = serde_json::from_value(raw).map_err(|e| RunError::Header {
        path: hp.clone(),
        detail: e.to_string(),
    })?;
    header.params.validate(crate::params::Strictness::Toy)?;
    Ok(header)
}

/// Opens `file` and checks its length is `records * width`.
fn open_sized(
    dir: &Path,
    file: &'static str,
    records: u64,
    width: u64,
) -> Result<(PathBuf, BufReader<File>), RunError> {
    let p = dir.join(file);
    let f = File::open(&p).map_err(io_err(&p))?;
    let found = f.metadata().map_err(io_err(&p))?.len();
    let expected = records.saturating_mul(width);
    if found != expected {
        return Err(RunError::FileSize {
            file,
            found,
            expected,
        });
    }
    Ok((p, BufReader::with_capacity(1 << 20, f)))
}

fn read_digests(dir: &Path, file: &'static str, count: u64) -> Result<Vec<Digest>, RunError> {
    let (p, mut r) = open_sized(dir, file, count, 32)?;
    let mut out = Vec::with_capacity(count as usize);
    let mut buf = [0u8; 32];
    for _ in 0..count {
        r.read_exact(&mut buf).map_err(io_err(&p))?;
        out.push(Digest(buf));
    }
    Ok(out)
}

/// Loads a run directory. New values in the write log are recomputed from
/// the stored old value and cursor.
pub fn read_run(dir: &Path) -> Result<(RunHeader, RunLog), RunError> {
    let header = read_header(dir)?;
    let params = header.params;
    let k = params.steps;
    let roots = read_digests(dir, ROOTS, k + 1)?;
    let transcripts = read_digests(dir, TRANSCRIPTS, k + 1)?;
    if header.lean {
        let log = RunLog::from_parts(
            params,
            header.seed,
            roots,
            transcripts,
            Vec::new(),
            Vec::new(),
        )?;
        return Ok((header, log));
    }

    let d = params.reads as u64;
    let n = params.vertex_count();
    let (sp, mut r) = open_sized(dir, STEPS, k.saturating_mul(d), 8)?;
    let mut reads = Vec::with_capacity((k * d) as usize);
    let mut buf = [0u8; 8];
    for i in 0..k * d {
        r.read_exact(&mut buf).map_err(io_err(&sp))?;
        let v = u64::from_le_bytes(buf);
        if v >= n {
            return Err(RunError::Header {
                path: sp.clone(),
                detail: format!(
                    "read coordinate {v} at step {} is outside the arena",
                    i / d + 1
                ),
            });
        }
        reads.push(Vertex(v));
    }

    let (wp, mut r) = open_sized(dir, WRITES, k, WRITE_RECORD as u64)?;
    let mut log = Vec::with_capacity(k as usize);
    let mut rec = [0u8; WRITE_RECORD];
    let digest = |b: &[u8]| Digest(b.try_into().expect("32-byte slice"));
    for i in 0..k {
        r.read_exact(&mut rec).map_err(io_err(&wp))?;
        let t = u64::from_le_bytes(rec[0..8].try_into().unwrap());
        let v = u64::from_le_bytes(rec[8..16].try_into().unwrap());
        if t != i + 1 || v >= n {
            return Err(RunError::Header {
                path: wp.clone(),
                detail: format!("malformed write record {}", i + 1),
            });
        }
        let old = Block {
            data: digest(&rec[16..48]),
            causal: digest(&rec[48..80]),
        };
        let cursor = digest(&rec[80..112]);
        log.push(WriteLogEntry {
            t,
            vertex: Vertex(v),
            old,
            cursor,
            new: bound_block(&old, &cursor, t),
        });
    }
    let log = RunLog::from_parts(params, header.seed, roots, transcripts, reads, log)?;
    Ok((header, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{gen, gen_retaining, Retention};

    fn sample(retention: Retention) -> RunLog {
        gen_retaining(
            &Digest([6; 32]),
            &RunParams::new(5, 100, 4).unwrap(),
            retention,
        )
        .unwrap()
        .0
    }

    #[test]
    fn full_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let log = sample(Retention::Full);
        let mut h = RunHeader::new(&log);
        h.task_id = Some("job".into());
        h.nonce = Some("n1".into());
        write_run(dir.path(), &log, &h).unwrap();
        let (h2, log2) = read_run(dir.path()).unwrap();
        assert_eq!(h2, h);
        assert_eq!(log2, log);
        assert_eq!(
            fs::metadata(dir.path().join(WRITES)).unwrap().len(),
            100 * 112
        );
        assert_eq!(
            fs::metadata(dir.path().join(STEPS)).unwrap().len(),
            100 * 4 * 8
        );
        assert_eq!(
            fs::metadata(dir.path().join(ROOTS)).unwrap().len(),
            101 * 32
        );
    }

    #[test]
    fn lean_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let log = sample(Retention::Lean);
        write_run(dir.path(), &log, &RunHeader::new(&log)).unwrap();
        let (h, back) = read_run(dir.path()).unwrap();
        assert!(h.lean);
        assert_eq!(back, log);
        assert!(!dir.path().join(STEPS).exists());
    }

    #[test]
    fn version_mismatch_is_hard_error() {
        let dir = tempfile::tempdir().unwrap();
        let log = gen(&Digest::ZERO, &RunParams::new(3, 4, 4).unwrap())
            .unwrap()
            .0;
        let mut h = RunHeader::new(&log);
        h.format_version = 2;
        write_run(dir.path(), &log, &h).unwrap();
        assert!(matches!(
            read_run(dir.path()),
            Err(RunError::FormatVersion {
                found: 2,
                expected: 1
            })
        ));
    }

    #[test]
    fn truncated_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let log = sample(Retention::Full);
        write_run(dir.path(), &log, &RunHeader::new(&log)).unwrap();
        let wp = dir.path().join(WRITES);
        let bytes = fs::read(&wp).unwrap();
        fs::write(&wp, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(
            read_run(dir.path()),
            Err(RunError::FileSize { file: WRITES, .. })
        ));
    }
}
