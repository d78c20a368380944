//! Atomic file writes, artifact reads and CSV reports.

use std::io::Write;
use std::os::unix::fs::PermissionsExt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::attack::AttackReport;
use crate::error::{Error, Result};

/// Writes `bytes` to a temporary file beside `path`, then renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::Builder::new()
        .permissions(std::fs::Permissions::from_mode(0o644))
        .tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Reads a stage output, reporting absence as a missing artifact.
pub fn read_artifact(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact {
            path: path.to_path_buf(),
            reason: "file not found; run the stage that produces it first".into(),
        },
        _ => Error::Io(e),
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&read_artifact(path)?)?)
}

/// Rows as CSV with a header line. Absent values are empty cells.
pub fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn read_csv<T: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().from_reader(bytes);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Column order of report CSVs.
pub const REPORT_HEADER: [&str; 13] = [
    "trial",
    "seed",
    "config_digest",
    "m",
    "t_prime",
    "cos_g_shared",
    "psnr_g_shared",
    "psnr_i_shared",
    "lra_shared",
    "cos_g",
    "psnr_g",
    "psnr_i",
    "lra",
];

pub fn report_csv(reports: &[AttackReport]) -> Result<Vec<u8>> {
    csv_bytes(reports, &REPORT_HEADER)
}

pub fn parse_report_csv(bytes: &[u8]) -> Result<Vec<AttackReport>> {
    let mut r = csv::ReaderBuilder::new().from_reader(bytes);
    let header = r.headers()?.clone();
    if header.iter().ne(REPORT_HEADER.iter().copied()) {
        return Err(Error::Input(format!(
            "report header {:?} differs from the fixed schema",
            header.iter().collect::<Vec<_>>()
        )));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_roundtrip_is_lossless() {
        let mut a = AttackReport::new(3, 99, "ab12");
        a.m = Some(0.1 + 0.2);
        a.t_prime = Some(28);
        a.cos_g = Some(std::f64::consts::PI / 7.0);
        a.psnr_g = Some(1e-300);
        a.lra_shared = Some(0.0);
        let b = AttackReport::new(4, 100, "ab12");
        let bytes = report_csv(&[a.clone(), b.clone()]).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("trial,seed,config_digest,m,t_prime,"));
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(parse_report_csv(&bytes).unwrap(), vec![a, b]);
    }

    #[test]
    fn atomic_write_and_missing_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/x.bin");
        write_atomic(&p, b"abc").unwrap();
        write_atomic(&p, b"de").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"de");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
        assert!(matches!(
            read_artifact(&dir.path().join("nope")),
            Err(Error::MissingArtifact { .. })
        ));
    }
}
