//! JSON serialization of MPS and MPO.
//!
//! Site tensors are stored with their leg dimensions in declared order and
//! row-major `[re, im]` entries, so a round trip reproduces every bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mpo::{MatrixProductOperator, MpoError};
use crate::mps::{CanonicalForm, MatrixProductState, MpsError};
use crate::tensor::{Tensor, TensorError};
use crate::C64;

pub const MPS_HEADER: &str = "GEDMRG-MPS-1";
pub const MPO_HEADER: &str = "GEDMRG-MPO-1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("unsupported format header {found:?} (expected {expected:?})")]
    Header {
        found: String,
        expected: &'static str,
    },
    #[error("site {site}: {msg}")]
    Site { site: usize, msg: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error(transparent)]
    Mpo(#[from] MpoError),
}

pub type Result<T> = std::result::Result<T, IoError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SiteRecord {
    dims: Vec<usize>,
    data: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct MpsFile {
    format: String,
    #[serde(rename = "N")]
    n: usize,
    d: usize,
    center: usize,
    form: CanonicalForm,
    sites: Vec<SiteRecord>,
    schmidt: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct MpoFile {
    format: String,
    #[serde(rename = "N")]
    n: usize,
    d: usize,
    sites: Vec<SiteRecord>,
}

fn record(t: &Tensor) -> SiteRecord {
    SiteRecord {
        dims: t.dims(),
        data: t.data().iter().map(|z| [z.re, z.im]).collect(),
    }
}

fn tensor(site: usize, rec: &SiteRecord, labels: &[&str]) -> Result<Tensor> {
    if rec.dims.len() != labels.len() {
        return Err(IoError::Site {
            site,
            msg: format!("expected {} legs, found {}", labels.len(), rec.dims.len()),
        });
    }
    let legs: Vec<(&str, usize)> = labels
        .iter()
        .copied()
        .zip(rec.dims.iter().copied())
        .collect();
    let data = rec.data.iter().map(|&[re, im]| C64::new(re, im)).collect();
    Ok(Tensor::from_parts(&legs, data)?)
}

fn check_header(found: &str, expected: &'static str) -> Result<()> {
    if found != expected {
        return Err(IoError::Header {
            found: found.to_string(),
            expected,
        });
    }
    Ok(())
}

pub fn write_mps<W: Write>(psi: &MatrixProductState, w: W) -> Result<()> {
    let file = MpsFile {
        format: MPS_HEADER.into(),
        n: psi.n_sites(),
        d: psi.phys_dim(),
        center: psi.center(),
        form: psi.canonical_form(),
        sites: psi.sites().iter().map(record).collect(),
        schmidt: psi.schmidt().to_vec(),
    };
    serde_json::to_writer(w, &file)?;
    Ok(())
}

pub fn read_mps<R: Read>(r: R) -> Result<MatrixProductState> {
    let file: MpsFile = serde_json::from_reader(r)?;
    check_header(&file.format, MPS_HEADER)?;
    let sites = file
        .sites
        .iter()
        .enumerate()
        .map(|(i, rec)| tensor(i, rec, &["l", "p", "r"]))
        .collect::<Result<Vec<_>>>()?;
    if sites.len() != file.n {
        return Err(IoError::Site {
            site: sites.len(),
            msg: format!("header declares {} sites", file.n),
        });
    }
    let psi = match file.form {
        CanonicalForm::MixedAtCenter => {
            MatrixProductState::from_canonical_parts(sites, file.schmidt, file.center)?
        }
        CanonicalForm::None => MatrixProductState::from_sites(sites)?,
    };
    if psi.phys_dim() != file.d {
        return Err(IoError::Site {
            site: 0,
            msg: format!(
                "header declares d={}, sites have {}",
                file.d,
                psi.phys_dim()
            ),
        });
    }
    Ok(psi)
}

pub fn write_mpo<W: Write>(op: &MatrixProductOperator, w: W) -> Result<()> {
    let file = MpoFile {
        format: MPO_HEADER.into(),
        n: op.n_sites(),
        d: op.phys_dim(),
        sites: op.sites().iter().map(record).collect(),
    };
    serde_json::to_writer(w, &file)?;
    Ok(())
}

pub fn read_mpo<R: Read>(r: R) -> Result<MatrixProductOperator> {
    let file: MpoFile = serde_json::from_reader(r)?;
    check_header(&file.format, MPO_HEADER)?;
    let sites = file
        .sites
        .iter()
        .enumerate()
        .map(|(i, rec)| tensor(i, rec, &["l", "po", "pi", "r"]))
        .collect::<Result<Vec<_>>>()?;
    if sites.len() != file.n {
        return Err(IoError::Site {
            site: sites.len(),
            msg: format!("header declares {} sites", file.n),
        });
    }
    let op = MatrixProductOperator::from_sites(sites)?;
    if op.phys_dim() != file.d {
        return Err(IoError::Site {
            site: 0,
            msg: format!("header declares d={}, sites have {}", file.d, op.phys_dim()),
        });
    }
    Ok(op)
}

pub fn save_mps(psi: &MatrixProductState, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_mps(psi, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_mps(path: impl AsRef<Path>) -> Result<MatrixProductState> {
    read_mps(BufReader::new(File::open(path)?))
}

pub fn save_mpo(op: &MatrixProductOperator, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_mpo(op, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_mpo(path: impl AsRef<Path>) -> Result<MatrixProductOperator> {
    read_mpo(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpo::{xxz_mpo, XxzParams};
    use crate::mps::{mps_sum, random_mps};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bits(t: &[Tensor]) -> Vec<(u64, u64)> {
        t.iter()
            .flat_map(|s| s.data().iter().map(|z| (z.re.to_bits(), z.im.to_bits())))
            .collect()
    }

    #[test]
    fn mps_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = random_mps(7, 2, 5, &mut rng)
            .unwrap()
            .canonicalize(3)
            .unwrap();
        let mut buf = Vec::new();
        write_mps(&psi, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains(MPS_HEADER));
        let back = read_mps(buf.as_slice()).unwrap();
        assert_eq!(bits(psi.sites()), bits(back.sites()));
        assert_eq!(psi.schmidt(), back.schmidt());
        assert_eq!(back.center(), 3);
    }

    #[test]
    fn non_canonical_mps_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_mps(4, 2, 2, &mut rng).unwrap();
        let b = random_mps(4, 2, 2, &mut rng).unwrap();
        let psi = mps_sum(&a, &b).unwrap();
        let mut buf = Vec::new();
        write_mps(&psi, &mut buf).unwrap();
        let back = read_mps(buf.as_slice()).unwrap();
        assert_eq!(back.canonical_form(), CanonicalForm::None);
        assert_eq!(bits(psi.sites()), bits(back.sites()));
    }

    #[test]
    fn mpo_round_trip_through_file() {
        let op = xxz_mpo(&XxzParams::new(1.0, -0.3, 0.7, 5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.json");
        save_mpo(&op, &path).unwrap();
        let back = load_mpo(&path).unwrap();
        assert_eq!(bits(op.sites()), bits(back.sites()));
    }

    #[test]
    fn wrong_header_rejected() {
        let op = xxz_mpo(&XxzParams::new(1.0, 1.0, 0.0, 3)).unwrap();
        let mut buf = Vec::new();
        write_mpo(&op, &mut buf).unwrap();
        assert!(matches!(
            read_mps(buf.as_slice()),
            Err(IoError::Json(_)) | Err(IoError::Header { .. })
        ));
        let text = String::from_utf8(buf)
            .unwrap()
            .replace(MPO_HEADER, "GEDMRG-MPO-9");
        assert!(matches!(
            read_mpo(text.as_bytes()),
            Err(IoError::Header { .. })
        ));
    }
}
