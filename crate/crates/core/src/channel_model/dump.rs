//! Debug dump of a covariance matrix: `<stem>.json` header plus `<stem>.bin`
//! payload of M·M row-major `(re, im)` pairs as little-endian f64.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SpatialCovariance;
use crate::{CMatrix, Error, Result, C64};

pub const DUMP_FORMAT: &str = "c128-le-row-major";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceDumpHeader {
    pub format: String,
    pub n_antennas: usize,
    pub user: usize,
    pub beta: f64,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

pub fn write_covariance_dump(stem: &Path, cov: &SpatialCovariance) -> Result<()> {
    let m = cov.n_antennas();
    let header = CovarianceDumpHeader {
        format: DUMP_FORMAT.to_string(),
        n_antennas: m,
        user: cov.owner,
        beta: cov.beta(),
    };
    let mut payload = Vec::with_capacity(16 * m * m);
    for i in 0..m {
        for j in 0..m {
            let z = cov.matrix[(i, j)];
            payload.extend_from_slice(&z.re.to_le_bytes());
            payload.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    let (json, bin) = paths(stem);
    fs::write(json, serde_json::to_vec_pretty(&header)?)?;
    fs::write(bin, payload)?;
    Ok(())
}

pub fn read_covariance_dump(stem: &Path) -> Result<(CovarianceDumpHeader, SpatialCovariance)> {
    let (json, bin) = paths(stem);
    let header: CovarianceDumpHeader = serde_json::from_slice(&fs::read(json)?)?;
    if header.format != DUMP_FORMAT {
        return Err(Error::InvalidConfig(format!(
            "unknown dump format {:?}",
            header.format
        )));
    }
    let bytes = fs::read(bin)?;
    let m = header.n_antennas;
    if bytes.len() != 16 * m * m {
        return Err(Error::InvalidConfig(format!(
            "dump payload has {} bytes, expected {}",
            bytes.len(),
            16 * m * m
        )));
    }
    let f = |i: usize| f64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().expect("8 bytes"));
    let matrix = CMatrix::from_fn(m, m, |i, j| {
        let idx = 2 * (i * m + j);
        C64::new(f(idx), f(idx + 1))
    });
    Ok((
        header.clone(),
        SpatialCovariance {
            owner: header.user,
            matrix,
        },
    ))
}
