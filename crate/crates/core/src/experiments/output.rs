//! CSV output with a provenance header line.

use std::io;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// First 16 hex digits of the SHA-256 of the config's JSON form.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("configs serialize to JSON");
    let digest = Sha256::digest(&json);
    hex::encode(digest)[..16].to_string()
}

/// Identifies the run that produced a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new<T: Serialize>(kind: &str, config: &T, seed: u64) -> Self {
        Provenance {
            kind: kind.to_string(),
            config_hash: config_hash(config),
            seed,
        }
    }

    pub fn header_line(&self) -> String {
        format!(
            "# mtirl {} config_hash={} seed={}",
            self.kind, self.config_hash, self.seed
        )
    }
}

/// Writes the provenance comment followed by a CSV table.
pub fn write_csv<W, T>(mut writer: W, provenance: &Provenance, rows: &[T]) -> Result<()>
where
    W: io::Write,
    T: Serialize,
{
    writeln!(writer, "{}", provenance.header_line())?;
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
