//! Versioned binary snapshots of trees and forests.
//!
//! Layout: a 4-byte magic (`MNDT` for a tree, `MNDF` for a forest), a
//! little-endian `u32` format version, then the bincode encoding of the
//! payload. Floats are stored as raw IEEE-754 bits, so infinite lifetimes
//! and split times survive unchanged. Random streams are stored as seed,
//! stream id and word position; a restored model continues with exactly the
//! draws the original would have made.
//!
//! A tree snapshot holds the tree only. Its leaves refer to points by id, so
//! resuming it needs the same [`PointStore`]. A forest snapshot carries its
//! store and is self-contained.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{ForestConfig, MondrianForest};
use crate::points::PointStore;
use crate::tree::MondrianTree;

pub const FORMAT_VERSION: u32 = 1;
const TREE_MAGIC: &[u8; 4] = b"MNDT";
const FOREST_MAGIC: &[u8; 4] = b"MNDF";

#[derive(Serialize, Deserialize)]
struct ForestPayload {
    config: ForestConfig,
    store: PointStore,
    trees: Vec<MondrianTree>,
}

fn encode<T: Serialize>(magic: &[u8; 4], payload: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bincode::serialize_into(&mut out, payload).map_err(|e| Error::Snapshot(e.to_string()))?;
    Ok(out)
}

fn decode<T: for<'de> Deserialize<'de>>(magic: &[u8; 4], bytes: &[u8]) -> Result<T> {
    if bytes.len() < 8 || &bytes[..4] != magic {
        return Err(Error::Snapshot(format!(
            "missing {} header",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Snapshot(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    bincode::deserialize(&bytes[8..]).map_err(|e| Error::Snapshot(e.to_string()))
}

impl MondrianTree {
    pub fn to_snapshot(&self) -> Result<Vec<u8>> {
        encode(TREE_MAGIC, self)
    }

    pub fn from_snapshot(bytes: &[u8]) -> Result<Self> {
        decode(TREE_MAGIC, bytes)
    }
}

impl MondrianForest {
    pub fn to_snapshot(&self) -> Result<Vec<u8>> {
        encode(
            FOREST_MAGIC,
            &ForestPayload {
                config: self.config().clone(),
                store: self.store().clone(),
                trees: self.trees().to_vec(),
            },
        )
    }

    pub fn from_snapshot(bytes: &[u8]) -> Result<Self> {
        let payload: ForestPayload = decode(FOREST_MAGIC, bytes)?;
        if !payload.trees.is_empty() && payload.trees.len() != payload.config.num_trees {
            return Err(Error::Snapshot(format!(
                "config lists {} trees, snapshot holds {}",
                payload.config.num_trees,
                payload.trees.len()
            )));
        }
        MondrianForest::from_parts(payload.config, payload.store, payload.trees)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_snapshot()?).map_err(Error::io(path))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_snapshot(&fs::read(path).map_err(Error::io(path))?)
    }
}
