//! Vector indexes (exact and HNSW) and the object store that resolves ids
//! back to chunk text and figure bytes.

mod hnsw;
mod index;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::FusedRecord;
use crate::ingest::{Chunk, Corpus};

pub use hnsw::HnswParams;
pub use index::{Backend, IndexConfig, Metric, ScoredHit, VectorIndex, FORMAT_VERSION, ID_WIDTH, MAGIC};

pub const INDEX_FILE: &str = "index.bin";
pub const OBJECTS_DIR: &str = "objects";

/// Image bytes and their format name. Stored figures are always PNG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredImage {
    pub bytes: Vec<u8>,
    pub format: String,
}

#[derive(Debug, Clone, Default)]
pub struct ObjectStore {
    chunks: Vec<Chunk>,
    by_id: HashMap<String, usize>,
    images: BTreeMap<String, StoredImage>,
}

impl ObjectStore {
    pub fn from_corpus(corpus: Corpus) -> Result<Self> {
        corpus.validate()?;
        let by_id = corpus
            .chunks
            .iter()
            .enumerate()
            .map(|(i, c)| (c.chunk_id.clone(), i))
            .collect();
        let images = corpus
            .images
            .into_iter()
            .map(|(id, bytes)| {
                (
                    id,
                    StoredImage {
                        bytes,
                        format: "PNG".into(),
                    },
                )
            })
            .collect();
        Ok(Self {
            chunks: corpus.chunks,
            by_id,
            images,
        })
    }

    pub fn chunk(&self, id: &str) -> Option<&Chunk> {
        self.by_id.get(id).map(|&i| &self.chunks[i])
    }

    pub fn image(&self, id: &str) -> Option<&StoredImage> {
        self.images.get(id)
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.images.keys().map(String::as_str)
    }

    pub fn images(&self) -> impl Iterator<Item = (&str, &StoredImage)> {
        self.images.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn resolves(&self, id: &str) -> bool {
        self.by_id.contains_key(id) || self.images.contains_key(id)
    }

    /// Every provenance id of every record resolves.
    pub fn check_records(&self, records: &[FusedRecord]) -> Result<()> {
        for r in records {
            for id in r.text_ids.iter().chain(&r.image_ids) {
                if !self.resolves(id) {
                    return Err(Error::NotFound(format!("provenance id `{id}` is not in the object store")));
                }
            }
        }
        Ok(())
    }

    pub fn to_corpus(&self) -> Corpus {
        Corpus {
            chunks: self.chunks.clone(),
            images: self
                .images
                .iter()
                .map(|(k, v)| (k.clone(), v.bytes.clone()))
                .collect(),
        }
    }

    /// Writes `chunks.jsonl` and `images/` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.to_corpus().save(dir)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Self::from_corpus(Corpus::load(dir)?)
    }
}

/// Writes `index.bin` and `objects/` under `dir`.
pub fn save(index: &VectorIndex, objects: &ObjectStore, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    index.save(&dir.join(INDEX_FILE))?;
    objects.save(&dir.join(OBJECTS_DIR))
}

pub fn load(dir: &Path) -> Result<(VectorIndex, ObjectStore)> {
    let index = VectorIndex::load(&dir.join(INDEX_FILE))?;
    let objects = ObjectStore::load(&dir.join(OBJECTS_DIR))?;
    Ok((index, objects))
}
