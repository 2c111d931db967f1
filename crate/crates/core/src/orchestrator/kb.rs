use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{QueryMode, RetrievedHit};
use crate::embed::{EmbeddingProvider, Modality, ProviderConfig};
use crate::error::{Error, Result};
use crate::fusion::{
    attend, cross_modal_fuse, naive_concat_fuse, read_fused_jsonl, write_fused_jsonl, FusedRecord,
    FusionConfig, FusionMode, ImageMemory, ModalityEmbeddings, ProjectionWeights,
};
use crate::ingest::ChunkKind;
use crate::par::Execution;
use crate::store::{Backend, HnswParams, IndexConfig, Metric, ObjectStore, VectorIndex, OBJECTS_DIR};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FUSION_FILE: &str = "fusion.json";
const KB_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KbSettings {
    pub fusion: FusionConfig,
    pub metric: Metric,
    pub backend: Backend,
    pub hnsw: HnswParams,
    pub modes: Vec<QueryMode>,
}

impl Default for KbSettings {
    fn default() -> Self {
        Self {
            fusion: FusionConfig::default(),
            metric: Metric::Cosine,
            backend: Backend::FlatExact,
            hnsw: HnswParams::default(),
            modes: QueryMode::ALL.to_vec(),
        }
    }
}

/// Describes how a saved knowledge base was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbManifest {
    pub version: u32,
    pub dim: usize,
    pub settings: KbSettings,
    pub text_provider: ProviderConfig,
    pub image_provider: ProviderConfig,
    pub chunk_count: usize,
    pub image_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FusionState {
    weights: ProjectionWeights,
    memory: ImageMemory,
}

#[derive(Debug, Clone)]
struct ModeIndex {
    index: VectorIndex,
    records: Vec<FusedRecord>,
    by_key: HashMap<String, usize>,
}

impl ModeIndex {
    fn new(index: VectorIndex, records: Vec<FusedRecord>) -> Self {
        let by_key = records.iter().enumerate().map(|(i, r)| (r.key().to_string(), i)).collect();
        Self { index, records, by_key }
    }

    fn image_ids(&self, key: &str) -> Vec<String> {
        self.by_key
            .get(key)
            .map(|&i| self.records[i].image_ids.clone())
            .unwrap_or_default()
    }
}

/// Object store plus one vector index per retrieval mode.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    manifest: KbManifest,
    objects: ObjectStore,
    fusion: FusionState,
    modes: BTreeMap<QueryMode, ModeIndex>,
}

impl KnowledgeBase {
    pub fn build(
        objects: ObjectStore,
        text_provider: &EmbeddingProvider,
        image_provider: &EmbeddingProvider,
        settings: KbSettings,
        execution: Execution,
    ) -> Result<Self> {
        let dim = text_provider.dim();
        if image_provider.dim() != dim {
            return Err(Error::Config(format!(
                "text embeddings have dim {dim} but image embeddings have dim {}; fusion needs a shared dim",
                image_provider.dim()
            )));
        }
        if settings.modes.is_empty() {
            return Err(Error::validation("modes", "at least one mode is required"));
        }
        settings.fusion.validate()?;

        let chunks = objects.chunks();
        let text_items: Vec<(&str, &str)> =
            chunks.iter().map(|c| (c.chunk_id.as_str(), c.text.as_str())).collect();
        let text_vecs = text_provider.embed_texts(&text_items)?;
        let text = ModalityEmbeddings::from_vectors(Modality::Text, dim, &text_vecs)?;

        let images: Vec<(&str, &[u8])> = objects.images().map(|(id, img)| (id, img.bytes.as_slice())).collect();
        let image_vecs = image_provider.embed_images(&images)?;
        let image = ModalityEmbeddings::from_vectors(Modality::Image, dim, &image_vecs)?;

        let weights = settings.fusion.weights(dim)?;
        let mut fusion = None;
        let mut modes = BTreeMap::new();
        for &mode in &settings.modes {
            let (records, width) = match mode {
                QueryMode::Full => {
                    let (records, memory) = cross_modal_fuse(&text, &image, &weights, &settings.fusion, execution)?;
                    fusion = Some(memory);
                    (records, settings.fusion.fused_dim(dim))
                }
                QueryMode::NoFusionConcat => (naive_concat_fuse(&text, &image, &concat_pairing(&objects))?, 2 * dim),
                QueryMode::TextOnly => (text_only_records(&text), dim),
            };
            objects.check_records(&records)?;
            modes.insert(mode, index_records(records, width, &settings, execution)?);
        }
        let memory = match fusion {
            Some(m) => m,
            None => crate::fusion::build_memory(&image, &text, &weights, &settings.fusion)?,
        };
        let manifest = KbManifest {
            version: KB_VERSION,
            dim,
            settings,
            text_provider: text_provider.config().clone(),
            image_provider: image_provider.config().clone(),
            chunk_count: chunks.len(),
            image_count: images.len(),
        };
        Ok(Self {
            manifest,
            objects,
            fusion: FusionState { weights, memory },
            modes,
        })
    }

    pub fn manifest(&self) -> &KbManifest {
        &self.manifest
    }

    pub fn objects(&self) -> &ObjectStore {
        &self.objects
    }

    pub fn dim(&self) -> usize {
        self.manifest.dim
    }

    pub fn modes(&self) -> Vec<QueryMode> {
        self.modes.keys().copied().collect()
    }

    pub fn has_mode(&self, mode: QueryMode) -> bool {
        self.modes.contains_key(&mode)
    }

    pub fn index(&self, mode: QueryMode) -> Option<&VectorIndex> {
        self.modes.get(&mode).map(|m| &m.index)
    }

    /// Maps a raw text embedding into the vector space of `mode`.
    pub fn encode_query(&self, text_vector: &[f64], mode: QueryMode) -> Result<Vec<f64>> {
        if text_vector.len() != self.dim() {
            return Err(Error::shape("query embedding dim", self.dim(), text_vector.len()));
        }
        Ok(match mode {
            QueryMode::Full => attend(text_vector, &self.fusion.memory, &self.fusion.weights, &self.manifest.settings.fusion)?.vector,
            QueryMode::NoFusionConcat => {
                let mut v = text_vector.to_vec();
                v.resize(self.dim() * 2, 0.0);
                v
            }
            QueryMode::TextOnly => text_vector.to_vec(),
        })
    }

    /// Top-`k` chunks for an already encoded query vector.
    pub fn search(&self, mode: QueryMode, vector: &[f64], k: usize) -> Result<Vec<RetrievedHit>> {
        let Some(m) = self.modes.get(&mode) else {
            return Err(Error::Config(format!("no index was built for mode {mode}")));
        };
        m.index
            .search(vector, k)?
            .into_iter()
            .map(|hit| {
                let chunk = self
                    .objects
                    .chunk(&hit.id)
                    .ok_or_else(|| Error::NotFound(format!("indexed id `{}` missing from object store", hit.id)))?
                    .clone();
                let image_ids = match mode {
                    QueryMode::TextOnly => Vec::new(),
                    _ => m.image_ids(&hit.id),
                };
                Ok(RetrievedHit { hit, chunk, image_ids })
            })
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.objects.save(&dir.join(OBJECTS_DIR))?;
        for (mode, m) in &self.modes {
            m.index.save(&dir.join(index_file(*mode)))?;
            write_fused_jsonl(&dir.join(fused_file(*mode)), &m.records)?;
        }
        std::fs::write(dir.join(FUSION_FILE), serde_json::to_vec(&self.fusion)?)?;
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&self.manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest: KbManifest = serde_json::from_slice(
            &std::fs::read(&manifest_path)
                .map_err(|e| Error::NotFound(format!("{}: {e}", manifest_path.display())))?,
        )?;
        if manifest.version > KB_VERSION {
            return Err(Error::UnsupportedVersion {
                found: manifest.version,
                supported: KB_VERSION,
            });
        }
        let fusion: FusionState = serde_json::from_slice(&std::fs::read(dir.join(FUSION_FILE))?)?;
        let objects = ObjectStore::load(&dir.join(OBJECTS_DIR))?;
        let mut modes = BTreeMap::new();
        for &mode in &manifest.settings.modes {
            let index = VectorIndex::load(&dir.join(index_file(mode)))?;
            let records = read_fused_jsonl(&dir.join(fused_file(mode)))?;
            if records.len() != index.len() {
                return Err(Error::shape(format!("records in {}", fused_file(mode)), index.len(), records.len()));
            }
            modes.insert(mode, ModeIndex::new(index, records));
        }
        Ok(Self {
            manifest,
            objects,
            fusion,
            modes,
        })
    }
}

pub(crate) fn index_file(mode: QueryMode) -> String {
    format!("index-{mode}.bin")
}

pub(crate) fn fused_file(mode: QueryMode) -> String {
    format!("fused-{mode}.jsonl")
}

/// Figure chunks pair with their own image; other chunks with the first
/// stored figure of their article.
fn concat_pairing(objects: &ObjectStore) -> BTreeMap<String, String> {
    let mut first: HashMap<&str, &str> = HashMap::new();
    let mut figure_chunks: Vec<_> = objects
        .chunks()
        .iter()
        .filter(|c| c.kind == ChunkKind::FigureCaption)
        .collect();
    figure_chunks.sort_by_key(|c| (c.pmid.as_str(), c.order));
    for c in figure_chunks {
        if let Some(img) = c.linked_image_id.as_deref() {
            if objects.image(img).is_some() {
                first.entry(c.pmid.as_str()).or_insert(img);
            }
        }
    }
    objects
        .chunks()
        .iter()
        .filter_map(|c| {
            let own = c.linked_image_id.as_deref().filter(|i| objects.image(i).is_some());
            own.or_else(|| first.get(c.pmid.as_str()).copied())
                .map(|img| (c.chunk_id.clone(), img.to_string()))
        })
        .collect()
}

fn text_only_records(text: &ModalityEmbeddings) -> Vec<FusedRecord> {
    text.ids
        .iter()
        .enumerate()
        .map(|(i, id)| FusedRecord {
            vector: text.matrix.row(i).to_vec(),
            text_ids: vec![id.clone()],
            image_ids: Vec::new(),
            mode: FusionMode::TextOnly,
        })
        .collect()
}

fn index_records(records: Vec<FusedRecord>, dim: usize, settings: &KbSettings, execution: Execution) -> Result<ModeIndex> {
    let mut config = IndexConfig::new(dim, settings.metric, settings.backend);
    config.hnsw = settings.hnsw;
    let mut index = VectorIndex::new(config)?;
    let items: Vec<(String, Vec<f64>)> = records.iter().map(|r| (r.key().to_string(), r.vector.clone())).collect();
    index.upsert_batch(&items, execution)?;
    Ok(ModeIndex::new(index, records))
}
