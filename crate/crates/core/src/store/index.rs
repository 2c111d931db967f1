use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::hnsw::{HnswGraph, HnswParams, Vectors};
use crate::error::{Error, Result};
use crate::par::Execution;

pub const MAGIC: &[u8; 8] = b"MRAGIDX\0";
pub const FORMAT_VERSION: u32 = 1;
/// Bytes reserved per id in the index file.
pub const ID_WIDTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Cosine,
    InnerProduct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    FlatExact,
    Hnsw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub dim: usize,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default)]
    pub hnsw: HnswParams,
}

impl IndexConfig {
    pub fn new(dim: usize, metric: Metric, backend: Backend) -> Self {
        Self {
            dim,
            metric,
            backend,
            hnsw: HnswParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::validation("dim", "must be at least 1"));
        }
        let p = self.hnsw;
        if p.m < 2 || p.ef_construction == 0 || p.ef_search == 0 {
            return Err(Error::validation("hnsw", "need M >= 2 and ef values >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub id: String,
    pub score: f64,
}

/// Vectors stored as `f32`; similarities are accumulated in `f64`.
///
/// Re-upserting an id under HNSW leaves a tombstone in the graph and
/// appends a fresh node, since graph edges cannot be rewired cheaply.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    config: IndexConfig,
    ids: Vec<String>,
    data: Vec<f32>,
    live: Vec<bool>,
    slots: HashMap<String, usize>,
    graph: Option<HnswGraph>,
}

impl VectorIndex {
    pub fn new(config: IndexConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            ids: Vec::new(),
            data: Vec::new(),
            live: Vec::new(),
            slots: HashMap::new(),
            graph: (config.backend == Backend::Hnsw).then(|| HnswGraph::new(config.hnsw)),
        })
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.slots.contains_key(id)
    }

    /// Live ids in insertion order.
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.ids
            .iter()
            .zip(&self.live)
            .filter(|(_, &l)| l)
            .map(|(id, _)| id.as_str())
    }

    /// The stored (possibly normalized) vector for `id`.
    pub fn vector(&self, id: &str) -> Option<Vec<f32>> {
        self.slots.get(id).map(|&s| self.slot(s).to_vec())
    }

    fn slot(&self, s: usize) -> &[f32] {
        &self.data[s * self.config.dim..(s + 1) * self.config.dim]
    }

    fn prepare(&self, vector: &[f64], what: &str) -> Result<Vec<f32>> {
        if vector.len() != self.config.dim {
            return Err(Error::shape(what, self.config.dim, vector.len()));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(what, "contains non-finite values"));
        }
        let scale = match self.config.metric {
            Metric::Cosine => {
                let n = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 0.0 {
                    1.0 / n
                } else {
                    0.0
                }
            }
            Metric::InnerProduct => 1.0,
        };
        Ok(vector.iter().map(|v| (v * scale) as f32).collect())
    }

    fn check_id(id: &str) -> Result<()> {
        if id.is_empty() || id.len() > ID_WIDTH || id.contains('\0') {
            return Err(Error::validation(
                "id",
                format!("ids must be 1..={ID_WIDTH} bytes without NUL, got {id:?}"),
            ));
        }
        Ok(())
    }

    pub fn upsert(&mut self, id: &str, vector: &[f64]) -> Result<()> {
        Self::check_id(id)?;
        let v = self.prepare(vector, "vector length")?;
        self.insert_prepared(id, v);
        Ok(())
    }

    /// Upserts in input order; vector preparation runs under `execution`.
    pub fn upsert_batch(&mut self, items: &[(String, Vec<f64>)], execution: Execution) -> Result<()> {
        for (id, _) in items {
            Self::check_id(id)?;
        }
        let prepared = execution
            .map(items, |(_, v)| self.prepare(v, "vector length"))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        for ((id, _), v) in items.iter().zip(prepared) {
            self.insert_prepared(id, v);
        }
        Ok(())
    }

    fn insert_prepared(&mut self, id: &str, v: Vec<f32>) {
        if let Some(&s) = self.slots.get(id) {
            if self.graph.is_none() {
                let d = self.config.dim;
                self.data[s * d..(s + 1) * d].copy_from_slice(&v);
                return;
            }
            self.live[s] = false;
        }
        let s = self.ids.len();
        self.ids.push(id.to_string());
        self.data.extend_from_slice(&v);
        self.live.push(true);
        self.slots.insert(id.to_string(), s);
        if let Some(graph) = self.graph.as_mut() {
            let vectors = Vectors {
                data: &self.data,
                dim: self.config.dim,
            };
            graph.insert(s as u32, &vectors);
        }
    }

    fn score(&self, q: &[f32], s: usize) -> f64 {
        let raw: f64 = q
            .iter()
            .zip(self.slot(s))
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        match self.config.metric {
            Metric::Cosine => raw.clamp(-1.0, 1.0),
            Metric::InnerProduct => raw,
        }
    }

    /// Up to `k` hits by descending score, ties by ascending id.
    pub fn search(&self, query: &[f64], k: usize) -> Result<Vec<ScoredHit>> {
        if k == 0 {
            return Err(Error::validation("k", "must be at least 1"));
        }
        let q = self.prepare(query, "query length")?;
        if self.is_empty() {
            return Ok(Vec::new());
        }
        let mut scored: Vec<(usize, f64)> = match &self.graph {
            None => (0..self.ids.len())
                .filter(|&s| self.live[s])
                .map(|s| (s, self.score(&q, s)))
                .collect(),
            Some(graph) => {
                let vectors = Vectors {
                    data: &self.data,
                    dim: self.config.dim,
                };
                let ef = self.config.hnsw.ef_search.max(k);
                graph
                    .search(&q, ef, &vectors)
                    .into_iter()
                    .filter(|(s, _)| self.live[*s as usize])
                    .map(|(s, _)| (s as usize, self.score(&q, s as usize)))
                    .collect()
            }
        };
        let order = |a: &(usize, f64), b: &(usize, f64)| {
            b.1.total_cmp(&a.1).then_with(|| self.ids[a.0].cmp(&self.ids[b.0]))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        Ok(scored
            .into_iter()
            .map(|(s, score)| ScoredHit {
                id: self.ids[s].clone(),
                score,
            })
            .collect())
    }

    pub fn search_batch(&self, queries: &[Vec<f64>], k: usize, execution: Execution) -> Result<Vec<Vec<ScoredHit>>> {
        execution
            .map(queries, |q| self.search(q, k))
            .into_iter()
            .collect()
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        let c = &self.config;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(c.dim as u32).to_le_bytes())?;
        w.write_all(&[metric_code(c.metric), backend_code(c.backend)])?;
        w.write_all(&0u16.to_le_bytes())?;
        for v in [c.hnsw.m, c.hnsw.ef_construction, c.hnsw.ef_search] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&c.hnsw.seed.to_le_bytes())?;
        w.write_all(&(ID_WIDTH as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for (s, id) in self.ids.iter().enumerate() {
            if !self.live[s] {
                continue;
            }
            let mut padded = [0u8; ID_WIDTH];
            padded[..id.len()].copy_from_slice(id.as_bytes());
            w.write_all(&padded)?;
            for x in self.slot(s) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::Format {
                expected: String::from_utf8_lossy(MAGIC).into_owned(),
                found: String::from_utf8_lossy(&magic).into_owned(),
            });
        }
        let version = read_u32(&mut r, "version")?;
        if version > FORMAT_VERSION || version == 0 {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let dim = read_u32(&mut r, "dim")? as usize;
        let mut codes = [0u8; 4];
        read_exact(&mut r, &mut codes, "metric/backend")?;
        let metric = match codes[0] {
            0 => Metric::Cosine,
            1 => Metric::InnerProduct,
            other => return Err(corrupt("metric", other)),
        };
        let backend = match codes[1] {
            0 => Backend::FlatExact,
            1 => Backend::Hnsw,
            other => return Err(corrupt("backend", other)),
        };
        let m = read_u32(&mut r, "hnsw m")? as usize;
        let ef_construction = read_u32(&mut r, "hnsw ef_construction")? as usize;
        let ef_search = read_u32(&mut r, "hnsw ef_search")? as usize;
        let mut seed = [0u8; 8];
        read_exact(&mut r, &mut seed, "hnsw seed")?;
        let id_width = read_u32(&mut r, "id width")? as usize;
        if id_width != ID_WIDTH {
            return Err(corrupt("id width", id_width));
        }
        let mut count = [0u8; 8];
        read_exact(&mut r, &mut count, "count")?;
        let count = u64::from_le_bytes(count);

        let config = IndexConfig {
            dim,
            metric,
            backend,
            hnsw: HnswParams {
                m,
                ef_construction,
                ef_search,
                seed: u64::from_le_bytes(seed),
            },
        };
        let mut index = Self::new(config)?;
        let mut id_buf = [0u8; ID_WIDTH];
        let mut vec_buf = vec![0u8; dim * 4];
        for _ in 0..count {
            read_exact(&mut r, &mut id_buf, "record id")?;
            let end = id_buf.iter().position(|&b| b == 0).unwrap_or(ID_WIDTH);
            let id = std::str::from_utf8(&id_buf[..end])
                .map_err(|_| corrupt("record id", "invalid UTF-8"))?
                .to_string();
            read_exact(&mut r, &mut vec_buf, "record vector")?;
            let v: Vec<f32> = vec_buf
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            if index.slots.contains_key(&id) {
                return Err(corrupt("record id", format!("duplicate `{id}`")));
            }
            index.insert_prepared(&id, v);
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("bin.tmp");
        self.write_to(std::fs::File::create(&tmp)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::NotFound(format!("{}: {e}", path.display())))?;
        Self::read_from(file)
    }
}

fn metric_code(m: Metric) -> u8 {
    match m {
        Metric::Cosine => 0,
        Metric::InnerProduct => 1,
    }
}

fn backend_code(b: Backend) -> u8 {
    match b {
        Backend::FlatExact => 0,
        Backend::Hnsw => 1,
    }
}

fn corrupt(what: &str, found: impl std::fmt::Display) -> Error {
    Error::Format {
        expected: format!("valid {what}"),
        found: found.to_string(),
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => corrupt(what, "end of file"),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}
