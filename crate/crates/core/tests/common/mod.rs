//! Shared helpers for the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use medrag_core::embed::{EmbeddingProvider, ProviderConfig};
use medrag_core::eval::{GoldQa, GoldRetrieval, GoldSet};
use medrag_core::ingest::{
    build_corpus, normalize_figure, BuildOptions, Chunk, ChunkKind, Corpus, EutilsClient, EutilsConfig,
};
use medrag_core::llm::Generator;
use medrag_core::orchestrator::{KbSettings, KnowledgeBase, Pipeline, PipelineConfig};
use medrag_core::store::ObjectStore;
use medrag_core::Execution;
use medrag_testkit::{esearch_reply, fixtures, FixtureResponse, FixtureServer};

pub const DIM: usize = 32;
pub const SEED: u64 = 11;

/// PubMed stand-in: `/esearch.fcgi` lists `ids`, `/efetch.fcgi` serves `xml`.
pub fn pubmed_server(ids: &'static [&'static str], xml: &'static str) -> FixtureServer {
    FixtureServer::start(move |req| match req.path.as_str() {
        "/esearch.fcgi" => FixtureResponse::xml(esearch_reply(ids, ids.len())),
        "/efetch.fcgi" => FixtureResponse::xml(xml),
        _ => FixtureResponse::status(404),
    })
}

pub fn eutils_config(server: &FixtureServer) -> EutilsConfig {
    EutilsConfig {
        esearch_url: server.url("/esearch.fcgi"),
        efetch_url: server.url("/efetch.fcgi"),
        db: "pmc".into(),
        rate_limit_rps: 1000.0,
        timeout_ms: 5_000,
        max_attempts: 3,
        backoff_ms: 1,
        ..EutilsConfig::default()
    }
}

/// search, fetch, resolve figures, build the corpus.
pub fn ingest(server: &FixtureServer, term: &str) -> Corpus {
    let client = EutilsClient::new(eutils_config(server)).unwrap();
    let refs = client.search(term, 100, 20).unwrap();
    let mut outcome = client.fetch(&refs, 20);
    assert!(outcome.errors.is_empty(), "fetch errors: {:?}", outcome.errors);
    client.resolve_figures(&mut outcome.articles);
    let build = build_corpus(outcome.articles, &BuildOptions::default());
    assert!(build.errors.is_empty(), "build errors: {:?}", build.errors);
    build.corpus
}

pub fn provider() -> EmbeddingProvider {
    EmbeddingProvider::new(ProviderConfig::deterministic(DIM, SEED)).unwrap()
}

pub fn build_kb(corpus: Corpus, settings: KbSettings) -> KnowledgeBase {
    let objects = ObjectStore::from_corpus(corpus).unwrap();
    KnowledgeBase::build(objects, &provider(), &provider(), settings, Execution::default()).unwrap()
}

pub fn pipeline(kb: KnowledgeBase, generator: Option<Box<dyn Generator>>) -> Pipeline {
    Pipeline::new(Arc::new(kb), provider(), generator, PipelineConfig::default()).unwrap()
}

fn chunk(pmid: &str, id: &str, kind: ChunkKind, text: &str, order: u32, image: Option<String>) -> Chunk {
    Chunk {
        chunk_id: id.to_string(),
        pmid: pmid.to_string(),
        section_title: match kind {
            ChunkKind::FigureCaption => "Figure 1".into(),
            _ => "Results".into(),
        },
        kind,
        text: text.to_string(),
        order,
        linked_image_id: image,
    }
}

/// One labeled query of the synthetic corpus. The first `planted` relevant
/// ids are exact copies of the query text; `missing` relevant ids name
/// chunks that are not in the corpus.
#[derive(Debug, Clone)]
pub struct PlantedQuery {
    pub query: String,
    pub planted: Vec<String>,
    pub missing: Vec<String>,
}

impl PlantedQuery {
    pub fn relevant(&self) -> BTreeSet<String> {
        self.planted.iter().chain(&self.missing).cloned().collect()
    }
}

pub struct Synthetic {
    pub corpus: Corpus,
    pub queries: Vec<PlantedQuery>,
    pub gold: GoldSet,
    /// Reply produced by the scripted generator for every QA question.
    pub reply: &'static str,
}

const TOPICS: [&str; 10] = [
    "hippocampal volume loss",
    "plasma phosphorylated tau",
    "cholinesterase inhibitor dosing",
    "sleep hygiene programs",
    "caregiver burden scales",
    "agitation under antipsychotics",
    "amyloid PET positivity",
    "music therapy sessions",
    "falls in nursing homes",
    "retinal imaging markers",
];

const QUERIES: [&str; 4] = [
    "Which plasma markers predict conversion from mild cognitive impairment?",
    "How should donepezil be titrated in moderate dementia?",
    "Do structured exercise programs reduce agitation in residents?",
    "What support lowers depression among family caregivers?",
];

/// Ten articles, the first two with figures. Queries 0..4 have 1, 2, 3 and 1
/// planted copies placed only in image-free articles; query 3 also lists a
/// relevant id that is absent from the corpus.
pub fn synthetic() -> Synthetic {
    let figures = [
        normalize_figure(fixtures::PNG_4X3, "PNG", "50000001", 0).unwrap().png,
        normalize_figure(fixtures::JPEG_2X2, "JPEG", "50000002", 0).unwrap().png,
    ];
    let mut corpus = Corpus::default();
    for a in 0..10usize {
        let pmid = (50_000_001 + a).to_string();
        for j in 0..3u32 {
            let text = format!(
                "Article {a} passage {j} reports {} in cohort {}.",
                TOPICS[(a + j as usize) % TOPICS.len()],
                a * 7 + j as usize
            );
            corpus
                .chunks
                .push(chunk(&pmid, &format!("{pmid}:s{j}:b0"), ChunkKind::Text, &text, j, None));
        }
        if a < 2 {
            let image_id = format!("{pmid}-fig0");
            corpus.chunks.push(chunk(
                &pmid,
                &format!("{pmid}:f0"),
                ChunkKind::FigureCaption,
                &format!("Figure 1: {} in article {a}.", TOPICS[a]),
                3,
                Some(image_id.clone()),
            ));
            corpus.images.insert(image_id, figures[a].clone());
        }
    }

    // (query index, host article) for each planted copy.
    let placements = [(0, 3), (1, 4), (1, 5), (2, 6), (2, 7), (2, 8), (3, 9)];
    let mut queries: Vec<PlantedQuery> = QUERIES
        .iter()
        .map(|q| PlantedQuery {
            query: q.to_string(),
            planted: Vec::new(),
            missing: Vec::new(),
        })
        .collect();
    for (q, a) in placements {
        let pmid = (50_000_001 + a).to_string();
        let id = format!("{pmid}:s9:b{q}");
        corpus
            .chunks
            .push(chunk(&pmid, &id, ChunkKind::Text, QUERIES[q], 9, None));
        queries[q].planted.push(id);
    }
    queries[3].missing.push("59999999:s0:b0".into());

    let gold = GoldSet {
        retrieval: queries
            .iter()
            .map(|q| GoldRetrieval {
                query: q.query.clone(),
                relevant_ids: q.relevant(),
            })
            .collect(),
        qa: vec![
            GoldQa {
                question: "Which deposits define Alzheimer pathology?".into(),
                gold_answers: vec!["beta amyloid plaques".into()],
            },
            GoldQa {
                question: "Name a hallmark lesion of Alzheimer disease.".into(),
                gold_answers: vec!["tau tangles".into(), "amyloid plaques".into()],
            },
        ],
    };
    Synthetic {
        corpus,
        queries,
        gold,
        reply: "Beta amyloid plaques.",
    }
}
