//! Shared plumbing between commands: corpus loading, sample construction,
//! embedding files and line pooling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sc2t_core::context::build_samples;
use sc2t_core::dataset::{read_corpus, LabeledDoc};
use sc2t_core::grid::{tokenize_document, CharCodec};
use sc2t_core::model::Sc2tConfig;
use sc2t_core::{ContextSample, Error, Result, Tensor};

/// Where a sample's token sits in the corpus.
#[derive(Clone, Debug)]
pub struct TokenMeta {
    pub doc: usize,
    pub line: usize,
    pub idx: usize,
    pub text: String,
}

/// A corpus expanded into context samples with parallel labels and positions.
pub struct CorpusSamples {
    pub docs: Vec<LabeledDoc>,
    pub samples: Vec<ContextSample>,
    pub labels: Vec<String>,
    pub meta: Vec<TokenMeta>,
}

pub fn load_corpus_samples(dir: &Path, cfg: &Sc2tConfig) -> Result<CorpusSamples> {
    let codec = CharCodec::default();
    if codec.d() != cfg.d {
        return Err(Error::Argument(format!(
            "model alphabet size {} does not match the codec ({})",
            cfg.d,
            codec.d()
        )));
    }
    let docs = read_corpus(dir)?;
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut meta = Vec::new();
    for (di, doc) in docs.iter().enumerate() {
        let grid = tokenize_document(&doc.render());
        let doc_samples = build_samples(&grid, &codec, &cfg.window())?;
        for (sample, (line, idx)) in doc_samples.iter().zip(grid.positions()) {
            let _ = sample;
            meta.push(TokenMeta {
                doc: di,
                line,
                idx,
                text: grid.lines()[line][idx].text.clone(),
            });
            labels.push(doc.label_at(line, idx)?.as_str().to_string());
        }
        samples.extend(doc_samples);
    }
    Ok(CorpusSamples {
        docs,
        samples,
        labels,
        meta,
    })
}

/// Coordinate-wise maximum of each (doc, line)'s token embeddings, in corpus
/// order. Lines without tokens do not appear.
pub fn pool_lines(embeddings: &Tensor, meta: &[TokenMeta]) -> (Vec<(usize, usize)>, Tensor) {
    let dim = embeddings.cols();
    let mut pooled: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (row, m) in meta.iter().enumerate() {
        let vec = &embeddings.data()[row * dim..(row + 1) * dim];
        pooled
            .entry((m.doc, m.line))
            .and_modify(|acc| {
                for (a, v) in acc.iter_mut().zip(vec) {
                    if *v > *a {
                        *a = *v;
                    }
                }
            })
            .or_insert_with(|| vec.to_vec());
    }
    let keys: Vec<(usize, usize)> = pooled.keys().copied().collect();
    let data: Vec<f64> = pooled.into_values().flatten().collect();
    let rows = keys.len();
    (keys, Tensor::from_vec(&[rows, dim], data).unwrap())
}

/// Token embeddings as tab-separated text: doc_id, line, token_idx, token,
/// then the embedding coordinates (shortest round-trip float formatting).
pub fn format_embeddings(
    docs: &[LabeledDoc],
    meta: &[TokenMeta],
    embeddings: &Tensor,
) -> String {
    let dim = embeddings.cols();
    let mut out = String::new();
    for (row, m) in meta.iter().enumerate() {
        write!(
            out,
            "{}\t{}\t{}\t{}",
            docs[m.doc].doc_id, m.line, m.idx, m.text
        )
        .unwrap();
        for v in &embeddings.data()[row * dim..(row + 1) * dim] {
            write!(out, "\t{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parse an embeddings file back into metadata rows and a `(N, dim)` tensor.
pub fn parse_embeddings(text: &str) -> Result<(Vec<(String, usize, usize, String)>, Tensor)> {
    let mut meta = Vec::new();
    let mut data = Vec::new();
    let mut dim = None;
    for (ln, line) in text.lines().enumerate() {
        let mut parts = line.split('\t');
        let bad = || Error::Data(format!("embeddings line {}: malformed row", ln + 1));
        let doc = parts.next().ok_or_else(bad)?.to_string();
        let lineno: usize = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let idx: usize = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let token = parts.next().ok_or_else(bad)?.to_string();
        let vec: std::result::Result<Vec<f64>, _> = parts.map(|v| v.parse::<f64>()).collect();
        let vec = vec.map_err(|_| bad())?;
        match dim {
            None => dim = Some(vec.len()),
            Some(d) if d != vec.len() => return Err(bad()),
            _ => {}
        }
        meta.push((doc, lineno, idx, token));
        data.push(vec);
    }
    let dim = dim.ok_or_else(|| Error::Data("embeddings file is empty".into()))?;
    if dim == 0 {
        return Err(Error::Data("embeddings file has no coordinates".into()));
    }
    let rows = data.len();
    let flat: Vec<f64> = data.into_iter().flatten().collect();
    Ok((meta, Tensor::from_vec(&[rows, dim], flat)?))
}
