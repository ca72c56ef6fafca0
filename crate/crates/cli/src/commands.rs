//! Command implementations.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sc2t_core::cluster::{cluster_lines, evaluate_protocol, kmeans_pp, largest_cluster};
use sc2t_core::context::build_samples;
use sc2t_core::dataset::gen::{generate_retail_csv, GenOptions};
use sc2t_core::dataset::{
    disrupt_corpus, load_retail_csv, read_corpus, synthesize_messages, write_corpus,
    DisruptionSpec,
};
use sc2t_core::grid::{expand_tabs, tokenize_document, CharCodec};
use sc2t_core::model::{build_model, Sc2tModel, TrainOptions};
use sc2t_core::realign::{align_table_against, Overflow};
use sc2t_core::{Error, Result, Sc2tConfig, Tensor};

use crate::pipeline::{format_embeddings, load_corpus_samples, parse_embeddings, pool_lines};

pub fn gen_data(out: &Path, invoices: usize, seed: u64, mean_rows: f64) -> Result<()> {
    generate_retail_csv(
        out,
        &GenOptions {
            invoices,
            seed,
            mean_rows,
        },
    )?;
    println!("wrote {} invoices to {}", invoices, out.display());
    Ok(())
}

pub fn synth(csv: &Path, invoices: usize, out: &Path) -> Result<()> {
    // Validate the input fully before creating any output.
    let records = load_retail_csv(csv)?;
    let docs = synthesize_messages(&records, invoices);
    if docs.is_empty() {
        return Err(Error::Data("the CSV contains no invoices".into()));
    }
    write_corpus(out, &docs)?;
    let lines: usize = docs.iter().map(|d| d.tokens.len()).sum();
    let tokens: usize = docs.iter().map(|d| d.num_tokens()).sum();
    println!(
        "synthesized {} documents, {} lines, {} tokens -> {}",
        docs.len(),
        lines,
        tokens,
        out.display()
    );
    Ok(())
}

pub fn disrupt(corpus: &Path, out: &Path, del: f64, cr: f64, seed: u64) -> Result<()> {
    let docs = read_corpus(corpus)?;
    let codec = CharCodec::default();
    let spec = DisruptionSpec {
        del_pct: del,
        cr_pct: cr,
        seed,
    };
    let disrupted = disrupt_corpus(&docs, &codec, &spec)?;
    write_corpus(out, &disrupted)?;
    let before: usize = docs.iter().map(|d| d.num_tokens()).sum();
    let after: usize = disrupted.iter().map(|d| d.num_tokens()).sum();
    println!(
        "disrupted corpus: {} -> {} tokens (del {:.2}, cr {:.2}) -> {}",
        before,
        after,
        del,
        cr,
        out.display()
    );
    Ok(())
}

pub struct TrainParams {
    pub cfg: Sc2tConfig,
    pub opts: TrainOptions,
}

pub fn train(corpus: &Path, out: &Path, params: &TrainParams) -> Result<()> {
    let corpus_samples = load_corpus_samples(corpus, &params.cfg)?;
    let mut model = build_model(&params.cfg)?;
    let report = model.train(&corpus_samples.samples, &params.opts)?;
    fs::create_dir_all(out)?;
    model.save(&out.join("model.bin"))?;

    let mut text = String::new();
    let _ = writeln!(text, "samples = {}", report.samples);
    let _ = writeln!(text, "epochs = {}", params.opts.epochs);
    let _ = writeln!(text, "batch = {}", params.opts.batch_size);
    let _ = writeln!(text, "lr = {}", params.opts.lr);
    let _ = writeln!(text, "seed = {}", params.opts.seed);
    for (i, loss) in report.epoch_loss.iter().enumerate() {
        let _ = writeln!(text, "epoch_loss_{} = {}", i + 1, loss);
    }
    fs::write(out.join("train_report.txt"), &text)?;
    // wall time goes to stderr only, keeping the artifacts byte-reproducible
    eprintln!("trained in {:.1?}", report.wall);
    print!("{text}");
    Ok(())
}

fn embed_corpus(
    model: &Sc2tModel,
    samples: &[sc2t_core::ContextSample],
    k: Option<f64>,
) -> Result<Tensor> {
    match k {
        None => model.embed_all(samples),
        Some(k) => model.embed_all_k(samples, k),
    }
}

pub fn embed(corpus: &Path, model_path: &Path, out: &Path, k: Option<f64>) -> Result<()> {
    let model = Sc2tModel::load(model_path)?;
    let cs = load_corpus_samples(corpus, model.config())?;
    let emb = embed_corpus(&model, &cs.samples, k)?;
    fs::write(out, format_embeddings(&cs.docs, &cs.meta, &emb))?;
    println!(
        "wrote {} embeddings of dimension {} -> {}",
        emb.shape()[0],
        emb.cols(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cluster(
    embeddings: &Path,
    clusters: usize,
    seed: u64,
    out: &Path,
    labels_dir: Option<&Path>,
    lines: bool,
) -> Result<()> {
    let text = fs::read_to_string(embeddings)?;
    let (meta, emb) = parse_embeddings(&text)?;
    let mut rows = String::new();
    let assignment;
    if lines {
        let doc_ids = doc_id_table(&meta);
        let doc_idx: HashMap<&str, usize> = doc_ids
            .iter()
            .enumerate()
            .map(|(i, d)| (d.as_str(), i))
            .collect();
        let token_meta: Vec<crate::pipeline::TokenMeta> = meta
            .iter()
            .map(|(doc, line, idx, text)| crate::pipeline::TokenMeta {
                doc: doc_idx[doc.as_str()],
                line: *line,
                idx: *idx,
                text: text.clone(),
            })
            .collect();
        let (keys, pooled) = pool_lines(&emb, &token_meta);
        assignment = kmeans_pp(&pooled, clusters, seed)?;
        for ((doc, line), cluster) in keys.iter().zip(&assignment.assignment) {
            let _ = writeln!(rows, "{}\t{}\t{}", doc_ids[*doc], line, cluster);
        }
    } else {
        assignment = kmeans_pp(&emb, clusters, seed)?;
        let labels = labels_dir.map(load_label_map).transpose()?;
        for ((doc, line, idx, token), cluster) in meta.iter().zip(&assignment.assignment) {
            let label = labels
                .as_ref()
                .and_then(|m| m.get(&(doc.clone(), *line, *idx)).cloned())
                .unwrap_or_else(|| "-".to_string());
            let _ = writeln!(rows, "{line}\t{idx}\t{token}\t{cluster}\t{label}\t{doc}");
        }
    }
    fs::write(out, rows)?;
    println!(
        "k = {}, inertia = {:.6}, sizes = {:?} -> {}",
        assignment.k(),
        assignment.inertia,
        assignment.sizes(),
        out.display()
    );
    Ok(())
}

/// Distinct doc ids in first-appearance order.
fn doc_id_table(meta: &[(String, usize, usize, String)]) -> Vec<String> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut out = Vec::new();
    for (doc, _, _, _) in meta {
        if !seen.contains_key(doc.as_str()) {
            seen.insert(doc.as_str(), out.len());
            out.push(doc.clone());
        }
    }
    out
}

fn load_label_map(dir: &Path) -> Result<HashMap<(String, usize, usize), String>> {
    let docs = read_corpus(dir)?;
    let mut map = HashMap::new();
    for doc in docs {
        for (line, labels) in doc.labels.iter().enumerate() {
            for (idx, label) in labels.iter().enumerate() {
                map.insert(
                    (doc.doc_id.clone(), line, idx),
                    label.as_str().to_string(),
                );
            }
        }
    }
    Ok(map)
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    corpus: &Path,
    model_path: &Path,
    nc_list: &[usize],
    runs: usize,
    seed: u64,
    k: Option<f64>,
    out: Option<&Path>,
) -> Result<()> {
    let model = Sc2tModel::load(model_path)?;
    let cs = load_corpus_samples(corpus, model.config())?;
    let emb = embed_corpus(&model, &cs.samples, k)?;
    let labels: Vec<&str> = cs.labels.iter().map(|s| s.as_str()).collect();
    let table = evaluate_protocol(&emb, &labels, nc_list, runs, seed)?;
    match k {
        Some(k) => println!(
            "mode: K = {k} (best char % = {:.0}); runs per nc: {runs}",
            100.0 * k
        ),
        None => println!("mode: NoK; runs per nc: {runs}"),
    }
    println!("{:>6}  {:>10}", "nc", "mean_h");
    for (nc, h) in &table {
        println!("{nc:>6}  {h:>10.4}");
    }
    if let Some(out) = out {
        let mut tsv = String::new();
        for (nc, h) in &table {
            let _ = writeln!(tsv, "{nc}\t{h}");
        }
        fs::write(out, tsv)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn realign(
    message: &Path,
    model_path: &Path,
    seed: u64,
    k: Option<f64>,
    out: Option<&Path>,
    cells: Option<&Path>,
    reference: Option<usize>,
    all_lines: bool,
) -> Result<()> {
    let raw = fs::read_to_string(message)?;
    let text = expand_tabs(&raw, 8);
    let grid = tokenize_document(&text);
    if grid.num_tokens() == 0 {
        return Err(Error::Data("the message contains no tokens".into()));
    }
    let model = Sc2tModel::load(model_path)?;
    let codec = CharCodec::default();
    let samples = build_samples(&grid, &codec, &model.config().window())?;
    let emb = embed_corpus(&model, &samples, k)?;

    // split embeddings per line, in grid order
    let dim = emb.cols();
    let mut per_line: Vec<Vec<Vec<f64>>> = vec![Vec::new(); grid.num_lines()];
    for (row, (line, _)) in grid.positions().enumerate() {
        per_line[line].push(emb.data()[row * dim..(row + 1) * dim].to_vec());
    }

    let non_empty: Vec<usize> = (0..grid.num_lines())
        .filter(|&l| !grid.lines()[l].is_empty())
        .collect();
    let table_lines: Vec<usize> = if all_lines {
        non_empty.clone()
    } else {
        let pooled: Vec<f64> = non_empty
            .iter()
            .flat_map(|&l| {
                let mut acc = per_line[l][0].clone();
                for v in &per_line[l][1..] {
                    for (a, b) in acc.iter_mut().zip(v) {
                        if *b > *a {
                            *a = *b;
                        }
                    }
                }
                acc
            })
            .collect();
        let pooled = Tensor::from_vec(&[non_empty.len(), dim], pooled)?;
        match cluster_lines(&pooled, seed) {
            Ok(assign) => {
                let table = largest_cluster(&assign);
                non_empty
                    .iter()
                    .zip(&assign.assignment)
                    .filter(|(_, &c)| c == table)
                    .map(|(&l, _)| l)
                    .collect()
            }
            Err(e) => {
                eprintln!("line clustering unavailable ({e}); treating every line as table");
                non_empty.clone()
            }
        }
    };

    let result = align_table_against(&grid, &table_lines, reference, &per_line, Overflow::Truncate)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!("reference line: {}", result.reference);
    match out {
        Some(path) => fs::write(path, &result.rendered)?,
        None => print!("{}", result.rendered),
    }
    if let Some(cells_path) = cells {
        let n = grid.lines()[result.reference].len();
        let mut tsv = String::new();
        for (line, mapping) in &result.mappings {
            let mut cells_row = vec![String::new(); n];
            for (ti, &col) in mapping.iter().enumerate() {
                cells_row[col] = grid.lines()[*line][ti].text.clone();
            }
            let _ = writeln!(tsv, "{}\t{}", line, cells_row.join("\t"));
        }
        fs::write(cells_path, tsv)?;
    }
    Ok(())
}
