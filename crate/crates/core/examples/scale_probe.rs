//! Scale/quality probe. Usage:
//!   scale_probe <invoices> <epochs[,lr_epochs@lr...]> <batch> <nc,..> <del> <cr> <runs> [model_path] [k|nok,..]
//! Examples:
//!   scale_probe 1000 3 128 8,20 0 0 20 /tmp/m.bin nok,k0
//!   scale_probe 1000 4,2@3e-4 128 100 0.5 0.5 10 /tmp/d.bin nok,k0,k0.5,k1

use std::path::Path;
use std::time::Instant;

use sc2t_core::cluster::evaluate_protocol;
use sc2t_core::context::build_samples;
use sc2t_core::dataset::gen::{generate_retail_csv, GenOptions};
use sc2t_core::dataset::{disrupt_corpus, load_retail_csv, synthesize_messages, DisruptionSpec};
use sc2t_core::grid::{tokenize_document, CharCodec};
use sc2t_core::model::{build_model, Sc2tModel, Sc2tConfig, TrainOptions};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let invoices: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1000);
    let schedule: Vec<(usize, f64)> = args
        .get(2)
        .map(|s| {
            s.split(',')
                .map(|part| match part.split_once('@') {
                    Some((e, lr)) => (e.parse().unwrap(), lr.parse().unwrap()),
                    None => (part.parse().unwrap(), 1e-3),
                })
                .collect()
        })
        .unwrap_or_else(|| vec![(1, 1e-3)]);
    let batch: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(128);
    let ncs: Vec<usize> = args
        .get(4)
        .map(|s| s.split(',').map(|v| v.parse().unwrap()).collect())
        .unwrap_or_else(|| vec![8]);
    let del: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.0);
    let cr: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(0.0);
    let runs: usize = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(5);
    let model_path = args.get(8).cloned();
    let modes: Vec<String> = args
        .get(9)
        .map(|s| s.split(',').map(|v| v.to_string()).collect())
        .unwrap_or_else(|| vec!["nok".into(), "k0".into()]);

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("retail.csv");
    generate_retail_csv(&csv, &GenOptions { invoices, seed: 1, mean_rows: 24.0 }).unwrap();
    let records = load_retail_csv(&csv).unwrap();
    let mut docs = synthesize_messages(&records, invoices);
    let codec = CharCodec::default();
    if del > 0.0 || cr > 0.0 {
        docs = disrupt_corpus(&docs, &codec, &DisruptionSpec { del_pct: del, cr_pct: cr, seed: 3 }).unwrap();
    }

    let cfg = Sc2tConfig::default();
    let t = Instant::now();
    let mut samples = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for doc in &docs {
        let grid = tokenize_document(&doc.render());
        samples.extend(build_samples(&grid, &codec, &cfg.window()).unwrap());
        labels.extend(doc.flat_labels().map(|l| l.as_str().to_string()));
    }
    println!("build samples: {:?} ({} samples)", t.elapsed(), samples.len());

    let mut model = match &model_path {
        Some(p) if Path::new(p).exists() => {
            println!("loading model from {p}");
            Sc2tModel::load(Path::new(p)).unwrap()
        }
        _ => build_model(&cfg).unwrap(),
    };
    for (i, (epochs, lr)) in schedule.iter().enumerate() {
        if *epochs == 0 {
            continue;
        }
        let t = Instant::now();
        let report = model
            .train(&samples, &TrainOptions { epochs: *epochs, batch_size: batch, lr: *lr, seed: 7 + i as u64 })
            .unwrap();
        println!(
            "train {} epochs @ lr {}: {:?}, losses {:?}",
            epochs,
            lr,
            t.elapsed(),
            report.epoch_loss
        );
    }
    if let Some(p) = &model_path {
        model.save(Path::new(p)).unwrap();
        println!("saved model to {p}");
    }

    let lrefs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
    for mode in &modes {
        let t = Instant::now();
        let emb = if mode == "nok" {
            model.embed_all(&samples).unwrap()
        } else {
            let k: f64 = mode[1..].parse().unwrap();
            model.embed_all_k(&samples, k).unwrap()
        };
        let table = evaluate_protocol(&emb, &lrefs, &ncs, runs, 99).unwrap();
        println!("protocol {mode} ({runs} runs): {:?} -> {:?}", t.elapsed(), table);
    }
}
