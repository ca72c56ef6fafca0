//! Command-line pipeline: corpus synthesis, disruption, training, embedding,
//! clustering, evaluation and realignment.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.

mod commands;
mod pipeline;
mod settings;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use sc2t_core::model::TrainOptions;
use sc2t_core::{Error, Result, Sc2tConfig};

use settings::Settings;

#[derive(Parser)]
#[command(name = "sc2t", version, about = "Self-supervised token embeddings for plain-text tables")]
struct Cli {
    /// Optional `key = value` config file; command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Cap the worker thread pool.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic retail-style invoice CSV (demo data).
    GenData {
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Number of invoices.
        #[arg(long, default_value_t = 1000)]
        invoices: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Average rows per invoice.
        #[arg(long, default_value_t = 24.0)]
        mean_rows: f64,
    },
    /// Synthesize plain-text invoice messages from a retail CSV.
    Synth {
        /// Input CSV with the 8 invoice columns.
        #[arg(long)]
        csv: PathBuf,
        /// Keep the first N distinct invoices.
        #[arg(long, default_value_t = usize::MAX)]
        invoices: usize,
        /// Output corpus directory (message files + labels.tsv).
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply token deletion and character replacement to a corpus.
    Disrupt {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Token deletion fraction in [0, 1).
        #[arg(long, default_value_t = 0.0)]
        del: f64,
        /// Character replacement fraction in [0, 1).
        #[arg(long, default_value_t = 0.0)]
        cr: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the embedding model on a corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory for model.bin and train_report.txt.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Context embedding width.
        #[arg(long)]
        ctx_dim: Option<usize>,
        /// Character embedding width.
        #[arg(long)]
        char_dim: Option<usize>,
        /// Maximum token length.
        #[arg(long)]
        token_len: Option<usize>,
        /// Horizontal window (odd, includes the target).
        #[arg(long)]
        h_window: Option<usize>,
        /// Vertical window (odd, includes the target line).
        #[arg(long)]
        v_window: Option<usize>,
        /// Convolution filter count.
        #[arg(long)]
        filters: Option<usize>,
        /// Width of the per-character dense layer.
        #[arg(long)]
        char_fc: Option<usize>,
        #[arg(long)]
        dropout_inner: Option<f64>,
        #[arg(long)]
        dropout_merge: Option<f64>,
    },
    /// Write token embeddings for a corpus as tab-separated text.
    Embed {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// K coefficient in [0, 1]; omit for the NoK embedding.
        #[arg(long)]
        k: Option<f64>,
    },
    /// Cluster an embeddings file with k-means++.
    Cluster {
        #[arg(long)]
        embeddings: PathBuf,
        /// Number of clusters.
        #[arg(long)]
        clusters: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Corpus directory used to attach ground-truth labels.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Max-pool tokens per line and cluster the lines instead.
        #[arg(long)]
        lines: bool,
    },
    /// Mean clustering homogeneity over independent k-means runs.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Cluster counts, comma separated.
        #[arg(long, value_delimiter = ',')]
        nc: Vec<usize>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// K coefficient in [0, 1]; omit for the NoK embedding.
        #[arg(long)]
        k: Option<f64>,
        /// Also write the table as tab-separated values.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild a properly aligned table from a ragged message.
    Realign {
        /// Input message file.
        #[arg(long)]
        message: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// K coefficient in [0, 1]; omit for the NoK embedding.
        #[arg(long)]
        k: Option<f64>,
        /// Write the aligned text here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the aligned cell matrix as tab-separated values.
        #[arg(long)]
        cells: Option<PathBuf>,
        /// Force a reference line index instead of the longest table line.
        #[arg(long)]
        reference: Option<usize>,
        /// Skip line-role clustering and align every line.
        #[arg(long)]
        all_lines: bool,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Argument(_) => 1,
        Error::NonFinite(_) | Error::StaleTape => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Argument(format!("cannot configure {threads} threads: {e}")))?;
    }
    let settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::GenData {
            out,
            invoices,
            seed,
            mean_rows,
        } => {
            let seed = settings.get("seed", seed, 0)?;
            commands::gen_data(&out, invoices, seed, mean_rows)
        }
        Command::Synth { csv, invoices, out } => commands::synth(&csv, invoices, &out),
        Command::Disrupt {
            corpus,
            out,
            del,
            cr,
            seed,
        } => {
            let seed = settings.require("seed", seed)?;
            commands::disrupt(&corpus, &out, del, cr, seed)
        }
        Command::Train {
            corpus,
            out,
            seed,
            epochs,
            batch,
            lr,
            ctx_dim,
            char_dim,
            token_len,
            h_window,
            v_window,
            filters,
            char_fc,
            dropout_inner,
            dropout_merge,
        } => {
            let seed = settings.require("seed", seed)?;
            let defaults = Sc2tConfig::default();
            let cfg = Sc2tConfig {
                d: defaults.d,
                s_e: settings.get("ctx-dim", ctx_dim, defaults.s_e)?,
                ch_e: settings.get("char-dim", char_dim, defaults.ch_e)?,
                l_t: settings.get("token-len", token_len, defaults.l_t)?,
                h_w: settings.get("h-window", h_window, defaults.h_w)?,
                v_w: settings.get("v-window", v_window, defaults.v_w)?,
                n_f: settings.get("filters", filters, defaults.n_f)?,
                char_fc_units: settings.get("char-fc", char_fc, defaults.char_fc_units)?,
                dropout_inner: settings.get("dropout-inner", dropout_inner, defaults.dropout_inner)?,
                dropout_merge: settings.get("dropout-merge", dropout_merge, defaults.dropout_merge)?,
                seed,
            };
            let train_defaults = TrainOptions::default();
            let opts = TrainOptions {
                epochs: settings.get("epochs", epochs, train_defaults.epochs)?,
                batch_size: settings.get("batch", batch, train_defaults.batch_size)?,
                lr: settings.get("lr", lr, train_defaults.lr)?,
                seed,
            };
            commands::train(&corpus, &out, &commands::TrainParams { cfg, opts })
        }
        Command::Embed {
            corpus,
            model,
            out,
            k,
        } => {
            let k = settings.optional("k", k)?;
            commands::embed(&corpus, &model, &out, k)
        }
        Command::Cluster {
            embeddings,
            clusters,
            seed,
            out,
            labels,
            lines,
        } => {
            let seed = settings.require("seed", seed)?;
            commands::cluster(&embeddings, clusters, seed, &out, labels.as_deref(), lines)
        }
        Command::Eval {
            corpus,
            model,
            nc,
            runs,
            seed,
            k,
            out,
        } => {
            let seed = settings.require("seed", seed)?;
            let runs = settings.get("runs", runs, 100)?;
            let nc = if nc.is_empty() {
                match settings.optional::<String>("nc", None)? {
                    Some(raw) => raw
                        .split(',')
                        .map(|v| {
                            v.trim()
                                .parse()
                                .map_err(|_| Error::Argument(format!("nc: cannot parse {v:?}")))
                        })
                        .collect::<Result<Vec<usize>>>()?,
                    None => vec![8, 20, 100],
                }
            } else {
                nc
            };
            let k = settings.optional("k", k)?;
            commands::eval(&corpus, &model, &nc, runs, seed, k, out.as_deref())
        }
        Command::Realign {
            message,
            model,
            seed,
            k,
            out,
            cells,
            reference,
            all_lines,
        } => {
            let seed = settings.require("seed", seed)?;
            let k = settings.optional("k", k)?;
            commands::realign(
                &message,
                &model,
                seed,
                k,
                out.as_deref(),
                cells.as_deref(),
                reference,
                all_lines,
            )
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
