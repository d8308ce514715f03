//! Command-line front end for training and evaluating quaternion CNN
//! acoustic models.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qcnn::train::{
    decode, evaluate, extract_manifest, load_dataset, read_manifest, real_equivalent_param_count, write_manifest,
    Checkpoint, Config, Model, Trainer,
};
use qcnn::Error;

#[derive(Parser)]
#[command(name = "qcnn", version, about = "Quaternion CNN + CTC phoneme recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert the WAV files listed in a manifest to feature files.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for feature files and the rewritten manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes train.log, last.ckpt and best.ckpt.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training manifest.
        #[arg(long)]
        manifest: PathBuf,
        /// Development manifest used for model selection.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Adam epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// SGD epochs after the Adam phase.
        #[arg(long = "fine-tune-epochs")]
        fine_tune_epochs: Option<usize>,
        /// Resume from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Report CTC loss and phone error rate on a manifest.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Print best-path transcriptions, one `id<TAB>phones` line per utterance.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the layer table and parameter counts.
    Inspect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the built-in oracle checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<Config, Error> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(w) = self.workers {
            cfg.training.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn init_pool(workers: usize) {
    // Fails only if a pool already exists, which is harmless.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
}

fn load_checkpoint(path: &Path, common: &Common) -> Result<(Config, Model), Error> {
    let ckpt = Checkpoint::load(path)?;
    let mut cfg = ckpt.config.clone();
    if common.config.is_some() {
        let given = common.load()?;
        ckpt.check_config(&given)?;
        cfg = given;
    }
    if let Some(w) = common.workers {
        cfg.training.workers = w;
    }
    let mut model = Model::build(&cfg.model, cfg.training.seed)?;
    if !model.same_layout(&ckpt.params) {
        return Err(Error::ConfigMismatch);
    }
    model.store = ckpt.params;
    Ok((cfg, model))
}

fn append_log(path: &Path, line: &str) -> Result<(), Error> {
    let io = |e| Error::Io { path: path.to_path_buf(), source: e };
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    writeln!(f, "{line}").map_err(io)
}

/// Runs the command; `Ok` carries the exit code.
fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Extract { common, manifest, out } => {
            let cfg = common.load()?;
            init_pool(cfg.training.workers);
            let entries = read_manifest(&manifest)?;
            let written = extract_manifest(&entries, &cfg.features, &out)?;
            let listing = out.join("manifest.tsv");
            write_manifest(&listing, &written)?;
            println!("extracted={} manifest={}", written.len(), listing.display());
        }
        Command::Train { common, manifest, dev, out, seed, epochs, fine_tune_epochs, checkpoint } => {
            let mut cfg = common.load()?;
            if let Some(s) = seed {
                cfg.training.seed = s;
            }
            if let Some(e) = epochs {
                cfg.training.epochs = e;
            }
            if let Some(e) = fine_tune_epochs {
                cfg.training.fine_tune_epochs = e;
            }
            cfg.validate()?;
            init_pool(cfg.training.workers);
            let symbols = cfg.model.symbol_table()?;
            let train = load_dataset(&manifest, &cfg.features, &symbols)?;
            if train.is_empty() {
                return Err(Error::Format { what: "manifest", detail: format!("{} lists no utterances", manifest.display()) });
            }
            let dev = dev.map(|d| load_dataset(&d, &cfg.features, &symbols)).transpose()?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            let mut trainer = match checkpoint {
                Some(p) => {
                    let ckpt = Checkpoint::load(&p)?;
                    let best_path = p.with_file_name("best.ckpt");
                    let best = if best_path.exists() && best_path != p {
                        Some(Checkpoint::load(&best_path)?.params)
                    } else {
                        None
                    };
                    Trainer::resume(cfg.clone(), ckpt, best)?
                }
                None => Trainer::new(cfg.clone())?,
            };
            std::fs::write(out.join("config.toml"), cfg.to_toml()).map_err(|e| Error::Io { path: out.join("config.toml"), source: e })?;
            let log = out.join("train.log");
            trainer.fit(&train, dev.as_ref(), |t, record| {
                let line = record.log_line();
                println!("{line}");
                append_log(&log, &line)?;
                t.checkpoint().save(&out.join("last.ckpt"))?;
                if record.improved {
                    t.best_checkpoint().save(&out.join("best.ckpt"))?;
                }
                for id in &record.skipped {
                    eprintln!("warning: skipped {id}: too few frames for its transcription");
                }
                Ok(())
            })?;
            if !out.join("best.ckpt").exists() {
                trainer.best_checkpoint().save(&out.join("best.ckpt"))?;
            }
        }
        Command::Eval { common, checkpoint, manifest } => {
            let (cfg, model) = load_checkpoint(&checkpoint, &common)?;
            init_pool(cfg.training.workers);
            let data = load_dataset(&manifest, &cfg.features, model.symbols())?;
            let map = qcnn::train::PhoneMap::resolve(&cfg.training.phone_map)?;
            let r = evaluate(&model, &data, &map)?;
            println!(
                "utts={} loss={:.6} per={:.4} errors={} ref_len={} exact={} skipped={}",
                data.len(),
                r.loss,
                100.0 * r.per(),
                r.stats.errors,
                r.stats.reference_len,
                r.stats.exact,
                r.skipped.len()
            );
        }
        Command::Decode { common, checkpoint, manifest, out } => {
            let (cfg, model) = load_checkpoint(&checkpoint, &common)?;
            init_pool(cfg.training.workers);
            let data = load_dataset(&manifest, &cfg.features, model.symbols())?;
            let mut text = String::new();
            for u in &data.utterances {
                let labels = decode(&model, u)?;
                text.push_str(&format!("{}\t{}\n", u.id, model.symbols().decode(&labels).join(" ")));
            }
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| Error::Io { path: p, source: e })?,
                None => print!("{text}"),
            }
        }
        Command::Inspect { common, checkpoint } => {
            let (cfg, model) = match checkpoint {
                Some(p) => load_checkpoint(&p, &common)?,
                None => {
                    let cfg = common.load()?;
                    let model = Model::build(&cfg.model, cfg.training.seed)?;
                    (cfg, model)
                }
            };
            println!("{:<10} {:>34} {:>12} {:>14} {:>12}", "layer", "shape", "q_weights", "real_weights", "params");
            for row in model.layer_table() {
                println!(
                    "{:<10} {:>34} {:>12} {:>14} {:>12}",
                    row.name,
                    format!("{:?}", row.shape),
                    row.weights,
                    row.real_weights,
                    row.params
                );
            }
            let total = model.count_params();
            let real = real_equivalent_param_count(&cfg.model);
            println!("params={total} real_equivalent_params={real} ratio={:.4}", total as f64 / real as f64);
        }
        Command::Selftest { seed } => {
            let results = qcnn::selftest::run_all(seed)?;
            let mut failed = 0;
            for r in &results {
                println!("{} {} value={:e} threshold={:e}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.value, r.threshold);
                failed += usize::from(!r.passed);
            }
            if failed > 0 {
                return Ok(3);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
