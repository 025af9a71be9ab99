use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use eog::checkpoint::{self, CheckpointInfo};
use eog::config::TrainConfig;
use eog::corpus::{
    corpus_stats, filter_ungrounded, load_embeddings, read_documents, read_pubtator,
    write_documents, Document, ExclusionList, Vocabulary,
};
use eog::diagnostics::gradient_suite;
use eog::eval::{ablation_sweep, distance_breakdown, parse_grid, score, sweep_tsv, Metrics};
use eog::graph::{graph_dump, EdgeFamily};
use eog::model::{relation_names, structure_masks, EogModel};
use eog::trainer::{train, TrainOptions};

use crate::args::{
    ConfigArgs, DistanceArgs, EvaluateArgs, GradcheckArgs, GraphDumpArgs, PrepareArgs, SweepArgs,
    TrainArgs,
};

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<eog::Error> for Failure {
    fn from(e: eog::Error) -> Self {
        match e {
            eog::Error::Config(_) => Failure::Usage(e.to_string()),
            eog::Error::Divergence { .. } => Failure::Numeric(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

pub type Outcome = Result<(), Failure>;

fn write(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Outcome {
    std::fs::create_dir_all(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Outcome {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).map_err(|e| Failure::Data(e.to_string()))?);
        text.push('\n');
    }
    write(path, &text)
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(args: &ConfigArgs) -> Result<TrainConfig, Failure> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    }
    for (k, v) in args.overrides() {
        cfg.set(k, v).map_err(|e| Failure::Usage(format!("--{k}: {e}")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn short_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .take(8)
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn load_docs(path: &Path) -> Result<Vec<Document>, Failure> {
    read_documents(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn load_exclusions(path: Option<&PathBuf>) -> Result<Option<ExclusionList>, Failure> {
    let Some(p) = path else { return Ok(None) };
    let text = std::fs::read_to_string(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
    Ok(Some(ExclusionList::parse(&text).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?))
}

fn new_model(
    cfg: &TrainConfig,
    train_docs: &[Document],
    embeddings: Option<&PathBuf>,
) -> Result<EogModel, Failure> {
    let vocab = Vocabulary::from_documents(train_docs);
    let table = match embeddings {
        Some(p) => {
            let loaded = load_embeddings(p, &vocab, cfg.word_dim, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
                .map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
            eprintln!("embedding coverage {:.4}", loaded.coverage);
            Some(loaded.table)
        }
        None => None,
    };
    Ok(EogModel::new(cfg.clone(), vocab, relation_names(train_docs)?, table)?)
}

fn stats_tsv(docs: &[Document], cfg: &TrainConfig) -> String {
    let st = corpus_stats(docs, cfg.head_type, cfg.tail_type);
    let mut s = String::from("statistic\tvalue\n");
    for (k, v) in [
        ("documents", st.documents),
        ("positive_pairs", st.positive_pairs),
        ("positive_intra", st.positive_intra),
        ("positive_inter", st.positive_inter),
        ("negative_pairs", st.negative_pairs),
    ] {
        let _ = writeln!(s, "{k}\t{v}");
    }
    for (t, n) in &st.entities {
        let _ = writeln!(s, "entities.{t}\t{n}");
    }
    for (t, n) in &st.mentions {
        let _ = writeln!(s, "mentions.{t}\t{n}");
    }
    s
}

pub fn prepare(args: &PrepareArgs) -> Outcome {
    let cfg = resolve_config(&args.config)?;
    let parsed = read_pubtator(&args.input)
        .map_err(|e| Failure::Data(format!("{}: {e}", args.input.display())))?;
    let docs: Vec<Document> = if args.keep_ungrounded {
        parsed.documents
    } else {
        parsed.documents.iter().map(filter_ungrounded).collect()
    };
    create_dir(&args.out_dir)?;
    write_documents(&args.out_dir.join("documents.jsonl"), &docs)?;
    write(&args.out_dir.join("vocab.txt"), &Vocabulary::from_documents(&docs).to_text())?;
    let stats = stats_tsv(&docs, &cfg);
    write(&args.out_dir.join("stats.tsv"), &stats)?;
    if parsed.dropped_annotations + parsed.dropped_relations > 0 {
        eprintln!(
            "dropped {} annotations and {} relations",
            parsed.dropped_annotations, parsed.dropped_relations
        );
    }
    print!("{stats}");
    Ok(())
}

pub fn train_command(args: &TrainArgs) -> Outcome {
    let cfg = resolve_config(&args.config)?;
    let train_docs = load_docs(&args.train)?;
    let dev_docs = match &args.dev {
        Some(p) => load_docs(p)?,
        None => Vec::new(),
    };
    let exclusions = load_exclusions(args.exclude.as_ref())?;
    let model = new_model(&cfg, &train_docs, args.embeddings.as_ref())?;

    let config_text = cfg.to_text();
    let run_dir = args.runs_dir.join(short_hash(&config_text));
    create_dir(&run_dir)?;
    write(&run_dir.join("config.txt"), &config_text)?;
    let options = TrainOptions {
        log: Some(run_dir.join("train_log.jsonl")),
        exclusions,
        target_f1: args.target_f1,
    };
    let out = train(model, &train_docs, &dev_docs, &options)?;
    let mut summary = String::from("epoch\ttrain_loss\tdev_P\tdev_R\tdev_F1\n");
    for r in &out.records {
        let _ = write!(summary, "{}\t{:.6}", r.epoch, r.train_loss);
        match &r.dev {
            Some(m) => {
                let o = &m.overall;
                let _ = writeln!(summary, "\t{:.4}\t{:.4}\t{:.4}", o.precision, o.recall, o.f1);
            }
            None => summary.push_str("\t\t\t\n"),
        }
        eprintln!("epoch {} loss {:.6} ({:.2} s)", r.epoch, r.train_loss, r.seconds);
    }
    write(&run_dir.join("summary.tsv"), &summary)?;
    checkpoint::save(
        &run_dir.join("checkpoint"),
        &out.model,
        CheckpointInfo {
            best_f1: out.best_f1,
            epoch: out.best_epoch,
        },
    )?;
    eprintln!("best epoch {} dev F1 {:.4}", out.best_epoch, out.best_f1);
    println!("{}", run_dir.display());
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<EogModel, Failure> {
    Ok(checkpoint::load(path)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?
        .0)
}

pub fn evaluate(args: &EvaluateArgs) -> Outcome {
    let model = load_checkpoint(&args.checkpoint)?;
    let docs = load_docs(&args.data)?;
    let exclusions = load_exclusions(args.exclude.as_ref())?;
    let preds = model.predict(&docs, exclusions.as_ref())?;
    let metrics = score(&preds, model.none_class())?;
    let table = metrics.table();
    if let Some(dir) = &args.output {
        create_dir(dir)?;
        write(&dir.join("metrics.tsv"), &table)?;
        write_jsonl(&dir.join("predictions.jsonl"), &preds)?;
    }
    print!("{table}");
    Ok(())
}

pub fn graph_dump_command(args: &GraphDumpArgs) -> Outcome {
    let cfg = resolve_config(&args.config)?;
    let plan = eog::model::apply_variant(&cfg)?;
    let docs = load_docs(&args.data)?;
    let mut initial_counts = [0usize; 6];
    let mut after_counts = [0usize; 6];
    let mut records = Vec::new();
    for doc in &docs {
        let (initial, after) = structure_masks(&plan, doc);
        for r in graph_dump(doc, &initial, &after) {
            initial_counts[r.family.index()] += r.exists as usize;
            after_counts[r.family.index()] += r.exists_after_inference as usize;
            if args.records.is_some() {
                records.push(r);
            }
        }
    }
    if let Some(path) = &args.records {
        write_jsonl(path, &records)?;
    }
    let mut s = String::from("family\tinitial\tafter_inference\n");
    for f in EdgeFamily::ALL {
        let _ = writeln!(s, "{f}\t{}\t{}", initial_counts[f.index()], after_counts[f.index()]);
    }
    print!("{s}");
    Ok(())
}

pub fn distance_command(args: &DistanceArgs) -> Outcome {
    let model = load_checkpoint(&args.checkpoint)?;
    let docs = load_docs(&args.data)?;
    let exclusions = load_exclusions(args.exclude.as_ref())?;
    let preds = model.predict(&docs, exclusions.as_ref())?;
    let rows = distance_breakdown(&preds, model.none_class());
    let mut s = String::from("distance\tpairs\tP\tR\tF1\tTP\tFP\tFN\n");
    for r in &rows {
        let p = &r.scores;
        let _ = writeln!(
            s,
            "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}\t{}",
            r.distance, r.pairs, p.precision, p.recall, p.f1, p.counts.tp, p.counts.fp, p.counts.fn_
        );
    }
    if let Some(dir) = &args.output {
        create_dir(dir)?;
        write(&dir.join("distance.tsv"), &s)?;
        write_jsonl(&dir.join("distance.jsonl"), &rows)?;
    }
    print!("{s}");
    Ok(())
}

pub fn sweep_command(args: &SweepArgs) -> Outcome {
    let base = resolve_config(&args.config)?;
    let grid_text = std::fs::read_to_string(&args.grid)
        .map_err(|e| Failure::Usage(format!("{}: {e}", args.grid.display())))?;
    let grid = parse_grid(&grid_text)?;
    let train_docs = load_docs(&args.train)?;
    let dev_docs = load_docs(&args.dev)?;
    let test_docs = match &args.test {
        Some(p) => Some(load_docs(p)?),
        None => None,
    };
    let run_dir = args
        .runs_dir
        .join(format!("sweep-{}", short_hash(&format!("{}\n{grid_text}", base.to_text()))));
    create_dir(&run_dir)?;
    write(&run_dir.join("config.txt"), &base.to_text())?;
    write(&run_dir.join("grid.txt"), &grid_text)?;
    let rows = ablation_sweep(&base, &grid, |cfg| -> eog::Result<Metrics> {
        let model = new_model(cfg, &train_docs, args.embeddings.as_ref())
            .map_err(|f| eog::Error::InvalidArgument(f.message().to_string()))?;
        let out = train(model, &train_docs, &dev_docs, &TrainOptions::default())?;
        let eval_docs = test_docs.as_deref().unwrap_or(&dev_docs);
        let preds = out.model.predict(eval_docs, None)?;
        score(&preds, out.model.none_class())
    });
    let tsv = sweep_tsv(&rows);
    write(&run_dir.join("sweep.tsv"), &tsv)?;
    write_jsonl(&run_dir.join("sweep.jsonl"), &rows)?;
    print!("{tsv}");
    eprintln!("{}", run_dir.display());
    Ok(())
}

pub fn gradcheck(args: &GradcheckArgs) -> Outcome {
    if !(args.eps > 0.0) {
        return Err(Failure::Usage(format!("--eps must be positive, got {}", args.eps)));
    }
    let checks = gradient_suite(args.seed, args.eps)?;
    println!("layer\tentries\tmax_relative\tmax_absolute\tstatus");
    let mut failed = Vec::new();
    for c in &checks {
        let ok = c.max_relative < args.tolerance;
        if !ok {
            failed.push(c.layer.clone());
        }
        println!(
            "{}\t{}\t{:.3e}\t{:.3e}\t{}",
            c.layer,
            c.entries,
            c.max_relative,
            c.max_absolute,
            if ok { "ok" } else { "FAIL" }
        );
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numeric(format!(
            "gradient error above {} in {}",
            args.tolerance,
            failed.join(", ")
        )))
    }
}
