use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, CommandFactory};
use temt_core::data::{
    filter_evaluable, load_dataset, write_dataset, Dataset, IngestConfig, SplitKind, MANIFEST_FILE,
};
use temt_core::infer::{
    classification_sets, evaluate, predict, predictions_from_tsv, predictions_to_tsv, triple_classification,
    ClassifierConfig, YearScorer,
};
use temt_core::scorer::{
    train_with_embeddings, AdamConfig, Checkpoint, NegativeKind, TrainConfig, CHECKPOINT_MANIFEST,
};
use temt_core::split::{make_inductive_split, SplitConfig};
use temt_core::text::{build_sentence, HashingEncoder, TableEncoder, TextEncoder, TripleEmbeddings, Variant};
use temt_core::Execution;

use crate::report::RunReport;
use crate::settings::{parse_config_file, EncoderSpec, Resolver};
use crate::{Cli, CliError, Command, Common, Encoding};

pub const PREDICTIONS_FILE: &str = "predictions.tsv";
pub const METRICS_FILE: &str = "metrics.tsv";

/// Files of a dataset directory, in the order they are checksummed.
pub fn dataset_files() -> Vec<String> {
    let c = IngestConfig::default();
    vec![
        c.entities,
        c.relations,
        c.descriptions,
        c.train,
        c.valid,
        c.test,
        MANIFEST_FILE.into(),
    ]
}

pub fn run(command: Command, m: &ArgMatches) -> Result<(), CliError> {
    match command {
        Command::Preprocess(a) => preprocess(a, m),
        Command::SplitInductive(a) => split_inductive(a, m),
        Command::EmitSentences(a) => emit_sentences(a, m),
        Command::Train(a) => train(a, m),
        Command::Predict(a) => predict_cmd(a, m),
        Command::Evaluate(a) => evaluate_cmd(a, m),
        Command::ClassifyTriples(a) => classify(a, m),
    }
}

/// Every setting name any subcommand accepts, in kebab case.
fn known_settings() -> BTreeSet<String> {
    let cmd = Cli::command();
    cmd.get_subcommands()
        .flat_map(|s| s.get_arguments().map(|a| a.get_id().as_str().replace('_', "-")))
        .filter(|id| !matches!(id.as_str(), "config" | "help" | "version"))
        .collect()
}

struct Base {
    data: PathBuf,
    out: PathBuf,
    exec: Execution,
}

/// Loads the config file, then resolves the settings every subcommand shares.
fn base<'m>(common: Common, m: &'m ArgMatches) -> Result<(Resolver<'m>, Base), CliError> {
    let file = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", p.display())))?;
            parse_config_file(&text, p, &known_settings())?
        }
        None => BTreeMap::new(),
    };
    let mut res = Resolver::new(m, file);
    res.optional::<PathBuf>("config", common.config)?;
    let data = res.required_path("data", common.data)?;
    let out = res.required_path("out", common.out)?;
    let threads: usize = res.get("threads", common.threads, "0")?;
    let exec: Execution = res.get("execution", common.execution, "parallel")?;
    if threads > 0 {
        // fails only if a pool already exists, which cannot happen before this point
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    Ok((res, Base { data, out, exec }))
}

fn usage(e: temt_core::Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("creating {}: {e}", dir.display())))
}

fn write_out(report: &mut RunReport, path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))?;
    report.output(path)
}

/// Loads a normalized dataset, pointing at `preprocess` when the directory is not one.
fn load_prepared(dir: &Path, report: &mut RunReport) -> Result<Dataset, CliError> {
    let cfg = IngestConfig::default();
    for f in [&cfg.entities, &cfg.relations, &cfg.train] {
        if !dir.join(f).is_file() {
            return Err(CliError::Data(format!(
                "no dataset in {}: {f} is missing; run `temt preprocess --data <raw dir> --out {}` first",
                dir.display(),
                dir.display()
            )));
        }
    }
    report.dataset_inputs(dir)?;
    let ds = load_dataset(dir, &cfg)?;
    note_dataset(&ds, report);
    Ok(ds)
}

fn note_dataset(ds: &Dataset, report: &mut RunReport) {
    report.note(format!(
        "dataset: {} entities, {} relations, {}/{}/{} train/valid/test facts, years [{}, {}]",
        ds.entities.len(),
        ds.relations.len(),
        ds.train.len(),
        ds.valid.len(),
        ds.test.len(),
        ds.range.min,
        ds.range.max
    ));
    for w in &ds.out_of_range {
        report.warn(format!("clamped for encoding: {w}"));
    }
}

struct EncoderChoice {
    spec: EncoderSpec,
    variant: Variant,
    text_dim: usize,
}

fn encoding(res: &mut Resolver<'_>, e: Encoding) -> Result<EncoderChoice, CliError> {
    Ok(EncoderChoice {
        variant: res.get("variant", e.variant, "ND")?,
        spec: res.get("encoder", e.encoder, "hash:0")?,
        text_dim: res.get("text_dim", e.text_dim, "768")?,
    })
}

fn build_encoder(spec: &EncoderSpec, text_dim: usize) -> Result<Box<dyn TextEncoder>, CliError> {
    match spec {
        EncoderSpec::Hash(seed) => Ok(Box::new(HashingEncoder::new(text_dim, *seed).map_err(usage)?)),
        EncoderSpec::Table(path) => {
            if !path.is_file() {
                return Err(CliError::Data(format!(
                    "embedding table {} not found; run `temt emit-sentences` and embed the sentence file \
                     with the extractor first",
                    path.display()
                )));
            }
            Ok(Box::new(TableEncoder::open(path)?))
        }
    }
}

fn preprocess(a: crate::PreprocessArgs, m: &ArgMatches) -> Result<(), CliError> {
    let (res, b) = base(a.common, m)?;
    let mut report = RunReport::new("preprocess");
    report.set_config(res.echo());
    let cfg = IngestConfig::default();
    for f in [&cfg.entities, &cfg.relations, &cfg.train, &cfg.valid, &cfg.test] {
        if !b.data.join(f).is_file() {
            return Err(CliError::Data(format!(
                "raw dataset {} lacks {f}",
                b.data.display()
            )));
        }
    }
    report.dataset_inputs(&b.data)?;
    let ds = load_dataset(&b.data, &cfg)?;
    note_dataset(&ds, &mut report);
    create_out(&b.out)?;
    let manifest = write_dataset(&ds, &b.out, &cfg)?;
    for (file, _) in &manifest.checksums {
        report.output(&b.out.join(file))?;
    }
    report.output(&b.out.join(MANIFEST_FILE))?;
    let path = report.write(&b.out)?;
    log::info!("wrote dataset to {} (report {})", b.out.display(), path.display());
    Ok(())
}

fn split_inductive(a: crate::SplitArgs, m: &ArgMatches) -> Result<(), CliError> {
    let (mut res, b) = base(a.common, m)?;
    let cfg = SplitConfig {
        valid_entities: res.get("valid_entities", a.valid_entities, "100")?,
        test_entities: res.get("test_entities", a.test_entities, "100")?,
        min_relation_edges: res.get("min_relation_edges", a.min_relation_edges, "100")?,
        seed: res.get("seed", a.seed, "42")?,
    };
    cfg.validate().map_err(usage)?;
    let mut report = RunReport::new("split-inductive");
    report.set_config(res.echo());
    let ds = load_prepared(&b.data, &mut report)?;
    let (split, summary) = make_inductive_split(&ds, &cfg)?;
    for w in &summary.warnings {
        report.warn(w.clone());
    }
    report.note(format!(
        "split: {}/{}/{} train/valid/test facts",
        summary.train_facts, summary.valid_facts, summary.test_facts
    ));
    create_out(&b.out)?;
    let ingest = IngestConfig::default();
    let manifest = write_dataset(&split, &b.out, &ingest)?;
    for (file, _) in &manifest.checksums {
        report.output(&b.out.join(file))?;
    }
    report.output(&b.out.join(MANIFEST_FILE))?;
    write_out(
        &mut report,
        &b.out.join("split_report.txt"),
        &summary.render(&split),
    )?;
    report.write(&b.out)?;
    Ok(())
}

fn emit_sentences(a: crate::EmitArgs, m: &ArgMatches) -> Result<(), CliError> {
    let (mut res, b) = base(a.common, m)?;
    let variant: Variant = res.get("variant", a.variant, "ND")?;
    let with_classification: bool = res.get("with_classification", a.with_classification, "false")?;
    let seed: u64 = res.get("seed", a.seed, "42")?;
    let mut report = RunReport::new("emit-sentences");
    report.set_config(res.echo());
    let ds = load_prepared(&b.data, &mut report)?;

    let mut triples = ds.distinct_triples();
    if with_classification {
        let sets = classification_sets(&ds, seed)?;
        let before = triples.len();
        let known: HashSet<_> = triples.iter().copied().collect();
        triples.extend(sets.triples().into_iter().filter(|t| !known.contains(t)));
        report.note(format!(
            "{} corrupted triples added for classification",
            triples.len() - before
        ));
    }
    let mut seen = HashSet::new();
    let mut text = String::new();
    for t in triples {
        let s = build_sentence(t, &ds, variant);
        if seen.insert(s.key()) {
            let _ = writeln!(text, "{}\t{}", s.key(), s.text);
        }
    }
    report.note(format!(
        "{} distinct sentences ({} variant)",
        seen.len(),
        variant.tag()
    ));
    create_out(&b.out)?;
    let path = b.out.join(format!("sentences.{}.tsv", variant.tag()));
    write_out(&mut report, &path, &text)?;
    report.write(&b.out)?;
    log::info!("wrote {} sentences to {}", seen.len(), path.display());
    Ok(())
}

fn train(a: crate::TrainArgs, m: &ArgMatches) -> Result<(), CliError> {
    let (mut res, b) = base(a.common, m)?;
    let enc = encoding(&mut res, a.encoding)?;
    let cfg = TrainConfig {
        learning_rate: res.get("learning_rate", a.learning_rate, "0.001")?,
        epochs: res.get("epochs", a.epochs, "50")?,
        margin: res.get("margin", a.margin, "2")?,
        negatives: res.get("negatives", a.negatives, "128")?,
        negative_kind: res.get("negative_type", a.negative_type, "time")?,
        batch_size: res.get("batch_size", a.batch_size, "512")?,
        hidden: res.get("hidden", a.hidden, "64")?,
        time_dim: res.get("time_dim", a.time_dim, "64")?,
        adam: AdamConfig {
            beta1: res.get("adam_beta1", a.adam_beta1, "0.9")?,
            beta2: res.get("adam_beta2", a.adam_beta2, "0.999")?,
            epsilon: res.get("adam_epsilon", a.adam_epsilon, "1e-8")?,
        },
        seed: res.get("seed", a.seed, "42")?,
        execution: b.exec,
    };
    cfg.validate().map_err(usage)?;
    let mut report = RunReport::new("train");
    report.set_config(res.echo());
    let encoder = build_encoder(&enc.spec, enc.text_dim)?;
    if matches!(enc.spec, EncoderSpec::Table(_)) && cfg.negative_kind == NegativeKind::EntityCorrupted {
        report.warn(
            "entity-corrupted negatives need table rows for corrupted triples; missing rows abort training",
        );
    }
    let ds = load_prepared(&b.data, &mut report)?;
    if ds.train.is_empty() {
        return Err(CliError::Data(format!("{} has no train facts", b.data.display())));
    }

    let mut embeddings = TripleEmbeddings::new();
    let outcome = train_with_embeddings(&ds, &mut embeddings, encoder.as_ref(), enc.variant, &cfg)?;
    let r = &outcome.report;
    report.note(format!(
        "{} training points, {} batches per epoch, {} optimizer steps",
        r.training_points, r.batches_per_epoch, r.optimizer_steps
    ));
    for n in &r.notes {
        report.note(n.clone());
    }
    if let Some(last) = r.epoch_losses.last() {
        report.note(format!("final epoch loss {last:.6}"));
    }

    let recorded: BTreeMap<String, String> = res
        .echo()
        .iter()
        .filter(|(k, _, _)| !matches!(k.as_str(), "config" | "data" | "out" | "threads" | "execution"))
        .map(|(k, v, _)| (k.clone(), v.clone()))
        .collect();
    let ckpt = Checkpoint {
        params: outcome.params,
        range: ds.range,
        variant: enc.variant,
        encoder: enc.spec.to_string(),
        seed: cfg.seed,
        config: recorded,
    };
    create_out(&b.out)?;
    ckpt.write(&b.out)?;
    report.output(&b.out.join(CHECKPOINT_MANIFEST))?;
    report.output(&b.out.join(temt_core::scorer::CHECKPOINT_PARAMS))?;
    let mut losses = String::from("epoch\tloss\n");
    for (i, l) in r.epoch_losses.iter().enumerate() {
        let _ = writeln!(losses, "{}\t{l:.6}", i + 1);
    }
    write_out(&mut report, &b.out.join("train_losses.tsv"), &losses)?;
    report.write(&b.out)?;
    Ok(())
}

fn predict_cmd(a: crate::PredictArgs, m: &ArgMatches) -> Result<(), CliError> {
    let (mut res, b) = base(a.common, m)?;
    let ckpt_dir = res
        .optional("checkpoint", a.checkpoint)?
        .unwrap_or_else(|| b.out.clone());
    let encoder_override: Option<EncoderSpec> = res.optional("encoder", a.encoder)?;
    let split: SplitKind = res.get("split", a.split, "test")?;
    let ks: Vec<usize> = res.list("k", a.k, "10")?;
    let theta: f64 = res.get("theta", a.theta, "0.65")?;
    let k = ks.iter().copied().max().unwrap_or(0);
    if k == 0 {
        return Err(CliError::Usage("k must be positive".into()));
    }
    if theta.is_nan() || theta <= 0.0 || theta > 1.0 {
        return Err(CliError::Usage(format!("theta must lie in (0, 1], got {theta}")));
    }
    let mut report = RunReport::new("predict");
    report.set_config(res.echo());

    if !ckpt_dir.join(CHECKPOINT_MANIFEST).is_file() {
        return Err(CliError::Data(format!(
            "no checkpoint in {}; run `temt train --out {}` first",
            ckpt_dir.display(),
            ckpt_dir.display()
        )));
    }
    report.input(&ckpt_dir.join(CHECKPOINT_MANIFEST))?;
    report.input(&ckpt_dir.join(temt_core::scorer::CHECKPOINT_PARAMS))?;
    let ckpt = Checkpoint::read(&ckpt_dir)?;
    let text_dim = ckpt.params.shape().text_dim;
    let spec = match encoder_override {
        Some(s) => s,
        None => ckpt
            .encoder
            .parse()
            .map_err(|e| CliError::Data(format!("checkpoint encoder `{}`: {e}", ckpt.encoder)))?,
    };
    let encoder = build_encoder(&spec, text_dim)?;
    if encoder.dim() != text_dim {
        return Err(CliError::Data(format!(
            "encoder {spec} gives {}-dimensional embeddings but the checkpoint expects {text_dim}",
            encoder.dim()
        )));
    }
    report.note(format!("encoder {spec}, variant {}", ckpt.variant.tag()));

    let ds = load_prepared(&b.data, &mut report)?;
    if ds.range != ckpt.range {
        report.warn(format!(
            "dataset years [{}, {}] differ from the checkpoint's [{}, {}]; scoring over the checkpoint's",
            ds.range.min, ds.range.max, ckpt.range.min, ckpt.range.max
        ));
    }
    let facts = filter_evaluable(ds.split(split));
    let skipped = ds.split(split).len() - facts.len();
    if skipped > 0 {
        report.note(format!(
            "{skipped} {} facts without a closed interval skipped",
            split.name()
        ));
    }
    if facts.is_empty() {
        report.warn(format!(
            "no closed {} facts; the prediction dump is empty",
            split.name()
        ));
    }
    let triples: Vec<_> = facts.iter().map(|f| f.quad.triple()).collect();
    let mut embeddings = TripleEmbeddings::new();
    embeddings.ensure(&triples, &ds, encoder.as_ref(), ckpt.variant, b.exec)?;
    let scorer = YearScorer::new(&ckpt.params, ckpt.range)?;
    let preds = predict(&facts, &embeddings, &scorer, k, theta, b.exec)?;
    report.note(format!("{} facts, up to {k} intervals each", preds.len()));
    create_out(&b.out)?;
    write_out(
        &mut report,
        &b.out.join(PREDICTIONS_FILE),
        &predictions_to_tsv(&preds),
    )?;
    report.write(&b.out)?;
    Ok(())
}

fn evaluate_cmd(a: crate::EvaluateArgs, m: &ArgMatches) -> Result<(), CliError> {
    let (mut res, b) = base(a.common, m)?;
    let pred_path = res
        .optional("predictions", a.predictions)?
        .unwrap_or_else(|| b.out.join(PREDICTIONS_FILE));
    let split: SplitKind = res.get("split", a.split, "test")?;
    let ks: Vec<usize> = res.list("k", a.k, "1,10")?;
    if ks.is_empty() || ks.contains(&0) {
        return Err(CliError::Usage("k values must be positive".into()));
    }
    let mut report = RunReport::new("evaluate");
    report.set_config(res.echo());

    if !pred_path.is_file() {
        return Err(CliError::Data(format!(
            "no prediction dump at {}; run `temt predict` first",
            pred_path.display()
        )));
    }
    report.input(&pred_path)?;
    let text = fs::read_to_string(&pred_path)
        .map_err(|e| CliError::Data(format!("reading {}: {e}", pred_path.display())))?;
    let preds = predictions_from_tsv(&text, &pred_path)?;
    let ds = load_prepared(&b.data, &mut report)?;
    let facts = filter_evaluable(ds.split(split));
    let depth = preds.iter().map(|p| p.intervals.len()).max().unwrap_or(0);
    for &k in &ks {
        if k > depth {
            report.warn(format!(
                "k={k} exceeds the {depth} intervals per fact in the dump"
            ));
        }
    }
    let table = evaluate(&facts, &preds, &ks)?;
    create_out(&b.out)?;
    write_out(&mut report, &b.out.join(METRICS_FILE), &table.to_tsv())?;
    report.write(&b.out)?;
    print!("{}", table.render());
    Ok(())
}

fn classify(a: crate::ClassifyArgs, m: &ArgMatches) -> Result<(), CliError> {
    let (mut res, b) = base(a.common, m)?;
    let enc = encoding(&mut res, a.encoding)?;
    let cfg = ClassifierConfig {
        hidden: res.get("mlp_hidden", a.mlp_hidden, "100")?,
        alpha: res.get("alpha", a.alpha, "0.05")?,
        learning_rate: res.get("mlp_learning_rate", a.mlp_learning_rate, "0.001")?,
        max_iter: res.get("max_iter", a.max_iter, "1000")?,
        batch_size: res.get("mlp_batch_size", a.mlp_batch_size, "200")?,
        tol: res.get("tol", a.tol, "1e-4")?,
        n_iter_no_change: res.get("n_iter_no_change", a.n_iter_no_change, "10")?,
        seed: res.get("seed", a.seed, "42")?,
    };
    if cfg.hidden == 0
        || cfg.batch_size == 0
        || cfg.max_iter == 0
        || cfg.learning_rate.is_nan()
        || cfg.learning_rate <= 0.0
        || cfg.alpha < 0.0
    {
        return Err(CliError::Usage(
            "classifier hidden width, batch size, max-iter and learning rate must be positive, alpha non-negative"
                .into(),
        ));
    }
    let mut report = RunReport::new("classify-triples");
    report.set_config(res.echo());
    let encoder = build_encoder(&enc.spec, enc.text_dim)?;
    let ds = load_prepared(&b.data, &mut report)?;
    let mut embeddings = TripleEmbeddings::new();
    let out = triple_classification(&ds, &mut embeddings, encoder.as_ref(), enc.variant, &cfg, b.exec)?;
    if out.leaked_removed > 0 {
        report.note(format!(
            "{} test triples also seen in train or valid were dropped",
            out.leaked_removed
        ));
    }
    if !out.fit.converged {
        report.warn(format!(
            "classifier stopped at max-iter {} before converging",
            cfg.max_iter
        ));
    }
    let mut text = String::new();
    let _ = writeln!(text, "accuracy\t{:.6}", out.accuracy);
    let _ = writeln!(text, "train_examples\t{}", out.train_examples);
    let _ = writeln!(text, "test_examples\t{}", out.test_examples);
    let _ = writeln!(text, "leaked_removed\t{}", out.leaked_removed);
    let _ = writeln!(text, "epochs\t{}", out.fit.epochs);
    let _ = writeln!(text, "final_loss\t{:.6}", out.fit.final_loss);
    let _ = writeln!(text, "converged\t{}", out.fit.converged);
    create_out(&b.out)?;
    write_out(&mut report, &b.out.join("classification.tsv"), &text)?;
    report.write(&b.out)?;
    println!(
        "accuracy {:.4} on {} test triples",
        out.accuracy, out.test_examples
    );
    Ok(())
}
