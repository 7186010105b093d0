use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use caise_core::dialogue::{instances_from_dialogues, load_jsonl, save_jsonl, ImageRecord};
use caise_core::eval::{accuracy_lists, EvalReport};
use caise_core::split::{default_ratios, split_dialogues, Splits};
use caise_core::stats::stats;
use caise_core::synth::{synth_corpus, synthesize_dialogues, write_corpus, TemplateBank};
use caise_core::{execute, parse_command, Command, Corpus, Dialogue, Exec, ImageState, RasterImage, SearchBackend};
use caise_model::{evaluate, results_table, run_variant, train, AblationMode, Dataset, GenExt, ModelConfig, SyntheticSpec, Variant, Vocab};
use caise_service::ServiceConfig;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{Cli, Cmd, DataArgs, ModelArgs, Preset, SynthDataArgs};

pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub struct Output {
    pub json: Value,
    pub text: String,
    /// False turns into exit code 1 after printing.
    pub ok: bool,
}

impl Output {
    fn new(json: impl Serialize, text: String) -> Result<Self> {
        Ok(Output {
            json: serde_json::to_value(json)?,
            text,
            ok: true,
        })
    }
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} `{}` does not exist", path.display())))
    }
}

pub fn run(cli: Cli) -> Result<Output> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let config = cli.config.as_deref();
    match cli.command {
        Cmd::SynthCorpus { out, n, seed } => synth_corpus_cmd(&out, n, seed),
        Cmd::IngestCorpus { manifest, out, feature_dim } => ingest(&manifest, out, feature_dim),
        Cmd::SynthData(a) => synth_data(&a),
        Cmd::Train { data, model, out } => train_cmd(config, &data, &model, &out, exec),
        Cmd::Eval {
            data,
            checkpoint,
            preds,
            write_preds,
        } => eval_cmd(&data, checkpoint.as_deref(), preds.as_deref(), write_preds.as_deref(), exec),
        Cmd::Ablate { data, model, with_base, out } => ablate(config, &data, &model, with_base, out.as_deref(), exec),
        Cmd::Gradcheck { seeds, instances, tolerance } => gradcheck(&seeds, instances, tolerance),
        Cmd::Exec { image, cmd, out, corpus } => exec_cmd(image.as_deref(), &cmd, &out, corpus.as_deref()),
        Cmd::Serve {
            host,
            port,
            checkpoint,
            script,
            corpus,
        } => serve(config, host, port, checkpoint, script, corpus),
        Cmd::Stats { files } => stats_cmd(&files),
    }
}

fn synth_corpus_cmd(out: &Path, n: usize, seed: u64) -> Result<Output> {
    let entries = synth_corpus(seed, n);
    write_corpus(out, &entries)?;
    let manifest = out.join("manifest.jsonl");
    Output::new(
        json!({ "manifest": manifest, "entries": n }),
        format!("wrote {n} entries to {}\n", manifest.display()),
    )
}

fn ingest(manifest: &Path, out: Option<PathBuf>, feature_dim: usize) -> Result<Output> {
    require(manifest, "manifest")?;
    let corpus = Corpus::ingest(manifest, feature_dim)?;
    let out = out.unwrap_or_else(|| manifest.with_file_name("index.json"));
    corpus.index().save(&out)?;
    let tokens = corpus.index().postings.len();
    Output::new(
        json!({ "entries": corpus.entries().len(), "tokens": tokens, "index": out }),
        format!("indexed {} entries, {tokens} distinct tokens -> {}\n", corpus.entries().len(), out.display()),
    )
}

fn synth_data(a: &SynthDataArgs) -> Result<Output> {
    let corpus = match &a.corpus {
        Some(m) => {
            require(m, "corpus manifest")?;
            Corpus::ingest(m, a.feature_dim)?
        }
        None => SyntheticSpec {
            corpus_seed: a.corpus_seed,
            corpus_size: a.corpus_size,
            ..SyntheticSpec::default()
        }
        .corpus(a.feature_dim)?,
    };
    let ds = synthesize_dialogues(a.seed, a.dialogues, &corpus, &TemplateBank::builtin())?;
    let splits = split_dialogues(&ds, default_ratios(), a.split_seed)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("create {}", a.out.display()))?;
    let mut counts = serde_json::Map::new();
    let mut text = String::new();
    for (name, part) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        save_jsonl(&a.out.join(format!("{name}.jsonl")), part)?;
        let instances = instances_from_dialogues(part)?.len();
        counts.insert(name.into(), json!({ "dialogues": part.len(), "instances": instances }));
        let _ = writeln!(text, "{name:<6}{:>6} dialogues{:>7} instances", part.len(), instances);
    }
    Output::new(Value::Object(counts), text)
}

fn model_config(config: Option<&Path>, args: &ModelArgs) -> Result<ModelConfig> {
    let mut cfg = match args.preset {
        Preset::Desk => ModelConfig::desk(),
        Preset::Full => ModelConfig::default(),
        Preset::Micro => ModelConfig::micro(),
    };
    if let Some(path) = config {
        require(path, "config file")?;
        let text = std::fs::read_to_string(path)?;
        let mut table: toml::Table = text.parse().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if let Some(toml::Value::Table(overrides)) = table.remove("model") {
            let mut merged = toml::Table::try_from(&cfg)?;
            merged.extend(overrides);
            cfg = merged.try_into().map_err(|e| CliError::Usage(format!("{} [model]: {e}", path.display())))?;
        }
    }
    if let Some(s) = &args.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(m) = args.ablation {
        cfg.ablation = m;
    }
    if let Some(g) = args.gate {
        cfg.gate = g;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.hidden {
        cfg.hidden = v;
    }
    if let Some(v) = args.embed {
        cfg.embed = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn load_dialogues(path: &Path) -> Result<Vec<Dialogue>> {
    require(path, "dialogue file")?;
    Ok(load_jsonl(path)?)
}

/// Loads a split directory, or builds the synthetic benchmark. The model's
/// feature length follows the data.
fn dataset(data: &DataArgs, cfg: &mut ModelConfig) -> Result<Dataset> {
    let Some(dir) = &data.data else {
        return Ok(SyntheticSpec::default().dataset(&SyntheticSpec::default().corpus(cfg.feature_dim)?)?);
    };
    require(dir, "data directory")?;
    let test_path = dir.join("test.jsonl");
    let splits = Splits {
        train: load_dialogues(&dir.join("train.jsonl"))?,
        val: load_dialogues(&dir.join("val.jsonl"))?,
        test: if test_path.exists() { load_jsonl(&test_path)? } else { Vec::new() },
    };
    let fd = splits
        .train
        .iter()
        .flat_map(|d| &d.images)
        .flat_map(|i| &i.detections)
        .map(|d| d.feature.len())
        .next();
    if let Some(fd) = fd {
        cfg.feature_dim = fd;
    }
    Ok(Dataset::from_splits(splits)?)
}

fn train_cmd(config: Option<&Path>, data: &DataArgs, args: &ModelArgs, out: &Path, exec: Exec) -> Result<Output> {
    let mut cfg = model_config(config, args)?;
    let ds = dataset(data, &mut cfg)?;
    std::fs::create_dir_all(out).with_context(|| format!("create {}", out.display()))?;
    let mut reports = Vec::new();
    let mut text = format!("{:<8}{:>8}{:>10}{:>10}{:>12}\n", "seed", "best", "val", "test", "dialogue");
    for &seed in &cfg.seeds {
        let (model, mut report) = train(&ds.train, &ds.val, &cfg, seed, exec, |e| {
            eprintln!(
                "seed {seed} epoch {:>3}  nll {:.4}  val {:.2}  ({:.1}s)",
                e.epoch, e.train_nll, e.val_accuracy, e.seconds
            )
        })?;
        if !ds.test.is_empty() {
            report.test = Some(evaluate(&model, &ds.test, exec).1);
        }
        model.save(out.join(format!("model-{seed}.ckpt")))?;
        std::fs::write(out.join(format!("report-{seed}.json")), serde_json::to_string_pretty(&report)?)?;
        let (t, dsr) = report.test.as_ref().map_or((f64::NAN, f64::NAN), |r| (r.total, r.dialogue_success));
        let _ = writeln!(text, "{seed:<8}{:>8}{:>10.2}{t:>10.2}{dsr:>12.2}", report.best_epoch, report.best_val_accuracy);
        reports.push(report);
    }
    let tests: Vec<EvalReport> = reports.iter().filter_map(|r| r.test.clone()).collect();
    if !tests.is_empty() {
        text.push('\n');
        text.push_str(&EvalReport::mean(&tests).to_table("mean over seeds"));
    }
    Output::new(json!({ "runs": reports, "out": out }), text)
}

fn read_preds(path: &Path) -> Result<Vec<Option<Command>>> {
    require(path, "predictions file")?;
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(|l| match l.trim() {
            "-" => None,
            s => parse_command(s).ok(),
        })
        .collect())
}

fn eval_cmd(data: &Path, checkpoint: Option<&Path>, preds: Option<&Path>, write_preds: Option<&Path>, exec: Exec) -> Result<Output> {
    let instances = instances_from_dialogues(&load_dialogues(data)?)?;
    let report = match (checkpoint, preds) {
        (Some(ckpt), _) => {
            require(ckpt, "checkpoint")?;
            let model = GenExt::load(ckpt)?;
            let (items, report) = evaluate(&model, &instances, exec);
            if let Some(path) = write_preds {
                let lines: String = items.iter().map(|i| format!("{}\n", i.pred.as_ref().map_or("-".to_string(), Command::to_string))).collect();
                std::fs::write(path, lines)?;
            }
            report
        }
        (None, Some(p)) => {
            let preds = read_preds(p)?;
            let gts: Vec<Command> = instances.iter().map(|i| i.target.clone()).collect();
            let ids: Vec<String> = instances.iter().map(|i| i.dialogue_id.clone()).collect();
            accuracy_lists(&preds, &gts, &ids)?
        }
        (None, None) => return Err(CliError::Usage("give --checkpoint or --preds".into())),
    };
    let text = report.to_table("eval");
    Output::new(&report, text)
}

fn ablate(config: Option<&Path>, data: &DataArgs, args: &ModelArgs, with_base: bool, out: Option<&Path>, exec: Exec) -> Result<Output> {
    let mut cfg = model_config(config, args)?;
    let ds = dataset(data, &mut cfg)?;
    if ds.test.is_empty() {
        return Err(CliError::Usage("ablation needs a test split".into()));
    }
    let mut variants: Vec<Variant> = AblationMode::ALL.iter().map(|&m| Variant::ablation(m)).collect();
    if with_base {
        variants.push(Variant::base());
    }
    let mut results = Vec::new();
    for v in &variants {
        eprintln!("training {} ({} seeds)", v.name, cfg.seeds.len());
        let name = v.name.clone();
        results.push(run_variant(&ds, &cfg, v, &cfg.seeds, exec, |seed, e| {
            eprintln!("  {name} seed {seed} epoch {:>3}  nll {:.4}  val {:.2}", e.epoch, e.train_nll, e.val_accuracy)
        })?);
    }
    if let Some(path) = out {
        std::fs::write(path, serde_json::to_string_pretty(&results)?)?;
    }
    let text = results_table(&results);
    Output::new(&results, text)
}

#[derive(Serialize)]
struct GradRow {
    seed: u64,
    instance: usize,
    max_rel_error: f64,
    worst_block: String,
}

fn gradcheck(seeds: &[u64], per_seed: usize, tolerance: f64) -> Result<Output> {
    if per_seed == 0 || seeds.is_empty() {
        return Err(CliError::Usage("need at least one seed and one instance".into()));
    }
    let cfg = ModelConfig::micro();
    let mut rows = Vec::new();
    for &seed in seeds {
        let spec = SyntheticSpec {
            corpus_size: 300,
            dialogues: per_seed.max(3),
            dialogue_seed: seed,
            ..SyntheticSpec::default()
        };
        let dialogues = spec.dialogues(&spec.corpus(cfg.feature_dim)?)?;
        let insts = instances_from_dialogues(&dialogues)?;
        let picks: Vec<usize> = (0..per_seed).map(|k| k * (insts.len() - 1) / (per_seed - 1).max(1)).collect();
        for i in picks {
            let inst = &insts[i];
            let model = GenExt::new(cfg.clone(), Vocab::from_instances([inst]), seed)?;
            let report = model.check_gradients(inst, caise_model::GRADCHECK_STEP)?;
            rows.push(GradRow {
                seed,
                instance: i,
                max_rel_error: report.max_rel_error,
                worst_block: report.worst().map(|b| b.name.clone()).unwrap_or_default(),
            });
        }
    }
    let max = rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let pass = max < tolerance;
    let mut text = format!("{:<8}{:>10}{:>16}  worst block\n", "seed", "instance", "max rel error");
    for r in &rows {
        let _ = writeln!(text, "{:<8}{:>10}{:>16.3e}  {}", r.seed, r.instance, r.max_rel_error, r.worst_block);
    }
    let _ = writeln!(text, "max relative error {max:.3e} (tolerance {tolerance:e}): {}", if pass { "PASS" } else { "FAIL" });
    let mut out = Output::new(json!({ "rows": rows, "max_rel_error": max, "tolerance": tolerance, "pass": pass }), text)?;
    out.ok = pass;
    Ok(out)
}

/// Search backend for runs without a corpus.
struct NoCorpus;

impl SearchBackend for NoCorpus {
    fn top_result(&self, _: &[String]) -> std::result::Result<caise_core::exec::Retrieved, caise_core::ExecError> {
        Err(caise_core::ExecError::Backend("no corpus given; pass --corpus".into()))
    }
}

fn exec_cmd(image: Option<&Path>, cmd: &str, out: &Path, corpus: Option<&Path>) -> Result<Output> {
    let command = parse_command(cmd).map_err(|e| CliError::Usage(format!("{cmd}: {e}")))?;
    let current = match image {
        Some(p) => {
            require(p, "image")?;
            Some(ImageState {
                image: RasterImage::load(p)?,
                record: ImageRecord {
                    id: format!("file:{}", p.display()),
                    detections: Vec::new(),
                },
            })
        }
        None => None,
    };
    let corpus = match corpus {
        Some(m) => {
            require(m, "corpus manifest")?;
            Some(Corpus::ingest(m, 16)?)
        }
        None => None,
    };
    let search: &dyn SearchBackend = match &corpus {
        Some(c) => c,
        None => &NoCorpus,
    };
    let next = execute(&command, current.as_ref(), search).map_err(|e| anyhow!("{}: {e}", e.class()))?;
    next.image.save(out)?;
    Output::new(
        json!({ "command": command.to_string(), "image_id": next.record.id, "out": out, "width": next.image.width(), "height": next.image.height() }),
        format!("{command} -> {} ({}x{})\n", out.display(), next.image.width(), next.image.height()),
    )
}

fn serve(
    config: Option<&Path>,
    host: Option<String>,
    port: Option<u16>,
    checkpoint: Option<PathBuf>,
    script: Option<PathBuf>,
    corpus: Option<PathBuf>,
) -> Result<Output> {
    if let Some(p) = config {
        require(p, "config file")?;
    }
    let mut cfg = ServiceConfig::load(config).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(h) = host {
        cfg.host = h;
    }
    if let Some(p) = port {
        cfg.port = p;
    }
    if checkpoint.is_some() {
        cfg.checkpoint = checkpoint;
    }
    if script.is_some() {
        cfg.script = script;
    }
    if corpus.is_some() {
        cfg.corpus = corpus;
    }
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .json()
        .init();
    let state = caise_service::build_state(&cfg)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(caise_service::serve(&cfg, state))?;
    Output::new(json!({ "stopped": true }), String::new())
}

fn stats_cmd(files: &[PathBuf]) -> Result<Output> {
    let mut all = Vec::new();
    for f in files {
        all.extend(load_dialogues(f)?);
    }
    let report = stats(&all);
    let text = report.to_table();
    Output::new(&report, text)
}

