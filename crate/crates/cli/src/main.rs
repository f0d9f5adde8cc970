use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use ertl_core::config::PipelineConfig;
use ertl_core::dataset_io::{load_labels, save_dataset, save_labels, LabeledPairs};
use ertl_core::embedding::load_embeddings;
use ertl_core::encoder::{read_pairs, write_pairs, PairSidecar};
use ertl_core::eval::{estimate_performance, Allocation, FileOracle, LabelOracle, PromptOracle};
use ertl_core::pipeline::{encode_relations, load_run_metrics, run_pipeline, RelationInput, REPORT_JSON};
use ertl_core::report::{summarize, Summary};
use ertl_core::source_select::{
    relatedness_gate, select_source, DEFAULT_MCC_THRESHOLD, DEFAULT_RUNS, DEFAULT_TRAIN_FRACTION,
};
use ertl_core::synth::{generate_synthetic, generate_text_tuples, ShiftSpec, SyntheticData, PRESETS};
use ertl_core::transfer::{train, Scenario, SourceData, TargetData, TransferModel};
use ertl_core::{ModelF64, PairF64};

#[derive(Parser)]
#[command(name = "ertl", version, about = "Transfer learning for entity resolution")]
struct Cli {
    /// TOML config of dotted keys, or a run manifest (.json).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Block two relations (or one, for deduplication) and write similarity vectors.
    Encode(EncodeArgs),
    /// Train on target labels only.
    TrainNot(TrainArgs),
    /// Train on pooled source labels only.
    TrainNvt(TrainArgs),
    /// Instance-weighted training for an unlabeled target.
    TrainS1(TrainArgs),
    /// Feature augmentation with limited target labels.
    TrainS2(TrainArgs),
    /// Feature augmentation with limited labels on both sides plus unlabeled target pairs.
    TrainS3(TrainArgs),
    /// Decide whether a source and a target are related enough to transfer.
    Relatedness(RelatednessArgs),
    /// Rank candidate sources by distance to the target.
    SelectSource(SelectArgs),
    /// Estimate precision, recall and F1 of a model under a labeling budget.
    Estimate(EstimateArgs),
    /// Generate synthetic source and target pools with a chosen shift.
    Synth(SynthArgs),
    /// Summarize a finished run.
    Report(ReportArgs),
    /// Run the configured pipeline end to end.
    Run,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    left: PathBuf,
    /// Omit to deduplicate `left` against itself.
    #[arg(long)]
    right: Option<PathBuf>,
    #[arg(long, default_value = "id")]
    left_id: String,
    #[arg(long, default_value = "id")]
    right_id: String,
    /// `left_id,right_id,label` truth file to attach.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Embedding file; defaults to `encode.embeddings`.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value = "pairs")]
    name: String,
}

#[derive(Args)]
struct TrainArgs {
    /// Source pair files; unlabeled rows inform only the domain separator.
    #[arg(long = "source")]
    sources: Vec<PathBuf>,
    /// Target pair file.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Unlabeled target pair file (labels are ignored).
    #[arg(long)]
    unlabeled: Option<PathBuf>,
    /// Discard labels in the target file instead of rejecting them.
    #[arg(long)]
    drop_target_labels: bool,
}

#[derive(Args)]
struct RelatednessArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RUNS)]
    runs: usize,
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_MCC_THRESHOLD)]
    threshold: f64,
}

#[derive(Args)]
struct SelectArgs {
    /// Candidate as `name=path` or `path` (named by file stem).
    #[arg(long = "candidate", required = true)]
    candidates: Vec<String>,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RUNS)]
    runs: usize,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Pairs to evaluate on.
    #[arg(long, alias = "pairs")]
    pool: PathBuf,
    /// Truth file answering oracle queries; without it labels in the pool
    /// are used, or labels are asked for on the terminal when there are none.
    #[arg(long, alias = "oracle-labels")]
    labels: Option<PathBuf>,
    /// Always ask on the terminal.
    #[arg(long)]
    interactive: bool,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    strata: Option<usize>,
    #[arg(long)]
    allocation: Option<Allocation>,
}

#[derive(Args)]
struct SynthArgs {
    /// One of none, prior, covariate, conditional, adversarial, disjoint.
    #[arg(long, default_value = "none")]
    preset: String,
    /// Pairs per domain.
    #[arg(long)]
    size: Option<usize>,
    /// Write two small relations and a truth file instead of vectors.
    #[arg(long)]
    text: bool,
    /// Entities in text mode.
    #[arg(long, default_value_t = 40)]
    entities: usize,
    /// Embedding file supplying the text-mode vocabulary.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory; defaults to --out.
    run: Option<PathBuf>,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

struct Ctx {
    cfg: PipelineConfig,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.cfg.seed.unwrap_or(0)
    }

    fn out(&self) -> Result<&Path> {
        self.cfg
            .out
            .as_deref()
            .context("an output directory is needed (--out or `out` in the config)")
    }

    fn out_dir(&self) -> Result<&Path> {
        let out = self.out()?;
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(out)
    }

    /// Prints JSON and, with an output directory, also writes it there.
    fn emit<T: serde::Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        print!("{text}");
        if self.cfg.out.is_some() {
            let path = self.out_dir()?.join(name);
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

fn pairs(path: &Path) -> Result<Vec<PairF64>> {
    read_pairs(path, None).with_context(|| format!("reading {}", path.display()))
}

fn xs(pairs: &[PairF64]) -> Vec<Vec<f64>> {
    pairs.iter().map(|p| p.x.clone()).collect()
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn strip(mut pairs: Vec<PairF64>) -> Vec<PairF64> {
    for p in &mut pairs {
        p.label = None;
    }
    pairs
}

fn encode(ctx: &Ctx, a: EncodeArgs) -> Result<()> {
    let embeddings = a
        .embeddings
        .or_else(|| ctx.cfg.encode.embeddings.clone())
        .context("an embedding file is needed (--embeddings or encode.embeddings)")?;
    let domain = ertl_core::config::DomainInput {
        left: Some(a.left),
        right: a.right,
        left_id: a.left_id,
        right_id: a.right_id,
        labels: a.labels,
        ..Default::default()
    };
    let input = RelationInput::load(&a.name, &domain)?;
    let block = (&ctx.cfg.block).into();
    let mut encoded = encode_relations::<f64>(&[input], &embeddings, &ctx.cfg.encode, &block)?;
    let pairs = encoded.pop().expect("one input, one output");
    let path = ctx.out_dir()?.join(format!("{}.csv", a.name));
    write_pairs(&pairs, &path)?;
    PairSidecar {
        dim: pairs.first().map_or(0, |p| p.dim()),
        composition: ctx.cfg.encode.composition(),
        remove_first_pc: ctx.cfg.encode.remove_first_pc,
        embedding_source: embeddings.display().to_string(),
    }
    .write(&path)?;
    info!("wrote {} pairs to {}", pairs.len(), path.display());
    println!("{}", path.display());
    Ok(())
}

fn train_cmd(ctx: &Ctx, scenario: Scenario, a: TrainArgs) -> Result<()> {
    let sources = a
        .sources
        .iter()
        .map(|p| {
            let all = pairs(p)?;
            let (labeled, unlabeled) = all.into_iter().partition(|q| q.label.is_some());
            Ok(SourceData {
                name: stem(p),
                labeled,
                unlabeled: strip(unlabeled),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut target = TargetData::default();
    if let Some(t) = &a.target {
        let all = pairs(t)?;
        if scenario.uses_target_labels() {
            let (labeled, unlabeled): (Vec<_>, Vec<_>) = all.into_iter().partition(|q| q.label.is_some());
            target.labeled = labeled;
            target.unlabeled = strip(unlabeled);
        } else if all.iter().any(|p| p.label.is_some()) && !a.drop_target_labels {
            bail!(
                "{} carries labels but scenario {scenario} trains without target labels; \
                 pass --drop-target-labels to use it as unlabeled data",
                t.display()
            );
        } else {
            target.unlabeled = strip(all);
        }
    }
    if let Some(u) = &a.unlabeled {
        target.unlabeled.extend(strip(pairs(u)?));
    }
    if !matches!(scenario, Scenario::AdequateNothing | Scenario::LimitedLimited) {
        target.unlabeled.clear();
    }
    let mut base = ctx.cfg.clone();
    base.seed = Some(ctx.seed());
    let cfg = base.scenario_config(scenario)?;
    let trained = train(&cfg, &sources, &target)?;
    let out = ctx.out_dir()?;
    let model_path = out.join("model.txt");
    std::fs::write(&model_path, trained.model.to_text()?)?;
    std::fs::write(
        out.join("training.json"),
        serde_json::to_string_pretty(&trained.report)? + "\n",
    )?;
    info!("{} rows, model dimension {}", trained.report.training_rows, trained.report.model_dim);
    println!("{}", model_path.display());
    Ok(())
}

fn relatedness(ctx: &Ctx, a: RelatednessArgs) -> Result<()> {
    let r = relatedness_gate(
        &xs(&pairs(&a.source)?),
        &xs(&pairs(&a.target)?),
        a.runs,
        a.train_fraction,
        a.threshold,
        ctx.seed(),
    )?;
    ctx.emit("relatedness.json", &r)
}

fn select(ctx: &Ctx, a: SelectArgs) -> Result<()> {
    let candidates = a
        .candidates
        .iter()
        .map(|c| {
            let (name, path) = match c.split_once('=') {
                Some((n, p)) => (n.to_string(), PathBuf::from(p)),
                None => (stem(Path::new(c)), PathBuf::from(c)),
            };
            Ok((name, xs(&pairs(&path)?)))
        })
        .collect::<Result<Vec<_>>>()?;
    let ranking = select_source(&candidates, &xs(&pairs(&a.target)?), a.runs, ctx.seed())?;
    ctx.emit("ranking.json", &ranking)
}

fn estimate(ctx: &Ctx, a: EstimateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let model: ModelF64 = TransferModel::from_text(&text)?;
    let pool = pairs(&a.pool)?;
    let mut ecfg = ctx.cfg.estimate_config().ok().flatten().unwrap_or_else(|| {
        ertl_core::eval::EstimateConfig::new(pool.len().min(100), ctx.seed())
    });
    if let Some(b) = a.budget {
        ecfg.budget = b;
    }
    if let Some(w) = a.strata {
        ecfg.strata = w;
    }
    if let Some(m) = a.allocation {
        ecfg.allocation = m;
    }
    ecfg.threshold = ctx.cfg.threshold;
    let embedded: Option<LabeledPairs> = if pool.iter().all(|p| p.label.is_some()) {
        Some(SyntheticData::truth(&pool)?)
    } else {
        None
    };
    let mut oracle: Box<dyn LabelOracle> = match (a.interactive, a.labels, embedded) {
        (false, Some(path), _) => Box::new(FileOracle::new(&load_labels(&path)?)),
        (false, None, Some(truth)) => Box::new(FileOracle::new(&truth)),
        _ => Box::new(PromptOracle::new(BufReader::new(io::stdin()), io::stderr())),
    };
    let est = estimate_performance(&model, &pool, oracle.as_mut(), &ecfg)?;
    ctx.emit("estimate.json", &est)
}

fn synth(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let out = ctx.out_dir()?;
    if a.text {
        let path = a
            .embeddings
            .or_else(|| ctx.cfg.encode.embeddings.clone())
            .context("text mode draws words from an embedding file (--embeddings)")?;
        let store = load_embeddings::<f64>(&path, None)?;
        let vocab: Vec<String> = store.words().into_iter().map(String::from).collect();
        let t = generate_text_tuples(&vocab, a.entities, 0.25, ctx.seed())?;
        save_dataset(&t.left, out.join("left.csv"))?;
        save_dataset(&t.right, out.join("right.csv"))?;
        save_labels(&t.truth, out.join("truth.csv"))?;
        println!("{}", out.display());
        return Ok(());
    }
    if !PRESETS.contains(&a.preset.as_str()) {
        bail!("unknown preset {:?}; choose one of {}", a.preset, PRESETS.join(", "));
    }
    let mut spec = ShiftSpec::preset(&a.preset, ctx.seed())?;
    if let Some(n) = a.size {
        spec.source.size = n;
        spec.target.size = n;
    }
    let data: SyntheticData<f64> = generate_synthetic(&spec)?;
    for (name, pool) in [("source", &data.source), ("target", &data.target)] {
        write_pairs(pool, out.join(format!("{name}.csv")))?;
        save_labels(&SyntheticData::truth(pool)?, out.join(format!("{name}_truth.csv")))?;
    }
    std::fs::write(out.join("spec.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
    println!("{}", out.display());
    Ok(())
}

fn report(ctx: &Ctx, a: ReportArgs) -> Result<()> {
    let dir = match a.run {
        Some(d) => d,
        None => ctx.out()?.to_path_buf(),
    };
    let summary: Summary = match load_run_metrics(&dir) {
        Ok(m) => summarize(&m),
        Err(e) => {
            let path = dir.join(REPORT_JSON);
            let text = std::fs::read_to_string(&path).map_err(|_| e)?;
            serde_json::from_str(&text)?
        }
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        print!("{}", summary.to_text());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref(), std::env::vars())?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.out.is_some() {
        cfg.out = cli.out;
    }
    let ctx = Ctx { cfg };
    match cli.command {
        Command::Encode(a) => encode(&ctx, a),
        Command::TrainNot(a) => train_cmd(&ctx, Scenario::NoT, a),
        Command::TrainNvt(a) => train_cmd(&ctx, Scenario::NvT, a),
        Command::TrainS1(a) => train_cmd(&ctx, Scenario::AdequateNothing, a),
        Command::TrainS2(a) => train_cmd(&ctx, Scenario::AdequateLimited, a),
        Command::TrainS3(a) => train_cmd(&ctx, Scenario::LimitedLimited, a),
        Command::Relatedness(a) => relatedness(&ctx, a),
        Command::SelectSource(a) => select(&ctx, a),
        Command::Estimate(a) => estimate(&ctx, a),
        Command::Synth(a) => synth(&ctx, a),
        Command::Report(a) => report(&ctx, a),
        Command::Run => {
            let artifacts = run_pipeline::<f64>(&ctx.cfg)?;
            print!("{}", artifacts.summary.to_text());
            info!("artifacts in {}", artifacts.out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
