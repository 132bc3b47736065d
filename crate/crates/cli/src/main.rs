mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use randenc_core::diagnostics::{
    dim_sweep, gen_synthetic, jl_distortion, random_project_vectors, sparsed_stats, sweep_csv,
    SyntheticKind, SyntheticParams,
};
use randenc_core::embeddings::{load_embeddings, EmbeddingTable};
use randenc_core::encoders::{
    build_encoder, encode_batch, Encoder, EncoderConfig, EncoderFamily, PoolingSpec,
};
use randenc_core::harness::{
    evaluate_task, load_dataset, render_table, report_json, tune_best_overall, EvalResult,
    Protocol, SplitMode, TaskDataset, TuningMode,
};
use randenc_core::selfcheck;
use randenc_core::vecio;

use config::{Family, RunConfig, SplitModeOpt};

#[derive(Parser)]
#[command(
    name = "randenc",
    about = "Training-free sentence encoders (BOE, BOREP, random LSTM, ESN) with a linear-head evaluation harness",
    version
)]
struct Cli {
    /// INI config file; command-line flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Print the effective configuration and exit
    #[arg(long, global = true)]
    print_config: bool,

    /// Base seed for all randomness
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = all cores); RANDENC_WORKERS is the fallback
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct EncoderFlags {
    /// Text-format word embedding file
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Random word embeddings as `scheme:dim` (e.g. `heuristic:300`)
    #[arg(long)]
    random_embeddings: Option<String>,
    /// Encoder family: boe|borep|randlstm|esn
    #[arg(long)]
    family: Option<Family>,
    /// Sentence vector dimension D
    #[arg(long)]
    dim: Option<usize>,
    /// Initialization scheme: heuristic|uniform|normal|orthogonal|he|xavier
    #[arg(long)]
    init: Option<String>,
    /// Pooling: mean|max|sum
    #[arg(long)]
    pooling: Option<String>,
    /// Activation: none|relu|tanh
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    spectral_radius: Option<f64>,
    #[arg(long)]
    input_scale: Option<f64>,
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long)]
    leak_rate: Option<f64>,
    /// Pooling extent: length|padded
    #[arg(long)]
    pad_mode: Option<String>,
    /// Batch grouping: sorted_by_length|as_given
    #[arg(long)]
    sort: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args, Default)]
struct ProtocolFlags {
    /// Number of seeds (base seed + 0..N)
    #[arg(long)]
    seeds: Option<usize>,
    /// auto|provided|kfold
    #[arg(long)]
    split_mode: Option<SplitModeOpt>,
    #[arg(long)]
    kfold: Option<usize>,
    #[arg(long)]
    inner_dev_fraction: Option<f64>,
    /// per_task|best_overall
    #[arg(long)]
    tuning: Option<String>,
    /// default|none
    #[arg(long)]
    grid: Option<String>,
    /// Sweep classifier l2 over {0, 1e-4, 1e-3, 1e-2}
    #[arg(long)]
    l2_sweep: bool,
    #[arg(long)]
    max_epochs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a sentence file into the binary vector format
    Encode {
        #[command(flatten)]
        encoder: EncoderFlags,
        /// Sentence file: .txt (one space-tokenized sentence per line) or .jsonl
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Evaluate encoder families on task datasets with a trained linear head
    Eval {
        #[command(flatten)]
        encoder: EncoderFlags,
        #[command(flatten)]
        protocol: ProtocolFlags,
        /// Task dataset paths (.jsonl with .meta.json sidecars)
        tasks: Vec<PathBuf>,
    },
    /// Evaluate on probing-format datasets (same protocol as eval)
    Probe {
        #[command(flatten)]
        encoder: EncoderFlags,
        #[command(flatten)]
        protocol: ProtocolFlags,
        tasks: Vec<PathBuf>,
    },
    /// Evaluate one task across a list of dimensions
    SweepDim {
        #[command(flatten)]
        encoder: EncoderFlags,
        #[command(flatten)]
        protocol: ProtocolFlags,
        /// Comma-separated dimensions, e.g. 64,256,1024
        #[arg(long, value_delimiter = ',')]
        dims: Vec<usize>,
        tasks: Vec<PathBuf>,
    },
    /// Randomly re-project an external vector file to a new dimension
    Project {
        #[command(flatten)]
        encoder: EncoderFlags,
        /// Base path of a binary vector file (without .json/.bin)
        #[arg(long)]
        vectors: Option<PathBuf>,
        #[arg(long)]
        target_dim: usize,
    },
    /// Measure padded-pooling (sparsed) impact on a dataset
    DiagnosePadding {
        #[command(flatten)]
        encoder: EncoderFlags,
        tasks: Vec<PathBuf>,
    },
    /// Generate a synthetic probing task plus a random embedding table
    GenSynthetic {
        /// word_content|xor_words|length_bins|bigram_shift
        #[arg(long)]
        kind: String,
        #[arg(long)]
        examples: Option<usize>,
        #[arg(long)]
        vocab_size: Option<usize>,
        #[arg(long)]
        marked: Option<usize>,
        #[arg(long)]
        len_min: Option<usize>,
        #[arg(long)]
        len_max: Option<usize>,
        #[arg(long)]
        embed_dim: Option<usize>,
        /// Embedding table scheme
        #[arg(long)]
        scheme: Option<String>,
        /// Norm factor for marked-token embeddings
        #[arg(long)]
        marker_scale: Option<f64>,
    },
    /// Run the invariant suites and print one line per check
    Selfcheck,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    let env_workers = std::env::var("RANDENC_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(w) = cli.workers.or(env_workers) {
        config.workers = w;
    }

    match &cli.command {
        Command::Encode { encoder, .. }
        | Command::Project { encoder, .. }
        | Command::DiagnosePadding { encoder, .. } => apply_encoder_flags(&mut config, encoder)?,
        Command::Eval {
            encoder, protocol, ..
        }
        | Command::Probe {
            encoder, protocol, ..
        }
        | Command::SweepDim {
            encoder, protocol, ..
        } => {
            apply_encoder_flags(&mut config, encoder)?;
            apply_protocol_flags(&mut config, protocol)?;
        }
        Command::GenSynthetic { .. } | Command::Selfcheck => {}
    }
    match &cli.command {
        Command::Eval { tasks, .. }
        | Command::Probe { tasks, .. }
        | Command::SweepDim { tasks, .. }
        | Command::DiagnosePadding { tasks, .. } => {
            if !tasks.is_empty() {
                config.tasks = tasks.clone();
            }
        }
        Command::Project { vectors, .. } => {
            if let Some(v) = vectors {
                config.vectors = Some(v.clone());
            }
        }
        Command::Encode { input, .. } => {
            if let Some(i) = input {
                config.input = Some(i.clone());
            }
        }
        _ => {}
    }

    if cli.print_config {
        print!("{}", config.to_ini());
        return Ok(0);
    }

    if config.workers > 0 {
        // ignore the error if a pool already exists (tests call run repeatedly)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build_global();
    }
    std::fs::create_dir_all(&config.out)
        .with_context(|| format!("cannot create output dir {}", config.out.display()))?;

    match cli.command {
        Command::Encode { .. } => cmd_encode(&config),
        Command::Eval { .. } | Command::Probe { .. } => cmd_eval(&config),
        Command::SweepDim { dims, .. } => cmd_sweep_dim(&config, &dims),
        Command::Project { target_dim, .. } => cmd_project(&config, target_dim),
        Command::DiagnosePadding { .. } => cmd_diagnose_padding(&config),
        Command::GenSynthetic {
            kind,
            examples,
            vocab_size,
            marked,
            len_min,
            len_max,
            embed_dim,
            scheme,
            marker_scale,
        } => cmd_gen_synthetic(
            &config, &kind, examples, vocab_size, marked, len_min, len_max, embed_dim, scheme,
            marker_scale,
        ),
        Command::Selfcheck => cmd_selfcheck(&config),
    }
}

fn apply_encoder_flags(config: &mut RunConfig, flags: &EncoderFlags) -> Result<()> {
    if let Some(p) = &flags.embeddings {
        config.embeddings = Some(p.clone());
        config.random_embeddings = None;
    }
    if let Some(spec) = &flags.random_embeddings {
        config.random_embeddings = Some(config::parse_random_embeddings(spec)?);
        config.embeddings = None;
    }
    if let Some(f) = flags.family {
        config.family = f;
    }
    if let Some(d) = flags.dim {
        config.dim = d;
    }
    if let Some(v) = &flags.init {
        config.init = v.parse()?;
    }
    if let Some(v) = &flags.pooling {
        config.pooling = v.parse()?;
    }
    if let Some(v) = &flags.activation {
        config.activation = v.parse()?;
    }
    if let Some(v) = flags.spectral_radius {
        config.spectral_radius = v;
    }
    if let Some(v) = flags.input_scale {
        config.input_scale = v;
    }
    if let Some(v) = flags.sparsity {
        config.sparsity = v;
    }
    if let Some(v) = flags.leak_rate {
        config.leak_rate = v;
    }
    if let Some(v) = &flags.pad_mode {
        config.pad_mode = v.parse()?;
    }
    if let Some(v) = &flags.sort {
        config.sort = v.parse()?;
    }
    if let Some(v) = flags.batch_size {
        config.batch_size = v;
    }
    Ok(())
}

fn apply_protocol_flags(config: &mut RunConfig, flags: &ProtocolFlags) -> Result<()> {
    if let Some(v) = flags.seeds {
        config.seeds = v;
    }
    if let Some(v) = flags.split_mode {
        config.split_mode = v;
    }
    if let Some(v) = flags.kfold {
        config.kfold = v;
    }
    if let Some(v) = flags.inner_dev_fraction {
        config.inner_dev_fraction = v;
    }
    if let Some(v) = &flags.tuning {
        config.tuning = match v.as_str() {
            "per_task" => TuningMode::PerTask,
            "best_overall" => TuningMode::BestOverall,
            other => bail!("unknown tuning mode `{other}`"),
        };
    }
    if let Some(v) = &flags.grid {
        config.grid = match v.as_str() {
            "default" => randenc_core::harness::GridSpec::Default,
            "none" => randenc_core::harness::GridSpec::None,
            other => bail!("unknown grid `{other}`"),
        };
    }
    if flags.l2_sweep {
        config.l2_sweep = true;
    }
    if let Some(v) = flags.max_epochs {
        config.max_epochs = v;
    }
    Ok(())
}

fn encoder_family(config: &RunConfig) -> EncoderFamily {
    match config.family {
        Family::Boe => EncoderFamily::Boe,
        Family::Borep => EncoderFamily::Borep {
            activation: config.activation,
        },
        Family::RandLstm => EncoderFamily::RandLstm,
        Family::Esn => EncoderFamily::Esn {
            spectral_radius: config.spectral_radius,
            input_scale: config.input_scale,
            sparsity: config.sparsity,
            leak_rate: config.leak_rate,
            activation: config.activation,
        },
    }
}

fn template_config(config: &RunConfig, input_dim: usize) -> EncoderConfig {
    let output_dim = if config.family == Family::Boe {
        input_dim
    } else {
        config.dim
    };
    EncoderConfig {
        family: encoder_family(config),
        output_dim,
        input_dim,
        init: config.init,
        pooling: PoolingSpec {
            kind: config.pooling,
            pad_mode: config.pad_mode,
        },
        seed: config.seed,
    }
}

fn build_table(config: &RunConfig, vocab: impl FnOnce() -> Vec<String>) -> Result<EmbeddingTable> {
    config.validate_embedding_source()?;
    if let Some(path) = &config.embeddings {
        Ok(load_embeddings(path, None)?)
    } else {
        let (scheme, dim) = config.random_embeddings.expect("validated");
        Ok(EmbeddingTable::generate_random(
            &vocab(),
            dim,
            scheme,
            config.seed,
        )?)
    }
}

fn read_sentences(path: &Path) -> Result<Vec<Vec<String>>> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        let dataset = load_dataset(path)?;
        Ok(dataset.examples.iter().map(|e| e.tokens.clone()).collect())
    } else {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        Ok(text
            .lines()
            .map(|line| {
                if line.is_empty() {
                    Vec::new()
                } else {
                    line.split(' ').map(str::to_string).collect()
                }
            })
            .collect())
    }
}

fn resolve_protocol(config: &RunConfig, dataset: &TaskDataset) -> Result<Protocol> {
    let split_mode = match config.split_mode {
        SplitModeOpt::Provided => SplitMode::Provided,
        SplitModeOpt::KFold => SplitMode::KFold {
            k: config.kfold,
            inner_dev_fraction: config.inner_dev_fraction,
        },
        SplitModeOpt::Auto => {
            if dataset.has_splits() {
                SplitMode::Provided
            } else {
                SplitMode::KFold {
                    k: config.kfold,
                    inner_dev_fraction: config.inner_dev_fraction,
                }
            }
        }
    };
    let mut protocol = Protocol::standard(config.seed, split_mode);
    protocol.seeds = (0..config.seeds as u64).map(|i| config.seed + i).collect();
    protocol.tuning = config.tuning;
    protocol.grid = config.grid;
    protocol.train.max_epochs = config.max_epochs;
    if config.l2_sweep {
        protocol.l2_sweep = Some(randenc_core::harness::L2_SWEEP.to_vec());
    }
    Ok(protocol)
}

fn build_single_encoder(config: &RunConfig, input_dim: usize) -> Result<Encoder> {
    Ok(build_encoder(&template_config(config, input_dim))?)
}

fn cmd_encode(config: &RunConfig) -> Result<i32> {
    let input = config
        .input
        .as_ref()
        .context("encode needs an --input sentence file")?;
    let sentences = read_sentences(input)?;
    let table = build_table(config, || {
        let mut seen = std::collections::HashSet::new();
        let mut vocab = Vec::new();
        for s in &sentences {
            for t in s {
                if seen.insert(t.clone()) {
                    vocab.push(t.clone());
                }
            }
        }
        vocab
    })?;
    let encoder = build_single_encoder(config, table.dim())?;
    let vectors = encode_batch(
        &encoder,
        &table,
        &sentences,
        config.batch_size,
        config.sort,
        config.pad_mode,
    )?;
    let base = config.out.join("vectors");
    vecio::write_matrix(&base, vectors.view())?;
    println!(
        "encoded {} sentences to {}.bin ({} dims)",
        sentences.len(),
        base.display(),
        encoder.output_dim()
    );
    Ok(0)
}

fn load_tasks(config: &RunConfig) -> Result<Vec<TaskDataset>> {
    config.validate_tasks()?;
    config
        .tasks
        .iter()
        .map(|p| Ok(load_dataset(p)?))
        .collect()
}

fn write_reports(config: &RunConfig, template: &EncoderConfig, results: &[EvalResult]) -> Result<()> {
    let table_text = render_table(results);
    std::fs::write(config.out.join("report.txt"), &table_text)
        .with_context(|| "cannot write report.txt")?;
    std::fs::write(
        config.out.join("report.json"),
        report_json(template, results, config.tuning),
    )
    .with_context(|| "cannot write report.json")?;
    print!("{table_text}");
    Ok(())
}

fn cmd_eval(config: &RunConfig) -> Result<i32> {
    let datasets = load_tasks(config)?;
    let table = build_table(config, || {
        let mut seen = std::collections::HashSet::new();
        let mut vocab = Vec::new();
        for d in &datasets {
            for t in d.vocabulary() {
                if seen.insert(t.clone()) {
                    vocab.push(t);
                }
            }
        }
        vocab
    })?;
    let template = template_config(config, table.dim());

    let results = match config.tuning {
        TuningMode::PerTask => {
            let mut results = Vec::new();
            for dataset in &datasets {
                let protocol = resolve_protocol(config, dataset)?;
                results.push(evaluate_task(&template, &table, dataset, &protocol)?);
            }
            results
        }
        TuningMode::BestOverall => {
            let protocol = resolve_protocol(config, &datasets[0])?;
            for d in &datasets[1..] {
                let other = resolve_protocol(config, d)?;
                if other.split_mode != protocol.split_mode {
                    bail!(
                        "best_overall tuning needs a uniform split mode across tasks; \
                         set --split-mode explicitly"
                    );
                }
            }
            let refs: Vec<&TaskDataset> = datasets.iter().collect();
            let outcome = tune_best_overall(&template, &table, &refs, &protocol)?;
            for point in &outcome.chosen {
                println!(
                    "best-overall {} seed {}: {}",
                    point.metric.name(),
                    point.seed,
                    point.description
                );
            }
            outcome.results
        }
    };
    write_reports(config, &template, &results)?;
    Ok(0)
}

fn cmd_sweep_dim(config: &RunConfig, dims: &[usize]) -> Result<i32> {
    if dims.is_empty() {
        bail!("sweep-dim needs --dims");
    }
    let datasets = load_tasks(config)?;
    if datasets.len() != 1 {
        bail!("sweep-dim evaluates exactly one task");
    }
    let dataset = &datasets[0];
    let table = build_table(config, || dataset.vocabulary())?;
    let template = template_config(config, table.dim());
    let protocol = resolve_protocol(config, dataset)?;
    let curve = dim_sweep(&template, &table, dims, dataset, &protocol)?;
    let csv = sweep_csv(&curve);
    std::fs::write(config.out.join("sweep.csv"), &csv)
        .with_context(|| "cannot write sweep.csv")?;
    write_reports(config, &template, &curve.results)?;
    Ok(0)
}

fn cmd_project(config: &RunConfig, target_dim: usize) -> Result<i32> {
    let base = config
        .vectors
        .as_ref()
        .context("project needs --vectors (base path of a binary vector file)")?;
    let vectors = vecio::read_matrix(base)?;
    let projected = random_project_vectors(vectors.view(), target_dim, config.init, config.seed)?;
    let out_base = config.out.join("projected");
    vecio::write_matrix(&out_base, projected.view())?;
    println!(
        "projected {} vectors: {} -> {} dims ({})",
        vectors.nrows(),
        vectors.ncols(),
        target_dim,
        out_base.display()
    );
    if vectors.nrows() >= 2 {
        let stats = jl_distortion(vectors.view(), target_dim, config.seed, 0.05)?;
        let text = serde_json::to_string_pretty(&stats).expect("stats serialize");
        std::fs::write(config.out.join("projection_stats.json"), text)
            .with_context(|| "cannot write projection_stats.json")?;
        println!(
            "cosine distortion: mean {:.4}, max {:.4}, {:.1}% of pairs within 0.05",
            stats.mean_abs_cosine,
            stats.max_abs_cosine,
            100.0 * stats.fraction_within_eps
        );
    }
    Ok(0)
}

fn cmd_diagnose_padding(config: &RunConfig) -> Result<i32> {
    let datasets = load_tasks(config)?;
    if datasets.len() != 1 {
        bail!("diagnose-padding analyzes exactly one task");
    }
    let dataset = &datasets[0];
    let table = build_table(config, || dataset.vocabulary())?;
    let encoder = build_single_encoder(config, table.dim())?;
    let report = sparsed_stats(&encoder, &table, dataset, config.batch_size, config.sort)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(config.out.join("sparsed.json"), &text)
        .with_context(|| "cannot write sparsed.json")?;
    println!(
        "{} of {} examples sparsed at batch size {} ({:?})",
        report.sparsed, report.total, report.batch_size, report.sort_mode
    );
    for class in &report.per_class {
        println!("  class {}: {}/{}", class.label, class.sparsed, class.total);
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen_synthetic(
    config: &RunConfig,
    kind: &str,
    examples: Option<usize>,
    vocab_size: Option<usize>,
    marked: Option<usize>,
    len_min: Option<usize>,
    len_max: Option<usize>,
    embed_dim: Option<usize>,
    scheme: Option<String>,
    marker_scale: Option<f64>,
) -> Result<i32> {
    let kind: SyntheticKind = kind.parse()?;
    let mut params = SyntheticParams::default_for(kind);
    if let Some(v) = examples {
        params.examples = v;
    }
    if let Some(v) = vocab_size {
        params.vocab_size = v;
    }
    if let Some(v) = marked {
        params.marked = v;
    }
    if let Some(v) = len_min {
        params.len_min = v;
    }
    if let Some(v) = len_max {
        params.len_max = v;
    }
    if let Some(v) = embed_dim {
        params.embed_dim = v;
    }
    if let Some(v) = scheme {
        params.scheme = v.parse()?;
    }
    if let Some(v) = marker_scale {
        params.marker_scale = v;
    }
    let task = gen_synthetic(kind, &params, config.seed)?;
    let data_path = config.out.join(format!("{}.jsonl", kind.name()));
    task.dataset.save(&data_path)?;
    let emb_path = config.out.join("embeddings.txt");
    task.table.write_text(&emb_path)?;
    println!(
        "wrote {} examples to {} (+ sidecar) and {} embeddings to {}",
        task.dataset.len(),
        data_path.display(),
        task.table.vocab_len(),
        emb_path.display()
    );
    Ok(0)
}

fn cmd_selfcheck(config: &RunConfig) -> Result<i32> {
    let reports = selfcheck::run_all(config.seed);
    let mut all_passed = true;
    for r in &reports {
        println!(
            "{} {} — {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
        all_passed &= r.passed;
    }
    Ok(if all_passed { 0 } else { 1 })
}
