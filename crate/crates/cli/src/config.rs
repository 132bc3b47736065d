//! Run configuration: INI-style `key = value` sections with command-line
//! overrides. `--print-config` echoes the effective configuration in a form
//! that parses back to the identical `RunConfig`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use randenc_core::encoders::{Activation, PadMode, PoolKind, SortMode};
use randenc_core::harness::{GridSpec, TuningMode};
use randenc_core::numerics::InitScheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Boe,
    Borep,
    RandLstm,
    Esn,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Boe => "boe",
            Family::Borep => "borep",
            Family::RandLstm => "randlstm",
            Family::Esn => "esn",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boe" => Ok(Family::Boe),
            "borep" => Ok(Family::Borep),
            "randlstm" => Ok(Family::RandLstm),
            "esn" => Ok(Family::Esn),
            other => bail!("unknown family `{other}` (expected boe|borep|randlstm|esn)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitModeOpt {
    /// Use provided tags when the dataset has them, 10-fold otherwise.
    Auto,
    Provided,
    KFold,
}

impl SplitModeOpt {
    fn name(&self) -> &'static str {
        match self {
            SplitModeOpt::Auto => "auto",
            SplitModeOpt::Provided => "provided",
            SplitModeOpt::KFold => "kfold",
        }
    }
}

impl std::str::FromStr for SplitModeOpt {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SplitModeOpt::Auto),
            "provided" => Ok(SplitModeOpt::Provided),
            "kfold" => Ok(SplitModeOpt::KFold),
            other => bail!("unknown split mode `{other}` (expected auto|provided|kfold)"),
        }
    }
}

/// Everything a run needs; defaults follow the evaluation protocol defaults
/// (Adam lr 0.001, batch 64, 200 epochs, 5 seeds, grid tuning).
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // [encoder]
    pub family: Family,
    pub dim: usize,
    pub init: InitScheme,
    pub pooling: PoolKind,
    pub activation: Activation,
    pub spectral_radius: f64,
    pub input_scale: f64,
    pub sparsity: f64,
    pub leak_rate: f64,
    pub pad_mode: PadMode,
    pub sort: SortMode,
    pub batch_size: usize,
    // [protocol]
    pub seed: u64,
    pub seeds: usize,
    pub split_mode: SplitModeOpt,
    pub kfold: usize,
    pub inner_dev_fraction: f64,
    pub tuning: TuningMode,
    pub grid: GridSpec,
    pub l2_sweep: bool,
    pub max_epochs: usize,
    // [data]
    pub embeddings: Option<PathBuf>,
    pub random_embeddings: Option<(InitScheme, usize)>,
    pub tasks: Vec<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub input: Option<PathBuf>,
    // [output]
    pub out: PathBuf,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            family: Family::Borep,
            dim: 4096,
            init: InitScheme::Heuristic,
            pooling: PoolKind::Max,
            activation: Activation::None,
            spectral_radius: 1.0,
            input_scale: 0.1,
            sparsity: 0.5,
            leak_rate: 1.0,
            pad_mode: PadMode::Length,
            sort: SortMode::SortedByLength,
            batch_size: 64,
            seed: 1234,
            seeds: 5,
            split_mode: SplitModeOpt::Auto,
            kfold: 10,
            inner_dev_fraction: 0.1,
            tuning: TuningMode::PerTask,
            grid: GridSpec::Default,
            l2_sweep: false,
            max_epochs: 200,
            embeddings: None,
            random_embeddings: None,
            tasks: Vec::new(),
            vectors: None,
            input: None,
            out: PathBuf::from("out"),
            workers: 0,
        }
    }
}

fn tuning_name(t: TuningMode) -> &'static str {
    match t {
        TuningMode::PerTask => "per_task",
        TuningMode::BestOverall => "best_overall",
    }
}

fn grid_name(g: GridSpec) -> &'static str {
    match g {
        GridSpec::Default => "default",
        GridSpec::None => "none",
    }
}

fn sort_name(s: SortMode) -> &'static str {
    match s {
        SortMode::SortedByLength => "sorted_by_length",
        SortMode::AsGiven => "as_given",
    }
}

fn pad_name(p: PadMode) -> &'static str {
    match p {
        PadMode::Length => "length",
        PadMode::Padded => "padded",
    }
}

impl RunConfig {
    /// Parse the INI text format: `[section]` headers, `key = value` lines,
    /// `#`/`;` comments.
    pub fn parse_ini(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = idx + 1;
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {lineno}: expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim();
            config
                .apply(&section, key, value)
                .with_context(|| format!("line {lineno}: bad `{key}`"))?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::parse_ini(&text).with_context(|| format!("in config file {}", path.display()))
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        match (section, key) {
            ("encoder", "family") => self.family = value.parse()?,
            ("encoder", "dim") => self.dim = value.parse()?,
            ("encoder", "init") => self.init = value.parse()?,
            ("encoder", "pooling") => self.pooling = value.parse()?,
            ("encoder", "activation") => self.activation = value.parse()?,
            ("encoder", "spectral_radius") => self.spectral_radius = value.parse()?,
            ("encoder", "input_scale") => self.input_scale = value.parse()?,
            ("encoder", "sparsity") => self.sparsity = value.parse()?,
            ("encoder", "leak_rate") => self.leak_rate = value.parse()?,
            ("encoder", "pad_mode") => self.pad_mode = value.parse()?,
            ("encoder", "sort") => self.sort = value.parse()?,
            ("encoder", "batch_size") => self.batch_size = value.parse()?,
            ("protocol", "seed") => self.seed = value.parse()?,
            ("protocol", "seeds") => self.seeds = value.parse()?,
            ("protocol", "split_mode") => self.split_mode = value.parse()?,
            ("protocol", "kfold") => self.kfold = value.parse()?,
            ("protocol", "inner_dev_fraction") => self.inner_dev_fraction = value.parse()?,
            ("protocol", "tuning") => {
                self.tuning = match value {
                    "per_task" => TuningMode::PerTask,
                    "best_overall" => TuningMode::BestOverall,
                    other => bail!("unknown tuning mode `{other}`"),
                }
            }
            ("protocol", "grid") => {
                self.grid = match value {
                    "default" => GridSpec::Default,
                    "none" => GridSpec::None,
                    other => bail!("unknown grid `{other}`"),
                }
            }
            ("protocol", "l2_sweep") => self.l2_sweep = value.parse()?,
            ("protocol", "max_epochs") => self.max_epochs = value.parse()?,
            ("data", "embeddings") => self.embeddings = Some(PathBuf::from(value)),
            ("data", "random_embeddings") => {
                self.random_embeddings = Some(parse_random_embeddings(value)?)
            }
            ("data", "tasks") => {
                self.tasks = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| PathBuf::from(s.trim()))
                    .collect()
            }
            ("data", "vectors") => self.vectors = Some(PathBuf::from(value)),
            ("data", "input") => self.input = Some(PathBuf::from(value)),
            ("output", "dir") => self.out = PathBuf::from(value),
            ("output", "workers") => self.workers = value.parse()?,
            _ => bail!("unknown key `{key}` in section [{section}]"),
        }
        Ok(())
    }

    /// Emit the effective configuration; parsing the output reproduces `self`.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[encoder]");
        let _ = writeln!(s, "family = {}", self.family.name());
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "init = {}", self.init);
        let _ = writeln!(s, "pooling = {}", self.pooling.name());
        let _ = writeln!(s, "activation = {}", self.activation.name());
        let _ = writeln!(s, "spectral_radius = {}", self.spectral_radius);
        let _ = writeln!(s, "input_scale = {}", self.input_scale);
        let _ = writeln!(s, "sparsity = {}", self.sparsity);
        let _ = writeln!(s, "leak_rate = {}", self.leak_rate);
        let _ = writeln!(s, "pad_mode = {}", pad_name(self.pad_mode));
        let _ = writeln!(s, "sort = {}", sort_name(self.sort));
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "\n[protocol]");
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "seeds = {}", self.seeds);
        let _ = writeln!(s, "split_mode = {}", self.split_mode.name());
        let _ = writeln!(s, "kfold = {}", self.kfold);
        let _ = writeln!(s, "inner_dev_fraction = {}", self.inner_dev_fraction);
        let _ = writeln!(s, "tuning = {}", tuning_name(self.tuning));
        let _ = writeln!(s, "grid = {}", grid_name(self.grid));
        let _ = writeln!(s, "l2_sweep = {}", self.l2_sweep);
        let _ = writeln!(s, "max_epochs = {}", self.max_epochs);
        let _ = writeln!(s, "\n[data]");
        if let Some(p) = &self.embeddings {
            let _ = writeln!(s, "embeddings = {}", p.display());
        }
        if let Some((scheme, dim)) = &self.random_embeddings {
            let _ = writeln!(s, "random_embeddings = {scheme}:{dim}");
        }
        if !self.tasks.is_empty() {
            let joined: Vec<String> = self.tasks.iter().map(|p| p.display().to_string()).collect();
            let _ = writeln!(s, "tasks = {}", joined.join(","));
        }
        if let Some(p) = &self.vectors {
            let _ = writeln!(s, "vectors = {}", p.display());
        }
        if let Some(p) = &self.input {
            let _ = writeln!(s, "input = {}", p.display());
        }
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "dir = {}", self.out.display());
        let _ = writeln!(s, "workers = {}", self.workers);
        s
    }

    /// Exactly one embedding source, and every referenced file must exist.
    pub fn validate_embedding_source(&self) -> Result<()> {
        match (&self.embeddings, &self.random_embeddings) {
            (Some(_), Some(_)) => bail!("use either embeddings or random_embeddings, not both"),
            (None, None) => bail!("no embedding source configured (embeddings or random_embeddings)"),
            (Some(path), None) if !path.exists() => {
                bail!("embedding file not found: {}", path.display())
            }
            _ => Ok(()),
        }
    }

    pub fn validate_tasks(&self) -> Result<()> {
        if self.tasks.is_empty() {
            bail!("no task datasets given (positional arguments or [data] tasks)");
        }
        for task in &self.tasks {
            if !task.exists() {
                bail!("task dataset not found: {}", task.display());
            }
        }
        Ok(())
    }
}

pub fn parse_random_embeddings(value: &str) -> Result<(InitScheme, usize)> {
    let (scheme, dim) = value
        .split_once(':')
        .with_context(|| format!("expected `scheme:dim`, got `{value}`"))?;
    Ok((
        scheme.parse::<InitScheme>().map_err(anyhow::Error::from)?,
        dim.parse::<usize>()?,
    ))
}
