use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use serde::{Deserialize, Serialize};

use gradgraph::composition::{CompositionKind, Dims};
use gradgraph::harmony::LambdaMode;
use gradgraph::kb::SyntheticConfig;
use gradgraph::model::ModelSpec;
use gradgraph::training::{LossKind, TrainConfig};

pub const OUT_ENV: &str = "GRADGRAPH_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Train,
    Eval,
    Score,
    Neighbors,
    AnalyzeOpt,
    Density,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Score => "score",
            Command::Neighbors => "neighbors",
            Command::AnalyzeOpt => "analyze-opt",
            Command::Density => "density",
        }
    }
}

/// A lambda as written in a config file: a number or `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaValue {
    Number(f64),
    Text(String),
}

impl LambdaValue {
    fn parse(&self) -> anyhow::Result<LambdaMode> {
        match self {
            LambdaValue::Number(v) if *v > 0.0 && v.is_finite() => Ok(LambdaMode::Finite(*v)),
            LambdaValue::Number(v) => bail!("lambda must be positive, got {v}"),
            LambdaValue::Text(s) => Ok(s.parse::<LambdaMode>()?),
        }
    }
}

/// Every setting, each optional so flags, config file and defaults can be layered.
///
/// The same schema is used for `--config` files and for the resolved
/// config echoed into the output directory.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// TOML file with defaults for any of these settings
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Output directory [env: GRADGRAPH_OUT, default: out]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Dataset directory holding train.tsv, valid.tsv, test.tsv [default: <out>/data]
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    #[arg(long = "train-file", value_name = "FILE")]
    pub train_file: Option<PathBuf>,
    #[arg(long = "valid-file", value_name = "FILE")]
    pub valid_file: Option<PathBuf>,
    #[arg(long = "test-file", value_name = "FILE")]
    pub test_file: Option<PathBuf>,
    /// Model checkpoint [default: <out>/model.ggrf]
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,

    /// distmult, hole, hdistmult, hhole or htpr [default: hhole]
    #[arg(long)]
    pub model: Option<String>,
    /// Embedding size for the square kinds [default: 16]
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long = "entity-dim")]
    pub entity_dim: Option<usize>,
    #[arg(long = "relation-dim")]
    pub relation_dim: Option<usize>,
    /// Faithfulness weight, or "inf" [default: 2.0]
    #[arg(long, value_parser = parse_lambda_flag)]
    pub lambda: Option<LambdaValue>,
    /// Norm-bound slack, defaults to lambda / 100
    #[arg(long)]
    pub epsilon: Option<f64>,

    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    /// Negative samples per positive [default: 500]
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long = "adam-eps")]
    pub adam_eps: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    /// log-softmax or linear-margin [default: linear-margin for hole, else log-softmax]
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Continue from the training state saved next to the checkpoint
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub resume: Option<bool>,

    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses all cores [default: 1]
    #[arg(long)]
    pub threads: Option<usize>,
    /// Fixed-order gradient reduction [default: true]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub deterministic: Option<bool>,

    /// Synthetic KB: number of entities [default: 50]
    #[arg(long)]
    pub entities: Option<usize>,
    #[arg(long)]
    pub relations: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,

    /// train, valid or test [default: test]
    #[arg(long)]
    pub split: Option<String>,
    /// Query file: head<TAB>relation<TAB>tail
    #[arg(long, value_name = "FILE")]
    pub queries: Option<PathBuf>,
    /// Neighborhood size [default: 5]
    #[arg(long)]
    pub k: Option<usize>,
    /// Labeled triplets for `density`: head<TAB>relation<TAB>tail<TAB>Pos|Neg
    #[arg(long, value_name = "FILE")]
    pub labeled: Option<PathBuf>,
    /// Positives drawn from the split when no labeled file is given [default: 200]
    #[arg(long = "n-pos")]
    pub n_pos: Option<usize>,
    #[arg(long = "n-neg")]
    pub n_neg: Option<usize>,
}

fn parse_lambda_flag(s: &str) -> Result<LambdaValue, String> {
    match s.parse::<LambdaMode>().map_err(|e| e.to_string())? {
        LambdaMode::Finite(v) => Ok(LambdaValue::Number(v)),
        LambdaMode::Infinite => Ok(LambdaValue::Text("inf".into())),
    }
}

macro_rules! layer {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Settings {
    /// Fills every unset field from `lower`.
    fn under(mut self, lower: &Settings) -> Settings {
        layer!(self, lower;
            out, data, train_file, valid_file, test_file, checkpoint,
            model, dim, entity_dim, relation_dim, lambda, epsilon,
            batch_size, negatives, learning_rate, beta1, beta2, adam_eps, margin, loss,
            epochs, patience, resume, seed, threads, deterministic,
            entities, relations, blocks, noise,
            split, queries, k, labeled, n_pos, n_neg,
        );
        self
    }
}

pub fn read_config_file(path: &Path) -> anyhow::Result<Settings> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl SplitName {
    fn parse(s: &str) -> anyhow::Result<Self> {
        Ok(match s {
            "train" => SplitName::Train,
            "valid" | "validation" => SplitName::Valid,
            "test" => SplitName::Test,
            _ => bail!("unknown split {s:?}; expected train, valid or test"),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Valid => "valid",
            SplitName::Test => "test",
        }
    }
}

/// Where the dataset comes from.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPaths {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub out_dir: PathBuf,
    pub data_dir: PathBuf,
    pub data: DataPaths,
    pub checkpoint: PathBuf,
    pub spec: ModelSpec,
    pub train: TrainConfig,
    pub resume: bool,
    pub synth: SyntheticConfig,
    pub split: SplitName,
    pub queries: Option<PathBuf>,
    pub k: usize,
    pub labeled: Option<PathBuf>,
    pub n_pos: usize,
    pub n_neg: usize,
    /// The resolved settings, for echoing.
    pub settings: Settings,
}

impl RunConfig {
    pub fn state_path(&self) -> PathBuf {
        let mut s = self.checkpoint.clone().into_os_string();
        s.push(".state");
        PathBuf::from(s)
    }
}

fn resolve_dims(kind: CompositionKind, s: &Settings) -> anyhow::Result<Dims> {
    let dims = match kind {
        CompositionKind::HTPR => {
            let (Some(e), Some(r)) = (s.entity_dim, s.relation_dim) else {
                bail!("htpr needs --entity-dim and --relation-dim");
            };
            let d = Dims::tensor_product(e, r);
            if let Some(h) = s.dim {
                Dims { hidden: h, ..d }
            } else {
                d
            }
        }
        _ => {
            let base = s.dim.or(s.entity_dim).unwrap_or(16);
            Dims {
                entity: s.entity_dim.unwrap_or(base),
                relation: s.relation_dim.unwrap_or(base),
                hidden: s.dim.unwrap_or(base),
            }
        }
    };
    dims.validate(kind)?;
    Ok(dims)
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

/// Layers flags over the config file over defaults.
pub fn resolve(command: Command, flags: Settings) -> anyhow::Result<RunConfig> {
    let file = match &flags.config {
        Some(p) => read_config_file(p)?,
        None => Settings::default(),
    };
    let mut s = flags.under(&file);
    s.config = None;

    let out_dir = s.out.clone().unwrap_or_else(default_out_dir);
    let data_dir = s.data.clone().unwrap_or_else(|| out_dir.join("data"));
    let data = DataPaths {
        train: s.train_file.clone().unwrap_or_else(|| data_dir.join("train.tsv")),
        valid: s.valid_file.clone().unwrap_or_else(|| data_dir.join("valid.tsv")),
        test: s.test_file.clone().unwrap_or_else(|| data_dir.join("test.tsv")),
    };
    let checkpoint = s.checkpoint.clone().unwrap_or_else(|| out_dir.join("model.ggrf"));

    let kind: CompositionKind = s.model.as_deref().unwrap_or("hhole").parse()?;
    let dims = resolve_dims(kind, &s)?;
    let lambda = match &s.lambda {
        Some(v) => v.parse()?,
        None if kind.is_baseline() => LambdaMode::Infinite,
        None => LambdaMode::Finite(2.0),
    };
    let mut spec = ModelSpec::new(kind, dims, lambda)?;
    spec.epsilon = s.epsilon;
    if let (Some(eps), LambdaMode::Finite(l)) = (s.epsilon, lambda) {
        if !(eps > 0.0 && eps < l) {
            bail!("epsilon must lie in (0, lambda)");
        }
    }

    let d = TrainConfig::default();
    let loss_kind = match &s.loss {
        Some(name) => name.parse::<LossKind>()?,
        None => LossKind::default_for(kind),
    };
    let train = TrainConfig {
        batch_size: s.batch_size.unwrap_or(d.batch_size),
        negatives_per_positive: s.negatives.unwrap_or(d.negatives_per_positive),
        learning_rate: s.learning_rate.unwrap_or(d.learning_rate),
        adam_beta1: s.beta1.unwrap_or(d.adam_beta1),
        adam_beta2: s.beta2.unwrap_or(d.adam_beta2),
        adam_eps: s.adam_eps.unwrap_or(d.adam_eps),
        margin: s.margin.unwrap_or(d.margin),
        loss_kind,
        seed: s.seed.unwrap_or(d.seed),
        max_epochs: s.epochs.unwrap_or(d.max_epochs),
        patience: s.patience.unwrap_or(d.patience),
        threads: s.threads.unwrap_or(d.threads),
        deterministic: s.deterministic.unwrap_or(d.deterministic),
    };
    train.validate()?;

    let sd = SyntheticConfig::default();
    let synth = SyntheticConfig {
        n_entities: s.entities.unwrap_or(sd.n_entities),
        n_relations: s.relations.unwrap_or(sd.n_relations),
        n_blocks: s.blocks.unwrap_or(sd.n_blocks),
        noise: s.noise.unwrap_or(sd.noise),
        seed: s.seed.unwrap_or(sd.seed),
    };
    let split = SplitName::parse(s.split.as_deref().unwrap_or("test"))?;
    let k = s.k.unwrap_or(5);
    if k == 0 {
        bail!("k must be at least 1");
    }

    // echo back every value actually used
    let resolved = Settings {
        config: None,
        out: Some(out_dir.clone()),
        data: Some(data_dir.clone()),
        train_file: Some(data.train.clone()),
        valid_file: Some(data.valid.clone()),
        test_file: Some(data.test.clone()),
        checkpoint: Some(checkpoint.clone()),
        model: Some(kind.name().to_string()),
        dim: Some(dims.hidden),
        entity_dim: Some(dims.entity),
        relation_dim: Some(dims.relation),
        lambda: Some(match lambda {
            LambdaMode::Finite(l) => LambdaValue::Number(l),
            LambdaMode::Infinite => LambdaValue::Text("inf".into()),
        }),
        epsilon: s.epsilon,
        batch_size: Some(train.batch_size),
        negatives: Some(train.negatives_per_positive),
        learning_rate: Some(train.learning_rate),
        beta1: Some(train.adam_beta1),
        beta2: Some(train.adam_beta2),
        adam_eps: Some(train.adam_eps),
        margin: Some(train.margin),
        loss: Some(
            match train.loss_kind {
                LossKind::LogSoftmax => "log-softmax",
                LossKind::LinearMargin => "linear-margin",
            }
            .to_string(),
        ),
        epochs: Some(train.max_epochs),
        patience: Some(train.patience),
        resume: Some(s.resume.unwrap_or(false)),
        seed: Some(train.seed),
        threads: Some(train.threads),
        deterministic: Some(train.deterministic),
        entities: Some(synth.n_entities),
        relations: Some(synth.n_relations),
        blocks: Some(synth.n_blocks),
        noise: Some(synth.noise),
        split: Some(split.name().to_string()),
        queries: s.queries.clone(),
        k: Some(k),
        labeled: s.labeled.clone(),
        n_pos: Some(s.n_pos.unwrap_or(200)),
        n_neg: Some(s.n_neg.unwrap_or(200)),
    };

    Ok(RunConfig {
        command,
        out_dir,
        data_dir,
        data,
        checkpoint,
        spec,
        train,
        resume: s.resume.unwrap_or(false),
        synth,
        split,
        queries: s.queries.clone(),
        k,
        labeled: s.labeled.clone(),
        n_pos: s.n_pos.unwrap_or(200),
        n_neg: s.n_neg.unwrap_or(200),
        settings: resolved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(f: impl FnOnce(&mut Settings)) -> Settings {
        let mut s = Settings {
            out: Some("o".into()),
            ..Settings::default()
        };
        f(&mut s);
        s
    }

    #[test]
    fn model_flags() {
        let c = resolve(
            Command::Train,
            flags(|s| {
                s.model = Some("hhole".into());
                s.dim = Some(16);
                s.lambda = Some(LambdaValue::Number(2.0));
            }),
        )
        .unwrap();
        assert_eq!(c.spec.kind, CompositionKind::HHolE);
        assert_eq!(c.spec.dims, Dims::square(16));
        assert_eq!(c.spec.lambda, LambdaMode::Finite(2.0));

        let c = resolve(
            Command::Train,
            flags(|s| {
                s.model = Some("htpr".into());
                s.entity_dim = Some(5);
                s.relation_dim = Some(20);
            }),
        )
        .unwrap();
        assert_eq!(c.spec.dims.hidden, 500);
    }

    #[test]
    fn inconsistent_dims_name_the_constraint() {
        let err = resolve(
            Command::Train,
            flags(|s| {
                s.model = Some("htpr".into());
                s.entity_dim = Some(5);
                s.relation_dim = Some(20);
                s.dim = Some(400);
            }),
        )
        .unwrap_err();
        assert!(err.to_string().contains("d_entity^2 * d_relation"), "{err}");
        let err = resolve(
            Command::Train,
            flags(|s| {
                s.dim = Some(8);
                s.relation_dim = Some(4);
            }),
        )
        .unwrap_err();
        assert!(err.to_string().contains("d_entity == d_relation"), "{err}");
    }

    #[test]
    fn layering_and_defaults() {
        let file = Settings {
            seed: Some(9),
            epochs: Some(4),
            ..Settings::default()
        };
        let s = flags(|s| s.epochs = Some(7)).under(&file);
        assert_eq!((s.seed, s.epochs), (Some(9), Some(7)));
        let c = resolve(Command::Eval, flags(|_| {})).unwrap();
        assert_eq!(c.data_dir, PathBuf::from("o/data"));
        assert_eq!(c.checkpoint, PathBuf::from("o/model.ggrf"));
        assert_eq!(c.train.negatives_per_positive, 500);
        assert_eq!(c.spec.lambda, LambdaMode::Finite(2.0));
        let c = resolve(Command::Eval, flags(|s| s.model = Some("hole".into()))).unwrap();
        assert_eq!(c.train.loss_kind, LossKind::LinearMargin);
        assert_eq!(c.spec.lambda, LambdaMode::Infinite);
    }

    #[test]
    fn resolved_settings_round_trip_through_toml() {
        let c = resolve(Command::Train, flags(|s| s.lambda = Some(LambdaValue::Text("inf".into())))).unwrap();
        let text = toml::to_string(&c.settings).unwrap();
        let back: Settings = toml::from_str(&text).unwrap();
        assert_eq!(back, c.settings);
        assert!(toml::from_str::<Settings>("bogus = 1").is_err());
    }
}
