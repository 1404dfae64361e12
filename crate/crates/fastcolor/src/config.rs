//! Flat `key = value` training configuration.
//!
//! Every key is optional in a file; missing keys keep their defaults and
//! unknown keys are rejected. `version` must match [`CONFIG_VERSION`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fastcolor_core::fcn::{ColorSetRule, FcnConfig, ProblemInput};
use fastcolor_core::graph::{Graph, GraphSource};
use fastcolor_core::mcts::MctsConfig;
use fastcolor_core::nn::Pooling;
use fastcolor_core::rng;
use fastcolor_core::selfplay::{EpisodeConfig, DEFAULT_BUFFER_CAPACITY};
use sha2::{Digest, Sha256};

use crate::error::{io_err, Error, Result};
use crate::io::load_graph;

pub const CONFIG_VERSION: u32 = 1;

/// A set of graphs: `count` draws of a random source, or files.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub source: SourceSpec,
    pub count: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SourceSpec {
    Random(GraphSource),
    /// Every file in a directory, in name order.
    Dir(PathBuf),
}

impl SourceSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad graph source {s:?}"));
        let mut parts = s.splitn(2, ':');
        let kind = parts.next().unwrap_or("");
        let rest = parts.next().ok_or_else(bad)?;
        let nums: Vec<&str> = rest.split(':').collect();
        let spec = match kind {
            "er" if nums.len() == 2 => GraphSource::ErdosRenyi {
                n: nums[0].parse().map_err(|_| bad())?,
                p: nums[1].parse().map_err(|_| bad())?,
            },
            "ws" if nums.len() == 3 => GraphSource::WattsStrogatz {
                n: nums[0].parse().map_err(|_| bad())?,
                k: nums[1].parse().map_err(|_| bad())?,
                beta: nums[2].parse().map_err(|_| bad())?,
            },
            "file" => GraphSource::File { path: rest.into() },
            "dir" => return Ok(SourceSpec::Dir(rest.into())),
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(SourceSpec::Random(spec))
    }
}

impl std::fmt::Display for SourceSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SourceSpec::Random(GraphSource::ErdosRenyi { n, p }) => write!(f, "er:{n}:{p}"),
            SourceSpec::Random(GraphSource::WattsStrogatz { n, k, beta }) => write!(f, "ws:{n}:{k}:{beta}"),
            SourceSpec::Random(GraphSource::File { path }) => write!(f, "file:{path}"),
            SourceSpec::Dir(p) => write!(f, "dir:{}", p.display()),
        }
    }
}

impl Dataset {
    pub fn random(source: GraphSource, count: usize, seed: u64) -> Self {
        Dataset {
            source: SourceSpec::Random(source),
            count,
            seed,
        }
    }

    /// Graph `i` of a random source uses seed `mix(seed, i, 0)`.
    pub fn load(&self) -> Result<Vec<Graph>> {
        match &self.source {
            SourceSpec::Random(GraphSource::File { path }) => Ok(vec![load_graph(Path::new(path))?]),
            SourceSpec::Random(src) => (0..self.count)
                .map(|i| {
                    let g = src.generate(rng::mix(self.seed, i as u64, 0)).expect("random source")?;
                    Ok(g)
                })
                .collect(),
            SourceSpec::Dir(dir) => {
                let mut paths: Vec<PathBuf> = fs::read_dir(dir)
                    .map_err(io_err(dir))?
                    .map(|e| e.map(|e| e.path()).map_err(io_err(dir)))
                    .collect::<Result<_>>()?;
                paths.retain(|p| p.is_file());
                paths.sort();
                paths.iter().map(|p| load_graph(p)).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    /// Not part of the hash.
    pub output: PathBuf,
    pub train: Dataset,
    pub eval: Dataset,
    pub fcn: FcnConfig,
    pub episode: EpisodeConfig,
    pub iterations: usize,
    pub steps_per_iteration: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub buffer_capacity: usize,
    /// Training steps between embedding-table refreshes.
    pub embed_refresh: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let er = GraphSource::ErdosRenyi { n: 32, p: 0.5 };
        TrainConfig {
            seed: 0,
            output: PathBuf::from("runs/default"),
            train: Dataset::random(er.clone(), 10, 1),
            eval: Dataset::random(er, 10, 1),
            fcn: FcnConfig::default(),
            episode: EpisodeConfig::default(),
            iterations: 100,
            steps_per_iteration: 64,
            batch_size: 4,
            lr: 1e-3,
            buffer_capacity: DEFAULT_BUFFER_CAPACITY,
            embed_refresh: 16,
        }
    }
}

fn pooling_name(p: Pooling) -> &'static str {
    match p {
        Pooling::Mean => "mean",
        Pooling::Max => "max",
    }
}

fn color_rule_name(r: ColorSetRule) -> String {
    match r {
        ColorSetRule::Recent => "recent".into(),
        ColorSetRule::Random { seed } => format!("random:{seed}"),
    }
}

fn noise_name(n: Option<(f64, f64)>) -> String {
    match n {
        None => "none".into(),
        Some((a, f)) => format!("{a},{f}"),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl TrainConfig {
    /// Every key with its current value, in file order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let f = &self.fcn;
        let e = &self.episode;
        vec![
            ("version", CONFIG_VERSION.to_string()),
            ("seed", self.seed.to_string()),
            ("output", self.output.display().to_string()),
            ("train.source", self.train.source.to_string()),
            ("train.count", self.train.count.to_string()),
            ("train.seed", self.train.seed.to_string()),
            ("eval.source", self.eval.source.to_string()),
            ("eval.count", self.eval.count.to_string()),
            ("eval.seed", self.eval.seed.to_string()),
            ("fcn.embed_dim", f.embed_dim.to_string()),
            ("fcn.embed_iterations", f.embed_iterations.to_string()),
            ("fcn.embed_depth", f.embed_depth.to_string()),
            ("fcn.embed_seed", f.embed_seed.to_string()),
            ("fcn.window", f.window.to_string()),
            ("fcn.set_size", f.set_size.to_string()),
            ("fcn.conv_channels", f.conv_channels.to_string()),
            ("fcn.conv_layers", f.conv_layers.to_string()),
            ("fcn.conv_kernel", f.conv_kernel.to_string()),
            ("fcn.v_width", f.v_width.to_string()),
            ("fcn.v_layers", f.v_layers.to_string()),
            ("fcn.p_width", f.p_width.to_string()),
            ("fcn.p_layers", f.p_layers.to_string()),
            ("fcn.candidate_cap", f.candidate_cap.to_string()),
            ("fcn.pooling", pooling_name(f.pooling).into()),
            (
                "fcn.problem_input",
                match f.problem_input {
                    ProblemInput::Pooled => "pooled".into(),
                    ProblemInput::Raw => "raw".into(),
                },
            ),
            ("fcn.color_sets", color_rule_name(f.color_sets)),
            ("fcn.walk_prob", f.walk_prob.to_string()),
            ("fcn.walk_budget", f.walk_budget.to_string()),
            ("fcn.zero_init_heads", f.zero_init_heads.to_string()),
            ("selfplay.run_ahead", e.run_ahead.to_string()),
            ("selfplay.segment", e.segment.to_string()),
            ("selfplay.sample_first_k", e.sample_first_k.to_string()),
            ("selfplay.move_sample_rate", e.move_sample_rate.to_string()),
            ("mcts.exploration", e.mcts.exploration.to_string()),
            ("mcts.simulations", e.mcts.simulations.to_string()),
            ("mcts.root_noise", noise_name(e.mcts.root_noise)),
            ("train.iterations", self.iterations.to_string()),
            ("train.steps_per_iteration", self.steps_per_iteration.to_string()),
            ("train.batch_size", self.batch_size.to_string()),
            ("train.lr", self.lr.to_string()),
            ("train.buffer_capacity", self.buffer_capacity.to_string()),
            ("train.embed_refresh", self.embed_refresh.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let f = &mut self.fcn;
        let e = &mut self.episode;
        match key {
            "version" => {
                let ver: u32 = parse_num(key, v)?;
                if ver != CONFIG_VERSION {
                    return Err(Error::Config(format!("unsupported config version {ver}")));
                }
            }
            "seed" => self.seed = parse_num(key, v)?,
            "output" => self.output = PathBuf::from(v),
            "train.source" => self.train.source = SourceSpec::parse(v)?,
            "train.count" => self.train.count = parse_num(key, v)?,
            "train.seed" => self.train.seed = parse_num(key, v)?,
            "eval.source" => self.eval.source = SourceSpec::parse(v)?,
            "eval.count" => self.eval.count = parse_num(key, v)?,
            "eval.seed" => self.eval.seed = parse_num(key, v)?,
            "fcn.embed_dim" => f.embed_dim = parse_num(key, v)?,
            "fcn.embed_iterations" => f.embed_iterations = parse_num(key, v)?,
            "fcn.embed_depth" => f.embed_depth = parse_num(key, v)?,
            "fcn.embed_seed" => f.embed_seed = parse_num(key, v)?,
            "fcn.window" => f.window = parse_num(key, v)?,
            "fcn.set_size" => f.set_size = parse_num(key, v)?,
            "fcn.conv_channels" => f.conv_channels = parse_num(key, v)?,
            "fcn.conv_layers" => f.conv_layers = parse_num(key, v)?,
            "fcn.conv_kernel" => f.conv_kernel = parse_num(key, v)?,
            "fcn.v_width" => f.v_width = parse_num(key, v)?,
            "fcn.v_layers" => f.v_layers = parse_num(key, v)?,
            "fcn.p_width" => f.p_width = parse_num(key, v)?,
            "fcn.p_layers" => f.p_layers = parse_num(key, v)?,
            "fcn.candidate_cap" => f.candidate_cap = parse_num(key, v)?,
            "fcn.pooling" => {
                f.pooling = match v {
                    "mean" => Pooling::Mean,
                    "max" => Pooling::Max,
                    _ => return Err(Error::Config(format!("{key}: expected mean or max"))),
                }
            }
            "fcn.problem_input" => {
                f.problem_input = match v {
                    "pooled" => ProblemInput::Pooled,
                    "raw" => ProblemInput::Raw,
                    _ => return Err(Error::Config(format!("{key}: expected pooled or raw"))),
                }
            }
            "fcn.color_sets" => {
                f.color_sets = match v.strip_prefix("random:") {
                    Some(seed) => ColorSetRule::Random {
                        seed: parse_num(key, seed)?,
                    },
                    None if v == "recent" => ColorSetRule::Recent,
                    None => return Err(Error::Config(format!("{key}: expected recent or random:<seed>"))),
                }
            }
            "fcn.walk_prob" => f.walk_prob = parse_num(key, v)?,
            "fcn.walk_budget" => f.walk_budget = parse_num(key, v)?,
            "fcn.zero_init_heads" => f.zero_init_heads = parse_bool(key, v)?,
            "selfplay.run_ahead" => e.run_ahead = parse_num(key, v)?,
            "selfplay.segment" => e.segment = parse_num(key, v)?,
            "selfplay.sample_first_k" => e.sample_first_k = parse_num(key, v)?,
            "selfplay.move_sample_rate" => e.move_sample_rate = parse_num(key, v)?,
            "mcts.exploration" => e.mcts.exploration = parse_num(key, v)?,
            "mcts.simulations" => e.mcts.simulations = parse_num(key, v)?,
            "mcts.root_noise" => {
                e.mcts.root_noise = match v {
                    "none" => None,
                    _ => {
                        let (a, b) = v
                            .split_once(',')
                            .ok_or_else(|| Error::Config(format!("{key}: expected none or alpha,fraction")))?;
                        Some((parse_num(key, a)?, parse_num(key, b)?))
                    }
                }
            }
            "train.iterations" => self.iterations = parse_num(key, v)?,
            "train.steps_per_iteration" => self.steps_per_iteration = parse_num(key, v)?,
            "train.batch_size" => self.batch_size = parse_num(key, v)?,
            "train.lr" => self.lr = parse_num(key, v)?,
            "train.buffer_capacity" => self.buffer_capacity = parse_num(key, v)?,
            "train.embed_refresh" => self.embed_refresh = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.episode.validate()?;
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2 for batch norm".into()));
        }
        if self.embed_refresh == 0 || self.buffer_capacity == 0 {
            return Err(Error::Config("embed_refresh and buffer_capacity must be positive".into()));
        }
        if !(self.lr >= 0.0) {
            return Err(Error::Config("learning rate must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.fcn.walk_prob) {
            return Err(Error::Config("walk probability must be in [0, 1]".into()));
        }
        if self.fcn.conv_kernel % 2 == 0 {
            return Err(Error::Config("conv kernel must be odd".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# fastcolor training config\n");
        for (k, v) in self.pairs() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(io_err(path))
    }

    /// SHA-256 over every key except `output`, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.pairs() {
            if k != "output" {
                h.update(k.as_bytes());
                h.update(b"=");
                h.update(v.as_bytes());
                h.update(b"\n");
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn mcts(&self) -> MctsConfig {
        MctsConfig {
            seed: self.seed,
            ..self.episode.mcts
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.fcn.pooling = Pooling::Max;
        cfg.fcn.color_sets = ColorSetRule::Random { seed: 7 };
        cfg.episode.mcts.root_noise = Some((0.3, 0.25));
        cfg.lr = 0.000_123_456_789;
        cfg.eval = Dataset::random(GraphSource::WattsStrogatz { n: 128, k: 4, beta: 0.5 }, 20, 9);
        let back = TrainConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn hash_ignores_output_only() {
        let a = TrainConfig::default();
        let mut b = a.clone();
        b.output = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(TrainConfig::parse("nope = 1").is_err());
        assert!(TrainConfig::parse("seed 1").is_err());
        assert!(TrainConfig::parse("version = 2").is_err());
        assert!(TrainConfig::parse("train.source = ws:10:3:0.5").is_err());
        assert!(TrainConfig::parse("train.batch_size = 1").is_err());
        let cfg = TrainConfig::parse("# c\n\nseed = 5\n").unwrap();
        assert_eq!(cfg.seed, 5);
    }

    #[test]
    fn random_datasets_are_reproducible() {
        let d = Dataset::random(GraphSource::ErdosRenyi { n: 16, p: 0.3 }, 3, 4);
        let a = d.load().unwrap();
        assert_eq!(a, d.load().unwrap());
        assert_eq!(a.len(), 3);
        assert_ne!(a[0], a[1]);
    }
}
