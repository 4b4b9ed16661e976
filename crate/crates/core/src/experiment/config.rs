//! Line-oriented experiment configuration.
//!
//! ```text
//! # comments run to end of line
//! name = toy-crelu
//! dataset = synthetic
//! preset = toy
//! scheme = crelu
//! epochs = 20
//! layers:
//!   conv 3x3x3x16 s1 p1 relu
//!   maxpool 2x2 s2
//!   gap
//! ```
//!
//! A `layers:` block replaces the preset. Its lines use the architecture-table
//! notation `conv KHxKWxCINxCOUT sS pP [activation]`; the block ends at the
//! next `key = value` line or at end of input.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::data::{AugmentOps, SyntheticKind, SyntheticSpec};
use crate::error::{Error, Result};
use crate::experiment::preset::{apply_scheme, preset_layers, Scheme};
use crate::nn::{ActivationKind, LayerSpec, NetworkConfig};
use crate::optim::Schedule;

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    /// A CIFAR-10 binary file or batch directory, optionally truncated.
    Cifar10 {
        path: PathBuf,
        train_subset: Option<usize>,
        test_subset: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum NetworkSource {
    Preset(String),
    Inline(Vec<LayerSpec>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd { momentum: f64 },
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CrossValidation {
    /// Train on the training set and report test metrics every epoch.
    None,
    /// Train on all but a holdout fraction, then retrain on everything until
    /// the training loss reaches the recorded holdout loss.
    Single { holdout: f64 },
    /// One model per fold, aggregated by averaging and by voting.
    KFold { folds: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub dataset: DatasetSource,
    pub network: NetworkSource,
    pub scheme: Scheme,
    pub optimizer: OptimizerKind,
    pub schedule: Schedule,
    pub epochs: u32,
    pub batch_size: usize,
    pub cv: CrossValidation,
    pub augment: AugmentOps,
    pub standardize: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            seed: 0,
            dataset: DatasetSource::Synthetic(SyntheticSpec::default()),
            network: NetworkSource::Preset("toy".into()),
            scheme: Scheme::Relu,
            optimizer: OptimizerKind::Sgd { momentum: 0.9 },
            schedule: Schedule::Step,
            epochs: 45,
            batch_size: 64,
            cv: CrossValidation::None,
            augment: AugmentOps { hflip: false, shift: 0 },
            standardize: true,
        }
    }
}

fn config_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

fn parse_num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| config_err(line, format!("invalid value {v:?} for {key}")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(config_err(line, format!("invalid boolean {v:?} for {key}"))),
    }
}

fn parse_activation(tokens: &[&str]) -> Option<ActivationKind> {
    match tokens {
        ["relu"] => Some(ActivationKind::Relu),
        ["crelu"] => Some(ActivationKind::Crelu),
        ["avr"] => Some(ActivationKind::Avr),
        ["leaky", s] => s.parse().ok().map(ActivationKind::LeakyRelu),
        [t] => t.strip_prefix("leaky").and_then(|s| s.parse().ok()).map(ActivationKind::LeakyRelu),
        _ => None,
    }
}

fn dims(line: usize, s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|d| d.parse().map_err(|_| config_err(line, format!("bad dimension list {s:?}"))))
        .collect()
}

fn flag(line: usize, tok: &str, prefix: char) -> Result<usize> {
    tok.strip_prefix(prefix)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| config_err(line, format!("expected {prefix}N, got {tok:?}")))
}

/// One table row: returns the layer(s) it expands to and, for conv rows, the
/// declared input channel count.
fn parse_layer_line(line: usize, text: &str) -> Result<(Vec<LayerSpec>, Option<usize>)> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let (head, rest) = tokens.split_first().ok_or_else(|| config_err(line, "empty layer line"))?;
    let trailing_act = |rest: &[&str]| -> Result<Vec<LayerSpec>> {
        if rest.is_empty() {
            return Ok(vec![]);
        }
        parse_activation(rest)
            .map(|a| vec![LayerSpec::Activation(a)])
            .ok_or_else(|| config_err(line, format!("unknown activation {:?}", rest.join(" "))))
    };
    match *head {
        "conv" => {
            if rest.len() < 3 {
                return Err(config_err(line, "conv needs KHxKWxCINxCOUT sS pP"));
            }
            let d = dims(line, rest[0])?;
            let [kh, kw, cin, cout] = d[..] else {
                return Err(config_err(line, "conv kernel must be KHxKWxCINxCOUT"));
            };
            let conv = LayerSpec::Conv2d {
                out_channels: cout,
                kh,
                kw,
                stride: flag(line, rest[1], 's')?,
                pad: flag(line, rest[2], 'p')?,
            };
            let mut out = vec![conv];
            out.extend(trailing_act(&rest[3..])?);
            Ok((out, Some(cin)))
        }
        "maxpool" | "avgpool" => {
            if rest.len() != 2 {
                return Err(config_err(line, format!("{head} needs KxK sS")));
            }
            let d = dims(line, rest[0])?;
            let k = match d[..] {
                [k] => k,
                [a, b] if a == b => a,
                _ => return Err(config_err(line, "pooling windows must be square")),
            };
            let stride = flag(line, rest[1], 's')?;
            Ok((
                vec![if *head == "maxpool" {
                    LayerSpec::MaxPool { k, stride }
                } else {
                    LayerSpec::AvgPool { k, stride }
                }],
                None,
            ))
        }
        "gap" => Ok((vec![LayerSpec::GlobalAvgPool], None)),
        "dense" => {
            let out_dim = rest
                .first()
                .ok_or_else(|| config_err(line, "dense needs a width"))
                .and_then(|v| parse_num(line, "dense", v))?;
            let mut out = vec![LayerSpec::Dense { out_dim }];
            out.extend(trailing_act(&rest[1..])?);
            Ok((out, None))
        }
        "dropout" => {
            let rate = rest
                .first()
                .ok_or_else(|| config_err(line, "dropout needs a rate"))
                .and_then(|v| parse_num(line, "dropout", v))?;
            Ok((vec![LayerSpec::Dropout { rate }], None))
        }
        _ => parse_activation(&tokens)
            .map(|a| (vec![LayerSpec::Activation(a)], None))
            .ok_or_else(|| config_err(line, format!("unknown layer {head:?}"))),
    }
}

/// Renders `layers` in the block notation, one row per line.
pub fn layers_to_text(layers: &[LayerSpec], input_channels: usize) -> String {
    let mut out = String::new();
    let mut channels = input_channels;
    let mut i = 0;
    while i < layers.len() {
        let line = match layers[i] {
            LayerSpec::Conv2d {
                out_channels,
                kh,
                kw,
                stride,
                pad,
            } => {
                let mut s = format!("conv {kh}x{kw}x{channels}x{out_channels} s{stride} p{pad}");
                channels = out_channels;
                if let Some(LayerSpec::Activation(a)) = layers.get(i + 1) {
                    s.push_str(&format!(" {a}"));
                    channels *= a.channel_factor();
                    i += 1;
                }
                s
            }
            LayerSpec::Dense { out_dim } => {
                channels = out_dim;
                let mut s = format!("dense {out_dim}");
                if let Some(LayerSpec::Activation(a)) = layers.get(i + 1) {
                    s.push_str(&format!(" {a}"));
                    channels *= a.channel_factor();
                    i += 1;
                }
                s
            }
            LayerSpec::MaxPool { k, stride } => format!("maxpool {k}x{k} s{stride}"),
            LayerSpec::AvgPool { k, stride } => format!("avgpool {k}x{k} s{stride}"),
            LayerSpec::GlobalAvgPool => "gap".into(),
            LayerSpec::Activation(a) => {
                channels *= a.channel_factor();
                a.to_string()
            }
            LayerSpec::Dropout { rate } => format!("dropout {rate}"),
        };
        out.push_str("  ");
        out.push_str(&line);
        out.push('\n');
        i += 1;
    }
    out
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        let mut synthetic = SyntheticSpec::default();
        let mut cifar: Option<PathBuf> = None;
        let (mut train_subset, mut test_subset) = (None, None);
        let mut layers: Option<Vec<(usize, Vec<LayerSpec>, Option<usize>)>> = None;
        let mut in_layers = false;
        let (mut optimizer, mut epochs, mut schedule) = (None, None, None);
        let (mut momentum, mut lr, mut wd) = (0.9, None, None);
        let mut cv = "none".to_string();
        let (mut kind, mut motif_size, mut motif_copies) = ("blobs".to_string(), 3, 2);
        let (mut holdout, mut folds) = (0.1, 10);
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if body == "layers:" {
                if layers.is_some() {
                    return Err(config_err(line, "duplicate layers block"));
                }
                layers = Some(Vec::new());
                in_layers = true;
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                if in_layers {
                    let (specs, cin) = parse_layer_line(line, body)?;
                    layers.as_mut().unwrap().push((line, specs, cin));
                    continue;
                }
                return Err(config_err(line, format!("expected key = value, got {body:?}")));
            };
            in_layers = false;
            let (key, v) = (key.trim(), value.trim());
            match key {
                "name" => c.name = v.to_string(),
                "seed" => c.seed = parse_num(line, key, v)?,
                "dataset" => cifar = (v != "synthetic").then(|| PathBuf::from(v)),
                "train_subset" => train_subset = Some(parse_num(line, key, v)?),
                "test_subset" => test_subset = Some(parse_num(line, key, v)?),
                "synthetic.classes" => synthetic.classes = parse_num(line, key, v)?,
                "synthetic.train_per_class" => synthetic.train_per_class = parse_num(line, key, v)?,
                "synthetic.test_per_class" => synthetic.test_per_class = parse_num(line, key, v)?,
                "synthetic.channels" => synthetic.channels = parse_num(line, key, v)?,
                "synthetic.size" => synthetic.size = parse_num(line, key, v)?,
                "synthetic.blobs" => synthetic.blobs = parse_num(line, key, v)?,
                "synthetic.noise" => synthetic.noise = parse_num(line, key, v)?,
                "synthetic.jitter" => synthetic.jitter = parse_num(line, key, v)?,
                "synthetic.antipodal" => synthetic.antipodal = parse_bool(line, key, v)?,
                "synthetic.kind" => {
                    kind = match v {
                        "blobs" | "motifs" => v.to_string(),
                        _ => return Err(config_err(line, format!("unknown synthetic kind {v:?}"))),
                    }
                }
                "synthetic.motif_size" => motif_size = parse_num(line, key, v)?,
                "synthetic.motif_copies" => motif_copies = parse_num(line, key, v)?,
                "preset" => c.network = NetworkSource::Preset(v.to_string()),
                "scheme" => c.scheme = v.parse().map_err(|e: Error| config_err(line, e.to_string()))?,
                "optimizer" => {
                    optimizer = Some(match v {
                        "sgd" => "sgd",
                        "adam" => "adam",
                        _ => return Err(config_err(line, format!("unknown optimizer {v:?}"))),
                    })
                }
                "momentum" => momentum = parse_num(line, key, v)?,
                "schedule" => {
                    schedule = Some(match v {
                        "step" | "scaled" | "constant" => v.to_string(),
                        _ => return Err(config_err(line, format!("unknown schedule {v:?}"))),
                    })
                }
                "lr" => lr = Some(parse_num(line, key, v)?),
                "weight_decay" => wd = Some(parse_num(line, key, v)?),
                "epochs" => epochs = Some(parse_num(line, key, v)?),
                "batch_size" => c.batch_size = parse_num(line, key, v)?,
                "cv" => cv = v.to_string(),
                "holdout" => holdout = parse_num(line, key, v)?,
                "folds" => folds = parse_num(line, key, v)?,
                "augment.hflip" => c.augment.hflip = parse_bool(line, key, v)?,
                "augment.shift" => c.augment.shift = parse_num(line, key, v)?,
                "standardize" => c.standardize = parse_bool(line, key, v)?,
                _ => return Err(config_err(line, format!("unknown key {key:?}"))),
            }
        }
        if kind == "motifs" {
            synthetic.kind = SyntheticKind::SignedMotifs {
                size: motif_size,
                copies: motif_copies,
            };
        }
        c.dataset = match cifar {
            Some(path) => DatasetSource::Cifar10 {
                path,
                train_subset,
                test_subset,
            },
            None => DatasetSource::Synthetic(synthetic),
        };
        if let Some(block) = layers {
            if block.is_empty() {
                return Err(config_err(0, "layers block is empty"));
            }
            let mut flat = Vec::new();
            let mut lines = Vec::new();
            for (line, specs, cin) in block {
                lines.push((flat.len(), line, cin));
                flat.extend(specs);
            }
            let shape = c.input_shape();
            let classes = c.classes();
            let cfg = NetworkConfig::new(shape, flat.clone(), classes).map_err(|e| config_err(0, e.to_string()))?;
            for (start, line, cin) in lines {
                if let Some(cin) = cin {
                    let have = cfg.shape_before(start)[0];
                    if have != cin {
                        return Err(config_err(line, format!("conv declares {cin} input channels, receives {have}")));
                    }
                }
            }
            c.network = NetworkSource::Inline(flat);
        }
        // Table defaults: full-width models use SGD on the 45-epoch table,
        // halved CReLU models use Adam at 2e-4 for 100 epochs.
        let adam = optimizer.map_or(c.scheme == Scheme::CreluHalf, |o| o == "adam");
        c.optimizer = if adam { OptimizerKind::Adam } else { OptimizerKind::Sgd { momentum } };
        c.epochs = epochs.unwrap_or(if adam { 100 } else { 45 });
        let schedule = schedule.unwrap_or_else(|| if adam { "constant" } else { "step" }.to_string());
        c.schedule = match schedule.as_str() {
            "step" => Schedule::Step,
            "scaled" => Schedule::Scaled { total: c.epochs },
            _ => Schedule::Constant {
                lr: lr.unwrap_or(if adam { 2e-4 } else { 1e-2 }),
                weight_decay: wd.unwrap_or(0.0),
            },
        };
        if c.epochs == 0 || c.batch_size == 0 {
            return Err(config_err(0, "epochs and batch_size must be positive"));
        }
        c.cv = match cv.as_str() {
            "none" => CrossValidation::None,
            "single" => CrossValidation::Single { holdout },
            "kfold" => CrossValidation::KFold { folds },
            _ => return Err(config_err(0, format!("unknown cv scheme {cv:?}"))),
        };
        c.network_config()?;
        Ok(c)
    }

    /// Per-sample input shape implied by the dataset.
    pub fn input_shape(&self) -> Vec<usize> {
        match &self.dataset {
            DatasetSource::Synthetic(s) => vec![s.channels, s.size, s.size],
            DatasetSource::Cifar10 { .. } => vec![3, 32, 32],
        }
    }

    pub fn classes(&self) -> usize {
        match &self.dataset {
            DatasetSource::Synthetic(s) => s.classes,
            DatasetSource::Cifar10 { .. } => crate::data::cifar::CLASSES,
        }
    }

    /// Base layers with the activation scheme applied.
    pub fn layers(&self) -> Result<Vec<LayerSpec>> {
        let base = match &self.network {
            NetworkSource::Preset(name) => preset_layers(name, self.classes())?,
            NetworkSource::Inline(l) => l.clone(),
        };
        Ok(apply_scheme(&base, self.scheme))
    }

    pub fn network_config(&self) -> Result<NetworkConfig> {
        NetworkConfig::new(self.input_shape(), self.layers()?, self.classes())
    }
}

/// Canonical text that parses back to an equal configuration, with the
/// scheme already folded into an inline layers block.
impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "name = {}", self.name)?;
        writeln!(f, "seed = {}", self.seed)?;
        match &self.dataset {
            DatasetSource::Synthetic(s) => {
                writeln!(f, "dataset = synthetic")?;
                writeln!(f, "synthetic.classes = {}", s.classes)?;
                writeln!(f, "synthetic.train_per_class = {}", s.train_per_class)?;
                writeln!(f, "synthetic.test_per_class = {}", s.test_per_class)?;
                writeln!(f, "synthetic.channels = {}", s.channels)?;
                writeln!(f, "synthetic.size = {}", s.size)?;
                writeln!(f, "synthetic.blobs = {}", s.blobs)?;
                writeln!(f, "synthetic.noise = {:?}", s.noise)?;
                writeln!(f, "synthetic.jitter = {}", s.jitter)?;
                writeln!(f, "synthetic.antipodal = {}", s.antipodal)?;
                if let SyntheticKind::SignedMotifs { size, copies } = s.kind {
                    writeln!(f, "synthetic.kind = motifs\nsynthetic.motif_size = {size}\nsynthetic.motif_copies = {copies}")?;
                }
            }
            DatasetSource::Cifar10 {
                path,
                train_subset,
                test_subset,
            } => {
                writeln!(f, "dataset = {}", path.display())?;
                if let Some(n) = train_subset {
                    writeln!(f, "train_subset = {n}")?;
                }
                if let Some(n) = test_subset {
                    writeln!(f, "test_subset = {n}")?;
                }
            }
        }
        writeln!(f, "scheme = relu")?;
        match self.optimizer {
            OptimizerKind::Sgd { momentum } => writeln!(f, "optimizer = sgd\nmomentum = {momentum:?}")?,
            OptimizerKind::Adam => writeln!(f, "optimizer = adam")?,
        }
        writeln!(f, "epochs = {}", self.epochs)?;
        match self.schedule {
            Schedule::Step => writeln!(f, "schedule = step")?,
            Schedule::Scaled { .. } => writeln!(f, "schedule = scaled")?,
            Schedule::Constant { lr, weight_decay } => {
                writeln!(f, "schedule = constant\nlr = {lr:?}\nweight_decay = {weight_decay:?}")?
            }
        }
        writeln!(f, "batch_size = {}", self.batch_size)?;
        match self.cv {
            CrossValidation::None => writeln!(f, "cv = none")?,
            CrossValidation::Single { holdout } => writeln!(f, "cv = single\nholdout = {holdout:?}")?,
            CrossValidation::KFold { folds } => writeln!(f, "cv = kfold\nfolds = {folds}")?,
        }
        writeln!(f, "augment.hflip = {}", self.augment.hflip)?;
        writeln!(f, "augment.shift = {}", self.augment.shift)?;
        writeln!(f, "standardize = {}", self.standardize)?;
        writeln!(f, "layers:")?;
        match self.layers() {
            Ok(l) => f.write_str(&layers_to_text(&l, self.input_shape()[0])),
            Err(_) => Err(fmt::Error),
        }
    }
}
