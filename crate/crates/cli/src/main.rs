//! `crelu-lab`: training, pairing analysis, feature inversion and theory
//! checks from the command line.

mod netpbm;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crelu_core::data::Dataset;
use crelu_core::experiment::analysis::{
    conv_count, conv_inputs, conv_layer_index, crelu_correlation, pairing_analysis, pooled_conv_layer, random_like,
};
use crelu_core::experiment::{load_datasets, metrics_csv, run_experiment, Checkpoint, DatasetSource, ExperimentConfig};
use crelu_core::nn::{forward_prefix, ActivationKind, LayerSpec, NetworkConfig, Params};
use crelu_core::pairing::{histogram_svg, invariance_score, CorrelationReport, InvarianceReport, Transform};
use crelu_core::recon::theory::PropertyResult;
use crelu_core::recon::{invert_conv_stack, reconstruction_ratio_experiment, verify_theory};
use crelu_core::tensor::norm;
use crelu_core::{Error, Result, RngStream, Tensor};

#[derive(Parser)]
#[command(name = "crelu-lab", version, about = "Experiments with concatenated rectified linear units")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write checkpoints plus per-epoch metrics.
    Train(TrainArgs),
    /// Pairing statistics of one conv layer's filters.
    AnalyzePairing(PairingArgs),
    /// Invert conv/CReLU features of a test image back to pixels.
    Reconstruct(ReconstructArgs),
    /// Reconstruction ratios of a conv -> CReLU -> max-pool layer.
    ReconRatio(RatioArgs),
    /// Invariance scores of every conv layer.
    Invariance(InvarianceArgs),
    /// Randomised checks of the reconstruction theory.
    VerifyTheory(TheoryArgs),
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// `synthetic` or a CIFAR-10 binary file or directory.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct PairingArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// 1-based conv layer ordinal.
    #[arg(long, default_value_t = 1)]
    layer: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Number of conv/CReLU stages to invert.
    #[arg(long, default_value_t = 1)]
    depth: usize,
    /// Test-set index of the image.
    #[arg(long, default_value_t = 0)]
    image: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RatioArgs {
    /// Trained model; without it the network is built from `--config` at initialisation.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, required_unless_present = "checkpoint")]
    config: Option<PathBuf>,
    /// Replace the layer's filters with i.i.d. Gaussian ones.
    #[arg(long)]
    random: bool,
    #[arg(long, default_value_t = 2)]
    layer: usize,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct InvarianceArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Restrict to one conv layer ordinal.
    #[arg(long)]
    layer: Option<usize>,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Translation in pixels used by the shift transforms.
    #[arg(long, default_value_t = 2)]
    shift: i64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentConfig::parse(&text)
}

fn apply_dataset(exp: &mut ExperimentConfig, flag: Option<&str>) {
    match flag {
        None => {}
        Some("synthetic") => {
            if !matches!(exp.dataset, DatasetSource::Synthetic(_)) {
                exp.dataset = DatasetSource::Synthetic(Default::default());
            }
        }
        Some(path) => {
            let (train_subset, test_subset) = match exp.dataset {
                DatasetSource::Cifar10 { train_subset, test_subset, .. } => (train_subset, test_subset),
                DatasetSource::Synthetic(_) => (None, None),
            };
            exp.dataset = DatasetSource::Cifar10 {
                path: path.into(),
                train_subset,
                test_subset,
            };
        }
    }
}

/// A trained model and the experiment that produced it.
struct Model {
    exp: ExperimentConfig,
    cfg: NetworkConfig,
    params: Params,
}

impl Model {
    fn load(path: &Path, dataset: Option<&str>) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        let mut exp = ExperimentConfig::parse(&ck.config)?;
        apply_dataset(&mut exp, dataset);
        let cfg = exp.network_config()?;
        cfg.check_params(&ck.params)?;
        Ok(Model {
            exp,
            cfg,
            params: ck.params,
        })
    }

    fn test_set(&self) -> Result<Dataset> {
        Ok(load_datasets(&self.exp)?.1)
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let mut exp = read_config(&args.config)?;
    if let Some(seed) = args.common.seed {
        exp.seed = seed;
    }
    apply_dataset(&mut exp, args.common.dataset.as_deref());
    let (tr, te) = load_datasets(&exp)?;
    let outcome = run_experiment(&exp, &tr, &te)?;
    let out = &args.common.out;
    write(&out.join("metrics.csv"), metrics_csv(&outcome.metrics))?;
    write(&out.join("summary.csv"), outcome.summary_csv())?;
    let text = exp.to_string();
    for m in &outcome.models {
        let ck = Checkpoint {
            seed: exp.seed,
            epoch: u64::from(m.epoch),
            config: text.clone(),
            params: m.params.clone(),
            optimizer: Some(m.optimizer.clone()),
        };
        let path = out.join(format!("{}.crlu", m.name));
        ck.save(&path)?;
        println!("wrote {}", path.display());
    }
    for (k, v) in &outcome.summary {
        println!("{k} {v:.4}");
    }
    Ok(())
}

fn analyze_pairing(args: PairingArgs) -> Result<()> {
    let model = Model::load(&args.checkpoint, args.common.dataset.as_deref())?;
    let seed = args.common.seed.unwrap_or(model.exp.seed);
    let mut rng = RngStream::new(seed).split(0x9a1);
    let a = pairing_analysis(&model.cfg, &model.params, args.layer, &mut rng)?;
    let out = &args.common.out;
    write(&out.join("pairing_learned.csv"), a.learned.csv())?;
    write(&out.join("pairing_random.csv"), a.random.csv())?;
    write(
        &out.join("pairing_test.csv"),
        format!(
            "layer,mean_mu_learned,mean_mu_random,mean_difference,p_value\n{},{:.6},{:.6},{:.6},{:.6}\n",
            args.layer,
            a.learned.mean(),
            a.random.mean(),
            a.test.mean_difference,
            a.test.p_value
        ),
    )?;
    let svg = histogram_svg(
        &format!("conv{} pairing", args.layer),
        &[("learned", &a.learned_hist, "#1f77b4"), ("random", &a.random_hist, "#ff7f0e")],
    );
    write(&out.join("pairing_hist.svg"), svg)?;
    println!(
        "conv{} mean mu learned {:.4} random {:.4} p {:.4}",
        args.layer,
        a.learned.mean(),
        a.random.mean(),
        a.test.p_value
    );
    match crelu_correlation(&model.cfg, &model.params, args.layer) {
        Ok(c) => write(
            &out.join("correlation.csv"),
            format!("{}\n{}\n", CorrelationReport::CSV_HEADER, c.csv_row(args.layer)),
        )?,
        Err(Error::UnsupportedLayer { .. }) => {}
        Err(e) => return Err(e),
    }
    Ok(())
}

/// Number of leading layers that end with the `depth`-th conv/CReLU stage.
fn stage_prefix(cfg: &NetworkConfig, depth: usize) -> Result<usize> {
    let mut seen = 0;
    let mut after_conv = false;
    for (i, layer) in cfg.layers().iter().enumerate() {
        match layer {
            LayerSpec::Conv2d { .. } => after_conv = true,
            LayerSpec::Activation(ActivationKind::Crelu) if after_conv => {
                seen += 1;
                after_conv = false;
                if seen == depth {
                    return Ok(i + 1);
                }
            }
            LayerSpec::Dropout { .. } => {}
            _ => after_conv = false,
        }
    }
    Err(Error::InvalidArgument(format!("network has {seen} conv/CReLU stages, depth {depth} requested")))
}

fn reconstruct(args: ReconstructArgs) -> Result<()> {
    let model = Model::load(&args.checkpoint, args.common.dataset.as_deref())?;
    let test = model.test_set()?;
    if args.image >= test.len() {
        return Err(Error::InvalidArgument(format!(
            "image {} out of range for {} test images",
            args.image,
            test.len()
        )));
    }
    let (x, _) = test.batch(&[args.image])?;
    let upto = stage_prefix(&model.cfg, args.depth)?;
    let features = forward_prefix(&model.cfg, &model.params, &x, upto)?;
    let r = invert_conv_stack(&model.cfg, &model.params, &features, args.depth)?;
    let ratio = norm(r.sub(&x)?.data()) / norm(x.data());
    let shape = x.shape()[1..].to_vec();
    let original = x.reshape(shape.clone())?;
    let recon = r.reshape(shape)?;
    let out = &args.common.out;
    let ext = netpbm::extension(&original);
    write(&out.join(format!("original.{ext}")), netpbm::encode(&original)?)?;
    write(&out.join(format!("reconstruction.{ext}")), netpbm::encode(&recon)?)?;
    write(
        &out.join("reconstruction.csv"),
        format!("image,depth,ratio\n{},{},{ratio:.6}\n", args.image, args.depth),
    )?;
    println!("image {} depth {} ratio {ratio:.4}", args.image, args.depth);
    Ok(())
}

fn recon_ratio(args: RatioArgs) -> Result<()> {
    let model = match (&args.checkpoint, &args.config) {
        (Some(path), _) => Model::load(path, args.common.dataset.as_deref())?,
        (None, Some(path)) => {
            let mut exp = read_config(path)?;
            if let Some(seed) = args.common.seed {
                exp.seed = seed;
            }
            apply_dataset(&mut exp, args.common.dataset.as_deref());
            let cfg = exp.network_config()?;
            let params = cfg.init_params(&mut RngStream::new(exp.seed).split(10).split(0));
            Model { exp, cfg, params }
        }
        (None, None) => unreachable!("clap requires one of the two"),
    };
    let test = model.test_set()?;
    let mut layer = pooled_conv_layer(&model.cfg, &model.params, args.layer)?;
    let source = if args.random {
        let seed = args.common.seed.unwrap_or(model.exp.seed);
        layer = random_like(&layer, &mut RngStream::new(seed).split(0x4a7));
        "random"
    } else if args.checkpoint.is_some() {
        "learned"
    } else {
        "init"
    };
    let inputs = conv_inputs(&model.cfg, &model.params, &test, args.layer, args.samples)?;
    let s = reconstruction_ratio_experiment(&layer, &inputs)?;
    write(
        &args.common.out.join("recon_ratio.csv"),
        format!(
            "source,layer,samples,mean_ratio,stderr\n{source},{},{},{:.6},{:.6}\n",
            args.layer,
            s.ratios.len(),
            s.mean,
            s.stderr
        ),
    )?;
    println!("{source} conv{} ratio {:.4} +- {:.4} over {}", args.layer, s.mean, s.stderr, s.ratios.len());
    Ok(())
}

fn invariance(args: InvarianceArgs) -> Result<()> {
    let model = Model::load(&args.checkpoint, args.common.dataset.as_deref())?;
    let test = model.test_set()?;
    let n = args.samples.min(test.len());
    let images: Vec<Tensor> = test.images[..n].iter().map(|im| im.pixels.clone()).collect();
    let transforms = Transform::standard_set(args.shift);
    let ordinals: Vec<usize> = match args.layer {
        Some(l) => vec![l],
        None => (1..=conv_count(&model.cfg)).collect(),
    };
    let mut csv = format!("{}\n", InvarianceReport::CSV_HEADER);
    for k in ordinals {
        let index = conv_layer_index(&model.cfg, k)?;
        let rep = invariance_score(&model.cfg, &model.params, index, &images, &transforms)?;
        csv.push_str(&rep.csv_row(k));
        csv.push('\n');
        println!("conv{k} invariance {:.4}", rep.layer_score);
    }
    write(&args.common.out.join("invariance.csv"), csv)
}

fn verify(args: TheoryArgs) -> Result<bool> {
    let results = verify_theory(args.seed)?;
    let mut csv = format!("{}\n", PropertyResult::CSV_HEADER);
    for r in &results {
        println!("{r}");
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    if let Some(out) = &args.out {
        write(&out.join("theory.csv"), csv)?;
    }
    Ok(results.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a).map(|_| true),
        Command::AnalyzePairing(a) => analyze_pairing(a).map(|_| true),
        Command::Reconstruct(a) => reconstruct(a).map(|_| true),
        Command::ReconRatio(a) => recon_ratio(a).map(|_| true),
        Command::Invariance(a) => invariance(a).map(|_| true),
        Command::VerifyTheory(a) => verify(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
