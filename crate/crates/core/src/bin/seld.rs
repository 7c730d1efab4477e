use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use seld_core::accdoa::{decode, read_events, write_events, AccdoaSequence, DEFAULT_THRESHOLD};
use seld_core::audio::{read_foa_wav, write_foa_wav};
use seld_core::augment::{augment_clip, AugmentConfig};
use seld_core::emulator::{mix_scene, sample_epoch, SampleLibrary, SceneSpec, SrirSynthConfig};
use seld_core::features::{FeatureConfig, FeatureExtractor};
use seld_core::labels::{read_labels, write_labels, ClipAnnotation, DEFAULT_N_CLASSES};
use seld_core::manifest::DatasetManifest;
use seld_core::metrics::{evaluate, MetricConfig};
use seld_core::pipeline::{kfold_split, run_pipeline, PredictorSpec, RunConfig, SplitMode};
use seld_core::rotation::RotationPattern;
use seld_core::tta::{run_tta, TtaConfig};
use seld_core::{Error, Result};

#[derive(Parser)]
#[command(name = "seld", version, about = "Sound event localization and detection toolkit")]
struct Cli {
    /// Random seed; overrides seeds given in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Feature extraction.
    #[command(subcommand)]
    Features(FeaturesCmd),
    /// Apply one of the 16 rotation patterns to a clip and its labels.
    Rotate(RotateArgs),
    /// Waveform augmentation with randomly drawn parameters.
    Augment(AugmentArgs),
    /// Render a scene from a spec and a sample library.
    Emulate(EmulateArgs),
    /// Manifest operations.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// ACCDOA tensor operations.
    #[command(subcommand)]
    Accdoa(AccdoaCmd),
    /// Test-time augmentation.
    #[command(subcommand)]
    Tta(TtaCmd),
    /// Score predicted events against reference labels.
    Eval(EvalArgs),
    /// End-to-end evaluation runs.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

#[derive(Subcommand)]
enum FeaturesCmd {
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RotateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..16))]
    pattern: u8,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, requires = "labels")]
    labels_out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_N_CLASSES)]
    n_classes: usize,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmulateArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    library: PathBuf,
    /// Writes `<prefix>.wav` and `<prefix>.csv`.
    #[arg(long)]
    out_prefix: PathBuf,
    #[arg(long)]
    srir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Stratified,
    Room,
}

#[derive(Subcommand)]
enum DatasetCmd {
    SampleEpoch {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        emulated: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Kfold {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, value_enum, default_value = "stratified")]
        mode: ModeArg,
        /// Writes `<prefix>.fold<i>.json` for i = 1..k.
        #[arg(long)]
        out_prefix: PathBuf,
    },
}

#[derive(Subcommand)]
enum AccdoaCmd {
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum TtaCmd {
    Run {
        /// `oracle[:jitter]`, `constant[:x,y,z]` or `external-file:dir[,dir]`;
        /// repeat to ensemble several models.
        #[arg(long = "model", required = true)]
        models: Vec<String>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        /// Reference labels answered by the oracle.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_N_CLASSES)]
        n_classes: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum PipelineCmd {
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Invalid(format!("{}: {e}", p.display())))?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Features(FeaturesCmd::Extract { input, config, out }) => {
            let cfg: FeatureConfig = load_json(config.as_deref())?;
            let clip = read_foa_wav(&input)?;
            let features = FeatureExtractor::new(cfg.clone())?.extract(&clip)?;
            features.save(&out, &cfg)?;
        }
        Command::Rotate(a) => {
            let p = RotationPattern::from_id(a.pattern)?;
            write_foa_wav(&a.out, &p.apply_to_audio(&read_foa_wav(&a.input)?))?;
            if let (Some(lin), Some(lout)) = (&a.labels, &a.labels_out) {
                let ann = read_labels(lin, a.n_classes)?;
                let rotated = ClipAnnotation::new(
                    ann.events()
                        .iter()
                        .map(|e| seld_core::labels::EventLabel {
                            direction: p.apply_to_direction(e.direction),
                            ..*e
                        })
                        .collect(),
                    a.n_classes,
                )?;
                write_labels(&rotated, lout)?;
            }
        }
        Command::Augment(a) => {
            let mut cfg: AugmentConfig = load_json(a.config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let (clip, draw) = augment_clip(&read_foa_wav(&a.input)?, &cfg, &mut rng)?;
            log::info!("augment draw: {draw:?}");
            write_foa_wav(&a.out, &clip)?;
        }
        Command::Emulate(a) => {
            let text = std::fs::read_to_string(&a.spec)
                .map_err(|e| Error::Invalid(format!("{}: {e}", a.spec.display())))?;
            let mut spec: SceneSpec = serde_json::from_str(&text)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let library = SampleLibrary::load(&a.library)?;
            let srir: SrirSynthConfig = load_json(a.srir.as_deref())?;
            let (clip, ann) = mix_scene(&spec, &library, &srir)?;
            write_foa_wav(&with_ext(&a.out_prefix, ".wav"), &clip)?;
            write_labels(&ann, &with_ext(&a.out_prefix, ".csv"))?;
        }
        Command::Dataset(DatasetCmd::SampleEpoch { real, emulated, out }) => {
            let epoch = sample_epoch(
                &DatasetManifest::load(&real)?,
                &DatasetManifest::load(&emulated)?,
                seed.unwrap_or(0),
            )?;
            if let Some(w) = &epoch.warning {
                log::warn!("{w}");
                eprintln!("warning: {w}");
            }
            epoch.manifest.save(&out)?;
        }
        Command::Dataset(DatasetCmd::Kfold { manifest, k, mode, out_prefix }) => {
            let mode = match mode {
                ModeArg::Stratified => SplitMode::StratifiedByClass,
                ModeArg::Room => SplitMode::ByRoom,
            };
            let folds = kfold_split(&DatasetManifest::load(&manifest)?, k, mode, seed.unwrap_or(0))?;
            for (i, f) in folds.iter().enumerate() {
                f.save(&with_ext(&out_prefix, &format!(".fold{}.json", i + 1)))?;
            }
        }
        Command::Accdoa(AccdoaCmd::Decode { input, threshold, out }) => {
            write_events(&decode(&AccdoaSequence::load(&input)?, threshold), &out)?;
        }
        Command::Tta(TtaCmd::Run { models, input, config, features, labels, n_classes, out }) => {
            let tta: TtaConfig = load_json(config.as_deref())?;
            let fcfg: FeatureConfig = load_json(features.as_deref())?;
            let name = input.to_string_lossy().into_owned();
            let mut annotations = BTreeMap::new();
            if let Some(l) = &labels {
                annotations.insert(name.clone(), read_labels(l, n_classes)?);
            }
            let mut predictors = Vec::new();
            for m in &models {
                let spec = PredictorSpec::parse(m)?;
                if matches!(spec, PredictorSpec::Oracle(_)) && labels.is_none() {
                    return Err(Error::Config("the oracle model needs --labels".into()));
                }
                predictors.extend(spec.build(annotations.clone(), n_classes, seed.unwrap_or(0))?);
            }
            let refs: Vec<_> = predictors.iter().map(|p| p.as_ref()).collect();
            let clip = read_foa_wav(&input)?;
            let events = run_tta(&refs, &name, &clip, &FeatureExtractor::new(fcfg)?, &tta)?;
            write_events(&events, &out)?;
        }
        Command::Eval(a) => {
            let cfg: MetricConfig = load_json(a.config.as_deref())?;
            let preds = read_events(&a.pred, cfg.n_classes)?;
            let refs = read_labels(&a.reference, cfg.n_classes)?;
            let scores = evaluate(&preds, &refs, &cfg)?;
            match &a.out {
                Some(p) => write_json(p, &scores)?,
                None => println!("{}", serde_json::to_string_pretty(&scores)?),
            }
        }
        Command::Pipeline(PipelineCmd::Run { config, out }) => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = run_pipeline(&cfg)?;
            for f in &report.failures {
                eprintln!("failed: {}: {}", f.entry, f.error);
            }
            write_json(&out, &report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
