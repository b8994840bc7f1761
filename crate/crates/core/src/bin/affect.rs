use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};

use mobile_affect::bench::{bench_model, DEFAULT_RUNS};
use mobile_affect::data::{self, BBox, Task};
use mobile_affect::evaluate::evaluate;
use mobile_affect::recommender::{GenreMap, ProviderConfig};
use mobile_affect::service::{self, Predictor, ServiceConfig};
use mobile_affect::training::{self, class_weights, AdamConfig, TrainConfig};
use mobile_affect::{model_io, ArchId, Head, Model, SeededRng};

#[derive(Parser)]
#[command(name = "affect", version, about = "Train, evaluate and serve compact facial-affect models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a manifest and write its weight file and log.
    Train(TrainArgs),
    /// Score a weight file on a manifest.
    Eval(EvalArgs),
    /// Predict emotion, valence and arousal for one image.
    Predict(PredictArgs),
    /// Time single-image inference.
    Bench(BenchArgs),
    /// Describe a weight file or an architecture.
    Inspect(InspectArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value = "arch2-vggnet")]
    arch: ArchId,
    #[arg(long, default_value = "emotion")]
    head: Head,
    /// Training manifest (CSV).
    #[arg(long)]
    manifest: PathBuf,
    /// Optional validation manifest.
    #[arg(long)]
    val_manifest: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    /// Start from these weights. An emotion model trained for a va run has
    /// its head replaced (transfer learning).
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    no_augment: bool,
    /// Use unit class weights instead of inverse-frequency weights.
    #[arg(long)]
    unweighted: bool,
    /// Output weight file; the log goes next to it with a `.jsonl` extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PredictArgs {
    /// Emotion-head weight file.
    #[arg(long)]
    model: PathBuf,
    /// Valence/arousal-head weight file.
    #[arg(long)]
    va_model: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Face box as x,y,w,h in pixels.
    #[arg(long, value_parser = parse_bbox)]
    bbox: Option<BBox>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RUNS)]
    runs: usize,
    /// Image to run on; a mid-grey frame is used when omitted.
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct InspectArgs {
    /// Weight file to describe.
    #[arg(long, conflicts_with = "arch")]
    model: Option<PathBuf>,
    /// Describe a freshly built architecture instead of a file.
    #[arg(long)]
    arch: Option<ArchId>,
    #[arg(long, default_value = "emotion")]
    head: Head,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    va_model: Option<PathBuf>,
    #[arg(long, default_value = "ratings.jsonl")]
    ratings: PathBuf,
    /// Static front-end directory served under /app when present.
    #[arg(long, default_value = "app")]
    static_dir: PathBuf,
    #[arg(long, env = "PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "0.0.0.0")]
    host: std::net::IpAddr,
}

fn parse_bbox(s: &str) -> std::result::Result<BBox, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [x, y, w, h] = parts.as_slice() else {
        return Err("expected x,y,w,h".into());
    };
    let bad = |e: std::num::ParseIntError| e.to_string();
    Ok(BBox { x: x.parse().map_err(bad)?, y: y.parse().map_err(bad)?, w: w.parse().map_err(bad)?, h: h.parse().map_err(bad)? })
}

fn task_for(head: Head) -> Task {
    match head {
        Head::Emotion => Task::Classification,
        Head::ValenceArousal => Task::Regression,
    }
}

fn load_examples(path: &Path, head: Head) -> Result<Vec<training::Example>> {
    let manifest = data::load_manifest(path, task_for(head)).with_context(|| format!("reading {}", path.display()))?;
    for w in &manifest.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(manifest.load_examples()?)
}

fn train(args: TrainArgs) -> Result<()> {
    let mut rng = SeededRng::new(args.seed);
    let mut model = match &args.init {
        Some(path) => {
            let base = model_io::load(path).with_context(|| format!("loading {}", path.display()))?;
            ensure!(base.graph().name == args.arch.as_str(), "--init is {}, not {}", base.graph().name, args.arch);
            if base.head() == args.head { base } else { base.swap_head(args.head, &mut rng)? }
        }
        None => Model::build(args.arch, args.head, &mut rng)?,
    };
    let mut cfg = TrainConfig::for_head(args.head);
    cfg.seed = args.seed;
    cfg.batch_size = args.batch.unwrap_or_else(|| args.arch.default_batch_size());
    cfg.epochs = args.epochs.unwrap_or(cfg.epochs);
    cfg.adam = AdamConfig::with_alpha(args.lr);
    if args.no_augment {
        cfg.augmentation = None;
    }

    let log_path = args.out.with_extension("jsonl");
    let log = if cfg.epochs == 0 {
        training::TrainLog::default()
    } else {
        let train_set = load_examples(&args.manifest, args.head)?;
        let val_set = match &args.val_manifest {
            Some(p) => load_examples(p, args.head)?,
            None => Vec::new(),
        };
        if args.head == Head::Emotion && !args.unweighted {
            let mut counts = [0usize; 8];
            for ex in &train_set {
                if let training::Target::Emotion(c) = ex.target {
                    counts[c] += 1;
                }
            }
            match class_weights(&counts) {
                Ok(w) => cfg.class_weights = Some(w),
                Err(e) => eprintln!("warning: {e}; using unit class weights"),
            }
        }
        eprintln!("training {} ({}) on {} images for {} epochs", args.arch, args.head, train_set.len(), cfg.epochs);
        training::train_with_callback(&mut model, &train_set, &val_set, &cfg, |rec| {
            let val = rec.val_loss.map(|v| format!("  val_loss {v:.4}")).unwrap_or_default();
            let metrics: String = rec.metrics.iter().map(|(k, v)| format!("  {k} {v:.4}")).collect();
            eprintln!("epoch {:>3}  train_loss {:.4}{val}{metrics}", rec.epoch, rec.train_loss);
        })?
    };
    let bytes = model_io::save(&model, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let mut out = BufWriter::new(File::create(&log_path).with_context(|| format!("writing {}", log_path.display()))?);
    log.write_jsonl(&mut out)?;
    out.flush()?;
    println!("wrote {} ({bytes} bytes) and {}", args.out.display(), log_path.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let model = model_io::load(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let manifest = data::load_manifest(&args.manifest, task_for(model.head()))?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    let size = model.graph().input_shape[0];
    let examples = manifest.load_examples_sized(size)?;
    let report = evaluate(&model, &examples, args.batch)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let predictor = Predictor::new(model_io::load(&args.model)?, model_io::load(&args.va_model)?)?;
    let image = data::open_image(&args.image)?;
    let (pred, latency_ms) = predictor.predict_image(&image, args.bbox).map_err(|e| anyhow::anyhow!(e.message))?;
    let response = service::PredictResponse {
        emotion: pred.emotion,
        emotion_probs: pred.emotion_probs,
        valence: pred.valence,
        arousal: pred.arousal,
        models: predictor.model_ids(),
        latency_ms,
    };
    println!("{}", serde_json::to_string_pretty(&response)?);
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let model = model_io::load(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let size = model.graph().input_shape[0];
    let input = match &args.image {
        Some(p) => data::preprocess_to(&data::open_image(p)?, None, size)?,
        None => mobile_affect::Tensor::full(&[size, size, 3], 0.5f32)?,
    };
    let report = bench_model(&model, &input, args.runs)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("{report}");
    }
    Ok(())
}

fn inspect(args: InspectArgs) -> Result<()> {
    match (args.model, args.arch) {
        (Some(path), _) => {
            let info = model_io::model_info(&path)?;
            if args.json {
                println!("{}", serde_json::to_string_pretty(&info)?);
            } else {
                print!("{}", info.table());
            }
        }
        (None, Some(arch)) => {
            let graph = mobile_affect::ModelGraph::build(arch, args.head);
            let report = graph.param_report()?;
            if args.json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("{arch} ({} head)", args.head);
                for l in &report.layers {
                    let shape = l.output_shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
                    println!("{:<6} {:<16} {:<16} {:>10}", l.name, l.kind, shape, l.total());
                }
                println!("total params: {} ({} trainable)", report.total_params, report.trainable_params);
                println!("file size: {} bytes ({:.2} MB)", report.serialized_bytes_f32, report.serialized_bytes_f32 as f64 / 1e6);
            }
        }
        (None, None) => bail!("give --model or --arch"),
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let mut config = ServiceConfig::new(&args.ratings).with_genres(GenreMap::from_env()?).with_static_dir(&args.static_dir);
    match (&args.model, &args.va_model) {
        (Some(e), Some(v)) => config = config.with_predictor(Predictor::new(model_io::load(e)?, model_io::load(v)?)?),
        (None, None) => eprintln!("warning: no models given; /v1/predict will answer 503"),
        _ => bail!("--model and --va-model must be given together"),
    }
    match ProviderConfig::from_env() {
        Ok(p) => config = config.with_provider(p),
        Err(e) => eprintln!("warning: {e}; /v1/recommend will answer 503"),
    }
    let addr = SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Runtime::new()?;
    eprintln!("listening on http://{addr}");
    runtime.block_on(service::serve(config, addr))?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Bench(a) => bench(a),
        Command::Inspect(a) => inspect(a),
        Command::Serve(a) => serve(a),
    }
}
