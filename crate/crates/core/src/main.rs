use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vggfire::data::{load_dataset, Layout};
use vggfire::train::{
    build_model, evaluate, export_curves, predict, split_dataset, train_with_progress, Overrides, RunConfig,
    TrainingHistory,
};
use vggfire::{Architecture, Error, Model, WidthMultiplier};

#[derive(Parser)]
#[command(
    name = "vggfire",
    version,
    about = "Train and evaluate VGG16 fire / no-fire image classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoints, history and curves.
    Train(RunArgs),
    /// Evaluate saved weights on a dataset.
    Eval(RunArgs),
    /// Classify image files.
    Predict {
        #[command(flatten)]
        run: RunArgs,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Write curves.csv from a saved history.json.
    ExportCurves {
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the architecture and parameter count.
    Inspect(RunArgs),
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[arg(long, value_parser = parse::<Layout>)]
    layout: Option<Layout>,
    #[arg(long, value_parser = parse::<Architecture>)]
    arch: Option<Architecture>,
    /// Channel multiplier for vgg-mini, e.g. 1/8.
    #[arg(long, value_parser = parse::<WidthMultiplier>)]
    width: Option<WidthMultiplier>,
    /// Square input side in pixels.
    #[arg(long)]
    input_size: Option<usize>,
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Starting or evaluated weights (.vggw).
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    freeze_features: bool,
    /// Re-initialize a final layer whose class count differs from the model.
    #[arg(long)]
    replace_head: bool,
    #[arg(long)]
    no_augment: bool,
    /// Fail on undecodable images instead of skipping them.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl RunArgs {
    fn resolve(&self) -> vggfire::Result<RunConfig> {
        let o = Overrides {
            data_root: self.data_root.clone(),
            layout: self.layout,
            arch: self.arch,
            width: self.width,
            input_size: self.input_size,
            num_classes: self.num_classes,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed: self.seed,
            test_fraction: self.test_fraction,
            val_fraction: self.val_fraction,
            weights: self.weights.clone(),
            freeze_features: self.freeze_features,
            replace_head: self.replace_head,
            no_augment: self.no_augment,
            strict: self.strict,
            out: self.out.clone(),
        };
        RunConfig::resolve(self.config.as_deref(), &o)
    }
}

fn trained_model(cfg: &RunConfig, what: &str) -> vggfire::Result<Model<f32>> {
    if cfg.output.weights.is_none() {
        return Err(Error::Config(format!("{what} needs --weights")));
    }
    build_model(cfg)
}

fn run(cli: Cli) -> vggfire::Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let print = |out: &mut std::io::StdoutLock, s: &str| {
        let _ = writeln!(out, "{s}");
        let _ = out.flush();
    };
    match cli.command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let run = train_with_progress(&cfg, &mut |line| print(&mut out, line))?;
            if let Some(ev) = &run.evaluation {
                print(&mut out, &ev.report.render_text());
            }
        }
        Command::Eval(args) => {
            let cfg = args.resolve()?;
            let model = trained_model(&cfg, "eval")?;
            let root = cfg
                .data
                .root
                .as_deref()
                .ok_or_else(|| Error::Config("eval needs --data-root".into()))?;
            let full = load_dataset(root, cfg.data.layout)?;
            let ds = if cfg.data.test_fraction > 0.0 {
                split_dataset(&cfg, full)?.test.expect("test split")
            } else {
                full
            };
            let ev = evaluate(&model, &ds, cfg.train.batch_size, cfg.data.strict)?;
            if let Some(dir) = &cfg.output.dir {
                ev.write(dir)?;
            }
            print(&mut out, &ev.report.render_text());
        }
        Command::Predict { run, images } => {
            let cfg = run.resolve()?;
            let model = trained_model(&cfg, "predict")?;
            for path in images {
                let p = predict(&model, &path)?;
                print(&mut out, &p.line(&path));
            }
        }
        Command::ExportCurves { history, out: dir } => {
            let h = TrainingHistory::load(&history)?;
            let path = export_curves(&h, &dir)?;
            print(&mut out, &path.display().to_string());
        }
        Command::Inspect(args) => {
            let cfg = args.resolve()?;
            let model = match &cfg.output.weights {
                Some(_) => build_model(&cfg)?,
                None => Model::build(&cfg.model)?,
            };
            print(&mut out, &inspect_text(&model, cfg.output.weights.as_deref()));
        }
    }
    Ok(())
}

fn inspect_text(model: &Model<f32>, weights: Option<&Path>) -> String {
    let c = model.layer_counts();
    let cfg = model.config();
    let mut s = model.summary();
    s.push_str(&format!(
        "\narchitecture: {}\ninput: 3x{}x{}\nclasses: {}\n",
        cfg.architecture, cfg.input_size.0, cfg.input_size.1, cfg.num_classes
    ));
    if let Some(w) = weights {
        s.push_str(&format!("weights: {}\n", w.display()));
    }
    s.push_str(&format!(
        "layers: conv={} relu={} maxpool={} avgpool={} linear={} dropout={}\nparameters: {}",
        c.conv,
        c.relu,
        c.maxpool,
        c.avgpool,
        c.linear,
        c.dropout,
        model.param_count()
    ));
    s
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
