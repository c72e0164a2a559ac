use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use conceptsynth::pipeline::{self, CaptionMode, PipelineConfig, PipelineError, StageOutcome};

#[derive(Parser, Debug)]
#[command(name = "conceptsynth", version, about = "Concept-labelled attribute dataset synthesis")]
struct Cli {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; stage seeds are derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Only warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter the source corpus against the taxonomy.
    Distill {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Train the attribute VAE on the distilled records.
    TrainVae {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Draw attribute vectors from the trained VAE.
    Sample(SampleArgs),
    /// Caption sampled records (templates or an OpenAI-compatible endpoint).
    Caption(CaptionArgs),
    /// Compute metrics for the current output directory.
    Evaluate {
        #[arg(long)]
        run: Option<String>,
    },
    /// TCAV scores of concepts against classifier classes.
    Tcav(TcavArgs),
    /// Merge metric JSON files into one comparison table.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Finite-difference check of the analytic gradients.
    Gradcheck,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, conflicts_with = "top_k")]
    threshold: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Attribute forced on (repeatable).
    #[arg(long = "force-on")]
    force_on: Vec<String>,
    /// Attribute forced off (repeatable).
    #[arg(long = "force-off")]
    force_off: Vec<String>,
    #[arg(long)]
    min_attrs: Option<usize>,
    #[arg(long)]
    max_attrs: Option<usize>,
}

#[derive(Args, Debug)]
struct CaptionArgs {
    /// Base URL of the completions endpoint; switches to endpoint mode.
    #[arg(long, conflicts_with = "template_only")]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Never contact an endpoint.
    #[arg(long)]
    template_only: bool,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Args, Debug)]
struct TcavArgs {
    /// Probe classifier checkpoint (with --concepts and --classes).
    #[arg(long, requires_all = ["concepts", "classes"])]
    model: Option<PathBuf>,
    #[arg(long)]
    layer: Option<String>,
    #[arg(long)]
    concepts: Option<PathBuf>,
    #[arg(long)]
    classes: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    random_cavs: Option<usize>,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.paths.out_dir = d.clone();
    }
    match &cli.command {
        Some(Command::Distill { corpus }) => {
            if corpus.is_some() {
                cfg.paths.corpus = corpus.clone();
            }
        }
        Some(Command::TrainVae { epochs, beta }) => {
            if let Some(e) = epochs {
                cfg.vae.epochs = *e;
            }
            if let Some(b) = beta {
                cfg.vae.beta = *b;
            }
        }
        Some(Command::Sample(a)) => {
            let s = &mut cfg.sample;
            if let Some(n) = a.n {
                s.n = n;
            }
            if let Some(t) = a.threshold {
                s.threshold = t;
                s.top_k = None;
            }
            if a.top_k.is_some() {
                s.top_k = a.top_k;
            }
            if !a.force_on.is_empty() {
                s.force_on = a.force_on.clone();
            }
            if !a.force_off.is_empty() {
                s.force_off = a.force_off.clone();
            }
            if let Some(m) = a.min_attrs {
                s.min_attrs = m;
            }
            if let Some(m) = a.max_attrs {
                s.max_attrs = m;
            }
        }
        Some(Command::Caption(a)) => {
            let c = &mut cfg.caption;
            if let Some(url) = &a.endpoint {
                c.mode = CaptionMode::Endpoint;
                c.endpoint.base_url = url.clone();
            }
            if a.template_only {
                c.mode = CaptionMode::Template;
            }
            if let Some(m) = &a.model {
                c.endpoint.model = m.clone();
            }
            if let Some(n) = a.concurrency {
                c.concurrency = n;
            }
            if let Some(t) = a.temperature {
                c.endpoint.temperature = t;
            }
        }
        Some(Command::Evaluate { run }) => {
            if let Some(r) = run {
                cfg.evaluate.run = r.clone();
            }
        }
        Some(Command::Tcav(a)) => {
            let t = &mut cfg.tcav;
            if a.model.is_some() {
                t.model = a.model.clone();
                t.concepts = a.concepts.clone();
                t.classes = a.classes.clone();
            }
            if a.layer.is_some() {
                t.layer = a.layer.clone();
            }
            if let Some(x) = a.alpha {
                t.alpha = x;
            }
            if let Some(n) = a.random_cavs {
                t.random_cavs = n;
            }
        }
        Some(Command::Report { .. }) | Some(Command::Gradcheck) | None => {}
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Option<StageOutcome>, PipelineError> {
    let cfg = load_config(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml_string());
        return Ok(None);
    }
    let outcome = match &cli.command {
        None => return Err(PipelineError::Config("no subcommand given; see --help".into())),
        Some(Command::Distill { .. }) => pipeline::cmd_distill(&cfg)?,
        Some(Command::TrainVae { .. }) => pipeline::cmd_train_vae(&cfg)?,
        Some(Command::Sample(_)) => pipeline::cmd_sample(&cfg)?,
        Some(Command::Caption(_)) => pipeline::cmd_caption(&cfg)?,
        Some(Command::Evaluate { .. }) => pipeline::cmd_evaluate(&cfg)?,
        Some(Command::Tcav(_)) => pipeline::cmd_tcav(&cfg)?,
        Some(Command::Report { files }) => pipeline::cmd_report(&cfg, files)?,
        Some(Command::Gradcheck) => pipeline::cmd_gradcheck(&cfg)?,
    };
    Ok(Some(outcome))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(outcome)) => {
            if !cli.quiet {
                for line in &outcome.summary {
                    println!("{line}");
                }
                println!("manifest {}", outcome.manifest_hash);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
