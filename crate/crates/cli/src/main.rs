//! `scalex`: extraction, bias analyses and reports over H-space vectors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scalex_core::error::Result;

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "scalex", version, about = "H-space bias audits for latent diffusion models")]
struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<String>,
    /// lcm or ldm.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Use seeds 0..N.
    #[arg(long, global = true)]
    seed_count: Option<u64>,
    #[arg(long, global = true)]
    capture_layer: Option<String>,
    /// Output root (each command writes into `<out>/<command>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Capture and store H-space vectors for the configured prompt sets.
    Extract,
    /// Female-minus-male default deltas per profession.
    Defaults {
        #[arg(long = "variant")]
        variants: Vec<String>,
    },
    /// Rank descriptors by relative distance to the target concepts.
    Rank {
        #[arg(long = "normalization")]
        normalizations: Vec<String>,
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        summarizer: Option<String>,
    },
    /// Embed, cluster and optionally summarize stored vectors.
    Atlas {
        #[arg(long)]
        summarizer: Option<String>,
    },
    /// Generate an image steered by a combination of stored vectors.
    Condition {
        #[arg(long)]
        prompt: Option<String>,
        /// Direction term such as `+key`, `-key`, `cluster:2*0.5`; repeatable.
        #[arg(long = "term", allow_hyphen_values = true)]
        terms: Vec<String>,
        #[arg(long, allow_hyphen_values = true)]
        scale: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Inject into a standard multi-step sampler (lcm offsets, ldm generation).
        #[arg(long)]
        transfer: bool,
    },
    /// Correlate deltas with zero-shot classification of generated images.
    Validate {
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        protocol: Option<String>,
        #[arg(long)]
        deltas: Option<PathBuf>,
        /// env or replay:<path>.
        #[arg(long)]
        classifier: Option<String>,
        /// Render the neutral profession images before classifying.
        #[arg(long)]
        generate: bool,
    },
    /// Render tables and plots from finished analyses.
    Report {
        #[arg(long = "analysis")]
        analyses: Vec<String>,
    },
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = &cli.store {
        cfg.store = s.clone();
    }
    if let Some(m) = &cli.model {
        cfg.model = m.clone();
    }
    if let Some(m) = &cli.mode {
        cfg.mode = m.parse()?;
    }
    if let Some(n) = cli.seed_count {
        cfg.seeds = (0..n).collect();
    }
    if let Some(l) = &cli.capture_layer {
        cfg.capture_layer = Some(l.clone());
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    match &cli.command {
        Command::Extract => {}
        Command::Atlas { summarizer } => {
            if let Some(s) = summarizer {
                cfg.atlas.summarizer = s.clone();
            }
        }
        Command::Defaults { variants } => {
            if !variants.is_empty() {
                cfg.defaults.variants = variants.clone();
            }
        }
        Command::Rank {
            normalizations,
            target,
            summarizer,
        } => {
            if !normalizations.is_empty() {
                cfg.rank.normalizations = normalizations.clone();
            }
            if target.is_some() {
                cfg.rank.target = target.clone();
            }
            if let Some(s) = summarizer {
                cfg.rank.summarizer = s.clone();
            }
        }
        Command::Condition {
            prompt,
            terms,
            scale,
            seed,
            transfer,
        } => {
            if let Some(p) = prompt {
                cfg.condition.prompt = p.clone();
            }
            if !terms.is_empty() {
                cfg.condition.terms = terms.clone();
            }
            if let Some(s) = scale {
                cfg.condition.scale = *s;
            }
            if let Some(s) = seed {
                cfg.condition.seed = *s;
            }
            if *transfer {
                cfg.condition.mode = scalex_core::conditioning::ConditioningMode::LdmTransfer;
            }
        }
        Command::Validate {
            images,
            protocol,
            deltas,
            classifier,
            generate,
        } => {
            if images.is_some() {
                cfg.validate.images = images.clone();
            }
            if let Some(p) = protocol {
                cfg.validate.protocol = p.clone();
            }
            if deltas.is_some() {
                cfg.validate.deltas = deltas.clone();
            }
            if let Some(c) = classifier {
                cfg.validate.classifier = c.clone();
            }
            cfg.validate.generate |= *generate;
        }
        Command::Report { analyses } => {
            if !analyses.is_empty() {
                cfg.report.analyses = analyses.clone();
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    match cli.command {
        Command::Extract => commands::extract::run(&cfg),
        Command::Defaults { .. } => commands::defaults::run(&cfg),
        Command::Rank { .. } => commands::rank::run(&cfg),
        Command::Atlas { .. } => commands::atlas::run(&cfg),
        Command::Condition { .. } => commands::condition::run(&cfg),
        Command::Validate { .. } => commands::validate::run(&cfg),
        Command::Report { .. } => commands::report::run(&cfg),
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("Usage", e.to_string().trim(), 2),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string(), 1),
    }
}
