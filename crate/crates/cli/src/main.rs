use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use seqdiscover::config::Retrain;
use seqdiscover::engine::{read_results, replicate, report, report_csv, run, write_replication, write_run};
use seqdiscover::synth::{generate, SynthConfig};
use seqdiscover::RunConfig;
use seqdiscover_service::ServiceConfig;

const OUT_ENV: &str = "SEQDISCOVER_OUT";

#[derive(Parser)]
#[command(name = "seqdiscover", version, about = "Sequential discovery experiments with Bayesian property models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus, its embeddings and a matching config.
    Synth(SynthArgs),
    /// Play one experiment.
    Run(RunArgs),
    /// Play seeded replications and aggregate them.
    Replicate(RunArgs),
    /// Serve the interactive session API.
    Serve(ServeArgs),
    /// Compare finished runs, one row per policy.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; without it the small synthetic preset is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Output directory [default: $SEQDISCOVER_OUT or ./results, plus the run label].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Batch size.
    #[arg(long = "B")]
    budget: Option<usize>,
    /// Number of rounds.
    #[arg(long = "R")]
    rounds: Option<usize>,
    /// Uncertainty batch size.
    #[arg(long)]
    q: Option<usize>,
    /// Search batch size.
    #[arg(long)]
    h: Option<usize>,
    /// Simulated expert knowledge level in [0, 1].
    #[arg(long)]
    expert_p: Option<f64>,
    /// Hide scores from the simulated expert.
    #[arg(long)]
    no_meta: bool,
    #[arg(long, value_parser = ["warm", "fresh"])]
    retrain: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    properties: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 0.015)]
    target_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Save sessions here and restore them on start.
    #[arg(long)]
    snapshot_dir: Option<PathBuf>,
    /// Allowed browser origin [default: any].
    #[arg(long)]
    cors_origin: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run or replication directories.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => RunConfig::desk(),
        };
        if let Some(p) = &self.policy {
            c.policy.name = p.clone();
        }
        if let Some(s) = self.seed {
            c.run.seed = s;
        }
        if let Some(r) = self.reps {
            c.run.reps = Some(r);
        }
        if let Some(o) = &self.out {
            c.run.out = Some(o.clone());
        }
        if let Some(b) = self.budget {
            c.schedule.budget = b;
        }
        if let Some(r) = self.rounds {
            c.schedule.rounds = r;
        }
        if let Some(q) = self.q {
            c.schedule.q = q;
        }
        if let Some(h) = self.h {
            c.schedule.h = h;
        }
        if let Some(p) = self.expert_p {
            c.expert.p = p;
        }
        if self.no_meta {
            c.expert.meta_visible = false;
        }
        if let Some(r) = &self.retrain {
            c.schedule.retrain = r.parse::<Retrain>()?;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Directory-safe form of a run label, e.g. `hil(p=0.75,no-meta)` →
/// `hil_p=0.75_no-meta`.
fn slug(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "=.-".contains(c) { c } else { '_' })
        .collect();
    s.trim_matches('_').to_string()
}

fn output_dir(config: &RunConfig, tail: &[String]) -> PathBuf {
    if let Some(out) = &config.run.out {
        return out.clone();
    }
    let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("results"), PathBuf::from);
    tail.iter().fold(root, |p, part| p.join(part))
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let config = args.config()?;
    let (corpus, table) = config.load_inputs()?;
    let summary = run(&config, &corpus, table.as_ref())?;
    let dir = output_dir(&config, &[slug(&summary.label), format!("seed-{}", summary.seed)]);
    write_run(&dir, &summary)?;
    println!(
        "{} seed {}: {} hits in {} picks, hit rate {:.4}, recall {:.3} -> {}",
        summary.label,
        summary.seed,
        summary.hits,
        summary.budget * summary.rounds,
        summary.hit_rate,
        summary.final_recall,
        dir.display()
    );
    Ok(())
}

fn cmd_replicate(args: &RunArgs) -> Result<()> {
    let config = args.config()?;
    let reps = config.run.reps.unwrap_or(10);
    let (corpus, table) = config.load_inputs()?;
    let rep = replicate(&config, &corpus, table.as_ref(), reps, config.run.seed)?;
    let dir = output_dir(&config, &[slug(&rep.aggregate.label)]);
    write_replication(&dir, &rep)?;
    let a = &rep.aggregate;
    println!(
        "{}: {} runs, hit rate {:.4} ± {:.4}, recall {:.3} ± {:.3} -> {}",
        a.label,
        a.n_reps,
        a.hit_rate_mean,
        a.hit_rate_std,
        a.recall_mean,
        a.recall_std,
        dir.display()
    );
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let synth = SynthConfig {
        n: args.n,
        properties: args.properties,
        dim: args.dim,
        target_frac: args.target_frac,
        seed: args.seed,
        ..RunConfig::desk().corpus.synthetic.unwrap_or_default()
    };
    let s = generate(&synth)?;
    let dir = &args.out;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    s.corpus.write_csv(&dir.join("corpus.csv"))?;
    s.embeddings.write_csv(&dir.join("embeddings.csv"))?;
    let mut config = RunConfig::desk();
    config.corpus.synthetic = None;
    config.corpus.path = Some(PathBuf::from("corpus.csv"));
    config.corpus.embeddings = Some(PathBuf::from("embeddings.csv"));
    config.corpus.properties = synth.property_names();
    config.corpus.max_len = synth.max_len;
    write_text(&dir.join("config.toml"), &config.to_toml_string())?;
    println!(
        "{} molecules, {} targets -> {}",
        s.corpus.len(),
        s.corpus.target_count(),
        dir.display()
    );
    Ok(())
}

fn cmd_serve(args: &ServeArgs) -> Result<()> {
    let config = ServiceConfig {
        snapshot_dir: args.snapshot_dir.clone(),
        cors_origin: args.cors_origin.clone(),
    };
    let runtime = tokio::runtime::Runtime::new()?;
    eprintln!("listening on http://{}", args.addr);
    runtime.block_on(seqdiscover_service::serve(args.addr, config))?;
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let mut summaries = Vec::new();
    for dir in &args.dirs {
        summaries.extend(read_results(dir)?);
    }
    let csv = report_csv(&report(&summaries))?;
    match &args.out {
        Some(path) => write_text(path, std::str::from_utf8(&csv)?)?,
        None => print!("{}", String::from_utf8(csv)?),
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Run(a) => cmd_run(a),
        Command::Replicate(a) => cmd_replicate(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
