mod config;
mod error;
mod http;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use checklist_core::harness::{
    compare_reports, estimate_space, replay, run, sweep_rule_budget, synth_gen, write_synth, Backend, NoiseSpec,
    RemoteBackend, RunOutput, RunReport, SynthSpec,
};
use checklist_core::pool::PipelineConfig;
use checklist_core::proposal::{PromptSet, RetryPolicy, Transcript, TranscriptEntry};

use config::{apply_overrides, load_dataset, FileConfig};
use error::CliError;
use http::HttpChatClient;

#[derive(Parser)]
#[command(name = "checklist", version, about = "Learn unit-weighted N-of-M checklists from tabular outcome data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validated run; writes the report, transcript and checklist cards.
    Run(RunArgs),
    /// One run per rule budget M.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated rule budgets.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
        budgets: Vec<usize>,
    },
    /// Generate a synthetic cohort with a planted checklist.
    Synth(SynthArgs),
    /// Size of the enumerable rule space.
    Space {
        #[arg(long, default_value_t = 50)]
        p: u64,
        #[arg(long, default_value_t = 20)]
        t: u64,
        #[arg(long, default_value_t = 500_000)]
        rows: u64,
        #[arg(long, default_value_t = 0.1)]
        seconds_per_rule: f64,
    },
    /// Re-run a recorded transcript without calling any proposer.
    Replay {
        transcript: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Paired fold-level comparison; the first report is the reference.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the comparison JSON here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablation {
    SinglePass,
    NoJaccard,
    NoDiversity,
    LlmOnly,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory (overrides the file).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ablation: Option<Ablation>,
    /// Pipeline override as key=value, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0.15)]
    prevalence: f64,
    /// Target AUROC of the planted checklist.
    #[arg(long, default_value_t = 0.95, conflicts_with = "noise_scale")]
    auroc: f64,
    /// Fixed logistic noise scale instead of a target AUROC.
    #[arg(long)]
    noise_scale: Option<f64>,
    #[arg(long, default_value_t = 3)]
    k: u32,
    #[arg(long, default_value_t = 0.02)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

struct Prepared {
    file: FileConfig,
    pipeline: PipelineConfig,
    out: PathBuf,
}

fn prepare(args: &RunArgs) -> Result<Prepared, CliError> {
    let file = FileConfig::load(&args.config)?;
    let mut pipeline = apply_overrides(&file.pipeline, &args.sets)?;
    if let Some(s) = args.seed {
        pipeline.seed = s;
    }
    pipeline = match args.ablation {
        None => pipeline,
        Some(Ablation::SinglePass) => pipeline.single_pass(),
        Some(Ablation::NoJaccard) => pipeline.without_jaccard(),
        Some(Ablation::NoDiversity) => pipeline.without_diversity(),
        Some(Ablation::LlmOnly) => pipeline.llm_only(),
    };
    pipeline.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let out = args.out.clone().or_else(|| file.output.clone()).unwrap_or_else(|| PathBuf::from("checklist-out"));
    Ok(Prepared { file, pipeline, out })
}

fn backend(file: &FileConfig, pipeline: &PipelineConfig) -> Result<Backend, CliError> {
    let remote_needed = pipeline.proposer == checklist_core::pool::ProposerKind::Remote
        || pipeline.plausibility == checklist_core::pool::PlausibilityMode::Remote
        || pipeline.assembly == checklist_core::pool::AssemblyMode::Agent
        || pipeline.refine == checklist_core::pool::RefineMode::Agent;
    if !remote_needed {
        return Ok(Backend::Offline);
    }
    let r = file.remote.as_ref().ok_or_else(|| CliError::Config("remote components need a [remote] section".into()))?;
    if r.url.is_empty() || r.model.is_empty() {
        return Err(CliError::Config("[remote] needs `url` and `model`".into()));
    }
    let token = std::env::var(&r.token_env).ok().filter(|t| !t.is_empty());
    if token.is_none() {
        eprintln!("note: {} is not set; requests go out without a bearer token", r.token_env);
    }
    let client = HttpChatClient::new(&r.url, &r.model, token, Duration::from_secs(r.timeout_secs)).map_err(CliError::Config)?;
    let prompts = match &r.prompts_dir {
        Some(dir) => PromptSet::from_dir(dir).map_err(|e| CliError::Config(e.to_string()))?,
        None => PromptSet::default(),
    };
    Ok(Backend::Remote(RemoteBackend {
        client: Arc::new(client),
        prompts: Arc::new(prompts),
        retry: RetryPolicy { max_attempts: r.max_attempts.max(1), base_delay_ms: r.base_delay_ms, max_delay_ms: r.max_delay_ms },
        max_tokens: r.max_tokens,
        system: r.system.clone(),
    }))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_outputs(out: &RunOutput, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    write(&dir.join("report.json"), &out.report.to_json())?;
    write(&dir.join("transcript.jsonl"), &out.transcript.to_jsonl())?;
    let mut progress = String::new();
    let mut cards = String::new();
    for f in &out.report.folds {
        let line = serde_json::json!({
            "fold": f.fold,
            "proposed": f.proposed,
            "accepted": f.accepted,
            "pool_size": f.pool_size,
            "val_auroc": f.val_auroc,
            "test_auroc": f.test.as_ref().map(|t| t.auroc),
            "k": f.k,
            "error": f.error,
        });
        progress.push_str(&line.to_string());
        progress.push('\n');
        if let Some(card) = &f.card {
            cards.push_str(&format!("<!-- fold {} -->\n{card}\n", f.fold));
        }
    }
    write(&dir.join("progress.jsonl"), &progress)?;
    write(&dir.join("checklists.md"), &cards)
}

fn summarize(report: &RunReport) {
    for f in &report.folds {
        match (&f.test, &f.error) {
            (Some(t), _) => println!(
                "fold {}: pool {:>3}  rules {}  K {}  test AUROC {:.4}  sens {:.3}  spec {:.3}",
                f.fold, f.pool_size, t.max_score, t.threshold, t.auroc, t.sensitivity, t.specificity
            ),
            (None, e) => println!("fold {}: no checklist ({})", f.fold, e.as_deref().unwrap_or("unknown")),
        }
    }
    if let Some(a) = report.aggregate.auroc {
        println!("mean test AUROC {:.4} ± {:.4} over {} folds", a.mean, a.sd, report.aggregate.completed_folds);
    }
}

/// A remote run where a fold ended without a checklist after transport failures.
fn transport_exhausted(out: &RunOutput) -> Option<String> {
    out.report.folds.iter().filter(|f| f.test.is_none()).find_map(|f| {
        out.transcript.entries.iter().find_map(|e| match e {
            TranscriptEntry::Error { fold, message, .. } if *fold == f.fold && message.starts_with("transport failure") => {
                Some(format!("fold {}: {message}", f.fold))
            }
            _ => None,
        })
    })
}

fn finish_run(out: RunOutput, dir: &Path, remote: bool) -> Result<(), CliError> {
    write_outputs(&out, dir)?;
    summarize(&out.report);
    println!("wrote {}", dir.display());
    match remote.then(|| transport_exhausted(&out)).flatten() {
        Some(m) => Err(CliError::Transport(m)),
        None => Ok(()),
    }
}

fn dataset(file: &FileConfig) -> Result<checklist_core::data::Dataset, CliError> {
    let d = file.data.as_ref().ok_or_else(|| CliError::Config("configuration has no [data] section".into()))?;
    load_dataset(d)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let p = prepare(&args)?;
            let backend = backend(&p.file, &p.pipeline)?;
            let data = dataset(&p.file)?;
            let out = run(&data, &p.pipeline, &p.file.task(), &backend)?;
            finish_run(out, &p.out, matches!(backend, Backend::Remote(_)))
        }
        Command::Replay { transcript, run: args } => {
            let p = prepare(&args)?;
            let text = std::fs::read_to_string(&transcript).map_err(|e| CliError::Data(format!("{}: {e}", transcript.display())))?;
            let t = Transcript::from_jsonl(&text).map_err(CliError::Data)?;
            let data = dataset(&p.file)?;
            let out = replay(&data, &p.pipeline, &p.file.task(), &t)?;
            finish_run(out, &p.out, false)
        }
        Command::Sweep { run: args, budgets } => {
            let p = prepare(&args)?;
            let backend = backend(&p.file, &p.pipeline)?;
            let data = dataset(&p.file)?;
            let sweep = sweep_rule_budget(&data, &p.pipeline, &p.file.task(), &backend, &budgets)?;
            std::fs::create_dir_all(&p.out).map_err(|e| CliError::Data(format!("{}: {e}", p.out.display())))?;
            write(&p.out.join("sweep.csv"), &sweep.to_csv())?;
            write(&p.out.join("sweep.json"), &serde_json::to_string_pretty(&sweep).expect("sweep serializes"))?;
            for r in &sweep.rows {
                match r.auroc {
                    Some(a) => println!("M={}: mean test AUROC {:.4} ± {:.4}", r.max_rules, a.mean, a.sd),
                    None => println!("M={}: no completed folds", r.max_rules),
                }
            }
            Ok(())
        }
        Command::Synth(a) => {
            let noise = match a.noise_scale {
                Some(scale) => NoiseSpec::Fixed { scale },
                None => NoiseSpec::Target { auroc: a.auroc },
            };
            let spec = SynthSpec { n: a.n, prevalence: a.prevalence, noise, k: a.k, tolerance: a.tolerance, seed: a.seed };
            let out = synth_gen(&spec)?;
            let files = write_synth(&out, &a.out)?;
            let m = &out.manifest;
            println!("{} rows, {} positive, planted checklist AUROC {:.4} (noise {:.4})", m.n, m.positives, m.achieved_auroc, m.noise_scale);
            for t in &m.planted_text {
                println!("  {t}");
            }
            println!("wrote {}, {}, {}", files.table.display(), files.schema.display(), files.manifest.display());
            Ok(())
        }
        Command::Space { p, t, rows, seconds_per_rule } => {
            let r = estimate_space(p, t, rows, seconds_per_rule).map_err(|e| CliError::Config(e.to_string()))?;
            let c = &r.cardinality;
            println!("primitive rules      {}", c.primitive);
            println!("depth-1 compositions {:e}", c.compositional as f64);
            println!("rule universe        {:e}", c.universe_order as f64);
            if let Some(b) = r.universe_matrix_bytes {
                println!("coverage matrix      {:e} bytes ({:.0} PB)", b as f64, b as f64 / 1e15);
            }
            println!("time wall            {:e} s ({:.0} years)", r.time_wall_seconds, r.time_wall_years);
            println!("{}", serde_json::to_string(&r).expect("report serializes"));
            Ok(())
        }
        Command::Compare { reports, seed, out } => {
            let mut names = Vec::new();
            let mut loaded = Vec::new();
            for path in &reports {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                let r: RunReport = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                names.push(path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
                loaded.push(r);
            }
            let cmp = compare_reports(&names, &loaded, seed).map_err(|e| CliError::Data(e.to_string()))?;
            let text = serde_json::to_string_pretty(&cmp).expect("comparison serializes");
            match out {
                Some(p) => write(&p, &text),
                None => {
                    println!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
