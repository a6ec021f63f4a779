//! Command-line entry points behind the `onuw` binary.
//!
//! Exit codes: 0 on success (and for `--help`), 1 on usage errors, 2 when a
//! command fails at run time. With `--json` every command prints one
//! machine-readable JSON document on stdout; diagnostics go to stderr.

use std::error::Error;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use serde::Serialize;
use serde_json::json;

use crate::agents::llm::{ChatBackend, HttpChatBackend, LlmEndpointConfig};
use crate::agents::AgentKind;
use crate::arena::{run_match, MatchReport, MatchSpec};
use crate::driver::{play_game, AgentSetup};
use crate::game::{GameConfig, PlayerId};
use crate::planner::{plan_tokens, MctsConfig};
use crate::rng::{derive_seed, rng_from_seed};
use crate::selfplay::{
    ingest_human_format, read_samples, run_selfplay, split_dataset, validate_dataset, write_dataset, AgentMix,
    SelfplayConfig, SplitSpec,
};
use crate::service::ServiceConfig;
use crate::tom::checkpoint::{load_checkpoint, save_checkpoint};
use crate::tom::train::{evaluate, train, TrainConfig};
use crate::tom::{dialogue_tokens, ModelConfig, ModelParams};

type CmdResult = Result<(), Box<dyn Error>>;

#[derive(Debug, Parser)]
#[command(name = "onuw", version, about = "One Night Ultimate Werewolf agents, training and tournaments")]
struct Cli {
    /// Print a JSON report on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads for parallel games and training (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Play a tournament and report per-agent metrics.
    Simulate(SimulateArgs),
    /// Generate a self-play dataset.
    Selfplay(SelfplayArgs),
    /// Train a belief model on a dataset.
    Train(TrainArgs),
    /// Measure planning time per move.
    PlanBench(PlanBenchArgs),
    /// Check a dataset file line by line.
    ValidateData(ValidateArgs),
    /// Split a dataset by game into train and validation files.
    SplitData(SplitArgs),
    /// Convert annotated human transcripts into dataset records.
    IngestHuman(IngestArgs),
    /// Host live games over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct LlmArgs {
    /// Base URL of an OpenAI-compatible chat endpoint.
    #[arg(long)]
    llm_endpoint: Option<String>,
    #[arg(long, default_value = "default")]
    llm_model: String,
    /// Environment variable holding the endpoint's API key.
    #[arg(long)]
    llm_api_key_env: Option<String>,
}

impl LlmArgs {
    fn backend(&self) -> Option<Arc<dyn ChatBackend>> {
        self.llm_endpoint.as_ref().map(|url| {
            let config = LlmEndpointConfig {
                model: self.llm_model.clone(),
                api_key_env: self.llm_api_key_env.clone(),
                ..LlmEndpointConfig::new(url.clone())
            };
            Arc::new(HttpChatBackend::new(config)) as Arc<dyn ChatBackend>
        })
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 100)]
    games: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "scripted")]
    village_agent: AgentKind,
    #[arg(long, default_value = "scripted")]
    werewolf_agent: AgentKind,
    /// Draw every seat's agent from the pool instead of by team.
    #[arg(long)]
    mixed: bool,
    /// Agent kinds for mixed mode (default: every kind that can be built).
    #[arg(long, value_delimiter = ',')]
    pool: Option<Vec<AgentKind>>,
    #[arg(long)]
    tom_checkpoint: Option<PathBuf>,
    /// MCTS iterations per MultiMind move.
    #[arg(long, default_value_t = 500)]
    iterations: usize,
    #[command(flatten)]
    llm: LlmArgs,
}

#[derive(Debug, Args)]
struct SelfplayArgs {
    #[arg(long, default_value_t = 1000)]
    games: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Agent kinds drawn per seat.
    #[arg(long, value_delimiter = ',', default_value = "scripted")]
    pool: Vec<AgentKind>,
    #[command(flatten)]
    llm: LlmArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Validation file; without it a tenth of the training games is held out.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 5e-5)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1)]
    patience: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.02)]
    init_std: f64,
    /// Drop the face and tone embeddings.
    #[arg(long)]
    no_emotions: bool,
    /// Checkpoint directory; also receives `curve.jsonl`.
    #[arg(long, default_value = "checkpoint")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlanBenchArgs {
    #[arg(long, default_value_t = 500)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Planning calls to time.
    #[arg(long, default_value_t = 10)]
    moves: usize,
    /// Trained model; an untrained default-size model is used without one.
    #[arg(long)]
    tom_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    path: PathBuf,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    path: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    train: f64,
    #[arg(long, default_value_t = 0.1)]
    val: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    path: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Expose the MultiMind belief matrix.
    #[arg(long)]
    debug: bool,
    #[arg(long)]
    tom_checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    iterations: usize,
    /// Append finished games to this file.
    #[arg(long)]
    game_log: Option<PathBuf>,
    #[command(flatten)]
    llm: LlmArgs,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("worker pool already set up: {e}");
        }
    }
    let json = cli.json;
    let result = match cli.command {
        Command::Simulate(a) => simulate(a, json),
        Command::Selfplay(a) => selfplay(a, json),
        Command::Train(a) => train_cmd(a, json),
        Command::PlanBench(a) => plan_bench(a, json),
        Command::ValidateData(a) => validate(a, json),
        Command::SplitData(a) => split(a, json),
        Command::IngestHuman(a) => ingest(a, json),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> CmdResult {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_model(path: &Path) -> Result<ModelParams, Box<dyn Error>> {
    load_checkpoint(path).map_err(|e| format!("loading checkpoint {}: {e}", path.display()).into())
}

fn simulate(a: SimulateArgs, json: bool) -> CmdResult {
    let mut spec = if a.mixed {
        let pool = a.pool.unwrap_or_else(|| {
            let mut p = vec![AgentKind::Scripted, AgentKind::ReActLlm];
            if a.tom_checkpoint.is_some() {
                p.insert(0, AgentKind::MultiMind);
            }
            p
        });
        MatchSpec::mixed(a.games, pool, a.seed)
    } else {
        MatchSpec::teams(a.games, a.village_agent, a.werewolf_agent, a.seed)
    };
    spec.tom_checkpoint = a.tom_checkpoint;
    spec.mcts = MctsConfig { iterations: a.iterations, ..MctsConfig::default() };
    spec.llm = a.llm.backend();
    let report = run_match(&spec)?;
    if json {
        print_json(&report)
    } else {
        print_match(&report);
        Ok(())
    }
}

fn print_match(r: &MatchReport) {
    println!("games: {}  village wins: {}  werewolf wins: {}", r.games, r.village_wins, r.werewolf_wins);
    println!("{:<10} {:>6} {:>6} {:>9} {:>9} {:>9}", "agent", "seats", "wins", "win rate", "village", "werewolf");
    let rate = |x: Option<f64>| x.map_or("-".to_owned(), |v| format!("{v:.3}"));
    for (kind, s) in &r.agents {
        println!(
            "{:<10} {:>6} {:>6} {:>9.3} {:>9} {:>9}   avg votes {:.3}",
            kind.canonical(),
            s.participations,
            s.wins,
            s.win_rate,
            rate(s.village_win_rate),
            rate(s.werewolf_win_rate),
            s.avg_votes
        );
    }
}

fn selfplay(a: SelfplayArgs, json: bool) -> CmdResult {
    let cfg = SelfplayConfig {
        mix: AgentMix { pool: a.pool, llm: a.llm.backend() },
        ..SelfplayConfig::scripted(a.games, a.seed)
    };
    let summary = run_selfplay(&cfg, &a.out)?;
    if json {
        print_json(&summary)
    } else {
        println!(
            "wrote {} games ({} skipped), {} statements, {} tokens, {} targets to {}",
            summary.games,
            summary.skipped,
            summary.statements,
            summary.tokens,
            summary.targets,
            a.out.display()
        );
        Ok(())
    }
}

fn train_cmd(a: TrainArgs, json: bool) -> CmdResult {
    let read = |p: &Path| read_samples(p).map_err(|e| format!("reading {}: {e}", p.display()));
    let mut train_set = read(&a.data)?;
    let val_set = match &a.val {
        Some(p) => read(p)?,
        None => {
            train_set.shuffle(&mut rng_from_seed(a.seed));
            let held = (train_set.len() / 10).max(1);
            if held >= train_set.len() {
                return Err("too few games to hold out a validation set; pass --val".into());
            }
            train_set.split_off(train_set.len() - held)
        }
    };
    let num_players = train_set
        .iter()
        .flat_map(|s| s.targets.first())
        .map(|t| t.belief.num_players())
        .next()
        .ok_or("training data has no targets")?;
    let config = ModelConfig {
        num_players,
        hidden: a.hidden,
        layers: a.layers,
        heads: a.heads,
        use_emotions: !a.no_emotions,
        ..ModelConfig::default()
    };
    let init = ModelParams::init(config, a.seed, a.init_std)?;
    let tc = TrainConfig {
        lr: a.lr,
        batch_size: a.batch,
        max_epochs: a.epochs,
        patience: a.patience,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let outcome = train(init, &train_set, &val_set, &tc, |s| {
        log::info!("epoch {} train {:.4} val {:.4}", s.epoch, s.train_loss, s.val_loss)
    })?;
    save_checkpoint(&outcome.params, &a.out)?;
    let mut curve = BufWriter::new(File::create(a.out.join("curve.jsonl"))?);
    for s in &outcome.history {
        serde_json::to_writer(&mut curve, s)?;
        writeln!(curve)?;
    }
    curve.flush()?;
    let eval = evaluate(&outcome.params, &val_set)?;
    if json {
        print_json(&json!({
            "checkpoint": a.out,
            "best_epoch": outcome.best_epoch,
            "best_val_loss": outcome.best_val_loss,
            "history": outcome.history,
            "eval": eval,
        }))
    } else {
        for s in &outcome.history {
            println!("epoch {:>3}  train {:.4}  val {:.4}", s.epoch, s.train_loss, s.val_loss);
        }
        println!(
            "best epoch {} (val {:.4}); held-out CE per target {:.4} vs ground-truth entropy {:.4}",
            outcome.best_epoch, outcome.best_val_loss, eval.ce_per_target, eval.gt_entropy_per_target
        );
        println!("saved to {}", a.out.display());
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct BenchReport {
    iterations: usize,
    moves: usize,
    model: &'static str,
    mean_secs: f64,
    min_secs: f64,
    max_secs: f64,
}

fn plan_bench(a: PlanBenchArgs, json: bool) -> CmdResult {
    let (model, label) = match &a.tom_checkpoint {
        Some(p) => (load_model(p)?, "checkpoint"),
        None => (ModelParams::init(ModelConfig::default(), a.seed, 0.02)?, "untrained"),
    };
    let n = GameConfig::default().num_players;
    if model.config().num_players != n {
        return Err(format!("plan-bench plays {n}-player games; the model is for {}", model.config().num_players).into());
    }
    let setup = AgentSetup::default();
    let mut times = Vec::with_capacity(a.moves);
    for m in 0..a.moves {
        let game_seed = derive_seed(a.seed, m as u64);
        let played = play_game(GameConfig::with_seed(game_seed), |s| setup.seat(&vec![AgentKind::Scripted; n], s), false)?;
        let cut = m % (played.state.dialogue.len() + 1);
        let history = dialogue_tokens(&played.state.dialogue[..cut]);
        let cfg = MctsConfig { iterations: a.iterations, rng_seed: game_seed, ..MctsConfig::default() };
        let start = Instant::now();
        plan_tokens(&history, &model, PlayerId(cut % n), &cfg)?;
        times.push(start.elapsed().as_secs_f64());
    }
    if times.is_empty() {
        return Err("--moves must be at least 1".into());
    }
    let report = BenchReport {
        iterations: a.iterations,
        moves: times.len(),
        model: label,
        mean_secs: times.iter().sum::<f64>() / times.len() as f64,
        min_secs: times.iter().copied().fold(f64::INFINITY, f64::min),
        max_secs: times.iter().copied().fold(0.0, f64::max),
    };
    if json {
        print_json(&report)
    } else {
        println!(
            "{} moves at {} iterations ({} model): mean {:.3} s per move, min {:.3} s, max {:.3} s",
            report.moves, report.iterations, report.model, report.mean_secs, report.min_secs, report.max_secs
        );
        Ok(())
    }
}

fn validate(a: ValidateArgs, json: bool) -> CmdResult {
    let report = validate_dataset(&a.path)?;
    if json {
        print_json(&report)?;
    } else {
        println!("{} lines, {} records, {} targets", report.lines, report.records, report.targets);
        for v in &report.violations {
            let game = v.game_id.map_or(String::new(), |g| format!(" (game {g})"));
            eprintln!("line {}{game}: {}", v.line, v.message);
        }
    }
    if report.is_clean() {
        Ok(())
    } else {
        Err(format!("{} violation(s) in {}", report.violations.len(), a.path.display()).into())
    }
}

fn split(a: SplitArgs, json: bool) -> CmdResult {
    let (train, val) = split_dataset(&a.path, &SplitSpec::new(a.train, a.val, a.seed))?;
    if json {
        print_json(&json!({ "train": train, "val": val }))
    } else {
        println!("{}\n{}", train.display(), val.display());
        Ok(())
    }
}

fn ingest(a: IngestArgs, json: bool) -> CmdResult {
    let result = ingest_human_format(&a.path)?;
    write_dataset(&a.out, &result.records)?;
    if json {
        print_json(&json!({
            "records": result.records.len(),
            "segments": result.segments,
            "unparsed": result.unparsed,
            "issues": result.issues,
        }))
    } else {
        println!(
            "{} games, {} segments ({} without parsed intentions) written to {}",
            result.records.len(),
            result.segments,
            result.unparsed,
            a.out.display()
        );
        for i in &result.issues {
            eprintln!("segment {}: {}", i.segment, i.message);
        }
        Ok(())
    }
}

fn serve(a: ServeArgs) -> CmdResult {
    let model = a.tom_checkpoint.as_deref().map(load_model).transpose()?.map(Arc::new);
    let config = ServiceConfig {
        debug: a.debug,
        model,
        mcts: MctsConfig { iterations: a.iterations, ..MctsConfig::default() },
        llm: a.llm.backend(),
        game_log: a.game_log,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(crate::service::serve(SocketAddr::new(a.host, a.port), config))?;
    Ok(())
}
