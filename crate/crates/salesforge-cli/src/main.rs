//! Command-line surface for the salesforge toolkit: corpus synthesis,
//! simulation, evaluation, statistics, persona management, and an
//! interactive chat REPL.
//!
//! Exit codes: 0 on success, 1 when individual items were quarantined but
//! the run completed, 2 on fatal configuration or IO errors (including
//! usage errors).

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use salesforge::agent::{agent_step, AgentConfig, AgentMode, AgentState};
use salesforge::backend::{AuditLog, Backend, HttpConfig, RetryPolicy};
use salesforge::core::io::{read_dialogues, read_with_mapping, FieldMapping};
use salesforge::core::{Dialogue, Intent};
use salesforge::evalkit::{
    aggregate_report, collect_predictions, corpus_stats, derive_gold_labels, dialogue_metrics,
    judge_dialogue, mean_judge_scores, read_gold_turns, turn_level_eval, write_judge_raws,
    JudgeConfig, JudgeRawRecord,
};
use salesforge::genpipe::{run_pipeline, write_outputs, GenConfig};
use salesforge::simarena::{
    build_persona_bank, load_persona_bank, run_arena, save_persona_bank, ArenaConfig, SimConfig,
};

#[derive(Parser)]
#[command(name = "salesforge", version, about = "Sales dialogue synthesis, simulation, and evaluation")]
struct Cli {
    /// JSON config file (backend, paths, arena, retries).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override; all randomness derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Swap in the deterministic mock backend globally (JSONL script).
    #[arg(long, global = true, value_name = "SCRIPT")]
    mock: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize annotated sales dialogues from chit-chat seeds.
    Generate {
        /// Seed dialogues, native JSONL or adapter-mapped.
        #[arg(long)]
        seeds: PathBuf,
        /// Output corpus JSONL.
        #[arg(long)]
        out: PathBuf,
        /// Quarantined seeds JSONL (default: <out>.rejects.jsonl).
        #[arg(long)]
        rejects: Option<PathBuf>,
        /// Stage audit JSONL (default: <out>.audit.jsonl).
        #[arg(long)]
        audit: Option<PathBuf>,
        /// Field-mapping JSON for foreign seed formats.
        #[arg(long)]
        mapping: Option<PathBuf>,
    },
    /// Run the agent-vs-simulator arena.
    Simulate {
        /// Persona bank JSONL ({id, persona_text} per line).
        #[arg(long)]
        personas: PathBuf,
        /// Output transcripts JSONL.
        #[arg(long)]
        out: PathBuf,
        /// Run manifest JSON (default: <out>.manifest.json).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Separate mock script for the agent side.
        #[arg(long)]
        agent_mock: Option<PathBuf>,
        /// Separate mock script for the simulator side.
        #[arg(long)]
        user_mock: Option<PathBuf>,
        /// Use the untuned baseline agent prompt instead of CoT.
        #[arg(long)]
        baseline: bool,
        /// Strip *stage directions* from simulator output.
        #[arg(long)]
        filter_stage_directions: bool,
        /// Personas to use (default from config arena section).
        #[arg(long)]
        count: Option<u32>,
        #[arg(long)]
        repeats: Option<u32>,
        #[arg(long)]
        max_turns: Option<u32>,
    },
    /// Turn-level intent/policy accuracy against gold labels.
    EvalTurn {
        /// Annotated transcripts JSONL (predictions).
        #[arg(long)]
        pred: PathBuf,
        /// Gold turns JSONL.
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Derive gold labels from this boundary-annotated corpus instead.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Directory for report.json / report.txt.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Dialogue-level metrics plus judge scoring.
    EvalDialogue {
        /// Simulated transcripts JSONL.
        #[arg(long = "in")]
        input: PathBuf,
        /// Directory for report.json / report.txt.
        #[arg(long)]
        out_dir: PathBuf,
        /// Archive raw judge replies here (default: <out_dir>/judge_raw.jsonl).
        #[arg(long)]
        judge_raw: Option<PathBuf>,
        /// Skip judge scoring; emit only count-based metrics.
        #[arg(long)]
        no_judge: bool,
    },
    /// Corpus turn statistics: chit-chat / transition / total averages.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        /// Field-mapping JSON for foreign corpus formats.
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// Emit JSON instead of the plain-text table.
        #[arg(long)]
        json: bool,
    },
    /// Generate (or load) the persona bank.
    Personas {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        n: usize,
        /// Regenerate even if the bank file already exists.
        #[arg(long)]
        force: bool,
    },
    /// Chat with the sales agent interactively, playing the customer.
    Chat {
        /// Do not print the agent's parsed thoughts.
        #[arg(long)]
        hide_thoughts: bool,
        /// Use the untuned baseline agent prompt instead of CoT.
        #[arg(long)]
        baseline: bool,
    },
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default)]
struct RunConfig {
    backend: BackendSection,
    paths: PathsSection,
    arena: ArenaSection,
    retries: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
struct BackendSection {
    base_url: String,
    model_name: String,
    user_model_name: String,
    judge_model_name: String,
    temperature: f64,
    judge_temperature: f64,
    max_tokens: u32,
    concurrency: usize,
    timeout_secs: u64,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            base_url: "https://api.openai.com/v1".into(),
            model_name: "gpt-3.5-turbo".into(),
            user_model_name: "llama-2-7b-chat".into(),
            judge_model_name: "gpt-4".into(),
            temperature: 0.7,
            judge_temperature: 0.0,
            max_tokens: 1024,
            concurrency: 4,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default)]
struct PathsSection {
    corpus: Option<PathBuf>,
    personas: Option<PathBuf>,
    audit: Option<PathBuf>,
    reports: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
struct ArenaSection {
    personas: u32,
    repeats: u32,
    max_turns: u32,
    seed: u64,
}

impl Default for ArenaSection {
    fn default() -> Self {
        ArenaSection { personas: 50, repeats: 5, max_turns: 30, seed: 0 }
    }
}

impl RunConfig {
    fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig { retries: 3, ..RunConfig::default() });
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if cfg.retries == 0 {
            cfg.retries = 3;
        }
        Ok(cfg)
    }
}

struct Env {
    cfg: RunConfig,
    mock: Option<PathBuf>,
    seed: Option<u64>,
}

impl Env {
    /// Build a backend: the global mock when given, otherwise HTTP from the
    /// config. The credential comes from SALESFORGE_API_KEY.
    fn backend(&self, mock_override: Option<&Path>) -> Result<Backend> {
        let script = mock_override.or(self.mock.as_deref());
        let backend = match script {
            Some(path) => Backend::mock(path)
                .with_context(|| format!("loading mock script {}", path.display()))?,
            None => Backend::http(HttpConfig {
                base_url: self.cfg.backend.base_url.clone(),
                api_key: None,
                timeout_secs: self.cfg.backend.timeout_secs,
                concurrency: self.cfg.backend.concurrency,
                retry: RetryPolicy::default(),
            })
            .context("configuring HTTP backend")?,
        };
        Ok(match &self.cfg.paths.audit {
            Some(path) => backend.with_audit(
                AuditLog::open(path)
                    .with_context(|| format!("opening audit log {}", path.display()))?,
            ),
            None => backend,
        })
    }

    fn arena_config(&self) -> ArenaConfig {
        ArenaConfig {
            personas: self.cfg.arena.personas,
            repeats: self.cfg.arena.repeats,
            max_turns: self.cfg.arena.max_turns,
            seed: self.seed.unwrap_or(self.cfg.arena.seed),
        }
    }

    fn gen_config(&self) -> GenConfig {
        GenConfig {
            model_name: self.cfg.backend.model_name.clone(),
            temperature: self.cfg.backend.temperature,
            max_tokens: self.cfg.backend.max_tokens,
            retries: self.cfg.retries,
            concurrency: self.cfg.backend.concurrency,
        }
    }

    fn agent_config(&self, baseline: bool) -> AgentConfig {
        AgentConfig {
            mode: if baseline { AgentMode::Baseline } else { AgentMode::Cot },
            model_name: self.cfg.backend.model_name.clone(),
            temperature: self.cfg.backend.temperature,
            max_tokens: self.cfg.backend.max_tokens,
            intents: Intent::TRAINABLE.to_vec(),
            reask_on_parse_failure: false,
        }
    }

    fn sim_config(&self, filter: bool) -> SimConfig {
        SimConfig {
            model_name: self.cfg.backend.user_model_name.clone(),
            temperature: self.cfg.backend.temperature,
            max_tokens: self.cfg.backend.max_tokens,
            retries: self.cfg.retries,
            filter_stage_directions: filter,
            concurrency: self.cfg.backend.concurrency,
        }
    }

    fn judge_config(&self) -> JudgeConfig {
        JudgeConfig {
            model_name: self.cfg.backend.judge_model_name.clone(),
            temperature: self.cfg.backend.judge_temperature,
            max_tokens: self.cfg.backend.max_tokens,
            retries: self.cfg.retries,
        }
    }
}

fn load_corpus(path: &Path, mapping: Option<&Path>) -> Result<(Vec<Dialogue>, usize)> {
    match mapping {
        Some(mapping_path) => {
            let mapping = FieldMapping::load(mapping_path)
                .with_context(|| format!("loading mapping {}", mapping_path.display()))?;
            let (dialogues, rejects) = read_with_mapping(path, &mapping)
                .with_context(|| format!("reading {}", path.display()))?;
            for reject in &rejects {
                eprintln!("warning: {}:{}: {}", path.display(), reject.line, reject.error);
            }
            Ok((dialogues, rejects.len()))
        }
        None => Ok((
            read_dialogues(path).with_context(|| format!("reading {}", path.display()))?,
            0,
        )),
    }
}

fn cmd_generate(
    env: &Env,
    seeds: &Path,
    out: &Path,
    rejects: Option<PathBuf>,
    audit: Option<PathBuf>,
    mapping: Option<PathBuf>,
) -> Result<u8> {
    let (seed_dialogues, adapter_rejects) = load_corpus(seeds, mapping.as_deref())?;
    let backend = env.backend(None)?;
    let run = run_pipeline(&seed_dialogues, &backend, &env.gen_config())?;

    let rejects_path = rejects.unwrap_or_else(|| out.with_extension("rejects.jsonl"));
    let audit_path = audit.unwrap_or_else(|| out.with_extension("audit.jsonl"));
    write_outputs(&run, out, &rejects_path, &audit_path)?;

    println!(
        "generated {} dialogue(s), quarantined {}, stage records {}",
        run.dialogues.len(),
        run.rejects.len(),
        run.records.len()
    );
    println!("corpus:  {}", out.display());
    println!("rejects: {}", rejects_path.display());
    println!("audit:   {}", audit_path.display());
    Ok(if run.rejects.is_empty() && adapter_rejects == 0 { 0 } else { 1 })
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    env: &Env,
    personas: &Path,
    out: &Path,
    manifest: Option<PathBuf>,
    agent_mock: Option<PathBuf>,
    user_mock: Option<PathBuf>,
    baseline: bool,
    filter: bool,
    count: Option<u32>,
    repeats: Option<u32>,
    max_turns: Option<u32>,
) -> Result<u8> {
    let bank = load_persona_bank(personas)
        .with_context(|| format!("loading persona bank {}", personas.display()))?;
    let mut arena_cfg = env.arena_config();
    if let Some(count) = count {
        arena_cfg.personas = count;
    }
    if let Some(repeats) = repeats {
        arena_cfg.repeats = repeats;
    }
    if let Some(max_turns) = max_turns {
        arena_cfg.max_turns = max_turns;
    }

    let outcome = if agent_mock.is_some() || user_mock.is_some() {
        let agent_backend = env.backend(agent_mock.as_deref())?;
        let user_backend = env.backend(user_mock.as_deref())?;
        run_arena(
            &arena_cfg,
            &bank,
            &agent_backend,
            &user_backend,
            &env.agent_config(baseline),
            &env.sim_config(filter),
        )?
    } else {
        // One shared backend serves both sides; under --mock the script
        // interleaves simulator and agent replies per turn.
        let backend = env.backend(None)?;
        run_arena(
            &arena_cfg,
            &bank,
            &backend,
            &backend,
            &env.agent_config(baseline),
            &env.sim_config(filter),
        )?
    };

    salesforge::agent::write_transcripts(out, &outcome.transcripts)?;
    let manifest_path = manifest.unwrap_or_else(|| out.with_extension("manifest.json"));
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&outcome.manifest)? + "\n")
        .with_context(|| format!("writing manifest {}", manifest_path.display()))?;

    println!(
        "simulated {} dialogue(s) ({} expected, {} quarantined, {} truncated)",
        outcome.manifest.completed,
        outcome.manifest.expected,
        outcome.manifest.quarantined,
        outcome.manifest.truncated
    );
    println!("transcripts: {}", out.display());
    println!("manifest:    {}", manifest_path.display());
    for reject in &outcome.rejects {
        eprintln!(
            "warning: quarantined {} repeat {}: {}",
            reject.persona_id, reject.repeat_index, reject.error
        );
    }
    Ok(if outcome.rejects.is_empty() { 0 } else { 1 })
}

fn cmd_eval_turn(
    pred: &Path,
    gold: Option<PathBuf>,
    corpus: Option<PathBuf>,
    out_dir: &Path,
) -> Result<u8> {
    let transcripts = salesforge::agent::read_transcripts(pred)
        .with_context(|| format!("reading predictions {}", pred.display()))?;
    let predictions = collect_predictions(&transcripts)?;

    let gold_turns = match (gold, corpus) {
        (Some(path), _) => read_gold_turns(&path)?,
        (None, Some(path)) => {
            let dialogues = read_dialogues(&path)?;
            let mut all = Vec::new();
            for d in &dialogues {
                all.extend(derive_gold_labels(d)?);
            }
            all
        }
        (None, None) => bail!("eval-turn needs --gold or --corpus"),
    };

    let turn = turn_level_eval(&predictions, &gold_turns)?;
    let report = aggregate_report(Some(&turn), None, None);
    std::fs::create_dir_all(out_dir)?;
    report.write(&out_dir.join("report.json"), &out_dir.join("report.txt"))?;
    print!("{}", report.to_text());
    if turn.missing_predictions > 0 {
        eprintln!("warning: {} gold turn(s) had no usable prediction", turn.missing_predictions);
    }
    Ok(0)
}

fn cmd_eval_dialogue(
    env: &Env,
    input: &Path,
    out_dir: &Path,
    judge_raw: Option<PathBuf>,
    no_judge: bool,
) -> Result<u8> {
    let transcripts = salesforge::agent::read_transcripts(input)
        .with_context(|| format!("reading transcripts {}", input.display()))?;
    let metrics = dialogue_metrics(&transcripts)?;
    std::fs::create_dir_all(out_dir)?;

    let mut quarantined = 0usize;
    let judge_means = if no_judge {
        None
    } else {
        let backend = env.backend(None)?;
        let judge_cfg = env.judge_config();
        let mut scores = Vec::new();
        let mut raws: Vec<JudgeRawRecord> = Vec::new();
        for t in &transcripts {
            match judge_dialogue(&t.dialogue, &backend, &judge_cfg) {
                Ok(outcome) => {
                    for (i, raw) in outcome.raw_replies.iter().enumerate() {
                        raws.push(JudgeRawRecord {
                            dialogue_id: t.dialogue.id.clone(),
                            attempt: i as u32 + 1,
                            raw: raw.clone(),
                        });
                    }
                    scores.push(outcome.scores);
                }
                Err(e) => {
                    quarantined += 1;
                    eprintln!("warning: judge failed on '{}': {e}", t.dialogue.id);
                }
            }
        }
        let raw_path = judge_raw.unwrap_or_else(|| out_dir.join("judge_raw.jsonl"));
        write_judge_raws(&raw_path, &raws)?;
        mean_judge_scores(&scores)
    };

    let report = aggregate_report(None, Some(&metrics), judge_means.as_ref());
    report.write(&out_dir.join("report.json"), &out_dir.join("report.txt"))?;
    print!("{}", report.to_text());
    Ok(if quarantined == 0 { 0 } else { 1 })
}

fn cmd_stats(input: &Path, mapping: Option<PathBuf>, json: bool) -> Result<u8> {
    let (dialogues, adapter_rejects) = load_corpus(input, mapping.as_deref())?;
    let (stats, skipped) = corpus_stats(&dialogues)?;

    if json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
    } else {
        println!("{:<12}  {:>9}  {:>6}  {:>6}", "Avg. #Turns", "Chit-chat", "Trans.", "Total");
        println!(
            "{:<12}  {:>9.2}  {:>6.2}  {:>6.2}",
            "", stats.avg_chitchat_turns, stats.avg_transition_turns, stats.avg_total_turns
        );
        println!();
        println!("Dialogues: {}", stats.dialogue_count);
        if !stats.intent_histogram.is_empty() {
            println!("Intent histogram:");
            for (intent, count) in &stats.intent_histogram {
                println!("  {:<24} {count}", intent.canonical_name());
            }
        }
    }
    for id in &skipped {
        eprintln!("warning: skipped unsegmentable dialogue '{id}'");
    }
    Ok(if skipped.is_empty() && adapter_rejects == 0 { 0 } else { 1 })
}

fn cmd_personas(env: &Env, out: &Path, n: usize, force: bool) -> Result<u8> {
    if out.exists() && !force {
        let bank = load_persona_bank(out)?;
        println!(
            "persona bank {} already holds {} persona(s); use --force to regenerate",
            out.display(),
            bank.len()
        );
        return Ok(0);
    }
    let backend = env.backend(None)?;
    let seed = env.seed.unwrap_or(env.cfg.arena.seed);
    let bank = build_persona_bank(n, &backend, seed, &env.sim_config(false))?;
    save_persona_bank(out, &bank)?;
    println!("wrote {} persona(s) to {}", bank.len(), out.display());
    Ok(0)
}

const DIM: &str = "\x1b[2m";
const RESET: &str = "\x1b[0m";

fn cmd_chat(env: &Env, hide_thoughts: bool, baseline: bool) -> Result<u8> {
    let backend = env.backend(None)?;
    let agent_cfg = AgentConfig { reask_on_parse_failure: true, ..env.agent_config(baseline) };
    let mut state = AgentState::new();

    println!("You are chatting with the sales agent. Type your message; Ctrl-D to quit.");
    let stdin = std::io::stdin();
    let mut line = String::new();
    loop {
        print!("you> ");
        std::io::stdout().flush()?;
        line.clear();
        if stdin.lock().read_line(&mut line)? == 0 {
            println!();
            break;
        }
        let message = line.trim();
        if message.is_empty() {
            continue;
        }
        match agent_step(&state, message, &backend, &agent_cfg) {
            Ok((step, next)) => {
                if !hide_thoughts && !step.thought_text.is_empty() {
                    println!("{DIM}[thought: {}]{RESET}", step.thought_text);
                    println!("{DIM}[policy:  {}]{RESET}", step.policy.kind().name());
                }
                println!("agent> {}", step.response_text);
                state = next;
                if state.handover {
                    println!(
                        "-- handover: the agent passed the conversation to a task-oriented system --"
                    );
                    break;
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                return Ok(1);
            }
        }
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let env = Env { cfg, mock: cli.mock, seed: cli.seed };

    match cli.command {
        Command::Generate { seeds, out, rejects, audit, mapping } => {
            cmd_generate(&env, &seeds, &out, rejects, audit, mapping)
        }
        Command::Simulate {
            personas,
            out,
            manifest,
            agent_mock,
            user_mock,
            baseline,
            filter_stage_directions,
            count,
            repeats,
            max_turns,
        } => cmd_simulate(
            &env,
            &personas,
            &out,
            manifest,
            agent_mock,
            user_mock,
            baseline,
            filter_stage_directions,
            count,
            repeats,
            max_turns,
        ),
        Command::EvalTurn { pred, gold, corpus, out_dir } => {
            cmd_eval_turn(&pred, gold, corpus, &out_dir)
        }
        Command::EvalDialogue { input, out_dir, judge_raw, no_judge } => {
            cmd_eval_dialogue(&env, &input, &out_dir, judge_raw, no_judge)
        }
        Command::Stats { input, mapping, json } => cmd_stats(&input, mapping, json),
        Command::Personas { out, n, force } => cmd_personas(&env, &out, n, force),
        Command::Chat { hide_thoughts, baseline } => cmd_chat(&env, hide_thoughts, baseline),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
