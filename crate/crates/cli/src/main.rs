use std::path::PathBuf;

use clap::{Parser, Subcommand};

use cbu_cli::{config, ops, CliError, Overrides};

/// Oracle-free validation runs for candidate math solutions: utility
/// scoring on neighborhood questions, judge baselines, ranking metrics,
/// and the accompanying statistical analyses.
#[derive(Parser)]
#[command(name = "cbu", version, about, max_term_width = 100)]
struct Cli {
    /// Plain-text key = value config file; flags override file values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Dataset directory (problems.jsonl + candidates.jsonl), or the
    /// questions file for `curate`.
    #[arg(long, global = true, value_name = "PATH")]
    dataset: Option<PathBuf>,

    /// Backend definition JSON (mock script or HTTP endpoint).
    #[arg(long, global = true, value_name = "FILE")]
    backend: Option<PathBuf>,

    /// Rollouts per neighborhood question, judge calls per candidate, or
    /// bare attempts per question, depending on the subcommand.
    #[arg(long = "T", global = true, value_name = "N")]
    t: Option<u32>,

    /// Judge scheme: ten-point, proofgrader, or uq.
    #[arg(long, global = true, value_name = "SCHEME")]
    scheme: Option<String>,

    /// Run seed; drives sampling, bootstrap resampling, and fold shuffling.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,

    /// Run directory for artifacts (default: out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Enforce the 9-candidate 4-correct/5-wrong pool composition.
    #[arg(long = "strict-pool", global = true)]
    strict_pool: bool,

    /// Tie resolution for ranking metrics (expected).
    #[arg(long = "tie-mode", global = true, value_name = "MODE")]
    tie_mode: Option<String>,

    /// Bootstrap subsampling: replacement or subsample.
    #[arg(long = "bootstrap-mode", global = true, value_name = "MODE")]
    bootstrap_mode: Option<String>,

    /// Probe evaluation: in-sample or kfold:K.
    #[arg(long = "probe-protocol", global = true, value_name = "PROTOCOL")]
    probe_protocol: Option<String>,

    /// Whether the human solution joins the ranking metrics: exclude or
    /// include.
    #[arg(long = "human-policy", global = true, value_name = "POLICY")]
    human_policy: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and normalize a dataset into the run directory.
    Ingest,
    /// Estimate bare-attempt solvability (avg@k) for every problem.
    Rollout,
    /// Score every candidate by its induced accuracy on neighborhood
    /// questions.
    ScoreCbu,
    /// Score every candidate with an LLM judge under --scheme.
    ScoreJudge,
    /// Compute Acc@1, Recall@5, AUC, HumanWin, and MeanWin with
    /// variant-group averaging.
    Metrics,
    /// Subsampling error curves against the full rollout budget.
    Bootstrap,
    /// Fit logistic-regression correctness probes on validator scores.
    Regress,
    /// Filter candidate questions into a curated neighborhood set.
    Curate,
    /// Tag reasoning failures in wrong solutions via the audit prompt.
    Audit,
    /// Assemble the final report from the run directory's artifacts.
    Report,
}

async fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        config: cli.config,
        dataset: cli.dataset,
        backend: cli.backend,
        t: cli.t,
        scheme: cli.scheme,
        seed: cli.seed,
        out: cli.out,
        strict_pool: cli.strict_pool,
        tie_mode: cli.tie_mode,
        bootstrap_mode: cli.bootstrap_mode,
        probe_protocol: cli.probe_protocol,
        human_policy: cli.human_policy,
    };
    let config = config::resolve(&overrides)?;

    match cli.command {
        Command::Ingest => {
            let report = ops::ingest(&config)?;
            println!(
                "ingested {} problems / {} candidates in {} groups",
                report.problems, report.candidates, report.groups
            );
        }
        Command::Rollout => {
            let summary = ops::rollout_solvability(&config).await?;
            println!(
                "solvability for {} problems ({} gateway calls, {} failed rollouts)",
                summary.problems, summary.gateway_calls, summary.failed_rollouts
            );
        }
        Command::ScoreCbu => {
            let summary = ops::score_cbu(&config).await?;
            println!(
                "utility-scored {} candidates over {} problems ({} gateway calls)",
                summary.candidates_scored, summary.problems, summary.gateway_calls
            );
        }
        Command::ScoreJudge => {
            let summary = ops::score_judge(&config).await?;
            println!(
                "judge-scored {} candidates over {} problems ({} gateway calls)",
                summary.candidates_scored, summary.problems, summary.gateway_calls
            );
        }
        Command::Metrics => {
            let report = ops::metrics(&config)?;
            println!(
                "metrics over {} questions in {} groups -> report.json",
                report.questions.len(),
                report.groups.len()
            );
        }
        Command::Bootstrap => {
            let doc = ops::bootstrap(&config)?;
            for (method, curve) in &doc.curves {
                let summary: Vec<String> = curve
                    .points
                    .iter()
                    .map(|p| format!("n={}: {:.4}", p.n, p.mean_normalized_error))
                    .collect();
                println!("{method}: {}", summary.join(", "));
            }
        }
        Command::Regress => {
            let doc = ops::regress(&config)?;
            for row in &doc.rows {
                println!(
                    "({}) in-sample {:.4}{}",
                    row.features.join(" + "),
                    row.in_sample_accuracy,
                    row.kfold_accuracy
                        .map(|a| format!(", {}-fold {:.4}", row.kfold_k.unwrap(), a))
                        .unwrap_or_default()
                );
            }
        }
        Command::Curate => {
            let report = ops::curate(&config).await?;
            println!(
                "curation: {} -> {} (solvability) -> {} (band) -> {} (agreement) -> {} (floor)",
                report.input,
                report.after_solvability,
                report.after_band,
                report.after_agreement,
                report.after_floor
            );
        }
        Command::Audit => {
            let records = ops::audit(&config).await?;
            let tagged = records
                .iter()
                .filter(|r| r.categories.as_ref().is_some_and(|c| !c.is_empty()))
                .count();
            println!("audited {} pairs, {} with tagged failures", records.len(), tagged);
        }
        Command::Report => {
            ops::report(&config)?;
            println!("report assembled -> report.json");
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(error) = run(cli).await {
        eprintln!("error: {error}");
        std::process::exit(error.exit_code());
    }
}
