use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use plan_harvest::backend::{
    CompletionParams, LiveConfig, ReqwestTransport, RetryPolicy, Transport,
};
use plan_harvest::cli::{cmd_prompt, cmd_stats, BackendMode, CliError, Harness, RunConfig};
use plan_harvest::prompt::default_sentence_cap;
use plan_harvest::scorer::ScoreOptions;

#[derive(Parser)]
#[command(
    name = "plan-harvest",
    version,
    about = "Few-shot plan extraction and scoring harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus statistics (labeled texts, action name/argument word rates).
    Stats(CommonArgs),
    /// Print the prompt built for one text, with its shots and token estimate.
    Prompt {
        #[command(flatten)]
        common: CommonArgs,
        /// Id of the text to prompt for.
        #[arg(long)]
        test: String,
    },
    /// Build prompts, query the backend and parse one plan per text.
    Extract(CommonArgs),
    /// Score extraction records against the corpus gold plans.
    Score {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory of extraction records; defaults to OUT/extractions.
        #[arg(long)]
        extractions: Option<PathBuf>,
    },
    /// Extract and score for several shot counts.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        shots_list: Vec<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Live,
    Replay,
    Record,
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Dataset tag (WHS, CT, WHG or custom); must match the records.
    #[arg(long)]
    dataset: String,
    #[arg(long, default_value_t = 2)]
    shots: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sentences kept per text; defaults to 10 for CT/WHG and none otherwise.
    #[arg(long, conflicts_with = "no_cap")]
    cap: Option<usize>,
    #[arg(long)]
    no_cap: bool,
    #[arg(long, value_enum, default_value = "replay")]
    mode: ModeArg,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,

    #[arg(long)]
    engine: Option<String>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    freq_penalty: Option<f64>,
    #[arg(long)]
    pres_penalty: Option<f64>,
    #[arg(long)]
    best_of: Option<u32>,

    #[arg(long, default_value = "https://api.openai.com")]
    base_url: String,
    #[arg(long, default_value = "/v1/completions")]
    endpoint: String,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 5)]
    max_attempts: u32,
    /// Leave unmatched optional actions out of the truth counts.
    #[arg(long)]
    optional_lenient: bool,
}

impl CommonArgs {
    fn into_config(self) -> RunConfig {
        let defaults = CompletionParams::default();
        let params = CompletionParams {
            engine: self.engine.unwrap_or(defaults.engine),
            max_tokens: self.max_tokens.unwrap_or(defaults.max_tokens),
            temperature: self.temperature.unwrap_or(defaults.temperature),
            top_p: self.top_p.unwrap_or(defaults.top_p),
            frequency_penalty: self.freq_penalty.unwrap_or(defaults.frequency_penalty),
            presence_penalty: self.pres_penalty.unwrap_or(defaults.presence_penalty),
            best_of: self.best_of.unwrap_or(defaults.best_of),
        };
        let sentence_cap = if self.no_cap {
            None
        } else {
            self.cap.or_else(|| default_sentence_cap(&self.dataset))
        };
        RunConfig {
            corpus: self.corpus,
            dataset: self.dataset,
            shots: self.shots,
            seed: self.seed,
            sentence_cap,
            mode: match self.mode {
                ModeArg::Live => BackendMode::Live,
                ModeArg::Replay => BackendMode::Replay,
                ModeArg::Record => BackendMode::Record,
            },
            cache: self.cache,
            params,
            out_dir: self.out,
            live: LiveConfig {
                base_url: self.base_url,
                endpoint_path: self.endpoint,
                timeout: Duration::from_secs(self.timeout_secs),
                max_in_flight: self.max_in_flight,
                retry: RetryPolicy {
                    max_attempts: self.max_attempts,
                    ..RetryPolicy::default()
                },
            },
            score: ScoreOptions {
                optional_lenient: self.optional_lenient,
            },
        }
    }
}

fn harness(config: RunConfig) -> Result<Harness, CliError> {
    let transport: Arc<dyn Transport> = Arc::new(
        ReqwestTransport::new().map_err(|e| CliError::Config(format!("HTTP client: {e}")))?,
    );
    Harness::new(config, transport)
}

/// Returns the number of texts or rows that failed.
fn run(command: Command) -> Result<usize, CliError> {
    match command {
        Command::Stats(common) => {
            let stats = cmd_stats(&common.into_config())?;
            println!("labeled_texts\t{}", stats.labeled_texts);
            println!("total_words\t{}", stats.total_words);
            println!("action_name_rate\t{:.2}", stats.action_name_rate);
            println!("action_argument_rate\t{:.2}", stats.action_argument_rate);
            Ok(0)
        }
        Command::Prompt { common, test } => {
            let bundle = cmd_prompt(&common.into_config(), &test)?;
            eprintln!(
                "shots: {}; estimated tokens: {}{}",
                bundle.example_ids.join(", "),
                bundle.token_estimate,
                if bundle.truncation_applied {
                    "; sentences capped"
                } else {
                    ""
                }
            );
            print!("{}", bundle.rendered);
            Ok(0)
        }
        Command::Extract(common) => {
            let h = harness(common.into_config())?;
            let summary = h.extract()?;
            println!(
                "wrote {} extraction record(s) to {} ({} failed)",
                summary.written,
                summary.dir.display(),
                summary.failed.len()
            );
            for id in &summary.failed {
                eprintln!("failed: {id}");
            }
            Ok(summary.failed.len())
        }
        Command::Score {
            common,
            extractions,
        } => {
            let h = Harness::offline(common.into_config())?;
            let dir = extractions.unwrap_or_else(|| h.extraction_dir());
            let summary = h.score(&dir)?;
            let out = &h.config().out_dir;
            print!(
                "{}",
                std::fs::read_to_string(out.join("report.txt")).unwrap_or_default()
            );
            Ok(summary.failed.len())
        }
        Command::Sweep { common, shots_list } => {
            let h = harness(common.into_config())?;
            let rows = h.sweep(&shots_list)?;
            print!("{}", plan_harvest::cli::render_sweep_tsv(&rows));
            Ok(rows
                .iter()
                .filter(|r| r.status != plan_harvest::cli::SweepStatus::Ok)
                .count())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
