//! Command implementations. Every command is a pure function of
//! (config, master seed): outputs embed the seed in a metadata header
//! and reruns produce byte-identical files.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use amalab_core::analyzer::{analyze_sample, AnalyzerConfig};
use amalab_core::eval::{build_corpus, compare_agents, sweep_action_budget, Corpus};
use amalab_core::graph::CallGraph;
use amalab_core::seeds;

use crate::config::{ConfigError, ExperimentConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// Process exit code: 2 for configuration problems, 3 for runtime
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }

    fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(CliError::io(format!("creating {}", parent.display())))?;
        }
    }
    fs::write(path, contents).map_err(CliError::io(format!("writing {}", path.display())))
}

/// CSV files open with a `# seed=<master seed>` metadata line.
fn csv_with_seed(seed: u64, body: &str) -> String {
    format!("# seed={seed}\n{body}")
}

/// Resolve the corpus for a command: load `corpus.corpus_file` when
/// set, otherwise generate from the config.
fn resolve_corpus(cfg: &ExperimentConfig, override_path: Option<&Path>) -> Result<Corpus, CliError> {
    let path = override_path.or(cfg.corpus.corpus_file.as_deref());
    let corpus = match path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(CliError::io(format!("reading corpus {}", path.display())))?;
            Corpus::from_json(&text)
                .map_err(|e| CliError::Runtime(format!("corpus {}: {e}", path.display())))?
        }
        None => build_corpus(&cfg.corpus_config(), cfg.master_seed)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?,
    };
    if corpus.is_empty() {
        return Err(ConfigError::Invalid("corpus holds no samples".into()).into());
    }
    Ok(corpus)
}

/// Run a closure inside a rayon pool sized by the config's worker knob;
/// 0 keeps the default pool.
fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    if workers == 0 {
        Ok(f())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::Runtime(format!("worker pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// `gen-corpus`: generate the corpus and write it as one JSON document.
pub fn gen_corpus(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let corpus = build_corpus(&cfg.corpus_config(), cfg.master_seed)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    write_file(out, &corpus.to_json())?;
    println!(
        "wrote corpus: {} samples, {} families -> {}",
        corpus.len(),
        corpus.family_count(),
        out.display()
    );
    Ok(())
}

/// `run`: analyze every corpus sample with the configured controller,
/// writing per-sample graphs (JSON and DOT) and step logs (CSV).
/// Per-sample failures are reported and the run continues.
pub fn run(
    cfg: &ExperimentConfig,
    corpus_override: Option<&Path>,
    out_override: Option<&Path>,
) -> Result<(), CliError> {
    let corpus = resolve_corpus(cfg, corpus_override)?;
    let out_dir = out_override.unwrap_or(&cfg.output_dir).to_path_buf();
    let params = cfg.analysis_params();

    struct RunArtifacts {
        name: String,
        graph_json: String,
        graph_dot: String,
        log: String,
    }

    let results: Vec<(u32, Result<RunArtifacts, String>)> = with_workers(cfg.workers, || {
        corpus
            .samples
            .par_iter()
            .map(|sample| {
                let analyzer_cfg = AnalyzerConfig {
                    max_actions: cfg.analyzer.max_actions,
                    learning: params.learning,
                    controller: cfg.analyzer.controller.clone(),
                    reward: params.reward,
                    per_action_cost_secs: params.per_action_cost_secs,
                    seed: seeds::mix(
                        cfg.master_seed,
                        &[seeds::stream::ANALYSIS, sample.id.0 as u64],
                    ),
                };
                let outcome = analyze_sample(sample, &analyzer_cfg)
                    .map(|result| RunArtifacts {
                        name: format!("sample_{:05}", sample.id.0),
                        graph_json: result.graph.to_json_with_seed(Some(analyzer_cfg.seed)),
                        graph_dot: result.graph.to_dot(),
                        log: format!(
                            "# seed={} sample={}\n{}",
                            analyzer_cfg.seed,
                            sample.id.0,
                            result.steps_csv()
                        ),
                    })
                    .map_err(|e| e.to_string());
                (sample.id.0, outcome)
            })
            .collect()
    })?;

    let mut failures = Vec::new();
    let mut written = 0usize;
    for (id, outcome) in results {
        match outcome {
            Ok(artifacts) => {
                let name = &artifacts.name;
                write_file(
                    &out_dir.join("graphs").join(format!("{name}.json")),
                    &artifacts.graph_json,
                )?;
                write_file(
                    &out_dir.join("graphs").join(format!("{name}.dot")),
                    &artifacts.graph_dot,
                )?;
                write_file(&out_dir.join("logs").join(format!("{name}.csv")), &artifacts.log)?;
                written += 1;
            }
            Err(message) => {
                eprintln!("sample {id}: analysis failed: {message}");
                failures.push(id);
            }
        }
    }
    println!(
        "analyzed {written}/{} samples ({} actions each) -> {}",
        corpus.len(),
        cfg.analyzer.max_actions,
        out_dir.display()
    );
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "{} of {} samples failed",
            failures.len(),
            corpus.len()
        )))
    }
}

fn agent_file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect()
}

/// `sweep`: F1-vs-budget curve for every configured agent, one CSV per
/// agent plus a stdout summary.
pub fn sweep(
    cfg: &ExperimentConfig,
    corpus_override: Option<&Path>,
    out_override: Option<&Path>,
) -> Result<(), CliError> {
    let corpus = resolve_corpus(cfg, corpus_override)?;
    let out_dir = out_override.unwrap_or(&cfg.output_dir).to_path_buf();
    let params = cfg.analysis_params();
    let sweep_cfg = cfg.sweep_config();

    for agent in &cfg.agents {
        let result = with_workers(cfg.workers, || {
            sweep_action_budget(&corpus, agent, &params, &sweep_cfg, cfg.master_seed)
        })?
        .map_err(|e| CliError::Runtime(e.to_string()))?;
        let path = out_dir.join(format!("sweep_{}.csv", agent_file_stem(&agent.name)));
        write_file(&path, &csv_with_seed(cfg.master_seed, &result.to_csv()))?;

        println!("agent {}:", agent.name);
        println!("  budget  mean_f1  std_f1");
        for row in &result.budgets {
            println!("  {:>6}  {:>7.4}  {:>6.4}", row.budget, row.mean_f1, row.std_f1);
        }
        println!("  -> {}", path.display());
    }
    Ok(())
}

/// `compare`: plateau action count and simulated seconds per agent,
/// as CSV and a formatted table on stdout.
pub fn compare(
    cfg: &ExperimentConfig,
    corpus_override: Option<&Path>,
    out_override: Option<&Path>,
) -> Result<(), CliError> {
    let corpus = resolve_corpus(cfg, corpus_override)?;
    let out_dir = out_override.unwrap_or(&cfg.output_dir).to_path_buf();
    let params = cfg.analysis_params();
    let sweep_cfg = cfg.sweep_config();

    let (table, _) = with_workers(cfg.workers, || {
        compare_agents(&corpus, &cfg.agents, &params, &sweep_cfg, cfg.master_seed)
    })?
    .map_err(|e| CliError::Runtime(e.to_string()))?;

    let path = out_dir.join("comparison.csv");
    write_file(&path, &csv_with_seed(cfg.master_seed, &table.to_csv()))?;
    print!("{table}");
    println!("-> {}", path.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GraphFormat {
    Dot,
    Json,
}

/// `export-graph`: convert a stored graph JSON document to DOT (or
/// re-emit normalized JSON).
pub fn export_graph(
    input: &Path,
    format: GraphFormat,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let text = fs::read_to_string(input)
        .map_err(CliError::io(format!("reading graph {}", input.display())))?;
    let graph = CallGraph::from_json(&text)
        .map_err(|e| CliError::Runtime(format!("graph {}: {e}", input.display())))?;
    let rendered = match format {
        GraphFormat::Dot => graph.to_dot(),
        GraphFormat::Json => graph.to_json(),
    };
    match out {
        Some(path) => write_file(path, &rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}
