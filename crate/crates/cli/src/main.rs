use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use medsim_core::embedding::{train_hierarchy, train_text};
use medsim_core::pipeline::{
    self, all_pairs, assemble_features, load_inputs, load_pairs, FeatureEngine, PipelineConfig, PipelineError,
    DEFAULT_SUBSTITUTION_THRESHOLD, SEED_ENV,
};
use medsim_core::regression::{read_features, write_features, FeatureLayout, ForestParams, Learner, ModelArtifact};

#[derive(Parser)]
#[command(name = "medsim", version, about = "Drug similarity scoring and substitution ranking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Hierarchy,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum LearnerArg {
    Forest,
    Tree,
    Linear,
    Mean,
}

#[derive(Subcommand)]
enum Command {
    /// Check the config and that every input parses.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train an embedding table and write it as TSV.
    Embed {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the configured features for labeled pairs.
    Featurize {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the pairs file named in the config.
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Emit every unordered drug pair, unlabeled, instead.
        #[arg(long, conflicts_with = "pairs")]
        all_pairs: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model on a feature table.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Leave out every pair containing this drug.
        #[arg(long)]
        holdout_drug: Option<String>,
        /// Take forest settings and the seed from this config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "forest")]
        learner: LearnerArg,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a feature table and write report.json.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reference Pearson correlation to compare against.
        #[arg(long)]
        compare_r: Option<f64>,
        /// Cross-validate the model's estimator with this many folds instead
        /// of scoring the table with the stored model.
        #[arg(long)]
        cv: Option<usize>,
    },
    /// Print the similarity of two drugs.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        drug_a: String,
        drug_b: String,
    },
    /// Rank every other drug as a substitute for one drug.
    Rank {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        drug: String,
        #[arg(long, default_value_t = DEFAULT_SUBSTITUTION_THRESHOLD)]
        threshold: f64,
        /// Fail if the model was trained on any pair containing the drug.
        #[arg(long)]
        require_holdout: bool,
        /// Print JSON instead of TSV.
        #[arg(long)]
        json: bool,
    },
    /// Cross-validate each feature subset listed in a grid file.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "forest")]
        learner: LearnerArg,
    },
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

fn load_features(path: &Path) -> Result<(FeatureLayout, Vec<medsim_core::PairFeatureRow>), PipelineError> {
    let file = fs::File::open(path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    Ok(read_features(BufReader::new(file))?)
}

fn learner(arg: LearnerArg, forest: ForestParams) -> Learner {
    match arg {
        LearnerArg::Forest => Learner::Forest(forest),
        LearnerArg::Tree => Learner::Tree {
            max_depth: forest.max_depth,
            min_samples_leaf: forest.min_samples_leaf,
        },
        LearnerArg::Linear => Learner::Linear,
        LearnerArg::Mean => Learner::Mean,
    }
}

fn env_seed() -> Result<Option<u64>, PipelineError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| PipelineError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = PipelineConfig::load(&config)?;
            let inputs = load_inputs(&cfg)?;
            let pairs = match cfg.data.pairs {
                Some(_) => load_pairs(&cfg, None)?.len(),
                None => 0,
            };
            println!(
                "ok: {} drugs, {} taxonomy nodes, {} corpus documents, {} labeled pairs, features {}",
                inputs.store.len(),
                inputs.store.taxonomy().node_count(),
                inputs.corpus.len(),
                pairs,
                cfg.features
            );
        }
        Command::Embed { mode, config, out } => {
            let cfg = PipelineConfig::load(&config)?;
            let inputs = load_inputs(&cfg)?;
            let table = match mode {
                ModeArg::Hierarchy => train_hierarchy(inputs.store.taxonomy(), &cfg.walks, &cfg.hierarchy_sgns)?,
                ModeArg::Text => train_text(&inputs.corpus, &inputs.store, &cfg.text_sgns)?,
            };
            table.save(&out)?;
            info!("wrote {} vectors to {}", table.len(), out.display());
        }
        Command::Featurize {
            config,
            pairs,
            all_pairs: every,
            out,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let inputs = load_inputs(&cfg)?;
            let engine = FeatureEngine::build(&inputs.store, &inputs.corpus, &cfg, &cfg.features)?;
            let rows = if every {
                all_pairs(&engine)?
            } else {
                assemble_features(&engine, &load_pairs(&cfg, pairs.as_deref())?)?
            };
            let mut buf = Vec::new();
            write_features(&cfg.features, &rows, &mut buf).expect("writing to memory");
            write_file(&out, buf)?;
            info!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Train {
            features,
            out,
            holdout_drug,
            config,
            learner: which,
            seed,
        } => {
            let (forest, cfg_seed) = match &config {
                Some(p) => {
                    let cfg = PipelineConfig::load(p)?;
                    (cfg.forest, Some(cfg.forest_seed()))
                }
                None => (ForestParams::default(), None),
            };
            let seed = match (seed, cfg_seed) {
                (Some(s), _) => s,
                (None, Some(s)) => s,
                (None, None) => env_seed()?.unwrap_or(0),
            };
            let (layout, rows) = load_features(&features)?;
            let artifact =
                pipeline::train_model(&rows, &layout, &learner(which, forest), seed, holdout_drug.as_deref())?;
            artifact.save(&out)?;
            info!("trained {} on {} rows", artifact.model.kind(), artifact.training_pairs.len());
        }
        Command::Evaluate {
            model,
            features,
            out,
            compare_r,
            cv,
        } => {
            let artifact = ModelArtifact::load(&model)?;
            let (layout, rows) = load_features(&features)?;
            let rows = if &layout == artifact.layout() {
                rows
            } else {
                rows.iter()
                    .map(|r| r.project(&layout, artifact.layout()))
                    .collect::<Result<Vec<_>, _>>()?
            };
            let report = match cv {
                Some(k) => pipeline::evaluate_cv(&artifact, &rows, k, compare_r)?,
                None => pipeline::evaluate_model(&artifact, &rows, compare_r)?,
            };
            write_file(&out, report.to_json())?;
        }
        Command::Score {
            model,
            config,
            drug_a,
            drug_b,
        } => {
            let artifact = ModelArtifact::load(&model)?;
            let cfg = PipelineConfig::load(&config)?;
            let inputs = load_inputs(&cfg)?;
            let engine = FeatureEngine::build(&inputs.store, &inputs.corpus, &cfg, artifact.layout())?;
            println!("{}", pipeline::score_pair(&artifact, &engine, &drug_a, &drug_b)?);
        }
        Command::Rank {
            model,
            config,
            drug,
            threshold,
            require_holdout,
            json,
        } => {
            let artifact = ModelArtifact::load(&model)?;
            let cfg = PipelineConfig::load(&config)?;
            let inputs = load_inputs(&cfg)?;
            let engine = FeatureEngine::build(&inputs.store, &inputs.corpus, &cfg, artifact.layout())?;
            let result = pipeline::rank_substitutes(&artifact, &engine, &drug, threshold, require_holdout)?;
            let stdout = io::stdout();
            let mut w = stdout.lock();
            let res = if json {
                writeln!(w, "{}", serde_json::to_string_pretty(&result).expect("result serializes"))
            } else {
                result.candidates.iter().enumerate().try_for_each(|(i, c)| {
                    writeln!(w, "{}\t{}\t{}\t{}", i + 1, c.drug, c.score, if c.suggested { "*" } else { "" })
                })
            };
            match res {
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => return Err(PipelineError::Data(e.to_string())),
                _ => {}
            }
        }
        Command::Ablate {
            config,
            grid,
            out,
            learner: which,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let grid = pipeline::parse_grid(&read_file(&grid)?)?;
            let layout = pipeline::grid_union(&grid)?;
            let inputs = load_inputs(&cfg)?;
            let engine = FeatureEngine::build(&inputs.store, &inputs.corpus, &cfg, &layout)?;
            let rows = assemble_features(&engine, &load_pairs(&cfg, None)?)?;
            let table = pipeline::run_ablation(
                &rows,
                &layout,
                &grid,
                &learner(which, cfg.forest),
                cfg.folds,
                cfg.forest_seed(),
            )?;
            write_file(&out, pipeline::ablation_tsv(&table))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
