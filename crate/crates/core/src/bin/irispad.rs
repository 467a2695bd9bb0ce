use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use irispad::areas::TrainOptions;
use irispad::eval::{Method, Scenario, SplitSpec, DEFAULT_FOLDS};
use irispad::pipeline::{self, EvalArgs, NormalsArgs, Outcome, ScoreArgs, TrainArgs};
use irispad::stereo::LightRig;
use irispad::synth::CorpusParams;

/// Iris presentation attack detection by photometric stereo.
#[derive(Parser)]
#[command(name = "irispad", version)]
struct Cli {
    /// Light rig JSON: {"directions": [[x, y, z], ...]}, one row per image.
    #[arg(long, global = true)]
    rig: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate surface normals for one image pair.
    Normals {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long)]
        mask_left: Option<PathBuf>,
        #[arg(long)]
        mask_right: Option<PathBuf>,
    },
    /// Score every pair of a manifest.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Base)]
        method: MethodArg,
        /// Trained area model; required with `--method weighted`.
        #[arg(long)]
        area_model: Option<PathBuf>,
        /// Emit decisions: score > threshold is an attack.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Learn weighted iris sectors from a labeled manifest.
    TrainAreas {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Run an evaluation protocol.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        #[arg(long, value_enum, default_value_t = MethodArg::Base)]
        method: MethodArg,
        /// Repetitions for the mixed protocols.
        #[arg(long, default_value_t = DEFAULT_FOLDS)]
        folds: usize,
        /// Disjoint k-fold partitions instead of resampled training sets.
        #[arg(long)]
        classic_kfold: bool,
        /// Training tags for `--scenario custom`, comma separated.
        #[arg(long, value_delimiter = ',')]
        train_tags: Vec<String>,
        /// Test tags for `--scenario custom`, comma separated.
        #[arg(long, value_delimiter = ',')]
        test_tags: Vec<String>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Render a synthetic corpus with a manifest.
    Synth {
        #[arg(long, default_value_t = 100)]
        n_bonafide: usize,
        #[arg(long, default_value_t = 100)]
        n_attack: usize,
        #[arg(long, default_value_t = 0)]
        n_clear: usize,
        #[arg(long, default_value_t = irispad::synth::DEFAULT_BUMP_AMPLITUDE)]
        bump_amp: f64,
        #[arg(long, default_value_t = irispad::synth::DEFAULT_DOT_FRACTION)]
        dot_frac: f64,
        #[arg(long, default_value_t = irispad::synth::DEFAULT_NOISE)]
        noise: f64,
    },
}

#[derive(Args)]
struct TrainFlags {
    /// Rank sectors by signed d' instead of its magnitude.
    #[arg(long)]
    signed_dprime: bool,
    /// Candidate grids as RxT, comma separated (default 4x10,5x10,4x15,5x15).
    #[arg(long, value_delimiter = ',', value_parser = parse_grid)]
    grids: Vec<(usize, usize)>,
}

impl TrainFlags {
    fn options(&self) -> TrainOptions {
        let mut options = TrainOptions {
            ranking: pipeline::ranking(self.signed_dprime),
            ..TrainOptions::default()
        };
        if !self.grids.is_empty() {
            options.grids = self.grids.clone();
        }
        options
    }
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (r, t) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("grid `{s}` is not RxT"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("grid `{s}`: {e}"));
    let grid = (parse(r)?, parse(t)?);
    if grid.0 == 0 || grid.1 == 0 {
        return Err(format!("grid `{s}` must be positive"));
    }
    Ok(grid)
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Base,
    Weighted,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    /// Train on regular-pattern lenses, test on irregular ones.
    A,
    /// Train on irregular-pattern lenses, test on regular ones.
    B,
    /// Mixed lenses, resampled folds, authentic test bona fide.
    C,
    /// Mixed lenses, resampled folds, clear-lens test bona fide.
    Clear,
    /// Tag filters from --train-tags and --test-tags.
    Custom,
}

fn run(cli: Cli) -> Result<Outcome> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let rig = || pipeline::require_rig(cli.rig.as_deref());
    let out = cli.out.as_path();
    let outcome = match cli.command {
        Command::Normals {
            left,
            right,
            mask_left,
            mask_right,
        } => pipeline::cmd_normals(
            &NormalsArgs {
                left: &left,
                right: &right,
                mask_left: mask_left.as_deref(),
                mask_right: mask_right.as_deref(),
            },
            &rig()?,
            out,
        )?,
        Command::Score {
            manifest,
            method,
            area_model,
            threshold,
        } => {
            let area_model = match (method, area_model) {
                (MethodArg::Weighted, None) => anyhow::bail!(pipeline::PipelineError::Config(
                    "--method weighted needs --area-model".into()
                )),
                (MethodArg::Weighted, Some(p)) => Some(p),
                (MethodArg::Base, Some(_)) => {
                    anyhow::bail!(pipeline::PipelineError::Config("--area-model needs --method weighted".into()))
                }
                (MethodArg::Base, None) => None,
            };
            pipeline::cmd_score(
                &ScoreArgs {
                    manifest: &manifest,
                    area_model: area_model.as_deref(),
                    threshold,
                },
                &rig()?,
                out,
            )?
        }
        Command::TrainAreas { manifest, train } => pipeline::cmd_train_areas(
            &TrainArgs {
                manifest: &manifest,
                options: train.options(),
            },
            &rig()?,
            out,
        )?,
        Command::Eval {
            manifest,
            scenario,
            method,
            folds,
            classic_kfold,
            train_tags,
            test_tags,
            train,
        } => {
            let scenario = match scenario {
                ScenarioArg::A => Scenario::TrainRegularTestIrregular,
                ScenarioArg::B => Scenario::TrainIrregularTestRegular,
                ScenarioArg::C => Scenario::MixedCrossVal,
                ScenarioArg::Clear => Scenario::ClearLensTest,
                ScenarioArg::Custom => Scenario::Custom,
            };
            let mut spec = SplitSpec::new(scenario, cli.seed);
            if matches!(scenario, Scenario::MixedCrossVal | Scenario::ClearLensTest) {
                spec.folds = folds;
                spec.classic_kfold = classic_kfold;
            }
            if scenario == Scenario::Custom {
                if train_tags.is_empty() || test_tags.is_empty() {
                    anyhow::bail!(pipeline::PipelineError::Config(
                        "--scenario custom needs --train-tags and --test-tags".into()
                    ));
                }
                spec.train_tags = train_tags;
                spec.test_tags = test_tags;
            }
            let method = match method {
                MethodArg::Base => Method::Base,
                MethodArg::Weighted => Method::WeightedAreas,
            };
            pipeline::cmd_eval(
                &EvalArgs {
                    manifest: &manifest,
                    spec,
                    method,
                    options: train.options(),
                },
                &rig()?,
                out,
            )?
        }
        Command::Synth {
            n_bonafide,
            n_attack,
            n_clear,
            bump_amp,
            dot_frac,
            noise,
        } => {
            let rig = match &cli.rig {
                Some(p) => LightRig::load(p)?,
                None => LightRig::default_test_rig(),
            };
            let params = CorpusParams {
                n_bonafide,
                n_attack,
                n_clear,
                bump_amplitude: bump_amp,
                dot_fraction: dot_frac,
                noise_sigma: noise,
                ..CorpusParams::default()
            };
            pipeline::cmd_synth(&params, &rig, cli.seed, out)?
        }
    };
    Ok(outcome)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            for p in &outcome.outputs {
                println!("{}", p.display());
            }
            if outcome.failures > 0 {
                eprintln!("warning: {} sample(s) failed", outcome.failures);
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
