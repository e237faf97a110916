use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hbfill::inversion::ObservationSource;
use hbfill::Domain;
use hbfill_cli::commands::{self, exit_code};
use hbfill_cli::config::Settings;
use hbfill_cli::dataset::GridKind;

#[derive(Parser)]
#[command(
    name = "hbfill",
    version,
    about = "Confined yield-stress flow solver, surrogate and parameter estimation"
)]
struct Cli {
    /// JSON configuration file (profile and solver settings).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    Regular,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver to wall-touch for one (B, S, n).
    Simulate {
        #[arg(short = 'B', long = "B")]
        b: f64,
        #[arg(short = 'S', long = "S")]
        s: f64,
        #[arg(short, long)]
        n: Option<f64>,
        #[arg(long)]
        nx: Option<usize>,
    },
    /// Evaluate the solver over a (B, S) sweep.
    Dataset {
        #[arg(long, value_enum, default_value = "regular")]
        grid: GridArg,
        #[arg(long)]
        nb: Option<usize>,
        #[arg(long)]
        ns: Option<usize>,
        /// Number of couples for random grids.
        #[arg(long)]
        count: Option<usize>,
        #[arg(short, long)]
        n: Option<f64>,
        #[arg(long)]
        nx: Option<usize>,
        #[arg(long = "B-min")]
        b_min: Option<f64>,
        #[arg(long = "B-max")]
        b_max: Option<f64>,
        #[arg(long = "S-min")]
        s_min: Option<f64>,
        #[arg(long = "S-max")]
        s_max: Option<f64>,
        /// Compute at most this many new couples, leaving the rest pending.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Fit the PCE-PCA surrogate on a dataset directory.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        beta: Option<usize>,
        /// Index of the last retained principal component.
        #[arg(short, long)]
        p: Option<usize>,
        /// Fit every output node without PCA.
        #[arg(long, conflicts_with = "p")]
        no_pca: bool,
    },
    /// Reconstruction-error statistics of a surrogate on a dataset.
    Validate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        validation: PathBuf,
    },
    /// Estimate (B, S) from a profile CSV.
    Invert {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        observation: PathBuf,
        /// Relative noise intensity added to the observation first.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        single_start: bool,
        #[arg(long, default_value_t = 400)]
        max_iter: usize,
    },
    /// Invert noisy validation profiles for several noise intensities.
    NoiseStudy {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        validation: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.02,0.05,0.1")]
        alphas: Vec<f64>,
        #[arg(long)]
        couples: Option<usize>,
        /// Restrict to couples within this central fraction of each range.
        #[arg(long)]
        inner: Option<f64>,
        /// Invert surrogate profiles instead of the validation profiles.
        #[arg(long)]
        surrogate_observations: bool,
        #[arg(long)]
        single_start: bool,
        #[arg(long, default_value_t = 400)]
        max_iter: usize,
        /// Couples for which overlay data is written.
        #[arg(long, default_value_t = 3)]
        overlays: usize,
    },
    /// Grid-refinement study of the wall-touch profile.
    Convergence {
        #[arg(short = 'B', long = "B")]
        b: f64,
        #[arg(short = 'S', long = "S")]
        s: f64,
        #[arg(short, long)]
        n: Option<f64>,
        #[arg(long, value_delimiter = ',', default_value = "76,151,301,601,1201")]
        nx_list: Vec<usize>,
        #[arg(long, default_value_t = 2401)]
        nx_ref: usize,
        #[arg(long, default_value_t = 0.6)]
        min_order: f64,
        /// Directory where solver runs are cached between invocations.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut settings = Settings::resolve(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        settings.seed = seed;
    }
    if let Some(w) = cli.workers {
        settings.workers = w;
    }
    if settings.workers == 0 {
        anyhow::bail!("--workers must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build_global()?;
    match cli.command {
        Command::Simulate { b, s, n, nx } => {
            if let Some(nx) = nx {
                settings.set_nx(nx);
            }
            let n = n.unwrap_or(settings.n);
            commands::simulate(&settings, &commands::SimulateArgs { b, s, n, out: cli.out })?;
        }
        Command::Dataset {
            grid,
            nb,
            ns,
            count,
            n,
            nx,
            b_min,
            b_max,
            s_min,
            s_max,
            limit,
        } => {
            if let Some(nx) = nx {
                settings.set_nx(nx);
            }
            if let Some(n) = n {
                settings.n = n;
            }
            let grid = match grid {
                GridArg::Regular => GridKind::Regular {
                    nb: nb.unwrap_or(settings.grid.0),
                    ns: ns.unwrap_or(settings.grid.1),
                },
                GridArg::Random => GridKind::Random {
                    count: count.unwrap_or(settings.validation_count),
                    seed: settings.seed,
                },
            };
            let d = Domain::<f64>::default();
            let args = commands::DatasetArgs {
                grid,
                b_range: (b_min.unwrap_or(d.b_bounds.0), b_max.unwrap_or(d.b_bounds.1)),
                s_range: (s_min.unwrap_or(d.s_bounds.0), s_max.unwrap_or(d.s_bounds.1)),
                out: cli.out,
                limit,
            };
            commands::dataset(&settings, &args)?;
        }
        Command::Train {
            dataset,
            beta,
            p,
            no_pca,
        } => {
            let p = if no_pca { None } else { Some(p.unwrap_or(settings.p)) };
            let args = commands::TrainArgs {
                dataset,
                beta: beta.unwrap_or(settings.beta),
                p,
                out: cli.out,
            };
            commands::train(&args)?;
        }
        Command::Validate { model, validation } => {
            commands::validate(&commands::ValidateArgs {
                model,
                validation,
                out: cli.out,
            })?;
        }
        Command::Invert {
            model,
            observation,
            noise,
            single_start,
            max_iter,
        } => {
            let args = commands::InvertArgs {
                model,
                observation,
                noise,
                seed: settings.seed,
                single_start,
                max_iter,
                out: cli.out,
            };
            commands::invert(&args)?;
        }
        Command::NoiseStudy {
            model,
            validation,
            alphas,
            couples,
            inner,
            surrogate_observations,
            single_start,
            max_iter,
            overlays,
        } => {
            let args = commands::NoiseStudyArgs {
                model,
                validation,
                alphas,
                couples: couples.unwrap_or(settings.noise_couples),
                inner,
                source: if surrogate_observations {
                    ObservationSource::Surrogate
                } else {
                    ObservationSource::Reference
                },
                seed: settings.seed,
                single_start,
                max_iter,
                overlays,
                out: cli.out,
            };
            commands::noise_study(&args)?;
        }
        Command::Convergence {
            b,
            s,
            n,
            nx_list,
            nx_ref,
            min_order,
            cache,
        } => {
            let args = commands::ConvergenceArgs {
                b,
                s,
                n: n.unwrap_or(0.8),
                nx_list,
                nx_ref,
                min_order,
                cache,
                out: cli.out,
            };
            commands::convergence(&settings, &args)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
