//! Run configuration: named desk/production profiles, optionally overridden
//! by a JSON file passed with `--config`, then by command-line flags.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use hbfill::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Desk,
    Production,
}

/// Values a config file may set. Anything missing falls back to the profile.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub profile: Profile,
    pub nx: Option<usize>,
    pub n: Option<f64>,
    pub cd: Option<f64>,
    pub dt_max: Option<f64>,
    pub wall_touch_threshold: Option<f64>,
    pub max_steps: Option<usize>,
    pub grid: Option<(usize, usize)>,
    pub validation_count: Option<usize>,
    pub noise_couples: Option<usize>,
    pub beta: Option<usize>,
    pub p: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

/// Fully resolved settings recorded in every manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub profile: Profile,
    pub nx: usize,
    pub n: f64,
    pub solver: SolverConfig<f64>,
    pub grid: (usize, usize),
    pub validation_count: usize,
    pub noise_couples: usize,
    pub beta: usize,
    pub p: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Settings {
    pub fn for_profile(profile: Profile) -> Self {
        let (nx, validation_count, noise_couples) = match profile {
            Profile::Desk => (151, 200, 50),
            Profile::Production => (301, 6000, 500),
        };
        Self {
            profile,
            nx,
            n: 1.0,
            solver: SolverConfig::with_nx(nx),
            grid: (20, 20),
            validation_count,
            noise_couples,
            beta: 15,
            p: 9,
            seed: 0,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }

    pub fn resolve(file: Option<&Path>) -> anyhow::Result<Self> {
        let cfg = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str::<ConfigFile>(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ConfigFile::default(),
        };
        let mut s = Self::for_profile(cfg.profile);
        if let Some(nx) = cfg.nx {
            s.nx = nx;
        }
        s.n = cfg.n.unwrap_or(s.n);
        s.solver.nx = s.nx;
        s.solver.cd = cfg.cd.unwrap_or(s.solver.cd);
        s.solver.dt_max = cfg.dt_max.or(s.solver.dt_max);
        s.solver.wall_touch_threshold = cfg.wall_touch_threshold.unwrap_or(s.solver.wall_touch_threshold);
        s.solver.max_steps = cfg.max_steps.unwrap_or(s.solver.max_steps);
        s.grid = cfg.grid.unwrap_or(s.grid);
        s.validation_count = cfg.validation_count.unwrap_or(s.validation_count);
        s.noise_couples = cfg.noise_couples.unwrap_or(s.noise_couples);
        s.beta = cfg.beta.unwrap_or(s.beta);
        s.p = cfg.p.unwrap_or(s.p);
        s.seed = cfg.seed.unwrap_or(s.seed);
        s.workers = cfg.workers.unwrap_or(s.workers);
        Ok(s)
    }

    pub fn set_nx(&mut self, nx: usize) {
        self.nx = nx;
        self.solver.nx = nx;
    }
}
