//! Implementation of the `hbfill` subcommands. Every command writes its
//! outputs and a `manifest.json` into its output directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde_json::json;

use hbfill::inversion::{
    add_noise, estimate_params, noise_study as run_noise_study, sample_couples, task_seed, InversionOptions, NoiseSpec,
    NoiseStudy, Observation, ObservationSource,
};
use hbfill::io::{read_profile, write_profile};
use hbfill::solver::{convergence_from_profiles, convergence_study, run_to_wall_touch, ConvergenceStudy, Grid};
use hbfill::surrogate::{Reduction, Surrogate, TrainingMetadata, TrainingSet, ValidationReport};
use hbfill::{Domain, HeightProfile, InversionResult, Provenance, RheoParams};

use crate::config::Settings;
use crate::dataset::{self, DatasetSpec, GenerateOptions, GridKind, LoadedDataset, RunCache};
use crate::manifest::RunManifest;

/// Solver, fitting or optimizer failure (exit status 2).
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

/// A computed quantity missed its acceptance threshold (exit status 3).
#[derive(Debug)]
pub struct ThresholdFailure(pub String);

impl fmt::Display for ThresholdFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ThresholdFailure {}

/// Maps an error chain onto the documented exit codes.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.is::<ThresholdFailure>()) {
        return 3;
    }
    let numerical = err.chain().any(|e| {
        e.is::<NumericalFailure>()
            || matches!(
                e.downcast_ref::<hbfill::Error>(),
                Some(
                    hbfill::Error::BoundarySolve { .. }
                        | hbfill::Error::Unstable { .. }
                        | hbfill::Error::NoWallTouch { .. }
                )
            )
    });
    if numerical {
        2
    } else {
        1
    }
}

fn numerical(err: hbfill::Error) -> anyhow::Error {
    anyhow::Error::new(err)
}

pub struct SimulateArgs {
    pub b: f64,
    pub s: f64,
    pub n: f64,
    pub out: PathBuf,
}

pub const PROFILE_FILE: &str = "profile.csv";

/// Runs the solver to wall-touch and writes `profile.csv` + `profile.json`.
pub fn simulate(settings: &Settings, args: &SimulateArgs) -> anyhow::Result<f64> {
    let manifest = RunManifest::start(
        "simulate",
        json!({ "B": args.b, "S": args.s, "n": args.n, "settings": settings }),
        None,
    );
    let params = RheoParams::new(args.b, args.s, args.n);
    let run = run_to_wall_touch(&params, &settings.solver).map_err(numerical)?;
    fs::create_dir_all(&args.out)?;
    write_profile(&args.out.join(PROFILE_FILE), &run.final_profile)?;
    let mut manifest = manifest;
    manifest.tasks.push(crate::manifest::TaskDuration {
        task: "solve".into(),
        seconds: crate::manifest::unix_now() - manifest.started_unix,
    });
    manifest.finish(&args.out)?;
    println!(
        "wall-touch time {} after {} steps (dt in [{:e}, {:e}], clamped volume {:e})",
        run.wall_touch_time, run.steps_taken, run.dt_min, run.dt_max, run.clamped_mass
    );
    Ok(run.wall_touch_time)
}

pub struct DatasetArgs {
    pub grid: GridKind,
    pub b_range: (f64, f64),
    pub s_range: (f64, f64),
    pub out: PathBuf,
    pub limit: Option<usize>,
}

pub fn dataset(settings: &Settings, args: &DatasetArgs) -> anyhow::Result<dataset::GenerateReport> {
    let spec = DatasetSpec {
        grid: args.grid,
        b_range: args.b_range,
        s_range: args.s_range,
        n: settings.n,
        solver: settings.solver,
    };
    let seed = match args.grid {
        GridKind::Random { seed, .. } => Some(seed),
        GridKind::Regular { .. } => None,
    };
    let mut manifest = RunManifest::start("dataset", json!({ "spec": spec, "settings": settings }), seed);
    let opts = GenerateOptions {
        workers: settings.workers,
        max_new: args.limit,
    };
    let report = dataset::generate(&spec, &args.out, &opts)?;
    manifest.tasks = report.durations.clone();
    manifest.finish(&args.out)?;
    let failed = report
        .index
        .entries
        .iter()
        .filter(|e| e.status == dataset::EntryStatus::Failed)
        .count();
    let pending = report
        .index
        .entries
        .iter()
        .filter(|e| e.status == dataset::EntryStatus::Pending)
        .count();
    println!(
        "{} couples: {} computed, {} reused, {} failed, {} pending",
        report.index.entries.len(),
        report.computed,
        report.reused,
        failed,
        pending
    );
    if failed > 0 {
        return Err(anyhow::Error::new(NumericalFailure(format!(
            "{failed} couple(s) could not be produced; see {}",
            args.out.join(dataset::INDEX_FILE).display()
        ))));
    }
    Ok(report)
}

/// Training set view of a generated dataset directory.
pub fn training_set(dir: &Path) -> anyhow::Result<TrainingSet<f64>> {
    let data = dataset::load(dir)?;
    to_training_set(&data)
}

pub fn to_training_set(data: &LoadedDataset) -> anyhow::Result<TrainingSet<f64>> {
    let spec = &data.index.spec;
    let (kind, shape, seed) = match spec.grid {
        GridKind::Regular { nb, ns } => ("regular", vec![nb, ns], None),
        GridKind::Random { count, seed } => ("random", vec![count], Some(seed)),
    };
    let metadata = TrainingMetadata {
        grid_kind: kind.into(),
        grid_shape: shape,
        seed,
        solver: serde_json::to_value(spec.solver)?,
    };
    Ok(TrainingSet::new(data.inputs(), data.outputs(), metadata)?)
}

pub const MODEL_FILE: &str = "surrogate.json";

pub struct TrainArgs {
    pub dataset: PathBuf,
    pub beta: usize,
    /// `None` fits every node without PCA.
    pub p: Option<usize>,
    pub out: PathBuf,
}

pub fn train(args: &TrainArgs) -> anyhow::Result<Surrogate<f64>> {
    let mut manifest = RunManifest::start(
        "train",
        json!({ "dataset": args.dataset, "beta": args.beta, "p": args.p }),
        None,
    );
    let data = dataset::load(&args.dataset)?;
    let set = to_training_set(&data)?;
    let domain = Domain::from_bounds(data.index.spec.b_range, data.index.spec.s_range);
    let reduction = args.p.map_or(Reduction::None, |p| Reduction::Pca { p });
    let t0 = crate::manifest::unix_now();
    let model = Surrogate::train(&set, domain, args.beta, reduction)?;
    manifest.tasks.push(crate::manifest::TaskDuration {
        task: "fit".into(),
        seconds: crate::manifest::unix_now() - t0,
    });
    fs::create_dir_all(&args.out)?;
    model.save(&args.out.join(MODEL_FILE))?;
    let residual = hbfill::stats::summarize(&model.pce.residual_rms);
    fs::write(
        args.out.join("training.json"),
        serde_json::to_string_pretty(&json!({
            "samples": set.len(),
            "terms": model.pce.multi_indices.len(),
            "condition_number": model.pce.condition_number,
            "residual_rms": model.pce.residual_rms,
            "residual_summary": residual,
            "cumulative_explained_ratio": model.pca.as_ref().map(|p| p.cumulative_explained_ratio()),
        }))? + "\n",
    )?;
    manifest.finish(&args.out)?;
    println!(
        "trained beta = {} on {} samples ({} terms, condition number {:.3e}); max training RMS residual {:.3e}",
        args.beta,
        set.len(),
        model.pce.multi_indices.len(),
        model.pce.condition_number,
        residual.max
    );
    Ok(model)
}

pub fn load_model(path: &Path) -> anyhow::Result<Surrogate<f64>> {
    let path = if path.is_dir() {
        path.join(MODEL_FILE)
    } else {
        path.to_path_buf()
    };
    Surrogate::load(&path).with_context(|| format!("loading surrogate {}", path.display()))
}

pub fn format_summary_header() -> String {
    format!(
        "{:>10} {:>12} {:>12} {:>12} {:>12}",
        "", "median", "q3", "max", "variance"
    )
}

pub fn format_summary_row(label: &str, s: &hbfill::Summary) -> String {
    format!(
        "{:>10} {:>12.5} {:>12.5} {:>12.5} {:>12.5e}",
        label, s.median, s.q3, s.max, s.variance
    )
}

pub struct ValidateArgs {
    pub model: PathBuf,
    pub validation: PathBuf,
    pub out: PathBuf,
}

pub fn validate(args: &ValidateArgs) -> anyhow::Result<ValidationReport> {
    let manifest = RunManifest::start(
        "validate",
        json!({ "model": args.model, "validation": args.validation }),
        None,
    );
    let model = load_model(&args.model)?;
    let set = training_set(&args.validation)?;
    let report = model.validate(&set)?;
    fs::create_dir_all(&args.out)?;
    fs::write(
        args.out.join("validation.json"),
        serde_json::to_string_pretty(&json!({
            "summary": report.summary,
            "beta": model.beta(),
            "p": model.p(),
            "worst_decile": report.worst_decile(),
        }))? + "\n",
    )?;
    let mut w = csv::Writer::from_path(args.out.join("errors.csv"))?;
    w.write_record(["B", "S", "error"])?;
    for ((b, s), e) in report.points.iter().zip(&report.errors) {
        w.write_record([b.to_string(), s.to_string(), e.to_string()])?;
    }
    w.flush()?;
    manifest.finish(&args.out)?;
    println!("{}", format_summary_header());
    println!(
        "{}",
        format_summary_row(&format!("beta={}", model.beta()), &report.summary)
    );
    Ok(report)
}

pub struct InvertArgs {
    pub model: PathBuf,
    pub observation: PathBuf,
    /// Optional relative noise added before inverting.
    pub noise: Option<f64>,
    pub seed: u64,
    pub single_start: bool,
    pub max_iter: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct InvertOutput {
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub n: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub at_boundary: bool,
    pub low_s: bool,
}

impl InvertOutput {
    fn new(r: &InversionResult<f64>, seed: Option<u64>) -> Self {
        Self {
            b: r.estimate.b,
            s: r.estimate.s,
            n: r.estimate.n,
            objective: r.objective,
            iterations: r.iterations,
            converged: r.converged,
            relative_error: r.relative_error,
            seed,
            at_boundary: r.at_boundary,
            low_s: r.low_s,
        }
    }
}

fn write_overlay(path: &Path, columns: &[(&str, &[f64])]) -> anyhow::Result<()> {
    let nx = columns.iter().map(|c| c.1.len()).max().unwrap_or(0);
    let grid = Grid::<f64>::new(nx.max(3))?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["x"];
    header.extend(columns.iter().map(|c| c.0));
    w.write_record(&header)?;
    for i in 0..nx {
        let mut rec = vec![grid.x(i).to_string()];
        rec.extend(columns.iter().map(|c| c.1[i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn inversion_options(single_start: bool, max_iter: usize) -> InversionOptions<f64> {
    let mut opts = if single_start {
        InversionOptions::single_start(0.0, 0.0)
    } else {
        InversionOptions::default()
    };
    opts.nelder_mead.max_iter = max_iter;
    opts
}

pub fn invert(args: &InvertArgs) -> anyhow::Result<InvertOutput> {
    let manifest = RunManifest::start(
        "invert",
        json!({
            "model": args.model,
            "observation": args.observation,
            "noise": args.noise,
            "single_start": args.single_start,
            "max_iter": args.max_iter,
        }),
        args.noise.map(|_| args.seed),
    );
    let model = load_model(&args.model)?;
    let profile = read_profile::<f64>(&args.observation)
        .with_context(|| format!("reading observation {}", args.observation.display()))?;
    let truth = (profile.provenance != Provenance::Observed && profile.params.b > 0.0).then_some(profile.params);
    let profile = match args.noise {
        Some(alpha) if alpha > 0.0 => add_noise(&profile, &NoiseSpec { alpha, seed: args.seed }),
        _ => profile,
    };
    let obs = Observation::new(profile, truth);
    let opts = inversion_options(args.single_start, args.max_iter);
    let result = estimate_params(&obs, &model, &opts)?;
    if result.at_boundary {
        log::warn!("estimate lies on the boundary of the trained domain; treat it with caution");
    }
    if result.low_s {
        log::warn!("estimated S = {} is below 0.1", result.estimate.s);
    }
    let out = InvertOutput::new(&result, args.noise.map(|_| args.seed));
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("result.json"), serde_json::to_string_pretty(&out)? + "\n")?;
    let observed = obs.heights_on(model.nx)?;
    let fitted = model.evaluate(&result.estimate)?.h;
    write_overlay(
        &args.out.join("overlay.csv"),
        &[("h_observed", &observed), ("h_fitted", &fitted)],
    )?;
    manifest.finish(&args.out)?;
    println!(
        "B = {:.6}, S = {:.6} (objective {:.3e}, {} iterations, converged: {}){}",
        out.b,
        out.s,
        out.objective,
        out.iterations,
        out.converged,
        out.relative_error
            .map(|e| format!(", relative error {e:.3e}"))
            .unwrap_or_default()
    );
    Ok(out)
}

pub struct NoiseStudyArgs {
    pub model: PathBuf,
    pub validation: PathBuf,
    pub alphas: Vec<f64>,
    pub couples: usize,
    /// Keep only couples inside this central fraction of each range.
    pub inner: Option<f64>,
    pub source: ObservationSource,
    pub seed: u64,
    pub single_start: bool,
    pub max_iter: usize,
    pub overlays: usize,
    pub out: PathBuf,
}

/// Validation indices inside the central `fraction` of both ranges.
pub fn inner_indices(set: &TrainingSet<f64>, domain: &Domain<f64>, fraction: f64) -> Vec<usize> {
    set.inputs
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let (bt, st) = domain.to_standard(p.b, p.s);
            bt.abs() <= fraction && st.abs() <= fraction
        })
        .map(|(i, _)| i)
        .collect()
}

pub fn noise_study(args: &NoiseStudyArgs) -> anyhow::Result<NoiseStudy> {
    let manifest = RunManifest::start(
        "noise-study",
        json!({
            "model": args.model,
            "validation": args.validation,
            "alphas": args.alphas,
            "couples": args.couples,
            "inner": args.inner,
            "source": args.source,
            "single_start": args.single_start,
            "max_iter": args.max_iter,
            "noise_convention": "std = alpha * h",
        }),
        Some(args.seed),
    );
    let model = load_model(&args.model)?;
    let set = training_set(&args.validation)?;
    let pool: Vec<usize> = match args.inner {
        Some(f) => inner_indices(&set, &model.domain, f),
        None => (0..set.len()).collect(),
    };
    let couples: Vec<usize> = sample_couples(pool.len(), args.couples, args.seed)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    let opts = inversion_options(args.single_start, args.max_iter);
    let study = run_noise_study(&model, &set, &couples, &args.alphas, args.seed, args.source, &opts)?;

    fs::create_dir_all(&args.out)?;
    fs::write(
        args.out.join("noise_study.json"),
        serde_json::to_string_pretty(&study)? + "\n",
    )?;
    let mut w = csv::Writer::from_path(args.out.join("table.csv"))?;
    w.write_record([
        "alpha",
        "count",
        "median",
        "q3",
        "max",
        "variance",
        "failures",
        "not_converged",
    ])?;
    for r in &study.rows {
        let s = &r.summary;
        w.write_record([
            r.alpha.to_string(),
            s.count.to_string(),
            s.median.to_string(),
            s.q3.to_string(),
            s.max.to_string(),
            s.variance.to_string(),
            r.failures.to_string(),
            r.not_converged.to_string(),
        ])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(args.out.join("records.csv"))?;
    for r in &study.records {
        w.serialize(r)?;
    }
    w.flush()?;

    for &c in couples.iter().take(args.overlays) {
        let truth = set.inputs[c];
        let clean = match args.source {
            ObservationSource::Reference => set.outputs[c].clone(),
            ObservationSource::Surrogate => model.evaluate(&truth)?.h,
        };
        for (ai, &alpha) in args.alphas.iter().enumerate() {
            let clean_profile = HeightProfile {
                h: clean.clone(),
                t: f64::NAN,
                params: truth,
                provenance: Provenance::Pde,
            };
            let noisy = add_noise(
                &clean_profile,
                &NoiseSpec {
                    alpha,
                    seed: task_seed(args.seed, c, ai),
                },
            );
            let obs = Observation::new(noisy.clone(), Some(truth));
            let fitted = match estimate_params(&obs, &model, &opts) {
                Ok(r) => model.evaluate(&r.estimate)?.h,
                Err(_) => vec![f64::NAN; model.nx],
            };
            write_overlay(
                &args.out.join(format!("overlay_{c:04}_alpha{alpha}.csv")),
                &[("h_clean", &clean), ("h_noisy", &noisy.h), ("h_fitted", &fitted)],
            )?;
        }
    }
    manifest.finish(&args.out)?;
    println!(
        "relative errors over {} couples (noise std = alpha * h, seed {})",
        couples.len(),
        args.seed
    );
    println!("{}", format_summary_header());
    for r in &study.rows {
        let mut line = format_summary_row(&format!("{}%", r.alpha * 100.0), &r.summary);
        if r.failures > 0 || r.not_converged > 0 {
            line += &format!("  ({} failed, {} not converged)", r.failures, r.not_converged);
        }
        println!("{line}");
    }
    Ok(study)
}

pub struct ConvergenceArgs {
    pub b: f64,
    pub s: f64,
    pub n: f64,
    pub nx_list: Vec<usize>,
    pub nx_ref: usize,
    pub min_order: f64,
    pub cache: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn convergence(settings: &Settings, args: &ConvergenceArgs) -> anyhow::Result<ConvergenceStudy<f64>> {
    let manifest = RunManifest::start(
        "convergence",
        json!({
            "B": args.b, "S": args.s, "n": args.n,
            "nx_list": args.nx_list, "nx_ref": args.nx_ref,
            "min_order": args.min_order, "solver": settings.solver,
        }),
        None,
    );
    let params = RheoParams::new(args.b, args.s, args.n);
    let study = match &args.cache {
        None => convergence_study(&params, &args.nx_list, args.nx_ref, &settings.solver).map_err(numerical)?,
        Some(dir) => cached_convergence(
            &RunCache::new(dir)?,
            &params,
            &args.nx_list,
            args.nx_ref,
            &settings.solver,
        )?,
    };
    fs::create_dir_all(&args.out)?;
    let mut w = csv::Writer::from_path(args.out.join("convergence.csv"))?;
    w.write_record(["nx", "dx", "l2_error", "wall_touch_time", "local_order"])?;
    for r in &study.rows {
        w.write_record([
            r.nx.to_string(),
            r.dx.to_string(),
            r.l2_error.to_string(),
            r.wall_touch_time.to_string(),
            r.local_order.map(|o| o.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    fs::write(
        args.out.join("convergence.json"),
        serde_json::to_string_pretty(&study)? + "\n",
    )?;
    manifest.finish(&args.out)?;
    println!("{:>6} {:>12} {:>12} {:>8}", "nx", "dx", "L2 error", "order");
    for r in &study.rows {
        println!(
            "{:>6} {:>12.4e} {:>12.4e} {:>8}",
            r.nx,
            r.dx,
            r.l2_error,
            r.local_order.map(|o| format!("{o:.3}")).unwrap_or_default()
        );
    }
    match study.order {
        Some(order) if order >= args.min_order => {
            println!("fitted order {order:.4}");
            Ok(study)
        }
        Some(order) => Err(anyhow::Error::new(ThresholdFailure(format!(
            "fitted order {order:.4} is below {}",
            args.min_order
        )))),
        None => Err(anyhow::Error::new(ThresholdFailure("no order could be fitted".into()))),
    }
}

/// Convergence study whose solver runs are read from or written to `cache`.
pub fn cached_convergence(
    cache: &RunCache,
    params: &RheoParams<f64>,
    nx_list: &[usize],
    nx_ref: usize,
    base: &hbfill::SolverConfig<f64>,
) -> anyhow::Result<ConvergenceStudy<f64>> {
    if let Some(&bad) = nx_list.iter().find(|&&nx| nx > nx_ref) {
        anyhow::bail!("reference grid ({nx_ref}) must be at least as fine as every study grid (got {bad})");
    }
    let get = |nx: usize| cache.get(params, &hbfill::SolverConfig { nx, ..*base });
    let reference = get(nx_ref)?;
    let runs = nx_list.iter().map(|&nx| get(nx)).collect::<anyhow::Result<Vec<_>>>()?;
    let pairs: Vec<(&HeightProfile<f64>, Option<usize>)> = runs.iter().map(|p| (p, None)).collect();
    Ok(convergence_from_profiles(params, &reference.h, &pairs))
}
