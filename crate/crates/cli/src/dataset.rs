//! Parameter sweeps over `(B, S)`: couple generation, a longest-first worker
//! pool, resumable on-disk storage and loading back for training.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use hbfill::io::{read_meta, read_profile, write_profile};
use hbfill::solver::{fingerprint, run_to_wall_touch};
use hbfill::{Domain, HeightProfile, RheoParams, SolverConfig};

use crate::manifest::{RunManifest, TaskDuration};

pub const INDEX_FILE: &str = "index.json";
pub const PROFILE_DIR: &str = "profiles";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GridKind {
    /// `nb x ns` tensor grid including the range endpoints.
    Regular { nb: usize, ns: usize },
    /// Uniform draws over the rectangle.
    Random { count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub grid: GridKind,
    #[serde(rename = "B_range")]
    pub b_range: (f64, f64),
    #[serde(rename = "S_range")]
    pub s_range: (f64, f64),
    pub n: f64,
    pub solver: SolverConfig<f64>,
}

impl DatasetSpec {
    pub fn regular(nb: usize, ns: usize, n: f64, solver: SolverConfig<f64>) -> Self {
        let d = Domain::<f64>::default();
        Self {
            grid: GridKind::Regular { nb, ns },
            b_range: d.b_bounds,
            s_range: d.s_bounds,
            n,
            solver,
        }
    }

    pub fn random(count: usize, seed: u64, n: f64, solver: SolverConfig<f64>) -> Self {
        let d = Domain::<f64>::default();
        Self {
            grid: GridKind::Random { count, seed },
            b_range: d.b_bounds,
            s_range: d.s_bounds,
            n,
            solver,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let d = Domain::<f64>::default();
        let inside = |(lo, hi): (f64, f64), (dlo, dhi): (f64, f64)| lo <= hi && lo >= dlo && hi <= dhi;
        if !inside(self.b_range, d.b_bounds) || !inside(self.s_range, d.s_bounds) {
            bail!(
                "dataset ranges B {:?}, S {:?} must lie within B {:?}, S {:?}",
                self.b_range,
                self.s_range,
                d.b_bounds,
                d.s_bounds
            );
        }
        if let GridKind::Regular { nb, ns } = self.grid {
            if nb < 2 || ns < 2 {
                bail!("regular grids need at least 2 values per axis (got {nb} x {ns})");
            }
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.n > 0.0) {
            bail!("power index must be positive");
        }
        self.solver.validate()?;
        Ok(())
    }

    /// Couples in index order (B-major for regular grids).
    pub fn couples(&self) -> Vec<(f64, f64)> {
        match self.grid {
            GridKind::Regular { nb, ns } => {
                let bs = linspace(self.b_range, nb);
                let ss = linspace(self.s_range, ns);
                bs.iter().flat_map(|&b| ss.iter().map(move |&s| (b, s))).collect()
            }
            GridKind::Random { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..count)
                    .map(|_| {
                        let b = rng.random_range(self.b_range.0..=self.b_range.1);
                        let s = rng.random_range(self.s_range.0..=self.s_range.1);
                        (b, s)
                    })
                    .collect()
            }
        }
    }

    pub fn len(&self) -> usize {
        match self.grid {
            GridKind::Regular { nb, ns } => nb * ns,
            GridKind::Random { count, .. } => count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn linspace((lo, hi): (f64, f64), k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| {
            if i + 1 == k {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (k - 1) as f64
            }
        })
        .collect()
}

/// Predicted relative cost of a couple: high `B` and low `S` are slow.
pub fn cost_heuristic(b: f64, s: f64) -> f64 {
    b / s.max(0.05)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryStatus {
    Ok,
    Failed,
    Pending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub file: String,
    pub status: EntryStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_touch_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub format_version: u32,
    pub solver_fingerprint: String,
    pub spec: DatasetSpec,
    pub entries: Vec<IndexEntry>,
}

impl DatasetIndex {
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(INDEX_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn failures(&self) -> Vec<&IndexEntry> {
        self.entries.iter().filter(|e| e.status != EntryStatus::Ok).collect()
    }
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub workers: usize,
    /// Stop after computing this many new couples (the rest stay pending).
    pub max_new: Option<usize>,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            max_new: None,
        }
    }
}

#[derive(Debug)]
pub struct GenerateReport {
    pub index: DatasetIndex,
    pub computed: usize,
    pub reused: usize,
    pub durations: Vec<TaskDuration>,
}

impl GenerateReport {
    pub fn complete(&self) -> bool {
        self.index.entries.iter().all(|e| e.status == EntryStatus::Ok)
    }
}

fn profile_rel_path(id: &str) -> String {
    format!("{PROFILE_DIR}/{id}.csv")
}

/// True when `path` holds a finished profile for exactly this couple.
fn is_done(path: &Path, b: f64, s: f64, spec: &DatasetSpec) -> Option<f64> {
    if !path.exists() {
        return None;
    }
    let meta = read_meta(path).ok()??;
    (meta.b == b && meta.s == s && meta.n == spec.n && meta.nx == spec.solver.nx).then_some(meta.wall_touch_time)
}

struct TaskResult {
    slot: usize,
    outcome: anyhow::Result<f64>,
    seconds: f64,
}

/// Evaluates every couple of `spec` into `out_dir`, reusing finished
/// profiles. Tasks are dispatched longest-first to `workers` threads and
/// the index is assembled by a single collector.
pub fn generate(spec: &DatasetSpec, out_dir: &Path, opts: &GenerateOptions) -> anyhow::Result<GenerateReport> {
    spec.validate()?;
    let profiles = out_dir.join(PROFILE_DIR);
    fs::create_dir_all(&profiles)?;
    let print = fingerprint();

    // A different solver or spec invalidates whatever is on disk.
    if let Ok(old) = DatasetIndex::load(out_dir) {
        if old.solver_fingerprint != print || old.spec != *spec {
            log::warn!(
                "{}: stale dataset (solver or spec changed), recomputing",
                out_dir.display()
            );
            fs::remove_dir_all(&profiles)?;
            fs::create_dir_all(&profiles)?;
        }
    }

    let couples = spec.couples();
    let width = couples.len().saturating_sub(1).to_string().len().max(4);
    let mut entries: Vec<IndexEntry> = couples
        .iter()
        .enumerate()
        .map(|(i, &(b, s))| {
            let id = format!("{i:0width$}");
            IndexEntry {
                file: profile_rel_path(&id),
                id,
                b,
                s,
                status: EntryStatus::Pending,
                wall_touch_time: None,
                error: None,
            }
        })
        .collect();

    let mut todo = Vec::new();
    let mut reused = 0;
    for (slot, e) in entries.iter_mut().enumerate() {
        match is_done(&out_dir.join(&e.file), e.b, e.s, spec) {
            Some(t) => {
                e.status = EntryStatus::Ok;
                e.wall_touch_time = Some(t);
                reused += 1;
            }
            None => todo.push(slot),
        }
    }
    todo.sort_by(|&a, &b| {
        let (ca, cb) = (
            cost_heuristic(entries[a].b, entries[a].s),
            cost_heuristic(entries[b].b, entries[b].s),
        );
        cb.total_cmp(&ca).then(a.cmp(&b))
    });
    if let Some(limit) = opts.max_new {
        todo.truncate(limit);
    }
    log_eta(out_dir, &entries, &todo);

    let tasks: Vec<(usize, f64, f64, PathBuf)> = todo
        .iter()
        .map(|&slot| {
            (
                slot,
                entries[slot].b,
                entries[slot].s,
                out_dir.join(&entries[slot].file),
            )
        })
        .collect();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<TaskResult>();
    let mut durations = Vec::new();
    let mut computed = 0;
    std::thread::scope(|scope| {
        for _ in 0..opts.workers.max(1).min(tasks.len().max(1)) {
            let tx = tx.clone();
            let (next, tasks) = (&next, &tasks);
            scope.spawn(move || loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some((slot, b, s, path)) = tasks.get(k) else { break };
                let slot = *slot;
                let started = Instant::now();
                let outcome = evaluate_couple(*b, *s, spec, path);
                let seconds = started.elapsed().as_secs_f64();
                if tx.send(TaskResult { slot, outcome, seconds }).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for r in rx {
            computed += 1;
            let e = &mut entries[r.slot];
            durations.push(TaskDuration {
                task: e.id.clone(),
                seconds: r.seconds,
            });
            match r.outcome {
                Ok(t) => {
                    e.status = EntryStatus::Ok;
                    e.wall_touch_time = Some(t);
                    log::info!(
                        "[{computed}/{}] B = {} S = {} done in {:.1}s",
                        todo.len(),
                        e.b,
                        e.s,
                        r.seconds
                    );
                }
                Err(err) => {
                    e.status = EntryStatus::Failed;
                    e.error = Some(format!("{err:#}"));
                    log::error!("B = {} S = {} failed: {err:#}", e.b, e.s);
                }
            }
        }
    });

    let index = DatasetIndex {
        format_version: FORMAT_VERSION,
        solver_fingerprint: print,
        spec: spec.clone(),
        entries,
    };
    fs::write(out_dir.join(INDEX_FILE), serde_json::to_string_pretty(&index)? + "\n")?;
    Ok(GenerateReport {
        index,
        computed,
        reused,
        durations,
    })
}

fn evaluate_couple(b: f64, s: f64, spec: &DatasetSpec, path: &Path) -> anyhow::Result<f64> {
    let run = run_to_wall_touch(&RheoParams::new(b, s, spec.n), &spec.solver)?;
    write_profile(path, &run.final_profile)?;
    Ok(run.wall_touch_time)
}

/// Logs an estimate of the remaining work, calibrated on the durations of a
/// previous (interrupted) run when its manifest is available.
fn log_eta(out_dir: &Path, entries: &[IndexEntry], todo: &[usize]) {
    let Some(previous) = RunManifest::load(out_dir) else {
        return;
    };
    let by_id: HashMap<&str, &IndexEntry> = entries.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut ratios: Vec<f64> = previous
        .tasks
        .iter()
        .filter_map(|t| by_id.get(t.task.as_str()).map(|e| t.seconds / cost_heuristic(e.b, e.s)))
        .filter(|r| r.is_finite())
        .collect();
    if ratios.is_empty() {
        return;
    }
    ratios.sort_by(f64::total_cmp);
    let scale = ratios[ratios.len() / 2];
    let predicted: f64 = todo
        .iter()
        .map(|&i| scale * cost_heuristic(entries[i].b, entries[i].s))
        .sum();
    log::info!(
        "{} couples remaining, roughly {:.0}s of solver time",
        todo.len(),
        predicted
    );
}

/// Dataset loaded back from disk: successful couples only, in index order.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub index: DatasetIndex,
    pub profiles: Vec<HeightProfile<f64>>,
}

impl LoadedDataset {
    pub fn inputs(&self) -> Vec<RheoParams<f64>> {
        self.profiles.iter().map(|p| p.params).collect()
    }

    pub fn outputs(&self) -> Vec<Vec<f64>> {
        self.profiles.iter().map(|p| p.h.clone()).collect()
    }
}

pub fn load(dir: &Path) -> anyhow::Result<LoadedDataset> {
    let index = DatasetIndex::load(dir)?;
    let mut profiles = Vec::new();
    for e in index.entries.iter().filter(|e| e.status == EntryStatus::Ok) {
        let path = dir.join(&e.file);
        profiles.push(read_profile::<f64>(&path).with_context(|| format!("reading {}", path.display()))?);
    }
    Ok(LoadedDataset { index, profiles })
}

/// Solver runs cached on disk under a directory keyed by the solver fingerprint.
pub struct RunCache {
    dir: PathBuf,
}

impl RunCache {
    pub fn new(root: &Path) -> anyhow::Result<Self> {
        let dir = root.join(fingerprint());
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn get(&self, params: &RheoParams<f64>, config: &SolverConfig<f64>) -> anyhow::Result<HeightProfile<f64>> {
        let c = config;
        let name = format!(
            "B{}_S{}_n{}_nx{}_cd{}_thr{}_cap{}.csv",
            params.b,
            params.s,
            params.n,
            c.nx,
            c.cd,
            c.wall_touch_threshold,
            c.dt_max.map(|v| v.to_string()).unwrap_or_else(|| "dx".into())
        );
        let path = self.dir.join(name);
        if path.exists() && read_meta(&path)?.is_some() {
            return Ok(read_profile(&path)?);
        }
        let run = run_to_wall_touch(params, config)?;
        write_profile(&path, &run.final_profile)?;
        Ok(run.final_profile)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_grid_couples() {
        let spec = DatasetSpec::regular(20, 20, 1.0, SolverConfig::with_nx(31));
        let c = spec.couples();
        assert_eq!(c.len(), 400);
        assert_eq!(c[0], (0.5, 0.05));
        assert_eq!(c[399], (250.0, 120.0));
        assert_eq!(c[1].0, 0.5);
    }

    #[test]
    fn couples_survive_json_exactly() {
        for (b, s) in DatasetSpec::regular(20, 20, 1.0, SolverConfig::with_nx(31)).couples() {
            for x in [b, s] {
                let back: f64 = serde_json::from_str(&serde_json::to_string(&x).unwrap()).unwrap();
                assert_eq!(back.to_bits(), x.to_bits());
            }
        }
    }

    #[test]
    fn random_couples_are_seeded() {
        let spec = DatasetSpec::random(50, 7, 1.0, SolverConfig::with_nx(31));
        assert_eq!(spec.couples(), spec.couples());
        let other = DatasetSpec::random(50, 8, 1.0, SolverConfig::with_nx(31));
        assert_ne!(spec.couples(), other.couples());
        assert!(spec
            .couples()
            .iter()
            .all(|&(b, s)| (0.5..=250.0).contains(&b) && (0.05..=120.0).contains(&s)));
    }

    #[test]
    fn spec_validation() {
        let mut spec = DatasetSpec::regular(1, 5, 1.0, SolverConfig::with_nx(31));
        assert!(spec.validate().is_err());
        spec.grid = GridKind::Regular { nb: 2, ns: 2 };
        spec.b_range = (0.1, 10.0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn slow_corner_first() {
        assert!(cost_heuristic(250.0, 0.05) > cost_heuristic(250.0, 120.0));
        assert!(cost_heuristic(250.0, 1.0) > cost_heuristic(1.0, 1.0));
        assert_eq!(cost_heuristic(10.0, 0.0), cost_heuristic(10.0, 0.05));
    }
}
