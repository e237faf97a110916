//! Parameter estimation against a trained surrogate: noise model, Nelder-Mead,
//! multi-start inversion and the synthetic noise study.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RheoParams;
use crate::real::Real;
use crate::solver::{resample_linear, HeightProfile, Provenance};
use crate::stats::{summarize, Summary};
use crate::surrogate::{l2_distance, Scratch, Surrogate, TrainingSet};

/// Relative noise amplitude and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub alpha: f64,
    pub seed: u64,
}

/// Adds `N(0, (alpha h_i)^2)` noise at every node and clamps at zero.
pub fn add_noise<T: Real>(profile: &HeightProfile<T>, spec: &NoiseSpec) -> HeightProfile<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let alpha = T::lit(spec.alpha);
    let h = profile
        .h
        .iter()
        .map(|&h| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (h + alpha * h * T::lit(z)).max(T::zero())
        })
        .collect();
    HeightProfile {
        h,
        t: profile.t,
        params: profile.params,
        provenance: Provenance::Noisy,
    }
}

/// Profile to invert, with the generating parameters when they are known.
#[derive(Debug, Clone)]
pub struct Observation<T> {
    pub profile: HeightProfile<T>,
    pub known_truth: Option<RheoParams<T>>,
}

impl<T: Real> Observation<T> {
    pub fn new(profile: HeightProfile<T>, known_truth: Option<RheoParams<T>>) -> Self {
        Self { profile, known_truth }
    }

    /// Heights on a uniform grid of `nx` nodes.
    pub fn heights_on(&self, nx: usize) -> Result<Vec<T>> {
        match self.profile.h.len() {
            len if len == nx => Ok(self.profile.h.clone()),
            len if len < 2 => Err(Error::Shape(format!("observation has {len} nodes"))),
            _ => Ok(resample_linear(&self.profile.h, nx)),
        }
    }
}

/// Misfit in standardized coordinates: clamped surrogate evaluation plus a
/// quadratic penalty on the distance to the square `[-1, 1]^2`.
pub struct Misfit<'a, T> {
    surrogate: &'a Surrogate<T>,
    target: Vec<T>,
    pub penalty: T,
    scratch: Scratch<T>,
    buf: Vec<T>,
}

impl<'a, T: Real> Misfit<'a, T> {
    pub fn new(surrogate: &'a Surrogate<T>, observation: &Observation<T>) -> Result<Self> {
        Ok(Self {
            surrogate,
            target: observation.heights_on(surrogate.nx)?,
            penalty: T::zero(),
            scratch: Scratch::default(),
            buf: Vec::with_capacity(surrogate.nx),
        })
    }

    pub fn standard(&mut self, bt: T, st: T) -> T {
        let one = T::one();
        let cb = bt.max(-one).min(one);
        let cs = st.max(-one).min(one);
        self.surrogate
            .evaluate_standard_into(cb, cs, &mut self.scratch, &mut self.buf);
        let fit = l2_distance(&self.buf, &self.target);
        let d2 = (bt - cb) * (bt - cb) + (st - cs) * (st - cs);
        fit + self.penalty * d2
    }

    pub fn raw(&mut self, b: T, s: T) -> T {
        let (bt, st) = self.surrogate.domain.to_standard(b, s);
        self.standard(bt, st)
    }
}

/// `||surrogate(B, S) - observation||_2` with the out-of-domain penalty weight `lambda`.
pub fn misfit<T: Real>(
    candidate: (T, T),
    observation: &Observation<T>,
    surrogate: &Surrogate<T>,
    lambda: T,
) -> Result<T> {
    let mut m = Misfit::new(surrogate, observation)?;
    m.penalty = lambda;
    Ok(m.raw(candidate.0, candidate.1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions<T> {
    pub max_iter: usize,
    /// Edge length of the initial right-angled simplex.
    pub edge: T,
    pub x_tol: T,
    pub f_tol: T,
    pub keep_trace: bool,
}

impl<T: Real> Default for NelderMeadOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 400,
            edge: T::lit(0.1),
            x_tol: T::lit(1e-8),
            f_tol: T::lit(1e-8),
            keep_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum<T> {
    pub x: [T; 2],
    pub f: T,
    pub iterations: usize,
    pub converged: bool,
    /// Best vertex after each iteration.
    pub trace: Vec<([T; 2], T)>,
}

fn lerp<T: Real>(a: [T; 2], b: [T; 2], t: T) -> [T; 2] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Nelder-Mead with reflection 1, expansion 2, contraction 0.5 and shrink 0.5.
///
/// Converged when the simplex diameter and the objective spread are both below
/// tolerance, or when all vertices share the same objective value.
pub fn nelder_mead<T: Real, F: FnMut([T; 2]) -> T>(mut f: F, start: [T; 2], opts: &NelderMeadOptions<T>) -> Minimum<T> {
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let mut xs = [
        start,
        [start[0] + opts.edge, start[1]],
        [start[0], start[1] + opts.edge],
    ];
    let mut fs = [f(xs[0]), f(xs[1]), f(xs[2])];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| fs[i].partial_cmp(&fs[j]).unwrap_or(std::cmp::Ordering::Equal));
        xs = [xs[order[0]], xs[order[1]], xs[order[2]]];
        fs = [fs[order[0]], fs[order[1]], fs[order[2]]];

        let spread = fs[2] - fs[0];
        let diameter = xs[1..]
            .iter()
            .map(|x| ((x[0] - xs[0][0]).powi(2) + (x[1] - xs[0][1]).powi(2)).sqrt())
            .fold(T::zero(), T::max);
        if spread == T::zero() || (spread < opts.f_tol && diameter < opts.x_tol) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let c = lerp(xs[0], xs[1], half);
        let xr = lerp(c, xs[2], -T::one());
        let fr = f(xr);
        if fr < fs[0] {
            let xe = lerp(c, xs[2], -two);
            let fe = f(xe);
            if fe < fr {
                xs[2] = xe;
                fs[2] = fe;
            } else {
                xs[2] = xr;
                fs[2] = fr;
            }
        } else if fr < fs[1] {
            xs[2] = xr;
            fs[2] = fr;
        } else {
            let (xc, fc, accept) = if fr < fs[2] {
                let xc = lerp(c, xr, half);
                let fc = f(xc);
                (xc, fc, fc <= fr)
            } else {
                let xc = lerp(c, xs[2], half);
                let fc = f(xc);
                (xc, fc, fc < fs[2])
            };
            if accept {
                xs[2] = xc;
                fs[2] = fc;
            } else {
                for k in 1..3 {
                    xs[k] = lerp(xs[0], xs[k], half);
                    fs[k] = f(xs[k]);
                }
            }
        }
        if opts.keep_trace {
            let best = (0..3)
                .min_by(|&i, &j| fs[i].partial_cmp(&fs[j]).unwrap_or(std::cmp::Ordering::Equal))
                .unwrap_or(0);
            trace.push((xs[best], fs[best]));
        }
    }
    Minimum {
        x: xs[0],
        f: fs[0],
        iterations,
        converged,
        trace,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionOptions<T> {
    pub nelder_mead: NelderMeadOptions<T>,
    /// Standardized start points; the best run is kept.
    pub starts: Vec<(T, T)>,
    /// Multiplier of the start misfit giving the out-of-domain penalty weight.
    pub penalty_factor: T,
}

impl<T: Real> Default for InversionOptions<T> {
    fn default() -> Self {
        let h = T::lit(0.5);
        let z = T::zero();
        Self {
            nelder_mead: NelderMeadOptions::default(),
            starts: vec![(z, z), (-h, z), (h, z), (z, -h), (z, h)],
            penalty_factor: T::lit(10.0),
        }
    }
}

impl<T: Real> InversionOptions<T> {
    pub fn single_start(bt: T, st: T) -> Self {
        Self {
            starts: vec![(bt, st)],
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionResult<T> {
    pub estimate: RheoParams<T>,
    /// Unpenalized misfit at the estimate.
    pub objective: T,
    pub iterations: usize,
    pub converged: bool,
    pub relative_error: Option<T>,
    /// Iterates of the winning start, in physical `(B, S)`.
    pub trace: Vec<((T, T), T)>,
    /// Estimate lies on the edge of the trained rectangle.
    pub at_boundary: bool,
    /// Estimated `S` below 0.1, where the solver is stiff.
    pub low_s: bool,
}

/// Norm of the componentwise relative errors in `B` and `S`.
pub fn relative_error<T: Real>(truth: &RheoParams<T>, estimate: &RheoParams<T>) -> T {
    let eb = (truth.b - estimate.b) / truth.b;
    let es = (truth.s - estimate.s) / truth.s;
    (eb * eb + es * es).sqrt()
}

/// Multi-start Nelder-Mead on the misfit in standardized coordinates.
pub fn estimate_params<T: Real>(
    observation: &Observation<T>,
    surrogate: &Surrogate<T>,
    options: &InversionOptions<T>,
) -> Result<InversionResult<T>> {
    if options.starts.is_empty() {
        return Err(Error::InvalidConfig("no start points".into()));
    }
    let mut objective = Misfit::new(surrogate, observation)?;
    let mut best: Option<Minimum<T>> = None;
    for &(bt, st) in &options.starts {
        objective.penalty = T::zero();
        objective.penalty = options.penalty_factor * objective.standard(bt, st);
        let run = nelder_mead(|x| objective.standard(x[0], x[1]), [bt, st], &options.nelder_mead);
        if !run.f.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| run.f < b.f) {
            best = Some(run);
        }
    }
    let best = best.ok_or_else(|| Error::InvalidConfig("objective is not finite at any start".into()))?;

    let one = T::one();
    let bt = best.x[0].max(-one).min(one);
    let st = best.x[1].max(-one).min(one);
    let (b, s) = surrogate.domain.from_standard(bt, st);
    let (b, s) = surrogate.domain.clamp(b, s);
    objective.penalty = T::zero();
    let value = objective.standard(bt, st);
    let estimate = RheoParams::new(b, s, surrogate.n);
    let edge = one - T::lit(1e-6);
    let trace = best
        .trace
        .iter()
        .map(|(x, fx)| (surrogate.domain.from_standard(x[0], x[1]), *fx))
        .collect();
    Ok(InversionResult {
        estimate,
        objective: value,
        iterations: best.iterations,
        converged: best.converged,
        relative_error: observation.known_truth.as_ref().map(|t| relative_error(t, &estimate)),
        trace,
        at_boundary: bt.abs() >= edge || st.abs() >= edge,
        low_s: s < T::lit(0.1),
    })
}

/// What the noise study perturbs and inverts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationSource {
    /// The validation profiles themselves.
    Reference,
    /// Surrogate profiles at the validation inputs.
    Surrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub couple: usize,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "B_estimate")]
    pub b_estimate: Option<f64>,
    #[serde(rename = "S_estimate")]
    pub s_estimate: Option<f64>,
    pub relative_error: Option<f64>,
    pub converged: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub alpha: f64,
    pub summary: Summary,
    pub failures: usize,
    pub not_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseStudy {
    pub seed: u64,
    pub source: ObservationSource,
    /// Always `"std = alpha * h"`.
    pub noise_convention: String,
    /// Indices into the validation set.
    pub couples: Vec<usize>,
    pub rows: Vec<NoiseRow>,
    pub records: Vec<NoiseRecord>,
}

/// Deterministic per-task seed (SplitMix64 finalizer over the task coordinates).
pub fn task_seed(master: u64, couple: usize, alpha_index: usize) -> u64 {
    let mut z = master
        ^ (couple as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (alpha_index as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Picks `count` distinct validation indices, in increasing order.
pub fn sample_couples(len: usize, count: usize, seed: u64) -> Vec<usize> {
    if count >= len {
        return (0..len).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, len, count).into_vec();
    idx.sort_unstable();
    idx
}

/// Inverts noisy copies of validation profiles for every `alpha`.
pub fn noise_study<T: Real>(
    surrogate: &Surrogate<T>,
    validation: &TrainingSet<T>,
    couples: &[usize],
    alphas: &[f64],
    seed: u64,
    source: ObservationSource,
    options: &InversionOptions<T>,
) -> Result<NoiseStudy> {
    if validation.is_empty() {
        return Err(Error::InvalidConfig("empty validation set".into()));
    }
    if let Some(&bad) = couples.iter().find(|&&c| c >= validation.len()) {
        return Err(Error::Shape(format!("couple index {bad} out of range")));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a >= 0.0)) {
        return Err(Error::InvalidConfig(format!("noise intensity {a} must be nonnegative")));
    }
    let tasks: Vec<(usize, usize)> = couples
        .iter()
        .flat_map(|&c| (0..alphas.len()).map(move |a| (c, a)))
        .collect();
    let records: Vec<NoiseRecord> = tasks
        .par_iter()
        .map(|&(c, ai)| {
            let truth = validation.inputs[c];
            let clean = match source {
                ObservationSource::Reference => HeightProfile {
                    h: validation.outputs[c].clone(),
                    t: T::nan(),
                    params: truth,
                    provenance: Provenance::Pde,
                },
                ObservationSource::Surrogate => surrogate.evaluate(&truth)?,
            };
            let spec = NoiseSpec {
                alpha: alphas[ai],
                seed: task_seed(seed, c, ai),
            };
            let obs = Observation::new(add_noise(&clean, &spec), Some(truth));
            let fit = estimate_params(&obs, surrogate, options);
            let (be, se, err, conv) = match &fit {
                Ok(r) => (
                    Some(r.estimate.b.as_f64()),
                    Some(r.estimate.s.as_f64()),
                    r.relative_error.map(Real::as_f64).filter(|e| e.is_finite()),
                    r.converged,
                ),
                Err(_) => (None, None, None, false),
            };
            Ok(NoiseRecord {
                couple: c,
                alpha: alphas[ai],
                b: truth.b.as_f64(),
                s: truth.s.as_f64(),
                b_estimate: be,
                s_estimate: se,
                relative_error: err,
                converged: conv,
                seed: spec.seed,
            })
        })
        .collect::<Result<_>>()?;

    let rows = alphas
        .iter()
        .map(|&alpha| {
            let row: Vec<&NoiseRecord> = records.iter().filter(|r| r.alpha == alpha).collect();
            let errors: Vec<f64> = row.iter().filter_map(|r| r.relative_error).collect();
            NoiseRow {
                alpha,
                summary: summarize(&errors),
                failures: row.len() - errors.len(),
                not_converged: row.iter().filter(|r| !r.converged).count(),
            }
        })
        .collect();
    Ok(NoiseStudy {
        seed,
        source,
        noise_convention: "std = alpha * h".into(),
        couples: couples.to_vec(),
        rows,
        records,
    })
}
