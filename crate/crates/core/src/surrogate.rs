//! PCE-PCA metamodel of the wall-touch profile over the `(B, S)` rectangle.
//!
//! Outputs are reduced by PCA, the leading principal components are fitted by
//! Legendre polynomial chaos in the standardized inputs, and the remaining
//! components are frozen at their sample means.

use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, least_squares, symmetric_eigen, Matrix};
use crate::model::{Domain, RheoParams};
use crate::real::Real;
use crate::solver::{HeightProfile, Provenance};
use crate::stats::{summarize, Summary};

pub const FORMAT_VERSION: u32 = 1;

/// Legendre polynomial `P_k(x)` by the three-term recurrence.
pub fn legendre_eval<T: Real>(k: usize, x: T) -> T {
    let mut prev = T::one();
    if k == 0 {
        return prev;
    }
    let mut cur = x;
    for j in 1..k {
        let jj = T::from_usize_lossy(j);
        let next = ((jj + jj + T::one()) * x * cur - jj * prev) / (jj + T::one());
        prev = cur;
        cur = next;
    }
    cur
}

/// Writes `P_0(x), ..., P_kmax(x)` into `out`.
pub fn legendre_table<T: Real>(kmax: usize, x: T, out: &mut Vec<T>) {
    out.clear();
    out.push(T::one());
    if kmax == 0 {
        return;
    }
    out.push(x);
    for j in 1..kmax {
        let jj = T::from_usize_lossy(j);
        let next = ((jj + jj + T::one()) * x * out[j] - jj * out[j - 1]) / (jj + T::one());
        out.push(next);
    }
}

/// Number of bivariate terms of total degree at most `beta`.
pub fn term_count(beta: usize) -> usize {
    (beta + 1) * (beta + 2) / 2
}

/// Total-degree multi-indices `(a, b)`, `a + b <= beta`, graded by total degree
/// and, within a degree, by decreasing first index.
pub fn multi_indices(beta: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(term_count(beta));
    for d in 0..=beta {
        for a in (0..=d).rev() {
            out.push((a, d - a));
        }
    }
    out
}

/// `psi_(a,b)(bt, st) = P_a(bt) P_b(st)` in the order of `indices`.
pub fn basis_eval<T: Real>(indices: &[(usize, usize)], bt: T, st: T) -> Vec<T> {
    let mut out = Vec::with_capacity(indices.len());
    basis_into(indices, bt, st, &mut Vec::new(), &mut Vec::new(), &mut out);
    out
}

fn basis_into<T: Real>(indices: &[(usize, usize)], bt: T, st: T, pb: &mut Vec<T>, ps: &mut Vec<T>, out: &mut Vec<T>) {
    let kmax = indices.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(0);
    legendre_table(kmax, bt, pb);
    legendre_table(kmax, st, ps);
    out.clear();
    out.extend(indices.iter().map(|&(a, b)| pb[a] * ps[b]));
}

/// Simulation inputs and their wall-touch outputs at one power index.
#[derive(Debug, Clone)]
pub struct TrainingSet<T> {
    pub inputs: Vec<RheoParams<T>>,
    pub outputs: Vec<Vec<T>>,
    pub metadata: TrainingMetadata,
}

/// Provenance of a training set, stored with the trained surrogate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub grid_kind: String,
    pub grid_shape: Vec<usize>,
    pub seed: Option<u64>,
    pub solver: serde_json::Value,
}

impl<T: Real> TrainingSet<T> {
    pub fn new(inputs: Vec<RheoParams<T>>, outputs: Vec<Vec<T>>, metadata: TrainingMetadata) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        let nx = outputs.first().map_or(0, Vec::len);
        if outputs.iter().any(|o| o.len() != nx) {
            return Err(Error::Shape("outputs of unequal length".into()));
        }
        if let Some(first) = inputs.first() {
            if inputs.iter().any(|p| p.n != first.n) {
                return Err(Error::Shape("inputs mix several power indices".into()));
            }
        }
        Ok(Self {
            inputs,
            outputs,
            metadata,
        })
    }

    pub fn from_profiles(profiles: &[HeightProfile<T>], metadata: TrainingMetadata) -> Result<Self> {
        Self::new(
            profiles.iter().map(|p| p.params).collect(),
            profiles.iter().map(|p| p.h.clone()).collect(),
            metadata,
        )
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn nx(&self) -> usize {
        self.outputs.first().map_or(0, Vec::len)
    }

    pub fn n(&self) -> Option<T> {
        self.inputs.first().map(|p| p.n)
    }
}

/// Principal component basis of the centered outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel<T> {
    /// Row `k` is the unit direction of component `k`.
    pub directions: Matrix<T>,
    pub mean: Vec<T>,
    /// Sample means of the component scores.
    pub pc_means: Vec<T>,
    /// Covariance eigenvalues, nonincreasing and clipped at zero.
    pub explained_variance: Vec<T>,
    /// Index of the last retained component.
    pub p: usize,
}

impl<T: Real> PcaModel<T> {
    pub fn retained(&self) -> usize {
        self.p + 1
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Scores of every component for one output vector.
    pub fn project(&self, y: &[T]) -> Vec<T> {
        let m = self.dim();
        (0..m)
            .map(|k| {
                self.directions
                    .row(k)
                    .iter()
                    .zip(y.iter().zip(&self.mean))
                    .map(|(&phi, (&yi, &mi))| phi * (yi - mi))
                    .sum()
            })
            .collect()
    }

    /// Inverse transform of a full score vector.
    pub fn reconstruct(&self, scores: &[T]) -> Vec<T> {
        let mut out = self.mean.clone();
        for (k, &a) in scores.iter().enumerate() {
            for (o, &phi) in out.iter_mut().zip(self.directions.row(k)) {
                *o = *o + a * phi;
            }
        }
        out
    }

    /// Cumulative fraction of the total variance captured by components `0..=k`.
    pub fn cumulative_explained_ratio(&self) -> Vec<T> {
        let total: T = self.explained_variance.iter().copied().sum();
        let mut acc = T::zero();
        self.explained_variance
            .iter()
            .map(|&v| {
                acc = acc + v;
                if total > T::zero() {
                    acc / total
                } else {
                    T::one()
                }
            })
            .collect()
    }

    /// Mean vector plus the frozen components `k > p` at their score means.
    fn frozen_offset(&self) -> Vec<T> {
        let mut out = self.mean.clone();
        for k in self.retained()..self.dim() {
            let a = self.pc_means[k];
            for (o, &phi) in out.iter_mut().zip(self.directions.row(k)) {
                *o = *o + a * phi;
            }
        }
        out
    }
}

/// PCA of the sample covariance (`1/(r-1)` normalization), keeping `p + 1` components.
pub fn fit_pca<T: Real>(outputs: &[Vec<T>], p: usize) -> Result<PcaModel<T>> {
    let r = outputs.len();
    let m = outputs.first().map_or(0, Vec::len);
    if r < 2 {
        return Err(Error::InvalidConfig(format!("PCA needs at least 2 samples, got {r}")));
    }
    if outputs.iter().any(|o| o.len() != m) {
        return Err(Error::Shape("outputs of unequal length".into()));
    }
    if p + 1 > r.min(m) {
        return Err(Error::InvalidConfig(format!(
            "cannot retain {} components from {r} samples of dimension {m}",
            p + 1
        )));
    }
    let rf = T::from_usize_lossy(r);
    let mut mean = vec![T::zero(); m];
    for o in outputs {
        for (acc, &v) in mean.iter_mut().zip(o) {
            *acc = *acc + v;
        }
    }
    for v in &mut mean {
        *v = *v / rf;
    }
    let centered: Vec<Vec<T>> = outputs
        .iter()
        .map(|o| o.iter().zip(&mean).map(|(&v, &mu)| v - mu).collect())
        .collect();

    let mut cov = Matrix::zeros(m, m);
    for c in &centered {
        for i in 0..m {
            let ci = c[i];
            if ci == T::zero() {
                continue;
            }
            for j in 0..=i {
                cov[(i, j)] = cov[(i, j)] + ci * c[j];
            }
        }
    }
    let denom = T::from_usize_lossy(r - 1);
    for i in 0..m {
        for j in 0..=i {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let total: T = (0..m).map(|i| cov[(i, i)]).sum();
    let (mut directions, explained_variance) = if total <= T::zero() {
        warn!("training outputs have zero variance; the surrogate reduces to the sample mean");
        (Matrix::identity(m), vec![T::zero(); m])
    } else {
        let eig = symmetric_eigen(&cov)?;
        let ev = eig.values.iter().map(|&v| v.max(T::zero())).collect();
        (eig.vectors, ev)
    };
    for k in 0..m {
        let row = &mut directions.data[k * m..(k + 1) * m];
        if let Some(&first) = row.iter().find(|v| **v != T::zero()) {
            if first < T::zero() {
                row.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }

    let mut pca = PcaModel {
        directions,
        mean,
        pc_means: vec![T::zero(); m],
        explained_variance,
        p,
    };
    let mut pc_means = vec![T::zero(); m];
    for o in outputs {
        for (acc, a) in pc_means.iter_mut().zip(pca.project(o)) {
            *acc = *acc + a;
        }
    }
    pca.pc_means = pc_means.into_iter().map(|v| v / rf).collect();
    Ok(pca)
}

/// Polynomial chaos coefficients, one row per fitted target.
#[derive(Debug, Clone, PartialEq)]
pub struct PceModel<T> {
    pub beta: usize,
    pub multi_indices: Vec<(usize, usize)>,
    /// `targets x terms`.
    pub coefficients: Matrix<T>,
    /// Training RMS residual per target.
    pub residual_rms: Vec<T>,
    /// 2-norm condition number of the design matrix.
    pub condition_number: T,
}

impl<T: Real> PceModel<T> {
    pub fn predict_into(&self, basis: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend((0..self.coefficients.rows).map(|k| {
            self.coefficients
                .row(k)
                .iter()
                .zip(basis)
                .map(|(&c, &psi)| c * psi)
                .sum::<T>()
        }));
    }
}

/// Least-squares PCE fit of each target column over standardized points.
///
/// `targets[k][j]` is target `k` at point `j`.
pub fn fit_pce<T: Real>(points: &[(T, T)], targets: &[Vec<T>], beta: usize) -> Result<PceModel<T>> {
    let r = points.len();
    let indices = multi_indices(beta);
    let l = indices.len();
    if r < l {
        return Err(Error::UnderDetermined { samples: r, terms: l });
    }
    if targets.iter().any(|t| t.len() != r) {
        return Err(Error::Shape(format!("targets must have {r} values")));
    }
    let mut design = Matrix::zeros(r, l);
    for (j, &(bt, st)) in points.iter().enumerate() {
        let row = basis_eval(&indices, bt, st);
        design.data[j * l..(j + 1) * l].copy_from_slice(&row);
    }
    let mut rhs = Matrix::zeros(r, targets.len());
    for (k, t) in targets.iter().enumerate() {
        for (j, &v) in t.iter().enumerate() {
            rhs[(j, k)] = v;
        }
    }
    let ls = least_squares(&design, &rhs)?;
    let rf = T::from_usize_lossy(r);
    Ok(PceModel {
        beta,
        multi_indices: indices,
        coefficients: ls.solution.transpose(),
        residual_rms: ls.residual_norms.iter().map(|&e| (e * e / rf).sqrt()).collect(),
        condition_number: condition_number(&ls.r),
    })
}

/// Output reduction used before the chaos expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    /// Keep components `0..=p`.
    Pca { p: usize },
    /// Fit every output node separately.
    None,
}

/// Trained metamodel; immutable once built.
#[derive(Debug, Clone)]
pub struct Surrogate<T> {
    pub n: T,
    pub nx: usize,
    pub domain: Domain<T>,
    pub pca: Option<PcaModel<T>>,
    pub pce: PceModel<T>,
    pub metadata: TrainingMetadata,
    offset: Vec<T>,
}

impl<T: Real> PartialEq for Surrogate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.nx == other.nx
            && self.domain == other.domain
            && self.pca == other.pca
            && self.pce == other.pce
            && self.metadata == other.metadata
    }
}

impl<T: Real> Surrogate<T> {
    pub fn new(
        n: T,
        domain: Domain<T>,
        pca: Option<PcaModel<T>>,
        pce: PceModel<T>,
        metadata: TrainingMetadata,
    ) -> Result<Self> {
        let nx = match &pca {
            Some(pca) => {
                if pce.coefficients.rows != pca.retained() {
                    return Err(Error::Shape(format!(
                        "{} coefficient rows for {} retained components",
                        pce.coefficients.rows,
                        pca.retained()
                    )));
                }
                pca.dim()
            }
            None => pce.coefficients.rows,
        };
        if pce.coefficients.cols != pce.multi_indices.len() {
            return Err(Error::Shape("coefficient columns do not match the basis".into()));
        }
        let offset = pca.as_ref().map_or_else(Vec::new, PcaModel::frozen_offset);
        Ok(Self {
            n,
            nx,
            domain,
            pca,
            pce,
            metadata,
            offset,
        })
    }

    /// Fits the reduction and the chaos expansion on `training`.
    pub fn train(training: &TrainingSet<T>, domain: Domain<T>, beta: usize, reduction: Reduction) -> Result<Self> {
        let n = training
            .n()
            .ok_or_else(|| Error::InvalidConfig("empty training set".into()))?;
        let points: Vec<(T, T)> = training.inputs.iter().map(|p| domain.to_standard(p.b, p.s)).collect();
        let r = training.len();
        let (pca, targets) = match reduction {
            Reduction::Pca { p } => {
                let pca = fit_pca(&training.outputs, p)?;
                let mut targets = vec![Vec::with_capacity(r); pca.retained()];
                for o in &training.outputs {
                    for (t, a) in targets.iter_mut().zip(pca.project(o)) {
                        t.push(a);
                    }
                }
                (Some(pca), targets)
            }
            Reduction::None => {
                let nx = training.nx();
                let targets = (0..nx)
                    .map(|i| training.outputs.iter().map(|o| o[i]).collect())
                    .collect();
                (None, targets)
            }
        };
        let pce = fit_pce(&points, &targets, beta)?;
        Self::new(n, domain, pca, pce, training.metadata.clone())
    }

    pub fn beta(&self) -> usize {
        self.pce.beta
    }

    /// Last retained component index, `None` without PCA.
    pub fn p(&self) -> Option<usize> {
        self.pca.as_ref().map(|p| p.p)
    }

    /// Profile at standardized coordinates; no domain or index checks.
    pub fn evaluate_standard(&self, bt: T, st: T) -> Vec<T> {
        let mut scratch = Scratch::default();
        let mut out = Vec::with_capacity(self.nx);
        self.evaluate_standard_into(bt, st, &mut scratch, &mut out);
        out
    }

    pub(crate) fn evaluate_standard_into(&self, bt: T, st: T, scratch: &mut Scratch<T>, out: &mut Vec<T>) {
        basis_into(
            &self.pce.multi_indices,
            bt,
            st,
            &mut scratch.pb,
            &mut scratch.ps,
            &mut scratch.basis,
        );
        match &self.pca {
            Some(pca) => {
                self.pce.predict_into(&scratch.basis, &mut scratch.theta);
                out.clear();
                out.extend_from_slice(&self.offset);
                for (k, &a) in scratch.theta.iter().enumerate() {
                    for (o, &phi) in out.iter_mut().zip(pca.directions.row(k)) {
                        *o = *o + a * phi;
                    }
                }
            }
            None => self.pce.predict_into(&scratch.basis, out),
        }
    }

    /// Surrogate wall-touch profile at `params`. The surrogate does not model
    /// the wall-touch time, so `t` is zero.
    pub fn evaluate(&self, params: &RheoParams<T>) -> Result<HeightProfile<T>> {
        if params.n != self.n {
            return Err(Error::IndexMismatch {
                trained: self.n.as_f64(),
                requested: params.n.as_f64(),
            });
        }
        if !self.domain.contains(params.b, params.s) {
            warn!(
                "evaluating the surrogate outside its domain at B = {}, S = {}",
                params.b, params.s
            );
        }
        let (bt, st) = self.domain.to_standard(params.b, params.s);
        Ok(HeightProfile {
            h: self.evaluate_standard(bt, st),
            t: T::zero(),
            params: *params,
            provenance: Provenance::Surrogate,
        })
    }

    /// Reconstruction errors `||surrogate - reference||_2` over a validation set.
    pub fn validate(&self, validation: &TrainingSet<T>) -> Result<ValidationReport> {
        if validation.nx() != self.nx && !validation.is_empty() {
            return Err(Error::Shape(format!(
                "validation profiles have {} nodes, surrogate has {}",
                validation.nx(),
                self.nx
            )));
        }
        let mut errors = Vec::with_capacity(validation.len());
        for (p, y) in validation.inputs.iter().zip(&validation.outputs) {
            let fit = self.evaluate(p)?;
            errors.push(l2_distance(&fit.h, y).as_f64());
        }
        let summary = summarize(&errors);
        let points = validation.inputs.iter().map(|p| (p.b.as_f64(), p.s.as_f64())).collect();
        Ok(ValidationReport {
            errors,
            points,
            summary,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SurrogateFile::from_model(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<SurrogateFile>(text)?.into_model()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Reusable buffers for repeated evaluations.
#[derive(Debug, Clone, Default)]
pub(crate) struct Scratch<T> {
    pb: Vec<T>,
    ps: Vec<T>,
    basis: Vec<T>,
    theta: Vec<T>,
}

/// Euclidean distance between two profiles.
pub fn l2_distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

/// Per-sample reconstruction errors and their summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<f64>,
    /// `(B, S)` of each sample.
    pub points: Vec<(f64, f64)>,
    pub summary: Summary,
}

impl ValidationReport {
    /// Samples in the top decile of error, largest first.
    pub fn worst_decile(&self) -> Vec<((f64, f64), f64)> {
        let mut idx: Vec<usize> = (0..self.errors.len()).collect();
        idx.sort_by(|&i, &j| self.errors[j].total_cmp(&self.errors[i]));
        let k = self.errors.len().div_ceil(10);
        idx.into_iter()
            .take(k)
            .map(|i| (self.points[i], self.errors[i]))
            .collect()
    }
}

fn num<T: Real>(x: T) -> String {
    x.to_string()
}

fn nums<T: Real>(xs: &[T]) -> Vec<String> {
    xs.iter().map(|&x| num(x)).collect()
}

fn parse<T: Real>(s: &str) -> Result<T> {
    s.parse::<T>()
        .map_err(|_| Error::Parse(format!("invalid number {s:?}")))
}

fn parse_all<T: Real>(xs: &[String]) -> Result<Vec<T>> {
    xs.iter().map(|s| parse(s)).collect()
}

fn parse_pair<T: Real>(xs: &[String; 2]) -> Result<(T, T)> {
    Ok((parse(&xs[0])?, parse(&xs[1])?))
}

#[derive(Serialize, Deserialize)]
struct DomainFile {
    #[serde(rename = "B_bounds")]
    b_bounds: [String; 2],
    #[serde(rename = "S_bounds")]
    s_bounds: [String; 2],
    offsets: [String; 2],
    divisors: [String; 2],
}

#[derive(Serialize, Deserialize)]
struct PcaFile {
    mean: Vec<String>,
    directions: Vec<String>,
    pc_means: Vec<String>,
    explained_variance: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SurrogateFile {
    format_version: u32,
    n: String,
    nx: usize,
    domain: DomainFile,
    beta: usize,
    p: Option<usize>,
    multi_indices: Vec<(usize, usize)>,
    coefficient_rows: usize,
    coefficients: Vec<String>,
    residual_rms: Vec<String>,
    condition_number: String,
    pca: Option<PcaFile>,
    training_metadata: TrainingMetadata,
}

impl SurrogateFile {
    fn from_model<T: Real>(s: &Surrogate<T>) -> Self {
        let d = &s.domain;
        Self {
            format_version: FORMAT_VERSION,
            n: num(s.n),
            nx: s.nx,
            domain: DomainFile {
                b_bounds: [num(d.b_bounds.0), num(d.b_bounds.1)],
                s_bounds: [num(d.s_bounds.0), num(d.s_bounds.1)],
                offsets: [num(d.offsets.0), num(d.offsets.1)],
                divisors: [num(d.divisors.0), num(d.divisors.1)],
            },
            beta: s.pce.beta,
            p: s.p(),
            multi_indices: s.pce.multi_indices.clone(),
            coefficient_rows: s.pce.coefficients.rows,
            coefficients: nums(&s.pce.coefficients.data),
            residual_rms: nums(&s.pce.residual_rms),
            condition_number: num(s.pce.condition_number),
            pca: s.pca.as_ref().map(|p| PcaFile {
                mean: nums(&p.mean),
                directions: nums(&p.directions.data),
                pc_means: nums(&p.pc_means),
                explained_variance: nums(&p.explained_variance),
            }),
            training_metadata: s.metadata.clone(),
        }
    }

    fn into_model<T: Real>(self) -> Result<Surrogate<T>> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported surrogate format {}",
                self.format_version
            )));
        }
        let domain = Domain {
            b_bounds: parse_pair(&self.domain.b_bounds)?,
            s_bounds: parse_pair(&self.domain.s_bounds)?,
            offsets: parse_pair(&self.domain.offsets)?,
            divisors: parse_pair(&self.domain.divisors)?,
        };
        let l = self.multi_indices.len();
        let coefficients = parse_all::<T>(&self.coefficients)?;
        if coefficients.len() != self.coefficient_rows * l {
            return Err(Error::Shape("coefficient count does not match rows x terms".into()));
        }
        let pce = PceModel {
            beta: self.beta,
            multi_indices: self.multi_indices,
            coefficients: Matrix {
                rows: self.coefficient_rows,
                cols: l,
                data: coefficients,
            },
            residual_rms: parse_all(&self.residual_rms)?,
            condition_number: parse(&self.condition_number)?,
        };
        let pca = match (self.pca, self.p) {
            (Some(f), Some(p)) => {
                let m = f.mean.len();
                let data = parse_all::<T>(&f.directions)?;
                if data.len() != m * m || f.pc_means.len() != m || f.explained_variance.len() != m {
                    return Err(Error::Shape("PCA arrays do not match the output dimension".into()));
                }
                Some(PcaModel {
                    directions: Matrix { rows: m, cols: m, data },
                    mean: parse_all(&f.mean)?,
                    pc_means: parse_all(&f.pc_means)?,
                    explained_variance: parse_all(&f.explained_variance)?,
                    p,
                })
            }
            (None, None) => None,
            _ => return Err(Error::Parse("PCA block and p must be given together".into())),
        };
        let s = Surrogate::new(parse(&self.n)?, domain, pca, pce, self.training_metadata)?;
        if s.nx != self.nx {
            return Err(Error::Shape(format!(
                "nx = {} but the model produces {}",
                self.nx, s.nx
            )));
        }
        Ok(s)
    }
}
