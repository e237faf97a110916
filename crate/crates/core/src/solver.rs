//! Explicit finite-difference integration of the thin-film equation
//! `h_t + q(h, h_x)_x = 0` on `[0, 1]`, from the empty cavity up to the
//! moment the front touches the far wall.
//!
//! Fluxes use centered slopes and an upwind divergence; the inflow node is
//! closed by solving `q(h0, (h1 - h0)/dx) = 1` for `h0` after each interior
//! update. The time step is the minimum of an advective and a diffusive
//! stability bound built from the advection-diffusion form of the flux.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{flux, RheoParams};
use crate::real::Real;

/// Uniform grid on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    nx: usize,
    dx: T,
}

impl<T: Real> Grid<T> {
    pub fn new(nx: usize) -> Result<Self> {
        if nx < 3 {
            return Err(Error::InvalidConfig(format!("grid needs at least 3 nodes, got {nx}")));
        }
        Ok(Self {
            nx,
            dx: T::one() / T::from_usize_lossy(nx - 1),
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn x(&self, i: usize) -> T {
        if i + 1 == self.nx {
            T::one()
        } else {
            T::from_usize_lossy(i) * self.dx
        }
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }
}

/// Where a height profile came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Pde,
    Surrogate,
    Observed,
    Noisy,
}

/// Heights on a uniform grid at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightProfile<T> {
    pub h: Vec<T>,
    pub t: T,
    pub params: RheoParams<T>,
    pub provenance: Provenance,
}

impl<T: Real> HeightProfile<T> {
    pub fn nx(&self) -> usize {
        self.h.len()
    }

    /// Trapezoid-rule volume `∫ h dx`.
    pub fn volume(&self) -> T {
        trapezoid(&self.h)
    }
}

/// Trapezoid integral of nodal values over `[0, 1]`.
pub fn trapezoid<T: Real>(h: &[T]) -> T {
    let m = h.len();
    if m < 2 {
        return T::zero();
    }
    let dx = T::one() / T::from_usize_lossy(m - 1);
    let half = T::lit(0.5);
    let inner: T = h[1..m - 1].iter().copied().sum();
    dx * (inner + half * (h[0] + h[m - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    pub nx: usize,
    /// Diffusive stability constant, `0 < Cd <= 0.5`.
    pub cd: T,
    /// Upper bound on the time step; `None` means `dx`.
    pub dt_max: Option<T>,
    /// Absolute height at the last node that defines wall-touch.
    pub wall_touch_threshold: T,
    pub max_steps: usize,
    /// Doublings allowed when bracketing the inflow-node root.
    pub max_bracket_expansions: usize,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            nx: 301,
            cd: T::lit(0.5),
            dt_max: None,
            wall_touch_threshold: T::lit(1e-8),
            max_steps: 2_000_000_000,
            max_bracket_expansions: 200,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn with_nx(nx: usize) -> Self {
        Self { nx, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cd > T::zero() && self.cd <= T::lit(0.5)) {
            return Err(Error::InvalidConfig(format!(
                "Cd must lie in (0, 0.5], got {}",
                self.cd
            )));
        }
        if !(self.wall_touch_threshold > T::zero()) {
            return Err(Error::InvalidConfig("wall-touch threshold must be positive".into()));
        }
        if let Some(cap) = self.dt_max {
            if !(cap > T::zero()) {
                return Err(Error::InvalidConfig("dt_max must be positive".into()));
            }
        }
        if self.nx < 3 {
            return Err(Error::InvalidConfig(format!(
                "grid needs at least 3 nodes, got {}",
                self.nx
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid<T>> {
        Grid::new(self.nx)
    }

    fn dt_cap(&self, grid: &Grid<T>) -> T {
        self.dt_max.unwrap_or(grid.dx)
    }
}

/// Result of [`run_to_wall_touch`].
#[derive(Debug, Clone)]
pub struct SolverRun<T> {
    pub final_profile: HeightProfile<T>,
    pub wall_touch_time: T,
    pub steps_taken: usize,
    pub dt_min: T,
    pub dt_max: T,
    pub dt_mean: T,
    /// Volume removed by clamping negative undershoots to zero.
    pub clamped_mass: T,
    /// `h[last]` of the state preceding wall-touch.
    pub previous_last: T,
}

/// Nodal fluxes: centered slopes in the interior, `q = 1` at the inflow and
/// `q = 0` at the wall.
pub fn spatial_fluxes<T: Real>(h: &[T], grid: &Grid<T>, params: &RheoParams<T>) -> Vec<T> {
    let mut q = vec![T::zero(); h.len()];
    fill_fluxes(h, grid, params, &mut q);
    q
}

fn fill_fluxes<T: Real>(h: &[T], grid: &Grid<T>, params: &RheoParams<T>, q: &mut [T]) {
    let m = h.len();
    let inv_2dx = T::lit(0.5) / grid.dx;
    q[0] = T::one();
    for i in 1..m - 1 {
        q[i] = if h[i] == T::zero() {
            T::zero()
        } else {
            flux(h[i], (h[i + 1] - h[i - 1]) * inv_2dx, params)
        };
    }
    q[m - 1] = T::zero();
}

/// Advection speed and diffusion coefficient of the flux law at one node.
#[inline]
pub fn transport_coefficients<T: Real>(h: T, hx: T, params: &RheoParams<T>) -> (T, T) {
    let t = FluxLaw::new(params).terms(h, hx);
    (t.v, -t.d)
}

/// Flux, advection speed and (signed positive) diffusion at one node.
#[derive(Debug, Clone, Copy, Default)]
struct NodeTerms<T> {
    q: T,
    v: T,
    d: T,
}

/// Flux law with the `n`-dependent constants hoisted out of the node loop.
#[derive(Debug, Clone, Copy)]
struct FluxLaw<T> {
    b: T,
    s: T,
    n: T,
    inv_n: T,
    newtonian: bool,
    flux_scale: T,
    two_n1: T,
    diff_scale: T,
}

impl<T: Real> FluxLaw<T> {
    fn new(params: &RheoParams<T>) -> Self {
        let one = T::one();
        let n = params.n;
        let two_n1 = n + n + one;
        Self {
            b: params.b,
            s: params.s,
            n,
            inv_n: one / n,
            newtonian: n == one,
            flux_scale: n / ((n + one) * two_n1),
            two_n1,
            diff_scale: one / ((n + one) * two_n1),
        }
    }

    #[inline]
    fn terms(&self, h: T, hx: T) -> NodeTerms<T> {
        let drive = self.s - hx;
        let mag = drive.abs();
        if mag == T::zero() {
            return NodeTerms::default();
        }
        let ratio = self.b / mag;
        let y = h - ratio;
        if !(y > T::zero()) {
            return NodeTerms::default();
        }
        let (drive_pow, y_pow) = if self.newtonian {
            (mag, y)
        } else {
            (mag.powf(self.inv_n), y.powf(self.inv_n))
        };
        let n = self.n;
        let two = T::lit(2.0);
        let common = drive_pow * y_pow;
        let q = common * self.flux_scale * y * (self.two_n1 * h - n * y);
        let v = common * h;
        let d = common / mag
            * self.diff_scale
            * (two * n * h * ratio + (T::one() + n) * h * h + two * n * n * ratio * ratio);
        if drive < T::zero() {
            NodeTerms { q: -q, v: -v, d }
        } else {
            NodeTerms { q, v, d }
        }
    }
}

/// Slope used for the stability estimate: centered inside, one-sided at the ends.
#[inline]
fn stability_slope<T: Real>(h: &[T], i: usize, dx: T) -> T {
    let m = h.len();
    if i == 0 {
        (h[1] - h[0]) / dx
    } else if i == m - 1 {
        (h[m - 1] - h[m - 2]) / dx
    } else {
        (h[i + 1] - h[i - 1]) / (dx + dx)
    }
}

/// Stability-limited time step `min(dx / (2 max|V|), Cd dx^2 / max|D|, dt_max)`.
pub fn stable_dt<T: Real>(h: &[T], grid: &Grid<T>, params: &RheoParams<T>, config: &SolverConfig<T>) -> T {
    let dx = grid.dx;
    let law = FluxLaw::new(params);
    let mut v_max = T::zero();
    let mut d_max = T::zero();
    for i in 0..h.len() {
        if h[i] == T::zero() {
            continue;
        }
        let t = law.terms(h[i], stability_slope(h, i, dx));
        v_max = v_max.max(t.v.abs());
        d_max = d_max.max(t.d.abs());
    }
    combine_dt(v_max, d_max, dx, config, grid)
}

#[inline]
fn combine_dt<T: Real>(v_max: T, d_max: T, dx: T, config: &SolverConfig<T>, grid: &Grid<T>) -> T {
    let mut dt = config.dt_cap(grid);
    if v_max > T::zero() {
        dt = dt.min(dx / (T::lit(2.0) * v_max));
    }
    if d_max > T::zero() {
        dt = dt.min(config.cd * dx * dx / d_max);
    }
    dt
}

/// Inflow-node residual `q(h0, (h1 - h0)/dx) - 1`.
#[inline]
pub fn boundary_residual<T: Real>(h0: T, h1: T, dx: T, params: &RheoParams<T>) -> T {
    flux(h0, (h1 - h0) / dx, params) - T::one()
}

/// Smallest `h0` for which the inflow node is yielded.
pub fn boundary_lower_bound<T: Real>(h1: T, dx: T, params: &RheoParams<T>) -> T {
    let half = (h1 - params.s * dx) * T::lit(0.5);
    let lb = half + (half * half + params.b * dx).sqrt();
    lb.max(T::zero())
}

/// Solves the inflow closure for `h0` given the neighbouring height `h1`.
pub fn solve_h0<T: Real>(h1: T, dx: T, params: &RheoParams<T>) -> Result<T> {
    solve_h0_with_limit(h1, dx, params, SolverConfig::<T>::default().max_bracket_expansions)
}

pub fn solve_h0_with_limit<T: Real>(h1: T, dx: T, params: &RheoParams<T>, max_expansions: usize) -> Result<T> {
    let residual = |h0: T| boundary_residual(h0, h1, dx, params);
    let lower = boundary_lower_bound(h1, dx, params);
    let fail = |expansions| Error::BoundarySolve {
        h1: h1.as_f64(),
        dx: dx.as_f64(),
        lower: lower.as_f64(),
        expansions,
    };

    let mut width = lower.max(dx).max(T::lit(1e-3));
    let mut hi = lower + width;
    let mut r_hi = residual(hi);
    let mut expansions = 0;
    while !(r_hi > T::zero()) {
        if expansions >= max_expansions || !r_hi.is_finite() {
            return Err(fail(expansions));
        }
        width = width + width;
        hi = lower + width;
        r_hi = residual(hi);
        expansions += 1;
    }
    let r_lo = residual(lower);
    if r_lo > T::zero() {
        return Err(fail(expansions));
    }
    Ok(brent(residual, lower, hi, r_lo, r_hi, T::solve_tol() * T::lit(1e-2)))
}

/// Same root as [`solve_h0_with_limit`], bracketed outward from a nearby
/// guess (the previous step's `h0`) instead of from the lower bound.
pub fn solve_h0_near<T: Real>(h1: T, dx: T, params: &RheoParams<T>, guess: T, max_expansions: usize) -> Result<T> {
    let lower = boundary_lower_bound(h1, dx, params);
    if !(guess > lower) || !guess.is_finite() {
        return solve_h0_with_limit(h1, dx, params, max_expansions);
    }
    let residual = |h0: T| boundary_residual(h0, h1, dx, params);
    let r_guess = residual(guess);
    if r_guess == T::zero() {
        return Ok(guess);
    }
    let mut width = (guess * T::lit(1e-5)).max(T::epsilon() * T::lit(16.0));
    let (mut lo, mut hi, mut r_lo, mut r_hi) = (guess, guess, r_guess, r_guess);
    let mut expansions = 0;
    if r_guess < T::zero() {
        while !(r_hi > T::zero()) {
            if expansions >= max_expansions || !r_hi.is_finite() {
                return solve_h0_with_limit(h1, dx, params, max_expansions);
            }
            lo = hi;
            r_lo = r_hi;
            hi = guess + width;
            r_hi = residual(hi);
            width = width + width;
            expansions += 1;
        }
    } else {
        while r_lo > T::zero() {
            hi = lo;
            r_hi = r_lo;
            lo = (guess - width).max(lower);
            r_lo = if lo == lower { -T::one() } else { residual(lo) };
            width = width + width;
        }
    }
    Ok(brent(residual, lo, hi, r_lo, r_hi, T::solve_tol() * T::lit(1e-2)))
}

/// Brent's root finder on a sign-changing bracket. Stops once `|f| <= ftol`
/// or the bracket collapses to floating-point resolution.
fn brent<T: Real>(f: impl Fn(T) -> T, lo: T, hi: T, f_lo: T, f_hi: T, ftol: T) -> T {
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let eps = T::epsilon();
    let (mut a, mut b, mut fa, mut fb) = (lo, hi, f_lo, f_hi);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..300 {
        if (fb > T::zero()) == (fc > T::zero()) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = two * eps * b.abs();
        let m = half * (c - b);
        if fb.abs() <= ftol || m.abs() <= tol || fb == T::zero() {
            return b;
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * m * s;
                q = T::one() - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (two * m * qq * (qq - r) - (b - a) * (r - T::one()));
                q = (qq - T::one()) * (r - T::one()) * (s - T::one());
            }
            if p > T::zero() {
                q = -q;
            } else {
                p = -p;
            }
            let min1 = T::lit(3.0) * m * q - (tol * q).abs();
            let min2 = (e * q).abs();
            if two * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b = if d.abs() > tol {
            b + d
        } else if m > T::zero() {
            b + tol
        } else {
            b - tol
        };
        fb = f(b);
    }
    b
}

/// Reusable stepping state for one `(params, config)` pair.
pub struct Stepper<T> {
    grid: Grid<T>,
    params: RheoParams<T>,
    config: SolverConfig<T>,
    law: FluxLaw<T>,
    q: Vec<T>,
    clamped_mass: T,
}

impl<T: Real> Stepper<T> {
    pub fn new(params: RheoParams<T>, config: SolverConfig<T>) -> Result<Self> {
        config.validate()?;
        params.check_physical()?;
        let grid = config.grid()?;
        Ok(Self {
            grid,
            params,
            config,
            law: FluxLaw::new(&params),
            q: vec![T::zero(); grid.nx],
            clamped_mass: T::zero(),
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn clamped_mass(&self) -> T {
        self.clamped_mass
    }

    /// Advances `h` in place by one stable step and returns the step size.
    pub fn advance(&mut self, h: &mut [T]) -> Result<T> {
        let dx = self.grid.dx;
        let m = h.len();
        let law = self.law;
        let inv_2dx = T::lit(0.5) / dx;
        let mut v_max = T::zero();
        let mut d_max = T::zero();

        // end nodes: one-sided slopes, only for the stability bound
        for (i, hx) in [(0, (h[1] - h[0]) / dx), (m - 1, (h[m - 1] - h[m - 2]) / dx)] {
            if h[i] != T::zero() {
                let t = law.terms(h[i], hx);
                v_max = v_max.max(t.v.abs());
                d_max = d_max.max(t.d.abs());
            }
        }
        self.q[0] = T::one();
        self.q[m - 1] = T::zero();
        for i in 1..m - 1 {
            if h[i] == T::zero() {
                self.q[i] = T::zero();
                continue;
            }
            let t = law.terms(h[i], (h[i + 1] - h[i - 1]) * inv_2dx);
            self.q[i] = t.q;
            v_max = v_max.max(t.v.abs());
            d_max = d_max.max(t.d.abs());
        }
        let dt = combine_dt(v_max, d_max, dx, &self.config, &self.grid);

        let ratio = dt / dx;
        for (hi, q) in h[1..m].iter_mut().zip(self.q.windows(2)) {
            *hi = *hi - ratio * (q[1] - q[0]);
        }
        h[0] = solve_h0_near(h[1], dx, &self.params, h[0], self.config.max_bracket_expansions)?;
        for v in h.iter_mut() {
            if *v < T::zero() {
                self.clamped_mass = self.clamped_mass - *v * dx;
                *v = T::zero();
            }
        }
        Ok(dt)
    }
}

/// One explicit step from `h`; returns the new heights and the step used.
pub fn step<T: Real>(h: &[T], grid: &Grid<T>, params: &RheoParams<T>, config: &SolverConfig<T>) -> Result<(Vec<T>, T)> {
    if grid.nx != h.len() {
        return Err(Error::Shape(format!(
            "state has {} nodes, grid has {}",
            h.len(),
            grid.nx
        )));
    }
    let cfg = SolverConfig { nx: grid.nx, ..*config };
    let mut stepper = Stepper::new(*params, cfg)?;
    let mut next = h.to_vec();
    let dt = stepper.advance(&mut next)?;
    Ok((next, dt))
}

/// State handed to the observer of [`run_with_observer`] after each accepted step.
pub struct StepView<'a, T> {
    pub step: usize,
    pub t: T,
    pub dt: T,
    pub h: &'a [T],
}

pub fn run_to_wall_touch<T: Real>(params: &RheoParams<T>, config: &SolverConfig<T>) -> Result<SolverRun<T>> {
    run_with_observer(params, config, |_| {})
}

/// Integrates from `h = 0` until `h[last]` reaches the wall-touch threshold.
pub fn run_with_observer<T: Real>(
    params: &RheoParams<T>,
    config: &SolverConfig<T>,
    mut observer: impl FnMut(&StepView<'_, T>),
) -> Result<SolverRun<T>> {
    let mut stepper = Stepper::new(*params, *config)?;
    let nx = config.nx;
    let mut h = vec![T::zero(); nx];
    let mut t = T::zero();
    let mut dt_min = T::infinity();
    let mut dt_max = T::zero();
    let mut dt_sum = T::zero();
    let mut previous_last = T::zero();
    let mut steps = 0;
    while h[nx - 1] < config.wall_touch_threshold {
        if steps >= config.max_steps {
            return Err(Error::NoWallTouch {
                steps,
                t: t.as_f64(),
                h_last: h[nx - 1].as_f64(),
            });
        }
        previous_last = h[nx - 1];
        let dt = stepper.advance(&mut h)?;
        steps += 1;
        t = t + dt;
        if !h.iter().all(|v| v.is_finite()) || !dt.is_finite() {
            return Err(Error::Unstable {
                step: steps,
                t: t.as_f64(),
            });
        }
        dt_min = dt_min.min(dt);
        dt_max = dt_max.max(dt);
        dt_sum = dt_sum + dt;
        observer(&StepView {
            step: steps,
            t,
            dt,
            h: &h,
        });
    }
    Ok(SolverRun {
        final_profile: HeightProfile {
            h,
            t,
            params: *params,
            provenance: Provenance::Pde,
        },
        wall_touch_time: t,
        steps_taken: steps,
        dt_min,
        dt_max,
        dt_mean: dt_sum / T::from_usize_lossy(steps.max(1)),
        clamped_mass: stepper.clamped_mass(),
        previous_last,
    })
}

/// One row of a grid-refinement study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow<T> {
    pub nx: usize,
    pub dx: T,
    pub l2_error: T,
    pub wall_touch_time: T,
    pub steps: Option<usize>,
    /// Local order against the previous (coarser) row.
    pub local_order: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy<T> {
    pub params: RheoParams<T>,
    pub nx_ref: usize,
    pub rows: Vec<ConvergenceRow<T>>,
    /// Least-squares slope of `log(error)` against `log(dx)` over rows with nonzero error.
    pub order: Option<T>,
}

/// Continuum L2 distance between a coarse profile and a reference one,
/// sampled at the coarse nodes (coincident nodes when the grids nest,
/// linear interpolation otherwise).
pub fn l2_against_reference<T: Real>(coarse: &[T], reference: &[T]) -> T {
    let nc = coarse.len();
    let sampled = resample_linear(reference, nc);
    let dx = T::one() / T::from_usize_lossy(nc - 1);
    let sq: T = coarse.iter().zip(&sampled).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
    (sq * dx).sqrt()
}

/// Resamples uniform-grid nodal values onto `target` uniform nodes on `[0, 1]`.
pub fn resample_linear<T: Real>(values: &[T], target: usize) -> Vec<T> {
    let m = values.len();
    if m == target {
        return values.to_vec();
    }
    if (m - 1).is_multiple_of(target - 1) {
        let stride = (m - 1) / (target - 1);
        return (0..target).map(|i| values[i * stride]).collect();
    }
    (0..target)
        .map(|i| {
            // position in source index space, exact rational arithmetic on integers
            let num = i * (m - 1);
            let j = num / (target - 1);
            let rem = num % (target - 1);
            if rem == 0 || j + 1 >= m {
                values[j.min(m - 1)]
            } else {
                let w = T::from_usize_lossy(rem) / T::from_usize_lossy(target - 1);
                values[j] * (T::one() - w) + values[j + 1] * w
            }
        })
        .collect()
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope<T: Real>(xs: &[T], ys: &[T]) -> Option<T> {
    if xs.len() < 2 {
        return None;
    }
    let n = T::from_usize_lossy(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let sxy: T = xs.iter().zip(ys).map(|(x, y)| (*x - mx) * (*y - my)).sum();
    let sxx: T = xs.iter().map(|x| (*x - mx) * (*x - mx)).sum();
    if sxx == T::zero() {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Grid-refinement study against a fine reference run. Runs are independent
/// and executed in parallel.
pub fn convergence_study<T: Real>(
    params: &RheoParams<T>,
    nx_list: &[usize],
    nx_ref: usize,
    base: &SolverConfig<T>,
) -> Result<ConvergenceStudy<T>> {
    if let Some(&bad) = nx_list.iter().find(|&&nx| nx > nx_ref) {
        return Err(Error::InvalidConfig(format!(
            "reference grid ({nx_ref}) must be at least as fine as every study grid (got {bad})"
        )));
    }
    let mut all: Vec<usize> = nx_list.to_vec();
    all.push(nx_ref);
    let runs: Vec<Result<SolverRun<T>>> = all
        .par_iter()
        .map(|&nx| run_to_wall_touch(params, &SolverConfig { nx, ..*base }))
        .collect();
    let mut runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let reference = runs.pop().expect("reference run");
    let pairs: Vec<(&HeightProfile<T>, Option<usize>)> =
        runs.iter().map(|r| (&r.final_profile, Some(r.steps_taken))).collect();
    Ok(convergence_from_profiles(params, &reference.final_profile.h, &pairs))
}

/// Hash of a few short canonical runs. Changes whenever the numerics of the
/// solver change, so cached profiles can be invalidated.
pub fn fingerprint() -> String {
    let cases = [
        (10.0, 10.0, 1.0, 21),
        (30.0, 15.0, 0.8, 21),
        (200.0, 0.5, 1.0, 11),
        (2.0, 60.0, 1.2, 16),
    ];
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |x: f64| {
        for byte in x.to_bits().to_le_bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for (b, s, n, nx) in cases {
        match run_to_wall_touch(&RheoParams::new(b, s, n), &SolverConfig::<f64>::with_nx(nx)) {
            Ok(run) => {
                eat(run.wall_touch_time);
                run.final_profile.h.iter().for_each(|&v| eat(v));
            }
            Err(_) => eat(f64::NAN),
        }
    }
    format!("{hash:016x}")
}

/// Convergence table from already computed wall-touch profiles.
pub fn convergence_from_profiles<T: Real>(
    params: &RheoParams<T>,
    reference: &[T],
    runs: &[(&HeightProfile<T>, Option<usize>)],
) -> ConvergenceStudy<T> {
    let mut rows: Vec<ConvergenceRow<T>> = runs
        .iter()
        .map(|&(profile, steps)| ConvergenceRow {
            nx: profile.nx(),
            dx: T::one() / T::from_usize_lossy(profile.nx() - 1),
            l2_error: l2_against_reference(&profile.h, reference),
            wall_touch_time: profile.t,
            steps,
            local_order: None,
        })
        .collect();
    rows.sort_by_key(|r| r.nx);
    for k in 1..rows.len() {
        let (prev, cur) = (rows[k - 1], rows[k]);
        if prev.l2_error > T::zero() && cur.l2_error > T::zero() && prev.dx != cur.dx {
            rows[k].local_order = Some((prev.l2_error / cur.l2_error).ln() / (prev.dx / cur.dx).ln());
        }
    }
    let (xs, ys): (Vec<T>, Vec<T>) = rows
        .iter()
        .filter(|r| r.l2_error > T::zero())
        .map(|r| (r.dx.ln(), r.l2_error.ln()))
        .unzip();
    ConvergenceStudy {
        params: *params,
        nx_ref: reference.len(),
        order: fit_slope(&xs, &ys),
        rows,
    }
}
