//! Nondimensional Herschel-Bulkley lubrication model: flux law, yield
//! surface, physical scaling and the standardized parameter domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Nondimensional rheology triple driving the thin-film equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RheoParams<T> {
    /// Bingham number.
    #[serde(rename = "B")]
    pub b: T,
    /// Slope parameter `tan(phi) / epsilon`.
    #[serde(rename = "S")]
    pub s: T,
    /// Power-law index.
    pub n: T,
}

impl<T: Real> RheoParams<T> {
    pub fn new(b: T, s: T, n: T) -> Self {
        Self { b, s, n }
    }

    /// Checks the parameters are usable by the solver (`B >= 0`, `S > 0`, `n > 0`).
    pub fn check_physical(&self) -> Result<()> {
        let ok = self.b >= T::zero() && self.s > T::zero() && self.n > T::zero();
        let finite = self.b.is_finite() && self.s.is_finite() && self.n.is_finite();
        if ok && finite {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "rheology parameters must satisfy B >= 0, S > 0, n > 0 (got B = {}, S = {}, n = {})",
                self.b, self.s, self.n
            )))
        }
    }
}

/// Yield surface `Y = max(h - B/|S - hx|, 0)`.
///
/// A vanishing driving term `S - hx` gives `Y = 0` (unyielded limit).
#[inline]
pub fn yield_surface<T: Real>(h: T, hx: T, params: &RheoParams<T>) -> T {
    let drive = (params.s - hx).abs();
    if drive == T::zero() {
        return T::zero();
    }
    (h - params.b / drive).max(T::zero())
}

/// Volumetric flux of the lubrication model at height `h` and slope `hx`.
///
/// Exactly zero wherever the yield surface vanishes.
#[inline]
pub fn flux<T: Real>(h: T, hx: T, params: &RheoParams<T>) -> T {
    let drive = params.s - hx;
    let y = yield_surface(h, hx, params);
    if y == T::zero() {
        return T::zero();
    }
    let n = params.n;
    let one = T::one();
    let two_n1 = n + n + one;
    let inv_n = one / n;
    let mag = drive.abs().powf(inv_n) * n * y.powf(one + inv_n) / ((n + one) * two_n1) * (two_n1 * h - n * y);
    if drive < T::zero() {
        -mag
    } else {
        mag
    }
}

/// Dimensional description of an experiment or a field setup (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalSetup<T> {
    /// Yield stress (Pa).
    pub tau_y: T,
    /// Consistency (Pa s^n).
    pub kappa: T,
    /// Density (kg m^-3).
    pub rho: T,
    /// Power-law index.
    pub n: T,
    /// Inclination angle (rad).
    pub phi: T,
    /// Cavity length (m).
    pub length: T,
    /// Transverse width (m).
    pub width: T,
    /// Injected volumetric flow rate (m^3 s^-1).
    pub q0: T,
    /// Gravitational acceleration (m s^-2).
    pub g: T,
}

impl<T: Real> PhysicalSetup<T> {
    pub const DEFAULT_G: f64 = 9.81;

    fn validate(&self) -> Result<()> {
        let positive = [
            ("kappa", self.kappa),
            ("rho", self.rho),
            ("n", self.n),
            ("L", self.length),
            ("W", self.width),
            ("Q0", self.q0),
            ("g", self.g),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidSetup(format!("{name} must be positive, got {v}")));
            }
        }
        // tau_y = 0 is the pure power-law limit and maps to B = 0.
        if !(self.tau_y >= T::zero()) || !self.tau_y.is_finite() {
            return Err(Error::InvalidSetup(format!(
                "tau_y must be nonnegative, got {}",
                self.tau_y
            )));
        }
        let half_pi = T::lit(std::f64::consts::FRAC_PI_2);
        if !(self.phi >= T::zero() && self.phi < half_pi) {
            return Err(Error::InvalidSetup(format!(
                "phi must lie in [0, pi/2), got {}",
                self.phi
            )));
        }
        Ok(())
    }
}

/// Characteristic scales produced by [`nondimensionalize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedScales<T> {
    /// Characteristic height (m).
    pub h0: T,
    /// Characteristic downslope velocity (m s^-1).
    pub u: T,
    /// Characteristic kinematic viscosity (m^2 s^-1).
    pub nu: T,
    /// Aspect ratio `H0 / L`.
    pub epsilon: T,
}

/// Maps a dimensional setup onto `(B, S, n)` and the scales used to get there.
pub fn nondimensionalize<T: Real>(setup: &PhysicalSetup<T>) -> Result<(RheoParams<T>, DerivedScales<T>)> {
    setup.validate()?;
    let one = T::one();
    let n = setup.n;
    let base = setup.kappa * setup.length / (setup.rho * setup.g * setup.phi.cos()) * (setup.q0 / setup.width).powf(n);
    let h0 = base.powf(one / (T::lit(2.0) * (one + n)));
    let u = setup.q0 / (setup.width * h0);
    let nu = setup.kappa / setup.rho * (u / h0).powf(n - one);
    let b = h0 * setup.tau_y / (setup.rho * nu * u);
    let epsilon = h0 / setup.length;
    let s = setup.phi.tan() / epsilon;
    Ok((RheoParams { b, s, n }, DerivedScales { h0, u, nu, epsilon }))
}

/// Affine map between the `(B, S)` rectangle and the standardized square `[-1, 1]^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain<T> {
    pub b_bounds: (T, T),
    pub s_bounds: (T, T),
    /// Offsets subtracted before scaling, `(B, S)`.
    pub offsets: (T, T),
    /// Divisors applied after the offset, `(B, S)`.
    pub divisors: (T, T),
}

impl<T: Real> Default for Domain<T> {
    fn default() -> Self {
        Self::from_bounds((T::lit(0.5), T::lit(250.0)), (T::lit(0.05), T::lit(120.0)))
    }
}

impl<T: Real> Domain<T> {
    /// Midpoint offsets and half-range divisors: the bounds map exactly onto `±1`.
    pub fn from_bounds(b_bounds: (T, T), s_bounds: (T, T)) -> Self {
        let half = T::lit(0.5);
        Self {
            b_bounds,
            s_bounds,
            offsets: ((b_bounds.0 + b_bounds.1) * half, (s_bounds.0 + s_bounds.1) * half),
            divisors: ((b_bounds.1 - b_bounds.0) * half, (s_bounds.1 - s_bounds.0) * half),
        }
    }

    pub fn contains(&self, b: T, s: T) -> bool {
        b >= self.b_bounds.0 && b <= self.b_bounds.1 && s >= self.s_bounds.0 && s <= self.s_bounds.1
    }

    /// Checked standardization; fails naming the violated bound.
    pub fn standardize(&self, b: T, s: T) -> Result<(T, T)> {
        check_bound("B", b, self.b_bounds)?;
        check_bound("S", s, self.s_bounds)?;
        Ok(self.to_standard(b, s))
    }

    /// Unchecked standardization (extrapolates outside the rectangle).
    #[inline]
    pub fn to_standard(&self, b: T, s: T) -> (T, T) {
        (
            (b - self.offsets.0) / self.divisors.0,
            (s - self.offsets.1) / self.divisors.1,
        )
    }

    #[inline]
    pub fn from_standard(&self, bt: T, st: T) -> (T, T) {
        (
            bt * self.divisors.0 + self.offsets.0,
            st * self.divisors.1 + self.offsets.1,
        )
    }

    /// Projects `(B, S)` onto the rectangle.
    pub fn clamp(&self, b: T, s: T) -> (T, T) {
        (
            b.max(self.b_bounds.0).min(self.b_bounds.1),
            s.max(self.s_bounds.0).min(self.s_bounds.1),
        )
    }
}

fn check_bound<T: Real>(name: &'static str, v: T, (lo, hi): (T, T)) -> Result<()> {
    if v >= lo && v <= hi {
        Ok(())
    } else {
        Err(Error::OutOfDomain {
            name,
            value: v.as_f64(),
            lo: lo.as_f64(),
            hi: hi.as_f64(),
        })
    }
}

/// Standardizes `(B, S)` over the default training rectangle `[0.5, 250] x [0.05, 120]`.
pub fn standardize<T: Real>(params: &RheoParams<T>) -> Result<(T, T)> {
    Domain::default().standardize(params.b, params.s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p(b: f64, s: f64, n: f64) -> RheoParams<f64> {
        RheoParams::new(b, s, n)
    }

    #[test]
    fn yield_surface_examples() {
        assert_eq!(yield_surface(0.0, 0.0, &p(3.0, 2.0, 1.0)), 0.0);
        assert_relative_eq!(yield_surface(1.0, 0.0, &p(1.0, 2.0, 1.0)), 0.5);
        assert_eq!(yield_surface(1.0, 0.0, &p(100.0, 1.0, 1.0)), 0.0);
        // zero driving term
        assert_eq!(yield_surface(5.0, 2.0, &p(1.0, 2.0, 1.0)), 0.0);
    }

    #[test]
    fn flux_examples() {
        assert_eq!(flux(0.0, 0.3, &p(1.0, 2.0, 0.8)), 0.0);
        // 2 * (0.25 / 6) * 2.5
        let expected = 2.0 * (0.25 / 6.0) * 2.5;
        assert_relative_eq!(flux(1.0, 0.0, &p(1.0, 2.0, 1.0)), expected, max_relative = 1e-15);
        assert_relative_eq!(flux(1.0, 4.0, &p(1.0, 2.0, 1.0)), -expected, max_relative = 1e-15);
    }

    #[test]
    fn pure_power_law_limit() {
        // B = 0: Y = h and q = |S|^{1/n} n h^{2+1/n} / (2n+1)
        let (h, s, n) = (0.7, 1.5, 0.6);
        let q = flux(h, 0.0, &p(0.0, s, n));
        let expected = s.powf(1.0 / n) * n * h.powf(2.0 + 1.0 / n) / (2.0 * n + 1.0);
        assert_relative_eq!(q, expected, max_relative = 1e-13);
    }

    #[test]
    fn flux_in_f32() {
        let q = flux(1.0f32, 0.0, &RheoParams::new(1.0f32, 2.0, 1.0));
        assert!((q - 0.208_333_33).abs() < 1e-6);
    }

    fn setup() -> PhysicalSetup<f64> {
        PhysicalSetup {
            tau_y: 200.0,
            kappa: 10.0,
            rho: 2000.0,
            n: 1.0,
            phi: 0.1,
            length: 1.0,
            width: 0.2,
            q0: 1e-4,
            g: 9.81,
        }
    }

    #[test]
    fn nondimensionalize_matches_scripted_evaluation() {
        // Values computed independently in Python:
        //   H0 = (kappa L / (rho g cos phi) * (Q0/W)^n)^(1/(2(1+n)))
        //   U = Q0/(W H0), nu = kappa/rho (U/H0)^(n-1)
        //   B = H0 tau_y / (rho nu U), S = tan(phi) / (H0/L)
        let (params, scales) = nondimensionalize(&setup()).unwrap();
        assert_relative_eq!(scales.h0, 0.022_496_322_310_213_53, max_relative = 1e-12);
        assert_relative_eq!(scales.u, 0.022_225_855_102_235_778, max_relative = 1e-12);
        assert_relative_eq!(scales.nu, 0.005, max_relative = 1e-12);
        assert_relative_eq!(params.b, 20.243_380_699_400_443, max_relative = 1e-12);
        assert_relative_eq!(params.s, 4.460_047_767_003_13, max_relative = 1e-12);
        assert_eq!(scales.epsilon, scales.h0 / 1.0);
    }

    #[test]
    fn nondimensionalize_trivial_cases() {
        let mut s = setup();
        s.phi = 0.0;
        assert_eq!(nondimensionalize(&s).unwrap().0.s, 0.0);
        let mut s = setup();
        s.tau_y = 0.0;
        assert_eq!(nondimensionalize(&s).unwrap().0.b, 0.0);
    }

    #[test]
    fn nondimensionalize_rejects_bad_input() {
        let mut s = setup();
        s.phi = std::f64::consts::FRAC_PI_2;
        assert!(matches!(nondimensionalize(&s), Err(Error::InvalidSetup(_))));
        let mut s = setup();
        s.rho = 0.0;
        assert!(nondimensionalize(&s).is_err());
        let mut s = setup();
        s.width = -1.0;
        assert!(nondimensionalize(&s).is_err());
    }

    #[test]
    fn doubling_flow_rate_scales_height() {
        let (_, a) = nondimensionalize(&setup()).unwrap();
        let mut s = setup();
        s.q0 *= 2.0;
        let (_, b) = nondimensionalize(&s).unwrap();
        assert_relative_eq!(b.h0 / a.h0, 2f64.powf(0.25), max_relative = 1e-14);
    }

    #[test]
    fn standardize_examples() {
        let d = Domain::<f64>::default();
        assert_eq!(d.standardize(125.25, 60.025).unwrap(), (0.0, 0.0));
        assert_eq!(d.standardize(250.0, 120.0).unwrap(), (1.0, 1.0));
        assert_eq!(d.standardize(0.5, 0.05).unwrap(), (-1.0, -1.0));
        match standardize(&p(300.0, 1.0, 1.0)) {
            Err(Error::OutOfDomain { name, .. }) => assert_eq!(name, "B"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            standardize(&p(10.0, 0.01, 1.0)),
            Err(Error::OutOfDomain { name: "S", .. })
        ));
    }

    proptest! {
        #[test]
        fn yield_surface_bounded(h in 0.0..50.0f64, hx in -100.0..100.0f64,
                                 b in 0.0..250.0f64, s in 0.05..120.0f64, n in 0.2..1.2f64) {
            let y = yield_surface(h, hx, &p(b, s, n));
            prop_assert!(y >= 0.0 && y <= h);
        }

        #[test]
        fn flux_is_odd_in_driving_term(h in 0.0..20.0f64, d in -50.0..50.0f64,
                                       b in 0.0..250.0f64, s in 0.05..120.0f64, n in 0.2..1.2f64) {
            // S - hx = d versus S - hx = -d
            let fwd = flux(h, s - d, &p(b, s, n));
            let rev = flux(h, s + d, &p(b, s, n));
            prop_assert!((fwd + rev).abs() <= 1e-12 * fwd.abs().max(1.0));
        }

        #[test]
        fn flux_vanishes_iff_unyielded(h in 1e-3..20.0f64, hx in -100.0..100.0f64,
                                       b in 0.0..250.0f64, s in 0.05..120.0f64, n in 0.2..1.2f64) {
            let params = p(b, s, n);
            let y = yield_surface(h, hx, &params);
            let q = flux(h, hx, &params);
            prop_assert_eq!(y == 0.0, q == 0.0);
        }

        #[test]
        fn standardize_round_trip(b in 0.5..250.0f64, s in 0.05..120.0f64) {
            let d = Domain::<f64>::default();
            let (bt, st) = d.standardize(b, s).unwrap();
            prop_assert!(bt.abs() <= 1.0 && st.abs() <= 1.0);
            let (b2, s2) = d.from_standard(bt, st);
            prop_assert!((b2 - b).abs() <= 1e-13 * b.max(1.0));
            prop_assert!((s2 - s).abs() <= 1e-13 * s.max(1.0));
        }
    }
}
