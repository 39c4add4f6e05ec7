//! Poincaré-type inequalities in variable-exponent spaces: the counterexample
//! showing that the symmetric-gradient space does not embed into
//! `L^{p(·,·)}`, and calibrated checks of the repaired Poincaré, Korn,
//! Gagliardo-Nirenberg and parabolic interpolation inequalities.
//!
//! The counterexample is `u(t, x) = φ(t) η(|x|) e₁` on `Ω = B_R`, where
//! `η = χ_{B₁} ∗ ω_ε` is a mollified indicator, `φ(t) = t^a` and the exponent
//! equals `p⁺` on the plateau `G` (where `η ≡ 1`) and `p⁻` on the annulus
//! where `η` drops to zero.
//! Since `φ ∈ L^{p⁻} \ L^{p⁺}`, the gradient modular stays finite while
//! `ρ_p(u)` grows like `ln(1/τ)` under truncation `φ_τ = φ χ_{[τ, T]}`.
//!
//! Everything rotationally symmetric is integrated in polar coordinates.
//! Constants that the theory leaves implicit are fitted on a calibration set,
//! multiplied by [`CALIBRATION_SAFETY`] and frozen before a disjoint
//! validation set is checked.

use crate::exponent::{parabolic_star, ExponentField, ScalarFn, SpaceTimeBox};
use crate::mesh::{build_mesh_hierarchy, Domain, FEFunction, MeshLevel};
use crate::models::CALIBRATION_SAFETY;
use crate::quadrature::{gauss_legendre_interval, TriangleRule};
use crate::sampling::{self, SweepRng};
use crate::spaces::{modular, powp};
use crate::tensor::SymTensor2;
use crate::{Error, Result};
use rand::Rng;
use std::f64::consts::{LN_10, TAU};
use std::fmt;
use std::sync::Arc;

/// Number of radial samples in the tabulated `η` profile.
pub const PROFILE_SAMPLES: usize = 4096;

/// Parameters of the counterexample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterexampleSpec {
    pub omega_radius: f64,
    pub plateau_radius: f64,
    pub mollifier_eps: f64,
    pub p_minus: f64,
    pub p_plus: f64,
    /// `φ(t) = t^{phi_exponent}`.
    pub phi_exponent: f64,
    pub time_horizon: f64,
}

impl Default for CounterexampleSpec {
    fn default() -> Self {
        CounterexampleSpec {
            omega_radius: 2.5,
            plateau_radius: 0.6,
            mollifier_eps: 0.4,
            p_minus: 1.1,
            p_plus: 2.0,
            phi_exponent: -0.5,
            time_horizon: 1.0,
        }
    }
}

impl CounterexampleSpec {
    /// Support containment `G ⊆ {η = 1}`, `supp η ⊆ Ω`, and `φ ∈ L^{p⁻} \ L^{p⁺}`.
    pub fn validate(&self) -> Result<()> {
        let &CounterexampleSpec {
            omega_radius,
            plateau_radius,
            mollifier_eps: eps,
            p_minus,
            p_plus,
            phi_exponent: a,
            time_horizon,
        } = self;
        let bad = |msg: String| Err(Error::BadSpec(msg));
        if !(eps > 0.0 && eps < 1.0) {
            return bad(format!("mollifier radius must lie in (0, 1), got {eps}"));
        }
        if !(plateau_radius > 0.0 && plateau_radius + eps <= 1.0) {
            return bad(format!(
                "plateau radius {plateau_radius} must be positive and at most 1 − ε = {}",
                1.0 - eps
            ));
        }
        if !(1.0 + eps <= omega_radius && omega_radius.is_finite()) {
            return bad(format!("Ω radius {omega_radius} must contain the support radius {}", 1.0 + eps));
        }
        if !(p_minus > 1.0 && p_plus > p_minus && p_plus.is_finite()) {
            return bad(format!("need 1 < p⁻ < p⁺ < ∞, got ({p_minus}, {p_plus})"));
        }
        if !(a * p_minus > -1.0 && a * p_plus <= -1.0) {
            return bad(format!("t^{a} must lie in L^{p_minus} but not in L^{p_plus} near 0"));
        }
        if !(time_horizon > 0.0 && time_horizon.is_finite()) {
            return bad(format!("time horizon must be positive, got {time_horizon}"));
        }
        Ok(())
    }

    /// Radius from which on the exponent equals `p⁻`, `1 − ε/4`. Between the
    /// plateau and this radius `|∇η|` is exponentially small.
    pub fn ramp_end(&self) -> f64 {
        1.0 - 0.25 * self.mollifier_eps
    }

    /// Radial exponent profile: `p⁺` on the plateau, `p⁻` from
    /// [`ramp_end`](Self::ramp_end) outward, joined by a `C^∞` ramp.
    pub fn p_radial(&self, r: f64) -> f64 {
        let z = (r - self.plateau_radius) / (self.ramp_end() - self.plateau_radius);
        self.p_plus - (self.p_plus - self.p_minus) * smooth_step(z)
    }

    pub fn phi(&self, t: f64) -> f64 {
        t.powf(self.phi_exponent)
    }

    pub fn space_time_box(&self) -> SpaceTimeBox {
        SpaceTimeBox::centered_square(self.omega_radius, self.time_horizon)
    }
}

/// `C^∞` step: 0 for `z ≤ 0`, 1 for `z ≥ 1`.
fn smooth_step(z: f64) -> f64 {
    let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let (a, b) = (f(z), f(1.0 - z));
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// The exponent of the counterexample as a space-time field (constant in `t`).
pub fn bump_exponent(spec: &CounterexampleSpec) -> Result<ExponentField> {
    spec.validate()?;
    let s = *spec;
    let eval: ScalarFn = Arc::new(move |_t, x: [f64; 2]| s.p_radial(x[0].hypot(x[1])));
    ExponentField::with_known_limits("bump", spec.space_time_box(), eval, spec.p_minus, spec.p_plus)
}

/// Unnormalised mollifier `exp(−1/(1 − s²))` on `[0, 1)`.
fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// Normalised `ω_ε` as a function of `|x|`, `∫_{ℝ²} ω_ε = 1`.
#[derive(Debug, Clone, Copy)]
pub struct Mollifier {
    eps: f64,
    scale: f64,
}

impl Mollifier {
    pub fn new(eps: f64) -> Self {
        let (s, w) = gauss_legendre_interval(96, 0.0, 1.0);
        let z: f64 = TAU * s.iter().zip(&w).map(|(&s, &w)| w * bump(s) * s).sum::<f64>();
        Mollifier {
            eps,
            scale: 1.0 / (z * eps * eps),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.scale * bump(s / self.eps)
    }
}

/// Tabulated `η = χ_{B₁} ∗ ω_ε` and `η'` on `[0, 1 + ε]`.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    r_max: f64,
    h: f64,
    eta: Vec<f64>,
    deta: Vec<f64>,
}

impl RadialProfile {
    pub fn new(eps: f64) -> Self {
        let omega = Mollifier::new(eps);
        let r_max = 1.0 + eps;
        let h = r_max / PROFILE_SAMPLES as f64;
        let (eta, deta) = (0..=PROFILE_SAMPLES)
            .map(|i| {
                let r = i as f64 * h;
                (convolve_indicator(&omega, r), convolve_indicator_derivative(&omega, r))
            })
            .unzip();
        RadialProfile { r_max, h, eta, deta }
    }

    /// `η(r)` by cubic Hermite interpolation.
    pub fn eta(&self, r: f64) -> f64 {
        if r >= self.r_max {
            return 0.0;
        }
        let (i, s) = self.cell(r);
        let (y0, y1) = (self.eta[i], self.eta[i + 1]);
        let (d0, d1) = (self.deta[i] * self.h, self.deta[i + 1] * self.h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1
    }

    /// `η'(r)`, linear interpolation of the tabulated derivative.
    pub fn eta_prime(&self, r: f64) -> f64 {
        if r >= self.r_max {
            return 0.0;
        }
        let (i, s) = self.cell(r);
        (1.0 - s) * self.deta[i] + s * self.deta[i + 1]
    }

    pub fn support_radius(&self) -> f64 {
        self.r_max
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.eta
            .iter()
            .zip(&self.deta)
            .enumerate()
            .map(|(i, (&e, &d))| (i as f64 * self.h, e, d))
    }

    fn cell(&self, r: f64) -> (usize, f64) {
        let x = r.max(0.0) / self.h;
        let i = (x.floor() as usize).min(PROFILE_SAMPLES - 1);
        (i, x - i as f64)
    }
}

/// `η(r) = ∫₀^ε ω_ε(s) s L(r, s) ds`, where `L(r, s)` is the angular measure
/// of the circle of radius `s` about `(r, 0)` inside the unit disc.
pub fn convolve_indicator(omega: &Mollifier, r: f64) -> f64 {
    let eps = omega.eps;
    let s0 = (1.0 - r).abs();
    let mut total = 0.0;
    if r < 1.0 {
        let (s, w) = gauss_legendre_interval(64, 0.0, s0.min(eps));
        total += TAU * s.iter().zip(&w).map(|(&s, &w)| w * omega.eval(s) * s).sum::<f64>();
    }
    if s0 < eps {
        // s = s0 + (ε − s0) v² removes the square-root kink of L at s0
        let (v, w) = gauss_legendre_interval(96, 0.0, 1.0);
        let len = eps - s0;
        for (&v, &w) in v.iter().zip(&w) {
            let s = s0 + len * v * v;
            if s == 0.0 {
                continue;
            }
            let c = ((r * r + s * s - 1.0) / (2.0 * r * s)).clamp(-1.0, 1.0);
            total += w * 2.0 * len * v * omega.eval(s) * s * 2.0 * c.acos();
        }
    }
    total
}

/// `η'(r) = −∫_{|y|=1} ω_ε(|x − y|) cos θ dθ` at `x = (r, 0)`.
pub fn convolve_indicator_derivative(omega: &Mollifier, r: f64) -> f64 {
    let eps = omega.eps;
    if r == 0.0 {
        return 0.0;
    }
    let c0 = (r * r + 1.0 - eps * eps) / (2.0 * r);
    if c0 >= 1.0 {
        return 0.0;
    }
    let theta0 = c0.max(-1.0).acos();
    let (th, w) = gauss_legendre_interval(128, 0.0, theta0);
    -2.0 * th
        .iter()
        .zip(&w)
        .map(|(&th, &w)| {
            let d = (r * r + 1.0 - 2.0 * r * th.cos()).max(0.0).sqrt();
            w * omega.eval(d) * th.cos()
        })
        .sum::<f64>()
}

/// Angular factor `∫₀^{2π} (cos²θ + ½ sin²θ)^{p/2} dθ` of `|ε(η e₁)|^p`.
fn sym_grad_angular(p: f64) -> f64 {
    const N: usize = 256;
    (0..N)
        .map(|i| {
            let th = TAU * i as f64 / N as f64;
            let g2 = th.cos().powi(2) + 0.5 * th.sin().powi(2);
            (0.5 * p * g2.ln()).exp()
        })
        .sum::<f64>()
        * TAU
        / N as f64
}

/// `∫_τ^T t^b dt`, stable near `b = −1`.
pub fn power_time_integral(b: f64, tau: f64, t_final: f64) -> f64 {
    let c = b + 1.0;
    let l = (t_final / tau).ln();
    if c == 0.0 {
        l
    } else {
        (c * tau.ln()).exp() * (c * l).exp_m1() / c
    }
}

#[derive(Debug, Clone, Copy)]
struct RadialNode {
    /// Radial weight including `2πr`.
    weight: f64,
    eta: f64,
    deta: f64,
    p: f64,
    /// `∫ g(θ)^p dθ / 2π` for the symmetric gradient.
    sym_factor: f64,
}

/// Modulars of a counterexample slice `u(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceModulars {
    /// `ρ_{p}(u(t))`.
    pub u: f64,
    /// `ρ_{p}(∇u(t))`.
    pub grad: f64,
    /// `ρ_{p}(ε(u)(t))`.
    pub sym_grad: f64,
    /// `ρ_{p⁻}(u(t))`.
    pub u_p_minus: f64,
    /// `‖u(t)‖²_{L²}`.
    pub l2_squared: f64,
}

/// The assembled counterexample: profile, exponent and radial quadrature.
#[derive(Debug, Clone)]
pub struct Counterexample {
    spec: CounterexampleSpec,
    profile: RadialProfile,
    p: ExponentField,
    nodes: Vec<RadialNode>,
}

impl Counterexample {
    /// Mesh-free construction.
    pub fn analytic(spec: CounterexampleSpec) -> Result<Self> {
        let p = bump_exponent(&spec)?;
        let profile = RadialProfile::new(spec.mollifier_eps);
        let eps = spec.mollifier_eps;
        let mut breaks = vec![0.0, spec.plateau_radius, spec.ramp_end(), 1.0 - eps, 1.0, 1.0 + eps];
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let mut nodes = Vec::new();
        for pair in breaks.windows(2) {
            let panels = ((pair[1] - pair[0]) / 0.005).ceil().max(1.0) as usize;
            let h = (pair[1] - pair[0]) / panels as f64;
            for k in 0..panels {
                let a = pair[0] + k as f64 * h;
                let (rs, ws) = gauss_legendre_interval(8, a, a + h);
                for (&r, &w) in rs.iter().zip(&ws) {
                    let p = spec.p_radial(r);
                    nodes.push(RadialNode {
                        weight: TAU * r * w,
                        eta: profile.eta(r),
                        deta: profile.eta_prime(r),
                        p,
                        sym_factor: sym_grad_angular(p) / TAU,
                    });
                }
            }
        }
        Ok(Counterexample { spec, profile, p, nodes })
    }

    pub fn spec(&self) -> &CounterexampleSpec {
        &self.spec
    }

    pub fn profile(&self) -> &RadialProfile {
        &self.profile
    }

    pub fn exponent(&self) -> &ExponentField {
        &self.p
    }

    /// `u(t, x) = φ(t) η(|x|) e₁`.
    pub fn u(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        [self.spec.phi(t) * self.profile.eta(x[0].hypot(x[1])), 0.0]
    }

    /// `∫ t^{a·p} η^p`-type integral: `time(p)` supplies the temporal factor.
    fn radial_sum(&self, f: impl Fn(&RadialNode) -> f64) -> f64 {
        self.nodes.iter().map(|n| n.weight * f(n)).sum()
    }

    fn modulars_with(&self, time: impl Fn(f64) -> f64) -> SliceModulars {
        let pm = self.spec.p_minus;
        SliceModulars {
            u: self.radial_sum(|n| powp(n.eta.abs(), n.p) * time(n.p)),
            grad: self.radial_sum(|n| powp(n.deta.abs(), n.p) * time(n.p)),
            sym_grad: self.radial_sum(|n| powp(n.deta.abs(), n.p) * n.sym_factor * time(n.p)),
            u_p_minus: self.radial_sum(|n| powp(n.eta.abs(), pm) * time(pm)),
            l2_squared: self.radial_sum(|n| n.eta * n.eta) * time(2.0),
        }
    }

    /// Modulars of the slice at time `t`.
    pub fn slice_modulars(&self, t: f64) -> SliceModulars {
        let a = self.spec.phi_exponent;
        self.modulars_with(|p| (a * p * t.ln()).exp())
    }

    /// Space-time modulars of `φ_τ u` over `(τ, T) × Ω`.
    pub fn truncated_modulars(&self, tau: f64) -> SliceModulars {
        let a = self.spec.phi_exponent;
        let t_final = self.spec.time_horizon;
        self.modulars_with(|p| power_time_integral(a * p, tau, t_final))
    }

    /// `ρ_p(u(t)) / ρ_p(ε(u)(t))`, the naive Poincaré quotient of a slice.
    pub fn naive_poincare_ratio(&self, t: f64) -> f64 {
        let m = self.slice_modulars(t);
        m.u / m.sym_grad
    }

    /// Repaired quotient `ρ_p(u) / (1 + ρ_p(ε(u)) + ‖u‖_{L²}^γ)` of a slice.
    pub fn repair_ratio(&self, t: f64, gamma: f64) -> f64 {
        let m = self.slice_modulars(t);
        m.u / (1.0 + m.sym_grad + m.l2_squared.powf(0.5 * gamma))
    }

    /// Log-spaced slice times in `[τ, T]`.
    pub fn slice_times(&self, tau: f64, n: usize) -> Vec<f64> {
        let (a, b) = (tau.ln(), self.spec.time_horizon.ln());
        (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n - 1).max(1) as f64).exp())
            .collect()
    }

    /// Spatial part `η e₁` interpolated onto a mesh level.
    pub fn interpolate(&self, mesh: &Arc<MeshLevel>) -> FEFunction {
        FEFunction::interpolate(mesh, |x| [self.profile.eta(x[0].hypot(x[1])), 0.0])
    }
}

/// Counterexample together with its spatial profile interpolated onto `mesh`,
/// which has to cover `B_R`.
pub fn build_counterexample(spec: CounterexampleSpec, mesh: &Arc<MeshLevel>) -> Result<(Counterexample, FEFunction)> {
    spec.validate()?;
    match mesh.domain() {
        Domain::Disk { radius } if radius >= spec.omega_radius => {}
        other => {
            return Err(Error::BadSpec(format!(
                "counterexample needs a disk mesh of radius ≥ {}, got {other:?}",
                spec.omega_radius
            )))
        }
    }
    let ce = Counterexample::analytic(spec)?;
    let u = ce.interpolate(mesh);
    Ok((ce, u))
}

/// One truncation of the failure table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureRow {
    pub tau: f64,
    /// `ρ_p(φ_τ u)`.
    pub rho_u: f64,
    /// `ρ_p(φ_τ ∇u)`.
    pub rho_grad: f64,
    /// `ρ_{p⁻}(φ_τ u)`.
    pub rho_u_p_minus: f64,
}

/// Space-time modulars of `φ_τ u` for each truncation `τ`.
pub fn poincare_failure_run(ce: &Counterexample, truncations: &[f64]) -> Result<Vec<FailureRow>> {
    if truncations.windows(2).any(|w| !(w[1] < w[0])) || truncations.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::BadSpec("truncations must be positive and strictly decreasing".into()));
    }
    Ok(truncations
        .iter()
        .map(|&tau| {
            let m = ce.truncated_modulars(tau);
            FailureRow {
                tau,
                rho_u: m.u,
                rho_grad: m.grad,
                rho_u_p_minus: m.u_p_minus,
            }
        })
        .collect())
}

/// `τ_k = 10^{−k}`, `k = 1..=n`.
pub fn decade_truncations(n: usize) -> Vec<f64> {
    (1..=n).map(|k| 10f64.powi(-(k as i32))).collect()
}

/// Summary of the per-decade growth of the failure table.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceCertificate {
    /// Increments of `ρ_p(φ_τ u)` between consecutive decades.
    pub u_increments: Vec<f64>,
    /// Increments of `ρ_p(φ_τ ∇u)`.
    pub grad_increments: Vec<f64>,
    /// Fitted `A` with `A ln 10` the midrange of the `u` increments.
    pub a_fit: f64,
    /// `max |increment − A ln 10| / (A ln 10)`.
    pub max_relative_deviation: f64,
}

impl DivergenceCertificate {
    pub fn from_rows(rows: &[FailureRow]) -> Self {
        let diff = |f: fn(&FailureRow) -> f64| -> Vec<f64> { rows.windows(2).map(|w| f(&w[1]) - f(&w[0])).collect() };
        let u_increments = diff(|r| r.rho_u);
        let grad_increments = diff(|r| r.rho_grad);
        let lo = u_increments.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = u_increments.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mid = 0.5 * (lo + hi);
        let max_relative_deviation = if mid > 0.0 { (hi - lo) / (hi + lo) } else { f64::INFINITY };
        DivergenceCertificate {
            u_increments,
            grad_increments,
            a_fit: mid / LN_10,
            max_relative_deviation,
        }
    }

    pub fn logarithmic_growth(&self, rel_tol: f64) -> bool {
        self.a_fit > 0.0 && self.max_relative_deviation <= rel_tol
    }

    pub fn gradient_settled(&self, tol: f64) -> bool {
        self.grad_increments.last().is_some_and(|d| d.abs() < tol)
    }
}

/// One sample of the radial profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub r: f64,
    pub eta: f64,
    pub grad_eta: f64,
    pub p: f64,
}

/// `n` equispaced radial samples of `η`, `|∇η|` and `p` on `[0, R]`.
pub fn figure1_profiles(ce: &Counterexample, n: usize) -> Vec<ProfileRow> {
    let r_max = ce.spec.omega_radius;
    (0..n)
        .map(|i| {
            let r = r_max * i as f64 / (n - 1).max(1) as f64;
            ProfileRow {
                r,
                eta: ce.profile.eta(r),
                grad_eta: ce.profile.eta_prime(r).abs(),
                p: ce.spec.p_radial(r),
            }
        })
        .collect()
}

/// Outcome of a calibrated inequality check.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport {
    pub name: String,
    pub samples: usize,
    /// Named constants, fitted or fixed.
    pub constants: Vec<(String, f64)>,
    pub worst_ratio: f64,
    /// The frozen bound the ratio is compared with.
    pub bound: f64,
    pub seed: Option<u64>,
    pub pass: bool,
}

impl InequalityReport {
    fn new(name: impl Into<String>, ratios: &[f64], bound: f64, constants: Vec<(String, f64)>, seed: Option<u64>) -> Self {
        let worst_ratio = ratios.iter().copied().fold(0.0, f64::max);
        let finite = ratios.iter().all(|r| r.is_finite());
        InequalityReport {
            name: name.into(),
            samples: ratios.len(),
            constants,
            worst_ratio,
            bound,
            seed,
            pass: finite && worst_ratio <= bound,
        }
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
}

impl fmt::Display for InequalityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} samples, worst ratio {:.4e} vs bound {:.4e} → {}",
            self.name,
            self.samples,
            self.worst_ratio,
            self.bound,
            if self.pass { "pass" } else { "FAIL" }
        )
    }
}

/// A constant frozen from calibration data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenConstant {
    pub value: f64,
    pub calibration_worst: f64,
    pub calibration_samples: usize,
}

impl FrozenConstant {
    pub fn from_ratios(ratios: &[f64]) -> Self {
        let worst = ratios.iter().copied().fold(0.0, f64::max);
        FrozenConstant {
            value: CALIBRATION_SAFETY * worst,
            calibration_worst: worst,
            calibration_samples: ratios.len(),
        }
    }
}

/// Discrete space-time field: slices `u(t_k)` with time weights.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    weights: Vec<f64>,
    slices: Vec<FEFunction>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, weights: Vec<f64>, slices: Vec<FEFunction>) -> Result<Self> {
        if times.len() != weights.len() || times.len() != slices.len() || times.is_empty() {
            return Err(Error::BadSpec("trajectory needs matching, non-empty times/weights/slices".into()));
        }
        if slices.iter().any(|s| s.mesh().id() != slices[0].mesh().id()) {
            return Err(Error::LevelMismatch("trajectory slices live on different meshes".into()));
        }
        Ok(Trajectory { times, weights, slices })
    }

    /// Midpoint-rule trajectory `t ↦ u(t)` on `n` slices of `(0, T)`.
    pub fn sample(t_final: f64, n: usize, mut u: impl FnMut(f64) -> FEFunction) -> Result<Self> {
        let dt = t_final / n as f64;
        let times: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) * dt).collect();
        let slices = times.iter().map(|&t| u(t)).collect();
        Trajectory::new(times, vec![dt; n], slices)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn slices(&self) -> &[FEFunction] {
        &self.slices
    }

    /// Discrete `‖u‖_{L^∞(L²)}`.
    pub fn y_sup(&self) -> f64 {
        self.slices.iter().map(FEFunction::l2_norm).fold(0.0, f64::max)
    }

    /// `Σₖ wₖ g(tₖ, u(tₖ))`.
    fn integrate(&self, g: impl Fn(f64, &FEFunction) -> f64) -> f64 {
        self.times
            .iter()
            .zip(&self.weights)
            .zip(&self.slices)
            .map(|((&t, &w), u)| w * g(t, u))
            .sum()
    }
}

const RULE: TriangleRule = TriangleRule::SevenPoint;

/// `ρ_{p(t,·)}(u)` of an FE slice.
pub fn slice_modular(u: &FEFunction, p: &ExponentField, t: f64) -> f64 {
    modular(&u.values_on(RULE, t), p).value
}

/// `ρ_{p(t,·)}(ε(u))` of an FE slice.
pub fn slice_sym_grad_modular(u: &FEFunction, p: &ExponentField, t: f64) -> f64 {
    modular(&u.symmetric_gradient(RULE, t), p).value
}

/// Repaired Poincaré quotient `sup_t ρ_p(u) / (1 + ρ_p(ε(u)) + ‖u‖_{L²}^γ)`.
pub fn repair_ratio(traj: &Trajectory, p: &ExponentField, gamma: f64) -> f64 {
    traj.times
        .iter()
        .zip(&traj.slices)
        .map(|(&t, u)| {
            let lhs = slice_modular(u, p, t);
            lhs / (1.0 + slice_sym_grad_modular(u, p, t) + u.l2_norm().powf(gamma))
        })
        .fold(0.0, f64::max)
}

/// Default `γ = max{2, p⁺}` for both the repaired Poincaré and the
/// interpolation check.
pub fn default_gamma(p: &ExponentField) -> f64 {
    p.p_plus().max(2.0)
}

/// Repaired Poincaré inequality against a frozen `c`.
pub fn poincare_repair_check(fields: &[Trajectory], p: &ExponentField, gamma: f64, c: &FrozenConstant) -> InequalityReport {
    let ratios: Vec<f64> = fields.iter().map(|u| repair_ratio(u, p, gamma)).collect();
    InequalityReport::new(
        "poincare-repair",
        &ratios,
        c.value,
        vec![("c".into(), c.value), ("gamma".into(), gamma)],
        None,
    )
}

/// `Σ_T |T| |∇u|^s`, the full gradient being constant per triangle.
fn grad_power_integral(u: &FEFunction, s: f64) -> f64 {
    let mesh = u.mesh();
    mesh.geometry()
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let gr = u.gradient_in(k);
            let n = (gr[0][0].powi(2) + gr[0][1].powi(2) + gr[1][0].powi(2) + gr[1][1].powi(2)).sqrt();
            g.area * powp(n, s)
        })
        .sum()
}

fn sym_grad_power_integral(u: &FEFunction, s: f64) -> f64 {
    u.symmetric_gradient_per_triangle()
        .iter()
        .zip(u.mesh().geometry())
        .map(|(e, g)| g.area * powp(e.norm(), s))
        .sum()
}

/// `∫ |u|^s` with the degree-5 rule (exact for even integer `s ≤ 4`).
pub fn lebesgue_power_integral(u: &FEFunction, s: f64) -> f64 {
    let mesh = u.mesh();
    let mut total = 0.0;
    for (k, g) in mesh.geometry().iter().enumerate() {
        for &(bary, w) in RULE.points() {
            let v = u.value_in(k, bary);
            total += w * g.area * powp(v[0].hypot(v[1]), s);
        }
    }
    total
}

pub fn lebesgue_norm(u: &FEFunction, s: f64) -> f64 {
    lebesgue_power_integral(u, s).powf(1.0 / s)
}

pub fn gradient_norm(u: &FEFunction, s: f64) -> f64 {
    grad_power_integral(u, s).powf(1.0 / s)
}

pub fn sym_gradient_norm(u: &FEFunction, s: f64) -> f64 {
    sym_grad_power_integral(u, s).powf(1.0 / s)
}

/// Korn quotient `‖∇u‖_s / (‖u‖_s + ‖ε(u)‖_s)`; zero for `u = 0`.
pub fn korn_ratio(u: &FEFunction, s: f64) -> f64 {
    let den = lebesgue_norm(u, s) + sym_gradient_norm(u, s);
    if den == 0.0 {
        0.0
    } else {
        gradient_norm(u, s) / den
    }
}

/// Korn's inequality in `L^s` against a frozen constant.
pub fn korn_check(fields: &[FEFunction], s: f64, c: &FrozenConstant) -> InequalityReport {
    let ratios: Vec<f64> = fields.iter().map(|u| korn_ratio(u, s)).collect();
    InequalityReport::new(
        format!("korn-s{s}"),
        &ratios,
        c.value,
        vec![("c".into(), c.value), ("s".into(), s)],
        None,
    )
}

/// Target exponent `q` of the interpolation inequality,
/// `1/q = θ(1/r − 1/d) + (1 − θ)/s`.
pub fn gn_exponent(s: f64, r: f64, theta: f64, dim: usize) -> Result<f64> {
    if !(s >= 1.0 && r >= 1.0 && (0.0..=1.0).contains(&theta)) {
        return Err(Error::BadSpec(format!("invalid (s, r, θ) = ({s}, {r}, {theta})")));
    }
    let inv = theta * (1.0 / r - 1.0 / dim as f64) + (1.0 - theta) / s;
    if !(inv > 0.0) {
        return Err(Error::BadSpec(format!("(s, r, θ) = ({s}, {r}, {theta}) gives no finite q")));
    }
    Ok(1.0 / inv)
}

/// The three norms entering the interpolation inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnTerms {
    /// `‖u‖_q`.
    pub lhs: f64,
    /// `‖∇u‖_r^θ ‖u‖_s^{1−θ}`.
    pub product: f64,
    /// `‖u‖_s`.
    pub low: f64,
}

pub fn gn_terms(u: &FEFunction, s: f64, r: f64, theta: f64) -> Result<GnTerms> {
    let q = gn_exponent(s, r, theta, 2)?;
    let low = lebesgue_norm(u, s);
    Ok(GnTerms {
        lhs: lebesgue_norm(u, q),
        product: gradient_norm(u, r).powf(theta) * low.powf(1.0 - theta),
        low,
    })
}

/// Fit `c₁` with `c₂ = 1` from calibration fields.
pub fn fit_gn_constant(fields: &[FEFunction], s: f64, r: f64, theta: f64) -> Result<FrozenConstant> {
    let ratios = fields
        .iter()
        .map(|u| {
            let t = gn_terms(u, s, r, theta)?;
            Ok(if t.product > 0.0 { (t.lhs - t.low).max(0.0) / t.product } else { 0.0 })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(FrozenConstant::from_ratios(&ratios))
}

/// `‖u‖_q ≤ c₁‖∇u‖_r^θ‖u‖_s^{1−θ} + c₂‖u‖_s`; the reported ratio is
/// `lhs / rhs`, which must not exceed one.
pub fn gn_check(fields: &[FEFunction], s: f64, r: f64, theta: f64, c1: &FrozenConstant, c2: f64) -> Result<InequalityReport> {
    let ratios = fields
        .iter()
        .map(|u| {
            let t = gn_terms(u, s, r, theta)?;
            let rhs = c1.value * t.product + c2 * t.low;
            Ok(if rhs > 0.0 { t.lhs / rhs } else { 0.0 })
        })
        .collect::<Result<Vec<f64>>>()?;
    let q = gn_exponent(s, r, theta, 2)?;
    Ok(InequalityReport::new(
        format!("gn-s{s}-r{r}-theta{theta}"),
        &ratios,
        1.0,
        vec![
            ("c1".into(), c1.value),
            ("c2".into(), c2),
            ("q".into(), q),
        ],
        None,
    ))
}

/// `p_*(t, x) − ε` for `d = 2`.
pub fn interpolation_exponent(p: &ExponentField, eps_star: f64) -> Result<ExponentField> {
    let star = p.parabolic_star_field(2)?;
    let lowest = parabolic_star(p.p_minus(), 2)? - eps_star;
    if !(eps_star > 0.0 && lowest > 1.0) {
        return Err(Error::ExponentOrderViolation(format!(
            "ε = {eps_star} leaves p_* − ε = {lowest} ≤ 1"
        )));
    }
    star.map_monotone(format!("{}_* - {eps_star}", p.label()), move |v| v - eps_star)
}

/// Left and right side of the interpolation inequality on a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationTerms {
    /// `ρ_{p_*−ε}(u)` over `Q_T`.
    pub lhs: f64,
    /// `[1 + ρ_p(ε(u)) + ‖u‖_{Y∞}^γ](1 + ‖u‖_{Y∞}^γ)`.
    pub rhs: f64,
}

pub fn interpolation_terms(traj: &Trajectory, p: &ExponentField, q: &ExponentField, gamma: f64) -> InterpolationTerms {
    let lhs = traj.integrate(|t, u| slice_modular(u, q, t));
    let rho_grad = traj.integrate(|t, u| slice_sym_grad_modular(u, p, t));
    let y = traj.y_sup().powf(gamma);
    InterpolationTerms {
        lhs,
        rhs: (1.0 + rho_grad + y) * (1.0 + y),
    }
}

pub fn interpolation_ratio(traj: &Trajectory, p: &ExponentField, q: &ExponentField, gamma: f64) -> f64 {
    let t = interpolation_terms(traj, p, q, gamma);
    t.lhs / t.rhs
}

/// Parabolic interpolation inequality against a frozen `c_ε`.
pub fn variable_interpolation_check(
    trajectories: &[Trajectory],
    p: &ExponentField,
    eps_star: f64,
    gamma: f64,
    c: &FrozenConstant,
) -> Result<InequalityReport> {
    let q = interpolation_exponent(p, eps_star)?;
    let ratios: Vec<f64> = trajectories.iter().map(|u| interpolation_ratio(u, p, &q, gamma)).collect();
    Ok(InequalityReport::new(
        "variable-interpolation",
        &ratios,
        c.value,
        vec![
            ("c_eps".into(), c.value),
            ("gamma_eps".into(), gamma),
            ("eps_star".into(), eps_star),
        ],
        None,
    ))
}

/// Random trajectory `t ↦ A(cos(ωt) v₁ + sin(ωt) v₂)` with unit-amplitude
/// random fields `vᵢ` and log-uniform `A ∈ [lo, hi]`.
pub fn random_trajectory(
    rng: &mut SweepRng,
    mesh: &Arc<MeshLevel>,
    t_final: f64,
    slices: usize,
    lo: f64,
    hi: f64,
) -> Trajectory {
    let v1 = sampling::fe_field(rng, mesh, 1.0, 1.0);
    let v2 = sampling::fe_field(rng, mesh, 1.0, 1.0);
    let amp = sampling::log_uniform(rng, lo, hi);
    let omega = rng.random_range(0.0..TAU) / t_final;
    Trajectory::sample(t_final, slices, |t| {
        v1.scaled(amp * (omega * t).cos())
            .axpy(amp * (omega * t).sin(), &v2)
            .expect("same level")
    })
    .expect("non-empty trajectory")
}

/// Which checks [`run_suite`] performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Repair,
    Interpolation,
    Korn,
    Gn,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Result<Suite> {
        match s {
            "repair" => Ok(Suite::Repair),
            "interpolation" => Ok(Suite::Interpolation),
            "korn" => Ok(Suite::Korn),
            "gn" => Ok(Suite::Gn),
            "all" => Ok(Suite::All),
            other => Err(Error::BadSpec(format!(
                "unknown suite `{other}` (expected repair, interpolation, korn, gn or all)"
            ))),
        }
    }

    fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

/// Sizes and seed of a suite run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub calibration: usize,
    pub validation: usize,
    /// Mesh level of the random fields.
    pub level: usize,
    /// Time slices per random trajectory.
    pub slices: usize,
    pub counterexample: CounterexampleSpec,
    /// Smallest truncation time of the counterexample quotients.
    pub tau_min: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 42,
            calibration: 200,
            validation: 200,
            level: 3,
            slices: 6,
            counterexample: CounterexampleSpec::default(),
            tau_min: 1e-5,
        }
    }
}

/// Amplitude range of the random fields.
const AMPLITUDE: (f64, f64) = (1e-2, 1e2);
const KORN_EXPONENTS: [f64; 3] = [1.5, 2.0, 3.0];
const GN_CASES: [(f64, f64, f64); 3] = [(2.0, 2.0, 0.5), (1.5, 2.0, 0.3), (3.0, 2.0, 0.5)];

/// Calibrate on one seeded set of fields, freeze, validate on a disjoint set.
pub fn run_suite(suite: Suite, cfg: &SuiteConfig) -> Result<Vec<InequalityReport>> {
    let mut out = Vec::new();
    let cal_seed = cfg.seed;
    let val_seed = cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let tag = |mut r: InequalityReport| {
        r.seed = Some(cfg.seed);
        r
    };

    if suite.includes(Suite::Repair) || suite.includes(Suite::Interpolation) {
        let ce = Counterexample::analytic(cfg.counterexample)?;
        let p = ce.exponent().clone();
        let t_final = cfg.counterexample.time_horizon;
        let levels = build_mesh_hierarchy(Domain::Disk { radius: cfg.counterexample.omega_radius }, cfg.level + 1)?;
        let mesh = &levels[cfg.level];
        let draw = |seed: u64, n: usize| {
            let mut rng = sampling::rng(seed);
            (0..n)
                .map(|_| random_trajectory(&mut rng, mesh, t_final, cfg.slices, AMPLITUDE.0, AMPLITUDE.1))
                .collect::<Vec<_>>()
        };
        let cal = draw(cal_seed, cfg.calibration);
        let val = draw(val_seed, cfg.validation);
        let gamma = default_gamma(&p);

        if suite.includes(Suite::Repair) {
            let ratios: Vec<f64> = cal.iter().map(|u| repair_ratio(u, &p, gamma)).collect();
            let c = FrozenConstant::from_ratios(&ratios);
            out.push(tag(poincare_repair_check(&val, &p, gamma, &c)));

            let times = ce.slice_times(cfg.tau_min, 64);
            let repaired: Vec<f64> = times.iter().map(|&t| ce.repair_ratio(t, gamma)).collect();
            let naive = times.iter().map(|&t| ce.naive_poincare_ratio(t)).fold(0.0, f64::max);
            let mut r = InequalityReport::new(
                "poincare-repair-counterexample",
                &repaired,
                c.value,
                vec![
                    ("c".into(), c.value),
                    ("gamma".into(), gamma),
                    ("tau_min".into(), cfg.tau_min),
                    ("naive_ratio".into(), naive),
                ],
                None,
            );
            r.seed = Some(cfg.seed);
            out.push(r);
        }
        if suite.includes(Suite::Interpolation) {
            let eps_star = crate::models::default_eps_star(&p);
            let q = interpolation_exponent(&p, eps_star)?;
            let ratios: Vec<f64> = cal.iter().map(|u| interpolation_ratio(u, &p, &q, gamma)).collect();
            let c = FrozenConstant::from_ratios(&ratios);
            out.push(tag(variable_interpolation_check(&val, &p, eps_star, gamma, &c)?));
        }
    }

    if suite.includes(Suite::Korn) || suite.includes(Suite::Gn) {
        let levels = build_mesh_hierarchy(Domain::UnitSquare, cfg.level + 2)?;
        let mesh = &levels[cfg.level + 1];
        let draw = |seed: u64, n: usize| {
            let mut rng = sampling::rng(seed);
            (0..n)
                .map(|_| sampling::fe_field(&mut rng, mesh, AMPLITUDE.0, AMPLITUDE.1))
                .collect::<Vec<_>>()
        };
        let cal = draw(cal_seed ^ 0x4b4f_524e, cfg.calibration);
        let val = draw(val_seed ^ 0x4b4f_524e, cfg.validation);
        if suite.includes(Suite::Korn) {
            for s in KORN_EXPONENTS {
                let ratios: Vec<f64> = cal.iter().map(|u| korn_ratio(u, s)).collect();
                out.push(tag(korn_check(&val, s, &FrozenConstant::from_ratios(&ratios))));
            }
        }
        if suite.includes(Suite::Gn) {
            for (s, r, theta) in GN_CASES {
                let c1 = fit_gn_constant(&cal, s, r, theta)?;
                out.push(tag(gn_check(&val, s, r, theta, &c1, 1.0)?));
            }
        }
    }
    Ok(out)
}

/// Symmetric gradient of `η(|x|) e₁` at `x`, for cross-checks against the
/// angular factor.
pub fn counterexample_sym_grad(profile: &RadialProfile, x: [f64; 2]) -> SymTensor2 {
    let r = x[0].hypot(x[1]);
    if r == 0.0 {
        return SymTensor2::ZERO;
    }
    let d = profile.eta_prime(r);
    let g = [d * x[0] / r, d * x[1] / r];
    SymTensor2::sym_part([g, [0.0, 0.0]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre_interval;
    use std::f64::consts::PI;

    fn ce() -> Counterexample {
        Counterexample::analytic(CounterexampleSpec::default()).unwrap()
    }

    #[test]
    fn default_spec_is_valid_and_bad_specs_are_rejected() {
        assert!(CounterexampleSpec::default().validate().is_ok());
        let bad = [
            CounterexampleSpec { plateau_radius: 0.7, ..Default::default() },
            CounterexampleSpec { omega_radius: 1.3, ..Default::default() },
            CounterexampleSpec { phi_exponent: -0.3, ..Default::default() },
            CounterexampleSpec { phi_exponent: -1.0, ..Default::default() },
            CounterexampleSpec { p_minus: 2.0, ..Default::default() },
        ];
        for s in bad {
            assert!(matches!(s.validate(), Err(Error::BadSpec(_))), "{s:?}");
        }
    }

    #[test]
    fn mollifier_has_unit_mass() {
        let w = Mollifier::new(0.4);
        let (s, g) = gauss_legendre_interval(200, 0.0, 0.4);
        let mass: f64 = TAU * s.iter().zip(&g).map(|(&s, &g)| g * w.eval(s) * s).sum::<f64>();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eta_is_one_on_the_plateau_and_zero_outside_the_support() {
        let c = ce();
        for i in 0..=60 {
            let r = 0.6 * i as f64 / 60.0;
            assert!((c.profile().eta(r) - 1.0).abs() <= 1e-6, "r = {r}");
        }
        for r in [1.4, 1.5, 2.0, 2.5] {
            assert_eq!(c.profile().eta(r), 0.0);
        }
        // the unit circle is convex, so slightly less than half the mollifier mass lies inside
        let e1 = c.profile().eta(1.0);
        assert!(e1 > 0.4 && e1 < 0.5, "{e1}");
        let samples: Vec<f64> = c.profile().samples().map(|s| s.1).collect();
        assert!(samples.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn eta_matches_direct_two_dimensional_convolution() {
        // oracle: polar-coordinate quadrature of ∫_{B₁} ω_ε(x − y) dy
        let w = Mollifier::new(0.4);
        let c = ce();
        for r in [0.65, 0.8, 1.0, 1.2, 1.35] {
            let (rho, wr) = gauss_legendre_interval(400, 0.0, 1.0);
            let (th, wt) = gauss_legendre_interval(400, 0.0, TAU);
            let mut total = 0.0;
            for (&rr, &a) in rho.iter().zip(&wr) {
                for (&tt, &b) in th.iter().zip(&wt) {
                    let d = (r * r + rr * rr - 2.0 * r * rr * tt.cos()).max(0.0).sqrt();
                    total += a * b * rr * w.eval(d);
                }
            }
            assert!((total - c.profile().eta(r)).abs() < 1e-4, "r = {r}: {total} vs {}", c.profile().eta(r));
        }
    }

    #[test]
    fn gradient_peak_matches_finite_differences() {
        let c = ce();
        let samples: Vec<(f64, f64, f64)> = c.profile().samples().collect();
        let h = samples[1].0;
        let (mut best_fd, mut best_r) = (0.0_f64, 0.0);
        for w in samples.windows(3) {
            let fd = ((w[2].1 - w[0].1) / (2.0 * h)).abs();
            if fd > best_fd {
                best_fd = fd;
                best_r = w[1].0;
            }
        }
        let peak = samples.iter().map(|s| s.2.abs()).fold(0.0, f64::max);
        assert!((peak - best_fd).abs() <= 0.01 * best_fd, "{peak} vs {best_fd}");
        assert!((best_r - 1.0).abs() < 0.05, "peak at {best_r}");
    }

    #[test]
    fn exponent_has_the_stated_extrema_and_regions() {
        let c = ce();
        let p = c.exponent();
        assert_eq!((p.p_minus(), p.p_plus()), (1.1, 2.0));
        assert_eq!(p.eval(0.5, [0.0, 0.0]), 2.0);
        assert_eq!(p.eval(0.5, [0.6, 0.0]), 2.0);
        for r in [0.9, 0.91, 1.0, 1.39, 2.4] {
            assert!((p.eval(0.5, [0.0, r]) - 1.1).abs() < 1e-15);
        }
        let mid = p.eval(0.1, [0.75, 0.0]);
        assert!(mid > 1.1 && mid < 2.0);
    }

    #[test]
    fn time_integral_matches_closed_forms() {
        assert!((power_time_integral(-1.0, 1e-3, 1.0) - 1e3f64.ln()).abs() < 1e-14);
        assert!((power_time_integral(-0.55, 0.0f64.max(1e-300), 1.0) - 1.0 / 0.45).abs() < 1e-12);
        assert!((power_time_integral(1.0, 0.5, 2.0) - 1.875).abs() < 1e-14);
        let near = power_time_integral(-1.0 + 1e-12, 1e-5, 1.0);
        assert!((near - 1e5f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn phi_lies_in_the_small_but_not_the_large_exponent_space() {
        let c = ce();
        // ∫₀¹ t^{−0.55} = 1/0.45 and ∫_τ¹ t^{−1} = ln(1/τ)
        let small = power_time_integral(c.spec().phi_exponent * 1.1, 1e-12, 1.0);
        assert!((small - 1.0 / 0.45).abs() < 1e-4);
        let big: Vec<f64> = [1e-4, 1e-8].iter().map(|&t| power_time_integral(-1.0, t, 1.0)).collect();
        assert!((big[1] - 2.0 * big[0]).abs() < 1e-12);
    }

    #[test]
    fn truncated_modulars_match_numerical_time_quadrature() {
        // oracle: t = e^σ substitution with Gauss-Legendre in σ on slices
        let c = ce();
        let tau: f64 = 1e-3;
        let (sg, sw) = gauss_legendre_interval(200, tau.ln(), 0.0);
        let mut oracle = [0.0; 3];
        for (&s, &w) in sg.iter().zip(&sw) {
            let t = s.exp();
            let m = c.slice_modulars(t);
            oracle[0] += w * t * m.u;
            oracle[1] += w * t * m.grad;
            oracle[2] += w * t * m.u_p_minus;
        }
        let m = c.truncated_modulars(tau);
        for (a, b) in [m.u, m.grad, m.u_p_minus].iter().zip(oracle) {
            assert!((a - b).abs() < 1e-9 * b, "{a} vs {b}");
        }
    }

    #[test]
    fn plateau_increment_approaches_the_analytic_rate() {
        // oracle: on the plateau p = 2 and η = 1, so the integrand is t^{−1}
        // and each decade adds at least π r_G² ln 10
        let c = ce();
        let rows = poincare_failure_run(&c, &decade_truncations(5)).unwrap();
        let plateau = PI * c.spec().plateau_radius.powi(2) * LN_10;
        for w in rows.windows(2) {
            assert!(w[1].rho_u - w[0].rho_u >= plateau * (1.0 - 1e-9));
        }
        // ρ_{p⁻}(φ_τ u) converges: increments shrink like τ^{0.45}
        let inc: Vec<f64> = rows.windows(2).map(|w| w[1].rho_u_p_minus - w[0].rho_u_p_minus).collect();
        for w in inc.windows(2) {
            let rate = w[1] / w[0];
            assert!((rate - 10f64.powf(-0.45)).abs() < 1e-9, "{rate}");
        }
    }

    #[test]
    fn symmetric_gradient_angular_factor_matches_pointwise_tensor() {
        let c = ce();
        let p: f64 = 1.7;
        let r: f64 = 1.05;
        let n = 720;
        let direct: f64 = (0..n)
            .map(|i| {
                let th = TAU * i as f64 / n as f64;
                powp(counterexample_sym_grad(c.profile(), [r * th.cos(), r * th.sin()]).norm(), p)
            })
            .sum::<f64>()
            * TAU
            / n as f64;
        let factor = sym_grad_angular(p) * powp(c.profile().eta_prime(r).abs(), p);
        assert!((direct - factor).abs() < 1e-12 * factor);
    }

    #[test]
    fn interpolated_profile_modular_approaches_the_radial_value() {
        let levels = build_mesh_hierarchy(Domain::Disk { radius: 2.5 }, 6).unwrap();
        let (c, _) = build_counterexample(CounterexampleSpec::default(), &levels[0]).unwrap();
        let exact = c.slice_modulars(1.0).u;
        let errs: Vec<f64> = levels[3..]
            .iter()
            .map(|m| (slice_modular(&c.interpolate(m), c.exponent(), 1.0) - exact).abs())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs.last().unwrap() < &(2e-2 * exact), "{errs:?} vs {exact}");
    }

    #[test]
    fn build_rejects_meshes_that_do_not_cover_the_domain() {
        let small = build_mesh_hierarchy(Domain::Disk { radius: 2.0 }, 1).unwrap();
        assert!(build_counterexample(CounterexampleSpec::default(), &small[0]).is_err());
        let square = build_mesh_hierarchy(Domain::UnitSquare, 1).unwrap();
        assert!(build_counterexample(CounterexampleSpec::default(), &square[0]).is_err());
    }

    #[test]
    fn failure_run_rejects_unordered_truncations() {
        assert!(poincare_failure_run(&ce(), &[1e-2, 1e-1]).is_err());
        assert!(poincare_failure_run(&ce(), &[1e-1, 0.0]).is_err());
    }

    #[test]
    fn figure_profiles_cover_the_domain() {
        let rows = figure1_profiles(&ce(), 251);
        assert_eq!(rows.len(), 251);
        assert_eq!(rows[0].r, 0.0);
        assert_eq!(rows[250].r, 2.5);
        let pmin = rows.iter().map(|r| r.p).fold(f64::INFINITY, f64::min);
        let pmax = rows.iter().map(|r| r.p).fold(0.0, f64::max);
        assert_eq!((pmin, pmax), (1.1, 2.0));
        assert!(rows.iter().all(|r| r.grad_eta == 0.0 || (r.r > 0.6 && r.r < 1.4)));
    }

    #[test]
    fn zero_fields_give_zero_ratios() {
        let levels = build_mesh_hierarchy(Domain::Disk { radius: 2.5 }, 2).unwrap();
        let mesh = &levels[1];
        let p = ce().exponent().clone();
        let zero = Trajectory::sample(1.0, 3, |_| FEFunction::zeros(mesh)).unwrap();
        assert_eq!(repair_ratio(&zero, &p, 2.0), 0.0);
        let q = interpolation_exponent(&p, 0.1).unwrap();
        assert_eq!(interpolation_ratio(&zero, &p, &q, 2.0), 0.0);
        assert_eq!(korn_ratio(&FEFunction::zeros(mesh), 2.0), 0.0);
    }

    #[test]
    fn lebesgue_four_norm_is_exact_for_p1() {
        // oracle: |u|⁴ integrated with a 3×3 Duffy-Gauss rule per triangle
        let levels = build_mesh_hierarchy(Domain::UnitSquare, 3).unwrap();
        let mut rng = sampling::rng(12);
        let u = sampling::fe_field(&mut rng, &levels[2], 0.5, 2.0);
        let (a, wa) = gauss_legendre_interval(4, 0.0, 1.0);
        let mut oracle = 0.0;
        for (k, g) in levels[2].geometry().iter().enumerate() {
            for (&x, &wx) in a.iter().zip(&wa) {
                for (&y, &wy) in a.iter().zip(&wa) {
                    let (l1, l2) = (x, y * (1.0 - x));
                    let v = u.value_in(k, [1.0 - l1 - l2, l1, l2]);
                    oracle += 2.0 * g.area * wx * wy * (1.0 - x) * (v[0] * v[0] + v[1] * v[1]).powi(2);
                }
            }
        }
        assert!((lebesgue_power_integral(&u, 4.0) - oracle).abs() < 1e-12 * oracle);
    }

    #[test]
    fn gn_exponent_examples() {
        assert_eq!(gn_exponent(2.0, 2.0, 0.0, 2).unwrap(), 2.0);
        assert!((gn_exponent(2.0, 2.0, 0.5, 2).unwrap() - 4.0).abs() < 1e-14);
        assert!(gn_exponent(2.0, 2.0, 1.0, 2).is_err());
    }

    #[test]
    fn gn_with_theta_zero_holds_with_unit_constant() {
        let levels = build_mesh_hierarchy(Domain::UnitSquare, 4).unwrap();
        let mut rng = sampling::rng(5);
        let fields: Vec<FEFunction> = (0..20).map(|_| sampling::fe_field(&mut rng, &levels[3], 0.1, 10.0)).collect();
        let zero = FrozenConstant::from_ratios(&[]);
        let r = gn_check(&fields, 2.0, 2.0, 0.0, &zero, 1.0).unwrap();
        assert!(r.pass && (r.worst_ratio - 1.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn interpolation_with_quadratic_exponent_reduces_to_the_four_norm() {
        let levels = build_mesh_hierarchy(Domain::UnitSquare, 3).unwrap();
        let p = ExponentField::constant(2.0, SpaceTimeBox::unit_square(1.0)).unwrap();
        let eps = 1e-9;
        let q = interpolation_exponent(&p, eps).unwrap();
        let mut rng = sampling::rng(8);
        let traj = random_trajectory(&mut rng, &levels[2], 1.0, 4, 0.5, 2.0);
        let lhs = interpolation_terms(&traj, &p, &q, 2.0).lhs;
        let direct: f64 = traj
            .slices()
            .iter()
            .map(|u| 0.25 * lebesgue_norm(u, 4.0).powi(4))
            .sum();
        assert!((lhs - direct).abs() < 1e-7 * direct, "{lhs} vs {direct}");
    }

    #[test]
    fn korn_ratio_is_finite_for_a_clamped_rotation() {
        let levels = build_mesh_hierarchy(Domain::UnitSquare, 4).unwrap();
        let u = FEFunction::interpolate(&levels[3], |x| [-(x[1] - 0.5), x[0] - 0.5]);
        let r = korn_ratio(&u, 2.0);
        assert!(r.is_finite() && r > 0.0);
    }

    #[test]
    fn small_suite_passes_and_is_reproducible() {
        let cfg = SuiteConfig {
            calibration: 12,
            validation: 6,
            level: 2,
            slices: 3,
            ..Default::default()
        };
        let a = run_suite(Suite::Korn, &cfg).unwrap();
        let b = run_suite(Suite::Korn, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        let gn = run_suite(Suite::Gn, &cfg).unwrap();
        assert_eq!(gn.len(), 3);
        assert!(matches!(Suite::parse("nope"), Err(Error::BadSpec(_))));
    }
}
