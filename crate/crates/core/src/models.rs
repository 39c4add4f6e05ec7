//! Flux `S` and lower-order term `b`, their structure constants, and seeded
//! samplers that check the structure conditions numerically.
//!
//! The canonical flux is `S(t, x, A) = (δ + |A|)^{p(t,x)−2} A`. Its declared
//! constants are `α = 1`, `β ≡ 0`, `c₀ = ½` and `c₁ = δ^{p(t,x)}`, the pair
//! coming from `(δ + a)^{p−2} a² ≥ ½ a^p − δ^p`.
//!
//! Samplers never trust a model: every report carries the worst observed
//! slack, the point where it occurred and the seed that reproduces it.

use crate::exponent::{conjugate, parabolic_star, ExponentField, ScalarFn};
use crate::mesh::{l2_inner, FEFunction};
use crate::quadrature::TriangleRule;
use crate::sampling::{self, SweepRng};
use crate::spaces::{powp, DiscreteField, Quadrature};
use crate::tensor::{dot, norm, SymTangent, SymTensor2, Vec2};
use crate::{Error, Result, TOL_NUM};
use nalgebra::{Matrix2, Matrix3};
use std::fmt;
use std::sync::Arc;

/// A Carathéodory map `S : Q_T × 𝕄_sym → 𝕄_sym`.
pub trait FluxLaw: Send + Sync {
    fn evaluate(&self, t: f64, x: Vec2, a: &SymTensor2) -> SymTensor2;

    /// Derivative `∂S/∂A` in orthonormal tensor coordinates. Defaults to
    /// central differences with relative step `1e-6`.
    fn tangent(&self, t: f64, x: Vec2, a: &SymTensor2) -> SymTangent {
        let v = a.to_vector();
        let h = 1e-6 * (1.0 + v.norm());
        let mut out = Matrix3::zeros();
        for j in 0..3 {
            let mut vp = v;
            let mut vm = v;
            vp[j] += h;
            vm[j] -= h;
            let sp = self.evaluate(t, x, &SymTensor2::from_vector(&vp)).to_vector();
            let sm = self.evaluate(t, x, &SymTensor2::from_vector(&vm)).to_vector();
            out.set_column(j, &((sp - sm) / (2.0 * h)));
        }
        out
    }

    /// Whether `tangent` is guaranteed symmetric (enables Cholesky in Newton).
    fn symmetric_tangent(&self) -> bool {
        false
    }
}

/// A Carathéodory map `b : Q_T × ℝ² → ℝ²`.
pub trait LowerOrderLaw: Send + Sync {
    fn evaluate(&self, t: f64, x: Vec2, a: Vec2) -> Vec2;

    /// Jacobian `∂b/∂a`; central differences by default.
    fn tangent(&self, t: f64, x: Vec2, a: Vec2) -> Matrix2<f64> {
        let h = 1e-6 * (1.0 + norm(a));
        let mut out = Matrix2::zeros();
        for j in 0..2 {
            let mut ap = a;
            let mut am = a;
            ap[j] += h;
            am[j] -= h;
            let (bp, bm) = (self.evaluate(t, x, ap), self.evaluate(t, x, am));
            out[(0, j)] = (bp[0] - bm[0]) / (2.0 * h);
            out[(1, j)] = (bp[1] - bm[1]) / (2.0 * h);
        }
        out
    }

    fn symmetric_tangent(&self) -> bool {
        false
    }
}

struct PrototypeLaw {
    p: ExponentField,
    delta: f64,
}

impl FluxLaw for PrototypeLaw {
    fn evaluate(&self, t: f64, x: Vec2, a: &SymTensor2) -> SymTensor2 {
        let s = a.norm();
        if s == 0.0 {
            return SymTensor2::ZERO;
        }
        let p = self.p.eval(t, x);
        ((p - 2.0) * (self.delta + s).ln()).exp() * *a
    }

    fn tangent(&self, t: f64, x: Vec2, a: &SymTensor2) -> SymTangent {
        let p = self.p.eval(t, x);
        let s = a.norm();
        if s == 0.0 {
            // the limit A → 0; with δ = 0 only p ≥ 2 is admitted
            let g = if self.delta > 0.0 {
                self.delta.powf(p - 2.0)
            } else if p == 2.0 {
                1.0
            } else {
                0.0
            };
            return g * Matrix3::identity();
        }
        let ds = self.delta + s;
        let g = ((p - 2.0) * ds.ln()).exp();
        let v = a.to_vector();
        g * Matrix3::identity() + ((p - 2.0) * g / (ds * s)) * v * v.transpose()
    }

    fn symmetric_tangent(&self) -> bool {
        true
    }
}

struct NegatedIdentity;

impl FluxLaw for NegatedIdentity {
    fn evaluate(&self, _t: f64, _x: Vec2, a: &SymTensor2) -> SymTensor2 {
        -*a
    }

    fn tangent(&self, _t: f64, _x: Vec2, _a: &SymTensor2) -> SymTangent {
        -Matrix3::identity()
    }

    fn symmetric_tangent(&self) -> bool {
        true
    }
}

/// A flux together with its declared structure constants.
#[derive(Clone)]
pub struct FluxModel {
    label: String,
    law: Arc<dyn FluxLaw>,
    p: ExponentField,
    delta: f64,
    alpha: f64,
    beta: ScalarFn,
    c0: f64,
    c1: ScalarFn,
}

impl fmt::Debug for FluxModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FluxModel")
            .field("label", &self.label)
            .field("p", &self.p)
            .field("delta", &self.delta)
            .field("alpha", &self.alpha)
            .field("c0", &self.c0)
            .finish()
    }
}

impl FluxModel {
    /// A user-supplied flux with declared constants.
    #[allow(clippy::too_many_arguments)]
    pub fn from_law(
        label: impl Into<String>,
        law: Arc<dyn FluxLaw>,
        p: ExponentField,
        delta: f64,
        alpha: f64,
        beta: ScalarFn,
        c0: f64,
        c1: ScalarFn,
    ) -> Result<Self> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::BadSpec(format!("delta must be ≥ 0, got {delta}")));
        }
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(Error::BadSpec(format!("alpha must be ≥ 1, got {alpha}")));
        }
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::BadSpec(format!("c0 must be > 0, got {c0}")));
        }
        Ok(FluxModel {
            label: label.into(),
            law,
            p,
            delta,
            alpha,
            beta,
            c0,
            c1,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn law(&self) -> &Arc<dyn FluxLaw> {
        &self.law
    }

    pub fn p(&self) -> &ExponentField {
        &self.p
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn beta(&self, t: f64, x: Vec2) -> f64 {
        (self.beta)(t, x)
    }

    pub fn c1(&self, t: f64, x: Vec2) -> f64 {
        (self.c1)(t, x)
    }

    #[inline]
    pub fn evaluate(&self, t: f64, x: Vec2, a: &SymTensor2) -> SymTensor2 {
        self.law.evaluate(t, x, a)
    }

    #[inline]
    pub fn tangent(&self, t: f64, x: Vec2, a: &SymTensor2) -> SymTangent {
        self.law.tangent(t, x, a)
    }

    pub fn beta_field(&self, quad: Arc<Quadrature>) -> DiscreteField {
        DiscreteField::scalar_from_fn(quad, |t, x| (self.beta)(t, x))
    }

    pub fn c1_field(&self, quad: Arc<Quadrature>) -> DiscreteField {
        DiscreteField::scalar_from_fn(quad, |t, x| (self.c1)(t, x))
    }
}

/// `S(t, x, A) = (δ + |A|)^{p(t,x)−2} A` with `α = 1`, `β ≡ 0`, `c₀ = ½`, `c₁ = δ^p`.
pub fn prototype_flux(p: &ExponentField, delta: f64) -> Result<FluxModel> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::BadSpec(format!("delta must be ≥ 0, got {delta}")));
    }
    if delta == 0.0 && p.p_minus() < 2.0 {
        return Err(Error::SingularFlux { p_minus: p.p_minus() });
    }
    let law = Arc::new(PrototypeLaw { p: p.clone(), delta });
    let pc = p.clone();
    FluxModel::from_law(
        format!("prototype(delta={delta})"),
        law,
        p.clone(),
        delta,
        1.0,
        Arc::new(|_, _| 0.0),
        0.5,
        Arc::new(move |t, x| delta.powf(pc.eval(t, x))),
    )
}

/// The non-monotone flux `S(A) = −A`, used to confirm the monotonicity sampler bites.
pub fn adversarial_flux(p: &ExponentField) -> FluxModel {
    FluxModel::from_law(
        "negated identity",
        Arc::new(NegatedIdentity),
        p.clone(),
        0.0,
        1.0,
        Arc::new(|_, _| 0.0),
        0.5,
        Arc::new(|_, _| 0.0),
    )
    .expect("constants are admissible")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowerOrderMode {
    /// `b(a) = κ a`.
    LinearDamping,
    /// `b(a) = κ a (1 + |a|)^{r−2}`.
    Saturating,
    /// `b ≡ 0`.
    Zero,
}

impl LowerOrderMode {
    pub fn name(self) -> &'static str {
        match self {
            LowerOrderMode::LinearDamping => "linear_damping",
            LowerOrderMode::Saturating => "saturating",
            LowerOrderMode::Zero => "zero",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear_damping" => Some(LowerOrderMode::LinearDamping),
            "saturating" => Some(LowerOrderMode::Saturating),
            "zero" => Some(LowerOrderMode::Zero),
            _ => None,
        }
    }
}

struct LinearLaw(f64);

impl LowerOrderLaw for LinearLaw {
    fn evaluate(&self, _t: f64, _x: Vec2, a: Vec2) -> Vec2 {
        [self.0 * a[0], self.0 * a[1]]
    }

    fn tangent(&self, _t: f64, _x: Vec2, _a: Vec2) -> Matrix2<f64> {
        self.0 * Matrix2::identity()
    }

    fn symmetric_tangent(&self) -> bool {
        true
    }
}

struct SaturatingLaw {
    kappa: f64,
    r: ExponentField,
}

impl LowerOrderLaw for SaturatingLaw {
    fn evaluate(&self, t: f64, x: Vec2, a: Vec2) -> Vec2 {
        let s = norm(a);
        let g = self.kappa * ((self.r.eval(t, x) - 2.0) * s.ln_1p()).exp();
        [g * a[0], g * a[1]]
    }

    fn tangent(&self, t: f64, x: Vec2, a: Vec2) -> Matrix2<f64> {
        let r = self.r.eval(t, x);
        let s = norm(a);
        let g = ((r - 2.0) * s.ln_1p()).exp();
        let mut m = g * Matrix2::identity();
        if s > 0.0 {
            let dg = (r - 2.0) * g / ((1.0 + s) * s);
            let v = nalgebra::Vector2::new(a[0], a[1]);
            m += dg * v * v.transpose();
        }
        self.kappa * m
    }

    fn symmetric_tangent(&self) -> bool {
        true
    }
}

/// A lower-order term together with its declared structure constants.
#[derive(Clone)]
pub struct LowerOrderModel {
    mode: LowerOrderMode,
    law: Arc<dyn LowerOrderLaw>,
    r: ExponentField,
    eps_star: f64,
    gamma: f64,
    eta: ScalarFn,
    c2: f64,
    c3: ScalarFn,
}

impl fmt::Debug for LowerOrderModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LowerOrderModel")
            .field("mode", &self.mode)
            .field("r", &self.r)
            .field("eps_star", &self.eps_star)
            .field("gamma", &self.gamma)
            .field("c2", &self.c2)
            .finish()
    }
}

impl LowerOrderModel {
    pub fn mode(&self) -> LowerOrderMode {
        self.mode
    }

    pub fn law(&self) -> &Arc<dyn LowerOrderLaw> {
        &self.law
    }

    pub fn r(&self) -> &ExponentField {
        &self.r
    }

    pub fn eps_star(&self) -> f64 {
        self.eps_star
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn eta(&self, t: f64, x: Vec2) -> f64 {
        (self.eta)(t, x)
    }

    pub fn c3(&self, t: f64, x: Vec2) -> f64 {
        (self.c3)(t, x)
    }

    pub fn is_zero(&self) -> bool {
        self.mode == LowerOrderMode::Zero
    }

    #[inline]
    pub fn evaluate(&self, t: f64, x: Vec2, a: Vec2) -> Vec2 {
        self.law.evaluate(t, x, a)
    }

    #[inline]
    pub fn tangent(&self, t: f64, x: Vec2, a: Vec2) -> Matrix2<f64> {
        self.law.tangent(t, x, a)
    }
}

/// Default interpolation slack `ε = min{0.1, (p⁻)_* − 2}`, which keeps `r ≥ 2`.
pub fn default_eps_star(p: &ExponentField) -> f64 {
    let star = parabolic_star(p.p_minus(), 2).expect("p⁻ > 1");
    0.1_f64.min(star - 2.0)
}

/// `r = max{2, p_*} − ε` for `ε ∈ (0, (p⁻)_* − 1]`.
pub fn growth_exponent(p: &ExponentField, eps_star: f64) -> Result<ExponentField> {
    let upper = parabolic_star(p.p_minus(), 2)? - 1.0;
    if !(eps_star > 0.0 && eps_star <= upper) {
        return Err(Error::BadSpec(format!("eps_star must lie in (0, {upper}], got {eps_star}")));
    }
    p.map_monotone(format!("max{{2, ({})_*}} - {eps_star}", p.label()), move |v| {
        parabolic_star(v, 2).expect("dimension 2").max(2.0) - eps_star
    })
}

/// Default lower-order term built on `r = max{2, p_*} − ε`.
///
/// `kappa` scales the damping and saturating modes and is ignored for `Zero`.
/// The declared `(B.2)`/`(B.3)` constants are `γ = max{1, κ}`, `η ≡ 0`,
/// `c₃ ≡ 0` and `c₂ = κ` (saturating with `r⁻ < 2`: `c₂ = 0`).
pub fn default_lower_order(
    p: &ExponentField,
    eps_star: Option<f64>,
    kappa: f64,
    mode: LowerOrderMode,
) -> Result<LowerOrderModel> {
    let eps_star = eps_star.unwrap_or_else(|| default_eps_star(p));
    let r = growth_exponent(p, eps_star)?;
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(Error::BadSpec(format!("damping coefficient must be ≥ 0, got {kappa}")));
    }
    let (law, gamma, c2): (Arc<dyn LowerOrderLaw>, f64, f64) = match mode {
        LowerOrderMode::LinearDamping => {
            if r.p_minus() < 2.0 {
                return Err(Error::BadSpec(format!(
                    "linear damping needs r ≥ 2, but r⁻ = {}",
                    r.p_minus()
                )));
            }
            (Arc::new(LinearLaw(kappa)), kappa.max(1.0), kappa)
        }
        LowerOrderMode::Saturating => {
            let c2 = if r.p_minus() >= 2.0 { kappa } else { 0.0 };
            (
                Arc::new(SaturatingLaw {
                    kappa,
                    r: r.clone(),
                }),
                kappa.max(1.0),
                c2,
            )
        }
        LowerOrderMode::Zero => (Arc::new(LinearLaw(0.0)), 1.0, 0.0),
    };
    Ok(LowerOrderModel {
        mode,
        law,
        r,
        eps_star,
        gamma,
        eta: Arc::new(|_, _| 0.0),
        c2,
        c3: Arc::new(|_, _| 0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditionId {
    S2,
    S3,
    S4,
    B2,
    B3,
    C3,
    C5,
    C6,
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditionId::S2 => "S2",
            ConditionId::S3 => "S3",
            ConditionId::S4 => "S4",
            ConditionId::B2 => "B2",
            ConditionId::B3 => "B3",
            ConditionId::C3 => "C3",
            ConditionId::C5 => "C5",
            ConditionId::C6 => "C6",
        })
    }
}

/// Location of the worst slack: time, point and the sampled arguments
/// (tensor/vector components or scalar summaries).
#[derive(Debug, Clone, PartialEq)]
pub struct WorstPoint {
    pub t: f64,
    pub x: Vec2,
    pub args: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub id: ConditionId,
    pub samples: usize,
    pub worst_slack: f64,
    pub worst_point: WorstPoint,
    pub seed: u64,
}

impl ConditionReport {
    fn new(id: ConditionId, seed: u64) -> Self {
        ConditionReport {
            id,
            samples: 0,
            worst_slack: f64::INFINITY,
            worst_point: WorstPoint {
                t: f64::NAN,
                x: [f64::NAN; 2],
                args: Vec::new(),
            },
            seed,
        }
    }

    fn record(&mut self, slack: f64, t: f64, x: Vec2, args: impl FnOnce() -> Vec<f64>) {
        self.samples += 1;
        // NaN slacks count as failures
        if slack < self.worst_slack || slack.is_nan() && !self.worst_slack.is_nan() {
            self.worst_slack = slack;
            self.worst_point = WorstPoint { t, x, args: args() };
        }
    }

    pub fn passes(&self) -> bool {
        self.worst_slack >= -TOL_NUM
    }

    /// Merge per-shard reports by minimum slack.
    pub fn merge(mut self, other: ConditionReport) -> ConditionReport {
        self.samples += other.samples;
        if other.worst_slack < self.worst_slack || other.worst_slack.is_nan() {
            self.worst_slack = other.worst_slack;
            self.worst_point = other.worst_point;
        }
        self
    }
}

/// Sampling range of tensor norms in the flux sweeps.
pub const TENSOR_RANGE: (f64, f64) = (1e-3, 1e2);

fn tensor_args(a: &SymTensor2) -> Vec<f64> {
    vec![a.xx, a.xy, a.yy]
}

/// `(S.4)`: slack `(S(A) − S(B)) : (A − B)` over random `(t, x, A, B)`.
pub fn check_monotone(s: &FluxModel, n_samples: usize, seed: u64) -> ConditionReport {
    let mut rng = sampling::rng(seed);
    let mut report = ConditionReport::new(ConditionId::S4, seed);
    let domain = *s.p().domain();
    for _ in 0..n_samples {
        let (t, x) = sampling::point_in(&mut rng, &domain);
        let a = sampling::sym_tensor(&mut rng, TENSOR_RANGE.0, TENSOR_RANGE.1);
        let b = sampling::sym_tensor(&mut rng, TENSOR_RANGE.0, TENSOR_RANGE.1);
        let slack = (s.evaluate(t, x, &a) - s.evaluate(t, x, &b)).ddot(&(a - b));
        report.record(slack, t, x, || {
            let mut v = tensor_args(&a);
            v.extend(tensor_args(&b));
            v
        });
    }
    report
}

/// `(S.2)` and `(S.3)` slacks with the model's declared constants. The first
/// sample is always `A = 0`.
pub fn check_growth_coercivity(s: &FluxModel, n_samples: usize, seed: u64) -> (ConditionReport, ConditionReport) {
    let mut rng = sampling::rng(seed);
    let mut s2 = ConditionReport::new(ConditionId::S2, seed);
    let mut s3 = ConditionReport::new(ConditionId::S3, seed);
    let domain = *s.p().domain();
    for i in 0..n_samples {
        let (t, x) = sampling::point_in(&mut rng, &domain);
        let a = if i == 0 {
            SymTensor2::ZERO
        } else {
            sampling::sym_tensor(&mut rng, TENSOR_RANGE.0, TENSOR_RANGE.1)
        };
        let p = s.p().eval(t, x);
        let na = a.norm();
        let weight = powp(s.delta() + na, p - 2.0);
        let sa = s.evaluate(t, x, &a);
        let growth = s.alpha() * weight * na + s.beta(t, x) - sa.norm();
        let coercive = sa.ddot(&a) - (s.c0() * weight * na * na - s.c1(t, x));
        s2.record(growth, t, x, || tensor_args(&a));
        s3.record(coercive, t, x, || tensor_args(&a));
    }
    (s2, s3)
}

/// `(B.2)` and `(B.3)` slacks with the model's declared constants. The first
/// sample is always `a = 0`.
pub fn check_lower_order(b: &LowerOrderModel, n_samples: usize, seed: u64) -> (ConditionReport, ConditionReport) {
    let mut rng = sampling::rng(seed);
    let mut b2 = ConditionReport::new(ConditionId::B2, seed);
    let mut b3 = ConditionReport::new(ConditionId::B3, seed);
    let domain = *b.r().domain();
    for i in 0..n_samples {
        let (t, x) = sampling::point_in(&mut rng, &domain);
        let a = if i == 0 {
            [0.0, 0.0]
        } else {
            sampling::vector(&mut rng, 1e-3, 1e2)
        };
        let r = b.r().eval(t, x);
        let ba = b.evaluate(t, x, a);
        let na = norm(a);
        let growth = b.gamma() * powp(1.0 + na, r - 1.0) + b.eta(t, x) - norm(ba);
        let coercive = dot(ba, a) - b.c2() * na * na + b.c3(t, x);
        b2.record(growth, t, x, || a.to_vec());
        b3.record(coercive, t, x, || a.to_vec());
    }
    (b2, b3)
}

/// `|S(A + (s+h)B) : C − S(A + sB) : C|`, the hemicontinuity wiggle.
pub fn hemicontinuity_jump(
    s: &FluxModel,
    t: f64,
    x: Vec2,
    a: &SymTensor2,
    b: &SymTensor2,
    c: &SymTensor2,
    at: f64,
    step: f64,
) -> f64 {
    let f = |z: f64| s.evaluate(t, x, &(*a + z * *b)).ddot(c);
    (f(at + step) - f(at)).abs()
}

// ---------------------------------------------------------------------------
// Operator-level conditions on finite element fields.

/// Which operator a `(C.x)` check is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorFamily {
    S,
    B,
    SPlusB,
}

/// The time-slice operators `S(t)`, `B(t)` evaluated by quadrature.
#[derive(Debug, Clone)]
pub struct SliceOperator<'a> {
    pub flux: &'a FluxModel,
    pub lower: &'a LowerOrderModel,
    pub rule: TriangleRule,
}

impl SliceOperator<'_> {
    /// `⟨S(t)u, v⟩ = ∫ S(t, ·, ε(u)) : ε(v)`.
    pub fn flux_pairing(&self, u: &FEFunction, v: &FEFunction, t: f64) -> f64 {
        let mesh = u.mesh();
        let (eu, ev) = (u.symmetric_gradient_per_triangle(), v.symmetric_gradient_per_triangle());
        let mut acc = 0.0;
        for (k, g) in mesh.geometry().iter().enumerate() {
            for &(bary, w) in self.rule.points() {
                let x = mesh.map_point(k, bary);
                acc += w * g.area * self.flux.evaluate(t, x, &eu[k]).ddot(&ev[k]);
            }
        }
        acc
    }

    /// `⟨B(t)u, v⟩ = ∫ b(t, ·, u) · v`.
    pub fn lower_pairing(&self, u: &FEFunction, v: &FEFunction, t: f64) -> f64 {
        if self.lower.is_zero() {
            return 0.0;
        }
        let mesh = u.mesh();
        let mut acc = 0.0;
        for (k, g) in mesh.geometry().iter().enumerate() {
            for &(bary, w) in self.rule.points() {
                let x = mesh.map_point(k, bary);
                acc += w * g.area * dot(self.lower.evaluate(t, x, u.value_in(k, bary)), v.value_in(k, bary));
            }
        }
        acc
    }

    pub fn pairing(&self, family: OperatorFamily, u: &FEFunction, v: &FEFunction, t: f64) -> f64 {
        match family {
            OperatorFamily::S => self.flux_pairing(u, v, t),
            OperatorFamily::B => self.lower_pairing(u, v, t),
            OperatorFamily::SPlusB => self.flux_pairing(u, v, t) + self.lower_pairing(u, v, t),
        }
    }

    /// `ρ_{p(t,·)}(ε(u))`.
    pub fn rho_sym_grad(&self, u: &FEFunction, t: f64) -> f64 {
        let mesh = u.mesh();
        let eu = u.symmetric_gradient_per_triangle();
        let mut acc = 0.0;
        for (k, g) in mesh.geometry().iter().enumerate() {
            let n = eu[k].norm();
            for &(bary, w) in self.rule.points() {
                let x = mesh.map_point(k, bary);
                acc += w * g.area * powp(n, self.flux.p().eval(t, x));
            }
        }
        acc
    }

    /// `ρ_{q(t,·)}(u)` for any exponent `q`.
    pub fn rho_values(&self, u: &FEFunction, q: &ExponentField, t: f64) -> f64 {
        let mesh = u.mesh();
        let mut acc = 0.0;
        for (k, g) in mesh.geometry().iter().enumerate() {
            for &(bary, w) in self.rule.points() {
                let x = mesh.map_point(k, bary);
                acc += w * g.area * powp(norm(u.value_in(k, bary)), q.eval(t, x));
            }
        }
        acc
    }

    /// Integral over the mesh of a scalar function at time `t`.
    pub fn integrate(&self, u: &FEFunction, t: f64, f: impl Fn(f64, Vec2) -> f64) -> f64 {
        let mesh = u.mesh();
        let mut acc = 0.0;
        for (k, g) in mesh.geometry().iter().enumerate() {
            for &(bary, w) in self.rule.points() {
                acc += w * g.area * f(t, mesh.map_point(k, bary));
            }
        }
        acc
    }

    /// Lower bound of `(C.5)`: `⟨A(t)u, u⟩ ≥ c₀ρ(ε(u)) − c₀ρ(δ) − ‖c₁(t)‖ + c₂‖u‖² − ‖c₃(t)‖`
    /// restricted to the requested family.
    pub fn c5_lower_bound(&self, family: OperatorFamily, u: &FEFunction, t: f64) -> f64 {
        let mut bound = 0.0;
        if family != OperatorFamily::B {
            let p = self.flux.p();
            let delta = self.flux.delta();
            let rho_delta = self.integrate(u, t, |t, x| powp(delta, p.eval(t, x)));
            let c1 = self.integrate(u, t, |t, x| self.flux.c1(t, x));
            bound += self.flux.c0() * (self.rho_sym_grad(u, t) - rho_delta) - c1;
        }
        if family != OperatorFamily::S {
            let c3 = self.integrate(u, t, |t, x| self.lower.c3(t, x));
            bound += self.lower.c2() * l2_inner(u, u).expect("same level") - c3;
        }
        bound
    }

    /// Right-hand side of the explicit `(C.6)` bound for the flux:
    /// `ε̃ 2^{(p⁻)'}[α^{(p⁻)'} 2^{p⁺}(ρ(δ) + ρ(ε(u))) + ρ_{p'}(β)] + c_p(ε̃) ρ(ε(v))`
    /// with `c_p(ε̃) = ((p⁺)' ε̃)^{1−p⁺} / p⁻` and `ε̃ < 1/(p⁺)'`.
    pub fn flux_c6_bound(&self, u: &FEFunction, v: &FEFunction, t: f64, eps: f64) -> f64 {
        let p = self.flux.p();
        let (pm, pp) = (p.p_minus(), p.p_plus());
        let pm_c = conjugate(pm).expect("p⁻ > 1");
        let pp_c = conjugate(pp).expect("p⁺ > 1");
        let delta = self.flux.delta();
        let rho_delta = self.integrate(u, t, |t, x| powp(delta, p.eval(t, x)));
        let rho_beta = self.integrate(u, t, |t, x| {
            let pv = p.eval(t, x);
            powp(self.flux.beta(t, x), pv / (pv - 1.0))
        });
        let cp = (pp_c * eps).powf(1.0 - pp) / pm;
        eps * 2f64.powf(pm_c)
            * (self.flux.alpha().powf(pm_c) * 2f64.powf(pp) * (rho_delta + self.rho_sym_grad(u, t)) + rho_beta)
            + cp * self.rho_sym_grad(v, t)
    }
}

/// Upper end of the admissible `ε̃` range in the flux `(C.6)` bound, `1/(p⁺)'`.
pub fn flux_c6_eps_max(p: &ExponentField) -> f64 {
    1.0 / conjugate(p.p_plus()).expect("p⁺ > 1")
}

/// Young constant `c_p(ε̃) = ((p⁺)' ε̃)^{1−p⁺} / p⁻` paired with `ε̃` in `(C.6)`.
pub fn flux_c6_constant(p: &ExponentField, eps: f64) -> f64 {
    let pp = p.p_plus();
    (conjugate(pp).expect("p⁺ > 1") * eps).powf(1.0 - pp) / p.p_minus()
}

/// A non-decreasing bound function `𝓑(s) = b₀ + b₁ s²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundFunction {
    pub b0: f64,
    pub b1: f64,
}

/// Safety factor applied when a constant is frozen from calibration data.
pub const CALIBRATION_SAFETY: f64 = 2.0;

impl BoundFunction {
    pub fn eval(&self, s: f64) -> f64 {
        self.b0 + self.b1 * s * s
    }

    /// Smallest `b₀ = b₁` with `𝓑(sᵢ) ≥ ratioᵢ` on the calibration data, times
    /// [`CALIBRATION_SAFETY`].
    pub fn fit(data: &[(f64, f64)]) -> BoundFunction {
        let m = data
            .iter()
            .map(|&(s, ratio)| ratio / (1.0 + s * s))
            .fold(0.0_f64, f64::max);
        BoundFunction {
            b0: CALIBRATION_SAFETY * m,
            b1: CALIBRATION_SAFETY * m,
        }
    }
}

/// Calibrated/validated outcome of a `(C.3)` or `(C.6)` check.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedCondition {
    pub report: ConditionReport,
    pub bound: BoundFunction,
}

/// Offset `α(t)` used in the fitted bounds, `1 + |Ω|`.
fn alpha_offset(u: &FEFunction) -> f64 {
    1.0 + u.mesh().area()
}

/// `(C.5)` over a set of fields at time `t`.
pub fn check_c5(op: &SliceOperator<'_>, family: OperatorFamily, fields: &[FEFunction], t: f64, seed: u64) -> ConditionReport {
    let mut report = ConditionReport::new(ConditionId::C5, seed);
    for (i, u) in fields.iter().enumerate() {
        let lhs = op.pairing(family, u, u, t);
        let slack = lhs - op.c5_lower_bound(family, u, t);
        report.record(slack, t, [f64::NAN; 2], || vec![i as f64, lhs]);
    }
    report
}

/// `(C.6)` for the flux with the explicit constants, over all pairs and each `ε̃`.
pub fn check_c6_flux(
    op: &SliceOperator<'_>,
    pairs: &[(FEFunction, FEFunction)],
    eps_values: &[f64],
    t: f64,
    seed: u64,
) -> ConditionReport {
    let mut report = ConditionReport::new(ConditionId::C6, seed);
    for (i, (u, v)) in pairs.iter().enumerate() {
        let lhs = op.flux_pairing(u, v, t).abs();
        for &eps in eps_values {
            let slack = op.flux_c6_bound(u, v, t, eps) - lhs;
            report.record(slack, t, [f64::NAN; 2], || vec![i as f64, eps, lhs]);
        }
    }
    report
}

/// `(C.6)` with a fitted `𝓑`: `|⟨A u, v⟩| ≤ 𝓑(‖u‖_Y)(α + ε̃ρ(ε(u)) + c(ε̃)ρ(ε(v)))`,
/// `c(ε̃)` being the flux Young constant. `𝓑` is frozen on `calibration` and
/// the report covers `validation` only.
pub fn check_c6_fitted(
    op: &SliceOperator<'_>,
    family: OperatorFamily,
    calibration: &[(FEFunction, FEFunction)],
    validation: &[(FEFunction, FEFunction)],
    eps_values: &[f64],
    t: f64,
    seed: u64,
) -> FittedCondition {
    let terms = |u: &FEFunction, v: &FEFunction, eps: f64| {
        let lhs = op.pairing(family, u, v, t).abs();
        let base = alpha_offset(u)
            + eps * op.rho_sym_grad(u, t)
            + flux_c6_constant(op.flux.p(), eps) * op.rho_sym_grad(v, t);
        (u.l2_norm(), lhs, base)
    };
    let mut data = Vec::new();
    for (u, v) in calibration {
        for &eps in eps_values {
            let (s, lhs, base) = terms(u, v, eps);
            data.push((s, lhs / base));
        }
    }
    let bound = BoundFunction::fit(&data);
    let mut report = ConditionReport::new(ConditionId::C6, seed);
    for (i, (u, v)) in validation.iter().enumerate() {
        for &eps in eps_values {
            let (s, lhs, base) = terms(u, v, eps);
            report.record(bound.eval(s) * base - lhs, t, [f64::NAN; 2], || vec![i as f64, eps, lhs]);
        }
    }
    FittedCondition { report, bound }
}

/// `(C.3)` with a fitted `𝓑`:
/// `|⟨A u, v⟩| ≤ 𝓑(‖u‖_Y)(α + ρ_q(u) + ρ_p(ε(u)) + ρ_q(v) + ρ_p(ε(v)))`.
pub fn check_c3(
    op: &SliceOperator<'_>,
    family: OperatorFamily,
    q: &ExponentField,
    calibration: &[(FEFunction, FEFunction)],
    validation: &[(FEFunction, FEFunction)],
    t: f64,
    seed: u64,
) -> FittedCondition {
    let terms = |u: &FEFunction, v: &FEFunction| {
        let lhs = op.pairing(family, u, v, t).abs();
        let base = alpha_offset(u)
            + op.rho_values(u, q, t)
            + op.rho_sym_grad(u, t)
            + op.rho_values(v, q, t)
            + op.rho_sym_grad(v, t);
        (u.l2_norm(), lhs, base)
    };
    let data: Vec<(f64, f64)> = calibration
        .iter()
        .map(|(u, v)| {
            let (s, lhs, base) = terms(u, v);
            (s, lhs / base)
        })
        .collect();
    let bound = BoundFunction::fit(&data);
    let mut report = ConditionReport::new(ConditionId::C3, seed);
    for (i, (u, v)) in validation.iter().enumerate() {
        let (s, lhs, base) = terms(u, v);
        report.record(bound.eval(s) * base - lhs, t, [f64::NAN; 2], || vec![i as f64, lhs]);
    }
    FittedCondition { report, bound }
}

/// `n` random field pairs on `mesh` with amplitudes in `[lo, hi]`.
pub fn random_pairs(
    rng: &mut SweepRng,
    mesh: &Arc<crate::mesh::MeshLevel>,
    n: usize,
    lo: f64,
    hi: f64,
) -> Vec<(FEFunction, FEFunction)> {
    (0..n)
        .map(|_| (sampling::fe_field(rng, mesh, lo, hi), sampling::fe_field(rng, mesh, lo, hi)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::SpaceTimeBox;
    use crate::mesh::{build_mesh_hierarchy, Domain};

    fn unit() -> SpaceTimeBox {
        SpaceTimeBox::unit_square(1.0)
    }

    fn constant(p: f64) -> ExponentField {
        ExponentField::constant(p, unit()).unwrap()
    }

    #[test]
    fn quadratic_prototype_is_identity() {
        let s = prototype_flux(&constant(2.0), 0.7).unwrap();
        let a = SymTensor2::new(0.3, -1.2, 2.0);
        assert_eq!(s.evaluate(0.5, [0.1, 0.2], &a), a);
    }

    #[test]
    fn quartic_prototype_at_diagonal() {
        let s = prototype_flux(&constant(4.0), 0.0).unwrap();
        let out = s.evaluate(0.0, [0.5, 0.5], &SymTensor2::diag(1.0, -1.0));
        assert!((out - SymTensor2::diag(2.0, -2.0)).norm() < 1e-14);
    }

    #[test]
    fn sub_quadratic_prototype_value() {
        let s = prototype_flux(&constant(1.5), 0.1).unwrap();
        let out = s.evaluate(0.0, [0.5, 0.5], &SymTensor2::diag(1.0, 0.0));
        let oracle = 1.0 / 1.1f64.sqrt();
        assert!((out.xx - oracle).abs() < 1e-14 && out.xy == 0.0 && out.yy == 0.0);
        assert!((out.xx - 0.9535).abs() < 1e-4);
    }

    #[test]
    fn singular_prototype_is_rejected() {
        assert_eq!(
            prototype_flux(&constant(1.5), 0.0).unwrap_err(),
            Error::SingularFlux { p_minus: 1.5 }
        );
        assert!(prototype_flux(&constant(2.5), 0.0).is_ok());
    }

    #[test]
    fn prototype_vanishes_at_zero() {
        let p = ExponentField::affine(1.2, [0.8, 0.0], 0.0, unit()).unwrap();
        let s = prototype_flux(&p, 0.2).unwrap();
        assert_eq!(s.evaluate(0.3, [0.4, 0.9], &SymTensor2::ZERO), SymTensor2::ZERO);
    }

    #[test]
    fn analytic_tangent_matches_finite_differences() {
        struct Plain(FluxModel);
        impl FluxLaw for Plain {
            fn evaluate(&self, t: f64, x: Vec2, a: &SymTensor2) -> SymTensor2 {
                self.0.evaluate(t, x, a)
            }
        }
        let p = ExponentField::affine(1.3, [1.5, 0.0], 0.0, unit()).unwrap();
        let s = prototype_flux(&p, 0.1).unwrap();
        let fd = Plain(s.clone());
        let mut rng = sampling::rng(4);
        for _ in 0..200 {
            let (t, x) = sampling::point_in(&mut rng, &unit());
            let a = sampling::sym_tensor(&mut rng, 1e-2, 10.0);
            let d = s.tangent(t, x, &a) - fd.tangent(t, x, &a);
            assert!(d.norm() < 1e-6 * (1.0 + s.tangent(t, x, &a).norm()), "{d}");
        }
        // A = 0 limit
        let d0 = s.tangent(0.0, [0.0, 0.0], &SymTensor2::ZERO);
        assert!((d0 - 0.1f64.powf(1.3 - 2.0) * Matrix3::identity()).norm() < 1e-12);
    }

    #[test]
    fn monotone_sweep_accepts_prototype_and_rejects_negation() {
        let p = ExponentField::affine(1.1, [0.9, 0.0], 0.0, unit()).unwrap();
        let good = check_monotone(&prototype_flux(&p, 0.1).unwrap(), 2000, 42);
        assert!(good.passes(), "{good:?}");
        assert_eq!(good.samples, 2000);
        let bad = check_monotone(&adversarial_flux(&p), 100, 42);
        assert!(bad.worst_slack < 0.0);
        assert!(!bad.passes());
    }

    #[test]
    fn equal_arguments_give_zero_monotonicity_slack() {
        let s = prototype_flux(&constant(3.0), 0.0).unwrap();
        let a = SymTensor2::new(1.0, 2.0, -0.5);
        let v = (s.evaluate(0.0, [0.0, 0.0], &a) - s.evaluate(0.0, [0.0, 0.0], &a)).ddot(&(a - a));
        assert_eq!(v, 0.0);
    }

    #[test]
    fn growth_and_coercivity_at_zero_tensor() {
        let s = prototype_flux(&constant(1.5), 0.3).unwrap();
        let (s2, s3) = check_growth_coercivity(&s, 1, 1);
        // A = 0: S2 slack is β = 0 and S3 slack is c₁ = δ^p
        assert_eq!(s2.worst_slack, 0.0);
        assert!((s3.worst_slack - 0.3f64.powf(1.5)).abs() < 1e-15);
    }

    #[test]
    fn quadratic_coercivity_slack_is_half_square() {
        let s = prototype_flux(&constant(2.0), 0.0).unwrap();
        let (_, s3) = check_growth_coercivity(&s, 500, 8);
        // slack = |A|² − ½|A|² = ½|A|², smallest for the A = 0 sample
        assert_eq!(s3.worst_slack, 0.0);
        let a = SymTensor2::new(0.5, 1.0, -2.0);
        let slack = s.evaluate(0.0, [0.0, 0.0], &a).ddot(&a) - 0.5 * a.norm().powi(2);
        assert!((slack - 0.5 * a.norm().powi(2)).abs() < 1e-14);
    }

    #[test]
    fn lower_order_modes() {
        let p = constant(2.0);
        let zero = default_lower_order(&p, None, 1.0, LowerOrderMode::Zero).unwrap();
        let (b2, b3) = check_lower_order(&zero, 500, 3);
        assert!(b2.passes() && b3.passes());
        assert_eq!(b3.worst_slack, 0.0);

        let damp = default_lower_order(&p, None, 1.0, LowerOrderMode::LinearDamping).unwrap();
        assert_eq!(damp.gamma(), 1.0);
        let (b2, b3) = check_lower_order(&damp, 2000, 3);
        assert!(b2.passes() && b3.passes(), "{b2:?} {b3:?}");
    }

    #[test]
    fn saturating_value_at_unit_vector() {
        // p ≡ 1.6: r = max{2, 3.2} − 1.0 = 2.2
        let p = constant(1.6);
        let b = default_lower_order(&p, Some(1.0), 1.0, LowerOrderMode::Saturating).unwrap();
        assert!((b.r().eval(0.0, [0.5, 0.5]) - 2.2).abs() < 1e-14);
        let v = b.evaluate(0.0, [0.5, 0.5], [1.0, 0.0]);
        let oracle = 2f64.powf(0.2);
        assert!((norm(v) - oracle).abs() < 1e-14);
        assert!((norm(v) - 1.1487).abs() < 1e-4);
    }

    #[test]
    fn growth_exponent_bounds() {
        let p = ExponentField::affine(1.1, [0.9, 0.0], 0.0, unit()).unwrap();
        let eps = default_eps_star(&p);
        assert!((eps - 0.1).abs() < 1e-15);
        let r = growth_exponent(&p, eps).unwrap();
        // r = max{2, p_*} − ε with p_* = 2p for p < 2
        assert!((r.p_minus() - 2.1).abs() < 1e-12);
        assert!((r.p_plus() - 3.9).abs() < 1e-12);
        assert!(growth_exponent(&p, 0.0).is_err());
        assert!(growth_exponent(&p, 1.3).is_err());
        assert!(default_lower_order(&p, Some(1.2), 1.0, LowerOrderMode::LinearDamping).is_err());
    }

    #[test]
    fn saturating_tangent_matches_finite_differences() {
        struct Plain(LowerOrderModel);
        impl LowerOrderLaw for Plain {
            fn evaluate(&self, t: f64, x: Vec2, a: Vec2) -> Vec2 {
                self.0.evaluate(t, x, a)
            }
        }
        let p = ExponentField::affine(1.2, [0.6, 0.3], 0.0, unit()).unwrap();
        let b = default_lower_order(&p, None, 1.5, LowerOrderMode::Saturating).unwrap();
        let fd = Plain(b.clone());
        let mut rng = sampling::rng(5);
        for _ in 0..100 {
            let (t, x) = sampling::point_in(&mut rng, &unit());
            let a = sampling::vector(&mut rng, 1e-2, 10.0);
            let d = b.tangent(t, x, a) - fd.tangent(t, x, a);
            assert!(d.norm() < 1e-6 * (1.0 + b.tangent(t, x, a).norm()));
        }
    }

    #[test]
    fn hemicontinuity_jump_vanishes_with_step() {
        let p = ExponentField::affine(1.1, [0.9, 0.0], 0.0, unit()).unwrap();
        let s = prototype_flux(&p, 0.05).unwrap();
        let (a, b, c) = (
            SymTensor2::new(0.2, -0.1, 0.3),
            SymTensor2::new(-1.0, 0.5, 0.25),
            SymTensor2::new(0.3, 0.3, -0.7),
        );
        let jumps: Vec<f64> = [1e-2, 1e-4, 1e-6, 1e-8]
            .iter()
            .map(|&h| hemicontinuity_jump(&s, 0.5, [0.3, 0.6], &a, &b, &c, 0.0, h))
            .collect();
        assert!(jumps.windows(2).all(|w| w[1] < w[0]));
        assert!(jumps[3] < 1e-6);
    }

    #[test]
    fn c5_zero_field_and_quadratic_identity() {
        let h = build_mesh_hierarchy(Domain::UnitSquare, 3).unwrap();
        let p = constant(2.0);
        let s = prototype_flux(&p, 0.0).unwrap();
        let b = default_lower_order(&p, None, 0.0, LowerOrderMode::Zero).unwrap();
        let op = SliceOperator {
            flux: &s,
            lower: &b,
            rule: TriangleRule::ThreePoint,
        };
        let zero = FEFunction::zeros(&h[2]);
        let r = check_c5(&op, OperatorFamily::S, &[zero], 0.0, 0);
        assert_eq!(r.worst_slack, 0.0);

        let mut rng = sampling::rng(2);
        let u = sampling::fe_field(&mut rng, &h[2], 0.5, 2.0);
        let rho = op.rho_sym_grad(&u, 0.0);
        assert!((op.flux_pairing(&u, &u, 0.0) - rho).abs() < 1e-12 * (1.0 + rho));
        let r = check_c5(&op, OperatorFamily::S, std::slice::from_ref(&u), 0.0, 0);
        assert!((r.worst_slack - 0.5 * rho).abs() < 1e-12 * (1.0 + rho));
    }

    #[test]
    fn bound_function_fit_covers_calibration_data() {
        let data = [(0.0, 1.0), (2.0, 3.0), (0.5, 0.1)];
        let b = BoundFunction::fit(&data);
        for &(s, r) in &data {
            assert!(b.eval(s) >= r);
        }
        assert!(b.eval(1.0) <= b.eval(2.0));
    }
}
