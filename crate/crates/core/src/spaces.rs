//! Quadrature-sampled fields, modulars and Luxemburg norms.
//!
//! The measure-theoretic objects of variable exponent spaces are replaced by
//! finite weighted sums over quadrature nodes. All reductions run in node
//! order so results are bit-for-bit reproducible.

use crate::exponent::{ExponentField, SpaceTimeBox};
use crate::quadrature::gauss_legendre_interval;
use crate::tensor::{dot, norm, SymTensor2, Vec2};
use crate::{Error, Result, SpaceTimePoint};
use std::sync::Arc;

/// Quadrature nodes `(tᵢ, xᵢ)` with strictly positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    points: Vec<SpaceTimePoint>,
    weights: Vec<f64>,
}

impl Quadrature {
    pub fn new(points: Vec<SpaceTimePoint>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::QuadratureMismatch(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::QuadratureMismatch(format!("non-positive weight {w}")));
        }
        Ok(Quadrature { points, weights })
    }

    /// Tensor Gauss-Legendre rule on `[a₁, b₁] × [a₂, b₂]` at the fixed time `t`.
    pub fn spatial_box(x1: [f64; 2], x2: [f64; 2], n: usize, t: f64) -> Self {
        let (ax, aw) = gauss_legendre_interval(n, x1[0], x1[1]);
        let (bx, bw) = gauss_legendre_interval(n, x2[0], x2[1]);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (xa, wa) in ax.iter().zip(&aw) {
            for (xb, wb) in bx.iter().zip(&bw) {
                points.push((t, [*xa, *xb]));
                weights.push(wa * wb);
            }
        }
        Quadrature { points, weights }
    }

    /// Tensor Gauss-Legendre rule on a whole space-time box.
    pub fn space_time_box(domain: &SpaceTimeBox, nt: usize, nx: usize) -> Self {
        let (ts, tw) = gauss_legendre_interval(nt, domain.t[0], domain.t[1]);
        let slice = Quadrature::spatial_box(domain.x1, domain.x2, nx, 0.0);
        let mut points = Vec::with_capacity(nt * slice.len());
        let mut weights = Vec::with_capacity(nt * slice.len());
        for (t, wt) in ts.iter().zip(&tw) {
            for ((_, x), w) in slice.points.iter().zip(&slice.weights) {
                points.push((*t, *x));
                weights.push(wt * w);
            }
        }
        Quadrature { points, weights }
    }

    pub fn points(&self) -> &[SpaceTimePoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Total measure `Σ wᵢ`.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank {
    Scalar,
    Vector,
    SymTensor,
}

impl Rank {
    pub fn name(self) -> &'static str {
        match self {
            Rank::Scalar => "scalar",
            Rank::Vector => "vector",
            Rank::SymTensor => "sym_tensor",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValues {
    Scalar(Vec<f64>),
    Vector(Vec<Vec2>),
    SymTensor(Vec<SymTensor2>),
}

impl FieldValues {
    fn len(&self) -> usize {
        match self {
            FieldValues::Scalar(v) => v.len(),
            FieldValues::Vector(v) => v.len(),
            FieldValues::SymTensor(v) => v.len(),
        }
    }
}

/// A scalar, vector or symmetric-tensor field sampled at quadrature nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    values: FieldValues,
    quad: Arc<Quadrature>,
}

impl DiscreteField {
    pub fn new(values: FieldValues, quad: Arc<Quadrature>) -> Result<Self> {
        if values.len() != quad.len() {
            return Err(Error::QuadratureMismatch(format!(
                "{} values on {} nodes",
                values.len(),
                quad.len()
            )));
        }
        Ok(DiscreteField { values, quad })
    }

    pub fn scalar_from_fn(quad: Arc<Quadrature>, f: impl Fn(f64, [f64; 2]) -> f64) -> Self {
        let v = quad.points().iter().map(|&(t, x)| f(t, x)).collect();
        DiscreteField {
            values: FieldValues::Scalar(v),
            quad,
        }
    }

    pub fn vector_from_fn(quad: Arc<Quadrature>, f: impl Fn(f64, [f64; 2]) -> Vec2) -> Self {
        let v = quad.points().iter().map(|&(t, x)| f(t, x)).collect();
        DiscreteField {
            values: FieldValues::Vector(v),
            quad,
        }
    }

    pub fn tensor_from_fn(quad: Arc<Quadrature>, f: impl Fn(f64, [f64; 2]) -> SymTensor2) -> Self {
        let v = quad.points().iter().map(|&(t, x)| f(t, x)).collect();
        DiscreteField {
            values: FieldValues::SymTensor(v),
            quad,
        }
    }

    pub fn rank(&self) -> Rank {
        match self.values {
            FieldValues::Scalar(_) => Rank::Scalar,
            FieldValues::Vector(_) => Rank::Vector,
            FieldValues::SymTensor(_) => Rank::SymTensor,
        }
    }

    pub fn values(&self) -> &FieldValues {
        &self.values
    }

    pub fn quadrature(&self) -> &Arc<Quadrature> {
        &self.quad
    }

    pub fn len(&self) -> usize {
        self.quad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quad.is_empty()
    }

    /// Euclidean or Frobenius magnitude at node `i`.
    #[inline]
    pub fn magnitude(&self, i: usize) -> f64 {
        match &self.values {
            FieldValues::Scalar(v) => v[i].abs(),
            FieldValues::Vector(v) => norm(v[i]),
            FieldValues::SymTensor(v) => v[i].norm(),
        }
    }

    /// Node components in a flat list (1, 2 or 3 entries per node).
    pub fn components(&self, i: usize) -> Vec<f64> {
        match &self.values {
            FieldValues::Scalar(v) => vec![v[i]],
            FieldValues::Vector(v) => v[i].to_vec(),
            FieldValues::SymTensor(v) => vec![v[i].xx, v[i].xy, v[i].yy],
        }
    }

    pub fn scaled(&self, alpha: f64) -> DiscreteField {
        let values = match &self.values {
            FieldValues::Scalar(v) => FieldValues::Scalar(v.iter().map(|a| alpha * a).collect()),
            FieldValues::Vector(v) => FieldValues::Vector(v.iter().map(|a| [alpha * a[0], alpha * a[1]]).collect()),
            FieldValues::SymTensor(v) => FieldValues::SymTensor(v.iter().map(|a| alpha * *a).collect()),
        };
        DiscreteField {
            values,
            quad: self.quad.clone(),
        }
    }

    pub fn try_add(&self, other: &DiscreteField) -> Result<DiscreteField> {
        self.check_compatible(other)?;
        let values = match (&self.values, &other.values) {
            (FieldValues::Scalar(a), FieldValues::Scalar(b)) => {
                FieldValues::Scalar(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            (FieldValues::Vector(a), FieldValues::Vector(b)) => {
                FieldValues::Vector(a.iter().zip(b).map(|(x, y)| [x[0] + y[0], x[1] + y[1]]).collect())
            }
            (FieldValues::SymTensor(a), FieldValues::SymTensor(b)) => {
                FieldValues::SymTensor(a.iter().zip(b).map(|(x, y)| *x + *y).collect())
            }
            _ => unreachable!("ranks checked"),
        };
        Ok(DiscreteField {
            values,
            quad: self.quad.clone(),
        })
    }

    /// Pointwise contraction `g ⊙ f` (product, dot or Frobenius product).
    fn contraction(&self, other: &DiscreteField, i: usize) -> f64 {
        match (&self.values, &other.values) {
            (FieldValues::Scalar(a), FieldValues::Scalar(b)) => a[i] * b[i],
            (FieldValues::Vector(a), FieldValues::Vector(b)) => dot(a[i], b[i]),
            (FieldValues::SymTensor(a), FieldValues::SymTensor(b)) => a[i].ddot(&b[i]),
            _ => unreachable!("ranks checked"),
        }
    }

    fn check_compatible(&self, other: &DiscreteField) -> Result<()> {
        if self.rank() != other.rank() {
            return Err(Error::RankMismatch {
                left: self.rank().name(),
                right: other.rank().name(),
            });
        }
        if !Arc::ptr_eq(&self.quad, &other.quad) && *self.quad != *other.quad {
            return Err(Error::QuadratureMismatch("fields live on different quadratures".into()));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        (0..self.len()).all(|i| self.magnitude(i) == 0.0)
    }
}

/// Value of the modular `ρ_{p(·)}(f)` together with the exponent it refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct ModularValue {
    pub value: f64,
    pub exponent: String,
}

/// `|a|^p` evaluated as `exp(p log|a|)`, with `0^p = 0`.
#[inline]
pub fn powp(a: f64, p: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        (p * a.ln()).exp()
    }
}

/// `ρ_{p(·)}(f) = Σᵢ wᵢ |fᵢ|^{p(tᵢ, xᵢ)}`.
pub fn modular(f: &DiscreteField, p: &ExponentField) -> ModularValue {
    let q = f.quadrature();
    let value = q
        .points()
        .iter()
        .zip(q.weights())
        .enumerate()
        .map(|(i, (&(t, x), w))| w * powp(f.magnitude(i), p.eval(t, x)))
        .sum();
    ModularValue {
        value,
        exponent: p.label().to_string(),
    }
}

/// Iteration cap of the Luxemburg bisection.
pub const LUXEMBURG_MAX_ITER: usize = 200;
const OVERFLOW_GUARD: f64 = 1e300;

/// Luxemburg norm `inf{λ > 0 : ρ(f/λ) ≤ 1}`.
///
/// The returned `λ` always satisfies `ρ(f/λ) ≤ 1`; `tol` bounds how far below
/// one the modular may sit, `ρ(f/λ) ≥ 1 − tol`.
pub fn luxemburg_norm(f: &DiscreteField, p: &ExponentField, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::BadSpec(format!("tolerance must be positive, got {tol}")));
    }
    let q = f.quadrature();
    // (log|fᵢ|, pᵢ, wᵢ) over nonzero nodes
    let mut terms = Vec::with_capacity(f.len());
    for (i, (&(t, x), &w)) in q.points().iter().zip(q.weights()).enumerate() {
        let a = f.magnitude(i);
        if !a.is_finite() || a >= OVERFLOW_GUARD {
            return Err(Error::RootFindFailure {
                reason: format!("field magnitude {a} at node {i} exceeds the overflow guard"),
            });
        }
        if a > 0.0 {
            terms.push((a.ln(), p.eval(t, x), w));
        }
    }
    if terms.is_empty() {
        return Ok(0.0);
    }
    // ρ(f / e^μ)
    let rho = |mu: f64| -> f64 { terms.iter().map(|&(la, pi, w)| w * (pi * (la - mu)).exp()).sum() };
    let p_lo = terms.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
    let p_hi = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    let log_rho1 = rho(0.0).ln();
    if !log_rho1.is_finite() {
        return Err(Error::RootFindFailure {
            reason: format!("modular of the field is not finite ({log_rho1})"),
        });
    }
    // modular/norm bounds: ‖f‖ lies between ρ(f)^{1/p⁺} and ρ(f)^{1/p⁻}
    let (a, b) = (log_rho1 / p_hi, log_rho1 / p_lo);
    let pad = 1e-12 * (1.0 + log_rho1.abs());
    let mut lo = a.min(b) - pad;
    let mut hi = a.max(b) + pad;
    let mut expand = 0;
    while rho(hi) > 1.0 || rho(lo) < 1.0 {
        if expand > 60 {
            return Err(Error::RootFindFailure {
                reason: "could not bracket the unit level of the modular".into(),
            });
        }
        let width = (hi - lo).max(1e-12);
        if rho(hi) > 1.0 {
            hi += width;
        }
        if rho(lo) < 1.0 {
            lo -= width;
        }
        expand += 1;
    }
    for _ in 0..LUXEMBURG_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if rho(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let at_hi = rho(hi);
    if !(at_hi <= 1.0 && at_hi >= 1.0 - tol) {
        return Err(Error::RootFindFailure {
            reason: format!("modular at the returned norm is {at_hi}, outside [1 - {tol}, 1]"),
        });
    }
    // exp and the direct modular evaluation may round a few ulps above the level
    let mut norm = hi.exp();
    for _ in 0..16 {
        if modular(&f.scaled(1.0 / norm), p).value <= 1.0 {
            break;
        }
        norm *= 1.0 + 4.0 * f64::EPSILON;
    }
    Ok(norm)
}

/// Both sides of `‖g f‖_{L¹} ≤ 2 ‖g‖_{p'(·)} ‖f‖_{p(·)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

pub fn holder_check(g: &DiscreteField, f: &DiscreteField, p: &ExponentField) -> Result<HolderCheck> {
    g.check_compatible(f)?;
    let w = f.quadrature().weights();
    let lhs: f64 = (0..f.len()).map(|i| w[i] * g.contraction(f, i).abs()).sum();
    let tol = 1e-13;
    let rhs = 2.0 * luxemburg_norm(g, &p.conjugate_field(), tol)? * luxemburg_norm(f, p, tol)?;
    Ok(HolderCheck {
        lhs,
        rhs,
        slack: rhs - lhs,
    })
}

/// Slack of `‖f‖_{q(·)} ≤ 2(1 + |G|) ‖f‖_{p(·)}` for `q ≤ p`.
pub fn embedding_check(f: &DiscreteField, q: &ExponentField, p: &ExponentField) -> Result<f64> {
    for &(t, x) in f.quadrature().points() {
        let (qv, pv) = (q.eval(t, x), p.eval(t, x));
        if qv > pv {
            return Err(Error::ExponentOrderViolation(format!(
                "q = {qv} exceeds p = {pv} at t = {t}, x = ({}, {})",
                x[0], x[1]
            )));
        }
    }
    let measure = f.quadrature().measure();
    let tol = 1e-13;
    Ok(2.0 * (1.0 + measure) * luxemburg_norm(f, p, tol)? - luxemburg_norm(f, q, tol)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_quad(n: usize) -> Arc<Quadrature> {
        Arc::new(Quadrature::spatial_box([0.0, 1.0], [0.0, 1.0], n, 0.0))
    }

    fn unit_box() -> SpaceTimeBox {
        SpaceTimeBox::unit_square(1.0)
    }

    #[test]
    fn quadrature_rejects_bad_weights() {
        assert!(Quadrature::new(vec![(0.0, [0.0, 0.0])], vec![0.0]).is_err());
        assert!(Quadrature::new(vec![(0.0, [0.0, 0.0])], vec![]).is_err());
    }

    #[test]
    fn modular_of_one_is_measure() {
        let q = Arc::new(Quadrature::spatial_box([0.0, 2.0], [0.0, 3.0], 4, 0.0));
        let f = DiscreteField::scalar_from_fn(q, |_, _| 1.0);
        let p = ExponentField::affine(1.5, [0.1, 0.2], 0.0, SpaceTimeBox::new([0.0, 1.0], [0.0, 2.0], [0.0, 3.0])).unwrap();
        assert!((modular(&f, &p).value - 6.0).abs() < 1e-12);
    }

    #[test]
    fn modular_of_two_with_affine_exponent() {
        // ∫₀¹ 2^{1+s} ds = 2 / ln 2
        let f = DiscreteField::scalar_from_fn(unit_quad(12), |_, _| 2.0);
        let p = ExponentField::affine(1.0 + 1e-300, [1.0, 0.0], 0.0, unit_box());
        // p = 1 + x₁ has p⁻ = 1 at the face x₁ = 0; use the sampled form on interior nodes
        assert!(p.is_err());
        let p = ExponentField::new(
            "1 + x1",
            unit_box(),
            |_, x| 1.0 + x[0],
            &crate::exponent::SampleLattice::from_points(vec![(0.0, [0.5, 0.5])]),
        )
        .unwrap();
        let expected = 2.0 / std::f64::consts::LN_2;
        assert!((modular(&f, &p).value - expected).abs() < 1e-12);
    }

    #[test]
    fn luxemburg_zero_and_constant() {
        let q = unit_quad(6);
        let zero = DiscreteField::scalar_from_fn(q.clone(), |_, _| 0.0);
        let p = ExponentField::constant(3.0, unit_box()).unwrap();
        assert_eq!(luxemburg_norm(&zero, &p, 1e-10).unwrap(), 0.0);

        let big = Arc::new(Quadrature::spatial_box([0.0, 2.0], [0.0, 1.5], 5, 0.0));
        let c = DiscreteField::scalar_from_fn(big, |_, _| 1.7);
        let n = luxemburg_norm(&c, &p, 1e-10).unwrap();
        assert!((n - 1.7 * 3f64.powf(1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn luxemburg_affine_exponent_matches_scalar_root() {
        let p = ExponentField::new(
            "1 + x1",
            unit_box(),
            |_, x| 1.0 + x[0],
            &crate::exponent::SampleLattice::from_points(vec![(0.0, [0.5, 0.5])]),
        )
        .unwrap();
        // f ≡ 1: ∫₀¹ λ^{-(1+s)} ds = 1 is solved by λ = 1
        let one = DiscreteField::scalar_from_fn(unit_quad(16), |_, _| 1.0);
        assert!((luxemburg_norm(&one, &p, 1e-10).unwrap() - 1.0).abs() < 1e-12);

        // f = e^{x1}: solve ∫₀¹ (e^s/λ)^{1+s} ds = 1 with composite Simpson and plain bisection
        let rho = |lam: f64| {
            let m = 20_000;
            let h = 1.0 / m as f64;
            let v = |s: f64| (s.exp() / lam).powf(1.0 + s);
            let mut acc = v(0.0) + v(1.0);
            for i in 1..m {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * v(i as f64 * h);
            }
            acc * h / 3.0
        };
        let (mut lo, mut hi) = (0.5_f64, 10.0_f64);
        for _ in 0..100 {
            let m = 0.5 * (lo + hi);
            if rho(m) > 1.0 {
                lo = m;
            } else {
                hi = m;
            }
        }
        let oracle = 0.5 * (lo + hi);
        let f = DiscreteField::scalar_from_fn(unit_quad(16), |_, x| x[0].exp());
        let n = luxemburg_norm(&f, &p, 1e-12).unwrap();
        assert!((n - oracle).abs() < 1e-10, "{n} vs {oracle}");
    }

    #[test]
    fn luxemburg_rejects_overflow() {
        let f = DiscreteField::scalar_from_fn(unit_quad(2), |_, x| if x[0] < 0.5 { 1e301 } else { 1.0 });
        let p = ExponentField::constant(2.0, unit_box()).unwrap();
        assert!(matches!(luxemburg_norm(&f, &p, 1e-8), Err(Error::RootFindFailure { .. })));
    }

    #[test]
    fn holder_examples() {
        let q = unit_quad(5);
        let one = DiscreteField::scalar_from_fn(q.clone(), |_, _| 1.0);
        let p2 = ExponentField::constant(2.0, unit_box()).unwrap();
        let h = holder_check(&one, &one, &p2).unwrap();
        assert!((h.lhs - 1.0).abs() < 1e-12 && (h.rhs - 2.0).abs() < 1e-12 && (h.slack - 1.0).abs() < 1e-12);

        let f = DiscreteField::vector_from_fn(q, |_, x| [x[0] - 0.3, 2.0 * x[1] * x[0]]);
        let h = holder_check(&f, &f, &p2).unwrap();
        let l2sq = h.lhs;
        assert!((h.slack - l2sq).abs() < 1e-10);
    }

    #[test]
    fn holder_rejects_rank_mismatch() {
        let q = unit_quad(3);
        let a = DiscreteField::scalar_from_fn(q.clone(), |_, _| 1.0);
        let b = DiscreteField::vector_from_fn(q, |_, _| [1.0, 0.0]);
        let p = ExponentField::constant(2.0, unit_box()).unwrap();
        assert!(matches!(holder_check(&a, &b, &p), Err(Error::RankMismatch { .. })));
    }

    #[test]
    fn embedding_examples() {
        let q = unit_quad(4);
        let one = DiscreteField::scalar_from_fn(q.clone(), |_, _| 1.0);
        let q15 = ExponentField::constant(1.5, unit_box()).unwrap();
        let p2 = ExponentField::constant(2.0, unit_box()).unwrap();
        assert!((embedding_check(&one, &q15, &p2).unwrap() - 3.0).abs() < 1e-12);
        assert!(matches!(embedding_check(&one, &p2, &q15), Err(Error::ExponentOrderViolation(_))));

        let f = DiscreteField::scalar_from_fn(q, |_, x| (3.0 * x[0]).sin() + x[1]);
        let n = luxemburg_norm(&f, &p2, 1e-12).unwrap();
        assert!((embedding_check(&f, &p2, &p2).unwrap() - 3.0 * n).abs() < 1e-12);
    }
}
