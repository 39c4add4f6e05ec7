//! Variable exponents `p(t, x)` on a space-time box.
//!
//! An [`ExponentField`] is a closed-form callable together with cached limit
//! exponents `p⁻ ≤ p⁺`. Essential infima and suprema cannot be sampled, so the
//! limits are lattice extrema unless the constructor knows them exactly
//! (constants, affine maps, monotone transforms of a known field). Outside its
//! box a field is evaluated at the nearest point of the box.

use crate::{Error, Result, SpaceTimePoint};
use std::fmt;
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(f64, [f64; 2]) -> f64 + Send + Sync>;

/// Closed box `[t₀, t₁] × [a₁, b₁] × [a₂, b₂]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeBox {
    pub t: [f64; 2],
    pub x1: [f64; 2],
    pub x2: [f64; 2],
}

impl SpaceTimeBox {
    pub fn new(t: [f64; 2], x1: [f64; 2], x2: [f64; 2]) -> Self {
        SpaceTimeBox { t, x1, x2 }
    }

    /// `[0, T] × [0, 1]²`.
    pub fn unit_square(t_final: f64) -> Self {
        SpaceTimeBox::new([0.0, t_final], [0.0, 1.0], [0.0, 1.0])
    }

    /// `[0, T] × [−R, R]²`, the bounding box of the disk of radius `R`.
    pub fn centered_square(radius: f64, t_final: f64) -> Self {
        SpaceTimeBox::new([0.0, t_final], [-radius, radius], [-radius, radius])
    }

    pub fn clamp(&self, t: f64, x: [f64; 2]) -> SpaceTimePoint {
        (
            t.clamp(self.t[0], self.t[1]),
            [x[0].clamp(self.x1[0], self.x1[1]), x[1].clamp(self.x2[0], self.x2[1])],
        )
    }

    pub fn contains(&self, t: f64, x: [f64; 2]) -> bool {
        self.clamp(t, x) == (t, x)
    }

    pub fn corners(&self) -> impl Iterator<Item = SpaceTimePoint> + '_ {
        (0..8).map(move |i| (self.t[i & 1], [self.x1[(i >> 1) & 1], self.x2[(i >> 2) & 1]]))
    }
}

/// Finite set of space-time sample points used for inf/sup and regularity checks.
#[derive(Debug, Clone)]
pub struct SampleLattice {
    points: Vec<SpaceTimePoint>,
}

impl SampleLattice {
    /// Uniform tensor lattice including the box faces. A count of 1 in a
    /// direction places the single node at the midpoint.
    pub fn uniform(domain: &SpaceTimeBox, nt: usize, nx1: usize, nx2: usize) -> Self {
        let axis = |r: [f64; 2], n: usize| -> Vec<f64> {
            if n <= 1 {
                vec![0.5 * (r[0] + r[1])]
            } else {
                (0..n)
                    .map(|i| r[0] + (r[1] - r[0]) * i as f64 / (n - 1) as f64)
                    .collect()
            }
        };
        let ts = axis(domain.t, nt);
        let x1s = axis(domain.x1, nx1);
        let x2s = axis(domain.x2, nx2);
        let mut points = Vec::with_capacity(ts.len() * x1s.len() * x2s.len());
        for &t in &ts {
            for &a in &x1s {
                for &b in &x2s {
                    points.push((t, [a, b]));
                }
            }
        }
        SampleLattice { points }
    }

    /// The default 64 × 64 × 64 lattice.
    pub fn default_for(domain: &SpaceTimeBox) -> Self {
        SampleLattice::uniform(domain, 64, 64, 64)
    }

    pub fn from_points(points: Vec<SpaceTimePoint>) -> Self {
        SampleLattice { points }
    }

    pub fn points(&self) -> &[SpaceTimePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A variable exponent `p(t, x)` with `1 < p⁻ ≤ p⁺ < ∞`.
#[derive(Clone)]
pub struct ExponentField {
    label: String,
    eval: ScalarFn,
    domain: SpaceTimeBox,
    p_minus: f64,
    p_plus: f64,
}

impl fmt::Debug for ExponentField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExponentField")
            .field("label", &self.label)
            .field("p_minus", &self.p_minus)
            .field("p_plus", &self.p_plus)
            .field("domain", &self.domain)
            .finish()
    }
}

impl ExponentField {
    /// General constructor: limits are the extrema over `lattice`.
    pub fn new<F>(label: impl Into<String>, domain: SpaceTimeBox, f: F, lattice: &SampleLattice) -> Result<Self>
    where
        F: Fn(f64, [f64; 2]) -> f64 + Send + Sync + 'static,
    {
        let mut field = ExponentField {
            label: label.into(),
            eval: Arc::new(f),
            domain,
            p_minus: f64::NAN,
            p_plus: f64::NAN,
        };
        let (lo, hi) = limit_exponents(&field, lattice)?;
        field.p_minus = lo;
        field.p_plus = hi;
        Ok(field)
    }

    /// General constructor on the default 64³ lattice.
    pub fn from_fn<F>(label: impl Into<String>, domain: SpaceTimeBox, f: F) -> Result<Self>
    where
        F: Fn(f64, [f64; 2]) -> f64 + Send + Sync + 'static,
    {
        let lattice = SampleLattice::default_for(&domain);
        ExponentField::new(label, domain, f, &lattice)
    }

    pub fn constant(value: f64, domain: SpaceTimeBox) -> Result<Self> {
        check_exponent(value)?;
        Ok(ExponentField {
            label: format!("constant {value}"),
            eval: Arc::new(move |_, _| value),
            domain,
            p_minus: value,
            p_plus: value,
        })
    }

    /// `p(t, x) = a + b₁x₁ + b₂x₂ + b_t t`; the limits are attained at box corners.
    pub fn affine(a: f64, b: [f64; 2], bt: f64, domain: SpaceTimeBox) -> Result<Self> {
        let f = move |t: f64, x: [f64; 2]| a + b[0] * x[0] + b[1] * x[1] + bt * t;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (t, x) in domain.corners() {
            let v = f(t, x);
            check_exponent(v)?;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok(ExponentField {
            label: format!("affine {a} {} {} {bt}", b[0], b[1]),
            eval: Arc::new(f),
            domain,
            p_minus: lo,
            p_plus: hi,
        })
    }

    /// Field with limits supplied by the caller, who knows them exactly.
    pub(crate) fn with_known_limits(
        label: impl Into<String>,
        domain: SpaceTimeBox,
        eval: ScalarFn,
        p_minus: f64,
        p_plus: f64,
    ) -> Result<Self> {
        check_exponent(p_minus)?;
        if !(p_plus.is_finite() && p_plus >= p_minus) {
            return Err(Error::BadSpec(format!("invalid limits ({p_minus}, {p_plus})")));
        }
        Ok(ExponentField {
            label: label.into(),
            eval,
            domain,
            p_minus,
            p_plus,
        })
    }

    #[inline]
    pub fn eval(&self, t: f64, x: [f64; 2]) -> f64 {
        let (t, x) = self.domain.clamp(t, x);
        (self.eval)(t, x)
    }

    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }

    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn domain(&self) -> &SpaceTimeBox {
        &self.domain
    }

    pub fn is_constant(&self) -> bool {
        self.p_minus == self.p_plus
    }

    /// Compose with a non-decreasing scalar map `g`; limits become `g(p⁻), g(p⁺)`.
    pub fn map_monotone<G>(&self, label: impl Into<String>, g: G) -> Result<ExponentField>
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let lo = g(self.p_minus);
        let hi = g(self.p_plus);
        let inner = self.eval.clone();
        let g = Arc::new(g);
        ExponentField::with_known_limits(label, self.domain, Arc::new(move |t, x| g(inner(t, x))), lo, hi)
    }

    /// The conjugate exponent `p' = p / (p − 1)`; limits swap since `p ↦ p'` is decreasing.
    pub fn conjugate_field(&self) -> ExponentField {
        let inner = self.eval.clone();
        ExponentField {
            label: format!("({})'", self.label),
            eval: Arc::new(move |t, x| {
                let p = inner(t, x);
                p / (p - 1.0)
            }),
            domain: self.domain,
            p_minus: self.p_plus / (self.p_plus - 1.0),
            p_plus: self.p_minus / (self.p_minus - 1.0),
        }
    }

    /// The variable parabolic interpolation exponent `p_*(t, x)`.
    pub fn parabolic_star_field(&self, dim: usize) -> Result<ExponentField> {
        parabolic_star(2.0, dim)?;
        self.map_monotone(format!("({})_*", self.label), move |p| {
            parabolic_star(p, dim).expect("dimension validated")
        })
    }
}

fn check_exponent(value: f64) -> Result<()> {
    if value.is_finite() && value > 1.0 {
        Ok(())
    } else {
        Err(Error::DegenerateExponent { value })
    }
}

/// Hölder conjugate `p' = p / (p − 1)`.
pub fn conjugate(p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(p / (p - 1.0))
}

/// Parabolic interpolation exponent: `p(d + 2)/d` for `p < d`, `p + 2` otherwise.
pub fn parabolic_star(p: f64, dim: usize) -> Result<f64> {
    if dim < 2 {
        return Err(Error::UnsupportedDimension { dim });
    }
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::DegenerateExponent { value: p });
    }
    let d = dim as f64;
    Ok(if p < d { p * (d + 2.0) / d } else { p + 2.0 })
}

/// Minimum and maximum of `p` over the lattice.
pub fn limit_exponents(p: &ExponentField, lattice: &SampleLattice) -> Result<(f64, f64)> {
    if lattice.is_empty() {
        return Err(Error::BadSpec("empty sample lattice".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &(t, x) in lattice.points() {
        let v = p.eval(t, x);
        check_exponent(v)?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

/// Sampled log-Hölder diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogHolderReport {
    /// `max |p(z) − p(w)| · log(e + 1/|z − w|)` over sampled pairs.
    pub local_constant: f64,
    /// `max |p(z) − p_∞| · log(e + |x_z|)`.
    pub decay_constant: f64,
    /// Value at the sample farthest from the spatial origin.
    pub p_infinity: f64,
    /// `max(0, local_constant − budget)`.
    pub max_violation: f64,
}

/// Brute-force pairwise log-Hölder check over the lattice (space-time distance).
pub fn log_holder_check(p: &ExponentField, lattice: &SampleLattice, budget_c1: f64) -> Result<LogHolderReport> {
    let pts = lattice.points();
    if pts.len() < 2 {
        return Err(Error::BadSpec("log-Hölder check needs at least two samples".into()));
    }
    let values: Vec<f64> = pts.iter().map(|&(t, x)| p.eval(t, x)).collect();
    let mut local: f64 = 0.0;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let (ti, xi) = pts[i];
            let (tj, xj) = pts[j];
            let dist = ((ti - tj).powi(2) + (xi[0] - xj[0]).powi(2) + (xi[1] - xj[1]).powi(2)).sqrt();
            if dist == 0.0 {
                continue;
            }
            let modulus = (std::f64::consts::E + 1.0 / dist).ln();
            local = local.max((values[i] - values[j]).abs() * modulus);
        }
    }
    let far = (0..pts.len())
        .max_by(|&a, &b| {
            let ra = pts[a].1[0].hypot(pts[a].1[1]);
            let rb = pts[b].1[0].hypot(pts[b].1[1]);
            ra.total_cmp(&rb)
        })
        .expect("non-empty");
    let p_inf = values[far];
    let decay = pts
        .iter()
        .zip(&values)
        .map(|(&(_, x), &v)| (v - p_inf).abs() * (std::f64::consts::E + x[0].hypot(x[1])).ln())
        .fold(0.0, f64::max);
    Ok(LogHolderReport {
        local_constant: local,
        decay_constant: decay,
        p_infinity: p_inf,
        max_violation: (local - budget_c1).max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> SpaceTimeBox {
        SpaceTimeBox::unit_square(1.0)
    }

    #[test]
    fn conjugate_examples() {
        assert_eq!(conjugate(2.0).unwrap(), 2.0);
        assert!((conjugate(1.1).unwrap() - 11.0).abs() < 1e-12);
        assert!((conjugate(4.0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!(matches!(conjugate(1.0), Err(Error::DegenerateExponent { .. })));
        assert!(matches!(conjugate(0.5), Err(Error::DegenerateExponent { .. })));
    }

    #[test]
    fn parabolic_star_examples() {
        assert_eq!(parabolic_star(2.0, 2).unwrap(), 4.0);
        assert!((parabolic_star(2.0, 3).unwrap() - 10.0 / 3.0).abs() < 1e-15);
        assert_eq!(parabolic_star(3.0, 2).unwrap(), 5.0);
        assert!(matches!(parabolic_star(2.0, 1), Err(Error::UnsupportedDimension { dim: 1 })));
    }

    #[test]
    fn parabolic_star_is_continuous_at_dimension() {
        for d in 2..6 {
            let below = parabolic_star(d as f64 - 1e-12, d).unwrap();
            let at = parabolic_star(d as f64, d).unwrap();
            assert!((below - at).abs() < 1e-10);
        }
    }

    #[test]
    fn limit_exponents_examples() {
        let c = ExponentField::constant(2.0, unit()).unwrap();
        let lat = SampleLattice::uniform(&unit(), 3, 9, 9);
        assert_eq!(limit_exponents(&c, &lat).unwrap(), (2.0, 2.0));

        let a = ExponentField::affine(1.1, [0.9, 0.0], 0.0, unit()).unwrap();
        let (lo, hi) = limit_exponents(&a, &lat).unwrap();
        assert!((lo - 1.1).abs() < 1e-15 && (hi - 2.0).abs() < 1e-15);
        assert!((a.p_minus() - 1.1).abs() < 1e-15 && (a.p_plus() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_exponent_rejected_at_construction() {
        assert!(ExponentField::constant(1.0, unit()).is_err());
        assert!(ExponentField::affine(1.0, [0.5, 0.0], 0.0, unit()).is_err());
        let r = ExponentField::from_fn("dip", unit(), |_, x| 1.5 - x[0]);
        assert!(matches!(r, Err(Error::DegenerateExponent { .. })));
    }

    #[test]
    fn evaluation_outside_box_uses_nearest_point() {
        let a = ExponentField::affine(1.5, [0.5, 0.0], 0.0, unit()).unwrap();
        assert_eq!(a.eval(0.3, [3.0, 0.5]), a.eval(0.3, [1.0, 0.5]));
        assert_eq!(a.eval(-1.0, [-2.0, 7.0]), 1.5);
    }

    #[test]
    fn conjugate_field_swaps_limits() {
        let a = ExponentField::affine(1.5, [1.0, 0.0], 0.0, unit()).unwrap();
        let c = a.conjugate_field();
        assert!((c.p_minus() - 2.5 / 1.5).abs() < 1e-14);
        assert!((c.p_plus() - 3.0).abs() < 1e-14);
        assert!((c.eval(0.0, [0.0, 0.0]) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn log_holder_constant_field() {
        let c = ExponentField::constant(1.7, unit()).unwrap();
        let lat = SampleLattice::uniform(&unit(), 2, 5, 5);
        let r = log_holder_check(&c, &lat, 0.0).unwrap();
        assert_eq!(r.local_constant, 0.0);
        assert_eq!(r.max_violation, 0.0);
    }

    #[test]
    fn log_holder_affine_within_budget() {
        let a = ExponentField::affine(1.1, [0.9, 0.0], 0.0, unit()).unwrap();
        let lat = SampleLattice::uniform(&unit(), 2, 12, 12);
        let r = log_holder_check(&a, &lat, 10.0).unwrap();
        // oracle: brute force over the same pairs, written independently
        let pts = lat.points();
        let mut oracle: f64 = 0.0;
        for z in pts {
            for w in pts {
                let d = ((z.0 - w.0).powi(2) + (z.1[0] - w.1[0]).powi(2) + (z.1[1] - w.1[1]).powi(2)).sqrt();
                if d > 0.0 {
                    let diff = 0.9 * (z.1[0] - w.1[0]).abs();
                    oracle = oracle.max(diff * (1f64.exp() + 1.0 / d).ln());
                }
            }
        }
        assert!((r.local_constant - oracle).abs() < 1e-12);
        assert_eq!(r.max_violation, 0.0);
    }

    #[test]
    fn log_holder_detects_jump() {
        let step = ExponentField::from_fn("step", unit(), |_, x| if x[0] < 0.5 { 1.5 } else { 2.0 }).unwrap();
        let h = 1e-6;
        let lat = SampleLattice::from_points(vec![(0.5, [0.5 - h / 2.0, 0.5]), (0.5, [0.5 + h / 2.0, 0.5])]);
        let r = log_holder_check(&step, &lat, 1.0).unwrap();
        let expected = 0.5 * (1f64.exp() + 1.0 / h).ln();
        assert!((r.local_constant - expected).abs() < 1e-9);
        assert!(r.max_violation > 0.0);
    }
}
