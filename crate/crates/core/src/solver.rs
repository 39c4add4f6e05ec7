//! Implicit Euler in time, P1 Galerkin in space, damped Newton per step.
//!
//! The step residual for a test function `φ` is
//!
//! ```text
//! R(u)·φ = (u − u_prev, φ)/Δt + ∫ S(t_k, ·, ε(u)) : ε(φ) + ∫ b(t_k, ·, u)·φ
//!          − ∫ f(t_k)·φ − ∫ F(t_k) : ε(φ)
//! ```
//!
//! so the source is always the pair `(f, F)` acting as `(f, φ) + (F, ε(φ))`.
//! Testing the step with `u^k` gives
//! `½‖u^k‖² − ½‖u^{k−1}‖² + ½‖u^k − u^{k−1}‖² + Δt⟨A u^k, u^k⟩ = Δt⟨u*, u^k⟩`,
//! which the [`EnergyLedger`] accumulates.

use crate::assembly::{self, local_basis, solve_linear, LocalBasis, TripletBuilder};
use crate::exponent::{conjugate, parabolic_star, ExponentField, SampleLattice};
use crate::mesh::{l2_inner, prolong, FEFunction, MeshLevel};
use crate::models::{FluxModel, LowerOrderModel};
use crate::quadrature::TriangleRule;
use crate::spaces::powp;
use crate::tensor::{dot, norm, SymTensor2, Vec2};
use crate::{Error, Result};
use nalgebra::DVector;
use nalgebra_sparse::CscMatrix;
use std::fmt;
use std::sync::Arc;

pub type VectorFn = Arc<dyn Fn(f64, Vec2) -> Vec2 + Send + Sync>;
pub type TensorFn = Arc<dyn Fn(f64, Vec2) -> SymTensor2 + Send + Sync>;
pub type InitialFn = Arc<dyn Fn(Vec2) -> Vec2 + Send + Sync>;

/// Default absolute tolerance on energy ledger slacks.
pub const TOL_ENERGY: f64 = 1e-8;

/// Data of one evolution problem.
#[derive(Clone)]
pub struct ProblemSpec {
    pub flux: FluxModel,
    pub lower: LowerOrderModel,
    pub f_source: VectorFn,
    pub big_f_source: TensorFn,
    pub u0: InitialFn,
    pub t_final: f64,
    pub q: ExponentField,
    pub rule: TriangleRule,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("flux", &self.flux)
            .field("lower", &self.lower)
            .field("t_final", &self.t_final)
            .field("q", &self.q)
            .field("rule", &self.rule)
            .finish()
    }
}

impl ProblemSpec {
    /// Validates `T > 0` and `2 ≤ q ≤ max{2, p_* − ε}` on a lattice, `ε`
    /// being the interpolation slack of the lower-order model.
    pub fn new(
        flux: FluxModel,
        lower: LowerOrderModel,
        f_source: VectorFn,
        big_f_source: TensorFn,
        u0: InitialFn,
        t_final: f64,
        q: ExponentField,
    ) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::BadSpec(format!("final time must be positive, got {t_final}")));
        }
        check_q_admissible(&q, flux.p(), lower.eps_star())?;
        Ok(ProblemSpec {
            flux,
            lower,
            f_source,
            big_f_source,
            u0,
            t_final,
            q,
            rule: TriangleRule::default(),
        })
    }

    /// Zero sources and the given initial value, `q = max{2, p_*} − ε` clipped at 2.
    pub fn homogeneous(flux: FluxModel, lower: LowerOrderModel, u0: InitialFn, t_final: f64) -> Result<Self> {
        let q = default_q(flux.p(), lower.eps_star())?;
        ProblemSpec::new(
            flux,
            lower,
            Arc::new(|_, _| [0.0, 0.0]),
            Arc::new(|_, _| SymTensor2::ZERO),
            u0,
            t_final,
            q,
        )
    }

    pub fn with_rule(mut self, rule: TriangleRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn p(&self) -> &ExponentField {
        self.flux.p()
    }
}

/// `q = max{2, p_* − ε}`, the largest admissible choice.
pub fn default_q(p: &ExponentField, eps_star: f64) -> Result<ExponentField> {
    p.map_monotone(format!("max{{2, ({})_* - {eps_star}}}", p.label()), move |v| {
        (parabolic_star(v, 2).expect("dimension 2") - eps_star).max(2.0)
    })
}

/// Checks `2 ≤ q ≤ max{2, p_* − ε}` on a 9 × 17 × 17 lattice over the exponent box.
pub fn check_q_admissible(q: &ExponentField, p: &ExponentField, eps_star: f64) -> Result<()> {
    let lattice = SampleLattice::uniform(p.domain(), 9, 17, 17);
    let slack = 1e-12;
    for &(t, x) in lattice.points() {
        let qv = q.eval(t, x);
        let upper = (parabolic_star(p.eval(t, x), 2)? - eps_star).max(2.0);
        if qv < 2.0 - slack || qv > upper + slack {
            return Err(Error::ExponentOrderViolation(format!(
                "q = {qv} outside [2, {upper}] at t = {t}, x = ({}, {})",
                x[0], x[1]
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub max_iter: usize,
    /// Tolerance on the lumped-mass-scaled dual norm of the residual.
    pub tol_res: f64,
    /// Initial step length of the backtracking line search, in `(0, 1]`.
    pub damping: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            max_iter: 50,
            tol_res: 1e-10,
            damping: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub iterations: usize,
    pub residual: f64,
}

struct QuadNode {
    x: Vec2,
    w: f64,
    bary: [f64; 3],
}

/// Per-level data reused across Newton iterations and time steps.
struct StepAssembler<'a> {
    spec: &'a ProblemSpec,
    mesh: Arc<MeshLevel>,
    mass: CscMatrix<f64>,
    lumped: Vec<f64>,
    basis: Vec<[LocalBasis; 6]>,
    nodes: Vec<Vec<QuadNode>>,
    symmetric: bool,
}

/// Energy contributions of one state at one time.
#[derive(Debug, Clone, Copy)]
struct EnergyTerms {
    pairing: f64,
    work: f64,
}

impl<'a> StepAssembler<'a> {
    fn new(spec: &'a ProblemSpec, mesh: &Arc<MeshLevel>) -> Self {
        let n_tri = mesh.triangles().len();
        let basis = (0..n_tri).map(|k| local_basis(mesh, k)).collect();
        let nodes = (0..n_tri)
            .map(|k| {
                let area = mesh.geometry()[k].area;
                spec.rule
                    .points()
                    .iter()
                    .map(|&(bary, w)| QuadNode {
                        x: mesh.map_point(k, bary),
                        w: w * area,
                        bary,
                    })
                    .collect()
            })
            .collect();
        StepAssembler {
            spec,
            mesh: mesh.clone(),
            mass: assembly::mass_matrix(mesh),
            lumped: assembly::lumped_mass(mesh),
            basis,
            nodes,
            symmetric: spec.flux.law().symmetric_tangent()
                && (spec.lower.is_zero() || spec.lower.law().symmetric_tangent()),
        }
    }

    fn n(&self) -> usize {
        self.mesh.n_dofs()
    }

    #[inline]
    fn local(&self, k: usize, u: &[f64]) -> ([f64; 6], SymTensor2) {
        let mut c = [0.0; 6];
        let mut e = SymTensor2::ZERO;
        for (m, b) in self.basis[k].iter().enumerate() {
            if let Some(d) = b.dof {
                c[m] = u[d];
                e = e + u[d] * b.strain;
            }
        }
        (c, e)
    }

    #[inline]
    fn value(c: &[f64; 6], bary: [f64; 3]) -> Vec2 {
        [
            bary[0] * c[0] + bary[1] * c[2] + bary[2] * c[4],
            bary[0] * c[1] + bary[1] * c[3] + bary[2] * c[5],
        ]
    }

    fn mass_times(&self, v: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n());
        for (r, c, m) in self.mass.triplet_iter() {
            out[r] += m * v[c];
        }
        out
    }

    fn residual(&self, u: &[f64], prev: &[f64], dt: f64, t: f64) -> Result<DVector<f64>> {
        let diff: Vec<f64> = u.iter().zip(prev).map(|(a, b)| (a - b) / dt).collect();
        let mut r = self.mass_times(&diff);
        let spec = self.spec;
        let with_b = !spec.lower.is_zero();
        for (k, nodes) in self.nodes.iter().enumerate() {
            let (c, e) = self.local(k, u);
            for q in nodes {
                let s = spec.flux.evaluate(t, q.x, &e);
                let big_f = (spec.big_f_source)(t, q.x);
                let f = (spec.f_source)(t, q.x);
                let b = if with_b {
                    spec.lower.evaluate(t, q.x, Self::value(&c, q.bary))
                } else {
                    [0.0, 0.0]
                };
                if !(s.is_finite() && b[0].is_finite() && b[1].is_finite()) {
                    return Err(Error::FluxEvalError { t, x: q.x });
                }
                let stress = s - big_f;
                let force = [b[0] - f[0], b[1] - f[1]];
                for lb in &self.basis[k] {
                    if let Some(d) = lb.dof {
                        r[d] += q.w * (stress.ddot(&lb.strain) + force[lb.component] * q.bary[lb.vertex]);
                    }
                }
            }
        }
        Ok(r)
    }

    fn jacobian(&self, u: &[f64], dt: f64, t: f64) -> CscMatrix<f64> {
        let spec = self.spec;
        let with_b = !spec.lower.is_zero();
        let mut jb = TripletBuilder::new(self.n());
        for (r, c, m) in self.mass.triplet_iter() {
            jb.push(r, c, m / dt);
        }
        for (k, nodes) in self.nodes.iter().enumerate() {
            let (c, e) = self.local(k, u);
            let basis = &self.basis[k];
            let sv: [_; 6] = std::array::from_fn(|m| basis[m].strain.to_vector());
            for q in nodes {
                let d = spec.flux.tangent(t, q.x, &e);
                let db = if with_b {
                    Some(spec.lower.tangent(t, q.x, Self::value(&c, q.bary)))
                } else {
                    None
                };
                for (mi, bi) in basis.iter().enumerate() {
                    let Some(i) = bi.dof else { continue };
                    let dsi = d.transpose() * sv[mi];
                    for (mj, bj) in basis.iter().enumerate() {
                        let Some(j) = bj.dof else { continue };
                        let mut v = dsi.dot(&sv[mj]);
                        if let Some(db) = &db {
                            v += db[(bi.component, bj.component)] * q.bary[bi.vertex] * q.bary[bj.vertex];
                        }
                        jb.push(i, j, q.w * v);
                    }
                }
            }
        }
        jb.build()
    }

    fn dual_norm(&self, r: &DVector<f64>) -> f64 {
        r.iter().zip(&self.lumped).map(|(v, m)| v * v / m).sum::<f64>().sqrt()
    }

    /// `⟨A(t)u, u⟩` and `⟨u*(t), u⟩`.
    fn energy_terms(&self, u: &[f64], t: f64) -> EnergyTerms {
        let spec = self.spec;
        let with_b = !spec.lower.is_zero();
        let mut pairing = 0.0;
        let mut work = 0.0;
        for (k, nodes) in self.nodes.iter().enumerate() {
            let (c, e) = self.local(k, u);
            for q in nodes {
                let uq = Self::value(&c, q.bary);
                pairing += q.w * spec.flux.evaluate(t, q.x, &e).ddot(&e);
                if with_b {
                    pairing += q.w * dot(spec.lower.evaluate(t, q.x, uq), uq);
                }
                work += q.w * (dot((spec.f_source)(t, q.x), uq) + (spec.big_f_source)(t, q.x).ddot(&e));
            }
        }
        EnergyTerms { pairing, work }
    }

    fn newton(&self, prev: &[f64], dt: f64, t: f64, cfg: &NewtonConfig, step: usize) -> Result<(Vec<f64>, StepStats)> {
        let mut u = prev.to_vec();
        let mut r = self.residual(&u, prev, dt, t)?;
        let mut res = self.dual_norm(&r);
        for it in 0..cfg.max_iter {
            if res <= cfg.tol_res {
                return Ok((
                    u,
                    StepStats {
                        iterations: it,
                        residual: res,
                    },
                ));
            }
            let j = self.jacobian(&u, dt, t);
            let delta = solve_linear(&j, &(-&r), self.symmetric)?;
            let mut lambda = cfg.damping;
            loop {
                let trial: Vec<f64> = u.iter().zip(delta.iter()).map(|(a, d)| a + lambda * d).collect();
                let rt = self.residual(&trial, prev, dt, t);
                let accept_anyway = lambda < 1.0 / 1024.0;
                if let Ok(rt) = rt {
                    let nt = self.dual_norm(&rt);
                    if nt <= (1.0 - 1e-4 * lambda) * res || accept_anyway {
                        u = trial;
                        r = rt;
                        res = nt;
                        break;
                    }
                } else if accept_anyway {
                    return Err(rt.unwrap_err());
                }
                lambda *= 0.5;
            }
        }
        if res <= cfg.tol_res {
            return Ok((
                u,
                StepStats {
                    iterations: cfg.max_iter,
                    residual: res,
                },
            ));
        }
        Err(Error::NewtonFailure {
            step,
            iterations: cfg.max_iter,
            residual: res,
        })
    }
}

/// Mass-matrix `L²` projection of the initial value.
pub fn project_initial(u0: impl Fn(Vec2) -> Vec2, mesh: &Arc<MeshLevel>) -> FEFunction {
    assembly::project_l2(mesh, u0)
}

/// Step residual as a dual vector, one entry per dof.
pub fn assemble_residual(
    state: &FEFunction,
    prev: &FEFunction,
    dt: f64,
    spec: &ProblemSpec,
    t_k: f64,
) -> Result<DVector<f64>> {
    if state.mesh().id() != prev.mesh().id() {
        return Err(Error::LevelMismatch("state and previous value live on different levels".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::BadSpec(format!("time step must be positive, got {dt}")));
    }
    StepAssembler::new(spec, state.mesh()).residual(&state.dofs(), &prev.dofs(), dt, t_k)
}

/// One implicit Euler step from `prev` to time `t_k`.
pub fn newton_step_solve(
    prev: &FEFunction,
    dt: f64,
    spec: &ProblemSpec,
    t_k: f64,
    cfg: &NewtonConfig,
) -> Result<(FEFunction, StepStats)> {
    let asm = StepAssembler::new(spec, prev.mesh());
    let (u, stats) = asm.newton(&prev.dofs(), dt, t_k, cfg, 1)?;
    Ok((FEFunction::from_dofs(prev.mesh(), &u)?, stats))
}

#[derive(Debug, Clone)]
pub struct GalerkinState {
    pub level: usize,
    pub time_grid: Vec<f64>,
    pub trajectory: Vec<FEFunction>,
}

impl GalerkinState {
    pub fn mesh(&self) -> &Arc<MeshLevel> {
        self.trajectory[0].mesh()
    }

    pub fn steps(&self) -> usize {
        self.time_grid.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRow {
    pub k: usize,
    pub t: f64,
    /// `½‖u^k‖²`.
    pub kinetic: f64,
    /// `Δt⟨A(t_k)u^k, u^k⟩`.
    pub dissipation: f64,
    /// `Δt⟨u*(t_k), u^k⟩`.
    pub work: f64,
    /// `½‖u⁰‖² − ½‖u^k‖² − Σ_{j≤k}(dissipation_j − work_j)`.
    pub slack: f64,
    /// `½‖u^k − u^{k−1}‖²`, the term by which the discrete identity exceeds the inequality.
    pub increment: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    pub fn initial_kinetic(&self) -> f64 {
        self.rows[0].kinetic
    }

    pub fn min_slack(&self) -> f64 {
        self.rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }

    /// Every slack is at least `−tol · (1 + ½‖u⁰‖²)`.
    pub fn passes(&self, tol: f64) -> bool {
        self.min_slack() >= -tol * (1.0 + self.initial_kinetic())
    }

    pub fn max_kinetic(&self) -> f64 {
        self.rows.iter().map(|r| r.kinetic).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct GalerkinRun {
    pub state: GalerkinState,
    pub ledger: EnergyLedger,
    pub newton: Vec<StepStats>,
}

/// Uniform implicit Euler over `[0, T]` with `k_steps` steps.
pub fn run_galerkin(
    spec: &ProblemSpec,
    mesh: &Arc<MeshLevel>,
    k_steps: usize,
    cfg: &NewtonConfig,
) -> Result<GalerkinRun> {
    if k_steps == 0 {
        return Err(Error::BadSpec("at least one time step is required".into()));
    }
    let asm = StepAssembler::new(spec, mesh);
    let dt = spec.t_final / k_steps as f64;
    let time_grid: Vec<f64> = (0..=k_steps).map(|k| spec.t_final * k as f64 / k_steps as f64).collect();
    let u0 = project_initial(|x| (spec.u0)(x), mesh);
    let mut prev = u0.dofs();
    let kinetic0 = 0.5 * l2_inner(&u0, &u0)?;
    let mut rows = vec![LedgerRow {
        k: 0,
        t: 0.0,
        kinetic: kinetic0,
        dissipation: 0.0,
        work: 0.0,
        slack: 0.0,
        increment: 0.0,
    }];
    let mut trajectory = vec![u0];
    let mut newton = Vec::with_capacity(k_steps);
    let mut balance = 0.0;
    for k in 1..=k_steps {
        let t = time_grid[k];
        let (u, stats) = asm.newton(&prev, dt, t, cfg, k)?;
        let terms = asm.energy_terms(&u, t);
        let kinetic = 0.5 * assembly::bilinear(&asm.mass, &u, &u);
        let du: Vec<f64> = u.iter().zip(&prev).map(|(a, b)| a - b).collect();
        let increment = 0.5 * assembly::bilinear(&asm.mass, &du, &du);
        let (dissipation, work) = (dt * terms.pairing, dt * terms.work);
        balance += dissipation - work;
        rows.push(LedgerRow {
            k,
            t,
            kinetic,
            dissipation,
            work,
            slack: kinetic0 - kinetic - balance,
            increment,
        });
        trajectory.push(FEFunction::from_dofs(mesh, &u)?);
        newton.push(stats);
        prev = u;
    }
    Ok(GalerkinRun {
        state: GalerkinState {
            level: mesh.level_index(),
            time_grid,
            trajectory,
        },
        ledger: EnergyLedger { rows },
        newton,
    })
}

/// Constants of the a-priori estimate for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GronwallConstants {
    /// Poincaré-Korn constant for `p⁻`, `(w√2)^{p⁻}` with `w` the strip width of the domain.
    pub c_p_minus: f64,
    pub eps: f64,
    pub c_nu: f64,
    pub c_p: f64,
    pub m0: f64,
    pub a_l1: f64,
    pub m1: f64,
    pub m2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BochnerReport {
    /// Ledger slacks `½‖u⁰‖² − ½‖u^k‖² − Σ(dissipation − work)`.
    pub slacks: Vec<f64>,
    pub constants: GronwallConstants,
    /// `max_k ‖u^k‖²_Y`.
    pub max_y_norm_sq: f64,
    /// `Σ_k Δt ρ_{p(t_k)}(ε(u^k))`.
    pub rho_sym_grad_total: f64,
    /// `max_k ‖u^k‖² ≤ M₁ + tol`.
    pub envelope_ok: bool,
}

/// Energy slacks plus the Grönwall envelope
/// `M₁ = 2M₀ exp(‖a‖_{L¹})`, `M₂ = (2/c₀)(M₀ + ‖a‖_{L¹} M₁/2)` with
/// `ε = min{c₀/(2(1 + c_{p⁻}2^{p⁺})), 1/(2p⁻)}`, `a = 2ε`, and
/// `M₀ = ½‖u⁰‖² + ‖c₂‖_{L¹} + c_ν(ε)ρ_{ν'}(f) + c_p(ε)ρ_{p'}(F) + εc_{p⁻}2^{p⁺}|Q_T|`.
///
/// The coercivity constants of `S + b` are `c₀` (declared), no `‖u‖²` term
/// since `c₂ ≥ 0`, and `c₂(t) = c₀ρ_{p(t)}(δ) + ‖c₁(t)‖ + ‖c₃(t)‖`. Time
/// integrals use the implicit Euler nodes.
pub fn bochner_coercivity_monitor(run: &GalerkinRun, spec: &ProblemSpec, tol: f64) -> BochnerReport {
    let mesh = run.state.mesh();
    let asm = StepAssembler::new(spec, mesh);
    let p = spec.p();
    let (pm, pp) = (p.p_minus(), p.p_plus());
    let c0 = spec.flux.c0();
    let c_p_minus = (mesh.domain().width() * std::f64::consts::SQRT_2).powf(pm);
    let eps = (c0 / (2.0 * (1.0 + c_p_minus * 2f64.powf(pp)))).min(1.0 / (2.0 * pm));
    let nu = pm.max(2.0);
    let nu_c = conjugate(nu).expect("ν ≥ 2");
    let c_nu = (nu * eps).powf(1.0 - nu_c) / nu_c;
    let c_p = (pm * eps).powf(1.0 - conjugate(pm).expect("p⁻ > 1")) / conjugate(pp).expect("p⁺ > 1");

    let delta = spec.flux.delta();
    let mut c2_l1 = 0.0;
    let mut rho_f = 0.0;
    let mut rho_big_f = 0.0;
    let mut rho_eps = 0.0;
    for (k, u) in run.state.trajectory.iter().enumerate().skip(1) {
        let t = run.state.time_grid[k];
        let dt = t - run.state.time_grid[k - 1];
        let eu = u.symmetric_gradient_per_triangle();
        for (tri, nodes) in asm.nodes.iter().enumerate() {
            let ne = eu[tri].norm();
            for q in nodes {
                let pv = p.eval(t, q.x);
                c2_l1 += dt
                    * q.w
                    * (c0 * powp(delta, pv) + spec.flux.c1(t, q.x) + spec.lower.c3(t, q.x));
                rho_f += dt * q.w * powp(norm((spec.f_source)(t, q.x)), nu_c);
                rho_big_f += dt * q.w * powp((spec.big_f_source)(t, q.x).norm(), pv / (pv - 1.0));
                rho_eps += dt * q.w * powp(ne, pv);
            }
        }
    }
    let q_t = spec.t_final * mesh.area();
    let m0 = run.ledger.initial_kinetic()
        + c2_l1
        + c_nu * rho_f
        + c_p * rho_big_f
        + eps * c_p_minus * 2f64.powf(pp) * q_t;
    let a_l1 = 2.0 * eps * spec.t_final;
    let m1 = 2.0 * m0 * a_l1.exp();
    let m2 = 2.0 / c0 * (m0 + a_l1 * m1 / 2.0);
    let max_y_norm_sq = 2.0 * run.ledger.max_kinetic();
    BochnerReport {
        slacks: run.ledger.rows.iter().map(|r| r.slack).collect(),
        constants: GronwallConstants {
            c_p_minus,
            eps,
            c_nu,
            c_p,
            m0,
            a_l1,
            m1,
            m2,
        },
        max_y_norm_sq,
        rho_sym_grad_total: rho_eps,
        envelope_ok: max_y_norm_sq <= m1 + tol,
    }
}

/// Defect of `Σ_k (u^k − u^{k−1}, v^k) + Σ_k (v^k − v^{k−1}, u^{k−1}) = (u^K, v^K) − (u⁰, v⁰)`.
pub fn summation_by_parts_defect(u: &[FEFunction], v: &[FEFunction]) -> Result<f64> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::BadSpec("trajectories must be non-empty and of equal length".into()));
    }
    let mut lhs = 0.0;
    for k in 1..u.len() {
        lhs += l2_inner(&u[k].axpy(-1.0, &u[k - 1])?, &v[k])?;
        lhs += l2_inner(&v[k].axpy(-1.0, &v[k - 1])?, &u[k - 1])?;
    }
    let rhs = l2_inner(&u[u.len() - 1], &v[v.len() - 1])? - l2_inner(&u[0], &v[0])?;
    Ok(lhs - rhs)
}

/// `(Σ_k Δt ‖u^k − u(t_k)‖²)^{1/2}` with the degree-5 rule.
pub fn l2_space_time_error(state: &GalerkinState, exact: impl Fn(f64, Vec2) -> Vec2) -> f64 {
    let mesh = state.mesh();
    let rule = TriangleRule::SevenPoint;
    let mut acc = 0.0;
    for k in 1..state.time_grid.len() {
        let t = state.time_grid[k];
        let dt = t - state.time_grid[k - 1];
        let u = &state.trajectory[k];
        for (tri, g) in mesh.geometry().iter().enumerate() {
            for &(bary, w) in rule.points() {
                let uh = u.value_in(tri, bary);
                let ue = exact(t, mesh.map_point(tri, bary));
                acc += dt * w * g.area * ((uh[0] - ue[0]).powi(2) + (uh[1] - ue[1]).powi(2));
            }
        }
    }
    acc.sqrt()
}

/// `u(t, x) = e^{−t} sin(πx₁) sin(πx₂) (1, 1)` on the unit square.
pub fn manufactured_solution(t: f64, x: Vec2) -> Vec2 {
    use std::f64::consts::PI;
    let v = (-t).exp() * (PI * x[0]).sin() * (PI * x[1]).sin();
    [v, v]
}

/// `f = ∂ₜu − div ε(u) + κu` for [`manufactured_solution`], where
/// `(div ε(u))ᵢ = ½(Δuᵢ + ∂ᵢ div u) = ½e^{−t}π²(cos πx₁ cos πx₂ − 3 sin πx₁ sin πx₂)`.
pub fn manufactured_source(kappa: f64) -> impl Fn(f64, Vec2) -> Vec2 + Send + Sync + Clone {
    use std::f64::consts::PI;
    move |t, x| {
        let e = (-t).exp();
        let (s1, s2) = ((PI * x[0]).sin(), (PI * x[1]).sin());
        let (c1, c2) = ((PI * x[0]).cos(), (PI * x[1]).cos());
        let u = e * s1 * s2;
        let div_eps = 0.5 * e * PI * PI * (c1 * c2 - 3.0 * s1 * s2);
        let v = -u - div_eps + kappa * u;
        [v, v]
    }
}

/// One row of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub level: usize,
    pub steps: usize,
    /// `‖u_{L+1} − prolong(u_L)‖_{L²(Q_T)}` on the coarse time grid; `None` on the finest level.
    pub l2_diff: Option<f64>,
    /// `Σ_k Δt ρ_{p(t_k)}(ε(u_{L+1} − prolong(u_L)))`.
    pub modular_diff: Option<f64>,
    /// `(ρ_p(ε(u)) + 1)^{1/p⁻} + max_k‖u^k‖_Y + ‖u‖_{L²(Q_T)}`.
    pub proxy_norm: f64,
    pub max_kinetic: f64,
    /// `(M₂ + 1)^{1/p⁻} + M₁^{1/2} + (T M₁)^{1/2}` from the level's constants.
    pub bound: f64,
    pub energy_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Largest per-level bound; every proxy norm must stay below it.
    pub bound: f64,
    pub differences_non_increasing: bool,
    pub bounded: bool,
}

/// Runs the problem on nested levels with nested time grids and compares
/// consecutive levels.
pub fn galerkin_convergence_study(
    spec: &ProblemSpec,
    meshes: &[Arc<MeshLevel>],
    steps: &[usize],
    cfg: &NewtonConfig,
) -> Result<ConvergenceReport> {
    if meshes.len() < 3 || steps.len() != meshes.len() {
        return Err(Error::BadSpec("a study needs at least 3 levels and one step count per level".into()));
    }
    if steps.windows(2).any(|w| w[0] == 0 || w[1] % w[0] != 0) {
        return Err(Error::BadSpec("step counts must be nested (each divides the next)".into()));
    }
    let runs: Vec<GalerkinRun> = meshes
        .iter()
        .zip(steps)
        .map(|(m, &k)| run_galerkin(spec, m, k, cfg))
        .collect::<Result<_>>()?;
    let p = spec.p();
    let mut rows = Vec::with_capacity(runs.len());
    for (i, run) in runs.iter().enumerate() {
        let monitor = bochner_coercivity_monitor(run, spec, TOL_ENERGY);
        let c = monitor.constants;
        let l2_qt: f64 = (1..run.state.time_grid.len())
            .map(|k| {
                let dt = run.state.time_grid[k] - run.state.time_grid[k - 1];
                dt * 2.0 * run.ledger.rows[k].kinetic
            })
            .sum::<f64>()
            .sqrt();
        let proxy = (monitor.rho_sym_grad_total + 1.0).powf(1.0 / p.p_minus())
            + monitor.max_y_norm_sq.sqrt()
            + l2_qt;
        let bound = (c.m2 + 1.0).powf(1.0 / p.p_minus()) + c.m1.sqrt() + (spec.t_final * c.m1).sqrt();
        let (l2_diff, modular_diff) = if i + 1 < runs.len() {
            let (a, b) = level_difference(run, &runs[i + 1], spec)?;
            (Some(a), Some(b))
        } else {
            (None, None)
        };
        rows.push(ConvergenceRow {
            level: run.state.level,
            steps: run.state.steps(),
            l2_diff,
            modular_diff,
            proxy_norm: proxy,
            max_kinetic: run.ledger.max_kinetic(),
            bound,
            energy_ok: run.ledger.passes(TOL_ENERGY),
        });
    }
    let bound = rows.iter().map(|r| r.bound).fold(0.0, f64::max);
    let diffs: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.l2_diff.zip(r.modular_diff))
        .collect();
    let differences_non_increasing = diffs
        .windows(2)
        .all(|w| w[1].0 <= w[0].0 * (1.0 + 1e-12) && w[1].1 <= w[0].1 * (1.0 + 1e-12));
    let bounded = rows.iter().all(|r| r.proxy_norm.is_finite() && r.proxy_norm <= bound);
    Ok(ConvergenceReport {
        rows,
        bound,
        differences_non_increasing,
        bounded,
    })
}

fn level_difference(coarse: &GalerkinRun, fine: &GalerkinRun, spec: &ProblemSpec) -> Result<(f64, f64)> {
    let ratio = fine.state.steps() / coarse.state.steps();
    let fine_mesh = fine.state.mesh();
    let p = spec.p();
    let mut l2 = 0.0;
    let mut modular = 0.0;
    for k in 1..coarse.state.time_grid.len() {
        let t = coarse.state.time_grid[k];
        let dt = t - coarse.state.time_grid[k - 1];
        let d = fine.state.trajectory[k * ratio].axpy(-1.0, &prolong(&coarse.state.trajectory[k], fine_mesh)?)?;
        l2 += dt * l2_inner(&d, &d)?;
        let ed = d.symmetric_gradient_per_triangle();
        for (tri, g) in fine_mesh.geometry().iter().enumerate() {
            let n = ed[tri].norm();
            for &(bary, w) in spec.rule.points() {
                modular += dt * w * g.area * powp(n, p.eval(t, fine_mesh.map_point(tri, bary)));
            }
        }
    }
    Ok((l2.sqrt(), modular))
}
