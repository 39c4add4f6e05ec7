//! Sparse assembly on a mesh level: local strain basis, mass and elasticity
//! matrices, `L²` projection and the linear solves used inside Newton.
//!
//! Unknowns are ordered `[u₁, u₂]` per free vertex, so the dof of component
//! `c` at free vertex `i` is `2i + c`.

use crate::mesh::{FEFunction, MeshLevel};
use crate::quadrature::TriangleRule;
use crate::tensor::{SymTensor2, Vec2};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use std::sync::Arc;

/// One local basis function `λⱼ e_c` of a triangle.
#[derive(Debug, Clone, Copy)]
pub struct LocalBasis {
    /// Global dof, `None` for boundary vertices.
    pub dof: Option<usize>,
    /// Local vertex `j` (0..3).
    pub vertex: usize,
    /// Component `c` (0 or 1).
    pub component: usize,
    /// Constant symmetric gradient of the basis function.
    pub strain: SymTensor2,
}

/// The six local basis functions of triangle `k`.
pub fn local_basis(mesh: &MeshLevel, k: usize) -> [LocalBasis; 6] {
    let tri = mesh.triangles()[k];
    let g = &mesh.geometry()[k];
    std::array::from_fn(|m| {
        let (j, c) = (m / 2, m % 2);
        let mut grad = [[0.0; 2]; 2];
        grad[c] = g.grad_lambda[j];
        LocalBasis {
            dof: mesh.free_index(tri[j]).map(|i| 2 * i + c),
            vertex: j,
            component: c,
            strain: SymTensor2::sym_part(grad),
        }
    })
}

/// Accumulates `(row, col, value)` entries into a square sparse matrix.
#[derive(Debug)]
pub struct TripletBuilder {
    coo: CooMatrix<f64>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        TripletBuilder {
            coo: CooMatrix::new(n, n),
        }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        if v != 0.0 {
            self.coo.push(i, j, v);
        }
    }

    pub fn build(self) -> CscMatrix<f64> {
        CscMatrix::from(&self.coo)
    }
}

/// Exact P1 mass matrix `|T|/12 · [[2,1,1],[1,2,1],[1,1,2]]`, per component.
pub fn mass_matrix(mesh: &MeshLevel) -> CscMatrix<f64> {
    let mut b = TripletBuilder::new(mesh.n_dofs());
    for (k, g) in mesh.geometry().iter().enumerate() {
        let basis = local_basis(mesh, k);
        for bi in &basis {
            for bj in &basis {
                if let (Some(i), Some(j)) = (bi.dof, bj.dof) {
                    if bi.component == bj.component {
                        let m = if bi.vertex == bj.vertex { 2.0 } else { 1.0 };
                        b.push(i, j, g.area / 12.0 * m);
                    }
                }
            }
        }
    }
    b.build()
}

/// Lumped (row-sum) mass per dof.
pub fn lumped_mass(mesh: &MeshLevel) -> Vec<f64> {
    let areas = mesh.lumped_areas();
    mesh.free_vertices()
        .iter()
        .flat_map(|&v| [areas[v], areas[v]])
        .collect()
}

/// `K_ε[i, j] = ∫ ε(φⱼ) : ε(φᵢ)`.
pub fn elasticity_stiffness(mesh: &MeshLevel) -> CscMatrix<f64> {
    let mut b = TripletBuilder::new(mesh.n_dofs());
    for (k, g) in mesh.geometry().iter().enumerate() {
        let basis = local_basis(mesh, k);
        for bi in &basis {
            for bj in &basis {
                if let (Some(i), Some(j)) = (bi.dof, bj.dof) {
                    b.push(i, j, g.area * bi.strain.ddot(&bj.strain));
                }
            }
        }
    }
    b.build()
}

/// With zero boundary values the only element of the `ε`-kernel is zero,
/// i.e. `K_ε` is positive definite. Checked by attempting a Cholesky factorisation.
pub fn korn_kernel_is_trivial(mesh: &MeshLevel) -> bool {
    mesh.n_dofs() == 0 || CscCholesky::factor(&elasticity_stiffness(mesh)).is_ok()
}

/// `∫ f · φᵢ` with the given rule.
pub fn load_vector(mesh: &MeshLevel, rule: TriangleRule, f: impl Fn(Vec2) -> Vec2) -> DVector<f64> {
    let mut out = DVector::zeros(mesh.n_dofs());
    for (k, g) in mesh.geometry().iter().enumerate() {
        let tri = mesh.triangles()[k];
        for &(bary, w) in rule.points() {
            let fx = f(mesh.map_point(k, bary));
            for (j, &v) in tri.iter().enumerate() {
                if let Some(i) = mesh.free_index(v) {
                    out[2 * i] += w * g.area * bary[j] * fx[0];
                    out[2 * i + 1] += w * g.area * bary[j] * fx[1];
                }
            }
        }
    }
    out
}

/// Mass-matrix `L²` projection onto the level, load integrated with the
/// degree-5 rule.
pub fn project_l2(mesh: &Arc<MeshLevel>, f: impl Fn(Vec2) -> Vec2) -> FEFunction {
    if mesh.n_dofs() == 0 {
        return FEFunction::zeros(mesh);
    }
    let rhs = load_vector(mesh, TriangleRule::SevenPoint, f);
    let chol = CscCholesky::factor(&mass_matrix(mesh)).expect("the P1 mass matrix is positive definite");
    let x = chol.solve(&rhs);
    FEFunction::from_dofs(mesh, x.as_slice()).expect("dof count matches")
}

/// Solve `J x = rhs`. Symmetric systems try sparse Cholesky first; anything
/// else (or a failed factorisation) goes through dense LU.
pub fn solve_linear(j: &CscMatrix<f64>, rhs: &DVector<f64>, symmetric: bool) -> Result<DVector<f64>> {
    if symmetric {
        if let Ok(chol) = CscCholesky::factor(j) {
            let x = chol.solve(rhs);
            return Ok(x.column(0).into_owned());
        }
    }
    let n = j.nrows();
    let mut dense = DMatrix::zeros(n, n);
    for (r, c, v) in j.triplet_iter() {
        dense[(r, c)] += *v;
    }
    dense
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::BadSpec("singular Newton matrix".into()))
}

/// `xᵀ A y` for a sparse `A`.
pub fn bilinear(a: &CscMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    a.triplet_iter().map(|(r, c, v)| x[r] * v * y[c]).sum()
}
