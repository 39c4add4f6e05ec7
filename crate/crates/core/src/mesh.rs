//! Nested triangulations and vector-valued P1 finite element functions with
//! zero boundary trace.
//!
//! Every level above the coarsest is the uniform red refinement of its parent,
//! so a coarse FE function is exactly representable on all finer levels. The
//! disk is approximated by the level-0 polygon; refinement does not move
//! boundary vertices.

use crate::quadrature::TriangleRule;
use crate::spaces::{DiscreteField, Quadrature};
use crate::tensor::{SymTensor2, Vec2};
use crate::{Error, Result};
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Maximum number of levels in a hierarchy.
pub const MAX_LEVELS: usize = 8;

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    UnitSquare,
    Disk { radius: f64 },
}

impl Domain {
    pub fn area(&self) -> f64 {
        match *self {
            Domain::UnitSquare => 1.0,
            Domain::Disk { radius } => std::f64::consts::PI * radius * radius,
        }
    }

    /// Smallest axis-aligned box containing the domain.
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            Domain::UnitSquare => ([0.0, 1.0], [0.0, 1.0]),
            Domain::Disk { radius } => ([-radius, radius], [-radius, radius]),
        }
    }

    /// Width of the thinnest strip containing the domain.
    pub fn width(&self) -> f64 {
        match *self {
            Domain::UnitSquare => 1.0,
            Domain::Disk { radius } => 2.0 * radius,
        }
    }
}

/// Where a vertex of a refined level comes from on its parent level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexOrigin {
    Coarse(usize),
    Midpoint(usize, usize),
}

/// Area and barycentric gradients of one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleGeometry {
    pub area: f64,
    pub grad_lambda: [Vec2; 3],
}

#[derive(Debug)]
pub struct MeshLevel {
    id: u64,
    domain: Domain,
    level_index: usize,
    vertices: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    parent: Option<Arc<MeshLevel>>,
    origins: Vec<VertexOrigin>,
    geometry: Vec<TriangleGeometry>,
    free_index: Vec<Option<usize>>,
    free_vertices: Vec<usize>,
}

impl MeshLevel {
    fn assemble(
        domain: Domain,
        level_index: usize,
        vertices: Vec<Vec2>,
        triangles: Vec<[usize; 3]>,
        parent: Option<Arc<MeshLevel>>,
        origins: Vec<VertexOrigin>,
    ) -> Result<Self> {
        let mut geometry = Vec::with_capacity(triangles.len());
        for (k, tri) in triangles.iter().enumerate() {
            let g = triangle_geometry([vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]]);
            if !(g.area > 0.0) {
                return Err(Error::MeshError(format!("triangle {k} has non-positive area {}", g.area)));
            }
            geometry.push(g);
        }

        let mut edge_count: HashMap<(usize, usize), u32> = HashMap::new();
        for tri in &triangles {
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let mut boundary = vec![false; vertices.len()];
        for (&(a, b), &n) in &edge_count {
            if n == 1 {
                boundary[a] = true;
                boundary[b] = true;
            }
        }

        let mut free_index = vec![None; vertices.len()];
        let mut free_vertices = Vec::new();
        for (v, &on_boundary) in boundary.iter().enumerate() {
            if !on_boundary {
                free_index[v] = Some(free_vertices.len());
                free_vertices.push(v);
            }
        }

        Ok(MeshLevel {
            id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed),
            domain,
            level_index,
            vertices,
            triangles,
            boundary,
            parent,
            origins,
            geometry,
            free_index,
            free_vertices,
        })
    }

    fn coarse(domain: Domain) -> Result<Self> {
        let (vertices, triangles) = match domain {
            Domain::UnitSquare => (
                vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
                vec![[0, 1, 2], [0, 2, 3]],
            ),
            Domain::Disk { radius } => {
                if !(radius.is_finite() && radius > 0.0) {
                    return Err(Error::MeshError(format!("disk radius must be positive, got {radius}")));
                }
                disk_coarse(radius)
            }
        };
        let origins = (0..vertices.len()).map(VertexOrigin::Coarse).collect();
        MeshLevel::assemble(domain, 0, vertices, triangles, None, origins)
    }

    /// Uniform red refinement: every triangle is split into four by its edge midpoints.
    pub fn refine(self: &Arc<Self>) -> Result<MeshLevel> {
        let mut vertices = self.vertices.clone();
        let mut origins: Vec<VertexOrigin> = (0..vertices.len()).map(VertexOrigin::Coarse).collect();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec2>, origins: &mut Vec<VertexOrigin>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let (pa, pb) = (vertices[a], vertices[b]);
                vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                origins.push(VertexOrigin::Midpoint(key.0, key.1));
                vertices.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = mid(a, b, &mut vertices, &mut origins);
            let bc = mid(b, c, &mut vertices, &mut origins);
            let ca = mid(c, a, &mut vertices, &mut origins);
            triangles.push([a, ab, ca]);
            triangles.push([ab, b, bc]);
            triangles.push([ca, bc, c]);
            triangles.push([ab, bc, ca]);
        }
        MeshLevel::assemble(
            self.domain,
            self.level_index + 1,
            vertices,
            triangles,
            Some(self.clone()),
            origins,
        )
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn level_index(&self) -> usize {
        self.level_index
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn parent(&self) -> Option<&Arc<MeshLevel>> {
        self.parent.as_ref()
    }

    pub fn origins(&self) -> &[VertexOrigin] {
        &self.origins
    }

    pub fn geometry(&self) -> &[TriangleGeometry] {
        &self.geometry
    }

    /// Index among the free (interior) vertices, `None` on the boundary.
    pub fn free_index(&self, vertex: usize) -> Option<usize> {
        self.free_index[vertex]
    }

    pub fn free_vertices(&self) -> &[usize] {
        &self.free_vertices
    }

    pub fn n_free(&self) -> usize {
        self.free_vertices.len()
    }

    /// Number of scalar unknowns, two per free vertex.
    pub fn n_dofs(&self) -> usize {
        2 * self.free_vertices.len()
    }

    /// Area of the polygonal domain.
    pub fn area(&self) -> f64 {
        self.geometry.iter().map(|g| g.area).sum()
    }

    /// Lumped vertex areas (row sums of the scalar P1 mass matrix).
    pub fn lumped_areas(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.vertices.len()];
        for (tri, g) in self.triangles.iter().zip(&self.geometry) {
            for &v in tri {
                out[v] += g.area / 3.0;
            }
        }
        out
    }

    /// Physical coordinates of a point given in barycentric coordinates of triangle `k`.
    #[inline]
    pub fn map_point(&self, k: usize, bary: [f64; 3]) -> Vec2 {
        let [a, b, c] = self.triangles[k];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        [
            bary[0] * pa[0] + bary[1] * pb[0] + bary[2] * pc[0],
            bary[0] * pa[1] + bary[1] * pb[1] + bary[2] * pc[1],
        ]
    }

    /// Quadrature on the whole mesh at time `t`; nodes are ordered by triangle,
    /// then by rule point.
    pub fn quadrature(&self, rule: TriangleRule, t: f64) -> Quadrature {
        let pts = rule.points();
        let mut points = Vec::with_capacity(self.triangles.len() * pts.len());
        let mut weights = Vec::with_capacity(self.triangles.len() * pts.len());
        for (k, g) in self.geometry.iter().enumerate() {
            for &(bary, w) in pts {
                points.push((t, self.map_point(k, bary)));
                weights.push(w * g.area);
            }
        }
        Quadrature::new(points, weights).expect("triangle areas are positive")
    }

    /// Triangle containing `x` together with its barycentric coordinates.
    pub fn locate(&self, x: Vec2) -> Option<(usize, [f64; 3])> {
        let tol = 1e-12;
        for (k, tri) in self.triangles.iter().enumerate() {
            let g = &self.geometry[k];
            let p0 = self.vertices[tri[0]];
            let d = [x[0] - p0[0], x[1] - p0[1]];
            let l1 = g.grad_lambda[1][0] * d[0] + g.grad_lambda[1][1] * d[1];
            let l2 = g.grad_lambda[2][0] * d[0] + g.grad_lambda[2][1] * d[1];
            let l0 = 1.0 - l1 - l2;
            if l0 >= -tol && l1 >= -tol && l2 >= -tol {
                return Some((k, [l0, l1, l2]));
            }
        }
        None
    }

    /// `true` if `ancestor` is this level or one of its parents.
    pub fn descends_from(&self, ancestor: &MeshLevel) -> bool {
        let mut cur = Some(self);
        while let Some(m) = cur {
            if m.id == ancestor.id {
                return true;
            }
            cur = m.parent.as_deref();
        }
        false
    }
}

fn triangle_geometry(p: [Vec2; 3]) -> TriangleGeometry {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let inv = 1.0 / det;
    TriangleGeometry {
        area: 0.5 * det,
        grad_lambda: [
            [(p[1][1] - p[2][1]) * inv, (p[2][0] - p[1][0]) * inv],
            [(p[2][1] - p[0][1]) * inv, (p[0][0] - p[2][0]) * inv],
            [(p[0][1] - p[1][1]) * inv, (p[1][0] - p[0][0]) * inv],
        ],
    }
}

// Centre, a ring of 6 vertices at r/2 and a ring of 12 on the circle.
fn disk_coarse(radius: f64) -> (Vec<Vec2>, Vec<[usize; 3]>) {
    let polar = |r: f64, deg: f64| {
        let a = deg.to_radians();
        [r * a.cos(), r * a.sin()]
    };
    let mut vertices = vec![[0.0, 0.0]];
    vertices.extend((0..6).map(|k| polar(0.5 * radius, 60.0 * k as f64)));
    vertices.extend((0..12).map(|j| polar(radius, 30.0 * j as f64)));
    let inner = |k: usize| 1 + k % 6;
    let outer = |j: usize| 7 + j % 12;
    let mut triangles = Vec::with_capacity(24);
    for k in 0..6 {
        triangles.push([0, inner(k), inner(k + 1)]);
    }
    for k in 0..6 {
        triangles.push([inner(k), outer(2 * k), outer(2 * k + 1)]);
        triangles.push([inner(k), outer(2 * k + 1), inner(k + 1)]);
        triangles.push([inner(k + 1), outer(2 * k + 1), outer(2 * k + 2)]);
    }
    (vertices, triangles)
}

/// Level 0 followed by `levels − 1` uniform refinements.
pub fn build_mesh_hierarchy(domain: Domain, levels: usize) -> Result<Vec<Arc<MeshLevel>>> {
    if levels == 0 || levels > MAX_LEVELS {
        return Err(Error::MeshError(format!("levels must lie in 1..={MAX_LEVELS}, got {levels}")));
    }
    let mut out = vec![Arc::new(MeshLevel::coarse(domain)?)];
    for _ in 1..levels {
        let next = out.last().expect("non-empty").refine()?;
        out.push(Arc::new(next));
    }
    Ok(out)
}

/// Vector P1 function, zero on the boundary, stored per free vertex.
#[derive(Debug, Clone)]
pub struct FEFunction {
    mesh: Arc<MeshLevel>,
    coeffs: Vec<Vec2>,
}

impl FEFunction {
    pub fn zeros(mesh: &Arc<MeshLevel>) -> Self {
        FEFunction {
            mesh: mesh.clone(),
            coeffs: vec![[0.0, 0.0]; mesh.n_free()],
        }
    }

    pub fn from_coeffs(mesh: &Arc<MeshLevel>, coeffs: Vec<Vec2>) -> Result<Self> {
        if coeffs.len() != mesh.n_free() {
            return Err(Error::MeshError(format!(
                "{} coefficients for {} free vertices",
                coeffs.len(),
                mesh.n_free()
            )));
        }
        Ok(FEFunction {
            mesh: mesh.clone(),
            coeffs,
        })
    }

    /// From a flat vector ordered `[u₁, u₂]` per free vertex.
    pub fn from_dofs(mesh: &Arc<MeshLevel>, dofs: &[f64]) -> Result<Self> {
        if dofs.len() != mesh.n_dofs() {
            return Err(Error::MeshError(format!("{} dofs for {} unknowns", dofs.len(), mesh.n_dofs())));
        }
        let coeffs = dofs.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        Ok(FEFunction {
            mesh: mesh.clone(),
            coeffs,
        })
    }

    /// Nodal interpolant; boundary values of `f` are discarded.
    pub fn interpolate(mesh: &Arc<MeshLevel>, f: impl Fn(Vec2) -> Vec2) -> Self {
        let coeffs = mesh.free_vertices().iter().map(|&v| f(mesh.vertices()[v])).collect();
        FEFunction {
            mesh: mesh.clone(),
            coeffs,
        }
    }

    pub fn mesh(&self) -> &Arc<MeshLevel> {
        &self.mesh
    }

    pub fn coeffs(&self) -> &[Vec2] {
        &self.coeffs
    }

    pub fn dofs(&self) -> Vec<f64> {
        self.coeffs.iter().flat_map(|c| [c[0], c[1]]).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c[0] == 0.0 && c[1] == 0.0)
    }

    /// Value at every vertex, zero on the boundary.
    pub fn nodal_values(&self) -> Vec<Vec2> {
        (0..self.mesh.vertices().len())
            .map(|v| self.mesh.free_index(v).map_or([0.0, 0.0], |i| self.coeffs[i]))
            .collect()
    }

    #[inline]
    fn vertex_value(&self, v: usize) -> Vec2 {
        self.mesh.free_index(v).map_or([0.0, 0.0], |i| self.coeffs[i])
    }

    /// Value in triangle `k` at barycentric point `bary`.
    #[inline]
    pub fn value_in(&self, k: usize, bary: [f64; 3]) -> Vec2 {
        let tri = self.mesh.triangles()[k];
        let mut out = [0.0, 0.0];
        for (j, &v) in tri.iter().enumerate() {
            let c = self.vertex_value(v);
            out[0] += bary[j] * c[0];
            out[1] += bary[j] * c[1];
        }
        out
    }

    /// Point evaluation; `None` outside the mesh.
    pub fn evaluate(&self, x: Vec2) -> Option<Vec2> {
        self.mesh.locate(x).map(|(k, bary)| self.value_in(k, bary))
    }

    /// Full gradient `G[i][j] = ∂ⱼuᵢ` on triangle `k`.
    pub fn gradient_in(&self, k: usize) -> [[f64; 2]; 2] {
        let tri = self.mesh.triangles()[k];
        let g = &self.mesh.geometry()[k];
        let mut out = [[0.0; 2]; 2];
        for (j, &v) in tri.iter().enumerate() {
            let c = self.vertex_value(v);
            for i in 0..2 {
                out[i][0] += c[i] * g.grad_lambda[j][0];
                out[i][1] += c[i] * g.grad_lambda[j][1];
            }
        }
        out
    }

    /// Constant symmetric gradient on each triangle.
    pub fn symmetric_gradient_per_triangle(&self) -> Vec<SymTensor2> {
        (0..self.mesh.triangles().len())
            .map(|k| SymTensor2::sym_part(self.gradient_in(k)))
            .collect()
    }

    /// `ε(u)` sampled on the mesh quadrature of `rule` at time `t`.
    pub fn symmetric_gradient(&self, rule: TriangleRule, t: f64) -> DiscreteField {
        let per_tri = self.symmetric_gradient_per_triangle();
        let n = rule.len();
        let quad = Arc::new(self.mesh.quadrature(rule, t));
        let values = (0..quad.len()).map(|i| per_tri[i / n]).collect();
        DiscreteField::new(crate::spaces::FieldValues::SymTensor(values), quad).expect("lengths agree")
    }

    /// `u` sampled on the mesh quadrature of `rule` at time `t`.
    pub fn values_on(&self, rule: TriangleRule, t: f64) -> DiscreteField {
        let pts = rule.points();
        let mut values = Vec::with_capacity(self.mesh.triangles().len() * pts.len());
        for k in 0..self.mesh.triangles().len() {
            for &(bary, _) in pts {
                values.push(self.value_in(k, bary));
            }
        }
        let quad = Arc::new(self.mesh.quadrature(rule, t));
        DiscreteField::new(crate::spaces::FieldValues::Vector(values), quad).expect("lengths agree")
    }

    pub fn scaled(&self, alpha: f64) -> FEFunction {
        FEFunction {
            mesh: self.mesh.clone(),
            coeffs: self.coeffs.iter().map(|c| [alpha * c[0], alpha * c[1]]).collect(),
        }
    }

    /// `self + alpha · other` on the same level.
    pub fn axpy(&self, alpha: f64, other: &FEFunction) -> Result<FEFunction> {
        same_level(self, other)?;
        Ok(FEFunction {
            mesh: self.mesh.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| [a[0] + alpha * b[0], a[1] + alpha * b[1]])
                .collect(),
        })
    }

    /// `‖u‖_{L²}`.
    pub fn l2_norm(&self) -> f64 {
        l2_inner(self, self).expect("same level").max(0.0).sqrt()
    }
}

fn same_level(u: &FEFunction, v: &FEFunction) -> Result<()> {
    if u.mesh.id != v.mesh.id {
        return Err(Error::LevelMismatch(format!(
            "functions live on levels {} and {} of different meshes",
            u.mesh.level_index, v.mesh.level_index
        )));
    }
    Ok(())
}

/// Exact `L²` inner product with the P1 element mass matrix
/// `|T|/12 · [[2,1,1],[1,2,1],[1,1,2]]`.
pub fn l2_inner(u: &FEFunction, v: &FEFunction) -> Result<f64> {
    same_level(u, v)?;
    let mesh = &u.mesh;
    let mut acc = 0.0;
    for (tri, g) in mesh.triangles().iter().zip(mesh.geometry()) {
        let a = tri.map(|w| u.vertex_value(w));
        let b = tri.map(|w| v.vertex_value(w));
        let mut local = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let m = if i == j { 2.0 } else { 1.0 };
                local += m * (a[i][0] * b[j][0] + a[i][1] * b[j][1]);
            }
        }
        acc += g.area / 12.0 * local;
    }
    Ok(acc)
}

/// Exact transfer of `u` to a finer level of the same hierarchy.
pub fn prolong(u: &FEFunction, fine: &Arc<MeshLevel>) -> Result<FEFunction> {
    if !fine.descends_from(&u.mesh) {
        return Err(Error::LevelMismatch(format!(
            "level {} is not a refinement of level {}",
            fine.level_index, u.mesh.level_index
        )));
    }
    let mut chain = Vec::new();
    let mut cur = fine.clone();
    while cur.id != u.mesh.id {
        let parent = cur.parent.clone().expect("descent checked");
        chain.push(cur);
        cur = parent;
    }
    let mut nodal = u.nodal_values();
    for level in chain.iter().rev() {
        nodal = level
            .origins
            .iter()
            .map(|o| match *o {
                VertexOrigin::Coarse(i) => nodal[i],
                VertexOrigin::Midpoint(a, b) => [0.5 * (nodal[a][0] + nodal[b][0]), 0.5 * (nodal[a][1] + nodal[b][1])],
            })
            .collect();
    }
    let coeffs = fine.free_vertices().iter().map(|&v| nodal[v]).collect();
    Ok(FEFunction {
        mesh: fine.clone(),
        coeffs,
    })
}

/// Index of the coarse triangle containing fine triangle `k`, `levels_up` levels higher.
pub fn ancestor_triangle(k: usize, levels_up: usize) -> usize {
    k >> (2 * levels_up)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fe(mesh: &Arc<MeshLevel>, seed: u64) -> FEFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..mesh.n_free())
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        FEFunction::from_coeffs(mesh, coeffs).unwrap()
    }

    #[test]
    fn single_level_square_is_two_triangles() {
        let h = build_mesh_hierarchy(Domain::UnitSquare, 1).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].triangles().len(), 2);
        assert_eq!(h[0].vertices().len(), 4);
        assert_eq!(h[0].n_free(), 0);
    }

    #[test]
    fn vertex_counts_follow_the_refinement_formula() {
        let h = build_mesh_hierarchy(Domain::UnitSquare, 4).unwrap();
        for (l, m) in h.iter().enumerate() {
            let n = (1usize << l) + 1;
            assert_eq!(m.vertices().len(), n * n, "level {l}");
            assert_eq!(m.n_free(), (n - 2) * (n - 2), "level {l}");
            assert_eq!(m.triangles().len(), 2 << (2 * l));
        }
        assert_eq!(h[3].vertices().len(), 81);
        assert_eq!(h[3].n_free(), 49);
    }

    #[test]
    fn disk_vertices_stay_inside_radius() {
        let h = build_mesh_hierarchy(Domain::Disk { radius: 2.5 }, 2).unwrap();
        for m in &h {
            for v in m.vertices() {
                assert!(v[0].hypot(v[1]) <= 2.5 + 1e-12);
            }
        }
        assert_eq!(h[0].triangles().len(), 24);
        assert_eq!(h[0].n_free(), 7);
    }

    #[test]
    fn bad_domains_and_level_counts_are_rejected() {
        assert!(matches!(build_mesh_hierarchy(Domain::UnitSquare, 0), Err(Error::MeshError(_))));
        assert!(matches!(build_mesh_hierarchy(Domain::UnitSquare, 9), Err(Error::MeshError(_))));
        assert!(matches!(
            build_mesh_hierarchy(Domain::Disk { radius: 0.0 }, 2),
            Err(Error::MeshError(_))
        ));
        assert!(matches!(
            build_mesh_hierarchy(Domain::Disk { radius: f64::NAN }, 2),
            Err(Error::MeshError(_))
        ));
    }

    #[test]
    fn all_triangles_positively_oriented() {
        for domain in [Domain::UnitSquare, Domain::Disk { radius: 1.3 }] {
            for m in build_mesh_hierarchy(domain, 4).unwrap() {
                assert!(m.geometry().iter().all(|g| g.area > 0.0));
            }
        }
    }

    #[test]
    fn rotation_has_zero_symmetric_gradient() {
        let h = build_mesh_hierarchy(Domain::UnitSquare, 3).unwrap();
        let u = FEFunction::interpolate(&h[2], |x| [x[1], -x[0]]);
        // the interpolant is only a rotation on triangles without boundary vertices
        let mesh = &h[2];
        for (k, tri) in mesh.triangles().iter().enumerate() {
            if tri.iter().all(|&v| !mesh.boundary_mask()[v]) {
                let e = SymTensor2::sym_part(u.gradient_in(k));
                assert!(e.norm() < 1e-14);
            }
        }
    }

    #[test]
    fn linear_fields_have_exact_symmetric_gradients() {
        let h = build_mesh_hierarchy(Domain::UnitSquare, 3).unwrap();
        let mesh = &h[2];
        let interior: Vec<usize> = (0..mesh.triangles().len())
            .filter(|&k| mesh.triangles()[k].iter().all(|&v| !mesh.boundary_mask()[v]))
            .collect();
        assert!(!interior.is_empty());
        let u = FEFunction::interpolate(mesh, |x| [x[0], 0.0]);
        let v = FEFunction::interpolate(mesh, |x| [x[1], 0.0]);
        for &k in &interior {
            let eu = SymTensor2::sym_part(u.gradient_in(k));
            let ev = SymTensor2::sym_part(v.gradient_in(k));
            assert!((eu - SymTensor2::diag(1.0, 0.0)).norm() < 1e-13);
            assert!((ev - SymTensor2::new(0.0, 0.5, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn mass_inner_product_matches_seven_point_quadrature() {
        let h = build_mesh_hierarchy(Domain::UnitSquare, 4).unwrap();
        let u = FEFunction::interpolate(&h[3], |_| [1.0, 0.0]);
        let exact = l2_inner(&u, &u).unwrap();
        // degree-5 rule integrates the quadratic |u|² exactly
        let f = u.values_on(TriangleRule::SevenPoint, 0.0);
        let w = f.quadrature().weights();
        let oracle: f64 = (0..f.len()).map(|i| w[i] * f.magnitude(i).powi(2)).sum();
        assert!((exact - oracle).abs() < 1e-12, "{exact} vs {oracle}");
    }

    #[test]
    fn inner_product_is_symmetric_and_rejects_other_levels() {
        let h = build_mesh_hierarchy(Domain::Disk { radius: 1.0 }, 3).unwrap();
        let u = random_fe(&h[2], 1);
        let v = random_fe(&h[2], 2);
        assert!((l2_inner(&u, &v).unwrap() - l2_inner(&v, &u).unwrap()).abs() < 1e-14);
        assert!(l2_inner(&u, &u).unwrap() > 0.0);
        let w = random_fe(&h[1], 3);
        assert!(matches!(l2_inner(&u, &w), Err(Error::LevelMismatch(_))));
    }

    #[test]
    fn lumped_areas_sum_to_domain_area() {
        let h = build_mesh_hierarchy(Domain::UnitSquare, 3).unwrap();
        let total: f64 = h[2].lumped_areas().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prolongation_preserves_point_values() {
        let h = build_mesh_hierarchy(Domain::Disk { radius: 1.0 }, 4).unwrap();
        let u = random_fe(&h[1], 7);
        let fine = prolong(&u, &h[3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let r = 0.8 * rng.random::<f64>();
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let x = [r * a.cos(), r * a.sin()];
            let (p, q) = (u.evaluate(x).unwrap(), fine.evaluate(x).unwrap());
            assert!((p[0] - q[0]).abs() < 1e-13 && (p[1] - q[1]).abs() < 1e-13);
        }
        // coarse vertices keep their coefficients
        for &v in h[1].free_vertices() {
            let x = h[1].vertices()[v];
            let fv = h[3].vertices().iter().position(|y| *y == x).unwrap();
            assert_eq!(fine.coeffs()[h[3].free_index(fv).unwrap()], u.coeffs()[h[1].free_index(v).unwrap()]);
        }
    }

    #[test]
    fn prolongation_of_zero_is_zero_and_rejects_non_descendants() {
        let h = build_mesh_hierarchy(Domain::UnitSquare, 3).unwrap();
        assert!(prolong(&FEFunction::zeros(&h[0]), &h[2]).unwrap().is_zero());
        let u = random_fe(&h[2], 5);
        assert!(matches!(prolong(&u, &h[1]), Err(Error::LevelMismatch(_))));
        let other = build_mesh_hierarchy(Domain::UnitSquare, 3).unwrap();
        assert!(matches!(prolong(&random_fe(&h[1], 1), &other[2]), Err(Error::LevelMismatch(_))));
    }

    #[test]
    fn prolonged_symmetric_gradient_is_inherited_per_triangle() {
        let h = build_mesh_hierarchy(Domain::UnitSquare, 4).unwrap();
        let u = random_fe(&h[1], 3);
        let coarse = u.symmetric_gradient_per_triangle();
        let fine = prolong(&u, &h[3]).unwrap().symmetric_gradient_per_triangle();
        for (k, e) in fine.iter().enumerate() {
            assert!((*e - coarse[ancestor_triangle(k, 2)]).norm() < 1e-12);
        }
    }

    #[test]
    fn prolongation_preserves_the_inner_product() {
        let h = build_mesh_hierarchy(Domain::UnitSquare, 4).unwrap();
        let (u, v) = (random_fe(&h[2], 1), random_fe(&h[2], 2));
        let (uf, vf) = (prolong(&u, &h[3]).unwrap(), prolong(&v, &h[3]).unwrap());
        assert!((l2_inner(&u, &v).unwrap() - l2_inner(&uf, &vf).unwrap()).abs() < 1e-12);
    }
}
