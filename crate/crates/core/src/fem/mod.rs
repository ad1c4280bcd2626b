//! P1 Lagrange elements on tetrahedral meshes: fields, assembly of the
//! stiffness / mass / potential-weighted mass matrices and load vectors over
//! interior degrees of freedom, and L² / H¹ error functionals.

mod quadrature;

use std::sync::Arc;

use rayon::prelude::*;

use crate::linsolve::SparseSymMatrix;
use crate::mesh::{Mesh, Point};

pub use quadrature::QuadratureRule;

/// Analytic scalar field on the closed cube.
pub type ScalarFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
/// Analytic vector field, used for exact gradients.
pub type VectorFn = Arc<dyn Fn(&Point) -> [f64; 3] + Send + Sync>;

pub fn scalar_fn<F: Fn(&Point) -> f64 + Send + Sync + 'static>(f: F) -> ScalarFn {
    Arc::new(f)
}

pub fn constant(c: f64) -> ScalarFn {
    Arc::new(move |_| c)
}

/// Volume and barycentric gradients of one element.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub volume: f64,
    pub grads: [[f64; 3]; 4],
}

impl ElementGeometry {
    pub fn new(p: &[Point; 4]) -> Self {
        let e = |q: usize| [p[q][0] - p[0][0], p[q][1] - p[0][1], p[q][2] - p[0][2]];
        let (a, b, c) = (e(1), e(2), e(3));
        let cross = |u: [f64; 3], v: [f64; 3]| {
            [
                u[1] * v[2] - u[2] * v[1],
                u[2] * v[0] - u[0] * v[2],
                u[0] * v[1] - u[1] * v[0],
            ]
        };
        let bc = cross(b, c);
        let det = a[0] * bc[0] + a[1] * bc[1] + a[2] * bc[2];
        // rows of the inverse Jacobian are the gradients of λ1..λ3
        let g1 = bc.map(|v| v / det);
        let g2 = cross(c, a).map(|v| v / det);
        let g3 = cross(a, b).map(|v| v / det);
        let g0 = [
            -g1[0] - g2[0] - g3[0],
            -g1[1] - g2[1] - g3[1],
            -g1[2] - g2[2] - g3[2],
        ];
        Self {
            volume: det / 6.0,
            grads: [g0, g1, g2, g3],
        }
    }
}

pub fn bary_to_point(p: &[Point; 4], bary: &[f64; 4]) -> Point {
    let mut x = [0.0; 3];
    for q in 0..4 {
        for d in 0..3 {
            x[d] += bary[q] * p[q][d];
        }
    }
    x
}

/// A field that can be evaluated inside an element given barycentric and
/// physical coordinates of the point.
pub trait ElementField: Sync {
    fn value(&self, mesh: &Mesh, tet: usize, bary: &[f64; 4], x: &Point) -> f64;
}

/// Fields with an elementwise gradient.
pub trait ElementGradient: ElementField {
    fn gradient(&self, mesh: &Mesh, tet: usize, geom: &ElementGeometry, bary: &[f64; 4]) -> [f64; 3];
}

/// Wraps an analytic function as an [`ElementField`].
#[derive(Clone)]
pub struct Analytic(pub ScalarFn);

impl ElementField for Analytic {
    fn value(&self, _: &Mesh, _: usize, _: &[f64; 4], x: &Point) -> f64 {
        (self.0)(x)
    }
}

/// `Σ c_k f_k` over borrowed element fields.
pub struct Combination<'a> {
    terms: Vec<(f64, &'a dyn ElementField)>,
}

impl<'a> Combination<'a> {
    pub fn new() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn with(mut self, coeff: f64, field: &'a dyn ElementField) -> Self {
        self.terms.push((coeff, field));
        self
    }
}

impl Default for Combination<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl ElementField for Combination<'_> {
    fn value(&self, mesh: &Mesh, tet: usize, bary: &[f64; 4], x: &Point) -> f64 {
        self.terms
            .iter()
            .map(|(c, f)| c * f.value(mesh, tet, bary, x))
            .sum()
    }
}

/// Continuous piecewise-linear field given by one coefficient per vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct FeField {
    values: Vec<f64>,
}

impl FeField {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            values: vec![0.0; mesh.num_vertices()],
        }
    }

    pub fn from_values(mesh: &Mesh, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), mesh.num_vertices());
        Self { values }
    }

    /// Dirichlet field from interior-dof coefficients (boundary set to 0).
    pub fn from_interior(mesh: &Mesh, coeffs: &[f64]) -> Self {
        assert_eq!(coeffs.len(), mesh.num_interior());
        let mut values = vec![0.0; mesh.num_vertices()];
        for (&v, &c) in mesh.interior_vertices().iter().zip(coeffs) {
            values[v] = c;
        }
        Self { values }
    }

    /// Nodal interpolant.
    pub fn interpolate(mesh: &Mesh, f: impl Fn(&Point) -> f64) -> Self {
        Self {
            values: mesh.vertices().iter().map(f).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interior_values(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.interior_vertices()
            .iter()
            .map(|&v| self.values[v])
            .collect()
    }

    pub fn is_dirichlet(&self, mesh: &Mesh) -> bool {
        self.values
            .iter()
            .zip(mesh.boundary_mask())
            .all(|(&v, &b)| !b || v == 0.0)
    }

    /// Values at the four vertices of an element.
    pub fn local(&self, mesh: &Mesh, tet: usize) -> [f64; 4] {
        mesh.tets()[tet].map(|v| self.values[v])
    }

    pub fn axpy(&mut self, alpha: f64, other: &FeField) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }
}

impl ElementField for FeField {
    fn value(&self, mesh: &Mesh, tet: usize, bary: &[f64; 4], _: &Point) -> f64 {
        let loc = self.local(mesh, tet);
        (0..4).map(|q| loc[q] * bary[q]).sum()
    }
}

impl ElementGradient for FeField {
    fn gradient(&self, mesh: &Mesh, tet: usize, geom: &ElementGeometry, _: &[f64; 4]) -> [f64; 3] {
        let loc = self.local(mesh, tet);
        let mut g = [0.0; 3];
        for q in 0..4 {
            for d in 0..3 {
                g[d] += loc[q] * geom.grads[q][d];
            }
        }
        g
    }
}

/// Which vertices carry equations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dofs {
    /// Interior vertices only (homogeneous Dirichlet elimination).
    Interior,
    /// Every vertex, before boundary elimination.
    Full,
}

fn dof_of(mesh: &Mesh, dofs: Dofs, v: usize) -> Option<usize> {
    match dofs {
        Dofs::Interior => mesh.interior_index(v),
        Dofs::Full => Some(v),
    }
}

fn dof_count(mesh: &Mesh, dofs: Dofs) -> usize {
    match dofs {
        Dofs::Interior => mesh.num_interior(),
        Dofs::Full => mesh.num_vertices(),
    }
}

/// Assembles element matrices produced by `local`. Element kernels run in
/// parallel; accumulation is serial in element order, so the result is
/// bit-reproducible for any thread count.
pub fn assemble_matrix<F>(mesh: &Mesh, dofs: Dofs, local: F) -> SparseSymMatrix
where
    F: Fn(usize, &ElementGeometry) -> [[f64; 4]; 4] + Sync,
{
    let locals: Vec<[[f64; 4]; 4]> = (0..mesh.num_tets())
        .into_par_iter()
        .map(|t| local(t, &ElementGeometry::new(&mesh.tet_points(t))))
        .collect();
    let mut triplets = Vec::with_capacity(16 * mesh.num_tets());
    for (t, loc) in locals.iter().enumerate() {
        let ids = mesh.tets()[t].map(|v| dof_of(mesh, dofs, v));
        for a in 0..4 {
            let Some(i) = ids[a] else { continue };
            for b in 0..4 {
                if let Some(j) = ids[b] {
                    triplets.push((i, j, loc[a][b]));
                }
            }
        }
    }
    SparseSymMatrix::from_triplets(dof_count(mesh, dofs), &triplets)
        .expect("element assembly yields a symmetric pattern")
}

fn local_stiffness(geom: &ElementGeometry) -> [[f64; 4]; 4] {
    let mut k = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            let g = &geom.grads;
            k[a][b] =
                geom.volume * (g[a][0] * g[b][0] + g[a][1] * g[b][1] + g[a][2] * g[b][2]);
        }
    }
    k
}

/// Exact P1 element mass matrix `|K|/20 (1 + δ_ab)`.
pub fn local_mass(volume: f64) -> [[f64; 4]; 4] {
    let mut m = [[volume / 20.0; 4]; 4];
    for (a, row) in m.iter_mut().enumerate() {
        row[a] = volume / 10.0;
    }
    m
}

pub fn assemble_stiffness(mesh: &Mesh) -> SparseSymMatrix {
    assemble_stiffness_on(mesh, Dofs::Interior)
}

pub fn assemble_stiffness_on(mesh: &Mesh, dofs: Dofs) -> SparseSymMatrix {
    assemble_matrix(mesh, dofs, |_, g| local_stiffness(g))
}

pub fn assemble_mass(mesh: &Mesh) -> SparseSymMatrix {
    assemble_mass_on(mesh, Dofs::Interior)
}

pub fn assemble_mass_on(mesh: &Mesh, dofs: Dofs) -> SparseSymMatrix {
    assemble_matrix(mesh, dofs, |_, g| local_mass(g.volume))
}

/// Matrix of `(w φ_j, φ_i)` with `w` evaluated at the quadrature points.
pub fn assemble_weighted_mass(
    mesh: &Mesh,
    w: &dyn ElementField,
    quad: &QuadratureRule,
) -> SparseSymMatrix {
    assemble_matrix(mesh, Dofs::Interior, |t, geom| {
        let pts = mesh.tet_points(t);
        let mut m = [[0.0; 4]; 4];
        for (bary, wq) in quad.iter() {
            let x = bary_to_point(&pts, bary);
            let s = geom.volume * wq * w.value(mesh, t, bary, &x);
            for a in 0..4 {
                for b in 0..4 {
                    m[a][b] += s * (bary[a] * bary[b]);
                }
            }
        }
        m
    })
}

/// Load vector `(g, φ_i)` over interior dofs.
pub fn assemble_load(mesh: &Mesh, g: &dyn ElementField, quad: &QuadratureRule) -> Vec<f64> {
    let locals: Vec<[f64; 4]> = (0..mesh.num_tets())
        .into_par_iter()
        .map(|t| {
            let pts = mesh.tet_points(t);
            let vol = ElementGeometry::new(&pts).volume;
            let mut l = [0.0; 4];
            for (bary, wq) in quad.iter() {
                let x = bary_to_point(&pts, bary);
                let s = vol * wq * g.value(mesh, t, bary, &x);
                for a in 0..4 {
                    l[a] += s * bary[a];
                }
            }
            l
        })
        .collect();
    let mut out = vec![0.0; mesh.num_interior()];
    for (t, l) in locals.iter().enumerate() {
        for (a, &v) in mesh.tets()[t].iter().enumerate() {
            if let Some(i) = mesh.interior_index(v) {
                out[i] += l[a];
            }
        }
    }
    out
}

/// Sums a per-element quantity computed in parallel, serially in element order.
pub fn sum_over_elements<F>(mesh: &Mesh, f: F) -> f64
where
    F: Fn(usize, &[Point; 4], &ElementGeometry) -> f64 + Sync,
{
    let parts: Vec<f64> = (0..mesh.num_tets())
        .into_par_iter()
        .map(|t| {
            let pts = mesh.tet_points(t);
            f(t, &pts, &ElementGeometry::new(&pts))
        })
        .collect();
    parts.iter().sum()
}

pub fn integrate(mesh: &Mesh, f: &dyn ElementField, quad: &QuadratureRule) -> f64 {
    sum_over_elements(mesh, |t, pts, geom| {
        geom.volume
            * quad
                .iter()
                .map(|(bary, w)| w * f.value(mesh, t, bary, &bary_to_point(pts, bary)))
                .sum::<f64>()
    })
}

pub fn l2_norm(mesh: &Mesh, f: &dyn ElementField, quad: &QuadratureRule) -> f64 {
    sum_over_elements(mesh, |t, pts, geom| {
        geom.volume
            * quad
                .iter()
                .map(|(bary, w)| w * f.value(mesh, t, bary, &bary_to_point(pts, bary)).powi(2))
                .sum::<f64>()
    })
    .sqrt()
}

/// `‖f_h − f‖_{L²}`
pub fn l2_error(
    mesh: &Mesh,
    fh: &dyn ElementField,
    f: &(dyn Fn(&Point) -> f64 + Sync),
    quad: &QuadratureRule,
) -> f64 {
    sum_over_elements(mesh, |t, pts, geom| {
        geom.volume
            * quad
                .iter()
                .map(|(bary, w)| {
                    let x = bary_to_point(pts, bary);
                    w * (fh.value(mesh, t, bary, &x) - f(&x)).powi(2)
                })
                .sum::<f64>()
    })
    .sqrt()
}

/// `|f_h − f|_{H¹}` given the exact gradient of `f`.
pub fn h1_semi_error(
    mesh: &Mesh,
    fh: &dyn ElementGradient,
    grad_f: &(dyn Fn(&Point) -> [f64; 3] + Sync),
    quad: &QuadratureRule,
) -> f64 {
    sum_over_elements(mesh, |t, pts, geom| {
        geom.volume
            * quad
                .iter()
                .map(|(bary, w)| {
                    let x = bary_to_point(pts, bary);
                    let gh = fh.gradient(mesh, t, geom, bary);
                    let g = grad_f(&x);
                    w * ((gh[0] - g[0]).powi(2) + (gh[1] - g[1]).powi(2) + (gh[2] - g[2]).powi(2))
                })
                .sum::<f64>()
    })
    .sqrt()
}

/// Full H¹ norm of the error, `(‖e‖² + |e|²_{H¹})^{1/2}`.
pub fn h1_error(
    mesh: &Mesh,
    fh: &dyn ElementGradient,
    f: &(dyn Fn(&Point) -> f64 + Sync),
    grad_f: &(dyn Fn(&Point) -> [f64; 3] + Sync),
    quad: &QuadratureRule,
) -> f64 {
    let l2 = l2_error(mesh, fh, f, quad);
    let semi = h1_semi_error(mesh, fh, grad_f, quad);
    (l2 * l2 + semi * semi).sqrt()
}
