//! Discrete Hamiltonian `−Δ + u + V₀` and its lowest eigenpairs.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_mass, assemble_stiffness, assemble_weighted_mass, constant, Analytic, Combination,
    ElementField, FeField, QuadratureRule, ScalarFn,
};
use crate::linsolve::{
    lowest_eigenpairs_with, EigenOptions, SparseSymMatrix, DEFAULT_EIGEN_TOL,
};
use crate::mesh::Mesh;

/// A named analytic potential; the name enters the spectral cache tag.
#[derive(Clone)]
pub struct AppliedPotential {
    pub id: String,
    pub f: ScalarFn,
}

impl AppliedPotential {
    pub fn new(id: impl Into<String>, f: ScalarFn) -> Self {
        Self { id: id.into(), f }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const:{c:e}"), constant(c))
    }
}

impl std::fmt::Debug for AppliedPotential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AppliedPotential").field("id", &self.id).finish()
    }
}

/// Mesh plus the potential-independent matrices over interior dofs.
#[derive(Clone, Debug)]
pub struct Discretization {
    mesh: Arc<Mesh>,
    stiffness: SparseSymMatrix,
    mass: SparseSymMatrix,
    h: f64,
}

impl Discretization {
    pub fn new(m: usize) -> Result<Self> {
        Ok(Self::from_mesh(Mesh::structured(m)?))
    }

    pub fn from_mesh(mesh: Mesh) -> Self {
        let stiffness = assemble_stiffness(&mesh);
        let mass = assemble_mass(&mesh);
        let h = mesh.mesh_size();
        Self {
            mesh: Arc::new(mesh),
            stiffness,
            mass,
            h,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn stiffness(&self) -> &SparseSymMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &SparseSymMatrix {
        &self.mass
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn num_dofs(&self) -> usize {
        self.mesh.num_interior()
    }

    /// `vᵀ(K + M)v` for interior coefficients.
    pub fn h1_norm(&self, v: &[f64]) -> f64 {
        (self.stiffness.bilinear(v, v) + self.mass.bilinear(v, v))
            .max(0.0)
            .sqrt()
    }

    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        self.mass.bilinear(v, v).max(0.0).sqrt()
    }
}

/// Pencil `(K + M_{u+V₀}, M)` with the weighted mass from the degree-2 rule.
pub fn assemble_hamiltonian(
    disc: &Discretization,
    u: Option<&FeField>,
    v0: &AppliedPotential,
) -> (SparseSymMatrix, SparseSymMatrix) {
    let quad = QuadratureRule::degree2();
    let applied = Analytic(v0.f.clone());
    let mut w = Combination::new().with(1.0, &applied);
    if let Some(u) = u {
        w = w.with(1.0, u as &dyn ElementField);
    }
    let weighted = assemble_weighted_mass(disc.mesh(), &w, &quad);
    let a = disc
        .stiffness()
        .add_scaled(&weighted, 1.0)
        .expect("matrices share the interior dof space");
    (a, disc.mass().clone())
}

/// Cache key of a potential: its coefficients plus the applied potential id.
pub fn potential_tag(u: Option<&FeField>, v0: &AppliedPotential) -> u64 {
    let mut hasher = DefaultHasher::new();
    v0.id.hash(&mut hasher);
    if let Some(u) = u {
        for v in u.values() {
            v.to_bits().hash(&mut hasher);
        }
    }
    hasher.finish()
}

#[derive(Clone, Debug)]
pub struct SpectralSet {
    pub tag: u64,
    pub eigenvalues: Vec<f64>,
    /// Interior coefficients, M-orthonormal.
    pub vectors: Vec<Vec<f64>>,
    pub eigenfunctions: Vec<FeField>,
}

impl SpectralSet {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// The first `count` pairs.
    pub fn truncated(&self, count: usize) -> SpectralSet {
        let count = count.min(self.len());
        SpectralSet {
            tag: self.tag,
            eigenvalues: self.eigenvalues[..count].to_vec(),
            vectors: self.vectors[..count].to_vec(),
            eigenfunctions: self.eigenfunctions[..count].to_vec(),
        }
    }
}

/// Lowest eigenpairs of one fixed Hamiltonian, memoized: asking for fewer
/// pairs than already computed costs nothing, asking for more restarts from
/// the cached vectors.
pub struct SpectrumSolver<'a> {
    disc: &'a Discretization,
    a: SparseSymMatrix,
    tag: u64,
    tol: f64,
    options: EigenOptions,
    warm: Option<Vec<Vec<f64>>>,
    cache: Option<SpectralSet>,
    solves: usize,
}

impl<'a> SpectrumSolver<'a> {
    pub fn new(disc: &'a Discretization, u: Option<&FeField>, v0: &AppliedPotential) -> Self {
        let (a, _) = assemble_hamiltonian(disc, u, v0);
        Self {
            disc,
            a,
            tag: potential_tag(u, v0),
            tol: DEFAULT_EIGEN_TOL,
            options: EigenOptions::default(),
            warm: None,
            cache: None,
            solves: 0,
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_options(mut self, options: EigenOptions) -> Self {
        self.options = options;
        self
    }

    /// Starting vectors, typically eigenvectors of a nearby potential.
    pub fn with_warm_start(mut self, vectors: Vec<Vec<f64>>) -> Self {
        self.warm = Some(vectors);
        self
    }

    pub fn discretization(&self) -> &Discretization {
        self.disc
    }

    pub fn dim(&self) -> usize {
        self.disc.num_dofs()
    }

    pub fn tag(&self) -> u64 {
        self.tag
    }

    pub fn matrix(&self) -> &SparseSymMatrix {
        &self.a
    }

    /// Number of eigensolver calls so far.
    pub fn solves(&self) -> usize {
        self.solves
    }

    pub fn solve(&mut self, count: usize) -> Result<SpectralSet> {
        if count == 0 || count > self.dim() {
            return Err(Error::InvalidArgument(format!(
                "requested {count} eigenpairs with {} interior dofs",
                self.dim()
            )));
        }
        if let Some(cached) = &self.cache {
            if cached.len() >= count {
                return Ok(cached.truncated(count));
            }
        }
        let warm = self
            .cache
            .as_ref()
            .map(|c| c.vectors.clone())
            .or_else(|| self.warm.clone());
        let result = lowest_eigenpairs_with(
            &self.a,
            self.disc.mass(),
            count,
            self.tol,
            0.0,
            &self.options,
            warm.as_deref(),
        )?;
        self.solves += 1;
        let mesh = self.disc.mesh();
        let mut vectors = result.vectors;
        for v in &mut vectors {
            let norm = self.disc.l2_norm(v);
            let pivot = v.iter().fold(0.0f64, |acc, &c| if c.abs() > acc.abs() { c } else { acc });
            let s = if pivot < 0.0 { -1.0 / norm } else { 1.0 / norm };
            for c in v.iter_mut() {
                *c *= s;
            }
        }
        let eigenfunctions = vectors.iter().map(|v| FeField::from_interior(mesh, v)).collect();
        let set = SpectralSet {
            tag: self.tag,
            eigenvalues: result.values,
            vectors,
            eigenfunctions,
        };
        self.cache = Some(set.clone());
        Ok(set)
    }
}

/// One-shot spectrum of `−Δ + u + V₀`.
pub fn solve_spectrum(
    disc: &Discretization,
    u: Option<&FeField>,
    v0: &AppliedPotential,
    count: usize,
    tol: f64,
) -> Result<SpectralSet> {
    SpectrumSolver::new(disc, u, v0).with_tolerance(tol).solve(count)
}
