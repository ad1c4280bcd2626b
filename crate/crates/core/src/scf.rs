//! Discrete Poisson solve and the self-consistent fixed-point iteration.

use crate::error::{Error, Result};
use crate::fem::{assemble_load, Analytic, ElementField, FeField, QuadratureRule, ScalarFn};
use crate::linsolve::{pcg_solve, EigenOptions, DEFAULT_EIGEN_TOL, DEFAULT_PCG_TOL};
use crate::occupancy::{build_density, determine_occupation, DensityField, DistributionParams, OccupationState};
use crate::spectrum::{AppliedPotential, Discretization, SpectralSet, SpectrumSolver};

#[derive(Clone, Debug)]
pub struct ScfConfig {
    /// Stop when `‖V^{k+1} − V^k‖_{H¹} ≤ tol_rel (1 + ‖V^{k+1}‖_{H¹})`.
    pub tol_rel: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub l_max: usize,
    pub eigen_tol: f64,
    pub pcg_tol: f64,
    pub seed: u64,
}

impl Default for ScfConfig {
    fn default() -> Self {
        Self {
            tol_rel: 1e-8,
            max_iter: 200,
            damping: 1.0,
            l_max: 512,
            eigen_tol: DEFAULT_EIGEN_TOL,
            pcg_tol: DEFAULT_PCG_TOL,
            seed: EigenOptions::default().seed,
        }
    }
}

impl ScfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_rel > 0.0) {
            return Err(Error::InvalidArgument("tol_rel must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument("damping must lie in (0, 1]".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if self.l_max == 0 {
            return Err(Error::InvalidArgument("l_max must be at least 1".into()));
        }
        if !(self.eigen_tol > 0.0 && self.pcg_tol > 0.0) {
            return Err(Error::InvalidArgument("solver tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Applied potential, doping and occupation statistics.
#[derive(Clone, Debug)]
pub struct Model {
    pub v0: AppliedPotential,
    pub doping: DopingProfile,
    pub params: DistributionParams,
}

#[derive(Clone)]
pub struct DopingProfile(pub ScalarFn);

impl std::fmt::Debug for DopingProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("DopingProfile")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub increment_h1: f64,
    pub potential_h1: f64,
    pub fermi_level: f64,
    pub l_h: usize,
    /// `Σ_l o_l`
    pub occupation_sum: f64,
    /// `∫ n_h` through the mass matrix
    pub density_integral: f64,
}

#[derive(Clone, Debug)]
pub struct ScfReport {
    pub potential: FeField,
    /// Density, occupations and spectrum of the final potential.
    pub density: DensityField,
    pub occupation: OccupationState,
    pub spectrum: SpectralSet,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    /// `‖V_h − 𝒜_h V_h‖_{H¹}` evaluated at the final potential.
    pub self_consistency_residual: f64,
}

impl ScfReport {
    pub fn final_increment(&self) -> f64 {
        self.iterations.last().map_or(f64::NAN, |r| r.increment_h1)
    }
}

/// Galerkin solution of `(∇ξ, ∇v) = (g, v)` from a prepared load vector.
pub fn poisson_solve_load(disc: &Discretization, load: &[f64], tol: f64) -> Result<FeField> {
    let max_iter = 10 * load.len().max(100);
    let x = pcg_solve(disc.stiffness(), load, tol, max_iter)?;
    Ok(FeField::from_interior(disc.mesh(), &x))
}

/// Galerkin solution of `−Δξ = rhs` with homogeneous Dirichlet data; the
/// load uses the 15-point rule, exact for the cubic integrands of `ψ² v`.
pub fn poisson_solve(disc: &Discretization, rhs: &dyn ElementField) -> Result<FeField> {
    let load = assemble_load(disc.mesh(), rhs, &QuadratureRule::with_degree(4)?);
    poisson_solve_load(disc, &load, DEFAULT_PCG_TOL)
}

struct DensityState {
    spectrum: SpectralSet,
    occupation: OccupationState,
    density: DensityField,
}

fn density_for(
    disc: &Discretization,
    model: &Model,
    cfg: &ScfConfig,
    potential: &FeField,
    warm: Option<Vec<Vec<f64>>>,
) -> Result<DensityState> {
    let opts = EigenOptions {
        seed: cfg.seed,
        ..Default::default()
    };
    let mut solver = SpectrumSolver::new(disc, Some(potential), &model.v0)
        .with_tolerance(cfg.eigen_tol)
        .with_options(opts);
    if let Some(w) = warm {
        solver = solver.with_warm_start(w);
    }
    let (spectrum, occupation) = determine_occupation(&mut solver, &model.params, cfg.l_max)?;
    let density = build_density(&spectrum, &occupation);
    Ok(DensityState {
        spectrum,
        occupation,
        density,
    })
}

fn apply_map(
    disc: &Discretization,
    cfg: &ScfConfig,
    density: &DensityField,
    doping_load: &[f64],
    quad: &QuadratureRule,
) -> Result<Vec<f64>> {
    let mut load = assemble_load(disc.mesh(), density, quad);
    for (l, d) in load.iter_mut().zip(doping_load) {
        *l -= d;
    }
    Ok(poisson_solve_load(disc, &load, cfg.pcg_tol)?.interior_values(disc.mesh()))
}

/// Fixed-point iteration `V ← (1−α)V + α 𝒜_h V` with
/// `𝒜_h V = Poisson(n_h[V] − n_D)`. Exhausting `max_iter` is reported
/// through `converged = false`, not as an error.
pub fn fixed_point_solve(
    disc: &Discretization,
    model: &Model,
    cfg: &ScfConfig,
    v_init: Option<&FeField>,
) -> Result<ScfReport> {
    cfg.validate()?;
    let mesh = disc.mesh();
    if let Some(v) = v_init {
        if v.values().len() != mesh.num_vertices() || !v.is_dirichlet(mesh) {
            return Err(Error::InvalidArgument(
                "initial potential must vanish on the boundary".into(),
            ));
        }
    }
    let quad = QuadratureRule::with_degree(4)?;
    let doping_load = assemble_load(mesh, &Analytic(model.doping.0.clone()), &quad);

    let mut v = v_init.map_or_else(|| vec![0.0; disc.num_dofs()], |f| f.interior_values(mesh));
    let mut warm: Option<Vec<Vec<f64>>> = None;
    let mut iterations = Vec::new();
    let mut converged = false;
    let alpha = cfg.damping;

    for iter in 1..=cfg.max_iter {
        let field = FeField::from_interior(mesh, &v);
        let state = density_for(disc, model, cfg, &field, warm.take())?;
        let xi = apply_map(disc, cfg, &state.density, &doping_load, &quad)?;
        let next: Vec<f64> = v
            .iter()
            .zip(&xi)
            .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
            .collect();
        let diff: Vec<f64> = next.iter().zip(&v).map(|(a, b)| a - b).collect();
        let increment = disc.h1_norm(&diff);
        let norm = disc.h1_norm(&next);
        iterations.push(IterationRecord {
            iter,
            increment_h1: increment,
            potential_h1: norm,
            fermi_level: state.occupation.fermi_level,
            l_h: state.occupation.l_h,
            occupation_sum: state.occupation.total(),
            density_integral: state.density.total_charge(mesh, disc.mass()),
        });
        warm = Some(state.spectrum.vectors);
        v = next;
        if increment <= cfg.tol_rel * (1.0 + norm) {
            converged = true;
            break;
        }
    }

    let potential = FeField::from_interior(mesh, &v);
    let state = density_for(disc, model, cfg, &potential, warm)?;
    let image = apply_map(disc, cfg, &state.density, &doping_load, &quad)?;
    let residual: Vec<f64> = image.iter().zip(&v).map(|(a, b)| a - b).collect();
    Ok(ScfReport {
        potential,
        density: state.density,
        occupation: state.occupation,
        spectrum: state.spectrum,
        iterations,
        converged,
        self_consistency_residual: disc.h1_norm(&residual),
    })
}
