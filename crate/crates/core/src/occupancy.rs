//! Occupation statistics: distribution functions, the smooth energy cutoff,
//! the discrete Fermi level and the electron density built from occupied
//! eigenfunctions.

use crate::error::{Error, Result};
use crate::fem::{ElementField, ElementGeometry, ElementGradient, FeField};
use crate::mesh::{Mesh, Point};
use crate::spectrum::{SpectralSet, SpectrumSolver};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistributionKind {
    Boltzmann,
    FermiDirac,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistributionParams {
    pub kind: DistributionKind,
    pub f0: f64,
    pub mu: f64,
    pub n0: f64,
}

impl DistributionParams {
    pub fn new(kind: DistributionKind, f0: f64, mu: f64, n0: f64) -> Result<Self> {
        for (name, v) in [("f0", f0), ("mu", mu), ("N0", n0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self { kind, f0, mu, n0 })
    }

    pub fn boltzmann(f0: f64, mu: f64, n0: f64) -> Result<Self> {
        Self::new(DistributionKind::Boltzmann, f0, mu, n0)
    }

    /// `f(t)`
    pub fn value(&self, t: f64) -> f64 {
        match self.kind {
            DistributionKind::Boltzmann => self.f0 * (-self.mu * t).exp(),
            DistributionKind::FermiDirac => {
                let s = self.mu * t;
                if s > 0.0 {
                    let e = (-s).exp();
                    self.f0 * e / (1.0 + e)
                } else {
                    self.f0 / (1.0 + s.exp())
                }
            }
        }
    }

    /// `f′(t)`
    pub fn derivative(&self, t: f64) -> f64 {
        match self.kind {
            DistributionKind::Boltzmann => -self.mu * self.value(t),
            DistributionKind::FermiDirac => {
                // f′ = −μ f0 e^{s}/(1+e^{s})²
                let e = (-(self.mu * t).abs()).exp();
                -self.mu * self.f0 * e / ((1.0 + e) * (1.0 + e))
            }
        }
    }
}

fn sigma(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

fn sigma_prime(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp() / (s * s)
    } else {
        0.0
    }
}

/// Smooth step: 1 for `t ≤ M`, 0 for `t ≥ M+1`, nonincreasing between.
pub fn cutoff_chi(m: f64, t: f64) -> f64 {
    if t <= m {
        return 1.0;
    }
    if t >= m + 1.0 {
        return 0.0;
    }
    let a = sigma(m + 1.0 - t);
    let b = sigma(t - m);
    a / (a + b)
}

pub fn cutoff_chi_derivative(m: f64, t: f64) -> f64 {
    if t <= m || t >= m + 1.0 {
        return 0.0;
    }
    let (s1, s2) = (m + 1.0 - t, t - m);
    let (a, b) = (sigma(s1), sigma(s2));
    let (da, db) = (sigma_prime(s1), sigma_prime(s2));
    -(da * b + a * db) / ((a + b) * (a + b))
}

/// `f_M(t) = χ_M(t) f(t)`; `M = ∞` disables the cutoff.
pub fn truncated_distribution(p: &DistributionParams, m: f64, t: f64) -> f64 {
    if m.is_infinite() {
        return p.value(t);
    }
    match cutoff_chi(m, t) {
        0.0 => 0.0,
        c => c * p.value(t),
    }
}

pub fn truncated_derivative(p: &DistributionParams, m: f64, t: f64) -> f64 {
    if m.is_infinite() {
        return p.derivative(t);
    }
    cutoff_chi(m, t) * p.derivative(t) + cutoff_chi_derivative(m, t) * p.value(t)
}

/// `M_h = 2|ln h|/μ`.
pub fn truncation_bound(h: f64, p: &DistributionParams) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "mesh size must lie in (0, 1) for the energy window, got {h}"
        )));
    }
    Ok(2.0 * h.ln().abs() / p.mu)
}

fn occupation_sum(eigs: &[f64], p: &DistributionParams, m: f64, y: f64) -> (f64, f64) {
    let mut g = 0.0;
    let mut dg = 0.0;
    for &e in eigs {
        g += truncated_distribution(p, m, e - y);
        dg -= truncated_derivative(p, m, e - y);
    }
    (g, dg)
}

/// Solves `Σ_l f_M(ε_l − y) = N₀` for `y`.
pub fn solve_fermi(eigs: &[f64], p: &DistributionParams, m: f64) -> Result<f64> {
    if eigs.is_empty() {
        return Err(Error::InvalidArgument("no eigenvalues".into()));
    }
    let l = eigs.len() as f64;
    let first = eigs[0];
    let last = eigs[eigs.len() - 1];
    let mut lo = first - (p.f0 * l / p.n0).ln() / p.mu - 10.0;
    let mut hi = last + (p.n0 / p.f0).ln() / p.mu + 10.0;
    let target = p.n0;
    let tol = 1e-12 * p.n0;

    let (mut g_hi, _) = occupation_sum(eigs, p, m, hi);
    let mut expansions = 0;
    while g_hi < target {
        // the Fermi-Dirac sum saturates slowly; widen before giving up
        if expansions == 60 {
            return Err(Error::InfeasibleOccupation {
                achievable: g_hi,
                n0: target,
            });
        }
        let width = hi - lo;
        hi += width;
        g_hi = occupation_sum(eigs, p, m, hi).0;
        expansions += 1;
    }
    while occupation_sum(eigs, p, m, lo).0 > target {
        lo -= hi - lo;
    }

    while hi - lo > 1e-2 {
        let mid = 0.5 * (lo + hi);
        let (g, _) = occupation_sum(eigs, p, m, mid);
        if (g - target).abs() <= tol {
            return Ok(mid);
        }
        if g < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (g, dg) = occupation_sum(eigs, p, m, y);
        if (g - target).abs() <= tol {
            return Ok(y);
        }
        if g < target {
            lo = y;
        } else {
            hi = y;
        }
        let newton = if dg >= 1e-300 { y - (g - target) / dg } else { f64::NAN };
        y = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * y.abs().max(1.0) {
            let (g, _) = occupation_sum(eigs, p, m, y);
            if (g - target).abs() <= 1e-10 * target {
                return Ok(y);
            }
            break;
        }
    }
    let (g, _) = occupation_sum(eigs, p, m, y);
    Err(Error::Precision(format!(
        "Fermi level solve stalled at y = {y}, residual {:e}",
        g - target
    )))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OccupationState {
    pub m_h: f64,
    pub fermi_level: f64,
    /// `f_{M_h}(ε_l − ε_F)` for every computed level; zero from `L_h` on.
    pub occupations: Vec<f64>,
    /// 1-based index of the first unoccupied level.
    pub l_h: usize,
}

impl OccupationState {
    pub fn occupied(&self) -> &[f64] {
        &self.occupations[..self.l_h - 1]
    }

    pub fn total(&self) -> f64 {
        self.occupations.iter().sum()
    }
}

/// Initial block size `max(16, ⌈(2|ln h|)^{3/2}⌉)`.
pub fn initial_level_count(h: f64) -> usize {
    let guess = (2.0 * h.ln().abs()).powf(1.5).ceil() as usize;
    guess.max(16)
}

/// Computes enough eigenpairs to close the energy window, the discrete
/// Fermi level and the occupations. `l_max` caps the number of levels.
pub fn determine_occupation(
    solver: &mut SpectrumSolver<'_>,
    p: &DistributionParams,
    l_max: usize,
) -> Result<(SpectralSet, OccupationState)> {
    let h = solver.discretization().h();
    let m_h = truncation_bound(h, p)?;
    let cap = l_max.min(solver.dim());
    if cap == 0 {
        return Err(Error::InvalidArgument("no levels available".into()));
    }
    let mut count = initial_level_count(h).min(cap);
    loop {
        let spec = solver.solve(count)?;
        let fermi = solve_fermi(&spec.eigenvalues, p, m_h)?;
        let occupations: Vec<f64> = spec
            .eigenvalues
            .iter()
            .map(|&e| truncated_distribution(p, m_h, e - fermi))
            .collect();
        if let Some(first_zero) = occupations.iter().position(|&o| o == 0.0) {
            let state = OccupationState {
                m_h,
                fermi_level: fermi,
                occupations,
                l_h: first_zero + 1,
            };
            debug_assert!(state.l_h <= solver.dim());
            return Ok((spec, state));
        }
        if count == cap {
            return Err(Error::TruncationOverflow {
                levels: count,
                reached: spec.eigenvalues[count - 1] - fermi,
                needed: m_h + 1.0,
            });
        }
        count = (2 * count).min(cap);
    }
}

/// `n_h = Σ_{l<L_h} o_l ψ_l²`, evaluated exactly per element.
#[derive(Clone, Debug)]
pub struct DensityField {
    pub eigenfunctions: Vec<FeField>,
    pub occupations: Vec<f64>,
}

pub fn build_density(spec: &SpectralSet, occ: &OccupationState) -> DensityField {
    let occupied = occ.occupied();
    DensityField {
        eigenfunctions: spec.eigenfunctions[..occupied.len()].to_vec(),
        occupations: occupied.to_vec(),
    }
}

impl DensityField {
    /// `Σ o_l ‖ψ_l‖²` through the mass matrix coefficients.
    pub fn total_charge(&self, mesh: &Mesh, mass: &crate::linsolve::SparseSymMatrix) -> f64 {
        self.eigenfunctions
            .iter()
            .zip(&self.occupations)
            .map(|(psi, o)| {
                let v = psi.interior_values(mesh);
                o * mass.bilinear(&v, &v)
            })
            .sum()
    }
}

impl ElementField for DensityField {
    fn value(&self, mesh: &Mesh, tet: usize, bary: &[f64; 4], x: &Point) -> f64 {
        self.eigenfunctions
            .iter()
            .zip(&self.occupations)
            .map(|(psi, o)| o * psi.value(mesh, tet, bary, x).powi(2))
            .sum()
    }
}

impl ElementGradient for DensityField {
    fn gradient(&self, mesh: &Mesh, tet: usize, geom: &ElementGeometry, bary: &[f64; 4]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for (psi, o) in self.eigenfunctions.iter().zip(&self.occupations) {
            let v = psi.value(mesh, tet, bary, &[0.0; 3]);
            let d = psi.gradient(mesh, tet, geom, bary);
            for k in 0..3 {
                g[k] += 2.0 * o * v * d[k];
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{integrate, QuadratureRule};
    use crate::oracle::{continuous_fermi, cube_eigensequence};
    use crate::spectrum::{AppliedPotential, Discretization};
    use proptest::prelude::*;

    fn ex1() -> DistributionParams {
        DistributionParams::boltzmann(1.0, 0.1, 100.0).unwrap()
    }

    #[test]
    fn distribution_values() {
        let p = ex1();
        assert_eq!(p.value(0.0), 1.0);
        assert!((p.value(10.0) - 0.367_879_4).abs() < 1e-7);
        let fd = DistributionParams::new(DistributionKind::FermiDirac, 2.0, 1.0, 1.0).unwrap();
        assert_eq!(fd.value(0.0), 1.0);
        assert!(DistributionParams::boltzmann(1.0, -1.0, 1.0).is_err());
        assert!(DistributionParams::boltzmann(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn derivatives_match_differences() {
        let fd = DistributionParams::new(DistributionKind::FermiDirac, 2.0, 0.7, 1.0).unwrap();
        for p in [ex1(), fd] {
            for t in [-5.0, -0.3, 0.0, 2.0, 30.0] {
                let step = 1e-5;
                let fdiff = (p.value(t + step) - p.value(t - step)) / (2.0 * step);
                assert!((fdiff - p.derivative(t)).abs() < 1e-8, "{t}");
            }
        }
        let m = 3.0;
        for t in [3.1, 3.5, 3.9] {
            let step = 1e-6;
            let fdiff = (cutoff_chi(m, t + step) - cutoff_chi(m, t - step)) / (2.0 * step);
            assert!((fdiff - cutoff_chi_derivative(m, t)).abs() < 1e-6);
        }
    }

    #[test]
    fn cutoff_values() {
        let m = 4.0;
        assert_eq!(cutoff_chi(m, m), 1.0);
        assert_eq!(cutoff_chi(m, m + 1.0), 0.0);
        assert!((cutoff_chi(m, m + 0.5) - 0.5).abs() < 1e-15);
        assert!(cutoff_chi(m, m + 0.25) > cutoff_chi(m, m + 0.75));
    }

    #[test]
    fn truncated_values() {
        let p = ex1();
        let m = 10.0;
        assert_eq!(truncated_distribution(&p, m, m - 1.0), p.value(m - 1.0));
        assert_eq!(truncated_distribution(&p, m, m + 2.0), 0.0);
        let v = truncated_distribution(&p, m, m + 0.5);
        assert!((v - 0.5 * (-1.05f64).exp()).abs() < 1e-15, "{v}");
        assert!((v - 0.174_968_9).abs() < 1e-7);
    }

    #[test]
    fn truncation_bounds() {
        let p = ex1();
        assert!((truncation_bound(0.1, &p).unwrap() - 46.0517).abs() < 1e-4);
        let q = DistributionParams::boltzmann(1.0, 2.0, 1.0).unwrap();
        assert!((truncation_bound((-1f64).exp(), &q).unwrap() - 1.0).abs() < 1e-15);
        let r = DistributionParams::boltzmann(4.4e-6, 2.2e-3, 100.0).unwrap();
        let mh = truncation_bound(0.25, &r).unwrap();
        assert!((mh - 2.0 * 4f64.ln() / 2.2e-3).abs() < 1e-9);
        assert!((mh - 1260.27).abs() < 0.01, "{mh}");
        assert!(truncation_bound(1.0, &p).is_err());
        assert!(truncation_bound(1.7, &p).is_err());
    }

    #[test]
    fn fermi_closed_forms() {
        let p = ex1();
        let e = 12.5;
        let y = solve_fermi(&[e], &p, f64::INFINITY).unwrap();
        assert!((y - (e + (100.0f64).ln() / 0.1)).abs() < 1e-9);
        let y = solve_fermi(&[e, e], &p, f64::INFINITY).unwrap();
        assert!((y - (e + (50.0f64).ln() / 0.1)).abs() < 1e-9);
    }

    #[test]
    fn fermi_matches_partition_sum() {
        let p = ex1();
        let eigs: Vec<f64> = cube_eigensequence(4000).iter().map(|m| m.lambda()).collect();
        let y = solve_fermi(&eigs, &p, f64::INFINITY).unwrap();
        let oracle = continuous_fermi(&p).unwrap();
        assert!((y - oracle).abs() < 1e-9, "{y} vs {oracle}");
    }

    #[test]
    fn fermi_dirac_and_cutoff_conserve() {
        let fd = DistributionParams::new(DistributionKind::FermiDirac, 2.0, 0.1, 100.0).unwrap();
        let eigs: Vec<f64> = cube_eigensequence(400).iter().map(|m| m.lambda()).collect();
        for (p, m) in [(fd, f64::INFINITY), (fd, 40.0), (ex1(), 40.0)] {
            let y = solve_fermi(&eigs, &p, m).unwrap();
            let g: f64 = eigs.iter().map(|&e| truncated_distribution(&p, m, e - y)).sum();
            assert!((g - 100.0).abs() <= 1e-12 * 100.0, "{g}");
        }
    }

    #[test]
    fn fermi_infeasible() {
        let fd = DistributionParams::new(DistributionKind::FermiDirac, 1.0, 0.1, 100.0).unwrap();
        let eigs = [1.0, 2.0, 3.0];
        assert!(matches!(
            solve_fermi(&eigs, &fd, f64::INFINITY),
            Err(Error::InfeasibleOccupation { .. })
        ));
    }

    #[test]
    fn occupation_on_laplacian() {
        let p = ex1();
        let oracle = continuous_fermi(&p).unwrap();
        let mut l_prev = 0;
        for m in [4, 8] {
            let disc = Discretization::new(m).unwrap();
            let mut solver = SpectrumSolver::new(&disc, None, &AppliedPotential::zero());
            let (spec, occ) = determine_occupation(&mut solver, &p, 512).unwrap();
            assert!((occ.total() - 100.0).abs() <= 1e-10 * 100.0);
            assert!(occ.fermi_level >= oracle - 1e-10);
            let o = &occ.occupations;
            assert!(o[..occ.l_h - 1].iter().all(|&x| x > 0.0));
            assert!(o[occ.l_h - 1..].iter().all(|&x| x == 0.0));
            assert!(o.windows(2).all(|w| w[0] >= w[1]));
            assert!(spec.eigenvalues[occ.l_h - 1] - occ.fermi_level >= occ.m_h + 1.0);
            assert!(occ.l_h >= l_prev);
            l_prev = occ.l_h;

            let density = build_density(&spec, &occ);
            let quad = QuadratureRule::degree2();
            let total = integrate(disc.mesh(), &density, &quad);
            assert!((total - 100.0).abs() <= 1e-9 * 100.0, "{total}");
            let charge = density.total_charge(disc.mesh(), disc.mass());
            assert!((charge - 100.0).abs() <= 1e-9 * 100.0);
        }
    }

    #[test]
    fn overflow_in_low_temperature_regime() {
        let p = DistributionParams::boltzmann(4.4e-6, 2.2e-3, 100.0).unwrap();
        let disc = Discretization::new(4).unwrap();
        let mut solver = SpectrumSolver::new(&disc, None, &AppliedPotential::zero());
        let err = determine_occupation(&mut solver, &p, 64).unwrap_err();
        assert!(matches!(err, Error::TruncationOverflow { .. }), "{err:?}");
    }

    #[test]
    fn single_level_density() {
        let disc = Discretization::new(4).unwrap();
        let spec = crate::spectrum::solve_spectrum(&disc, None, &AppliedPotential::zero(), 2, 1e-10)
            .unwrap();
        let occ = OccupationState {
            m_h: 1.0,
            fermi_level: 0.0,
            occupations: vec![100.0, 0.0],
            l_h: 2,
        };
        let density = build_density(&spec, &occ);
        let psi = spec.eigenfunctions[0].clone();
        let mesh = disc.mesh();
        for t in [0, 17, 100] {
            let bary = [0.1, 0.2, 0.3, 0.4];
            let x = [0.0; 3];
            let expected = 100.0 * psi.value(mesh, t, &bary, &x).powi(2);
            assert!((density.value(mesh, t, &bary, &x) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn density_independent_of_cluster_basis() {
        let disc = Discretization::new(6).unwrap();
        let p = ex1();
        let run = |seed: u64| {
            let opts = crate::linsolve::EigenOptions {
                seed,
                ..Default::default()
            };
            let mut solver =
                SpectrumSolver::new(&disc, None, &AppliedPotential::zero()).with_options(opts);
            let spec = solver.solve(4).unwrap();
            let fermi = solve_fermi(&spec.eigenvalues, &p, f64::INFINITY).unwrap();
            let mut occupations: Vec<f64> =
                spec.eigenvalues.iter().map(|&e| p.value(e - fermi)).collect();
            occupations.push(0.0);
            (spec, occupations)
        };
        let (s1, o1) = run(1);
        let (s2, o2) = run(99);
        let dens = |s: &SpectralSet, o: &[f64]| DensityField {
            eigenfunctions: s.eigenfunctions.clone(),
            occupations: o[..4].to_vec(),
        };
        let (d1, d2) = (dens(&s1, &o1), dens(&s2, &o2));
        let quad = QuadratureRule::degree5();
        let mesh = disc.mesh();
        let diff = crate::fem::Combination::new().with(1.0, &d1).with(-1.0, &d2);
        let err = crate::fem::l2_norm(mesh, &diff, &quad);
        assert!(err <= 1e-6, "{err}");
    }

    proptest! {
        #[test]
        fn cutoff_sandwich(m in -5.0f64..50.0, t in -20.0f64..80.0) {
            let p = ex1();
            let fm = truncated_distribution(&p, m, t);
            prop_assert!(fm >= 0.0);
            prop_assert!(fm <= p.value(t));
            if t <= m {
                prop_assert_eq!(fm, p.value(t));
            }
            if t >= m + 1.0 {
                prop_assert_eq!(fm, 0.0);
            }
        }

        #[test]
        fn cutoff_nonincreasing(m in -5.0f64..5.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(cutoff_chi(m, m + lo) >= cutoff_chi(m, m + hi));
        }
    }
}
