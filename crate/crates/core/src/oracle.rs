//! Closed-form ground truth on the unit cube: Dirichlet Laplacian modes,
//! the continuous Fermi level, the exact electron density series and the
//! manufactured problems whose exact potential is known.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{scalar_fn, ScalarFn};
use crate::mesh::Point;
use crate::occupancy::{DistributionKind, DistributionParams};

/// `sin(iπx) sin(jπy) sin(kπz)` scaled to unit L² norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CubeMode {
    pub i: u32,
    pub j: u32,
    pub k: u32,
}

impl CubeMode {
    pub fn index_sum(&self) -> u32 {
        self.i * self.i + self.j * self.j + self.k * self.k
    }

    pub fn lambda(&self) -> f64 {
        self.index_sum() as f64 * PI * PI
    }

    pub fn phi(&self, x: &Point) -> f64 {
        8f64.sqrt()
            * (self.i as f64 * PI * x[0]).sin()
            * (self.j as f64 * PI * x[1]).sin()
            * (self.k as f64 * PI * x[2]).sin()
    }

    pub fn grad_phi(&self, x: &Point) -> [f64; 3] {
        let (a, b, c) = (self.i as f64 * PI, self.j as f64 * PI, self.k as f64 * PI);
        let (sx, cx) = (a * x[0]).sin_cos();
        let (sy, cy) = (b * x[1]).sin_cos();
        let (sz, cz) = (c * x[2]).sin_cos();
        let s8 = 8f64.sqrt();
        [s8 * a * cx * sy * sz, s8 * b * sx * cy * sz, s8 * c * sx * sy * cz]
    }
}

/// All modes with `i² + j² + k² ≤ bound`, sorted by eigenvalue then
/// lexicographically.
pub fn modes_up_to(bound: u32) -> Vec<CubeMode> {
    let imax = (bound as f64).sqrt() as u32 + 1;
    let mut modes = Vec::new();
    for i in 1..=imax {
        for j in 1..=imax {
            for k in 1..=imax {
                let mode = CubeMode { i, j, k };
                if mode.index_sum() <= bound {
                    modes.push(mode);
                }
            }
        }
    }
    modes.sort_by_key(|m| (m.index_sum(), m.i, m.j, m.k));
    modes
}

/// The first `count` Laplacian modes in ascending order, with multiplicity.
pub fn cube_eigensequence(count: usize) -> Vec<CubeMode> {
    let mut bound = 16;
    loop {
        let modes = modes_up_to(bound);
        if modes.len() >= count {
            return modes.into_iter().take(count).collect();
        }
        bound *= 2;
    }
}

/// `Σ_{i≥1} e^{−μπ²i²}`, the one-axis Boltzmann partition sum.
pub fn partition_1d(mu: f64) -> f64 {
    let mut s = 0.0;
    for i in 1.. {
        let t = (-mu * PI * PI * (i * i) as f64).exp();
        s += t;
        if t <= 1e-18 * s {
            break;
        }
    }
    s
}

/// `Z = Σ_l e^{−μλ_l}` over all cube modes.
pub fn partition_sum(mu: f64) -> f64 {
    partition_1d(mu).powi(3)
}

/// `Σ_{k ≥ 1, k² > c} e^{−μπ²k²}`, summed directly.
fn axis_tail(mu: f64, c: i64) -> f64 {
    let mut k = if c < 0 { 1 } else { (c as f64).sqrt() as i64 };
    while k * k <= c {
        k += 1;
    }
    let mut s = 0.0;
    loop {
        let t = (-mu * PI * PI * (k * k) as f64).exp();
        s += t;
        if t <= 1e-18 * s || t == 0.0 {
            return s;
        }
        k += 1;
    }
}

/// Boltzmann weight of all modes with index sum above `bound`, computed
/// shell by shell so that no cancellation against `Z` occurs.
fn boltzmann_tail(mu: f64, bound: u32) -> f64 {
    let a = mu * PI * PI;
    let bound = bound as i64;
    // pairs beyond this radius contribute below e^{−60} of the leading term
    let r2 = bound + (60.0 / a).ceil() as i64;
    let r = (r2 as f64).sqrt() as i64 + 1;
    let mut s = 0.0;
    for i in 1..=r {
        for j in 1..=r {
            let q = i * i + j * j;
            if q > r2 {
                break;
            }
            s += (-a * q as f64).exp() * axis_tail(mu, bound - q);
        }
    }
    s
}

fn occupation_sum(p: &DistributionParams, modes: &[CubeMode], y: f64) -> f64 {
    modes.iter().map(|m| p.value(m.lambda() - y)).sum()
}

/// Fermi level of the continuous problem with the bare Laplacian spectrum,
/// `Σ_l f(λ_l − ε_F) = N₀`.
pub fn continuous_fermi(p: &DistributionParams) -> Result<f64> {
    let z = partition_sum(p.mu);
    let boltzmann = (p.n0 / (p.f0 * z)).ln() / p.mu;
    match p.kind {
        DistributionKind::Boltzmann => Ok(boltzmann),
        DistributionKind::FermiDirac => {
            // f_FD < f_B, so the Boltzmann level is a lower bracket
            let lo0 = boltzmann;
            let mut span = 10.0 / p.mu;
            let mut hi = lo0 + span;
            loop {
                let modes = modes_up_to(bound_for_energy(hi + 40.0 / p.mu));
                if occupation_sum(p, &modes, hi) >= p.n0 {
                    break;
                }
                span *= 2.0;
                hi = lo0 + span;
                if span > 1e9 {
                    return Err(Error::InfeasibleOccupation {
                        achievable: occupation_sum(p, &modes, hi),
                        n0: p.n0,
                    });
                }
            }
            let mut bound = bound_for_energy(hi + 40.0 / p.mu);
            loop {
                let modes = modes_up_to(bound);
                let (mut lo, mut hi) = (lo0, hi);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if occupation_sum(p, &modes, mid) < p.n0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let y = 0.5 * (lo + hi);
                // f_FD(t) ≤ f0 e^{−μt}: bound the neglected modes by the Boltzmann tail
                let tail = p.f0 * (p.mu * y).exp() * boltzmann_tail(p.mu, bound);
                if tail > 1e-13 * p.n0 {
                    if bound > 1 << 20 {
                        return Err(Error::Precision(format!(
                            "series tail {tail:e} exceeds 1e-12 N0"
                        )));
                    }
                    bound += bound_for_energy(20.0 / p.mu);
                    continue;
                }
                let g = occupation_sum(p, &modes, y);
                if (g - p.n0).abs() > 1e-12 * p.n0 - tail {
                    return Err(Error::Precision(format!(
                        "continuous Fermi solve stalled at residual {:e}",
                        g - p.n0
                    )));
                }
                return Ok(y);
            }
        }
    }
}

fn bound_for_energy(e: f64) -> u32 {
    (e / (PI * PI)).ceil().max(3.0) as u32
}

/// The density series `n(x) = Σ_l f(λ_l − ε_F) φ_l(x)²`, truncated so that
/// the neglected part is below `rel_tol · ‖n‖_{L²}` everywhere.
#[derive(Clone, Debug)]
pub struct ExactDensity {
    fermi: f64,
    /// (i, j, k, f(λ − ε_F)) for retained modes
    terms: Vec<(usize, usize, usize, f64)>,
    max_index: usize,
    tail_bound: f64,
}

impl ExactDensity {
    pub fn new(p: &DistributionParams, rel_tol: f64) -> Result<Self> {
        if !(rel_tol > 0.0) {
            return Err(Error::InvalidArgument("rel_tol must be positive".into()));
        }
        let fermi = continuous_fermi(p)?;
        // ‖n‖_{L²} ≥ ∫n = N₀ on the unit cube; sup φ² = 8
        let target = rel_tol * p.n0;
        let prefactor = 8.0 * p.f0 * (p.mu * fermi).exp();
        let mut energy = fermi.max(3.0 * PI * PI) + 10.0 / p.mu;
        let (modes, tail) = loop {
            let bound = bound_for_energy(energy);
            let tail = prefactor * boltzmann_tail(p.mu, bound);
            if tail <= target {
                break (modes_up_to(bound), tail);
            }
            energy += 5.0 / p.mu;
        };
        let max_index = modes.iter().map(|m| m.i.max(m.j).max(m.k)).max().unwrap_or(1) as usize;
        let terms = modes
            .iter()
            .map(|m| {
                (
                    m.i as usize,
                    m.j as usize,
                    m.k as usize,
                    p.value(m.lambda() - fermi),
                )
            })
            .collect();
        Ok(Self {
            fermi,
            terms,
            max_index,
            tail_bound: tail,
        })
    }

    pub fn fermi_level(&self) -> f64 {
        self.fermi
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Pointwise bound on the neglected part of the series.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn eval(&self, x: &Point) -> f64 {
        let table = |t: f64| -> Vec<f64> {
            (0..=self.max_index)
                .map(|i| (i as f64 * PI * t).sin().powi(2))
                .collect()
        };
        let (sx, sy, sz) = (table(x[0]), table(x[1]), table(x[2]));
        8.0 * self
            .terms
            .iter()
            .map(|&(i, j, k, w)| w * sx[i] * sy[j] * sz[k])
            .sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Example {
    /// `V₀ = sin πx sin πy sin πz`
    Sine,
    /// `V₀ = Π_axis (e^{t(1−t)} − 1)`
    Exponential,
}

impl Example {
    pub fn from_id(id: u32) -> Result<Self> {
        match id {
            1 => Ok(Self::Sine),
            2 => Ok(Self::Exponential),
            _ => Err(Error::InvalidArgument(format!("unknown example {id}"))),
        }
    }

    pub fn id(&self) -> u32 {
        match self {
            Self::Sine => 1,
            Self::Exponential => 2,
        }
    }
}

fn bump(t: f64) -> (f64, f64, f64) {
    let e = (t * (1.0 - t)).exp();
    let d = 1.0 - 2.0 * t;
    (e - 1.0, d * e, e * (d * d - 2.0))
}

/// Applied potential `V₀` of an example.
pub fn applied_potential(example: Example, x: &Point) -> f64 {
    match example {
        Example::Sine => (PI * x[0]).sin() * (PI * x[1]).sin() * (PI * x[2]).sin(),
        Example::Exponential => bump(x[0]).0 * bump(x[1]).0 * bump(x[2]).0,
    }
}

pub fn applied_potential_gradient(example: Example, x: &Point) -> [f64; 3] {
    match example {
        Example::Sine => {
            let (sx, cx) = (PI * x[0]).sin_cos();
            let (sy, cy) = (PI * x[1]).sin_cos();
            let (sz, cz) = (PI * x[2]).sin_cos();
            [PI * cx * sy * sz, PI * sx * cy * sz, PI * sx * sy * cz]
        }
        Example::Exponential => {
            let (gx, dx, _) = bump(x[0]);
            let (gy, dy, _) = bump(x[1]);
            let (gz, dz, _) = bump(x[2]);
            [dx * gy * gz, gx * dy * gz, gx * gy * dz]
        }
    }
}

pub fn applied_potential_laplacian(example: Example, x: &Point) -> f64 {
    match example {
        Example::Sine => -3.0 * PI * PI * applied_potential(example, x),
        Example::Exponential => {
            let (gx, _, hx) = bump(x[0]);
            let (gy, _, hy) = bump(x[1]);
            let (gz, _, hz) = bump(x[2]);
            hx * gy * gz + gx * hy * gz + gx * gy * hz
        }
    }
}

/// A Schrödinger–Poisson problem with known solution: the doping is chosen
/// so that `V = −V₀` solves the system, which reduces the Hamiltonian to
/// `−Δ` with eigenpairs `(λ_l, φ_l)`.
#[derive(Clone)]
pub struct ManufacturedProblem {
    pub example: Example,
    pub params: DistributionParams,
    pub density: Arc<ExactDensity>,
}

impl ManufacturedProblem {
    pub fn new(example: Example, params: DistributionParams, rel_tol: f64) -> Result<Self> {
        Ok(Self {
            example,
            params,
            density: Arc::new(ExactDensity::new(&params, rel_tol)?),
        })
    }

    pub fn fermi_level(&self) -> f64 {
        self.density.fermi_level()
    }

    pub fn v0(&self) -> ScalarFn {
        let ex = self.example;
        scalar_fn(move |x| applied_potential(ex, x))
    }

    pub fn laplacian_v0(&self, x: &Point) -> f64 {
        applied_potential_laplacian(self.example, x)
    }

    pub fn v_exact(&self, x: &Point) -> f64 {
        -applied_potential(self.example, x)
    }

    pub fn grad_v_exact(&self, x: &Point) -> [f64; 3] {
        applied_potential_gradient(self.example, x).map(|g| -g)
    }

    pub fn n_exact(&self, x: &Point) -> f64 {
        self.density.eval(x)
    }

    /// `n_D = n − ΔV₀`
    pub fn doping(&self) -> ScalarFn {
        let density = Arc::clone(&self.density);
        let ex = self.example;
        scalar_fn(move |x| density.eval(x) - applied_potential_laplacian(ex, x))
    }

    /// Largest `|−ΔV − n + n_D| / (1 + |n|)` over `points`, with `ΔV` from
    /// central differences of the exact potential and `n` from an
    /// independently truncated series (`check_tol`).
    pub fn residual_check(&self, points: &[Point], check_tol: f64) -> Result<f64> {
        let reference = ExactDensity::new(&self.params, check_tol)?;
        let doping = self.doping();
        let step = 1e-3;
        let mut worst: f64 = 0.0;
        for x in points {
            let mut lap = 0.0;
            for d in 0..3 {
                let mut xp = *x;
                let mut xm = *x;
                xp[d] += step;
                xm[d] -= step;
                // fourth-order stencil
                let mut xpp = *x;
                let mut xmm = *x;
                xpp[d] += 2.0 * step;
                xmm[d] -= 2.0 * step;
                lap += (-self.v_exact(&xpp) + 16.0 * self.v_exact(&xp) - 30.0 * self.v_exact(x)
                    + 16.0 * self.v_exact(&xm)
                    - self.v_exact(&xmm))
                    / (12.0 * step * step);
            }
            let n = reference.eval(x);
            let r = (-lap - n + doping(x)).abs() / (1.0 + n.abs());
            worst = worst.max(r);
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1_params() -> DistributionParams {
        DistributionParams::boltzmann(1.0, 0.1, 100.0).unwrap()
    }

    #[test]
    fn eigensequence_head() {
        let modes = cube_eigensequence(10);
        assert_eq!(modes[0], CubeMode { i: 1, j: 1, k: 1 });
        assert!((modes[0].lambda() - 29.608_813_2).abs() < 1e-6);
        for m in &modes[1..4] {
            assert_eq!(m.index_sum(), 6);
        }
        let mut perms: Vec<_> = modes[1..4].iter().map(|m| (m.i, m.j, m.k)).collect();
        perms.sort_unstable();
        assert_eq!(perms, vec![(1, 1, 2), (1, 2, 1), (2, 1, 1)]);
        for m in &modes[4..7] {
            assert_eq!(m.index_sum(), 9);
        }
        // (3,1,1) and its permutations follow the (2,2,1) shell
        assert_eq!(modes[9].index_sum(), 11);
    }

    #[test]
    fn tail_matches_direct_subtraction() {
        for (mu, bound) in [(0.1, 6u32), (0.02, 30), (0.1, 1)] {
            let direct: f64 = partition_sum(mu)
                - modes_up_to(bound).iter().map(|m| (-mu * m.lambda()).exp()).sum::<f64>();
            let tail = boltzmann_tail(mu, bound);
            assert!((tail - direct).abs() <= 1e-12 * partition_sum(mu), "{mu} {bound}");
        }
    }

    #[test]
    fn eigensequence_matches_brute_force() {
        let b = 6u32;
        let mut brute: Vec<u32> = Vec::new();
        for i in 1..=b {
            for j in 1..=b {
                for k in 1..=b {
                    brute.push(i * i + j * j + k * k);
                }
            }
        }
        brute.sort_unstable();
        // complete below b² + 2 (smallest missing sum has an index > b)
        let complete: Vec<u32> = brute.into_iter().filter(|&s| s < b * b + 3).collect();
        let modes = cube_eigensequence(complete.len());
        let sums: Vec<u32> = modes.iter().map(|m| m.index_sum()).collect();
        assert_eq!(sums, complete);
    }

    #[test]
    fn continuous_fermi_boltzmann_value() {
        let p = example1_params();
        let ef = continuous_fermi(&p).unwrap();
        // direct partition sum as oracle
        let mut z = 0.0;
        for i in 1..40 {
            for j in 1..40 {
                for k in 1..40 {
                    z += (-0.1 * PI * PI * (i * i + j * j + k * k) as f64).exp();
                }
            }
        }
        let expected = (100.0 / z).ln() / 0.1;
        assert!((ef - expected).abs() < 1e-10);
        assert!((ef - 74.13).abs() < 0.01, "{ef}");
    }

    #[test]
    fn continuous_fermi_shift_identity() {
        let p = example1_params();
        let c = 3.5;
        let mut q = p;
        q.n0 = p.n0 * (p.mu * c).exp();
        let d = continuous_fermi(&q).unwrap() - continuous_fermi(&p).unwrap();
        assert!((d - c).abs() < 1e-10);
    }

    #[test]
    fn continuous_fermi_dirac_conserves() {
        let p = DistributionParams::new(DistributionKind::FermiDirac, 2.0, 0.1, 100.0).unwrap();
        let ef = continuous_fermi(&p).unwrap();
        let modes = modes_up_to(bound_for_energy(ef + 600.0));
        let g = occupation_sum(&p, &modes, ef);
        assert!((g - 100.0).abs() < 1e-10, "{g}");
    }

    #[test]
    fn exact_density_integrates_to_n0_and_vanishes_on_boundary() {
        let p = example1_params();
        let n = ExactDensity::new(&p, 1e-8).unwrap();
        let total: f64 = n.terms.iter().map(|t| t.3).sum();
        assert!((total - 100.0).abs() < 1e-8 * 100.0);
        assert_eq!(n.eval(&[0.0, 0.3, 0.7]), 0.0);
        assert!(n.eval(&[0.5, 1.0, 0.5]).abs() < 1e-20);
    }

    #[test]
    fn exact_density_center_value_is_stable() {
        let p = example1_params();
        let center = [0.5, 0.5, 0.5];
        let coarse = ExactDensity::new(&p, 1e-8).unwrap();
        let fine = ExactDensity::new(&p, 1e-10).unwrap();
        // direct summation over odd modes, which are the only ones nonzero at the center
        let ef = continuous_fermi(&p).unwrap();
        let mut direct = 0.0;
        for i in (1..30).step_by(2) {
            for j in (1..30).step_by(2) {
                for k in (1..30).step_by(2) {
                    let lam = PI * PI * (i * i + j * j + k * k) as f64;
                    direct += 8.0 * (-0.1 * (lam - ef)).exp();
                }
            }
        }
        let a = coarse.eval(&center);
        let b = fine.eval(&center);
        assert!((a - b).abs() <= 1e-8 * 100.0);
        assert!((b - direct).abs() <= 1e-10 * 100.0, "{b} vs {direct}");
    }

    #[test]
    fn laplacians_of_applied_potentials() {
        let c = [0.5, 0.5, 0.5];
        assert!((applied_potential_laplacian(Example::Sine, &c) + 3.0 * PI * PI).abs() < 1e-12);
        let (_, _, g2) = bump(0.5);
        assert!((g2 + 2.0 * 0.25f64.exp()).abs() < 1e-14);
        assert!((g2 + 2.568_050_833).abs() < 1e-8);
    }

    #[test]
    fn manufactured_residual_vanishes_and_wrong_sign_fails() {
        let p = example1_params();
        let pts: Vec<Point> = (0..20)
            .map(|i| {
                let t = (i as f64 + 0.5) / 20.0;
                [t, (0.3 + 0.7 * t) % 1.0, (0.9 * t + 0.05) % 1.0]
            })
            .collect();
        for ex in [Example::Sine, Example::Exponential] {
            let prob = ManufacturedProblem::new(ex, p, 1e-8).unwrap();
            let r = prob.residual_check(&pts, 1e-10).unwrap();
            assert!(r <= 1e-6, "{ex:?}: {r}");
        }
        // V = +V₀ does not satisfy the Poisson equation with this doping
        let prob = ManufacturedProblem::new(Example::Sine, p, 1e-8).unwrap();
        let x = [0.4, 0.5, 0.6];
        let lap_plus = prob.laplacian_v0(&x);
        let wrong = (-lap_plus - prob.n_exact(&x) + prob.doping()(&x)).abs();
        assert!(wrong > 1.0);
    }

    #[test]
    fn modes_are_normalized() {
        use crate::fem::{l2_norm, Analytic, QuadratureRule};
        use crate::mesh::Mesh;
        let mesh = Mesh::structured(8).unwrap();
        let quad = QuadratureRule::degree5();
        for mode in cube_eigensequence(4) {
            let f = Analytic(scalar_fn(move |x| mode.phi(x)));
            let norm = l2_norm(&mesh, &f, &quad);
            assert!((norm - 1.0).abs() < 5e-3, "{mode:?}: {norm}");
        }
    }
}
