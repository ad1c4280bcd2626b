//! Symmetric quadrature rules on the tetrahedron in barycentric form.

use crate::error::{Error, Result};

/// Barycentric points with weights normalized to the element volume, so
/// `∫_K g ≈ |K| Σ w_q g(x_q)`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    degree: usize,
    points: Vec<[f64; 4]>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// One-point centroid rule, exact for linears.
    pub fn centroid() -> Self {
        Self {
            degree: 1,
            points: vec![[0.25; 4]],
            weights: vec![1.0],
        }
    }

    /// Four-point rule exact for quadratics.
    pub fn degree2() -> Self {
        let a = (5.0 - 5f64.sqrt()) / 20.0;
        let b = 1.0 - 3.0 * a;
        Self {
            degree: 2,
            points: orbit_31(a, b),
            weights: vec![0.25; 4],
        }
    }

    /// Fifteen-point rule exact for quintics, all weights positive.
    pub fn degree5() -> Self {
        let s15 = 15f64.sqrt();
        let mut points = vec![[0.25; 4]];
        let mut weights = vec![16.0 / 135.0];

        let a1 = (7.0 - s15) / 34.0;
        points.extend(orbit_31(a1, 1.0 - 3.0 * a1));
        weights.extend([(2665.0 + 14.0 * s15) / 37800.0; 4]);

        let a2 = (7.0 + s15) / 34.0;
        points.extend(orbit_31(a2, 1.0 - 3.0 * a2));
        weights.extend([(2665.0 - 14.0 * s15) / 37800.0; 4]);

        let c = (10.0 - 2.0 * s15) / 40.0;
        points.extend(orbit_22(c, 0.5 - c));
        weights.extend([10.0 / 189.0; 6]);

        Self {
            degree: 5,
            points,
            weights,
        }
    }

    /// Cheapest available rule with at least the requested exactness.
    pub fn with_degree(degree: usize) -> Result<Self> {
        match degree {
            0 | 1 => Ok(Self::centroid()),
            2 => Ok(Self::degree2()),
            3..=5 => Ok(Self::degree5()),
            _ => Err(Error::InvalidArgument(format!(
                "no tetrahedral rule of degree {degree}"
            ))),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn points(&self) -> &[[f64; 4]] {
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

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 4], f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

fn orbit_31(a: f64, b: f64) -> Vec<[f64; 4]> {
    (0..4)
        .map(|q| {
            let mut p = [a; 4];
            p[q] = b;
            p
        })
        .collect()
}

fn orbit_22(a: f64, b: f64) -> Vec<[f64; 4]> {
    let mut out = Vec::with_capacity(6);
    for i in 0..4 {
        for j in i + 1..4 {
            let mut p = [a; 4];
            p[i] = b;
            p[j] = b;
            out.push(p);
        }
    }
    out
}
