//! Structured tetrahedral meshes of the unit cube.
//!
//! Every grid cell is split into the six Kuhn (Freudenthal) tetrahedra that
//! share the cell's main diagonal. Vertices are numbered lexicographically
//! with `z` running fastest, so vertex `(i, j, k)` has id `(i (m+1) + j)(m+1) + k`
//! and coordinates `(i, j, k) / m`.

use std::io::Write;

use crate::error::{Error, Result};

pub type Point = [f64; 3];

#[derive(Clone, Debug)]
pub struct Mesh {
    m: usize,
    vertices: Vec<Point>,
    tets: Vec<[usize; 4]>,
    boundary: Vec<bool>,
    interior_index: Vec<Option<usize>>,
    interior_vertices: Vec<usize>,
}

const AXIS_ORDERS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

impl Mesh {
    /// Builds the Freudenthal mesh with `m` cells per axis.
    pub fn structured(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("cells per axis must be >= 1".into()));
        }
        let n1 = m + 1;
        let id = |i: usize, j: usize, k: usize| (i * n1 + j) * n1 + k;
        let scale = 1.0 / m as f64;

        let mut vertices = Vec::with_capacity(n1 * n1 * n1);
        let mut boundary = Vec::with_capacity(n1 * n1 * n1);
        for i in 0..n1 {
            for j in 0..n1 {
                for k in 0..n1 {
                    vertices.push([i as f64 * scale, j as f64 * scale, k as f64 * scale]);
                    let on_face = |t: usize| t == 0 || t == m;
                    boundary.push(on_face(i) || on_face(j) || on_face(k));
                }
            }
        }

        let mut tets = Vec::with_capacity(6 * m * m * m);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for order in AXIS_ORDERS {
                        let mut idx = [i, j, k];
                        let mut tet = [id(i, j, k); 4];
                        for (step, &axis) in order.iter().enumerate() {
                            idx[axis] += 1;
                            tet[step + 1] = id(idx[0], idx[1], idx[2]);
                        }
                        if lattice_det(n1, &tet) < 0 {
                            tet.swap(2, 3);
                        }
                        tets.push(tet);
                    }
                }
            }
        }

        let mut interior_index = vec![None; vertices.len()];
        let mut interior_vertices = Vec::new();
        for (v, &b) in boundary.iter().enumerate() {
            if !b {
                interior_index[v] = Some(interior_vertices.len());
                interior_vertices.push(v);
            }
        }

        Ok(Self {
            m,
            vertices,
            tets,
            boundary,
            interior_index,
            interior_vertices,
        })
    }

    pub fn cells_per_axis(&self) -> usize {
        self.m
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, vertex: usize) -> bool {
        self.boundary[vertex]
    }

    /// Interior degree-of-freedom id of a vertex, `None` on the boundary.
    pub fn interior_index(&self, vertex: usize) -> Option<usize> {
        self.interior_index[vertex]
    }

    /// Vertex ids of the interior dofs, in dof order.
    pub fn interior_vertices(&self) -> &[usize] {
        &self.interior_vertices
    }

    pub fn num_interior(&self) -> usize {
        self.interior_vertices.len()
    }

    pub fn tet_points(&self, t: usize) -> [Point; 4] {
        self.tets[t].map(|v| self.vertices[v])
    }

    /// Signed volume, computed from the integer lattice so that the
    /// element volumes sum to one to rounding of a single division each.
    pub fn tet_volume(&self, t: usize) -> f64 {
        let m = self.m as f64;
        lattice_det(self.m + 1, &self.tets[t]) as f64 / (6.0 * m * m * m)
    }

    /// Largest element diameter.
    pub fn mesh_size(&self) -> f64 {
        (0..self.num_tets())
            .map(|t| diameter(&self.tet_points(t)))
            .fold(0.0, f64::max)
    }

    /// Writes the plain-text dump: a header line, `v x y z` lines, then
    /// `t i0 i1 i2 i3` lines with 0-based vertex ids.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "m {} nv {} nt {}",
            self.m,
            self.num_vertices(),
            self.num_tets()
        )?;
        for p in &self.vertices {
            writeln!(out, "v {} {} {}", p[0], p[1], p[2])?;
        }
        for t in &self.tets {
            writeln!(out, "t {} {} {} {}", t[0], t[1], t[2], t[3])?;
        }
        Ok(())
    }
}

fn lattice_det(n1: usize, tet: &[usize; 4]) -> i64 {
    let ijk = |v: usize| {
        let n1 = n1 as i64;
        let v = v as i64;
        [v / (n1 * n1), (v / n1) % n1, v % n1]
    };
    let p0 = ijk(tet[0]);
    let d = |q: usize| {
        let p = ijk(tet[q]);
        [p[0] - p0[0], p[1] - p0[1], p[2] - p0[2]]
    };
    let (a, b, c) = (d(1), d(2), d(3));
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0])
}

pub(crate) fn diameter(points: &[Point; 4]) -> f64 {
    let mut h: f64 = 0.0;
    for a in 0..4 {
        for b in a + 1..4 {
            h = h.max(distance(&points[a], &points[b]));
        }
    }
    h
}

fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}
