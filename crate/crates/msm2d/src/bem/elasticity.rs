//! Plane-strain elastic solver for the matrix domain between the periodic
//! cell boundary and the particle.
//!
//! The matrix occupies the unit cell minus the particle; its boundary
//! consists of the cell square (counterclockwise) and the particle curve
//! (clockwise), so all stored normals are matrix-outward.  Displacements
//! are piecewise linear in the cell vertices, tractions piecewise
//! constant per segment.  On the particle boundary the displacement is
//! prescribed (the twin field); on the cell boundary the periodic pairing
//! `u(x + e) = u(x) + F e`, `t(x + e) = -t(x)` closes the system.
//!
//! The system matrix depends only on the mesh and the elastic constants,
//! so it is factorized once (pseudo-inverse of the consistent,
//! redundantly-constrained system); every state evaluation only rebuilds
//! the right-hand side.

use nalgebra::{DMatrix, DVector, Matrix2, Point2, Vector2};

use crate::bem::seg::{kelvin_t_shape, kelvin_u_moments, LocalFrame};
use crate::geometry::{CellMesh, Segment};

/// Errors from the elastic boundary solver.
#[derive(Debug, thiserror::Error)]
pub enum ElasticityError {
    #[error("elastic boundary system has no pseudo-inverse")]
    SingularSystem,
}

/// Boundary solution of one matrix solve.
#[derive(Debug, Clone)]
pub struct ElasticSolution {
    /// Displacements at the cell vertices (x0, y0, x1, y1, ...).
    pub u_cell: DVector<f64>,
    /// Tractions on cell segments (matrix-outward normals).
    pub t_cell: DVector<f64>,
    /// Tractions on particle segments (matrix-outward normals).
    pub t_particle: DVector<f64>,
    /// Elastic energy of the matrix domain.
    pub energy: f64,
}

/// Prescribed particle-boundary displacement, sampled where the solver
/// needs it.
pub struct ParticleData {
    /// At the clockwise particle segment start/end vertices.
    pub u_vertex: Vec<Vector2<f64>>,
    /// At the particle segment midpoints.
    pub u_mid: Vec<Vector2<f64>>,
}

impl ParticleData {
    /// Sample a displacement field on the particle segments of `mesh`.
    pub fn sample(mesh: &CellMesh, field: &dyn Fn(Point2<f64>) -> Vector2<f64>) -> Self {
        let u_vertex = mesh.particle_segments.iter().map(|s| field(s.a)).collect();
        let u_mid = mesh.particle_segments.iter().map(|s| field(s.midpoint())).collect();
        ParticleData { u_vertex, u_mid }
    }
}

pub struct MatrixElasticSolver {
    cell_segments: Vec<Segment>,
    particle_segments: Vec<Segment>,
    n: usize,
    /// Pseudo-inverse of the constraint system (unknowns x rows).
    pinv: DMatrix<f64>,
    /// Collocation right-hand side from particle vertex displacements.
    b_vertex: DMatrix<f64>,
    /// Ratio of extreme singular values (diagnostic).
    pub condition: f64,
    vertex_pairs: Vec<(usize, usize, Vector2<f64>)>,
}

impl MatrixElasticSolver {
    /// Assemble and factorize the boundary system for `mesh` with matrix
    /// shear modulus `mu` and Poisson ratio `nu`.
    pub fn new(mesh: &CellMesh, mu: f64, nu: f64) -> Result<Self, ElasticityError> {
        let n = mesh.n_per_curve;
        let ncols = 6 * n; // [u_cell (2n) | t_cell (2n) | t_particle (2n)]
        let nvp = mesh.vertex_pairs.len();
        let nsp = mesh.segment_pairs.len();
        // Collocation + periodic pairing rows, plus two global equilibrium
        // rows: without a body force the boundary tractions balance, and
        // this side condition removes the non-physical null space of the
        // single-layer representation (a constant displacement shift
        // carried by capacitor-like traction densities).
        let nrows = 4 * n + 2 * nvp + 2 * nsp + 2;
        let mut sys = DMatrix::zeros(nrows, ncols);
        let mut b_vertex = DMatrix::zeros(4 * n, 2 * n);

        let colloc: Vec<Point2<f64>> = mesh
            .cell_segments
            .iter()
            .chain(&mesh.particle_segments)
            .map(Segment::midpoint)
            .collect();

        let add2 = |m: &mut DMatrix<f64>, r: usize, c: usize, blk: &Matrix2<f64>| {
            for i in 0..2 {
                for j in 0..2 {
                    m[(r + i, c + j)] += blk[(i, j)];
                }
            }
        };

        for (i, &x) in colloc.iter().enumerate() {
            let row = 2 * i;
            // Free term 1/2 u(x): linear in the cell vertices; on the
            // particle it is known data and enters the right-hand side
            // in `solve`.
            if i < n {
                let half = Matrix2::identity() * 0.25;
                add2(&mut sys, row, 2 * i, &half);
                add2(&mut sys, row, 2 * ((i + 1) % n), &half);
            }
            // Cell boundary: T on linear u (unknown vertices), U on t.
            for (j, seg) in mesh.cell_segments.iter().enumerate() {
                let f = LocalFrame::new(seg, x);
                let (ta, tb) = kelvin_t_shape(&f, nu);
                add2(&mut sys, row, 2 * j, &ta);
                add2(&mut sys, row, 2 * ((j + 1) % n), &tb);
                let (u0, _) = kelvin_u_moments(&f, mu, nu);
                add2(&mut sys, row, 2 * n + 2 * j, &(-u0));
            }
            // Particle boundary: T on known linear data (to RHS map),
            // U on unknown tractions.
            for (j, seg) in mesh.particle_segments.iter().enumerate() {
                let f = LocalFrame::new(seg, x);
                let (ta, tb) = kelvin_t_shape(&f, nu);
                // Clockwise traversal: segment j runs from vertex j to j+1
                // in its own ordering (set up in `sample`).
                add2(&mut b_vertex, row, 2 * j, &(-ta));
                add2(&mut b_vertex, row, 2 * ((j + 1) % n), &(-tb));
                let (u0, _) = kelvin_u_moments(&f, mu, nu);
                add2(&mut sys, row, 4 * n + 2 * j, &(-u0));
            }
        }
        // Periodic vertex pairing u_j - u_i = F shift.
        for (k, &(i, j, _)) in mesh.vertex_pairs.iter().enumerate() {
            for c in 0..2 {
                let r = 4 * n + 2 * k + c;
                sys[(r, 2 * j + c)] = 1.0;
                sys[(r, 2 * i + c)] = -1.0;
            }
        }
        // Traction anti-pairing t_j + t_i = 0 on cell segments.
        for (k, &(i, j, _)) in mesh.segment_pairs.iter().enumerate() {
            for c in 0..2 {
                let r = 4 * n + 2 * nvp + 2 * k + c;
                sys[(r, 2 * n + 2 * j + c)] = 1.0;
                sys[(r, 2 * n + 2 * i + c)] = 1.0;
            }
        }
        // Global equilibrium: sum of tractions over the whole boundary.
        for c in 0..2 {
            let r = 4 * n + 2 * nvp + 2 * nsp + c;
            for (j, seg) in mesh.cell_segments.iter().enumerate() {
                sys[(r, 2 * n + 2 * j + c)] = seg.len();
            }
            for (j, seg) in mesh.particle_segments.iter().enumerate() {
                sys[(r, 4 * n + 2 * j + c)] = seg.len();
            }
        }

        let svd = sys.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let pinv = svd
            .pseudo_inverse(1e-12 * smax)
            .map_err(|_| ElasticityError::SingularSystem)?;
        Ok(MatrixElasticSolver {
            cell_segments: mesh.cell_segments.clone(),
            particle_segments: mesh.particle_segments.clone(),
            n,
            pinv,
            b_vertex,
            condition: smax / smin,
            vertex_pairs: mesh.vertex_pairs.clone(),
        })
    }

    /// Solve for the boundary fields given the particle displacement data
    /// and the affine pairing map `F` (cell-average displacement gradient).
    pub fn solve(&self, data: &ParticleData, pairing: &Matrix2<f64>) -> ElasticSolution {
        let n = self.n;
        let nrows = self.pinv.ncols();
        let mut rhs = DVector::zeros(nrows);

        // Collocation rows: mapped particle vertex data ...
        let mut uv = DVector::zeros(2 * n);
        for (j, u) in data.u_vertex.iter().enumerate() {
            uv[2 * j] = u.x;
            uv[2 * j + 1] = u.y;
        }
        rhs.rows_mut(0, 4 * n).copy_from(&(&self.b_vertex * uv));
        // ... plus the free term -1/2 u_D at particle collocation points.
        for j in 0..n {
            let r = 2 * (n + j);
            rhs[r] -= 0.5 * data.u_mid[j].x;
            rhs[r + 1] -= 0.5 * data.u_mid[j].y;
        }
        // Vertex pairing: u_j - u_i = F shift.
        for (k, &(_, _, shift)) in self.vertex_pairs.iter().enumerate() {
            let v = pairing * shift;
            rhs[4 * n + 2 * k] = v.x;
            rhs[4 * n + 2 * k + 1] = v.y;
        }

        let sol = &self.pinv * rhs;
        let u_cell = sol.rows(0, 2 * n).into_owned();
        let t_cell = sol.rows(2 * n, 2 * n).into_owned();
        let t_particle = sol.rows(4 * n, 2 * n).into_owned();

        // Matrix energy (1/2) oint u . t ds, trapezoid on the cell
        // (linear u), Simpson on the particle (sampled data).
        let mut energy = 0.0;
        for (j, seg) in self.cell_segments.iter().enumerate() {
            let t = Vector2::new(t_cell[2 * j], t_cell[2 * j + 1]);
            let ua = Vector2::new(u_cell[2 * j], u_cell[2 * j + 1]);
            let jb = (j + 1) % n;
            let ub = Vector2::new(u_cell[2 * jb], u_cell[2 * jb + 1]);
            energy += 0.5 * t.dot(&(0.5 * (ua + ub))) * seg.len();
        }
        for (j, seg) in self.particle_segments.iter().enumerate() {
            let t = Vector2::new(t_particle[2 * j], t_particle[2 * j + 1]);
            let ua = data.u_vertex[j];
            let ub = data.u_vertex[(j + 1) % n];
            let um = data.u_mid[j];
            let avg = (ua + 4.0 * um + ub) / 6.0;
            energy += 0.5 * t.dot(&avg) * seg.len();
        }
        ElasticSolution { u_cell, t_cell, t_particle, energy }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bem::seg::stress_of_gradient;
    use crate::geometry::discretize_cell;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const MU: f64 = 1.0 / 2.9; // E = 1, nu = 0.45, plane strain
    const NU: f64 = 0.45;
    const LAMBDA: f64 = 0.45 / (1.45 * 0.10);

    #[test]
    fn rigid_translation_is_stress_free() {
        let mesh = discretize_cell(32, 0.3).unwrap();
        let solver = MatrixElasticSolver::new(&mesh, MU, NU).unwrap();
        let c0 = Vector2::new(1e-3, -2e-3);
        let data = ParticleData::sample(&mesh, &|_| c0);
        let sol = solver.solve(&data, &Matrix2::zeros());
        assert!(sol.t_cell.amax() < 1e-9, "cell traction {}", sol.t_cell.amax());
        assert!(sol.t_particle.amax() < 1e-9);
        assert_abs_diff_eq!(sol.energy, 0.0, epsilon = 1e-12);
        // The matrix translates rigidly with the particle.
        for j in 0..32 {
            assert_abs_diff_eq!(sol.u_cell[2 * j], c0.x, epsilon = 1e-9);
            assert_abs_diff_eq!(sol.u_cell[2 * j + 1], c0.y, epsilon = 1e-9);
        }
    }

    #[test]
    fn affine_field_is_reproduced_exactly() {
        // Dirichlet data B (x - c) with pairing F = B admits the global
        // affine solution; the closed-form system is exactly consistent.
        let mesh = discretize_cell(32, 0.3).unwrap();
        let solver = MatrixElasticSolver::new(&mesh, MU, NU).unwrap();
        let b = Matrix2::new(0.02, -0.007, 0.013, -0.01);
        let c = mesh.center;
        let data = ParticleData::sample(&mesh, &|x| b * (x - c));
        let sol = solver.solve(&data, &b);
        // Tractions are sigma(B) n on every segment.
        let sigma = stress_of_gradient(&b, LAMBDA, MU);
        for (j, seg) in mesh.cell_segments.iter().enumerate() {
            let want = sigma * seg.normal();
            assert_abs_diff_eq!(sol.t_cell[2 * j], want.x, epsilon = 1e-8);
            assert_abs_diff_eq!(sol.t_cell[2 * j + 1], want.y, epsilon = 1e-8);
        }
        for (j, seg) in mesh.particle_segments.iter().enumerate() {
            let want = sigma * seg.normal();
            assert_abs_diff_eq!(sol.t_particle[2 * j], want.x, epsilon = 1e-8);
            assert_abs_diff_eq!(sol.t_particle[2 * j + 1], want.y, epsilon = 1e-8);
        }
        // Vertex displacements match the affine field.
        for (j, v) in mesh.cell_vertices.iter().enumerate() {
            let want = b * (v - c);
            assert_abs_diff_eq!(sol.u_cell[2 * j], want.x, epsilon = 1e-9);
            assert_abs_diff_eq!(sol.u_cell[2 * j + 1], want.y, epsilon = 1e-9);
        }
    }

    #[test]
    fn affine_energy_matches_strain_energy_density() {
        // For the exact affine state the boundary energy equals
        // W(sym B) * area(matrix), with the discretized particle area.
        let mesh = discretize_cell(64, 0.3).unwrap();
        let solver = MatrixElasticSolver::new(&mesh, MU, NU).unwrap();
        let bmag = 0.05;
        let b = Matrix2::new(bmag, 0.0, 0.0, -bmag);
        let c = mesh.center;
        let data = ParticleData::sample(&mesh, &|x| b * (x - c));
        let sol = solver.solve(&data, &b);
        let area = 1.0 - mesh.particle_polygon.area();
        let w = 2.0 * MU * bmag * bmag; // trace-free: (lambda/2) tr^2 = 0
        assert_relative_eq!(sol.energy, w * area, max_relative = 1e-6);
        // A pure rotation adds no energy.
        let rot = Matrix2::new(0.0, -0.01, 0.01, 0.0);
        let data = ParticleData::sample(&mesh, &|x| (b + rot) * (x - c));
        let sol_rot = solver.solve(&data, &(b + rot));
        assert_relative_eq!(sol_rot.energy, w * area, max_relative = 1e-5);
    }

    #[test]
    fn mismatched_inclusion_stores_positive_energy() {
        // A dilating particle in a fixed periodic frame must store elastic
        // energy in the matrix, and the solve must be well conditioned.
        let mesh = discretize_cell(32, 0.3).unwrap();
        let solver = MatrixElasticSolver::new(&mesh, MU, NU).unwrap();
        assert!(solver.condition < 1e8, "condition {}", solver.condition);
        let c = mesh.center;
        let data = ParticleData::sample(&mesh, &|x| 0.01 * (x - c));
        let sol = solver.solve(&data, &Matrix2::zeros());
        assert!(sol.energy > 1e-6, "energy {}", sol.energy);
        // Doubling the data quadruples the quadratic energy.
        let data2 = ParticleData::sample(&mesh, &|x| 0.02 * (x - c));
        let sol2 = solver.solve(&data2, &Matrix2::zeros());
        assert_relative_eq!(sol2.energy, 4.0 * sol.energy, max_relative = 1e-9);
    }
}
