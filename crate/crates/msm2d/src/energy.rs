//! Total quasistatic energy of the composite cell.
//!
//! Five contributions are tracked separately: elastic energy of the
//! polymer matrix (boundary-element solve), elastic energy of the twinned
//! particle (constant strain per variant against its transformation
//! strain), Zeeman energy in the applied field, stray-field energy of the
//! magnetization charges (free-space pair energy plus the periodic cell
//! correction, and an optional macroscopic workpiece term), and
//! magnetocrystalline anisotropy.
//!
//! All lengths are in units of the cell edge and all energies in units of
//! pressure times cell area, consistent with the material constants.
//!
//! The model is evaluated thousands of times inside finite-difference
//! gradients, so the expensive geometry-dependent operators are cached:
//! the matrix-elasticity factorization is built once per run, the
//! periodic cell solver once per macroscopic strain, and the stray-field
//! quadratic form once per kinematic configuration (magnetization angles
//! only change the densities, not the geometry).

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector, Matrix2, Point2, Rotation2, Vector2};

use crate::bem::elasticity::{ElasticityError, MatrixElasticSolver, ParticleData};
use crate::bem::laplace::{deform_cell, interaction_matrix, LaplaceError, PeriodicCellSolver};
use crate::config::{ReferencePhase, SimulationConfig, Workpiece};
use crate::geometry::{
    discretize_cell, twin_partition, CellMesh, DofLayout, GeometryError, Segment, Side, State,
    TwinPartition,
};

/// Demagnetizing factor of the macroscopic circular workpiece.
const WORKPIECE_DEMAG_FACTOR: f64 = 0.5;

/// Errors from building or evaluating the energy model.
#[derive(Debug, thiserror::Error)]
pub enum EnergyError {
    #[error("configuration: {0}")]
    Config(#[from] crate::config::ConfigError),
    #[error("cell geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("matrix elasticity: {0}")]
    Elasticity(#[from] ElasticityError),
    #[error("stray-field solver: {0}")]
    Laplace(#[from] LaplaceError),
}

/// Energy of one state, split into its physical contributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    /// Elastic energy stored in the polymer matrix.
    pub matrix: f64,
    /// Elastic energy of the particle variants.
    pub particle: f64,
    /// Zeeman energy in the applied field.
    pub zeeman: f64,
    /// Stray-field energy (cell charges plus workpiece term).
    pub demag: f64,
    /// Magnetocrystalline anisotropy energy.
    pub anisotropy: f64,
    /// Sum of all contributions.
    pub total: f64,
}

/// Bit pattern of the dofs that determine the deformed geometry; the
/// magnetization angles are deliberately excluded.
type KinKey = [u64; 11];

struct DemagCache {
    key: KinKey,
    /// Density weights: `lambda_k = w_minus[k] . m_minus + w_plus[k] . m_plus`.
    w_minus: Vec<Vector2<f64>>,
    w_plus: Vec<Vector2<f64>>,
    /// Cell stray-field energy `(1/2) lambda^T quad lambda`.
    quad: DMatrix<f64>,
}

struct CellSolverCache {
    key: [u64; 3],
    solver: PeriodicCellSolver,
}

#[derive(Default)]
struct Caches {
    cell_solver: Option<CellSolverCache>,
    demag: Option<DemagCache>,
    matrix_energy: Option<(KinKey, f64)>,
}

pub struct EnergyModel {
    pub config: SimulationConfig,
    pub mesh: CellMesh,
    elastic: MatrixElasticSolver,
    /// Interface smoothing width of the elastic Dirichlet data.
    delta: f64,
    caches: RefCell<Caches>,
}

impl EnergyModel {
    pub fn new(mut config: SimulationConfig) -> Result<Self, EnergyError> {
        config.material.derive_lame();
        config.validate()?;
        let mesh = discretize_cell(
            config.solver.n_boundary_segments,
            config.geometry.particle_radius,
        )?;
        let elastic =
            MatrixElasticSolver::new(&mesh, config.material.mu_poly, config.material.nu_poly)?;
        let delta = config.solver.delta_over_h * mesh.h;
        Ok(EnergyModel { config, mesh, elastic, delta, caches: RefCell::new(Caches::default()) })
    }

    fn kin_key(&self, s: &State) -> KinKey {
        // The uniform shift `c` is excluded: both boundary-value problems are
        // evaluated in the translation-normalized gauge, so states differing
        // only by `c` share every cached quantity.
        [
            s.offset.to_bits(),
            s.w.to_bits(),
            s.beta.to_bits(),
            s.s_plus.to_bits(),
            s.s_minus.to_bits(),
            s.nu_plus.to_bits(),
            s.nu_minus.to_bits(),
            s.angle.to_bits(),
            s.macro_strain[(0, 0)].to_bits(),
            s.macro_strain[(1, 1)].to_bits(),
            s.macro_strain[(0, 1)].to_bits(),
        ]
    }

    /// Reference and deformed areas of the two variants.
    fn side_measures(&self, state: &State, partition: &TwinPartition) -> ([f64; 2], [f64; 2]) {
        let mut ref_area = [0.0; 2];
        let mut def_area = [0.0; 2];
        for (k, side) in [Side::Minus, Side::Plus].into_iter().enumerate() {
            ref_area[k] = partition.area(side);
            let f = Matrix2::identity() + state.twin_gradient(side);
            def_area[k] = ref_area[k] * f.determinant();
        }
        (ref_area, def_area)
    }

    /// Elastic energy density of one variant at in-plane strain `e`
    /// (lattice frame), from the cubic constants.
    fn variant_energy_density(&self, e: &Matrix2<f64>) -> f64 {
        let m = &self.config.material;
        let tr = e.trace();
        0.5 * m.c11 * tr * tr + (m.c12 - m.c11) * e[(0, 0)] * e[(1, 1)]
            + 2.0 * m.c44 * e[(0, 1)] * e[(0, 1)]
    }

    /// Transformation strain of a variant in the lattice frame, measured
    /// from the configured stress-free reference phase.
    fn eigenstrain(&self, side: Side) -> Matrix2<f64> {
        let e0 = self.config.material.eps0;
        let base = match side {
            Side::Minus => Matrix2::new(-e0, 0.0, 0.0, e0),
            Side::Plus => Matrix2::new(e0, 0.0, 0.0, -e0),
        };
        match self.config.geometry.reference_phase {
            ReferencePhase::Austenite => base,
            // Displacements are measured from the plus variant, so its own
            // transformation strain is subtracted from both.
            ReferencePhase::Martensite => base - Matrix2::new(e0, 0.0, 0.0, -e0),
        }
    }

    fn particle_energy(&self, state: &State, ref_area: &[f64; 2]) -> f64 {
        let q = Rotation2::new(self.config.geometry.lattice_angle);
        let qm = q.matrix();
        let mut acc = 0.0;
        for (k, side) in [Side::Minus, Side::Plus].into_iter().enumerate() {
            if ref_area[k] == 0.0 {
                continue;
            }
            let e_lat = qm.transpose() * state.twin_strain(side) * qm - self.eigenstrain(side);
            acc += ref_area[k] * self.variant_energy_density(&e_lat);
        }
        acc
    }

    fn zeeman_energy(&self, state: &State, h: Vector2<f64>, def_area: &[f64; 2]) -> f64 {
        let ms = self.config.material.ms_over_mu0;
        let mut acc = 0.0;
        for (k, side) in [Side::Minus, Side::Plus].into_iter().enumerate() {
            acc -= ms * def_area[k] * h.dot(&state.magnetization(side));
        }
        acc
    }

    fn anisotropy_energy(&self, state: &State, def_area: &[f64; 2]) -> f64 {
        let ku = self.config.material.ku;
        let lat = self.config.geometry.lattice_angle;
        let mut acc = 0.0;
        for (k, side) in [Side::Minus, Side::Plus].into_iter().enumerate() {
            // Transform the magnetization into the (rotated) crystal frame
            // of this variant; the easy axis of the minus variant is the
            // crystal x-axis, of the plus variant the crystal y-axis.
            let back = Rotation2::new(-(lat + state.variant_rotation_angle(side)));
            let m = back * state.magnetization(side);
            let hard = match side {
                Side::Minus => m.y,
                Side::Plus => m.x,
            };
            acc += ku * def_area[k] * hard * hard;
        }
        acc
    }

    fn matrix_energy(&self, state: &State) -> f64 {
        let key = self.kin_key(state);
        if let Some((k, e)) = self.caches.borrow().matrix_energy {
            if k == key {
                return e;
            }
        }
        let c = self.mesh.center;
        let delta = self.delta;
        // A uniform translation of the composite is a gauge freedom of the
        // periodic cell (the matrix follows the particle rigidly at zero
        // stress), so the Dirichlet data is normalized to zero mean over the
        // interface vertices; this keeps the energy exactly independent of
        // the shift dof and of the translation a large interface offset
        // folds into the twin displacement field.
        let verts = &self.mesh.particle_polygon.vertices;
        let mut mean = Vector2::zeros();
        for &v in verts {
            mean += state.displacement_centered(c, delta, v);
        }
        mean /= verts.len() as f64;
        let data = ParticleData::sample(&self.mesh, &|x| {
            state.displacement_centered(c, delta, x) - mean
        });
        let sol = self.elastic.solve(&data, &state.macro_strain);
        self.caches.borrow_mut().matrix_energy = Some((key, sol.energy));
        sol.energy
    }

    /// Charge curve of the deformed variant partition: the outer variant
    /// boundaries carry `m . nu`, the interface carries the jump
    /// `(m_minus - m_plus) . nu`; densities stay symbolic as weights so
    /// the geometry can be cached across magnetization changes.
    fn charge_geometry(
        &self,
        state: &State,
        partition: &TwinPartition,
    ) -> (Vec<Segment>, Vec<Vector2<f64>>, Vec<Vector2<f64>>) {
        let center = self.mesh.center;
        let line = state.line();
        // Same translation-normalized gauge as the elastic data: the stray
        // field on the periodic cell is invariant under a uniform shift of
        // the charges, and evaluating at the centered position keeps the
        // deformed curve away from the cell boundary.
        let map = |p: Point2<f64>| p + state.displacement_centered(center, 0.0, p);
        let on_line = |p: &Point2<f64>| line.dist(center, *p).abs() <= 1e-12;
        let mut segments = Vec::new();
        let mut w_minus = Vec::new();
        let mut w_plus = Vec::new();
        for (side, poly) in [(Side::Minus, &partition.minus), (Side::Plus, &partition.plus)] {
            if poly.is_empty() {
                continue;
            }
            let nv = poly.vertices.len();
            for i in 0..nv {
                let a = poly.vertices[i];
                let b = poly.vertices[(i + 1) % nv];
                let chord_edge = on_line(&a) && on_line(&b);
                if chord_edge && side == Side::Plus {
                    // Already carried, with the jump density, by the
                    // coincident edge of the minus polygon.
                    continue;
                }
                let seg = Segment::new(map(a), map(b));
                // Clipping the interface right next to a polygon vertex can
                // leave corner slivers; their charge carries O(len^2 log len)
                // energy, far below discretization error, while their
                // near-coincident endpoints destabilize the log kernels.
                if seg.len() <= 1e-9 {
                    continue;
                }
                let nu = seg.normal();
                match (side, chord_edge) {
                    (Side::Minus, false) => {
                        w_minus.push(nu);
                        w_plus.push(Vector2::zeros());
                    }
                    (Side::Minus, true) => {
                        w_minus.push(nu);
                        w_plus.push(-nu);
                    }
                    (Side::Plus, _) => {
                        w_minus.push(Vector2::zeros());
                        w_plus.push(nu);
                    }
                }
                segments.push(seg);
            }
        }
        (segments, w_minus, w_plus)
    }

    fn macro_key(&self, state: &State) -> [u64; 3] {
        [
            state.macro_strain[(0, 0)].to_bits(),
            state.macro_strain[(1, 1)].to_bits(),
            state.macro_strain[(0, 1)].to_bits(),
        ]
    }

    fn ensure_cell_solver(&self, state: &State) -> Result<(), EnergyError> {
        let key = self.macro_key(state);
        if let Some(c) = &self.caches.borrow().cell_solver {
            if c.key == key {
                return Ok(());
            }
        }
        let (segs, pairs) = deform_cell(
            &self.mesh.cell_segments,
            &self.mesh.segment_pairs,
            self.mesh.center,
            &state.macro_strain,
        );
        let solver = PeriodicCellSolver::new(segs, &pairs)?;
        self.caches.borrow_mut().cell_solver = Some(CellSolverCache { key, solver });
        Ok(())
    }

    fn ensure_demag_cache(
        &self,
        state: &State,
        partition: &TwinPartition,
    ) -> Result<(), EnergyError> {
        let key = self.kin_key(state);
        if let Some(d) = &self.caches.borrow().demag {
            if d.key == key {
                return Ok(());
            }
        }
        let (segments, w_minus, w_plus) = self.charge_geometry(state, partition);
        // The stray field on the periodic cell is exactly invariant under a
        // uniform translation of the charge curve, but the collocation
        // correction on the fixed deformed cell is not; placing the curve's
        // perimeter centroid at the cell center removes that spurious
        // sensitivity (twin displacements at large interface offsets act as
        // rigid translations) and keeps the curve inside the cell.
        let mut length = 0.0;
        let mut moment = Vector2::zeros();
        for s in &segments {
            let mid = 0.5 * (s.a.coords + s.b.coords);
            length += s.len();
            moment += s.len() * mid;
        }
        let shift = self.mesh.center.coords - moment / length;
        let segments: Vec<Segment> =
            segments.iter().map(|s| Segment::new(s.a + shift, s.b + shift)).collect();
        self.ensure_cell_solver(state)?;
        let caches = self.caches.borrow();
        let solver = &caches.cell_solver.as_ref().expect("cell solver just built").solver;
        let quad = interaction_matrix(&segments) + solver.correction_operator(&segments);
        drop(caches);
        self.caches.borrow_mut().demag = Some(DemagCache { key, w_minus, w_plus, quad });
        Ok(())
    }

    fn demag_energy(
        &self,
        state: &State,
        partition: &TwinPartition,
        def_area: &[f64; 2],
    ) -> Result<f64, EnergyError> {
        self.ensure_demag_cache(state, partition)?;
        let m = &self.config.material;
        let m_minus = state.magnetization(Side::Minus);
        let m_plus = state.magnetization(Side::Plus);
        let caches = self.caches.borrow();
        let cache = caches.demag.as_ref().expect("demag cache just built");
        let lam = DVector::from_iterator(
            cache.w_minus.len(),
            cache
                .w_minus
                .iter()
                .zip(&cache.w_plus)
                .map(|(wm, wp)| wm.dot(&m_minus) + wp.dot(&m_plus)),
        );
        let mut energy = m.ms2_over_mu0 * 0.5 * (&lam.transpose() * &cache.quad * &lam)[(0, 0)];
        if self.config.geometry.workpiece == Workpiece::Circular {
            // Macroscopic stray field of a uniformly magnetized circular
            // workpiece: (Ms^2/mu0) (N/2) |m_bar|^2 per deformed cell area.
            let moment = def_area[0] * m_minus + def_area[1] * m_plus;
            let v_cell = (Matrix2::identity() + state.macro_strain).determinant();
            energy += m.ms2_over_mu0 * 0.5 * WORKPIECE_DEMAG_FACTOR * moment.norm_squared()
                / v_cell;
        }
        Ok(energy)
    }

    /// Split the particle along the state's interface.
    pub fn partition(&self, state: &State) -> TwinPartition {
        twin_partition(&self.mesh.particle_polygon, self.mesh.center, &state.line())
    }

    /// Area fraction of the minus variant.
    pub fn volume_fraction(&self, state: &State) -> f64 {
        self.partition(state).area(Side::Minus) / self.mesh.particle_polygon.area()
    }

    /// Total magnetic moment `sum defarea m` of the particle (area units).
    pub fn magnetic_moment(&self, state: &State) -> Vector2<f64> {
        let partition = self.partition(state);
        let (_, def_area) = self.side_measures(state, &partition);
        def_area[0] * state.magnetization(Side::Minus)
            + def_area[1] * state.magnetization(Side::Plus)
    }

    /// Deformed-area-weighted average magnetization of the particle.
    pub fn average_magnetization(&self, state: &State) -> Vector2<f64> {
        let partition = self.partition(state);
        let (_, def_area) = self.side_measures(state, &partition);
        let total = def_area[0] + def_area[1];
        if total == 0.0 {
            Vector2::zeros()
        } else {
            self.magnetic_moment(state) / total
        }
    }

    /// Field actually seen by the cell: the applied field reduced by the
    /// workpiece's macroscopic demagnetizing field, when one is modeled.
    pub fn effective_field(&self, state: &State, h: Vector2<f64>) -> Vector2<f64> {
        match self.config.geometry.workpiece {
            Workpiece::None => h,
            Workpiece::Circular => {
                let v_cell = (Matrix2::identity() + state.macro_strain).determinant();
                let m_bar = self.magnetic_moment(state) / v_cell;
                h - WORKPIECE_DEMAG_FACTOR * self.config.material.ms_tesla() * m_bar
            }
        }
    }

    /// Full energy of `state` in applied field `h`.
    pub fn energy(&self, state: &State, h: Vector2<f64>) -> Result<EnergyBreakdown, EnergyError> {
        let partition = self.partition(state);
        let (ref_area, def_area) = self.side_measures(state, &partition);
        let matrix = self.matrix_energy(state);
        let particle = self.particle_energy(state, &ref_area);
        let zeeman = self.zeeman_energy(state, h, &def_area);
        let demag = self.demag_energy(state, &partition, &def_area)?;
        let anisotropy = self.anisotropy_energy(state, &def_area);
        let total = matrix + particle + zeeman + demag + anisotropy;
        Ok(EnergyBreakdown { matrix, particle, zeeman, demag, anisotropy, total })
    }

    /// Central finite-difference gradient of the total energy in the dof
    /// vector of `layout`.
    pub fn fd_gradient(
        &self,
        state: &State,
        h: Vector2<f64>,
        layout: &DofLayout,
    ) -> Result<DVector<f64>, EnergyError> {
        self.fd_gradient_step(state, h, layout, self.config.solver.fd_step)
    }

    /// Central finite-difference gradient with an explicit step.
    pub fn fd_gradient_step(
        &self,
        state: &State,
        h: Vector2<f64>,
        layout: &DofLayout,
        step: f64,
    ) -> Result<DVector<f64>, EnergyError> {
        let v0 = layout.pack(state);
        let mut g = DVector::zeros(layout.ndof());
        for i in 0..layout.ndof() {
            let mut vp = v0.clone();
            vp[i] += step;
            let mut vm = v0.clone();
            vm[i] -= step;
            let ep = self.energy(&layout.unpack(&vp, state), h)?.total;
            let em = self.energy(&layout.unpack(&vm, state), h)?.total;
            g[i] = (ep - em) / (2.0 * step);
        }
        Ok(g)
    }
}
