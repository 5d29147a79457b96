//! Geometry of the periodic unit cell: boundary meshes, convex polygon
//! clipping, and the kinematics of the twinned particle.
//!
//! The cell is the unit square with a single circular particle at its
//! center.  The particle is split into two twin variants by a straight
//! interface with unit normal `n = (cos a, sin a)` at signed offset `d`
//! from the center; the variant on the side `dist < 0` is called *minus*
//! (variant 1), the other *plus* (variant 2).

use nalgebra::{DVector, Matrix2, Point2, Vector2};

use crate::config::{GeometryParams, ReferencePhase, SimulationConfig};

/// Errors from mesh construction.
#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("n_boundary_segments = {0} must be a multiple of 4 and at least 16")]
    InvalidSegmentCount(usize),
}

/// Rotation matrix by angle `a`.
pub fn rot2(a: f64) -> Matrix2<f64> {
    let (s, c) = a.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Unit normal of the twin interface for normal angle `a`.
pub fn normal_of(a: f64) -> Vector2<f64> {
    Vector2::new(a.cos(), a.sin())
}

/// Unit tangent of the twin interface (90 degrees ahead of the normal).
pub fn tangent_of(a: f64) -> Vector2<f64> {
    Vector2::new(-a.sin(), a.cos())
}

// --- segments ----------------------------------------------------------

/// Straight boundary element from `a` to `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point2<f64>,
    pub b: Point2<f64>,
}

impl Segment {
    pub fn new(a: Point2<f64>, b: Point2<f64>) -> Self {
        Segment { a, b }
    }

    pub fn len(&self) -> f64 {
        (self.b - self.a).norm()
    }

    pub fn midpoint(&self) -> Point2<f64> {
        nalgebra::center(&self.a, &self.b)
    }

    pub fn tangent(&self) -> Vector2<f64> {
        (self.b - self.a).normalize()
    }

    /// Right-hand normal `(t_y, -t_x)`; outward for counterclockwise loops.
    pub fn normal(&self) -> Vector2<f64> {
        let t = self.tangent();
        Vector2::new(t.y, -t.x)
    }

    /// Reverse orientation (flips the normal).
    pub fn reversed(&self) -> Segment {
        Segment { a: self.b, b: self.a }
    }

    /// Split into `k` equal subsegments.
    pub fn subdivide(&self, k: usize) -> Vec<Segment> {
        let d = (self.b - self.a) / k as f64;
        (0..k)
            .map(|i| Segment::new(self.a + d * i as f64, self.a + d * (i + 1) as f64))
            .collect()
    }
}

// --- polygons ----------------------------------------------------------

/// Simple polygon, vertices in counterclockwise order.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<Point2<f64>>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point2<f64>>) -> Self {
        Polygon { vertices }
    }

    /// Regular n-gon inscribed in the circle of radius `r` about `c`,
    /// first vertex on the positive x-axis.
    pub fn regular(c: Point2<f64>, r: f64, n: usize) -> Self {
        let vertices = (0..n)
            .map(|k| {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                c + r * Vector2::new(phi.cos(), phi.sin())
            })
            .collect();
        Polygon { vertices }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    /// Signed area (positive for counterclockwise orientation).
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            acc += p.x * q.y - q.x * p.y;
        }
        0.5 * acc
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| (self.vertices[(i + 1) % n] - self.vertices[i]).norm())
            .sum()
    }

    /// Area centroid.
    pub fn centroid(&self) -> Point2<f64> {
        let n = self.vertices.len();
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut a = 0.0;
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let w = p.x * q.y - q.x * p.y;
            a += w;
            cx += (p.x + q.x) * w;
            cy += (p.y + q.y) * w;
        }
        Point2::new(cx / (3.0 * a), cy / (3.0 * a))
    }

    /// Boundary segments in traversal order.
    pub fn segments(&self) -> Vec<Segment> {
        let n = self.vertices.len();
        (0..n)
            .map(|i| Segment::new(self.vertices[i], self.vertices[(i + 1) % n]))
            .collect()
    }

    /// Clip against the half-plane `normal . x <= c` (Sutherland-Hodgman).
    /// Points exactly on the line are kept.
    pub fn clip_halfplane(&self, normal: Vector2<f64>, c: f64) -> Polygon {
        let n = self.vertices.len();
        let mut out = Vec::with_capacity(n + 2);
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let fp = normal.dot(&p.coords) - c;
            let fq = normal.dot(&q.coords) - c;
            if fp <= 0.0 {
                out.push(p);
            }
            if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
                let t = fp / (fp - fq);
                out.push(p + (q - p) * t);
            }
        }
        Polygon { vertices: out }
    }

    /// Intersection of the boundary with the line `normal . x = c`, as the
    /// pair of crossing points furthest apart (None if the line misses).
    pub fn line_chord(&self, normal: Vector2<f64>, c: f64) -> Option<(Point2<f64>, Point2<f64>)> {
        let n = self.vertices.len();
        let mut hits: Vec<Point2<f64>> = Vec::new();
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let fp = normal.dot(&p.coords) - c;
            let fq = normal.dot(&q.coords) - c;
            if fp == 0.0 {
                hits.push(p);
            } else if (fp < 0.0) != (fq < 0.0) && fq != 0.0 {
                let t = fp / (fp - fq);
                hits.push(p + (q - p) * t);
            }
        }
        if hits.len() < 2 {
            return None;
        }
        // Order along the line direction and take the extremes.
        let along = Vector2::new(-normal.y, normal.x);
        let lo = hits
            .iter()
            .copied()
            .min_by(|a, b| along.dot(&a.coords).total_cmp(&along.dot(&b.coords)))?;
        let hi = hits
            .iter()
            .copied()
            .max_by(|a, b| along.dot(&a.coords).total_cmp(&along.dot(&b.coords)))?;
        if (hi - lo).norm() == 0.0 {
            None
        } else {
            Some((lo, hi))
        }
    }
}

// --- twin interface ----------------------------------------------------

/// Twin interface line: unit normal at angle `angle`, signed offset
/// `offset` from the particle center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwinLine {
    pub angle: f64,
    pub offset: f64,
}

impl TwinLine {
    pub fn normal(&self) -> Vector2<f64> {
        normal_of(self.angle)
    }

    pub fn tangent(&self) -> Vector2<f64> {
        tangent_of(self.angle)
    }

    /// Signed distance of `x` from the interface (negative on the minus side).
    pub fn dist(&self, center: Point2<f64>, x: Point2<f64>) -> f64 {
        (x - center).dot(&self.normal()) - self.offset
    }
}

/// Particle side relative to the twin interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Minus,
    Plus,
}

/// Split of the particle polygon by a twin line.
#[derive(Debug, Clone)]
pub struct TwinPartition {
    /// Region with `dist <= 0` (variant 1).
    pub minus: Polygon,
    /// Region with `dist >= 0` (variant 2).
    pub plus: Polygon,
    /// Interface chord endpoints in reference coordinates, ordered along
    /// the interface tangent, if the line cuts the particle.
    pub chord: Option<(Point2<f64>, Point2<f64>)>,
}

impl TwinPartition {
    pub fn chord_length(&self) -> f64 {
        self.chord.map_or(0.0, |(p, q)| (q - p).norm())
    }

    pub fn area(&self, side: Side) -> f64 {
        match side {
            Side::Minus => self.minus.area(),
            Side::Plus => self.plus.area(),
        }
    }
}

/// Split the particle polygon along a twin line.
pub fn twin_partition(particle: &Polygon, center: Point2<f64>, line: &TwinLine) -> TwinPartition {
    let n = line.normal();
    let c = n.dot(&center.coords) + line.offset;
    let minus = particle.clip_halfplane(n, c);
    let plus = particle.clip_halfplane(-n, -c);
    let chord = particle.line_chord(n, c);
    TwinPartition { minus, plus, chord }
}

/// Area fraction of variant 1 (minus side) in the particle.
pub fn volume_fraction(partition: &TwinPartition, particle_area: f64) -> f64 {
    partition.minus.area() / particle_area
}

/// Area of the symmetric difference of the two variant-1 regions induced
/// by `line_a` and `line_b` (the area swept by the interface).
pub fn swept_area(
    particle: &Polygon,
    center: Point2<f64>,
    line_a: &TwinLine,
    line_b: &TwinLine,
) -> f64 {
    let na = line_a.normal();
    let ca = na.dot(&center.coords) + line_a.offset;
    let nb = line_b.normal();
    let cb = nb.dot(&center.coords) + line_b.offset;
    let area_a = particle.clip_halfplane(na, ca).area();
    let area_b = particle.clip_halfplane(nb, cb).area();
    let area_ab = particle.clip_halfplane(na, ca).clip_halfplane(nb, cb).area();
    (area_a + area_b - 2.0 * area_ab).max(0.0)
}

// --- cell mesh ---------------------------------------------------------

/// Boundary discretization of the periodic unit cell with one particle.
///
/// The cell boundary is traversed counterclockwise, so segment normals
/// point out of the cell.  The particle boundary is traversed clockwise,
/// so its segment normals point *into* the particle: every stored normal
/// is outward with respect to the matrix domain between the two curves.
#[derive(Debug, Clone)]
pub struct CellMesh {
    /// Segments per closed curve.
    pub n_per_curve: usize,
    /// Cell-boundary vertices, counterclockwise from the origin corner.
    pub cell_vertices: Vec<Point2<f64>>,
    /// Cell-boundary segments; segment `i` joins vertices `i` and `i+1`.
    pub cell_segments: Vec<Segment>,
    /// Particle-boundary segments, clockwise (normals into the particle).
    pub particle_segments: Vec<Segment>,
    /// Reference particle polygon, counterclockwise.
    pub particle_polygon: Polygon,
    /// Periodic vertex pairs `(i, j, shift)` with `x_j = x_i + shift`.
    pub vertex_pairs: Vec<(usize, usize, Vector2<f64>)>,
    /// Periodic cell-segment pairs `(i, j, shift)`, midpoints differing
    /// by `shift` and normals opposite.
    pub segment_pairs: Vec<(usize, usize, Vector2<f64>)>,
    /// Particle center (cell center).
    pub center: Point2<f64>,
    /// Particle radius.
    pub radius: f64,
    /// Particle segment length (mesh size).
    pub h: f64,
}

/// Build the boundary mesh with `n` segments per closed curve.
pub fn discretize_cell(n: usize, radius: f64) -> Result<CellMesh, GeometryError> {
    if n < 16 || n % 4 != 0 {
        return Err(GeometryError::InvalidSegmentCount(n));
    }
    let m = n / 4;
    let center = Point2::new(0.5, 0.5);

    // Cell: unit square, counterclockwise from (0,0), m segments per side.
    let mut cell_vertices = Vec::with_capacity(n);
    let corners = [
        Point2::new(0.0, 0.0),
        Point2::new(1.0, 0.0),
        Point2::new(1.0, 1.0),
        Point2::new(0.0, 1.0),
    ];
    for side in 0..4 {
        let a = corners[side];
        let b = corners[(side + 1) % 4];
        for k in 0..m {
            cell_vertices.push(a + (b - a) * (k as f64 / m as f64));
        }
    }
    let cell_segments: Vec<Segment> = (0..n)
        .map(|i| Segment::new(cell_vertices[i], cell_vertices[(i + 1) % n]))
        .collect();

    // Periodic identification. Vertex indices: bottom k, right m+k,
    // top 2m+k, left 3m+k (k = 0..m), all mod n.
    let ex = Vector2::new(1.0, 0.0);
    let ey = Vector2::new(0.0, 1.0);
    let mut vertex_pairs = Vec::new();
    for k in 0..=m {
        // Left (0, y) -> right (1, y): y = 1 - k/m.
        vertex_pairs.push(((3 * m + k) % n, (2 * m - k) % n, ex));
        // Bottom (x, 0) -> top (x, 1): x = k/m.
        vertex_pairs.push((k % n, (3 * m - k) % n, ey));
    }
    let mut segment_pairs = Vec::new();
    for k in 0..m {
        // Bottom segment k <-> top segment over the same x-interval.
        segment_pairs.push((k, 3 * m - 1 - k, ey));
        // Left segment 3m+k <-> right segment over the same y-interval.
        segment_pairs.push((3 * m + k, 2 * m - 1 - k, ex));
    }

    // Particle: regular n-gon; matrix-outward normals point inward, so the
    // boundary is traversed clockwise.
    let particle_polygon = Polygon::regular(center, radius, n);
    let v = &particle_polygon.vertices;
    let particle_segments: Vec<Segment> =
        (0..n).map(|i| Segment::new(v[(n - i) % n], v[n - 1 - i])).collect();
    let h = particle_segments[0].len();

    Ok(CellMesh {
        n_per_curve: n,
        cell_vertices,
        cell_segments,
        particle_segments,
        particle_polygon,
        vertex_pairs,
        segment_pairs,
        center,
        radius,
        h,
    })
}

// --- state and kinematics ----------------------------------------------

/// Full configuration of the cell at one instant.
///
/// The particle deformation is parameterized by the twin line, a shared
/// affine part (translation `c`, infinitesimal rotation `w`, tangential
/// stretch `beta`) and per-variant shear/normal slopes `s`, `nu` relative
/// to the interface frame; on top of everything acts the macroscopic
/// strain `A`.  Magnetizations are unit vectors given by their angles.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    /// Twin interface offset from the particle center.
    pub offset: f64,
    /// Shared kinematic dofs: `c1, c2, w, beta`.
    pub c: Vector2<f64>,
    pub w: f64,
    pub beta: f64,
    /// Variant slopes along the interface tangent / normal.
    pub s_plus: f64,
    pub s_minus: f64,
    pub nu_plus: f64,
    pub nu_minus: f64,
    /// Magnetization angles of the two variants.
    pub theta_plus: f64,
    pub theta_minus: f64,
    /// Twin interface normal angle.
    pub angle: f64,
    /// Macroscopic (cell-average) strain, symmetric.
    pub macro_strain: Matrix2<f64>,
}

impl State {
    /// Twin line of this state.
    pub fn line(&self) -> TwinLine {
        TwinLine { angle: self.angle, offset: self.offset }
    }

    fn slopes(&self, side: Side) -> (f64, f64) {
        match side {
            Side::Minus => (self.s_minus, self.nu_minus),
            Side::Plus => (self.s_plus, self.nu_plus),
        }
    }

    /// Constant displacement gradient of one variant (macro strain included).
    pub fn twin_gradient(&self, side: Side) -> Matrix2<f64> {
        let n = normal_of(self.angle);
        let t = tangent_of(self.angle);
        let (s, nu) = self.slopes(side);
        let j = Matrix2::new(0.0, -1.0, 1.0, 0.0);
        self.macro_strain
            + self.w * j
            + self.beta * t * t.transpose()
            + s * t * n.transpose()
            + nu * n * n.transpose()
    }

    /// In-plane strain of one variant, `sym(G)`.
    pub fn twin_strain(&self, side: Side) -> Matrix2<f64> {
        let g = self.twin_gradient(side);
        0.5 * (g + g.transpose())
    }

    /// Rotation angle of one variant, extracted from the skew part of the
    /// displacement gradient (`atan` of `w + s/2`).
    pub fn variant_rotation_angle(&self, side: Side) -> f64 {
        let (s, _) = self.slopes(side);
        (self.w + 0.5 * s).atan2(1.0)
    }

    /// Magnetization unit vector of one variant.
    pub fn magnetization(&self, side: Side) -> Vector2<f64> {
        let th = match side {
            Side::Minus => self.theta_minus,
            Side::Plus => self.theta_plus,
        };
        Vector2::new(th.cos(), th.sin())
    }

    /// Particle displacement at reference point `x`; the kink across the
    /// interface is smoothed over the width `delta`.
    pub fn displacement(&self, center: Point2<f64>, delta: f64, x: Point2<f64>) -> Vector2<f64> {
        self.displacement_centered(center, delta, x) + self.c
    }

    /// Displacement without the uniform shift `c`. On the periodic cell a
    /// uniform translation of the composite is a gauge freedom, so the
    /// boundary-value problems are evaluated from this centered field; the
    /// energy then stays exactly independent of `c`.
    pub fn displacement_centered(
        &self,
        center: Point2<f64>,
        delta: f64,
        x: Point2<f64>,
    ) -> Vector2<f64> {
        let n = normal_of(self.angle);
        let t = tangent_of(self.angle);
        let r = x - center;
        let dist = r.dot(&n) - self.offset;
        let s_bar = 0.5 * (self.s_plus + self.s_minus);
        let s_jmp = 0.5 * (self.s_plus - self.s_minus);
        let nu_bar = 0.5 * (self.nu_plus + self.nu_minus);
        let nu_jmp = 0.5 * (self.nu_plus - self.nu_minus);
        self.macro_strain * r
            + self.w * Vector2::new(-r.y, r.x)
            + self.beta * t * t.dot(&r)
            + (s_bar * t + nu_bar * n) * dist
            + (s_jmp * t + nu_jmp * n) * smoothed_abs(dist, delta)
    }

    /// Displacement gradient at reference point `x` (smoothed kink).
    pub fn displacement_gradient(
        &self,
        center: Point2<f64>,
        delta: f64,
        x: Point2<f64>,
    ) -> Matrix2<f64> {
        let n = normal_of(self.angle);
        let t = tangent_of(self.angle);
        let r = x - center;
        let dist = r.dot(&n) - self.offset;
        let s_bar = 0.5 * (self.s_plus + self.s_minus);
        let s_jmp = 0.5 * (self.s_plus - self.s_minus);
        let nu_bar = 0.5 * (self.nu_plus + self.nu_minus);
        let nu_jmp = 0.5 * (self.nu_plus - self.nu_minus);
        let j = Matrix2::new(0.0, -1.0, 1.0, 0.0);
        self.macro_strain
            + self.w * j
            + self.beta * t * t.transpose()
            + (s_bar * t + nu_bar * n) * n.transpose()
            + (s_jmp * t + nu_jmp * n) * n.transpose() * smoothed_abs_prime(dist, delta)
    }

    /// Initial state: twinning-compatible interface through the center and
    /// stress-free variant shears, magnetizations on their easy axes.
    pub fn initial(config: &SimulationConfig) -> State {
        let geo: &GeometryParams = &config.geometry;
        let eps0 = config.material.eps0;
        let angle = geo.lattice_angle + std::f64::consts::FRAC_PI_4;
        // At this interface angle the variant eigenstrains are pure shears
        // relative to the interface frame: sym(s t (x) n) = (s/2) Q diag(-1,1) Q^T.
        let (s_minus, s_plus) = match geo.reference_phase {
            ReferencePhase::Austenite => (2.0 * eps0, -2.0 * eps0),
            // Variant 2 is the stress-free reference.
            ReferencePhase::Martensite => (4.0 * eps0, 0.0),
        };
        State {
            offset: 0.0,
            c: Vector2::zeros(),
            w: 0.0,
            beta: 0.0,
            s_plus,
            s_minus,
            nu_plus: 0.0,
            nu_minus: 0.0,
            theta_minus: geo.lattice_angle,
            theta_plus: geo.lattice_angle + std::f64::consts::FRAC_PI_2,
            angle,
            macro_strain: Matrix2::zeros(),
        }
    }
}

/// Smoothed absolute value: `sqrt(d^2 + delta^2) - delta` (exact for
/// `delta = 0`).  Vanishes at `d = 0` and approaches `|d|` within `delta`.
pub fn smoothed_abs(d: f64, delta: f64) -> f64 {
    if delta == 0.0 {
        d.abs()
    } else {
        (d * d + delta * delta).sqrt() - delta
    }
}

/// Derivative of [`smoothed_abs`] with respect to `d`.
pub fn smoothed_abs_prime(d: f64, delta: f64) -> f64 {
    if delta == 0.0 {
        if d == 0.0 {
            0.0
        } else {
            d.signum()
        }
    } else {
        d / (d * d + delta * delta).sqrt()
    }
}

// --- dof layout ---------------------------------------------------------

/// Mapping between [`State`] and the flat dof vector seen by the
/// minimizer.
///
/// Order: `offset, c1, c2, w, beta, s_plus, s_minus, nu_plus, nu_minus,
/// theta_plus, theta_minus[, angle][, A11, A22, A12]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DofLayout {
    pub free_angle: bool,
    pub free_macro: bool,
}

impl DofLayout {
    pub fn new(free_angle: bool, free_macro: bool) -> Self {
        DofLayout { free_angle, free_macro }
    }

    pub fn ndof(&self) -> usize {
        11 + usize::from(self.free_angle) + 3 * usize::from(self.free_macro)
    }

    /// Index of the interface-offset dof.
    pub const OFFSET: usize = 0;

    /// Index of the interface-angle dof, when free.
    pub fn angle_index(&self) -> Option<usize> {
        self.free_angle.then_some(11)
    }

    /// Dofs whose motion sweeps the interface and therefore dissipates.
    pub fn dissipative_indices(&self) -> Vec<usize> {
        let mut ix = vec![Self::OFFSET];
        if let Some(i) = self.angle_index() {
            ix.push(i);
        }
        ix
    }

    pub fn pack(&self, s: &State) -> DVector<f64> {
        let mut v = DVector::zeros(self.ndof());
        v[0] = s.offset;
        v[1] = s.c.x;
        v[2] = s.c.y;
        v[3] = s.w;
        v[4] = s.beta;
        v[5] = s.s_plus;
        v[6] = s.s_minus;
        v[7] = s.nu_plus;
        v[8] = s.nu_minus;
        v[9] = s.theta_plus;
        v[10] = s.theta_minus;
        let mut k = 11;
        if self.free_angle {
            v[k] = s.angle;
            k += 1;
        }
        if self.free_macro {
            v[k] = s.macro_strain[(0, 0)];
            v[k + 1] = s.macro_strain[(1, 1)];
            v[k + 2] = s.macro_strain[(0, 1)];
        }
        v
    }

    /// Rebuild a state from a dof vector; pinned quantities (angle, macro
    /// strain) are taken from `template`.
    pub fn unpack(&self, v: &DVector<f64>, template: &State) -> State {
        let mut s = template.clone();
        s.offset = v[0];
        s.c = Vector2::new(v[1], v[2]);
        s.w = v[3];
        s.beta = v[4];
        s.s_plus = v[5];
        s.s_minus = v[6];
        s.nu_plus = v[7];
        s.nu_minus = v[8];
        s.theta_plus = v[9];
        s.theta_minus = v[10];
        let mut k = 11;
        if self.free_angle {
            s.angle = v[k];
            k += 1;
        }
        if self.free_macro {
            let (a11, a22, a12) = (v[k], v[k + 1], v[k + 2]);
            s.macro_strain = Matrix2::new(a11, a12, a12, a22);
        }
        s
    }
}
