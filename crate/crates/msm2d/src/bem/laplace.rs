//! Scalar potential theory for the stray field: potentials of line-charge
//! densities, their mutual interaction energy, and the periodic correction
//! potential on the unit cell.
//!
//! The free-space kernel is `G(x,y) = -(1/2pi) ln|x-y|` (so `-lap G =
//! delta`).  Magnetic interface charges are piecewise-constant densities
//! on straight segments; their free-space potential `psi_J` is corrected
//! by a harmonic `psi_P` on the cell so that the total is periodic.

use nalgebra::{DMatrix, DVector, Matrix2, Point2, Vector2};

use crate::bem::seg::{
    adaptive_integrate, double_layer, double_log_self, gauss_integrate, single_layer,
    single_layer_grad,
};
use crate::geometry::Segment;

/// Errors from the scalar boundary solvers.
#[derive(Debug, thiserror::Error)]
pub enum LaplaceError {
    #[error("boundary system factorization failed")]
    SingularSystem,
}

// --- charge systems -----------------------------------------------------

/// Piecewise-constant line-charge density on a set of segments.
#[derive(Debug, Clone, Default)]
pub struct ChargeSystem {
    pub segments: Vec<Segment>,
    pub density: Vec<f64>,
}

impl ChargeSystem {
    pub fn push(&mut self, seg: Segment, lambda: f64) {
        self.segments.push(seg);
        self.density.push(lambda);
    }

    pub fn total_charge(&self) -> f64 {
        self.segments
            .iter()
            .zip(&self.density)
            .map(|(s, l)| l * s.len())
            .sum()
    }

    /// Free-space potential `psi_J(x)`.
    pub fn potential(&self, x: Point2<f64>) -> f64 {
        self.segments
            .iter()
            .zip(&self.density)
            .map(|(s, l)| l * single_layer(s, x))
            .sum()
    }

    /// Free-space potential gradient at `x` (away from the charges).
    pub fn gradient(&self, x: Point2<f64>) -> Vector2<f64> {
        self.segments
            .iter()
            .zip(&self.density)
            .map(|(s, l)| *l * single_layer_grad(s, x))
            .sum()
    }

    /// Free-space interaction energy `(1/2) int int G(x,y) l(x) l(y)`,
    /// equal to the total field energy `(1/2) int |grad psi_J|^2` when the
    /// total charge vanishes.
    pub fn self_energy(&self) -> f64 {
        let n = self.segments.len();
        let c = -1.0 / (2.0 * std::f64::consts::PI);
        let mut e = 0.0;
        for i in 0..n {
            let li = self.segments[i].len();
            e += 0.5 * self.density[i] * self.density[i] * c * double_log_self(li);
            for j in (i + 1)..n {
                e += self.density[i]
                    * self.density[j]
                    * pair_interaction(&self.segments[i], &self.segments[j]);
            }
        }
        e
    }
}

/// Pairwise interaction matrix `M` of a charge curve: the free-space
/// energy of densities `l` is `(1/2) l^T M l`, matching
/// [`ChargeSystem::self_energy`].  Depends only on the geometry, so it can
/// be cached while densities vary.
pub fn interaction_matrix(segments: &[Segment]) -> DMatrix<f64> {
    let n = segments.len();
    let c = -1.0 / (2.0 * std::f64::consts::PI);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = c * double_log_self(segments[i].len());
        for j in (i + 1)..n {
            let v = pair_interaction(&segments[i], &segments[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Distance from a point to a segment.
fn point_segment_distance(p: Point2<f64>, s: &Segment) -> f64 {
    let d = s.b - s.a;
    let t = ((p - s.a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
    (p - (s.a + d * t)).norm()
}

/// Minimal distance between two (non-crossing) segments.
fn segment_gap(sa: &Segment, sb: &Segment) -> f64 {
    point_segment_distance(sa.a, sb)
        .min(point_segment_distance(sa.b, sb))
        .min(point_segment_distance(sb.a, sa))
        .min(point_segment_distance(sb.b, sa))
}

/// `int int ln(t - s) dt ds` over `s in [x1,x2]`, `t in [y1,y2]` with
/// `y1 >= x2` (collinear disjoint intervals), by inclusion-exclusion of
/// `Phi''(u) = ln u`.
fn collinear_log_integral(x1: f64, x2: f64, y1: f64, y2: f64) -> f64 {
    let phi = |u: f64| {
        if u <= 0.0 {
            0.0
        } else {
            0.25 * u * u * (2.0 * u.ln() - 3.0)
        }
    };
    phi(y2 - x1) - phi(y2 - x2) - phi(y1 - x1) + phi(y1 - x2)
}

/// `int_a int_b G(x,y) ds_b ds_a` for two distinct segments.
///
/// Collinear pairs are exact; separated pairs use Gauss rules graded by
/// the true gap; touching pairs are integrated adaptively with a
/// square-root grading toward a shared endpoint, so the result is smooth
/// under small geometry perturbations (finite-difference safe).
fn pair_interaction(sa: &Segment, sb: &Segment) -> f64 {
    let c = -1.0 / (2.0 * std::f64::consts::PI);
    let la = sa.len();
    let lb = sb.len();
    let lmax = la.max(lb);
    let tau = sa.tangent();

    // Exactly collinear and disjoint: closed form.
    let cross = |v: Vector2<f64>| tau.x * v.y - tau.y * v.x;
    let off_a = cross(sb.a - sa.a).abs();
    let off_b = cross(sb.b - sa.a).abs();
    if off_a <= 1e-14 * lmax && off_b <= 1e-14 * lmax {
        let (x1, x2) = (0.0, la);
        let pa = (sb.a - sa.a).dot(&tau);
        let pb = (sb.b - sa.a).dot(&tau);
        let (y1, y2) = (pa.min(pb), pa.max(pb));
        if y1 >= x2 - 1e-14 * lmax {
            return c * collinear_log_integral(x1, x2, y1.max(x2), y2);
        }
        if y2 <= x1 + 1e-14 * lmax {
            // Swap roles so the second interval is to the right.
            return c * collinear_log_integral(y1, y2, x1, x2.max(y2));
        }
        // Overlapping collinear segments do not occur by construction;
        // fall through to the adaptive path if they ever do.
    }

    let a = sa.a;
    let mut f = |s: f64| single_layer(sb, a + tau * s);
    let gap = segment_gap(sa, sb);
    if gap >= 2.0 * lmax {
        gauss_integrate(&mut f, 0.0, la, 8)
    } else if gap >= 0.3 * lmax {
        gauss_integrate(&mut f, 0.0, la, 24)
    } else {
        // Near or touching.  If an endpoint of `sa` coincides with an
        // endpoint of `sb`, grade the outer variable as s = s0 +- t^2 to
        // absorb the logarithmic derivative at the joint.
        let tol = 1e-12;
        let scale = la * lb;
        let eps = 1e-12 * lmax;
        let touches = |p: Point2<f64>| (p - sb.a).norm() <= eps || (p - sb.b).norm() <= eps;
        if touches(sa.a) {
            let mut g = |t: f64| f(t * t) * 2.0 * t;
            adaptive_integrate(&mut g, 0.0, la.sqrt(), tol, scale)
        } else if touches(sa.b) {
            let mut g = |t: f64| f(la - t * t) * 2.0 * t;
            adaptive_integrate(&mut g, 0.0, la.sqrt(), tol, scale)
        } else {
            adaptive_integrate(&mut f, 0.0, la, tol, scale)
        }
    }
}

// --- Dirichlet solver ----------------------------------------------------

/// Interior Dirichlet problem on a closed curve with outward normals:
/// given boundary values at segment midpoints, find the piecewise-constant
/// normal flux `q = d psi/d nu`.
///
/// The single-layer system is augmented with a constant `omega` and the
/// compatibility row `sum q_j L_j = 0`, which keeps the system regular
/// even at logarithmic capacity one (e.g. the unit circle).
pub struct DirichletSolver {
    segments: Vec<Segment>,
    dl: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DirichletSolver {
    pub fn new(segments: Vec<Segment>) -> Result<Self, LaplaceError> {
        let n = segments.len();
        let mids: Vec<Point2<f64>> = segments.iter().map(Segment::midpoint).collect();
        let mut sys = DMatrix::zeros(n + 1, n + 1);
        let mut dl = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                sys[(i, j)] = single_layer(&segments[j], mids[i]);
                dl[(i, j)] = double_layer(&segments[j], mids[i]);
            }
            dl[(i, i)] += 0.5; // free term at a flat collocation point
            sys[(i, n)] = 1.0; // omega column
            sys[(n, i)] = segments[i].len(); // compatibility row
        }
        let lu = sys.lu();
        if !lu.is_invertible() {
            return Err(LaplaceError::SingularSystem);
        }
        Ok(DirichletSolver { segments, dl, lu })
    }

    /// Normal flux at the segment midpoints for the given Dirichlet data.
    pub fn solve(&self, psi_mid: &DVector<f64>) -> DVector<f64> {
        let n = self.segments.len();
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&(&self.dl * psi_mid));
        let sol = self.lu.solve(&rhs).expect("factorized system");
        sol.rows(0, n).into_owned()
    }
}

// --- periodic cell correction ---------------------------------------------

/// Harmonic correction `psi_P` on the (possibly affinely deformed) cell:
/// boundary values and fluxes are paired so that `psi_J + psi_P` continues
/// periodically, with `psi_P` represented directly by its boundary data.
///
/// Unknowns are piecewise-constant `psi` and `q` on the cell segments;
/// rows are interior-collocation identities at all midpoints, the value
/// and flux pairing conditions, and a zero-mean pin for the additive
/// constant.  The consistent overdetermined system is solved by a cached
/// pseudo-inverse, so each new charge configuration costs one multiply.
pub struct PeriodicCellSolver {
    pub segments: Vec<Segment>,
    pairs: Vec<(usize, usize)>,
    pinv: DMatrix<f64>,
}

/// Boundary data of one periodic correction solve.
#[derive(Debug, Clone)]
pub struct PeriodicSolution {
    pub psi: DVector<f64>,
    pub q: DVector<f64>,
}

impl PeriodicCellSolver {
    pub fn new(
        segments: Vec<Segment>,
        pairs: &[(usize, usize, Vector2<f64>)],
    ) -> Result<Self, LaplaceError> {
        let n = segments.len();
        let np = pairs.len();
        let mids: Vec<Point2<f64>> = segments.iter().map(Segment::midpoint).collect();
        // Unknowns [psi; q], rows: n collocation + np value + np flux + 1 mean.
        let mut sys = DMatrix::zeros(n + 2 * np + 1, 2 * n);
        for i in 0..n {
            for j in 0..n {
                sys[(i, j)] = double_layer(&segments[j], mids[i]);
                sys[(i, n + j)] = -single_layer(&segments[j], mids[i]);
            }
            sys[(i, i)] += 0.5;
        }
        for (k, &(i, j, _)) in pairs.iter().enumerate() {
            sys[(n + k, j)] = 1.0;
            sys[(n + k, i)] = -1.0;
            sys[(n + np + k, n + j)] = 1.0;
            sys[(n + np + k, n + i)] = 1.0;
        }
        for j in 0..n {
            sys[(n + 2 * np, j)] = segments[j].len();
        }
        let pinv = sys
            .svd(true, true)
            .pseudo_inverse(1e-12)
            .map_err(|_| LaplaceError::SingularSystem)?;
        Ok(PeriodicCellSolver {
            segments,
            pairs: pairs.iter().map(|&(i, j, _)| (i, j)).collect(),
            pinv,
        })
    }

    /// Solve for the correction boundary data induced by `charges`.
    pub fn solve(&self, charges: &ChargeSystem) -> PeriodicSolution {
        let n = self.segments.len();
        let np = self.pairs.len();
        let mut rhs = DVector::zeros(n + 2 * np + 1);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            let yi = self.segments[i].midpoint();
            let yj = self.segments[j].midpoint();
            // psi_P(y_j) - psi_P(y_i) = psi_J(y_i) - psi_J(y_j)
            rhs[n + k] = charges.potential(yi) - charges.potential(yj);
            // q_P(y_j) + q_P(y_i) = (grad psi_J(y_j) - grad psi_J(y_i)) . nu_i
            rhs[n + np + k] =
                (charges.gradient(yj) - charges.gradient(yi)).dot(&self.segments[i].normal());
        }
        let sol = &self.pinv * rhs;
        PeriodicSolution {
            psi: sol.rows(0, n).into_owned(),
            q: sol.rows(n, n).into_owned(),
        }
    }

    /// Evaluate `psi_P` at a point strictly inside the cell.
    pub fn eval(&self, sol: &PeriodicSolution, x: Point2<f64>) -> f64 {
        let mut acc = 0.0;
        for (j, seg) in self.segments.iter().enumerate() {
            acc += single_layer(seg, x) * sol.q[j] - double_layer(seg, x) * sol.psi[j];
        }
        acc
    }

    /// Correction part of the cell field energy: `(1/2) int psi_P lambda`
    /// over the charge curves (midpoint rule per charge segment).
    pub fn correction_energy(&self, sol: &PeriodicSolution, charges: &ChargeSystem) -> f64 {
        0.5 * charges
            .segments
            .iter()
            .zip(&charges.density)
            .map(|(s, l)| l * s.len() * self.eval(sol, s.midpoint()))
            .sum::<f64>()
    }

    /// Correction energy as a quadratic form in the charge densities:
    /// for charge curves of fixed geometry `segments`, the energy
    /// `(1/2) int psi_P lambda` equals `(1/2) l^T C l`.  The matrix
    /// composes the boundary-data map, the solve and the midpoint
    /// evaluation, so it matches [`Self::correction_energy`] identically
    /// while letting the densities vary cheaply.
    pub fn correction_operator(&self, segments: &[Segment]) -> DMatrix<f64> {
        let n = self.segments.len();
        let np = self.pairs.len();
        let m = segments.len();
        // Boundary data of a unit density on each charge segment.
        let mut data = DMatrix::zeros(n + 2 * np + 1, m);
        for (k, cs) in segments.iter().enumerate() {
            for (kp, &(i, j)) in self.pairs.iter().enumerate() {
                let yi = self.segments[i].midpoint();
                let yj = self.segments[j].midpoint();
                data[(n + kp, k)] = single_layer(cs, yi) - single_layer(cs, yj);
                data[(n + np + kp, k)] = (single_layer_grad(cs, yj)
                    - single_layer_grad(cs, yi))
                .dot(&self.segments[i].normal());
            }
        }
        // Interior evaluation of the correction field at charge midpoints,
        // weighted by the midpoint-rule length so that the quadratic form
        // carries the same 1/2 convention as `interaction_matrix`.
        let mut eval = DMatrix::zeros(m, 2 * n);
        for (k, cs) in segments.iter().enumerate() {
            let x = cs.midpoint();
            let w = cs.len();
            for (j, seg) in self.segments.iter().enumerate() {
                eval[(k, j)] = -w * double_layer(seg, x);
                eval[(k, n + j)] = w * single_layer(seg, x);
            }
        }
        eval * &self.pinv * data
    }

    /// Residual of the collocation rows for a solution (diagnostic).
    pub fn collocation_residual(&self, sol: &PeriodicSolution) -> f64 {
        let mids: Vec<Point2<f64>> = self.segments.iter().map(Segment::midpoint).collect();
        let mut worst: f64 = 0.0;
        for (i, &x) in mids.iter().enumerate() {
            let mut acc = 0.5 * sol.psi[i];
            for (j, seg) in self.segments.iter().enumerate() {
                acc += double_layer(seg, x) * sol.psi[j] - single_layer(seg, x) * sol.q[j];
            }
            worst = worst.max(acc.abs());
        }
        worst
    }
}

/// Map the reference unit-cell boundary by the affine deformation
/// `x -> c + (I + A)(x - c)` and return the deformed segments along with
/// the deformed periodic shifts.
pub fn deform_cell(
    segments: &[Segment],
    pairs: &[(usize, usize, Vector2<f64>)],
    center: Point2<f64>,
    strain: &Matrix2<f64>,
) -> (Vec<Segment>, Vec<(usize, usize, Vector2<f64>)>) {
    let f = Matrix2::identity() + strain;
    let map = |p: Point2<f64>| center + f * (p - center);
    let segs = segments
        .iter()
        .map(|s| Segment::new(map(s.a), map(s.b)))
        .collect();
    let prs = pairs.iter().map(|&(i, j, e)| (i, j, f * e)).collect();
    (segs, prs)
}
