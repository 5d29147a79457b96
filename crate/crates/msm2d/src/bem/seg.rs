//! Closed-form integrals of boundary-element kernels over straight
//! segments, and Gauss-Legendre quadrature helpers.
//!
//! All integrals are expressed in the segment's local frame: for a segment
//! from `a` to `b` with tangent `tau` and right normal `nhat = (tau_y,
//! -tau_x)`, an observation point `x` has coordinates `xi = (x-a).tau`,
//! `eta = (x-a).nhat`, and a source point at arclength `s` sits at signed
//! abscissa `u = s - xi` in `[-xi, L-xi]`, with `r^2 = u^2 + eta^2`.
//!
//! When `x` lies on the segment's line (`eta == 0`) the formulas return
//! Cauchy principal values; collocation at segment midpoints then yields
//! the standard free term `1/2` in the boundary integral equations.

use nalgebra::{DMatrix, Matrix2, Point2, Vector2};
use std::sync::OnceLock;

use crate::geometry::Segment;

/// Local coordinates of an observation point relative to a segment.
#[derive(Debug, Clone, Copy)]
pub struct LocalFrame {
    pub tau: Vector2<f64>,
    pub nhat: Vector2<f64>,
    pub len: f64,
    pub xi: f64,
    pub eta: f64,
}

impl LocalFrame {
    pub fn new(seg: &Segment, x: Point2<f64>) -> Self {
        let tau = seg.tangent();
        let nhat = Vector2::new(tau.y, -tau.x);
        let d = x - seg.a;
        let len = seg.len();
        let xi = d.dot(&tau);
        let mut eta = d.dot(&nhat);
        // Collocation points are meant to sit exactly on their own segment;
        // snap rounding-level offsets so they take the principal-value branch.
        if eta.abs() <= 1e-12 * (len + xi.abs()) {
            eta = 0.0;
        }
        LocalFrame { tau, nhat, len, xi, eta }
    }

    fn bounds(&self) -> (f64, f64) {
        (-self.xi, self.len - self.xi)
    }
}

/// Definite kernel moments over one segment (principal values on the line).
///
/// `p_k` are `int u^k / r^2 du`; names with a leading `e` carry explicit
/// powers of `eta` (`e2_q1 = eta^2 int u/r^4 du` etc.), which vanish for
/// `eta == 0`.  `i_log`/`j_log` are `int ln r du` and `int u ln r du`,
/// `th` is the subtended angle `int eta/r^2 du`.
#[derive(Debug, Clone, Copy)]
pub struct SegInts {
    pub i_log: f64,
    pub j_log: f64,
    pub th: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub e_p1: f64,
    pub e_p2: f64,
    pub e2_p0: f64,
    pub e2_p1: f64,
    pub e_q2: f64,
    pub e2_q1: f64,
    pub e3_q0: f64,
    pub e_q3: f64,
    pub e2_q2: f64,
    pub e3_q1: f64,
}

impl SegInts {
    pub fn new(f: &LocalFrame) -> Self {
        let (u0, u1) = f.bounds();
        let eta = f.eta;
        if eta == 0.0 {
            // Principal values on the line: every eta-weighted moment is 0.
            let lg = |u: f64| u.abs().ln();
            return SegInts {
                i_log: (u1 * lg(u1) - u1) - (u0 * lg(u0) - u0),
                j_log: 0.25 * ((u1 * u1).mul_add(lg(u1) * 2.0, -(u1 * u1))
                    - (u0 * u0).mul_add(lg(u0) * 2.0, -(u0 * u0))),
                th: 0.0,
                p1: lg(u1) - lg(u0),
                p2: u1 - u0,
                p3: 0.5 * (u1 * u1 - u0 * u0),
                e_p1: 0.0,
                e_p2: 0.0,
                e2_p0: 0.0,
                e2_p1: 0.0,
                e_q2: 0.0,
                e2_q1: 0.0,
                e3_q0: 0.0,
                e_q3: 0.0,
                e2_q2: 0.0,
                e3_q1: 0.0,
            };
        }
        let r2 = |u: f64| u * u + eta * eta;
        let lr2 = |u: f64| r2(u).ln();
        let at = |u: f64| (u / eta).atan();
        let def = |g: &dyn Fn(f64) -> f64| g(u1) - g(u0);

        let th = def(&at);
        SegInts {
            i_log: 0.5 * def(&|u| u.mul_add(lr2(u), -2.0 * u) + 2.0 * eta * at(u)),
            j_log: 0.25 * def(&|u| r2(u).mul_add(lr2(u), -(u * u))),
            th,
            p1: 0.5 * def(&lr2),
            p2: def(&|u| u - eta * at(u)),
            p3: def(&|u| 0.5 * u * u - 0.5 * eta * eta * lr2(u)),
            e_p1: 0.5 * eta * def(&lr2),
            e_p2: eta * def(&|u| u - eta * at(u)),
            e2_p0: eta * th,
            e2_p1: 0.5 * eta * eta * def(&lr2),
            e_q2: def(&|u| -0.5 * eta * u / r2(u)) + 0.5 * th,
            e2_q1: def(&|u| -0.5 * eta * eta / r2(u)),
            e3_q0: def(&|u| 0.5 * eta * u / r2(u)) + 0.5 * th,
            e_q3: def(&|u| 0.5 * eta * lr2(u) + 0.5 * eta * eta * eta / r2(u)),
            e2_q2: def(&|u| -0.5 * eta * eta * u / r2(u)) + 0.5 * eta * th,
            e3_q1: def(&|u| -0.5 * eta * eta * eta / r2(u)),
        }
    }
}

// --- Laplace kernel -----------------------------------------------------

/// `int ln r ds` over the segment.
pub fn int_log_r(seg: &Segment, x: Point2<f64>) -> f64 {
    SegInts::new(&LocalFrame::new(seg, x)).i_log
}

/// Potential at `x` of a unit single-layer density on the segment,
/// for the kernel `-(1/2pi) ln r`.
pub fn single_layer(seg: &Segment, x: Point2<f64>) -> f64 {
    -int_log_r(seg, x) / (2.0 * std::f64::consts::PI)
}

/// Gradient at `x` of [`single_layer`].
pub fn single_layer_grad(seg: &Segment, x: Point2<f64>) -> Vector2<f64> {
    let f = LocalFrame::new(seg, x);
    let ints = SegInts::new(&f);
    // grad int ln r du = tau ln(r_a/r_b) + nhat * Theta = -p1 tau + th nhat.
    -(f.tau * (-ints.p1) + f.nhat * ints.th) / (2.0 * std::f64::consts::PI)
}

/// Double-layer potential at `x` of a unit density on the segment
/// (normal `nhat`): `int d/dn_y [-(1/2pi) ln r] ds = Theta / 2pi`.
pub fn double_layer(seg: &Segment, x: Point2<f64>) -> f64 {
    SegInts::new(&LocalFrame::new(seg, x)).th / (2.0 * std::f64::consts::PI)
}

/// `int_0^L int_0^L ln|s-t| ds dt` for a segment of length `l` (the
/// coincident double log-integral).
pub fn double_log_self(l: f64) -> f64 {
    l * l * (l.ln() - 1.5)
}

// --- plane-strain Kelvin kernel ----------------------------------------

/// Constant and linear moments of the Kelvin displacement kernel `U`:
/// `(int U du, int u U du)`.
///
/// `U_ij(x,y) = 1/(8 pi mu (1-nu)) [ -(3-4nu) ln r d_ij + e_i e_j ]` with
/// `e = (y-x)/r`.
pub fn kelvin_u_moments(f: &LocalFrame, mu: f64, nu: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    let s = SegInts::new(f);
    let cu = 1.0 / (8.0 * std::f64::consts::PI * mu * (1.0 - nu));
    let k = 3.0 - 4.0 * nu;
    let tt = f.tau * f.tau.transpose();
    let tn = f.tau * f.nhat.transpose() + f.nhat * f.tau.transpose();
    let nn = f.nhat * f.nhat.transpose();
    let id = Matrix2::identity();
    // y - x = u tau - eta nhat, so e e^T = (u^2 tt - u eta (tn) + eta^2 nn)/r^2.
    let m0 = s.p2 * tt - s.e_p1 * tn + s.e2_p0 * nn;
    let m1 = s.p3 * tt - s.e_p2 * tn + s.e2_p1 * nn;
    (cu * (-k * s.i_log * id + m0), cu * (-k * s.j_log * id + m1))
}

/// Constant and linear moments of the Kelvin traction kernel `T`:
/// `(int T du, int u T du)`, principal values on the segment itself.
///
/// `T_ij(x,y) = -1/(4 pi (1-nu) r) [ (e.n)((1-2nu) d_ij + 2 e_i e_j)
///              + (1-2nu)(e_j n_i - e_i n_j) ]` with `e = (y-x)/r` and
/// `n = n(y) = nhat`: the kernel that enters the direct boundary integral
/// equation as `c u(x) + int T u ds = int U t ds` (Betti's theorem pairs
/// the load index of the Kelvin state with the free index of `u`).
pub fn kelvin_t_moments(f: &LocalFrame, nu: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    let s = SegInts::new(f);
    let ct = -1.0 / (4.0 * std::f64::consts::PI * (1.0 - nu));
    let k = 1.0 - 2.0 * nu;
    let tt = f.tau * f.tau.transpose();
    let tn = f.tau * f.nhat.transpose() + f.nhat * f.tau.transpose();
    let nn = f.nhat * f.nhat.transpose();
    let skew = f.nhat * f.tau.transpose() - f.tau * f.nhat.transpose();
    let id = Matrix2::identity();
    // (e.n)/r = -eta/r^2; e_j n_i - e_i n_j integrates through u (n tau - tau n).
    let m0 = ct
        * (-k * s.th * id - 2.0 * (s.e_q2 * tt - s.e2_q1 * tn + s.e3_q0 * nn) + k * s.p1 * skew);
    let m1 = ct
        * (-k * s.e_p1 * id - 2.0 * (s.e_q3 * tt - s.e2_q2 * tn + s.e3_q1 * nn)
            + k * s.p2 * skew);
    (m0, m1)
}

/// Integrals of `T` weighted by the linear shape functions of the segment
/// endpoints `a` and `b`: `(int phi_a T du, int phi_b T du)`.
pub fn kelvin_t_shape(f: &LocalFrame, nu: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    let (m0, m1) = kelvin_t_moments(f, nu);
    let (u0, u1) = f.bounds();
    ((u1 * m0 - m1) / f.len, (m1 - u0 * m0) / f.len)
}

/// Plane-strain stress of a uniform displacement gradient `g`.
pub fn stress_of_gradient(g: &Matrix2<f64>, lambda: f64, mu: f64) -> Matrix2<f64> {
    let e = 0.5 * (g + g.transpose());
    lambda * e.trace() * Matrix2::identity() + 2.0 * mu * e
}

// --- quadrature ---------------------------------------------------------

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Golub-Welsch).
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Cached Gauss-Legendre rule; `n` must be one of 8, 16, 24.
pub fn gauss(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static G8: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static G16: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static G24: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    match n {
        8 => G8.get_or_init(|| gauss_legendre(8)),
        16 => G16.get_or_init(|| gauss_legendre(16)),
        24 => G24.get_or_init(|| gauss_legendre(24)),
        other => panic!("unsupported Gauss order {other}"),
    }
}

/// `int_a^b f dx` with an `n`-point Gauss rule.
pub fn gauss_integrate(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let (xs, ws) = gauss(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    xs.iter().zip(ws).map(|(&x, &w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Adaptive bisection quadrature: accepts an interval when the 8- and
/// 16-point results agree to `tol` relative to `scale`.
pub fn adaptive_integrate(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    scale: f64,
) -> f64 {
    fn rec(
        f: &mut dyn FnMut(f64) -> f64,
        a: f64,
        b: f64,
        coarse: f64,
        tol: f64,
        scale: f64,
        depth: usize,
    ) -> f64 {
        let fine = gauss_integrate(f, a, b, 16);
        if (fine - coarse).abs() <= tol * scale || depth >= 24 {
            return fine;
        }
        let m = 0.5 * (a + b);
        let cl = gauss_integrate(f, a, m, 8);
        let cr = gauss_integrate(f, m, b, 8);
        rec(f, a, m, cl, tol, scale, depth + 1) + rec(f, m, b, cr, tol, scale, depth + 1)
    }
    let coarse = gauss_integrate(f, a, b, 8);
    let scale = scale.max(f64::MIN_POSITIVE);
    rec(f, a, b, coarse, tol, scale, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Brute-force reference for any scalar segment integrand.
    fn reference(seg: &Segment, x: Point2<f64>, f: &dyn Fn(f64, f64) -> f64) -> f64 {
        // Integrate g(u) over u in [-xi, L-xi] with 4096 panels of G8.
        let fr = LocalFrame::new(seg, x);
        let (u0, u1) = (-fr.xi, fr.len - fr.xi);
        let n = 512;
        let mut acc = 0.0;
        for i in 0..n {
            let a = u0 + (u1 - u0) * i as f64 / n as f64;
            let b = u0 + (u1 - u0) * (i + 1) as f64 / n as f64;
            acc += gauss_integrate(&mut |u| f(u, fr.eta), a, b, 16);
        }
        acc
    }

    fn random_geometry(rng: &mut ChaCha8Rng) -> (Segment, Point2<f64>) {
        let a = Point2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let b = Point2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let x = Point2::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        (Segment::new(a, b), x)
    }

    #[test]
    fn moments_match_numerical_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut tested = 0;
        while tested < 60 {
            let (seg, x) = random_geometry(&mut rng);
            let f = LocalFrame::new(&seg, x);
            if seg.len() < 0.1 || f.eta.abs() < 1e-3 {
                continue; // keep the reference quadrature trustworthy
            }
            tested += 1;
            let s = SegInts::new(&f);
            let r2 = |u: f64, e: f64| u * u + e * e;
            let cases: Vec<(f64, Box<dyn Fn(f64, f64) -> f64>)> = vec![
                (s.i_log, Box::new(|u, e| 0.5 * r2(u, e).ln())),
                (s.j_log, Box::new(|u, e| 0.5 * u * r2(u, e).ln())),
                (s.th, Box::new(|u, e| e / r2(u, e))),
                (s.p1, Box::new(|u, e| u / r2(u, e))),
                (s.p2, Box::new(|u, e| u * u / r2(u, e))),
                (s.p3, Box::new(|u, e| u * u * u / r2(u, e))),
                (s.e_p1, Box::new(|u, e| e * u / r2(u, e))),
                (s.e_p2, Box::new(|u, e| e * u * u / r2(u, e))),
                (s.e2_p0, Box::new(|u, e| e * e / r2(u, e))),
                (s.e2_p1, Box::new(|u, e| e * e * u / r2(u, e))),
                (s.e_q2, Box::new(|u, e| e * u * u / r2(u, e).powi(2))),
                (s.e2_q1, Box::new(|u, e| e * e * u / r2(u, e).powi(2))),
                (s.e3_q0, Box::new(|u, e| e * e * e / r2(u, e).powi(2))),
                (s.e_q3, Box::new(|u, e| e * u.powi(3) / r2(u, e).powi(2))),
                (s.e2_q2, Box::new(|u, e| e * e * u * u / r2(u, e).powi(2))),
                (s.e3_q1, Box::new(|u, e| e.powi(3) * u / r2(u, e).powi(2))),
            ];
            for (exact, integrand) in cases {
                let num = reference(&seg, x, integrand.as_ref());
                assert_abs_diff_eq!(exact, num, epsilon = 1e-9 * (1.0 + exact.abs()));
            }
        }
    }

    #[test]
    fn subtended_angles_sum_around_closed_curves() {
        // Interior point: total subtended angle is -2pi for the right-normal
        // convention on a counterclockwise curve; exterior: 0; midpoint on
        // the boundary: -pi (principal value, flat vertex).
        let poly = Polygon::regular(Point2::new(0.0, 0.0), 1.0, 48);
        let segs = poly.segments();
        let total = |x: Point2<f64>| -> f64 {
            segs.iter().map(|s| SegInts::new(&LocalFrame::new(s, x)).th).sum()
        };
        assert_relative_eq!(total(Point2::new(0.2, -0.1)), -2.0 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(total(Point2::new(1.7, 0.4)), 0.0, epsilon = 1e-12);
        let on_boundary = segs[7].midpoint();
        assert_relative_eq!(total(on_boundary), -PI, epsilon = 1e-12);
    }

    #[test]
    fn single_layer_of_uniform_circle_density() {
        // Uniform unit density on a circle of radius R: potential is
        // -R ln R at the center and -R ln rho outside (total charge 2 pi R).
        let r = 0.7;
        let poly = Polygon::regular(Point2::new(0.0, 0.0), r, 512);
        let segs = poly.segments();
        let pot = |x: Point2<f64>| -> f64 { segs.iter().map(|s| single_layer(s, x)).sum() };
        assert_relative_eq!(pot(Point2::new(0.0, 0.0)), -r * r.ln(), max_relative = 1e-4);
        let rho: f64 = 1.9;
        assert_relative_eq!(pot(Point2::new(rho, 0.0)), -r * rho.ln(), max_relative = 1e-4);
        // Gradient outside points inward for positive charge: field of a
        // line charge -grad pot = R/rho e_rho.
        let g: Vector2<f64> = segs.iter().map(|s| single_layer_grad(s, Point2::new(rho, 0.0))).sum();
        assert_relative_eq!(g.x, -r / rho, max_relative = 1e-4);
        assert_abs_diff_eq!(g.y, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn double_log_self_matches_brute_force() {
        let l = 0.37;
        let mut acc = 0.0;
        let n = 2000;
        for i in 0..n {
            let s = (i as f64 + 0.5) / n as f64 * l;
            acc += gauss_integrate(
                &mut |t: f64| (s - t).abs().max(1e-300).ln(),
                0.0,
                l,
                16,
            ) * (l / n as f64);
        }
        // The midpoint outer rule converges slowly; modest tolerance.
        assert_relative_eq!(double_log_self(l), acc, max_relative = 1e-3);
    }

    #[test]
    fn kelvin_moments_match_numerical_quadrature() {
        let (mu, nu) = (0.344, 0.45);
        let cu = 1.0 / (8.0 * PI * mu * (1.0 - nu));
        let ct = -1.0 / (4.0 * PI * (1.0 - nu));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut tested = 0;
        while tested < 25 {
            let (seg, x) = random_geometry(&mut rng);
            let f = LocalFrame::new(&seg, x);
            if seg.len() < 0.1 || f.eta.abs() < 5e-3 {
                continue;
            }
            tested += 1;
            let (u0m, u1m) = kelvin_u_moments(&f, mu, nu);
            let (t0m, t1m) = kelvin_t_moments(&f, nu);
            // Direct kernel evaluation in global coordinates:
            // y(u) = x + u tau - eta nhat.
            let eval = |u: f64| -> (Matrix2<f64>, Matrix2<f64>) {
                let d = f.tau * u - f.nhat * f.eta;
                let r = d.norm();
                let e = d / r;
                let uker = cu
                    * (-(3.0 - 4.0 * nu) * r.ln() * Matrix2::identity() + e * e.transpose());
                let en = e.dot(&f.nhat);
                let tker = (ct / r)
                    * (en * ((1.0 - 2.0 * nu) * Matrix2::identity() + 2.0 * e * e.transpose())
                        + (1.0 - 2.0 * nu)
                            * (f.nhat * e.transpose() - e * f.nhat.transpose()));
                (uker, tker)
            };
            let (u0, u1) = f.bounds();
            let mut num = [Matrix2::zeros(); 4];
            let n = 400;
            let (xs, ws) = gauss(16);
            for i in 0..n {
                let a = u0 + (u1 - u0) * i as f64 / n as f64;
                let b = u0 + (u1 - u0) * (i + 1) as f64 / n as f64;
                let mid = 0.5 * (a + b);
                let half = 0.5 * (b - a);
                for (&xg, &wg) in xs.iter().zip(ws) {
                    let u = mid + half * xg;
                    let (uker, tker) = eval(u);
                    num[0] += wg * half * uker;
                    num[1] += wg * half * u * uker;
                    num[2] += wg * half * tker;
                    num[3] += wg * half * u * tker;
                }
            }
            for (exact, numeric) in [(u0m, num[0]), (u1m, num[1]), (t0m, num[2]), (t1m, num[3])] {
                assert_abs_diff_eq!((exact - numeric).norm(), 0.0, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn traction_kernel_closure_identity() {
        // For any closed counterclockwise curve with outward normals,
        // int T(x, .) ds = -I for interior x, -I/2 at a flat boundary
        // point (principal value), 0 outside.  Closed forms make this
        // exact even on a coarse polygon.
        let nu = 0.3;
        let poly = Polygon::regular(Point2::new(0.2, -0.1), 0.8, 24);
        let segs = poly.segments();
        let total = |x: Point2<f64>| -> Matrix2<f64> {
            segs.iter()
                .map(|s| kelvin_t_moments(&LocalFrame::new(s, x), nu).0)
                .sum()
        };
        let id = Matrix2::identity();
        assert_abs_diff_eq!((total(Point2::new(0.3, 0.1)) + id).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            (total(segs[5].midpoint()) + 0.5 * id).norm(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(total(Point2::new(2.0, 2.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn somigliana_identity_for_affine_fields() {
        // u*(y) = B y + c with its exact tractions satisfies
        // u*(x) = int U t* ds - int T u* ds for interior x, exactly on a
        // polygon because all integrands are piecewise affine.
        let (mu, nu) = (0.3448, 0.45);
        let lambda = 2.0 * mu * nu / (1.0 - 2.0 * nu);
        let b = Matrix2::new(0.3, -0.1, 0.2, 0.05);
        let c0 = Vector2::new(0.7, -0.2);
        let sigma = stress_of_gradient(&b, lambda, mu);
        let poly = Polygon::regular(Point2::new(0.1, 0.3), 0.9, 32);
        let x = Point2::new(-0.2, 0.55);
        let mut rhs = Vector2::zeros();
        for seg in poly.segments() {
            let f = LocalFrame::new(&seg, x);
            let (u0m, _) = kelvin_u_moments(&f, mu, nu);
            let (ta, tb) = kelvin_t_shape(&f, nu);
            let t_star = sigma * seg.normal();
            let ua = b * seg.a.coords + c0;
            let ub = b * seg.b.coords + c0;
            rhs += u0m * t_star - (ta * ua + tb * ub);
        }
        let expect = b * x.coords + c0;
        assert_abs_diff_eq!((rhs - expect).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gauss_rules_integrate_polynomials_exactly() {
        for &n in &[8usize, 16, 24] {
            let (xs, ws) = gauss(n);
            assert_eq!(xs.len(), n);
            // Exact for degree 2n-1.
            for k in (1..2 * n).step_by(2) {
                let odd: f64 = xs.iter().zip(ws).map(|(&x, &w)| w * x.powi(k as i32)).sum();
                assert_abs_diff_eq!(odd, 0.0, epsilon = 1e-13);
            }
            for k in (0..2 * n).step_by(2) {
                let even: f64 = xs.iter().zip(ws).map(|(&x, &w)| w * x.powi(k as i32)).sum();
                assert_relative_eq!(even, 2.0 / (k as f64 + 1.0), epsilon = 1e-12);
            }
        }
        let v = gauss_integrate(&mut |x: f64| x.sin(), 0.0, 2.0, 16);
        assert_relative_eq!(v, 1.0 - 2.0f64.cos(), epsilon = 1e-14);
    }

    #[test]
    fn adaptive_quadrature_resolves_log_endpoint() {
        // int_0^1 ln x dx = -1, singular at the left endpoint.
        let v = adaptive_integrate(&mut |x: f64| x.max(1e-300).ln(), 0.0, 1.0, 1e-12, 1.0);
        assert_relative_eq!(v, -1.0, epsilon = 1e-9);
    }
}
