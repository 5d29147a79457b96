//! Simulation parameters, file I/O and field-protocol construction.
//!
//! Configuration files are TOML with four sections, `[material]`,
//! `[geometry]`, `[protocol]` and `[solver]`.  Every key is optional and
//! falls back to the reference parameter set (NiMnGa particles in a soft
//! polymer matrix, stresses in MPa, magnetic fields in Tesla, lengths in
//! units of the cell edge).

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

/// Errors produced while loading or validating a configuration.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("failed to read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for `{key}`: {reason}")]
    Validation { key: &'static str, reason: String },
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation { key, reason: reason.into() }
}

// --- material ---------------------------------------------------------

/// Material constants. Stresses in MPa, fields in Tesla.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    /// Eigenstrain magnitude of the martensite variants.
    #[serde(default = "d_eps0")]
    pub eps0: f64,
    /// Cubic elastic constants of the particle (MPa).
    #[serde(rename = "C11", default = "d_c11")]
    pub c11: f64,
    #[serde(rename = "C12", default = "d_c12")]
    pub c12: f64,
    #[serde(rename = "C44", default = "d_c44")]
    pub c44: f64,
    /// Young modulus of the polymer matrix (MPa).
    #[serde(rename = "E_poly", default = "d_e_poly")]
    pub e_poly: f64,
    /// Poisson ratio of the polymer matrix.
    #[serde(default = "d_nu_poly")]
    pub nu_poly: f64,
    /// Zeeman coupling `Ms/mu0` (MPa/T).
    #[serde(rename = "Ms_over_mu0", default = "d_ms_mu0")]
    pub ms_over_mu0: f64,
    /// Stray-field coupling `Ms^2/mu0` (MPa).
    #[serde(rename = "Ms2_over_mu0", default = "d_ms2_mu0")]
    pub ms2_over_mu0: f64,
    /// Uniaxial magnetic anisotropy constant (MPa).
    #[serde(rename = "Ku", default = "d_ku")]
    pub ku: f64,
    /// Specific dissipation of twin-boundary motion (MPa per swept area).
    #[serde(default = "d_kappa")]
    pub kappa: f64,
    /// Plane-strain Lame constants, derived from `E_poly`, `nu_poly`.
    #[serde(skip)]
    pub lambda_poly: f64,
    #[serde(skip)]
    pub mu_poly: f64,
}

fn d_eps0() -> f64 { 0.058 }
fn d_c11() -> f64 { 160_000.0 }
fn d_c12() -> f64 { 156_000.0 }
fn d_c44() -> f64 { 40_000.0 }
fn d_e_poly() -> f64 { 1.0 }
fn d_nu_poly() -> f64 { 0.45 }
fn d_ms_mu0() -> f64 { 0.50 }
fn d_ms2_mu0() -> f64 { 0.31 }
fn d_ku() -> f64 { 0.13 }
fn d_kappa() -> f64 { 0.10 }

impl Default for MaterialParams {
    fn default() -> Self {
        let mut m = MaterialParams {
            eps0: d_eps0(),
            c11: d_c11(),
            c12: d_c12(),
            c44: d_c44(),
            e_poly: d_e_poly(),
            nu_poly: d_nu_poly(),
            ms_over_mu0: d_ms_mu0(),
            ms2_over_mu0: d_ms2_mu0(),
            ku: d_ku(),
            kappa: d_kappa(),
            lambda_poly: 0.0,
            mu_poly: 0.0,
        };
        m.derive_lame();
        m
    }
}

impl MaterialParams {
    /// Fill the plane-strain Lame constants from `(E_poly, nu_poly)`.
    pub fn derive_lame(&mut self) {
        self.mu_poly = self.e_poly / (2.0 * (1.0 + self.nu_poly));
        self.lambda_poly =
            self.e_poly * self.nu_poly / ((1.0 + self.nu_poly) * (1.0 - 2.0 * self.nu_poly));
    }

    /// Saturation magnetization expressed as a field in Tesla.
    pub fn ms_tesla(&self) -> f64 {
        self.ms2_over_mu0 / self.ms_over_mu0
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.eps0 > 0.0 && self.eps0 < 0.2) {
            return Err(invalid("eps0", "must lie in (0, 0.2)"));
        }
        if self.c11 <= 0.0 || self.c44 <= 0.0 {
            return Err(invalid("C11", "cubic constants C11, C44 must be positive"));
        }
        if self.c11 - self.c12 <= 0.0 || self.c11 + self.c12 <= 0.0 {
            return Err(invalid("C12", "cubic stability requires |C12| < C11"));
        }
        if self.e_poly <= 0.0 {
            return Err(invalid("E_poly", "must be positive"));
        }
        if !(self.nu_poly > 0.0 && self.nu_poly < 0.5) {
            return Err(invalid("nu_poly", "must lie in (0, 0.5)"));
        }
        if self.ms_over_mu0 < 0.0 || self.ms2_over_mu0 < 0.0 {
            return Err(invalid("Ms_over_mu0", "magnetic couplings must be non-negative"));
        }
        if self.ku < 0.0 {
            return Err(invalid("Ku", "must be non-negative"));
        }
        if self.kappa < 0.0 {
            return Err(invalid("kappa", "must be non-negative"));
        }
        Ok(())
    }
}

// --- geometry ---------------------------------------------------------

/// Phase whose lattice is taken as the stress-free reference of the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferencePhase {
    /// Cubic austenite reference: both variants carry an eigenstrain.
    Austenite,
    /// One martensite variant is the reference (no pre-stress on the matrix).
    Martensite,
}

/// Macroscopic workpiece shape used for the long-range stray-field closure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Workpiece {
    /// Periodic continuation only; no macroscopic demagnetization.
    None,
    /// Circular workpiece: uniform demagnetizing factor 1/2.
    Circular,
}

/// Unit-cell geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryParams {
    /// Particle radius in units of the cell edge (cell is the unit square).
    #[serde(default = "d_radius")]
    pub particle_radius: f64,
    /// Rotation of the crystal lattice against the cell axes (radians).
    #[serde(default)]
    pub lattice_angle: f64,
    #[serde(default = "d_reference")]
    pub reference_phase: ReferencePhase,
    #[serde(default = "d_workpiece")]
    pub workpiece: Workpiece,
}

fn d_radius() -> f64 { 0.3 }
fn d_reference() -> ReferencePhase { ReferencePhase::Austenite }
fn d_workpiece() -> Workpiece { Workpiece::None }

impl Default for GeometryParams {
    fn default() -> Self {
        GeometryParams {
            particle_radius: d_radius(),
            lattice_angle: 0.0,
            reference_phase: d_reference(),
            workpiece: d_workpiece(),
        }
    }
}

impl GeometryParams {
    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.particle_radius > 0.0 && self.particle_radius < 0.5) {
            return Err(invalid("particle_radius", "must lie in (0, 0.5)"));
        }
        if !self.lattice_angle.is_finite() {
            return Err(invalid("lattice_angle", "must be finite"));
        }
        Ok(())
    }
}

// --- protocol ---------------------------------------------------------

/// Kind of external-field history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    /// 0 -> +peak -> 0 -> -peak -> 0 -> +peak along a fixed direction.
    Uniaxial,
    /// 0 -> +peak -> 0 horizontally, then 0 -> +peak vertically.
    Biaxial,
    /// Uniaxial path along a direction rotated by `angle_deg`.
    Rotated,
    /// Explicit `samples` list.
    Custom,
}

/// Declarative description of the loading protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolParams {
    #[serde(default = "d_kind")]
    pub kind: ProtocolKind,
    /// Peak field strength in Tesla.
    #[serde(default = "d_peak")]
    pub peak: f64,
    /// Number of increments per protocol leg.
    #[serde(default = "d_steps")]
    pub steps_per_leg: usize,
    /// Field direction against the x-axis for `rotated` (degrees).
    #[serde(default)]
    pub angle_deg: f64,
    /// Explicit `(t, Hx, Hy)` samples for `custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<(f64, f64, f64)>>,
}

fn d_kind() -> ProtocolKind { ProtocolKind::Uniaxial }
fn d_peak() -> f64 { 1.0 }
fn d_steps() -> usize { 50 }

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            kind: d_kind(),
            peak: d_peak(),
            steps_per_leg: d_steps(),
            angle_deg: 0.0,
            samples: None,
        }
    }
}

impl ProtocolParams {
    fn validate(&self) -> Result<(), ConfigError> {
        if self.kind == ProtocolKind::Custom {
            match &self.samples {
                Some(s) if s.len() >= 2 => {}
                _ => return Err(invalid("samples", "custom protocol needs at least 2 samples")),
            }
        } else {
            if self.peak < 0.0 || !self.peak.is_finite() {
                return Err(invalid("peak", "must be a non-negative field strength"));
            }
            if self.steps_per_leg == 0 {
                return Err(invalid("steps_per_leg", "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// One sample of the loading history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolSample {
    pub t: f64,
    pub h: Vector2<f64>,
}

/// Fully expanded, piecewise-linear loading history.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldProtocol {
    pub kind: ProtocolKind,
    pub samples: Vec<ProtocolSample>,
    /// Sample indices at which a leg ends (monotonically increasing).
    pub leg_ends: Vec<usize>,
    /// Length of the trailing closed field cycle in samples, if any.
    pub cycle_len: Option<usize>,
    /// Principal direction, used for signed plot abscissas.
    pub direction: Vector2<f64>,
}

impl FieldProtocol {
    /// Field at sample `i`.
    pub fn h(&self, i: usize) -> Vector2<f64> {
        self.samples[i].h
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Signed scalar field coordinate used as the plot abscissa.
    pub fn abscissa(&self, h: Vector2<f64>) -> f64 {
        match self.kind {
            // Legs never overlap, so `Hx - Hy` separates the two branches.
            ProtocolKind::Biaxial => h.x - h.y,
            _ => h.dot(&self.direction),
        }
    }

    /// Index of the leg (0-based) that produced sample `i`.
    pub fn leg_of(&self, i: usize) -> usize {
        self.leg_ends.iter().position(|&e| i <= e).unwrap_or(self.leg_ends.len() - 1)
    }
}

/// Expand a protocol description into its piecewise-linear samples.
///
/// Sample times are the integers `0..=n`; the evolution is rate independent,
/// so only the ordered field values matter.
pub fn build_protocol(params: &ProtocolParams) -> FieldProtocol {
    let dir = match params.kind {
        ProtocolKind::Rotated => {
            let a = params.angle_deg.to_radians();
            Vector2::new(a.cos(), a.sin())
        }
        _ => Vector2::new(1.0, 0.0),
    };
    match params.kind {
        ProtocolKind::Custom => {
            let samples: Vec<ProtocolSample> = params
                .samples
                .as_ref()
                .expect("validated custom protocol has samples")
                .iter()
                .map(|&(t, hx, hy)| ProtocolSample { t, h: Vector2::new(hx, hy) })
                .collect();
            let n = samples.len();
            let direction = samples
                .iter()
                .max_by(|a, b| a.h.norm().total_cmp(&b.h.norm()))
                .map(|s| if s.h.norm() > 0.0 { s.h.normalize() } else { dir })
                .unwrap_or(dir);
            FieldProtocol {
                kind: ProtocolKind::Custom,
                samples,
                leg_ends: vec![n - 1],
                cycle_len: None,
                direction,
            }
        }
        ProtocolKind::Biaxial => {
            let ex = Vector2::new(1.0, 0.0);
            let ey = Vector2::new(0.0, 1.0);
            let legs = [(ex, params.peak), (ex, 0.0), (ey, params.peak)];
            expand_legs(ProtocolKind::Biaxial, dir, params.steps_per_leg, &legs, None)
        }
        ProtocolKind::Uniaxial | ProtocolKind::Rotated => {
            let p = params.peak;
            let legs =
                [(dir, p), (dir, 0.0), (dir, -p), (dir, 0.0), (dir, p)];
            // The last four legs close one full cycle +peak -> ... -> +peak.
            let cycle = Some(4 * params.steps_per_leg);
            expand_legs(params.kind, dir, params.steps_per_leg, &legs, cycle)
        }
    }
}

/// Linearly interpolate legs that end at the given signed amplitudes.
fn expand_legs(
    kind: ProtocolKind,
    direction: Vector2<f64>,
    steps_per_leg: usize,
    legs: &[(Vector2<f64>, f64)],
    cycle_len: Option<usize>,
) -> FieldProtocol {
    let mut samples = vec![ProtocolSample { t: 0.0, h: Vector2::zeros() }];
    let mut leg_ends = Vec::with_capacity(legs.len());
    let mut h_prev = Vector2::zeros();
    for &(axis, amp) in legs {
        let h_end = axis * amp;
        for k in 1..=steps_per_leg {
            let f = k as f64 / steps_per_leg as f64;
            let t = samples.len() as f64;
            samples.push(ProtocolSample { t, h: h_prev + (h_end - h_prev) * f });
        }
        leg_ends.push(samples.len() - 1);
        h_prev = h_end;
    }
    FieldProtocol { kind, samples, leg_ends, cycle_len, direction }
}

// --- solver -----------------------------------------------------------

/// Discretization and minimization parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverParams {
    /// Boundary segments per closed curve (particle; cell gets 1/4 per side).
    #[serde(default = "d_nseg")]
    pub n_boundary_segments: usize,
    /// Kink regularization width, as a multiple of the mesh size h.
    #[serde(default = "d_delta_h")]
    pub delta_over_h: f64,
    /// Minimize over the macroscopic strain A (3 extra dofs).
    #[serde(default)]
    pub free_macro_strain: bool,
    /// Let the twin-boundary angle evolve (default: pinned at the
    /// twinning-compatible orientation).
    #[serde(default)]
    pub free_twin_angle: bool,
    /// Convergence threshold on the infinity norm of the descent gradient.
    #[serde(default = "d_grad_tol")]
    pub grad_tol: f64,
    /// Iteration cap per incremental minimization.
    #[serde(default = "d_max_iter")]
    pub max_iterations: usize,
    /// Central finite-difference step (per dof natural scale).
    #[serde(default = "d_fd_step")]
    pub fd_step: f64,
    /// Armijo sufficient-decrease constant.
    #[serde(default = "d_armijo_c1")]
    pub armijo_c1: f64,
    /// Armijo backtracking shrink factor.
    #[serde(default = "d_armijo_shrink")]
    pub armijo_shrink: f64,
    /// Energy-estimate tolerance factor: tol = factor * max(1, |E|).
    #[serde(default = "d_est_tol")]
    pub estimate_tol_factor: f64,
    /// Maximum backtracking episodes per protocol leg.
    #[serde(default = "d_bt_budget")]
    pub backtrack_budget_per_leg: usize,
    /// Try the restart-seed panel every this many steps (0 = never).
    #[serde(default)]
    pub restart_every: usize,
}

fn d_nseg() -> usize { 64 }
fn d_delta_h() -> f64 { 2.0 }
fn d_grad_tol() -> f64 { 1e-6 }
fn d_max_iter() -> usize { 500 }
fn d_fd_step() -> f64 { 1e-6 }
fn d_armijo_c1() -> f64 { 1e-4 }
fn d_armijo_shrink() -> f64 { 0.5 }
fn d_est_tol() -> f64 { 1e-3 }
fn d_bt_budget() -> usize { 3 }

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            n_boundary_segments: d_nseg(),
            delta_over_h: d_delta_h(),
            free_macro_strain: false,
            free_twin_angle: false,
            grad_tol: d_grad_tol(),
            max_iterations: d_max_iter(),
            fd_step: d_fd_step(),
            armijo_c1: d_armijo_c1(),
            armijo_shrink: d_armijo_shrink(),
            estimate_tol_factor: d_est_tol(),
            backtrack_budget_per_leg: d_bt_budget(),
            restart_every: 0,
        }
    }
}

impl SolverParams {
    fn validate(&self) -> Result<(), ConfigError> {
        if self.n_boundary_segments < 16 {
            return Err(invalid("n_boundary_segments", "must be at least 16"));
        }
        if self.delta_over_h <= 0.0 {
            return Err(invalid("delta_over_h", "must be positive"));
        }
        if self.grad_tol <= 0.0 {
            return Err(invalid("grad_tol", "must be positive"));
        }
        if self.fd_step <= 0.0 {
            return Err(invalid("fd_step", "must be positive"));
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return Err(invalid("armijo_shrink", "must lie in (0, 1)"));
        }
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0) {
            return Err(invalid("armijo_c1", "must lie in (0, 1)"));
        }
        if self.estimate_tol_factor <= 0.0 {
            return Err(invalid("estimate_tol_factor", "must be positive"));
        }
        Ok(())
    }
}

// --- top level --------------------------------------------------------

/// Complete simulation configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub material: MaterialParams,
    pub geometry: GeometryParams,
    pub protocol: ProtocolParams,
    pub solver: SolverParams,
}

impl SimulationConfig {
    /// Parse a configuration from TOML text; missing keys take defaults.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: SimulationConfig = toml::from_str(text)?;
        cfg.material.derive_lame();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a configuration file.
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Serialize to TOML; reloading the output reproduces `self` exactly.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Check parameter ranges; errors name the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.material.validate()?;
        self.geometry.validate()?;
        self.protocol.validate()?;
        self.solver.validate()?;
        Ok(())
    }

    /// Expanded loading history for this configuration.
    pub fn build_protocol(&self) -> FieldProtocol {
        build_protocol(&self.protocol)
    }
}
