//! Domain types and conversions between preparation-space coordinates
//! `(p_i, phi_i)` and Hilbert-space state vectors `psi_i = sqrt(p_i) e^{i phi_i}`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Default elementwise validation tolerance.
pub const DEFAULT_VALIDATION_TOL: f64 = 1e-12;

/// Numerical tolerances used throughout the crate.
#[derive(Debug, Clone, Copy)]
pub struct ToleranceConfig {
    pub validation_tol: f64,
    pub gradient_fd_step: f64,
    pub ode_step: f64,
    pub mc_rel_tol: f64,
    pub root_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            validation_tol: DEFAULT_VALIDATION_TOL,
            gradient_fd_step: 1e-6,
            ode_step: 1e-3,
            mc_rel_tol: 1e-2,
            root_tol: 1e-12,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("validation_tol", self.validation_tol),
            ("gradient_fd_step", self.gradient_fd_step),
            ("ode_step", self.ode_step),
            ("mc_rel_tol", self.mc_rel_tol),
            ("root_tol", self.root_tol),
        ];
        for (name, v) in fields {
            if !(v > 0.0) {
                return Err(Error::Validation(format!(
                    "tolerance {name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Reduce an angle to `[0, 2*pi)`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TWO_PI);
    // rem_euclid can return exactly 2*pi after rounding for tiny negatives
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

/// Signed difference of two angles, wrapped to `(-pi, pi]`.
pub fn phase_difference(a: f64, b: f64) -> f64 {
    let d = wrap_phase(a - b);
    if d > std::f64::consts::PI {
        d - TWO_PI
    } else {
        d
    }
}

/// A point of the preparation space: simplex probabilities plus torus phases.
///
/// Components whose probability falls below the validation tolerance carry a
/// degenerate-phase flag: the phase there is conventionally zero and is
/// excluded from gradient-based operations.
#[derive(Debug, Clone, PartialEq)]
pub struct Preparation {
    p: Vec<f64>,
    phi: Vec<f64>,
    degenerate: Vec<bool>,
}

impl Preparation {
    /// Validate and construct, with the default sum tolerance of `1e-12`.
    pub fn new(p: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        Self::with_sum_tol(p, phi, DEFAULT_VALIDATION_TOL)
    }

    /// Validate and construct with an explicit tolerance on `|sum(p) - 1|`.
    pub fn with_sum_tol(p: Vec<f64>, phi: Vec<f64>, sum_tol: f64) -> Result<Self> {
        if p.len() != phi.len() {
            return Err(Error::DimensionMismatch {
                expected: p.len(),
                got: phi.len(),
            });
        }
        if p.len() < 2 {
            return Err(Error::Validation(format!(
                "dimension must be at least 2, got {}",
                p.len()
            )));
        }
        if let Some((i, &v)) = p.iter().enumerate().find(|(_, &v)| !(v >= 0.0)) {
            return Err(Error::Validation(format!(
                "probability p[{i}] = {v} is negative or not finite"
            )));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > sum_tol {
            return Err(Error::Validation(format!(
                "probabilities sum to {sum}, deviating from 1 by {:e} (tolerance {sum_tol:e})",
                (sum - 1.0).abs()
            )));
        }
        let degenerate: Vec<bool> = p.iter().map(|&pi| pi < DEFAULT_VALIDATION_TOL).collect();
        let phi = phi
            .iter()
            .zip(&degenerate)
            .map(|(&x, &d)| if d { 0.0 } else { wrap_phase(x) })
            .collect();
        Ok(Self { p, phi, degenerate })
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn degenerate(&self) -> &[bool] {
        &self.degenerate
    }

    pub fn has_degenerate_phase(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }

    /// True when every probability exceeds `margin`.
    pub fn is_interior(&self, margin: f64) -> bool {
        self.p.iter().all(|&pi| pi > margin)
    }

    /// Error out unless all probabilities exceed `margin`.
    pub fn require_interior(&self, margin: f64) -> Result<()> {
        match self
            .p
            .iter()
            .enumerate()
            .find(|(_, &pi)| pi <= margin)
        {
            Some((i, &v)) => Err(Error::SingularChart { index: i, value: v }),
            None => Ok(()),
        }
    }
}

/// A normalized complex state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: DVector<Complex64>,
}

impl StateVector {
    pub fn new(amplitudes: DVector<Complex64>) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(Error::Validation(format!(
                "dimension must be at least 2, got {}",
                amplitudes.len()
            )));
        }
        let norm_sq: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > DEFAULT_VALIDATION_TOL {
            return Err(Error::Validation(format!(
                "state vector norm^2 = {norm_sq} deviates from 1 by {:e}",
                (norm_sq - 1.0).abs()
            )));
        }
        Ok(Self { amplitudes })
    }

    /// Construct from arbitrary nonzero amplitudes by normalizing.
    pub fn normalized(amplitudes: DVector<Complex64>) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Validation("cannot normalize the zero vector".into()));
        }
        Self::new(amplitudes.map(|a| a / norm))
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    /// Inner product `<self|other>` (conjugate-linear in `self`).
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// An n-by-n Hermitian matrix defining a scalar dynamical variable.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianObservable {
    entries: DMatrix<Complex64>,
    label: String,
}

impl HermitianObservable {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Diagonal observable with the given real eigenvalues.
    pub fn diagonal(values: &[f64], label: &str) -> Self {
        let n = values.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        Self {
            entries: m,
            label: label.to_string(),
        }
    }

    /// Eigendecomposition; eigenvalues are real by Hermiticity.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<Complex64>) {
        let se = nalgebra::SymmetricEigen::new(self.entries.clone());
        (se.eigenvalues.iter().copied().collect(), se.eigenvectors)
    }
}

/// Check Hermiticity elementwise and wrap the matrix into a typed observable.
pub fn validate_hermitian(
    m: DMatrix<Complex64>,
    tol: f64,
    label: &str,
) -> Result<HermitianObservable> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let mut max_dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            max_dev = max_dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    if max_dev > tol {
        return Err(Error::NonHermitian {
            max_deviation: max_dev,
        });
    }
    Ok(HermitianObservable {
        entries: m,
        label: label.to_string(),
    })
}

/// Coordinates of a state vector: `p_i = |psi_i|^2`, `phi_i = arg(psi_i)`.
///
/// Components with `p_i` below `validation_tol` get phase zero and a
/// degenerate-phase flag.
pub fn from_state_vector(psi: &StateVector, validation_tol: f64) -> Preparation {
    let n = psi.dim();
    let mut p = Vec::with_capacity(n);
    let mut phi = Vec::with_capacity(n);
    let mut degenerate = Vec::with_capacity(n);
    for a in psi.amplitudes().iter() {
        let pi = a.norm_sqr();
        let dg = pi < validation_tol;
        p.push(pi);
        phi.push(if dg { 0.0 } else { wrap_phase(a.arg()) });
        degenerate.push(dg);
    }
    Preparation { p, phi, degenerate }
}

/// State vector of a preparation: `psi_i = sqrt(p_i) e^{i phi_i}`.
pub fn to_state_vector(prep: &Preparation) -> StateVector {
    let amplitudes = DVector::from_iterator(
        prep.dim(),
        prep.p()
            .iter()
            .zip(prep.phi())
            .map(|(&pi, &fi)| Complex64::from_polar(pi.sqrt(), fi)),
    );
    // sum(p) = 1 forces normalization; renormalize to absorb rounding
    StateVector::normalized(amplitudes).expect("valid preparation yields a nonzero vector")
}
