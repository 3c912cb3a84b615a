//! Scalar dynamical variables and Hamilton-like evolution in `(p, phi)`
//! coordinates.
//!
//! A Hermitian matrix `F` defines the scalar
//! `f(p, phi, t) = sum_ij F_ij sqrt(p_i p_j) e^{-i (phi_i - phi_j)}`,
//! which is the Hilbert-space expectation `<psi|F|psi>`. The Hamiltonian
//! case generates the flow
//!
//! ```text
//! dp_i/dt = dH/dphi_i,     dphi_i/dt = -dH/dp_i,
//! ```
//!
//! which is the Schroedinger equation in these coordinates (hbar = 1).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::core::{HermitianObservable, Preparation};
use crate::error::{Error, Result};

const REALITY_TOL: f64 = 1e-12;

enum Matrix {
    Constant(HermitianObservable),
    TimeDependent {
        dim: usize,
        f: Arc<dyn Fn(f64) -> HermitianObservable + Send + Sync>,
    },
}

impl Clone for Matrix {
    fn clone(&self) -> Self {
        match self {
            Matrix::Constant(o) => Matrix::Constant(o.clone()),
            Matrix::TimeDependent { dim, f } => Matrix::TimeDependent {
                dim: *dim,
                f: f.clone(),
            },
        }
    }
}

/// A scalar dynamical variable on preparation space, backed by a Hermitian
/// observable that may carry explicit time dependence.
#[derive(Clone)]
pub struct ScalarVariable {
    matrix: Matrix,
}

impl ScalarVariable {
    pub fn constant(observable: HermitianObservable) -> Self {
        Self {
            matrix: Matrix::Constant(observable),
        }
    }

    pub fn time_dependent(
        dim: usize,
        f: impl Fn(f64) -> HermitianObservable + Send + Sync + 'static,
    ) -> Self {
        Self {
            matrix: Matrix::TimeDependent { dim, f: Arc::new(f) },
        }
    }

    pub fn dim(&self) -> usize {
        match &self.matrix {
            Matrix::Constant(o) => o.dim(),
            Matrix::TimeDependent { dim, .. } => *dim,
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self.matrix, Matrix::TimeDependent { .. })
    }

    pub fn observable_at(&self, t: f64) -> HermitianObservable {
        match &self.matrix {
            Matrix::Constant(o) => o.clone(),
            Matrix::TimeDependent { f, .. } => f(t),
        }
    }
}

fn check_dims(var: &ScalarVariable, prep: &Preparation) -> Result<()> {
    if var.dim() != prep.dim() {
        return Err(Error::DimensionMismatch {
            expected: var.dim(),
            got: prep.dim(),
        });
    }
    Ok(())
}

fn evaluate_matrix(f: &DMatrix<Complex64>, p: &[f64], phi: &[f64]) -> f64 {
    let n = p.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += f[(i, j)]
                * (p[i] * p[j]).sqrt()
                * Complex64::from_polar(1.0, -(phi[i] - phi[j]));
        }
    }
    debug_assert!(
        acc.im.abs() < REALITY_TOL * (1.0 + acc.re.abs()),
        "imaginary residue {}",
        acc.im
    );
    acc.re
}

/// `f(p, phi, t)`; Hermiticity forces a real value.
pub fn evaluate(var: &ScalarVariable, prep: &Preparation, t: f64) -> Result<f64> {
    check_dims(var, prep)?;
    let obs = var.observable_at(t);
    Ok(evaluate_matrix(obs.entries(), prep.p(), prep.phi()))
}

/// Gradient of a scalar variable with respect to `(p, phi)`.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub d_dp: Vec<f64>,
    pub d_dphi: Vec<f64>,
}

fn gradient_matrix(f: &DMatrix<Complex64>, p: &[f64], phi: &[f64]) -> Gradient {
    let n = p.len();
    let mut d_dp = Vec::with_capacity(n);
    let mut d_dphi = Vec::with_capacity(n);
    for i in 0..n {
        // z = sum_k F_ik sqrt(p_i p_k) e^{-i phi_ik}
        let mut z = Complex64::new(0.0, 0.0);
        for k in 0..n {
            z += f[(i, k)]
                * (p[i] * p[k]).sqrt()
                * Complex64::from_polar(1.0, -(phi[i] - phi[k]));
        }
        // dF/dp_i = Re z / p_i ; dF/dphi_i = 2 Im z
        d_dp.push(z.re / p[i]);
        d_dphi.push(2.0 * z.im);
    }
    Gradient { d_dp, d_dphi }
}

/// Closed-form gradient `dF/dp_i = Re[sum_k F_ik sqrt(p_k/p_i) e^{-i phi_ik}]`,
/// `dF/dphi_i = 2 Im[sum_k F_ik sqrt(p_i p_k) e^{-i phi_ik}]`.
pub fn hamiltonian_gradient(var: &ScalarVariable, prep: &Preparation, t: f64) -> Result<Gradient> {
    check_dims(var, prep)?;
    prep.require_interior(crate::core::DEFAULT_VALIDATION_TOL)?;
    let obs = var.observable_at(t);
    Ok(gradient_matrix(obs.entries(), prep.p(), prep.phi()))
}

/// Time derivative of the coordinates under Hamilton's equations.
#[derive(Debug, Clone)]
pub struct PhaseSpaceRate {
    pub dp_dt: Vec<f64>,
    pub dphi_dt: Vec<f64>,
}

/// `dp_i/dt = dH/dphi_i`, `dphi_i/dt = -dH/dp_i`.
pub fn hamilton_rhs(
    hamiltonian: &ScalarVariable,
    prep: &Preparation,
    t: f64,
) -> Result<PhaseSpaceRate> {
    let g = hamiltonian_gradient(hamiltonian, prep, t)?;
    Ok(PhaseSpaceRate {
        dp_dt: g.d_dphi,
        dphi_dt: g.d_dp.iter().map(|x| -x).collect(),
    })
}

/// Integration method for [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Symplectic; the default. Preserves the phase-space volume form.
    ImplicitMidpoint,
    /// Classical fourth-order Runge-Kutta, for cross-checks.
    Rk4,
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorSettings {
    pub method: Method,
    pub step: f64,
    /// Minimum distance from the simplex boundary; the run aborts below it.
    pub boundary_margin: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            method: Method::ImplicitMidpoint,
            step: 1e-3,
            boundary_margin: 1e-8,
            newton_tol: 1e-12,
            newton_max_iter: 50,
        }
    }
}

/// A sampled evolution of a preparation, with the energy at each sample.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Preparation>,
    pub energy: Vec<f64>,
}

impl Trajectory {
    pub fn final_point(&self) -> &Preparation {
        self.points.last().expect("trajectory is never empty")
    }

    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energy[0];
        self.energy
            .iter()
            .map(|e| (e - e0).abs())
            .fold(0.0, f64::max)
    }

    pub fn norm_drift(&self) -> f64 {
        self.points
            .iter()
            .map(|pt| (pt.p().iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn rhs_raw(h: &ScalarVariable, p: &[f64], phi: &[f64], t: f64, margin: f64) -> Result<DVector<f64>> {
    let n = p.len();
    if let Some((i, &v)) = p.iter().enumerate().find(|(_, &v)| v <= margin) {
        return Err(Error::SingularChart { index: i, value: v });
    }
    let obs = h.observable_at(t);
    let g = gradient_matrix(obs.entries(), p, phi);
    let mut out = DVector::zeros(2 * n);
    for i in 0..n {
        out[i] = g.d_dphi[i];
        out[n + i] = -g.d_dp[i];
    }
    Ok(out)
}

fn state_vecs(z: &DVector<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    (z.as_slice()[..n].to_vec(), z.as_slice()[n..].to_vec())
}

/// One implicit-midpoint step solved by Newton iteration with a
/// finite-difference Jacobian of the midpoint residual.
fn midpoint_step(
    h: &ScalarVariable,
    z0: &DVector<f64>,
    t: f64,
    dt: f64,
    settings: &IntegratorSettings,
    depth: usize,
) -> Result<DVector<f64>> {
    let n = z0.len() / 2;
    let t_mid = t + dt / 2.0;
    let margin = settings.boundary_margin;

    let f_at = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let (p, phi) = state_vecs(z, n);
        rhs_raw(h, &p, &phi, t_mid, margin)
    };

    // explicit Euler predictor
    let f0 = f_at(z0)?;
    let mut z = z0 + &f0 * dt;

    let residual = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let mid = (z0 + z) * 0.5;
        Ok(z - z0 - f_at(&mid)? * dt)
    };

    let mut converged = false;
    let mut last_res = f64::INFINITY;
    for _ in 0..settings.newton_max_iter {
        let r = residual(&z)?;
        last_res = r.amax();
        if last_res < settings.newton_tol {
            converged = true;
            break;
        }
        let fd = 1e-7;
        let mut jac = DMatrix::zeros(2 * n, 2 * n);
        for col in 0..2 * n {
            let mut zf = z.clone();
            let mut zb = z.clone();
            zf[col] += fd;
            zb[col] -= fd;
            let rf = residual(&zf)?;
            let rb = residual(&zb)?;
            for row in 0..2 * n {
                jac[(row, col)] = (rf[row] - rb[row]) / (2.0 * fd);
            }
        }
        let lu = jac.lu();
        match lu.solve(&r) {
            Some(delta) => z -= delta,
            None => break,
        }
    }
    if converged {
        return Ok(z);
    }
    // fall back to two half steps before giving up
    if depth < 3 {
        let half = midpoint_step(h, z0, t, dt / 2.0, settings, depth + 1)?;
        return midpoint_step(h, &half, t + dt / 2.0, dt / 2.0, settings, depth + 1);
    }
    Err(Error::SolverNonConvergence {
        residual: last_res,
        iterations: settings.newton_max_iter,
    })
}

fn rk4_step(
    h: &ScalarVariable,
    z0: &DVector<f64>,
    t: f64,
    dt: f64,
    margin: f64,
) -> Result<DVector<f64>> {
    let n = z0.len() / 2;
    let eval = |z: &DVector<f64>, tt: f64| -> Result<DVector<f64>> {
        let (p, phi) = state_vecs(z, n);
        rhs_raw(h, &p, &phi, tt, margin)
    };
    let k1 = eval(z0, t)?;
    let k2 = eval(&(z0 + &k1 * (dt / 2.0)), t + dt / 2.0)?;
    let k3 = eval(&(z0 + &k2 * (dt / 2.0)), t + dt / 2.0)?;
    let k4 = eval(&(z0 + &k3 * dt), t + dt)?;
    Ok(z0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

fn advance(
    h: &ScalarVariable,
    z: &DVector<f64>,
    t: f64,
    dt: f64,
    settings: &IntegratorSettings,
) -> Result<DVector<f64>> {
    match settings.method {
        Method::ImplicitMidpoint => midpoint_step(h, z, t, dt, settings, 0),
        Method::Rk4 => rk4_step(h, z, t, dt, settings.boundary_margin),
    }
}

/// Endpoint of the Hamiltonian flow after time `t` (negative `t` flows
/// backward). Used by Liouville evolution, which only needs endpoints.
pub fn flow_endpoint(
    h: &ScalarVariable,
    init: &Preparation,
    t: f64,
    settings: &IntegratorSettings,
) -> Result<Preparation> {
    check_dims(h, init)?;
    let n = init.dim();
    let mut z = DVector::zeros(2 * n);
    for i in 0..n {
        z[i] = init.p()[i];
        z[n + i] = init.phi()[i];
    }
    let steps = (t.abs() / settings.step).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    let mut now = 0.0;
    for k in 0..steps {
        z = advance(h, &z, now, dt, settings).map_err(|e| match e {
            Error::SingularChart { .. } => Error::BoundaryProximity { t_last: now },
            other => other,
        })?;
        now = (k + 1) as f64 * dt;
    }
    let (p, phi) = state_vecs(&z, n);
    Preparation::with_sum_tol(p, phi, 1e-9)
}

/// Integrate Hamilton's equations from `init` to `t_final`, sampling at
/// every step.
pub fn evolve(
    h: &ScalarVariable,
    init: &Preparation,
    t_final: f64,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    check_dims(h, init)?;
    if t_final <= 0.0 {
        return Err(Error::Validation(format!(
            "t_final must be positive, got {t_final}"
        )));
    }
    init.require_interior(settings.boundary_margin)?;
    let n = init.dim();
    let mut z = DVector::zeros(2 * n);
    for i in 0..n {
        z[i] = init.p()[i];
        z[n + i] = init.phi()[i];
    }
    let steps = (t_final / settings.step).round().max(1.0) as usize;
    let dt = t_final / steps as f64;

    let mut times = Vec::with_capacity(steps + 1);
    let mut points = Vec::with_capacity(steps + 1);
    let mut energy = Vec::with_capacity(steps + 1);
    let record = |z: &DVector<f64>, t: f64| -> Result<(Preparation, f64)> {
        let (p, phi) = state_vecs(z, n);
        let prep = Preparation::with_sum_tol(p, phi, 1e-9)?;
        let e = evaluate(h, &prep, t)?;
        Ok((prep, e))
    };
    let (prep0, e0) = record(&z, 0.0)?;
    times.push(0.0);
    points.push(prep0);
    energy.push(e0);

    for k in 0..steps {
        let t = k as f64 * dt;
        z = advance(h, &z, t, dt, settings).map_err(|e| match e {
            Error::SingularChart { .. } => Error::BoundaryProximity { t_last: t },
            other => other,
        })?;
        let t_next = (k + 1) as f64 * dt;
        let (prep, e) = record(&z, t_next)?;
        times.push(t_next);
        points.push(prep);
        energy.push(e);
    }
    Ok(Trajectory {
        times,
        points,
        energy,
    })
}

/// Poisson bracket `{f, g} = sum_i (df/dp_i dg/dphi_i - df/dphi_i dg/dp_i)`.
pub fn poisson_bracket(
    f: &ScalarVariable,
    g: &ScalarVariable,
    prep: &Preparation,
    t: f64,
) -> Result<f64> {
    let gf = hamiltonian_gradient(f, prep, t)?;
    let gg = hamiltonian_gradient(g, prep, t)?;
    Ok((0..prep.dim())
        .map(|i| gf.d_dp[i] * gg.d_dphi[i] - gf.d_dphi[i] * gg.d_dp[i])
        .sum())
}

/// Total time derivative `df/dt = partial f / partial t + {f, H}`.
///
/// The explicit part is zero for constant observables and is obtained by a
/// central difference in `t` (step `1e-6`) for time-dependent ones.
pub fn total_time_derivative(
    f: &ScalarVariable,
    hamiltonian: &ScalarVariable,
    prep: &Preparation,
    t: f64,
) -> Result<f64> {
    let explicit = if f.is_time_dependent() {
        let dt = 1e-6;
        (evaluate(f, prep, t + dt)? - evaluate(f, prep, t - dt)?) / (2.0 * dt)
    } else {
        0.0
    };
    Ok(explicit + poisson_bracket(f, hamiltonian, prep, t)?)
}

/// `exp(-i H t) psi0` by eigendecomposition: the standard-formulation
/// oracle for time-independent Hamiltonians.
pub fn schrodinger_oracle(
    hamiltonian: &HermitianObservable,
    psi0: &crate::core::StateVector,
    t: f64,
) -> crate::core::StateVector {
    let (vals, vecs) = hamiltonian.eigen();
    let coeffs = vecs.adjoint() * psi0.amplitudes();
    let evolved = DVector::from_iterator(
        vals.len(),
        coeffs
            .iter()
            .zip(&vals)
            .map(|(c, &e)| c * Complex64::from_polar(1.0, -e * t)),
    );
    crate::core::StateVector::normalized(vecs * evolved).expect("unitary evolution preserves norm")
}
