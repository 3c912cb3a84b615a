//! Changes of measurement frame in preparation-space coordinates.
//!
//! A unitary `u` acts on states as `psi'_i = sum_j conj(u_ji) psi_j`. With
//! the parametrization `u_ji = sqrt(omega_ij) e^{i beta_ij}` the same map
//! reads, purely in `(p, phi)` coordinates,
//!
//! ```text
//! p'_i   = sum_jk sqrt(omega_ij p_j) sqrt(omega_ik p_k)
//!          cos(phi_j - phi_k - beta_ij + beta_ik)
//! phi'_i = atan2( sum_j sqrt(omega_ij p_j) sin(phi_j - beta_ij),
//!                 sum_j sqrt(omega_ij p_j) cos(phi_j - beta_ij) )
//! ```
//!
//! The module also verifies numerically that these maps are canonical:
//! `M J M^T = J` for the finite-difference Jacobian `M`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::core::{phase_difference, wrap_phase, Preparation};
use crate::error::{Error, Result};

const UNITARITY_TOL: f64 = 1e-10;
const CONSTRAINT_TOL: f64 = 1e-8;

/// A change of measurement frame, stored both as a complex unitary and in
/// the `(omega, beta)` parametrization.
#[derive(Debug, Clone)]
pub struct UnitaryFrameMap {
    u: DMatrix<Complex64>,
    omega: DMatrix<f64>,
    beta: DMatrix<f64>,
    constraint_residual: f64,
}

/// The 2n-by-2n Jacobian of a frame map in the block layout
/// `(dp'/dp, dp'/dphi; dphi'/dp, dphi'/dphi)`.
#[derive(Debug, Clone)]
pub struct JacobianMatrix {
    pub m: DMatrix<f64>,
}

impl UnitaryFrameMap {
    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn unitary(&self) -> &DMatrix<Complex64> {
        &self.u
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    /// Max-abs residual of the unitarity constraints on `(omega, beta)`.
    pub fn constraint_residual(&self) -> f64 {
        self.constraint_residual
    }

    /// Map a preparation to its coordinates in the new frame.
    pub fn apply(&self, prep: &Preparation) -> Result<Preparation> {
        if prep.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: prep.dim(),
            });
        }
        let (p, phi) = self.apply_raw(prep.p(), prep.phi());
        Preparation::with_sum_tol(p, phi, 1e-10)
    }

    /// The coordinate map on raw `(p, phi)` arrays, without simplex
    /// validation. Defined for arbitrary nonnegative `p` and degree-1
    /// homogeneous in `p`; this is the map the ambient Jacobian
    /// differentiates.
    pub fn apply_raw(&self, p: &[f64], phi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let mut p_out = Vec::with_capacity(n);
        let mut phi_out = Vec::with_capacity(n);
        for i in 0..n {
            let mut p_new = 0.0;
            for j in 0..n {
                let aj = (self.omega[(i, j)] * p[j]).sqrt();
                for k in 0..n {
                    let ak = (self.omega[(i, k)] * p[k]).sqrt();
                    p_new += aj
                        * ak
                        * (phi[j] - phi[k] - self.beta[(i, j)] + self.beta[(i, k)]).cos();
                }
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..n {
                let a = (self.omega[(i, j)] * p[j]).sqrt();
                num += a * (phi[j] - self.beta[(i, j)]).sin();
                den += a * (phi[j] - self.beta[(i, j)]).cos();
            }
            p_out.push(p_new.max(0.0));
            phi_out.push(if num == 0.0 && den == 0.0 {
                0.0
            } else {
                wrap_phase(num.atan2(den))
            });
        }
        (p_out, phi_out)
    }

    /// Frame obtained by applying `self` first and `next` second.
    pub fn then(&self, next: &UnitaryFrameMap) -> Result<UnitaryFrameMap> {
        frame_from_unitary(&self.u * &next.u)
    }
}

fn unitarity_deviation(u: &DMatrix<Complex64>) -> f64 {
    let n = u.nrows();
    let id = DMatrix::<Complex64>::identity(n, n);
    let left = (u.adjoint() * u - &id).map(|z| z.norm()).max();
    let right = (u * u.adjoint() - &id).map(|z| z.norm()).max();
    left.max(right)
}

/// Max-abs residual of the `(omega, beta)` transcription of unitarity:
/// unit row/column sums of `omega` and vanishing cross sums.
pub fn constraint_residual(omega: &DMatrix<f64>, beta: &DMatrix<f64>) -> f64 {
    let n = omega.nrows();
    let mut residual: f64 = 0.0;
    for j in 0..n {
        let col: f64 = (0..n).map(|i| omega[(i, j)]).sum();
        let row: f64 = (0..n).map(|i| omega[(j, i)]).sum();
        residual = residual.max((col - 1.0).abs()).max((row - 1.0).abs());
    }
    for j in 0..n {
        for k in 0..n {
            if j == k {
                continue;
            }
            let mut c = 0.0;
            let mut s = 0.0;
            let mut ct = 0.0;
            let mut st = 0.0;
            for i in 0..n {
                let w = (omega[(i, j)] * omega[(i, k)]).sqrt();
                let arg = beta[(i, k)] - beta[(i, j)];
                c += w * arg.cos();
                s += w * arg.sin();
                let wt = (omega[(j, i)] * omega[(k, i)]).sqrt();
                let argt = beta[(k, i)] - beta[(j, i)];
                ct += wt * argt.cos();
                st += wt * argt.sin();
            }
            for v in [c, s, ct, st] {
                residual = residual.max(v.abs());
            }
        }
    }
    residual
}

/// Build a frame map from a unitary matrix, extracting
/// `omega_ij = |u_ji|^2` and `beta_ij = arg(u_ji)` and checking that the
/// `(omega, beta)` constraints transcribe unitarity.
pub fn frame_from_unitary(u: DMatrix<Complex64>) -> Result<UnitaryFrameMap> {
    if u.nrows() != u.ncols() {
        return Err(Error::DimensionMismatch {
            expected: u.nrows(),
            got: u.ncols(),
        });
    }
    let deviation = unitarity_deviation(&u);
    if deviation > UNITARITY_TOL {
        return Err(Error::NonUnitary { deviation });
    }
    let n = u.nrows();
    let mut omega = DMatrix::zeros(n, n);
    let mut beta = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let w = u[(j, i)].norm_sqr();
            omega[(i, j)] = w;
            // the phase of a vanishing entry is immaterial; fix it at 0
            beta[(i, j)] = if w == 0.0 {
                0.0
            } else {
                wrap_phase(u[(j, i)].arg())
            };
        }
    }
    let residual = constraint_residual(&omega, &beta);
    if residual > CONSTRAINT_TOL {
        return Err(Error::ConstraintInconsistency { residual });
    }
    Ok(UnitaryFrameMap {
        u,
        omega,
        beta,
        constraint_residual: residual,
    })
}

/// The identity frame.
pub fn identity_frame(n: usize) -> UnitaryFrameMap {
    frame_from_unitary(DMatrix::identity(n, n)).expect("identity is unitary")
}

/// Frame that relabels coordinates: `p'_i = p[perm[i]]`, `phi'_i = phi[perm[i]]`.
pub fn permutation_frame(perm: &[usize]) -> Result<UnitaryFrameMap> {
    let n = perm.len();
    let mut seen = vec![false; n];
    for &j in perm {
        if j >= n || seen[j] {
            return Err(Error::Validation(format!("invalid permutation {perm:?}")));
        }
        seen[j] = true;
    }
    let mut u = DMatrix::zeros(n, n);
    for (i, &j) in perm.iter().enumerate() {
        u[(j, i)] = Complex64::new(1.0, 0.0);
    }
    frame_from_unitary(u)
}

/// Haar-distributed random unitary: QR of a complex Gaussian matrix with
/// the R-diagonal phases absorbed into Q.
pub fn haar_random_unitary(n: usize, rng: &mut impl Rng) -> DMatrix<Complex64> {
    let g = DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            d / d.norm()
        };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn haar_random_frame(n: usize, rng: &mut impl Rng) -> Result<UnitaryFrameMap> {
    frame_from_unitary(haar_random_unitary(n, rng))
}

/// The constant symplectic form `J = (0, I; -I, 0)` on 2n coordinates.
pub fn symplectic_form(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

/// Central-difference Jacobian of an arbitrary coordinate map in the
/// ambient 2n coordinates (each `p_j` perturbed alone, no renormalization).
pub fn jacobian_of<F>(map: F, p: &[f64], phi: &[f64], step: f64) -> JacobianMatrix
where
    F: Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>),
{
    let n = p.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    let mut fill = |col: usize, fwd: (Vec<f64>, Vec<f64>), bwd: (Vec<f64>, Vec<f64>)| {
        for i in 0..n {
            m[(i, col)] = (fwd.0[i] - bwd.0[i]) / (2.0 * step);
            m[(n + i, col)] = phase_difference(fwd.1[i], bwd.1[i]) / (2.0 * step);
        }
    };
    for j in 0..n {
        let mut pf = p.to_vec();
        let mut pb = p.to_vec();
        pf[j] += step;
        pb[j] -= step;
        fill(j, map(&pf, phi), map(&pb, phi));
    }
    for j in 0..n {
        let mut ff = phi.to_vec();
        let mut fb = phi.to_vec();
        ff[j] += step;
        fb[j] -= step;
        fill(n + j, map(p, &ff), map(p, &fb));
    }
    JacobianMatrix { m }
}

/// Finite-difference Jacobian of a frame map at a preparation.
pub fn numeric_jacobian(
    frame: &UnitaryFrameMap,
    prep: &Preparation,
    step: f64,
) -> Result<JacobianMatrix> {
    prep.require_interior(step)?;
    if !(1e-7..=1e-4).contains(&step) {
        return Err(Error::Validation(format!(
            "finite-difference step {step:e} outside [1e-7, 1e-4]"
        )));
    }
    let (p_img, _) = frame.apply_raw(prep.p(), prep.phi());
    if let Some((i, &v)) = p_img.iter().enumerate().find(|(_, &v)| v <= 2.0 * step) {
        return Err(Error::SingularChart { index: i, value: v });
    }
    Ok(jacobian_of(
        |p, phi| frame.apply_raw(p, phi),
        prep.p(),
        prep.phi(),
        step,
    ))
}

/// Max-abs entry of `M J M^T - J` for an arbitrary Jacobian.
pub fn symplectic_defect_of(jac: &JacobianMatrix) -> f64 {
    let n = jac.m.nrows() / 2;
    let j = symplectic_form(n);
    (&jac.m * &j * jac.m.transpose() - j).abs().max()
}

/// Max-abs entry of `M J M^T - J` for the frame map's finite-difference
/// Jacobian at `prep`.
pub fn symplectic_defect(frame: &UnitaryFrameMap, prep: &Preparation, step: f64) -> Result<f64> {
    Ok(symplectic_defect_of(&numeric_jacobian(frame, prep, step)?))
}
