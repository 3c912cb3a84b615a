//! Statistical mechanics on preparation space.
//!
//! Maximum-entropy inference over the eigenvalue probabilities of a measured
//! observable, Monte-Carlo integration over the invariant measure
//! `dmu = delta(sum p - 1) d^n p d^n phi`, the induced ensemble density
//! `w_0`, its Liouville evolution by backward characteristics, and the
//! reconstruction of the standard density matrix
//! `rho_ij = integral of w psi_i conj(psi_j) dmu`.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::core::{to_state_vector, HermitianObservable, Preparation, TWO_PI};
use crate::dynamics::{flow_endpoint, IntegratorSettings, ScalarVariable};
use crate::error::{Error, Result};

/// `n!` as a float.
pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Volume of the preparation space: `(2 pi)^n / (n-1)!`.
pub fn measure_volume(n: usize) -> f64 {
    TWO_PI.powi(n as i32) / factorial(n - 1)
}

/// Moment of the uniform simplex measure:
/// `integral p_1^{m_1} ... p_n^{m_n} delta(sum p - 1) d^n p
///  = prod_i m_i! / (sum_i m_i + n - 1)!`.
///
/// Computed exactly in integers for small orders and in log space above.
pub fn simplex_moment(n: usize, m: &[usize]) -> Result<f64> {
    if n == 0 || m.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.len(),
        });
    }
    let total: usize = m.iter().sum();
    if n + total <= 20 {
        let num: u128 = m
            .iter()
            .map(|&mi| (1..=mi as u128).product::<u128>())
            .product();
        let den: u128 = (1..=(total + n - 1) as u128).product();
        Ok(num as f64 / den as f64)
    } else {
        let log = m
            .iter()
            .map(|&mi| ln_gamma(mi as f64 + 1.0))
            .sum::<f64>()
            - ln_gamma((total + n) as f64);
        Ok(log.exp())
    }
}

/// Solution of the entropy-maximization problem for the constraint
/// `sum_i rho_i F_i = target` with `rho_i = e^{-beta F_i} / Z`.
#[derive(Debug, Clone)]
pub struct MaxEntSolution {
    pub beta: f64,
    pub z: f64,
    pub rho: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub target_mean: f64,
}

fn gibbs_weights(eigenvalues: &[f64], beta: f64) -> Vec<f64> {
    // shift the exponent so the largest weight is exactly 1
    let c = if beta >= 0.0 {
        eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    } else {
        eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    };
    eigenvalues.iter().map(|&f| (-beta * (f - c)).exp()).collect()
}

fn gibbs_mean(eigenvalues: &[f64], beta: f64) -> f64 {
    let w = gibbs_weights(eigenvalues, beta);
    let z: f64 = w.iter().sum();
    eigenvalues.iter().zip(&w).map(|(&f, &wi)| f * wi).sum::<f64>() / z
}

fn gibbs_variance(eigenvalues: &[f64], beta: f64) -> f64 {
    let w = gibbs_weights(eigenvalues, beta);
    let z: f64 = w.iter().sum();
    let mean = eigenvalues.iter().zip(&w).map(|(&f, &wi)| f * wi).sum::<f64>() / z;
    eigenvalues
        .iter()
        .zip(&w)
        .map(|(&f, &wi)| (f - mean) * (f - mean) * wi)
        .sum::<f64>()
        / z
}

/// Solve `-d(ln Z)/d(beta) = target` for `beta` by bracketing and
/// bisection with a Newton polish. The map is strictly decreasing in
/// `beta` (its derivative is minus the spectral variance).
pub fn solve_maxent(eigenvalues: &[f64], target_mean: f64, root_tol: f64) -> Result<MaxEntSolution> {
    if eigenvalues.is_empty() {
        return Err(Error::Validation("empty spectrum".into()));
    }
    let min = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = max - min;

    let finish = |beta: f64| -> MaxEntSolution {
        let w = gibbs_weights(eigenvalues, beta);
        let zs: f64 = w.iter().sum();
        let rho: Vec<f64> = w.iter().map(|wi| wi / zs).collect();
        let z: f64 = eigenvalues.iter().map(|&f| (-beta * f).exp()).sum();
        MaxEntSolution {
            beta,
            z,
            rho,
            eigenvalues: eigenvalues.to_vec(),
            target_mean,
        }
    };

    if spread == 0.0 {
        if target_mean == min {
            return Ok(finish(0.0));
        }
        return Err(Error::InfeasibleConstraint {
            target: target_mean,
            min,
            max,
        });
    }
    if target_mean == min || target_mean == max {
        return Err(Error::DivergentBeta {
            target: target_mean,
        });
    }
    if !(target_mean > min && target_mean < max) {
        return Err(Error::InfeasibleConstraint {
            target: target_mean,
            min,
            max,
        });
    }
    // the unconstrained maximizer: uniform rho at beta = 0
    if (gibbs_mean(eigenvalues, 0.0) - target_mean).abs() <= root_tol * spread {
        return Ok(finish(0.0));
    }

    let mut lo = -1.0;
    let mut hi = 1.0;
    let mut guard = 0;
    while gibbs_mean(eigenvalues, lo) < target_mean {
        lo *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::DivergentBeta {
                target: target_mean,
            });
        }
    }
    while gibbs_mean(eigenvalues, hi) > target_mean {
        hi *= 2.0;
        guard += 1;
        if guard > 4000 {
            return Err(Error::DivergentBeta {
                target: target_mean,
            });
        }
    }
    while hi - lo > root_tol {
        let mid = 0.5 * (lo + hi);
        if gibbs_mean(eigenvalues, mid) >= target_mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut beta = 0.5 * (lo + hi);
    for _ in 0..5 {
        let var = gibbs_variance(eigenvalues, beta);
        if var <= 0.0 {
            break;
        }
        let delta = (gibbs_mean(eigenvalues, beta) - target_mean) / var;
        beta += delta;
        if delta.abs() < 1e-16 * (1.0 + beta.abs()) {
            break;
        }
    }
    Ok(finish(beta))
}

/// Discrete entropy `-sum_i rho_i ln rho_i` of a max-entropy solution.
pub fn ensemble_entropy(solution: &MaxEntSolution) -> Result<f64> {
    if solution.rho.iter().any(|&r| r <= 0.0) {
        return Err(Error::Domain(
            "entropy requires strictly positive probabilities".into(),
        ));
    }
    Ok(-solution.rho.iter().map(|&r| r * r.ln()).sum::<f64>())
}

/// Deterministic sampler of the invariant measure: `p` uniform on the
/// simplex (normalized unit-exponential spacings), phases uniform on
/// `[0, 2 pi)^n`.
#[derive(Debug, Clone, Copy)]
pub struct MeasureSampler {
    pub n: usize,
    pub seed: u64,
}

const CHUNK: usize = 4096;

impl MeasureSampler {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, seed }
    }

    /// Total measure `(2 pi)^n / (n-1)!`.
    pub fn volume(&self) -> f64 {
        measure_volume(self.n)
    }

    fn rng_for_chunk(&self, chunk: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(chunk + 1);
        rng
    }

    /// One uniform sample of `dmu` from the given generator.
    pub fn sample_with(n: usize, rng: &mut impl Rng) -> Preparation {
        let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let sum: f64 = e.iter().sum();
        let p: Vec<f64> = e.iter().map(|x| x / sum).collect();
        let phi: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TWO_PI)).collect();
        Preparation::with_sum_tol(p, phi, 1e-9).expect("normalized by construction")
    }

    /// Uniform sample conditioned on all probabilities exceeding `margin`.
    pub fn sample_interior_with(n: usize, margin: f64, rng: &mut impl Rng) -> Preparation {
        loop {
            let prep = Self::sample_with(n, rng);
            if prep.is_interior(margin) {
                return prep;
            }
        }
    }
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub accepted: usize,
    pub rejected: usize,
}

struct ChunkSums {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    accepted: usize,
    rejected: usize,
}

/// Chunked accumulation of a vector-valued integrand. Each chunk draws from
/// an independent substream of (seed, chunk index) and chunk totals are
/// reduced in index order, so results do not depend on the worker count.
fn mc_accumulate<F>(
    sampler: &MeasureSampler,
    samples: usize,
    width: usize,
    eval: F,
) -> Result<(Vec<f64>, Vec<f64>, usize, usize)>
where
    F: Fn(&Preparation) -> Option<Vec<f64>> + Sync,
{
    if samples < 1000 {
        return Err(Error::Validation(format!(
            "at least 1000 samples required, got {samples}"
        )));
    }
    let chunks = samples.div_ceil(CHUNK);
    let partials: Vec<ChunkSums> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = sampler.rng_for_chunk(c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut sums = ChunkSums {
                sum: vec![0.0; width],
                sum_sq: vec![0.0; width],
                accepted: 0,
                rejected: 0,
            };
            for _ in 0..count {
                let prep = MeasureSampler::sample_with(sampler.n, &mut rng);
                match eval(&prep) {
                    Some(values) if values.iter().all(|v| v.is_finite()) => {
                        for (k, v) in values.iter().enumerate() {
                            sums.sum[k] += v;
                            sums.sum_sq[k] += v * v;
                        }
                        sums.accepted += 1;
                    }
                    _ => sums.rejected += 1,
                }
            }
            sums
        })
        .collect();

    let mut sum = vec![0.0; width];
    let mut sum_sq = vec![0.0; width];
    let mut accepted = 0;
    let mut rejected = 0;
    for part in partials {
        for k in 0..width {
            sum[k] += part.sum[k];
            sum_sq[k] += part.sum_sq[k];
        }
        accepted += part.accepted;
        rejected += part.rejected;
    }
    if rejected * 1000 > samples {
        return Err(Error::ExcessiveRejections {
            rejected,
            total: samples,
        });
    }
    if accepted == 0 {
        return Err(Error::Validation("all samples rejected".into()));
    }
    let v = sampler.volume();
    let nn = accepted as f64;
    let mut mean = vec![0.0; width];
    let mut std_err = vec![0.0; width];
    for k in 0..width {
        let m = sum[k] / nn;
        let var = ((sum_sq[k] / nn - m * m).max(0.0)) * nn / (nn - 1.0).max(1.0);
        mean[k] = v * m;
        std_err[k] = v * (var / nn).sqrt();
    }
    Ok((mean, std_err, accepted, rejected))
}

/// `integral g dmu` by uniform Monte Carlo: `V * mean(g)` with
/// `V = (2 pi)^n / (n-1)!`. Deterministic for a fixed seed and chunk
/// schedule; non-finite evaluations are rejected and counted.
pub fn mc_integrate<F>(g: F, sampler: &MeasureSampler, samples: usize) -> Result<McEstimate>
where
    F: Fn(&Preparation) -> f64 + Sync,
{
    let (mean, std_err, accepted, rejected) =
        mc_accumulate(sampler, samples, 1, |prep| Some(vec![g(prep)]))?;
    Ok(McEstimate {
        estimate: mean[0],
        std_error: std_err[0],
        accepted,
        rejected,
    })
}

/// A scalar ensemble density over preparation space, represented by a
/// pointwise evaluator. Densities may be signed (see [`w0_build`]).
#[derive(Clone)]
pub struct EnsembleDistribution {
    dim: usize,
    evaluator: Arc<dyn Fn(&Preparation) -> Result<f64> + Send + Sync>,
}

impl EnsembleDistribution {
    pub fn new(
        dim: usize,
        evaluator: impl Fn(&Preparation) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            evaluator: Arc::new(evaluator),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn evaluate(&self, prep: &Preparation) -> Result<f64> {
        if prep.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: prep.dim(),
            });
        }
        (self.evaluator)(prep)
    }
}

/// The measurement-result distribution at `t = 0` in the F-diagonal frame:
///
/// ```text
/// w_0(p) = n!/(2 pi)^n * [ (n+1) sum_i e^{-beta F_i} p_i / Z - 1 ]
/// ```
///
/// It is phase independent, integrates to 1, and reproduces
/// `integral w_0 p_i dmu = rho_i`. It may be negative on part of the
/// simplex for nonzero `beta`; the signed values are kept as-is.
pub fn w0_build(solution: &MaxEntSolution) -> EnsembleDistribution {
    let n = solution.eigenvalues.len();
    let beta = solution.beta;
    let eigenvalues = solution.eigenvalues.clone();
    let z: f64 = eigenvalues.iter().map(|&f| (-beta * f).exp()).sum();
    let prefactor = factorial(n) / TWO_PI.powi(n as i32);
    EnsembleDistribution::new(n, move |prep| {
        let gibbs: f64 = prep
            .p()
            .iter()
            .zip(&eigenvalues)
            .map(|(&pi, &f)| (-beta * f).exp() * pi)
            .sum();
        Ok(prefactor * ((n as f64 + 1.0) * gibbs / z - 1.0))
    })
}

/// Evolve an ensemble density by the method of characteristics:
/// `w(z, t) = w_0(flow_{-t}(z))`, the flow being the implicit-midpoint
/// integration of Hamilton's equations. Points whose backward trajectory
/// reaches the boundary margin evaluate to an error and are excluded
/// (and counted) by the Monte-Carlo layer.
pub fn liouville_evolve(
    w0: &EnsembleDistribution,
    hamiltonian: &ScalarVariable,
    t: f64,
    settings: IntegratorSettings,
) -> EnsembleDistribution {
    let w0 = w0.clone();
    let h = hamiltonian.clone();
    let dim = w0.dim();
    EnsembleDistribution::new(dim, move |prep| {
        let origin = flow_endpoint(&h, prep, -t, &settings)?;
        w0.evaluate(&origin)
    })
}

/// A density matrix reconstructed by Monte Carlo, with per-entry standard
/// errors.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub entries: DMatrix<Complex64>,
    pub std_error: DMatrix<f64>,
    pub samples: usize,
}

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.entries[(i, i)].re).sum()
    }

    pub fn trace_std_error(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.std_error[(i, i)].powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `tr(rho Q)` for a Hermitian observable.
    pub fn expectation(&self, q: &HermitianObservable) -> f64 {
        (&self.entries * q.entries()).trace().re
    }

    /// `<rho>(z) = <psi_z| rho |psi_z>`.
    pub fn pointwise_mean(&self, prep: &Preparation) -> f64 {
        let psi = to_state_vector(prep);
        (psi.amplitudes().adjoint() * &self.entries * psi.amplitudes())[(0, 0)].re
    }
}

/// Reconstruct `rho_ij = integral w sqrt(p_i p_j) e^{i (phi_i - phi_j)} dmu`
/// by Monte Carlo. Hermiticity is enforced by averaging with the conjugate
/// transpose; a trace off 1 by more than 5 standard errors is an
/// inconsistency error.
pub fn rho_reconstruct(
    w: &EnsembleDistribution,
    sampler: &MeasureSampler,
    samples: usize,
) -> Result<DensityMatrix> {
    let n = sampler.n;
    if w.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: w.dim(),
        });
    }
    let width = 2 * n * n;
    let (mean, std_err, _accepted, _rejected) = mc_accumulate(sampler, samples, width, |prep| {
        let wv = match w.evaluate(prep) {
            Ok(v) => v,
            Err(_) => return None,
        };
        let mut values = Vec::with_capacity(width);
        for i in 0..n {
            for j in 0..n {
                let amp = (prep.p()[i] * prep.p()[j]).sqrt();
                let phase = prep.phi()[i] - prep.phi()[j];
                values.push(wv * amp * phase.cos());
                values.push(wv * amp * phase.sin());
            }
        }
        Some(values)
    })?;

    let mut entries = DMatrix::zeros(n, n);
    let mut std_error = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let k = 2 * (i * n + j);
            entries[(i, j)] = Complex64::new(mean[k], mean[k + 1]);
            std_error[(i, j)] = (std_err[k].powi(2) + std_err[k + 1].powi(2)).sqrt();
        }
    }
    let entries = (&entries + entries.adjoint()) * Complex64::new(0.5, 0.0);
    let rho = DensityMatrix {
        entries,
        std_error,
        samples,
    };
    let trace = rho.trace();
    let trace_se = rho.trace_std_error().max(1e-15);
    if (trace - 1.0).abs() > 5.0 * trace_se {
        return Err(Error::TraceInconsistency {
            trace,
            sigmas: (trace - 1.0).abs() / trace_se,
        });
    }
    Ok(rho)
}

/// Per-point residuals of the bridge relation
/// `(2 pi)^n w = (n+1)! <rho> - n!`.
#[derive(Debug, Clone)]
pub struct BridgeReport {
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

/// Check the bridge relation between an ensemble density and a density
/// matrix describing the same ensemble at the same time.
pub fn bridge_check(
    w: &EnsembleDistribution,
    rho: &DensityMatrix,
    points: &[Preparation],
) -> Result<BridgeReport> {
    let n = w.dim();
    let phase_volume = TWO_PI.powi(n as i32);
    let mut residuals = Vec::with_capacity(points.len());
    let mut max_residual: f64 = 0.0;
    for prep in points {
        let lhs = phase_volume * w.evaluate(prep)?;
        let rhs = factorial(n + 1) * rho.pointwise_mean(prep) - factorial(n);
        let r = (lhs - rhs).abs();
        max_residual = max_residual.max(r);
        residuals.push(r);
    }
    Ok(BridgeReport {
        residuals,
        max_residual,
    })
}

/// Matrix logarithm of a positive-definite density matrix via
/// eigendecomposition; eigenvalues at or below `1e-14` are a domain error.
fn ln_density(rho: &DensityMatrix) -> Result<DMatrix<Complex64>> {
    let herm = (&rho.entries + rho.entries.adjoint()) * Complex64::new(0.5, 0.0);
    let se = nalgebra::SymmetricEigen::new(herm);
    let n = rho.dim();
    let mut log_diag = DMatrix::zeros(n, n);
    for (i, &lambda) in se.eigenvalues.iter().enumerate() {
        if lambda <= 1e-14 {
            return Err(Error::Domain(format!(
                "density matrix eigenvalue {lambda:e} is not positive; ln(rho) undefined"
            )));
        }
        log_diag[(i, i)] = Complex64::new(lambda.ln(), 0.0);
    }
    Ok(&se.eigenvectors * log_diag * se.eigenvectors.adjoint())
}

/// The ensemble entropy functional `S = -integral w <ln rho> dmu`.
pub fn entropy_functional(
    w: &EnsembleDistribution,
    rho: &DensityMatrix,
    sampler: &MeasureSampler,
    samples: usize,
) -> Result<McEstimate> {
    let log_rho = ln_density(rho)?;
    let inner = mc_integrate(
        |prep| {
            let wv = match w.evaluate(prep) {
                Ok(v) => v,
                Err(_) => return f64::NAN, // rejected and counted upstream
            };
            let psi = to_state_vector(prep);
            let mean_log =
                (psi.amplitudes().adjoint() * &log_rho * psi.amplitudes())[(0, 0)].re;
            wv * mean_log
        },
        sampler,
        samples,
    )?;
    Ok(McEstimate {
        estimate: -inner.estimate,
        std_error: inner.std_error,
        accepted: inner.accepted,
        rejected: inner.rejected,
    })
}

/// Total negative mass `integral max(-w, 0) dmu` of a signed density.
pub fn negative_mass(
    w: &EnsembleDistribution,
    sampler: &MeasureSampler,
    samples: usize,
) -> Result<McEstimate> {
    mc_integrate(
        |prep| match w.evaluate(prep) {
            Ok(v) => (-v).max(0.0),
            Err(_) => f64::NAN,
        },
        sampler,
        samples,
    )
}
