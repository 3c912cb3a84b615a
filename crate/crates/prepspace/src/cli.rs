//! Config ingestion, deterministic experiment execution, verification
//! suites, and machine-readable reports for the `prepspace` binary.
//!
//! All randomness flows from the single config seed through named
//! substreams (frame, init, mc), so one seed reproduces a whole run.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::core::{
    phase_difference, to_state_vector, validate_hermitian, HermitianObservable, Preparation,
    TWO_PI,
};
use crate::dynamics::{
    evolve, poisson_bracket, schrodinger_oracle, IntegratorSettings, Method, ScalarVariable,
};
use crate::error::{Error, Result};
use crate::geometry::{
    verify_metric_frame_invariance, verify_metric_matches_angle, TangentDisplacement,
};
use crate::statmech::{
    bridge_check, ensemble_entropy, entropy_functional, liouville_evolve, mc_integrate,
    negative_mass, rho_reconstruct, simplex_moment, solve_maxent, w0_build, DensityMatrix,
    MeasureSampler,
};
use crate::transform::{
    haar_random_frame, jacobian_of, numeric_jacobian, symplectic_defect_of,
};

pub const REPORT_SCHEMA: &str = "prepspace-report/1";

// named substreams derived from the config seed
const STREAM_FRAME: u64 = 0x6672616d65; // "frame"
const STREAM_INIT: u64 = 0x696e6974; // "init"
const STREAM_MC: u64 = 0x6d63; // "mc"

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sampler seed for the mc substream; the sampler derives its own
/// per-chunk streams, so it gets a fresh seed rather than a stream id.
fn mc_seed(seed: u64) -> u64 {
    substream(seed, STREAM_MC).random()
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub hamiltonian: MatrixSpec,
    #[serde(default)]
    pub observable: Option<MatrixSpec>,
    #[serde(default)]
    pub initial: Option<PreparationSpec>,
    #[serde(default)]
    pub integrator: Option<IntegratorSpec>,
    #[serde(default)]
    pub monte_carlo: Option<McSpec>,
    #[serde(default)]
    pub seed: u64,
}

/// Complex numbers appear as `[re, im]` pairs; matrices are row-major.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MatrixSpec {
    Dense { entries: Vec<Vec<[f64; 2]>> },
    Diagonal { values: Vec<f64> },
    RandomHermitian {},
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PreparationSpec {
    Explicit { p: Vec<f64>, phi: Vec<f64> },
    RandomInterior {
        #[serde(default = "default_margin")]
        margin: f64,
    },
}

fn default_margin() -> f64 {
    0.01
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_boundary_margin")]
    pub boundary_margin: f64,
}

fn default_method() -> String {
    "implicit-midpoint".into()
}
fn default_step() -> f64 {
    1e-3
}
fn default_boundary_margin() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    100_000
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
        Error::Config(format!(
            "{}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    if !(2..=16).contains(&config.dimension) {
        return Err(Error::Config(format!(
            "dimension must be in [2, 16], got {}",
            config.dimension
        )));
    }
    Ok(config)
}

fn random_hermitian(n: usize, rng: &mut impl Rng) -> HermitianObservable {
    let a = DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let h = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
    // normalize the spectral radius so default tolerances are meaningful
    let spectral = nalgebra::SymmetricEigen::new(h.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, &e| m.max(e.abs()));
    let h = if spectral > 0.0 {
        h / Complex64::new(spectral, 0.0)
    } else {
        h
    };
    validate_hermitian(h, 1e-12, "random-hermitian").expect("symmetrized matrix is Hermitian")
}

pub fn build_observable(
    spec: &MatrixSpec,
    n: usize,
    seed: u64,
    label: &str,
) -> Result<HermitianObservable> {
    match spec {
        MatrixSpec::Dense { entries } => {
            if entries.len() != n || entries.iter().any(|row| row.len() != n) {
                return Err(Error::Config(format!(
                    "{label}: dense matrix must be {n}x{n}"
                )));
            }
            let m = DMatrix::from_fn(n, n, |i, j| {
                Complex64::new(entries[i][j][0], entries[i][j][1])
            });
            validate_hermitian(m, 1e-12, label)
        }
        MatrixSpec::Diagonal { values } => {
            if values.len() != n {
                return Err(Error::Config(format!(
                    "{label}: diagonal needs {n} values, got {}",
                    values.len()
                )));
            }
            Ok(HermitianObservable::diagonal(values, label))
        }
        MatrixSpec::RandomHermitian {} => {
            Ok(random_hermitian(n, &mut substream(seed, STREAM_FRAME)))
        }
    }
}

pub fn build_initial(spec: &Option<PreparationSpec>, n: usize, seed: u64) -> Result<Preparation> {
    match spec {
        Some(PreparationSpec::Explicit { p, phi }) => Preparation::new(p.clone(), phi.clone()),
        Some(PreparationSpec::RandomInterior { margin }) => Ok(
            MeasureSampler::sample_interior_with(n, *margin, &mut substream(seed, STREAM_INIT)),
        ),
        None => Ok(MeasureSampler::sample_interior_with(
            n,
            default_margin(),
            &mut substream(seed, STREAM_INIT),
        )),
    }
}

pub fn parse_method(name: &str) -> Result<Method> {
    match name {
        "implicit-midpoint" => Ok(Method::ImplicitMidpoint),
        "rk4" => Ok(Method::Rk4),
        other => Err(Error::Config(format!(
            "unknown integrator method '{other}' (expected implicit-midpoint or rk4)"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    /// `"le"`: pass iff measured <= tolerance; `"ge"`: pass iff >=.
    pub comparison: String,
    pub pass: bool,
}

impl CheckRecord {
    pub fn le(name: &str, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            measured,
            tolerance,
            comparison: "le".into(),
            pass: measured <= tolerance,
        }
    }

    pub fn ge(name: &str, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            measured,
            tolerance,
            comparison: "ge".into(),
            pass: measured >= tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub schema: String,
    pub suite: String,
    pub n: usize,
    pub seed: u64,
    pub samples: usize,
    pub artifact_version: String,
    pub checks: Vec<CheckRecord>,
    pub overall_pass: bool,
    pub wall_clock_s: f64,
}

fn complex_matrix_json(m: &DMatrix<Complex64>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolveSummary {
    pub schema: String,
    pub n: usize,
    pub method: String,
    pub step: f64,
    pub t_final: f64,
    pub samples: usize,
    pub energy_initial: f64,
    pub energy_drift: f64,
    pub norm_drift: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_fidelity: Option<f64>,
    pub seed: u64,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QBarSample {
    pub t: f64,
    pub via_ensemble: f64,
    pub via_ensemble_std_error: f64,
    pub via_density_matrix: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatmechReport {
    pub schema: String,
    pub n: usize,
    pub beta: f64,
    pub partition_function: f64,
    pub rho: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub target_mean: f64,
    pub entropy_discrete: f64,
    pub entropy_functional: f64,
    pub entropy_functional_std_error: f64,
    pub rho_matrix_t0: Vec<Vec<[f64; 2]>>,
    pub rho_matrix_t0_trace: f64,
    pub rho_matrix_t0_mean_f: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_matrix_t_final: Option<Vec<Vec<[f64; 2]>>>,
    pub bridge_max_residual_t0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bridge_max_residual_t_final: Option<f64>,
    pub qbar: Vec<QBarSample>,
    pub negative_mass: f64,
    pub samples: usize,
    pub seed: u64,
    pub wall_clock_s: f64,
}

// ---------------------------------------------------------------------------
// evolve command
// ---------------------------------------------------------------------------

fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn run_evolve(
    config: &ExperimentConfig,
    t_final: f64,
    step_override: Option<f64>,
    method_override: Option<Method>,
    out_dir: &Path,
) -> Result<EvolveSummary> {
    let start = Instant::now();
    let n = config.dimension;
    let h_obs = build_observable(&config.hamiltonian, n, config.seed, "H")?;
    let init = build_initial(&config.initial, n, config.seed)?;

    let spec = config.integrator.clone().unwrap_or(IntegratorSpec {
        method: default_method(),
        step: default_step(),
        boundary_margin: default_boundary_margin(),
    });
    let method = match method_override {
        Some(m) => m,
        None => parse_method(&spec.method)?,
    };
    let settings = IntegratorSettings {
        method,
        step: step_override.unwrap_or(spec.step),
        boundary_margin: spec.boundary_margin,
        ..Default::default()
    };

    let h = ScalarVariable::constant(h_obs.clone());
    let traj = evolve(&h, &init, t_final, &settings)?;

    fs::create_dir_all(out_dir)?;
    let mut csv = String::new();
    csv.push('t');
    for i in 1..=n {
        csv.push_str(&format!(",p_{i}"));
    }
    for i in 1..=n {
        csv.push_str(&format!(",phi_{i}"));
    }
    csv.push_str(",energy\n");
    for (k, t) in traj.times.iter().enumerate() {
        let pt = &traj.points[k];
        csv.push_str(&format_float(*t));
        for &pi in pt.p() {
            csv.push(',');
            csv.push_str(&format_float(pi));
        }
        for &fi in pt.phi() {
            csv.push(',');
            csv.push_str(&format_float(fi));
        }
        csv.push(',');
        csv.push_str(&format_float(traj.energy[k]));
        csv.push('\n');
    }
    fs::write(out_dir.join("trajectory.csv"), csv)?;

    let oracle_fidelity = if n <= 8 {
        let psi_oracle = schrodinger_oracle(&h_obs, &to_state_vector(&init), t_final);
        Some(psi_oracle.inner(&to_state_vector(traj.final_point())).norm())
    } else {
        None
    };

    let summary = EvolveSummary {
        schema: REPORT_SCHEMA.into(),
        n,
        method: match method {
            Method::ImplicitMidpoint => "implicit-midpoint".into(),
            Method::Rk4 => "rk4".into(),
        },
        step: settings.step,
        t_final,
        samples: traj.times.len(),
        energy_initial: traj.energy[0],
        energy_drift: traj.energy_drift(),
        norm_drift: traj.norm_drift(),
        oracle_fidelity,
        seed: config.seed,
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// verify command
// ---------------------------------------------------------------------------

fn random_displacement(n: usize, rng: &mut impl Rng) -> TangentDisplacement {
    let dp: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dphi: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    TangentDisplacement::projected(dp, dphi).expect("projection removes the normal component")
}

fn geometry_checks(n: usize, seed: u64, cases: usize) -> Result<Vec<CheckRecord>> {
    let mut rng = substream(seed, STREAM_FRAME);
    // aggregate difference/scale^2 over cases; the reduction factor of the
    // aggregate tends to 2 (first-order ratio) without per-case noise
    let mut coarse_sum = 0.0;
    let mut fine_sum = 0.0;
    for _ in 0..cases {
        let prep = MeasureSampler::sample_interior_with(n, 0.02, &mut rng);
        let d = random_displacement(n, &mut rng);
        coarse_sum += verify_metric_matches_angle(&prep, &d, 1e-3)?.ratio;
        fine_sum += verify_metric_matches_angle(&prep, &d, 5e-4)?.ratio;
    }
    let aggregate_factor = coarse_sum / fine_sum.max(1e-300);

    let mut worst_dev: f64 = 0.0;
    let mut tested = 0;
    while tested < cases {
        let prep = MeasureSampler::sample_interior_with(n, 0.02, &mut rng);
        let d = random_displacement(n, &mut rng);
        let frame = haar_random_frame(n, &mut rng)?;
        if !frame.apply(&prep)?.is_interior(1e-4) {
            continue;
        }
        let report = verify_metric_frame_invariance(&prep, &d, &frame, 1e-5)?;
        worst_dev = worst_dev.max(report.relative_deviation);
        tested += 1;
    }

    Ok(vec![
        CheckRecord::ge("metric_angle_convergence_factor", aggregate_factor, 1.95),
        CheckRecord::le("frame_invariance_max_relative_deviation", worst_dev, 1e-6),
    ])
}

fn symplectic_checks(n: usize, seed: u64, cases: usize) -> Result<Vec<CheckRecord>> {
    let mut rng = substream(seed, STREAM_FRAME);
    let mut max_constraint: f64 = 0.0;
    let mut max_defect: f64 = 0.0;
    let mut max_det_dev: f64 = 0.0;
    let mut tested = 0;
    while tested < cases {
        let frame = haar_random_frame(n, &mut rng)?;
        max_constraint = max_constraint.max(frame.constraint_residual());
        let prep = MeasureSampler::sample_interior_with(n, 0.02, &mut rng);
        if !frame.apply(&prep)?.is_interior(1e-3) {
            continue;
        }
        let jac = numeric_jacobian(&frame, &prep, 1e-5)?;
        max_defect = max_defect.max(symplectic_defect_of(&jac));
        max_det_dev = max_det_dev.max((jac.m.determinant().abs() - 1.0).abs());
        tested += 1;
    }

    // control: p' = p, phi' = 2 phi is not canonical and must be flagged
    let prep = MeasureSampler::sample_interior_with(n, 0.05, &mut rng);
    let control = jacobian_of(
        |p, phi| (p.to_vec(), phi.iter().map(|x| 2.0 * x).collect()),
        prep.p(),
        prep.phi(),
        1e-5,
    );
    let control_defect = symplectic_defect_of(&control);

    Ok(vec![
        CheckRecord::le("unitarity_constraint_max_residual", max_constraint, 1e-8),
        CheckRecord::le("symplectic_defect_max", max_defect, 1e-6),
        CheckRecord::le("volume_det_max_deviation", max_det_dev, 1e-6),
        CheckRecord::le(
            "noncanonical_control_defect_error",
            (control_defect - 1.0).abs(),
            1e-6,
        ),
    ])
}

fn correspondence_checks(n: usize, seed: u64, cases: usize) -> Result<Vec<CheckRecord>> {
    let mut rng = substream(seed, STREAM_FRAME);

    // frame transformation vs the complex-amplitude oracle
    let mut max_p_err: f64 = 0.0;
    let mut max_phase_err: f64 = 0.0;
    for _ in 0..cases {
        let prep = MeasureSampler::sample_interior_with(n, 0.02, &mut rng);
        let frame = haar_random_frame(n, &mut rng)?;
        let ours = frame.apply(&prep)?;
        let psi = to_state_vector(&prep);
        let oracle = crate::core::from_state_vector(
            &crate::core::StateVector::normalized(frame.unitary().adjoint() * psi.amplitudes())?,
            crate::core::DEFAULT_VALIDATION_TOL,
        );
        for i in 0..n {
            max_p_err = max_p_err.max((ours.p()[i] - oracle.p()[i]).abs());
            for j in 0..n {
                if ours.degenerate()[i] || ours.degenerate()[j] {
                    continue;
                }
                let a = ours.phi()[i] - ours.phi()[j];
                let b = oracle.phi()[i] - oracle.phi()[j];
                max_phase_err = max_phase_err.max(phase_difference(a, b).abs());
            }
        }
    }

    // Poisson bracket vs (1/i) <[F, H]>
    let mut max_pb_err: f64 = 0.0;
    for _ in 0..cases {
        let f = random_hermitian(n, &mut rng);
        let h = random_hermitian(n, &mut rng);
        let prep = MeasureSampler::sample_interior_with(n, 0.01, &mut rng);
        let pb = poisson_bracket(
            &ScalarVariable::constant(f.clone()),
            &ScalarVariable::constant(h.clone()),
            &prep,
            0.0,
        )?;
        let psi = to_state_vector(&prep);
        let comm = f.entries() * h.entries() - h.entries() * f.entries();
        let oracle =
            ((psi.amplitudes().adjoint() * comm * psi.amplitudes())[(0, 0)] / Complex64::i()).re;
        max_pb_err = max_pb_err.max((pb - oracle).abs());
    }

    // one full trajectory vs the matrix-exponential oracle
    let h_obs = random_hermitian(n, &mut rng);
    let init = MeasureSampler::sample_interior_with(n, 0.05, &mut rng);
    let settings = IntegratorSettings::default();
    let traj = evolve(&ScalarVariable::constant(h_obs.clone()), &init, 10.0, &settings)?;
    let psi_oracle = schrodinger_oracle(&h_obs, &to_state_vector(&init), 10.0);
    let fidelity = psi_oracle.inner(&to_state_vector(traj.final_point())).norm();

    Ok(vec![
        CheckRecord::le("frame_apply_max_p_error", max_p_err, 1e-10),
        CheckRecord::le("frame_apply_max_phase_difference_error", max_phase_err, 1e-8),
        CheckRecord::le("poisson_commutator_max_deviation", max_pb_err, 1e-9),
        CheckRecord::le("schrodinger_infidelity", 1.0 - fidelity, 1e-6),
        CheckRecord::le("energy_drift", traj.energy_drift(), 1e-6),
        CheckRecord::le("probability_norm_drift", traj.norm_drift(), 1e-9),
    ])
}

fn statmech_checks(n: usize, seed: u64, samples: usize) -> Result<Vec<CheckRecord>> {
    let mut checks = Vec::new();

    let sol = solve_maxent(&[0.0, 1.0], 0.25, 1e-12)?;
    checks.push(CheckRecord::le(
        "beta_ln3_error",
        (sol.beta - 3.0f64.ln()).abs(),
        1e-10,
    ));
    let spectrum: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let uniform = solve_maxent(&spectrum, spectrum.iter().sum::<f64>() / n as f64, 1e-12)?;
    checks.push(CheckRecord::le(
        "uniform_entropy_error",
        (ensemble_entropy(&uniform)? - (n as f64).ln()).abs(),
        1e-13,
    ));

    let sampler = MeasureSampler::new(n, mc_seed(seed));
    let moment_mc = mc_integrate(|prep| prep.p()[0] * prep.p()[0], &sampler, samples)?;
    let mut m = vec![0usize; n];
    m[0] = 2;
    let moment_exact = TWO_PI.powi(n as i32) * simplex_moment(n, &m)?;
    checks.push(CheckRecord::le(
        "simplex_moment_mc_sigmas",
        (moment_mc.estimate - moment_exact).abs() / moment_mc.std_error.max(1e-300),
        3.0,
    ));

    let target = spectrum.iter().sum::<f64>() / n as f64 * 0.7;
    let sol_n = solve_maxent(&spectrum, target, 1e-12)?;
    let w0 = w0_build(&sol_n);
    let norm = mc_integrate(|prep| w0.evaluate(prep).unwrap_or(f64::NAN), &sampler, samples)?;
    checks.push(CheckRecord::le(
        "w0_normalization_sigmas",
        (norm.estimate - 1.0).abs() / norm.std_error.max(1e-300),
        3.0,
    ));
    let mut worst_rho_sigmas: f64 = 0.0;
    for i in 0..n {
        let mi = mc_integrate(
            |prep| w0.evaluate(prep).unwrap_or(f64::NAN) * prep.p()[i],
            &sampler,
            samples,
        )?;
        worst_rho_sigmas = worst_rho_sigmas
            .max((mi.estimate - sol_n.rho[i]).abs() / mi.std_error.max(1e-300));
    }
    checks.push(CheckRecord::le(
        "w0_rho_recovery_sigmas",
        worst_rho_sigmas,
        3.0,
    ));

    let rho = rho_reconstruct(&w0, &sampler, samples)?;
    let mut worst_diag: f64 = 0.0;
    for i in 0..n {
        worst_diag = worst_diag.max(
            (rho.entries[(i, i)].re - sol_n.rho[i]).abs() / rho.std_error[(i, i)].max(1e-300),
        );
    }
    checks.push(CheckRecord::le("rho_diagonal_sigmas", worst_diag, 3.0));
    checks.push(CheckRecord::le(
        "rho_trace_sigmas",
        (rho.trace() - 1.0).abs() / rho.trace_std_error().max(1e-300),
        3.0,
    ));

    // canonical distribution is stationary under its own flow
    let h = ScalarVariable::constant(HermitianObservable::diagonal(&spectrum, "H"));
    let w_t = liouville_evolve(&w0, &h, 0.5, IntegratorSettings::default());
    let mut rng = substream(seed, STREAM_INIT);
    let mut worst_stationarity: f64 = 0.0;
    for _ in 0..50 {
        let prep = MeasureSampler::sample_interior_with(n, 1e-3, &mut rng);
        worst_stationarity =
            worst_stationarity.max((w_t.evaluate(&prep)? - w0.evaluate(&prep)?).abs());
    }
    checks.push(CheckRecord::le(
        "canonical_stationarity_max_deviation",
        worst_stationarity,
        1e-6,
    ));

    Ok(checks)
}

/// Run one named verification suite and assemble its report.
pub fn run_verify(suite: &str, n: usize, seed: u64, samples: usize) -> Result<VerificationReport> {
    if !(2..=6).contains(&n) {
        return Err(Error::Config(format!("n must be in [2, 6], got {n}")));
    }
    let start = Instant::now();
    let cases = 100;
    let checks = match suite {
        "geometry" => geometry_checks(n, seed, cases)?,
        "symplectic" => symplectic_checks(n, seed, cases)?,
        "correspondence" => correspondence_checks(n, seed, cases)?,
        "statmech" => statmech_checks(n, seed, samples)?,
        "all" => {
            let mut all = geometry_checks(n, seed, cases)?;
            all.extend(symplectic_checks(n, seed, cases)?);
            all.extend(correspondence_checks(n, seed, cases)?);
            all.extend(statmech_checks(n, seed, samples)?);
            all
        }
        other => return Err(Error::Config(format!("unknown suite '{other}'"))),
    };
    let overall_pass = checks.iter().all(|c| c.pass);
    Ok(VerificationReport {
        schema: REPORT_SCHEMA.into(),
        suite: suite.to_string(),
        n,
        seed,
        samples,
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        checks,
        overall_pass,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// statmech command
// ---------------------------------------------------------------------------

/// Von Neumann evolution of a diagonal density matrix:
/// `rho(t) = e^{-iHt} diag(rho) e^{iHt}`.
fn von_neumann_evolved(
    rho_diag: &[f64],
    h: &HermitianObservable,
    t: f64,
) -> DMatrix<Complex64> {
    let n = rho_diag.len();
    let (vals, vecs) = h.eigen();
    let mut phase = DMatrix::zeros(n, n);
    for (i, &e) in vals.iter().enumerate() {
        phase[(i, i)] = Complex64::from_polar(1.0, -e * t);
    }
    let u = &vecs * phase * vecs.adjoint();
    let mut rho0 = DMatrix::zeros(n, n);
    for (i, &r) in rho_diag.iter().enumerate() {
        rho0[(i, i)] = Complex64::new(r, 0.0);
    }
    &u * rho0 * u.adjoint()
}

pub fn run_statmech(
    config: &ExperimentConfig,
    target_mean: f64,
    t_final: Option<f64>,
    samples_override: Option<usize>,
    out_dir: &Path,
) -> Result<StatmechReport> {
    let start = Instant::now();
    let n = config.dimension;
    let samples = samples_override
        .or(config.monte_carlo.as_ref().map(|m| m.samples))
        .unwrap_or(default_samples());

    let h_raw = build_observable(&config.hamiltonian, n, config.seed, "H")?;
    let f_raw = match &config.observable {
        Some(spec) => build_observable(spec, n, config.seed, "F")?,
        None => h_raw.clone(),
    };

    // work in the F-diagonal frame: rotate H along with F
    let (f_values, f_vectors) = f_raw.eigen();
    let h_obs = validate_hermitian(
        f_vectors.adjoint() * h_raw.entries() * &f_vectors,
        1e-9,
        "H (F-diagonal frame)",
    )?;

    let sol = solve_maxent(&f_values, target_mean, 1e-12)?;
    let w0 = w0_build(&sol);
    let sampler = MeasureSampler::new(n, mc_seed(config.seed));

    let s_discrete = ensemble_entropy(&sol)?;
    let rho_t0 = rho_reconstruct(&w0, &sampler, samples)?;
    let s_functional = entropy_functional(&w0, &rho_t0, &sampler, samples)?;
    let neg_mass = negative_mass(&w0, &sampler, samples)?;

    let f_diag = HermitianObservable::diagonal(&f_values, "F");
    let mut bridge_points_rng = substream(config.seed, STREAM_INIT);
    let bridge_points: Vec<Preparation> = (0..100)
        .map(|_| MeasureSampler::sample_interior_with(n, 1e-6, &mut bridge_points_rng))
        .collect();

    // exact-rho reference at t = 0 keeps the bridge residual free of MC noise
    let rho_exact_t0 = DensityMatrix {
        entries: {
            let mut m = DMatrix::zeros(n, n);
            for (i, &r) in sol.rho.iter().enumerate() {
                m[(i, i)] = Complex64::new(r, 0.0);
            }
            m
        },
        std_error: DMatrix::zeros(n, n),
        samples: 0,
    };
    let bridge_t0 = bridge_check(&w0, &rho_exact_t0, &bridge_points)?;

    let q_t0 = mc_integrate(
        |prep| {
            w0.evaluate(prep).unwrap_or(f64::NAN)
                * prep
                    .p()
                    .iter()
                    .zip(&f_values)
                    .map(|(&pi, &fv)| pi * fv)
                    .sum::<f64>()
        },
        &sampler,
        samples,
    )?;
    let mut qbar = vec![QBarSample {
        t: 0.0,
        via_ensemble: q_t0.estimate,
        via_ensemble_std_error: q_t0.std_error,
        via_density_matrix: rho_exact_t0.expectation(&f_diag),
    }];

    let h_var = ScalarVariable::constant(h_obs.clone());
    let (rho_tf, bridge_tf) = match t_final {
        Some(t) if t > 0.0 => {
            let settings = IntegratorSettings {
                step: 5e-3,
                ..Default::default()
            };
            let w_t = liouville_evolve(&w0, &h_var, t, settings);
            let rho_vn = von_neumann_evolved(&sol.rho, &h_obs, t);
            let rho_t = DensityMatrix {
                entries: rho_vn,
                std_error: DMatrix::zeros(n, n),
                samples: 0,
            };
            let bridge = bridge_check(&w_t, &rho_t, &bridge_points)?;
            let q_w = mc_integrate(
                |prep| {
                    w_t.evaluate(prep).unwrap_or(f64::NAN)
                        * prep
                            .p()
                            .iter()
                            .zip(&f_values)
                            .map(|(&pi, &fv)| pi * fv)
                            .sum::<f64>()
                },
                &sampler,
                samples.min(20_000),
            )?;
            qbar.push(QBarSample {
                t,
                via_ensemble: q_w.estimate,
                via_ensemble_std_error: q_w.std_error,
                via_density_matrix: rho_t.expectation(&f_diag),
            });
            (Some(rho_t), Some(bridge))
        }
        _ => (None, None),
    };

    let report = StatmechReport {
        schema: REPORT_SCHEMA.into(),
        n,
        beta: sol.beta,
        partition_function: sol.z,
        rho: sol.rho.clone(),
        eigenvalues: f_values.clone(),
        target_mean,
        entropy_discrete: s_discrete,
        entropy_functional: s_functional.estimate,
        entropy_functional_std_error: s_functional.std_error,
        rho_matrix_t0: complex_matrix_json(&rho_t0.entries),
        rho_matrix_t0_trace: rho_t0.trace(),
        rho_matrix_t0_mean_f: rho_t0.expectation(&f_diag),
        rho_matrix_t_final: rho_tf.as_ref().map(|r| complex_matrix_json(&r.entries)),
        bridge_max_residual_t0: bridge_t0.max_residual,
        bridge_max_residual_t_final: bridge_tf.map(|b| b.max_residual),
        qbar,
        negative_mass: neg_mass.estimate,
        samples,
        seed: config.seed,
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    fs::create_dir_all(out_dir)?;
    fs::write(
        out_dir.join("statmech.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(report)
}

/// Process exit code for a failed run.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Json(_) | Error::Validation(_) | Error::DimensionMismatch { .. } => 2,
        Error::InfeasibleConstraint { .. } | Error::DivergentBeta { .. } => 4,
        _ => 3,
    }
}
