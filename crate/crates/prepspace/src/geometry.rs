//! The Fubini-Study line element on preparation space,
//!
//! ```text
//! ds^2 = sum_i dp_i^2 / (4 p_i) + sum_i p_i dphi_i^2 - (sum_i p_i dphi_i)^2
//! ```
//!
//! and its consistency with the Hilbert-space ray angle, including
//! invariance under changes of measurement frame.

use crate::core::{
    to_state_vector, phase_difference, Preparation, StateVector,
    DEFAULT_VALIDATION_TOL,
};
use crate::error::{Error, Result};
use crate::transform::UnitaryFrameMap;

/// A displacement tangent to the preparation space: `sum_i dp_i = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentDisplacement {
    dp: Vec<f64>,
    dphi: Vec<f64>,
}

impl TangentDisplacement {
    pub fn new(dp: Vec<f64>, dphi: Vec<f64>) -> Result<Self> {
        if dp.len() != dphi.len() {
            return Err(Error::DimensionMismatch {
                expected: dp.len(),
                got: dphi.len(),
            });
        }
        let sum: f64 = dp.iter().sum();
        if sum.abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "dp components sum to {sum:e}; displacements must stay on the simplex"
            )));
        }
        Ok(Self { dp, dphi })
    }

    /// Construct after projecting `dp` onto the simplex tangent
    /// (subtracting its mean).
    pub fn projected(dp: Vec<f64>, dphi: Vec<f64>) -> Result<Self> {
        let n = dp.len();
        let mean: f64 = dp.iter().sum::<f64>() / n as f64;
        Self::new(dp.iter().map(|x| x - mean).collect(), dphi)
    }

    pub fn dim(&self) -> usize {
        self.dp.len()
    }

    pub fn dp(&self) -> &[f64] {
        &self.dp
    }

    pub fn dphi(&self) -> &[f64] {
        &self.dphi
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dp: self.dp.iter().map(|x| s * x).collect(),
            dphi: self.dphi.iter().map(|x| s * x).collect(),
        }
    }
}

/// `ds^2` at `prep` for displacement `d`, clamped to zero when negative
/// by round-off (the form is positive semidefinite).
pub fn line_element_squared(prep: &Preparation, d: &TangentDisplacement) -> Result<f64> {
    if prep.dim() != d.dim() {
        return Err(Error::DimensionMismatch {
            expected: prep.dim(),
            got: d.dim(),
        });
    }
    prep.require_interior(DEFAULT_VALIDATION_TOL)?;
    let mut fisher = 0.0;
    let mut var1 = 0.0;
    let mut mean = 0.0;
    for i in 0..prep.dim() {
        let pi = prep.p()[i];
        fisher += d.dp()[i] * d.dp()[i] / (4.0 * pi);
        var1 += pi * d.dphi()[i] * d.dphi()[i];
        mean += pi * d.dphi()[i];
    }
    let ds2 = fisher + var1 - mean * mean;
    if ds2 < 0.0 {
        if ds2 < -1e-12 {
            return Err(Error::Validation(format!(
                "ds^2 = {ds2:e} is negative beyond round-off"
            )));
        }
        Ok(0.0)
    } else {
        Ok(ds2)
    }
}

/// Angle between the rays of two normalized states: `arccos |<psi1|psi2>|`.
pub fn hilbert_angle(psi1: &StateVector, psi2: &StateVector) -> f64 {
    let overlap = psi1.inner(psi2).norm().clamp(0.0, 1.0);
    overlap.acos()
}

/// Move a preparation along `scale * d`, staying on the simplex.
pub fn displace(prep: &Preparation, d: &TangentDisplacement, scale: f64) -> Result<Preparation> {
    let p: Vec<f64> = prep
        .p()
        .iter()
        .zip(d.dp())
        .map(|(&pi, &dpi)| pi + scale * dpi)
        .collect();
    let phi: Vec<f64> = prep
        .phi()
        .iter()
        .zip(d.dphi())
        .map(|(&fi, &dfi)| fi + scale * dfi)
        .collect();
    Preparation::with_sum_tol(p, phi, 1e-9)
}

/// Comparison of the squared ray angle with `ds^2` at one displacement scale.
#[derive(Debug, Clone, Copy)]
pub struct MetricAngleReport {
    pub scale: f64,
    pub angle_squared: f64,
    pub ds_squared: f64,
    pub abs_difference: f64,
    /// `abs_difference / scale^2`; tends to zero as the scale shrinks.
    pub ratio: f64,
}

/// Compare `hilbert_angle^2` between `prep` and its displacement by
/// `scale * d` against `ds^2` of the scaled displacement. The difference is
/// higher than quadratic in the scale.
pub fn verify_metric_matches_angle(
    prep: &Preparation,
    d: &TangentDisplacement,
    scale: f64,
) -> Result<MetricAngleReport> {
    let moved = displace(prep, d, scale)?;
    let angle = hilbert_angle(&to_state_vector(prep), &to_state_vector(&moved));
    let ds2 = line_element_squared(prep, &d.scaled(scale))?;
    let angle_squared = angle * angle;
    let abs_difference = (angle_squared - ds2).abs();
    Ok(MetricAngleReport {
        scale,
        angle_squared,
        ds_squared: ds2,
        abs_difference,
        ratio: abs_difference / (scale * scale),
    })
}

/// `ds^2` before and after a change of measurement frame, with the
/// displacement pushed forward by central finite differences.
#[derive(Debug, Clone, Copy)]
pub struct FrameInvarianceReport {
    pub ds_squared: f64,
    pub ds_squared_transformed: f64,
    pub relative_deviation: f64,
}

/// Verify that `ds^2` is unchanged under a frame map. The displacement is
/// pushed forward by central differences at `fd_scale`.
pub fn verify_metric_frame_invariance(
    prep: &Preparation,
    d: &TangentDisplacement,
    frame: &UnitaryFrameMap,
    fd_scale: f64,
) -> Result<FrameInvarianceReport> {
    let ds2 = line_element_squared(prep, d)?;

    let image = frame.apply(prep)?;
    image.require_interior(DEFAULT_VALIDATION_TOL)?;
    let fwd = frame.apply(&displace(prep, d, fd_scale)?)?;
    let bwd = frame.apply(&displace(prep, d, -fd_scale)?)?;

    let n = prep.dim();
    let mut dp = Vec::with_capacity(n);
    let mut dphi = Vec::with_capacity(n);
    for i in 0..n {
        dp.push((fwd.p()[i] - bwd.p()[i]) / (2.0 * fd_scale));
        dphi.push(phase_difference(fwd.phi()[i], bwd.phi()[i]) / (2.0 * fd_scale));
    }
    let pushed = TangentDisplacement::projected(dp, dphi)?;
    let ds2_t = line_element_squared(&image, &pushed)?;

    let denom = ds2.abs().max(1e-300);
    Ok(FrameInvarianceReport {
        ds_squared: ds2,
        ds_squared_transformed: ds2_t,
        relative_deviation: (ds2 - ds2_t).abs() / denom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statmech::MeasureSampler;
    use crate::transform;
    use nalgebra::dvector;
    use num_complex::Complex64;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_interior(n: usize, rng: &mut ChaCha8Rng) -> Preparation {
        MeasureSampler::sample_interior_with(n, 0.02, rng)
    }

    fn random_displacement(n: usize, rng: &mut ChaCha8Rng) -> TangentDisplacement {
        let dp: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dphi: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        TangentDisplacement::projected(dp, dphi).unwrap()
    }

    #[test]
    fn null_displacement_gives_zero() {
        let prep = Preparation::new(vec![0.3, 0.7], vec![0.1, 4.0]).unwrap();
        let d = TangentDisplacement::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(line_element_squared(&prep, &d).unwrap(), 0.0);
    }

    #[test]
    fn global_phase_direction_is_null() {
        let prep = Preparation::new(vec![0.5, 0.5], vec![0.0, 1.0]).unwrap();
        for alpha in [0.1, 1.0, -2.5] {
            let d = TangentDisplacement::new(vec![0.0, 0.0], vec![alpha, alpha]).unwrap();
            assert!(line_element_squared(&prep, &d).unwrap() < 1e-12);
        }
    }

    #[test]
    fn symmetric_probability_displacement() {
        // n=2, p=(1/2,1/2), dp=(eps,-eps): ds^2 = eps^2/(4*1/2)*2 = eps^2
        let prep = Preparation::new(vec![0.5, 0.5], vec![0.0, 0.0]).unwrap();
        let eps = 1e-3;
        let d = TangentDisplacement::new(vec![eps, -eps], vec![0.0, 0.0]).unwrap();
        let ds2 = line_element_squared(&prep, &d).unwrap();
        assert!((ds2 - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn boundary_preparation_is_singular() {
        let prep = Preparation::new(vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        let d = TangentDisplacement::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            line_element_squared(&prep, &d),
            Err(Error::SingularChart { .. })
        ));
    }

    #[test]
    fn hilbert_angle_cases() {
        let e0 = StateVector::new(dvector![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0)
        ])
        .unwrap();
        let e1 = StateVector::new(dvector![
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0)
        ])
        .unwrap();
        assert_eq!(hilbert_angle(&e0, &e0), 0.0);
        assert!((hilbert_angle(&e0, &e1) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);

        // ray identification: global phase does not change the angle
        let phased = StateVector::new(e0.amplitudes().map(|a| a * Complex64::from_polar(1.0, 1.3)))
            .unwrap();
        assert!(hilbert_angle(&e0, &phased) < 1e-7);
    }

    #[test]
    fn angle_agreement_improves_as_scale_halves() {
        // the difference is O(scale^3), so ratio = difference / scale^2 is
        // first order and its reduction factor tends to exactly 2; aggregate
        // over cases so higher-order per-case fluctuations average out
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut coarse_sum = 0.0;
        let mut fine_sum = 0.0;
        for _ in 0..50 {
            let prep = random_interior(2, &mut rng);
            let d = random_displacement(2, &mut rng);
            coarse_sum += verify_metric_matches_angle(&prep, &d, 1e-3).unwrap().ratio;
            fine_sum += verify_metric_matches_angle(&prep, &d, 5e-4).unwrap().ratio;
        }
        let factor = coarse_sum / fine_sum;
        assert!(factor >= 1.95, "aggregate reduction factor {factor}");
        assert!(factor <= 4.5, "aggregate reduction factor {factor}");
    }

    #[test]
    fn global_phase_displacement_agrees_exactly() {
        let prep = Preparation::new(vec![0.4, 0.6], vec![0.2, 0.9]).unwrap();
        let d = TangentDisplacement::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let report = verify_metric_matches_angle(&prep, &d, 1e-3).unwrap();
        assert!(report.angle_squared < 1e-12);
        assert!(report.ds_squared < 1e-12);
    }

    #[test]
    fn frame_invariance_identity_and_permutation() {
        let prep = Preparation::new(vec![0.2, 0.3, 0.5], vec![0.1, 2.0, 4.0]).unwrap();
        let d = TangentDisplacement::new(vec![0.1, -0.04, -0.06], vec![0.3, -0.2, 0.5]).unwrap();

        let id = transform::identity_frame(3);
        let r = verify_metric_frame_invariance(&prep, &d, &id, 1e-5).unwrap();
        assert!(r.relative_deviation < 1e-9);

        let perm = transform::permutation_frame(&[2, 0, 1]).unwrap();
        let r = verify_metric_frame_invariance(&prep, &d, &perm, 1e-5).unwrap();
        assert!(r.relative_deviation < 1e-9);
    }

    #[test]
    fn frame_invariance_haar_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut tested = 0;
        while tested < 40 {
            let prep = random_interior(3, &mut rng);
            let d = random_displacement(3, &mut rng);
            let frame = transform::haar_random_frame(3, &mut rng).unwrap();
            if !frame.apply(&prep).unwrap().is_interior(1e-4) {
                continue;
            }
            let r = verify_metric_frame_invariance(&prep, &d, &frame, 1e-5).unwrap();
            assert!(r.relative_deviation < 1e-6, "dev {}", r.relative_deviation);
            tested += 1;
        }
    }
}
