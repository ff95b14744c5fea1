//! Constant-velocity Kalman filter over `(cx, cy, w, h)` box state with
//! velocities, and camera-motion compensation of a filtered state.

use nalgebra::{Cholesky, SMatrix, SVector};

use crate::error::InputError;
use crate::geometry::{AffineTransform, BBox};

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
type MeasVector = SVector<f64, 4>;
type MeasCovariance = SMatrix<f64, 4, 4>;

/// Box measurement in center form: `[cx, cy, w, h]`.
pub type Measurement = [f64; 4];

/// Noise weights, relative to the box height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanNoise {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
}

impl Default for KalmanNoise {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
        }
    }
}

/// Mean `(cx, cy, w, h, vcx, vcy, vw, vh)` and its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

impl KalmanState {
    pub fn measurement(&self) -> Measurement {
        [self.mean[0], self.mean[1], self.mean[2], self.mean[3]]
    }

    /// Current box estimate. Negative sizes produced by extrapolation are clamped to 0.
    pub fn bbox(&self) -> BBox {
        let w = self.mean[2].max(0.0);
        let h = self.mean[3].max(0.0);
        BBox::from_center(self.mean[0], self.mean[1], w, h)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KalmanFilter {
    pub noise: KalmanNoise,
}

// Keeps Q and R strictly positive for collapsed boxes.
const MIN_SCALE: f64 = 1e-3;

fn scale_of(h: f64) -> f64 {
    h.abs().max(MIN_SCALE)
}

fn symmetrize(p: &StateCovariance) -> StateCovariance {
    (p + p.transpose()) * 0.5
}

fn transition() -> StateCovariance {
    let mut f = StateCovariance::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

impl KalmanFilter {
    pub fn new(noise: KalmanNoise) -> Self {
        Self { noise }
    }

    /// New track state from a first measurement, with zero velocity.
    pub fn initiate(&self, z: Measurement) -> Result<KalmanState, InputError> {
        let [cx, cy, w, h] = z;
        if !(w > 0.0 && h > 0.0) || !z.iter().all(|v| v.is_finite()) {
            return Err(InputError::NonPositiveSize {
                width: w,
                height: h,
            });
        }
        let mean = StateVector::from_column_slice(&[cx, cy, w, h, 0.0, 0.0, 0.0, 0.0]);
        let pos = 2.0 * self.noise.std_weight_position * h;
        let vel = 10.0 * self.noise.std_weight_velocity * h;
        let std = [pos, pos, pos, pos, vel, vel, vel, vel];
        let covariance = StateCovariance::from_diagonal(&StateVector::from_fn(|i, _| std[i] * std[i]));
        Ok(KalmanState { mean, covariance })
    }

    pub fn process_noise(&self, h: f64) -> StateCovariance {
        let s = scale_of(h);
        let pos = (self.noise.std_weight_position * s).powi(2);
        let vel = (self.noise.std_weight_velocity * s).powi(2);
        StateCovariance::from_diagonal(&StateVector::from_fn(|i, _| if i < 4 { pos } else { vel }))
    }

    pub fn measurement_noise(&self, h: f64) -> MeasCovariance {
        let r = (self.noise.std_weight_position * scale_of(h)).powi(2);
        MeasCovariance::from_diagonal_element(r)
    }

    /// One-frame constant-velocity step.
    pub fn predict(&self, s: &KalmanState) -> KalmanState {
        let f = transition();
        let mean = f * s.mean;
        let covariance = f * s.covariance * f.transpose() + self.process_noise(s.mean[3]);
        KalmanState {
            mean,
            covariance: symmetrize(&covariance),
        }
    }

    /// Projected measurement mean and innovation covariance.
    pub fn project(&self, s: &KalmanState) -> (MeasVector, MeasCovariance) {
        let mean = MeasVector::from_column_slice(&s.measurement());
        let cov: MeasCovariance = s.covariance.fixed_view::<4, 4>(0, 0).into_owned();
        (mean, cov + self.measurement_noise(s.mean[3]))
    }

    /// Kalman correction with an observation of `(cx, cy, w, h)`.
    pub fn update(&self, s: &KalmanState, z: Measurement) -> KalmanState {
        let (projected, innovation_cov) = self.project(s);
        let innovation = MeasVector::from_column_slice(&z) - projected;
        // P·Hᵀ is the first four columns of P.
        let pht: SMatrix<f64, 8, 4> = s.covariance.fixed_view::<8, 4>(0, 0).into_owned();
        let gain: SMatrix<f64, 8, 4> = match Cholesky::new(innovation_cov) {
            Some(chol) => chol.solve(&pht.transpose()).transpose(),
            None => {
                let inv = innovation_cov
                    .try_inverse()
                    .unwrap_or_else(MeasCovariance::zeros);
                pht * inv
            }
        };
        let mean = s.mean + gain * innovation;
        let covariance = s.covariance - gain * innovation_cov * gain.transpose();
        KalmanState {
            mean,
            covariance: symmetrize(&covariance),
        }
    }

    /// Moves a state into the coordinate frame of the next image.
    ///
    /// Position maps through the full affine transform, velocity through its
    /// linear part; box size scales by `sqrt|det M|`. The position and velocity
    /// covariance blocks are conjugated by `M`.
    pub fn apply_camera_motion(
        &self,
        s: &KalmanState,
        transform: &AffineTransform,
    ) -> Result<KalmanState, InputError> {
        transform.validate()?;
        if transform.is_identity() {
            return Ok(s.clone());
        }
        let m = &s.mean;
        let (cx, cy) = transform.apply_point(m[0], m[1]);
        let (vx, vy) = transform.apply_linear(m[4], m[5]);
        let size_scale = transform.determinant().abs().sqrt();
        let mut mean = *m;
        mean[0] = cx;
        mean[1] = cy;
        mean[2] = m[2] * size_scale;
        mean[3] = m[3] * size_scale;
        mean[4] = vx;
        mean[5] = vy;

        let mut g = StateCovariance::identity();
        for offset in [0usize, 4] {
            for r in 0..2 {
                for c in 0..2 {
                    g[(offset + r, offset + c)] = transform.linear[r][c];
                }
            }
        }
        let covariance = g * s.covariance * g.transpose();
        Ok(KalmanState {
            mean,
            covariance: symmetrize(&covariance),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kf() -> KalmanFilter {
        KalmanFilter::default()
    }

    fn state_with_mean(values: [f64; 8]) -> KalmanState {
        let mut s = kf().initiate([values[0], values[1], values[2], values[3]]).unwrap();
        for i in 4..8 {
            s.mean[i] = values[i];
        }
        s
    }

    fn asymmetry(p: &StateCovariance) -> f64 {
        (p - p.transpose()).abs().max()
    }

    #[test]
    fn initiate_has_zero_velocity_and_diagonal_covariance() {
        let s = kf().initiate([10.0, 10.0, 4.0, 8.0]).unwrap();
        assert_eq!(s.mean.as_slice(), &[10.0, 10.0, 4.0, 8.0, 0.0, 0.0, 0.0, 0.0]);
        for i in 0..8 {
            for j in 0..8 {
                if i == j {
                    assert!(s.covariance[(i, j)] > 0.0);
                } else {
                    assert_eq!(s.covariance[(i, j)], 0.0);
                }
            }
        }
        // 2 * (1/20) * 8 = 0.8 and 10 * (1/160) * 8 = 0.5
        assert!((s.covariance[(0, 0)] - 0.64).abs() < 1e-12);
        assert!((s.covariance[(7, 7)] - 0.25).abs() < 1e-12);
        let unit = kf().initiate([0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(unit.mean.as_slice(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn initiate_rejects_non_positive_size() {
        assert!(kf().initiate([0.0, 0.0, 0.0, 1.0]).is_err());
        assert!(kf().initiate([0.0, 0.0, 1.0, -1.0]).is_err());
    }

    #[test]
    fn predict_translates_by_velocity() {
        let s = state_with_mean([10.0, 10.0, 4.0, 8.0, 1.0, 0.0, 0.0, 0.0]);
        let p = kf().predict(&s);
        assert_eq!(p.mean.as_slice(), &[11.0, 10.0, 4.0, 8.0, 1.0, 0.0, 0.0, 0.0]);
        let still = state_with_mean([3.0, 4.0, 5.0, 6.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(kf().predict(&still).mean.fixed_rows::<4>(0), still.mean.fixed_rows::<4>(0));
    }

    #[test]
    fn predict_grows_trace_by_transition_plus_noise() {
        let s = kf().initiate([10.0, 10.0, 4.0, 8.0]).unwrap();
        let p = kf().predict(&s);
        // Independent arithmetic: for diagonal P, trace(F P Fᵀ) = trace(P) + sum of velocity variances.
        let diag: Vec<f64> = (0..8).map(|i| s.covariance[(i, i)]).collect();
        let q_pos = (8.0f64 / 20.0).powi(2);
        let q_vel = (8.0f64 / 160.0).powi(2);
        let expected = diag.iter().sum::<f64>() + diag[4..].iter().sum::<f64>() + 4.0 * q_pos + 4.0 * q_vel;
        assert!((p.covariance.trace() - expected).abs() < 1e-12);
        assert!(p.covariance.trace() > s.covariance.trace());
    }

    #[test]
    fn update_with_predicted_measurement_keeps_mean() {
        let s = kf().predict(&state_with_mean([10.0, 10.0, 4.0, 8.0, 1.0, 0.5, 0.0, 0.0]));
        let u = kf().update(&s, s.measurement());
        assert_eq!(u.mean, s.mean);
    }

    #[test]
    fn update_shrinks_measured_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = kf().predict(&kf().initiate([50.0, 40.0, 12.0, 20.0]).unwrap());
        let z = [
            50.0 + rng.gen_range(-2.0..2.0),
            40.0 + rng.gen_range(-2.0..2.0),
            12.0 + rng.gen_range(-1.0..1.0),
            20.0 + rng.gen_range(-1.0..1.0),
        ];
        let u = kf().update(&s, z);
        let block = |p: &StateCovariance| (0..4).map(|i| p[(i, i)]).sum::<f64>();
        assert!(block(&u.covariance) <= block(&s.covariance));
    }

    #[test]
    fn repeated_update_converges_monotonically() {
        let mut s = kf().initiate([0.0, 0.0, 10.0, 10.0]).unwrap();
        let z = [5.0, -3.0, 12.0, 9.0];
        let dist = |s: &KalmanState| {
            let m = s.measurement();
            (0..4).map(|i| (m[i] - z[i]).powi(2)).sum::<f64>().sqrt()
        };
        let mut prev = dist(&s);
        for _ in 0..10 {
            s = kf().update(&s, z);
            let d = dist(&s);
            assert!(d < prev, "distance went from {prev} to {d}");
            prev = d;
        }
    }

    #[test]
    fn camera_motion_identity_translation_rotation() {
        let s = kf().predict(&state_with_mean([10.0, 20.0, 4.0, 8.0, 1.0, 0.0, 0.5, 0.0]));
        let same = kf().apply_camera_motion(&s, &AffineTransform::IDENTITY).unwrap();
        assert_eq!(same, s);

        let moved = kf().apply_camera_motion(&s, &AffineTransform::translation(5.0, 0.0)).unwrap();
        assert_eq!(moved.mean[0], s.mean[0] + 5.0);
        for i in 1..8 {
            assert_eq!(moved.mean[i], s.mean[i]);
        }
        assert_eq!(moved.covariance, s.covariance);

        let rot = AffineTransform::new([[0.0, -1.0], [1.0, 0.0]], [0.0, 0.0]).unwrap();
        let r = kf().apply_camera_motion(&s, &rot).unwrap();
        assert!((r.mean[4] - 0.0).abs() < 1e-15);
        assert!((r.mean[5] - 1.0).abs() < 1e-15);
        assert_eq!((r.mean[2], r.mean[3]), (s.mean[2], s.mean[3]));
    }

    #[test]
    fn camera_motion_rejects_singular() {
        let s = kf().initiate([1.0, 1.0, 1.0, 1.0]).unwrap();
        let singular = AffineTransform {
            linear: [[1.0, 1.0], [1.0, 1.0]],
            translation: [0.0, 0.0],
        };
        assert!(matches!(
            kf().apply_camera_motion(&s, &singular),
            Err(InputError::SingularTransform(_))
        ));
    }

    fn random_state(rng: &mut ChaCha8Rng) -> KalmanState {
        let mut s = kf()
            .initiate([
                rng.gen_range(-100.0..100.0),
                rng.gen_range(-100.0..100.0),
                rng.gen_range(1.0..50.0),
                rng.gen_range(1.0..50.0),
            ])
            .unwrap();
        for i in 4..8 {
            s.mean[i] = rng.gen_range(-3.0..3.0);
        }
        for _ in 0..rng.gen_range(0..4) {
            s = kf().predict(&s);
        }
        s
    }

    #[test]
    fn covariance_stays_symmetric_and_factorizable() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let s = random_state(&mut rng);
            let theta = rng.gen_range(-0.3..0.3f64);
            let scale = rng.gen_range(0.8..1.2);
            let t = AffineTransform::new(
                [
                    [scale * theta.cos(), -scale * theta.sin()],
                    [scale * theta.sin(), scale * theta.cos()],
                ],
                [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)],
            )
            .unwrap();
            let z = s.measurement().map(|v| v + rng.gen_range(-1.0..1.0));
            let after = [
                kf().predict(&s),
                kf().update(&s, z),
                kf().apply_camera_motion(&s, &t).unwrap(),
            ];
            for a in after {
                assert!(asymmetry(&a.covariance) < 1e-9);
                let jittered = a.covariance + StateCovariance::identity() * 1e-12;
                assert!(Cholesky::new(jittered).is_some());
            }
        }
    }

    #[test]
    fn predict_commutes_with_compensation_on_position() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let s = random_state(&mut rng);
            let t = AffineTransform::new(
                [
                    [rng.gen_range(0.5..1.5), rng.gen_range(-0.5..0.5)],
                    [rng.gen_range(-0.5..0.5), rng.gen_range(0.5..1.5)],
                ],
                [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)],
            )
            .unwrap();
            let a = kf().apply_camera_motion(&kf().predict(&s), &t).unwrap();
            let b = kf().predict(&kf().apply_camera_motion(&s, &t).unwrap());
            for i in [0usize, 1, 4, 5] {
                assert!((a.mean[i] - b.mean[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn identity_compensation_then_predict_is_predict() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_state(&mut rng);
        let via = kf().predict(&kf().apply_camera_motion(&s, &AffineTransform::IDENTITY).unwrap());
        assert_eq!(via, kf().predict(&s));
    }

    #[test]
    fn update_contracts_toward_measurement() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let s = random_state(&mut rng);
            let z = s.measurement().map(|v| v + rng.gen_range(-5.0..5.0));
            let u = kf().update(&s, z);
            for i in 0..4 {
                assert!((u.mean[i] - z[i]).abs() <= (s.mean[i] - z[i]).abs() + 1e-12);
            }
        }
    }
}
