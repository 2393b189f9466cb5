//! Constant-velocity Kalman filter over `(cx, cy, a, h)` box measurements.
//!
//! The state is `(cx, cy, a, h, vcx, vcy, va, vh)`. Process and measurement
//! noise standard deviations are proportional to the box height `h`.

use nalgebra::{Cholesky, SMatrix, SVector};
use thiserror::Error;

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
pub type Measurement = SVector<f64, 4>;
pub type MeasurementCovariance = SMatrix<f64, 4, 4>;

/// 0.95 quantile of the chi-square distribution with 4 degrees of freedom.
pub const CHI2_95_4DOF: f64 = 9.4877;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KalmanError {
    #[error("measurement height must be positive, got {0}")]
    NonPositiveHeight(f64),
    #[error("innovation covariance is not positive definite")]
    SingularInnovation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

impl KalmanState {
    pub fn measurement(&self) -> Measurement {
        self.mean.fixed_rows::<4>(0).into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanFilter {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
}

impl Default for KalmanFilter {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
        }
    }
}

fn motion_matrix() -> StateCovariance {
    let mut f = StateCovariance::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn symmetrize(p: &StateCovariance) -> StateCovariance {
    (p + p.transpose()) * 0.5
}

impl KalmanFilter {
    pub fn initiate(&self, z: &Measurement) -> Result<KalmanState, KalmanError> {
        let h = z[3];
        if !(h > 0.0 && h.is_finite()) {
            return Err(KalmanError::NonPositiveHeight(h));
        }
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(z);
        let p = self.std_weight_position * h;
        let v = self.std_weight_velocity * h;
        let std = [
            2.0 * p,
            2.0 * p,
            1e-2,
            2.0 * p,
            10.0 * v,
            10.0 * v,
            1e-5,
            10.0 * v,
        ];
        let covariance =
            StateCovariance::from_diagonal(&StateVector::from_iterator(std.iter().map(|s| s * s)));
        Ok(KalmanState { mean, covariance })
    }

    pub fn predict(&self, s: &KalmanState) -> KalmanState {
        let h = s.mean[3];
        let p = self.std_weight_position * h;
        let v = self.std_weight_velocity * h;
        let std = [p, p, 1e-2, p, v, v, 1e-5, v];
        let q =
            StateCovariance::from_diagonal(&StateVector::from_iterator(std.iter().map(|s| s * s)));
        let f = motion_matrix();
        KalmanState {
            mean: f * s.mean,
            covariance: symmetrize(&(f * s.covariance * f.transpose() + q)),
        }
    }

    fn measurement_noise(&self, h: f64) -> MeasurementCovariance {
        let p = self.std_weight_position * h;
        let std = [p, p, 1e-1, p];
        MeasurementCovariance::from_diagonal(&Measurement::from_iterator(std.iter().map(|s| s * s)))
    }

    /// Projects the state into measurement space: `(mean, S)` with
    /// `S = H P H^T + R`.
    pub fn project(&self, s: &KalmanState) -> (Measurement, MeasurementCovariance) {
        let hp: MeasurementCovariance = s.covariance.fixed_view::<4, 4>(0, 0).into_owned();
        (s.measurement(), hp + self.measurement_noise(s.mean[3]))
    }

    pub fn update(&self, s: &KalmanState, z: &Measurement) -> Result<KalmanState, KalmanError> {
        let (projected, innovation_cov) = self.project(s);
        let chol = Cholesky::new(innovation_cov).ok_or(KalmanError::SingularInnovation)?;
        // K = P H^T S^-1, and P H^T is the first four columns of P.
        let pht: SMatrix<f64, 8, 4> = s.covariance.fixed_view::<8, 4>(0, 0).into_owned();
        let gain: SMatrix<f64, 8, 4> = chol.solve(&pht.transpose()).transpose();
        let innovation = z - projected;
        let mean = s.mean + gain * innovation;
        let covariance = symmetrize(&(s.covariance - gain * innovation_cov * gain.transpose()));
        Ok(KalmanState { mean, covariance })
    }

    /// Squared Mahalanobis distance of `z` from the projected state.
    pub fn gating_distance(&self, s: &KalmanState, z: &Measurement) -> Result<f64, KalmanError> {
        let (projected, cov) = self.project(s);
        mahalanobis_sq(&(z - projected), &cov)
    }
}

/// `d^T S^-1 d` via a Cholesky solve.
pub fn mahalanobis_sq(d: &Measurement, cov: &MeasurementCovariance) -> Result<f64, KalmanError> {
    let chol = Cholesky::new(*cov).ok_or(KalmanError::SingularInnovation)?;
    let y = chol
        .l()
        .solve_lower_triangular(d)
        .ok_or(KalmanError::SingularInnovation)?;
    Ok(y.norm_squared())
}
