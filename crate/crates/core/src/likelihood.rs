//! Contact measurement likelihood against either map representation.
//!
//! A contact's likelihood is a zero-mean Gaussian in the residual between the
//! foot position predicted by a particle and the map, floored at `rho` so that
//! one outlier contact cannot zero a particle's weight.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maps::{ElevationMap, PointCloudMap, PriorMap};

pub const DEFAULT_SIGMA_Z: f64 = 0.01;
/// Default floor as a fraction of the Gaussian peak.
pub const DEFAULT_RHO_FRACTION: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum LikelihoodError {
    #[error("sigma_z must be positive and finite, got {0}")]
    Sigma(f64),
    #[error("rho must lie in (0, {peak}), got {rho}")]
    Rho { rho: f64, peak: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikelihoodConfig {
    pub sigma_z: f64,
    pub rho: f64,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        Self::with_sigma(DEFAULT_SIGMA_Z)
    }
}

impl LikelihoodConfig {
    pub fn new(sigma_z: f64, rho: f64) -> Result<Self, LikelihoodError> {
        let cfg = Self { sigma_z, rho };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `sigma_z` with the default floor of 1e-3 times the Gaussian peak.
    pub fn with_sigma(sigma_z: f64) -> Self {
        Self { sigma_z, rho: DEFAULT_RHO_FRACTION * gaussian_peak(sigma_z) }
    }

    pub fn validate(&self) -> Result<(), LikelihoodError> {
        if !(self.sigma_z > 0.0 && self.sigma_z.is_finite()) {
            return Err(LikelihoodError::Sigma(self.sigma_z));
        }
        let peak = gaussian_peak(self.sigma_z);
        if !(self.rho > 0.0 && self.rho < peak) {
            return Err(LikelihoodError::Rho { rho: self.rho, peak });
        }
        Ok(())
    }

    /// Residual magnitude beyond which the floor is active.
    pub fn clamp_radius(&self) -> f64 {
        self.sigma_z * (-2.0 * (self.rho * self.sigma_z * (2.0 * PI).sqrt()).ln()).sqrt()
    }
}

pub fn gaussian_peak(sigma: f64) -> f64 {
    1.0 / ((2.0 * PI).sqrt() * sigma)
}

pub fn gaussian_pdf(residual: f64, sigma: f64) -> f64 {
    let u = residual / sigma;
    gaussian_peak(sigma) * (-0.5 * u * u).exp()
}

/// `max(rho, N(residual; 0, sigma_z))`
pub fn contact_likelihood(residual: f64, cfg: &LikelihoodConfig) -> f64 {
    gaussian_pdf(residual, cfg.sigma_z).max(cfg.rho)
}

/// Natural log of [`contact_likelihood`], evaluated without underflow.
pub fn log_contact_likelihood(residual: f64, cfg: &LikelihoodConfig) -> f64 {
    let u = residual / cfg.sigma_z;
    (gaussian_peak(cfg.sigma_z).ln() - 0.5 * u * u).max(cfg.rho.ln())
}

/// Foot height minus map elevation below it; `None` where the map has no data.
pub fn residual_2p5d(map: &ElevationMap, foot_world: &Vector3<f64>) -> Option<f64> {
    map.elevation_at(foot_world.x, foot_world.y).map(|h| foot_world.z - h)
}

/// Distance from the foot to its nearest map point.
pub fn residual_3d(map: &PointCloudMap, foot_world: &Vector3<f64>) -> f64 {
    map.nearest(foot_world).distance
}

impl PriorMap {
    /// Log-likelihood contribution of one contact. Off-map 2.5D contacts are
    /// uninformative and contribute zero.
    pub fn contact_log_likelihood(&self, foot_world: &Vector3<f64>, cfg: &LikelihoodConfig) -> f64 {
        match self {
            PriorMap::Elevation(map) => residual_2p5d(map, foot_world)
                .map_or(0.0, |r| log_contact_likelihood(r, cfg)),
            PriorMap::Cloud(map) => log_contact_likelihood(residual_3d(map, foot_world), cfg),
        }
    }

    pub fn residual(&self, foot_world: &Vector3<f64>) -> Option<f64> {
        match self {
            PriorMap::Elevation(map) => residual_2p5d(map, foot_world),
            PriorMap::Cloud(map) => Some(residual_3d(map, foot_world)),
        }
    }
}
