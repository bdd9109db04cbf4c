//! Additive Gaussian noise at an exact signal-to-noise ratio.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Standard normal draw rescaled so that `10·log₁₀(‖signal‖²/‖w‖²) = snr_db`.
pub fn generate_noise<R: Rng + ?Sized>(signal: &DVector<f64>, snr_db: f64, rng: &mut R) -> Result<DVector<f64>> {
    let s = signal.norm();
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain("noise needs a nonzero finite signal".into()));
    }
    if !snr_db.is_finite() {
        return Err(Error::Domain(format!("SNR must be finite, got {snr_db}")));
    }
    let target = s * 10f64.powf(-snr_db / 20.0);
    loop {
        let w = DVector::from_iterator(signal.len(), (0..signal.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let n = w.norm();
        if n > 0.0 {
            return Ok(w * (target / n));
        }
    }
}

/// Realized SNR in dB.
pub fn snr_db(signal: &DVector<f64>, noise: &DVector<f64>) -> f64 {
    10.0 * (signal.norm_squared() / noise.norm_squared()).log10()
}
