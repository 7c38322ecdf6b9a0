//! Reference bounds: optimal performance theoretically attainable, the
//! uniform-quantizer rate rule and the finite-blocklength digital comparison.

use std::f64::consts::{E, LOG2_E, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::gaussian_q_inverse;

/// dB gained per quantization bit.
pub const DB_PER_BIT: f64 = 6.02;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// `(pi e / 6)(1 + SNR)^n`, linear.
pub fn opta_sdr_bound(snr_linear: f64, n: usize) -> Result<f64> {
    if !(snr_linear >= 0.0) {
        return Err(Error::Domain(format!("SNR {snr_linear} must be nonnegative")));
    }
    Ok(PI * E / 6.0 * (1.0 + snr_linear).powi(n as i32))
}

/// Bits per source symbol for a uniform quantizer reaching `sdr_db`.
pub fn quantizer_rate(sdr_db: f64) -> Result<f64> {
    if !(sdr_db > 0.0) {
        return Err(Error::Domain(format!("SDR {sdr_db} dB must be positive")));
    }
    Ok(sdr_db / DB_PER_BIT + 1.0)
}

/// AWGN capacity in bits per channel use.
pub fn awgn_capacity(snr_linear: f64) -> f64 {
    0.5 * (1.0 + snr_linear).log2()
}

/// Normal-approximation blocklength needed to reach rate `R` at block error
/// rate `eps`. Evaluated as is when `R > C`.
pub fn polyanskiy_block_length(snr_linear: f64, rate: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Domain(format!("epsilon {epsilon} outside (0, 0.5)")));
    }
    if !(rate > 0.0) {
        return Err(Error::Domain(format!("rate {rate} must be positive")));
    }
    let gap = awgn_capacity(snr_linear) - rate;
    if gap == 0.0 {
        return Err(Error::RateEqualsCapacity);
    }
    let dispersion = 1.0 - 1.0 / (1.0 + snr_linear).powi(2);
    let qi = gaussian_q_inverse(epsilon)?;
    Ok(LOG2_E * LOG2_E / (2.0 * gap * gap) * dispersion * qi * qi)
}

/// One row of the analog-versus-digital source-sample comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitalComparison {
    pub n: usize,
    pub snr_db: f64,
    pub sdr_db: f64,
    pub bits_per_symbol: f64,
    pub rate: f64,
    pub capacity: f64,
    pub epsilon: f64,
    pub block_length: f64,
    /// `N_c / n` before rounding.
    pub source_samples_exact: f64,
    /// Whole source samples, `floor(N_c / n)`.
    pub source_samples: u64,
    /// Set when the rate exceeds capacity.
    pub above_capacity: bool,
}

/// Source samples a digital code must queue to match an analog code with
/// `n` channel uses per sample at the given SNR and SDR.
pub fn required_source_samples(n: usize, snr_db: f64, sdr_db: f64, epsilon: f64) -> Result<DigitalComparison> {
    if n == 0 {
        return Err(Error::Domain("n must be positive".into()));
    }
    let snr = db_to_linear(snr_db);
    let bits = quantizer_rate(sdr_db)?;
    let rate = bits / n as f64;
    let capacity = awgn_capacity(snr);
    let block_length = polyanskiy_block_length(snr, rate, epsilon)?;
    let exact = block_length / n as f64;
    Ok(DigitalComparison {
        n,
        snr_db,
        sdr_db,
        bits_per_symbol: bits,
        rate,
        capacity,
        epsilon,
        block_length,
        source_samples_exact: exact,
        source_samples: exact.floor() as u64,
        above_capacity: rate > capacity,
    })
}

/// Published comparison rows: `(n, snr_db, sdr_db, R, N_s at 1e-3, N_s at 1e-6)`.
pub const TABLE_II: [(usize, f64, f64, f64, u64, u64); 10] = [
    (4, 0.5, 12.0, 0.748, 45, 108),
    (4, 3.69, 18.0, 0.997, 138, 328),
    (6, 3.0, 20.0, 0.720, 290, 686),
    (6, 4.98, 25.0, 0.859, 55, 132),
    (6, 8.39, 30.0, 0.997, 6, 15),
    (8, 3.57, 24.0, 0.623, 20, 49),
    (8, 5.95, 30.0, 0.748, 7, 17),
    (20, 0.36, 24.0, 0.249, 4, 11),
    (20, 2.89, 36.0, 0.349, 2, 5),
    (100, -5.45, 20.0, 0.043, 2, 4),
];
