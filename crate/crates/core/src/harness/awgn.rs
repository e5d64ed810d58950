//! Single-antenna AWGN reference curves for Gray-coded square QAM.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::model::Constellation;

/// Gaussian tail probability `Q(x) = P(N(0,1) > x)`.
pub fn q_function(x: f64) -> f64 {
    if x == f64::INFINITY {
        0.0
    } else if x == f64::NEG_INFINITY {
        1.0
    } else {
        0.5 * erfc(x / std::f64::consts::SQRT_2)
    }
}

/// Exact bit error rate of Gray-coded square M-QAM over SISO AWGN at
/// `Eb/N0 = snr_per_bit_db`.
///
/// Each PAM component is detected independently, so the rate is computed by
/// summing, for every transmitted level and bit position, the probability of
/// landing in a decision region whose label differs in that bit. For 4-QAM
/// this reduces to `Q(sqrt(2 Eb/N0))`.
pub fn siso_awgn_ber(snr_per_bit_db: f64, qam_order: u32) -> Result<f64> {
    let c = Constellation::new(qam_order)?;
    if snr_per_bit_db.is_nan() {
        return Err(Error::InvalidParameter("SNR is NaN".into()));
    }
    let gamma_b = 10f64.powf(snr_per_bit_db / 10.0);
    let gamma_s = gamma_b * c.bits_per_symbol() as f64;
    // Per-dimension noise std with N0 = Es / gamma_s and variance N0 / 2.
    let sigma = (c.symbol_energy() / (2.0 * gamma_s)).sqrt();
    let pts = c.pam_points();
    let top = c.max_level();
    let b = c.bits_per_real_dim();
    let tail = |edge: f64, a: f64| -> f64 {
        // P(a + noise > edge)
        if edge.is_infinite() {
            return if edge > 0.0 { 0.0 } else { 1.0 };
        }
        if sigma.is_infinite() {
            return 0.5;
        }
        if sigma == 0.0 {
            return if a > edge { 1.0 } else { 0.0 };
        }
        q_function((edge - a) / sigma)
    };
    let mut errors = 0.0;
    for &tx in pts {
        let a = f64::from(tx);
        let tx_word = c.word_for_level(tx);
        for &rx in pts {
            if rx == tx {
                continue;
            }
            let lo = if rx == -top { f64::NEG_INFINITY } else { f64::from(rx - 1) };
            let hi = if rx == top { f64::INFINITY } else { f64::from(rx + 1) };
            let p = tail(lo, a) - tail(hi, a);
            let wrong_bits = (tx_word ^ c.word_for_level(rx)).count_ones();
            errors += p * f64::from(wrong_bits);
        }
    }
    Ok(errors / (pts.len() * b) as f64)
}

/// `Es/N0` in dB for a given `Eb/N0` in dB.
pub fn symbol_snr_db(snr_per_bit_db: f64, qam_order: u32) -> Result<f64> {
    let c = Constellation::new(qam_order)?;
    Ok(snr_per_bit_db + 10.0 * (c.bits_per_symbol() as f64).log10())
}

/// `Eb/N0` (dB) at which the SISO AWGN curve reaches `target_ber`,
/// solved by bisection to `1e-9` dB.
pub fn siso_required_snr_per_bit_db(target_ber: f64, qam_order: u32) -> Result<f64> {
    let floor = siso_awgn_ber(f64::NEG_INFINITY, qam_order)?;
    if !(target_ber > 0.0 && target_ber < floor) {
        return Err(Error::InvalidParameter(format!(
            "target BER {target_ber} outside (0, {floor})"
        )));
    }
    let (mut lo, mut hi) = (-30.0, 60.0);
    if siso_awgn_ber(lo, qam_order)? <= target_ber || siso_awgn_ber(hi, qam_order)? > target_ber {
        return Err(Error::InvalidParameter(format!("target BER {target_ber} not bracketed")));
    }
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if siso_awgn_ber(mid, qam_order)? > target_ber {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
