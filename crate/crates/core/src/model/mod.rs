//! V-BLAST system model: Rayleigh channel, AWGN, and the real-valued
//! decomposition every detector works in.
//!
//! A complex system `y_c = H_c x_c + n_c` with `N_t` transmit and `N_r`
//! receive antennas becomes `y = H x + n` with
//!
//! ```text
//! H = [ H_I  -H_Q ]    x = [x_I; x_Q],  y = [y_I; y_Q],  n = [n_I; n_Q]
//!     [ H_Q   H_I ]
//! ```
//!
//! so `H` is `2N_r x 2N_t`.

mod constellation;

pub use constellation::{demodulate, modulate, Constellation, SymbolVector};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// `N_r x N_t` complex channel gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexChannel {
    entries: DMatrix<Complex64>,
}

/// Which side of the link a complex vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Tx,
    Rx,
}

impl ComplexChannel {
    pub fn from_matrix(entries: DMatrix<Complex64>) -> Result<Self> {
        check_dims(entries.ncols(), entries.nrows())?;
        Ok(Self { entries })
    }

    pub fn n_rx(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    /// Stacks `[re; im]` of a transmit- or receive-side vector after checking
    /// its length against this channel.
    pub fn realify_vector(&self, v: &[Complex64], side: Side) -> Result<DVector<f64>> {
        let expected = match side {
            Side::Tx => self.n_tx(),
            Side::Rx => self.n_rx(),
        };
        if v.len() != expected {
            return Err(Error::Dimension(format!(
                "{side:?} vector has length {}, channel expects {expected}",
                v.len()
            )));
        }
        Ok(stack_real_imag(v))
    }
}

fn check_dims(n_tx: usize, n_rx: usize) -> Result<()> {
    if n_tx == 0 || n_rx == 0 || n_tx > n_rx {
        return Err(Error::Dimension(format!(
            "need 1 <= n_tx <= n_rx, got n_tx={n_tx}, n_rx={n_rx}"
        )));
    }
    Ok(())
}

/// Draws i.i.d. CN(0, 1) gains (real and imaginary parts each N(0, 1/2)).
pub fn sample_channel<R: Rng + ?Sized>(n_tx: usize, n_rx: usize, rng: &mut R) -> Result<ComplexChannel> {
    check_dims(n_tx, n_rx)?;
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let entries = DMatrix::from_fn(n_rx, n_tx, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(scale * re, scale * im)
    });
    Ok(ComplexChannel { entries })
}

/// Real-valued system matrix `H` (`2N_r x 2N_t`).
#[derive(Debug, Clone, PartialEq)]
pub struct RealModel {
    h: DMatrix<f64>,
}

impl RealModel {
    /// Wraps an arbitrary real channel with at least as many rows as columns.
    ///
    /// Matrices built this way need not have the block structure produced by
    /// [`realify`]; the detectors only rely on `H` being real.
    pub fn from_real(h: DMatrix<f64>) -> Result<Self> {
        if h.ncols() == 0 || h.nrows() < h.ncols() {
            return Err(Error::Dimension(format!(
                "real channel must be tall and non-empty, got {}x{}",
                h.nrows(),
                h.ncols()
            )));
        }
        Ok(Self { h })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Number of real transmit dimensions (`2N_t` for a realified channel).
    pub fn dim_tx(&self) -> usize {
        self.h.ncols()
    }

    /// Number of real receive dimensions (`2N_r` for a realified channel).
    pub fn dim_rx(&self) -> usize {
        self.h.nrows()
    }

    /// Complex transmit antennas; meaningful for realified channels.
    pub fn n_tx(&self) -> usize {
        self.dim_tx() / 2
    }

    pub fn n_rx(&self) -> usize {
        self.dim_rx() / 2
    }

    /// Column `p` of `H`.
    pub fn column(&self, p: usize) -> nalgebra::DVectorView<'_, f64> {
        self.h.column(p)
    }
}

/// Builds the real-valued block matrix from a complex channel.
pub fn realify(hc: &ComplexChannel) -> RealModel {
    let (nr, nt) = (hc.n_rx(), hc.n_tx());
    let e = hc.entries();
    let mut h = DMatrix::zeros(2 * nr, 2 * nt);
    for i in 0..nr {
        for j in 0..nt {
            let g = e[(i, j)];
            h[(i, j)] = g.re;
            h[(i, j + nt)] = -g.im;
            h[(i + nr, j)] = g.im;
            h[(i + nr, j + nt)] = g.re;
        }
    }
    RealModel { h }
}

/// `[re; im]` stacking of a complex vector.
pub fn stack_real_imag(v: &[Complex64]) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// Inverse of [`stack_real_imag`].
pub fn complexify(v: &DVector<f64>) -> Result<Vec<Complex64>> {
    if v.len() % 2 != 0 {
        return Err(Error::Dimension(format!("odd real length {}", v.len())));
    }
    let n = v.len() / 2;
    Ok((0..n).map(|i| Complex64::new(v[i], v[i + n])).collect())
}

/// Real-valued receiver noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseVector {
    values: DVector<f64>,
    sigma2: f64,
}

impl NoiseVector {
    /// Noise realization with a known complex variance `sigma2`.
    pub fn new(values: DVector<f64>, sigma2: f64) -> Self {
        Self { values, sigma2 }
    }

    pub fn zeros(dim_rx: usize) -> Self {
        Self::new(DVector::zeros(dim_rx), 0.0)
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// Complex noise variance per receive antenna.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
}

/// Draws `2N_r` i.i.d. `N(0, sigma2/2)` components.
///
/// The unit-variance draws are scaled by `sqrt(sigma2/2)`, so the same
/// generator state yields proportional noise at every SNR.
pub fn sample_noise<R: Rng + ?Sized>(n_rx: usize, sigma2: f64, rng: &mut R) -> Result<NoiseVector> {
    if n_rx == 0 {
        return Err(Error::Dimension("n_rx must be positive".into()));
    }
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidParameter(format!("noise variance {sigma2}")));
    }
    let scale = (sigma2 / 2.0).sqrt();
    let values = DVector::from_fn(2 * n_rx, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    Ok(NoiseVector { values, sigma2 })
}

/// `y = H x + n`.
pub fn transmit(rm: &RealModel, x: &SymbolVector, noise: &NoiseVector) -> Result<DVector<f64>> {
    if x.len() != rm.dim_tx() || noise.values().len() != rm.dim_rx() {
        return Err(Error::Dimension(format!(
            "H is {}x{}, x has {} entries, n has {}",
            rm.dim_rx(),
            rm.dim_tx(),
            x.len(),
            noise.values().len()
        )));
    }
    Ok(rm.h() * x.to_dvector() + noise.values())
}

/// Complex noise variance for an average received SNR of `snr_db` per
/// receive antenna, `gamma = N_t * E_s / sigma2`. `+inf` dB gives zero noise.
pub fn sigma2_from_snr_db(snr_db: f64, n_tx: usize, c: &Constellation) -> f64 {
    if snr_db == f64::INFINITY {
        return 0.0;
    }
    n_tx as f64 * c.symbol_energy() / 10f64.powf(snr_db / 10.0)
}

/// Inverse of [`sigma2_from_snr_db`].
pub fn snr_db_from_sigma2(sigma2: f64, n_tx: usize, c: &Constellation) -> f64 {
    10.0 * (n_tx as f64 * c.symbol_energy() / sigma2).log10()
}

/// One end-to-end realization of the link.
#[derive(Debug, Clone)]
pub struct SystemDraw {
    pub bits: Vec<u8>,
    pub x: SymbolVector,
    pub rm: RealModel,
    pub noise: NoiseVector,
    pub y: DVector<f64>,
}

/// Draws bits, channel and noise, in that order, from `rng`.
pub fn sample_system<R: Rng + ?Sized>(
    n_tx: usize,
    n_rx: usize,
    c: &Constellation,
    sigma2: f64,
    rng: &mut R,
) -> Result<SystemDraw> {
    check_dims(n_tx, n_rx)?;
    let bits: Vec<u8> = (0..2 * n_tx * c.bits_per_real_dim())
        .map(|_| u8::from(rng.random::<bool>()))
        .collect();
    let x = modulate(&bits, c, n_tx)?;
    let rm = realify(&sample_channel(n_tx, n_rx, rng)?);
    let noise = sample_noise(n_rx, sigma2, rng)?;
    let y = transmit(&rm, &x, &noise)?;
    Ok(SystemDraw { bits, x, rm, noise, y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rejects_empty_and_wide_systems() {
        let mut rng = seeded(1);
        assert!(matches!(sample_channel(0, 4, &mut rng), Err(Error::Dimension(_))));
        assert!(sample_channel(5, 4, &mut rng).is_err());
        assert!(sample_channel(4, 0, &mut rng).is_err());
        assert!(ComplexChannel::from_matrix(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn channel_is_deterministic_per_seed() {
        let a = sample_channel(4, 4, &mut seeded(99)).unwrap();
        let b = sample_channel(4, 4, &mut seeded(99)).unwrap();
        let other = sample_channel(4, 4, &mut seeded(100)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, other);
    }

    #[test]
    fn channel_entries_have_unit_power() {
        // 10^5 entries: the mean of |h|^2 (an Exp(1) variable) has std 1/sqrt(1e5) ~ 0.003.
        let mut rng = seeded(2024);
        let mut sum = 0.0;
        let mut re_sum = 0.0;
        let mut re2 = 0.0;
        let mut n = 0usize;
        for _ in 0..(100_000 / 64) + 1 {
            let hc = sample_channel(8, 8, &mut rng).unwrap();
            for g in hc.entries().iter() {
                sum += g.norm_sqr();
                re_sum += g.re;
                re2 += g.re * g.re;
                n += 1;
            }
        }
        let mean_power = sum / n as f64;
        assert!((mean_power - 1.0).abs() < 0.02, "{mean_power}");
        assert!((re_sum / n as f64).abs() < 0.01);
        assert!((re2 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn realify_scalar() {
        let hc = ComplexChannel::from_matrix(DMatrix::from_element(1, 1, c(1.0, 2.0))).unwrap();
        let rm = realify(&hc);
        assert_eq!(rm.h(), &DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 2.0, 1.0]));
    }

    #[test]
    fn realify_real_channel_is_block_diagonal() {
        let hc = ComplexChannel::from_matrix(DMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)],
        ))
        .unwrap();
        let h = realify(&hc).h().clone();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 2.0, 0.0, 0.0, //
                3.0, 4.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 2.0, //
                0.0, 0.0, 3.0, 4.0,
            ],
        );
        assert_eq!(h, expected);
    }

    #[test]
    fn realify_block_identity_is_exact() {
        let mut rng = seeded(5);
        for (nt, nr) in [(1, 1), (2, 3), (4, 4), (3, 7)] {
            let hc = sample_channel(nt, nr, &mut rng).unwrap();
            let h = realify(&hc).h().clone();
            let tl = h.view((0, 0), (nr, nt));
            let tr = h.view((0, nt), (nr, nt));
            let bl = h.view((nr, 0), (nr, nt));
            let br = h.view((nr, nt), (nr, nt));
            assert_eq!(tl, br);
            assert_eq!(tr, -bl);
        }
    }

    #[test]
    fn realify_preserves_norms() {
        let mut rng = seeded(6);
        for _ in 0..50 {
            let hc = sample_channel(3, 5, &mut rng).unwrap();
            let x: Vec<Complex64> = (0..3)
                .map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            let yc = hc.entries() * DVector::from_vec(x.clone());
            let yr = realify(&hc).h() * hc.realify_vector(&x, Side::Tx).unwrap();
            let (a, b) = (yc.norm_squared(), yr.norm_squared());
            assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            // Real model output is exactly the stacked complex output up to rounding.
            let stacked = stack_real_imag(yc.as_slice());
            assert!((stacked - yr).amax() < 1e-12);
        }
    }

    #[test]
    fn vector_stacking() {
        let v = [c(1.0, 1.0), c(-1.0, -1.0)];
        assert_eq!(stack_real_imag(&v).as_slice(), &[1.0, -1.0, 1.0, -1.0]);
        let r = stack_real_imag(&[c(2.0, 0.0), c(3.0, 0.0)]);
        assert_eq!(&r.as_slice()[2..], &[0.0, 0.0]);
        assert_eq!(complexify(&stack_real_imag(&v)).unwrap(), v.to_vec());
        let hc = sample_channel(2, 3, &mut seeded(0)).unwrap();
        assert!(hc.realify_vector(&v, Side::Tx).is_ok());
        assert!(hc.realify_vector(&v, Side::Rx).is_err());
    }

    #[test]
    fn transmit_noiseless_scalar() {
        let hc = ComplexChannel::from_matrix(DMatrix::from_element(1, 1, c(1.0, 0.0))).unwrap();
        let rm = realify(&hc);
        let x = SymbolVector::new(vec![1, 1], &Constellation::qam4()).unwrap();
        let y = transmit(&rm, &x, &NoiseVector::zeros(2)).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn transmit_is_exact_and_checks_dimensions() {
        let mut rng = seeded(8);
        let qam = Constellation::qam16();
        let rm = realify(&sample_channel(3, 4, &mut rng).unwrap());
        let x = SymbolVector::new(vec![1, -3, 3, -1, 1, 1], &qam).unwrap();
        let n = sample_noise(4, 0.3, &mut rng).unwrap();
        let y = transmit(&rm, &x, &n).unwrap();
        let residual = &y - rm.h() * x.to_dvector() - n.values();
        assert!(residual.amax() < 1e-14);
        let y0 = transmit(&rm, &x, &NoiseVector::zeros(8)).unwrap();
        assert_eq!(y0, rm.h() * x.to_dvector());
        let short = SymbolVector::new(vec![1, 1], &qam).unwrap();
        assert!(transmit(&rm, &short, &n).is_err());
        assert!(transmit(&rm, &x, &NoiseVector::zeros(6)).is_err());
    }

    #[test]
    fn noise_zero_variance_and_determinism() {
        let z = sample_noise(4, 0.0, &mut seeded(1)).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let a = sample_noise(4, 1.5, &mut seeded(3)).unwrap();
        let b = sample_noise(4, 1.5, &mut seeded(3)).unwrap();
        assert_eq!(a, b);
        assert!(sample_noise(4, -1.0, &mut seeded(3)).is_err());
        assert!(sample_noise(0, 1.0, &mut seeded(3)).is_err());
    }

    #[test]
    fn noise_variance_per_real_dimension() {
        // 10^6 samples; the sample variance has relative std sqrt(2/1e6) ~ 0.0014.
        let sigma2 = 0.8;
        let mut rng = seeded(77);
        let mut s2 = 0.0;
        let mut count = 0usize;
        while count < 1_000_000 {
            let n = sample_noise(500, sigma2, &mut rng).unwrap();
            s2 += n.values().norm_squared();
            count += n.values().len();
        }
        let var = s2 / count as f64;
        assert!((var / (sigma2 / 2.0) - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn system_draw_is_consistent_and_seeded() {
        let c = Constellation::qam16();
        let a = sample_system(4, 4, &c, 0.5, &mut seeded(12)).unwrap();
        let b = sample_system(4, 4, &c, 0.5, &mut seeded(12)).unwrap();
        assert_eq!(a.bits, b.bits);
        assert_eq!(a.y, b.y);
        assert_eq!(demodulate(&a.x, &c).unwrap(), a.bits);
        let r = &a.y - a.rm.h() * a.x.to_dvector() - a.noise.values();
        assert!(r.amax() < 1e-14);
        // Noise scales with the variance under a fixed stream.
        let lo = sample_system(4, 4, &c, 0.125, &mut seeded(12)).unwrap();
        assert!((lo.noise.values() * 2.0 - a.noise.values()).amax() < 1e-14);
    }

    #[test]
    fn snr_convention_round_trips() {
        let qam = Constellation::qam4();
        // gamma = N_t E_s / sigma2 = 8 * 2 / 1.6 = 10 -> 10 dB.
        assert!((sigma2_from_snr_db(10.0, 8, &qam) - 1.6).abs() < 1e-12);
        assert!((snr_db_from_sigma2(1.6, 8, &qam) - 10.0).abs() < 1e-12);
        assert_eq!(sigma2_from_snr_db(f64::INFINITY, 8, &qam), 0.0);
    }
}
