//! Seeded inputs shared by the benchmarks.

use las_core::model::{sample_system, sigma2_from_snr_db, SystemDraw};
use las_core::rng::trial_rng;
use las_core::Constellation;

/// One received vector at `N_t = N_r = n_tx` and the noise variance used.
pub fn fixture(n_tx: usize, c: &Constellation, snr_db: f64, index: u64) -> (SystemDraw, f64) {
    let sigma2 = sigma2_from_snr_db(snr_db, n_tx, c);
    let draw = sample_system(n_tx, n_tx, c, sigma2, &mut trial_rng(0xBE7C, index)).expect("valid fixture dimensions");
    (draw, sigma2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_reproducible() {
        let c = Constellation::qam4();
        let (a, _) = fixture(4, &c, 8.0, 3);
        let (b, _) = fixture(4, &c, 8.0, 3);
        assert_eq!(a.y, b.y);
        assert_eq!(a.rm.dim_tx(), 8);
    }
}
