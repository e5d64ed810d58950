//! Square M-QAM viewed as two Gray-coded M-PAM components per antenna.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-real-dimension PAM alphabet of a square M-QAM constellation.
///
/// Levels are the odd integers `-(L-1), ..., -1, 1, ..., L-1` with `L = sqrt(M)`.
/// Bits map to levels by a reflected Gray code, most significant bit first,
/// with the all-zero word on the highest level (`0 -> +1` for 4-QAM).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Constellation {
    order: u32,
    levels: u32,
    bits_per_dim: u32,
    pam_points: Vec<i32>,
}

impl Constellation {
    pub fn new(order: u32) -> Result<Self> {
        if order < 4 || !order.is_power_of_two() || order.trailing_zeros() % 2 != 0 {
            return Err(Error::QamOrder(order));
        }
        let bits_per_dim = order.trailing_zeros() / 2;
        let levels = 1u32 << bits_per_dim;
        let top = levels as i32 - 1;
        let pam_points = (0..levels as i32).map(|k| -top + 2 * k).collect();
        Ok(Self {
            order,
            levels,
            bits_per_dim,
            pam_points,
        })
    }

    pub fn qam4() -> Self {
        Self::new(4).expect("4-QAM")
    }

    pub fn qam16() -> Self {
        Self::new(16).expect("16-QAM")
    }

    /// QAM order M.
    pub fn order(&self) -> u32 {
        self.order
    }

    /// Number of PAM levels per real dimension, `sqrt(M)`.
    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn bits_per_real_dim(&self) -> usize {
        self.bits_per_dim as usize
    }

    /// Bits carried by one complex symbol, `log2(M)`.
    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_dim as usize
    }

    /// Sorted PAM levels.
    pub fn pam_points(&self) -> &[i32] {
        &self.pam_points
    }

    /// Largest level, `sqrt(M) - 1`.
    pub fn max_level(&self) -> i32 {
        self.levels as i32 - 1
    }

    pub fn contains(&self, level: i32) -> bool {
        level.rem_euclid(2) == 1 && level.abs() <= self.max_level()
    }

    /// Mean energy of one real PAM component.
    pub fn real_symbol_energy(&self) -> f64 {
        let sum: f64 = self.pam_points.iter().map(|&p| f64::from(p * p)).sum();
        sum / self.pam_points.len() as f64
    }

    /// Mean complex-symbol energy `E_s` (2 for 4-QAM, 10 for 16-QAM).
    pub fn symbol_energy(&self) -> f64 {
        2.0 * self.real_symbol_energy()
    }

    /// Nearest level to `v`; ties go to the larger level, out-of-range values clamp.
    pub fn quantize(&self, v: f64) -> i32 {
        let top = self.max_level();
        if v.is_nan() {
            return 1;
        }
        if v >= f64::from(top) {
            return top;
        }
        if v <= -f64::from(top) {
            return -top;
        }
        let level = 2 * (v / 2.0).floor() as i32 + 1;
        level.clamp(-top, top)
    }

    /// Level carrying the Gray word `word` (low `bits_per_real_dim` bits used).
    pub fn level_for_word(&self, word: u32) -> i32 {
        let mut k = word;
        let mut shift = word >> 1;
        while shift != 0 {
            k ^= shift;
            shift >>= 1;
        }
        self.max_level() - 2 * k as i32
    }

    /// Gray word carried by `level`; `level` must be in the alphabet.
    pub fn word_for_level(&self, level: i32) -> u32 {
        let k = ((self.max_level() - level) / 2) as u32;
        k ^ (k >> 1)
    }
}

impl TryFrom<u32> for Constellation {
    type Error = Error;
    fn try_from(order: u32) -> Result<Self> {
        Self::new(order)
    }
}

impl From<Constellation> for u32 {
    fn from(c: Constellation) -> u32 {
        c.order
    }
}

/// A point of the real signal space: one PAM level per real dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolVector {
    values: Vec<i32>,
}

impl SymbolVector {
    pub fn new(values: Vec<i32>, c: &Constellation) -> Result<Self> {
        if values.is_empty() || values.len() % 2 != 0 {
            return Err(Error::Dimension(format!(
                "symbol vector length {} is not a positive even number",
                values.len()
            )));
        }
        if let Some((p, v)) = values.iter().enumerate().find(|(_, &v)| !c.contains(v)) {
            return Err(Error::NotInSignalSpace(format!(
                "component {p} = {v} is not a {}-QAM PAM level",
                c.order()
            )));
        }
        Ok(Self { values })
    }

    /// Builds a vector without the even-length requirement, for real systems
    /// that do not come from a complex model. Levels are still validated.
    pub fn from_levels(values: Vec<i32>, c: &Constellation) -> Result<Self> {
        if let Some((p, v)) = values.iter().enumerate().find(|(_, &v)| !c.contains(v)) {
            return Err(Error::NotInSignalSpace(format!(
                "component {p} = {v} is not a {}-QAM PAM level",
                c.order()
            )));
        }
        Ok(Self { values })
    }

    /// Same value on every dimension.
    pub fn constant(len: usize, level: i32, c: &Constellation) -> Result<Self> {
        Self::from_levels(vec![level; len], c)
    }

    pub(crate) fn from_raw(values: Vec<i32>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [i32] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_iterator(self.values.len(), self.values.iter().map(|&v| f64::from(v)))
    }
}

/// Maps `2 * n_tx * bits_per_real_dim` bits onto a symbol vector.
///
/// Dimension `p` consumes bits `p*b .. (p+1)*b`, most significant first, so
/// dimensions `0..n_tx` carry the in-phase parts and `n_tx..2n_tx` the
/// quadrature parts.
pub fn modulate(bits: &[u8], c: &Constellation, n_tx: usize) -> Result<SymbolVector> {
    let b = c.bits_per_real_dim();
    let expected = 2 * n_tx * b;
    if n_tx == 0 || bits.len() != expected {
        return Err(Error::BitCount {
            expected,
            got: bits.len(),
        });
    }
    if bits.iter().any(|&x| x > 1) {
        return Err(Error::InvalidParameter("bits must be 0 or 1".into()));
    }
    let values = bits
        .chunks_exact(b)
        .map(|chunk| {
            let word = chunk.iter().fold(0u32, |w, &bit| (w << 1) | u32::from(bit));
            c.level_for_word(word)
        })
        .collect();
    Ok(SymbolVector::from_raw(values))
}

/// Inverse of [`modulate`].
pub fn demodulate(d: &SymbolVector, c: &Constellation) -> Result<Vec<u8>> {
    let b = c.bits_per_real_dim();
    let mut bits = Vec::with_capacity(d.len() * b);
    for &level in d.values() {
        if !c.contains(level) {
            return Err(Error::NotInSignalSpace(format!(
                "level {level} is not a {}-QAM PAM level",
                c.order()
            )));
        }
        let word = c.word_for_level(level);
        bits.extend((0..b).rev().map(|i| ((word >> i) & 1) as u8));
    }
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pam_points_are_symmetric_with_spacing_two() {
        for m in [4, 16, 64, 256] {
            let c = Constellation::new(m).unwrap();
            let p = c.pam_points();
            assert_eq!(p.len() as u32, c.levels());
            assert!(p.windows(2).all(|w| w[1] - w[0] == 2));
            assert!(p.iter().zip(p.iter().rev()).all(|(a, b)| *a == -*b));
        }
        assert_eq!(Constellation::qam16().pam_points(), &[-3, -1, 1, 3]);
    }

    #[test]
    fn symbol_energy() {
        assert_eq!(Constellation::qam4().symbol_energy(), 2.0);
        assert_eq!(Constellation::qam16().symbol_energy(), 10.0);
        assert_eq!(Constellation::qam16().real_symbol_energy(), 5.0);
        assert_eq!(Constellation::new(64).unwrap().symbol_energy(), 42.0);
    }

    #[test]
    fn rejects_non_square_orders() {
        for m in [0, 1, 2, 8, 12, 32] {
            assert_eq!(Constellation::new(m), Err(Error::QamOrder(m)));
        }
    }

    #[test]
    fn qam4_gray_map() {
        let c = Constellation::qam4();
        // n_tx = 1: dimension 0 is in-phase, dimension 1 quadrature.
        let d = modulate(&[0, 1], &c, 1).unwrap();
        assert_eq!(d.values(), &[1, -1]);
    }

    #[test]
    fn qam16_all_zero_bits_hit_the_first_gray_level() {
        let c = Constellation::qam16();
        let d = modulate(&[0; 16], &c, 4).unwrap();
        assert!(d.values().iter().all(|&v| v == 3));
    }

    #[test]
    fn adjacent_levels_differ_in_one_bit() {
        for m in [4, 16, 64, 256] {
            let c = Constellation::new(m).unwrap();
            for w in c.pam_points().windows(2) {
                let diff = c.word_for_level(w[0]) ^ c.word_for_level(w[1]);
                assert_eq!(diff.count_ones(), 1, "M={m} levels {w:?}");
            }
        }
    }

    #[test]
    fn wrong_bit_count_is_rejected() {
        let c = Constellation::qam16();
        assert_eq!(
            modulate(&[0; 7], &c, 1),
            Err(Error::BitCount { expected: 4, got: 7 })
        );
        assert!(modulate(&[], &c, 0).is_err());
        assert!(modulate(&[2, 0, 0, 0], &c, 1).is_err());
    }

    #[test]
    fn quantize_ties_go_up() {
        let c = Constellation::qam16();
        assert_eq!(c.quantize(0.0), 1);
        assert_eq!(c.quantize(2.0), 3);
        assert_eq!(c.quantize(-2.0), -1);
        assert_eq!(c.quantize(-0.1), -1);
        assert_eq!(c.quantize(17.0), 3);
        assert_eq!(c.quantize(-17.0), -3);
        assert_eq!(c.quantize(1.9), 1);
        let q = Constellation::qam4();
        assert_eq!(q.quantize(0.0), 1);
        assert_eq!(q.quantize(-1e-300), -1);
    }

    #[test]
    fn symbol_vector_membership() {
        let c = Constellation::qam4();
        assert!(SymbolVector::new(vec![1, -1], &c).is_ok());
        assert!(matches!(
            SymbolVector::new(vec![0, 1], &c),
            Err(Error::NotInSignalSpace(_))
        ));
        assert!(SymbolVector::new(vec![3, 1], &c).is_err());
        assert!(SymbolVector::new(vec![1], &c).is_err());
    }

    proptest! {
        #[test]
        fn demodulate_inverts_modulate(
            order in prop::sample::select(vec![4u32, 16, 64]),
            n_tx in 1usize..6,
            seed in any::<u64>(),
        ) {
            let c = Constellation::new(order).unwrap();
            let n = 2 * n_tx * c.bits_per_real_dim();
            let bits: Vec<u8> = (0..n).map(|i| ((seed >> (i % 64)) & 1) as u8 ^ (i as u8 & 1)).collect();
            let d = modulate(&bits, &c, n_tx).unwrap();
            prop_assert!(d.values().iter().all(|&v| c.contains(v)));
            prop_assert_eq!(demodulate(&d, &c).unwrap(), bits);
        }
    }
}
