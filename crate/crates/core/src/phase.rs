//! Quantized RIS phase shifts.
//!
//! A [`PhaseSet`] is the hardware quantization of the surface: `2^bits`
//! uniformly spaced angles on `[0, 2π)`. A [`RisPhaseConfig`] assigns one of
//! those angles to every RIS element and caches the unit-modulus phasors, so
//! that the diagonal reflection matrix Φ never has to be materialized.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSet {
    bits: u32,
    phasors: Vec<Complex64>,
}

impl PhaseSet {
    pub fn new(bits: u32) -> Result<Self> {
        if bits < 1 {
            return Err(Error::Config("phase_bits must be at least 1".into()));
        }
        if bits > 16 {
            return Err(Error::Config(format!("phase_bits = {bits} is unreasonably large")));
        }
        let levels = 1usize << bits;
        let phasors = (0..levels)
            .map(|m| phasor_of(2.0 * PI * m as f64 / levels as f64))
            .collect();
        Ok(Self { bits, phasors })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.phasors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phasors.is_empty()
    }

    /// Angle (radians) of the `m`-th level.
    pub fn angle(&self, m: usize) -> f64 {
        2.0 * PI * m as f64 / self.len() as f64
    }

    pub fn phasor(&self, m: usize) -> Complex64 {
        self.phasors[m]
    }

    pub fn phasors(&self) -> &[Complex64] {
        &self.phasors
    }
}

/// Exact unit-modulus phasor. The quarter-turn angles are special-cased so the
/// 1- and 2-bit sets contain exactly ±1 and ±i.
fn phasor_of(angle: f64) -> Complex64 {
    let quarter = angle / (PI / 2.0);
    if (quarter - quarter.round()).abs() < 1e-12 {
        return match (quarter.round() as i64).rem_euclid(4) {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    let (s, c) = angle.sin_cos();
    // renormalize to remove the last-ulp drift of sin/cos
    let z = Complex64::new(c, s);
    z / z.norm()
}

/// Diagonal RIS reflection matrix with entries from a [`PhaseSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct RisPhaseConfig {
    levels: Vec<usize>,
    phasors: Vec<Complex64>,
    set: PhaseSet,
}

impl RisPhaseConfig {
    pub fn from_levels(set: &PhaseSet, levels: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = levels.iter().find(|&&m| m >= set.len()) {
            return Err(Error::Config(format!(
                "phase level {bad} outside a {}-level set",
                set.len()
            )));
        }
        let phasors = levels.iter().map(|&m| set.phasor(m)).collect();
        Ok(Self {
            levels,
            phasors,
            set: set.clone(),
        })
    }

    /// Φ = I (all elements at level 0).
    pub fn identity(set: &PhaseSet, n: usize) -> Self {
        Self::from_levels(set, vec![0; n]).expect("level 0 always valid")
    }

    /// i.i.d. uniform levels.
    pub fn random<R: Rng + ?Sized>(set: &PhaseSet, n: usize, rng: &mut R) -> Self {
        let levels = (0..n).map(|_| rng.random_range(0..set.len())).collect();
        Self::from_levels(set, levels).expect("levels drawn in range")
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn phasors(&self) -> &[Complex64] {
        &self.phasors
    }

    pub fn angles(&self) -> Vec<f64> {
        self.levels.iter().map(|&m| self.set.angle(m)).collect()
    }

    pub fn phase_set(&self) -> &PhaseSet {
        &self.set
    }

    pub fn set_level(&mut self, element: usize, level: usize) {
        self.levels[element] = level;
        self.phasors[element] = self.set.phasor(level);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_bit_set_is_plus_minus_one() {
        let set = PhaseSet::new(1).unwrap();
        assert_eq!(set.phasors(), &[Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]);
    }

    #[test]
    fn zero_bits_rejected() {
        assert!(matches!(PhaseSet::new(0), Err(Error::Config(_))));
    }

    #[test]
    fn phasors_are_unit_modulus() {
        for bits in 1..=6 {
            let set = PhaseSet::new(bits).unwrap();
            for z in set.phasors() {
                assert!((z.norm() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn random_config_uses_set_levels() {
        let set = PhaseSet::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = RisPhaseConfig::random(&set, 64, &mut rng);
        for (m, z) in cfg.levels().iter().zip(cfg.phasors()) {
            assert!(*m < 8);
            assert_eq!(*z, set.phasor(*m));
        }
    }

    #[test]
    fn out_of_range_level_rejected() {
        let set = PhaseSet::new(2).unwrap();
        assert!(RisPhaseConfig::from_levels(&set, vec![0, 4]).is_err());
    }
}
