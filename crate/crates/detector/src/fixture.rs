//! Band-power test oracle standing in for trained weights.
//!
//! Not a clinical detector: it exists so end-to-end plumbing can be checked
//! against a predictable scorer.

use neoscan_core::dsp::welch_psd;
use neoscan_core::{Epoch, MODEL_FS_HZ};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct BandPowerOracle {
    pub band_hz: (f64, f64),
    pub reference_hz: (f64, f64),
    /// Band fraction above which a one-second segment counts as dominant.
    pub dominance: f64,
    /// Dominant seconds that saturate the score at 1.
    pub saturation_s: f64,
}

impl Default for BandPowerOracle {
    fn default() -> Self {
        Self { band_hz: (2.0, 4.0), reference_hz: (1.0, 15.0), dominance: 0.5, saturation_s: 4.0 }
    }
}

impl BandPowerOracle {
    /// Fraction of 1-15 Hz power inside the band, pooled over channels, for
    /// each one-second segment of the epoch.
    pub fn segment_fractions(&self, epoch: &Epoch) -> Result<Vec<f64>> {
        let x = epoch.data();
        let seg = MODEL_FS_HZ as usize;
        let n_seg = x.ncols() / seg;
        let mut out = Vec::with_capacity(n_seg);
        for s in 0..n_seg {
            let (mut band, mut total) = (0.0, 0.0);
            for row in x.rows() {
                let piece: Vec<f64> = row.iter().skip(s * seg).take(seg).copied().collect();
                let p = welch_psd(&piece, MODEL_FS_HZ, seg, 0.0)?;
                band += p.band_power(self.band_hz.0, self.band_hz.1);
                total += p.band_power(self.reference_hz.0, self.reference_hz.1);
            }
            out.push(if total > 0.0 { band / total } else { 0.0 });
        }
        Ok(out)
    }

    pub fn probability(&self, epoch: &Epoch) -> Result<f64> {
        let dominant = self.segment_fractions(epoch)?.iter().filter(|&&f| f > self.dominance).count();
        Ok((dominant as f64 / self.saturation_s).min(1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use std::f64::consts::PI;

    fn epoch(f: impl Fn(usize, f64) -> f64) -> Epoch {
        Epoch::new(Array2::from_shape_fn((12, 384), |(c, i)| f(c, i as f64 / 32.0)), 0).unwrap()
    }

    #[test]
    fn three_hz_saturates() {
        let e = epoch(|_, t| (2.0 * PI * 3.0 * t).sin());
        assert_eq!(BandPowerOracle::default().probability(&e).unwrap(), 1.0);
    }

    #[test]
    fn ten_hz_scores_zero() {
        let e = epoch(|_, t| (2.0 * PI * 10.0 * t).sin());
        assert_eq!(BandPowerOracle::default().probability(&e).unwrap(), 0.0);
    }

    #[test]
    fn partial_onset_scales_linearly() {
        // 3 Hz only during the last two seconds
        let e = epoch(|_, t| if t >= 10.0 { (2.0 * PI * 3.0 * t).sin() } else { 0.2 * (2.0 * PI * 10.0 * t).sin() });
        assert_eq!(BandPowerOracle::default().probability(&e).unwrap(), 0.5);
    }

    #[test]
    fn silence_scores_zero() {
        let e = epoch(|_, _| 0.0);
        assert_eq!(BandPowerOracle::default().probability(&e).unwrap(), 0.0);
    }
}
