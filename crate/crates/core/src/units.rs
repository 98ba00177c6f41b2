//! ADC scaling for the 24-bit, 8-channel front end.

use serde::{Deserialize, Serialize};

use crate::types::{ADC_MAX, ADC_MIN};

/// Internal reference of the front end, volts.
pub const DEFAULT_VREF_V: f64 = 4.5;
/// Programmable gain used on every channel.
pub const DEFAULT_GAIN: f64 = 24.0;

const FULL_SCALE_CODES: f64 = (1u32 << 24) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcScale {
    pub vref_v: f64,
    pub gain: f64,
}

impl Default for AdcScale {
    fn default() -> Self {
        Self { vref_v: DEFAULT_VREF_V, gain: DEFAULT_GAIN }
    }
}

impl AdcScale {
    /// Peak-to-peak input span in volts (`2 * vref / gain`).
    pub fn span_v(&self) -> f64 {
        2.0 * self.vref_v / self.gain
    }

    /// Microvolts per least significant bit.
    pub fn lsb_uv(&self) -> f64 {
        self.span_v() / FULL_SCALE_CODES * 1e6
    }

    pub fn to_microvolts(&self, count: i32) -> f64 {
        adc_to_microvolts(count, self.vref_v, self.gain)
    }

    /// Nearest ADC code for a microvolt value, saturating at the rails.
    pub fn to_counts(&self, uv: f64) -> i32 {
        let c = (uv / self.lsb_uv()).round();
        c.clamp(ADC_MIN as f64, ADC_MAX as f64) as i32
    }
}

/// Converts a signed 24-bit code to microvolts: `count * (2 vref / gain) / 2^24`.
pub fn adc_to_microvolts(count: i32, vref_v: f64, gain: f64) -> f64 {
    debug_assert!(vref_v > 0.0 && gain > 0.0);
    count as f64 * (2.0 * vref_v * 1e6) / (gain * FULL_SCALE_CODES)
}
