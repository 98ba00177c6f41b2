//! IIR design through analog prototypes, the lowpass-to-bandpass transform
//! and the bilinear transform, realized as second-order sections.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::sos::{BiquadCascade, Section};
use crate::error::{Error, Result};

/// How normalized band edges are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeNormalization {
    /// Fractions of the sampling frequency (0.4 at 250 Hz is 100 Hz).
    #[default]
    SamplingRate,
    /// Fractions of the Nyquist frequency (0.4 at 250 Hz is 50 Hz).
    Nyquist,
}

impl EdgeNormalization {
    /// Converts `(lo, hi)` to cycles per sample.
    pub fn to_cycles_per_sample(self, (lo, hi): (f64, f64)) -> (f64, f64) {
        match self {
            EdgeNormalization::SamplingRate => (lo, hi),
            EdgeNormalization::Nyquist => (lo / 2.0, hi / 2.0),
        }
    }
}

struct Zpk {
    zeros: Vec<Complex64>,
    poles: Vec<Complex64>,
}

fn butterworth_prototype(order: usize) -> Zpk {
    let n = order as f64;
    let poles = (0..order)
        .map(|k| Complex64::from_polar(1.0, PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n)))
        .collect();
    Zpk { zeros: Vec::new(), poles }
}

/// Inverse Chebyshev prototype scaled so the -3 dB point sits at 1 rad/s.
fn chebyshev2_prototype(order: usize, stop_atten_db: f64) -> Zpk {
    let n = order as f64;
    let eps = 1.0 / (10f64.powf(0.1 * stop_atten_db) - 1.0).sqrt();
    let mu = (1.0 / eps).asinh() / n;
    let mut zeros = Vec::new();
    let mut poles = Vec::new();
    let mut m = -(order as i64) + 1;
    while m < order as i64 {
        let theta = PI * m as f64 / (2.0 * n);
        if m != 0 {
            // jw-axis zeros at +-j / sin(theta)
            zeros.push(Complex64::new(0.0, 1.0 / theta.sin()));
        }
        let p = -Complex64::from_polar(1.0, theta);
        let p = Complex64::new(mu.sinh() * p.re, mu.cosh() * p.im);
        poles.push(1.0 / p);
        m += 2;
    }
    let w3 = 1.0 / ((1.0 / eps).acosh() / n).cosh();
    Zpk {
        zeros: zeros.into_iter().map(|z| z / w3).collect(),
        poles: poles.into_iter().map(|p| p / w3).collect(),
    }
}

/// `s -> (s^2 + w0^2) / (s bw)`.
fn lowpass_to_bandpass(proto: Zpk, w0: f64, bw: f64) -> Zpk {
    let split = |r: Complex64| {
        let rb = r * bw;
        let disc = (rb * rb - 4.0 * w0 * w0).sqrt();
        [(rb + disc) / 2.0, (rb - disc) / 2.0]
    };
    let degree = proto.poles.len() - proto.zeros.len();
    let mut zeros: Vec<Complex64> = proto.zeros.into_iter().flat_map(split).collect();
    zeros.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), degree));
    let poles = proto.poles.into_iter().flat_map(split).collect();
    Zpk { zeros, poles }
}

/// `z = (1 + s) / (1 - s)`; analog frequency `tan(pi f / fs)` maps to `f`.
fn bilinear(analog: Zpk) -> Zpk {
    let map = |s: Complex64| (1.0 + s) / (1.0 - s);
    let degree = analog.poles.len() - analog.zeros.len();
    let mut zeros: Vec<Complex64> = analog.zeros.into_iter().map(map).collect();
    zeros.extend(std::iter::repeat_n(Complex64::new(-1.0, 0.0), degree));
    Zpk { zeros, poles: analog.poles.into_iter().map(map).collect() }
}

/// Groups roots into real quadratic factors `(z - r1)(z - r2)`.
fn quadratic_factors(roots: &[Complex64], pair_reals_outer: bool) -> Vec<[Complex64; 2]> {
    let tol = 1e-9;
    let mut complex: Vec<Complex64> = roots.iter().copied().filter(|r| r.im > tol).collect();
    let mut reals: Vec<f64> = roots.iter().filter(|r| r.im.abs() <= tol).map(|r| r.re).collect();
    complex.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    reals.sort_by(f64::total_cmp);
    let mut out: Vec<[Complex64; 2]> = complex.into_iter().map(|c| [c, c.conj()]).collect();
    if pair_reals_outer {
        let n = reals.len();
        for i in 0..n / 2 {
            out.push([Complex64::new(reals[i], 0.0), Complex64::new(reals[n - 1 - i], 0.0)]);
        }
    } else {
        for pair in reals.chunks(2) {
            let second = pair.get(1).copied().unwrap_or(0.0);
            out.push([Complex64::new(pair[0], 0.0), Complex64::new(second, 0.0)]);
        }
    }
    out
}

/// Pairs poles with their nearest zeros and normalizes every section to unit
/// magnitude at `f_ref` (cycles per sample).
fn zpk_to_sections(zpk: Zpk, f_ref: f64) -> Result<BiquadCascade> {
    let pole_quads = quadratic_factors(&zpk.poles, false);
    let mut zero_quads = quadratic_factors(&zpk.zeros, true);
    if pole_quads.len() != zero_quads.len() {
        return Err(Error::Design("unbalanced zero/pole pairing".into()));
    }
    let z_inv = Complex64::from_polar(1.0, -2.0 * PI * f_ref);
    let mut sections = Vec::with_capacity(pole_quads.len());
    for pq in pole_quads {
        let (idx, _) = zero_quads
            .iter()
            .enumerate()
            .map(|(i, zq)| (i, (zq[0] - pq[0]).norm().min((zq[1] - pq[0]).norm())))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| Error::Design("ran out of zeros".into()))?;
        let zq = zero_quads.swap_remove(idx);
        let sec = Section {
            b0: 1.0,
            b1: -(zq[0] + zq[1]).re,
            b2: (zq[0] * zq[1]).re,
            a1: -(pq[0] + pq[1]).re,
            a2: (pq[0] * pq[1]).re,
        };
        let g = sec.response(z_inv).norm();
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::Design("section has no gain at the reference frequency".into()));
        }
        sections.push(sec.scaled(1.0 / g));
    }
    let cascade = BiquadCascade::new(sections);
    if !cascade.is_stable() {
        return Err(Error::Design(format!(
            "design is unstable or ill-conditioned (max pole radius {:.9})",
            cascade.max_pole_radius()
        )));
    }
    Ok(cascade)
}

fn check_band(lo: f64, hi: f64) -> Result<()> {
    if !(lo > 0.0 && lo < hi && hi < 0.5) {
        return Err(Error::Design(format!(
            "band edges must satisfy 0 < lo < hi < 0.5 cycles/sample, got {lo}..{hi}"
        )));
    }
    Ok(())
}

fn bandpass_geometry(lo: f64, hi: f64) -> (f64, f64, f64) {
    let wl = (PI * lo).tan();
    let wh = (PI * hi).tan();
    let w0 = (wl * wh).sqrt();
    let f_center = w0.atan() / PI;
    (w0, wh - wl, f_center)
}

/// Butterworth bandpass from a lowpass prototype of `order`; the cascade has
/// `order` sections (2 * order poles). Edges are in cycles per sample and
/// are the -3 dB points. Unit gain at the geometric band center.
pub fn design_butterworth_bandpass(order: usize, lo_norm: f64, hi_norm: f64) -> Result<BiquadCascade> {
    if order == 0 {
        return Err(Error::Design("order must be at least 1".into()));
    }
    check_band(lo_norm, hi_norm)?;
    let (w0, bw, fc) = bandpass_geometry(lo_norm, hi_norm);
    let zpk = bilinear(lowpass_to_bandpass(butterworth_prototype(order), w0, bw));
    zpk_to_sections(zpk, fc)
}

pub fn design_butterworth_bandpass_hz(order: usize, lo_hz: f64, hi_hz: f64, fs_hz: f64) -> Result<BiquadCascade> {
    design_butterworth_bandpass(order, lo_hz / fs_hz, hi_hz / fs_hz)
}

/// Chebyshev type II bandpass with a monotone passband whose -3 dB edges are
/// `lo_hz` and `hi_hz`, and an equiripple stopband at `stop_atten_db`.
pub fn design_chebyshev2_bandpass(
    order: usize,
    lo_hz: f64,
    hi_hz: f64,
    stop_atten_db: f64,
    fs_hz: f64,
) -> Result<BiquadCascade> {
    if order == 0 {
        return Err(Error::Design("order must be at least 1".into()));
    }
    if !(stop_atten_db > 3.0) {
        return Err(Error::Design(format!("stopband attenuation {stop_atten_db} dB must exceed 3 dB")));
    }
    let (lo, hi) = (lo_hz / fs_hz, hi_hz / fs_hz);
    check_band(lo, hi)?;
    let (w0, bw, fc) = bandpass_geometry(lo, hi);
    let zpk = bilinear(lowpass_to_bandpass(chebyshev2_prototype(order, stop_atten_db), w0, bw));
    zpk_to_sections(zpk, fc)
}

/// Second-order notch: zeros on the unit circle at `center_hz`, pole radius
/// set so the response is exactly -3 dB at `center_hz +- bw_3db_hz / 2`.
pub fn design_notch(center_hz: f64, bw_3db_hz: f64, fs_hz: f64) -> Result<BiquadCascade> {
    if !(center_hz > 0.0 && center_hz < fs_hz / 2.0) {
        return Err(Error::Design(format!(
            "notch center {center_hz} Hz must lie in (0, {}) Hz",
            fs_hz / 2.0
        )));
    }
    if !(bw_3db_hz > 0.0 && bw_3db_hz < fs_hz / 2.0) {
        return Err(Error::Design(format!("notch bandwidth {bw_3db_hz} Hz out of range")));
    }
    let w0 = 2.0 * PI * center_hz / fs_hz;
    let bw = 2.0 * PI * bw_3db_hz / fs_hz;
    let g = 1.0 / (1.0 + (bw / 2.0).tan());
    let sec = Section {
        b0: g,
        b1: -2.0 * g * w0.cos(),
        b2: g,
        a1: -2.0 * g * w0.cos(),
        a2: 2.0 * g - 1.0,
    };
    Ok(BiquadCascade::new(vec![sec]))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 250.0;

    #[test]
    fn butterworth_center_is_unity() {
        let c = design_butterworth_bandpass(4, 0.004, 0.4).unwrap();
        assert_eq!(c.sections().len(), 4);
        let (w0, _, fc) = bandpass_geometry(0.004, 0.4);
        assert!(w0 > 0.0);
        assert!(c.magnitude_db(fc * FS, FS).abs() < 0.1);
    }

    #[test]
    fn butterworth_edges_are_minus_3db() {
        let c = design_butterworth_bandpass(4, 0.004, 0.4).unwrap();
        assert!((c.magnitude_db(1.0, FS) + 3.0103).abs() < 0.05);
        assert!((c.magnitude_db(100.0, FS) + 3.0103).abs() < 0.05);
        assert!(c.magnitude_db(50.0, FS) > -1.0);
    }

    #[test]
    fn butterworth_skirts_reach_24db_one_octave_out() {
        let c = design_butterworth_bandpass(4, 0.004, 0.4).unwrap();
        assert!(c.magnitude_db(0.5, FS) <= -24.0, "{}", c.magnitude_db(0.5, FS));
        // The upper octave (200 Hz) lies beyond Nyquist; the skirt is
        // checked at the top of the representable band instead.
        assert!(c.magnitude_db(124.0, FS) <= -24.0);
        let m = design_butterworth_bandpass_hz(4, 1.0, 16.0, FS).unwrap();
        assert!(m.magnitude_db(0.5, FS) <= -24.0);
        assert!(m.magnitude_db(32.0, FS) <= -24.0, "{}", m.magnitude_db(32.0, FS));
    }

    #[test]
    fn invalid_edges_are_rejected() {
        assert!(design_butterworth_bandpass(4, 0.3, 0.2).is_err());
        assert!(design_butterworth_bandpass(4, 0.0, 0.2).is_err());
        assert!(design_butterworth_bandpass(4, 0.1, 0.5).is_err());
        assert!(design_butterworth_bandpass(0, 0.1, 0.2).is_err());
    }

    #[test]
    fn nyquist_normalization_halves_edges() {
        let (lo, hi) = EdgeNormalization::Nyquist.to_cycles_per_sample((0.004, 0.4));
        assert!((lo * FS - 0.5).abs() < 1e-12 && (hi * FS - 50.0).abs() < 1e-12);
    }

    #[test]
    fn notch_geometry() {
        let c = design_notch(50.0, 4.0, FS).unwrap();
        assert!(c.magnitude_db(50.0, FS) <= -30.0);
        for f in [48.0, 52.0] {
            assert!((c.magnitude_db(f, FS) + 3.0).abs() <= 1.0);
        }
        for f in [30.0, 70.0] {
            assert!(c.magnitude_db(f, FS).abs() <= 0.5);
        }
        let zeros = crate::dsp::sos::quadratic_roots(c.sections()[0].b0, c.sections()[0].b1, c.sections()[0].b2);
        for z in zeros {
            assert!((z.norm() - 1.0).abs() < 1e-12);
            assert!((z.arg().abs() - 2.0 * PI * 50.0 / FS).abs() < 1e-12);
        }
        assert!(c.is_stable());
    }

    #[test]
    fn notch_above_nyquist_is_rejected() {
        assert!(design_notch(130.0, 4.0, FS).is_err());
        assert!(design_notch(50.0, 0.0, FS).is_err());
    }

    #[test]
    fn chebyshev2_response() {
        let c = design_chebyshev2_bandpass(6, 2.0, 30.0, 40.0, FS).unwrap();
        assert!(c.magnitude_db(16.0, FS) >= -1.0);
        assert!(c.magnitude_db(50.0, FS) <= -40.0 + 1.0, "{}", c.magnitude_db(50.0, FS));
        assert!((c.magnitude_db(2.0, FS) + 3.0103).abs() < 0.05);
        assert!((c.magnitude_db(30.0, FS) + 3.0103).abs() < 0.05);
        // Equiripple stopband never rises above the attenuation floor.
        for f in (60..125).map(|f| f as f64) {
            assert!(c.magnitude_db(f, FS) <= -40.0 + 1e-6, "{f}");
        }
        // Monotone passband shoulders.
        let mut prev = f64::NEG_INFINITY;
        for f in (20..=60).map(|k| k as f64 * 0.1) {
            let m = c.magnitude_db(f, FS);
            assert!(m >= prev - 1e-9);
            prev = m;
        }
    }

    #[test]
    fn chebyshev2_impulse_energy_is_finite() {
        let c = design_chebyshev2_bandpass(6, 2.0, 30.0, 40.0, FS).unwrap();
        let mut st = c.state(1);
        let mut x = ndarray::Array2::zeros((1, 20_000));
        x[[0, 0]] = 1.0;
        let y = crate::dsp::filter_forward(&c, &mut st, x.view()).unwrap();
        let energy: f64 = y.iter().map(|v| v * v).sum();
        let tail: f64 = y.iter().skip(15_000).map(|v| v * v).sum();
        assert!(energy.is_finite() && energy > 0.0);
        assert!(tail < 1e-12 * energy);
    }

    #[test]
    fn default_designs_are_stable() {
        let designs = [
            design_butterworth_bandpass(4, 0.004, 0.4).unwrap(),
            design_butterworth_bandpass(4, 0.002, 0.2).unwrap(),
            design_butterworth_bandpass_hz(4, 1.0, 16.0, FS).unwrap(),
            design_notch(50.0, 4.0, FS).unwrap(),
            design_notch(100.0, 4.0, FS).unwrap(),
            design_chebyshev2_bandpass(6, 2.0, 30.0, 40.0, FS).unwrap(),
        ];
        for d in designs {
            assert!(d.max_pole_radius() < 1.0 - 1e-6);
        }
    }
}
