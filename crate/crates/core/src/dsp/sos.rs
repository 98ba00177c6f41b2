use ndarray::{Array2, ArrayView2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// One second-order section, `a0` normalized to 1:
/// `H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Section {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Section {
    pub fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b0 + self.b1 * z_inv + self.b2 * z2) / (1.0 + self.a1 * z_inv + self.a2 * z2)
    }

    /// Roots of `z^2 + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        quadratic_roots(1.0, self.a1, self.a2)
    }

    pub fn scaled(self, g: f64) -> Self {
        Self { b0: self.b0 * g, b1: self.b1 * g, b2: self.b2 * g, ..self }
    }

    fn is_finite(&self) -> bool {
        [self.b0, self.b1, self.b2, self.a1, self.a2].iter().all(|v| v.is_finite())
    }
}

pub(crate) fn quadratic_roots(a: f64, b: f64, c: f64) -> [Complex64; 2] {
    let disc = Complex64::new(b * b - 4.0 * a * c, 0.0).sqrt();
    [(-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a)]
}

/// An immutable cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct BiquadCascade {
    sections: Vec<Section>,
}

impl BiquadCascade {
    pub fn new(sections: Vec<Section>) -> Self {
        Self { sections }
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, fs_hz: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * freq_hz / fs_hz;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections.iter().map(|s| s.response(z_inv)).product()
    }

    pub fn magnitude_db(&self, freq_hz: f64, fs_hz: f64) -> f64 {
        20.0 * self.response(freq_hz, fs_hz).norm().log10()
    }

    /// Largest pole radius over all sections.
    pub fn max_pole_radius(&self) -> f64 {
        self.sections
            .iter()
            .flat_map(|s| s.poles())
            .map(|p| p.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(Section::is_finite) && self.max_pole_radius() < 1.0 - 1e-6
    }

    /// Delay registers for `n_channels` independent streams.
    pub fn state(&self, n_channels: usize) -> FilterState {
        FilterState { n_channels, regs: vec![[0.0; 2]; n_channels * self.sections.len()] }
    }

    /// Coefficients as text, one `b0 b1 b2 a1 a2` line per section.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sections {
            out.push_str(&format!(
                "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e}\n",
                s.b0, s.b1, s.b2, s.a1, s.a2
            ));
        }
        out
    }
}

/// Per-channel transposed direct form II registers for a [`BiquadCascade`].
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    n_channels: usize,
    regs: Vec<[f64; 2]>,
}

impl FilterState {
    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn is_zero(&self) -> bool {
        self.regs.iter().all(|r| r[0] == 0.0 && r[1] == 0.0)
    }

    /// State that makes the cascade start in steady state for a constant
    /// input equal to `initial[ch]` on each channel.
    pub fn steady_state(cascade: &BiquadCascade, initial: &[f64]) -> Self {
        let n_sec = cascade.sections.len();
        let mut regs = vec![[0.0; 2]; initial.len() * n_sec];
        for (ch, &x0) in initial.iter().enumerate() {
            let mut x = x0;
            for (k, s) in cascade.sections.iter().enumerate() {
                let g = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
                let y = g * x;
                let s2 = s.b2 * x - s.a2 * y;
                let s1 = s.b1 * x - s.a1 * y + s2;
                regs[ch * n_sec + k] = [s1, s2];
                x = y;
            }
        }
        Self { n_channels: initial.len(), regs }
    }
}

/// Causal, per-channel filtering of a channels x samples block. State carries
/// across calls, so filtering a signal in pieces equals filtering it whole.
pub fn filter_forward(
    cascade: &BiquadCascade,
    state: &mut FilterState,
    x: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if x.nrows() != state.n_channels {
        return Err(Error::Shape(format!(
            "filter state has {} channels, input has {}",
            state.n_channels,
            x.nrows()
        )));
    }
    if state.regs.len() != state.n_channels * cascade.sections.len() {
        return Err(Error::Shape("filter state was allocated for a different cascade".into()));
    }
    let n_sec = cascade.sections.len();
    let mut out = Array2::zeros(x.raw_dim());
    for (ch, (row, mut orow)) in x.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))).enumerate() {
        // Validate before touching the registers so a rejected block leaves
        // the state untouched.
        if let Some(idx) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { channel: ch, index: idx });
        }
        let regs = &mut state.regs[ch * n_sec..(ch + 1) * n_sec];
        for (xi, yo) in row.iter().zip(orow.iter_mut()) {
            let mut v = *xi;
            for (s, r) in cascade.sections.iter().zip(regs.iter_mut()) {
                let y = s.b0 * v + r[0];
                r[0] = s.b1 * v - s.a1 * y + r[1];
                r[1] = s.b2 * v - s.a2 * y;
                v = y;
            }
            *yo = v;
        }
    }
    Ok(out)
}

/// Forward-backward (zero-phase) filtering for offline analysis. The signal is
/// extended by odd reflection at both ends and each pass starts in steady
/// state, which keeps edge transients short.
pub fn filter_zero_phase(cascade: &BiquadCascade, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    filter_zero_phase_padded(cascade, x, 3 * (2 * cascade.sections.len() + 1), Extension::Odd)
}

/// How [`filter_zero_phase_padded`] extends the signal past its ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extension {
    /// Point reflection about the end sample; preserves slope.
    Odd,
    /// Mirror reflection; preserves level, so signals ending away from zero
    /// do not see a step.
    Even,
}

/// [`filter_zero_phase`] with an explicit reflection length (clamped to one
/// less than the signal length) and extension mode.
pub fn filter_zero_phase_padded(
    cascade: &BiquadCascade,
    x: ArrayView2<'_, f64>,
    pad: usize,
    mode: Extension,
) -> Result<Array2<f64>> {
    let n = x.ncols();
    if n == 0 {
        return Ok(x.to_owned());
    }
    let pad = pad.min(n - 1);
    let n_ch = x.nrows();
    let mut ext = Array2::zeros((n_ch, n + 2 * pad));
    for ch in 0..n_ch {
        let row = x.row(ch);
        let (first, last) = match mode {
            Extension::Odd => (2.0 * row[0], 2.0 * row[n - 1]),
            Extension::Even => (0.0, 0.0),
        };
        let sign = if mode == Extension::Odd { -1.0 } else { 1.0 };
        for k in 0..pad {
            ext[[ch, pad - 1 - k]] = first + sign * row[k + 1];
            ext[[ch, pad + n + k]] = last + sign * row[n - 2 - k];
        }
        for k in 0..n {
            ext[[ch, pad + k]] = row[k];
        }
    }
    let firsts: Vec<f64> = (0..n_ch).map(|c| ext[[c, 0]]).collect();
    let mut st = FilterState::steady_state(cascade, &firsts);
    let mut fwd = filter_forward(cascade, &mut st, ext.view())?;
    fwd.invert_axis(Axis(1));
    let firsts: Vec<f64> = (0..n_ch).map(|c| fwd[[c, 0]]).collect();
    let mut st = FilterState::steady_state(cascade, &firsts);
    let mut back = filter_forward(cascade, &mut st, fwd.view())?;
    back.invert_axis(Axis(1));
    Ok(back.slice(ndarray::s![.., pad..pad + n]).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{s, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cascade() -> BiquadCascade {
        crate::dsp::design_butterworth_bandpass(4, 0.004, 0.4).unwrap()
    }

    fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    /// Direct-form I evaluation of the expanded transfer function.
    fn direct_form_impulse(c: &BiquadCascade, n: usize) -> Vec<f64> {
        let mut num = vec![1.0];
        let mut den = vec![1.0];
        for s in c.sections() {
            num = poly_mul(&num, &[s.b0, s.b1, s.b2]);
            den = poly_mul(&den, &[1.0, s.a1, s.a2]);
        }
        let mut x = vec![0.0; n];
        x[0] = 1.0;
        let mut y = vec![0.0; n];
        for t in 0..n {
            let mut acc = 0.0;
            for (k, b) in num.iter().enumerate() {
                if t >= k {
                    acc += b * x[t - k];
                }
            }
            for (k, a) in den.iter().enumerate().skip(1) {
                if t >= k {
                    acc -= a * y[t - k];
                }
            }
            y[t] = acc;
        }
        y
    }

    fn random_block(rng: &mut ChaCha8Rng, ch: usize, n: usize) -> Array2<f64> {
        Array2::from_shape_fn((ch, n), |_| rng.random_range(-50.0..50.0))
    }

    #[test]
    fn zeros_in_zeros_out_state_unchanged() {
        let c = cascade();
        let mut st = c.state(3);
        let y = filter_forward(&c, &mut st, Array2::zeros((3, 100)).view()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        assert!(st.is_zero());
    }

    #[test]
    fn split_equals_whole_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = cascade();
        let x = random_block(&mut rng, 4, 1000);
        let mut whole_st = c.state(4);
        let whole = filter_forward(&c, &mut whole_st, x.view()).unwrap();
        for split in [1, 333, 500, 999] {
            let mut st = c.state(4);
            let a = filter_forward(&c, &mut st, x.slice(s![.., ..split])).unwrap();
            let b = filter_forward(&c, &mut st, x.slice(s![.., split..])).unwrap();
            let joined = ndarray::concatenate(Axis(1), &[a.view(), b.view()]).unwrap();
            assert_eq!(joined, whole, "split at {split}");
            assert_eq!(st, whole_st);
        }
    }

    #[test]
    fn impulse_matches_direct_form() {
        let c = crate::dsp::design_notch(50.0, 4.0, 250.0).unwrap();
        for cas in [cascade(), c] {
            let n = 400;
            let mut x = Array2::zeros((1, n));
            x[[0, 0]] = 1.0;
            let mut st = cas.state(1);
            let y = filter_forward(&cas, &mut st, x.view()).unwrap();
            let reference = direct_form_impulse(&cas, n);
            let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in y.row(0).iter().zip(&reference) {
                assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn non_finite_input_names_channel_and_index() {
        let c = cascade();
        let mut st = c.state(2);
        let mut x = Array2::zeros((2, 10));
        x[[1, 4]] = f64::INFINITY;
        match filter_forward(&c, &mut st, x.view()) {
            Err(Error::NonFinite { channel: 1, index: 4 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let c = cascade();
        let mut st = c.state(2);
        assert!(filter_forward(&c, &mut st, Array2::zeros((3, 4)).view()).is_err());
    }

    #[test]
    fn superposition_and_time_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = cascade();
        let x1 = random_block(&mut rng, 1, 800);
        let x2 = random_block(&mut rng, 1, 800);
        let (a, b) = (1.7, -0.3);
        let run = |x: &Array2<f64>| {
            let mut st = c.state(1);
            filter_forward(&c, &mut st, x.view()).unwrap()
        };
        let combined = run(&(&x1 * a + &x2 * b));
        let sep = run(&x1) * a + run(&x2) * b;
        let scale = sep.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (u, v) in combined.iter().zip(sep.iter()) {
            assert!((u - v).abs() <= 1e-9 * scale);
        }
        // Delay by d samples commutes with filtering.
        let d = 37;
        let mut delayed = Array2::zeros((1, 800));
        delayed.slice_mut(s![.., d..]).assign(&x1.slice(s![.., ..800 - d]));
        let yd = run(&delayed);
        let y = run(&x1);
        for t in d..800 {
            assert!((yd[[0, t]] - y[[0, t - d]]).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn steady_state_start_has_no_step_transient() {
        let c = crate::dsp::design_butterworth_bandpass_hz(4, 1.0, 16.0, 250.0).unwrap();
        let x = Array2::from_elem((1, 50), 7.0);
        let mut st = FilterState::steady_state(&c, &[7.0]);
        let y = filter_forward(&c, &mut st, x.view()).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn zero_phase_keeps_passband_sinusoid_aligned() {
        let c = crate::dsp::design_butterworth_bandpass_hz(4, 1.0, 16.0, 250.0).unwrap();
        let n = 3000;
        let t = Array1::from_shape_fn(n, |i| i as f64 / 250.0);
        let x = t.mapv(|t| (2.0 * std::f64::consts::PI * 5.0 * t).sin());
        let x2 = x.clone().insert_axis(Axis(0));
        let y = filter_zero_phase(&c, x2.view()).unwrap();
        let err = (&y.row(0).slice(s![500..2500]) - &x.slice(s![500..2500]))
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 0.02, "max err {err}");
    }

    #[test]
    fn text_dump_has_one_line_per_section() {
        let c = BiquadCascade::new(vec![Section { b0: 1.0, b1: 0.0, b2: 0.0, a1: 0.0, a2: 0.0 }; 2]);
        let t = c.to_text();
        assert_eq!(t.lines().count(), 2);
        let first: Vec<f64> = t.lines().next().unwrap().split(' ').map(|v| v.parse().unwrap()).collect();
        assert_eq!(first, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
