//! Rational 16/125 polyphase resampling (250 Hz to 32 Hz).

use std::f64::consts::PI;
use std::sync::OnceLock;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub const RESAMPLE_UP: usize = 16;
pub const RESAMPLE_DOWN: usize = 125;

/// Polyphase rational resampler with a zero-phase Kaiser-windowed sinc
/// prototype. Output sample `m` is aligned with input time `m * down / up`.
#[derive(Debug, Clone)]
pub struct Resampler {
    up: usize,
    down: usize,
    /// Prototype taps `h[-half..=half]` at the upsampled rate.
    taps: Vec<f64>,
    half: usize,
    /// Per-phase normalization so each branch sums to one.
    phase_gain: Vec<f64>,
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

impl Resampler {
    /// `cutoff` and `transition` are fractions of the upsampled rate;
    /// `atten_db` fixes the Kaiser shape.
    pub fn new(up: usize, down: usize, cutoff: f64, transition: f64, atten_db: f64) -> Result<Self> {
        if up == 0 || down == 0 {
            return Err(Error::InvalidArgument("resampling factors must be positive".into()));
        }
        if !(cutoff > 0.0 && cutoff < 0.5 && transition > 0.0 && atten_db > 21.0) {
            return Err(Error::Design("invalid resampler prototype parameters".into()));
        }
        let beta = if atten_db > 50.0 {
            0.1102 * (atten_db - 8.7)
        } else {
            0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
        };
        let n = ((atten_db - 8.0) / (2.285 * 2.0 * PI * transition)).ceil() as usize;
        let half = n.div_ceil(2);
        let i0b = bessel_i0(beta);
        let taps: Vec<f64> = (0..=2 * half)
            .map(|i| {
                let k = i as f64 - half as f64;
                let r = k / half as f64;
                let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b;
                2.0 * cutoff * sinc(2.0 * cutoff * k) * w
            })
            .collect();
        let mut phase_gain = vec![0.0; up];
        for (i, &t) in taps.iter().enumerate() {
            // tap index relative to center, reduced to the branch it feeds
            let off = (i as i64 - half as i64).rem_euclid(up as i64) as usize;
            phase_gain[off] += t;
        }
        Ok(Self { up, down, taps, half, phase_gain })
    }

    /// The 250 Hz to 32 Hz converter: passband to about 12 Hz, stopband from
    /// 18 Hz at 60 dB.
    pub fn default_32hz() -> &'static Resampler {
        static R: OnceLock<Resampler> = OnceLock::new();
        R.get_or_init(|| {
            let fs_up = 250.0 * RESAMPLE_UP as f64;
            Resampler::new(RESAMPLE_UP, RESAMPLE_DOWN, 15.0 / fs_up, 6.0 / fs_up, 60.0)
                .expect("static resampler parameters are valid")
        })
    }

    pub fn up(&self) -> usize {
        self.up
    }

    pub fn down(&self) -> usize {
        self.down
    }

    pub fn n_taps(&self) -> usize {
        self.taps.len()
    }

    /// Input samples of context needed on each side.
    pub fn context(&self) -> usize {
        self.half / self.up + 1
    }

    /// Resamples one channel. The input length must be a multiple of `down`.
    pub fn process(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.is_empty() || x.len() % self.down != 0 {
            return Err(Error::Shape(format!(
                "resampler input length {} is not a positive multiple of {}",
                x.len(),
                self.down
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { channel: 0, index: i });
        }
        let n = x.len() as i64;
        // odd reflection about the end samples keeps the edges smooth
        let at = |i: i64| -> f64 {
            if i < 0 {
                2.0 * x[0] - x[reflect(-i, n)]
            } else if i >= n {
                2.0 * x[(n - 1) as usize] - x[reflect(2 * (n - 1) - i, n)]
            } else {
                x[i as usize]
            }
        };
        let n_out = x.len() / self.down * self.up;
        let (up, half) = (self.up as i64, self.half as i64);
        let mut out = Vec::with_capacity(n_out);
        for m in 0..n_out as i64 {
            let u = m * self.down as i64;
            let first = (u - half).div_euclid(up) + i64::from((u - half).rem_euclid(up) != 0);
            let last = (u + half).div_euclid(up);
            let mut acc = 0.0;
            for j in first..=last {
                let k = (u - j * up + half) as usize;
                acc += self.taps[k] * at(j);
            }
            let phase = u.rem_euclid(up) as usize;
            out.push(acc / self.phase_gain[phase]);
        }
        Ok(out)
    }

    /// Resamples every row of a channel-major block.
    pub fn process_rows(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let n_out = x.ncols() / self.down * self.up;
        let mut out = Array2::zeros((x.nrows(), n_out));
        for (c, row) in x.rows().into_iter().enumerate() {
            let v: Vec<f64> = row.iter().copied().collect();
            let y = self.process(&v).map_err(|e| match e {
                Error::NonFinite { index, .. } => Error::NonFinite { channel: c, index },
                other => other,
            })?;
            out.row_mut(c).assign(&ndarray::ArrayView1::from(&y));
        }
        Ok(out)
    }
}

/// Mirrors `i` into `[0, n)`, repeating as often as needed.
fn reflect(i: i64, n: i64) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i.rem_euclid(period);
    (if r < n { r } else { period - r }) as usize
}

/// 250 Hz to 32 Hz with the default converter.
pub fn resample_to_32hz(x: &[f64]) -> Result<Vec<f64>> {
    Resampler::default_32hz().process(x)
}
