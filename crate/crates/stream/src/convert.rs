//! Frame to physical-unit conversion.

use ndarray::Array2;
use neoscan_core::montage::RECORDED;
use neoscan_core::units::AdcScale;
use neoscan_core::{Recording, SampleFrame};

use crate::error::Result;
use crate::synth::{ACCEL_LSB_PER_G, FS_HZ, GYRO_LSB_PER_DPS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t_us: u64,
    pub accel_g: [f64; 3],
    pub gyro_dps: [f64; 3],
}

impl ImuSample {
    pub fn from_frame(f: &SampleFrame) -> Self {
        Self {
            t_us: f.t_us,
            accel_g: f.accel.map(|v| v as f64 / ACCEL_LSB_PER_G),
            gyro_dps: f.gyro.map(|v| v as f64 / GYRO_LSB_PER_DPS),
        }
    }
}

pub fn frames_to_imu(frames: &[SampleFrame]) -> Vec<ImuSample> {
    frames.iter().map(ImuSample::from_frame).collect()
}

/// Referential 8-channel recording at 250 Hz, channels in wire order.
pub fn frames_to_recording(frames: &[SampleFrame], scale: AdcScale) -> Result<Recording> {
    let mut data = Array2::zeros((RECORDED.len(), frames.len()));
    for (i, f) in frames.iter().enumerate() {
        for (c, &count) in f.adc.iter().enumerate() {
            data[[c, i]] = scale.to_microvolts(count);
        }
    }
    let mut rec = Recording::new(FS_HZ, RECORDED.iter().map(|s| s.to_string()).collect(), data)?;
    if let Some(f) = frames.first() {
        rec.meta.insert("start_us".into(), f.t_us.to_string());
    }
    Ok(rec)
}

/// Row-major `[accel xyz, gyro xyz] x n` block.
pub fn imu_matrix(imu: &[ImuSample]) -> Array2<f64> {
    let mut m = Array2::zeros((6, imu.len()));
    for (i, s) in imu.iter().enumerate() {
        for k in 0..3 {
            m[[k, i]] = s.accel_g[k];
            m[[3 + k, i]] = s.gyro_dps[k];
        }
    }
    m
}
