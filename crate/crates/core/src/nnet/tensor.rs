use crate::error::{Error, Result};

/// Channels × frequency × time activations, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub channels: usize,
    pub freq: usize,
    pub time: usize,
    pub data: Vec<f32>,
}

impl Tensor3 {
    pub fn zeros(channels: usize, freq: usize, time: usize) -> Self {
        Self {
            channels,
            freq,
            time,
            data: vec![0.0; channels * freq * time],
        }
    }

    pub fn from_vec(channels: usize, freq: usize, time: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * freq * time {
            return Err(Error::invalid(format!(
                "tensor data length {} does not match {channels}x{freq}x{time}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            freq,
            time,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.freq, self.time)
    }

    #[inline]
    pub fn at(&self, c: usize, f: usize, t: usize) -> f32 {
        self.data[(c * self.freq + f) * self.time + t]
    }

    /// Time series of one (channel, frequency) cell.
    #[inline]
    pub fn series(&self, c: usize, f: usize) -> &[f32] {
        let start = (c * self.freq + f) * self.time;
        &self.data[start..start + self.time]
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.freq * self.time;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.freq * self.time;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
