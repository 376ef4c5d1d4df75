use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// `frames x points` landmark positions in pixel units, stored frame-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkTrack {
    frames: usize,
    points: usize,
    coords: Vec<[f64; 2]>,
}

impl LandmarkTrack {
    pub fn new(frames: usize, points: usize, coords: Vec<[f64; 2]>) -> Result<Self> {
        if frames == 0 || points == 0 {
            return Err(Error::InvalidArgument("landmark track needs at least one frame and one point".into()));
        }
        check_len("landmark track", frames * points, coords.len())?;
        if coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("landmark coordinates".into()));
        }
        Ok(Self { frames, points, coords })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn get(&self, frame: usize, point: usize) -> [f64; 2] {
        self.coords[frame * self.points + point]
    }

    pub fn frame(&self, frame: usize) -> &[[f64; 2]] {
        &self.coords[frame * self.points..(frame + 1) * self.points]
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    /// Time series of one coordinate (`axis` 0 = x, 1 = y) of one point.
    pub fn series(&self, point: usize, axis: usize) -> Vec<f64> {
        (0..self.frames).map(|t| self.get(t, point)[axis]).collect()
    }
}

/// Normalized Gaussian weights over offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be positive and finite, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|o| (-((o * o) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / sum).collect())
}

/// Convolves `series` with an odd-length `kernel`, replicating the end
/// values beyond the boundaries.
pub fn smooth_series(series: &[f64], kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as i64;
    let last = series.len() as i64 - 1;
    (0..series.len() as i64)
        .map(|t| {
            kernel
                .iter()
                .enumerate()
                .map(|(j, w)| w * series[(t + j as i64 - radius).clamp(0, last) as usize])
                .sum()
        })
        .collect()
}

/// Smooths every coordinate series of the track along time.
pub fn gaussian_smooth_track(track: &LandmarkTrack, sigma: f64) -> Result<LandmarkTrack> {
    let kernel = gaussian_kernel(sigma)?;
    let mut coords = track.coords.clone();
    for point in 0..track.points {
        for axis in 0..2 {
            for (t, v) in smooth_series(&track.series(point, axis), &kernel).into_iter().enumerate() {
                coords[t * track.points + point][axis] = v;
            }
        }
    }
    LandmarkTrack::new(track.frames, track.points, coords)
}
