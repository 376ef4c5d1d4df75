use crate::error::{check_len, Error, Result};

/// `height x width x channels` image with values in `[0, 1]`, stored
/// row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument("image dimensions must be positive".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!("images have 1 or 3 channels, got {channels}")));
        }
        check_len("image values", height * width * channels, values.len())?;
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::BoundViolation(format!("image value {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.values[(y * self.width + x) * self.channels + c]
    }

    /// One channel as a row-major `height x width` plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.channels).copied().collect()
    }
}

/// Boolean region with no true pixel on the image border.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskGrid {
    height: usize,
    width: usize,
    cells: Vec<bool>,
}

impl MaskGrid {
    pub fn new(height: usize, width: usize, cells: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument("mask dimensions must be positive".into()));
        }
        check_len("mask cells", height * width, cells.len())?;
        let mask = Self { height, width, cells };
        if let Some((y, x)) = mask.true_pixels().find(|&(y, x)| mask.on_border(y, x)) {
            return Err(Error::InvalidArgument(format!("mask pixel ({y}, {x}) lies on the image border")));
        }
        Ok(mask)
    }

    pub fn empty(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![false; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.cells[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn true_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.cells.len())
            .filter(|&i| self.cells[i])
            .map(|i| (i / self.width, i % self.width))
    }

    /// True pixels whose four neighbours are also true.
    pub fn is_interior(&self, y: usize, x: usize) -> bool {
        self.get(y, x)
            && !self.on_border(y, x)
            && self.get(y - 1, x)
            && self.get(y + 1, x)
            && self.get(y, x - 1)
            && self.get(y, x + 1)
    }

    fn on_border(&self, y: usize, x: usize) -> bool {
        y == 0 || x == 0 || y + 1 == self.height || x + 1 == self.width
    }
}
