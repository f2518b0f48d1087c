//! Float images in `[0, 1]` and the sampling helpers used by matching.

use crate::grid::Grid;

/// Interleaved image with one (gray) or three (RGB) channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        assert!(channels == 1 || channels == 3, "only gray or RGB images");
        assert_eq!(data.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn from_gray(gray: &Grid<f64>) -> Self {
        Self::new(gray.width(), gray.height(), 1, gray.as_slice().to_vec())
    }

    pub fn from_rgb_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, 3, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Color at a pixel; gray images replicate their single channel.
    #[inline]
    pub fn rgb(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * self.channels;
        if self.channels == 1 {
            let v = self.data[i];
            [v, v, v]
        } else {
            [self.data[i], self.data[i + 1], self.data[i + 2]]
        }
    }

    /// Channel mean as intensity.
    pub fn to_gray(&self) -> Grid<f64> {
        Grid::from_fn(self.width, self.height, |x, y| {
            let [r, g, b] = self.rgb(x, y);
            if self.channels == 1 {
                r
            } else {
                (r + g + b) / 3.0
            }
        })
    }

    /// 2×2 box average; odd trailing rows/columns are dropped.
    pub fn box_downsample(&self) -> Image {
        let (w, h) = (self.width / 2, self.height / 2);
        let c = self.channels;
        let mut data = Vec::with_capacity(w * h * c);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let at = |xx: usize, yy: usize| self.data[(yy * self.width + xx) * c + ch];
                    let s = at(2 * x, 2 * y) + at(2 * x + 1, 2 * y) + at(2 * x, 2 * y + 1) + at(2 * x + 1, 2 * y + 1);
                    data.push(0.25 * s);
                }
            }
        }
        Image::new(w, h, c, data)
    }
}

/// 2×2 box average of a scalar grid.
pub fn box_downsample(grid: &Grid<f64>) -> Grid<f64> {
    let (w, h) = (grid.width() / 2, grid.height() / 2);
    Grid::from_fn(w, h, |x, y| {
        0.25 * (grid.get(2 * x, 2 * y) + grid.get(2 * x + 1, 2 * y) + grid.get(2 * x, 2 * y + 1) + grid.get(2 * x + 1, 2 * y + 1))
    })
}

/// Bilinear sample with pixel centers at integer coordinates. Returns `None`
/// when the sample footprint leaves the image.
#[inline]
pub fn bilinear(grid: &Grid<f64>, u: f64, v: f64) -> Option<f64> {
    let (w, h) = grid.dims();
    if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
        return None;
    }
    let x0 = (u.floor() as usize).min(w.saturating_sub(2));
    let y0 = (v.floor() as usize).min(h.saturating_sub(2));
    let (fx, fy) = (u - x0 as f64, v - y0 as f64);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let top = grid.get(x0, y0) * (1.0 - fx) + grid.get(x1, y0) * fx;
    let bottom = grid.get(x0, y1) * (1.0 - fx) + grid.get(x1, y1) * fx;
    Some(top * (1.0 - fy) + bottom * fy)
}
