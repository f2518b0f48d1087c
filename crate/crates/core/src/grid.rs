//! Dense row-major 2D grids and the depth-map containers built on them.

use rayon::prelude::*;

/// A dense `width × height` grid stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    /// Wraps an existing row-major buffer. Panics if the length disagrees
    /// with the dimensions.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "grid buffer length mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
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
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

impl<T: Send> Grid<T> {
    /// Builds a grid row by row in parallel. The result does not depend on
    /// the thread schedule.
    pub fn par_from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> T + Sync + Send,
    ) -> Self {
        let data: Vec<T> = (0..height)
            .into_par_iter()
            .flat_map_iter(|y| (0..width).map(move |x| (x, y)).collect::<Vec<_>>())
            .map(|(x, y)| f(x, y))
            .collect();
        Self {
            width,
            height,
            data,
        }
    }
}

/// Sums `f(y)` over rows, evaluating rows in parallel but adding the partial
/// sums in row order so the total is bit-stable across thread counts.
pub fn ordered_row_sum(height: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    let partials: Vec<f64> = (0..height).into_par_iter().map(f).collect();
    partials.iter().sum()
}

/// Closed depth interval in scene units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

impl DepthRange {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    #[inline]
    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    #[inline]
    pub fn clamp(&self, d: f64) -> f64 {
        d.clamp(self.min, self.max)
    }

    #[inline]
    pub fn contains(&self, d: f64) -> bool {
        d >= self.min && d <= self.max
    }
}

/// Scalar depth per pixel plus a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub depth: Grid<f64>,
    pub valid: Grid<bool>,
    pub range: DepthRange,
}

impl DepthMap {
    pub fn new(depth: Grid<f64>, valid: Grid<bool>, range: DepthRange) -> Self {
        assert!(depth.same_dims(&valid), "depth/validity dimension mismatch");
        Self {
            depth,
            valid,
            range,
        }
    }

    /// A map where every pixel is valid.
    pub fn dense(depth: Grid<f64>, range: DepthRange) -> Self {
        let valid = Grid::filled(depth.width(), depth.height(), true);
        Self::new(depth, valid, range)
    }

    pub fn constant(width: usize, height: usize, value: f64, range: DepthRange) -> Self {
        Self::dense(Grid::filled(width, height, value), range)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.depth.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.depth.height()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.depth.dims()
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> Option<f64> {
        if *self.valid.get(x, y) {
            Some(*self.depth.get(x, y))
        } else {
            None
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Top-left nearest-neighbor downsampling by `2^k`.
    pub fn downsample_nearest(&self, k: u32) -> DepthMap {
        let f = 1usize << k;
        let (w, h) = (self.width() / f, self.height() / f);
        DepthMap {
            depth: Grid::from_fn(w, h, |x, y| *self.depth.get(x * f, y * f)),
            valid: Grid::from_fn(w, h, |x, y| *self.valid.get(x * f, y * f)),
            range: self.range,
        }
    }
}

/// Ground-truth depth with the dataset's validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub depth: Grid<f64>,
    pub valid: Grid<bool>,
}

impl GroundTruth {
    pub fn new(depth: Grid<f64>, valid: Grid<bool>) -> Self {
        assert!(depth.same_dims(&valid), "depth/validity dimension mismatch");
        Self { depth, valid }
    }

    /// Loads from a depth grid where non-positive or non-finite entries mark
    /// missing ground truth.
    pub fn from_depth(depth: Grid<f64>) -> Self {
        let valid = depth.map(|d| d.is_finite() && *d > 0.0);
        Self { depth, valid }
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.depth.dims()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Top-left nearest-neighbor downsampling by `2^k`.
    pub fn downsample_nearest(&self, k: u32) -> GroundTruth {
        let f = 1usize << k;
        let (w, h) = (self.depth.width() / f, self.depth.height() / f);
        GroundTruth {
            depth: Grid::from_fn(w, h, |x, y| *self.depth.get(x * f, y * f)),
            valid: Grid::from_fn(w, h, |x, y| *self.valid.get(x * f, y * f)),
        }
    }

    /// Ground truth pyramid for scales `0..count`.
    pub fn pyramid(&self, count: usize) -> Vec<GroundTruth> {
        (0..count as u32).map(|k| self.downsample_nearest(k)).collect()
    }

    pub fn as_depth_map(&self, range: DepthRange) -> DepthMap {
        DepthMap::new(self.depth.clone(), self.valid.clone(), range)
    }
}

/// Boolean mask with the same layout as the grid it was computed from.
pub type BoundaryMask = Grid<bool>;

/// Grows a mask by `radius` pixels in the Chebyshev metric.
pub fn dilate(mask: &Grid<bool>, radius: usize) -> Grid<bool> {
    let (w, h) = mask.dims();
    let r = radius as isize;
    Grid::from_fn(w, h, |x, y| {
        for dy in -r..=r {
            for dx in -r..=r {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && *mask.get(nx as usize, ny as usize) {
                    return true;
                }
            }
        }
        false
    })
}

/// Intersection-over-union of two equally sized masks. Two empty masks give 1.
pub fn mask_iou(a: &Grid<bool>, b: &Grid<bool>) -> f64 {
    assert!(a.same_dims(b));
    let (mut inter, mut union) = (0usize, 0usize);
    for (p, q) in a.iter().zip(b.iter()) {
        inter += (*p && *q) as usize;
        union += (*p || *q) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
