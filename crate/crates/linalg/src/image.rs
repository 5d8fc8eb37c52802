use nalgebra::DVector;

use crate::{LinalgError, Scalar};

/// A `rows x cols` real-valued image stored in row-major raster order.
///
/// Pixel `(i, j)` lives at flat index `i * cols + j`; the same ordering is
/// used everywhere a vectorized view of the image appears, so
/// `ImageFrame::from_vector(r, c, &img.to_vector())` is an exact round trip.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrame<S: Scalar = f64> {
    rows: usize,
    cols: usize,
    pixels: Vec<S>,
}

impl<S: Scalar> ImageFrame<S> {
    pub fn new(rows: usize, cols: usize, pixels: Vec<S>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::InvalidInput(format!(
                "image dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if pixels.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                expected: format!("{} pixels", rows * cols),
                got: format!("{}", pixels.len()),
            });
        }
        Ok(Self { rows, cols, pixels })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(rows, cols, S::zero())
    }

    pub fn constant(rows: usize, cols: usize, value: S) -> Self {
        assert!(rows > 0 && cols > 0, "image dimensions must be positive");
        Self { rows, cols, pixels: vec![value; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        assert!(rows > 0 && cols > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                pixels.push(f(i, j));
            }
        }
        Self { rows, cols, pixels }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of pixels `p = rows * cols`.
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        false // dimensions are positive by construction
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        debug_assert!(i < self.rows && j < self.cols);
        self.pixels[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: S) {
        debug_assert!(i < self.rows && j < self.cols);
        self.pixels[i * self.cols + j] = value;
    }

    pub fn as_slice(&self) -> &[S] {
        &self.pixels
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.pixels
    }

    /// Vectorize: the row-major raster view as a column vector.
    pub fn to_vector(&self) -> DVector<S> {
        DVector::from_column_slice(&self.pixels)
    }

    /// Devectorize a length `rows * cols` raster vector.
    pub fn from_vector(rows: usize, cols: usize, v: &DVector<S>) -> Result<Self, LinalgError> {
        Self::new(rows, cols, v.as_slice().to_vec())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Returns true if every pixel is finite.
    pub fn is_finite(&self) -> bool {
        self.pixels.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> S {
        self.pixels
            .iter()
            .fold(S::zero(), |acc, &x| acc.max(x.abs()))
    }
}
