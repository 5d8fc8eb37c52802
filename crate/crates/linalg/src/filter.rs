use crate::{ImageFrame, LinalgError, Scalar};

/// The two sparse 3x3 filter templates admitting O(p) log-determinants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    /// Center weight plus the four axis neighbors; zeros at the corners.
    Plus,
    /// Center, one weight to its right, and the full bottom kernel row;
    /// induces a triangular operator under raster ordering.
    Seq,
}

/// A sparse 3x3 convolution filter with weights `a1..a5`.
///
/// Kernel layouts (`a1` always at the center):
///
/// ```text
///        plus                 seq
///   [ 0   a3  0  ]      [ 0   0   0  ]
///   [ a2  a1  a4 ]      [ 0   a1  a2 ]
///   [ 0   a5  0  ]      [ a3  a4  a5 ]
/// ```
///
/// Filters act on images by true convolution (the kernel is mirrored),
/// with out-of-image pixels contributing zero. Under row-major raster
/// ordering this makes the induced `p x p` operator of a `seq` filter
/// lower triangular with `a1` on the diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvFilter<S: Scalar = f64> {
    kind: FilterKind,
    weights: [S; 5],
}

impl<S: Scalar> ConvFilter<S> {
    pub fn new(kind: FilterKind, weights: [S; 5]) -> Self {
        Self { kind, weights }
    }

    /// The identity filter: `a1 = 1`, all other weights zero.
    pub fn identity(kind: FilterKind) -> Self {
        let mut weights = [S::zero(); 5];
        weights[0] = S::one();
        Self { kind, weights }
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn weights(&self) -> &[S; 5] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [S; 5] {
        &mut self.weights
    }

    /// The 3x3 kernel matrix in the layout documented on the type.
    pub fn kernel(&self) -> [[S; 3]; 3] {
        let z = S::zero();
        let [a1, a2, a3, a4, a5] = self.weights;
        match self.kind {
            FilterKind::Plus => [[z, a3, z], [a2, a1, a4], [z, a5, z]],
            FilterKind::Seq => [[z, z, z], [z, a1, a2], [a3, a4, a5]],
        }
    }

    /// Input taps of the induced operator: `out[i, j] += w * in[i + di, j + dj]`
    /// for each `(di, dj, w)`, with zero padding outside the image.
    ///
    /// These are the mirrored kernel offsets; for `seq` every tap points at a
    /// strictly earlier raster index (or the pixel itself), which is what
    /// makes the dense operator lower triangular.
    pub fn taps(&self) -> [(isize, isize, S); 5] {
        let [a1, a2, a3, a4, a5] = self.weights;
        match self.kind {
            FilterKind::Plus => [
                (0, 0, a1),
                (0, 1, a2),
                (1, 0, a3),
                (0, -1, a4),
                (-1, 0, a5),
            ],
            FilterKind::Seq => [
                (0, 0, a1),
                (0, -1, a2),
                (-1, 1, a3),
                (-1, 0, a4),
                (-1, -1, a5),
            ],
        }
    }
}

/// One affine layer `z -> G z + b` where `G` is induced by a [`ConvFilter`]
/// and `b` is the vectorized intercept image.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer<S: Scalar = f64> {
    pub filter: ConvFilter<S>,
    pub intercept: ImageFrame<S>,
}

impl<S: Scalar> LinearLayer<S> {
    pub fn new(filter: ConvFilter<S>, intercept: ImageFrame<S>) -> Self {
        Self { filter, intercept }
    }

    /// Applies the layer: `conv(z, filter) + intercept`.
    pub fn apply(&self, z: &ImageFrame<S>) -> Result<ImageFrame<S>, LinalgError> {
        if !z.same_shape(&self.intercept) {
            return Err(LinalgError::DimensionMismatch {
                expected: format!("{}x{}", self.intercept.rows(), self.intercept.cols()),
                got: format!("{}x{}", z.rows(), z.cols()),
            });
        }
        let mut out = crate::conv_apply(z, &self.filter)?;
        for (o, b) in out.as_mut_slice().iter_mut().zip(self.intercept.as_slice()) {
            *o += *b;
        }
        Ok(out)
    }
}
