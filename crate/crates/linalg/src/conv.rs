use nalgebra::DMatrix;

use crate::{ConvFilter, ImageFrame, LinalgError, Scalar};

fn check_dims<S: Scalar>(image: &ImageFrame<S>) -> Result<(), LinalgError> {
    if image.rows() < 3 || image.cols() < 3 {
        return Err(LinalgError::InvalidInput(format!(
            "image {}x{} smaller than the 3x3 filter",
            image.rows(),
            image.cols()
        )));
    }
    Ok(())
}

/// Convolves `image` with `filter` under zero padding.
///
/// Equivalent to `build_dense_operator(filter, q1, q2) * vec(image)`
/// reshaped, but computed in O(p) without forming the operator.
pub fn conv_apply<S: Scalar>(
    image: &ImageFrame<S>,
    filter: &ConvFilter<S>,
) -> Result<ImageFrame<S>, LinalgError> {
    check_dims(image)?;
    let taps = filter.taps();
    Ok(apply_taps(image, &taps))
}

/// Applies the transpose of the induced operator: `vec(out) = G^T vec(image)`.
///
/// Used for backpropagating through convolution layers.
pub fn conv_apply_transpose<S: Scalar>(
    image: &ImageFrame<S>,
    filter: &ConvFilter<S>,
) -> Result<ImageFrame<S>, LinalgError> {
    check_dims(image)?;
    // G[r, c] = w for c = r + offset, so G^T gathers with mirrored offsets.
    let taps = filter.taps().map(|(di, dj, w)| (-di, -dj, w));
    Ok(apply_taps(image, &taps))
}

fn apply_taps<S: Scalar>(image: &ImageFrame<S>, taps: &[(isize, isize, S); 5]) -> ImageFrame<S> {
    let (q1, q2) = (image.rows() as isize, image.cols() as isize);
    ImageFrame::from_fn(image.rows(), image.cols(), |i, j| {
        let (i, j) = (i as isize, j as isize);
        let mut acc = S::zero();
        for &(di, dj, w) in taps {
            let (si, sj) = (i + di, j + dj);
            if si >= 0 && si < q1 && sj >= 0 && sj < q2 {
                acc += w * image.get(si as usize, sj as usize);
            }
        }
        acc
    })
}

/// Assembles the dense `p x p` matrix `M` with `M * vec(X) == vec(conv(X))`
/// exactly, for raster-ordered pixels. Intended for small images.
pub fn build_dense_operator<S: Scalar>(
    filter: &ConvFilter<S>,
    q1: usize,
    q2: usize,
) -> Result<DMatrix<S>, LinalgError> {
    if q1 < 3 || q2 < 3 {
        return Err(LinalgError::InvalidInput(format!(
            "image {q1}x{q2} smaller than the 3x3 filter"
        )));
    }
    let p = q1 * q2;
    let mut m = DMatrix::zeros(p, p);
    let taps = filter.taps();
    for i in 0..q1 as isize {
        for j in 0..q2 as isize {
            let row = (i as usize) * q2 + j as usize;
            for &(di, dj, w) in &taps {
                let (si, sj) = (i + di, j + dj);
                if si >= 0 && si < q1 as isize && sj >= 0 && sj < q2 as isize {
                    let col = (si as usize) * q2 + sj as usize;
                    m[(row, col)] += w;
                }
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::FilterKind;

    fn image_4x4() -> ImageFrame<f64> {
        ImageFrame::from_fn(4, 4, |i, j| (i * 4 + j) as f64 * 0.3 - 1.7)
    }

    #[test]
    fn identity_filter_preserves_image() {
        for kind in [FilterKind::Plus, FilterKind::Seq] {
            let img = image_4x4();
            let out = conv_apply(&img, &ConvFilter::identity(kind)).unwrap();
            assert_eq!(out, img);
        }
    }

    #[test]
    fn identity_filter_gives_identity_operator() {
        let m = build_dense_operator(&ConvFilter::<f64>::identity(FilterKind::Seq), 3, 5).unwrap();
        assert_eq!(m, DMatrix::identity(15, 15));
    }

    #[test]
    fn seq_differencing_on_constant_image() {
        // a = (1, -1, 0, 0, 0): out = x[i,j] - x[i,j-1]. On a constant image
        // the interior vanishes and the leftmost column keeps its value under
        // zero padding.
        let f = ConvFilter::new(FilterKind::Seq, [1.0, -1.0, 0.0, 0.0, 0.0]);
        let c = 2.5;
        let img = ImageFrame::constant(4, 4, c);
        let out = conv_apply(&img, &f).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if j == 0 { c } else { 0.0 };
                assert_eq!(out.get(i, j), expect, "pixel ({i},{j})");
            }
        }
        // And the dense operator agrees entrywise.
        let m = build_dense_operator(&f, 4, 4).unwrap();
        let via_dense = &m * img.to_vector();
        assert_eq!(via_dense.as_slice(), out.as_slice());
    }

    #[test]
    fn plus_filter_is_discrete_laplacian_stencil() {
        let f = ConvFilter::new(FilterKind::Plus, [4.0, -1.0, -1.0, -1.0, -1.0]);
        let mut img = ImageFrame::zeros(5, 5);
        img.set(2, 2, 1.0);
        let out = conv_apply(&img, &f).unwrap();
        assert_eq!(out.get(2, 2), 4.0);
        for (i, j) in [(1, 2), (3, 2), (2, 1), (2, 3)] {
            assert_eq!(out.get(i, j), -1.0);
        }
        assert_eq!(out.get(1, 1), 0.0);
        assert_eq!(out.get(0, 2), 0.0);
    }

    #[test]
    fn seq_operator_is_lower_triangular() {
        let f = ConvFilter::new(FilterKind::Seq, [0.9, -0.4, 0.2, 0.3, -0.1]);
        let m = build_dense_operator(&f, 5, 5).unwrap();
        for r in 0..25 {
            for c in 0..25 {
                if c > r {
                    assert_eq!(m[(r, c)], 0.0, "entry ({r},{c}) above diagonal");
                }
            }
            assert_eq!(m[(r, r)], 0.9);
        }
    }

    #[test]
    fn plus_operator_is_banded_at_offsets_0_1_3() {
        let f = ConvFilter::new(FilterKind::Plus, [1.0, 0.2, -0.3, 0.4, 0.5]);
        let m = build_dense_operator(&f, 3, 3).unwrap();
        assert_eq!(m.nrows(), 9);
        for r in 0..9isize {
            for c in 0..9isize {
                let off = c - r;
                let allowed = matches!(off, 0 | 1 | -1 | 3 | -3);
                if !allowed {
                    assert_eq!(m[(r as usize, c as usize)], 0.0, "entry ({r},{c})");
                }
            }
        }
        // Bands are actually populated somewhere.
        for off in [0isize, 1, -1, 3, -3] {
            let populated = (0..9isize).any(|r| {
                let c = r + off;
                (0..9).contains(&c) && m[(r as usize, c as usize)] != 0.0
            });
            assert!(populated, "band {off} empty");
        }
    }

    #[test]
    fn conv_matches_dense_operator_on_random_images() {
        // Deterministic pseudo-random weights/images, both filter kinds,
        // a few rectangular sizes.
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for kind in [FilterKind::Plus, FilterKind::Seq] {
            for (q1, q2) in [(3, 3), (4, 6), (8, 5), (8, 8)] {
                let f = ConvFilter::new(kind, [next(), next(), next(), next(), next()]);
                let img = ImageFrame::from_fn(q1, q2, |_, _| next());
                let direct = conv_apply(&img, &f).unwrap().to_vector();
                let dense = build_dense_operator(&f, q1, q2).unwrap() * img.to_vector();
                let scale = direct.amax().max(1.0);
                assert!(
                    (&direct - &dense).amax() <= 1e-12 * scale,
                    "mismatch for {kind:?} {q1}x{q2}"
                );
            }
        }
    }

    #[test]
    fn transpose_apply_matches_dense_transpose() {
        let f = ConvFilter::new(FilterKind::Seq, [1.1, -0.2, 0.4, 0.3, -0.6]);
        let img = image_4x4();
        let direct = conv_apply_transpose(&img, &f).unwrap().to_vector();
        let dense = build_dense_operator(&f, 4, 4).unwrap().transpose() * img.to_vector();
        assert!((direct - dense).amax() < 1e-13);
    }

    #[test]
    fn rejects_images_below_filter_size() {
        let f = ConvFilter::<f64>::identity(FilterKind::Plus);
        let img = ImageFrame::zeros(2, 5);
        assert!(matches!(conv_apply(&img, &f), Err(LinalgError::InvalidInput(_))));
        assert!(build_dense_operator(&f, 5, 2).is_err());
    }
}
