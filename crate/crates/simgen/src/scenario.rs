//! Scene construction and change scenarios.
//!
//! The shared pre-change scene is three rectangular panels (low intensity
//! inside, high outside) plus a spatially correlated Matern layer. The
//! three synthetic changes keep the panels and alter, respectively, the
//! layer's correlation length, the top-right panel's edge structure, or
//! the top-right panel's intensity.

use blast_linalg::ImageFrame;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{MaternSpec, SimgenError};

/// Panel intensity levels: low inside the panels, high outside. The +/-2
/// contrast against unit observation noise puts the pixel SNR near 2.
const PANEL_LOW: f64 = -2.0;
const PANEL_HIGH: f64 = 2.0;

/// Intensity-change magnitude added inside the top-right panel.
const INTENSITY_SHIFT: f64 = 1.5;

/// Inverse length scales of the spatial layer (pre- and post-change for
/// the spatial-correlation scenario; the pre value elsewhere).
fn kappa_pre() -> f64 {
    8.0_f64.sqrt() / 20.0
}

fn kappa_post() -> f64 {
    8.0_f64.sqrt() / 30.0
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioKind {
    /// Same panels; the spatial layer is redrawn with a longer correlation
    /// length after the change.
    SpatialCorrelation,
    /// The top-right panel splits into two blocks separated by a 2-pixel
    /// background gap at its vertical midline.
    EdgeStructure,
    /// Pixel intensity inside the top-right panel increases.
    Intensity,
    /// User-supplied truth images.
    CustomPair { pre: ImageFrame<f64>, post: ImageFrame<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Stream length `T`.
    pub t_len: usize,
    /// First post-change frame index (1-based): frames `t >= change_time`
    /// follow the post-change truth.
    pub change_time: usize,
    pub noise_sd: f64,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub n_reference: usize,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind) -> Self {
        Self {
            kind,
            t_len: 100,
            change_time: 50,
            noise_sd: 1.0,
            seed: 0,
            rows: 25,
            cols: 25,
            n_reference: 30,
        }
    }

    fn validate(&self) -> Result<(), SimgenError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(SimgenError::InvalidInput("empty image size".into()));
        }
        if self.t_len == 0 || self.change_time == 0 || self.change_time > self.t_len {
            return Err(SimgenError::InvalidInput(format!(
                "need 1 <= change_time <= T, got t* = {} with T = {}",
                self.change_time, self.t_len
            )));
        }
        if self.noise_sd < 0.0 {
            return Err(SimgenError::InvalidInput("noise sd must be nonnegative".into()));
        }
        if let ScenarioKind::CustomPair { pre, post } = &self.kind {
            if pre.rows() != self.rows
                || pre.cols() != self.cols
                || !pre.same_shape(post)
            {
                return Err(SimgenError::InvalidInput(format!(
                    "custom pair must be {}x{} with matching shapes",
                    self.rows, self.cols
                )));
            }
        }
        Ok(())
    }
}

/// Everything a detection run consumes.
#[derive(Debug, Clone)]
pub struct ScenarioBundle {
    pub references: Vec<ImageFrame<f64>>,
    pub stream: Vec<ImageFrame<f64>>,
    pub truth_pre: ImageFrame<f64>,
    pub truth_post: ImageFrame<f64>,
}

/// The three-panel base scene shared by every synthetic scenario.
pub fn base_panels(rows: usize, cols: usize) -> ImageFrame<f64> {
    let mut img = ImageFrame::constant(rows, cols, PANEL_HIGH);
    for (r0, r1, c0, c1) in panel_rects(rows, cols) {
        for i in r0..r1 {
            for j in c0..c1 {
                img.set(i, j, PANEL_LOW);
            }
        }
    }
    img
}

/// Panel rectangles `(row0, row1, col0, col1)` (half-open), scaled from the
/// 25x25 reference geometry: one tall block on the left, two square blocks
/// stacked on the right.
fn panel_rects(rows: usize, cols: usize) -> [(usize, usize, usize, usize); 3] {
    let r = |f: f64| ((rows as f64) * f).round() as usize;
    let c = |f: f64| ((cols as f64) * f).round() as usize;
    [
        (r(0.12), r(0.88), c(0.08), c(0.40)), // left block
        (r(0.08), r(0.44), c(0.56), c(0.92)), // top-right block
        (r(0.56), r(0.92), c(0.56), c(0.92)), // bottom-right block
    ]
}

/// The top-right panel rectangle, the site of the edge and intensity
/// changes.
pub fn top_right_block(rows: usize, cols: usize) -> (usize, usize, usize, usize) {
    panel_rects(rows, cols)[1]
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

fn substream(seed: u64, tag: u64) -> u64 {
    splitmix(seed ^ splitmix(tag))
}

fn add(a: &ImageFrame<f64>, b: &ImageFrame<f64>) -> ImageFrame<f64> {
    let mut out = a.clone();
    for (o, x) in out.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *o += *x;
    }
    out
}

/// Spatial layer standardized to unit typical pixel scale, so the scene's
/// texture is comparable to the unit observation noise and the panels stay
/// the dominant structure (the raw field's smoothest modes would otherwise
/// dwarf everything).
struct ScaledLayer {
    sampler: crate::MaternSampler,
    scale: f64,
}

impl ScaledLayer {
    fn new(kappa: f64, rows: usize, cols: usize) -> Result<Self, SimgenError> {
        let sampler = crate::MaternSampler::new(&MaternSpec::new(kappa, 1.0, 1, rows, cols))?;
        let scale = sampler.mean_marginal_std();
        Ok(Self { sampler, scale })
    }

    /// Same precision structure but an externally fixed scale: the scene's
    /// units are set once by the pre-change layer, so a post-change field
    /// keeps its relative amplitude.
    fn with_scale(kappa: f64, scale: f64, rows: usize, cols: usize) -> Result<Self, SimgenError> {
        let sampler = crate::MaternSampler::new(&MaternSpec::new(kappa, 1.0, 1, rows, cols))?;
        Ok(Self { sampler, scale })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<ImageFrame<f64>, SimgenError> {
        Ok(self.sampler.sample(rng)?.map(|v| v / self.scale))
    }

    fn transform(&self, eps: &nalgebra::DVector<f64>) -> Result<ImageFrame<f64>, SimgenError> {
        Ok(self.sampler.transform(eps)?.map(|v| v / self.scale))
    }
}

/// Builds the reference set, the online stream and the truth pair for a
/// scenario. Reference and stream noise use independent substreams of the
/// master seed, so changing `t_len` never perturbs the references.
pub fn build_scenario(spec: &ScenarioSpec) -> Result<ScenarioBundle, SimgenError> {
    spec.validate()?;
    let (rows, cols) = (spec.rows, spec.cols);

    let (truth_pre, truth_post) = match &spec.kind {
        ScenarioKind::CustomPair { pre, post } => (pre.clone(), post.clone()),
        kind => {
            let panels = base_panels(rows, cols);
            let pre_layer = ScaledLayer::new(kappa_pre(), rows, cols)?;
            let mut layer_rng = ChaCha8Rng::seed_from_u64(substream(spec.seed, 1));
            let eps = nalgebra::DVector::from_fn(rows * cols, |_, _| {
                StandardNormal.sample(&mut layer_rng)
            });
            let z_pre = pre_layer.transform(&eps)?;
            let pre = add(&panels, &z_pre);
            let post = match kind {
                ScenarioKind::SpatialCorrelation => {
                    // Same panels, same underlying noise vector, longer
                    // correlation length: the layer's spectrum changes while
                    // the field itself stays coupled to the pre-change one,
                    // a subtle correlation change rather than a wholesale
                    // scene replacement. The pre-change layer fixes the
                    // scene's scale.
                    let post_layer =
                        ScaledLayer::with_scale(kappa_post(), pre_layer.scale, rows, cols)?;
                    let z_post = post_layer.transform(&eps)?;
                    add(&panels, &z_post)
                }
                ScenarioKind::EdgeStructure => {
                    // Split the top-right block with a 2-pixel background
                    // gap at its vertical midline; same layer.
                    let mut split = panels.clone();
                    let (r0, r1, c0, c1) = top_right_block(rows, cols);
                    let mid = (c0 + c1) / 2;
                    for i in r0..r1 {
                        for j in [mid.saturating_sub(1), mid] {
                            if j >= c0 && j < c1 {
                                split.set(i, j, PANEL_HIGH);
                            }
                        }
                    }
                    add(&split, &z_pre)
                }
                ScenarioKind::Intensity => {
                    // Same panels and layer; brighter top-right block.
                    let mut brightened = pre.clone();
                    let (r0, r1, c0, c1) = top_right_block(rows, cols);
                    for i in r0..r1 {
                        for j in c0..c1 {
                            brightened.set(i, j, brightened.get(i, j) + INTENSITY_SHIFT);
                        }
                    }
                    brightened
                }
                ScenarioKind::CustomPair { .. } => unreachable!("matched above"),
            };
            (pre, post)
        }
    };

    // References are independent draws from the pre-change model: the
    // shared panel scene plus a fresh spatial layer per image, observed
    // with pixel noise. This ensemble is what the priors are elicited
    // from; the stream's fixed truth is one realization of it. Custom
    // pairs have no generative model, so their references are noisy
    // copies of the pre image.
    let mut ref_rng = ChaCha8Rng::seed_from_u64(substream(spec.seed, 3));
    let references: Vec<ImageFrame<f64>> = match &spec.kind {
        ScenarioKind::CustomPair { pre, .. } => (0..spec.n_reference)
            .map(|_| noisy(pre, spec.noise_sd, &mut ref_rng))
            .collect(),
        _ => {
            let panels = base_panels(rows, cols);
            let layer = ScaledLayer::new(kappa_pre(), rows, cols)?;
            let mut layer_rng = ChaCha8Rng::seed_from_u64(substream(spec.seed, 5));
            (0..spec.n_reference)
                .map(|_| {
                    let z = layer.sample(&mut layer_rng)?;
                    Ok(noisy(&add(&panels, &z), spec.noise_sd, &mut ref_rng))
                })
                .collect::<Result<_, SimgenError>>()?
        }
    };

    let mut stream_rng = ChaCha8Rng::seed_from_u64(substream(spec.seed, 4));
    let stream: Vec<ImageFrame<f64>> = (1..=spec.t_len)
        .map(|t| {
            let truth = if t < spec.change_time { &truth_pre } else { &truth_post };
            noisy(truth, spec.noise_sd, &mut stream_rng)
        })
        .collect();

    Ok(ScenarioBundle { references, stream, truth_pre, truth_post })
}

fn noisy(truth: &ImageFrame<f64>, sd: f64, rng: &mut ChaCha8Rng) -> ImageFrame<f64> {
    ImageFrame::from_fn(truth.rows(), truth.cols(), |i, j| {
        let z: f64 = StandardNormal.sample(rng);
        truth.get(i, j) + sd * z
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_stream_equals_truth() {
        let mut spec = ScenarioSpec::new(ScenarioKind::Intensity);
        spec.noise_sd = 0.0;
        spec.t_len = 10;
        spec.change_time = 6;
        spec.rows = 10;
        spec.cols = 10;
        spec.n_reference = 3;
        let bundle = build_scenario(&spec).unwrap();
        for (t, frame) in bundle.stream.iter().enumerate() {
            let truth = if t + 1 < 6 { &bundle.truth_pre } else { &bundle.truth_post };
            assert_eq!(frame, truth, "frame {}", t + 1);
        }
        // References carry their own spatial layers, so even at zero
        // noise they need not equal the stream truth; they do share the
        // panel scene dimensions.
        for r in &bundle.references {
            assert!(r.same_shape(&bundle.truth_pre));
        }
    }

    #[test]
    fn pre_change_truth_is_shared_across_scenario_kinds() {
        let mk = |kind| {
            let mut spec = ScenarioSpec::new(kind);
            spec.rows = 12;
            spec.cols = 12;
            spec.seed = 42;
            spec.n_reference = 2;
            spec.t_len = 4;
            spec.change_time = 2;
            build_scenario(&spec).unwrap().truth_pre
        };
        let a = mk(ScenarioKind::SpatialCorrelation);
        let b = mk(ScenarioKind::EdgeStructure);
        let c = mk(ScenarioKind::Intensity);
        assert_eq!(a, b);
        assert_eq!(b, c);
    }

    #[test]
    fn intensity_change_is_confined_to_the_top_right_block() {
        let mut spec = ScenarioSpec::new(ScenarioKind::Intensity);
        spec.rows = 25;
        spec.cols = 25;
        spec.seed = 7;
        spec.n_reference = 2;
        spec.t_len = 4;
        spec.change_time = 2;
        let bundle = build_scenario(&spec).unwrap();
        let (r0, r1, c0, c1) = top_right_block(25, 25);
        for i in 0..25 {
            for j in 0..25 {
                let diff = bundle.truth_post.get(i, j) - bundle.truth_pre.get(i, j);
                let inside = i >= r0 && i < r1 && j >= c0 && j < c1;
                if inside {
                    assert!((diff - INTENSITY_SHIFT).abs() < 1e-12, "({i},{j})");
                } else {
                    assert_eq!(diff, 0.0, "({i},{j})");
                }
            }
        }
    }

    #[test]
    fn edge_change_opens_a_two_pixel_gap() {
        let mut spec = ScenarioSpec::new(ScenarioKind::EdgeStructure);
        spec.seed = 3;
        spec.n_reference = 2;
        spec.t_len = 4;
        spec.change_time = 2;
        let bundle = build_scenario(&spec).unwrap();
        let (r0, r1, c0, c1) = top_right_block(25, 25);
        let mid = (c0 + c1) / 2;
        let mut changed_cols = std::collections::BTreeSet::new();
        for i in 0..25 {
            for j in 0..25 {
                let diff = bundle.truth_post.get(i, j) - bundle.truth_pre.get(i, j);
                if diff.abs() > 1e-9 {
                    assert!((r0..r1).contains(&i), "row {i} outside block");
                    assert!((diff - (PANEL_HIGH - PANEL_LOW)).abs() < 1e-9);
                    changed_cols.insert(j);
                }
            }
        }
        assert_eq!(changed_cols.into_iter().collect::<Vec<_>>(), vec![mid - 1, mid]);
    }

    #[test]
    fn references_do_not_depend_on_stream_length() {
        let mk = |t_len| {
            let mut spec = ScenarioSpec::new(ScenarioKind::SpatialCorrelation);
            spec.rows = 8;
            spec.cols = 8;
            spec.seed = 11;
            spec.t_len = t_len;
            spec.change_time = t_len / 2;
            spec.n_reference = 5;
            build_scenario(&spec).unwrap()
        };
        let short = mk(10);
        let long = mk(40);
        assert_eq!(short.references, long.references);
        // Streams share their common prefix too.
        assert_eq!(short.stream[..4], long.stream[..4]);
    }

    #[test]
    fn custom_pair_requires_matching_shapes() {
        let pre = ImageFrame::zeros(5, 5);
        let post = ImageFrame::zeros(5, 6);
        let mut spec = ScenarioSpec::new(ScenarioKind::CustomPair { pre, post });
        spec.rows = 5;
        spec.cols = 5;
        assert!(matches!(
            build_scenario(&spec),
            Err(SimgenError::InvalidInput(_))
        ));
    }

    #[test]
    fn panel_geometry_at_reference_scale() {
        // 25x25: documented rectangles.
        assert_eq!(panel_rects(25, 25)[0], (3, 22, 2, 10));
        assert_eq!(panel_rects(25, 25)[1], (2, 11, 14, 23));
        assert_eq!(panel_rects(25, 25)[2], (14, 23, 14, 23));
        let img = base_panels(25, 25);
        assert_eq!(img.get(0, 0), PANEL_HIGH);
        assert_eq!(img.get(5, 5), PANEL_LOW);
        assert_eq!(img.get(5, 18), PANEL_LOW);
        assert_eq!(img.get(18, 18), PANEL_LOW);
        assert_eq!(img.get(12, 18), PANEL_HIGH); // between the right blocks
    }
}
