//! Binary file formats.
//!
//! Frame sequences (`.bimg`):
//!
//! ```text
//! magic   4 bytes  "BIMG"
//! version u16 LE   (currently 1)
//! rows    u32 LE
//! cols    u32 LE
//! frames  u32 LE
//! data    frames * rows * cols f32 LE, row-major within a frame,
//!         frames consecutive
//! ```
//!
//! Priors (`.bpri`):
//!
//! ```text
//! magic   4 bytes  "BPRI"
//! version u16 LE   (currently 1)
//! kind    u8       0 = structured (eigenbasis), 1 = diagonal
//! rows    u32 LE
//! cols    u32 LE
//! mean    p f64 LE           (mu0 / pixel means)
//! d       p f64 LE           (precision eigenvalues / prior variances)
//! P       p*p f64 LE         (eigenvector matrix, row-major;
//!                             structured kind only)
//! gamma2  f64 LE
//! seed    u64 LE   \
//! iters   u64 LE    } provenance
//! elbo    f64 LE   /
//! ```
//!
//! Both readers reject trailing bytes and any size mismatch. Floats are
//! written bit-exactly, so serialize/deserialize round trips are lossless
//! at 64-bit precision.

use std::fs;
use std::path::Path;

use blast_bocd::SpectralPrior;
use blast_dgmrf::{DiagonalPrior, ElicitedPrior, Provenance};
use blast_linalg::{EigenBasis, ImageFrame};
use nalgebra::{DMatrix, DVector};

use crate::CliError;

const BIMG_MAGIC: &[u8; 4] = b"BIMG";
const BPRI_MAGIC: &[u8; 4] = b"BPRI";
const FORMAT_VERSION: u16 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }

    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    fn f32(&mut self, v: f32) {
        self.bytes(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], path: &'a Path) -> Self {
        Self { buf, at: 0, path }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CliError> {
        if self.at + n > self.buf.len() {
            return Err(CliError::Input(format!(
                "{}: truncated file (wanted {n} bytes at offset {})",
                self.path.display(),
                self.at
            )));
        }
        let slice = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16, CliError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8, CliError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CliError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CliError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, CliError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CliError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<(), CliError> {
        if self.at != self.buf.len() {
            return Err(CliError::Input(format!(
                "{}: {} trailing bytes",
                self.path.display(),
                self.buf.len() - self.at
            )));
        }
        Ok(())
    }
}

/// Writes a frame sequence. Pixels are stored as f32 per the format.
pub fn write_frames(path: impl AsRef<Path>, frames: &[ImageFrame<f64>]) -> Result<(), CliError> {
    let path = path.as_ref();
    let first = frames
        .first()
        .ok_or_else(|| CliError::Input("refusing to write an empty frame sequence".into()))?;
    if frames.iter().any(|f| !f.same_shape(first)) {
        return Err(CliError::Input("frames must share dimensions".into()));
    }
    let mut w = Writer::new();
    w.bytes(BIMG_MAGIC);
    w.u16(FORMAT_VERSION);
    w.u32(first.rows() as u32);
    w.u32(first.cols() as u32);
    w.u32(frames.len() as u32);
    for frame in frames {
        for &v in frame.as_slice() {
            w.f32(v as f32);
        }
    }
    fs::write(path, w.buf).map_err(|e| CliError::io(path, e))
}

pub fn read_frames(path: impl AsRef<Path>) -> Result<Vec<ImageFrame<f64>>, CliError> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let mut r = Reader::new(&buf, path);
    if r.take(4)? != BIMG_MAGIC {
        return Err(CliError::Input(format!("{}: not a frame file", path.display())));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(CliError::Input(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let count = r.u32()? as usize;
    if rows == 0 || cols == 0 {
        return Err(CliError::Input(format!("{}: empty dimensions", path.display())));
    }
    let mut frames = Vec::with_capacity(count);
    for _ in 0..count {
        let mut pixels = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            pixels.push(r.f32()? as f64);
        }
        frames.push(
            ImageFrame::new(rows, cols, pixels).map_err(|e| CliError::Input(e.to_string()))?,
        );
    }
    r.finish()?;
    Ok(frames)
}

/// A prior loaded from disk, ready to drive the detection engine.
#[derive(Debug, Clone)]
pub enum LoadedPrior {
    Structured {
        rows: usize,
        cols: usize,
        mu0: DVector<f64>,
        basis: EigenBasis<f64>,
        gamma2: f64,
        provenance: Provenance,
    },
    Diagonal(DiagonalPrior),
}

impl LoadedPrior {
    pub fn rows(&self) -> usize {
        match self {
            LoadedPrior::Structured { rows, .. } => *rows,
            LoadedPrior::Diagonal(d) => d.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            LoadedPrior::Structured { cols, .. } => *cols,
            LoadedPrior::Diagonal(d) => d.cols(),
        }
    }

    pub fn spectral(&self) -> Result<SpectralPrior, CliError> {
        match self {
            LoadedPrior::Structured { rows, cols, mu0, basis, gamma2, .. } => {
                Ok(SpectralPrior::from_basis(*rows, *cols, basis, mu0.clone(), *gamma2)?)
            }
            LoadedPrior::Diagonal(d) => Ok(SpectralPrior::from_diagonal(d)),
        }
    }
}

pub fn write_structured_prior(
    path: impl AsRef<Path>,
    prior: &ElicitedPrior,
) -> Result<(), CliError> {
    let path = path.as_ref();
    let p = prior.pixels();
    let mut w = Writer::new();
    w.bytes(BPRI_MAGIC);
    w.u16(FORMAT_VERSION);
    w.buf.push(0u8);
    w.u32(prior.rows() as u32);
    w.u32(prior.cols() as u32);
    for &v in prior.mu0().as_slice() {
        w.f64(v);
    }
    for &v in prior.basis().values().as_slice() {
        w.f64(v);
    }
    let vectors = prior.basis().vectors();
    for i in 0..p {
        for j in 0..p {
            w.f64(vectors[(i, j)]);
        }
    }
    w.f64(prior.noise_variance());
    let prov = prior.provenance();
    w.u64(prov.seed);
    w.u64(prov.iterations);
    w.f64(prov.final_elbo);
    fs::write(path, w.buf).map_err(|e| CliError::io(path, e))
}

pub fn write_diagonal_prior(
    path: impl AsRef<Path>,
    prior: &DiagonalPrior,
    reference_log_marginal: f64,
) -> Result<(), CliError> {
    let path = path.as_ref();
    let mut w = Writer::new();
    w.bytes(BPRI_MAGIC);
    w.u16(FORMAT_VERSION);
    w.buf.push(1u8);
    w.u32(prior.rows() as u32);
    w.u32(prior.cols() as u32);
    for &v in prior.mean().as_slice() {
        w.f64(v);
    }
    for &v in prior.var_diag().as_slice() {
        w.f64(v);
    }
    w.f64(prior.noise_variance());
    w.u64(0);
    w.u64(0);
    w.f64(reference_log_marginal);
    fs::write(path, w.buf).map_err(|e| CliError::io(path, e))
}

pub fn read_prior(path: impl AsRef<Path>) -> Result<LoadedPrior, CliError> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let mut r = Reader::new(&buf, path);
    if r.take(4)? != BPRI_MAGIC {
        return Err(CliError::Input(format!("{}: not a prior file", path.display())));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(CliError::Input(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let kind = r.u8()?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let p = rows * cols;
    if p == 0 {
        return Err(CliError::Input(format!("{}: empty dimensions", path.display())));
    }
    let read_vec = |r: &mut Reader, n: usize| -> Result<DVector<f64>, CliError> {
        let mut v = DVector::zeros(n);
        for i in 0..n {
            v[i] = r.f64()?;
        }
        Ok(v)
    };
    let mean = read_vec(&mut r, p)?;
    let d = read_vec(&mut r, p)?;
    let loaded = match kind {
        0 => {
            let mut vectors = DMatrix::zeros(p, p);
            for i in 0..p {
                for j in 0..p {
                    vectors[(i, j)] = r.f64()?;
                }
            }
            let gamma2 = r.f64()?;
            let provenance =
                Provenance { seed: r.u64()?, iterations: r.u64()?, final_elbo: r.f64()? };
            let basis = EigenBasis::from_parts(vectors, d)
                .map_err(|e| CliError::Input(e.to_string()))?;
            LoadedPrior::Structured { rows, cols, mu0: mean, basis, gamma2, provenance }
        }
        1 => {
            let gamma2 = r.f64()?;
            let _seed = r.u64()?;
            let _iters = r.u64()?;
            let _loglik = r.f64()?;
            LoadedPrior::Diagonal(
                DiagonalPrior::from_parts(rows, cols, mean, d, gamma2)
                    .map_err(|e| CliError::Input(e.to_string()))?,
            )
        }
        other => {
            return Err(CliError::Input(format!(
                "{}: unknown prior kind {other}",
                path.display()
            )))
        }
    };
    r.finish()?;
    Ok(loaded)
}
