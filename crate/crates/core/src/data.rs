//! Datasets with an informative block `x` and a noise block `y`.
//!
//! Every sample is a row `z = [x, y]` with `x ∈ ℝ^{d_x}`, `y ∈ ℝ^{d_y}`. The
//! synthetic generator draws both blocks uniformly on spheres of radius
//! `√d_x` and `√d_y` and labels them with a linear teacher on `x` alone.
//! Images become samples by adding a noise frame around them: the interior
//! pixels are `x`, the frame pixels are `y`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::harness::derive_seed;
use crate::linops::DenseMatrix;

const ZERO_BLOCK_THRESHOLD: f64 = 1e-12;
const MATRIX_MAGIC: &[u8; 4] = b"GLMA";
const IDX_LABELS: u32 = 0x0000_0801;
const IDX_IMAGES: u32 = 0x0000_0803;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    X,
    Y,
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Block::X => "x",
            Block::Y => "y",
        })
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{block}-block has norm {norm:e}, cannot normalize")]
    ZeroBlock { block: Block, norm: f64 },

    #[error("bad magic number {found:#010x}")]
    BadMagic { found: u32 },

    #[error("file truncated: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },

    #[error("dimensions {0:?} overflow the addressable size")]
    DimensionOverflow(Vec<u64>),

    #[error("invalid dataset: {0}")]
    Invalid(String),

    #[error("metadata: {0}")]
    Metadata(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How a trained model's output is turned into a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    /// `sign(f)` with `sign(0) = +1`.
    Sign,
    /// Index of the largest output, ties to the lowest index.
    Argmax,
}

impl fmt::Display for Readout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Readout::Sign => "sign",
            Readout::Argmax => "argmax",
        })
    }
}

pub fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Index of the first maximal entry.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Regression targets.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    /// `±1` labels.
    Binary(DVector<f64>),
    /// `{0, 1}` one-hot rows, `N × c`.
    OneHot(DenseMatrix),
}

impl Labels {
    pub fn one_hot(classes: &[u8], count: usize) -> Result<Self, DataError> {
        let mut g = DenseMatrix::zeros(classes.len(), count);
        for (i, c) in classes.iter().enumerate() {
            let c = *c as usize;
            if c >= count {
                return Err(DataError::Invalid(format!("class {c} out of range for {count} classes")));
            }
            g[(i, c)] = 1.0;
        }
        Ok(Labels::OneHot(g))
    }

    /// `+1` where `positive` holds, `−1` elsewhere.
    pub fn binary_from(classes: &[u8], positive: impl Fn(u8) -> bool) -> Self {
        Labels::Binary(DVector::from_iterator(
            classes.len(),
            classes.iter().map(|c| if positive(*c) { 1.0 } else { -1.0 }),
        ))
    }

    pub fn len(&self) -> usize {
        match self {
            Labels::Binary(g) => g.len(),
            Labels::OneHot(g) => g.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of regression outputs.
    pub fn outputs(&self) -> usize {
        match self {
            Labels::Binary(_) => 1,
            Labels::OneHot(g) => g.ncols(),
        }
    }

    pub fn readout(&self) -> Readout {
        match self {
            Labels::Binary(_) => Readout::Sign,
            Labels::OneHot(_) => Readout::Argmax,
        }
    }

    /// Targets as an `N × outputs` matrix.
    pub fn matrix(&self) -> DenseMatrix {
        match self {
            Labels::Binary(g) => DenseMatrix::from_column_slice(g.len(), 1, g.as_slice()),
            Labels::OneHot(g) => g.clone(),
        }
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            Labels::Binary(_) => "binary",
            Labels::OneHot(_) => "onehot",
        }
    }

    /// Whether `output` (one entry per regression output) reads out as label `i`.
    pub fn is_correct(&self, i: usize, output: &[f64], readout: Readout) -> bool {
        match (self, readout) {
            (Labels::Binary(g), Readout::Sign) => sign(output[0]) == g[i],
            (Labels::Binary(g), Readout::Argmax) => {
                let predicted = if output.len() == 1 { sign(output[0]) } else { argmax(output) as f64 };
                predicted == g[i]
            }
            (Labels::OneHot(g), Readout::Argmax) => {
                let row: Vec<f64> = g.row(i).iter().copied().collect();
                argmax(output) == argmax(&row)
            }
            (Labels::OneHot(g), Readout::Sign) => output
                .iter()
                .zip(g.row(i).iter())
                .all(|(o, t)| (sign(*o) > 0.0) == (*t > 0.5)),
        }
    }

    pub fn select(&self, rows: &[usize]) -> Labels {
        match self {
            Labels::Binary(g) => Labels::Binary(g.select_rows(rows)),
            Labels::OneHot(g) => Labels::OneHot(g.select_rows(rows)),
        }
    }

    /// Fraction of `+1` labels (binary) or of the most frequent class.
    pub fn majority_fraction(&self) -> f64 {
        let n = self.len().max(1) as f64;
        match self {
            Labels::Binary(g) => g.iter().filter(|v| **v > 0.0).count() as f64 / n,
            Labels::OneHot(g) => {
                let counts: Vec<f64> = (0..g.ncols()).map(|c| g.column(c).sum()).collect();
                counts.iter().cloned().fold(0.0, f64::max) / n
            }
        }
    }
}

/// Rows `z_i = [x_i, y_i]` with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    z: DenseMatrix,
    labels: Labels,
    d_x: usize,
    d_y: usize,
}

impl LabeledDataset {
    pub fn new(z: DenseMatrix, labels: Labels, d_x: usize) -> Result<Self, DataError> {
        if d_x > z.ncols() {
            return Err(DataError::Invalid(format!("d_x = {d_x} exceeds row length {}", z.ncols())));
        }
        if labels.len() != z.nrows() {
            return Err(DataError::Invalid(format!(
                "{} labels for {} rows",
                labels.len(),
                z.nrows()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Invalid("non-finite entry".into()));
        }
        let d_y = z.ncols() - d_x;
        Ok(Self { z, labels, d_x, d_y })
    }

    pub fn len(&self) -> usize {
        self.z.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.z.nrows() == 0
    }

    pub fn z(&self) -> &DenseMatrix {
        &self.z
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn d_y(&self) -> usize {
        self.d_y
    }

    pub fn d(&self) -> usize {
        self.d_x + self.d_y
    }

    /// `α = d_y / d`.
    pub fn alpha(&self) -> f64 {
        self.d_y as f64 / self.d() as f64
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.z.row(i).transpose()
    }

    pub fn x_block(&self, i: usize) -> DVector<f64> {
        self.z.view((i, 0), (1, self.d_x)).transpose().column(0).into_owned()
    }

    pub fn y_block(&self, i: usize) -> DVector<f64> {
        self.z.view((i, self.d_x), (1, self.d_y)).transpose().column(0).into_owned()
    }

    pub fn targets(&self) -> DenseMatrix {
        self.labels.matrix()
    }

    pub fn select(&self, rows: &[usize]) -> LabeledDataset {
        LabeledDataset {
            z: self.z.select_rows(rows),
            labels: self.labels.select(rows),
            d_x: self.d_x,
            d_y: self.d_y,
        }
    }

    /// The dataset without row `i`.
    pub fn without(&self, i: usize) -> LabeledDataset {
        let keep: Vec<usize> = (0..self.len()).filter(|r| *r != i).collect();
        self.select(&keep)
    }

    /// Replaces the labels, keeping the rows.
    pub fn with_labels(&self, labels: Labels) -> Result<LabeledDataset, DataError> {
        LabeledDataset::new(self.z.clone(), labels, self.d_x)
    }

    /// Replaces row `i` and its target row.
    pub fn with_row(&self, i: usize, z: &DVector<f64>, target: &[f64]) -> LabeledDataset {
        let mut out = self.clone();
        out.z.set_row(i, &z.transpose());
        match &mut out.labels {
            Labels::Binary(g) => g[i] = target[0],
            Labels::OneHot(g) => g.set_row(i, &RowDVector::from_row_slice(target)),
        }
        out
    }

    /// Prepends a row.
    pub fn with_first(&self, z: &DVector<f64>, target: &[f64]) -> LabeledDataset {
        let mut zz = self.z.clone().insert_row(0, 0.0);
        zz.set_row(0, &z.transpose());
        let labels = match &self.labels {
            Labels::Binary(g) => Labels::Binary(g.clone().insert_row(0, target[0])),
            Labels::OneHot(g) => {
                let mut g = g.clone().insert_row(0, 0.0);
                g.set_row(0, &RowDVector::from_row_slice(target));
                Labels::OneHot(g)
            }
        };
        LabeledDataset {
            z: zz,
            labels,
            d_x: self.d_x,
            d_y: self.d_y,
        }
    }
}

/// A unit vector `u` defining labels `g(x) = sign(uᵀx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherVector {
    u: DVector<f64>,
    seed: u64,
}

impl TeacherVector {
    pub fn sample(d_x: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let u = sample_sphere(&mut rng, d_x, 1.0);
        Self { u, seed }
    }

    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self, x: &DVector<f64>) -> f64 {
        sign(self.u.dot(x))
    }
}

/// Uniform draw on the sphere of the given radius in `ℝ^dim`.
pub fn sample_sphere<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> DVector<f64> {
    loop {
        let g: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let n = g.norm();
        if n > 0.0 {
            return g.map(|v| v / n * radius);
        }
    }
}

/// Draws `n` samples with `x` and `y` uniform on their spheres and labels
/// `sign(uᵀx)`. The `x` and `y` streams are derived from `seed` independently.
pub fn generate_synthetic(
    n: usize,
    d_x: usize,
    d_y: usize,
    teacher: &TeacherVector,
    seed: u64,
) -> Result<LabeledDataset, DataError> {
    generate_synthetic_streams(n, d_x, d_y, teacher, derive_seed(seed, &[0]), derive_seed(seed, &[1]))
}

/// As [`generate_synthetic`] with explicit seeds for the `x` and `y` streams.
pub fn generate_synthetic_streams(
    n: usize,
    d_x: usize,
    d_y: usize,
    teacher: &TeacherVector,
    x_seed: u64,
    y_seed: u64,
) -> Result<LabeledDataset, DataError> {
    if n == 0 || d_x == 0 || d_y == 0 {
        return Err(DataError::Invalid("N, d_x and d_y must be >= 1".into()));
    }
    if teacher.u.len() != d_x {
        return Err(DataError::Invalid(format!(
            "teacher has length {}, expected d_x = {d_x}",
            teacher.u.len()
        )));
    }
    let mut x_rng = ChaCha20Rng::seed_from_u64(x_seed);
    let mut y_rng = ChaCha20Rng::seed_from_u64(y_seed);
    let rx = (d_x as f64).sqrt();
    let ry = (d_y as f64).sqrt();
    let mut z = DenseMatrix::zeros(n, d_x + d_y);
    let mut g = DVector::zeros(n);
    for i in 0..n {
        let x = sample_sphere(&mut x_rng, d_x, rx);
        let y = sample_sphere(&mut y_rng, d_y, ry);
        g[i] = teacher.label(&x);
        z.view_mut((i, 0), (1, d_x)).copy_from(&x.transpose());
        z.view_mut((i, d_x), (1, d_y)).copy_from(&y.transpose());
    }
    LabeledDataset::new(z, Labels::Binary(g), d_x)
}

/// How the `x`-block of a query is hidden.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MaskStrategy {
    /// Replace `x` by zeros.
    Zero,
    /// Replace `x` by a fresh draw on the sphere of radius `√d_x`.
    Resample { seed: u64 },
}

impl fmt::Display for MaskStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskStrategy::Zero => f.write_str("zero"),
            MaskStrategy::Resample { .. } => f.write_str("resample"),
        }
    }
}

/// `z^m = [x', y]`; the `y`-block is copied bit for bit.
pub fn mask_sample(z: &DVector<f64>, d_x: usize, strategy: MaskStrategy) -> DVector<f64> {
    assert!(d_x <= z.len(), "d_x exceeds row length");
    let mut out = z.clone();
    match strategy {
        MaskStrategy::Zero => out.rows_mut(0, d_x).fill(0.0),
        MaskStrategy::Resample { seed } => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let x = sample_sphere(&mut rng, d_x, (d_x as f64).sqrt());
            out.rows_mut(0, d_x).copy_from(&x);
        }
    }
    out
}

/// Rescales the blocks to `‖x‖ = √d_x` and `‖y‖ = √d_y`.
pub fn normalize_split(z: &DVector<f64>, d_x: usize) -> Result<DVector<f64>, DataError> {
    assert!(d_x <= z.len(), "d_x exceeds row length");
    let d_y = z.len() - d_x;
    let mut out = z.clone();
    for (block, start, len) in [(Block::X, 0, d_x), (Block::Y, d_x, d_y)] {
        let mut view = out.rows_mut(start, len);
        let norm = view.norm();
        if norm < ZERO_BLOCK_THRESHOLD {
            return Err(DataError::ZeroBlock { block, norm });
        }
        view *= (len as f64).sqrt() / norm;
    }
    Ok(out)
}

/// An `H × W × C` image, pixels stored in row-major `(h, w, c)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self, DataError> {
        if pixels.len() != height * width * channels {
            return Err(DataError::Invalid(format!(
                "{} pixels for a {height}x{width}x{channels} image",
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn get(&self, h: usize, w: usize, c: usize) -> f64 {
        self.pixels[(h * self.width + w) * self.channels + c]
    }
}

/// An image with a noise frame, flattened to `z = [interior, frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FramedSample {
    pub z: DVector<f64>,
    pub d_x: usize,
    pub d_y: usize,
    /// `padded_index[j]` is the flat `(h, w, c)` index in the padded image of `z[j]`.
    pub padded_index: Vec<usize>,
    pub padded_height: usize,
    pub padded_width: usize,
    pub channels: usize,
}

impl FramedSample {
    /// Reassembles the padded image from `values` laid out like `z`.
    pub fn to_padded(&self, values: &DVector<f64>) -> Image {
        let mut pixels = vec![0.0; self.padded_height * self.padded_width * self.channels];
        for (j, idx) in self.padded_index.iter().enumerate() {
            pixels[*idx] = values[j];
        }
        Image {
            height: self.padded_height,
            width: self.padded_width,
            channels: self.channels,
            pixels,
        }
    }
}

/// Pads `image` with a frame of i.i.d. uniform `[0, 1)` noise of width
/// `frame_width` on each side.
pub fn add_noise_frame(image: &Image, frame_width: usize, seed: u64) -> Result<FramedSample, DataError> {
    if frame_width == 0 {
        return Err(DataError::Invalid("frame width must be >= 1".into()));
    }
    let (h, w, c) = (image.height, image.width, image.channels);
    let (ph, pw) = (h + 2 * frame_width, w + 2 * frame_width);
    let d_x = h * w * c;
    let d_y = ph * pw * c - d_x;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let mut values = Vec::with_capacity(d_x + d_y);
    let mut padded_index = Vec::with_capacity(d_x + d_y);
    for r in 0..h {
        for col in 0..w {
            for ch in 0..c {
                values.push(image.get(r, col, ch));
                padded_index.push(((r + frame_width) * pw + col + frame_width) * c + ch);
            }
        }
    }
    let inside = |r: usize, col: usize| {
        (frame_width..frame_width + h).contains(&r) && (frame_width..frame_width + w).contains(&col)
    };
    for r in 0..ph {
        for col in 0..pw {
            if inside(r, col) {
                continue;
            }
            for ch in 0..c {
                values.push(rng.random::<f64>());
                padded_index.push((r * pw + col) * c + ch);
            }
        }
    }
    Ok(FramedSample {
        z: DVector::from_vec(values),
        d_x,
        d_y,
        padded_index,
        padded_height: ph,
        padded_width: pw,
        channels: c,
    })
}

/// How far framed images are from exactly normalized, centered blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationResidual {
    /// Mean over rows and blocks of `|‖block‖ / √d_block − 1|` after centering.
    pub pre_scale_norm_deviation: f64,
    /// `‖mean row‖ / √d` after normalization.
    pub post_scale_mean_norm: f64,
}

/// Frames, centers and normalizes images. Block means are learned from the
/// training set and reused for test images.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePipeline {
    frame_width: usize,
    mean: DVector<f64>,
    d_x: usize,
}

impl ImagePipeline {
    pub fn frame_width(&self) -> usize {
        self.frame_width
    }

    fn frame_all(images: &[Image], frame_width: usize, seed: u64) -> Result<(DenseMatrix, usize), DataError> {
        let first = images
            .first()
            .ok_or_else(|| DataError::Invalid("no images".into()))?;
        let shape = (first.height, first.width, first.channels);
        let mut rows = Vec::with_capacity(images.len());
        let mut d_x = 0;
        for (i, img) in images.iter().enumerate() {
            if (img.height, img.width, img.channels) != shape {
                return Err(DataError::Invalid(format!("image {i} has a different shape")));
            }
            let framed = add_noise_frame(img, frame_width, derive_seed(seed, &[i as u64]))?;
            d_x = framed.d_x;
            rows.push(framed.z);
        }
        let d = rows[0].len();
        let z = DenseMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]);
        Ok((z, d_x))
    }

    fn finish(&self, mut z: DenseMatrix, labels: Labels) -> Result<(LabeledDataset, NormalizationResidual), DataError> {
        let n = z.nrows();
        let d = z.ncols();
        let d_y = d - self.d_x;
        for r in 0..n {
            let mut row = z.row_mut(r);
            row -= self.mean.transpose();
        }
        let mut deviation = 0.0;
        for r in 0..n {
            let row: DVector<f64> = z.row(r).transpose();
            let nx = row.rows(0, self.d_x).norm() / (self.d_x as f64).sqrt();
            let ny = row.rows(self.d_x, d_y).norm() / (d_y as f64).sqrt();
            deviation += (nx - 1.0).abs() + (ny - 1.0).abs();
            z.set_row(r, &normalize_split(&row, self.d_x)?.transpose());
        }
        let mean_row = DVector::from_fn(d, |c, _| z.column(c).mean());
        let residual = NormalizationResidual {
            pre_scale_norm_deviation: deviation / (2 * n.max(1)) as f64,
            post_scale_mean_norm: mean_row.norm() / (d as f64).sqrt(),
        };
        Ok((LabeledDataset::new(z, labels, self.d_x)?, residual))
    }

    /// Builds a training set and learns the block means from it.
    pub fn fit(
        images: &[Image],
        labels: Labels,
        frame_width: usize,
        seed: u64,
    ) -> Result<(Self, LabeledDataset, NormalizationResidual), DataError> {
        let (z, d_x) = Self::frame_all(images, frame_width, seed)?;
        let mean = DVector::from_fn(z.ncols(), |c, _| z.column(c).mean());
        let pipeline = Self { frame_width, mean, d_x };
        let (data, residual) = pipeline.finish(z, labels)?;
        Ok((pipeline, data, residual))
    }

    /// Applies the training means to new images.
    pub fn transform(
        &self,
        images: &[Image],
        labels: Labels,
        seed: u64,
    ) -> Result<(LabeledDataset, NormalizationResidual), DataError> {
        let (z, _) = Self::frame_all(images, self.frame_width, seed)?;
        if z.ncols() != self.mean.len() {
            return Err(DataError::Invalid("image shape differs from training images".into()));
        }
        self.finish(z, labels)
    }
}

/// Contents of an IDX file.
#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    Labels(Vec<u8>),
    Images(ImageSet),
}

/// Unsigned-byte images as stored in IDX files.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl ImageSet {
    /// Image `i` with pixels scaled to `[0, 1]`.
    pub fn image(&self, i: usize) -> Image {
        let size = self.rows * self.cols;
        let pixels = self.pixels[i * size..(i + 1) * size]
            .iter()
            .map(|p| *p as f64 / 255.0)
            .collect();
        Image {
            height: self.rows,
            width: self.cols,
            channels: 1,
            pixels,
        }
    }

    pub fn images(&self) -> Vec<Image> {
        (0..self.count).map(|i| self.image(i)).collect()
    }
}

fn read_u32_be(bytes: &[u8], at: usize) -> Result<u32, DataError> {
    let b = bytes.get(at..at + 4).ok_or(DataError::TruncatedFile {
        expected: at + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxData, DataError> {
    let magic = read_u32_be(bytes, 0)?;
    let ndims = match magic {
        IDX_LABELS => 1,
        IDX_IMAGES => 3,
        found => return Err(DataError::BadMagic { found }),
    };
    let mut dims = Vec::with_capacity(ndims);
    for k in 0..ndims {
        dims.push(read_u32_be(bytes, 4 + 4 * k)? as usize);
    }
    let header = 4 + 4 * ndims;
    let size = dims
        .iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(*d))
        .and_then(|s| s.checked_add(header))
        .ok_or_else(|| DataError::DimensionOverflow(dims.iter().map(|d| *d as u64).collect()))?;
    if bytes.len() < size {
        return Err(DataError::TruncatedFile {
            expected: size,
            found: bytes.len(),
        });
    }
    let body = bytes[header..size].to_vec();
    Ok(match magic {
        IDX_LABELS => IdxData::Labels(body),
        _ => IdxData::Images(ImageSet {
            count: dims[0],
            rows: dims[1],
            cols: dims[2],
            pixels: body,
        }),
    })
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxData, DataError> {
    parse_idx(&fs::read(path)?)
}

/// Serializes a matrix as `GLMA`, `u32` rows, `u32` cols (little endian),
/// then row-major little-endian `f64`s.
pub fn encode_matrix(m: &DenseMatrix) -> Result<Vec<u8>, DataError> {
    let (rows, cols) = m.shape();
    let (r32, c32) = match (u32::try_from(rows), u32::try_from(cols)) {
        (Ok(r), Ok(c)) => (r, c),
        _ => return Err(DataError::DimensionOverflow(vec![rows as u64, cols as u64])),
    };
    let mut out = Vec::with_capacity(12 + 8 * rows * cols);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&r32.to_le_bytes());
    out.extend_from_slice(&c32.to_le_bytes());
    for r in 0..rows {
        for c in 0..cols {
            out.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DenseMatrix, DataError> {
    let head = bytes.get(0..12).ok_or(DataError::TruncatedFile {
        expected: 12,
        found: bytes.len(),
    })?;
    if &head[0..4] != MATRIX_MAGIC {
        return Err(DataError::BadMagic {
            found: u32::from_be_bytes([head[0], head[1], head[2], head[3]]),
        });
    }
    let rows = u32::from_le_bytes([head[4], head[5], head[6], head[7]]) as usize;
    let cols = u32::from_le_bytes([head[8], head[9], head[10], head[11]]) as usize;
    let size = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(12))
        .ok_or(DataError::DimensionOverflow(vec![rows as u64, cols as u64]))?;
    if bytes.len() < size {
        return Err(DataError::TruncatedFile {
            expected: size,
            found: bytes.len(),
        });
    }
    let values: Vec<f64> = bytes[12..size]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(DenseMatrix::from_row_slice(rows, cols, &values))
}

pub fn save_matrix(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<(), DataError> {
    fs::write(path, encode_matrix(m)?)?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix, DataError> {
    decode_matrix(&fs::read(path)?)
}

/// `key=value` sidecar describing a stored dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMetadata {
    pub n: usize,
    pub d_x: usize,
    pub d_y: usize,
    pub seed: u64,
    pub label_mode: String,
    pub frame_width: Option<usize>,
    /// Additional entries, written after the fixed keys in key order.
    pub extra: BTreeMap<String, String>,
}

impl DatasetMetadata {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "n={}\nd_x={}\nd_y={}\nseed={}\nlabel_mode={}\n",
            self.n, self.d_x, self.d_y, self.seed, self.label_mode
        );
        if let Some(w) = self.frame_width {
            s.push_str(&format!("frame_width={w}\n"));
        }
        for (k, v) in &self.extra {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut map = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| DataError::Metadata(format!("line without '=': {line}")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        fn take<T: std::str::FromStr>(map: &mut BTreeMap<String, String>, key: &str) -> Result<T, DataError> {
            let v = map
                .remove(key)
                .ok_or_else(|| DataError::Metadata(format!("missing key `{key}`")))?;
            v.parse()
                .map_err(|_| DataError::Metadata(format!("bad value for `{key}`: {v}")))
        }
        let n = take(&mut map, "n")?;
        let d_x = take(&mut map, "d_x")?;
        let d_y = take(&mut map, "d_y")?;
        let seed = take(&mut map, "seed")?;
        let label_mode = take(&mut map, "label_mode")?;
        let frame_width = if map.contains_key("frame_width") {
            Some(take(&mut map, "frame_width")?)
        } else {
            None
        };
        Ok(Self {
            n,
            d_x,
            d_y,
            seed,
            label_mode,
            frame_width,
            extra: map,
        })
    }
}

/// Writes `<stem>.z.glma`, `<stem>.g.glma` and `<stem>.meta`.
pub fn save_dataset(stem: impl AsRef<Path>, data: &LabeledDataset, meta: &DatasetMetadata) -> Result<(), DataError> {
    let stem = stem.as_ref();
    save_matrix(with_suffix(stem, "z.glma"), data.z())?;
    save_matrix(with_suffix(stem, "g.glma"), &data.targets())?;
    let mut f = fs::File::create(with_suffix(stem, "meta"))?;
    f.write_all(meta.to_text().as_bytes())?;
    Ok(())
}

pub fn load_dataset(stem: impl AsRef<Path>) -> Result<(LabeledDataset, DatasetMetadata), DataError> {
    let stem = stem.as_ref();
    let meta = DatasetMetadata::parse(&fs::read_to_string(with_suffix(stem, "meta"))?)?;
    let z = load_matrix(with_suffix(stem, "z.glma"))?;
    let g = load_matrix(with_suffix(stem, "g.glma"))?;
    let labels = match meta.label_mode.as_str() {
        "binary" => Labels::Binary(g.column(0).into_owned()),
        "onehot" => Labels::OneHot(g),
        other => return Err(DataError::Metadata(format!("unknown label mode `{other}`"))),
    };
    let data = LabeledDataset::new(z, labels, meta.d_x)?;
    if data.len() != meta.n || data.d_y() != meta.d_y {
        return Err(DataError::Metadata("sidecar does not match the stored matrices".into()));
    }
    Ok((data, meta))
}

fn with_suffix(stem: &Path, suffix: &str) -> std::path::PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    s.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn synthetic_rows_have_exact_block_norms() {
        let t = TeacherVector::sample(7, 1);
        assert!((t.u().norm() - 1.0).abs() < 1e-12);
        let data = generate_synthetic(50, 7, 5, &t, 2).unwrap();
        for i in 0..data.len() {
            assert!((data.x_block(i).norm() - 7f64.sqrt()).abs() < 1e-10);
            assert!((data.y_block(i).norm() - 5f64.sqrt()).abs() < 1e-10);
        }
        assert!((data.alpha() - 5.0 / 12.0).abs() < 1e-15);
        assert_eq!(data, generate_synthetic(50, 7, 5, &t, 2).unwrap());
    }

    #[test]
    fn one_dimensional_x_is_a_sign() {
        let t = TeacherVector::sample(1, 3);
        assert_eq!(t.u()[0].abs(), 1.0);
        let data = generate_synthetic(20, 1, 4, &t, 4).unwrap();
        let Labels::Binary(g) = data.labels() else { unreachable!() };
        for i in 0..20 {
            let x = data.x_block(i)[0];
            assert!(x == 1.0 || x == -1.0);
            assert_eq!(g[i], sign(t.u()[0] * x));
        }
    }

    #[test]
    fn label_balance() {
        let n = 10_000;
        let t = TeacherVector::sample(50, 5);
        let data = generate_synthetic(n, 50, 2, &t, 6).unwrap();
        let frac = data.labels().majority_fraction();
        assert!((frac - 0.5).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn blocks_are_uncorrelated() {
        let n = 10_000;
        let t = TeacherVector::sample(3, 7);
        let data = generate_synthetic(n, 3, 3, &t, 8).unwrap();
        for a in 0..3 {
            for b in 3..6 {
                let xs: Vec<f64> = data.z().column(a).iter().copied().collect();
                let ys: Vec<f64> = data.z().column(b).iter().copied().collect();
                let r = crate::stats::pearson(&xs, &ys);
                assert!(r.abs() < 5.0 / (n as f64).sqrt(), "corr({a},{b}) = {r}");
            }
        }
    }

    #[test]
    fn labels_depend_only_on_x() {
        let t = TeacherVector::sample(6, 9);
        let a = generate_synthetic_streams(40, 6, 4, &t, 10, 11).unwrap();
        let b = generate_synthetic_streams(40, 6, 4, &t, 10, 12).unwrap();
        assert_eq!(a.labels(), b.labels());
        assert_ne!(a.y_block(0), b.y_block(0));
        assert_eq!(a.x_block(0), b.x_block(0));
    }

    #[test]
    fn mask_examples() {
        let z = DVector::from_row_slice(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(mask_sample(&z, 3, MaskStrategy::Zero).as_slice(), &[0.0, 0.0, 0.0, 4.0, 5.0]);
        let r1 = mask_sample(&z, 3, MaskStrategy::Resample { seed: 4 });
        let r2 = mask_sample(&z, 3, MaskStrategy::Resample { seed: 4 });
        assert_eq!(r1, r2);
        assert_eq!(r1.rows(3, 2), z.rows(3, 2));
        assert!((r1.rows(0, 3).norm() - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn normalize_examples() {
        let z = DVector::from_row_slice(&[3.0, 4.0, 0.0, 2.0]);
        let n = normalize_split(&z, 2).unwrap();
        let s2 = 2f64.sqrt();
        assert!((n[0] - 0.6 * s2).abs() < 1e-15 && (n[1] - 0.8 * s2).abs() < 1e-15);
        let again = normalize_split(&n, 2).unwrap();
        assert!((again - &n).amax() < 1e-12);
        let zero = DVector::from_row_slice(&[0.0, 0.0, 1.0]);
        assert!(matches!(
            normalize_split(&zero, 2),
            Err(DataError::ZeroBlock { block: Block::X, .. })
        ));
        let zero_y = DVector::from_row_slice(&[1.0, 0.0]);
        assert!(matches!(
            normalize_split(&zero_y, 1),
            Err(DataError::ZeroBlock { block: Block::Y, .. })
        ));
    }

    #[test]
    fn noise_frame_dimensions() {
        let img = Image::new(2, 2, 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let f = add_noise_frame(&img, 1, 0).unwrap();
        assert_eq!((f.d_x, f.d_y), (4, 12));
        assert_eq!(f.z.rows(0, 4).as_slice(), &[0.1, 0.2, 0.3, 0.4]);
        let padded = f.to_padded(&f.z);
        assert_eq!(padded.get(1, 1, 0), 0.1);
        assert_eq!(padded.get(2, 2, 0), 0.4);
        assert!(f.z.rows(4, 12).iter().all(|v| (0.0..1.0).contains(v)));

        let mnist = Image::new(28, 28, 1, vec![0.5; 784]).unwrap();
        let f = add_noise_frame(&mnist, 10, 0).unwrap();
        assert_eq!((f.d_x, f.d_y), (784, 1520));

        let g = add_noise_frame(&mnist, 10, 1).unwrap();
        assert_eq!(f.z.rows(0, 784), g.z.rows(0, 784));
        assert_ne!(f.z.rows(784, 1520), g.z.rows(784, 1520));

        let mut seen = f.padded_index.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..48 * 48).collect::<Vec<_>>());
        assert!(add_noise_frame(&mnist, 0, 0).is_err());
    }

    #[test]
    fn image_pipeline_centers_and_normalizes() {
        let images: Vec<Image> = (0..6)
            .map(|i| Image::new(3, 3, 1, (0..9).map(|p| ((p * 7 + i * 3) % 11) as f64 / 10.0).collect()).unwrap())
            .collect();
        let labels = Labels::one_hot(&[0, 1, 2, 0, 1, 2], 3).unwrap();
        let (pipe, data, residual) = ImagePipeline::fit(&images, labels.clone(), 2, 5).unwrap();
        assert_eq!(data.d_x(), 9);
        assert_eq!(data.d_y(), 49 - 9);
        for i in 0..data.len() {
            assert!((data.x_block(i).norm() - 3.0).abs() < 1e-12);
            assert!((data.y_block(i).norm() - 40f64.sqrt()).abs() < 1e-12);
        }
        assert!(residual.pre_scale_norm_deviation.is_finite());
        assert!(residual.post_scale_mean_norm < 1.0);
        let (test, _) = pipe.transform(&images[..2], labels.select(&[0, 1]), 6).unwrap();
        assert_eq!(test.len(), 2);
    }

    #[test]
    fn idx_parsing() {
        let empty = [0, 0, 8, 1, 0, 0, 0, 0];
        assert_eq!(parse_idx(&empty).unwrap(), IdxData::Labels(vec![]));

        #[rustfmt::skip]
        let images = [
            0x00, 0x00, 0x08, 0x03,
            0x00, 0x00, 0x00, 0x02,
            0x00, 0x00, 0x00, 0x02,
            0x00, 0x00, 0x00, 0x02,
            0, 255, 17, 34,
            51, 68, 85, 102,
        ];
        let IdxData::Images(set) = parse_idx(&images).unwrap() else { panic!() };
        assert_eq!((set.count, set.rows, set.cols), (2, 2, 2));
        assert_eq!(set.pixels, vec![0, 255, 17, 34, 51, 68, 85, 102]);
        assert_eq!(set.image(0).pixels, vec![0.0, 1.0, 17.0 / 255.0, 34.0 / 255.0]);
        assert_eq!(set.image(1).get(1, 1, 0), 102.0 / 255.0);

        assert!(matches!(parse_idx(&[0, 0, 8, 2, 0, 0, 0, 0]), Err(DataError::BadMagic { found: 0x802 })));
        assert!(matches!(parse_idx(&images[..20]), Err(DataError::TruncatedFile { .. })));
        assert!(matches!(parse_idx(&[0, 0, 8]), Err(DataError::TruncatedFile { .. })));
    }

    #[test]
    fn matrix_round_trip() {
        let m = DenseMatrix::from_row_slice(2, 3, &[1.0, -0.0, f64::MIN_POSITIVE, 1e300, -2.5, std::f64::consts::PI]);
        let bytes = encode_matrix(&m).unwrap();
        assert_eq!(&bytes[0..4], b"GLMA");
        assert_eq!(&bytes[4..12], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&bytes[12..20], &1.0f64.to_le_bytes());
        let back = decode_matrix(&bytes).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(matches!(decode_matrix(&bytes[..30]), Err(DataError::TruncatedFile { .. })));
        assert!(matches!(decode_matrix(b"XXXX\0\0\0\0\0\0\0\0"), Err(DataError::BadMagic { .. })));
    }

    #[test]
    fn dataset_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("train");
        let t = TeacherVector::sample(4, 1);
        let data = generate_synthetic(10, 4, 3, &t, 2).unwrap();
        let mut extra = BTreeMap::new();
        extra.insert("teacher_seed".to_string(), "1".to_string());
        let meta = DatasetMetadata {
            n: 10,
            d_x: 4,
            d_y: 3,
            seed: 2,
            label_mode: "binary".into(),
            frame_width: None,
            extra,
        };
        save_dataset(&stem, &data, &meta).unwrap();
        let (back, meta_back) = load_dataset(&stem).unwrap();
        assert_eq!(back, data);
        assert_eq!(meta_back, meta);
    }

    #[test]
    fn readouts() {
        assert_eq!(sign(0.0), 1.0);
        assert_eq!(sign(-0.0), 1.0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        let labels = Labels::one_hot(&[2], 3).unwrap();
        assert!(labels.is_correct(0, &[0.0, 0.1, 0.5], Readout::Argmax));
        assert!(!labels.is_correct(0, &[0.5, 0.1, 0.5], Readout::Argmax));
    }

    proptest! {
        #[test]
        fn zero_mask_is_idempotent(values in proptest::collection::vec(-10.0f64..10.0, 2..20), split in 0usize..20) {
            let z = DVector::from_vec(values);
            let d_x = split % (z.len() + 1);
            let once = mask_sample(&z, d_x, MaskStrategy::Zero);
            let twice = mask_sample(&once, d_x, MaskStrategy::Zero);
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(once.rows(d_x, z.len() - d_x), z.rows(d_x, z.len() - d_x));
        }

        #[test]
        fn frame_preserves_interior(h in 1usize..6, w in 1usize..6, c in 1usize..4, fw in 1usize..4, seed in any::<u64>()) {
            let pixels: Vec<f64> = (0..h * w * c).map(|i| i as f64 * 0.37).collect();
            let img = Image::new(h, w, c, pixels).unwrap();
            let f = add_noise_frame(&img, fw, seed).unwrap();
            let padded = f.to_padded(&f.z);
            for r in 0..h {
                for col in 0..w {
                    for ch in 0..c {
                        prop_assert_eq!(padded.get(r + fw, col + fw, ch).to_bits(), img.get(r, col, ch).to_bits());
                    }
                }
            }
            prop_assert_eq!(f.d_y, ((h + 2 * fw) * (w + 2 * fw) - h * w) * c);
        }
    }
}
