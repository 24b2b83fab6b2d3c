//! Background denoising of an image stack by rank-k projection.
//!
//! A stack of `k` images with `p` pixels is stored as a `k × p` matrix. The
//! PCA code works on `p × k` data (pixels are dimensions, images are
//! samples), so the stack is transposed on the way in and out.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use htpca_core::linalg::Matrix;
use htpca_core::pca::{fit_classical_pca, fit_heavy_pca, project_reconstruct, PcaModel};
use htpca_core::robust::{marginal_scale, median, EstimatorMode};
use htpca_core::sampling::{sample_superstatistical, GaussianSpec, RngSeed, Subordinator};
use htpca_core::shape::ShapeMethod;
use htpca_core::{Error, Result};

use crate::config::{MethodName, MethodResources};
use crate::io::GrayImage;

/// Noise variance of the digit experiment (pixels in `[0, 1]`).
pub const MNIST_NOISE_VARIANCE: f64 = 10.0;
/// Noise variance of the video-frame experiment.
pub const FRAME_NOISE_VARIANCE: f64 = 0.02;
/// Fewest images that still give a usable per-pixel location.
pub const MIN_IMAGES: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct ImageStack {
    pub width: usize,
    pub height: usize,
    /// `k × (width·height)`, one image per row.
    pub images: Matrix<f64>,
}

impl ImageStack {
    pub fn new(width: usize, height: usize, images: Matrix<f64>) -> Result<Self> {
        if width * height != images.ncols() || width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "stack rows have {} pixels, expected {width}×{height}",
                images.ncols()
            )));
        }
        Ok(Self {
            width,
            height,
            images,
        })
    }

    pub fn from_images(images: &[GrayImage]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::Input("empty image stack".into()))?;
        if let Some(k) = images
            .iter()
            .position(|im| im.width != first.width || im.height != first.height)
        {
            return Err(Error::Dimension(format!(
                "image {k} is {}×{}, expected {}×{}",
                images[k].width, images[k].height, first.width, first.height
            )));
        }
        let rows: Vec<&[f64]> = images.iter().map(|im| im.pixels.as_slice()).collect();
        Self::new(first.width, first.height, Matrix::from_rows(&rows))
    }

    pub fn len(&self) -> usize {
        self.images.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn image(&self, k: usize) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.images.row(k).to_vec(),
        }
    }
}

fn add_blob(img: &mut [f64], side: usize, cx: f64, cy: f64, radius: f64, width: f64, weight: f64) {
    for y in 0..side {
        for x in 0..side {
            let r = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            img[y * side + x] += weight * (-((r - radius) / width).powi(2)).exp();
        }
    }
}

/// Deterministic "digit-like" stack: `count` square images of side `side`
/// mixing a few ring and stroke templates (a rank-4 family) with random
/// weights, half resembling a "0" and half an "8". Pixels lie in `[0, 1]`.
pub fn synthetic_digit_stack(count: usize, side: usize, seed: u64) -> Result<ImageStack> {
    if count == 0 || side < 8 {
        return Err(Error::Config(format!(
            "synthetic stack needs at least one image of side >= 8, got {count} of side {side}"
        )));
    }
    let s = side as f64;
    let p = side * side;
    let mut templates = vec![vec![0.0; p]; 4];
    let c = (s - 1.0) / 2.0;
    add_blob(&mut templates[0], side, c, c, 0.3 * s, 0.06 * s, 1.0);
    add_blob(&mut templates[1], side, c, c - 0.18 * s, 0.15 * s, 0.05 * s, 1.0);
    add_blob(&mut templates[2], side, c, c + 0.18 * s, 0.15 * s, 0.05 * s, 1.0);
    for y in 0..side {
        let t = (y as f64 - c) / (0.3 * s);
        if t.abs() <= 1.0 {
            for x in 0..side {
                let dx = (x as f64 - c + 0.1 * s * t) / (0.05 * s);
                templates[3][y * side + x] += (-dx * dx).exp() * (PI * t / 2.0).cos();
            }
        }
    }

    let mut rng = RngSeed::new(seed).rng();
    let mut images = Matrix::zeros(count, p);
    for k in 0..count {
        let weights: [f64; 4] = if k % 2 == 0 {
            [rng.random_range(0.7..1.0), 0.0, 0.0, rng.random_range(0.0..0.3)]
        } else {
            [
                0.0,
                rng.random_range(0.7..1.0),
                rng.random_range(0.7..1.0),
                rng.random_range(0.0..0.2),
            ]
        };
        let row = images.row_mut(k);
        for (w, t) in weights.iter().zip(&templates) {
            for (v, &tv) in row.iter_mut().zip(t) {
                *v += w * tv;
            }
        }
    }
    let peak = images.max_abs();
    ImageStack::new(side, side, images.scaled(1.0 / peak))
}

/// `A^{1/2} G` noise with `G ~ N(0, variance · I)`, one draw per image. A
/// zero variance means no noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub subordinator: Subordinator,
    pub variance: f64,
}

impl NoiseSpec {
    pub fn mnist(subordinator: Subordinator) -> Self {
        Self {
            subordinator,
            variance: MNIST_NOISE_VARIANCE,
        }
    }

    pub fn frame(subordinator: Subordinator) -> Self {
        Self {
            subordinator,
            variance: FRAME_NOISE_VARIANCE,
        }
    }
}

/// Adds one noise vector to every image.
pub fn add_noise(stack: &ImageStack, noise: NoiseSpec, seed: RngSeed) -> Result<ImageStack> {
    if noise.variance == 0.0 {
        return Ok(stack.clone());
    }
    let spec = GaussianSpec::isotropic(stack.images.ncols(), noise.variance)?;
    let n = sample_superstatistical(&spec, noise.subordinator, stack.len(), seed)?;
    ImageStack::new(stack.width, stack.height, stack.images.add(&n.transpose()))
}

/// How the rank-k subspace is learned.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pipeline {
    /// Mean centring and the empirical covariance.
    Classical,
    /// Per-pixel Cauchy location and a heavy-tailed shape estimator.
    Heavy(MethodName),
}

impl Pipeline {
    pub fn label(&self) -> String {
        match self {
            Self::Classical => "classical".into(),
            Self::Heavy(m) => format!("heavy_{m}"),
        }
    }
}

/// Rank-`rank` reconstruction of every image of `noisy`.
pub fn reconstruct(
    noisy: &ImageStack,
    pipeline: Pipeline,
    rank: usize,
    mode: EstimatorMode,
    resources: &MethodResources,
) -> Result<ImageStack> {
    if noisy.len() < MIN_IMAGES {
        return Err(Error::Config(format!(
            "denoising needs at least {MIN_IMAGES} images, got {}",
            noisy.len()
        )));
    }
    let x = noisy.images.transpose();
    let model = match pipeline {
        Pipeline::Classical => fit_classical_pca(&x, rank)?,
        Pipeline::Heavy(name) => fit_heavy_skipping_constant(&x, &resources.method(name)?, rank, mode)?,
    };
    let xh = project_reconstruct(&x, &model)?;
    ImageStack::new(noisy.width, noisy.height, xh.transpose())
}

/// Heavy-tailed fit on the pixels with a robust spread across images.
/// Pixels where half the images or more share one value (blank background
/// in noiseless stacks) have zero robust scale; they get zero loadings and
/// their median as location.
fn fit_heavy_skipping_constant(
    x: &Matrix<f64>,
    method: &ShapeMethod<f64>,
    rank: usize,
    mode: EstimatorMode,
) -> Result<PcaModel<f64>> {
    let medians: Vec<f64> = x.rows_iter().map(median).collect();
    let spread = |i: usize| {
        let row = x.row(i);
        let at_median = row.iter().filter(|&&v| v == medians[i]).count();
        let centred: Vec<f64> = row.iter().map(|v| v - medians[i]).collect();
        2 * at_median < row.len() && marginal_scale(&centred, mode).is_ok()
    };
    let varying: Vec<usize> = (0..x.nrows()).filter(|&i| spread(i)).collect();
    if varying.len() == x.nrows() {
        return Ok(fit_heavy_pca(x, method, rank, mode)?.model);
    }
    if rank > varying.len() {
        return Err(Error::Config(format!(
            "rank {rank} exceeds the {} pixels that vary across images",
            varying.len()
        )));
    }
    let sub = fit_heavy_pca(&x.select_rows(&varying), method, rank, mode)?.model;
    let mut components = Matrix::zeros(x.nrows(), rank);
    let mut location = medians;
    for (r, &i) in varying.iter().enumerate() {
        location[i] = sub.location[r];
        for k in 0..rank {
            components[(i, k)] = sub.components[(r, k)];
        }
    }
    Ok(PcaModel {
        components,
        eigenvalues: sub.eigenvalues,
        location,
    })
}

/// `‖a - b‖_F / ‖b‖_F`.
pub fn relative_frobenius_error(a: &ImageStack, reference: &ImageStack) -> f64 {
    a.images.sub(&reference.images).frobenius_norm() / reference.images.frobenius_norm()
}

/// Per-image PSNR in dB against `reference`, peak 1.
pub fn psnr(a: &ImageStack, reference: &ImageStack) -> Vec<f64> {
    (0..a.len())
        .map(|k| {
            let mse = a
                .images
                .row(k)
                .iter()
                .zip(reference.images.row(k))
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                / a.images.ncols() as f64;
            -10.0 * mse.log10()
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct DenoiseConfig {
    pub noise: NoiseSpec,
    pub method: MethodName,
    pub rank: usize,
    pub mode: EstimatorMode,
    pub seed: u64,
}

impl DenoiseConfig {
    /// Cauchy noise with the digit-experiment variance, ratio estimator
    /// (formula C), rank 10.
    pub fn mnist_default() -> Self {
        Self {
            noise: NoiseSpec::mnist(Subordinator::cauchy()),
            method: MethodName::M1c,
            rank: 10,
            mode: EstimatorMode::default(),
            seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DenoiseOutcome {
    pub noisy: ImageStack,
    pub classical: ImageStack,
    pub heavy: ImageStack,
    pub noisy_error: f64,
    pub classical_error: f64,
    pub heavy_error: f64,
    pub psnr_noisy: Vec<f64>,
    pub psnr_classical: Vec<f64>,
    pub psnr_heavy: Vec<f64>,
}

impl DenoiseOutcome {
    /// Long-format metrics: one line per image and pipeline plus a
    /// `stack` line per pipeline with the relative Frobenius error.
    pub fn metrics_csv(&self, heavy_label: &str) -> String {
        let mut s = String::from("pipeline,image,rel_frobenius_error,psnr_db\n");
        for (label, err, psnr) in [
            ("noisy", self.noisy_error, &self.psnr_noisy),
            ("classical", self.classical_error, &self.psnr_classical),
            (heavy_label, self.heavy_error, &self.psnr_heavy),
        ] {
            let mean = psnr.iter().sum::<f64>() / psnr.len() as f64;
            let _ = writeln!(s, "{label},stack,{err},{mean}");
            for (k, v) in psnr.iter().enumerate() {
                let _ = writeln!(s, "{label},{k},,{v}");
            }
        }
        s
    }
}

/// Adds noise to `clean` and reconstructs it with classical and
/// heavy-tailed PCA.
pub fn denoise(
    clean: &ImageStack,
    cfg: &DenoiseConfig,
    resources: &MethodResources,
) -> Result<DenoiseOutcome> {
    if cfg.rank == 0 || cfg.rank > clean.images.ncols() {
        return Err(Error::Config(format!("rank must be in 1..=pixels, got {}", cfg.rank)));
    }
    let noisy = add_noise(clean, cfg.noise, RngSeed::new(cfg.seed))?;
    let classical = reconstruct(&noisy, Pipeline::Classical, cfg.rank, cfg.mode, resources)?;
    let heavy = reconstruct(&noisy, Pipeline::Heavy(cfg.method), cfg.rank, cfg.mode, resources)?;
    Ok(DenoiseOutcome {
        noisy_error: relative_frobenius_error(&noisy, clean),
        classical_error: relative_frobenius_error(&classical, clean),
        heavy_error: relative_frobenius_error(&heavy, clean),
        psnr_noisy: psnr(&noisy, clean),
        psnr_classical: psnr(&classical, clean),
        psnr_heavy: psnr(&heavy, clean),
        noisy,
        classical,
        heavy,
    })
}

/// Relative errors `(classical, heavy)` over `runs` noise draws, run `r`
/// using seed `cfg.seed + r`.
pub fn denoise_study(
    clean: &ImageStack,
    cfg: &DenoiseConfig,
    runs: usize,
    resources: &MethodResources,
) -> Result<Vec<(f64, f64)>> {
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(r as u64);
            let noisy = add_noise(clean, c.noise, RngSeed::new(c.seed))?;
            let classical = reconstruct(&noisy, Pipeline::Classical, c.rank, c.mode, resources)?;
            let heavy = reconstruct(&noisy, Pipeline::Heavy(c.method), c.rank, c.mode, resources)?;
            Ok((
                relative_frobenius_error(&classical, clean),
                relative_frobenius_error(&heavy, clean),
            ))
        })
        .collect()
}
