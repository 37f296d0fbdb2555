//! Image inpainting: every RGB channel is completed as its own matrix.
//!
//! Each channel is centred on the mean of its observed pixels before solving
//! and shifted back afterwards. Recovered pixels are clamped to `[0, 255]`
//! and rounded; observed pixels are copied from the input unchanged.

use std::path::Path;

use image::{ColorType, ImageReader, Rgb, RgbImage};
use rankmin::{
    ista_solve, istra_solve, psnr_channels, DenseMatrix, IstraStart, MaskedQuadraticLoss, ObservationSet, PenaltySpec,
    SolverConfig,
};

use crate::{CliResult, Failure};

/// Penalty and settings applied to every channel.
#[derive(Clone, Debug)]
pub struct ChannelSolver {
    pub penalty: PenaltySpec,
    pub config: SolverConfig,
    /// Nuclear-norm warm start for Schatten penalties.
    pub warm_lambda: Option<f64>,
}

fn open(path: &Path) -> CliResult<image::DynamicImage> {
    ImageReader::open(path)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?
        .with_guessed_format()
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?
        .decode()
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

/// Reads an 8-bit RGB image. Other colour types are rejected rather than converted.
pub fn load_rgb(path: &Path) -> CliResult<RgbImage> {
    let img = open(path)?;
    if img.color() != ColorType::Rgb8 {
        return Err(Failure::config(format!(
            "{}: expected an 8-bit RGB image, found {:?}",
            path.display(),
            img.color()
        )));
    }
    Ok(img.into_rgb8())
}

pub fn save_rgb(img: &RgbImage, path: &Path) -> CliResult<()> {
    img.save(path)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

/// Missing-pixel map from a mask image: any nonzero channel marks a pixel as missing.
pub fn mask_from_image(path: &Path, width: u32, height: u32) -> CliResult<Vec<bool>> {
    let mask = open(path)?.into_rgba16();
    if mask.dimensions() != (width, height) {
        return Err(Failure::config(format!(
            "{}: mask is {}x{}, image is {width}x{height}",
            path.display(),
            mask.width(),
            mask.height()
        )));
    }
    Ok(mask.pixels().map(|p| p.0[..3].iter().any(|&c| c != 0)).collect())
}

/// Keeps `round(ratio · pixels)` pixels chosen uniformly at random.
pub fn random_missing(width: u32, height: u32, ratio: f64, seed: u64) -> CliResult<Vec<bool>> {
    let (rows, cols) = (height as usize, width as usize);
    let mut missing = vec![true; rows * cols];
    for (i, j) in rankmin::synth::random_mask(rows, cols, ratio, seed)? {
        missing[i * cols + j] = false;
    }
    Ok(missing)
}

pub fn channel(img: &RgbImage, c: usize) -> DenseMatrix {
    DenseMatrix::from_fn(img.height() as usize, img.width() as usize, |i, j| {
        img.get_pixel(j as u32, i as u32).0[c] as f64
    })
}

/// Gray RGB image from a matrix of pixel values, clamped and rounded.
pub fn gray_image(m: &DenseMatrix) -> RgbImage {
    RgbImage::from_fn(m.cols() as u32, m.rows() as u32, |x, y| {
        let v = to_byte(m.get(y as usize, x as usize));
        Rgb([v, v, v])
    })
}

fn to_byte(v: f64) -> u8 {
    v.clamp(0.0, 255.0).round() as u8
}

fn solve_channel(values: &DenseMatrix, missing: &[bool], solver: &ChannelSolver) -> CliResult<DenseMatrix> {
    let (rows, cols) = values.shape();
    let mut entries = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if !missing[i * cols + j] {
                entries.push((i, j, values.get(i, j)));
            }
        }
    }
    if entries.is_empty() {
        return Err(Failure::config("every pixel is missing"));
    }
    let mean = entries.iter().map(|e| e.2).sum::<f64>() / entries.len() as f64;
    for e in &mut entries {
        e.2 -= mean;
    }
    let loss = MaskedQuadraticLoss::new(ObservationSet::new(rows, cols, entries)?);
    let x = if solver.penalty.is_reweighted() {
        let (p, eps) = solver.penalty.schatten_params()?;
        let start = match solver.warm_lambda {
            Some(lambda) => IstraStart::nuclear(lambda),
            None => IstraStart::Matrix(loss.observations().observed_matrix()),
        };
        istra_solve(&loss, p, eps, &solver.config, start)?.x
    } else {
        ista_solve(&loss, &solver.penalty, &solver.config, None)?.x
    };
    Ok(DenseMatrix::from_fn(rows, cols, |i, j| x.get(i, j) + mean))
}

/// Completes the pixels flagged in `missing` (row-major, one flag per pixel).
pub fn inpaint(img: &RgbImage, missing: &[bool], solver: &ChannelSolver) -> CliResult<RgbImage> {
    let (width, height) = img.dimensions();
    if missing.len() != (width * height) as usize {
        return Err(Failure::config("mask size does not match the image"));
    }
    if !missing.contains(&true) {
        return Ok(img.clone());
    }
    let channels: Vec<DenseMatrix> = (0..3).map(|c| channel(img, c)).collect();
    let solved: Vec<CliResult<DenseMatrix>> = std::thread::scope(|s| {
        let handles: Vec<_> = channels
            .iter()
            .map(|ch| s.spawn(move || solve_channel(ch, missing, solver)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Failure::solver("channel solver panicked"))))
            .collect()
    });
    let solved = solved.into_iter().collect::<CliResult<Vec<_>>>()?;
    let cols = width as usize;
    Ok(RgbImage::from_fn(width, height, |x, y| {
        let k = y as usize * cols + x as usize;
        if !missing[k] {
            return *img.get_pixel(x, y);
        }
        Rgb([0, 1, 2].map(|c| to_byte(solved[c].get(y as usize, x as usize))))
    }))
}

/// PSNR over all three channels.
pub fn image_psnr(recovered: &RgbImage, reference: &RgbImage) -> CliResult<f64> {
    if recovered.dimensions() != reference.dimensions() {
        return Err(Failure::config("reference image size differs from the output"));
    }
    let a: Vec<DenseMatrix> = (0..3).map(|c| channel(recovered, c)).collect();
    let b: Vec<DenseMatrix> = (0..3).map(|c| channel(reference, c)).collect();
    Ok(psnr_channels(&a, &b)?)
}
