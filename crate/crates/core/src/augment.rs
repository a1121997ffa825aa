//! The fourteen image transforms and deficit-filling synthesis.
//!
//! Synthesis walks a fixed enumeration: every single transform over every
//! source image first, then ordered pairs of distinct transforms, then
//! ordered triples. Compositions apply left to right.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Image;
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransformKind {
    HFlip = 0,
    VFlip = 1,
    Crop = 2,
    Invert = 3,
    Solarize = 4,
    Rotate = 5,
    Jitter = 6,
    Perspective = 7,
    Sharpness = 8,
    GaussNoise = 9,
    HistEq = 10,
    Contrast = 11,
    GaussBlur = 12,
    Affine = 13,
}

pub const NUM_TRANSFORMS: usize = 14;

impl TransformKind {
    pub const ALL: [TransformKind; NUM_TRANSFORMS] = [
        TransformKind::HFlip,
        TransformKind::VFlip,
        TransformKind::Crop,
        TransformKind::Invert,
        TransformKind::Solarize,
        TransformKind::Rotate,
        TransformKind::Jitter,
        TransformKind::Perspective,
        TransformKind::Sharpness,
        TransformKind::GaussNoise,
        TransformKind::HistEq,
        TransformKind::Contrast,
        TransformKind::GaussBlur,
        TransformKind::Affine,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::HFlip => "hflip",
            TransformKind::VFlip => "vflip",
            TransformKind::Crop => "crop",
            TransformKind::Invert => "invert",
            TransformKind::Solarize => "solarize",
            TransformKind::Rotate => "rotate",
            TransformKind::Jitter => "jitter",
            TransformKind::Perspective => "perspective",
            TransformKind::Sharpness => "sharpness",
            TransformKind::GaussNoise => "gauss_noise",
            TransformKind::HistEq => "hist_eq",
            TransformKind::Contrast => "contrast",
            TransformKind::GaussBlur => "gauss_blur",
            TransformKind::Affine => "affine",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Applies `kind`, drawing any parameters from `rng`.
pub fn apply_transform(img: &Image, kind: TransformKind, rng: &mut RngStream) -> Image {
    match kind {
        TransformKind::HFlip => hflip(img),
        TransformKind::VFlip => vflip(img),
        TransformKind::Crop => {
            let fh = rng.gen_range(0.80..=0.95);
            let fw = rng.gen_range(0.80..=0.95);
            let top = rng.gen::<f64>() * (1.0 - fh);
            let left = rng.gen::<f64>() * (1.0 - fw);
            crop_resize(img, top, left, fh, fw)
        }
        TransformKind::Invert => invert(img),
        TransformKind::Solarize => solarize(img, 0.5),
        TransformKind::Rotate => rotate(img, rng.gen_range(-15.0..=15.0)),
        TransformKind::Jitter => brightness(img, rng.gen_range(0.8..=1.2)),
        TransformKind::Perspective => {
            let mut offsets = [(0.0, 0.0); 4];
            for o in &mut offsets {
                *o = (rng.gen_range(-0.1..=0.1), rng.gen_range(-0.1..=0.1));
            }
            perspective(img, offsets)
        }
        TransformKind::Sharpness => sharpen(img, rng.gen_range(0.5..=1.5)),
        TransformKind::GaussNoise => {
            let sigma = rng.gen_range(0.02..=0.08);
            gauss_noise(img, sigma, rng)
        }
        TransformKind::HistEq => hist_eq(img),
        TransformKind::Contrast => contrast(img, rng.gen_range(0.7..=1.3)),
        TransformKind::GaussBlur => gauss_blur(img, rng.gen_range(0.5..=1.0)),
        TransformKind::Affine => {
            let tx = rng.gen_range(-0.1..=0.1);
            let ty = rng.gen_range(-0.1..=0.1);
            let scale = rng.gen_range(0.9..=1.1);
            let shear = rng.gen_range(-5.0..=5.0);
            affine(img, tx, ty, scale, shear)
        }
    }
}

/// Applies `kinds` left to right.
pub fn apply_composition(img: &Image, kinds: &[TransformKind], rng: &mut RngStream) -> Image {
    kinds
        .iter()
        .fold(img.clone(), |acc, &k| apply_transform(&acc, k, rng))
}

pub fn hflip(img: &Image) -> Image {
    let w = img.width();
    Image::from_fn(img.height(), w, |r, c| img.get(r, w - 1 - c))
}

pub fn vflip(img: &Image) -> Image {
    let h = img.height();
    Image::from_fn(h, img.width(), |r, c| img.get(h - 1 - r, c))
}

pub fn invert(img: &Image) -> Image {
    img.map(|p| 1.0 - p)
}

pub fn solarize(img: &Image, threshold: f64) -> Image {
    img.map(|p| if p >= threshold { 1.0 - p } else { p })
}

pub fn brightness(img: &Image, factor: f64) -> Image {
    img.map(|p| p * factor)
}

pub fn contrast(img: &Image, factor: f64) -> Image {
    let mean = img.pixels().iter().sum::<f64>() / img.pixels().len() as f64;
    img.map(|p| mean + factor * (p - mean))
}

pub fn gauss_noise(img: &Image, sigma: f64, rng: &mut RngStream) -> Image {
    if sigma == 0.0 {
        return img.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    img.map(|p| p + normal.sample(rng))
}

/// Bilinear sample at `(y, x)` in pixel-centre coordinates; `None` outside
/// the image.
fn sample_bilinear(img: &Image, y: f64, x: f64) -> Option<f64> {
    let (h, w) = (img.height() as f64, img.width() as f64);
    if !(y >= -0.5 && y <= h - 0.5 && x >= -0.5 && x <= w - 0.5) {
        return None;
    }
    let y = y.clamp(0.0, h - 1.0);
    let x = x.clamp(0.0, w - 1.0);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let y1 = (y0 + 1).min(img.height() - 1);
    let x1 = (x0 + 1).min(img.width() - 1);
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let top = img.get(y0, x0) * (1.0 - fx) + img.get(y0, x1) * fx;
    let bottom = img.get(y1, x0) * (1.0 - fx) + img.get(y1, x1) * fx;
    Some(top * (1.0 - fy) + bottom * fy)
}

/// Inverse warp: each output pixel reads the source at `map(y, x)`,
/// filling 0 outside.
fn warp(img: &Image, map: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    Image::from_fn(img.height(), img.width(), |r, c| {
        let (sy, sx) = map(r as f64, c as f64);
        sample_bilinear(img, sy, sx).unwrap_or(0.0)
    })
}

/// Crops the window starting at fractional `(top, left)` with fractional
/// size `(fh, fw)` and resizes it back to the full shape.
pub fn crop_resize(img: &Image, top: f64, left: f64, fh: f64, fw: f64) -> Image {
    let (h, w) = (img.height() as f64, img.width() as f64);
    let (ch, cw) = (fh * h, fw * w);
    let (oy, ox) = (top * h, left * w);
    Image::from_fn(img.height(), img.width(), |r, c| {
        let y = oy + (r as f64 + 0.5) * ch / h - 0.5;
        let x = ox + (c as f64 + 0.5) * cw / w - 0.5;
        let y = y.clamp(0.0, h - 1.0);
        let x = x.clamp(0.0, w - 1.0);
        sample_bilinear(img, y, x).unwrap_or(0.0)
    })
}

fn centre(img: &Image) -> (f64, f64) {
    (
        (img.height() as f64 - 1.0) / 2.0,
        (img.width() as f64 - 1.0) / 2.0,
    )
}

pub fn rotate(img: &Image, degrees: f64) -> Image {
    let (cy, cx) = centre(img);
    let (s, c) = (degrees * PI / 180.0).sin_cos();
    warp(img, |y, x| {
        let (dy, dx) = (y - cy, x - cx);
        // rotate the output coordinate back by -angle
        (cy - s * dx + c * dy, cx + c * dx + s * dy)
    })
}

/// Translation as a fraction of each dimension, isotropic scale, shear in
/// degrees along x.
pub fn affine(img: &Image, tx: f64, ty: f64, scale: f64, shear_deg: f64) -> Image {
    let (cy, cx) = centre(img);
    let k = (shear_deg * PI / 180.0).tan();
    let (ty, tx) = (ty * img.height() as f64, tx * img.width() as f64);
    // forward: dst = A (src - c) + c + t, A = scale * [[1, k], [0, 1]] in (x, y)
    warp(img, |y, x| {
        let (u, v) = ((x - cx - tx) / scale, (y - cy - ty) / scale);
        (cy + v, cx + u - k * v)
    })
}

/// Solves the 8x8 system for the homography taking `from[i]` to `to[i]`.
fn homography(from: [(f64, f64); 4], to: [(f64, f64); 4]) -> Option<[f64; 9]> {
    let mut a = [[0.0f64; 9]; 8];
    for i in 0..4 {
        let (x, y) = from[i];
        let (u, v) = to[i];
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
    }
    for col in 0..8 {
        let pivot = (col..8).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..8 {
            if row != col {
                let f = a[row][col] / a[col][col];
                let pivot_row = a[col];
                for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * p;
                }
            }
        }
    }
    let mut h = [0.0; 9];
    for i in 0..8 {
        h[i] = a[i][8] / a[i][i];
    }
    h[8] = 1.0;
    Some(h)
}

/// Each image corner is moved by `offsets[i]` (fractions of width and
/// height, order: top-left, top-right, bottom-right, bottom-left); output
/// pixels read from the displaced quadrilateral.
pub fn perspective(img: &Image, offsets: [(f64, f64); 4]) -> Image {
    let (h, w) = (img.height() as f64 - 1.0, img.width() as f64 - 1.0);
    let corners = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
    let mut moved = corners;
    for (m, (dx, dy)) in moved.iter_mut().zip(offsets) {
        m.0 += dx * img.width() as f64;
        m.1 += dy * img.height() as f64;
    }
    let Some(hm) = homography(corners, moved) else {
        return img.clone();
    };
    warp(img, |y, x| {
        let d = hm[6] * x + hm[7] * y + hm[8];
        let u = (hm[0] * x + hm[1] * y + hm[2]) / d;
        let v = (hm[3] * x + hm[4] * y + hm[5]) / d;
        (v, u)
    })
}

/// Separable convolution with edge-clamped padding.
fn convolve_separable(img: &Image, kernel: &[f64]) -> Image {
    let radius = (kernel.len() / 2) as isize;
    let (h, w) = (img.height() as isize, img.width() as isize);
    let mut tmp = vec![0.0; img.pixels().len()];
    for r in 0..h {
        for c in 0..w {
            tmp[(r * w + c) as usize] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| {
                    let cc = (c + i as isize - radius).clamp(0, w - 1);
                    k * img.get(r as usize, cc as usize)
                })
                .sum();
        }
    }
    Image::from_fn(img.height(), img.width(), |r, c| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let rr = (r as isize + i as isize - radius).clamp(0, h - 1);
                k * tmp[(rr * w) as usize + c]
            })
            .sum()
    })
}

pub fn gauss_blur(img: &Image, sigma: f64) -> Image {
    let mut kernel: Vec<f64> = (-2..=2)
        .map(|i| (-(f64::from(i).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);
    convolve_separable(img, &kernel)
}

pub fn sharpen(img: &Image, amount: f64) -> Image {
    let blurred = convolve_separable(img, &[1.0 / 3.0; 3]);
    Image::from_fn(img.height(), img.width(), |r, c| {
        let p = img.get(r, c);
        p + amount * (p - blurred.get(r, c))
    })
}

/// 256-bin histogram equalization. Constant images come back unchanged.
pub fn hist_eq(img: &Image) -> Image {
    let bin = |p: f64| (p * 255.0).round() as usize;
    let mut hist = [0usize; 256];
    for &p in img.pixels() {
        hist[bin(p)] += 1;
    }
    let n = img.pixels().len();
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(n);
    if cdf_min == n {
        return img.clone();
    }
    let denom = (n - cdf_min) as f64;
    img.map(|p| (cdf[bin(p)] - cdf_min) as f64 / denom)
}

/// The transform sequence for composition index `j` at `depth`, counting
/// ordered tuples of distinct transforms in lexicographic order.
pub fn composition_at(depth: usize, mut j: usize) -> Vec<TransformKind> {
    let mut available: Vec<usize> = (0..NUM_TRANSFORMS).collect();
    let mut out = Vec::with_capacity(depth);
    for pos in 0..depth {
        // tuples sharing a prefix of length pos + 1
        let block: usize = (pos + 1..depth).map(|i| NUM_TRANSFORMS - i).product();
        let pick = j / block;
        j %= block;
        out.push(TransformKind::ALL[available.remove(pick)]);
    }
    out
}

pub const MAX_DEPTH: usize = 3;

/// Number of ordered tuples of distinct transforms of length `depth`.
pub fn compositions_at_depth(depth: usize) -> usize {
    (0..depth).map(|i| NUM_TRANSFORMS - i).product()
}

/// Total number of distinct outputs for a pool of `pool_len` images.
pub fn synthesis_capacity(pool_len: usize) -> usize {
    (1..=MAX_DEPTH).map(compositions_at_depth).sum::<usize>() * pool_len
}

/// One synthesized image: which source, which transforms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthesisSlot {
    pub depth: usize,
    pub source: usize,
    pub combo: Vec<TransformKind>,
}

/// The first `deficit` slots of the enumeration for a pool of `pool_len`.
pub fn synthesis_plan(pool_len: usize, deficit: usize) -> Result<Vec<SynthesisSlot>> {
    if deficit == 0 {
        return Ok(Vec::new());
    }
    if pool_len == 0 {
        return Err(Error::EmptyPool(deficit));
    }
    let capacity = synthesis_capacity(pool_len);
    if deficit > capacity {
        return Err(Error::CapacityExceeded { deficit, capacity });
    }
    let mut plan = Vec::with_capacity(deficit);
    let mut k = 0usize;
    let mut depth = 1;
    let mut depth_start = 0usize;
    while plan.len() < deficit {
        let span = compositions_at_depth(depth) * pool_len;
        if k - depth_start >= span {
            depth_start += span;
            depth += 1;
            continue;
        }
        let local = k - depth_start;
        plan.push(SynthesisSlot {
            depth,
            source: local % pool_len,
            combo: composition_at(depth, local / pool_len),
        });
        k += 1;
    }
    Ok(plan)
}

/// Per-label counts still missing to reach a target histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentPlan {
    pub deficits: Vec<usize>,
}

impl AugmentPlan {
    pub fn new(histogram: &[usize], targets: &[usize]) -> Self {
        Self {
            deficits: histogram
                .iter()
                .zip(targets)
                .map(|(&have, &want)| want.saturating_sub(have))
                .collect(),
        }
    }

    pub fn total(&self) -> usize {
        self.deficits.iter().sum()
    }
}

/// Exactly `deficit` transformed images drawn from `pool`.
pub fn synthesize(pool: &[Image], deficit: usize, rng: &mut RngStream) -> Result<Vec<Image>> {
    let plan = synthesis_plan(pool.len(), deficit)?;
    Ok(plan
        .iter()
        .map(|slot| apply_composition(&pool[slot.source], &slot.combo, rng))
        .collect())
}

/// Plain-text portable graymap (P2, maxval 255).
pub fn to_pgm(img: &Image) -> String {
    let mut out = format!("P2\n{} {}\n255\n", img.width(), img.height());
    for r in 0..img.height() {
        let row: Vec<String> = (0..img.width())
            .map(|c| ((img.get(r, c) * 255.0).round() as u8).to_string())
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Purpose;

    fn rng(seed: u64) -> RngStream {
        RngStream::new(seed, Purpose::Test)
    }

    fn ramp(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, |r, c| (r * w + c) as f64 / (h * w) as f64)
    }

    #[test]
    fn catalog_has_fourteen_stable_indices() {
        assert_eq!(TransformKind::ALL.len(), 14);
        for (i, k) in TransformKind::ALL.iter().enumerate() {
            assert_eq!(k.index(), i);
            assert_eq!(TransformKind::from_index(i), Some(*k));
        }
        assert_eq!(TransformKind::from_index(14), None);
    }

    #[test]
    fn invert_pixel() {
        let img = Image::filled(1, 1, 0.2).unwrap();
        assert!((invert(&img).pixels()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn hflip_two_by_two() {
        let img = Image::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(hflip(&img).pixels(), &[0.2, 0.1, 0.4, 0.3]);
        assert_eq!(vflip(&img).pixels(), &[0.3, 0.4, 0.1, 0.2]);
    }

    #[test]
    fn hist_eq_constant_image_unchanged() {
        let img = Image::filled(4, 4, 0.37).unwrap();
        assert_eq!(hist_eq(&img), img);
    }

    #[test]
    fn hist_eq_spreads_two_levels() {
        let img = Image::new(1, 4, vec![0.4, 0.4, 0.6, 0.6]).unwrap();
        assert_eq!(hist_eq(&img).pixels(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_sigma_noise_is_identity() {
        let img = ramp(5, 5);
        assert_eq!(gauss_noise(&img, 0.0, &mut rng(1)), img);
    }

    #[test]
    fn solarize_threshold() {
        let img = Image::new(1, 3, vec![0.2, 0.5, 0.9]).unwrap();
        let out = solarize(&img, 0.5);
        assert_eq!(out.pixels()[0], 0.2);
        assert_eq!(out.pixels()[1], 0.5);
        assert!((out.pixels()[2] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_angle_and_identity_affine_preserve_image() {
        let img = ramp(6, 7);
        let close = |a: &Image, b: &Image| {
            a.pixels()
                .iter()
                .zip(b.pixels())
                .all(|(x, y)| (x - y).abs() < 1e-12)
        };
        assert!(close(&rotate(&img, 0.0), &img));
        assert!(close(&affine(&img, 0.0, 0.0, 1.0, 0.0), &img));
        assert!(close(&perspective(&img, [(0.0, 0.0); 4]), &img));
        assert!(close(&crop_resize(&img, 0.0, 0.0, 1.0, 1.0), &img));
    }

    #[test]
    fn rotate_quarter_turn_moves_pixels() {
        // 90 degrees on a square image is an exact permutation
        let img = ramp(5, 5);
        let out = rotate(&img, 90.0);
        for r in 0..5 {
            for c in 0..5 {
                assert!((out.get(r, c) - img.get(4 - c, r)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn blur_preserves_constant_and_sharpen_too() {
        let img = Image::filled(5, 5, 0.6).unwrap();
        for p in gauss_blur(&img, 0.8).pixels() {
            assert!((p - 0.6).abs() < 1e-12);
        }
        for p in sharpen(&img, 1.2).pixels() {
            assert!((p - 0.6).abs() < 1e-12);
        }
    }

    #[test]
    fn contrast_keeps_mean_when_unclamped() {
        let img = Image::new(1, 4, vec![0.4, 0.5, 0.5, 0.6]).unwrap();
        let out = contrast(&img, 1.3);
        let mean: f64 = out.pixels().iter().sum::<f64>() / 4.0;
        assert!((mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn every_transform_keeps_shape_and_range() {
        let img = ramp(7, 9);
        for kind in TransformKind::ALL {
            let out = apply_transform(&img, kind, &mut rng(kind.index() as u64));
            assert_eq!(out.shape(), img.shape(), "{kind}");
            assert!(
                out.pixels().iter().all(|p| (0.0..=1.0).contains(p)),
                "{kind}"
            );
        }
    }

    #[test]
    fn one_by_one_images_are_handled() {
        let img = Image::filled(1, 1, 0.3).unwrap();
        for kind in TransformKind::ALL {
            let out = apply_transform(&img, kind, &mut rng(2));
            assert_eq!(out.shape(), (1, 1), "{kind}");
        }
    }

    #[test]
    fn composition_order_lexicographic() {
        use TransformKind::*;
        assert_eq!(composition_at(1, 13), vec![Affine]);
        assert_eq!(composition_at(2, 0), vec![HFlip, VFlip]);
        assert_eq!(composition_at(2, 13), vec![VFlip, HFlip]);
        assert_eq!(composition_at(3, 0), vec![HFlip, VFlip, Crop]);
        assert_eq!(composition_at(3, 2183), vec![Affine, GaussBlur, Contrast]);
        assert_eq!(compositions_at_depth(2), 182);
        assert_eq!(synthesis_capacity(2), 2 * (14 + 182 + 2184));
    }

    #[test]
    fn plan_small_pool() {
        use TransformKind::*;
        let plan = synthesis_plan(3, 5).unwrap();
        let got: Vec<(usize, Vec<TransformKind>)> =
            plan.into_iter().map(|s| (s.source, s.combo)).collect();
        assert_eq!(
            got,
            vec![
                (0, vec![HFlip]),
                (1, vec![HFlip]),
                (2, vec![HFlip]),
                (0, vec![VFlip]),
                (1, vec![VFlip]),
            ]
        );
    }

    #[test]
    fn plan_capacity_boundary() {
        let plan = synthesis_plan(1, 14).unwrap();
        assert!(plan.iter().all(|s| s.depth == 1));
        let combos: Vec<_> = plan.iter().map(|s| s.combo[0]).collect();
        assert_eq!(combos, TransformKind::ALL.to_vec());
        let plan = synthesis_plan(1, 15).unwrap();
        assert_eq!(plan[14].depth, 2);
        assert_eq!(
            plan[14].combo,
            vec![TransformKind::HFlip, TransformKind::VFlip]
        );
    }

    #[test]
    fn synthesize_errors() {
        assert!(matches!(
            synthesize(&[], 3, &mut rng(0)),
            Err(Error::EmptyPool(3))
        ));
        assert!(synthesize(&[], 0, &mut rng(0)).unwrap().is_empty());
        let pool = vec![ramp(3, 3)];
        let cap = synthesis_capacity(1);
        assert!(matches!(
            synthesis_plan(1, cap + 1),
            Err(Error::CapacityExceeded { .. })
        ));
        assert_eq!(synthesis_plan(1, cap).unwrap().len(), cap);
        assert_eq!(synthesize(&pool, 40, &mut rng(0)).unwrap().len(), 40);
    }

    #[test]
    fn synthesize_matches_manual_application() {
        let pool = vec![ramp(4, 4), ramp(4, 4).map(|p| 1.0 - p)];
        let out = synthesize(&pool, 5, &mut rng(3)).unwrap();
        assert_eq!(out[0], hflip(&pool[0]));
        assert_eq!(out[1], hflip(&pool[1]));
        assert_eq!(out[2], vflip(&pool[0]));
        assert_eq!(out[3], vflip(&pool[1]));
        let again = synthesize(&pool, 5, &mut rng(3)).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn pgm_dump() {
        let img = Image::new(1, 2, vec![0.0, 1.0]).unwrap();
        assert_eq!(to_pgm(&img), "P2\n2 1\n255\n0 255\n");
    }
}
