//! Images, labeled datasets, the synthetic generator, stratified splitting
//! and the `FBDS` dataset file format.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

/// A single-channel image with pixels in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Image {
    /// Builds an image, clamping every pixel into `[0, 1]`.
    pub fn new(height: usize, width: usize, mut pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return invalid(format!("image shape {height}x{width} has a zero dimension"));
        }
        if pixels.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        for p in &mut pixels {
            *p = clamp_unit(*p);
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Same shape, pixels produced by `f(row, col)` and clamped.
    pub(crate) fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(clamp_unit(f(r, c)));
            }
        }
        Self {
            height,
            width,
            pixels,
        }
    }

    pub(crate) fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|&p| clamp_unit(f(p))).collect(),
        }
    }

    /// Pixels rounded to the 256 levels the file format can store.
    pub fn quantized(&self) -> Self {
        self.map(|p| f64::from(to_byte(p)) / 255.0)
    }
}

#[inline]
pub(crate) fn clamp_unit(p: f64) -> f64 {
    if p.is_nan() {
        0.0
    } else {
        p.clamp(0.0, 1.0)
    }
}

#[inline]
fn to_byte(p: f64) -> u8 {
    (clamp_unit(p) * 255.0).round() as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub image: Image,
    pub label: usize,
}

/// An ordered collection of labeled images sharing one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    num_classes: usize,
    image_shape: (usize, usize),
    examples: Vec<LabeledExample>,
}

impl LabeledDataset {
    pub fn new(
        num_classes: usize,
        image_shape: (usize, usize),
        examples: Vec<LabeledExample>,
    ) -> Result<Self> {
        if num_classes == 0 {
            return invalid("a dataset needs at least one class");
        }
        if image_shape.0 == 0 || image_shape.1 == 0 {
            return invalid(format!(
                "image shape {}x{} has a zero dimension",
                image_shape.0, image_shape.1
            ));
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: ex.label,
                    num_classes,
                });
            }
            if ex.image.shape() != image_shape {
                return Err(Error::ShapeMismatch(format!(
                    "example {i} is {:?}, dataset is {:?}",
                    ex.image.shape(),
                    image_shape
                )));
            }
        }
        Ok(Self {
            num_classes,
            image_shape,
            examples,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image_shape(&self) -> (usize, usize) {
        self.image_shape
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn into_examples(self) -> Vec<LabeledExample> {
        self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn histogram(&self) -> Vec<usize> {
        label_histogram(&self.examples, self.num_classes)
    }

    /// Dataset made of the examples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            num_classes: self.num_classes,
            image_shape: self.image_shape,
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }
}

pub fn label_histogram(examples: &[LabeledExample], num_classes: usize) -> Vec<usize> {
    let mut hist = vec![0; num_classes];
    for ex in examples {
        hist[ex.label] += 1;
    }
    hist
}

/// Template intensity off the pattern.
pub const TEMPLATE_BACKGROUND: f64 = 0.1;
/// Pattern intensity above background. Faint on purpose: at noise 0.1 a
/// linear model tops out in the 80-90% range, where label skew visibly
/// hurts instead of every run saturating at 100%.
pub const TEMPLATE_CONTRAST: f64 = 0.05;

const BACKGROUND: f64 = TEMPLATE_BACKGROUND;
const FOREGROUND: f64 = TEMPLATE_BACKGROUND + TEMPLATE_CONTRAST;

/// The noiseless pattern for `class`. Every template is symmetric under
/// horizontal and vertical flips, so flipped copies keep their label.
pub fn class_template(class: usize, height: usize, width: usize) -> Result<Image> {
    if height == 0 || width == 0 {
        return invalid(format!("image shape {height}x{width} has a zero dimension"));
    }
    // distances from the centre line, in units of the half-extent
    let rel = |i: usize, n: usize| -> f64 {
        if n == 1 {
            0.0
        } else {
            ((i as f64 + 0.5) - n as f64 / 2.0).abs() / (n as f64 / 2.0)
        }
    };
    let on = |b: bool| if b { FOREGROUND } else { BACKGROUND };
    let img = match class {
        0 => Image::from_fn(height, width, |r, _| on(rel(r, height) <= 0.25)),
        1 => Image::from_fn(height, width, |_, c| on(rel(c, width) <= 0.25)),
        2 => Image::from_fn(height, width, |r, c| {
            let d2 = rel(r, height).powi(2) + rel(c, width).powi(2);
            BACKGROUND + (FOREGROUND - BACKGROUND) * (-d2 / (2.0 * 0.3f64.powi(2))).exp()
        }),
        3 => Image::from_fn(height, width, |r, c| {
            on(rel(r, height) >= 0.75 || rel(c, width) >= 0.75)
        }),
        4 => Image::from_fn(height, width, |r, c| {
            on(rel(r, height) <= 0.15 || rel(c, width) <= 0.15)
        }),
        5 => Image::from_fn(height, width, |r, c| {
            on((rel(r, height) - rel(c, width)).abs() <= 0.15)
        }),
        6 => Image::from_fn(height, width, |r, c| {
            let (dr, dc) = (rel(r, height) - 0.6, rel(c, width) - 0.6);
            on(dr * dr + dc * dc <= 0.09)
        }),
        7 => Image::from_fn(height, width, |r, c| {
            let d = (rel(r, height).powi(2) + rel(c, width).powi(2)).sqrt();
            on((d - 0.55).abs() <= 0.15)
        }),
        _ => {
            // hashed 4x4 quadrant pattern, mirrored into all four quadrants
            let mut state = class as u64 ^ 0xA5A5_5A5A_0F0F_F0F0;
            let cells: Vec<bool> = (0..16)
                .map(|_| {
                    state = state
                        .wrapping_mul(6_364_136_223_846_793_005)
                        .wrapping_add(1_442_695_040_888_963_407);
                    (state >> 33) & 1 == 1
                })
                .collect();
            Image::from_fn(height, width, |r, c| {
                let cr = ((rel(r, height) * 4.0) as usize).min(3);
                let cc = ((rel(c, width) * 4.0) as usize).min(3);
                on(cells[cr * 4 + cc])
            })
        }
    };
    Ok(img)
}

/// `num_classes * per_class` examples: class templates plus clamped
/// Gaussian pixel noise. Examples are ordered by class.
pub fn generate_synthetic(
    num_classes: usize,
    per_class: usize,
    image_shape: (usize, usize),
    noise_sigma: f64,
    rng: &mut RngStream,
) -> Result<LabeledDataset> {
    if num_classes < 2 {
        return invalid("synthetic data needs at least two classes");
    }
    if per_class == 0 {
        return invalid("per_class must be at least 1");
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return invalid(format!("noise sigma {noise_sigma} must be finite and >= 0"));
    }
    let (h, w) = image_shape;
    let noise = Normal::new(0.0, noise_sigma)
        .map_err(|e| Error::InvalidArgument(format!("noise sigma: {e}")))?;
    let mut examples = Vec::with_capacity(num_classes * per_class);
    for class in 0..num_classes {
        let template = class_template(class, h, w)?;
        for _ in 0..per_class {
            let image = if noise_sigma == 0.0 {
                template.clone()
            } else {
                template.map(|p| p + noise.sample(rng))
            };
            examples.push(LabeledExample {
                image,
                label: class,
            });
        }
    }
    LabeledDataset::new(num_classes, image_shape, examples)
}

/// Stratified split. For each label, `floor(test_fraction * count)` randomly
/// chosen examples go to the test set; both outputs keep input order.
pub fn split_train_test(
    ds: &LabeledDataset,
    test_fraction: f64,
    rng: &mut RngStream,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return invalid(format!("test fraction {test_fraction} must be in (0, 1)"));
    }
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes()];
    for (i, ex) in ds.examples().iter().enumerate() {
        by_label[ex.label].push(i);
    }
    let mut is_test = vec![false; ds.len()];
    for (label, indices) in by_label.iter_mut().enumerate() {
        if indices.is_empty() {
            return Err(Error::EmptyClass(label));
        }
        let n_test = (test_fraction * indices.len() as f64).floor() as usize;
        indices.shuffle(rng);
        for &i in &indices[..n_test] {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| is_test[i]);
    Ok((ds.select(&train), ds.select(&test)))
}

const DATASET_MAGIC: &[u8; 4] = b"FBDS";
const DATASET_VERSION: u16 = 1;
const DATASET_HEADER_LEN: usize = 4 + 2 + 2 + 2 + 2 + 4;

pub fn encode_dataset(ds: &LabeledDataset) -> Result<Vec<u8>> {
    let (h, w) = ds.image_shape();
    let as_u16 = |v: usize, what: &str| {
        u16::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} exceeds u16")))
    };
    let count = u32::try_from(ds.len())
        .map_err(|_| Error::InvalidArgument(format!("{} examples exceed u32", ds.len())))?;
    let mut out = Vec::with_capacity(DATASET_HEADER_LEN + ds.len() * (2 + h * w));
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&as_u16(ds.num_classes(), "num_classes")?.to_le_bytes());
    out.extend_from_slice(&as_u16(h, "height")?.to_le_bytes());
    out.extend_from_slice(&as_u16(w, "width")?.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for ex in ds.examples() {
        out.extend_from_slice(&(ex.label as u16).to_le_bytes());
        out.extend(ex.image.pixels().iter().map(|&p| to_byte(p)));
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<LabeledDataset> {
    if bytes.len() < DATASET_HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "{} bytes, header needs {DATASET_HEADER_LEN}",
            bytes.len()
        )));
    }
    if &bytes[..4] != DATASET_MAGIC {
        return Err(Error::MalformedHeader("bad magic, expected FBDS".into()));
    }
    let u16_at = |off: usize| u16::from_le_bytes([bytes[off], bytes[off + 1]]);
    let version = u16_at(4);
    if version != DATASET_VERSION {
        return Err(Error::MalformedHeader(format!(
            "unsupported version {version}"
        )));
    }
    let num_classes = usize::from(u16_at(6));
    let h = usize::from(u16_at(8));
    let w = usize::from(u16_at(10));
    let count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if num_classes == 0 || h == 0 || w == 0 {
        return Err(Error::MalformedHeader(format!(
            "num_classes={num_classes} height={h} width={w}"
        )));
    }
    let record = 2 + h * w;
    let expected = DATASET_HEADER_LEN + count * record;
    if bytes.len() < expected {
        return Err(Error::Truncated(format!(
            "expected {expected} bytes for {count} examples, found {}",
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(Error::MalformedHeader(format!(
            "{} trailing bytes after {count} examples",
            bytes.len() - expected
        )));
    }
    let mut examples = Vec::with_capacity(count);
    for rec in bytes[DATASET_HEADER_LEN..].chunks_exact(record) {
        let label = usize::from(u16::from_le_bytes([rec[0], rec[1]]));
        if label >= num_classes {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        let pixels = rec[2..].iter().map(|&b| f64::from(b) / 255.0).collect();
        examples.push(LabeledExample {
            image: Image::new(h, w, pixels)?,
            label,
        });
    }
    LabeledDataset::new(num_classes, (h, w), examples)
}

pub fn save_dataset(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_dataset(ds)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_dataset(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Purpose;
    use proptest::prelude::*;

    fn rng(seed: u64) -> RngStream {
        RngStream::new(seed, Purpose::Test)
    }

    #[test]
    fn image_rejects_zero_dims_and_bad_length() {
        assert!(Image::new(0, 3, vec![]).is_err());
        assert!(matches!(
            Image::new(2, 2, vec![0.0; 3]),
            Err(Error::ShapeMismatch(_))
        ));
        let img = Image::new(1, 2, vec![-1.0, 2.0]).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0]);
    }

    #[test]
    fn synthetic_counts() {
        let ds = generate_synthetic(4, 100, (16, 16), 0.1, &mut rng(7)).unwrap();
        assert_eq!(ds.len(), 400);
        assert_eq!(ds.histogram(), vec![100, 100, 100, 100]);
        assert!(ds.examples().iter().all(|e| e
            .image
            .pixels()
            .iter()
            .all(|p| (0.0..=1.0).contains(p))));
    }

    #[test]
    fn zero_noise_gives_templates() {
        let ds = generate_synthetic(2, 1, (8, 8), 0.0, &mut rng(1)).unwrap();
        assert_eq!(ds.examples()[0].image, class_template(0, 8, 8).unwrap());
        assert_eq!(ds.examples()[1].image, class_template(1, 8, 8).unwrap());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = generate_synthetic(3, 5, (6, 5), 0.2, &mut rng(9)).unwrap();
        let b = generate_synthetic(3, 5, (6, 5), 0.2, &mut rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synthetic_rejects_bad_arguments() {
        assert!(generate_synthetic(1, 5, (4, 4), 0.1, &mut rng(0)).is_err());
        assert!(generate_synthetic(2, 0, (4, 4), 0.1, &mut rng(0)).is_err());
        assert!(generate_synthetic(2, 1, (0, 4), 0.1, &mut rng(0)).is_err());
        assert!(generate_synthetic(2, 1, (4, 4), -0.1, &mut rng(0)).is_err());
    }

    #[test]
    fn templates_are_distinct_and_flip_symmetric() {
        let (h, w) = (16, 16);
        let ts: Vec<Image> = (0..12).map(|c| class_template(c, h, w).unwrap()).collect();
        for (i, a) in ts.iter().enumerate() {
            for b in &ts[i + 1..] {
                assert_ne!(a, b);
            }
            let hflip = Image::from_fn(h, w, |r, c| a.get(r, w - 1 - c));
            let vflip = Image::from_fn(h, w, |r, c| a.get(h - 1 - r, c));
            assert_eq!(&hflip, a);
            assert_eq!(&vflip, a);
        }
    }

    #[test]
    fn stratified_split_sizes() {
        let ds = generate_synthetic(4, 100, (4, 4), 0.1, &mut rng(3)).unwrap();
        let (train, test) = split_train_test(&ds, 0.1, &mut rng(4)).unwrap();
        assert_eq!(test.len(), 40);
        assert_eq!(train.len(), 360);
        assert_eq!(test.histogram(), vec![10; 4]);
        let (train2, test2) = split_train_test(&ds, 0.1, &mut rng(4)).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn cxr_corpus_test_size() {
        // per-label sizes of the chest X-ray corpus: covid, pneumonia, opacity, normal
        let counts = [5_429usize, 5_618, 6_011, 11_775];
        let total: usize = counts.iter().sum();
        assert_eq!(total, 28_833);
        // an unstratified 10% cut, rounded up, gives the published 2884
        assert_eq!((0.1 * total as f64).ceil() as usize, 2_884);
        // stratified floor-rounding loses one example per label to train
        let test: usize = counts
            .iter()
            .map(|&n| (0.1 * n as f64).floor() as usize)
            .sum();
        assert_eq!(test, 2_881);
    }

    #[test]
    fn split_rejects_empty_class_and_bad_fraction() {
        let ex = |label| LabeledExample {
            image: Image::filled(2, 2, 0.5).unwrap(),
            label,
        };
        let ds = LabeledDataset::new(3, (2, 2), vec![ex(0), ex(1), ex(0)]).unwrap();
        assert!(matches!(
            split_train_test(&ds, 0.5, &mut rng(0)),
            Err(Error::EmptyClass(2))
        ));
        assert!(split_train_test(&ds, 0.0, &mut rng(0)).is_err());
        assert!(split_train_test(&ds, 1.0, &mut rng(0)).is_err());
    }

    #[test]
    fn label_out_of_range_on_load() {
        let ds = generate_synthetic(2, 1, (2, 2), 0.0, &mut rng(0)).unwrap();
        let mut bytes = encode_dataset(&ds).unwrap();
        // label of the second record
        let off = DATASET_HEADER_LEN + (2 + 4);
        bytes[off..off + 2].copy_from_slice(&2u16.to_le_bytes());
        assert!(matches!(
            decode_dataset(&bytes),
            Err(Error::LabelOutOfRange {
                label: 2,
                num_classes: 2
            })
        ));
    }

    #[test]
    fn malformed_and_truncated_files() {
        let ds = generate_synthetic(2, 2, (2, 2), 0.0, &mut rng(0)).unwrap();
        let bytes = encode_dataset(&ds).unwrap();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            decode_dataset(&bad_magic),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_dataset(&bytes[..10]),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_dataset(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated(_))
        ));
    }

    #[test]
    fn empty_dataset_round_trips() {
        let ds = LabeledDataset::new(3, (5, 4), vec![]).unwrap();
        let back = decode_dataset(&encode_dataset(&ds).unwrap()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.fbds");
        let ds = generate_synthetic(3, 4, (5, 7), 0.0, &mut rng(2)).unwrap();
        let quantized = LabeledDataset::new(
            3,
            (5, 7),
            ds.examples()
                .iter()
                .map(|e| LabeledExample {
                    image: e.image.quantized(),
                    label: e.label,
                })
                .collect(),
        )
        .unwrap();
        save_dataset(&quantized, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), quantized);
    }

    proptest! {
        #[test]
        fn quantized_round_trip_is_bit_exact(
            h in 1usize..6, w in 1usize..6, c in 1usize..5,
            raw in prop::collection::vec((0usize..5, prop::collection::vec(0u8..=255, 36)), 0..8)
        ) {
            let examples: Vec<LabeledExample> = raw.into_iter().map(|(l, px)| LabeledExample {
                image: Image::new(h, w, px[..h * w].iter().map(|&b| f64::from(b) / 255.0).collect()).unwrap(),
                label: l % c,
            }).collect();
            let ds = LabeledDataset::new(c, (h, w), examples).unwrap();
            let back = decode_dataset(&encode_dataset(&ds).unwrap()).unwrap();
            prop_assert_eq!(back.histogram().iter().sum::<usize>(), ds.len());
            prop_assert_eq!(back, ds);
        }
    }
}
