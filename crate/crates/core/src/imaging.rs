//! Images, patch grids, baselines, and the two ways of mixing an image with
//! its baseline: by patch subset and by attribution rank.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use image::imageops::FilterType;
use image::DynamicImage;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::saliency::AttributionMap;

/// Largest number of patches a [`PatchSet`] can address.
pub const MAX_PATCHES: usize = 64;

/// Default blur sigma in pixels, tuned for 224x224 inputs.
pub const DEFAULT_BLUR_SIGMA: f64 = 10.0;

/// A planar (channel, row, column) image with values in `[0, 1]`.
#[derive(Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl fmt::Debug for ImageTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImageTensor")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!("zero dimension {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!("{channels} channels (expected 1 or 3)")));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidImage(format!(
                "{} values for a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::InvalidImage(format!("value {} at index {i} outside [0, 1]", data[i])));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn zeros_like(other: &ImageTensor) -> Self {
        Self {
            data: vec![0.0; other.data.len()],
            ..*other
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    /// Raw planar values, channel-major.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> f32 {
        self.data[(channel * self.height + y) * self.width + x]
    }

    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    fn check_shape(&self, other: &ImageTensor, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.channels, self.height, self.width, other.channels, other.height, other.width
            )))
        }
    }

    /// True when any channel of pixel `p` (row-major index) differs between the two images.
    pub(crate) fn pixel_differs(&self, other: &ImageTensor, p: usize) -> bool {
        let plane = self.pixel_count();
        (0..self.channels).any(|c| self.data[c * plane + p] != other.data[c * plane + p])
    }

    /// Stable 64-bit content digest over shape and exact value bits.
    pub fn content_hash(&self) -> u64 {
        let mut hasher = Sha256::new();
        for dim in [self.height, self.width, self.channels] {
            hasher.update((dim as u64).to_le_bytes());
        }
        hasher.update(self.to_le_bytes());
        let digest = hasher.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(head)
    }

    /// Little-endian float32 bytes in CHW order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_dynamic(img: &DynamicImage) -> Result<Self> {
        let (width, height) = (img.width() as usize, img.height() as usize);
        let grey = matches!(
            img,
            DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_)
        );
        if grey {
            let luma = img.to_luma32f();
            Self::new(height, width, 1, luma.into_raw())
        } else {
            let rgb = img.to_rgb32f();
            let plane = height * width;
            let mut data = vec![0.0f32; plane * 3];
            for (i, px) in rgb.pixels().enumerate() {
                for c in 0..3 {
                    data[c * plane + i] = px.0[c].clamp(0.0, 1.0);
                }
            }
            Self::new(height, width, 3, data)
        }
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let plane = self.pixel_count();
        let to_u8 = |v: f32| (v * 255.0).round().clamp(0.0, 255.0) as u8;
        if self.channels == 1 {
            let buf = self.data.iter().map(|v| to_u8(*v)).collect();
            DynamicImage::ImageLuma8(
                image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
                    .expect("buffer sized from shape"),
            )
        } else {
            let mut buf = Vec::with_capacity(plane * 3);
            for p in 0..plane {
                for c in 0..3 {
                    buf.push(to_u8(self.data[c * plane + p]));
                }
            }
            DynamicImage::ImageRgb8(
                image::RgbImage::from_raw(self.width as u32, self.height as u32, buf)
                    .expect("buffer sized from shape"),
            )
        }
    }
}

/// Decodes a PNG or JPEG file and resizes it (bilinear) to `size`x`size`.
pub fn load_image(path: &Path, size: usize) -> Result<ImageTensor> {
    let img = image::open(path)?;
    let img = if img.width() as usize == size && img.height() as usize == size {
        img
    } else {
        img.resize_exact(size as u32, size as u32, FilterType::Triangle)
    };
    ImageTensor::from_dynamic(&img)
}

/// Pixel rectangle covered by one patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchRect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// A rows x cols partition of an image into patches.
///
/// Patches split the image evenly; leftover pixels go to the last row and
/// last column of patches. Patch `i` sits at row `i / cols`, column `i % cols`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    rows: usize,
    cols: usize,
    image_height: usize,
    image_width: usize,
}

pub fn make_grid(image_height: usize, image_width: usize, rows: usize, cols: usize) -> Result<GridSpec> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidGrid(format!("{rows}x{cols} has no patches")));
    }
    if rows * cols > MAX_PATCHES {
        return Err(Error::GridCapacity { rows, cols });
    }
    if image_height == 0 || image_width == 0 {
        return Err(Error::InvalidGrid(format!("zero image size {image_height}x{image_width}")));
    }
    if image_height < rows || image_width < cols {
        return Err(Error::InvalidGrid(format!(
            "{image_height}x{image_width} image cannot hold {rows}x{cols} patches"
        )));
    }
    Ok(GridSpec {
        rows,
        cols,
        image_height,
        image_width,
    })
}

fn split_span(total: usize, parts: usize, index: usize) -> (usize, usize) {
    let base = total / parts;
    let start = index * base;
    let len = if index + 1 == parts { total - start } else { base };
    (start, len)
}

impl GridSpec {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn image_height(&self) -> usize {
        self.image_height
    }

    pub fn image_width(&self) -> usize {
        self.image_width
    }

    pub fn patch_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn patch_rect(&self, index: usize) -> PatchRect {
        assert!(index < self.patch_count(), "patch {index} out of range");
        let (top, height) = split_span(self.image_height, self.rows, index / self.cols);
        let (left, width) = split_span(self.image_width, self.cols, index % self.cols);
        PatchRect {
            top,
            left,
            height,
            width,
        }
    }

    pub fn patch_of_pixel(&self, y: usize, x: usize) -> usize {
        let row = (y / (self.image_height / self.rows)).min(self.rows - 1);
        let col = (x / (self.image_width / self.cols)).min(self.cols - 1);
        row * self.cols + col
    }

    pub fn full(&self) -> PatchSet {
        PatchSet::full(self.patch_count())
    }

    pub fn empty(&self) -> PatchSet {
        PatchSet::empty(self.patch_count())
    }

    pub fn matches(&self, image: &ImageTensor) -> bool {
        self.image_height == image.height() && self.image_width == image.width()
    }

    fn check_image(&self, image: &ImageTensor) -> Result<()> {
        if self.matches(image) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "grid for {}x{} applied to {}x{} image",
                self.image_height,
                self.image_width,
                image.height(),
                image.width()
            )))
        }
    }
}

/// A subset of the patches of a grid with at most 64 patches.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchSet {
    bits: u64,
    capacity: u8,
}

fn capacity_mask(capacity: usize) -> u64 {
    if capacity >= 64 {
        u64::MAX
    } else {
        (1u64 << capacity) - 1
    }
}

impl PatchSet {
    pub fn empty(capacity: usize) -> Self {
        assert!(capacity <= MAX_PATCHES, "capacity {capacity} exceeds {MAX_PATCHES}");
        Self {
            bits: 0,
            capacity: capacity as u8,
        }
    }

    pub fn full(capacity: usize) -> Self {
        Self {
            bits: capacity_mask(capacity),
            ..Self::empty(capacity)
        }
    }

    pub fn from_bits(bits: u64, capacity: usize) -> Result<Self> {
        if capacity > MAX_PATCHES {
            return Err(Error::InvalidGrid(format!("capacity {capacity} exceeds {MAX_PATCHES}")));
        }
        if bits & !capacity_mask(capacity) != 0 {
            return Err(Error::InvalidGrid(format!(
                "mask {bits:#x} addresses patches beyond {capacity}"
            )));
        }
        Ok(Self {
            bits,
            capacity: capacity as u8,
        })
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>, capacity: usize) -> Result<Self> {
        let mut bits = 0u64;
        for i in indices {
            if i >= capacity {
                return Err(Error::InvalidGrid(format!("patch {i} outside grid of {capacity}")));
            }
            bits |= 1 << i;
        }
        Self::from_bits(bits, capacity)
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn capacity(&self) -> usize {
        self.capacity as usize
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn contains(&self, index: usize) -> bool {
        index < 64 && self.bits & (1 << index) != 0
    }

    pub fn with(self, index: usize) -> Self {
        debug_assert!(index < self.capacity());
        Self {
            bits: self.bits | (1 << index),
            ..self
        }
    }

    pub fn without(self, index: usize) -> Self {
        Self {
            bits: self.bits & !(1u64 << index),
            ..self
        }
    }

    pub fn complement(self) -> Self {
        Self {
            bits: !self.bits & capacity_mask(self.capacity()),
            ..self
        }
    }

    pub fn is_subset_of(&self, other: &PatchSet) -> bool {
        self.bits & !other.bits == 0
    }

    pub fn union(self, other: PatchSet) -> Self {
        Self {
            bits: self.bits | other.bits,
            ..self
        }
    }

    /// Member indices in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = usize> {
        let bits = self.bits;
        (0..64).filter(move |i| bits & (1 << i) != 0)
    }

    /// Indices not in the set, ascending.
    pub fn absent(&self) -> impl Iterator<Item = usize> {
        self.complement().iter().collect::<Vec<_>>().into_iter()
    }

    /// All sets obtained by removing exactly one member.
    pub fn immediate_subsets(&self) -> impl Iterator<Item = PatchSet> + '_ {
        self.iter().map(move |i| self.without(i))
    }

    pub fn to_hex(&self) -> String {
        format!("{:#x}", self.bits)
    }

    pub fn from_hex(text: &str, capacity: usize) -> Result<Self> {
        let digits = text.trim_start_matches("0x").trim_start_matches("0X");
        let bits = u64::from_str_radix(digits, 16)
            .map_err(|e| Error::InvalidGrid(format!("bad patch mask `{text}`: {e}")))?;
        Self::from_bits(bits, capacity)
    }
}

impl fmt::Debug for PatchSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Content substituted for hidden pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BaselineStyle {
    /// All-zero pixels.
    #[default]
    Grey,
    /// Gaussian blur of the image itself.
    Blur { sigma: f64 },
}

impl BaselineStyle {
    pub fn blur() -> Self {
        BaselineStyle::Blur {
            sigma: DEFAULT_BLUR_SIGMA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BaselineStyle::Blur { sigma } if !(sigma.is_finite() && *sigma > 0.0) => {
                Err(Error::InvalidConfig(format!("blur sigma must be > 0, got {sigma}")))
            }
            _ => Ok(()),
        }
    }

    /// Compact key used by caches.
    pub(crate) fn key(&self) -> u64 {
        match self {
            BaselineStyle::Grey => 0,
            BaselineStyle::Blur { sigma } => sigma.to_bits() | 1 << 63,
        }
    }
}

impl fmt::Display for BaselineStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineStyle::Grey => f.write_str("grey"),
            BaselineStyle::Blur { sigma } if *sigma == DEFAULT_BLUR_SIGMA => f.write_str("blur"),
            BaselineStyle::Blur { sigma } => write!(f, "blur:{sigma}"),
        }
    }
}

impl FromStr for BaselineStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let style = match s.trim().to_ascii_lowercase().as_str() {
            "grey" | "gray" => BaselineStyle::Grey,
            "blur" => BaselineStyle::blur(),
            other => match other.strip_prefix("blur:") {
                Some(sigma) => BaselineStyle::Blur {
                    sigma: sigma
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("bad blur sigma `{sigma}`")))?,
                },
                None => return Err(Error::InvalidConfig(format!("unknown baseline `{s}`"))),
            },
        };
        style.validate()?;
        Ok(style)
    }
}

impl Serialize for BaselineStyle {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BaselineStyle {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

pub fn make_baseline(image: &ImageTensor, style: BaselineStyle) -> Result<ImageTensor> {
    style.validate()?;
    match style {
        BaselineStyle::Grey => Ok(ImageTensor::zeros_like(image)),
        BaselineStyle::Blur { sigma } => Ok(gaussian_blur(image, sigma)),
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Separable Gaussian blur with edge replication.
fn gaussian_blur(image: &ImageTensor, sigma: f64) -> ImageTensor {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (h, w) = (image.height as isize, image.width as isize);
    let plane = image.pixel_count();
    let mut out = vec![0.0f32; image.data.len()];
    let mut tmp = vec![0.0f64; plane];
    for c in 0..image.channels {
        let src = &image.data[c * plane..(c + 1) * plane];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, wk) in kernel.iter().enumerate() {
                    let xx = (x + k as isize - radius).clamp(0, w - 1);
                    acc += wk * src[(y * w + xx) as usize] as f64;
                }
                tmp[(y * w + x) as usize] = acc;
            }
        }
        let dst = &mut out[c * plane..(c + 1) * plane];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, wk) in kernel.iter().enumerate() {
                    let yy = (y + k as isize - radius).clamp(0, h - 1);
                    acc += wk * tmp[(yy * w + x) as usize];
                }
                dst[(y * w + x) as usize] = (acc as f32).clamp(0.0, 1.0);
            }
        }
    }
    ImageTensor {
        data: out,
        ..*image
    }
}

/// Keeps the pixels of `patches` from `image` and takes everything else from `baseline`.
pub fn compose_masked(
    image: &ImageTensor,
    baseline: &ImageTensor,
    grid: &GridSpec,
    patches: PatchSet,
) -> Result<ImageTensor> {
    image.check_shape(baseline, "image vs baseline")?;
    grid.check_image(image)?;
    if patches.capacity() != grid.patch_count() {
        return Err(Error::DimensionMismatch(format!(
            "patch set over {} patches used with a {}-patch grid",
            patches.capacity(),
            grid.patch_count()
        )));
    }
    let mut out = baseline.clone();
    let plane = image.pixel_count();
    for index in patches.iter() {
        let rect = grid.patch_rect(index);
        for c in 0..image.channels {
            for y in rect.top..rect.top + rect.height {
                let start = c * plane + y * image.width + rect.left;
                let end = start + rect.width;
                out.data[start..end].copy_from_slice(&image.data[start..end]);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Baseline first, salient pixels revealed step by step.
    Insertion,
    /// Image first, salient pixels hidden step by step.
    Deletion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Upsampling {
    #[default]
    Nearest,
    Bilinear,
}

/// Resamples a row-major `src_h` x `src_w` grid of values to `dst_h` x `dst_w`.
pub fn upsample(values: &[f32], src_h: usize, src_w: usize, dst_h: usize, dst_w: usize, mode: Upsampling) -> Vec<f32> {
    assert_eq!(values.len(), src_h * src_w);
    let mut out = Vec::with_capacity(dst_h * dst_w);
    match mode {
        Upsampling::Nearest => {
            for y in 0..dst_h {
                let sy = y * src_h / dst_h;
                for x in 0..dst_w {
                    out.push(values[sy * src_w + x * src_w / dst_w]);
                }
            }
        }
        Upsampling::Bilinear => {
            let coord = |i: usize, src: usize, dst: usize| {
                let pos = ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
                let lo = pos.floor() as usize;
                (lo, (lo + 1).min(src - 1), pos - lo as f64)
            };
            for y in 0..dst_h {
                let (y0, y1, fy) = coord(y, src_h, dst_h);
                for x in 0..dst_w {
                    let (x0, x1, fx) = coord(x, src_w, dst_w);
                    let v = |yy: usize, xx: usize| values[yy * src_w + xx] as f64;
                    let top = v(y0, x0) * (1.0 - fx) + v(y0, x1) * fx;
                    let bottom = v(y1, x0) * (1.0 - fx) + v(y1, x1) * fx;
                    out.push((top * (1.0 - fy) + bottom * fy) as f32);
                }
            }
        }
    }
    out
}

/// Pixel order by descending attribution, ties broken by raster position.
#[derive(Debug, Clone)]
pub struct PixelRanking {
    height: usize,
    width: usize,
    order: Vec<u32>,
}

impl PixelRanking {
    pub fn new(map: &AttributionMap, height: usize, width: usize, mode: Upsampling) -> Self {
        let values = upsample(map.values(), map.height(), map.width(), height, width, mode);
        let mut order: Vec<u32> = (0..values.len() as u32).collect();
        // stable sort keeps raster order among equal values
        order.sort_by(|a, b| values[*b as usize].total_cmp(&values[*a as usize]));
        Self { height, width, order }
    }

    pub fn pixel_count(&self) -> usize {
        self.order.len()
    }

    /// Number of pixels making up the top `fraction` of the ranking.
    pub fn kept_for(&self, fraction: f64) -> usize {
        ((fraction.clamp(0.0, 1.0) * self.order.len() as f64).round() as usize).min(self.order.len())
    }

    /// Insertion keeps the top `kept` pixels of `image` over `baseline`;
    /// deletion replaces them with `baseline`.
    pub fn compose(
        &self,
        image: &ImageTensor,
        baseline: &ImageTensor,
        kept: usize,
        direction: Direction,
    ) -> Result<ImageTensor> {
        image.check_shape(baseline, "image vs baseline")?;
        if image.height != self.height || image.width != self.width {
            return Err(Error::DimensionMismatch(format!(
                "ranking for {}x{} applied to {}x{} image",
                self.height, self.width, image.height, image.width
            )));
        }
        let (top, rest) = match direction {
            Direction::Insertion => (image, baseline),
            Direction::Deletion => (baseline, image),
        };
        let mut out = rest.clone();
        let plane = image.pixel_count();
        for &p in &self.order[..kept.min(plane)] {
            for c in 0..image.channels {
                let i = c * plane + p as usize;
                out.data[i] = top.data[i];
            }
        }
        Ok(out)
    }
}

/// Mixes `image` and `baseline` by the top `fraction` of `map` (nearest-neighbour upsampled).
pub fn compose_fractional(
    image: &ImageTensor,
    baseline: &ImageTensor,
    map: &AttributionMap,
    fraction: f64,
    direction: Direction,
) -> Result<ImageTensor> {
    let ranking = PixelRanking::new(map, image.height, image.width, Upsampling::Nearest);
    ranking.compose(image, baseline, ranking.kept_for(fraction), direction)
}
