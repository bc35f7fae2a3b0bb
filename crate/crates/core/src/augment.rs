//! Annotation-guided intensity manipulation, synthetic view-label stamping,
//! and the balanced category mixer for training streams.
//!
//! The manipulation procedure rescales intensities using local statistics of
//! the annotated structures: after a global random scale (kept with
//! probability 0.5), the lower rescale bound is drawn around the fatty
//! tissue's 5th percentile and pulled below the nipple mean so the nipple is
//! never erased, the upper bound is the image-wide 98th percentile, and the
//! result optionally gets its background zeroed and a synthetic view label
//! stamped near the top-left corner.

use serde::{Deserialize, Serialize};

use crate::error::{check_same_dims, Error, Result};
use crate::image::{BinaryMask, GrayImage};
use crate::preprocess::{percentile, quantize_255};
use crate::rng::UniformSource;

/// Mean of the image intensities under the mask.
pub fn masked_mean(img: &GrayImage, mask: &BinaryMask) -> Result<f64> {
    check_same_dims(img.dims(), mask.dims())?;
    let values = masked_values(img.data(), mask);
    if values.is_empty() {
        return Err(Error::EmptyMask("mean"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// q-th percentile (linear interpolation) of the intensities under the mask.
pub fn masked_percentile(img: &GrayImage, mask: &BinaryMask, q: f64) -> Result<f64> {
    check_same_dims(img.dims(), mask.dims())?;
    let values = masked_values(img.data(), mask);
    if values.is_empty() {
        return Err(Error::EmptyMask("percentile"));
    }
    percentile(&values, q)
}

fn masked_values(data: &[u8], mask: &BinaryMask) -> Vec<f64> {
    data.iter()
        .zip(mask.data())
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v as f64)
        .collect()
}

fn masked_values_f64(data: &[f64], mask: &BinaryMask) -> Vec<f64> {
    data.iter()
        .zip(mask.data())
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .collect()
}

fn mean_f64(data: &[f64], mask: &BinaryMask) -> Option<f64> {
    let values = masked_values_f64(data, mask);
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

/// v -> clip((v - x_min)/(x_max - x_min), 0, 1) * (y_max - y_min) + y_min,
/// quantized to 8-bit.
pub fn rescale_intensity(
    img: &GrayImage,
    from: (f64, f64),
    to: (f64, f64),
) -> Result<GrayImage> {
    let data = rescale_values(
        &img.data().iter().map(|&v| v as f64).collect::<Vec<_>>(),
        from,
        to,
    )?
    .iter()
    .map(|&v| quantize_255(v))
    .collect();
    GrayImage::new(img.width(), img.height(), data).map(|g| g.with_spacing(img.spacing_m()))
}

fn rescale_values(data: &[f64], (x_min, x_max): (f64, f64), (y_min, y_max): (f64, f64)) -> Result<Vec<f64>> {
    if !(x_min < x_max) {
        return Err(Error::invalid(format!(
            "rescale source range out of order: ({x_min}, {x_max})"
        )));
    }
    if !(y_min <= y_max) {
        return Err(Error::invalid(format!(
            "rescale target range out of order: ({y_min}, {y_max})"
        )));
    }
    let span = x_max - x_min;
    let out_span = y_max - y_min;
    Ok(data
        .iter()
        .map(|&v| ((v - x_min) / span).clamp(0.0, 1.0) * out_span + y_min)
        .collect())
}

/// 5x7 bitmaps for the view-label glyphs, one row per byte, bit 4 leftmost.
const GLYPH_WIDTH: usize = 5;
const GLYPH_HEIGHT: usize = 7;
const GLYPH_GAP: usize = 1;

fn glyph(ch: char) -> [u8; GLYPH_HEIGHT] {
    match ch {
        'L' => [0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111],
        'M' => [0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001],
        'O' => [0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110],
        'R' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001],
        'C' => [0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110],
        other => unreachable!("no glyph for {other:?}"),
    }
}

/// View labels seen on acquisitions that burn laterality and view position
/// into the image.
const VIEW_LABELS: [&str; 4] = ["LMLO", "RMLO", "LCC", "RCC"];

const MIN_STAMP_DIM: usize = 64;

fn stamp_scale(width: usize, height: usize) -> usize {
    (width.min(height) / 128).max(1)
}

/// Stamp a bright synthetic view label near the top-left corner. Draw order:
/// label choice, then x, then y, each uniform.
pub fn add_synthetic_label<R: UniformSource>(img: &GrayImage, rng: &mut R) -> Result<GrayImage> {
    let (w, h) = img.dims();
    if w < MIN_STAMP_DIM || h < MIN_STAMP_DIM {
        return Err(Error::invalid(format!(
            "label stamping requires at least {MIN_STAMP_DIM}x{MIN_STAMP_DIM} pixels, got {w}x{h}"
        )));
    }
    let pick = rng.uniform(0.0, VIEW_LABELS.len() as f64)?;
    let text = VIEW_LABELS[(pick as usize).min(VIEW_LABELS.len() - 1)];
    let x0 = rng.uniform(0.0, 0.15 * w as f64)?.floor() as usize;
    let y0 = rng.uniform(0.0, 0.15 * h as f64)?.floor() as usize;

    let scale = stamp_scale(w, h);
    let mut out = img.clone();
    for (ci, ch) in text.chars().enumerate() {
        let bitmap = glyph(ch);
        let cx0 = x0 + ci * (GLYPH_WIDTH + GLYPH_GAP) * scale;
        for (row, bits) in bitmap.iter().enumerate() {
            for col in 0..GLYPH_WIDTH {
                if bits & (1 << (GLYPH_WIDTH - 1 - col)) == 0 {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        let x = cx0 + col * scale + dx;
                        let y = y0 + row * scale + dy;
                        if x < w && y < h {
                            out.set(x, y, 255);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Structure statistics computed on the scaled image, recorded for
/// diagnostics and invariant checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManipulationStats {
    pub mu_nip: f64,
    pub mu_fat: f64,
    pub mu_fib: f64,
    pub p_fat: f64,
    /// The fat/fibroglandular blend 0.7*mu_fat + 0.3*mu_fib.
    pub blend: f64,
}

/// Result of one manipulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct ManipulationOutcome {
    pub image: GrayImage,
    /// False when the run returned early after the global intensity scale.
    pub applied: bool,
    pub a_min: Option<f64>,
    pub a_max: Option<f64>,
    pub background_zeroed: bool,
    pub label_added: bool,
    /// Set when a required structure mask was empty or the rescale range
    /// collapsed; the scaled image is returned unmodified.
    pub degraded: bool,
    pub stats: Option<ManipulationStats>,
}

/// The masks the manipulation consumes, all matching the image dimensions.
#[derive(Debug, Clone)]
pub struct StructureMasks {
    pub nipple: BinaryMask,
    pub fibroglandular: BinaryMask,
    pub fatty: BinaryMask,
    pub background: BinaryMask,
}

fn quantize_image(width: usize, height: usize, data: &[f64], spacing: Option<f64>) -> GrayImage {
    let quantized = data.iter().map(|&v| quantize_255(v)).collect();
    GrayImage::new(width, height, quantized)
        .expect("shape preserved")
        .with_spacing(spacing)
}

/// Annotation-guided intensity manipulation.
///
/// Real-valued intensities are kept internally from the global scale through
/// the rescale; quantization to 8-bit happens once at the end.
pub fn manipulate<R: UniformSource>(
    img: &GrayImage,
    masks: &StructureMasks,
    rng: &mut R,
) -> Result<ManipulationOutcome> {
    check_same_dims(img.dims(), masks.nipple.dims())?;
    check_same_dims(img.dims(), masks.fibroglandular.dims())?;
    check_same_dims(img.dims(), masks.fatty.dims())?;
    check_same_dims(img.dims(), masks.background.dims())?;
    let (w, h) = img.dims();

    // Global intensity scale, clipped at 255.
    let scale = rng.uniform(0.8, 1.2)?;
    let scaled: Vec<f64> = img
        .data()
        .iter()
        .map(|&v| (scale * v as f64).min(255.0))
        .collect();

    let keep_scaled_only = rng.uniform(0.0, 1.0)? < 0.5;
    let base = ManipulationOutcome {
        image: quantize_image(w, h, &scaled, img.spacing_m()),
        applied: false,
        a_min: None,
        a_max: None,
        background_zeroed: false,
        label_added: false,
        degraded: false,
        stats: None,
    };
    if keep_scaled_only {
        return Ok(base);
    }

    let (mu_nip, mu_fat, mu_fib) = match (
        mean_f64(&scaled, &masks.nipple),
        mean_f64(&scaled, &masks.fatty),
        mean_f64(&scaled, &masks.fibroglandular),
    ) {
        (Some(n), Some(fat), Some(fib)) => (n, fat, fib),
        _ => return Ok(ManipulationOutcome { degraded: true, ..base }),
    };
    let fat_values = masked_values_f64(&scaled, &masks.fatty);
    let p_fat = percentile(&fat_values, 5.0)?;
    let blend = 0.7 * mu_fat + 0.3 * mu_fib;
    let stats = ManipulationStats {
        mu_nip,
        mu_fat,
        mu_fib,
        p_fat,
        blend,
    };

    let mut a_min = rng.uniform(p_fat - 20.0, p_fat + 20.0)?.clamp(0.0, 255.0);
    if a_min > mu_nip - 5.0 {
        a_min = (mu_nip - 5.0).max(0.0);
    } else if rng.uniform(0.0, 1.0)? < 0.5 && (mu_nip - 5.0) < blend {
        a_min = rng.uniform((mu_nip - 5.0).max(0.0), mu_nip)?;
    }
    let a_max = percentile(&scaled, 98.0)?;
    if a_max <= a_min {
        // A compressed histogram can push the 98th percentile below the
        // lower bound; swapping would invert contrast, so fall back.
        return Ok(ManipulationOutcome {
            degraded: true,
            stats: Some(stats),
            ..base
        });
    }

    let mut out = rescale_values(&scaled, (a_min, a_max), (0.0, 255.0))?;

    let background_zeroed = rng.uniform(0.0, 1.0)? < 0.5;
    if background_zeroed {
        for (v, &m) in out.iter_mut().zip(masks.background.data()) {
            if m {
                *v = 0.0;
            }
        }
    }

    let mut image = quantize_image(w, h, &out, img.spacing_m());
    let want_label = rng.uniform(0.0, 1.0)? < 0.5;
    let mut label_added = false;
    if want_label && w >= MIN_STAMP_DIM && h >= MIN_STAMP_DIM {
        image = add_synthetic_label(&image, rng)?;
        label_added = true;
    }

    Ok(ManipulationOutcome {
        image,
        applied: true,
        a_min: Some(a_min),
        a_max: Some(a_max),
        background_zeroed,
        label_added,
        degraded: false,
        stats: Some(stats),
    })
}

/// Training-stream source categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceCategory {
    Original,
    Manipulated,
    StyleIms,
    StylePlanmed,
    StyleHologic,
}

impl SourceCategory {
    pub const ALL: [SourceCategory; 5] = [
        SourceCategory::Original,
        SourceCategory::Manipulated,
        SourceCategory::StyleIms,
        SourceCategory::StylePlanmed,
        SourceCategory::StyleHologic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceCategory::Original => "original",
            SourceCategory::Manipulated => "manipulated",
            SourceCategory::StyleIms => "style_ims",
            SourceCategory::StylePlanmed => "style_planmed",
            SourceCategory::StyleHologic => "style_hologic",
        }
    }
}

/// Categorical distribution over augmentation sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixPolicy {
    weights: [f64; 5],
}

impl MixPolicy {
    pub fn new(weights: [f64; 5]) -> Result<MixPolicy> {
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Config("mix weights must be non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "mix weights must sum to 1, got {sum}"
            )));
        }
        Ok(MixPolicy { weights })
    }

    /// Equal probability for original and the three stylized categories.
    pub fn style_transfer() -> MixPolicy {
        MixPolicy {
            weights: [0.25, 0.0, 0.25, 0.25, 0.25],
        }
    }

    /// Equal probability for all five categories.
    pub fn combination() -> MixPolicy {
        MixPolicy { weights: [0.2; 5] }
    }

    pub fn original_only() -> MixPolicy {
        MixPolicy {
            weights: [1.0, 0.0, 0.0, 0.0, 0.0],
        }
    }

    pub fn weight(&self, category: SourceCategory) -> f64 {
        self.weights[Self::slot(category)]
    }

    fn slot(category: SourceCategory) -> usize {
        SourceCategory::ALL
            .iter()
            .position(|&c| c == category)
            .expect("category listed")
    }

    /// Draw a category by inverse CDF over the fixed category order.
    pub fn draw<R: UniformSource>(&self, rng: &mut R) -> Result<SourceCategory> {
        let u = rng.uniform(0.0, 1.0)?;
        let mut acc = 0.0;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return Ok(SourceCategory::ALL[i]);
            }
        }
        // Weight round-off can leave acc fractionally below 1.
        let last = self
            .weights
            .iter()
            .rposition(|&w| w > 0.0)
            .expect("weights sum to 1");
        Ok(SourceCategory::ALL[last])
    }
}

/// Pulls samples of one category for the mixer.
pub trait SampleProvider {
    type Item;
    fn next_sample(&mut self) -> Option<Self::Item>;
}

impl<T, F: FnMut() -> Option<T>> SampleProvider for F {
    type Item = T;
    fn next_sample(&mut self) -> Option<T> {
        self()
    }
}

/// Interleave per-category providers, drawing each emitted sample's
/// category independently from the policy.
pub struct MixStream<'a, T, R: UniformSource> {
    providers: [Option<&'a mut dyn SampleProvider<Item = T>>; 5],
    policy: MixPolicy,
    rng: R,
}

impl<'a, T, R: UniformSource> MixStream<'a, T, R> {
    pub fn new(
        mut providers: [Option<&'a mut dyn SampleProvider<Item = T>>; 5],
        policy: MixPolicy,
        rng: R,
    ) -> Result<MixStream<'a, T, R>> {
        for (i, category) in SourceCategory::ALL.iter().enumerate() {
            if policy.weight(*category) > 0.0 && providers[i].is_none() {
                return Err(Error::Config(format!(
                    "category {} has positive weight but no provider",
                    category.as_str()
                )));
            }
            if policy.weight(*category) == 0.0 {
                providers[i] = None;
            }
        }
        Ok(MixStream {
            providers,
            policy,
            rng,
        })
    }

    /// The next (category, sample) pair, or None when the drawn category's
    /// provider is exhausted.
    pub fn next_draw(&mut self) -> Result<Option<(SourceCategory, T)>> {
        let category = self.policy.draw(&mut self.rng)?;
        let slot = MixPolicy::slot(category);
        let provider = self.providers[slot]
            .as_mut()
            .expect("validated at construction");
        Ok(provider.next_sample().map(|s| (category, s)))
    }
}
