//! Image-folder patch source with stateless, seed-addressed sampling: the
//! `k`-th patch of a run depends only on `(seed, k)`, so resumed runs see
//! exactly the batches they would have seen.

use std::path::{Path, PathBuf};

use image::RgbImage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s2c_tensor::Tensor;

use crate::error::{Result, S2cError};

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "ppm"];

/// `[3, H, W]` in `[0, 1]` from 8-bit RGB.
pub fn rgb_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    Tensor::from_fn(&[1, 3, h, w], |i| {
        let (c, p) = (i / (h * w), i % (h * w));
        f64::from(raw[p * 3 + c]) / 255.0
    })
}

/// Clamp to `[0, 1]` and round to 8 bits. Takes the first image of a batch.
pub fn tensor_to_rgb(t: &Tensor) -> RgbImage {
    let (_, _, h, w) = t.dims4();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |c| (t.at4(0, c, y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        image::Rgb([px(0), px(1), px(2)])
    })
}

pub fn load_image(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| S2cError::Data(format!("{}: {e}", path.display())))?;
    Ok(rgb_to_tensor(&img.to_rgb8()))
}

pub fn save_image(path: &Path, t: &Tensor) -> Result<()> {
    tensor_to_rgb(t)
        .save(path)
        .map_err(|e| S2cError::Data(format!("{}: {e}", path.display())))
}

/// Decodable images of a directory, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| S2cError::io(dir, e))?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    out.sort();
    Ok(out)
}

/// Where the `k`-th patch comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Draw {
    pub image: usize,
    pub top: usize,
    pub left: usize,
    pub flip: bool,
}

#[derive(Debug, Clone)]
pub struct PatchSource {
    images: Vec<RgbImage>,
    pub patch: usize,
    pub seed: u64,
    pub flips: bool,
    pub skipped: usize,
}

fn mix(seed: u64, stream: u64, k: u64) -> u64 {
    // splitmix-style scramble so nearby (seed, k) pairs give unrelated streams
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ k.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl PatchSource {
    /// Load every image of `dir` at least `patch` pixels on both sides.
    pub fn from_dir(dir: &Path, patch: usize, seed: u64) -> Result<Self> {
        let paths = list_images(dir)?;
        let mut images = Vec::new();
        let mut skipped = 0;
        for p in &paths {
            match image::open(p) {
                Ok(img) if img.width() as usize >= patch && img.height() as usize >= patch => {
                    images.push(img.to_rgb8());
                }
                Ok(_) => skipped += 1,
                Err(e) => {
                    log::warn!("skipping {}: {e}", p.display());
                    skipped += 1;
                }
            }
        }
        if skipped > 0 {
            log::warn!("{skipped} image(s) in {} skipped (unreadable or smaller than {patch} px)", dir.display());
        }
        let mut src = Self::from_images(images, patch, seed)
            .map_err(|_| S2cError::Data(format!("no usable images of at least {patch} px in {}", dir.display())))?;
        src.skipped = skipped;
        Ok(src)
    }

    pub fn from_images(images: Vec<RgbImage>, patch: usize, seed: u64) -> Result<Self> {
        if patch == 0 || images.is_empty() {
            return Err(S2cError::Data("empty patch source".into()));
        }
        if let Some(small) = images.iter().find(|i| (i.width() as usize) < patch || (i.height() as usize) < patch) {
            return Err(S2cError::Data(format!(
                "image {}x{} smaller than patch {patch}",
                small.width(),
                small.height()
            )));
        }
        Ok(Self {
            images,
            patch,
            seed,
            flips: true,
            skipped: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Images are visited in a fresh permutation every epoch; crop offsets
    /// and flips are uniform.
    pub fn draw(&self, k: u64) -> Draw {
        let n = self.images.len() as u64;
        let (epoch, slot) = (k / n, (k % n) as usize);
        let mut order: Vec<usize> = (0..self.images.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(self.seed, 1, epoch)));
        let image = order[slot];
        let img = &self.images[image];
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, 2, k));
        let top = rng.gen_range(0..=img.height() as usize - self.patch);
        let left = rng.gen_range(0..=img.width() as usize - self.patch);
        let flip = self.flips && rng.gen_bool(0.5);
        Draw { image, top, left, flip }
    }

    /// `[1, 3, p, p]` patch for a draw.
    pub fn patch_of(&self, d: Draw) -> Tensor {
        let img = &self.images[d.image];
        let p = self.patch;
        Tensor::from_fn(&[1, 3, p, p], |i| {
            let (c, r, q) = (i / (p * p), (i / p) % p, i % p);
            let q = if d.flip { p - 1 - q } else { q };
            f64::from(img.get_pixel((d.left + q) as u32, (d.top + r) as u32)[c]) / 255.0
        })
    }

    /// Patches `[step·n, (step+1)·n)` stacked into `[n, 3, p, p]`.
    pub fn batch(&self, step: u64, n: usize) -> Tensor {
        let parts: Vec<Tensor> = (0..n as u64).map(|i| self.patch_of(self.draw(step * n as u64 + i))).collect();
        Tensor::stack_batch(&parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn gradient_image(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| image::Rgb([(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8]))
    }

    #[test]
    fn seeded_sequences_repeat() {
        let a = PatchSource::from_images(vec![gradient_image(512, 512)], 256, 9).unwrap();
        let b = PatchSource::from_images(vec![gradient_image(512, 512)], 256, 9).unwrap();
        let first: Vec<Draw> = (0..10).map(|k| a.draw(k)).collect();
        assert_eq!(first, (0..10).map(|k| b.draw(k)).collect::<Vec<_>>());
        assert_ne!(first, (0..10).map(|k| PatchSource { seed: 10, ..b.clone() }.draw(k)).collect::<Vec<_>>());
        let batch = a.batch(3, 2);
        assert_eq!(batch.shape(), &[2, 3, 256, 256]);
        assert!(batch.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn patches_are_the_requested_crops() {
        let src = PatchSource::from_images(vec![gradient_image(300, 280)], 16, 1).unwrap();
        for k in 0..20 {
            let d = src.draw(k);
            let p = src.patch_of(d);
            let q = if d.flip { 15 } else { 0 };
            assert_eq!(p.at4(0, 0, 0, q), (d.left % 256) as f64 / 255.0);
            assert_eq!(p.at4(0, 1, 0, 0), (d.top % 256) as f64 / 255.0);
        }
    }

    #[test]
    fn every_image_is_visited_once_per_epoch() {
        let imgs = (0..5).map(|_| gradient_image(32, 32)).collect();
        let src = PatchSource::from_images(imgs, 32, 4).unwrap();
        for epoch in 0..3u64 {
            let mut seen: Vec<usize> = (0..5).map(|s| src.draw(epoch * 5 + s).image).collect();
            seen.sort_unstable();
            assert_eq!(seen, [0, 1, 2, 3, 4]);
        }
    }

    /// χ² goodness of fit of crop offsets against the uniform law.
    #[test]
    fn crop_offsets_are_uniform() {
        let src = PatchSource::from_images(vec![gradient_image(512, 512)], 256, 2024).unwrap();
        const BINS: usize = 16;
        let positions = 257.0;
        let (mut tops, mut lefts) = ([0f64; BINS], [0f64; BINS]);
        let draws = 10_000;
        for k in 0..draws {
            let d = src.draw(k);
            tops[(d.top as f64 * BINS as f64 / positions) as usize] += 1.0;
            lefts[(d.left as f64 * BINS as f64 / positions) as usize] += 1.0;
        }
        // expected count per bin from how many integer offsets fall in it
        let expected: Vec<f64> = (0..BINS)
            .map(|b| (0..257).filter(|&v| (v as f64 * BINS as f64 / positions) as usize == b).count() as f64 / positions * draws as f64)
            .collect();
        let critical = ChiSquared::new((BINS - 1) as f64).unwrap().inverse_cdf(0.99);
        for counts in [tops, lefts] {
            let chi2: f64 = counts.iter().zip(&expected).map(|(o, e)| (o - e) * (o - e) / e).sum();
            assert!(chi2 < critical, "χ² = {chi2} ≥ {critical}");
        }
    }

    #[test]
    fn folder_loading_skips_small_and_rejects_empty() {
        let dir = tempfile::tempdir().unwrap();
        gradient_image(64, 64).save(dir.path().join("a.png")).unwrap();
        gradient_image(20, 64).save(dir.path().join("b.png")).unwrap();
        std::fs::write(dir.path().join("c.png"), b"not an image").unwrap();
        std::fs::write(dir.path().join("notes.txt"), b"x").unwrap();
        let src = PatchSource::from_dir(dir.path(), 32, 0).unwrap();
        assert_eq!((src.len(), src.skipped), (1, 2));
        assert!(matches!(PatchSource::from_dir(dir.path(), 128, 0), Err(S2cError::Data(_))));
        assert!(PatchSource::from_dir(&dir.path().join("missing"), 32, 0).is_err());
    }

    #[test]
    fn tensor_image_round_trip() {
        let img = gradient_image(7, 5);
        let t = rgb_to_tensor(&img);
        assert_eq!(t.shape(), &[1, 3, 5, 7]);
        assert_eq!(tensor_to_rgb(&t), img);
    }
}
