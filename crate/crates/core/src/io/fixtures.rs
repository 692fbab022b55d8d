//! Synthetic test images: bright disks on a dark, noisy background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{DomainSpec, RealField};
use crate::error::{Error, Result};
use crate::skew::ImageField;

#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub size: usize,
    pub disks: usize,
    pub min_radius: f64,
    pub max_radius: f64,
    /// Minimum gap between disk edges.
    pub gap: f64,
    pub background: f64,
    pub foreground: f64,
    /// Half-width of the uniform noise added to every pixel.
    pub noise: f64,
    pub seed: u64,
}

impl BlobSpec {
    /// The `blobs64` fixture.
    pub fn blobs64() -> Self {
        Self {
            size: 64,
            disks: 4,
            min_radius: 9.0,
            max_radius: 13.0,
            gap: 6.0,
            background: 0.15,
            foreground: 0.8,
            noise: 0.08,
            seed: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlobImage {
    pub image: ImageField,
    /// Disk centers `(row, col)` and radii.
    pub disks: Vec<(f64, f64, f64)>,
    /// `true` where the pixel center lies outside every disk.
    pub dark: Vec<bool>,
}

/// Places disks by rejection sampling (fully inside the frame, separated by
/// `gap`), then adds i.i.d. uniform noise and clamps to `[0, 1]`.
pub fn blobs(spec: &BlobSpec) -> Result<BlobImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.size as f64;
    let mut disks: Vec<(f64, f64, f64)> = Vec::new();
    let mut attempts = 0;
    while disks.len() < spec.disks {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::InvalidArgument(format!(
                "cannot place {} disks in a {}x{} frame",
                spec.disks, spec.size, spec.size
            )));
        }
        let r = rng.random_range(spec.min_radius..=spec.max_radius);
        let lo = r + 1.0;
        let hi = n - r - 2.0;
        if hi <= lo {
            continue;
        }
        let (y, x) = (rng.random_range(lo..hi), rng.random_range(lo..hi));
        if disks
            .iter()
            .all(|&(y2, x2, r2)| ((y - y2).powi(2) + (x - x2).powi(2)).sqrt() >= r + r2 + spec.gap)
        {
            disks.push((y, x, r));
        }
    }

    let domain = DomainSpec::padded(&[spec.size, spec.size])?;
    let mut dark = Vec::with_capacity(spec.size * spec.size);
    let values = RealField::from_fn(&domain, |c| {
        let (y, x) = (c[0] as f64, c[1] as f64);
        let inside = disks
            .iter()
            .any(|&(cy, cx, r)| (y - cy).powi(2) + (x - cx).powi(2) <= r * r);
        dark.push(!inside);
        let base = if inside { spec.foreground } else { spec.background };
        (base + rng.random_range(-spec.noise..=spec.noise)).clamp(0.0, 1.0)
    });
    Ok(BlobImage {
        image: ImageField::new(values)?,
        disks,
        dark,
    })
}

/// Resolves a fixture name.
pub fn fixture(name: &str) -> Result<BlobImage> {
    match name {
        "blobs64" => blobs(&BlobSpec::blobs64()),
        other => Err(Error::Config(format!("unknown fixture '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_separated() {
        let a = fixture("blobs64").unwrap();
        let b = fixture("blobs64").unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.disks.len(), 4);
        let dark = a.dark.iter().filter(|&&d| d).count();
        assert!(dark > 64 * 64 / 3 && dark < 64 * 64, "{dark}");
        for (i, &(y, x, r)) in a.disks.iter().enumerate() {
            assert!(y - r >= 0.0 && x - r >= 0.0 && y + r < 64.0 && x + r < 64.0);
            for &(y2, x2, r2) in &a.disks[i + 1..] {
                assert!(((y - y2).powi(2) + (x - x2).powi(2)).sqrt() >= r + r2);
            }
        }
        assert!(fixture("nope").is_err());
    }

    #[test]
    fn intensities_follow_mask() {
        let spec = BlobSpec::blobs64();
        let b = blobs(&spec).unwrap();
        for (v, &d) in b.image.intensity().values().iter().zip(&b.dark) {
            let base = if d { spec.background } else { spec.foreground };
            assert!((v - base).abs() <= spec.noise + 1e-12);
        }
    }
}
