//! Synthetic noisy-sphere volumes with ground truth.
//!
//! Noise comes from ChaCha8 (`rand_chacha`), seeded with `seed_from_u64`, one
//! draw per voxel in row-major order. Each draw is a 53-bit uniform in `[0, 1)`
//! scaled to `[noise_low, noise_high)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::GridShape;
use crate::map_icm::LabelField;
use crate::observation::ObservationField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    /// Cube side in voxels.
    pub extent: usize,
    pub radius: f64,
    pub fg_intensity: f64,
    pub bg_intensity: f64,
    pub noise_low: f64,
    pub noise_high: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            extent: 50,
            radius: 20.0,
            fg_intensity: 100.0,
            bg_intensity: 0.0,
            noise_low: 0.0,
            noise_high: 120.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.extent == 0 {
            return Err(Error::InvalidConfig("extent must be positive".into()));
        }
        if !(self.radius >= 0.0 && self.radius < self.extent as f64 / 2.0 + 1.0) {
            return Err(Error::InvalidConfig(format!(
                "radius {} must lie in [0, extent/2 + 1)",
                self.radius
            )));
        }
        // equal bounds give a noise-free volume
        if !(self.noise_low <= self.noise_high) {
            return Err(Error::InvalidConfig("noise_low must not exceed noise_high".into()));
        }
        let finite = [self.fg_intensity, self.bg_intensity, self.noise_low, self.noise_high];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("intensities must be finite".into()));
        }
        Ok(())
    }

    pub fn shape(&self) -> GridShape {
        GridShape::new(&[self.extent; 3]).expect("extent validated as positive")
    }
}

pub struct SynthVolume {
    pub shape: GridShape,
    pub volume: ObservationField,
    /// 1 inside the closed ball, 0 outside.
    pub truth: LabelField,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthVolume> {
    spec.validate()?;
    let n = spec.extent;
    let center = (n as f64 - 1.0) / 2.0;
    let r2 = spec.radius * spec.radius;
    let width = spec.noise_high - spec.noise_low;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Vec::with_capacity(n * n * n);
    let mut truth = Vec::with_capacity(n * n * n);
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let d2 = [z, y, x]
                    .iter()
                    .map(|&c| (c as f64 - center).powi(2))
                    .sum::<f64>();
                let inside = d2 <= r2;
                let base = if inside { spec.fg_intensity } else { spec.bg_intensity };
                let u: f64 = rng.random();
                values.push(base + spec.noise_low + width * u);
                truth.push(usize::from(inside));
            }
        }
    }
    Ok(SynthVolume {
        shape: spec.shape(),
        volume: ObservationField::scalar(values)?,
        truth: LabelField::new(truth, 2)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_sphere() {
        let spec = SynthSpec { extent: 7, radius: 0.0, ..SynthSpec::default() };
        let v = generate(&spec).unwrap();
        assert_eq!(v.truth.histogram()[1], 1);
        let spec = SynthSpec { extent: 6, radius: 0.0, ..SynthSpec::default() };
        assert_eq!(generate(&spec).unwrap().truth.histogram()[1], 0);
    }

    #[test]
    fn default_foreground_count() {
        let v = generate(&SynthSpec::default()).unwrap();
        // brute-force lattice-point count, independent triple loop
        let c = 24.5f64;
        let mut count = 0;
        for i in 0..50 {
            for j in 0..50 {
                for k in 0..50 {
                    let d = (i as f64 - c).powi(2) + (j as f64 - c).powi(2) + (k as f64 - c).powi(2);
                    if d <= 400.0 {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(count, 33552);
        assert_eq!(v.truth.histogram()[1], count);
    }

    #[test]
    fn zero_width_noise_is_two_valued() {
        let spec = SynthSpec { extent: 9, radius: 3.0, noise_high: 0.0, ..SynthSpec::default() };
        let v = generate(&spec).unwrap();
        for (val, &t) in v.volume.values().iter().zip(v.truth.as_slice()) {
            assert_eq!(*val, if t == 1 { 100.0 } else { 0.0 });
        }
    }

    #[test]
    fn values_within_bounds_and_seeded() {
        let spec = SynthSpec { extent: 12, radius: 4.0, seed: 9, ..SynthSpec::default() };
        let a = generate(&spec).unwrap();
        assert!(a.volume.values().iter().all(|&v| (0.0..220.0).contains(&v)));
        let b = generate(&spec).unwrap();
        assert_eq!(a.volume, b.volume);
        let c = generate(&SynthSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a.volume, c.volume);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate(&SynthSpec { radius: 26.0, ..SynthSpec::default() }).is_err());
        assert!(generate(&SynthSpec { noise_low: 5.0, noise_high: 1.0, ..SynthSpec::default() }).is_err());
        assert!(generate(&SynthSpec { extent: 0, ..SynthSpec::default() }).is_err());
    }
}
