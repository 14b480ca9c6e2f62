use alloc::vec::Vec;
use rand::{Rng, RngCore};

use crate::click_model::GroundTruthBias;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceConfig {
    /// Probability that a query comes from the second device; in `[0, 0.5]`.
    pub device_prob: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceAugmented {
    /// Base contexts with a two-entry one-hot device indicator appended.
    pub contexts: Vec<Vec<f64>>,
    /// Device index (0 or 1) per context.
    pub devices: Vec<u8>,
    pub bias: GroundTruthBias,
}

/// Appends a one-hot device indicator and builds a bias that depends on the device only.
///
/// The raw weights are zero on the base dimensions and `U(-eta, eta)` on the
/// two device dimensions. Centering is applied within the device block, so
/// `<w, q>` takes exactly one value per device. The bias weights are drawn
/// before the devices, so the bias does not depend on `device_prob`.
pub fn augment_device<R: RngCore + ?Sized>(
    contexts: &[Vec<f64>],
    config: &DeviceConfig,
    positions: usize,
    rng: &mut R,
) -> Result<DeviceAugmented> {
    if !(0.0..=0.5).contains(&config.device_prob) {
        return Err(Error::Config(alloc::format!(
            "device_prob must lie in [0, 0.5], got {}",
            config.device_prob
        )));
    }
    if !(config.eta >= 0.0 && config.eta.is_finite()) {
        return Err(Error::Config(alloc::format!(
            "eta must be finite and >= 0, got {}",
            config.eta
        )));
    }
    let base_dim = contexts.first().map_or(0, Vec::len);
    let d0 = config.eta * rng.random_range(-1.0..=1.0);
    let d1 = config.eta * rng.random_range(-1.0..=1.0);
    let centre = 0.5 * (d0 + d1);
    let mut raw = alloc::vec![0.0; base_dim + 2];
    raw[base_dim] = d0;
    raw[base_dim + 1] = d1;
    let mut w = alloc::vec![0.0; base_dim + 2];
    w[base_dim] = d0 - centre;
    w[base_dim + 1] = d1 - centre;
    let bias = GroundTruthBias {
        w,
        raw,
        eta: config.eta,
        positions,
    };

    let mut out = Vec::with_capacity(contexts.len());
    let mut devices = Vec::with_capacity(contexts.len());
    for q in contexts {
        if q.len() != base_dim {
            return Err(Error::DimensionMismatch {
                expected: base_dim,
                got: q.len(),
            });
        }
        let device = u8::from(rng.random::<f64>() < config.device_prob);
        let mut aug = Vec::with_capacity(base_dim + 2);
        aug.extend_from_slice(q);
        aug.push(f64::from(1 - device));
        aug.push(f64::from(device));
        out.push(aug);
        devices.push(device);
    }
    Ok(DeviceAugmented {
        contexts: out,
        devices,
        bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::dot;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..10).map(|_| rng.random::<f64>()).collect())
            .collect()
    }

    #[test]
    fn zero_prob_puts_everyone_on_first_device() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ctx = base(100, &mut rng);
        let cfg = DeviceConfig {
            device_prob: 0.0,
            eta: 1.5,
        };
        let aug = augment_device(&ctx, &cfg, 10, &mut rng).unwrap();
        for (a, b) in aug.contexts.iter().zip(&ctx) {
            assert_eq!(a.len(), 12);
            assert_eq!(&a[..10], &b[..]);
            assert_eq!(&a[10..], &[1.0, 0.0]);
        }
    }

    #[test]
    fn two_distinct_bias_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ctx = base(500, &mut rng);
        let cfg = DeviceConfig {
            device_prob: 0.4,
            eta: 1.5,
        };
        let aug = augment_device(&ctx, &cfg, 10, &mut rng).unwrap();
        let mut values: Vec<f64> = aug.contexts.iter().map(|q| dot(&aug.bias.w, q)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        assert_eq!(values.len(), 2);
        assert!(aug.bias.w.iter().sum::<f64>().abs() < 1e-12);
        assert!(aug.bias.raw[..10].iter().all(|&x| x == 0.0));
        for q in &aug.contexts {
            assert_eq!(q[10] + q[11], 1.0);
        }
    }

    #[test]
    fn device_frequency_matches_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ctx = base(10_000, &mut rng);
        let cfg = DeviceConfig {
            device_prob: 0.3,
            eta: 1.0,
        };
        let aug = augment_device(&ctx, &cfg, 10, &mut rng).unwrap();
        let f = aug.devices.iter().map(|&d| d as f64).sum::<f64>() / 10_000.0;
        assert!((f - 0.3).abs() < 0.015, "frequency {f}");
    }

    #[test]
    fn rejects_out_of_range_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = DeviceConfig {
            device_prob: 0.7,
            eta: 1.0,
        };
        assert!(augment_device(&[], &cfg, 10, &mut rng).is_err());
    }
}
