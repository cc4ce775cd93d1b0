//! Seeded randomness and the perturbation sets used to estimate a feature's
//! attainable output range.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{FeatureKind, FeatureSpace, Instance};

/// ChaCha8 stream keyed by a 64-bit seed. The generator is portable, so the
/// same seed gives the same draws on every platform.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for sub-stream `stream`, seeded with
    /// [`derive_seed`]`(self.seed(), stream)`. Does not advance `self`.
    pub fn fork(&self, stream: u64) -> SeededRng {
        SeededRng::new(derive_seed(self.seed, stream))
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// Sub-seed for `(seed, stream)`: the SplitMix64 finaliser applied to
/// `seed + (stream + 1) * 0x9E3779B97F4A7C15`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Instances that differ from `source` only at `varied_feature`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub instances: Vec<Instance>,
    pub varied_feature: usize,
    pub source: Instance,
}

impl SampleSet {
    /// Values taken by the varied feature, in set order.
    pub fn varied_values(&self) -> Vec<f64> {
        self.instances
            .iter()
            .map(|x| x.get(self.varied_feature))
            .collect()
    }
}

/// Perturbation set for feature `feature` around `x`.
///
/// Numeric: `x`, `x` with the feature at its min, at its max, then `n`
/// uniform draws from `[min, max]` (`n + 3` instances). Categorical: one
/// instance per level, `n` ignored; `x` itself is the instance carrying its
/// own level.
pub fn build_sample_set(
    space: &FeatureSpace,
    x: &Instance,
    feature: usize,
    n: usize,
    rng: &mut SeededRng,
) -> Result<SampleSet> {
    let spec = space.feature(feature)?;
    if x.len() != space.len() {
        return Err(Error::InvalidInstance(format!(
            "expected {} values, got {}",
            space.len(),
            x.len()
        )));
    }
    let instances = match &spec.kind {
        FeatureKind::Numeric { min, max } => {
            let mut set = Vec::with_capacity(n + 3);
            set.push(x.clone());
            set.push(x.with_value(feature, *min));
            set.push(x.with_value(feature, *max));
            for _ in 0..n {
                set.push(x.with_value(feature, rng.gen_range(*min..=*max)));
            }
            set
        }
        FeatureKind::Categorical { levels } => (0..levels.len())
            .map(|level| x.with_value(feature, level as f64))
            .collect(),
    };
    Ok(SampleSet {
        instances,
        varied_feature: feature,
        source: x.clone(),
    })
}

/// `grid_size` evenly spaced values of numeric feature `feature`, from min
/// to max inclusive, other features fixed at `x`.
pub fn ceteris_paribus_grid(
    space: &FeatureSpace,
    x: &Instance,
    feature: usize,
    grid_size: usize,
) -> Result<Vec<Instance>> {
    let spec = space.feature(feature)?;
    let (min, max) = spec
        .bounds()
        .ok_or_else(|| Error::CategoricalFeature(spec.name.clone()))?;
    if grid_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid size must be at least 2, got {grid_size}"
        )));
    }
    let last = (grid_size - 1) as f64;
    Ok((0..grid_size)
        .map(|k| {
            let v = if k + 1 == grid_size {
                max
            } else {
                min + (max - min) * (k as f64 / last)
            };
            x.with_value(feature, v)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeatureSpec;

    fn mixed_space() -> FeatureSpace {
        FeatureSpace::new(vec![
            FeatureSpec::numeric("a", 0.0, 1.0),
            FeatureSpec::categorical("b", vec!["a", "b", "c"]),
            FeatureSpec::numeric("c", -1.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn numeric_set_has_source_endpoints_and_draws() {
        let space = mixed_space();
        let x = Instance::new(vec![0.5, 1.0, 0.0]);
        let set = build_sample_set(&space, &x, 0, 2, &mut SeededRng::new(3)).unwrap();
        let v = set.varied_values();
        assert_eq!(v.len(), 5);
        assert_eq!(&v[..3], &[0.5, 0.0, 1.0]);
        assert!(v[3..].iter().all(|r| (0.0..=1.0).contains(r)));
    }

    #[test]
    fn zero_budget_numeric_set_is_source_and_endpoints() {
        let space = mixed_space();
        let x = Instance::new(vec![0.5, 1.0, 0.25]);
        let set = build_sample_set(&space, &x, 2, 0, &mut SeededRng::new(3)).unwrap();
        assert_eq!(set.varied_values(), vec![0.25, -1.0, 1.0]);
    }

    #[test]
    fn categorical_set_has_every_level_once() {
        let space = mixed_space();
        let x = Instance::new(vec![0.5, 2.0, 0.0]);
        let set = build_sample_set(&space, &x, 1, 50, &mut SeededRng::new(3)).unwrap();
        assert_eq!(set.varied_values(), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn invalid_feature_index() {
        let space = mixed_space();
        let x = Instance::new(vec![0.5, 2.0, 0.0]);
        assert!(matches!(
            build_sample_set(&space, &x, 3, 1, &mut SeededRng::new(0)),
            Err(Error::FeatureIndex { .. })
        ));
    }

    #[test]
    fn grids() {
        let space = mixed_space();
        let x = Instance::new(vec![0.3, 0.0, 0.0]);
        let vals = |f, g| -> Vec<f64> {
            ceteris_paribus_grid(&space, &x, f, g)
                .unwrap()
                .iter()
                .map(|i| i.get(f))
                .collect()
        };
        assert_eq!(vals(0, 3), vec![0.0, 0.5, 1.0]);
        assert_eq!(vals(0, 2), vec![0.0, 1.0]);
        assert_eq!(vals(2, 5), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(matches!(
            ceteris_paribus_grid(&space, &x, 1, 5),
            Err(Error::CategoricalFeature(_))
        ));
        assert!(ceteris_paribus_grid(&space, &x, 0, 1).is_err());
    }

    #[test]
    fn same_seed_same_draws() {
        let space = mixed_space();
        let x = Instance::new(vec![0.5, 1.0, 0.0]);
        let a = build_sample_set(&space, &x, 2, 20, &mut SeededRng::new(9)).unwrap();
        let b = build_sample_set(&space, &x, 2, 20, &mut SeededRng::new(9)).unwrap();
        assert_eq!(a, b);
        let c = build_sample_set(&space, &x, 2, 20, &mut SeededRng::new(10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|s| derive_seed(42, s)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(SeededRng::new(5).fork(2).seed(), derive_seed(5, 2));
    }
}
