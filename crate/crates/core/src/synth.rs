//! Synthetic datasets with a known attribute→feature block structure.
//!
//! Attribute `i` owns feature block `[i·g, (i+1)·g)`; the last `e` dims hold a
//! per-class environment vector. Seen classes get ids `0..K_s`, unseen ones
//! `K_s..K_s+K_u`.

use std::collections::{BTreeSet, HashSet};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{AttributeTable, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::relation::RelationMatrix;

const MAX_REDRAWS: usize = 1000;
const TEMPLATE_JITTER: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub k_s: usize,
    pub k_u: usize,
    /// Attribute count.
    pub d: usize,
    /// Feature dims per attribute.
    pub g: usize,
    /// Environment dims.
    pub e: usize,
    /// Samples per class.
    pub n_c: usize,
    pub sigma_noise: f64,
    pub attr_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            k_s: 20,
            k_u: 5,
            d: 12,
            g: 8,
            e: 32,
            n_c: 30,
            sigma_noise: 0.3,
            attr_noise: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn p(&self) -> usize {
        self.d * self.g + self.e
    }

    pub fn k(&self) -> usize {
        self.k_s + self.k_u
    }

    fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.k_s < 2 {
            return fail(format!("k_s must be at least 2, got {}", self.k_s));
        }
        if self.k_u < 1 {
            return fail("k_u must be at least 1".into());
        }
        if self.d < 1 || self.g < 1 || self.n_c < 1 {
            return fail("d, g and n_c must be positive".into());
        }
        if !(self.sigma_noise >= 0.0 && self.sigma_noise.is_finite()) {
            return fail(format!("sigma_noise must be a nonnegative number, got {}", self.sigma_noise));
        }
        if !(self.attr_noise >= 0.0 && self.attr_noise.is_finite()) {
            return fail(format!("attr_noise must be a nonnegative number, got {}", self.attr_noise));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub dataset: Dataset,
    pub attrs: AttributeTable,
    pub split: SplitSpec,
    pub truth: RelationMatrix,
    /// Noise-free class centers, one row per class.
    pub centers: Array2<f64>,
}

/// Every row distinct, and every attribute takes both values among the seen
/// classes (so each unseen value is carried by some seen class).
fn acceptable(binary: &Array2<u8>, k_s: usize) -> bool {
    let rows: HashSet<Vec<u8>> = binary.rows().into_iter().map(|r| r.to_vec()).collect();
    if rows.len() != binary.nrows() {
        return false;
    }
    (0..binary.ncols()).all(|i| {
        let values: BTreeSet<u8> = (0..k_s).map(|c| binary[[c, i]]).collect();
        values.len() == 2
    })
}

fn draw_binary(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Array2<u8>> {
    for _ in 0..MAX_REDRAWS {
        let b = Array2::from_shape_fn((config.k(), config.d), |_| u8::from(rng.gen_bool(0.5)));
        if acceptable(&b, config.k_s) {
            return Ok(b);
        }
    }
    Err(Error::Config(format!(
        "no attribute draw satisfied the distinctness and coverage constraints after {MAX_REDRAWS} attempts"
    )))
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (k, d, g, p) = (config.k(), config.d, config.g, config.p());

    let binary = draw_binary(config, &mut rng)?;

    // templates[[i, v, t]]
    let mut templates = vec![0.0; d * 2 * g];
    for i in 0..d {
        for v in 0..2 {
            let sign = if v == 1 { 1.0 } else { -1.0 };
            for t in 0..g {
                templates[(i * 2 + v) * g + t] = sign + rng.gen_range(-TEMPLATE_JITTER..=TEMPLATE_JITTER);
            }
        }
    }

    let mut centers = Array2::zeros((k, p));
    for c in 0..k {
        for i in 0..d {
            let v = binary[[c, i]] as usize;
            for t in 0..g {
                centers[[c, i * g + t]] = templates[(i * 2 + v) * g + t];
            }
        }
        for j in d * g..p {
            centers[[c, j]] = rng.sample::<f64, _>(StandardNormal);
        }
    }

    let n = k * config.n_c;
    let mut features = Array2::zeros((n, p));
    let mut labels = Vec::with_capacity(n);
    for c in 0..k {
        for s in 0..config.n_c {
            let row = c * config.n_c + s;
            for j in 0..p {
                let noise = if config.sigma_noise > 0.0 {
                    config.sigma_noise * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                features[[row, j]] = centers[[c, j]] + noise;
            }
            labels.push(c);
        }
    }

    let continuous = binary.mapv(|b| {
        let jitter = if config.attr_noise > 0.0 {
            rng.gen_range(-config.attr_noise..=config.attr_noise)
        } else {
            0.0
        };
        (f64::from(b) + jitter).clamp(0.0, 1.0)
    });

    let names: Vec<String> = (0..k).map(|c| format!("class{c}")).collect();
    let dataset = Dataset::new(features, labels, names.clone())?;
    let attrs = AttributeTable::new(continuous, binary, names)?;
    let split = SplitSpec::new((0..config.k_s).collect(), (config.k_s..k).collect())?;
    let truth = RelationMatrix::new(
        Array2::from_shape_fn((d, p), |(i, j)| u8::from(j / g == i && j < d * g)),
        BTreeSet::new(),
    )?;
    Ok(SynthData {
        dataset,
        attrs,
        split,
        truth,
        centers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64, sigma: f64) -> SynthConfig {
        SynthConfig {
            k_s: 6,
            k_u: 2,
            d: 4,
            g: 3,
            e: 5,
            n_c: 4,
            sigma_noise: sigma,
            attr_noise: 0.0,
            seed,
        }
    }

    #[test]
    fn zero_noise_samples_equal_centers() {
        let s = generate(&small(1, 0.0)).unwrap();
        for (r, &c) in s.dataset.labels().iter().enumerate() {
            assert_eq!(s.dataset.row(r), s.centers.row(c));
        }
    }

    #[test]
    fn truth_rows_are_blocks() {
        let cfg = small(2, 0.3);
        let s = generate(&cfg).unwrap();
        assert_eq!(s.truth.p(), cfg.p());
        for i in 0..cfg.d {
            assert_eq!(s.truth.relevant_dims(i), (i * cfg.g..(i + 1) * cfg.g).collect::<Vec<_>>());
        }
        assert_eq!(s.truth.environment_dims(), (cfg.d * cfg.g..cfg.p()).collect::<Vec<_>>());
    }

    #[test]
    fn centers_differ_only_in_blocks_of_differing_attributes() {
        let cfg = small(3, 0.0);
        let s = generate(&cfg).unwrap();
        for a in 0..cfg.k() {
            for b in 0..cfg.k() {
                let diff = s.attrs.differing_attributes(a, b);
                for i in 0..cfg.d {
                    let same = (i * cfg.g..(i + 1) * cfg.g).all(|j| s.centers[[a, j]] == s.centers[[b, j]]);
                    assert_eq!(same, !diff.contains(&i));
                }
            }
        }
    }

    #[test]
    fn constraints_hold_and_split_is_ordered() {
        for seed in 0..20 {
            let cfg = small(seed, 0.1);
            let s = generate(&cfg).unwrap();
            assert!(acceptable(s.attrs.binary(), cfg.k_s));
            assert_eq!(s.split.seen().iter().copied().collect::<Vec<_>>(), (0..6).collect::<Vec<_>>());
            assert_eq!(s.split.unseen().iter().copied().collect::<Vec<_>>(), vec![6, 7]);
            s.split.validate(&s.attrs, &s.dataset).unwrap();
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = generate(&small(7, 0.2)).unwrap();
        let b = generate(&small(7, 0.2)).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.attrs, b.attrs);
        let c = generate(&small(8, 0.2)).unwrap();
        assert_ne!(a.attrs.binary(), c.attrs.binary());
    }

    #[test]
    fn continuous_attributes_clip_to_unit_interval() {
        let cfg = SynthConfig {
            attr_noise: 0.4,
            ..small(4, 0.0)
        };
        let s = generate(&cfg).unwrap();
        assert!(s.attrs.continuous().iter().all(|v| (0.0..=1.0).contains(v)));
        let zero = generate(&small(4, 0.0)).unwrap();
        assert_eq!(zero.attrs.continuous(), &zero.attrs.binary().mapv(f64::from));
    }

    #[test]
    fn impossible_constraints_are_a_config_error() {
        // Four classes cannot have distinct rows over one attribute.
        let cfg = SynthConfig {
            k_s: 3,
            k_u: 1,
            d: 1,
            ..small(0, 0.0)
        };
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        assert!(matches!(generate(&SynthConfig { k_s: 1, ..small(0, 0.0) }), Err(Error::Config(_))));
    }
}
