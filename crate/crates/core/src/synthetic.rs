//! Seeded generator of trend, seasonal and noise mixtures used as a desk-scale corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{subsample_variants, Dataset, TimeSeries};
use crate::error::Result;

pub const NUM_FAMILIES: usize = 19;
/// Subsampling fractions; together with the full set each family yields six datasets.
pub const VARIANT_FRACTIONS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 0.9];

/// Parameters of one synthetic family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub name: String,
    pub num_series: usize,
    pub length: usize,
    pub horizon: usize,
    pub season_length: usize,
    pub level: f64,
    /// Per-step drift as a fraction of the level.
    pub trend: f64,
    /// Seasonal amplitude as a fraction of the level.
    pub seasonal: f64,
    /// Observation noise as a fraction of the level.
    pub noise: f64,
    /// Random-walk innovation as a fraction of the level.
    pub walk: f64,
}

// (season, horizon, trend, seasonal, noise, walk): a coarse grid so that the
// families favour different forecasters
const ARCHETYPES: [(usize, usize, f64, f64, f64, f64); 8] = [
    (1, 6, 0.0, 0.0, 0.02, 0.03),  // random walk
    (1, 6, 0.01, 0.0, 0.02, 0.0),  // linear trend
    (12, 12, 0.0, 0.3, 0.03, 0.0), // monthly seasonal
    (4, 4, 0.005, 0.2, 0.03, 0.0), // quarterly seasonal with trend
    (1, 8, 0.0, 0.0, 0.08, 0.0),   // noisy level
    (7, 7, 0.0, 0.25, 0.05, 0.01), // weekly seasonal, wandering
    (12, 6, 0.008, 0.15, 0.05, 0.0),
    (1, 4, -0.004, 0.0, 0.03, 0.01),
];

/// The family specifications for `seed`.
pub fn family_specs(seed: u64) -> Vec<FamilySpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..NUM_FAMILIES)
        .map(|i| {
            let (season, horizon, trend, seasonal, noise, walk) = ARCHETYPES[i % ARCHETYPES.len()];
            let jitter = |rng: &mut ChaCha8Rng, v: f64| v * rng.random_range(0.6..1.4);
            FamilySpec {
                name: format!("synth{i:02}"),
                num_series: rng.random_range(6..=16),
                length: rng.random_range(3..=8) * season.max(12) + 2 * horizon,
                horizon,
                season_length: season,
                level: rng.random_range(20.0..500.0),
                trend: jitter(&mut rng, trend),
                seasonal: jitter(&mut rng, seasonal),
                noise: jitter(&mut rng, noise),
                walk: jitter(&mut rng, walk),
            }
        })
        .collect()
}

/// Full dataset of one family. Series are shifted up when needed so every value is at least 1.
pub fn generate_family(spec: &FamilySpec, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut series = Vec::with_capacity(spec.num_series);
    for s in 0..spec.num_series {
        let level = spec.level * rng.random_range(0.5..1.5);
        let phase = rng.random_range(0..spec.season_length.max(1));
        let mut walk = 0.0;
        let mut values: Vec<f64> = (0..spec.length)
            .map(|t| {
                walk += spec.walk * level * unit.sample(&mut rng);
                let season = if spec.season_length > 1 {
                    let angle = 2.0 * std::f64::consts::PI * ((t + phase) % spec.season_length) as f64
                        / spec.season_length as f64;
                    spec.seasonal * level * angle.sin()
                } else {
                    0.0
                };
                level + spec.trend * level * t as f64 + season + walk + spec.noise * level * unit.sample(&mut rng)
            })
            .collect();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if min < 1.0 {
            values.iter_mut().for_each(|v| *v += 1.0 - min);
        }
        series.push(TimeSeries::new(format!("{}_s{s:02}", spec.name), values)?);
    }
    Dataset::new(&spec.name, series, spec.horizon, spec.season_length, &spec.name)
}

/// Every family with its subsampled variants: full set first, then one per fraction.
pub fn demo_corpus(seed: u64) -> Result<Vec<Dataset>> {
    let mut out = Vec::with_capacity(NUM_FAMILIES * (VARIANT_FRACTIONS.len() + 1));
    for (i, spec) in family_specs(seed).iter().enumerate() {
        let family_seed = seed.wrapping_add(1 + i as u64);
        let full = generate_family(spec, family_seed)?;
        let variants = subsample_variants(&full, &VARIANT_FRACTIONS, family_seed)?;
        out.push(full);
        out.extend(variants);
    }
    Ok(out)
}
