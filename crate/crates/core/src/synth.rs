//! Deterministic synthetic flood scenarios.
//!
//! Elevation is a sum of Gaussian hills rescaled to `[0, 100]` metres. The
//! flood truth is every pixel reachable from the global elevation minimum
//! through 4-neighbours at or below the water level, so low basins cut off
//! by higher ground stay dry. Band `b` is
//! `alpha_b * truth + beta_b * elevation / 100 + N(0, noise_sigma)` with the
//! coefficients in [`BAND_COEFFICIENTS`], cycling for more than three bands.
//!
//! All randomness comes from one ChaCha8 stream (a counter-based generator
//! with a 64-bit block counter) seeded from `seed`, consumed in a fixed
//! order: hills, then feature noise, then label sampling.

use std::collections::VecDeque;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{FeatureStack, LabelMap, SparseLabel, SparseLabels};

/// `(alpha, beta)` per band: response to flooding and to normalised
/// elevation.
pub const BAND_COEFFICIENTS: [(f32, f32); 3] = [(1.0, 0.5), (0.6, -0.8), (-0.8, 0.3)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub n_bumps: usize,
    pub water_level: f64,
    pub noise_sigma: f64,
    pub n_sparse_labels: usize,
    pub bands: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            rows: 128,
            cols: 128,
            seed: 42,
            n_bumps: 12,
            water_level: 30.0,
            noise_sigma: 0.3,
            n_sparse_labels: 8,
            bands: 3,
        }
    }
}

/// Band noise of the comparison benchmark, high enough that the spectral
/// bands alone misclassify a sizeable share of pixels.
pub const BENCHMARK_NOISE: f64 = 1.5;

impl ScenarioConfig {
    /// The 128 x 128, 8-label comparison scenario for one seed.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            seed,
            noise_sigma: BENCHMARK_NOISE,
            ..Self::default()
        }
    }

    /// Reads the generator keys of a flat TOML file; other keys are ignored.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.bands == 0 {
            return Err(Error::Config("rows, cols and bands must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma {} must be >= 0", self.noise_sigma)));
        }
        if !self.water_level.is_finite() {
            return Err(Error::Config("water_level must be finite".into()));
        }
        if self.n_sparse_labels == 0 || self.n_sparse_labels > self.rows * self.cols {
            return Err(Error::Config(format!(
                "n_sparse_labels must be in 1..={}",
                self.rows * self.cols
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub features: FeatureStack,
    pub truth: LabelMap,
    pub sparse: SparseLabels,
    /// Set when the water level sits below the lowest pixel.
    pub empty_flood: bool,
}

pub fn generate(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let (rows, cols) = (config.rows, config.cols);
    let n = rows * cols;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let elevation = hills(config, &mut rng);
    let lowest = elevation
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty raster");
    let water = config.water_level as f32;
    let empty_flood = elevation[lowest] > water;
    let flooded = if empty_flood {
        vec![false; n]
    } else {
        flood_fill(&elevation, rows, cols, lowest, water)
    };

    let noise = Normal::new(0.0, config.noise_sigma).expect("sigma validated");
    let mut values = Vec::with_capacity(n * config.bands);
    for b in 0..config.bands {
        let (alpha, beta) = BAND_COEFFICIENTS[b % BAND_COEFFICIENTS.len()];
        for p in 0..n {
            let t = if flooded[p] { 1.0 } else { 0.0 };
            let eps = noise.sample(&mut rng) as f32;
            values.push(alpha * t + beta * elevation[p] / 100.0 + eps);
        }
    }

    let sparse = sample_labels(&flooded, rows, cols, config.n_sparse_labels, &mut rng)?;
    let truth = LabelMap::new(rows, cols, flooded.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect())?;
    Ok(Scenario {
        features: FeatureStack::new(rows, cols, config.bands, values, elevation)?,
        truth,
        sparse,
        empty_flood,
    })
}

fn hills(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let (rows, cols) = (config.rows, config.cols);
    let extent = rows.max(cols) as f64;
    let bumps: Vec<(f64, f64, f64, f64)> = (0..config.n_bumps)
        .map(|_| {
            let r = rng.random_range(0.0..rows as f64);
            let c = rng.random_range(0.0..cols as f64);
            let amp = rng.random_range(0.5..1.5);
            let sigma = rng.random_range(0.08..0.25) * extent;
            (r, c, amp, sigma)
        })
        .collect();
    let mut raw = vec![0.0f64; rows * cols];
    for (p, z) in raw.iter_mut().enumerate() {
        let (r, c) = ((p / cols) as f64, (p % cols) as f64);
        *z = bumps
            .iter()
            .map(|&(br, bc, amp, s)| {
                let d2 = (r - br).powi(2) + (c - bc).powi(2);
                amp * (-d2 / (2.0 * s * s)).exp()
            })
            .sum();
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    raw.iter()
        .map(|&z| if span > 0.0 { (100.0 * (z - lo) / span) as f32 } else { 0.0 })
        .collect()
}

fn flood_fill(elevation: &[f32], rows: usize, cols: usize, start: usize, water: f32) -> Vec<bool> {
    let mut flooded = vec![false; rows * cols];
    let mut queue = VecDeque::from([start]);
    flooded[start] = true;
    while let Some(p) = queue.pop_front() {
        let (r, c) = (p / cols, p % cols);
        let neighbours = [
            (r > 0).then(|| p - cols),
            (r + 1 < rows).then(|| p + cols),
            (c > 0).then(|| p - 1),
            (c + 1 < cols).then(|| p + 1),
        ];
        for q in neighbours.into_iter().flatten() {
            if !flooded[q] && elevation[q] <= water {
                flooded[q] = true;
                queue.push_back(q);
            }
        }
    }
    flooded
}

/// Uniform sample without replacement, patched so that both classes appear
/// when at least two labels are requested and both exist.
fn sample_labels(
    flooded: &[bool],
    rows: usize,
    cols: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SparseLabels> {
    let n = flooded.len();
    let mut picked: Vec<usize> = index::sample(rng, n, count).into_vec();
    if count >= 2 {
        for want in [true, false] {
            if picked.iter().any(|&p| flooded[p] == want) {
                continue;
            }
            let pool: Vec<usize> = (0..n).filter(|&p| flooded[p] == want).collect();
            if pool.is_empty() {
                continue;
            }
            // replace the last pick of the majority class
            let slot = picked.iter().rposition(|&p| flooded[p] != want).expect("count >= 2");
            picked[slot] = pool[rng.random_range(0..pool.len())];
        }
    }
    let entries = picked
        .into_iter()
        .map(|p| SparseLabel {
            row: p / cols,
            col: p % cols,
            flood: flooded[p],
        })
        .collect();
    SparseLabels::new(entries, rows, cols)
}

/// Config plus summary statistics, written next to every generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: ScenarioConfig,
    pub generator: String,
    pub flood_fraction: f64,
    pub elevation_min: f64,
    pub elevation_max: f64,
    pub n_flood_labels: usize,
    pub n_dry_labels: usize,
    pub empty_flood: bool,
}

pub fn describe(config: &ScenarioConfig, scenario: &Scenario) -> Provenance {
    let truth = scenario.truth.values();
    let elevation = scenario.features.elevation();
    let n_flood_labels = scenario.sparse.entries().iter().filter(|e| e.flood).count();
    Provenance {
        config: config.clone(),
        generator: "gaussian-hills/flood-fill; rng ChaCha8 seeded via seed_from_u64".into(),
        flood_fraction: truth.iter().sum::<f64>() / truth.len() as f64,
        elevation_min: elevation.iter().copied().fold(f32::INFINITY, f32::min) as f64,
        elevation_max: elevation.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64,
        n_flood_labels,
        n_dry_labels: scenario.sparse.len() - n_flood_labels,
        empty_flood: scenario.empty_flood,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_seed_is_reproducible() {
        let cfg = ScenarioConfig::default();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.features.to_bytes(), b.features.to_bytes());
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.sparse, b.sparse);
        let other = generate(&ScenarioConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.features.to_bytes(), other.features.to_bytes());
    }

    #[test]
    fn everything_floods_above_the_peaks() {
        let cfg = ScenarioConfig {
            rows: 16,
            cols: 16,
            water_level: 101.0,
            noise_sigma: 0.0,
            ..Default::default()
        };
        let s = generate(&cfg).unwrap();
        assert!(s.truth.values().iter().all(|&t| t == 1.0));
        for (b, &(alpha, beta)) in BAND_COEFFICIENTS.iter().enumerate() {
            for (v, e) in s.features.band(b).iter().zip(s.features.elevation()) {
                assert_eq!(*v, alpha + beta * e / 100.0);
            }
        }
    }

    #[test]
    fn dry_world_is_flagged() {
        let cfg = ScenarioConfig { rows: 8, cols: 8, water_level: -1.0, ..Default::default() };
        let s = generate(&cfg).unwrap();
        assert!(s.empty_flood);
        assert!(s.truth.values().iter().all(|&t| t == 0.0));
    }

    #[test]
    fn flood_respects_elevation_flow() {
        let s = generate(&ScenarioConfig::default()).unwrap();
        let (rows, cols) = (s.truth.rows(), s.truth.cols());
        let elev = s.features.elevation();
        let truth = s.truth.values();
        let mut violations = 0;
        for r in 0..rows {
            for c in 0..cols {
                let a = r * cols + c;
                for b in [(c + 1 < cols).then(|| a + 1), (r + 1 < rows).then(|| a + cols)].into_iter().flatten() {
                    for (hi, lo) in [(a, b), (b, a)] {
                        if truth[hi] == 1.0 && elev[lo] <= elev[hi] && truth[lo] == 0.0 {
                            violations += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(violations, 0);
        assert!(truth
            .iter()
            .zip(elev)
            .all(|(&t, &e)| t == 0.0 || e as f64 <= ScenarioConfig::default().water_level));
    }

    #[test]
    fn labels_cover_both_classes() {
        for seed in 0..20 {
            let cfg = ScenarioConfig { seed, n_sparse_labels: 2, rows: 32, cols: 32, ..Default::default() };
            let s = generate(&cfg).unwrap();
            let p = describe(&cfg, &s);
            if p.flood_fraction > 0.0 && p.flood_fraction < 1.0 {
                assert_eq!((p.n_flood_labels, p.n_dry_labels), (1, 1), "seed {seed}");
            }
        }
    }

    #[test]
    fn provenance_round_trip() {
        let cfg = ScenarioConfig { rows: 24, cols: 20, seed: 7, ..Default::default() };
        let s = generate(&cfg).unwrap();
        let record = describe(&cfg, &s);
        assert!((0.0..=1.0).contains(&record.flood_fraction));
        let json = serde_json::to_string(&record).unwrap();
        assert!(json.contains("\"seed\":7"));
        let back: Provenance = serde_json::from_str(&json).unwrap();
        assert_eq!(generate(&back.config).unwrap(), s);
    }

    #[test]
    fn invalid_configs() {
        assert!(generate(&ScenarioConfig { n_sparse_labels: 0, ..Default::default() }).is_err());
        assert!(generate(&ScenarioConfig { noise_sigma: -1.0, ..Default::default() }).is_err());
        assert!(generate(&ScenarioConfig { rows: 0, ..Default::default() }).is_err());
    }
}
