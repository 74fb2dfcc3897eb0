//! Seeded synthetic feature maps: a diffuse background, plus dense square
//! blobs on attacked maps.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fmap_io::{save_feature_map, write_manifest, Label, SampleRecord, Split};
use crate::{Error, FeatureMap, Result};

const PLACEMENT_TRIES: usize = 1000;
const JITTER: f64 = 0.05;
// keeps split assignment independent of the per-map streams
const SPLIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub rows: usize,
    pub cols: usize,
    pub n_clean: usize,
    pub n_attacked: usize,
    /// Cycled through for successive attacked maps.
    pub patch_counts: Vec<u32>,
    /// Blob side as a fraction of the smaller map dimension.
    pub blob_side_fraction: f64,
    /// Blob level as a multiple of the background maximum.
    pub blob_gain: f64,
    /// Number of 3x3 box-blur passes over the background noise.
    pub smoothness: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 64,
            n_clean: 100,
            n_attacked: 100,
            patch_counts: vec![1, 2, 4],
            blob_side_fraction: 0.12,
            blob_gain: 6.0,
            smoothness: 3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn blob_side(&self) -> usize {
        (self.blob_side_fraction * self.rows.min(self.cols) as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.rows == 0 || self.cols == 0 {
            return bad(format!("map size {}x{} must be positive", self.rows, self.cols));
        }
        if self.n_clean + self.n_attacked == 0 {
            return bad("corpus must contain at least one map".into());
        }
        if !(self.blob_side_fraction > 0.0 && self.blob_side_fraction < 0.5) {
            return bad(format!("blob side fraction {} must lie in (0, 0.5)", self.blob_side_fraction));
        }
        if self.blob_side() == 0 {
            return bad(format!("blob side rounds to zero on a {}x{} map", self.rows, self.cols));
        }
        if !(self.blob_gain > 0.0 && self.blob_gain.is_finite()) {
            return bad(format!("blob gain {} must be positive", self.blob_gain));
        }
        if self.patch_counts.is_empty() || self.patch_counts.contains(&0) {
            return bad("patch counts must be a non-empty list of positive integers".into());
        }
        Ok(())
    }
}

/// One generated map with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub map: FeatureMap,
    pub label: Label,
    pub patch_count: Option<u32>,
    /// Top-left corners of the blobs.
    pub blobs: Vec<(usize, usize)>,
    pub split: Split,
}

fn box_blur(field: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; field.len()];
    for r in 0..rows {
        for c in 0..cols {
            let (mut sum, mut n) = (0.0, 0usize);
            for rr in r.saturating_sub(1)..(r + 2).min(rows) {
                for cc in c.saturating_sub(1)..(c + 2).min(cols) {
                    sum += field[rr * cols + cc];
                    n += 1;
                }
            }
            out[r * cols + c] = sum / n as f64;
        }
    }
    out
}

fn place_blobs(config: &SynthConfig, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
    let side = config.blob_side();
    if side > config.rows || side > config.cols {
        return Err(Error::Generation(format!("blob side {side} exceeds the map")));
    }
    // corners at least two sides apart on some axis leave a gap of one side
    let apart = |a: (usize, usize), b: (usize, usize)| a.0.abs_diff(b.0) >= 2 * side || a.1.abs_diff(b.1) >= 2 * side;
    for _ in 0..PLACEMENT_TRIES {
        let mut blobs: Vec<(usize, usize)> = Vec::with_capacity(k);
        for _ in 0..k {
            let pos = (
                rng.random_range(0..=config.rows - side),
                rng.random_range(0..=config.cols - side),
            );
            if blobs.iter().all(|b| apart(*b, pos)) {
                blobs.push(pos);
            } else {
                break;
            }
        }
        if blobs.len() == k {
            return Ok(blobs);
        }
    }
    Err(Error::Generation(format!(
        "could not place {k} separated {side}x{side} blobs on a {}x{} map in {PLACEMENT_TRIES} tries",
        config.rows, config.cols
    )))
}

/// Generates map number `stream` of a corpus. Attacked maps carry `k` blobs.
/// A background that clips to all zeros uses 1 as its reference maximum.
pub fn gen_map(config: &SynthConfig, attacked: bool, k: u32, stream: u64) -> Result<(FeatureMap, Vec<(usize, usize)>)> {
    config.validate()?;
    if attacked && k == 0 {
        return Err(Error::Argument("attacked maps need at least one patch".into()));
    }
    let (rows, cols) = (config.rows, config.cols);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);

    let mut field: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    for _ in 0..config.smoothness {
        field = box_blur(&field, rows, cols);
    }
    field.iter_mut().for_each(|v| *v = v.max(0.0));

    let mut blobs = Vec::new();
    if attacked {
        let bg_max = field.iter().copied().fold(0.0, f64::max);
        let level = config.blob_gain * if bg_max > 0.0 { bg_max } else { 1.0 };
        let side = config.blob_side();
        blobs = place_blobs(config, k as usize, &mut rng)?;
        for &(r0, c0) in &blobs {
            for r in r0..r0 + side {
                for c in c0..c0 + side {
                    field[r * cols + c] = level * (1.0 + rng.random_range(0.0..JITTER));
                }
            }
        }
    }
    Ok((FeatureMap::new(rows, cols, field)?, blobs))
}

/// Stratified 60/20/20 assignment for `n` maps of one class.
fn class_splits(n: usize, rng: &mut ChaCha8Rng) -> Vec<Split> {
    let n_train = (0.6 * n as f64).round() as usize;
    let n_val = ((0.2 * n as f64).round() as usize).min(n - n_train);
    let mut splits: Vec<Split> = (0..n)
        .map(|i| match i {
            i if i < n_train => Split::Train,
            i if i < n_train + n_val => Split::Val,
            _ => Split::Test,
        })
        .collect();
    splits.shuffle(rng);
    splits
}

/// All maps of the corpus in memory: clean maps first, then attacked maps.
pub fn gen_samples(config: &SynthConfig) -> Result<Vec<SynthSample>> {
    config.validate()?;
    let mut split_rng = ChaCha8Rng::seed_from_u64(config.seed);
    split_rng.set_stream(SPLIT_STREAM);
    let clean_splits = class_splits(config.n_clean, &mut split_rng);
    let attacked_splits = class_splits(config.n_attacked, &mut split_rng);

    let mut out = Vec::with_capacity(config.n_clean + config.n_attacked);
    for (i, split) in clean_splits.into_iter().enumerate() {
        let (map, blobs) = gen_map(config, false, 0, i as u64)?;
        out.push(SynthSample { map, label: Label::Clean, patch_count: None, blobs, split });
    }
    for (j, split) in attacked_splits.into_iter().enumerate() {
        let k = config.patch_counts[j % config.patch_counts.len()];
        let (map, blobs) = gen_map(config, true, k, (config.n_clean + j) as u64)?;
        out.push(SynthSample { map, label: Label::Attacked, patch_count: Some(k), blobs, split });
    }
    Ok(out)
}

/// Writes every map under `dir/maps/` and the manifest to `dir/manifest.jsonl`.
/// Returns the manifest path.
pub fn gen_corpus(config: &SynthConfig, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let maps_dir = dir.join("maps");
    std::fs::create_dir_all(&maps_dir).map_err(|source| Error::Write {
        path: maps_dir.clone(),
        source,
    })?;
    let mut records = Vec::new();
    for (i, s) in gen_samples(config)?.into_iter().enumerate() {
        let path = maps_dir.join(format!("{i:06}.npy"));
        save_feature_map(&s.map, &path)?;
        records.push(SampleRecord {
            map_path: path,
            label: s.label,
            effective: None,
            patch_count: s.patch_count,
            split: s.split,
        });
    }
    let manifest = dir.join("manifest.jsonl");
    write_manifest(&manifest, &records)?;
    Ok(manifest)
}
