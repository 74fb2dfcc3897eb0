//! Feature-map and sample-manifest storage.
//!
//! Maps are stored as 2D little-endian `float32` NPY arrays; manifests are
//! JSON Lines with one [`SampleRecord`] per line.

mod manifest;
mod npy;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

pub use manifest::{load_manifest, write_manifest, Label, SampleRecord, Split};

use crate::{Error, Result};

static CLAMPED_ENTRIES: AtomicUsize = AtomicUsize::new(0);

/// Total number of negative entries clamped to zero by [`load_feature_map`]
/// since process start.
pub fn clamped_entries() -> usize {
    CLAMPED_ENTRIES.load(Ordering::Relaxed)
}

/// Channel-summed activation grid of a shallow CNN layer.
///
/// Entries are finite and non-negative; storage is row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Argument(format!(
                "feature map must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::Argument(format!(
                "feature map {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Argument(format!(
                "feature map entries must be finite and non-negative, found {v}"
            )));
        }
        Ok(Self { rows, cols, values })
    }

    /// Builds a map from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Argument("ragged feature map rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Like [`FeatureMap::new`] but clamps negative entries to zero, returning
    /// how many were clamped.
    pub fn new_clamped(rows: usize, cols: usize, mut values: Vec<f64>) -> Result<(Self, usize)> {
        let mut clamped = 0;
        for v in values.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
                clamped += 1;
            }
        }
        Ok((Self::new(rows, cols, values)?, clamped))
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Multiplies every entry by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Argument(format!("scale factor must be > 0, got {factor}")));
        }
        Self::new(
            self.rows,
            self.cols,
            self.values.iter().map(|v| v * factor).collect(),
        )
    }
}

/// Reads a 2D NPY feature map. Negative entries are clamped to zero and
/// counted in [`clamped_entries`].
pub fn load_feature_map(path: impl AsRef<Path>) -> Result<FeatureMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let array = npy::decode(&bytes).map_err(|message| Error::format(path, message))?;
    if array.shape.len() != 2 {
        return Err(Error::format(
            path,
            format!("expected 2 dimensions, found {}", array.shape.len()),
        ));
    }
    let (rows, cols) = (array.shape[0], array.shape[1]);
    if rows == 0 || cols == 0 {
        return Err(Error::format(path, format!("empty shape ({rows}, {cols})")));
    }
    if array.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(path, "non-finite value in data"));
    }
    let (map, clamped) = FeatureMap::new_clamped(rows, cols, array.data)?;
    if clamped > 0 {
        CLAMPED_ENTRIES.fetch_add(clamped, Ordering::Relaxed);
        eprintln!(
            "warning: {}: clamped {clamped} negative entries to 0",
            path.display()
        );
    }
    Ok(map)
}

/// Writes `map` as a 2D little-endian `float32` NPY v1.0 file.
pub fn save_feature_map(map: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = npy::encode_f32(&[map.rows, map.cols], map.values());
    std::fs::write(path, bytes).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_small() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.npy");
        let map = FeatureMap::from_rows(&[vec![0.0, 2.0], vec![4.0, 4.0]]).unwrap();
        save_feature_map(&map, &path).unwrap();
        assert_eq!(load_feature_map(&path).unwrap(), map);
    }

    #[test]
    fn round_trip_degenerate_and_realistic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.npy");
        let one = FeatureMap::zeros(1, 1).unwrap();
        save_feature_map(&one, &path).unwrap();
        assert_eq!(load_feature_map(&path).unwrap(), one);

        // Values already representable in f32 survive bit-exactly.
        let values: Vec<f64> = (0..112 * 112)
            .map(|i| ((i * 7919 % 1013) as f32 / 17.0) as f64)
            .collect();
        let big = FeatureMap::new(112, 112, values).unwrap();
        let path = dir.path().join("big.npy");
        save_feature_map(&big, &path).unwrap();
        let back = load_feature_map(&path).unwrap();
        assert!(back
            .values()
            .iter()
            .zip(big.values())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn rejects_three_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.npy");
        std::fs::write(&path, npy::encode_f32(&[2, 2, 2], &[0.0; 8])).unwrap();
        let err = load_feature_map(&path).unwrap_err().to_string();
        assert!(err.contains("expected 2 dimensions"), "{err}");
    }

    #[test]
    fn clamps_negative_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("neg.npy");
        std::fs::write(&path, npy::encode_f32(&[1, 3], &[-1.0, 2.0, -0.5])).unwrap();
        let before = clamped_entries();
        let map = load_feature_map(&path).unwrap();
        assert_eq!(map.values(), &[0.0, 2.0, 0.0]);
        assert!(clamped_entries() >= before + 2);
    }

    #[test]
    fn write_to_missing_directory_fails() {
        let map = FeatureMap::zeros(2, 2).unwrap();
        let err = save_feature_map(&map, "/nonexistent-dir/x/m.npy").unwrap_err();
        assert!(matches!(err, Error::Write { .. }));
    }

    #[test]
    fn constructor_rejects_bad_values() {
        assert!(FeatureMap::new(1, 2, vec![1.0, -1.0]).is_err());
        assert!(FeatureMap::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(FeatureMap::new(0, 2, vec![]).is_err());
        assert!(FeatureMap::new(2, 2, vec![1.0]).is_err());
    }
}
