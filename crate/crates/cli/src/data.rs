use std::path::{Path, PathBuf};

use patchspan::ensemble::ThresholdSet;
use patchspan::featurize::{featurize_sample, ChannelMask, FeatureCurves};
use patchspan::fmap_io::{load_feature_map, load_manifest, SampleRecord, Split};
use patchspan::gridclust::ClusterParams;
use patchspan::{Error, Result};
use rayon::prelude::*;

use crate::args::ClusterArgs;

pub fn cluster_params(args: &ClusterArgs) -> Result<ClusterParams> {
    ClusterParams::new(args.eps, args.min_pts)
}

/// Records of the named splits; `all` keeps everything.
pub fn records(manifest: &Path, splits: &[&str]) -> Result<Vec<SampleRecord>> {
    let wanted: Vec<Option<Split>> = splits
        .iter()
        .map(|s| match *s {
            "all" => Ok(None),
            other => other
                .parse::<Split>()
                .map(Some)
                .map_err(Error::Argument),
        })
        .collect::<Result<_>>()?;
    let all = load_manifest(manifest)?;
    let kept: Vec<SampleRecord> = all
        .into_iter()
        .filter(|r| wanted.iter().any(|w| w.is_none_or(|s| s == r.split)))
        .collect();
    if kept.is_empty() {
        return Err(Error::Argument(format!(
            "{} has no records in split {}",
            manifest.display(),
            splits.join("/")
        )));
    }
    Ok(kept)
}

/// Loads and featurizes every path in parallel, keeping input order.
pub fn featurize_paths(
    paths: &[PathBuf],
    thresholds: &ThresholdSet,
    params: &ClusterParams,
    mask: ChannelMask,
) -> Result<Vec<FeatureCurves>> {
    paths
        .par_iter()
        .map(|p| featurize_sample(&load_feature_map(p)?, thresholds, params, mask))
        .collect()
}

pub fn featurize_records(
    records: &[SampleRecord],
    thresholds: &ThresholdSet,
    params: &ClusterParams,
    mask: ChannelMask,
) -> Result<Vec<FeatureCurves>> {
    let paths: Vec<PathBuf> = records.iter().map(|r| r.map_path.clone()).collect();
    featurize_paths(&paths, thresholds, params, mask)
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(path) => std::fs::write(path, text).map_err(|source| Error::Write {
            path: path.into(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
