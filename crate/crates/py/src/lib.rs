//! Python bindings: feature-map I/O, featurization, the detector, metrics,
//! attribution and the synthetic corpus generator.

use std::path::PathBuf;

use patchspan::adnet::{self, ADConfig, TrainConfig};
use patchspan::ensemble::ThresholdSet;
use patchspan::explain;
use patchspan::featurize::{self, ChannelMask};
use patchspan::fmap_io::{self, Label, SampleRecord, Split};
use patchspan::gridclust::ClusterParams;
use patchspan::metrics::{self, Criterion, EffectFilter, ScoredSample};
use patchspan::synthgen::{self, SynthConfig};
use patchspan::Error;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Write { .. } => PyIOError::new_err(e.to_string()),
        e if e.is_usage() => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for patchspan::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn label(value: u8) -> PyResult<Label> {
    Label::from_u8(value).ok_or_else(|| PyValueError::new_err(format!("label must be 0 or 1, got {value}")))
}

/// Non-negative 2D activation map.
#[pyclass(name = "FeatureMap", module = "patchspan_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFeatureMap(patchspan::FeatureMap);

#[pymethods]
impl PyFeatureMap {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        patchspan::FeatureMap::from_rows(&rows).py().map(Self)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.rows(), self.0.cols())
    }

    fn max(&self) -> f64 {
        self.0.max()
    }

    fn scaled(&self, factor: f64) -> PyResult<Self> {
        self.0.scaled(factor).py().map(Self)
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        self.0.values().chunks(self.0.cols()).map(<[f64]>::to_vec).collect()
    }

    fn __repr__(&self) -> String {
        format!("FeatureMap({}x{})", self.0.rows(), self.0.cols())
    }
}

/// Channel-by-threshold clustering curves.
#[pyclass(name = "FeatureCurves", module = "patchspan_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyFeatureCurves(featurize::FeatureCurves);

#[pymethods]
impl PyFeatureCurves {
    #[new]
    #[pyo3(signature = (rows, preprocessed = true))]
    fn new(rows: Vec<Vec<f64>>, preprocessed: bool) -> PyResult<Self> {
        let len = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != len) {
            return Err(PyValueError::new_err("curve rows must have equal length"));
        }
        featurize::FeatureCurves::new(rows.len(), len, rows.concat(), preprocessed)
            .py()
            .map(Self)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.channels(), self.0.len())
    }

    #[getter]
    fn preprocessed(&self) -> bool {
        self.0.is_preprocessed()
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        (0..self.0.channels()).map(|c| self.0.row(c).to_vec()).collect()
    }

    fn __repr__(&self) -> String {
        format!("FeatureCurves({}x{})", self.0.channels(), self.0.len())
    }
}

/// The 1D-convolutional detector.
#[pyclass(name = "ADModel", module = "patchspan_py")]
struct PyModel(adnet::ADModel);

#[pymethods]
impl PyModel {
    /// Freshly initialized detector for ensemble size `ensemble_size`.
    #[new]
    #[pyo3(signature = (ensemble_size = 20, channels = "all", seed = 0))]
    fn new(ensemble_size: usize, channels: &str, seed: u64) -> PyResult<Self> {
        let mask = ChannelMask::parse(channels).py()?;
        adnet::init_model(&ADConfig::new(mask, ensemble_size, seed)).py().map(Self)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        adnet::load_model(path).py().map(Self)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        adnet::save_model(&self.0, path).py()
    }

    #[getter]
    fn ensemble_size(&self) -> usize {
        self.0.config.ensemble_size
    }

    #[getter]
    fn channels(&self) -> Vec<&'static str> {
        self.0.config.channel_mask.channels().into_iter().map(|c| c.name()).collect()
    }

    /// Detection score in [0, 1] for preprocessed curves.
    fn score(&self, curves: &PyFeatureCurves) -> PyResult<f64> {
        self.0.score(&curves.0).py()
    }

    /// Featurizes `map` at this model's thresholds and scores it.
    #[pyo3(signature = (map, eps = 1.0, min_pts = 4))]
    fn score_map(&self, map: &PyFeatureMap, eps: f64, min_pts: usize) -> PyResult<f64> {
        let thresholds = ThresholdSet::equidistant(self.0.config.ensemble_size).py()?;
        let params = ClusterParams::new(eps, min_pts).py()?;
        let curves = featurize::featurize_sample(&map.0, &thresholds, &params, self.0.config.channel_mask).py()?;
        self.0.score(&curves).py()
    }

    /// Trains in place on `(curves, label)` pairs and returns per-epoch stats.
    /// With `occ=True` the labels must all be 0.
    #[pyo3(signature = (dataset, lr = 1e-4, patience = 200, max_epochs = None, val_fraction = 0.2, occ = false, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        dataset: Vec<(PyFeatureCurves, u8)>,
        lr: f64,
        patience: usize,
        max_epochs: Option<usize>,
        val_fraction: f64,
        occ: bool,
        seed: u64,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let config = TrainConfig {
            lr,
            patience_epochs: patience,
            max_epochs,
            val_fraction,
            occ_mode: occ,
            seed,
            ..TrainConfig::default()
        };
        let data = dataset
            .into_iter()
            .map(|(c, l)| Ok((c.0, label(l)?)))
            .collect::<PyResult<Vec<_>>>()?;
        let model = self.0.clone();
        let (trained, history) = if occ {
            if data.iter().any(|(_, l)| l.is_attacked()) {
                return Err(PyValueError::new_err("one-class training takes clean samples only"));
            }
            let clean: Vec<_> = data.into_iter().map(|(c, _)| c).collect();
            adnet::train_occ(model, &clean, &config).py()?
        } else {
            adnet::train(model, &data, &config).py()?
        };
        self.0 = trained;
        history
            .epochs
            .iter()
            .map(|e| {
                let d = PyDict::new(py);
                d.set_item("epoch", e.epoch)?;
                d.set_item("train_loss", e.train_loss)?;
                d.set_item("val_loss", e.val_loss)?;
                d.set_item("val_accuracy", e.val_accuracy)?;
                Ok(d)
            })
            .collect()
    }

    /// Per-channel Shapley values against the all-zero input.
    #[pyo3(signature = (curves, exact = true, samples = 500, seed = 0))]
    fn explain<'py>(&self, py: Python<'py>, curves: &PyFeatureCurves, exact: bool, samples: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let a = if exact {
            explain::exact_shapley(&self.0, &curves.0, None)
        } else {
            explain::kernel_shap(&self.0, &curves.0, None, samples, seed)
        }
        .py()?;
        let d = PyDict::new(py);
        for (c, phi) in a.channels.iter().zip(&a.phi) {
            d.set_item(c.name(), phi)?;
        }
        d.set_item("score", a.full_score)?;
        d.set_item("baseline_score", a.baseline_score)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "ADModel(ensemble_size={}, channels={:?})",
            self.0.config.ensemble_size,
            self.channels()
        )
    }
}

#[pyfunction]
fn load_feature_map(path: PathBuf) -> PyResult<PyFeatureMap> {
    fmap_io::load_feature_map(path).py().map(PyFeatureMap)
}

#[pyfunction]
fn save_feature_map(map: &PyFeatureMap, path: PathBuf) -> PyResult<()> {
    fmap_io::save_feature_map(&map.0, path).py()
}

/// Records as dicts with keys `map_path`, `label`, `effective`, `patch_count`, `split`.
#[pyfunction]
fn load_manifest<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Vec<Bound<'py, PyDict>>> {
    fmap_io::load_manifest(path)
        .py()?
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("map_path", r.map_path)?;
            d.set_item("label", r.label.as_u8())?;
            d.set_item("effective", r.effective)?;
            d.set_item("patch_count", r.patch_count)?;
            d.set_item("split", r.split.as_str())?;
            Ok(d)
        })
        .collect()
}

type RecordTuple = (PathBuf, u8, String, Option<bool>, Option<u32>);
type RocPoints = Vec<(f64, f64, f64)>;

/// Writes a manifest from `(map_path, label, split, effective, patch_count)` tuples.
#[pyfunction]
fn write_manifest(path: PathBuf, records: Vec<RecordTuple>) -> PyResult<()> {
    let records = records
        .into_iter()
        .map(|(map_path, l, split, effective, patch_count)| {
            Ok(SampleRecord {
                map_path,
                label: label(l)?,
                effective,
                patch_count,
                split: split.parse::<Split>().map_err(PyValueError::new_err)?,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    fmap_io::write_manifest(path, &records).py()
}

/// Raw curves (4 rows: n_clusters, d_mean, d_std, n_imp) over `ensemble_size` thresholds.
#[pyfunction]
#[pyo3(signature = (map, ensemble_size = 20, eps = 1.0, min_pts = 4))]
fn raw_curves(map: &PyFeatureMap, ensemble_size: usize, eps: f64, min_pts: usize) -> PyResult<PyFeatureCurves> {
    let thresholds = ThresholdSet::equidistant(ensemble_size).py()?;
    let params = ClusterParams::new(eps, min_pts).py()?;
    Ok(PyFeatureCurves(featurize::curves(&map.0, &thresholds, &params)))
}

/// Detector input: preprocessed curves restricted to `channels`.
#[pyfunction]
#[pyo3(signature = (map, ensemble_size = 20, eps = 1.0, min_pts = 4, channels = "all"))]
fn featurize_map(map: &PyFeatureMap, ensemble_size: usize, eps: f64, min_pts: usize, channels: &str) -> PyResult<PyFeatureCurves> {
    let thresholds = ThresholdSet::equidistant(ensemble_size).py()?;
    let params = ClusterParams::new(eps, min_pts).py()?;
    let mask = ChannelMask::parse(channels).py()?;
    featurize::featurize_sample(&map.0, &thresholds, &params, mask).py().map(PyFeatureCurves)
}

fn scored(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<Vec<ScoredSample>> {
    if scores.len() != labels.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    scores.into_iter().zip(labels).map(|(s, l)| Ok(ScoredSample::new(s, label(l)?))).collect()
}

/// `(auc, [(threshold, fpr, tpr), ...])`.
#[pyfunction]
fn roc_curve(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<(f64, RocPoints)> {
    let roc = metrics::roc_curve(&scored(scores, labels)?).py()?;
    Ok((roc.auc, roc.points.iter().map(|p| (p.threshold, p.fpr, p.tpr)).collect()))
}

/// `(threshold, accuracy, detection_rate, fpr)` at the accuracy-maximizing threshold.
#[pyfunction]
fn best_threshold(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<(f64, f64, f64, f64)> {
    let m = metrics::best_threshold(&scored(scores, labels)?, Criterion::MaxAccuracy(EffectFilter::All)).py()?;
    Ok((m.threshold, m.accuracy, m.detection_rate, m.fpr))
}

/// Writes a synthetic corpus under `out_dir` and returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, n_clean = 100, n_attacked = 100, patch_counts = vec![1, 2, 4], rows = 64, cols = 64, seed = 0))]
fn gen_corpus(
    out_dir: PathBuf,
    n_clean: usize,
    n_attacked: usize,
    patch_counts: Vec<u32>,
    rows: usize,
    cols: usize,
    seed: u64,
) -> PyResult<PathBuf> {
    let config = SynthConfig { rows, cols, n_clean, n_attacked, patch_counts, seed, ..SynthConfig::default() };
    synthgen::gen_corpus(&config, out_dir).py()
}

#[pymodule]
fn patchspan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFeatureMap>()?;
    m.add_class::<PyFeatureCurves>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(load_feature_map, m)?)?;
    m.add_function(wrap_pyfunction!(save_feature_map, m)?)?;
    m.add_function(wrap_pyfunction!(load_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(write_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(raw_curves, m)?)?;
    m.add_function(wrap_pyfunction!(featurize_map, m)?)?;
    m.add_function(wrap_pyfunction!(roc_curve, m)?)?;
    m.add_function(wrap_pyfunction!(best_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(gen_corpus, m)?)?;
    Ok(())
}
