//! Python bindings: windows, encoders, heads and the metric helpers.

use std::path::PathBuf;

use harssl::augment::AugmentConfig;
use harssl::encoder::{pretrain as pretrain_encoder, EncoderConfig, FrozenEncoder, PretrainConfig, PretrainSinks};
use harssl::evalkit::{apply_mapping, LabelMapping};
use harssl::head::{predict, smooth_logits as smooth, SmoothingConfig};
use harssl::ingest::synth::{synth_corpus, SynthSpec};
use harssl::ingest::{cache, windows_from_series, WindowingConfig};
use harssl::pairing::{CorpusIndex, PairingConfig};
use harssl::{Error, ErrorCategory};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e.category() {
        ErrorCategory::Io => PyIOError::new_err(e.to_string()),
        ErrorCategory::Numeric => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Ten seconds of 30 Hz three-axis acceleration in G.
#[pyclass(name = "Window", from_py_object)]
#[derive(Clone)]
struct PyWindow {
    inner: harssl::ingest::Window,
}

#[pymethods]
impl PyWindow {
    #[new]
    #[pyo3(signature = (subject_id, start_time, samples, label=None))]
    fn new(subject_id: String, start_time: f64, samples: Vec<[f32; 3]>, label: Option<i32>) -> Self {
        PyWindow {
            inner: harssl::ingest::Window {
                subject_id,
                start_time,
                samples: samples.concat(),
                label,
            },
        }
    }

    #[getter]
    fn subject_id(&self) -> String {
        self.inner.subject_id.clone()
    }

    #[getter]
    fn start_time(&self) -> f64 {
        self.inner.start_time
    }

    #[getter]
    fn label(&self) -> Option<i32> {
        self.inner.label
    }

    #[getter]
    fn samples(&self) -> Vec<[f32; 3]> {
        self.inner.samples.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Window(subject_id={:?}, start_time={}, label={:?}, len={})",
            self.inner.subject_id,
            self.inner.start_time,
            self.inner.label,
            self.inner.len()
        )
    }
}

fn unwrap_windows(windows: Vec<PyWindow>) -> Vec<harssl::ingest::Window> {
    windows.into_iter().map(|w| w.inner).collect()
}

/// A frozen, pre-trained window encoder.
#[pyclass(name = "Encoder", from_py_object)]
#[derive(Clone)]
struct PyEncoder {
    inner: FrozenEncoder,
}

#[pymethods]
impl PyEncoder {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyEncoder {
            inner: FrozenEncoder::load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    #[getter]
    fn embedding_dim(&self) -> usize {
        self.inner.embedding_dim()
    }

    fn embed(&self, py: Python<'_>, windows: Vec<PyWindow>) -> PyResult<Vec<Vec<f32>>> {
        let windows = unwrap_windows(windows);
        let out = py.detach(|| self.inner.embed(&windows)).map_err(to_py)?;
        Ok(out.into_iter().map(|e| e.0).collect())
    }
}

/// A trained activity head.
#[pyclass(name = "Head", from_py_object)]
#[derive(Clone)]
struct PyHead {
    inner: harssl::head::Head,
}

#[pymethods]
impl PyHead {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyHead {
            inner: harssl::head::Head::load(&path).map_err(to_py)?,
        })
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.inner.classes().to_vec()
    }

    /// `(subject_id, start_time, class_name)` per window, after smoothing.
    fn predict(&self, encoder: &PyEncoder, windows: Vec<PyWindow>) -> PyResult<Vec<(String, f64, String)>> {
        let windows = unwrap_windows(windows);
        let preds = predict(&encoder.inner, &self.inner, &windows).map_err(to_py)?;
        Ok(preds
            .into_iter()
            .map(|p| (p.subject_id, p.start_time, self.inner.classes()[p.class].clone()))
            .collect())
    }
}

/// Windows of the seeded synthetic corpus.
#[pyfunction]
#[pyo3(signature = (seed=0, subjects=8, seconds_per_class=200.0))]
fn synth_windows(seed: u64, subjects: usize, seconds_per_class: f64) -> PyResult<Vec<PyWindow>> {
    let spec = SynthSpec {
        seed,
        subjects,
        seconds_per_class,
        ..Default::default()
    };
    let series = synth_corpus(&spec).map_err(to_py)?;
    let windows = windows_from_series(&series, &WindowingConfig::default()).map_err(to_py)?;
    Ok(windows.into_iter().map(|inner| PyWindow { inner }).collect())
}

#[pyfunction]
fn load_windows(path: PathBuf) -> PyResult<Vec<PyWindow>> {
    Ok(cache::load(&path)
        .map_err(to_py)?
        .into_iter()
        .map(|inner| PyWindow { inner })
        .collect())
}

#[pyfunction]
fn save_windows(path: PathBuf, windows: Vec<PyWindow>) -> PyResult<()> {
    cache::save(&path, &unwrap_windows(windows)).map_err(to_py)
}

/// mean_x, mean_y, mean_z, std_x, std_y, std_z, mean_norm, std_norm.
#[pyfunction]
fn stat_features(window: &PyWindow) -> Vec<f64> {
    harssl::baseline::stat_features(&window.inner).to_array().to_vec()
}

#[pyfunction]
#[pyo3(signature = (windows, steps=2000, batch_pairs=32, seed=0))]
fn pretrain(py: Python<'_>, windows: Vec<PyWindow>, steps: usize, batch_pairs: usize, seed: u64) -> PyResult<PyEncoder> {
    let windows = unwrap_windows(windows);
    let result = py.detach(|| {
        let pairing = PairingConfig {
            batch_pairs,
            ..Default::default()
        };
        let index = CorpusIndex::new(windows, pairing.delta_t_max)?;
        let enc = EncoderConfig {
            seed,
            ..Default::default()
        };
        let train = PretrainConfig {
            steps,
            seed,
            ..Default::default()
        };
        pretrain_encoder(&index, &enc, &pairing, &AugmentConfig::default(), &train, &PretrainSinks::default())
    });
    let (out, _) = result.map_err(to_py)?;
    Ok(PyEncoder { inner: out.encoder })
}

#[pyfunction]
fn confusion_matrix(truth: Vec<usize>, pred: Vec<usize>, k: usize) -> PyResult<Vec<Vec<u64>>> {
    Ok(harssl::evalkit::confusion_matrix(&truth, &pred, k).map_err(to_py)?.rows())
}

#[pyfunction]
fn cohens_kappa(confusion: Vec<Vec<u64>>) -> PyResult<f64> {
    let m = harssl::evalkit::ConfusionMatrix::from_rows(&confusion).map_err(to_py)?;
    Ok(harssl::evalkit::cohens_kappa(&m).map_err(to_py)?.value)
}

/// Row-major `2b × 2b` pair labels and loss weights.
#[pyfunction]
fn coincidence_matrices(b: usize) -> (Vec<u8>, Vec<f64>) {
    harssl::pairing::coincidence_matrices(b)
}

#[pyfunction]
#[pyo3(signature = (counts, cap=5.0))]
fn class_weights(counts: Vec<usize>, cap: f64) -> PyResult<Vec<f64>> {
    harssl::head::class_weights(&counts, cap).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (times, logits, seconds=120.0))]
fn smooth_logits(times: Vec<f64>, logits: Vec<Vec<f32>>, seconds: f64) -> PyResult<Vec<Vec<f32>>> {
    let cfg = SmoothingConfig {
        seconds,
        ..Default::default()
    };
    smooth(&times, &logits, &cfg).map_err(to_py)
}

/// Map labels with `"pamap2"`, `"pilot"` or a mapping file; unmapped give None.
#[pyfunction]
fn map_labels(labels: Vec<String>, mapping: &str) -> PyResult<Vec<Option<String>>> {
    let m = match mapping {
        "pamap2" => LabelMapping::pamap2_to_capture24(),
        "pilot" => LabelMapping::pilot_to_capture24(),
        path => LabelMapping::from_path(std::path::Path::new(path)).map_err(to_py)?,
    };
    let mapped = apply_mapping(&labels, &m).map_err(to_py)?;
    Ok(mapped
        .labels
        .into_iter()
        .map(|l| l.map(|i| m.target_classes()[i].clone()))
        .collect())
}

/// Run the command line with `args` (without the program name).
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("harssl".to_string()).chain(args).collect();
    py.detach(|| harssl::cli::main_with_args(argv))
}

#[pymodule]
fn harssl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWindow>()?;
    m.add_class::<PyEncoder>()?;
    m.add_class::<PyHead>()?;
    m.add_function(wrap_pyfunction!(synth_windows, m)?)?;
    m.add_function(wrap_pyfunction!(load_windows, m)?)?;
    m.add_function(wrap_pyfunction!(save_windows, m)?)?;
    m.add_function(wrap_pyfunction!(stat_features, m)?)?;
    m.add_function(wrap_pyfunction!(pretrain, m)?)?;
    m.add_function(wrap_pyfunction!(confusion_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(cohens_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(coincidence_matrices, m)?)?;
    m.add_function(wrap_pyfunction!(class_weights, m)?)?;
    m.add_function(wrap_pyfunction!(smooth_logits, m)?)?;
    m.add_function(wrap_pyfunction!(map_labels, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
