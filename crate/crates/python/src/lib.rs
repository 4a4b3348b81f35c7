//! Python bindings: hierarchy parsing and dispatch, trace recording and
//! replay, perceptual hashing, the similarity index, and clustering.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use puppet_core::corpus::{self, CorpusSpec};
use puppet_core::similarity::{self, read_pgm, IndexEntry, IndexError};
use puppet_core::{
    decode_rfb, dispatch_touch, encode_rfb, find_target_view, parse_event_log, parse_hierarchy_dump, parse_trace,
    record_trace, replay_raw, replay_trace, serialize_trace, DumpTimeline, GrayImage, PerceptualHash, ReplayOptions,
    ReplayReport, RfbMessage, StimulationTrace, ViewHierarchy,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn index_err(e: IndexError) -> PyErr {
    match e {
        IndexError::Io { .. } | IndexError::Image { .. } => PyOSError::new_err(e.to_string()),
        _ => value_err(e),
    }
}

fn timeline(dir: &str) -> PyResult<DumpTimeline> {
    DumpTimeline::load_dir(dir).map_err(|e| PyOSError::new_err(e.to_string()))
}

#[pyclass(name = "ViewHierarchy", frozen)]
struct PyViewHierarchy {
    inner: ViewHierarchy,
}

#[pymethods]
impl PyViewHierarchy {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self { inner: parse_hierarchy_dump(text).map_err(value_err)? })
    }

    fn to_dump(&self) -> String {
        puppet_core::view::serialize_hierarchy_dump(&self.inner)
    }

    #[getter]
    fn activity_name(&self) -> &str {
        &self.inner.activity_name
    }

    #[getter]
    fn screen(&self) -> (u32, u32) {
        (self.inner.screen.width, self.inner.screen.height)
    }

    fn node_count(&self) -> usize {
        self.inner.root.node_count()
    }

    /// Path of the deepest-rightmost view under the point, or None.
    fn find_target_view(&self, x: i64, y: i64) -> Option<String> {
        find_target_view(&self.inner, x, y).ok().map(|p| p.to_string())
    }

    /// Path of the consuming view, or None when the activity consumes.
    fn dispatch(&self, x: i64, y: i64) -> Option<String> {
        dispatch_touch(&self.inner, x, y).view_path().map(|p| p.to_string())
    }

    fn __repr__(&self) -> String {
        format!("ViewHierarchy({:?}, {} nodes)", self.inner.activity_name, self.inner.root.node_count())
    }
}

#[pyclass(name = "ReplayReport", frozen)]
struct PyReplayReport {
    inner: ReplayReport,
}

#[pymethods]
impl PyReplayReport {
    #[getter]
    fn score(&self) -> f64 {
        self.inner.score
    }

    #[getter]
    fn executed_steps(&self) -> usize {
        self.inner.executed_steps
    }

    #[getter]
    fn total_steps(&self) -> usize {
        self.inner.total_steps
    }

    #[getter]
    fn failed_step(&self) -> Option<usize> {
        self.inner.failure.as_ref().map(|f| f.step)
    }

    /// Emitted touch events as `(timestamp, action, x, y)`.
    fn touches(&self) -> Vec<(u64, u8, u32, u32)> {
        self.inner
            .emitted
            .touch
            .iter()
            .map(|e| (e.timestamp, e.action as u8, e.x, e.y))
            .collect()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!("ReplayReport(score={}, {}/{})", self.inner.score, self.inner.executed_steps, self.inner.total_steps)
    }
}

#[pyclass(name = "Trace", frozen)]
struct PyTrace {
    inner: StimulationTrace,
}

#[pymethods]
impl PyTrace {
    /// Records a trace from event-log CSV text and a directory of
    /// `<timestamp>.hier` dumps.
    #[staticmethod]
    fn record(events_csv: &str, dumps_dir: &str, app_id: &str) -> PyResult<Self> {
        let events = parse_event_log(events_csv).map_err(value_err)?;
        let inner = record_trace(&events, &timeline(dumps_dir)?, app_id).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self { inner: parse_trace(text).map_err(value_err)? })
    }

    fn to_text(&self) -> String {
        serialize_trace(&self.inner)
    }

    #[getter]
    fn app_id(&self) -> &str {
        &self.inner.app_id
    }

    fn flagged_steps(&self) -> Vec<usize> {
        self.inner.flagged_steps()
    }

    fn __len__(&self) -> usize {
        self.inner.steps.len()
    }

    #[pyo3(signature = (dumps_dir, raw = false, speed = 1.0))]
    fn replay(&self, dumps_dir: &str, raw: bool, speed: f64) -> PyResult<PyReplayReport> {
        if !(speed.is_finite() && speed > 0.0) {
            return Err(PyValueError::new_err("speed must be positive"));
        }
        let focus = timeline(dumps_dir)?;
        let opts = ReplayOptions { speed };
        let inner = if raw {
            replay_raw(&self.inner, &focus, &opts)
        } else {
            replay_trace(&self.inner, &focus, &opts)
        };
        Ok(PyReplayReport { inner })
    }
}

#[pyclass(name = "SimilarityIndex", frozen)]
struct PySimilarityIndex {
    inner: similarity::SimilarityIndex,
}

#[pymethods]
impl PySimilarityIndex {
    #[new]
    fn new(entries: Vec<(String, String, u64)>) -> Self {
        let entries = entries
            .into_iter()
            .map(|(app_id, screenshot_id, h)| IndexEntry { app_id, screenshot_id, hash: PerceptualHash(h) })
            .collect();
        Self { inner: similarity::SimilarityIndex::build(entries) }
    }

    #[staticmethod]
    fn from_corpus(dir: &str) -> PyResult<Self> {
        Ok(Self { inner: similarity::SimilarityIndex::from_corpus_dir(dir).map_err(index_err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: similarity::SimilarityIndex::load(path).map_err(index_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(index_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn hashes(&self) -> Vec<u64> {
        self.inner.hashes().iter().map(|h| h.0).collect()
    }

    fn entries(&self) -> Vec<(String, String, u64)> {
        self.inner
            .entries()
            .iter()
            .map(|e| (e.app_id.clone(), e.screenshot_id.clone(), e.hash.0))
            .collect()
    }

    /// The `k` nearest entries as `(app_id, screenshot_id, distance)`.
    fn knn(&self, hash: u64, k: usize) -> PyResult<Vec<(String, String, u32)>> {
        let found = self.inner.knn(PerceptualHash(hash), k).map_err(index_err)?;
        Ok(found
            .into_iter()
            .map(|n| {
                let e = &self.inner.entries()[n.index];
                (e.app_id.clone(), e.screenshot_id.clone(), n.distance)
            })
            .collect())
    }

    #[pyo3(signature = (hashes, exclude_app = None))]
    fn find_similar_app(&self, hashes: Vec<u64>, exclude_app: Option<&str>) -> PyResult<(String, String, u32)> {
        let hashes: Vec<PerceptualHash> = hashes.into_iter().map(PerceptualHash).collect();
        let s = similarity::find_similar_app_by_hash(&self.inner, &hashes, exclude_app).map_err(index_err)?;
        Ok((s.app_id, s.screenshot_id, s.distance))
    }
}

#[pyfunction]
fn hash_pgm(path: &str) -> PyResult<u64> {
    let img = read_pgm(path).map_err(|e| PyOSError::new_err(e.to_string()))?;
    Ok(similarity::phash(&img).map_err(value_err)?.0)
}

#[pyfunction]
fn hash_pixels(width: u32, height: u32, pixels: &[u8]) -> PyResult<u64> {
    let img = GrayImage::new(width, height, pixels.to_vec()).map_err(value_err)?;
    Ok(similarity::phash(&img).map_err(value_err)?.0)
}

#[pyfunction]
fn hamming(a: u64, b: u64) -> u32 {
    puppet_core::hamming(PerceptualHash(a), PerceptualHash(b))
}

#[pyfunction]
#[pyo3(signature = (hashes, eps, min_pts = 2))]
fn dbscan(hashes: Vec<u64>, eps: u32, min_pts: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
    let hashes: Vec<PerceptualHash> = hashes.into_iter().map(PerceptualHash).collect();
    let set = puppet_core::dbscan(&hashes, eps, min_pts);
    (set.clusters, set.noise)
}

#[pyfunction]
#[pyo3(signature = (hashes, eps_values, min_pts = 2))]
fn sweep<'py>(py: Python<'py>, hashes: Vec<u64>, eps_values: Vec<u32>, min_pts: usize) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let hashes: Vec<PerceptualHash> = hashes.into_iter().map(PerceptualHash).collect();
    puppet_core::sweep(&hashes, &eps_values, min_pts)
        .into_iter()
        .map(|row| {
            let d = PyDict::new(py);
            d.set_item("eps", row.eps)?;
            d.set_item("num_clusters", row.num_clusters)?;
            d.set_item("avg_cluster_size", row.avg_cluster_size)?;
            d.set_item("avg_intra_distance", row.avg_intra_distance)?;
            d.set_item("avg_inter_distance", row.avg_inter_distance)?;
            Ok(d)
        })
        .collect()
}

#[pyfunction]
fn homogeneity(labels: Vec<String>) -> PyResult<f64> {
    puppet_core::homogeneity(&labels).map_err(value_err)
}

#[pyfunction]
fn encode_pointer(py: Python<'_>, button_mask: u8, x: u16, y: u16) -> Bound<'_, PyBytes> {
    PyBytes::new(py, &encode_rfb(&RfbMessage::PointerEvent { button_mask, x, y }))
}

#[pyfunction]
fn encode_key(py: Python<'_>, down: bool, key: u32) -> Bound<'_, PyBytes> {
    PyBytes::new(py, &encode_rfb(&RfbMessage::KeyEvent { down, key }))
}

/// Decodes one message; returns a dict with `type`, its fields, and
/// `consumed` (bytes used).
#[pyfunction]
fn decode_message<'py>(py: Python<'py>, data: &[u8]) -> PyResult<Bound<'py, PyDict>> {
    let (msg, consumed) = decode_rfb(data).map_err(value_err)?;
    let d = PyDict::new(py);
    match msg {
        RfbMessage::PointerEvent { button_mask, x, y } => {
            d.set_item("type", "pointer")?;
            d.set_item("button_mask", button_mask)?;
            d.set_item("x", x)?;
            d.set_item("y", y)?;
        }
        RfbMessage::KeyEvent { down, key } => {
            d.set_item("type", "key")?;
            d.set_item("down", down)?;
            d.set_item("key", key)?;
        }
    }
    d.set_item("consumed", consumed)?;
    Ok(d)
}

/// Writes a synthetic corpus and returns the number of apps generated.
#[pyfunction]
#[pyo3(signature = (out_dir, seed = 1, families = 10, variants = 3))]
fn generate_corpus(out_dir: &str, seed: u64, families: usize, variants: usize) -> PyResult<usize> {
    let spec = CorpusSpec {
        seed,
        n_families: families,
        variants_per_family: variants,
        ..CorpusSpec::default()
    };
    let manifest = corpus::generate_corpus(&spec, out_dir).map_err(value_err)?;
    Ok(manifest.apps.len())
}

#[pymodule]
fn puppet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyViewHierarchy>()?;
    m.add_class::<PyTrace>()?;
    m.add_class::<PyReplayReport>()?;
    m.add_class::<PySimilarityIndex>()?;
    m.add_function(wrap_pyfunction!(hash_pgm, m)?)?;
    m.add_function(wrap_pyfunction!(hash_pixels, m)?)?;
    m.add_function(wrap_pyfunction!(hamming, m)?)?;
    m.add_function(wrap_pyfunction!(dbscan, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(homogeneity, m)?)?;
    m.add_function(wrap_pyfunction!(encode_pointer, m)?)?;
    m.add_function(wrap_pyfunction!(encode_key, m)?)?;
    m.add_function(wrap_pyfunction!(decode_message, m)?)?;
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    Ok(())
}
