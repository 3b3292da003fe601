//! Python bindings: graphs, training, embeddings and the evaluation metrics.
//!
//! Matrices cross the boundary as lists of row lists.

use std::path::PathBuf;

use gahne_core::checkpoint::Checkpoint;
use gahne_core::cli::{cmd_gradcheck, embeddings, fit, Inputs, LoadedModel};
use gahne_core::config::RunConfig;
use gahne_core::diff::OpKind;
use gahne_core::error::Error;
use gahne_core::eval::{self, run_classification_eval, run_clustering_eval};
use gahne_core::hetgraph::{load_graph, synth_hin, write_graph, GraphFiles, HeteroGraph};
use gahne_core::linalg::DenseMatrix;
use gahne_core::model::{forward, predict_labels, ForwardOutput};
use gahne_core::train::TrainHistory;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList, PyTuple};

create_exception!(
    gahne,
    GahneError,
    PyException,
    "Raised for invalid inputs, graphs and numerical failures."
);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => GahneError::new_err(e.to_string()),
    }
}

fn rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Builds a run configuration from keyword options; keys are the CLI flag
/// names with underscores. Lists are joined with commas.
fn config(options: Option<&Bound<'_, PyDict>>) -> PyResult<RunConfig> {
    let mut cfg = RunConfig::default();
    for (key, value) in options.into_iter().flat_map(|d| d.iter()) {
        let key: String = key.extract()?;
        let text = if value.is_instance_of::<PyBool>() {
            value.extract::<bool>()?.to_string()
        } else if value.is_instance_of::<PyList>() || value.is_instance_of::<PyTuple>() {
            let parts: Vec<String> = value
                .try_iter()?
                .map(|v| Ok(v?.str()?.to_string()))
                .collect::<PyResult<_>>()?;
            parts.join(",")
        } else {
            value.str()?.to_string()
        };
        cfg.set(&key, &text).map_err(py_err)?;
    }
    Ok(cfg)
}

/// A typed, optionally labeled node graph.
#[pyclass(module = "gahne", frozen)]
struct Graph {
    inner: HeteroGraph,
}

#[pymethods]
impl Graph {
    /// Reads `nodes.tsv`, `edges.tsv` and, when present, `features.tsv` and
    /// `labels.tsv` from a directory.
    #[staticmethod]
    fn load(directory: PathBuf) -> PyResult<Self> {
        let f = GraphFiles::in_dir(&directory);
        let inner = load_graph(&f.nodes, &f.edges, f.features.as_deref(), f.labels.as_deref()).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Planted-partition graph; accepts the `synth_*` and `seed` options.
    #[staticmethod]
    #[pyo3(signature = (**options))]
    fn synth(options: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let inner = synth_hin(&config(options)?.synth_params()).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn write(&self, directory: PathBuf) -> PyResult<()> {
        std::fs::create_dir_all(&directory).map_err(|e| PyOSError::new_err(e.to_string()))?;
        write_graph(&self.inner, &directory).map_err(py_err)?;
        Ok(())
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn node_types(&self) -> Vec<usize> {
        self.inner.node_types().to_vec()
    }

    #[getter]
    fn node_type_names(&self) -> Vec<String> {
        self.inner.node_type_names().to_vec()
    }

    #[getter]
    fn edge_type_names(&self) -> Vec<String> {
        self.inner.edge_type_names().to_vec()
    }

    /// `(src, dst, edge_type)` triples.
    #[getter]
    fn edges(&self) -> Vec<(usize, usize, usize)> {
        self.inner.edges().iter().map(|e| (e.src, e.dst, e.edge_type)).collect()
    }

    /// Class index per node, `None` where unlabeled.
    #[getter]
    fn labels(&self) -> Option<Vec<Option<usize>>> {
        self.inner.labels().map(<[_]>::to_vec)
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(num_nodes={}, num_edges={}, node_types={}, edge_types={}, classes={})",
            self.inner.num_nodes(),
            self.inner.num_edges(),
            self.inner.node_type_names().len(),
            self.inner.num_edge_types(),
            self.inner.num_classes()
        )
    }
}

/// A trained model bound to the graph it was trained on.
#[pyclass(module = "gahne", frozen)]
struct Model {
    loaded: LoadedModel,
    config: RunConfig,
    history: Option<TrainHistory>,
}

impl Model {
    fn forward(&self) -> PyResult<ForwardOutput> {
        let ck = &self.loaded.checkpoint;
        forward(&self.loaded.inputs.tensors, &ck.params, &ck.model, false, 0).map_err(py_err)
    }
}

#[pymethods]
impl Model {
    /// Trains on a labeled graph. Options are the training flags with
    /// underscores, e.g. `aggregator="mean"`, `max_epochs=50`, `fusion=False`.
    #[staticmethod]
    #[pyo3(signature = (graph, **options))]
    fn train(py: Python<'_>, graph: &Graph, options: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let cfg = config(options)?;
        let inputs = Inputs::from_graph(graph.inner.clone(), cfg.features).map_err(py_err)?;
        let fitted = py.detach(|| fit(&inputs, &cfg, |_| {})).map_err(py_err)?;
        if let Some(e) = fitted.error {
            return Err(py_err(e));
        }
        Ok(Self {
            loaded: LoadedModel {
                checkpoint: fitted.checkpoint,
                inputs,
                split: fitted.split,
            },
            config: cfg,
            history: Some(fitted.history),
        })
    }

    /// Restores a checkpoint written by [`Model::save`] or the CLI.
    #[staticmethod]
    #[pyo3(signature = (path, graph, **options))]
    fn load(path: PathBuf, graph: &Graph, options: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let checkpoint = Checkpoint::load(&path).map_err(py_err)?;
        let loaded = LoadedModel::from_parts(checkpoint, graph.inner.clone()).map_err(py_err)?;
        Ok(Self {
            loaded,
            config: config(options)?,
            history: None,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.loaded.checkpoint.save(&path).map_err(py_err)
    }

    /// Dropout-free `N×d` node embeddings.
    fn embeddings(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&embeddings(&self.loaded).map_err(py_err)?))
    }

    fn probabilities(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.forward()?.probs))
    }

    fn predict(&self) -> PyResult<Vec<usize>> {
        Ok(predict_labels(&self.forward()?.probs))
    }

    /// Per-layer relation weights, one list per layer (empty for
    /// aggregators without weights).
    fn channel_weights(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.forward()?.channel_weights)
    }

    /// KNN classification on the test nodes and k-means clustering, using
    /// the `fractions`, `repeats`, `knn_k` and `seed` options given at
    /// training or load time unless overridden here.
    #[pyo3(signature = (**options))]
    fn evaluate<'py>(&self, py: Python<'py>, options: Option<&Bound<'py, PyDict>>) -> PyResult<Bound<'py, PyDict>> {
        let mut cfg = self.config.clone();
        for (key, value) in config(options)?.pairs() {
            if options.is_some_and(|d| d.contains(&key).unwrap_or(false)) {
                cfg.set(&key, &value).map_err(py_err)?;
            }
        }
        let emb = embeddings(&self.loaded).map_err(py_err)?;
        let labels = &self.loaded.inputs.labels;
        let test = &self.loaded.split.test_ids;
        let (classification, clustering) = py
            .detach(|| {
                let c = run_classification_eval(&emb, labels, test, &cfg.fractions, cfg.repeats, cfg.seed, cfg.knn_k)?;
                Ok::<_, Error>((c, run_clustering_eval(&emb, labels, cfg.repeats, cfg.seed)?))
            })
            .map_err(py_err)?;
        let out = PyDict::new(py);
        let rows = PyList::empty(py);
        for r in classification {
            let row = PyDict::new(py);
            row.set_item("fraction", r.fraction)?;
            row.set_item("macro_f1", (r.macro_f1.mean, r.macro_f1.sd))?;
            row.set_item("micro_f1", (r.micro_f1.mean, r.micro_f1.sd))?;
            rows.append(row)?;
        }
        out.set_item("classification", rows)?;
        out.set_item("nmi", (clustering.nmi.mean, clustering.nmi.sd))?;
        out.set_item("ari", (clustering.ari.mean, clustering.ari.sd))?;
        Ok(out)
    }

    /// `(train_ids, val_ids, test_ids)`.
    #[getter]
    fn split(&self) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let s = &self.loaded.split;
        (s.train_ids.clone(), s.val_ids.clone(), s.test_ids.clone())
    }

    /// `(epoch, train_loss, val_loss, val_acc)` per epoch; empty for loaded models.
    #[getter]
    fn history(&self) -> Vec<(usize, f64, f64, f64)> {
        self.history
            .iter()
            .flat_map(|h| &h.epochs)
            .map(|e| (e.epoch, e.train_loss, e.val_loss, e.val_acc))
            .collect()
    }

    #[getter]
    fn best_epoch(&self) -> Option<usize> {
        self.history.as_ref().map(|h| h.best_epoch)
    }

    fn __repr__(&self) -> String {
        let m = &self.loaded.checkpoint.model;
        format!(
            "Model(aggregator={}, fusion={}, channels={}, dims={:?})",
            m.aggregator, m.fusion_enabled, m.channels_enabled, m.hidden_dims
        )
    }
}

#[pyfunction]
fn nmi(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    eval::nmi(&a, &b).map_err(py_err)
}

#[pyfunction]
fn ari(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    eval::ari(&a, &b).map_err(py_err)
}

/// `(macro_f1, micro_f1)`.
#[pyfunction]
fn f1_scores(pred: Vec<usize>, truth: Vec<usize>, num_classes: usize) -> PyResult<(f64, f64)> {
    eval::f1_scores(&pred, &truth, num_classes).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (points, k, seed = 0, max_iters = 300))]
fn kmeans(points: Vec<Vec<f64>>, k: usize, seed: u64, max_iters: usize) -> PyResult<Vec<usize>> {
    let width = points.first().map_or(0, Vec::len);
    if points.iter().any(|p| p.len() != width) {
        return Err(GahneError::new_err("points must all have the same length"));
    }
    let x = DenseMatrix::from_rows(&points);
    eval::kmeans(&x, k, seed, max_iters).map_err(py_err)
}

/// Full-model gradient check over every aggregator/fusion/channel
/// combination: `(variant, parameter_group, max_relative_error)` rows.
/// `fault` names a backward rule to corrupt, e.g. `"softmax_rows"`.
#[pyfunction]
#[pyo3(signature = (fault = None, eps = 1e-5, seed = 1))]
fn gradcheck(py: Python<'_>, fault: Option<&str>, eps: f64, seed: u64) -> PyResult<Vec<(String, String, f64)>> {
    let fault = match fault {
        None => None,
        Some(name) => Some(OpKind::from_name(name).ok_or_else(|| GahneError::new_err(format!("unknown op {name:?}")))?),
    };
    let cfg = RunConfig {
        gradcheck_eps: eps,
        seed,
        ..RunConfig::default()
    };
    let lines = py.detach(|| cmd_gradcheck(&cfg, fault)).map_err(py_err)?;
    Ok(lines
        .into_iter()
        .map(|l| (l.variant, l.group.to_string(), l.max_error))
        .collect())
}

#[pymodule]
fn gahne(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GahneError", m.py().get_type::<GahneError>())?;
    m.add_class::<Graph>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(nmi, m)?)?;
    m.add_function(wrap_pyfunction!(ari, m)?)?;
    m.add_function(wrap_pyfunction!(f1_scores, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
