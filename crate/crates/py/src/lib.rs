//! Python bindings. Records cross the boundary as plain dicts with the JSONL
//! field names.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyList;

use needlestack::checkpoint::Checkpoint;
use needlestack::config::RunConfig;
use needlestack::corpus::BackgroundCorpus;
use needlestack::dataset::{generate as gen_records, DatasetRecord, GenSpec};
use needlestack::eval::{evaluate, predict, score_answer as score, EvalOptions};
use needlestack::mixer::Placement;
use needlestack::retrieval::{recall_at_k as recall, Chunking, TfIdf};
use needlestack::rmt::{Mode, RmtModel};
use needlestack::tokenizer::Tokenizer;
use needlestack::world::TaskId;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn task(name: &str) -> PyResult<TaskId> {
    name.parse().map_err(value_err)
}

fn to_py<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (s,))
}

fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let s: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&s).map_err(value_err)
}

fn records_from(list: &Bound<'_, PyList>) -> PyResult<Vec<DatasetRecord>> {
    list.iter().map(|r| from_py(&r)).collect()
}

#[pyfunction]
fn version() -> String {
    needlestack::cli::version_string()
}

#[pyfunction]
fn tasks() -> Vec<String> {
    TaskId::ALL.iter().map(|t| t.to_string()).collect()
}

#[pyfunction]
fn build_prompt(task_name: &str, context: &str, question: &str) -> PyResult<String> {
    Ok(needlestack::prompt::build_prompt(task(task_name)?, context, question))
}

#[pyfunction]
fn oracle_answer(task_name: &str, facts: Vec<String>, question: &str) -> PyResult<String> {
    needlestack::oracle::oracle_answer(task(task_name)?, &facts, question).map_err(value_err)
}

#[pyfunction]
fn score_answer(generated: &str, gold: &str, task_name: &str) -> PyResult<bool> {
    Ok(score(generated, gold, task(task_name)?))
}

/// Word-level tokenizer over the corpus, as `gen` builds it.
#[pyclass(name = "Tokenizer")]
struct PyTokenizer {
    inner: Tokenizer,
}

#[pymethods]
impl PyTokenizer {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Tokenizer::load(&path).map_err(runtime_err)?,
        })
    }

    fn encode(&self, text: &str) -> Vec<usize> {
        self.inner.encode(text)
    }

    fn decode(&self, ids: Vec<usize>) -> String {
        self.inner.decode(&ids)
    }

    fn __len__(&self) -> usize {
        self.inner.vocab_size()
    }
}

/// A background corpus plus the tokenizer derived from it.
#[pyclass]
struct Generator {
    corpus: BackgroundCorpus,
    tok: Tokenizer,
}

#[pymethods]
impl Generator {
    #[new]
    #[pyo3(signature = (corpus_dir, vocab_size = 512))]
    fn new(corpus_dir: PathBuf, vocab_size: usize) -> PyResult<Self> {
        let mut cfg = RunConfig::default();
        cfg.data.corpus = corpus_dir.clone();
        cfg.data.vocab_size = vocab_size;
        let corpus = BackgroundCorpus::load_dir(&corpus_dir).map_err(runtime_err)?;
        let tok = cfg.tokenizer(&corpus).map_err(value_err)?;
        Ok(Self { corpus, tok })
    }

    fn tokenizer(&self) -> PyTokenizer {
        PyTokenizer { inner: self.tok.clone() }
    }

    /// `target_tokens = 0` is the no-noise condition. `quartile` places all
    /// facts inside one quarter of the context.
    #[pyo3(signature = (task_name, n, target_tokens, seed, quartile = None))]
    fn generate<'py>(
        &self,
        py: Python<'py>,
        task_name: &str,
        n: usize,
        target_tokens: usize,
        seed: u64,
        quartile: Option<u8>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let spec = GenSpec {
            task: task(task_name)?,
            n,
            target_tokens,
            seed,
            placement: quartile.map_or(Placement::Uniform, Placement::Quartile),
            facts: None,
        };
        let records = py.detach(|| gen_records(&spec, &self.corpus, &self.tok)).map_err(value_err)?;
        to_py(py, &records)
    }
}

/// A trained model restored from a checkpoint.
#[pyclass]
struct Model {
    model: RmtModel<f32>,
    mode: Mode,
    tok: Tokenizer,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = Checkpoint::load(&path).map_err(runtime_err)?;
        Ok(Self {
            model: ck.build_model().map_err(runtime_err)?,
            mode: ck.mode,
            tok: ck.tokenizer().map_err(runtime_err)?,
        })
    }

    #[getter]
    fn mode(&self) -> String {
        self.mode.to_string()
    }

    #[getter]
    fn segment_len(&self) -> usize {
        self.model.config.segment_len
    }

    fn predict(&self, py: Python<'_>, record: &Bound<'_, PyAny>) -> PyResult<String> {
        let r: DatasetRecord = from_py(record)?;
        py.detach(|| predict(&self.model, self.mode, &self.tok, &r)).map_err(runtime_err)
    }

    /// Accuracy per (task, length) cell.
    fn evaluate<'py>(&self, py: Python<'py>, records: &Bound<'py, PyList>) -> PyResult<Bound<'py, PyAny>> {
        let rs = records_from(records)?;
        let report = py
            .detach(|| evaluate(&self.model, self.mode, &self.tok, &rs, EvalOptions::default()))
            .map_err(runtime_err)?;
        to_py(py, &report)
    }
}

/// Recall@k of TF-IDF retrieval with sentence chunks and fixed windows.
#[pyfunction]
#[pyo3(signature = (records, ks, window = 512))]
fn recall_at_k<'py>(py: Python<'py>, records: &Bound<'py, PyList>, ks: Vec<usize>, window: usize) -> PyResult<Bound<'py, PyAny>> {
    let rs = records_from(records)?;
    let report = recall(&rs, &[Chunking::Sentence, Chunking::Tokens(window)], &ks, &TfIdf);
    to_py(py, &report)
}

/// Runs the command line with `argv` (without the program name) and returns
/// its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, argv: Vec<String>) -> i32 {
    let full: Vec<String> = std::iter::once("needlestack".to_string()).chain(argv).collect();
    py.detach(|| needlestack::cli::run_command(full))
}

#[pymodule(name = "needlestack")]
fn needlestack_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    init(m)
}

/// Registers every binding on `m`.
pub fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(version, m)?)?;
    m.add_function(wrap_pyfunction!(tasks, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_answer, m)?)?;
    m.add_function(wrap_pyfunction!(score_answer, m)?)?;
    m.add_function(wrap_pyfunction!(recall_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add_class::<PyTokenizer>()?;
    m.add_class::<Generator>()?;
    m.add_class::<Model>()?;
    Ok(())
}
