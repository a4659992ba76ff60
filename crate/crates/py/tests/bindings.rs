use pyo3::prelude::*;
use pyo3::types::PyDict;

fn module(py: Python<'_>) -> Bound<'_, PyModule> {
    let m = PyModule::new(py, "needlestack").unwrap();
    needlestack_py::init(&m).unwrap();
    m
}

fn corpus() -> String {
    format!("{}/../../data/corpus", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn generated_records_round_trip_through_python() {
    Python::initialize();
    Python::attach(|py| {
        let m = module(py);
        let gen = m.getattr("Generator").unwrap().call1((corpus(), 512)).unwrap();
        let records = gen.call_method1("generate", ("qa2", 5, 300, 3)).unwrap();
        assert_eq!(records.len().unwrap(), 5);
        for r in records.try_iter().unwrap() {
            let r = r.unwrap();
            let r = r.cast::<PyDict>().unwrap();
            let answer: String = r.get_item("answer").unwrap().unwrap().extract().unwrap();
            let facts = r.get_item("facts").unwrap().unwrap();
            let question = r.get_item("question").unwrap().unwrap();
            let got: String = m.getattr("oracle_answer").unwrap().call1(("qa2", facts, question)).unwrap().extract().unwrap();
            assert_eq!(got, answer);
        }
    });
}

#[test]
fn errors_become_python_exceptions() {
    Python::initialize();
    Python::attach(|py| {
        let m = module(py);
        let err = m.getattr("build_prompt").unwrap().call1(("qa9", "", "q")).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
        let err = m.getattr("Model").unwrap().call_method1("load", ("/nonexistent.ckpt",)).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyRuntimeError>(py));
    });
}
