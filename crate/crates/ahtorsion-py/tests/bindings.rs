use pyo3::prelude::*;
use pyo3::types::PyTuple;
use pyo3::wrap_pymodule;

#[test]
fn module_runs_a_config() {
    Python::initialize();
    Python::attach(|py| {
        let m = wrap_pymodule!(ahtorsion_py::ahtorsion_py)(py);
        let m = m.bind(py);
        assert_eq!(m.getattr("sign_audit").unwrap().call0().unwrap().extract::<String>().unwrap(), "paper-convention");
        let cfg = r#"{"schema":1,"geometry":{"type":"flat","n":2},"points":{"count":2}}"#;
        let out = m.getattr("run").unwrap().call1(("inspect", cfg)).unwrap();
        let out = out.cast::<PyTuple>().unwrap();
        assert_eq!(out.get_item(0).unwrap().extract::<i32>().unwrap(), 0);
        let err = m.getattr("run").unwrap().call1(("inspect", "{\"schema\":1}")).unwrap_err();
        assert!(err.is_instance(py, &m.getattr("ConfigError").unwrap().cast_into().unwrap()));
    });
}
