use std::ffi::CString;

use kgdecode::kgdecode as kgdecode_module;
use pyo3::prelude::*;
use pyo3::types::PyModule;

/// Runs the Python smoke script against the module registered in-process,
/// so the bindings are exercised without installing the wheel.
#[test]
fn python_smoke_script_passes() {
    pyo3::append_to_inittab!(kgdecode_module);
    let script = include_str!("../../../python/smoke_test.py");
    Python::attach(|py| {
        let code = CString::new(script).unwrap();
        let module = PyModule::from_code(py, &code, c"smoke_test.py", c"smoke_test").expect("script imports");
        module.getattr("main").unwrap().call0().expect("smoke test passes");
    });
}
