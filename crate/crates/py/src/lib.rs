//! Python bindings: the full command line plus a few pure functions that are
//! handy from notebooks.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use cospeech_core::{blend, bvh, metrics, quat::UnitQuaternion, runtime};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Runs a `cospeech` subcommand, e.g. `run(["build-graph", "--bvh-dir", d, "--out", o])`.
/// Returns the exit code.
#[pyfunction]
fn run(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(|| cospeech_core::cli::run(std::iter::once("cospeech".to_string()).chain(args)))
}

/// Parses BVH text and writes it back in canonical form.
#[pyfunction]
fn normalize_bvh(text: &str) -> PyResult<String> {
    bvh::parse_bvh(text).map(|c| bvh::write_bvh(&c)).map_err(value_error)
}

#[pyfunction]
fn fgd(real: Vec<Vec<f64>>, generated: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::fgd(&real, &generated).map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (motion_beats, audio_beats, sigma = metrics::DEFAULT_BEAT_SIGMA))]
fn beat_align(motion_beats: Vec<f64>, audio_beats: Vec<f64>, sigma: f64) -> PyResult<f64> {
    metrics::beat_align(&motion_beats, &audio_beats, sigma).map_err(value_error)
}

/// Quaternions as `[w, x, y, z]`; inputs are normalized first.
#[pyfunction]
fn slerp(q1: [f64; 4], q2: [f64; 4], t: f64) -> PyResult<[f64; 4]> {
    let make = |q: [f64; 4]| {
        if q.iter().map(|v| v * v).sum::<f64>() == 0.0 {
            return Err(value_error("zero quaternion"));
        }
        Ok(UnitQuaternion::new_normalize(q[0], q[1], q[2], q[3]))
    };
    Ok(blend::slerp(&make(q1)?, &make(q2)?, t).as_array())
}

/// Deterministic stand-in embedding for `data`.
#[pyfunction]
#[pyo3(signature = (data, dim, seed = 0))]
fn mock_embed(data: &[u8], dim: usize, seed: u64) -> Vec<f32> {
    runtime::mock_embed(data, seed, dim)
}

#[pymodule]
fn cospeech(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_bvh, m)?)?;
    m.add_function(wrap_pyfunction!(fgd, m)?)?;
    m.add_function(wrap_pyfunction!(beat_align, m)?)?;
    m.add_function(wrap_pyfunction!(slerp, m)?)?;
    m.add_function(wrap_pyfunction!(mock_embed, m)?)?;
    Ok(())
}
