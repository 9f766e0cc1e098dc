//! Python bindings. Images cross the boundary as flat row-major lists.

use fringe_core::geometry::{Rig, RigScale};
use fringe_core::phase::retrieve_ps_images;
use fringe_core::pipeline::{builtin_scene, run_pipeline, BuiltinScene, PipelineConfig};
use fringe_core::simulator::render_rig;
use fringe_core::Grid;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_scene(name: &str) -> PyResult<BuiltinScene> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown scene '{name}'")))
}

fn parse_scale(name: &str) -> PyResult<RigScale> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown rig scale '{name}'")))
}

/// Renders a built-in scene through every camera of the synthetic rig.
///
/// Returns a list with one dict per camera: `width`, `height`, `frames`
/// (list of flat images), `wrapped`, `abs_phase`, `orders`, `depth`, `mask`.
#[pyfunction]
#[pyo3(signature = (scene="tilted_plane", steps=3, periods=12, seed=0, scale="desk"))]
fn simulate<'py>(
    py: Python<'py>,
    scene: &str,
    steps: usize,
    periods: u32,
    seed: u64,
    scale: &str,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let rig = Rig::synthetic(parse_scale(scale)?, periods);
    let scene = builtin_scene(parse_scene(scene)?, &rig);
    let views = render_rig(&scene, &rig, steps, seed).map_err(value_err)?;
    let mut out = Vec::with_capacity(views.len());
    for (stack, truth) in views {
        let (w, h) = stack.dims();
        let d = PyDict::new(py);
        d.set_item("width", w)?;
        d.set_item("height", h)?;
        let frames: Vec<Vec<f64>> = stack.images.iter().map(|g| g.as_slice().to_vec()).collect();
        d.set_item("frames", frames)?;
        d.set_item("wrapped", truth.wrapped.as_slice().to_vec())?;
        d.set_item("abs_phase", truth.abs_phase.as_slice().to_vec())?;
        d.set_item("orders", truth.orders.as_slice().to_vec())?;
        d.set_item("depth", truth.depth.as_slice().to_vec())?;
        d.set_item("mask", truth.mask.as_slice().to_vec())?;
        out.push(d);
    }
    Ok(out)
}

/// N-step phase shifting. Returns `(phi, modulation, mask)` as flat lists.
#[pyfunction]
#[pyo3(signature = (frames, width, height, threshold=0.02))]
fn wrapped_phase(
    frames: Vec<Vec<f64>>,
    width: usize,
    height: usize,
    threshold: f64,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<bool>)> {
    let mut images = Vec::with_capacity(frames.len());
    for f in frames {
        if f.len() != width * height {
            return Err(PyValueError::new_err(format!(
                "frame has {} values, expected {}",
                f.len(),
                width * height
            )));
        }
        images.push(Grid::from_vec(width, height, f));
    }
    let maps = retrieve_ps_images(&images, threshold).map_err(value_err)?;
    Ok((maps.phi.into_vec(), maps.b_mod.into_vec(), maps.mask.into_vec()))
}

/// Runs a pipeline from a JSON config and returns the evaluation report as JSON.
#[pyfunction]
fn pipeline(config_json: &str) -> PyResult<String> {
    let config = PipelineConfig::from_json(config_json).map_err(value_err)?;
    config.validate().map_err(value_err)?;
    let outcome = run_pipeline(&config).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(outcome.report.to_json())
}

/// SHA-256 of the canonical form of a pipeline config.
#[pyfunction]
fn config_hash(config_json: &str) -> PyResult<String> {
    Ok(PipelineConfig::from_json(config_json).map_err(value_err)?.hash())
}

#[pymodule]
fn fringe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(wrapped_phase, m)?)?;
    m.add_function(wrap_pyfunction!(pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    Ok(())
}
