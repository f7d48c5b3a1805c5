//! Python bindings: the main tensor type, the two operators, the losses and
//! metrics, scene generation, the gradient-check suite, and a full training
//! entry point. Values cross the boundary as flat `list[float]` plus a shape.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use daccn_core::config::RunConfig;
use daccn_core::daccn;
use daccn_core::error::Error;
use daccn_core::geometry;
use daccn_core::losses;
use daccn_core::metrics::{depth_metrics, MetricsOptions, MetricsReport};
use daccn_core::suite::{run_suite, standard_suite};
use daccn_core::synthdata::{generate_scene, SceneSpec};
use daccn_core::tensor::{Activation, Tensor as CoreTensor};
use daccn_core::trainer;

fn to_py_err(err: Error) -> PyErr {
    match &err {
        Error::Dimension(_) | Error::Config(_) | Error::Domain(_) | Error::Contract(_) => {
            PyValueError::new_err(err.to_string())
        }
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

/// Dense double-precision tensor (detached values plus a shape).
#[pyclass(name = "Tensor", from_py_object)]
#[derive(Clone)]
struct PyTensor {
    values: Vec<f64>,
    shape: Vec<usize>,
}

impl PyTensor {
    fn wrap(inner: CoreTensor<f64>) -> Self {
        PyTensor {
            values: inner.values().to_vec(),
            shape: inner.shape().to_vec(),
        }
    }

    fn as_core(&self) -> PyResult<CoreTensor<f64>> {
        CoreTensor::from_vec(&self.shape, self.values.clone()).map_err(to_py_err)
    }
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(values: Vec<f64>, shape: Vec<usize>) -> PyResult<Self> {
        // validate through the core constructor
        let t = CoreTensor::<f64>::from_vec(&shape, values).map_err(to_py_err)?;
        Ok(PyTensor::wrap(t))
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.shape.clone()
    }

    /// Flat values in row-major order.
    fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    fn numel(&self) -> usize {
        self.values.len()
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.shape)
    }
}

/// delta(Norm(ACC(conv3x3(x)))) — spatial convolution, bottom-up per-column
/// accumulation, row-count normalization, ELU.
#[pyfunction]
fn cumulative_convolution(input: &PyTensor, weight: &PyTensor, bias: &PyTensor) -> PyResult<PyTensor> {
    let params =
        daccn::CumulativeConvParams::new(weight.as_core()?, bias.as_core()?, Activation::Elu)
            .map_err(to_py_err)?;
    Ok(PyTensor::wrap(
        daccn::cumulative_convolution(&input.as_core()?, &params).map_err(to_py_err)?,
    ))
}

/// Resample by (s_x, s_y), run two 3x3 conv+ELU layers, resample back.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn direction_aware_block(
    input: &PyTensor,
    s_x: f64,
    s_y: f64,
    w0: &PyTensor,
    b0: &PyTensor,
    w1: &PyTensor,
    b1: &PyTensor,
) -> PyResult<PyTensor> {
    if s_x <= 0.0 || s_y <= 0.0 {
        return Err(PyValueError::new_err("scales must be positive"));
    }
    let scales = daccn::DirectionScales::from_tensors(
        CoreTensor::scalar(s_x.ln()),
        CoreTensor::scalar(s_y.ln()),
    )
    .map_err(to_py_err)?;
    let block = daccn::ConvBlockParams {
        conv: vec![
            (w0.as_core()?, b0.as_core()?),
            (w1.as_core()?, b1.as_core()?),
        ],
    };
    Ok(PyTensor::wrap(
        daccn::direction_aware_block(&input.as_core()?, &scales, &block).map_err(to_py_err)?,
    ))
}

/// Normalized sampling grid for the pure scaling map; returns
/// (grid, out_h, out_w).
#[pyfunction]
fn affine_grid(
    s_x: f64,
    s_y: f64,
    in_h: usize,
    in_w: usize,
    inverse: bool,
) -> PyResult<(PyTensor, usize, usize)> {
    if s_x <= 0.0 || s_y <= 0.0 {
        return Err(PyValueError::new_err("scales must be positive"));
    }
    let scales = daccn::DirectionScales::from_tensors(
        CoreTensor::scalar(s_x.ln()),
        CoreTensor::scalar(s_y.ln()),
    )
    .map_err(to_py_err)?;
    let (grid, oh, ow) = daccn::affine_grid(&scales, in_h, in_w, inverse).map_err(to_py_err)?;
    Ok((PyTensor::wrap(grid), oh, ow))
}

/// Per-pixel structural similarity map of two [N,C,H,W] images in [0,1].
#[pyfunction]
fn ssim(a: &PyTensor, b: &PyTensor) -> PyResult<PyTensor> {
    Ok(PyTensor::wrap(
        losses::ssim(&a.as_core()?, &b.as_core()?).map_err(to_py_err)?,
    ))
}

/// Edge-aware smoothness of a [N,1,H,W] disparity against a [N,3,H,W] image.
#[pyfunction]
fn smoothness_loss(disp: &PyTensor, image: &PyTensor) -> PyResult<f64> {
    losses::smoothness_loss(&disp.as_core()?, &image.as_core()?)
        .and_then(|t| t.item())
        .map_err(to_py_err)
}

/// Bilinear interpolation of `input` at a normalized [N,H',W',2] grid.
#[pyfunction]
fn bilinear_sample(input: &PyTensor, grid: &PyTensor) -> PyResult<PyTensor> {
    Ok(PyTensor::wrap(
        input.as_core()?.bilinear_sample(&grid.as_core()?).map_err(to_py_err)?,
    ))
}

/// Maps disparity in (0,1) to depth in (d_min, d_max).
#[pyfunction]
fn disparity_to_depth(disp: &PyTensor, d_min: f64, d_max: f64) -> PyResult<PyTensor> {
    Ok(PyTensor::wrap(
        geometry::disparity_to_depth(&disp.as_core()?, d_min, d_max)
            .map_err(to_py_err)?
            .values,
    ))
}

/// Warps a source image into the target view; returns (synthesized, mask).
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn warp_image(
    source: &PyTensor,
    depth: &PyTensor,
    axis_angle: [f64; 3],
    translation: [f64; 3],
    fx: f64,
    fy: f64,
    ox: f64,
    oy: f64,
) -> PyResult<(PyTensor, PyTensor)> {
    let k = geometry::CameraIntrinsics::new(fx, fy, ox, oy).map_err(to_py_err)?;
    let d_max = depth.values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let dmap =
        geometry::DepthMap::new(depth.as_core()?, 1e-6, d_max.max(1.0)).map_err(to_py_err)?;
    let pose = geometry::RigidTransform::from_axis_angle(axis_angle, translation);
    let (syn, mask) =
        geometry::warp_image_rigid(&source.as_core()?, &dmap, &pose, &k).map_err(to_py_err)?;
    Ok((PyTensor::wrap(syn), PyTensor::wrap(mask)))
}

fn report_to_dict<'py>(py: Python<'py>, r: &MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("abs_rel", r.abs_rel)?;
    d.set_item("sq_rel", r.sq_rel)?;
    d.set_item("rmse", r.rmse)?;
    d.set_item("rmse_log", r.rmse_log)?;
    d.set_item("delta1", r.delta1)?;
    d.set_item("delta2", r.delta2)?;
    d.set_item("delta3", r.delta3)?;
    d.set_item("n_pixels", r.n_pixels)?;
    Ok(d)
}

/// Seven-metric depth evaluation of a [N,1,H,W] prediction against ground
/// truth of the same shape.
#[pyfunction]
#[pyo3(signature = (pred, gt, median_scaling = true))]
fn metrics<'py>(
    py: Python<'py>,
    pred: &PyTensor,
    gt: &PyTensor,
    median_scaling: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let gmax = gt.values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let bound = gmax.max(1.0) * 10.0;
    let pd = geometry::DepthMap::new(pred.as_core()?, 1e-6, bound).map_err(to_py_err)?;
    let gd = geometry::DepthMap::new(gt.as_core()?, 1e-6, bound).map_err(to_py_err)?;
    let opts = MetricsOptions {
        median_scaling,
        clamp: (1e-6, bound),
        ..Default::default()
    };
    let r = depth_metrics(&pd, &gd, None, &opts).map_err(to_py_err)?;
    report_to_dict(py, &r)
}

/// Renders one photometrically consistent scene triplet. Returns a dict with
/// the target image, the two source images, exact depth, poses, and the
/// intrinsics.
#[pyfunction]
#[pyo3(signature = (seed, height = 96, width = 160))]
fn scene<'py>(py: Python<'py>, seed: u64, height: usize, width: usize) -> PyResult<Bound<'py, PyDict>> {
    let spec = SceneSpec {
        image_h: height,
        image_w: width,
        seed,
        ..Default::default()
    };
    let s = generate_scene::<f64>(&spec).map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("target", PyTensor::wrap(s.target.clone()))?;
    d.set_item(
        "sources",
        vec![
            PyTensor::wrap(s.sources[0].clone()),
            PyTensor::wrap(s.sources[1].clone()),
        ],
    )?;
    d.set_item("depth", PyTensor::wrap(s.gt_depth.values.clone()))?;
    let poses: Vec<Vec<f64>> = s
        .poses
        .iter()
        .map(|p| {
            let mut flat: Vec<f64> = p.rotation.iter().flatten().copied().collect();
            flat.extend_from_slice(&p.translation);
            flat
        })
        .collect();
    d.set_item("poses", poses)?;
    d.set_item("intrinsics", (s.k.fx, s.k.fy, s.k.ox, s.k.oy))?;
    Ok(d)
}

/// Runs the finite-difference gradient checks; returns one dict per
/// operation.
#[pyfunction]
fn gradcheck(py: Python<'_>) -> PyResult<Vec<Bound<'_, PyDict>>> {
    let report = run_suite(&standard_suite()).map_err(to_py_err)?;
    report
        .cases
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("name", c.name)?;
            d.set_item("max_rel_err", c.max_rel_err)?;
            d.set_item("tolerance", c.tolerance)?;
            d.set_item("pass", c.pass)?;
            Ok(d)
        })
        .collect()
}

/// The built-in default run configuration as TOML.
#[pyfunction]
fn default_config() -> PyResult<String> {
    RunConfig::default().to_toml_string().map_err(to_py_err)
}

/// Full training run from a TOML config string; returns a summary dict.
#[pyfunction]
fn train<'py>(py: Python<'py>, config_toml: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = RunConfig::from_toml_str(config_toml).map_err(to_py_err)?;
    let outcome = trainer::train_with_precision(&cfg).map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("initial_loss", outcome.initial_loss)?;
    d.set_item("final_loss", outcome.final_loss)?;
    d.set_item("checkpoint", outcome.checkpoint_path.to_string_lossy())?;
    d.set_item("trace", outcome.trace_path.to_string_lossy())?;
    d.set_item("metrics", report_to_dict(py, &outcome.metrics)?)?;
    d.set_item("learned_scales", outcome.learned_scales)?;
    Ok(d)
}

#[pymodule]
fn daccn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_function(wrap_pyfunction!(cumulative_convolution, m)?)?;
    m.add_function(wrap_pyfunction!(direction_aware_block, m)?)?;
    m.add_function(wrap_pyfunction!(affine_grid, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(smoothness_loss, m)?)?;
    m.add_function(wrap_pyfunction!(bilinear_sample, m)?)?;
    m.add_function(wrap_pyfunction!(disparity_to_depth, m)?)?;
    m.add_function(wrap_pyfunction!(warp_image, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(scene, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
