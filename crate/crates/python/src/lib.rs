use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mblab::solvers::{solve_multitransition, HeteroPair};
use mblab::verify::{battery_passed, run_battery, BatteryInput, VerifyOptions};
use mblab::{Error, Field, GridSpec, MinimizeOptions, SolveReport, SolverOptions, TransitionSpec};

create_exception!(mblab_py, SolverError, PyException);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Shape(_) | Error::Range(_) => PyValueError::new_err(e.to_string()),
        other => SolverError::new_err(other.to_string()),
    }
}

#[pyclass(module = "mblab_py", frozen)]
struct Potential {
    inner: mblab::Potential,
}

#[pymethods]
impl Potential {
    #[new]
    #[pyo3(signature = (family = "pendulum_modulated", epsilon = 0.3, shift = 0.0))]
    fn new(family: &str, epsilon: f64, shift: f64) -> PyResult<Self> {
        let inner = mblab::Potential::from_id(family, epsilon).map_err(py_err)?.with_shift(shift);
        Ok(Self { inner })
    }

    /// `F(x, u)` at `x = (x1, x2, x3)`.
    #[pyo3(signature = (u, x1, x2 = 0.0, x3 = 0.0))]
    fn f(&self, u: f64, x1: f64, x2: f64, x3: f64) -> f64 {
        self.inner.f(&[x1, x2, x3], u)
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family().id()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon()
    }

    fn __repr__(&self) -> String {
        format!("Potential('{}', epsilon={})", self.inner.family(), self.inner.epsilon())
    }
}

fn grid_dict<'py>(py: Python<'py>, u: &Field) -> PyResult<Bound<'py, PyDict>> {
    let g = u.grid();
    let d = PyDict::new(py);
    d.set_item("x1", (0..g.nx1()).map(|k| g.x1(k)).collect::<Vec<_>>())?;
    d.set_item("values", u.values())?;
    d.set_item("n", g.dim())?;
    d.set_item("N", g.points_per_unit())?;
    if !g.is_periodic_x1() {
        d.set_item("a", g.left())?;
        d.set_item("b", g.right())?;
    }
    Ok(d)
}

fn report_dict<'py>(py: Python<'py>, r: &SolveReport) -> PyResult<Bound<'py, PyDict>> {
    let d = grid_dict(py, &r.minimizer)?;
    d.set_item("objective", r.objective)?;
    d.set_item("pde_residual", r.pde_residual)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("converged", r.converged)?;
    d.set_item("strictly_inactive", r.strictly_inactive)?;
    d.set_item("margins", r.margins.iter().map(|m| m.margin).collect::<Vec<_>>())?;
    Ok(d)
}

/// Cell problem plus everything built on it at one resolution.
#[pyclass(module = "mblab_py")]
struct Problem {
    inner: mblab::Problem,
    opts: SolverOptions,
    pair: Option<HeteroPair>,
    multi: Option<(SolveReport, TransitionSpec)>,
}

impl Problem {
    fn ensure_pair(&mut self) -> PyResult<&HeteroPair> {
        if self.pair.is_none() {
            self.pair = Some(HeteroPair::solve(&self.inner, &self.opts).map_err(py_err)?);
        }
        Ok(self.pair.as_ref().expect("just set"))
    }
}

#[pymethods]
impl Problem {
    #[new]
    #[pyo3(signature = (potential, n = 1, points_per_unit = 32, half_length = 20))]
    fn new(potential: &Potential, n: usize, points_per_unit: usize, half_length: i64) -> PyResult<Self> {
        let mut opts = SolverOptions::for_resolution(points_per_unit);
        opts.hetero_half_length = half_length;
        let inner = mblab::Problem::new(potential.inner, n, points_per_unit, &MinimizeOptions::for_resolution(points_per_unit))
            .map_err(py_err)?;
        Ok(Self {
            inner,
            opts,
            pair: None,
            multi: None,
        })
    }

    #[getter]
    fn c0(&self) -> f64 {
        self.inner.c0
    }

    #[getter]
    fn rho_bar(&self) -> PyResult<f64> {
        self.inner.rho_bar().map_err(py_err)
    }

    /// Both heteroclinics; keys `c1`, `c1_prime`, `vw`, `wv`.
    fn heteroclinic<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let pair = self.ensure_pair()?;
        let d = PyDict::new(py);
        d.set_item("c1", pair.c1())?;
        d.set_item("c1_prime", pair.c1_prime())?;
        d.set_item("vw", report_dict(py, &pair.vw)?)?;
        d.set_item("wv", report_dict(py, &pair.wv)?)?;
        Ok(d)
    }

    /// Constrained `2K`-transition solve; defaults to the standard block.
    #[pyo3(signature = (m = None, l = None, rho = None, alphabet_size = 1))]
    fn multi<'py>(
        &mut self,
        py: Python<'py>,
        m: Option<Vec<i64>>,
        l: Option<Vec<i64>>,
        rho: Option<Vec<f64>>,
        alphabet_size: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let base = TransitionSpec::default_block();
        let spec = TransitionSpec::new(
            m.unwrap_or(base.m),
            l.unwrap_or(base.l),
            rho.unwrap_or(base.rho),
            alphabet_size,
        )
        .map_err(py_err)?;
        self.ensure_pair()?;
        let pair = self.pair.as_ref().expect("solved above");
        let r = py
            .detach(|| solve_multitransition(&self.inner, &spec, pair, &self.opts))
            .map_err(py_err)?;
        let d = report_dict(py, &r)?;
        self.multi = Some((r, spec));
        Ok(d)
    }

    /// Renormalized energy of node values on the strip `[a, b]`.
    fn energy(&self, values: Vec<f64>, a: i64, b: i64) -> PyResult<f64> {
        let g = GridSpec::strip(self.inner.dim, a, b, self.inner.points_per_unit).map_err(py_err)?;
        let u = Field::from_values(g, &values).map_err(py_err)?;
        Ok(self.inner.energy(&u))
    }

    /// Check battery on the solved heteroclinics (and the last `multi` run).
    /// Returns `(passed, results_json)`.
    #[pyo3(signature = (seed = 0))]
    fn verify(&mut self, seed: u64) -> PyResult<(bool, String)> {
        self.ensure_pair()?;
        let opts = VerifyOptions {
            seed,
            ..VerifyOptions::default()
        };
        let input = BatteryInput {
            problem: &self.inner,
            pair: self.pair.as_ref().expect("solved above"),
            multi: self.multi.as_ref().map(|(r, s)| (r, s)),
            solver: &self.opts,
            opts: &opts,
        };
        let results = run_battery(&input).map_err(py_err)?;
        let text = mblab::io::to_json_string(&results).map_err(py_err)?;
        Ok((battery_passed(&results), text))
    }
}

#[pymodule]
fn mblab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Potential>()?;
    m.add_class::<Problem>()?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    Ok(())
}
