//! Python bindings: `import adamdp_py`.

use adamdp::adherence::{adherence_lp, effective_policy, AdherenceSpec};
use adamdp::adversarial::{simulate_random_adherence, AdherenceDistribution};
use adamdp::analysis::theta_sweep;
use adamdp::constrained::{evaluate_constrained, mip_model, CardinalityBudget};
use adamdp::evaluation::evaluate_policy;
use adamdp::instances::{builtin as builtin_bundle, load_bundle, InstanceBundle};
use adamdp::{
    check_saddle as saddle, robust_baseline_solve, robust_theta_solve, solve_adamdp, BaselineAmbiguity, Error,
    MdpInstance, SolveResult, StationaryPolicy, ThetaInterval,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(
    adamdp_py,
    GuardExceeded,
    PyException,
    "Enumeration would exceed the size guard."
);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        Error::GuardExceeded { .. } => GuardExceeded::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for adamdp::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// A finite discounted MDP.
#[pyclass(name = "Mdp", module = "adamdp_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMdp {
    inner: MdpInstance,
}

#[pymethods]
impl PyMdp {
    /// `transitions[s][a][s']`, `rewards[s][a][s']` (or `rewards[s][a]`).
    #[new]
    fn new(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: &Bound<'_, PyAny>,
        initial_dist: Vec<f64>,
        discount: f64,
    ) -> PyResult<Self> {
        let inner = if let Ok(r) = rewards.extract::<Vec<Vec<Vec<f64>>>>() {
            MdpInstance::from_nested(&transitions, &r, initial_dist, discount)
        } else {
            let r: Vec<Vec<f64>> = rewards.extract()?;
            MdpInstance::with_state_action_rewards(&transitions, &r, initial_dist, discount)
        }
        .py()?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    #[getter]
    fn discount(&self) -> f64 {
        self.inner.discount()
    }

    /// Human-readable list of violated invariants (empty when valid).
    fn validate(&self) -> Vec<String> {
        self.inner.validate().iter().map(ToString::to_string).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Mdp(n_states={}, n_actions={}, discount={})",
            self.inner.n_states(),
            self.inner.n_actions(),
            self.inner.discount()
        )
    }
}

/// A stationary (possibly randomized) policy.
#[pyclass(name = "Policy", module = "adamdp_py", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyPolicy {
    inner: StationaryPolicy,
}

#[pymethods]
impl PyPolicy {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: StationaryPolicy::new(rows).py()?,
        })
    }

    #[staticmethod]
    fn deterministic(actions: Vec<usize>, n_actions: usize) -> PyResult<Self> {
        Ok(Self {
            inner: StationaryPolicy::deterministic(&actions, n_actions).py()?,
        })
    }

    #[getter]
    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows()
    }

    /// Chosen action per state, or `None` for a randomized policy.
    fn actions(&self) -> Option<Vec<usize>> {
        self.inner.actions()
    }

    fn __repr__(&self) -> String {
        match self.inner.actions() {
            Some(a) => format!("Policy.deterministic({a:?})"),
            None => format!("Policy({:?})", self.inner.rows()),
        }
    }
}

fn to_py(pi: &StationaryPolicy) -> PyPolicy {
    PyPolicy { inner: pi.clone() }
}

/// Output of a solve.
#[pyclass(name = "Solution", module = "adamdp_py", frozen, get_all)]
struct PySolution {
    recommendation: PyPolicy,
    effective: PyPolicy,
    value: Vec<f64>,
    ret: f64,
    iterations: usize,
    residual: f64,
}

impl From<SolveResult> for PySolution {
    fn from(r: SolveResult) -> Self {
        Self {
            recommendation: to_py(&r.recommendation),
            effective: to_py(&r.effective),
            value: r.value.0,
            ret: r.ret,
            iterations: r.iterations,
            residual: r.residual,
        }
    }
}

#[pymethods]
impl PySolution {
    fn __repr__(&self) -> String {
        format!("Solution(ret={}, iterations={})", self.ret, self.iterations)
    }
}

/// Scalar, per-state list, or per-state-action nested list.
fn adherence(theta: &Bound<'_, PyAny>) -> PyResult<AdherenceSpec> {
    if let Ok(t) = theta.extract::<f64>() {
        return Ok(AdherenceSpec::Scalar(t));
    }
    if let Ok(ts) = theta.extract::<Vec<f64>>() {
        return Ok(AdherenceSpec::PerState(ts));
    }
    theta
        .extract::<Vec<Vec<f64>>>()
        .map(AdherenceSpec::PerStateAction)
        .map_err(|_| PyValueError::new_err("theta must be a float, a list of floats or a list of lists"))
}

fn unpack<'py>(py: Python<'py>, b: InstanceBundle) -> PyResult<(PyMdp, Bound<'py, PyDict>)> {
    let d = PyDict::new(py);
    for (name, pi) in &b.baselines {
        d.set_item(name, to_py(pi))?;
    }
    Ok((PyMdp { inner: b.instance }, d))
}

/// Builtin instance and its named baselines.
#[pyfunction]
#[pyo3(signature = (name, lam=None, epsilon=None))]
fn builtin<'py>(
    py: Python<'py>,
    name: &str,
    lam: Option<f64>,
    epsilon: Option<f64>,
) -> PyResult<(PyMdp, Bound<'py, PyDict>)> {
    unpack(py, builtin_bundle(name, lam, epsilon).py()?)
}

/// Instance and baselines from a JSON file.
#[pyfunction]
fn load<'py>(py: Python<'py>, path: &str) -> PyResult<(PyMdp, Bound<'py, PyDict>)> {
    unpack(py, load_bundle(path).py()?)
}

/// `(values, return)` of a policy.
#[pyfunction]
fn evaluate(mdp: &PyMdp, policy: &PyPolicy) -> PyResult<(Vec<f64>, f64)> {
    let (v, r) = evaluate_policy(&mdp.inner, &policy.inner).py()?;
    Ok((v.0, r))
}

/// The policy executed when `alg` is recommended to a follower of `base`.
#[pyfunction]
fn effective(alg: &PyPolicy, base: &PyPolicy, theta: &Bound<'_, PyAny>) -> PyResult<PyPolicy> {
    Ok(PyPolicy {
        inner: effective_policy(&alg.inner, &base.inner, &adherence(theta)?).py()?,
    })
}

/// Optimal recommendation for adherence `theta`.
#[pyfunction]
#[pyo3(signature = (mdp, base, theta, tol=1e-10))]
fn solve(mdp: &PyMdp, base: &PyPolicy, theta: &Bound<'_, PyAny>, tol: f64) -> PyResult<PySolution> {
    Ok(solve_adamdp(&mdp.inner, &base.inner, &adherence(theta)?, tol)
        .py()?
        .into())
}

/// Grid sweep over theta with bisected breakpoints.
#[pyfunction]
#[pyo3(signature = (mdp, base, grid=101, bisection_tol=1e-6))]
fn sweep<'py>(
    py: Python<'py>,
    mdp: &PyMdp,
    base: &PyPolicy,
    grid: usize,
    bisection_tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let s = theta_sweep(&mdp.inner, &base.inner, grid, bisection_tol).py()?;
    let d = PyDict::new(py);
    d.set_item("theta", &s.grid)?;
    d.set_item("return_opt", &s.returns_opt)?;
    d.set_item("return_naive", &s.returns_naive)?;
    d.set_item("deterioration", s.deterioration())?;
    d.set_item("breakpoints", &s.breakpoints)?;
    d.set_item(
        "segments",
        s.segments
            .iter()
            .map(|g| (g.lo, g.hi, to_py(&g.recommendation)))
            .collect::<Vec<_>>(),
    )?;
    d.set_item("nominal", to_py(&s.nominal))?;
    Ok(d)
}

/// Monte Carlo return under random adherence. `dist` is `bernoulli`,
/// `uniform` or `constant`.
#[pyfunction]
#[pyo3(signature = (mdp, alg, base, theta, dist="bernoulli", horizon=200, trials=10_000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    mdp: &PyMdp,
    alg: &PyPolicy,
    base: &PyPolicy,
    theta: f64,
    dist: &str,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let dist = match dist {
        "bernoulli" => AdherenceDistribution::Bernoulli(theta),
        "uniform" => AdherenceDistribution::Uniform(theta),
        "constant" => AdherenceDistribution::Constant(theta),
        other => return Err(PyValueError::new_err(format!("unknown distribution '{other}'"))),
    };
    let r = simulate_random_adherence(&mdp.inner, &alg.inner, &base.inner, dist, horizon, trials, seed).py()?;
    let d = PyDict::new(py);
    d.set_item("mean", r.mean)?;
    d.set_item("std_error", r.std_error)?;
    d.set_item("trials", r.trials)?;
    d.set_item("horizon", r.horizon)?;
    d.set_item("truncation", r.truncation)?;
    Ok(d)
}

/// Saddle-point check at `theta`.
#[pyfunction]
#[pyo3(signature = (mdp, base, theta, tol=1e-9))]
fn check_saddle<'py>(
    py: Python<'py>,
    mdp: &PyMdp,
    base: &PyPolicy,
    theta: f64,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = saddle(&mdp.inner, &base.inner, theta, tol).py()?;
    let d = PyDict::new(py);
    d.set_item("optimum", r.optimum.ret)?;
    d.set_item("unconstrained_u", &r.unconstrained_u)?;
    d.set_item("unconstrained_return", r.unconstrained_return)?;
    d.set_item("time_invariant_u", &r.time_invariant_u)?;
    d.set_item("time_invariant_return", r.time_invariant_return)?;
    d.set_item("scalar_max_min", r.scalar_max_min)?;
    d.set_item("scalar_min_max", r.scalar_min_max)?;
    d.set_item("max_gap", r.max_gap)?;
    d.set_item("passed", r.passed)?;
    Ok(d)
}

/// Worst return when at most `k` states deviate; `(worst_u, worst_return)`.
#[pyfunction]
fn constrained(mdp: &PyMdp, alg: &PyPolicy, base: &PyPolicy, k: usize) -> PyResult<(Vec<u32>, f64)> {
    let r = evaluate_constrained(&mdp.inner, &alg.inner, &base.inner, CardinalityBudget { k }).py()?;
    Ok((r.worst_u.iter().map(|&x| u32::from(x)).collect(), r.worst_return))
}

/// Max-min recommendation over `theta ∈ [lo, hi]`; `(solution, certificate_holds)`.
#[pyfunction]
#[pyo3(signature = (mdp, base, lo, hi, tol=1e-10))]
fn robust_theta(mdp: &PyMdp, base: &PyPolicy, lo: f64, hi: f64, tol: f64) -> PyResult<(PySolution, bool)> {
    let r = robust_theta_solve(&mdp.inner, &base.inner, ThetaInterval::new(lo, hi).py()?, tol).py()?;
    Ok((r.result.into(), r.certificate.holds))
}

/// Max-min recommendation against every baseline in the hull of `baselines`.
#[pyfunction]
#[pyo3(signature = (mdp, baselines, theta, tol=1e-10))]
fn robust_baseline(mdp: &PyMdp, baselines: Vec<PyRef<'_, PyPolicy>>, theta: f64, tol: f64) -> PyResult<PySolution> {
    let pols: Vec<StationaryPolicy> = baselines.iter().map(|p| p.inner.clone()).collect();
    let amb = BaselineAmbiguity::from_policies(&pols).py()?;
    Ok(robust_baseline_solve(&mdp.inner, &amb, theta, tol).py()?.into())
}

/// The adherence LP in CPLEX LP format.
#[pyfunction]
fn export_lp(mdp: &PyMdp, base: &PyPolicy, theta: &Bound<'_, PyAny>) -> PyResult<String> {
    Ok(adherence_lp(&mdp.inner, &base.inner, &adherence(theta)?)
        .py()?
        .to_string_lossy())
}

/// The cardinality-constrained adversary MIP in CPLEX LP format.
#[pyfunction]
fn export_mip(mdp: &PyMdp, alg: &PyPolicy, base: &PyPolicy, k: usize) -> PyResult<String> {
    Ok(mip_model(&mdp.inner, &alg.inner, &base.inner, CardinalityBudget { k })
        .py()?
        .to_string_lossy())
}

#[pymodule]
fn adamdp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMdp>()?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PySolution>()?;
    m.add("GuardExceeded", m.py().get_type::<GuardExceeded>())?;
    for f in [
        wrap_pyfunction!(builtin, m)?,
        wrap_pyfunction!(load, m)?,
        wrap_pyfunction!(evaluate, m)?,
        wrap_pyfunction!(effective, m)?,
        wrap_pyfunction!(solve, m)?,
        wrap_pyfunction!(sweep, m)?,
        wrap_pyfunction!(simulate, m)?,
        wrap_pyfunction!(check_saddle, m)?,
        wrap_pyfunction!(constrained, m)?,
        wrap_pyfunction!(robust_theta, m)?,
        wrap_pyfunction!(robust_baseline, m)?,
        wrap_pyfunction!(export_lp, m)?,
        wrap_pyfunction!(export_mip, m)?,
    ] {
        m.add_function(f)?;
    }
    Ok(())
}
