//! Dynamical systems (continuous vector fields and discrete maps), flow-map
//! evaluation by fixed-step RK4 or analytic flow, inverse flows, and
//! trajectory simulation with divergence detection.

use crate::error::{CoreError, Result};
use ndarray::{Array1, Array2, ArrayView1, Axis};

/// Any state component beyond this magnitude aborts integration.
pub const BLOWUP_THRESHOLD: f64 = 1e12;

/// Default RK4 integrator step.
pub const DEFAULT_DT: f64 = 1e-3;

/// Continuous-time ODE or discrete-time map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    ContinuousOde,
    DiscreteMap,
}

type FieldFn = dyn Fn(&ArrayView1<f64>) -> Array1<f64> + Send + Sync;
type JacobianFn = dyn Fn(&ArrayView1<f64>) -> Array2<f64> + Send + Sync;
type FlowFn = dyn Fn(&ArrayView1<f64>, f64) -> Array1<f64> + Send + Sync;

/// A vector field `ẋ = f(x)` or one-step map `x⁺ = f(x)` with metadata.
pub struct DynamicalSystem {
    pub name: String,
    pub kind: SystemKind,
    pub dimension: usize,
    field: Box<FieldFn>,
    jacobian: Option<Box<JacobianFn>>,
    analytic_flow: Option<Box<FlowFn>>,
    /// Assertion that `∇·f ≡ 0`, when known either way.
    pub divergence_free: Option<bool>,
}

impl std::fmt::Debug for DynamicalSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DynamicalSystem")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("dimension", &self.dimension)
            .field("has_jacobian", &self.jacobian.is_some())
            .field("has_analytic_flow", &self.analytic_flow.is_some())
            .field("divergence_free", &self.divergence_free)
            .finish()
    }
}

impl DynamicalSystem {
    pub fn new_continuous<F>(name: impl Into<String>, dimension: usize, field: F) -> Self
    where
        F: Fn(&ArrayView1<f64>) -> Array1<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            kind: SystemKind::ContinuousOde,
            dimension,
            field: Box::new(field),
            jacobian: None,
            analytic_flow: None,
            divergence_free: None,
        }
    }

    pub fn new_discrete<F>(name: impl Into<String>, dimension: usize, map: F) -> Self
    where
        F: Fn(&ArrayView1<f64>) -> Array1<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            kind: SystemKind::DiscreteMap,
            dimension,
            field: Box::new(map),
            jacobian: None,
            analytic_flow: None,
            divergence_free: None,
        }
    }

    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&ArrayView1<f64>) -> Array2<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Box::new(jac));
        self
    }

    pub fn with_analytic_flow<G>(mut self, flow: G) -> Self
    where
        G: Fn(&ArrayView1<f64>, f64) -> Array1<f64> + Send + Sync + 'static,
    {
        self.analytic_flow = Some(Box::new(flow));
        self
    }

    pub fn with_divergence_free(mut self, flag: bool) -> Self {
        self.divergence_free = Some(flag);
        self
    }

    pub fn is_continuous(&self) -> bool {
        self.kind == SystemKind::ContinuousOde
    }

    pub fn has_analytic_flow(&self) -> bool {
        self.analytic_flow.is_some()
    }

    fn check_state(&self, x: &ArrayView1<f64>, context: &str) -> Result<()> {
        if x.len() != self.dimension {
            return Err(CoreError::DimensionMismatch {
                context: format!("{} on system '{}'", context, self.name),
                expected: self.dimension,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Evaluates the vector field (or discrete one-step map) at `x`.
    pub fn field(&self, x: &ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_state(x, "field evaluation")?;
        let out = (self.field)(x);
        if out.len() != self.dimension {
            return Err(CoreError::DimensionMismatch {
                context: format!("field output of system '{}'", self.name),
                expected: self.dimension,
                got: out.len(),
            });
        }
        Ok(out)
    }

    /// Jacobian of `f` at `x`: analytic when supplied, else central
    /// differences with step `1e-6 * (1 + ‖x‖_∞)`.
    pub fn jacobian(&self, x: &ArrayView1<f64>) -> Result<Array2<f64>> {
        self.check_state(x, "jacobian evaluation")?;
        if let Some(j) = &self.jacobian {
            return Ok(j(x));
        }
        let n = self.dimension;
        let norm_inf = x.iter().map(|v| v.abs()).fold(0.0_f64, f64::max);
        let h = 1e-6 * (1.0 + norm_inf);
        let mut jac = Array2::<f64>::zeros((n, n));
        let mut xp = x.to_owned();
        for j in 0..n {
            let orig = xp[j];
            xp[j] = orig + h;
            let fp = self.field(&xp.view())?;
            xp[j] = orig - h;
            let fm = self.field(&xp.view())?;
            xp[j] = orig;
            for i in 0..n {
                jac[[i, j]] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        Ok(jac)
    }

    /// Divergence `∇·f` at `x` (trace of the Jacobian).
    pub fn divergence(&self, x: &ArrayView1<f64>) -> Result<f64> {
        let j = self.jacobian(x)?;
        Ok(j.diag().sum())
    }

    /// Flow map `F_t(x)`. Continuous systems use the analytic flow when
    /// present, otherwise fixed-step RK4 with step `dt` (last step shortened
    /// to land exactly on `t`). Discrete maps iterate `f` exactly `t` times;
    /// `t` must then be a nonnegative integer and `dt` is ignored.
    pub fn flow(&self, x: &ArrayView1<f64>, t: f64, dt: f64) -> Result<Array1<f64>> {
        self.check_state(x, "flow")?;
        if t < 0.0 {
            return Err(CoreError::Domain(format!(
                "flow requires t >= 0 (got {}); backward evolution is flow_inverse",
                t
            )));
        }
        match self.kind {
            SystemKind::DiscreteMap => self.iterate_map(x, t),
            SystemKind::ContinuousOde => {
                if let Some(flow) = &self.analytic_flow {
                    let out = flow(x, t);
                    check_finite(&out.view(), t)?;
                    Ok(out)
                } else {
                    self.flow_rk4(x, t, dt)
                }
            }
        }
    }

    /// Forces the RK4 integration path even when an analytic flow exists.
    /// Continuous systems only.
    pub fn flow_rk4(&self, x: &ArrayView1<f64>, t: f64, dt: f64) -> Result<Array1<f64>> {
        self.check_state(x, "flow_rk4")?;
        if !self.is_continuous() {
            return Err(CoreError::Unsupported(
                "flow_rk4 applies to continuous systems only".into(),
            ));
        }
        if t < 0.0 {
            return Err(CoreError::Domain(format!(
                "flow_rk4 requires t >= 0 (got {})",
                t
            )));
        }
        if t > 0.0 && !(dt > 0.0) {
            return Err(CoreError::Domain(format!(
                "flow_rk4 requires dt > 0 (got {})",
                dt
            )));
        }
        integrate_rk4(&|y| self.field(y), x, t, dt)
    }

    /// Inverse flow `F_t^{-1}(x)` for `t >= 0`. Implemented as forward RK4
    /// integration of the reversed field `−f`, or as the analytic flow
    /// evaluated at `−t` when one is available.
    pub fn flow_inverse(&self, x: &ArrayView1<f64>, t: f64, dt: f64) -> Result<Array1<f64>> {
        self.check_state(x, "flow_inverse")?;
        if !self.is_continuous() {
            return Err(CoreError::Unsupported(format!(
                "flow_inverse: discrete map '{}' has no declared inverse",
                self.name
            )));
        }
        if t < 0.0 {
            return Err(CoreError::Domain(format!(
                "flow_inverse requires t >= 0 (got {})",
                t
            )));
        }
        if let Some(flow) = &self.analytic_flow {
            let out = flow(x, -t);
            check_finite(&out.view(), t)?;
            return Ok(out);
        }
        integrate_rk4(&|y| Ok(-self.field(y)?), x, t, dt)
    }

    fn iterate_map(&self, x: &ArrayView1<f64>, t: f64) -> Result<Array1<f64>> {
        let steps = as_step_count(t)?;
        let mut state = x.to_owned();
        for k in 0..steps {
            state = self.field(&state.view())?;
            check_finite(&state.view(), (k + 1) as f64)?;
        }
        Ok(state)
    }

    /// Simulates a trajectory from `x0` over `horizon`, sampled every `dt`
    /// (discrete maps: every step; `dt` ignored). `output_map` fills the
    /// trajectory's outputs when given. Divergence mid-run returns
    /// `SimulationDiverged` with the partial trajectory attached.
    pub fn simulate(
        &self,
        x0: &ArrayView1<f64>,
        horizon: f64,
        dt: f64,
        output_map: Option<&OutputMap>,
    ) -> Result<Trajectory> {
        self.check_state(x0, "simulate")?;
        if !(horizon > 0.0) {
            return Err(CoreError::Domain(format!(
                "simulate requires horizon > 0 (got {})",
                horizon
            )));
        }
        let (steps, step_dt) = match self.kind {
            SystemKind::DiscreteMap => (as_step_count(horizon)?, 1.0),
            SystemKind::ContinuousOde => {
                if !(dt > 0.0) {
                    return Err(CoreError::Domain(format!(
                        "simulate requires dt > 0 (got {})",
                        dt
                    )));
                }
                // Sample at multiples of dt; the final partial step (if any)
                // lands exactly on the horizon.
                let full = (horizon / dt).floor() as usize;
                let rem = horizon - full as f64 * dt;
                (full + if rem > 1e-12 * dt.max(1.0) { 1 } else { 0 }, dt)
            }
        };

        let mut times = Vec::with_capacity(steps + 1);
        let mut states = Vec::with_capacity(steps + 1);
        let mut state = x0.to_owned();
        times.push(0.0);
        states.push(state.clone());
        for k in 0..steps {
            let t_next = ((k + 1) as f64 * step_dt).min(horizon);
            let next = match self.kind {
                SystemKind::DiscreteMap => self.field(&state.view()),
                SystemKind::ContinuousOde => {
                    let h = t_next - times[times.len() - 1];
                    self.step_once(&state.view(), h)
                }
            };
            let next = next.and_then(|s| {
                check_finite(&s.view(), t_next)?;
                Ok(s)
            });
            match next {
                Ok(s) => {
                    state = s;
                    times.push(t_next);
                    states.push(state.clone());
                }
                Err(_) => {
                    let partial = Trajectory::assemble(times, states, None, x0.to_owned())?;
                    return Err(CoreError::SimulationDiverged {
                        time: t_next,
                        partial: Box::new(partial),
                    });
                }
            }
        }

        let outputs = match output_map {
            None => None,
            Some(g) => {
                let mut rows: Vec<Array1<f64>> = Vec::with_capacity(states.len());
                for s in &states {
                    rows.push(g(&s.view()));
                }
                let m = rows.first().map(|r| r.len()).unwrap_or(0);
                let mut out = Array2::<f64>::zeros((rows.len(), m));
                for (i, r) in rows.iter().enumerate() {
                    out.row_mut(i).assign(r);
                }
                Some(out)
            }
        };
        Trajectory::assemble(times, states, outputs, x0.to_owned())
    }

    /// One sampling step of length `h`. The analytic flow is used when
    /// available; otherwise RK4 with substeps capped at `DEFAULT_DT`, so a
    /// coarse sampling interval does not degrade integration accuracy.
    fn step_once(&self, x: &ArrayView1<f64>, h: f64) -> Result<Array1<f64>> {
        if let Some(flow) = &self.analytic_flow {
            return Ok(flow(x, h));
        }
        integrate_rk4(&|y| self.field(y), x, h, h.min(DEFAULT_DT))
    }
}

/// Vector-valued output map used by `simulate`.
pub type OutputMap = dyn Fn(&ArrayView1<f64>) -> Array1<f64> + Sync;

fn as_step_count(t: f64) -> Result<usize> {
    let k = t.round();
    if (t - k).abs() > 1e-9 || k < 0.0 {
        return Err(CoreError::Domain(format!(
            "discrete map needs a nonnegative integer step count, got t = {}",
            t
        )));
    }
    Ok(k as usize)
}

fn check_finite(x: &ArrayView1<f64>, t: f64) -> Result<()> {
    for &v in x.iter() {
        if !v.is_finite() || v.abs() > BLOWUP_THRESHOLD {
            return Err(CoreError::Divergence {
                time: t,
                detail: format!(
                    "state component {} exceeds blow-up threshold {:e}",
                    v, BLOWUP_THRESHOLD
                ),
            });
        }
    }
    Ok(())
}

/// Classical fixed-step RK4 from 0 to `t`; the last step is shortened so the
/// integration lands exactly on `t`. Divergence checks after every step.
fn integrate_rk4<F>(f: &F, x0: &ArrayView1<f64>, t: f64, dt: f64) -> Result<Array1<f64>>
where
    F: Fn(&ArrayView1<f64>) -> Result<Array1<f64>>,
{
    if t == 0.0 {
        return Ok(x0.to_owned());
    }
    if !(dt > 0.0) {
        return Err(CoreError::Domain(format!(
            "RK4 integration requires dt > 0 (got {})",
            dt
        )));
    }
    let mut x = x0.to_owned();
    let mut elapsed = 0.0;
    while elapsed < t {
        let h = dt.min(t - elapsed);
        x = rk4_step(f, &x, h)?;
        elapsed += h;
        check_finite(&x.view(), elapsed)?;
        // Guard against h underflowing to zero near the endpoint.
        if h < 1e-300 {
            break;
        }
    }
    Ok(x)
}

fn rk4_step<F>(f: &F, x: &Array1<f64>, h: f64) -> Result<Array1<f64>>
where
    F: Fn(&ArrayView1<f64>) -> Result<Array1<f64>>,
{
    let k1 = f(&x.view())?;
    let k2 = f(&(x + &(&k1 * (h / 2.0))).view())?;
    let k3 = f(&(x + &(&k2 * (h / 2.0))).view())?;
    let k4 = f(&(x + &(&k3 * h)).view())?;
    Ok(x + &((k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)))
}

/// States over time, with optional outputs, from a single initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Row `i` is the state at `times[i]`.
    pub states: Array2<f64>,
    /// Row `i` is the output at `times[i]`, when an output map was supplied.
    pub outputs: Option<Array2<f64>>,
    pub initial_condition: Array1<f64>,
}

impl Trajectory {
    fn assemble(
        times: Vec<f64>,
        states: Vec<Array1<f64>>,
        outputs: Option<Array2<f64>>,
        initial_condition: Array1<f64>,
    ) -> Result<Self> {
        let n = initial_condition.len();
        let mut mat = Array2::<f64>::zeros((states.len(), n));
        for (i, s) in states.iter().enumerate() {
            mat.row_mut(i).assign(s);
        }
        let traj = Self {
            times,
            states: mat,
            outputs,
            initial_condition,
        };
        traj.validate()?;
        Ok(traj)
    }

    /// Builds a trajectory from parts, enforcing the structural invariants.
    pub fn new(
        times: Vec<f64>,
        states: Array2<f64>,
        outputs: Option<Array2<f64>>,
    ) -> Result<Self> {
        if states.nrows() == 0 {
            return Err(CoreError::Shape("trajectory must have at least one sample".into()));
        }
        let initial_condition = states.row(0).to_owned();
        let traj = Self {
            times,
            states,
            outputs,
            initial_condition,
        };
        traj.validate()?;
        Ok(traj)
    }

    fn validate(&self) -> Result<()> {
        if self.times.len() != self.states.nrows() {
            return Err(CoreError::Shape(format!(
                "trajectory has {} times but {} states",
                self.times.len(),
                self.states.nrows()
            )));
        }
        if let Some(y) = &self.outputs {
            if y.nrows() != self.times.len() {
                return Err(CoreError::Shape(format!(
                    "trajectory has {} times but {} outputs",
                    self.times.len(),
                    y.nrows()
                )));
            }
        }
        for w in self.times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(CoreError::Shape(format!(
                    "trajectory times must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if self.states.nrows() > 0 {
            let first = self.states.row(0);
            if first
                .iter()
                .zip(self.initial_condition.iter())
                .any(|(a, b)| a != b)
            {
                return Err(CoreError::Shape(
                    "trajectory states[0] must equal the initial condition".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Consecutive state pairs `(x_i, x_{i+1})` as two stacked matrices,
    /// the snapshot format EDMD consumes.
    pub fn snapshot_pairs(&self) -> (Array2<f64>, Array2<f64>) {
        let n = self.states.nrows();
        if n < 2 {
            let d = self.states.ncols();
            return (Array2::zeros((0, d)), Array2::zeros((0, d)));
        }
        let x = self.states.slice(ndarray::s![..n - 1, ..]).to_owned();
        let y = self.states.slice(ndarray::s![1.., ..]).to_owned();
        (x, y)
    }

    /// Stacks the snapshot pairs of several trajectories.
    pub fn stack_snapshot_pairs(trajs: &[&Trajectory]) -> Result<(Array2<f64>, Array2<f64>)> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for t in trajs {
            let (x, y) = t.snapshot_pairs();
            xs.push(x);
            ys.push(y);
        }
        let xv: Vec<_> = xs.iter().map(|m| m.view()).collect();
        let yv: Vec<_> = ys.iter().map(|m| m.view()).collect();
        let x = ndarray::concatenate(Axis(0), &xv).map_err(|e| CoreError::Shape(e.to_string()))?;
        let y = ndarray::concatenate(Axis(0), &yv).map_err(|e| CoreError::Shape(e.to_string()))?;
        Ok((x, y))
    }
}
