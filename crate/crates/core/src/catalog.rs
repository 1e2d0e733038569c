//! Canonical test systems: linear (continuous and discrete), logistic,
//! Van der Pol, pendulum, rotation, constant advection, Duffing. Also a
//! string-spec constructor used by the command line
//! (`name` or `name:key=value,...`).

use crate::dynamics::DynamicalSystem;
use crate::error::{CoreError, Result};
use crate::linalg::expm;
use ndarray::{array, Array1, Array2};
use std::collections::HashMap;
use std::sync::Mutex;

const VALID_NAMES: &str =
    "linear, linear_discrete, logistic, van_der_pol, pendulum, rotation, constant_advection, duffing";

/// Continuous `ẋ = Ax` with analytic flow `e^{At}x` (exponentials are cached
/// per distinct `t`).
pub fn linear_continuous(a: Array2<f64>) -> Result<DynamicalSystem> {
    let n = square_dim(&a, "linear_continuous")?;
    let trace: f64 = a.diag().sum();
    let a_field = a.clone();
    let a_jac = a.clone();
    let cache: Mutex<HashMap<u64, Array2<f64>>> = Mutex::new(HashMap::new());
    let sys = DynamicalSystem::new_continuous("linear", n, move |x| a_field.dot(x))
        .with_jacobian(move |_x| a_jac.clone())
        .with_analytic_flow(move |x, t| {
            let key = t.to_bits();
            let mut cache = cache.lock().unwrap();
            let e = cache
                .entry(key)
                .or_insert_with(|| expm(&a.mapv(|v| v * t)).expect("expm of finite matrix"));
            e.dot(x)
        })
        .with_divergence_free(trace.abs() < 1e-14);
    Ok(sys)
}

/// Discrete `x⁺ = Ax` with analytic flow `Aᵗx` (integer `t`).
pub fn linear_discrete(a: Array2<f64>) -> Result<DynamicalSystem> {
    let n = square_dim(&a, "linear_discrete")?;
    let a_field = a.clone();
    let a_jac = a;
    Ok(
        DynamicalSystem::new_discrete("linear_discrete", n, move |x| a_field.dot(x))
            .with_jacobian(move |_x| a_jac.clone()),
    )
}

/// Logistic map `x⁺ = r x (1 − x)`.
pub fn logistic(r: f64) -> DynamicalSystem {
    DynamicalSystem::new_discrete("logistic", 1, move |x| array![r * x[0] * (1.0 - x[0])])
        .with_jacobian(move |x| array![[r * (1.0 - 2.0 * x[0])]])
}

/// Van der Pol oscillator `ẋ₁ = x₂`, `ẋ₂ = μ(1−x₁²)x₂ − x₁`.
pub fn van_der_pol(mu: f64) -> DynamicalSystem {
    DynamicalSystem::new_continuous("van_der_pol", 2, move |x| {
        array![x[1], mu * (1.0 - x[0] * x[0]) * x[1] - x[0]]
    })
    .with_jacobian(move |x| {
        array![
            [0.0, 1.0],
            [-2.0 * mu * x[0] * x[1] - 1.0, mu * (1.0 - x[0] * x[0])]
        ]
    })
    .with_divergence_free(false)
}

/// Undamped pendulum `ẋ₁ = x₂`, `ẋ₂ = −sin x₁` (Hamiltonian, ∇·f = 0).
pub fn pendulum() -> DynamicalSystem {
    DynamicalSystem::new_continuous("pendulum", 2, |x| array![x[1], -x[0].sin()])
        .with_jacobian(|x| array![[0.0, 1.0], [-x[0].cos(), 0.0]])
        .with_divergence_free(true)
}

/// Solid rotation `f(x, y) = (−y, x)` with the exact rotation-matrix flow.
pub fn rotation() -> DynamicalSystem {
    DynamicalSystem::new_continuous("rotation", 2, |x| array![-x[1], x[0]])
        .with_jacobian(|_x| array![[0.0, -1.0], [1.0, 0.0]])
        .with_analytic_flow(|x, t| {
            let (s, c) = t.sin_cos();
            array![c * x[0] - s * x[1], s * x[0] + c * x[1]]
        })
        .with_divergence_free(true)
}

/// Constant advection `ẋ = c` with the exact translation flow.
pub fn constant_advection(c: Vec<f64>) -> Result<DynamicalSystem> {
    if c.is_empty() {
        return Err(CoreError::Domain(
            "constant_advection needs a nonempty velocity vector".into(),
        ));
    }
    let n = c.len();
    let c1 = Array1::from_vec(c);
    let c2 = c1.clone();
    Ok(
        DynamicalSystem::new_continuous("constant_advection", n, move |_x| c1.clone())
            .with_jacobian(move |_x| Array2::zeros((n, n)))
            .with_analytic_flow(move |x, t| x.to_owned() + &(&c2 * t))
            .with_divergence_free(true),
    )
}

/// Undamped double-well Duffing `ẋ₁ = x₂`, `ẋ₂ = x₁ − x₁³` (∇·f = 0).
pub fn duffing() -> DynamicalSystem {
    DynamicalSystem::new_continuous("duffing", 2, |x| array![x[1], x[0] - x[0].powi(3)])
        .with_jacobian(|x| array![[0.0, 1.0], [1.0 - 3.0 * x[0] * x[0], 0.0]])
        .with_divergence_free(true)
}

/// Looks up a catalog system by bare name. Names needing parameters
/// ("linear", "logistic", …) must come through [`from_spec`].
pub fn catalog(name: &str) -> Result<DynamicalSystem> {
    from_spec(name)
}

/// Builds a catalog system from a spec string: `name` alone or
/// `name:key=value,...`. Vector values are space-separated numbers; matrix
/// values are `;`-separated rows of space-separated numbers.
///
/// Examples: `rotation`, `logistic:r=3.5`, `van_der_pol:mu=1.0`,
/// `constant_advection:c=1 0`, `linear:a=0.9 0.1;0 0.8`,
/// `linear_discrete:a=0.5`.
pub fn from_spec(spec: &str) -> Result<DynamicalSystem> {
    let (name, params) = split_spec(spec)?;
    match name.as_str() {
        "rotation" => {
            expect_no_params(&params, "rotation")?;
            Ok(rotation())
        }
        "pendulum" => {
            expect_no_params(&params, "pendulum")?;
            Ok(pendulum())
        }
        "duffing" => {
            expect_no_params(&params, "duffing")?;
            Ok(duffing())
        }
        "logistic" => {
            let r = require_scalar(&params, "r", "logistic")?;
            Ok(logistic(r))
        }
        "van_der_pol" | "vdp" => {
            let mu = require_scalar(&params, "mu", "van_der_pol")?;
            Ok(van_der_pol(mu))
        }
        "constant_advection" => {
            let c = require_vector(&params, "c", "constant_advection")?;
            constant_advection(c)
        }
        "linear" => {
            let a = require_matrix(&params, "a", "linear")?;
            linear_continuous(a)
        }
        "linear_discrete" => {
            let a = require_matrix(&params, "a", "linear_discrete")?;
            linear_discrete(a)
        }
        other => Err(CoreError::UnknownSystem {
            name: other.to_string(),
            valid: VALID_NAMES.to_string(),
        }),
    }
}

fn square_dim(a: &Array2<f64>, what: &str) -> Result<usize> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(CoreError::Shape(format!(
            "{} needs a nonempty square matrix, got {}x{}",
            what,
            n,
            a.ncols()
        )));
    }
    Ok(n)
}

fn split_spec(spec: &str) -> Result<(String, HashMap<String, String>)> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(CoreError::Parse("empty system spec".into()));
    }
    let (name, rest) = match spec.split_once(':') {
        None => (spec, ""),
        Some((n, r)) => (n, r),
    };
    let mut params = HashMap::new();
    if !rest.trim().is_empty() {
        for part in rest.split(',') {
            let (k, v) = part.split_once('=').ok_or_else(|| {
                CoreError::Parse(format!("system parameter '{}' is not key=value", part))
            })?;
            params.insert(k.trim().to_lowercase(), v.trim().to_string());
        }
    }
    Ok((name.trim().to_lowercase(), params))
}

fn expect_no_params(params: &HashMap<String, String>, name: &str) -> Result<()> {
    if !params.is_empty() {
        return Err(CoreError::Parse(format!(
            "system '{}' takes no parameters, got: {}",
            name,
            params.keys().cloned().collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(())
}

fn require_scalar(params: &HashMap<String, String>, key: &str, name: &str) -> Result<f64> {
    let raw = params
        .get(key)
        .ok_or_else(|| CoreError::Parse(format!("system '{}' needs parameter {}=...", name, key)))?;
    raw.parse::<f64>()
        .map_err(|_| CoreError::Parse(format!("parameter {}={} is not a number", key, raw)))
}

fn require_vector(params: &HashMap<String, String>, key: &str, name: &str) -> Result<Vec<f64>> {
    let raw = params
        .get(key)
        .ok_or_else(|| CoreError::Parse(format!("system '{}' needs parameter {}=...", name, key)))?;
    parse_vector(raw)
}

pub(crate) fn parse_vector(raw: &str) -> Result<Vec<f64>> {
    let vals: Result<Vec<f64>> = raw
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| CoreError::Parse(format!("'{}' is not a number", tok)))
        })
        .collect();
    let vals = vals?;
    if vals.is_empty() {
        return Err(CoreError::Parse("empty vector value".into()));
    }
    Ok(vals)
}

fn require_matrix(params: &HashMap<String, String>, key: &str, name: &str) -> Result<Array2<f64>> {
    let raw = params
        .get(key)
        .ok_or_else(|| CoreError::Parse(format!("system '{}' needs parameter {}=...", name, key)))?;
    parse_matrix(raw)
}

pub(crate) fn parse_matrix(raw: &str) -> Result<Array2<f64>> {
    let rows: Result<Vec<Vec<f64>>> = raw.split(';').map(parse_vector).collect();
    let rows = rows?;
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CoreError::Parse("matrix rows have unequal lengths".into()));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((flat.len() / ncols, ncols), flat)
        .map_err(|e| CoreError::Shape(e.to_string()))
}
