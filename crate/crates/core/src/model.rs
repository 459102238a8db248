//! Computer-model evaluators `y^s(x, theta)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DVector;
use thiserror::Error;

use crate::design::PointSet;
use crate::par;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    /// The simulator answered with an explicit error message.
    #[error("simulator error: {0}")]
    Simulator(String),
    #[error("malformed simulator response: {line:?}")]
    Protocol { line: String },
    #[error("simulator process failure: {0}")]
    Process(String),
    #[error("model returned a non-finite value at x = {x:?}, theta = {theta:?}")]
    NonFinite { x: Vec<f64>, theta: Vec<f64> },
    #[error("{0}")]
    Other(String),
}

/// A deterministic computer model.
pub trait Model: Send + Sync {
    fn eval(&self, x: &[f64], theta: &[f64]) -> Result<f64, ModelError>;

    /// Whether concurrent calls to [`Model::eval`] are allowed. Evaluators that
    /// return `false` are always driven from a single thread.
    fn concurrency_safe(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        "model".to_string()
    }
}

/// Wraps a closure as a [`Model`].
pub struct FnModel<F> {
    name: String,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64], &[f64]) -> f64 + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnModel { name: name.into(), f }
    }
}

impl<F> Model for FnModel<F>
where
    F: Fn(&[f64], &[f64]) -> f64 + Send + Sync,
{
    fn eval(&self, x: &[f64], theta: &[f64]) -> Result<f64, ModelError> {
        let v = (self.f)(x, theta);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ModelError::NonFinite {
                x: x.to_vec(),
                theta: theta.to_vec(),
            })
        }
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

/// Shared handle to a model.
pub type SharedModel = Arc<dyn Model>;

pub fn shared<M: Model + 'static>(m: M) -> SharedModel {
    Arc::new(m)
}

/// `(y^s(x_1, theta), ..., y^s(x_n, theta))`; parallel when the model allows it.
pub fn eval_points(model: &dyn Model, points: &PointSet, theta: &[f64]) -> Result<DVector<f64>, ModelError> {
    let values = par::map_range_if(model.concurrency_safe(), points.len(), |i| {
        model.eval(points.point(i), theta)
    });
    let values: Result<Vec<f64>, ModelError> = values.into_iter().collect();
    Ok(DVector::from_vec(values?))
}

/// Memoizes model output at the design points per theta. One cache lives for
/// the duration of a single calibration.
pub(crate) struct DesignCache<'a> {
    model: &'a dyn Model,
    points: &'a PointSet,
    entries: Mutex<HashMap<Vec<u64>, Arc<DVector<f64>>>>,
}

impl<'a> DesignCache<'a> {
    pub fn new(model: &'a dyn Model, points: &'a PointSet) -> Self {
        DesignCache {
            model,
            points,
            entries: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, theta: &[f64]) -> Result<Arc<DVector<f64>>, ModelError> {
        let key: Vec<u64> = theta.iter().map(|t| t.to_bits()).collect();
        if let Some(hit) = self.entries.lock().expect("cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let values = Arc::new(eval_points(self.model, self.points, theta)?);
        self.entries
            .lock()
            .expect("cache poisoned")
            .insert(key, values.clone());
        Ok(values)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache poisoned").len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn cache_avoids_repeat_evaluations() {
        let calls = AtomicUsize::new(0);
        let m = FnModel::new("count", |x: &[f64], t: &[f64]| {
            calls.fetch_add(1, Ordering::SeqCst);
            x[0] * t[0]
        });
        let pts = PointSet::from_scalars(&[0.0, 0.5, 1.0]).unwrap();
        let cache = DesignCache::new(&m, &pts);
        let a = cache.get(&[2.0]).unwrap();
        let b = cache.get(&[2.0]).unwrap();
        assert_eq!(a, b);
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let m = FnModel::new("nan", |_: &[f64], _: &[f64]| f64::NAN);
        assert!(matches!(m.eval(&[0.0], &[0.0]), Err(ModelError::NonFinite { .. })));
    }
}
