//! Named parameter store with Adam moment buffers.

use std::collections::BTreeMap;

use crate::autograd::Grid;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct Param {
    pub value: Grid,
    pub m: Grid,
    pub v: Grid,
}

/// Named parameter grids plus per-parameter first/second moment buffers and
/// a shared step counter.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    pub(crate) params: BTreeMap<String, Param>,
    pub(crate) step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Grid) {
        let (c, h, w) = value.shape();
        self.params.insert(
            name.into(),
            Param {
                value,
                m: Grid::zeros(c, h, w),
                v: Grid::zeros(c, h, w),
            },
        );
    }

    pub fn get(&self, name: &str) -> Result<&Grid> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    /// Parameter names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// One Adam update with bias correction.
    ///
    /// Parameters missing from `grads` are left untouched (including their
    /// moment buffers). A non-finite gradient aborts with the offending
    /// parameter name.
    pub fn adam_step(
        &mut self,
        grads: &BTreeMap<String, Grid>,
        lr: f64,
        betas: (f64, f64),
        eps: f64,
    ) -> Result<()> {
        for (name, g) in grads {
            let p = self
                .params
                .get(name)
                .ok_or_else(|| Error::UnknownParameter(name.clone()))?;
            if !p.value.same_shape(g) {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    expected: p.value.shape_string(),
                    got: g.shape_string(),
                });
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = betas;
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        for (name, g) in grads {
            let p = self.params.get_mut(name).expect("validated above");
            let pv = p.value.data_mut();
            let m = p.m.data_mut();
            let v = p.v.data_mut();
            for (i, &gi) in g.data().iter().enumerate() {
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                pv[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BETAS: (f64, f64) = (0.9, 0.999);
    const EPS: f64 = 1e-8;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = ParamStore::new();
        store.insert("w", Grid::vector(vec![1.0, -2.0]));
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Grid::vector(vec![0.0, 0.0]));
        store.adam_step(&grads, 1e-3, BETAS, EPS).unwrap();
        assert_eq!(store.get("w").unwrap().data(), &[1.0, -2.0]);
        assert_eq!(store.step(), 1);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        let mut store = ParamStore::new();
        store.insert("w", Grid::scalar(0.0));
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Grid::scalar(1.0));
        store.adam_step(&grads, 1e-3, BETAS, EPS).unwrap();
        let w = store.get("w").unwrap().scalar_value();
        assert!((w + 1e-3).abs() < 1e-8, "w = {w}");
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(w) = w^2, gradient 2w, from w0 = 1 with lr = 1e-2.
        let mut store = ParamStore::new();
        store.insert("w", Grid::scalar(1.0));
        for _ in 0..200 {
            let w = store.get("w").unwrap().scalar_value();
            let mut grads = BTreeMap::new();
            grads.insert("w".to_string(), Grid::scalar(2.0 * w));
            store.adam_step(&grads, 1e-2, BETAS, EPS).unwrap();
        }
        let w = store.get("w").unwrap().scalar_value();
        assert!(w.abs() < 1e-2, "w = {w}");
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut store = ParamStore::new();
        store.insert("enc.w", Grid::scalar(0.0));
        let mut grads = BTreeMap::new();
        grads.insert("enc.w".to_string(), Grid::scalar(f64::NAN));
        let err = store.adam_step(&grads, 1e-3, BETAS, EPS).unwrap_err();
        assert!(err.to_string().contains("enc.w"));
    }

    #[test]
    fn missing_gradient_skips_parameter() {
        let mut store = ParamStore::new();
        store.insert("a", Grid::scalar(1.0));
        store.insert("b", Grid::scalar(1.0));
        let mut grads = BTreeMap::new();
        grads.insert("a".to_string(), Grid::scalar(0.5));
        store.adam_step(&grads, 1e-1, BETAS, EPS).unwrap();
        assert_ne!(store.get("a").unwrap().scalar_value(), 1.0);
        assert_eq!(store.get("b").unwrap().scalar_value(), 1.0);
    }
}
