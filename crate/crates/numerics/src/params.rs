use indexmap::IndexMap;

use crate::error::{shape_err, NumericsError, Result};
use crate::float::Float;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
}

/// Named, ordered parameter collection of one network.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Parameters<T> {
    map: IndexMap<String, Param<T>>,
}

/// Tape handles for a [`Parameters`] set, keyed by the same names.
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: IndexMap<String, Var>,
}

impl Bound {
    pub fn from_pairs(names: &[String], vars: &[Var]) -> Self {
        Self { vars: names.iter().cloned().zip(vars.iter().copied()).collect() }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars.get(name).copied().ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl<T: Float> Parameters<T> {
    pub fn new() -> Self {
        Self { map: IndexMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.map.insert(name.into(), Param { value, grad: None });
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.map.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.map.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.map.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_elements(&self) -> usize {
        self.map.values().map(|p| p.value.len()).sum()
    }

    pub fn tensors(&self) -> Vec<Tensor<T>> {
        self.map.values().map(|p| p.value.clone()).collect()
    }

    /// Records every parameter on `tape` as a gradient-requiring leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Result<Bound> {
        let mut vars = IndexMap::with_capacity(self.map.len());
        for (name, p) in &self.map {
            vars.insert(name.clone(), tape.param(p.value.clone())?);
        }
        Ok(Bound { vars })
    }

    /// Records every parameter as a constant, for inference.
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> Result<Bound> {
        let mut vars = IndexMap::with_capacity(self.map.len());
        for (name, p) in &self.map {
            vars.insert(name.clone(), tape.constant(p.value.clone())?);
        }
        Ok(Bound { vars })
    }

    /// Adds the tape gradients of `bound` into each parameter's grad buffer.
    /// Parameters the loss did not reach get an explicit zero gradient.
    pub fn accumulate_grads(&mut self, tape: &Tape<T>, bound: &Bound) -> Result<()> {
        for (name, p) in self.map.iter_mut() {
            let var = bound.get(name)?;
            let g = match tape.grad(var) {
                Some(g) => g.clone(),
                None => Tensor::zeros(p.value.shape().to_vec()),
            };
            match p.grad.as_mut() {
                Some(acc) => acc.add_assign(&g),
                None => p.grad = Some(g),
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in self.map.values_mut() {
            p.grad = None;
        }
    }

    pub fn cast<U: Float>(&self) -> Parameters<U> {
        Parameters {
            map: self
                .map
                .iter()
                .map(|(k, p)| (k.clone(), Param { value: p.value.cast(), grad: None }))
                .collect(),
        }
    }

    /// Replaces values from `other`, which must carry the same names and shapes.
    pub fn load_from(&mut self, other: &Parameters<T>) -> Result<()> {
        if other.len() != self.len() {
            return Err(NumericsError::Checkpoint(format!(
                "expected {} tensors, found {}",
                self.len(),
                other.len()
            )));
        }
        for (name, p) in self.map.iter_mut() {
            let src = other.get(name).ok_or_else(|| NumericsError::UnknownParam(name.clone()))?;
            if src.value.shape() != p.value.shape() {
                return Err(shape_err(
                    "load_from",
                    format!("{name}: {:?} vs {:?}", src.value.shape(), p.value.shape()),
                ));
            }
            p.value = src.value.clone();
            p.grad = None;
        }
        Ok(())
    }

    /// L2 norm of all parameter values.
    pub fn value_norm(&self) -> f64 {
        self.map
            .values()
            .flat_map(|p| p.value.data().iter())
            .map(|v| v.to_f64_lossy().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}
