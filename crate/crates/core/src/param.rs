//! Named trainable parameters.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Uniform(f64, f64),
    /// Glorot uniform over the first and last axes.
    Xavier,
    Zeros,
    Constant(f64),
    /// Given values, used for identity-like projections and fixtures.
    Values(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub init: Init,
    /// When set, only these rows (of a 2-d table) receive updates.
    pub trainable_rows: Option<Vec<usize>>,
    pub frozen: bool,
}

impl<T: Scalar> Parameter<T> {
    pub fn numel(&self) -> usize {
        self.value.numel()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    /// Registers a parameter, drawing its initial value from a stream keyed by
    /// `(seed, name)`.
    pub fn add(&mut self, name: &str, shape: &[usize], init: Init, seed: u64) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::DuplicateParameter(name.to_string()));
        }
        let value = initialize(shape, &init, &mut RngStream::for_name(seed, name))?;
        let id = ParamId(self.params.len());
        self.params.push(Parameter {
            name: name.to_string(),
            value,
            init,
            trainable_rows: None,
            frozen: false,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn by_name(&self, name: &str) -> Result<&Parameter<T>> {
        Ok(self.get(self.id(name)?))
    }

    pub fn set_values(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let id = self.id(name)?;
        let p = &mut self.params[id.0];
        if p.value.numel() != values.len() {
            return Err(Error::ShapeMismatch {
                op: "set_values",
                left: p.value.shape().to_vec(),
                right: vec![values.len()],
            });
        }
        for (dst, &v) in p.value.data_mut().iter_mut().zip(values) {
            *dst = T::lit(v);
        }
        Ok(())
    }

    pub fn fill(&mut self, name: &str, value: f64) -> Result<()> {
        let id = self.id(name)?;
        self.params[id.0].value.data_mut().fill(T::lit(value));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Total number of scalar entries that are updated by training.
    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| !p.frozen)
            .map(|p| match &p.trainable_rows {
                Some(rows) => rows.len() * p.value.last_dim(),
                None => p.numel(),
            })
            .sum()
    }

    /// Number of scalar entries across all parameters.
    pub fn total_count(&self) -> usize {
        self.params.iter().map(|p| p.numel()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    init: p.init.clone(),
                    trainable_rows: p.trainable_rows.clone(),
                    frozen: p.frozen,
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}

fn initialize<T: Scalar>(shape: &[usize], init: &Init, rng: &mut RngStream) -> Result<Tensor<T>> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::invalid("parameter", format!("bad shape {shape:?}")));
    }
    let numel: usize = shape.iter().product();
    let data = match init {
        Init::Zeros => vec![T::zero(); numel],
        Init::Constant(c) => vec![T::lit(*c); numel],
        Init::Uniform(a, b) => (0..numel).map(|_| rng.uniform(*a, *b)).collect(),
        Init::Xavier => {
            let fan_in = shape[0];
            let fan_out = *shape.last().unwrap();
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..numel).map(|_| rng.uniform(-bound, bound)).collect()
        }
        Init::Values(v) => {
            if v.len() != numel {
                return Err(Error::ShapeMismatch {
                    op: "init",
                    left: shape.to_vec(),
                    right: vec![v.len()],
                });
            }
            v.iter().map(|&x| T::lit(x)).collect()
        }
    };
    Tensor::new(shape.to_vec(), data)
}
