use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{shape_err, Result};

use super::{Scalar, Tape, Tensor, Var};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub tensor: Tensor<T>,
    /// Whether weight decay applies (false for biases and normalization).
    pub decay: bool,
}

/// Owns every trainable tensor of a model, in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

/// Initialization recipe for a new parameter.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    /// Normal(0, std) truncated at two standard deviations.
    TruncNormal(f64),
    Zeros,
    Ones,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        init: Init,
        decay: bool,
        rng: &mut impl Rng,
    ) -> ParamId {
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![T::zero(); n],
            Init::Ones => vec![T::one(); n],
            Init::TruncNormal(std) => (0..n)
                .map(|_| loop {
                    let z: f64 = rng.sample(StandardNormal);
                    if z.abs() <= 2.0 {
                        break T::of(z * std);
                    }
                })
                .collect(),
        };
        let tensor = Tensor::new(shape.to_vec(), data)
            .expect("parameter shape")
            .with_grad();
        self.params.push(Param {
            name: name.into(),
            tensor,
            decay,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar entries.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].tensor
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn tensors(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| p.tensor.clone()).collect()
    }

    /// Replaces all tensor values, keeping names and decay flags.
    pub fn load_tensors(&mut self, tensors: Vec<Tensor<T>>) -> Result<()> {
        if tensors.len() != self.params.len() {
            return Err(shape_err!(
                "{} tensors for {} parameters",
                tensors.len(),
                self.params.len()
            ));
        }
        for (p, t) in self.params.iter_mut().zip(tensors) {
            if p.tensor.shape() != t.shape() {
                return Err(shape_err!(
                    "parameter {}: stored {:?}, expected {:?}",
                    p.name,
                    t.shape(),
                    p.tensor.shape()
                ));
            }
            p.tensor = t.with_grad();
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }

    /// Places every parameter on `tape`. With `track` false they become
    /// constants, so no gradient bookkeeping happens downstream.
    pub fn bind(&self, tape: &mut Tape<T>, track: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if track {
                    tape.leaf(p.tensor.clone())
                } else {
                    tape.constant(p.tensor.clone())
                }
            })
            .collect();
        Bound { vars }
    }
}

/// Parameter handles on one tape.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound { vars }
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}
