use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// What a parameter is used as; decides L2 membership and initialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Weight,
    Bias,
    Embedding,
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
    pub grad: Option<Vec<f64>>,
    pub requires_grad: bool,
}

/// Owns every learned tensor of a model.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            kind,
            value,
            grad: None,
            requires_grad: true,
        });
        ParamId(self.params.len() - 1)
    }

    /// Matrix initialized uniformly in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`,
    /// where `fan_in` is the number of rows (inputs are right-multiplied).
    pub fn add_weight<R: Rng>(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        let t = Tensor::new(vec![fan_in, fan_out], data).expect("shape");
        self.add(name, ParamKind::Weight, t)
    }

    pub fn add_bias(&mut self, name: impl Into<String>, values: Vec<f64>) -> ParamId {
        self.add(name, ParamKind::Bias, Tensor::row(values))
    }

    pub fn add_embedding<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> ParamId {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-0.05..=0.05))
            .collect();
        let t = Tensor::new(vec![rows, cols], data).expect("shape");
        self.add(name, ParamKind::Embedding, t)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params
            .iter()
            .position(|p| p.name == name)
            .map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    /// Resets the gradient of every trainable parameter to zeros.
    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad = if p.requires_grad {
                Some(vec![0.0; p.value.len()])
            } else {
                None
            };
        }
    }

    pub fn accumulate(&mut self, grads: &Gradients) {
        for (&id, buf) in &grads.bufs {
            let p = &mut self.params[id];
            if !p.requires_grad {
                continue;
            }
            let n = p.value.len();
            let g = p.grad.get_or_insert_with(|| vec![0.0; n]);
            buf.add_into(g);
        }
    }

    pub fn total_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Gradient contribution for one parameter.
#[derive(Clone, Debug)]
pub enum GradBuf {
    Dense(Vec<f64>),
    /// Sparse row gradients of a `rows x cols` table.
    Rows {
        cols: usize,
        rows: BTreeMap<usize, Vec<f64>>,
    },
}

impl GradBuf {
    fn add_into(&self, dst: &mut [f64]) {
        match self {
            GradBuf::Dense(g) => {
                for (d, v) in dst.iter_mut().zip(g) {
                    *d += v;
                }
            }
            GradBuf::Rows { cols, rows } => {
                for (&r, g) in rows {
                    for (d, v) in dst[r * cols..(r + 1) * cols].iter_mut().zip(g) {
                        *d += v;
                    }
                }
            }
        }
    }
}

/// Parameter gradients produced by one backward pass.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    pub(crate) bufs: BTreeMap<usize, GradBuf>,
}

impl Gradients {
    pub fn contains(&self, id: ParamId) -> bool {
        self.bufs.contains_key(&id.0)
    }

    /// Dense copy of the gradient of `id`, or `None` when the parameter was
    /// not reached from the loss.
    pub fn dense(&self, id: ParamId, len: usize) -> Option<Vec<f64>> {
        self.bufs.get(&id.0).map(|b| {
            let mut out = vec![0.0; len];
            b.add_into(&mut out);
            out
        })
    }

    pub(crate) fn add_dense(&mut self, id: ParamId, g: &[f64]) {
        match self.bufs.get_mut(&id.0) {
            Some(GradBuf::Dense(d)) => {
                for (a, b) in d.iter_mut().zip(g) {
                    *a += b;
                }
            }
            Some(rows @ GradBuf::Rows { .. }) => {
                let mut d = g.to_vec();
                rows.add_into(&mut d);
                *rows = GradBuf::Dense(d);
            }
            None => {
                self.bufs.insert(id.0, GradBuf::Dense(g.to_vec()));
            }
        }
    }

    pub(crate) fn add_row(&mut self, id: ParamId, cols: usize, row: usize, g: &[f64]) {
        let buf = self.bufs.entry(id.0).or_insert_with(|| GradBuf::Rows {
            cols,
            rows: BTreeMap::new(),
        });
        match buf {
            GradBuf::Dense(d) => {
                for (a, b) in d[row * cols..(row + 1) * cols].iter_mut().zip(g) {
                    *a += b;
                }
            }
            GradBuf::Rows { rows, .. } => {
                let r = rows.entry(row).or_insert_with(|| vec![0.0; cols]);
                for (a, b) in r.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
    }
}
