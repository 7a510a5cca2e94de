use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Uniform};

pub type Matrix = Array2<f64>;

/// A trainable value with an accumulated-gradient slot.
///
/// The gradient buffer exists iff the tensor requires gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub values: Matrix,
    pub grad: Option<Matrix>,
}

impl Tensor {
    pub fn new(values: Matrix, requires_grad: bool) -> Self {
        let grad = requires_grad.then(|| Matrix::zeros(values.raw_dim()));
        Tensor { values, grad }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn requires_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.fill(0.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Owns every trainable tensor of one model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, values: Matrix) -> ParamId {
        self.tensors.push(Tensor::new(values, true));
        ParamId(self.tensors.len() - 1)
    }

    /// Glorot-uniform initialized `rows x cols` parameter.
    pub fn add_glorot(&mut self, rows: usize, cols: usize, rng: &mut impl Rng) -> ParamId {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite glorot limit");
        let values = Matrix::from_shape_simple_fn((rows, cols), || dist.sample(rng));
        self.add(values)
    }

    pub fn add_zeros(&mut self, rows: usize, cols: usize) -> ParamId {
        self.add(Matrix::zeros((rows, cols)))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.tensors.iter().enumerate().map(|(i, t)| (ParamId(i), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.tensors.iter_mut()
    }

    /// Marks a parameter as frozen (no gradient) or trainable.
    pub fn set_requires_grad(&mut self, id: ParamId, requires_grad: bool) {
        let t = &mut self.tensors[id.0];
        t.grad = requires_grad.then(|| Matrix::zeros(t.values.raw_dim()));
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Total number of scalar entries across all parameters.
    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.values.len()).sum()
    }

    pub fn snapshot(&self) -> Vec<Matrix> {
        self.tensors.iter().map(|t| t.values.clone()).collect()
    }

    pub fn restore(&mut self, values: &[Matrix]) {
        for (t, v) in self.tensors.iter_mut().zip(values) {
            t.values.assign(v);
        }
    }
}
