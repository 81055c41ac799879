//! Dense row-major f64 tensors.

use crate::GraphError;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: Vec::new(), data: vec![value] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, GraphError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(GraphError::Shape(format!("shape {:?} needs {} elements, got {}", shape, n, data.len())));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, GraphError> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(GraphError::Shape(format!("cannot reshape {:?} into {:?}", self.shape, shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Unpacks a rank-3 shape `[B, C, K]`.
    pub fn dims3(&self) -> Result<(usize, usize, usize), GraphError> {
        match self.shape[..] {
            [b, c, k] => Ok((b, c, k)),
            _ => Err(GraphError::Shape(format!("expected rank-3 tensor, got {:?}", self.shape))),
        }
    }

    pub fn dims2(&self) -> Result<(usize, usize), GraphError> {
        match self.shape[..] {
            [a, b] => Ok((a, b)),
            _ => Err(GraphError::Shape(format!("expected rank-2 tensor, got {:?}", self.shape))),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Contiguous slice of item `i` along the leading axis.
    pub fn item_slice(&self, i: usize) -> &[f64] {
        let stride = self.data.len() / self.shape[0];
        &self.data[i * stride..(i + 1) * stride]
    }

    pub fn item_slice_mut(&mut self, i: usize) -> &mut [f64] {
        let stride = self.data.len() / self.shape[0];
        &mut self.data[i * stride..(i + 1) * stride]
    }

    /// Stacks equally-shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor, GraphError> {
        let first = items.first().ok_or_else(|| GraphError::Shape("cannot stack zero tensors".into()))?;
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(GraphError::Shape(format!("stack: {:?} vs {:?}", t.shape, first.shape)));
            }
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor { shape, data })
    }

    /// Splits the leading axis back into individual tensors.
    pub fn unstack(&self) -> Vec<Tensor> {
        let inner = self.shape[1..].to_vec();
        (0..self.shape[0]).map(|i| Tensor { shape: inner.clone(), data: self.item_slice(i).to_vec() }).collect()
    }
}
