//! Dense double-precision tensors (1-D vectors and 2-D row-major matrices).

use serde::{Deserialize, Serialize};

use crate::error::{NeuralError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    D1(usize),
    D2(usize, usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match self {
            Shape::D1(n) => *n,
            Shape::D2(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn vector(data: Vec<f64>) -> Result<Tensor> {
        ensure_finite(&data, "vector")?;
        Ok(Tensor {
            shape: Shape::D1(data.len()),
            data,
        })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
        if data.len() != rows * cols {
            return Err(NeuralError::Shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        ensure_finite(&data, "matrix")?;
        Ok(Tensor {
            shape: Shape::D2(rows, cols),
            data,
        })
    }

    pub fn zeros(shape: Shape) -> Tensor {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn rows(&self) -> usize {
        match self.shape {
            Shape::D1(n) => n,
            Shape::D2(r, _) => r,
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape {
            Shape::D1(_) => 1,
            Shape::D2(_, c) => c,
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        debug_assert!(matches!(self.shape, Shape::D2(..)));
        self.data[row * self.cols() + col]
    }

    /// y = M x for a 2-D tensor.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (rows, cols) = match self.shape {
            Shape::D2(r, c) => (r, c),
            Shape::D1(_) => {
                return Err(NeuralError::Shape("matvec needs a 2-D tensor".into()))
            }
        };
        if x.len() != cols {
            return Err(NeuralError::Shape(format!(
                "matvec: {rows}x{cols} against vector of length {}",
                x.len()
            )));
        }
        let mut out = vec![0.0; rows];
        for (r, out_r) in out.iter_mut().enumerate() {
            let row = &self.data[r * cols..(r + 1) * cols];
            *out_r = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        Ok(out)
    }
}

pub(crate) fn ensure_finite(data: &[f64], what: &str) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(NeuralError::NonFinite(what.to_string()));
    }
    Ok(())
}
