use super::NetError;

/// Dense row-major 64-bit float tensor. Construction rejects non-finite
/// values; ops that can produce them re-check their outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor, NetError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NetError::ShapeMismatch {
                context: "Tensor::new",
                detail: format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite("Tensor::new"));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn zeros_like(other: &Tensor) -> Tensor {
        Tensor::zeros(other.shape.to_vec())
    }

    pub fn scalar(value: f64) -> Result<Tensor, NetError> {
        Tensor::new(vec![1], vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Rows and columns of a 2-D tensor.
    pub fn dims2(&self) -> Result<(usize, usize), NetError> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(NetError::ShapeMismatch {
                context: "Tensor::dims2",
                detail: format!("expected 2-D tensor, got shape {other:?}"),
            }),
        }
    }

    pub fn check_finite(&self, context: &'static str) -> Result<(), NetError> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite(context));
        }
        Ok(())
    }
}
