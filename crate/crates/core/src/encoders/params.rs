use std::ops::Range;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use serde::{Deserialize, Serialize};

/// Location of one matrix inside a flat parameter buffer. Vectors are
/// `1 × n` tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tensor {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn view<'a>(&self, data: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &data[self.range()]).expect("tensor fits buffer")
    }

    pub fn view_mut<'a>(&self, data: &'a mut [f64]) -> ArrayViewMut2<'a, f64> {
        ArrayViewMut2::from_shape((self.rows, self.cols), &mut data[self.range()]).expect("tensor fits buffer")
    }

    pub fn vec<'a>(&self, data: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&data[self.range()])
    }

    pub fn vec_mut<'a>(&self, data: &'a mut [f64]) -> ArrayViewMut1<'a, f64> {
        ArrayViewMut1::from(&mut data[self.range()])
    }

    pub fn row_range(&self, r: usize) -> Range<usize> {
        let s = self.offset + r * self.cols;
        s..s + self.cols
    }

    pub fn row<'a>(&self, data: &'a [f64], r: usize) -> &'a [f64] {
        let s = self.offset + r * self.cols;
        &data[s..s + self.cols]
    }

    pub fn row_mut<'a>(&self, data: &'a mut [f64], r: usize) -> &'a mut [f64] {
        let s = self.offset + r * self.cols;
        &mut data[s..s + self.cols]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub tensor: Tensor,
}

/// Named tensors packed back to back in one buffer.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    specs: Vec<TensorSpec>,
    len: usize,
}

impl ParamLayout {
    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> Tensor {
        let tensor = Tensor { offset: self.len, rows, cols };
        self.len += tensor.len();
        self.specs.push(TensorSpec { name: name.into(), tensor });
        tensor
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn get(&self, name: &str) -> Option<Tensor> {
        self.specs.iter().find(|s| s.name == name).map(|s| s.tensor)
    }
}
