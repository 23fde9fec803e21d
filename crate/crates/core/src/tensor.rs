//! Minimal dense-tensor algebra: pairwise contraction, outer product,
//! axis permutation, reshape and squared norm on row-major `f64` buffers.
//!
//! The contraction schedules used elsewhere in this crate are strictly
//! pairwise, so there is deliberately no einsum-style string interface.

use crate::error::{Result, TnError};

/// Dense multi-axis array with row-major flat storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    /// All-zero tensor. Every axis length must be >= 1; a scalar is `shape = []`.
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(shape.iter().all(|&d| d >= 1), "axis lengths must be >= 1");
        let len = shape.iter().product();
        DenseTensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        DenseTensor {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        DenseTensor {
            shape: vec![values.len()],
            data: values,
        }
    }

    pub fn from_data(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(TnError::dimension(
                "data length does not match shape product",
                shape,
                &[data.len()],
            ));
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(TnError::Numeric(
                "tensor contains non-finite entries".into(),
            ));
        }
        Ok(DenseTensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    /// Row-major strides: the last axis runs fastest.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.shape.len()];
        for i in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.shape[i + 1];
        }
        strides
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.flat_index(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let flat = self.flat_index(index);
        self.data[flat] = value;
    }

    fn flat_index(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        let strides = self.strides();
        index
            .iter()
            .zip(strides.iter())
            .map(|(i, s)| i * s)
            .sum()
    }

    /// View with reinterpreted shape; the total element count must match.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != self.data.len() {
            return Err(TnError::dimension(
                "reshape changes element count",
                &self.shape,
                shape,
            ));
        }
        Ok(DenseTensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Reorder axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let rank = self.rank();
        if perm.len() != rank {
            return Err(TnError::axis("permutation length != tensor rank"));
        }
        let mut seen = vec![false; rank];
        for &p in perm {
            if p >= rank || seen[p] {
                return Err(TnError::axis("invalid axis permutation"));
            }
            seen[p] = true;
        }
        if rank == 0 {
            return Ok(self.clone());
        }
        let in_strides = self.strides();
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let mapped_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let mut out = vec![0.0; self.data.len()];
        let mut idx = vec![0usize; rank];
        let mut in_off = 0usize;
        for slot in out.iter_mut() {
            *slot = self.data[in_off];
            // odometer increment over the output multi-index
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                in_off += mapped_strides[ax];
                if idx[ax] < out_shape[ax] {
                    break;
                }
                in_off -= mapped_strides[ax] * out_shape[ax];
                idx[ax] = 0;
            }
        }
        Ok(DenseTensor {
            shape: out_shape,
            data: out,
        })
    }

    pub fn scale(&self, factor: f64) -> Self {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }
}

fn validate_axes(tensor: &DenseTensor, axes: &[usize], side: &str) -> Result<()> {
    for (i, &ax) in axes.iter().enumerate() {
        if ax >= tensor.rank() {
            return Err(TnError::axis(format!(
                "{side} axis {ax} out of range for rank {}",
                tensor.rank()
            )));
        }
        if axes[..i].contains(&ax) {
            return Err(TnError::axis(format!("{side} axis {ax} repeated")));
        }
    }
    Ok(())
}

/// Pairwise tensor contraction: sum over the paired axes of `a` and `b`.
///
/// The result's axes are the uncontracted axes of `a` (in their original
/// order) followed by the uncontracted axes of `b`.
pub fn contract(
    a: &DenseTensor,
    axes_a: &[usize],
    b: &DenseTensor,
    axes_b: &[usize],
) -> Result<DenseTensor> {
    if axes_a.len() != axes_b.len() {
        return Err(TnError::axis("contraction axis lists differ in length"));
    }
    validate_axes(a, axes_a, "lhs")?;
    validate_axes(b, axes_b, "rhs")?;
    for (&ax_a, &ax_b) in axes_a.iter().zip(axes_b) {
        if a.shape[ax_a] != b.shape[ax_b] {
            return Err(TnError::dimension(
                format!("paired axes {ax_a} and {ax_b} have different lengths"),
                &a.shape,
                &b.shape,
            ));
        }
    }

    let free_a: Vec<usize> = (0..a.rank()).filter(|ax| !axes_a.contains(ax)).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|ax| !axes_b.contains(ax)).collect();

    // a -> (free_a..., axes_a...) as an M x K matrix
    let mut perm_a = free_a.clone();
    perm_a.extend_from_slice(axes_a);
    let m: usize = free_a.iter().map(|&ax| a.shape[ax]).product();
    let k: usize = axes_a.iter().map(|&ax| a.shape[ax]).product();
    let a_mat = a.permute(&perm_a)?;

    // b -> (axes_b..., free_b...) as a K x N matrix
    let mut perm_b = axes_b.to_vec();
    perm_b.extend_from_slice(&free_b);
    let n: usize = free_b.iter().map(|&ax| b.shape[ax]).product();
    let b_mat = b.permute(&perm_b)?;

    let mut out = vec![0.0; m * n];
    let ad = &a_mat.data;
    let bd = &b_mat.data;
    for i in 0..m {
        for kk in 0..k {
            let av = ad[i * k + kk];
            if av == 0.0 {
                continue;
            }
            let brow = &bd[kk * n..(kk + 1) * n];
            let crow = &mut out[i * n..(i + 1) * n];
            for (c, &bv) in crow.iter_mut().zip(brow) {
                *c += av * bv;
            }
        }
    }

    let mut shape: Vec<usize> = free_a.iter().map(|&ax| a.shape[ax]).collect();
    shape.extend(free_b.iter().map(|&ax| b.shape[ax]));
    Ok(DenseTensor { shape, data: out })
}

/// Tensor (outer) product: result shape is the concatenation of both shapes.
pub fn outer(a: &DenseTensor, b: &DenseTensor) -> DenseTensor {
    let mut shape = a.shape.clone();
    shape.extend_from_slice(&b.shape);
    let mut data = Vec::with_capacity(a.len() * b.len());
    for &av in &a.data {
        for &bv in &b.data {
            data.push(av * bv);
        }
    }
    DenseTensor { shape, data }
}

/// Sum of squared entries.
pub fn norm_sq(a: &DenseTensor) -> f64 {
    a.data.iter().map(|x| x * x).sum()
}
