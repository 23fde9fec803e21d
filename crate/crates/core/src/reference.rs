//! Reference evaluation routes built on the generic tensor primitives.
//!
//! These are deliberately written as straightforward tensor-algebra
//! programs, sharing no code with the step executor, so they can serve
//! as independent checks of plan execution:
//!
//! * [`chain_norm_sq`] contracts the network site by site with generic
//!   pairwise contractions, carrying the full intermediate over output
//!   legs (fine for the architectures used here, where output legs are
//!   few).
//! * [`dense_norm_sq`] materializes the complete layer operators as
//!   dense tensors and applies them to the full input product state.
//!   Exponential in the site count; intended for small test networks.

use crate::error::{Result, TnError};
use crate::model::{SmpoLayer, TnModel};
use crate::tensor::{contract, norm_sq, outer, DenseTensor};

/// Apply one layer to per-site input vectors by chaining along the bond,
/// returning the full output tensor with one axis per output site.
pub fn chain_apply_product_state(
    layer: &SmpoLayer,
    site_inputs: &[Vec<f64>],
) -> Result<DenseTensor> {
    if site_inputs.len() != layer.n_sites() {
        return Err(TnError::dimension(
            "input site count",
            &[site_inputs.len()],
            &[layer.n_sites()],
        ));
    }
    let mut acc: Option<DenseTensor> = None;
    for (i, x) in site_inputs.iter().enumerate() {
        let xv = DenseTensor::from_data(&[layer.phys_in()], x.clone())?;
        // v = sum_p x[p] W[p][q][l][r] -> (q, l, r)
        let v = contract(&xv, &[0], layer.site(i), &[0])?;
        acc = Some(match acc {
            None => {
                let s = v.shape().to_vec();
                v.reshape(&[s[0], s[2]])? // squeeze the trivial left bond
            }
            Some(prev) => {
                let rank = prev.rank();
                contract(&prev, &[rank - 1], &v, &[1])?
            }
        });
    }
    let acc = acc.expect("layer has at least one site");
    // axes are (q_0, ..., q_{n-1}, trailing bond of extent 1);
    // keep only the output legs
    let out_shape: Vec<usize> = layer
        .output_sites()
        .iter()
        .map(|_| layer.phys_out())
        .collect();
    acc.reshape(&out_shape)
}

/// Apply one layer to a full input tensor with one axis per site.
pub fn chain_apply_full(layer: &SmpoLayer, input: &DenseTensor) -> Result<DenseTensor> {
    if input.rank() != layer.n_sites() {
        return Err(TnError::dimension(
            "full input rank",
            input.shape(),
            &vec![layer.phys_in(); layer.n_sites()],
        ));
    }
    // invariant: acc axes = remaining input legs ++ produced q legs ++ bond
    let mut acc = {
        let w0 = layer.site(0);
        let s = w0.shape().to_vec();
        let w0 = w0.reshape(&[s[0], s[1], s[3]])?; // squeeze trivial left bond
        contract(input, &[0], &w0, &[0])?
    };
    for i in 1..layer.n_sites() {
        let remaining = layer.n_sites() - i;
        let bond_axis = acc.rank() - 1;
        acc = contract(&acc, &[0, bond_axis], layer.site(i), &[0, 2])?;
        debug_assert_eq!(acc.rank(), remaining - 1 + i + 1 + 1);
    }
    let out_shape: Vec<usize> = layer
        .output_sites()
        .iter()
        .map(|_| layer.phys_out())
        .collect();
    acc.reshape(&out_shape)
}

/// Squared output norm by site-by-site chaining.
pub fn chain_norm_sq(model: &TnModel, site_inputs: &[Vec<f64>]) -> Result<f64> {
    let mut out = chain_apply_product_state(&model.layers[0], site_inputs)?;
    if model.layers.len() == 2 {
        out = chain_apply_full(&model.layers[1], &out)?;
    }
    Ok(norm_sq(&out))
}

/// Materialize a layer as one dense operator tensor with axes
/// (p_0, ..., p_{n-1}, q over output sites).
pub fn dense_layer_operator(layer: &SmpoLayer) -> Result<DenseTensor> {
    let size: usize = (0..layer.n_sites())
        .map(|i| layer.phys_in() * layer.phys_out_extent(i))
        .product();
    if size > 40_000_000 {
        return Err(TnError::Config(
            "dense operator too large; use the chain route".into(),
        ));
    }
    let mut acc = {
        let w0 = layer.site(0);
        let s = w0.shape().to_vec();
        w0.reshape(&[s[0], s[1], s[3]])? // (p0, q0, bond)
    };
    for i in 1..layer.n_sites() {
        let bond_axis = acc.rank() - 1;
        acc = contract(&acc, &[bond_axis], layer.site(i), &[2])?;
    }
    // axes now (p0, q0, p1, q1, ..., trailing bond 1); interleave -> split
    let n = layer.n_sites();
    let mut shape = Vec::with_capacity(2 * n);
    let mut perm = Vec::with_capacity(2 * n);
    for k in 0..n {
        perm.push(2 * k);
    }
    for k in 0..n {
        perm.push(2 * k + 1);
    }
    let trimmed = {
        let mut s = acc.shape().to_vec();
        s.pop(); // trailing bond of extent 1
        acc.reshape(&s)?
    };
    let split = trimmed.permute(&perm)?;
    for _ in 0..n {
        shape.push(layer.phys_in());
    }
    for _ in 0..layer.output_sites().len() {
        shape.push(layer.phys_out());
    }
    split.reshape(&shape)
}

/// Brute-force squared norm: full operators applied to the full input
/// product state.
pub fn dense_norm_sq(model: &TnModel, site_inputs: &[Vec<f64>]) -> Result<f64> {
    let l1 = &model.layers[0];
    if site_inputs.len() != l1.n_sites() {
        return Err(TnError::dimension(
            "input site count",
            &[site_inputs.len()],
            &[l1.n_sites()],
        ));
    }
    let mut x = DenseTensor::from_data(&[l1.phys_in()], site_inputs[0].clone())?;
    for v in &site_inputs[1..] {
        let t = DenseTensor::from_data(&[l1.phys_in()], v.clone())?;
        x = outer(&x, &t);
    }
    let op1 = dense_layer_operator(l1)?;
    let n = l1.n_sites();
    let axes: Vec<usize> = (0..n).collect();
    let mut out = contract(&op1, &axes, &x, &axes)?;
    if model.layers.len() == 2 {
        let l2 = &model.layers[1];
        let op2 = dense_layer_operator(l2)?;
        let m = l2.n_sites();
        let axes2: Vec<usize> = (0..m).collect();
        out = contract(&op2, &axes2, &out, &axes2)?;
    }
    Ok(norm_sq(&out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{new_cascade, new_smpo, TnModel};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_inputs(rng: &mut StdRng, n: usize, p: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn chain_and_dense_agree_on_single_layer() {
        let mut rng = StdRng::seed_from_u64(13);
        for trial in 0..20 {
            let n = rng.gen_range(1..=6);
            let bond = rng.gen_range(1..=3);
            let out_site = rng.gen_range(0..n);
            let layer = new_smpo(n, &[out_site], bond, 3, 3, trial).unwrap();
            let model = TnModel::single(layer, "test").unwrap();
            let inputs = random_inputs(&mut rng, n, 3);
            let a = chain_norm_sq(&model, &inputs).unwrap();
            let b = dense_norm_sq(&model, &inputs).unwrap();
            // mixed bound: relative for O(1) outputs, absolute when the
            // result itself cancels toward zero
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "trial {trial}: {a} vs {b}");
        }
    }

    #[test]
    fn chain_and_dense_agree_on_cascades() {
        let mut rng = StdRng::seed_from_u64(17);
        for trial in 0..20 {
            let n = rng.gen_range(4..=7);
            let m = rng.gen_range(2..=3);
            let mut outputs = vec![0, n - 1];
            if m == 3 {
                outputs.insert(1, rng.gen_range(1..n - 1));
                outputs.dedup();
            }
            if outputs.len() < m {
                continue;
            }
            let l2_out = rng.gen_range(0..outputs.len());
            let model = new_cascade(n, &outputs, l2_out, 2, 2, 3, 2, 3, trial, "test").unwrap();
            let inputs = random_inputs(&mut rng, n, 3);
            let a = chain_norm_sq(&model, &inputs).unwrap();
            let b = dense_norm_sq(&model, &inputs).unwrap();
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "trial {trial}: {a} vs {b}");
        }
    }
}
