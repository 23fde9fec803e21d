//! Minimal reverse-mode differentiation over dense-tensor contractions.
//!
//! The network forward pass is a composition of pairwise contractions and
//! shape-preserving reshapes, so the tape needs exactly those two node
//! kinds. The adjoint of a contraction is two contractions: the output
//! cotangent contracted against either operand over its free axes, then
//! permuted back into the other operand's axis order.

use crate::error::{Result, TnError};
use crate::tensor::{contract, DenseTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    /// Position of this node on its tape; indexes the gradient vector
    /// returned by [`Tape::backward`].
    pub fn index(self) -> usize {
        self.0
    }
}

enum Node {
    Leaf,
    Contract {
        a: usize,
        axes_a: Vec<usize>,
        b: usize,
        axes_b: Vec<usize>,
    },
    Reshape {
        a: usize,
    },
}

pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<DenseTensor>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn leaf(&mut self, value: DenseTensor) -> NodeId {
        self.nodes.push(Node::Leaf);
        self.values.push(value);
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &DenseTensor {
        &self.values[id.0]
    }

    pub fn contract(
        &mut self,
        a: NodeId,
        axes_a: &[usize],
        b: NodeId,
        axes_b: &[usize],
    ) -> Result<NodeId> {
        let value = contract(&self.values[a.0], axes_a, &self.values[b.0], axes_b)?;
        self.nodes.push(Node::Contract {
            a: a.0,
            axes_a: axes_a.to_vec(),
            b: b.0,
            axes_b: axes_b.to_vec(),
        });
        self.values.push(value);
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.values[a.0].reshape(shape)?;
        self.nodes.push(Node::Reshape { a: a.0 });
        self.values.push(value);
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Propagate `seed` (the cotangent of `root`) back to every node,
    /// returning one gradient slot per node (`None` where nothing flowed).
    pub fn backward(&self, root: NodeId, seed: DenseTensor) -> Result<Vec<Option<DenseTensor>>> {
        if seed.shape() != self.values[root.0].shape() {
            return Err(TnError::dimension(
                "backward seed shape",
                seed.shape(),
                self.values[root.0].shape(),
            ));
        }
        let mut grads: Vec<Option<DenseTensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(seed);

        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &self.nodes[idx] {
                Node::Leaf => {
                    grads[idx] = Some(g);
                }
                Node::Reshape { a } => {
                    let back = g.reshape(self.values[*a].shape())?;
                    accumulate(&mut grads[*a], back);
                }
                Node::Contract {
                    a,
                    axes_a,
                    b,
                    axes_b,
                } => {
                    let va = &self.values[*a];
                    let vb = &self.values[*b];
                    let free_a: Vec<usize> =
                        (0..va.rank()).filter(|ax| !axes_a.contains(ax)).collect();
                    let free_b: Vec<usize> =
                        (0..vb.rank()).filter(|ax| !axes_b.contains(ax)).collect();
                    let fa = free_a.len();
                    let fb = free_b.len();

                    // dA = g x_B b, contracting g's free-b block against b's
                    // free axes; result axes (free_a..., sorted(axes_b)...)
                    let g_free_b: Vec<usize> = (fa..fa + fb).collect();
                    let da_pre = contract(&g, &g_free_b, vb, &free_b)?;
                    let mut sorted_axes_b = axes_b.clone();
                    sorted_axes_b.sort_unstable();
                    let mut perm_a = vec![0usize; va.rank()];
                    for (pos, &ax) in free_a.iter().enumerate() {
                        perm_a[ax] = pos;
                    }
                    for (k, &ax) in axes_a.iter().enumerate() {
                        let partner = axes_b[k];
                        let rank_in_sorted =
                            sorted_axes_b.iter().position(|&x| x == partner).unwrap();
                        perm_a[ax] = fa + rank_in_sorted;
                    }
                    // permute wants: out axis i = in axis perm[i]; perm_a
                    // currently maps a-axis -> position in da_pre, which is
                    // exactly that mapping read the other way around
                    let da = da_pre.permute(&perm_a)?;
                    accumulate(&mut grads[*a], da);

                    // dB = g x_A a; result axes (free_b..., sorted(axes_a)...)
                    let g_free_a: Vec<usize> = (0..fa).collect();
                    let db_pre = contract(&g, &g_free_a, va, &free_a)?;
                    let mut sorted_axes_a = axes_a.clone();
                    sorted_axes_a.sort_unstable();
                    let mut perm_b = vec![0usize; vb.rank()];
                    for (pos, &ax) in free_b.iter().enumerate() {
                        perm_b[ax] = pos;
                    }
                    for (k, &ax) in axes_b.iter().enumerate() {
                        let partner = axes_a[k];
                        let rank_in_sorted =
                            sorted_axes_a.iter().position(|&x| x == partner).unwrap();
                        perm_b[ax] = fb + rank_in_sorted;
                    }
                    let db = db_pre.permute(&perm_b)?;
                    accumulate(&mut grads[*b], db);
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(slot: &mut Option<DenseTensor>, delta: DenseTensor) {
    match slot {
        None => *slot = Some(delta),
        Some(existing) => {
            debug_assert_eq!(existing.shape(), delta.shape());
            for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                *e += d;
            }
        }
    }
}
