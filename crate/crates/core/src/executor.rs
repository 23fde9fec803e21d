//! Step-by-step plan execution.
//!
//! One executor drives every arithmetic backend through the [`PlanArith`]
//! trait: plain f64, the instrumented multiply counter, and the
//! fixed-point emulation. Each output element is produced by exactly one
//! `mac_element` call whose pair count is the element's MAC cost, so a
//! backend that counts pairs reproduces the declared plan costs.

use crate::contraction::{ContractionPlan, StepKind};
use crate::embedding::EmbeddedMps;
use crate::error::{Result, TnError};
use crate::model::TnModel;

/// Arithmetic backend for plan execution.
pub trait PlanArith {
    type Elem: Copy;

    /// Convert a model weight into the working representation.
    fn weight(&mut self, x: f64) -> Self::Elem;
    /// Convert an input-site component into the working representation.
    fn input(&mut self, x: f64) -> Self::Elem;
    fn zero(&self) -> Self::Elem;
    /// Accumulate one output element: acc += a * b over all pairs.
    fn mac_element(&mut self, pairs: &[(Self::Elem, Self::Elem)]) -> Self::Elem;
    /// Accumulate the final squared norm (may use a wider or saturating
    /// accumulator than `mac_element`).
    fn norm_element(&mut self, pairs: &[(Self::Elem, Self::Elem)]) -> Self::Elem;
    fn to_f64(&self, x: Self::Elem) -> f64;
    /// Total `acc += a * b` operations performed so far.
    fn mac_count(&self) -> u64;
}

/// Plain double-precision backend with a multiply counter.
#[derive(Debug, Default)]
pub struct FloatArith {
    macs: u64,
}

impl PlanArith for FloatArith {
    type Elem = f64;

    fn weight(&mut self, x: f64) -> f64 {
        x
    }

    fn input(&mut self, x: f64) -> f64 {
        x
    }

    fn zero(&self) -> f64 {
        0.0
    }

    fn mac_element(&mut self, pairs: &[(f64, f64)]) -> f64 {
        let mut acc = 0.0;
        for &(a, b) in pairs {
            acc += a * b;
            self.macs += 1;
        }
        acc
    }

    fn norm_element(&mut self, pairs: &[(f64, f64)]) -> f64 {
        self.mac_element(pairs)
    }

    fn to_f64(&self, x: f64) -> f64 {
        x
    }

    fn mac_count(&self) -> u64 {
        self.macs
    }
}

/// Vertically contracted site tensor: (phys_out, left, right).
struct SiteTensor<E> {
    q: usize,
    l: usize,
    r: usize,
    data: Vec<E>,
}

impl<E: Copy> SiteTensor<E> {
    fn new(q: usize, l: usize, r: usize, fill: E) -> Self {
        SiteTensor {
            q,
            l,
            r,
            data: vec![fill; q * l * r],
        }
    }

    #[inline]
    fn get(&self, q: usize, l: usize, r: usize) -> E {
        self.data[(q * self.l + l) * self.r + r]
    }

    #[inline]
    fn set(&mut self, q: usize, l: usize, r: usize, v: E) {
        self.data[(q * self.l + l) * self.r + r] = v;
    }
}

/// Execution outcome: the squared norm plus instrumentation counters.
#[derive(Debug, Clone)]
pub struct ExecOutcome {
    pub value: f64,
    pub macs: u64,
    pub per_step_macs: Vec<u64>,
}

struct MatView<E> {
    l: usize,
    r: usize,
    data: Vec<E>,
}

struct ExecState<E> {
    vert: Vec<Vec<Option<SiteTensor<E>>>>,
    left_env: [Option<Vec<E>>; 2],
    right_env: [Option<Vec<E>>; 2],
    chain: Option<MatView<E>>,
    rc: Option<SiteTensor<E>>,
    inter: Vec<Option<SiteTensor<E>>>,
    out_vec: Option<Vec<E>>,
    result: Option<E>,
}

fn integrity(step: usize, context: impl Into<String>) -> TnError {
    TnError::PlanIntegrity {
        step,
        context: context.into(),
    }
}

/// Execute a plan over per-site input vectors (length = first-layer
/// physical input). The generic engine behind [`execute_plan`].
pub fn run_plan<A: PlanArith>(
    plan: &ContractionPlan,
    model: &TnModel,
    site_inputs: &[Vec<f64>],
    arith: &mut A,
) -> Result<ExecOutcome> {
    plan.matches_model(model)?;
    let l1 = &model.layers[0];
    if site_inputs.len() != l1.n_sites() {
        return Err(TnError::dimension(
            "input site count",
            &[site_inputs.len()],
            &[l1.n_sites()],
        ));
    }
    for (i, x) in site_inputs.iter().enumerate() {
        if x.len() != l1.phys_in() {
            return Err(TnError::dimension(
                format!("input vector at site {i}"),
                &[x.len()],
                &[l1.phys_in()],
            ));
        }
    }

    // convert inputs and weights once, up front
    let inputs: Vec<Vec<A::Elem>> = site_inputs
        .iter()
        .map(|x| x.iter().map(|&v| arith.input(v)).collect())
        .collect();
    let weights: Vec<Vec<Vec<A::Elem>>> = model
        .layers
        .iter()
        .map(|layer| {
            layer
                .sites()
                .iter()
                .map(|t| t.data().iter().map(|&v| arith.weight(v)).collect())
                .collect()
        })
        .collect();

    let n_layers = model.layers.len();
    let mut state: ExecState<A::Elem> = ExecState {
        vert: (0..n_layers)
            .map(|l| (0..model.layers[l].n_sites()).map(|_| None).collect())
            .collect(),
        left_env: [None, None],
        right_env: [None, None],
        chain: None,
        rc: None,
        inter: if n_layers == 2 {
            (0..model.layers[1].n_sites()).map(|_| None).collect()
        } else {
            Vec::new()
        },
        out_vec: None,
        result: None,
    };

    let l1_outputs: Vec<usize> = l1.output_sites().to_vec();
    let mut pairs: Vec<(A::Elem, A::Elem)> = Vec::with_capacity(16);
    let mut per_step_macs = Vec::with_capacity(plan.steps.len());

    for (idx, step) in plan.steps.iter().enumerate() {
        let macs_before = arith.mac_count();
        if step.layer >= n_layers {
            return Err(integrity(idx, "step references a missing layer"));
        }
        match step.kind {
            StepKind::VerticalContract => {
                if step.layer == 0 {
                    vertical_layer0(model, step.site, &inputs, &weights[0], arith, &mut pairs, &mut state)
                        .map_err(|e| integrity(idx, e))?;
                } else {
                    vertical_layer1(model, step.site, &weights[1], &l1_outputs, arith, &mut pairs, &mut state)
                        .map_err(|e| integrity(idx, e))?;
                }
            }
            StepKind::SweepLeft => {
                sweep(step.layer, step.site, true, arith, &mut pairs, &mut state, model)
                    .map_err(|e| integrity(idx, e))?;
            }
            StepKind::SweepRight => {
                sweep(step.layer, step.site, false, arith, &mut pairs, &mut state, model)
                    .map_err(|e| integrity(idx, e))?;
            }
            StepKind::GroupChain => {
                group_chain(step.site, step.partner, arith, &mut pairs, &mut state)
                    .map_err(|e| integrity(idx, e))?;
            }
            StepKind::GroupAbsorb => {
                group_absorb(model, step.site, step.partner, &l1_outputs, arith, &mut pairs, &mut state)
                    .map_err(|e| integrity(idx, e))?;
            }
            StepKind::MergePass1 => {
                merge_pass1(step.layer, step.site, arith, &mut pairs, &mut state, model)
                    .map_err(|e| integrity(idx, e))?;
            }
            StepKind::MergePass2 => {
                merge_pass2(step.layer, arith, &mut pairs, &mut state)
                    .map_err(|e| integrity(idx, e))?;
            }
            StepKind::ThreeSiteMerge => {
                merge_pass1(step.layer, step.site, arith, &mut pairs, &mut state, model)
                    .map_err(|e| integrity(idx, e))?;
                merge_pass2(step.layer, arith, &mut pairs, &mut state)
                    .map_err(|e| integrity(idx, e))?;
            }
            StepKind::TwoSiteMerge => {
                two_site_merge(step.layer, step.site, arith, &mut pairs, &mut state, model)
                    .map_err(|e| integrity(idx, e))?;
            }
            StepKind::NormSquare => {
                let out = match &state.out_vec {
                    Some(v) => v.clone(),
                    None => {
                        // single-site layers: the vertical result is already
                        // the output vector
                        let t = state.vert[step.layer][step.site]
                            .as_ref()
                            .ok_or_else(|| integrity(idx, "norm before vertical result"))?;
                        if t.l != 1 || t.r != 1 {
                            return Err(integrity(idx, "norm operand still carries bonds"));
                        }
                        (0..t.q).map(|q| t.get(q, 0, 0)).collect()
                    }
                };
                pairs.clear();
                for &v in &out {
                    pairs.push((v, v));
                }
                state.result = Some(arith.norm_element(&pairs));
            }
        }
        per_step_macs.push(arith.mac_count() - macs_before);
    }

    let result = state
        .result
        .ok_or_else(|| integrity(plan.steps.len(), "plan produced no final value"))?;
    Ok(ExecOutcome {
        value: arith.to_f64(result),
        macs: arith.mac_count(),
        per_step_macs,
    })
}

fn vertical_layer0<A: PlanArith>(
    model: &TnModel,
    site: usize,
    inputs: &[Vec<A::Elem>],
    weights: &[Vec<A::Elem>],
    arith: &mut A,
    pairs: &mut Vec<(A::Elem, A::Elem)>,
    state: &mut ExecState<A::Elem>,
) -> std::result::Result<(), String> {
    let layer = &model.layers[0];
    if site >= layer.n_sites() {
        return Err(format!("vertical site {site} out of range"));
    }
    let [pi, q, l, r] = layer.site_shape(site);
    let w = &weights[site];
    let x = &inputs[site];
    let mut out = SiteTensor::new(q, l, r, arith.zero());
    for qq in 0..q {
        for ll in 0..l {
            for rr in 0..r {
                pairs.clear();
                for (p, &xp) in x.iter().enumerate().take(pi) {
                    let widx = ((p * q + qq) * l + ll) * r + rr;
                    pairs.push((w[widx], xp));
                }
                out.set(qq, ll, rr, arith.mac_element(pairs));
            }
        }
    }
    state.vert[0][site] = Some(out);
    Ok(())
}

fn vertical_layer1<A: PlanArith>(
    model: &TnModel,
    site: usize,
    weights: &[Vec<A::Elem>],
    l1_outputs: &[usize],
    arith: &mut A,
    pairs: &mut Vec<(A::Elem, A::Elem)>,
    state: &mut ExecState<A::Elem>,
) -> std::result::Result<(), String> {
    let l2 = &model.layers[1];
    if site >= l2.n_sites() {
        return Err(format!("second-layer site {site} out of range"));
    }
    // materialize the intermediate chain slot: absorb result when one was
    // produced, the plain vertical result of the output site otherwise
    if state.inter[site].is_none() {
        let src = l1_outputs[site];
        let t = state.vert[0][src]
            .take()
            .ok_or_else(|| format!("intermediate site {site} missing vertical result"))?;
        state.inter[site] = Some(t);
    }
    let s = state.inter[site].as_ref().unwrap();
    let [p_mid, q, c, d] = l2.site_shape(site);
    if s.q != p_mid {
        return Err(format!(
            "intermediate physical extent {} does not match second-layer input {}",
            s.q, p_mid
        ));
    }
    let w = &weights[site];
    let mut out = SiteTensor::new(q, s.l * c, s.r * d, arith.zero());
    for qq in 0..q {
        for ll in 0..s.l {
            for cc in 0..c {
                for rr in 0..s.r {
                    for dd in 0..d {
                        pairs.clear();
                        for p in 0..p_mid {
                            let widx = ((p * q + qq) * c + cc) * d + dd;
                            pairs.push((s.get(p, ll, rr), w[widx]));
                        }
                        let v = arith.mac_element(pairs);
                        out.set(qq, ll * c + cc, rr * d + dd, v);
                    }
                }
            }
        }
    }
    state.vert[1][site] = Some(out);
    Ok(())
}

/// Matrix view of a vertically contracted non-output site.
fn as_matrix<E: Copy>(t: &SiteTensor<E>) -> std::result::Result<MatView<E>, String> {
    if t.q != 1 {
        return Err("site with a free output leg used as a bond matrix".into());
    }
    Ok(MatView {
        l: t.l,
        r: t.r,
        data: t.data.clone(),
    })
}

fn ensure_left_env<A: PlanArith>(
    layer: usize,
    state: &mut ExecState<A::Elem>,
) -> std::result::Result<(), String> {
    if state.left_env[layer].is_some() {
        return Ok(());
    }
    let t = state.vert[layer][0]
        .as_ref()
        .ok_or("left environment needs the boundary vertical result")?;
    if t.q != 1 || t.l != 1 {
        return Err("left boundary site is not a bond vector".into());
    }
    state.left_env[layer] = Some((0..t.r).map(|r| t.get(0, 0, r)).collect());
    Ok(())
}

fn ensure_right_env<A: PlanArith>(
    layer: usize,
    model: &TnModel,
    state: &mut ExecState<A::Elem>,
) -> std::result::Result<(), String> {
    if state.right_env[layer].is_some() {
        return Ok(());
    }
    let last = model.layers[layer].n_sites() - 1;
    let t = state.vert[layer][last]
        .as_ref()
        .ok_or("right environment needs the boundary vertical result")?;
    if t.q != 1 || t.r != 1 {
        return Err("right boundary site is not a bond vector".into());
    }
    state.right_env[layer] = Some((0..t.l).map(|l| t.get(0, l, 0)).collect());
    Ok(())
}

fn sweep<A: PlanArith>(
    layer: usize,
    site: usize,
    leftward: bool,
    arith: &mut A,
    pairs: &mut Vec<(A::Elem, A::Elem)>,
    state: &mut ExecState<A::Elem>,
    model: &TnModel,
) -> std::result::Result<(), String> {
    let t = state.vert[layer][site]
        .as_ref()
        .ok_or_else(|| format!("sweep needs vertical result of site {site}"))?;
    let m = as_matrix(t)?;
    if leftward {
        ensure_left_env::<A>(layer, state)?;
        let env = state.left_env[layer].take().unwrap();
        if env.len() != m.l {
            return Err(format!(
                "left environment length {} does not match site bond {}",
                env.len(),
                m.l
            ));
        }
        let mut next = vec![arith.zero(); m.r];
        for (r, slot) in next.iter_mut().enumerate() {
            pairs.clear();
            for (l, &e) in env.iter().enumerate() {
                pairs.push((e, m.data[l * m.r + r]));
            }
            *slot = arith.mac_element(pairs);
        }
        state.left_env[layer] = Some(next);
    } else {
        ensure_right_env::<A>(layer, model, state)?;
        let env = state.right_env[layer].take().unwrap();
        if env.len() != m.r {
            return Err(format!(
                "right environment length {} does not match site bond {}",
                env.len(),
                m.r
            ));
        }
        let mut next = vec![arith.zero(); m.l];
        for (l, slot) in next.iter_mut().enumerate() {
            pairs.clear();
            for (r, &e) in env.iter().enumerate() {
                pairs.push((m.data[l * m.r + r], e));
            }
            *slot = arith.mac_element(pairs);
        }
        state.right_env[layer] = Some(next);
    }
    Ok(())
}

fn group_chain<A: PlanArith>(
    site: usize,
    partner: Option<usize>,
    arith: &mut A,
    pairs: &mut Vec<(A::Elem, A::Elem)>,
    state: &mut ExecState<A::Elem>,
) -> std::result::Result<(), String> {
    let right = {
        let t = state.vert[0][site]
            .as_ref()
            .ok_or_else(|| format!("chain needs vertical result of site {site}"))?;
        as_matrix(t)?
    };
    let left = match partner {
        Some(p) => {
            let t = state.vert[0][p]
                .as_ref()
                .ok_or_else(|| format!("chain needs vertical result of site {p}"))?;
            as_matrix(t)?
        }
        None => state.chain.take().ok_or("chain product without a running chain")?,
    };
    if left.r != right.l {
        return Err(format!(
            "chain bond mismatch: {} vs {}",
            left.r, right.l
        ));
    }
    let mut out = MatView {
        l: left.l,
        r: right.r,
        data: vec![arith.zero(); left.l * right.r],
    };
    for l in 0..left.l {
        for r in 0..right.r {
            pairs.clear();
            for k in 0..left.r {
                pairs.push((left.data[l * left.r + k], right.data[k * right.r + r]));
            }
            out.data[l * out.r + r] = arith.mac_element(pairs);
        }
    }
    state.chain = Some(out);
    Ok(())
}

/// Absorb the chained group matrix into the output site to its right.
///
/// The kernel is uniform over (phys, left, bond) output lanes: when the
/// target is the right-boundary site its trivial right bond is zero-padded
/// up to the layer bond, and the padded lanes are discarded after
/// accumulation. This keeps one absorb shape across all groups, matching
/// the declared cost model.
fn group_absorb<A: PlanArith>(
    model: &TnModel,
    site: usize,
    partner: Option<usize>,
    l1_outputs: &[usize],
    arith: &mut A,
    pairs: &mut Vec<(A::Elem, A::Elem)>,
    state: &mut ExecState<A::Elem>,
) -> std::result::Result<(), String> {
    let chain = match partner {
        Some(p) => {
            let t = state.vert[0][p]
                .as_ref()
                .ok_or_else(|| format!("absorb needs vertical result of site {p}"))?;
            as_matrix(t)?
        }
        None => state.chain.take().ok_or("absorb without a running chain")?,
    };
    let target = state.vert[0][site]
        .take()
        .ok_or_else(|| format!("absorb needs vertical result of site {site}"))?;
    if chain.r != target.l {
        return Err(format!(
            "absorb bond mismatch: chain {} vs site {}",
            chain.r, target.l
        ));
    }
    let bond = model.layers[0].bond();
    let zero = arith.zero();
    let mut out = SiteTensor::new(target.q, chain.l, target.r, zero);
    for q in 0..target.q {
        for dl in 0..chain.l {
            for rr in 0..bond {
                pairs.clear();
                for m in 0..chain.r {
                    let c = if rr < target.r {
                        target.get(q, m, rr)
                    } else {
                        zero
                    };
                    pairs.push((chain.data[dl * chain.r + m], c));
                }
                let v = arith.mac_element(pairs);
                if rr < target.r {
                    out.set(q, dl, rr, v);
                }
            }
        }
    }
    let ordinal = l1_outputs
        .iter()
        .position(|&o| o == site)
        .ok_or_else(|| format!("absorb target {site} is not an output site"))?;
    state.inter[ordinal] = Some(out);
    Ok(())
}

fn merge_pass1<A: PlanArith>(
    layer: usize,
    site: usize,
    arith: &mut A,
    pairs: &mut Vec<(A::Elem, A::Elem)>,
    state: &mut ExecState<A::Elem>,
    model: &TnModel,
) -> std::result::Result<(), String> {
    ensure_right_env::<A>(layer, model, state)?;
    let t = state.vert[layer][site]
        .as_ref()
        .ok_or_else(|| format!("merge needs vertical result of site {site}"))?;
    let env = state.right_env[layer].as_ref().unwrap();
    if env.len() != t.r {
        return Err(format!(
            "right environment length {} does not match output site bond {}",
            env.len(),
            t.r
        ));
    }
    let mut rc = SiteTensor::new(t.q, t.l, 1, arith.zero());
    for q in 0..t.q {
        for l in 0..t.l {
            pairs.clear();
            for (r, &e) in env.iter().enumerate() {
                pairs.push((t.get(q, l, r), e));
            }
            rc.set(q, l, 0, arith.mac_element(pairs));
        }
    }
    state.rc = Some(rc);
    Ok(())
}

fn merge_pass2<A: PlanArith>(
    layer: usize,
    arith: &mut A,
    pairs: &mut Vec<(A::Elem, A::Elem)>,
    state: &mut ExecState<A::Elem>,
) -> std::result::Result<(), String> {
    ensure_left_env::<A>(layer, state)?;
    let rc = state.rc.take().ok_or("merge pass 2 before pass 1")?;
    let env = state.left_env[layer].as_ref().unwrap();
    if env.len() != rc.l {
        return Err(format!(
            "left environment length {} does not match merge bond {}",
            env.len(),
            rc.l
        ));
    }
    let mut out = vec![arith.zero(); rc.q];
    for (q, slot) in out.iter_mut().enumerate() {
        pairs.clear();
        for (l, &e) in env.iter().enumerate() {
            pairs.push((e, rc.get(q, l, 0)));
        }
        *slot = arith.mac_element(pairs);
    }
    state.out_vec = Some(out);
    Ok(())
}

fn two_site_merge<A: PlanArith>(
    layer: usize,
    site: usize,
    arith: &mut A,
    pairs: &mut Vec<(A::Elem, A::Elem)>,
    state: &mut ExecState<A::Elem>,
    model: &TnModel,
) -> std::result::Result<(), String> {
    let n = model.layers[layer].n_sites();
    let t_ref = state.vert[layer][site]
        .as_ref()
        .ok_or_else(|| format!("merge needs vertical result of site {site}"))?;
    let (q_n, l_n, r_n) = (t_ref.q, t_ref.l, t_ref.r);
    let mut out = vec![arith.zero(); q_n];
    if site == 0 {
        if l_n != 1 {
            return Err("boundary-output merge expects trivial left bond".into());
        }
        ensure_right_env::<A>(layer, model, state)?;
        let env = state.right_env[layer].as_ref().unwrap();
        if env.len() != r_n {
            return Err("right environment does not match output bond".into());
        }
        let t = state.vert[layer][site].as_ref().unwrap();
        for (q, slot) in out.iter_mut().enumerate() {
            pairs.clear();
            for (r, &e) in env.iter().enumerate() {
                pairs.push((t.get(q, 0, r), e));
            }
            *slot = arith.mac_element(pairs);
        }
    } else if site == n - 1 {
        if r_n != 1 {
            return Err("boundary-output merge expects trivial right bond".into());
        }
        ensure_left_env::<A>(layer, state)?;
        let env = state.left_env[layer].as_ref().unwrap();
        if env.len() != l_n {
            return Err("left environment does not match output bond".into());
        }
        let t = state.vert[layer][site].as_ref().unwrap();
        for (q, slot) in out.iter_mut().enumerate() {
            pairs.clear();
            for (l, &e) in env.iter().enumerate() {
                pairs.push((e, t.get(q, l, 0)));
            }
            *slot = arith.mac_element(pairs);
        }
    } else {
        return Err("two-site merge target must be a boundary site".into());
    }
    state.out_vec = Some(out);
    Ok(())
}

fn mps_site_inputs(mps: &EmbeddedMps) -> Vec<Vec<f64>> {
    mps.sites.iter().map(|s| s.values.to_vec()).collect()
}

fn check_mps(model: &TnModel, mps: &EmbeddedMps) -> Result<()> {
    if mps.ordering != model.ordering {
        return Err(TnError::Structure(
            "embedded input was built with a different site ordering".into(),
        ));
    }
    Ok(())
}

/// Execute a plan on an embedded event in double precision, returning the
/// squared norm of the output vector.
pub fn execute_plan(plan: &ContractionPlan, model: &TnModel, mps: &EmbeddedMps) -> Result<f64> {
    check_mps(model, mps)?;
    let mut arith = FloatArith::default();
    Ok(run_plan(plan, model, &mps_site_inputs(mps), &mut arith)?.value)
}

/// Execute while counting every multiply, returning the squared norm,
/// the total count and the per-step counts.
pub fn execute_plan_instrumented(
    plan: &ContractionPlan,
    model: &TnModel,
    mps: &EmbeddedMps,
) -> Result<ExecOutcome> {
    check_mps(model, mps)?;
    let mut arith = FloatArith::default();
    run_plan(plan, model, &mps_site_inputs(mps), &mut arith)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contraction::{plan_smpo, ContractionStep, Phase};
    use crate::embedding::{embed, identity_ordering};
    use crate::model::{new_smpo, reference_smpo, TnModel};
    use crate::tensor::DenseTensor;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_inputs(rng: &mut StdRng, n: usize, p: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn identity_single_site_on_unit_vector() {
        let mut layer = new_smpo(1, &[0], 1, 3, 3, 0).unwrap();
        let mut t = DenseTensor::zeros(&[3, 3, 1, 1]);
        for p in 0..3 {
            t.set(&[p, p, 0, 0], 1.0);
        }
        *layer.site_mut(0) = t;
        let model = TnModel::single(layer, "1-1").unwrap();
        let plan = plan_smpo(&model.layers[0]).unwrap();
        let x = vec![vec![0.6, 0.8, 0.0]];
        let mut arith = FloatArith::default();
        let out = run_plan(&plan, &model, &x, &mut arith).unwrap();
        assert!((out.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn instrumented_counts_match_declared_costs() {
        let model = reference_smpo(7);
        let plan = plan_smpo(&model.layers[0]).unwrap();
        let mut rng = StdRng::seed_from_u64(1);
        let event = crate::testutil::random_event(&mut rng);
        let mps = embed(&event, &identity_ordering()).unwrap();
        let out = execute_plan_instrumented(&plan, &model, &mps).unwrap();
        assert_eq!(out.macs, plan.total_macs);
        for (step, &counted) in plan.steps.iter().zip(&out.per_step_macs) {
            assert_eq!(step.macs, counted, "step {:?}", step.kind);
        }
    }

    #[test]
    fn three_site_merge_equals_two_pass_merge() {
        let model = reference_smpo(3);
        let layer = &model.layers[0];
        let base = plan_smpo(layer).unwrap();
        // replace MergePass1 + MergePass2 by one fused-but-decomposed step
        let mut fused = base.clone();
        let target = layer.output_sites()[0];
        let mut steps: Vec<ContractionStep> = Vec::new();
        let mut replaced = false;
        for s in &fused.steps {
            match s.kind {
                StepKind::MergePass1 => {
                    steps.push(ContractionStep {
                        kind: StepKind::ThreeSiteMerge,
                        layer: 0,
                        site: target,
                        partner: None,
                        phase: Phase::Horizontal,
                        macs: s.macs + layer.phys_out() as u64 * layer.left_bond(target) as u64,
                        par_group: s.par_group,
                    });
                    replaced = true;
                }
                StepKind::MergePass2 => {}
                _ => steps.push(s.clone()),
            }
        }
        assert!(replaced);
        fused.steps = steps;
        fused.total_macs = fused.steps.iter().map(|s| s.macs).sum();

        let mut rng = StdRng::seed_from_u64(5);
        let event = crate::testutil::random_event(&mut rng);
        let mps = embed(&event, &identity_ordering()).unwrap();
        let a = execute_plan_instrumented(&base, &model, &mps).unwrap();
        let b = execute_plan_instrumented(&fused, &model, &mps).unwrap();
        assert!((a.value - b.value).abs() < 1e-12 * a.value.abs().max(1.0));
        assert_eq!(a.macs, b.macs);
        assert_eq!(b.macs, fused.total_macs);
    }

    #[test]
    fn plan_for_wrong_model_is_rejected() {
        let model_a = reference_smpo(1);
        let model_b = {
            let layer = new_smpo(5, &[2], 2, 3, 3, 0).unwrap();
            TnModel::single(layer, "5-1").unwrap()
        };
        let plan = plan_smpo(&model_a.layers[0]).unwrap();
        let mut rng = StdRng::seed_from_u64(9);
        let inputs = random_inputs(&mut rng, 5, 3);
        let mut arith = FloatArith::default();
        assert!(run_plan(&plan, &model_b, &inputs, &mut arith).is_err());
    }
}
