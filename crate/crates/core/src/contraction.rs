//! Contraction schedules and their multiply-accumulate cost model.
//!
//! A plan is an ordered list of steps over a model's site tensors. Every
//! step declares its MAC cost up front (one MAC = one `acc += a * b`);
//! chained products are decomposed so no step multiplies three factors.
//! Plan construction is deterministic in the model, so a serialized model
//! pins the step order that fixed-point execution depends on.
//!
//! Single-layer schedule: per-site vertical contractions, then a
//! bidirectional sweep absorbing the boundary environments inward until
//! three tensors remain, a two-pass merge, and the squared norm.
//!
//! Cascade schedule: first-layer vertical contractions; the runs of
//! output-less sites between output sites are chained into single bond
//! matrices and absorbed rightward into the next output site (the first
//! output site is left as is); then the second layer runs the single-layer
//! schedule over composite bond indices.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TnError};
use crate::model::{SmpoLayer, TnModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    VerticalContract,
    SweepLeft,
    SweepRight,
    GroupChain,
    GroupAbsorb,
    MergePass1,
    MergePass2,
    ThreeSiteMerge,
    TwoSiteMerge,
    NormSquare,
}

/// Cost-report phase a step belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Vertical,
    Horizontal,
    L1Vertical,
    L1Horizontal,
    L2Vertical,
    L2Horizontal,
    Norm,
}

/// One schedule step.
///
/// `site` is the primary operand. `partner` names a second source site
/// where one is needed: the chain-start site on the first product of a
/// group, or the single chained site absorbed when a group has no chain
/// products. `par_group` is a stage annotation: steps sharing a stage are
/// mutually independent and may run concurrently; totals do not depend
/// on it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionStep {
    pub kind: StepKind,
    pub layer: usize,
    pub site: usize,
    pub partner: Option<usize>,
    pub phase: Phase,
    pub macs: u64,
    pub par_group: u32,
}

/// Shape fingerprint of one layer, used to validate plan/model consistency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSig {
    pub n_sites: usize,
    pub bond: usize,
    pub phys_in: usize,
    pub phys_out: usize,
    pub output_sites: Vec<usize>,
}

impl LayerSig {
    pub fn of(layer: &SmpoLayer) -> Self {
        LayerSig {
            n_sites: layer.n_sites(),
            bond: layer.bond(),
            phys_in: layer.phys_in(),
            phys_out: layer.phys_out(),
            output_sites: layer.output_sites().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionPlan {
    pub arch: String,
    pub steps: Vec<ContractionStep>,
    pub total_macs: u64,
    pub layers: Vec<LayerSig>,
}

impl ContractionPlan {
    pub fn matches_model(&self, model: &TnModel) -> Result<()> {
        let sigs: Vec<LayerSig> = model.layers.iter().map(LayerSig::of).collect();
        if sigs != self.layers {
            return Err(TnError::Structure(
                "plan was built for a different model shape".into(),
            ));
        }
        Ok(())
    }
}

/// Per-phase MAC subtotals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacReport {
    pub arch: String,
    pub vertical: u64,
    pub horizontal: u64,
    pub l1_vertical: u64,
    pub l1_horizontal: u64,
    pub l2_vertical: u64,
    pub l2_horizontal: u64,
    pub norm: u64,
    pub total: u64,
}

impl MacReport {
    /// Rows with nonzero (or norm/total) content for table rendering.
    pub fn rows(&self) -> Vec<(&'static str, u64)> {
        let mut rows = Vec::new();
        if self.vertical > 0 || self.horizontal > 0 {
            rows.push(("vertical", self.vertical));
            rows.push(("horizontal", self.horizontal));
        }
        if self.l1_vertical > 0 || self.l2_vertical > 0 {
            rows.push(("L1 vertical", self.l1_vertical));
            rows.push(("L1 horizontal", self.l1_horizontal));
            rows.push(("L2 vertical", self.l2_vertical));
            rows.push(("L2 horizontal", self.l2_horizontal));
        }
        rows.push(("norm", self.norm));
        rows
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("architecture {}\n", self.arch));
        out.push_str(&format!("{:<14} {:>8}\n", "phase", "MACs"));
        for (name, macs) in self.rows() {
            out.push_str(&format!("{name:<14} {macs:>8}\n"));
        }
        out.push_str(&format!("{:<14} {:>8}\n", "total", self.total));
        out
    }
}

/// Sum a plan's declared step costs into per-phase subtotals.
pub fn count_macs(plan: &ContractionPlan) -> MacReport {
    let mut report = MacReport {
        arch: plan.arch.clone(),
        vertical: 0,
        horizontal: 0,
        l1_vertical: 0,
        l1_horizontal: 0,
        l2_vertical: 0,
        l2_horizontal: 0,
        norm: 0,
        total: 0,
    };
    for step in &plan.steps {
        let slot = match step.phase {
            Phase::Vertical => &mut report.vertical,
            Phase::Horizontal => &mut report.horizontal,
            Phase::L1Vertical => &mut report.l1_vertical,
            Phase::L1Horizontal => &mut report.l1_horizontal,
            Phase::L2Vertical => &mut report.l2_vertical,
            Phase::L2Horizontal => &mut report.l2_horizontal,
            Phase::Norm => &mut report.norm,
        };
        *slot += step.macs;
        report.total += step.macs;
    }
    report
}

/// Vertical-contraction cost of one site: each output element accumulates
/// over the physical input.
fn vertical_macs(layer: &SmpoLayer, site: usize) -> u64 {
    (layer.phys_in() * layer.phys_out_extent(site) * layer.left_bond(site) * layer.right_bond(site))
        as u64
}

/// Emit the sweep + merge steps that reduce a vertically contracted chain
/// with a single output site to the final output vector.
///
/// `bond_of(site) -> (left, right)` supplies the (possibly composite)
/// bond extents seen by the horizontal phase.
#[allow(clippy::too_many_arguments)]
fn push_horizontal_steps(
    steps: &mut Vec<ContractionStep>,
    layer_idx: usize,
    n: usize,
    target: usize,
    phys_out: usize,
    bond_of: &dyn Fn(usize) -> (usize, usize),
    phase: Phase,
    stage: &mut u32,
) {
    let left_len = target.saturating_sub(1); // sweep steps on sites 1..target
    let right_len = n.saturating_sub(target + 2); // sweep steps on sites n-2..target+1
    let wing = left_len.max(right_len);
    for k in 0..wing {
        if k < left_len {
            let site = 1 + k;
            let (l, r) = bond_of(site);
            steps.push(ContractionStep {
                kind: StepKind::SweepLeft,
                layer: layer_idx,
                site,
                partner: None,
                phase,
                macs: (l * r) as u64,
                par_group: *stage + k as u32,
            });
        }
        if k < right_len {
            let site = n - 2 - k;
            let (l, r) = bond_of(site);
            steps.push(ContractionStep {
                kind: StepKind::SweepRight,
                layer: layer_idx,
                site,
                partner: None,
                phase,
                macs: (l * r) as u64,
                par_group: *stage + k as u32,
            });
        }
    }
    *stage += wing as u32;

    let (tl, tr) = bond_of(target);
    if n == 1 {
        // single site: the vertical result is already the output vector
    } else if target == 0 {
        steps.push(ContractionStep {
            kind: StepKind::TwoSiteMerge,
            layer: layer_idx,
            site: target,
            partner: None,
            phase,
            macs: (phys_out * tr) as u64,
            par_group: *stage,
        });
        *stage += 1;
    } else if target == n - 1 {
        steps.push(ContractionStep {
            kind: StepKind::TwoSiteMerge,
            layer: layer_idx,
            site: target,
            partner: None,
            phase,
            macs: (phys_out * tl) as u64,
            par_group: *stage,
        });
        *stage += 1;
    } else {
        steps.push(ContractionStep {
            kind: StepKind::MergePass1,
            layer: layer_idx,
            site: target,
            partner: None,
            phase,
            macs: (phys_out * tl * tr) as u64,
            par_group: *stage,
        });
        steps.push(ContractionStep {
            kind: StepKind::MergePass2,
            layer: layer_idx,
            site: target,
            partner: None,
            phase,
            macs: (phys_out * tl) as u64,
            par_group: *stage + 1,
        });
        *stage += 2;
    }
}

/// Build the bidirectional-sweep schedule for a single-layer model with
/// one output site.
pub fn plan_smpo(layer: &SmpoLayer) -> Result<ContractionPlan> {
    layer.validate_shapes()?;
    if layer.output_sites().len() != 1 {
        return Err(TnError::UnsupportedTopology(format!(
            "single-layer schedule requires exactly one output site, got {:?}",
            layer.output_sites()
        )));
    }
    let n = layer.n_sites();
    let target = layer.output_sites()[0];
    let mut steps = Vec::new();

    for site in 0..n {
        steps.push(ContractionStep {
            kind: StepKind::VerticalContract,
            layer: 0,
            site,
            partner: None,
            phase: Phase::Vertical,
            macs: vertical_macs(layer, site),
            par_group: 0,
        });
    }

    let mut stage = 1u32;
    let bond_of = |site: usize| (layer.left_bond(site), layer.right_bond(site));
    push_horizontal_steps(
        &mut steps,
        0,
        n,
        target,
        layer.phys_out(),
        &bond_of,
        Phase::Horizontal,
        &mut stage,
    );

    steps.push(ContractionStep {
        kind: StepKind::NormSquare,
        layer: 0,
        site: target,
        partner: None,
        phase: Phase::Norm,
        macs: layer.phys_out() as u64,
        par_group: stage,
    });

    let total_macs = steps.iter().map(|s| s.macs).sum();
    Ok(ContractionPlan {
        arch: format!("{}-1", n),
        steps,
        total_macs,
        layers: vec![LayerSig::of(layer)],
    })
}

/// Build the grouped + composite-bond schedule for a two-layer cascade.
pub fn plan_csmpo(model: &TnModel) -> Result<ContractionPlan> {
    if model.layers.len() != 2 {
        return Err(TnError::UnsupportedTopology(
            "cascade schedule requires a two-layer model".into(),
        ));
    }
    let l1 = &model.layers[0];
    let l2 = &model.layers[1];
    l1.validate_shapes()?;
    l2.validate_shapes()?;
    let outputs = l1.output_sites();
    let m = outputs.len();
    if m < 2 || outputs[0] != 0 || outputs[m - 1] != l1.n_sites() - 1 {
        return Err(TnError::UnsupportedTopology(
            "cascade schedule requires first-layer outputs at both chain ends".into(),
        ));
    }
    if l2.output_sites().len() != 1 {
        return Err(TnError::UnsupportedTopology(
            "cascade schedule requires exactly one second-layer output site".into(),
        ));
    }
    let b1 = l1.bond();
    let p_mid = l1.phys_out();
    let mut steps = Vec::new();

    for site in 0..l1.n_sites() {
        steps.push(ContractionStep {
            kind: StepKind::VerticalContract,
            layer: 0,
            site,
            partner: None,
            phase: Phase::L1Vertical,
            macs: vertical_macs(l1, site),
            par_group: 0,
        });
    }

    // grouped horizontal contraction: chain each run of output-less sites,
    // then absorb rightward into the next output site. The absorb kernel is
    // uniform across groups (p' x b1^3), with the right-boundary target's
    // trivial bond zero-padded to b1.
    let mut stage = 1u32;
    let mut max_chain = 0u32;
    for gap in 0..(m - 1) {
        let lo = outputs[gap];
        let hi = outputs[gap + 1];
        let g = hi - lo - 1;
        if g == 0 {
            continue;
        }
        for (j, site) in (lo + 2..hi).enumerate() {
            steps.push(ContractionStep {
                kind: StepKind::GroupChain,
                layer: 0,
                site,
                partner: if j == 0 { Some(lo + 1) } else { None },
                phase: Phase::L1Horizontal,
                macs: (b1 * b1 * b1) as u64,
                par_group: stage + j as u32,
            });
        }
        max_chain = max_chain.max((g - 1) as u32);
        steps.push(ContractionStep {
            kind: StepKind::GroupAbsorb,
            layer: 0,
            site: hi,
            partner: if g == 1 { Some(lo + 1) } else { None },
            phase: Phase::L1Horizontal,
            macs: (p_mid * b1 * b1 * b1) as u64,
            par_group: stage + (g - 1) as u32,
        });
        max_chain = max_chain.max(g as u32);
    }
    stage += max_chain;

    // the intermediate chain's own bonds: b1 inside, 1 at its ends
    let inter_left = |k: usize| if k == 0 { 1 } else { b1 };
    let inter_right = |k: usize| if k + 1 == m { 1 } else { b1 };

    for k in 0..m {
        let elements =
            l2.phys_out_extent(k) * inter_left(k) * l2.left_bond(k) * inter_right(k) * l2.right_bond(k);
        steps.push(ContractionStep {
            kind: StepKind::VerticalContract,
            layer: 1,
            site: k,
            partner: None,
            phase: Phase::L2Vertical,
            macs: (l2.phys_in() * elements) as u64,
            par_group: stage,
        });
    }
    stage += 1;

    let target = l2.output_sites()[0];
    let bond_of = |site: usize| {
        (
            inter_left(site) * l2.left_bond(site),
            inter_right(site) * l2.right_bond(site),
        )
    };
    push_horizontal_steps(
        &mut steps,
        1,
        m,
        target,
        l2.phys_out(),
        &bond_of,
        Phase::L2Horizontal,
        &mut stage,
    );

    steps.push(ContractionStep {
        kind: StepKind::NormSquare,
        layer: 1,
        site: target,
        partner: None,
        phase: Phase::Norm,
        macs: l2.phys_out() as u64,
        par_group: stage,
    });

    let total_macs = steps.iter().map(|s| s.macs).sum();
    Ok(ContractionPlan {
        arch: model.label.clone(),
        steps,
        total_macs,
        layers: vec![LayerSig::of(l1), LayerSig::of(l2)],
    })
}

/// Plan whichever schedule matches the model's layer count.
pub fn plan_model(model: &TnModel) -> Result<ContractionPlan> {
    if model.is_cascade() {
        plan_csmpo(model)
    } else {
        plan_smpo(&model.layers[0])
    }
}

/// Closed form for the first-layer horizontal cost of a cascade over `n`
/// sites with `m` output sites (all inter-output gaps nonempty):
/// chain products plus one absorb per gap.
pub fn l1_horizontal_closed_form(n: usize, m: usize, bond1: usize, phys_mid: usize) -> u64 {
    assert!(n + 1 >= 2 * m, "every inter-output gap must be nonempty");
    let b3 = (bond1 * bond1 * bond1) as u64;
    b3 * ((n + 1 - 2 * m) as u64 + ((m - 1) * phys_mid) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{new_csmpo, new_smpo, reference_smpo, ARCH_CSMPO_19_2_1, ARCH_CSMPO_19_7_1};

    #[test]
    fn smpo_plan_matches_reference_costs() {
        let model = reference_smpo(0);
        let plan = plan_smpo(&model.layers[0]).unwrap();
        let report = count_macs(&plan);
        assert_eq!(report.vertical, 936);
        assert_eq!(report.horizontal, 316);
        assert_eq!(report.norm, 3);
        assert_eq!(report.total, 1255);
        assert_eq!(plan.total_macs, 1255);
    }

    #[test]
    fn smpo_vertical_per_site_costs() {
        let model = reference_smpo(0);
        let plan = plan_smpo(&model.layers[0]).unwrap();
        let vert: Vec<u64> = plan
            .steps
            .iter()
            .filter(|s| s.kind == StepKind::VerticalContract)
            .map(|s| s.macs)
            .collect();
        assert_eq!(vert[0], 12);
        assert!(vert[1..9].iter().all(|&m| m == 48));
        assert_eq!(vert[9], 144);
        assert!(vert[10..18].iter().all(|&m| m == 48));
        assert_eq!(vert[18], 12);
    }

    #[test]
    fn csmpo_19_7_1_plan_costs() {
        let model = new_csmpo(ARCH_CSMPO_19_7_1, 2, 2, 3, 0).unwrap();
        let plan = plan_csmpo(&model).unwrap();
        let report = count_macs(&plan);
        assert_eq!(report.l1_vertical, 360);
        assert_eq!(report.l1_horizontal, 192);
        assert_eq!(report.l2_vertical, 360);
        assert_eq!(report.l2_horizontal, 124);
        assert_eq!(report.norm, 3);
        assert_eq!(report.total, 1039);
    }

    #[test]
    fn csmpo_19_7_1_l1_vertical_per_site() {
        let model = new_csmpo(ARCH_CSMPO_19_7_1, 2, 2, 3, 0).unwrap();
        let plan = plan_csmpo(&model).unwrap();
        let vert: Vec<u64> = plan
            .steps
            .iter()
            .filter(|s| s.kind == StepKind::VerticalContract && s.layer == 0)
            .map(|s| s.macs)
            .collect();
        let expect = [
            18u64, 12, 12, 36, 12, 12, 36, 12, 12, 36, 12, 12, 36, 12, 12, 36, 12, 12, 18,
        ];
        assert_eq!(vert, expect);
    }

    #[test]
    fn csmpo_19_2_1_plan_costs() {
        let model = new_csmpo(ARCH_CSMPO_19_2_1, 2, 2, 3, 0).unwrap();
        let plan = plan_csmpo(&model).unwrap();
        let report = count_macs(&plan);
        assert_eq!(report.l1_vertical, 240);
        assert_eq!(report.l1_horizontal, 152);
        assert_eq!(report.l2_vertical, 48);
        assert_eq!(report.l2_horizontal, 12);
        assert_eq!(report.norm, 3);
        assert_eq!(report.total, 455);

        // L2 vertical per site: output at 0 costs 36, the non-output
        // boundary site costs 12
        let l2v: Vec<u64> = plan
            .steps
            .iter()
            .filter(|s| s.kind == StepKind::VerticalContract && s.layer == 1)
            .map(|s| s.macs)
            .collect();
        assert_eq!(l2v, vec![36, 12]);

        // L2 horizontal: exactly one merge, no sweeps
        let hsteps: Vec<&ContractionStep> = plan
            .steps
            .iter()
            .filter(|s| s.phase == Phase::L2Horizontal)
            .collect();
        assert_eq!(hsteps.len(), 1);
        assert_eq!(hsteps[0].kind, StepKind::TwoSiteMerge);
        assert_eq!(hsteps[0].macs, 12);
    }

    #[test]
    fn one_site_layer_plan() {
        let layer = new_smpo(1, &[0], 4, 3, 3, 0).unwrap();
        let plan = plan_smpo(&layer).unwrap();
        assert_eq!(plan.steps.len(), 2);
        assert_eq!(plan.steps[0].kind, StepKind::VerticalContract);
        assert_eq!(plan.steps[1].kind, StepKind::NormSquare);
        assert_eq!(plan.total_macs, 12);
    }

    #[test]
    fn multi_output_single_layer_rejected() {
        let layer = new_smpo(5, &[1, 3], 2, 3, 3, 0).unwrap();
        let err = plan_smpo(&layer).unwrap_err();
        assert!(matches!(err, TnError::UnsupportedTopology(_)));
    }

    #[test]
    fn closed_form_matches_group_tables() {
        // b1 = 2, p' = 3, N = 19: 136 + 8 M
        for m in 2..=9usize {
            assert_eq!(
                l1_horizontal_closed_form(19, m, 2, 3),
                (136 + 8 * m) as u64
            );
        }
    }

    #[test]
    fn chained_products_are_pairwise() {
        // no step may cost more than a two-factor kernel of its operands:
        // every declared cost must decompose as elements x one summation
        // extent, which the planners guarantee by construction. Spot-check
        // that group steps of the 19-2-1 plan stay at the two-matrix cost.
        let model = new_csmpo(ARCH_CSMPO_19_2_1, 2, 2, 3, 0).unwrap();
        let plan = plan_csmpo(&model).unwrap();
        let chains: Vec<&ContractionStep> = plan
            .steps
            .iter()
            .filter(|s| s.kind == StepKind::GroupChain)
            .collect();
        assert_eq!(chains.len(), 16);
        assert!(chains.iter().all(|s| s.macs == 8));
        assert_eq!(chains[0].partner, Some(1));
        assert!(chains[1..].iter().all(|s| s.partner.is_none()));
    }
}
