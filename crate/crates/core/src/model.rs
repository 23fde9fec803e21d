//! Spaced matrix-product-operator models: weight layout, construction,
//! parameter counting, cascade flattening and on-disk serialization.
//!
//! Site tensors use one global axis convention: (phys_in, phys_out,
//! left_bond, right_bond). Boundary sites have bond extent 1 on their
//! outer side, non-output sites have physical-output extent 1.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::embedding::{identity_ordering, validate_ordering, N_SITES};
use crate::error::{Result, TnError};
use crate::tensor::{contract, DenseTensor};

/// Magic bytes of the model file format.
const MODEL_MAGIC: &[u8; 4] = b"TNM1";

/// Canonical architecture labels.
pub const ARCH_SMPO_19_1: &str = "19-1";
pub const ARCH_CSMPO_19_7_1: &str = "19-7-1";
pub const ARCH_CSMPO_19_2_1: &str = "19-2-1";

/// One spaced MPO layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SmpoLayer {
    n_sites: usize,
    sites: Vec<DenseTensor>,
    output_sites: Vec<usize>,
    bond: usize,
    phys_in: usize,
    phys_out: usize,
}

impl SmpoLayer {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn bond(&self) -> usize {
        self.bond
    }

    pub fn phys_in(&self) -> usize {
        self.phys_in
    }

    pub fn phys_out(&self) -> usize {
        self.phys_out
    }

    /// Sorted output-site indices.
    pub fn output_sites(&self) -> &[usize] {
        &self.output_sites
    }

    pub fn is_output_site(&self, site: usize) -> bool {
        self.output_sites.binary_search(&site).is_ok()
    }

    pub fn site(&self, i: usize) -> &DenseTensor {
        &self.sites[i]
    }

    pub fn site_mut(&mut self, i: usize) -> &mut DenseTensor {
        &mut self.sites[i]
    }

    pub fn sites(&self) -> &[DenseTensor] {
        &self.sites
    }

    /// Left bond extent of `site` under the corner conventions.
    pub fn left_bond(&self, site: usize) -> usize {
        if site == 0 {
            1
        } else {
            self.bond
        }
    }

    /// Right bond extent of `site` under the corner conventions.
    pub fn right_bond(&self, site: usize) -> usize {
        if site + 1 == self.n_sites {
            1
        } else {
            self.bond
        }
    }

    /// Physical-output extent of `site`: `phys_out` for output sites, 1 otherwise.
    pub fn phys_out_extent(&self, site: usize) -> usize {
        if self.is_output_site(site) {
            self.phys_out
        } else {
            1
        }
    }

    /// Expected tensor shape of `site` under the global axis convention.
    pub fn site_shape(&self, site: usize) -> [usize; 4] {
        [
            self.phys_in,
            self.phys_out_extent(site),
            self.left_bond(site),
            self.right_bond(site),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.sites.iter().map(|t| t.len()).sum()
    }

    /// Verify every site tensor against the corner-site conventions.
    pub fn validate_shapes(&self) -> Result<()> {
        if self.sites.len() != self.n_sites {
            return Err(TnError::Structure(format!(
                "layer holds {} site tensors for {} sites",
                self.sites.len(),
                self.n_sites
            )));
        }
        for i in 0..self.n_sites {
            let expect = self.site_shape(i);
            if self.sites[i].shape() != expect {
                return Err(TnError::dimension(
                    format!("site {i} tensor shape"),
                    self.sites[i].shape(),
                    &expect,
                ));
            }
        }
        Ok(())
    }
}

/// Noisy-identity site initialization.
///
/// The slice with equal bond indices carries the identity signal: output
/// sites couple matching physical indices one-to-one; sites with a trivial
/// output leg aggregate all physical inputs so that zero-padded particles
/// (whose first component vanishes) still propagate signal. Uniform noise
/// scaled by 1/sqrt(bond) breaks the symmetry.
fn noisy_identity_site(shape: [usize; 4], bond: usize, rng: &mut ChaCha8Rng) -> DenseTensor {
    let [pi, po, l, r] = shape;
    let mut t = DenseTensor::zeros(&shape);
    let noise_scale = 0.1 / (bond as f64).sqrt();
    for p in 0..pi {
        for q in 0..po {
            for a in 0..l {
                for b in 0..r {
                    let mut v = rng.gen_range(-1.0..1.0) * noise_scale;
                    if a == b && (p == q || (po == 1 && q == 0)) {
                        v += 1.0;
                    }
                    t.set(&[p, q, a, b], v);
                }
            }
        }
    }
    t
}

/// Build a single spaced MPO layer with noisy-identity initialization.
pub fn new_smpo(
    n_sites: usize,
    output_sites: &[usize],
    bond: usize,
    phys_in: usize,
    phys_out: usize,
    seed: u64,
) -> Result<SmpoLayer> {
    if n_sites == 0 {
        return Err(TnError::Config("layer needs at least one site".into()));
    }
    if output_sites.is_empty() {
        return Err(TnError::Config("output-site set must not be empty".into()));
    }
    if bond == 0 || phys_in == 0 || phys_out == 0 {
        return Err(TnError::Config("bond and physical dimensions must be >= 1".into()));
    }
    let mut outputs = output_sites.to_vec();
    outputs.sort_unstable();
    outputs.dedup();
    if outputs.len() != output_sites.len() {
        return Err(TnError::Config("output sites contain duplicates".into()));
    }
    if *outputs.last().unwrap() >= n_sites {
        return Err(TnError::Config(format!(
            "output site {} out of range for {} sites",
            outputs.last().unwrap(),
            n_sites
        )));
    }
    let mut layer = SmpoLayer {
        n_sites,
        sites: Vec::with_capacity(n_sites),
        output_sites: outputs,
        bond,
        phys_in,
        phys_out,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n_sites {
        let shape = layer.site_shape(i);
        layer.sites.push(noisy_identity_site(shape, bond, &mut rng));
    }
    Ok(layer)
}

/// A one- or two-layer tensor-network model plus the input site ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct TnModel {
    pub layers: Vec<SmpoLayer>,
    pub ordering: Vec<usize>,
    pub label: String,
}

impl TnModel {
    pub fn single(layer: SmpoLayer, label: impl Into<String>) -> Result<Self> {
        layer.validate_shapes()?;
        Ok(TnModel {
            layers: vec![layer],
            ordering: identity_ordering(),
            label: label.into(),
        })
    }

    pub fn cascade(first: SmpoLayer, second: SmpoLayer, label: impl Into<String>) -> Result<Self> {
        first.validate_shapes()?;
        second.validate_shapes()?;
        if second.n_sites != first.output_sites.len() {
            return Err(TnError::Structure(format!(
                "second layer has {} sites but first layer has {} outputs",
                second.n_sites,
                first.output_sites.len()
            )));
        }
        if second.phys_in != first.phys_out {
            return Err(TnError::Structure(format!(
                "second layer phys_in {} != first layer phys_out {}",
                second.phys_in, first.phys_out
            )));
        }
        Ok(TnModel {
            layers: vec![first, second],
            ordering: identity_ordering(),
            label: label.into(),
        })
    }

    pub fn with_ordering(mut self, ordering: Vec<usize>) -> Result<Self> {
        validate_ordering(&ordering)?;
        self.ordering = ordering;
        Ok(self)
    }

    pub fn is_cascade(&self) -> bool {
        self.layers.len() == 2
    }

    /// Total trainable parameter count.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Number of input sites of the first layer.
    pub fn n_input_sites(&self) -> usize {
        self.layers[0].n_sites()
    }
}

/// Reference single-layer model: 19 sites, bond 4, output at site 9.
pub fn reference_smpo(seed: u64) -> TnModel {
    let layer = new_smpo(N_SITES, &[9], 4, 3, 3, seed).expect("valid reference layer");
    TnModel::single(layer, ARCH_SMPO_19_1).expect("valid reference model")
}

/// Evenly spread `m` output sites over `n` sites, pinning both ends.
pub fn spaced_output_sites(n: usize, m: usize) -> Vec<usize> {
    assert!(m >= 2 && m <= n);
    (0..m)
        .map(|k| ((k * (n - 1)) as f64 / (m - 1) as f64).round() as usize)
        .collect()
}

/// General two-layer cascade builder. The first layer's output sites must
/// include both chain ends (the layouts the grouped contraction supports).
#[allow(clippy::too_many_arguments)]
pub fn new_cascade(
    n_sites: usize,
    l1_outputs: &[usize],
    l2_output: usize,
    bond1: usize,
    bond2: usize,
    phys_in: usize,
    phys_mid: usize,
    phys_out: usize,
    seed: u64,
    label: impl Into<String>,
) -> Result<TnModel> {
    let m = l1_outputs.len();
    if m < 2 {
        return Err(TnError::Config(
            "cascade first layer needs at least two output sites".into(),
        ));
    }
    let mut sorted = l1_outputs.to_vec();
    sorted.sort_unstable();
    if sorted[0] != 0 || sorted[m - 1] != n_sites - 1 {
        return Err(TnError::Config(
            "cascade first-layer outputs must include both chain ends".into(),
        ));
    }
    let first = new_smpo(n_sites, &sorted, bond1, phys_in, phys_mid, seed)?;
    let second = new_smpo(m, &[l2_output], bond2, phys_mid, phys_out, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    TnModel::cascade(first, second, label)
}

/// Build one of the two reference cascaded architectures.
///
/// `"19-7-1"`: first layer outputs {0,3,6,9,12,15,18}, second layer output
/// at its center site 3. `"19-2-1"`: first layer outputs {0,18}, second
/// layer output at site 0.
pub fn new_csmpo(arch: &str, bond1: usize, bond2: usize, phys_mid: usize, seed: u64) -> Result<TnModel> {
    match arch {
        ARCH_CSMPO_19_7_1 => new_cascade(
            N_SITES,
            &[0, 3, 6, 9, 12, 15, 18],
            3,
            bond1,
            bond2,
            3,
            phys_mid,
            3,
            seed,
            ARCH_CSMPO_19_7_1,
        ),
        ARCH_CSMPO_19_2_1 => new_cascade(
            N_SITES,
            &[0, 18],
            0,
            bond1,
            bond2,
            3,
            phys_mid,
            3,
            seed,
            ARCH_CSMPO_19_2_1,
        ),
        other => Err(TnError::Config(format!(
            "unknown cascade architecture '{other}' (expected {ARCH_CSMPO_19_7_1} or {ARCH_CSMPO_19_2_1})"
        ))),
    }
}

/// Build any of the three reference architectures from its label.
pub fn reference_model(arch: &str, seed: u64) -> Result<TnModel> {
    match arch {
        ARCH_SMPO_19_1 => Ok(reference_smpo(seed)),
        ARCH_CSMPO_19_7_1 | ARCH_CSMPO_19_2_1 => new_csmpo(arch, 2, 2, 3, seed),
        other => Err(TnError::Config(format!(
            "unknown architecture '{other}' (expected {ARCH_SMPO_19_1}, {ARCH_CSMPO_19_7_1} or {ARCH_CSMPO_19_2_1})"
        ))),
    }
}

/// Collapse a two-layer cascade into one equivalent layer with composite
/// bond indices. Second-layer weights are contracted into the matching
/// first-layer output sites; second-layer bonds ride across first-layer
/// non-output sites as identity couplings.
pub fn flatten_cascade(model: &TnModel) -> Result<SmpoLayer> {
    if model.layers.len() != 2 {
        return Err(TnError::Structure(
            "flatten_cascade requires a two-layer model".into(),
        ));
    }
    let l1 = &model.layers[0];
    let l2 = &model.layers[1];
    let m = l2.n_sites();
    let outputs = l1.output_sites();
    if m >= 2 && (outputs[0] != 0 || outputs[m - 1] != l1.n_sites() - 1) {
        return Err(TnError::Structure(
            "flatten requires first-layer outputs at both chain ends".into(),
        ));
    }

    // layer-2 bond crossing the gap after output ordinal k-1 (gap index k):
    // boundary gaps carry the trivial bond
    let gap_bond = |gap: usize| -> usize {
        if gap == 0 || gap == m {
            1
        } else {
            l2.bond()
        }
    };

    let composite_bond = if m >= 2 { l1.bond() * l2.bond() } else { l1.bond() };
    let mut sites = Vec::with_capacity(l1.n_sites());
    let mut output_sites = Vec::new();
    let mut ordinal = 0usize; // number of l1 outputs at index < i

    for i in 0..l1.n_sites() {
        let w1 = l1.site(i);
        if l1.is_output_site(i) {
            let w2 = l2.site(ordinal);
            // contract l1 phys_out against l2 phys_in:
            // w1[p][m][a][b] x w2[m][q][c][d] -> [p][a][b][q][c][d]
            let combined = contract(w1, &[1], w2, &[0])?;
            // -> (p, q, (a,c), (b,d)) with composite row-major bond pairs
            let permuted = combined.permute(&[0, 3, 1, 4, 2, 5])?;
            let s = permuted.shape().to_vec();
            let merged = permuted.reshape(&[s[0], s[1], s[2] * s[3], s[4] * s[5]])?;
            sites.push(merged);
            if l2.is_output_site(ordinal) {
                output_sites.push(i);
            }
            ordinal += 1;
        } else {
            let pass = gap_bond(ordinal);
            let [pi, _, l, r] = [
                w1.shape()[0],
                w1.shape()[1],
                w1.shape()[2],
                w1.shape()[3],
            ];
            let mut t = DenseTensor::zeros(&[pi, 1, l * pass, r * pass]);
            for p in 0..pi {
                for a in 0..l {
                    for b in 0..r {
                        let v = w1.get(&[p, 0, a, b]);
                        for s in 0..pass {
                            t.set(&[p, 0, a * pass + s, b * pass + s], v);
                        }
                    }
                }
            }
            sites.push(t);
        }
    }

    if output_sites.is_empty() {
        return Err(TnError::Structure(
            "flattened cascade has no output site".into(),
        ));
    }
    let flat = SmpoLayer {
        n_sites: l1.n_sites(),
        sites,
        output_sites,
        bond: composite_bond,
        phys_in: l1.phys_in(),
        phys_out: l2.phys_out(),
    };
    flat.validate_shapes()?;
    Ok(flat)
}

/// Equalize per-site weight scales within each layer without changing the
/// model's function: every site tensor is rescaled by (mean scale / own
/// scale), and the factors multiply to one. Balancing keeps the partial
/// products of the contraction sweeps inside a narrow dynamic range,
/// which matters once inference runs under a fixed-point format.
pub fn balance_site_gauge(model: &mut TnModel) {
    for layer in &mut model.layers {
        let n = layer.n_sites();
        if n < 2 {
            continue;
        }
        let scales: Vec<f64> = (0..n)
            .map(|s| {
                let t = layer.site(s);
                let rms: f64 =
                    (t.data().iter().map(|x| x * x).sum::<f64>() / t.len() as f64).sqrt();
                rms.max(1e-12)
            })
            .collect();
        let log_mean = scales.iter().map(|s| s.ln()).sum::<f64>() / n as f64;
        let mean = log_mean.exp();
        for (s, scale) in scales.iter().enumerate() {
            let factor = mean / scale;
            for w in layer.site_mut(s).data_mut() {
                *w *= factor;
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerHeader {
    n_sites: usize,
    output_sites: Vec<usize>,
    bond: usize,
    phys_in: usize,
    phys_out: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    version: u32,
    label: String,
    ordering: Vec<usize>,
    seed: u64,
    layers: Vec<LayerHeader>,
    /// Background-median calibration for the anomaly score, when trained.
    median_bkg: Option<f64>,
}

/// A serialized model: JSON header plus a little-endian f64 weight blob.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub model: TnModel,
    pub seed: u64,
    pub median_bkg: Option<f64>,
}

impl ModelFile {
    pub fn new(model: TnModel, seed: u64) -> Self {
        ModelFile {
            model,
            seed,
            median_bkg: None,
        }
    }

    pub fn with_calibration(mut self, median_bkg: f64) -> Self {
        self.median_bkg = Some(median_bkg);
        self
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = ModelHeader {
            version: 1,
            label: self.model.label.clone(),
            ordering: self.model.ordering.clone(),
            seed: self.seed,
            layers: self
                .model
                .layers
                .iter()
                .map(|l| LayerHeader {
                    n_sites: l.n_sites(),
                    output_sites: l.output_sites().to_vec(),
                    bond: l.bond(),
                    phys_in: l.phys_in(),
                    phys_out: l.phys_out(),
                })
                .collect(),
            median_bkg: self.median_bkg,
        };
        let header_json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&header_json);
        for layer in &self.model.layers {
            for site in layer.sites() {
                for &v in site.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != MODEL_MAGIC {
            return Err(TnError::Format("not a model file (bad magic)".into()));
        }
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if bytes.len() < 8 + header_len {
            return Err(TnError::Format("model file truncated in header".into()));
        }
        let header: ModelHeader = serde_json::from_slice(&bytes[8..8 + header_len])?;
        let mut offset = 8 + header_len;
        let mut layers = Vec::with_capacity(header.layers.len());
        for lh in &header.layers {
            let mut layer = SmpoLayer {
                n_sites: lh.n_sites,
                sites: Vec::with_capacity(lh.n_sites),
                output_sites: lh.output_sites.clone(),
                bond: lh.bond,
                phys_in: lh.phys_in,
                phys_out: lh.phys_out,
            };
            for i in 0..lh.n_sites {
                let shape = layer.site_shape(i);
                let count: usize = shape.iter().product();
                let need = count * 8;
                if bytes.len() < offset + need {
                    return Err(TnError::Format("model file truncated in weights".into()));
                }
                let mut data = Vec::with_capacity(count);
                for k in 0..count {
                    let at = offset + k * 8;
                    data.push(f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()));
                }
                offset += need;
                layer.sites.push(DenseTensor::from_data(&shape, data)?);
            }
            layer.validate_shapes()?;
            layers.push(layer);
        }
        if offset != bytes.len() {
            return Err(TnError::Format(format!(
                "model file has {} trailing bytes",
                bytes.len() - offset
            )));
        }
        if layers.is_empty() || layers.len() > 2 {
            return Err(TnError::Format("model must have one or two layers".into()));
        }
        validate_ordering(&header.ordering)?;
        let model = TnModel {
            layers,
            ordering: header.ordering,
            label: header.label,
        };
        Ok(ModelFile {
            model,
            seed: header.seed,
            median_bkg: header.median_bkg,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_parameter_counts() {
        assert_eq!(reference_smpo(1).param_count(), 936);
        assert_eq!(new_csmpo(ARCH_CSMPO_19_7_1, 2, 2, 3, 1).unwrap().param_count(), 456);
        assert_eq!(new_csmpo(ARCH_CSMPO_19_2_1, 2, 2, 3, 1).unwrap().param_count(), 264);
    }

    #[test]
    fn single_site_layer_has_nine_params() {
        let layer = new_smpo(1, &[0], 7, 3, 3, 0).unwrap();
        assert_eq!(layer.param_count(), 9);
        assert_eq!(layer.site(0).shape(), &[3, 3, 1, 1]);
    }

    #[test]
    fn hand_counted_three_site_layer() {
        // 3*1*1*2 + 3*3*2*2 + 3*1*2*1 = 48
        let layer = new_smpo(3, &[1], 2, 3, 3, 0).unwrap();
        assert_eq!(layer.param_count(), 48);
    }

    #[test]
    fn csmpo_19_7_1_layer_element_counts() {
        let model = new_csmpo(ARCH_CSMPO_19_7_1, 2, 2, 3, 5).unwrap();
        let l1 = &model.layers[0];
        // per-site element count (phys_out extent x bonds) summed over sites
        let element_sum: usize = (0..l1.n_sites())
            .map(|i| l1.phys_out_extent(i) * l1.left_bond(i) * l1.right_bond(i))
            .sum();
        assert_eq!(element_sum, 120);
        assert_eq!(l1.param_count(), 360);
    }

    #[test]
    fn csmpo_19_2_1_places_second_layer_output_at_site_zero() {
        let model = new_csmpo(ARCH_CSMPO_19_2_1, 2, 2, 3, 5).unwrap();
        assert_eq!(model.layers[0].output_sites(), &[0, 18]);
        assert_eq!(model.layers[1].output_sites(), &[0]);
        assert_eq!(model.layers[1].n_sites(), 2);
    }

    #[test]
    fn empty_output_set_rejected() {
        assert!(new_smpo(5, &[], 2, 3, 3, 0).is_err());
    }

    #[test]
    fn unknown_cascade_arch_rejected() {
        assert!(new_csmpo("19-5-1", 2, 2, 3, 0).is_err());
    }

    #[test]
    fn flatten_gives_composite_bond_and_shape_class() {
        let model = new_csmpo(ARCH_CSMPO_19_7_1, 2, 2, 3, 11).unwrap();
        let flat = flatten_cascade(&model).unwrap();
        assert_eq!(flat.bond(), 4);
        assert_eq!(flat.output_sites(), &[9]);
        assert_eq!(flat.param_count(), 936);
        assert!(flat.param_count() >= model.param_count());
        flat.validate_shapes().unwrap();
    }

    #[test]
    fn flatten_19_2_1() {
        let model = new_csmpo(ARCH_CSMPO_19_2_1, 2, 2, 3, 11).unwrap();
        let flat = flatten_cascade(&model).unwrap();
        assert_eq!(flat.bond(), 4);
        assert_eq!(flat.output_sites(), &[0]);
        flat.validate_shapes().unwrap();
    }

    #[test]
    fn model_roundtrip_is_bit_exact() {
        let model = new_csmpo(ARCH_CSMPO_19_7_1, 2, 2, 3, 99).unwrap();
        let file = ModelFile::new(model, 99).with_calibration(48.25);
        let bytes = file.to_bytes().unwrap();
        let back = ModelFile::from_bytes(&bytes).unwrap();
        assert_eq!(back.model, file.model);
        assert_eq!(back.seed, 99);
        assert_eq!(back.median_bkg, Some(48.25));
        let bytes2 = back.to_bytes().unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn model_file_rejects_garbage() {
        assert!(ModelFile::from_bytes(b"oops").is_err());
        let model = reference_smpo(3);
        let mut bytes = ModelFile::new(model, 3).to_bytes().unwrap();
        bytes.truncate(bytes.len() - 5);
        assert!(ModelFile::from_bytes(&bytes).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// Shape audit: random architectures obey the corner conventions.
        #[test]
        fn shape_audit(
            n in 1usize..10,
            bond in 1usize..5,
            phys_in in 1usize..4,
            phys_out in 1usize..4,
            seed in 0u64..1 << 20,
            raw_outputs in prop::collection::vec(0usize..10, 1..4),
        ) {
            let outputs: Vec<usize> = raw_outputs.iter().map(|&o| o % n).collect();
            let mut dedup = outputs.clone();
            dedup.sort_unstable();
            dedup.dedup();
            let layer = new_smpo(n, &dedup, bond, phys_in, phys_out, seed).unwrap();
            layer.validate_shapes().unwrap();
            for i in 0..n {
                let s = layer.site(i).shape();
                prop_assert_eq!(s[0], phys_in);
                prop_assert_eq!(s[1], if dedup.contains(&i) { phys_out } else { 1 });
                prop_assert_eq!(s[2], if i == 0 { 1 } else { bond });
                prop_assert_eq!(s[3], if i == n - 1 { 1 } else { bond });
            }
        }
    }
}
