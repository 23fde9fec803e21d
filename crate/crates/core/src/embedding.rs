//! Event embedding: per-particle feature scaling, product-state
//! normalization, mutual-information site statistics and the spectral
//! site ordering used to lay out the input chain.

use std::f64::consts::PI;

use crate::error::{Result, TnError};
use crate::linalg::{symmetric_eigen, SymMatrix};

/// Number of reconstructed objects per event (1 MET + 4 e + 4 mu + 10 jets).
pub const N_SITES: usize = 19;
/// Features per object: (pt, eta, phi).
pub const SITE_DIM: usize = 3;
/// Flat feature count per event.
pub const N_FEATURES: usize = N_SITES * SITE_DIM;

/// Tolerance used when validating phi against [-pi, pi]; covers float32
/// storage of the boundary values.
const PHI_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParticleClass {
    Met,
    Electron,
    Muon,
    Jet,
}

impl ParticleClass {
    /// Reference transverse momentum used by the input scaling.
    pub fn pt_ref(self) -> f64 {
        match self {
            ParticleClass::Jet => 2500.0,
            ParticleClass::Muon => 800.0,
            ParticleClass::Electron | ParticleClass::Met => 1200.0,
        }
    }
}

/// Class of the object stored at canonical slot `site`.
pub fn canonical_class(site: usize) -> ParticleClass {
    match site {
        0 => ParticleClass::Met,
        1..=4 => ParticleClass::Electron,
        5..=8 => ParticleClass::Muon,
        9..=18 => ParticleClass::Jet,
        _ => panic!("site index {site} out of range"),
    }
}

/// One reconstructed object: (pt [GeV], eta, phi [rad]).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Particle {
    pub pt: f64,
    pub eta: f64,
    pub phi: f64,
}

impl Particle {
    pub fn new(pt: f64, eta: f64, phi: f64) -> Self {
        Particle { pt, eta, phi }
    }

    pub fn is_padded(&self) -> bool {
        self.pt == 0.0 && self.eta == 0.0 && self.phi == 0.0
    }
}

/// A single collider event in canonical slot order:
/// MET, e1-e4, mu1-mu4, j1-j10 (each group by descending pt).
/// Unreconstructed slots are exact zero triples.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    particles: [Particle; N_SITES],
}

impl EventRecord {
    pub fn new(particles: [Particle; N_SITES]) -> Result<Self> {
        for (i, p) in particles.iter().enumerate() {
            if !(p.pt.is_finite() && p.eta.is_finite() && p.phi.is_finite()) {
                return Err(TnError::Numeric(format!(
                    "non-finite kinematics at slot {i}"
                )));
            }
            if p.pt < 0.0 {
                return Err(TnError::Format(format!("negative pt at slot {i}: {}", p.pt)));
            }
            if p.eta < -5.0 || p.eta > 5.0 {
                return Err(TnError::Format(format!(
                    "eta out of range at slot {i}: {}",
                    p.eta
                )));
            }
            if p.phi < -PI - PHI_TOL || p.phi > PI + PHI_TOL {
                return Err(TnError::Format(format!(
                    "phi out of range at slot {i}: {}",
                    p.phi
                )));
            }
        }
        Ok(EventRecord { particles })
    }

    pub fn particles(&self) -> &[Particle; N_SITES] {
        &self.particles
    }

    pub fn from_features(features: &[f64]) -> Result<Self> {
        if features.len() != N_FEATURES {
            return Err(TnError::Format(format!(
                "expected {N_FEATURES} features, got {}",
                features.len()
            )));
        }
        let mut particles = [Particle::default(); N_SITES];
        for (i, particle) in particles.iter_mut().enumerate() {
            *particle = Particle::new(
                features[3 * i],
                features[3 * i + 1],
                features[3 * i + 2],
            );
        }
        EventRecord::new(particles)
    }

    pub fn to_features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(N_FEATURES);
        for p in &self.particles {
            out.push(p.pt);
            out.push(p.eta);
            out.push(p.phi);
        }
        out
    }
}

/// Scaled 3-component site value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteVector {
    pub values: [f64; SITE_DIM],
}

impl SiteVector {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum()
    }
}

/// Per-particle input scaling: pt is divided by the per-class reference,
/// eta and phi are shifted into [0, 1]. MET eta is forced to zero first.
/// A zero-padded slot therefore maps to (0, 0.5, 0.5), which keeps its
/// site norm away from zero.
pub fn preprocess(event: &EventRecord) -> [SiteVector; N_SITES] {
    let mut out = [SiteVector { values: [0.0; 3] }; N_SITES];
    for (i, p) in event.particles.iter().enumerate() {
        let class = canonical_class(i);
        let eta = if class == ParticleClass::Met { 0.0 } else { p.eta };
        let x1 = p.pt / class.pt_ref();
        let x2 = ((eta + 5.0) / 10.0).clamp(0.0, 1.0);
        let x3 = ((p.phi + PI) / (2.0 * PI)).clamp(0.0, 1.0);
        out[i] = SiteVector {
            values: [x1, x2, x3],
        };
    }
    out
}

/// Embedded product state: sites in model order, each divided by the
/// normalization factor `gamma` so the product-state norm is exactly one.
#[derive(Debug, Clone)]
pub struct EmbeddedMps {
    pub sites: Vec<SiteVector>,
    pub gamma: f64,
    pub ordering: Vec<usize>,
}

impl EmbeddedMps {
    /// Squared norm of the full product state: the product of per-site
    /// squared norms.
    pub fn product_state_norm_sq(&self) -> f64 {
        self.sites.iter().map(|s| s.norm_sq()).product()
    }
}

/// Check that `ordering` is a permutation of 0..N_SITES.
pub fn validate_ordering(ordering: &[usize]) -> Result<()> {
    if ordering.len() != N_SITES {
        return Err(TnError::Config(format!(
            "ordering must have {N_SITES} entries, got {}",
            ordering.len()
        )));
    }
    let mut seen = [false; N_SITES];
    for &s in ordering {
        if s >= N_SITES || seen[s] {
            return Err(TnError::Config(format!(
                "ordering is not a permutation of 0..{N_SITES}"
            )));
        }
        seen[s] = true;
    }
    Ok(())
}

pub fn identity_ordering() -> Vec<usize> {
    (0..N_SITES).collect()
}

/// Persist an ordering as a JSON array of 19 integers.
pub fn save_ordering(ordering: &[usize], path: impl AsRef<std::path::Path>) -> Result<()> {
    validate_ordering(ordering)?;
    std::fs::write(path, serde_json::to_string(ordering)?)?;
    Ok(())
}

pub fn load_ordering(path: impl AsRef<std::path::Path>) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    let ordering: Vec<usize> = serde_json::from_str(&text)?;
    validate_ordering(&ordering)?;
    Ok(ordering)
}

/// Embed an event: preprocess, reorder per `ordering` (entry k is the
/// canonical slot placed at chain position k), compute the geometric-mean
/// normalization factor and divide every site by it.
pub fn embed(event: &EventRecord, ordering: &[usize]) -> Result<EmbeddedMps> {
    validate_ordering(ordering)?;
    let raw = preprocess(event);
    let mut norm_product = 1.0f64;
    for site in &raw {
        let n = site.norm();
        if n <= 0.0 {
            return Err(TnError::DegenerateInput(
                "site vector has zero norm; cannot normalize".into(),
            ));
        }
        norm_product *= n;
    }
    let gamma = norm_product.powf(1.0 / N_SITES as f64);
    let sites = ordering
        .iter()
        .map(|&slot| {
            let v = raw[slot].values;
            SiteVector {
                values: [v[0] / gamma, v[1] / gamma, v[2] / gamma],
            }
        })
        .collect();
    Ok(EmbeddedMps {
        sites,
        gamma,
        ordering: ordering.to_vec(),
    })
}

/// Pairwise mutual-information matrix over canonical site indices.
#[derive(Debug, Clone)]
pub struct QmiMatrix {
    n: usize,
    values: Vec<f64>,
}

impl QmiMatrix {
    pub fn from_rows(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(TnError::dimension("QMI matrix", &[n, n], &[values.len()]));
        }
        Ok(QmiMatrix { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v;
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Von Neumann entropy of a density matrix after trace normalization.
/// Eigenvalues at or below zero contribute nothing (0 log 0 = 0).
fn entropy(rho: &SymMatrix, context: &str) -> Result<f64> {
    let trace = rho.trace();
    if !(trace.is_finite() && trace > 1e-300) {
        return Err(TnError::Numeric(format!(
            "density matrix trace {trace} is not positive ({context})"
        )));
    }
    let mut normalized = rho.clone();
    normalized.scale_in_place(1.0 / trace);
    let (eigs, _) = symmetric_eigen(&normalized)
        .map_err(|e| TnError::Numeric(format!("eigendecomposition failed ({context}): {e}")))?;
    let mut s = 0.0;
    for lambda in eigs {
        if lambda > 0.0 {
            s -= lambda * lambda.ln();
        }
    }
    Ok(s)
}

/// Compute the pairwise mutual-information matrix from raw preprocessed
/// site vectors (no gamma normalization). Single-site statistics are
/// 3x3 second-moment matrices; pair statistics are 9x9 moment matrices
/// of the site tensor products. The diagonal is left at zero.
pub fn compute_qmi(events: &[EventRecord]) -> Result<QmiMatrix> {
    if events.len() < 2 {
        return Err(TnError::Config(
            "mutual-information statistics need at least 2 events".into(),
        ));
    }
    let n_events = events.len() as f64;
    let mut rho_single = vec![SymMatrix::zeros(SITE_DIM); N_SITES];
    let n_pairs = N_SITES * (N_SITES - 1) / 2;
    let mut rho_pair = vec![SymMatrix::zeros(SITE_DIM * SITE_DIM); n_pairs];

    let pair_index = |i: usize, j: usize| -> usize {
        // upper triangle, i < j
        i * N_SITES - i * (i + 1) / 2 + (j - i - 1)
    };

    for event in events {
        let sites = preprocess(event);
        for i in 0..N_SITES {
            let x = &sites[i].values;
            for a in 0..SITE_DIM {
                for b in a..SITE_DIM {
                    rho_single[i].add(a, b, x[a] * x[b]);
                }
            }
        }
        let mut pair_vec = [0.0f64; SITE_DIM * SITE_DIM];
        for i in 0..N_SITES {
            for j in (i + 1)..N_SITES {
                let xi = &sites[i].values;
                let xj = &sites[j].values;
                for a in 0..SITE_DIM {
                    for b in 0..SITE_DIM {
                        pair_vec[a * SITE_DIM + b] = xi[a] * xj[b];
                    }
                }
                let m = &mut rho_pair[pair_index(i, j)];
                for u in 0..SITE_DIM * SITE_DIM {
                    for v in u..SITE_DIM * SITE_DIM {
                        m.add(u, v, pair_vec[u] * pair_vec[v]);
                    }
                }
            }
        }
    }

    // mirror the accumulated upper triangles and divide by N
    for m in rho_single.iter_mut().chain(rho_pair.iter_mut()) {
        let n = m.n();
        for u in 0..n {
            for v in (u + 1)..n {
                let x = m.get(u, v) / n_events;
                m.set(u, v, x);
                m.set(v, u, x);
            }
            let d = m.get(u, u) / n_events;
            m.set(u, u, d);
        }
    }

    let single_entropy: Vec<f64> = rho_single
        .iter()
        .enumerate()
        .map(|(i, m)| entropy(m, &format!("site {i}")))
        .collect::<Result<_>>()?;

    let mut qmi = QmiMatrix {
        n: N_SITES,
        values: vec![0.0; N_SITES * N_SITES],
    };
    for i in 0..N_SITES {
        for j in (i + 1)..N_SITES {
            let s_pair = entropy(&rho_pair[pair_index(i, j)], &format!("sites {i},{j}"))?;
            let value = single_entropy[i] + single_entropy[j] - s_pair;
            qmi.set(i, j, value);
            qmi.set(j, i, value);
        }
    }
    Ok(qmi)
}

/// Result of the spectral ordering. `degenerate` is set when the
/// correlation graph carried no usable structure (all couplings at zero)
/// and the canonical ordering was returned instead.
#[derive(Debug, Clone)]
pub struct SpectralOrdering {
    pub order: Vec<usize>,
    pub degenerate: bool,
}

/// Order sites along the chain from the mutual-information graph.
///
/// Builds the unnormalized graph Laplacian L = D - W from the off-diagonal
/// couplings, sorts sites by their Fiedler-vector component (stable
/// tie-break on canonical index), then rotates the sorted list so the site
/// with the largest coupling row-sum sits at the chain center. A graph with
/// uniform couplings carries no ordering information and yields the
/// canonical order deterministically.
pub fn spectral_order(qmi: &QmiMatrix) -> Result<SpectralOrdering> {
    let n = qmi.n;
    if n == 0 {
        return Ok(SpectralOrdering {
            order: vec![],
            degenerate: true,
        });
    }
    let identity: Vec<usize> = (0..n).collect();

    // clamp away the small negative values allowed by the numeric tolerance
    let weight = |i: usize, j: usize| -> f64 { qmi.get(i, j).max(0.0) };

    let mut w_max = 0.0f64;
    let mut w_min = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let w = weight(i, j);
                w_max = w_max.max(w);
                w_min = w_min.min(w);
            }
        }
    }
    if w_max <= 1e-12 {
        // disconnected graph: no coupling at all
        return Ok(SpectralOrdering {
            order: identity,
            degenerate: true,
        });
    }
    if (w_max - w_min) <= 1e-12 * w_max.max(1.0) {
        // fully symmetric graph: every ordering is equivalent
        return Ok(SpectralOrdering {
            order: identity,
            degenerate: false,
        });
    }

    let mut lap = SymMatrix::zeros(n);
    for i in 0..n {
        let mut degree = 0.0;
        for j in 0..n {
            if i != j {
                let w = weight(i, j);
                degree += w;
                lap.set(i, j, -w);
            }
        }
        lap.set(i, i, degree);
    }
    let (_, vectors) = symmetric_eigen(&lap)
        .map_err(|e| TnError::Numeric(format!("Laplacian eigendecomposition failed: {e}")))?;
    let mut fiedler = vectors[1].clone();
    // deterministic sign: first component of significant magnitude positive
    if let Some(&lead) = fiedler.iter().find(|x| x.abs() > 1e-12) {
        if lead < 0.0 {
            for x in &mut fiedler {
                *x = -*x;
            }
        }
    }

    let mut sorted: Vec<usize> = (0..n).collect();
    sorted.sort_by(|&i, &j| {
        fiedler[i]
            .partial_cmp(&fiedler[j])
            .expect("finite fiedler components")
            .then(i.cmp(&j))
    });

    // rotate so the most strongly coupled site lands at the chain center
    let row_sum = |i: usize| -> f64 { (0..n).filter(|&j| j != i).map(|j| weight(i, j)).sum() };
    let mut hub = 0usize;
    let mut hub_sum = f64::NEG_INFINITY;
    for i in 0..n {
        let s = row_sum(i);
        if s > hub_sum + 1e-15 {
            hub = i;
            hub_sum = s;
        }
    }
    let hub_pos = sorted.iter().position(|&s| s == hub).expect("hub in list");
    let center = n / 2;
    let shift = (center + n - hub_pos) % n;
    let order: Vec<usize> = (0..n).map(|k| sorted[(k + n - shift) % n]).collect();

    Ok(SpectralOrdering {
        order,
        degenerate: false,
    })
}
