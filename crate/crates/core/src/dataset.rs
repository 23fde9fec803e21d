//! Dataset ingestion (CSV and raw binary), deterministic synthetic event
//! generation, and split handling.
//!
//! File contract: 57 feature columns per event in canonical slot order
//! (MET, e1-e4, mu1-mu4, j1-j10, each as pt, eta, phi), stored at float32
//! precision, plus an optional class label. The raw binary layout is the
//! magic "TN19", a little-endian u32 event count, then per event 57
//! little-endian f32 features followed by one label byte (0 = background,
//! k = "signal-k").

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::embedding::{EventRecord, Particle, N_FEATURES, N_SITES};
use crate::error::{Result, TnError};

const RAWBIN_MAGIC: &[u8; 4] = b"TN19";

/// A labeled (or unlabeled) collection of events.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub events: Vec<EventRecord>,
    pub labels: Option<Vec<String>>,
}

impl Dataset {
    pub const BACKGROUND: &'static str = "background";

    pub fn unlabeled(events: Vec<EventRecord>) -> Self {
        Dataset {
            events,
            labels: None,
        }
    }

    pub fn labeled(events: Vec<EventRecord>, labels: Vec<String>) -> Result<Self> {
        if events.len() != labels.len() {
            return Err(TnError::Config(format!(
                "{} labels for {} events",
                labels.len(),
                events.len()
            )));
        }
        Ok(Dataset {
            events,
            labels: Some(labels),
        })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn label_of(&self, i: usize) -> &str {
        match &self.labels {
            Some(l) => &l[i],
            None => Self::BACKGROUND,
        }
    }

    /// Events labeled as background (everything, when unlabeled).
    pub fn background_events(&self) -> Vec<EventRecord> {
        (0..self.len())
            .filter(|&i| self.label_of(i) == Self::BACKGROUND)
            .map(|i| self.events[i].clone())
            .collect()
    }

    /// Sorted unique non-background labels.
    pub fn signal_labels(&self) -> Vec<String> {
        let mut out: Vec<String> = match &self.labels {
            Some(labels) => labels
                .iter()
                .filter(|l| l.as_str() != Self::BACKGROUND)
                .cloned()
                .collect(),
            None => vec![],
        };
        out.sort();
        out.dedup();
        out
    }

    /// Deterministic shuffled split into (train, valid, test) by fraction.
    /// When the fractions sum to one, the test part takes the remainder so
    /// no event is dropped.
    pub fn split(&self, fractions: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
        let (a, b, c) = fractions;
        if a < 0.0 || b < 0.0 || c < 0.0 || a + b + c > 1.0 + 1e-9 {
            return Err(TnError::Config(
                "split fractions must be nonnegative and sum to at most 1".into(),
            ));
        }
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let n_train = (a * n as f64).floor() as usize;
        let n_valid = (b * n as f64).floor() as usize;
        let n_test = if (a + b + c - 1.0).abs() < 1e-9 {
            n - n_train - n_valid
        } else {
            ((c * n as f64).floor() as usize).min(n - n_train - n_valid)
        };
        let pick = |idx: &[usize]| -> Dataset {
            let events = idx.iter().map(|&i| self.events[i].clone()).collect();
            let labels = self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i].clone()).collect());
            Dataset { events, labels }
        };
        let train = pick(&order[..n_train]);
        let valid = pick(&order[n_train..n_train + n_valid]);
        let test = pick(&order[n_train + n_valid..n_train + n_valid + n_test]);
        Ok((train, valid, test))
    }
}

/// File format of a dataset on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    RawBin,
}

impl FileFormat {
    pub fn infer(path: &Path) -> FileFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => FileFormat::Csv,
            _ => FileFormat::RawBin,
        }
    }
}

fn canonical_header() -> String {
    let mut cols = Vec::with_capacity(N_FEATURES);
    let names: Vec<String> = std::iter::once("met".to_string())
        .chain((1..=4).map(|i| format!("e{i}")))
        .chain((1..=4).map(|i| format!("mu{i}")))
        .chain((1..=10).map(|i| format!("j{i}")))
        .collect();
    for n in names {
        cols.push(format!("{n}_pt"));
        cols.push(format!("{n}_eta"));
        cols.push(format!("{n}_phi"));
    }
    cols.join(",")
}

/// Round a feature to float32 storage precision.
fn to_f32_precision(x: f64) -> f64 {
    x as f32 as f64
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&canonical_header());
    if dataset.labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for (i, event) in dataset.events.iter().enumerate() {
        let feats = event.to_features();
        let row: Vec<String> = feats.iter().map(|&x| format!("{}", x as f32)).collect();
        out.push_str(&row.join(","));
        if dataset.labels.is_some() {
            out.push(',');
            out.push_str(dataset.label_of(i));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| TnError::Format("empty CSV file".into()))?;
    let n_cols = header.split(',').count();
    let has_label = match n_cols {
        n if n == N_FEATURES => false,
        n if n == N_FEATURES + 1 => true,
        n => {
            return Err(TnError::Parse {
                line: 1,
                context: format!("expected {} or {} columns, found {n}", N_FEATURES, N_FEATURES + 1),
            })
        }
    };
    let mut events = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expect = if has_label { N_FEATURES + 1 } else { N_FEATURES };
        if fields.len() != expect {
            return Err(TnError::Parse {
                line: line_no,
                context: format!("expected {expect} fields, found {}", fields.len()),
            });
        }
        let mut feats = Vec::with_capacity(N_FEATURES);
        for (col, field) in fields[..N_FEATURES].iter().enumerate() {
            let v: f32 = field.trim().parse().map_err(|_| TnError::Parse {
                line: line_no,
                context: format!("column {col}: '{field}' is not a number"),
            })?;
            feats.push(v as f64);
        }
        let event = EventRecord::from_features(&feats).map_err(|e| TnError::Parse {
            line: line_no,
            context: e.to_string(),
        })?;
        events.push(event);
        if has_label {
            labels.push(fields[N_FEATURES].trim().to_string());
        }
    }
    if has_label {
        Dataset::labeled(events, labels)
    } else {
        Ok(Dataset::unlabeled(events))
    }
}

/// Stable label byte for raw binary storage.
fn label_to_byte(label: &str, signal_labels: &[String]) -> Result<u8> {
    if label == Dataset::BACKGROUND {
        return Ok(0);
    }
    let idx = signal_labels
        .iter()
        .position(|l| l == label)
        .expect("label present in signal set");
    if idx >= 255 {
        return Err(TnError::Format("too many signal classes for rawbin".into()));
    }
    Ok(idx as u8 + 1)
}

fn byte_to_label(byte: u8) -> String {
    if byte == 0 {
        Dataset::BACKGROUND.to_string()
    } else {
        format!("signal-{byte}")
    }
}

pub fn save_rawbin(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let signal_labels = dataset.signal_labels();
    let mut out = Vec::with_capacity(8 + dataset.len() * (N_FEATURES * 4 + 1));
    out.extend_from_slice(RAWBIN_MAGIC);
    out.extend_from_slice(&(dataset.len() as u32).to_le_bytes());
    for (i, event) in dataset.events.iter().enumerate() {
        for &x in &event.to_features() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
        out.push(label_to_byte(dataset.label_of(i), &signal_labels)?);
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

pub fn load_rawbin(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..4] != RAWBIN_MAGIC {
        return Err(TnError::Format(
            "not a raw event file (expected TN19 magic)".into(),
        ));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let stride = N_FEATURES * 4 + 1;
    if bytes.len() != 8 + count * stride {
        return Err(TnError::Format(format!(
            "raw event file length {} does not match {count} events",
            bytes.len()
        )));
    }
    let mut events = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for k in 0..count {
        let base = 8 + k * stride;
        let mut feats = Vec::with_capacity(N_FEATURES);
        for j in 0..N_FEATURES {
            let at = base + j * 4;
            feats.push(f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as f64);
        }
        let event = EventRecord::from_features(&feats).map_err(|e| TnError::Parse {
            line: k + 1,
            context: format!("event {k}: {e}"),
        })?;
        events.push(event);
        labels.push(byte_to_label(bytes[base + N_FEATURES * 4]));
    }
    Dataset::labeled(events, labels)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>, format: FileFormat) -> Result<()> {
    match format {
        FileFormat::Csv => save_csv(dataset, path),
        FileFormat::RawBin => save_rawbin(dataset, path),
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: FileFormat) -> Result<Dataset> {
    match format {
        FileFormat::Csv => load_csv(path),
        FileFormat::RawBin => load_rawbin(path),
    }
}

/// Synthetic benchmark configuration. The background mimics an inclusive
/// multijet sample pre-filtered to contain at least one energetic lepton;
/// the anomaly class carries several hard leptons and little jet activity.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_background: usize,
    pub n_anomaly: usize,
    /// Filter analogue: minimum pt of the guaranteed lepton, GeV.
    pub lepton_min_pt: f64,
    pub bkg_met_mean: f64,
    pub bkg_lepton_pt_mean: f64,
    pub bkg_extra_lepton_prob: f64,
    pub bkg_extra_jet_mean: f64,
    pub bkg_jet_pt_mean: f64,
    pub sig_lepton_count: usize,
    pub sig_lepton_pt_mean: f64,
    pub sig_jet_mean: f64,
    /// Exponential pt draws are truncated at this multiple of their mean,
    /// mimicking the steeply falling spectra of a filtered trigger sample
    /// and keeping event energies inside the fixed-point dynamic range.
    pub tail_cap: f64,
    pub anomaly_label: String,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_background: 10_000,
            n_anomaly: 1_000,
            lepton_min_pt: 23.0,
            bkg_met_mean: 55.0,
            bkg_lepton_pt_mean: 45.0,
            bkg_extra_lepton_prob: 0.12,
            bkg_extra_jet_mean: 2.0,
            bkg_jet_pt_mean: 110.0,
            sig_lepton_count: 4,
            sig_lepton_pt_mean: 260.0,
            sig_jet_mean: 0.8,
            tail_cap: 3.0,
            anomaly_label: "signal-1".to_string(),
        }
    }
}

struct Synth<'a> {
    cfg: &'a SyntheticConfig,
    rng: ChaCha8Rng,
}

impl<'a> Synth<'a> {
    fn phi(&mut self) -> f64 {
        to_f32_precision(self.rng.gen_range(-PI..PI))
    }

    fn eta(&mut self, sigma: f64, limit: f64) -> f64 {
        let normal = Normal::new(0.0, sigma).expect("valid sigma");
        to_f32_precision(normal.sample(&mut self.rng).clamp(-limit, limit))
    }

    fn exp(&mut self, mean: f64) -> f64 {
        let d = Exp::new(1.0 / mean).expect("positive mean");
        d.sample(&mut self.rng).min(self.cfg.tail_cap * mean)
    }

    fn poisson(&mut self, mean: f64) -> usize {
        if mean <= 0.0 {
            return 0;
        }
        let d = Poisson::new(mean).expect("positive mean");
        d.sample(&mut self.rng) as usize
    }

    fn lepton(&mut self, pt: f64) -> Particle {
        Particle::new(
            to_f32_precision(pt),
            self.eta(1.2, 2.5),
            self.phi(),
        )
    }

    fn jet(&mut self, pt: f64) -> Particle {
        Particle::new(
            to_f32_precision(pt),
            self.eta(2.0, 4.7),
            self.phi(),
        )
    }

    fn background_event(&mut self) -> EventRecord {
        let cfg = self.cfg;
        let mut electrons: Vec<Particle> = Vec::new();
        let mut muons: Vec<Particle> = Vec::new();

        // the guaranteed energetic lepton
        let hard_pt = cfg.lepton_min_pt + self.exp(cfg.bkg_lepton_pt_mean);
        let hard = self.lepton(hard_pt);
        if self.rng.gen_bool(0.5) {
            electrons.push(hard);
        } else {
            muons.push(hard);
        }
        // soft extras
        for _ in 0..3 {
            if self.rng.gen_bool(cfg.bkg_extra_lepton_prob) {
                let pt = 5.0 + self.exp(cfg.bkg_lepton_pt_mean * 0.4);
                let p = self.lepton(pt);
                if self.rng.gen_bool(0.5) {
                    electrons.push(p);
                } else {
                    muons.push(p);
                }
            }
        }

        let n_jets = (2 + self.poisson(cfg.bkg_extra_jet_mean)).min(10);
        let mut jets: Vec<Particle> = (0..n_jets)
            .map(|_| {
                let pt = 30.0 + self.exp(cfg.bkg_jet_pt_mean);
                self.jet(pt)
            })
            .collect();

        let met = Particle::new(to_f32_precision(self.exp(cfg.bkg_met_mean)), 0.0, self.phi());
        sort_desc(&mut electrons);
        sort_desc(&mut muons);
        sort_desc(&mut jets);
        assemble(met, &electrons, &muons, &jets)
    }

    fn anomaly_event(&mut self) -> EventRecord {
        let cfg = self.cfg;
        let mut electrons: Vec<Particle> = Vec::new();
        let mut muons: Vec<Particle> = Vec::new();
        for k in 0..cfg.sig_lepton_count.min(8) {
            let pt = cfg.lepton_min_pt + cfg.sig_lepton_pt_mean * self.rng.gen_range(0.55..1.45);
            let p = self.lepton(pt);
            if k % 2 == 0 {
                electrons.push(p);
            } else {
                muons.push(p);
            }
        }
        let n_jets = self.poisson(cfg.sig_jet_mean).min(10);
        let mut jets: Vec<Particle> = (0..n_jets)
            .map(|_| {
                let pt = 30.0 + self.exp(60.0);
                self.jet(pt)
            })
            .collect();
        let met = Particle::new(to_f32_precision(self.exp(40.0)), 0.0, self.phi());
        sort_desc(&mut electrons);
        sort_desc(&mut muons);
        sort_desc(&mut jets);
        assemble(met, &electrons, &muons, &jets)
    }
}

fn sort_desc(particles: &mut [Particle]) {
    particles.sort_by(|a, b| b.pt.partial_cmp(&a.pt).unwrap());
}

fn assemble(met: Particle, electrons: &[Particle], muons: &[Particle], jets: &[Particle]) -> EventRecord {
    let mut slots = [Particle::default(); N_SITES];
    slots[0] = met;
    for (i, p) in electrons.iter().take(4).enumerate() {
        slots[1 + i] = *p;
    }
    for (i, p) in muons.iter().take(4).enumerate() {
        slots[5 + i] = *p;
    }
    for (i, p) in jets.iter().take(10).enumerate() {
        slots[9 + i] = *p;
    }
    EventRecord::new(slots).expect("generated kinematics are in range")
}

/// Deterministic synthetic dataset: background events first, anomalies
/// after, all features at float32 precision.
pub fn generate_synthetic(cfg: &SyntheticConfig, seed: u64) -> Dataset {
    let mut synth = Synth {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut events = Vec::with_capacity(cfg.n_background + cfg.n_anomaly);
    let mut labels = Vec::with_capacity(cfg.n_background + cfg.n_anomaly);
    for _ in 0..cfg.n_background {
        events.push(synth.background_event());
        labels.push(Dataset::BACKGROUND.to_string());
    }
    for _ in 0..cfg.n_anomaly {
        events.push(synth.anomaly_event());
        labels.push(cfg.anomaly_label.clone());
    }
    Dataset::labeled(events, labels).expect("aligned labels")
}
