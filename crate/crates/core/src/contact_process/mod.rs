//! Exact simulation of the two-strain contact process.
//!
//! Each site is susceptible (0) or infected by strain 1 or 2. An infected
//! site recovers at rate `delta_i` and becomes susceptible again at once; a
//! susceptible site is infected by strain `i` at rate `lambda_i` times its
//! number of strain-`i` neighbors.

mod engine;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{SiteId, Topology};

pub use engine::{run, run_with_rng, Engine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Strain {
    One = 1,
    Two = 2,
}

impl Strain {
    pub fn other(self) -> Strain {
        match self {
            Strain::One => Strain::Two,
            Strain::Two => Strain::One,
        }
    }

    pub fn index(self) -> usize {
        self as usize - 1
    }
}

impl From<Strain> for u8 {
    fn from(s: Strain) -> u8 {
        s as u8
    }
}

impl TryFrom<u8> for Strain {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Strain::One),
            2 => Ok(Strain::Two),
            _ => Err(format!("strain tag must be 1 or 2, got {v}")),
        }
    }
}

/// Sparse configuration: infected sites and their strain. Absent sites are
/// susceptible.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    sites: BTreeMap<SiteId, Strain>,
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, site: SiteId) -> Option<Strain> {
        self.sites.get(&site).copied()
    }

    /// State code 0, 1 or 2.
    pub fn state(&self, site: SiteId) -> u8 {
        self.get(site).map_or(0, u8::from)
    }

    pub fn set(&mut self, site: SiteId, strain: Option<Strain>) {
        match strain {
            Some(s) => {
                self.sites.insert(site, s);
            }
            None => {
                self.sites.remove(&site);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn count(&self, strain: Strain) -> usize {
        self.sites.values().filter(|&&s| s == strain).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SiteId, Strain)> + '_ {
        self.sites.iter().map(|(&k, &v)| (k, v))
    }

    /// Same sites with strain labels 1 and 2 exchanged.
    pub fn relabeled(&self) -> Configuration {
        Configuration {
            sites: self.sites.iter().map(|(&k, &v)| (k, v.other())).collect(),
        }
    }

    pub fn validate(&self, topology: &Topology) -> Result<()> {
        match self.sites.keys().find(|&&s| !topology.contains(s)) {
            Some(&s) => Err(Error::UnknownSite(s)),
            None => Ok(()),
        }
    }
}

impl FromIterator<(SiteId, Strain)> for Configuration {
    fn from_iter<I: IntoIterator<Item = (SiteId, Strain)>>(iter: I) -> Self {
        Configuration {
            sites: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub t_max: f64,
    /// Observation times, sorted, within `[0, t_max]`.
    pub sample_times: Vec<f64>,
    /// Sites whose state is recorded at every sample time.
    #[serde(default)]
    pub observe: Vec<SiteId>,
    /// Interval over which each observed site is checked for being infected
    /// at any moment.
    #[serde(default)]
    pub window: Option<(f64, f64)>,
    /// Run the full rate-table audit every this many events.
    #[serde(default)]
    pub audit_every: Option<u64>,
    /// Stop once this many sites are infected at once. The run is then
    /// reported as saturated: it counts as surviving and every later
    /// observation repeats the state at saturation.
    #[serde(default)]
    pub population_cap: Option<usize>,
}

impl SimParams {
    /// Unit recovery rates and no sampling beyond the horizon.
    pub fn new(lambda1: f64, lambda2: f64, t_max: f64) -> Self {
        SimParams {
            lambda1,
            lambda2,
            delta1: 1.0,
            delta2: 1.0,
            t_max,
            sample_times: vec![t_max],
            observe: Vec::new(),
            window: None,
            audit_every: None,
            population_cap: None,
        }
    }

    pub fn with_samples(mut self, times: Vec<f64>) -> Self {
        self.sample_times = times;
        self
    }

    pub fn with_observed(mut self, sites: Vec<SiteId>) -> Self {
        self.observe = sites;
        self
    }

    pub fn with_window(mut self, start: f64, end: f64) -> Self {
        self.window = Some((start, end));
        self
    }

    pub fn with_population_cap(mut self, cap: usize) -> Self {
        self.population_cap = Some(cap);
        self
    }

    pub fn with_deltas(mut self, delta1: f64, delta2: f64) -> Self {
        self.delta1 = delta1;
        self.delta2 = delta2;
        self
    }

    pub fn lambda(&self, s: Strain) -> f64 {
        match s {
            Strain::One => self.lambda1,
            Strain::Two => self.lambda2,
        }
    }

    pub fn delta(&self, s: Strain) -> f64 {
        match s {
            Strain::One => self.delta1,
            Strain::Two => self.delta2,
        }
    }

    /// Strain roles exchanged: `(lambda1, delta1) <-> (lambda2, delta2)`.
    pub fn swapped(&self) -> SimParams {
        SimParams {
            lambda1: self.lambda2,
            lambda2: self.lambda1,
            delta1: self.delta2,
            delta2: self.delta1,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("delta1", self.delta1), ("delta2", self.delta2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::param("t_max", format!("must be finite and > 0, got {}", self.t_max)));
        }
        if self.sample_times.iter().any(|&t| !(0.0..=self.t_max).contains(&t)) {
            return Err(Error::param("sample_times", "every sample time must lie in [0, t_max]"));
        }
        if self.sample_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::param("sample_times", "must be sorted"));
        }
        if let Some((a, b)) = self.window {
            if !(0.0 <= a && a <= b && b <= self.t_max) {
                return Err(Error::param("window", format!("need 0 <= start <= end <= t_max, got ({a}, {b})")));
            }
        }
        if self.audit_every == Some(0) {
            return Err(Error::param("audit_every", "must be positive"));
        }
        if self.population_cap == Some(0) {
            return Err(Error::param("population_cap", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub time: f64,
    pub count1: usize,
    pub count2: usize,
    /// State (0, 1, 2) of each observed site, in `SimParams::observe` order.
    pub observed: Vec<u8>,
    /// Whether the infection has touched the truncation boundary by now.
    pub boundary_contact: bool,
}

impl SampleSummary {
    pub fn count(&self, s: Strain) -> usize {
        match s {
            Strain::One => self.count1,
            Strain::Two => self.count2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub samples: Vec<SampleSummary>,
    /// Configuration at `t_max`, or at absorption.
    pub final_config: Configuration,
    pub events: u64,
    /// Model time at which the run stopped.
    pub elapsed: f64,
    pub seed: u64,
    /// Time the configuration became empty, if it did.
    pub absorbed_at: Option<f64>,
    /// Time the population cap was reached, if it was.
    #[serde(default)]
    pub saturated_at: Option<f64>,
    pub boundary_contact: bool,
    /// Per observed site: infected at some moment inside the window.
    pub window_hits: Vec<bool>,
}

impl SimResult {
    pub fn survived(&self) -> bool {
        self.absorbed_at.is_none()
    }
}

/// `(n1, n2)`: neighbors of `site` infected by strain 1 and strain 2.
pub fn infected_neighbor_counts(topology: &Topology, config: &Configuration, site: SiteId) -> Result<(usize, usize)> {
    let mut n = (0, 0);
    for y in topology.neighbors(site)? {
        match config.get(y) {
            Some(Strain::One) => n.0 += 1,
            Some(Strain::Two) => n.1 += 1,
            None => {}
        }
    }
    Ok(n)
}

/// Transition rates `(to 0, to 1, to 2)` at `site`.
pub fn site_rates(
    topology: &Topology,
    config: &Configuration,
    site: SiteId,
    params: &SimParams,
) -> Result<(f64, f64, f64)> {
    Ok(match config.get(site) {
        Some(s) => (params.delta(s), 0.0, 0.0),
        None => {
            let (n1, n2) = infected_neighbor_counts(topology, config, site)?;
            (0.0, params.lambda1 * n1 as f64, params.lambda2 * n2 as f64)
        }
    })
}

pub fn init_single(topology: &Topology, strain: Strain, at: SiteId) -> Result<Configuration> {
    if !topology.contains(at) {
        return Err(Error::UnknownSite(at));
    }
    Ok([(at, strain)].into_iter().collect())
}

/// Strain 1 at `a`, strain 2 at `b`.
pub fn init_pair(topology: &Topology, a: SiteId, b: SiteId) -> Result<Configuration> {
    for s in [a, b] {
        if !topology.contains(s) {
            return Err(Error::UnknownSite(s));
        }
    }
    if a == b {
        return Err(Error::param("init", "the two seeds must be distinct sites"));
    }
    Ok([(a, Strain::One), (b, Strain::Two)].into_iter().collect())
}

/// Largest topology [`init_product`] will enumerate.
pub const PRODUCT_INIT_MAX_SITES: u128 = 1 << 24;

/// Independent product measure: each site is strain 1 with probability `p1`,
/// strain 2 with probability `p2`, otherwise susceptible.
pub fn init_product(topology: &Topology, p1: f64, p2: f64, seed: u64) -> Result<Configuration> {
    if !(p1 >= 0.0 && p2 >= 0.0) {
        return Err(Error::param("p1/p2", "probabilities must be >= 0"));
    }
    if p1 + p2 > 1.0 {
        return Err(Error::param("p1/p2", format!("p1 + p2 must be <= 1, got {}", p1 + p2)));
    }
    if topology.site_count() > PRODUCT_INIT_MAX_SITES {
        return Err(Error::InvalidTopology(format!(
            "{} sites is too many to enumerate for a product initial configuration",
            topology.site_count()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(topology
        .sites()
        .filter_map(|site| {
            let u: f64 = rng.random();
            if u < p1 {
                Some((site, Strain::One))
            } else if u < p1 + p2 {
                Some((site, Strain::Two))
            } else {
                None
            }
        })
        .collect())
}

/// Strain 1 at the root's first child, strain 2 at its second child.
pub fn init_split(topology: &Topology) -> Result<Configuration> {
    if !topology.is_tree() {
        return Err(Error::InvalidTopology("split initialization needs a tree".into()));
    }
    init_pair(topology, topology.tree_site(&[0])?, topology.tree_site(&[1])?)
}
