//! Monte Carlo estimators over independent replicate ensembles, plus the
//! exact small-graph oracle used to validate the engine.
//!
//! Infinite-horizon events are replaced by finite-time proxies:
//! "survives forever" becomes "infected set nonempty at `t_max`", and
//! "origin infected infinitely often" becomes "origin infected at some moment
//! of the late window `[(1 - w) t_max, t_max]`".

mod critical;
mod oracle;
mod wilson;

use serde::{Deserialize, Serialize};

use crate::contact_process::{init_product, run, Configuration, SimParams, SimResult, Strain};
use crate::error::{Error, Result};
use crate::replicate::{replicate_seed, try_map_range};
use crate::topology::{SiteId, Topology};

pub use critical::{
    classify_regime, estimate_lambda_c, estimate_lambda_cc, survival_decision, CriticalEstimate, CriticalKind,
    CriticalSearch, Decision, DecisionRule, Probe, Regime, RegimeVerdict,
};
pub use oracle::{
    empirical_distribution, exact_small_graph_distribution, total_variation, ExactDistribution, Generator,
    ORACLE_MAX_SITES,
};
pub use wilson::{EstimateCI, Z95};

pub const MIN_REPLICATES: usize = 100;
/// Conditioning events must occur at least this often.
pub const MIN_CONDITIONING: usize = 100;
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.5;

/// Initial law of each replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Initial {
    /// Same configuration in every replicate.
    Fixed { config: Configuration },
    /// Fresh independent product configuration per replicate.
    Product { p1: f64, p2: f64 },
}

impl From<Configuration> for Initial {
    fn from(config: Configuration) -> Self {
        Initial::Fixed { config }
    }
}

/// Salt separating the initial-configuration stream from the dynamics stream.
const INIT_SALT: u64 = 0x5eed_1417_c0ff_ee00;

impl Initial {
    pub fn realize(&self, topology: &Topology, seed: u64) -> Result<Configuration> {
        match self {
            Initial::Fixed { config } => Ok(config.clone()),
            Initial::Product { p1, p2 } => init_product(topology, *p1, *p2, seed ^ INIT_SALT),
        }
    }

    /// Whether strain `s` can be present at time zero.
    pub fn may_contain(&self, s: Strain) -> bool {
        match self {
            Initial::Fixed { config } => config.count(s) > 0,
            Initial::Product { p1, p2 } => match s {
                Strain::One => *p1 > 0.0,
                Strain::Two => *p2 > 0.0,
            },
        }
    }

    pub fn relabeled(&self) -> Initial {
        match self {
            Initial::Fixed { config } => Initial::Fixed { config: config.relabeled() },
            Initial::Product { p1, p2 } => Initial::Product { p1: *p2, p2: *p1 },
        }
    }
}

/// A topology, initial law and dynamics: everything an ensemble needs.
#[derive(Debug, Clone)]
pub struct Experiment<'a> {
    pub topology: &'a Topology,
    pub init: &'a Initial,
    pub params: &'a SimParams,
}

impl Experiment<'_> {
    /// Runs replicates `start..end` under `master_seed`, reducing each result
    /// with `summarize`. Output order is replicate order.
    pub fn replicates<T, F>(&self, master_seed: u64, start: usize, end: usize, summarize: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&SimResult) -> T + Sync + Send,
    {
        self.params.validate()?;
        try_map_range(start as u64, end as u64, |i| {
            let seed = replicate_seed(master_seed, i);
            let init = self.init.realize(self.topology, seed)?;
            run(self.topology, &init, self.params, seed).map(|r| summarize(&r))
        })
    }
}

fn check_replicates(replicates: usize) -> Result<()> {
    if replicates < MIN_REPLICATES {
        return Err(Error::param(
            "replicates",
            format!("need at least {MIN_REPLICATES}, got {replicates}"),
        ));
    }
    Ok(())
}

fn proportion(flags: &[(bool, bool)]) -> Result<EstimateCI> {
    let hits = flags.iter().filter(|f| f.0).count();
    let boundary = flags.iter().filter(|f| f.1).count();
    Ok(EstimateCI::wilson(hits, flags.len())?.with_boundary_contacts(boundary))
}

/// Probability the infection is still present at `params.t_max`.
pub fn survival_probability(
    topology: &Topology,
    init: &Initial,
    params: &SimParams,
    replicates: usize,
    master_seed: u64,
) -> Result<EstimateCI> {
    check_replicates(replicates)?;
    let exp = Experiment { topology, init, params };
    let flags = exp.replicates(master_seed, 0, replicates, |r| (r.survived(), r.boundary_contact))?;
    proportion(&flags)
}

/// Observation set-up for recurrence at `site` over the late window.
pub(crate) fn recurrence_params(params: &SimParams, site: SiteId, window_fraction: f64) -> Result<SimParams> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::param(
            "window_fraction",
            format!("must lie in (0, 1], got {window_fraction}"),
        ));
    }
    let start = (1.0 - window_fraction) * params.t_max;
    Ok(SimParams {
        observe: vec![site],
        window: Some((start, params.t_max)),
        sample_times: vec![params.t_max],
        ..params.clone()
    })
}

/// Probability the origin is infected at some moment of the late window.
/// Defined on any topology; [`root_recurrence_probability`] is the tree
/// entry point.
pub fn origin_recurrence_probability(
    topology: &Topology,
    init: &Initial,
    params: &SimParams,
    replicates: usize,
    window_fraction: f64,
    master_seed: u64,
) -> Result<EstimateCI> {
    check_replicates(replicates)?;
    let p = recurrence_params(params, topology.origin(), window_fraction)?;
    let exp = Experiment { topology, init, params: &p };
    let flags = exp.replicates(master_seed, 0, replicates, |r| (r.window_hits[0], r.boundary_contact))?;
    proportion(&flags)
}

pub fn root_recurrence_probability(
    topology: &Topology,
    init: &Initial,
    params: &SimParams,
    replicates: usize,
    window_fraction: f64,
    master_seed: u64,
) -> Result<EstimateCI> {
    if !topology.is_tree() {
        return Err(Error::InvalidTopology("root recurrence is defined on trees".into()));
    }
    origin_recurrence_probability(topology, init, params, replicates, window_fraction, master_seed)
}

/// `P(state(x) = 1 and state(y) = 2)` at time `t`.
#[allow(clippy::too_many_arguments)]
pub fn pair_coexistence_probability(
    topology: &Topology,
    init: &Initial,
    params: &SimParams,
    x: SiteId,
    y: SiteId,
    t: f64,
    replicates: usize,
    master_seed: u64,
) -> Result<EstimateCI> {
    let mut curve = pair_coexistence_curve(topology, init, params, x, y, &[t], replicates, master_seed)?;
    Ok(curve.remove(0))
}

/// [`pair_coexistence_probability`] at each of `times`, all read off one
/// ensemble run to the last time.
#[allow(clippy::too_many_arguments)]
pub fn pair_coexistence_curve(
    topology: &Topology,
    init: &Initial,
    params: &SimParams,
    x: SiteId,
    y: SiteId,
    times: &[f64],
    replicates: usize,
    master_seed: u64,
) -> Result<Vec<EstimateCI>> {
    for s in [x, y] {
        if !topology.contains(s) {
            return Err(Error::UnknownSite(s));
        }
    }
    check_replicates(replicates)?;
    let Some(&t_end) = times.last() else {
        return Ok(Vec::new());
    };
    let p = SimParams {
        t_max: t_end,
        sample_times: times.to_vec(),
        observe: vec![x, y],
        window: None,
        ..params.clone()
    };
    let exp = Experiment { topology, init, params: &p };
    let runs = exp.replicates(master_seed, 0, replicates, |r| {
        let hits: Vec<bool> = r.samples.iter().map(|s| s.observed == [1, 2]).collect();
        let touched: Vec<bool> = r.samples.iter().map(|s| s.boundary_contact).collect();
        (hits, touched)
    })?;
    (0..times.len())
        .map(|i| {
            let flags: Vec<(bool, bool)> = runs.iter().map(|r| (r.0[i], r.1[i])).collect();
            proportion(&flags)
        })
        .collect()
}

/// Conditional occupancy of one site at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrowdOutPoint {
    pub time: f64,
    /// `P(state = 1 | strain 2 present at t_max)`.
    pub strain1: EstimateCI,
    /// `P(state = 2 | strain 2 present at t_max)`.
    pub strain2: EstimateCI,
}

pub const CROWD_OUT_CONDITION: &str = "strain 2 present at t_max";

/// Occupancy of `site` by each strain at every sample time, conditioned on
/// strain 2 still being present at `params.t_max`.
pub fn crowd_out_curve(
    topology: &Topology,
    init: &Initial,
    params: &SimParams,
    site: SiteId,
    sample_times: &[f64],
    replicates: usize,
    master_seed: u64,
) -> Result<Vec<CrowdOutPoint>> {
    if !topology.contains(site) {
        return Err(Error::UnknownSite(site));
    }
    check_replicates(replicates)?;
    let mut times = sample_times.to_vec();
    times.push(params.t_max);
    let p = SimParams {
        sample_times: times,
        observe: vec![site],
        window: None,
        ..params.clone()
    };
    let exp = Experiment { topology, init, params: &p };
    let runs = exp.replicates(master_seed, 0, replicates, |r| {
        let kept = r.samples.last().is_some_and(|s| s.count2 > 0);
        let states: Vec<u8> = r.samples[..sample_times.len()].iter().map(|s| s.observed[0]).collect();
        (kept, r.boundary_contact, states)
    })?;
    let kept: Vec<_> = runs.iter().filter(|r| r.0).collect();
    if kept.len() < MIN_CONDITIONING {
        return Err(Error::RareConditioning {
            observed: kept.len(),
            required: MIN_CONDITIONING,
        });
    }
    let boundary = kept.iter().filter(|r| r.1).count();
    sample_times
        .iter()
        .enumerate()
        .map(|(i, &time)| {
            let ones = kept.iter().filter(|r| r.2[i] == 1).count();
            let twos = kept.iter().filter(|r| r.2[i] == 2).count();
            Ok(CrowdOutPoint {
                time,
                strain1: EstimateCI::wilson(ones, kept.len())?
                    .conditioned_on(CROWD_OUT_CONDITION)
                    .with_boundary_contacts(boundary),
                strain2: EstimateCI::wilson(twos, kept.len())?
                    .conditioned_on(CROWD_OUT_CONDITION)
                    .with_boundary_contacts(boundary),
            })
        })
        .collect()
}

/// Probability that both strains are present at time `t`.
pub fn coexistence_probability(
    topology: &Topology,
    init: &Initial,
    params: &SimParams,
    t: f64,
    replicates: usize,
    master_seed: u64,
) -> Result<EstimateCI> {
    if !(init.may_contain(Strain::One) && init.may_contain(Strain::Two)) {
        return Err(Error::param("init", "coexistence needs both strains initially"));
    }
    check_replicates(replicates)?;
    let p = SimParams {
        t_max: t,
        sample_times: vec![t],
        window: None,
        ..params.clone()
    };
    let exp = Experiment { topology, init, params: &p };
    let flags = exp.replicates(master_seed, 0, replicates, |r| {
        let s = &r.samples[0];
        (s.count1 > 0 && s.count2 > 0, r.boundary_contact)
    })?;
    proportion(&flags)
}
