//! Bracketing the survival thresholds by bisection, and the three-way regime
//! classification on trees.

use serde::{Deserialize, Serialize};

use super::{recurrence_params, EstimateCI, Experiment, Initial, MIN_REPLICATES};
use crate::contact_process::{init_single, SimParams, SimResult, Strain};
use crate::error::{Error, Result};
use crate::topology::Topology;

/// Alive/dead classification of a survival-type estimate.
///
/// A probe is alive once the Wilson lower bound exceeds `alive_lower` and dead
/// once the upper bound drops below `dead_upper`. Otherwise the ensemble is
/// doubled (reusing the same replicate streams) until `max_replicates`, after
/// which the point estimate decides against the midpoint of the two
/// thresholds and the probe is flagged low-confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub alive_lower: f64,
    pub dead_upper: f64,
    pub replicates: usize,
    pub max_replicates: usize,
}

impl Default for DecisionRule {
    fn default() -> Self {
        DecisionRule {
            alive_lower: 0.05,
            dead_upper: 0.02,
            replicates: 400,
            max_replicates: 3200,
        }
    }
}

impl DecisionRule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.dead_upper && self.dead_upper < self.alive_lower && self.alive_lower < 1.0) {
            return Err(Error::param(
                "decision_rule",
                "need 0 < dead_upper < alive_lower < 1",
            ));
        }
        if self.replicates < MIN_REPLICATES || self.max_replicates < self.replicates {
            return Err(Error::param(
                "decision_rule",
                format!("need {MIN_REPLICATES} <= replicates <= max_replicates"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Alive,
    Dead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub lambda: f64,
    pub estimate: EstimateCI,
    pub decision: Decision,
    pub low_confidence: bool,
}

/// Applies `rule` to the replicate outcomes produced by `outcomes(start,
/// end)`, each `(success, boundary_contact)`.
pub fn survival_decision(
    rule: &DecisionRule,
    lambda: f64,
    mut outcomes: impl FnMut(usize, usize) -> Result<Vec<(bool, bool)>>,
) -> Result<Probe> {
    rule.validate()?;
    let mut flags = outcomes(0, rule.replicates)?;
    loop {
        let hits = flags.iter().filter(|f| f.0).count();
        let boundary = flags.iter().filter(|f| f.1).count();
        let estimate = EstimateCI::wilson(hits, flags.len())?.with_boundary_contacts(boundary);
        let confident = if estimate.lower > rule.alive_lower {
            Some(Decision::Alive)
        } else if estimate.upper < rule.dead_upper {
            Some(Decision::Dead)
        } else {
            None
        };
        if let Some(decision) = confident {
            return Ok(Probe {
                lambda,
                estimate,
                decision,
                low_confidence: false,
            });
        }
        let n = flags.len();
        if n >= rule.max_replicates {
            let midpoint = 0.5 * (rule.alive_lower + rule.dead_upper);
            let decision = if estimate.point > midpoint { Decision::Alive } else { Decision::Dead };
            return Ok(Probe {
                lambda,
                estimate,
                decision,
                low_confidence: true,
            });
        }
        flags.extend(outcomes(n, (2 * n).min(rule.max_replicates))?);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    /// Global survival threshold.
    LambdaC,
    /// Local (origin recurrence) threshold.
    LambdaCc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSearch {
    pub bracket: (f64, f64),
    pub tolerance: f64,
    pub rule: DecisionRule,
    pub t_max: f64,
    pub window_fraction: f64,
    pub master_seed: u64,
    /// Passed on to every probe run; see [`SimParams::population_cap`].
    #[serde(default)]
    pub population_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalEstimate {
    pub kind: CriticalKind,
    pub lo: f64,
    pub hi: f64,
    /// Every probe in evaluation order, the two initial endpoints first.
    pub trace: Vec<Probe>,
}

impl CriticalEstimate {
    pub fn contains(&self, lambda: f64) -> bool {
        self.lo <= lambda && lambda <= self.hi
    }

    pub fn overlaps(&self, other: &CriticalEstimate) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

fn probe(topology: &Topology, kind: CriticalKind, search: &CriticalSearch, lambda: f64) -> Result<Probe> {
    let init = Initial::from(init_single(topology, Strain::One, topology.origin())?);
    let base = SimParams {
        population_cap: search.population_cap,
        ..SimParams::new(lambda, 0.0, search.t_max)
    };
    let params = match kind {
        CriticalKind::LambdaC => base,
        CriticalKind::LambdaCc => recurrence_params(&base, topology.origin(), search.window_fraction)?,
    };
    let exp = Experiment {
        topology,
        init: &init,
        params: &params,
    };
    let success = move |r: &SimResult| match kind {
        CriticalKind::LambdaC => r.survived(),
        CriticalKind::LambdaCc => r.window_hits[0],
    };
    survival_decision(&search.rule, lambda, |a, b| {
        exp.replicates(search.master_seed, a, b, |r| (success(r), r.boundary_contact))
    })
}

fn bisect(topology: &Topology, kind: CriticalKind, search: &CriticalSearch) -> Result<CriticalEstimate> {
    let (mut lo, mut hi) = search.bracket;
    if !(0.0 <= lo && lo < hi && hi.is_finite()) {
        return Err(Error::param("bracket", format!("need 0 <= lo < hi, got ({lo}, {hi})")));
    }
    if search.tolerance.is_nan() || search.tolerance <= 0.0 {
        return Err(Error::param("tolerance", "must be positive"));
    }
    let low = probe(topology, kind, search, lo)?;
    let high = probe(topology, kind, search, hi)?;
    if low.decision != Decision::Dead || high.decision != Decision::Alive {
        return Err(Error::NonSeparatingBracket {
            lo,
            hi,
            detail: format!(
                "lower end classified {:?} (p={:.4}), upper end {:?} (p={:.4})",
                low.decision, low.estimate.point, high.decision, high.estimate.point
            ),
        });
    }
    let mut trace = vec![low, high];
    while hi - lo > search.tolerance {
        let mid = 0.5 * (lo + hi);
        let p = probe(topology, kind, search, mid)?;
        match p.decision {
            Decision::Alive => hi = mid,
            Decision::Dead => lo = mid,
        }
        trace.push(p);
    }
    Ok(CriticalEstimate { kind, lo, hi, trace })
}

/// Brackets the global survival threshold for a single seed at the origin.
pub fn estimate_lambda_c(topology: &Topology, search: &CriticalSearch) -> Result<CriticalEstimate> {
    bisect(topology, CriticalKind::LambdaC, search)
}

/// Brackets the threshold above which the origin keeps being reinfected.
/// Meant for trees; on a torus it brackets the same point as
/// [`estimate_lambda_c`].
pub fn estimate_lambda_cc(topology: &Topology, search: &CriticalSearch) -> Result<CriticalEstimate> {
    bisect(topology, CriticalKind::LambdaCc, search)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Subcritical,
    WeakSurvival,
    StrongSurvival,
    Inconclusive,
}

pub const SUBCRITICAL_SURVIVAL_UPPER: f64 = 0.02;
pub const STRONG_RECURRENCE_LOWER: f64 = 0.10;
pub const WEAK_SURVIVAL_LOWER: f64 = 0.05;
pub const WEAK_RECURRENCE_UPPER: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeVerdict {
    pub lambda: f64,
    pub regime: Regime,
    pub survival: EstimateCI,
    pub recurrence: EstimateCI,
}

impl RegimeVerdict {
    pub fn from_estimates(lambda: f64, survival: EstimateCI, recurrence: EstimateCI) -> Self {
        let regime = if survival.upper < SUBCRITICAL_SURVIVAL_UPPER {
            Regime::Subcritical
        } else if recurrence.lower > STRONG_RECURRENCE_LOWER {
            Regime::StrongSurvival
        } else if survival.lower > WEAK_SURVIVAL_LOWER && recurrence.upper < WEAK_RECURRENCE_UPPER {
            Regime::WeakSurvival
        } else {
            Regime::Inconclusive
        };
        RegimeVerdict {
            lambda,
            regime,
            survival,
            recurrence,
        }
    }
}

/// Classifies `lambda` on a tree from one ensemble started by a single
/// infection at the root; rates other than `lambda1` come from `params`.
pub fn classify_regime(
    topology: &Topology,
    lambda: f64,
    params: &SimParams,
    window_fraction: f64,
    replicates: usize,
    master_seed: u64,
) -> Result<RegimeVerdict> {
    if !topology.is_tree() {
        return Err(Error::InvalidTopology("regime classification needs a tree".into()));
    }
    if replicates < MIN_REPLICATES {
        return Err(Error::param("replicates", format!("need at least {MIN_REPLICATES}")));
    }
    let init = Initial::from(init_single(topology, Strain::One, topology.origin())?);
    let base = SimParams {
        lambda1: lambda,
        lambda2: 0.0,
        ..params.clone()
    };
    let p = recurrence_params(&base, topology.origin(), window_fraction)?;
    let exp = Experiment {
        topology,
        init: &init,
        params: &p,
    };
    let runs = exp.replicates(master_seed, 0, replicates, |r| {
        (r.survived(), r.window_hits[0], r.boundary_contact)
    })?;
    let boundary = runs.iter().filter(|r| r.2).count();
    let survived = runs.iter().filter(|r| r.0).count();
    let recurred = runs.iter().filter(|r| r.1).count();
    Ok(RegimeVerdict::from_estimates(
        lambda,
        EstimateCI::wilson(survived, replicates)?.with_boundary_contacts(boundary),
        EstimateCI::wilson(recurred, replicates)?.with_boundary_contacts(boundary),
    ))
}
