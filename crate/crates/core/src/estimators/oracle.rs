//! Exact transient law of the two-strain process on very small graphs.
//!
//! The generator over all `3^n` configurations is assembled from
//! [`site_rates`], and `p(t) = p(0) exp(tQ)` is evaluated by uniformization:
//! with `q` at least the largest exit rate, `P = I + Q / q` is stochastic and
//! `exp(tQ) = sum_k Poisson(k; qt) P^k`. Long horizons are split into
//! sub-intervals with `q * dt <= 32` so the Poisson weights never underflow.

use serde::Serialize;

use crate::contact_process::{site_rates, Configuration, SimParams, Strain};
use crate::error::{Error, Result};
use crate::topology::{SiteId, Topology};

pub const ORACLE_MAX_SITES: usize = 8;

/// Poisson tail mass allowed per unit of uniformized time.
const TAIL_PER_STEP: f64 = 1e-14;
const MAX_QT_PER_STEP: f64 = 32.0;

/// Sparse generator over configurations, indexed by base-3 state codes.
#[derive(Debug, Clone)]
pub struct Generator {
    sites: Vec<SiteId>,
    /// Off-diagonal transitions `(from, to, rate)`.
    transitions: Vec<(u32, u32, f64)>,
    exit: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactDistribution {
    /// Sites in the order of their base-3 digit (least significant first).
    pub sites: Vec<SiteId>,
    pub probabilities: Vec<f64>,
    /// Upper bound on the probability mass dropped by truncating the series.
    pub truncation_error: f64,
    pub time: f64,
}

impl ExactDistribution {
    pub fn state_index(&self, config: &Configuration) -> usize {
        encode(&self.sites, config)
    }

    pub fn probability(&self, config: &Configuration) -> f64 {
        self.probabilities[self.state_index(config)]
    }
}

fn encode(sites: &[SiteId], config: &Configuration) -> usize {
    sites
        .iter()
        .rev()
        .fold(0, |acc, &s| acc * 3 + config.state(s) as usize)
}

fn decode(sites: &[SiteId], mut code: usize) -> Configuration {
    let mut config = Configuration::new();
    for &s in sites {
        let digit = (code % 3) as u8;
        code /= 3;
        if digit != 0 {
            config.set(s, Some(Strain::try_from(digit).expect("digit is 1 or 2")));
        }
    }
    config
}

impl Generator {
    pub fn build(topology: &Topology, params: &SimParams) -> Result<Self> {
        let n = topology.site_count();
        if n > ORACLE_MAX_SITES as u128 {
            return Err(Error::OracleBudget {
                sites: n.min(usize::MAX as u128) as usize,
                max: ORACLE_MAX_SITES,
            });
        }
        let sites: Vec<SiteId> = topology.sites().collect();
        let states = 3usize.pow(sites.len() as u32);
        let mut transitions = Vec::new();
        let mut exit = vec![0.0; states];
        for (code, out_rate) in exit.iter_mut().enumerate() {
            let config = decode(&sites, code);
            for (i, &site) in sites.iter().enumerate() {
                let place = 3usize.pow(i as u32);
                let current = config.state(site) as usize;
                let (to0, to1, to2) = site_rates(topology, &config, site, params)?;
                for (target, rate) in [(0usize, to0), (1, to1), (2, to2)] {
                    if rate > 0.0 && target != current {
                        let next = code - current * place + target * place;
                        transitions.push((code as u32, next as u32, rate));
                        *out_rate += rate;
                    }
                }
            }
        }
        Ok(Generator {
            sites,
            transitions,
            exit,
        })
    }

    pub fn states(&self) -> usize {
        self.exit.len()
    }

    pub fn sites(&self) -> &[SiteId] {
        &self.sites
    }

    /// Distribution after time `t` starting from `p0`, and the truncation
    /// error bound.
    pub fn transient(&self, p0: &[f64], t: f64) -> Result<(Vec<f64>, f64)> {
        if p0.len() != self.states() {
            return Err(Error::param("p0", "length must equal the number of states"));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::param("t", format!("must be finite and >= 0, got {t}")));
        }
        let q = self.exit.iter().copied().fold(0.0, f64::max);
        if q == 0.0 || t == 0.0 {
            return Ok((p0.to_vec(), 0.0));
        }
        let steps = (q * t / MAX_QT_PER_STEP).ceil().max(1.0) as usize;
        let h = t / steps as f64;
        let mut p = p0.to_vec();
        let mut error = 0.0;
        for _ in 0..steps {
            let (next, tail) = self.uniformized_step(&p, q, h);
            p = next;
            error += tail;
        }
        Ok((p, error))
    }

    fn uniformized_step(&self, p0: &[f64], q: f64, h: f64) -> (Vec<f64>, f64) {
        let qh = q * h;
        let mut weight = (-qh).exp();
        let mut cumulative = weight;
        let mut term = p0.to_vec();
        let mut out: Vec<f64> = term.iter().map(|&x| x * weight).collect();
        let mut next = vec![0.0; term.len()];
        let mut k = 0usize;
        while 1.0 - cumulative > TAIL_PER_STEP && k < 10_000 {
            k += 1;
            // term <- term * P with P = I + Q / q
            for (n, (&x, &e)) in next.iter_mut().zip(term.iter().zip(&self.exit)) {
                *n = x * (1.0 - e / q);
            }
            for &(from, to, rate) in &self.transitions {
                next[to as usize] += term[from as usize] * rate / q;
            }
            std::mem::swap(&mut term, &mut next);
            weight *= qh / k as f64;
            cumulative += weight;
            for (o, &x) in out.iter_mut().zip(&term) {
                *o += weight * x;
            }
        }
        (out, (1.0 - cumulative).max(0.0))
    }
}

/// Exact law at time `t` of the process started from `init`.
pub fn exact_small_graph_distribution(
    topology: &Topology,
    init: &Configuration,
    params: &SimParams,
    t: f64,
) -> Result<ExactDistribution> {
    init.validate(topology)?;
    let generator = Generator::build(topology, params)?;
    let mut p0 = vec![0.0; generator.states()];
    p0[encode(generator.sites(), init)] = 1.0;
    let (probabilities, truncation_error) = generator.transient(&p0, t)?;
    Ok(ExactDistribution {
        sites: generator.sites,
        probabilities,
        truncation_error,
        time: t,
    })
}

/// Total variation distance `1/2 sum |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Empirical law over configuration codes from a sample of configurations.
pub fn empirical_distribution<'a>(
    sites: &[SiteId],
    samples: impl IntoIterator<Item = &'a Configuration>,
) -> Vec<f64> {
    let mut counts = vec![0usize; 3usize.pow(sites.len() as u32)];
    let mut n = 0usize;
    for c in samples {
        counts[encode(sites, c)] += 1;
        n += 1;
    }
    counts.iter().map(|&c| c as f64 / n.max(1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact_process::{init_single, init_pair};
    use approx::assert_abs_diff_eq;

    #[test]
    fn isolated_site_decays() {
        let t = Topology::path(1).unwrap();
        let init = init_single(&t, Strain::One, t.origin()).unwrap();
        let p = SimParams::new(1.0, 1.0, 1.0);
        for time in [0.1, 1.0, 3.0] {
            let d = exact_small_graph_distribution(&t, &init, &p, time).unwrap();
            assert_abs_diff_eq!(d.probability(&init), (-time).exp(), epsilon = 1e-10);
            assert!(d.truncation_error < 1e-12);
        }
    }

    #[test]
    fn independent_recoveries_on_two_sites() {
        let t = Topology::path(2).unwrap();
        let init: Configuration = [(SiteId(0), Strain::One), (SiteId(1), Strain::One)].into_iter().collect();
        let p = SimParams::new(0.0, 0.0, 1.0);
        for time in [0.5, 2.0] {
            let d = exact_small_graph_distribution(&t, &init, &p, time).unwrap();
            let gone = 1.0 - (-time).exp();
            assert_abs_diff_eq!(d.probability(&Configuration::new()), gone * gone, epsilon = 1e-10);
            assert_abs_diff_eq!(d.probabilities.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        let t = Topology::torus(1, 4).unwrap();
        let init = init_pair(&t, SiteId(0), SiteId(2)).unwrap();
        let p = SimParams::new(1.2, 0.7, 1.0).with_deltas(1.0, 0.6);
        let g = Generator::build(&t, &p).unwrap();
        let mut p0 = vec![0.0; g.states()];
        p0[encode(g.sites(), &init)] = 1.0;
        let (direct, _) = g.transient(&p0, 3.0).unwrap();
        let (half, _) = g.transient(&p0, 1.1).unwrap();
        let (rest, _) = g.transient(&half, 1.9).unwrap();
        assert!(total_variation(&direct, &rest) < 1e-9);
        assert!(direct.iter().zip(&rest).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn long_horizons_split_cleanly() {
        let t = Topology::torus(1, 6).unwrap();
        let init = init_single(&t, Strain::Two, t.origin()).unwrap();
        let p = SimParams::new(0.0, 4.0, 1.0);
        let d = exact_small_graph_distribution(&t, &init, &p, 40.0).unwrap();
        assert_abs_diff_eq!(d.probabilities.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        assert!(d.truncation_error < 1e-12);
        assert!(d.probabilities.iter().all(|&x| x >= -1e-15));
    }

    #[test]
    fn budget_enforced() {
        let t = Topology::torus(1, 10).unwrap();
        let r = exact_small_graph_distribution(&t, &Configuration::new(), &SimParams::new(1.0, 1.0, 1.0), 1.0);
        assert!(matches!(r, Err(Error::OracleBudget { .. })));
    }

    #[test]
    fn codes_round_trip() {
        let sites: Vec<SiteId> = (0..4).map(SiteId).collect();
        for code in 0..81 {
            assert_eq!(encode(&sites, &decode(&sites, code)), code);
        }
    }
}
