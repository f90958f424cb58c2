//! Gillespie direct method over a sparse frontier.
//!
//! Only frontier sites hold a slot: infected sites and susceptible sites with
//! at least one infected neighbor. Any site without a slot is susceptible with
//! no infected neighbors, so it carries no rate.
//!
//! A slot's rate is determined by its rate class: infected by strain 1
//! (`delta1`), infected by strain 2 (`delta2`), or susceptible with `(n1, n2)`
//! infected neighbors (`lambda1 n1 + lambda2 n2`). Slots are kept in one
//! bucket per class, so moving a slot is O(1), the total rate is the sum over
//! the handful of classes of `rate * occupancy`, and an event is drawn by
//! picking a class in proportion to its total and then a member uniformly.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rustc_hash::FxHashMap;

use super::{site_rates, Configuration, SampleSummary, SimParams, SimResult, Strain};
use crate::error::{Error, Result};
use crate::topology::{SiteId, Topology};

const DENSE_INDEX_MAX: u128 = 1 << 22;
const NO_SLOT: u32 = u32::MAX;
const AUDIT_TOLERANCE: f64 = 1e-9;

enum SlotIndex {
    Dense(Vec<u32>),
    Sparse(FxHashMap<SiteId, u32>),
}

impl SlotIndex {
    fn get(&self, site: SiteId) -> Option<u32> {
        match self {
            SlotIndex::Dense(v) => match v[site.0 as usize] {
                NO_SLOT => None,
                s => Some(s),
            },
            SlotIndex::Sparse(m) => m.get(&site).copied(),
        }
    }

    fn insert(&mut self, site: SiteId, slot: u32) {
        match self {
            SlotIndex::Dense(v) => v[site.0 as usize] = slot,
            SlotIndex::Sparse(m) => {
                m.insert(site, slot);
            }
        }
    }

    fn remove(&mut self, site: SiteId) {
        match self {
            SlotIndex::Dense(v) => v[site.0 as usize] = NO_SLOT,
            SlotIndex::Sparse(m) => {
                m.remove(&site);
            }
        }
    }
}

const NO_BUCKET: u16 = u16::MAX;

/// Slots grouped by rate class.
struct RateBuckets {
    max_degree: usize,
    rates: Vec<f64>,
    members: Vec<Vec<u32>>,
}

impl RateBuckets {
    fn new(max_degree: usize, params: &SimParams) -> Self {
        let mut rates = vec![params.delta1, params.delta2];
        for n1 in 0..=max_degree {
            for n2 in 0..=max_degree - n1 {
                rates.push(params.lambda1 * n1 as f64 + params.lambda2 * n2 as f64);
            }
        }
        RateBuckets {
            max_degree,
            members: vec![Vec::new(); rates.len()],
            rates,
        }
    }

    fn class(&self, state: u8, n: [u16; 2]) -> u16 {
        match state {
            1 => 0,
            2 => 1,
            _ => {
                // Triangular index of (n1, n2) with n1 + n2 <= max_degree.
                let (n1, n2) = (n[0] as usize, n[1] as usize);
                let d = self.max_degree;
                let before = n1 * (d + 1) - n1 * n1.saturating_sub(1) / 2;
                (2 + before + n2) as u16
            }
        }
    }

    fn total(&self) -> f64 {
        self.rates
            .iter()
            .zip(&self.members)
            .map(|(r, m)| r * m.len() as f64)
            .sum()
    }

    /// Member whose share of the total contains `target`, for `target` in
    /// `[0, total)`.
    fn pick(&self, mut target: f64) -> u32 {
        let mut last = None;
        for (r, m) in self.rates.iter().zip(&self.members) {
            let w = r * m.len() as f64;
            if w <= 0.0 {
                continue;
            }
            if target < w {
                let i = ((target / r) as usize).min(m.len() - 1);
                return m[i];
            }
            target -= w;
            last = Some(m);
        }
        let m = last.expect("pick called with zero total rate");
        m[m.len() - 1]
    }
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    site: SiteId,
    /// 0 susceptible, 1 or 2 infected.
    state: u8,
    /// Infected neighbors per strain.
    nbr_infected: [u16; 2],
    degree: u8,
    boundary: bool,
    live: bool,
    bucket: u16,
    pos: u32,
}

pub struct Engine<'a> {
    topology: &'a Topology,
    params: &'a SimParams,
    stride: usize,
    index: SlotIndex,
    slots: Vec<Slot>,
    neighbors: Vec<SiteId>,
    free: Vec<u32>,
    rates: RateBuckets,
    counts: [usize; 2],
    time: f64,
    events: u64,
    boundary_contact: bool,
    scratch: Vec<SiteId>,
    walk: Vec<SiteId>,
    /// Site infected by the most recent event.
    last_infected: Option<SiteId>,
}

impl<'a> Engine<'a> {
    pub fn new(topology: &'a Topology, params: &'a SimParams, init: &Configuration) -> Result<Self> {
        params.validate()?;
        init.validate(topology)?;
        let index = if !topology.is_tree() && topology.site_count() <= DENSE_INDEX_MAX {
            SlotIndex::Dense(vec![NO_SLOT; topology.site_count() as usize])
        } else {
            SlotIndex::Sparse(FxHashMap::default())
        };
        let stride = topology.max_degree();
        let mut engine = Engine {
            topology,
            params,
            stride,
            index,
            slots: Vec::new(),
            neighbors: Vec::new(),
            free: Vec::new(),
            rates: RateBuckets::new(stride, params),
            counts: [0, 0],
            time: 0.0,
            events: 0,
            boundary_contact: false,
            scratch: Vec::with_capacity(stride),
            walk: Vec::with_capacity(stride),
            last_infected: None,
        };
        for (site, strain) in init.iter() {
            let x = engine.intern(site);
            engine.slots[x as usize].state = strain as u8;
            engine.counts[strain.index()] += 1;
            engine.boundary_contact |= engine.slots[x as usize].boundary;
        }
        for (site, strain) in init.iter() {
            let x = engine.index.get(site).expect("interned above");
            engine.for_each_neighbor(x, |e, y| {
                let y = e.intern(y);
                e.slots[y as usize].nbr_infected[strain.index()] += 1;
            });
        }
        for x in 0..engine.slots.len() as u32 {
            engine.refresh_rate(x);
        }
        Ok(engine)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn total_rate(&self) -> f64 {
        self.rates.total()
    }

    pub fn count(&self, strain: Strain) -> usize {
        self.counts[strain.index()]
    }

    pub fn is_absorbed(&self) -> bool {
        self.counts == [0, 0]
    }

    pub fn boundary_contact(&self) -> bool {
        self.boundary_contact
    }

    pub fn state(&self, site: SiteId) -> u8 {
        self.index.get(site).map_or(0, |x| self.slots[x as usize].state)
    }

    /// Sites currently holding a slot.
    pub fn frontier(&self) -> BTreeSet<SiteId> {
        self.slots.iter().filter(|s| s.live).map(|s| s.site).collect()
    }

    pub fn configuration(&self) -> Configuration {
        self.slots
            .iter()
            .filter(|s| s.live && s.state != 0)
            .map(|s| (s.site, Strain::try_from(s.state).expect("infected slot")))
            .collect()
    }

    fn intern(&mut self, site: SiteId) -> u32 {
        if let Some(x) = self.index.get(site) {
            return x;
        }
        let slot = Slot {
            site,
            state: 0,
            nbr_infected: [0, 0],
            degree: 0,
            boundary: self.topology.is_boundary(site),
            live: true,
            bucket: NO_BUCKET,
            pos: 0,
        };
        let x = match self.free.pop() {
            Some(x) => {
                self.slots[x as usize] = slot;
                x
            }
            None => {
                self.slots.push(slot);
                self.neighbors
                    .resize(self.slots.len() * self.stride, SiteId(0));
                (self.slots.len() - 1) as u32
            }
        };
        self.scratch.clear();
        self.topology.neighbors_into(site, &mut self.scratch);
        let base = x as usize * self.stride;
        self.neighbors[base..base + self.scratch.len()].copy_from_slice(&self.scratch);
        self.slots[x as usize].degree = self.scratch.len() as u8;
        self.index.insert(site, x);
        x
    }

    fn release(&mut self, x: u32) {
        let slot = &mut self.slots[x as usize];
        slot.live = false;
        let site = slot.site;
        self.index.remove(site);
        self.unfile(x);
        self.free.push(x);
    }

    fn unfile(&mut self, x: u32) {
        let Slot { bucket, pos, .. } = self.slots[x as usize];
        if bucket == NO_BUCKET {
            return;
        }
        let members = &mut self.rates.members[bucket as usize];
        members.swap_remove(pos as usize);
        if let Some(&moved) = members.get(pos as usize) {
            self.slots[moved as usize].pos = pos;
        }
        self.slots[x as usize].bucket = NO_BUCKET;
    }

    /// Files slot `x` under the rate class of its current state.
    fn refresh_rate(&mut self, x: u32) {
        let s = self.slots[x as usize];
        let class = self.rates.class(s.state, s.nbr_infected);
        if class == s.bucket {
            return;
        }
        self.unfile(x);
        let members = &mut self.rates.members[class as usize];
        self.slots[x as usize].bucket = class;
        self.slots[x as usize].pos = members.len() as u32;
        members.push(x);
    }

    fn cached_rate(&self, x: u32) -> f64 {
        match self.slots[x as usize].bucket {
            NO_BUCKET => 0.0,
            b => self.rates.rates[b as usize],
        }
    }

    /// Calls `f` on each neighbor of slot `x`. The neighbor list is copied
    /// out first, so `f` may intern new slots.
    fn for_each_neighbor(&mut self, x: u32, mut f: impl FnMut(&mut Self, SiteId)) {
        let base = x as usize * self.stride;
        let deg = self.slots[x as usize].degree as usize;
        let mut buf = std::mem::take(&mut self.walk);
        buf.clear();
        buf.extend_from_slice(&self.neighbors[base..base + deg]);
        for &y in &buf {
            f(self, y);
        }
        self.walk = buf;
    }

    /// Applies the transition at slot `x`; `u` in `[0, 1)` picks the strain
    /// when a susceptible site is infected.
    fn apply(&mut self, x: u32, u: f64) {
        self.events += 1;
        self.last_infected = None;
        let slot = self.slots[x as usize];
        if slot.state != 0 {
            let k = slot.state as usize - 1;
            self.slots[x as usize].state = 0;
            self.counts[k] -= 1;
            self.for_each_neighbor(x, |e, y| {
                let y = e.index.get(y).expect("neighbors of infected sites hold slots");
                let ys = &mut e.slots[y as usize];
                ys.nbr_infected[k] -= 1;
                if ys.state == 0 {
                    if ys.nbr_infected == [0, 0] {
                        e.release(y);
                    } else {
                        e.refresh_rate(y);
                    }
                }
            });
            if self.slots[x as usize].nbr_infected == [0, 0] {
                self.release(x);
            } else {
                self.refresh_rate(x);
            }
        } else {
            let r1 = self.params.lambda1 * slot.nbr_infected[0] as f64;
            let r2 = self.params.lambda2 * slot.nbr_infected[1] as f64;
            let strain = if u * (r1 + r2) < r1 { Strain::One } else { Strain::Two };
            let k = strain.index();
            self.slots[x as usize].state = strain as u8;
            self.counts[k] += 1;
            self.boundary_contact |= slot.boundary;
            self.last_infected = Some(slot.site);
            self.refresh_rate(x);
            self.for_each_neighbor(x, |e, y| {
                let y = e.intern(y);
                e.slots[y as usize].nbr_infected[k] += 1;
                if e.slots[y as usize].state == 0 {
                    e.refresh_rate(y);
                }
            });
        }
    }

    /// Time of the next event, or `None` if the configuration is absorbed.
    fn next_event_time<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<f64> {
        let total = self.rates.total();
        if total <= 0.0 {
            return None;
        }
        let wait: f64 = rng.sample(Exp1);
        Some(self.time + wait / total)
    }

    fn fire<R: Rng + ?Sized>(&mut self, at: f64, rng: &mut R) {
        self.time = at;
        let total = self.rates.total();
        let x = self.rates.pick(rng.random::<f64>() * total);
        let u = rng.random::<f64>();
        self.apply(x, u);
    }

    /// Advances by one event. Returns `false` once absorbed.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        match self.next_event_time(rng) {
            Some(t) => {
                self.fire(t, rng);
                true
            }
            None => false,
        }
    }

    /// Recomputes every rate from scratch with [`site_rates`] on a snapshot
    /// of the configuration and checks it against the cached table.
    pub fn audit(&self) -> Result<()> {
        let config = self.configuration();
        let mut frontier = BTreeSet::new();
        for (site, _) in config.iter() {
            frontier.insert(site);
            frontier.extend(self.topology.neighbors(site)?);
        }
        let live = self.frontier();
        if live != frontier {
            let extra: Vec<_> = live.difference(&frontier).take(5).collect();
            let missing: Vec<_> = frontier.difference(&live).take(5).collect();
            return Err(Error::RateAudit(format!(
                "frontier mismatch at t={}: stale slots {extra:?}, missing slots {missing:?}",
                self.time
            )));
        }
        let mut total = 0.0;
        for &site in &frontier {
            let (a, b, c) = site_rates(self.topology, &config, site, self.params)?;
            let fresh = a + b + c;
            let x = self.index.get(site).expect("frontier checked");
            let cached = self.cached_rate(x);
            if (fresh - cached).abs() > AUDIT_TOLERANCE * fresh.abs().max(1.0) {
                return Err(Error::RateAudit(format!(
                    "site {} at t={}: cached rate {cached}, recomputed {fresh}",
                    self.topology.format_site(site),
                    self.time
                )));
            }
            total += fresh;
        }
        let cached = self.rates.total();
        if (total - cached).abs() > AUDIT_TOLERANCE * total.abs().max(1.0) {
            return Err(Error::RateAudit(format!(
                "total rate at t={}: cached {cached}, recomputed {total}",
                self.time
            )));
        }
        Ok(())
    }
}

/// Simulates from `init` with a generator seeded from `seed`.
pub fn run(topology: &Topology, init: &Configuration, params: &SimParams, seed: u64) -> Result<SimResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut result = run_with_rng(topology, init, params, &mut rng)?;
    result.seed = seed;
    Ok(result)
}

pub fn run_with_rng<R: Rng + ?Sized>(
    topology: &Topology,
    init: &Configuration,
    params: &SimParams,
    rng: &mut R,
) -> Result<SimResult> {
    let mut engine = Engine::new(topology, params, init)?;
    let mut samples = Vec::with_capacity(params.sample_times.len());
    let mut window_hits = vec![false; params.observe.len()];
    let mut window_open = false;
    let mut next_sample = 0;
    let mut absorbed_at = engine.is_absorbed().then_some(0.0);
    let saturated = |engine: &Engine| {
        params
            .population_cap
            .is_some_and(|cap| engine.count(Strain::One) + engine.count(Strain::Two) >= cap)
    };
    let mut saturated_at = saturated(&engine).then_some(0.0);

    // Record everything scheduled at or before `t`, given the state held
    // since the previous event.
    let catch_up = |engine: &Engine, t: f64, next_sample: &mut usize, samples: &mut Vec<SampleSummary>,
                    window_open: &mut bool, hits: &mut [bool]| {
        if let Some((start, _)) = params.window {
            if !*window_open && start <= t {
                *window_open = true;
                for (hit, &site) in hits.iter_mut().zip(&params.observe) {
                    *hit |= engine.state(site) != 0;
                }
            }
        }
        while *next_sample < params.sample_times.len() && params.sample_times[*next_sample] <= t {
            samples.push(SampleSummary {
                time: params.sample_times[*next_sample],
                count1: engine.count(Strain::One),
                count2: engine.count(Strain::Two),
                observed: params.observe.iter().map(|&s| engine.state(s)).collect(),
                boundary_contact: engine.boundary_contact(),
            });
            *next_sample += 1;
        }
    };

    catch_up(&engine, 0.0, &mut next_sample, &mut samples, &mut window_open, &mut window_hits);
    if absorbed_at.is_none() && saturated_at.is_none() {
        loop {
            let Some(t) = engine.next_event_time(rng) else {
                absorbed_at = Some(engine.time);
                break;
            };
            if t > params.t_max {
                break;
            }
            catch_up(&engine, t, &mut next_sample, &mut samples, &mut window_open, &mut window_hits);
            engine.fire(t, rng);
            if let (Some(site), Some((start, end))) = (engine.last_infected, params.window) {
                if start <= t && t <= end {
                    for (hit, &s) in window_hits.iter_mut().zip(&params.observe) {
                        *hit |= s == site;
                    }
                }
            }
            if let Some(every) = params.audit_every {
                if engine.events % every == 0 {
                    engine.audit()?;
                }
            }
            if engine.is_absorbed() {
                absorbed_at = Some(t);
                break;
            }
            if saturated(&engine) {
                saturated_at = Some(t);
                break;
            }
        }
    }
    if params.audit_every.is_some() {
        engine.audit()?;
    }
    let elapsed = absorbed_at.or(saturated_at).unwrap_or(params.t_max);
    catch_up(&engine, params.t_max, &mut next_sample, &mut samples, &mut window_open, &mut window_hits);
    Ok(SimResult {
        samples,
        final_config: engine.configuration(),
        events: engine.events,
        elapsed,
        seed: 0,
        absorbed_at,
        saturated_at,
        boundary_contact: engine.boundary_contact,
        window_hits,
    })
}
