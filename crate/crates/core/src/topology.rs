//! Site graphs: the periodic torus standing in for the integer lattice, and
//! the depth-truncated homogeneous tree in which every site has `d + 1`
//! neighbors.
//!
//! Tree sites are never materialized. A tree [`SiteId`] packs the depth of the
//! site into the top bits and its position within that level into the rest;
//! the position is the mixed-radix reading of the path of child choices from
//! the root (first digit in `0..=d`, the remaining digits in `0..d`). Parent
//! and children are arithmetic on that encoding, so any address decodes to
//! the same neighborhood no matter which sites a simulation touched first.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest torus (in sites) accepted by [`Topology::torus`].
pub const DEFAULT_SITE_BUDGET: u128 = 1 << 26;

const DEPTH_SHIFT: u32 = 121;
const POS_MASK: u128 = (1u128 << DEPTH_SHIFT) - 1;
const MAX_TREE_DEPTH: u32 = (1 << (128 - DEPTH_SHIFT)) - 1;

/// Opaque site identifier, stable for the lifetime of its topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SiteId(pub u128);

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Torus,
    Tree,
    /// Finite path graph, used only for small validation graphs.
    Path,
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologyKind::Torus => "torus",
            TopologyKind::Tree => "tree",
            TopologyKind::Path => "path",
        })
    }
}

/// The kind/d/extent triple a topology is described by in configs and
/// result metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    pub d: u32,
    pub extent: u32,
}

impl TopologySpec {
    pub fn build(&self) -> Result<Topology> {
        match self.kind {
            TopologyKind::Torus => Topology::torus(self.d, self.extent),
            TopologyKind::Tree => Topology::tree(self.d, self.extent),
            TopologyKind::Path => Topology::path(self.extent),
        }
    }
}

/// Immutable site graph. Cheap to clone and safe to share between threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    kind: TopologyKind,
    d: u32,
    extent: u32,
    site_count: u128,
    /// Duplicate neighbor slots collapsed (torus with side 2).
    collapsed_neighbors: bool,
}

impl Topology {
    pub fn torus(d: u32, side: u32) -> Result<Self> {
        Self::torus_with_budget(d, side, DEFAULT_SITE_BUDGET)
    }

    pub fn torus_with_budget(d: u32, side: u32, budget: u128) -> Result<Self> {
        if d < 1 {
            return Err(Error::InvalidTopology(format!("torus dimension must be >= 1, got {d}")));
        }
        if side < 2 {
            return Err(Error::InvalidTopology(format!("torus side must be >= 2, got {side}")));
        }
        let site_count = (side as u128)
            .checked_pow(d)
            .filter(|&n| n <= budget)
            .ok_or_else(|| {
                Error::InvalidTopology(format!("torus {side}^{d} exceeds the site budget of {budget}"))
            })?;
        Ok(Topology {
            kind: TopologyKind::Torus,
            d,
            extent: side,
            site_count,
            collapsed_neighbors: side == 2,
        })
    }

    pub fn tree(d: u32, depth: u32) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidTopology(format!("tree branching must be >= 2, got {d}")));
        }
        if depth < 1 {
            return Err(Error::InvalidTopology(format!("tree depth must be >= 1, got {depth}")));
        }
        if depth > MAX_TREE_DEPTH {
            return Err(Error::InvalidTopology(format!("tree depth {depth} exceeds {MAX_TREE_DEPTH}")));
        }
        let too_big = || Error::InvalidTopology(format!("tree T_{d} of depth {depth} is not addressable"));
        let widest = level_size(d, depth).ok_or_else(too_big)?;
        if widest > POS_MASK {
            return Err(too_big());
        }
        let mut site_count: u128 = 1;
        for r in 1..=depth {
            site_count = site_count
                .checked_add(level_size(d, r).ok_or_else(too_big)?)
                .ok_or_else(too_big)?;
        }
        Ok(Topology {
            kind: TopologyKind::Tree,
            d,
            extent: depth,
            site_count,
            collapsed_neighbors: false,
        })
    }

    /// Path graph on `n` sites, origin at one end.
    pub fn path(n: u32) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidTopology("path needs at least one site".into()));
        }
        Ok(Topology {
            kind: TopologyKind::Path,
            d: 1,
            extent: n,
            site_count: n as u128,
            collapsed_neighbors: false,
        })
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    /// Torus side length, tree depth, or path length.
    pub fn extent(&self) -> u32 {
        self.extent
    }

    pub fn spec(&self) -> TopologySpec {
        TopologySpec {
            kind: self.kind,
            d: self.d,
            extent: self.extent,
        }
    }

    pub fn is_tree(&self) -> bool {
        self.kind == TopologyKind::Tree
    }

    pub fn site_count(&self) -> u128 {
        self.site_count
    }

    /// True when some neighbor slots coincided and were merged (torus side 2).
    pub fn has_collapsed_neighbors(&self) -> bool {
        self.collapsed_neighbors
    }

    /// The distinguished site: torus coordinate zero, tree root, path end.
    pub fn origin(&self) -> SiteId {
        SiteId(0)
    }

    /// Largest degree of any site.
    pub fn max_degree(&self) -> usize {
        match self.kind {
            TopologyKind::Torus if self.extent == 2 => self.d as usize,
            TopologyKind::Torus => 2 * self.d as usize,
            TopologyKind::Tree => self.d as usize + 1,
            TopologyKind::Path => 2.min(self.extent as usize - 1),
        }
    }

    pub fn contains(&self, site: SiteId) -> bool {
        match self.kind {
            TopologyKind::Torus | TopologyKind::Path => site.0 < self.site_count,
            TopologyKind::Tree => {
                let (depth, pos) = unpack(site);
                if depth == 0 {
                    return pos == 0;
                }
                depth <= self.extent && level_size(self.d, depth).is_some_and(|n| pos < n)
            }
        }
    }

    fn check(&self, site: SiteId) -> Result<()> {
        if self.contains(site) {
            Ok(())
        } else {
            Err(Error::UnknownSite(site))
        }
    }

    pub fn neighbors(&self, site: SiteId) -> Result<Vec<SiteId>> {
        self.check(site)?;
        let mut out = Vec::with_capacity(self.max_degree());
        self.neighbors_into(site, &mut out);
        Ok(out)
    }

    /// Appends the neighbors of `site` to `out` in deterministic order (axis
    /// order, minus before plus, on tori; parent then children on trees).
    /// The site must belong to the topology.
    pub fn neighbors_into(&self, site: SiteId, out: &mut Vec<SiteId>) {
        debug_assert!(self.contains(site));
        match self.kind {
            TopologyKind::Torus => {
                let side = self.extent as u128;
                let mut stride: u128 = 1;
                for _ in 0..self.d {
                    let coord = (site.0 / stride) % side;
                    let base = site.0 - coord * stride;
                    let down = (coord + side - 1) % side;
                    let up = (coord + 1) % side;
                    out.push(SiteId(base + down * stride));
                    if up != down {
                        out.push(SiteId(base + up * stride));
                    }
                    stride *= side;
                }
            }
            TopologyKind::Tree => {
                let d = self.d as u128;
                let (depth, pos) = unpack(site);
                if depth == 0 {
                    out.extend((0..=d).map(|c| pack(1, c)));
                    return;
                }
                out.push(if depth == 1 { SiteId(0) } else { pack(depth - 1, pos / d) });
                if depth < self.extent {
                    out.extend((0..d).map(|c| pack(depth + 1, pos * d + c)));
                }
            }
            TopologyKind::Path => {
                if site.0 > 0 {
                    out.push(SiteId(site.0 - 1));
                }
                if site.0 + 1 < self.site_count {
                    out.push(SiteId(site.0 + 1));
                }
            }
        }
    }

    pub fn degree(&self, site: SiteId) -> Result<usize> {
        Ok(self.neighbors(site)?.len())
    }

    /// Graph distance from the origin.
    pub fn distance_from_origin(&self, site: SiteId) -> Result<u32> {
        self.check(site)?;
        Ok(match self.kind {
            TopologyKind::Torus => self
                .torus_coords(site)
                .iter()
                .map(|&c| c.min(self.extent - c))
                .sum(),
            TopologyKind::Tree => unpack(site).0,
            TopologyKind::Path => site.0 as u32,
        })
    }

    /// Whether the site lies on the truncation boundary: depth-`R` leaves of a
    /// tree, the last site of a path, or (on a torus) any site with a
    /// coordinate at the wrap-around distance `L / 2`.
    pub fn is_boundary(&self, site: SiteId) -> bool {
        match self.kind {
            TopologyKind::Torus => {
                let half = self.extent / 2;
                self.torus_coords(site)
                    .iter()
                    .any(|&c| c.min(self.extent - c) == half)
            }
            TopologyKind::Tree => unpack(site).0 == self.extent,
            TopologyKind::Path => site.0 + 1 == self.site_count,
        }
    }

    /// Largest radius accepted by [`Topology::sphere_size`].
    pub fn max_radius(&self) -> u32 {
        match self.kind {
            TopologyKind::Torus => self.extent / 2,
            TopologyKind::Tree => self.extent,
            TopologyKind::Path => self.extent - 1,
        }
    }

    /// Number of sites at graph distance exactly `r` from the origin.
    pub fn sphere_size(&self, r: u32) -> Result<u128> {
        if r > self.max_radius() {
            return Err(Error::RadiusOutOfRange {
                radius: r,
                max: self.max_radius(),
            });
        }
        Ok(match self.kind {
            TopologyKind::Tree => {
                if r == 0 {
                    1
                } else {
                    level_size(self.d, r).expect("validated at construction")
                }
            }
            TopologyKind::Path => 1,
            TopologyKind::Torus => {
                // Per-axis distance counts, convolved over the d axes.
                let side = self.extent;
                let half = side / 2;
                let per_axis: Vec<u128> = (0..=half)
                    .map(|k| if k == 0 || 2 * k == side { 1 } else { 2 })
                    .collect();
                let mut counts = vec![1u128];
                for _ in 0..self.d {
                    let mut next = vec![0u128; counts.len() + half as usize];
                    for (i, &a) in counts.iter().enumerate() {
                        for (k, &b) in per_axis.iter().enumerate() {
                            next[i + k] += a * b;
                        }
                    }
                    counts = next;
                }
                counts.get(r as usize).copied().unwrap_or(0)
            }
        })
    }

    /// Every site, in increasing identifier order. Trees are enumerated level
    /// by level, so only call this on small trees.
    pub fn sites(&self) -> Box<dyn Iterator<Item = SiteId> + '_> {
        match self.kind {
            TopologyKind::Torus | TopologyKind::Path => Box::new((0..self.site_count).map(SiteId)),
            TopologyKind::Tree => Box::new(std::iter::once(SiteId(0)).chain((1..=self.extent).flat_map(
                move |depth| {
                    let n = level_size(self.d, depth).expect("validated at construction");
                    (0..n).map(move |pos| pack(depth, pos))
                },
            ))),
        }
    }

    /// Tree depth of a site (0 for the root). `None` on other topologies.
    pub fn depth(&self, site: SiteId) -> Option<u32> {
        self.is_tree().then(|| unpack(site).0)
    }

    /// Tree site reached by following `path` child choices from the root.
    pub fn tree_site(&self, path: &[u32]) -> Result<SiteId> {
        if !self.is_tree() {
            return Err(Error::InvalidTopology("child paths only address tree sites".into()));
        }
        if path.len() > self.extent as usize {
            return Err(Error::InvalidTopology(format!(
                "path of length {} is deeper than the tree",
                path.len()
            )));
        }
        let mut pos: u128 = 0;
        for (i, &c) in path.iter().enumerate() {
            let arity = if i == 0 { self.d + 1 } else { self.d };
            if c >= arity {
                return Err(Error::InvalidTopology(format!(
                    "child choice {c} at depth {} must be < {arity}",
                    i + 1
                )));
            }
            pos = pos * self.d as u128 + c as u128;
        }
        Ok(pack(path.len() as u32, pos))
    }

    /// Torus site with the given coordinates (each reduced modulo the side).
    pub fn torus_site(&self, coords: &[i64]) -> Result<SiteId> {
        if self.kind != TopologyKind::Torus || coords.len() != self.d as usize {
            return Err(Error::InvalidTopology(format!(
                "expected {} torus coordinates",
                self.d
            )));
        }
        let side = self.extent as i64;
        let mut id: u128 = 0;
        for &c in coords.iter().rev() {
            id = id * side as u128 + c.rem_euclid(side) as u128;
        }
        Ok(SiteId(id))
    }

    fn torus_coords(&self, site: SiteId) -> Vec<u32> {
        let side = self.extent as u128;
        let mut rest = site.0;
        (0..self.d)
            .map(|_| {
                let c = (rest % side) as u32;
                rest /= side;
                c
            })
            .collect()
    }

    /// Human-readable site address: torus coordinates joined by commas, tree
    /// child paths joined by dots (`root` for the root), path indices.
    pub fn format_site(&self, site: SiteId) -> String {
        match self.kind {
            TopologyKind::Torus => self
                .torus_coords(site)
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join(","),
            TopologyKind::Path => site.0.to_string(),
            TopologyKind::Tree => {
                let (depth, mut pos) = unpack(site);
                if depth == 0 {
                    return "root".into();
                }
                let d = self.d as u128;
                let mut digits = Vec::with_capacity(depth as usize);
                for _ in 1..depth {
                    digits.push((pos % d) as u32);
                    pos /= d;
                }
                digits.push(pos as u32);
                digits
                    .iter()
                    .rev()
                    .map(u32::to_string)
                    .collect::<Vec<_>>()
                    .join(".")
            }
        }
    }

    /// Inverse of [`Topology::format_site`]; also accepts `origin`.
    pub fn parse_site(&self, text: &str) -> Result<SiteId> {
        let text = text.trim();
        let bad = || Error::InvalidTopology(format!("cannot parse site address `{text}`"));
        if text == "origin" {
            return Ok(self.origin());
        }
        let site = match self.kind {
            TopologyKind::Tree if text == "root" => SiteId(0),
            TopologyKind::Tree => {
                let path = text
                    .split('.')
                    .map(|p| p.parse::<u32>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>>>()?;
                self.tree_site(&path)?
            }
            TopologyKind::Torus => {
                let coords = text
                    .split(',')
                    .map(|p| p.trim().parse::<i64>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>>>()?;
                self.torus_site(&coords)?
            }
            TopologyKind::Path => SiteId(text.parse::<u128>().map_err(|_| bad())?),
        };
        self.check(site)?;
        Ok(site)
    }
}

fn pack(depth: u32, pos: u128) -> SiteId {
    SiteId(((depth as u128) << DEPTH_SHIFT) | pos)
}

fn unpack(site: SiteId) -> (u32, u128) {
    ((site.0 >> DEPTH_SHIFT) as u32, site.0 & POS_MASK)
}

/// Sites at depth `r >= 1` of `T_d`: `(d + 1) d^(r - 1)`.
fn level_size(d: u32, r: u32) -> Option<u128> {
    (d as u128).checked_pow(r - 1)?.checked_mul(d as u128 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sorted(mut v: Vec<SiteId>) -> Vec<SiteId> {
        v.sort();
        v
    }

    #[test]
    fn torus_sizes_and_degrees() {
        let t = Topology::torus(1, 5).unwrap();
        assert_eq!(t.site_count(), 5);
        assert!(t.sites().all(|s| t.degree(s).unwrap() == 2));
        let t = Topology::torus(2, 4).unwrap();
        assert_eq!(t.site_count(), 16);
        assert!(t.sites().all(|s| t.degree(s).unwrap() == 4));
    }

    #[test]
    fn torus_wraps_around() {
        let t = Topology::torus(1, 5).unwrap();
        assert_eq!(sorted(t.neighbors(SiteId(0)).unwrap()), vec![SiteId(1), SiteId(4)]);
        assert_eq!(sorted(t.neighbors(SiteId(2)).unwrap()), vec![SiteId(1), SiteId(3)]);
    }

    #[test]
    fn torus_side_two_collapses() {
        let t = Topology::torus(2, 2).unwrap();
        assert!(t.has_collapsed_neighbors());
        assert_eq!(t.neighbors(SiteId(0)).unwrap(), vec![SiteId(1), SiteId(2)]);
    }

    #[test]
    fn torus_rejections() {
        assert!(Topology::torus(0, 4).is_err());
        assert!(Topology::torus(1, 1).is_err());
        assert!(Topology::torus(3, 1000).is_err());
        assert!(Topology::torus_with_budget(2, 10, 50).is_err());
    }

    #[test]
    fn tree_counts() {
        let t = Topology::tree(2, 2).unwrap();
        assert_eq!(t.site_count(), 10);
        assert_eq!(t.sites().count(), 10);
        assert_eq!(t.degree(t.origin()).unwrap(), 3);
        let t = Topology::tree(8, 1).unwrap();
        assert_eq!(t.sphere_size(1).unwrap(), 9);
    }

    #[test]
    fn tree_adjacency() {
        let t = Topology::tree(2, 2).unwrap();
        let kids = t.neighbors(t.origin()).unwrap();
        assert_eq!(kids.len(), 3);
        assert!(kids.iter().all(|&k| t.depth(k) == Some(1)));
        for leaf in t.sites().filter(|&s| t.depth(s) == Some(2)) {
            let n = t.neighbors(leaf).unwrap();
            assert_eq!(n.len(), 1);
            assert_eq!(t.depth(n[0]), Some(1));
            assert!(t.is_boundary(leaf));
        }
    }

    #[test]
    fn tree_rejections() {
        assert!(Topology::tree(1, 3).is_err());
        assert!(Topology::tree(2, 0).is_err());
        assert!(Topology::tree(8, 40).is_ok());
        assert!(Topology::tree(8, 60).is_err());
    }

    #[test]
    fn deep_tree_is_addressable() {
        let t = Topology::tree(8, 40).unwrap();
        let mut path = vec![8u32];
        path.extend(std::iter::repeat_n(7, 39));
        let far = t.tree_site(&path).unwrap();
        assert!(t.contains(far));
        assert!(t.is_boundary(far));
        assert_eq!(t.neighbors(far).unwrap().len(), 1);
        assert_eq!(t.parse_site(&t.format_site(far)).unwrap(), far);
    }

    #[test]
    fn sphere_sizes() {
        let t = Topology::tree(2, 5).unwrap();
        assert_eq!(t.sphere_size(3).unwrap(), 12);
        assert_eq!(t.sphere_size(0).unwrap(), 1);
        assert!(t.sphere_size(6).is_err());
        let t = Topology::torus(2, 10).unwrap();
        assert_eq!(t.sphere_size(0).unwrap(), 1);
        assert_eq!(t.sphere_size(1).unwrap(), 4);
        assert!(t.sphere_size(6).is_err());
        let t = Topology::torus(1, 9).unwrap();
        assert!((1..=4).all(|r| t.sphere_size(r).unwrap() == 2));
    }

    #[test]
    fn torus_sphere_matches_enumeration() {
        for (d, side) in [(1, 6), (2, 5), (2, 6), (3, 4)] {
            let t = Topology::torus(d, side).unwrap();
            if d == 1 {
                let total: u128 = (0..=t.max_radius()).map(|r| t.sphere_size(r).unwrap()).sum();
                assert_eq!(total, t.site_count());
            }
            for r in 0..=t.max_radius() {
                let brute = t
                    .sites()
                    .filter(|&s| t.distance_from_origin(s).unwrap() == r)
                    .count() as u128;
                assert_eq!(t.sphere_size(r).unwrap(), brute, "d={d} L={side} r={r}");
            }
        }
    }

    #[test]
    fn unknown_sites_rejected() {
        let t = Topology::torus(1, 5).unwrap();
        assert_eq!(t.neighbors(SiteId(5)), Err(Error::UnknownSite(SiteId(5))));
        let tree = Topology::tree(2, 2).unwrap();
        assert!(tree.neighbors(pack(3, 0)).is_err());
        assert!(tree.neighbors(pack(1, 3)).is_err());
        assert!(tree.neighbors(pack(0, 1)).is_err());
    }

    #[test]
    fn site_addresses_round_trip() {
        let t = Topology::torus(2, 6).unwrap();
        for s in t.sites() {
            assert_eq!(t.parse_site(&t.format_site(s)).unwrap(), s);
        }
        assert_eq!(t.torus_site(&[-1, 0]).unwrap(), t.parse_site("5,0").unwrap());
        let tree = Topology::tree(3, 3).unwrap();
        for s in tree.sites() {
            assert_eq!(tree.parse_site(&tree.format_site(s)).unwrap(), s);
        }
        assert_eq!(tree.format_site(tree.tree_site(&[3, 2, 0]).unwrap()), "3.2.0");
    }

    fn symmetric(t: &Topology, sites: impl Iterator<Item = SiteId>) {
        for x in sites {
            let nx = t.neighbors(x).unwrap();
            let mut dedup = nx.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), nx.len(), "duplicate neighbor of {x}");
            for y in nx {
                assert!(t.neighbors(y).unwrap().contains(&x), "{x} -> {y} not symmetric");
            }
        }
    }

    #[test]
    fn neighbor_symmetry_small_graphs() {
        for t in [
            Topology::torus(1, 2).unwrap(),
            Topology::torus(1, 7).unwrap(),
            Topology::torus(2, 2).unwrap(),
            Topology::torus(3, 3).unwrap(),
            Topology::tree(2, 4).unwrap(),
            Topology::tree(4, 3).unwrap(),
            Topology::path(5).unwrap(),
        ] {
            symmetric(&t, t.sites());
        }
    }

    proptest! {
        #[test]
        fn tree_neighbors_symmetric_and_lawful(
            d in 2u32..9,
            depth in 1u32..30,
            choices in proptest::collection::vec(0u32..64, 0..30),
        ) {
            let t = Topology::tree(d, depth).unwrap();
            let path: Vec<u32> = choices
                .iter()
                .take(depth as usize)
                .enumerate()
                .map(|(i, c)| c % if i == 0 { d + 1 } else { d })
                .collect();
            let site = t.tree_site(&path).unwrap();
            let deg = t.degree(site).unwrap();
            if path.len() == depth as usize {
                prop_assert_eq!(deg, 1);
            } else {
                prop_assert_eq!(deg, d as usize + 1);
            }
            symmetric(&t, std::iter::once(site));
            prop_assert_eq!(t.distance_from_origin(site).unwrap(), path.len() as u32);
        }

        #[test]
        fn torus_degree_and_polynomial_spheres(d in 1u32..4, side in 3u32..12) {
            let t = Topology::torus(d, side).unwrap();
            for s in t.sites().take(50) {
                prop_assert_eq!(t.degree(s).unwrap(), 2 * d as usize);
            }
            symmetric(&t, t.sites().take(50));
            for r in 1..side.div_ceil(2) {
                let bound = 2 * d as u128 * (2 * r as u128 + 1).pow(d - 1);
                prop_assert!(t.sphere_size(r).unwrap() <= bound);
            }
        }
    }

    #[test]
    fn tree_spheres_grow_exponentially() {
        for d in 2..=8 {
            let t = Topology::tree(d, 10).unwrap();
            for r in 1..=10 {
                assert_eq!(
                    t.sphere_size(r).unwrap(),
                    (d as u128 + 1) * (d as u128).pow(r - 1)
                );
            }
        }
    }
}
