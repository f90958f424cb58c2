//! Experiment configuration documents.
//!
//! A config is a TOML document with a fixed schema: top-level run settings,
//! `[topology]`, `[params]`, `[init]`, at most one section named after the
//! experiment kind, and an optional `[sweep]`. Unknown keys are errors, and
//! parsing reports every problem it finds, each with its key path.
//!
//! ```toml
//! kind = "survival"
//! replicates = 1000
//! master_seed = 7
//!
//! [topology]
//! kind = "torus"
//! d = 1
//! extent = 200
//!
//! [params]
//! lambda1 = 3.0
//! lambda2 = 0.0
//! t_max = 100.0
//!
//! [init]
//! kind = "single"
//! strain = 1
//! site = "origin"
//! ```

use std::fmt;

use strainwars_core::contact_process::{Strain, PRODUCT_INIT_MAX_SITES};
use strainwars_core::estimators::{CriticalKind, DecisionRule, MIN_REPLICATES, ORACLE_MAX_SITES};
use strainwars_core::topology::{Topology, TopologyKind, TopologySpec};
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.reason)
        } else {
            write!(f, "{}: {}", self.path, self.reason)
        }
    }
}

/// All problems found in one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl ConfigErrors {
    pub fn single(path: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigErrors(vec![ConfigError {
            path: path.into(),
            reason: reason.into(),
        }])
    }

    /// Whether some error is reported at `path`.
    pub fn mentions(&self, path: &str) -> bool {
        self.0.iter().any(|e| e.path == path)
    }
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Ode,
    Simulate,
    Survival,
    Critical,
    Coexist,
    Regime,
    CrowdOut,
    OracleCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Ode,
        ExperimentKind::Simulate,
        ExperimentKind::Survival,
        ExperimentKind::Critical,
        ExperimentKind::Coexist,
        ExperimentKind::Regime,
        ExperimentKind::CrowdOut,
        ExperimentKind::OracleCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Ode => "ode",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Survival => "survival",
            ExperimentKind::Critical => "critical",
            ExperimentKind::Coexist => "coexist",
            ExperimentKind::Regime => "regime",
            ExperimentKind::CrowdOut => "crowd-out",
            ExperimentKind::OracleCheck => "oracle-check",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Name of the kind-specific section, if the kind has one.
    fn section(self) -> Option<&'static str> {
        match self {
            ExperimentKind::Ode => Some("ode"),
            ExperimentKind::Critical => Some("critical"),
            ExperimentKind::Coexist => Some("coexist"),
            ExperimentKind::Regime => Some("regime"),
            ExperimentKind::CrowdOut => Some("crowd_out"),
            ExperimentKind::OracleCheck => Some("oracle"),
            ExperimentKind::Simulate | ExperimentKind::Survival => None,
        }
    }

    fn uses_lattice(self) -> bool {
        self != ExperimentKind::Ode
    }

    /// Kinds whose output is indexed by `params.sample_times`.
    fn uses_samples(self) -> bool {
        matches!(self, ExperimentKind::Simulate | ExperimentKind::Coexist | ExperimentKind::CrowdOut)
    }

    /// Kinds that pick their own infection rate and initial state.
    fn sets_own_lambda(self) -> bool {
        matches!(self, ExperimentKind::Critical | ExperimentKind::Regime)
    }

    fn min_replicates(self) -> usize {
        match self {
            ExperimentKind::Simulate | ExperimentKind::OracleCheck => 1,
            _ => MIN_REPLICATES,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Single { strain: Strain, site: String },
    /// `site1` holds strain 1 and `site2` strain 2.
    Pair { site1: String, site2: String },
    Product { p1: f64, p2: f64 },
    Split,
    /// Initial densities for the mean-field equations.
    Density { u1: f64, u2: f64 },
}

impl InitSpec {
    fn kind(&self) -> &'static str {
        match self {
            InitSpec::Single { .. } => "single",
            InitSpec::Pair { .. } => "pair",
            InitSpec::Product { .. } => "product",
            InitSpec::Split => "split",
            InitSpec::Density { .. } => "density",
        }
    }

    fn has_both_strains(&self) -> bool {
        match self {
            InitSpec::Pair { .. } | InitSpec::Split => true,
            InitSpec::Product { p1, p2 } => *p1 > 0.0 && *p2 > 0.0,
            InitSpec::Single { .. } | InitSpec::Density { .. } => false,
        }
    }

    fn may_have_strain2(&self) -> bool {
        match self {
            InitSpec::Single { strain, .. } => *strain == Strain::Two,
            InitSpec::Product { p2, .. } => *p2 > 0.0,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamsSpec {
    pub lambda1: f64,
    pub lambda2: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub t_max: f64,
    pub sample_times: Vec<f64>,
    /// Site addresses recorded at every sample (simulate only).
    pub observe: Vec<String>,
    pub population_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSpec {
    pub dt: f64,
    /// Write every `stride`-th integration step.
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalSpec {
    pub target: CriticalKind,
    pub bracket: (f64, f64),
    pub tolerance: f64,
    pub window_fraction: f64,
    pub alive_lower: f64,
    pub dead_upper: f64,
    pub max_replicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSpec {
    pub lambdas: Vec<f64>,
    pub window_fraction: f64,
}

/// Two sites for `P(x in state 1, y in state 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSpec {
    pub x: String,
    pub y: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrowdOutSpec {
    pub site: String,
    pub pair: Option<PairSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoexistSpec {
    pub pair: Option<PairSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpec {
    pub max_tv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub key: String,
    pub values: Vec<f64>,
}

const SWEEPABLE: [&str; 11] = [
    "params.lambda1",
    "params.lambda2",
    "params.delta1",
    "params.delta2",
    "params.t_max",
    "init.p1",
    "init.p2",
    "init.u1",
    "init.u2",
    "topology.extent",
    "ode.dt",
];

#[derive(Debug, Clone, PartialEq)]
pub enum KindSpec {
    None,
    Ode(OdeSpec),
    Critical(CriticalSpec),
    Coexist(CoexistSpec),
    Regime(RegimeSpec),
    CrowdOut(CrowdOutSpec),
    Oracle(OracleSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Absent for mean-field runs.
    pub topology: Option<TopologySpec>,
    pub params: ParamsSpec,
    /// Absent for kinds that seed a single infection themselves.
    pub init: Option<InitSpec>,
    pub replicates: usize,
    pub master_seed: Option<u64>,
    pub out: Option<String>,
    pub parallelism: Option<usize>,
    pub detail: KindSpec,
    pub sweep: Option<SweepSpec>,
}

/// Largest seed a document can carry (TOML integers are signed).
pub const MAX_SEED: u64 = i64::MAX as u64;

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    parse_config_as(text, None)
}

/// Parses with `kind` filled in when the document has no `kind` key. A
/// document naming a different kind is an error.
pub fn parse_config_as(text: &str, kind: Option<ExperimentKind>) -> Result<ExperimentConfig, ConfigErrors> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigErrors::single("", format!("not a valid document: {}", e.message())))?;
    from_table(&table, kind)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_table()).expect("config tables always serialize")
    }

    /// One config per sweep value, each without a sweep; the config itself
    /// when there is no sweep.
    pub fn expand(&self) -> Result<Vec<ExperimentConfig>, ConfigErrors> {
        let Some(sweep) = &self.sweep else {
            return Ok(vec![self.clone()]);
        };
        let mut base = self.to_table();
        base.remove("sweep");
        let mut out = Vec::new();
        let mut errors = Vec::new();
        for (i, &v) in sweep.values.iter().enumerate() {
            let mut t = base.clone();
            let (section, key) = sweep.key.split_once('.').expect("sweep keys are dotted");
            let value = if key == "extent" { Value::Integer(v as i64) } else { Value::Float(v) };
            if let Some(Value::Table(s)) = t.get_mut(section) {
                s.insert(key.to_string(), value);
            }
            match from_table(&t, None) {
                Ok(c) => out.push(c),
                Err(e) => errors.extend(e.0.into_iter().map(|e| ConfigError {
                    path: format!("sweep.values[{i}]"),
                    reason: format!("with {} = {v}: {e}", sweep.key),
                })),
            }
        }
        if errors.is_empty() {
            Ok(out)
        } else {
            Err(ConfigErrors(errors))
        }
    }

    /// The topology, which validation has already built once.
    pub fn build_topology(&self) -> Option<Topology> {
        self.topology.map(|t| t.build().expect("validated topology"))
    }

    fn to_table(&self) -> Table {
        let mut root = Table::new();
        root.insert("kind".into(), self.kind.name().into());
        if self.kind != ExperimentKind::Ode {
            root.insert("replicates".into(), int(self.replicates));
        }
        if let Some(s) = self.master_seed {
            root.insert("master_seed".into(), Value::Integer(s as i64));
        }
        if let Some(o) = &self.out {
            root.insert("out".into(), o.as_str().into());
        }
        if let Some(p) = self.parallelism {
            root.insert("parallelism".into(), int(p));
        }
        if let Some(t) = &self.topology {
            let mut s = Table::new();
            s.insert("kind".into(), t.kind.to_string().into());
            s.insert("d".into(), Value::Integer(t.d as i64));
            s.insert("extent".into(), Value::Integer(t.extent as i64));
            root.insert("topology".into(), s.into());
        }

        let p = &self.params;
        let mut s = Table::new();
        if !self.kind.sets_own_lambda() {
            s.insert("lambda1".into(), p.lambda1.into());
            s.insert("lambda2".into(), p.lambda2.into());
        }
        if self.kind != ExperimentKind::Critical {
            s.insert("delta1".into(), p.delta1.into());
            s.insert("delta2".into(), p.delta2.into());
        }
        s.insert("t_max".into(), p.t_max.into());
        if self.kind.uses_samples() {
            s.insert("sample_times".into(), floats(&p.sample_times));
        }
        if let Some(c) = p.population_cap {
            s.insert("population_cap".into(), int(c));
        }
        if self.kind == ExperimentKind::Simulate {
            s.insert("observe".into(), strings(&p.observe));
        }
        root.insert("params".into(), s.into());

        if let Some(init) = &self.init {
            let mut s = Table::new();
            s.insert("kind".into(), init.kind().into());
            match init {
                InitSpec::Single { strain, site } => {
                    s.insert("strain".into(), Value::Integer(u8::from(*strain) as i64));
                    s.insert("site".into(), site.as_str().into());
                }
                InitSpec::Pair { site1, site2 } => {
                    s.insert("site1".into(), site1.as_str().into());
                    s.insert("site2".into(), site2.as_str().into());
                }
                InitSpec::Product { p1, p2 } => {
                    s.insert("p1".into(), (*p1).into());
                    s.insert("p2".into(), (*p2).into());
                }
                InitSpec::Split => {}
                InitSpec::Density { u1, u2 } => {
                    s.insert("u1".into(), (*u1).into());
                    s.insert("u2".into(), (*u2).into());
                }
            }
            root.insert("init".into(), s.into());
        }

        let mut s = Table::new();
        match &self.detail {
            KindSpec::None => {}
            KindSpec::Ode(o) => {
                s.insert("dt".into(), o.dt.into());
                s.insert("stride".into(), int(o.stride));
            }
            KindSpec::Critical(c) => {
                let target = match c.target {
                    CriticalKind::LambdaC => "lambda_c",
                    CriticalKind::LambdaCc => "lambda_cc",
                };
                s.insert("target".into(), target.into());
                s.insert("bracket".into(), floats(&[c.bracket.0, c.bracket.1]));
                s.insert("tolerance".into(), c.tolerance.into());
                s.insert("window_fraction".into(), c.window_fraction.into());
                s.insert("alive_lower".into(), c.alive_lower.into());
                s.insert("dead_upper".into(), c.dead_upper.into());
                s.insert("max_replicates".into(), int(c.max_replicates));
            }
            KindSpec::Coexist(c) => insert_pair(&mut s, &c.pair),
            KindSpec::Regime(r) => {
                s.insert("lambdas".into(), floats(&r.lambdas));
                s.insert("window_fraction".into(), r.window_fraction.into());
            }
            KindSpec::CrowdOut(c) => {
                s.insert("site".into(), c.site.as_str().into());
                insert_pair(&mut s, &c.pair);
            }
            KindSpec::Oracle(o) => {
                s.insert("max_tv".into(), o.max_tv.into());
            }
        }
        if let Some(name) = self.kind.section() {
            root.insert(name.into(), s.into());
        }
        if let Some(sw) = &self.sweep {
            let mut s = Table::new();
            s.insert("key".into(), sw.key.as_str().into());
            s.insert("values".into(), floats(&sw.values));
            root.insert("sweep".into(), s.into());
        }
        root
    }
}

fn int(v: usize) -> Value {
    Value::Integer(v as i64)
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
}

fn strings(v: &[String]) -> Value {
    Value::Array(v.iter().map(|x| Value::String(x.clone())).collect())
}

fn insert_pair(s: &mut Table, pair: &Option<PairSpec>) {
    if let Some(p) = pair {
        s.insert("pair_x".into(), p.x.as_str().into());
        s.insert("pair_y".into(), p.y.as_str().into());
    }
}

/// Collects errors while walking a document.
#[derive(Default)]
struct Reader {
    errors: Vec<ConfigError>,
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

impl Reader {
    fn err(&mut self, path: impl Into<String>, reason: impl Into<String>) {
        self.errors.push(ConfigError {
            path: path.into(),
            reason: reason.into(),
        });
    }

    fn allow(&mut self, t: &Table, prefix: &str, allowed: &[&str], context: &str) {
        for k in t.keys() {
            if !allowed.contains(&k.as_str()) {
                self.err(join(prefix, k), format!("unknown key{context}"));
            }
        }
    }

    fn table<'t>(&mut self, root: &'t Table, key: &str, required: bool) -> Option<&'t Table> {
        match root.get(key) {
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.err(key, "expected a section");
                None
            }
            None => {
                if required {
                    self.err(key, "missing section");
                }
                None
            }
        }
    }

    fn f64_value(&mut self, path: &str, v: &Value) -> Option<f64> {
        match v {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.err(path, format!("expected a number, got {}", v.type_str()));
                None
            }
        }
    }

    fn f64(&mut self, t: &Table, prefix: &str, key: &str, default: Option<f64>) -> Option<f64> {
        let path = join(prefix, key);
        match t.get(key) {
            Some(v) => self.f64_value(&path, v),
            None if default.is_some() => default,
            None => {
                self.err(path, "missing required key");
                None
            }
        }
    }

    fn uint(&mut self, t: &Table, prefix: &str, key: &str, default: Option<u64>) -> Option<u64> {
        let path = join(prefix, key);
        match t.get(key) {
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
            Some(Value::Integer(i)) => {
                self.err(path, format!("must be a nonnegative integer, got {i}"));
                None
            }
            Some(v) => {
                self.err(path, format!("expected an integer, got {}", v.type_str()));
                None
            }
            None if default.is_some() => default,
            None => {
                self.err(path, "missing required key");
                None
            }
        }
    }

    fn opt_uint(&mut self, t: &Table, prefix: &str, key: &str) -> Option<Option<u64>> {
        if t.contains_key(key) {
            self.uint(t, prefix, key, None).map(Some)
        } else {
            Some(None)
        }
    }

    fn string(&mut self, t: &Table, prefix: &str, key: &str, default: Option<&str>) -> Option<String> {
        let path = join(prefix, key);
        match t.get(key) {
            Some(Value::String(s)) => Some(s.clone()),
            Some(v) => {
                self.err(path, format!("expected a string, got {}", v.type_str()));
                None
            }
            None => match default {
                Some(d) => Some(d.to_string()),
                None => {
                    self.err(path, "missing required key");
                    None
                }
            },
        }
    }

    fn f64_list(&mut self, t: &Table, prefix: &str, key: &str, default: Option<Vec<f64>>) -> Option<Vec<f64>> {
        let path = join(prefix, key);
        match t.get(key) {
            Some(Value::Array(items)) => {
                let before = self.errors.len();
                let v: Vec<f64> = items
                    .iter()
                    .enumerate()
                    .filter_map(|(i, x)| self.f64_value(&format!("{path}[{i}]"), x))
                    .collect();
                (self.errors.len() == before).then_some(v)
            }
            Some(v) => {
                self.err(path, format!("expected a list of numbers, got {}", v.type_str()));
                None
            }
            None if default.is_some() => default,
            None => {
                self.err(path, "missing required key");
                None
            }
        }
    }

    fn string_list(&mut self, t: &Table, prefix: &str, key: &str) -> Option<Vec<String>> {
        let path = join(prefix, key);
        match t.get(key) {
            Some(Value::Array(items)) => {
                let mut out = Vec::new();
                for (i, x) in items.iter().enumerate() {
                    match x {
                        Value::String(s) => out.push(s.clone()),
                        _ => self.err(format!("{path}[{i}]"), "expected a string"),
                    }
                }
                Some(out)
            }
            Some(v) => {
                self.err(path, format!("expected a list of strings, got {}", v.type_str()));
                None
            }
            None => Some(Vec::new()),
        }
    }

    fn finite(&mut self, path: &str, v: Option<f64>, rule: &str, ok: impl Fn(f64) -> bool) {
        if let Some(x) = v {
            if !(x.is_finite() && ok(x)) {
                self.err(path, format!("{rule}, got {x}"));
            }
        }
    }

    fn site(&mut self, topology: Option<&Topology>, path: &str, text: &str) {
        if let Some(t) = topology {
            if let Err(e) = t.parse_site(text) {
                self.err(path, e.to_string());
            }
        }
    }
}

fn from_table(root: &Table, default_kind: Option<ExperimentKind>) -> Result<ExperimentConfig, ConfigErrors> {
    let mut r = Reader::default();

    let kind = match root.get("kind") {
        Some(Value::String(name)) => match ExperimentKind::from_name(name) {
            Some(k) if default_kind.is_none_or(|d| d == k) => Some(k),
            Some(k) => {
                r.err("kind", format!("document is a {k} experiment, but {} was requested", default_kind.unwrap()));
                None
            }
            None => {
                let names: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
                r.err("kind", format!("unknown experiment kind `{name}`; expected one of {}", names.join(", ")));
                None
            }
        },
        Some(v) => {
            r.err("kind", format!("expected a string, got {}", v.type_str()));
            None
        }
        None if default_kind.is_some() => default_kind,
        None => {
            r.err("kind", "missing required key");
            None
        }
    };
    let Some(kind) = kind else {
        return Err(ConfigErrors(r.errors));
    };

    let mut top = vec!["kind", "master_seed", "out", "parallelism", "params", "sweep"];
    if kind != ExperimentKind::Ode {
        top.push("replicates");
        top.push("topology");
    }
    if !kind.sets_own_lambda() {
        top.push("init");
    }
    if let Some(s) = kind.section() {
        top.push(s);
    }
    r.allow(root, "", &top, &format!(" for a {kind} experiment"));

    let replicates = if kind == ExperimentKind::Ode {
        Some(0)
    } else {
        let n = r.uint(root, "", "replicates", None);
        if let Some(n) = n {
            if (n as usize) < kind.min_replicates() {
                r.err("replicates", format!("need at least {}, got {n}", kind.min_replicates()));
            }
        }
        n
    };
    let master_seed = r.opt_uint(root, "", "master_seed");
    let out = if root.contains_key("out") {
        r.string(root, "", "out", None).map(Some)
    } else {
        Some(None)
    };
    let parallelism = r.opt_uint(root, "", "parallelism");
    if let Some(Some(0)) = parallelism {
        r.err("parallelism", "must be at least 1");
    }

    // Topology
    let mut topology_spec = None;
    let mut topology = None;
    if kind.uses_lattice() {
        if let Some(t) = r.table(root, "topology", true) {
            r.allow(t, "topology", &["kind", "d", "extent"], "");
            let tk = r.string(t, "topology", "kind", None).and_then(|k| match k.as_str() {
                "torus" => Some(TopologyKind::Torus),
                "tree" => Some(TopologyKind::Tree),
                "path" => Some(TopologyKind::Path),
                other => {
                    r.err("topology.kind", format!("expected torus, tree or path, got `{other}`"));
                    None
                }
            });
            let d = r.uint(t, "topology", "d", Some(1));
            let extent = r.uint(t, "topology", "extent", None);
            if let (Some(kind), Some(d), Some(extent)) = (tk, d, extent) {
                if d > u32::MAX as u64 || extent > u32::MAX as u64 {
                    r.err("topology", "d and extent must fit in 32 bits");
                } else {
                    let spec = TopologySpec {
                        kind,
                        d: d as u32,
                        extent: extent as u32,
                    };
                    match spec.build() {
                        Ok(t) => {
                            topology = Some(t);
                            topology_spec = Some(spec);
                        }
                        Err(e) => r.err("topology", e.to_string()),
                    }
                }
            }
        }
    }
    let topo = topology.as_ref();

    // Params
    let mut params = None;
    if let Some(t) = r.table(root, "params", true) {
        let mut keys = vec!["t_max"];
        if kind != ExperimentKind::Critical {
            keys.extend(["delta1", "delta2"]);
        }
        if !kind.sets_own_lambda() {
            keys.extend(["lambda1", "lambda2"]);
        }
        if kind.uses_lattice() {
            keys.push("population_cap");
        }
        if kind.uses_samples() {
            keys.push("sample_times");
        }
        if kind == ExperimentKind::Simulate {
            keys.push("observe");
        }
        r.allow(t, "params", &keys, &format!(" for a {kind} experiment"));
        let (lambda1, lambda2) = if kind.sets_own_lambda() {
            (Some(0.0), Some(0.0))
        } else {
            (r.f64(t, "params", "lambda1", None), r.f64(t, "params", "lambda2", None))
        };
        let delta1 = r.f64(t, "params", "delta1", Some(1.0));
        let delta2 = r.f64(t, "params", "delta2", Some(1.0));
        let t_max = r.f64(t, "params", "t_max", None);
        for (k, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
            r.finite(&join("params", k), v, "must be nonnegative (>= 0)", |x| x >= 0.0);
        }
        for (k, v) in [("delta1", delta1), ("delta2", delta2)] {
            r.finite(&join("params", k), v, "must be positive (> 0)", |x| x > 0.0);
        }
        r.finite("params.t_max", t_max, "must be positive (> 0)", |x| x > 0.0);
        let sample_times = match t_max {
            Some(tm) if kind.uses_samples() => {
                let s = r.f64_list(t, "params", "sample_times", Some(vec![tm]));
                if let Some(s) = &s {
                    if s.is_empty() {
                        r.err("params.sample_times", "must not be empty");
                    }
                    if s.iter().any(|&x| !(0.0..=tm).contains(&x)) {
                        r.err("params.sample_times", "every sample time must lie in [0, t_max]");
                    }
                    if s.windows(2).any(|w| w[1] <= w[0]) {
                        r.err("params.sample_times", "must be strictly increasing");
                    }
                }
                s
            }
            _ => Some(Vec::new()),
        };
        let observe = r.string_list(t, "params", "observe");
        if let Some(obs) = &observe {
            for (i, s) in obs.iter().enumerate() {
                r.site(topo, &format!("params.observe[{i}]"), s);
            }
        }
        let population_cap = r.opt_uint(t, "params", "population_cap");
        if let Some(Some(0)) = population_cap {
            r.err("params.population_cap", "must be at least 1");
        }
        if let (Some(lambda1), Some(lambda2), Some(delta1), Some(delta2), Some(t_max), Some(sample_times), Some(observe), Some(population_cap)) =
            (lambda1, lambda2, delta1, delta2, t_max, sample_times, observe, population_cap)
        {
            params = Some(ParamsSpec {
                lambda1,
                lambda2,
                delta1,
                delta2,
                t_max,
                sample_times,
                observe,
                population_cap: population_cap.map(|c| c as usize),
            });
        }
    }

    // Init
    let mut init = None;
    if !kind.sets_own_lambda() {
        if let Some(t) = r.table(root, "init", true) {
            init = read_init(&mut r, t, kind, topo);
        }
    }

    let detail = read_detail(&mut r, root, kind, topo, replicates);

    // Cross-field checks that need the kind-specific section.
    if let (Some(init), KindSpec::CrowdOut(_)) = (&init, &detail) {
        if !init.may_have_strain2() {
            r.err("init", "crowd-out conditions on strain 2, which this initial state never contains");
        }
    }
    if let (Some(init), ExperimentKind::Coexist) = (&init, kind) {
        if !init.has_both_strains() {
            r.err("init", "coexistence needs both strains present initially");
        }
    }

    let sweep = match r.table(root, "sweep", false) {
        Some(t) => {
            r.allow(t, "sweep", &["key", "values"], "");
            let key = r.string(t, "sweep", "key", None);
            if let Some(k) = &key {
                if !SWEEPABLE.contains(&k.as_str()) {
                    r.err("sweep.key", format!("cannot sweep `{k}`; sweepable keys are {}", SWEEPABLE.join(", ")));
                }
            }
            let values = r.f64_list(t, "sweep", "values", None);
            if values.as_ref().is_some_and(|v| v.is_empty()) {
                r.err("sweep.values", "must not be empty");
            }
            match (key, values) {
                (Some(key), Some(values)) => Some(Some(SweepSpec { key, values })),
                _ => None,
            }
        }
        None => Some(None),
    };

    if !r.errors.is_empty() {
        return Err(ConfigErrors(r.errors));
    }
    let config = ExperimentConfig {
        kind,
        topology: topology_spec,
        params: params.expect("params read without errors"),
        init,
        replicates: replicates.expect("replicates read without errors") as usize,
        master_seed: master_seed.expect("seed read without errors"),
        out: out.expect("out read without errors"),
        parallelism: parallelism.expect("parallelism read without errors").map(|p| p as usize),
        detail,
        sweep: sweep.expect("sweep read without errors"),
    };
    if let Some(sw) = &config.sweep {
        let (section, key) = sw.key.split_once('.').expect("sweep keys are dotted");
        let applies = matches!(config.to_table().get(section), Some(Value::Table(t)) if t.contains_key(key));
        if !applies {
            return Err(ConfigErrors::single(
                "sweep.key",
                format!("`{}` does not apply to a {kind} experiment with this initial state", sw.key),
            ));
        }
        config.expand()?;
    }
    Ok(config)
}

fn read_init(r: &mut Reader, t: &Table, kind: ExperimentKind, topo: Option<&Topology>) -> Option<InitSpec> {
    let ik = r.string(t, "init", "kind", None)?;
    let allowed: &[&str] = match ik.as_str() {
        "single" => &["kind", "strain", "site"],
        "pair" => &["kind", "site1", "site2"],
        "product" => &["kind", "p1", "p2"],
        "split" => &["kind"],
        "density" => &["kind", "u1", "u2"],
        other => {
            r.err("init.kind", format!("expected single, pair, product, split or density, got `{other}`"));
            return None;
        }
    };
    r.allow(t, "init", allowed, &format!(" for a {ik} initial state"));
    if (kind == ExperimentKind::Ode) != (ik == "density") {
        let reason = if kind == ExperimentKind::Ode {
            "mean-field runs need a density initial state".to_string()
        } else {
            format!("a density initial state only applies to ode experiments, not {kind}")
        };
        r.err("init.kind", reason);
        return None;
    }
    let fixed_only = kind == ExperimentKind::OracleCheck && ik == "product";
    if fixed_only {
        r.err("init.kind", "the exact law needs a deterministic initial state");
    }
    match ik.as_str() {
        "single" => {
            let strain = r.uint(t, "init", "strain", Some(1)).and_then(|s| {
                let s = Strain::try_from(s.min(255) as u8);
                if s.is_err() {
                    r.err("init.strain", "must be 1 or 2");
                }
                s.ok()
            });
            let site = r.string(t, "init", "site", Some("origin"));
            if let Some(s) = &site {
                r.site(topo, "init.site", s);
            }
            Some(InitSpec::Single { strain: strain?, site: site? })
        }
        "pair" => {
            let site1 = r.string(t, "init", "site1", None);
            let site2 = r.string(t, "init", "site2", None);
            if let Some(s) = &site1 {
                r.site(topo, "init.site1", s);
            }
            if let Some(s) = &site2 {
                r.site(topo, "init.site2", s);
            }
            if let (Some(a), Some(b), Some(t)) = (&site1, &site2, topo) {
                if let (Ok(x), Ok(y)) = (t.parse_site(a), t.parse_site(b)) {
                    if x == y {
                        r.err("init", "site1 and site2 must differ");
                    }
                }
            }
            Some(InitSpec::Pair { site1: site1?, site2: site2? })
        }
        "product" => {
            let p1 = r.f64(t, "init", "p1", None);
            let p2 = r.f64(t, "init", "p2", None);
            r.finite("init.p1", p1, "must be a probability in [0, 1]", |x| (0.0..=1.0).contains(&x));
            r.finite("init.p2", p2, "must be a probability in [0, 1]", |x| (0.0..=1.0).contains(&x));
            if let (Some(a), Some(b)) = (p1, p2) {
                if a + b > 1.0 {
                    r.err("init", format!("p1 + p2 = {} exceeds 1 (simplex constraint p1 + p2 <= 1)", a + b));
                }
            }
            if let Some(t) = topo {
                if t.site_count() > PRODUCT_INIT_MAX_SITES {
                    r.err("init.kind", format!("a product initial state needs at most {PRODUCT_INIT_MAX_SITES} sites, topology has {}", t.site_count()));
                }
            }
            Some(InitSpec::Product { p1: p1?, p2: p2? })
        }
        "split" => {
            if topo.is_some_and(|t| !t.is_tree()) {
                r.err("init.kind", "a split initial state needs a tree topology");
            }
            Some(InitSpec::Split)
        }
        _ => {
            let u1 = r.f64(t, "init", "u1", None);
            let u2 = r.f64(t, "init", "u2", None);
            r.finite("init.u1", u1, "must be a density in [0, 1]", |x| (0.0..=1.0).contains(&x));
            r.finite("init.u2", u2, "must be a density in [0, 1]", |x| (0.0..=1.0).contains(&x));
            if let (Some(a), Some(b)) = (u1, u2) {
                if a + b > 1.0 {
                    r.err("init", format!("u1 + u2 = {} exceeds 1 (simplex constraint u1 + u2 <= 1)", a + b));
                }
            }
            Some(InitSpec::Density { u1: u1?, u2: u2? })
        }
    }
}

fn window_fraction(r: &mut Reader, t: &Table, prefix: &str) -> Option<f64> {
    let w = r.f64(t, prefix, "window_fraction", Some(0.5));
    r.finite(&join(prefix, "window_fraction"), w, "must lie in (0, 1]", |x| x > 0.0 && x <= 1.0);
    w
}

fn read_pair(r: &mut Reader, t: &Table, prefix: &str, topo: Option<&Topology>) -> Option<Option<PairSpec>> {
    match (t.contains_key("pair_x"), t.contains_key("pair_y")) {
        (false, false) => Some(None),
        (true, true) => {
            let x = r.string(t, prefix, "pair_x", None);
            let y = r.string(t, prefix, "pair_y", None);
            if let Some(s) = &x {
                r.site(topo, &join(prefix, "pair_x"), s);
            }
            if let Some(s) = &y {
                r.site(topo, &join(prefix, "pair_y"), s);
            }
            Some(Some(PairSpec { x: x?, y: y? }))
        }
        _ => {
            r.err(prefix, "pair_x and pair_y go together");
            None
        }
    }
}

fn read_detail(
    r: &mut Reader,
    root: &Table,
    kind: ExperimentKind,
    topo: Option<&Topology>,
    replicates: Option<u64>,
) -> KindSpec {
    let Some(name) = kind.section() else {
        return KindSpec::None;
    };
    let empty = Table::new();
    let required = matches!(kind, ExperimentKind::Critical | ExperimentKind::Regime);
    let t = r.table(root, name, required).unwrap_or(&empty);
    match kind {
        ExperimentKind::Ode => {
            r.allow(t, name, &["dt", "stride"], "");
            let dt = r.f64(t, name, "dt", Some(strainwars_core::meanfield::DEFAULT_DT));
            r.finite("ode.dt", dt, "must be positive (> 0)", |x| x > 0.0);
            let stride = r.uint(t, name, "stride", Some(1));
            if stride == Some(0) {
                r.err("ode.stride", "must be at least 1");
            }
            match (dt, stride) {
                (Some(dt), Some(stride)) => KindSpec::Ode(OdeSpec {
                    dt,
                    stride: stride as usize,
                }),
                _ => KindSpec::None,
            }
        }
        ExperimentKind::Critical => {
            r.allow(
                t,
                name,
                &["target", "bracket", "tolerance", "window_fraction", "alive_lower", "dead_upper", "max_replicates"],
                "",
            );
            let target = r.string(t, name, "target", Some("lambda_c")).and_then(|s| match s.as_str() {
                "lambda_c" => Some(CriticalKind::LambdaC),
                "lambda_cc" => Some(CriticalKind::LambdaCc),
                other => {
                    r.err("critical.target", format!("expected lambda_c or lambda_cc, got `{other}`"));
                    None
                }
            });
            let bracket = r.f64_list(t, name, "bracket", None).and_then(|b| {
                if b.len() != 2 || !(b[0] >= 0.0 && b[0] < b[1] && b[1].is_finite()) {
                    r.err("critical.bracket", "need two numbers [lo, hi] with 0 <= lo < hi");
                    None
                } else {
                    Some((b[0], b[1]))
                }
            });
            let tolerance = r.f64(t, name, "tolerance", None);
            r.finite("critical.tolerance", tolerance, "must be positive (> 0)", |x| x > 0.0);
            let wf = window_fraction(r, t, name);
            let defaults = DecisionRule::default();
            let alive_lower = r.f64(t, name, "alive_lower", Some(defaults.alive_lower));
            let dead_upper = r.f64(t, name, "dead_upper", Some(defaults.dead_upper));
            if let (Some(a), Some(d)) = (alive_lower, dead_upper) {
                if !(0.0 < d && d < a && a < 1.0) {
                    r.err("critical", "need 0 < dead_upper < alive_lower < 1");
                }
            }
            let max_replicates = r.uint(t, name, "max_replicates", Some(defaults.max_replicates as u64));
            if let (Some(m), Some(n)) = (max_replicates, replicates) {
                if m < n {
                    r.err("critical.max_replicates", format!("must be at least replicates ({n}), got {m}"));
                }
            }
            match (target, bracket, tolerance, wf, alive_lower, dead_upper, max_replicates) {
                (Some(target), Some(bracket), Some(tolerance), Some(window_fraction), Some(alive_lower), Some(dead_upper), Some(m)) => {
                    KindSpec::Critical(CriticalSpec {
                        target,
                        bracket,
                        tolerance,
                        window_fraction,
                        alive_lower,
                        dead_upper,
                        max_replicates: m as usize,
                    })
                }
                _ => KindSpec::None,
            }
        }
        ExperimentKind::Regime => {
            r.allow(t, name, &["lambdas", "window_fraction"], "");
            if topo.is_some_and(|t| !t.is_tree()) {
                r.err("topology.kind", "regime classification needs a tree topology");
            }
            let lambdas = r.f64_list(t, name, "lambdas", None);
            if let Some(ls) = &lambdas {
                if ls.is_empty() {
                    r.err("regime.lambdas", "must not be empty");
                }
                for (i, &l) in ls.iter().enumerate() {
                    r.finite(&format!("regime.lambdas[{i}]"), Some(l), "must be nonnegative (>= 0)", |x| x >= 0.0);
                }
            }
            let wf = window_fraction(r, t, name);
            match (lambdas, wf) {
                (Some(lambdas), Some(window_fraction)) => KindSpec::Regime(RegimeSpec {
                    lambdas,
                    window_fraction,
                }),
                _ => KindSpec::None,
            }
        }
        ExperimentKind::CrowdOut => {
            r.allow(t, name, &["site", "pair_x", "pair_y"], "");
            let site = r.string(t, name, "site", Some("origin"));
            if let Some(s) = &site {
                r.site(topo, "crowd_out.site", s);
            }
            match (site, read_pair(r, t, name, topo)) {
                (Some(site), Some(pair)) => KindSpec::CrowdOut(CrowdOutSpec { site, pair }),
                _ => KindSpec::None,
            }
        }
        ExperimentKind::Coexist => {
            r.allow(t, name, &["pair_x", "pair_y"], "");
            match read_pair(r, t, name, topo) {
                Some(pair) => KindSpec::Coexist(CoexistSpec { pair }),
                None => KindSpec::None,
            }
        }
        ExperimentKind::OracleCheck => {
            r.allow(t, name, &["max_tv"], "");
            if let Some(t) = topo {
                if t.site_count() > ORACLE_MAX_SITES as u128 {
                    r.err("topology", format!("the exact law needs at most {ORACLE_MAX_SITES} sites, topology has {}", t.site_count()));
                }
            }
            let max_tv = r.f64(t, name, "max_tv", Some(0.01));
            r.finite("oracle.max_tv", max_tv, "must lie in (0, 1]", |x| x > 0.0 && x <= 1.0);
            max_tv.map_or(KindSpec::None, |max_tv| KindSpec::Oracle(OracleSpec { max_tv }))
        }
        ExperimentKind::Simulate | ExperimentKind::Survival => KindSpec::None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ODE: &str = r#"
kind = "ode"

[params]
lambda1 = 2.0
lambda2 = 3.0
t_max = 50.0

[init]
kind = "density"
u1 = 0.01
u2 = 0.6667
"#;

    fn lattice(extra: &str) -> String {
        format!(
            r#"
kind = "survival"
replicates = 200
master_seed = 5

[topology]
kind = "torus"
d = 1
extent = 50

[params]
lambda1 = 2.0
lambda2 = 0.0
t_max = 10.0

[init]
kind = "single"
strain = 1
site = "origin"
{extra}"#
        )
    }

    #[test]
    fn minimal_ode_round_trips() {
        let c = parse_config(ODE).unwrap();
        assert_eq!(c.kind, ExperimentKind::Ode);
        assert_eq!(c.params.delta1, 1.0);
        assert_eq!(c.detail, KindSpec::Ode(OdeSpec { dt: 1e-3, stride: 1 }));
        let again = parse_config(&c.to_toml()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_toml(), c.to_toml());
    }

    #[test]
    fn negative_lambda_is_named() {
        let e = parse_config(&ODE.replace("lambda1 = 2.0", "lambda1 = -1.0")).unwrap_err();
        assert!(e.mentions("params.lambda1"), "{e}");
        assert!(e.to_string().contains("nonnegative"));
    }

    #[test]
    fn simplex_violation_is_named() {
        let text = lattice("").replace(
            "kind = \"single\"\nstrain = 1\nsite = \"origin\"",
            "kind = \"product\"\np1 = 0.6\np2 = 0.6",
        );
        let e = parse_config(&text).unwrap_err();
        assert!(e.to_string().contains("simplex"), "{e}");
    }

    #[test]
    fn every_error_is_reported() {
        let text = lattice("bogus = 1\n")
            .replace("lambda1 = 2.0", "lambda1 = -2.0")
            .replace("t_max = 10.0", "t_max = \"ten\"")
            .replace("replicates = 200", "replicates = 3")
            .replace("site = \"origin\"", "site = \"north\"");
        let e = parse_config(&text).unwrap_err();
        for path in ["params.lambda1", "params.t_max", "replicates", "init.bogus", "init.site"] {
            assert!(e.mentions(path), "missing {path} in\n{e}");
        }
    }

    #[test]
    fn unknown_keys_and_sections_rejected() {
        let e = parse_config(&format!("{ODE}\n[critical]\ntolerance = 0.1\n")).unwrap_err();
        assert!(e.mentions("critical"));
        let e = parse_config(&ODE.replace("t_max = 50.0", "t_max = 50.0\nsample_times = [1.0]")).unwrap_err();
        assert!(e.mentions("params.sample_times"));
    }

    #[test]
    fn kind_from_caller() {
        let text = ODE.replace("kind = \"ode\"\n", "");
        assert!(parse_config(&text).unwrap_err().mentions("kind"));
        assert_eq!(parse_config_as(&text, Some(ExperimentKind::Ode)).unwrap().kind, ExperimentKind::Ode);
        assert!(parse_config_as(ODE, Some(ExperimentKind::Simulate)).unwrap_err().mentions("kind"));
    }

    #[test]
    fn sweeps_expand_in_order() {
        let text = lattice("\n[sweep]\nkey = \"params.lambda1\"\nvalues = [1.0, 2.5, 3.0]\n");
        let c = parse_config(&text).unwrap();
        let subs = c.expand().unwrap();
        assert_eq!(subs.iter().map(|s| s.params.lambda1).collect::<Vec<_>>(), [1.0, 2.5, 3.0]);
        assert!(subs.iter().all(|s| s.sweep.is_none()));
        assert_eq!(parse_config(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn sweep_values_are_validated() {
        let text = lattice("\n[sweep]\nkey = \"params.lambda1\"\nvalues = [1.0, -1.0]\n");
        let e = parse_config(&text).unwrap_err();
        assert!(e.mentions("sweep.values[1]"), "{e}");
        let text = lattice("\n[sweep]\nkey = \"params.observe\"\nvalues = [1.0]\n");
        assert!(parse_config(&text).unwrap_err().mentions("sweep.key"));
    }

    #[test]
    fn kind_specific_rules() {
        let split = lattice("").replace("kind = \"single\"\nstrain = 1\nsite = \"origin\"", "kind = \"split\"");
        assert!(parse_config(&split).unwrap_err().mentions("init.kind"));
        let coexist = lattice("").replace("kind = \"survival\"", "kind = \"coexist\"");
        assert!(parse_config(&coexist).unwrap_err().mentions("init"));
        let regime = lattice("").replace("kind = \"survival\"", "kind = \"regime\"");
        let e = parse_config(&regime).unwrap_err();
        assert!(e.mentions("regime") && e.mentions("init") && e.mentions("params.lambda1"), "{e}");
    }

    #[test]
    fn syntax_errors_are_config_errors() {
        assert!(parse_config("kind = ").is_err());
    }
}
