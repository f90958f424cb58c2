//! Running one experiment: compute every artifact in memory, then write the
//! files and the manifest.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use strainwars_core::contact_process::{init_pair, init_single, init_split, SimParams, SimResult};
use strainwars_core::estimators::{
    classify_regime, coexistence_probability, crowd_out_curve, estimate_lambda_c, estimate_lambda_cc,
    exact_small_graph_distribution, pair_coexistence_curve, survival_probability, total_variation,
    CriticalKind, CriticalSearch, DecisionRule, EstimateCI, Experiment, Initial, CROWD_OUT_CONDITION,
};
use strainwars_core::meanfield::{self, MeanFieldState, StrainParams};
use strainwars_core::replicate::{replicate_seed, with_parallelism};
use strainwars_core::topology::{SiteId, Topology};

use crate::config::{ConfigErrors, ExperimentConfig, ExperimentKind, InitSpec, KindSpec, ParamsSpec, PairSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug)]
pub enum RunError {
    Config(ConfigErrors),
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "configuration error:\n{e}"),
            RunError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigErrors> for RunError {
    fn from(e: ConfigErrors) -> Self {
        RunError::Config(e)
    }
}

impl From<strainwars_core::Error> for RunError {
    fn from(e: strainwars_core::Error) -> Self {
        RunError::Runtime(e.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seed: u64,
    /// Output files are named `<prefix>.<name>`.
    pub prefix: PathBuf,
    pub parallelism: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BoundaryStats {
    pub replicates: usize,
    pub contacts: usize,
}

impl BoundaryStats {
    fn add(&mut self, other: BoundaryStats) {
        self.replicates += other.replicates;
        self.contacts += other.contacts;
    }

    fn of(ci: &EstimateCI) -> Self {
        BoundaryStats {
            replicates: ci.replicates,
            contacts: ci.boundary_contacts,
        }
    }
}

/// Everything one (sub-)run produces, before anything touches the disk.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
    pub boundary: BoundaryStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub kind: String,
    pub master_seed: u64,
    pub parallelism: usize,
    pub wall_seconds: f64,
    pub sub_runs: usize,
    pub boundary_contact: BoundaryReport,
    pub files: Vec<FileEntry>,
    /// The effective configuration, as a config document.
    pub config: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryReport {
    pub replicates: usize,
    pub contacts: usize,
    pub fraction: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Seed of sweep sub-run `index`; a run without a sweep uses the master seed.
pub fn sub_run_seed(master: u64, index: usize, swept: bool) -> u64 {
    if swept {
        replicate_seed(master, index as u64)
    } else {
        master
    }
}

/// Runs `config` and writes its outputs. Nothing is left on disk if any step
/// fails.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunManifest, RunError> {
    let started = Instant::now();
    let subs = config.expand()?;
    let swept = config.sweep.is_some();
    let parts = with_parallelism(opts.parallelism, || {
        subs.iter()
            .enumerate()
            .map(|(i, c)| compute(c, sub_run_seed(opts.seed, i, swept)))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut outputs = Vec::new();
    let mut boundary = BoundaryStats::default();
    for (i, part) in parts.into_iter().enumerate() {
        boundary.add(part.boundary);
        for (name, bytes) in part.files {
            let name = if swept { format!("sweep{i}.{name}") } else { name };
            outputs.push((output_path(&opts.prefix, &name), bytes));
        }
    }

    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| {
        let mut files = Vec::new();
        for (path, bytes) in &outputs {
            write_file(path, bytes, &mut written)?;
            files.push(FileEntry {
                path: path.display().to_string(),
                bytes: bytes.len(),
                sha256: sha256_hex(bytes),
            });
        }
        let mut echo = config.clone();
        echo.master_seed = Some(opts.seed);
        echo.parallelism = Some(opts.parallelism);
        echo.out = Some(opts.prefix.display().to_string());
        let manifest = RunManifest {
            tool: "strainwars",
            version: VERSION,
            kind: config.kind.name().to_string(),
            master_seed: opts.seed,
            parallelism: opts.parallelism,
            wall_seconds: started.elapsed().as_secs_f64(),
            sub_runs: subs.len(),
            boundary_contact: BoundaryReport {
                replicates: boundary.replicates,
                contacts: boundary.contacts,
                fraction: if boundary.replicates == 0 {
                    0.0
                } else {
                    boundary.contacts as f64 / boundary.replicates as f64
                },
            },
            files,
            config: echo.to_toml(),
        };
        let path = output_path(&opts.prefix, "manifest.json");
        write_file(&path, &json_bytes(&manifest), &mut written)?;
        Ok(manifest)
    })();
    if result.is_err() {
        for p in written {
            let _ = fs::remove_file(p);
        }
    }
    result
}

pub fn output_path(prefix: &Path, name: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(name);
    PathBuf::from(s)
}

fn write_file(path: &Path, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<(), RunError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| RunError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| RunError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    written.push(path.to_path_buf());
    Ok(())
}

fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("output records serialize");
    v.push(b'\n');
    v
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn num(x: f64) -> String {
    format!("{x}")
}

const SURVIVAL_PROXY: &str = "survival: infected set nonempty at t_max";
const SATURATION_PROXY: &str =
    "runs reaching population_cap simultaneously infected sites stop there, count as surviving, and repeat the saturated state at later observations";

fn recurrence_proxy(w: f64) -> String {
    format!("recurrence: origin infected at some moment of [(1 - {w}) t_max, t_max]")
}

#[derive(Serialize)]
struct ParamsEcho {
    lambda1: f64,
    lambda2: f64,
    delta1: f64,
    delta2: f64,
    t_max: f64,
    population_cap: Option<usize>,
}

impl ParamsEcho {
    fn of(p: &ParamsSpec) -> Self {
        ParamsEcho {
            lambda1: p.lambda1,
            lambda2: p.lambda2,
            delta1: p.delta1,
            delta2: p.delta2,
            t_max: p.t_max,
            population_cap: p.population_cap,
        }
    }
}

#[derive(Serialize)]
struct EstimateRecord {
    quantity: String,
    params: ParamsEcho,
    #[serde(skip_serializing_if = "Option::is_none")]
    time: Option<f64>,
    point: f64,
    lower: f64,
    upper: f64,
    successes: usize,
    replicates: usize,
    seed: u64,
    conditioning: Option<String>,
    boundary_contacts: usize,
    proxies: Vec<String>,
}

impl EstimateRecord {
    fn new(quantity: impl Into<String>, params: &ParamsSpec, ci: &EstimateCI, seed: u64, proxies: Vec<String>) -> Self {
        EstimateRecord {
            quantity: quantity.into(),
            params: ParamsEcho::of(params),
            time: None,
            point: ci.point,
            lower: ci.lower,
            upper: ci.upper,
            successes: ci.successes,
            replicates: ci.replicates,
            seed,
            conditioning: ci.conditioning.clone(),
            boundary_contacts: ci.boundary_contacts,
            proxies,
        }
    }

    fn at(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }
}

fn sim_params(p: &ParamsSpec, topology: &Topology) -> Result<SimParams, RunError> {
    let observe = p
        .observe
        .iter()
        .map(|s| topology.parse_site(s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SimParams {
        lambda1: p.lambda1,
        lambda2: p.lambda2,
        delta1: p.delta1,
        delta2: p.delta2,
        t_max: p.t_max,
        sample_times: if p.sample_times.is_empty() { vec![p.t_max] } else { p.sample_times.clone() },
        observe,
        window: None,
        audit_every: None,
        population_cap: p.population_cap,
    })
}

fn initial(init: &InitSpec, topology: &Topology) -> Result<Initial, RunError> {
    Ok(match init {
        InitSpec::Single { strain, site } => init_single(topology, *strain, topology.parse_site(site)?)?.into(),
        InitSpec::Pair { site1, site2 } => {
            init_pair(topology, topology.parse_site(site1)?, topology.parse_site(site2)?)?.into()
        }
        InitSpec::Product { p1, p2 } => Initial::Product { p1: *p1, p2: *p2 },
        InitSpec::Split => init_split(topology)?.into(),
        InitSpec::Density { .. } => {
            return Err(RunError::Runtime("density initial states only drive mean-field runs".into()))
        }
    })
}

fn base_proxies(p: &ParamsSpec) -> Vec<String> {
    let mut v = Vec::new();
    if p.population_cap.is_some() {
        v.push(SATURATION_PROXY.to_string());
    }
    v
}

/// Computes the artifacts of one config that has no sweep.
pub fn compute(config: &ExperimentConfig, seed: u64) -> Result<Artifacts, RunError> {
    if config.kind == ExperimentKind::Ode {
        return compute_ode(config);
    }
    let topology = config.build_topology().expect("lattice kinds carry a topology");
    let p = &config.params;
    let params = sim_params(p, &topology)?;
    let init = config.init.as_ref().map(|i| initial(i, &topology)).transpose()?;
    let n = config.replicates;
    let mut out = Artifacts::default();

    match (&config.detail, config.kind) {
        (_, ExperimentKind::Simulate) => {
            let init = init.expect("simulate has an initial state");
            let exp = Experiment {
                topology: &topology,
                init: &init,
                params: &params,
            };
            let runs: Vec<SimResult> = exp.replicates(seed, 0, n, |r| r.clone())?;
            out.boundary = BoundaryStats {
                replicates: runs.len(),
                contacts: runs.iter().filter(|r| r.boundary_contact).count(),
            };
            let records: Vec<_> = runs
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    json!({
                        "replicate": i,
                        "seed": r.seed,
                        "events": r.events,
                        "elapsed": r.elapsed,
                        "absorbed_at": r.absorbed_at,
                        "saturated_at": r.saturated_at,
                        "boundary_contact": r.boundary_contact,
                        "samples": r.samples,
                        "final_config": r.final_config.iter()
                            .map(|(s, k)| (topology.format_site(s), u8::from(k)))
                            .collect::<Vec<_>>(),
                    })
                })
                .collect();
            out.files.push((
                "results.json".into(),
                json_bytes(&json!({
                    "topology": topology.spec(),
                    "params": ParamsEcho::of(p),
                    "observe": p.observe,
                    "master_seed": seed,
                    "replicates": records,
                })),
            ));
            let mut header = vec!["replicate", "seed", "time", "count1", "count2", "boundary_contact"];
            let obs: Vec<String> = p.observe.iter().map(|s| format!("state@{s}")).collect();
            header.extend(obs.iter().map(String::as_str));
            let rows = runs.iter().enumerate().flat_map(|(i, r)| {
                r.samples.iter().map(move |s| {
                    let mut row = vec![
                        i.to_string(),
                        r.seed.to_string(),
                        num(s.time),
                        s.count1.to_string(),
                        s.count2.to_string(),
                        s.boundary_contact.to_string(),
                    ];
                    row.extend(s.observed.iter().map(|x| x.to_string()));
                    row
                })
            });
            out.files.push(("samples.csv".into(), csv_bytes(&header, rows)));
        }
        (_, ExperimentKind::Survival) => {
            let init = init.expect("survival has an initial state");
            let ci = survival_probability(&topology, &init, &params, n, seed)?;
            out.boundary = BoundaryStats::of(&ci);
            let mut proxies = vec![SURVIVAL_PROXY.to_string()];
            proxies.extend(base_proxies(p));
            let rec = EstimateRecord::new("survival_probability", p, &ci, seed, proxies).at(p.t_max);
            out.files.push(("estimate.json".into(), json_bytes(&[rec])));
        }
        (KindSpec::Critical(c), _) => {
            let search = CriticalSearch {
                bracket: c.bracket,
                tolerance: c.tolerance,
                rule: DecisionRule {
                    alive_lower: c.alive_lower,
                    dead_upper: c.dead_upper,
                    replicates: n,
                    max_replicates: c.max_replicates,
                },
                t_max: p.t_max,
                window_fraction: c.window_fraction,
                master_seed: seed,
                population_cap: p.population_cap,
            };
            let est = match c.target {
                CriticalKind::LambdaC => estimate_lambda_c(&topology, &search)?,
                CriticalKind::LambdaCc => estimate_lambda_cc(&topology, &search)?,
            };
            out.boundary = est.trace.iter().fold(BoundaryStats::default(), |mut b, pr| {
                b.add(BoundaryStats::of(&pr.estimate));
                b
            });
            let mut proxies = vec![match c.target {
                CriticalKind::LambdaC => SURVIVAL_PROXY.to_string(),
                CriticalKind::LambdaCc => recurrence_proxy(c.window_fraction),
            }];
            proxies.extend(base_proxies(p));
            out.files.push((
                "critical.json".into(),
                json_bytes(&json!({
                    "quantity": match c.target {
                        CriticalKind::LambdaC => "lambda_c",
                        CriticalKind::LambdaCc => "lambda_cc",
                    },
                    "topology": topology.spec(),
                    "lo": est.lo,
                    "hi": est.hi,
                    "bracket": [c.bracket.0, c.bracket.1],
                    "tolerance": c.tolerance,
                    "t_max": p.t_max,
                    "rule": search.rule,
                    "seed": seed,
                    "proxies": proxies,
                    "trace": est.trace,
                })),
            ));
            let rows = est.trace.iter().enumerate().map(|(i, pr)| {
                vec![
                    i.to_string(),
                    num(pr.lambda),
                    format!("{:?}", pr.decision).to_lowercase(),
                    pr.low_confidence.to_string(),
                    num(pr.estimate.point),
                    num(pr.estimate.lower),
                    num(pr.estimate.upper),
                    pr.estimate.replicates.to_string(),
                    pr.estimate.boundary_contacts.to_string(),
                ]
            });
            out.files.push((
                "trace.csv".into(),
                csv_bytes(
                    &["step", "lambda", "decision", "low_confidence", "point", "lower", "upper", "replicates", "boundary_contacts"],
                    rows,
                ),
            ));
        }
        (KindSpec::Regime(rg), _) => {
            let mut records = Vec::new();
            let mut rows = Vec::new();
            for &lambda in &rg.lambdas {
                let v = classify_regime(&topology, lambda, &params, rg.window_fraction, n, seed)?;
                out.boundary.add(BoundaryStats::of(&v.survival));
                let regime = serde_json::to_value(v.regime).expect("regime serializes");
                let regime = regime.as_str().expect("regime is a string").to_string();
                let lp = ParamsSpec {
                    lambda1: lambda,
                    ..p.clone()
                };
                let mut sp = vec![SURVIVAL_PROXY.to_string()];
                sp.extend(base_proxies(p));
                let mut rp = vec![recurrence_proxy(rg.window_fraction)];
                rp.extend(base_proxies(p));
                records.push(json!({
                    "lambda": lambda,
                    "regime": regime,
                    "survival": EstimateRecord::new("survival_probability", &lp, &v.survival, seed, sp),
                    "recurrence": EstimateRecord::new("root_recurrence_probability", &lp, &v.recurrence, seed, rp),
                }));
                rows.push(vec![
                    num(lambda),
                    regime,
                    num(v.survival.point),
                    num(v.survival.lower),
                    num(v.survival.upper),
                    num(v.recurrence.point),
                    num(v.recurrence.lower),
                    num(v.recurrence.upper),
                    v.survival.replicates.to_string(),
                    v.survival.boundary_contacts.to_string(),
                    num(v.survival.boundary_fraction()),
                ]);
            }
            out.files.push(("regimes.json".into(), json_bytes(&records)));
            out.files.push((
                "regimes.csv".into(),
                csv_bytes(
                    &[
                        "lambda",
                        "regime",
                        "survival_point",
                        "survival_lower",
                        "survival_upper",
                        "recurrence_point",
                        "recurrence_lower",
                        "recurrence_upper",
                        "replicates",
                        "boundary_contacts",
                        "boundary_fraction",
                    ],
                    rows,
                ),
            ));
        }
        (KindSpec::Coexist(cx), _) => {
            let init = init.expect("coexist has an initial state");
            let ci = coexistence_probability(&topology, &init, &params, p.t_max, n, seed)?;
            out.boundary = BoundaryStats::of(&ci);
            let mut proxies = vec!["coexistence: both strains present at t".to_string()];
            proxies.extend(base_proxies(p));
            let mut records = vec![json!(EstimateRecord::new("coexistence_probability", p, &ci, seed, proxies).at(p.t_max))];
            if let Some(pair) = &cx.pair {
                let (recs, csv) = pair_curve(&topology, &init, &params, p, pair, n, seed)?;
                records.extend(recs);
                out.files.push(("pair.csv".into(), csv));
            }
            out.files.push(("estimate.json".into(), json_bytes(&records)));
        }
        (KindSpec::CrowdOut(co), _) => {
            let init = init.expect("crowd-out has an initial state");
            let site = topology.parse_site(&co.site)?;
            let curve = crowd_out_curve(&topology, &init, &params, site, &p.sample_times, n, seed)?;
            if let Some(first) = curve.first() {
                out.boundary = BoundaryStats::of(&first.strain1);
            }
            let mut records = Vec::new();
            let mut rows = Vec::new();
            for pt in &curve {
                let proxies = {
                    let mut v = vec![format!("conditioning event `{CROWD_OUT_CONDITION}` stands in for strain 2 never dying out")];
                    v.extend(base_proxies(p));
                    v
                };
                records.push(json!(EstimateRecord::new(
                    format!("P(state({}) = 1 | {CROWD_OUT_CONDITION})", co.site),
                    p,
                    &pt.strain1,
                    seed,
                    proxies.clone()
                )
                .at(pt.time)));
                records.push(json!(EstimateRecord::new(
                    format!("P(state({}) = 2 | {CROWD_OUT_CONDITION})", co.site),
                    p,
                    &pt.strain2,
                    seed,
                    proxies
                )
                .at(pt.time)));
                rows.push(vec![
                    num(pt.time),
                    num(pt.strain1.point),
                    num(pt.strain1.lower),
                    num(pt.strain1.upper),
                    num(pt.strain2.point),
                    num(pt.strain2.lower),
                    num(pt.strain2.upper),
                    pt.strain1.replicates.to_string(),
                ]);
            }
            out.files.push((
                "curve.csv".into(),
                csv_bytes(
                    &["time", "strain1_point", "strain1_lower", "strain1_upper", "strain2_point", "strain2_lower", "strain2_upper", "conditioned_replicates"],
                    rows,
                ),
            ));
            if let Some(pair) = &co.pair {
                let (recs, csv) = pair_curve(&topology, &init, &params, p, pair, n, seed)?;
                records.extend(recs);
                out.files.push(("pair.csv".into(), csv));
            }
            out.files.push(("estimate.json".into(), json_bytes(&records)));
        }
        (KindSpec::Oracle(o), _) => {
            let Some(Initial::Fixed { config: start }) = init else {
                return Err(RunError::Runtime("the exact law needs a deterministic initial state".into()));
            };
            let exact = exact_small_graph_distribution(&topology, &start, &params, p.t_max)?;
            let fixed = Initial::from(start);
            let exp = Experiment {
                topology: &topology,
                init: &fixed,
                params: &params,
            };
            let codes = exp.replicates(seed, 0, n, |r| exact.state_index(&r.final_config))?;
            let mut empirical = vec![0.0; exact.probabilities.len()];
            for &c in &codes {
                empirical[c] += 1.0;
            }
            empirical.iter_mut().for_each(|x| *x /= n as f64);
            let tv = total_variation(&exact.probabilities, &empirical);
            let rows = (0..empirical.len()).map(|code| {
                let mut c = code;
                let states: String = exact
                    .sites
                    .iter()
                    .map(|_| {
                        let d = c % 3;
                        c /= 3;
                        char::from(b'0' + d as u8)
                    })
                    .collect();
                vec![code.to_string(), states, num(exact.probabilities[code]), num(empirical[code])]
            });
            out.files.push(("oracle.csv".into(), csv_bytes(&["code", "states", "exact", "empirical"], rows)));
            out.files.push((
                "oracle.json".into(),
                json_bytes(&json!({
                    "topology": topology.spec(),
                    "sites": exact.sites.iter().map(|&s| topology.format_site(s)).collect::<Vec<_>>(),
                    "params": ParamsEcho::of(p),
                    "time": p.t_max,
                    "replicates": n,
                    "seed": seed,
                    "total_variation": tv,
                    "max_tv": o.max_tv,
                    "truncation_error": exact.truncation_error,
                })),
            ));
            if tv >= o.max_tv {
                return Err(RunError::Runtime(format!(
                    "total variation distance {tv} to the exact law is not below {}",
                    o.max_tv
                )));
            }
        }
        _ => unreachable!("validated configs pair each kind with its section"),
    }
    Ok(out)
}

fn pair_curve(
    topology: &Topology,
    init: &Initial,
    params: &SimParams,
    p: &ParamsSpec,
    pair: &PairSpec,
    replicates: usize,
    seed: u64,
) -> Result<(Vec<serde_json::Value>, Vec<u8>), RunError> {
    let x: SiteId = topology.parse_site(&pair.x)?;
    let y: SiteId = topology.parse_site(&pair.y)?;
    let curve = pair_coexistence_curve(topology, init, params, x, y, &p.sample_times, replicates, seed)?;
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for (&t, ci) in p.sample_times.iter().zip(&curve) {
        let mut proxies = vec!["pair coexistence at a finite time stands in for its limit as t grows".to_string()];
        proxies.extend(base_proxies(p));
        records.push(json!(EstimateRecord::new(
            format!("P(state({}) = 1, state({}) = 2)", pair.x, pair.y),
            p,
            ci,
            seed,
            proxies
        )
        .at(t)));
        rows.push(vec![num(t), num(ci.point), num(ci.lower), num(ci.upper), ci.replicates.to_string()]);
    }
    Ok((records, csv_bytes(&["time", "point", "lower", "upper", "replicates"], rows)))
}

fn compute_ode(config: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let p = &config.params;
    let (KindSpec::Ode(o), Some(InitSpec::Density { u1, u2 })) = (&config.detail, &config.init) else {
        unreachable!("validated ode configs carry a density and an [ode] section");
    };
    let s1 = StrainParams::new(p.lambda1, p.delta1)?;
    let s2 = StrainParams::new(p.lambda2, p.delta2)?;
    let start = MeanFieldState::new(*u1, *u2)?;
    let traj = meanfield::integrate(&s1, &s2, &start, p.t_max, o.dt)?;
    let winner = meanfield::predict_winner(&s1, &s2);
    let header = json!({
        "kind": "ode",
        "method": traj.method,
        "dt": o.dt,
        "stride": o.stride,
        "params": ParamsEcho::of(p),
        "init": {"u1": u1, "u2": u2},
        "predicted_winner": winner,
    });
    let last = traj.samples.len() - 1;
    let rows = traj
        .samples
        .iter()
        .enumerate()
        .filter(|(i, _)| i % o.stride == 0 || *i == last)
        .map(|(_, s)| vec![num(s.time), num(s.u0()), num(s.u1), num(s.u2)]);
    let mut csv = format!("# {header}\n").into_bytes();
    csv.extend(csv_bytes(&["t", "u0", "u1", "u2"], rows));

    let end = traj.last();
    let summary = json!({
        "final": {"t": end.time, "u0": end.u0(), "u1": end.u1, "u2": end.u2},
        "endemic_equilibrium": {
            "strain1": meanfield::endemic_equilibrium(&s1),
            "strain2": meanfield::endemic_equilibrium(&s2),
        },
        "invasion_growth_rate": {
            "strain1_into_strain2": meanfield::invasion_growth_rate(&s2, &s1).ok(),
            "strain2_into_strain1": meanfield::invasion_growth_rate(&s1, &s2).ok(),
        },
        "predicted_winner": winner,
        "extinct": {
            "strain1": end.u1 < meanfield::EXTINCTION_DENSITY,
            "strain2": end.u2 < meanfield::EXTINCTION_DENSITY,
        },
    });
    Ok(Artifacts {
        files: vec![("trajectory.csv".into(), csv), ("summary.json".into(), json_bytes(&summary))],
        boundary: BoundaryStats::default(),
    })
}
