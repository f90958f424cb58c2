//! Pass/fail bookkeeping for the acceptance run, and the pinned thresholds it
//! checks against.

use std::time::Duration;

pub mod tolerances {
    /// Tolerance on mean-field densities leaving the simplex.
    pub const SIMPLEX: f64 = 1e-9;
    pub const ODE_EXTINCT_U1: f64 = 1e-6;
    pub const ODE_U2_LIMIT: f64 = 1e-4;
    pub const ODE_RUNTIME_S: f64 = 1.0;
    pub const INVASION_PAIRS: usize = 100;
    pub const INVASION_RUNTIME_S: f64 = 1.0;

    pub const ORACLE_TV: f64 = 0.01;
    pub const ORACLE_REPLICATES: usize = 100_000;
    pub const ORACLE_RUNTIME_S: f64 = 120.0;

    pub const DEATH_REPLICATES: usize = 100_000;
    /// Binomial standard errors allowed between empirical and exact survival.
    pub const DEATH_SE: f64 = 3.0;
    pub const DEATH_RUNTIME_S: f64 = 30.0;

    pub const CROWD_OUT_STRAIN1_UPPER: f64 = 0.02;
    pub const CROWD_OUT_STRAIN2_LOWER: f64 = 0.2;
    pub const CROWD_OUT_RUNTIME_S: f64 = 900.0;
    pub const PAIR_UPPER: f64 = 0.02;

    pub const LAMBDA_C_MEMBER: f64 = 1.65;
    pub const LAMBDA_C_DEAD: f64 = 1.4;
    pub const LAMBDA_C_ALIVE: f64 = 1.9;
    pub const LONG_RUNTIME_S: f64 = 1800.0;

    pub const TREE_BOUNDARY_FRACTION: f64 = 0.05;

    pub const TREE_COEXIST_LOWER: f64 = 0.10;
    pub const TREE_COEXIST_REPLICATES: usize = 2000;
    pub const TORUS_COEXIST_UPPER: f64 = 0.05;
}

#[derive(Debug, Clone)]
pub struct Check {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

/// One numbered criterion made of several checks.
#[derive(Debug)]
pub struct Criterion {
    pub number: u32,
    pub title: String,
    pub checks: Vec<Check>,
}

impl Criterion {
    pub fn new(number: u32, title: impl Into<String>) -> Self {
        Criterion {
            number,
            title: title.into(),
            checks: Vec::new(),
        }
    }

    pub fn require(&mut self, label: impl Into<String>, passed: bool, detail: impl Into<String>) -> &mut Self {
        self.checks.push(Check {
            label: label.into(),
            passed,
            detail: detail.into(),
        });
        self
    }

    pub fn within(&mut self, label: &str, elapsed: Duration, budget_s: f64) -> &mut Self {
        let s = elapsed.as_secs_f64();
        self.require(label, s < budget_s, format!("{s:.2}s < {budget_s}s"))
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn line(&self) -> String {
        let parts: Vec<String> = self
            .checks
            .iter()
            .map(|c| format!("{}{} [{}]", if c.passed { "" } else { "!" }, c.label, c.detail))
            .collect();
        format!(
            "{} criterion {:>2} {}: {}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.number,
            self.title,
            parts.join("; ")
        )
    }
}

#[derive(Debug, Default)]
pub struct Report {
    pub criteria: Vec<Criterion>,
}

impl Report {
    pub fn record(&mut self, c: Criterion) {
        println!("{}", c.line());
        self.criteria.push(c);
    }

    pub fn failures(&self) -> Vec<u32> {
        self.criteria.iter().filter(|c| !c.passed()).map(|c| c.number).collect()
    }
}
