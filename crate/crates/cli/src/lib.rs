//! Library side of the `strainwars` command: config documents, presets and
//! the experiment runner.

pub mod config;
pub mod presets;
pub mod run;

use config::{ConfigErrors, MAX_SEED};

pub const SEED_ENV: &str = "STRAINWARS_SEED";

/// Seed precedence: command line, then config, then the environment, then 0.
pub fn resolve_seed(cli: Option<u64>, config: Option<u64>, env: Option<&str>) -> Result<u64, ConfigErrors> {
    let seed = match (cli, config, env) {
        (Some(s), _, _) => s,
        (None, Some(s), _) => s,
        (None, None, Some(text)) => text
            .trim()
            .parse()
            .map_err(|_| ConfigErrors::single(SEED_ENV, format!("expected a nonnegative integer, got `{text}`")))?,
        (None, None, None) => 0,
    };
    if seed > MAX_SEED {
        return Err(ConfigErrors::single("master_seed", format!("must be at most {MAX_SEED}, got {seed}")));
    }
    Ok(seed)
}

pub fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
