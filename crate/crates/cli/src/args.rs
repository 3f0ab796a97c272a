use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use noma_core::rates::{RateUnit, QUAD_TOL};

/// Achievable-rate analysis of iterative LMMSE detection for uplink MU-MIMO.
///
/// CSV goes to --out when given and to stdout otherwise. On failure a single
/// JSON line `{"error": kind, "code": n, "message": ...}` is written to stderr
/// and the process exits with `code`.
#[derive(Debug, Parser)]
#[command(name = "noma", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sum capacity log det(I + H'^H H' / noise_var).
    Sumcap(Common),
    /// Per-user rates for one gamma profile.
    Rates(WithGamma),
    /// Rates over a grid of gamma profiles.
    Region(WithGamma),
    /// Variance track and extrinsic SINRs for one gamma profile.
    Track(TrackArgs),
    /// Successive-decoding corner rates.
    Corners(CornerArgs),
    /// Monte Carlo check of the predicted extrinsic error variance.
    Simulate(SimulateArgs),
    /// State evolution with rate backoff.
    Evolve(EvolveArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Rate unit: nats or bits.
    #[arg(long, default_value = "nats")]
    pub unit: RateUnit,
    /// Absolute tolerance of each rate integral.
    #[arg(long, default_value_t = QUAD_TOL)]
    pub quad_tol: f64,
    /// CSV output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write an SVG line plot (next to --out, or <command>.svg).
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct WithGamma {
    #[command(flatten)]
    pub common: Common,
    /// Gamma of users 2, 3, ... in order, one flag per user: a value, or
    /// lo:hi:n for n geometric points. Omitted users get 1.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    pub with_gamma: WithGamma,
    /// Number of track points.
    #[arg(long, default_value_t = noma_core::transfer::TRACK_POINTS)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct CornerArgs {
    #[command(flatten)]
    pub common: Common,
    /// Decoding order as 1-based user numbers, first decoded first (e.g. 2,1).
    /// All orders when omitted.
    #[arg(long)]
    pub order: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Prior variance per user, one flag per user; a single value applies to all.
    #[arg(long = "variance", default_value = "1")]
    pub variance: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub with_gamma: WithGamma,
    /// Rate backoff epsilon.
    #[arg(long, default_value_t = 0.05)]
    pub backoff: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    /// Stop once every variance is at most this value.
    #[arg(long, default_value_t = 1e-6)]
    pub threshold: f64,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sumcap(_) => "sumcap",
            Command::Rates(_) => "rates",
            Command::Region(_) => "region",
            Command::Track(_) => "track",
            Command::Corners(_) => "corners",
            Command::Simulate(_) => "simulate",
            Command::Evolve(_) => "evolve",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Sumcap(c) => c,
            Command::Rates(g) | Command::Region(g) => &g.common,
            Command::Track(t) => &t.with_gamma.common,
            Command::Corners(c) => &c.common,
            Command::Simulate(s) => &s.common,
            Command::Evolve(e) => &e.with_gamma.common,
        }
    }
}

/// Values of one `--gamma` flag: `x`, or `lo:hi:n` with geometric spacing
/// (`n = 1` gives `lo`).
pub fn parse_gamma_spec(spec: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| -> Result<f64, String> {
        let x: f64 = s.trim().parse().map_err(|_| format!("'{s}' is not a number in gamma spec '{spec}'"))?;
        if !(x > 0.0 && x.is_finite()) {
            return Err(format!("gamma values must be positive, got {x} in '{spec}'"));
        }
        Ok(x)
    };
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [x] => Ok(vec![num(x)?]),
        [lo, hi, n] => {
            let (lo, hi) = (num(lo)?, num(hi)?);
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| format!("'{n}' is not a point count in gamma spec '{spec}'"))?;
            if n == 0 {
                return Err(format!("gamma spec '{spec}' needs at least one point"));
            }
            if n == 1 {
                return Ok(vec![lo]);
            }
            let (a, b) = (lo.ln(), hi.ln());
            Ok((0..n)
                .map(|k| match k {
                    0 => lo,
                    k if k == n - 1 => hi,
                    k => (a + (b - a) * k as f64 / (n - 1) as f64).exp(),
                })
                .collect())
        }
        _ => Err(format!("gamma spec '{spec}' must be a value or lo:hi:n")),
    }
}

/// 1-based comma-separated order to 0-based indices.
pub fn parse_order(spec: &str) -> Result<Vec<usize>, String> {
    spec.split(',')
        .map(|s| match s.trim().parse::<usize>() {
            Ok(k) if k >= 1 => Ok(k - 1),
            _ => Err(format!("order entry '{s}' must be a user number starting at 1")),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_spec_forms() {
        assert_eq!(parse_gamma_spec("2.5").unwrap(), vec![2.5]);
        assert_eq!(parse_gamma_spec("0.1:10:1").unwrap(), vec![0.1]);
        let g = parse_gamma_spec("1e-3:1e3:61").unwrap();
        assert_eq!(g.len(), 61);
        assert_eq!((g[0], g[60]), (1e-3, 1e3));
        assert!((g[30] - 1.0).abs() < 1e-12);
        for w in g.windows(2) {
            assert!((w[1] / w[0] - 10f64.powf(0.1)).abs() < 1e-9);
        }
    }

    #[test]
    fn gamma_spec_rejects() {
        for bad in ["", "0", "-1", "1:2", "1:2:0", "1:x:3", "1:2:3:4", "nan"] {
            assert!(parse_gamma_spec(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn order_parsing() {
        assert_eq!(parse_order("2,1").unwrap(), vec![1, 0]);
        assert_eq!(parse_order(" 3, 1 ,2").unwrap(), vec![2, 0, 1]);
        assert!(parse_order("0,1").is_err());
        assert!(parse_order("a").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
