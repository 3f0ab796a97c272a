use std::io::Write;
use std::path::{Path, PathBuf};

use noma_core::export::{write_corners, write_evolution, write_sim_report, write_sweep, write_track};
use noma_core::rates::{gamma_grid, rate_point, region_sweep, sic_corner, sum_capacity, RatePoint, RateUnit};
use noma_core::sim::{monte_carlo_validate, state_evolution};
use noma_core::transfer::{track_grid, variance_track};
use noma_core::{effective_channel, load_scenario, EffectiveChannel, Error, GammaProfile};

use crate::args::{parse_gamma_spec, parse_order, Cli, Command, WithGamma};
use crate::plot::{Plot, Series};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io { path: PathBuf, source: std::io::Error },
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    /// `(kind, exit code)`.
    pub fn class(&self) -> (&'static str, i32) {
        match self {
            Failure::Usage(_) => ("usage", 2),
            Failure::Io { .. } => ("io", 3),
            Failure::Core(e) => core_class(e),
        }
    }

    pub fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Io { path, source } => format!("{}: {source}", path.display()),
            Failure::Core(e) => e.to_string(),
        }
    }
}

fn core_class(e: &Error) -> (&'static str, i32) {
    match e {
        Error::Io(_) | Error::Csv(_) => ("io", 3),
        Error::Scenario(_) | Error::Parse(_) | Error::Dimension(_) => ("schema", 4),
        Error::Quadrature { .. } => ("quadrature", 5),
        Error::AtGamma { source, .. } => core_class(source),
        Error::InvalidArgument(_) | Error::InvalidOrder(_) => ("usage", 2),
        _ => ("numerical", 6),
    }
}

struct Output {
    csv: Vec<u8>,
    summary: String,
    plot: Option<Plot>,
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), Failure> {
    let name = cli.command.name();
    let common = cli.command.common();
    if common.quad_tol.is_nan() || common.quad_tol <= 0.0 {
        return Err(Failure::Usage(format!("--quad-tol must be positive, got {}", common.quad_tol)));
    }
    let plot_supported = matches!(cli.command, Command::Region(_) | Command::Track(_) | Command::Evolve(_));
    if common.plot && !plot_supported {
        return Err(Failure::Usage(format!("--plot is not available for {name}")));
    }
    let scenario = load_scenario(&common.scenario).map_err(|e| match e {
        Error::Io(source) => Failure::Io {
            path: common.scenario.clone(),
            source,
        },
        e => Failure::Core(e),
    })?;
    let ec = effective_channel(&scenario);
    let (unit, quad_tol) = (common.unit, common.quad_tol);

    let out = match &cli.command {
        Command::Sumcap(_) => sumcap(&ec, unit)?,
        Command::Rates(g) => rates(&ec, g, unit, quad_tol)?,
        Command::Region(g) => region(&ec, g, unit, quad_tol)?,
        Command::Track(t) => track(&ec, &t.with_gamma, t.points)?,
        Command::Corners(c) => corners(&ec, c.order.as_deref(), unit)?,
        Command::Simulate(s) => simulate(&ec, &s.variance, s.samples, s.seed)?,
        Command::Evolve(e) => evolve(&ec, &e.with_gamma, e.backoff, e.max_iter, e.threshold)?,
    };

    match &common.out {
        Some(path) => {
            std::fs::write(path, &out.csv).map_err(|source| Failure::Io { path: path.clone(), source })?;
            let _ = writeln!(stdout, "{}", out.summary);
        }
        None => stdout
            .write_all(&out.csv)
            .map_err(|source| Failure::Io { path: "<stdout>".into(), source })?,
    }
    if common.plot {
        if let Some(plot) = out.plot {
            let path = match &common.out {
                Some(p) => p.with_extension("svg"),
                None => PathBuf::from(format!("{name}.svg")),
            };
            write_file(&path, plot.render().as_bytes())?;
        }
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|source| Failure::Io { path: path.to_path_buf(), source })
}

fn csv_with(f: impl FnOnce(&mut Vec<u8>) -> noma_core::Result<()>) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Per-user value lists for users 2..N_u; missing users get 1.
fn gamma_values(ec: &EffectiveChannel, g: &WithGamma) -> Result<Vec<Vec<f64>>, Failure> {
    let free = ec.num_users() - 1;
    if g.gamma.len() > free {
        return Err(Failure::Usage(format!(
            "{} --gamma flags for {free} free users (gamma_1 is fixed at 1)",
            g.gamma.len()
        )));
    }
    let mut out = g
        .gamma
        .iter()
        .map(|s| parse_gamma_spec(s).map_err(Failure::Usage))
        .collect::<Result<Vec<_>, _>>()?;
    out.resize(free, vec![1.0]);
    Ok(out)
}

fn single_profile(ec: &EffectiveChannel, g: &WithGamma) -> Result<GammaProfile, Failure> {
    let values = gamma_values(ec, g)?;
    if values.iter().any(|v| v.len() != 1) {
        return Err(Failure::Usage("this command takes one gamma value per user; use region for grids".into()));
    }
    let mut raw = vec![1.0];
    raw.extend(values.iter().map(|v| v[0]));
    Ok(GammaProfile::new(raw)?)
}

fn sumcap(ec: &EffectiveChannel, unit: RateUnit) -> Result<Output, Failure> {
    let c = unit.from_nats(sum_capacity(ec));
    let csv = format!("C_sum,unit\n{c:?},{unit}\n").into_bytes();
    Ok(Output {
        csv,
        summary: format!("sum capacity {c:.6} {unit}"),
        plot: None,
    })
}

fn rates(ec: &EffectiveChannel, g: &WithGamma, unit: RateUnit, tol: f64) -> Result<Output, Failure> {
    let g = single_profile(ec, g)?;
    let p = rate_point(ec, &g, tol).map_err(|e| Error::AtGamma {
        gamma: g.as_slice().to_vec(),
        source: Box::new(e),
    })?;
    let shown: Vec<String> = p.rates_in(unit).iter().map(|r| format!("{r:.6}")).collect();
    Ok(Output {
        csv: csv_with(|b| write_sweep(b, std::slice::from_ref(&p), unit))?,
        summary: format!("rates ({unit}): {}", shown.join(", ")),
        plot: None,
    })
}

fn region(ec: &EffectiveChannel, g: &WithGamma, unit: RateUnit, tol: f64) -> Result<Output, Failure> {
    let values = gamma_values(ec, g)?;
    let grid = gamma_grid(&values)?;
    let points = region_sweep(ec, &grid, tol)?;
    Ok(Output {
        csv: csv_with(|b| write_sweep(b, &points, unit))?,
        summary: format!("{} rate points", points.len()),
        plot: Some(region_plot(&points, unit)),
    })
}

fn region_plot(points: &[RatePoint], unit: RateUnit) -> Plot {
    let nu = points[0].rates.len();
    if nu == 2 {
        return Plot {
            title: "Rate pairs on the sum-capacity face".into(),
            x_label: format!("R_1 ({unit})"),
            y_label: format!("R_2 ({unit})"),
            log_x: false,
            series: vec![Series {
                name: "sweep".into(),
                points: points.iter().map(|p| (unit.from_nats(p.rates[0]), unit.from_nats(p.rates[1]))).collect(),
            }],
        };
    }
    Plot {
        title: "Per-user rates over the gamma grid".into(),
        x_label: "grid index".into(),
        y_label: format!("rate ({unit})"),
        log_x: false,
        series: (0..nu)
            .map(|i| Series {
                name: format!("R_{}", i + 1),
                points: points.iter().enumerate().map(|(k, p)| (k as f64, unit.from_nats(p.rates[i]))).collect(),
            })
            .collect(),
    }
}

fn track(ec: &EffectiveChannel, g: &WithGamma, points: usize) -> Result<Output, Failure> {
    if points < 2 {
        return Err(Failure::Usage("--points must be at least 2".into()));
    }
    let g = single_profile(ec, g)?;
    let curve = variance_track(ec, &g, &track_grid(&g, points))?;
    let nu = ec.num_users();
    let plot = Plot {
        title: "Variance track".into(),
        x_label: "v_1".into(),
        y_label: "v_i".into(),
        log_x: false,
        series: (0..nu)
            .map(|i| Series {
                name: format!("v_{}", i + 1),
                points: curve.samples.iter().map(|p| (p.v1, p.v[i])).collect(),
            })
            .collect(),
    };
    Ok(Output {
        csv: csv_with(|b| write_track(b, &curve))?,
        summary: format!("{} track points", curve.samples.len()),
        plot: Some(plot),
    })
}

fn corners(ec: &EffectiveChannel, order: Option<&str>, unit: RateUnit) -> Result<Output, Failure> {
    let orders = match order {
        Some(s) => vec![parse_order(s).map_err(Failure::Usage)?],
        None => permutations(ec.num_users()),
    };
    let rows = orders
        .into_iter()
        .map(|o| sic_corner(ec, &o).map(|r| (o, r)))
        .collect::<noma_core::Result<Vec<_>>>()?;
    let summary = rows
        .iter()
        .map(|(_, r)| r.iter().map(|x| format!("{:.4}", unit.from_nats(*x))).collect::<Vec<_>>().join(", "))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Output {
        csv: csv_with(|b| write_corners(b, &rows, unit))?,
        summary,
        plot: None,
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

fn simulate(ec: &EffectiveChannel, variance: &[f64], samples: usize, seed: u64) -> Result<Output, Failure> {
    let nu = ec.num_users();
    let v = match variance.len() {
        1 => vec![variance[0]; nu],
        n if n == nu => variance.to_vec(),
        n => return Err(Failure::Usage(format!("{n} --variance values for {nu} users"))),
    };
    let report = monte_carlo_validate(ec, &v, samples, seed)?;
    let summary = report
        .users
        .iter()
        .map(|u| {
            format!(
                "user {}: mse {:.6} (predicted {:.6}, stderr {:.2e})",
                u.user + 1,
                u.mse_emp,
                u.mse_pred,
                u.mse_stderr
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Output {
        csv: csv_with(|b| write_sim_report(b, &report))?,
        summary,
        plot: None,
    })
}

fn evolve(ec: &EffectiveChannel, g: &WithGamma, backoff: f64, max_iter: usize, threshold: f64) -> Result<Output, Failure> {
    let g = single_profile(ec, g)?;
    let trace = state_evolution(ec, &g, backoff, max_iter, threshold)?;
    let plot = Plot {
        title: format!("State evolution, backoff {backoff}"),
        x_label: "iteration".into(),
        y_label: "v_i".into(),
        log_x: false,
        series: (0..ec.num_users())
            .map(|i| Series {
                name: format!("v_{}", i + 1),
                points: trace.steps.iter().enumerate().map(|(k, s)| (k as f64, s.v[i])).collect(),
            })
            .collect(),
    };
    Ok(Output {
        csv: csv_with(|b| write_evolution(b, &trace))?,
        summary: format!(
            "{} after {} iterations",
            if trace.converged { "converged" } else { "not converged" },
            trace.iterations()
        ),
        plot: Some(plot),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_are_distinct() {
        let quad = Error::Quadrature { panels: 1, previous: 0.0, last: 1.0 };
        let wrapped = Error::AtGamma { gamma: vec![1.0], source: Box::new(Error::Quadrature { panels: 1, previous: 0.0, last: 1.0 }) };
        let codes = [
            Failure::Usage(String::new()).class().1,
            Failure::Core(Error::Io(std::io::Error::other("x"))).class().1,
            Failure::Core(Error::Scenario(String::new())).class().1,
            Failure::Core(quad).class().1,
            Failure::Core(Error::NonMonotone(1)).class().1,
        ];
        let mut sorted = codes.to_vec();
        sorted.dedup();
        assert_eq!(sorted.len(), codes.len());
        assert_eq!(Failure::Core(wrapped).class(), ("quadrature", 5));
    }

    #[test]
    fn permutations_sorted_and_complete() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![0, 1, 2]);
        assert_eq!(p[5], vec![2, 1, 0]);
    }
}
