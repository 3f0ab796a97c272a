//! CSV writers. Users are numbered from 1 in headers and keys; numbers use
//! the shortest representation that round-trips.

use std::io::Write;

use crate::error::Result;
use crate::rates::{RatePoint, RateUnit};
use crate::sim::{EvolutionTrace, SimReport};
use crate::transfer::TransferCurve;

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn header(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

/// Decoding order as a key, e.g. `[1, 0]` becomes `2-1`.
pub fn order_key(order: &[usize]) -> String {
    order.iter().map(|u| (u + 1).to_string()).collect::<Vec<_>>().join("-")
}

/// `v1, v_1..v_N, rho_1..rho_N`.
pub fn write_track<W: Write>(w: W, curve: &TransferCurve) -> Result<()> {
    let n = curve.num_users();
    let mut out = csv::Writer::from_writer(w);
    let mut head = vec!["v1".to_string()];
    head.extend(header("v", n));
    head.extend(header("rho", n));
    out.write_record(&head)?;
    for p in &curve.samples {
        let mut row = vec![num(p.v1)];
        row.extend(p.v.iter().map(|&x| num(x)));
        row.extend(p.rho.iter().map(|&x| num(x)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// `gamma_2..gamma_N, R_1..R_N, R_sum, unit`.
pub fn write_sweep<W: Write>(w: W, points: &[RatePoint], unit: RateUnit) -> Result<()> {
    let n = points.first().map_or(0, |p| p.rates.len());
    let mut out = csv::Writer::from_writer(w);
    let mut head: Vec<String> = (2..=n).map(|i| format!("gamma_{i}")).collect();
    head.extend(header("R", n));
    head.push("R_sum".into());
    head.push("unit".into());
    out.write_record(&head)?;
    for p in points {
        let mut row: Vec<String> = p.gamma.as_slice()[1..].iter().map(|&g| num(g)).collect();
        row.extend(p.rates.iter().map(|&r| num(unit.from_nats(r))));
        row.push(num(unit.from_nats(p.sum_rate)));
        row.push(unit.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// `order, R_1..R_N, unit`, one row per decoding order.
pub fn write_corners<W: Write>(w: W, corners: &[(Vec<usize>, Vec<f64>)], unit: RateUnit) -> Result<()> {
    let n = corners.first().map_or(0, |c| c.1.len());
    let mut out = csv::Writer::from_writer(w);
    let mut head = vec!["order".to_string()];
    head.extend(header("R", n));
    head.push("unit".into());
    out.write_record(&head)?;
    for (order, rates) in corners {
        let mut row = vec![order_key(order)];
        row.extend(rates.iter().map(|&r| num(unit.from_nats(r))));
        row.push(unit.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// `user, v_in, mse_pred, mse_emp, stderr, bias, n`; `bias` is `|mean(beta - x)|`.
pub fn write_sim_report<W: Write>(w: W, report: &SimReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["user", "v_in", "mse_pred", "mse_emp", "stderr", "bias", "n"])?;
    for u in &report.users {
        out.write_record([
            (u.user + 1).to_string(),
            num(u.v_in),
            num(u.mse_pred),
            num(u.mse_emp),
            num(u.mse_stderr),
            num(u.bias.norm()),
            report.n_samples.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `iter, v_1..v_N, rho_1..rho_N`.
pub fn write_evolution<W: Write>(w: W, trace: &EvolutionTrace) -> Result<()> {
    let n = trace.steps.first().map_or(0, |s| s.v.len());
    let mut out = csv::Writer::from_writer(w);
    let mut head = vec!["iter".to_string()];
    head.extend(header("v", n));
    head.extend(header("rho", n));
    out.write_record(&head)?;
    for (k, s) in trace.steps.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(s.v.iter().map(|&x| num(x)));
        row.extend(s.rho.iter().map(|&x| num(x)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::GammaProfile;

    fn text(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn sweep_layout_and_units() {
        let p = RatePoint::new(GammaProfile::new(vec![1.0, 0.5]).unwrap(), vec![std::f64::consts::LN_2, 0.0]);
        let s = text(|b| write_sweep(b, std::slice::from_ref(&p), RateUnit::Bits));
        assert_eq!(s, "gamma_2,R_1,R_2,R_sum,unit\n0.5,1.0,0.0,1.0,bits\n");
    }

    #[test]
    fn corner_keys_are_one_based() {
        assert_eq!(order_key(&[1, 0, 2]), "2-1-3");
        let s = text(|b| write_corners(b, &[(vec![1, 0], vec![0.25, 0.5])], RateUnit::Nats));
        assert_eq!(s, "order,R_1,R_2,unit\n2-1,0.25,0.5,nats\n");
    }

    #[test]
    fn numbers_round_trip() {
        let x = 0.1 + 0.2;
        assert_eq!(num(x).parse::<f64>().unwrap(), x);
        assert_eq!(num(1e-300).parse::<f64>().unwrap(), 1e-300);
    }
}
