//! CSV tables behind the plots. Numbers are written with 17 significant
//! digits in Rust's locale-independent scientific notation.

use std::io::Write;

use riskconv_core::riccati::{RiccatiStep, StepStatus};

use crate::error::Result;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn status_label(status: StepStatus) -> &'static str {
    match status {
        StepStatus::Ok => "ok",
        StepStatus::ValidityViolated => "violation",
        StepStatus::NotPositiveDefinite => "not_positive_definite",
    }
}

pub fn write_table<W: Write>(out: W, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn eigen_columns(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

fn eigen_cells(values: Option<&[f64]>, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| values.map_or_else(String::new, |v| num(v[i])))
}

/// `t,status,lambda_P_1..n,lambda_V_1..n`; the `V` cells are empty on violation.
pub fn write_trajectory<W: Write>(out: W, steps: &[RiccatiStep], n: usize) -> Result<()> {
    let header: Vec<String> = ["t", "status"]
        .into_iter()
        .map(String::from)
        .chain(eigen_columns("lambda_P", n))
        .chain(eigen_columns("lambda_V", n))
        .collect();
    let rows: Vec<Vec<String>> = steps
        .iter()
        .map(|s| {
            [s.t.to_string(), status_label(s.status).to_string()]
                .into_iter()
                .chain(eigen_cells(Some(&s.lambda_p), n))
                .chain(eigen_cells(s.lambda_v.as_deref(), n))
                .collect()
        })
        .collect();
    write_table(out, &header, &rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub theta: f64,
    pub lambda_min_omega: f64,
    pub lambda_min_w: f64,
}

/// `theta,lambda_min_Omega,lambda_min_W`.
pub fn write_threshold_sweep<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let header = ["theta", "lambda_min_Omega", "lambda_min_W"].map(String::from);
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![num(r.theta), num(r.lambda_min_omega), num(r.lambda_min_w)])
        .collect();
    write_table(out, &header, &rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointRow {
    pub theta: f64,
    /// `None` when the iteration failed at this θ.
    pub lambda_p: Option<Vec<f64>>,
    pub lambda_v: Option<Vec<f64>>,
}

/// `theta,status,lambda_P_1..n,lambda_V_1..n`.
pub fn write_fixed_point_sweep<W: Write>(out: W, rows: &[FixedPointRow], n: usize) -> Result<()> {
    let header: Vec<String> = ["theta", "status"]
        .into_iter()
        .map(String::from)
        .chain(eigen_columns("lambda_P", n))
        .chain(eigen_columns("lambda_V", n))
        .collect();
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let status = if r.lambda_p.is_some() { "ok" } else { "failed" };
            [num(r.theta), status.to_string()]
                .into_iter()
                .chain(eigen_cells(r.lambda_p.as_deref(), n))
                .chain(eigen_cells(r.lambda_v.as_deref(), n))
                .collect()
        })
        .collect();
    write_table(out, &header, &rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRow {
    pub block_len: usize,
    pub theta_n: f64,
    pub tau_n: f64,
    pub tau_is_capped: bool,
}

/// `N,theta_N,tau_N,tau_is_capped`.
pub fn write_thresholds<W: Write>(out: W, rows: &[ThresholdRow]) -> Result<()> {
    let header = ["N", "theta_N", "tau_N", "tau_is_capped"].map(String::from);
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.block_len.to_string(),
                num(r.theta_n),
                num(r.tau_n),
                r.tau_is_capped.to_string(),
            ]
        })
        .collect();
    write_table(out, &header, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use riskconv_core::cone::SymMatrix;

    #[test]
    fn numbers_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, 1.002828e-3, -2.5e300, 0.0] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            assert!(!s.contains(','));
        }
        assert_eq!(num(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn violation_rows_leave_v_empty() {
        let steps = vec![
            RiccatiStep {
                t: 0,
                p: SymMatrix::identity(2),
                status: StepStatus::Ok,
                lambda_p: vec![1.0, 1.0],
                validity_margin: Some(0.5),
                lambda_v: Some(vec![2.0, 2.0]),
            },
            RiccatiStep {
                t: 1,
                p: SymMatrix::identity(2),
                status: StepStatus::ValidityViolated,
                lambda_p: vec![3.0, 1.0],
                validity_margin: Some(-0.1),
                lambda_v: None,
            },
        ];
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &steps, 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,status,lambda_P_1,lambda_P_2,lambda_V_1,lambda_V_2");
        assert!(lines[2].starts_with("1,violation,"));
        assert!(lines[2].ends_with(",,"));
    }
}
