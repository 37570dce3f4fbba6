//! One result row per (eps, P) and its CSV form. Numbers are written in
//! scientific notation with 17 significant digits so that a re-read row
//! is bit-identical to the one written.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Numeric columns, in output order.
pub const COLUMNS: &[&str] = &[
    "n",
    "hbar",
    "residual",
    "tolerance",
    "iterations",
    "limited_nodes",
    "lipschitz",
    "u_sum",
    "u_inf",
    "theta_mass",
    "theta_dev",
    "spectral_gap",
    "clipped",
    "adjointness",
    "trace_mass",
    "min_eig",
    "res_a",
    "res_a_identity",
    "res_b",
    "res_c_po",
    "res_c_raw",
    "identity_discrete",
    "identity_imp",
    "identity_veryimp",
    "iul0",
    "iul1",
    "iul5",
    "radial_lambda",
    "iul_radial",
    "radial_beta_tm",
    "support_outside",
    "graph_sup",
    "graph_l1",
    "e2",
    "e2_raw",
    "e3_ratio",
    "e3_rhs",
    "e2p",
    "e2p_bound",
    "dp_hbar0",
    "dp_hbar1",
    "dpu_identity",
    "mode_min_slack",
    "mode_all_hold",
    "conserved_comb",
    "nonuniq_res_zero",
    "nonuniq_res_psi",
    "nonuniq_dist_zero",
    "nonuniq_dist_psi",
    "sde_tv",
    "sde_rot0",
    "sde_rot0_se",
    "sde_rot1",
    "sde_rot1_se",
    "sde_rot_ref0",
    "sde_rot_ref1",
    "sde_drift0",
    "sde_drift0_se",
    "sde_drift1",
    "sde_drift1_se",
    "sde_var",
    "sde_var_pred",
    "sde_var_bound",
    "sde_max_du",
    "sde_dt_warning",
    "sde_dynkin_fail",
    "sde_dynkin_count",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub eps: f64,
    pub p: [f64; 2],
    /// "ok" or "failed:<stage>:<message>"
    pub status: String,
    pub route: String,
    pub values: BTreeMap<String, f64>,
}

impl Row {
    pub fn new(eps: f64, p: [f64; 2]) -> Self {
        Self {
            eps,
            p,
            status: "ok".into(),
            route: String::new(),
            values: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: &str, v: f64) {
        debug_assert!(COLUMNS.contains(&key), "unknown column {key}");
        self.values.insert(key.to_string(), v);
    }

    /// NaN when absent.
    pub fn get(&self, key: &str) -> f64 {
        self.values.get(key).copied().unwrap_or(f64::NAN)
    }

    pub fn has(&self, key: &str) -> bool {
        self.get(key).is_finite()
    }

    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn fail(&mut self, stage: &str, msg: &str) {
        let clean: String = msg
            .chars()
            .map(|c| if c == ',' || c == '\n' || c == '"' { ';' } else { c })
            .collect();
        self.status = format!("failed:{stage}:{clean}");
    }
}

/// Scientific notation, 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.16e}")
    }
}

fn parse_num(s: &str) -> Result<f64> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse::<f64>()
        .map_err(|_| Error::Config(format!("cannot parse number '{s}'")))
}

/// Sort by eps descending, then P lexicographic.
pub fn sort_rows(rows: &mut [Row]) {
    rows.sort_by(|a, b| {
        b.eps
            .total_cmp(&a.eps)
            .then(a.p[0].total_cmp(&b.p[0]))
            .then(a.p[1].total_cmp(&b.p[1]))
    });
}

pub fn rows_to_csv(rows: &[Row]) -> String {
    let mut out = String::from("eps,p0,p1,status,route");
    for c in COLUMNS {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            fmt_num(r.eps),
            fmt_num(r.p[0]),
            fmt_num(r.p[1]),
            r.status,
            r.route
        );
        for c in COLUMNS {
            out.push(',');
            if let Some(v) = r.values.get(*c) {
                out.push_str(&fmt_num(*v));
            }
        }
        out.push('\n');
    }
    out
}

pub fn rows_from_csv(text: &str) -> Result<Vec<Row>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Config("empty results file".into()))?
        .split(',')
        .collect();
    if header.len() < 5 || header[..5] != ["eps", "p0", "p1", "status", "route"] {
        return Err(Error::Config("unexpected results header".into()));
    }
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            return Err(Error::Config(format!(
                "row has {} fields, header {}",
                f.len(),
                header.len()
            )));
        }
        let mut r = Row::new(parse_num(f[0])?, [parse_num(f[1])?, parse_num(f[2])?]);
        r.status = f[3].to_string();
        r.route = f[4].to_string();
        for (name, v) in header[5..].iter().zip(&f[5..]) {
            if !v.is_empty() {
                r.values.insert(name.to_string(), parse_num(v)?);
            }
        }
        rows.push(r);
    }
    Ok(rows)
}

/// Write through a temporary file and rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut a = Row::new(0.025, [0.1, 0.0]);
        a.set("hbar", 1.0 / 3.0);
        a.set("trace_mass", 1.2345678901234567e-300);
        a.set("res_a", f64::NAN);
        let mut b = Row::new(0.4, [2.0, 0.0]);
        b.fail("solve", "no, convergence");
        let mut rows = vec![a, b];
        sort_rows(&mut rows);
        assert_eq!(rows[0].eps, 0.4);
        let text = rows_to_csv(&rows);
        let back = rows_from_csv(&text).unwrap();
        assert_eq!(rows_to_csv(&back), text);
        assert_eq!(back[1].get("hbar").to_bits(), (1.0f64 / 3.0).to_bits());
        assert!(!back[0].ok());
    }
}
