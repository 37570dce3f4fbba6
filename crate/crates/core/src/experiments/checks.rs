//! Pass/fail checks computed only from result rows, so that a manifest can
//! be re-verified from its CSV.

use super::records::Row;
use super::scenarios::Traits;
use crate::estimates::boundedness;
use serde::{Deserialize, Deserializer, Serialize};

/// JSON has no NaN; serde_json writes it as null, read it back as NaN.
fn nan_from_null<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub scope: String,
    #[serde(deserialize_with = "nan_from_null")]
    pub value: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub threshold: f64,
    pub passed: bool,
}

struct Sink(Vec<Check>);

impl Sink {
    fn push(&mut self, name: &str, scope: &str, value: f64, threshold: f64, passed: bool) {
        self.0.push(Check {
            name: name.into(),
            scope: scope.into(),
            value,
            threshold,
            passed,
        });
    }

    /// value <= threshold, skipped when the value is missing
    fn le(&mut self, name: &str, scope: &str, value: f64, threshold: f64) {
        if !value.is_nan() {
            self.push(name, scope, value, threshold, value <= threshold);
        }
    }
}

fn row_scope(r: &Row, dim: usize) -> String {
    if dim == 2 {
        format!("eps={} P=({} {})", r.eps, r.p[0], r.p[1])
    } else {
        format!("eps={} P={}", r.eps, r.p[0])
    }
}

fn p_scope(p: [f64; 2], dim: usize) -> String {
    if dim == 2 {
        format!("P=({} {})", p[0], p[1])
    } else {
        format!("P={}", p[0])
    }
}

fn row_checks(s: &mut Sink, r: &Row, t: &Traits, dim: usize) {
    let sc = row_scope(r, dim);
    s.push("solve", &sc, 0.0, 0.0, r.ok());
    if !r.ok() {
        return;
    }
    s.le("residual", &sc, r.get("residual"), r.get("tolerance"));
    s.le("adjointness", &sc, r.get("adjointness"), 1e-12);
    s.le("theta-mass", &sc, (r.get("theta_mass") - 1.0).abs(), 1e-12);
    s.le("res-c-po", &sc, r.get("res_c_po"), 1e-8);
    s.le("imp-discrete", &sc, r.get("identity_discrete"), 1e-8);
    s.le(
        "res-a-identity",
        &sc,
        r.get("res_a_identity"),
        1e-2 * r.get("res_a") + 1e-14,
    );
    s.le("support", &sc, r.get("support_outside"), 1e-6);
    let tm = r.get("trace_mass");
    let consistency = (tm - 0.5 * r.eps * r.eps * r.get("e2_raw")).abs();
    s.le("trace-mass-consistency", &sc, consistency, 1e-12 * tm.max(1e-300));
    if r.has("e2p") {
        s.le("est2", &sc, r.get("e2p"), r.get("e2p_bound") * (1.0 + 1e-6) + 1e-14);
    }
    if r.has("mode_all_hold") {
        let slack = r.get("mode_min_slack");
        s.push("mode-inequality", &sc, slack, 0.0, r.get("mode_all_hold") == 1.0);
    }
    if r.has("sde_tv") {
        s.le("sde-occupation-tv", &sc, r.get("sde_tv"), 0.05);
        for a in 0..dim {
            let dev = (r.get(&format!("sde_rot{a}")) - r.get(&format!("sde_rot_ref{a}"))).abs();
            s.le("sde-rotation", &sc, dev, 3.0 * r.get(&format!("sde_rot{a}_se")));
            let dev = (r.get(&format!("sde_drift{a}")) + r.get(&format!("dp_hbar{a}"))).abs();
            s.le("sde-drift-x", &sc, dev, 3.0 * r.get(&format!("sde_drift{a}_se")));
        }
        let slack = r.get("sde_var_bound") - r.get("sde_var");
        s.push("sde-variance-bound", &sc, slack, 0.0, slack >= 0.0);
        s.le(
            "sde-momentum-bound",
            &sc,
            r.get("sde_max_du"),
            r.get("lipschitz") * (1.0 + 1e-12),
        );
        // 3-sigma per test function over 24 functions; allow two exceedances
        s.le("sde-dynkin", &sc, r.get("sde_dynkin_fail"), 2.0);
    }
    if t.free {
        let p2 = 0.5 * (r.p[0] * r.p[0] + r.p[1] * r.p[1]);
        s.le("free-hbar", &sc, (r.get("hbar") - p2).abs(), 1e-8);
        s.le("free-u", &sc, r.get("u_inf"), 1e-8);
        s.le("free-theta", &sc, r.get("theta_dev"), 1e-10);
        s.le("free-trace-mass", &sc, tm, 1e-12);
        let worst = ["res_a", "res_b", "res_c_po", "res_c_raw"]
            .iter()
            .map(|k| r.get(k))
            .fold(0.0, f64::max);
        s.le("free-mather", &sc, worst, 1e-10);
    }
    if t.conserved_sum {
        s.le(
            "conserved-combination",
            &sc,
            r.get("conserved_comb"),
            1e-8 * tm.max(1e-15),
        );
    }
    if t.radial_bound && r.has("iul_radial") {
        let lower = r.get("radial_beta_tm");
        s.push(
            "radial-iul-lower-bound",
            &sc,
            r.get("iul_radial"),
            lower,
            r.get("iul_radial") >= lower - 1e-14,
        );
    }
    if t.nonuniqueness {
        s.le("inviscid-zero", &sc, r.get("nonuniq_res_zero"), 1e-12);
        s.le("inviscid-psi", &sc, r.get("nonuniq_res_psi"), 1e-12);
    }
}

fn sweep_checks(s: &mut Sink, rows: &[&Row], t: &Traits, dim: usize) {
    let ok: Vec<&Row> = rows.iter().copied().filter(|r| r.ok()).collect();
    if ok.len() < 2 || ok.len() != rows.len() {
        return;
    }
    let sc = p_scope(ok[0].p, dim);
    let col = |k: &str| ok.iter().map(|r| r.get(k)).collect::<Vec<f64>>();
    let first = ok[0];
    let last = ok[ok.len() - 1];

    let e2 = boundedness(&col("e2"));
    s.push("e2-bounded", &sc, e2.growth, 10.0, e2.bounded);
    if t.uniformly_convex {
        let b = boundedness(&col("e2_raw"));
        s.push("e2-raw-bounded", &sc, b.growth, 10.0, b.bounded);
    }
    let e3 = boundedness(&col("e3_ratio"));
    s.push("e3-bounded", &sc, e3.growth, 10.0, e3.bounded);
    let lip = boundedness(&col("lipschitz"));
    s.push("lipschitz-bounded", &sc, lip.growth, 10.0, lip.bounded);

    let tm = col("trace_mass");
    let (tm0, tm1) = (tm[0], tm[tm.len() - 1]);
    let decays = tm1 <= 1e-2 && tm1 <= tm0 / 4.0;
    if t.dissipation_decays {
        s.le("dissipation-final", &sc, tm1, 1e-2);
        s.le("dissipation-ratio", &sc, tm1, tm0 / 4.0);
        if t.uniformly_convex {
            let mono = tm.windows(2).all(|w| w[1] <= w[0]);
            s.push("trace-mass-monotone", &sc, tm1, tm0, mono);
            let iul = last.get("iul0");
            s.push("iul0-range", &sc, iul, 1e-2, (-1e-14..=1e-2).contains(&iul));
        }
        if ok.len() >= 3 {
            let gl = col("graph_l1");
            let second = gl[gl.len() - 2];
            s.le("graph-defect-decays", &sc, second, gl[0]);
        }
    }
    if t.mather_decay {
        for (name, key) in [
            ("mather-decay-a", "res_a"),
            ("mather-decay-b", "res_b"),
            ("mather-decay-c", "res_c_raw"),
        ] {
            let ratio = first.get(key) / last.get(key);
            s.push(name, &sc, ratio, 4.0, ratio >= 4.0);
        }
        let worst = ok
            .iter()
            .map(|r| r.get("res_a_identity") / r.get("res_a").max(1e-300))
            .fold(0.0, f64::max);
        s.le("mather-identity-relative", &sc, worst, 1e-2);
    }
    if let Some(delta) = t.plateau_floor {
        let lo = tm.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = tm.iter().copied().fold(0.0, f64::max);
        let within = hi <= 3.0 * tm0 && lo >= tm0 / 3.0;
        s.push("plateau-factor-3", &sc, hi.max(tm0 * tm0 / lo) / tm0, 3.0, within);
        s.push("plateau-floor", &sc, lo, delta, lo >= delta);
        s.push("decay-fails", &sc, tm1, 1e-2, !decays);
    }
}

/// Midpoint-type convexity of Hbar in P (1D) at each eps.
fn convexity_checks(s: &mut Sink, rows: &[Row]) {
    let mut eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    eps.dedup();
    for e in eps {
        let mut pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.eps == e && r.ok())
            .map(|r| (r.p[0], r.get("hbar")))
            .collect();
        if pts.len() < 3 {
            continue;
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let worst = pts
            .windows(3)
            .map(|w| {
                let s1 = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                let s2 = (w[2].1 - w[1].1) / (w[2].0 - w[1].0);
                s2 - s1
            })
            .fold(f64::INFINITY, f64::min);
        s.push("hbar-convex-in-p", &format!("eps={e}"), worst, -1e-6, worst >= -1e-6);
    }
}

/// Every check for a sorted set of rows.
pub fn evaluate(rows: &[Row], traits: &Traits, dim: usize) -> Vec<Check> {
    let mut s = Sink(Vec::new());
    for r in rows {
        row_checks(&mut s, r, traits, dim);
    }
    let mut momenta: Vec<[f64; 2]> = Vec::new();
    for r in rows {
        if !momenta.contains(&r.p) {
            momenta.push(r.p);
        }
    }
    for p in momenta {
        let chain: Vec<&Row> = rows.iter().filter(|r| r.p == p).collect();
        sweep_checks(&mut s, &chain, traits, dim);
    }
    if traits.uniformly_convex && dim == 1 {
        convexity_checks(&mut s, rows);
    }
    s.0
}
