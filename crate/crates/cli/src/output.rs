//! Writing a report bundle to disk.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use trustrep::sim::ExperimentStats;

use crate::config::Format;
use crate::run::{LpRow, PayoffRow, ReportBundle, TraceTable};

/// Shortest round-trip form; empty for non-finite values.
fn num(x: f64) -> String {
    serde_json::Number::from_f64(x)
        .map(|n| n.to_string())
        .unwrap_or_default()
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn stats_csv(stats: &ExperimentStats) -> String {
    let mut s = String::from(
        "type,theta,target_payoff,paths,payoff_mean,payoff_se,freq_n,freq_h,freq_l,absorption_mean,absorption_se,\
         unabsorbed,breakdowns,punished,max_screening_visits,revealed_fraction,kl_mean,kl_se,max_promise_error\n",
    );
    for t in &stats.types {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            t.type_index + 1,
            num(t.theta),
            num(t.target_payoff),
            t.paths,
            num(t.payoff.mean),
            num(t.payoff.se),
            num(t.freq_n.mean),
            num(t.freq_h.mean),
            num(t.freq_l.mean),
            num(t.absorption.mean),
            num(t.absorption.se),
            t.unabsorbed,
            t.breakdowns,
            t.punished,
            t.max_screening_visits,
            num(t.revealed_fraction),
            num(t.kl.mean),
            num(t.kl.se),
            num(t.max_promise_error)
        );
    }
    s
}

pub fn payoff_csv(rows: &[PayoffRow]) -> String {
    let mut s = String::from("type,theta,v_commit,v_star,v_star_lp,v_gamma,agree\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.type_index + 1,
            opt(r.theta),
            opt(r.v_commit),
            opt(r.v_star),
            num(r.v_star_lp),
            opt(r.v_gamma),
            r.agree
        );
    }
    s
}

pub fn lp_csv(rows: &[LpRow]) -> String {
    let mut s = String::from("type,closed_form,lp_exact,lp_f64,grid,mesh,grid_gap,passed\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.type_index + 1,
            r.closed_form.as_deref().unwrap_or(""),
            r.lp_exact,
            num(r.lp_f64),
            num(r.grid),
            num(r.mesh),
            num(r.grid_gap),
            r.passed
        );
    }
    s
}

pub fn trace_csv(t: &TraceTable) -> String {
    let mut s = String::from("period,outcome,eta,class,pN,pH,pL");
    for j in 1..=t.n_types {
        let _ = write!(s, ",h_theta{j}");
    }
    s.push('\n');
    for r in &t.rows {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{}",
            r.period,
            r.outcome.symbol(),
            num(r.eta),
            r.class,
            num(r.weights[0]),
            num(r.weights[1]),
            num(r.weights[2])
        );
        for &h in &r.honor {
            let _ = write!(s, ",{}", num(h));
        }
        s.push('\n');
    }
    s
}

pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Writes every file the bundle calls for and returns their paths.
pub fn write_bundle(
    bundle: &ReportBundle,
    dir: &Path,
    format: Format,
) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: PathBuf, body: String| -> std::io::Result<()> {
        if let Some(parent) = name.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&name, body)?;
        written.push(name);
        Ok(())
    };
    if format.json() {
        put(dir.join("report.json"), to_json(bundle))?;
        if let Some(audit) = &bundle.audit {
            put(dir.join("audit.json"), to_json(audit))?;
        }
    }
    if format.csv() {
        if let Some(stats) = &bundle.stats {
            put(dir.join("stats.csv"), stats_csv(stats))?;
        }
        if let Some(rows) = &bundle.payoff_table {
            put(dir.join("payoff.csv"), payoff_csv(rows))?;
        }
        if let Some(rows) = &bundle.lp_check {
            put(dir.join("lp_check.csv"), lp_csv(rows))?;
        }
    }
    for t in &bundle.traces {
        let name = dir
            .join("traces")
            .join(format!("theta{}", t.type_index + 1))
            .join(format!("{}_{}.csv", t.seed, t.path));
        put(name, trace_csv(t))?;
    }
    Ok(written)
}
