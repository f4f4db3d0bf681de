use mnflow_core::decay::{exponent_bookkeeping, run_decay_experiment, DecayFit, DecayVerdict};
use mnflow_core::error::Result;
use mnflow_core::model::{lq_norm, TrajectoryRecord};
use mnflow_core::nonlinear::monitor::estimate_monitor;
use mnflow_core::scheme::euler::euler_report;
use mnflow_core::scheme::{picard_fixed_point, PicardReport, PicardVerdict};
use serde_json::{json, Value};

use crate::scenario::{Mode, Scenario};

/// One CSV file; every column is named `module::operation::field`.
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file: &str, module: &str, op: &str, fields: &[&str]) -> Self {
        Table { file: file.into(), header: fields.iter().map(|f| format!("{module}::{op}::{f}")).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

pub struct Outcome {
    pub report_file: &'static str,
    pub report: Value,
    pub tables: Vec<Table>,
    pub plot: String,
    /// Ran correctly but a checked property failed.
    pub failed: bool,
    pub summary: String,
}

pub fn execute(sc: &Scenario) -> Result<Outcome> {
    match sc.mode {
        Mode::LinearDecay => linear_decay(sc),
        Mode::Picard => picard(sc),
        Mode::Monitor => monitor(sc),
        Mode::Bookkeeping => bookkeeping(sc),
    }
}

fn linear_decay(sc: &Scenario) -> Result<Outcome> {
    let data = sc.data.build(&sc.domain, sc.seed)?;
    let mut fits: Vec<DecayFit> = Vec::new();
    for c in &sc.decay.cells {
        let f = run_decay_experiment(&data, &sc.domain, &sc.params, c.kind, c.p, c.q, &sc.decay.config)?;
        log::info!("{}: fitted {:.4} predicted {:.4} ({:?})", f.quantity, f.fitted_exponent, f.predicted_exponent, f.verdict);
        fits.push(f);
    }
    let op = "run_decay_experiment";
    let mut summary = Table::new(
        "decay_fits.csv",
        "decay",
        op,
        &["kind", "p", "q", "t_min", "t_max", "fitted_exponent", "predicted_exponent", "r_squared", "verdict"],
    );
    let mut tables = Vec::new();
    let mut plot = String::from("set datafile separator ','\nset key autotitle columnhead\nset logscale xy\nset xlabel 't'\nset ylabel 'norm'\n");
    let mut curves = Vec::new();
    for f in &fits {
        summary.push(vec![
            f.kind.label().into(),
            num(f.p),
            num(f.q),
            num(f.window.0),
            num(f.window.1),
            num(f.fitted_exponent),
            num(f.predicted_exponent),
            num(f.r_squared),
            format!("{:?}", f.verdict).to_lowercase(),
        ]);
        if f.times.is_empty() {
            continue;
        }
        let file = format!("decay_series_{}_p{}_q{}.csv", f.kind.label(), f.p, f.q);
        let mut t = Table::new(&file, "decay", op, &["t", "norm"]);
        for (a, b) in f.times.iter().zip(&f.norms) {
            t.push(vec![num(*a), num(*b)]);
        }
        curves.push(format!("'{file}' using 1:2 with linespoints title '{}'", f.quantity));
        tables.push(t);
    }
    if !curves.is_empty() {
        plot.push_str(&format!("set output 'decay.png'\nset terminal pngcairo\nplot {}\n", curves.join(", \\\n     ")));
    }
    tables.insert(0, summary);
    let failed = fits.iter().any(|f| f.verdict != DecayVerdict::Pass);
    let summary = fits
        .iter()
        .map(|f| format!("{}: {:.4} vs {:.4} ({:?})", f.quantity, f.fitted_exponent, f.predicted_exponent, f.verdict))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Outcome {
        report_file: "decay.json",
        report: json!({ "scenario": sc, "fits": fits }),
        tables,
        plot,
        failed,
        summary,
    })
}

fn trajectory_table(traj: &TrajectoryRecord, sc: &Scenario) -> Result<Table> {
    let mut t = Table::new("trajectory.csv", "model", "lq_norm", &["t", "theta_l2", "vel_l2"]);
    for s in &traj.states {
        let vel: Vec<&[f64]> = s.vel.iter().map(|c| c.as_slice()).collect();
        t.push(vec![num(s.time), num(lq_norm(&[&s.theta], &sc.domain, 2.0)?), num(lq_norm(&vel, &sc.domain, 2.0)?)]);
    }
    Ok(t)
}

fn picard_tables(rep: &PicardReport) -> Vec<Table> {
    let op = "picard_fixed_point";
    let mut it = Table::new("picard_iterates.csv", "scheme", op, &["iterate", "difference_energy", "contraction_factor"]);
    for (i, e) in rep.difference_energies.iter().enumerate() {
        let f = if i == 0 { String::new() } else { rep.contraction_factors.get(i - 1).map_or(String::new(), |v| num(*v)) };
        it.push(vec![(i + 1).to_string(), num(*e), f]);
    }
    let mut en = Table::new("energy.csv", "norms", "energy_et", &["component", "value"]);
    for (k, v) in &rep.energy_components {
        en.push(vec![k.clone(), num(*v)]);
    }
    en.push(vec!["total".into(), num(rep.energy_total)]);
    vec![it, en]
}

const PICARD_PLOT: &str = "set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo\n\
set output 'trajectory.png'\nset xlabel 't'\nplot 'trajectory.csv' using 1:2 with lines, '' using 1:3 with lines\n\
set output 'picard.png'\nset logscale y\nset xlabel 'iterate'\nplot 'picard_iterates.csv' using 1:2 with linespoints\n";

fn picard_run(sc: &Scenario) -> Result<(TrajectoryRecord, PicardReport)> {
    let state0 = sc.data.build(&sc.domain, sc.seed)?;
    let (traj, rep) = picard_fixed_point(&state0, &sc.domain, &sc.params, &sc.scheme)?;
    log::info!("picard: {:?} after {} iterates", rep.verdict, rep.iterates);
    Ok((traj, rep))
}

fn picard(sc: &Scenario) -> Result<Outcome> {
    let (traj, rep) = picard_run(sc)?;
    let mut tables = vec![trajectory_table(&traj, sc)?];
    tables.extend(picard_tables(&rep));
    let failed = rep.verdict != PicardVerdict::Converged;
    let summary = format!("{:?} after {} iterates, E_T = {:e}", rep.verdict, rep.iterates, rep.energy_total);
    Ok(Outcome {
        report_file: "picard.json",
        report: json!({ "scenario": sc, "picard": rep }),
        tables,
        plot: PICARD_PLOT.into(),
        failed,
        summary,
    })
}

fn monitor(sc: &Scenario) -> Result<Outcome> {
    let (traj, rep) = picard_run(sc)?;
    let mut tables = vec![trajectory_table(&traj, sc)?];
    tables.extend(picard_tables(&rep));
    if rep.verdict != PicardVerdict::Converged {
        return Ok(Outcome {
            report_file: "monitor.json",
            report: json!({ "scenario": sc, "picard": rep, "monitor": Value::Null, "euler": Value::Null }),
            tables,
            plot: PICARD_PLOT.into(),
            failed: true,
            summary: format!("picard {:?}; monitor skipped", rep.verdict),
        });
    }
    let mon = estimate_monitor(&traj, &traj.scaled(0.5), &sc.domain, &sc.params)?;
    let (_, eul) = euler_report(&traj, &sc.domain, &sc.params)?;
    let mut t = Table::new("monitor.csv", "nonlinear", "estimate_monitor", &["label", "lhs", "rhs", "ratio"]);
    for c in &mon.checks {
        t.push(vec![c.label.clone(), num(c.lhs), num(c.rhs), num(c.ratio)]);
    }
    tables.push(t);
    let mut e = Table::new("euler.csv", "scheme", "euler_report", &["label", "euler", "lagrange", "bound", "holds"]);
    for c in &eul.norm_comparisons {
        e.push(vec![c.label.clone(), num(c.euler), num(c.lagrange), num(c.bound), c.holds.to_string()]);
    }
    tables.push(e);
    let failed = !mon.max_ratio.is_finite() || eul.norm_comparisons.iter().any(|c| !c.holds);
    let summary = format!(
        "max bound ratio {:e}, Euler/Lagrange residual ratio {:.3}, chain-rule error {:e}",
        mon.max_ratio, eul.residual_ratio, eul.chain_rule_error
    );
    Ok(Outcome {
        report_file: "monitor.json",
        report: json!({ "scenario": sc, "picard": rep, "monitor": mon, "euler": eul }),
        tables,
        plot: PICARD_PLOT.into(),
        failed,
        summary,
    })
}

/// Bookkeeping for every requested `p`; defaults to `[2, 1 + sigma]`.
pub fn bookkeeping_reports(
    n: usize,
    sigma: f64,
    ps: &[f64],
    b: Option<f64>,
) -> Result<Vec<mnflow_core::decay::BookkeepingReport>> {
    let ps = if ps.is_empty() { vec![2.0, 1.0 + sigma] } else { ps.to_vec() };
    ps.iter().map(|&p| exponent_bookkeeping(n, sigma, p, b)).collect()
}

fn bookkeeping(sc: &Scenario) -> Result<Outcome> {
    let bk = &sc.bookkeeping;
    let sigma = bk.sigma.unwrap_or(sc.params.sigma);
    let reps = bookkeeping_reports(bk.n, sigma, &bk.p, bk.b)?;
    let mut t = Table::new(
        "bookkeeping.csv",
        "decay",
        "exponent_bookkeeping",
        &["n", "sigma", "p", "b", "decay_product", "weight_product", "holds"],
    );
    for r in &reps {
        t.push(vec![r.n.to_string(), num(r.sigma), num(r.p), num(r.b), num(r.decay_product), num(r.weight_product), r.holds.to_string()]);
    }
    let failed = reps.iter().any(|r| !r.holds);
    let summary = reps.iter().map(|r| format!("N={} p={}: {}", r.n, r.p, if r.holds { "holds" } else { "fails" })).collect::<Vec<_>>().join("; ");
    Ok(Outcome {
        report_file: "bookkeeping.json",
        report: json!({ "scenario": sc, "reports": reps }),
        tables: vec![t],
        plot: String::from("# no figures for the exponent bookkeeping\n"),
        failed,
        summary,
    })
}
