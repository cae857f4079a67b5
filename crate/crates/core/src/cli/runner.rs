//! Scenario pipelines and their CSV artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::{ScenarioConfig, ScenarioKind};
use crate::equilibrium::{robustness_study, solve_equilibrium, EquilibriumSolution};
use crate::error::{Error, Result};
use crate::metrics::{cancellation_probability, economic_series};
use crate::model::ModelParams;
use crate::table::LevelTable;
use crate::validation::{best_response_check, predicted_value, simulate_agent};

/// Outcome of a scenario whose artifacts were written.
#[derive(Debug, Clone)]
pub struct RunSummary {
    /// False if any equilibrium solve hit `max_iter` first.
    pub converged: bool,
    /// One `(label, iterations, final residual)` per equilibrium solve.
    pub solves: Vec<(String, usize, f64)>,
    pub out_dir: PathBuf,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_surface(path: &Path, column: &str, t: &LevelTable, p: &ModelParams) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "q", column])?;
    for j in 0..t.n_times() {
        let time = num(p.grid.time(j));
        for q in t.levels() {
            w.write_record([time.as_str(), &q.to_string(), &num(t.get(q, j))])?;
        }
    }
    finish(w, path)
}

/// Writes quotes, values, population, mean quote, metrics and residual log.
pub fn write_solution(dir: &Path, eq: &EquilibriumSolution, p: &ModelParams) -> Result<()> {
    create_dir(dir)?;
    write_surface(&dir.join("quotes.csv"), "delta_star", &eq.quotes, p)?;
    write_surface(&dir.join("values.csv"), "h", &eq.values, p)?;
    write_surface(&dir.join("population.csv"), "P", &eq.population, p)?;

    let path = dir.join("mean_quote.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["t", "delta_bar"])?;
    for (j, v) in eq.delta_bar.values().iter().enumerate() {
        w.write_record([num(p.grid.time(j)), num(*v)])?;
    }
    finish(w, &path)?;

    let m = economic_series(eq, p)?;
    let path = dir.join("metrics.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["t", "C", "R", "V", "K", "Kbar"])?;
    for j in 0..m.len() {
        w.write_record([
            num(p.grid.time(j)),
            num(m.cost[j]),
            num(m.revenue[j]),
            num(m.volume[j]),
            m.avg_cost[j].map(num).unwrap_or_default(),
            num(m.inst_cost[j]),
        ])?;
    }
    finish(w, &path)?;

    let path = dir.join("residuals.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["iter", "residual"])?;
    for (i, r) in eq.residual_history.iter().enumerate() {
        w.write_record([(i + 1).to_string(), num(*r)])?;
    }
    finish(w, &path)
}

fn write_manifest(dir: &Path, cfg: &ScenarioConfig, solves: &[(String, usize, f64)]) -> Result<()> {
    let mut text = String::new();
    for (label, iterations, residual) in solves {
        text.push_str(&format!("# {label}: iterations = {iterations}\n"));
        text.push_str(&format!("# {label}: final_residual = {residual:e}\n"));
    }
    text.push_str(&cfg.to_document());
    write_text(&dir.join("manifest.cfg"), &text)
}

struct Runner<'a> {
    cfg: &'a ScenarioConfig,
    out: &'a Path,
    quiet: bool,
    solves: Vec<(String, usize, f64)>,
    converged: bool,
}

impl Runner<'_> {
    fn log(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn solve(&mut self, label: &str, p: &ModelParams, dir: &Path) -> Result<EquilibriumSolution> {
        let eq = solve_equilibrium(p, &self.cfg.solver)?;
        self.log(&format!(
            "{label}: {} after {} iterations, residual {:e}",
            if eq.converged { "converged" } else { "NOT converged" },
            eq.iterations,
            eq.final_residual()
        ));
        self.converged &= eq.converged;
        self.solves
            .push((label.to_string(), eq.iterations, eq.final_residual()));
        write_solution(dir, &eq, p)?;
        Ok(eq)
    }

    fn run(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let p = &cfg.model;
        let out = self.out;
        match cfg.kind {
            ScenarioKind::Reference | ScenarioKind::Equilibrium => {
                self.solve(cfg.kind.name(), p, out)?;
            }
            ScenarioKind::BetaSweep => self.beta_sweep()?,
            ScenarioKind::PriceCap => {
                self.solve("capped", p, out)?;
                let mut free = *p;
                free.bounds.upper = f64::INFINITY;
                self.solve("uncapped", &free, &out.join("uncapped"))?;
            }
            ScenarioKind::Oversell => {
                let eq = self.solve("oversell", p, out)?;
                let r = cancellation_probability(eq.population.terminal(), p)?;
                let mut text = format!("probability = {}\n", num(r.probability));
                for (q, v) in &r.per_depth {
                    text.push_str(&format!("depth_{q} = {}\n", num(*v)));
                }
                write_text(&out.join("cancellation.txt"), &text)?;
            }
            ScenarioKind::Robustness => {
                self.solve("baseline", p, out)?;
                self.robustness()?;
            }
            ScenarioKind::Validate => {
                let eq = self.solve("equilibrium", p, out)?;
                self.validate(&eq)?;
            }
        }
        Ok(())
    }

    fn beta_sweep(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let path = self.out.join("sweep.csv");
        let mut rows = Vec::new();
        for &beta in &cfg.sweep_values {
            let mut p = cfg.model;
            p.intensity.beta = beta;
            p.validate()?;
            let dir = self.out.join(format!("beta_{beta}"));
            let eq = self.solve(&format!("beta = {beta}"), &p, &dir)?;
            let m = economic_series(&eq, &p)?;
            rows.push([
                num(beta),
                eq.converged.to_string(),
                eq.iterations.to_string(),
                num(eq.final_residual()),
                num(eq.population.terminal()[0]),
                num(m.final_volume()),
                num(m.final_revenue()),
            ]);
        }
        let mut w = csv_writer(&path)?;
        w.write_record(["beta", "converged", "iterations", "residual", "P_stop_T", "V_T", "R_T"])?;
        for r in rows {
            w.write_record(r)?;
        }
        finish(w, &path)
    }

    fn robustness(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let report = robustness_study(&cfg.model, &cfg.solver, cfg.robustness_trials, cfg.seed)?;
        self.log(&format!(
            "robustness: {} of {} trials used, max standard error {:e}",
            report.n_used,
            report.trials.len(),
            report.max_std_error()
        ));
        self.converged &= report.trials.iter().all(|t| t.converged);

        let path = self.out.join("stderr_per_t.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["t", "mean", "std_error"])?;
        for (j, (m, s)) in report.mean.iter().zip(&report.std_error).enumerate() {
            w.write_record([num(cfg.model.grid.time(j)), num(*m), num(*s)])?;
        }
        finish(w, &path)?;

        let path = self.out.join("trials.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["trial", "converged", "iterations", "residual", "error"])?;
        for (i, t) in report.trials.iter().enumerate() {
            w.write_record([
                i.to_string(),
                t.converged.to_string(),
                t.iterations.to_string(),
                num(t.final_residual),
                t.error.clone().unwrap_or_default(),
            ])?;
        }
        finish(w, &path)
    }

    fn validate(&mut self, eq: &EquilibriumSolution) -> Result<()> {
        let cfg = self.cfg;
        let p = &cfg.model;
        let report = simulate_agent(eq, p, cfg.n_paths, cfg.seed, None)?;
        let rows = best_response_check(eq, p, &cfg.shifts, cfg.n_paths, cfg.seed)?;
        let base = report.estimate;
        let predicted = predicted_value(eq, p);
        self.log(&format!(
            "validate: mean {} (se {}) against predicted {}",
            base.mean, base.std_error, predicted
        ));

        let path = self.out.join("montecarlo.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["strategy", "shift", "mean", "std_error", "n_paths", "z", "note"])?;
        let z = (base.mean - predicted) / base.std_error;
        w.write_record([
            "equilibrium".into(),
            num(0.0),
            num(base.mean),
            num(base.std_error),
            base.n_paths.to_string(),
            num(z),
            format!("z against predicted value {}", num(predicted)),
        ])?;
        for r in &rows {
            let record = match &r.estimate {
                Ok(e) => [
                    "shifted".into(),
                    num(r.shift),
                    num(e.mean),
                    num(e.std_error),
                    e.n_paths.to_string(),
                    r.z_gain(&base).map(num).unwrap_or_default(),
                    "z gain over equilibrium".into(),
                ],
                Err(msg) => [
                    "shifted".into(),
                    num(r.shift),
                    String::new(),
                    String::new(),
                    "0".into(),
                    String::new(),
                    msg.clone(),
                ],
            };
            w.write_record(record)?;
        }
        finish(w, &path)?;

        let path = self.out.join("histogram.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["t", "q", "empirical", "theoretical"])?;
        for h in &report.checkpoints {
            let theory = eq.population.column(h.index);
            for (q, (e, th)) in p.inventory.levels().zip(h.proportions.iter().zip(theory)) {
                w.write_record([num(h.time), q.to_string(), num(*e), num(*th)])?;
            }
        }
        finish(w, &path)
    }
}

/// Runs the pipeline of `cfg.kind` and writes every artifact under `out`.
///
/// A manifest is written even when the pipeline fails; in that case it is
/// accompanied by `error.txt`.
pub fn run_scenario(cfg: &ScenarioConfig, out: &Path, quiet: bool) -> Result<RunSummary> {
    cfg.validate()?;
    create_dir(out)?;
    let mut runner = Runner {
        cfg,
        out,
        quiet,
        solves: Vec::new(),
        converged: true,
    };
    let result = runner.run();
    write_manifest(out, cfg, &runner.solves)?;
    match result {
        Ok(()) => Ok(RunSummary {
            converged: runner.converged,
            solves: runner.solves,
            out_dir: out.to_path_buf(),
        }),
        Err(e) => {
            write_text(&out.join("error.txt"), &format!("{e}\n"))?;
            Err(e)
        }
    }
}
