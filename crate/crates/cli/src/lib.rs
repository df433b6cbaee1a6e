//! Experiment runner behind the `umstab` binary.
//!
//! Every subcommand reads an [`ExperimentConfig`], applies the global flag
//! overrides, writes `<out>/<subcommand>.csv` and `<out>/manifest.txt`, and
//! reports errors with the entry that produced them.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use umstab::config::{ExperimentConfig, MarketSpec, SweepSpec};
use umstab::duality::{dual_value, incomplete_dual_search, solve_complete, CompleteMarketProblem, OrthogonalIntegrand};
use umstab::market::{
    asset_path, simulate_driver, stochastic_exponential, terminal_deflator, wealth_path, PathEnsemble, Strategy,
};
use umstab::stability::{stability_sweep, v_relative_compactness_diag, MarketSequence};
use umstab::stats::weighted_mean;
use umstab::worked_examples::{counterexample_ensemble, counterexample_monte_carlo, counterexample_wealth};

#[derive(Debug, Parser)]
#[command(name = "umstab", version, about = "Utility-maximization stability experiments")]
pub struct Cli {
    /// TOML experiment description; defaults apply for missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// RNG seed; overrides `monte_carlo.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of Monte Carlo paths.
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Number of time steps on the grid.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Per-step means of the deflator, asset and a fixed-fraction wealth.
    Simulate,
    /// Complete-market optimum via the budget multiplier.
    Solve,
    /// Dual values and the orthogonal-integrand search on the y grid.
    Dual,
    /// Closed-form and Monte Carlo table of the instability counterexample.
    Counterexample {
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<u64>>,
    },
    /// Stability sweep over the configured market sequence.
    Sweep,
    /// Uniform-integrability diagnostic for the sequence's deflators.
    UiDiag,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Solve => "solve",
            Self::Dual => "dual",
            Self::Counterexample { .. } => "counterexample",
            Self::Sweep => "sweep",
            Self::UiDiag => "ui-diag",
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("umstab: {e:#}");
            1
        }
    }
}

/// Runs a parsed invocation and returns the path of the CSV written.
pub fn execute(cli: &Cli) -> Result<PathBuf> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.monte_carlo.seed = seed;
    }
    if let Some(paths) = cli.paths {
        cfg.monte_carlo.paths = paths;
    }
    if let Some(steps) = cli.steps {
        cfg.grid.steps = steps;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.display().to_string();
    }
    if let Command::Counterexample { n_list: Some(list) } = &cli.command {
        cfg.counterexample.n_list = list.clone();
    }

    let out = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let name = cli.command.name();
    let table = match cli.command {
        Command::Simulate => simulate(&cfg),
        Command::Solve => solve(&cfg),
        Command::Dual => dual(&cfg),
        Command::Counterexample { .. } => counterexample(&cfg),
        Command::Sweep => sweep(&cfg),
        Command::UiDiag => ui_diag(&cfg),
    }
    .with_context(|| format!("{name} failed"))?;
    let csv_path = out.join(format!("{name}.csv"));
    table.write(&csv_path)?;
    write_manifest(&out.join("manifest.txt"), name, &cfg)?;
    Ok(csv_path)
}

/// Floats carry 17 significant digits so they parse back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn write_manifest(path: &Path, name: &str, cfg: &ExperimentConfig) -> Result<()> {
    let text = format!(
        "subcommand = {name}\nseed = {}\npaths = {}\nsteps = {}\numstab-cli = {}\numstab-core = {}\n\n# config\n{}",
        cfg.monte_carlo.seed,
        cfg.monte_carlo.paths,
        cfg.grid.steps,
        env!("CARGO_PKG_VERSION"),
        umstab::VERSION,
        cfg.to_toml_string()?,
    );
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn ensemble(cfg: &ExperimentConfig, second_driver: bool) -> Result<PathEnsemble> {
    let grid = cfg.grid.build()?;
    let mc = &cfg.monte_carlo;
    let ens = match cfg.market {
        MarketSpec::Counterexample { n } => {
            anyhow::ensure!(!second_driver, "the counterexample market has no orthogonal driver");
            counterexample_ensemble(&grid, mc.paths, mc.seed, &[n])?
        }
        _ => simulate_driver(&grid, mc.paths, mc.seed, second_driver)?,
    };
    Ok(ens)
}

fn stamp(cfg: &ExperimentConfig) -> [String; 2] {
    [cfg.monte_carlo.seed.to_string(), cfg.monte_carlo.paths.to_string()]
}

fn simulate(cfg: &ExperimentConfig) -> Result<Table> {
    let ens = ensemble(cfg, false)?;
    let lambda = cfg.market.risk_process();
    let z = stochastic_exponential(&lambda, &ens)?;
    let s = asset_path(&lambda, &ens, cfg.simulate.form)?;
    let x = wealth_path(
        &Strategy::WealthFraction(cfg.simulate.wealth_fraction),
        &lambda,
        &ens,
        cfg.solve.initial_wealth,
        cfg.simulate.form,
    )?;
    let times = ens.grid().times();
    let mut driver = vec![0.0; ens.n_paths()];
    let mut t = Table::new(vec![
        "seed",
        "n_paths",
        "step",
        "t",
        "mean_driver",
        "mean_deflator",
        "se_deflator",
        "mean_asset",
        "se_asset",
        "mean_wealth",
        "se_wealth",
        "negative_asset_fraction",
    ]);
    for (k, &time) in times.iter().enumerate() {
        if k > 0 {
            for (i, m) in driver.iter_mut().enumerate() {
                *m += ens.path(i).m_increments[k - 1];
            }
        }
        let zk = weighted_mean(&z.column(k), None);
        let sk_col = s.paths.column(k);
        let sk = weighted_mean(&sk_col, None);
        let xk = weighted_mean(&x.paths.column(k), None);
        let negative = sk_col.iter().filter(|&&v| v < 0.0).count() as f64 / sk_col.len() as f64;
        let mut row = stamp(cfg).to_vec();
        row.extend([
            k.to_string(),
            fmt_f64(time),
            fmt_f64(weighted_mean(&driver, None).mean),
            fmt_f64(zk.mean),
            fmt_f64(zk.std_error),
            fmt_f64(sk.mean),
            fmt_f64(sk.std_error),
            fmt_f64(xk.mean),
            fmt_f64(xk.std_error),
            fmt_f64(negative),
        ]);
        t.push(row);
    }
    Ok(t)
}

fn solve(cfg: &ExperimentConfig) -> Result<Table> {
    let ens = ensemble(cfg, false)?;
    let u = cfg.utility.build()?;
    let z = terminal_deflator(&cfg.market.risk_process(), &ens)?;
    let x = cfg.solve.initial_wealth;
    let p = CompleteMarketProblem::new(z, ens.weights().map(|w| w.to_vec()), u.clone(), x)?;
    let s = solve_complete(&p).with_context(|| format!("solving {} at x = {x}", u.label()))?;
    let mut t = Table::new(vec![
        "seed",
        "n_paths",
        "utility",
        "x",
        "y",
        "y_std_error",
        "primal_value",
        "primal_std_error",
        "dual_value",
        "dual_std_error",
        "budget_residual",
        "iterations",
        "converged",
    ]);
    let mut row = stamp(cfg).to_vec();
    row.extend([
        u.label().to_string(),
        fmt_f64(x),
        fmt_f64(s.y),
        fmt_f64(s.y_std_error),
        fmt_f64(s.primal_value.mean),
        fmt_f64(s.primal_value.std_error),
        fmt_f64(s.dual_value.mean),
        fmt_f64(s.dual_value.std_error),
        fmt_f64(s.budget_residual),
        s.iterations.to_string(),
        s.converged.to_string(),
    ]);
    t.push(row);
    Ok(t)
}

fn dual(cfg: &ExperimentConfig) -> Result<Table> {
    let ens = ensemble(cfg, true)?;
    let u = cfg.utility.build()?;
    let z = terminal_deflator(&cfg.market.risk_process(), &ens)?;
    let family = cfg.dual.family();
    let mut t = Table::new(vec![
        "seed",
        "n_paths",
        "y",
        "dual_value",
        "dual_std_error",
        "search_value",
        "search_std_error",
        "best_nu",
        "rejected_paths",
    ]);
    for &y in &cfg.dual.y_grid {
        let v = dual_value(&z, ens.weights(), &u, y).with_context(|| format!("dual value at y = {y}"))?;
        let s = incomplete_dual_search(&z, &ens, &family, &u, y).with_context(|| format!("dual search at y = {y}"))?;
        let nu = match &s.best.nu {
            OrthogonalIntegrand::Constant(c) => fmt_f64(*c),
            OrthogonalIntegrand::Piecewise(v) => v.iter().map(|c| fmt_f64(*c)).collect::<Vec<_>>().join(";"),
        };
        let mut row = stamp(cfg).to_vec();
        row.extend([
            fmt_f64(y),
            fmt_f64(v.mean),
            fmt_f64(v.std_error),
            fmt_f64(s.value.mean),
            fmt_f64(s.value.std_error),
            nu,
            s.rejected[s.best_index].to_string(),
        ]);
        t.push(row);
    }
    Ok(t)
}

fn counterexample(cfg: &ExperimentConfig) -> Result<Table> {
    let mc = &cfg.monte_carlo;
    let mut t = Table::new(vec![
        "seed",
        "n_paths",
        "n",
        "alpha",
        "beta",
        "mean_f",
        "c",
        "y4",
        "norm_bound",
        "mc_y4",
        "mc_y4_std_error",
        "ky_fan_two_thirds",
        "budget_residual",
        "budget_std_error",
    ]);
    for &n in &cfg.counterexample.n_list {
        let w = counterexample_wealth(n, mc.paths, mc.seed).with_context(|| format!("counterexample n = {n}"))?;
        let est = counterexample_monte_carlo(n, mc.paths, mc.seed)?;
        let p = w.params;
        let mut row = stamp(cfg).to_vec();
        row.extend([
            n.to_string(),
            fmt_f64(p.alpha),
            fmt_f64(p.beta),
            fmt_f64(p.mean_f),
            fmt_f64(p.c),
            fmt_f64(p.multiplier_fourth_power()),
            fmt_f64(p.norm_bound()),
            fmt_f64(est.multiplier_fourth_power.mean),
            fmt_f64(est.multiplier_fourth_power.std_error),
            fmt_f64(w.ky_fan_to_two_thirds),
            fmt_f64(w.budget_residual),
            fmt_f64(w.budget.std_error),
        ]);
        t.push(row);
    }
    Ok(t)
}

fn sequence(cfg: &ExperimentConfig) -> Result<MarketSequence> {
    let grid = cfg.grid.build()?;
    let mc = &cfg.monte_carlo;
    Ok(match &cfg.sweep {
        SweepSpec::RelativeShift { base, indices } => MarketSequence::relative_shift(
            *base,
            indices,
            Arc::new(simulate_driver(&grid, mc.paths, mc.seed, false)?),
        ),
        SweepSpec::AdditiveShift { base, indices } => MarketSequence::additive_shift(
            *base,
            indices,
            Arc::new(simulate_driver(&grid, mc.paths, mc.seed, false)?),
        ),
        SweepSpec::Counterexample { indices } => MarketSequence::counterexample(
            indices,
            Arc::new(counterexample_ensemble(&grid, mc.paths, mc.seed, indices)?),
        ),
    })
}

fn sweep(cfg: &ExperimentConfig) -> Result<Table> {
    let seq = sequence(cfg)?;
    let u = cfg.utility.build()?;
    let report = stability_sweep(&seq, &u, cfg.solve.initial_wealth).context("solving the limit market")?;
    let mut t = Table::new(vec![
        "seed",
        "n_paths",
        "n",
        "l2_distance",
        "l2_is_bound",
        "ucp_distance",
        "value",
        "value_gap",
        "multiplier",
        "multiplier_std_error",
        "wealth_kyfan",
        "deflator_kyfan",
        "error",
    ]);
    for row in &report.rows {
        let mut out = stamp(cfg).to_vec();
        out.push(row.n.to_string());
        match &row.outcome {
            Ok(m) => out.extend([
                fmt_f64(m.l2_distance),
                m.l2_is_bound.to_string(),
                fmt_f64(m.ucp_distance),
                fmt_f64(m.value),
                fmt_f64(m.value_gap),
                fmt_f64(m.multiplier),
                fmt_f64(m.multiplier_std_error),
                fmt_f64(m.wealth_kyfan),
                fmt_f64(m.deflator_kyfan),
                String::new(),
            ]),
            Err(e) => {
                out.extend(std::iter::repeat_n(String::new(), 9));
                out.push(e.to_string());
            }
        }
        t.push(out);
    }
    Ok(t)
}

fn ui_diag(cfg: &ExperimentConfig) -> Result<Table> {
    let seq = sequence(cfg)?;
    let u = cfg.utility.build()?;
    let cert = v_relative_compactness_diag(&seq.deflator_family()?, &u, &cfg.ui)?;
    let mut t = Table::new(vec!["seed", "n_paths", "k", "tail", "worst_member", "threshold", "passed"]);
    for ((k, tail), member) in cert.k_grid.iter().zip(&cert.tail_curve).zip(&cert.worst_member) {
        let mut row = stamp(cfg).to_vec();
        row.extend([
            fmt_f64(*k),
            fmt_f64(*tail),
            member.to_string(),
            fmt_f64(cert.threshold),
            cert.passed.to_string(),
        ]);
        t.push(row);
    }
    Ok(t)
}
