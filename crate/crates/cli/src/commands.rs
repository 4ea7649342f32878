//! One function per subcommand. Each returns its payloads; writing them is
//! left to the caller so that output stays serialized.

use serde_json::{json, Value};
use sthomog::cell1d::{
    effective_critical, effective_for_regime, effective_subcritical, effective_supercritical, Coefficient1D,
};
use sthomog::corrector::{
    default_schedule, effective_coefficients, lambda_continuation, limit_for_regime, slice_elliptic_limit,
    time_averaged_limit, CorrectorSolution, EffectiveCoefficients, SolveOptions,
};
use sthomog::effective::{compare_homogenization, LimitProblem};
use sthomog::sde::{covariance_of, McParams, Simulator};
use sthomog::stats::{ergodic_average_check, modulus_diagnostic};
use sthomog::Environment;

use crate::config::{CorrectorBlock, CorrectorSolver, LoadedConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Validate,
    Cell1d,
    Corrector,
    Simulate,
    Compare,
    Ergodic,
    Modulus,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Validate => "validate",
            Self::Cell1d => "cell1d",
            Self::Corrector => "corrector",
            Self::Simulate => "simulate",
            Self::Compare => "compare",
            Self::Ergodic => "ergodic",
            Self::Modulus => "modulus",
        }
    }
}

#[derive(Default)]
pub struct Artifacts {
    pub result: Option<Value>,
    /// File name and body; the config hash line is prepended on write.
    pub csv: Vec<(&'static str, String)>,
    pub seeds: Vec<u64>,
}

pub fn run(command: Command, cfg: &LoadedConfig) -> Result<Artifacts, CliError> {
    let env = Environment::build(cfg.spec()?, cfg.config.validation_grid.as_ref())?;
    match command {
        Command::Validate => Ok(Artifacts::default()),
        Command::Cell1d => cell1d(cfg, &env),
        Command::Corrector => corrector(cfg, &env),
        Command::Simulate => simulate(cfg, &env),
        Command::Compare => compare(cfg, &env),
        Command::Ergodic => ergodic(cfg, &env),
        Command::Modulus => modulus(cfg, &env),
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

fn cell1d(cfg: &LoadedConfig, env: &Environment) -> Result<Artifacts, CliError> {
    let block = cfg.block(&cfg.config.cell1d, "cell1d")?;
    if env.dimension() != 1 {
        return Err(CliError::Config(format!(
            "cell1d needs a 1-D environment, got d = {}",
            env.dimension()
        )));
    }
    let a = Coefficient1D::new(env.spec().a[0].clone()).map_err(|e| CliError::numeric("cell1d", e))?;
    let [n_t, n_x] = block.grid;
    let sub = effective_subcritical(&a, block.n_quad);
    let sup = effective_supercritical(&a, block.n_quad);
    let crit = effective_critical(&a, n_t, n_x, block.tol).map_err(|e| CliError::numeric("cell1d", e))?;
    let regime = cfg.config.scaling.regime();
    let (selected, _) = effective_for_regime(&a, regime, block.n_quad, (n_t, n_x), block.tol)
        .map_err(|e| CliError::numeric("cell1d", e))?;
    let result = json!({
        "regime": regime,
        "A": selected,
        "subcritical": sub,
        "supercritical": sup,
        "critical": {
            "A": crit.a_eff,
            "n_t": crit.n_t,
            "n_x": crit.n_x,
            "residual": crit.residual,
            "iterations": crit.iterations,
            "degenerate": crit.degenerate,
        },
    });
    Ok(Artifacts {
        result: Some(result),
        csv: vec![("critical_corrector.csv", crit.corrector_csv())],
        seeds: vec![],
    })
}

fn solve_corrector(
    env: &Environment,
    cfg: &LoadedConfig,
    block: &CorrectorBlock,
) -> Result<CorrectorSolution, CliError> {
    block.grid.check(env).map_err(|e| CliError::numeric("corrector", e))?;
    let opts = SolveOptions {
        tol: block.tol,
        max_iter: block.max_iter,
        preconditioner: block.preconditioner,
        stabilizer: block.stabilizer,
    };
    let schedule = block.lambda_schedule.clone().unwrap_or_else(default_schedule);
    let scaling = cfg.config.scaling;
    let sol = match block.solver {
        CorrectorSolver::Regime if block.lambda_schedule.is_none() => {
            limit_for_regime(env, &block.grid, scaling, &opts)
        }
        CorrectorSolver::Regime | CorrectorSolver::Continuation => {
            lambda_continuation(env, &block.grid, scaling, &schedule, &opts)
        }
        CorrectorSolver::Slice => slice_elliptic_limit(env, &block.grid, &opts),
        CorrectorSolver::TimeAveraged => time_averaged_limit(env, &block.grid, &opts),
    };
    sol.map_err(|e| CliError::numeric("corrector", e))
}

fn diagnostics_csv(sol: &CorrectorSolution) -> String {
    let mut out = String::from("lambda,theta,lambda_norm2,dirichlet,cauchy_gap,coercivity_slack,iterations,residual\n");
    for d in &sol.diagnostics {
        let gap = d.cauchy_gap.map(|g| g.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            d.lambda, d.theta, d.lambda_norm2, d.dirichlet, gap, d.coercivity_slack, d.iterations, d.residual
        ));
    }
    out
}

fn corrector(cfg: &LoadedConfig, env: &Environment) -> Result<Artifacts, CliError> {
    let block = cfg.block(&cfg.config.corrector, "corrector")?;
    let sol = solve_corrector(env, cfg, block)?;
    let coeffs = effective_coefficients(env, &sol);
    let result = json!({
        "coefficients": coeffs,
        "eigenvalues": coeffs.a_eigenvalues(),
        "method": sol.method,
        "lambda": sol.lambda,
        "theta": sol.theta,
        "diagnostics": sol.diagnostics,
    });
    Ok(Artifacts {
        result: Some(result),
        csv: vec![("lambda_diagnostics.csv", diagnostics_csv(&sol))],
        seeds: vec![],
    })
}

fn simulate(cfg: &LoadedConfig, env: &Environment) -> Result<Artifacts, CliError> {
    let block = cfg.block(&cfg.config.simulate, "simulate")?;
    let seed = cfg.seed()?;
    let scaling = cfg.config.scaling;
    let d = env.dimension();
    let x0 = block.x0.clone().unwrap_or_else(|| vec![0.0; d]);
    let sde_err = |e| CliError::numeric("sde", e);
    let h = scaling.max_step(block.eps, block.h_factor);
    let sim = Simulator::new(env, scaling, block.eps, h)
        .map_err(sde_err)?
        .record_every(block.record_every);
    let ends = sim.terminals(0.0, &x0, block.t, block.n_paths, seed).map_err(sde_err)?;

    let mut terminals = String::from("path");
    for i in 1..=d {
        terminals.push_str(&format!(",X{i}"));
    }
    terminals.push_str(",Q\n");
    for (k, end) in ends.iter().enumerate() {
        terminals.push_str(&k.to_string());
        for v in &end.x {
            terminals.push_str(&format!(",{v}"));
        }
        terminals.push_str(&format!(",{}\n", end.q));
    }
    let points: Vec<Vec<f64>> = ends.iter().map(|e| e.x.clone()).collect();
    let cov = covariance_of(d, &points).map_err(sde_err)?;
    let q_mean = ends.iter().map(|e| e.q).sum::<f64>() / ends.len() as f64;

    let mut csv = vec![("terminals.csv", terminals)];
    let recorded = block.record_paths.min(block.n_paths);
    if recorded > 0 {
        let paths = sim.paths(0.0, &x0, block.t, recorded, seed).map_err(sde_err)?;
        let mut out = String::from("path,t");
        for i in 1..=d {
            out.push_str(&format!(",X{i}"));
        }
        out.push_str(",Q\n");
        for (p, path) in paths.iter().enumerate() {
            for k in 0..path.len() {
                out.push_str(&format!("{p},{}", path.t[k]));
                for v in path.state(k) {
                    out.push_str(&format!(",{v}"));
                }
                out.push_str(&format!(",{}\n", path.q[k]));
            }
        }
        csv.push(("paths.csv", out));
    }
    let result = json!({
        "eps": block.eps,
        "t": block.t,
        "h": h,
        "n_paths": block.n_paths,
        "seed": seed,
        "x0": x0,
        "regime": scaling.regime(),
        "covariance": cov,
        "q_mean": q_mean,
    });
    Ok(Artifacts {
        result: Some(result),
        csv,
        seeds: vec![seed],
    })
}

fn compare(cfg: &LoadedConfig, env: &Environment) -> Result<Artifacts, CliError> {
    let block = cfg.block(&cfg.config.compare, "compare")?;
    let seed = cfg.seed()?;
    let d = env.dimension();
    let coeffs = match &block.coefficients {
        Some(explicit) => EffectiveCoefficients::explicit(
            explicit.a.clone(),
            explicit.c.clone().unwrap_or_else(|| vec![0.0; d]),
            explicit.u,
        ),
        None => {
            let corr = cfg.block(&cfg.config.corrector, "corrector")?;
            effective_coefficients(env, &solve_corrector(env, cfg, corr)?)
        }
    };
    let eff_err = |e| CliError::numeric("effective", e);
    let prob = LimitProblem::new(&coeffs, block.payoff.clone()).map_err(eff_err)?;
    let mc = McParams {
        n_paths: block.n_paths,
        h: f64::INFINITY,
        seed,
    };
    let table = compare_homogenization(
        env,
        cfg.config.scaling,
        &block.eps_list,
        &prob,
        &block.x,
        block.t,
        &mc,
        block.h_factor,
    )
    .map_err(eff_err)?;
    let result = json!({
        "coefficients": coeffs,
        "table": table,
    });
    Ok(Artifacts {
        result: Some(result),
        csv: vec![("compare.csv", table.to_csv())],
        seeds: vec![seed],
    })
}

fn ergodic(cfg: &LoadedConfig, env: &Environment) -> Result<Artifacts, CliError> {
    let block = cfg.block(&cfg.config.ergodic, "ergodic")?;
    let seed = cfg.seed()?;
    let scaling = cfg.config.scaling;
    let mc = McParams {
        n_paths: block.n_paths,
        h: scaling.max_step(block.eps, block.h_factor),
        seed,
    };
    let report = ergodic_average_check(
        env,
        scaling,
        block.eps,
        &block.observable,
        block.t,
        &mc,
        block.random_phase,
    )
    .map_err(|e| CliError::numeric("stats", e))?;
    Ok(Artifacts {
        result: Some(to_value(&report)),
        csv: vec![],
        seeds: vec![seed],
    })
}

fn modulus(cfg: &LoadedConfig, env: &Environment) -> Result<Artifacts, CliError> {
    let block = cfg.block(&cfg.config.modulus, "modulus")?;
    let seed = cfg.seed()?;
    let scaling = cfg.config.scaling;
    let mc = McParams {
        n_paths: block.n_paths,
        h: scaling.max_step(block.eps, block.h_factor),
        seed,
    };
    let report = modulus_diagnostic(env, scaling, block.eps, block.target, block.horizon, &block.deltas, &mc)
        .map_err(|e| CliError::numeric("stats", e))?;
    let mut csv = String::from("delta,modulus,stderr,ratio\n");
    for r in &report.rows {
        csv.push_str(&format!("{},{},{},{}\n", r.delta, r.modulus, r.stderr, r.ratio));
    }
    Ok(Artifacts {
        result: Some(to_value(&report)),
        csv: vec![("modulus.csv", csv)],
        seeds: vec![seed],
    })
}
