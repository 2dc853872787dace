//! One function per subcommand. Each returns JSON results, a CSV table and
//! wall times kept apart so reports are reproducible byte for byte.

use std::collections::BTreeMap;
use std::time::Instant;

use orthoglass::ensemble_sim::{amp_replicates, freeness_check, gram_deviation, sample_model, tap_residual};
use orthoglass::oracle::{quenched_free_energy, spherical_finite_n};
use orthoglass::rng::derive_seed;
use orthoglass::rs_core::{rs_constants_with, sphere_solve};
use orthoglass::state_evolution::{se_limit_check, se_run};
use orthoglass::validation::{run_criterion, Status, ValidationConfig, CRITERIA};
use orthoglass::variational::{default_epsilon, hciz_monte_carlo, hciz_rank1, hciz_rank2};
use orthoglass::{Execution, RSConstants};
use serde_json::{json, Value};

use crate::config::{Command, ExperimentConfig};

/// A named scalar test function for the freeness check.
type TestFn = (&'static str, Box<dyn Fn(f64) -> f64>);

const Q_MAX_ITER: usize = 2000;

/// A CSV table: header and rows of already formatted cells.
#[derive(Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// AMP iterates for the raw dump, `[replicate][x|y][t][i]`.
pub struct RawIterates {
    pub replicates: usize,
    pub t_max: usize,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub data: Vec<f64>,
}

pub struct Outcome {
    pub results: Value,
    pub table: Table,
    pub timing: BTreeMap<String, f64>,
    /// False only when `validate` has a failing criterion.
    pub passed: bool,
    pub raw: Option<RawIterates>,
}

impl Outcome {
    fn new(results: Value, table: Table) -> Self {
        Outcome { results, table, timing: BTreeMap::new(), passed: true, raw: None }
    }
}

fn num(v: f64) -> String {
    format!("{v:.17e}")
}

fn constants(cfg: &ExperimentConfig) -> orthoglass::Result<RSConstants> {
    rs_constants_with(cfg.model(), cfg.tolerances.q_star, Q_MAX_ITER)
}

pub fn run(command: Command, cfg: &ExperimentConfig, exec: Execution) -> orthoglass::Result<Outcome> {
    let start = Instant::now();
    let mut out = match command {
        Command::Rs => rs(cfg),
        Command::Se => se(cfg, exec),
        Command::Amp => amp(cfg, exec),
        Command::Enumerate => enumerate(cfg, exec),
        Command::Sphere => sphere(cfg, exec),
        Command::Hciz => hciz(cfg, exec),
        Command::Validate => validate(cfg, exec),
    }?;
    out.timing.insert("total_s".into(), start.elapsed().as_secs_f64());
    Ok(out)
}

fn rs(cfg: &ExperimentConfig) -> orthoglass::Result<Outcome> {
    let model = cfg.model();
    let c = constants(cfg)?;
    let sphere = sphere_solve(model)?;
    let mut table = Table::new(&[
        "beta",
        "q_star",
        "sigma_star_sq",
        "lambda_star",
        "kappa_star",
        "delta_star",
        "a_star",
        "psi_rs",
        "psi_rs_sphere",
    ]);
    table.push(
        [
            c.beta,
            c.q_star,
            c.sigma_star_sq,
            c.lambda_star,
            c.kappa_star,
            c.delta_star,
            c.a_star,
            c.psi_rs,
            c.psi_rs_sphere,
        ]
        .map(num)
        .to_vec(),
    );
    let results = json!({
        "constants": c,
        "sphere": sphere,
        "fixed_point_within_tolerance": c.solver.residual <= cfg.tolerances.q_star,
        "regime_warning": model.regime_warning(),
    });
    Ok(Outcome::new(results, table))
}

fn se(cfg: &ExperimentConfig, exec: Execution) -> orthoglass::Result<Outcome> {
    let c = constants(cfg)?;
    let state = se_run(cfg.model(), &c, cfg.t_max, cfg.quadrature_order, exec)?;
    let limit = se_limit_check(&state);
    let mut table = Table::new(&["s", "r", "delta", "deviation"]);
    for s in 0..state.t {
        for r in 0..state.t {
            table.push(vec![(s + 1).to_string(), (r + 1).to_string(), num(state.delta[s][r]), num(state.dev[s][r])]);
        }
    }
    let results = json!({
        "t_max": state.t,
        "delta_star": state.delta_star(),
        "delta": state.delta,
        "min_eigenvalue": state.min_eigenvalue(),
        "limit": limit,
    });
    Ok(Outcome::new(results, table))
}

fn replicate_seeds(cfg: &ExperimentConfig, offset: u64) -> Vec<u64> {
    (0..cfg.replicates as u64).map(|r| derive_seed(cfg.seed(), offset + r)).collect()
}

fn amp(cfg: &ExperimentConfig, exec: Execution) -> orthoglass::Result<Outcome> {
    let model = cfg.model();
    let c = constants(cfg)?;
    let mut timing = BTreeMap::new();
    let t0 = Instant::now();
    let se = se_run(model, &c, cfg.t_max, cfg.quadrature_order, exec)?;
    timing.insert("state_evolution_s".to_string(), t0.elapsed().as_secs_f64());

    let t1 = Instant::now();
    let seeds = replicate_seeds(cfg, 0);
    let reps = amp_replicates(model, &c, cfg.n, cfg.t_max, &seeds, cfg.placement, exec)?;
    timing.insert("amp_s".to_string(), t1.elapsed().as_secs_f64());

    let lam = c.lambda_star;
    let fs: [TestFn; 3] =
        [("x", Box::new(|x| x)), ("x2", Box::new(|x| x * x)), ("resolvent", Box::new(move |x| 1.0 / (lam - x)))];
    let mut table = Table::new(&[
        "seed",
        "gram_xx",
        "gram_yy",
        "gram_xy",
        "tap_residual",
        "freeness_x",
        "freeness_x2",
        "freeness_resolvent",
    ]);
    let mut rows = Vec::new();
    let mut within = true;
    for rep in &reps {
        let g = gram_deviation(&rep.trace, &se, c.kappa_star);
        let tap = if cfg.t_max >= 2 { Some(tap_residual(&rep.trace, &rep.sample, model, &c)?) } else { None };
        let mut free = Vec::new();
        for (_, f) in &fs {
            free.push(freeness_check(&rep.trace, &rep.sample, model, &se, f.as_ref())?.max_abs);
        }
        within &= g.xx.max(g.yy).max(g.xy) <= cfg.tolerances.gram;
        within &= free.iter().all(|&v| v <= cfg.tolerances.freeness);
        let mut row = vec![rep.sample.seed.to_string(), num(g.xx), num(g.yy), num(g.xy)];
        row.push(tap.map_or_else(String::new, num));
        row.extend(free.iter().map(|&v| num(v)));
        table.push(row);
        rows.push(json!({
            "seed": rep.sample.seed,
            "gram": g,
            "tap_residual": tap,
            "freeness": {"x": free[0], "x2": free[1], "resolvent": free[2]},
            "degenerate_init": rep.trace.degenerate_init,
        }));
    }
    let raw = cfg.output.raw_dump.then(|| {
        let mut data = Vec::with_capacity(reps.len() * 2 * cfg.t_max * cfg.n);
        for rep in &reps {
            for x in &rep.trace.x {
                data.extend_from_slice(x);
            }
            for y in &rep.trace.y[1..] {
                data.extend_from_slice(y);
            }
        }
        RawIterates { replicates: reps.len(), t_max: cfg.t_max, n: cfg.n, seeds: seeds.clone(), data }
    });
    let results = json!({
        "n": cfg.n,
        "t_max": cfg.t_max,
        "constants": c,
        "se_delta": se.delta,
        "replicates": rows,
        "within_tolerance": within,
    });
    Ok(Outcome { results, table, timing, passed: true, raw })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn enumerate(cfg: &ExperimentConfig, exec: Execution) -> orthoglass::Result<Outcome> {
    let model = cfg.model();
    let psi = constants(cfg)?.psi_rs;
    let mut table = Table::new(&["n", "beta", "seed", "log_z_per_n", "psi_rs", "gap"]);
    let mut sizes = Vec::new();
    let mut medians = Vec::new();
    let mut timing = BTreeMap::new();
    for &n in &cfg.n_list {
        let t0 = Instant::now();
        let est =
            quenched_free_energy(model, n, cfg.replicates, derive_seed(cfg.seed(), n as u64), cfg.placement, exec)?;
        timing.insert(format!("enumerate_n{n}_s"), t0.elapsed().as_secs_f64());
        for (v, s) in est.values.iter().zip(&est.seeds) {
            table.push(vec![n.to_string(), num(model.beta), s.to_string(), num(*v), num(psi), num(v - psi)]);
        }
        let med = median(est.values.iter().map(|v| (v - psi).abs()).collect());
        medians.push(med);
        sizes.push(json!({
            "n": n,
            "mean": est.mean,
            "std_error": est.std_error,
            "median_abs_gap": med,
            "mean_gap": est.mean - psi,
            "within_tolerance": (est.mean - psi).abs() <= cfg.tolerances.free_energy_gap,
        }));
    }
    // Over the sorted sizes; at a few dozen replicates this is noisy.
    let mut by_n: Vec<(usize, f64)> = cfg.n_list.iter().copied().zip(medians).collect();
    by_n.sort_by_key(|p| p.0);
    let non_increasing = by_n.windows(2).all(|w| w[1].1 <= w[0].1);
    let results = json!({ "psi_rs": psi, "sizes": sizes, "median_gap_non_increasing": non_increasing });
    Ok(Outcome { results, table, timing, passed: true, raw: None })
}

fn sphere(cfg: &ExperimentConfig, exec: Execution) -> orthoglass::Result<Outcome> {
    let model = cfg.model();
    let limit = sphere_solve(model)?;
    let seeds = replicate_seeds(cfg, 0);
    let values = orthoglass::par::map_slice(exec, &seeds, |&s| -> orthoglass::Result<_> {
        let sample = sample_model(model, cfg.n, s, cfg.placement)?;
        spherical_finite_n(&sample, model)
    })
    .into_iter()
    .collect::<orthoglass::Result<Vec<_>>>()?;
    let mut table = Table::new(&["n", "seed", "value", "gamma", "psi_rs_sphere", "gap"]);
    for (v, s) in values.iter().zip(&seeds) {
        table.push(vec![
            cfg.n.to_string(),
            s.to_string(),
            num(v.value),
            num(v.exponent.gamma_opt),
            num(limit.value),
            num(v.value - limit.value),
        ]);
    }
    let mean = values.iter().map(|v| v.value).sum::<f64>() / values.len() as f64;
    let results = json!({
        "n": cfg.n,
        "limit": limit,
        "mean_finite_n": mean,
        "values": values.iter().map(|v| v.value).collect::<Vec<_>>(),
        "seeds": seeds,
        "within_tolerance": (mean - limit.value).abs() <= cfg.tolerances.sphere_gap,
    });
    Ok(Outcome::new(results, table))
}

fn hciz(cfg: &ExperimentConfig, exec: Execution) -> orthoglass::Result<Outcome> {
    let model = cfg.model();
    let h = &cfg.hciz;
    let n = cfg.n;
    let d: Vec<f64> = (0..n).map(|i| model.beta * model.spectral.quantile((i as f64 + 0.5) / n as f64)).collect();
    let a = vec![h.alpha.max(0.0).sqrt(); n];
    let b = vec![h.b_scale; n];
    let dplus = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exact = hciz_rank1(&a, &b, &d, default_epsilon(dplus))?;
    // Second pair: `c = √α·(1, −1, 1, …)` and `b₂ = b_scale·(1, −1, …)`.
    let sign = |i: usize| if i % 2 == 0 { 1.0 } else { -1.0 };
    let c: Vec<f64> = (0..n).map(|i| sign(i) * a[i]).collect();
    let b2: Vec<f64> = (0..n).map(|i| sign(i) * h.b_scale).collect();
    let rank2 = hciz_rank2(&a, &b, &c, &b2, &d, default_epsilon(dplus))?;
    let mc = hciz_monte_carlo(&a, &b, &d, h.draws, h.shards, cfg.seed(), exec)?;
    let gap = mc.exponent - exact.value;
    let mut table = Table::new(&["n", "alpha", "gamma_opt", "exponent", "rank2_exponent", "monte_carlo", "ess", "gap"]);
    table.push(vec![
        n.to_string(),
        num(exact.alpha),
        num(exact.gamma_opt),
        num(exact.value),
        num(rank2.value),
        num(mc.exponent),
        num(mc.ess),
        num(gap),
    ]);
    let results = json!({
        "rank1": exact,
        "rank2": rank2,
        "monte_carlo": mc,
        "gap": gap,
        "within_tolerance": gap.abs() <= cfg.tolerances.hciz_gap,
    });
    Ok(Outcome::new(results, table))
}

fn validate(cfg: &ExperimentConfig, exec: Execution) -> orthoglass::Result<Outcome> {
    let vc = ValidationConfig { seed: cfg.seed(), exec };
    let ids = cfg.criteria.clone().unwrap_or_else(|| CRITERIA.to_vec());
    let mut table = Table::new(&["id", "name", "status", "measured", "tolerance"]);
    let mut reports = Vec::new();
    let mut timing = BTreeMap::new();
    let mut passed = true;
    for id in ids {
        let mut report = run_criterion(id, &vc)?;
        log::info!("{}", report.summary_line());
        timing.insert(format!("criterion_{id}_s"), report.wall_time_s);
        // Wall time lives only in `timing`.
        report.wall_time_s = 0.0;
        passed &= report.passed();
        let status = match report.status {
            Status::Pass => "pass",
            Status::Warn => "warn",
            Status::Fail => "fail",
        };
        table.push(vec![
            id.to_string(),
            report.name.clone(),
            status.into(),
            num(report.measured),
            num(report.tolerance),
        ]);
        let mut v = serde_json::to_value(&report).expect("report serializes");
        if let Value::Object(m) = &mut v {
            m.remove("wall_time_s");
        }
        reports.push(v);
    }
    let results = json!({ "passed": passed, "criteria": reports });
    Ok(Outcome { results, table, timing, passed, raw: None })
}
