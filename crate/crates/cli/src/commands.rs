use std::collections::BTreeSet;

use serde::Serialize;
use smpde_core::averaging::{averaging_experiment, g_sigma_sup, sigma_bar, AveragingScenario};
use smpde_core::besov::verify_dyadic_bound;
use smpde_core::convolution::{regularity_of, StochasticConvolution};
use smpde_core::heat::{kernel, kernel_dx};
use smpde_core::measure::{
    deterministic_lebesgue, sample_alpha_stable, sample_fbm, sample_weighted_wiener, sample_wiener, unit_masses,
};
use smpde_core::solver::MildSolver;
use smpde_core::{GridSpec, MeasureSample, SpaceTimeField};

use crate::config::{Command, ExperimentConfig, Format, MeasureConfig};
use crate::error::CliError;
use crate::formats::{csv_bytes, field_csv, measure_from_bytes, measure_to_bytes, space_time_to_bytes};
use crate::output::Output;
use crate::seed::{seed_split, stream};

pub fn measure_sample(cfg: &ExperimentConfig, master_seed: u64) -> Result<MeasureSample, CliError> {
    let g = &cfg.grid;
    let seed = seed_split(master_seed, stream::MEASURE);
    Ok(match &cfg.measure {
        MeasureConfig::Wiener => sample_wiener(g, seed),
        MeasureConfig::WeightedWiener { weight } => sample_weighted_wiener(g, *weight, seed)?,
        MeasureConfig::Fbm { hurst } => sample_fbm(g, *hurst, seed)?,
        MeasureConfig::AlphaStable { alpha } => sample_alpha_stable(g, *alpha, seed)?,
        MeasureConfig::Lebesgue => deterministic_lebesgue(g),
        MeasureConfig::Zero => MeasureSample::zero(*g),
        MeasureConfig::File { path } => {
            let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
            let sample = measure_from_bytes(&bytes)?;
            g.check_same(sample.grid())?;
            sample
        }
    })
}

fn slice_levels(cfg: &ExperimentConfig) -> Vec<usize> {
    let g = &cfg.grid;
    let times = if cfg.output.slice_times.is_empty() {
        vec![0.0, 0.5 * g.t_max, g.t_max]
    } else {
        cfg.output.slice_times.clone()
    };
    let levels: BTreeSet<usize> = times
        .iter()
        .map(|t| ((t / g.dt()).round() as usize).min(g.nt))
        .collect();
    levels.into_iter().collect()
}

fn write_space_time(out: &mut Output, cfg: &ExperimentConfig, stem: &str, u: &SpaceTimeField) -> Result<(), CliError> {
    if out.wants(Format::Binary) {
        out.write(&format!("{stem}.bin"), &space_time_to_bytes(u))?;
    }
    if out.wants(Format::Csv) {
        for k in slice_levels(cfg) {
            out.write(&format!("{stem}_level_{k:05}.csv"), &field_csv(&u.slice(k))?)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct RunHeader<'a> {
    command: &'a str,
    seed: u64,
    grid: GridSpec,
    measure: &'a MeasureConfig,
}

fn header<'a>(cfg: &'a ExperimentConfig, seed: u64) -> RunHeader<'a> {
    RunHeader {
        command: cfg.command.name(),
        seed,
        grid: cfg.grid,
        measure: &cfg.measure,
    }
}

pub fn execute(cfg: &ExperimentConfig, seed: u64, out: &mut Output) -> Result<(), CliError> {
    match cfg.command {
        Command::Solve => solve(cfg, seed, out),
        Command::Average => average(cfg, seed, out),
        Command::Regularity => regularity(cfg, seed, out),
        Command::BesovCheck => besov_check(cfg, seed, out),
        Command::SmSample => sm_sample(cfg, seed, out),
        Command::KernelTable => kernel_table(cfg, out),
    }
}

fn solve(cfg: &ExperimentConfig, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let sample = measure_sample(cfg, seed)?;
    let coeffs = cfg.coefficients.resolve();
    let solver_cfg = cfg.solver.solver_config(cfg.grid);
    let solver = MildSolver::new(&coeffs, &sample, solver_cfg.backend)?;
    let (u, report) = solver.solve(&solver_cfg)?;
    write_space_time(out, cfg, "solution", &u)?;
    if out.wants(Format::Json) {
        #[derive(Serialize)]
        struct Report<'a> {
            #[serde(flatten)]
            header: RunHeader<'a>,
            coefficients: &'a smpde_core::solver::CoefficientSet,
            solver: &'a smpde_core::solver::SolverConfig,
            report: &'a smpde_core::solver::SolveReport,
        }
        out.json(
            "report.json",
            &Report {
                header: header(cfg, seed),
                coefficients: &coeffs,
                solver: &solver_cfg,
                report: &report,
            },
        )?;
    }
    Ok(())
}

fn average(cfg: &ExperimentConfig, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let sample = measure_sample(cfg, seed)?;
    let mut coeffs = cfg.coefficients.resolve();
    coeffs.sigma = cfg.averaging.sigma(&coeffs.sigma);
    let scenario = AveragingScenario {
        coeffs,
        epsilons: cfg.averaging.epsilons.clone(),
        solver: cfg.solver.solver_config(cfg.grid),
    };
    let table = averaging_experiment(&scenario, &sample)?;
    let rate = table.distance_rate.map(|r| r.exponent);
    if out.wants(Format::Csv) {
        let rows = table.rows.iter().map(|r| (r.epsilon, r.sup_t_l2_distance, r.xi_sup, rate));
        out.write(
            "average.csv",
            &csv_bytes(&["epsilon", "sup_t_l2_distance", "xi_sup", "fitted_rate"], rows)?,
        )?;
    }
    if out.wants(Format::Json) {
        #[derive(Serialize)]
        struct Report<'a> {
            #[serde(flatten)]
            header: RunHeader<'a>,
            scenario: &'a AveragingScenario,
            sigma_bar: smpde_core::convolution::SigmaSpec,
            g_sigma_sup: f64,
            table: &'a smpde_core::averaging::ConvergenceTable,
        }
        out.json(
            "average.json",
            &Report {
                header: header(cfg, seed),
                sigma_bar: sigma_bar(&scenario.coeffs.sigma)?,
                g_sigma_sup: g_sigma_sup(&scenario.coeffs.sigma, cfg.grid.t_max)?,
                scenario: &scenario,
                table: &table,
            },
        )?;
    }
    Ok(())
}

fn regularity(cfg: &ExperimentConfig, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let sample = measure_sample(cfg, seed)?;
    let sigma = cfg.coefficients.resolve().sigma;
    let theta = StochasticConvolution::new(&cfg.grid, &sigma, cfg.solver.backend)?.theta_all(&sample)?;
    let report = regularity_of(&theta, &cfg.regularity)?;
    write_space_time(out, cfg, "theta", &theta)?;
    if out.wants(Format::Json) {
        #[derive(Serialize)]
        struct Report<'a> {
            gamma1_est: Option<f64>,
            gamma2_est: Option<f64>,
            gamma1_std_error: Option<f64>,
            gamma2_std_error: Option<f64>,
            sup_bound: f64,
            l2_trace: &'a [f64],
            #[serde(flatten)]
            header: RunHeader<'a>,
            sigma: &'a smpde_core::convolution::SigmaSpec,
            window: &'a smpde_core::convolution::RegularityWindow,
        }
        out.json(
            "regularity.json",
            &Report {
                gamma1_est: report.gamma1.as_ref().map(|f| f.exponent),
                gamma2_est: report.gamma2.as_ref().map(|f| f.exponent),
                gamma1_std_error: report.gamma1.as_ref().map(|f| f.std_error),
                gamma2_std_error: report.gamma2.as_ref().map(|f| f.std_error),
                sup_bound: report.sup_bound,
                l2_trace: &report.l2_trace,
                header: header(cfg, seed),
                sigma: &sigma,
                window: &cfg.regularity,
            },
        )?;
    }
    Ok(())
}

fn besov_check(cfg: &ExperimentConfig, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let sample = measure_sample(cfg, seed)?;
    let b = &cfg.besov;
    let g = &cfg.grid;
    let intervals: Vec<i64> = match &b.intervals {
        Some(list) => list.clone(),
        None => g.unit_intervals().collect(),
    };
    let checks = intervals
        .iter()
        .map(|&j| {
            let cells = g.cell_range(j as f64, j as f64 + 1.0)?;
            let q: Vec<f64> = cells.map(|i| b.q.value(g.x_center(i))).collect();
            verify_dyadic_bound(&q, &sample, j, b.alpha, b.constant)
        })
        .collect::<smpde_core::Result<Vec<_>>>()?;
    if out.wants(Format::Csv) {
        let rows = checks.iter().map(|c| (c.j, c.alpha, c.lhs, c.rhs, c.slack));
        out.write("besov_check.csv", &csv_bytes(&["j", "alpha", "lhs", "rhs", "slack"], rows)?)?;
    }
    if out.wants(Format::Json) {
        #[derive(Serialize)]
        struct Report<'a> {
            #[serde(flatten)]
            header: RunHeader<'a>,
            q: &'a smpde_core::convolution::SpaceProfile,
            all_hold: bool,
            checks: &'a [smpde_core::besov::DyadicCheck],
        }
        out.json(
            "besov_check.json",
            &Report {
                header: header(cfg, seed),
                q: &b.q,
                all_hold: checks.iter().all(|c| c.holds),
                checks: &checks,
            },
        )?;
    }
    Ok(())
}

fn sm_sample(cfg: &ExperimentConfig, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let sample = measure_sample(cfg, seed)?;
    if out.wants(Format::Binary) {
        out.write("sample.bin", &measure_to_bytes(&sample))?;
    }
    let masses = unit_masses(&sample)?;
    if out.wants(Format::Csv) {
        out.write("unit_masses.csv", &csv_bytes(&["j", "mass"], masses.iter().copied())?)?;
    }
    if out.wants(Format::Json) {
        #[derive(Serialize)]
        struct Report<'a> {
            #[serde(flatten)]
            header: RunHeader<'a>,
            kind: smpde_core::MeasureKind,
            sample_seed: u64,
            cells: usize,
            total_mass: f64,
        }
        out.json(
            "sample.json",
            &Report {
                header: header(cfg, seed),
                kind: sample.kind(),
                sample_seed: sample.seed(),
                cells: sample.increments().len(),
                total_mass: masses.iter().map(|(_, m)| m).sum(),
            },
        )?;
    }
    Ok(())
}

fn kernel_table(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), CliError> {
    let k = &cfg.kernel_table;
    let g = &cfg.grid;
    let mut rows = Vec::new();
    for &t in &k.times {
        for i in (0..g.nx).step_by(k.stride) {
            let x = g.x_center(i);
            rows.push((t, x, kernel(t, x)?, kernel_dx(t, x)?));
        }
    }
    out.write("kernel_table.csv", &csv_bytes(&["t", "x", "p", "dp_dx"], rows)?)
}
