//! Data sets for the `reproduce-figure` subcommand.
//!
//! Every figure uses PDE cells of width 0.005 and energies sampled every
//! 1e-3. Particle legs use N = 1000 and 200 realizations at full scale;
//! `scale` reduces the realization count only, since changing N would change
//! the nonlinearity being tested.

use std::path::Path;

use serde_json::json;
use voxfp::analysis::EnergyTable;
use voxfp::fv::{self, SolveOptions};
use voxfp::initial::GaussianComponent;
use voxfp::particles::{run_ensemble, EnsembleConfig, HistogramPlan};
use voxfp::{DensityField, ExternalPotential, Grid, InitialDensity, InteractionKind, InteractionPotential, MacroModel};

use crate::commands::{compare_rows, ensemble_energy, time_grid};
use crate::config_issue;
use crate::output::{compare_csv, grid_values_csv, rates_csv, time_label, OutDir};

const PDE_CELLS: usize = 200;
const ENERGY_DT: f64 = 1e-3;
const HIST_CELLS: usize = 40;
const HIST_SAMPLES: usize = 40;
const FULL_REALIZATIONS: usize = 200;
const PARTICLES: usize = 1000;
const SEED: u64 = 20_190_101;

pub fn reproduce(id: &str, out: &Path, scale: f64) -> anyhow::Result<()> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(config_issue(format!("--scale must lie in (0, 1], got {scale}")));
    }
    match id {
        "fig1" => fig1(out),
        "fig2" => particle_figure(&fig2(), out, scale),
        "fig3" => particle_figure(&fig3(), out, scale),
        "fig4" => particle_figure(&fig4(), out, scale),
        other => Err(config_issue(format!("unknown figure {other:?}; expected fig1, fig2, fig3 or fig4"))),
    }
}

fn fig1(out: &Path) -> anyhow::Result<()> {
    let (n, eps, t_end) = (100, 0.0015, 0.5);
    let grid = Grid::new(1, PDE_CELLS)?;
    let p0 = InitialDensity::Indicator { lo: 0.2, hi: 0.4 }.on_grid(grid)?;
    let alpha = InteractionPotential::new(InteractionKind::HardSphere, eps)?.alpha_u(1)?.value;
    let nonlinear = MacroModel::new(1, n, eps, alpha, ExternalPotential::Zero)?;
    let linear = MacroModel::linear(1, ExternalPotential::Zero);
    let times = time_grid(t_end, ENERGY_DT);
    let snapshot_times = vec![0.0, 0.05, t_end];

    let mut dir = OutDir::create(out)?;
    let mut table = EnergyTable::default();
    for (label, model) in [("linear", &linear), ("nonlinear", &nonlinear)] {
        let sol = fv::solve_with(
            model,
            &p0,
            &SolveOptions {
                output_times: snapshot_times.clone(),
                energy_times: times.clone(),
                ..Default::default()
            },
        )?;
        for s in &sol.snapshots {
            dir.field(&format!("{label}/density_t{}.csv", time_label(s.time)), &s.field)?;
        }
        for r in &sol.energy {
            table.push(label, r.time, r.energy, r.relative_energy);
        }
    }

    // Linear diffusion with coefficient 1 + β is the heat flow run faster
    // by that factor; its energy is measured with the nonlinear functional.
    let d_eff = nonlinear.effective_diffusion();
    let stretched: Vec<f64> = times.iter().map(|t| d_eff * t).collect();
    let heat = fv::solve_with(
        &linear,
        &p0,
        &SolveOptions {
            output_times: stretched,
            ..Default::default()
        },
    )?;
    let p_inf = fv::steady_state(&nonlinear, &grid)?;
    let e_inf = fv::free_energy(&nonlinear, &p_inf);
    for (t, s) in times.iter().zip(&heat.snapshots) {
        let e = fv::free_energy(&nonlinear, &s.field);
        table.push("linearized", *t, e, e - e_inf);
    }

    dir.energy("energy.csv", &table)?;
    let curves: Vec<(String, Vec<(f64, f64)>)> =
        table.labels().iter().map(|l| (l.to_string(), table.curve(l))).collect();
    dir.write("rates.csv", &rates_csv(&curves))?;
    let echo = json!({
        "figure": "fig1",
        "cells": PDE_CELLS,
        "t_end": t_end,
        "energy_dt": ENERGY_DT,
        "N": n,
        "epsilon": eps,
        "alpha": alpha,
        "beta": nonlinear.beta(),
        "initial": "indicator [0.2, 0.4]",
    });
    dir.finish("reproduce-figure", echo)?;
    Ok(())
}

struct ParticleFigure {
    id: &'static str,
    /// Axes of the PDE grid and of the histograms; 1 when the data vary
    /// along `x` only.
    pde_dim: usize,
    initial: InitialDensity,
    external: ExternalPotential,
    interaction: InteractionKind,
    epsilon: f64,
    t_end: f64,
    snapshot_times: Vec<f64>,
    /// Particle time steps for the interacting and the point-particle legs.
    sde_dt: (f64, f64),
}

fn fig2() -> ParticleFigure {
    ParticleFigure {
        id: "fig2",
        pde_dim: 1,
        initial: InitialDensity::Indicator { lo: 0.1, hi: 0.3 },
        external: ExternalPotential::Quadratic { a: 5.0 },
        interaction: InteractionKind::HardSphere,
        epsilon: 0.01,
        t_end: 0.1,
        snapshot_times: vec![0.0, 0.05, 0.1],
        sde_dt: (6.25e-6, 6.25e-6),
    }
}

fn fig3() -> ParticleFigure {
    let component = |mean, sd| GaussianComponent { weight: 1.0, mean, sd };
    ParticleFigure {
        id: "fig3",
        pde_dim: 1,
        initial: InitialDensity::GaussianMixture {
            components: vec![component(-0.25, 0.05), component(0.25, 0.1)],
        },
        external: ExternalPotential::VolcanoX { a1: 1.5, a2: 1.0, s: 0.1 },
        interaction: InteractionKind::Yukawa,
        epsilon: 0.01,
        t_end: 0.05,
        snapshot_times: vec![0.0, 0.025, 0.05],
        sde_dt: (2.25e-6, 6.25e-6),
    }
}

fn fig4() -> ParticleFigure {
    ParticleFigure {
        id: "fig4",
        pde_dim: 2,
        initial: InitialDensity::Ring {
            mu: 0.3,
            sigma: 0.05,
            amplitude: 0.6,
        },
        external: ExternalPotential::VolcanoRadial { a1: 4.5, a2: 3.5, s: 25.0 },
        interaction: InteractionKind::PowerLaw { exponent: 4.0 },
        epsilon: 0.01,
        t_end: 0.05,
        snapshot_times: vec![0.0, 0.0025, 0.005, 0.0075, 0.01, 0.0125, 0.05],
        sde_dt: (2.25e-6, 6.25e-6),
    }
}

fn particle_figure(fig: &ParticleFigure, out: &Path, scale: f64) -> anyhow::Result<()> {
    let realizations = ((FULL_REALIZATIONS as f64 * scale).round() as usize).max(1);
    let pot = InteractionPotential::new(fig.interaction.clone(), fig.epsilon)?;
    let alpha = pot.alpha_u(2)?.value;
    let sde_int = MacroModel::new(2, PARTICLES, fig.epsilon, alpha, fig.external.clone())?;
    let sde_point = MacroModel::linear(2, fig.external.clone());
    let pde_int = MacroModel::with_beta(fig.pde_dim, sde_int.beta(), fig.external.clone())?;
    let pde_point = MacroModel::linear(fig.pde_dim, fig.external.clone());

    let grid = Grid::new(fig.pde_dim, PDE_CELLS)?;
    let p0 = fig.initial.on_grid(grid)?;
    let hist_grid = Grid::new(fig.pde_dim, HIST_CELLS)?;
    let mut hist_times = time_grid(fig.t_end, fig.t_end / HIST_SAMPLES as f64);
    hist_times.extend(&fig.snapshot_times);
    hist_times.sort_by(f64::total_cmp);
    hist_times.dedup();

    let mut dir = OutDir::create(out)?;
    let v: Vec<f64> = (0..grid.len())
        .map(|i| fig.external.value(&grid.cell_center(i)[..fig.pde_dim]))
        .collect();
    dir.write("potential.csv", &grid_values_csv(&grid, &v))?;

    let mut table = EnergyTable::default();
    let legs = [
        ("int", &pde_int, &sde_int, Some(&pot), fig.sde_dt.0),
        ("point", &pde_point, &sde_point, None, fig.sde_dt.1),
    ];
    for (k, (label, pde_model, sde_model, interaction, dt)) in legs.into_iter().enumerate() {
        let sol = fv::solve_with(
            pde_model,
            &p0,
            &SolveOptions {
                output_times: fig.snapshot_times.clone(),
                energy_times: time_grid(fig.t_end, ENERGY_DT),
                ..Default::default()
            },
        )?;
        for s in &sol.snapshots {
            dir.field(&format!("pde_{label}/density_t{}.csv", time_label(s.time)), &s.field)?;
        }
        dir.field(&format!("pde_{label}/steady_state.csv"), &fv::steady_state(pde_model, &grid)?)?;
        let mut pde_energy = EnergyTable::default();
        for r in &sol.energy {
            pde_energy.push("", r.time, r.energy, r.relative_energy);
            table.push(&format!("pde_{label}"), r.time, r.energy, r.relative_energy);
        }
        dir.energy(&format!("pde_{label}/energy.csv"), &pde_energy)?;

        log::info!("{}: {label} particles, {realizations} realizations", fig.id);
        let ens = run_ensemble(
            &EnsembleConfig {
                d: 2,
                n_particles: PARTICLES,
                realizations,
                dt,
                t_end: fig.t_end,
                snapshot_times: Vec::new(),
                histogram: Some(HistogramPlan {
                    grid: hist_grid,
                    times: hist_times.clone(),
                }),
                pair: None,
                seed: SEED + k as u64,
                initial: fig.initial.clone(),
                noise: true,
            },
            sde_model,
            interaction,
        )?;
        for (t, h) in &ens.histograms {
            if fig.snapshot_times.contains(t) {
                dir.field(&format!("sde_{label}/hist_t{}.csv", time_label(*t)), h)?;
            }
        }
        let sde_energy = ensemble_energy(sde_model, &ens)?;
        for r in &sde_energy.rows {
            table.push(&format!("sde_{label}"), r.t, r.energy, r.relative_energy);
        }
        dir.energy(&format!("sde_{label}/energy_sde.csv"), &sde_energy)?;

        let pairs: Vec<(f64, &DensityField, &DensityField)> = sol
            .snapshots
            .iter()
            .filter_map(|s| {
                ens.histograms
                    .iter()
                    .find(|(t, _)| *t == s.time)
                    .map(|(t, h)| (*t, &s.field, h))
            })
            .collect();
        let name = if label == "int" { "compare.csv".to_string() } else { format!("compare_{label}.csv") };
        dir.write(&name, &compare_csv(&compare_rows(&pairs)?))?;
    }

    dir.energy("energy.csv", &table)?;
    let curves: Vec<(String, Vec<(f64, f64)>)> =
        table.labels().iter().map(|l| (l.to_string(), table.curve(l))).collect();
    dir.write("rates.csv", &rates_csv(&curves))?;
    let echo = json!({
        "figure": fig.id,
        "pde_dim": fig.pde_dim,
        "pde_cells": PDE_CELLS,
        "energy_dt": ENERGY_DT,
        "hist_cells": HIST_CELLS,
        "N": PARTICLES,
        "epsilon": fig.epsilon,
        "interaction": format!("{:?}", fig.interaction),
        "alpha": alpha,
        "beta": sde_int.beta(),
        "external": format!("{:?}", fig.external),
        "initial": format!("{:?}", fig.initial),
        "t_end": fig.t_end,
        "snapshot_times": fig.snapshot_times,
        "sde_dt": [fig.sde_dt.0, fig.sde_dt.1],
        "scale": scale,
        "realizations": realizations,
        "seed": SEED,
    });
    dir.finish("reproduce-figure", echo)?;
    Ok(())
}
