//! Subcommands driven by a configuration file.

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde_json::json;
use voxfp::analysis::{compare_densities, relative_energy, EnergyTable};
use voxfp::fv::{self, SolveOptions};
use voxfp::grid::fmt17;
use voxfp::jko::jko_solve_with;
use voxfp::particles::{run_ensemble, EnsembleConfig, HistogramPlan, PairPlan, ParticleEnsemble};
use voxfp::potentials::RadialTable;
use voxfp::{Config, DensityField, Grid, InteractionKind, InteractionPotential, MacroModel};

use crate::output::{compare_csv, pair_csv, parse_time_label, positions_csv, rates_csv, time_label, OutDir};
use crate::{config_issue, AlphaArgs};

/// Energy samples per run when the configuration does not fix a spacing.
const DEFAULT_ENERGY_SAMPLES: usize = 100;

/// `0, dt, 2 dt, …` up to `t_end`, always ending on `t_end`.
pub(crate) fn time_grid(t_end: f64, dt: f64) -> Vec<f64> {
    let n = (t_end / dt).round() as usize;
    let mut out: Vec<f64> = (0..=n).map(|k| k as f64 * dt).filter(|t| *t < t_end).collect();
    out.push(t_end);
    out
}

fn config_echo(cfg: &Config) -> anyhow::Result<serde_json::Value> {
    Ok(serde_json::to_value(&cfg.source)?)
}

fn load(path: &Path) -> anyhow::Result<Config> {
    Config::from_path(path).map_err(|e| match e {
        voxfp::Error::Io(_) => anyhow::Error::new(e),
        e => config_issue(e.to_string()),
    })
}

pub fn alpha(a: &AlphaArgs) -> anyhow::Result<()> {
    let reject = |key: &str, set: bool| {
        if set {
            Err(config_issue(format!("--{key} does not apply to potential {:?}", a.potential)))
        } else {
            Ok(())
        }
    };
    let kind = match a.potential.as_str() {
        "hard_sphere" | "yukawa" => {
            reject("exponent", a.exponent.is_some())?;
            reject("file", a.file.is_some())?;
            if a.potential == "yukawa" {
                InteractionKind::Yukawa
            } else {
                InteractionKind::HardSphere
            }
        }
        "power_law" => {
            reject("file", a.file.is_some())?;
            let exponent = a.exponent.ok_or_else(|| config_issue("power_law needs --exponent"))?;
            InteractionKind::PowerLaw { exponent }
        }
        "table" => {
            reject("exponent", a.exponent.is_some())?;
            let file = a.file.as_ref().ok_or_else(|| config_issue("table needs --file"))?;
            let far = a.far_exponent.ok_or_else(|| config_issue("table needs --far-exponent"))?;
            let text = fs::read_to_string(file).with_context(|| format!("cannot read {}", file.display()))?;
            InteractionKind::Tabulated(RadialTable::parse_csv(&text, far)?)
        }
        other => {
            return Err(config_issue(format!(
                "unknown potential {other:?}; expected hard_sphere, yukawa, power_law or table"
            )))
        }
    };
    let pot = InteractionPotential::new(kind, 1.0)?;
    let alpha = pot.alpha_u(a.dim)?;
    let diameter = pot.effective_diameter(a.dim)?;
    println!(
        "alpha={} err={:e} eff_diameter={}",
        fmt17(alpha.value),
        alpha.estimated_quadrature_error,
        fmt17(diameter)
    );
    if let Some(out) = &a.out {
        let dir = OutDir::create(out)?;
        let echo = json!({
            "potential": a.potential,
            "exponent": a.exponent,
            "file": a.file.as_ref().map(|p| p.display().to_string()),
            "far_exponent": a.far_exponent,
            "dim": a.dim,
        });
        dir.finish("alpha", echo)?;
    }
    Ok(())
}

pub fn solve_pde(config: &Path, out: &Path) -> anyhow::Result<()> {
    let cfg = load(config)?;
    if cfg.dim > 2 {
        return Err(config_issue("solve-pde supports dim = 1 or 2"));
    }
    let model = cfg.model()?;
    let p0 = cfg.initial_field()?;
    let mut dir = OutDir::create(out)?;
    let energy_times = match cfg.dt {
        Some(dt) => time_grid(cfg.t_end, dt),
        None => time_grid(cfg.t_end, cfg.t_end.max(f64::MIN_POSITIVE) / DEFAULT_ENERGY_SAMPLES as f64),
    };
    let opts = SolveOptions {
        output_times: cfg.output_times.clone(),
        energy_times,
        max_dt: None,
        track_every_step: false,
    };
    let sol = fv::solve_with(&model, &p0, &opts)?;
    for s in &sol.snapshots {
        dir.field(&format!("density_t{}.csv", time_label(s.time)), &s.field)?;
    }
    let mut table = EnergyTable::default();
    for r in &sol.energy {
        table.push("", r.time, r.energy, r.relative_energy);
    }
    dir.energy("energy.csv", &table)?;
    dir.field("steady_state.csv", &fv::steady_state(&model, p0.grid())?)?;
    log::info!(
        "{} steps, mass drift {:e}, most negative pre-clip value {:e}",
        sol.stats.steps,
        sol.stats.total_mass_drift,
        sol.stats.min_before_clip
    );
    let mut echo = config_echo(&cfg)?;
    echo["beta"] = json!(model.beta());
    dir.finish("solve-pde", echo)?;
    Ok(())
}

/// Model whose energy is evaluated on histograms over `grid`; a grid with
/// fewer axes than the particles holds the marginal in `x`.
pub(crate) fn energy_model(model: &MacroModel, grid: &Grid) -> anyhow::Result<MacroModel> {
    if grid.dim() == model.dim() {
        return Ok(model.clone());
    }
    if !model.external().is_x_only() {
        return Err(config_issue(
            "a histogram with fewer axes than the particles needs an external potential that depends on x only",
        ));
    }
    Ok(MacroModel::with_beta(grid.dim(), model.beta(), model.external().clone())?)
}

/// `ΔE` of each ensemble histogram against the steady state on its grid.
pub(crate) fn ensemble_energy(model: &MacroModel, ens: &ParticleEnsemble) -> anyhow::Result<EnergyTable> {
    let mut table = EnergyTable::default();
    let Some((_, first)) = ens.histograms.first() else {
        return Ok(table);
    };
    let em = energy_model(model, first.grid())?;
    let p_inf = fv::steady_state(&em, first.grid())?;
    let e_inf = fv::free_energy(&em, &p_inf);
    let de = relative_energy(&em, ens.histograms.iter().map(|(t, h)| (*t, h)), &p_inf)?;
    for (t, d) in de {
        table.push("", t, d + e_inf, d);
    }
    Ok(table)
}

pub fn simulate(config: &Path, out: &Path) -> anyhow::Result<()> {
    let cfg = load(config)?;
    let dt = cfg.dt.ok_or_else(|| config_issue("simulate needs `dt`"))?;
    let model = cfg.model()?;
    let hist_grid = cfg.histogram_grid()?;
    let mut hist_times = time_grid(cfg.t_end, cfg.t_end.max(f64::MIN_POSITIVE) / DEFAULT_ENERGY_SAMPLES as f64);
    hist_times.extend(&cfg.output_times);
    hist_times.sort_by(f64::total_cmp);
    hist_times.dedup();
    let ens_cfg = EnsembleConfig {
        d: cfg.dim,
        n_particles: cfg.n_particles,
        realizations: cfg.realizations,
        dt,
        t_end: cfg.t_end,
        snapshot_times: cfg.output_times.clone(),
        histogram: hist_grid.map(|grid| HistogramPlan {
            grid,
            times: hist_times.clone(),
        }),
        pair: cfg.gr.map(|g| PairPlan {
            bins: g.bins,
            r_max: g.r_max,
            t_start: g.t_start.unwrap_or(0.0),
            every: g.every.unwrap_or(1),
        }),
        seed: cfg.seed,
        initial: cfg.initial.clone(),
        noise: true,
    };
    if let Some(g) = &hist_grid {
        energy_model(&model, g)?;
    }
    let ens = run_ensemble(&ens_cfg, &model, cfg.interaction.as_ref())?;
    let mut dir = OutDir::create(out)?;
    for (k, t) in ens.snapshot_times.iter().enumerate() {
        let runs: Vec<&[f64]> = ens.snapshots.iter().map(|r| r[k].as_slice()).collect();
        dir.write(&format!("positions_t{}.csv", time_label(*t)), &positions_csv(ens.d, &runs))?;
    }
    for (t, h) in &ens.histograms {
        if cfg.output_times.contains(t) {
            dir.field(&format!("hist_t{}.csv", time_label(*t)), h)?;
        }
    }
    if !ens.histograms.is_empty() {
        dir.energy("energy_sde.csv", &ensemble_energy(&model, &ens)?)?;
    }
    if let Some(bins) = ens.pair_correlation() {
        dir.write("gr.csv", &pair_csv(&bins))?;
    }
    let mut echo = config_echo(&cfg)?;
    echo["beta"] = json!(model.beta());
    echo["steps"] = json!(ens.steps);
    dir.finish("simulate", echo)?;
    Ok(())
}

pub fn jko(config: &Path, out: &Path) -> anyhow::Result<()> {
    let cfg = load(config)?;
    if cfg.dim != 1 {
        return Err(config_issue("jko supports dim = 1 only"));
    }
    let dt = cfg.dt.ok_or_else(|| config_issue("jko needs `dt`"))?;
    let model = cfg.model()?;
    let p0 = cfg.initial_field()?;
    let mut stops = cfg.output_times.clone();
    stops.push(cfg.t_end);
    let snaps = jko_solve_with(&model, &p0, dt, &stops, cfg.jko_atoms)?;
    let mut dir = OutDir::create(out)?;
    let mut report = String::from("k,t,objective,w2sq,E,kkt,iters\n");
    for (k, s) in snaps.iter().enumerate() {
        if cfg.output_times.contains(&s.time) {
            dir.field(&format!("density_t{}.csv", time_label(s.time)), &s.field)?;
        }
        if let Some(r) = &s.report {
            report.push_str(&format!(
                "{k},{},{},{},{},{},{}\n",
                fmt17(s.time),
                fmt17(r.objective),
                fmt17(r.w2_squared),
                fmt17(r.energy),
                fmt17(r.kkt_residual),
                r.iterations
            ));
        }
    }
    dir.write("jko_report.csv", &report)?;
    let mut echo = config_echo(&cfg)?;
    echo["beta"] = json!(model.beta());
    echo["atoms"] = json!(cfg.jko_atoms);
    dir.finish("jko", echo)?;
    Ok(())
}

/// Brings a PDE field onto a histogram grid by taking the `x` marginal when
/// the histogram has fewer axes, then averaging blocks of cells.
pub(crate) fn onto_grid(pde: &DensityField, target: &Grid) -> anyhow::Result<DensityField> {
    let mut f = pde.clone();
    if f.grid().dim() > target.dim() {
        f = f.marginal_x();
    }
    if f.grid().dim() != target.dim() {
        return Err(config_issue(format!(
            "cannot compare a {}-dimensional field with a {}-dimensional histogram",
            pde.grid().dim(),
            target.dim()
        )));
    }
    let (a, b) = (f.grid().cells_per_dim(), target.cells_per_dim());
    if a == b {
        return Ok(f);
    }
    if a % b != 0 {
        return Err(config_issue(format!("PDE grid with {a} cells cannot be coarsened to {b} cells")));
    }
    Ok(f.coarsen(a / b)?)
}

pub(crate) fn compare_rows(pairs: &[(f64, &DensityField, &DensityField)]) -> anyhow::Result<Vec<(f64, f64, f64)>> {
    pairs
        .iter()
        .map(|(t, pde, hist)| {
            let a = onto_grid(pde, hist.grid())?;
            let (l1, linf) = compare_densities(&a, hist)?;
            Ok((*t, l1, linf))
        })
        .collect()
}

fn read_fields(dir: &Path, prefix: &str) -> anyhow::Result<Vec<(f64, DensityField)>> {
    let mut out = Vec::new();
    let entries = fs::read_dir(dir).with_context(|| format!("cannot read {}", dir.display()))?;
    for entry in entries {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(t) = parse_time_label(&name, prefix) {
            let text = fs::read_to_string(entry.path()).with_context(|| format!("cannot read {name}"))?;
            let f = DensityField::parse_csv(&text).map_err(|e| config_issue(format!("{name}: {e}")))?;
            out.push((t, f));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

fn read_energy(path: &Path) -> anyhow::Result<Option<EnergyTable>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    EnergyTable::parse_csv(&text)
        .map(Some)
        .map_err(|e| config_issue(format!("{}: {e}", path.display())))
}

pub fn compare(pde: &Path, sde: &Path, out: &Path) -> anyhow::Result<()> {
    let fields = read_fields(pde, "density_t")?;
    let hists = read_fields(sde, "hist_t")?;
    let pairs: Vec<(f64, &DensityField, &DensityField)> = hists
        .iter()
        .filter_map(|(t, h)| fields.iter().find(|(s, _)| s == t).map(|(_, f)| (*t, f, h)))
        .collect();
    if pairs.is_empty() {
        return Err(config_issue(format!(
            "no common snapshot times between {} and {}",
            pde.display(),
            sde.display()
        )));
    }
    let mut dir = OutDir::create(out)?;
    dir.write("compare.csv", &compare_csv(&compare_rows(&pairs)?))?;
    let mut curves = Vec::new();
    for (path, name) in [(pde.join("energy.csv"), "pde"), (sde.join("energy_sde.csv"), "sde")] {
        if let Some(table) = read_energy(&path)? {
            for label in table.labels() {
                let full = if label.is_empty() {
                    name.to_string()
                } else {
                    format!("{name}_{label}")
                };
                curves.push((full, table.curve(label)));
            }
        }
    }
    dir.write("rates.csv", &rates_csv(&curves))?;
    let echo = json!({
        "pde": pde.display().to_string(),
        "sde": sde.display().to_string(),
        "times": pairs.iter().map(|p| p.0).collect::<Vec<_>>(),
    });
    dir.finish("compare", echo)?;
    Ok(())
}
