//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p voxfp-core --test acceptance`; extra arguments
//! after `--` select criteria whose name contains any of them.

use std::cell::OnceCell;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use voxfp::analysis::{compare_densities, fit_decay_rate, relative_energy};
use voxfp::fv::{self, FvSolver, SolveOptions};
use voxfp::initial::GaussianComponent;
use voxfp::jko::{self, QuantileField};
use voxfp::particles::{run_ensemble, CellList, EnsembleConfig, HistogramPlan, PairPlan};
use voxfp::{
    DensityField, ExternalPotential, Grid, InitialDensity, InteractionKind, InteractionPotential, MacroModel,
    RngPlan,
};

const ALPHA_TOL: f64 = 1e-3;
const YUKAWA_ALPHA_2D: f64 = 3.926;
const POWER_LAW_ALPHA_2D: f64 = 5.568;
const ANALYTIC_TOL: f64 = 1e-9;

const RATE_CELLS: usize = 256;
const LINEAR_RATE_TOL: f64 = 0.03;
const NONLINEAR_RATE: f64 = 25.60;
const NONLINEAR_RATE_TOL: f64 = 0.05;

const ENERGY_INCREASE_TOL: f64 = 1e-10;

const MASS_STEPS: usize = 10_000;
const MASS_DRIFT_TOL: f64 = 1e-12;
const NEGATIVITY_TOL: f64 = 1e-14;

const JKO_CELLS: usize = 1024;
const JKO_ATOMS: usize = 2000;
const JKO_T: f64 = 0.05;
const JKO_STEPS: [f64; 3] = [4e-3, 2e-3, 1e-3];
const JKO_ORDER: (f64, f64) = (0.7, 1.3);
const KKT_TOL: f64 = 1e-7;

const PARTICLES: usize = 1000;
const REALIZATIONS: usize = 50;
const SDE_DT: f64 = 6.25e-6;
const SDE_T: f64 = 0.05;
const HIST_CELLS: usize = 20;
const PDE_CELLS: usize = 200;
const ENERGY_SAMPLES: usize = 20;
const CONTROL_L1_TOL: f64 = 0.05;

const GR_EPSILON: f64 = 0.1;
const GR_DT: f64 = 1e-5;
const GR_T: f64 = 250.0;
const GR_BURN_IN: f64 = 0.5;
const GR_REALIZATIONS: usize = 16;
const GR_BIN: f64 = 0.025;
const GR_TOL: f64 = 0.05;

const CELL_LIST_CONFIGS: usize = 200;
const W2_TOL: f64 = 1e-8;
const FD_TOL: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value / target - 1.0).abs() <= rel
}

fn strip_models() -> (MacroModel, MacroModel) {
    let nonlinear = MacroModel::new(1, 100, 0.0015, 2.0, ExternalPotential::Zero).unwrap();
    (MacroModel::linear(1, ExternalPotential::Zero), nonlinear)
}

fn strip_initial(cells: usize) -> DensityField {
    InitialDensity::Indicator { lo: 0.2, hi: 0.4 }.on_grid(Grid::new(1, cells).unwrap()).unwrap()
}

fn times(t_end: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
}

fn quad5() -> ExternalPotential {
    ExternalPotential::Quadratic { a: 5.0 }
}

fn volcano_x() -> ExternalPotential {
    ExternalPotential::VolcanoX { a1: 1.5, a2: 1.0, s: 0.1 }
}

fn mixture() -> InitialDensity {
    let c = |mean, sd| GaussianComponent { weight: 1.0, mean, sd };
    InitialDensity::GaussianMixture {
        components: vec![c(-0.25, 0.05), c(0.25, 0.1)],
    }
}

/// The macroscopic models behind every worked configuration, with their
/// initial data and horizons; figures that vary along `x` only use their
/// one-dimensional reduction.
fn configurations() -> Vec<(&'static str, MacroModel, DensityField, f64)> {
    let (linear, nonlinear) = strip_models();
    let g1 = Grid::new(1, PDE_CELLS).unwrap();
    let g2 = Grid::new(2, PDE_CELLS).unwrap();
    let indicator = InitialDensity::Indicator { lo: 0.1, hi: 0.3 }.on_grid(g1).unwrap();
    let ring = InitialDensity::Ring { mu: 0.3, sigma: 0.05, amplitude: 0.6 }.on_grid(g2).unwrap();
    let radial = ExternalPotential::VolcanoRadial { a1: 4.5, a2: 3.5, s: 25.0 };
    vec![
        ("strip linear", linear, strip_initial(PDE_CELLS), 0.5),
        ("strip nonlinear", nonlinear, strip_initial(PDE_CELLS), 0.5),
        ("hard disks", MacroModel::with_beta(1, 0.314, quad5()).unwrap(), indicator.clone(), 0.1),
        ("hard disks u=0", MacroModel::linear(1, quad5()), indicator, 0.1),
        ("yukawa", MacroModel::with_beta(1, 0.392, volcano_x()).unwrap(), mixture().on_grid(g1).unwrap(), 0.05),
        ("yukawa u=0", MacroModel::linear(1, volcano_x()), mixture().on_grid(g1).unwrap(), 0.05),
        ("power law", MacroModel::with_beta(2, 0.556, radial.clone()).unwrap(), ring.clone(), 0.0125),
        ("power law u=0", MacroModel::linear(2, radial), ring, 0.0125),
    ]
}

fn coefficients() -> Outcome {
    let alpha = |kind: InteractionKind, d: usize| InteractionPotential::new(kind, 0.01).unwrap().alpha_u(d).unwrap().value;
    let yukawa = alpha(InteractionKind::Yukawa, 2);
    let power = alpha(InteractionKind::PowerLaw { exponent: 4.0 }, 2);
    let hs1 = alpha(InteractionKind::HardSphere, 1);
    let hs2 = alpha(InteractionKind::HardSphere, 2);
    // For u = r^-4 in the plane, ∫(1 − e^{−r^{−4}}) 2πr dr = π Γ(1/2) = π^{3/2}.
    let analytic = PI.powf(1.5);
    let pass = (yukawa - YUKAWA_ALPHA_2D).abs() <= ALPHA_TOL
        && (power - POWER_LAW_ALPHA_2D).abs() <= ALPHA_TOL
        && (power - analytic).abs() <= ANALYTIC_TOL
        && hs1 == 2.0
        && hs2 == PI;
    Outcome::new(
        pass,
        format!("yukawa {yukawa:.6}, power law {power:.6} (π^1.5 = {analytic:.6}), hard sphere {hs1} / {hs2}"),
    )
}

fn fitted_rate(model: &MacroModel, p0: &DensityField, t_end: f64, samples: usize) -> f64 {
    let sol = fv::solve_with(
        model,
        p0,
        &SolveOptions {
            output_times: vec![t_end],
            energy_times: times(t_end, samples),
            ..Default::default()
        },
    )
    .unwrap();
    let curve: Vec<(f64, f64)> = sol.energy.iter().map(|r| (r.time, r.relative_energy)).collect();
    fit_decay_rate(&curve, None).unwrap().rate
}

fn strip_rates() -> Outcome {
    let (linear, nonlinear) = strip_models();
    let p0 = strip_initial(RATE_CELLS);
    let lin = fitted_rate(&linear, &p0, 0.5, 500);
    let non = fitted_rate(&nonlinear, &p0, 0.5, 500);
    let two_pi2 = 2.0 * PI * PI;
    let pass = within(lin, two_pi2, LINEAR_RATE_TOL) && within(non, NONLINEAR_RATE, NONLINEAR_RATE_TOL) && non > lin;
    Outcome::new(
        pass,
        format!(
            "linear {lin:.3} vs 2π² = {two_pi2:.3}, nonlinear {non:.3} vs {NONLINEAR_RATE} (β = {:.3})",
            nonlinear.beta()
        ),
    )
}

struct JkoRun {
    dt: f64,
    l1: f64,
    max_kkt: f64,
    max_increase: f64,
}

fn jko_runs() -> Vec<JkoRun> {
    let (_, model) = strip_models();
    let p0 = strip_initial(JKO_CELLS);
    let grid = *p0.grid();
    let reference = fv::solve(&model, &p0, JKO_T, &[JKO_T]).unwrap().pop().unwrap().field;
    JKO_STEPS
        .iter()
        .map(|&dt| {
            let snaps = jko::jko_solve(&model, &p0, dt, JKO_T, JKO_ATOMS).unwrap();
            let last = snaps.last().unwrap();
            assert_eq!(last.time, JKO_T);
            let (max_kkt, max_increase) = jko_sequence_checks(&model, &snaps);
            let (l1, _) = compare_densities(&last.quantiles.to_density(grid).unwrap(), &reference).unwrap();
            JkoRun { dt, l1, max_kkt, max_increase }
        })
        .collect()
}

/// Largest KKT residual and largest energy increase along an iterate
/// sequence, starting from the energy of the initial quantiles.
fn jko_sequence_checks(model: &MacroModel, snaps: &[jko::JkoSnapshot]) -> (f64, f64) {
    let mut e = jko::quantile_energy(model, &snaps[0].quantiles);
    let (mut kkt, mut increase) = (0.0_f64, f64::NEG_INFINITY);
    for s in &snaps[1..] {
        let r = s.report.expect("every step reports");
        kkt = kkt.max(r.kkt_residual);
        increase = increase.max(r.energy - e);
        e = r.energy;
    }
    (kkt, increase)
}

fn gradient_flow(jko: &[JkoRun]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut detail = Vec::new();
    for (name, model, p0, t_end) in configurations() {
        let sol = fv::solve_with(
            &model,
            &p0,
            &SolveOptions {
                output_times: vec![t_end],
                track_every_step: true,
                ..Default::default()
            },
        )
        .unwrap();
        worst = worst.max(sol.stats.max_energy_increase);
        detail.push(format!("{name} {:.1e}", sol.stats.max_energy_increase));
    }
    for run in jko {
        worst = worst.max(run.max_increase);
        detail.push(format!("jko dt={} {:.1e}", run.dt, run.max_increase));
    }
    // Minimizing movements with a confining potential and a nonzero β.
    let g = Grid::new(1, PDE_CELLS).unwrap();
    for (name, model, p0) in [
        ("jko hard disks", MacroModel::with_beta(1, 0.314, quad5()).unwrap(), InitialDensity::Indicator { lo: 0.1, hi: 0.3 }.on_grid(g).unwrap()),
        ("jko yukawa", MacroModel::with_beta(1, 0.392, volcano_x()).unwrap(), mixture().on_grid(g).unwrap()),
    ] {
        let snaps = jko::jko_solve(&model, &p0, 2e-3, 0.05, 500).unwrap();
        let (_, increase) = jko_sequence_checks(&model, &snaps);
        worst = worst.max(increase);
        detail.push(format!("{name} {increase:.1e}"));
    }
    Outcome::new(
        worst <= ENERGY_INCREASE_TOL,
        format!("largest per-step increase {worst:.2e} [{}]", detail.join(", ")),
    )
}

fn conservation() -> Outcome {
    let mut worst_drift = 0.0_f64;
    let mut worst_min = f64::INFINITY;
    let (_, nonlinear) = strip_models();
    let g = Grid::new(1, RATE_CELLS).unwrap();
    let yukawa = MacroModel::with_beta(1, 0.392, volcano_x()).unwrap();
    for (model, p0) in [(nonlinear, strip_initial(RATE_CELLS)), (yukawa, mixture().on_grid(g).unwrap())] {
        let mut solver = FvSolver::new(&model, g);
        let mut p = p0.clone();
        let m0 = p.integrate();
        for _ in 0..MASS_STEPS {
            let dt = solver.suggest_dt(&p).unwrap();
            let (next, stats) = solver.step(&p, dt).unwrap();
            worst_min = worst_min.min(stats.min_before_clip);
            p = next;
        }
        worst_drift = worst_drift.max((p.integrate() - m0).abs());
    }
    Outcome::new(
        worst_drift <= MASS_DRIFT_TOL && worst_min >= -NEGATIVITY_TOL,
        format!("mass drift {worst_drift:.2e} over {MASS_STEPS} steps, most negative pre-clip value {worst_min:.2e}"),
    )
}

fn jko_consistency(runs: &[JkoRun]) -> Outcome {
    let orders: Vec<f64> = runs.windows(2).map(|w| (w[0].l1 / w[1].l1).log2()).collect();
    let kkt = runs.iter().map(|r| r.max_kkt).fold(0.0, f64::max);
    let pass = orders.iter().all(|o| (JKO_ORDER.0..=JKO_ORDER.1).contains(o)) && kkt <= KKT_TOL;
    let errors: Vec<String> = runs.iter().map(|r| format!("dt={} L1={:.3e}", r.dt, r.l1)).collect();
    Outcome::new(
        pass,
        format!("{}; orders {:.3?}; max KKT residual {kkt:.1e}", errors.join(", "), orders),
    )
}

struct ParticleLeg {
    histograms: Vec<(f64, DensityField)>,
    rate: f64,
}

fn particle_leg(model: &MacroModel, pot: Option<&InteractionPotential>, seed: u64) -> ParticleLeg {
    let hist = Grid::new(1, HIST_CELLS).unwrap();
    let cfg = EnsembleConfig {
        d: 2,
        n_particles: PARTICLES,
        realizations: REALIZATIONS,
        dt: SDE_DT,
        t_end: SDE_T,
        snapshot_times: Vec::new(),
        histogram: Some(HistogramPlan {
            grid: hist,
            times: times(SDE_T, ENERGY_SAMPLES),
        }),
        pair: None,
        seed,
        initial: InitialDensity::Indicator { lo: 0.1, hi: 0.3 },
        noise: true,
    };
    let ens = run_ensemble(&cfg, model, pot).unwrap();
    // The histograms are x-marginals; their energy uses the 1D functional
    // with the same β.
    let em = MacroModel::with_beta(1, model.beta(), quad5()).unwrap();
    let p_inf = fv::steady_state(&em, &hist).unwrap();
    let curve = relative_energy(&em, ens.histograms.iter().map(|(t, h)| (*t, h)), &p_inf).unwrap();
    let rate = fit_decay_rate(&curve, None).unwrap().rate;
    ParticleLeg {
        histograms: ens.histograms,
        rate,
    }
}

fn particle_agreement() -> Outcome {
    let disks = InteractionPotential::new(InteractionKind::HardSphere, 0.01).unwrap();
    let alpha = disks.alpha_u(2).unwrap().value;
    let sde_int = MacroModel::new(2, PARTICLES, 0.01, alpha, quad5()).unwrap();
    let sde_point = MacroModel::linear(2, quad5());
    let pde_int = MacroModel::with_beta(1, sde_int.beta(), quad5()).unwrap();
    let pde_point = MacroModel::linear(1, quad5());

    let started = Instant::now();
    let point = particle_leg(&sde_point, None, 1);
    let int = particle_leg(&sde_int, Some(&disks), 2);

    let p0 = InitialDensity::Indicator { lo: 0.1, hi: 0.3 }
        .on_grid(Grid::new(1, PDE_CELLS).unwrap())
        .unwrap();
    let fv_final = fv::solve(&pde_point, &p0, SDE_T, &[SDE_T]).unwrap().pop().unwrap().field;
    let coarse = fv_final.coarsen(PDE_CELLS / HIST_CELLS).unwrap();
    let (_, hist_final) = point.histograms.last().unwrap();
    let (l1, _) = compare_densities(hist_final, &coarse).unwrap();

    let pde_rate_int = fitted_rate(&pde_int, &p0, SDE_T, ENERGY_SAMPLES);
    let pde_rate_point = fitted_rate(&pde_point, &p0, SDE_T, ENERGY_SAMPLES);
    let ordering_matches = (int.rate > point.rate) == (pde_rate_int > pde_rate_point);
    let pass = l1 <= CONTROL_L1_TOL && int.rate > point.rate && ordering_matches;
    Outcome::new(
        pass,
        format!(
            "u=0 control L1 {l1:.4} at t={SDE_T}; fitted rates particles {:.2} (disks) vs {:.2} (u=0), PDE {pde_rate_int:.2} vs {pde_rate_point:.2}; {:.0} s",
            int.rate,
            point.rate,
            started.elapsed().as_secs_f64()
        ),
    )
}

/// Composite Simpson rule on `[a, b]`.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn pair_correlation() -> Outcome {
    let pot = InteractionPotential::new(InteractionKind::Yukawa, GR_EPSILON).unwrap();
    let model = MacroModel::linear(2, ExternalPotential::Zero);
    let bins = (5.5 * GR_EPSILON / GR_BIN).round() as usize;
    let r_max = bins as f64 * GR_BIN;
    let cfg = EnsembleConfig {
        d: 2,
        n_particles: 2,
        realizations: GR_REALIZATIONS,
        dt: GR_DT,
        t_end: GR_T,
        snapshot_times: Vec::new(),
        histogram: None,
        pair: Some(PairPlan {
            bins,
            r_max,
            t_start: GR_BURN_IN,
            every: 1,
        }),
        seed: 3,
        initial: InitialDensity::Uniform,
        noise: true,
    };
    let started = Instant::now();
    let g = run_ensemble(&cfg, &model, Some(&pot)).unwrap().pair_correlation().unwrap();

    // Two particles in the unit square: the separation of independent
    // uniform points has density 2πr − 8r² + 2r³ for r ≤ 1, and the
    // equilibrium weight is e^{−u(r/ε)}.
    let ideal = |r: f64| 2.0 * PI * r - 8.0 * r * r + 2.0 * r.powi(3);
    let boltzmann = |r: f64| (-(-r / GR_EPSILON).exp() / (r / GR_EPSILON)).exp();
    let predicted = |a: f64, b: f64| simpson(|r| boltzmann(r) * ideal(r), a, b, 400) / simpson(ideal, a, b, 400);
    let reference = g.iter().position(|b| b.r_lo <= 5.0 * GR_EPSILON && 5.0 * GR_EPSILON < b.r_hi).unwrap();
    let g_ref = g[reference].g;
    let p_ref = predicted(g[reference].r_lo, g[reference].r_hi);

    let mut worst = 0.0_f64;
    let mut fewest = u64::MAX;
    for b in g.iter().filter(|b| b.r_lo >= 0.5 * GR_EPSILON - 1e-12 && b.r_hi <= 3.0 * GR_EPSILON + 1e-12) {
        let measured = b.g / g_ref;
        let want = predicted(b.r_lo, b.r_hi) / p_ref;
        worst = worst.max((measured / want - 1.0).abs());
        fewest = fewest.min(b.count);
    }
    Outcome::new(
        worst <= GR_TOL,
        format!(
            "largest relative deviation of g(r)/g(5ε) from e^-u {worst:.4} on [0.5ε, 3ε]; fewest counts per bin {fewest}; {:.0} s",
            started.elapsed().as_secs_f64()
        ),
    )
}

fn oracles() -> Outcome {
    let mut rng = RngPlan::new(99, 0).rng();

    let mut cell_list_ok = true;
    for k in 0..CELL_LIST_CONFIGS {
        let d = 1 + k % 3;
        let n = rng.random_range(2..=500);
        let cutoff = rng.random_range(0.005..0.2);
        let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-0.5..0.5)).collect();
        let mut cl = CellList::new(d, cutoff);
        cl.rebuild(&x);
        cell_list_ok &= cl.pairs_within(&x) == all_pairs_within(&x, d, cutoff);
    }

    let mut w2_err = 0.0_f64;
    for _ in 0..50 {
        let m = rng.random_range(2..300);
        let mut a: Vec<f64> = (0..m).map(|_| rng.random_range(-0.5..0.5)).collect();
        let mut b: Vec<f64> = (0..m).map(|_| rng.random_range(-0.5..0.5_f64).powi(3)).collect();
        let w2 = jko::w2_distance_1d(
            &QuantileField::new(sorted(&a)).unwrap(),
            &QuantileField::new(sorted(&b)).unwrap(),
        )
        .unwrap();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let coupling = (a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / m as f64).sqrt();
        w2_err = w2_err.max((w2 - coupling).abs());
    }

    let mut fd_err = 0.0_f64;
    for (_, model, _, _) in configurations() {
        let grid = Grid::new(model.dim(), 32).unwrap();
        let p = DensityField::new(grid, (0..grid.len()).map(|_| rng.random_range(0.2..3.0)).collect()).unwrap();
        let mut v: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        let shifted = |h: f64| {
            DensityField::new(grid, p.values().iter().zip(&v).map(|(p, v)| p + h * v).collect()).unwrap()
        };
        let h = 1e-5;
        let fd = (fv::free_energy(&model, &shifted(h)) - fv::free_energy(&model, &shifted(-h))) / (2.0 * h);
        let xi = fv::variational_derivative(&model, &p);
        let exact: f64 = xi.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() * grid.cell_volume();
        fd_err = fd_err.max((fd - exact).abs() / exact.abs());
    }

    Outcome::new(
        cell_list_ok && w2_err <= W2_TOL && fd_err <= FD_TOL,
        format!(
            "cell list equals brute force on {CELL_LIST_CONFIGS} configurations: {cell_list_ok}; W2 vs sorted coupling {w2_err:.1e}; variational derivative vs finite differences {fd_err:.1e}"
        ),
    )
}

fn all_pairs_within(x: &[f64], d: usize, cutoff: f64) -> Vec<(usize, usize)> {
    let n = x.len() / d;
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let r2: f64 = (0..d).map(|k| (x[i * d + k] - x[j * d + k]).powi(2)).sum();
            if r2 < cutoff * cutoff {
                out.push((i, j));
            }
        }
    }
    out
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut x = x.to_vec();
    x.sort_by(f64::total_cmp);
    x
}

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));

    let jko = OnceCell::new();

    let mut results = Vec::new();
    let mut run = |name: &str, f: &mut dyn FnMut() -> Outcome| {
        if selected(name) {
            let started = Instant::now();
            let outcome = f();
            let verdict = if outcome.pass { "PASS" } else { "FAIL" };
            println!("{verdict} {name}: {} ({:.1} s)", outcome.detail, started.elapsed().as_secs_f64());
            results.push(outcome.pass);
        }
    };

    run("coefficients", &mut coefficients);
    run("strip-rates", &mut strip_rates);
    run("gradient-flow", &mut || gradient_flow(jko.get_or_init(jko_runs)));
    run("conservation", &mut conservation);
    run("jko-consistency", &mut || jko_consistency(jko.get_or_init(jko_runs)));
    run("particle-pde", &mut particle_agreement);
    run("pair-correlation", &mut pair_correlation);
    run("oracles", &mut oracles);

    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
