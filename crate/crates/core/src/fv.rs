//! Finite-volume solver for the macroscopic equation
//!
//! ```text
//! ∂p/∂t = ∇·[(1 + β p) ∇p + p ∇V] = ∇·(p ∇ξ),    ξ = log p + β p + V,
//! ```
//!
//! on the unit box with no-flux walls. The flux on each interior face is
//! upwinded in the velocity `−∇ξ`, which keeps densities nonnegative and
//! dissipates the free energy `E(p) = ∫ p log p + (β/2) p² + V p`.

use crate::error::{Error, Result};
use crate::grid::{DensityField, Grid};
use crate::potentials::ExternalPotential;

/// Floor applied to densities inside the logarithm of `ξ`.
pub const LOG_FLOOR: f64 = 1e-300;

/// Fraction of the diffusive limit `h² / (2d (1 + β max p))` used as the
/// explicit step bound.
pub const DIFFUSIVE_SAFETY: f64 = 0.45;

/// Fraction of the upwind positivity limit used as the explicit step bound.
pub const POSITIVITY_SAFETY: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct MacroModel {
    d: usize,
    n_particles: usize,
    epsilon: f64,
    alpha: f64,
    external: ExternalPotential,
    beta: f64,
}

impl MacroModel {
    /// `β = α (N − 1) ε^d`. Warns when the volume fraction `N ε^d` leaves
    /// the dilute regime.
    pub fn new(
        d: usize,
        n_particles: usize,
        epsilon: f64,
        alpha: f64,
        external: ExternalPotential,
    ) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidInput(format!("dimension must be 1..=3, got {d}")));
        }
        if n_particles == 0 {
            return Err(Error::InvalidInput("need at least one particle".into()));
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) || !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon and alpha must be finite and nonnegative (got {epsilon}, {alpha})"
            )));
        }
        let beta = alpha * (n_particles as f64 - 1.0) * epsilon.powi(d as i32);
        let model = Self {
            d,
            n_particles,
            epsilon,
            alpha,
            external,
            beta,
        };
        let phi = model.volume_fraction();
        if phi > 0.1 {
            log::warn!("volume fraction N·ε^d = {phi:.3} is not small; the macroscopic model assumes a dilute system");
        }
        Ok(model)
    }

    /// Linear Fokker–Planck model (`β = 0`).
    pub fn linear(d: usize, external: ExternalPotential) -> Self {
        Self {
            d,
            n_particles: 1,
            epsilon: 0.0,
            alpha: 0.0,
            external,
            beta: 0.0,
        }
    }

    /// Model with a prescribed nonlinearity `β`, bypassing `(α, N, ε)`.
    pub fn with_beta(d: usize, beta: f64, external: ExternalPotential) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidInput(format!("beta must be >= 0, got {beta}")));
        }
        Ok(Self {
            d,
            n_particles: 1,
            epsilon: 0.0,
            alpha: 0.0,
            external,
            beta,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn external(&self) -> &ExternalPotential {
        &self.external
    }

    pub fn volume_fraction(&self) -> f64 {
        self.n_particles as f64 * self.epsilon.powi(self.d as i32)
    }

    /// Effective diffusion coefficient `1 + β` of the equation linearized
    /// around the uniform state.
    pub fn effective_diffusion(&self) -> f64 {
        1.0 + self.beta
    }

    fn potential_on(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len())
            .map(|i| {
                let c = grid.cell_center(i);
                self.external.value(&c[..grid.dim()])
            })
            .collect()
    }
}

/// Free energy at one instant; `relative_energy` is measured against the
/// steady state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub time: f64,
    pub energy: f64,
    pub relative_energy: f64,
}

fn entropy_density(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

fn energy_with(beta: f64, v: &[f64], p: &DensityField) -> f64 {
    let s: f64 = p
        .values()
        .iter()
        .zip(v)
        .map(|(&p, &v)| entropy_density(p) + 0.5 * beta * p * p + v * p)
        .sum();
    s * p.grid().cell_volume()
}

/// Midpoint value of `∫ p log p + (β/2) p² + V p`; empty cells contribute no
/// entropy.
pub fn free_energy(model: &MacroModel, p: &DensityField) -> f64 {
    energy_with(model.beta, &model.potential_on(p.grid()), p)
}

fn xi_with(beta: f64, v: &[f64], p: &[f64], out: &mut [f64]) -> usize {
    let mut clipped = 0;
    for ((o, &p), &v) in out.iter_mut().zip(p).zip(v) {
        let q = if p < LOG_FLOOR {
            clipped += 1;
            LOG_FLOOR
        } else {
            p
        };
        *o = q.ln() + beta * p + v;
    }
    clipped
}

/// `ξ = log p + β p + V` per cell, the variational derivative of the free
/// energy up to an additive constant (the flow potential is `−ξ`).
pub fn variational_derivative(model: &MacroModel, p: &DensityField) -> Vec<f64> {
    let v = model.potential_on(p.grid());
    let mut xi = vec![0.0; p.values().len()];
    let clipped = xi_with(model.beta, &v, p.values(), &mut xi);
    if clipped > 0 {
        log::warn!("{clipped} cells below {LOG_FLOOR:e} clipped in log p");
    }
    xi
}

/// Diagnostics from one explicit step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Most negative cell value before clipping (zero if none).
    pub min_before_clip: f64,
    pub clipped_cells: usize,
}

/// Explicit upwind finite-volume stepper for one model on one grid.
#[derive(Debug, Clone)]
pub struct FvSolver<'a> {
    model: &'a MacroModel,
    grid: Grid,
    v: Vec<f64>,
    xi: Vec<f64>,
    div: Vec<f64>,
}

impl<'a> FvSolver<'a> {
    pub fn new(model: &'a MacroModel, grid: Grid) -> Self {
        let v = model.potential_on(&grid);
        Self {
            model,
            grid,
            v,
            xi: vec![0.0; grid.len()],
            div: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn free_energy(&self, p: &DensityField) -> f64 {
        energy_with(self.model.beta, &self.v, p)
    }

    fn check_grid(&self, p: &DensityField) -> Result<()> {
        if *p.grid() != self.grid {
            return Err(Error::GridMismatch(format!(
                "solver grid {:?} vs field grid {:?}",
                self.grid,
                p.grid()
            )));
        }
        Ok(())
    }

    /// Visits every interior face once as `(left, right)` flat indices.
    fn for_each_face(grid: &Grid, mut f: impl FnMut(usize, usize)) {
        let n = grid.cells_per_dim();
        let rows = if grid.dim() == 1 { 1 } else { n };
        for iy in 0..rows {
            for ix in 0..n - 1 {
                f(grid.index(ix, iy), grid.index(ix + 1, iy));
            }
        }
        if grid.dim() == 2 {
            for iy in 0..n - 1 {
                for ix in 0..n {
                    f(grid.index(ix, iy), grid.index(ix, iy + 1));
                }
            }
        }
    }

    /// Largest stable explicit step: the smaller of the diffusive bound
    /// `0.45 h² / (2d (1 + β max p))` and 90% of the upwind positivity bound
    /// `h / max_i Σ(outgoing face speeds of cell i)`.
    pub fn suggest_dt(&mut self, p: &DensityField) -> Result<f64> {
        self.check_grid(p)?;
        let h = self.grid.spacing();
        let d = self.grid.dim() as f64;
        let pmax = p.values().iter().cloned().fold(0.0, f64::max);
        let diffusive = DIFFUSIVE_SAFETY * h * h / (2.0 * d * (1.0 + self.model.beta * pmax));

        xi_with(self.model.beta, &self.v, p.values(), &mut self.xi);
        let out = &mut self.div;
        out.iter_mut().for_each(|o| *o = 0.0);
        let xi = &self.xi;
        Self::for_each_face(&self.grid, |l, r| {
            let u = -(xi[r] - xi[l]) / h;
            if u > 0.0 {
                out[l] += u;
            } else {
                out[r] -= u;
            }
        });
        let smax = out.iter().cloned().fold(0.0, f64::max);
        let positivity = if smax > 0.0 {
            POSITIVITY_SAFETY * h / smax
        } else {
            f64::INFINITY
        };
        Ok(diffusive.min(positivity))
    }

    /// One explicit step of size `dt`; rejects steps above [`Self::suggest_dt`].
    pub fn step(&mut self, p: &DensityField, dt: f64) -> Result<(DensityField, StepStats)> {
        let bound = self.suggest_dt(p)?;
        if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, bound });
        }
        Ok(self.step_unchecked(p, dt))
    }

    /// Assumes `self.xi` already holds ξ for `p` (set by `suggest_dt`).
    fn step_unchecked(&mut self, p: &DensityField, dt: f64) -> (DensityField, StepStats) {
        let h = self.grid.spacing();
        let vals = p.values();
        let div = &mut self.div;
        div.iter_mut().for_each(|o| *o = 0.0);
        let xi = &self.xi;
        Self::for_each_face(&self.grid, |l, r| {
            let u = -(xi[r] - xi[l]) / h;
            let flux = u.max(0.0) * vals[l] + u.min(0.0) * vals[r];
            div[l] -= flux;
            div[r] += flux;
        });
        let lambda = dt / h;
        let mut next: Vec<f64> = vals.iter().zip(div.iter()).map(|(p, f)| p + lambda * f).collect();

        let mut stats = StepStats {
            min_before_clip: 0.0,
            clipped_cells: 0,
        };
        for v in next.iter_mut() {
            if *v < 0.0 {
                stats.min_before_clip = stats.min_before_clip.min(*v);
                stats.clipped_cells += 1;
                *v = 0.0;
            }
        }
        if stats.clipped_cells > 0 {
            log::warn!(
                "clipped {} negative cells (min {:e}) and renormalized",
                stats.clipped_cells,
                stats.min_before_clip
            );
            let before: f64 = vals.iter().sum();
            let after: f64 = next.iter().sum();
            if after > 0.0 {
                next.iter_mut().for_each(|v| *v *= before / after);
            }
        }
        // Values are finite and nonnegative by construction.
        let field = DensityField::new(self.grid, next).expect("admissible after clipping");
        (field, stats)
    }

    /// Adaptive step: uses `min(dt_max, suggest_dt)` and returns the step taken.
    fn step_adaptive(&mut self, p: &DensityField, dt_max: f64) -> Result<(DensityField, StepStats, f64)> {
        let bound = self.suggest_dt(p)?;
        let dt = dt_max.min(bound);
        let (q, s) = self.step_unchecked(p, dt);
        Ok((q, s, dt))
    }
}

/// One explicit finite-volume step. Fails with a CFL error when `dt` exceeds
/// the stable bound.
pub fn step(model: &MacroModel, p: &DensityField, dt: f64) -> Result<DensityField> {
    FvSolver::new(model, *p.grid()).step(p, dt).map(|(q, _)| q)
}

/// Largest stable step for `p`.
pub fn suggest_dt(model: &MacroModel, p: &DensityField) -> f64 {
    FvSolver::new(model, *p.grid())
        .suggest_dt(p)
        .expect("grid matches by construction")
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    /// Times at which density snapshots are returned.
    pub output_times: Vec<f64>,
    /// Extra times at which only the energy is recorded.
    pub energy_times: Vec<f64>,
    /// Upper bound on the time step; the stable bound always applies.
    pub max_dt: Option<f64>,
    /// Evaluate the energy after every step and record the worst increase.
    pub track_every_step: bool,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub field: DensityField,
    pub energy: EnergyReport,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStats {
    pub steps: usize,
    /// Largest `E(p_{k+1}) − E(p_k)` over all steps; negative when every step
    /// dissipates. Zero without per-step tracking.
    pub max_energy_increase: f64,
    /// Largest `|mass_{k+1} − mass_k|` over all steps.
    pub max_mass_change: f64,
    /// `|mass(T) − mass(0)|`.
    pub total_mass_drift: f64,
    /// Most negative pre-clip value seen.
    pub min_before_clip: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub snapshots: Vec<Snapshot>,
    pub energy: Vec<EnergyReport>,
    pub stats: RunStats,
}

/// Advances `p0` to `t_end`, landing exactly on each output time, and returns
/// the snapshots with their energy reports.
pub fn solve(
    model: &MacroModel,
    p0: &DensityField,
    t_end: f64,
    output_times: &[f64],
) -> Result<Vec<Snapshot>> {
    let mut times: Vec<f64> = output_times.to_vec();
    if !times.iter().any(|t| *t == t_end) {
        times.push(t_end);
    }
    let opts = SolveOptions {
        output_times: times,
        ..Default::default()
    };
    solve_with(model, p0, &opts).map(|s| s.snapshots)
}

pub fn solve_with(model: &MacroModel, p0: &DensityField, opts: &SolveOptions) -> Result<Solution> {
    let grid = *p0.grid();
    let p_inf = steady_state(model, &grid)?;
    let mut solver = FvSolver::new(model, grid);
    let e_inf = solver.free_energy(&p_inf);

    let mut stops: Vec<(f64, bool)> = opts
        .output_times
        .iter()
        .map(|t| (*t, true))
        .chain(opts.energy_times.iter().map(|t| (*t, false)))
        .collect();
    if let Some((t, _)) = stops.iter().find(|(t, _)| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidInput(format!("invalid output time {t}")));
    }
    stops.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));

    let report = |t: f64, e: f64| EnergyReport {
        time: t,
        energy: e,
        relative_energy: e - e_inf,
    };
    let max_dt = opts.max_dt.unwrap_or(f64::INFINITY);
    let mut p = p0.clone();
    let mut t = 0.0;
    let mut e = solver.free_energy(&p);
    let mass0 = p.integrate();
    let mut stats = RunStats {
        max_energy_increase: if opts.track_every_step { f64::NEG_INFINITY } else { 0.0 },
        ..Default::default()
    };
    let mut snapshots = Vec::new();
    let mut energy = Vec::new();
    let mut last_energy_time = f64::NAN;

    for (stop, is_output) in stops {
        while t < stop {
            let remaining = stop - t;
            let (q, s, dt) = solver.step_adaptive(&p, max_dt.min(remaining))?;
            let mass_before = p.integrate();
            p = q;
            t = if dt >= remaining { stop } else { t + dt };
            stats.steps += 1;
            stats.min_before_clip = stats.min_before_clip.min(s.min_before_clip);
            stats.max_mass_change = stats.max_mass_change.max((p.integrate() - mass_before).abs());
            if opts.track_every_step {
                let e_new = solver.free_energy(&p);
                stats.max_energy_increase = stats.max_energy_increase.max(e_new - e);
                e = e_new;
            }
        }
        if !opts.track_every_step {
            e = solver.free_energy(&p);
        }
        let r = report(t, e);
        if is_output {
            snapshots.push(Snapshot {
                time: t,
                field: p.clone(),
                energy: r,
            });
        }
        if last_energy_time != t {
            energy.push(r);
            last_energy_time = t;
        }
    }
    stats.total_mass_drift = (p.integrate() - mass0).abs();
    Ok(Solution {
        snapshots,
        energy,
        stats,
    })
}

/// Solves `log y + β y = b` for `y > 0`.
fn solve_cell(beta: f64, b: f64) -> f64 {
    if beta == 0.0 {
        return b.exp();
    }
    // Newton in s = log y on the convex increasing f(s) = s + β e^s − b,
    // started to the right of the root.
    let mut s = if b > beta { b.min((b / beta).ln()) } else { b };
    for _ in 0..200 {
        let es = s.exp();
        let f = s + beta * es - b;
        let step = f / (1.0 + beta * es);
        s -= step;
        if step.abs() <= 1e-15 * (1.0 + s.abs()) {
            break;
        }
    }
    s.exp()
}

/// Unit-mass stationary density: `log p + β p + V = c` in every cell, with
/// the constant `c` fixed by the mass constraint.
pub fn steady_state(model: &MacroModel, grid: &Grid) -> Result<DensityField> {
    let v = model.potential_on(grid);
    let beta = model.beta;
    let w = grid.cell_volume();
    let field = |c: f64| -> Vec<f64> { v.iter().map(|vi| solve_cell(beta, c - vi)).collect() };
    let mass = |p: &[f64]| p.iter().sum::<f64>() * w;

    // Exact for β = 0; a good start otherwise.
    let vmin = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let z: f64 = v.iter().map(|vi| (vmin - vi).exp()).sum::<f64>() * w;
    let mut c = vmin - z.ln();
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut p = field(c);
    for _ in 0..200 {
        let m = mass(&p);
        let g = m - 1.0;
        if g.abs() <= 1e-15 {
            break;
        }
        if g > 0.0 {
            hi = c;
        } else {
            lo = c;
        }
        let dm: f64 = p.iter().map(|pi| pi / (1.0 + beta * pi)).sum::<f64>() * w;
        let mut next = c - g / dm;
        if !(next > lo && next < hi) {
            next = if lo.is_finite() && hi.is_finite() {
                0.5 * (lo + hi)
            } else if lo.is_finite() {
                lo + 1.0
            } else {
                hi - 1.0
            };
        }
        if next == c {
            break;
        }
        c = next;
        p = field(c);
    }
    DensityField::new(*grid, p)?.normalize()
}

/// Decay rate `(1 + β)·2π²` of the free energy for the equation linearized
/// around the uniform state on the unit box (the slowest mass-preserving
/// Neumann mode has eigenvalue `π²`, and the energy is quadratic in it).
pub fn linearized_rate(model: &MacroModel) -> Result<f64> {
    if !model.external.is_zero() {
        return Err(Error::LinearizedRateNeedsZeroPotential);
    }
    Ok(model.effective_diffusion() * 2.0 * std::f64::consts::PI.powi(2))
}
