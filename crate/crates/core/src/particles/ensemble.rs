//! Independent realizations, histogram densities and ensemble energies.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fv::{self, MacroModel};
use crate::grid::{DensityField, Grid, RngPlan};
use crate::initial::InitialDensity;
use crate::potentials::InteractionPotential;

use super::pair::{PairBin, PairDistanceHistogram};
use super::{ParticleState, Stepper};

/// Times at which positions of all realizations are pooled into histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramPlan {
    pub grid: Grid,
    pub times: Vec<f64>,
}

/// Pair distances recorded every `every` steps once `t ≥ t_start`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPlan {
    pub bins: usize,
    pub r_max: f64,
    pub t_start: f64,
    pub every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub d: usize,
    pub n_particles: usize,
    pub realizations: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Times at which full position sets are kept.
    pub snapshot_times: Vec<f64>,
    pub histogram: Option<HistogramPlan>,
    pub pair: Option<PairPlan>,
    pub seed: u64,
    pub initial: InitialDensity,
    pub noise: bool,
}

impl EnsembleConfig {
    fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            return Err(Error::InvalidInput(format!("dimension must be 1..=3, got {}", self.d)));
        }
        if self.n_particles == 0 || self.realizations == 0 {
            return Err(Error::InvalidInput("need at least one particle and one realization".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) || !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "need dt > 0 and t_end >= 0 (got {}, {})",
                self.dt, self.t_end
            )));
        }
        let hist_times = self.histogram.iter().flat_map(|h| h.times.iter());
        if let Some(t) = self
            .snapshot_times
            .iter()
            .chain(hist_times)
            .find(|t| !(**t >= 0.0 && **t <= self.t_end))
        {
            return Err(Error::InvalidInput(format!(
                "recording time {t} outside [0, {}]",
                self.t_end
            )));
        }
        if let Some(h) = &self.histogram {
            if h.grid.dim() > self.d {
                return Err(Error::InvalidInput(
                    "histogram grid has more axes than the particles".into(),
                ));
            }
        }
        if let Some(p) = &self.pair {
            PairDistanceHistogram::new(self.d, p.bins, p.r_max)?;
            if p.every == 0 {
                return Err(Error::InvalidInput("pair sampling interval must be >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Output of [`run_ensemble`]; everything is pooled in realization order.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub d: usize,
    pub n_particles: usize,
    pub snapshot_times: Vec<f64>,
    /// `snapshots[r][k]`: positions of realization `r` at `snapshot_times[k]`.
    pub snapshots: Vec<Vec<Vec<f64>>>,
    pub histograms: Vec<(f64, DensityField)>,
    pub pairs: Option<PairDistanceHistogram>,
    pub steps: usize,
}

impl ParticleEnsemble {
    /// Pooled positions of all realizations at snapshot `k`.
    pub fn pooled(&self, k: usize) -> Vec<f64> {
        self.snapshots.iter().flat_map(|r| r[k].iter().copied()).collect()
    }

    pub fn pair_correlation(&self) -> Option<Vec<PairBin>> {
        self.pairs.as_ref().map(|p| p.correlation())
    }
}

struct Realization {
    snapshots: Vec<Vec<f64>>,
    counts: Vec<Vec<u64>>,
    pairs: Option<PairDistanceHistogram>,
    steps: usize,
}

#[derive(Clone, Copy)]
struct Stop {
    t: f64,
    snapshot: Option<usize>,
    histogram: Option<usize>,
}

fn schedule(cfg: &EnsembleConfig) -> Vec<Stop> {
    let mut stops: Vec<Stop> = cfg
        .snapshot_times
        .iter()
        .enumerate()
        .map(|(k, &t)| Stop { t, snapshot: Some(k), histogram: None })
        .collect();
    if let Some(h) = &cfg.histogram {
        stops.extend(h.times.iter().enumerate().map(|(k, &t)| Stop {
            t,
            snapshot: None,
            histogram: Some(k),
        }));
    }
    stops.push(Stop { t: cfg.t_end, snapshot: None, histogram: None });
    stops.sort_by(|a, b| a.t.total_cmp(&b.t));
    stops
}

fn run_one(
    cfg: &EnsembleConfig,
    stepper: &Stepper,
    hard_diameter: Option<f64>,
    index: usize,
) -> Result<Realization> {
    let plan = RngPlan::new(cfg.seed, index as u64);
    let mut state = ParticleState::sample(&cfg.initial, cfg.d, cfg.n_particles, plan, hard_diameter)?;
    let mut stepper = stepper.clone();
    let mut out = Realization {
        snapshots: vec![Vec::new(); cfg.snapshot_times.len()],
        counts: cfg
            .histogram
            .as_ref()
            .map(|h| vec![vec![0; h.grid.len()]; h.times.len()])
            .unwrap_or_default(),
        pairs: match &cfg.pair {
            Some(p) => Some(PairDistanceHistogram::new(cfg.d, p.bins, p.r_max)?),
            None => None,
        },
        steps: 0,
    };
    let mut t = 0.0;
    for stop in schedule(cfg) {
        while t < stop.t {
            let remaining = stop.t - t;
            let dt = cfg.dt.min(remaining);
            stepper.step(&mut state, dt)?;
            t = if dt >= remaining { stop.t } else { t + dt };
            out.steps += 1;
            if let (Some(p), Some(plan)) = (&mut out.pairs, &cfg.pair) {
                if t >= plan.t_start && out.steps % plan.every == 0 {
                    p.add(state.positions());
                }
            }
        }
        if let Some(k) = stop.snapshot {
            out.snapshots[k] = state.positions().to_vec();
        }
        if let (Some(k), Some(h)) = (stop.histogram, &cfg.histogram) {
            bin_counts(state.positions(), cfg.d, &h.grid, &mut out.counts[k]);
        }
    }
    Ok(out)
}

/// Runs `R` independent realizations in parallel. Realization `r` uses the
/// stream `(seed, r)`, so results do not depend on scheduling.
pub fn run_ensemble(
    cfg: &EnsembleConfig,
    model: &MacroModel,
    pot: Option<&InteractionPotential>,
) -> Result<ParticleEnsemble> {
    cfg.validate()?;
    if model.dim() != cfg.d {
        return Err(Error::InvalidInput(format!(
            "model dimension {} differs from particle dimension {}",
            model.dim(),
            cfg.d
        )));
    }
    let stepper = Stepper::new(cfg.d, model.external().clone(), pot.cloned())?;
    let stepper = if cfg.noise { stepper } else { stepper.without_noise() };
    let hard = pot.filter(|p| p.is_hard_sphere()).map(|p| p.epsilon);

    let runs: Vec<Realization> = (0..cfg.realizations)
        .into_par_iter()
        .map(|r| run_one(cfg, &stepper, hard, r))
        .collect::<Result<_>>()?;

    let mut histograms = Vec::new();
    if let Some(h) = &cfg.histogram {
        for (k, &t) in h.times.iter().enumerate() {
            let mut total = vec![0u64; h.grid.len()];
            for run in &runs {
                for (a, b) in total.iter_mut().zip(&run.counts[k]) {
                    *a += b;
                }
            }
            histograms.push((t, counts_to_density(h.grid, &total)?));
        }
    }
    let mut pairs = None::<PairDistanceHistogram>;
    for run in &runs {
        if let Some(p) = &run.pairs {
            match &mut pairs {
                Some(acc) => acc.merge(p)?,
                None => pairs = Some(p.clone()),
            }
        }
    }
    Ok(ParticleEnsemble {
        d: cfg.d,
        n_particles: cfg.n_particles,
        snapshot_times: cfg.snapshot_times.clone(),
        steps: runs.first().map_or(0, |r| r.steps),
        snapshots: runs.into_iter().map(|r| r.snapshots).collect(),
        histograms,
        pairs,
    })
}

fn bin_counts(positions: &[f64], d: usize, grid: &Grid, counts: &mut [u64]) {
    for p in positions.chunks_exact(d) {
        let ix = grid.locate(p[0]);
        let iy = if grid.dim() == 2 { grid.locate(p[1]) } else { 0 };
        counts[grid.index(ix, iy)] += 1;
    }
}

fn counts_to_density(grid: Grid, counts: &[u64]) -> Result<DensityField> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::DegenerateDensity);
    }
    let scale = 1.0 / (total as f64 * grid.cell_volume());
    DensityField::new(grid, counts.iter().map(|&c| c as f64 * scale).collect())
}

/// Normalized histogram of positions (flattened `N × d`). A grid with fewer
/// axes than the particles gives the marginal in the leading coordinates.
pub fn histogram_density(positions: &[f64], d: usize, grid: Grid) -> Result<DensityField> {
    if grid.dim() > d || d == 0 || positions.len() % d != 0 {
        return Err(Error::InvalidInput(format!(
            "cannot bin {d}-dimensional positions on a {}-dimensional grid",
            grid.dim()
        )));
    }
    let mut counts = vec![0u64; grid.len()];
    bin_counts(positions, d, &grid, &mut counts);
    counts_to_density(grid, &counts)
}

/// Free energy of a histogram density, the same discrete functional as the
/// finite-volume solver uses.
pub fn ensemble_free_energy(model: &MacroModel, hist: &DensityField) -> f64 {
    fv::free_energy(model, hist)
}
