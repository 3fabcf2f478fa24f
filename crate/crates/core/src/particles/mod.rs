//! Brownian dynamics of `N` particles in the unit box,
//!
//! ```text
//! dX_i = √2 dW_i − ∇V(X_i) dt − Σ_{j≠i} ∇_x u((X_i − X_j)/ε) dt,
//! ```
//!
//! integrated with Euler–Maruyama and mirror reflection at the walls. Hard
//! spheres carry no force; overlaps left by a step are removed by projecting
//! each overlapping pair back to contact.

mod cell_list;
mod ensemble;
mod pair;

pub use cell_list::{brute_force_pairs, CellList};
pub use ensemble::{
    ensemble_free_energy, histogram_density, run_ensemble, EnsembleConfig, HistogramPlan,
    PairPlan, ParticleEnsemble,
};
pub use pair::{ideal_pair_distance_pdf, pair_correlation, PairBin, PairDistanceHistogram};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fv::MacroModel;
use crate::grid::RngPlan;
use crate::initial::InitialDensity;
use crate::potentials::{ExternalPotential, InteractionPotential};
use cell_list::dist2;

/// Overlap tolerance for hard-sphere contacts.
pub const CONTACT_TOLERANCE: f64 = 1e-13;

/// Sweep cap for overlap removal after a time step.
pub const MAX_SWEEPS: usize = 1000;

/// Extra reach of the contact neighbor list, relative to the diameter.
const SKIN: f64 = 0.5;

/// Sweep cap when removing the overlaps of freshly sampled positions, which
/// start far from a hard-sphere configuration.
pub const MAX_INITIAL_SWEEPS: usize = 20_000;

/// Positions of one realization, flattened `N × d`, with its RNG stream.
#[derive(Debug, Clone)]
pub struct ParticleState {
    d: usize,
    positions: Vec<f64>,
    time: f64,
    plan: RngPlan,
    rng: ChaCha8Rng,
}

impl ParticleState {
    pub fn new(d: usize, positions: Vec<f64>, plan: RngPlan) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidInput(format!("dimension must be 1..=3, got {d}")));
        }
        if positions.len() % d != 0 {
            return Err(Error::InvalidInput(format!(
                "{} coordinates do not split into {d}-vectors",
                positions.len()
            )));
        }
        if let Some(x) = positions.iter().find(|x| !(-0.5..=0.5).contains(*x)) {
            return Err(Error::InvalidInput(format!("coordinate {x} outside the unit box")));
        }
        Ok(Self {
            d,
            positions,
            time: 0.0,
            rng: plan.rng(),
            plan,
        })
    }

    /// Draws `n` positions from `initial` using the state's own stream. With
    /// `hard_diameter`, overlaps of the sample are removed by projection.
    pub fn sample(
        initial: &InitialDensity,
        d: usize,
        n: usize,
        plan: RngPlan,
        hard_diameter: Option<f64>,
    ) -> Result<Self> {
        let mut rng = plan.rng();
        let positions = initial.sample(d, n, &mut rng)?;
        let mut state = Self {
            d,
            positions,
            time: 0.0,
            plan,
            rng,
        };
        if let Some(eps) = hard_diameter {
            let mut cl = CellList::new(d, eps * (1.0 + SKIN));
            resolve(&mut state.positions, d, eps, &mut cl, MAX_INITIAL_SWEEPS)?;
        }
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn plan(&self) -> RngPlan {
        self.plan
    }

    /// Smallest pairwise distance (infinite for fewer than two particles).
    pub fn min_pair_distance(&self) -> f64 {
        let n = self.len();
        let d = self.d;
        let mut best = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                best = best.min(dist2(&self.positions[i * d..(i + 1) * d], &self.positions[j * d..(j + 1) * d]));
            }
        }
        best.sqrt()
    }
}

#[inline]
fn reflect(x: f64) -> f64 {
    if x > 0.5 {
        1.0 - x
    } else if x < -0.5 {
        -1.0 - x
    } else {
        x
    }
}

/// Euler–Maruyama integrator with reusable force and neighbor buffers.
#[derive(Debug, Clone)]
pub struct Stepper {
    d: usize,
    external: ExternalPotential,
    interaction: Option<InteractionPotential>,
    noise: bool,
    cells: Option<CellList>,
    force: Vec<f64>,
}

impl Stepper {
    /// `interaction = None` gives independent particles.
    pub fn new(d: usize, external: ExternalPotential, interaction: Option<InteractionPotential>) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidInput(format!("dimension must be 1..=3, got {d}")));
        }
        let cells = match &interaction {
            Some(pot) if pot.epsilon > 0.0 => {
                let rc = if pot.is_hard_sphere() {
                    pot.epsilon * (1.0 + SKIN)
                } else {
                    pot.cutoff() * pot.epsilon
                };
                if !pot.is_hard_sphere() {
                    log::info!(
                        "pair cutoff {:.4} ε, largest neglected force {:.3e}",
                        pot.cutoff(),
                        pot.neglected_force()
                    );
                }
                Some(CellList::new(d, rc))
            }
            Some(_) => {
                return Err(Error::InvalidInput("interaction range ε must be positive".into()));
            }
            None => None,
        };
        Ok(Self {
            d,
            external,
            interaction,
            noise: true,
            cells,
            force: Vec::new(),
        })
    }

    /// Disables the Brownian increment (deterministic gradient descent).
    pub fn without_noise(mut self) -> Self {
        self.noise = false;
        self
    }

    pub fn is_hard_sphere(&self) -> bool {
        self.interaction.as_ref().is_some_and(|p| p.is_hard_sphere())
    }

    fn gather_forces(&mut self, x: &[f64]) -> Result<()> {
        let d = self.d;
        self.force.clear();
        self.force.resize(x.len(), 0.0);
        let mut g = [0.0; 3];
        for (p, f) in x.chunks_exact(d).zip(self.force.chunks_exact_mut(d)) {
            self.external.gradient(p, &mut g[..d]);
            for k in 0..d {
                f[k] = -g[k];
            }
        }
        let (Some(pot), Some(cells)) = (&self.interaction, &mut self.cells) else {
            return Ok(());
        };
        if pot.is_hard_sphere() {
            return Ok(());
        }
        cells.rebuild(x);
        let rc2 = cells.cutoff() * cells.cutoff();
        let force = &mut self.force;
        let mut coincident = false;
        cells.for_each_candidate(|i, j| {
            let (xi, xj) = (&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d]);
            let r2 = dist2(xi, xj);
            if r2 >= rc2 {
                return;
            }
            if r2 == 0.0 {
                coincident = true;
                return;
            }
            let s = pot.force_scale(r2);
            for k in 0..d {
                let fk = s * (xi[k] - xj[k]);
                force[i * d + k] += fk;
                force[j * d + k] -= fk;
            }
        });
        if coincident {
            return Err(Error::UndefinedAtOrigin);
        }
        Ok(())
    }

    /// One Euler–Maruyama step of size `dt`, followed by wall reflection and,
    /// for hard spheres, overlap removal.
    pub fn step(&mut self, state: &mut ParticleState, dt: f64) -> Result<()> {
        if state.d != self.d {
            return Err(Error::InvalidInput(format!(
                "state has dimension {}, stepper {}",
                state.d, self.d
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        self.gather_forces(&state.positions)?;
        let sigma = (2.0 * dt).sqrt();
        for (x, f) in state.positions.iter_mut().zip(&self.force) {
            let mut dx = f * dt;
            if self.noise {
                let z: f64 = state.rng.sample(StandardNormal);
                dx += sigma * z;
            }
            if !(dx.abs() <= 1.0) {
                return Err(Error::StepTooLarge { displacement: dx });
            }
            *x = reflect(*x + dx);
        }
        if self.is_hard_sphere() {
            let eps = self.interaction.as_ref().map_or(0.0, |p| p.epsilon);
            let cells = self.cells.as_mut().expect("hard spheres carry a cell list");
            resolve(&mut state.positions, self.d, eps, cells, MAX_SWEEPS)?;
        }
        state.time += dt;
        Ok(())
    }
}

/// One Euler–Maruyama step for the interacting system of `model`; `pot =
/// None` drops the pair forces.
pub fn em_step(
    state: &mut ParticleState,
    model: &MacroModel,
    pot: Option<&InteractionPotential>,
    dt: f64,
) -> Result<()> {
    Stepper::new(state.d, model.external().clone(), pot.cloned())?.step(state, dt)
}

/// Pushes every pair closer than `epsilon` apart symmetrically along the line
/// of centers to distance `epsilon`, sweeping until no overlap remains.
/// Returns the number of sweeps that moved particles.
pub fn resolve_hard_overlaps(state: &mut ParticleState, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("diameter must be positive, got {epsilon}")));
    }
    let mut cl = CellList::new(state.d, epsilon * (1.0 + SKIN));
    resolve(&mut state.positions, state.d, epsilon, &mut cl, MAX_SWEEPS)
}

fn resolve(x: &mut [f64], d: usize, eps: f64, cl: &mut CellList, max_sweeps: usize) -> Result<usize> {
    debug_assert!(cl.cutoff() >= eps * (1.0 + SKIN));
    let limit2 = (eps - CONTACT_TOLERANCE).powi(2);
    let reach2 = (eps * (1.0 + SKIN)).powi(2);
    let n = x.len() / d;
    let mut pairs = Vec::new();
    let mut moved = vec![0.0; n];
    let mut stale = true;
    for sweep in 0..=max_sweeps {
        if stale {
            // A pair outside the list needs a combined displacement above
            // ε·SKIN to overlap, so the list stays complete until some
            // particle has moved ε·SKIN/2.
            cl.rebuild(x);
            pairs.clear();
            cl.for_each_candidate(|i, j| {
                if dist2(&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d]) < reach2 {
                    pairs.push((i, j));
                }
            });
            moved.iter_mut().for_each(|m| *m = 0.0);
            stale = false;
        }
        let mut pushed = false;
        for &(i, j) in &pairs {
            let r2 = dist2(&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d]);
            if r2 >= limit2 {
                continue;
            }
            if sweep == max_sweeps {
                return Err(Error::Jammed { sweeps: max_sweeps });
            }
            pushed = true;
            let r = r2.sqrt();
            let mut dir = [0.0; 3];
            if r > 0.0 {
                for k in 0..d {
                    dir[k] = (x[i * d + k] - x[j * d + k]) / r;
                }
            } else {
                dir[0] = 1.0;
            }
            let shift = 0.5 * (eps - r);
            for (p, sign) in [(i, 1.0), (j, -1.0)] {
                let mut step2 = 0.0;
                for k in 0..d {
                    let old = x[p * d + k];
                    let new = (old + sign * shift * dir[k]).clamp(-0.5, 0.5);
                    step2 += (new - old) * (new - old);
                    x[p * d + k] = new;
                }
                moved[p] += step2.sqrt();
                if moved[p] > 0.5 * eps * SKIN {
                    stale = true;
                }
            }
        }
        if !pushed && !stale {
            return Ok(sweep);
        }
    }
    Err(Error::Jammed { sweeps: max_sweeps })
}
