//! One-dimensional minimizing movements for the free energy in the
//! Wasserstein-2 metric.
//!
//! A density on `[−1/2, 1/2]` is represented by `M` quantile atoms
//! `X_j = F^{−1}((j + 1/2)/M)`. Between neighbouring atoms the density is
//! constant with mass `1/M`; the two end cells `[−1/2, X_0]` and
//! `[X_{M−1}, 1/2]` carry `1/(2M)` each. In these variables
//! `W₂²(p, q) = (1/M) Σ (X_j − Y_j)²` exactly and the free energy is a sum of
//! convex functions of the cell lengths, so each step
//!
//! ```text
//! X^{k+1} = argmin (1/(2 dt M)) Σ (X_j − X^k_j)² + E(X)
//! ```
//!
//! is a smooth convex problem with a tridiagonal Hessian.

use crate::error::{Error, Result};
use crate::fv::MacroModel;
use crate::grid::{DensityField, Grid};

/// Smallest admissible cell length.
pub const GAP_FLOOR: f64 = 1e-12;

/// Stopping tolerance on the scaled gradient `M ∇Φ`.
pub const GRADIENT_TOLERANCE: f64 = 1e-9;

pub const MAX_ITERATIONS: usize = 500;

/// Scaled gradient below which undamped Newton steps are tried first.
const NEWTON_ZONE: f64 = 1e-4;

/// Quantile atoms of a density on the unit interval, together with the
/// lengths of the `M + 1` cells they delimit. Cell lengths are kept
/// separately so that they never suffer cancellation.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileField {
    x: Vec<f64>,
    gaps: Vec<f64>,
}

fn gaps_of(x: &[f64]) -> Vec<f64> {
    let m = x.len();
    let mut g = Vec::with_capacity(m + 1);
    g.push(x[0] + 0.5);
    g.extend(x.windows(2).map(|w| w[1] - w[0]));
    g.push(0.5 - x[m - 1]);
    g
}

impl QuantileField {
    /// Atoms must be strictly increasing and strictly inside the box.
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::InvalidInput("need at least two quantile atoms".into()));
        }
        if !(x[0] > -0.5 && x[x.len() - 1] < 0.5) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("quantile atoms must lie inside (−1/2, 1/2)".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("quantile atoms must be strictly increasing".into()));
        }
        let gaps = gaps_of(&x);
        Ok(Self { x, gaps })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        Self::new((0..m).map(|j| -0.5 + (j as f64 + 0.5) / m as f64).collect())
    }

    /// Inverts the piecewise-linear CDF of a one-dimensional field.
    pub fn from_density(p: &DensityField, m: usize) -> Result<Self> {
        let g = p.grid();
        if g.dim() != 1 {
            return Err(Error::InvalidInput("quantile fields are one-dimensional".into()));
        }
        let p = p.normalize()?;
        let h = g.spacing();
        let mut cdf = Vec::with_capacity(g.len() + 1);
        cdf.push(0.0);
        for v in p.values() {
            cdf.push(cdf.last().unwrap() + v * h);
        }
        let total = *cdf.last().unwrap();
        let x = (0..m)
            .map(|j| {
                let s = (j as f64 + 0.5) / m as f64 * total;
                let k = cdf.partition_point(|c| *c < s).clamp(1, g.len()) - 1;
                let mass = cdf[k + 1] - cdf[k];
                let frac = if mass > 0.0 { (s - cdf[k]) / mass } else { 0.5 };
                g.edge(k) + frac.clamp(0.0, 1.0) * h
            })
            .collect();
        Self::new(x)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn atoms(&self) -> &[f64] {
        &self.x
    }

    /// Cell lengths, left end cell first.
    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    /// CDF at `y`: piecewise linear through `(−1/2, 0)`, `(X_j, (j + 1/2)/M)`
    /// and `(1/2, 1)`.
    pub fn cdf(&self, y: f64) -> f64 {
        let m = self.x.len();
        if y <= -0.5 {
            return 0.0;
        }
        if y >= 0.5 {
            return 1.0;
        }
        let k = self.x.partition_point(|v| *v <= y);
        let (x0, s0, x1, s1) = if k == 0 {
            (-0.5, 0.0, self.x[0], 0.5 / m as f64)
        } else if k == m {
            (self.x[m - 1], 1.0 - 0.5 / m as f64, 0.5, 1.0)
        } else {
            (
                self.x[k - 1],
                (k as f64 - 0.5) / m as f64,
                self.x[k],
                (k as f64 + 0.5) / m as f64,
            )
        };
        s0 + (s1 - s0) * (y - x0) / (x1 - x0)
    }

    /// Exact cell averages of the piecewise-constant density on `grid`.
    pub fn to_density(&self, grid: Grid) -> Result<DensityField> {
        if grid.dim() != 1 {
            return Err(Error::InvalidInput("quantile fields are one-dimensional".into()));
        }
        let h = grid.spacing();
        let values = (0..grid.len())
            .map(|i| {
                let a = grid.edge(i);
                ((self.cdf(a + h) - self.cdf(a)) / h).max(0.0)
            })
            .collect();
        DensityField::new(grid, values)
    }
}

/// `W₂` between two quantile fields with the same number of atoms.
pub fn w2_distance_1d(p: &QuantileField, q: &QuantileField) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidInput(format!(
            "quantile fields have {} and {} atoms",
            p.len(),
            q.len()
        )));
    }
    let m = p.len() as f64;
    Ok((p.x.iter().zip(&q.x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / m).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JkoStepReport {
    pub objective: f64,
    pub w2_squared: f64,
    pub energy: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Whether some cell length hit [`GAP_FLOOR`].
    pub floor_active: bool,
}

/// Cell masses and the per-cell energy `m log(m/g) + (β/2) m²/g`. Cells are
/// indexed `0` (left end), `1..M` (interior) and `M` (right end).
struct Cells {
    m: usize,
    beta: f64,
}

impl Cells {
    fn mass(&self, k: usize) -> f64 {
        if k == 0 || k == self.m {
            0.5 / self.m as f64
        } else {
            1.0 / self.m as f64
        }
    }

    fn energy(&self, k: usize, g: f64) -> f64 {
        let mass = self.mass(k);
        mass * (mass / g).ln() + 0.5 * self.beta * mass * mass / g
    }

    fn d1(&self, k: usize, g: f64) -> f64 {
        let mass = self.mass(k);
        -mass / g - 0.5 * self.beta * mass * mass / (g * g)
    }

    fn d2(&self, k: usize, g: f64) -> f64 {
        let mass = self.mass(k);
        mass / (g * g) + self.beta * mass * mass / (g * g * g)
    }

    fn total(&self, model: &MacroModel, gaps: &[f64], x: impl Iterator<Item = f64>) -> f64 {
        let internal: f64 = gaps.iter().enumerate().map(|(k, g)| self.energy(k, *g)).sum();
        let potential: f64 = x.map(|v| model.external().value(&[v])).sum::<f64>() / self.m as f64;
        internal + potential
    }
}

/// Free energy of a quantile field, the exact functional of its
/// piecewise-constant density except that `V` is sampled at the atoms.
pub fn quantile_energy(model: &MacroModel, q: &QuantileField) -> f64 {
    let cells = Cells {
        m: q.len(),
        beta: model.beta(),
    };
    cells.total(model, &q.gaps, q.x.iter().copied())
}

/// Iterate of one step: displacements `δ = X − X_prev` and the matching
/// cell-length increments `η`, updated side by side so that cell lengths
/// never come from differences of nearby positions.
#[derive(Clone)]
struct State {
    delta: Vec<f64>,
    eta: Vec<f64>,
}

impl State {
    fn advance(&self, dir: &[f64], t: f64) -> State {
        let m = dir.len();
        let delta = self.delta.iter().zip(dir).map(|(a, d)| a + t * d).collect();
        let eta = (0..=m)
            .map(|k| {
                let hi = if k < m { dir[k] } else { 0.0 };
                let lo = if k > 0 { dir[k - 1] } else { 0.0 };
                self.eta[k] + t * (hi - lo)
            })
            .collect();
        State { delta, eta }
    }
}

/// One step posed in the variables of [`State`].
struct Problem<'a> {
    model: &'a MacroModel,
    cells: Cells,
    prev: &'a QuantileField,
    dt: f64,
}

impl Problem<'_> {
    fn m(&self) -> usize {
        self.cells.m
    }

    fn gap(&self, s: &State, k: usize) -> f64 {
        self.prev.gaps[k] + s.eta[k]
    }

    fn gaps(&self, s: &State) -> Vec<f64> {
        (0..=self.m()).map(|k| self.gap(s, k)).collect()
    }

    fn feasible(&self, s: &State) -> bool {
        (0..=self.m()).all(|k| self.gap(s, k) >= GAP_FLOOR)
    }

    fn objective(&self, s: &State) -> f64 {
        let transport = s.delta.iter().map(|d| d * d).sum::<f64>() / (2.0 * self.dt * self.m() as f64);
        let x = self.prev.x.iter().zip(&s.delta).map(|(a, d)| a + d);
        transport + self.cells.total(self.model, &self.gaps(s), x)
    }

    /// Scaled gradient `M ∇Φ`.
    fn gradient(&self, s: &State, out: &mut [f64]) {
        let m = self.m();
        let mut dv = [0.0];
        let mut left = self.cells.d1(0, self.gap(s, 0));
        for j in 0..m {
            let right = self.cells.d1(j + 1, self.gap(s, j + 1));
            self.model.external().gradient(&[self.prev.x[j] + s.delta[j]], &mut dv);
            out[j] = s.delta[j] / self.dt + m as f64 * (left - right) + dv[0];
            left = right;
        }
    }

    /// Scaled Hessian `M ∇²Φ` as (diagonal, off-diagonal).
    fn hessian(&self, s: &State, diag: &mut [f64], off: &mut [f64]) {
        let m = self.m();
        let mf = m as f64;
        let c: Vec<f64> = (0..=m).map(|k| mf * self.cells.d2(k, self.gap(s, k))).collect();
        for j in 0..m {
            let vxx = self.model.external().second_derivative_x(self.prev.x[j] + s.delta[j]);
            diag[j] = 1.0 / self.dt + c[j] + c[j + 1] + vxx;
            if j + 1 < m {
                off[j] = -c[j + 1];
            }
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Solves the symmetric tridiagonal system; `None` if a pivot is not
/// positive.
fn thomas(diag: &[f64], off: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if !(piv > 0.0) {
        return None;
    }
    c[0] = if n > 1 { off[0] / piv } else { 0.0 };
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - off[i - 1] * c[i - 1];
        if !(piv > 0.0) {
            return None;
        }
        if i + 1 < n {
            c[i] = off[i] / piv;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

/// Largest step along `dir` keeping every cell length above the floor.
fn max_feasible_step(p: &Problem, s: &State, dir: &[f64]) -> f64 {
    let m = p.m();
    let mut t = f64::INFINITY;
    for k in 0..=m {
        let g = p.gap(s, k);
        let dg = if k == 0 {
            dir[0]
        } else if k == m {
            -dir[m - 1]
        } else {
            dir[k] - dir[k - 1]
        };
        if dg < 0.0 {
            t = t.min((g - GAP_FLOOR) / -dg);
        }
    }
    t
}

/// Backtracking line search; returns the accepted point or `None`.
fn line_search(p: &Problem, s: &State, phi: f64, grad: &[f64], dir: &[f64]) -> Option<(State, f64)> {
    let slope: f64 = grad.iter().zip(dir).map(|(g, d)| g * d).sum::<f64>() / p.m() as f64;
    if !(slope < 0.0) {
        return None;
    }
    let mut t = 1.0f64.min(0.99 * max_feasible_step(p, s, dir));
    let slack = 1e-15 * (1.0 + phi.abs());
    for _ in 0..80 {
        let trial = s.advance(dir, t);
        if p.feasible(&trial) {
            let f = p.objective(&trial);
            if f <= phi + 1e-4 * t * slope + slack {
                return Some((trial, f));
            }
        }
        t *= 0.5;
    }
    None
}

/// Near the optimum objective differences drown in rounding, so a full
/// Newton step is taken whenever it shrinks the gradient.
fn full_newton(p: &Problem, s: &State, res: f64, dir: &[f64]) -> Option<(State, f64)> {
    if res > NEWTON_ZONE {
        return None;
    }
    let trial = s.advance(dir, 1.0);
    if !p.feasible(&trial) {
        return None;
    }
    let mut g = vec![0.0; dir.len()];
    p.gradient(&trial, &mut g);
    (max_abs(&g) < 0.5 * res).then(|| {
        let f = p.objective(&trial);
        (trial, f)
    })
}

fn minimize(p: &Problem) -> Result<(State, usize)> {
    let m = p.m();
    let mut state = State {
        delta: vec![0.0; m],
        eta: vec![0.0; m + 1],
    };
    let mut grad = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m.saturating_sub(1)];
    let mut phi = p.objective(&state);
    for it in 0..MAX_ITERATIONS {
        p.gradient(&state, &mut grad);
        let res = max_abs(&grad);
        if res <= GRADIENT_TOLERANCE {
            return Ok((state, it));
        }
        p.hessian(&state, &mut diag, &mut off);
        let newton = thomas(&diag, &off, &grad).map(|d| d.into_iter().map(|v| -v).collect::<Vec<_>>());
        let accepted = newton
            .as_deref()
            .and_then(|dir| full_newton(p, &state, res, dir).or_else(|| line_search(p, &state, phi, &grad, dir)))
            .or_else(|| {
                // Diagonally scaled gradient descent.
                let dir: Vec<f64> = grad
                    .iter()
                    .zip(&diag)
                    .map(|(g, h)| -g / h.abs().max(1.0 / p.dt))
                    .collect();
                line_search(p, &state, phi, &grad, &dir)
            });
        match accepted {
            Some((ns, nphi)) => {
                state = ns;
                phi = nphi;
            }
            None => {
                return Err(Error::NonConvergence {
                    iterations: it,
                    residual: res,
                })
            }
        }
    }
    p.gradient(&state, &mut grad);
    let res = max_abs(&grad);
    if res <= GRADIENT_TOLERANCE {
        Ok((state, MAX_ITERATIONS))
    } else {
        Err(Error::NonConvergence {
            iterations: MAX_ITERATIONS,
            residual: res,
        })
    }
}

fn problem<'a>(model: &'a MacroModel, prev: &'a QuantileField, dt: f64) -> Problem<'a> {
    Problem {
        model,
        cells: Cells {
            m: prev.len(),
            beta: model.beta(),
        },
        prev,
        dt,
    }
}

/// Residual of the discrete optimality condition
/// `(X_new − X_prev)/dt + ∂_x ξ(X_new) = 0`, with `ξ = log p + β p + V` in
/// quantile form, as a max-norm over all atoms. The log terms keep every
/// cell open, so no monotonicity constraint is ever active.
pub fn kkt_residual(model: &MacroModel, p_prev: &QuantileField, p_new: &QuantileField, dt: f64) -> Result<f64> {
    if p_prev.len() != p_new.len() {
        return Err(Error::InvalidInput("quantile fields differ in size".into()));
    }
    let m = p_new.len();
    let cells = Cells {
        m,
        beta: model.beta(),
    };
    let mut dv = [0.0];
    let mut worst: f64 = 0.0;
    for j in 0..m {
        let left = cells.d1(j, p_new.gaps[j]);
        let right = cells.d1(j + 1, p_new.gaps[j + 1]);
        model.external().gradient(&[p_new.x[j]], &mut dv);
        let r = (p_new.x[j] - p_prev.x[j]) / dt + m as f64 * (left - right) + dv[0];
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// One minimizing-movement step of length `dt` from `p_prev`.
pub fn jko_step(model: &MacroModel, p_prev: &QuantileField, dt: f64) -> Result<(QuantileField, JkoStepReport)> {
    if model.dim() != 1 {
        return Err(Error::InvalidInput("minimizing movements are one-dimensional".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    let prob = problem(model, p_prev, dt);
    let (state, iterations) = minimize(&prob)?;
    let gaps = prob.gaps(&state);
    let floor_active = gaps.iter().any(|g| *g <= GAP_FLOOR * (1.0 + 1e-9));
    if floor_active {
        log::warn!("minimizing movement hit the cell-length floor {GAP_FLOOR:e}");
    }
    let x: Vec<f64> = p_prev.x.iter().zip(&state.delta).map(|(a, d)| a + d).collect();
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("cells collapsed below floating-point resolution".into()));
    }
    let next = QuantileField { x, gaps };
    let w2 = w2_distance_1d(&next, p_prev)?;
    let energy = quantile_energy(model, &next);
    let report = JkoStepReport {
        objective: w2 * w2 / (2.0 * dt) + energy,
        w2_squared: w2 * w2,
        energy,
        kkt_residual: kkt_residual(model, p_prev, &next, dt)?,
        iterations,
        floor_active,
    };
    Ok((next, report))
}

#[derive(Debug, Clone)]
pub struct JkoSnapshot {
    pub time: f64,
    pub quantiles: QuantileField,
    pub field: DensityField,
    pub report: Option<JkoStepReport>,
}

/// Iterates [`jko_step`] from `p0` to `t_end` with `m` atoms; the last step
/// is shortened to land on `t_end`. The first entry is the initial state.
pub fn jko_solve(model: &MacroModel, p0: &DensityField, dt: f64, t_end: f64, m: usize) -> Result<Vec<JkoSnapshot>> {
    jko_solve_with(model, p0, dt, &[t_end], m)
}

/// Like [`jko_solve`], shortening steps so that every time in `stops` is hit
/// exactly; the run ends at the largest stop.
pub fn jko_solve_with(model: &MacroModel, p0: &DensityField, dt: f64, stops: &[f64], m: usize) -> Result<Vec<JkoSnapshot>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    if let Some(t) = stops.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidInput(format!("stop time {t} must be finite and nonnegative")));
    }
    let mut stops = stops.to_vec();
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    let grid = *p0.grid();
    let mut q = QuantileField::from_density(p0, m)?;
    let mut out = vec![JkoSnapshot {
        time: 0.0,
        field: q.to_density(grid)?,
        quantiles: q.clone(),
        report: None,
    }];
    let mut t = 0.0;
    for &stop in &stops {
        while t < stop {
            let remaining = stop - t;
            // Treat a remainder within rounding of dt as a full step.
            let step = if remaining <= dt * (1.0 + 1e-9) { remaining } else { dt };
            let (next, report) = jko_step(model, &q, step)?;
            t = if step == remaining { stop } else { t + step };
            q = next;
            out.push(JkoSnapshot {
                time: t,
                field: q.to_density(grid)?,
                quantiles: q.clone(),
                report: Some(report),
            });
        }
    }
    Ok(out)
}
