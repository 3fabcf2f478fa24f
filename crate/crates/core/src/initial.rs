//! Initial densities, evaluated on grids for the PDE solvers and sampled for
//! the particle ensembles.

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{DensityField, Grid};

/// Nodes of the tabulated x-profile used for inverse-CDF sampling.
const PROFILE_NODES: usize = 8193;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialDensity {
    Uniform,
    /// Indicator of `lo < x < hi`, constant in the other coordinates.
    Indicator { lo: f64, hi: f64 },
    /// `Σ w_k N(x; m_k, s_k²)` along `x`, constant in the other coordinates.
    GaussianMixture { components: Vec<GaussianComponent> },
    /// `(1 + a sin θ) e^{−(r−μ)²/(2σ²)}` in the plane.
    Ring { mu: f64, sigma: f64, amplitude: f64 },
    Tabulated(DensityField),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

impl InitialDensity {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Uniform | Self::Tabulated(_) => Ok(()),
            Self::Indicator { lo, hi } => {
                let lo = lo.max(-0.5);
                let hi = hi.min(0.5);
                if !(hi > lo) {
                    return Err(Error::InvalidInput(format!(
                        "indicator interval [{lo}, {hi}] misses the domain"
                    )));
                }
                Ok(())
            }
            Self::GaussianMixture { components } => {
                if components.is_empty()
                    || components
                        .iter()
                        .any(|c| !(c.weight > 0.0 && c.sd > 0.0 && c.mean.is_finite()))
                {
                    return Err(Error::InvalidInput(
                        "mixture needs positive weights and widths".into(),
                    ));
                }
                Ok(())
            }
            Self::Ring { mu, sigma, amplitude } => {
                if !(sigma > &0.0 && mu.is_finite() && amplitude.abs() <= 1.0) {
                    return Err(Error::InvalidInput(
                        "ring needs sigma > 0 and |amplitude| <= 1".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    fn is_planar(&self) -> bool {
        matches!(self, Self::Ring { .. })
            || matches!(self, Self::Tabulated(f) if f.grid().dim() == 2)
    }

    /// Unnormalized density at a point with one to three coordinates.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::Uniform => 1.0,
            Self::Indicator { lo, hi } => {
                if x[0] > *lo && x[0] < *hi {
                    1.0
                } else {
                    0.0
                }
            }
            Self::GaussianMixture { components } => components
                .iter()
                .map(|c| {
                    let z = (x[0] - c.mean) / c.sd;
                    c.weight * (-0.5 * z * z).exp() / (c.sd * (2.0 * std::f64::consts::PI).sqrt())
                })
                .sum(),
            Self::Ring { mu, sigma, amplitude } => {
                let y = x.get(1).copied().unwrap_or(0.0);
                let r = (x[0] * x[0] + y * y).sqrt();
                let sin = if r > 0.0 { y / r } else { 0.0 };
                (1.0 + amplitude * sin) * (-(r - mu).powi(2) / (2.0 * sigma * sigma)).exp()
            }
            Self::Tabulated(f) => {
                let g = f.grid();
                let ix = g.locate(x[0]);
                let iy = if g.dim() == 2 { g.locate(x.get(1).copied().unwrap_or(0.0)) } else { 0 };
                f.values()[g.index(ix, iy)]
            }
        }
    }

    /// Cell-sampled and normalized on `grid`. Indicator cells cut by an
    /// endpoint get the covered fraction, so the discrete mass sits exactly on
    /// the interval.
    pub fn on_grid(&self, grid: Grid) -> Result<DensityField> {
        self.validate()?;
        if self.is_planar() && grid.dim() == 1 {
            return Err(Error::InvalidInput(
                "planar initial density needs a two-dimensional grid".into(),
            ));
        }
        let field = match self {
            Self::Indicator { lo, hi } => {
                let h = grid.spacing();
                DensityField::from_fn(grid, |c| {
                    let a = (c[0] - 0.5 * h).max(*lo);
                    let b = (c[0] + 0.5 * h).min(*hi);
                    ((b - a) / h).max(0.0)
                })?
            }
            Self::Tabulated(f) if f.grid() == &grid => f.clone(),
            _ => DensityField::from_fn(grid, |c| self.value(&c[..grid.dim()]))?,
        };
        field.normalize()
    }

    /// `n` independent positions in `[−1/2, 1/2]^d`, flattened row-major.
    pub fn sample(&self, d: usize, n: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
        self.validate()?;
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidInput(format!("dimension must be 1..=3, got {d}")));
        }
        if self.is_planar() && d < 2 {
            return Err(Error::InvalidInput(
                "planar initial density needs d >= 2".into(),
            ));
        }
        let mut out = vec![0.0; n * d];
        match self {
            Self::Ring { .. } => {
                let bound = self.value_bound();
                for p in out.chunks_mut(d) {
                    loop {
                        let x: f64 = rng.random::<f64>() - 0.5;
                        let y: f64 = rng.random::<f64>() - 0.5;
                        if rng.random::<f64>() * bound < self.value(&[x, y]) {
                            p[0] = x;
                            p[1] = y;
                            break;
                        }
                    }
                    for v in p.iter_mut().skip(2) {
                        *v = rng.random::<f64>() - 0.5;
                    }
                }
            }
            Self::Tabulated(f) => {
                let g = f.grid();
                let cdf = cumulative(f.values())?;
                let h = g.spacing();
                for p in out.chunks_mut(d) {
                    let cell = pick(&cdf, rng.random::<f64>());
                    let (ix, iy) = g.axes(cell);
                    p[0] = g.edge(ix) + h * rng.random::<f64>();
                    let start = if g.dim() == 2 {
                        p[1] = g.edge(iy) + h * rng.random::<f64>();
                        2
                    } else {
                        1
                    };
                    for v in p.iter_mut().skip(start) {
                        *v = rng.random::<f64>() - 0.5;
                    }
                }
            }
            _ => {
                let profile = XProfile::new(|x| self.value(&[x]))?;
                for p in out.chunks_mut(d) {
                    p[0] = profile.invert(rng.random::<f64>());
                    for v in p.iter_mut().skip(1) {
                        *v = rng.random::<f64>() - 0.5;
                    }
                }
            }
        }
        Ok(out)
    }

    fn value_bound(&self) -> f64 {
        match self {
            Self::Ring { amplitude, .. } => 1.0 + amplitude.abs(),
            _ => 1.0,
        }
    }
}

fn cumulative(weights: &[f64]) -> Result<Vec<f64>> {
    let mut acc = 0.0;
    let cdf: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    if !(acc > 0.0) {
        return Err(Error::DegenerateDensity);
    }
    Ok(cdf.into_iter().map(|c| c / acc).collect())
}

fn pick(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|c| *c <= u).min(cdf.len() - 1)
}

/// Piecewise-linear density on a fine node grid with its exact CDF.
struct XProfile {
    h: f64,
    f: Vec<f64>,
    cdf: Vec<f64>,
}

impl XProfile {
    fn new(density: impl Fn(f64) -> f64) -> Result<Self> {
        let h = 1.0 / (PROFILE_NODES - 1) as f64;
        let f: Vec<f64> = (0..PROFILE_NODES).map(|k| density(-0.5 + k as f64 * h)).collect();
        let mut cdf = vec![0.0; PROFILE_NODES];
        for k in 1..PROFILE_NODES {
            cdf[k] = cdf[k - 1] + 0.5 * h * (f[k - 1] + f[k]);
        }
        let total = cdf[PROFILE_NODES - 1];
        if !(total > 0.0) {
            return Err(Error::DegenerateDensity);
        }
        Ok(Self {
            h,
            f: f.into_iter().map(|v| v / total).collect(),
            cdf: cdf.into_iter().map(|c| c / total).collect(),
        })
    }

    /// Solves `F(x) = u` exactly within the linear piece.
    fn invert(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|c| *c <= u).clamp(1, self.cdf.len() - 1) - 1;
        let (f0, f1) = (self.f[k], self.f[k + 1]);
        let target = u - self.cdf[k];
        // f0 t + (f1 − f0) t² / (2h) = target for t in [0, h].
        let a = 0.5 * (f1 - f0) / self.h;
        let t = if target <= 0.0 {
            0.0
        } else if a.abs() < 1e-300 {
            if f0 > 0.0 {
                target / f0
            } else {
                0.5 * self.h
            }
        } else {
            let disc = (f0 * f0 + 4.0 * a * target).max(0.0);
            2.0 * target / (f0 + disc.sqrt())
        };
        (-0.5 + k as f64 * self.h + t.clamp(0.0, self.h)).clamp(-0.5, 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RngPlan;

    fn ks_uniform_band(xs: &[f64], lo: f64, hi: f64) -> f64 {
        let mut s = xs.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        s.iter()
            .enumerate()
            .map(|(i, x)| {
                let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn indicator_on_grid_is_exact() {
        let f = InitialDensity::Indicator { lo: 0.2, hi: 0.4 }
            .on_grid(Grid::new(1, 256).unwrap())
            .unwrap();
        assert!((f.integrate() - 1.0).abs() < 1e-14);
        let g = f.grid();
        for (i, v) in f.values().iter().enumerate() {
            let (a, b) = (g.edge(i), g.edge(i) + g.spacing());
            if a >= 0.2 && b <= 0.4 {
                assert!((v - 5.0).abs() < 1e-12);
            } else if b <= 0.2 || a >= 0.4 {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn indicator_samples_are_uniform_on_band() {
        let mut rng = RngPlan::new(1, 0).rng();
        let xs = InitialDensity::Indicator { lo: 0.1, hi: 0.3 }
            .sample(2, 20_000, &mut rng)
            .unwrap();
        let x: Vec<f64> = xs.chunks(2).map(|p| p[0]).collect();
        let y: Vec<f64> = xs.chunks(2).map(|p| p[1]).collect();
        assert!(ks_uniform_band(&x, 0.1, 0.3) < 0.015);
        assert!(ks_uniform_band(&y, -0.5, 0.5) < 0.015);
    }

    #[test]
    fn mixture_moments() {
        let m = InitialDensity::GaussianMixture {
            components: vec![
                GaussianComponent { weight: 1.0, mean: -0.25, sd: 0.05 },
                GaussianComponent { weight: 1.0, mean: 0.25, sd: 0.1 },
            ],
        };
        let mut rng = RngPlan::new(2, 0).rng();
        let xs = m.sample(1, 100_000, &mut rng).unwrap();
        let left = xs.iter().filter(|x| **x < 0.0).count() as f64 / xs.len() as f64;
        // The right component puts 0.62% of its mass past each of x = 1/2
        // (lost to the wall) and x = 0 (counted on the left).
        let tail = 0.00621;
        let want = (1.0 + tail) / (2.0 - tail);
        assert!((left - want).abs() < 0.005, "{left} vs {want}");
        let far: Vec<f64> = xs.iter().copied().filter(|x| *x < -0.1).collect();
        let mean_left = far.iter().sum::<f64>() / far.len() as f64;
        assert!((mean_left + 0.25).abs() < 1.5e-3);
    }

    #[test]
    fn ring_samples_follow_angular_weight() {
        let ring = InitialDensity::Ring { mu: 0.3, sigma: 0.05, amplitude: 0.6 };
        let mut rng = RngPlan::new(3, 0).rng();
        let xs = ring.sample(2, 50_000, &mut rng).unwrap();
        let upper = xs.chunks(2).filter(|p| p[1] > 0.0).count() as f64 / 50_000.0;
        // ∫(1 + 0.6 sin θ) over the upper half / total = (π + 1.2) / 2π.
        let want = (std::f64::consts::PI + 1.2) / (2.0 * std::f64::consts::PI);
        assert!((upper - want).abs() < 0.01, "{upper} vs {want}");
        assert!(ring.sample(1, 10, &mut rng).is_err());
        assert!(ring.on_grid(Grid::new(1, 16).unwrap()).is_err());
    }

    #[test]
    fn tabulated_sampling_matches_cells() {
        let g = Grid::new(1, 8).unwrap();
        let f = DensityField::new(g, vec![0.0, 0.0, 4.0, 4.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let mut rng = RngPlan::new(4, 0).rng();
        let xs = InitialDensity::Tabulated(f).sample(1, 10_000, &mut rng).unwrap();
        assert!(xs.iter().all(|x| (-0.25..=0.0).contains(x)));
        assert!(ks_uniform_band(&xs, -0.25, 0.0) < 0.02);
    }

    #[test]
    fn inversion_of_linear_profile() {
        // Density 2(x + 1/2) has CDF (x + 1/2)²; the piecewise-linear table is exact.
        let p = XProfile::new(|x| x + 0.5).unwrap();
        for u in [0.0, 0.01, 0.25, 0.5, 0.99, 1.0] {
            assert!((p.invert(u) - (u.sqrt() - 0.5)).abs() < 1e-9, "{u}");
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(InitialDensity::Indicator { lo: 0.6, hi: 0.9 }.validate().is_err());
        assert!(InitialDensity::GaussianMixture { components: vec![] }.validate().is_err());
        let mut rng = RngPlan::new(0, 0).rng();
        assert!(InitialDensity::Uniform.sample(4, 1, &mut rng).is_err());
    }
}
