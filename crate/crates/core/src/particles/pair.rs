//! Pair-distance histograms and the radial distribution function.

use crate::error::{Error, Result};
use crate::quadrature::integrate;

use super::cell_list::dist2;

/// Bins with fewer pairs than this are flagged as unreliable.
pub const MIN_RELIABLE_COUNT: u64 = 50;

/// Density of `|X − Y|` for `X, Y` independent and uniform on the unit box
/// `[−1/2, 1/2]^d`.
///
/// The difference `Z = X − Y` has density `Π_k (1 − |z_k|)₊`, so the distance
/// density is `r^{d−1} ∫_{S^{d−1}} Π_k (1 − r|n_k|)₊ dn`.
pub fn ideal_pair_distance_pdf(d: usize, r: f64) -> Result<f64> {
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidInput(format!("dimension must be 1..=3, got {d}")));
    }
    if !(r >= 0.0) || r >= (d as f64).sqrt() {
        return Ok(0.0);
    }
    Ok(match d {
        1 => 2.0 * (1.0 - r),
        2 => 4.0 * r * quarter_circle(r),
        _ => {
            // Eight octants; polar angle θ from the z-axis, dn = sin θ dθ dφ.
            let f = |t: f64| {
                let (st, ct) = t.sin_cos();
                (1.0 - r * ct).max(0.0) * st * quarter_circle(r * st)
            };
            let mut cuts = vec![0.0];
            if r > 1.0 {
                cuts.push((1.0 / r).acos());
                cuts.push((1.0 / r).asin().max((1.0 / r).acos()));
            }
            cuts.push(std::f64::consts::FRAC_PI_2);
            let mut total = 0.0;
            for w in cuts.windows(2) {
                if w[1] > w[0] {
                    total += integrate(f, w[0], w[1], 1e-15, 1e-12, 200).value;
                }
            }
            8.0 * r * r * total
        }
    })
}

/// `∫_0^{π/2} (1 − a cos φ)₊ (1 − a sin φ)₊ dφ` in closed form.
fn quarter_circle(a: f64) -> f64 {
    let anti = |p: f64| {
        let (s, c) = p.sin_cos();
        p - a * s + a * c + 0.5 * a * a * s * s
    };
    if a <= 1.0 {
        anti(std::f64::consts::FRAC_PI_2) - anti(0.0)
    } else if a * a >= 2.0 {
        0.0
    } else {
        let lo = (1.0 / a).acos();
        let hi = (1.0 / a).asin();
        if hi > lo {
            anti(hi) - anti(lo)
        } else {
            0.0
        }
    }
}

/// Probability that the ideal-gas pair distance falls in `[a, b]`.
fn ideal_bin_probability(d: usize, a: f64, b: f64) -> f64 {
    integrate(
        |r| ideal_pair_distance_pdf(d, r).unwrap_or(0.0),
        a,
        b,
        1e-15,
        1e-10,
        200,
    )
    .value
}

/// One bin of the radial distribution function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairBin {
    pub r_lo: f64,
    pub r_hi: f64,
    /// Bin midpoint.
    pub r: f64,
    pub g: f64,
    pub count: u64,
    pub reliable: bool,
}

/// Accumulates pair distances over many configurations of the same size.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDistanceHistogram {
    d: usize,
    r_max: f64,
    counts: Vec<u64>,
    /// Total number of pairs examined, in range or not.
    pairs: u64,
}

impl PairDistanceHistogram {
    pub fn new(d: usize, bins: usize, r_max: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidInput(format!("dimension must be 1..=3, got {d}")));
        }
        if bins == 0 || !(r_max > 0.0 && r_max <= (d as f64).sqrt()) {
            return Err(Error::InvalidInput(format!(
                "need bins > 0 and 0 < r_max <= √d (got {bins}, {r_max})"
            )));
        }
        Ok(Self {
            d,
            r_max,
            counts: vec![0; bins],
            pairs: 0,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn pairs(&self) -> u64 {
        self.pairs
    }

    /// Adds all pairs of one configuration (flattened `N × d`).
    pub fn add(&mut self, positions: &[f64]) {
        let d = self.d;
        let n = positions.len() / d;
        let width = self.r_max / self.counts.len() as f64;
        let r2max = self.r_max * self.r_max;
        for i in 0..n {
            for j in i + 1..n {
                let r2 = dist2(&positions[i * d..(i + 1) * d], &positions[j * d..(j + 1) * d]);
                if r2 < r2max {
                    let k = ((r2.sqrt() / width) as usize).min(self.counts.len() - 1);
                    self.counts[k] += 1;
                }
            }
        }
        self.pairs += (n * n.saturating_sub(1) / 2) as u64;
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.d != self.d || other.r_max != self.r_max || other.counts.len() != self.counts.len() {
            return Err(Error::InvalidInput("pair histograms have different layouts".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.pairs += other.pairs;
        Ok(())
    }

    /// `g` per bin: observed counts over the ideal-gas expectation for the
    /// same number of pairs in the unit box, which accounts for the walls.
    pub fn correlation(&self) -> Vec<PairBin> {
        let width = self.r_max / self.counts.len() as f64;
        self.counts
            .iter()
            .enumerate()
            .map(|(k, &count)| {
                let (a, b) = (k as f64 * width, (k + 1) as f64 * width);
                let expected = self.pairs as f64 * ideal_bin_probability(self.d, a, b);
                PairBin {
                    r_lo: a,
                    r_hi: b,
                    r: 0.5 * (a + b),
                    g: if expected > 0.0 { count as f64 / expected } else { 0.0 },
                    count,
                    reliable: count >= MIN_RELIABLE_COUNT,
                }
            })
            .collect()
    }
}

/// Radial distribution function from a set of equilibrium configurations.
pub fn pair_correlation<'a>(
    configurations: impl IntoIterator<Item = &'a [f64]>,
    d: usize,
    bins: usize,
    r_max: f64,
) -> Result<Vec<PairBin>> {
    let mut h = PairDistanceHistogram::new(d, bins, r_max)?;
    for c in configurations {
        h.add(c);
    }
    Ok(h.correlation())
}
