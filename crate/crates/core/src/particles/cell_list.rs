//! Bucket grid over the unit box for short-range pair searches.

/// Upper bound on buckets per axis, keeping memory bounded for tiny cutoffs
/// in three dimensions.
const MAX_BUCKETS_PER_AXIS: usize = 256;

/// Particles sorted into cubic buckets with side at least the cutoff, so all
/// pairs closer than the cutoff sit in the same or adjacent buckets.
#[derive(Debug, Clone)]
pub struct CellList {
    d: usize,
    per_axis: usize,
    cutoff: f64,
    /// `starts[b]..starts[b + 1]` indexes `order` for bucket `b`.
    starts: Vec<usize>,
    order: Vec<usize>,
    bucket_of: Vec<usize>,
}

impl CellList {
    pub fn new(d: usize, cutoff: f64) -> Self {
        assert!((1..=3).contains(&d), "dimension must be 1..=3");
        assert!(cutoff > 0.0, "cutoff must be positive");
        let per_axis = ((1.0 / cutoff).floor() as usize).clamp(1, MAX_BUCKETS_PER_AXIS);
        Self {
            d,
            per_axis,
            cutoff,
            starts: vec![0; per_axis.pow(d as u32) + 1],
            order: Vec::new(),
            bucket_of: Vec::new(),
        }
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn buckets_per_axis(&self) -> usize {
        self.per_axis
    }

    fn axis_bucket(&self, x: f64) -> usize {
        let b = ((x + 0.5) * self.per_axis as f64).floor();
        if b < 0.0 {
            0
        } else {
            (b as usize).min(self.per_axis - 1)
        }
    }

    /// Counting sort of `positions` (flattened `N × d`) into buckets.
    pub fn rebuild(&mut self, positions: &[f64]) {
        let n = positions.len() / self.d;
        self.bucket_of.clear();
        for p in positions.chunks_exact(self.d) {
            let mut b = 0;
            for &x in p.iter().rev() {
                b = b * self.per_axis + self.axis_bucket(x);
            }
            self.bucket_of.push(b);
        }
        self.starts.iter_mut().for_each(|s| *s = 0);
        for &b in &self.bucket_of {
            self.starts[b + 1] += 1;
        }
        for k in 1..self.starts.len() {
            self.starts[k] += self.starts[k - 1];
        }
        let mut fill = self.starts.clone();
        self.order.resize(n, 0);
        for (i, &b) in self.bucket_of.iter().enumerate() {
            self.order[fill[b]] = i;
            fill[b] += 1;
        }
    }

    fn bucket_coords(&self, mut b: usize) -> [usize; 3] {
        let mut c = [0; 3];
        for v in c.iter_mut().take(self.d) {
            *v = b % self.per_axis;
            b /= self.per_axis;
        }
        c
    }

    /// Calls `f(i, j)` once for every candidate pair `i < j` in the same or
    /// adjacent buckets. Candidates are a superset of the pairs within the
    /// cutoff.
    pub fn for_each_candidate(&self, mut f: impl FnMut(usize, usize)) {
        let m = self.per_axis as isize;
        let offsets: &[isize] = &[-1, 0, 1];
        let nb = self.starts.len() - 1;
        for b in 0..nb {
            let own = &self.order[self.starts[b]..self.starts[b + 1]];
            if own.is_empty() {
                continue;
            }
            let c = self.bucket_coords(b);
            let mut visit = |other: usize| {
                // Each unordered bucket pair is visited from the lower index.
                if other < b {
                    return;
                }
                let theirs = &self.order[self.starts[other]..self.starts[other + 1]];
                for (a, &i) in own.iter().enumerate() {
                    let rest = if other == b { &theirs[a + 1..] } else { theirs };
                    for &j in rest {
                        if i < j {
                            f(i, j)
                        } else {
                            f(j, i)
                        }
                    }
                }
            };
            for &dz in if self.d == 3 { offsets } else { &[0] } {
                for &dy in if self.d >= 2 { offsets } else { &[0] } {
                    for &dx in offsets {
                        let nc = [c[0] as isize + dx, c[1] as isize + dy, c[2] as isize + dz];
                        if nc.iter().take(self.d).any(|v| *v < 0 || *v >= m) {
                            continue;
                        }
                        let other = ((nc[2] * m + nc[1]) * m + nc[0]) as usize;
                        visit(other);
                    }
                }
            }
        }
    }

    /// Pairs `(i, j)`, `i < j`, closer than the cutoff, sorted.
    pub fn pairs_within(&self, positions: &[f64]) -> Vec<(usize, usize)> {
        let rc2 = self.cutoff * self.cutoff;
        let d = self.d;
        let mut out = Vec::new();
        self.for_each_candidate(|i, j| {
            if dist2(&positions[i * d..(i + 1) * d], &positions[j * d..(j + 1) * d]) < rc2 {
                out.push((i, j));
            }
        });
        out.sort_unstable();
        out
    }
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// All pairs `(i, j)`, `i < j`, closer than `cutoff`, by direct O(N²) scan.
pub fn brute_force_pairs(positions: &[f64], d: usize, cutoff: f64) -> Vec<(usize, usize)> {
    let n = positions.len() / d;
    let rc2 = cutoff * cutoff;
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if dist2(&positions[i * d..(i + 1) * d], &positions[j * d..(j + 1) * d]) < rc2 {
                out.push((i, j));
            }
        }
    }
    out
}
