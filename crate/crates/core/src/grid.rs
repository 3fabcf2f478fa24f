//! Cell-centered grids on the unit box `[-1/2, 1/2]^d`, densities sampled on
//! them, and the plain-text field dump format shared by every tool.

use std::fmt::Write as _;
use std::io::Write;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Smallest number of cells per axis accepted by [`Grid::new`].
pub const MIN_CELLS: usize = 8;

/// Uniform cell-centered tensor grid on `[-1/2, 1/2]^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    dim: usize,
    cells: usize,
}

impl Grid {
    pub fn new(dim: usize, cells: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if cells < MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_CELLS} cells per axis, got {cells}"
            )));
        }
        Ok(Self { dim, cells })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_dim(&self) -> usize {
        self.cells
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.cells as f64
    }

    /// `spacing^dim`, the weight of every cell in midpoint quadrature.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Center of cell `i` along one axis.
    pub fn center(&self, i: usize) -> f64 {
        -0.5 + (i as f64 + 0.5) / self.cells as f64
    }

    /// Left edge of cell `i` along one axis (`i == cells` gives the right wall).
    pub fn edge(&self, i: usize) -> f64 {
        -0.5 + i as f64 / self.cells as f64
    }

    /// Flat index of the cell with per-axis indices `(ix, iy)`; x varies fastest.
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix + self.cells * iy
    }

    /// Per-axis indices of a flat cell index.
    pub fn axes(&self, idx: usize) -> (usize, usize) {
        (idx % self.cells, idx / self.cells)
    }

    /// Coordinates of the center of cell `idx`; unused axes are zero.
    pub fn cell_center(&self, idx: usize) -> [f64; 2] {
        let (ix, iy) = self.axes(idx);
        if self.dim == 1 {
            [self.center(ix), 0.0]
        } else {
            [self.center(ix), self.center(iy)]
        }
    }

    /// Bin along one axis containing coordinate `x`; the walls map to the
    /// outermost cells.
    pub fn locate(&self, x: f64) -> usize {
        let i = ((x + 0.5) * self.cells as f64).floor();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(self.cells - 1)
        }
    }
}

/// Nonnegative cell values on a [`Grid`]. Values are a probability density
/// (mass per unit length or area), not cell masses.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: Grid,
    values: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "grid has {} cells but {} values were given",
                grid.len(),
                values.len()
            )));
        }
        if let Some((cell, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::NotAdmissible { cell, value });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.cell_center(i))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Midpoint-rule integral `Σ values · spacing^d`.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Rescales to unit mass.
    pub fn normalize(&self) -> Result<Self> {
        let mass = self.integrate();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::DegenerateDensity);
        }
        let values = self.values.iter().map(|v| v / mass).collect();
        Ok(Self {
            grid: self.grid,
            values,
        })
    }

    /// Integrates a 2D field over y, giving the x-marginal on a 1D grid.
    /// 1D fields are returned unchanged.
    pub fn marginal_x(&self) -> DensityField {
        if self.grid.dim == 1 {
            return self.clone();
        }
        let n = self.grid.cells;
        let h = self.grid.spacing();
        let mut out = vec![0.0; n];
        for (idx, v) in self.values.iter().enumerate() {
            out[idx % n] += v * h;
        }
        DensityField {
            grid: Grid { dim: 1, cells: n },
            values: out,
        }
    }

    /// Averages blocks of `factor` cells per axis onto a coarser grid.
    pub fn coarsen(&self, factor: usize) -> Result<DensityField> {
        let n = self.grid.cells;
        if factor == 0 || n % factor != 0 {
            return Err(Error::InvalidGrid(format!(
                "cannot coarsen {n} cells by a factor of {factor}"
            )));
        }
        let coarse = Grid::new(self.grid.dim, n / factor)?;
        let mut out = vec![0.0; coarse.len()];
        for (idx, v) in self.values.iter().enumerate() {
            let (ix, iy) = self.grid.axes(idx);
            out[coarse.index(ix / factor, iy / factor)] += v;
        }
        let w = (factor as f64).powi(self.grid.dim as i32);
        out.iter_mut().for_each(|v| *v /= w);
        DensityField::new(coarse, out)
    }

    /// Writes the field dump: a `# grid d=<d> n=<cells>` header, then one
    /// `x[,y],value` row per cell with 17 significant digits.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        w.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = format!("# grid d={} n={}\n", self.grid.dim, self.grid.cells);
        for (idx, v) in self.values.iter().enumerate() {
            let c = self.grid.cell_center(idx);
            if self.grid.dim == 1 {
                let _ = writeln!(s, "{},{}", fmt17(c[0]), fmt17(*v));
            } else {
                let _ = writeln!(s, "{},{},{}", fmt17(c[0]), fmt17(c[1]), fmt17(*v));
            }
        }
        s
    }

    /// Parses the format produced by [`DensityField::write_csv`]. Rows must
    /// appear in cell order and their coordinates must match the cell centers.
    pub fn parse_csv(text: &str) -> Result<DensityField> {
        let (grid, values) = parse_grid_values(text)?;
        DensityField::new(grid, values)
    }
}

/// Reads a field dump without the nonnegativity check, for tabulated
/// potentials that share the format.
pub(crate) fn parse_grid_values(text: &str) -> Result<(Grid, Vec<f64>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty field file"))?;
    let grid = parse_header(header)?;
    let mut values = Vec::new();
    let tol = 1e-9 * grid.spacing();
    for (lineno, line) in lines {
        let lineno = lineno + 1;
        let idx = values.len();
        if idx >= grid.len() {
            return Err(Error::parse(lineno, "more rows than grid cells"));
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != grid.dim + 1 {
            return Err(Error::parse(
                lineno,
                format!("expected {} columns, found {}", grid.dim + 1, cols.len()),
            ));
        }
        let nums = cols
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|e| Error::parse(lineno, format!("bad number {c:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let center = grid.cell_center(idx);
        for axis in 0..grid.dim {
            if !((nums[axis] - center[axis]).abs() <= tol) {
                return Err(Error::parse(
                    lineno,
                    format!(
                        "coordinate {} does not match cell center {}",
                        nums[axis], center[axis]
                    ),
                ));
            }
        }
        if !nums[grid.dim].is_finite() {
            return Err(Error::parse(lineno, "value is not finite"));
        }
        values.push(nums[grid.dim]);
    }
    if values.len() != grid.len() {
        return Err(Error::parse(
            text.lines().count(),
            format!("expected {} rows, found {}", grid.len(), values.len()),
        ));
    }
    Ok((grid, values))
}

fn parse_header(line: &str) -> Result<Grid> {
    let rest = line
        .trim()
        .strip_prefix("# grid")
        .ok_or_else(|| Error::parse(1, "missing `# grid d=<d> n=<cells>` header"))?;
    let mut dim = None;
    let mut cells = None;
    for tok in rest.split_whitespace() {
        match tok.split_once('=') {
            Some(("d", v)) => dim = v.parse::<usize>().ok(),
            Some(("n", v)) => cells = v.parse::<usize>().ok(),
            _ => return Err(Error::parse(1, format!("unexpected header token {tok:?}"))),
        }
    }
    match (dim, cells) {
        (Some(d), Some(n)) if n <= 1 << 16 => Grid::new(d, n),
        _ => Err(Error::parse(1, "header needs d=<dim> n=<cells>")),
    }
}

/// Formats with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// One deterministic random stream per realization.
///
/// Streams are ChaCha8 keyed by `base_seed` with the realization number as
/// the stream id, so every realization can be regenerated independently of
/// the order in which realizations are run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngPlan {
    pub base_seed: u64,
    pub stream_index: u64,
}

impl RngPlan {
    pub fn new(base_seed: u64, stream_index: u64) -> Self {
        Self {
            base_seed,
            stream_index,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}
