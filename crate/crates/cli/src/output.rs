//! Output directories, file naming and CSV writers.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use voxfp::analysis::{fit_decay_rate, EnergyTable};
use voxfp::grid::fmt17;
use voxfp::particles::PairBin;
use voxfp::{DensityField, Grid};

use crate::manifest::{config_hash, Manifest};

/// `t` as it appears in file names such as `density_t0.05.csv`.
pub fn time_label(t: f64) -> String {
    format!("{t}")
}

/// Inverse of [`time_label`] for a file name with the given prefix.
pub fn parse_time_label(name: &str, prefix: &str) -> Option<f64> {
    name.strip_prefix(prefix)?
        .strip_suffix(".csv")?
        .parse::<f64>()
        .ok()
        .filter(|t| t.is_finite())
}

/// Output directory that records every file written into it.
pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
    started: Instant,
}

impl OutDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> anyhow::Result<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
        }
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn field(&mut self, name: &str, f: &DensityField) -> anyhow::Result<()> {
        self.write(name, &f.to_csv_string())
    }

    pub fn energy(&mut self, name: &str, table: &EnergyTable) -> anyhow::Result<()> {
        self.write(name, &table.to_csv_string())
    }

    /// Writes `manifest.json` and returns it.
    pub fn finish(mut self, subcommand: &str, config: serde_json::Value) -> anyhow::Result<Manifest> {
        self.files.sort();
        self.files.dedup();
        let manifest = Manifest {
            subcommand: subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(&config),
            config,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs: self.files,
            warnings: crate::take_warnings(),
        };
        let path = self.root.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text + "\n").with_context(|| format!("cannot write {}", path.display()))?;
        Ok(manifest)
    }
}

/// Values on a grid in the field dump layout, without the sign check that
/// densities get; used for potentials.
pub fn grid_values_csv(grid: &Grid, values: &[f64]) -> String {
    let mut s = format!("# grid d={} n={}\n", grid.dim(), grid.cells_per_dim());
    for (i, v) in values.iter().enumerate() {
        let c = grid.cell_center(i);
        if grid.dim() == 1 {
            s.push_str(&format!("{},{}\n", fmt17(c[0]), fmt17(*v)));
        } else {
            s.push_str(&format!("{},{},{}\n", fmt17(c[0]), fmt17(c[1]), fmt17(*v)));
        }
    }
    s
}

pub fn positions_csv(d: usize, realizations: &[&[f64]]) -> String {
    let mut s = String::from("realization,particle,");
    s.push_str(&["x", "y", "z"][..d].join(","));
    s.push('\n');
    for (r, pos) in realizations.iter().enumerate() {
        for (i, p) in pos.chunks_exact(d).enumerate() {
            s.push_str(&format!("{r},{i}"));
            for v in p {
                s.push(',');
                s.push_str(&fmt17(*v));
            }
            s.push('\n');
        }
    }
    s
}

pub fn pair_csv(bins: &[PairBin]) -> String {
    let mut s = String::from("r,g,count\n");
    for b in bins {
        s.push_str(&format!("{},{},{}\n", fmt17(b.r), fmt17(b.g), b.count));
    }
    s
}

pub fn compare_csv(rows: &[(f64, f64, f64)]) -> String {
    let mut s = String::from("t,l1,linf\n");
    for (t, l1, linf) in rows {
        s.push_str(&format!("{},{},{}\n", fmt17(*t), fmt17(*l1), fmt17(*linf)));
    }
    s
}

/// Fits every curve with the default window; curves that are not in an
/// exponential regime are skipped with a warning.
pub fn rates_csv(curves: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut s = String::from("label,rate,r2,window_start,window_end\n");
    for (label, curve) in curves {
        match fit_decay_rate(curve, None) {
            Ok(fit) => s.push_str(&format!(
                "{label},{},{},{},{}\n",
                fmt17(fit.rate),
                fmt17(fit.r_squared),
                fmt17(fit.window.0),
                fmt17(fit.window.1)
            )),
            Err(e) => log::warn!("no decay rate for {label}: {e}"),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for t in [0.0, 0.05, 0.1, 1e-3, 6.25e-6, 0.30000000000000004] {
            let name = format!("density_t{}.csv", time_label(t));
            assert_eq!(parse_time_label(&name, "density_t"), Some(t));
        }
        assert_eq!(parse_time_label("density_tx.csv", "density_t"), None);
        assert_eq!(parse_time_label("hist_t1.csv", "density_t"), None);
    }

    #[test]
    fn positions_layout() {
        let s = positions_csv(2, &[&[0.0, 0.5], &[0.25, -0.25]]);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "realization,particle,x,y");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("1,0,2.5"));
    }
}
