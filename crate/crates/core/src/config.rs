//! Run configuration files.
//!
//! A configuration is one TOML document with flat top-level keys and a few
//! sections:
//!
//! ```toml
//! dim = 1
//! cells = 256
//! N = 100
//! epsilon = 0.0015
//! t_end = 0.2
//! output_times = [0.0, 0.1, 0.2]
//!
//! [potential]
//! kind = "hard_sphere"
//!
//! [external]
//! kind = "zero"
//!
//! [initial]
//! kind = "indicator"
//! lo = 0.2
//! hi = 0.4
//! ```
//!
//! Unknown keys are rejected by name, as are keys that do not apply to the
//! selected `kind`. Relative file paths resolve against the directory of the
//! configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fv::MacroModel;
use crate::grid::{DensityField, Grid};
use crate::initial::{GaussianComponent, InitialDensity};
use crate::potentials::{ExternalPotential, InteractionKind, InteractionPotential, RadialTable};

pub const DEFAULT_JKO_ATOMS: usize = 2000;

/// The document as written, before interpretation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<ExternalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<HistogramSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jko: Option<JkoSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gr: Option<GrSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub far_exponent: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSection {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<ComponentSection>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSection {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSection {
    pub cells: usize,
    /// Axes of the histogram grid; defaults to `min(dim, 2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JkoSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrSection {
    pub bins: usize,
    pub r_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub every: Option<usize>,
}

/// Interpreted configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub source: ConfigFile,
    pub dim: usize,
    pub cells: Option<usize>,
    pub n_particles: usize,
    pub epsilon: f64,
    pub dt: Option<f64>,
    pub t_end: f64,
    pub output_times: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
    pub interaction: Option<InteractionPotential>,
    pub external: ExternalPotential,
    pub initial: InitialDensity,
    pub histogram: Option<HistogramSection>,
    pub jko_atoms: usize,
    pub gr: Option<GrSection>,
    alpha: Option<f64>,
    beta: Option<f64>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Rejects keys that are set but meaningless for `kind`.
fn only(section: &str, kind: &str, present: &[(&str, bool)], allowed: &[&str]) -> Result<()> {
    for (key, set) in present {
        if *set && !allowed.contains(key) {
            return Err(config_err(format!("[{section}] key `{key}` does not apply to kind {kind:?}")));
        }
    }
    Ok(())
}

fn need<T: Copy>(section: &str, key: &str, v: Option<T>) -> Result<T> {
    v.ok_or_else(|| config_err(format!("[{section}] missing key `{key}`")))
}

fn read_file(base: &Path, file: &str) -> Result<String> {
    let path = resolve(base, file);
    fs::read_to_string(&path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))
}

fn resolve(base: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses and interprets a document; `base` anchors relative file paths.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let source: ConfigFile = toml::from_str(text).map_err(|e| config_err(e.message().to_string()))?;
        Self::interpret(source, base)
    }

    pub fn interpret(source: ConfigFile, base: &Path) -> Result<Self> {
        let dim = source.dim;
        if !(1..=3).contains(&dim) {
            return Err(config_err(format!("`dim` must be 1, 2 or 3, got {dim}")));
        }
        let finite_nonneg = |key: &str, v: Option<f64>| -> Result<()> {
            match v {
                Some(x) if !(x.is_finite() && x >= 0.0) => {
                    Err(config_err(format!("`{key}` must be finite and nonnegative, got {x}")))
                }
                _ => Ok(()),
            }
        };
        finite_nonneg("epsilon", source.epsilon)?;
        finite_nonneg("alpha", source.alpha)?;
        finite_nonneg("beta", source.beta)?;
        if let Some(dt) = source.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(config_err(format!("`dt` must be positive, got {dt}")));
            }
        }
        if !(source.t_end >= 0.0 && source.t_end.is_finite()) {
            return Err(config_err(format!("`t_end` must be finite and nonnegative, got {}", source.t_end)));
        }
        let t_end = source.t_end;
        let mut output_times = source.output_times.clone().unwrap_or_else(|| vec![t_end]);
        if let Some(t) = output_times.iter().find(|t| !(**t >= 0.0 && **t <= t_end)) {
            return Err(config_err(format!("output time {t} outside [0, {t_end}]")));
        }
        output_times.sort_by(f64::total_cmp);
        output_times.dedup();
        if source.cells.is_some_and(|c| c < 8) {
            return Err(config_err("`cells` must be at least 8"));
        }
        let n_particles = source.n.unwrap_or(1);
        if n_particles == 0 {
            return Err(config_err("`N` must be at least 1"));
        }
        let realizations = source.realizations.unwrap_or(1);
        if realizations == 0 {
            return Err(config_err("`realizations` must be at least 1"));
        }
        let epsilon = source.epsilon.unwrap_or(0.0);

        let interaction = match &source.potential {
            None => None,
            Some(p) => Some(Self::interaction_from(p, epsilon, base)?),
        };
        if source.beta.is_some() && (source.alpha.is_some() || interaction.is_some()) {
            return Err(config_err("`beta` cannot be combined with `alpha` or a [potential] section"));
        }
        let external = match &source.external {
            None => ExternalPotential::Zero,
            Some(e) => Self::external_from(e, base)?,
        };
        let initial = match &source.initial {
            None => InitialDensity::Uniform,
            Some(i) => Self::initial_from(i, base)?,
        };
        initial.validate().map_err(|e| config_err(format!("[initial] {e}")))?;
        if let Some(h) = &source.histogram {
            if h.cells < 8 {
                return Err(config_err("[histogram] `cells` must be at least 8"));
            }
            if h.dim.is_some_and(|d| d == 0 || d > 2 || d > dim) {
                return Err(config_err("[histogram] `dim` must be 1 or 2 and at most `dim`"));
            }
        }
        if let Some(g) = &source.gr {
            if g.bins == 0 || !(g.r_max > 0.0 && g.r_max <= (dim as f64).sqrt()) {
                return Err(config_err("[gr] needs `bins` >= 1 and 0 < `r_max` <= √dim"));
            }
            if g.every == Some(0) {
                return Err(config_err("[gr] `every` must be at least 1"));
            }
        }
        let jko_atoms = source.jko.and_then(|j| j.atoms).unwrap_or(DEFAULT_JKO_ATOMS);
        if jko_atoms < 2 {
            return Err(config_err("[jko] `atoms` must be at least 2"));
        }
        Ok(Self {
            dim,
            cells: source.cells,
            n_particles,
            epsilon,
            dt: source.dt,
            t_end,
            output_times,
            realizations,
            seed: source.seed.unwrap_or(0),
            interaction,
            external,
            initial,
            histogram: source.histogram,
            jko_atoms,
            gr: source.gr,
            alpha: source.alpha,
            beta: source.beta,
            source,
        })
    }

    fn interaction_from(p: &PotentialSection, epsilon: f64, base: &Path) -> Result<InteractionPotential> {
        let present = [
            ("exponent", p.exponent.is_some()),
            ("file", p.file.is_some()),
            ("far_exponent", p.far_exponent.is_some()),
        ];
        let kind = match p.kind.as_str() {
            "hard_sphere" => {
                only("potential", &p.kind, &present, &[])?;
                InteractionKind::HardSphere
            }
            "yukawa" => {
                only("potential", &p.kind, &present, &[])?;
                InteractionKind::Yukawa
            }
            "power_law" => {
                only("potential", &p.kind, &present, &["exponent"])?;
                InteractionKind::PowerLaw {
                    exponent: need("potential", "exponent", p.exponent)?,
                }
            }
            "table" => {
                only("potential", &p.kind, &present, &["file", "far_exponent"])?;
                let file = p.file.as_deref().ok_or_else(|| config_err("[potential] missing key `file`"))?;
                let far = need("potential", "far_exponent", p.far_exponent)?;
                InteractionKind::Tabulated(RadialTable::parse_csv(&read_file(base, file)?, far)?)
            }
            other => {
                return Err(config_err(format!(
                    "[potential] unknown kind {other:?}; expected hard_sphere, yukawa, power_law or table"
                )))
            }
        };
        if !(epsilon > 0.0) {
            return Err(config_err("a [potential] section needs `epsilon` > 0"));
        }
        InteractionPotential::new(kind, epsilon).map_err(|e| config_err(format!("[potential] {e}")))
    }

    fn external_from(e: &ExternalSection, base: &Path) -> Result<ExternalPotential> {
        let present = [
            ("a", e.a.is_some()),
            ("a1", e.a1.is_some()),
            ("a2", e.a2.is_some()),
            ("s", e.s.is_some()),
            ("file", e.file.is_some()),
        ];
        let finite = |key: &str, v: Option<f64>| -> Result<f64> {
            let x = need("external", key, v)?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(config_err(format!("[external] `{key}` must be finite")))
            }
        };
        Ok(match e.kind.as_str() {
            "zero" => {
                only("external", &e.kind, &present, &[])?;
                ExternalPotential::Zero
            }
            "quadratic" => {
                only("external", &e.kind, &present, &["a"])?;
                ExternalPotential::Quadratic { a: finite("a", e.a)? }
            }
            "volcano_x" | "volcano_radial" => {
                only("external", &e.kind, &present, &["a1", "a2", "s"])?;
                let (a1, a2, s) = (finite("a1", e.a1)?, finite("a2", e.a2)?, finite("s", e.s)?);
                if !(s > 0.0) {
                    return Err(config_err("[external] `s` must be positive"));
                }
                if e.kind == "volcano_x" {
                    ExternalPotential::VolcanoX { a1, a2, s }
                } else {
                    ExternalPotential::VolcanoRadial { a1, a2, s }
                }
            }
            "table" => {
                only("external", &e.kind, &present, &["file"])?;
                let file = e.file.as_deref().ok_or_else(|| config_err("[external] missing key `file`"))?;
                ExternalPotential::parse_csv(&read_file(base, file)?)?
            }
            other => {
                return Err(config_err(format!(
                    "[external] unknown kind {other:?}; expected zero, quadratic, volcano_x, volcano_radial or table"
                )))
            }
        })
    }

    fn initial_from(i: &InitialSection, base: &Path) -> Result<InitialDensity> {
        let present = [
            ("lo", i.lo.is_some()),
            ("hi", i.hi.is_some()),
            ("components", i.components.is_some()),
            ("mu", i.mu.is_some()),
            ("sigma", i.sigma.is_some()),
            ("amplitude", i.amplitude.is_some()),
            ("file", i.file.is_some()),
        ];
        Ok(match i.kind.as_str() {
            "uniform" => {
                only("initial", &i.kind, &present, &[])?;
                InitialDensity::Uniform
            }
            "indicator" => {
                only("initial", &i.kind, &present, &["lo", "hi"])?;
                InitialDensity::Indicator {
                    lo: need("initial", "lo", i.lo)?,
                    hi: need("initial", "hi", i.hi)?,
                }
            }
            "gaussian_mixture" => {
                only("initial", &i.kind, &present, &["components"])?;
                let comps = i
                    .components
                    .as_ref()
                    .ok_or_else(|| config_err("[initial] missing key `components`"))?;
                InitialDensity::GaussianMixture {
                    components: comps
                        .iter()
                        .map(|c| GaussianComponent {
                            weight: c.weight,
                            mean: c.mean,
                            sd: c.sd,
                        })
                        .collect(),
                }
            }
            "ring" => {
                only("initial", &i.kind, &present, &["mu", "sigma", "amplitude"])?;
                InitialDensity::Ring {
                    mu: need("initial", "mu", i.mu)?,
                    sigma: need("initial", "sigma", i.sigma)?,
                    amplitude: i.amplitude.unwrap_or(0.0),
                }
            }
            "table" => {
                only("initial", &i.kind, &present, &["file"])?;
                let file = i.file.as_deref().ok_or_else(|| config_err("[initial] missing key `file`"))?;
                InitialDensity::Tabulated(DensityField::parse_csv(&read_file(base, file)?)?)
            }
            other => {
                return Err(config_err(format!(
                    "[initial] unknown kind {other:?}; expected uniform, indicator, gaussian_mixture, ring or table"
                )))
            }
        })
    }

    /// PDE grid; requires `cells`.
    pub fn grid(&self) -> Result<Grid> {
        let cells = self.cells.ok_or_else(|| config_err("missing key `cells`"))?;
        if self.dim > 2 {
            return Err(config_err("PDE grids are one- or two-dimensional"));
        }
        Grid::new(self.dim, cells)
    }

    /// Grid for particle histograms: the `[histogram]` section, else the PDE
    /// grid.
    pub fn histogram_grid(&self) -> Result<Option<Grid>> {
        match &self.histogram {
            Some(h) => Grid::new(h.dim.unwrap_or(self.dim.min(2)), h.cells).map(Some),
            None if self.cells.is_some() && self.dim <= 2 => self.grid().map(Some),
            None => Ok(None),
        }
    }

    /// `α` as given, else computed from the pair potential.
    pub fn alpha(&self) -> Result<Option<f64>> {
        if let Some(a) = self.alpha {
            return Ok(Some(a));
        }
        match &self.interaction {
            None => Ok(None),
            Some(p) => Ok(Some(p.alpha_u(self.dim)?.value)),
        }
    }

    /// Macroscopic model: explicit `beta`, else `α (N − 1) ε^d`, else linear.
    pub fn model(&self) -> Result<MacroModel> {
        if let Some(beta) = self.beta {
            return MacroModel::with_beta(self.dim, beta, self.external.clone());
        }
        match self.alpha()? {
            Some(alpha) => MacroModel::new(self.dim, self.n_particles, self.epsilon, alpha, self.external.clone()),
            None => Ok(MacroModel::linear(self.dim, self.external.clone())),
        }
    }

    /// Initial density on the PDE grid.
    pub fn initial_field(&self) -> Result<DensityField> {
        self.initial.on_grid(self.grid()?)
    }
}
