//! Relative-energy curves, exponential rate fits and density comparisons.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fv::{free_energy, MacroModel};
use crate::grid::{fmt17, DensityField};

/// Points at or below this are excluded from the default fitting window.
pub const DEFAULT_WINDOW_FLOOR: f64 = 1e-10;

/// Fraction of the admissible time range, counted from its end, that the
/// default window covers.
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.6;

/// Values are floored here before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-16;

/// `ΔE(t) = E(p(t)) − E(p_∞)` for each snapshot.
pub fn relative_energy<'a>(
    model: &MacroModel,
    snapshots: impl IntoIterator<Item = (f64, &'a DensityField)>,
    p_inf: &DensityField,
) -> Result<Vec<(f64, f64)>> {
    let e_inf = free_energy(model, p_inf);
    snapshots
        .into_iter()
        .map(|(t, p)| {
            if p.grid() != p_inf.grid() {
                return Err(Error::GridMismatch(format!(
                    "snapshot at t = {t} is on {:?}, steady state on {:?}",
                    p.grid(),
                    p_inf.grid()
                )));
            }
            Ok((t, free_energy(model, p) - e_inf))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
}

/// Window used when none is given: the last 60% of the leading stretch of
/// the curve on which `ΔE` stays above [`DEFAULT_WINDOW_FLOOR`].
pub fn default_window(curve: &[(f64, f64)]) -> Result<(f64, f64)> {
    let admissible: Vec<f64> = curve
        .iter()
        .take_while(|(_, e)| *e > DEFAULT_WINDOW_FLOOR)
        .map(|(t, _)| *t)
        .collect();
    if admissible.len() < 2 {
        return Err(Error::NotExponential(format!(
            "fewer than two points with ΔE > {DEFAULT_WINDOW_FLOOR:e}"
        )));
    }
    let (a, b) = (admissible[0], admissible[admissible.len() - 1]);
    Ok((b - DEFAULT_WINDOW_FRACTION * (b - a), b))
}

/// Least-squares line through `(t, log ΔE)` on the window; `rate` is minus
/// the slope.
pub fn fit_decay_rate(curve: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<DecayFit> {
    let window = match window {
        Some(w) => w,
        None => default_window(curve)?,
    };
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .copied()
        .collect();
    if let Some((t, e)) = pts.iter().find(|(_, e)| !(*e > 0.0)) {
        return Err(Error::NotExponential(format!("ΔE = {e} at t = {t}")));
    }
    if pts.len() < 2 {
        return Err(Error::NotExponential(format!(
            "{} points in window [{}, {}]",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let n = pts.len() as f64;
    let ys: Vec<f64> = pts.iter().map(|(_, e)| e.max(LOG_FLOOR).ln()).collect();
    let tm = pts.iter().map(|(t, _)| t).sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for ((t, _), y) in pts.iter().zip(&ys) {
        stt += (t - tm) * (t - tm);
        sty += (t - tm) * (y - ym);
        syy += (y - ym) * (y - ym);
    }
    if !(stt > 0.0) {
        return Err(Error::NotExponential("window spans a single instant".into()));
    }
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let ss_res: f64 = pts
        .iter()
        .zip(&ys)
        .map(|((t, _), y)| (y - intercept - slope * t).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(DecayFit {
        rate: -slope,
        intercept,
        window,
        r_squared,
    })
}

/// `(Σ|a − b| h^d, max|a − b|)` on a shared grid.
pub fn compare_densities(a: &DensityField, b: &DensityField) -> Result<(f64, f64)> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", a.grid(), b.grid())));
    }
    let (sum, max) = a
        .values()
        .iter()
        .zip(b.values())
        .fold((0.0, 0.0f64), |(s, m), (x, y)| {
            let d = (x - y).abs();
            (s + d, m.max(d))
        });
    Ok((sum * a.grid().cell_volume(), max))
}

/// One row of an energy table.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRow {
    pub label: String,
    pub t: f64,
    pub energy: f64,
    pub relative_energy: f64,
}

/// Energy histories as written to disk: `t,E,dE`, optionally with a leading
/// `label` column when several curves share one file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyTable {
    pub rows: Vec<EnergyRow>,
}

impl EnergyTable {
    pub fn push(&mut self, label: &str, t: f64, energy: f64, relative_energy: f64) {
        self.rows.push(EnergyRow {
            label: label.to_string(),
            t,
            energy,
            relative_energy,
        });
    }

    /// Distinct labels in order of first appearance.
    pub fn labels(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.label.as_str()) {
                out.push(&r.label);
            }
        }
        out
    }

    /// `(t, ΔE)` pairs of one curve.
    pub fn curve(&self, label: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.label == label)
            .map(|r| (r.t, r.relative_energy))
            .collect()
    }

    fn labelled(&self) -> bool {
        self.rows.iter().any(|r| !r.label.is_empty())
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let labelled = self.labelled();
        writeln!(w, "{}", if labelled { "label,t,E,dE" } else { "t,E,dE" })?;
        for r in &self.rows {
            if labelled {
                write!(w, "{},", r.label)?;
            }
            writeln!(w, "{},{},{}", fmt17(r.t), fmt17(r.energy), fmt17(r.relative_energy))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("output is ASCII")
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty energy file"))?;
        let labelled = match header {
            "t,E,dE" => false,
            "label,t,E,dE" => true,
            other => return Err(Error::parse(1, format!("unexpected header {other:?}"))),
        };
        let mut rows = Vec::new();
        for (lineno, line) in lines {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let want = if labelled { 4 } else { 3 };
            if cols.len() != want {
                return Err(Error::parse(lineno, format!("expected {want} columns, found {}", cols.len())));
            }
            let (label, nums) = if labelled {
                if cols[0].is_empty() {
                    return Err(Error::parse(lineno, "empty label"));
                }
                (cols[0].to_string(), &cols[1..])
            } else {
                (String::new(), &cols[..])
            };
            let v = nums
                .iter()
                .map(|c| {
                    c.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| Error::parse(lineno, format!("bad number {c:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(EnergyRow {
                label,
                t: v[0],
                energy: v[1],
                relative_energy: v[2],
            });
        }
        Ok(Self { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fv::steady_state;
    use crate::grid::{Grid, RngPlan};
    use crate::potentials::ExternalPotential;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn band_against_uniform() {
        let g = Grid::new(1, 240).unwrap();
        let beta = 0.297;
        let model = MacroModel::with_beta(1, beta, ExternalPotential::Zero).unwrap();
        let band = DensityField::from_fn(g, |x| if x[0] > 0.2 && x[0] < 0.4 { 5.0 } else { 0.0 }).unwrap();
        let p_inf = steady_state(&model, &g).unwrap();
        let de = relative_energy(&model, [(0.0, &band), (1.0, &p_inf)], &p_inf).unwrap();
        assert!((de[0].1 - (5f64.ln() + 0.5 * beta * 4.0)).abs() < 1e-12);
        assert_eq!(de[1], (1.0, 0.0));
        let other = DensityField::constant(Grid::new(1, 120).unwrap(), 1.0).unwrap();
        assert!(relative_energy(&model, [(0.0, &other)], &p_inf).is_err());
    }

    #[test]
    fn steady_states_have_zero_relative_energy() {
        let g = Grid::new(2, 32).unwrap();
        for ext in [
            ExternalPotential::Zero,
            ExternalPotential::Quadratic { a: 5.0 },
            ExternalPotential::VolcanoX { a1: 1.5, a2: 1.0, s: 0.1 },
            ExternalPotential::VolcanoRadial { a1: 4.5, a2: 3.5, s: 25.0 },
        ] {
            for beta in [0.0, 0.314, 0.556] {
                let model = MacroModel::with_beta(2, beta, ext.clone()).unwrap();
                let p = steady_state(&model, &g).unwrap();
                assert_eq!(relative_energy(&model, [(0.0, &p)], &p).unwrap()[0].1, 0.0);
            }
        }
    }

    #[test]
    fn planted_rate() {
        let curve: Vec<(f64, f64)> = (0..200).map(|k| {
            let t = k as f64 * 1e-3;
            (t, 0.7 * (-19.7392 * t).exp())
        }).collect();
        let fit = fit_decay_rate(&curve, None).unwrap();
        assert!((fit.rate / 19.7392 - 1.0).abs() < 1e-9);
        assert!((fit.intercept - 0.7f64.ln()).abs() < 1e-9);
        assert!((fit.window.0 - 0.0796).abs() < 1e-12 && fit.window.1 == 0.199);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn default_window_stops_at_floor() {
        let curve: Vec<(f64, f64)> = (0..100).map(|k| (k as f64, (-(k as f64)).exp())).collect();
        // e^{-t} > 1e-10 up to t = 23.
        assert_eq!(default_window(&curve).unwrap(), (23.0 - 0.6 * 23.0, 23.0));
        let fit = fit_decay_rate(&curve, None).unwrap();
        assert!((fit.rate - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_nonpositive_energy() {
        let curve = vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.0), (3.0, 0.1)];
        assert!(matches!(fit_decay_rate(&curve, Some((0.0, 3.0))), Err(Error::NotExponential(_))));
        assert!(fit_decay_rate(&curve, Some((0.0, 1.0))).is_ok());
        assert!(fit_decay_rate(&curve[..1], None).is_err());
    }

    #[test]
    fn half_perturbed_comparison() {
        let g = Grid::new(1, 64).unwrap();
        let a = DensityField::constant(g, 1.0).unwrap();
        let b = DensityField::from_fn(g, |x| if x[0] < 0.0 { 1.1 } else { 1.0 }).unwrap();
        let (l1, linf) = compare_densities(&a, &b).unwrap();
        assert!((l1 - 0.05).abs() < 1e-12 && (linf - 0.1).abs() < 1e-12);
        assert_eq!(compare_densities(&a, &a).unwrap(), (0.0, 0.0));
        let c = DensityField::constant(Grid::new(2, 8).unwrap(), 1.0).unwrap();
        assert!(matches!(compare_densities(&a, &c), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn energy_table_round_trip() {
        let mut t = EnergyTable::default();
        t.push("linear", 0.0, 1.5, 0.25);
        t.push("nonlinear", 0.0, 1.0 / 3.0, 1e-300);
        t.push("linear", 0.1, -2.0, 0.0);
        let back = EnergyTable::parse_csv(&t.to_csv_string()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.labels(), vec!["linear", "nonlinear"]);
        assert_eq!(back.curve("linear"), vec![(0.0, 0.25), (0.1, 0.0)]);

        let plain = EnergyTable::parse_csv("t,E,dE\n0,1,2\n\n1,3,4\n").unwrap();
        assert_eq!(plain.labels(), vec![""]);
        assert_eq!(plain.curve(""), vec![(0.0, 2.0), (1.0, 4.0)]);
        for bad in ["", "x,y\n", "t,E,dE\n1,2\n", "t,E,dE\n1,2,nan\n", "label,t,E,dE\n,1,2,3\n"] {
            assert!(EnergyTable::parse_csv(bad).is_err(), "{bad:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn comparison_is_a_metric(seed in any::<u64>(), d in 1usize..=2) {
            let g = Grid::new(d, 16).unwrap();
            let mut rng = RngPlan::new(seed, 1).rng();
            let mut field = || DensityField::new(g, (0..g.len()).map(|_| rng.random::<f64>() * 3.0).collect()).unwrap();
            let (a, b, c) = (field(), field(), field());
            let ab = compare_densities(&a, &b).unwrap();
            prop_assert_eq!(ab, compare_densities(&b, &a).unwrap());
            let ac = compare_densities(&a, &c).unwrap();
            let cb = compare_densities(&c, &b).unwrap();
            prop_assert!(ab.0 <= ac.0 + cb.0 + 1e-12);
            prop_assert!(ab.1 <= ac.1 + cb.1 + 1e-12);
        }

        #[test]
        fn recovers_planted_rates(rate in 0.1f64..100.0, amp in 1e-3f64..1e3) {
            let curve: Vec<(f64, f64)> = (0..50).map(|k| {
                let t = k as f64 * 0.1 / rate;
                (t, amp * (-rate * t).exp())
            }).collect();
            let fit = fit_decay_rate(&curve, None).unwrap();
            prop_assert!((fit.rate / rate - 1.0).abs() < 1e-9);
        }

        #[test]
        fn energy_parser_never_panics(s in ".{0,200}") {
            let _ = EnergyTable::parse_csv(&s);
        }
    }
}
