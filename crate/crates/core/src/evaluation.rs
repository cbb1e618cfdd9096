//! Error metrics against an exact density, integral-vs-radius tables and
//! two-dimensional slices.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::rng::stream_rng;
use crate::training::sample_uniform;

/// Mean relative error over the test points where p* > ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub epsilon: f64,
    pub count: usize,
    /// None when no test point clears the threshold.
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ThresholdRow>,
    /// Root mean square of p* - p_N over all test points.
    pub l2_difference: f64,
    pub integral_table: Vec<(f64, f64)>,
    pub seed: u64,
    pub gamma: Domain,
    pub samples: usize,
}

/// Density callable evaluated at f64 points.
pub type DensityFn<'a> = dyn Fn(&[f64]) -> f64 + Sync + 'a;

/// (p*, p_N) at `samples` uniform points of Γ, in sampling order.
fn paired_values(exact: &DensityFn<'_>, model: &DensityFn<'_>, gamma: &Domain, samples: usize, seed: u64) -> Vec<(f64, f64)> {
    let d = gamma.dim();
    let mut rng = stream_rng(seed, 0);
    let pts = sample_uniform(gamma, samples, &mut rng);
    pts.par_chunks(d).map(|x| (exact(x), model(x))).collect()
}

fn rows_from(values: &[(f64, f64)], thresholds: &[f64]) -> Vec<ThresholdRow> {
    thresholds
        .iter()
        .map(|&eps| {
            let mut count = 0;
            let mut sum = 0.0;
            for &(e, m) in values {
                if e > eps {
                    count += 1;
                    sum += (e - m).abs() / e;
                }
            }
            ThresholdRow { epsilon: eps, count, error: (count > 0).then(|| sum / count as f64) }
        })
        .collect()
}

fn rms(values: &[(f64, f64)]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|(e, m)| (e - m) * (e - m)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Relative errors for every threshold from one shared uniform sample of Γ.
pub fn relative_error(
    exact: &DensityFn<'_>,
    model: &DensityFn<'_>,
    gamma: &Domain,
    samples: usize,
    thresholds: &[f64],
    seed: u64,
) -> Result<Vec<ThresholdRow>> {
    if thresholds.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Input("thresholds must be positive".into()));
    }
    Ok(rows_from(&paired_values(exact, model, gamma, samples, seed), thresholds))
}

/// Root of the Monte Carlo mean of (p* - p_N)² over Γ.
pub fn l2_difference(exact: &DensityFn<'_>, model: &DensityFn<'_>, gamma: &Domain, samples: usize, seed: u64) -> f64 {
    rms(&paired_values(exact, model, gamma, samples, seed))
}

/// Rows and the L2 difference from the same sample; the integral table is left empty.
pub fn evaluate(
    exact: &DensityFn<'_>,
    model: &DensityFn<'_>,
    gamma: &Domain,
    samples: usize,
    thresholds: &[f64],
    seed: u64,
) -> Result<EvalReport> {
    if thresholds.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Input("thresholds must be positive".into()));
    }
    let values = paired_values(exact, model, gamma, samples, seed);
    Ok(EvalReport {
        rows: rows_from(&values, thresholds),
        l2_difference: rms(&values),
        integral_table: Vec::new(),
        seed,
        gamma: gamma.clone(),
        samples,
    })
}

/// (r, ∫ over the centered box of half-edge r) for each radius; r ≤ 0 gives 0.
pub fn integral_table<F>(mut integral: F, radii: &[f64]) -> Result<Vec<(f64, f64)>>
where
    F: FnMut(f64) -> Result<f64>,
{
    radii.iter().map(|&r| Ok((r, if r <= 0.0 { 0.0 } else { integral(r)? }))).collect()
}

/// Model values on a regular grid over two free coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceGrid {
    pub axes: (usize, usize),
    /// (x_a, x_b, value), x_a-major.
    pub values: Vec<(f64, f64, f64)>,
}

/// Grid of `resolution²` points over `range_a × range_b` for coordinates `axes`,
/// all other coordinates taken from `fixed`. Resolution 1 evaluates at `fixed` itself.
pub fn slice_grid(
    model: &DensityFn<'_>,
    fixed: &[f64],
    axes: (usize, usize),
    range_a: (f64, f64),
    range_b: (f64, f64),
    resolution: usize,
) -> Result<SliceGrid> {
    let (a, b) = axes;
    if a == b || a >= fixed.len() || b >= fixed.len() {
        return Err(Error::Input(format!("free coordinates {axes:?} must be distinct and below {}", fixed.len())));
    }
    if resolution == 0 {
        return Err(Error::Input("slice resolution must be at least 1".into()));
    }
    let coord = |k: usize, (lo, hi): (f64, f64), at: f64| {
        if resolution == 1 {
            at
        } else {
            lo + (hi - lo) * k as f64 / (resolution - 1) as f64
        }
    };
    let pts: Vec<(f64, f64)> = (0..resolution * resolution)
        .map(|k| (coord(k / resolution, range_a, fixed[a]), coord(k % resolution, range_b, fixed[b])))
        .collect();
    let values = pts
        .par_iter()
        .map(|&(xa, xb)| {
            let mut x = fixed.to_vec();
            x[a] = xa;
            x[b] = xb;
            (xa, xb, model(&x))
        })
        .collect();
    Ok(SliceGrid { axes, values })
}

impl SliceGrid {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x{},x{},value", self.axes.0 + 1, self.axes.1 + 1)?;
        for (xa, xb, v) in &self.values {
            writeln!(w, "{xa:e},{xb:e},{v:e}")?;
        }
        Ok(())
    }
}

impl EvalReport {
    /// One row per threshold: `model,params,epsilon,count,relative_error`,
    /// then the L2 row. Undefined errors are written as `NA`.
    pub fn write_csv<W: Write>(&self, mut w: W, model: &str, params: usize) -> std::io::Result<()> {
        writeln!(w, "model,params,epsilon,count,relative_error")?;
        for r in &self.rows {
            let e = r.error.map(|v| format!("{v:e}")).unwrap_or_else(|| "NA".into());
            writeln!(w, "{model},{params},{:e},{},{e}", r.epsilon, r.count)?;
        }
        writeln!(w, "{model},{params},l2_rms_difference,{},{:e}", self.samples, self.l2_difference)?;
        Ok(())
    }

    pub fn write_integral_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "r,integral")?;
        for (r, v) in &self.integral_table {
            writeln!(w, "{r},{v:e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(x: &[f64]) -> f64 {
        (-x.iter().map(|v| v * v).sum::<f64>()).exp()
    }

    fn gamma() -> Domain {
        Domain::isotropic(vec![0.0, 0.0], 2.0).unwrap()
    }

    #[test]
    fn identical_densities_have_zero_error() {
        let r = evaluate(&gauss, &gauss, &gamma(), 1000, &[1e-2, 1e-1], 3).unwrap();
        assert!(r.rows.iter().all(|row| row.error == Some(0.0)));
        assert_eq!(r.l2_difference, 0.0);
    }

    #[test]
    fn doubled_density_has_unit_error() {
        let twice = |x: &[f64]| 2.0 * gauss(x);
        let rows = relative_error(&gauss, &twice, &gamma(), 1000, &[1e-2], 3).unwrap();
        assert!((rows[0].error.unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scale_detection() {
        let delta = 0.037;
        let scaled = |x: &[f64]| (1.0 + delta) * gauss(x);
        let rows = relative_error(&gauss, &scaled, &gamma(), 2000, &[1e-3, 0.5], 8).unwrap();
        for r in rows {
            assert!((r.error.unwrap() - delta).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_threshold_rows_are_reported() {
        let rows = relative_error(&gauss, &gauss, &gamma(), 100, &[10.0], 1).unwrap();
        assert_eq!(rows[0].count, 0);
        assert_eq!(rows[0].error, None);
    }

    #[test]
    fn constant_offset_l2() {
        let shifted = |x: &[f64]| gauss(x) + 0.25;
        let v = l2_difference(&gauss, &shifted, &gamma(), 500, 2);
        assert!((v - 0.25).abs() < 1e-12);
    }

    #[test]
    fn l2_is_stable_under_more_samples() {
        let bumpy = |x: &[f64]| gauss(x) * (1.0 + 0.1 * (3.0 * x[0]).sin());
        let a = l2_difference(&gauss, &bumpy, &gamma(), 500_000, 4);
        let b = l2_difference(&gauss, &bumpy, &gamma(), 1_000_000, 4);
        assert!((a - b).abs() < 5e-3 * b, "{a} vs {b}");
    }

    #[test]
    fn counts_sum_at_most_to_samples() {
        let r = evaluate(&gauss, &gauss, &gamma(), 777, &[1e-3, 1e-2, 0.5], 5).unwrap();
        for row in &r.rows {
            assert!(row.count <= 777);
        }
        assert!(r.rows[0].count >= r.rows[1].count && r.rows[1].count >= r.rows[2].count);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let other = |x: &[f64]| gauss(x) * 1.1 + 0.01 * x[0];
        let a = evaluate(&gauss, &other, &gamma(), 3000, &[1e-2], 12).unwrap();
        let b = evaluate(&gauss, &other, &gamma(), 3000, &[1e-2], 12).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn slice_shapes() {
        let one = slice_grid(&gauss, &[0.3, -0.2, 0.1], (0, 2), (-1.0, 1.0), (-1.0, 1.0), 1).unwrap();
        assert_eq!(one.values, vec![(0.3, 0.1, gauss(&[0.3, -0.2, 0.1]))]);
        let g = slice_grid(&gauss, &[0.0, 0.0], (0, 1), (-1.0, 1.0), (-1.0, 1.0), 5).unwrap();
        let n = 5;
        for i in 0..n {
            for j in 0..n {
                assert_eq!(g.values[i * n + j].2, g.values[j * n + i].2);
            }
        }
        assert!(slice_grid(&gauss, &[0.0, 0.0], (1, 1), (0.0, 1.0), (0.0, 1.0), 3).is_err());
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x1,x2,value\n"));
    }

    #[test]
    fn integral_table_zero_radius() {
        let t = integral_table(|r| Ok(r / 2.0), &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(t, vec![(0.0, 0.0), (1.0, 0.5), (2.0, 1.0)]);
    }
}
