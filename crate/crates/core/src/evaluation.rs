//! Relative-error metrics and report emission (raw differences, histogram,
//! summary CSVs).

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::crpc::CloudPoint;
use crate::geometry::{project, CorrespondenceSet, SolutionGroup};
use crate::scalar::{r, Real};
use crate::wpfc::WpfcError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no data to report")]
    EmptyData,
    #[error(transparent)]
    Wpfc(#[from] WpfcError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mean Euclidean reprojection difference over the visible cells (pixels).
pub fn relative_error_group<T: Real>(
    group: &SolutionGroup<T>,
    corr: &CorrespondenceSet<T>,
) -> Result<T, EvalError> {
    let mut total = T::zero();
    let mut count = 0usize;
    for (m, n, obs) in corr.visible_cells() {
        let pred = project(&group.cameras[n], &group.points[m]).map_err(WpfcError::from)?;
        total = total + pred.dist(obs);
        count += 1;
    }
    if count == 0 {
        return Err(EvalError::EmptyData);
    }
    Ok(total / T::from_usize(count).unwrap())
}

/// Per-cloud-point relative error `(e_d / sqrt(H^2 + W^2))^(e_i)`: decreasing
/// in the support count whenever the normalized difference is below one.
pub fn relative_error_point<T: Real>(p: &CloudPoint<T>, height: usize, width: usize) -> T {
    let h = T::from_usize(height).unwrap();
    let w = T::from_usize(width).unwrap();
    let diag = (h * h + w * w).sqrt();
    (p.e_d / diag).powi(p.e_i as i32)
}

/// Histogram bin width and range used by every report: 1-pixel bins covering
/// 0..100 px plus one overflow bin.
pub const HIST_BINS: usize = 100;

#[derive(Debug, Clone)]
pub struct ErrorReport<T> {
    pub mean: T,
    /// Nearest-rank 95th percentile.
    pub p95: T,
    pub count: usize,
    /// `(lo, hi, count)` per bin; the final bin is `[100, inf)`.
    pub bins: Vec<(T, T, usize)>,
}

pub fn report_from_values<T: Real>(values: &[T]) -> Result<ErrorReport<T>, EvalError> {
    if values.is_empty() {
        return Err(EvalError::EmptyData);
    }
    let count = values.len();
    let mean = values.iter().copied().sum::<T>() / T::from_usize(count).unwrap();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let rank = ((r::<T>(0.95) * T::from_usize(count).unwrap()).ceil())
        .to_usize()
        .unwrap_or(count)
        .clamp(1, count);
    let p95 = sorted[rank - 1];

    let mut bins = Vec::with_capacity(HIST_BINS + 1);
    for b in 0..HIST_BINS {
        bins.push((T::from_usize(b).unwrap(), T::from_usize(b + 1).unwrap(), 0usize));
    }
    bins.push((T::from_usize(HIST_BINS).unwrap(), T::infinity(), 0usize));
    for v in values {
        let idx = v.to_f64().unwrap_or(0.0).max(0.0).floor() as usize;
        bins[idx.min(HIST_BINS)].2 += 1;
    }
    Ok(ErrorReport { mean, p95, count, bins })
}

/// Writes `raw.csv` (`point_id,image_id,diff_px`), `histogram.csv` and
/// `summary.csv` (mean, p95, count) into `dir`, returning the report.
pub fn emit_report<T: Real>(
    rows: &[(usize, usize, T)],
    dir: &Path,
) -> Result<ErrorReport<T>, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptyData);
    }
    let values: Vec<T> = rows.iter().map(|(_, _, v)| *v).collect();
    let report = report_from_values(&values)?;

    std::fs::create_dir_all(dir)?;
    let mut raw = std::fs::File::create(dir.join("raw.csv"))?;
    writeln!(raw, "point_id,image_id,diff_px")?;
    for (pid, iid, v) in rows {
        writeln!(raw, "{pid},{iid},{v}")?;
    }

    let mut hist = std::fs::File::create(dir.join("histogram.csv"))?;
    writeln!(hist, "bin_lo,bin_hi,count")?;
    for (lo, hi, c) in &report.bins {
        if hi.is_finite() {
            writeln!(hist, "{lo},{hi},{c}")?;
        } else {
            writeln!(hist, "{lo},inf,{c}")?;
        }
    }

    let mut summary = std::fs::File::create(dir.join("summary.csv"))?;
    writeln!(summary, "mean,p95,count")?;
    writeln!(summary, "{},{},{}", report.mean, report.p95, report.count)?;
    Ok(report)
}

/// Per-cell reprojection differences as report rows.
pub fn group_difference_rows<T: Real>(
    group: &SolutionGroup<T>,
    corr: &CorrespondenceSet<T>,
) -> Result<Vec<(usize, usize, T)>, EvalError> {
    let mut rows = Vec::new();
    for (m, n, obs) in corr.visible_cells() {
        let pred = project(&group.cameras[n], &group.points[m]).map_err(WpfcError::from)?;
        rows.push((m, n, pred.dist(obs)));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crpc::CloudPoint;
    use crate::geometry::WorldPoint;

    #[test]
    fn point_error_basics() {
        let mk = |e_d: f64, e_i: usize| CloudPoint {
            pos: WorldPoint::new(0.0, 0.0, 0.0),
            e_d,
            e_i,
            anchor: (0, 0),
            level: 1,
        };
        assert_eq!(relative_error_point(&mk(0.0, 5), 100, 100), 0.0);
        let diag = (3.0f64 * 3.0 + 4.0 * 4.0).sqrt(); // h=3, w=4 -> 5
        let p = mk(diag / 2.0, 2);
        assert!((relative_error_point(&p, 3, 4) - 0.25).abs() < 1e-12);
        // monotone decreasing in support when normalized error < 1
        let lo = relative_error_point(&mk(25.0, 7), 3024, 4032);
        let hi = relative_error_point(&mk(25.0, 2), 3024, 4032);
        assert!(lo < hi);
        // direct arithmetic for the headline-size image
        let expected = (25.0f64 / (3024.0f64 * 3024.0 + 4032.0 * 4032.0).sqrt()).powi(7);
        assert!((lo - expected).abs() < 1e-18);
    }

    #[test]
    fn report_single_value() {
        let rep = report_from_values(&[20.5f64]).unwrap();
        assert_eq!(rep.mean, 20.5);
        assert_eq!(rep.p95, 20.5);
        assert_eq!(rep.count, 1);
    }

    #[test]
    fn report_uniform_grid() {
        let values: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let rep = report_from_values(&values).unwrap();
        assert!((rep.mean - 50.5).abs() < 1e-12);
        assert_eq!(rep.p95, 95.0);
        let total: usize = rep.bins.iter().map(|b| b.2).sum();
        assert_eq!(total, 100);
        // value 100 lands in the overflow bin
        assert_eq!(rep.bins[HIST_BINS].2, 1);
    }

    #[test]
    fn emit_report_roundtrip() {
        let dir = std::env::temp_dir().join(format!("geocloud_eval_{}", std::process::id()));
        let rows: Vec<(usize, usize, f64)> = (0..50).map(|i| (i / 10, i % 10, i as f64)).collect();
        let rep = emit_report(&rows, &dir).unwrap();
        let summary = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
        let line = summary.lines().nth(1).unwrap();
        let fields: Vec<&str> = line.split(',').collect();
        assert!((fields[0].parse::<f64>().unwrap() - rep.mean).abs() < 1e-12);
        assert!((fields[1].parse::<f64>().unwrap() - rep.p95).abs() < 1e-12);
        assert_eq!(fields[2].parse::<usize>().unwrap(), rep.count);
        let raw = std::fs::read_to_string(dir.join("raw.csv")).unwrap();
        assert_eq!(raw.lines().count(), 51);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(report_from_values::<f64>(&[]), Err(EvalError::EmptyData)));
    }

    #[test]
    fn group_error_examples_and_jensen_bound() {
        use crate::synth::make_scene;
        use crate::wpfc::objective;
        // exact group
        let (scene, corr) = make_scene::<f64>(6, 5, 0.0, 70).unwrap();
        assert!(relative_error_group(&scene.group(), &corr).unwrap() < 1e-12);

        // single cell off by 5 px among ten cells (5 points x 2 images)
        let (scene2, corr2) = make_scene::<f64>(6, 5, 0.0, 71).unwrap();
        let small_group = SolutionGroup {
            points: scene2.points[..5].to_vec(),
            cameras: scene2.cameras[..2].to_vec(),
        };
        let mut off = corr2.subset(&[0, 1, 2, 3, 4], &[0, 1]);
        let p = *off.get(1, 1).unwrap();
        off.set(1, 1, Some(crate::geometry::ImagePoint::new(p.u + 3.0, p.v + 4.0)));
        let mean = relative_error_group(&small_group, &off).unwrap();
        assert!((mean - 0.5).abs() < 1e-12, "mean {mean}");

        // mean distance squared never exceeds the mean squared distance
        for seed in 0..5 {
            let (scene, corr) = make_scene::<f64>(7, 6, 1.0, 72 + seed).unwrap();
            let grp = scene.group();
            let mean = relative_error_group(&grp, &corr).unwrap();
            let obj = objective(&grp, &corr).unwrap();
            let cells = (corr.num_points() * corr.num_images()) as f64;
            assert!(mean * mean <= obj / cells + 1e-12);
        }
    }

    #[test]
    fn recomputation_matches_stored_rows() {
        use crate::synth::make_scene;
        let (scene, corr) = make_scene::<f64>(6, 5, 1.0, 73).unwrap();
        let rows = group_difference_rows(&scene.group(), &corr).unwrap();
        let mean_direct = relative_error_group(&scene.group(), &corr).unwrap();
        let mean_rows: f64 = rows.iter().map(|(_, _, d)| d).sum::<f64>() / rows.len() as f64;
        assert!((mean_direct - mean_rows).abs() < 1e-12);
    }
}
