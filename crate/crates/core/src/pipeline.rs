//! End-to-end reconstruction protocol: metric seeding via measured distances,
//! leveled point-cloud growth over anchor pairs, spread selection, and the
//! distance / pixel refinements.

use rayon::prelude::*;
use thiserror::Error;

use crate::crpc::{crpc, CloudPoint, CrpcParams, PointCloud};
use crate::geometry::{
    apply_transform, fit_projective_transform, CorrespondenceSet, GeometryError, SolutionGroup,
    WorldPoint,
};
use crate::image::GrayImage;
use crate::mds::{fit_similarity, MdsError};
use crate::scalar::Real;
use crate::wpfc::{wpfc_iterative, CfConfig, WpfcError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error("no covisible block contains the seed points")]
    InsufficientCovisibility,
    #[error(transparent)]
    Wpfc(#[from] WpfcError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mds(#[from] MdsError),
    #[error("insufficient input: {0}")]
    InsufficientInput(&'static str),
}

/// Growth-protocol parameters: the detection settings plus the per-level
/// minimum spacing schedule.
#[derive(Debug, Clone)]
pub struct GrowthConfig<T> {
    pub detection: CrpcParams<T>,
    /// Minimum spacing used to pick the next level's seeds (scene units);
    /// the last entry repeats for deeper levels.
    pub level_spreads: Vec<T>,
    pub max_levels: usize,
}

impl<T: Real> Default for GrowthConfig<T> {
    fn default() -> Self {
        GrowthConfig {
            detection: CrpcParams::default(),
            level_spreads: vec![crate::scalar::r(0.5), crate::scalar::r(0.05)],
            max_levels: 2,
        }
    }
}

/// Solves the correspondence set in gauge and maps the result into the
/// metric frame pinned by the seed coordinates, expanding over covisible
/// blocks until every point and camera is solved.
///
/// With five or more seeds the metric map is the exact projective transform
/// through the seed pairs. With four seeds the projective family is not
/// fully determined; a similarity fitted on the seeds (reflection allowed)
/// supplies a fifth auxiliary pair at the centroid of the gauge solution.
pub fn seed_and_solve<T: Real>(
    corr: &CorrespondenceSet<T>,
    seeds: &[(usize, WorldPoint<T>)],
    iters: usize,
    cfg: &CfConfig,
) -> Result<SolutionGroup<T>, PipelineError> {
    if seeds.len() < 4 {
        return Err(PipelineError::InsufficientInput("need at least four seed points"));
    }
    let m_total = corr.num_points();
    let n_total = corr.num_images();
    for (id, _) in seeds {
        if *id >= m_total || corr.row_visibility(*id) == 0 {
            return Err(PipelineError::InsufficientCovisibility);
        }
    }

    let mut solved_points: Vec<Option<WorldPoint<T>>> = vec![None; m_total];
    let mut solved_cams = vec![None; n_total];

    // first block: images seeing every seed, points visible in all of them
    let seed_ids: Vec<usize> = seeds.iter().map(|(id, _)| *id).collect();
    let mut block_images: Vec<usize> = (0..n_total)
        .filter(|&n| seed_ids.iter().all(|&m| corr.get(m, n).is_some()))
        .collect();
    let block_points = loop {
        if block_images.len() < 5 {
            return Err(PipelineError::InsufficientCovisibility);
        }
        let pts: Vec<usize> = (0..m_total)
            .filter(|&m| block_images.iter().all(|&n| corr.get(m, n).is_some()))
            .collect();
        if pts.len() >= 6 {
            break pts;
        }
        // drop the image that blocks the most points
        let worst = block_images
            .iter()
            .enumerate()
            .min_by_key(|(_, &n)| (0..m_total).filter(|&m| corr.get(m, n).is_some()).count())
            .map(|(i, _)| i)
            .unwrap();
        block_images.remove(worst);
    };

    let sub = corr.subset(&block_points, &block_images);
    let solution = wpfc_iterative(&sub, iters, cfg)?;
    let gauge = &solution.best.group;

    let local_of = |id: usize| block_points.iter().position(|&p| p == id);
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for (id, metric) in seeds {
        let local = local_of(*id).ok_or(PipelineError::InsufficientCovisibility)?;
        src.push(gauge.points[local]);
        dst.push(*metric);
    }
    let transform = if seeds.len() >= 5 {
        fit_projective_transform(&src[..5], &dst[..5])?
    } else {
        let sim = fit_similarity(&src, &dst, true, true)?;
        let kf = T::from_usize(gauge.points.len()).unwrap();
        let mut c = [T::zero(); 3];
        for p in &gauge.points {
            c[0] = c[0] + p.x;
            c[1] = c[1] + p.y;
            c[2] = c[2] + p.z;
        }
        let aux_src = WorldPoint::new(c[0] / kf, c[1] / kf, c[2] / kf);
        let aux_dst = sim.apply(&aux_src);
        let mut src5 = src.clone();
        let mut dst5 = dst.clone();
        src5.push(aux_src);
        dst5.push(aux_dst);
        fit_projective_transform(&src5, &dst5)?
    };
    let metric_block = apply_transform(gauge, &transform)?;
    for (local, &global) in block_points.iter().enumerate() {
        solved_points[global] = Some(metric_block.points[local]);
    }
    for (local, &global) in block_images.iter().enumerate() {
        solved_cams[global] = Some(metric_block.cameras[local].clone());
    }

    // expansion: keep absorbing blocks anchored on already-solved points
    loop {
        if solved_points.iter().all(Option::is_some) && solved_cams.iter().all(Option::is_some) {
            break;
        }
        let mut progressed = false;
        for target in 0..m_total {
            if solved_points[target].is_some() {
                continue;
            }
            if let Some((pts, imgs)) = expansion_block(corr, &solved_points, target) {
                let sub = corr.subset(&pts, &imgs);
                let sol = match wpfc_iterative(&sub, iters, cfg) {
                    Ok(s) => s,
                    Err(_) => continue,
                };
                let g = &sol.best.group;
                // align on five well-spread solved points
                let known: Vec<usize> = pts
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| solved_points[p].is_some())
                    .map(|(local, _)| local)
                    .collect();
                let sel = spread_five(&known, |i| g.points[i]);
                let src: Vec<WorldPoint<T>> = sel.iter().map(|&i| g.points[i]).collect();
                let dstv: Vec<WorldPoint<T>> =
                    sel.iter().map(|&i| solved_points[pts[i]].unwrap()).collect();
                let tr = match fit_projective_transform(&src, &dstv) {
                    Ok(t) => t,
                    Err(_) => continue,
                };
                let metric = match apply_transform(g, &tr) {
                    Ok(m) => m,
                    Err(_) => continue,
                };
                for (local, &global) in pts.iter().enumerate() {
                    if solved_points[global].is_none() {
                        solved_points[global] = Some(metric.points[local]);
                        progressed = true;
                    }
                }
                for (local, &global) in imgs.iter().enumerate() {
                    if solved_cams[global].is_none() {
                        solved_cams[global] = Some(metric.cameras[local].clone());
                        progressed = true;
                    }
                }
            }
        }
        // camera-only pass: an unsolved camera seeing six or more solved
        // points is recoverable by direct resection
        for n in 0..n_total {
            if solved_cams[n].is_some() {
                continue;
            }
            let mut pts = Vec::new();
            let mut obs = Vec::new();
            for m in 0..m_total {
                if let (Some(p), Some(o)) = (solved_points[m], corr.get(m, n)) {
                    pts.push(p);
                    obs.push(*o);
                }
            }
            if pts.len() >= 6 {
                if let Ok(cam) =
                    crate::geometry::camera_from_points(&pts, &obs, &Default::default())
                {
                    solved_cams[n] = Some(cam);
                    progressed = true;
                }
            }
        }
        if !progressed {
            break;
        }
    }

    if solved_points.iter().any(Option::is_none) || solved_cams.iter().any(Option::is_none) {
        return Err(PipelineError::InsufficientCovisibility);
    }
    Ok(SolutionGroup {
        points: solved_points.into_iter().map(Option::unwrap).collect(),
        cameras: solved_cams.into_iter().map(Option::unwrap).collect(),
    })
}

/// A covisible block containing `target`, at least five solved points and
/// six points total over at least five images.
fn expansion_block<T: Real>(
    corr: &CorrespondenceSet<T>,
    solved: &[Option<WorldPoint<T>>],
    target: usize,
) -> Option<(Vec<usize>, Vec<usize>)> {
    let m_total = corr.num_points();
    let n_total = corr.num_images();
    let mut images: Vec<usize> = (0..n_total).filter(|&n| corr.get(target, n).is_some()).collect();
    loop {
        if images.len() < 5 {
            return None;
        }
        let pts: Vec<usize> = (0..m_total)
            .filter(|&m| images.iter().all(|&n| corr.get(m, n).is_some()))
            .collect();
        let known = pts.iter().filter(|&&p| solved[p].is_some()).count();
        if pts.len() >= 6 && known >= 5 && pts.contains(&target) {
            return Some((pts, images));
        }
        if images.len() == 5 {
            return None;
        }
        let worst = images
            .iter()
            .enumerate()
            .min_by_key(|(_, &n)| (0..m_total).filter(|&m| corr.get(m, n).is_some()).count())
            .map(|(i, _)| i)?;
        images.remove(worst);
    }
}

/// Five indices spread far apart (farthest-point sampling over positions).
fn spread_five<T: Real>(candidates: &[usize], pos: impl Fn(usize) -> WorldPoint<T>) -> Vec<usize> {
    if candidates.len() <= 5 {
        return candidates.to_vec();
    }
    let mut pick = vec![candidates[0]];
    while pick.len() < 5 {
        let mut best = (candidates[0], T::neg_infinity());
        for &c in candidates {
            if pick.contains(&c) {
                continue;
            }
            let dmin = pick
                .iter()
                .map(|&p| pos(c).dist(&pos(p)))
                .fold(T::infinity(), T::min);
            if dmin > best.1 {
                best = (c, dmin);
            }
        }
        pick.push(best.0);
    }
    pick
}

/// Greedy quality-first selection: points in ascending `e_d` order, accepted
/// only when at least `delta` away from everything already accepted.
pub fn select_best_spread<T: Real>(cloud: &[CloudPoint<T>], delta: T) -> Vec<CloudPoint<T>> {
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.sort_by(|&a, &b| {
        cloud[a]
            .e_d
            .partial_cmp(&cloud[b].e_d)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut accepted: Vec<CloudPoint<T>> = Vec::new();
    for idx in order {
        let p = &cloud[idx];
        if accepted.iter().all(|q| q.pos.dist(&p.pos) >= delta) {
            accepted.push(p.clone());
        }
    }
    accepted
}

/// Leveled growth: each level runs the densifier over every pair of current
/// seeds, merges the results into the cloud, and spread-selects the next
/// seed set.
pub fn grow_point_cloud<T: Real>(
    group: &SolutionGroup<T>,
    images: &[GrayImage<T>],
    cfg: &GrowthConfig<T>,
) -> PointCloud<T> {
    let mut cloud: PointCloud<T> = group
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| CloudPoint {
            pos: *p,
            e_d: T::zero(),
            e_i: group.cameras.len(),
            anchor: (i, i),
            level: 0,
        })
        .collect();
    let mut seeds = cloud.clone();

    for level in 1..=cfg.max_levels {
        let pairs: Vec<(usize, usize)> = (0..seeds.len())
            .flat_map(|i| ((i + 1)..seeds.len()).map(move |j| (i, j)))
            .collect();
        let batches: Vec<PointCloud<T>> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let (mut pts, stats) = crpc(
                    &group.cameras,
                    images,
                    &seeds[i].pos,
                    &seeds[j].pos,
                    (i, j),
                    &cfg.detection,
                );
                log::debug!(
                    "level {level} pair ({i},{j}): {} candidates, {} emitted",
                    stats.candidates,
                    stats.emitted
                );
                for p in pts.iter_mut() {
                    p.level = level as u32;
                }
                pts
            })
            .collect();
        let fresh: PointCloud<T> = batches.into_iter().flatten().collect();
        if fresh.is_empty() {
            break;
        }
        cloud.extend(fresh.iter().cloned());
        let spread = cfg
            .level_spreads
            .get(level - 1)
            .or_else(|| cfg.level_spreads.last())
            .copied()
            .unwrap_or_else(T::zero);
        let mut pool = seeds;
        pool.extend(fresh);
        seeds = select_best_spread(&pool, spread);
    }
    cloud
}

/// Distance refinement: a subset whose members are at least `delta` apart and
/// each a minimum-`e_d` point within its own `delta`-ball of the input cloud.
pub fn refine_by_distance<T: Real>(cloud: &[CloudPoint<T>], delta: T) -> Vec<CloudPoint<T>> {
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.sort_by(|&a, &b| {
        cloud[a]
            .e_d
            .partial_cmp(&cloud[b].e_d)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut accepted: Vec<CloudPoint<T>> = Vec::new();
    for idx in order {
        let p = &cloud[idx];
        if !accepted.iter().all(|q| q.pos.dist(&p.pos) >= delta) {
            continue;
        }
        let locally_minimal = cloud
            .iter()
            .filter(|q| q.pos.dist(&p.pos) <= delta)
            .all(|q| p.e_d <= q.e_d);
        if locally_minimal {
            accepted.push(p.clone());
        }
    }
    accepted
}

/// Pixel refinement: exactly the subset with `e_d <= epsilon`.
pub fn refine_by_pixel<T: Real>(cloud: &[CloudPoint<T>], epsilon: T) -> Vec<CloudPoint<T>> {
    cloud.iter().filter(|p| p.e_d <= epsilon).cloned().collect()
}
