//! Growing point clouds from two known world points: correlated-window
//! detection along the image segments joining their projections, 1-D
//! clustering of the matched offsets, candidate assembly across images,
//! triangulation and quality gating.

use std::collections::BTreeSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{
    project, triangulate, GeometryError, ImagePoint, ProjectionMatrix, Tolerances, WorldPoint,
};
use crate::image::{
    correlation, natural_sample_count, sample_image_line, GrayImage, ImageError, ProfileNorm,
};
use crate::jenks::{jenks_cluster_1d, JenksError};
use crate::scalar::{r, Real};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CrpcError {
    #[error("joint search budget exceeded")]
    BudgetExceeded,
    #[error("insufficient input: {0}")]
    InsufficientInput(&'static str),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Jenks(#[from] JenksError),
}

/// Detection parameters. Defaults are the operating values used throughout:
/// correlation threshold 1-theta with theta = 0.3, window fraction 0.1,
/// reprojection gate 40 px, support gate 7 images.
#[derive(Debug, Clone)]
pub struct CrpcParams<T> {
    pub theta: T,
    pub ell_frac: T,
    pub tau_d: T,
    pub tau_i: usize,
    pub norm: ProfileNorm,
    /// Scan every window offset pair instead of striding with refinement.
    pub exhaustive: bool,
    pub min_ell: usize,
    pub max_clusters: usize,
}

impl<T: Real> Default for CrpcParams<T> {
    fn default() -> Self {
        CrpcParams {
            theta: r(0.3),
            ell_frac: r(0.1),
            tau_d: r(40.0),
            tau_i: 7,
            norm: ProfileNorm::Pearson,
            exhaustive: false,
            min_ell: 8,
            max_clusters: 12,
        }
    }
}

/// Window length for a profile of `len` samples: the window fraction rounded
/// to the nearest even integer, never below the configured minimum.
pub fn window_len<T: Real>(params: &CrpcParams<T>, len: usize) -> usize {
    let raw = params.ell_frac * T::from_usize(len).unwrap();
    let half = (raw / r::<T>(2.0)).round().to_usize().unwrap_or(0);
    (half * 2).max(params.min_ell)
}

/// A reconstructed cloud point with its quality metrics and provenance.
#[derive(Debug, Clone)]
pub struct CloudPoint<T> {
    pub pos: WorldPoint<T>,
    /// Mean reprojection difference over the supporting images (pixels).
    pub e_d: T,
    /// Number of supporting images.
    pub e_i: usize,
    /// Anchor pair this point grew from.
    pub anchor: (usize, usize),
    /// Growth level (0 for solver seeds).
    pub level: u32,
}

pub type PointCloud<T> = Vec<CloudPoint<T>>;

/// One matched pair of window centers along two image segments.
#[derive(Debug, Clone, Copy)]
pub struct PairMatch<T> {
    pub l_i: usize,
    pub l_j: usize,
    pub corr: T,
}

/// Scan result for one image pair.
#[derive(Debug, Clone)]
pub struct PairScan<T> {
    pub image_i: usize,
    pub image_j: usize,
    /// Common profile length for the pair.
    pub len: usize,
    pub ell: usize,
    pub matches: Vec<PairMatch<T>>,
}

/// Similarity gate for two images w.r.t. a pair of world-point projections:
/// the full-segment profiles must correlate above `1 - theta`. Returns the
/// common profile length alongside the verdict.
pub fn similar_pair<T: Real>(
    img_i: &GrayImage<T>,
    img_j: &GrayImage<T>,
    seg_i: (&ImagePoint<T>, &ImagePoint<T>),
    seg_j: (&ImagePoint<T>, &ImagePoint<T>),
    theta: T,
    norm: ProfileNorm,
) -> Result<(bool, usize), CrpcError> {
    let len = natural_sample_count(seg_i.0, seg_i.1).max(natural_sample_count(seg_j.0, seg_j.1));
    let pi = sample_image_line(img_i, seg_i.0, seg_i.1, len, norm)?;
    let pj = sample_image_line(img_j, seg_j.0, seg_j.1, len, norm)?;
    let c = correlation(&pi.values, &pj.values, norm)?;
    Ok((c > T::one() - theta, len))
}

/// Convex combination of the segment endpoints at offset `l` of `len`.
pub fn point_on_segment<T: Real>(
    a: &ImagePoint<T>,
    b: &ImagePoint<T>,
    l: usize,
    len: usize,
) -> ImagePoint<T> {
    let steps = T::from_usize(len - 1).unwrap();
    let w0 = T::from_usize(l).unwrap() / steps;
    let w1 = T::one() - w0;
    ImagePoint::new(w1 * a.u + w0 * b.u, w1 * a.v + w0 * b.v)
}

/// All admissible window-center pairs whose intensity windows correlate above
/// `1 - theta`. In strided mode the scan visits a coarse grid and refines to
/// the local best around each hit; exhaustive mode records every hit.
pub fn pairwise_candidate_scan<T: Real>(
    img_i: &GrayImage<T>,
    img_j: &GrayImage<T>,
    seg_i: (&ImagePoint<T>, &ImagePoint<T>),
    seg_j: (&ImagePoint<T>, &ImagePoint<T>),
    params: &CrpcParams<T>,
) -> Result<PairScan<T>, CrpcError> {
    let len = natural_sample_count(seg_i.0, seg_i.1).max(natural_sample_count(seg_j.0, seg_j.1));
    let ell = window_len(params, len);
    let mut scan = PairScan { image_i: 0, image_j: 0, len, ell, matches: Vec::new() };
    if ell >= len {
        return Ok(scan);
    }
    // raw samples; window correlation normalizes per window anyway
    let pi = sample_image_line(img_i, seg_i.0, seg_i.1, len, ProfileNorm::Cosine)?;
    let pj = sample_image_line(img_j, seg_j.0, seg_j.1, len, ProfileNorm::Cosine)?;
    let half = ell / 2;
    let lo = half;
    let hi = len - 1 - half;
    if lo > hi {
        return Ok(scan);
    }
    let threshold = T::one() - params.theta;
    // windows with essentially no variation carry no evidence; anything
    // below this share of the profile's own variance is ignored
    let floor_i = window_variance_floor(&pi.values, ell + 1);
    let floor_j = window_variance_floor(&pj.values, ell + 1);
    // windows take ell + 1 samples so the center offset is exact
    let corr_at = |li: usize, lj: usize| -> T {
        let wi = &pi.values[li - half..=li + half];
        let wj = &pj.values[lj - half..=lj + half];
        if centered_ss(wi) < floor_i || centered_ss(wj) < floor_j {
            return -T::one();
        }
        correlation(wi, wj, params.norm).unwrap_or_else(|_| -T::one())
    };

    if params.exhaustive {
        for li in lo..=hi {
            for lj in lo..=hi {
                let c = corr_at(li, lj);
                if c > threshold {
                    scan.matches.push(PairMatch { l_i: li, l_j: lj, corr: c });
                }
            }
        }
        return Ok(scan);
    }

    let stride = (ell / 4).max(1);
    let mut seen = BTreeSet::new();
    let mut hits: Vec<PairMatch<T>> = Vec::new();
    let mut li = lo;
    while li <= hi {
        let mut lj = lo;
        while lj <= hi {
            if corr_at(li, lj) > threshold {
                // refine to the local best within the stride neighborhood
                let mut best = (li, lj, corr_at(li, lj));
                let li_lo = li.saturating_sub(stride - 1).max(lo);
                let lj_lo = lj.saturating_sub(stride - 1).max(lo);
                for ri in li_lo..=(li + stride - 1).min(hi) {
                    for rj in lj_lo..=(lj + stride - 1).min(hi) {
                        let c = corr_at(ri, rj);
                        if c > best.2 {
                            best = (ri, rj, c);
                        }
                    }
                }
                if best.2 > threshold && seen.insert((best.0, best.1)) {
                    hits.push(PairMatch { l_i: best.0, l_j: best.1, corr: best.2 });
                }
            }
            lj += stride;
        }
        li += stride;
    }
    // a physical point occupies one offset per segment, so an offset may
    // keep only its mutually best counterpart; this prunes the spray of
    // repeated-texture matches before clustering
    let mut best_i: std::collections::BTreeMap<usize, (usize, T)> = Default::default();
    let mut best_j: std::collections::BTreeMap<usize, (usize, T)> = Default::default();
    for m in &hits {
        match best_i.get(&m.l_i) {
            Some((_, c)) if *c >= m.corr => {}
            _ => {
                best_i.insert(m.l_i, (m.l_j, m.corr));
            }
        }
        match best_j.get(&m.l_j) {
            Some((_, c)) if *c >= m.corr => {}
            _ => {
                best_j.insert(m.l_j, (m.l_i, m.corr));
            }
        }
    }
    scan.matches = hits
        .into_iter()
        .filter(|m| best_i[&m.l_i].0 == m.l_j && best_j[&m.l_j].0 == m.l_i)
        .collect();
    Ok(scan)
}

/// A candidate correspondence: one image point per participating image.
#[derive(Debug, Clone)]
pub struct GeoFeatureCandidate<T> {
    pub images: Vec<usize>,
    pub points: Vec<ImagePoint<T>>,
    pub window_len: usize,
}

/// A lifted match between two per-image clusters, `(image, cluster index)`
/// on each side.
pub type ClusterMatch = ((usize, usize), (usize, usize));

/// Mean reprojection difference and support count of a triangulated
/// candidate.
pub fn evaluate_point<T: Real>(
    x: &WorldPoint<T>,
    cand: &GeoFeatureCandidate<T>,
    cams: &[ProjectionMatrix<T>],
) -> Result<(T, usize), CrpcError> {
    let mut total = T::zero();
    for (img, obs) in cand.images.iter().zip(&cand.points) {
        let pred = project(&cams[*img], x)?;
        total = total + pred.dist(obs);
    }
    let j = cand.images.len();
    Ok((total / T::from_usize(j).unwrap(), j))
}

#[derive(Debug, Clone, Default)]
pub struct CrpcStats {
    pub image_pairs: usize,
    pub similar_pairs: usize,
    pub raw_matches: usize,
    pub candidates: usize,
    pub verification_rejected: usize,
    pub gated_out: usize,
    pub emitted: usize,
    pub skipped_pairs: usize,
}

/// Full densification pass for one anchor pair: scan all image pairs,
/// cluster matched offsets per image, lift matches to cluster level, emit
/// every gated candidate as a cloud point.
///
/// Per-pair failures are logged and skipped; nothing here is fatal.
pub fn crpc<T: Real>(
    cams: &[ProjectionMatrix<T>],
    images: &[GrayImage<T>],
    anchor_a: &WorldPoint<T>,
    anchor_b: &WorldPoint<T>,
    anchor_ids: (usize, usize),
    params: &CrpcParams<T>,
) -> (PointCloud<T>, CrpcStats) {
    let mut stats = CrpcStats::default();
    let mut segments: Vec<Option<(ImagePoint<T>, ImagePoint<T>)>> = Vec::with_capacity(cams.len());
    for (n, cam) in cams.iter().enumerate() {
        let seg = match (project(cam, anchor_a), project(cam, anchor_b)) {
            (Ok(a), Ok(b)) => {
                let img = &images[n];
                let span = (a.u - b.u).abs().max((a.v - b.v).abs());
                if img.contains(&a) && img.contains(&b) && span > r(4.0) {
                    Some((a, b))
                } else {
                    None
                }
            }
            _ => None,
        };
        segments.push(seg);
    }

    let valid: Vec<usize> = (0..cams.len()).filter(|&n| segments[n].is_some()).collect();
    let pairs: Vec<(usize, usize)> = valid
        .iter()
        .enumerate()
        .flat_map(|(a, &i)| valid[a + 1..].iter().map(move |&j| (i, j)))
        .collect();
    stats.image_pairs = pairs.len();

    let scans: Vec<Option<PairScan<T>>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (ai, bi) = segments[i].as_ref().unwrap();
            let (aj, bj) = segments[j].as_ref().unwrap();
            let gate = similar_pair(&images[i], &images[j], (ai, bi), (aj, bj), params.theta, params.norm);
            match gate {
                Ok((true, _)) => {
                    match pairwise_candidate_scan(&images[i], &images[j], (ai, bi), (aj, bj), params)
                    {
                        Ok(mut scan) => {
                            scan.image_i = i;
                            scan.image_j = j;
                            Some(scan)
                        }
                        Err(e) => {
                            log::debug!("scan failed for images ({i},{j}): {e}");
                            None
                        }
                    }
                }
                Ok((false, _)) => None,
                Err(e) => {
                    log::debug!("similarity gate failed for images ({i},{j}): {e}");
                    None
                }
            }
        })
        .collect();

    // per-image accumulators of matched offsets (as segment fractions)
    let n_images = cams.len();
    let mut raw: Vec<Vec<T>> = vec![Vec::new(); n_images];
    let mut edges: Vec<((usize, usize), (usize, usize))> = Vec::new();
    let mut gated = 0usize;
    for scan in scans.iter().flatten() {
        gated += 1;
        stats.raw_matches += scan.matches.len();
        let steps = T::from_usize(scan.len - 1).unwrap();
        for m in &scan.matches {
            let ti = T::from_usize(m.l_i).unwrap() / steps;
            let tj = T::from_usize(m.l_j).unwrap() / steps;
            raw[scan.image_i].push(ti);
            raw[scan.image_j].push(tj);
            let idx_i = raw[scan.image_i].len() - 1;
            let idx_j = raw[scan.image_j].len() - 1;
            edges.push(((scan.image_i, idx_i), (scan.image_j, idx_j)));
        }
    }
    stats.similar_pairs = gated;
    stats.skipped_pairs = stats.image_pairs - gated;

    if edges.is_empty() {
        return (Vec::new(), stats);
    }

    // near-duplicate merge, then natural-breaks clustering per image
    let merge_tol = params.ell_frac / r(4.0);
    let gap_tol = params.ell_frac / r(2.0);
    let mut cluster_of: Vec<Vec<usize>> = vec![Vec::new(); n_images];
    let mut cluster_t: Vec<Vec<T>> = vec![Vec::new(); n_images];
    for n in 0..n_images {
        if raw[n].is_empty() {
            continue;
        }
        let merged_of = merge_near_duplicates(&raw[n], merge_tol);
        let n_merged = merged_of.iter().copied().max().unwrap() + 1;
        let mut sums = vec![T::zero(); n_merged];
        let mut counts = vec![0usize; n_merged];
        for (i, &mi) in merged_of.iter().enumerate() {
            sums[mi] = sums[mi] + raw[n][i];
            counts[mi] += 1;
        }
        let merged_t: Vec<T> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| *s / T::from_usize(c).unwrap())
            .collect();

        let clusters = cluster_with_gap_rule(&merged_t, params.max_clusters, gap_tol);
        let (assignments, means) = match clusters {
            Some((a, m)) => (a, m),
            None => continue,
        };
        cluster_t[n] = means;
        cluster_of[n] = merged_of.iter().map(|&mi| assignments[mi]).collect();
    }

    // lift pairwise matches to cluster-level edges
    let mut cluster_points: Vec<Vec<ImagePoint<T>>> = vec![Vec::new(); n_images];
    for n in 0..n_images {
        if let Some((a, b)) = segments[n].as_ref() {
            cluster_points[n] = cluster_t[n]
                .iter()
                .map(|&t| {
                    ImagePoint::new((T::one() - t) * a.u + t * b.u, (T::one() - t) * a.v + t * b.v)
                })
                .collect();
        }
    }
    let mut lifted: BTreeSet<ClusterMatch> = BTreeSet::new();
    for ((ni, ii), (nj, ij)) in &edges {
        if cluster_of[*ni].is_empty() || cluster_of[*nj].is_empty() {
            continue;
        }
        lifted.insert(((*ni, cluster_of[*ni][*ii]), (*nj, cluster_of[*nj][*ij])));
    }
    let lifted: Vec<ClusterMatch> = lifted.into_iter().collect();
    let candidates = build_candidate_set(&cluster_points, &lifted);

    let mut cloud = Vec::new();
    let tol = Tolerances::default();
    'candidates: for cand in candidates {
        stats.candidates += 1;
        // cluster means must still satisfy the pairwise window-correlation
        // condition; mixed tuples fail here before triangulation
        for (a, &ni) in cand.images.iter().enumerate() {
            for &nj in cand.images.iter().skip(a + 1) {
                let (ai, bi) = segments[ni].as_ref().unwrap();
                let (aj, bj) = segments[nj].as_ref().unwrap();
                let len =
                    natural_sample_count(ai, bi).max(natural_sample_count(aj, bj));
                let ell = window_len(params, len);
                if ell >= len {
                    continue 'candidates;
                }
                let pos = |n: usize| {
                    let idx = cand.images.iter().position(|&x| x == n).unwrap();
                    cand.points[idx]
                };
                let ok = verify_window_correlation(
                    &images[ni],
                    (ai, bi),
                    &pos(ni),
                    &images[nj],
                    (aj, bj),
                    &pos(nj),
                    len,
                    ell,
                    params,
                );
                if !ok {
                    stats.verification_rejected += 1;
                    continue 'candidates;
                }
            }
        }
        let sub_cams: Vec<ProjectionMatrix<T>> =
            cand.images.iter().map(|&n| cams[n].clone()).collect();
        let x = match triangulate(&sub_cams, &cand.points, &tol) {
            Ok(x) => x,
            Err(e) => {
                log::debug!("candidate triangulation failed: {e}");
                continue;
            }
        };
        let (e_d, e_i) = match evaluate_point(&x, &cand, cams) {
            Ok(v) => v,
            Err(e) => {
                log::debug!("candidate evaluation failed: {e}");
                continue;
            }
        };
        if e_d <= params.tau_d && e_i >= params.tau_i {
            cloud.push(CloudPoint { pos: x, e_d, e_i, anchor: anchor_ids, level: 1 });
        } else {
            stats.gated_out += 1;
        }
    }
    stats.emitted = cloud.len();
    (cloud, stats)
}

/// Lifts pairwise cluster matches to maximal mutually matched tuples: one
/// cluster mean per image, every pair connected, spanning at least two
/// images.
pub fn build_candidate_set<T: Real>(
    cluster_points: &[Vec<ImagePoint<T>>],
    matches: &[ClusterMatch],
) -> Vec<GeoFeatureCandidate<T>> {
    let mut node_ids: std::collections::BTreeMap<(usize, usize), usize> =
        std::collections::BTreeMap::new();
    for (n, pts) in cluster_points.iter().enumerate() {
        for c in 0..pts.len() {
            let id = node_ids.len();
            node_ids.insert((n, c), id);
        }
    }
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); node_ids.len()];
    for (a, b) in matches {
        let (Some(&ia), Some(&ib)) = (node_ids.get(a), node_ids.get(b)) else { continue };
        if a.0 == b.0 {
            continue;
        }
        adj[ia].insert(ib);
        adj[ib].insert(ia);
    }
    let nodes: Vec<(usize, usize)> = node_ids.keys().copied().collect();
    maximal_cliques(&adj, 100_000)
        .into_iter()
        .map(|clique| {
            let mut members: Vec<(usize, usize)> = clique.iter().map(|&id| nodes[id]).collect();
            members.sort_unstable();
            GeoFeatureCandidate {
                images: members.iter().map(|&(n, _)| n).collect(),
                points: members.iter().map(|&(n, c)| cluster_points[n][c]).collect(),
                window_len: 0,
            }
        })
        .collect()
}

/// Samples the window intensities around two matched points and re-checks
/// their correlation against the detection threshold.
#[allow(clippy::too_many_arguments)]
fn verify_window_correlation<T: Real>(
    img_i: &GrayImage<T>,
    seg_i: (&ImagePoint<T>, &ImagePoint<T>),
    pt_i: &ImagePoint<T>,
    img_j: &GrayImage<T>,
    seg_j: (&ImagePoint<T>, &ImagePoint<T>),
    pt_j: &ImagePoint<T>,
    len: usize,
    ell: usize,
    params: &CrpcParams<T>,
) -> bool {
    let window = |img: &GrayImage<T>,
                  seg: (&ImagePoint<T>, &ImagePoint<T>),
                  pt: &ImagePoint<T>|
     -> Option<Vec<T>> {
        // fractional center offset of the point along its segment
        let du = seg.1.u - seg.0.u;
        let dv = seg.1.v - seg.0.v;
        let denom = du * du + dv * dv;
        if denom <= T::min_positive_value() {
            return None;
        }
        let t = ((pt.u - seg.0.u) * du + (pt.v - seg.0.v) * dv) / denom;
        let steps = T::from_usize(len - 1).unwrap();
        let center = t * steps;
        let half = T::from_usize(ell / 2).unwrap();
        let mut vals = Vec::with_capacity(ell + 1);
        for k in 0..=ell {
            let off = center - half + T::from_usize(k).unwrap();
            let w0 = off / steps;
            let w1 = T::one() - w0;
            let p = ImagePoint::new(w1 * seg.0.u + w0 * seg.1.u, w1 * seg.0.v + w0 * seg.1.v);
            vals.push(img.sample(&p)?);
        }
        Some(vals)
    };
    let (Some(wi), Some(wj)) = (window(img_i, seg_i, pt_i), window(img_j, seg_j, pt_j)) else {
        return false;
    };
    match correlation(&wi, &wj, params.norm) {
        Ok(c) => c > T::one() - params.theta,
        Err(_) => false,
    }
}

fn centered_ss<T: Real>(w: &[T]) -> T {
    let k = T::from_usize(w.len()).unwrap();
    let mean = w.iter().copied().sum::<T>() / k;
    w.iter().map(|v| (*v - mean) * (*v - mean)).sum()
}

/// Minimum centered sum of squares a window must carry to count as
/// informative, relative to the profile's own variance.
fn window_variance_floor<T: Real>(profile: &[T], window: usize) -> T {
    let total = centered_ss(profile);
    let len = T::from_usize(profile.len()).unwrap();
    r::<T>(1e-12) * total / len * T::from_usize(window).unwrap()
}

/// Groups sorted-by-value runs whose consecutive gaps stay within `tol`;
/// returns the group index per input element.
fn merge_near_duplicates<T: Real>(values: &[T], tol: T) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut group = vec![0usize; values.len()];
    let mut current = 0usize;
    for w in 0..order.len() {
        if w > 0 && values[order[w]] - values[order[w - 1]] > tol {
            current += 1;
        }
        group[order[w]] = current;
    }
    group
}

/// Largest class count (capped) whose adjacent class means stay separated by
/// more than `gap_tol`; falls back to a single class.
fn cluster_with_gap_rule<T: Real>(
    values: &[T],
    max_k: usize,
    gap_tol: T,
) -> Option<(Vec<usize>, Vec<T>)> {
    if values.is_empty() {
        return None;
    }
    let cap = max_k.min(values.len());
    for k in (2..=cap).rev() {
        if let Ok(res) = jenks_cluster_1d(values, k) {
            let ok = res.means.windows(2).all(|w| w[1] - w[0] > gap_tol);
            if ok {
                return Some((res.assignments, res.means));
            }
        }
    }
    jenks_cluster_1d(values, 1).ok().map(|res| (res.assignments, res.means))
}

/// Bron-Kerbosch with pivoting; returns maximal cliques (capped).
fn maximal_cliques(adj: &[BTreeSet<usize>], cap: usize) -> Vec<Vec<usize>> {
    fn expand(
        r_set: &mut Vec<usize>,
        p: BTreeSet<usize>,
        x: BTreeSet<usize>,
        adj: &[BTreeSet<usize>],
        out: &mut Vec<Vec<usize>>,
        cap: usize,
    ) {
        if out.len() >= cap {
            return;
        }
        if p.is_empty() && x.is_empty() {
            if r_set.len() >= 2 {
                out.push(r_set.clone());
            }
            return;
        }
        let pivot = p.iter().chain(x.iter()).copied().max_by_key(|&v| adj[v].len());
        let candidates: Vec<usize> = match pivot {
            Some(u) => p.difference(&adj[u]).copied().collect(),
            None => p.iter().copied().collect(),
        };
        let mut p = p;
        let mut x = x;
        for v in candidates {
            let np: BTreeSet<usize> = p.intersection(&adj[v]).copied().collect();
            let nx: BTreeSet<usize> = x.intersection(&adj[v]).copied().collect();
            r_set.push(v);
            expand(r_set, np, nx, adj, out, cap);
            r_set.pop();
            p.remove(&v);
            x.insert(v);
        }
    }
    let mut out = Vec::new();
    let p: BTreeSet<usize> = (0..adj.len()).filter(|&v| !adj[v].is_empty()).collect();
    expand(&mut Vec::new(), p, BTreeSet::new(), adj, &mut out, cap);
    if out.len() >= cap {
        log::warn!("maximal clique enumeration truncated at {cap}");
    }
    out
}

/// Exhaustive joint window search over J profiles of common length: the
/// start-offset tuple whose re-normalized window Gram lies closest to the
/// all-ones matrix in the max norm. A verification oracle for the pairwise
/// pipeline; the budget caps keep it exhaustive.
pub fn geo_feature_joint<T: Real>(
    profiles: &[Vec<T>],
    ell: usize,
    norm: ProfileNorm,
) -> Result<(Vec<usize>, T), CrpcError> {
    let j = profiles.len();
    if j < 2 {
        return Err(CrpcError::InsufficientInput("need at least two profiles"));
    }
    let len = profiles[0].len();
    if profiles.iter().any(|p| p.len() != len) {
        return Err(CrpcError::InsufficientInput("profiles must share a length"));
    }
    if j > 4 || len > 400 || ell >= len {
        return Err(CrpcError::BudgetExceeded);
    }
    let starts = len - ell + 1;
    if (starts as f64).powi(j as i32) > 2e8 {
        return Err(CrpcError::BudgetExceeded);
    }

    // pairwise correlation tables; windows below the variance floor of
    // their profile are non-informative and score -1
    let floors: Vec<T> = profiles.iter().map(|p| window_variance_floor(p, ell)).collect();
    let mut tables = vec![vec![vec![T::zero(); starts]; starts]; j * (j - 1) / 2];
    let mut pair_idx = 0usize;
    let mut pair_of = vec![vec![usize::MAX; j]; j];
    for a in 0..j {
        for b in a + 1..j {
            for sa in 0..starts {
                for sb in 0..starts {
                    let ca = &profiles[a][sa..sa + ell];
                    let cb = &profiles[b][sb..sb + ell];
                    tables[pair_idx][sa][sb] =
                        if centered_ss(ca) < floors[a] || centered_ss(cb) < floors[b] {
                            -T::one()
                        } else {
                            correlation(ca, cb, norm).unwrap_or_else(|_| -T::one())
                        };
                }
            }
            pair_of[a][b] = pair_idx;
            pair_idx += 1;
        }
    }

    let mut best: Option<(Vec<usize>, T)> = None;
    let mut tuple = vec![0usize; j];
    loop {
        let mut obj = T::zero();
        for a in 0..j {
            for b in a + 1..j {
                let c = tables[pair_of[a][b]][tuple[a]][tuple[b]];
                obj = obj.max((c - T::one()).abs());
            }
        }
        let better = match &best {
            None => true,
            Some((_, b)) => obj < *b,
        };
        if better {
            best = Some((tuple.clone(), obj));
        }
        // odometer increment over the J start offsets
        let mut pos = j - 1;
        loop {
            tuple[pos] += 1;
            if tuple[pos] < starts {
                break;
            }
            tuple[pos] = 0;
            if pos == 0 {
                return Ok(best.unwrap());
            }
            pos -= 1;
        }
    }
}
