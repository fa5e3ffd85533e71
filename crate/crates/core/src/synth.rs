//! Ground-truth scene generation and textured-surface rendering, so every
//! solver property is testable against known world points and cameras.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{
    fit_projective_transform, CorrespondenceSet, GeometryError, ProjectionMatrix, SolutionGroup,
    WorldPoint,
};
use crate::image::GrayImage;
use crate::linalg;
use crate::scalar::{r, Real};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error("scene generation failed: {0}")]
    GenerationFailed(&'static str),
    #[error("scene has no renderable surface")]
    MissingSurface,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Parametric surface patch carrying the rendered texture.
#[derive(Debug, Clone)]
pub enum SurfaceKind<T> {
    Plane {
        origin: WorldPoint<T>,
        u_axis: [T; 3],
        v_axis: [T; 3],
        half_u: T,
        half_v: T,
    },
    Cylinder {
        radius: T,
        z_min: T,
        z_max: T,
        phi_center: T,
        phi_half: T,
    },
    Sphere {
        center: WorldPoint<T>,
        radius: T,
        phi_center: T,
        phi_half: T,
        theta_half: T,
    },
}

impl<T: Real> SurfaceKind<T> {
    /// World position for surface coordinates (arc-length parameterization).
    pub fn world_at(&self, s: T, t: T) -> WorldPoint<T> {
        match self {
            SurfaceKind::Plane { origin, u_axis, v_axis, .. } => WorldPoint::new(
                origin.x + s * u_axis[0] + t * v_axis[0],
                origin.y + s * u_axis[1] + t * v_axis[1],
                origin.z + s * u_axis[2] + t * v_axis[2],
            ),
            SurfaceKind::Cylinder { radius, phi_center, .. } => {
                let phi = *phi_center + s / *radius;
                WorldPoint::new(*radius * phi.cos(), *radius * phi.sin(), t)
            }
            SurfaceKind::Sphere { center, radius, phi_center, .. } => {
                let phi = *phi_center + s / *radius;
                let theta = t / *radius;
                WorldPoint::new(
                    center.x + *radius * theta.cos() * phi.cos(),
                    center.y + *radius * theta.cos() * phi.sin(),
                    center.z + *radius * theta.sin(),
                )
            }
        }
    }

    /// Signed distance from the surface (ignoring patch bounds); used to
    /// check how close reconstructed points lie to the true geometry.
    pub fn distance(&self, p: &WorldPoint<T>) -> T {
        match self {
            SurfaceKind::Plane { origin, u_axis, v_axis, .. } => {
                let n = cross(u_axis, v_axis);
                let nn = linalg::norm2(&n);
                let d = [p.x - origin.x, p.y - origin.y, p.z - origin.z];
                (linalg::dot(&n, &d) / nn).abs()
            }
            SurfaceKind::Cylinder { radius, .. } => {
                ((p.x * p.x + p.y * p.y).sqrt() - *radius).abs()
            }
            SurfaceKind::Sphere { center, radius, .. } => (p.dist(center) - *radius).abs(),
        }
    }
}

/// High-contrast spot blended into the procedural texture at surface
/// coordinates `uv`.
#[derive(Debug, Clone)]
pub struct Mark<T> {
    pub uv: (T, T),
    pub amp: T,
    pub sigma: T,
}

#[derive(Debug, Clone)]
pub struct TextureSpec<T> {
    pub seed: u64,
    /// Noise lattice cell size in surface units.
    pub cell: T,
    pub octaves: u32,
    pub contrast: T,
    pub base: T,
    pub marks: Vec<Mark<T>>,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene<T> {
    pub points: Vec<WorldPoint<T>>,
    pub cameras: Vec<ProjectionMatrix<T>>,
    pub sigma: T,
    pub height: usize,
    pub width: usize,
    pub surface: Option<SurfaceKind<T>>,
    pub texture: Option<TextureSpec<T>>,
}

impl<T: Real> SyntheticScene<T> {
    pub fn group(&self) -> SolutionGroup<T> {
        SolutionGroup { points: self.points.clone(), cameras: self.cameras.clone() }
    }

    pub fn diameter(&self) -> T {
        let mut d = T::zero();
        for i in 0..self.points.len() {
            for j in i + 1..self.points.len() {
                d = d.max(self.points[i].dist(&self.points[j]));
            }
        }
        d
    }
}

#[derive(Debug, Clone)]
pub struct SceneOptions<T> {
    pub points: usize,
    pub images: usize,
    pub sigma: T,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub ring_radius: f64,
}

impl<T: Real> SceneOptions<T> {
    pub fn new(points: usize, images: usize, sigma: T, seed: u64) -> Self {
        SceneOptions { points, images, sigma, seed, height: 756, width: 1008, ring_radius: 4.0 }
    }
}

/// Random scene: points in a unit box, cameras on a jittered ring, exact
/// projections plus isotropic Gaussian pixel noise. Deterministic under the
/// seed; generic-position constraints enforced by rejection sampling.
pub fn make_scene<T: Real>(
    points: usize,
    images: usize,
    sigma: T,
    seed: u64,
) -> Result<(SyntheticScene<T>, CorrespondenceSet<T>), SynthError> {
    make_scene_with(&SceneOptions::new(points, images, sigma, seed))
}

pub fn make_scene_with<T: Real>(
    opts: &SceneOptions<T>,
) -> Result<(SyntheticScene<T>, CorrespondenceSet<T>), SynthError> {
    if opts.points < 6 || opts.images < 5 {
        return Err(SynthError::GenerationFailed("need at least 6 points and 5 images"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _attempt in 0..64 {
        let pts = sample_points::<T>(&mut rng, opts.points);
        if !first_five_generic(&pts) {
            continue;
        }
        if let Some(cams) = sample_cameras::<T>(&mut rng, opts, &pts) {
            let mut corr = CorrespondenceSet::new(opts.points, opts.images);
            for (m, p) in pts.iter().enumerate() {
                for (n, cam) in cams.iter().enumerate() {
                    let mut obs = cam.project(p).expect("visibility checked during sampling");
                    if opts.sigma > T::zero() {
                        obs.u = obs.u + opts.sigma * gauss::<T>(&mut rng);
                        obs.v = obs.v + opts.sigma * gauss::<T>(&mut rng);
                    }
                    corr.set(m, n, Some(obs));
                }
            }
            let scene = SyntheticScene {
                points: pts,
                cameras: cams,
                sigma: opts.sigma,
                height: opts.height,
                width: opts.width,
                surface: None,
                texture: None,
            };
            return Ok((scene, corr));
        }
    }
    Err(SynthError::GenerationFailed("rejection sampling exhausted"))
}

fn sample_points<T: Real>(rng: &mut ChaCha8Rng, count: usize) -> Vec<WorldPoint<T>> {
    let mut pts: Vec<WorldPoint<T>> = Vec::with_capacity(count);
    let mut guard = 0;
    while pts.len() < count && guard < 10_000 {
        guard += 1;
        let p = WorldPoint::new(
            r::<T>(rng.random_range(-0.5..0.5)),
            r::<T>(rng.random_range(-0.5..0.5)),
            r::<T>(rng.random_range(-0.5..0.5)),
        );
        if pts.iter().all(|q| q.dist(&p) > r(0.08)) {
            pts.push(p);
        }
    }
    pts
}

fn first_five_generic<T: Real>(pts: &[WorldPoint<T>]) -> bool {
    if pts.len() < 5 {
        return false;
    }
    // every 4-subset of the first five must span a healthy volume
    for skip in 0..5 {
        let sel: Vec<&WorldPoint<T>> = (0..5).filter(|&i| i != skip).map(|i| &pts[i]).collect();
        let a = [sel[1].x - sel[0].x, sel[1].y - sel[0].y, sel[1].z - sel[0].z];
        let b = [sel[2].x - sel[0].x, sel[2].y - sel[0].y, sel[2].z - sel[0].z];
        let c = [sel[3].x - sel[0].x, sel[3].y - sel[0].y, sel[3].z - sel[0].z];
        let vol = linalg::dot(&cross(&a, &b), &c).abs();
        if vol < r(0.01) {
            return false;
        }
    }
    true
}

fn sample_cameras<T: Real>(
    rng: &mut ChaCha8Rng,
    opts: &SceneOptions<T>,
    pts: &[WorldPoint<T>],
) -> Option<Vec<ProjectionMatrix<T>>> {
    let h = opts.height as f64;
    let w = opts.width as f64;
    let mut focal = 0.8 * h.min(w);
    'shrink: for _ in 0..8 {
        let mut local = rng.clone();
        let mut cams = Vec::with_capacity(opts.images);
        for k in 0..opts.images {
            let base = 2.0 * std::f64::consts::PI * (k as f64) / (opts.images as f64);
            let ang = base + local.random_range(-0.4..0.4) / (opts.images as f64);
            let rho = opts.ring_radius * (1.0 + local.random_range(-0.08..0.08));
            let center = [
                rho * ang.cos(),
                rho * ang.sin(),
                opts.ring_radius * local.random_range(-0.35..0.35),
            ];
            let target = [
                local.random_range(-0.05..0.05),
                local.random_range(-0.05..0.05),
                local.random_range(-0.05..0.05),
            ];
            let cu = h / 2.0 + local.random_range(-0.02..0.02) * h;
            let cv = w / 2.0 + local.random_range(-0.02..0.02) * w;
            let cam = pinhole::<T>(&center, &target, focal, cu, cv)?;
            cams.push(cam);
        }
        // every point must land inside every image with a margin
        let margin = r::<T>(0.03) * r::<T>(h.min(w));
        for p in pts {
            for cam in &cams {
                match cam.project(p) {
                    Ok(ip) => {
                        let hh = r::<T>(h);
                        let ww = r::<T>(w);
                        if ip.u < margin || ip.u > hh - margin || ip.v < margin || ip.v > ww - margin
                        {
                            focal *= 0.85;
                            continue 'shrink;
                        }
                        // depth must be positive (in front of the camera)
                        if cam.row_dot(2, p) <= T::zero() {
                            return None;
                        }
                    }
                    Err(_) => return None,
                }
            }
        }
        *rng = local;
        return Some(cams);
    }
    None
}

/// Raw 3x4 pinhole looking from `center` toward `target`, gauge-normalized.
pub fn pinhole<T: Real>(
    center: &[f64; 3],
    target: &[f64; 3],
    focal: f64,
    cu: f64,
    cv: f64,
) -> Option<ProjectionMatrix<T>> {
    let fwd = normalize(&[target[0] - center[0], target[1] - center[1], target[2] - center[2]])?;
    let world_up = if fwd[2].abs() > 0.95 { [0.0, 1.0, 0.0] } else { [0.0, 0.0, 1.0] };
    let right = normalize(&cross_f64(&fwd, &world_up))?;
    let down = cross_f64(&fwd, &right);

    let row_u: Vec<f64> = (0..3).map(|i| focal * down[i] + cu * fwd[i]).collect();
    let row_v: Vec<f64> = (0..3).map(|i| focal * right[i] + cv * fwd[i]).collect();
    let dotc = |v: &[f64]| v[0] * center[0] + v[1] * center[1] + v[2] * center[2];
    let rows = [
        [r::<T>(row_u[0]), r::<T>(row_u[1]), r::<T>(row_u[2]), r::<T>(-dotc(&row_u))],
        [r::<T>(row_v[0]), r::<T>(row_v[1]), r::<T>(row_v[2]), r::<T>(-dotc(&row_v))],
        [r::<T>(fwd[0]), r::<T>(fwd[1]), r::<T>(fwd[2]), r::<T>(-dotc(&fwd))],
    ];
    ProjectionMatrix::new_with(rows, &r(1e-6)).ok()
}

fn normalize(v: &[f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n < 1e-12 {
        return None;
    }
    Some([v[0] / n, v[1] / n, v[2] / n])
}

fn cross_f64(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn cross<T: Real>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Standard normal via Box-Muller, driven by the scene RNG.
fn gauss<T: Real>(rng: &mut ChaCha8Rng) -> T {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    r::<T>((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos())
}

/// Options for the textured-cylinder scene used by the densification tests.
#[derive(Debug, Clone)]
pub struct CylinderSceneOptions {
    pub seed: u64,
    pub images: usize,
    /// Anchor grid on the patch: rows x cols surface points.
    pub anchor_rows: usize,
    pub anchor_cols: usize,
    pub marks: usize,
    pub height: usize,
    pub width: usize,
    /// Half-extent of the patch in azimuth (radians) and height.
    pub phi_half: f64,
    pub z_half: f64,
    pub contrast: f64,
}

impl Default for CylinderSceneOptions {
    fn default() -> Self {
        CylinderSceneOptions {
            seed: 11,
            images: 20,
            anchor_rows: 3,
            anchor_cols: 4,
            marks: 60,
            height: 240,
            width: 320,
            // shallow patch: anchor chords stay well under a percent of the
            // scene diameter away from the surface
            phi_half: 0.12,
            z_half: 0.50,
            contrast: 0.35,
        }
    }
}

/// Textured cylinder patch watched by a sector of cameras; anchor points lie
/// exactly on the surface.
pub fn make_cylinder_scene<T: Real>(
    opts: &CylinderSceneOptions,
) -> Result<SyntheticScene<T>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let radius = 1.0f64;
    let phi_center = 0.0f64;

    let mut points = Vec::new();
    for i in 0..opts.anchor_rows {
        for j in 0..opts.anchor_cols {
            let fi = (i as f64 + 0.5) / opts.anchor_rows as f64;
            let fj = (j as f64 + 0.5) / opts.anchor_cols as f64;
            let phi = phi_center + (2.0 * fj - 1.0) * opts.phi_half * 0.9
                + rng.random_range(-0.02..0.02);
            let z = (2.0 * fi - 1.0) * opts.z_half * 0.9 + rng.random_range(-0.02..0.02);
            points.push(WorldPoint::new(
                r::<T>(radius * phi.cos()),
                r::<T>(radius * phi.sin()),
                r::<T>(z),
            ));
        }
    }

    let h = opts.height as f64;
    let w = opts.width as f64;
    let patch_center = [radius, 0.0, 0.0];
    let mut cameras = Vec::with_capacity(opts.images);
    let mut focal = 2.2 * w.min(h);
    let mut tries = 0;
    'cams: loop {
        tries += 1;
        if tries > 12 {
            return Err(SynthError::GenerationFailed("cylinder camera placement failed"));
        }
        cameras.clear();
        let mut local = rng.clone();
        for k in 0..opts.images {
            let f = (k as f64 + 0.5) / opts.images as f64;
            let ang = phi_center + (2.0 * f - 1.0) * 0.5 + local.random_range(-0.02..0.02);
            let rho = 4.0 + local.random_range(-0.2..0.2);
            let center = [rho * ang.cos(), rho * ang.sin(), local.random_range(-0.6..0.6)];
            let cam = pinhole::<T>(&center, &patch_center, focal, h / 2.0, w / 2.0)
                .ok_or(SynthError::GenerationFailed("pinhole construction"))?;
            cameras.push(cam);
        }
        let margin = r::<T>(0.08) * r::<T>(h.min(w));
        for p in &points {
            for cam in &cameras {
                let ip = cam.project(p).map_err(SynthError::from)?;
                let hh = r::<T>(h);
                let ww = r::<T>(w);
                if ip.u < margin || ip.u > hh - margin || ip.v < margin || ip.v > ww - margin {
                    focal *= 0.85;
                    continue 'cams;
                }
            }
        }
        rng = local;
        break;
    }

    let mut marks = Vec::with_capacity(opts.marks);
    for _ in 0..opts.marks {
        let s = radius * rng.random_range(-opts.phi_half..opts.phi_half);
        let t = rng.random_range(-opts.z_half..opts.z_half);
        let amp = if rng.random::<bool>() { 0.45 } else { -0.45 };
        marks.push(Mark {
            uv: (r::<T>(s), r::<T>(t)),
            amp: r::<T>(amp),
            sigma: r::<T>(rng.random_range(0.005..0.012)),
        });
    }

    Ok(SyntheticScene {
        points,
        cameras,
        sigma: T::zero(),
        height: opts.height,
        width: opts.width,
        surface: Some(SurfaceKind::Cylinder {
            radius: r::<T>(radius),
            z_min: r::<T>(-opts.z_half),
            z_max: r::<T>(opts.z_half),
            phi_center: r::<T>(phi_center),
            phi_half: r::<T>(opts.phi_half),
        }),
        texture: Some(TextureSpec {
            seed: opts.seed ^ 0xA5A5_5A5A,
            cell: r::<T>(0.02),
            octaves: 3,
            contrast: r::<T>(opts.contrast),
            base: r::<T>(0.5),
            marks,
        }),
    })
}

/// Pinhole render of the scene's textured surface, one gray image per camera.
pub fn render_textured_scene<T: Real>(
    scene: &SyntheticScene<T>,
) -> Result<Vec<GrayImage<T>>, SynthError> {
    let surface = scene.surface.as_ref().ok_or(SynthError::MissingSurface)?;
    let texture = scene.texture.as_ref().ok_or(SynthError::MissingSurface)?;
    let mut images = Vec::with_capacity(scene.cameras.len());
    for cam in &scene.cameras {
        images.push(render_one(cam, surface, texture, scene.height, scene.width)?);
    }
    Ok(images)
}

fn render_one<T: Real>(
    cam: &ProjectionMatrix<T>,
    surface: &SurfaceKind<T>,
    texture: &TextureSpec<T>,
    height: usize,
    width: usize,
) -> Result<GrayImage<T>, SynthError> {
    // camera center and backprojection from the 3x4 matrix
    let m: Vec<Vec<f64>> = (0..3)
        .map(|i| (0..3).map(|j| cam.row(i)[j].to_f64().unwrap()).collect())
        .collect();
    let p4: Vec<f64> = (0..3).map(|i| cam.row(i)[3].to_f64().unwrap()).collect();
    let minv = linalg::invert(&m, &1e-14).map_err(|_| SynthError::GenerationFailed("singular camera"))?;
    let center = [
        -(minv[0][0] * p4[0] + minv[0][1] * p4[1] + minv[0][2] * p4[2]),
        -(minv[1][0] * p4[0] + minv[1][1] * p4[1] + minv[1][2] * p4[2]),
        -(minv[2][0] * p4[0] + minv[2][1] * p4[1] + minv[2][2] * p4[2]),
    ];

    let mut data = vec![T::zero(); height * width];
    for row in 0..height {
        for col in 0..width {
            let u = row as f64 + 0.5;
            let v = col as f64 + 0.5;
            let dir = [
                minv[0][0] * u + minv[0][1] * v + minv[0][2],
                minv[1][0] * u + minv[1][1] * v + minv[1][2],
                minv[2][0] * u + minv[2][1] * v + minv[2][2],
            ];
            let value = match hit_surface(surface, &center, &dir) {
                Some((s, t)) => texture_value(texture, s, t),
                None => r::<T>(0.5),
            };
            data[row * width + col] = value;
        }
    }
    GrayImage::new(height, width, data).map_err(|_| SynthError::GenerationFailed("render bounds"))
}

fn hit_surface<T: Real>(
    surface: &SurfaceKind<T>,
    c: &[f64; 3],
    d: &[f64; 3],
) -> Option<(T, T)> {
    match surface {
        SurfaceKind::Plane { origin, u_axis, v_axis, half_u, half_v } => {
            let o = [
                origin.x.to_f64().unwrap(),
                origin.y.to_f64().unwrap(),
                origin.z.to_f64().unwrap(),
            ];
            let ua = [
                u_axis[0].to_f64().unwrap(),
                u_axis[1].to_f64().unwrap(),
                u_axis[2].to_f64().unwrap(),
            ];
            let va = [
                v_axis[0].to_f64().unwrap(),
                v_axis[1].to_f64().unwrap(),
                v_axis[2].to_f64().unwrap(),
            ];
            let n = cross_f64(&ua, &va);
            let dn = d[0] * n[0] + d[1] * n[1] + d[2] * n[2];
            if dn.abs() < 1e-12 {
                return None;
            }
            let lam = ((o[0] - c[0]) * n[0] + (o[1] - c[1]) * n[1] + (o[2] - c[2]) * n[2]) / dn;
            if lam <= 0.0 {
                return None;
            }
            let p = [c[0] + lam * d[0], c[1] + lam * d[1], c[2] + lam * d[2]];
            let rel = [p[0] - o[0], p[1] - o[1], p[2] - o[2]];
            let s = rel[0] * ua[0] + rel[1] * ua[1] + rel[2] * ua[2];
            let t = rel[0] * va[0] + rel[1] * va[1] + rel[2] * va[2];
            if s.abs() <= half_u.to_f64().unwrap() && t.abs() <= half_v.to_f64().unwrap() {
                Some((r(s), r(t)))
            } else {
                None
            }
        }
        SurfaceKind::Cylinder { radius, z_min, z_max, phi_center, phi_half } => {
            let rr = radius.to_f64().unwrap();
            let a = d[0] * d[0] + d[1] * d[1];
            if a < 1e-18 {
                return None;
            }
            let b = 2.0 * (c[0] * d[0] + c[1] * d[1]);
            let q = c[0] * c[0] + c[1] * c[1] - rr * rr;
            let disc = b * b - 4.0 * a * q;
            if disc <= 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            for lam in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                if lam <= 0.0 {
                    continue;
                }
                let p = [c[0] + lam * d[0], c[1] + lam * d[1], c[2] + lam * d[2]];
                let phi = p[1].atan2(p[0]);
                let mut dphi = phi - phi_center.to_f64().unwrap();
                while dphi > std::f64::consts::PI {
                    dphi -= 2.0 * std::f64::consts::PI;
                }
                while dphi < -std::f64::consts::PI {
                    dphi += 2.0 * std::f64::consts::PI;
                }
                if dphi.abs() <= phi_half.to_f64().unwrap()
                    && p[2] >= z_min.to_f64().unwrap()
                    && p[2] <= z_max.to_f64().unwrap()
                {
                    return Some((r(rr * dphi), r(p[2])));
                }
            }
            None
        }
        SurfaceKind::Sphere { center, radius, phi_center, phi_half, theta_half } => {
            let rr = radius.to_f64().unwrap();
            let cc = [
                center.x.to_f64().unwrap(),
                center.y.to_f64().unwrap(),
                center.z.to_f64().unwrap(),
            ];
            let oc = [c[0] - cc[0], c[1] - cc[1], c[2] - cc[2]];
            let a = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            let b = 2.0 * (oc[0] * d[0] + oc[1] * d[1] + oc[2] * d[2]);
            let q = oc[0] * oc[0] + oc[1] * oc[1] + oc[2] * oc[2] - rr * rr;
            let disc = b * b - 4.0 * a * q;
            if disc <= 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            for lam in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                if lam <= 0.0 {
                    continue;
                }
                let p = [c[0] + lam * d[0] - cc[0], c[1] + lam * d[1] - cc[1], c[2] + lam * d[2] - cc[2]];
                let phi = p[1].atan2(p[0]);
                let theta = (p[2] / rr).asin();
                let dphi = phi - phi_center.to_f64().unwrap();
                if dphi.abs() <= phi_half.to_f64().unwrap() && theta.abs() <= theta_half.to_f64().unwrap()
                {
                    return Some((r(rr * dphi), r(rr * theta)));
                }
            }
            None
        }
    }
}

/// Band-limited value noise plus Gaussian marks, clamped into [0, 1].
pub fn texture_value<T: Real>(tex: &TextureSpec<T>, s: T, t: T) -> T {
    let sf = s.to_f64().unwrap();
    let tf = t.to_f64().unwrap();
    let cell = tex.cell.to_f64().unwrap();
    let mut acc = 0.0;
    let mut amp = 1.0;
    let mut total = 0.0;
    let mut freq = 1.0;
    for _ in 0..tex.octaves {
        acc += amp * value_noise(sf * freq / cell, tf * freq / cell, tex.seed.wrapping_add(freq as u64));
        total += amp;
        amp *= 0.55;
        freq *= 2.0;
    }
    let noise = acc / total - 0.5;
    let mut v = tex.base.to_f64().unwrap() + tex.contrast.to_f64().unwrap() * 2.0 * noise;
    for mark in &tex.marks {
        let du = sf - mark.uv.0.to_f64().unwrap();
        let dv = tf - mark.uv.1.to_f64().unwrap();
        let sg = mark.sigma.to_f64().unwrap();
        v += mark.amp.to_f64().unwrap() * (-(du * du + dv * dv) / (2.0 * sg * sg)).exp();
    }
    r(v.clamp(0.01, 0.99))
}

fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let ix = x.floor();
    let iy = y.floor();
    let fx = x - ix;
    let fy = y - iy;
    let sx = fx * fx * (3.0 - 2.0 * fx);
    let sy = fy * fy * (3.0 - 2.0 * fy);
    let (ix, iy) = (ix as i64, iy as i64);
    let v00 = hash01(ix, iy, seed);
    let v10 = hash01(ix + 1, iy, seed);
    let v01 = hash01(ix, iy + 1, seed);
    let v11 = hash01(ix + 1, iy + 1, seed);
    let a = v00 + sx * (v10 - v00);
    let b = v01 + sx * (v11 - v01);
    a + sy * (b - a)
}

fn hash01(ix: i64, iy: i64, seed: u64) -> f64 {
    let mut h = seed
        ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    h = h.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Gauge-free accuracy: fit the projective transform on the first five point
/// pairs, then report the worst transformed-versus-true distance over the
/// remaining points, normalized by scene diameter.
pub fn gauge_residual<T: Real>(
    est: &SolutionGroup<T>,
    truth: &SyntheticScene<T>,
) -> Result<T, GeometryError> {
    if est.points.len() < 6 || truth.points.len() != est.points.len() {
        return Err(GeometryError::InsufficientData("need matching groups with >= 6 points"));
    }
    let t = fit_projective_transform(&est.points[..5], &truth.points[..5])?;
    let diam = truth.diameter().max(T::min_positive_value());
    let mut worst = T::zero();
    for (e, g) in est.points.iter().zip(&truth.points).skip(5) {
        let mapped = t.apply_point(e, &r(1e-12))?;
        worst = worst.max(mapped.dist(g));
    }
    Ok(worst / diam)
}
