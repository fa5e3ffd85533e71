//! Projective-geometry types and the numerically careful primitives shared by
//! every solver: projection, eigen-based triangulation and camera resection,
//! the three-point determinant `xi`, and projective (re-)gauging transforms.

use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::scalar::{r, Field, Real};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("projection depth near zero")]
    DepthNearZero,
    #[error("degenerate geometry (homogeneous point at infinity)")]
    DegenerateGeometry,
    #[error("rank-deficient system")]
    RankDeficient,
    #[error("gauge scale zero: projection entry (3,4) vanishes")]
    GaugeScaleZero,
    #[error("singular transform-fitting system")]
    SingularSystem,
    #[error("transformed point lands at infinity")]
    PointAtInfinity,
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("eigensolver did not converge")]
    NotConverged,
    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),
}

impl From<LinalgError> for GeometryError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::Singular => GeometryError::SingularSystem,
            LinalgError::NotSymmetric => GeometryError::NotSymmetric,
            LinalgError::NotConverged => GeometryError::NotConverged,
            LinalgError::Dimension => GeometryError::InsufficientData("dimension mismatch"),
        }
    }
}

/// Numerical tolerances. `rank_rel` is relative to the largest eigenvalue of
/// the Gram matrix in eigen-based solves; `depth` guards homogeneous
/// denominators.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances<T> {
    pub rank_rel: T,
    pub depth: T,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        Tolerances { rank_rel: r(1e-10), depth: r(1e-12) }
    }
}

/// A 3-D point in scene coordinates (gauge units, or centimeters once a
/// metric seeding has been applied).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldPoint<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Clone> WorldPoint<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        WorldPoint { x, y, z }
    }

    pub fn coords(&self) -> [T; 3] {
        [self.x.clone(), self.y.clone(), self.z.clone()]
    }

    pub fn homogeneous(&self) -> [T; 4]
    where
        T: Field,
    {
        [self.x.clone(), self.y.clone(), self.z.clone(), T::one()]
    }
}

impl<T: Real> WorldPoint<T> {
    pub fn dist(&self, other: &WorldPoint<T>) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// A 2-D pixel location. `u` runs along image rows in `[0, H]`, `v` along
/// columns in `[0, W]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePoint<T> {
    pub u: T,
    pub v: T,
}

impl<T: Clone> ImagePoint<T> {
    pub fn new(u: T, v: T) -> Self {
        ImagePoint { u, v }
    }
}

impl<T: Real> ImagePoint<T> {
    pub fn dist(&self, other: &ImagePoint<T>) -> T {
        let du = self.u - other.u;
        let dv = self.v - other.v;
        (du * du + dv * dv).sqrt()
    }
}

/// The five canonical world points used to pin the projective gauge.
pub fn canonical_gauge_points<T: Field>() -> [WorldPoint<T>; 5] {
    let o = T::zero;
    let i = T::one;
    [
        WorldPoint::new(o(), o(), o()),
        WorldPoint::new(o(), o(), i()),
        WorldPoint::new(o(), i(), o()),
        WorldPoint::new(i(), o(), o()),
        WorldPoint::new(i(), i(), i()),
    ]
}

/// 3x4 projection matrix with the bottom-right entry fixed to 1 (the gauge
/// choice used throughout this crate).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix<T> {
    rows: [[T; 4]; 3],
}

impl<T: Field> ProjectionMatrix<T> {
    /// Rescales so entry (3,4) is exactly one. Fails when that entry's
    /// magnitude does not exceed `min_scale`.
    pub fn new_with(rows: [[T; 4]; 3], min_scale: &T) -> Result<Self, GeometryError> {
        let s = rows[2][3].clone();
        if s.abs() <= *min_scale {
            return Err(GeometryError::GaugeScaleZero);
        }
        let mut out = rows;
        for row in out.iter_mut() {
            for v in row.iter_mut() {
                *v = v.clone() / s.clone();
            }
        }
        out[2][3] = T::one();
        Ok(ProjectionMatrix { rows: out })
    }

    pub fn rows(&self) -> &[[T; 4]; 3] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[T; 4] {
        &self.rows[i]
    }

    /// Row-vector dot homogeneous point.
    pub fn row_dot(&self, i: usize, x: &WorldPoint<T>) -> T {
        let row = &self.rows[i];
        row[0].clone() * x.x.clone()
            + row[1].clone() * x.y.clone()
            + row[2].clone() * x.z.clone()
            + row[3].clone()
    }
}

impl<T: Real> ProjectionMatrix<T> {
    pub fn new(rows: [[T; 4]; 3]) -> Result<Self, GeometryError> {
        Self::new_with(rows, &r(1e-300))
    }

    pub fn project(&self, x: &WorldPoint<T>) -> Result<ImagePoint<T>, GeometryError> {
        project(self, x)
    }
}

/// Dehomogenized projection of a world point.
pub fn project_with<T: Field>(
    p: &ProjectionMatrix<T>,
    x: &WorldPoint<T>,
    depth_tol: &T,
) -> Result<ImagePoint<T>, GeometryError> {
    let den = p.row_dot(2, x);
    if den.abs() <= *depth_tol {
        return Err(GeometryError::DepthNearZero);
    }
    Ok(ImagePoint::new(p.row_dot(0, x) / den.clone(), p.row_dot(1, x) / den))
}

pub fn project<T: Real>(
    p: &ProjectionMatrix<T>,
    x: &WorldPoint<T>,
) -> Result<ImagePoint<T>, GeometryError> {
    project_with(p, x, &Tolerances::default().depth)
}

/// Signed determinant of the 2x2 matrix with columns `x3 - x1` and `x3 - x2`.
pub fn xi<T: Field>(x1: &ImagePoint<T>, x2: &ImagePoint<T>, x3: &ImagePoint<T>) -> T {
    let a = x3.u.clone() - x1.u.clone();
    let b = x3.u.clone() - x2.u.clone();
    let c = x3.v.clone() - x1.v.clone();
    let d = x3.v.clone() - x2.v.clone();
    a * d - c * b
}

/// Unit eigenvector attaining the minimum Rayleigh quotient of a symmetric
/// PSD matrix, with the sign fixed so the largest-magnitude component is
/// positive.
///
/// In builds with debug assertions the result is spot-checked against 100
/// seeded random unit vectors.
pub fn smallest_eigenvector<T: Real>(a: &[Vec<T>]) -> Result<Vec<T>, GeometryError> {
    let (_, v) = linalg::smallest_eigenpair(a)?;
    #[cfg(debug_assertions)]
    {
        use rand::{Rng, SeedableRng};
        let n = a.len();
        let quad = |u: &[T]| -> T {
            let mut s = T::zero();
            for i in 0..n {
                for j in 0..n {
                    s = s + u[i] * a[i][j] * u[j];
                }
            }
            s
        };
        let vq = quad(&v);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        let slack = r::<T>(1e-9) * (T::one() + vq.abs());
        for _ in 0..100 {
            let mut u: Vec<T> = (0..n).map(|_| r::<T>(rng.random_range(-1.0..1.0))).collect();
            let nu = linalg::norm2(&u);
            if nu <= T::epsilon() {
                continue;
            }
            u.iter_mut().for_each(|x| *x = *x / nu);
            debug_assert!(vq <= quad(&u) + slack, "Rayleigh optimality violated");
        }
    }
    Ok(v)
}

/// Recovers a world point from two or more cameras by the stacked 2Nx4
/// homogeneous system: the smallest eigenvector of its Gram matrix,
/// dehomogenized by the fourth coordinate.
pub fn triangulate<T: Real>(
    cams: &[ProjectionMatrix<T>],
    obs: &[ImagePoint<T>],
    tol: &Tolerances<T>,
) -> Result<WorldPoint<T>, GeometryError> {
    if cams.len() < 2 {
        return Err(GeometryError::InsufficientData("triangulate needs >= 2 views"));
    }
    if cams.len() != obs.len() {
        return Err(GeometryError::InsufficientData("cams/observations length mismatch"));
    }
    let mut gram = vec![vec![T::zero(); 4]; 4];
    let mut accumulate = |row: [T; 4]| {
        for i in 0..4 {
            for j in 0..4 {
                gram[i][j] = gram[i][j] + row[i] * row[j];
            }
        }
    };
    for (p, x) in cams.iter().zip(obs) {
        let p1 = p.row(0);
        let p2 = p.row(1);
        let p3 = p.row(2);
        accumulate([
            p1[0] - x.u * p3[0],
            p1[1] - x.u * p3[1],
            p1[2] - x.u * p3[2],
            p1[3] - x.u * p3[3],
        ]);
        accumulate([
            p2[0] - x.v * p3[0],
            p2[1] - x.v * p3[1],
            p2[2] - x.v * p3[2],
            p2[3] - x.v * p3[3],
        ]);
    }
    let eig = linalg::sym_eigen(&gram)?;
    let lmax = eig.values[3].abs();
    if lmax.is_zero() || eig.values[1].abs() <= tol.rank_rel * lmax {
        return Err(GeometryError::RankDeficient);
    }
    let v = &eig.vectors[0];
    if v[3].abs() <= tol.depth {
        return Err(GeometryError::DegenerateGeometry);
    }
    Ok(WorldPoint::new(v[0] / v[3], v[1] / v[3], v[2] / v[3]))
}

/// Camera resection: the 12-vector from the smallest eigenvector of the
/// 12x12 Gram of the stacked projection equations, regauged so entry (3,4)
/// equals one.
pub fn camera_from_points<T: Real>(
    points: &[WorldPoint<T>],
    obs: &[ImagePoint<T>],
    tol: &Tolerances<T>,
) -> Result<ProjectionMatrix<T>, GeometryError> {
    if points.len() < 6 {
        return Err(GeometryError::InsufficientData("camera resection needs >= 6 points"));
    }
    if points.len() != obs.len() {
        return Err(GeometryError::InsufficientData("points/observations length mismatch"));
    }
    // center and scale the observations; conditioning only, undone below
    let k = T::from_usize(obs.len()).unwrap();
    let cu = obs.iter().map(|p| p.u).sum::<T>() / k;
    let cv = obs.iter().map(|p| p.v).sum::<T>() / k;
    let rms = (obs
        .iter()
        .map(|p| {
            let du = p.u - cu;
            let dv = p.v - cv;
            du * du + dv * dv
        })
        .sum::<T>()
        / k)
        .sqrt();
    let s = if rms > T::min_positive_value() { T::one() / rms } else { T::one() };
    let obs: Vec<ImagePoint<T>> =
        obs.iter().map(|p| ImagePoint::new((p.u - cu) * s, (p.v - cv) * s)).collect();

    let mut gram = vec![vec![T::zero(); 12]; 12];
    let mut accumulate = |row: [T; 12]| {
        for i in 0..12 {
            for j in 0..12 {
                gram[i][j] = gram[i][j] + row[i] * row[j];
            }
        }
    };
    let zero = T::zero;
    for (p, x) in points.iter().zip(obs) {
        let h = p.homogeneous();
        accumulate([
            h[0],
            h[1],
            h[2],
            h[3],
            zero(),
            zero(),
            zero(),
            zero(),
            -x.u * h[0],
            -x.u * h[1],
            -x.u * h[2],
            -x.u * h[3],
        ]);
        accumulate([
            zero(),
            zero(),
            zero(),
            zero(),
            h[0],
            h[1],
            h[2],
            h[3],
            -x.v * h[0],
            -x.v * h[1],
            -x.v * h[2],
            -x.v * h[3],
        ]);
    }
    let eig = linalg::sym_eigen(&gram)?;
    let lmax = eig.values[11].abs();
    if lmax.is_zero() || eig.values[1].abs() <= tol.rank_rel * lmax {
        return Err(GeometryError::RankDeficient);
    }
    let v = &eig.vectors[0];
    if v[11].abs() <= tol.rank_rel {
        return Err(GeometryError::GaugeScaleZero);
    }
    let normalized = ProjectionMatrix::new_with(
        [
            [v[0], v[1], v[2], v[3]],
            [v[4], v[5], v[6], v[7]],
            [v[8], v[9], v[10], v[11]],
        ],
        &T::zero(),
    )?;
    // back to pixel coordinates; the third row is untouched so (3,4) stays 1
    let inv = T::one() / s;
    let r0 = normalized.row(0);
    let r1 = normalized.row(1);
    let r2 = normalized.row(2);
    let mut rows = [[T::zero(); 4]; 3];
    for j in 0..4 {
        rows[0][j] = inv * r0[j] + cu * r2[j];
        rows[1][j] = inv * r1[j] + cv * r2[j];
        rows[2][j] = r2[j];
    }
    ProjectionMatrix::new_with(rows, &T::zero())
}

/// Nonsingular 4x4 projective transform with entry (4,4) fixed to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectiveTransform<T> {
    m: [[T; 4]; 4],
}

impl<T: Field> ProjectiveTransform<T> {
    pub fn new_with(m: [[T; 4]; 4], min_pivot: &T) -> Result<Self, GeometryError> {
        let s = m[3][3].clone();
        if s.abs() <= *min_pivot {
            return Err(GeometryError::SingularSystem);
        }
        let mut out = m;
        for row in out.iter_mut() {
            for v in row.iter_mut() {
                *v = v.clone() / s.clone();
            }
        }
        out[3][3] = T::one();
        let as_vec: Vec<Vec<T>> = out.iter().map(|r| r.to_vec()).collect();
        if linalg::determinant(&as_vec).abs() <= *min_pivot {
            return Err(GeometryError::SingularSystem);
        }
        Ok(ProjectiveTransform { m: out })
    }

    pub fn identity() -> Self {
        let mut m = [[T::zero(), T::zero(), T::zero(), T::zero()],
                     [T::zero(), T::zero(), T::zero(), T::zero()],
                     [T::zero(), T::zero(), T::zero(), T::zero()],
                     [T::zero(), T::zero(), T::zero(), T::zero()]];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = T::one();
        }
        ProjectiveTransform { m }
    }

    pub fn matrix(&self) -> &[[T; 4]; 4] {
        &self.m
    }

    pub fn apply_homogeneous(&self, x: &WorldPoint<T>) -> [T; 4] {
        let h = x.homogeneous();
        let mut out = [T::zero(), T::zero(), T::zero(), T::zero()];
        for (i, row) in self.m.iter().enumerate() {
            let mut acc = T::zero();
            for (a, b) in row.iter().zip(h.iter()) {
                acc = acc + a.clone() * b.clone();
            }
            out[i] = acc;
        }
        out
    }

    /// Dehomogenized image of a world point under the transform.
    pub fn apply_point(&self, x: &WorldPoint<T>, min_denom: &T) -> Result<WorldPoint<T>, GeometryError> {
        let h = self.apply_homogeneous(x);
        if h[3].abs() <= *min_denom {
            return Err(GeometryError::PointAtInfinity);
        }
        Ok(WorldPoint::new(
            h[0].clone() / h[3].clone(),
            h[1].clone() / h[3].clone(),
            h[2].clone() / h[3].clone(),
        ))
    }
}

impl<T: Real> ProjectiveTransform<T> {
    pub fn new(m: [[T; 4]; 4]) -> Result<Self, GeometryError> {
        Self::new_with(m, &r(1e-300))
    }
}

/// A reconstruction: M world points plus the N projection matrices that
/// reproject them.
#[derive(Debug, Clone)]
pub struct SolutionGroup<T> {
    pub points: Vec<WorldPoint<T>>,
    pub cameras: Vec<ProjectionMatrix<T>>,
}

/// M x N table of image observations with per-cell visibility.
#[derive(Debug, Clone)]
pub struct CorrespondenceSet<T> {
    points: usize,
    images: usize,
    cells: Vec<Option<ImagePoint<T>>>,
}

impl<T: Clone> CorrespondenceSet<T> {
    pub fn new(points: usize, images: usize) -> Self {
        CorrespondenceSet { points, images, cells: vec![None; points * images] }
    }

    pub fn from_fn(
        points: usize,
        images: usize,
        mut f: impl FnMut(usize, usize) -> Option<ImagePoint<T>>,
    ) -> Self {
        let mut set = Self::new(points, images);
        for m in 0..points {
            for n in 0..images {
                set.cells[m * images + n] = f(m, n);
            }
        }
        set
    }

    pub fn num_points(&self) -> usize {
        self.points
    }

    pub fn num_images(&self) -> usize {
        self.images
    }

    pub fn get(&self, m: usize, n: usize) -> Option<&ImagePoint<T>> {
        self.cells[m * self.images + n].as_ref()
    }

    pub fn set(&mut self, m: usize, n: usize, value: Option<ImagePoint<T>>) {
        self.cells[m * self.images + n] = value;
    }

    pub fn row_visibility(&self, m: usize) -> usize {
        (0..self.images).filter(|&n| self.get(m, n).is_some()).count()
    }

    pub fn is_fully_visible(&self) -> bool {
        self.cells.iter().all(Option::is_some)
    }

    /// Restriction to the given point and image index subsets (in order).
    pub fn subset(&self, point_idx: &[usize], image_idx: &[usize]) -> CorrespondenceSet<T> {
        CorrespondenceSet::from_fn(point_idx.len(), image_idx.len(), |m, n| {
            self.get(point_idx[m], image_idx[n]).cloned()
        })
    }

    pub fn visible_cells(&self) -> impl Iterator<Item = (usize, usize, &ImagePoint<T>)> {
        let images = self.images;
        self.cells
            .iter()
            .enumerate()
            .filter_map(move |(idx, c)| c.as_ref().map(|p| (idx / images, idx % images, p)))
    }
}

/// Fits the projective transform carrying `src[i]` to `dst[i]`.
///
/// With exactly five pairs the 15-unknown linear system is solved directly;
/// with more pairs the normal equations are used. When `dst` starts with the
/// canonical gauge configuration, the dedicated two-stage construction is
/// used instead so the five images come out exact.
pub fn fit_projective_transform_with<T: Field>(
    src: &[WorldPoint<T>],
    dst: &[WorldPoint<T>],
    min_pivot: &T,
) -> Result<ProjectiveTransform<T>, GeometryError> {
    if src.len() < 5 || src.len() != dst.len() {
        return Err(GeometryError::InsufficientData("transform fit needs >= 5 pairs"));
    }
    let canonical = canonical_gauge_points::<T>();
    if dst.len() == 5 && dst == &canonical[..] {
        match canonical_gauge_transform_with(src, min_pivot) {
            Ok(t) => return Ok(t),
            // the two-stage construction is vacuous when the first source
            // point sits at the origin; the direct fit below still applies
            Err(GeometryError::SingularSystem) => {}
            Err(e) => return Err(e),
        }
    }

    // three equations per pair in the 15 unknowns (t44 = 1)
    let rows = 3 * src.len();
    let mut a = vec![vec![T::zero(); 15]; rows];
    let mut b = vec![T::zero(); rows];
    for (k, (s, d)) in src.iter().zip(dst).enumerate() {
        let h = s.homogeneous();
        let dc = d.coords();
        for coord in 0..3 {
            let row = &mut a[3 * k + coord];
            for j in 0..4 {
                row[4 * coord + j] = h[j].clone();
            }
            for j in 0..3 {
                row[12 + j] = -(dc[coord].clone() * h[j].clone());
            }
            b[3 * k + coord] = dc[coord].clone();
        }
    }
    let sol = if src.len() == 5 {
        linalg::solve_linear(a, b, min_pivot)
    } else {
        // normal equations
        let mut ata = vec![vec![T::zero(); 15]; 15];
        let mut atb = vec![T::zero(); 15];
        for (row, rhs) in a.iter().zip(&b) {
            for i in 0..15 {
                for j in 0..15 {
                    ata[i][j] = ata[i][j].clone() + row[i].clone() * row[j].clone();
                }
                atb[i] = atb[i].clone() + row[i].clone() * rhs.clone();
            }
        }
        linalg::solve_linear(ata, atb, min_pivot)
    }
    .map_err(|_| GeometryError::SingularSystem)?;

    let m = [
        [sol[0].clone(), sol[1].clone(), sol[2].clone(), sol[3].clone()],
        [sol[4].clone(), sol[5].clone(), sol[6].clone(), sol[7].clone()],
        [sol[8].clone(), sol[9].clone(), sol[10].clone(), sol[11].clone()],
        [sol[12].clone(), sol[13].clone(), sol[14].clone(), T::one()],
    ];
    ProjectiveTransform::new_with(m, min_pivot)
}

pub fn fit_projective_transform<T: Real>(
    src: &[WorldPoint<T>],
    dst: &[WorldPoint<T>],
) -> Result<ProjectiveTransform<T>, GeometryError> {
    fit_projective_transform_with(src, dst, &r(1e-10))
}

/// Transform sending five anchor points exactly onto the canonical gauge
/// configuration, built as the composition of a 15-variable interpolation
/// step and a diagonal normalization step.
pub fn canonical_gauge_transform_with<T: Field>(
    src: &[WorldPoint<T>],
    min_pivot: &T,
) -> Result<ProjectiveTransform<T>, GeometryError> {
    if src.len() != 5 {
        return Err(GeometryError::InsufficientData("canonical gauge fit needs exactly 5 points"));
    }
    let mut a = vec![vec![T::zero(); 15]; 15];
    let mut b = vec![T::zero(); 15];
    let h: Vec<[T; 4]> = src.iter().map(WorldPoint::homogeneous).collect();

    // coefficient helpers over the unknown vector [t1 | t2 | t3 | t41..t43]
    let put_row = |row: &mut Vec<T>, block: usize, hom: &[T; 4], sign_pos: bool| {
        for j in 0..4 {
            let v = hom[j].clone();
            row[4 * block + j] = if sign_pos { v } else { -v };
        }
    };
    let put_t4 = |row: &mut Vec<T>, p: &WorldPoint<T>| {
        let c = p.coords();
        for j in 0..3 {
            row[12 + j] = -c[j].clone();
        }
    };

    let mut idx = 0;
    // first point maps to (0,0,0,1)
    for block in 0..3 {
        put_row(&mut a[idx], block, &h[0], true);
        idx += 1;
    }
    {
        let c = src[0].coords();
        for j in 0..3 {
            a[idx][12 + j] = c[j].clone();
        }
        idx += 1;
    }
    // second point: coords 1,2 vanish, coord 3 equals coord 4
    for block in [0usize, 1] {
        put_row(&mut a[idx], block, &h[1], true);
        idx += 1;
    }
    put_row(&mut a[idx], 2, &h[1], true);
    put_t4(&mut a[idx], &src[1]);
    b[idx] = T::one();
    idx += 1;
    // third point: coords 1,3 vanish, coord 2 equals coord 4
    put_row(&mut a[idx], 0, &h[2], true);
    idx += 1;
    put_row(&mut a[idx], 1, &h[2], true);
    put_t4(&mut a[idx], &src[2]);
    b[idx] = T::one();
    idx += 1;
    put_row(&mut a[idx], 2, &h[2], true);
    idx += 1;
    // fourth point: coord 1 equals coord 4, coords 2,3 vanish
    put_row(&mut a[idx], 0, &h[3], true);
    put_t4(&mut a[idx], &src[3]);
    b[idx] = T::one();
    idx += 1;
    for block in [1usize, 2] {
        put_row(&mut a[idx], block, &h[3], true);
        idx += 1;
    }
    // fifth point: all three coordinates agree
    for block in [1usize, 2] {
        put_row(&mut a[idx], 0, &h[4], true);
        for j in 0..4 {
            let v = h[4][j].clone();
            a[idx][4 * block + j] = -v;
        }
        idx += 1;
    }
    debug_assert_eq!(idx, 15);

    let t = linalg::solve_linear(a, b, min_pivot).map_err(|_| GeometryError::SingularSystem)?;
    let mut first = [[T::zero(), T::zero(), T::zero(), T::zero()],
                     [T::zero(), T::zero(), T::zero(), T::zero()],
                     [T::zero(), T::zero(), T::zero(), T::zero()],
                     [T::zero(), T::zero(), T::zero(), T::one()]];
    for i in 0..3 {
        for j in 0..4 {
            first[i][j] = t[4 * i + j].clone();
        }
    }
    for j in 0..3 {
        first[3][j] = t[12 + j].clone();
    }

    // ratio of the first to fourth coordinate of the transformed fifth point
    let tmp = ProjectiveTransform { m: first.clone() };
    let h5 = tmp.apply_homogeneous(&src[4]);
    if h5[3].abs() <= *min_pivot {
        return Err(GeometryError::SingularSystem);
    }
    let alpha = h5[0].clone() / h5[3].clone();
    let two = T::one() + T::one();
    let three = two.clone() + T::one();
    let two_alpha = two.clone() * alpha.clone();
    if two_alpha.abs() <= *min_pivot {
        return Err(GeometryError::SingularSystem);
    }
    let diag = (three * alpha.clone() - T::one()) / two_alpha.clone();
    if diag.abs() <= *min_pivot {
        // alpha == 1/3 collapses the normalization step
        return Err(GeometryError::SingularSystem);
    }
    let off = (alpha - T::one()) / two_alpha;
    let second = [
        [diag.clone(), T::zero(), T::zero(), T::zero()],
        [T::zero(), diag.clone(), T::zero(), T::zero()],
        [T::zero(), T::zero(), diag, T::zero()],
        [off.clone(), off.clone(), off, T::one()],
    ];

    let mut composed = [[T::zero(), T::zero(), T::zero(), T::zero()],
                        [T::zero(), T::zero(), T::zero(), T::zero()],
                        [T::zero(), T::zero(), T::zero(), T::zero()],
                        [T::zero(), T::zero(), T::zero(), T::zero()]];
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = T::zero();
            for k in 0..4 {
                acc = acc + second[i][k].clone() * first[k][j].clone();
            }
            composed[i][j] = acc;
        }
    }
    ProjectiveTransform::new_with(composed, min_pivot)
}

pub fn canonical_gauge_transform<T: Real>(
    src: &[WorldPoint<T>],
) -> Result<ProjectiveTransform<T>, GeometryError> {
    canonical_gauge_transform_with(src, &r(1e-10))
}

/// Re-gauges a whole solution: points map through `t`, cameras through the
/// inverse, so every reprojection is preserved.
pub fn apply_transform_with<T: Field>(
    group: &SolutionGroup<T>,
    t: &ProjectiveTransform<T>,
    min_denom: &T,
) -> Result<SolutionGroup<T>, GeometryError> {
    let points = group
        .points
        .iter()
        .map(|p| t.apply_point(p, min_denom))
        .collect::<Result<Vec<_>, _>>()?;
    let m: Vec<Vec<T>> = t.matrix().iter().map(|r| r.to_vec()).collect();
    let inv = linalg::invert(&m, min_denom).map_err(|_| GeometryError::SingularSystem)?;
    let cameras = group
        .cameras
        .iter()
        .map(|p| {
            let mut rows = [[T::zero(), T::zero(), T::zero(), T::zero()],
                            [T::zero(), T::zero(), T::zero(), T::zero()],
                            [T::zero(), T::zero(), T::zero(), T::zero()]];
            for i in 0..3 {
                for j in 0..4 {
                    let mut acc = T::zero();
                    for k in 0..4 {
                        acc = acc + p.row(i)[k].clone() * inv[k][j].clone();
                    }
                    rows[i][j] = acc;
                }
            }
            ProjectionMatrix::new_with(rows, min_denom)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SolutionGroup { points, cameras })
}

pub fn apply_transform<T: Real>(
    group: &SolutionGroup<T>,
    t: &ProjectiveTransform<T>,
) -> Result<SolutionGroup<T>, GeometryError> {
    apply_transform_with(group, t, &r(1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::make_scene;

    #[test]
    fn project_hand_case() {
        let p = ProjectionMatrix::new([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 1.0],
        ])
        .unwrap();
        let x = WorldPoint::new(2.0, 4.0, 1.0);
        let ip = project(&p, &x).unwrap();
        assert_eq!((ip.u, ip.v), (1.0, 2.0));
    }

    #[test]
    fn project_zero_depth() {
        let p = ProjectionMatrix::new([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 1.0],
        ])
        .unwrap();
        // third row dots to zero at z = -1
        let x = WorldPoint::new(0.3, 0.4, -1.0);
        assert_eq!(project(&p, &x).unwrap_err(), GeometryError::DepthNearZero);
    }

    #[test]
    fn projection_matches_cross_product_parallelism() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let mut rows = [[0.0f64; 4]; 3];
            for row in rows.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.random_range(-2.0..2.0);
                }
            }
            if rows[2][3].abs() < 0.2 {
                continue;
            }
            let p = match ProjectionMatrix::new(rows) {
                Ok(p) => p,
                Err(_) => continue,
            };
            let x = WorldPoint::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let den = p.row_dot(2, &x);
            if den.abs() < 0.05 {
                continue;
            }
            let ip = project(&p, &x).unwrap();
            // cross product of P[X;1] and [u, v, 1] must vanish
            let h = [p.row_dot(0, &x), p.row_dot(1, &x), den];
            let q = [ip.u, ip.v, 1.0];
            let cross = [
                h[1] * q[2] - h[2] * q[1],
                h[2] * q[0] - h[0] * q[2],
                h[0] * q[1] - h[1] * q[0],
            ];
            let scale = den.abs().max(h[0].abs()).max(h[1].abs());
            for c in cross {
                assert!(c.abs() <= 1e-12 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn xi_examples() {
        let a = ImagePoint::new(0.0f64, 0.0);
        let b = ImagePoint::new(1.0, 0.0);
        let c = ImagePoint::new(0.0, 1.0);
        assert_eq!(xi(&a, &b, &c), 1.0);
        // swapping the first two arguments negates
        assert_eq!(xi(&b, &a, &c), -1.0);
        // collinear triple
        let m = ImagePoint::new(2.0, 2.0);
        let n = ImagePoint::new(3.0, 3.0);
        let o = ImagePoint::new(5.0, 5.0);
        assert_eq!(xi(&m, &n, &o), 0.0);
    }

    #[test]
    fn xi_translation_invariance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let pt = |rng: &mut rand_chacha::ChaCha8Rng| {
                ImagePoint::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0))
            };
            let (a, b, c) = (pt(&mut rng), pt(&mut rng), pt(&mut rng));
            let (du, dv) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let shift = |p: &ImagePoint<f64>| ImagePoint::new(p.u + du, p.v + dv);
            let before = xi(&a, &b, &c);
            let after = xi(&shift(&a), &shift(&b), &shift(&c));
            assert!((before - after).abs() < 1e-12 * (1.0 + before.abs()));
        }
    }

    #[test]
    fn smallest_eigenvector_diagonal_and_identity() {
        let a = vec![
            vec![3.0f64, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, 0.0, 0.5],
        ];
        let v = smallest_eigenvector(&a).unwrap();
        assert!((v[2] - 1.0).abs() < 1e-12 && v[0].abs() < 1e-12 && v[1].abs() < 1e-12);
        // identity: any unit vector is valid, quadratic form must be one
        let eye = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let u = smallest_eigenvector(&eye).unwrap();
        let q: f64 = u.iter().map(|x| x * x).sum();
        assert!((q - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triangulate_recovers_exact_point() {
        let (scene, corr) = make_scene::<f64>(6, 5, 0.0, 77).unwrap();
        let truth = scene.points[0];
        let obs: Vec<ImagePoint<f64>> = (0..5).map(|n| *corr.get(0, n).unwrap()).collect();
        let got = triangulate(&scene.cameras, &obs, &Tolerances::default()).unwrap();
        assert!(got.dist(&truth) < 1e-9);
    }

    #[test]
    fn triangulate_no_parallax_degenerate() {
        let (scene, corr) = make_scene::<f64>(6, 5, 0.0, 78).unwrap();
        let cams = vec![scene.cameras[0].clone(), scene.cameras[0].clone()];
        let obs = vec![*corr.get(0, 0).unwrap(), *corr.get(0, 0).unwrap()];
        let err = triangulate(&cams, &obs, &Tolerances::default()).unwrap_err();
        assert!(matches!(err, GeometryError::RankDeficient | GeometryError::DegenerateGeometry));
    }

    #[test]
    fn triangulate_noisy_beats_random_restarts() {
        use rand::{Rng, SeedableRng};
        let (scene, corr) = make_scene::<f64>(6, 10, 0.0, 79).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(80);
        let mut obs: Vec<ImagePoint<f64>> = (0..10).map(|n| *corr.get(0, n).unwrap()).collect();
        for p in obs.iter_mut() {
            p.u += rng.random_range(-1.0..1.0);
            p.v += rng.random_range(-1.0..1.0);
        }
        let est = triangulate(&scene.cameras, &obs, &Tolerances::default()).unwrap();
        let residual = |x: &WorldPoint<f64>| -> f64 {
            scene
                .cameras
                .iter()
                .zip(&obs)
                .map(|(c, o)| project(c, x).map(|p| p.dist(o).powi(2)).unwrap_or(f64::INFINITY))
                .sum()
        };
        let base = residual(&est);
        for _ in 0..100 {
            let perturbed = WorldPoint::new(
                est.x + rng.random_range(-0.01..0.01),
                est.y + rng.random_range(-0.01..0.01),
                est.z + rng.random_range(-0.01..0.01),
            );
            assert!(base <= residual(&perturbed) + 1e-9);
        }
    }

    #[test]
    fn camera_from_points_recovers_exactly() {
        let (scene, corr) = make_scene::<f64>(8, 5, 0.0, 81).unwrap();
        let pts: Vec<WorldPoint<f64>> = scene.points.clone();
        let obs: Vec<ImagePoint<f64>> = (0..8).map(|m| *corr.get(m, 2).unwrap()).collect();
        let est = camera_from_points(&pts, &obs, &Tolerances::default()).unwrap();
        let truth = &scene.cameras[2];
        for i in 0..3 {
            for j in 0..4 {
                let scale = truth.row(i)[j].abs().max(1.0);
                assert!(
                    (est.row(i)[j] - truth.row(i)[j]).abs() < 1e-8 * scale,
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn camera_from_coplanar_points_rank_deficient() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(82);
        let (scene, _) = make_scene::<f64>(6, 5, 0.0, 83).unwrap();
        let cam = &scene.cameras[0];
        // six points on the z = 0.1 plane
        let pts: Vec<WorldPoint<f64>> = (0..6)
            .map(|_| WorldPoint::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), 0.1))
            .collect();
        let obs: Vec<ImagePoint<f64>> = pts.iter().map(|p| cam.project(p).unwrap()).collect();
        assert_eq!(
            camera_from_points(&pts, &obs, &Tolerances::default()).unwrap_err(),
            GeometryError::RankDeficient
        );
    }

    #[test]
    fn camera_noisy_eigen_optimality() {
        use rand::{Rng, SeedableRng};
        let (scene, corr) = make_scene::<f64>(8, 5, 0.0, 84).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(85);
        let pts = scene.points.clone();
        let mut obs: Vec<ImagePoint<f64>> = (0..8).map(|m| *corr.get(m, 1).unwrap()).collect();
        for p in obs.iter_mut() {
            p.u += rng.random_range(-1.0..1.0);
            p.v += rng.random_range(-1.0..1.0);
        }
        let est = camera_from_points(&pts, &obs, &Tolerances::default()).unwrap();
        // algebraic residual of the stacked system, for a unit 12-vector
        let algebraic = |p: &ProjectionMatrix<f64>| -> f64 {
            let mut vec12 = Vec::new();
            for i in 0..3 {
                vec12.extend_from_slice(p.row(i));
            }
            let norm: f64 = vec12.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut total = 0.0;
            for (x, o) in pts.iter().zip(&obs) {
                let h = x.homogeneous();
                let mut r1 = 0.0;
                let mut r2 = 0.0;
                for j in 0..4 {
                    r1 += vec12[j] * h[j] - o.u * vec12[8 + j] * h[j];
                    r2 += vec12[4 + j] * h[j] - o.v * vec12[8 + j] * h[j];
                }
                total += r1 * r1 + r2 * r2;
            }
            total / (norm * norm)
        };
        assert!(algebraic(&est) <= algebraic(&scene.cameras[1]) + 1e-12);
    }

    #[test]
    fn fit_transform_identity_on_canonical() {
        let canon = canonical_gauge_points::<f64>();
        let t = fit_projective_transform(&canon, &canon).unwrap();
        for (i, row) in t.matrix().iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-9, "entry ({i},{j}) = {v}");
            }
        }
    }

    #[test]
    fn fit_transform_roundtrip_recovers_random_transform() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(86);
        for _ in 0..20 {
            let mut m = [[0.0f64; 4]; 4];
            for row in m.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
            }
            m[3][3] = 1.0 + rng.random_range(0.2..1.0);
            let t0 = match ProjectiveTransform::new(m) {
                Ok(t) => t,
                Err(_) => continue,
            };
            let src: Vec<WorldPoint<f64>> = (0..5)
                .map(|_| {
                    WorldPoint::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect();
            let dst: Result<Vec<WorldPoint<f64>>, _> =
                src.iter().map(|p| t0.apply_point(p, &1e-9)).collect();
            let dst = match dst {
                Ok(d) => d,
                Err(_) => continue,
            };
            let fitted = match fit_projective_transform(&src, &dst) {
                Ok(f) => f,
                Err(_) => continue,
            };
            for i in 0..4 {
                for j in 0..4 {
                    let a = fitted.matrix()[i][j];
                    let b = t0.matrix()[i][j];
                    assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "entry ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn fit_transform_coplanar_anchor_rejected() {
        // four of the five source points on the z = 0 plane
        let src = [
            WorldPoint::new(0.0, 0.0, 0.0),
            WorldPoint::new(1.0, 0.0, 0.0),
            WorldPoint::new(0.0, 1.0, 0.0),
            WorldPoint::new(1.0, 1.0, 0.0),
            WorldPoint::new(0.3, 0.4, 1.0),
        ];
        let dst = canonical_gauge_points::<f64>();
        assert_eq!(
            fit_projective_transform(&src, &dst).unwrap_err(),
            GeometryError::SingularSystem
        );
    }

    #[test]
    fn canonical_gauge_maps_five_points_exactly() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(87);
        let canon = canonical_gauge_points::<f64>();
        for _ in 0..20 {
            let src: Vec<WorldPoint<f64>> = (0..5)
                .map(|_| {
                    WorldPoint::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect();
            let t = match canonical_gauge_transform(&src) {
                Ok(t) => t,
                Err(_) => continue,
            };
            for (s, c) in src.iter().zip(&canon) {
                let mapped = t.apply_point(s, &1e-12).unwrap();
                assert!(mapped.dist(c) < 1e-8);
            }
        }
    }

    #[test]
    fn apply_transform_preserves_reprojections() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(88);
        let (scene, corr) = make_scene::<f64>(7, 5, 0.0, 89).unwrap();
        let group = scene.group();
        let mut m = [[0.0f64; 4]; 4];
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.random_range(-0.3..0.3);
            }
        }
        for i in 0..4 {
            m[i][i] += 1.0;
        }
        let t = ProjectiveTransform::new(m).unwrap();
        let moved = apply_transform(&group, &t).unwrap();
        for (mth, n, obs) in corr.visible_cells() {
            let reproj = project(&moved.cameras[n], &moved.points[mth]).unwrap();
            assert!(reproj.dist(obs) < 1e-9, "cell ({mth},{n})");
        }
        // identity keeps the group unchanged
        let same = apply_transform(&group, &ProjectiveTransform::identity()).unwrap();
        for (a, b) in same.points.iter().zip(&group.points) {
            assert!(a.dist(b) < 1e-12);
        }
    }

    #[test]
    fn apply_transform_point_at_infinity() {
        let group = SolutionGroup {
            points: vec![WorldPoint::new(1.0, 0.0, 0.0)],
            cameras: vec![],
        };
        // fourth row kills the homogeneous coordinate of (1,0,0)
        let t = ProjectiveTransform::new([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [-1.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(apply_transform(&group, &t).unwrap_err(), GeometryError::PointAtInfinity);
    }

    #[test]
    fn project_triangulate_roundtrip_property() {
        for seed in 0..5 {
            let (scene, corr) = make_scene::<f64>(8, 6, 0.0, 200 + seed).unwrap();
            let diam = scene.diameter();
            for m in 0..8 {
                let obs: Vec<ImagePoint<f64>> = (0..6).map(|n| *corr.get(m, n).unwrap()).collect();
                let got = triangulate(&scene.cameras, &obs, &Tolerances::default()).unwrap();
                assert!(got.dist(&scene.points[m]) <= 1e-6 * diam);
            }
        }
    }
}
