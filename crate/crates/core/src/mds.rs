//! Classical multidimensional scaling of a measured distance matrix, and the
//! quaternion-based similarity fit used to carry gauge reconstructions into
//! the metric frame.

use thiserror::Error;

use crate::geometry::WorldPoint;
use crate::linalg;
use crate::scalar::{r, Real};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MdsError {
    #[error("distance matrix is not embeddable in three dimensions")]
    NotEmbeddable,
    #[error("distance measurements incomplete or inconsistent")]
    BadMeasurements,
    #[error("insufficient input: {0}")]
    InsufficientInput(&'static str),
}

/// Complete pairwise Euclidean distances over a set of point ids.
#[derive(Debug, Clone)]
pub struct DistanceMeasurements<T> {
    pub ids: Vec<usize>,
    dist: Vec<T>, // row-major K x K
}

impl<T: Real> DistanceMeasurements<T> {
    /// Builds from a pair list `(i, j, d)` over `ids`; all K(K-1)/2 pairs
    /// must be present with positive distances.
    pub fn from_pairs(ids: Vec<usize>, pairs: &[(usize, usize, T)]) -> Result<Self, MdsError> {
        let k = ids.len();
        if k < 4 {
            return Err(MdsError::InsufficientInput("need at least four points"));
        }
        let slot = |id: usize| ids.iter().position(|&x| x == id);
        let mut dist = vec![T::nan(); k * k];
        for i in 0..k {
            dist[i * k + i] = T::zero();
        }
        for &(i, j, d) in pairs {
            let (a, b) = match (slot(i), slot(j)) {
                (Some(a), Some(b)) if a != b => (a, b),
                _ => return Err(MdsError::BadMeasurements),
            };
            if d <= T::zero() {
                return Err(MdsError::BadMeasurements);
            }
            dist[a * k + b] = d;
            dist[b * k + a] = d;
        }
        if dist.iter().any(|v| v.is_nan()) {
            return Err(MdsError::BadMeasurements);
        }
        Ok(DistanceMeasurements { ids, dist })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, a: usize, b: usize) -> T {
        self.dist[a * self.len() + b]
    }
}

/// Classical MDS: double-center the squared distances, eigendecompose, read
/// coordinates off the top three axes (descending eigenvalue, deterministic
/// signs). Output is centered at the origin.
pub fn mds_embed<T: Real>(d: &DistanceMeasurements<T>) -> Result<Vec<WorldPoint<T>>, MdsError> {
    let k = d.len();
    let kf = T::from_usize(k).unwrap();
    // B = -1/2 C D^2 C
    let mut sq = vec![vec![T::zero(); k]; k];
    for i in 0..k {
        for j in 0..k {
            let v = d.get(i, j);
            sq[i][j] = v * v;
        }
    }
    let row_mean: Vec<T> = sq.iter().map(|row| row.iter().copied().sum::<T>() / kf).collect();
    let grand = row_mean.iter().copied().sum::<T>() / kf;
    let half = r::<T>(0.5);
    let mut b = vec![vec![T::zero(); k]; k];
    for i in 0..k {
        for j in 0..k {
            b[i][j] = -half * (sq[i][j] - row_mean[i] - row_mean[j] + grand);
        }
    }
    let eig = linalg::sym_eigen(&b).map_err(|_| MdsError::NotEmbeddable)?;
    let lmax = eig.values.last().copied().unwrap_or(T::zero()).max(T::zero());
    let tol = r::<T>(1e-9) * lmax.max(T::min_positive_value());
    // significantly negative eigenvalues mean no Euclidean embedding exists;
    // a significant fourth positive eigenvalue means it needs > 3 dimensions
    if eig.values[0] < -tol {
        return Err(MdsError::NotEmbeddable);
    }
    if k > 4 {
        let fourth = eig.values[k - 4];
        if fourth > tol {
            return Err(MdsError::NotEmbeddable);
        }
    }
    let mut coords = vec![[T::zero(); 3]; k];
    for axis in 0..3 {
        let idx = k - 1 - axis;
        let lam = eig.values[idx].max(T::zero());
        let s = lam.sqrt();
        for i in 0..k {
            coords[i][axis] = s * eig.vectors[idx][i];
        }
    }
    Ok(coords.into_iter().map(|c| WorldPoint::new(c[0], c[1], c[2])).collect())
}

/// Similarity (scale, rotation-or-reflection, translation) between two 3-D
/// point sets.
#[derive(Debug, Clone)]
pub struct Similarity<T> {
    pub scale: T,
    pub rot: [[T; 3]; 3],
    pub t: [T; 3],
}

impl<T: Real> Similarity<T> {
    pub fn apply(&self, p: &WorldPoint<T>) -> WorldPoint<T> {
        let c = [p.x, p.y, p.z];
        let mut out = [T::zero(); 3];
        for i in 0..3 {
            out[i] = self.scale * linalg::dot(&self.rot[i], &c) + self.t[i];
        }
        WorldPoint::new(out[0], out[1], out[2])
    }
}

/// Least-squares similarity fit via the quaternion eigenvector method; both
/// proper rotations and reflections are evaluated when allowed, keeping the
/// lower-residual branch.
pub fn fit_similarity<T: Real>(
    src: &[WorldPoint<T>],
    dst: &[WorldPoint<T>],
    allow_reflection: bool,
    with_scale: bool,
) -> Result<Similarity<T>, MdsError> {
    if src.len() < 3 || src.len() != dst.len() {
        return Err(MdsError::InsufficientInput("need >= 3 point pairs"));
    }
    let k = T::from_usize(src.len()).unwrap();
    let centroid = |pts: &[WorldPoint<T>]| {
        let mut c = [T::zero(); 3];
        for p in pts {
            c[0] = c[0] + p.x;
            c[1] = c[1] + p.y;
            c[2] = c[2] + p.z;
        }
        [c[0] / k, c[1] / k, c[2] / k]
    };
    let cs = centroid(src);
    let cd = centroid(dst);
    let centered = |pts: &[WorldPoint<T>], c: &[T; 3]| -> Vec<[T; 3]> {
        pts.iter().map(|p| [p.x - c[0], p.y - c[1], p.z - c[2]]).collect()
    };
    let a = centered(src, &cs);
    let b = centered(dst, &cd);

    let solve_rotation = |a: &[[T; 3]]| -> Option<[[T; 3]; 3]> {
        let mut s = [[T::zero(); 3]; 3];
        for (ai, bi) in a.iter().zip(&b) {
            for i in 0..3 {
                for j in 0..3 {
                    s[i][j] = s[i][j] + ai[i] * bi[j];
                }
            }
        }
        // largest eigenvector of the quaternion form
        let n = vec![
            vec![s[0][0] + s[1][1] + s[2][2], s[1][2] - s[2][1], s[2][0] - s[0][2], s[0][1] - s[1][0]],
            vec![s[1][2] - s[2][1], s[0][0] - s[1][1] - s[2][2], s[0][1] + s[1][0], s[2][0] + s[0][2]],
            vec![s[2][0] - s[0][2], s[0][1] + s[1][0], s[1][1] - s[0][0] - s[2][2], s[1][2] + s[2][1]],
            vec![s[0][1] - s[1][0], s[2][0] + s[0][2], s[1][2] + s[2][1], s[2][2] - s[0][0] - s[1][1]],
        ];
        let eig = linalg::sym_eigen(&n).ok()?;
        let q = &eig.vectors[3];
        let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
        let two = r::<T>(2.0);
        Some([
            [
                T::one() - two * (y * y + z * z),
                two * (x * y - w * z),
                two * (x * z + w * y),
            ],
            [
                two * (x * y + w * z),
                T::one() - two * (x * x + z * z),
                two * (y * z - w * x),
            ],
            [
                two * (x * z - w * y),
                two * (y * z + w * x),
                T::one() - two * (x * x + y * y),
            ],
        ])
    };

    let spread: T = a.iter().map(|p| linalg::dot(p, p)).sum();
    if spread <= T::min_positive_value() {
        return Err(MdsError::InsufficientInput("source points coincide"));
    }

    let assemble = |rot: [[T; 3]; 3]| -> Similarity<T> {
        let scale = if with_scale {
            let mut num = T::zero();
            for (ai, bi) in a.iter().zip(&b) {
                for i in 0..3 {
                    num = num + bi[i] * linalg::dot(&rot[i], ai);
                }
            }
            num / spread
        } else {
            T::one()
        };
        let mut t = [T::zero(); 3];
        for i in 0..3 {
            t[i] = cd[i] - scale * linalg::dot(&rot[i], &cs);
        }
        Similarity { scale, rot, t }
    };
    let residual = |sim: &Similarity<T>| -> T {
        src.iter()
            .zip(dst)
            .map(|(s, d)| {
                let m = sim.apply(s);
                let dx = m.x - d.x;
                let dy = m.y - d.y;
                let dz = m.z - d.z;
                dx * dx + dy * dy + dz * dz
            })
            .sum()
    };

    let rot = solve_rotation(&a).ok_or(MdsError::NotEmbeddable)?;
    let direct = assemble(rot);
    if !allow_reflection {
        return Ok(direct);
    }
    // mirror the source through z, solve, fold the mirror into the map
    let mirrored: Vec<[T; 3]> = a.iter().map(|p| [p[0], p[1], -p[2]]).collect();
    let rot_m = solve_rotation(&mirrored).ok_or(MdsError::NotEmbeddable)?;
    let mut reflected = [[T::zero(); 3]; 3];
    for i in 0..3 {
        reflected[i][0] = rot_m[i][0];
        reflected[i][1] = rot_m[i][1];
        reflected[i][2] = -rot_m[i][2];
    }
    let refl = assemble(reflected);
    if residual(&refl) < residual(&direct) {
        Ok(refl)
    } else {
        Ok(direct)
    }
}
