//! Shared linear-algebra aliases and small geometry helpers.

use nalgebra::{Isometry3, Matrix2, Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat2 = Matrix2<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Quat = Quaternion<f64>;
pub type UnitQuat = UnitQuaternion<f64>;
/// Rigid transform (SE(3)).
pub type Iso3 = Isometry3<f64>;

/// Axis-aligned box in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    /// Smallest box containing all points; `None` for an empty iterator.
    pub fn from_points<I: IntoIterator<Item = Vec3>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut bb = Aabb::new(first, first);
        for p in it {
            bb.expand(p);
        }
        Some(bb)
    }

    pub fn expand(&mut self, p: Vec3) {
        self.min = self.min.inf(&p);
        self.max = self.max.sup(&p);
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn dilated(&self, margin: f64) -> Self {
        let m = Vec3::repeat(margin);
        Aabb::new(self.min - m, self.max + m)
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }
}

/// Rotation matrix of a possibly non-unit quaternion (normalized internally).
pub fn rot_of(q: &Quat) -> Mat3 {
    UnitQuat::from_quaternion(*q).to_rotation_matrix().into_inner()
}

/// Derivatives of the rotation matrix w.r.t. the four raw quaternion
/// components, including the normalization chain. Ordering follows
/// nalgebra's coords indexing: [i, j, k, w].
pub fn rot_jacobian(q: &Quat) -> [Mat3; 4] {
    let n = q.norm();
    let u = q / n; // unit quaternion
    let (w, x, y, z) = (u.w, u.i, u.j, u.k);

    // dR/d(unit components)
    let dw = Mat3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0) * 2.0;
    let dx = Mat3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x) * 2.0;
    let dy = Mat3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y) * 2.0;
    let dz = Mat3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0) * 2.0;
    let unit_grads = [dx, dy, dz, dw];
    let uc = [x, y, z, w];

    // Chain through u = q/|q|: du_j/dq_i = (δ_ij − u_i u_j)/|q|
    let mut out = [Mat3::zeros(); 4];
    for i in 0..4 {
        let mut m = Mat3::zeros();
        for j in 0..4 {
            let coeff = ((i == j) as u8 as f64 - uc[i] * uc[j]) / n;
            m += unit_grads[j] * coeff;
        }
        out[i] = m;
    }
    out
}

/// Unit vector, or `None` when the norm is below `eps`.
pub fn try_normalize(v: Vec3, eps: f64) -> Option<Vec3> {
    let n = v.norm();
    (n > eps).then(|| v / n)
}

/// Deterministic orthonormal basis (t1, t2) perpendicular to unit `z`.
pub fn tangent_basis(z: Vec3) -> (Vec3, Vec3) {
    let a = if z.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let t1 = z.cross(&a).normalize();
    let t2 = z.cross(&t1);
    (t1, t2)
}

/// Relative L2 error between two flat vectors, with an absolute floor on the
/// denominator so near-zero references do not blow up.
pub fn rel_l2_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let norm: f64 = b.iter().map(|y| y * y).sum();
    diff.sqrt() / norm.sqrt().max(floor)
}

/// FNV-1a hash of a byte string; stable across runs and platforms.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
