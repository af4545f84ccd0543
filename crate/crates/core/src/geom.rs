//! Small geometric primitives shared by the layout solver and the renderer.

use nalgebra::{Point3, UnitQuaternion, Vector3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Point3::from([f64::INFINITY; 3]),
            max: Point3::from([f64::NEG_INFINITY; 3]),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] <= self.max[i])
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn half_extents(&self) -> Vector3<f64> {
        (self.max - self.min) * 0.5
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn longest_axis(&self) -> usize {
        let e = self.extent();
        if e.x >= e.y && e.x >= e.z {
            0
        } else if e.y >= e.z {
            1
        } else {
            2
        }
    }

    pub fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.min[i] && self.max[i] >= other.max[i])
    }

    pub fn translated(&self, t: &Vector3<f64>) -> Aabb {
        Aabb {
            min: self.min + t,
            max: self.max + t,
        }
    }
}

/// Rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }
}

impl Pose {
    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        self.rotation * p + self.translation
    }
}

/// Renormalize a quaternion given as (w, x, y, z), rejecting zero or
/// non-finite input.
pub fn quat_from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Option<UnitQuaternion<f64>> {
    let q = nalgebra::Quaternion::new(w, x, y, z);
    let n = q.norm();
    if !n.is_finite() || n < 1e-12 {
        return None;
    }
    if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
        return Some(UnitQuaternion::new_unchecked(q));
    }
    Some(UnitQuaternion::new_unchecked(q / n))
}

/// Rotation for a camera at `eye` looking at `target`, camera looking down
/// its local -z with +y up.
pub fn look_at_rotation(eye: &Point3<f64>, target: &Point3<f64>) -> UnitQuaternion<f64> {
    let forward = target - eye;
    if forward.norm() < 1e-12 {
        return UnitQuaternion::identity();
    }
    let forward = forward.normalize();
    let mut up = Vector3::y();
    if forward.cross(&up).norm() < 1e-9 {
        up = -Vector3::z();
    }
    let right = forward.cross(&up).normalize();
    let true_up = right.cross(&forward);
    let m = nalgebra::Matrix3::from_columns(&[right, true_up, -forward]);
    UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(m))
}
