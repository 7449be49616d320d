//! Basic geometric types shared by every module.

use nalgebra::{Matrix3, Point3, Unit, Vector3};

pub type Point = Point3<f64>;
pub type Vector = Vector3<f64>;
pub type UnitVector = Unit<Vector3<f64>>;

/// A sensor pose: where it is and which way its optical axis points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct View {
    pub position: Point,
    pub orientation: UnitVector,
}

impl View {
    pub fn new(position: Point, orientation: UnitVector) -> Self {
        Self {
            position,
            orientation,
        }
    }

    /// View at `position` aimed at `target`. `None` if the two coincide.
    pub fn looking_at(position: Point, target: &Point) -> Option<Self> {
        Unit::try_new(target - position, 1e-12).map(|orientation| Self {
            position,
            orientation,
        })
    }

    /// View at distance `distance` from `target` along `-direction`, looking along `direction`.
    pub fn facing(target: &Point, direction: UnitVector, distance: f64) -> Self {
        Self {
            position: target - direction.into_inner() * distance,
            orientation: direction,
        }
    }
}

/// Axis-aligned bounding box, closed on both ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn empty() -> Self {
        Self {
            min: Point::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| self.min[i] > self.max[i])
    }

    pub fn grow(&mut self, p: &Point) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> Point {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn extent(&self) -> Vector {
        self.max - self.min
    }

    /// Box grown by `margin` on every side.
    pub fn inflate(&self, margin: f64) -> Aabb {
        let m = Vector::repeat(margin);
        Aabb {
            min: self.min - m,
            max: self.max + m,
        }
    }

    pub fn longest_axis(&self) -> usize {
        self.extent().imax()
    }
}

/// Cross-product matrix `[u]x`.
pub fn skew(u: &Vector) -> Matrix3<f64> {
    Matrix3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0)
}

/// Rotation by `angle` radians about `axis`, `I + sin(a)[u]x + (1 - cos(a))[u]x^2`.
pub fn rodrigues(axis: &UnitVector, angle: f64) -> Matrix3<f64> {
    let k = skew(axis.as_ref());
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// Some unit vector orthogonal to `v`.
pub fn any_orthogonal(v: &UnitVector) -> UnitVector {
    let a = if v.x.abs() < 0.9 {
        Vector::x()
    } else {
        Vector::y()
    };
    Unit::new_normalize(v.cross(&a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(x: f64, y: f64, z: f64) -> UnitVector {
        Unit::new_normalize(Vector::new(x, y, z))
    }

    #[test]
    fn rodrigues_quarter_turn_about_z() {
        let r = rodrigues(&Vector::z_axis(), std::f64::consts::FRAC_PI_2);
        let v = r * Vector::x();
        assert!((v - Vector::y()).norm() < 1e-15);
    }

    #[test]
    fn facing_places_view_behind_target() {
        let v = View::facing(&Point::new(1.0, 0.0, 0.0), -Vector::x_axis(), 2.0);
        assert_eq!(v.position, Point::new(3.0, 0.0, 0.0));
    }

    #[test]
    fn aabb_contains_is_closed() {
        let b = Aabb::new(Point::origin(), Point::new(1.0, 1.0, 1.0));
        assert!(b.contains(&Point::new(1.0, 0.0, 0.5)));
        assert!(!b.contains(&Point::new(1.0 + 1e-12, 0.0, 0.5)));
    }

    proptest! {
        #[test]
        fn rodrigues_matches_nalgebra_rotation(
            x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64, a in -6.3..6.3f64,
        ) {
            prop_assume!(x * x + y * y + z * z > 1e-3);
            let axis = unit(x, y, z);
            let ours = rodrigues(&axis, a);
            let theirs = nalgebra::Rotation3::from_axis_angle(&axis, a);
            prop_assert!((ours - theirs.matrix()).abs().max() < 1e-12);
        }

        #[test]
        fn orthogonal_is_orthogonal(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64) {
            prop_assume!(x * x + y * y + z * z > 1e-3);
            let v = unit(x, y, z);
            prop_assert!(any_orthogonal(&v).dot(&v).abs() < 1e-12);
        }
    }
}
