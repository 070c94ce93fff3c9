//! Shared spatial conventions.
//!
//! World frame: +x east, +y north, +z up, meters. Yaw is the counter-clockwise
//! rotation about +z measured from north, so yaw 0 faces +y and yaw -pi/2
//! faces +x. Bearings relative to a heading are positive to the right.

use nalgebra::{Vector2, Vector3};

/// Unit horizontal facing direction for a yaw.
pub fn facing(yaw: f64) -> Vector2<f64> {
    Vector2::new(-yaw.sin(), yaw.cos())
}

/// Unit horizontal direction to the right of a yaw.
pub fn right_of(yaw: f64) -> Vector2<f64> {
    Vector2::new(yaw.cos(), yaw.sin())
}

/// Gaze vector with zero pitch for a yaw.
pub fn head_gaze(yaw: f64) -> Vector3<f64> {
    let f = facing(yaw);
    Vector3::new(f.x, f.y, 0.0)
}

/// Angle of `offset` (horizontal) relative to the heading `yaw`, in (-pi, pi],
/// positive to the right.
pub fn relative_bearing(yaw: f64, offset: Vector2<f64>) -> f64 {
    offset.dot(&right_of(yaw)).atan2(offset.dot(&facing(yaw)))
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn yaw_conventions() {
        assert_abs_diff_eq!(facing(0.0), Vector2::new(0.0, 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(facing(-FRAC_PI_2), Vector2::new(1.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(right_of(0.0), Vector2::new(1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn bearing_sign() {
        // facing north, something due east is to the right
        assert_abs_diff_eq!(relative_bearing(0.0, Vector2::new(2.0, 0.0)), FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(relative_bearing(0.0, Vector2::new(-2.0, 0.0)), -FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(relative_bearing(0.0, Vector2::new(0.0, -1.0)), PI, epsilon = 1e-12);
    }

    #[test]
    fn wrap() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-FRAC_PI_2), -FRAC_PI_2, epsilon = 1e-12);
    }
}
