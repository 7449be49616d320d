//! Reactive view adjustment after a view failed to observe its frontier.

use nalgebra::Unit;

use crate::geometry::{rodrigues, Point, Vector, View};
use crate::surface::SurfaceFrame;

/// Per-frontier adjustment bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdjustState {
    /// Separation measured at the previous adjustment.
    pub separation: f64,
    /// Scaling factor, doubled after every successful adjustment.
    pub scale: f64,
    pub switched: bool,
    /// Captures that targeted this frontier and left it a frontier.
    pub attempts: usize,
}

impl Default for AdjustState {
    fn default() -> Self {
        Self {
            separation: f64::INFINITY,
            scale: 1.0,
            switched: false,
            attempts: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AdjustOutcome {
    Adjusted(View),
    Switched(View),
    Demoted,
}

/// Translations and rotation angles for separation `s` in the frame basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correction {
    pub t_frontier: Vector,
    pub t_boundary: Vector,
    pub theta_boundary: f64,
    pub theta_frontier: f64,
}

pub fn correction(frame: &SurfaceFrame, s: &Vector, scale: f64, d: f64) -> Correction {
    let a = scale;
    Correction {
        t_frontier: (a + 1.0) * s[1] * frame.frontier.into_inner(),
        t_boundary: (a + 1.0) * s[2] * frame.boundary.into_inner(),
        theta_boundary: (d * a * s[1] / (d * d + (a + 1.0) * s[1] * s[1])).atan(),
        theta_frontier: (d * a * s[2] / (d * d + (a + 1.0) * s[2] * s[2])).atan(),
    }
}

/// Separation between the frontier and `mean` in the (normal, frontier, boundary) basis.
pub fn separation(frame: &SurfaceFrame, frontier: &Point, mean: &Point) -> Vector {
    let v = frontier - mean;
    Vector::new(
        frame.normal.dot(&v),
        frame.frontier.dot(&v),
        frame.boundary.dot(&v),
    )
}

/// New view for `frontier` after `current_view` failed to observe it.
///
/// `new_mean` is the mean of the points accepted from that capture, `None` if
/// nothing was accepted. While the separation to the new points keeps
/// shrinking, the view is shifted and tilted towards the unobserved side with
/// growing gain. The first time it does not shrink the view falls back to the
/// original capture sight line; the second time the frontier is given up.
pub fn adjust_view(
    state: &mut AdjustState,
    frontier: &Point,
    frame: &SurfaceFrame,
    current_view: &View,
    new_mean: Option<&Point>,
    capture_position: &Point,
    d: f64,
) -> AdjustOutcome {
    let s = new_mean.map(|m| separation(frame, frontier, m));
    let shrinking = s.as_ref().map(|s| s.norm() < state.separation).unwrap_or(false);
    let (omega, switched) = if let (true, Some(s)) = (shrinking, s) {
        let c = correction(frame, &s, state.scale, d);
        let r_b = rodrigues(&frame.boundary, c.theta_boundary);
        let r_f = rodrigues(&frame.frontier, c.theta_frontier);
        let offset = current_view.position - frontier;
        let omega = -(r_f * (c.t_boundary + r_b * (c.t_frontier + offset)));
        state.separation = s.norm();
        state.scale *= 2.0;
        (omega, false)
    } else if !state.switched {
        state.separation = f64::INFINITY;
        state.scale = 1.0;
        state.switched = true;
        (frontier - capture_position, true)
    } else {
        return AdjustOutcome::Demoted;
    };
    let dir = Unit::try_new(omega, 1e-12).unwrap_or(-frame.normal);
    let view = View::facing(frontier, dir, d);
    if switched {
        AdjustOutcome::Switched(view)
    } else {
        AdjustOutcome::Adjusted(view)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame() -> SurfaceFrame {
        SurfaceFrame::new(Vector::z_axis(), Vector::x_axis())
    }

    #[test]
    fn aligned_mean_keeps_position() {
        let f = Point::origin();
        let view = View::new(Point::new(0.1, 0.05, 0.4), Unit::new_normalize(Vector::new(-0.1, -0.05, -0.4)));
        let mut st = AdjustState::default();
        let mean = Point::new(0.0, 0.0, -0.02);
        let out = adjust_view(&mut st, &f, &frame(), &view, Some(&mean), &Point::new(0.0, 0.0, 1.0), view.position.coords.norm());
        let AdjustOutcome::Adjusted(v) = out else { panic!("{out:?}") };
        assert!((v.position - view.position).norm() < 1e-12);
        assert_eq!(st.scale, 2.0);
    }

    #[test]
    fn tilt_angle_matches_hand_value() {
        let s = Vector::new(0.0, 0.1, 0.0);
        let c = correction(&frame(), &s, 1.0, 0.5);
        assert!((c.theta_boundary - (0.05f64 / 0.27).atan()).abs() < 1e-12);
        assert!((c.t_frontier - Vector::new(0.2, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(c.theta_frontier, 0.0);
    }

    #[test]
    fn view_moves_towards_unobserved_side() {
        let f = Point::origin();
        let view = View::facing(&f, -Vector::z_axis(), 0.5);
        let mut st = AdjustState::default();
        // New points fell behind the frontier, on the observed (-x) side.
        let mean = Point::new(-0.1, 0.0, 0.0);
        let out = adjust_view(&mut st, &f, &frame(), &view, Some(&mean), &Point::new(0.0, 0.0, 1.0), 0.5);
        let AdjustOutcome::Adjusted(v) = out else { panic!() };
        assert!(v.position.x > 0.0);
        assert!(((v.position - f).norm() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ladder_switches_then_demotes() {
        let f = Point::origin();
        let view = View::facing(&f, -Vector::z_axis(), 0.5);
        let capture = Point::new(0.3, 0.0, 0.4);
        let mut st = AdjustState::default();
        let mean = Point::new(-0.1, 0.0, 0.0);
        assert!(matches!(
            adjust_view(&mut st, &f, &frame(), &view, Some(&mean), &capture, 0.5),
            AdjustOutcome::Adjusted(_)
        ));
        let out = adjust_view(&mut st, &f, &frame(), &view, Some(&mean), &capture, 0.5);
        let AdjustOutcome::Switched(v) = out else { panic!("{out:?}") };
        let expect = Unit::new_normalize(f - capture);
        assert!((v.orientation.into_inner() - expect.into_inner()).norm() < 1e-12);
        assert_eq!((st.scale, st.separation), (1.0, f64::INFINITY));
        assert!(matches!(
            adjust_view(&mut st, &f, &frame(), &view, None, &capture, 0.5),
            AdjustOutcome::Demoted
        ));
    }

    #[test]
    fn empty_capture_counts_as_failure() {
        let f = Point::origin();
        let view = View::facing(&f, -Vector::z_axis(), 0.5);
        let mut st = AdjustState::default();
        let out = adjust_view(&mut st, &f, &frame(), &view, None, &Point::new(0.0, 0.0, 1.0), 0.5);
        assert!(matches!(out, AdjustOutcome::Switched(_)));
    }

    proptest! {
        #[test]
        fn adjusted_views_stay_at_distance(
            s in prop::array::uniform3(-0.3..0.3f64),
            scale_pow in 0u32..6,
            d in 0.1..2.0f64,
        ) {
            let f = Point::new(0.2, -0.1, 0.3);
            let view = View::facing(&f, -Vector::z_axis(), d);
            let mut st = AdjustState { scale: 2f64.powi(scale_pow as i32), ..Default::default() };
            let mean = f - Vector::from(s);
            let out = adjust_view(&mut st, &f, &frame(), &view, Some(&mean), &Point::new(0.0, 0.0, 1.0), d);
            let AdjustOutcome::Adjusted(v) = out else { panic!() };
            prop_assert!(((v.position - f).norm() - d).abs() < 1e-9);
            prop_assert!(((f - v.position) / d - v.orientation.into_inner()).norm() < 1e-9);
        }
    }
}
