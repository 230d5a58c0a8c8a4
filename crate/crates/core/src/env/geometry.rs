//! Trajectory matching: footpoint search, tracking errors, the polar waypoint
//! encoding and planar pose integration.

use std::f64::consts::PI;

use super::track::{interpolate, Track};
use super::vehicle::VehicleState;

/// Number of look-ahead waypoints in the deviation state.
pub const NUM_WAYPOINTS: usize = 10;
/// Length of [`DeviationState::to_vec`].
pub const DEVIATION_DIM: usize = 3 + 3 * NUM_WAYPOINTS;

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a - 2.0 * PI * ((a + PI) / (2.0 * PI)).floor();
    if w <= -PI {
        w + 2.0 * PI
    } else if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Global position and yaw of the centre of gravity.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: wrap_angle(yaw),
        }
    }
}

/// Closest point of the (linearly interpolated) track.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Footpoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    /// Arc position along the track, m.
    pub arc: f64,
}

/// Arc window searched around a hint: behind and ahead of it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchWindow {
    pub behind: f64,
    pub ahead: f64,
}

impl Default for SearchWindow {
    fn default() -> Self {
        Self {
            behind: 20.0,
            ahead: 40.0,
        }
    }
}

/// Nearest point of the polyline to `(x, y)`.
///
/// With a hint only segments overlapping `[hint − behind, hint + ahead]` are
/// visited, starting at the hint and moving forward, then the part behind it;
/// without a hint the whole track is scanned from arc 0. Ties keep the first
/// segment visited, i.e. the smallest arc position at or ahead of the hint.
pub fn find_footpoint(x: f64, y: f64, track: &Track, hint: Option<f64>, window: SearchWindow) -> Footpoint {
    let nseg = track.num_segments();
    let mut best = (f64::INFINITY, 0usize, 0.0f64);
    let mut visit = |i: usize| {
        let (a, b, _, _) = track.segment(i);
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len2 = dx * dx + dy * dy;
        let t = (((x - a.x) * dx + (y - a.y) * dy) / len2).clamp(0.0, 1.0);
        let (px, py) = (a.x + t * dx, a.y + t * dy);
        let d2 = (x - px).powi(2) + (y - py).powi(2);
        // near-equal distances count as ties and keep the earlier segment
        if best.0.is_infinite() || d2 < best.0 - 1e-12 * (1.0 + best.0) {
            best = (d2, i, t);
        }
    };
    match hint {
        Some(h) if window.behind + window.ahead < track.length() || !track.is_closed() => {
            let h = track.normalize_arc(h);
            let start = track.segment_at(h);
            let order = forward_then_back(track, start, h, window);
            for i in order {
                visit(i);
            }
        }
        _ => {
            for i in 0..nseg {
                visit(i);
            }
        }
    }
    let (_, i, t) = best;
    let (a, b, s0, s1) = track.segment(i);
    let w = interpolate(a, b, t);
    Footpoint {
        x: w.x,
        y: w.y,
        heading: w.heading,
        speed: w.speed,
        arc: track.normalize_arc(s0 + t * (s1 - s0)),
    }
}

fn forward_then_back(track: &Track, start: usize, h: f64, window: SearchWindow) -> Vec<usize> {
    let nseg = track.num_segments();
    let mut order = Vec::new();
    // forward from the hint segment
    let mut covered = 0.0;
    let mut i = start;
    let (_, _, s0, _) = track.segment(start);
    let offset = h - s0;
    for _ in 0..nseg {
        order.push(i);
        let (_, _, a, b) = track.segment(i);
        covered += b - a;
        if covered - offset >= window.ahead {
            break;
        }
        if !track.is_closed() && i + 1 == nseg {
            break;
        }
        i = (i + 1) % nseg;
    }
    // behind the hint
    let mut covered = offset;
    let mut i = start;
    for _ in 0..nseg {
        if covered >= window.behind {
            break;
        }
        if i == 0 {
            if !track.is_closed() {
                break;
            }
            i = nseg - 1;
        } else {
            i -= 1;
        }
        if order.contains(&i) {
            break;
        }
        order.push(i);
        let (_, _, a, b) = track.segment(i);
        covered += b - a;
    }
    order
}

/// Errors relative to the footpoint that enter the reward.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrackingErrors {
    /// Signed cross-track error, positive when the vehicle is left of the track.
    pub cross_track: f64,
    /// Course-angle error `yaw − heading_fp`, wrapped.
    pub course: f64,
    /// Velocity error `ẋ − ẋ_fp`.
    pub velocity: f64,
}

/// Deviation state: tracking errors plus ten look-ahead waypoints in polar
/// coordinates of the vehicle frame and their target speeds.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DeviationState {
    pub errors: TrackingErrors,
    pub distances: [f64; NUM_WAYPOINTS],
    pub angles: [f64; NUM_WAYPOINTS],
    pub speeds: [f64; NUM_WAYPOINTS],
}

impl DeviationState {
    pub fn write_into(&self, out: &mut Vec<f64>) {
        out.push(self.errors.cross_track);
        out.push(self.errors.course);
        out.push(self.errors.velocity);
        out.extend_from_slice(&self.distances);
        out.extend_from_slice(&self.angles);
        out.extend_from_slice(&self.speeds);
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(DEVIATION_DIM);
        self.write_into(&mut v);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert!(v.len() >= DEVIATION_DIM);
        let mut d = DeviationState {
            errors: TrackingErrors {
                cross_track: v[0],
                course: v[1],
                velocity: v[2],
            },
            ..Default::default()
        };
        d.distances.copy_from_slice(&v[3..3 + NUM_WAYPOINTS]);
        d.angles.copy_from_slice(&v[3 + NUM_WAYPOINTS..3 + 2 * NUM_WAYPOINTS]);
        d.speeds.copy_from_slice(&v[3 + 2 * NUM_WAYPOINTS..DEVIATION_DIM]);
        d
    }
}

pub fn tracking_errors(pose: &Pose, vx: f64, fp: &Footpoint) -> TrackingErrors {
    let (dx, dy) = (pose.x - fp.x, pose.y - fp.y);
    let dist = dx.hypot(dy);
    let side = -fp.heading.sin() * dx + fp.heading.cos() * dy;
    let cross_track = if side < 0.0 { -dist } else { dist };
    TrackingErrors {
        cross_track,
        course: wrap_angle(pose.yaw - fp.heading),
        velocity: vx - fp.speed,
    }
}

/// Deviation state of `pose`/`v` relative to footpoint `fp`; waypoint `i`
/// lies `(i + 1)·spacing` metres of arc ahead of the footpoint.
pub fn compute_deviation(pose: &Pose, v: &VehicleState, track: &Track, fp: &Footpoint, spacing: f64) -> DeviationState {
    let mut d = DeviationState {
        errors: tracking_errors(pose, v.vx, fp),
        ..Default::default()
    };
    let (s, c) = pose.yaw.sin_cos();
    for i in 0..NUM_WAYPOINTS {
        let w = track.sample(fp.arc + (i + 1) as f64 * spacing);
        let (gx, gy) = (w.x - pose.x, w.y - pose.y);
        let lx = c * gx + s * gy;
        let ly = -s * gx + c * gy;
        d.distances[i] = lx.hypot(ly);
        d.angles[i] = ly.atan2(lx);
        d.speeds[i] = w.speed;
    }
    d
}

/// Planar pose update over one control interval from the vehicle-frame
/// velocities at its start and end: yaw advances by the mean yaw rate and the
/// mean body velocity is rotated with the mid-interval yaw.
pub fn advance_pose(pose: &Pose, before: &VehicleState, after: &VehicleState, dt: f64) -> Pose {
    let r = 0.5 * (before.yaw_rate + after.yaw_rate);
    let vx = 0.5 * (before.vx + after.vx);
    let vy = 0.5 * (before.vy + after.vy);
    let mid = pose.yaw + 0.5 * r * dt;
    let (s, c) = mid.sin_cos();
    Pose {
        x: pose.x + (c * vx - s * vy) * dt,
        y: pose.y + (s * vx + c * vy) * dt,
        yaw: wrap_angle(pose.yaw + r * dt),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::track::{make_track, TrackSpec};
    use proptest::prelude::*;

    fn x_axis() -> Track {
        make_track(&TrackSpec::straight(100.0, 10.0)).unwrap()
    }

    #[test]
    fn axis_aligned_footpoint() {
        let t = x_axis();
        let fp = find_footpoint(5.0, 2.0, &t, None, SearchWindow::default());
        assert!((fp.x - 5.0).abs() < 1e-12 && fp.y.abs() < 1e-12);
        let e = tracking_errors(&Pose::new(5.0, 2.0, 0.0), 0.0, &fp);
        assert!((e.cross_track - 2.0).abs() < 1e-12);
        let e = tracking_errors(&Pose::new(5.0, -2.0, 0.0), 0.0, &find_footpoint(5.0, -2.0, &t, None, SearchWindow::default()));
        assert!((e.cross_track + 2.0).abs() < 1e-12);
    }

    #[test]
    fn on_waypoint_has_zero_error() {
        let t = make_track(&TrackSpec::benchmark()).unwrap();
        let p = t.points()[457];
        let fp = find_footpoint(p.x, p.y, &t, Some(450.0), SearchWindow::default());
        let e = tracking_errors(&Pose::new(p.x, p.y, p.heading), p.speed, &fp);
        assert!(e.cross_track.abs() < 1e-12 && e.course.abs() < 1e-12 && e.velocity.abs() < 1e-12);
    }

    #[test]
    fn aligned_vehicle_on_track() {
        let t = x_axis();
        let pose = Pose::new(20.0, 0.0, 0.0);
        let v = VehicleState {
            vx: 10.0,
            ..Default::default()
        };
        let fp = find_footpoint(pose.x, pose.y, &t, None, SearchWindow::default());
        let d = compute_deviation(&pose, &v, &t, &fp, 5.0);
        assert_eq!(d.errors, TrackingErrors::default());
        assert!(d.angles[0].abs() < 1e-12);
        assert!((d.distances[0] - 5.0).abs() < 1e-12);
        assert!((d.distances[9] - 50.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_vehicle_course_error() {
        let t = x_axis();
        let pose = Pose::new(20.0, 0.0, PI / 2.0);
        let fp = find_footpoint(pose.x, pose.y, &t, None, SearchWindow::default());
        let d = compute_deviation(&pose, &VehicleState::default(), &t, &fp, 5.0);
        assert!((d.errors.course - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn waypoint_left_of_vehicle_is_plus_half_pi() {
        // Vehicle facing -y at (3, 0): the track point 3 m ahead along +x is
        // directly on its left.
        let t = x_axis();
        let pose = Pose::new(0.0, 0.0, -PI / 2.0);
        let fp = find_footpoint(0.0, 0.0, &t, None, SearchWindow::default());
        let d = compute_deviation(&pose, &VehicleState::default(), &t, &fp, 3.0);
        assert!((d.distances[0] - 3.0).abs() < 1e-12);
        assert!((d.angles[0] - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn hinted_search_agrees_with_full_search_near_hint() {
        let t = make_track(&TrackSpec::benchmark()).unwrap();
        for k in 0..200 {
            let s = k as f64 * t.length() / 200.0;
            let w = t.sample(s);
            let (x, y) = (w.x - 1.5 * w.heading.sin(), w.y + 1.5 * w.heading.cos());
            let full = find_footpoint(x, y, &t, None, SearchWindow::default());
            let hinted = find_footpoint(x, y, &t, Some(s - 2.0), SearchWindow::default());
            assert!((full.x - hinted.x).abs() < 1e-12 && (full.y - hinted.y).abs() < 1e-12, "at s = {s}");
        }
    }

    #[test]
    fn tie_prefers_arc_ahead_of_hint() {
        // Point at the centre of a circle is equidistant to every segment.
        let t = make_track(&TrackSpec::circle(20.0, 5.0)).unwrap();
        let fp = find_footpoint(0.0, 20.0, &t, None, SearchWindow { behind: 1e9, ahead: 1e9 });
        assert!(fp.arc < 1.0);
    }

    #[test]
    fn pose_advances_along_heading() {
        let v = VehicleState {
            vx: 10.0,
            ..Default::default()
        };
        let p = advance_pose(&Pose::new(1.0, 2.0, PI / 4.0), &v, &v, 0.1);
        let step = (PI / 4.0).cos();
        assert!((p.x - (1.0 + step)).abs() < 1e-12 && (p.y - (2.0 + step)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn wrap_angle_range(a in -100.0f64..100.0) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI && w <= PI);
            prop_assert!(((a - w) / (2.0 * PI) - ((a - w) / (2.0 * PI)).round()).abs() < 1e-9);
        }
    }
}
