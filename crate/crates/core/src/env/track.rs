//! Waypoint tracks: construction from segment lists or point clouds,
//! arc-length interpolation and CSV exchange.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use super::geometry::wrap_angle;
use crate::error::{config, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

/// A polyline of waypoints with cumulative arc length.
///
/// For closed tracks the last waypoint connects back to the first and
/// [`Track::length`] includes that closing segment.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    points: Vec<Waypoint>,
    arc: Vec<f64>,
    length: f64,
    closed: bool,
}

/// One piece of a parametric track.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Segment {
    Straight { length: f64 },
    /// Circular arc; positive `angle` turns left.
    Arc { radius: f64, angle: f64 },
}

impl Segment {
    fn length(&self) -> f64 {
        match *self {
            Segment::Straight { length } => length,
            Segment::Arc { radius, angle } => radius * angle.abs(),
        }
    }

    fn curvature(&self) -> f64 {
        match *self {
            Segment::Straight { .. } => 0.0,
            Segment::Arc { radius, angle } => angle.signum() / radius,
        }
    }
}

/// Parametric description consumed by [`make_track`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrackSpec {
    pub segments: Vec<Segment>,
    pub closed: bool,
    /// Target spacing between waypoints, m.
    pub spacing: f64,
    /// Speed on straights, m/s.
    pub max_speed: f64,
    /// Cap on lateral acceleration used to slow the target speed in corners.
    pub max_lat_accel: f64,
    /// Longitudinal acceleration/deceleration allowed between speed levels.
    pub max_long_accel: f64,
    /// Target speed at the start line.
    pub start_speed: f64,
}

impl TrackSpec {
    /// Benchmark loop (~820 m): two 300 m straights, a wide 180° corner
    /// (R = 40 m) and a sharp section made of two 90° corners with R = 12 m.
    pub fn benchmark() -> Self {
        Self::benchmark_loop(300.0)
    }

    /// The benchmark loop with 150 m straights (~520 m), short enough for a
    /// lap inside a 500-step episode.
    pub fn desk() -> Self {
        Self::benchmark_loop(150.0)
    }

    /// Benchmark layout with both long straights set to `straight` metres.
    pub fn benchmark_loop(straight: f64) -> Self {
        Self {
            segments: vec![
                Segment::Straight { length: straight },
                Segment::Arc { radius: 40.0, angle: PI },
                Segment::Straight { length: straight },
                Segment::Arc { radius: 12.0, angle: PI / 2.0 },
                Segment::Straight { length: 56.0 },
                Segment::Arc { radius: 12.0, angle: PI / 2.0 },
            ],
            closed: true,
            spacing: 1.0,
            max_speed: 25.0,
            max_lat_accel: 4.0,
            max_long_accel: 2.5,
            start_speed: 8.0,
        }
    }

    /// Straight length if this is a [`TrackSpec::benchmark_loop`] layout.
    pub fn loop_straight(&self) -> Option<f64> {
        match self.segments.first() {
            Some(Segment::Straight { length }) if self.segments == Self::benchmark_loop(*length).segments => Some(*length),
            _ => None,
        }
    }

    pub fn circle(radius: f64, speed: f64) -> Self {
        Self {
            segments: vec![Segment::Arc { radius, angle: 2.0 * PI }],
            closed: true,
            spacing: 1.0,
            max_speed: speed,
            max_lat_accel: f64::INFINITY,
            max_long_accel: f64::INFINITY,
            start_speed: speed,
        }
    }

    pub fn straight(length: f64, speed: f64) -> Self {
        Self {
            segments: vec![Segment::Straight { length }],
            closed: false,
            spacing: 1.0,
            max_speed: speed,
            max_lat_accel: f64::INFINITY,
            max_long_accel: f64::INFINITY,
            start_speed: speed,
        }
    }
}

/// Closure tolerance for closed segment lists.
const CLOSURE_TOL: f64 = 1e-6;

/// Samples a segment list at uniform arc spacing and assigns a target speed
/// profile limited by lateral and longitudinal acceleration caps.
pub fn make_track(spec: &TrackSpec) -> Result<Track> {
    if spec.segments.is_empty() {
        return config("track needs at least one segment");
    }
    for s in &spec.segments {
        let ok = match *s {
            Segment::Straight { length } => length > 0.0 && length.is_finite(),
            Segment::Arc { radius, angle } => radius > 0.0 && angle != 0.0 && radius.is_finite() && angle.is_finite(),
        };
        if !ok {
            return config(format!("invalid segment {s:?}"));
        }
    }
    if !(spec.spacing > 0.0 && spec.max_speed > 0.0 && spec.max_lat_accel > 0.0 && spec.max_long_accel > 0.0) {
        return config("track spacing, speeds and acceleration caps must be positive");
    }
    // Segment start poses.
    let mut starts = Vec::with_capacity(spec.segments.len() + 1);
    let (mut x, mut y, mut h) = (0.0f64, 0.0f64, 0.0f64);
    starts.push((x, y, h));
    for s in &spec.segments {
        (x, y, h) = advance(x, y, h, s, s.length());
        starts.push((x, y, h));
    }
    let total: f64 = spec.segments.iter().map(|s| s.length()).sum();
    if spec.closed {
        let heading_gap = wrap_angle(h).abs();
        if x.hypot(y) > CLOSURE_TOL * total.max(1.0) || heading_gap > CLOSURE_TOL {
            return config(format!(
                "closed track does not close: ends at ({x:.6}, {y:.6}) heading {h:.6}"
            ));
        }
    }
    let n_seg = (total / spec.spacing).round().max(1.0) as usize;
    let ds = total / n_seg as f64;
    let n_pts = if spec.closed { n_seg } else { n_seg + 1 };
    let mut points = Vec::with_capacity(n_pts);
    let mut curvature = Vec::with_capacity(n_pts);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for i in 0..n_pts {
        let s = (i as f64 * ds).min(total);
        while seg + 1 < spec.segments.len() && s >= seg_start + spec.segments[seg].length() {
            seg_start += spec.segments[seg].length();
            seg += 1;
        }
        let (sx, sy, sh) = starts[seg];
        let (px, py, ph) = advance(sx, sy, sh, &spec.segments[seg], s - seg_start);
        points.push(Waypoint {
            x: px,
            y: py,
            heading: wrap_angle(ph),
            speed: 0.0,
        });
        curvature.push(spec.segments[seg].curvature());
    }
    let speeds = speed_profile(&curvature, ds, spec);
    for (p, v) in points.iter_mut().zip(speeds) {
        p.speed = v;
    }
    Track::from_waypoints(points, spec.closed)
}

fn advance(x: f64, y: f64, h: f64, seg: &Segment, s: f64) -> (f64, f64, f64) {
    match *seg {
        Segment::Straight { .. } => (x + s * h.cos(), y + s * h.sin(), h),
        Segment::Arc { radius, angle } => {
            let sign = angle.signum();
            let dh = sign * s / radius;
            // Centre of curvature sits on the left (right) for left (right) turns.
            let cx = x - sign * radius * h.sin();
            let cy = y + sign * radius * h.cos();
            let h2 = h + dh;
            (cx + sign * radius * h2.sin(), cy - sign * radius * h2.cos(), h2)
        }
    }
}

fn speed_profile(curvature: &[f64], ds: f64, spec: &TrackSpec) -> Vec<f64> {
    let n = curvature.len();
    let mut v: Vec<f64> = curvature
        .iter()
        .map(|k| {
            if *k == 0.0 {
                spec.max_speed
            } else {
                (spec.max_lat_accel / k.abs()).sqrt().min(spec.max_speed)
            }
        })
        .collect();
    if spec.max_long_accel.is_infinite() {
        return v;
    }
    let step = 2.0 * spec.max_long_accel * ds;
    v[0] = v[0].min(spec.start_speed);
    for i in 1..n {
        v[i] = v[i].min((v[i - 1] * v[i - 1] + step).sqrt());
    }
    if spec.closed {
        v[n - 1] = v[n - 1].min((v[0] * v[0] + step).sqrt());
    }
    for i in (0..n - 1).rev() {
        v[i] = v[i].min((v[i + 1] * v[i + 1] + step).sqrt());
    }
    v
}

impl Track {
    /// Builds a track from explicit waypoints; arc length is the cumulative
    /// chord length.
    pub fn from_waypoints(points: Vec<Waypoint>, closed: bool) -> Result<Self> {
        if points.len() < 2 {
            return config("a track needs at least two waypoints");
        }
        if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite() && p.heading.is_finite() && p.speed.is_finite())) {
            return config("non-finite waypoint");
        }
        let mut arc = Vec::with_capacity(points.len());
        arc.push(0.0);
        for w in points.windows(2) {
            let d = (w[1].x - w[0].x).hypot(w[1].y - w[0].y);
            if d <= 0.0 {
                return config("consecutive waypoints coincide");
            }
            arc.push(arc.last().unwrap() + d);
        }
        let mut length = *arc.last().unwrap();
        if closed {
            let (a, b) = (points.last().unwrap(), &points[0]);
            let d = (a.x - b.x).hypot(a.y - b.y);
            if d <= 0.0 {
                return config("closed track repeats its first waypoint at the end");
            }
            length += d;
        }
        Ok(Self {
            points,
            arc,
            length,
            closed,
        })
    }

    /// Waypoints from positions and speeds; headings follow the chord directions.
    pub fn from_points(xy: &[(f64, f64)], speeds: &[f64], closed: bool) -> Result<Self> {
        if xy.len() != speeds.len() {
            return config("positions and speeds differ in length");
        }
        let n = xy.len();
        if n < 2 {
            return config("a track needs at least two waypoints");
        }
        let mut pts = Vec::with_capacity(n);
        for i in 0..n {
            let (prev, next) = if closed {
                ((i + n - 1) % n, (i + 1) % n)
            } else {
                (i.saturating_sub(1), (i + 1).min(n - 1))
            };
            let heading = (xy[next].1 - xy[prev].1).atan2(xy[next].0 - xy[prev].0);
            pts.push(Waypoint {
                x: xy[i].0,
                y: xy[i].1,
                heading,
                speed: speeds[i],
            });
        }
        Self::from_waypoints(pts, closed)
    }

    pub fn points(&self) -> &[Waypoint] {
        &self.points
    }

    pub fn arc_lengths(&self) -> &[f64] {
        &self.arc
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn num_segments(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len() - 1
        }
    }

    /// Endpoints and start arc of polyline segment `i`.
    pub fn segment(&self, i: usize) -> (&Waypoint, &Waypoint, f64, f64) {
        let j = (i + 1) % self.points.len();
        let s0 = self.arc[i];
        let s1 = if j == 0 { self.length } else { self.arc[j] };
        (&self.points[i], &self.points[j], s0, s1)
    }

    /// Maps an arc position onto `[0, length)` for closed tracks or clamps it
    /// for open ones.
    pub fn normalize_arc(&self, s: f64) -> f64 {
        if self.closed {
            let r = s.rem_euclid(self.length);
            if r >= self.length {
                0.0
            } else {
                r
            }
        } else {
            s.clamp(0.0, self.length)
        }
    }

    /// Index of the segment containing arc position `s` (already normalised).
    pub fn segment_at(&self, s: f64) -> usize {
        let idx = self.arc.partition_point(|a| *a <= s);
        idx.saturating_sub(1).min(self.num_segments() - 1)
    }

    /// Linear interpolation of position, heading and target speed at arc `s`.
    pub fn sample(&self, s: f64) -> Waypoint {
        let s = self.normalize_arc(s);
        let i = self.segment_at(s);
        let (a, b, s0, s1) = self.segment(i);
        let t = ((s - s0) / (s1 - s0)).clamp(0.0, 1.0);
        interpolate(a, b, t)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "x,y,heading,target_speed,arc_length")?;
        for (p, s) in self.points.iter().zip(&self.arc) {
            writeln!(w, "{},{},{},{},{}", p.x, p.y, p.heading, p.speed, s)?;
        }
        Ok(())
    }

    /// Reads the five-column CSV written by [`Track::write_csv`]. Stored arc
    /// lengths must agree with the chord lengths to within 1 mm.
    pub fn read_csv<R: BufRead>(r: R, closed: bool) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty track file".into()))??;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != ["x", "y", "heading", "target_speed", "arc_length"] {
            return Err(Error::Parse(format!("unexpected track header {header:?}")));
        }
        let mut pts = Vec::new();
        let mut arcs = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("track line {}: {e}", n + 2)))?;
            if vals.len() != 5 {
                return Err(Error::Parse(format!("track line {} has {} columns", n + 2, vals.len())));
            }
            pts.push(Waypoint {
                x: vals[0],
                y: vals[1],
                heading: vals[2],
                speed: vals[3],
            });
            arcs.push(vals[4]);
        }
        let track = Self::from_waypoints(pts, closed)?;
        for (k, (a, b)) in track.arc.iter().zip(&arcs).enumerate() {
            if (a - b).abs() > 1e-3 {
                return Err(Error::Parse(format!(
                    "arc_length {b} on row {k} disagrees with waypoint spacing ({a})"
                )));
            }
        }
        Ok(track)
    }
}

pub(crate) fn interpolate(a: &Waypoint, b: &Waypoint, t: f64) -> Waypoint {
    Waypoint {
        x: a.x + t * (b.x - a.x),
        y: a.y + t * (b.y - a.y),
        heading: wrap_angle(a.heading + t * wrap_angle(b.heading - a.heading)),
        speed: a.speed + t * (b.speed - a.speed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_headings_are_tangent_with_constant_curvature() {
        let r = 50.0;
        let t = make_track(&TrackSpec::circle(r, 10.0)).unwrap();
        let n = t.points().len();
        for (i, p) in t.points().iter().enumerate() {
            // centre at (0, r) for a left turn starting at the origin heading +x
            let radial = (p.y - r).atan2(p.x);
            let tangent = wrap_angle(radial + PI / 2.0);
            assert!(wrap_angle(p.heading - tangent).abs() < 1e-9);
            assert!(((p.x).hypot(p.y - r) - r).abs() < 1e-9);
            let q = &t.points()[(i + 1) % n];
            let ds = (q.x - p.x).hypot(q.y - p.y);
            let kappa = wrap_angle(q.heading - p.heading) / (2.0 * (ds / (2.0 * r)).asin() * r);
            assert!((kappa - 1.0 / r).abs() < 1e-9);
        }
    }

    #[test]
    fn open_straight_has_segment_length() {
        let t = make_track(&TrackSpec::straight(123.0, 5.0)).unwrap();
        assert!((t.length() - 123.0).abs() < 1e-9);
        assert!(!t.is_closed());
        for p in t.points() {
            assert!(p.heading.abs() < 1e-12);
        }
    }

    #[test]
    fn benchmark_track_geometry() {
        let spec = TrackSpec::benchmark();
        let straights: Vec<f64> = spec
            .segments
            .iter()
            .filter_map(|s| match s {
                Segment::Straight { length } => Some(*length),
                _ => None,
            })
            .collect();
        assert!(straights.iter().filter(|l| **l >= 300.0).count() >= 2);
        let radii: Vec<f64> = spec
            .segments
            .iter()
            .filter_map(|s| match s {
                Segment::Arc { radius, .. } => Some(*radius),
                _ => None,
            })
            .collect();
        assert!(radii.iter().any(|r| *r >= 40.0));
        assert!(radii.iter().any(|r| *r <= 15.0));
        let t = make_track(&spec).unwrap();
        assert!(t.is_closed());
        // chords cut the corners slightly
        let nominal = 600.0 + 40.0 * PI + 56.0 + 12.0 * PI;
        assert!(t.length() < nominal && nominal - t.length() < 0.05, "{}", t.length());
        let arc = t.arc_lengths();
        assert!(arc.windows(2).all(|w| w[1] > w[0]));
        // Straights: heading matches the chord direction.
        for i in 0..290 {
            let (a, b, _, _) = t.segment(i);
            let chord = (b.y - a.y).atan2(b.x - a.x);
            assert!(wrap_angle(a.heading - chord).abs() < 1e-6);
        }
        // Corners are slower than the straights.
        let vmin = t.points().iter().map(|p| p.speed).fold(f64::INFINITY, f64::min);
        let vmax = t.points().iter().map(|p| p.speed).fold(0.0, f64::max);
        assert!((vmax - spec.max_speed).abs() < 1e-12);
        assert!((vmin - (spec.max_lat_accel * 12.0).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn non_closing_segments_rejected() {
        let spec = TrackSpec {
            segments: vec![
                Segment::Straight { length: 100.0 },
                Segment::Arc { radius: 20.0, angle: PI },
            ],
            ..TrackSpec::benchmark()
        };
        assert!(matches!(make_track(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn csv_round_trip() {
        let t = make_track(&TrackSpec::benchmark()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Track::read_csv(buf.as_slice(), true).unwrap();
        assert_eq!(back.points().len(), t.points().len());
        assert!((back.length() - t.length()).abs() < 1e-9);
        for (a, b) in back.points().iter().zip(t.points()) {
            assert!((a.x - b.x).abs() < 1e-12 && (a.speed - b.speed).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_wraps_on_closed_tracks() {
        let t = make_track(&TrackSpec::circle(30.0, 10.0)).unwrap();
        let a = t.sample(5.0);
        let b = t.sample(5.0 + t.length());
        assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
    }
}
