//! Points, direction sets and the radial shells used as frontier windows.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// A point in the plane; one-dimensional models keep the second coordinate at 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point(pub [f64; 2]);

impl Point {
    pub const ORIGIN: Point = Point([0.0, 0.0]);

    pub fn on_line(x: f64) -> Self {
        Point([x, 0.0])
    }

    pub fn new(x: f64, y: f64) -> Self {
        Point([x, y])
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.0[0]
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.0[1]
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        if self.0[1] == 0.0 {
            self.0[0].abs()
        } else {
            self.0[0].hypot(self.0[1])
        }
    }

    /// Polar angle in `[0, 2pi)`.
    pub fn angle(&self) -> f64 {
        let a = self.0[1].atan2(self.0[0]);
        if a < 0.0 {
            a + TAU
        } else {
            a
        }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.0[0] - other.0[0]).hypot(self.0[1] - other.0[1])
    }
}

/// Closed angular arc `[start, start + length]`, angles in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub start: f64,
    pub length: f64,
}

impl Arc {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        let length = end - start;
        if !(length > 0.0 && length <= TAU + 1e-12) {
            return Err(Error::InvalidWindow(format!("arc [{start}, {end}] must have 0 < length <= 2pi")));
        }
        Ok(Arc { start: start.rem_euclid(TAU), length: length.min(TAU) })
    }

    pub fn full() -> Self {
        Arc { start: 0.0, length: TAU }
    }

    pub fn contains(&self, angle: f64) -> bool {
        (angle - self.start).rem_euclid(TAU) <= self.length
    }

    /// Length of the intersection with another arc.
    pub fn overlap(&self, other: &Arc) -> f64 {
        // unroll both arcs onto [0, 4pi) relative to self.start
        let b0 = (other.start - self.start).rem_euclid(TAU);
        let mut total = 0.0;
        for shift in [-TAU, 0.0, TAU] {
            let lo = (b0 + shift).max(0.0);
            let hi = (b0 + shift + other.length).min(self.length);
            if hi > lo {
                total += hi - lo;
            }
        }
        total
    }
}

/// Direction set Theta: a subset of `S^0 = {-1, +1}` in d=1 or a union of arcs of `S^1` in d=2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionSet {
    Signs { plus: bool, minus: bool },
    Arcs(Vec<Arc>),
}

impl DirectionSet {
    pub fn both_signs() -> Self {
        DirectionSet::Signs { plus: true, minus: true }
    }

    pub fn plus() -> Self {
        DirectionSet::Signs { plus: true, minus: false }
    }

    pub fn minus() -> Self {
        DirectionSet::Signs { plus: false, minus: true }
    }

    pub fn full_circle() -> Self {
        DirectionSet::Arcs(vec![Arc::full()])
    }

    pub fn is_empty(&self) -> bool {
        match self {
            DirectionSet::Signs { plus, minus } => !plus && !minus,
            DirectionSet::Arcs(arcs) => arcs.iter().all(|a| a.length <= 0.0),
        }
    }

    pub fn is_full(&self) -> bool {
        match self {
            DirectionSet::Signs { plus, minus } => *plus && *minus,
            DirectionSet::Arcs(arcs) => self.measure() >= TAU - 1e-12 && !arcs.is_empty(),
        }
    }

    pub fn dimension(&self) -> u8 {
        match self {
            DirectionSet::Signs { .. } => 1,
            DirectionSet::Arcs(_) => 2,
        }
    }

    /// Surface measure: counting measure on `S^0`, arc length on `S^1`.
    pub fn measure(&self) -> f64 {
        match self {
            DirectionSet::Signs { plus, minus } => (*plus as u8 + *minus as u8) as f64,
            DirectionSet::Arcs(arcs) => {
                // arcs of a single set may overlap; measure the union by sampling the boundaries
                let mut cuts: Vec<f64> = arcs
                    .iter()
                    .flat_map(|a| [a.start, (a.start + a.length).rem_euclid(TAU)])
                    .collect();
                cuts.push(0.0);
                cuts.push(TAU);
                cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
                cuts.dedup();
                let mut total = 0.0;
                for w in cuts.windows(2) {
                    let mid = 0.5 * (w[0] + w[1]);
                    if arcs.iter().any(|a| a.contains(mid)) {
                        total += w[1] - w[0];
                    }
                }
                if arcs.iter().any(|a| a.length >= TAU) {
                    TAU
                } else {
                    total
                }
            }
        }
    }

    /// Whether the direction of `p` lies in the set. The origin has no direction and is
    /// counted as belonging to every nonempty set.
    pub fn contains(&self, p: &Point) -> bool {
        match self {
            DirectionSet::Signs { plus, minus } => {
                let x = p.x();
                (x >= 0.0 && *plus) || (x <= 0.0 && *minus)
            }
            DirectionSet::Arcs(arcs) => {
                if p.x() == 0.0 && p.y() == 0.0 {
                    return !arcs.is_empty();
                }
                let a = p.angle();
                arcs.iter().any(|arc| arc.contains(a))
            }
        }
    }

    /// Measure of the intersection of two direction sets of the same dimension.
    pub fn overlap(&self, other: &DirectionSet) -> f64 {
        match (self, other) {
            (DirectionSet::Signs { plus: p1, minus: m1 }, DirectionSet::Signs { plus: p2, minus: m2 }) => {
                ((*p1 && *p2) as u8 + (*m1 && *m2) as u8) as f64
            }
            (DirectionSet::Arcs(a), DirectionSet::Arcs(b)) => {
                a.iter().map(|x| b.iter().map(|y| x.overlap(y)).sum::<f64>()).sum()
            }
            _ => 0.0,
        }
    }

    /// Signed directions as unit vectors (d=1 only).
    pub fn signs(&self) -> Vec<f64> {
        match self {
            DirectionSet::Signs { plus, minus } => {
                let mut v = Vec::with_capacity(2);
                if *plus {
                    v.push(1.0);
                }
                if *minus {
                    v.push(-1.0);
                }
                v
            }
            DirectionSet::Arcs(_) => Vec::new(),
        }
    }
}

/// A concrete region at one observation time.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    Everywhere,
    /// `{ s x : s in [inner, outer], x in dirs }`, with `inner >= 0`.
    Shell { inner: f64, outer: f64, dirs: DirectionSet },
}

impl Region {
    #[inline]
    pub fn contains(&self, p: &Point) -> bool {
        match self {
            Region::Everywhere => true,
            Region::Shell { inner, outer, dirs } => {
                let r = p.norm();
                r >= *inner && r <= *outer && dirs.contains(p)
            }
        }
    }

    pub fn indicator(&self, p: &Point) -> f64 {
        if self.contains(p) {
            1.0
        } else {
            0.0
        }
    }

    /// True when the region is invariant under rotations about the origin.
    pub fn is_rotation_invariant(&self) -> bool {
        match self {
            Region::Everywhere => true,
            Region::Shell { dirs, .. } => dirs.is_full(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn point_norm_and_angle() {
        assert_eq!(Point::on_line(-3.0).norm(), 3.0);
        assert!((Point::new(3.0, 4.0).norm() - 5.0).abs() < 1e-15);
        assert!((Point::new(0.0, -1.0).angle() - 1.5 * PI).abs() < 1e-15);
    }

    #[test]
    fn arcs_wrap_around() {
        let a = Arc::new(-0.5, 0.5).unwrap();
        assert!(a.contains(0.1));
        assert!(a.contains(TAU - 0.2));
        assert!(!a.contains(PI));
        let b = Arc::new(0.25, 1.0).unwrap();
        assert!((a.overlap(&b) - 0.25).abs() < 1e-12);
        assert!((b.overlap(&a) - 0.25).abs() < 1e-12);
        assert!(Arc::new(1.0, 1.0).is_err());
    }

    #[test]
    fn direction_measures() {
        assert_eq!(DirectionSet::both_signs().measure(), 2.0);
        assert_eq!(DirectionSet::plus().measure(), 1.0);
        assert!((DirectionSet::full_circle().measure() - TAU).abs() < 1e-12);
        let half = DirectionSet::Arcs(vec![Arc::new(0.0, PI).unwrap()]);
        assert!((half.measure() - PI).abs() < 1e-12);
        assert!(DirectionSet::Signs { plus: false, minus: false }.is_empty());
    }

    #[test]
    fn shell_membership() {
        let r = Region::Shell { inner: 1.0, outer: 2.0, dirs: DirectionSet::plus() };
        assert!(r.contains(&Point::on_line(1.5)));
        assert!(!r.contains(&Point::on_line(-1.5)));
        assert!(!r.contains(&Point::on_line(2.5)));
        let ring = Region::Shell { inner: 1.0, outer: 2.0, dirs: DirectionSet::full_circle() };
        assert!(ring.contains(&Point::new(1.0, 1.0)));
        assert!(ring.is_rotation_invariant());
    }
}
