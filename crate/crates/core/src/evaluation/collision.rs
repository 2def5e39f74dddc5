//! Oriented-rectangle overlap via the separating axis theorem.

/// Oriented bounding box of a vehicle footprint.
#[derive(Clone, Copy, Debug)]
pub struct Footprint {
    pub center: [f64; 2],
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl Footprint {
    pub fn new(x: f64, y: f64, heading: f64, length: f64, width: f64) -> Self {
        Footprint {
            center: [x, y],
            heading,
            half_length: length / 2.0,
            half_width: width / 2.0,
        }
    }

    fn axes(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.heading.sin_cos();
        [[c, s], [-s, c]]
    }

    /// Half-extent of the projection onto a unit axis.
    fn projected_radius(&self, axis: [f64; 2]) -> f64 {
        let [fwd, left] = self.axes();
        self.half_length * (fwd[0] * axis[0] + fwd[1] * axis[1]).abs()
            + self.half_width * (left[0] * axis[0] + left[1] * axis[1]).abs()
    }
}

/// True when the rectangles overlap. Touching counts as overlap (the
/// conservative call for a collision check).
pub fn collision_check(a: &Footprint, b: &Footprint) -> bool {
    let diff = [b.center[0] - a.center[0], b.center[1] - a.center[1]];
    let axes = [a.axes()[0], a.axes()[1], b.axes()[0], b.axes()[1]];
    for axis in axes {
        let dist = (diff[0] * axis[0] + diff[1] * axis[1]).abs();
        if dist > a.projected_radius(axis) + b.projected_radius(axis) {
            return false;
        }
    }
    true
}
