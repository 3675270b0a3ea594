use super::{GeometryError, Scalar, UnitVector};

/// `{x : cos(x, centroid) >= threshold}` on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalCap<T> {
    centroid: UnitVector<T>,
    threshold: T,
}

impl<T: Scalar> SphericalCap<T> {
    pub fn new(centroid: UnitVector<T>, threshold: T) -> Result<Self, GeometryError> {
        if !(threshold > -T::one() && threshold < T::one()) {
            return Err(GeometryError::ThresholdOutOfRange(
                threshold.to_f64().unwrap_or(f64::NAN),
            ));
        }
        Ok(SphericalCap { centroid, threshold })
    }

    pub fn centroid(&self) -> &UnitVector<T> {
        &self.centroid
    }

    pub fn threshold(&self) -> T {
        self.threshold
    }

    /// Angular radius `arccos(threshold)`.
    pub fn radius(&self) -> T {
        self.threshold.acos()
    }

    /// Membership; the boundary belongs to the cap.
    pub fn contains(&self, x: &UnitVector<T>) -> bool {
        x.cosine(&self.centroid) >= self.threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CapRelation<T> {
    /// No point lies in both caps. `margin` = separation − radius sum (radians).
    Disjoint { margin: T },
    /// Some point lies in both caps. `margin` = radius sum − separation;
    /// tangency is reported here with margin 0.
    Intersect { margin: T },
}

impl<T: Scalar> CapRelation<T> {
    pub fn intersects(&self) -> bool {
        matches!(self, CapRelation::Intersect { .. })
    }

    pub fn margin(&self) -> T {
        match *self {
            CapRelation::Disjoint { margin } | CapRelation::Intersect { margin } => margin,
        }
    }
}

/// Two caps meet iff the angle between their centroids is at most the sum
/// of their angular radii.
pub fn caps_intersect<T: Scalar>(a: &SphericalCap<T>, b: &SphericalCap<T>) -> CapRelation<T> {
    let separation = a.centroid.angle(&b.centroid);
    let reach = a.radius() + b.radius();
    let margin = (separation - reach).abs();
    if separation <= reach {
        CapRelation::Intersect { margin }
    } else {
        CapRelation::Disjoint { margin }
    }
}
