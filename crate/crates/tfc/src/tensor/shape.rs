use thiserror::Error;

/// Role of an axis in a model-facing tensor layout.
///
/// The convention throughout the crate is `[batch, time, spatial.., feature]`
/// with the feature axis last and the time axis (when present) ahead of the
/// spatial axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisRole {
    Batch,
    Time,
    /// `Spatial(0)` is the leading spatial axis (height for D=2).
    Spatial(u8),
    Feature,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShapeError {
    #[error("duplicate axis role {0:?}")]
    DuplicateRole(AxisRole),
    #[error("feature axis must be last")]
    FeatureNotLast,
    #[error("time axis must precede spatial axes")]
    TimeAfterSpatial,
    #[error("axis length must be >= 1")]
    ZeroLength,
}

/// Ordered axis lengths with a named role per axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape {
    axes: Vec<(AxisRole, usize)>,
}

impl Shape {
    pub fn new(axes: Vec<(AxisRole, usize)>) -> Result<Self, ShapeError> {
        let mut seen = Vec::new();
        let mut spatial_seen = false;
        for (i, &(role, len)) in axes.iter().enumerate() {
            if len == 0 {
                return Err(ShapeError::ZeroLength);
            }
            if seen.contains(&role) {
                return Err(ShapeError::DuplicateRole(role));
            }
            seen.push(role);
            match role {
                AxisRole::Feature if i != axes.len() - 1 => {
                    return Err(ShapeError::FeatureNotLast)
                }
                AxisRole::Spatial(_) => spatial_seen = true,
                AxisRole::Time if spatial_seen => return Err(ShapeError::TimeAfterSpatial),
                _ => {}
            }
        }
        Ok(Self { axes })
    }

    /// `[batch, time, spatial.., features]` for a window of D-dimensional frames.
    pub fn window(batch: usize, time: usize, spatial: &[usize], features: usize) -> Self {
        let mut axes = vec![(AxisRole::Batch, batch), (AxisRole::Time, time)];
        for (i, &s) in spatial.iter().enumerate() {
            axes.push((AxisRole::Spatial(i as u8), s));
        }
        axes.push((AxisRole::Feature, features));
        Self { axes }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(|&(_, l)| l).collect()
    }

    pub fn get(&self, role: AxisRole) -> Option<usize> {
        self.axes.iter().find(|&&(r, _)| r == role).map(|&(_, l)| l)
    }

    pub fn axis_of(&self, role: AxisRole) -> Option<usize> {
        self.axes.iter().position(|&(r, _)| r == role)
    }
}
