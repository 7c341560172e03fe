//! Closed-form test fields with known structure (critical points, periodic
//! orbits), used in place of large simulation datasets.

use super::FieldError;
use serde::{Deserialize, Serialize};

/// A closed-form vector field defined over the whole physical domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalyticFieldKind {
    /// Rotation about `center`: v = (-(y-cy), x-cx). One center-type zero.
    Center { center: [f64; 2] },
    /// Hyperbolic flow: v = (x-cx, -(y-cy)). One saddle-type zero.
    Saddle { center: [f64; 2] },
    /// Radial outflow v = p - c (2D or 3D).
    Source { center: Vec<f64> },
    /// Radial inflow v = -(p - c) (2D or 3D).
    Sink { center: Vec<f64> },
    /// Solid-body rotation inside `core_radius`, decaying circulation outside.
    RankineVortex {
        center: [f64; 2],
        core_radius: f64,
        strength: f64,
    },
    /// Steady two-cell recirculation, classically posed on [0,2]x[0,1]:
    /// u = -pi A sin(pi x) cos(pi y), v = pi A cos(pi x) sin(pi y).
    DoubleGyreSteady { amplitude: f64 },
    /// Swirling updraft about a vertical axis: rotation plus radial inflow in
    /// the xy-plane and a constant vertical component.
    TornadoSwirl3d {
        axis: [f64; 2],
        swirl: f64,
        inflow: f64,
        updraft: f64,
    },
}

impl AnalyticFieldKind {
    pub fn center(center: [f64; 2]) -> Self {
        Self::Center { center }
    }

    pub fn saddle(center: [f64; 2]) -> Self {
        Self::Saddle { center }
    }

    /// Number of axes the field is defined on, or `None` when it adapts to
    /// the domain (source/sink).
    pub fn axes(&self) -> Option<usize> {
        match self {
            Self::Center { .. }
            | Self::Saddle { .. }
            | Self::RankineVortex { .. }
            | Self::DoubleGyreSteady { .. } => Some(2),
            Self::TornadoSwirl3d { .. } => Some(3),
            Self::Source { center } | Self::Sink { center } => Some(center.len()),
        }
    }

    pub(super) fn check_axes(&self, domain_axes: usize) -> Result<(), FieldError> {
        match self.axes() {
            Some(a) if a != domain_axes => Err(FieldError::DimensionMismatch(format!(
                "{} field needs {a} axes, domain has {domain_axes}",
                self.name()
            ))),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Center { .. } => "center",
            Self::Saddle { .. } => "saddle",
            Self::Source { .. } => "source",
            Self::Sink { .. } => "sink",
            Self::RankineVortex { .. } => "rankine_vortex",
            Self::DoubleGyreSteady { .. } => "double_gyre_steady",
            Self::TornadoSwirl3d { .. } => "tornado_swirl_3d",
        }
    }

    /// Evaluate the field at a physical point.
    pub fn evaluate(&self, p: &[f64]) -> Vec<f64> {
        match self {
            Self::Center { center } => {
                vec![-(p[1] - center[1]), p[0] - center[0]]
            }
            Self::Saddle { center } => {
                vec![p[0] - center[0], -(p[1] - center[1])]
            }
            Self::Source { center } => p.iter().zip(center).map(|(x, c)| x - c).collect(),
            Self::Sink { center } => p.iter().zip(center).map(|(x, c)| c - x).collect(),
            Self::RankineVortex {
                center,
                core_radius,
                strength,
            } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let r2 = dx * dx + dy * dy;
                let core2 = core_radius * core_radius;
                // angular velocity: constant in the core, ~1/r^2 outside
                let w = if r2 <= core2 {
                    *strength
                } else {
                    strength * core2 / r2
                };
                vec![-w * dy, w * dx]
            }
            Self::DoubleGyreSteady { amplitude } => {
                let pi = std::f64::consts::PI;
                vec![
                    -pi * amplitude * (pi * p[0]).sin() * (pi * p[1]).cos(),
                    pi * amplitude * (pi * p[0]).cos() * (pi * p[1]).sin(),
                ]
            }
            Self::TornadoSwirl3d {
                axis,
                swirl,
                inflow,
                updraft,
            } => {
                let dx = p[0] - axis[0];
                let dy = p[1] - axis[1];
                vec![
                    -swirl * dy - inflow * dx,
                    swirl * dx - inflow * dy,
                    *updraft,
                ]
            }
        }
    }
}
