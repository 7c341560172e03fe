//! Critical-point detection on grid fields, Jacobian-eigenvalue
//! classification, and the inverse-distance variability field accumulated
//! over critical points from many field realizations.

use super::FlowError;
use crate::field::{DomainSpec, GridVectorField, ScalarField};
use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalPointKind {
    Source,
    Sink,
    Saddle,
    Center,
    SpiralSource,
    SpiralSink,
    Degenerate,
}

/// A located zero of the interpolated field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub position: Vec<f64>,
    pub kind: CriticalPointKind,
    /// Row-major v x v Jacobian of the interpolant at `position`.
    pub jacobian: Vec<f64>,
}

/// The multilinear interpolant of one grid cell, extended polynomially to
/// all of space so Newton stencils may poke past the faces.
struct CellInterpolant {
    axes: usize,
    components: usize,
    lo: [f64; 3],
    width: [f64; 3],
    /// 2^axes corner vectors, corner bit a set = high side of axis a.
    corners: Vec<Vec<f64>>,
}

impl CellInterpolant {
    fn eval(&self, p: &[f64]) -> Vec<f64> {
        let mut t = [0.0f64; 3];
        for a in 0..self.axes {
            t[a] = (p[a] - self.lo[a]) / self.width[a];
        }
        let mut out = vec![0.0; self.components];
        for (corner, values) in self.corners.iter().enumerate() {
            let mut w = 1.0;
            for (a, ta) in t.iter().enumerate().take(self.axes) {
                w *= if (corner >> a) & 1 == 1 { *ta } else { 1.0 - ta };
            }
            for (o, v) in out.iter_mut().zip(values) {
                *o += w * v;
            }
        }
        out
    }

    /// Central differences of the interpolant; exact here because the
    /// interpolant is linear along each axis.
    fn jacobian(&self, p: &[f64]) -> Vec<f64> {
        let v = self.components;
        let mut jac = vec![0.0; v * self.axes];
        let mut q = p.to_vec();
        for a in 0..self.axes {
            let delta = 0.5 * self.width[a];
            q[a] = p[a] + delta;
            let hi = self.eval(&q);
            q[a] = p[a] - delta;
            let lo = self.eval(&q);
            q[a] = p[a];
            for c in 0..v {
                jac[c * self.axes + a] = (hi[c] - lo[c]) / (2.0 * delta);
            }
        }
        jac
    }

    fn clamp_into_cell(&self, p: &mut [f64]) {
        for a in 0..self.axes {
            p[a] = p[a].clamp(self.lo[a], self.lo[a] + self.width[a]);
        }
    }

    fn center(&self) -> Vec<f64> {
        (0..self.axes)
            .map(|a| self.lo[a] + 0.5 * self.width[a])
            .collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scan every grid cell: where each vector component attains both signs (or
/// zero) among the cell corners, refine a zero of the multilinear
/// interpolant with damped in-cell Newton from the cell center. Accepted
/// points are deduplicated at half a cell width.
pub fn detect_critical_points(
    field: &GridVectorField,
    zero_tolerance: f64,
    refine_iters: usize,
) -> Vec<CriticalPoint> {
    let domain = field.domain();
    let axes = domain.axes();
    let v = field.components();
    let dims = domain.dims();
    let n_corners = 1usize << axes;
    let dedupe_radius = 0.5 * domain.min_spacing();

    let mut found: Vec<CriticalPoint> = Vec::new();
    let mut cell = vec![0usize; axes];
    'cells: loop {
        // gather corner vectors
        let mut corners = Vec::with_capacity(n_corners);
        let mut idx = vec![0usize; axes];
        for corner in 0..n_corners {
            for a in 0..axes {
                idx[a] = cell[a] + ((corner >> a) & 1);
            }
            corners.push(field.node(domain.linear_index(&idx)).to_vec());
        }

        // sign screening per component
        let candidate = (0..v).all(|c| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for corner in &corners {
                lo = lo.min(corner[c]);
                hi = hi.max(corner[c]);
            }
            lo <= 0.0 && hi >= 0.0
        });

        if candidate {
            let mut interp = CellInterpolant {
                axes,
                components: v,
                lo: [0.0; 3],
                width: [0.0; 3],
                corners,
            };
            for a in 0..axes {
                interp.lo[a] = domain.node_coordinate(a, cell[a]);
                interp.width[a] = domain.node_coordinate(a, cell[a] + 1) - interp.lo[a];
            }
            if let Some(point) = refine_in_cell(&interp, zero_tolerance, refine_iters) {
                let duplicate = found.iter().any(|cp| {
                    cp.position
                        .iter()
                        .zip(&point)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt()
                        < dedupe_radius
                });
                if !duplicate {
                    let jacobian = interp.jacobian(&point);
                    let kind = classify_critical_point(&jacobian)
                        .unwrap_or(CriticalPointKind::Degenerate);
                    found.push(CriticalPoint {
                        position: point,
                        kind,
                        jacobian,
                    });
                }
            }
        }

        // next cell, first axis fastest
        let mut a = 0;
        loop {
            cell[a] += 1;
            if cell[a] < dims[a] - 1 {
                break;
            }
            cell[a] = 0;
            a += 1;
            if a == axes {
                break 'cells;
            }
        }
    }
    found
}

fn refine_in_cell(
    interp: &CellInterpolant,
    zero_tolerance: f64,
    refine_iters: usize,
) -> Option<Vec<f64>> {
    let axes = interp.axes;
    let mut p = interp.center();
    let step_floor = 1e-15 * interp.width[..axes].iter().fold(0.0f64, |m, w| m.max(*w));
    for _ in 0..refine_iters {
        let value = interp.eval(&p);
        let jac = interp.jacobian(&p);
        let j = DMatrix::from_row_slice(axes, axes, &jac[..axes * axes]);
        let rhs = DVector::from_column_slice(&value);
        let delta = match j.lu().solve(&rhs) {
            Some(d) => d,
            None => break,
        };
        let mut next = p.clone();
        for a in 0..axes {
            next[a] -= delta[a];
        }
        interp.clamp_into_cell(&mut next);
        let moved = p
            .iter()
            .zip(&next)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        p = next;
        if moved < step_floor {
            break;
        }
    }
    let residual = norm(&interp.eval(&p));
    let inside = (0..axes).all(|a| {
        let slack = 1e-6 * interp.width[a];
        p[a] >= interp.lo[a] - slack && p[a] <= interp.lo[a] + interp.width[a] + slack
    });
    (residual < zero_tolerance && inside).then_some(p)
}

/// Classify a zero by the eigenvalues of its Jacobian. Real-part comparisons
/// use a tolerance of `1e-9 * ||J||_F`; an eigenvalue smaller than that in
/// magnitude makes the point degenerate, as does any eigenvalue combination
/// outside the source/sink/saddle/center cases.
pub fn classify_critical_point(jacobian: &[f64]) -> Result<CriticalPointKind, FlowError> {
    let v = match jacobian.len() {
        4 => 2,
        9 => 3,
        len => return Err(FlowError::NonSquare { len }),
    };
    let m = DMatrix::from_row_slice(v, v, jacobian);
    let tol = 1e-9 * m.norm();
    let eig = m.complex_eigenvalues();
    let eig: Vec<Complex<f64>> = eig.iter().copied().collect();

    if eig.iter().any(|l| l.norm() < tol) {
        return Ok(CriticalPointKind::Degenerate);
    }
    let any_pos = eig.iter().any(|l| l.re > tol);
    let any_neg = eig.iter().any(|l| l.re < -tol);
    let all_pos = eig.iter().all(|l| l.re > tol);
    let all_neg = eig.iter().all(|l| l.re < -tol);
    let all_zero_re = eig.iter().all(|l| l.re.abs() <= tol);
    let rotating = eig.iter().any(|l| l.im.abs() > tol);

    Ok(if any_pos && any_neg {
        CriticalPointKind::Saddle
    } else if all_pos {
        if rotating {
            CriticalPointKind::SpiralSource
        } else {
            CriticalPointKind::Source
        }
    } else if all_neg {
        if rotating {
            CriticalPointKind::SpiralSink
        } else {
            CriticalPointKind::Sink
        }
    } else if all_zero_re && rotating {
        CriticalPointKind::Center
    } else {
        CriticalPointKind::Degenerate
    })
}

/// Half the smallest grid spacing, the default clamp for the singular
/// inverse-distance kernel.
pub fn default_clamp_radius(domain: &DomainSpec) -> f64 {
    0.5 * domain.min_spacing()
}

/// Accumulate `sum_i 1 / max(D(node, C_i), clamp_radius)` at every grid
/// node, over critical-point positions gathered from all realizations.
pub fn variability_field(
    positions: &[Vec<f64>],
    domain: &DomainSpec,
    clamp_radius: f64,
) -> Result<ScalarField, FlowError> {
    if !(clamp_radius.is_finite() && clamp_radius > 0.0) {
        return Err(FlowError::InvalidParam(
            "clamp_radius must be positive".into(),
        ));
    }
    let nodes = domain.node_points();
    let data: Vec<f64> = nodes
        .par_iter()
        .map(|node| {
            positions
                .iter()
                .map(|c| {
                    let dist = node
                        .iter()
                        .zip(c)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt();
                    1.0 / dist.max(clamp_radius)
                })
                .sum()
        })
        .collect();
    Ok(ScalarField::new(domain.clone(), data).expect("inverse distances are finite"))
}
