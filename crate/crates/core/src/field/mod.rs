//! Rectilinear vector-field grids, coordinate normalization, multilinear
//! interpolation, and analytic test-field generators.
//!
//! Grids are node-centered: a domain with `dims = [nx, ny]` and bounds
//! `[min, max]` places node `i` of an axis at `min + i * (max - min) / (n - 1)`,
//! so boundary nodes sample the bounds exactly. Storage is row-major with the
//! first axis varying fastest, vector components interleaved per node.

mod analytic;

pub use analytic::AnalyticFieldKind;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fraction of an axis' width that a query point may overshoot the bounds
/// before it is rejected as out of domain.
pub const DOMAIN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("point {point:?} outside physical domain on axis {axis}")]
    OutOfDomain { axis: usize, point: Vec<f64> },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("non-finite value in field data at index {0}")]
    NonFinite(usize),
    #[error("data length {actual} does not match domain ({expected})")]
    DataLength { expected: usize, actual: usize },
}

/// Axis sizes and physical bounds of a 2D or 3D rectilinear grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    dims: Vec<usize>,
    physical_min: Vec<f64>,
    physical_max: Vec<f64>,
}

impl DomainSpec {
    pub fn new(
        dims: Vec<usize>,
        physical_min: Vec<f64>,
        physical_max: Vec<f64>,
    ) -> Result<Self, FieldError> {
        let axes = dims.len();
        if !(2..=3).contains(&axes) {
            return Err(FieldError::InvalidDomain(format!(
                "expected 2 or 3 axes, got {axes}"
            )));
        }
        if physical_min.len() != axes || physical_max.len() != axes {
            return Err(FieldError::InvalidDomain(
                "bounds must have one entry per axis".into(),
            ));
        }
        if let Some(axis) = dims.iter().position(|&d| d < 2) {
            return Err(FieldError::InvalidDomain(format!(
                "axis {axis} has {} nodes, need at least 2",
                dims[axis]
            )));
        }
        for axis in 0..axes {
            if !physical_min[axis].is_finite() || !physical_max[axis].is_finite() {
                return Err(FieldError::InvalidDomain(format!(
                    "non-finite bound on axis {axis}"
                )));
            }
            if physical_min[axis] >= physical_max[axis] {
                return Err(FieldError::InvalidDomain(format!(
                    "bounds on axis {axis} not strictly ordered"
                )));
            }
        }
        Ok(Self {
            dims,
            physical_min,
            physical_max,
        })
    }

    /// Unit-spaced domain with bounds `[0, n-1]` per axis, the default used
    /// when a raw file's sidecar omits physical bounds.
    pub fn index_spaced(dims: Vec<usize>) -> Result<Self, FieldError> {
        let min = vec![0.0; dims.len()];
        let max = dims.iter().map(|&d| (d - 1) as f64).collect();
        Self::new(dims, min, max)
    }

    pub fn axes(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn physical_min(&self) -> &[f64] {
        &self.physical_min
    }

    pub fn physical_max(&self) -> &[f64] {
        &self.physical_max
    }

    pub fn node_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Node spacing along one axis.
    pub fn spacing(&self, axis: usize) -> f64 {
        (self.physical_max[axis] - self.physical_min[axis]) / (self.dims[axis] - 1) as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.axes())
            .map(|a| self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn diagonal(&self) -> f64 {
        (0..self.axes())
            .map(|a| (self.physical_max[a] - self.physical_min[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.axes()
            && (0..self.axes()).all(|a| {
                let tol = DOMAIN_TOLERANCE * (self.physical_max[a] - self.physical_min[a]);
                p[a] >= self.physical_min[a] - tol && p[a] <= self.physical_max[a] + tol
            })
    }

    fn check_inside(&self, p: &[f64]) -> Result<(), FieldError> {
        if p.len() != self.axes() {
            return Err(FieldError::DimensionMismatch(format!(
                "point has {} coordinates, domain has {} axes",
                p.len(),
                self.axes()
            )));
        }
        for a in 0..self.axes() {
            let tol = DOMAIN_TOLERANCE * (self.physical_max[a] - self.physical_min[a]);
            if p[a] < self.physical_min[a] - tol || p[a] > self.physical_max[a] + tol {
                return Err(FieldError::OutOfDomain {
                    axis: a,
                    point: p.to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Affine map of a physical point into `[-1, 1]^d`; bounds map exactly to
    /// the cube corners. Points within [`DOMAIN_TOLERANCE`] of a bound clamp
    /// to it.
    pub fn normalize(&self, p: &[f64]) -> Result<Vec<f64>, FieldError> {
        self.check_inside(p)?;
        Ok((0..self.axes())
            .map(|a| {
                let (lo, hi) = (self.physical_min[a], self.physical_max[a]);
                let t = (p[a].clamp(lo, hi) - lo) / (hi - lo);
                2.0 * t - 1.0
            })
            .collect())
    }

    /// Inverse of [`DomainSpec::normalize`].
    pub fn denormalize(&self, q: &[f64]) -> Result<Vec<f64>, FieldError> {
        if q.len() != self.axes() {
            return Err(FieldError::DimensionMismatch(format!(
                "point has {} coordinates, domain has {} axes",
                q.len(),
                self.axes()
            )));
        }
        Ok((0..self.axes())
            .map(|a| {
                let (lo, hi) = (self.physical_min[a], self.physical_max[a]);
                lo + (q[a] + 1.0) * 0.5 * (hi - lo)
            })
            .collect())
    }

    /// Flat storage index of a multi-index; the first axis varies fastest.
    pub fn linear_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for a in (0..self.axes()).rev() {
            flat = flat * self.dims[a] + idx[a];
        }
        flat
    }

    /// Physical coordinate of node `i` along `axis`.
    pub fn node_coordinate(&self, axis: usize, i: usize) -> f64 {
        // Hit the upper bound exactly rather than through rounding.
        if i == self.dims[axis] - 1 {
            self.physical_max[axis]
        } else {
            self.physical_min[axis] + i as f64 * self.spacing(axis)
        }
    }

    /// All node coordinates in storage order.
    pub fn node_points(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.node_count());
        let mut idx = vec![0usize; self.axes()];
        loop {
            out.push(
                (0..self.axes())
                    .map(|a| self.node_coordinate(a, idx[a]))
                    .collect(),
            );
            // odometer increment, first axis fastest
            let mut a = 0;
            loop {
                idx[a] += 1;
                if idx[a] < self.dims[a] {
                    break;
                }
                idx[a] = 0;
                a += 1;
                if a == self.axes() {
                    return out;
                }
            }
        }
    }

    /// Node coordinates flattened as `[x0,y0, x1,y1, ...]` in storage order.
    pub fn node_coords_interleaved(&self) -> Vec<f64> {
        let axes = self.axes();
        let mut out = Vec::with_capacity(self.node_count() * axes);
        for p in self.node_points() {
            out.extend_from_slice(&p);
        }
        out
    }
}

/// A vector field sampled on a rectilinear grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridVectorField {
    domain: DomainSpec,
    components: usize,
    data: Vec<f64>,
}

impl GridVectorField {
    pub fn new(domain: DomainSpec, components: usize, data: Vec<f64>) -> Result<Self, FieldError> {
        if components != domain.axes() {
            return Err(FieldError::DimensionMismatch(format!(
                "field with {components} components on a domain with {} axes",
                domain.axes()
            )));
        }
        let expected = domain.node_count() * components;
        if data.len() != expected {
            return Err(FieldError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(i));
        }
        Ok(Self {
            domain,
            components,
            data,
        })
    }

    /// Sample `f` at every grid node.
    pub fn from_fn<F>(domain: DomainSpec, components: usize, f: F) -> Result<Self, FieldError>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let mut data = Vec::with_capacity(domain.node_count() * components);
        for p in domain.node_points() {
            let v = f(&p);
            debug_assert_eq!(v.len(), components);
            data.extend_from_slice(&v);
        }
        Self::new(domain, components, data)
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Stored vector at a flat node index.
    pub fn node(&self, flat: usize) -> &[f64] {
        &self.data[flat * self.components..(flat + 1) * self.components]
    }

    /// Multilinear (bilinear / trilinear) interpolation at a physical point.
    pub fn sample(&self, p: &[f64]) -> Result<Vec<f64>, FieldError> {
        self.domain.check_inside(p)?;
        let axes = self.domain.axes();
        let mut cell = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..axes {
            let lo = self.domain.physical_min[a];
            let hi = self.domain.physical_max[a];
            let t = (p[a].clamp(lo, hi) - lo) / self.domain.spacing(a);
            let max_cell = self.domain.dims[a] - 2;
            let i = (t.floor() as usize).min(max_cell);
            cell[a] = i;
            frac[a] = (t - i as f64).clamp(0.0, 1.0);
        }
        let mut out = vec![0.0; self.components];
        for corner in 0..(1usize << axes) {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..axes {
                let hi_bit = (corner >> a) & 1 == 1;
                w *= if hi_bit { frac[a] } else { 1.0 - frac[a] };
                idx[a] = cell[a] + hi_bit as usize;
            }
            if w == 0.0 {
                continue;
            }
            let node = self.node(self.domain.linear_index(&idx[..axes]));
            for (o, v) in out.iter_mut().zip(node) {
                *o += w * v;
            }
        }
        Ok(out)
    }

    /// Largest absolute component value, useful for scaling diagnostics.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// A scalar quantity sampled on the same grids as [`GridVectorField`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    domain: DomainSpec,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(domain: DomainSpec, data: Vec<f64>) -> Result<Self, FieldError> {
        if data.len() != domain.node_count() {
            return Err(FieldError::DataLength {
                expected: domain.node_count(),
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(i));
        }
        Ok(Self { domain, data })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn value(&self, flat: usize) -> f64 {
        self.data[flat]
    }
}

/// Sample an analytic generator at every node of the domain.
pub fn generate_analytic(
    kind: &AnalyticFieldKind,
    domain: &DomainSpec,
) -> Result<GridVectorField, FieldError> {
    kind.check_axes(domain.axes())?;
    GridVectorField::from_fn(domain.clone(), domain.axes(), |p| kind.evaluate(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square(n: usize) -> DomainSpec {
        DomainSpec::new(vec![n, n], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn rejects_bad_domains() {
        assert!(DomainSpec::new(vec![4], vec![0.0], vec![1.0]).is_err());
        assert!(DomainSpec::new(vec![4, 1], vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(DomainSpec::new(vec![4, 4], vec![0.0, 2.0], vec![1.0, 2.0]).is_err());
        assert!(DomainSpec::new(vec![2, 2, 2, 2], vec![0.0; 4], vec![1.0; 4]).is_err());
    }

    #[test]
    fn normalize_maps_bounds_and_midpoint() {
        let d = DomainSpec::new(vec![3, 3], vec![0.0, 0.0], vec![10.0, 10.0]).unwrap();
        assert_eq!(d.normalize(&[0.0, 0.0]).unwrap(), vec![-1.0, -1.0]);
        assert_eq!(d.normalize(&[10.0, 10.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(d.normalize(&[5.0, 5.0]).unwrap(), vec![0.0, 0.0]);
        let d1 = DomainSpec::new(vec![2, 2], vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        assert_eq!(d1.normalize(&[1.0, -2.0]).unwrap(), vec![0.5, -1.0]);
    }

    #[test]
    fn normalize_rejects_far_points_but_tolerates_edge_noise() {
        let d = unit_square(4);
        assert!(matches!(
            d.normalize(&[1.5, 0.5]),
            Err(FieldError::OutOfDomain { axis: 0, .. })
        ));
        // within tolerance of the upper bound: clamps rather than rejects
        let q = d.normalize(&[1.0 + 0.5e-9, 0.5]).unwrap();
        assert_eq!(q[0], 1.0);
    }

    #[test]
    fn normalize_roundtrip_is_identity() {
        let d = DomainSpec::new(vec![5, 4, 3], vec![-3.0, 0.0, 10.0], vec![7.0, 2.0, 11.0]).unwrap();
        for p in d.node_points() {
            let back = d.denormalize(&d.normalize(&p).unwrap()).unwrap();
            for (a, (x, y)) in p.iter().zip(&back).enumerate() {
                let scale = d.physical_max[a] - d.physical_min[a];
                assert!((x - y).abs() <= 1e-12 * scale, "{p:?} -> {back:?}");
            }
        }
    }

    #[test]
    fn node_order_is_first_axis_fastest() {
        let d = DomainSpec::new(vec![2, 2], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(
            d.node_points(),
            vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 1.0]
            ]
        );
        let d3 = DomainSpec::new(vec![2, 2, 2], vec![0.0; 3], vec![1.0; 3]).unwrap();
        assert_eq!(d3.node_points().len(), 8);
    }

    #[test]
    fn axis_nodes_hit_midpoint_and_bounds() {
        let d = DomainSpec::new(vec![3, 2], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(d.node_coordinate(0, 0), 0.0);
        assert_eq!(d.node_coordinate(0, 1), 0.5);
        assert_eq!(d.node_coordinate(0, 2), 1.0);
    }

    #[test]
    fn interpolation_preserves_constants() {
        let d = unit_square(4);
        let f = GridVectorField::from_fn(d, 2, |_| vec![3.0, 4.0]).unwrap();
        for p in [[0.3, 0.7], [0.0, 0.0], [0.99, 0.01]] {
            assert_eq!(f.sample(&p).unwrap(), vec![3.0, 4.0]);
        }
    }

    #[test]
    fn interpolation_midpoint_is_corner_mean() {
        // 2x2 grid, u varies along y as {0,0,1,1}
        let d = unit_square(2);
        let f = GridVectorField::new(d, 2, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let v = f.sample(&[0.5, 0.5]).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn interpolation_exact_at_nodes() {
        let d = DomainSpec::new(vec![4, 3], vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let f = GridVectorField::from_fn(d, 2, |p| vec![p[0] * 2.0 + p[1], p[1] - p[0]]).unwrap();
        for (flat, p) in f.domain().node_points().iter().enumerate() {
            assert_eq!(f.sample(p).unwrap(), f.node(flat).to_vec());
        }
    }

    #[test]
    fn interpolation_exact_for_affine_fields() {
        let d = DomainSpec::new(vec![5, 4, 3], vec![0.0; 3], vec![2.0, 3.0, 1.0]).unwrap();
        let f = GridVectorField::from_fn(d, 3, |p| {
            vec![
                1.0 + 2.0 * p[0] - p[1] + 0.5 * p[2],
                p[0] + p[1] + p[2],
                -3.0 * p[2],
            ]
        })
        .unwrap();
        for p in [[0.33, 1.7, 0.2], [1.99, 0.01, 0.95], [1.0, 1.5, 0.5]] {
            let got = f.sample(&p).unwrap();
            let want = [
                1.0 + 2.0 * p[0] - p[1] + 0.5 * p[2],
                p[0] + p[1] + p[2],
                -3.0 * p[2],
            ];
            for (g, w) in got.iter().zip(want) {
                assert!((g - w).abs() < 1e-12, "at {p:?}: {got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn field_rejects_wrong_length_and_nonfinite() {
        let d = unit_square(2);
        assert!(matches!(
            GridVectorField::new(d.clone(), 2, vec![0.0; 7]),
            Err(FieldError::DataLength { expected: 8, actual: 7 })
        ));
        let mut data = vec![0.0; 8];
        data[3] = f64::NAN;
        assert!(matches!(
            GridVectorField::new(d, 2, data),
            Err(FieldError::NonFinite(3))
        ));
    }

    #[test]
    fn center_field_is_divergence_free_at_interior_nodes() {
        let d = DomainSpec::new(vec![9, 9], vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let f = generate_analytic(&AnalyticFieldKind::center([0.0, 0.0]), &d).unwrap();
        let (hx, hy) = (d.spacing(0), d.spacing(1));
        for j in 1..8 {
            for i in 1..8 {
                let du_dx = (f.node(d.linear_index(&[i + 1, j]))[0]
                    - f.node(d.linear_index(&[i - 1, j]))[0])
                    / (2.0 * hx);
                let dv_dy = (f.node(d.linear_index(&[i, j + 1]))[1]
                    - f.node(d.linear_index(&[i, j - 1]))[1])
                    / (2.0 * hy);
                assert!((du_dx + dv_dy).abs() < 1e-10);
            }
        }
    }
}
