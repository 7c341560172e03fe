//! Raw binary grid files: little-endian f32 values in row-major node order
//! with components interleaved per node, described by a JSON sidecar.

use super::IoError;
use crate::field::{DomainSpec, GridVectorField, ScalarField};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// The JSON sidecar describing a raw payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSidecar {
    pub dims: Vec<usize>,
    pub components: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub physical_min: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub physical_max: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl RawSidecar {
    fn domain(&self) -> Result<DomainSpec, IoError> {
        Ok(match (&self.physical_min, &self.physical_max) {
            (Some(lo), Some(hi)) => DomainSpec::new(self.dims.clone(), lo.clone(), hi.clone())?,
            // bounds default to [0, dim-1] per axis when the sidecar omits them
            _ => DomainSpec::index_spaced(self.dims.clone())?,
        })
    }
}

fn read_sidecar(path: &Path) -> Result<RawSidecar, IoError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn read_payload(path: &Path, expected_values: usize) -> Result<Vec<f64>, IoError> {
    let bytes = fs::read(path)?;
    let expected_bytes = expected_values as u64 * 4;
    if bytes.len() as u64 != expected_bytes {
        return Err(IoError::SizeMismatch {
            path: path.display().to_string(),
            expected: expected_bytes,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn write_payload(path: &Path, values: &[f64]) -> Result<(), IoError> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn write_sidecar(path: &Path, sidecar: &RawSidecar) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Load a vector field; the f32 payload is widened to f64.
pub fn load_raw_field(data_path: &Path, sidecar_path: &Path) -> Result<GridVectorField, IoError> {
    let sidecar = read_sidecar(sidecar_path)?;
    let domain = sidecar.domain()?;
    let data = read_payload(data_path, domain.node_count() * sidecar.components)?;
    Ok(GridVectorField::new(domain, sidecar.components, data)?)
}

pub fn save_raw_field(
    field: &GridVectorField,
    data_path: &Path,
    sidecar_path: &Path,
    name: Option<&str>,
) -> Result<(), IoError> {
    write_payload(data_path, field.data())?;
    write_sidecar(
        sidecar_path,
        &RawSidecar {
            dims: field.domain().dims().to_vec(),
            components: field.components(),
            physical_min: Some(field.domain().physical_min().to_vec()),
            physical_max: Some(field.domain().physical_max().to_vec()),
            name: name.map(str::to_owned),
        },
    )
}

/// Load a one-component payload as a scalar field.
pub fn load_raw_scalar(data_path: &Path, sidecar_path: &Path) -> Result<ScalarField, IoError> {
    let sidecar = read_sidecar(sidecar_path)?;
    if sidecar.components != 1 {
        return Err(IoError::Parse {
            path: sidecar_path.display().to_string(),
            message: format!("expected 1 component for a scalar field, got {}", sidecar.components),
        });
    }
    let domain = sidecar.domain()?;
    let data = read_payload(data_path, domain.node_count())?;
    Ok(ScalarField::new(domain, data)?)
}

pub fn save_raw_scalar(
    field: &ScalarField,
    data_path: &Path,
    sidecar_path: &Path,
    name: Option<&str>,
) -> Result<(), IoError> {
    write_payload(data_path, field.data())?;
    write_sidecar(
        sidecar_path,
        &RawSidecar {
            dims: field.domain().dims().to_vec(),
            components: 1,
            physical_min: Some(field.domain().physical_min().to_vec()),
            physical_max: Some(field.domain().physical_max().to_vec()),
            name: name.map(str::to_owned),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn payload_size_is_dims_times_components_times_four() {
        let dir = tempdir().unwrap();
        let d = DomainSpec::new(vec![2, 2], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let f = GridVectorField::from_fn(d, 2, |p| vec![p[0], p[1]]).unwrap();
        let data = dir.path().join("f.raw");
        let sidecar = dir.path().join("f.json");
        save_raw_field(&f, &data, &sidecar, Some("probe")).unwrap();
        assert_eq!(fs::metadata(&data).unwrap().len(), 32);
    }

    #[test]
    fn roundtrip_is_bitwise_at_f32() {
        let dir = tempdir().unwrap();
        let d = DomainSpec::new(vec![3, 2], vec![-1.0, 0.0], vec![1.0, 4.0]).unwrap();
        let f = GridVectorField::from_fn(d, 2, |p| vec![p[0] * 0.37, p[1] - 0.123]).unwrap();
        let data = dir.path().join("f.raw");
        let sidecar = dir.path().join("f.json");
        save_raw_field(&f, &data, &sidecar, None).unwrap();
        let loaded = load_raw_field(&data, &sidecar).unwrap();
        assert_eq!(loaded.domain(), f.domain());
        for (a, b) in loaded.data().iter().zip(f.data()) {
            assert_eq!(*a as f32, *b as f32);
        }
        // saving the loaded field reproduces the payload bytes exactly
        let data2 = dir.path().join("f2.raw");
        save_raw_field(&loaded, &data2, &dir.path().join("f2.json"), None).unwrap();
        assert_eq!(fs::read(&data).unwrap(), fs::read(&data2).unwrap());
    }

    #[test]
    fn truncated_payload_reports_expected_and_actual() {
        let dir = tempdir().unwrap();
        let d = DomainSpec::new(vec![2, 2], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let f = GridVectorField::from_fn(d, 2, |_| vec![0.0, 0.0]).unwrap();
        let data = dir.path().join("f.raw");
        let sidecar = dir.path().join("f.json");
        save_raw_field(&f, &data, &sidecar, None).unwrap();
        let bytes = fs::read(&data).unwrap();
        fs::write(&data, &bytes[..bytes.len() - 4]).unwrap();
        match load_raw_field(&data, &sidecar) {
            Err(IoError::SizeMismatch { expected, actual, .. }) => {
                assert_eq!(expected, 32);
                assert_eq!(actual, 28);
            }
            other => panic!("expected SizeMismatch, got {other:?}"),
        }
    }

    #[test]
    fn missing_bounds_default_to_index_spacing() {
        let dir = tempdir().unwrap();
        let sidecar_path = dir.path().join("f.json");
        fs::write(&sidecar_path, r#"{"dims": [3, 5], "components": 2}"#).unwrap();
        let data_path = dir.path().join("f.raw");
        fs::write(&data_path, vec![0u8; 3 * 5 * 2 * 4]).unwrap();
        let f = load_raw_field(&data_path, &sidecar_path).unwrap();
        assert_eq!(f.domain().physical_min(), &[0.0, 0.0]);
        assert_eq!(f.domain().physical_max(), &[2.0, 4.0]);
    }

    #[test]
    fn unknown_sidecar_keys_are_rejected() {
        let dir = tempdir().unwrap();
        let sidecar_path = dir.path().join("f.json");
        fs::write(
            &sidecar_path,
            r#"{"dims": [2, 2], "components": 2, "endianess": "little"}"#,
        )
        .unwrap();
        let data_path = dir.path().join("f.raw");
        fs::write(&data_path, vec![0u8; 32]).unwrap();
        assert!(matches!(
            load_raw_field(&data_path, &sidecar_path),
            Err(IoError::Parse { .. })
        ));
    }

    #[test]
    fn scalar_roundtrip() {
        let dir = tempdir().unwrap();
        let d = DomainSpec::new(vec![4, 4], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let s = ScalarField::new(d, (0..16).map(|i| i as f64 * 0.5).collect()).unwrap();
        let data = dir.path().join("s.raw");
        let sidecar = dir.path().join("s.json");
        save_raw_scalar(&s, &data, &sidecar, Some("uncertainty")).unwrap();
        let loaded = load_raw_scalar(&data, &sidecar).unwrap();
        for (a, b) in loaded.data().iter().zip(s.data()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }
}
