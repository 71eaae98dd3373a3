//! File formats: material and geometry input, result export, field dumps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{CellGeometry, HolePrimitive};
use crate::tensors::{voigt_pack, voigt_unpack, DielectricTensor, MaterialTensors, PiezoTensor};

/// Material file: `{"c_voigt": 6x6, "e_voigt": 3x6, "d": 3x3}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialRecord {
    pub c_voigt: [[f64; 6]; 6],
    pub e_voigt: [[f64; 6]; 3],
    pub d: [[f64; 3]; 3],
}

impl MaterialRecord {
    pub fn to_tensors(&self) -> Result<MaterialTensors> {
        let c = voigt_unpack(&nalgebra::Matrix6::from_fn(|i, j| self.c_voigt[i][j]))?;
        let e = PiezoTensor::from_voigt(self.e_voigt);
        let d = DielectricTensor::from_matrix(self.d)?;
        Ok(MaterialTensors::new(c, e, d))
    }
}

impl From<&MaterialTensors> for MaterialRecord {
    fn from(m: &MaterialTensors) -> Self {
        let v = voigt_pack(&m.c);
        let mut c_voigt = [[0.0; 6]; 6];
        for (i, row) in c_voigt.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = v[(i, j)];
            }
        }
        Self {
            c_voigt,
            e_voigt: m.e.voigt(),
            d: m.d.to_matrix(),
        }
    }
}

pub fn load_material(path: &Path) -> Result<MaterialTensors> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read material file {}: {e}", path.display())))?;
    let rec: MaterialRecord = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("malformed material file {}: {e}", path.display())))?;
    rec.to_tensors()
}

/// Geometry config: `{"resolution": n, "holes": [...]}` or a raw mask file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub resolution: usize,
    #[serde(default)]
    pub holes: Vec<HolePrimitive>,
    /// Raw `n^3` bytes (0 = void), x fastest; resolved relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_file: Option<PathBuf>,
}

impl GeometryConfig {
    pub fn build(&self, base_dir: &Path) -> Result<CellGeometry> {
        match &self.mask_file {
            Some(p) => {
                if !self.holes.is_empty() {
                    return Err(Error::Config("geometry gives both holes and mask_file".into()));
                }
                let path = base_dir.join(p);
                let bytes = fs::read(&path)
                    .map_err(|e| Error::Config(format!("cannot read mask file {}: {e}", path.display())))?;
                CellGeometry::from_raw_bytes(self.resolution, &bytes)
            }
            None => CellGeometry::build(self.resolution, &self.holes),
        }
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "Infinity".into()
    } else {
        "-Infinity".into()
    }
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let x = n.as_f64().unwrap_or(f64::NAN);
                out.push_str(&fmt_f64(x));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            let flat = items.iter().all(|x| !x.is_array() && !x.is_object());
            if items.is_empty() {
                out.push_str("[]");
            } else if flat {
                out.push('[');
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(x, indent, out);
                }
                out.push(']');
            } else {
                out.push_str("[\n");
                for (i, x) in items.iter().enumerate() {
                    out.push_str(&pad);
                    out.push_str("  ");
                    write_value(x, indent + 1, out);
                    out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
                }
                out.push_str(&pad);
                out.push(']');
            }
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, x)) in map.iter().enumerate() {
                out.push_str(&pad);
                out.push_str("  ");
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_value(x, indent + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad);
            out.push('}');
        }
    }
}

/// Pretty JSON in which every float carries 17 significant digits.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&v, 0, &mut out);
    out.push('\n');
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

const FIELD_MAGIC: &[u8; 8] = b"PZFIELD1";

/// Nodal field on the `(N+1)^3` grid of the unit cube with its voxel mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub n: usize,
    pub mask: Vec<bool>,
    pub u: Vec<[f64; 3]>,
    pub phi: Vec<f64>,
}

/// Binary layout, little endian: magic `PZFIELD1`, `N` as u64, `N^3` mask
/// bytes, then `(N+1)^3` nodes of `(u1, u2, u3)` as f64, then `(N+1)^3`
/// potentials as f64. Voxels and nodes are ordered x fastest.
pub fn write_field_dump(path: &Path, dump: &FieldDump) -> Result<()> {
    let nodes = (dump.n + 1).pow(3);
    if dump.mask.len() != dump.n.pow(3) || dump.u.len() != nodes || dump.phi.len() != nodes {
        return Err(Error::ShapeMismatch("field dump arrays do not match N".into()));
    }
    let mut buf = Vec::with_capacity(16 + dump.mask.len() + 32 * nodes);
    buf.extend_from_slice(FIELD_MAGIC);
    buf.extend_from_slice(&(dump.n as u64).to_le_bytes());
    buf.extend(dump.mask.iter().map(|&m| m as u8));
    for u in &dump.u {
        for c in u {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    for p in &dump.phi {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_field_dump(path: &Path) -> Result<FieldDump> {
    let bytes = fs::read(path)?;
    let bad = || Error::ShapeMismatch(format!("{} is not a valid field dump", path.display()));
    if bytes.len() < 16 || &bytes[..8] != FIELD_MAGIC {
        return Err(bad());
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().map_err(|_| bad())?) as usize;
    let nodes = (n + 1).pow(3);
    let expected = 16 + n.pow(3) + 32 * nodes;
    if bytes.len() != expected {
        return Err(bad());
    }
    let mask: Vec<bool> = bytes[16..16 + n.pow(3)].iter().map(|&b| b != 0).collect();
    let mut pos = 16 + n.pow(3);
    let mut next = || {
        let v = f64::from_le_bytes(bytes[pos..pos + 8].try_into().expect("8 bytes"));
        pos += 8;
        v
    };
    let u: Vec<[f64; 3]> = (0..nodes).map(|_| [next(), next(), next()]).collect();
    let phi: Vec<f64> = (0..nodes).map(|_| next()).collect();
    Ok(FieldDump { n, mask, u, phi })
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensors::ElasticTensor;

    #[test]
    fn material_record_round_trip() {
        let mut e = [[0.0; 6]; 3];
        e[2][2] = 1.5;
        e[0][4] = -0.25;
        let m = MaterialTensors::new(ElasticTensor::isotropic(2.0, 0.5), PiezoTensor::from_voigt(e), DielectricTensor::isotropic(3.0));
        let rec = MaterialRecord::from(&m);
        let text = serde_json::to_string(&rec).unwrap();
        let back: MaterialRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_tensors().unwrap(), m);
    }

    #[test]
    fn floats_have_seventeen_digits() {
        let s = to_json_string(&serde_json::json!({"a": 0.1, "b": [1.0, -2.5e-7], "n": 3})).unwrap();
        assert!(s.contains("\"a\": 1.0000000000000001e-1"));
        assert!(s.contains("-2.4999999999999999e-7"));
        assert!(s.contains("\"n\": 3"));
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["a"].as_f64(), Some(0.1));
        assert_eq!(v["b"][1].as_f64(), Some(-2.5e-7));
    }

    #[test]
    fn field_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let n = 2;
        let dump = FieldDump {
            n,
            mask: vec![true, false, true, true, true, true, true, true],
            u: (0..27).map(|i| [i as f64, -(i as f64), 0.5]).collect(),
            phi: (0..27).map(|i| i as f64 * 0.1).collect(),
        };
        let p = dir.path().join("f.bin");
        write_field_dump(&p, &dump).unwrap();
        assert_eq!(read_field_dump(&p).unwrap(), dump);
    }

    #[test]
    fn geometry_config_parses_holes() {
        let cfg: GeometryConfig = serde_json::from_str(
            r#"{"resolution": 8, "holes": [{"type": "sphere", "center": [0.5, 0.5, 0.5], "radius": 0.25}]}"#,
        )
        .unwrap();
        let g = cfg.build(Path::new(".")).unwrap();
        assert_eq!(g.n(), 8);
        assert!(g.theta() < 1.0);
    }
}
