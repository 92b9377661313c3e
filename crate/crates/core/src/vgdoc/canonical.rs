//! Canonical JSON document format.
//!
//! ```json
//! {"version":1,"dim":2,"label":3,
//!  "curves":[{"kind":"line","p0":[0.0,0.0],"p1":[1.0,0.0]}],
//!  "surfaces":[{"kind":"rect","origin":[0.0,0.0],"u":[1.0,0.0],"v":[0.0,1.0]}]}
//! ```
//!
//! Arcs and disks in three dimensions carry their plane axes `ax`, `ay`.
//! Serialization is compact with a fixed key order, so
//! `to_canonical(parse_canonical(s)) == s` for any canonical `s`.

use serde::Serialize;
use serde_json::{Map, Value};

use super::{ArcCurve, Curve, DiskSurface, Surface, VgDocument, VgError};
use crate::scalar::{Point, Scalar, Vec3};

pub const FORMAT_VERSION: u64 = 1;

type Obj = Map<String, Value>;

fn as_obj<'a>(v: &'a Value, path: &str) -> Result<&'a Obj, VgError> {
    v.as_object()
        .ok_or_else(|| VgError::invalid(path, "expected an object"))
}

fn check_keys(obj: &Obj, allowed: &[&str], path: &str) -> Result<(), VgError> {
    for k in obj.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(VgError::invalid(format!("{path}.{k}"), "unexpected field"));
        }
    }
    Ok(())
}

fn field<'a>(obj: &'a Obj, key: &str, path: &str) -> Result<&'a Value, VgError> {
    obj.get(key)
        .ok_or_else(|| VgError::invalid(format!("{path}.{key}"), "missing field"))
}

fn number<S: Scalar>(obj: &Obj, key: &str, path: &str) -> Result<S, VgError> {
    field(obj, key, path)?
        .as_f64()
        .map(S::lit)
        .ok_or_else(|| VgError::invalid(format!("{path}.{key}"), "expected a number"))
}

fn coords<S: Scalar>(v: &Value, dim: usize, path: &str) -> Result<Point<S>, VgError> {
    let arr = v
        .as_array()
        .ok_or_else(|| VgError::invalid(path, "expected a coordinate array"))?;
    if arr.len() != dim {
        return Err(VgError::invalid(
            path,
            format!("expected {dim} coordinates, got {}", arr.len()),
        ));
    }
    let mut p = Point::zero();
    for (i, c) in arr.iter().enumerate() {
        let x = c
            .as_f64()
            .ok_or_else(|| VgError::invalid(format!("{path}[{i}]"), "expected a number"))?;
        p.set(i, S::lit(x));
    }
    Ok(p)
}

fn point<S: Scalar>(obj: &Obj, key: &str, dim: usize, path: &str) -> Result<Point<S>, VgError> {
    coords(field(obj, key, path)?, dim, &format!("{path}.{key}"))
}

fn axes<S: Scalar>(
    obj: &Obj,
    dim: usize,
    path: &str,
) -> Result<Option<(Vec3<S>, Vec3<S>)>, VgError> {
    if dim == 2 {
        for k in ["ax", "ay"] {
            if obj.contains_key(k) {
                return Err(VgError::invalid(
                    format!("{path}.{k}"),
                    "axes are only allowed when dim is 3",
                ));
            }
        }
        return Ok(None);
    }
    Ok(Some((
        point(obj, "ax", dim, path)?,
        point(obj, "ay", dim, path)?,
    )))
}

fn kind<'a>(obj: &'a Obj, path: &str) -> Result<&'a str, VgError> {
    field(obj, "kind", path)?
        .as_str()
        .ok_or_else(|| VgError::invalid(format!("{path}.kind"), "expected a string"))
}

fn parse_curve<S: Scalar>(v: &Value, dim: usize, path: &str) -> Result<Curve<S>, VgError> {
    let obj = as_obj(v, path)?;
    match kind(obj, path)? {
        "line" => {
            check_keys(obj, &["kind", "p0", "p1"], path)?;
            Ok(Curve::Line {
                p0: point(obj, "p0", dim, path)?,
                p1: point(obj, "p1", dim, path)?,
            })
        }
        "arc" => {
            check_keys(
                obj,
                &["kind", "center", "radius", "start", "sweep", "ax", "ay"],
                path,
            )?;
            let mut arc = ArcCurve::planar(
                point(obj, "center", dim, path)?,
                number(obj, "radius", path)?,
                number(obj, "start", path)?,
                number(obj, "sweep", path)?,
            );
            if let Some((ax, ay)) = axes(obj, dim, path)? {
                arc.ax = ax;
                arc.ay = ay;
            }
            Ok(Curve::Arc(arc))
        }
        "quad_bezier" => {
            check_keys(obj, &["kind", "p0", "p1", "p2"], path)?;
            Ok(Curve::QuadBezier {
                p0: point(obj, "p0", dim, path)?,
                p1: point(obj, "p1", dim, path)?,
                p2: point(obj, "p2", dim, path)?,
            })
        }
        other => Err(VgError::UnknownKind {
            path: path.into(),
            what: "curve",
            kind: other.into(),
        }),
    }
}

fn parse_surface<S: Scalar>(v: &Value, dim: usize, path: &str) -> Result<Surface<S>, VgError> {
    let obj = as_obj(v, path)?;
    match kind(obj, path)? {
        "polygon" => {
            check_keys(obj, &["kind", "ring"], path)?;
            let ring_path = format!("{path}.ring");
            let ring = field(obj, "ring", path)?
                .as_array()
                .ok_or_else(|| VgError::invalid(&ring_path, "expected an array"))?
                .iter()
                .enumerate()
                .map(|(i, p)| coords(p, dim, &format!("{ring_path}[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Surface::Polygon { ring })
        }
        "disk" => {
            check_keys(obj, &["kind", "center", "radius", "ax", "ay"], path)?;
            let mut disk = DiskSurface::planar(
                point(obj, "center", dim, path)?,
                number(obj, "radius", path)?,
            );
            if let Some((ax, ay)) = axes(obj, dim, path)? {
                disk.ax = ax;
                disk.ay = ay;
            }
            Ok(Surface::Disk(disk))
        }
        "rect" => {
            check_keys(obj, &["kind", "origin", "u", "v"], path)?;
            Ok(Surface::Rect {
                origin: point(obj, "origin", dim, path)?,
                u: point(obj, "u", dim, path)?,
                v: point(obj, "v", dim, path)?,
            })
        }
        other => Err(VgError::UnknownKind {
            path: path.into(),
            what: "surface",
            kind: other.into(),
        }),
    }
}

/// Parses and validates a canonical document.
pub fn parse_canonical<S: Scalar>(text: &str) -> Result<VgDocument<S>, VgError> {
    let root: Value = serde_json::from_str(text).map_err(|e| VgError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let obj = as_obj(&root, "$")?;
    check_keys(obj, &["version", "dim", "label", "curves", "surfaces"], "$")?;
    if let Some(v) = obj.get("version") {
        if v.as_u64() != Some(FORMAT_VERSION) {
            return Err(VgError::invalid(
                "version",
                format!("unsupported version {v}"),
            ));
        }
    }
    let dim = field(obj, "dim", "$")?
        .as_u64()
        .filter(|d| *d == 2 || *d == 3)
        .ok_or_else(|| VgError::invalid("dim", "must be 2 or 3"))? as usize;
    let label = match obj.get("label") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .ok_or_else(|| VgError::invalid("label", "expected a non-negative integer"))?
                as usize,
        ),
    };
    let list = |key: &str| -> Result<Vec<Value>, VgError> {
        match obj.get(key) {
            None => Ok(Vec::new()),
            Some(Value::Array(a)) => Ok(a.clone()),
            Some(_) => Err(VgError::invalid(key, "expected an array")),
        }
    };
    let curves = list("curves")?
        .iter()
        .enumerate()
        .map(|(i, c)| parse_curve(c, dim, &format!("curves[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let surfaces = list("surfaces")?
        .iter()
        .enumerate()
        .map(|(i, s)| parse_surface(s, dim, &format!("surfaces[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let doc = VgDocument {
        dim,
        curves,
        surfaces,
        label,
    };
    doc.validate()?;
    Ok(doc)
}

#[derive(Serialize)]
struct DocOut {
    version: u64,
    dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
    curves: Vec<CurveOut>,
    surfaces: Vec<SurfaceOut>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CurveOut {
    Line {
        p0: Vec<f64>,
        p1: Vec<f64>,
    },
    Arc {
        center: Vec<f64>,
        radius: f64,
        start: f64,
        sweep: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        ax: Option<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        ay: Option<Vec<f64>>,
    },
    QuadBezier {
        p0: Vec<f64>,
        p1: Vec<f64>,
        p2: Vec<f64>,
    },
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SurfaceOut {
    Polygon {
        ring: Vec<Vec<f64>>,
    },
    Disk {
        center: Vec<f64>,
        radius: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        ax: Option<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        ay: Option<Vec<f64>>,
    },
    Rect {
        origin: Vec<f64>,
        u: Vec<f64>,
        v: Vec<f64>,
    },
}

/// Serializes a document in canonical form.
pub fn to_canonical<S: Scalar>(doc: &VgDocument<S>) -> String {
    let dim = doc.dim;
    let c = |p: Point<S>| -> Vec<f64> { p.components(dim).map(|x| x.as_f64()).collect() };
    let ax = |v: Vec3<S>| if dim == 3 { Some(c(v)) } else { None };
    let out = DocOut {
        version: FORMAT_VERSION,
        dim,
        label: doc.label,
        curves: doc
            .curves
            .iter()
            .map(|cv| match cv {
                Curve::Line { p0, p1 } => CurveOut::Line {
                    p0: c(*p0),
                    p1: c(*p1),
                },
                Curve::Arc(a) => CurveOut::Arc {
                    center: c(a.center),
                    radius: a.radius.as_f64(),
                    start: a.start.as_f64(),
                    sweep: a.sweep.as_f64(),
                    ax: ax(a.ax),
                    ay: ax(a.ay),
                },
                Curve::QuadBezier { p0, p1, p2 } => CurveOut::QuadBezier {
                    p0: c(*p0),
                    p1: c(*p1),
                    p2: c(*p2),
                },
            })
            .collect(),
        surfaces: doc
            .surfaces
            .iter()
            .map(|s| match s {
                Surface::Polygon { ring } => SurfaceOut::Polygon {
                    ring: ring.iter().map(|p| c(*p)).collect(),
                },
                Surface::Disk(d) => SurfaceOut::Disk {
                    center: c(d.center),
                    radius: d.radius.as_f64(),
                    ax: ax(d.ax),
                    ay: ax(d.ay),
                },
                Surface::Rect { origin, u, v } => SurfaceOut::Rect {
                    origin: c(*origin),
                    u: c(*u),
                    v: c(*v),
                },
            })
            .collect(),
    };
    serde_json::to_string(&out).expect("document serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let doc: VgDocument<f64> =
            parse_canonical(r#"{"dim":2,"curves":[{"kind":"line","p0":[0,0],"p1":[1,0]}]}"#)
                .unwrap();
        assert_eq!(doc.curves.len(), 1);
        assert!(doc.surfaces.is_empty());
        assert_eq!(doc.label, None);
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let text = r#"{"version":1,"dim":2,"label":3,"curves":[{"kind":"quad_bezier","p0":[0.0,0.0],"p1":[1.0,2.0],"p2":[2.0,0.1]}],"surfaces":[{"kind":"polygon","ring":[[0.0,0.0],[2.0,0.0],[1.0,1.7320508075688772]]}]}"#;
        let doc: VgDocument<f64> = parse_canonical(text).unwrap();
        assert_eq!(to_canonical(&doc), text);
    }

    #[test]
    fn three_dimensional_arc_keeps_axes() {
        let text = r#"{"version":1,"dim":3,"curves":[{"kind":"arc","center":[0.0,0.0,1.0],"radius":2.0,"start":0.0,"sweep":3.141592653589793,"ax":[1.0,0.0,0.0],"ay":[0.0,0.0,1.0]}],"surfaces":[]}"#;
        let doc: VgDocument<f64> = parse_canonical(text).unwrap();
        assert_eq!(to_canonical(&doc), text);
    }

    #[test]
    fn unknown_curve_kind() {
        let err = parse_canonical::<f64>(r#"{"dim":2,"curves":[{"kind":"cubic","p0":[0,0]}]}"#)
            .unwrap_err();
        assert!(err.to_string().contains("unknown curve kind"), "{err}");
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_canonical::<f64>("{\"dim\":2,\n \"curves\": [}").unwrap_err();
        match err {
            VgError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invariant_violation_names_field() {
        let err = parse_canonical::<f64>(
            r#"{"dim":2,"curves":[{"kind":"line","p0":[0,0],"p1":[1,0]},{"kind":"arc","center":[0,0],"radius":0,"start":0,"sweep":1}]}"#,
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "curves[1].radius: radius must be positive");
    }

    #[test]
    fn wrong_arity_point() {
        let err = parse_canonical::<f64>(
            r#"{"dim":3,"curves":[{"kind":"line","p0":[0,0],"p1":[1,0,0]}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("curves[0].p0"), "{err}");
    }
}
