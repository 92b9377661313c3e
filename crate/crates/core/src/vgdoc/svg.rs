//! Importer for a small SVG subset.
//!
//! Supported elements: `line`, `polyline`, `polygon`, `rect`, `circle` and
//! `path` with the commands `M L Q A Z` (absolute and relative). Filled
//! closed shapes produce a surface plus their boundary curves; elements
//! with `fill="none"` (and lines/polylines) produce curves only.

use std::f64::consts::PI;

use super::{ArcCurve, Curve, DiskSurface, Surface, VgDocument, VgError};
use crate::scalar::{Point, Scalar, Vec3};

/// Samples per curved segment when flattening a closed path into a ring.
pub const FLATTEN_SAMPLES: usize = 16;

struct Builder<S> {
    curves: Vec<Curve<S>>,
    surfaces: Vec<Surface<S>>,
}

fn attr_f64(node: &roxmltree::Node, name: &str) -> Result<f64, VgError> {
    match node.attribute(name) {
        None => Ok(0.0),
        Some(s) => s.trim().trim_end_matches("px").parse::<f64>().map_err(|_| {
            VgError::invalid(
                format!("<{}>.{name}", node.tag_name().name()),
                format!("bad number \"{s}\""),
            )
        }),
    }
}

fn is_filled(node: &roxmltree::Node) -> bool {
    if node.attribute("fill").map(str::trim) == Some("none") {
        return false;
    }
    if let Some(style) = node.attribute("style") {
        let compact: String = style.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.contains("fill:none") {
            return false;
        }
    }
    true
}

fn pt<S: Scalar>(x: f64, y: f64) -> Point<S> {
    Vec3::xy(S::lit(x), S::lit(y))
}

fn parse_points(node: &roxmltree::Node) -> Result<Vec<(f64, f64)>, VgError> {
    let raw = node.attribute("points").unwrap_or("");
    let nums = raw
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| {
            VgError::invalid(format!("<{}>.points", node.tag_name().name()), "bad number")
        })?;
    if nums.len() % 2 != 0 {
        return Err(VgError::invalid(
            format!("<{}>.points", node.tag_name().name()),
            "odd coordinate count",
        ));
    }
    Ok(nums.chunks(2).map(|c| (c[0], c[1])).collect())
}

impl<S: Scalar> Builder<S> {
    fn polyline(&mut self, pts: &[(f64, f64)], closed: bool) {
        let n = pts.len();
        let segs = if closed { n } else { n.saturating_sub(1) };
        for i in 0..segs {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            if a != b {
                self.curves.push(Curve::Line {
                    p0: pt(a.0, a.1),
                    p1: pt(b.0, b.1),
                });
            }
        }
    }

    fn element(&mut self, node: &roxmltree::Node) -> Result<(), VgError> {
        match node.tag_name().name() {
            "svg" | "title" | "desc" | "metadata" => {}
            "g" => {
                if node.attribute("transform").is_some() {
                    return Err(VgError::UnsupportedElement("g transform".into()));
                }
            }
            "line" => {
                let a = (attr_f64(node, "x1")?, attr_f64(node, "y1")?);
                let b = (attr_f64(node, "x2")?, attr_f64(node, "y2")?);
                self.polyline(&[a, b], false);
            }
            "polyline" => {
                let pts = parse_points(node)?;
                self.polyline(&pts, false);
            }
            "polygon" => {
                let pts = parse_points(node)?;
                self.polyline(&pts, true);
                if is_filled(node) {
                    self.surfaces.push(Surface::Polygon {
                        ring: pts.iter().map(|p| pt(p.0, p.1)).collect(),
                    });
                }
            }
            "rect" => {
                if attr_f64(node, "rx")? != 0.0 || attr_f64(node, "ry")? != 0.0 {
                    return Err(VgError::UnsupportedElement(
                        "rect with rounded corners".into(),
                    ));
                }
                let (x, y) = (attr_f64(node, "x")?, attr_f64(node, "y")?);
                let (w, h) = (attr_f64(node, "width")?, attr_f64(node, "height")?);
                self.polyline(&[(x, y), (x + w, y), (x + w, y + h), (x, y + h)], true);
                if is_filled(node) {
                    self.surfaces.push(Surface::Rect {
                        origin: pt(x, y),
                        u: pt(w, 0.0),
                        v: pt(0.0, h),
                    });
                }
            }
            "circle" => {
                let c = pt::<S>(attr_f64(node, "cx")?, attr_f64(node, "cy")?);
                let r = S::lit(attr_f64(node, "r")?);
                self.curves
                    .push(Curve::Arc(ArcCurve::planar(c, r, S::zero(), S::PI())));
                self.curves
                    .push(Curve::Arc(ArcCurve::planar(c, r, S::PI(), S::PI())));
                if is_filled(node) {
                    self.surfaces.push(Surface::Disk(DiskSurface::planar(c, r)));
                }
            }
            "path" => {
                let d = node.attribute("d").unwrap_or("");
                let parsed = parse_path_data::<S>(d)?;
                self.curves.extend(parsed.curves);
                if is_filled(node) {
                    for ring in parsed.closed_rings {
                        self.surfaces.push(Surface::Polygon { ring });
                    }
                }
            }
            other => return Err(VgError::UnsupportedElement(other.to_string())),
        }
        Ok(())
    }
}

/// Parses an SVG document into a planar [`VgDocument`].
pub fn parse_svg<S: Scalar>(text: &str) -> Result<VgDocument<S>, VgError> {
    let xml = roxmltree::Document::parse(text).map_err(|e| {
        let pos = e.pos();
        VgError::Syntax {
            line: pos.row as usize,
            column: pos.col as usize,
            message: e.to_string(),
        }
    })?;
    let mut b = Builder {
        curves: Vec::new(),
        surfaces: Vec::new(),
    };
    for node in xml.root().descendants().filter(|n| n.is_element()) {
        b.element(&node)?;
    }
    let doc = VgDocument {
        dim: 2,
        curves: b.curves,
        surfaces: b.surfaces,
        label: None,
    };
    doc.validate()?;
    Ok(doc)
}

/// Curves of a path plus the flattened rings of its closed subpaths.
pub struct ParsedPath<S> {
    pub curves: Vec<Curve<S>>,
    pub closed_rings: Vec<Vec<Point<S>>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Token {
    Cmd(char),
    Num(f64),
}

fn tokenize(d: &str) -> Result<Vec<(usize, Token)>, VgError> {
    let bytes = d.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() || c == ',' {
            i += 1;
        } else if c.is_ascii_alphabetic() && c != 'e' && c != 'E' {
            out.push((i, Token::Cmd(c)));
            i += 1;
        } else if c == '+' || c == '-' || c == '.' || c.is_ascii_digit() {
            let start = i;
            if c == '+' || c == '-' {
                i += 1;
            }
            let mut seen_dot = false;
            while i < bytes.len() {
                let ch = bytes[i] as char;
                if ch.is_ascii_digit() {
                    i += 1;
                } else if ch == '.' && !seen_dot {
                    seen_dot = true;
                    i += 1;
                } else {
                    break;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let save = i;
                i += 1;
                if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                    i += 1;
                }
                let digits = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i == digits {
                    i = save;
                }
            }
            let text = &d[start..i];
            let v = text.parse::<f64>().map_err(|_| VgError::PathData {
                offset: start,
                message: format!("bad number \"{text}\""),
            })?;
            out.push((start, Token::Num(v)));
        } else {
            return Err(VgError::PathData {
                offset: i,
                message: format!("unexpected character '{c}'"),
            });
        }
    }
    Ok(out)
}

struct PathState<S> {
    curves: Vec<Curve<S>>,
    rings: Vec<Vec<Point<S>>>,
    ring: Vec<(f64, f64)>,
    cur: (f64, f64),
    start: (f64, f64),
}

impl<S: Scalar> PathState<S> {
    fn line_to(&mut self, to: (f64, f64)) {
        if to != self.cur {
            self.curves.push(Curve::Line {
                p0: pt(self.cur.0, self.cur.1),
                p1: pt(to.0, to.1),
            });
            self.ring.push(to);
        }
        self.cur = to;
    }

    fn push_sampled(&mut self, curve: Curve<S>) {
        for k in 1..=FLATTEN_SAMPLES {
            let p = curve.point(S::lit(k as f64 / FLATTEN_SAMPLES as f64));
            self.ring.push((p.x.as_f64(), p.y.as_f64()));
        }
        self.curves.push(curve);
    }

    fn close(&mut self) {
        self.line_to(self.start);
        let mut ring = std::mem::take(&mut self.ring);
        if ring.len() > 1 && ring.last() == ring.first() {
            ring.pop();
        }
        if ring.len() >= 3 {
            self.rings.push(ring.iter().map(|p| pt(p.0, p.1)).collect());
        }
        self.ring.push(self.start);
    }
}

/// Circular arc through `from` and `to` from SVG endpoint parameters.
fn endpoint_arc(
    from: (f64, f64),
    to: (f64, f64),
    r: f64,
    large: bool,
    sweep: bool,
) -> (f64, f64, f64, f64, f64) {
    let (x1p, y1p) = ((from.0 - to.0) / 2.0, (from.1 - to.1) / 2.0);
    let d2 = x1p * x1p + y1p * y1p;
    let mut r = r.abs();
    if d2 > r * r {
        r = d2.sqrt();
    }
    let mut coef = ((r * r - d2) / d2).max(0.0).sqrt();
    if large == sweep {
        coef = -coef;
    }
    let (cxp, cyp) = (coef * y1p, -coef * x1p);
    let (cx, cy) = (cxp + (from.0 + to.0) / 2.0, cyp + (from.1 + to.1) / 2.0);
    let ux = (x1p - cxp) / r;
    let uy = (y1p - cyp) / r;
    let vx = (-x1p - cxp) / r;
    let vy = (-y1p - cyp) / r;
    let theta1 = uy.atan2(ux);
    let mut dtheta = (ux * vy - uy * vx).atan2(ux * vx + uy * vy);
    if !sweep && dtheta > 0.0 {
        dtheta -= 2.0 * PI;
    } else if sweep && dtheta < 0.0 {
        dtheta += 2.0 * PI;
    }
    (cx, cy, r, theta1, dtheta)
}

/// Parses SVG path data (`M L Q A Z`, absolute and relative).
pub fn parse_path_data<S: Scalar>(d: &str) -> Result<ParsedPath<S>, VgError> {
    let tokens = tokenize(d)?;
    let mut st = PathState::<S> {
        curves: Vec::new(),
        rings: Vec::new(),
        ring: Vec::new(),
        cur: (0.0, 0.0),
        start: (0.0, 0.0),
    };
    let mut i = 0;
    let mut cmd: Option<(usize, char)> = None;
    let mut have_start = false;

    let num = |i: &mut usize| -> Result<f64, VgError> {
        match tokens.get(*i) {
            Some((_, Token::Num(v))) => {
                *i += 1;
                Ok(*v)
            }
            Some((off, Token::Cmd(c))) => Err(VgError::PathData {
                offset: *off,
                message: format!("expected a number, found '{c}'"),
            }),
            None => Err(VgError::PathData {
                offset: d.len(),
                message: "unexpected end of path data".into(),
            }),
        }
    };
    let flag = |i: &mut usize| -> Result<bool, VgError> {
        let off = tokens.get(*i).map(|t| t.0).unwrap_or(d.len());
        let v = num(i)?;
        if v == 0.0 {
            Ok(false)
        } else if v == 1.0 {
            Ok(true)
        } else {
            Err(VgError::PathData {
                offset: off,
                message: "arc flag must be 0 or 1".into(),
            })
        }
    };

    while i < tokens.len() {
        let (off, c) = match tokens[i] {
            (off, Token::Cmd(c)) => {
                i += 1;
                (off, c)
            }
            (off, Token::Num(_)) => match cmd {
                // Implicit repetition; a repeated moveto becomes lineto.
                Some((_, 'M')) => (off, 'L'),
                Some((_, 'm')) => (off, 'l'),
                Some((_, c)) if c != 'Z' && c != 'z' => (off, c),
                _ => {
                    return Err(VgError::PathData {
                        offset: off,
                        message: "number without a command".into(),
                    })
                }
            },
        };
        if !matches!(c.to_ascii_uppercase(), 'M' | 'L' | 'Q' | 'A' | 'Z') {
            return Err(VgError::UnsupportedCommand(c));
        }
        if !have_start && c.to_ascii_uppercase() != 'M' {
            return Err(VgError::PathData {
                offset: off,
                message: "path must begin with a moveto".into(),
            });
        }
        let rel = c.is_ascii_lowercase();
        let base = if rel { st.cur } else { (0.0, 0.0) };
        match c.to_ascii_uppercase() {
            'M' => {
                let p = (base.0 + num(&mut i)?, base.1 + num(&mut i)?);
                st.cur = p;
                st.start = p;
                st.ring = vec![p];
                have_start = true;
            }
            'L' => {
                let p = (base.0 + num(&mut i)?, base.1 + num(&mut i)?);
                st.line_to(p);
            }
            'Q' => {
                let c1 = (base.0 + num(&mut i)?, base.1 + num(&mut i)?);
                let p = (base.0 + num(&mut i)?, base.1 + num(&mut i)?);
                let curve = Curve::QuadBezier {
                    p0: pt(st.cur.0, st.cur.1),
                    p1: pt(c1.0, c1.1),
                    p2: pt(p.0, p.1),
                };
                st.push_sampled(curve);
                st.cur = p;
            }
            'A' => {
                let rx = num(&mut i)?;
                let ry = num(&mut i)?;
                let _rotation = num(&mut i)?;
                let large = flag(&mut i)?;
                let sweep = flag(&mut i)?;
                let p = (base.0 + num(&mut i)?, base.1 + num(&mut i)?);
                if p == st.cur {
                    continue;
                }
                if rx == 0.0 || ry == 0.0 {
                    st.line_to(p);
                    continue;
                }
                if (rx.abs() - ry.abs()).abs() > 1e-9 * rx.abs().max(ry.abs()) {
                    return Err(VgError::PathData {
                        offset: off,
                        message: "elliptical arc (rx != ry) is not supported".into(),
                    });
                }
                let (cx, cy, r, theta1, dtheta) = endpoint_arc(st.cur, p, rx, large, sweep);
                let arc = Curve::Arc(ArcCurve::planar(
                    pt(cx, cy),
                    S::lit(r),
                    S::lit(theta1),
                    S::lit(dtheta),
                ));
                st.push_sampled(arc);
                // Keep the declared endpoint exactly.
                if let Some(last) = st.ring.last_mut() {
                    *last = p;
                }
                st.cur = p;
            }
            'Z' => {
                st.close();
                st.cur = st.start;
            }
            _ => unreachable!(),
        }
        cmd = Some((off, c));
    }
    Ok(ParsedPath {
        curves: st.curves,
        closed_rings: st.rings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vgdoc::SurfaceKind;

    fn svg(body: &str) -> String {
        format!(r#"<svg xmlns="http://www.w3.org/2000/svg">{body}</svg>"#)
    }

    #[test]
    fn line_element() {
        let doc: VgDocument<f64> =
            parse_svg(&svg(r#"<line x1="0" y1="0" x2="1" y2="1"/>"#)).unwrap();
        assert_eq!(doc.curves.len(), 1);
        assert!(matches!(doc.curves[0], Curve::Line { .. }));
    }

    #[test]
    fn quadratic_path() {
        let doc: VgDocument<f64> = parse_svg(&svg(r#"<path d="M 0 0 Q 1 2 2 0"/>"#)).unwrap();
        assert_eq!(
            doc.curves,
            vec![Curve::QuadBezier {
                p0: pt(0.0, 0.0),
                p1: pt(1.0, 2.0),
                p2: pt(2.0, 0.0)
            }]
        );
        assert!(doc.surfaces.is_empty());
    }

    #[test]
    fn cubic_rejected() {
        let err = parse_svg::<f64>(&svg(r#"<path d="M 0 0 C 1 1 2 2 3 3"/>"#)).unwrap_err();
        assert_eq!(err.to_string(), "unsupported path command C");
    }

    #[test]
    fn circle_is_disk_plus_two_semicircles() {
        let doc: VgDocument<f64> = parse_svg(&svg(r#"<circle cx="1" cy="2" r="3"/>"#)).unwrap();
        assert_eq!(doc.curves.len(), 2);
        assert_eq!(doc.surfaces.len(), 1);
        assert_eq!(doc.surfaces[0].kind(), SurfaceKind::Disk);
        assert!(doc.curves[0].end_point().dist(doc.curves[1].start_point()) < 1e-12);
    }

    #[test]
    fn rect_stroked_only() {
        let doc: VgDocument<f64> = parse_svg(&svg(
            r#"<rect x="0" y="0" width="2" height="1" fill="none"/>"#,
        ))
        .unwrap();
        assert_eq!(doc.curves.len(), 4);
        assert!(doc.surfaces.is_empty());
        let doc: VgDocument<f64> =
            parse_svg(&svg(r#"<rect x="0" y="0" width="2" height="1"/>"#)).unwrap();
        assert_eq!(doc.surfaces[0].kind(), SurfaceKind::Rect);
    }

    #[test]
    fn closed_path_with_arc_flattens_ring() {
        let doc: VgDocument<f64> =
            parse_svg(&svg(r#"<path d="M 0 0 L 2 0 A 1 1 0 0 1 0 0 Z"/>"#)).unwrap();
        assert_eq!(doc.curves.len(), 2);
        match &doc.surfaces[0] {
            Surface::Polygon { ring } => assert_eq!(ring.len(), 1 + FLATTEN_SAMPLES),
            other => panic!("{other:?}"),
        }
        // The arc bulges to one side and ends at the origin.
        let arc = &doc.curves[1];
        assert!(arc.end_point().dist(pt(0.0, 0.0)) < 1e-12);
        assert!((arc.length() - PI).abs() < 1e-12);
    }

    #[test]
    fn relative_commands() {
        let doc: VgDocument<f64> =
            parse_svg(&svg(r#"<path d="m 1 1 l 1 0 q 1 1 0 2 z" fill="none"/>"#)).unwrap();
        assert_eq!(doc.curves.len(), 3);
        assert_eq!(
            doc.curves[1],
            Curve::QuadBezier {
                p0: pt(2.0, 1.0),
                p1: pt(3.0, 2.0),
                p2: pt(2.0, 3.0)
            }
        );
    }

    #[test]
    fn elliptical_arc_rejected() {
        let err = parse_svg::<f64>(&svg(r#"<path d="M 0 0 A 2 1 0 0 1 3 0"/>"#)).unwrap_err();
        assert!(err.to_string().contains("elliptical"), "{err}");
    }

    #[test]
    fn malformed_data_reports_offset() {
        let err = parse_svg::<f64>(&svg(r#"<path d="M 0 0 L 1 #"/>"#)).unwrap_err();
        assert_eq!(
            err,
            VgError::PathData {
                offset: 10,
                message: "unexpected character '#'".into()
            }
        );
    }

    #[test]
    fn unsupported_element() {
        let err = parse_svg::<f64>(&svg(r#"<ellipse cx="0" cy="0" rx="1" ry="2"/>"#)).unwrap_err();
        assert_eq!(err, VgError::UnsupportedElement("ellipse".into()));
    }
}
