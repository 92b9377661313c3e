//! Vector-graphics document model.
//!
//! A [`VgDocument`] is a set of parametric curves (lines, circular arcs,
//! quadratic Béziers) and filled surfaces (polygons, disks, rectangles) in
//! two or three dimensions. The canonical JSON format in [`canonical`] is
//! the source of truth; [`svg`] imports a small SVG subset.

pub mod canonical;
pub mod geom;
pub mod normalize;
pub mod svg;

use thiserror::Error;

use crate::scalar::{Point, Scalar, Vec3};

pub use canonical::{parse_canonical, to_canonical};
pub use geom::{arc_length, arc_length_inverse, curve_tangent, eval_curve};
pub use normalize::{normalize_document, Transform};
pub use svg::parse_svg;

/// Relative tolerance for orthonormality and coplanarity checks.
pub const SHAPE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VgError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: unknown {what} kind \"{kind}\"")]
    UnknownKind {
        path: String,
        what: &'static str,
        kind: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("parameter {value} outside [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },
    #[error("degenerate extent")]
    DegenerateExtent,
    #[error("unsupported element <{0}>")]
    UnsupportedElement(String),
    #[error("unsupported path command {0}")]
    UnsupportedCommand(char),
    #[error("malformed path data at offset {offset}: {message}")]
    PathData { offset: usize, message: String },
}

impl VgError {
    pub(crate) fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        VgError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CurveKind {
    Line,
    Arc,
    QuadBezier,
}

impl CurveKind {
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            CurveKind::Line => "line",
            CurveKind::Arc => "arc",
            CurveKind::QuadBezier => "quad_bezier",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SurfaceKind {
    Polygon,
    Disk,
    Rect,
}

impl SurfaceKind {
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SurfaceKind::Polygon => "polygon",
            SurfaceKind::Disk => "disk",
            SurfaceKind::Rect => "rect",
        }
    }
}

/// Circular arc `center + radius·(cos θ·ax + sin θ·ay)`, θ = start + t·sweep.
///
/// Planar arcs use the fixed frame `ax = x̂`, `ay = ŷ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArcCurve<S> {
    pub center: Point<S>,
    pub radius: S,
    pub start: S,
    pub sweep: S,
    pub ax: Vec3<S>,
    pub ay: Vec3<S>,
}

impl<S: Scalar> ArcCurve<S> {
    pub fn planar(center: Point<S>, radius: S, start: S, sweep: S) -> Self {
        Self {
            center,
            radius,
            start,
            sweep,
            ax: Vec3::new(S::one(), S::zero(), S::zero()),
            ay: Vec3::new(S::zero(), S::one(), S::zero()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Curve<S> {
    Line {
        p0: Point<S>,
        p1: Point<S>,
    },
    Arc(ArcCurve<S>),
    QuadBezier {
        p0: Point<S>,
        p1: Point<S>,
        p2: Point<S>,
    },
}

impl<S> Curve<S> {
    pub fn kind(&self) -> CurveKind {
        match self {
            Curve::Line { .. } => CurveKind::Line,
            Curve::Arc(_) => CurveKind::Arc,
            Curve::QuadBezier { .. } => CurveKind::QuadBezier,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiskSurface<S> {
    pub center: Point<S>,
    pub radius: S,
    pub ax: Vec3<S>,
    pub ay: Vec3<S>,
}

impl<S: Scalar> DiskSurface<S> {
    pub fn planar(center: Point<S>, radius: S) -> Self {
        Self {
            center,
            radius,
            ax: Vec3::new(S::one(), S::zero(), S::zero()),
            ay: Vec3::new(S::zero(), S::one(), S::zero()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Surface<S> {
    /// Simple closed ring; the closing edge is implicit.
    Polygon {
        ring: Vec<Point<S>>,
    },
    Disk(DiskSurface<S>),
    /// Parallelogram `origin + a·u + b·v`, `a, b ∈ [0, 1]`.
    Rect {
        origin: Point<S>,
        u: Vec3<S>,
        v: Vec3<S>,
    },
}

impl<S> Surface<S> {
    pub fn kind(&self) -> SurfaceKind {
        match self {
            Surface::Polygon { .. } => SurfaceKind::Polygon,
            Surface::Disk(_) => SurfaceKind::Disk,
            Surface::Rect { .. } => SurfaceKind::Rect,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VgDocument<S> {
    /// 2 or 3.
    pub dim: usize,
    pub curves: Vec<Curve<S>>,
    pub surfaces: Vec<Surface<S>>,
    pub label: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox<S> {
    pub min: Point<S>,
    pub max: Point<S>,
}

impl<S: Scalar> BoundingBox<S> {
    pub fn of_point(p: Point<S>) -> Self {
        Self { min: p, max: p }
    }

    pub fn include(&mut self, p: Point<S>) {
        self.min = self.min.min_by_axis(p);
        self.max = self.max.max_by_axis(p);
    }

    pub fn union(&self, o: &Self) -> Self {
        Self {
            min: self.min.min_by_axis(o.min),
            max: self.max.max_by_axis(o.max),
        }
    }

    pub fn diagonal(&self) -> S {
        (self.max - self.min).norm()
    }

    pub fn center(&self) -> Point<S> {
        (self.min + self.max) * S::lit(0.5)
    }
}

impl<S: Scalar> VgDocument<S> {
    /// Checks every structural and geometric invariant of the document.
    pub fn validate(&self) -> Result<(), VgError> {
        if self.dim != 2 && self.dim != 3 {
            return Err(VgError::invalid(
                "dim",
                format!("must be 2 or 3, got {}", self.dim),
            ));
        }
        if self.curves.is_empty() && self.surfaces.is_empty() {
            return Err(VgError::invalid(
                "curves",
                "document has no curves or surfaces",
            ));
        }
        for (i, c) in self.curves.iter().enumerate() {
            validate_curve(c, self.dim, &format!("curves[{i}]"))?;
        }
        for (i, s) in self.surfaces.iter().enumerate() {
            validate_surface(s, self.dim, &format!("surfaces[{i}]"))?;
        }
        Ok(())
    }

    pub fn bbox(&self) -> Option<BoundingBox<S>> {
        let boxes = self
            .curves
            .iter()
            .map(geom::curve_bbox)
            .chain(self.surfaces.iter().map(geom::surface_bbox));
        boxes.reduce(|a, b| a.union(&b))
    }
}

fn check_point<S: Scalar>(p: &Point<S>, dim: usize, path: &str) -> Result<(), VgError> {
    if !p.is_finite() {
        return Err(VgError::invalid(path, "non-finite coordinate"));
    }
    if dim == 2 && p.z != S::zero() {
        return Err(VgError::invalid(path, "planar document has a z component"));
    }
    Ok(())
}

fn check_frame<S: Scalar>(ax: Vec3<S>, ay: Vec3<S>, dim: usize, path: &str) -> Result<(), VgError> {
    let tol = S::lit(SHAPE_TOL);
    if !ax.is_finite() || !ay.is_finite() {
        return Err(VgError::invalid(path, "non-finite axis"));
    }
    if (ax.norm() - S::one()).abs() > tol
        || (ay.norm() - S::one()).abs() > tol
        || ax.dot(ay).abs() > tol
    {
        return Err(VgError::invalid(
            format!("{path}.ax"),
            "axes are not orthonormal",
        ));
    }
    if dim == 2 && (ax.z != S::zero() || ay.z != S::zero()) {
        return Err(VgError::invalid(
            format!("{path}.ax"),
            "planar axes must lie in the plane",
        ));
    }
    Ok(())
}

fn validate_curve<S: Scalar>(c: &Curve<S>, dim: usize, path: &str) -> Result<(), VgError> {
    match c {
        Curve::Line { p0, p1 } => {
            check_point(p0, dim, &format!("{path}.p0"))?;
            check_point(p1, dim, &format!("{path}.p1"))?;
            if p0 == p1 {
                return Err(VgError::invalid(path, "line start equals end"));
            }
        }
        Curve::Arc(a) => {
            check_point(&a.center, dim, &format!("{path}.center"))?;
            if !(a.radius > S::zero()) || !a.radius.is_finite() {
                return Err(VgError::invalid(
                    format!("{path}.radius"),
                    "radius must be positive",
                ));
            }
            let full = S::TAU() * (S::one() + S::lit(1e-12));
            if !a.start.is_finite() || !(a.sweep.abs() > S::zero()) || a.sweep.abs() > full {
                return Err(VgError::invalid(
                    format!("{path}.sweep"),
                    "sweep must lie in (0, 2π]",
                ));
            }
            check_frame(a.ax, a.ay, dim, path)?;
        }
        Curve::QuadBezier { p0, p1, p2 } => {
            check_point(p0, dim, &format!("{path}.p0"))?;
            check_point(p1, dim, &format!("{path}.p1"))?;
            check_point(p2, dim, &format!("{path}.p2"))?;
            if p0 == p1 && p1 == p2 {
                return Err(VgError::invalid(path, "all control points coincide"));
            }
        }
    }
    Ok(())
}

fn validate_surface<S: Scalar>(s: &Surface<S>, dim: usize, path: &str) -> Result<(), VgError> {
    match s {
        Surface::Polygon { ring } => {
            if ring.len() < 3 {
                return Err(VgError::invalid(
                    format!("{path}.ring"),
                    "needs at least 3 vertices",
                ));
            }
            for (i, p) in ring.iter().enumerate() {
                check_point(p, dim, &format!("{path}.ring[{i}]"))?;
            }
            let frame = geom::polygon_frame(ring)
                .ok_or_else(|| VgError::invalid(format!("{path}.ring"), "polygon has zero area"))?;
            let extent = ring
                .iter()
                .map(|p| p.dist(ring[0]))
                .fold(S::zero(), S::max)
                .max(S::one());
            for (i, p) in ring.iter().enumerate() {
                if (*p - frame.origin).dot(frame.normal).abs() > S::lit(SHAPE_TOL) * extent {
                    return Err(VgError::invalid(
                        format!("{path}.ring[{i}]"),
                        "vertex is not coplanar",
                    ));
                }
            }
            let local: Vec<(S, S)> = ring.iter().map(|p| frame.local(*p)).collect();
            if let Some((a, b)) = geom::ring_self_intersection(&local) {
                return Err(VgError::invalid(
                    format!("{path}.ring"),
                    format!("self-intersection between edges {a} and {b}"),
                ));
            }
        }
        Surface::Disk(d) => {
            check_point(&d.center, dim, &format!("{path}.center"))?;
            if !(d.radius > S::zero()) || !d.radius.is_finite() {
                return Err(VgError::invalid(
                    format!("{path}.radius"),
                    "radius must be positive",
                ));
            }
            check_frame(d.ax, d.ay, dim, path)?;
        }
        Surface::Rect { origin, u, v } => {
            check_point(origin, dim, &format!("{path}.origin"))?;
            check_point(u, dim, &format!("{path}.u"))?;
            check_point(v, dim, &format!("{path}.v"))?;
            let area = u.cross(*v).norm();
            if !(area > S::lit(1e-12) * u.norm() * v.norm()) {
                return Err(VgError::invalid(
                    path,
                    "edge vectors are linearly dependent",
                ));
            }
        }
    }
    Ok(())
}
