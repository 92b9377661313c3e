use super::{ArcCurve, Curve, DiskSurface, Surface, VgDocument, VgError};
use crate::scalar::{Point, Scalar};

/// Similarity `p ↦ (p − center)·scale` applied by [`normalize_document`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform<S> {
    pub center: Point<S>,
    pub scale: S,
}

impl<S: Scalar> Transform<S> {
    pub fn identity() -> Self {
        Self {
            center: Point::zero(),
            scale: S::one(),
        }
    }

    #[inline]
    pub fn apply(&self, p: Point<S>) -> Point<S> {
        (p - self.center) * self.scale
    }

    #[inline]
    pub fn invert(&self, p: Point<S>) -> Point<S> {
        p / self.scale + self.center
    }

    pub fn apply_document(&self, doc: &VgDocument<S>) -> VgDocument<S> {
        let s = self.scale;
        let curves = doc
            .curves
            .iter()
            .map(|c| match c {
                Curve::Line { p0, p1 } => Curve::Line {
                    p0: self.apply(*p0),
                    p1: self.apply(*p1),
                },
                Curve::Arc(a) => Curve::Arc(ArcCurve {
                    center: self.apply(a.center),
                    radius: a.radius * s,
                    ..*a
                }),
                Curve::QuadBezier { p0, p1, p2 } => Curve::QuadBezier {
                    p0: self.apply(*p0),
                    p1: self.apply(*p1),
                    p2: self.apply(*p2),
                },
            })
            .collect();
        let surfaces = doc
            .surfaces
            .iter()
            .map(|f| match f {
                Surface::Polygon { ring } => Surface::Polygon {
                    ring: ring.iter().map(|p| self.apply(*p)).collect(),
                },
                Surface::Disk(d) => Surface::Disk(DiskSurface {
                    center: self.apply(d.center),
                    radius: d.radius * s,
                    ..*d
                }),
                Surface::Rect { origin, u, v } => Surface::Rect {
                    origin: self.apply(*origin),
                    u: *u * s,
                    v: *v * s,
                },
            })
            .collect();
        VgDocument {
            dim: doc.dim,
            curves,
            surfaces,
            label: doc.label,
        }
    }
}

/// Translates and uniformly scales `doc` so its bounding box is centered at
/// the origin with diagonal 2.
pub fn normalize_document<S: Scalar>(
    doc: &VgDocument<S>,
) -> Result<(VgDocument<S>, Transform<S>), VgError> {
    let bb = doc.bbox().ok_or(VgError::DegenerateExtent)?;
    let diag = bb.diagonal();
    if !(diag > S::zero()) || !diag.is_finite() {
        return Err(VgError::DegenerateExtent);
    }
    let tf = Transform {
        center: bb.center(),
        scale: S::lit(2.0) / diag,
    };
    Ok((tf.apply_document(doc), tf))
}
