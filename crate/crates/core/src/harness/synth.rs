//! Procedural symbol dataset. Every document has at least one surface and
//! six hypergraph nodes. Two pairs are hard by construction:
//!
//! * `circle_hole` / `stadium_hole`: the hole is a 12-node cycle in both,
//!   two semicircles joined across two short chords. The near-circle joins
//!   them with short arcs, the stadium with straights. Node positions agree
//!   to within the arcs' sagitta, so only the curve type separates them.
//!   The only filled region is a tab beside the hole.
//! * `tee_joined` / `tee_gap`: a stem ends on the bar's lower edge, or
//!   stops short of it by a gap between 2 and 8 merge tolerances.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{io_err, HarnessError};
use crate::scalar::{Point, Vec3};
use crate::vgdoc::{
    parse_canonical, to_canonical, ArcCurve, Curve, DiskSurface, Surface, VgDocument,
};

const VERTEX_NOISE: f64 = 0.02;
const SCALE_JITTER: f64 = 0.05;
const ROTATION_JITTER: f64 = 5.0 * PI / 180.0;
/// Gap of the `tee_gap` class in normalized units.
const GAP_RANGE: (f64, f64) = (2e-7, 8e-7);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symbol {
    CircleHole,
    StadiumHole,
    TeeJoined,
    TeeGap,
    Wheel,
    House,
    Arch,
    Hexagon,
}

impl Symbol {
    pub const ALL: [Symbol; 8] = [
        Symbol::CircleHole,
        Symbol::StadiumHole,
        Symbol::TeeJoined,
        Symbol::TeeGap,
        Symbol::Wheel,
        Symbol::House,
        Symbol::Arch,
        Symbol::Hexagon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Symbol::CircleHole => "circle_hole",
            Symbol::StadiumHole => "stadium_hole",
            Symbol::TeeJoined => "tee_joined",
            Symbol::TeeGap => "tee_gap",
            Symbol::Wheel => "wheel",
            Symbol::House => "house",
            Symbol::Arch => "arch",
            Symbol::Hexagon => "hexagon",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: Vec<Symbol>,
    /// Documents per split, divided evenly over the classes.
    pub train: usize,
    pub test: usize,
    pub seed: u64,
    /// Also emit `train3d` / `test3d`, the same symbols on random planes.
    pub dim3: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: Symbol::ALL.to_vec(),
            train: 1600,
            test: 400,
            seed: 7,
            dim3: false,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let c = self.classes.len();
        if c < 2 {
            return Err(HarnessError::Config(
                "a dataset needs at least 2 classes".into(),
            ));
        }
        for (i, s) in self.classes.iter().enumerate() {
            if self.classes[..i].contains(s) {
                return Err(HarnessError::Config(format!(
                    "class '{}' listed twice",
                    s.name()
                )));
            }
        }
        for (name, n) in [("train", self.train), ("test", self.test)] {
            if n == 0 || n % c != 0 {
                return Err(HarnessError::Config(format!(
                    "{name} count {n} is not a positive multiple of the class count {c}"
                )));
            }
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        hex(&Sha256::digest(
            serde_json::to_vec(self).expect("spec serializes"),
        ))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(skip)]
    pub root: PathBuf,
    pub classes: Vec<String>,
    /// Split name → document paths relative to the root.
    pub splits: IndexMap<String, Vec<String>>,
    pub seed: u64,
    pub spec_digest: String,
}

impl DatasetManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn load(root: &Path) -> Result<Self, HarnessError> {
        let path = root.join(Self::FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let mut m: Self =
            serde_json::from_str(&text).map_err(|source| HarnessError::Json { path, source })?;
        m.root = root.to_path_buf();
        Ok(m)
    }

    pub fn save(&self) -> Result<(), HarnessError> {
        let path = self.root.join(Self::FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))
    }

    /// Parses every document of a split, checking labels against the
    /// class directory each file sits in.
    pub fn load_split(&self, split: &str) -> Result<Vec<VgDocument<f64>>, HarnessError> {
        let files = self
            .splits
            .get(split)
            .ok_or_else(|| HarnessError::Config(format!("dataset has no split '{split}'")))?;
        files
            .iter()
            .map(|rel| {
                let path = self.root.join(rel);
                let text = fs::read_to_string(&path).map_err(io_err(&path))?;
                let doc: VgDocument<f64> =
                    parse_canonical(&text).map_err(|source| HarnessError::Document {
                        path: path.clone(),
                        source,
                    })?;
                let class = Path::new(rel)
                    .parent()
                    .and_then(|p| p.file_name())
                    .and_then(|n| n.to_str())
                    .unwrap_or_default()
                    .to_string();
                let expected = self.classes.iter().position(|c| *c == class);
                if expected.is_none() || doc.label != expected {
                    return Err(HarnessError::Label {
                        path,
                        label: doc.label,
                        class,
                    });
                }
                Ok(doc)
            })
            .collect()
    }
}

/// Writes the dataset under `out` and returns its manifest.
pub fn synth_generate(spec: &SynthSpec, out: &Path) -> Result<DatasetManifest, HarnessError> {
    spec.validate()?;
    let mut splits = IndexMap::new();
    let mut plan = vec![("train", spec.train, 2), ("test", spec.test, 2)];
    if spec.dim3 {
        plan.push(("train3d", spec.train, 3));
        plan.push(("test3d", spec.test, 3));
    }
    for (code, &(split, count, dim)) in plan.iter().enumerate() {
        let per_class = count / spec.classes.len();
        let mut files = Vec::with_capacity(count);
        for (label, &symbol) in spec.classes.iter().enumerate() {
            let dir = out.join(split).join(symbol.name());
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            for i in 0..per_class {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(((code as u64) << 48) | ((symbol as u64) << 32) | i as u64);
                let doc = generate_document(symbol, label, dim, &mut rng);
                let rel = format!("{split}/{}/{i:05}.json", symbol.name());
                let path = out.join(&rel);
                fs::write(&path, to_canonical(&doc)).map_err(io_err(&path))?;
                files.push(rel);
            }
        }
        splits.insert(split.to_string(), files);
    }
    let manifest = DatasetManifest {
        root: out.to_path_buf(),
        classes: spec.classes.iter().map(|s| s.name().to_string()).collect(),
        splits,
        seed: spec.seed,
        spec_digest: spec.digest(),
    };
    manifest.save()?;
    Ok(manifest)
}

type P2 = [f64; 2];

fn lerp(a: P2, b: P2, t: f64) -> P2 {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
}

/// A symbol in its canonical frame, roughly inside `[-1, 1]²`.
#[derive(Default)]
struct Sketch {
    curves: Vec<Curve<f64>>,
    surfaces: Vec<Surface<f64>>,
}

fn pt(p: P2) -> Point<f64> {
    Vec3::xy(p[0], p[1])
}

impl Sketch {
    fn line(&mut self, a: P2, b: P2) {
        self.curves.push(Curve::Line {
            p0: pt(a),
            p1: pt(b),
        });
    }

    /// Straight run from `a` to `b` cut into `parts` collinear lines.
    /// Consecutive lines from `a` to `b` through the interior fractions `at`.
    fn split_line(&mut self, a: P2, b: P2, at: &[f64]) {
        let mut t0 = 0.0;
        for &t1 in at.iter().chain([1.0].iter()) {
            self.line(lerp(a, b, t0), lerp(a, b, t1));
            t0 = t1;
        }
    }

    fn closed(&mut self, ring: &[P2]) {
        for i in 0..ring.len() {
            self.line(ring[i], ring[(i + 1) % ring.len()]);
        }
    }

    fn arc(&mut self, c: P2, r: f64, start: f64, sweep: f64) {
        self.curves
            .push(Curve::Arc(ArcCurve::planar(pt(c), r, start, sweep)));
    }

    fn fill(&mut self, ring: &[P2]) {
        self.surfaces.push(Surface::Polygon {
            ring: ring.iter().map(|&p| pt(p)).collect(),
        });
    }
}

struct Jitter<'a, R: Rng> {
    rng: &'a mut R,
}

impl<R: Rng> Jitter<'_, R> {
    fn u(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }

    fn pm(&mut self, a: f64) -> f64 {
        self.rng.gen_range(-a..a)
    }

    fn p(&mut self, x: f64, y: f64) -> P2 {
        [x + self.pm(VERTEX_NOISE), y + self.pm(VERTEX_NOISE)]
    }
}

/// One labelled document of `symbol`, placed in the plane (`dim = 2`) or
/// on a random plane in space (`dim = 3`).
pub fn generate_document<R: Rng>(
    symbol: Symbol,
    label: usize,
    dim: usize,
    rng: &mut R,
) -> VgDocument<f64> {
    let mut j = Jitter { rng };
    let mut sk = Sketch::default();
    // Stem index and the bar normal it should back away from.
    let mut gap = None;
    match symbol {
        Symbol::CircleHole | Symbol::StadiumHole => {
            let plate = [
                j.p(-1.0, -1.0),
                j.p(1.0, -1.0),
                j.p(1.0, 1.0),
                j.p(-1.0, 1.0),
            ];
            sk.closed(&plate);
            // The filled tab keeps the hole out of every surface
            // triangulation, where near-degenerate node layouts would
            // differ between the two joins.
            let tab = [
                j.p(-0.85, -0.9),
                j.p(-0.45, -0.9),
                j.p(-0.45, -0.65),
                j.p(-0.85, -0.65),
            ];
            sk.closed(&tab);
            sk.fill(&tab);
            let c = j.p(0.0, 0.0);
            let r = 0.45 * (1.0 + j.pm(SCALE_JITTER));
            let s = j.u(0.002, 0.006) * 2.0 * r;
            let (cl, cr) = ([c[0] - s / 2.0, c[1]], [c[0] + s / 2.0, c[1]]);
            let (bottom, top) = (c[1] - r, c[1] + r);
            sk.arc(cl, r, PI / 2.0, PI);
            sk.arc(cr, r, -PI / 2.0, PI);
            if symbol == Symbol::CircleHole {
                // Radius-r arcs over the same chords, bulging outward.
                let d = 2.0 * (s / (2.0 * r)).asin();
                let h = (r * r - s * s / 4.0).sqrt();
                sk.arc([c[0], bottom + h], r, -PI / 2.0 - d / 2.0, d);
                sk.arc([c[0], top - h], r, PI / 2.0 - d / 2.0, d);
            } else {
                // Same interior fractions as farthest point sampling picks on
                // the short arcs.
                sk.split_line([cl[0], bottom], [cr[0], bottom], &[0.25, 0.5]);
                sk.split_line([cr[0], top], [cl[0], top], &[0.25, 0.5]);
            }
        }
        Symbol::TeeJoined | Symbol::TeeGap => {
            let bar = [j.p(-0.8, 0.3), j.p(0.8, 0.3), j.p(0.8, 0.7), j.p(-0.8, 0.7)];
            sk.closed(&bar);
            sk.fill(&bar);
            let top = lerp(bar[0], bar[1], j.u(0.35, 0.65));
            let dx = j.pm(0.1);
            let foot = j.p(top[0] + dx, -0.9);
            sk.line(foot, top);
            if symbol == Symbol::TeeGap {
                let e = [bar[1][0] - bar[0][0], bar[1][1] - bar[0][1]];
                let len = e[0].hypot(e[1]);
                gap = Some((sk.curves.len() - 1, [-e[1] / len, e[0] / len]));
            }
        }
        Symbol::Wheel => {
            let c = j.p(0.0, 0.0);
            let r = 0.85 * (1.0 + j.pm(SCALE_JITTER));
            let t0 = j.u(0.0, PI / 3.0);
            for k in 0..3 {
                let t = if k == 0 {
                    t0
                } else {
                    t0 + k as f64 * PI / 3.0 + j.pm(0.05)
                };
                let d = [r * t.cos(), r * t.sin()];
                sk.line([c[0] + d[0], c[1] + d[1]], [c[0] - d[0], c[1] - d[1]]);
            }
            sk.arc(c, r, t0, 2.0 * PI);
            sk.surfaces
                .push(Surface::Disk(DiskSurface::planar(pt(c), r)));
        }
        Symbol::House => {
            let body = [
                j.p(-0.7, -0.9),
                j.p(0.7, -0.9),
                j.p(0.7, 0.3),
                j.p(-0.7, 0.3),
            ];
            let apex = j.p(0.0, 0.95);
            sk.closed(&body);
            sk.line(body[3], apex);
            sk.line(apex, body[2]);
            let u = j.u(0.25, 0.55);
            let (d0, d1) = (lerp(body[0], body[1], u), lerp(body[0], body[1], u + 0.2));
            let h = j.u(0.45, 0.6);
            let (t0, t1) = ([d0[0], d0[1] + h], [d1[0], d1[1] + h]);
            sk.line(d0, t0);
            sk.line(t0, t1);
            sk.line(t1, d1);
            sk.fill(&body);
            sk.fill(&[body[3], body[2], apex]);
        }
        Symbol::Arch => {
            let [bl, br, tr, tl] = [
                j.p(-0.7, -0.9),
                j.p(0.7, -0.9),
                j.p(0.7, 0.2),
                j.p(-0.7, 0.2),
            ];
            sk.line(bl, br);
            sk.line(br, tr);
            sk.curves.push(Curve::QuadBezier {
                p0: pt(tr),
                p1: pt(j.p(0.0, 1.2)),
                p2: pt(tl),
            });
            sk.line(tl, bl);
            sk.fill(&[bl, br, tr, tl]);
        }
        Symbol::Hexagon => {
            let r = 0.9 * (1.0 + j.pm(SCALE_JITTER));
            let ring: Vec<P2> = (0..6)
                .map(|k| {
                    let t = PI / 6.0 + k as f64 * PI / 3.0;
                    j.p(r * t.cos(), r * t.sin())
                })
                .collect();
            sk.closed(&ring);
            sk.fill(&ring);
        }
    }

    let place = Placement::random(&mut j, dim);
    let mut doc = place.apply(&sk, label);
    if let Some((idx, n)) = gap {
        let diag = doc.bbox().expect("non-empty").diagonal();
        let g = j.u(GAP_RANGE.0, GAP_RANGE.1) * diag / 2.0;
        let n = place.vector(n).normalized().expect("unit normal");
        if let Curve::Line { p1, .. } = &mut doc.curves[idx] {
            *p1 = *p1 - n * g;
        }
    }
    doc
}

/// Similarity map from the sketch plane into the document.
struct Placement {
    dim: usize,
    origin: Vec3<f64>,
    scale: f64,
    /// Images of the sketch x and y axes, orthonormal.
    a: Vec3<f64>,
    b: Vec3<f64>,
    /// In-plane rotation, used to keep 2D arcs in the fixed frame.
    angle: f64,
}

impl Placement {
    fn random<R: Rng>(j: &mut Jitter<'_, R>, dim: usize) -> Self {
        let scale = j.u(0.5, 2.0) * (1.0 + j.pm(SCALE_JITTER));
        let angle = j.pm(ROTATION_JITTER);
        let (c, s) = (angle.cos(), angle.sin());
        if dim == 2 {
            return Self {
                dim,
                origin: Vec3::xy(j.pm(5.0), j.pm(5.0)),
                scale,
                a: Vec3::xy(c, s),
                b: Vec3::xy(-s, c),
                angle,
            };
        }
        // Uniform normal on the sphere, then any frame of its plane.
        let z = j.u(-1.0, 1.0);
        let phi = j.u(0.0, 2.0 * PI);
        let rho = (1.0 - z * z).sqrt();
        let n = Vec3::new(rho * phi.cos(), rho * phi.sin(), z);
        let helper = if n.x.abs() < 0.9 {
            Vec3::new(1.0, 0.0, 0.0)
        } else {
            Vec3::new(0.0, 1.0, 0.0)
        };
        let e1 = (helper - n * helper.dot(n))
            .normalized()
            .expect("helper not parallel");
        let e2 = n.cross(e1);
        Self {
            dim,
            origin: Vec3::new(j.pm(5.0), j.pm(5.0), j.pm(5.0)),
            scale,
            a: e1 * c + e2 * s,
            b: e2 * c - e1 * s,
            angle: 0.0,
        }
    }

    fn vector(&self, v: P2) -> Vec3<f64> {
        self.a * v[0] + self.b * v[1]
    }

    fn point(&self, p: Point<f64>) -> Point<f64> {
        self.origin + self.vector([p.x, p.y]) * self.scale
    }

    fn frame(
        &self,
        arc_ax: Vec3<f64>,
        arc_ay: Vec3<f64>,
        start: f64,
    ) -> (Vec3<f64>, Vec3<f64>, f64) {
        if self.dim == 2 {
            (arc_ax, arc_ay, start + self.angle)
        } else {
            (
                self.vector([arc_ax.x, arc_ax.y]),
                self.vector([arc_ay.x, arc_ay.y]),
                start,
            )
        }
    }

    fn apply(&self, sk: &Sketch, label: usize) -> VgDocument<f64> {
        let curves = sk
            .curves
            .iter()
            .map(|c| match c {
                Curve::Line { p0, p1 } => Curve::Line {
                    p0: self.point(*p0),
                    p1: self.point(*p1),
                },
                Curve::QuadBezier { p0, p1, p2 } => Curve::QuadBezier {
                    p0: self.point(*p0),
                    p1: self.point(*p1),
                    p2: self.point(*p2),
                },
                Curve::Arc(a) => {
                    let (ax, ay, start) = self.frame(a.ax, a.ay, a.start);
                    Curve::Arc(ArcCurve {
                        center: self.point(a.center),
                        radius: a.radius * self.scale,
                        start,
                        sweep: a.sweep,
                        ax,
                        ay,
                    })
                }
            })
            .collect();
        let surfaces = sk
            .surfaces
            .iter()
            .map(|s| match s {
                Surface::Polygon { ring } => Surface::Polygon {
                    ring: ring.iter().map(|p| self.point(*p)).collect(),
                },
                Surface::Disk(d) => {
                    let (ax, ay, _) = self.frame(d.ax, d.ay, 0.0);
                    Surface::Disk(DiskSurface {
                        center: self.point(d.center),
                        radius: d.radius * self.scale,
                        ax,
                        ay,
                    })
                }
                Surface::Rect { origin, u, v } => Surface::Rect {
                    origin: self.point(*origin),
                    u: self.vector([u.x, u.y]) * self.scale,
                    v: self.vector([v.x, v.y]) * self.scale,
                },
            })
            .collect();
        VgDocument {
            dim: self.dim,
            curves,
            surfaces,
            label: Some(label),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{build_hypergraph, HypergraphConfig};

    fn counts(doc: &VgDocument<f64>) -> (usize, usize, usize) {
        let g = build_hypergraph(doc, &HypergraphConfig::default()).unwrap();
        (g.nodes.len(), g.edges.len(), g.surfaces.len())
    }

    fn doc(symbol: Symbol, dim: usize, i: u64) -> VgDocument<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        generate_document(symbol, 0, dim, &mut rng)
    }

    #[test]
    fn hole_pair_has_equal_structure() {
        for i in 0..20 {
            for dim in [2, 3] {
                assert_eq!(counts(&doc(Symbol::CircleHole, dim, i)), (20, 20, 1));
                assert_eq!(counts(&doc(Symbol::StadiumHole, dim, i)), (20, 20, 1));
            }
        }
    }

    #[test]
    fn tee_pair_differs_only_in_contact() {
        for i in 0..20 {
            for dim in [2, 3] {
                assert_eq!(counts(&doc(Symbol::TeeJoined, dim, i)), (6, 6, 1));
                assert_eq!(counts(&doc(Symbol::TeeGap, dim, i)), (6, 5, 1));
            }
        }
    }

    #[test]
    fn other_symbols_have_expected_counts() {
        for i in 0..10 {
            for dim in [2, 3] {
                assert_eq!(counts(&doc(Symbol::Wheel, dim, i)), (7, 12, 1));
                assert_eq!(counts(&doc(Symbol::House, dim, i)), (9, 11, 2));
                assert_eq!(counts(&doc(Symbol::Arch, dim, i)), (6, 6, 1));
                assert_eq!(counts(&doc(Symbol::Hexagon, dim, i)), (6, 6, 1));
            }
        }
    }

    #[test]
    fn spec_validation() {
        let one = SynthSpec {
            classes: vec![Symbol::Wheel],
            ..Default::default()
        };
        assert!(one.validate().is_err());
        let uneven = SynthSpec {
            train: 1601,
            ..Default::default()
        };
        assert!(uneven.validate().is_err());
        assert!(SynthSpec::default().validate().is_ok());
        assert_eq!(Symbol::from_name("tee_gap"), Some(Symbol::TeeGap));
    }
}
