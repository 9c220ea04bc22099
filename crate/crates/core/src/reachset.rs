//! Piecewise ellipsoidal reachable-set estimates: membership, comparison, 2-D projection
//! and boundary export.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::copositive::QuadraticForm;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{BimodalSystem, Mode};
use crate::solve::Certificate;

pub type Point2 = [f64; 2];

/// `{x : c^T x + f <= 0, q1(x) <= 1} u {x : c^T x + f >= 0, q2(x) <= 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseEllipsoid {
    pub neg_piece: QuadraticForm,
    pub pos_piece: QuadraticForm,
    pub c: DVector<f64>,
    pub f: f64,
}

impl PiecewiseEllipsoid {
    pub fn new(neg_piece: QuadraticForm, pos_piece: QuadraticForm, c: DVector<f64>, f: f64) -> Result<Self> {
        let n = c.len();
        if neg_piece.n() != n || pos_piece.n() != n {
            return Err(Error::DimensionMismatch("pieces and switching normal differ in dimension".into()));
        }
        Ok(Self { neg_piece, pos_piece, c, f })
    }

    pub fn from_certificate(cert: &Certificate, sys: &BimodalSystem) -> Result<Self> {
        let [neg, pos] = cert.pieces.clone();
        Self::new(neg, pos, sys.c().clone(), sys.f())
    }

    /// The ellipsoid `x^T P x <= 1` seen as a piecewise set with identical pieces.
    pub fn from_common(p: &DMatrix<f64>, c: DVector<f64>, f: f64) -> Result<Self> {
        let q = QuadraticForm::homogeneous(p.clone());
        Self::new(q.clone(), q, c, f)
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn piece(&self, mode: Mode) -> &QuadraticForm {
        match mode {
            Mode::Neg => &self.neg_piece,
            Mode::Pos => &self.pos_piece,
        }
    }

    pub fn switching_value(&self, x: &DVector<f64>) -> f64 {
        self.c.dot(x) + self.f
    }

    /// Region of `x`, with the hyperplane itself assigned to `Pos`.
    pub fn mode_at(&self, x: &DVector<f64>) -> Mode {
        if self.switching_value(x) < 0.0 {
            Mode::Neg
        } else {
            Mode::Pos
        }
    }

    /// Value of the active piece.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.piece(self.mode_at(x)).eval(x)
    }

    pub fn contains(&self, x: &DVector<f64>, tol_mem: f64) -> bool {
        let s = self.switching_value(x);
        let ok = |q: &QuadraticForm| {
            let v = q.eval(x);
            v >= -tol_mem && v <= 1.0 + tol_mem
        };
        (s <= tol_mem && ok(&self.neg_piece)) || (s >= -tol_mem && ok(&self.pos_piece))
    }

    /// Largest `|q1 - q2| / (1 + |x|^2)` over `samples` random points of the switching hyperplane.
    pub fn continuity_defect<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> f64 {
        let n = self.n();
        let c2 = self.c.norm_squared();
        let base = &self.c * (-self.f / c2);
        (0..samples)
            .map(|_| {
                let g = DVector::from_fn(n, |_, _| 3.0 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng));
                let x = &base + &g - &self.c * (self.c.dot(&g) / c2);
                (self.neg_piece.eval(&x) - self.pos_piece.eval(&x)).abs() / (1.0 + x.norm_squared())
            })
            .fold(0.0, f64::max)
    }

    /// Closed-ordered boundary of one piece in the plane, clipped at the switching line.
    ///
    /// Points lie on `{q = 1}`; when the ellipse crosses the switching line, the returned arc
    /// runs from one crossing point to the other and the chord along the line closes it.
    pub fn boundary_polyline(&self, piece: Mode, samples: usize) -> Result<Vec<Point2>> {
        if self.n() != 2 {
            return Err(Error::DimensionUnsupported(self.n()));
        }
        let q = self.piece(piece);
        let Some((center, rho)) = level_set(q) else {
            return Ok(Vec::new());
        };
        let s = piece.sign();
        let side = |x: &DVector<f64>| s * self.switching_value(x);
        let at = |theta: f64| -> DVector<f64> {
            let u = DVector::from_column_slice(&[theta.cos(), theta.sin()]);
            let r = (rho / u.dot(&(q.p() * &u))).sqrt();
            &center + u * r
        };
        let samples = samples.max(3);

        let crossings = line_crossings(q, &self.c, self.f);
        let Some((x1, x2)) = crossings else {
            if side(&center) < 0.0 {
                return Ok(Vec::new());
            }
            let mut pts: Vec<Point2> = (0..samples)
                .map(|k| to_point(&at(std::f64::consts::TAU * k as f64 / samples as f64)))
                .collect();
            pts.push(pts[0]);
            return Ok(pts);
        };

        let angle = |x: &DVector<f64>| (x[1] - center[1]).atan2(x[0] - center[0]);
        let (a1, a2) = (angle(&x1), angle(&x2));
        let sweep = (a2 - a1).rem_euclid(std::f64::consts::TAU);
        // Counter-clockwise arc from x1 to x2, or its complement.
        let (start, span, first, last) = if side(&at(a1 + sweep / 2.0)) >= 0.0 {
            (a1, sweep, x1, x2)
        } else {
            (a2, std::f64::consts::TAU - sweep, x2, x1)
        };
        let mut pts = Vec::with_capacity(samples + 1);
        pts.push(to_point(&first));
        for k in 1..samples {
            pts.push(to_point(&at(start + span * k as f64 / samples as f64)));
        }
        pts.push(to_point(&last));
        Ok(pts)
    }

    /// Axis-aligned box containing both pieces' full ellipsoids.
    pub fn bounding_box(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        let boxes: Vec<_> = Mode::BOTH.iter().filter_map(|&m| ellipsoid_box(self.piece(m))).collect();
        let (mut lo, mut hi) = boxes.first()?.clone();
        for (l, h) in &boxes[1..] {
            lo = lo.zip_map(l, f64::min);
            hi = hi.zip_map(h, f64::max);
        }
        Some((lo, hi))
    }
}

fn to_point(x: &DVector<f64>) -> Point2 {
    [x[0], x[1]]
}

/// Center and squared radius of `{q <= 1}`, or `None` when empty or unbounded.
fn level_set(q: &QuadraticForm) -> Option<(DVector<f64>, f64)> {
    if linalg::min_eig(q.p()) <= 0.0 {
        return None;
    }
    let center = q.center().ok()?;
    let rho = q.level_radius_sq().ok()?;
    (rho > 0.0).then_some((center, rho))
}

fn ellipsoid_box(q: &QuadraticForm) -> Option<(DVector<f64>, DVector<f64>)> {
    let (center, rho) = level_set(q)?;
    let pinv = linalg::inverse(q.p()).ok()?;
    let half = DVector::from_fn(center.len(), |k, _| (rho * pinv[(k, k)]).sqrt());
    Some((&center - &half, &center + &half))
}

/// The two points where `{q = 1}` meets the line `c^T x + f = 0` in the plane.
fn line_crossings(q: &QuadraticForm, c: &DVector<f64>, f: f64) -> Option<(DVector<f64>, DVector<f64>)> {
    let p0 = c * (-f / c.norm_squared());
    let v = DVector::from_column_slice(&[-c[1], c[0]]);
    let a = v.dot(&(q.p() * &v));
    let b = v.dot(&(q.p() * &p0 + q.b()));
    let cc = q.eval(&p0) - 1.0;
    let disc = b * b - a * cc;
    if disc <= 0.0 || a <= 0.0 {
        return None;
    }
    let root = disc.sqrt();
    // Cancellation-free pair of roots.
    let big = -(b + b.signum() * root);
    let (t1, t2) = if big == 0.0 { (root / a, -root / a) } else { (big / a, cc / big) };
    Some((&p0 + &v * t1, &p0 + &v * t2))
}

/// `{y : (y - center)^T Q (y - center) <= level}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid2D {
    pub q: Matrix2<f64>,
    pub center: Vector2<f64>,
    pub level: f64,
}

impl Ellipsoid2D {
    pub fn value(&self, y: &Vector2<f64>) -> f64 {
        let d = y - self.center;
        d.dot(&(self.q * d))
    }

    pub fn contains(&self, y: &Vector2<f64>, tol: f64) -> bool {
        self.value(y) <= self.level + tol
    }

    /// The same set written as `{y^T P y + 2 b^T y + e <= 1}`.
    pub fn to_quadratic_form(&self) -> QuadraticForm {
        let p = self.q / self.level;
        let b = -(p * self.center);
        let e = self.center.dot(&(p * self.center));
        QuadraticForm::new(
            DMatrix::from_column_slice(2, 2, p.as_slice()),
            DVector::from_column_slice(b.as_slice()),
            e,
        )
    }

    pub fn boundary(&self, samples: usize) -> Vec<Point2> {
        let samples = samples.max(3);
        let mut pts: Vec<Point2> = (0..samples)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / samples as f64;
                let u = Vector2::new(t.cos(), t.sin());
                let y = self.center + u * (self.level / u.dot(&(self.q * u))).sqrt();
                [y[0], y[1]]
            })
            .collect();
        pts.push(pts[0]);
        pts
    }
}

/// Exact shadow of `{q <= 1}` on coordinates `(i, j)` (zero-based).
///
/// With `x* = -P^{-1} b` and `rho = 1 - e + b^T P^{-1} b`, the shadow is the planar ellipse with
/// matrix `[(P^{-1})_{ij-block}]^{-1}` centered at `(x*_i, x*_j)` at level `rho`.
pub fn project_2d(q: &QuadraticForm, coords: (usize, usize)) -> Result<Ellipsoid2D> {
    let (i, j) = coords;
    let n = q.n();
    if i >= n || j >= n || i == j {
        return Err(Error::InvalidArgument(format!("coordinates ({i}, {j}) are not a distinct pair below {n}")));
    }
    let pinv = linalg::inverse(q.p())?;
    let center = -(&pinv * q.b());
    let rho = 1.0 - q.e() + q.b().dot(&(&pinv * q.b()));
    if rho < 0.0 {
        return Err(Error::EmptyLevelSet(rho));
    }
    let block = Matrix2::new(pinv[(i, i)], pinv[(i, j)], pinv[(j, i)], pinv[(j, j)]);
    let qm = block.try_inverse().ok_or(Error::Singular)?;
    Ok(Ellipsoid2D {
        q: (qm + qm.transpose()) * 0.5,
        center: Vector2::new(center[i], center[j]),
        level: rho,
    })
}

/// Shadow of a piecewise set on two coordinates.
///
/// When `c` is supported on the chosen coordinates the switching hyperplane projects to a line
/// and the clipped shadows are exact; otherwise `clip` is `None` and each piece's full shadow is
/// an outer bound of its part.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSet {
    pub pieces: [Option<Ellipsoid2D>; 2],
    pub clip: Option<(Vector2<f64>, f64)>,
}

pub fn project_piecewise(set: &PiecewiseEllipsoid, coords: (usize, usize)) -> Result<ProjectedSet> {
    let mut pieces = [None, None];
    for (k, mode) in Mode::BOTH.into_iter().enumerate() {
        pieces[k] = match project_2d(set.piece(mode), coords) {
            Ok(e) => Some(e),
            Err(Error::EmptyLevelSet(_)) => None,
            Err(e) => return Err(e),
        };
    }
    let (i, j) = coords;
    let off_support = set.c.iter().enumerate().any(|(k, &v)| k != i && k != j && v != 0.0);
    let clip = (!off_support).then(|| (Vector2::new(set.c[i], set.c[j]), set.f));
    Ok(ProjectedSet { pieces, clip })
}

impl ProjectedSet {
    /// One polyline per nonempty piece.
    pub fn polylines(&self, samples: usize) -> Result<Vec<(Mode, Vec<Point2>)>> {
        let mut out = Vec::new();
        match self.clip {
            Some((c, f)) => {
                let form = |k: usize| self.pieces[k].map(|e| e.to_quadratic_form());
                if let (Some(neg), Some(pos)) = (form(0), form(1)) {
                    let planar = PiecewiseEllipsoid::new(neg, pos, DVector::from_column_slice(c.as_slice()), f)?;
                    for mode in Mode::BOTH {
                        let pts = planar.boundary_polyline(mode, samples)?;
                        if !pts.is_empty() {
                            out.push((mode, pts));
                        }
                    }
                }
            }
            None => {
                for (k, mode) in Mode::BOTH.into_iter().enumerate() {
                    if let Some(e) = &self.pieces[k] {
                        out.push((mode, e.boundary(samples)));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Result of comparing a piecewise estimate with a common ellipsoid `x^T P x <= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dominance {
    pub min_eig_neg: f64,
    pub min_eig_pos: f64,
    pub subset_flag: bool,
    /// Fraction of sampled boundary points of the piecewise set inside the common ellipsoid;
    /// only computed when the pieces carry affine terms.
    pub sampled_inside_fraction: Option<f64>,
}

/// Eigenvalue dominance `P_i > P`, sufficient for containment when the pieces are homogeneous.
pub fn compare_dominance(pw: &PiecewiseEllipsoid, common: &QuadraticForm) -> Result<Dominance> {
    compare_dominance_with(pw, common, 100_000, &mut ChaCha8Rng::seed_from_u64(0))
}

pub fn compare_dominance_with<R: Rng + ?Sized>(pw: &PiecewiseEllipsoid, common: &QuadraticForm, samples: usize, rng: &mut R) -> Result<Dominance> {
    if common.n() != pw.n() {
        return Err(Error::DimensionMismatch("sets differ in dimension".into()));
    }
    let min_eig_neg = linalg::min_eig(&(pw.neg_piece.p() - common.p()));
    let min_eig_pos = linalg::min_eig(&(pw.pos_piece.p() - common.p()));
    let affine = Mode::BOTH.iter().any(|&m| {
        let q = pw.piece(m);
        q.e() != 0.0 || q.b().iter().any(|&v| v != 0.0)
    });
    let sampled_inside_fraction = affine.then(|| {
        let outer = PiecewiseEllipsoid::new(common.clone(), common.clone(), pw.c.clone(), pw.f).expect("dimensions checked");
        sampled_boundary_containment(pw, &outer, samples, rng)
    });
    Ok(Dominance {
        min_eig_neg,
        min_eig_pos,
        subset_flag: min_eig_neg > 0.0 && min_eig_pos > 0.0,
        sampled_inside_fraction,
    })
}

/// Random boundary points of each piece (radial from the piece center, kept on the piece's side).
pub fn sample_boundary<R: Rng + ?Sized>(set: &PiecewiseEllipsoid, samples: usize, rng: &mut R) -> Vec<DVector<f64>> {
    let n = set.n();
    let mut out = Vec::with_capacity(samples);
    let levels: Vec<_> = Mode::BOTH.iter().map(|&m| level_set(set.piece(m))).collect();
    if levels.iter().all(Option::is_none) {
        return out;
    }
    let max_attempts = samples.saturating_mul(50);
    let mut attempts = 0;
    while out.len() < samples && attempts < max_attempts {
        attempts += 1;
        let k = rng.random_range(0..2);
        let Some((center, rho)) = &levels[k] else { continue };
        let mode = Mode::BOTH[k];
        let q = set.piece(mode);
        let u = DVector::from_fn(n, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng));
        let x = center + &u * (rho / u.dot(&(q.p() * &u))).sqrt();
        if mode.sign() * set.switching_value(&x) >= 0.0 {
            out.push(x);
        }
    }
    out
}

/// Fraction of sampled boundary points of `inner` that lie in `outer`.
pub fn sampled_boundary_containment<R: Rng + ?Sized>(inner: &PiecewiseEllipsoid, outer: &PiecewiseEllipsoid, samples: usize, rng: &mut R) -> f64 {
    let pts = sample_boundary(inner, samples, rng);
    if pts.is_empty() {
        return 1.0;
    }
    pts.iter().filter(|x| outer.contains(x, 1e-9)).count() as f64 / pts.len() as f64
}

/// Monte Carlo estimate of the measure of `{x in box : inside(x)}`.
pub fn mc_volume<R: Rng + ?Sized>(inside: impl Fn(&DVector<f64>) -> bool, lo: &DVector<f64>, hi: &DVector<f64>, samples: usize, rng: &mut R) -> f64 {
    let box_volume: f64 = hi.iter().zip(lo.iter()).map(|(h, l)| h - l).product();
    if samples == 0 {
        return 0.0;
    }
    let hits = (0..samples)
        .filter(|_| {
            let x = DVector::from_fn(lo.len(), |k, _| rng.random_range(lo[k]..=hi[k]));
            inside(&x)
        })
        .count();
    box_volume * hits as f64 / samples as f64
}

/// CSV with one `x,y` row per point and a blank line between polylines.
pub fn polylines_to_csv(polylines: &[Vec<Point2>]) -> String {
    let mut out = String::from("x,y\n");
    for (k, line) in polylines.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        for p in line {
            let _ = writeln!(out, "{},{}", p[0], p[1]);
        }
    }
    out
}

/// A stroked polyline for [`render_svg`].
#[derive(Debug, Clone)]
pub struct SvgPath {
    pub points: Vec<Point2>,
    pub color: String,
    pub width: f64,
}

impl SvgPath {
    pub fn new(points: Vec<Point2>, color: &str, width: f64) -> Self {
        Self { points, color: color.to_string(), width }
    }
}

pub const NEG_COLOR: &str = "#d62728";
pub const POS_COLOR: &str = "#1f77b4";
pub const COMMON_COLOR: &str = "#17becf";
pub const TRAJECTORY_COLOR: &str = "#7f7f7f";

/// Minimal standalone SVG, y axis pointing up.
pub fn render_svg(paths: &[SvgPath], size: f64) -> String {
    let all = paths.iter().flat_map(|p| p.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in all {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    let pad = 0.05 * (x1 - x0).max(y1 - y0).max(1e-12);
    let (x0, x1, y0, y1) = (x0 - pad, x1 + pad, y0 - pad, y1 + pad);
    let scale = size / (x1 - x0).max(y1 - y0);
    let (w, h) = ((x1 - x0) * scale, (y1 - y0) * scale);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1}" height="{h:.1}" viewBox="0 0 {w:.3} {h:.3}">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for path in paths {
        if path.points.is_empty() {
            continue;
        }
        let pts: Vec<String> = path
            .points
            .iter()
            .map(|p| format!("{:.3},{:.3}", (p[0] - x0) * scale, (y1 - p[1]) * scale))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="{}" points="{}"/>"#,
            path.color,
            path.width,
            pts.join(" ")
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(c: [f64; 2], f: f64) -> PiecewiseEllipsoid {
        let q = QuadraticForm::homogeneous(DMatrix::identity(2, 2));
        PiecewiseEllipsoid::new(q.clone(), q, DVector::from_column_slice(&c), f).unwrap()
    }

    #[test]
    fn origin_is_inside() {
        assert!(disk([1.0, 0.0], 0.0).contains(&DVector::zeros(2), 1e-9));
    }

    #[test]
    fn scalar_membership() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let set = PiecewiseEllipsoid::from_common(&one, DVector::from_element(1, 1.0), 0.0).unwrap();
        assert!(set.contains(&DVector::from_element(1, 1.0), 1e-9));
        assert!(set.contains(&DVector::from_element(1, -1.0), 1e-9));
        assert!(!set.contains(&DVector::from_element(1, 1.001), 1e-9));
    }

    #[test]
    fn left_half_disk() {
        let pts = disk([1.0, 0.0], 0.0).boundary_polyline(Mode::Neg, 64).unwrap();
        let first = pts.first().unwrap();
        let last = pts.last().unwrap();
        let mut ends = [first[1], last[1]];
        ends.sort_by(f64::total_cmp);
        assert!(first[0].abs() < 1e-15 && last[0].abs() < 1e-15);
        assert!((ends[0] + 1.0).abs() < 1e-12 && (ends[1] - 1.0).abs() < 1e-12);
        for p in &pts {
            assert!(p[0] <= 1e-12);
            assert!((p[0] * p[0] + p[1] * p[1] - 1.0).abs() < 1e-12);
        }
        assert!(pts.iter().any(|p| (p[0] + 1.0).abs() < 1e-2));
    }

    #[test]
    fn piece_on_wrong_side_is_empty() {
        let set = disk([1.0, 0.0], -5.0);
        assert!(set.boundary_polyline(Mode::Pos, 32).unwrap().is_empty());
        let full = set.boundary_polyline(Mode::Neg, 32).unwrap();
        assert_eq!(full.len(), 33);
        assert_eq!(full[0], full[32]);
    }

    #[test]
    fn boundary_needs_planar_set() {
        let q = QuadraticForm::homogeneous(DMatrix::identity(3, 3));
        let set = PiecewiseEllipsoid::new(q.clone(), q, DVector::from_column_slice(&[1.0, 0.0, 0.0]), 0.0).unwrap();
        assert!(matches!(set.boundary_polyline(Mode::Neg, 8), Err(Error::DimensionUnsupported(3))));
    }

    #[test]
    fn pieces_join_on_the_switching_line() {
        // q1 - q2 = (c^T x)^2 vanishes on the line.
        let c = DVector::from_column_slice(&[1.0, 2.0]);
        let p2 = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let p1 = &p2 + &c * c.transpose();
        let set = PiecewiseEllipsoid::new(QuadraticForm::homogeneous(p1), QuadraticForm::homogeneous(p2), c, 0.0).unwrap();
        let neg = set.boundary_polyline(Mode::Neg, 100).unwrap();
        let pos = set.boundary_polyline(Mode::Pos, 100).unwrap();
        let close = |a: Point2, b: Point2| (a[0] - b[0]).hypot(a[1] - b[1]) < 1e-6;
        let (n0, n1) = (neg[0], *neg.last().unwrap());
        let (p0, p1) = (pos[0], *pos.last().unwrap());
        assert!((close(n0, p0) && close(n1, p1)) || (close(n0, p1) && close(n1, p0)));
        for (mode, line) in [(Mode::Neg, &neg), (Mode::Pos, &pos)] {
            for p in line {
                let x = DVector::from_column_slice(p);
                assert!((set.piece(mode).eval(&x) - 1.0).abs() < 1e-8);
                assert!(mode.sign() * set.switching_value(&x) >= -1e-9);
            }
        }
    }

    #[test]
    fn unit_ball_shadow() {
        let q = QuadraticForm::homogeneous(DMatrix::identity(4, 4));
        let e = project_2d(&q, (0, 2)).unwrap();
        assert!((e.q - Matrix2::identity()).amax() < 1e-12);
        assert_eq!(e.center, Vector2::zeros());
        assert!((e.level - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_shadow() {
        let q = QuadraticForm::homogeneous(DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 4.0])));
        let e = project_2d(&q, (0, 1)).unwrap();
        let b = e.boundary(4);
        assert!((b[0][0] - 1.0).abs() < 1e-12);
        assert!((b[1][1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_level_set() {
        let q = QuadraticForm::new(DMatrix::identity(2, 2), DVector::zeros(2), 2.0);
        assert!(matches!(project_2d(&q, (0, 1)), Err(Error::EmptyLevelSet(_))));
    }

    #[test]
    fn dominance_cases() {
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let c = DVector::from_column_slice(&[1.0, 0.0]);
        let common = QuadraticForm::homogeneous(p.clone());
        let same = PiecewiseEllipsoid::from_common(&p, c.clone(), 0.0).unwrap();
        let d = compare_dominance(&same, &common).unwrap();
        assert!(d.min_eig_neg.abs() < 1e-12 && d.min_eig_pos.abs() < 1e-12);
        assert!(!d.subset_flag);
        let half = PiecewiseEllipsoid::new(QuadraticForm::homogeneous(&p / 2.0), common.clone(), c, 0.0).unwrap();
        let d = compare_dominance(&half, &common).unwrap();
        assert!(d.min_eig_neg < 0.0 && !d.subset_flag);
        assert!(d.sampled_inside_fraction.is_none());
    }

    #[test]
    fn mc_area_of_unit_disk() {
        let set = disk([1.0, 0.0], 0.0);
        let (lo, hi) = set.bounding_box().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let area = mc_volume(|x| set.contains(x, 1e-9), &lo, &hi, 100_000, &mut rng);
        assert!((area - std::f64::consts::PI).abs() < 0.03);
    }

    #[test]
    fn csv_separates_pieces() {
        let csv = polylines_to_csv(&[vec![[0.0, 1.0]], vec![[2.0, 3.0]]]);
        assert_eq!(csv, "x,y\n0,1\n\n2,3\n");
    }

    #[test]
    fn svg_is_standalone() {
        let svg = render_svg(&[SvgPath::new(vec![[0.0, 0.0], [1.0, 1.0]], NEG_COLOR, 1.0)], 200.0);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains(NEG_COLOR));
    }
}
