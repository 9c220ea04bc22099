//! Random generators and independent checks shared by the property and acceptance suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pwa_reach::copositive::{self, QuadraticForm};
use pwa_reach::model::SwitchGeometry;
use pwa_reach::reachset;
use pwa_reach::solve::ConicSolver;
use pwa_reach::Mode;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(rng))
}

pub fn gaussian_vector<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(rng))
}

/// `G G^T + shift I` with Gaussian `G`.
pub fn random_pd<R: Rng>(rng: &mut R, n: usize, shift: f64) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, n, n);
    &g * g.transpose() + DMatrix::identity(n, n) * shift
}

/// Symmetric with nonnegative entries, about a third of them zero.
pub fn random_nonneg<R: Rng>(rng: &mut R, k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = if rng.random_bool(0.35) { 0.0 } else { rng.random::<f64>() };
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// A switching geometry with a nonzero normal and an offset in [-2, 2].
pub fn random_geometry<R: Rng>(rng: &mut R, n: usize) -> SwitchGeometry {
    loop {
        let c = gaussian_vector(rng, n);
        if c.norm() > 0.1 {
            return SwitchGeometry::new(&c, rng.random_range(-2.0..2.0)).unwrap();
        }
    }
}

/// Orthogonal projection of `y` onto `{c^T x + f = 0}`.
pub fn project_to_hyperplane(c: &DVector<f64>, f: f64, y: &DVector<f64>) -> DVector<f64> {
    y - c * ((c.dot(y) + f) / c.norm_squared())
}

/// Worst `x^T (S + N) x` over sampled unit orthant directions for one random split.
pub fn split_orthant_minimum<R: Rng>(rng: &mut R, k: usize, samples: usize) -> f64 {
    let rank = rng.random_range(1..=k);
    let g = gaussian_matrix(rng, k, rank);
    let s = &g * g.transpose();
    let n = random_nonneg(rng, k);
    copositive::verify_copositive_sampled(&(s + n), samples, rng)
}

/// Searches a split for the positive-side matrix of a random form and, when one exists,
/// returns the worst sampled `q(x)` over the half-space and the split error.
///
/// The form is a PD quadratic centred near the hyperplane plus a multiple of `c^T x + f`
/// and shifted down, so only some draws are nonnegative on the positive side.
pub fn halfspace_soundness<R: Rng>(rng: &mut R, n: usize, points: usize, solver: &dyn ConicSolver) -> Option<(f64, f64)> {
    let geom = random_geometry(rng, n);
    let p = random_pd(rng, n, 0.0);
    let anchor = project_to_hyperplane(geom.c(), geom.f(), &gaussian_vector(rng, n))
        + geom.c().normalize() * rng.random_range(-0.5..1.0);
    // q(x) = (x - x0)^T P (x - x0) + kappa (c^T x + f) - delta
    let kappa = rng.random_range(0.0..2.0);
    let delta = rng.random_range(0.0..0.2);
    let b = -(&p * &anchor) + geom.c() * (0.5 * kappa);
    let e = anchor.dot(&(&p * &anchor)) + kappa * geom.f() - delta;
    let q = QuadraticForm::new(p, b, e);
    let target = copositive::halfspace_positivity_matrix(&q, &geom, Mode::Pos).unwrap();
    // borderline draws can stall the solver; those count as uncertified
    let cert = copositive::find_copositive_certificate(&target, solver).ok().flatten()?;
    let split_error = cert.residual().split_error;
    let mut worst = f64::INFINITY;
    for _ in 0..points {
        let y = gaussian_vector(rng, n) * 2.0;
        let v = geom.value(&y);
        let x = if v >= 0.0 { y } else { &y - geom.c() * (2.0 * v / geom.c().norm_squared()) };
        worst = worst.min(q.eval(&x));
    }
    Some((worst, split_error))
}

/// Builds `q2 = q1 + (v u^T + u v^T)` with `v = (c, f)`, which agrees with `q1` on the
/// hyperplane. Returns the library residual of the equalities and the worst relative
/// disagreement `|q1 - q2| / (1 + |x|^2)` over sampled hyperplane points.
pub fn hyperplane_pair<R: Rng>(rng: &mut R, n: usize, points: usize) -> (f64, f64) {
    let geom = random_geometry(rng, n);
    let q1 = QuadraticForm::new(random_pd(rng, n, 0.1), gaussian_vector(rng, n), normal(rng));
    let mut v = DVector::zeros(n + 1);
    v.rows_mut(0, n).copy_from(geom.c());
    v[n] = geom.f();
    let u = gaussian_vector(rng, n + 1);
    let delta = &v * u.transpose() + &u * v.transpose();
    let block2 = q1.block() + &delta;
    let q2 = QuadraticForm::new(
        block2.view((0, 0), (n, n)).into_owned(),
        block2.view((0, n), (n, 1)).column(0).into_owned(),
        block2[(n, n)],
    );
    let residual = copositive::hyperplane_residual(&geom, &(q1.block() - q2.block())).amax();
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let x = project_to_hyperplane(geom.c(), geom.f(), &(gaussian_vector(rng, n) * 3.0));
        worst = worst.max((q1.eval(&x) - q2.eval(&x)).abs() / (1.0 + x.norm_squared()));
    }
    (residual, worst)
}

/// Worst reconstruction error of the half-space decomposition for points on either side,
/// and whether every coefficient came out nonnegative.
pub fn decomposition_residual<R: Rng>(rng: &mut R, n: usize, points: usize) -> (f64, bool) {
    let geom = random_geometry(rng, n);
    let flipped = SwitchGeometry::new(&-geom.c(), -geom.f()).unwrap();
    let mut worst: f64 = 0.0;
    let mut nonneg = true;
    for _ in 0..points {
        let x = gaussian_vector(rng, n) * 3.0;
        let g = if geom.value(&x) >= 0.0 { &geom } else { &flipped };
        let d = g.decompose(&x).expect("point lies on the chosen side");
        nonneg &= d.mu >= 0.0 && d.theta1.min() >= 0.0 && d.theta2.min() >= 0.0;
        worst = worst.max((d.reconstruct(g) - &x).norm());
    }
    (worst, nonneg)
}

/// Projects a random 4-D form onto a random coordinate pair and samples its boundary.
/// Returns the largest excess over the 2-D level (containment) and the shortfall of the
/// best sample from the level (tightness).
pub fn projection_margins<R: Rng>(rng: &mut R, points: usize) -> (f64, f64) {
    let n = 4;
    let p = random_pd(rng, n, 0.2);
    let b = gaussian_vector(rng, n) * 0.5;
    let chol = p.clone().cholesky().unwrap();
    let center = -chol.solve(&b);
    let e = center.dot(&(&p * &center)) - 1.0 + rng.random_range(0.1..2.0);
    let q = QuadraticForm::new(p, b, e);
    let i = rng.random_range(0..n);
    let j = (i + rng.random_range(1..n)) % n;
    let ell = reachset::project_2d(&q, (i, j)).unwrap();

    // x = center + sqrt(rho) L^{-T} u hits q(x) = 1 for unit u
    let rho = 1.0 - e + center.dot(&(q.p() * &center));
    let lt = chol.l().transpose();
    let mut excess = f64::NEG_INFINITY;
    let mut best = f64::NEG_INFINITY;
    for _ in 0..points {
        let u = gaussian_vector(rng, n).normalize();
        let x = &center + lt.solve_upper_triangular(&u).unwrap() * rho.sqrt();
        let y = nalgebra::Vector2::new(x[i], x[j]);
        let val = ell.value(&y);
        excess = excess.max(val - ell.level);
        best = best.max(val);
    }
    (excess, ell.level - best)
}
