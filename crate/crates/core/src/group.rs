//! Matrix Lie groups and the SO(3) implementation used by the sampler.
//!
//! Phase space is trivialized as `G × g` by left translation: a velocity at
//! `g` is stored as algebra coordinates `v` in a fixed orthonormal basis
//! `ξ_i` of the Lie algebra, so the tangent vector is `g · (vⁱ ξ_i)`.
//!
//! For SO(3) the basis is `ξ_i = hat(e_i) / √2`, orthonormal under the trace
//! inner product `⟨A, B⟩ = Tr(AᵀB)`. With that choice the kinetic energy
//! `½ Tr(vᵀv)` of the matrix form equals `½ ‖v‖²` of the coordinates.

use std::f64::consts::FRAC_1_SQRT_2;
use std::ops::Neg;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

/// Drift threshold on `‖gᵀg − I‖_max` above which products are re-orthonormalized.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-9;

/// Operations a matrix Lie group must provide for the sampler's integrator
/// and noise model. Only [`So3`] is implemented.
pub trait MatrixLieGroup {
    /// Group element, stored as a matrix.
    type Element: Copy;
    /// Lie algebra element in orthonormal-basis coordinates.
    type Algebra: Copy;
    /// Ambient matrix type, used for matrix gradients `∂V/∂x_ab`.
    type Matrix: Copy;

    /// Dimension `n` of the Lie algebra.
    const ALGEBRA_DIM: usize;

    fn identity() -> Self::Element;

    /// The `i`-th orthonormal basis matrix `ξ_i`.
    fn basis_matrix(i: usize) -> Self::Matrix;

    fn exp(v: &Self::Algebra) -> Self::Element;

    fn compose(a: &Self::Element, b: &Self::Element) -> Self::Element;

    /// `Tr(gradᵀ g ξ_i)`: the derivative along the left-invariant field `e_i`
    /// of a function whose ambient matrix gradient at `g` is `grad`.
    fn pairing(grad: &Self::Matrix, g: &Self::Element, i: usize) -> f64;
}

/// The rotation group SO(3).
#[derive(Clone, Copy, Debug, Default)]
pub struct So3;

impl MatrixLieGroup for So3 {
    type Element = GroupElement;
    type Algebra = AlgebraElement;
    type Matrix = Matrix3<f64>;

    const ALGEBRA_DIM: usize = 3;

    fn identity() -> GroupElement {
        GroupElement::identity()
    }

    fn basis_matrix(i: usize) -> Matrix3<f64> {
        basis().xis[i]
    }

    fn exp(v: &AlgebraElement) -> GroupElement {
        exp_algebra(v)
    }

    fn compose(a: &GroupElement, b: &GroupElement) -> GroupElement {
        compose(a, b)
    }

    fn pairing(grad: &Matrix3<f64>, g: &GroupElement, i: usize) -> f64 {
        // Tr(Gᵀ g ξ) = Σ_ab G_ab (g ξ)_ab
        grad.component_mul(&(g.0 * basis_matrix(i))).sum()
    }
}

/// A rotation matrix: `mᵀm = I`, `det m = +1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupElement(Matrix3<f64>);

impl GroupElement {
    pub fn identity() -> Self {
        GroupElement(Matrix3::identity())
    }

    /// Wraps `m` if it is a rotation to within `tol`.
    pub fn try_from_matrix(m: Matrix3<f64>, tol: f64) -> Option<Self> {
        let g = GroupElement(m);
        (g.orthogonality_error() <= tol && (m.determinant() - 1.0).abs() <= tol).then_some(g)
    }

    /// Wraps `m` without checking. Callers are responsible for the invariants.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        GroupElement(m)
    }

    /// Rotation by `angle` about the unit vector `axis`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        exp_matrix(&hat(&(axis.normalize() * angle)))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn inverse(&self) -> Self {
        GroupElement(self.0.transpose())
    }

    pub fn act(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.0 * x
    }

    /// `max_ab |(mᵀm − I)_ab|`
    pub fn orthogonality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).abs().max()
    }

    /// Nearest rotation in Frobenius norm (orthogonal polar factor).
    pub fn renormalized(&self) -> Self {
        let svd = self.0.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            // only reachable for matrices far from SO(3)
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        GroupElement(r)
    }
}

/// Lie algebra element as coordinates in the orthonormal basis `ξ_i`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct AlgebraElement(Vector3<f64>);

impl AlgebraElement {
    pub fn zero() -> Self {
        AlgebraElement(Vector3::zeros())
    }

    pub fn from_coords(coords: Vector3<f64>) -> Self {
        AlgebraElement(coords)
    }

    /// Orthogonal projection of `m` onto so(3), returned in basis coordinates
    /// `Tr(ξ_iᵀ m)`. Exact inverse of [`AlgebraElement::matrix`] on
    /// antisymmetric input.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let b = basis();
        AlgebraElement(Vector3::from_fn(|i, _| {
            b.xis[i].component_mul(m).sum()
        }))
    }

    pub fn coords(&self) -> &Vector3<f64> {
        &self.0
    }

    /// Matrix form `vⁱ ξ_i = hat(v) / √2`.
    pub fn matrix(&self) -> Matrix3<f64> {
        hat(&(self.0 * FRAC_1_SQRT_2))
    }

    pub fn kinetic_energy(&self) -> f64 {
        kinetic_energy(self)
    }
}

impl Neg for AlgebraElement {
    type Output = AlgebraElement;

    fn neg(self) -> AlgebraElement {
        AlgebraElement(-self.0)
    }
}

/// Orthonormal basis of so(3) under the trace inner product.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraBasis {
    pub xis: [Matrix3<f64>; 3],
}

/// `ξ_i = hat(e_i) / √2`, i = 1..3.
pub fn basis() -> AlgebraBasis {
    AlgebraBasis {
        xis: [basis_matrix(0), basis_matrix(1), basis_matrix(2)],
    }
}

fn basis_matrix(i: usize) -> Matrix3<f64> {
    hat(&(Vector3::ith(i, FRAC_1_SQRT_2)))
}

/// The antisymmetric matrix with `hat(a) x = a × x`.
pub fn hat(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -a.z, a.y, //
        a.z, 0.0, -a.x, //
        -a.y, a.x, 0.0,
    )
}

/// Inverse of [`hat`] on antisymmetric matrices; uses the antisymmetric part
/// of anything else.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Matrix exponential of the matrix form of `v`.
pub fn exp_algebra(v: &AlgebraElement) -> GroupElement {
    exp_matrix(&v.matrix())
}

/// Rodrigues' formula for `exp(m)` with `m` antisymmetric.
pub fn exp_matrix(m: &Matrix3<f64>) -> GroupElement {
    let omega = vee(m);
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < 1e-4 {
        (
            1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
            0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
        )
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = hat(&omega);
    GroupElement(Matrix3::identity() + k * a + k * k * b)
}

/// Matrix product, re-orthonormalized once drift exceeds
/// [`ORTHOGONALITY_TOLERANCE`].
pub fn compose(g1: &GroupElement, g2: &GroupElement) -> GroupElement {
    let g = GroupElement(g1.0 * g2.0);
    if g.orthogonality_error() > ORTHOGONALITY_TOLERANCE {
        g.renormalized()
    } else {
        g
    }
}

/// `½ Tr(vᵀv)` of the matrix form, i.e. `½ ‖coords‖²`.
pub fn kinetic_energy(v: &AlgebraElement) -> f64 {
    0.5 * v.0.norm_squared()
}

/// Draws from the normalized Haar measure via a uniform unit quaternion.
pub fn haar_sample<R: Rng + ?Sized>(rng: &mut R) -> GroupElement {
    let q = loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            break q.map(|x| x / n);
        }
    };
    let [w, x, y, z] = q;
    GroupElement(Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn series_exp(m: &Matrix3<f64>, terms: usize) -> Matrix3<f64> {
        let mut sum = Matrix3::identity();
        let mut term = Matrix3::identity();
        for k in 1..terms {
            term = term * m / k as f64;
            sum += term;
        }
        sum
    }

    fn random_coords(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
        Vector3::from_fn(|_, _| rng.random_range(-scale..scale))
    }

    #[test]
    fn basis_is_orthonormal() {
        let b = basis();
        for i in 0..3 {
            for j in 0..3 {
                let ip = (b.xis[i].transpose() * b.xis[j]).trace();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expected).abs() < 1e-14, "<ξ{i}, ξ{j}> = {ip}");
            }
            assert_eq!(b.xis[i].transpose(), -b.xis[i]);
        }
        // linear independence: coordinates of the basis are the identity
        let gram = Matrix3::from_fn(|i, j| AlgebraElement::from_matrix(&b.xis[j]).coords()[i]);
        assert!(gram.determinant() > 0.5);
    }

    #[test]
    fn hat_examples() {
        let x = Vector3::x();
        assert_eq!(hat(&Vector3::z()) * x, Vector3::y());
        assert_eq!(hat(&Vector3::zeros()), Matrix3::zeros());
        let a = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(hat(&a).transpose(), -hat(&a));
        assert_eq!(vee(&hat(&Vector3::x())), Vector3::x());
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(exp_algebra(&AlgebraElement::zero()), GroupElement::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let m = hat(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        let g = exp_algebra(&AlgebraElement::from_matrix(&m));
        // independent evaluation: [[cos, -sin, 0], [sin, cos, 0], [0, 0, 1]] at π/2
        let expected = Matrix3::new(
            FRAC_PI_2.cos(), -FRAC_PI_2.sin(), 0.0,
            FRAC_PI_2.sin(), FRAC_PI_2.cos(), 0.0,
            0.0, 0.0, 1.0,
        );
        assert!((g.matrix() - expected).abs().max() < 1e-12);
        assert!((g.act(&Vector3::x()) - Vector3::y()).norm() < 1e-12);
    }

    #[test]
    fn rodrigues_matches_power_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let mut c = random_coords(&mut rng, 5.0);
            if c.norm() > 5.0 {
                c *= 5.0 / c.norm();
            }
            let v = AlgebraElement::from_coords(c);
            let closed = exp_algebra(&v);
            let series = series_exp(&v.matrix(), 30);
            assert!((closed.matrix() - series).abs().max() < 1e-12);
        }
        // small-angle branch
        let v = AlgebraElement::from_coords(Vector3::new(3e-5, -2e-5, 1e-5));
        let series = series_exp(&v.matrix(), 30);
        assert!((exp_algebra(&v).matrix() - series).abs().max() < 1e-15);
    }

    #[test]
    fn z_rotations_add() {
        let (t1, t2) = (0.7, -2.1);
        let g = compose(
            &GroupElement::from_axis_angle(&Vector3::z(), t1),
            &GroupElement::from_axis_angle(&Vector3::z(), t2),
        );
        let expected = GroupElement::from_axis_angle(&Vector3::z(), t1 + t2);
        assert!((g.matrix() - expected.matrix()).abs().max() < 1e-12);
        let c = (t1 + t2).cos();
        assert!((g.trace() - (1.0 + 2.0 * c)).abs() < 1e-12);
    }

    #[test]
    fn compose_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = haar_sample(&mut rng);
        assert_eq!(compose(&GroupElement::identity(), &g), g);
        let e = compose(&g, &g.inverse());
        assert!((e.matrix() - Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn compose_repairs_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = haar_sample(&mut rng);
        let mut skewed = *g.matrix();
        skewed[(0, 1)] += 1e-7;
        let drifted = GroupElement::from_matrix_unchecked(skewed);
        assert!(drifted.orthogonality_error() > ORTHOGONALITY_TOLERANCE);
        let fixed = compose(&GroupElement::identity(), &drifted);
        assert!(fixed.orthogonality_error() < 1e-14);
        assert!((fixed.matrix().determinant() - 1.0).abs() < 1e-14);
        assert!((fixed.matrix() - skewed).abs().max() < 1e-7);
    }

    #[test]
    fn kinetic_energy_examples() {
        assert_eq!(kinetic_energy(&AlgebraElement::zero()), 0.0);
        assert_eq!(kinetic_energy(&AlgebraElement::from_coords(Vector3::x())), 0.5);
        let m = hat(&Vector3::new(1.0, 1.0, 1.0));
        let direct = 0.5 * (m.transpose() * m).trace();
        assert!((direct - 3.0).abs() < 1e-15);
        let v = AlgebraElement::from_matrix(&m);
        assert!((kinetic_energy(&v) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn haar_samples_are_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let g = haar_sample(&mut rng);
            assert!(GroupElement::try_from_matrix(*g.matrix(), 1e-9).is_some());
        }
    }

    /// Independent Haar sampler: QR of a Gaussian matrix with the sign fix
    /// `R_ii > 0`, then a reflection to land in SO(3).
    fn haar_by_qr(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let a = Matrix3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let qr = a.qr();
        let (mut q, r) = (qr.q(), qr.r());
        for i in 0..3 {
            if r[(i, i)] < 0.0 {
                q.column_mut(i).neg_mut();
            }
        }
        if q.determinant() < 0.0 {
            q.column_mut(0).neg_mut();
        }
        q
    }

    #[test]
    fn haar_trace_has_zero_mean() {
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mean: f64 = (0..n).map(|_| haar_sample(&mut rng).trace()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "quaternion sampler mean Tr = {mean}");
        let mean_qr: f64 = (0..n).map(|_| haar_by_qr(&mut rng).trace()).sum::<f64>() / n as f64;
        assert!(mean_qr.abs() < 0.02, "QR sampler mean Tr = {mean_qr}");
        // second moment under Haar: E[Tr²] = 1 (Tr is the character of the 3-dim irrep)
        let m2: f64 = (0..n).map(|_| haar_sample(&mut rng).trace().powi(2)).sum::<f64>() / n as f64;
        assert!((m2 - 1.0).abs() < 0.03, "E[Tr²] = {m2}");
    }

    #[test]
    fn haar_pushforward_is_uniform_on_sphere() {
        let n = 80_000;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut counts = [0usize; 8];
        for _ in 0..n {
            let x = haar_sample(&mut rng).act(&Vector3::z());
            let idx = (x.x > 0.0) as usize | ((x.y > 0.0) as usize) << 1 | ((x.z > 0.0) as usize) << 2;
            counts[idx] += 1;
        }
        let expected = n as f64 / 8.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // χ²(7) 1% critical value
        assert!(chi2 < 18.475, "χ² = {chi2}, counts {counts:?}");
    }

    #[test]
    fn haar_is_left_invariant() {
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let fixed = GroupElement::from_axis_angle(&Vector3::new(1.0, 2.0, -0.5), 1.1);
        // Under left-invariance, E[Tr(R g)] = Tr(R E[g]) = 0 for all fixed R.
        let mean: f64 = (0..n)
            .map(|_| compose(&fixed, &haar_sample(&mut rng)).matrix()[(0, 0)])
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 0.01, "E[(R g)_11] = {mean}");
    }

    proptest! {
        #[test]
        fn exp_lands_in_so3(x in -10.0..10.0f64, y in -10.0..10.0f64, z in -10.0..10.0f64) {
            let g = exp_algebra(&AlgebraElement::from_coords(Vector3::new(x, y, z)));
            prop_assert!(g.orthogonality_error() < 1e-12);
            prop_assert!((g.matrix().determinant() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn exp_inverse(x in -5.0..5.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64) {
            let v = AlgebraElement::from_coords(Vector3::new(x, y, z));
            let e = exp_algebra(&v).matrix() * exp_algebra(&-v).matrix();
            prop_assert!((e - Matrix3::identity()).abs().max() < 1e-12);
        }

        #[test]
        fn hat_vee_and_trace_pairing(
            a in proptest::array::uniform3(-10.0..10.0f64),
            b in proptest::array::uniform3(-10.0..10.0f64),
        ) {
            let (a, b) = (Vector3::from(a), Vector3::from(b));
            prop_assert_eq!(vee(&hat(&a)), a);
            let ip = (hat(&a).transpose() * hat(&b)).trace();
            prop_assert!((ip - 2.0 * a.dot(&b)).abs() < 1e-13 * (1.0 + a.norm() * b.norm()));
            let v = AlgebraElement::from_coords(a);
            prop_assert!((AlgebraElement::from_matrix(&v.matrix()).coords() - a).norm() < 1e-13 * (1.0 + a.norm()));
            let direct = 0.5 * (v.matrix().transpose() * v.matrix()).trace();
            prop_assert!((direct - kinetic_energy(&v)).abs() < 1e-12 * (1.0 + a.norm_squared()));
        }
    }
}
