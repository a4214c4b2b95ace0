//! Target potential and position-dependent noise on SO(3).
//!
//! Both are plain functions of ambient 3×3 matrices. Their derivatives along
//! the left-invariant fields `e_i` come from pairing the matrix gradient with
//! the group element: `e_i(f)(g) = Tr(∇fᵀ g ξ_i)`.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::group::{basis, exp_algebra, AlgebraElement, GroupElement, MatrixLieGroup, So3};

/// `D` is singular when `λ_min(D)/λ_max(D)` falls below this.
pub const SINGULARITY_THRESHOLD: f64 = 1e-10;

/// Largest tolerated `max |A − Aᵀ|` for matrices treated as symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// A potential energy `V: SO(3) → ℝ` defined on ambient matrices.
pub trait Potential {
    fn value(&self, g: &GroupElement) -> f64;

    /// Matrix of partials `∂V/∂x_ab` at `g`.
    fn gradient(&self, g: &GroupElement) -> Matrix3<f64>;

    /// Coefficients `F_i(g) = Tr(∂Vᵀ g ξ_i)` of the group force.
    fn force(&self, g: &GroupElement) -> AlgebraElement {
        let grad = self.gradient(g);
        AlgebraElement::from_coords(Vector3::from_fn(|i, _| So3::pairing(&grad, g, i)))
    }
}

/// `V(g) = exp(α Tr g)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePotential {
    pub alpha: f64,
}

impl TracePotential {
    pub fn new(alpha: f64) -> Self {
        TracePotential { alpha }
    }

    /// `min_{g ∈ SO(3)} V(g)`; the trace ranges over `[-1, 3]`.
    pub fn minimum(&self) -> f64 {
        (-self.alpha).exp().min((3.0 * self.alpha).exp())
    }
}

impl Potential for TracePotential {
    fn value(&self, g: &GroupElement) -> f64 {
        (self.alpha * g.trace()).exp()
    }

    fn gradient(&self, g: &GroupElement) -> Matrix3<f64> {
        Matrix3::identity() * (self.alpha * self.value(g))
    }

    fn force(&self, g: &GroupElement) -> AlgebraElement {
        // ∂V = αV·I, so F_i = αV·Tr(g ξ_i); only the antisymmetric part of g contributes
        let scale = self.alpha * self.value(g);
        let b = basis();
        AlgebraElement::from_coords(Vector3::from_fn(|i, _| {
            scale * (g.matrix() * b.xis[i]).trace()
        }))
    }
}

/// Position-only noise Hamiltonians `U_1..U_m` with `m = 3`.
pub trait NoiseModel {
    /// Matrix gradient `∇U_i` at `g`.
    fn noise_gradient(&self, i: usize, g: &GroupElement) -> Matrix3<f64>;

    /// `σ_ji(g) = −Tr(∇U_iᵀ g ξ_j)`: column `i` holds the fibre direction of
    /// the `i`-th noise field.
    fn sigma(&self, g: &GroupElement) -> Matrix3<f64> {
        let mut s = Matrix3::zeros();
        for i in 0..3 {
            let grad = self.noise_gradient(i, g);
            for j in 0..3 {
                s[(j, i)] = -So3::pairing(&grad, g, j);
            }
        }
        s
    }

    fn diffusion_matrix(&self, g: &GroupElement) -> Result<Diffusion> {
        Diffusion::new(&self.sigma(g))
    }
}

/// `U_i(g) = ε Tr(exp(−ξ_i) g)`, the isotropic trace noise.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceNoise {
    pub epsilon: f64,
    rotations: [Matrix3<f64>; 3],
}

impl TraceNoise {
    pub fn new(epsilon: f64) -> Self {
        let b = basis();
        let rotations = b
            .xis
            .map(|xi| *exp_algebra(&-AlgebraElement::from_matrix(&xi)).matrix());
        TraceNoise { epsilon, rotations }
    }

    pub fn value(&self, i: usize, g: &GroupElement) -> f64 {
        self.epsilon * (self.rotations[i] * g.matrix()).trace()
    }
}

impl NoiseModel for TraceNoise {
    fn noise_gradient(&self, i: usize, _g: &GroupElement) -> Matrix3<f64> {
        // ∂/∂x_ab Tr(E x) = E_ba
        self.rotations[i].transpose() * self.epsilon
    }

    fn sigma(&self, g: &GroupElement) -> Matrix3<f64> {
        let b = basis();
        Matrix3::from_fn(|j, i| -self.epsilon * (self.rotations[i] * g.matrix() * b.xis[j]).trace())
    }
}

/// `D = σσᵀ` with its eigendecomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct Diffusion {
    pub matrix: Matrix3<f64>,
    pub eigenvalues: Vector3<f64>,
    pub eigenvectors: Matrix3<f64>,
}

impl Diffusion {
    /// Builds `D = σσᵀ`, symmetrized, and rejects it when the
    /// invertibility condition fails.
    pub fn new(sigma: &Matrix3<f64>) -> Result<Self> {
        let d = sigma * sigma.transpose();
        Self::from_matrix(&((d + d.transpose()) * 0.5))
    }

    /// Builds `D = σσᵀ` without the invertibility check.
    ///
    /// The exact OU transition is well defined for any PSD `D`: null
    /// directions simply keep their momentum. Fails only when `D` vanishes.
    pub fn decompose(sigma: &Matrix3<f64>) -> Result<Self> {
        let d = sigma * sigma.transpose();
        let d = (d + d.transpose()) * 0.5;
        let eig = SymmetricEigen::new(d);
        if !(eig.eigenvalues.max() > 0.0) {
            return Err(Error::SingularDiffusion { ratio: 0.0 });
        }
        Ok(Diffusion {
            matrix: d,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    /// `λ_min / λ_max`
    pub fn condition_ratio(&self) -> f64 {
        self.eigenvalues.min() / self.eigenvalues.max()
    }

    /// Wraps an already-formed diffusion matrix. `d` must be symmetric to
    /// within `1e-10`; it is symmetrized exactly before use.
    pub fn from_matrix(d: &Matrix3<f64>) -> Result<Self> {
        let asymmetry = (d - d.transpose()).abs().max();
        if !(asymmetry <= SYMMETRY_TOLERANCE * d.abs().max().max(1.0)) {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let d = (d + d.transpose()) * 0.5;
        let eig = SymmetricEigen::new(d);
        let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
        let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
        if !(ratio >= SINGULARITY_THRESHOLD) {
            return Err(Error::SingularDiffusion { ratio });
        }
        Ok(Diffusion {
            matrix: d,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }
}

/// Free-function form of [`NoiseModel::diffusion_matrix`].
pub fn diffusion_matrix<N: NoiseModel + ?Sized>(noise: &N, g: &GroupElement) -> Result<Diffusion> {
    noise.diffusion_matrix(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{compose, haar_sample};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const FD_STEP: f64 = 1e-5;

    /// Central difference of `f` along `s ↦ g exp(s ξ_i)`.
    fn directional_fd(f: impl Fn(&GroupElement) -> f64, g: &GroupElement, i: usize) -> f64 {
        let dir = |s: f64| {
            let v = AlgebraElement::from_coords(Vector3::ith(i, s));
            compose(g, &exp_algebra(&v))
        };
        (f(&dir(FD_STEP)) - f(&dir(-FD_STEP))) / (2.0 * FD_STEP)
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn potential_values() {
        let v = TracePotential::new(1.0);
        assert!((v.value(&GroupElement::identity()) - 3f64.exp()).abs() < 1e-12);
        assert!((v.value(&GroupElement::identity()) - 20.085_536_923_187_668).abs() < 1e-12);
        let flip = GroupElement::try_from_matrix(Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0)), 0.0).unwrap();
        assert!((v.value(&flip) - (-1f64).exp()).abs() < 1e-15);
        let mut r = rng();
        let g = haar_sample(&mut r);
        assert_eq!(TracePotential::new(0.0).value(&g), 1.0);
        assert_eq!(TracePotential::new(1.0).minimum(), (-1f64).exp());
        assert_eq!(TracePotential::new(-0.5).minimum(), (-1.5f64).exp());
    }

    #[test]
    fn force_vanishes_at_identity_and_for_flat_potential() {
        let f = TracePotential::new(1.0).force(&GroupElement::identity());
        assert_eq!(*f.coords(), Vector3::zeros());
        let mut r = rng();
        for _ in 0..10 {
            let g = haar_sample(&mut r);
            assert_eq!(*TracePotential::new(0.0).force(&g).coords(), Vector3::zeros());
        }
    }

    #[test]
    fn force_matches_finite_differences() {
        let mut r = rng();
        let pot = TracePotential::new(1.0);
        for _ in 0..100 {
            let g = haar_sample(&mut r);
            let f = pot.force(&g);
            let generic = AlgebraElement::from_coords(Vector3::from_fn(|i, _| {
                So3::pairing(&pot.gradient(&g), &g, i)
            }));
            let scale = f.coords().norm().max(1.0);
            for i in 0..3 {
                let fd = directional_fd(|x| pot.value(x), &g, i);
                assert!((f.coords()[i] - fd).abs() <= 1e-5 * scale, "F_{i} = {} vs fd {fd}", f.coords()[i]);
                assert!((f.coords()[i] - generic.coords()[i]).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn sigma_matches_finite_differences() {
        let mut r = rng();
        let noise = TraceNoise::new(1.0);
        for _ in 0..100 {
            let g = haar_sample(&mut r);
            let s = noise.sigma(&g);
            let generic = NoiseModel::sigma(&GenericOnly(&noise), &g);
            for i in 0..3 {
                for j in 0..3 {
                    let fd = -directional_fd(|x| noise.value(i, x), &g, j);
                    assert!((s[(j, i)] - fd).abs() <= 1e-5 * s.norm(), "σ_{j}{i}");
                    assert!((s[(j, i)] - generic[(j, i)]).abs() < 1e-14);
                }
            }
        }
    }

    /// Forces the trait's default `sigma` path.
    struct GenericOnly<'a>(&'a TraceNoise);

    impl NoiseModel for GenericOnly<'_> {
        fn noise_gradient(&self, i: usize, g: &GroupElement) -> Matrix3<f64> {
            self.0.noise_gradient(i, g)
        }
    }

    #[test]
    fn sigma_at_identity_matches_series() {
        let noise = TraceNoise::new(1.0);
        let s = noise.sigma(&GroupElement::identity());
        let b = basis();
        for i in 0..3 {
            // exp(−ξ_i) by a 40-term power series
            let mut e: Matrix3<f64> = Matrix3::identity();
            let mut term: Matrix3<f64> = Matrix3::identity();
            for k in 1..40 {
                term = term * (-b.xis[i]) / k as f64;
                e += term;
            }
            for j in 0..3 {
                let expected = -(e * b.xis[j]).trace();
                assert!((s[(j, i)] - expected).abs() < 1e-14);
            }
        }
        // diagonal value −sin(θ)/θ with θ = 1/√2
        let theta = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s[(0, 0)] + theta.sin() / theta).abs() < 1e-14);
    }

    #[test]
    fn zero_noise_is_singular() {
        let noise = TraceNoise::new(0.0);
        assert_eq!(noise.sigma(&GroupElement::identity()), Matrix3::zeros());
        assert!(matches!(
            noise.diffusion_matrix(&GroupElement::identity()),
            Err(Error::SingularDiffusion { .. })
        ));
    }

    #[test]
    fn diffusion_is_symmetric_and_positive() {
        let mut r = rng();
        let noise = TraceNoise::new(1.0);
        for _ in 0..1000 {
            let g = haar_sample(&mut r);
            let d = noise.diffusion_matrix(&g).unwrap();
            assert!((d.matrix - d.matrix.transpose()).abs().max() < 1e-14);
            assert!(d.eigenvalues.min() > 0.0);
            // before thresholding: PSD up to roundoff
            let s = noise.sigma(&g);
            let raw = SymmetricEigen::new(s * s.transpose());
            assert!(raw.eigenvalues.min() >= -1e-12);
        }
    }

    #[test]
    fn scale_equivariance() {
        let mut r = rng();
        let g = haar_sample(&mut r);
        let s1 = TraceNoise::new(1.0).sigma(&g);
        let s3 = TraceNoise::new(3.0).sigma(&g);
        assert!((s3 - s1 * 3.0).abs().max() < 1e-14);
        let d1 = TraceNoise::new(1.0).diffusion_matrix(&g).unwrap().matrix;
        let d3 = TraceNoise::new(3.0).diffusion_matrix(&g).unwrap().matrix;
        assert!((d3 - d1 * 9.0).abs().max() < 1e-13);
    }

    #[test]
    fn singular_at_noise_rotation_inverse() {
        // At g = exp(ξ_1) the first noise rotation exp(−ξ_1) g is the identity,
        // whose antisymmetric part vanishes.
        let g = exp_algebra(&AlgebraElement::from_coords(Vector3::x()));
        assert!(matches!(
            TraceNoise::new(1.0).diffusion_matrix(&g),
            Err(Error::SingularDiffusion { .. })
        ));
    }
}
