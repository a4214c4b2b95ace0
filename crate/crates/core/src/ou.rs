//! Exact Ornstein–Uhlenbeck refresh of the algebra momentum at frozen `g`.
//!
//! In coordinates the momentum solves `dv = −(β/2) D v dt + σ dW` with
//! `D = σσᵀ`. Over a time `h` the transition is Gaussian with mean
//! `e^{−(β/2)Dh} v₀` and covariance `Σ_h = (I − e^{−βDh}) / β`, whose
//! `h → ∞` limit `I/β` is the momentum marginal of the Gibbs measure.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::group::AlgebraElement;
use crate::model::{Diffusion, SYMMETRY_TOLERANCE};

/// Relative eigenvalue floor applied to `Σ_h` before taking its square root.
const COVARIANCE_FLOOR: f64 = 1e-14;

/// Integration time `h` of the momentum refresh.
///
/// `Zero` keeps the momentum untouched; `Infinite` draws it fresh from
/// `N(0, I/β)`, which turns the chain into standard HMC.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OuTime {
    Zero,
    Finite(f64),
    Infinite,
}

impl OuTime {
    pub fn new(h: f64) -> Result<Self> {
        if h == 0.0 {
            Ok(OuTime::Zero)
        } else if h == f64::INFINITY {
            Ok(OuTime::Infinite)
        } else if h.is_finite() && h > 0.0 {
            Ok(OuTime::Finite(h))
        } else {
            Err(Error::InvalidConfig(format!("OU time must be >= 0, got {h}")))
        }
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            OuTime::Zero => 0.0,
            OuTime::Finite(h) => h,
            OuTime::Infinite => f64::INFINITY,
        }
    }

    /// Short label used in file and column names: `0.1`, `inf`.
    pub fn label(&self) -> String {
        match *self {
            OuTime::Infinite => "inf".to_string(),
            other => format!("{}", other.as_f64()),
        }
    }
}

impl fmt::Display for OuTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for OuTime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(OuTime::Infinite),
            t => t
                .parse::<f64>()
                .map_err(|e| Error::InvalidConfig(format!("bad OU time {t:?}: {e}")))
                .and_then(OuTime::new),
        }
    }
}

impl Serialize for OuTime {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            OuTime::Infinite => s.serialize_str("inf"),
            other => s.serialize_f64(other.as_f64()),
        }
    }
}

impl<'de> Deserialize<'de> for OuTime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Int(i64),
            Token(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Number(h) => OuTime::new(h),
            Raw::Int(h) => OuTime::new(h as f64),
            Raw::Token(t) => t.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Gaussian transition of the momentum over one refresh.
#[derive(Clone, Debug, PartialEq)]
pub struct OuTransition {
    /// `e^{−(β/2)Dh}`
    pub mean_factor: Matrix3<f64>,
    /// `Σ_h = (I − e^{−βDh}) / β`
    pub covariance: Matrix3<f64>,
    /// Square-root factor with `factor · factorᵀ = Σ_h`.
    pub factor: Matrix3<f64>,
}

impl OuTransition {
    /// `h = 0`: the momentum is returned unchanged.
    pub fn identity() -> Self {
        OuTransition {
            mean_factor: Matrix3::identity(),
            covariance: Matrix3::zeros(),
            factor: Matrix3::zeros(),
        }
    }

    /// `h = ∞`: full refresh from `N(0, I/β)`.
    pub fn full_refresh(beta: f64) -> Self {
        let var = 1.0 / beta;
        OuTransition {
            mean_factor: Matrix3::zeros(),
            covariance: Matrix3::identity() * var,
            factor: Matrix3::identity() * var.sqrt(),
        }
    }

    /// Transition for a diffusion matrix that has already been decomposed.
    ///
    /// Both exponentials share the eigenbasis of `D`, so one decomposition
    /// gives the mean factor and `Σ_h`; the eigenvalues of `Σ_h` are
    /// evaluated with `expm1` to stay accurate for small `βλh`.
    pub fn from_diffusion(d: &Diffusion, beta: f64, h: OuTime) -> Result<Self> {
        check_beta(beta)?;
        let h = match h {
            OuTime::Zero => return Ok(Self::identity()),
            OuTime::Infinite => return Ok(Self::full_refresh(beta)),
            OuTime::Finite(h) => h,
        };
        let q = &d.eigenvectors;
        let lambda = d.eigenvalues.map(|l| l.max(0.0));
        let mean_diag = lambda.map(|l| (-0.5 * beta * l * h).exp());
        let mut cov_diag = lambda.map(|l| -(-beta * l * h).exp_m1() / beta);

        let top = cov_diag.max();
        if !(top.is_finite() && top > 0.0) || cov_diag.iter().any(|c| !c.is_finite()) {
            return Err(Error::CholeskyFailure { min_eigenvalue: cov_diag.min() });
        }
        let floor = COVARIANCE_FLOOR * top;
        cov_diag.apply(|c| *c = c.max(floor));

        Ok(OuTransition {
            mean_factor: q * Matrix3::from_diagonal(&mean_diag) * q.transpose(),
            covariance: q * Matrix3::from_diagonal(&cov_diag) * q.transpose(),
            factor: q * Matrix3::from_diagonal(&cov_diag.map(f64::sqrt)),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, v0: &AlgebraElement, rng: &mut R) -> AlgebraElement {
        sample_ou(v0, self, rng)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("beta must be positive, got {beta}")))
    }
}

/// `exp(A)` for symmetric `A` via `A = QΛQᵀ`.
pub fn sym_expm(a: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let asymmetry = (a - a.transpose()).abs().max();
    if !(asymmetry <= SYMMETRY_TOLERANCE) {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let eig = SymmetricEigen::new((a + a.transpose()) * 0.5);
    let q = eig.eigenvectors;
    Ok(q * Matrix3::from_diagonal(&eig.eigenvalues.map(f64::exp)) * q.transpose())
}

/// Transition over time `h` for the diffusion matrix `d`.
pub fn ou_transition(d: &Matrix3<f64>, beta: f64, h: OuTime) -> Result<OuTransition> {
    match h {
        OuTime::Zero => Ok(OuTransition::identity()),
        OuTime::Infinite => {
            check_beta(beta)?;
            Ok(OuTransition::full_refresh(beta))
        }
        finite => OuTransition::from_diffusion(&Diffusion::from_matrix(d)?, beta, finite),
    }
}

/// One draw of `v* ~ N(mean_factor · v₀, Σ_h)`.
///
/// The identity transition returns `v₀` without touching the RNG.
pub fn sample_ou<R: Rng + ?Sized>(v0: &AlgebraElement, trans: &OuTransition, rng: &mut R) -> AlgebraElement {
    if trans.factor == Matrix3::zeros() && trans.mean_factor == Matrix3::identity() {
        return *v0;
    }
    let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    AlgebraElement::from_coords(trans.mean_factor * v0.coords() + trans.factor * z)
}
