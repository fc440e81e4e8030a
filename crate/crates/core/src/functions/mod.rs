//! Smooth terms with gradient oracles, proximable terms with prox oracles,
//! and the Bregman divergences that make up the duality gap.

mod prox;
mod smooth;

pub use prox::{ProxFn, DOMAIN_TOL};
pub use smooth::{SmoothFn, SmoothKind};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::{LinOp, Vector};
use crate::problem::SaddlePoint;

/// Value of an extended-real-valued convex function. `Infeasible` stands for
/// `+∞` (the argument lies outside the domain); there is no signed infinity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Extended {
    Finite(f64),
    Infeasible,
}

impl Extended {
    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infeasible => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn map(self, f: impl FnOnce(f64) -> f64) -> Extended {
        match self {
            Extended::Finite(v) => Extended::Finite(f(v)),
            Extended::Infeasible => Extended::Infeasible,
        }
    }
}

impl std::ops::Add for Extended {
    type Output = Extended;

    fn add(self, rhs: Extended) -> Extended {
        match (self, rhs) {
            (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a + b),
            _ => Extended::Infeasible,
        }
    }
}

/// The three divergences whose sum is the duality gap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BregmanTriple {
    pub d_f: f64,
    pub d_r: f64,
    pub d_hstar: f64,
    /// `(r*, h*)` used for the nonsmooth divergences.
    pub subgradients_used: (Vector, Vector),
}

impl BregmanTriple {
    pub fn sum(&self) -> f64 {
        self.d_f + self.d_r + self.d_hstar
    }
}

fn finite(v: Extended, what: &str) -> Result<f64> {
    v.finite().ok_or_else(|| Error::Undefined(format!("{what} is outside its domain")))
}

/// `D_F(x, x*)`, `D_R(x, x*)` and `D_{H*}(y, y*)` at the saddle point `star`.
pub fn bregman_gap(
    f: &SmoothFn,
    r: &ProxFn,
    h: &ProxFn,
    l: &LinOp,
    x: &Vector,
    y: &Vector,
    star: &SaddlePoint,
) -> Result<BregmanTriple> {
    let (res_x, res_y) = star.residuals(f, l)?;
    if res_x.max(res_y) > 1e-6 {
        return Err(Error::NotASaddlePoint(res_x.max(res_y)));
    }
    let d_f = f.bregman(x, &star.x)?;
    let d_r = finite(r.value(x)?, "R(x)")? - finite(r.value(&star.x)?, "R(x*)")?
        - star.r.dot(&(x - &star.x));
    let d_hstar = finite(h.conj_value(y)?, "H*(y)")? - finite(h.conj_value(&star.y)?, "H*(y*)")?
        - star.h.dot(&(y - &star.y));
    Ok(BregmanTriple { d_f, d_r, d_hstar, subgradients_used: (star.r.clone(), star.h.clone()) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn quadratic_bregman_is_half_squared_distance() {
        let f = SmoothFn::quadratic(DMatrix::identity(3, 3), Vector::zeros(3)).unwrap();
        let l = LinOp::Zero { in_dim: 3, out_dim: 1 };
        let star = SaddlePoint {
            x: Vector::zeros(3),
            y: Vector::zeros(1),
            r: Vector::zeros(3),
            h: Vector::zeros(1),
        };
        let x = Vector::from_column_slice(&[1., -2., 0.5]);
        let t = bregman_gap(&f, &ProxFn::Zero, &ProxFn::Zero, &l, &x, &Vector::zeros(1), &star).unwrap();
        assert!((t.d_f - 0.5 * x.norm_squared()).abs() < 1e-15);
        assert_eq!(t.d_r, 0.0);
        assert_eq!(t.d_hstar, 0.0);
        let at_star = bregman_gap(&f, &ProxFn::Zero, &ProxFn::Zero, &l, &star.x, &star.y, &star).unwrap();
        assert_eq!(at_star.sum(), 0.0);
    }

    #[test]
    fn rejects_non_saddle() {
        let f = SmoothFn::quadratic(DMatrix::identity(2, 2), Vector::zeros(2)).unwrap();
        let l = LinOp::Identity(2);
        let bad = SaddlePoint {
            x: Vector::from_element(2, 1.0),
            y: Vector::zeros(2),
            r: Vector::zeros(2),
            h: Vector::zeros(2),
        };
        let err = bregman_gap(&f, &ProxFn::Zero, &ProxFn::Zero, &l, &bad.x, &bad.y, &bad).unwrap_err();
        assert!(matches!(err, Error::NotASaddlePoint(_)));
    }

    #[test]
    fn extended_addition_absorbs() {
        assert_eq!(Extended::Finite(1.0) + Extended::Finite(2.0), Extended::Finite(3.0));
        assert_eq!(Extended::Finite(1.0) + Extended::Infeasible, Extended::Infeasible);
    }
}
