use serde::{Deserialize, Serialize};

use super::Extended;
use crate::error::{check_dim, Error, Result};
use crate::linops::Vector;

/// Relative slack used when testing membership in the domain of an indicator.
pub const DOMAIN_TOL: f64 = 1e-9;

/// Proximable convex term (`R` or `H`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ProxFn {
    Zero,
    /// `λ‖x‖₁`.
    L1 { lambda: f64 },
    /// `(λ/2)‖x‖²`.
    SqL2 { lambda: f64 },
    /// `λ Σ_g ‖x_g‖` over disjoint index groups (zero-based).
    GroupL2 { groups: Vec<Vec<usize>>, lambda: f64 },
    /// `λ Σ_j ‖y_j‖` over consecutive blocks of the given sizes.
    L2NormSum { blocks: Vec<usize>, lambda: f64 },
    /// `ι_b`: zero at `b`, `+∞` elsewhere.
    IndicatorPoint { b: Vector },
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn block_ranges(blocks: &[usize]) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
    blocks.iter().scan(0usize, |start, &len| {
        let r = *start..*start + len;
        *start += len;
        Some(r)
    })
}

impl ProxFn {
    pub fn group_l2(groups: Vec<Vec<usize>>, lambda: f64) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &i in groups.iter().flatten() {
            if !seen.insert(i) {
                return Err(Error::InvalidParameter(format!(
                    "group-ℓ2 prox needs disjoint groups; index {i} repeats"
                )));
            }
        }
        Ok(ProxFn::GroupL2 { groups, lambda })
    }

    fn groups_of(&self, dim: usize) -> Vec<Vec<usize>> {
        match self {
            ProxFn::GroupL2 { groups, .. } => groups.clone(),
            ProxFn::L2NormSum { blocks, .. } => block_ranges(blocks).map(|r| r.collect()).collect(),
            _ => vec![(0..dim).collect()],
        }
    }

    fn check_len(&self, x: &Vector) -> Result<()> {
        match self {
            ProxFn::IndicatorPoint { b } => check_dim(b.len(), x.len()),
            ProxFn::L2NormSum { blocks, .. } => check_dim(blocks.iter().sum(), x.len()),
            ProxFn::GroupL2 { groups, .. } => {
                match groups.iter().flatten().max() {
                    Some(&m) if m >= x.len() => Err(Error::IndexOutOfRange { index: m, len: x.len() }),
                    _ => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    /// Strong convexity modulus of the function.
    pub fn mu(&self) -> f64 {
        match self {
            ProxFn::SqL2 { lambda } => *lambda,
            _ => 0.0,
        }
    }

    /// Strong convexity modulus of the conjugate (`μ_{H*}`), i.e. the inverse
    /// smoothness constant of the function.
    pub fn conj_mu(&self) -> f64 {
        match self {
            ProxFn::SqL2 { lambda } if *lambda > 0.0 => 1.0 / lambda,
            _ => 0.0,
        }
    }

    /// `Some(λ)` when the function is `λ`-smooth.
    pub fn smooth_lambda(&self) -> Option<f64> {
        match self {
            ProxFn::Zero => Some(0.0),
            ProxFn::SqL2 { lambda } => Some(*lambda),
            _ => None,
        }
    }

    pub fn value(&self, x: &Vector) -> Result<Extended> {
        self.check_len(x)?;
        Ok(match self {
            ProxFn::Zero => Extended::Finite(0.0),
            ProxFn::L1 { lambda } => Extended::Finite(lambda * x.lp_norm(1)),
            ProxFn::SqL2 { lambda } => Extended::Finite(0.5 * lambda * x.norm_squared()),
            ProxFn::GroupL2 { lambda, .. } | ProxFn::L2NormSum { lambda, .. } => {
                let total: f64 = self
                    .groups_of(x.len())
                    .iter()
                    .map(|g| g.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt())
                    .sum();
                Extended::Finite(lambda * total)
            }
            ProxFn::IndicatorPoint { b } => {
                if (x - b).amax() <= DOMAIN_TOL * (1.0 + b.amax()) {
                    Extended::Finite(0.0)
                } else {
                    Extended::Infeasible
                }
            }
        })
    }

    /// Fenchel conjugate `G*(y)`.
    pub fn conj_value(&self, y: &Vector) -> Result<Extended> {
        self.check_len(y)?;
        let ball = |radius: f64, norm: f64| {
            if norm <= radius * (1.0 + DOMAIN_TOL) + DOMAIN_TOL {
                Extended::Finite(0.0)
            } else {
                Extended::Infeasible
            }
        };
        Ok(match self {
            ProxFn::Zero => ball(0.0, y.amax()),
            ProxFn::L1 { lambda } => ball(*lambda, y.amax()),
            ProxFn::SqL2 { lambda } => {
                if *lambda > 0.0 {
                    Extended::Finite(0.5 * y.norm_squared() / lambda)
                } else {
                    ball(0.0, y.amax())
                }
            }
            ProxFn::GroupL2 { lambda, .. } | ProxFn::L2NormSum { lambda, .. } => {
                let groups = self.groups_of(y.len());
                let mut covered = vec![false; y.len()];
                let mut worst = 0.0f64;
                for g in &groups {
                    let n = g.iter().map(|&i| y[i] * y[i]).sum::<f64>().sqrt();
                    worst = worst.max(n);
                    for &i in g {
                        covered[i] = true;
                    }
                }
                // coordinates outside every group are conjugate to the zero function
                let outside = (0..y.len()).filter(|&i| !covered[i]).map(|i| y[i].abs()).fold(0.0, f64::max);
                match (ball(*lambda, worst), ball(0.0, outside)) {
                    (Extended::Finite(_), Extended::Finite(_)) => Extended::Finite(0.0),
                    _ => Extended::Infeasible,
                }
            }
            ProxFn::IndicatorPoint { b } => Extended::Finite(y.dot(b)),
        })
    }

    /// `prox_{γG}(v) = argmin_x G(x) + ‖x − v‖²/(2γ)`.
    pub fn prox(&self, v: &Vector, gamma: f64) -> Result<Vector> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("prox step must be > 0, got {gamma}")));
        }
        self.check_len(v)?;
        Ok(match self {
            ProxFn::Zero => v.clone(),
            ProxFn::L1 { lambda } => {
                let t = gamma * lambda;
                if t == 0.0 {
                    v.clone()
                } else {
                    v.map(|vi| soft_threshold(vi, t))
                }
            }
            ProxFn::SqL2 { lambda } => v / (1.0 + gamma * lambda),
            ProxFn::GroupL2 { lambda, .. } | ProxFn::L2NormSum { lambda, .. } => {
                let t = gamma * lambda;
                let mut out = v.clone();
                for g in self.groups_of(v.len()) {
                    let n = g.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt();
                    let scale = if n > t { 1.0 - t / n } else { 0.0 };
                    for &i in &g {
                        out[i] = scale * v[i];
                    }
                }
                out
            }
            ProxFn::IndicatorPoint { b } => b.clone(),
        })
    }

    /// `prox_{τG*}(v)`, through the Moreau identity
    /// `prox_{τG*}(v) = v − τ prox_{G/τ}(v/τ)`.
    pub fn prox_conjugate(&self, v: &Vector, tau: f64) -> Result<Vector> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("prox step must be > 0, got {tau}")));
        }
        self.check_len(v)?;
        Ok(match self {
            // closed forms that avoid the division by τ
            ProxFn::Zero => Vector::zeros(v.len()),
            ProxFn::IndicatorPoint { b } => v - b * tau,
            ProxFn::L1 { lambda } => v.map(|vi| vi.clamp(-lambda, *lambda)),
            _ => v - self.prox(&(v / tau), 1.0 / tau)? * tau,
        })
    }
}
