use super::Real;

/// Asymmetric squared loss `|xi - 1(u < 0)| * u^2`.
#[inline]
pub fn expectile_loss<F: Real>(u: F, xi: F) -> F {
    let w = if u < F::zero() { F::one() - xi } else { xi };
    w * u * u
}

/// Derivative of [`expectile_loss`] with respect to `u`.
#[inline]
pub fn expectile_grad<F: Real>(u: F, xi: F) -> F {
    let w = if u < F::zero() { F::one() - xi } else { xi };
    F::lit(2.0) * w * u
}
