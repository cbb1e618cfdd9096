//! Boundary truncation ⊗_j max((1 - (x_j - O_j)²/r_j²)³, 0).

use crate::geometry::Domain;
use crate::scalar::Real;
use crate::tensor::Jet;

/// One-dimensional envelope jet; zero outside (O - r, O + r).
#[inline]
pub fn envelope_1d<T: Real>(x: T, center: T, half: T) -> Jet<T> {
    let w = (x - center) / half;
    let q = T::one() - w * w;
    if q <= T::zero() {
        return Jet::zero();
    }
    let c = |v: f64| T::of(v);
    Jet::new(q * q * q, c(-6.0) * w * q * q / half, q * (c(30.0) * w * w - c(6.0)) / (half * half))
}

/// ∫ of the 1D envelope over its support: (32/35)·r.
pub fn envelope_integral(half: f64) -> f64 {
    32.0 / 35.0 * half
}

/// Tensor envelope E(x) with its gradient and row-major Hessian.
pub fn envelope<T: Real>(domain: &Domain, x: &[T]) -> (T, Vec<T>, Vec<T>) {
    let d = domain.dim();
    let jets: Vec<Jet<T>> =
        (0..d).map(|j| envelope_1d(x[j], T::of(domain.center[j]), T::of(domain.half_widths[j]))).collect();
    let (e, g, h) = crate::tensor::assemble_derivatives(&[T::one()], &jets, d);
    (e, g, h)
}
