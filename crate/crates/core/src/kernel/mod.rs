//! Test functions: Hermite polynomials, Gaussian mollifier derivatives, a
//! catalogue of kernels with closed-form weak derivatives, and their moments.

mod catalogue;
mod hermite;
mod moments;

pub use catalogue::{antiderivative, DecayClass, Kernel, Support, SMOOTH_MAX_ORDER};
pub(crate) use hermite::mollifier_deriv_raw;
pub use hermite::{hermite_eval, mollifier_deriv, std_normal_pdf, HermitePoly, MollifierSpec, MOLLIFIER_CUTOFF};
pub use moments::{compute_moments, integrate_against, DerivNorm, KernelMoments, WeightedNorm, DEFAULT_KAPPAS, ZERO_ENERGY_TOL};

/// `g^(j)(x)`; errors when `j` exceeds the kernel's derivative order.
pub fn kernel_deriv(k: &Kernel, j: usize, x: f64) -> crate::error::Result<f64> {
    k.deriv(j, x)
}
