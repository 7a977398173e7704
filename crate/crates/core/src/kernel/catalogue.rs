use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::hermite::mollifier_deriv_raw;
use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOptions};

/// Highest derivative order exposed by the smooth catalogue kernels.
pub const SMOOTH_MAX_ORDER: usize = 3;
const ZERO_MAX_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Compact { lo: f64, hi: f64 },
    WholeLine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayClass {
    Gaussian,
    /// `|g(x)| = O(|x|^-p)`.
    Polynomial(f64),
    CompactlySupported,
}

/// A test function `g` together with its weak derivatives.
///
/// Kernels are addressed by name in configs, e.g. `gaussian_deriv(l=1,eps=1)`
/// or `deriv(bump,k=1)`; [`Kernel::name`] produces a string that parses back
/// to the same kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Zero,
    /// Centred Gaussian density with variance `eps`.
    Gaussian {
        eps: f64,
    },
    /// `order`-th derivative of the variance-`eps` Gaussian density.
    GaussianDeriv {
        order: usize,
        eps: f64,
    },
    /// `(x + 1) phi_1(x)`.
    AffineGaussian,
    /// `exp(-1 / (1 - x^2))` on `(-1, 1)`.
    Bump,
    BumpDeriv,
    /// `1 / (pi (1 + x^2))`.
    Cauchy,
    /// `inner * 1_[lo, hi]`. Only order 0 is available.
    Truncated {
        inner: Box<Kernel>,
        lo: f64,
        hi: f64,
    },
    /// `order`-th derivative of `base`, evaluated through `base` itself.
    Derivative {
        base: Box<Kernel>,
        order: usize,
    },
    /// `F(x) = int_lo^x base`, by quadrature.
    Antiderivative {
        base: Box<Kernel>,
        lo: f64,
    },
}

impl Kernel {
    pub fn gaussian(eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(Kernel::Gaussian { eps })
    }

    pub fn gaussian_deriv(order: usize, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(Kernel::GaussianDeriv { order, eps })
    }

    pub fn truncated(inner: Kernel, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::domain(format!("truncation window must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Kernel::Truncated {
            inner: Box::new(inner),
            lo,
            hi,
        })
    }

    /// `base^(order)` as a kernel of its own.
    pub fn derivative(base: Kernel, order: usize) -> Result<Self> {
        if order > base.max_derivative_order() {
            return Err(Error::Capability {
                kernel: base.name(),
                max: base.max_derivative_order(),
                requested: order,
            });
        }
        if order == 0 {
            return Ok(base);
        }
        Ok(Kernel::Derivative {
            base: Box::new(base),
            order,
        })
    }

    pub fn max_derivative_order(&self) -> usize {
        match self {
            Kernel::Zero => ZERO_MAX_ORDER,
            Kernel::Gaussian { .. } | Kernel::GaussianDeriv { .. } | Kernel::AffineGaussian | Kernel::Bump => SMOOTH_MAX_ORDER,
            Kernel::BumpDeriv => SMOOTH_MAX_ORDER - 1,
            Kernel::Cauchy => 3,
            Kernel::Truncated { .. } => 0,
            Kernel::Derivative { base, order } => base.max_derivative_order() - order,
            Kernel::Antiderivative { base, .. } => base.max_derivative_order() + 1,
        }
    }

    pub fn support(&self) -> Support {
        match self {
            Kernel::Zero => Support::Compact { lo: 0.0, hi: 0.0 },
            Kernel::Bump | Kernel::BumpDeriv => Support::Compact { lo: -1.0, hi: 1.0 },
            Kernel::Truncated { lo, hi, .. } => Support::Compact { lo: *lo, hi: *hi },
            Kernel::Derivative { base, .. } | Kernel::Antiderivative { base, .. } => base.support(),
            Kernel::Gaussian { .. } | Kernel::GaussianDeriv { .. } | Kernel::AffineGaussian | Kernel::Cauchy => Support::WholeLine,
        }
    }

    pub fn decay_class(&self) -> DecayClass {
        match self {
            Kernel::Gaussian { .. } | Kernel::GaussianDeriv { .. } | Kernel::AffineGaussian => DecayClass::Gaussian,
            Kernel::Cauchy => DecayClass::Polynomial(2.0),
            Kernel::Derivative { base, order } => match base.decay_class() {
                DecayClass::Polynomial(p) => DecayClass::Polynomial(p + *order as f64),
                other => other,
            },
            Kernel::Antiderivative { base, .. } => base.decay_class(),
            Kernel::Zero | Kernel::Bump | Kernel::BumpDeriv | Kernel::Truncated { .. } => DecayClass::CompactlySupported,
        }
    }

    /// Length scale used to place quadrature cutoffs.
    pub fn scale(&self) -> f64 {
        match self {
            Kernel::Gaussian { eps } | Kernel::GaussianDeriv { eps, .. } => eps.sqrt(),
            Kernel::Derivative { base, .. } | Kernel::Antiderivative { base, .. } | Kernel::Truncated { inner: base, .. } => base.scale(),
            _ => 1.0,
        }
    }

    pub fn name(&self) -> String {
        self.to_string()
    }

    /// `g(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        self.deriv_unchecked(0, x)
    }

    /// `g^(j)(x)`, closed form for every catalogue kernel.
    pub fn deriv(&self, j: usize, x: f64) -> Result<f64> {
        self.check_order(j)?;
        Ok(self.deriv_unchecked(j, x))
    }

    pub fn check_order(&self, j: usize) -> Result<()> {
        if j > self.max_derivative_order() {
            return Err(Error::Capability {
                kernel: self.name(),
                max: self.max_derivative_order(),
                requested: j,
            });
        }
        Ok(())
    }

    /// As [`Kernel::deriv`] without the capability check; callers check once
    /// with [`Kernel::check_order`] before a hot loop.
    pub fn deriv_unchecked(&self, j: usize, x: f64) -> f64 {
        match self {
            Kernel::Zero => 0.0,
            Kernel::Gaussian { eps } => mollifier_deriv_raw(j, *eps, x),
            Kernel::GaussianDeriv { order, eps } => mollifier_deriv_raw(order + j, *eps, x),
            Kernel::AffineGaussian => {
                let lower = if j == 0 {
                    0.0
                } else {
                    j as f64 * mollifier_deriv_raw(j - 1, 1.0, x)
                };
                (x + 1.0) * mollifier_deriv_raw(j, 1.0, x) + lower
            }
            Kernel::Bump => bump_deriv(j, x),
            Kernel::BumpDeriv => bump_deriv(j + 1, x),
            Kernel::Cauchy => cauchy_deriv(j, x),
            Kernel::Truncated { inner, lo, hi } => {
                if x < *lo || x > *hi {
                    0.0
                } else {
                    inner.deriv_unchecked(j, x)
                }
            }
            Kernel::Derivative { base, order } => base.deriv_unchecked(order + j, x),
            Kernel::Antiderivative { base, lo } => {
                if j > 0 {
                    return base.deriv_unchecked(j - 1, x);
                }
                let hi = match base.support() {
                    Support::Compact { hi, .. } => hi,
                    Support::WholeLine => f64::INFINITY,
                };
                if x <= *lo || x >= hi {
                    // zero energy: the total integral vanishes
                    return 0.0;
                }
                let opts = QuadOptions::with_tol(1e-13, 1e-12).initial_intervals(4);
                match integrate(|y| base.deriv_unchecked(0, y), *lo, x, &opts) {
                    Ok(r) => r.value,
                    Err(Error::Accuracy { estimate, .. }) => estimate,
                    Err(_) => f64::NAN,
                }
            }
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("kernel variance must be positive, got {eps}")))
    }
}

/// `F(x) = int_{-inf}^x k` for a compactly supported, zero-energy kernel.
///
/// Closed-form pairings are returned directly (`bump_deriv -> bump`,
/// `deriv(g, k) -> deriv(g, k - 1)`); otherwise the antiderivative is
/// evaluated by quadrature.
pub fn antiderivative(k: &Kernel) -> Result<Kernel> {
    let (lo, hi) = match k.support() {
        Support::Compact { lo, hi } => (lo, hi),
        Support::WholeLine => {
            return Err(Error::Precondition(format!(
                "antiderivative needs a compactly supported kernel, {} lives on the whole line",
                k.name()
            )))
        }
    };
    let mu = if lo < hi {
        integrate(|x| k.eval(x), lo, hi, &QuadOptions::with_tol(1e-12, 1e-12).initial_intervals(8))?.value
    } else {
        0.0
    };
    if mu.abs() > super::moments::ZERO_ENERGY_TOL {
        return Err(Error::Precondition(format!(
            "antiderivative needs a zero-energy kernel, {} integrates to {mu:e}",
            k.name()
        )));
    }
    Ok(match k {
        Kernel::Zero => Kernel::Zero,
        Kernel::BumpDeriv => Kernel::Bump,
        Kernel::Derivative { base, order } => Kernel::derivative((**base).clone(), order - 1)?,
        other => Kernel::Antiderivative {
            base: Box::new(other.clone()),
            lo,
        },
    })
}

/// Numerator polynomials of the bump derivatives: `b^(k) = P_k / D^{2k} * b`
/// with `D = 1 - x^2`, `P_0 = 1` and
/// `P_{k+1} = P_k' D^2 + 4 k x P_k D - 2 x P_k`.
fn bump_polys() -> &'static [Vec<f64>] {
    static POLYS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    POLYS.get_or_init(|| {
        let d = [1.0, 0.0, -1.0];
        let d2 = poly_mul(&d, &d);
        let mut out = vec![vec![1.0]];
        for k in 0..=SMOOTH_MAX_ORDER {
            let p = &out[k];
            let dp: Vec<f64> = p.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect();
            let a = poly_mul(&dp, &d2);
            let b = poly_mul(&poly_mul(&[0.0, 4.0 * k as f64], p), &d);
            let c = poly_mul(&[0.0, -2.0], p);
            out.push(poly_add(&poly_add(&a, &b), &c));
        }
        out
    })
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

fn bump_deriv(k: usize, x: f64) -> f64 {
    if x <= -1.0 || x >= 1.0 {
        return 0.0;
    }
    let d = 1.0 - x * x;
    let b = (-1.0 / d).exp();
    if b == 0.0 {
        return 0.0;
    }
    if k == 0 {
        return b;
    }
    let p = bump_polys()[k].iter().rev().fold(0.0, |acc, c| acc * x + c);
    p / d.powi(2 * k as i32) * b
}

fn cauchy_deriv(j: usize, x: f64) -> f64 {
    let u = 1.0 + x * x;
    let x2 = x * x;
    let v = match j {
        0 => 1.0 / u,
        1 => -2.0 * x / (u * u),
        2 => (6.0 * x2 - 2.0) / (u * u * u),
        3 => 24.0 * x * (1.0 - x2) / (u * u * u * u),
        _ => f64::NAN,
    };
    v / PI
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Zero => write!(f, "zero"),
            Kernel::Gaussian { eps } => write!(f, "gaussian(eps={eps})"),
            Kernel::GaussianDeriv { order, eps } => write!(f, "gaussian_deriv(l={order},eps={eps})"),
            Kernel::AffineGaussian => write!(f, "affine_gaussian"),
            Kernel::Bump => write!(f, "bump"),
            Kernel::BumpDeriv => write!(f, "bump_deriv"),
            Kernel::Cauchy => write!(f, "cauchy"),
            Kernel::Truncated { inner, lo, hi } => write!(f, "truncated({inner},lo={lo},hi={hi})"),
            Kernel::Derivative { base, order } => write!(f, "deriv({base},k={order})"),
            Kernel::Antiderivative { base, .. } => write!(f, "antideriv({base})"),
        }
    }
}

/// One parsed `name(args)` expression.
struct Expr<'a> {
    head: &'a str,
    positional: Vec<&'a str>,
    named: Vec<(&'a str, &'a str)>,
}

fn split_top_level(s: &str) -> Result<Vec<&str>> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
        if depth < 0 {
            return Err(Error::config(format!("unbalanced parentheses in kernel `{s}`")));
        }
    }
    if depth != 0 {
        return Err(Error::config(format!("unbalanced parentheses in kernel `{s}`")));
    }
    let last = s[start..].trim();
    if !last.is_empty() || !parts.is_empty() {
        parts.push(last);
    }
    Ok(parts)
}

fn parse_expr(s: &str) -> Result<Expr<'_>> {
    let s = s.trim();
    let (head, body) = match s.find('(') {
        Some(i) if s.ends_with(')') => (s[..i].trim(), &s[i + 1..s.len() - 1]),
        Some(_) => return Err(Error::config(format!("malformed kernel `{s}`"))),
        None => (s, ""),
    };
    let mut positional = Vec::new();
    let mut named = Vec::new();
    for part in split_top_level(body)? {
        match part.split_once('=') {
            Some((k, v)) if !k.contains('(') => named.push((k.trim(), v.trim())),
            _ => positional.push(part),
        }
    }
    Ok(Expr { head, positional, named })
}

impl Expr<'_> {
    fn get(&self, key: &str) -> Option<&str> {
        self.named.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    fn num(&self, key: &str) -> Result<f64> {
        let v = self
            .get(key)
            .ok_or_else(|| Error::config(format!("kernel `{}` needs parameter `{key}`", self.head)))?;
        v.parse()
            .map_err(|_| Error::config(format!("kernel `{}`: `{key}={v}` is not a number", self.head)))
    }

    fn int(&self, key: &str) -> Result<usize> {
        let v = self
            .get(key)
            .ok_or_else(|| Error::config(format!("kernel `{}` needs parameter `{key}`", self.head)))?;
        v.parse()
            .map_err(|_| Error::config(format!("kernel `{}`: `{key}={v}` is not a nonnegative integer", self.head)))
    }

    fn inner(&self) -> Result<Kernel> {
        match self.positional.as_slice() {
            [one] => one.parse(),
            _ => Err(Error::config(format!("kernel `{}` takes exactly one inner kernel", self.head))),
        }
    }

    fn expect_keys(&self, allowed: &[&str], positional: usize) -> Result<()> {
        if let Some((k, _)) = self.named.iter().find(|(k, _)| !allowed.contains(k)) {
            return Err(Error::config(format!("kernel `{}` has no parameter `{k}`", self.head)));
        }
        if self.positional.len() != positional {
            return Err(Error::config(format!("kernel `{}`: unexpected arguments", self.head)));
        }
        Ok(())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let e = parse_expr(s)?;
        match e.head {
            "zero" => e.expect_keys(&[], 0).map(|_| Kernel::Zero),
            "gaussian" => {
                e.expect_keys(&["eps"], 0)?;
                let eps = if e.get("eps").is_some() { e.num("eps")? } else { 1.0 };
                Kernel::gaussian(eps)
            }
            "gaussian_deriv" => {
                e.expect_keys(&["l", "eps"], 0)?;
                let eps = if e.get("eps").is_some() { e.num("eps")? } else { 1.0 };
                Kernel::gaussian_deriv(e.int("l")?, eps)
            }
            "affine_gaussian" => e.expect_keys(&[], 0).map(|_| Kernel::AffineGaussian),
            "bump" => e.expect_keys(&[], 0).map(|_| Kernel::Bump),
            "bump_deriv" => e.expect_keys(&[], 0).map(|_| Kernel::BumpDeriv),
            "cauchy" => e.expect_keys(&[], 0).map(|_| Kernel::Cauchy),
            "truncated" => {
                e.expect_keys(&["lo", "hi"], 1)?;
                Kernel::truncated(e.inner()?, e.num("lo")?, e.num("hi")?)
            }
            "deriv" => {
                e.expect_keys(&["k"], 1)?;
                let k = if e.get("k").is_some() { e.int("k")? } else { 1 };
                Kernel::derivative(e.inner()?, k)
            }
            "antideriv" => {
                e.expect_keys(&[], 1)?;
                antiderivative(&e.inner()?)
            }
            other => Err(Error::config(format!("unknown kernel `{other}`"))),
        }
    }
}

impl Serialize for Kernel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Kernel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
