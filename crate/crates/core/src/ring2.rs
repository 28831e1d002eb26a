//! Arithmetic in Z/2^N, valuations, integer polynomials and Hensel lifting.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported modulus exponent for [`Residue`].
pub const RESIDUE_MAX_LEVEL: u32 = 63;

/// An element of Z/2^level, stored as its least non-negative representative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Residue {
    level: u32,
    value: u64,
}

#[inline]
pub(crate) fn mask(level: u32) -> u64 {
    if level >= 64 {
        u64::MAX
    } else {
        (1u64 << level) - 1
    }
}

/// Reduces a signed integer into `[0, 2^level)`.
#[inline]
pub fn reduce_i64(x: i64, level: u32) -> u64 {
    (x as u64) & mask(level)
}

impl Residue {
    pub fn new(value: i64, level: u32) -> Result<Self> {
        check_level(level)?;
        Ok(Residue {
            level,
            value: reduce_i64(value, level),
        })
    }

    pub fn from_bigint(value: &BigInt, level: u32) -> Result<Self> {
        check_level(level)?;
        let m = BigInt::one() << level;
        let v = value.mod_floor(&m).to_u64().expect("reduced below 2^63");
        Ok(Residue { level, value: v })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn modulus(&self) -> u64 {
        1u64 << self.level
    }

    /// Image in Z/2^n for `n <= level`.
    pub fn reduce(&self, n: u32) -> Result<Self> {
        if n == 0 || n > self.level {
            return Err(Error::BadLevel(n));
        }
        Ok(Residue {
            level: n,
            value: self.value & mask(n),
        })
    }

    pub fn is_unit(&self) -> bool {
        self.value & 1 == 1
    }

    /// Multiplicative inverse of an odd residue.
    pub fn inv(&self) -> Option<Self> {
        if !self.is_unit() {
            return None;
        }
        Some(Residue {
            level: self.level,
            value: inv_odd(self.value, self.level),
        })
    }

    /// 2-adic valuation of the representative; `None` for zero.
    pub fn val2(&self) -> Option<u32> {
        if self.value == 0 {
            None
        } else {
            Some(self.value.trailing_zeros())
        }
    }

    fn same_level(&self, other: &Self) {
        assert_eq!(
            self.level, other.level,
            "residue arithmetic needs equal levels"
        );
    }
}

fn wrap(v: u64, level: u32) -> u64 {
    v & mask(level)
}

fn check_level(level: u32) -> Result<()> {
    if level == 0 || level > RESIDUE_MAX_LEVEL {
        Err(Error::BadLevel(level))
    } else {
        Ok(())
    }
}

/// Inverse of an odd number modulo 2^level by Newton iteration.
pub(crate) fn inv_odd(x: u64, level: u32) -> u64 {
    debug_assert!(x & 1 == 1);
    let mut y: u64 = 1;
    for _ in 0..6 {
        y = y.wrapping_mul(2u64.wrapping_sub(x.wrapping_mul(y)));
    }
    y & mask(level)
}

impl Add for Residue {
    type Output = Residue;
    fn add(self, rhs: Residue) -> Residue {
        self.same_level(&rhs);
        Residue {
            level: self.level,
            value: wrap(self.value.wrapping_add(rhs.value), self.level),
        }
    }
}

impl Sub for Residue {
    type Output = Residue;
    fn sub(self, rhs: Residue) -> Residue {
        self.same_level(&rhs);
        Residue {
            level: self.level,
            value: wrap(self.value.wrapping_sub(rhs.value), self.level),
        }
    }
}

impl Mul for Residue {
    type Output = Residue;
    fn mul(self, rhs: Residue) -> Residue {
        self.same_level(&rhs);
        Residue {
            level: self.level,
            value: wrap(self.value.wrapping_mul(rhs.value), self.level),
        }
    }
}

impl Neg for Residue {
    type Output = Residue;
    fn neg(self) -> Residue {
        Residue {
            level: self.level,
            value: self.value.wrapping_neg() & mask(self.level),
        }
    }
}

impl fmt::Display for Residue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} mod 2^{}", self.value, self.level)
    }
}

/// Exponent of the largest power of 2 dividing `x`; `None` stands for infinity (x = 0).
pub fn val2(x: &BigInt) -> Option<u64> {
    x.trailing_zeros()
}

/// Exponent of the largest power of `p` dividing `x`; `None` for x = 0.
pub fn val_p(x: &BigInt, p: u64) -> Option<u64> {
    if x.is_zero() {
        return None;
    }
    if p == 2 {
        return val2(x);
    }
    let p = BigInt::from(p);
    let mut v = 0;
    let mut y = x.abs();
    loop {
        let (q, r) = y.div_rem(&p);
        if !r.is_zero() {
            return Some(v);
        }
        y = q;
        v += 1;
    }
}

/// A polynomial with integer coefficients, constant term first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntPoly {
    coeffs: Vec<BigInt>,
}

impl IntPoly {
    pub fn new(coeffs: Vec<BigInt>) -> Self {
        let mut coeffs = coeffs;
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        IntPoly { coeffs }
    }

    pub fn from_i64(coeffs: &[i64]) -> Self {
        Self::new(coeffs.iter().map(|&c| BigInt::from(c)).collect())
    }

    pub fn coeffs(&self) -> &[BigInt] {
        &self.coeffs
    }

    /// Degree, with `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval(&self, x: &BigInt) -> BigInt {
        let mut acc = BigInt::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn derivative(&self) -> IntPoly {
        IntPoly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * BigInt::from(i))
                .collect(),
        )
    }
}

impl fmt::Display for IntPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " {} ", if c.is_negative() { '-' } else { '+' })?;
            } else if c.is_negative() {
                write!(f, "-")?;
            }
            first = false;
            let a = c.abs();
            match i {
                0 => write!(f, "{a}")?,
                1 if a.is_one() => write!(f, "x")?,
                1 => write!(f, "{a}x")?,
                _ if a.is_one() => write!(f, "x^{i}")?,
                _ => write!(f, "{a}x^{i}")?,
            }
        }
        Ok(())
    }
}

/// One step of a lifting chain: from a root modulo p^j to a root modulo p^(j+1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HenselLift {
    pub j: u32,
    pub a: BigInt,
    pub tau: u64,
    pub t: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HenselSolution {
    pub root: BigInt,
    pub prime: u64,
    pub target_level: u32,
    pub start_j: u32,
    pub chain: Vec<HenselLift>,
    /// f(root) reduced modulo p^target_level; always zero on success.
    pub residue: BigInt,
}

/// A JSON number when it fits in an `i64`, a decimal string otherwise.
pub fn bigint_json(x: &BigInt) -> serde_json::Value {
    match x.to_i64() {
        Some(v) => serde_json::Value::from(v),
        None => serde_json::Value::from(x.to_string()),
    }
}

impl HenselSolution {
    pub fn to_json(&self, f: &IntPoly) -> serde_json::Value {
        serde_json::json!({
            "poly": f.to_string(),
            "prime": self.prime,
            "level": self.target_level,
            "root": bigint_json(&self.root),
            "start_j": self.start_j,
            "chain": self.chain.iter().map(|s| serde_json::json!({
                "j": s.j,
                "a": bigint_json(&s.a),
                "tau": s.tau,
                "t": s.t,
            })).collect::<Vec<_>>(),
            "residue": bigint_json(&self.residue),
        })
    }
}

fn pow(p: u64, e: u64) -> BigInt {
    num_traits::pow(BigInt::from(p), e as usize)
}

/// The unique `t` mod p with f(a + t p^(j - tau)) = 0 mod p^(j+1), where tau = v_p(f'(a)).
pub fn hensel_step(f: &IntPoly, a: &BigInt, j: u32, p: u64) -> Result<u64> {
    if p < 2 {
        return Err(Error::PreconditionFailed(format!("{p} is not a prime")));
    }
    let fa = f.eval(a);
    let pj = pow(p, j as u64);
    if !(&fa % &pj).is_zero() {
        return Err(Error::PreconditionFailed(format!(
            "f({a}) = {fa} is not divisible by {p}^{j}"
        )));
    }
    let fpa = f.derivative().eval(a);
    let tau = val_p(&fpa, p)
        .ok_or_else(|| Error::PreconditionFailed(format!("f'({a}) = 0, valuation is infinite")))?;
    if (j as u64) < 2 * tau + 1 {
        return Err(Error::PreconditionFailed(format!(
            "j = {j} < 2*tau + 1 = {}",
            2 * tau + 1
        )));
    }
    let pb = BigInt::from(p);
    let u = (&fpa / pow(p, tau)).mod_floor(&pb);
    let uinv = u.modpow(&(&pb - 2u32), &pb);
    let c = (&fa / &pj).mod_floor(&pb);
    let t = (-(c * uinv)).mod_floor(&pb);
    let lifted = a + &t * pow(p, j as u64 - tau);
    if !(f.eval(&lifted) % pow(p, j as u64 + 1)).is_zero() {
        return Err(Error::PreconditionFailed(format!(
            "lift of {a} at j = {j} failed verification"
        )));
    }
    Ok(t.to_u64().expect("t < p"))
}

/// Iterates [`hensel_step`] from `seed` until the root is exact modulo p^target_level.
///
/// Without `start_j` the chain starts at j = 2 v_p(f'(seed)) + 1, which must already
/// divide f(seed).
pub fn hensel_solve(
    f: &IntPoly,
    seed: &BigInt,
    target_level: u32,
    p: u64,
    start_j: Option<u32>,
) -> Result<HenselSolution> {
    if target_level == 0 {
        return Err(Error::PreconditionFailed(
            "target level must be positive".into(),
        ));
    }
    let fs = f.eval(seed);
    let tau = val_p(&f.derivative().eval(seed), p)
        .ok_or_else(|| Error::NoProgress(format!("f'({seed}) = 0")))?;
    let j0 = match start_j {
        Some(j) => j,
        None => {
            let j = u32::try_from(2 * tau + 1)
                .map_err(|_| Error::NoProgress("derivative valuation too large".into()))?;
            match val_p(&fs, p) {
                Some(v) if v < j as u64 => {
                    return Err(Error::NoProgress(format!(
                        "f({seed}) has valuation {v} < 2*tau + 1 = {j}"
                    )))
                }
                _ => j,
            }
        }
    };
    let mut a = seed.clone();
    let mut chain = Vec::new();
    let mut j = j0;
    if j0 < target_level {
        while j < target_level {
            let t = hensel_step(f, &a, j, p)?;
            chain.push(HenselLift {
                j,
                a: a.clone(),
                tau,
                t,
            });
            a += BigInt::from(t) * pow(p, j as u64 - tau);
            j += 1;
        }
    } else if !(&fs % pow(p, j0 as u64)).is_zero() {
        return Err(Error::PreconditionFailed(format!(
            "f({seed}) is not divisible by {p}^{j0}"
        )));
    }
    let m = pow(p, target_level as u64);
    let root = a.mod_floor(&m);
    let residue = f.eval(&root).mod_floor(&m);
    if !residue.is_zero() {
        return Err(Error::PreconditionFailed(format!(
            "self-check failed: f(root) = {residue} mod {p}^{target_level}"
        )));
    }
    Ok(HenselSolution {
        root,
        prime: p,
        target_level,
        start_j: j0,
        chain,
        residue,
    })
}
