//! Numeric plumbing shared by the tracer, the EM layer and the gradient engine.
//!
//! Everything that participates in a derivative is written against [`Scalar`],
//! which is implemented by plain `f64` (primal evaluation) and by [`Dual`]
//! (forward-mode derivatives, [`LANES`] tangent directions per pass).

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Rem, Sub, SubAssign};

use num_complex::Complex;
use num_traits::{Num, One, Zero};

/// Vacuum speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Vacuum permittivity in F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

/// Number of tangent directions carried by a [`Dual`].
pub const LANES: usize = 4;

/// Real scalar usable in differentiable code paths.
pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + Num
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + 'static
{
    /// Number of tangent lanes (0 for `f64`).
    const LANES: usize;

    fn cst(x: f64) -> Self;
    /// Primal value.
    fn val(self) -> f64;
    /// Tangent component `k` (`k < LANES`).
    fn tangent(self, k: usize) -> f64;
    /// Rebuilds a scalar from its primal value and tangent components.
    fn from_parts(v: f64, tangents: &[f64]) -> Self;

    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn atan2(self, x: Self) -> Self;
    fn acos(self) -> Self;

    fn abs(self) -> Self {
        if self.val() < 0.0 {
            -self
        } else {
            self
        }
    }

    fn min_s(self, other: Self) -> Self {
        if other.val() < self.val() {
            other
        } else {
            self
        }
    }

    fn max_s(self, other: Self) -> Self {
        if other.val() > self.val() {
            other
        } else {
            self
        }
    }

    fn powi(self, n: i32) -> Self {
        let mut acc = Self::one();
        let base = if n < 0 { Self::one() / self } else { self };
        for _ in 0..n.unsigned_abs() {
            acc = acc * base;
        }
        acc
    }
}

impl Scalar for f64 {
    const LANES: usize = 0;

    #[inline]
    fn cst(x: f64) -> Self {
        x
    }
    #[inline]
    fn val(self) -> f64 {
        self
    }
    #[inline]
    fn tangent(self, _k: usize) -> f64 {
        0.0
    }
    #[inline]
    fn from_parts(v: f64, _tangents: &[f64]) -> Self {
        v
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    #[inline]
    fn acos(self) -> Self {
        f64::acos(self)
    }
}

/// Forward-mode dual number with [`LANES`] independent tangents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; LANES],
}

impl Dual {
    pub const fn constant(v: f64) -> Self {
        Self { v, d: [0.0; LANES] }
    }

    /// Independent variable seeded on tangent `lane`.
    pub fn variable(v: f64, lane: usize) -> Self {
        let mut d = [0.0; LANES];
        d[lane] = 1.0;
        Self { v, d }
    }

    #[inline]
    fn chain(self, v: f64, slope: f64) -> Self {
        let mut d = self.d;
        for x in &mut d {
            *x *= slope;
        }
        Self { v, d }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d) {
            *a += b;
        }
        Dual { v: self.v + o.v, d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d) {
            *a -= b;
        }
        Dual { v: self.v - o.v, d }
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        let mut d = [0.0; LANES];
        for k in 0..LANES {
            d[k] = self.d[k] * o.v + self.v * o.d[k];
        }
        Dual { v: self.v * o.v, d }
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.v;
        let v = self.v / o.v;
        let mut d = [0.0; LANES];
        for k in 0..LANES {
            d[k] = (self.d[k] - v * o.d[k]) * inv;
        }
        Dual { v, d }
    }
}

impl Rem for Dual {
    type Output = Dual;
    fn rem(self, o: Dual) -> Dual {
        let q = (self.v / o.v).trunc();
        self - o * q
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        self.chain(-self.v, -1.0)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: f64) -> Dual {
        Dual { v: self.v + o, d: self.d }
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: f64) -> Dual {
        Dual { v: self.v - o, d: self.d }
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: f64) -> Dual {
        self.chain(self.v * o, o)
    }
}

impl Div<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: f64) -> Dual {
        self.chain(self.v / o, 1.0 / o)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Dual) {
        *self = *self + o;
    }
}

impl SubAssign for Dual {
    #[inline]
    fn sub_assign(&mut self, o: Dual) {
        *self = *self - o;
    }
}

impl MulAssign for Dual {
    #[inline]
    fn mul_assign(&mut self, o: Dual) {
        *self = *self * o;
    }
}

impl Zero for Dual {
    fn zero() -> Self {
        Dual::constant(0.0)
    }
    fn is_zero(&self) -> bool {
        self.v == 0.0 && self.d.iter().all(|x| *x == 0.0)
    }
}

impl One for Dual {
    fn one() -> Self {
        Dual::constant(1.0)
    }
}

impl Num for Dual {
    type FromStrRadixErr = num_traits::ParseFloatError;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        f64::from_str_radix(s, radix).map(Dual::constant)
    }
}

impl Scalar for Dual {
    const LANES: usize = LANES;

    #[inline]
    fn cst(x: f64) -> Self {
        Dual::constant(x)
    }
    #[inline]
    fn val(self) -> f64 {
        self.v
    }
    #[inline]
    fn tangent(self, k: usize) -> f64 {
        self.d[k]
    }
    fn from_parts(v: f64, tangents: &[f64]) -> Self {
        let mut d = [0.0; LANES];
        d[..tangents.len()].copy_from_slice(tangents);
        Dual { v, d }
    }
    #[inline]
    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, 0.5 / r)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    #[inline]
    fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v)
    }
    #[inline]
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn atan2(self, x: Self) -> Self {
        let r2 = self.v * self.v + x.v * x.v;
        let v = self.v.atan2(x.v);
        let mut d = [0.0; LANES];
        for k in 0..LANES {
            d[k] = (x.v * self.d[k] - self.v * x.d[k]) / r2;
        }
        Dual { v, d }
    }
    fn acos(self) -> Self {
        let x = self.v.clamp(-1.0, 1.0);
        self.chain(x.acos(), -1.0 / (1.0 - x * x).sqrt())
    }
}

/// Logistic function `1 / (1 + e^{-x})`, evaluated without overflow.
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x.val() >= 0.0 {
        S::one() / ((-x).exp() + 1.0)
    } else {
        let e = x.exp();
        e / (e + 1.0)
    }
}

/// Lifts a real scalar into a complex one.
#[inline]
pub fn cx<S: Scalar>(re: S) -> Complex<S> {
    Complex::new(re, S::zero())
}

/// `e^{i phase}`.
#[inline]
pub fn cis<S: Scalar>(phase: S) -> Complex<S> {
    Complex::new(phase.cos(), phase.sin())
}

/// Principal square root (non-negative real part).
pub fn csqrt<S: Scalar>(z: Complex<S>) -> Complex<S> {
    let (a, b) = (z.re, z.im);
    if a.val() == 0.0 && b.val() == 0.0 {
        return Complex::new(S::zero(), S::zero());
    }
    let r = (a * a + b * b).sqrt();
    if a.val() >= 0.0 {
        let re = ((r + a) * 0.5).sqrt();
        Complex::new(re, b / (re * 2.0))
    } else {
        let mut im = ((r - a) * 0.5).sqrt();
        if b.val() < 0.0 {
            im = -im;
        }
        Complex::new(b / (im * 2.0), im)
    }
}

/// Scales a complex number by a real scalar.
#[inline]
pub fn cscale<S: Scalar>(z: Complex<S>, k: S) -> Complex<S> {
    Complex::new(z.re * k, z.im * k)
}

/// Magnitude of a complex number.
#[inline]
pub fn cabs<S: Scalar>(z: Complex<S>) -> S {
    (z.re * z.re + z.im * z.im).sqrt()
}

/// Primal part of a complex scalar.
#[inline]
pub fn cval<S: Scalar>(z: Complex<S>) -> Complex<f64> {
    Complex::new(z.re.val(), z.im.val())
}

/// Small 3-vector generic over the scalar type.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct V3<S = f64> {
    pub x: S,
    pub y: S,
    pub z: S,
}

pub type Vec3 = V3<f64>;

impl<S: Scalar> V3<S> {
    #[inline]
    pub fn new(x: S, y: S, z: S) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero(), S::zero())
    }

    pub fn from_f64(v: Vec3) -> Self {
        Self::new(S::cst(v.x), S::cst(v.y), S::cst(v.z))
    }

    pub fn val(&self) -> Vec3 {
        V3::new(self.x.val(), self.y.val(), self.z.val())
    }

    #[inline]
    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn dot_f(self, o: Vec3) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn scale(self, k: S) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }

    #[inline]
    pub fn scale_f(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }

    #[inline]
    pub fn norm(self) -> S {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self::new(self.x / n, self.y / n, self.z / n)
    }

    #[inline]
    pub fn add_f(self, o: Vec3) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn get(&self, axis: usize) -> S {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    pub fn set(&mut self, axis: usize, value: S) {
        match axis {
            0 => self.x = value,
            1 => self.y = value,
            _ => self.z = value,
        }
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = V3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn from_array(a: [f64; 3]) -> Self {
        V3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl<S: Scalar> Add for V3<S> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<S: Scalar> Sub for V3<S> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<S: Scalar> Neg for V3<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3x3 rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn apply<S: Scalar>(&self, v: V3<S>) -> V3<S> {
        let m = &self.0;
        V3::new(
            v.x * m[0][0] + v.y * m[0][1] + v.z * m[0][2],
            v.x * m[1][0] + v.y * m[1][1] + v.z * m[1][2],
            v.x * m[2][0] + v.y * m[2][1] + v.z * m[2][2],
        )
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        let mut t = [[0.0; 3]; 3];
        for (i, row) in t.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = m[j][i];
            }
        }
        Mat3(t)
    }

    pub fn mul(&self, o: &Mat3) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(r)
    }

    /// Column `k`, i.e. the image of the k-th basis vector.
    pub fn column(&self, k: usize) -> Vec3 {
        V3::new(self.0[0][k], self.0[1][k], self.0[2][k])
    }

    /// Intrinsic z-y-x (yaw, pitch, roll) rotation, angles in radians.
    pub fn from_ypr(yaw: f64, pitch: f64, roll: f64) -> Mat3 {
        let (sy, cy) = yaw.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let (sr, cr) = roll.sin_cos();
        let rz = Mat3([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]]);
        let ry = Mat3([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]]);
        let rx = Mat3([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]]);
        rz.mul(&ry).mul(&rx)
    }

    /// Recovers (yaw, pitch, roll) from a rotation built by [`Mat3::from_ypr`].
    pub fn to_ypr(&self) -> (f64, f64, f64) {
        let m = &self.0;
        let pitch = (-m[2][0]).clamp(-1.0, 1.0).asin();
        let yaw = m[1][0].atan2(m[0][0]);
        let roll = m[2][1].atan2(m[2][2]);
        (yaw, pitch, roll)
    }
}
