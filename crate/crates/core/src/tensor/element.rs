use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point element type a [`Tensor`](super::Tensor) can hold.
///
/// Training runs use `f32`; gradient checks use `f64`.
pub trait Element:
    Float + FromPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Checkpoint dtype code.
    const DTYPE_CODE: u8;
    const NAME: &'static str;

    fn from_f64_lossy(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn to_le_bytes_vec(self, out: &mut Vec<u8>);
    fn from_le_slice(bytes: &[u8]) -> Self;
    fn byte_width() -> usize;
    /// `exp` used inside softmax and GELU. Vectorizable for `f32`; the
    /// standard library function for `f64`.
    fn fast_exp(self) -> Self;
    /// `tanh` built on [`Element::fast_exp`].
    #[inline]
    fn fast_tanh(self) -> Self {
        let e = (-(self.abs() + self.abs())).fast_exp();
        let t = (Self::one() - e) / (Self::one() + e);
        if self < Self::zero() {
            -t
        } else {
            t
        }
    }
}

impl Element for f32 {
    const DTYPE_CODE: u8 = 0;
    const NAME: &'static str = "f32";

    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn to_le_bytes_vec(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn from_le_slice(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
    fn byte_width() -> usize {
        4
    }
    #[inline]
    fn fast_exp(self) -> Self {
        // Cody-Waite range reduction with a degree-7 polynomial (about 1 ulp).
        let x = self.clamp(-87.3, 88.3);
        let n = (x * std::f32::consts::LOG2_E + 0.5).floor();
        let r = x - n * 0.693_359_4 - n * -2.121_944_4e-4;
        let mut p = 1.987_569_1e-4_f32;
        p = p * r + 1.398_2e-3;
        p = p * r + 8.333_452e-3;
        p = p * r + 4.166_579_6e-2;
        p = p * r + 1.666_666_5e-1;
        p = p * r + 5.000_000_1e-1;
        let e = p * r * r + r + 1.0;
        let scale = f32::from_bits(((n as i32 + 127) as u32) << 23);
        if self.is_nan() {
            self
        } else {
            e * scale
        }
    }
}

impl Element for f64 {
    const DTYPE_CODE: u8 = 1;
    const NAME: &'static str = "f64";

    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    fn to_le_bytes_vec(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn from_le_slice(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
    fn byte_width() -> usize {
        8
    }
    #[inline]
    fn fast_exp(self) -> Self {
        self.exp()
    }
    #[inline]
    fn fast_tanh(self) -> Self {
        self.tanh()
    }
}

#[inline]
pub(crate) fn c<T: Element>(v: f64) -> T {
    T::from_f64_lossy(v)
}
