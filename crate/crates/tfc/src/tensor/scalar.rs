use std::fmt::{Debug, Display};

/// Element type tag, used for checkpoint serialization and run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Dtype> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size_of(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Scalar element of a [`crate::tensor::Tensor`].
///
/// Training runs use `f32`, verification (gradient checking, determinism
/// checks) uses `f64`; the precision is picked once per run.
pub trait Scalar:
    num_traits::Float + num_traits::NumAssign + Default + Debug + Display + Send + Sync + 'static
{
    const DTYPE: Dtype;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    fn to_le_bytes_vec(self) -> Vec<u8>;
    fn from_le_slice(bytes: &[u8]) -> Self;

    /// `dst = alpha * lhs @ rhs + beta * dst` where `dst` is row-major
    /// `m x n` and the operands are addressed through explicit row/column
    /// element strides (`lhs` is `m x k`, `rhs` is `k x n`).
    ///
    /// # Safety
    /// All pointers must cover the addressed ranges and `dst` must not alias
    /// the inputs.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_strided(
        m: usize,
        k: usize,
        n: usize,
        dst: *mut Self,
        lhs: *const Self,
        lhs_rs: isize,
        lhs_cs: isize,
        rhs: *const Self,
        rhs_rs: isize,
        rhs_cs: isize,
        beta: Self,
        alpha: Self,
    );

    /// Contiguous row-major `dst = alpha * lhs @ rhs + beta * dst`.
    ///
    /// # Safety
    /// As for [`Scalar::gemm_strided`].
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        dst: *mut Self,
        lhs: *const Self,
        rhs: *const Self,
        beta: Self,
        alpha: Self,
    ) {
        Self::gemm_strided(
            m,
            k,
            n,
            dst,
            lhs,
            k as isize,
            1,
            rhs,
            n as isize,
            1,
            beta,
            alpha,
        );
    }
}

macro_rules! impl_scalar {
    ($ty:ty, $dtype:expr, $bytes:literal) => {
        impl Scalar for $ty {
            const DTYPE: Dtype = $dtype;

            fn from_f64(v: f64) -> Self {
                v as $ty
            }

            fn as_f64(self) -> f64 {
                self as f64
            }

            fn to_le_bytes_vec(self) -> Vec<u8> {
                self.to_le_bytes().to_vec()
            }

            fn from_le_slice(bytes: &[u8]) -> Self {
                <$ty>::from_le_bytes(bytes.try_into().expect(concat!($bytes, "-byte scalar")))
            }

            unsafe fn gemm_strided(
                m: usize,
                k: usize,
                n: usize,
                dst: *mut Self,
                lhs: *const Self,
                lhs_rs: isize,
                lhs_cs: isize,
                rhs: *const Self,
                rhs_rs: isize,
                rhs_cs: isize,
                beta: Self,
                alpha: Self,
            ) {
                // The gemm crate computes dst = alpha_g*dst + beta_g*lhs@rhs
                // (its alpha scales dst, its beta the product).
                gemm::gemm(
                    m,
                    n,
                    k,
                    dst,
                    1,
                    n as isize,
                    beta != 0.0,
                    lhs,
                    lhs_cs,
                    lhs_rs,
                    rhs,
                    rhs_cs,
                    rhs_rs,
                    beta,
                    alpha,
                    false,
                    false,
                    false,
                    gemm::Parallelism::None,
                );
            }
        }
    };
}

impl_scalar!(f32, Dtype::F32, "4");
impl_scalar!(f64, Dtype::F64, "8");
