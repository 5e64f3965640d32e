//! Scalar math routed through `std` or `libm` so the crate builds without
//! either the standard library or an FPU runtime.

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("cdal-core needs the `std` feature or the `libm` feature");

#[cfg(feature = "std")]
#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    x.sqrt()
}

#[cfg(all(not(feature = "std"), feature = "libm"))]
#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    if x < 0.0 {
        -x
    } else {
        x
    }
}
