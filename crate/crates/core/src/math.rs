//! `f64` functions that live in `std`, routed through `libm` so the crate
//! builds without it. With `std` linked the inherent methods take priority.

#[allow(dead_code)]
pub(crate) trait Real: Sized {
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn powf(self, e: Self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn cosh(self) -> Self;
    fn acosh(self) -> Self;
    fn ceil(self) -> Self;
    fn rem_euclid(self, m: Self) -> Self;
}

impl Real for f64 {
    fn sqrt(self) -> f64 {
        libm::sqrt(self)
    }
    fn exp(self) -> f64 {
        libm::exp(self)
    }
    fn ln(self) -> f64 {
        libm::log(self)
    }
    fn powf(self, e: f64) -> f64 {
        libm::pow(self, e)
    }
    fn sin(self) -> f64 {
        libm::sin(self)
    }
    fn cos(self) -> f64 {
        libm::cos(self)
    }
    fn cosh(self) -> f64 {
        libm::cosh(self)
    }
    fn acosh(self) -> f64 {
        libm::acosh(self)
    }
    fn ceil(self) -> f64 {
        libm::ceil(self)
    }
    fn rem_euclid(self, m: f64) -> f64 {
        let r = libm::fmod(self, m);
        if r < 0.0 { r + m.abs() } else { r }
    }
}
