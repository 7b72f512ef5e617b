//! Special functions: Bessel/Hankel functions of orders 0 and 1, the 2D
//! outgoing Green function, and a small direct DFT. Everything downstream
//! (scattering coefficients, interaction kernels, layer densities) is built
//! on these.

mod bessel;
mod dd;
mod dft;

pub use bessel::{bessel_j, bessel_y, green2d, hankel1};
pub use dft::{dft, idft};

pub(crate) use bessel::{h0, jy};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A validated positive wavenumber k = 2 pi / wavelength.
///
/// The newtype keeps "this f64 is a wavenumber, already checked positive"
/// explicit in every solver signature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WaveNumber(f64);

impl WaveNumber {
    pub fn new(k: f64) -> Result<Self> {
        if !k.is_finite() || k <= 0.0 {
            return Err(Error::Domain(format!(
                "wavenumber must be finite and positive, got {k}"
            )));
        }
        Ok(WaveNumber(k))
    }

    pub fn from_wavelength(wavelength: f64) -> Result<Self> {
        if !wavelength.is_finite() || wavelength <= 0.0 {
            return Err(Error::Domain(format!(
                "wavelength must be finite and positive, got {wavelength}"
            )));
        }
        Ok(WaveNumber(2.0 * std::f64::consts::PI / wavelength))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn wavelength(self) -> f64 {
        2.0 * std::f64::consts::PI / self.0
    }
}
