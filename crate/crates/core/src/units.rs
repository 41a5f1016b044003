//! Unit conventions shared by the dynamics and Landau-Zener code.
//!
//! Energies are frequencies E/h in GHz and the integrator runs in
//! nanoseconds, so the Schrödinger equation reads dψ/dt = -i 2π H ψ.
//! Anneal times are supplied in microseconds.

use crate::scalar::Real;

pub const NS_PER_US: f64 = 1000.0;

/// Angular frequency (rad/ns) of an energy of 1 GHz.
pub fn angular_per_ghz<T: Real>() -> T {
    T::TAU()
}

/// Phase accumulated by 1 GHz over 1 μs, i.e. the factor turning a rate
/// expressed per unit of `s` and GHz into a rate per μs of anneal time.
pub fn phase_per_ghz_us<T: Real>() -> T {
    angular_per_ghz::<T>() * T::lit(NS_PER_US)
}

pub fn us_to_ns<T: Real>(t_us: T) -> T {
    t_us * T::lit(NS_PER_US)
}
