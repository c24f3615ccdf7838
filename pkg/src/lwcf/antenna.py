"""Leaky-wave aperture radiation model.

A traveling-wave slot of length L radiates each frequency into a narrow
angular range set by the waveguide dispersion, so gain is a joint function
of frequency and elevation angle.  The model below exposes the gain law,
the closed-form frequency of maximum radiation for a given angle, and the
received signal strength used for initial access.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299792458.0  # m/s


@dataclass(frozen=True)
class AntennaParams:
    """Physical constants of one leaky-wave aperture."""

    radiation_efficiency: float  # dimensionless, in (0, 1]
    aperture_length: float       # m
    attenuation: float           # leakage attenuation along the slot, rad/m
    cutoff_frequency: float      # waveguide cutoff, Hz

    def __post_init__(self):
        if not 0.0 < self.radiation_efficiency <= 1.0:
            raise ValueError("radiation_efficiency must lie in (0, 1]")
        if self.aperture_length <= 0.0:
            raise ValueError("aperture_length must be positive")
        if self.attenuation < 0.0:
            raise ValueError("attenuation must be nonnegative")
        if self.cutoff_frequency <= 0.0:
            raise ValueError("cutoff_frequency must be positive")


def _complex_sinc(z: np.ndarray) -> np.ndarray:
    """sin(z)/z for complex z, with a series fallback near the origin."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-6
    zs = z[small]
    # two series terms are exact to ~1e-25 for |z| < 1e-6
    out[small] = 1.0 - zs * zs / 6.0
    zb = z[~small]
    out[~small] = np.sin(zb) / zb
    return out


def gain(params: AntennaParams, frequency, angle):
    """Power gain of the aperture toward elevation ``angle`` at ``frequency``.

    ``frequency`` must be above cutoff (the mode is evanescent otherwise) and
    ``angle`` within (0, pi/2].  Both arguments broadcast together.
    """
    f = np.asarray(frequency, dtype=float)
    theta = np.asarray(angle, dtype=float)
    if np.any(f <= params.cutoff_frequency):
        raise ValueError("frequency must exceed the waveguide cutoff")
    if np.any(theta <= 0.0) or np.any(theta > np.pi / 2.0):
        raise ValueError("angle must lie in (0, pi/2]")

    k0 = 2.0 * np.pi * f / SPEED_OF_LIGHT
    beta = k0 * np.sqrt(1.0 - (params.cutoff_frequency / f) ** 2)
    arg = (-1j * params.attenuation - k0 * np.cos(theta) + beta) * (
        params.aperture_length / 2.0
    )
    g = params.radiation_efficiency * params.aperture_length * np.abs(
        _complex_sinc(arg)
    )
    if g.ndim == 0:
        return float(g)
    return g


def peak_frequency(cutoff_frequency: float, angle):
    """Frequency where radiation toward ``angle`` peaks: cutoff / sin(angle).

    Equals cutoff at broadside (pi/2) and grows without bound as the angle
    approaches endfire; callers clamp the result into their operating band.
    """
    theta = np.asarray(angle, dtype=float)
    if np.any(theta <= 0.0) or np.any(theta > np.pi / 2.0):
        raise ValueError("angle must lie in (0, pi/2]")
    out = cutoff_frequency / np.sin(theta)
    if out.ndim == 0:
        return float(out)
    return out


def link_rss(tx_psd: float, params: AntennaParams, angle: float,
             channel_power: float, band_upper: float) -> float:
    """Received signal strength of one AP-UE link at its best in-band frequency.

    ``channel_power`` is the squared magnitude of the propagation coefficient
    evaluated at the same (clamped) peak frequency; the caller supplies it so
    this function stays free of any path-loss assumption.
    """
    if tx_psd < 0.0 or channel_power < 0.0:
        raise ValueError("tx_psd and channel_power must be nonnegative")
    f_star = peak_frequency(params.cutoff_frequency, angle)
    # keep strictly above cutoff so the gain stays defined at broadside
    f_eval = min(max(f_star, params.cutoff_frequency * (1.0 + 1e-9)), band_upper)
    return tx_psd * gain(params, f_eval, angle) * channel_power
