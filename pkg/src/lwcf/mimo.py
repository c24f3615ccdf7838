"""Downlink channel construction, precoding and rate evaluation.

The propagation model is deterministic line-of-sight: free-space amplitude
with the aperture gain folded in as a per-link amplitude factor.  Precoders
follow the row-vector convention of the channel matrix, i.e. the effective
gain from the precoding column w_j to UE k is the plain (unconjugated)
product of channel row k with w_j.  Maximum ratio transmission therefore
conjugates the channel, and zero forcing right-inverts it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .antenna import SPEED_OF_LIGHT, AntennaParams, gain
from .scenario import Scenario

MAX_ZF_CONDITION = 1e12

PRECODER_METHODS = ("mrt", "zf")


class SingularChannel(Exception):
    """Channel Gram matrix too ill conditioned (or K > M) for zero forcing."""


@dataclass(frozen=True)
class ChannelMatrix:
    entries: np.ndarray   # (K, M) complex
    frequency: float      # Hz

    def __post_init__(self):
        self.entries.flags.writeable = False


@dataclass(frozen=True)
class PrecodingMatrix:
    columns: np.ndarray   # (M, K) complex, unit-norm columns
    method: str

    def __post_init__(self):
        self.columns.flags.writeable = False


def freespace_amplitude(frequency, distance):
    """Magnitude of the free-space propagation coefficient c / (4 pi f d)."""
    return SPEED_OF_LIGHT / (4.0 * np.pi * np.asarray(frequency, float)
                             * np.asarray(distance, float))


def build_channel(scenario: Scenario, params: AntennaParams,
                  frequency: float) -> ChannelMatrix:
    """Effective channel at one frequency: aperture gain times free-space LoS."""
    g = gain(params, frequency, scenario.angles)
    amp = freespace_amplitude(frequency, scenario.distances)
    phase = np.exp(-2j * np.pi * frequency * scenario.distances / SPEED_OF_LIGHT)
    return ChannelMatrix(np.sqrt(g) * amp * phase, float(frequency))


def precode(channel: ChannelMatrix, method: str) -> PrecodingMatrix:
    """Unit-norm precoding columns for 'mrt' or 'zf'.

    Zero forcing solves against the Gram matrix rather than forming an
    explicit inverse, and rejects channels with condition number above
    ``MAX_ZF_CONDITION`` or more UEs than APs.
    """
    if method not in PRECODER_METHODS:
        raise ValueError(f"unknown precoding method {method!r}")
    h = channel.entries
    k, m = h.shape
    if method == "mrt":
        f = h.conj().T
    else:
        if k > m:
            raise SingularChannel(f"zero forcing needs K <= M, got K={k} M={m}")
        gram = h @ h.conj().T
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > MAX_ZF_CONDITION:
            raise SingularChannel(f"channel Gram condition {cond:.3e}")
        # F = H^H Gram^{-1}  via  Gram^T F^T = conj(H)
        f = np.linalg.solve(gram.T, h.conj()).T
    norms = np.linalg.norm(f, axis=0)
    if np.any(norms < 1e-300):
        raise SingularChannel("precoding column collapsed to zero")
    return PrecodingMatrix(f / norms, method)


def sinr(channel: ChannelMatrix, precoder: PrecodingMatrix,
         tx_psd: np.ndarray, noise_psd: float) -> np.ndarray:
    """Per-UE SINR for the given channel/precoder pair."""
    cross = channel.entries @ precoder.columns          # (K, K)
    power = np.abs(cross) ** 2
    signal = tx_psd * np.diag(power)
    interference = power @ tx_psd - signal
    return signal / (interference + noise_psd)


def received_strength_psd(scenario: Scenario, params: AntennaParams,
                          frequency) -> np.ndarray:
    """Per-UE received signal strength PSD in W/Hz.

    Incoherent sum of the per-AP contributions q_k * G(f, theta) * |h|^2,
    which equals the precoded received PSD under maximum ratio transmission.
    This is the quantity the access threshold and the coherence-gap
    constraint act on; it is independent of the precoder, so subchannel
    geometry is a property of the radio environment alone.  (The
    zero-forcing precoded PSD fluctuates on a MHz scale through the Gram
    inverse, which would zero out every coherence-limited bandwidth.)

    ``frequency`` may be a scalar (returns shape (K,)) or a 1-D array
    (returns shape (F, K)).
    """
    f = np.asarray(frequency, dtype=float)
    if f.ndim == 0:
        g = gain(params, f, scenario.angles)
        amp2 = freespace_amplitude(f, scenario.distances) ** 2
        return scenario.tx_psd * np.sum(g * amp2, axis=1)
    g = gain(params, f[:, None, None], scenario.angles[None, :, :])
    amp2 = freespace_amplitude(f[:, None, None],
                               scenario.distances[None, :, :]) ** 2
    return scenario.tx_psd[None, :] * np.sum(g * amp2, axis=2)


def rate_density(scenario: Scenario, params: AntennaParams, frequency: float,
                 method: str) -> float:
    """Sum spectral efficiency over UEs at one frequency, bit/s/Hz."""
    channel = build_channel(scenario, params, frequency)
    precoder = precode(channel, method)
    gamma = sinr(channel, precoder, scenario.tx_psd, scenario.noise_psd)
    return float(np.sum(np.log2(1.0 + gamma)))


def plan_rate(subchannels, scenario: Scenario, params: AntennaParams,
              method: str) -> float:
    """Total rate of a list of (center, width) subchannels, bit/s.

    The channel and precoder are rebuilt at every subchannel center; widths
    of zero contribute nothing.
    """
    total = 0.0
    for center, width in subchannels:
        if width > 0.0:
            total += width * rate_density(scenario, params, center, method)
    return total
