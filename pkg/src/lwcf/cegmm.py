"""Adaptive subchannel allocation by cross-entropy search with GMM proposals.

Candidate subchannel center frequencies are drawn from a Gaussian mixture,
each candidate is completed into a feasible plan (coherence-limited
bandwidths, overlap resolution, spectrum cap), and the mixture is refit to
the elite candidates.  The number of mixture components is reselected every
iteration by BIC, which lets the proposal density track multimodal reward
landscapes; pinning the component budget to one recovers the traditional
single-Gaussian cross-entropy method.

Plan constraints, enforced for every emitted plan:
  * total width within the spectrum budget,
  * pairwise disjoint in-band intervals,
  * per-UE received signal PSD above the access threshold at centers and edges,
  * per-UE edge-to-edge PSD gap below the coherence gap (checked on the
    search grid).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .antenna import AntennaParams
from .mimo import SingularChannel, rate_density, received_strength_psd
from .scenario import Scenario

# sub-Hz slack for interval comparisons on ~1e11 Hz magnitudes
FREQ_TOL = 1e-3


class InfeasibleBand(Exception):
    """No sampled center frequency ever met the access threshold in-band."""


@dataclass(frozen=True)
class SubchannelPlan:
    """Ordered disjoint subchannels with their achieved rates."""

    subchannels: tuple[tuple[float, float], ...]   # (center Hz, width Hz)
    achieved_rate: float                           # bit/s
    subchannel_rates: tuple[float, ...] = ()       # bit/s, aligned with subchannels


@dataclass(frozen=True)
class Gmm:
    """One-dimensional Gaussian mixture over center frequencies."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, float)
        if w.size == 0 or np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be a probability vector")
        if np.any(np.asarray(self.variances, float) <= 0.0):
            raise ValueError("variances must be positive")
        if not (w.size == self.means.size == self.variances.size):
            raise ValueError("component arrays must have equal length")

    @property
    def num_components(self) -> int:
        return int(np.asarray(self.weights).size)


@dataclass(frozen=True)
class CeHyperparams:
    num_samples: int = 50        # candidates per iteration
    num_elites: int = 10
    max_iterations: int = 30
    max_components: int = 5      # BIC model search upper bound
    smoothing: float = 0.7       # weight of the freshly fitted parameters
    grid_step: float = 10e6      # Hz, bandwidth search resolution
    num_subchannels: int = 4

    def __post_init__(self):
        if self.num_samples < 1 or self.num_elites < 1:
            raise ValueError("num_samples and num_elites must be >= 1")
        if self.num_elites > self.num_samples:
            raise ValueError("num_elites cannot exceed num_samples")
        if self.max_iterations < 1 or self.max_components < 1:
            raise ValueError("max_iterations and max_components must be >= 1")
        if not 0.0 < self.smoothing <= 1.0:
            raise ValueError("smoothing must lie in (0, 1]")
        if self.grid_step <= 0.0 or self.num_subchannels < 1:
            raise ValueError("grid_step and num_subchannels must be positive")


@dataclass(frozen=True)
class QosConfig:
    min_rx_psd: float               # W/Hz, access threshold on received PSD
    coherence_gap_db: float         # dB, max edge-to-edge PSD gap
    min_cluster_avg_rate: float = 50e6   # bit/s per UE, cluster admission target

    def __post_init__(self):
        if self.min_rx_psd < 0.0 or self.coherence_gap_db <= 0.0:
            raise ValueError("min_rx_psd must be >= 0 and coherence_gap_db > 0")
        if self.min_cluster_avg_rate < 0.0:
            raise ValueError("min_cluster_avg_rate must be nonnegative")


# ---------------------------------------------------------------------------
# mixture fitting
# ---------------------------------------------------------------------------

def _log_norm_pdf(x: np.ndarray, mean, var) -> np.ndarray:
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)


def _component_log_density(gmm: Gmm, values: np.ndarray) -> np.ndarray:
    """Log of weight_l * N(x | mean_l, var_l), shape (n, components)."""
    x = np.asarray(values, float)[:, None]
    with np.errstate(divide="ignore"):
        logw = np.log(np.asarray(gmm.weights, float))[None, :]
    return logw + _log_norm_pdf(x, gmm.means[None, :], gmm.variances[None, :])


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    peak = np.max(a, axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    out = peak.squeeze(axis) + np.log(np.sum(np.exp(a - peak), axis=axis))
    return out


def gmm_log_likelihood(gmm: Gmm, values) -> float:
    """Total log likelihood of the values under the mixture."""
    return float(np.sum(_logsumexp(_component_log_density(gmm, values), axis=1)))


def sample_gmm(gmm: Gmm, n: int, rng: np.random.Generator,
               band: tuple[float, float] | None = None) -> np.ndarray:
    """Draw n values; with ``band`` given, out-of-band draws are redrawn.

    Rejection is capped (1000 rounds) and any stragglers are clipped to the
    band, so sampling terminates even for mixtures with negligible in-band
    mass.
    """
    weights = np.asarray(gmm.weights, float)
    weights = weights / weights.sum()
    comp = rng.choice(gmm.num_components, size=n, p=weights)
    x = rng.normal(gmm.means[comp], np.sqrt(gmm.variances[comp]))
    if band is not None:
        lo, hi = band
        for _ in range(1000):
            bad = (x < lo) | (x > hi)
            if not np.any(bad):
                break
            comp = rng.choice(gmm.num_components, size=int(bad.sum()), p=weights)
            x[bad] = rng.normal(gmm.means[comp], np.sqrt(gmm.variances[comp]))
        x = np.clip(x, lo, hi)
    return x


def em_fit(values, num_components: int, init: Gmm, var_floor: float = 0.0,
           tol: float = 1e-6, max_iter: int = 100,
           history: list | None = None) -> Gmm:
    """Fit a mixture to scalar values by EM, starting from ``init``.

    Components whose responsibility mass underflows are dropped and the fit
    continues with fewer components.  Variances are floored at ``var_floor``
    (plus a tiny absolute guard against exact collapse).  When ``history``
    is a list, the log-likelihood evaluated at each iteration is appended
    to it.
    """
    x = np.asarray(values, float)
    n = x.size
    if n == 0:
        raise ValueError("cannot fit a mixture to an empty sample")
    weights = np.asarray(init.weights, float).copy()
    means = np.asarray(init.means, float).copy()
    variances = np.asarray(init.variances, float).copy()
    if weights.size != num_components:
        raise ValueError("init must carry num_components components")
    tiny_var = max(var_floor, 1e-300)

    ll_prev = -np.inf
    for _ in range(max_iter):
        gmm = Gmm(weights, means, variances)
        log_comp = _component_log_density(gmm, x)
        log_mix = _logsumexp(log_comp, axis=1)
        ll = float(np.sum(log_mix))
        if history is not None:
            history.append(ll)
        if np.isfinite(ll_prev) and ll - ll_prev < tol * max(abs(ll_prev), 1e-12):
            break
        ll_prev = ll
        resp = np.exp(log_comp - log_mix[:, None])
        mass = resp.sum(axis=0)
        alive = mass > n * 1e-12
        if not np.all(alive):
            if alive.sum() == 0:
                alive[int(np.argmax(mass))] = True
            resp = resp[:, alive]
            mass = mass[alive]
            means = means[alive]
            variances = variances[alive]
            ll_prev = -np.inf   # likelihood is not comparable across a removal
        means = resp.T @ x / mass
        variances = (resp * (x[:, None] - means[None, :]) ** 2).sum(axis=0) / mass
        variances = np.maximum(variances, tiny_var)
        weights = mass / n
        weights = weights / weights.sum()
    return Gmm(weights, means, variances)


def bic(gmm: Gmm, values) -> float:
    """Bayesian information criterion: 3*components*ln(n) - 2*loglik."""
    n = np.asarray(values, float).size
    return 3.0 * gmm.num_components * np.log(n) - 2.0 * gmm_log_likelihood(gmm, values)


# ---------------------------------------------------------------------------
# plan construction
# ---------------------------------------------------------------------------

def _edges_ok(scenario: Scenario, params: AntennaParams, lo: float, hi: float,
              qos: QosConfig) -> bool:
    """Access threshold and coherence-gap check at the two interval edges."""
    psd_lo = received_strength_psd(scenario, params, lo)
    psd_hi = received_strength_psd(scenario, params, hi)
    if np.any(psd_lo < qos.min_rx_psd) or np.any(psd_hi < qos.min_rx_psd):
        return False
    if np.any(psd_lo <= 0.0) or np.any(psd_hi <= 0.0):
        return False
    gap = np.abs(10.0 * np.log10(psd_lo) - 10.0 * np.log10(psd_hi))
    return bool(np.all(gap < qos.coherence_gap_db))


def _in_band(lo: float, hi: float, band: tuple[float, float],
             cutoff: float) -> bool:
    return (lo >= band[0] - FREQ_TOL and lo > cutoff + FREQ_TOL
            and hi <= band[1] + FREQ_TOL)


def bandwidth_search(center: float, scenario: Scenario, params: AntennaParams,
                     band: tuple[float, float], qos: QosConfig,
                     grid_step: float,
                     max_bandwidth: float | None = None) -> float:
    """Widest symmetric bandwidth around ``center`` that keeps the edges valid.

    Grows in ``grid_step`` increments and stops at the first grid step whose
    edges leave the band, violate the access threshold, or open a PSD gap at
    or beyond the coherence limit.  Returns 0.0 if already the first step
    fails.  The access threshold at the center itself is the caller's
    responsibility.

    Edge PSDs are evaluated in vectorised blocks of grid steps, which is
    equivalent to stepwise growth because the scan still stops at the first
    violating step.
    """
    # steps that keep the interval in-band (and strictly above cutoff)
    room = min(center - band[0],
               band[1] - center,
               center - params.cutoff_frequency - 2.0 * FREQ_TOL)
    limit = 2.0 * room
    if max_bandwidth is not None:
        limit = min(limit, max_bandwidth)
    # absolute fudge well under FREQ_TOL so float noise cannot add a step
    # that would push an edge onto the cutoff itself
    max_steps = int(np.floor((limit + FREQ_TOL / 2.0) / grid_step))
    best = 0.0
    block = 32
    for start in range(1, max_steps + 1, block):
        steps = np.arange(start, min(start + block, max_steps + 1))
        widths = steps * grid_step
        psd_lo = received_strength_psd(scenario, params, center - widths / 2.0)
        psd_hi = received_strength_psd(scenario, params, center + widths / 2.0)
        ok = (np.all(psd_lo >= qos.min_rx_psd, axis=1)
              & np.all(psd_hi >= qos.min_rx_psd, axis=1)
              & np.all(psd_lo > 0.0, axis=1) & np.all(psd_hi > 0.0, axis=1))
        with np.errstate(divide="ignore"):
            gap = np.abs(10.0 * np.log10(psd_lo) - 10.0 * np.log10(psd_hi))
        ok &= np.all(gap < qos.coherence_gap_db, axis=1)
        if np.all(ok):
            best = float(widths[-1])
            continue
        first_bad = int(np.argmax(~ok))
        if first_bad > 0:
            best = float(widths[first_bad - 1])
        return best
    return best


def _center_rss(scenario: Scenario, params: AntennaParams,
                center: float) -> float:
    """Total received signal strength over UEs at a center frequency."""
    return float(np.sum(received_strength_psd(scenario, params, center)))


def _shrink_to_valid(scenario: Scenario, params: AntennaParams, lo: float,
                     hi: float, band: tuple[float, float], qos: QosConfig,
                     grid_step: float) -> tuple[float, float] | None:
    """Symmetrically shrink ``[lo, hi]`` until its edges pass the in-band and
    edge-PSD checks; None if it vanishes first.  Scans shrink amounts in
    vectorised blocks, equivalent to half-grid-step stepwise shrinking."""
    width = hi - lo
    mid = (lo + hi) / 2.0
    max_steps = int(np.ceil(width / grid_step - 1e-9))
    block = 32
    for start in range(0, max_steps + 1, block):
        steps = np.arange(start, min(start + block, max_steps + 1))
        half = np.maximum(width / 2.0 - steps * (grid_step / 2.0), 0.0)
        los = mid - half
        his = mid + half
        ok = ((his - los > FREQ_TOL)
              & (los >= band[0] - FREQ_TOL)
              & (los > params.cutoff_frequency + FREQ_TOL)
              & (his <= band[1] + FREQ_TOL))
        idx = np.nonzero(ok)[0]
        if idx.size:
            psd_lo = received_strength_psd(scenario, params, los[idx])
            psd_hi = received_strength_psd(scenario, params, his[idx])
            edge_ok = (np.all(psd_lo >= qos.min_rx_psd, axis=1)
                       & np.all(psd_hi >= qos.min_rx_psd, axis=1)
                       & np.all(psd_lo > 0.0, axis=1)
                       & np.all(psd_hi > 0.0, axis=1))
            with np.errstate(divide="ignore", invalid="ignore"):
                gap = np.abs(10.0 * np.log10(psd_lo) - 10.0 * np.log10(psd_hi))
            edge_ok &= np.all(gap < qos.coherence_gap_db, axis=1)
            if np.any(edge_ok):
                j = int(idx[np.argmax(edge_ok)])
                return float(los[j]), float(his[j])
    return None


def resolve_overlaps(candidates, scenario: Scenario, params: AntennaParams,
                     band: tuple[float, float], qos: QosConfig,
                     grid_step: float,
                     total_bandwidth: float) -> list[tuple[float, float]]:
    """Make the candidate subchannels disjoint and fit the spectrum budget.

    Contested spectrum goes to the interval with the larger total received
    signal PSD at its center; the loser is truncated at the winner's
    boundary (a fully swallowed loser is dropped).  If the summed width then
    still exceeds the budget, the lowest-RSS intervals are shrunk first
    until it fits.  Any interval whose edges moved is re-validated against
    the edge constraints and shrunk further if needed, so the output plan
    satisfies the same edge checks as freshly searched bandwidths.
    """
    items = [[c - w / 2.0, c + w / 2.0] for c, w in candidates if w > 0.0]
    items.sort(key=lambda iv: iv[0])
    touched: list[bool] = [False] * len(items)

    def rss_of(iv) -> float:
        return _center_rss(scenario, params, (iv[0] + iv[1]) / 2.0)

    # pairwise truncation until disjoint
    while True:
        order = sorted(range(len(items)), key=lambda i: items[i][0])
        items = [items[i] for i in order]
        touched = [touched[i] for i in order]
        clash = None
        for i in range(len(items) - 1):
            if items[i + 1][0] < items[i][1] - FREQ_TOL:
                clash = i
                break
        if clash is None:
            break
        a, b = items[clash], items[clash + 1]
        if rss_of(a) >= rss_of(b):
            winner, loser, loser_idx = a, b, clash + 1
        else:
            winner, loser, loser_idx = b, a, clash
        if loser[0] < winner[0] and loser[1] > winner[1]:
            # loser straddles the winner: keep its wider remaining side
            left = (loser[0], winner[0])
            right = (winner[1], loser[1])
            keep = left if left[1] - left[0] >= right[1] - right[0] else right
            loser[0], loser[1] = keep
        elif loser[0] < winner[0]:
            loser[1] = winner[0]
        else:
            loser[0] = winner[1]
        touched[loser_idx] = True
        alive = [i for i, iv in enumerate(items) if iv[1] - iv[0] > FREQ_TOL]
        items = [items[i] for i in alive]
        touched = [touched[i] for i in alive]

    # spectrum budget: shrink the lowest-RSS intervals first
    widths = [iv[1] - iv[0] for iv in items]
    excess = sum(widths) - total_bandwidth
    if excess > FREQ_TOL:
        by_rss = sorted(range(len(items)), key=lambda i: (rss_of(items[i]), i))
        for i in by_rss:
            if excess <= FREQ_TOL:
                break
            cut = min(widths[i], excess)
            items[i][0] += cut / 2.0
            items[i][1] -= cut / 2.0
            widths[i] -= cut
            excess -= cut
            touched[i] = True
        keep = [i for i, iv in enumerate(items) if iv[1] - iv[0] > FREQ_TOL]
        items = [items[i] for i in keep]
        touched = [touched[i] for i in keep]

    # re-validate edges of every interval that moved
    out = []
    for iv, moved in zip(items, touched):
        lo, hi = iv
        if moved:
            fixed = _shrink_to_valid(scenario, params, lo, hi, band, qos,
                                     grid_step)
            if fixed is None:
                continue
            lo, hi = fixed
        out.append(((lo + hi) / 2.0, hi - lo))
    out.sort(key=lambda cw: cw[0])
    return out


def validate_plan(subchannels, band: tuple[float, float], total_bandwidth: float,
                  cutoff: float) -> None:
    """Raise ValueError unless widths, band membership, disjointness and the
    spectrum budget all hold."""
    total = 0.0
    intervals = []
    for center, width in subchannels:
        if width < 0.0 or center < 0.0:
            raise ValueError("negative subchannel center or width")
        lo, hi = center - width / 2.0, center + width / 2.0
        if not _in_band(lo, hi, band, cutoff):
            raise ValueError(f"subchannel [{lo}, {hi}] leaves the band")
        intervals.append((lo, hi))
        total += width
    if total > total_bandwidth + FREQ_TOL:
        raise ValueError(f"total width {total} exceeds budget {total_bandwidth}")
    intervals.sort()
    for (_, hi), (lo, _) in zip(intervals, intervals[1:]):
        if lo < hi - FREQ_TOL:
            raise ValueError("subchannels overlap")


def check_coherence(subchannels, scenario: Scenario, params: AntennaParams,
                    qos: QosConfig) -> bool:
    """True when every subchannel passes the edge PSD checks."""
    return all(
        _edges_ok(scenario, params, c - w / 2.0, c + w / 2.0, qos)
        for c, w in subchannels if w > 0.0
    )


# ---------------------------------------------------------------------------
# cross-entropy loop
# ---------------------------------------------------------------------------

def initial_proposal(band: tuple[float, float], num_samples: int,
                     max_components: int) -> Gmm:
    """Evenly spread mixture over the band, collapsed to the component budget.

    Conceptually one narrow Gaussian per candidate slot, moment-matched in
    contiguous groups down to min(num_samples, max_components) components.
    """
    lo, hi = band
    width = hi - lo
    n = num_samples
    mu = lo + (np.arange(1, n + 1) - 0.5) * width / n
    var = np.full(n, width ** 2 / (4.0 * n ** 2))
    w = np.full(n, 1.0 / n)
    k = min(n, max_components)
    groups = np.array_split(np.arange(n), k)
    gw = np.empty(k)
    gmu = np.empty(k)
    gvar = np.empty(k)
    for j, idx in enumerate(groups):
        wj = w[idx]
        gw[j] = wj.sum()
        gmu[j] = np.sum(wj * mu[idx]) / gw[j]
        second = np.sum(wj * (var[idx] + mu[idx] ** 2)) / gw[j]
        gvar[j] = second - gmu[j] ** 2
    floor = 1e-6 * width ** 2
    return Gmm(gw / gw.sum(), gmu, np.maximum(gvar, floor))


def _quantile_init(values: np.ndarray, num_components: int,
                   var_floor: float) -> Gmm:
    x = np.asarray(values, float)
    qs = (np.arange(num_components) + 0.5) / num_components
    means = np.quantile(x, qs)
    var = max(float(np.var(x)), var_floor, 1e-300)
    return Gmm(np.full(num_components, 1.0 / num_components), means,
               np.full(num_components, var))


def _smooth(fitted: Gmm, previous: Gmm, alpha: float, var_floor: float) -> Gmm:
    """Blend fitted into previous parameters componentwise (matched by sorted
    mean) when the component counts agree; otherwise adopt the fit as is."""
    if fitted.num_components != previous.num_components:
        return fitted
    f_order = np.argsort(fitted.means)
    p_order = np.argsort(previous.means)
    w = alpha * fitted.weights[f_order] + (1.0 - alpha) * previous.weights[p_order]
    mu = alpha * fitted.means[f_order] + (1.0 - alpha) * previous.means[p_order]
    var = alpha * fitted.variances[f_order] + (1.0 - alpha) * previous.variances[p_order]
    return Gmm(w / w.sum(), mu, np.maximum(var, var_floor))


def refit_proposal(previous: Gmm, elite_values: np.ndarray,
                   hyper: CeHyperparams, var_floor: float) -> Gmm:
    """EM fits for every component count up to the budget, BIC picks, smooth."""
    best_fit = None
    best_score = np.inf
    for k in range(1, hyper.max_components + 1):
        if k > elite_values.size:
            break
        fitted = em_fit(elite_values, k, _quantile_init(elite_values, k, var_floor),
                        var_floor=var_floor)
        score = bic(fitted, elite_values)
        if score < best_score - 1e-12:
            best_score = score
            best_fit = fitted
    return _smooth(best_fit, previous, hyper.smoothing, var_floor)


def evaluate_candidate(centers, scenario: Scenario, params: AntennaParams,
                       band: tuple[float, float], qos: QosConfig,
                       grid_step: float, total_bandwidth: float,
                       ) -> tuple[list[tuple[float, float]], bool]:
    """Complete sampled centers into a disjoint feasible subchannel list.

    Returns the list and a flag telling whether at least one center met the
    access threshold (used for band feasibility accounting).
    """
    provisional = []
    any_accessible = False
    for center in sorted(float(c) for c in centers):
        if not (band[0] <= center <= band[1]
                and center > params.cutoff_frequency + FREQ_TOL):
            continue
        psd = received_strength_psd(scenario, params, center)
        if np.any(psd < qos.min_rx_psd):
            continue
        any_accessible = True
        width = bandwidth_search(center, scenario, params, band, qos,
                                 grid_step, max_bandwidth=total_bandwidth)
        if width > 0.0:
            provisional.append((center, width))
    resolved = resolve_overlaps(provisional, scenario, params, band,
                                qos, grid_step, total_bandwidth)
    return resolved, any_accessible


def _score_subchannels(subchannels, scenario, params, method) -> tuple[float, list]:
    rates = [w * rate_density(scenario, params, c, method) for c, w in subchannels]
    return float(sum(rates)), rates


def allocate(scenario: Scenario, params: AntennaParams,
             band: tuple[float, float], method: str, hyper: CeHyperparams,
             qos: QosConfig, rng: np.random.Generator,
             total_bandwidth: float | None = None) -> SubchannelPlan:
    """Cross-entropy search for the rate-maximising subchannel plan.

    ``total_bandwidth`` is the spectrum budget; it defaults to the full band
    width.  Raises InfeasibleBand when no sampled center ever meets the
    access threshold.
    """
    if total_bandwidth is None:
        total_bandwidth = band[1] - band[0]
    var_floor = 1e-6 * (band[1] - band[0]) ** 2
    proposal = initial_proposal(band, hyper.num_samples, hyper.max_components)

    best_reward = -np.inf
    best_subchannels: list[tuple[float, float]] | None = None
    prev_best_centers: np.ndarray | None = None
    ever_accessible = False

    for _ in range(hyper.max_iterations):
        scored = []
        for _ in range(hyper.num_samples):
            centers = np.sort(sample_gmm(proposal, hyper.num_subchannels, rng,
                                         band=band))
            subchannels, accessible = evaluate_candidate(
                centers, scenario, params, band, qos,
                hyper.grid_step, total_bandwidth)
            try:
                reward, _ = _score_subchannels(subchannels, scenario, params,
                                               method)
            except SingularChannel:
                subchannels, reward = [], -np.inf
            ever_accessible = ever_accessible or accessible
            scored.append((reward, tuple(centers), subchannels))
        scored.sort(key=lambda item: (-item[0], item[1]))
        elites = scored[:hyper.num_elites]
        if elites[0][0] > best_reward:
            best_reward = elites[0][0]
            best_subchannels = elites[0][2]
        pool = [c for _, centers, _ in elites for c in centers]
        if prev_best_centers is not None:
            pool.extend(prev_best_centers)
        prev_best_centers = np.asarray(elites[0][1])
        proposal = refit_proposal(proposal, np.asarray(pool), hyper, var_floor)

    if not ever_accessible or best_subchannels is None:
        raise InfeasibleBand(
            "no sampled center frequency met the access threshold")
    total, rates = _score_subchannels(best_subchannels, scenario, params, method)
    return SubchannelPlan(tuple(best_subchannels), total, tuple(rates))
