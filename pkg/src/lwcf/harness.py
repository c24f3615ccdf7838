"""Experiment driver: seeded sweeps, Monte-Carlo averaging, CSV output.

One experiment sweeps a single scenario dimension (AP count, UE count, or
spectrum budget), runs every trial on its own deterministic substream, and
emits one CSV row per trial plus a mean/standard-error summary per sweep
value.  Reruns of the same configuration byte-match except for the wall
clock column.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .antenna import AntennaParams
from .cegmm import (CeHyperparams, InfeasibleBand, QosConfig, SubchannelPlan,
                    allocate)
from .cluster_alloc import allocate_clustered, greedy_assign
from .clustering import hierarchical_clustering, kmeans_clustering
from .mimo import SingularChannel, rate_density
from .scenario import ScenarioConfig, generate_scenario

SWEEP_VARIABLES = ("num_aps", "num_ues", "total_bandwidth")
ALLOCATORS = ("adaptive_gmm", "fixed_gmm", "equal_bandwidth")
CLUSTERING_MODES = ("none", "kmeans", "hierarchical")

CSV_HEADER = ("sweep_value", "trial", "seed", "allocator", "clustering",
              "precoder", "total_rate_bps", "stderr_bps", "wall_time_ms",
              "status")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one sweep needs: the scenario template, radio model,
    optimiser knobs, and the sweep itself."""

    scenario: ScenarioConfig
    params: AntennaParams
    band: tuple[float, float]
    hyper: CeHyperparams
    qos: QosConfig
    sweep: str
    sweep_values: tuple[float, ...]
    precoder: str = "zf"
    allocator: str = "adaptive_gmm"
    clustering: str = "none"
    num_clusters: int = 2
    trials: int = 1
    base_seed: int = 0
    output: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.sweep not in SWEEP_VARIABLES:
            raise ValueError(f"unknown sweep variable {self.sweep!r}")
        if self.allocator not in ALLOCATORS:
            raise ValueError(f"unknown allocator {self.allocator!r}")
        if self.clustering not in CLUSTERING_MODES:
            raise ValueError(f"unknown clustering mode {self.clustering!r}")
        if not self.sweep_values:
            raise ValueError("sweep_values must be nonempty")
        vals = tuple(float(v) for v in self.sweep_values)
        if any(v <= 0 for v in vals):
            raise ValueError("sweep values must be positive")
        if list(vals) != sorted(vals):
            raise ValueError("sweep values must be sorted ascending")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def equal_bandwidth_baseline(scenario, params: AntennaParams, num_tiles: int,
                             band: tuple[float, float],
                             total_bandwidth: float,
                             method: str) -> SubchannelPlan:
    """Static allocation: the spectrum budget as one centered block of equal
    contiguous tiles, rates evaluated with the configured precoder."""
    if num_tiles < 1:
        raise ValueError("num_tiles must be >= 1")
    span = band[1] - band[0]
    if total_bandwidth > span:
        raise ValueError("spectrum budget exceeds the band")
    guard = (span - total_bandwidth) / 2.0
    tile = total_bandwidth / num_tiles
    subchannels = tuple((band[0] + guard + (i + 0.5) * tile, tile)
                        for i in range(num_tiles))
    rates = [w * rate_density(scenario, params, c, method)
             for c, w in subchannels]
    return SubchannelPlan(subchannels, float(sum(rates)), tuple(rates))


def _trial_rate(config: ExperimentConfig, value: float,
                trial: int) -> tuple[float | None, str]:
    """Run one (sweep value, trial) cell; returns (rate or None, status)."""
    seed = config.base_seed + trial
    overrides = {config.sweep: (int(value) if config.sweep != "total_bandwidth"
                                else float(value)),
                 "seed": seed}
    sc_cfg = replace(config.scenario, **overrides)
    scenario = generate_scenario(sc_cfg)
    rng = np.random.default_rng(np.random.SeedSequence((config.base_seed, trial)))
    hyper = config.hyper
    if config.allocator == "fixed_gmm":
        hyper = replace(hyper, max_components=1)
    budget = sc_cfg.total_bandwidth

    try:
        if config.clustering == "none":
            if config.allocator == "equal_bandwidth":
                plan = equal_bandwidth_baseline(
                    scenario, config.params, hyper.num_subchannels,
                    config.band, budget, config.precoder)
            else:
                plan = allocate(scenario, config.params, config.band,
                                config.precoder, hyper, config.qos, rng,
                                total_bandwidth=budget)
            return plan.achieved_rate, "ok"
        if config.clustering == "kmeans":
            clustering = kmeans_clustering(scenario, config.params,
                                           config.band[1],
                                           config.num_clusters, rng)
        else:
            clustering = hierarchical_clustering(scenario, config.params,
                                                 config.band[1])
        if config.allocator == "equal_bandwidth":
            base = equal_bandwidth_baseline(
                scenario, config.params, hyper.num_subchannels,
                config.band, budget, config.precoder)
            cplan = greedy_assign(base.subchannels, clustering,
                                  config.qos.min_cluster_avg_rate, scenario,
                                  config.params, config.precoder)
        else:
            cplan = allocate_clustered(scenario, config.params, config.band,
                                       config.precoder, hyper, config.qos,
                                       clustering, rng,
                                       total_bandwidth=budget)
        return cplan.total_rate, "ok"
    except InfeasibleBand:
        return None, "infeasible_band"
    except SingularChannel:
        return None, "singular_channel"


def _run_cell(args) -> tuple[int, int, float | None, str, float]:
    config, value_idx, trial = args
    t0 = time.perf_counter()
    rate, status = _trial_rate(config, config.sweep_values[value_idx], trial)
    wall_ms = (time.perf_counter() - t0) * 1e3
    return value_idx, trial, rate, status, wall_ms


def _fmt_sweep_value(value: float) -> str:
    return str(int(value))


def run_experiment(config: ExperimentConfig) -> str:
    """Execute the sweep and return the CSV text (also written to
    ``config.output`` when set).

    Trials are independent jobs; with ``workers > 1`` they run in a process
    pool, and results are merged in (sweep value, trial) order either way so
    the output does not depend on scheduling.  Failed trials keep their row
    with an empty rate and a status flag.  Summary statistics are computed
    from the rounded rates that appear in the file, so the CSV is
    self-consistent.
    """
    jobs = [(config, vi, t)
            for vi in range(len(config.sweep_values))
            for t in range(config.trials)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(job) for job in jobs]
    by_cell = {(vi, t): (rate, status, wall)
               for vi, t, rate, status, wall in results}

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for vi, value in enumerate(config.sweep_values):
        shown_rates = []
        for t in range(config.trials):
            rate, status, wall = by_cell[(vi, t)]
            rate_str = "" if rate is None else format(rate, ".6g")
            if rate is not None:
                shown_rates.append(float(rate_str))
            writer.writerow([_fmt_sweep_value(value), t,
                             config.base_seed + t, config.allocator,
                             config.clustering, config.precoder, rate_str,
                             "", format(wall, ".3f"), status])
        mean_str = stderr_str = ""
        if shown_rates:
            mean_str = format(float(np.mean(shown_rates)), ".6g")
        if len(shown_rates) >= 2:
            stderr = float(np.std(shown_rates, ddof=1) / np.sqrt(len(shown_rates)))
            stderr_str = format(stderr, ".6g")
        writer.writerow([_fmt_sweep_value(value), "summary", "",
                         config.allocator, config.clustering, config.precoder,
                         mean_str, stderr_str, "", ""])
    text = buf.getvalue()
    if config.output:
        with open(config.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def write_plan_csv(plan: SubchannelPlan, fp) -> None:
    """Subchannel dump for a single-trial run."""
    fp.write("subchannel_index,center_hz,width_hz,subchannel_rate_bps\n")
    for i, (center, width) in enumerate(plan.subchannels):
        rate = plan.subchannel_rates[i] if plan.subchannel_rates else float("nan")
        fp.write(f"{i},{round(center)},{round(width)},{rate:.6g}\n")
