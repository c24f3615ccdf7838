"""INI configuration: defaults, file loading, and dotted-key overrides.

One file carries every knob, grouped into sections that mirror the package
modules.  Unknown sections or keys are hard errors so typos cannot silently
fall back to defaults.  Power densities are written in dBm/Hz in the file
and converted to W/Hz here.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

from .antenna import AntennaParams
from .cegmm import CeHyperparams, QosConfig
from .harness import ALLOCATORS, CLUSTERING_MODES, SWEEP_VARIABLES, ExperimentConfig
from .mimo import PRECODER_METHODS
from .scenario import ScenarioConfig

DEFAULTS: dict[str, dict[str, str]] = {
    "scenario": {
        "area_side_m": "200",
        "num_aps": "32",
        "num_ues": "10",
        "elev_diff_min_m": "5",
        "elev_diff_max_m": "10",
        "total_power_w": "2",
        "total_bandwidth_hz": "10e9",
        "noise_psd_dbm_hz": "-168",
        "seed": "0",
    },
    "antenna": {
        "radiation_efficiency": "1.0",
        "aperture_length_m": "0.15",
        "attenuation_per_m": "130",
        "cutoff_frequency_hz": "100e9",
        "band_upper_hz": "200e9",
    },
    "ce": {
        "num_samples": "50",
        "num_elites": "10",
        "max_iterations": "30",
        "max_components": "5",
        "smoothing": "0.7",
        "grid_step_hz": "10e6",
        "num_subchannels": "4",
    },
    "qos": {
        "min_rx_psd_dbm_hz": "-174",
        "coherence_gap_db": "0.5",
        "min_cluster_avg_rate_bps": "50e6",
    },
    "clustering": {
        "mode": "none",
        "num_clusters": "2",
    },
    "experiment": {
        "sweep": "num_aps",
        "sweep_values": "16,32,64",
        "precoder": "zf",
        "allocator": "adaptive_gmm",
        "trials": "20",
        "base_seed": "0",
        "output": "",
        "workers": "1",
    },
}


@dataclass(frozen=True)
class AppConfig:
    """Validated configuration bundle ready for the harness and CLI."""

    scenario: ScenarioConfig
    params: AntennaParams
    band: tuple[float, float]
    hyper: CeHyperparams
    qos: QosConfig
    clustering_mode: str
    num_clusters: int
    sweep: str
    sweep_values: tuple[float, ...]
    precoder: str
    allocator: str
    trials: int
    base_seed: int
    output: str | None
    workers: int

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(
            scenario=self.scenario, params=self.params, band=self.band,
            hyper=self.hyper, qos=self.qos, sweep=self.sweep,
            sweep_values=self.sweep_values, precoder=self.precoder,
            allocator=self.allocator, clustering=self.clustering_mode,
            num_clusters=self.num_clusters, trials=self.trials,
            base_seed=self.base_seed, output=self.output,
            workers=self.workers)


def dbm_per_hz_to_w(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def _reject_unknown(parser: configparser.ConfigParser, origin: str) -> None:
    for section in parser.sections():
        if section not in DEFAULTS:
            raise ValueError(f"{origin}: unknown section [{section}]")
        for key in parser.options(section):
            if key not in DEFAULTS[section]:
                raise ValueError(f"{origin}: unknown key {section}.{key}")


def apply_overrides(parser: configparser.ConfigParser, overrides) -> None:
    """Apply ``section.key=value`` strings on top of the parsed file."""
    for item in overrides:
        head, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"override {item!r} is not section.key=value")
        section, dot, key = head.strip().partition(".")
        if not dot:
            raise ValueError(f"override {item!r} is not section.key=value")
        section, key = section.strip(), key.strip()
        if section not in DEFAULTS or key not in DEFAULTS[section]:
            raise ValueError(f"override targets unknown key {section}.{key}")
        parser.set(section, key, value.strip())


def load_config(path: str | None = None, overrides=()) -> AppConfig:
    """Defaults, then the optional INI file, then overrides; then validate."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_dict(DEFAULTS)
    if path is not None:
        loaded = configparser.ConfigParser(interpolation=None)
        with open(path, encoding="utf-8") as fh:
            loaded.read_file(fh)
        _reject_unknown(loaded, path)
        parser.read_dict({s: dict(loaded.items(s)) for s in loaded.sections()})
    apply_overrides(parser, overrides)

    sc = parser["scenario"]
    scenario = ScenarioConfig(
        area_side=sc.getfloat("area_side_m"),
        num_aps=int(sc.getfloat("num_aps")),
        num_ues=int(sc.getfloat("num_ues")),
        elev_diff_range=(sc.getfloat("elev_diff_min_m"),
                         sc.getfloat("elev_diff_max_m")),
        total_power=sc.getfloat("total_power_w"),
        total_bandwidth=sc.getfloat("total_bandwidth_hz"),
        noise_psd=dbm_per_hz_to_w(sc.getfloat("noise_psd_dbm_hz")),
        seed=int(sc.getfloat("seed")),
    )
    an = parser["antenna"]
    params = AntennaParams(
        radiation_efficiency=an.getfloat("radiation_efficiency"),
        aperture_length=an.getfloat("aperture_length_m"),
        attenuation=an.getfloat("attenuation_per_m"),
        cutoff_frequency=an.getfloat("cutoff_frequency_hz"),
    )
    band = (params.cutoff_frequency, an.getfloat("band_upper_hz"))
    if band[1] <= band[0]:
        raise ValueError("band_upper_hz must exceed cutoff_frequency_hz")
    ce = parser["ce"]
    hyper = CeHyperparams(
        num_samples=int(ce.getfloat("num_samples")),
        num_elites=int(ce.getfloat("num_elites")),
        max_iterations=int(ce.getfloat("max_iterations")),
        max_components=int(ce.getfloat("max_components")),
        smoothing=ce.getfloat("smoothing"),
        grid_step=ce.getfloat("grid_step_hz"),
        num_subchannels=int(ce.getfloat("num_subchannels")),
    )
    qs = parser["qos"]
    qos = QosConfig(
        min_rx_psd=dbm_per_hz_to_w(qs.getfloat("min_rx_psd_dbm_hz")),
        coherence_gap_db=qs.getfloat("coherence_gap_db"),
        min_cluster_avg_rate=qs.getfloat("min_cluster_avg_rate_bps"),
    )
    cl = parser["clustering"]
    ex = parser["experiment"]
    for value, allowed, name in ((cl.get("mode").strip(), CLUSTERING_MODES,
                                  "clustering.mode"),
                                 (ex.get("precoder").strip(), PRECODER_METHODS,
                                  "experiment.precoder"),
                                 (ex.get("allocator").strip(), ALLOCATORS,
                                  "experiment.allocator"),
                                 (ex.get("sweep").strip(), SWEEP_VARIABLES,
                                  "experiment.sweep")):
        if value not in allowed:
            raise ValueError(f"{name} must be one of {', '.join(allowed)}")
    sweep_values = tuple(float(v) for v in
                         ex.get("sweep_values").split(",") if v.strip())
    output = ex.get("output").strip() or None
    return AppConfig(
        scenario=scenario, params=params, band=band, hyper=hyper, qos=qos,
        clustering_mode=cl.get("mode").strip(),
        num_clusters=int(cl.getfloat("num_clusters")),
        sweep=ex.get("sweep").strip(), sweep_values=sweep_values,
        precoder=ex.get("precoder").strip(),
        allocator=ex.get("allocator").strip(),
        trials=int(ex.getfloat("trials")),
        base_seed=int(ex.getfloat("base_seed")),
        output=output, workers=int(ex.getfloat("workers")),
    )
