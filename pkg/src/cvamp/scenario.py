"""Scenario pipeline, parameter sweeps, the channel comparison table and output.

A scenario prepares a two-mode squeezed vacuum, sends mode B through a lossy
noisy channel, applies the amplifier on mode B and reports mutual information
and Holevo quantities before and after amplification.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from cvamp import __version__
from cvamp.channels import (
    AmplifierConfig,
    AncillaNoiseModel,
    BranchedState,
    ChannelConfig,
    amplifier,
    amplify_with_ancilla,
    apply_channel,
    attach_ancilla_noise,
    channel_preset,
    photon_add,
    photon_subtract,
)
from cvamp.errors import ConfigError, CvampError, NumericalError, QuadratureError, TruncationError
from cvamp.fock import DensityMatrix, partial_trace
from cvamp.measure import (
    DEFAULT_POINTS,
    grid_for_mode,
    holevo_direct,
    holevo_reverse,
    joint_distribution,
    mutual_information,
)
from cvamp.states import TmsvParams, normalize_kind, tmsv_fock

log = logging.getLogger(__name__)

DEFAULT_CUTOFF = 20
CUTOFF_STEP = 5
MAX_AUTO_CUTOFF = 40
CONVERGENCE_TOL = 1e-3

CSV_COLUMNS = [
    "R", "delta", "delta_prime", "m_add", "n_sub", "eta", "n_t", "kind_a", "kind_b",
    "noise_model", "i0_bits", "i_bits", "d_i_bits", "h_ea0", "h_ea", "h_eb0", "h_eb",
    "success_weight", "purity", "converged",
]
BIT_METRICS = ("i0_bits", "i_bits", "d_i_bits", "h_ea0", "h_ea", "h_eb0", "h_eb")
ALL_METRICS = BIT_METRICS + ("success_weight", "purity")
PROTOCOLS = (("homodyne", "homodyne"), ("heterodyne", "heterodyne"),
             ("homodyne", "heterodyne"), ("heterodyne", "homodyne"))


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that defines one run.

    ``cutoff=None`` starts at 20 per mode and escalates in steps of 5 (up to
    40) whenever a truncation check fails; an explicit cutoff is used as is.
    """

    R: float = 0.3
    channel: ChannelConfig = ChannelConfig(1.0, 0.0, "excess")
    amplifier: AmplifierConfig = AmplifierConfig()
    noise_model: str = "gaussian"
    delta_prime: float | None = None
    kind_a: str = "homodyne"
    kind_b: str = "homodyne"
    cutoff: int | None = None
    hom_points: int = DEFAULT_POINTS["homodyne"]
    het_points: int = DEFAULT_POINTS["heterodyne"]
    reconciliation: str = "both"
    placement: str = "after"
    check_convergence: bool = True

    def __post_init__(self):
        TmsvParams(self.R)
        object.__setattr__(self, "kind_a", normalize_kind(self.kind_a))
        object.__setattr__(self, "kind_b", normalize_kind(self.kind_b))
        if self.noise_model not in ("gaussian", "ancilla"):
            raise ConfigError(f"noise_model must be 'gaussian' or 'ancilla', got {self.noise_model!r}")
        if self.reconciliation not in ("direct", "reverse", "both", "none"):
            raise ConfigError(f"unknown reconciliation {self.reconciliation!r}")
        if self.placement not in ("after", "before"):
            raise ConfigError(f"placement must be 'after' or 'before', got {self.placement!r}")
        if self.noise_model == "ancilla" and self.reconciliation == "none":
            raise ConfigError("the ancilla noise model only applies when Holevo quantities are requested")
        if self.delta_prime is not None and self.delta_prime < 0:
            raise ConfigError("delta_prime must be >= 0")
        if self.cutoff is not None and self.cutoff < 2:
            raise ConfigError("cutoff must be >= 2")
        if self.hom_points < 2 or self.het_points < 2:
            raise ConfigError("grid resolutions must be >= 2")

    @property
    def effective_delta_prime(self) -> float:
        return self.amplifier.delta if self.delta_prime is None else self.delta_prime

    @property
    def label(self) -> str:
        return (f"R={self.R:g} eta={self.channel.eta:g} n_t={self.channel.n_t:g} "
                f"amp={self.amplifier.label} delta={self.amplifier.delta:g} "
                f"{self.kind_a[:3]}-{self.kind_b[:3]} noise={self.noise_model}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ScenarioConfig:
        data = dict(data)
        try:
            ch = data.pop("channel", None)
            if isinstance(ch, str):
                ch = channel_preset(ch, data.pop("n_t_convention", "excess"))
            elif isinstance(ch, dict):
                ch = ChannelConfig(**ch)
            else:
                conv = data.pop("n_t_convention", "excess")
                ch = ChannelConfig(1.0, 0.0, conv) if ch is None else ch
            data.pop("n_t_convention", None)
            amp = data.pop("amplifier", None)
            amp = AmplifierConfig(**amp) if isinstance(amp, dict) else (amp or AmplifierConfig())
            return cls(channel=ch, amplifier=amp, **data)
        except TypeError as exc:
            raise ConfigError(f"bad scenario config: {exc}") from exc


@dataclass
class ScenarioReport:
    config: ScenarioConfig
    i0_bits: float = math.nan
    i_bits: float = math.nan
    d_i_bits: float = math.nan
    h_ea0: float = math.nan
    h_ea: float = math.nan
    h_eb0: float = math.nan
    h_eb: float = math.nan
    success_weight: float = math.nan
    purity: float = math.nan
    converged: str = "unchecked"
    convergence: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    error: str | None = None

    def metrics(self) -> dict:
        return {k: getattr(self, k) for k in ALL_METRICS}

    def row(self) -> dict:
        c = self.config
        return {
            "R": c.R, "delta": c.amplifier.delta,
            "delta_prime": c.effective_delta_prime if c.noise_model == "ancilla" else math.nan,
            "m_add": c.amplifier.m_add, "n_sub": c.amplifier.n_sub,
            "eta": c.channel.eta, "n_t": c.channel.n_t,
            "kind_a": c.kind_a, "kind_b": c.kind_b, "noise_model": c.noise_model,
            **self.metrics(), "converged": self.converged,
        }


@lru_cache(maxsize=64)
def _channel_state(R: float, channel: ChannelConfig, cutoff: int, radial: int, angular: int) -> DensityMatrix:
    rho = tmsv_fock(TmsvParams(R), cutoff)
    return apply_channel(rho, channel, 1, radial, angular)


def _grid(rho, mode, kind, cfg, factor):
    pts = cfg.hom_points if kind == "homodyne" else cfg.het_points
    return grid_for_mode(rho, mode, kind, pts * factor)


def _mi(rho: DensityMatrix, cfg, factor) -> float:
    ga = _grid(rho, 0, cfg.kind_a, cfg, factor)
    gb = _grid(rho, 1, cfg.kind_b, cfg, factor)
    return mutual_information(joint_distribution(rho, ga, gb))


def _holevo(state, reduced: DensityMatrix, cfg, factor, ancilla_mode=None) -> tuple[float, float]:
    h_a = h_b = math.nan
    if cfg.reconciliation in ("direct", "both"):
        h_a = holevo_direct(state, _grid(reduced, 1, cfg.kind_b, cfg, factor), ancilla_mode)
    if cfg.reconciliation in ("reverse", "both"):
        h_b = holevo_reverse(state, _grid(reduced, 0, cfg.kind_a, cfg, factor), ancilla_mode)
    return h_a, h_b


@lru_cache(maxsize=256)
def _baseline(cfg: ScenarioConfig, cutoff: int, factor: int) -> tuple[float, float, float]:
    amp = cfg.amplifier
    rho = _channel_state(cfg.R, cfg.channel, cutoff, amp.radial_nodes * factor, amp.angular_nodes * factor)
    h_a, h_b = _holevo(rho, rho, cfg, factor) if cfg.reconciliation != "none" else (math.nan, math.nan)
    return _mi(rho, cfg, factor), h_a, h_b


def _amplified(cfg: ScenarioConfig, cutoff: int, factor: int):
    """Amplified state as (object for Holevo, reduced two-mode state, ancilla mode)."""
    amp = dataclasses.replace(cfg.amplifier, radial_nodes=cfg.amplifier.radial_nodes * factor,
                              angular_nodes=cfg.amplifier.angular_nodes * factor)
    model = AncillaNoiseModel(cfg.effective_delta_prime)
    if cfg.placement == "after":
        rho = _channel_state(cfg.R, cfg.channel, cutoff, amp.radial_nodes, amp.angular_nodes)
        if cfg.noise_model == "gaussian":
            out = amplifier(rho, 1, amp)
            return out, out, None
        st = amplify_with_ancilla(rho, amp, model)
        return st, st.reduced(), None
    rho = tmsv_fock(TmsvParams(cfg.R), cutoff)
    if cfg.noise_model == "gaussian":
        out = amplifier(rho, 1, amp)
        w = out.pre_norm_trace
        out = apply_channel(out, cfg.channel, 1, amp.radial_nodes, amp.angular_nodes)
        out = DensityMatrix(out.space, out.matrix, w)
        return out, out, None
    # amplifier before the channel with the ancilla: explicit three-mode state
    st = attach_ancilla_noise(rho, model, 1)
    st = photon_add(st, 1, amp.m_add)
    w = st.pre_norm_trace
    st = photon_subtract(st, 1, amp.n_sub)
    w *= st.pre_norm_trace
    st = apply_channel(st, cfg.channel, 1, amp.radial_nodes, amp.angular_nodes)
    st = DensityMatrix(st.space, st.matrix, w)
    return st, partial_trace(st, [0, 1]), 2


def _evaluate(cfg: ScenarioConfig, cutoff: int, factor: int) -> dict:
    # the baseline only depends on the state, channel and measurements
    key = dataclasses.replace(cfg, amplifier=AmplifierConfig(radial_nodes=cfg.amplifier.radial_nodes,
                                                             angular_nodes=cfg.amplifier.angular_nodes),
                              noise_model="gaussian", delta_prime=None, check_convergence=False)
    i0, h_a0, h_b0 = _baseline(key, cutoff, factor)
    state, reduced, anc = _amplified(cfg, cutoff, factor)
    i = _mi(reduced, cfg, factor)
    if cfg.reconciliation == "none":
        h_a = h_b = math.nan
    else:
        h_a, h_b = _holevo(state, reduced, cfg, factor, anc)
    weight = state.weight if isinstance(state, BranchedState) else state.pre_norm_trace
    return {
        "i0_bits": i0, "i_bits": i, "d_i_bits": i - i0,
        "h_ea0": h_a0, "h_ea": h_a, "h_eb0": h_b0, "h_eb": h_b,
        "success_weight": weight, "purity": reduced.purity,
    }


def _evaluate_escalating(cfg: ScenarioConfig, cutoff: int, factor: int) -> tuple[dict, int]:
    while True:
        try:
            return _evaluate(cfg, cutoff, factor), cutoff
        except (TruncationError, QuadratureError) as exc:
            if cfg.cutoff is not None or cutoff + CUTOFF_STEP > MAX_AUTO_CUTOFF:
                raise
            log.info("%s: %s; retrying at cutoff %d", cfg.label, exc, cutoff + CUTOFF_STEP)
            cutoff += CUTOFF_STEP


def run_scenario(cfg: ScenarioConfig) -> ScenarioReport:
    """Compute one ScenarioReport, including the refinement check when enabled.

    Module errors are re-raised with the scenario label attached.
    """
    try:
        metrics, cutoff = _evaluate_escalating(cfg, cfg.cutoff or DEFAULT_CUTOFF, 1)
        report = ScenarioReport(cfg, **metrics)
        amp = cfg.amplifier
        report.settings = {
            "cutoff": cutoff, "hom_points": cfg.hom_points, "het_points": cfg.het_points,
            "radial_nodes": amp.radial_nodes, "angular_nodes": amp.angular_nodes,
        }
        if cfg.check_convergence:
            refined, rcut = _evaluate_escalating(cfg, cutoff + CUTOFF_STEP, 2)
            deltas = {k: abs(refined[k] - metrics[k]) for k in ALL_METRICS
                      if not (math.isnan(refined[k]) and math.isnan(metrics[k]))}
            report.convergence = {"cutoff": rcut, "grid_factor": 2, "node_factor": 2, "deltas": deltas}
            worst = max((deltas[k] for k in BIT_METRICS if k in deltas), default=0.0)
            report.converged = "true" if worst < CONVERGENCE_TOL else "unconverged"
    except CvampError as exc:
        raise type(exc)(f"[{cfg.label}] {exc}") from exc
    if cfg.noise_model == "ancilla":
        m1, m2 = AncillaNoiseModel(cfg.effective_delta_prime).moments()
    else:
        m1, m2 = amp.delta, 2 * amp.delta**2
    report.diagnostics = {
        "noise_moments": {
            "gaussian": {"mean_abs2": amp.delta, "mean_abs4": 2 * amp.delta**2},
            "ancilla": dict(zip(("mean_abs2", "mean_abs4"),
                                AncillaNoiseModel(cfg.effective_delta_prime).moments())),
            "used": {"mean_abs2": m1, "mean_abs4": m2},
        },
    }
    return report


def _safe_run(cfg: ScenarioConfig) -> ScenarioReport:
    try:
        return run_scenario(cfg)
    except NumericalError as exc:
        log.warning("point failed: %s", exc)
        return ScenarioReport(cfg, converged="error", error=f"{type(exc).__name__}: {exc}")


def run_many(configs, workers: int = 1) -> list[ScenarioReport]:
    """Run configs in order; numerical failures become error rows."""
    configs = list(configs)
    if workers <= 1 or len(configs) <= 1:
        return [_safe_run(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_safe_run, configs))


@dataclass(frozen=True)
class SweepAxis:
    name: str
    min: float
    max: float
    steps: int

    def __post_init__(self):
        if self.name not in ("R", "delta"):
            raise ConfigError(f"sweep axis must be 'R' or 'delta', got {self.name!r}")
        if self.steps < 2:
            raise ConfigError("sweep axes need at least 2 steps")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.steps)


@dataclass(frozen=True)
class SweepSpec:
    """One or two axes over R and delta, applied to each amplifier in turn."""

    base: ScenarioConfig
    axes: tuple[SweepAxis, ...]
    amplifiers: tuple[AmplifierConfig, ...] = ()

    def __post_init__(self):
        if not 1 <= len(self.axes) <= 2:
            raise ConfigError("a sweep has one or two axes")
        if len({a.name for a in self.axes}) != len(self.axes):
            raise ConfigError("sweep axes must be distinct")

    def configs(self) -> list[ScenarioConfig]:
        amps = self.amplifiers or (self.base.amplifier,)
        grids = np.meshgrid(*[a.values for a in self.axes], indexing="ij")
        points = list(zip(*[g.ravel() for g in grids]))
        out = []
        for amp in amps:
            for pt in points:
                cfg = dataclasses.replace(self.base, amplifier=amp)
                for axis, val in zip(self.axes, pt):
                    if axis.name == "R":
                        cfg = dataclasses.replace(cfg, R=float(val))
                    else:
                        cfg = dataclasses.replace(cfg, amplifier=dataclasses.replace(cfg.amplifier, delta=float(val)))
                out.append(cfg)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> SweepSpec:
        try:
            base = ScenarioConfig.from_dict(data.get("base", {}))
            axes = tuple(SweepAxis(**a) for a in data["axes"])
            amps = tuple(AmplifierConfig(**a) for a in data.get("amplifiers", ()))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad sweep spec: {exc}") from exc
        return cls(base, axes, amps)


FIGURE_AMPLIFIERS = (AmplifierConfig.npa(0.0, 2), AmplifierConfig.npa(0.0, 3), AmplifierConfig.hfa(0.0))


def figure_sweep(kind_a="homodyne", kind_b="homodyne", steps: int = 13,
                 r_range=(0.05, 0.65), delta_range=(0.0, 0.6), **base_kw) -> SweepSpec:
    """(R, delta) surfaces for 2 subtractions, 3 subtractions and add+subtract."""
    base = ScenarioConfig(kind_a=kind_a, kind_b=kind_b, reconciliation="none", **base_kw)
    return SweepSpec(base, (SweepAxis("R", *r_range, steps), SweepAxis("delta", *delta_range, steps)),
                     FIGURE_AMPLIFIERS)


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[ScenarioReport]:
    return run_many(spec.configs(), workers)


TABLE_DELTAS = (0.0, 0.1, 0.2)


def table_configs(R: float = 0.3, channels=None, convention: str = "excess", noise_model: str = "ancilla",
                  **base_kw) -> list[ScenarioConfig]:
    """Two-subtraction and add+subtract amplifiers at three noise levels, over
    four protocols and the four channel presets; both reconciliations per row."""
    channels = channels or ("ideal", "noisy", "lossy", "realistic")
    out = []
    for ch in channels:
        chan = channel_preset(ch, convention)
        for kind_a, kind_b in PROTOCOLS:
            for make in (lambda d: AmplifierConfig.npa(d, 2), AmplifierConfig.hfa):
                for d in TABLE_DELTAS:
                    out.append(ScenarioConfig(R=R, channel=chan, amplifier=make(d), noise_model=noise_model,
                                              kind_a=kind_a, kind_b=kind_b, reconciliation="both", **base_kw))
    return out


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def render_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rep in reports:
        row = rep.row()
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def render_json(reports, timestamp: str | None = None) -> str:
    reports = list(reports)
    conventions = sorted({r.config.channel.convention for r in reports}) or ["excess"]
    meta = {
        "version": __version__,
        "log_base": 2,
        "units": "bits",
        "vacuum_variance": 0.5,
        "n_t_interpretation": {
            "thermal": "environment mean photon number; added variance (1 - eta) * n_t",
            "excess": "excess quadrature variance n_t added on top of pure loss",
            "used": conventions,
        },
        "runs": [{"index": i, **r.settings, "convergence_cutoff": r.convergence.get("cutoff")}
                 for i, r in enumerate(reports)],
    }
    if timestamp:
        meta["timestamp"] = timestamp
    rows = []
    for rep in reports:
        rows.append({**rep.row(), "convergence": rep.convergence, "diagnostics": rep.diagnostics,
                     "error": rep.error, "config": rep.config.to_dict()})
    return json.dumps(_jsonable({"metadata": meta, "rows": rows}), indent=2, sort_keys=False) + "\n"


def emit(reports, fmt: str, path=None, timestamp: str | None = None) -> str:
    """Render reports as CSV or JSON and write them to ``path`` when given."""
    if fmt == "csv":
        text = render_csv(reports)
    elif fmt == "json":
        text = render_json(reports, timestamp)
    else:
        raise ConfigError(f"unknown output format {fmt!r}")
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def parse_csv(text: str) -> list[dict]:
    """Read emitted CSV back, converting numeric columns to float."""
    numeric = set(CSV_COLUMNS) - {"kind_a", "kind_b", "noise_model", "converged"}
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        rows.append({k: float(v) if k in numeric else v for k, v in row.items()})
    return rows
