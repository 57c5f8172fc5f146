"""Scenario execution: runs, SNR sweeps and scheme comparisons.

Every (SNR, repetition) point draws its randomness from
``substream(master, "snr:{v}/rep:{i}")``.  All schemes at a point share that
stream, so they see the same source tensor and differ only in transport.
Points never share mutable state, so they may run on a thread pool; results
are merged by sorted key and are bit-identical to a serial run.
"""

from __future__ import annotations

import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

from .codec import JsccCodecConfig, fit_jscc
from .core import RngStream, gaussian_tensor, substream
from .errors import InvalidConfigError
from .protocol import MechanismConfig, MultiUserConfig, RunMetrics, Scheme, run_mechanism, run_multiuser

SCHEME_ORDER = (Scheme.CENTRALIZED, Scheme.MEG, Scheme.E2E_MEG)


@dataclass(frozen=True)
class Scenario:
    name: str
    configs: Mapping[Scheme, MechanismConfig]
    snr_db: tuple[float, ...]
    repetitions: int = 1
    seed: int = 0
    multi_user: MultiUserConfig | None = None
    # schemes to run, in output order; defaults to every configured scheme
    schemes: tuple[Scheme, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "configs", {Scheme(k): v for k, v in dict(self.configs).items()})
        schemes = tuple(Scheme(s) for s in self.schemes) or tuple(s for s in SCHEME_ORDER if s in self.configs)
        object.__setattr__(self, "schemes", schemes)
        object.__setattr__(self, "snr_db", tuple(float(v) for v in self.snr_db))
        if not schemes:
            raise InvalidConfigError("at least one scheme is required", "scenario.schemes")
        if len(set(schemes)) != len(schemes):
            raise InvalidConfigError("schemes must be unique", "scenario.schemes")
        for s in schemes:
            if s not in self.configs:
                raise InvalidConfigError(f"no mechanism configured for scheme {s.value}", "scenario.schemes")
            if self.configs[s].scheme is not s:
                raise InvalidConfigError(f"config listed under {s.value} is for {self.configs[s].scheme.value}",
                                         f"schemes.{s.value}")
        if not self.snr_db:
            raise InvalidConfigError("SNR list must not be empty", "scenario.snr_db")
        if any(math.isnan(v) for v in self.snr_db):
            raise InvalidConfigError("SNR values must be numbers", "scenario.snr_db")
        if len(set(self.snr_db)) != len(self.snr_db):
            raise InvalidConfigError("SNR values must be unique", "scenario.snr_db")
        if int(self.repetitions) < 1:
            raise InvalidConfigError("repetitions must be >= 1", "scenario.repetitions")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfigError("seed must fit in 64 unsigned bits", "scenario.seed")

    def validate(self) -> None:
        for s in self.schemes:
            try:
                self.configs[s].validate()
            except InvalidConfigError as exc:
                raise InvalidConfigError(str(exc), f"schemes.{s.value}") from exc

    def with_snr(self, snr_db: Iterable[float]) -> "Scenario":
        return Scenario(self.name, self.configs, tuple(snr_db), self.repetitions, self.seed,
                        self.multi_user, self.schemes)


@dataclass(frozen=True)
class RunRecord:
    scenario: str
    scheme: str
    mechanism: str
    snr_db: float
    rep: int
    payload_bits_ul: int
    payload_bits_dl: int
    t_tx_s: float
    t_compute_s: float
    t_e2e_s: float
    mse: float
    psnr_db: float
    seed: int
    max_err: float = 0.0
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def from_metrics(cls, s: Scenario, scheme: Scheme, snr: float, rep: int, m: RunMetrics) -> "RunRecord":
        return cls(
            scenario=s.name,
            scheme=scheme.value,
            mechanism=s.configs[scheme].mechanism.value,
            snr_db=snr,
            rep=rep,
            payload_bits_ul=m.payload_bits_ul,
            payload_bits_dl=m.payload_bits_dl,
            t_tx_s=m.t_tx_s,
            t_compute_s=m.t_compute_s,
            t_e2e_s=m.t_e2e_s,
            mse=m.distortion.mse,
            psnr_db=m.distortion.psnr_db,
            seed=int(s.seed),
            max_err=m.distortion.per_dim_max_err,
        )


def point_label(snr_db: float, rep: int) -> str:
    return f"snr:{snr_db:g}/rep:{rep}"


def point_stream(s: Scenario, snr_db: float, rep: int) -> RngStream:
    return substream(RngStream(int(s.seed)), point_label(snr_db, rep))


def _run_point(s: Scenario, snr: float, rep: int) -> list[RunRecord]:
    stream = point_stream(s, snr, rep)
    out = []
    for scheme in s.schemes:
        cfg = s.configs[scheme].with_snr(snr)
        if s.multi_user is None:
            m = run_mechanism(cfg, stream)
        else:
            mu = replace(s.multi_user, d2d=s.multi_user.d2d.with_snr(snr))
            m = run_multiuser(mu, cfg, stream).aggregate
        out.append(RunRecord.from_metrics(s, scheme, snr, rep, m))
    return out


def _order(s: Scenario):
    rank = {sc.value: i for i, sc in enumerate(s.schemes)}
    return lambda r: (r.snr_db, r.rep, rank[r.scheme])


def run_scenario(s: Scenario, workers: int = 1) -> list[RunRecord]:
    """One record per (SNR, repetition, scheme), sorted by that key."""
    s.validate()
    points = [(v, i) for v in s.snr_db for i in range(int(s.repetitions))]
    if workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda p: _run_point(s, *p), points))
    else:
        chunks = [_run_point(s, v, i) for v, i in points]
    return sorted((r for c in chunks for r in c), key=_order(s))


def snr_grid(from_db: float, to_db: float, step_db: float) -> tuple[float, ...]:
    if not all(math.isfinite(x) for x in (from_db, to_db, step_db)):
        raise InvalidConfigError("sweep bounds must be finite", "sweep")
    if step_db <= 0:
        raise InvalidConfigError(f"step must be > 0, got {step_db}", "sweep.step")
    if from_db > to_db:
        raise InvalidConfigError(f"from ({from_db}) exceeds to ({to_db})", "sweep.from")
    n = int(math.floor((to_db - from_db) / step_db + 1e-9))
    # rounding keeps 0.1-style steps on clean decimal values
    return tuple(round(from_db + i * step_db, 9) + 0.0 for i in range(n + 1))


def sweep_snr(s: Scenario, from_db: float, to_db: float, step_db: float, workers: int = 1) -> list[RunRecord]:
    return run_scenario(s.with_snr(snr_grid(from_db, to_db, step_db)), workers)


@dataclass(frozen=True)
class ComparisonRow:
    scheme: str
    snr_db: float
    repetitions: int
    t_tx_s: float
    t_compute_s: float
    t_e2e_s: float
    mse: float
    psnr_db: float
    mse_var: float


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def aggregate(records: Iterable[RunRecord], scheme_order: Sequence[str] | None = None) -> list[ComparisonRow]:
    """Per (scheme, SNR) means; independent of the order records arrive in."""
    groups: dict[tuple[str, float], list[RunRecord]] = defaultdict(list)
    for r in records:
        groups[(r.scheme, r.snr_db)].append(r)
    order = list(scheme_order or [s.value for s in SCHEME_ORDER])
    rank = {name: i for i, name in enumerate(order)}
    rows = []
    for (scheme, snr) in sorted(groups, key=lambda k: (k[1], rank.get(k[0], len(rank)), k[0])):
        rs = sorted(groups[(scheme, snr)], key=lambda r: r.rep)
        errs = [r.mse for r in rs]
        mu = _mean(errs)
        var = math.fsum((e - mu) ** 2 for e in errs) / (len(errs) - 1) if len(errs) > 1 else 0.0
        rows.append(ComparisonRow(
            scheme=scheme,
            snr_db=snr,
            repetitions=len(rs),
            t_tx_s=_mean([r.t_tx_s for r in rs]),
            t_compute_s=_mean([r.t_compute_s for r in rs]),
            t_e2e_s=_mean([r.t_e2e_s for r in rs]),
            mse=mu,
            psnr_db=_mean([r.psnr_db for r in rs]),
            mse_var=var,
        ))
    return rows


def compare_schemes(s: Scenario, workers: int = 1) -> list[ComparisonRow]:
    return aggregate(run_scenario(s, workers), [sc.value for sc in s.schemes])


def crossover_snr(rows: Iterable[ComparisonRow], digital: str = Scheme.MEG.value,
                  analog: str = Scheme.E2E_MEG.value) -> float | None:
    """Lowest SNR from which the digital scheme's mean MSE stays below the analog one's.

    Returns ``None`` when the digital scheme does not win at the top of the grid.
    """
    by_snr: dict[float, dict[str, float]] = defaultdict(dict)
    for r in rows:
        by_snr[r.snr_db][r.scheme] = r.mse
    grid = sorted(v for v, d in by_snr.items() if digital in d and analog in d)
    best = None
    for v in reversed(grid):
        if by_snr[v][digital] < by_snr[v][analog]:
            best = v
        else:
            break
    return best


def mse_curves(rows: Iterable[ComparisonRow]) -> dict[str, list[tuple[float, float]]]:
    curves: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for r in rows:
        curves[r.scheme].append((r.snr_db, r.mse))
    return {k: sorted(v) for k, v in curves.items()}


@lru_cache(maxsize=8)
def calibrated_jscc(shape: tuple[int, ...], merged_dim: int, count: int, seed: int) -> JsccCodecConfig:
    """Fit (and memoize) a JSCC config on ``count`` seeded Gaussian calibration tensors."""
    root = RngStream(int(seed))
    cal = [gaussian_tensor(shape, substream(root, f"calibration:{i}")) for i in range(count)]
    return fit_jscc(cal, merged_dim)


__all__ = [
    "ComparisonRow",
    "RunRecord",
    "SCHEME_ORDER",
    "Scenario",
    "aggregate",
    "calibrated_jscc",
    "compare_schemes",
    "crossover_snr",
    "mse_curves",
    "point_label",
    "point_stream",
    "run_scenario",
    "snr_grid",
    "sweep_snr",
]
