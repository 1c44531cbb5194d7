"""Seeded simulation of the two-type process and Monte Carlo ensembles.

Replicates are simulated in fixed blocks of ``BLOCK_SIZE`` paths that share a
counter-based Philox stream keyed by ``(seed, block_index)``.  Blocks are
always simulated in full, so replicate ``i`` depends only on ``(seed, i)``
and never on the number of replicates or on the worker count.  Ensemble
statistics are reduced from exact integer value counts, which makes the
reduction independent of execution order.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .exceptions import ExplosionError, ValidationError
from .model import InitialPopulation, OffspringLaw

__all__ = [
    "BLOCK_SIZE",
    "DEFAULT_CAP",
    "EnsembleSummary",
    "ModelConfig",
    "Trajectory",
    "make_rng",
    "monte_carlo",
    "simulate_paths",
    "simulate_trajectory",
    "step",
]

DEFAULT_CAP = 10**8
BLOCK_SIZE = 512
_ZTP_CHUNK = 1 << 22


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Philox generator keyed by ``seed`` and an optional spawn key."""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValidationError(f"seed must be a non-negative integer, got {seed!r}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


@dataclass(frozen=True)
class ModelConfig:
    law: OffspringLaw
    init: InitialPopulation
    days: int
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if isinstance(self.days, bool) or int(self.days) != self.days or self.days < 1:
            raise ValidationError(f"days must be an integer >= 1, got {self.days!r}")
        if self.cap < 1:
            raise ValidationError("population cap must be >= 1")

    def to_dict(self) -> dict:
        return {"law": self.law.to_dict(), "init": self.init.to_dict(),
                "days": self.days, "cap": self.cap}

    @classmethod
    def from_dict(cls, d) -> "ModelConfig":
        return cls(OffspringLaw.from_dict(d["law"]), InitialPopulation.from_dict(d["init"]),
                   int(d["days"]), int(d.get("cap", DEFAULT_CAP)))


@dataclass(frozen=True)
class Trajectory:
    """One path.  ``z1[d]`` for days ``0..n``; ``z2[d-1]`` is the count registered on day ``d``."""

    z1: tuple
    z2: tuple

    @property
    def days(self) -> int:
        return len(self.z2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["day", "z1", "z2"])
        for d, z1 in enumerate(self.z1):
            w.writerow([d, z1, self.z2[d - 1] if d else 0])
        return buf.getvalue()


def _draw_initial(rng, init, size):
    if init.kind == "fixed":
        return np.full(size, init.n, dtype=np.int64)
    pmf = np.array([float(x) for x in init.pmf])
    return rng.choice(len(pmf), size=size, p=pmf / pmf.sum()).astype(np.int64)


def _ztp_sum(rng, counts, lam):
    """Sums of ``counts[i]`` zero-truncated Poisson(lam) variables."""
    total = int(counts.sum())
    if total <= _ZTP_CHUNK:
        draws = rng.poisson(lam, total)
        zeros = np.flatnonzero(draws == 0)
        while zeros.size:
            draws[zeros] = rng.poisson(lam, zeros.size)
            zeros = zeros[draws[zeros] == 0]
        cs = np.concatenate(([0], np.cumsum(draws)))
        ends = np.cumsum(counts)
        return cs[ends] - cs[ends - counts]
    out = np.zeros(len(counts), dtype=np.int64)
    for i, c in enumerate(counts):
        c = int(c)
        while c:
            chunk = min(c, _ZTP_CHUNK)
            out[i] += _ztp_sum(rng, np.array([chunk]), lam)[0]
            c -= chunk
    return out


def _advance(rng, law, z1_prev):
    """One day for an array of populations; returns ``(z1, z2)`` arrays."""
    if law.is_finite:
        pv = [float(law.p0), float(law.q)] + [float(x) for x in law.table[1:]]
        counts = rng.multinomial(z1_prev, pv)
        z1 = counts[:, 2:] @ np.arange(1, len(pv) - 1, dtype=np.int64)
        return z1, counts[:, 1]
    counts = rng.multinomial(z1_prev, [float(law.p0), float(law.q), float(law.contamination_mass)])
    spreaders = counts[:, 2]
    if law.family == "geometric":
        # each spreader makes 1 + Geometric failures; the sum is c + NegBin(c, 1 - p)
        extra = rng.negative_binomial(np.maximum(spreaders, 1), 1 - law.p)
        z1 = spreaders + np.where(spreaders > 0, extra, 0)
    else:
        z1 = _ztp_sum(rng, spreaders, law.lam)
    return z1.astype(np.int64), counts[:, 1]


def step(law: OffspringLaw, z1_prev: int, rng, cap: int = DEFAULT_CAP):
    """Advance a single population by one day.

    Parameters
    ----------
    law : OffspringLaw
    z1_prev : int
        Contaminated individuals on the previous day.
    rng : numpy.random.Generator or int
        Generator, or a seed passed to :func:`make_rng`.
    cap : int
        Largest allowed population.

    Returns
    -------
    z1, z2 : int
        New contaminated and newly registered counts.
    """
    if not isinstance(rng, np.random.Generator):
        rng = make_rng(rng)
    if z1_prev < 0:
        raise ValidationError("z1_prev must be >= 0")
    z1, z2 = _advance(rng, law, np.array([z1_prev], dtype=np.int64))
    if z1[0] > cap:
        raise ExplosionError(f"population {int(z1[0])} exceeds cap {cap}", day=1)
    return int(z1[0]), int(z2[0])


def _simulate_block(config, rng, size):
    days = config.days
    z1 = np.zeros((size, days + 1), dtype=np.int64)
    z2 = np.zeros((size, days), dtype=np.int64)
    exploded_on = np.zeros(size, dtype=np.int64)
    z1[:, 0] = _draw_initial(rng, config.init, size)
    for d in range(1, days + 1):
        new1, new2 = _advance(rng, config.law, z1[:, d - 1])
        over = (new1 > config.cap) & (exploded_on == 0)
        exploded_on[over] = d
        new1[exploded_on > 0] = 0
        z1[:, d] = new1
        z2[:, d - 1] = new2
    return z1, z2, exploded_on


def simulate_trajectory(config: ModelConfig, seed: int) -> Trajectory:
    """Simulate one path; a deterministic function of ``(config, seed)``.

    Raises
    ------
    ExplosionError
        If the population exceeds ``config.cap``; ``err.day`` names the day.
    """
    z1, z2, exploded_on = _simulate_block(config, make_rng(seed), 1)
    if exploded_on[0]:
        d = int(exploded_on[0])
        raise ExplosionError(f"population exceeded cap {config.cap} on day {d}", day=d)
    return Trajectory(tuple(int(x) for x in z1[0]), tuple(int(x) for x in z2[0]))


def _run_blocks(config, reps, seed, workers):
    if isinstance(reps, bool) or int(reps) != reps or reps < 1:
        raise ValidationError(f"reps must be an integer >= 1, got {reps!r}")
    make_rng(seed)
    n_blocks = -(-reps // BLOCK_SIZE)

    def run(b):
        z1, z2, ex = _simulate_block(config, make_rng(seed, b), BLOCK_SIZE)
        keep = min(BLOCK_SIZE, reps - b * BLOCK_SIZE)
        return z1[:keep], z2[:keep], ex[:keep]

    if workers is None or workers <= 1 or n_blocks == 1:
        yield from map(run, range(n_blocks))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            yield from pool.map(run, range(n_blocks))


def simulate_paths(config: ModelConfig, reps: int, seed: int, workers: int = 1):
    """All replicate paths as arrays.

    Returns
    -------
    z1 : ndarray, shape (reps, days + 1)
    z2 : ndarray, shape (reps, days)
    exploded_on : ndarray, shape (reps,)
        Day on which the path exceeded the cap, 0 if it never did.  Exploded
        paths are zeroed from that day on.
    """
    parts = list(_run_blocks(config, reps, seed, workers))
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))


def _tally(counters, columns):
    for counter, col in zip(counters, columns.T):
        vals, cnt = np.unique(col, return_counts=True)
        for v, c in zip(vals.tolist(), cnt.tolist()):
            counter[v] += c


def _moments(counter):
    n = sum(counter.values())
    s1 = sum(v * c for v, c in counter.items())
    s2 = sum(v * v * c for v, c in counter.items())
    mean = Fraction(s1, n)
    var = Fraction(s2 * n - s1 * s1, n * (n - 1)) if n > 1 else Fraction(0)
    return float(mean), float(var)


def _quantile(counter, prob):
    # numpy's default 'linear' rule evaluated on the value histogram
    vals = sorted(counter)
    cum = np.cumsum([counter[v] for v in vals])
    n = int(cum[-1])
    h = (n - 1) * prob
    lo = math.floor(h)

    def order_stat(i):
        return vals[int(np.searchsorted(cum, i, side="right"))]

    a = order_stat(lo)
    if lo + 1 >= n:
        return float(a)
    b = order_stat(lo + 1)
    return a + (h - lo) * (b - a)


@dataclass(frozen=True)
class EnsembleSummary:
    """Per-day Monte Carlo statistics.

    Arrays are indexed by day ``0..days``; ``mean_z2[0]`` is 0.  Exploded
    paths are excluded from every statistic and counted in ``n_exploded``.
    """

    reps: int
    n_exploded: int
    mean_z1: np.ndarray
    mean_z2: np.ndarray
    var_z1: np.ndarray
    var_z2: np.ndarray
    q025: np.ndarray
    q50: np.ndarray
    q975: np.ndarray
    extinct_fraction: float
    config: ModelConfig | None = field(default=None, compare=False)

    @property
    def n_used(self) -> int:
        return self.reps - self.n_exploded

    @property
    def days(self) -> int:
        return len(self.mean_z1) - 1

    @property
    def se_z1(self) -> np.ndarray:
        return np.sqrt(self.var_z1 / self.n_used)

    @property
    def se_z2(self) -> np.ndarray:
        return np.sqrt(self.var_z2 / self.n_used)

    def to_csv(self) -> str:
        """Rows for days ``1..days``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["day", "mean_z1", "mean_z2", "var_z1", "q025", "q50", "q975"])
        for d in range(1, self.days + 1):
            w.writerow([d] + [repr(float(a[d])) for a in
                              (self.mean_z1, self.mean_z2, self.var_z1, self.q025, self.q50, self.q975)])
        return buf.getvalue()


def monte_carlo(config: ModelConfig, reps: int, seed: int, workers: int = 1) -> EnsembleSummary:
    """Aggregate ``reps`` independent paths.

    The result is bit-identical for any ``workers`` value.

    Raises
    ------
    ExplosionError
        Only when every replicate exploded.
    """
    days = config.days
    t1 = [Counter() for _ in range(days + 1)]
    t2 = [Counter() for _ in range(days + 1)]
    n_exploded = 0
    for z1, z2, ex in _run_blocks(config, reps, seed, workers):
        ok = ex == 0
        n_exploded += int((~ok).sum())
        if ok.any():
            _tally(t1, z1[ok])
            _tally(t2[1:], z2[ok])
    if n_exploded == reps:
        raise ExplosionError(f"all {reps} replicates exceeded cap {config.cap}", day=days)
    t2[0][0] = reps - n_exploded

    m1, v1 = map(np.array, zip(*map(_moments, t1)))
    m2, v2 = map(np.array, zip(*map(_moments, t2)))
    qs = [np.array([_quantile(c, p) for c in t1]) for p in (0.025, 0.5, 0.975)]
    extinct = t1[-1].get(0, 0) / (reps - n_exploded)
    return EnsembleSummary(reps, n_exploded, m1, m2, v1, v2, *qs, extinct, config)
