"""Offspring laws and generating-function machinery of the two-type process.

A contaminated (type 1) individual lives one day and then either leaves the
process (mass ``p0``), is registered and becomes a type-2 individual (mass
``q``), or contaminates ``j >= 1`` new type-1 individuals (mass ``p_j``).
Type-2 individuals are final.  Everything here is pure and deterministic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from numbers import Real
from typing import Sequence

import numpy as np

from .exceptions import CalibrationError, TruncationError, ValidationError

__all__ = [
    "Criticality",
    "DomainError",
    "InitialPopulation",
    "OffspringLaw",
    "calibrate",
    "classify",
    "exact_distribution",
    "mean_offspring",
    "pgf_iterate",
    "pgf_joint",
    "pgf_marginal_t1",
    "pgf_marginal_t2",
    "pgf_z1",
    "pgf_z2",
    "process_pgf",
    "theoretical_means",
]

MASS_TOL = 1e-12
FAMILIES = ("finite", "geometric", "poisson")


class DomainError(ValidationError):
    """Requested quantity is undefined for the given day index."""


def _check_prob(name, value):
    if not (0 <= value <= 1) or isinstance(value, bool):
        raise ValidationError(f"{name} must lie in [0, 1], got {value!r}")


def _check_count(name, value, minimum=0):
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise ValidationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def _truncated_weights(family, param, total, k):
    # proportional renormalisation of the family shape on 1..k
    if family == "geometric":
        shape = [param**j for j in range(1, k + 1)]
    else:
        shape = [param**j / math.factorial(j) for j in range(1, k + 1)]
    norm = math.fsum(shape)
    return tuple(total * w / norm for w in shape)


@dataclass(frozen=True)
class OffspringLaw:
    """Reproduction law of a contaminated individual.

    Use the :meth:`finite`, :meth:`geometric` and :meth:`poisson`
    constructors rather than the raw initializer.

    Parameters
    ----------
    family : {'finite', 'geometric', 'poisson'}
    p0 : float
        Exit mass.
    q : float
        Registration mass.
    probs : tuple of float
        ``p_1..p_k`` for the finite family, empty otherwise.
    p : float, optional
        Geometric parameter; ``p_j = (1 - p) p**j``.
    lam : float, optional
        Poisson rate; ``p_j = exp(-lam) lam**j / j!``.
    k : int, optional
        Truncation bound for geometric/poisson.  Mass above ``k`` is
        redistributed proportionally over ``1..k`` so that ``p0`` and ``q``
        keep their values.
    """

    family: str
    p0: float
    q: float
    probs: tuple = ()
    p: float | None = None
    lam: float | None = None
    k: int | None = None
    _table: tuple | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        _check_prob("p0", self.p0)
        _check_prob("q", self.q)
        if self.family == "finite":
            if len(self.probs) < 1:
                raise ValidationError("finite family needs at least p_1")
            for j, pj in enumerate(self.probs, start=1):
                _check_prob(f"p_{j}", pj)
            total = self.p0 + sum(self.probs) + self.q
            if abs(total - 1) > MASS_TOL:
                raise ValidationError(f"total mass p0 + sum(p_j) + q = {float(total)!r} != 1")
            table = (self.p0 + self.q,) + tuple(self.probs)
        elif self.family == "geometric":
            if self.p is None or not 0 < self.p < 1:
                raise ValidationError(f"geometric parameter p must lie in (0, 1), got {self.p!r}")
            if abs(self.q + self.p0 - (1 - self.p)) > MASS_TOL:
                raise ValidationError(f"geometric law needs q + p0 = 1 - p = {1 - self.p!r}")
            table = self._truncated_table(self.p, self.p)
        else:
            if self.lam is None or not self.lam > 0:
                raise ValidationError(f"poisson rate must be > 0, got {self.lam!r}")
            e = math.exp(-self.lam)
            if abs(self.q + self.p0 - e) > MASS_TOL:
                raise ValidationError(f"poisson law needs q + p0 = exp(-lam) = {e!r}")
            table = self._truncated_table(self.lam, 1 - e)
        object.__setattr__(self, "_table", table)

    def _truncated_table(self, param, total):
        if self.k is None:
            return None
        k = _check_count("truncation bound k", self.k, 1)
        return (self.p0 + self.q,) + _truncated_weights(self.family, param, total, k)

    @classmethod
    def finite(cls, probs: Sequence[float], q: float | None = None, p0: float | None = None):
        """Finite law ``p0 + sum_j p_j s^j + q``; the missing one of ``q``/``p0`` is derived."""
        probs = tuple(probs)
        if q is None and p0 is None:
            raise ValidationError("give at least one of q and p0")
        if q is None:
            q = 1 - p0 - sum(probs)
        elif p0 is None:
            p0 = 1 - q - sum(probs)
        return cls("finite", p0=p0, q=q, probs=probs)

    @classmethod
    def geometric(cls, p: float, q: float, p0: float | None = None, k: int | None = None):
        if p0 is None:
            p0 = 1 - p - q
        return cls("geometric", p0=p0, q=q, p=p, k=k)

    @classmethod
    def poisson(cls, lam: float, q: float, p0: float | None = None, k: int | None = None):
        if p0 is None:
            p0 = math.exp(-lam) - q
        return cls("poisson", p0=p0, q=q, lam=lam, k=k)

    @property
    def is_finite(self) -> bool:
        """True when the number of new contaminations is bounded."""
        return self._table is not None

    @property
    def table(self) -> tuple:
        """Distribution of the type-1 offspring count: ``(p0 + q, p_1, ..., p_k)``."""
        if self._table is None:
            raise ValidationError(f"untruncated {self.family} law has unbounded support")
        return self._table

    @property
    def contamination_mass(self) -> float:
        """Probability of producing at least one new contaminated individual."""
        return 1 - self.p0 - self.q

    def to_dict(self) -> dict:
        d = {"family": self.family, "p0": float(self.p0), "q": float(self.q)}
        if self.family == "finite":
            d["probs"] = [float(x) for x in self.probs]
        elif self.family == "geometric":
            d["p"] = self.p
        else:
            d["lam"] = self.lam
        if self.k is not None:
            d["k"] = self.k
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OffspringLaw":
        """Inverse of :meth:`to_dict`.

        A dict carrying ``m`` instead of the family parameter is routed
        through :func:`calibrate`.
        """
        family = d.get("family")
        if "m" in d:
            return calibrate(family, d["m"], d.get("q", 0.0))
        if family == "finite":
            return cls.finite(d["probs"], q=d.get("q"), p0=d.get("p0"))
        if family == "geometric":
            return cls.geometric(d["p"], d["q"], p0=d.get("p0"), k=d.get("k"))
        if family == "poisson":
            return cls.poisson(d["lam"], d["q"], p0=d.get("p0"), k=d.get("k"))
        raise ValidationError(f"unknown family {family!r}")


@dataclass(frozen=True)
class InitialPopulation:
    """Law of ``Z1(0)``: either a fixed count or a finite distribution on ``k >= 1``.

    ``pmf[k]`` is ``P{Z1(0) = k}``; ``pmf[0]`` must be zero.
    """

    kind: str
    n: int | None = None
    pmf: tuple = ()

    def __post_init__(self):
        if self.kind == "fixed":
            _check_count("N", self.n, 1)
        elif self.kind == "distribution":
            if len(self.pmf) < 2:
                raise ValidationError("initial distribution needs mass on some k >= 1")
            if self.pmf[0] != 0:
                raise ValidationError("initial distribution must put no mass at 0")
            for x in self.pmf:
                _check_prob("initial mass", x)
            if abs(sum(self.pmf) - 1) > MASS_TOL:
                raise ValidationError("initial distribution masses must sum to 1")
        else:
            raise ValidationError(f"unknown initial population kind {self.kind!r}")

    @classmethod
    def fixed(cls, n: int) -> "InitialPopulation":
        return cls("fixed", n=n)

    @classmethod
    def distribution(cls, masses) -> "InitialPopulation":
        """Build from a ``{k: mass}`` mapping or a sequence indexed by ``k`` (from 0)."""
        if isinstance(masses, dict):
            top = max(masses)
            pmf = [0] * (top + 1)
            for kk, v in masses.items():
                pmf[_check_count("k", kk, 1)] = v
        else:
            pmf = list(masses)
        return cls("distribution", pmf=tuple(pmf))

    @property
    def mean(self) -> float:
        if self.kind == "fixed":
            return self.n
        return sum(kk * x for kk, x in enumerate(self.pmf))

    @property
    def support_pmf(self) -> tuple:
        if self.kind == "fixed":
            return (0,) * self.n + (1,)
        return self.pmf

    def pgf(self, s):
        if self.kind == "fixed":
            return s**self.n
        return sum(x * s**kk for kk, x in enumerate(self.pmf) if x)

    def to_dict(self) -> dict:
        if self.kind == "fixed":
            return {"kind": "fixed", "n": self.n}
        return {"kind": "distribution", "pmf": [float(x) for x in self.pmf]}

    @classmethod
    def from_dict(cls, d) -> "InitialPopulation":
        if isinstance(d, int):
            return cls.fixed(d)
        if d.get("kind", "fixed") == "fixed":
            return cls.fixed(d["n"])
        return cls.distribution(d["pmf"])


class Criticality(str, enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


def _check_arg(name, s):
    if not isinstance(s, Real) or not 0 <= s <= 1:
        raise ValidationError(f"{name} must lie in [0, 1], got {s!r}")


def _contamination_pgf(law, s):
    # sum_{j>=1} p_j s^j
    if law.is_finite:
        acc = 0 * s
        for pj in reversed(law.table[1:]):
            acc = (acc + pj) * s
        return acc
    if law.family == "geometric":
        p = law.p
        return (1 - p) * p * s / (1 - p * s)
    return math.exp(-law.lam * (1 - s)) - math.exp(-law.lam)


def pgf_joint(law: OffspringLaw, s1, s2):
    """Joint generating function ``E s1**xi1 * s2**xi2`` of one individual's offspring."""
    _check_arg("s1", s1)
    _check_arg("s2", s2)
    return law.p0 + _contamination_pgf(law, s1) + law.q * s2


def pgf_marginal_t1(law: OffspringLaw, s):
    """Generating function of the type-1 offspring count (``s2 = 1``)."""
    _check_arg("s", s)
    return law.q + law.p0 + _contamination_pgf(law, s)


def pgf_marginal_t2(law: OffspringLaw, s):
    """Generating function of the registration indicator: ``1 - q + q s``."""
    _check_arg("s", s)
    return 1 - law.q + law.q * s


def pgf_iterate(law: OffspringLaw, s, n: int):
    """``n``-fold self-composition of :func:`pgf_marginal_t1`; ``n = 0`` gives ``s``."""
    n = _check_count("n", n)
    _check_arg("s", s)
    for _ in range(n):
        # clamp guards against 1 + ulp drifting out of the domain
        s = min(pgf_marginal_t1(law, s), 1)
    return s


def pgf_z1(law: OffspringLaw, init: InitialPopulation, n: int, s):
    """Generating function of ``Z1(n)``: ``h0(h*_n(s))``."""
    return init.pgf(pgf_iterate(law, s, n))


def pgf_z2(law: OffspringLaw, init: InitialPopulation, n: int, s):
    """Generating function of ``Z2(n)``: ``h0(h*_{n-1}(1 - q + q s))``.

    Raises
    ------
    DomainError
        For ``n = 0``, where ``Z2(0) = 0`` identically.
    """
    n = _check_count("n", n)
    if n == 0:
        raise DomainError("Z2(0) = 0 identically; its generating function is requested for n >= 1")
    return init.pgf(pgf_iterate(law, pgf_marginal_t2(law, s), n - 1))


def process_pgf(law: OffspringLaw, init: InitialPopulation, n: int, s):
    """Return ``(F1(n; s), F2(n; s))``.

    ``F2`` is ``None`` for ``n = 0``; call :func:`pgf_z2` to get an error there instead.
    """
    f1 = pgf_z1(law, init, n, s)
    f2 = pgf_z2(law, init, n, s) if n >= 1 else None
    return f1, f2


def mean_offspring(law: OffspringLaw):
    """Mean number of new contaminated individuals per contaminated individual."""
    if law.is_finite:
        return sum(j * pj for j, pj in enumerate(law.table))
    if law.family == "geometric":
        return law.p / (1 - law.p)
    return law.lam


def theoretical_means(law: OffspringLaw, init: InitialPopulation, n: int):
    """Return ``(E Z1(n), E Z2(n)) = (m0 m**n, q m0 m**(n-1))`` with ``E Z2(0) = 0``."""
    n = _check_count("n", n)
    m = mean_offspring(law)
    m0 = init.mean
    m1 = m0 * m**n
    m2 = law.q * m0 * m ** (n - 1) if n >= 1 else 0 * m1
    return m1, m2


def _convolve(a, b, cap, exact):
    if not exact:
        return np.convolve(a, b)[: cap + 1]
    out = [Fraction(0)] * min(len(a) + len(b) - 1, cap + 1)
    for i, x in enumerate(a):
        if not x:
            continue
        for j, y in enumerate(b[: len(out) - i]):
            out[i + j] += x * y
    return out


def _mix_powers(weights, base, cap, exact):
    """``sum_l weights[l] * base^{*l}`` truncated at ``cap``."""
    zero = Fraction(0) if exact else 0.0
    out = [zero] * (cap + 1) if exact else np.zeros(cap + 1)
    power = [Fraction(1)] if exact else np.array([1.0])
    for l, w in enumerate(weights):
        if l:
            power = _convolve(power, base, cap, exact)
        if w:
            for i, x in enumerate(power):
                out[i] += w * x
    return out


def _trim(dist, exact):
    dist = list(dist) if exact else np.asarray(dist, dtype=float)
    end = len(dist)
    while end > 1 and not dist[end - 1]:
        end -= 1
    return dist[:end]


def exact_distribution(law: OffspringLaw, init: InitialPopulation, n: int,
                       support_cap: int = 200, exact: bool = False):
    """Exact laws of ``Z1(n)`` and ``Z2(n)`` by repeated convolution.

    Only bounded laws (finite family or truncated geometric/poisson) are
    supported.  ``Z2(n)`` is obtained by binomially thinning ``Z1(n-1)``
    with parameter ``q``.

    Parameters
    ----------
    law, init : OffspringLaw, InitialPopulation
    n : int
        Generation (day) index, ``n >= 0``.
    support_cap : int
        Largest value of ``Z1`` kept.  Mass beyond it is dropped and must not
        exceed ``1e-9``.
    exact : bool
        Work in :class:`fractions.Fraction` arithmetic.  Float inputs are
        converted exactly, so the result is exact for the binary values given.

    Returns
    -------
    dist1, dist2 : ndarray or list of Fraction
        Probability vectors indexed by value, trailing zeros removed.

    Raises
    ------
    TruncationError
        If more than ``1e-9`` of the mass lies above ``support_cap``.
    """
    n = _check_count("n", n)
    cap = _check_count("support_cap", support_cap, 1)
    conv = Fraction if exact else float
    table = [conv(x) for x in law.table]
    q = conv(law.q)
    dist = [conv(x) for x in init.support_pmf][: cap + 1]
    if not exact:
        dist = np.asarray(dist)
    prev = dist
    for _ in range(n):
        prev = dist
        dist = _mix_powers(prev, table, cap, exact)

    if n == 0:
        dist2 = [conv(1)]
    else:
        dist2 = [conv(0)] * len(prev)
        for l, w in enumerate(prev):
            if w:
                for i in range(l + 1):
                    dist2[i] += w * comb(l, i) * q**i * (1 - q) ** (l - i)
    deficit = 1 - sum(dist)
    if deficit > 1e-9:
        raise TruncationError(
            f"support cap {cap} loses mass {float(deficit):.3g} of Z1({n}); raise support_cap",
            float(deficit),
        )
    return _trim(dist, exact), _trim(dist2, exact)


def calibrate(family: str, target_m: float, q: float) -> OffspringLaw:
    """Law of the given family with mean ``target_m`` and registration mass ``q``.

    ``'finite2'`` puts mass ``target_m / 2`` on two new contaminations and
    the rest (after ``q``) on exit.

    Raises
    ------
    CalibrationError
        When ``q`` exceeds what the family allows for this mean.
    """
    if not target_m > 0:
        raise CalibrationError(f"target mean must be > 0, got {target_m!r}")
    if not 0 <= q <= 1:
        raise CalibrationError(f"q must lie in [0, 1], got {q!r}")
    if family == "geometric":
        p = target_m / (1 + target_m)
        qmax = 1 / (1 + target_m)
        if q > qmax:
            raise CalibrationError(
                f"geometric law with mean {target_m} needs q <= 1/(1+m) = {qmax:.6g}; got q={q}")
        return OffspringLaw.geometric(p, q, p0=max(qmax - q, 0.0))
    if family == "poisson":
        qmax = math.exp(-target_m)
        if q > qmax:
            raise CalibrationError(
                f"poisson law with mean {target_m} needs q <= exp(-m) = {qmax:.6g}; got q={q}")
        return OffspringLaw.poisson(target_m, q, p0=max(qmax - q, 0.0))
    if family == "finite2":
        p2 = target_m / 2
        qmax = 1 - p2
        if q > qmax or p2 > 1:
            raise CalibrationError(
                f"two-point law with mean {target_m} needs m <= 2 and q <= 1 - m/2 = {qmax:.6g}; got q={q}")
        return OffspringLaw.finite((0.0, p2), q=q, p0=max(qmax - q, 0.0))
    raise CalibrationError(f"unknown calibration family {family!r}; expected finite2, geometric or poisson")


def classify(m: float) -> Criticality:
    """Exact trichotomy on the reproduction mean; no tolerance band."""
    if m > 1:
        return Criticality.SUPERCRITICAL
    if m < 1:
        return Criticality.SUBCRITICAL
    return Criticality.CRITICAL
