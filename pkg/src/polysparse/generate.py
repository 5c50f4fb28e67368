"""Synthetic GAP instances with Gaussian-copula coupled values and weights.

Each ``(item, knapsack)`` cell draws a correlated standard normal pair, maps
it to uniforms with the normal CDF and then through the inverse CDFs of the
value and weight marginals.  Capacities are set from the 5% weight quantile
and a redundancy target.
"""

from __future__ import annotations

import itertools
import logging
import re
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .instance import GapInstance

log = logging.getLogger(__name__)

WEIGHT_OFFSET = 0.01
CAPACITY_QUANTILE = 0.05

# Smallest/largest uniforms produced by the copula; keeps inverse CDFs finite.
_U_LO = np.nextafter(0.0, 1.0)
_U_HI = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"Uniform needs a < b, got ({self.a}, {self.b})")

    @property
    def lower(self) -> float:
        return self.a

    def ppf(self, u):
        return self.a + np.asarray(u, dtype=np.float64) * (self.b - self.a)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0)

    def __str__(self):
        return f"Uniform({self.a:g},{self.b:g})"


@dataclass(frozen=True)
class TruncNormal:
    mu: float
    sigma: float
    lo: float
    hi: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"TruncNormal needs sigma > 0, got {self.sigma}")
        if not self.lo < self.hi:
            raise ValueError(f"TruncNormal needs lo < hi, got ({self.lo}, {self.hi})")

    @property
    def lower(self) -> float:
        return self.lo

    def _mass(self):
        a = ndtr((self.lo - self.mu) / self.sigma)
        b = ndtr((self.hi - self.mu) / self.sigma)
        return a, b

    def ppf(self, u):
        # exact inversion through the untruncated normal, no rejection
        a, b = self._mass()
        z = ndtri(a + np.asarray(u, dtype=np.float64) * (b - a))
        return np.clip(self.mu + self.sigma * z, self.lo, self.hi)

    def cdf(self, x):
        a, b = self._mass()
        x = np.clip(np.asarray(x, dtype=np.float64), self.lo, self.hi)
        return (ndtr((x - self.mu) / self.sigma) - a) / (b - a)

    def __str__(self):
        return f"TruncNormal({self.mu:g},{self.sigma:g},{self.lo:g},{self.hi:g})"


Marginal = Uniform | TruncNormal

VALUE_MARGINALS = {"uniform": Uniform(0, 100), "truncnormal": TruncNormal(50, 15, 0, 100)}
WEIGHT_MARGINALS = {"uniform": Uniform(1, 20), "truncnormal": TruncNormal(10, 5, 1, 30)}


def parse_marginal(text: str, role: str = "value") -> Marginal:
    """Parse ``Uniform(a,b)``, ``TruncNormal(mu,sigma,lo,hi)`` or a preset name."""
    s = text.strip()
    presets = VALUE_MARGINALS if role == "value" else WEIGHT_MARGINALS
    if s.lower() in presets:
        return presets[s.lower()]
    match = re.fullmatch(r"(\w+)\(([^)]*)\)", s)
    if not match:
        raise ValueError(f"cannot parse marginal {text!r}")
    name, args = match.group(1).lower(), [float(x) for x in match.group(2).split(",")]
    if name == "uniform" and len(args) == 2:
        return Uniform(*args)
    if name == "truncnormal" and len(args) == 4:
        return TruncNormal(*args)
    raise ValueError(f"cannot parse marginal {text!r}")


def inverse_cdf(marginal: Marginal, u):
    u = np.asarray(u, dtype=np.float64)
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("inverse_cdf needs u strictly inside (0, 1)")
    out = marginal.ppf(u)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GenParams:
    n: int
    m: int
    rho: float = 0.0
    redundancy_target: float = 2.0
    value_marginal: Marginal = field(default_factory=lambda: VALUE_MARGINALS["uniform"])
    weight_marginal: Marginal = field(default_factory=lambda: WEIGHT_MARGINALS["uniform"])
    seed: int = 0

    def __post_init__(self):
        if self.n < 0 or self.m < 1:
            raise ValueError(f"need n >= 0 and m >= 1, got n={self.n}, m={self.m}")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")
        if not self.redundancy_target > 0:
            raise ValueError(f"redundancy_target must be > 0, got {self.redundancy_target}")
        if self.weight_marginal.lower + WEIGHT_OFFSET <= 0:
            raise ValueError("weight marginal must stay positive after the offset")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["value_marginal"] = str(self.value_marginal)
        d["weight_marginal"] = str(self.weight_marginal)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenParams":
        d = dict(d)
        if "value_marginal" in d and isinstance(d["value_marginal"], str):
            d["value_marginal"] = parse_marginal(d["value_marginal"], "value")
        if "weight_marginal" in d and isinstance(d["weight_marginal"], str):
            d["weight_marginal"] = parse_marginal(d["weight_marginal"], "weight")
        return cls(**d)


def _to_uniform(z1, z2, rho):
    z2 = rho * z1 + np.sqrt(max(0.0, 1.0 - rho * rho)) * z2
    u1 = np.clip(ndtr(z1), _U_LO, _U_HI)
    u2 = np.clip(ndtr(z2), _U_LO, _U_HI)
    return u1, u2


def gaussian_copula_pairs(rho: float, count: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """``count`` uniform pairs whose normal scores have correlation ``rho``."""
    if abs(rho) > 1:
        raise ValueError(f"|rho| must be <= 1, got {rho}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((2, count))
    return _to_uniform(z[0], z[1], rho)


def _cell_normals(seed: int, n: int, m: int) -> np.ndarray:
    """Standard normals of shape (n, m, 2), keyed by (seed, item).

    Each item row has its own stream, so rows can be produced in any order
    (or in parallel) without changing the output.
    """
    out = np.empty((n, m, 2))
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        out[i] = rng.standard_normal((m, 2))
    return out


def capacity_rule(weights: np.ndarray, n: int, m: int, redundancy_target: float) -> float:
    q = float(np.quantile(weights, CAPACITY_QUANTILE)) if weights.size else 0.0
    return q * n / m / redundancy_target


def generate(params: GenParams, return_log: bool = False):
    """Draw a GAP instance; pure function of ``params``.

    With ``return_log=True`` also returns a dict with the clamp count and the
    weight quantile used for the capacities.
    """
    n, m = params.n, params.m
    z = _cell_normals(params.seed, n, m)
    u1, u2 = _to_uniform(z[..., 0], z[..., 1], params.rho)
    values = params.value_marginal.ppf(u1)
    weights = params.weight_marginal.ppf(u2) + WEIGHT_OFFSET

    cap = capacity_rule(weights, n, m, params.redundancy_target)
    min_weight = params.weight_marginal.lower + WEIGHT_OFFSET
    if n and cap < min_weight:
        raise ValueError(
            f"redundancy_target={params.redundancy_target} gives capacity {cap:.4g} "
            f"below the smallest possible weight {min_weight:.4g}"
        )
    capacities = np.full(m, cap)

    clamped = 0
    if n:
        ratio = weights / capacities[None, :]
        bad = np.flatnonzero(np.all(ratio > 1.0, axis=1))
        for i in bad:
            j = int(np.argmin(ratio[i]))
            weights[i, j] = capacities[j]
        clamped = int(bad.size)
    if clamped:
        log.info("clamped %d item(s) to restore individual feasibility", clamped)

    inst = GapInstance(values, weights, capacities, kind="gap")
    if return_log:
        return inst, {"clamped": clamped, "weight_quantile": cap * m * params.redundancy_target / max(n, 1)}
    return inst


# -- parameter grids -----------------------------------------------------------

FULL_N = (1000, 2000, 5000, 10000)
FULL_M = (1, 2, 5)
FULL_RHO = (-0.8, -0.5, -0.3, 0.0, 0.3, 0.5, 0.8)
FULL_REDUNDANCY = (1, 2, 3, 5, 8, 13, 22, 36, 60, 100)
FULL_MARGINALS = tuple(itertools.product(("uniform", "truncnormal"), repeat=2))
FULL_REPLICATES = 8


@dataclass(frozen=True)
class GridSpec:
    n: tuple = FULL_N
    m: tuple = FULL_M
    rho: tuple = FULL_RHO
    redundancy: tuple = FULL_REDUNDANCY
    marginals: tuple = FULL_MARGINALS
    replicates: int = FULL_REPLICATES

    def scaled(self, factor: float) -> "GridSpec":
        ns = tuple(sorted({max(1, int(round(n * factor))) for n in self.n}))
        return GridSpec(ns, self.m, self.rho, self.redundancy, self.marginals, self.replicates)

    def settings(self):
        """Yield ``(n, m, rho, target, value_name, weight_name)`` tuples in a fixed order."""
        yield from itertools.product(self.n, self.m, self.rho, self.redundancy, self.marginals)

    def size(self) -> int:
        return (
            len(self.n) * len(self.m) * len(self.rho) * len(self.redundancy)
            * len(self.marginals) * self.replicates
        )


FULL_GRID = GridSpec()


def derive_seed(master: int, *key: int) -> int:
    """Deterministic 64-bit child seed for ``key`` under ``master``."""
    ss = np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])
