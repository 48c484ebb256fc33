"""Single- and two-particle functionals of the phase-space density.

Two-particle functionals are sums over ordered pairs ``(i, j)`` of
``w_i w_j term(x_i - x_j, xi_i - xi_j)``.  They are evaluated either exactly
by the compiled triangle reduction in :mod:`mesokin._pairs` or estimated
from uniformly sampled ordered pairs (Horvitz-Thompson).

Conventions for coincident positions: ordered pairs with
``|x_i - x_j| < EPS_X`` contribute zero to the localized angular momentum
and to its time derivative, whose direction ``(x_i - x_j)/|x_i - x_j|`` is
undefined there.  Self-pairs are part of every ordered-pair sum; they
contribute zero except to the cone mass, where each counts ``w_i**2``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _pairs
from ._reduce import DEFAULT_CHUNK, chunked_sum, fsum_columns
from .errors import ConfigError, DomainError
from .phase import Ensemble, _require_nonempty
from .rng import RNGStream

log = logging.getLogger(__name__)

EPS_X = 1e-12


# --- parameter types ----------------------------------------------------------

@dataclass(frozen=True)
class ConeSpec:
    """Apex angle ``c``, puncture speed ``v`` and separation radius ``R``."""

    c: float
    v: float
    R: float = 1.0

    def __post_init__(self):
        if not 0 < self.c < math.pi / 2:
            raise ConfigError(f"cone angle c must lie in (0, pi/2), got {self.c}", key="c")
        if not self.v > 0:
            raise ConfigError(f"puncture speed v must be positive, got {self.v}", key="v")
        if not self.R > 0:
            raise ConfigError(f"radius R must be positive, got {self.R}", key="R")

    @property
    def nr_constant(self) -> float:
        """``R v (1 - cos c)``: lower bound of the pair gap on ``N_R``."""
        return self.R * self.v * (1.0 - math.cos(self.c))


@dataclass(frozen=True)
class PairReduceStrategy:
    kind: str = "exact"
    pairs_per_eval: int = 0
    label: str = "pair_subsample"
    chunk_size: int = DEFAULT_CHUNK

    def __post_init__(self):
        if self.kind not in ("exact", "subsample"):
            raise ConfigError(f"unknown strategy {self.kind!r}", key="kind")
        if self.kind == "subsample" and self.pairs_per_eval < 1:
            raise ConfigError("pairs_per_eval must be >= 1", key="pairs_per_eval")
        if self.chunk_size < 1:
            raise ConfigError("chunk_size must be >= 1", key="chunk_size")


EXACT = PairReduceStrategy()


@dataclass(frozen=True)
class PairEstimate:
    value: float
    std_error: float | None = None
    pairs: int = 0
    exact: bool = True


# --- single-particle functionals ----------------------------------------------

def angular_momentum(ens: Ensemble) -> float:
    """``A = sum w x.xi``."""
    _require_nonempty(ens)
    return chunked_sum(ens.w * np.einsum("ij,ij->i", ens.x, ens.xi))


def uncertainty(ens: Ensemble) -> float:
    """``U = sum w |x||xi|``."""
    _require_nonempty(ens)
    return chunked_sum(ens.w * np.linalg.norm(ens.x, axis=1) * np.linalg.norm(ens.xi, axis=1))


def morawetz_increment(ens: Ensemble, D_radius: float) -> float:
    """Energy inside the ball ``|x| <= D_radius``."""
    if not D_radius > 0:
        raise DomainError("D_radius must be positive")
    _require_nonempty(ens)
    inside = np.linalg.norm(ens.x, axis=1) <= D_radius
    return chunked_sum(np.where(inside, ens.w * np.einsum("ij,ij->i", ens.xi, ens.xi), 0.0))


# --- pair terms (vectorized reference form, used for subsampling) -------------

SELECTORS = (
    "dot", "rel_energy", "interaction_uncertainty", "localized_angular_momentum",
    "al_derivative", "interaction_morawetz", "sq_distance", "potential", "gamma",
)

_KERNEL_COLUMN = {
    "dot": _pairs.DOT,
    "rel_energy": _pairs.REL_ENERGY,
    "interaction_uncertainty": _pairs.UNCERTAINTY,
    "localized_angular_momentum": _pairs.LOC_ANG,
    "al_derivative": _pairs.AL_DERIV,
    "interaction_morawetz": _pairs.IMORAWETZ,
    "sq_distance": _pairs.SQ_DIST,
    "potential": _pairs.POTENTIAL,
}


def _cross_sq(a, b):
    if a.shape[1] == 2:
        return (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]) ** 2
    return np.sum(np.cross(a, b) ** 2, axis=1)


def in_cone_arrays(dx, dxi, c, v=None):
    """Vectorized membership of ``xi`` in the (punctured) blind cone.

    ``dx = x - x0`` and ``dxi = xi - xi0`` are ``(m, n)``.  Rows with
    ``|dx| < EPS_X`` are decided by the velocity ball alone (False when
    ``v`` is None).
    """
    dot = np.einsum("ij,ij->i", dx, dxi)
    cr = np.sqrt(_cross_sq(dx, dxi))
    theta = np.arctan2(cr, dot)
    r = np.linalg.norm(dx, axis=1)
    g = np.linalg.norm(dxi, axis=1)
    blind = ((theta < c) | (theta > math.pi - c)) & (r >= EPS_X)
    blind |= (g == 0) & (r >= EPS_X)
    if v is None:
        return blind
    return blind | (g < v)


def pair_term_values(ens: Ensemble, i, j, selector: str, *, R=None, cone=None, x=None):
    """``w_i w_j term`` for index arrays ``i, j`` (self-pairs allowed)."""
    x = ens.x if x is None else x
    dx = x[i] - x[j]
    dxi = ens.xi[i] - ens.xi[j]
    ww = ens.w[i] * ens.w[j]
    r = np.linalg.norm(dx, axis=1)
    dv2 = np.einsum("ij,ij->i", dxi, dxi)
    dot = np.einsum("ij,ij->i", dx, dxi)
    far = r >= EPS_X
    safe_r = np.where(far, r, 1.0)
    if selector == "dot":
        t = dot
    elif selector == "rel_energy":
        t = dv2
    elif selector == "interaction_uncertainty":
        t = r * np.sqrt(dv2)
    elif selector == "localized_angular_momentum":
        t = np.where(far, dot / safe_r, 0.0)
    elif selector == "al_derivative":
        t = np.where(far, _cross_sq(dx, dxi) / (safe_r ** 3), 0.0)
    elif selector == "interaction_morawetz":
        t = np.where(r <= R, dv2, 0.0) / R
    elif selector == "sq_distance":
        t = r * r
    elif selector == "potential":
        t = np.where(far, 1.0 / safe_r, 0.0)
    elif selector == "gamma":
        t = in_cone_arrays(dx, dxi, cone.c, cone.v).astype(np.float64)
    else:
        raise ConfigError(f"unknown pair selector {selector!r}", key="selector")
    return ww * t


# --- exact reduction ----------------------------------------------------------

def _padded(a):
    out = np.zeros((a.shape[0], 3))
    out[:, :a.shape[1]] = a
    return out


@dataclass(frozen=True)
class PairSnapshot:
    """All exact pair sums at one instant."""

    dot: float
    rel_energy: float
    interaction_uncertainty: float
    localized_angular_momentum: float
    al_derivative: float
    interaction_morawetz: float
    sq_distance: float
    potential: float
    gamma: tuple = ()
    R: float = 1.0
    cones: tuple = ()

    @property
    def interaction_gap(self) -> float:
        return self.interaction_uncertainty - self.dot

    @property
    def init_data_bound(self) -> float:
        """``sum w w (|dx|^2 + |dxi|^2 - dx.dxi)``."""
        return self.sq_distance + self.rel_energy - self.dot


def exact_pair_sums(ens: Ensemble, R: float = 1.0, cones=()) -> PairSnapshot:
    """Every pair functional at once by one O(N^2) sweep."""
    _require_nonempty(ens)
    if not R > 0:
        raise DomainError("R must be positive")
    cones = tuple(cones)
    tan2c = np.array([math.tan(cn.c) ** 2 for cn in cones], dtype=np.float64)
    vs = np.array([cn.v for cn in cones], dtype=np.float64)
    rows = _pairs.pair_rows(_padded(ens.x), _padded(ens.xi), ens.w, float(R), tan2c, vs, EPS_X)
    tri = fsum_columns(rows)
    total = 2.0 * tri
    self_mass = math.fsum(ens.w * ens.w)
    base = total[:_pairs.NBASE]
    base[_pairs.IMORAWETZ] /= R
    gamma = tuple(float(g + self_mass) for g in total[_pairs.NBASE:])
    return PairSnapshot(*map(float, base), gamma=gamma, R=float(R), cones=cones)


# --- the reduction engine -----------------------------------------------------

def pair_reduce(ens: Ensemble, selector: str, strategy: PairReduceStrategy = EXACT, *,
                R: float | None = None, cone: ConeSpec | None = None,
                counter: int = 0, master_seed: int = 0) -> PairEstimate:
    """Sum of a pair term over all ordered pairs.

    ``exact``: deterministic O(N^2) sweep.  ``subsample``: ``pairs_per_eval``
    distinct ordered pairs (diagonal included) drawn uniformly without
    replacement; the estimate ``N^2 * mean`` is unbiased and the standard
    error carries the finite-population correction, so a full enumeration
    reproduces the exact sum with zero error.  ``counter`` selects an
    independent block of the subsampling stream.
    """
    if selector not in SELECTORS:
        raise ConfigError(f"unknown pair selector {selector!r}", key="selector")
    if selector == "interaction_morawetz" and not (R is not None and R > 0):
        raise DomainError("interaction_morawetz needs a positive R")
    if selector == "gamma" and cone is None:
        raise DomainError("gamma needs a ConeSpec")
    _require_nonempty(ens)
    N = ens.size
    population = N * N
    if strategy.kind == "subsample" and strategy.pairs_per_eval > population:
        log.info("pairs_per_eval=%d exceeds N^2=%d; using exact reduction",
                 strategy.pairs_per_eval, population)
        strategy = EXACT
    if strategy.kind == "exact":
        snap = exact_pair_sums(ens, R if R is not None else 1.0, (cone,) if cone else ())
        value = snap.gamma[0] if selector == "gamma" else getattr(snap, selector)
        return PairEstimate(value, 0.0, population, True)

    m = strategy.pairs_per_eval
    rng = RNGStream(master_seed, strategy.label).generator(counter)
    flat = rng.choice(population, size=m, replace=False) if m < population else np.arange(population)
    x = ens.x
    terms = np.concatenate([
        pair_term_values(ens, flat[s:s + strategy.chunk_size] // N,
                         flat[s:s + strategy.chunk_size] % N, selector, R=R, cone=cone, x=x)
        for s in range(0, m, strategy.chunk_size)
    ])
    mean = math.fsum(terms) / m
    value = population * mean
    if m > 1:
        var = math.fsum((terms - mean) ** 2) / (m - 1)
        fpc = max(0.0, 1.0 - m / population)
        se = population * math.sqrt(var / m * fpc)
    else:
        se = math.inf
    return PairEstimate(value, se, m, m == population)


def pair_localized_angular_momentum(ens, strategy=EXACT) -> float:
    """``A_L = sum w w (dx/|dx|).dxi`` (coincident pairs skipped)."""
    return pair_reduce(ens, "localized_angular_momentum", strategy).value


def pair_dot(ens, strategy=EXACT) -> float:
    """``D = sum w w dx.dxi``."""
    return pair_reduce(ens, "dot", strategy).value


def pair_rel_energy(ens, strategy=EXACT) -> float:
    """``E_rel = sum w w |dxi|^2`` (equals ``2 M E - 2 |V|^2``)."""
    return pair_reduce(ens, "rel_energy", strategy).value


def interaction_uncertainty(ens, strategy=EXACT) -> float:
    """``U_I = sum w w |dx||dxi|``."""
    return pair_reduce(ens, "interaction_uncertainty", strategy).value


def interaction_gap(ens, strategy=EXACT) -> float:
    """``U_I - D``, nonnegative by Cauchy-Schwarz per pair."""
    if strategy.kind == "exact":
        return exact_pair_sums(ens).interaction_gap
    return interaction_uncertainty(ens, strategy) - pair_dot(ens, strategy)


def al_derivative_integrand(ens, strategy=EXACT) -> float:
    """``sum w w |dxi|^2 sin^2(theta) / |dx|``, the free-transport rate of ``A_L``."""
    return pair_reduce(ens, "al_derivative", strategy).value


def interaction_morawetz_increment(ens, R: float, strategy=EXACT) -> float:
    """``(1/R) sum_{|dx| <= R} w w |dxi|^2``."""
    if not R > 0:
        raise DomainError("R must be positive")
    return pair_reduce(ens, "interaction_morawetz", strategy, R=R).value


def gamma_pair_mass(ens, cone: ConeSpec, strategy=EXACT) -> float:
    """Pair mass whose relative velocity lies in the punctured blind cone."""
    return pair_reduce(ens, "gamma", strategy, cone=cone).value


# --- cone geometry ------------------------------------------------------------

def angle_between(a, b) -> float:
    """Angle in ``[0, pi]`` via ``atan2(|a x b|, a.b)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.arctan2(math.sqrt(_cross_sq(a[None], b[None])[0]), np.dot(a, b)))


def in_blind_cone(x0, xi0, x, xi, c: float) -> bool:
    """True iff the angle between ``x - x0`` and ``xi - xi0`` avoids ``[c, pi - c]``.

    A zero relative velocity counts as angle 0 (inside).
    """
    dx = np.asarray(x, dtype=np.float64) - np.asarray(x0, dtype=np.float64)
    dxi = np.asarray(xi, dtype=np.float64) - np.asarray(xi0, dtype=np.float64)
    if not np.any(dx):
        raise DomainError("blind cone direction undefined at x == x0")
    if not np.any(dxi):
        return True
    theta = angle_between(dx, dxi)
    return not (c <= theta <= math.pi - c)


def in_punctured_cone(x0, xi0, x, xi, cone: ConeSpec) -> bool:
    """Blind cone united with the open velocity ball ``|xi - xi0| < v``."""
    g = float(np.linalg.norm(np.asarray(xi, float) - np.asarray(xi0, float)))
    if g < cone.v:
        return True
    if not np.any(np.asarray(x, float) - np.asarray(x0, float)):
        return False
    return in_blind_cone(x0, xi0, x, xi, cone.c)


# --- geometric verification ---------------------------------------------------

def observers(R: float, n: int) -> np.ndarray:
    """Three maximally separated points of the sphere ``|x| = R`` (equilateral)."""
    ang = 2.0 * math.pi * np.arange(3) / 3.0
    O = np.zeros((3, n))
    O[:, 0] = R * np.cos(ang)
    O[:, 1] = R * np.sin(ang)
    return O


def _uniform_ball(rng, m, n, R):
    d = rng.standard_normal((m, n))
    d /= np.linalg.norm(d, axis=1)[:, None]
    return d * (R * rng.random(m) ** (1.0 / n))[:, None]


def _uniform_sphere(rng, m, n):
    d = rng.standard_normal((m, n))
    return d / np.linalg.norm(d, axis=1)[:, None]


@dataclass(frozen=True)
class CoverReport:
    R: float
    c: float
    n_samples: int
    checks: int
    triple_hits: int
    witness: tuple | None
    degenerate: bool
    observers: tuple = field(default=(), repr=False)

    @property
    def empty_intersection(self) -> bool:
        return self.triple_hits == 0


def verify_three_observer_cover(R: float, c: float, xi0, n_samples: int, seed: int,
                                speeds=(0.5, 1.0, 2.0), chunk: int = 200_000) -> CoverReport:
    """Search for points lying in the blind cones of all three observers.

    Samples ``x`` uniformly in the ball of radius ``R`` and, for every speed,
    a direction ``xi = xi0 + speed * u`` with ``u`` uniform on the sphere.
    A zero relative velocity is in every cone by convention; the report
    flags that case as degenerate.
    """
    if not (R > 0 and 0 < c < math.pi / 2):
        raise DomainError("need R > 0 and 0 < c < pi/2")
    xi0 = np.asarray(xi0, dtype=np.float64)
    n = xi0.shape[0]
    O = observers(R, n)
    rng = RNGStream(int(seed), "three_observer_cover").generator()
    hits = 0
    checks = 0
    witness = None
    degenerate = False
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        done += m
        x = _uniform_ball(rng, m, n, R)
        for s in speeds:
            dxi = s * _uniform_sphere(rng, m, n)
            if s == 0:
                degenerate = True
            inside = np.ones(m, dtype=bool)
            for k in range(3):
                dx = x - O[k]
                blind = in_cone_arrays(dx, dxi, c)
                blind |= ~np.any(dxi, axis=1)
                inside &= blind
            checks += m
            cnt = int(inside.sum())
            if cnt and witness is None:
                idx = int(np.argmax(inside))
                witness = (tuple(x[idx]), tuple(xi0 + dxi[idx]))
            hits += cnt
    return CoverReport(float(R), float(c), int(n_samples), checks, hits, witness,
                       degenerate, tuple(map(tuple, O)))


@dataclass(frozen=True)
class NRInequalityReport:
    cone: ConeSpec
    n_pairs: int
    violations: int
    min_ratio: float
    constant: float


def verify_nr_inequality(cone: ConeSpec, n_pairs: int, seed: int, n: int = 2,
                         extra_pairs=None, chunk: int = 200_000) -> NRInequalityReport:
    """Pointwise check of ``|dx||dxi| - dx.dxi >= R v (1 - cos c)`` on ``N_R``.

    Pairs are drawn with ``|dx|`` log-uniform on ``(R, 100 R]``, ``|dxi|``
    log-uniform on ``[v, 100 v]`` and the relative angle uniform on
    ``[c, pi - c]``; a quarter of them are pinned to the boundary values
    ``|dx| = R``, ``|dxi| = v`` and ``theta = c``.  Rounding puts some pinned
    pairs just outside ``N_R``; those are discarded and sampling continues
    until ``n_pairs`` pairs inside ``N_R`` have been tested.  ``extra_pairs``
    may add ``(dx, dxi)`` arrays (e.g. from a simulated ensemble); only those
    inside ``N_R`` are tested, on top of the ``n_pairs``.
    """
    if n_pairs < 1:
        raise DomainError("n_pairs must be >= 1")
    rng = RNGStream(int(seed), "nr_inequality").generator()
    const = cone.nr_constant
    viol = 0
    tested = 0
    min_ratio = math.inf

    def test(dx, dxi, limit=None):
        nonlocal viol, tested, min_ratio
        r = np.linalg.norm(dx, axis=1)
        g = np.linalg.norm(dxi, axis=1)
        inside_nr = (r > cone.R) & ~in_cone_arrays(dx, dxi, cone.c, cone.v)
        gap = (r * g - np.einsum("ij,ij->i", dx, dxi))[inside_nr][:limit]
        tested += gap.size
        viol += int(np.sum(gap < const))
        if gap.size:
            min_ratio = min(min_ratio, float(gap.min() / const))

    while tested < n_pairs:
        m = chunk
        r = cone.R * np.exp(rng.uniform(0, math.log(100.0), m))
        g = cone.v * np.exp(rng.uniform(0, math.log(100.0), m))
        th = rng.uniform(cone.c, math.pi - cone.c, m)
        q = m // 4
        # boundary: just outside the ball / radius, at the cone edge
        r[:q] = np.nextafter(cone.R, math.inf)
        g[q:2 * q] = cone.v
        th[2 * q:3 * q] = np.nextafter(cone.c, math.pi)
        e = _uniform_sphere(rng, m, n)
        p = _uniform_sphere(rng, m, n)
        p -= np.einsum("ij,ij->i", p, e)[:, None] * e
        p /= np.linalg.norm(p, axis=1)[:, None]
        dx = r[:, None] * e
        dxi = g[:, None] * (np.cos(th)[:, None] * e + np.sin(th)[:, None] * p)
        test(dx, dxi, n_pairs - tested)
    if extra_pairs is not None:
        test(*extra_pairs)
    return NRInequalityReport(cone, tested, viol, min_ratio, const)
