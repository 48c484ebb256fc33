"""Weighted-particle representation of the phase-space density.

An :class:`Ensemble` is the empirical measure ``sum_i w_i delta(x - x_i)
delta(xi - xi_i)``.  Positions are stored lazily as a reference position and
reference time per particle, ``x_i(t) = x_ref_i + (t - t_ref_i) xi_i``, so
free streaming is exact along characteristics and never accumulates
per-step rounding.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from ._reduce import DEFAULT_CHUNK, chunked_sum
from .errors import ConfigError, DomainError, InputError
from .rng import RNGStream

log = logging.getLogger(__name__)

SUPPORTED_DIMS = (2, 3)


@dataclass(frozen=True)
class Particle:
    x: tuple
    xi: tuple
    w: float


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Weighted particles at a common time ``t``.

    Construct with :meth:`from_arrays` or :meth:`from_particles`; the raw
    constructor expects the lazy-position fields.
    """

    x_ref: np.ndarray
    t_ref: np.ndarray
    xi: np.ndarray
    w: np.ndarray
    t: float = 0.0
    seed_lineage: tuple = ()

    def __post_init__(self):
        _validate_arrays(self.x_ref, self.xi, self.w)
        if self.t_ref.shape != self.w.shape:
            raise ConfigError("t_ref must have one entry per particle")
        if not np.isfinite(self.t):
            raise ConfigError("time must be finite")

    @classmethod
    def from_arrays(cls, x, xi, w, t: float = 0.0, seed_lineage=()) -> "Ensemble":
        x = np.array(x, dtype=np.float64, ndmin=2)
        xi = np.array(xi, dtype=np.float64, ndmin=2)
        w = np.array(w, dtype=np.float64, ndmin=1)
        return cls(x, np.full(w.shape, float(t)), xi, w, float(t), tuple(seed_lineage))

    @classmethod
    def from_particles(cls, particles: Sequence[Particle], t: float = 0.0) -> "Ensemble":
        if not particles:
            raise DomainError("cannot build an ensemble from zero particles")
        return cls.from_arrays(
            [p.x for p in particles], [p.xi for p in particles], [p.w for p in particles], t
        )

    @property
    def n(self) -> int:
        return self.xi.shape[1]

    @property
    def size(self) -> int:
        return self.xi.shape[0]

    def __len__(self):
        return self.size

    @property
    def x(self) -> np.ndarray:
        """Positions at the ensemble time."""
        return self.x_ref + (self.t - self.t_ref)[:, None] * self.xi

    def particles(self) -> list:
        x = self.x
        return [
            Particle(tuple(x[i]), tuple(self.xi[i]), float(self.w[i]))
            for i in range(self.size)
        ]

    def permuted(self, order) -> "Ensemble":
        order = np.asarray(order)
        return Ensemble(
            self.x_ref[order], self.t_ref[order], self.xi[order], self.w[order],
            self.t, self.seed_lineage,
        )

    def with_velocities(self, xi_new, changed=None) -> "Ensemble":
        """Replace velocities, re-anchoring positions of changed particles at ``t``."""
        x_ref = self.x_ref.copy()
        t_ref = self.t_ref.copy()
        if changed is None:
            changed = np.any(xi_new != self.xi, axis=1)
        if np.any(changed):
            x_ref[changed] = self.x[changed]
            t_ref[changed] = self.t
        return Ensemble(x_ref, t_ref, np.asarray(xi_new), self.w, self.t, self.seed_lineage)

    def at_time(self, t_new: float) -> "Ensemble":
        return Ensemble(self.x_ref, self.t_ref, self.xi, self.w, float(t_new), self.seed_lineage)


def _validate_arrays(x, xi, w):
    if x.ndim != 2 or xi.ndim != 2 or w.ndim != 1:
        raise ConfigError("positions/velocities must be (N, n) and weights (N,)")
    if x.shape != xi.shape or x.shape[0] != w.shape[0]:
        raise ConfigError(
            f"inconsistent shapes: x {x.shape}, xi {xi.shape}, w {w.shape}"
        )
    if x.shape[1] not in SUPPORTED_DIMS:
        raise ConfigError(f"dimension must be 2 or 3, got {x.shape[1]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi)) and np.all(np.isfinite(w))):
        raise ConfigError("particle coordinates and weights must be finite")
    if np.any(w < 0):
        raise ConfigError("particle weights must be nonnegative")
    if w.size and not w.sum() > 0:
        raise ConfigError("total mass must be positive")


# --- initial conditions -------------------------------------------------------

@dataclass(frozen=True)
class GaussianCloud:
    center_x: tuple = (0.0, 0.0)
    center_xi: tuple = (0.0, 0.0)
    sigma_x: float = 1.0
    sigma_xi: float = 1.0
    N: int = 1000
    total_mass: float = 1.0
    kind: str = field(default="gaussian_cloud", init=False)

    @property
    def n(self):
        return len(self.center_x)

    def validate(self):
        _check_common(self.N, self.total_mass, self.n)
        if len(self.center_xi) != self.n:
            raise ConfigError("center_x and center_xi differ in length", key="center_xi")
        _check_positive(sigma_x=self.sigma_x, sigma_xi=self.sigma_xi)


@dataclass(frozen=True)
class TwoBeam:
    """Two Gaussian beams at ``-/+ separation/2`` on the first axis.

    A positive ``beam_speed`` sends the beams toward each other; a negative
    one makes them recede.  ``N`` counts particles per beam and
    ``sigma_xi`` defaults to ``sigma``.
    """

    separation: float = 2.0
    beam_speed: float = 1.0
    sigma: float = 0.1
    N: int = 500
    total_mass: float = 1.0
    dim: int = 2
    sigma_xi: float | None = None
    kind: str = field(default="two_beam", init=False)

    @property
    def n(self):
        return self.dim

    def validate(self):
        _check_common(self.N, self.total_mass, self.dim)
        _check_positive(sigma=self.sigma)
        if self.sigma_xi is not None:
            _check_positive(sigma_xi=self.sigma_xi)
        if not np.isfinite(self.separation) or not np.isfinite(self.beam_speed):
            raise ConfigError("separation and beam_speed must be finite")


@dataclass(frozen=True)
class Ring:
    """Particles at uniform random angles on a circle, moving tangentially."""

    radius: float = 1.0
    speed: float = 1.0
    N: int = 1000
    total_mass: float = 1.0
    dim: int = 2
    kind: str = field(default="ring", init=False)

    @property
    def n(self):
        return self.dim

    def validate(self):
        _check_common(self.N, self.total_mass, self.dim)
        _check_positive(radius=self.radius)
        if not self.speed >= 0:
            raise ConfigError("speed must be nonnegative", key="speed")


@dataclass(frozen=True)
class FromFile:
    path: str
    kind: str = field(default="from_file", init=False)

    def validate(self):
        if not self.path:
            raise ConfigError("from_file requires a path", key="path")


InitSpec = Union[GaussianCloud, TwoBeam, Ring, FromFile]


def _check_common(N, total_mass, n):
    if int(N) != N or N < 1:
        raise ConfigError(f"N must be a positive integer, got {N!r}", key="N")
    if not total_mass > 0 or not np.isfinite(total_mass):
        raise ConfigError(f"total_mass must be positive, got {total_mass!r}", key="total_mass")
    if n not in SUPPORTED_DIMS:
        raise ConfigError(f"dimension must be 2 or 3, got {n}", key="dim")


def _check_positive(**params):
    for name, value in params.items():
        if not (value > 0 and np.isfinite(value)):
            raise ConfigError(f"{name} must be positive, got {value!r}", key=name)


def uniform_weights(N: int, total_mass: float) -> np.ndarray:
    """Equal weights with the rounding remainder folded into the last one."""
    w = np.full(N, total_mass / N)
    if N > 1:
        w[-1] = total_mass - chunked_sum(w[:-1])
    else:
        w[0] = total_mass
    return w


def make_ensemble(spec: InitSpec, master_seed: int) -> Ensemble:
    """Build the initial ensemble; a pure function of ``(spec, master_seed)``."""
    spec.validate()
    stream = RNGStream(int(master_seed), f"init/{spec.kind}")
    lineage = (f"master_seed={int(master_seed)}", f"stream={stream.label}")
    if isinstance(spec, FromFile):
        return load_csv(spec.path)
    rng = stream.generator()
    if isinstance(spec, GaussianCloud):
        n = spec.n
        x = np.asarray(spec.center_x, float) + spec.sigma_x * rng.standard_normal((spec.N, n))
        xi = np.asarray(spec.center_xi, float) + spec.sigma_xi * rng.standard_normal((spec.N, n))
        w = uniform_weights(spec.N, spec.total_mass)
    elif isinstance(spec, TwoBeam):
        n, N = spec.dim, spec.N
        sig_xi = spec.sigma if spec.sigma_xi is None else spec.sigma_xi
        e1 = np.zeros(n)
        e1[0] = 1.0
        side = np.concatenate([-np.ones(N), np.ones(N)])[:, None]
        x = side * (0.5 * spec.separation) * e1 + spec.sigma * rng.standard_normal((2 * N, n))
        xi = -side * spec.beam_speed * e1 + sig_xi * rng.standard_normal((2 * N, n))
        w = uniform_weights(2 * N, spec.total_mass)
    elif isinstance(spec, Ring):
        n, N = spec.dim, spec.N
        phi = rng.uniform(0.0, 2.0 * np.pi, N)
        x = np.zeros((N, n))
        xi = np.zeros((N, n))
        x[:, 0] = spec.radius * np.cos(phi)
        x[:, 1] = spec.radius * np.sin(phi)
        xi[:, 0] = -spec.speed * np.sin(phi)
        xi[:, 1] = spec.speed * np.cos(phi)
        w = uniform_weights(N, spec.total_mass)
    else:
        raise ConfigError(f"unknown initial condition {spec!r}", key="kind")
    return Ensemble.from_arrays(x, xi, w, 0.0, lineage)


# --- moments ------------------------------------------------------------------

@dataclass(frozen=True)
class Moments:
    M: float
    V: np.ndarray
    E: float


def _require_nonempty(ens: Ensemble):
    if ens.size == 0:
        raise DomainError("ensemble is empty")


def moments(ens: Ensemble, chunk_size: int = DEFAULT_CHUNK) -> Moments:
    """Total mass, momentum and energy ``sum w |xi|^2``."""
    _require_nonempty(ens)
    w = ens.w
    M = chunked_sum(w, chunk_size)
    V = chunked_sum(w[:, None] * ens.xi, chunk_size)
    E = chunked_sum(w * np.einsum("ij,ij->i", ens.xi, ens.xi), chunk_size)
    return Moments(M, V, E)


def localization(ens: Ensemble, chunk_size: int = DEFAULT_CHUNK) -> float:
    """Second spatial moment ``sum w |x|^2``."""
    _require_nonempty(ens)
    x = ens.x
    return chunked_sum(ens.w * np.einsum("ij,ij->i", x, x), chunk_size)


def center_of_mass_sum(ens: Ensemble, chunk_size: int = DEFAULT_CHUNK) -> np.ndarray:
    """``sum w x`` (first spatial moment)."""
    _require_nonempty(ens)
    return chunked_sum(ens.w[:, None] * ens.x, chunk_size)


# --- CSV I/O ------------------------------------------------------------------

def csv_header(n: int) -> list:
    return [f"x{k + 1}" for k in range(n)] + [f"xi{k + 1}" for k in range(n)] + ["w"]


def load_csv(path) -> Ensemble:
    """Read ``x1,..,xn,xi1,..,xin,w`` rows; the ensemble starts at ``t = 0``."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            rows = [row for row in reader if row and any(c.strip() for c in row)]
    except (OSError, StopIteration, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read particle file {path}: {exc}") from exc
    n = (len(header) - 1) // 2
    if n not in SUPPORTED_DIMS or header != csv_header(n):
        raise InputError(f"{path}: unexpected header {header}; expected {csv_header(2)} or {csv_header(3)}")
    try:
        data = np.array([[float(c) for c in row] for row in rows], dtype=np.float64)
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric entry ({exc})") from exc
    if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] != 2 * n + 1:
        raise InputError(f"{path}: expected {2 * n + 1} columns and at least one row")
    try:
        return Ensemble.from_arrays(
            data[:, :n], data[:, n:2 * n], data[:, 2 * n], 0.0, (f"file={path}",)
        )
    except ConfigError as exc:
        raise InputError(f"{path}: {exc}") from exc


def save_csv(ens: Ensemble, path) -> None:
    x = ens.x
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(csv_header(ens.n))
        for i in range(ens.size):
            writer.writerow([repr(float(v)) for v in (*x[i], *ens.xi[i], ens.w[i])])
