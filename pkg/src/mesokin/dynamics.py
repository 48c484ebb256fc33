"""Time evolution: exact free streaming plus local conservative collisions.

A step is first-order operator splitting: stream every particle along its
characteristic for ``dt``, rebuild the cell index, then apply the collision
kernel cell by cell.  Both collision kernels conserve cell mass, momentum and
energy up to rounding.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import _collide
from .errors import ConfigError, DomainError, MajorantViolation
from .phase import Ensemble, moments
from .rng import RNGStream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NullKernel:
    kind: str = field(default="null", init=False)

    def validate(self):
        pass


@dataclass(frozen=True)
class HardSphereDSMC:
    """Hard-sphere DSMC with a no-time-counter majorant.

    ``on_majorant_violation`` is ``"abort"`` (raise) or ``"clamp"`` (accept
    the candidate with probability one and log).
    """

    cell_size: float
    rate_scale: float
    majorant_rel_speed: float
    on_majorant_violation: str = "abort"
    kind: str = field(default="hard_sphere_dsmc", init=False)

    def validate(self):
        if not self.cell_size > 0:
            raise ConfigError("cell_size must be positive", key="cell_size")
        if not self.rate_scale >= 0:
            raise ConfigError("rate_scale must be nonnegative", key="rate_scale")
        if not self.majorant_rel_speed > 0:
            raise ConfigError("majorant_rel_speed must be positive", key="majorant_rel_speed")
        if self.on_majorant_violation not in ("abort", "clamp"):
            raise ConfigError(
                "on_majorant_violation must be 'abort' or 'clamp'", key="on_majorant_violation"
            )


@dataclass(frozen=True)
class Thermalize:
    """Relaxation of cells to a Gaussian with the cell's own moments at rate ``rate``."""

    cell_size: float
    rate: float
    kind: str = field(default="thermalize", init=False)

    def validate(self):
        if not self.cell_size > 0:
            raise ConfigError("cell_size must be positive", key="cell_size")
        if not self.rate >= 0:
            raise ConfigError("rate must be nonnegative", key="rate")


KernelConfig = Union[NullKernel, HardSphereDSMC, Thermalize]


def _cell_groups(ic: np.ndarray):
    """Stable lexicographic order of integer rows and the group head positions.

    When the coordinate span allows, each row and its index are packed into
    one unique int64 key; a plain sort of those keys is several times faster
    than ``np.lexsort``.
    """
    N = ic.shape[0]
    if N == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    lo = ic.min(axis=0)
    span = ic.max(axis=0) - lo + 1
    if float(np.prod(span.astype(np.float64))) * N >= 2.0**62:
        order = np.lexsort(ic.T[::-1])
        sorted_ic = ic[order]
        new = np.any(sorted_ic[1:] != sorted_ic[:-1], axis=1)
    else:
        key = np.zeros(N, dtype=np.int64)
        for k in range(ic.shape[1]):
            key = key * span[k] + (ic[:, k] - lo[k])
        packed = np.sort(key * N + np.arange(N, dtype=np.int64))
        order = packed % N
        cell = packed // N
        new = cell[1:] != cell[:-1]
    heads = np.concatenate([[0], np.flatnonzero(new) + 1]).astype(np.int64)
    return order.astype(np.int64), heads


@dataclass(frozen=True, eq=False)
class CellIndexing:
    """Particles grouped by integer cell ``floor(x / h)``.

    ``order[starts[c]:starts[c + 1]]`` lists the particles of cell
    ``coords[c]`` in ascending particle index.
    """

    cell_size: float
    order: np.ndarray
    starts: np.ndarray
    coords: np.ndarray

    @classmethod
    def build(cls, x: np.ndarray, h: float) -> "CellIndexing":
        scaled = np.floor(x / h)
        if scaled.size and not np.max(np.abs(scaled)) < 2.0**62:
            raise DomainError("positions exceed the integer cell range; enlarge cell_size")
        ic = scaled.astype(np.int64)
        order, heads = _cell_groups(ic)
        starts = np.append(heads, len(order)).astype(np.int64)
        return cls(float(h), order, starts, np.ascontiguousarray(ic[order[heads]]))

    @property
    def n_cells(self) -> int:
        return len(self.starts) - 1

    def cell_members(self, c: int) -> np.ndarray:
        return self.order[self.starts[c]:self.starts[c + 1]]

    def as_dict(self) -> dict:
        return {tuple(int(v) for v in self.coords[c]): self.cell_members(c).tolist()
                for c in range(self.n_cells)}


@dataclass(frozen=True)
class CollisionStats:
    """Counters for one or more collision substeps.

    ``transfer`` is the total absolute momentum change ``sum w |dxi|`` and
    ``jump`` bounds the resulting change of ``sum w x.xi`` caused by
    colliding particles at different positions.
    """

    candidates: int = 0
    accepted: int = 0
    max_pair_distance: float = 0.0
    drift_M: float = 0.0
    drift_V: float = 0.0
    drift_E: float = 0.0
    transfer: float = 0.0
    jump: float = 0.0
    majorant_violations: int = 0
    max_normal_speed: float = 0.0
    unequal_skipped: int = 0
    degenerate_skipped: int = 0

    def merge(self, other: "CollisionStats") -> "CollisionStats":
        return CollisionStats(
            self.candidates + other.candidates,
            self.accepted + other.accepted,
            max(self.max_pair_distance, other.max_pair_distance),
            max(self.drift_M, other.drift_M),
            max(self.drift_V, other.drift_V),
            max(self.drift_E, other.drift_E),
            self.transfer + other.transfer,
            self.jump + other.jump,
            self.majorant_violations + other.majorant_violations,
            max(self.max_normal_speed, other.max_normal_speed),
            self.unequal_skipped + other.unequal_skipped,
            self.degenerate_skipped + other.degenerate_skipped,
        )

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _stats_from_cells(cells: np.ndarray) -> CollisionStats:
    if cells.shape[0] == 0:
        return CollisionStats()
    C = _collide
    return CollisionStats(
        candidates=int(cells[:, C.CAND].sum()),
        accepted=int(cells[:, C.ACC].sum()),
        max_pair_distance=float(cells[:, C.MAXDIST].max()),
        drift_M=0.0,  # weights never change
        drift_V=float(cells[:, C.DV].max()),
        drift_E=float(cells[:, C.DE].max()),
        transfer=math.fsum(cells[:, C.TRANSFER]),
        jump=math.fsum(cells[:, C.JUMP]),
        majorant_violations=int(cells[:, C.VIOL].sum()),
        max_normal_speed=float(cells[:, C.MAXA].max()),
        unequal_skipped=int(cells[:, C.UNEQUAL].sum()),
        degenerate_skipped=int(cells[:, C.DEGEN].sum()),
    )


def free_stream(ens: Ensemble, dt: float) -> Ensemble:
    """Move every particle along its characteristic: ``x <- x + dt xi``."""
    if not dt >= 0:
        raise DomainError(f"dt must be nonnegative, got {dt!r}")
    return ens.at_time(ens.t + dt)


def stream_to(ens: Ensemble, t_new: float) -> Ensemble:
    """Free streaming to an absolute time (avoids summing step sizes)."""
    if not t_new >= ens.t:
        raise DomainError(f"cannot stream backwards from t={ens.t} to {t_new}")
    return ens.at_time(t_new)


def _check_dt(dt):
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt!r}")


def collision_rule(xi, xi_star, normal, w=1.0, w_star=1.0):
    """Post-collision velocities for unit normal ``normal``.

    Equal weights give ``xi - a n`` and ``xi_star + a n`` with
    ``a = n.(xi - xi_star)``; unequal weights use the reduced-mass form,
    which conserves ``w xi + w_star xi_star`` and the weighted energy.
    """
    xi = np.asarray(xi, dtype=np.float64)
    xi_star = np.asarray(xi_star, dtype=np.float64)
    nrm = np.asarray(normal, dtype=np.float64)
    a = float(nrm @ (xi - xi_star))
    total = w + w_star
    return xi - (2.0 * w_star / total) * a * nrm, xi_star + (2.0 * w / total) * a * nrm


def collide_hard_sphere(ens: Ensemble, cfg: HardSphereDSMC, dt: float,
                        stream: RNGStream, step_index: int = 0):
    """One hard-sphere collision substep; positions and weights unchanged."""
    if not isinstance(cfg, HardSphereDSMC):
        raise ConfigError("collide_hard_sphere requires a HardSphereDSMC config", key="kind")
    cfg.validate()
    _check_dt(dt)
    x = ens.x
    cells = CellIndexing.build(x, cfg.cell_size)
    xi = ens.xi.copy()
    changed = np.zeros(ens.size, dtype=np.bool_)
    k0, k1 = stream.key32()
    clamp = cfg.on_majorant_violation == "clamp"
    per_cell = _collide.hard_sphere_cells(
        x, xi, ens.w, cells.order, cells.starts, cells.coords, cfg.cell_size,
        cfg.rate_scale, cfg.majorant_rel_speed, dt, np.uint32(step_index & 0xFFFFFFFF),
        k0, k1, clamp, changed,
    )
    stats = _stats_from_cells(per_cell)
    if stats.majorant_violations:
        msg = (f"{stats.majorant_violations} candidate(s) exceeded majorant "
               f"g_max={cfg.majorant_rel_speed} (max |n.g| = {stats.max_normal_speed:.6g}) "
               f"at t={ens.t}")
        if not clamp:
            raise MajorantViolation(msg, stats.majorant_violations, stats.max_normal_speed)
        log.warning("%s; clamped", msg)
    if stats.unequal_skipped:
        log.warning("%d unequal-weight candidate pairs skipped", stats.unequal_skipped)
    return ens.with_velocities(xi, changed), stats


def collide_thermalize(ens: Ensemble, cfg: Thermalize, dt: float,
                       stream: RNGStream, step_index: int = 0):
    """Cellwise moment-preserving resampling with probability ``rate * dt``."""
    if not isinstance(cfg, Thermalize):
        raise ConfigError("collide_thermalize requires a Thermalize config", key="kind")
    cfg.validate()
    _check_dt(dt)
    prob = cfg.rate * dt
    if prob > 1:
        raise DomainError(f"rate * dt must be <= 1, got {prob}")
    if prob == 0:
        return ens, CollisionStats()
    x = ens.x
    cells = CellIndexing.build(x, cfg.cell_size)
    xi = ens.xi.copy()
    changed = np.zeros(ens.size, dtype=np.bool_)
    k0, k1 = stream.key32()
    per_cell = _collide.thermalize_cells(
        x, xi, ens.w, cells.order, cells.starts, cells.coords, prob,
        np.uint32(step_index & 0xFFFFFFFF), k0, k1, changed,
    )
    stats = _stats_from_cells(per_cell)
    if stats.degenerate_skipped:
        log.warning("%d degenerate cells skipped after %d redraws",
                    stats.degenerate_skipped, _collide.MAX_REDRAWS)
    return ens.with_velocities(xi, changed), stats


def collide(ens, kernel: KernelConfig, dt, stream, step_index=0):
    if isinstance(kernel, NullKernel):
        _check_dt(dt)
        return ens, CollisionStats()
    if isinstance(kernel, HardSphereDSMC):
        return collide_hard_sphere(ens, kernel, dt, stream, step_index)
    if isinstance(kernel, Thermalize):
        return collide_thermalize(ens, kernel, dt, stream, step_index)
    raise ConfigError(f"unknown kernel {kernel!r}", key="kind")


def step(ens: Ensemble, kernel: KernelConfig, dt: float, stream: RNGStream,
         step_index: int = 0, t_new: float | None = None):
    """Stream for ``dt`` then collide; returns ``(ensemble, stats)``.

    ``t_new`` pins the post-step time exactly (the harness passes
    ``(step_index + 1) * dt`` so times never drift).
    """
    _check_dt(dt)
    streamed = free_stream(ens, dt) if t_new is None else stream_to(ens, t_new)
    return collide(streamed, kernel, dt, stream, step_index)


@dataclass(frozen=True)
class MomentDriftReport:
    trials: int
    max_cell_drift_M: float
    max_cell_drift_V: float
    max_cell_drift_E: float
    max_global_drift_M: float
    max_global_drift_V: float
    max_global_drift_E: float
    total_accepted: int
    tolerance: float = 1e-12

    @property
    def max_drift(self) -> float:
        return max(self.max_cell_drift_M, self.max_cell_drift_V, self.max_cell_drift_E,
                   self.max_global_drift_M, self.max_global_drift_V, self.max_global_drift_E)

    @property
    def ok(self) -> bool:
        return self.max_drift <= self.tolerance


def global_drift(before, after):
    """Relative (mass, momentum, energy) drift between two :class:`Moments`."""
    dM = abs(after.M - before.M) / before.M
    scale = math.sqrt(before.M * before.E)
    dV = float(np.max(np.abs(after.V - before.V)))
    dV = dV / scale if scale > 0 else dV
    dE = abs(after.E - before.E) / before.E if before.E > 0 else abs(after.E - before.E)
    return dM, dV, dE


def verify_mesoscopic(ens: Ensemble, kernel: KernelConfig, dt: float, trials: int,
                      seed: int) -> MomentDriftReport:
    """Run ``trials`` independent collision substeps from the same state.

    Reports the worst per-cell and global relative drift of mass, momentum
    and energy; violations are carried in the report, never raised.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    stream = RNGStream(int(seed), "verify_mesoscopic")
    before = moments(ens)
    cell = np.zeros(3)
    glob = np.zeros(3)
    accepted = 0
    for trial in range(trials):
        after_ens, stats = collide(ens, kernel, dt, stream, trial)
        cell = np.maximum(cell, [stats.drift_M, stats.drift_V, stats.drift_E])
        glob = np.maximum(glob, global_drift(before, moments(after_ens)))
        accepted += stats.accepted
    return MomentDriftReport(trials, *map(float, cell), *map(float, glob), accepted)
