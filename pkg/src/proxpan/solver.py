"""Alternating proximal-gradient solver for the CSC pansharpening objective.

Each sweep updates ``u``, then ``v``, then ``c`` (using the fresh ``u`` and
``v``) with one gradient step on the corresponding quadratic data term
followed by soft thresholding. Step sizes default to the inverse squared
operator norm of the relevant filter bank, estimated by power iteration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, ShapeError
from .model import (
    FeatureTriple,
    PriorWeights,
    build_joint,
    joint_bank,
    objective_value,
    synthesize_ms,
    synthesize_pan,
)
from .raster import conv2d_adjoint, conv2d_same

logger = logging.getLogger(__name__)

AUTO = "auto"


@dataclass(frozen=True)
class SolverConfig:
    weights: PriorWeights = PriorWeights()
    steps: object = AUTO  # "auto" or a (eta1, eta2, eta3) triple
    max_sweeps: int = 100
    rel_tol: float = 0.0
    track_objective: bool = True
    power_iters: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.steps != AUTO:
            if len(self.steps) != 3 or min(self.steps) <= 0:
                raise ValueError(f"explicit steps must be three positive reals, got {self.steps}")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be nonnegative")
        if self.max_sweeps < 0:
            raise ValueError("max_sweeps must be nonnegative")


@dataclass
class SolverTrace:
    """Objective before the first sweep followed by one value per sweep."""

    objective_per_sweep: list = field(default_factory=list)
    sweeps_run: int = 0
    converged: bool = False


def gradient_u(c, u, pair, banks):
    """Gradient of the halved PAN misfit with respect to ``u``."""
    residual = synthesize_pan(c, u, banks) - pair.pan
    return conv2d_adjoint(residual, banks.d_unique)


def gradient_v(c, v, pair, banks):
    """Gradient of the halved MS misfit with respect to ``v``."""
    residual = synthesize_ms(c, v, banks) - pair.ms_up
    return conv2d_adjoint(residual, banks.h_unique)


def gradient_c(c, n, l_common):
    """Gradient of ``0.5 * ||n - l_common * c||^2`` with respect to ``c``."""
    if np.shape(n)[-1] != np.shape(l_common)[3]:
        raise ShapeError(
            f"joint target has {np.shape(n)[-1]} bands, joint bank produces {np.shape(l_common)[3]}"
        )
    return conv2d_adjoint(conv2d_same(c, l_common) - n, l_common)


def soft_threshold(x, tau):
    """Proximal operator of ``tau * |.|``: ``sign(x) * max(|x| - tau, 0)``."""
    if np.any(np.asarray(tau) < 0):
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    x = np.asarray(x)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0)


def estimate_step_size(bank, iters=20, probe_dims=(32, 32), seed=0):
    """Return ``1 / sigma**2`` for the largest singular value of ``x -> conv2d_same(x, bank)``.

    ``sigma**2`` is the Rayleigh quotient of the normal operator after
    ``iters`` power iterations from a seeded Gaussian probe of spatial size
    ``probe_dims``; it increases monotonically with ``iters``. A zero bank
    has no finite Lipschitz constant and yields ``math.inf``.
    """
    if iters < 1:
        raise ValueError("iters must be at least 1")
    bank = np.asarray(bank, dtype=np.float64)
    if not np.any(bank):
        return math.inf
    h, w = probe_dims
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((h, w, bank.shape[2]))
    x /= np.linalg.norm(x)
    sigma2 = 0.0
    for _ in range(iters):
        ax = conv2d_same(x, bank)
        sigma2 = float(np.sum(ax * ax))
        x = conv2d_adjoint(ax, bank)
        nrm = np.linalg.norm(x)
        if nrm == 0:
            break
        x /= nrm
    if sigma2 == 0.0:
        return math.inf
    return 1.0 / sigma2


def auto_steps(banks, probe_dims, iters=20, seed=0):
    """Step sizes for the u, v and c updates from power iteration."""
    return (
        estimate_step_size(banks.d_unique, iters, probe_dims, seed),
        estimate_step_size(banks.h_unique, iters, probe_dims, seed),
        estimate_step_size(joint_bank(banks), iters, probe_dims, seed),
    )


def sweep(pair, features, banks, steps, weights):
    """One U, V, C proximal-gradient sweep."""
    eta1, eta2, eta3 = steps
    c, u, v = features.c, features.u, features.v
    u = soft_threshold(u - eta1 * gradient_u(c, u, pair, banks), eta1 * weights.lam1)
    v = soft_threshold(v - eta2 * gradient_v(c, v, pair, banks), eta2 * weights.lam2)
    n, l_common = build_joint(pair, FeatureTriple(c, u, v), banks)
    c = soft_threshold(c - eta3 * gradient_c(c, n, l_common), eta3 * weights.lam3)
    return FeatureTriple(c, u, v)


def solve(pair, banks, cfg=SolverConfig(), init=None):
    """Run alternating proximal-gradient sweeps from zero (or ``init``) features.

    Stops after ``cfg.max_sweeps`` sweeps or once the relative objective
    decrease of a sweep falls below ``cfg.rel_tol``.
    """
    h, w = pair.pan.shape[-3], pair.pan.shape[-2]
    if init is None:
        dtype = np.result_type(pair.pan, banks.d_common)
        init = FeatureTriple.zeros(pair.pan.shape[:-1] + (banks.count,), dtype)
    if cfg.steps == AUTO:
        steps = auto_steps(banks, (h, w), cfg.power_iters, cfg.seed)
        logger.debug("auto step sizes %s", steps)
    else:
        steps = tuple(cfg.steps)
    if not all(math.isfinite(s) for s in steps):
        raise ValueError(f"step sizes are unbounded for a zero filter bank: {steps}")

    features = init
    trace = SolverTrace()
    track = cfg.track_objective or cfg.rel_tol > 0
    prev = objective_value(pair, features, banks, cfg.weights) if track else None
    if track:
        trace.objective_per_sweep.append(prev)
    for k in range(1, cfg.max_sweeps + 1):
        features = sweep(pair, features, banks, steps, cfg.weights)
        trace.sweeps_run = k
        if not all(np.all(np.isfinite(f)) for f in (features.c, features.u, features.v)):
            raise DivergenceError(f"non-finite features after sweep {k}")
        if track:
            with np.errstate(over="ignore", invalid="ignore"):
                obj = objective_value(pair, features, banks, cfg.weights)
            trace.objective_per_sweep.append(obj)
            if not math.isfinite(obj):
                raise DivergenceError(f"non-finite objective after sweep {k}")
            if cfg.rel_tol > 0 and prev > 0 and (prev - obj) / prev < cfg.rel_tol:
                trace.converged = True
                break
            if prev == 0.0 and obj == 0.0:
                trace.converged = True
                break
            prev = obj
    return features, trace
