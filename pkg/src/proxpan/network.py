"""Unfolded proximal network: T stages of U-, V- and C-updates with learned proximal operators.

Each stage mirrors one sweep of :mod:`proxpan.solver` except that soft
thresholding is replaced by a small residual CNN (three blocks of
``x + conv(relu(conv(x)))``). Filter banks and the three step sizes are
shared by all stages; the residual CNNs are per stage.

Stage functions are written against :mod:`proxpan.autodiff` primitives so
that the same code runs on plain arrays (inference) and on a tape
(training).
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DivergenceError, RasterFormatError, ShapeError
from .model import AnalysisBanks, FeatureTriple, SynthesisBanks

CHECKPOINT_MAGIC = b"PPN1"
N_RES_BLOCKS = 3


@dataclass(frozen=True)
class NetworkConfig:
    """Shape hyperparameters. The prox-net width equals ``count``."""

    count: int = 8  # K
    size: int = 3  # s, analysis/synthesis kernel size
    bands: int = 4  # B
    prox_size: int = 3  # k_p
    stages: int = 2  # T

    def __post_init__(self):
        for name in ("count", "size", "bands", "prox_size", "stages"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ProxNetParams:
    """Three residual blocks; ``blocks[i] = (w1, w2)``, each ``(k_p, k_p, F, F)``."""

    blocks: tuple

    def __post_init__(self):
        if len(self.blocks) != N_RES_BLOCKS:
            raise ShapeError(f"a prox net has exactly {N_RES_BLOCKS} residual blocks")

    @property
    def width(self):
        return self.blocks[0][0].shape[2]


@dataclass(frozen=True)
class StageParams:
    theta_u: ProxNetParams
    theta_v: ProxNetParams
    theta_c: ProxNetParams


@dataclass(frozen=True)
class NetworkParams:
    analysis: AnalysisBanks
    synthesis: SynthesisBanks
    stages: tuple
    eta1: np.ndarray
    eta2: np.ndarray
    eta3: np.ndarray

    @property
    def config(self):
        a = self.analysis
        return NetworkConfig(
            count=a.count,
            size=a.size,
            bands=a.bands,
            prox_size=self.stages[0].theta_u.blocks[0][0].shape[0],
            stages=len(self.stages),
        )


# ---------------------------------------------------------------------------
# Parameter trees
# ---------------------------------------------------------------------------

def tree_leaves(tree):
    """Parameter tensors in checkpoint order (depth-first over dataclass fields and tuples)."""
    if dataclasses.is_dataclass(tree):
        out = []
        for f in dataclasses.fields(tree):
            out.extend(tree_leaves(getattr(tree, f.name)))
        return out
    if isinstance(tree, (tuple, list)):
        out = []
        for item in tree:
            out.extend(tree_leaves(item))
        return out
    return [tree]


def tree_unflatten(template, leaves):
    """Rebuild a tree shaped like ``template`` from ``leaves`` (inverse of :func:`tree_leaves`)."""
    it = iter(leaves)

    def build(node):
        if dataclasses.is_dataclass(node):
            return dataclasses.replace(
                node, **{f.name: build(getattr(node, f.name)) for f in dataclasses.fields(node)}
            )
        if isinstance(node, (tuple, list)):
            return type(node)(build(item) for item in node)
        return next(it)

    tree = build(template)
    if next(it, None) is not None:
        raise ValueError("too many leaves for template")
    return tree


def init_network(cfg=NetworkConfig(), seed=0, dtype=np.float32, eta=0.1):
    """Seeded initialization: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), step sizes = ``eta``."""
    rng = np.random.default_rng(seed)
    K, s, B, kp = cfg.count, cfg.size, cfg.bands, cfg.prox_size

    def bank(size, cin, cout):
        bound = 1.0 / np.sqrt(size * size * cin)
        return rng.uniform(-bound, bound, (size, size, cin, cout)).astype(dtype)

    def prox():
        return ProxNetParams(tuple((bank(kp, K, K), bank(kp, K, K)) for _ in range(N_RES_BLOCKS)))

    analysis = AnalysisBanks(bank(s, K, 1), bank(s, K, 1), bank(s, K, B), bank(s, K, B))
    synthesis = SynthesisBanks(bank(s, K, B), bank(s, K, B), bank(s, K, B))
    stages = tuple(StageParams(prox(), prox(), prox()) for _ in range(cfg.stages))
    e = np.asarray(eta, dtype=dtype)
    return NetworkParams(analysis, synthesis, stages, e.copy(), e.copy(), e.copy())


def zero_prox(params):
    """Copy of ``params`` with every prox-net weight set to zero (prox nets become identities)."""
    stages = tuple(
        StageParams(*(
            ProxNetParams(tuple((np.zeros_like(w1), np.zeros_like(w2)) for w1, w2 in p.blocks))
            for p in (st.theta_u, st.theta_v, st.theta_c)
        ))
        for st in params.stages
    )
    return dataclasses.replace(params, stages=stages)


def count_parameters(params):
    """Total number of learnable scalars."""
    return int(sum(np.size(leaf) for leaf in tree_leaves(params)))


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------

def prox_net_apply(x, p):
    """Three residual blocks ``x <- x + conv(relu(conv(x, w1)), w2)``."""
    width = p.width
    if x.shape[-1] != width:
        raise ShapeError(f"prox net expects {width} channels, got {x.shape[-1]}")
    for w1, w2 in p.blocks:
        x = x + ad.conv2d_same(ad.relu(ad.conv2d_same(x, w1)), w2)
    return x


def u_net_stage(pair, c_prev, u_prev, params, t):
    """PAN-unique feature update of stage ``t`` (0-based)."""
    a = params.analysis
    p_c = ad.conv2d_same(c_prev, a.d_common)
    p_u = ad.conv2d_same(u_prev, a.d_unique)
    eps_p = p_c + p_u - pair.pan
    grad = ad.conv2d_adjoint(eps_p, a.d_unique)
    u_half = u_prev - params.eta1 * grad
    return prox_net_apply(u_half, params.stages[t].theta_u)


def v_net_stage(pair, c_prev, v_prev, params, t):
    """MS-unique feature update of stage ``t`` (0-based)."""
    a = params.analysis
    m_c = ad.conv2d_same(c_prev, a.h_common)
    m_v = ad.conv2d_same(v_prev, a.h_unique)
    eps_m = m_c + m_v - pair.ms_up
    grad = ad.conv2d_adjoint(eps_m, a.h_unique)
    v_half = v_prev - params.eta2 * grad
    return prox_net_apply(v_half, params.stages[t].theta_v)


def c_net_stage(pair, c_prev, u_new, v_new, params, t):
    """Common feature update of stage ``t`` using this stage's fresh ``u`` and ``v``."""
    a = params.analysis
    l_common = ad.concat([a.d_common, a.h_common], axis=-1)
    n = ad.concat(
        [pair.pan - ad.conv2d_same(u_new, a.d_unique),
         pair.ms_up - ad.conv2d_same(v_new, a.h_unique)],
        axis=-1,
    )
    eps_c = ad.conv2d_same(c_prev, l_common) - n
    grad = ad.conv2d_adjoint(eps_c, l_common)
    c_half = c_prev - params.eta3 * grad
    return prox_net_apply(c_half, params.stages[t].theta_c)


def _finite(x):
    return bool(np.all(np.isfinite(ad._value(x))))


def network_forward(pair, params):
    """Run all stages from zero features and synthesize the HRMS image.

    Returns ``(o, features)`` with ``o`` of shape ``pan.shape[:-1] + (B,)``.
    """
    a = params.analysis
    if pair.ms_up.shape[-1] != a.bands:
        raise ShapeError(f"network expects {a.bands} MS bands, got {pair.ms_up.shape[-1]}")
    dtype = np.result_type(pair.pan.dtype, ad._value(a.d_common).dtype)
    zeros = np.zeros(pair.pan.shape[:-1] + (a.count,), dtype=dtype)
    c, u, v = zeros, zeros, zeros
    for t in range(len(params.stages)):
        u = u_net_stage(pair, c, u, params, t)
        v = v_net_stage(pair, c, v, params, t)
        c = c_net_stage(pair, c, u, v, params, t)
        if not (_finite(u) and _finite(v) and _finite(c)):
            raise DivergenceError(f"non-finite activations in stage {t}")
    g = params.synthesis
    o = (
        ad.conv2d_same(c, g.g_common)
        + ad.conv2d_same(u, g.g_unique_pan)
        + ad.conv2d_same(v, g.g_unique_ms)
    )
    return o, FeatureTriple(c, u, v)


def mse_loss(predicted, truth):
    """Sum over the batch of squared Frobenius errors."""
    if tuple(predicted.shape) != tuple(np.shape(truth)):
        raise ShapeError(f"prediction {predicted.shape} and truth {np.shape(truth)} differ")
    loss = ad.sum_squares(predicted - truth)
    return loss if isinstance(loss, ad.Var) else float(loss)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(params, path):
    """Write ``params`` as a PPN1 checkpoint.

    Layout: ``b"PPN1"``, a little-endian uint32 header length, a UTF-8 JSON
    header ``{"K", "s", "B", "k_p", "F", "T"}``, then every tensor as
    little-endian float32 in :func:`tree_leaves` order: ``d_common``,
    ``d_unique``, ``h_common``, ``h_unique``, ``g_common``, ``g_unique_pan``,
    ``g_unique_ms``, then per stage ``theta_u``, ``theta_v``, ``theta_c``
    (each block ``w1, w2`` in turn), then ``eta1, eta2, eta3``.
    """
    cfg = params.config
    header = json.dumps(
        {"K": cfg.count, "s": cfg.size, "B": cfg.bands, "k_p": cfg.prox_size,
         "F": cfg.count, "T": cfg.stages},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for leaf in tree_leaves(params):
            fh.write(np.ascontiguousarray(leaf, dtype="<f4").tobytes())


def load_checkpoint(path, dtype=np.float32):
    """Read a PPN1 checkpoint written by :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise RasterFormatError(f"{path}: not a PPN1 checkpoint")
    (hlen,) = struct.unpack_from("<I", data, 4)
    header = json.loads(data[8:8 + hlen].decode("utf-8"))
    cfg = NetworkConfig(count=header["K"], size=header["s"], bands=header["B"],
                        prox_size=header["k_p"], stages=header["T"])
    template = init_network(cfg, seed=0, dtype=np.float32)
    offset = 8 + hlen
    leaves = []
    for leaf in tree_leaves(template):
        n = np.size(leaf)
        if offset + 4 * n > len(data):
            raise RasterFormatError(f"{path}: checkpoint payload truncated")
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=offset)
        leaves.append(arr.reshape(np.shape(leaf)).astype(dtype))
        offset += 4 * n
    if offset != len(data):
        raise RasterFormatError(f"{path}: {len(data) - offset} trailing bytes in checkpoint")
    return tree_unflatten(template, leaves)
