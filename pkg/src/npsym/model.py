"""Message-passing point-cloud classifiers built on the autodiff engine.

Three stages of pairwise message passing over the complete graph of the 30
input points, followed by an MLP head on pooled features. Two geometry
conventions select what the messages may see:

* inhomogeneous (full rigid motions): messages read squared pair distances
  and coordinates update along difference vectors, so every layer commutes
  with rotations and translations;
* homogeneous (origin-fixing groups): messages additionally read pairwise
  inner products, and coordinates update along neighbour directions, which
  commutes with the linear group action but not with translations.

Pair quantities are computed under the group's metric: the full Euclidean
one, or the xy-only metric for the axial group, which simply ignores z in
distances and inner products. The degenerate metric alone would hide both
the z heights and (self-pairs being excluded) the individual xy radii, yet
every one of those is invariant under rotations about z and vertical
mirrors; the axial group's messages therefore read the squared xy radii
and the z components of both endpoints alongside the two pair scalars.

The invariant classifier pools only per-stage means of the scalar features
(3 x 64 readout); the equivariant one appends per-stage mean coordinates
(+9). Scalar channels are 64 wide, messages 64, all edge/coordinate/node
MLPs have two hidden layers of 60, the head two of 64. The first stage has
no input scalars: its edge MLP sees geometry only, its node MLP only the
aggregated message. The invariant forward skips the third-stage coordinate
update (nothing downstream reads it), but the parameter record still
allocates that MLP so both variants share the stage layout.

Weights are Xavier-uniform in a fixed traversal order from a seeded
generator; biases start at zero. Checkpoints serialise the config plus the
raw float64 parameter buffer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DataFormatError, InputError
from .groups import GroupTag, metric_for_group
from .shapes import N_POINTS

H_DIM = 64
MSG_DIM = 64
MLP_HIDDEN = 60
HEAD_HIDDEN = 64
N_STAGES = 3

CKPT_MAGIC = "npsym-ckpt v1"

VARIANTS = ("invariant", "equivariant")


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    group: GroupTag
    n_points: int = N_POINTS

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InputError(f"unknown variant {self.variant!r}; expected "
                             f"one of {VARIANTS}")

    @property
    def homogeneous(self) -> bool:
        # origin-fixing groups act linearly, so raw inner products are usable
        return self.group in (GroupTag.O3, GroupTag.O2Z)

    @property
    def geom_dim(self) -> int:
        # the axial group's pair scalars miss z and the per-point xy radii,
        # so its edges carry four extra invariant inputs
        if self.group is GroupTag.O2Z:
            return 6
        return 2 if self.homogeneous else 1

    @property
    def readout_dim(self) -> int:
        base = N_STAGES * H_DIM
        return base + N_STAGES * 3 if self.variant == "equivariant" else base

    def to_dict(self) -> dict:
        return {"variant": self.variant, "group": self.group.value,
                "n_points": self.n_points}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        try:
            return cls(variant=d["variant"], group=GroupTag.parse(d["group"]),
                       n_points=int(d["n_points"]))
        except KeyError as exc:
            raise DataFormatError(f"model config missing key {exc}") from exc


def _mlp_spec(in_dim, hidden, out_dim):
    return [(in_dim, hidden), (hidden, hidden), (hidden, out_dim)]


def param_layout(config: ModelConfig) -> list:
    """Ordered (name, shape) pairs; the order is the init and ckpt order."""
    layout = []

    def mlp(prefix, dims):
        for i, (fi, fo) in enumerate(dims):
            layout.append((f"{prefix}.w{i}", (fi, fo)))
            layout.append((f"{prefix}.b{i}", (fo,)))

    g = config.geom_dim
    for s in range(N_STAGES):
        p = f"stage{s}"
        if s == 0:
            layout.append((f"{p}.edge.wg", (g, MLP_HIDDEN)))
            layout.append((f"{p}.edge.b0", (MLP_HIDDEN,)))
        else:
            layout.append((f"{p}.edge.wi", (H_DIM, MLP_HIDDEN)))
            layout.append((f"{p}.edge.wj", (H_DIM, MLP_HIDDEN)))
            layout.append((f"{p}.edge.wg", (g, MLP_HIDDEN)))
            layout.append((f"{p}.edge.b0", (MLP_HIDDEN,)))
        layout.append((f"{p}.edge.w1", (MLP_HIDDEN, MLP_HIDDEN)))
        layout.append((f"{p}.edge.b1", (MLP_HIDDEN,)))
        layout.append((f"{p}.edge.w2", (MLP_HIDDEN, MSG_DIM)))
        layout.append((f"{p}.edge.b2", (MSG_DIM,)))
        mlp(f"{p}.coord", _mlp_spec(MSG_DIM, MLP_HIDDEN, 1))
        node_in = MSG_DIM if s == 0 else H_DIM + MSG_DIM
        mlp(f"{p}.node", _mlp_spec(node_in, MLP_HIDDEN, H_DIM))
    mlp("head", [(config.readout_dim, HEAD_HIDDEN),
                 (HEAD_HIDDEN, HEAD_HIDDEN), (HEAD_HIDDEN, 1)])
    return layout


# fan-in of the logically joint first edge layer, per weight-chunk name
def _edge_fan_in(config: ModelConfig, stage: int) -> int:
    if stage == 0:
        return config.geom_dim
    return 2 * H_DIM + config.geom_dim


def init_params(config: ModelConfig, seed: int) -> dict:
    """Xavier-uniform weights, zero biases, drawn in layout order."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_layout(config):
        if len(shape) == 1:
            params[name] = np.zeros(shape)
            continue
        fan_in, fan_out = shape
        if ".edge.w" in name and name.endswith(("wi", "wj", "wg")):
            stage = int(name.split(".")[0][len("stage"):])
            fan_in = _edge_fan_in(config, stage)
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-bound, bound, shape)
    return params


def param_count(config: ModelConfig) -> int:
    return sum(int(np.prod(s)) for _, s in param_layout(config))


def make_leaves(params: dict) -> dict:
    """Wrap parameter arrays as gradient-tracking leaf tensors."""
    return {k: Tensor(v, requires_grad=True) for k, v in params.items()}


def leaf_grads(leaves: dict) -> dict:
    """Gradient arrays per parameter after a backward pass."""
    return {k: (t.grad if t.grad is not None else np.zeros_like(t.value))
            for k, t in leaves.items()}


def _dense(t: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Apply a dense layer over the last axis of an arbitrary-rank tensor."""
    lead = t.shape[:-1]
    flat = ad.reshape(t, (-1, t.shape[-1]))
    out = ad.matmul(flat, w) + b
    return ad.reshape(out, lead + (w.shape[1],))


def _mlp(leaves: dict, prefix: str, t: Tensor) -> Tensor:
    t = ad.relu(_dense(t, leaves[f"{prefix}.w0"], leaves[f"{prefix}.b0"]))
    t = ad.relu(_dense(t, leaves[f"{prefix}.w1"], leaves[f"{prefix}.b1"]))
    return _dense(t, leaves[f"{prefix}.w2"], leaves[f"{prefix}.b2"])


def _as_leaves(params: dict, config: ModelConfig, coords) -> tuple:
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 3 or coords.shape[1:] != (config.n_points, 3):
        raise InputError(f"expected coords of shape "
                         f"(batch, {config.n_points}, 3), got {coords.shape}")
    leaves = {k: v if isinstance(v, Tensor) else Tensor(v)
              for k, v in params.items()}
    return leaves, coords


def _stages(leaves: dict, config: ModelConfig, coords: np.ndarray) -> tuple:
    """Run the message-passing trunk; returns (h, x, readout)."""
    batch, n = coords.shape[0], config.n_points
    metric = np.asarray(metric_for_group(config.group), dtype=float)
    mask = (1.0 - np.eye(n)).reshape(1, n, n, 1)
    hom = config.homogeneous
    axial = config.group is GroupTag.O2Z
    if axial:
        zhat = np.array([0.0, 0.0, 1.0])
        ones_i = Tensor(np.ones((1, n, 1, 1)))
        ones_j = Tensor(np.ones((1, 1, n, 1)))

    x = Tensor(coords)
    h = None
    pooled = []
    for s in range(N_STAGES):
        p = f"stage{s}"
        xi = ad.reshape(x, (batch, n, 1, 3))
        xj = ad.reshape(x, (batch, 1, n, 3))
        diff = xi - xj
        d2 = ad.tsum(diff * diff * metric, axis=-1, keepdims=True)
        if hom:
            dots = ad.tsum(xi * xj * metric, axis=-1, keepdims=True)
            parts = [d2, dots]
            if axial:
                # complete the axial invariants: xy squared radii and z
                # heights of both endpoints (all fixed by rotations about z
                # and by vertical mirrors)
                ri = ad.tsum(xi * xi * metric, axis=-1, keepdims=True)
                rj = ad.tsum(xj * xj * metric, axis=-1, keepdims=True)
                zi = ad.tsum(xi * zhat, axis=-1, keepdims=True)
                zj = ad.tsum(xj * zhat, axis=-1, keepdims=True)
                parts += [ri * ones_j, rj * ones_i,
                          zi * ones_j, zj * ones_i]
            geom = ad.concat(parts, axis=-1)
        else:
            geom = d2
        # first edge layer split by input block: per-node projections
        # broadcast over pairs instead of materialising concat inputs
        z = _dense(geom, leaves[f"{p}.edge.wg"], leaves[f"{p}.edge.b0"])
        if s > 0:
            hi = ad.matmul(ad.reshape(h, (-1, H_DIM)), leaves[f"{p}.edge.wi"])
            hj = ad.matmul(ad.reshape(h, (-1, H_DIM)), leaves[f"{p}.edge.wj"])
            z = (z + ad.reshape(hi, (batch, n, 1, MLP_HIDDEN))
                 + ad.reshape(hj, (batch, 1, n, MLP_HIDDEN)))
        z = ad.relu(_dense(ad.relu(z), leaves[f"{p}.edge.w1"],
                           leaves[f"{p}.edge.b1"]))
        msg = _dense(z, leaves[f"{p}.edge.w2"], leaves[f"{p}.edge.b2"])

        agg = ad.tsum(msg * mask, axis=2)
        update_coords = config.variant == "equivariant" or s < N_STAGES - 1
        if update_coords:
            w = ad.sigmoid(_mlp(leaves, f"{p}.coord", msg)) * mask
            carrier = diff if not hom else xj
            x = x + ad.tsum(carrier * w, axis=2)
        node_in = agg if s == 0 else ad.concat([h, agg], axis=-1)
        h = _mlp(leaves, f"{p}.node", node_in)
        pooled.append(ad.tmean(h, axis=1))
        if config.variant == "equivariant":
            pooled.append(ad.tmean(x, axis=1))

    return h, x, ad.concat(pooled, axis=-1)


def forward(params: dict, config: ModelConfig, coords: np.ndarray) -> Tensor:
    """Logits for a (batch, n_points, 3) array of clouds.

    ``params`` maps names to arrays (evaluation) or to leaf tensors from
    ``make_leaves`` when gradients are wanted.
    """
    leaves, coords = _as_leaves(params, config, coords)
    _, _, readout = _stages(leaves, config, coords)
    logits = _mlp(leaves, "head", readout)
    return ad.reshape(logits, (coords.shape[0],))


def node_features(params: dict, config: ModelConfig, coords) -> tuple:
    """Final-stage per-node scalars and coordinates, without gradients.

    Returns (h, x) arrays of shape (batch, n_points, 64) and
    (batch, n_points, 3); the pair the symmetry checks probe.
    """
    leaves, coords = _as_leaves(params, config, coords)
    with ad.no_grad():
        h, x, _ = _stages(leaves, config, coords)
    return h.value, x.value


def binary_logit_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy on raw logits: softplus(z) - y z."""
    labels = np.asarray(labels, dtype=float)
    return ad.tmean(ad.softplus(logits) - logits * labels)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, config: ModelConfig, params: dict,
                    extra: dict | None = None) -> None:
    """Header line, one JSON line (config + extras), raw little-endian f64."""
    header = {"config": config.to_dict(), "extra": extra or {}}
    blob = b"".join(params[name].astype("<f8").tobytes()
                    for name, _ in param_layout(config))
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC.encode() + b"\n")
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(blob)


def load_checkpoint(path):
    """Returns (config, params, extra)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    first = raw.find(b"\n")
    second = raw.find(b"\n", first + 1)
    if first < 0 or second < 0 or raw[:first].decode("ascii",
                                                     "replace") != CKPT_MAGIC:
        raise DataFormatError(f"{path}: not a {CKPT_MAGIC!r} checkpoint")
    try:
        header = json.loads(raw[first + 1:second])
        config = ModelConfig.from_dict(header["config"])
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataFormatError(f"{path}: bad checkpoint header: {exc}") from exc
    blob = raw[second + 1:]
    layout = param_layout(config)
    expected = sum(int(np.prod(s)) for _, s in layout) * 8
    if len(blob) != expected:
        raise DataFormatError(f"{path}: parameter buffer has {len(blob)} "
                              f"bytes, expected {expected}")
    params = {}
    offset = 0
    for name, shape in layout:
        size = int(np.prod(shape)) * 8
        params[name] = np.frombuffer(blob[offset:offset + size],
                                     dtype="<f8").reshape(shape).copy()
        offset += size
    return config, params, header.get("extra", {})
