"""Synthetic point-cloud distributions and their on-disk dataset format.

A sample is a cloud of 30 points drawn i.i.d. from a shape distribution: a
point on an ideal surface (sphere or open cylinder barrel, either the unit
ones or large truncated patches) plus isotropic Gaussian noise. Two scenarios
pair the shapes into binary classification problems:

* ``uniform``   - class 0: unit cylinder barrel, class 1: unit sphere;
* ``truncated_normal`` - class 0: spherical wedge patch, class 1: cylindrical patch,
  both at radius ~ TruncNormal(5, 1) restricted to (4, 6).

Sampling is driven by a caller-supplied numpy Generator and is bit-stable for
a fixed seed: each sampler draws its surface parameters first (in the
documented order), then one Gaussian noise block for the whole cloud batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DataFormatError, InputError

N_POINTS = 30
DEFAULT_NOISE_SIGMA = 0.3

UNIT_RADIUS = 1.0
CYLINDER_HALF_HEIGHT = 1.0

TRUNC_RADIAL_MEAN = 5.0
TRUNC_RADIAL_SD = 1.0
TRUNC_RADIAL_RANGE = (4.0, 6.0)
TRUNC_AZIMUTH_RANGE = (-np.pi / 4.0, np.pi / 4.0)
TRUNC_POLAR_RANGE = (np.pi / 4.0, 3.0 * np.pi / 4.0)
# axial extent of the cylindrical patch: the z-window spanned by the
# spherical patch at its mean radius
TRUNC_Z_RANGE = (5.0 * np.cos(3.0 * np.pi / 4.0), 5.0 * np.cos(np.pi / 4.0))

DATASET_MAGIC = "npsym-dataset v1"


class ShapeKind(Enum):
    UNIFORM_SPHERE = "uniform_sphere"
    UNIFORM_CYLINDER = "uniform_cylinder"
    TRUNC_SPHERE = "trunc_sphere"
    TRUNC_CYLINDER = "trunc_cylinder"

    @classmethod
    def parse(cls, text: str) -> "ShapeKind":
        for kind in cls:
            if kind.value == text.strip().lower():
                return kind
        raise InputError(f"unknown shape kind {text!r}")


@dataclass(frozen=True)
class ShapeSpec:
    """A shape distribution: surface family plus noise level."""

    kind: ShapeKind
    noise_sigma: float = DEFAULT_NOISE_SIGMA

    def __post_init__(self):
        # zero is legal for sampling (noiseless surface draws); density
        # evaluation requires strictly positive smearing and checks itself
        if not (np.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise InputError(f"noise_sigma must be nonnegative and finite, "
                             f"got {self.noise_sigma}")


SCENARIOS = ("uniform", "truncated_normal")
SPLITS = ("train", "val", "test")


def scenario_specs(scenario: str,
                   noise_sigma: float = DEFAULT_NOISE_SIGMA) -> tuple[ShapeSpec, ShapeSpec]:
    """(class 0, class 1) shape specs for a scenario."""
    if scenario == "uniform":
        kinds = (ShapeKind.UNIFORM_CYLINDER, ShapeKind.UNIFORM_SPHERE)
    elif scenario == "truncated_normal":
        kinds = (ShapeKind.TRUNC_SPHERE, ShapeKind.TRUNC_CYLINDER)
    else:
        raise InputError(f"unknown scenario {scenario!r}; expected one of "
                         f"{SCENARIOS}")
    return tuple(ShapeSpec(k, noise_sigma) for k in kinds)


def truncnorm_ppf(u, mean, sd, lo, hi):
    """Inverse CDF of a truncated normal, u in [0, 1] -> value in [lo, hi]."""
    u = np.asarray(u, dtype=float)
    a = ndtr((lo - mean) / sd)
    b = ndtr((hi - mean) / sd)
    return mean + sd * ndtri(a + u * (b - a))


def truncnorm_pdf(x, mean, sd, lo, hi):
    """Density of the truncated normal; zero outside [lo, hi]."""
    x = np.asarray(x, dtype=float)
    z = (x - mean) / sd
    mass = ndtr((hi - mean) / sd) - ndtr((lo - mean) / sd)
    core = np.exp(-0.5 * z * z) / (np.sqrt(2.0 * np.pi) * sd * mass)
    return np.where((x >= lo) & (x <= hi), core, 0.0)


def _surface_points(kind: ShapeKind, n: int, rng: np.random.Generator) -> np.ndarray:
    """Noiseless surface samples, shape (n, N_POINTS, 3).

    Draw order per kind (each a full (n, N_POINTS) block):
    sphere: cos(polar), azimuth; cylinder: azimuth, z;
    trunc sphere: radius, polar, azimuth; trunc cylinder: radius, azimuth, z.
    """
    shape = (n, N_POINTS)
    if kind is ShapeKind.UNIFORM_SPHERE:
        cos_theta = rng.uniform(-1.0, 1.0, shape)
        phi = rng.uniform(0.0, 2.0 * np.pi, shape)
        sin_theta = np.sqrt(1.0 - cos_theta ** 2)
        r = UNIT_RADIUS
        return np.stack([r * sin_theta * np.cos(phi),
                         r * sin_theta * np.sin(phi),
                         r * cos_theta], axis=-1)
    if kind is ShapeKind.UNIFORM_CYLINDER:
        phi = rng.uniform(0.0, 2.0 * np.pi, shape)
        z = rng.uniform(-CYLINDER_HALF_HEIGHT, CYLINDER_HALF_HEIGHT, shape)
        r = UNIT_RADIUS
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
    if kind is ShapeKind.TRUNC_SPHERE:
        r = truncnorm_ppf(rng.uniform(0.0, 1.0, shape), TRUNC_RADIAL_MEAN,
                          TRUNC_RADIAL_SD, *TRUNC_RADIAL_RANGE)
        theta = rng.uniform(*TRUNC_POLAR_RANGE, shape)
        phi = rng.uniform(*TRUNC_AZIMUTH_RANGE, shape)
        sin_theta = np.sin(theta)
        return np.stack([r * sin_theta * np.cos(phi),
                         r * sin_theta * np.sin(phi),
                         r * np.cos(theta)], axis=-1)
    if kind is ShapeKind.TRUNC_CYLINDER:
        rho = truncnorm_ppf(rng.uniform(0.0, 1.0, shape), TRUNC_RADIAL_MEAN,
                            TRUNC_RADIAL_SD, *TRUNC_RADIAL_RANGE)
        phi = rng.uniform(*TRUNC_AZIMUTH_RANGE, shape)
        z = rng.uniform(*TRUNC_Z_RANGE, shape)
        return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
    raise InputError(f"unknown shape kind {kind!r}")


def sample_clouds(spec: ShapeSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n noisy clouds of shape (n, N_POINTS, 3), float64."""
    if n < 0:
        raise InputError(f"cannot draw {n} clouds")
    surface = _surface_points(spec.kind, n, rng)
    noise = rng.normal(0.0, spec.noise_sigma, surface.shape)
    return surface + noise


def as_cloud_array(points) -> np.ndarray:
    """Validate and convert to a float64 (n, N_POINTS, 3) array."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != N_POINTS or arr.shape[2] != 3:
        raise InputError(f"expected clouds of shape (n, {N_POINTS}, 3), "
                         f"got {np.asarray(points).shape}")
    if not np.isfinite(arr).all():
        raise InputError("cloud contains non-finite coordinates")
    return arr


# ---------------------------------------------------------------------------
# Dataset files
# ---------------------------------------------------------------------------

def write_dataset(path, points, label: int, meta: dict) -> None:
    """Write one class of one split to the line-oriented dataset format.

    Layout: a magic line, one JSON metadata line (sorted keys), then one
    record per cloud: the 90 coordinates (point-major, x y z per point) and
    the class label. Floats are written with shortest round-trip repr, so
    regenerating the same data yields byte-identical files.
    """
    arr = as_cloud_array(points)
    meta = dict(meta)
    meta.setdefault("n_samples", arr.shape[0])
    meta.setdefault("class", int(label))
    if meta["n_samples"] != arr.shape[0]:
        raise InputError(f"metadata n_samples={meta['n_samples']} does not "
                         f"match {arr.shape[0]} records")
    if meta["class"] != int(label):
        raise InputError("metadata class does not match the label argument")
    flat = arr.reshape(arr.shape[0], -1)
    lines = [DATASET_MAGIC, json.dumps(meta, sort_keys=True)]
    for row in flat:
        lines.append(" ".join(repr(float(v)) for v in row) + f" {int(label)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset(path):
    """Read a dataset file; returns (points (n, 30, 3), labels (n,), meta)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != DATASET_MAGIC:
        head = lines[0].strip() if lines else "<empty>"
        raise DataFormatError(f"{path}: bad magic {head!r}; expected "
                              f"{DATASET_MAGIC!r}")
    if len(lines) < 2:
        raise DataFormatError(f"{path}: missing metadata line")
    try:
        meta = json.loads(lines[1])
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: bad metadata line: {exc}") from exc
    records = [ln for ln in lines[2:] if ln.strip()]
    width = 3 * N_POINTS + 1
    try:
        data = np.array([ln.split() for ln in records], dtype=float)
    except ValueError as exc:
        raise DataFormatError(f"{path}: malformed record: {exc}") from exc
    if data.size == 0:
        data = data.reshape(0, width)
    if data.shape[1] != width:
        raise DataFormatError(f"{path}: records have {data.shape[1]} fields, "
                              f"expected {width}")
    points = data[:, :-1].reshape(-1, N_POINTS, 3)
    labels = data[:, -1].astype(int)
    if not np.all(data[:, -1] == labels):
        raise DataFormatError(f"{path}: non-integer labels")
    if "n_samples" in meta and meta["n_samples"] != len(records):
        raise DataFormatError(f"{path}: metadata says {meta['n_samples']} "
                              f"records, file has {len(records)}")
    if "class" in meta and len(labels) and not np.all(labels == meta["class"]):
        raise DataFormatError(f"{path}: labels disagree with metadata class "
                              f"{meta['class']}")
    return points, labels, meta


def dataset_filename(scenario: str, split: str, label: int) -> str:
    return f"{scenario}_{split}_class{int(label)}.npsym"


def generate_split(out_dir, scenario: str, split: str, n_per_class: int,
                   seed: int, noise_sigma: float = DEFAULT_NOISE_SIGMA) -> list:
    """Generate and write both classes of one split; returns the file paths.

    One Generator seeded with ``seed`` serves the whole split: class 0's
    clouds are drawn first, then class 1's.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    specs = scenario_specs(scenario, noise_sigma)
    rng = np.random.default_rng(seed)
    paths = []
    for label, spec in enumerate(specs):
        clouds = sample_clouds(spec, n_per_class, rng)
        meta = {"scenario": scenario, "split": split, "class": label,
                "n_samples": n_per_class, "noise_sigma": noise_sigma,
                "seed": seed, "shape": spec.kind.value}
        path = out_dir / dataset_filename(scenario, split, label)
        write_dataset(path, clouds, label, meta)
        paths.append(path)
    return paths


def load_split(data_dir, scenario: str, split: str):
    """Load both classes of a split; returns (points, labels) concatenated."""
    data_dir = Path(data_dir)
    parts, labels = [], []
    for label in (0, 1):
        path = data_dir / dataset_filename(scenario, split, label)
        pts, labs, _meta = read_dataset(path)
        parts.append(pts)
        labels.append(labs)
    return np.concatenate(parts, axis=0), np.concatenate(labels, axis=0)
