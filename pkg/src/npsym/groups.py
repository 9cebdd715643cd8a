"""Group actions used by the experiments.

Two worlds live here:

* the continuous rigid-motion groups acting on R^3 (``E3``, ``O3``, and ``O2Z``,
  the rotations/reflections about the z-axis), represented by `RigidElement`
  and sampled from their invariant measures, and
* finite group actions on small labelled carriers (`FiniteAction`), stored as
  explicit tables so that orbits, stabilizers and action isomorphisms can be
  verified by exhaustive enumeration.

Conventions: actions are left actions, apply(compose(g, h), x) equals
apply(g, apply(h, x)); a Cayley entry ``product(g, h)`` therefore means
"h first, then g".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InputError

MAX_GROUP_ORDER = 24
MAX_CARRIER_SIZE = 32

ORTHOGONALITY_TOL = 1e-12

# Diagonal metric weights: full Euclidean signature and the degenerate
# signature that ignores the z-coordinate.
METRIC_EUCLIDEAN = (1.0, 1.0, 1.0)
METRIC_XY = (1.0, 1.0, 0.0)


class GroupTag(Enum):
    """Continuous symmetry groups of the experiments."""

    E3 = "E3"
    O3 = "O3"
    O2Z = "O2z"

    @classmethod
    def parse(cls, text: str) -> "GroupTag":
        for tag in cls:
            if tag.value.lower() == text.strip().lower():
                return tag
        raise InputError(f"unknown group {text!r}; expected one of "
                         f"{[t.value for t in cls]}")


def metric_for_group(tag: GroupTag) -> tuple[float, float, float]:
    """Metric signature under which the group's scalars are invariant."""
    return METRIC_XY if tag is GroupTag.O2Z else METRIC_EUCLIDEAN


@dataclass(frozen=True)
class RigidElement:
    """One element of E(3)/O(3)/O(2): an orthogonal matrix plus a translation.

    The translation is zero unless the element belongs to E(3).
    """

    rotation: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float)
        tra = np.asarray(self.translation, dtype=float)
        if rot.shape != (3, 3):
            raise InputError(f"rotation must be 3x3, got shape {rot.shape}")
        if tra.shape != (3,):
            raise InputError(f"translation must be a 3-vector, got shape {tra.shape}")
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > ORTHOGONALITY_TOL:
            raise InputError(f"rotation is not orthogonal (deviation {err:.3e})")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)

    @property
    def is_reflection(self) -> bool:
        return bool(np.linalg.det(self.rotation) < 0)


def element_in_group(g: RigidElement, tag: GroupTag, tol: float = 1e-12) -> bool:
    """Whether an element satisfies the structural constraints of a group."""
    if tag is not GroupTag.E3 and np.abs(g.translation).max() > tol:
        return False
    if tag is GroupTag.O2Z:
        rot = g.rotation
        block_ok = (abs(rot[2, 2] - 1.0) <= tol
                    and np.abs(rot[2, :2]).max() <= tol
                    and np.abs(rot[:2, 2]).max() <= tol)
        return block_ok
    return True


def identity_element() -> RigidElement:
    return RigidElement(np.eye(3), np.zeros(3))


def compose(g1: RigidElement, g2: RigidElement) -> RigidElement:
    """Group composition: the element acting as g1 after g2."""
    return RigidElement(g1.rotation @ g2.rotation,
                        g1.rotation @ g2.translation + g1.translation)


def inverse(g: RigidElement) -> RigidElement:
    rot_inv = g.rotation.T
    return RigidElement(rot_inv, -rot_inv @ g.translation)


def apply(g: RigidElement, points: np.ndarray) -> np.ndarray:
    """Apply a rigid element to points of shape (..., 3)."""
    pts = np.asarray(points, dtype=float)
    if pts.shape[-1] != 3:
        raise InputError(f"points must have a trailing axis of size 3, got {pts.shape}")
    return pts @ g.rotation.T + g.translation


def invariant_scalars(points: np.ndarray,
                      metric: tuple[float, float, float] = METRIC_EUCLIDEAN):
    """Pairwise scalars of a point array under a diagonal metric.

    Returns (diff_norms_sq, inner_products), both of shape (n, n):
    diff_norms_sq[i, j] = sum_k w_k (x_i - x_j)_k^2 and
    inner_products[i, j] = sum_k w_k x_i,k x_j,k.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InputError(f"expected an (n, 3) point array, got shape {pts.shape}")
    w = np.asarray(metric, dtype=float)
    diff = pts[:, None, :] - pts[None, :, :]
    diff_norms_sq = np.einsum("ijk,k->ij", diff * diff, w)
    inner_products = np.einsum("ik,jk,k->ij", pts, pts, w)
    return diff_norms_sq, inner_products


def sample_element(tag: GroupTag, rng: np.random.Generator) -> RigidElement:
    """Draw an element from the group's invariant measure.

    O3: orthogonalize a 3x3 standard-normal matrix (QR with the R-diagonal
    sign fix), land in the rotation component, then negate one column with
    probability 1/2 to cover reflections. O2z: uniform angle about z plus a
    fair xy-reflection coin. E3: an O3 part plus Uniform(-2, 2)^3 translation.
    """
    if tag is GroupTag.O2Z:
        angle = rng.uniform(0.0, 2.0 * np.pi)
        reflect = rng.random() < 0.5
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        if reflect:
            rot = rot @ np.diag([1.0, -1.0, 1.0])
        return RigidElement(rot)

    gauss = rng.standard_normal((3, 3))
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q = q.copy()
        q[:, 0] = -q[:, 0]
    if rng.random() < 0.5:
        q = q.copy()
        q[:, 0] = -q[:, 0]
    rot = q

    if tag is GroupTag.E3:
        return RigidElement(rot, rng.uniform(-2.0, 2.0, size=3))
    return RigidElement(rot)


# ---------------------------------------------------------------------------
# Finite actions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteAction:
    """A finite group acting on a finite carrier, given by explicit tables.

    ``table[(g, x)]`` is the image of carrier point x under element g;
    ``cayley[(g, h)]`` is the product g*h (h applied first). All group and
    action axioms are verified exhaustively at construction time, so a
    FiniteAction that exists is known to be a genuine left action.
    """

    elements: tuple[str, ...]
    carrier: tuple[str, ...]
    table: dict
    cayley: dict

    def __post_init__(self):
        elements = tuple(str(e) for e in self.elements)
        carrier = tuple(str(x) for x in self.carrier)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "carrier", carrier)
        if len(set(elements)) != len(elements):
            raise InputError("duplicate element labels")
        if len(set(carrier)) != len(carrier):
            raise InputError("duplicate carrier labels")
        if not 0 < len(elements) <= MAX_GROUP_ORDER:
            raise InputError(f"group order must be in [1, {MAX_GROUP_ORDER}], "
                             f"got {len(elements)}")
        if not 0 < len(carrier) <= MAX_CARRIER_SIZE:
            raise InputError(f"carrier size must be in [1, {MAX_CARRIER_SIZE}], "
                             f"got {len(carrier)}")
        self._check_cayley()
        self._check_action()

    def _check_cayley(self):
        elems = set(self.elements)
        for g in self.elements:
            for h in self.elements:
                prod = self.cayley.get((g, h))
                if prod is None:
                    raise InputError(f"Cayley table missing product ({g}, {h})")
                if prod not in elems:
                    raise InputError(
                        f"Cayley row {g!r}: product {g}*{h} = {prod!r} "
                        "is not a group element")
        identities = [e for e in self.elements
                      if all(self.cayley[(e, h)] == h and self.cayley[(h, e)] == h
                             for h in self.elements)]
        if len(identities) != 1:
            raise InputError("Cayley table has no unique identity")
        object.__setattr__(self, "_identity", identities[0])
        for g in self.elements:
            row = [self.cayley[(g, h)] for h in self.elements]
            if len(set(row)) != len(row):
                raise InputError(f"Cayley row {g!r} is not a bijection")
            if self._identity not in row:
                raise InputError(f"element {g!r} has no inverse")
        for g in self.elements:
            for h in self.elements:
                for k in self.elements:
                    left = self.cayley[(self.cayley[(g, h)], k)]
                    right = self.cayley[(g, self.cayley[(h, k)])]
                    if left != right:
                        raise InputError(
                            f"Cayley table not associative at ({g}, {h}, {k})")

    def _check_action(self):
        pts = set(self.carrier)
        for g in self.elements:
            images = []
            for x in self.carrier:
                y = self.table.get((g, x))
                if y is None:
                    raise InputError(f"action row {g!r}: missing image of {x!r}")
                if y not in pts:
                    raise InputError(
                        f"action row {g!r}: image {y!r} of {x!r} is not a "
                        "carrier point")
                images.append(y)
            if len(set(images)) != len(images):
                raise InputError(f"action row {g!r} is not a bijection")
        e = self._identity
        for x in self.carrier:
            if self.table[(e, x)] != x:
                raise InputError(f"identity row moves {x!r}")
        for g in self.elements:
            for h in self.elements:
                gh = self.cayley[(g, h)]
                for x in self.carrier:
                    if self.table[(gh, x)] != self.table[(g, self.table[(h, x)])]:
                        raise InputError(
                            f"action incompatible with composition at "
                            f"({g}, {h}, {x})")

    @property
    def identity(self) -> str:
        return self._identity

    def act(self, g: str, x: str) -> str:
        try:
            return self.table[(g, x)]
        except KeyError:
            raise InputError(f"unknown element/point pair ({g!r}, {x!r})") from None

    def product(self, g: str, h: str) -> str:
        try:
            return self.cayley[(g, h)]
        except KeyError:
            raise InputError(f"unknown element pair ({g!r}, {h!r})") from None

    def element_inverse(self, g: str) -> str:
        for h in self.elements:
            if self.cayley[(g, h)] == self._identity:
                return h
        raise InputError(f"unknown element {g!r}")

    def is_subgroup(self, subset) -> bool:
        """Whether a collection of element labels forms a subgroup."""
        sub = set(subset)
        if not sub <= set(self.elements):
            raise InputError(f"labels {sorted(sub - set(self.elements))} are "
                             "not elements of the group")
        if self._identity not in sub:
            return False
        return all(self.cayley[(g, h)] in sub for g in sub for h in sub)


def orbit(action: FiniteAction, point: str) -> tuple[str, ...]:
    """All points reachable from ``point``, in carrier order."""
    if point not in action.carrier:
        raise InputError(f"unknown carrier point {point!r}")
    reached = {action.act(g, point) for g in action.elements}
    return tuple(x for x in action.carrier if x in reached)


def stabilizer(action: FiniteAction, point: str) -> tuple[str, ...]:
    """All elements fixing ``point``, in element order. Always a subgroup."""
    if point not in action.carrier:
        raise InputError(f"unknown carrier point {point!r}")
    return tuple(g for g in action.elements if action.act(g, point) == point)


def orbits(action: FiniteAction) -> list[tuple[str, ...]]:
    """The orbit partition of the carrier, ordered by first representative."""
    seen: set[str] = set()
    parts = []
    for x in action.carrier:
        if x in seen:
            continue
        orb = orbit(action, x)
        seen.update(orb)
        parts.append(orb)
    return parts


def actions_equal(a1: FiniteAction, a2: FiniteAction, iso: dict) -> bool:
    """Whether ``iso`` witnesses the two actions as the same action.

    ``iso`` maps a1's element labels onto a2's. It must be a bijection that
    respects the Cayley tables; the actions are equal iff additionally
    a1's g moves every carrier point exactly as a2's iso(g). Both actions
    must share an identical carrier.
    """
    if a1.carrier != a2.carrier:
        raise InputError("actions are defined on different carriers")
    if set(iso.keys()) != set(a1.elements):
        raise InputError("isomorphism does not cover the first group")
    if sorted(iso.values()) != sorted(a2.elements):
        raise InputError("isomorphism is not a bijection onto the second group")
    for g in a1.elements:
        for h in a1.elements:
            if iso[a1.cayley[(g, h)]] != a2.cayley[(iso[g], iso[h])]:
                return False
    for g in a1.elements:
        for x in a1.carrier:
            if a1.table[(g, x)] != a2.table[(iso[g], x)]:
                return False
    return True


def action_from_permutations(elements, carrier, perms, cayley=None) -> FiniteAction:
    """Build a FiniteAction from per-element permutations of the carrier.

    ``perms[g]`` maps each carrier point to its image under g. If ``cayley``
    is omitted the multiplication table is inferred from permutation
    composition, which requires the action to be faithful (distinct elements
    act by distinct permutations).
    """
    elements = tuple(elements)
    carrier = tuple(carrier)
    table = {(g, x): perms[g][x] for g in elements for x in carrier}
    if cayley is None:
        by_perm = {}
        for g in elements:
            key = tuple(perms[g][x] for x in carrier)
            if key in by_perm:
                raise InputError(
                    f"elements {by_perm[key]!r} and {g!r} act identically; "
                    "supply an explicit Cayley table for non-faithful actions")
            by_perm[key] = g
        cayley = {}
        for g in elements:
            for h in elements:
                key = tuple(perms[g][perms[h][x]] for x in carrier)
                prod = by_perm.get(key)
                if prod is None:
                    raise InputError(f"product {g}*{h} falls outside the "
                                     "supplied permutations (not closed)")
                cayley[(g, h)] = prod
    return FiniteAction(elements, carrier, table, cayley)


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------

def format_action(action: FiniteAction) -> str:
    """Serialize a FiniteAction to the plain-text table format.

    Layout::

        elements: e r
        carrier: a b
        action:
        e: a b
        r: b a
        cayley:
        e: e r
        r: r e

    Each ``action`` row lists the images of the carrier points in carrier
    order; each ``cayley`` row g lists the products g*h in element order.
    """
    lines = ["elements: " + " ".join(action.elements),
             "carrier: " + " ".join(action.carrier),
             "action:"]
    for g in action.elements:
        lines.append(f"{g}: " + " ".join(action.act(g, x) for x in action.carrier))
    lines.append("cayley:")
    for g in action.elements:
        lines.append(f"{g}: " + " ".join(action.product(g, h)
                                         for h in action.elements))
    return "\n".join(lines) + "\n"


def parse_action(text: str) -> FiniteAction:
    """Parse the plain-text table format produced by `format_action`."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if len(lines) < 2 or not lines[0].startswith("elements:"):
        raise InputError("expected an 'elements:' header on line 1")
    if not lines[1].startswith("carrier:"):
        raise InputError("expected a 'carrier:' header on line 2")
    elements = tuple(lines[0].split(":", 1)[1].split())
    carrier = tuple(lines[1].split(":", 1)[1].split())
    if not elements:
        raise InputError("empty element list")
    if not carrier:
        raise InputError("empty carrier list")

    def read_block(start: int, marker: str, width: int) -> tuple[dict, int]:
        if start >= len(lines) or lines[start] != marker:
            raise InputError(f"expected a {marker!r} line, got "
                             f"{lines[start] if start < len(lines) else 'end of file'!r}")
        rows = {}
        idx = start + 1
        for _ in elements:
            if idx >= len(lines):
                raise InputError(f"{marker} block ended early; missing rows for "
                                 f"{sorted(set(elements) - set(rows))}")
            row = lines[idx]
            if ":" not in row:
                raise InputError(f"malformed row {row!r} (expected 'label: images')")
            label, rest = row.split(":", 1)
            label = label.strip()
            if label not in elements:
                raise InputError(f"row for unknown element {label!r}")
            if label in rows:
                raise InputError(f"duplicate row for element {label!r}")
            images = rest.split()
            if len(images) != width:
                raise InputError(f"row {label!r} lists {len(images)} entries, "
                                 f"expected {width}")
            rows[label] = images
            idx += 1
        return rows, idx

    action_rows, idx = read_block(2, "action:", len(carrier))
    cayley_rows, idx = read_block(idx, "cayley:", len(elements))
    if idx != len(lines):
        raise InputError(f"unexpected trailing content: {lines[idx]!r}")

    table = {(g, x): action_rows[g][i]
             for g in elements for i, x in enumerate(carrier)}
    cayley = {(g, h): cayley_rows[g][j]
              for g in elements for j, h in enumerate(elements)}
    return FiniteAction(elements, carrier, table, cayley)
