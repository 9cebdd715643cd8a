"""Bundled finite-group fixtures and the self-check suite they support.

These small, fully enumerable actions (cyclic, dihedral, symmetric groups on
carriers of at most a few dozen points) back both the unit tests and the
``theory-check`` command: every structural claim the package makes about
orbits, stabilizers, fibres of invariant/equivariant maps, and the
ratio-compatibility conditions is verified on them by exhaustive enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

from .fibres import (EquivariantTestCase, FiniteMap, check_conjecture_conditions,
                     check_equivariant_fibres, check_invariant_fibres,
                     map_from_dict)
from .groups import (FiniteAction, action_from_permutations, orbit, orbits,
                     stabilizer)


def cyclic_rotation_action(n: int = 4) -> FiniteAction:
    """C_n rotating an n-point ring plus a fixed center point 'o'."""
    elements = [f"r{k}" if k else "e" for k in range(n)]
    carrier = [f"v{i}" for i in range(n)] + ["o"]
    perms = {}
    for k, g in enumerate(elements):
        perm = {f"v{i}": f"v{(i + k) % n}" for i in range(n)}
        perm["o"] = "o"
        perms[g] = perm
    return action_from_permutations(elements, carrier, perms)


def cyclic_regular_action(n: int = 4, step: int = 1) -> FiniteAction:
    """C_n acting on an n-point ring with its generator advancing by ``step``."""
    elements = [f"r{k}" if k else "e" for k in range(n)]
    carrier = [f"v{i}" for i in range(n)]
    perms = {g: {f"v{i}": f"v{(i + k * step) % n}" for i in range(n)}
             for k, g in enumerate(elements)}
    cayley = {(elements[a], elements[b]): elements[(a + b) % n]
              for a in range(n) for b in range(n)}
    return FiniteAction(tuple(elements), tuple(carrier),
                        {(g, x): perms[g][x] for g in elements for x in carrier},
                        cayley)


def square_symmetries_boundary() -> FiniteAction:
    """The 8 symmetries of a square acting on the 8 boundary cells of a 3x3 grid."""
    coords = {"nw": (-1, 1), "n": (0, 1), "ne": (1, 1), "e": (1, 0),
              "se": (1, -1), "s": (0, -1), "sw": (-1, -1), "w": (-1, 0)}
    by_coord = {v: k for k, v in coords.items()}
    transforms = {
        "e": lambda x, y: (x, y),
        "r90": lambda x, y: (-y, x),
        "r180": lambda x, y: (-x, -y),
        "r270": lambda x, y: (y, -x),
        "mx": lambda x, y: (-x, y),
        "my": lambda x, y: (x, -y),
        "d1": lambda x, y: (y, x),
        "d2": lambda x, y: (-y, -x),
    }
    carrier = ["nw", "n", "ne", "e", "se", "s", "sw", "w"]
    perms = {g: {c: by_coord[t(*coords[c])] for c in carrier}
             for g, t in transforms.items()}
    return action_from_permutations(list(transforms), carrier, perms)


def symmetric_group_action(n: int = 3) -> FiniteAction:
    """S_n permuting n labelled items naturally. Element 'p<image word>'."""
    items = [f"x{i}" for i in range(n)]
    elements = []
    perms = {}
    for images in permutations(range(n)):
        name = "p" + "".join(str(i) for i in images)
        elements.append(name)
        perms[name] = {items[i]: items[images[i]] for i in range(n)}
    return action_from_permutations(elements, items, perms)


def _octagon_domain_action() -> FiniteAction:
    elements = ["e", "r", "r2", "r3"]
    carrier = [f"v{i}" for i in range(8)]
    perms = {g: {f"v{i}": f"v{(i + 2 * k) % 8}" for i in range(8)}
             for k, g in enumerate(elements)}
    return action_from_permutations(elements, carrier, perms)


def octagon_quotient_case() -> EquivariantTestCase:
    """C4 on an octagon, labels {A, B} carrying the halved (quotient) action.

    The generator swaps the labels, its square fixes them; each label's fibre
    splits into 2-element minimal fibres joined by the order-2 stabilizer.
    """
    dom = _octagon_domain_action()
    labels = ("A", "B")
    swap = {"A": "B", "B": "A"}
    ident = {"A": "A", "B": "B"}
    label_perm = {"e": ident, "r": swap, "r2": ident, "r3": swap}
    table = {(g, y): label_perm[g][y] for g in dom.elements for y in labels}
    cod = FiniteAction(dom.elements, labels, table, dom.cayley)
    f = FiniteMap(dom.carrier, labels,
                  {f"v{i}": ("A" if (i // 2) % 2 == 0 else "B") for i in range(8)})
    return EquivariantTestCase.build(dom, cod, f)


def octagon_faithful_case() -> EquivariantTestCase:
    """C4 on an octagon, labels h0..h3 carrying the free (regular) C4 action."""
    dom = _octagon_domain_action()
    labels = tuple(f"h{i}" for i in range(4))
    label_perms = {g: {f"h{i}": f"h{(i + k) % 4}" for i in range(4)}
                   for k, g in enumerate(dom.elements)}
    table = {(g, y): label_perms[g][y] for g in dom.elements for y in labels}
    cod = FiniteAction(dom.elements, labels, table, dom.cayley)
    f = FiniteMap(dom.carrier, labels, {f"v{i}": f"h{i // 2}" for i in range(8)})
    return EquivariantTestCase.build(dom, cod, f)


def trivial_codomain_case(action: FiniteAction, f: FiniteMap) -> EquivariantTestCase:
    """View an invariant map as equivariant onto trivially-acted labels."""
    table = {(g, y): y for g in action.elements for y in f.codomain}
    cod = FiniteAction(action.elements, f.codomain, table, action.cayley)
    return EquivariantTestCase.build(action, cod, f)


def octagon_ratio_mod4() -> FiniteMap:
    """A stand-in density ratio on the octagon, constant on opposite vertices."""
    return map_from_dict({f"v{i}": f"q{i % 4}" for i in range(8)},
                         domain=[f"v{i}" for i in range(8)])


def octagon_ratio_injective() -> FiniteMap:
    """A stand-in density ratio separating every octagon vertex."""
    return map_from_dict({f"v{i}": f"q{i}" for i in range(8)},
                         domain=[f"v{i}" for i in range(8)])


# ---------------------------------------------------------------------------
# The bundled check suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


def _counting_checks() -> list[CheckResult]:
    out = []
    for label, action in [("C4-ring", cyclic_rotation_action(4)),
                          ("D4-boundary", square_symmetries_boundary()),
                          ("S3-natural", symmetric_group_action(3)),
                          ("S4-natural", symmetric_group_action(4))]:
        ok = True
        details = []
        n = len(action.elements)
        for x in action.carrier:
            no, ns = len(orbit(action, x)), len(stabilizer(action, x))
            if no * ns != n:
                ok = False
                details.append(f"{x}: |orbit|*|stab| = {no}*{ns} != {n}")
        covered = sorted(x for orb in orbits(action) for x in orb)
        if covered != sorted(action.carrier):
            ok = False
            details.append("orbits do not partition the carrier")
        out.append(CheckResult(f"counting/{label}", ok,
                               "; ".join(details) or
                               f"|G|={n}, orbits={len(orbits(action))}"))
    return out


def _dihedral_corner_check() -> CheckResult:
    action = square_symmetries_boundary()
    orb = orbit(action, "nw")
    stab = stabilizer(action, "nw")
    ok = (len(orb) == 4 and set(orb) == {"nw", "ne", "se", "sw"}
          and len(stab) == 2 and "e" in stab)
    non_identity = [g for g in stab if g != "e"]
    # the only non-identity symmetry fixing a corner is the diagonal through it
    ok = ok and non_identity == ["d2"]
    return CheckResult("dihedral/corner-orbit-stabilizer", ok,
                       f"orbit={orb}, stabilizer={stab}")


def _invariant_fibre_checks() -> list[CheckResult]:
    out = []
    act = cyclic_rotation_action(4)
    ring_or_center = map_from_dict({x: ("c" if x == "o" else "ring")
                                    for x in act.carrier},
                                   domain=act.carrier, codomain=("ring", "c"))
    rep = check_invariant_fibres(act, ring_or_center)
    out.append(CheckResult("invariant/C4-ring-vs-center",
                           rep.ok and rep.violation is None,
                           f"blocks={[b.fibre for b in rep.blocks]}"))

    first_coordinate = map_from_dict({x: ("a" if x == "v0" else "b")
                                      for x in act.carrier},
                                     domain=act.carrier, codomain=("a", "b"))
    rep = check_invariant_fibres(act, first_coordinate)
    out.append(CheckResult("invariant/C4-noninvariant-witness",
                           (not rep.ok) and rep.violation is not None,
                           f"violation={rep.violation}"))

    d4 = square_symmetries_boundary()
    corner_or_edge = map_from_dict(
        {x: ("corner" if len(x) == 2 else "edge") for x in d4.carrier},
        domain=d4.carrier, codomain=("corner", "edge"))
    rep = check_invariant_fibres(d4, corner_or_edge)
    out.append(CheckResult("invariant/D4-corner-vs-edge", rep.ok,
                           f"blocks={[b.fibre for b in rep.blocks]}"))
    return out


def _equivariant_fibre_checks() -> list[CheckResult]:
    out = []
    case = octagon_quotient_case()
    rep = check_equivariant_fibres(case)
    pair_sizes = {len(piece) for block in rep.blocks
                  for piece in block.minimal_fibres}
    out.append(CheckResult("equivariant/octagon-quotient",
                           rep.ok and pair_sizes == {2},
                           f"minimal fibre sizes={sorted(pair_sizes)}"))

    case = octagon_faithful_case()
    rep = check_equivariant_fibres(case)
    sizes = {len(piece) for block in rep.blocks
             for piece in block.minimal_fibres}
    out.append(CheckResult("equivariant/octagon-faithful",
                           rep.ok and sizes == {1},
                           f"minimal fibre sizes={sorted(sizes)}"))
    return out


def _conjecture_checks() -> list[CheckResult]:
    out = []
    sub = ("e", "r2")

    v = check_conjecture_conditions(octagon_quotient_case(), sub,
                                    octagon_ratio_mod4())
    out.append(CheckResult(
        "conditions/compatible-subgroup",
        v.consistent and v.merge_witness is None and v.split_witness is None,
        f"verdict={v}"))

    v = check_conjecture_conditions(octagon_faithful_case(), sub,
                                    octagon_ratio_mod4())
    out.append(CheckResult(
        "conditions/nontrivial-label-action",
        (not v.consistent) and v.ratio_invariant
        and not v.label_action_trivial and v.split_witness is not None,
        f"verdict={v}"))

    v = check_conjecture_conditions(octagon_faithful_case(), sub,
                                    octagon_ratio_injective())
    out.append(CheckResult(
        "conditions/ratio-breaks-subgroup",
        (not v.consistent) and not v.ratio_invariant
        and v.merge_witness is None and v.split_witness is None,
        f"verdict={v}"))

    v = check_conjecture_conditions(octagon_quotient_case(), sub,
                                    octagon_ratio_injective())
    out.append(CheckResult(
        "conditions/stabilizer-merges-ratio-fibres",
        v.merge_witness is not None and not v.consistent,
        f"verdict={v}"))
    return out


def run_bundled_checks() -> list[CheckResult]:
    """Run the whole enumeration suite; every result should have ok=True."""
    results = []
    results.extend(_counting_checks())
    results.append(_dihedral_corner_check())
    results.extend(_invariant_fibre_checks())
    results.extend(_equivariant_fibre_checks())
    results.extend(_conjecture_checks())
    return results
