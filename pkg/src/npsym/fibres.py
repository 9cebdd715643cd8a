"""Fibre structure of maps out of finite group actions, by brute force.

Everything here is exhaustive enumeration on small carriers: preimage
partitions of a map, the orbit structure an invariant map must respect, the
minimal fibres an equivariant map must respect, and the compatibility
conditions under which a symmetry-respecting decision rule can still separate
two distributions as well as their density ratio does.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InputError
from .groups import FiniteAction, orbit, orbits, parse_action, stabilizer


@dataclass(frozen=True)
class FiniteMap:
    """A total map between finite labelled sets, stored as a table."""

    domain: tuple[str, ...]
    codomain: tuple[str, ...]
    table: dict

    def __post_init__(self):
        domain = tuple(str(x) for x in self.domain)
        codomain = tuple(str(y) for y in self.codomain)
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "codomain", codomain)
        if len(set(domain)) != len(domain):
            raise InputError("duplicate domain labels")
        if len(set(codomain)) != len(codomain):
            raise InputError("duplicate codomain labels")
        cod = set(codomain)
        for x in domain:
            y = self.table.get(x)
            if y is None:
                raise InputError(f"map is missing an image for {x!r}")
            if y not in cod:
                raise InputError(f"map sends {x!r} to {y!r}, which is not in "
                                 "the codomain")

    def __call__(self, x: str) -> str:
        try:
            return self.table[x]
        except KeyError:
            raise InputError(f"{x!r} is not in the domain") from None

    @property
    def image(self) -> tuple[str, ...]:
        hit = {self.table[x] for x in self.domain}
        return tuple(y for y in self.codomain if y in hit)


def map_from_dict(table: dict, domain=None, codomain=None) -> FiniteMap:
    """Convenience constructor inferring domain/codomain from a plain dict."""
    if domain is None:
        domain = tuple(table.keys())
    if codomain is None:
        seen = []
        for x in domain:
            y = table[x]
            if y not in seen:
                seen.append(y)
        codomain = tuple(seen)
    return FiniteMap(tuple(domain), tuple(codomain), dict(table))


@dataclass(frozen=True)
class FibrePartition:
    """The preimage partition of a map: one block per attained value."""

    blocks: tuple[tuple[str, ...], ...]
    values: tuple[str, ...]

    def block_of(self, x: str) -> tuple[str, ...]:
        for block in self.blocks:
            if x in block:
                return block
        raise InputError(f"{x!r} is not in the partitioned domain")


def fibres(f: FiniteMap) -> FibrePartition:
    """Group the domain by image value, ordered by first occurrence."""
    by_value: dict = {}
    order = []
    for x in f.domain:
        y = f(x)
        if y not in by_value:
            by_value[y] = []
            order.append(y)
        by_value[y].append(x)
    blocks = tuple(tuple(by_value[y]) for y in order)
    covered = [x for block in blocks for x in block]
    assert sorted(covered) == sorted(f.domain)
    return FibrePartition(blocks, tuple(order))


# ---------------------------------------------------------------------------
# Invariant maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InvariantFibreReport:
    """Result of checking that an invariant map's fibres are orbit unions."""

    ok: bool
    violation: tuple | None           # (g, x) with f(g.x) != f(x), if any
    blocks: tuple                      # one entry per fibre, see below


@dataclass(frozen=True)
class FibreBlockReport:
    value: str
    fibre: tuple[str, ...]
    orbit_reps: tuple[str, ...]        # first carrier point of each orbit merged
    is_union_of_orbits: bool


def invariance_violation(action: FiniteAction, f: FiniteMap):
    """First (g, x) with f(g.x) != f(x), or None if the map is invariant."""
    _require_matching_domain(action, f)
    for g in action.elements:
        for x in action.carrier:
            if f(action.act(g, x)) != f(x):
                return (g, x)
    return None


def check_invariant_fibres(action: FiniteAction, f: FiniteMap) -> InvariantFibreReport:
    """Verify that every fibre of an invariant map is a union of whole orbits.

    If the map is not invariant, the report carries the witnessing (g, x)
    instead of a fibre decomposition.
    """
    witness = invariance_violation(action, f)
    if witness is not None:
        return InvariantFibreReport(False, witness, ())
    all_orbits = orbits(action)
    part = fibres(f)
    blocks = []
    ok = True
    for block, value in zip(part.blocks, part.values):
        members = set(block)
        merged = [orb for orb in all_orbits if orb[0] in members]
        union = {x for orb in merged for x in orb}
        exact = union == members
        ok = ok and exact
        blocks.append(FibreBlockReport(value, block,
                                       tuple(orb[0] for orb in merged), exact))
    return InvariantFibreReport(ok, None, tuple(blocks))


# ---------------------------------------------------------------------------
# Equivariant maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EquivariantTestCase:
    """Two actions of one group plus a map between their carriers.

    ``domain_action`` acts on the sample space, ``codomain_action`` on the
    label space, and ``f`` maps samples to labels. Construction verifies that
    both actions share the same group (identical element labels and Cayley
    table) and, when ``strict``, that f is equivariant:
    f(g.x) = g.f(x) for all g, x.
    """

    domain_action: FiniteAction
    codomain_action: FiniteAction
    f: FiniteMap

    def __post_init__(self):
        a, b = self.domain_action, self.codomain_action
        if a.elements != b.elements or a.cayley != b.cayley:
            raise InputError("domain and codomain actions use different groups")
        _require_matching_domain(a, self.f)
        if tuple(self.f.codomain) != b.carrier:
            raise InputError(
                f"map codomain {self.f.codomain} does not match the codomain "
                f"action's carrier {b.carrier}")

    @classmethod
    def build(cls, domain_action, codomain_action, f, strict=True):
        case = cls(domain_action, codomain_action, f)
        if strict:
            witness = case.equivariance_violation()
            if witness is not None:
                g, x = witness
                raise InputError(
                    f"map is not equivariant: f({g}.{x}) = "
                    f"{f(domain_action.act(g, x))!r} but {g}.f({x}) = "
                    f"{codomain_action.act(g, f(x))!r}")
        return case

    def equivariance_violation(self):
        """First (g, x) with f(g.x) != g.f(x), or None."""
        a, b, f = self.domain_action, self.codomain_action, self.f
        for g in a.elements:
            for x in a.carrier:
                if f(a.act(g, x)) != b.act(g, f(x)):
                    return (g, x)
        return None


def minimal_equivariant_fibre(case: EquivariantTestCase, x: str) -> tuple[str, ...]:
    """Smallest subset containing x that any equivariant map must keep whole.

    This is the image of x under the stabilizer (in the codomain action) of
    f(x): points an equivariant map provably cannot separate from x.
    Returned in carrier order.
    """
    stab = stabilizer(case.codomain_action, case.f(x))
    members = {case.domain_action.act(g, x) for g in stab}
    return tuple(p for p in case.domain_action.carrier if p in members)


@dataclass(frozen=True)
class EquivariantFibreReport:
    ok: bool
    violation: tuple | None            # (g, x) equivariance witness, if any
    blocks: tuple                      # one EquivariantBlockReport per value


@dataclass(frozen=True)
class EquivariantBlockReport:
    value: str
    fibre: tuple[str, ...]
    minimal_fibres: tuple[tuple[str, ...], ...]
    is_union_of_minimal_fibres: bool


def check_equivariant_fibres(case: EquivariantTestCase) -> EquivariantFibreReport:
    """Verify each fibre of an equivariant map is a union of minimal fibres.

    The minimal fibres inside one fibre of f are disjoint (points in the same
    minimal fibre have equal minimal fibres), so the decomposition reported
    per fibre is a partition.
    """
    witness = case.equivariance_violation()
    if witness is not None:
        return EquivariantFibreReport(False, witness, ())
    part = fibres(case.f)
    blocks = []
    ok = True
    for block, value in zip(part.blocks, part.values):
        seen: set[str] = set()
        pieces = []
        for x in block:
            if x in seen:
                continue
            piece = minimal_equivariant_fibre(case, x)
            seen.update(piece)
            pieces.append(piece)
        union = {x for piece in pieces for x in piece}
        exact = union == set(block)
        ok = ok and exact
        blocks.append(EquivariantBlockReport(value, block, tuple(pieces), exact))
    return EquivariantFibreReport(ok, None, tuple(blocks))


# ---------------------------------------------------------------------------
# Compatibility of a symmetry with a density ratio
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConjectureVerdict:
    """Outcome of the optimality-compatibility conditions on a finite model.

    ``ratio_invariant`` - the density ratio is constant along the subgroup's
    action on samples. ``label_action_trivial`` - the subgroup fixes every
    attained label; equivalently every attained label's stabilizer contains
    the subgroup (``stabilizers_contain_subgroup`` recomputes this the second
    way). ``consistent`` is the conjunction: the symmetry can coexist with
    ratio-optimal decisions. ``merge_witness`` is a (g, x, x2) with x2 in the
    minimal fibre of x but with a different ratio value (the decision rule is
    forced to conflate samples the ratio separates). ``split_witness`` is a
    (g, x, x2) with g in the subgroup, equal ratio values, but different
    labels under f (f refuses to conflate samples the ratio ties together -
    the contradiction scenario for a nontrivial label action).
    """

    ratio_invariant: bool
    label_action_trivial: bool
    stabilizers_contain_subgroup: bool
    consistent: bool
    merge_witness: tuple | None
    split_witness: tuple | None


def check_conjecture_conditions(case: EquivariantTestCase, subgroup,
                                ratio: FiniteMap | dict) -> ConjectureVerdict:
    """Evaluate the compatibility conditions for a subgroup and a ratio map."""
    a, b, f = case.domain_action, case.codomain_action, case.f
    sub = tuple(dict.fromkeys(subgroup))
    if not a.is_subgroup(sub):
        raise InputError(f"{list(sub)} is not a subgroup (not closed, or "
                         "missing the identity)")
    if not isinstance(ratio, FiniteMap):
        ratio = map_from_dict(dict(ratio))
    if set(ratio.domain) != set(a.carrier):
        raise InputError("ratio map is not defined on the full carrier")

    ratio_invariant = all(ratio(a.act(g, x)) == ratio(x)
                          for g in sub for x in a.carrier)
    image = f.image
    label_action_trivial = all(b.act(g, y) == y for g in sub for y in image)
    stabilizers_contain = all(set(sub) <= set(stabilizer(b, y)) for y in image)
    assert stabilizers_contain == label_action_trivial

    merge_witness = None
    for x in a.carrier:
        for g in stabilizer(b, f(x)):
            x2 = a.act(g, x)
            if ratio(x2) != ratio(x):
                merge_witness = (g, x, x2)
                break
        if merge_witness:
            break

    split_witness = None
    for x in a.carrier:
        for g in sub:
            x2 = a.act(g, x)
            if ratio(x2) == ratio(x) and f(x2) != f(x):
                split_witness = (g, x, x2)
                break
        if split_witness:
            break

    return ConjectureVerdict(
        ratio_invariant=ratio_invariant,
        label_action_trivial=label_action_trivial,
        stabilizers_contain_subgroup=stabilizers_contain,
        consistent=ratio_invariant and label_action_trivial,
        merge_witness=merge_witness,
        split_witness=split_witness,
    )


# ---------------------------------------------------------------------------
# Case files
# ---------------------------------------------------------------------------

def parse_case(text: str, strict: bool = True) -> EquivariantTestCase:
    """Parse a test-case file: two embedded action tables plus a map block.

    Layout::

        action_X:
        <action table in the groups text format>
        action_H:
        <action table>
        map:
        x1 -> y1
        x2 -> y2

    ``->`` may also be written as a unicode arrow. Blank lines and '#'
    comments are ignored. Parse errors name the offending source line.
    """
    rows = [(no, ln.strip()) for no, ln in enumerate(text.splitlines(), 1)]
    rows = [(no, ln) for no, ln in rows if ln and not ln.startswith("#")]
    sections: dict[str, list] = {}
    starts: dict[str, int] = {}
    current = None
    for no, ln in rows:
        if ln in ("action_X:", "action_H:", "map:"):
            if ln in sections:
                raise InputError(f"line {no}: duplicate section {ln!r}")
            current = ln
            sections[current] = []
            starts[current] = no
        elif current is None:
            raise InputError(f"line {no}: content before the first section "
                             f"marker: {ln!r}")
        else:
            sections[current].append((no, ln))
    for marker in ("action_X:", "action_H:", "map:"):
        if marker not in sections:
            raise InputError(f"missing section {marker!r}")
    actions = {}
    for marker in ("action_X:", "action_H:"):
        try:
            actions[marker] = parse_action(
                "\n".join(ln for _, ln in sections[marker]))
        except InputError as exc:
            raise InputError(f"section {marker!r} starting at line "
                             f"{starts[marker]}: {exc}") from None
    domain_action = actions["action_X:"]
    codomain_action = actions["action_H:"]
    table = {}
    for no, ln in sections["map:"]:
        ln = ln.replace("→", "->")
        if "->" not in ln:
            raise InputError(f"line {no}: malformed map row {ln!r} "
                             "(expected 'x -> y')")
        x, y = (part.strip() for part in ln.split("->", 1))
        if not x or not y:
            raise InputError(f"line {no}: malformed map row {ln!r}")
        if x in table:
            raise InputError(f"line {no}: duplicate map row for {x!r}")
        table[x] = y
    f = FiniteMap(domain_action.carrier, codomain_action.carrier, table)
    return EquivariantTestCase.build(domain_action, codomain_action, f,
                                     strict=strict)


def format_case(case: EquivariantTestCase) -> str:
    from .groups import format_action
    parts = ["action_X:", format_action(case.domain_action).rstrip(),
             "action_H:", format_action(case.codomain_action).rstrip(),
             "map:"]
    parts.extend(f"{x} -> {case.f(x)}" for x in case.f.domain)
    return "\n".join(parts) + "\n"


def _require_matching_domain(action: FiniteAction, f: FiniteMap):
    if tuple(f.domain) != action.carrier:
        raise InputError(
            f"map domain {f.domain} does not match the action's carrier "
            f"{action.carrier}")
