"""Molecular graph kernel.

Heavy-atom graphs with integer bond orders, plus the operations the rest of
the engine is built on: validity checking, minimum cycle basis, canonical
serialization, a restricted SMILES reader, circular fingerprints and
Tanimoto similarity.

Hydrogens are implicit everywhere: an atom's implicit-H count is its valence
cap minus the sum of its bond orders.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import MolgaError

# Maximum bond-order sum per element. S is capped at 2 (thioether-like), not
# hypervalent 6; P at 3. Immutable at runtime.
VALENCE: dict[str, int] = {"C": 4, "N": 3, "O": 2, "S": 2, "P": 3, "F": 1}

ELEMENTS: tuple[str, ...] = ("C", "N", "O", "S", "P", "F")


class UnsupportedFeature(MolgaError):
    """SMILES feature outside the supported subset (charges, stereo, ...)."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class SmilesSyntaxError(MolgaError):
    """Malformed SMILES input."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class KekulizationFailure(MolgaError):
    """No alternating single/double assignment exists for an aromatic system."""


class ValenceViolation(MolgaError):
    """Parsed molecule exceeds a valence cap."""


class MolecularGraph:
    """Immutable heavy-atom graph.

    Atom indices are dense 0..n-1 in placement order. Bonds are undirected
    with order in {1, 2, 3}. The constructor accepts structurally bad input
    (duplicate bonds, over-valent atoms, disconnected fragments) so that
    validate() can report the violations; self-loops and out-of-range
    indices are rejected outright.
    """

    __slots__ = ("elements", "bond_list", "bonds", "_adj", "_cache")

    def __init__(self, elements: Sequence[str], bonds: Iterable[tuple[int, int, int]]):
        self.elements: tuple[str, ...] = tuple(elements)
        n = len(self.elements)
        if n == 0:
            raise ValueError("graph needs at least one atom")
        for el in self.elements:
            if el not in VALENCE:
                raise ValueError(f"unknown element {el!r}")
        norm = []
        for i, j, order in bonds:
            if i == j:
                raise ValueError(f"self-loop on atom {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"bond ({i},{j}) out of range")
            if order not in (1, 2, 3):
                raise ValueError(f"bond order {order} not in 1..3")
            a, b = (i, j) if i < j else (j, i)
            norm.append((a, b, order))
        self.bond_list: tuple[tuple[int, int, int], ...] = tuple(norm)
        self.bonds: dict[tuple[int, int], int] = {(a, b): o for a, b, o in norm}
        adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for (a, b), o in self.bonds.items():
            adj[a].append((b, o))
            adj[b].append((a, o))
        for lst in adj:
            lst.sort()
        self._adj: tuple[tuple[tuple[int, int], ...], ...] = tuple(tuple(l) for l in adj)
        self._cache: dict = {}

    @property
    def n_atoms(self) -> int:
        return len(self.elements)

    def neighbors(self, i: int) -> tuple[tuple[int, int], ...]:
        """(neighbor index, bond order) pairs, sorted by neighbor index."""
        return self._adj[i]

    def degree(self, i: int) -> int:
        return len(self._adj[i])

    def bond_order_sum(self, i: int) -> int:
        return sum(o for _, o in self._adj[i])

    def implicit_hydrogens(self, i: int) -> int:
        return max(VALENCE[self.elements[i]] - self.bond_order_sum(i), 0)

    def bond_order(self, i: int, j: int) -> int | None:
        a, b = (i, j) if i < j else (j, i)
        return self.bonds.get((a, b))

    def __repr__(self) -> str:
        return f"MolecularGraph({len(self.elements)} atoms, {len(self.bonds)} bonds)"

    def int_adjacency(self) -> list[list[int]]:
        """Neighbor indices only (no orders); cached."""
        if "int_adj" not in self._cache:
            self._cache["int_adj"] = [[v for v, _ in nbrs] for nbrs in self._adj]
        return self._cache["int_adj"]

    # Derived data is memoized on the instance; graphs are never mutated.
    def ring_basis(self) -> tuple[tuple[int, ...], ...]:
        if "rings" not in self._cache:
            self._cache["rings"] = _minimum_cycle_basis(self)
        return self._cache["rings"]

    def ring_atoms(self) -> frozenset[int]:
        if "ring_atoms" not in self._cache:
            atoms: set[int] = set()
            for cyc in self.ring_basis():
                atoms.update(cyc)
            self._cache["ring_atoms"] = frozenset(atoms)
        return self._cache["ring_atoms"]

    def canonical(self) -> str:
        if "canonical" not in self._cache:
            self._cache["canonical"] = _canonical_string(self)
        return self._cache["canonical"]

    def fingerprint(self, radius: int = 2, nbits: int = 1024) -> "Fingerprint":
        key = ("fp", radius, nbits)
        if key not in self._cache:
            self._cache[key] = _fingerprint(self, radius, nbits)
        return self._cache[key]


def methane() -> MolecularGraph:
    """Single-carbon graph; the decoder's fallback and the GA's seed."""
    return MolecularGraph(["C"], [])


def validate(g: MolecularGraph) -> list[str]:
    """Return a list of violations; empty means the graph is valid.

    Checks every atom's bond-order sum against its valence cap, parallel
    bonds, and connectivity.
    """
    problems: list[str] = []
    seen: set[tuple[int, int]] = set()
    for a, b, _ in g.bond_list:
        if (a, b) in seen:
            problems.append(f"parallel bond between atoms {a} and {b}")
        seen.add((a, b))
    for i, el in enumerate(g.elements):
        total = g.bond_order_sum(i)
        if total > VALENCE[el]:
            problems.append(f"atom {i} ({el}) bond-order sum {total} exceeds cap {VALENCE[el]}")
    if g.n_atoms > 1:
        seen_atoms = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v, _ in g.neighbors(u):
                if v not in seen_atoms:
                    seen_atoms.add(v)
                    stack.append(v)
        missing = [i for i in range(g.n_atoms) if i not in seen_atoms]
        if missing:
            problems.append(f"disconnected atoms: {missing}")
    return problems


def rings(g: MolecularGraph) -> list[tuple[int, ...]]:
    """Minimum cycle basis as tuples of atom indices (one entry per cycle)."""
    return list(g.ring_basis())


# ---------------------------------------------------------------------------
# Minimum cycle basis (Horton-style): candidate cycles are the shortest cycle
# through each edge plus the spanning-forest fundamental cycles, greedily
# selected for GF(2) independence in order of increasing length.
# ---------------------------------------------------------------------------


def _edge_index_map(g: MolecularGraph) -> dict[tuple[int, int], int]:
    return {e: i for i, e in enumerate(sorted(g.bonds))}


def _cycle_mask(cycle: tuple[int, ...], eidx: dict[tuple[int, int], int]) -> int:
    mask = 0
    k = len(cycle)
    for i in range(k):
        a, b = cycle[i], cycle[(i + 1) % k]
        e = (a, b) if a < b else (b, a)
        mask |= 1 << eidx[e]
    return mask


def _canonical_cycle(atoms: list[int]) -> tuple[int, ...]:
    """Rotate/reflect a cycle's atom list into a deterministic form."""
    k = len(atoms)
    lowest = min(atoms)
    best: tuple[int, ...] | None = None
    for start in (i for i, a in enumerate(atoms) if a == lowest):
        for step in (1, -1):
            cand = tuple(atoms[(start + step * i) % k] for i in range(k))
            if best is None or cand < best:
                best = cand
    assert best is not None
    return best


def _shortest_path_avoiding(g: MolecularGraph, src: int, dst: int,
                            skip: tuple[int, int]) -> list[int] | None:
    """BFS path src..dst that never crosses the `skip` edge."""
    if src == dst:
        return [src]
    parent: dict[int, int] = {src: -1}
    queue = [src]
    while queue:
        nxt: list[int] = []
        for u in queue:
            for v, _ in g.neighbors(u):
                e = (u, v) if u < v else (v, u)
                if e == skip or v in parent:
                    continue
                parent[v] = u
                if v == dst:
                    path = [v]
                    while path[-1] != src:
                        path.append(parent[path[-1]])
                    path.reverse()
                    return path
                nxt.append(v)
        queue = nxt
    return None


def _bridges(g: MolecularGraph) -> set[tuple[int, int]]:
    """Edges not on any cycle (iterative low-link)."""
    n = g.n_atoms
    adj = g.int_adjacency()
    disc = [-1] * n
    low = [0] * n
    out: set[tuple[int, int]] = set()
    counter = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        stack: list[tuple[int, int, int]] = [(root, -1, 0)]
        while stack:
            u, parent, idx = stack.pop()
            if idx == 0:
                disc[u] = low[u] = counter
                counter += 1
            advanced = False
            nbrs = adj[u]
            while idx < len(nbrs):
                v = nbrs[idx]
                idx += 1
                if v == parent:
                    # skip exactly one parent edge occurrence (no parallels here)
                    parent = -2
                    continue
                if disc[v] == -1:
                    stack.append((u, parent, idx))
                    stack.append((v, u, 0))
                    advanced = True
                    break
                low[u] = min(low[u], disc[v])
            if not advanced and stack:
                pu, _, _ = stack[-1]
                low[pu] = min(low[pu], low[u])
                if low[u] > disc[pu]:
                    out.add((pu, u) if pu < u else (u, pu))
    return out


def _fundamental_cycles(g: MolecularGraph) -> list[tuple[int, ...]]:
    parent: dict[int, int] = {}
    depth: dict[int, int] = {}
    tree_edges: set[tuple[int, int]] = set()
    cycles: list[tuple[int, ...]] = []
    for root in range(g.n_atoms):
        if root in parent:
            continue
        parent[root] = -1
        depth[root] = 0
        stack = [root]
        while stack:
            u = stack.pop()
            for v, _ in g.neighbors(u):
                if v not in parent:
                    parent[v] = u
                    depth[v] = depth[u] + 1
                    tree_edges.add((u, v) if u < v else (v, u))
                    stack.append(v)
    for a, b in sorted(g.bonds):
        if (a, b) in tree_edges:
            continue
        # walk both endpoints up to their common ancestor
        pa, pb = a, b
        left, right = [a], [b]
        while depth[pa] > depth[pb]:
            pa = parent[pa]
            left.append(pa)
        while depth[pb] > depth[pa]:
            pb = parent[pb]
            right.append(pb)
        while pa != pb:
            pa = parent[pa]
            pb = parent[pb]
            left.append(pa)
            right.append(pb)
        cycle = left + right[-2::-1]  # drop duplicated ancestor
        cycles.append(_canonical_cycle(cycle))
    return cycles


def _minimum_cycle_basis(g: MolecularGraph) -> tuple[tuple[int, ...], ...]:
    n_components = 0
    seen: set[int] = set()
    for root in range(g.n_atoms):
        if root in seen:
            continue
        n_components += 1
        seen.add(root)
        stack = [root]
        while stack:
            u = stack.pop()
            for v, _ in g.neighbors(u):
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
    target_rank = len(g.bonds) - g.n_atoms + n_components
    if target_rank <= 0:
        return ()

    eidx = _edge_index_map(g)
    candidates: dict[int, tuple[int, ...]] = {}  # edge mask -> atom tuple

    def consider(cycle: tuple[int, ...]) -> None:
        candidates.setdefault(_cycle_mask(cycle, eidx), cycle)

    bridges = _bridges(g)
    for a, b in sorted(g.bonds):
        if (a, b) in bridges:
            continue  # no cycle through a bridge
        path = _shortest_path_avoiding(g, a, b, (a, b))
        if path is not None:
            consider(_canonical_cycle(path))
    for cyc in _fundamental_cycles(g):
        consider(cyc)

    def invariant_key(cycle: tuple[int, ...]):
        # labeling-independent ordering: length, then multisets of local atom
        # invariants and of the cycle's bond orders; final tie-break on the
        # canonical atom tuple (ties at the full key are near-always
        # automorphic images of each other)
        atom_sig = tuple(sorted(
            (g.elements[a], g.degree(a), g.bond_order_sum(a)) for a in cycle))
        k = len(cycle)
        bond_sig = tuple(sorted(
            g.bonds[(cycle[i], cycle[(i + 1) % k]) if cycle[i] < cycle[(i + 1) % k]
                    else (cycle[(i + 1) % k], cycle[i])]
            for i in range(k)))
        return (k, atom_sig, bond_sig, cycle)

    ordered = sorted(candidates.items(), key=lambda kv: invariant_key(kv[1]))
    basis: list[tuple[int, ...]] = []
    pivots: list[int] = []  # row-reduced masks
    for mask, cyc in ordered:
        reduced = mask
        for p in pivots:
            if reduced & (p & -p):
                reduced ^= p
        if reduced:
            pivots.append(reduced)
            pivots.sort(key=lambda m: -(m & -m))
            basis.append(cyc)
            if len(basis) == target_rank:
                break
    return tuple(basis)


# ---------------------------------------------------------------------------
# Canonical serialization: Morgan-style refinement ranks atoms; a DFS from
# the lowest-ranked atom emits a SMILES-subset string; remaining rank ties
# are resolved by enumerating the tied orderings and keeping the
# lexicographically smallest rendering.
# ---------------------------------------------------------------------------


def _refined_ranks(g: MolecularGraph) -> list[int]:
    if "ranks" in g._cache:
        return g._cache["ranks"]
    n = g.n_atoms
    ring = g.ring_atoms()
    sig: list = [
        (g.elements[i], g.degree(i), g.bond_order_sum(i), i in ring)
        for i in range(n)
    ]
    ranks = _ranks_from_signatures(sig)
    n_classes = len(set(ranks))
    for _ in range(n):
        sig = [
            (ranks[i], tuple(sorted((o, ranks[v]) for v, o in g.neighbors(i))))
            for i in range(n)
        ]
        new_ranks = _ranks_from_signatures(sig)
        new_classes = len(set(new_ranks))
        if new_classes == n_classes:
            ranks = new_ranks
            break
        ranks, n_classes = new_ranks, new_classes
    g._cache["ranks"] = ranks
    return ranks


def _ranks_from_signatures(sig: list) -> list[int]:
    order = {s: r for r, s in enumerate(sorted(set(sig)))}
    return [order[s] for s in sig]


_BOND_CHAR = {1: "", 2: "=", 3: "#"}


def _canonical_string(g: MolecularGraph) -> str:
    n = g.n_atoms
    if n == 1:
        return g.elements[0]
    ranks = _refined_ranks(g)
    lowest = min(ranks)
    best: list[str | None] = [None]
    for start in range(n):
        if ranks[start] == lowest:
            _enumerate_traversals(g, start, ranks, best)
    assert best[0] is not None
    return best[0]


def _enumerate_traversals(g: MolecularGraph, start: int, ranks: list[int],
                          best: list[str | None]) -> None:
    """DFS from `start`; tied neighbor orderings are all tried, and `best`
    keeps the minimal rendered string."""
    pos: dict[int, int] = {start: 0}
    children: dict[int, list[int]] = {start: []}
    closure_edges: list[tuple[int, int]] = []  # processing order
    classified: set[tuple[int, int]] = set()

    def finish() -> None:
        s = _render(g, start, children, closure_edges, pos)
        if best[0] is None or s < best[0]:
            best[0] = s

    def process(stack: list[int]) -> None:
        if not stack:
            finish()
            return
        u = stack[-1]
        pending = []
        for v, _ in g.neighbors(u):
            e = (u, v) if u < v else (v, u)
            if e not in classified:
                pending.append(v)
        if not pending:
            process(stack[:-1])
            return
        min_rank = min(ranks[v] for v in pending)
        group = [v for v in pending if ranks[v] == min_rank]
        for v in group:
            e = (u, v) if u < v else (v, u)
            classified.add(e)
            if v in pos:
                closure_edges.append((u, v))
                process(stack)
                closure_edges.pop()
            else:
                pos[v] = len(pos)
                children[v] = []
                children[u].append(v)
                process(stack + [v])
                children[u].pop()
                del children[v]
                del pos[v]
            classified.discard(e)

    process([start])


def _render(g: MolecularGraph, start: int, children: dict[int, list[int]],
            closure_edges: list[tuple[int, int]], pos: dict[int, int]) -> str:
    # Closure digits: the earlier-visited endpoint opens, the later closes.
    opens: dict[int, list[int]] = {}
    closes: dict[int, list[int]] = {}
    for k, (u, v) in enumerate(closure_edges):
        opener, closer = (u, v) if pos[u] < pos[v] else (v, u)
        opens.setdefault(opener, []).append(k)
        closes.setdefault(closer, []).append(k)
    digit_of: dict[int, str] = {}
    free: list[bool] = [True] * 100

    def take_digit(k: int) -> str:
        for d in range(1, 100):
            if free[d]:
                free[d] = False
                digit_of[k] = str(d) if d < 10 else f"%{d:02d}"
                return digit_of[k]
        raise RuntimeError("more than 99 simultaneously open ring closures")

    out: list[str] = []

    def emit(u: int) -> None:
        out.append(g.elements[u])
        for k in closes.get(u, []):
            u2, v2 = closure_edges[k]
            order = g.bond_order(u2, v2)
            assert order is not None
            out.append(_BOND_CHAR[order] + digit_of[k])
            d = int(digit_of[k].lstrip("%"))
            free[d] = True
        for k in opens.get(u, []):
            out.append(take_digit(k))
        kids = children[u]
        for i, c in enumerate(kids):
            order = g.bond_order(u, c)
            assert order is not None
            if i < len(kids) - 1:
                out.append("(" + _BOND_CHAR[order])
                emit(c)
                out.append(")")
            else:
                out.append(_BOND_CHAR[order])
                emit(c)

    emit(start)
    return "".join(out)


def canonical(g: MolecularGraph) -> str:
    """Deterministic SMILES-subset serialization; isomorphic graphs yield
    identical text."""
    return g.canonical()


# ---------------------------------------------------------------------------
# Restricted SMILES reader
# ---------------------------------------------------------------------------

_AROMATIC = {"c": "C", "n": "N", "o": "O", "s": "S"}
_ALIPHATIC = set("CNOSPF")
_BOND_ORDER = {"-": 1, "=": 2, "#": 3}


def parse_smiles(text: str) -> MolecularGraph:
    """Parse the supported SMILES subset into a molecular graph.

    Supported: atoms C N O S P F, aromatic c n o s, bonds - = #,
    parenthesized branches, ring closures 1-9 and %nn. Aromatic systems are
    Kekulized (alternating double bonds via a matching that covers every
    aromatic carbon). Anything else raises with a byte offset.
    """
    elements: list[str] = []
    aromatic: list[bool] = []
    bonds: list[tuple[int, int, int | None]] = []  # None = aromatic default
    anchor: int | None = None
    pending: int | None = None
    pending_off = 0
    branch_stack: list[int] = []
    ring_open: dict[int, tuple[int, int | None]] = {}

    def add_atom(el: str, is_ar: bool, off: int) -> None:
        nonlocal anchor, pending
        idx = len(elements)
        elements.append(el)
        aromatic.append(is_ar)
        if anchor is not None:
            order: int | None
            if pending is not None:
                order = pending
            elif aromatic[anchor] and is_ar:
                order = None
            else:
                order = 1
            bonds.append((anchor, idx, order))
        elif pending is not None:
            raise SmilesSyntaxError("bond with no preceding atom", pending_off)
        pending = None
        anchor = idx

    def close_ring(num: int, off: int) -> None:
        nonlocal pending
        if anchor is None:
            raise SmilesSyntaxError("ring closure before any atom", off)
        if num in ring_open:
            other, order_open = ring_open.pop(num)
            if other == anchor:
                raise SmilesSyntaxError(f"ring closure {num} bonds an atom to itself", off)
            if order_open is not None and pending is not None and order_open != pending:
                raise SmilesSyntaxError(f"conflicting bond orders on ring closure {num}", off)
            order: int | None
            if pending is not None:
                order = pending
            elif order_open is not None:
                order = order_open
            elif aromatic[other] and aromatic[anchor]:
                order = None
            else:
                order = 1
            a, b = (other, anchor) if other < anchor else (anchor, other)
            if any(x == a and y == b for x, y, _ in bonds):
                raise SmilesSyntaxError(f"duplicate bond via ring closure {num}", off)
            bonds.append((a, b, order))
        else:
            ring_open[num] = (anchor, pending)
        pending = None

    i = 0
    n = len(text)
    if n == 0:
        raise SmilesSyntaxError("empty SMILES", 0)
    while i < n:
        ch = text[i]
        if ch in _ALIPHATIC:
            if ch == "C" and i + 1 < n and text[i + 1] == "l":
                raise UnsupportedFeature("element Cl not supported", i)
            add_atom(ch, False, i)
            i += 1
        elif ch in _AROMATIC:
            add_atom(_AROMATIC[ch], True, i)
            i += 1
        elif ch == "B":
            if i + 1 < n and text[i + 1] == "r":
                raise UnsupportedFeature("element Br not supported", i)
            raise UnsupportedFeature("element B not supported", i)
        elif ch in "-=#":
            if pending is not None:
                raise SmilesSyntaxError("two consecutive bond symbols", i)
            pending = _BOND_ORDER[ch]
            pending_off = i
            i += 1
        elif ch == "(":
            if anchor is None:
                raise SmilesSyntaxError("branch before any atom", i)
            if pending is not None:
                raise SmilesSyntaxError("bond symbol before branch open", i)
            branch_stack.append(anchor)
            i += 1
        elif ch == ")":
            if not branch_stack:
                raise SmilesSyntaxError("unmatched ')'", i)
            if pending is not None:
                raise SmilesSyntaxError("dangling bond before ')'", i)
            anchor = branch_stack.pop()
            i += 1
        elif ch.isdigit():
            if ch == "0":
                raise SmilesSyntaxError("ring closure 0 is not allowed", i)
            close_ring(int(ch), i)
            i += 1
        elif ch == "%":
            if i + 2 >= n or not (text[i + 1].isdigit() and text[i + 2].isdigit()):
                raise SmilesSyntaxError("'%' needs two digits", i)
            close_ring(int(text[i + 1 : i + 3]), i)
            i += 3
        elif ch == "[":
            raise UnsupportedFeature("bracket atoms (charges, isotopes, explicit H) not supported", i)
        elif ch in "/\\@":
            raise UnsupportedFeature("stereochemistry not supported", i)
        elif ch == ".":
            raise UnsupportedFeature("disconnected components not supported", i)
        elif ch in "bp":
            raise UnsupportedFeature(f"aromatic element {ch!r} not supported", i)
        else:
            raise SmilesSyntaxError(f"unexpected character {ch!r}", i)
    if pending is not None:
        raise SmilesSyntaxError("dangling bond at end of input", pending_off)
    if branch_stack:
        raise SmilesSyntaxError("unclosed branch", n - 1)
    if ring_open:
        raise SmilesSyntaxError(f"unclosed ring closure {sorted(ring_open)[0]}", n - 1)

    resolved = _kekulize(elements, aromatic, bonds)
    g = MolecularGraph(elements, resolved)
    problems = validate(g)
    if problems:
        raise ValenceViolation("; ".join(problems))
    return g


def _kekulize(elements: list[str], aromatic: list[bool],
              bonds: list[tuple[int, int, int | None]]) -> list[tuple[int, int, int]]:
    ar_edges = [(a, b) for a, b, o in bonds if o is None]
    if not ar_edges and not any(aromatic):
        return [(a, b, o) for a, b, o in bonds if o is not None]

    # every aromatic atom must sit on a ring
    probe = MolecularGraph(elements, [(a, b, 1) for a, b, _ in bonds])
    in_ring = probe.ring_atoms()
    for idx, is_ar in enumerate(aromatic):
        if is_ar and idx not in in_ring:
            raise KekulizationFailure(f"aromatic atom {idx} is not in a ring")

    # capacity with every bond counted at face value (aromatic as single)
    load = [0] * len(elements)
    for a, b, o in bonds:
        order = 1 if o is None else o
        load[a] += order
        load[b] += order
    capacity = [VALENCE[elements[i]] - load[i] for i in range(len(elements))]

    must = [i for i in range(len(elements)) if aromatic[i] and elements[i] == "C"]
    for i in must:
        if capacity[i] < 1:
            raise KekulizationFailure(f"aromatic carbon {i} has no capacity for a double bond")

    ar_neighbors: dict[int, list[int]] = {}
    for a, b in ar_edges:
        ar_neighbors.setdefault(a, []).append(b)
        ar_neighbors.setdefault(b, []).append(a)

    matched: dict[int, int] = {}

    def backtrack(k: int) -> bool:
        while k < len(must) and must[k] in matched:
            k += 1
        if k == len(must):
            return True
        u = must[k]
        for v in ar_neighbors.get(u, []):
            if v in matched or not aromatic[v] or capacity[v] < 1:
                continue
            matched[u] = v
            matched[v] = u
            if backtrack(k + 1):
                return True
            del matched[u]
            del matched[v]
        return False

    if not backtrack(0):
        raise KekulizationFailure("no alternating double-bond assignment covers every aromatic carbon")

    out: list[tuple[int, int, int]] = []
    for a, b, o in bonds:
        if o is not None:
            out.append((a, b, o))
        elif matched.get(a) == b:
            out.append((a, b, 2))
        else:
            out.append((a, b, 1))
    return out


# ---------------------------------------------------------------------------
# Circular fingerprints and Tanimoto similarity
# ---------------------------------------------------------------------------

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def _fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _hash_ints(values: Iterable[int]) -> int:
    buf = bytearray()
    for v in values:
        buf.extend(int(v).to_bytes(8, "big", signed=False))
    return _fnv1a(bytes(buf))


@dataclass(frozen=True)
class Fingerprint:
    """Folded circular fingerprint: the set of on bits in an nbits vector."""

    nbits: int
    bits: frozenset[int]

    def to_array(self):
        import numpy as np

        arr = np.zeros(self.nbits, dtype=np.float64)
        if self.bits:
            arr[sorted(self.bits)] = 1.0
        return arr


_ELEMENT_CODE = {el: k for k, el in enumerate(ELEMENTS)}


def _fingerprint(g: MolecularGraph, radius: int, nbits: int) -> Fingerprint:
    ring = g.ring_atoms()
    inv = [
        _hash_ints((_ELEMENT_CODE[g.elements[i]], g.degree(i),
                    g.implicit_hydrogens(i), 1 if i in ring else 0))
        for i in range(g.n_atoms)
    ]
    bits: set[int] = {h % nbits for h in inv}
    for _ in range(radius):
        new_inv = []
        for i in range(g.n_atoms):
            parts = [inv[i]]
            for order, nbr_inv in sorted((o, inv[v]) for v, o in g.neighbors(i)):
                parts.append(order)
                parts.append(nbr_inv)
            new_inv.append(_hash_ints(parts))
        inv = new_inv
        bits.update(h % nbits for h in inv)
    return Fingerprint(nbits, frozenset(bits))


def fingerprint(g: MolecularGraph, radius: int = 2, nbits: int = 1024) -> Fingerprint:
    """ECFP-style circular fingerprint with FNV-1a hashed neighborhoods."""
    return g.fingerprint(radius, nbits)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """Bit-set intersection over union; 1.0 when both sets are empty."""
    if a.nbits != b.nbits:
        raise ValueError(f"fingerprint sizes differ: {a.nbits} vs {b.nbits}")
    if not a.bits and not b.bits:
        return 1.0
    inter = len(a.bits & b.bits)
    union = len(a.bits | b.bits)
    return inter / union
