"""Kekulized SMILES subset: parser and writer.

Grammar: element tokens from the configured vocabulary (two-letter
symbols such as Cl/Br/Si matched greedily), bond tokens ``- = #``,
parenthesized branches, and ring-closure digits 1-9. No aromatic
lowercase forms, brackets, charges, isotopes, or stereochemistry.
The parser is total: every input yields a MolGraph or a typed error.
"""

from __future__ import annotations

import numpy as np

from .config import GraphShape
from .errors import (
    AromaticSmilesError,
    DisconnectedGraphError,
    MoleculeTooLargeError,
    SmilesSyntaxError,
    UnknownElementError,
)
from .graphs import MolGraph, graph_from_lists

_BOND_CHARS = {"-": 1, "=": 2, "#": 3}
_BOND_SYMBOL = {1: "", 2: "=", 3: "#"}
# Lowercase letters SMILES uses for aromatic atoms; anything else
# lowercase (not consumed by a two-letter symbol) is a plain syntax error.
_AROMATIC_CHARS = set("bcnops")


def parse_smiles(s: str, shape: GraphShape | None = None) -> MolGraph:
    """Parse a SMILES string into a MolGraph.

    Raises SmilesSyntaxError / UnknownElementError / AromaticSmilesError /
    MoleculeTooLargeError; never anything else, for any input string.
    """
    shape = shape or GraphShape()
    if not isinstance(s, str) or not s:
        raise SmilesSyntaxError("empty SMILES string")
    if not s.isascii():
        raise SmilesSyntaxError("SMILES must be ASCII")

    vocab = shape.vocab
    two_letter = vocab.two_letter_symbols()
    types: list[int] = []
    bonds: dict[tuple[int, int], int] = {}
    prev: int | None = None
    pending: int | None = None
    branch_stack: list[int] = []
    ring_open: dict[str, tuple[int, int | None]] = {}

    def add_bond(i: int, j: int, order: int, pos: int):
        if i == j:
            raise SmilesSyntaxError("ring closure bonds an atom to itself", pos)
        key = (min(i, j), max(i, j))
        if key in bonds:
            raise SmilesSyntaxError("duplicate bond between the same atoms", pos)
        bonds[key] = order

    def add_atom(type_index: int, pos: int):
        nonlocal prev, pending
        if len(types) >= shape.max_atoms:
            raise MoleculeTooLargeError(
                f"more than {shape.max_atoms} heavy atoms")
        types.append(type_index)
        idx = len(types) - 1
        if prev is not None:
            add_bond(prev, idx, pending if pending is not None else 1, pos)
        prev = idx
        pending = None

    i = 0
    while i < len(s):
        ch = s[i]
        if ch.isupper():
            symbol = None
            if i + 1 < len(s) and s[i:i + 2] in two_letter:
                symbol = s[i:i + 2]
            elif ch in vocab.symbols:
                symbol = ch
            if symbol is None:
                # Element-shaped token outside the vocabulary, e.g. "Zn".
                token = ch
                if i + 1 < len(s) and s[i + 1].islower():
                    token = s[i:i + 2]
                raise UnknownElementError(f"element {token!r} not in vocabulary", i)
            add_atom(vocab.index(symbol), i)
            i += len(symbol)
        elif ch.islower():
            if ch in _AROMATIC_CHARS:
                raise AromaticSmilesError(
                    f"aromatic atom {ch!r}; input must be kekulized", i)
            raise SmilesSyntaxError(f"unexpected character {ch!r}", i)
        elif ch in _BOND_CHARS:
            if pending is not None:
                raise SmilesSyntaxError("two bond symbols in a row", i)
            if prev is None:
                raise SmilesSyntaxError("bond symbol before any atom", i)
            pending = _BOND_CHARS[ch]
            i += 1
        elif ch.isdigit():
            if ch == "0":
                raise SmilesSyntaxError("ring-closure digit must be 1-9", i)
            if prev is None:
                raise SmilesSyntaxError("ring closure before any atom", i)
            if ch in ring_open:
                other, opening_order = ring_open.pop(ch)
                if (pending is not None and opening_order is not None
                        and pending != opening_order):
                    raise SmilesSyntaxError(
                        f"conflicting bond orders on ring closure {ch}", i)
                order = pending if pending is not None else opening_order
                add_bond(prev, other, order if order is not None else 1, i)
            else:
                ring_open[ch] = (prev, pending)
            pending = None
            i += 1
        elif ch == "(":
            if prev is None:
                raise SmilesSyntaxError("branch before any atom", i)
            if pending is not None:
                raise SmilesSyntaxError("bond symbol before a branch", i)
            branch_stack.append(prev)
            i += 1
        elif ch == ")":
            if not branch_stack:
                raise SmilesSyntaxError("unmatched ')'", i)
            if pending is not None:
                raise SmilesSyntaxError("dangling bond symbol in branch", i)
            if prev == branch_stack[-1]:
                raise SmilesSyntaxError("empty branch", i)
            prev = branch_stack.pop()
            i += 1
        else:
            raise SmilesSyntaxError(f"unexpected character {ch!r}", i)

    if pending is not None:
        raise SmilesSyntaxError("dangling bond symbol at end of input", len(s) - 1)
    if branch_stack:
        raise SmilesSyntaxError("unclosed branch", len(s) - 1)
    if ring_open:
        digits = ",".join(sorted(ring_open))
        raise SmilesSyntaxError(f"unclosed ring closure(s) {digits}", len(s) - 1)
    if not types:
        raise SmilesSyntaxError("no atoms in SMILES string")

    return graph_from_lists(shape, types, [(i, j, o) for (i, j), o in bonds.items()])


def write_smiles(g: MolGraph) -> str:
    """Serialize a connected MolGraph back to the SMILES subset.

    The output re-parses to a graph isomorphic to the input. Traversal is
    a DFS from the lowest occupied slot, visiting neighbors in slot
    order, so the output is deterministic for a given slot layout.
    """
    if not g.is_connected():
        raise DisconnectedGraphError("write_smiles needs a connected graph")

    vocab = g.shape.vocab
    orders = g.bond_orders()
    occupied = np.nonzero(g.occupied)[0]
    root = int(occupied[0])

    # DFS spanning tree plus ring-closure (back) edges. Recursion depth
    # is bounded by the atom count.
    parent: dict[int, int | None] = {root: None}
    children: dict[int, list[int]] = {int(i): [] for i in occupied}
    closures: dict[int, list[int]] = {}      # atom -> partner atoms
    closure_edges: set[tuple[int, int]] = set()

    def dfs(u: int):
        for v in np.nonzero(orders[u])[0]:
            v = int(v)
            if v not in parent:
                parent[v] = u
                children[u].append(v)
                dfs(v)
            elif parent[u] != v:
                key = (min(u, v), max(u, v))
                if key not in closure_edges:
                    closure_edges.add(key)
                    closures.setdefault(u, []).append(v)
                    closures.setdefault(v, []).append(u)

    dfs(root)

    digit_of: dict[tuple[int, int], str] = {}
    free_digits = [str(d) for d in range(9, 0, -1)]

    def ring_tokens(u: int) -> str:
        out = []
        for v in closures.get(u, []):
            key = (min(u, v), max(u, v))
            if key not in digit_of:
                if not free_digits:
                    raise MoleculeTooLargeError(
                        "more than 9 simultaneously open ring closures")
                digit_of[key] = free_digits.pop()
                out.append(digit_of[key])
            else:
                digit = digit_of.pop(key)
                free_digits.append(digit)
                out.append(_BOND_SYMBOL[int(orders[u, v])] + digit)
        return "".join(out)

    pieces: list[str] = []

    def emit(u: int, bond_from_parent: str):
        # Recursion depth is bounded by the slot count (<= max_atoms).
        pieces.append(bond_from_parent + vocab.symbols[g.atom_type(u)])
        pieces.append(ring_tokens(u))
        kids = children[u]
        for idx, v in enumerate(kids):
            bond = _BOND_SYMBOL[int(orders[u, v])]
            if idx < len(kids) - 1:
                pieces.append("(")
                emit(v, bond)
                pieces.append(")")
            else:
                emit(v, bond)

    emit(root, "")
    return "".join(pieces)
