"""The two outer qubit codes: the [[4,1,2]] code and the [[7,1,3]] Steane code.

Qubits are 1-based in user-facing names (``Q1`` ... ``Q7``) and 0-based in
every array.  ``to_index``/``to_label`` is the only place the shift happens.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

CODE_NAMES = ("c4", "steane7")


def to_index(label: int) -> int:
    return label - 1


def to_label(index: int) -> int:
    return index + 1


def _support(*labels: int) -> frozenset[int]:
    return frozenset(to_index(q) for q in labels)


@dataclass(frozen=True)
class OuterCode:
    name: str
    n: int
    z_stabilizers: tuple[frozenset[int], ...]
    x_stabilizers: tuple[frozenset[int], ...]
    logical_x: frozenset[int]
    logical_z: frozenset[int]

    def stabilizers(self, kind: str) -> tuple[frozenset[int], ...]:
        """``kind`` 'Z' detects bit flips (q shifts), 'X' detects phase flips (p shifts)."""
        return self.z_stabilizers if kind == "Z" else self.x_stabilizers

    def check_matrix(self, kind: str) -> np.ndarray:
        stabs = self.stabilizers(kind)
        h = np.zeros((len(stabs), self.n), dtype=np.uint8)
        for i, s in enumerate(stabs):
            h[i, list(s)] = 1
        return h

    def syndrome(self, kind: str, flips) -> np.ndarray:
        """Syndrome bits of a flip pattern (or a batch of patterns on the last axis)."""
        flips = np.asarray(flips, dtype=np.uint8)
        return (flips @ self.check_matrix(kind).T) % 2

    def logical_support(self, kind: str) -> frozenset[int]:
        """Support of the logical operator a ``kind`` flip pattern must anticommute with."""
        return self.logical_z if kind == "Z" else self.logical_x

    def commutes(self) -> bool:
        return all(len(a & b) % 2 == 0 for a in self.z_stabilizers for b in self.x_stabilizers)


def build_code(name: str) -> OuterCode:
    if name == "c4":
        return OuterCode(
            name="c4", n=4,
            z_stabilizers=(_support(1, 2), _support(3, 4)),
            x_stabilizers=(_support(1, 2, 3, 4),),
            logical_x=_support(1, 2),
            logical_z=_support(1, 3),
        )
    if name == "steane7":
        stabs = (_support(4, 5, 6, 7), _support(2, 3, 6, 7), _support(1, 3, 5, 7))
        everything = _support(*range(1, 8))
        return OuterCode(
            name="steane7", n=7, z_stabilizers=stabs, x_stabilizers=stabs,
            logical_x=everything, logical_z=everything,
        )
    raise ValueError(f"unknown outer code {name!r}; expected one of {CODE_NAMES}")


def _syndrome_of(code: OuterCode, kind: str, support) -> tuple[int, ...]:
    return tuple(len(s & set(support)) % 2 for s in code.stabilizers(kind))


@lru_cache(maxsize=None)
def syndrome_table(code_name: str, kind: str) -> dict[tuple[int, ...], list[frozenset[int]]]:
    """Map each syndrome to its single- and two-qubit candidate errors.

    Candidates appear single-qubit first, then pairs in lexicographic order.
    """
    code = build_code(code_name)
    table: dict[tuple[int, ...], list[frozenset[int]]] = {}
    for w in (1, 2):
        for sup in itertools.combinations(range(code.n), w):
            syn = _syndrome_of(code, kind, sup)
            if any(syn):
                table.setdefault(syn, []).append(frozenset(sup))
    return table


def candidate_errors(code: OuterCode, syndrome, kind: str = "Z") -> list[frozenset[int]]:
    syndrome = tuple(int(b) for b in syndrome)
    if len(syndrome) != len(code.stabilizers(kind)):
        raise ValueError("syndrome length does not match the stabilizer count")
    if not any(syndrome):
        return []
    return list(syndrome_table(code.name, kind).get(syndrome, []))


@lru_cache(maxsize=None)
def min_weight_table(code_name: str, kind: str) -> np.ndarray:
    """Minimum-weight flip pattern for every syndrome, indexed by the syndrome read as binary.

    Ties go to the lexicographically first support.
    """
    code = build_code(code_name)
    m = len(code.stabilizers(kind))
    out = np.zeros((2 ** m, code.n), dtype=np.uint8)
    seen = {0}
    for w in range(1, code.n + 1):
        for sup in itertools.combinations(range(code.n), w):
            idx = syndrome_index(_syndrome_of(code, kind, sup))
            if idx not in seen:
                seen.add(idx)
                out[idx, list(sup)] = 1
    return out


def syndrome_index(bits) -> int:
    v = 0
    for b in bits:
        v = 2 * v + int(b)
    return v


def logical_measurement_plan(code: OuterCode, basis: str) -> list[tuple[int, str]]:
    """Homodyne settings (0-based qubit, basis) whose XOR gives the logical outcome.

    The GKP bases map to quadratures as Z -> q, X -> p and Y -> the diagonal q + p.
    """
    basis = basis.upper()
    if basis not in ("X", "Y", "Z"):
        raise ValueError(f"basis must be X, Y or Z, got {basis!r}")
    if code.name == "steane7":
        return [(i, basis) for i in range(code.n)]
    if basis == "Z":
        return [(i, "Z") for i in sorted(code.logical_z)]
    if basis == "X":
        return [(i, "X") for i in sorted(code.logical_x)]
    # Y_L = i X_L Z_L = Y1 X2 Z3
    return [(to_index(1), "Y"), (to_index(2), "X"), (to_index(3), "Z")]


QUADRATURE_OF_BASIS = {"Z": "q", "X": "p", "Y": "q+p"}


def min_distance(code: OuterCode, kind: str) -> int:
    """Smallest weight of a flip pattern with zero syndrome that acts as a logical."""
    logical = code.logical_support(kind)
    for w in range(1, code.n + 1):
        for sup in itertools.combinations(range(code.n), w):
            if not any(_syndrome_of(code, kind, sup)) and len(logical & set(sup)) % 2:
                return w
    return code.n + 1
