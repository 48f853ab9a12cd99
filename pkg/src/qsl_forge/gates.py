"""Catalog of the two-qubit target gates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .opspace import is_unitary


@dataclass(frozen=True)
class GateCatalogEntry:
    name: str
    matrix: np.ndarray
    provenance: str


def _build():
    swap = np.array([[1, 0, 0, 0],
                     [0, 0, 1, 0],
                     [0, 1, 0, 0],
                     [0, 0, 0, 1]], dtype=complex)
    qft_q = swap.copy()
    qft_q[3, 3] = 1j
    qft = 0.5 * np.array([[1, 1, 1, 1],
                          [1, 1j, -1, -1j],
                          [1, -1, 1, -1],
                          [1, -1j, -1, 1j]], dtype=complex)
    hadamard = 0.5 * np.array([[1, 1, 1, 1],
                               [1, -1, 1, -1],
                               [1, 1, -1, -1],
                               [1, -1, -1, 1]], dtype=complex)
    cnot = np.array([[1, 0, 0, 0],
                     [0, 1, 0, 0],
                     [0, 0, 0, 1],
                     [0, 0, 1, 0]], dtype=complex)
    entries = [
        GateCatalogEntry("SWAP", swap, "brachistochrone example, SWAP gate matrix"),
        GateCatalogEntry('"QFT"', qft_q, 'brachistochrone example, "QFT" analog gate matrix'),
        GateCatalogEntry("QFT", qft, "two-qubit quantum Fourier transform"),
        GateCatalogEntry("Hadamard", hadamard, "two-qubit Hadamard transform H (x) H"),
        GateCatalogEntry("CNOT", cnot, "controlled-NOT, SWAP up to a basis-label permutation"),
    ]
    for e in entries:
        e.matrix.setflags(write=False)
        assert is_unitary(e.matrix, 1e-12), e.name
    return {e.name: e for e in entries}


CATALOG = _build()

# spellings accepted on the command line and in configs
ALIASES = {"QFT_ANALOG": '"QFT"', "QFT-ANALOG": '"QFT"', "QFTQ": '"QFT"', "'QFT'": '"QFT"'}

# the four gates of the optimization tables, in table row order
TABLE_GATES = ("QFT", '"QFT"', "Hadamard", "CNOT")


def canonical_name(name: str) -> str:
    if name in CATALOG:
        return name
    key = name.strip()
    if key.upper() in ALIASES:
        return ALIASES[key.upper()]
    for k in CATALOG:
        if k.lower() == key.lower():
            return k
    raise KeyError(f"unknown gate {name!r}; catalog: {', '.join(CATALOG)}")


def gate(name: str) -> GateCatalogEntry:
    return CATALOG[canonical_name(name)]


def slug(name: str) -> str:
    """Filesystem-safe gate label."""
    return {'"QFT"': "QFT_analog"}.get(canonical_name(name), canonical_name(name))
