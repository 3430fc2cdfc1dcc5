"""Dense operator algebra for the small quantum oracle.

Operators are plain ``numpy`` complex arrays. Hamiltonians passed to
:func:`lindblad_superoperator` are expressed in angular-frequency units
(``H / hbar``), so no factor of hbar appears in the superoperators.

Vectorization is column-stacking: ``vec(rho) = rho.flatten(order="F")``,
for which ``vec(A X B) = kron(B.T, A) @ vec(X)``.
"""

from __future__ import annotations

from functools import reduce

import numpy as np

MAX_DIM = 4096

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    # basis order {|R>, |L>} (charge) or {|e>, |g>} (eigenbasis): sigma_z|0> = +|0>
    "plus": np.array([[0, 1], [0, 0]], dtype=complex),
    "minus": np.array([[0, 0], [1, 0]], dtype=complex),
}


def fock_annihilation(n_max: int) -> np.ndarray:
    """Truncated annihilation operator on Fock states ``|0> .. |n_max>``."""
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    return np.diag(np.sqrt(np.arange(1, n_max + 1)), k=1).astype(complex)


def number_operator(n_max: int) -> np.ndarray:
    a = fock_annihilation(n_max)
    return a.conj().T @ a


def pauli(kind: str) -> np.ndarray:
    """Two-level operator ``x``, ``y``, ``z``, ``plus`` or ``minus``."""
    try:
        return _PAULI[kind].copy()
    except KeyError:
        raise ValueError(f"unknown Pauli operator {kind!r}") from None


def identity(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex)


def tensor(*ops: np.ndarray, max_dim: int = MAX_DIM) -> np.ndarray:
    """Kronecker product of the given operators, left factor outermost."""
    if not ops:
        raise ValueError("tensor needs at least one operator")
    dim = int(np.prod([op.shape[0] for op in ops]))
    if dim > max_dim:
        raise ValueError(f"tensor dimension {dim} exceeds maximum {max_dim}")
    return reduce(np.kron, ops)


def embed(op: np.ndarray, position: int, dims: list[int]) -> np.ndarray:
    """Place ``op`` at ``position`` of a tensor product with identities elsewhere."""
    factors = [identity(d) for d in dims]
    factors[position] = op
    return tensor(*factors)


def is_hermitian(op: np.ndarray, rtol: float = 1e-12) -> bool:
    scale = max(np.abs(op).max(), 1.0)
    return bool(np.abs(op - op.conj().T).max() <= rtol * scale)


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).flatten(order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    dim = int(round(np.sqrt(v.shape[-1])))
    if dim * dim != v.shape[-1]:
        raise ValueError(f"length {v.shape[-1]} is not a perfect square")
    return np.asarray(v).reshape(dim, dim, order="F")


def left(op: np.ndarray) -> np.ndarray:
    """Superoperator for ``rho -> op @ rho``."""
    return np.kron(identity(op.shape[0]), op)


def right(op: np.ndarray) -> np.ndarray:
    """Superoperator for ``rho -> rho @ op``."""
    return np.kron(op.T, identity(op.shape[0]))


def commutator_superoperator(op: np.ndarray) -> np.ndarray:
    return left(op) - right(op)


def dissipator(c: np.ndarray) -> np.ndarray:
    """Superoperator of ``C rho C^dag - {C^dag C, rho}/2``."""
    cdc = c.conj().T @ c
    return np.kron(c.conj(), c) - 0.5 * (left(cdc) + right(cdc))


def lindblad_superoperator(
    H: np.ndarray, collapse_ops: list[tuple[float, np.ndarray]]
) -> np.ndarray:
    """Generator ``L`` with ``d vec(rho)/dt = L @ vec(rho)``.

    Parameters
    ----------
    H : ndarray
        Hermitian Hamiltonian in rad/s (i.e. already divided by hbar).
    collapse_ops : list of (rate, C)
        Each contributes ``rate * D[C]``. Rates must be non-negative.
    """
    if not is_hermitian(H):
        raise ValueError("Hamiltonian is not Hermitian")
    L = -1j * commutator_superoperator(H)
    for rate, c in collapse_ops:
        if rate < 0:
            raise ValueError(f"negative collapse rate {rate}")
        if rate:
            L = L + rate * dissipator(c)
    return L
