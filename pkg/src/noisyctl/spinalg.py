"""su(2) generators, model Hamiltonians and generic operator utilities.

Operators are stored dense; at the sizes used here (d <= 129) that is both the
simplest and the fastest representation.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

HERMITIAN_TOL = 1e-12
DEGENERACY_TOL = 1e-9
CLOSURE_TOL = 1e-9


@dataclass(frozen=True)
class Operator:
    """Dense complex d x d matrix.

    The matrix is copied and made read-only on construction.
    """

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got shape {m.shape}")
        if m.shape[0] < 2:
            raise ValueError("operator dimension must be >= 2")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.max(np.abs(self.entries - self.entries.conj().T)) <= tol)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __matmul__(self, other):
        return Operator(self.entries @ as_matrix(other))

    def __add__(self, other):
        return Operator(self.entries + as_matrix(other))

    def __sub__(self, other):
        return Operator(self.entries - as_matrix(other))

    def __mul__(self, scalar):
        return Operator(self.entries * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return Operator(-self.entries)


def as_matrix(x) -> np.ndarray:
    """Return the dense complex matrix behind an Operator or array-like."""
    if isinstance(x, Operator):
        return x.entries
    return np.asarray(x, dtype=np.complex128)


def su2_generators(N: int) -> tuple[Operator, Operator, Operator]:
    """Spin-j angular momentum matrices (Jx, Jy, Jz) with j = N/2.

    The basis is ordered m = j, j-1, ..., -j so Jz is diagonal and descending.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"invalid N={N}: need an integer >= 1")
    N = int(N)
    j = N / 2.0
    m = j - np.arange(N + 1)
    # <m+1|J+|m> on the first superdiagonal
    jp = np.diag(np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1)), 1).astype(np.complex128)
    jx = 0.5 * (jp + jp.conj().T)
    jy = -0.5j * (jp - jp.conj().T)
    jz = np.diag(m).astype(np.complex128)
    return Operator(jx), Operator(jy), Operator(jz)


def max_abs_eigenvalue(x) -> float:
    """Largest eigenvalue of a Hermitian operator by absolute value."""
    m = as_matrix(x)
    if np.max(np.abs(m - m.conj().T)) > 1e-10 * max(1.0, np.max(np.abs(m))):
        raise ValueError("max_abs_eigenvalue requires a Hermitian operator")
    return float(np.max(np.abs(np.linalg.eigvalsh(m))))


def commutator(a, b) -> Operator:
    ma, mb = as_matrix(a), as_matrix(b)
    if ma.shape != mb.shape:
        raise ValueError(f"dimension mismatch: {ma.shape} vs {mb.shape}")
    return Operator(ma @ mb - mb @ ma)


def ordered_eigh(h, degeneracy_tol: float = DEGENERACY_TOL):
    """Reproducible eigendecomposition of a Hermitian matrix.

    Eigenvalues ascend. Inside a numerically degenerate cluster the eigenvectors
    are replaced by Gram-Schmidt applied to the projections of the canonical
    basis vectors onto the cluster subspace. Non-degenerate eigenvectors are
    phase-fixed so that their first non-negligible component is real positive.
    """
    m = as_matrix(h)
    w, v = np.linalg.eigh(m)
    d = len(w)
    spread = w[-1] - w[0]
    gap_tol = degeneracy_tol * spread if spread > 0 else degeneracy_tol
    out = v.copy()
    start = 0
    while start < d:
        stop = start + 1
        while stop < d and w[stop] - w[stop - 1] < gap_tol:
            stop += 1
        if stop - start > 1 or spread == 0:
            out[:, start:stop] = _canonical_cluster_basis(v[:, start:stop])
            w[start:stop] = np.mean(w[start:stop])
        else:
            col = out[:, start]
            k = int(np.argmax(np.abs(col) > 1e-8))
            out[:, start] = col * (abs(col[k]) / col[k])
        start = stop
    return w, out


def _canonical_cluster_basis(block: np.ndarray) -> np.ndarray:
    d, n = block.shape
    proj = block @ block.conj().T
    basis: list[np.ndarray] = []
    for i in range(d):
        vec = proj[:, i].copy()
        for _ in range(2):
            for b in basis:
                vec -= np.vdot(b, vec) * b
        norm = np.linalg.norm(vec)
        if norm > 1e-6:
            basis.append(vec / norm)
        if len(basis) == n:
            break
    return np.column_stack(basis)


@dataclass(frozen=True)
class ModelSystem:
    """Drift Hamiltonian, control operators and the fixed H0 eigenbasis.

    Use :meth:`from_operators` rather than filling the derived fields by hand.
    """

    dim: int
    size_param: int
    h0: Operator
    controls: tuple[Operator, ...]
    lam: tuple[float, ...]
    eigen_basis: np.ndarray = field(repr=False)
    eigen_values: np.ndarray = field(repr=False)

    @classmethod
    def from_operators(cls, h0, controls: Sequence, size_param: int | None = None) -> "ModelSystem":
        h0 = h0 if isinstance(h0, Operator) else Operator(h0)
        ctrls = tuple(c if isinstance(c, Operator) else Operator(c) for c in controls)
        if not h0.is_hermitian(1e-10):
            raise ValueError("h0 must be Hermitian")
        for k, c in enumerate(ctrls):
            if c.dim != h0.dim:
                raise ValueError(f"control {k} has dim {c.dim}, expected {h0.dim}")
            if not c.is_hermitian(1e-10):
                raise ValueError(f"control {k} must be Hermitian")
        w, v = ordered_eigh(h0)
        w.setflags(write=False)
        v.setflags(write=False)
        return cls(
            dim=h0.dim,
            size_param=h0.dim - 1 if size_param is None else int(size_param),
            h0=h0,
            controls=ctrls,
            lam=tuple(max_abs_eigenvalue(c) for c in ctrls),
            eigen_basis=v,
            eigen_values=w,
        )

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    @property
    def basis_id(self) -> str:
        """Short fingerprint of the eigenbasis, used to tag amplitude-phase states."""
        rounded = np.round(self.eigen_basis, 9) + 0.0
        return hashlib.sha1(rounded.tobytes()).hexdigest()[:12]

    def to_eigenbasis(self, x) -> np.ndarray:
        """Matrix of an operator in the H0 eigenbasis."""
        v = self.eigen_basis
        return v.conj().T @ as_matrix(x) @ v


def double_well_model(N: int, omega: float = 1.0, delta: float = 0.0, u_int: float = 0.0) -> ModelSystem:
    """Two-mode Bose-Hubbard (double well) model on the spin-N/2 irrep.

    H0 = -omega Jx + delta Jz + (u_int / N) Jz^2, controls (Jx, Jz).
    """
    jx, _, jz = su2_generators(N)
    h0 = -omega * jx.entries + delta * jz.entries + (u_int / N) * (jz.entries @ jz.entries)
    model = ModelSystem.from_operators(h0, [jx, jz], size_param=N)
    # spin operators have extremal eigenvalue exactly j
    return replace(model, lam=(N / 2.0, N / 2.0))


def _traceless(m: np.ndarray) -> np.ndarray:
    d = m.shape[0]
    return m - (np.trace(m) / d) * np.eye(d)


def _realvec(m: np.ndarray) -> np.ndarray:
    return np.concatenate([m.real.ravel(), m.imag.ravel()])


def lie_closure_rank(model: ModelSystem, tol: float = CLOSURE_TOL, max_dim: int | None = None) -> int:
    """Dimension of the real Lie algebra generated by i*H0 and i*X_k, modulo the identity.

    Generators are made traceless first, so complete controllability (up to a
    global phase) corresponds to a rank of d^2 - 1.
    """
    d = model.dim
    limit = d * d - 1 if max_dim is None else max_dim
    gens = [1j * _traceless(model.h0.entries)] + [1j * _traceless(c.entries) for c in model.controls]

    elems: list[np.ndarray] = []
    vecs: list[np.ndarray] = []

    def try_add(m: np.ndarray) -> bool:
        v = _realvec(m)
        scale = np.linalg.norm(v)
        if scale == 0.0:
            return False
        v = v / scale
        for _ in range(2):
            for b in vecs:
                v = v - np.dot(b, v) * b
        norm = np.linalg.norm(v)
        if norm <= tol:
            return False
        v = v / norm
        vecs.append(v)
        half = d * d
        elems.append((v[:half] + 1j * v[half:]).reshape(d, d))
        return True

    for g in gens:
        try_add(g)
    frontier = list(range(len(elems)))
    while frontier and len(elems) < limit:
        new: list[int] = []
        for i in frontier:
            for j in range(len(elems)):
                if j == i:
                    continue
                a, b = elems[i], elems[j]
                if try_add(a @ b - b @ a):
                    new.append(len(elems) - 1)
                if len(elems) >= limit:
                    break
            if len(elems) >= limit:
                break
        frontier = new

    if not vecs:
        return 0
    s = np.linalg.svd(np.array(vecs), compute_uv=False)
    return int(np.sum(s > tol * s[0]))
