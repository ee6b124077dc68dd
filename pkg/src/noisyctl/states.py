"""Pure states in the H0 eigenbasis, density matrices, purity and variances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spinalg import ModelSystem, Operator, as_matrix

NORM_TOL = 1e-10
AMPLITUDE_FLOOR = 1e-12
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class AmplitudePhaseState:
    """Pure state sum_n r_n exp(i phi_n) |n> over the eigenbasis tagged ``basis_id``.

    The global phase is fixed: the first component with r_n > 1e-12 has phi_n = 0.
    Phases of (numerically) empty components are set to 0.
    """

    r: np.ndarray
    phi: np.ndarray
    basis_id: str = ""

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float).copy()
        phi = np.asarray(self.phi, dtype=float).copy()
        if r.shape != phi.shape or r.ndim != 1:
            raise ValueError("r and phi must be 1-d arrays of equal length")
        if np.any(r < 0):
            raise ValueError("amplitudes must be nonnegative")
        if abs(np.linalg.norm(r) - 1.0) > NORM_TOL:
            raise ValueError(f"amplitudes not normalized: |r| = {np.linalg.norm(r)!r}")
        live = r > AMPLITUDE_FLOOR
        first = int(np.argmax(live))
        phi = np.where(live, np.mod(phi - phi[first], TWO_PI), 0.0)
        # mod can return 2pi for tiny negative inputs
        phi[phi >= TWO_PI] = 0.0
        r.setflags(write=False)
        phi.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "phi", phi)

    @property
    def dim(self) -> int:
        return len(self.r)

    @property
    def coefficients(self) -> np.ndarray:
        return self.r * np.exp(1j * self.phi)

    def vector(self, model: ModelSystem) -> np.ndarray:
        """State vector in the computational basis."""
        _check_basis(self, model)
        return model.eigen_basis @ self.coefficients

    def with_phases(self, phi) -> "AmplitudePhaseState":
        return AmplitudePhaseState(self.r, phi, self.basis_id)


def _check_basis(psi: AmplitudePhaseState, model: ModelSystem) -> None:
    if psi.dim != model.dim:
        raise ValueError(f"state dim {psi.dim} does not match model dim {model.dim}")
    if psi.basis_id and psi.basis_id != model.basis_id:
        raise ValueError("state is expressed in a different eigenbasis than the model")


@dataclass(frozen=True)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        if np.max(np.abs(m - m.conj().T)) > 1e-10:
            raise ValueError("density matrix must be Hermitian")
        if abs(np.trace(m).real - 1.0) > 1e-10:
            raise ValueError(f"density matrix trace {np.trace(m).real!r} != 1")
        if np.linalg.eigvalsh(m)[0] < -1e-8:
            raise ValueError("density matrix has negative eigenvalues")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def pure(cls, psi) -> "DensityMatrix":
        v = np.asarray(psi, dtype=np.complex128)
        return cls(np.outer(v, v.conj()))


@dataclass(frozen=True)
class TransformationSpec:
    """A state-to-state target with minimal amplitude change ``epsilon``.

    Requires epsilon in (0, 1) and epsilon <= |r_f - r_i|. With ``strict`` the
    amplitude change must also stay below 1 (the small-change regime).
    """

    psi_i: AmplitudePhaseState
    psi_f: AmplitudePhaseState
    epsilon: float
    strict: bool = True

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        dr = delta_r_norm(self.psi_i, self.psi_f)
        if dr < self.epsilon * (1 - 1e-12):
            raise ValueError(f"|dr| = {dr:.6g} is smaller than epsilon = {self.epsilon}")
        if self.strict and dr >= 1.0:
            raise ValueError(f"|dr| = {dr:.6g} is not small (>= 1)")

    @property
    def delta_r(self) -> np.ndarray:
        return self.psi_f.r - self.psi_i.r


def to_eigenbasis(psi, model: ModelSystem) -> AmplitudePhaseState:
    """Expand a normalized state vector in the model's H0 eigenbasis."""
    v = np.asarray(psi, dtype=np.complex128).ravel()
    if v.shape[0] != model.dim:
        raise ValueError(f"state has dim {v.shape[0]}, model has {model.dim}")
    if abs(np.linalg.norm(v) - 1.0) > NORM_TOL:
        raise ValueError(f"state not normalized: |psi| = {np.linalg.norm(v)!r}")
    c = model.eigen_basis.conj().T @ v
    r = np.abs(c)
    r = r / np.linalg.norm(r)
    return AmplitudePhaseState(r, np.angle(c), model.basis_id)


def _state_vector(psi, model: ModelSystem) -> np.ndarray:
    if isinstance(psi, AmplitudePhaseState):
        return psi.vector(model)
    v = np.asarray(psi, dtype=np.complex128).ravel()
    if v.shape[0] != model.dim:
        raise ValueError(f"state has dim {v.shape[0]}, model has {model.dim}")
    return v


def purity(rho) -> float:
    m = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)
    # Tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
    return float(np.sum(np.abs(m) ** 2))


def variance_of_vector(x: np.ndarray, v: np.ndarray) -> float:
    xv = x @ v
    m1 = np.vdot(v, xv).real
    m2 = np.vdot(xv, xv).real
    return max(float(m2 - m1 * m1), 0.0)


def variance(x, psi, model: ModelSystem) -> float:
    """<X^2> - <X>^2 in ``psi`` (clamped at 0 against round-off)."""
    m = as_matrix(x)
    if m.shape[0] != model.dim:
        raise ValueError(f"operator dim {m.shape[0]} does not match model dim {model.dim}")
    return variance_of_vector(m, _state_vector(psi, model))


def purity_loss_rate(model: ModelSystem, u, psi, eta: float) -> float:
    """Instantaneous -dP/dt at a pure state: 4 eta sum_k |u_k| Var(X_k)."""
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    u = np.asarray(u, dtype=float)
    if u.shape != (model.n_controls,):
        raise ValueError(f"need {model.n_controls} control values, got shape {u.shape}")
    v = _state_vector(psi, model)
    rate = 0.0
    for uk, xk in zip(u, model.controls):
        if uk != 0.0:
            rate += abs(uk) * variance_of_vector(xk.entries, v)
    return 4.0 * eta * rate


def delta_r_norm(psi_i, psi_f=None) -> float:
    """Euclidean norm of r_f - r_i.

    Accepts either a TransformationSpec or a pair of amplitude-phase states.
    """
    if isinstance(psi_i, TransformationSpec):
        psi_i, psi_f = psi_i.psi_i, psi_i.psi_f
    if psi_i.basis_id and psi_f.basis_id and psi_i.basis_id != psi_f.basis_id:
        raise ValueError("states are expressed in different eigenbases")
    if psi_i.dim != psi_f.dim:
        raise ValueError("states have different dimensions")
    return float(np.linalg.norm(psi_f.r - psi_i.r))


def aux_signs(delta_r) -> np.ndarray:
    """sign(dr_n) with sign(0) taken as +1."""
    return np.where(np.asarray(delta_r) < 0, -1.0, 1.0)


def aux_operator(spec: TransformationSpec, model: ModelSystem) -> Operator:
    """A = sum_n sign(dr_n) |n><n|, returned in the computational basis."""
    _check_basis(spec.psi_i, model)
    s = aux_signs(spec.delta_r)
    v = model.eigen_basis
    return Operator((v * s) @ v.conj().T)


def expectation(x, psi, model: ModelSystem) -> float:
    v = _state_vector(psi, model)
    return float(np.vdot(v, as_matrix(x) @ v).real)


def basis_state(model: ModelSystem, n: int) -> AmplitudePhaseState:
    if not 0 <= n < model.dim:
        raise IndexError(f"eigenstate index {n} out of range for dim {model.dim}")
    r = np.zeros(model.dim)
    r[n] = 1.0
    return AmplitudePhaseState(r, np.zeros(model.dim), model.basis_id)


def spin_coherent_state(N: int, theta: float, phi: float = 0.0) -> np.ndarray:
    """|theta, phi> = exp(-i phi Jz) exp(-i theta Jy) |j, j> in the |j, m> basis (m descending).

    Built from the closed-form binomial amplitudes.
    """
    from scipy.special import gammaln

    j = N / 2.0
    k = np.arange(N + 1)  # m = j - k
    m = j - k
    logc = 0.5 * (gammaln(N + 1) - gammaln(k + 1) - gammaln(N - k + 1))
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    amp = np.exp(logc) * np.power(c, N - k) * np.power(s, k)
    return amp * np.exp(-1j * phi * m)


def random_target(psi_i: AmplitudePhaseState, dr_norm: float, rng: np.random.Generator,
                  max_tries: int = 1000) -> AmplitudePhaseState:
    """Perturb the amplitudes of ``psi_i`` to a new unit vector with |r_f - r_i| = dr_norm.

    The direction is random (tangent to the unit sphere, restricted so amplitudes
    stay nonnegative) and the phases of the target are random.
    """
    r_i = psi_i.r
    d = len(r_i)
    # Points on the unit sphere at chordal distance D from r_i: cos(angle) = 1 - D^2/2
    cos_a = 1.0 - 0.5 * dr_norm**2
    sin_a = np.sqrt(max(0.0, 1.0 - cos_a**2))
    for _ in range(max_tries):
        t = rng.standard_normal(d)
        # steer toward directions that keep amplitudes nonnegative
        t = np.where(r_i < 1e-12, np.abs(t), t)
        t -= np.dot(t, r_i) * r_i
        nt = np.linalg.norm(t)
        if nt < 1e-12:
            continue
        r_f = cos_a * r_i + sin_a * t / nt
        if np.all(r_f >= 0):
            r_f = r_f / np.linalg.norm(r_f)
            return AmplitudePhaseState(r_f, rng.uniform(0, TWO_PI, d), psi_i.basis_id)
    raise RuntimeError("could not find a nonnegative target amplitude vector")
