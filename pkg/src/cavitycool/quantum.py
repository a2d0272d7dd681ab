"""Operators, Liouvillian, and steady-state solves on the truncated space.

The Hilbert space is Fock(0..n_max) x {g, e} with basis ordered
|0,g>, |0,e>, |1,g>, |1,e>, ... so state |n,s> sits at index 2n + s.
Density matrices are vectorized by column stacking, vec(A X B) =
(B^T kron A) vec(X), and every superoperator here follows that
convention.

All Hamiltonians are divided by hbar and stored as angular frequencies.
The drive enters as H_pump/hbar = i eps (a^dag - a); this phase choice
reproduces the weak-driving density matrix of weakdrive.rho0_weak
entry by entry (the overall pump phase is a gauge, observables are
even in eps).
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .constants import (CS_MASS, DELTA_P, EPSILON, GAMMA, KAPPA, N_MAX,
                        TWO_PI, WAVELENGTH)
from .errors import (ContractViolationError, NonUniqueSteadyStateError,
                     NumericalSolveError, TruncationError)

STEADY_RTOL = 1e-10          # residual bound, relative to ||L||_F
CONSTRAINED_RTOL = 1e-9
POSITIVITY_SLACK = 1e-9


@dataclass(frozen=True)
class SystemParams:
    """Atomic/cavity/pump parameters in coherent internal units (rad/s, m, kg)."""

    kappa: float = KAPPA
    gamma: float = GAMMA
    delta_a: float = DELTA_P
    delta_c: float = DELTA_P
    epsilon: float = EPSILON
    k_photon: float = TWO_PI / WAVELENGTH
    mass: float = CS_MASS
    n_max: int = N_MAX

    def __post_init__(self):
        if self.kappa <= 0 or self.gamma <= 0:
            raise ContractViolationError("kappa and gamma must be positive")
        if self.epsilon < 0:
            raise ContractViolationError("epsilon must be non-negative")
        if self.mass <= 0:
            raise ContractViolationError("mass must be positive")
        if self.n_max < 1:
            raise TruncationError(f"n_max must be >= 1, got {self.n_max}")

    @property
    def dim(self) -> int:
        return 2 * (self.n_max + 1)

    def replace(self, **kw) -> "SystemParams":
        from dataclasses import replace
        return replace(self, **kw)


def annihilation(n_max: int) -> np.ndarray:
    """Cavity annihilation operator on the composite space."""
    if n_max < 1:
        raise TruncationError(f"n_max must be >= 1, got {n_max}")
    a_fock = np.diag(np.sqrt(np.arange(1.0, n_max + 1)), 1)
    return np.kron(a_fock, np.eye(2))


def lowering(n_max: int) -> np.ndarray:
    """Atomic lowering operator |g><e| on the composite space."""
    if n_max < 1:
        raise TruncationError(f"n_max must be >= 1, got {n_max}")
    return np.kron(np.eye(n_max + 1), np.array([[0.0, 1.0], [0.0, 0.0]]))


def coupling_operator(n_max: int) -> np.ndarray:
    """a^dag sigma_- + a sigma_+; dH/dg and the force operator divided by -hbar grad g."""
    a = annihilation(n_max)
    sm = lowering(n_max)
    return a.conj().T @ sm + a @ sm.conj().T


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(rho).T.reshape(-1)


def unvec(v: np.ndarray) -> np.ndarray:
    dim = round(len(v) ** 0.5)
    return np.asarray(v).reshape(dim, dim).T


def build_hamiltonian(params: SystemParams, g: float) -> np.ndarray:
    """(H_JC + H_pump)/hbar in the rotating frame of the pump.

    g may be negative (cosine mode factors flip sign at nodes); the
    matrix stays Hermitian either way.
    """
    n_max = params.n_max
    a = annihilation(n_max)
    sm = lowering(n_max)
    ad, sp = a.conj().T, sm.conj().T
    h = (-params.delta_c * (ad @ a)
         - params.delta_a * (sp @ sm)
         + g * (ad @ sm + a @ sp)
         + 1j * params.epsilon * (ad - a))
    return h


def _dissipator_super(c: np.ndarray) -> np.ndarray:
    """Superoperator for D[c]rho = 2 c rho c^dag - c^dag c rho - rho c^dag c."""
    dim = c.shape[0]
    eye = np.eye(dim)
    cdc = c.conj().T @ c
    return (2.0 * np.kron(c.conj(), c)
            - np.kron(eye, cdc) - np.kron(cdc.T, eye))


def build_liouvillian(params: SystemParams, g: float) -> np.ndarray:
    """Vectorized generator of the Lindblad master equation at coupling g."""
    h = build_hamiltonian(params, g)
    dim = h.shape[0]
    eye = np.eye(dim)
    lv = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    lv += params.kappa * _dissipator_super(annihilation(params.n_max))
    lv += params.gamma * _dissipator_super(lowering(params.n_max))
    return lv


def _trace_indices(dim: int) -> np.ndarray:
    # vec indices of the diagonal entries rho[i, i]
    return np.arange(dim) * (dim + 1)


def _traced_system(lv: np.ndarray) -> tuple[np.ndarray, int]:
    """Replace the row of L corresponding to rho[0,0] with the trace functional."""
    dim2 = lv.shape[0]
    dim = round(dim2 ** 0.5)
    m = lv.copy()
    m[0, :] = 0.0
    m[0, _trace_indices(dim)] = 1.0
    return m, dim


def steady_state(lv: np.ndarray) -> np.ndarray:
    """Unique steady state of L, via the trace-row replacement solve.

    Returns the density matrix; hermitized and normalized, with
    residual, trace, and positivity checked against the module
    tolerances.
    """
    m, dim = _traced_system(lv)
    rhs = np.zeros(m.shape[0], dtype=complex)
    rhs[0] = 1.0
    try:
        sol = np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError as exc:
        raise NonUniqueSteadyStateError(f"steady-state solve singular: {exc}") from exc
    rho = unvec(sol)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    residual = np.linalg.norm(lv @ vec(rho))
    scale = np.linalg.norm(lv)
    if not np.isfinite(residual) or residual > STEADY_RTOL * scale:
        raise NonUniqueSteadyStateError(
            f"steady-state residual {residual:.3e} exceeds {STEADY_RTOL:.0e}*||L||"
            f" = {STEADY_RTOL * scale:.3e}")
    evals = np.linalg.eigvalsh(rho)
    if evals.min() < -POSITIVITY_SLACK:
        raise NonUniqueSteadyStateError(
            f"steady state not positive: min eigenvalue {evals.min():.3e}")
    return rho


def constrained_solve(lv: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve L(x) = rhs for the unique traceless x, both vectorized.

    The left null vector of L is the trace functional, so a traceless
    rhs makes the system consistent; replacing the redundant row with
    the trace row and zeroing its right-hand side picks the traceless
    representative.
    """
    rhs = np.asarray(rhs, dtype=complex)
    m, dim = _traced_system(lv)
    norm = np.linalg.norm(rhs)
    tr = rhs[_trace_indices(dim)].sum()
    if abs(tr) > 1e-10 * max(norm, 1e-300):
        raise ContractViolationError(
            f"constrained_solve rhs has trace {tr:.3e} (norm {norm:.3e})")
    b = rhs.copy()
    b[0] = 0.0
    try:
        x = np.linalg.solve(m, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalSolveError(f"constrained solve failed: {exc}") from exc
    residual = np.linalg.norm(lv @ x - rhs)
    if norm > 0 and residual > CONSTRAINED_RTOL * norm:
        raise NumericalSolveError(
            f"constrained solve residual {residual:.3e} > {CONSTRAINED_RTOL:.0e}"
            f" relative; cond(L_traced) ~ {np.linalg.cond(m):.3e}")
    return x


def observables(rho: np.ndarray) -> tuple[float, float, float]:
    """(n_bar, p_e, coupling_corr) for a composite-space density matrix."""
    dim = rho.shape[0]
    n_max = dim // 2 - 1
    a = annihilation(n_max)
    sm = lowering(n_max)
    n_bar = np.trace(a.conj().T @ a @ rho).real
    p_e = np.trace(sm.conj().T @ sm @ rho).real
    corr = np.trace(coupling_operator(n_max) @ rho).real
    return n_bar, p_e, corr


class LiouvillianWorkspace:
    """Factored Liouvillian pieces for fast repeated solves over g.

    L(g) = L0 + g*L1 with L0 independent of position. `factor(g)`
    LU-factorizes the trace-replaced system once; the returned handle
    then serves the steady state and any number of constrained solves
    at a few back-substitutions each. This is what makes dense
    coefficient grids affordable.
    """

    def __init__(self, params: SystemParams):
        self.params = params
        n_max = params.n_max
        self.dim = params.dim
        self.g_op = coupling_operator(n_max)
        a = annihilation(n_max)
        sm = lowering(n_max)
        self.num_op = a.conj().T @ a
        self.pe_op = sm.conj().T @ sm
        self._l0 = build_liouvillian(params, 0.0)
        eye = np.eye(self.dim)
        self._l1 = -1j * (np.kron(eye, self.g_op) - np.kron(self.g_op.T, eye))
        self._tr_idx = _trace_indices(self.dim)

    def liouvillian(self, g: float) -> np.ndarray:
        return self._l0 + g * self._l1

    def factor(self, g: float) -> "FactoredPoint":
        lv = self.liouvillian(g)
        m = lv.copy()
        m[0, :] = 0.0
        m[0, self._tr_idx] = 1.0
        lu = scipy.linalg.lu_factor(m, check_finite=False)
        return FactoredPoint(self, g, lu)


class FactoredPoint:
    """LU-factorized trace-replaced Liouvillian at one coupling value."""

    def __init__(self, ws: LiouvillianWorkspace, g: float, lu):
        self.ws = ws
        self.g = g
        self._lu = lu

    def steady_state(self) -> np.ndarray:
        rhs = np.zeros(self.ws.dim ** 2, dtype=complex)
        rhs[0] = 1.0
        rho = unvec(scipy.linalg.lu_solve(self._lu, rhs, check_finite=False))
        rho = 0.5 * (rho + rho.conj().T)
        rho /= np.trace(rho).real
        return rho

    def constrained_solve(self, rhs: np.ndarray) -> np.ndarray:
        b = np.asarray(rhs, dtype=complex).copy()
        b[0] = 0.0
        return scipy.linalg.lu_solve(self._lu, b, check_finite=False)

    def drho_dg(self, rho0: np.ndarray) -> np.ndarray:
        """Solution of L (drho/dg) = -(dL/dg) rho0, as a matrix."""
        rhs = -(self.ws._l1 @ vec(rho0))
        return unvec(self.constrained_solve(rhs))
