"""
esrcontrol Core - Propagator

Piecewise-constant unitary evolution, the state fidelity
F = Tr[U rho_i U^dag rho_f] / 2^n and its analytic gradient.

Each segment exponential is taken through the Hermitian eigendecomposition
of H0 + ux sigma_x^e + uy sigma_y^e. Everything is batched over a leading
ensemble axis, and :func:`evolve_batch` adds a leading pulse axis on top.
"""

import logging
from typing import Any, Dict, Iterable, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_serializer, field_validator, model_validator

from .errors import DimensionMismatchError
from .pulses import ControlPulse, Kick, PulseProgram, electron_rotation
from .spin import PAULI, Ensemble, PauliState, SpinSystem, build_hamiltonian, diagonalize, kron_all

logger = logging.getLogger(__name__)

Frame = Literal["product", "transition"]
StateLike = Union[PauliState, str, np.ndarray]

# elements of B * E * M * d * d held at once by evolve_batch
_CHUNK_ELEMENTS = 4_000_000


def control_operators(n_spins: int) -> Tuple[np.ndarray, np.ndarray]:
    """Pauli x and y operators on the electron."""
    rest = [PAULI["I"]] * (n_spins - 1)
    return kron_all([PAULI["X"], *rest]), kron_all([PAULI["Y"], *rest])


def as_members(ensemble: Union[SpinSystem, Ensemble]) -> Ensemble:
    if isinstance(ensemble, SpinSystem):
        return [(ensemble, 1.0)]
    members = list(ensemble)
    if not members:
        raise ValueError("ensemble must contain at least one member")
    dims = {sys.dim for sys, _ in members}
    if len(dims) != 1:
        raise DimensionMismatchError(f"ensemble mixes Hilbert dimensions {sorted(dims)}")
    return members


def as_operator(state: StateLike, dim: int) -> np.ndarray:
    """Matrix of a state, Pauli strings padded with identities up to ``dim``."""
    if isinstance(state, (PauliState, str)):
        state = PauliState.of(state)
        n = int(round(np.log2(dim)))
        if state.n_spins > n:
            raise DimensionMismatchError(f"{state.label} does not fit a {dim}-dimensional space")
        return state.embed(n).matrix
    op = np.asarray(state)
    if op.shape != (dim, dim):
        raise DimensionMismatchError(f"operator shape {op.shape} does not match dimension {dim}")
    return op


def frame_operator(state: StateLike, sys: SpinSystem, frame: Frame) -> np.ndarray:
    """A state in the product frame or in ``sys``'s transition frame."""
    op = as_operator(state, sys.dim)
    if frame == "transition":
        return diagonalize(sys).from_eigenframe(op)
    return op


class GradientVector(BaseModel):
    """Fidelity gradient with respect to every segment amplitude of each channel."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    gx: np.ndarray
    gy: np.ndarray

    @field_validator("gx", "gy", mode="before")
    @classmethod
    def _coerce(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=float)
        if arr.ndim != 1:
            raise ValueError("gradient components must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("gradient contains non-finite entries")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _same_length(self) -> "GradientVector":
        if len(self.gx) != len(self.gy):
            raise DimensionMismatchError("gx and gy must have the same length")
        return self

    @field_serializer("gx", "gy")
    def _serialize(self, v: np.ndarray) -> list:
        return v.tolist()

    @property
    def M(self) -> int:
        return len(self.gx)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.gx, self.gy])

    @classmethod
    def from_array(cls, v: np.ndarray) -> "GradientVector":
        v = np.asarray(v, dtype=float)
        m = len(v) // 2
        return cls(gx=v[:m], gy=v[m:])

    @classmethod
    def zeros(cls, M: int) -> "GradientVector":
        return cls(gx=np.zeros(M), gy=np.zeros(M))

    def scaled(self, c: float) -> "GradientVector":
        return GradientVector(gx=c * self.gx, gy=c * self.gy)

    def cosine(self, other: "GradientVector") -> float:
        """Direction cosine between two gradients (0 if either vanishes)."""
        a, b = self.as_array(), other.as_array()
        denom = np.linalg.norm(a) * np.linalg.norm(b)
        return float(a @ b / denom) if denom > 0 else 0.0


class PropagationResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    total_unitary: np.ndarray
    segment_unitaries: Optional[np.ndarray] = None
    final_state: Optional[np.ndarray] = None


def segment_eigh(h0s: np.ndarray, ux: np.ndarray, uy: np.ndarray, n_spins: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigendecomposition of every segment Hamiltonian.

    Args:
        h0s: Static Hamiltonians, shape (E, d, d)
        ux, uy: Amplitudes, shape (..., M)

    Returns:
        Eigenvalues (..., E, M, d) and eigenvectors (..., E, M, d, d)
    """
    sx, sy = control_operators(n_spins)
    ux = np.asarray(ux, dtype=float)[..., None, :, None, None]
    uy = np.asarray(uy, dtype=float)[..., None, :, None, None]
    h = h0s[:, None] + ux * sx + uy * sy
    return np.linalg.eigh(h)


def unitaries_from_eigh(w: np.ndarray, v: np.ndarray, tau: float) -> np.ndarray:
    """exp(-i tau H) for H = v diag(w) v^dag, broadcast over leading axes."""
    return (v * np.exp(-1j * tau * w)[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def _kick_unitaries(kicks: Iterable[Kick], n_spins: int) -> Dict[int, np.ndarray]:
    table: Dict[int, np.ndarray] = {}
    for kick in kicks:
        r = electron_rotation(kick.axis, kick.angle, n_spins)
        table[kick.after_segment] = r @ table.get(kick.after_segment, np.eye(r.shape[0]))
    return table


def chain(us: np.ndarray, kicks: Optional[Dict[int, np.ndarray]] = None) -> np.ndarray:
    """Time-ordered product U_M ... U_1 over axis -3, with kicks between segments."""
    kicks = kicks or {}
    d = us.shape[-1]
    total = np.broadcast_to(np.eye(d, dtype=complex), us.shape[:-3] + (d, d)).copy()
    if 0 in kicks:
        total = kicks[0] @ total
    for m in range(us.shape[-3]):
        total = us[..., m, :, :] @ total
        if m + 1 in kicks:
            total = kicks[m + 1] @ total
    return total


def forward_states(us: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """States after 0..M segments, shape (..., M+1, d, d)."""
    out = [np.broadcast_to(rho, us.shape[:-3] + rho.shape[-2:]).astype(complex)]
    for m in range(us.shape[-3]):
        u = us[..., m, :, :]
        out.append(u @ out[-1] @ np.swapaxes(u.conj(), -1, -2))
    return np.stack(out, axis=-3)


def backward_operators(us: np.ndarray, op: np.ndarray) -> np.ndarray:
    """
    Heisenberg-propagated observables: entry m is U_{m+1..M}^dag op U_{m+1..M}.

    ``op`` may carry extra leading operator axes after the batch axes of
    ``us``; the result has shape (..., M+1, *op_axes, d, d).
    """
    M = us.shape[-3]
    lead = us.ndim - 3
    extra = op.ndim - 2 - lead
    cur = np.asarray(op, dtype=complex)
    out = [cur]
    for m in range(M - 1, -1, -1):
        u = us[..., m, :, :]
        u = u.reshape(u.shape[:-2] + (1,) * max(extra, 0) + u.shape[-2:])
        cur = np.swapaxes(u.conj(), -1, -2) @ cur @ u
        out.append(cur)
    return np.stack(out[::-1], axis=lead)


def _pulse_and_kicks(p: Union[ControlPulse, PulseProgram]) -> Tuple[ControlPulse, Tuple[Kick, ...]]:
    if isinstance(p, PulseProgram):
        return p.pulse, p.kicks
    return p, ()


def propagate(
    p: Union[ControlPulse, PulseProgram],
    sys: SpinSystem,
    rho_i: Optional[StateLike] = None,
    keep_segments: bool = False,
) -> PropagationResult:
    """
    Evolve one system under a pulse.

    Args:
        p: Pulse or pulse program (rotations applied between segments)
        sys: Spin system
        rho_i: Optional initial state; when given the final state is returned
        keep_segments: Keep the per-segment unitaries in the result

    Returns:
        PropagationResult with U(T) = U_M ... U_1
    """
    pulse, kicks = _pulse_and_kicks(p)
    h0 = build_hamiltonian(sys)[None]
    w, v = segment_eigh(h0, pulse.ux, pulse.uy, sys.n_spins)
    us = unitaries_from_eigh(w, v, pulse.dt * 1e-3)[0]
    total = chain(us, _kick_unitaries(kicks, sys.n_spins))
    final = None
    if rho_i is not None:
        rho = as_operator(rho_i, sys.dim)
        final = total @ rho @ total.conj().T
    return PropagationResult(
        total_unitary=total,
        segment_unitaries=us if keep_segments else None,
        final_state=final,
    )


def evolve_batch(
    ux: np.ndarray,
    uy: np.ndarray,
    dt: float,
    members: Ensemble,
    kicks: Sequence[Kick] = (),
) -> np.ndarray:
    """
    Total unitaries for many pulses over every ensemble member.

    Args:
        ux, uy: Amplitudes, shape (B, M)
        dt: Time step in ns
        members: Ensemble as (system, weight) pairs

    Returns:
        Unitaries of shape (B, E, d, d)
    """
    members = as_members(members)
    ux = np.atleast_2d(np.asarray(ux, dtype=float))
    uy = np.atleast_2d(np.asarray(uy, dtype=float))
    n_spins = members[0][0].n_spins
    h0s = np.stack([build_hamiltonian(sys) for sys, _ in members])
    E, d = h0s.shape[0], h0s.shape[-1]
    B, M = ux.shape
    kick_table = _kick_unitaries(kicks, n_spins)
    step = max(1, _CHUNK_ELEMENTS // max(1, E * M * d * d))
    totals = np.empty((B, E, d, d), dtype=complex)
    for start in range(0, B, step):
        sl = slice(start, start + step)
        w, v = segment_eigh(h0s, ux[sl], uy[sl], n_spins)
        totals[sl] = chain(unitaries_from_eigh(w, v, dt * 1e-3), kick_table)
    return totals


def state_fidelity(rho_i: StateLike, rho_f: StateLike, U: np.ndarray) -> float:
    """F = Re Tr[U rho_i U^dag rho_f] / 2^n."""
    U = np.asarray(U)
    d = U.shape[-1]
    if U.shape != (d, d):
        raise DimensionMismatchError(f"unitary must be square, got {U.shape}")
    a = as_operator(rho_i, d)
    b = as_operator(rho_f, d)
    return float(np.real(np.trace(U @ a @ U.conj().T @ b)) / d)


def ensemble_fidelity(
    p: Union[ControlPulse, PulseProgram],
    ensemble: Union[SpinSystem, Ensemble],
    rho_i: StateLike,
    rho_f: StateLike,
    frame: Frame = "product",
) -> float:
    """Weighted mean of the state fidelity over ensemble members (member order)."""
    members = as_members(ensemble)
    pulse, kicks = _pulse_and_kicks(p)
    totals = evolve_batch(pulse.ux[None], pulse.uy[None], pulse.dt, members, kicks)[0]
    d = totals.shape[-1]
    acc = 0.0
    for (sys, weight), u in zip(members, totals):
        a = frame_operator(rho_i, sys, frame)
        b = frame_operator(rho_f, sys, frame)
        acc += weight * float(np.real(np.trace(u @ a @ u.conj().T @ b)) / d)
    return acc


def _frechet_weights(w: np.ndarray, tau: float) -> np.ndarray:
    """Divided differences of exp(-i tau x) over eigenvalue pairs."""
    wj = w[..., :, None]
    wk = w[..., None, :]
    return -1j * tau * np.exp(-0.5j * tau * (wj + wk)) * np.sinc(tau * (wj - wk) / (2 * np.pi))


def analytic_gradient(
    p: ControlPulse,
    ensemble: Union[SpinSystem, Ensemble],
    rho_i: StateLike,
    rho_f: StateLike,
    first_order: bool = False,
    frame: Frame = "product",
) -> GradientVector:
    """
    Gradient of the (ensemble) fidelity with respect to every amplitude.

    By default each segment exponential is differentiated exactly through
    its eigendecomposition. ``first_order=True`` uses the commutator form
    Tr(-i dt U_{m+1}^M [sigma, rho_m] U_{m+1}^M^dag rho_f) / 2^n, which is
    what an inserted +-pi/2 rotation measures.

    Args:
        p: Pulse
        ensemble: Single system or (system, weight) pairs
        rho_i, rho_f: Initial and target states
        first_order: Use the commutator approximation
        frame: Frame in which Pauli-string states are interpreted

    Returns:
        GradientVector, weighted mean over members
    """
    members = as_members(ensemble)
    n_spins = members[0][0].n_spins
    d = members[0][0].dim
    tau = p.dt * 1e-3
    h0s = np.stack([build_hamiltonian(sys) for sys, _ in members])
    weights = np.array([w for _, w in members])
    rho0 = np.stack([frame_operator(rho_i, sys, frame) for sys, _ in members])
    target = np.stack([frame_operator(rho_f, sys, frame) for sys, _ in members])

    w, v = segment_eigh(h0s, p.ux, p.uy, n_spins)
    us = unitaries_from_eigh(w, v, tau)
    states = forward_states(us, rho0)
    lams = backward_operators(us, target)[:, 1:]
    controls = control_operators(n_spins)

    grads = []
    for s in controls:
        if first_order:
            after = states[:, 1:]
            val = np.einsum("ij,emjk,emki->em", s, after, lams)
            g = 2.0 * np.real(-1j * tau * val) / d
        else:
            vh = np.swapaxes(v.conj(), -1, -2)
            s_eig = vh @ s @ v
            before = states[:, :-1]
            x = before @ np.swapaxes(us.conj(), -1, -2) @ lams
            y = vh @ x @ v
            val = np.einsum("emjk,emkj->em", _frechet_weights(w, tau) * s_eig, y)
            g = 2.0 * np.real(val) / d
        grads.append(weights @ g)
    return GradientVector(gx=grads[0], gy=grads[1])
