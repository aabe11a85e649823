"""
esrcontrol Core - Spin Model

Electron-nuclear spin Hamiltonian, its eigenstructure, Pauli-string states
and the inhomogeneous (Lorentzian) ensemble.

Conventions used everywhere in the package:

* frequencies are stored in MHz, Hamiltonians in angular MHz (rad/us); the
  factor 2*pi is applied once, in :func:`build_hamiltonian`
* the static Hamiltonian uses spin operators (sigma/2), the control
  Hamiltonian uses Pauli operators (see :mod:`esrcontrol.core.propagator`)
* the tensor order is electron first, then the strongly coupled proton,
  then the optional weakly coupled proton
"""

import logging
from functools import lru_cache, reduce
from typing import Iterable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatchError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
DEGENERACY_TOL = 1e-9

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

Ensemble = List[Tuple["SpinSystem", float]]


def kron_all(ops: Iterable[np.ndarray]) -> np.ndarray:
    """Kronecker product of a sequence of operators, left to right."""
    return reduce(np.kron, ops)


def spin_operator(axis: str, site: int, n_spins: int) -> np.ndarray:
    """Spin-1/2 operator (sigma/2) along ``axis`` acting on ``site``."""
    ops = [PAULI["I"]] * n_spins
    ops[site] = PAULI[axis.upper()] / 2.0
    return kron_all(ops)


class SpinSystem(BaseModel):
    """Hyperfine and Zeeman parameters of one radical (all in MHz)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    A: float = 66.0
    B: float = 26.0
    omega_I: float = -14.5
    detuning: float = 0.0
    extra_proton: Optional[Tuple[float, float]] = None

    @property
    def n_spins(self) -> int:
        return 2 if self.extra_proton is None else 3

    @property
    def dim(self) -> int:
        return 2 ** self.n_spins

    def with_detuning(self, detuning: float) -> "SpinSystem":
        return self.model_copy(update={"detuning": float(detuning)})


def build_hamiltonian(sys: SpinSystem) -> np.ndarray:
    """
    Static Hamiltonian in angular MHz.

    H0 = 2pi [omega_I I_z + A S_z I_z + B S_z I_x + detuning S_z], plus
    A2 S_z I'_z + B2 S_z I'_x + omega_I I'_z when a second proton is present.
    """
    n = sys.n_spins
    sz = spin_operator("Z", 0, n)
    iz = spin_operator("Z", 1, n)
    ix = spin_operator("X", 1, n)
    h = sys.omega_I * iz + sys.A * sz @ iz + sys.B * sz @ ix + sys.detuning * sz
    if sys.extra_proton is not None:
        a2, b2 = sys.extra_proton
        jz = spin_operator("Z", 2, n)
        jx = spin_operator("X", 2, n)
        h = h + a2 * sz @ jz + b2 * sz @ jx + sys.omega_I * jz
    return TWO_PI * h


def closed_form_frequencies(A: float, B: float, omega_I: float) -> Tuple[float, float]:
    """Signed nuclear transition frequencies of the two electron manifolds (MHz)."""
    a12 = omega_I + A / 2.0
    a34 = omega_I - A / 2.0
    w12 = float(np.copysign(np.hypot(a12, B / 2.0), a12))
    w34 = float(np.copysign(np.hypot(a34, B / 2.0), a34))
    return w12, w34


class Eigenstructure(BaseModel):
    """Diagonal form of H0 with levels labelled by their dominant product state."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    omega12: float
    omega34: float
    eigenbasis: np.ndarray
    diagonal_h0: np.ndarray
    degenerate: bool = False

    @property
    def energies(self) -> np.ndarray:
        return np.real(np.diag(self.diagonal_h0))

    def to_eigenframe(self, op: np.ndarray) -> np.ndarray:
        """Express a product-basis operator in the eigenbasis (V^dag op V)."""
        v = self.eigenbasis
        return v.conj().T @ op @ v

    def from_eigenframe(self, op: np.ndarray) -> np.ndarray:
        """Map an eigenbasis operator back to the product basis (V op V^dag)."""
        v = self.eigenbasis
        return v @ op @ v.conj().T


def _order_block(block: np.ndarray) -> Tuple[np.ndarray, bool]:
    """Eigenvectors of one electron manifold, column j dominated by product state j."""
    _, vecs = np.linalg.eigh(block)
    weight = np.abs(vecs) ** 2
    rows, cols = linear_sum_assignment(weight, maximize=True)
    order = cols[np.argsort(rows)]
    peak = weight.max(axis=0)
    tie = bool(np.any(np.sum(np.abs(weight - peak) < 1e-12, axis=0) > 1))
    if tie:
        # equal mixing: keep ascending eigenvalue order
        order = np.arange(len(order))
    vecs = vecs[:, order]
    lead = np.diag(vecs).copy()
    mag = np.abs(lead)
    lead[mag < 1e-15] = 1.0
    mag[mag < 1e-15] = 1.0
    return vecs / (lead / mag), tie


@lru_cache(maxsize=512)
def diagonalize(sys: SpinSystem) -> Eigenstructure:
    """
    Diagonalize H0 manifold by manifold.

    S_z commutes with H0, so the eigenbasis is block diagonal over the two
    electron manifolds. Inside each manifold levels are ordered by their
    dominant nuclear product state, which reproduces the labelling
    diag(w12/2, -w12/2, w34/2, -w34/2) of the two-spin system.
    """
    h = build_hamiltonian(sys)
    d = sys.dim
    half = d // 2
    v = np.zeros((d, d), dtype=complex)
    ties = []
    for start in (0, half):
        block = h[start:start + half, start:start + half]
        vecs, tie = _order_block(block)
        v[start:start + half, start:start + half] = vecs
        ties.append(tie)

    diag = v.conj().T @ h @ v
    energies = np.real(np.diag(diag))
    stride = d // 4
    omega12 = float((energies[0] - energies[stride]) / TWO_PI)
    omega34 = float((energies[half] - energies[half + stride]) / TWO_PI)
    degenerate = abs(omega12 - omega34) < DEGENERACY_TOL or any(ties)
    if degenerate:
        logger.warning(
            "Degenerate level ordering for %s; falling back to index order", sys
        )

    v.setflags(write=False)
    h0_diag = np.diag(energies).astype(complex)
    h0_diag.setflags(write=False)
    return Eigenstructure(
        omega12=omega12,
        omega34=omega34,
        eigenbasis=v,
        diagonal_h0=h0_diag,
        degenerate=degenerate,
    )


class PauliState(BaseModel):
    """Deviation density matrix written as a Pauli string, electron letter first."""

    model_config = ConfigDict(frozen=True)

    label: str

    @field_validator("label")
    @classmethod
    def _check_label(cls, v: str) -> str:
        v = v.upper()
        if not v or any(c not in PAULI for c in v):
            raise ValueError(f"Pauli label must use only I, X, Y, Z: {v!r}")
        return v

    @classmethod
    def of(cls, state: "PauliState | str") -> "PauliState":
        return state if isinstance(state, PauliState) else cls(label=state)

    @property
    def n_spins(self) -> int:
        return len(self.label)

    @property
    def dim(self) -> int:
        return 2 ** self.n_spins

    @property
    def matrix(self) -> np.ndarray:
        return kron_all(PAULI[c] for c in self.label)

    def embed(self, n_spins: int) -> "PauliState":
        """Pad with identities on spins the label does not name."""
        if n_spins < self.n_spins:
            raise DimensionMismatchError(
                f"Cannot embed {self.label} into {n_spins} spins"
            )
        return PauliState(label=self.label + "I" * (n_spins - self.n_spins))

    def in_frame(self, eig: Eigenstructure) -> np.ndarray:
        """The state as seen in a system's transition frame (V P V^dag)."""
        n = int(round(np.log2(eig.eigenbasis.shape[0])))
        return eig.from_eigenframe(self.embed(n).matrix)

    def __str__(self) -> str:
        return self.label


class EnsembleSpec(BaseModel):
    """Lorentzian distribution of electron Larmor offsets."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    fwhm: float = Field(10.0, gt=0)
    n_points: int = Field(21, ge=1)
    span: Optional[float] = Field(None, gt=0)

    @field_validator("n_points")
    @classmethod
    def _odd(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("n_points must be odd so the grid contains detuning 0")
        return v

    @property
    def total_span(self) -> float:
        return self.span if self.span is not None else 4.0 * self.fwhm

    @property
    def detunings(self) -> np.ndarray:
        if self.n_points == 1:
            return np.zeros(1)
        half = self.total_span / 2.0
        grid = np.linspace(-half, half, self.n_points)
        grid[self.n_points // 2] = 0.0
        return grid

    @property
    def weights(self) -> np.ndarray:
        x = 2.0 * self.detunings / self.fwhm
        w = 1.0 / (1.0 + x ** 2)
        return w / w.sum()


def lorentzian_ensemble(spec: EnsembleSpec, base: SpinSystem) -> Ensemble:
    """Members of the ensemble as (system, weight) pairs, ordered by detuning."""
    return [
        (base.with_detuning(base.detuning + float(d)), float(w))
        for d, w in zip(spec.detunings, spec.weights)
    ]


class StickSpectrum(BaseModel):
    """Line positions of the field-swept spectrum (MHz)."""

    model_config = ConfigDict(frozen=True)

    transition_offsets: Tuple[float, float]
    nuclear_frequencies: Tuple[float, float]
    degenerate: bool = False


def stick_spectrum(sys: SpinSystem) -> StickSpectrum:
    eig = diagonalize(sys)
    n12, n34 = abs(eig.omega12), abs(eig.omega34)
    offset = (n12 + n34) / 2.0
    return StickSpectrum(
        transition_offsets=(offset, -offset),
        nuclear_frequencies=(n12, n34),
        degenerate=eig.degenerate,
    )
