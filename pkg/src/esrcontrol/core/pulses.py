"""
esrcontrol Core - Pulse Library

Piecewise-constant two-channel control pulses, the linear (Hadamard),
Slepian and canonical basis sets, and rotation insertion for closed-loop
gradient measurement.

Amplitudes are angular (rad/us) so that the control Hamiltonian is
Hc = ux * sigma_x + uy * sigma_y on the electron; the time step is in ns.
"""

import logging
import re
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple, Union

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

from .errors import DimensionMismatchError, InvalidBasisError
from .spin import PAULI, kron_all

logger = logging.getLogger(__name__)

Channel = Literal["x", "y"]

_HEADER = re.compile(r"#\s*dt=(?P<dt>\S+)\s+M=(?P<m>\d+)(?:\s+max_amp=(?P<max_amp>\S+))?")


def _as_readonly(v: Any) -> np.ndarray:
    arr = np.array(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError("amplitude sequences must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError("amplitude sequences must be finite")
    arr.setflags(write=False)
    return arr


class ControlPulse(BaseModel):
    """Two-channel piecewise-constant pulse with a fixed time step."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dt: float = Field(2.0, gt=0)
    ux: np.ndarray
    uy: np.ndarray
    max_amp: Optional[float] = Field(None, gt=0)

    @field_validator("ux", "uy", mode="before")
    @classmethod
    def _coerce(cls, v: Any) -> np.ndarray:
        return _as_readonly(v)

    @model_validator(mode="after")
    def _check(self) -> "ControlPulse":
        if len(self.ux) != len(self.uy) or len(self.ux) < 1:
            raise ValueError(
                f"ux and uy must share a length of at least 1 (got {len(self.ux)}, {len(self.uy)})"
            )
        if self.max_amp is not None:
            peak = max(np.max(np.abs(self.ux)), np.max(np.abs(self.uy)))
            if peak > self.max_amp * (1 + 1e-12):
                raise ValueError(f"amplitude {peak:.6g} exceeds max_amp {self.max_amp:.6g}")
        return self

    @field_serializer("ux", "uy")
    def _serialize(self, v: np.ndarray) -> list:
        return v.tolist()

    @property
    def M(self) -> int:
        return len(self.ux)

    @property
    def duration(self) -> float:
        """Total duration in ns."""
        return self.M * self.dt

    @property
    def envelope(self) -> np.ndarray:
        """Complex envelope ux + i uy."""
        return self.ux + 1j * self.uy

    def channel(self, c: Channel) -> np.ndarray:
        return self.ux if c == "x" else self.uy

    def as_array(self) -> np.ndarray:
        """Amplitudes stacked as [ux, uy] (length 2M)."""
        return np.concatenate([self.ux, self.uy])

    def replace(self, ux: np.ndarray, uy: np.ndarray) -> "ControlPulse":
        """New pulse with the same dt and clamp, amplitudes clipped to max_amp."""
        return ControlPulse(
            dt=self.dt,
            ux=clamp(ux, self.max_amp),
            uy=clamp(uy, self.max_amp),
            max_amp=self.max_amp,
        )

    @classmethod
    def zeros(cls, M: int, dt: float = 2.0, max_amp: Optional[float] = None) -> "ControlPulse":
        return cls(dt=dt, ux=np.zeros(M), uy=np.zeros(M), max_amp=max_amp)

    @classmethod
    def square(
        cls,
        M: int,
        dt: float = 2.0,
        amplitude: float = 1.0,
        phase: float = 0.0,
        max_amp: Optional[float] = None,
    ) -> "ControlPulse":
        """Constant-amplitude pulse with the given phase (radians, 0 means x)."""
        return cls(
            dt=dt,
            ux=np.full(M, amplitude * np.cos(phase)),
            uy=np.full(M, amplitude * np.sin(phase)),
            max_amp=max_amp,
        )

    @classmethod
    def from_envelope(cls, z: np.ndarray, dt: float, max_amp: Optional[float] = None) -> "ControlPulse":
        z = np.asarray(z, dtype=complex)
        return cls(dt=dt, ux=clamp(z.real, max_amp), uy=clamp(z.imag, max_amp), max_amp=max_amp)

    @classmethod
    def from_array(cls, v: np.ndarray, dt: float, max_amp: Optional[float] = None) -> "ControlPulse":
        v = np.asarray(v, dtype=float)
        if v.ndim != 1 or len(v) % 2:
            raise DimensionMismatchError(f"expected a stacked [ux, uy] vector, got shape {v.shape}")
        m = len(v) // 2
        return cls(dt=dt, ux=v[:m], uy=v[m:], max_amp=max_amp)

    def to_text(self) -> str:
        """Plain-text form: header with dt and M, then one 'ux uy' row per segment."""
        header = f"# dt={self.dt!r} M={self.M}"
        if self.max_amp is not None:
            header += f" max_amp={self.max_amp!r}"
        rows = [f"{x:.17g} {y:.17g}" for x, y in zip(self.ux, self.uy)]
        return "\n".join([header, *rows]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ControlPulse":
        """Parse :meth:`to_text` output; other ``#`` comment lines are ignored."""
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        comments = [ln for ln in lines if ln.startswith("#")]
        matches = [m for m in map(_HEADER.match, comments) if m is not None]
        if not lines:
            raise ValueError("empty pulse file")
        if not matches:
            raise ValueError(f"pulse header not recognised: {lines[0]!r}")
        match = matches[0]
        rows = np.array([[float(t) for t in ln.split()] for ln in lines if not ln.startswith("#")], dtype=float)
        m = int(match["m"])
        if rows.shape != (m, 2):
            raise ValueError(f"header declares M={m} but found {rows.shape[0]} rows")
        max_amp = float(match["max_amp"]) if match["max_amp"] else None
        return cls(dt=float(match["dt"]), ux=rows[:, 0], uy=rows[:, 1], max_amp=max_amp)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(self.to_text())
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ControlPulse":
        return cls.from_text(Path(path).read_text())


def clamp(u: np.ndarray, max_amp: Optional[float]) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if max_amp is None:
        return u
    clipped = np.clip(u, -max_amp, max_amp)
    if np.any(clipped != u):
        logger.debug("Clamped %d segments to max_amp=%g", int(np.sum(clipped != u)), max_amp)
    return clipped


def _stacked(g: Any) -> np.ndarray:
    return np.asarray(g.as_array() if hasattr(g, "as_array") else g, dtype=float)


def update_pulse(p: ControlPulse, g: Any, c: float) -> ControlPulse:
    """
    Gradient step u_new = u_old + c * g on both channels.

    Args:
        p: Current pulse (left unmodified)
        g: GradientVector or stacked [gx, gy] array of length 2M
        c: Learning rate

    Returns:
        Updated pulse, clamped to ``p.max_amp`` if set
    """
    g = _stacked(g)
    if g.shape != (2 * p.M,):
        raise DimensionMismatchError(f"gradient length {g.size} does not match 2M = {2 * p.M}")
    return p.replace(p.ux + c * g[:p.M], p.uy + c * g[p.M:])


def perturb_along(p: ControlPulse, v: np.ndarray, delta: float, channel: Channel, sign: int) -> ControlPulse:
    """Add ``sign * delta * v`` to one channel, leaving the other untouched."""
    if delta == 0:
        raise ValueError("perturbation size must be non-zero")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    v = np.asarray(v, dtype=float)
    if v.shape != (p.M,):
        raise DimensionMismatchError(f"basis vector length {v.size} does not match M = {p.M}")
    step = sign * delta * v
    if channel == "x":
        return p.replace(p.ux + step, p.uy)
    if channel == "y":
        return p.replace(p.ux, p.uy + step)
    raise ValueError(f"unknown channel {channel!r}")


class BasisKind(str, Enum):
    LINEAR_HADAMARD = "linear_hadamard"
    SLEPIAN = "slepian"
    CANONICAL = "canonical"


class BasisSet(BaseModel):
    """Orthonormal vectors spanning (part of) the per-channel segment space."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: BasisKind
    vectors: np.ndarray
    meta: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("vectors", mode="before")
    @classmethod
    def _coerce(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise InvalidBasisError("basis vectors must form a non-empty 2-D array")
        arr.setflags(write=False)
        return arr

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def M(self) -> int:
        return self.vectors.shape[1]

    def coefficients(self, x: np.ndarray) -> np.ndarray:
        return self.vectors @ np.asarray(x, dtype=float)

    def reconstruct(self, c: np.ndarray) -> np.ndarray:
        return self.vectors.T @ np.asarray(c, dtype=float)

    def project(self, x: np.ndarray) -> np.ndarray:
        """Orthogonal projection of a length-M vector onto the span."""
        return self.reconstruct(self.coefficients(x))


def power_of_two_blocks(M: int) -> Tuple[int, ...]:
    """Largest-first power-of-two decomposition, e.g. 100 -> (64, 32, 4)."""
    if not isinstance(M, (int, np.integer)) or M < 1:
        raise InvalidBasisError(f"segment count must be a positive integer, got {M!r}")
    return tuple(1 << b for b in range(int(M).bit_length() - 1, -1, -1) if M & (1 << b))


def make_linear_basis(M: int) -> BasisSet:
    """Block-diagonal normalized Hadamard basis, blocks laid out largest first."""
    blocks = power_of_two_blocks(M)
    mats = [scipy.linalg.hadamard(n).astype(float) / np.sqrt(n) for n in blocks]
    return BasisSet(
        kind=BasisKind.LINEAR_HADAMARD,
        vectors=scipy.linalg.block_diag(*mats),
        meta={"blocks": list(blocks)},
    )


def make_canonical_basis(M: int) -> BasisSet:
    if M < 1:
        raise InvalidBasisError(f"segment count must be positive, got {M}")
    return BasisSet(kind=BasisKind.CANONICAL, vectors=np.eye(M))


def slepian_half_bandwidth(bandwidth: float, dt: float) -> float:
    """Half-bandwidth W in cycles/sample for a full bandwidth in MHz and dt in ns."""
    return bandwidth * dt * 1e-3 / 2.0


def sinc_kernel(N: int, W: float) -> np.ndarray:
    """N x N kernel sin(2 pi W (l - m)) / (pi (l - m)) with 2W on the diagonal."""
    idx = np.arange(N)
    return 2.0 * W * np.sinc(2.0 * W * (idx[:, None] - idx[None, :]))


def make_slepian_basis(N: int, W: float, count: Optional[int] = None) -> BasisSet:
    """
    Discrete prolate spheroidal sequences of length N and half-bandwidth W.

    Args:
        N: Sequence length (segment count)
        W: Half-bandwidth in cycles per sample, 0 < W <= 0.5
        count: Number of sequences; defaults to round(2NW)

    Returns:
        BasisSet whose vectors are sorted by descending concentration,
        with the eigenvalues stored in ``meta["eigenvalues"]``
    """
    if not 0 < W <= 0.5:
        raise InvalidBasisError(f"half-bandwidth W must lie in (0, 0.5], got {W}")
    if N < 1:
        raise InvalidBasisError(f"sequence length must be positive, got {N}")
    if count is None:
        count = max(1, int(round(2 * N * W)))
    if not 1 <= count <= N:
        raise InvalidBasisError(f"count must lie in [1, {N}], got {count}")

    kernel = sinc_kernel(N, W)
    evals, evecs = scipy.linalg.eigh(kernel, subset_by_index=[N - count, N - 1])
    evals = evals[::-1]
    evecs = evecs[:, ::-1].T.copy()

    for k, v in enumerate(evecs):
        total = v.sum()
        if abs(total) > 1e-8 * np.sqrt(N):
            s = np.sign(total)
        else:
            s = np.sign(v[np.argmax(np.abs(v) > 1e-8 * np.abs(v).max())])
        evecs[k] = s * v

    evals = np.clip(evals, np.finfo(float).tiny, 1.0)
    return BasisSet(
        kind=BasisKind.SLEPIAN,
        vectors=evecs,
        meta={"N": N, "W": W, "eigenvalues": evals.tolist()},
    )


class RotationModel(BaseModel):
    """How the +-theta rotations of the closed-loop gradient are realised."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["ideal", "two_tone"] = "ideal"
    theta: float = np.pi / 2
    tone_offsets: float = Field(36.0, gt=0)
    tone_duration: float = Field(200.0, gt=0)


def electron_rotation(axis: Channel, angle: float, n_spins: int) -> np.ndarray:
    """exp(-i angle sigma_axis / 2) on the electron."""
    sigma = PAULI[axis.upper()]
    r = np.cos(angle / 2) * PAULI["I"] - 1j * np.sin(angle / 2) * sigma
    return kron_all([r] + [PAULI["I"]] * (n_spins - 1))


class Kick(BaseModel):
    """Instantaneous electron rotation applied after ``after_segment`` segments."""

    model_config = ConfigDict(frozen=True)

    after_segment: int = Field(ge=0)
    axis: Channel
    angle: float


class PulseProgram(BaseModel):
    """A pulse as executed: amplitudes plus any zero-duration rotations."""

    model_config = ConfigDict(frozen=True)

    pulse: ControlPulse
    kicks: Tuple[Kick, ...] = ()


def two_tone_segment(dt: float, axis: Channel, angle: float, offset: float, duration: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Square two-tone segment at carrier offsets +-offset (MHz).

    Each tone alone drives its transition through ``angle``: a square tone
    of envelope amplitude a over T us rotates by 2aT, so a = angle / (2T).
    """
    n = max(1, int(round(duration / dt)))
    t_us = (np.arange(n) + 0.5) * dt * 1e-3
    a = angle / (2.0 * n * dt * 1e-3)
    wave = 2.0 * a * np.cos(2 * np.pi * offset * t_us)
    zeros = np.zeros(n)
    return (wave, zeros) if axis == "x" else (zeros, wave)


def insert_rotation(p: ControlPulse, m: int, axis: Channel, sign: int, model: RotationModel) -> PulseProgram:
    """
    Pulse program with a rotation exp(-i sign theta sigma_axis / 2) between
    segments m and m+1 (1-indexed).
    """
    if not 1 <= m <= p.M:
        raise ValueError(f"segment index {m} outside 1..{p.M}")
    if axis not in ("x", "y"):
        raise ValueError(f"unknown axis {axis!r}")
    if model.theta == 0:
        return PulseProgram(pulse=p)
    angle = sign * model.theta
    if model.kind == "ideal":
        return PulseProgram(pulse=p, kicks=(Kick(after_segment=m, axis=axis, angle=angle),))

    tx, ty = two_tone_segment(p.dt, axis, angle, model.tone_offsets, model.tone_duration)
    ux = np.concatenate([p.ux[:m], tx, p.ux[m:]])
    uy = np.concatenate([p.uy[:m], ty, p.uy[m:]])
    # the tone segment is not subject to the shaped-pulse clamp
    return PulseProgram(pulse=ControlPulse(dt=p.dt, ux=ux, uy=uy))
