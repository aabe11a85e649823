"""
esrcontrol Spectrometer - Transfer Functions

Complex baseband frequency response of the control hardware and its action
on pulse envelopes. The response multiplies the zero-padded spectrum of
ux + i uy; the adjoint applies the conjugate response, which is exactly the
transpose Jacobian of the (real-linear) distortion map.
"""

import csv
import logging
from pathlib import Path
from typing import Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from ..core.errors import TransferGridError
from ..core.propagator import GradientVector
from ..core.pulses import ControlPulse

logger = logging.getLogger(__name__)

PAD_FACTOR = 4
# fraction of spectral energy allowed to fall outside the response grid
SUPPORT_TOL = 1e-12


class TransferFunction(BaseModel):
    """Complex response sampled on a uniform, strictly increasing grid (MHz)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    freq_grid: np.ndarray
    response: np.ndarray
    fwhm_label: Optional[float] = None
    kind: str = "custom"

    @field_validator("freq_grid", mode="before")
    @classmethod
    def _grid(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=float)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("frequency grid needs at least two samples")
        steps = np.diff(arr)
        if np.any(steps <= 0):
            raise ValueError("frequency grid must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-6, atol=0):
            raise ValueError("frequency grid must be uniformly spaced")
        arr.setflags(write=False)
        return arr

    @field_validator("response", mode="before")
    @classmethod
    def _response(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=complex)
        if not np.all(np.isfinite(arr)):
            raise ValueError("transfer response must be finite")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _shapes(self) -> "TransferFunction":
        if self.response.shape != self.freq_grid.shape:
            raise ValueError("response and frequency grid lengths differ")
        return self

    @property
    def step(self) -> float:
        return float(self.freq_grid[1] - self.freq_grid[0])

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.response == 1.0))

    def evaluate(self, freqs: np.ndarray) -> np.ndarray:
        """Linearly interpolated response; zero outside the grid."""
        freqs = np.asarray(freqs, dtype=float)
        re = np.interp(freqs, self.freq_grid, self.response.real, left=0.0, right=0.0)
        im = np.interp(freqs, self.freq_grid, self.response.imag, left=0.0, right=0.0)
        return re + 1j * im

    @classmethod
    def flat(cls, span: float = 1000.0, step: float = 0.5) -> "TransferFunction":
        grid = _symmetric_grid(span, step)
        return cls(freq_grid=grid, response=np.ones(grid.size, dtype=complex), kind="flat")

    @classmethod
    def from_csv(cls, path: Union[str, Path], fwhm_label: Optional[float] = None) -> "TransferFunction":
        """Load 'frequency,re,im' rows (MHz); a header row is skipped."""
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append([float(x) for x in row[:3]])
                except ValueError:
                    if rows:
                        raise
                    continue  # header
        data = np.array(rows, dtype=float)
        if data.ndim != 2 or data.shape[1] != 3:
            raise ValueError(f"{path}: expected three columns frequency,re,im")
        return cls(
            freq_grid=data[:, 0],
            response=data[:, 1] + 1j * data[:, 2],
            fwhm_label=fwhm_label,
            kind="csv",
        )

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frequency", "re", "im"])
            for f, r in zip(self.freq_grid, self.response):
                writer.writerow([f"{f:.17g}", f"{r.real:.17g}", f"{r.imag:.17g}"])
        return path


def _symmetric_grid(span: float, step: float) -> np.ndarray:
    n = int(round(span / step))
    return (np.arange(n + 1) - n / 2.0) * step


def synthesize_transfer(
    fwhm: float,
    kind: Literal["measured_like", "lorentzian"] = "measured_like",
    span: float = 1000.0,
    step: float = 0.5,
    asymmetry: float = 0.1,
) -> TransferFunction:
    """
    Smooth model response with amplitude FWHM ``fwhm`` (MHz).

    The amplitude is 1 / (1 + x^2) with x = 2f / fwhm and the phase is
    -arctan(x). ``measured_like`` multiplies the amplitude by
    1 + asymmetry * x (1 - x^2) / (1 + x^4), which leaves f = 0 and
    f = +-fwhm/2 untouched but makes the two sides unequal.
    """
    if fwhm <= 0:
        raise ValueError(f"fwhm must be positive, got {fwhm}")
    grid = _symmetric_grid(span, step)
    x = 2.0 * grid / fwhm
    amp = 1.0 / (1.0 + x ** 2)
    if kind == "measured_like":
        amp = amp * (1.0 + asymmetry * x * (1.0 - x ** 2) / (1.0 + x ** 4))
    elif kind != "lorentzian":
        raise ValueError(f"unknown transfer kind {kind!r}")
    return TransferFunction(
        freq_grid=grid,
        response=amp * np.exp(-1j * np.arctan(x)),
        fwhm_label=fwhm,
        kind=kind,
    )


def _filter(z: np.ndarray, dt: float, response: TransferFunction, conjugate: bool, check: bool) -> np.ndarray:
    M = z.size
    n = PAD_FACTOR * M
    spectrum = np.fft.fft(z, n)
    freqs = np.fft.fftfreq(n, d=dt * 1e-3)
    if check:
        _check_support(spectrum, freqs, response)
    h = response.evaluate(freqs)
    if conjugate:
        h = h.conj()
    return np.fft.ifft(spectrum * h)[:M]


def _check_support(spectrum: np.ndarray, freqs: np.ndarray, T: TransferFunction) -> None:
    power = np.abs(spectrum) ** 2
    total = power.sum()
    if total == 0:
        return
    outside = (freqs < T.freq_grid[0]) | (freqs > T.freq_grid[-1])
    fraction = power[outside].sum() / total
    if fraction > SUPPORT_TOL:
        raise TransferGridError(
            f"{fraction:.3g} of the pulse spectral energy lies outside the transfer grid "
            f"[{T.freq_grid[0]:g}, {T.freq_grid[-1]:g}] MHz "
            f"(pulse Nyquist band is +-{np.abs(freqs).max():g} MHz)"
        )


def distort(p: ControlPulse, T: TransferFunction) -> ControlPulse:
    """The pulse as it reaches the spins after the hardware response."""
    if T.is_identity:
        return ControlPulse(dt=p.dt, ux=p.ux, uy=p.uy)
    z = _filter(p.envelope, p.dt, T, conjugate=False, check=True)
    return ControlPulse.from_envelope(z, p.dt)


def distort_adjoint(g: Union[GradientVector, np.ndarray], T: TransferFunction, dt: float) -> GradientVector:
    """
    Transpose Jacobian of :func:`distort` applied to a gradient.

    Maps the gradient with respect to the distorted amplitudes onto the
    programmed amplitudes: g = J^T g_distorted.
    """
    if not isinstance(g, GradientVector):
        g = GradientVector.from_array(np.asarray(g, dtype=float))
    if T.is_identity:
        return g
    z = _filter(g.gx + 1j * g.gy, dt, T, conjugate=True, check=False)
    return GradientVector(gx=z.real, gy=z.imag)
