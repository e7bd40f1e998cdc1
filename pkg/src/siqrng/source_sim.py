"""Photon-source model: per-pulse photon statistics and the waveplate
state-preparation chain.

The source is deliberately simple — Poisson photon numbers with an
optional per-pulse Gaussian intensity fluctuation (sunlight), and a
polarization state fixed by a half-wave plate and a quarter-wave plate
acting on horizontally polarized input. Nothing downstream trusts any
of it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rngstream

#: Hard cap on photons per pulse; bounds memory, far above any real lambda.
MAX_PHOTONS = (1 << 16) - 1

#: Default relative intensity fluctuation for sunlight runs.
SUNLIGHT_FLUCTUATION = 0.05


@dataclass(frozen=True)
class PolarizationState:
    """Jones vector (amplitude_H, amplitude_V), unit norm within 1e-12."""

    amplitude_H: complex
    amplitude_V: complex

    def __post_init__(self):
        norm = abs(self.amplitude_H) ** 2 + abs(self.amplitude_V) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"Jones vector norm^2 = {norm}, expected 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.amplitude_H, self.amplitude_V], dtype=complex)


@dataclass(frozen=True)
class SourceParams:
    """Source statistics and prepared polarization.

    mean_photons_lambda is the pre-detection mean photon number per pulse;
    intensity_fluctuation_rel_std the relative std of a per-pulse Gaussian
    intensity jitter (0 for a stable laser, 0.05 typical for sunlight).
    """

    mean_photons_lambda: float = 14.4
    pulse_rate_G: float = 4.0e6
    hwp_angle: float = 22.5
    qwp_angle: float = 0.0
    intensity_fluctuation_rel_std: float = 0.0
    source_kind: str = "laser"

    def __post_init__(self):
        if self.mean_photons_lambda < 0:
            raise ValueError("mean photon number must be >= 0")
        if self.pulse_rate_G <= 0:
            raise ValueError("pulse rate must be positive")
        if self.intensity_fluctuation_rel_std < 0:
            raise ValueError("fluctuation must be >= 0")
        if self.source_kind not in ("laser", "sunlight"):
            raise ValueError(f"unknown source kind {self.source_kind!r}")

    @classmethod
    def sunlight(cls, mean_photons_lambda: float = 11.6, **kw) -> "SourceParams":
        kw.setdefault("intensity_fluctuation_rel_std", SUNLIGHT_FLUCTUATION)
        return cls(
            mean_photons_lambda=mean_photons_lambda,
            source_kind="sunlight",
            **kw,
        )


def _rotation(angle_rad: float) -> np.ndarray:
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return np.array([[c, -s], [s, c]], dtype=complex)


def waveplate_matrix(angle_deg: float, retardance_rad: float) -> np.ndarray:
    """Jones matrix of a retarder with its fast axis at the given angle.

    Convention: unit gain on the fast axis, phase e^(i*retardance) on the
    slow axis; any consistent convention gives the same measured
    probabilities.
    """
    a = math.radians(angle_deg)
    retarder = np.array([[1.0, 0.0], [0.0, np.exp(1j * retardance_rad)]])
    return _rotation(a) @ retarder @ _rotation(-a)


def half_wave_plate(angle_deg: float) -> np.ndarray:
    return waveplate_matrix(angle_deg, math.pi)


def quarter_wave_plate(angle_deg: float) -> np.ndarray:
    return waveplate_matrix(angle_deg, math.pi / 2.0)


def polarization_from_waveplates(
    hwp_angle: float, qwp_angle: float
) -> PolarizationState:
    """State prepared by sending |H> through the QWP and then the HWP."""
    vec = half_wave_plate(hwp_angle) @ quarter_wave_plate(qwp_angle) @ np.array(
        [1.0 + 0.0j, 0.0j]
    )
    vec = vec / np.linalg.norm(vec)
    return PolarizationState(amplitude_H=complex(vec[0]), amplitude_V=complex(vec[1]))


@dataclass
class PulseSampler:
    """Deterministic per-pulse photon-number stream for one run.

    The stream is a pure function of (seed, params): pulse i is served
    from its panel's generator, so any index range can be regenerated
    independently of execution order.
    """

    params: SourceParams
    seed: int
    _state: PolarizationState = field(init=False, repr=False)
    _cache_panel: int = field(default=-1, init=False, repr=False)
    _cache_counts: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self._state = polarization_from_waveplates(
            self.params.hwp_angle, self.params.qwp_angle
        )

    @property
    def state(self) -> PolarizationState:
        return self._state

    def _panel_counts(self, panel: int) -> np.ndarray:
        if panel == self._cache_panel:
            return self._cache_counts
        rng = rngstream.panel_generator(self.seed, rngstream.DOMAIN_SOURCE, panel)
        lam = self.params.mean_photons_lambda
        n = rngstream.PANEL_PULSES
        if lam == 0.0:
            counts = np.zeros(n, dtype=np.uint32)
        else:
            rel = self.params.intensity_fluctuation_rel_std
            if rel > 0.0:
                lam_eff = lam * (1.0 + rel * rng.standard_normal(n))
                np.clip(lam_eff, 0.0, None, out=lam_eff)
            else:
                lam_eff = np.full(n, lam)
            counts = rng.poisson(lam_eff).astype(np.uint32)
            np.minimum(counts, MAX_PHOTONS, out=counts)
        self._cache_panel = panel
        self._cache_counts = counts
        return counts

    def photon_counts(self, start: int, count: int) -> np.ndarray:
        """Photon numbers for pulses [start, start+count)."""
        out = np.empty(count, dtype=np.uint32)
        for _, lo, hi, t_lo, t_hi in rngstream.panel_range(start, count):
            out[lo - start : hi - start] = self._panel_counts(
                lo // rngstream.PANEL_PULSES
            )[t_lo:t_hi]
        return out

    def sample(self, pulse_index: int) -> tuple[int, PolarizationState]:
        """One pulse: (photon count, prepared state). Identical
        (seed, pulse_index) always yields identical output."""
        return int(self.photon_counts(pulse_index, 1)[0]), self._state


def sample_pulse(
    sampler: PulseSampler, pulse_index: int
) -> tuple[int, PolarizationState]:
    """Module-level convenience for PulseSampler.sample."""
    return sampler.sample(pulse_index)
