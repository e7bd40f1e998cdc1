"""Measurement-side simulation: basis choice, the phase-modulated
interferometer transformation, threshold detection with efficiency,
dark counts and dead time, and event tallying.

The simulation is organized in fixed pulse panels (see rngstream), so a
run can be produced serially or in arbitrary index chunks with
byte-identical results. Dead-time suppression is keyed to raw avalanche
attempts within a bounded look-back window, which keeps chunk
recomputation exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rngstream
from .errors import EstimationAbort
from .protocol_math import TallySummary
from .source_sim import PolarizationState, PulseSampler, SourceParams

BASIS_Z = 0
BASIS_X = 1

OUTCOME_NONE = 0
OUTCOME_D0 = 1
OUTCOME_D1 = 2
OUTCOME_DOUBLE = 3

_BASIS_NAMES = {BASIS_Z: "Z", BASIS_X: "X"}
_OUTCOME_NAMES = {
    OUTCOME_NONE: "None",
    OUTCOME_D0: "D0",
    OUTCOME_D1: "D1",
    OUTCOME_DOUBLE: "Double",
}


@dataclass(frozen=True)
class MeasurementConfig:
    """Per-pulse basis selection and the interferometer phase settings."""

    prob_X: float = 0.004
    phase_Z: tuple[float, float] = (0.0, 0.0)
    phase_X: tuple[float, float] = (-math.pi / 4.0, math.pi / 4.0)
    basis_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.prob_X <= 1.0:
            raise ValueError(f"prob_X must be in [0, 1], got {self.prob_X}")


@dataclass(frozen=True)
class DetectorParams:
    """Threshold-detector pair parameters."""

    eta0: float = 0.1
    eta1: float = 0.1
    dark_rate: float = 200.0
    dead_time: float = 50e-9
    gate_width: float = 100e-9

    def __post_init__(self):
        if not 0.0 <= self.eta0 <= 1.0 or not 0.0 <= self.eta1 <= 1.0:
            raise ValueError("efficiencies must be in [0, 1]")
        if self.dark_rate < 0:
            raise ValueError("dark rate must be >= 0")
        if self.dead_time < 0:
            raise ValueError("dead time must be >= 0")
        if self.gate_width <= 0:
            raise ValueError("gate width must be positive")

    @property
    def dark_click_prob(self) -> float:
        """Per-detector dark-click probability inside one gate window."""
        return -math.expm1(-self.dark_rate * self.gate_width)


@dataclass(frozen=True)
class PulseEvent:
    """One pulse of the measured stream."""

    index: int
    basis: int
    outcome: int

    def __str__(self):
        return (
            f"PulseEvent({self.index}, {_BASIS_NAMES[self.basis]}, "
            f"{_OUTCOME_NAMES[self.outcome]})"
        )


class EventStream:
    """Column-store of consecutive pulse events.

    Holds the basis and outcome codes as uint8 arrays plus the index of
    the first pulse; indices are consecutive by construction.
    """

    def __init__(self, basis: np.ndarray, outcome: np.ndarray, start: int = 0):
        basis = np.asarray(basis, dtype=np.uint8)
        outcome = np.asarray(outcome, dtype=np.uint8)
        if basis.shape != outcome.shape or basis.ndim != 1:
            raise ValueError("basis/outcome must be 1-d arrays of equal length")
        self.basis = basis
        self.outcome = outcome
        self.start = start

    def __len__(self):
        return len(self.basis)

    def __eq__(self, other):
        return (
            isinstance(other, EventStream)
            and self.start == other.start
            and np.array_equal(self.basis, other.basis)
            and np.array_equal(self.outcome, other.outcome)
        )

    @property
    def index(self) -> np.ndarray:
        return np.arange(self.start, self.start + len(self), dtype=np.uint64)

    def events(self):
        """Iterate PulseEvent records (small streams only)."""
        for i in range(len(self)):
            yield PulseEvent(
                index=self.start + i,
                basis=int(self.basis[i]),
                outcome=int(self.outcome[i]),
            )

    @classmethod
    def concat(cls, parts: list["EventStream"]) -> "EventStream":
        for a, b in zip(parts, parts[1:]):
            if b.start != a.start + len(a):
                raise ValueError("streams are not contiguous")
        return cls(
            np.concatenate([p.basis for p in parts]),
            np.concatenate([p.outcome for p in parts]),
            start=parts[0].start if parts else 0,
        )


def choose_basis(basis_seed: int, index: int, prob_X: float) -> int:
    """Basis for one pulse, deterministic in (seed, index)."""
    return int(choose_basis_block(basis_seed, index, 1, prob_X)[0])


def choose_basis_block(
    basis_seed: int, start: int, count: int, prob_X: float
) -> np.ndarray:
    """Vectorized basis choices for pulses [start, start+count)."""
    out = np.empty(count, dtype=np.uint8)
    for panel, lo, hi, t_lo, t_hi in rngstream.panel_range(start, count):
        rng = np.random.Generator(
            np.random.Philox(
                np.random.SeedSequence(entropy=basis_seed, spawn_key=(panel,))
            )
        )
        u = rng.random(rngstream.PANEL_PULSES)
        out[lo - start : hi - start] = (u[t_lo:t_hi] < prob_X).astype(np.uint8)
    return out


def effective_projection_probs(
    state: PolarizationState, basis: int, config: MeasurementConfig
) -> tuple[float, float]:
    """Detector-hit probabilities (p0, p1) for a state under one basis
    setting.

    Applies the phase unitary of the chosen setting followed by the fixed
    polarization-controller unitary, then projects on the output
    polarizing splitter. p0 + p1 = 1 within 1e-12 for unit input.
    """
    vec = state.as_array()
    norm = float(np.vdot(vec, vec).real)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"state norm^2 = {norm}, expected 1")
    phases = config.phase_X if basis == BASIS_X else config.phase_Z
    out = measurement_unitary(*phases) @ vec
    p0 = float(abs(out[0]) ** 2)
    p1 = float(abs(out[1]) ** 2)
    total = p0 + p1
    return p0 / total, p1 / total


def phase_unitary(phi_c: float, phi_a: float) -> np.ndarray:
    """Loop unitary: independent phases on the two polarization arms."""
    return np.array(
        [[np.exp(1j * phi_c), 0.0], [0.0, np.exp(1j * phi_a)]], dtype=complex
    )


#: Fixed polarization-controller unitary following the loop.
CONTROLLER_UNITARY = 0.5 * np.array(
    [[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=complex
)


def measurement_unitary(phi_c: float, phi_a: float) -> np.ndarray:
    return CONTROLLER_UNITARY @ phase_unitary(phi_c, phi_a)


class DeadTimeState:
    """Per-detector bounded dead-time memory across consecutive pulses.

    A raw avalanche attempt (photon or dark) makes the detector
    unresponsive for the pulses that start within ``dead_time`` after it,
    whether or not the attempt itself produced an output. The look-back
    horizon is therefore exactly ``window`` pulses, which makes chunked
    recomputation exact. At the default 50 ns dead time and 250 ns pulse
    period the window is zero and the state is inert.
    """

    def __init__(self, dead_time: float, pulse_period: float):
        if pulse_period <= 0:
            raise ValueError("pulse period must be positive")
        self.window = max(0, math.ceil(dead_time / pulse_period) - 1)
        self._last_raw = [-(self.window + 1), -(self.window + 1)]
        self._pulse = 0

    def begin_pulse(self) -> tuple[bool, bool]:
        """Liveness of (detector0, detector1) for the next pulse."""
        p = self._pulse
        return (
            p - self._last_raw[0] > self.window,
            p - self._last_raw[1] > self.window,
        )

    def end_pulse(self, raw0: bool, raw1: bool) -> None:
        if raw0:
            self._last_raw[0] = self._pulse
        if raw1:
            self._last_raw[1] = self._pulse
        self._pulse += 1


def detect(
    photon_count: int,
    p0: float,
    p1: float,
    det: DetectorParams,
    rng: np.random.Generator,
    dead_state: DeadTimeState,
) -> int:
    """Threshold detection of one pulse; advances the dead-time state.

    Photons split binomially between the arms; detector i fires when at
    least one photon survives its efficiency thinning (evaluated through
    the closed-form no-survivor probability) or a dark count occurs in
    the gate, provided the detector is live.
    """
    if abs(p0 + p1 - 1.0) > 1e-9:
        raise ValueError("p0 + p1 must equal 1")
    n0 = rng.binomial(photon_count, p0) if photon_count > 0 else 0
    n1 = photon_count - n0
    d = det.dark_click_prob
    q0 = 1.0 - (1.0 - det.eta0) ** n0 * (1.0 - d)
    q1 = 1.0 - (1.0 - det.eta1) ** n1 * (1.0 - d)
    raw0 = bool(rng.random() < q0)
    raw1 = bool(rng.random() < q1)
    alive0, alive1 = dead_state.begin_pulse()
    dead_state.end_pulse(raw0, raw1)
    click0 = raw0 and alive0
    click1 = raw1 and alive1
    if click0 and click1:
        return OUTCOME_DOUBLE
    if click0:
        return OUTCOME_D0
    if click1:
        return OUTCOME_D1
    return OUTCOME_NONE


def _raw_clicks_panel(
    panel: int,
    sampler: PulseSampler,
    det: DetectorParams,
    config: MeasurementConfig,
    seed: int,
    probs_z: tuple[float, float],
    probs_x: tuple[float, float],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw (pre-dead-time) click indicators and bases for one panel.

    Fixed draw order per panel: arm split, detector-0 uniform,
    detector-1 uniform. Photon numbers come from the separate source
    stream; bases from the separate basis stream.
    """
    n = rngstream.PANEL_PULSES
    basis = choose_basis_block(
        config.basis_seed, panel * n, n, config.prob_X
    )
    photons = sampler._panel_counts(panel)
    rng = rngstream.panel_generator(seed, rngstream.DOMAIN_DETECTION, panel)

    p0 = np.where(basis == BASIS_X, probs_x[0], probs_z[0])
    n0 = rng.binomial(photons.astype(np.int64), p0)
    n1 = photons.astype(np.int64) - n0

    d = det.dark_click_prob
    q0 = 1.0 - (1.0 - det.eta0) ** n0 * (1.0 - d)
    q1 = 1.0 - (1.0 - det.eta1) ** n1 * (1.0 - d)
    raw0 = rng.random(n) < q0
    raw1 = rng.random(n) < q1
    return basis, raw0, raw1


def _suppress_dead(raw: np.ndarray, window: int, warmup: np.ndarray) -> np.ndarray:
    """Clicks surviving dead time: live unless a raw attempt occurred in
    the previous ``window`` pulses. ``warmup`` supplies exactly the
    ``window`` raw indicators preceding the block."""
    if window == 0:
        return raw
    if len(warmup) != window:
        raise ValueError("warmup must supply exactly `window` pulses")
    ext = np.concatenate([warmup, raw]).astype(np.int64)
    total = np.concatenate([[0], np.cumsum(ext)])
    # pulse i of the block sits at ext position i+window; its look-back
    # window is ext[i : i+window]
    i = np.arange(len(raw))
    attempts_before = total[i + window] - total[i]
    return raw & (attempts_before == 0)


def run_simulation(
    source: SourceParams,
    det: DetectorParams,
    config: MeasurementConfig,
    n_pulses: int,
    seed: int,
) -> EventStream:
    """Simulate a full run of n_pulses pulses, deterministic in the seeds."""
    return simulate_range(source, det, config, seed, 0, n_pulses)


def simulate_range(
    source: SourceParams,
    det: DetectorParams,
    config: MeasurementConfig,
    seed: int,
    start: int,
    count: int,
) -> EventStream:
    """Events for pulses [start, start+count), byte-identical to the same
    slice of a serial full run.

    Dead-time state is warmed up by recomputing the raw attempts of the
    ``window`` pulses before ``start``.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return EventStream(
            np.empty(0, np.uint8), np.empty(0, np.uint8), start=start
        )
    sampler = PulseSampler(source, seed)
    probs_z = effective_projection_probs(sampler.state, BASIS_Z, config)
    probs_x = effective_projection_probs(sampler.state, BASIS_X, config)
    period = 1.0 / source.pulse_rate_G
    window = max(0, math.ceil(det.dead_time / period) - 1)

    warm_lo = max(0, start - window)
    gen_start = warm_lo
    gen_count = (start + count) - warm_lo

    basis_parts, raw0_parts, raw1_parts = [], [], []
    for panel, lo, hi, t_lo, t_hi in rngstream.panel_range(gen_start, gen_count):
        b, r0, r1 = _raw_clicks_panel(
            panel, sampler, det, config, seed, probs_z, probs_x
        )
        basis_parts.append(b[t_lo:t_hi])
        raw0_parts.append(r0[t_lo:t_hi])
        raw1_parts.append(r1[t_lo:t_hi])
    basis = np.concatenate(basis_parts)
    raw0 = np.concatenate(raw0_parts)
    raw1 = np.concatenate(raw1_parts)

    skip = start - warm_lo  # warmup pulses present at the front
    if window > 0:
        pad = window - skip  # virtual pulses before index 0
        warm0 = np.concatenate([np.zeros(max(0, pad), bool), raw0[:skip]])
        warm1 = np.concatenate([np.zeros(max(0, pad), bool), raw1[:skip]])
        click0 = _suppress_dead(raw0[skip:], window, warm0)
        click1 = _suppress_dead(raw1[skip:], window, warm1)
    else:
        click0, click1 = raw0, raw1
    basis = basis[skip:]

    outcome = np.zeros(count, dtype=np.uint8)
    outcome[click0 & ~click1] = OUTCOME_D0
    outcome[~click0 & click1] = OUTCOME_D1
    outcome[click0 & click1] = OUTCOME_DOUBLE
    return EventStream(basis, outcome, start=start)


def tally(events: EventStream) -> TallySummary:
    """Count a stream into the estimation summary.

    Check (X) basis: every click counts toward n_x; wrong-detector
    singles are full errors, doubles half errors. Generation (Z) basis:
    doubles and nulls are discarded from n_z. Raises EstimationAbort when
    the check sample is empty.
    """
    basis = events.basis
    outcome = events.outcome
    is_x = basis == BASIS_X
    is_z = ~is_x

    x_out = outcome[is_x]
    n_x = int(np.count_nonzero(x_out != OUTCOME_NONE))
    x_wrong = int(np.count_nonzero(x_out == OUTCOME_D1))
    x_dbl = int(np.count_nonzero(x_out == OUTCOME_DOUBLE))

    z_out = outcome[is_z]
    n_z = int(
        np.count_nonzero((z_out == OUTCOME_D0) | (z_out == OUTCOME_D1))
    )
    z_dbl = int(np.count_nonzero(z_out == OUTCOME_DOUBLE))

    if n_x == 0:
        raise EstimationAbort("no detected check-basis events to estimate from")
    return TallySummary(
        N_total=len(events),
        N_X=int(np.count_nonzero(is_x)),
        N_Z=int(np.count_nonzero(is_z)),
        n_x=n_x,
        n_z=n_z,
        x_wrong_singles=x_wrong,
        x_doubles=x_dbl,
        z_doubles_discarded=z_dbl,
        e_bx=(x_wrong + 0.5 * x_dbl) / n_x,
    )


def raw_bits_from_events(events: EventStream) -> np.ndarray:
    """Generation-basis bit string: D0 -> 0, D1 -> 1, in pulse order.

    Doubles and nulls never enter the string.
    """
    is_z = events.basis == BASIS_Z
    out = events.outcome
    keep = is_z & ((out == OUTCOME_D0) | (out == OUTCOME_D1))
    return (out[keep] == OUTCOME_D1).astype(np.uint8)
