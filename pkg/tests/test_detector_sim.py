"""Detection model: projection probabilities against a matrix oracle,
click statistics against closed forms, tally against a reference
counter, and chunk-exact determinism."""
import math

import numpy as np
import pytest
from scipy import stats

from siqrng import detector_sim as ds
from siqrng.errors import EstimationAbort
from siqrng.source_sim import PolarizationState, SourceParams, polarization_from_waveplates

PLUS = polarization_from_waveplates(22.5, 0.0)


# ---------------------------------------------------------------------------
# basis choice


def test_basis_extremes():
    assert all(
        ds.choose_basis(5, i, 0.0) == ds.BASIS_Z for i in (0, 1, 99, 70000)
    )
    assert all(
        ds.choose_basis(5, i, 1.0) == ds.BASIS_X for i in (0, 1, 99, 70000)
    )


def test_basis_fraction_matches_probability():
    n, p = 10_000_000, 0.004
    basis = ds.choose_basis_block(123, 0, n, p)
    frac = np.count_nonzero(basis) / n
    assert abs(frac - p) <= 3.0 * math.sqrt(p * (1 - p) / n)


def test_basis_single_matches_block():
    block = ds.choose_basis_block(77, 0, 200_000, 0.3)
    for idx in (0, 1, 65535, 65536, 199_999):
        assert ds.choose_basis(77, idx, 0.3) == block[idx]


# ---------------------------------------------------------------------------
# measurement transformation


def test_plus_state_projects_deterministically_in_check_basis():
    cfg = ds.MeasurementConfig()
    p0, p1 = ds.effective_projection_probs(PLUS, ds.BASIS_X, cfg)
    assert p0 == pytest.approx(1.0, abs=1e-12)
    assert p1 == pytest.approx(0.0, abs=1e-12)


def test_plus_state_is_uniform_in_generation_basis():
    cfg = ds.MeasurementConfig()
    p0, p1 = ds.effective_projection_probs(PLUS, ds.BASIS_Z, cfg)
    assert p0 == pytest.approx(0.5, abs=1e-12)
    assert p1 == pytest.approx(0.5, abs=1e-12)


def test_effective_settings_are_mutually_unbiased():
    # eigenvector oracle: the measurement bases are the unitary-rotated
    # splitter states; all four cross overlaps must be 1/2
    cfg = ds.MeasurementConfig()
    u_x = ds.measurement_unitary(*cfg.phase_X)
    u_z = ds.measurement_unitary(*cfg.phase_Z)
    basis_x = u_x.conj().T  # columns: states mapped onto each detector
    basis_z = u_z.conj().T
    for i in range(2):
        for j in range(2):
            ov = abs(np.vdot(basis_x[:, i], basis_z[:, j])) ** 2
            assert ov == pytest.approx(0.5, abs=1e-12)


def test_projection_probs_sum_to_one_for_random_states():
    rng = np.random.default_rng(4)
    cfg = ds.MeasurementConfig()
    for _ in range(100):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        v /= np.linalg.norm(v)
        st = PolarizationState(amplitude_H=complex(v[0]), amplitude_V=complex(v[1]))
        for basis in (ds.BASIS_X, ds.BASIS_Z):
            p0, p1 = ds.effective_projection_probs(st, basis, cfg)
            assert p0 + p1 == pytest.approx(1.0, abs=1e-12)


def test_projection_rejects_unnormalized_state():
    st = PolarizationState(amplitude_H=1.0, amplitude_V=0.0)
    object.__setattr__(st, "amplitude_H", 2.0)  # corrupt after validation
    with pytest.raises(ValueError):
        ds.effective_projection_probs(st, ds.BASIS_Z, ds.MeasurementConfig())


# ---------------------------------------------------------------------------
# scalar detection


def test_detect_nothing_without_efficiency_or_darks():
    det = ds.DetectorParams(eta0=0.0, eta1=0.0, dark_rate=0.0)
    rng = np.random.default_rng(0)
    dead = ds.DeadTimeState(det.dead_time, 250e-9)
    for _ in range(2000):
        assert ds.detect(50, 0.5, 0.5, det, rng, dead) == ds.OUTCOME_NONE


def test_detect_dark_click_probability():
    det = ds.DetectorParams(eta0=0.1, eta1=0.1, dark_rate=5e4, gate_width=100e-9)
    d = det.dark_click_prob
    rng = np.random.default_rng(1)
    dead = ds.DeadTimeState(0.0, 250e-9)
    n = 400_000
    clicks = sum(
        ds.detect(0, 0.5, 0.5, det, rng, dead) != ds.OUTCOME_NONE
        for _ in range(n)
    )
    expected = 1.0 - (1.0 - d) ** 2  # = 1 - exp(-2 * rate * gate)
    sigma = math.sqrt(expected * (1 - expected) / n)
    assert abs(clicks / n - expected) <= 3.0 * sigma


def test_detect_single_click_matches_closed_form():
    lam, eta = 6.0, 0.1
    det = ds.DetectorParams(eta0=eta, eta1=eta, dark_rate=0.0, dead_time=0.0)
    rng = np.random.default_rng(2)
    dead = ds.DeadTimeState(0.0, 250e-9)
    n = 300_000
    singles = 0
    photons = rng.poisson(lam, n)
    for k in photons:
        out = ds.detect(int(k), 0.5, 0.5, det, rng, dead)
        singles += out in (ds.OUTCOME_D0, ds.OUTCOME_D1)
    lp = lam * eta
    expected = 2.0 * math.exp(-lp / 2) * (1.0 - math.exp(-lp / 2))
    sigma = math.sqrt(expected * (1 - expected) / n)
    assert abs(singles / n - expected) <= 3.0 * sigma


def test_dead_time_state_paralyzable_semantics():
    # window 2: an attempt suppresses the next two pulses, attempts made
    # while dead still extend nothing but count as attempts
    det = ds.DetectorParams(eta0=1.0, eta1=1.0, dark_rate=0.0, dead_time=600e-9)
    rng = np.random.default_rng(3)
    dead = ds.DeadTimeState(det.dead_time, 250e-9)
    assert dead.window == 2
    outs = [ds.detect(10, 1.0, 0.0, det, rng, dead) for _ in range(6)]
    assert outs == [
        ds.OUTCOME_D0,
        ds.OUTCOME_NONE,
        ds.OUTCOME_NONE,
        ds.OUTCOME_NONE,
        ds.OUTCOME_NONE,
        ds.OUTCOME_NONE,
    ]


# ---------------------------------------------------------------------------
# full simulation


def default_setup(**kw):
    src = kw.pop("src", SourceParams())
    det = kw.pop("det", ds.DetectorParams())
    cfg = kw.pop("cfg", ds.MeasurementConfig())
    return src, det, cfg


def test_empty_run():
    src, det, cfg = default_setup()
    stream = ds.run_simulation(src, det, cfg, 0, seed=1)
    assert len(stream) == 0
    with pytest.raises(EstimationAbort):
        ds.tally(stream)


def test_generation_basis_single_click_rate_matches_model():
    src, det, cfg = default_setup()
    stream = ds.run_simulation(src, det, cfg, 1_000_000, seed=6)
    lam_p = src.mean_photons_lambda * det.eta0
    p_single = 2.0 * math.exp(-lam_p / 2) * (1.0 - math.exp(-lam_p / 2))
    is_z = stream.basis == ds.BASIS_Z
    z_out = stream.outcome[is_z]
    singles = np.count_nonzero((z_out == ds.OUTCOME_D0) | (z_out == ds.OUTCOME_D1))
    nz = int(np.count_nonzero(is_z))
    sigma = math.sqrt(p_single * (1 - p_single) / nz)
    assert abs(singles / nz - p_single) <= 3.0 * sigma


def test_error_rate_floor_from_darks_and_doubles():
    # aligned input: wrong-detector events can only come from dark counts
    src, det, _ = default_setup()
    cfg = ds.MeasurementConfig(prob_X=0.5, basis_seed=9)
    n = 1_000_000
    stream = ds.run_simulation(src, det, cfg, n, seed=7)
    d = det.dark_click_prob
    lam_p = src.mean_photons_lambda * det.eta0
    q0 = 1.0 - (1.0 - d) * math.exp(-lam_p)
    q1 = d
    # per check pulse: weighted error w in {0, 0.5, 1}
    mu_w = q1 * (1 - q0) + 0.5 * q0 * q1
    var_w = q1 * (1 - q0) + 0.25 * q0 * q1 - mu_w ** 2
    is_x = stream.basis == ds.BASIS_X
    nx_pulses = int(np.count_nonzero(is_x))
    x_out = stream.outcome[is_x]
    observed = np.count_nonzero(x_out == ds.OUTCOME_D1) + 0.5 * np.count_nonzero(
        x_out == ds.OUTCOME_DOUBLE
    )
    expect = nx_pulses * mu_w
    assert abs(observed - expect) <= 3.0 * math.sqrt(nx_pulses * var_w) + 1.0


def test_loss_is_basis_independent():
    src, det, cfg = default_setup()
    stream = ds.run_simulation(src, det, cfg, 1_000_000, seed=8)
    detected = stream.outcome != ds.OUTCOME_NONE
    is_x = stream.basis == ds.BASIS_X
    table = np.array(
        [
            [np.count_nonzero(is_x & detected), np.count_nonzero(is_x & ~detected)],
            [np.count_nonzero(~is_x & detected), np.count_nonzero(~is_x & ~detected)],
        ]
    )
    _, p, _, _ = stats.chi2_contingency(table)
    assert p >= 0.01


def test_double_click_rate_grows_with_lambda():
    det = ds.DetectorParams()
    cfg = ds.MeasurementConfig(prob_X=0.0)
    fractions = []
    for lam in (1.0, 4.0, 8.0, 12.0, 16.0):
        stream = ds.run_simulation(
            SourceParams(mean_photons_lambda=lam), det, cfg, 200_000, seed=11
        )
        frac = np.count_nonzero(stream.outcome == ds.OUTCOME_DOUBLE) / len(stream)
        d = det.dark_click_prob
        q = 1.0 - (1.0 - d) * math.exp(-lam * det.eta0 / 2)
        sigma = math.sqrt(q * q * (1 - q * q) / len(stream))
        assert abs(frac - q * q) <= 3.0 * sigma
        fractions.append(frac)
    assert all(a < b for a, b in zip(fractions, fractions[1:]))


def test_serial_equals_chunked_default_params():
    src, det, cfg = default_setup()
    full = ds.run_simulation(src, det, cfg, 500_000, seed=13)
    parts = []
    pos = 0
    for size in (37_777, 123_456, 250_000, 88_767):
        parts.append(ds.simulate_range(src, det, cfg, 13, pos, size))
        pos += size
    assert ds.EventStream.concat(parts) == full


def test_serial_equals_chunked_with_active_dead_time():
    src = SourceParams(mean_photons_lambda=30.0)
    det = ds.DetectorParams(dead_time=600e-9)
    cfg = ds.MeasurementConfig(prob_X=0.1)
    full = ds.run_simulation(src, det, cfg, 300_000, seed=17)
    parts = []
    pos = 0
    for size in (70_001, 99_999, 130_000):
        parts.append(ds.simulate_range(src, det, cfg, 17, pos, size))
        pos += size
    assert ds.EventStream.concat(parts) == full


def test_dead_time_suppresses_clicks():
    src = SourceParams(mean_photons_lambda=30.0)
    cfg = ds.MeasurementConfig(prob_X=0.0)
    free = ds.run_simulation(
        src, ds.DetectorParams(dead_time=0.0), cfg, 200_000, seed=19
    )
    gated = ds.run_simulation(
        src, ds.DetectorParams(dead_time=600e-9), cfg, 200_000, seed=19
    )
    clicks_free = np.count_nonzero(free.outcome != ds.OUTCOME_NONE)
    clicks_gated = np.count_nonzero(gated.outcome != ds.OUTCOME_NONE)
    assert clicks_gated < clicks_free


def test_determinism_across_runs():
    src, det, cfg = default_setup()
    a = ds.run_simulation(src, det, cfg, 200_000, seed=23)
    b = ds.run_simulation(src, det, cfg, 200_000, seed=23)
    assert a == b
    c = ds.run_simulation(src, det, cfg, 200_000, seed=24)
    assert a != c


# ---------------------------------------------------------------------------
# tally


def build_stream(records):
    basis = np.array([b for b, _ in records], dtype=np.uint8)
    outcome = np.array([o for _, o in records], dtype=np.uint8)
    return ds.EventStream(basis, outcome)


def test_tally_hand_count():
    records = (
        [(ds.BASIS_X, ds.OUTCOME_D0)] * 97
        + [(ds.BASIS_X, ds.OUTCOME_D1)]
        + [(ds.BASIS_X, ds.OUTCOME_DOUBLE)] * 2
    )
    t = ds.tally(build_stream(records))
    assert t.n_x == 100
    assert t.e_bx == pytest.approx(0.02)
    assert t.n_z == 0


def test_tally_all_none_aborts():
    records = [(ds.BASIS_X, ds.OUTCOME_NONE)] * 10 + [
        (ds.BASIS_Z, ds.OUTCOME_NONE)
    ] * 10
    with pytest.raises(EstimationAbort):
        ds.tally(build_stream(records))


def reference_tally(stream):
    """Independent single-pass counter over the event iterator."""
    N_X = N_Z = n_x = n_z = wrong = dbl_x = dbl_z = 0
    for ev in stream.events():
        if ev.basis == ds.BASIS_X:
            N_X += 1
            if ev.outcome != ds.OUTCOME_NONE:
                n_x += 1
            if ev.outcome == ds.OUTCOME_D1:
                wrong += 1
            if ev.outcome == ds.OUTCOME_DOUBLE:
                dbl_x += 1
        else:
            N_Z += 1
            if ev.outcome in (ds.OUTCOME_D0, ds.OUTCOME_D1):
                n_z += 1
            if ev.outcome == ds.OUTCOME_DOUBLE:
                dbl_z += 1
    return (N_X, N_Z, n_x, n_z, wrong, dbl_x, dbl_z, (wrong + 0.5 * dbl_x) / n_x)


def test_tally_matches_reference_counter():
    rng = np.random.default_rng(31)
    for _ in range(20):
        n = int(rng.integers(10, 5000))
        stream = ds.EventStream(
            rng.integers(0, 2, n).astype(np.uint8),
            rng.integers(0, 4, n).astype(np.uint8),
        )
        try:
            t = ds.tally(stream)
        except EstimationAbort:
            continue
        ref = reference_tally(stream)
        assert (
            t.N_X, t.N_Z, t.n_x, t.n_z,
            t.x_wrong_singles, t.x_doubles, t.z_doubles_discarded,
        ) == ref[:7]
        assert t.e_bx == pytest.approx(ref[7])


def test_raw_bits_mapping():
    records = [
        (ds.BASIS_Z, ds.OUTCOME_D0),
        (ds.BASIS_Z, ds.OUTCOME_D1),
        (ds.BASIS_X, ds.OUTCOME_D1),
        (ds.BASIS_Z, ds.OUTCOME_DOUBLE),
        (ds.BASIS_Z, ds.OUTCOME_NONE),
        (ds.BASIS_Z, ds.OUTCOME_D1),
    ]
    bits = ds.raw_bits_from_events(build_stream(records))
    assert bits.tolist() == [0, 1, 1]


def test_detector_params_validation():
    with pytest.raises(ValueError):
        ds.DetectorParams(eta0=1.5)
    with pytest.raises(ValueError):
        ds.DetectorParams(dark_rate=-1.0)
    with pytest.raises(ValueError):
        ds.DetectorParams(gate_width=0.0)
    with pytest.raises(ValueError):
        ds.MeasurementConfig(prob_X=1.5)
