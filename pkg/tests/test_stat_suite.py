"""Battery behaviour on analytically extreme inputs and null-distribution
calibration on a known-good generator."""
import numpy as np
import pytest

from siqrng import stat_suite as st
from siqrng.errors import InsufficientBitsError

ALTERNATING = np.tile(np.array([0, 1], dtype=np.uint8), 500_000)


def test_alternating_monobit_exact_one():
    assert st.monobit(ALTERNATING) == 1.0


def test_alternating_fails_runs():
    assert st.runs(ALTERNATING) < 1e-10


def test_all_zeros_fails_monobit():
    assert st.monobit(np.zeros(10**6, dtype=np.uint8)) < 1e-10


def test_battery_on_alternating():
    reports = st.run_battery(ALTERNATING)
    by_name = {r.test_name: r for r in reports}
    assert len(reports) == 8
    assert by_name["monobit"].passed
    assert not by_name["runs"].passed
    assert not by_name["serial"].passed
    assert not by_name["approximate_entropy"].passed
    for r in reports:
        assert r.passed == (r.p_value >= 0.01)
        assert r.n_bits_used == len(ALTERNATING)


def test_each_test_passes_on_null_input():
    # counter-based generator with known-good statistics; per-test pass
    # rate over 100 seeds stays within binomial tolerance of alpha=0.01
    fails = {name: 0 for name, _ in st.BATTERY}
    for seed in range(100):
        bits = np.random.default_rng(seed + 1000).integers(
            0, 2, 1_000_000, dtype=np.uint8
        )
        for r in st.run_battery(bits):
            if not r.passed:
                fails[r.test_name] += 1
    for name, k in fails.items():
        assert k <= 5, f"{name} failed {k}/100 null runs"


def test_p_values_uniform_under_null():
    # fixed-seed Kolmogorov-Smirnov check per test, 1000 trials
    trials, nbits = 1000, 1 << 15
    rng = np.random.default_rng(11)
    pvals = {name: np.empty(trials) for name, _ in st.BATTERY}
    for t in range(trials):
        b = rng.integers(0, 2, nbits, dtype=np.uint8)
        for name, fn in st.BATTERY:
            pvals[name][t] = fn(b)
    critical = 1.627762 / np.sqrt(trials)  # 1% asymptotic KS
    for name, ps in pvals.items():
        ps = np.sort(ps)
        grid = np.arange(1, trials + 1) / trials
        ks = max(
            float(np.max(np.abs(grid - ps))),
            float(np.max(np.abs(ps - (grid - 1.0 / trials)))),
        )
        assert ks < critical, f"{name}: KS {ks:.4f} >= {critical:.4f}"


def test_deterministic_p_values():
    bits = np.random.default_rng(42).integers(0, 2, 1_000_000, dtype=np.uint8)
    a = st.run_battery(bits)
    b = st.run_battery(bits.copy())
    assert [(r.test_name, r.p_value) for r in a] == [
        (r.test_name, r.p_value) for r in b
    ]


def test_individual_minimums():
    short = np.ones(8, dtype=np.uint8)
    for name, fn in st.BATTERY:
        with pytest.raises(InsufficientBitsError):
            fn(short)


def test_battery_minimum():
    with pytest.raises(InsufficientBitsError):
        st.run_battery(np.ones(999_999, dtype=np.uint8))


def test_longest_run_regimes():
    rng = np.random.default_rng(1)
    # each length regime picks its block size and still yields a p-value
    for n in (200, 10_000, 800_000):
        p = st.longest_run(rng.integers(0, 2, n, dtype=np.uint8))
        assert 0.0 <= p <= 1.0


def test_csv_format():
    bits = np.random.default_rng(2).integers(0, 2, 1_000_000, dtype=np.uint8)
    text = st.battery_csv(st.run_battery(bits))
    lines = text.strip().split("\n")
    assert lines[0] == "test,p_value,pass"
    assert len(lines) == 9
    assert lines[1].startswith("monobit,")
