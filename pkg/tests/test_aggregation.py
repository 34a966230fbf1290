import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twinstack.aggregation import (
    AggregateKind,
    EmptyWindowError,
    InsufficientSamplesError,
    NoFundamentalError,
    PhasorPayload,
    ScalarPayload,
    SeriesPayload,
    UndefinedLossError,
    aggregate,
    bin_powers,
    empirical_mse,
    lag1_autocorrelation,
    loss_avg,
    loss_last,
    loss_phasor,
    phasor_dft,
    reconstruct,
)
from twinstack.model import Measurement, MeasurementWindow


def window_of(values, channels=1, t0=1):
    w = MeasurementWindow(capacity=len(values), channels=channels)
    for i, v in enumerate(values):
        vals = v if isinstance(v, tuple) else (v,) * channels
        w.push(Measurement(timestamp=t0 + i, values=vals, source="s"))
    return w


def naive_dft(x):
    """Brute-force DFT oracle, independent of the implementation path."""
    n = len(x)
    return [
        sum(x[t] * cmath.exp(-2j * math.pi * k * t / n) for t in range(n))
        for k in range(n)
    ]


def lsq_sinusoid_fit(samples, ts, freq):
    """Least-squares fit of A*cos(2*pi*freq*t + phi) on the same samples."""
    t = np.arange(len(samples)) * ts
    design = np.column_stack([np.cos(2 * np.pi * freq * t), np.sin(2 * np.pi * freq * t)])
    (a, b), *_ = np.linalg.lstsq(design, np.asarray(samples), rcond=None)
    return math.hypot(a, b), math.atan2(-b, a)


class TestAggregate:
    def test_average(self):
        p = aggregate(window_of([1, 2, 3]), AggregateKind.AVERAGE, 1.0)
        assert p == ScalarPayload((2.0,), "average")

    def test_sum_and_last(self):
        assert aggregate(window_of([1, 2, 3]), AggregateKind.SUM, 1.0).values == (6.0,)
        assert aggregate(window_of([1, 2, 3]), AggregateKind.LAST, 1.0).values == (3.0,)

    def test_all_preserves_order(self):
        p = aggregate(window_of([5, 6]), AggregateKind.ALL, 1.0)
        assert isinstance(p, SeriesPayload)
        assert [v for _, (v,) in p.points] == [5.0, 6.0]

    def test_empty_window(self):
        w = MeasurementWindow(capacity=3)
        with pytest.raises(EmptyWindowError):
            aggregate(w, AggregateKind.SUM, 1.0)

    def test_phasor_needs_four(self):
        with pytest.raises(InsufficientSamplesError):
            aggregate(window_of([1, 2, 3]), AggregateKind.PHASOR, 1.0)

    def test_phasor_of_mains_sinusoid(self):
        # 230 V, 50 Hz sampled at 1 ms over 20 samples: exactly one cycle,
        # checked against a least-squares fit at 50 Hz on the same samples.
        ts = 1e-3
        samples = [230.0 * math.cos(2 * math.pi * 50.0 * i * ts) for i in range(20)]
        p = aggregate(window_of(samples), AggregateKind.PHASOR, ts)
        assert isinstance(p, PhasorPayload)
        ph = p.channels[0]
        a_fit, phi_fit = lsq_sinusoid_fit(samples, ts, 50.0)
        assert ph.amplitude == pytest.approx(a_fit, rel=1e-9)
        assert ph.amplitude == pytest.approx(230.0, rel=1e-9)
        assert abs(ph.phase - phi_fit) < 1e-9
        assert abs(ph.phase) < 1e-9
        assert ph.frequency == pytest.approx(50.0)

    def test_multi_channel_independent(self):
        w = MeasurementWindow(capacity=2, channels=2)
        w.push(Measurement(1, (1.0, 10.0)))
        w.push(Measurement(2, (3.0, 30.0)))
        p = aggregate(w, AggregateKind.AVERAGE, 1.0)
        assert p.values == (2.0, 20.0)

    def test_parse_kind(self):
        assert AggregateKind.parse("phasor") is AggregateKind.PHASOR
        with pytest.raises(ValueError):
            AggregateKind.parse("median")


class TestPhasorDft:
    def test_single_exact_bin(self):
        n = 16
        x = [math.cos(2 * math.pi * t / n) for t in range(n)]
        a, phi, f = phasor_dft(x, 1.0)
        assert a == pytest.approx(1.0, rel=1e-12)
        assert abs(phi) < 1e-12
        assert f == pytest.approx(1 / n)

    def test_on_bin_with_phase(self):
        # closed form: X_k = (A*N/2) * e^{j*phi} for an on-bin cosine
        n = 32
        x = [3.0 * math.cos(2 * math.pi * 2 * t / n + math.pi / 4) for t in range(n)]
        a, phi, f = phasor_dft(x, 1.0)
        assert a == pytest.approx(3.0, rel=1e-12)
        assert phi == pytest.approx(math.pi / 4, abs=1e-12)
        assert f == pytest.approx(2 / n)
        # cross-check bin magnitudes against the brute-force oracle
        oracle = naive_dft(x)
        assert abs(oracle[2]) / (n / 2) == pytest.approx(3.0, rel=1e-9)

    def test_harmonic_filtered_out(self):
        n = 64
        x = [
            math.cos(2 * math.pi * t / n) + 0.2 * math.cos(2 * math.pi * 3 * t / n)
            for t in range(n)
        ]
        oracle = naive_dft(x)
        mags = [abs(c) for c in oracle[1 : n // 2 + 1]]
        assert mags.index(max(mags)) + 1 == 1  # oracle agrees the fundamental is bin 1
        a, phi, f = phasor_dft(x, 1.0)
        assert f == pytest.approx(1 / n)
        assert a == pytest.approx(1.0, rel=1e-9)

    def test_tie_breaks_toward_smaller_bin(self):
        n = 32
        x = [
            math.cos(2 * math.pi * 2 * t / n) + math.cos(2 * math.pi * 5 * t / n)
            for t in range(n)
        ]
        _, _, f = phasor_dft(x, 1.0)
        assert f == pytest.approx(2 / n)

    def test_constant_signal_rejected(self):
        with pytest.raises(NoFundamentalError):
            phasor_dft([2.5] * 16, 1.0)
        with pytest.raises(NoFundamentalError):
            phasor_dft([0.0] * 16, 1.0)

    def test_too_short_and_bad_interval(self):
        with pytest.raises(InsufficientSamplesError):
            phasor_dft([1.0, 2.0, 3.0], 1.0)
        with pytest.raises(ValueError):
            phasor_dft([1.0, 2.0, 3.0, 4.0], 0.0)

    @given(
        k=st.integers(min_value=1, max_value=16),
        amp=st.floats(min_value=0.1, max_value=1000.0),
        phi=st.floats(min_value=-math.pi + 1e-6, max_value=math.pi),
    )
    @settings(max_examples=120, deadline=None)
    def test_on_bin_round_trip(self, k, amp, phi):
        n = 64
        x = [amp * math.cos(2 * math.pi * k * t / n + phi) for t in range(n)]
        a, p, f = phasor_dft(x, 1.0)
        assert abs(a - amp) <= 1e-9 * amp
        assert abs(f - k / n) <= 1e-12
        delta = (p - phi + math.pi) % (2 * math.pi) - math.pi
        assert abs(delta) <= 1e-9

    def test_scale_equivariance(self):
        n = 32
        base = [math.cos(2 * math.pi * 3 * t / n + 0.3) for t in range(n)]
        a1, p1, f1 = phasor_dft(base, 1.0)
        a2, p2, f2 = phasor_dft([7.5 * v for v in base], 1.0)
        assert a2 == pytest.approx(7.5 * a1, rel=1e-12)
        assert p2 == pytest.approx(p1, abs=1e-12)
        assert f2 == f1


class TestReconstruct:
    def test_average_broadcast(self):
        assert reconstruct(ScalarPayload((2.0,), "average"), 3, 1.0) == [2.0, 2.0, 2.0]

    def test_sum_divides(self):
        assert reconstruct(ScalarPayload((6.0,), "sum"), 3, 1.0) == [2.0, 2.0, 2.0]

    def test_series_lossless(self):
        w = window_of([1, 2, 3])
        p = aggregate(w, AggregateKind.ALL, 1.0)
        reco = reconstruct(p, 3, 1.0)
        assert empirical_mse([1, 2, 3], reco).mse == 0.0

    def test_phasor_regenerates_pure_sinusoid(self):
        n = 64
        ts = 1.0
        x = [math.cos(2 * math.pi * t / n) for t in range(n)]
        p = aggregate(window_of(x), AggregateKind.PHASOR, ts)
        reco = reconstruct(p, n, ts)
        assert empirical_mse(x, reco).mse < 1e-12

    def test_n_positive(self):
        with pytest.raises(ValueError):
            reconstruct(ScalarPayload((1.0,), "last"), 0, 1.0)


class TestEmpiricalMse:
    def test_identical(self):
        assert empirical_mse([1, 2, 3], [1, 2, 3]).mse == 0.0

    def test_hand_arithmetic(self):
        est = empirical_mse([0.0, 2.0], [1.0, 1.0])
        assert est.mse == 1.0
        assert est.relative == 1.0  # variance of [0,2] is 1

    def test_zero_variance_relative_absent(self):
        est = empirical_mse([2.0, 2.0], [1.0, 1.0])
        assert est.mse == 1.0
        assert est.relative is None

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            empirical_mse([1, 2], [1])


class TestAnalyticalLoss:
    def test_loss_avg_direct_substitution(self):
        assert loss_avg(10, 1.0) == pytest.approx(0.9)

    def test_loss_avg_single_sample_lossless(self):
        assert loss_avg(1, 5.0) == 0.0

    def test_loss_avg_large_n_limit(self):
        assert loss_avg(10**9, 2.0) == pytest.approx(2.0, rel=1e-6)

    def test_loss_last_extremes(self):
        assert loss_last(1.0, 3.0) == 0.0
        assert loss_last(0.0, 1.0) == 1.0

    def test_loss_last_substitution(self):
        assert loss_last(0.5, 4.0) == pytest.approx(3.0)

    def test_loss_last_rejects_bad_rho(self):
        with pytest.raises(ValueError):
            loss_last(1.5, 1.0)

    def test_loss_avg_statistical(self):
        # i.i.d. Gaussian windows, n=10: reconstruction from the mean loses
        # (1 - 1/n) of the variance.
        rng = np.random.default_rng(7)
        windows = rng.standard_normal((10_000, 10))
        total = 0.0
        for row in windows:
            est = empirical_mse(row, reconstruct(ScalarPayload((row.mean(),), "average"), 10, 1.0))
            total += est.mse
        assert 0.85 <= total / len(windows) <= 0.95

    def test_loss_last_statistical(self):
        # AR(1), rho = 0.8, unit stationary variance; one-step reconstruction
        # with the rho-weighted last value has MSE (1 - rho^2).
        rho, steps = 0.8, 20_000
        rng = np.random.default_rng(11)
        noise = rng.standard_normal(steps) * math.sqrt(1 - rho * rho)
        x = np.empty(steps)
        x[0] = rng.standard_normal()
        for i in range(1, steps):
            x[i] = rho * x[i - 1] + noise[i]
        mse = float(np.mean((x[1:] - rho * x[:-1]) ** 2))
        assert abs(mse - loss_last(rho, 1.0)) <= 0.1 * loss_last(rho, 1.0)

    def test_lag1_autocorrelation_recovers_rho(self):
        rho, steps = 0.8, 50_000
        rng = np.random.default_rng(3)
        x = np.empty(steps)
        x[0] = 0.0
        for i in range(1, steps):
            x[i] = rho * x[i - 1] + rng.standard_normal() * math.sqrt(1 - rho * rho)
        assert abs(lag1_autocorrelation(x) - rho) < 0.02


class TestPhasorLoss:
    def test_pure_sinusoid_near_zero(self):
        n = 64
        x = [math.cos(2 * math.pi * 3 * t / n + 0.2) for t in range(n)]
        assert loss_phasor(x) < 1e-12

    def test_two_equal_tones_half(self):
        n = 64
        x = [
            math.cos(2 * math.pi * t / n) + math.cos(2 * math.pi * 3 * t / n)
            for t in range(n)
        ]
        assert loss_phasor(x) == pytest.approx(0.5, abs=1e-9)

    def test_white_noise_loses_almost_everything(self):
        # For white noise the dominant bin holds a vanishing share of power;
        # band frozen from a seeded Monte-Carlo run of the naive spectrum.
        n = 512
        rng = np.random.default_rng(5)
        losses = [loss_phasor(rng.standard_normal(n)) for _ in range(20)]
        mean_loss = np.mean(losses)
        assert 1 - 10 * (2 / n) <= mean_loss < 1.0

    def test_zero_power_rejected(self):
        with pytest.raises((UndefinedLossError, NoFundamentalError)):
            loss_phasor([1.0] * 8)

    def test_dc_offset_ignored(self):
        n = 64
        x = [5.0 + math.cos(2 * math.pi * 2 * t / n) for t in range(n)]
        assert loss_phasor(x) < 1e-12

    def test_parseval(self):
        rng = np.random.default_rng(9)
        for n in (16, 33, 128, 1000):
            x = rng.standard_normal(n)
            assert float(np.sum(bin_powers(x))) == pytest.approx(
                float(np.mean(x**2)), rel=1e-9
            )


class TestScalarProperties:
    @given(
        values=st.lists(
            st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), min_size=1, max_size=20
        ),
        c=st.floats(min_value=-100, max_value=100, allow_nan=False),
    )
    @settings(max_examples=100)
    def test_scale_equivariance_scalar_kinds(self, values, c):
        w1 = window_of(values)
        w2 = window_of([c * v for v in values])
        for kind in (AggregateKind.SUM, AggregateKind.AVERAGE, AggregateKind.LAST):
            v1 = aggregate(w1, kind, 1.0).values[0]
            v2 = aggregate(w2, kind, 1.0).values[0]
            assert v2 == pytest.approx(c * v1, rel=1e-9, abs=1e-6)

    @given(
        values=st.lists(
            st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), min_size=1, max_size=20
        ),
        c=st.floats(min_value=-100, max_value=100, allow_nan=False),
    )
    @settings(max_examples=100)
    def test_shift_moves_average(self, values, c):
        base = aggregate(window_of(values), AggregateKind.AVERAGE, 1.0).values[0]
        shifted = aggregate(window_of([v + c for v in values]), AggregateKind.AVERAGE, 1.0).values[0]
        assert shifted == pytest.approx(base + c, rel=1e-9, abs=1e-6)
