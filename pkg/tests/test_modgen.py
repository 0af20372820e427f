import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from augmod.errors import DataError, DatasetFormatError
from augmod.modgen import (
    ALL_SCHEMES,
    PULSE_SPAN,
    SNR_GRID_DB,
    GenConfig,
    ImpairmentParams,
    ModulationScheme,
    constellation,
    draw_symbols,
    example_rng,
    generate_dataset,
    manifest_path_for,
    pulse_train,
    read_dataset,
    rrc_pulse,
    sample_impairments,
    symbol_range,
    synthesize,
    synthesize_components,
    write_dataset,
)

from helpers import rrc_reference

ORDERS = {"BPSK": 2, "QPSK": 4, "PSK8": 8, "QAM8": 8, "QAM16": 16, "QAM32": 32, "QAM64": 64}

params_strategy = st.builds(
    ImpairmentParams,
    sampling_ratio=st.floats(0.3, 0.5),
    phase=st.floats(0.0, 2 * math.pi, exclude_max=True),
    delay=st.floats(0.0, 1.0),
    rolloff=st.floats(0.1, 0.5),
    snr_db=st.sampled_from(SNR_GRID_DB),
    freq_offset=st.one_of(
        st.just(0.0),
        st.tuples(st.sampled_from([-1.0, 1.0]), st.floats(-6.0, math.log10(0.5))).map(lambda t: t[0] * 10 ** t[1]),
    ),
)


# ---------------------------------------------------------------- constellations


def test_seven_schemes_with_expected_orders():
    assert len(ALL_SCHEMES) == 7
    for scheme in ALL_SCHEMES:
        assert scheme.order == ORDERS[scheme.name]
        pts = constellation(scheme)
        assert pts.size == ORDERS[scheme.name]
        assert len(set(np.round(pts, 12))) == pts.size


@pytest.mark.parametrize("scheme", ALL_SCHEMES, ids=lambda s: s.name)
def test_unit_mean_energy(scheme):
    pts = constellation(scheme)
    energy = sum(abs(complex(p)) ** 2 for p in pts) / len(pts)
    assert abs(energy - 1.0) <= 1e-12


def test_bpsk_and_qpsk_points():
    assert sorted(constellation(ModulationScheme.BPSK).real) == [-1.0, 1.0]
    assert np.all(constellation(ModulationScheme.BPSK).imag == 0)
    expected = {complex(a, b) / math.sqrt(2) for a in (-1, 1) for b in (-1, 1)}
    got = constellation(ModulationScheme.QPSK)
    assert all(min(abs(g - e) for e in expected) < 1e-15 for g in got)


def test_qam16_is_scaled_square_grid():
    grid = [complex(a, b) for a in (-3, -1, 1, 3) for b in (-3, -1, 1, 3)]
    mean_energy = sum(abs(p) ** 2 for p in grid) / 16
    assert mean_energy == 10
    expected = sorted((p / math.sqrt(mean_energy) for p in grid), key=lambda z: (z.real, z.imag))
    got = sorted(constellation(ModulationScheme.QAM16), key=lambda z: (z.real, z.imag))
    np.testing.assert_allclose(got, expected, atol=1e-15)


def test_qam32_cross_and_qam8_rectangle():
    q32 = constellation(ModulationScheme.QAM32)
    scale = math.sqrt(np.mean(np.abs([complex(a, b) for a in (-5, -3, -1, 1, 3, 5) for b in (-5, -3, -1, 1, 3, 5)
                                     if not (abs(a) == 5 and abs(b) == 5)]) ** 2))
    raw = np.round(q32 * scale, 9)
    assert not any(abs(p.real) == 5 and abs(p.imag) == 5 for p in raw)
    q8 = constellation(ModulationScheme.QAM8) * math.sqrt(6)
    assert sorted(set(np.round(q8.real, 9))) == [-3, -1, 1, 3]
    assert sorted(set(np.round(q8.imag, 9))) == [-1, 1]


def test_psk_gray_neighbours_differ_by_one_bit():
    for scheme in (ModulationScheme.QPSK, ModulationScheme.PSK8):
        pts = constellation(scheme)
        order = np.argsort(np.angle(pts))
        for a, b in zip(order, np.roll(order, -1)):
            assert bin(int(a) ^ int(b)).count("1") == 1


# ---------------------------------------------------------------- pulse


@pytest.mark.parametrize("beta", [0.1, 0.25, 0.35, 0.5])
def test_rrc_value_at_zero(beta):
    expected = 1 + beta * (4 / math.pi - 1)
    assert rrc_pulse(0.0, beta) == pytest.approx(expected, abs=1e-15)
    numeric = 0.5 * (rrc_pulse(1e-6, beta) + rrc_pulse(-1e-6, beta))
    assert numeric == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("beta", [0.1, 0.2, 0.3, 0.45])
def test_rrc_limit_at_quarter_over_beta(beta):
    edge = 1 / (4 * beta)
    value = rrc_pulse(edge, beta)
    analytic = beta / math.sqrt(2) * (
        (1 + 2 / math.pi) * math.sin(math.pi / (4 * beta)) + (1 - 2 / math.pi) * math.cos(math.pi / (4 * beta))
    )
    assert math.isfinite(value)
    assert value == pytest.approx(analytic, abs=1e-14)
    for side in (-1, 1):
        assert rrc_pulse(edge + side * 1e-6, beta) == pytest.approx(analytic, abs=1e-5)
        assert rrc_pulse(-edge + side * 1e-6, beta) == pytest.approx(analytic, abs=1e-5)


@given(t=st.floats(-12, 12), beta=st.floats(0.05, 0.95))
def test_rrc_even(t, beta):
    assert rrc_pulse(t, beta) == rrc_pulse(-t, beta)


@given(t=st.floats(-9, 9), beta=st.floats(0.1, 0.5))
def test_rrc_matches_reference_formula(t, beta):
    assert rrc_pulse(t, beta) == pytest.approx(rrc_reference(t, beta), rel=1e-9, abs=1e-9)


def test_rrc_unit_energy_and_truncation():
    t = np.linspace(-60, 60, 1_200_001)
    dt = t[1] - t[0]
    for beta in (0.1, 0.5):
        g2 = rrc_pulse(t, beta) ** 2
        assert np.sum(g2) * dt == pytest.approx(1.0, abs=2e-3)
        outside = np.sum(g2[np.abs(t) > PULSE_SPAN]) * dt
        assert outside < 1e-3


def test_rrc_rejects_bad_rolloff():
    with pytest.raises(ValueError):
        rrc_pulse(0.3, 0.0)
    with pytest.raises(ValueError):
        rrc_pulse(0.3, 1.0)


def test_pulse_train_matches_direct_sum_at_symbol_instants(rng):
    beta = 0.35
    symbols = draw_symbols(ModulationScheme.QAM16, 80, rng)
    first = -PULSE_SPAN
    s = pulse_train(symbols, first, 120, 0.5, 0.0, beta)
    for n in range(0, 120, 2):
        m = n // 2  # n * r is the integer m
        direct = sum(symbols[j] * rrc_reference(m - (first + j), beta)
                     for j in range(symbols.size) if abs(m - (first + j)) <= PULSE_SPAN)
        assert abs(s[n] - direct) < 1e-9


def test_pulse_train_fractional_direct_sum(rng):
    ratio, delay, beta = 0.37, 0.61, 0.22
    first, last = symbol_range(50, ratio, delay)
    symbols = draw_symbols(ModulationScheme.PSK8, last - first + 1, rng)
    s = pulse_train(symbols, first, 50, ratio, delay, beta)
    for n in range(50):
        t = n * ratio - delay
        direct = sum(symbols[j] * rrc_reference(t - (first + j), beta)
                     for j in range(symbols.size) if abs(t - (first + j)) <= PULSE_SPAN)
        assert abs(s[n] - direct) < 1e-9


def test_symbol_range_covers_support():
    for ratio, delay in itertools.product((0.3, 0.41, 0.5), (0.0, 0.5, 1.0)):
        first, last = symbol_range(100, ratio, delay)
        assert first <= -delay - PULSE_SPAN
        assert last >= 99 * ratio - delay + PULSE_SPAN


# ---------------------------------------------------------------- impairments


def test_impairment_ranges_and_log_uniform_offset():
    rng = example_rng(99, 0)
    n = 1_000_000
    # vectorized replica of the sampling order would not be an independent check; call the sampler
    draws = [sample_impairments(rng, True, 20) for _ in range(n)]
    ratio = np.array([d.sampling_ratio for d in draws])
    phase = np.array([d.phase for d in draws])
    delay = np.array([d.delay for d in draws])
    roll = np.array([d.rolloff for d in draws])
    fo = np.array([d.freq_offset for d in draws])
    assert 0.3 <= ratio.min() and ratio.max() <= 0.5
    assert 0.0 <= phase.min() and phase.max() < 2 * math.pi
    assert 0.0 <= delay.min() and delay.max() <= 1.0
    assert 0.1 <= roll.min() and roll.max() <= 0.5
    mag = np.abs(fo)
    assert 1e-6 <= mag.min() and mag.max() <= 0.5
    counts, _ = np.histogram(np.log10(mag), bins=40, range=(-6, math.log10(0.5)))
    assert stats.chisquare(counts).pvalue > 0.001
    assert abs(np.mean(fo > 0) - 0.5) < 0.005


def test_offset_disabled_is_exactly_zero():
    rng = example_rng(7, 1)
    assert all(sample_impairments(rng, False, 0).freq_offset == 0.0 for _ in range(10_000))


def test_sample_impairments_rejects_off_grid_snr():
    with pytest.raises(ValueError):
        sample_impairments(example_rng(1), False, 5)


def test_symbols_uniform_over_points():
    rng = example_rng(3, 3)
    for scheme in ALL_SCHEMES:
        pts = constellation(scheme)
        sym = draw_symbols(scheme, 100_000, rng)
        idx = np.argmin(np.abs(sym[:, None] - pts[None, :]), axis=1)
        counts = np.bincount(idx, minlength=pts.size)
        assert stats.chisquare(counts).pvalue > 0.001


# ---------------------------------------------------------------- synthesis


@settings(max_examples=60, deadline=None)
@given(params=params_strategy, scheme=st.sampled_from(ALL_SCHEMES), n=st.integers(1, 300), seed=st.integers(0, 2**32))
def test_synthesize_unit_rms(params, scheme, n, seed):
    frame = synthesize(scheme, params, n, example_rng(seed))
    assert frame.n_samples == n
    assert abs(frame.rms() - 1.0) <= 1e-5
    assert abs(np.sqrt(np.mean(np.sum(frame.as_array().astype(float) ** 2, axis=1))) - 1.0) <= 1e-5


def test_phase_periodicity():
    base = dict(sampling_ratio=0.4, delay=0.3, rolloff=0.25, snr_db=20, freq_offset=0.0)
    a = synthesize(ModulationScheme.QAM16, ImpairmentParams(phase=0.0, **base), 256, example_rng(5))
    b = synthesize(ModulationScheme.QAM16, ImpairmentParams(phase=2 * math.pi, **base), 256, example_rng(5))
    np.testing.assert_allclose(a.complex, b.complex, rtol=0, atol=1e-12)


def test_synthesize_deterministic():
    p = ImpairmentParams(0.33, 1.0, 0.2, 0.4, 10, -3e-3)
    a = synthesize(ModulationScheme.PSK8, p, 512, example_rng(8, 1, 2, 3))
    b = synthesize(ModulationScheme.PSK8, p, 512, example_rng(8, 1, 2, 3))
    assert a.i.tobytes() == b.i.tobytes() and a.q.tobytes() == b.q.tobytes()


def test_synthesize_rejects_bad_input():
    p = ImpairmentParams(0.4, 0.0, 0.0, 0.3, 10)
    with pytest.raises(ValueError):
        synthesize(ModulationScheme.BPSK, p, 0, example_rng(1))
    for bad in (
        ImpairmentParams(0.6, 0.0, 0.0, 0.3, 10),
        ImpairmentParams(0.4, -0.1, 0.0, 0.3, 10),
        ImpairmentParams(0.4, 0.0, 1.5, 0.3, 10),
        ImpairmentParams(0.4, 0.0, 0.0, 0.05, 10),
        ImpairmentParams(0.4, 0.0, 0.0, 0.3, 15),
        ImpairmentParams(0.4, 0.0, 0.0, 0.3, 10, 1e-8),
        ImpairmentParams(0.4, 0.0, 0.0, 0.3, 10, 0.7),
    ):
        with pytest.raises(ValueError):
            synthesize(ModulationScheme.BPSK, bad, 16, example_rng(1))


def test_noise_ratio_at_40db():
    ratios = []
    for i in range(120):
        rng = example_rng(40, i)
        p = sample_impairments(rng, False, 40)
        signal, noise = synthesize_components(ALL_SCHEMES[i % 7], p, 1024, rng)
        ratios.append(np.mean(np.abs(noise) ** 2) / np.mean(np.abs(signal) ** 2))
    assert abs(np.mean(ratios) / 1e-4 - 1.0) < 0.2


def test_frequency_offset_rotates_noise_free_signal():
    # with identical symbols, an offset only multiplies sample n by exp(i 2 pi f n)
    base = dict(sampling_ratio=0.45, phase=0.4, delay=0.1, rolloff=0.3, snr_db=40)
    a, _ = synthesize_components(ModulationScheme.QPSK, ImpairmentParams(**base), 300, example_rng(2))
    b, _ = synthesize_components(ModulationScheme.QPSK, ImpairmentParams(freq_offset=0.01, **base), 300, example_rng(2))
    n = np.arange(300)
    np.testing.assert_allclose(b, a * np.exp(2j * np.pi * 0.01 * n), atol=1e-12)


# ---------------------------------------------------------------- dataset files


def test_one_per_pair_gives_35_examples(tmp_path):
    out = generate_dataset(GenConfig(examples_per_pair=1, n_samples=32, master_seed=1), tmp_path / "d.agmd")
    assert out.n_examples == 35
    data = read_dataset(out.path)
    assert len(data) == 35
    pairs = set(zip(data.labels.tolist(), data.snr_db.astype(int).tolist()))
    assert pairs == {(c, s) for c in range(7) for s in SNR_GRID_DB}


def test_default_config_scale():
    assert GenConfig().n_examples == 175_000
    assert GenConfig().n_samples == 1024


def test_canonical_order_and_rms(tiny):
    keys = list(zip(tiny.labels.tolist(), tiny.snr_db.astype(int).tolist()))
    assert keys == sorted(keys)
    rms = np.sqrt(np.mean(np.sum(tiny.iq.astype(np.float64) ** 2, axis=2), axis=1))
    assert np.max(np.abs(rms - 1.0)) <= 1e-5
    assert tiny.class_names == tuple(s.name for s in ALL_SCHEMES)


def test_generation_byte_identical(tmp_path):
    cfg = GenConfig(examples_per_pair=2, n_samples=48, master_seed=77, freq_offset_enabled=True)
    a = generate_dataset(cfg, tmp_path / "a.agmd")
    b = generate_dataset(cfg, tmp_path / "b.agmd", workers=2)
    assert (tmp_path / "a.agmd").read_bytes() == (tmp_path / "b.agmd").read_bytes()
    assert a.sha256 == b.sha256


def test_examples_independent_of_pair_count(tmp_path):
    a = read_dataset(generate_dataset(GenConfig(2, 40, 5), tmp_path / "a.agmd").path)
    b = read_dataset(generate_dataset(GenConfig(3, 40, 5), tmp_path / "b.agmd").path)
    sel_b = np.array([i for i in range(len(b)) if i % 3 < 2])
    np.testing.assert_array_equal(a.iq, b.iq[sel_b])


def test_manifest_contents(tmp_path):
    path = tmp_path / "m.agmd"
    out = generate_dataset(GenConfig(1, 16, 123), path, deterministic=True)
    manifest = json.loads(manifest_path_for(path).read_text())
    assert manifest["master_seed"] == 123
    assert manifest["format_version"] == 1
    assert manifest["config"]["examples_per_pair"] == 1
    assert manifest["data_sha256"] == out.sha256
    assert manifest["created"].startswith("1970-01-01")


def test_binary_layout(tmp_path):
    path = tmp_path / "x.agmd"
    generate_dataset(GenConfig(1, 8, 2, schemes=("BPSK", "QAM64"), snr_grid=(10,)), path)
    raw = path.read_bytes()
    assert raw[:4] == b"AGMD"
    assert np.frombuffer(raw[4:20], "<u4").tolist() == [1, 2, 8, 2]
    assert raw[20:24] == (4).to_bytes(4, "little") and raw[24:28] == b"BPSK"
    assert raw[28:32] == (5).to_bytes(4, "little") and raw[32:37] == b"QAM64"
    rec_size = 1 + 6 * 4 + 8 * 2 * 4
    assert len(raw) == 37 + 2 * rec_size
    assert raw[37] == 0 and raw[37 + rec_size] == 1
    assert np.frombuffer(raw[38:42], "<f4")[0] == 10.0


def test_write_read_round_trip(tiny, tmp_path):
    write_dataset(tiny, tmp_path / "copy.agmd")
    back = read_dataset(tmp_path / "copy.agmd")
    np.testing.assert_array_equal(back.iq, tiny.iq)
    np.testing.assert_array_equal(back.labels, tiny.labels)
    for k in tiny.params:
        np.testing.assert_array_equal(back.params[k], tiny.params[k])


def test_read_errors(tiny_path, tmp_path):
    raw = tiny_path.read_bytes()
    bad = tmp_path / "bad.agmd"
    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(DatasetFormatError, match="magic"):
        read_dataset(bad)
    bad.write_bytes(raw[:-10])
    with pytest.raises(DatasetFormatError, match="payload"):
        read_dataset(bad)
    bad.write_bytes(raw[:4] + (2).to_bytes(4, "little") + raw[8:])
    with pytest.raises(DatasetFormatError, match="version"):
        read_dataset(bad)
    with pytest.raises(DataError, match="missing.agmd"):
        read_dataset(tmp_path / "missing.agmd")


def test_invalid_config_rejected_before_write(tmp_path):
    path = tmp_path / "never.agmd"
    for cfg in (GenConfig(examples_per_pair=0), GenConfig(n_samples=0), GenConfig(schemes=("FM",)),
                GenConfig(snr_grid=(5,)), GenConfig(master_seed=-1)):
        with pytest.raises(ValueError):
            generate_dataset(cfg, path)
    assert not path.exists()


def test_unwritable_path_reports_path(tmp_path):
    with pytest.raises(DataError, match="nodir"):
        generate_dataset(GenConfig(1, 8), tmp_path / "nodir" / "d.agmd")


def test_split_halves_is_stratified(tiny):
    train, test = tiny.split_halves()
    assert len(train) == len(test) == len(tiny) // 2
    for data in (train, test):
        counts = np.zeros((7, 5), int)
        for c, s in zip(data.labels, data.snr_db):
            counts[c, SNR_GRID_DB.index(int(s))] += 1
        assert np.all(counts == 2)


def test_truncated_view(tiny):
    view = tiny.truncated(16)
    assert view.n_samples == 16
    np.testing.assert_array_equal(view.iq, tiny.iq[:, :16])
    with pytest.raises(ValueError):
        tiny.truncated(65)
