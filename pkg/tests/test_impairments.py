import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ringswitch.constellation import build_2a8psk, build_64prs, build_rs64, symbols_from_labels
from ringswitch.impairments import (
    DacConfig, MzmImbalance, NOMINAL, apply_mzm, conjugation_symmetric, dac_quantize,
    dac_symbols, imbalance_cells, imbalance_heatmap, impaired_gmi, iq_modulate,
    matched_filter, rrc_shape, rrc_taps, worst_case_gmi, write_heatmap_csv,
)
from ringswitch.infometrics import gmi_estimate
from ringswitch.waveform import SampledWaveform, load_snapshot, save_snapshot


def test_nominal_mzm_is_identity():
    c = build_rs64()
    d = apply_mzm(c, NOMINAL)
    assert np.array_equal(d.points, c.points)
    d2 = apply_mzm(c, MzmImbalance(90.0, 90.0, 0.0, 0.0))
    assert np.array_equal(d2.points, c.points)


def test_mzm_formula():
    c = build_64prs()
    imb = MzmImbalance(80.0, 97.0, 1.2, 0.4)
    d = apply_mzm(c, imb)
    ax, ay = 10 ** (-1.2 / 20), 10 ** (-0.4 / 20)
    ex = c.x.real + ax * np.exp(1j * np.deg2rad(80.0)) * c.x.imag
    ey = c.y.real + ay * np.exp(1j * np.deg2rad(97.0)) * c.y.imag
    assert np.allclose(d.x, ex) and np.allclose(d.y, ey)
    assert np.array_equal(d.labels, c.labels)
    # no re-normalization: gain imbalance lowers the mean energy
    assert d.energies.mean() < 2.0


def test_iq_modulate_quadrature():
    z = np.array([1 + 1j])
    assert np.allclose(iq_modulate(z, 90.0, 1.0), z)


def test_zero_grid_equals_unimpaired():
    c = build_2a8psk()
    wc = worst_case_gmi(c, 8.0, 0.0, 0.0, n_samples=10_000, final_samples=10_000)
    assert wc.n_cells == 1
    assert wc.min_gmi == gmi_estimate(c, 8.0, 10_000).gmi
    assert wc.fluctuation == 0.0


def test_worst_case_monotone_in_extent():
    c = build_rs64()
    kw = dict(theta_step=5.0, gain_step=0.5, n_samples=10_000, final_samples=10_000)
    small = worst_case_gmi(c, 8.0, 5.0, 0.5, **kw)
    big = worst_case_gmi(c, 8.0, 10.0, 1.0, **kw)
    assert big.min_gmi <= small.min_gmi <= small.nominal_gmi


def test_refine_matches_exhaustive_on_coarse_grid():
    c = build_64prs()
    kw = dict(theta_step=5.0, gain_step=0.5, n_samples=10_000, final_samples=10_000)
    ex = worst_case_gmi(c, 8.0, 15.0, 1.5, strategy="exhaustive", **kw)
    rf = worst_case_gmi(c, 8.0, 15.0, 1.5, strategy="refine", coarse_factor=3, **kw)
    assert rf.min_gmi == pytest.approx(ex.min_gmi, abs=1e-9)
    assert rf.n_cells < ex.n_cells


def test_conjugation_symmetry_detection():
    assert conjugation_symmetric(build_64prs())
    # halved grid keeps one sign of the X quadrature offset
    full = list(imbalance_cells(2.0, 0.0, 1.0, 0.1, halve=False))
    half = list(imbalance_cells(2.0, 0.0, 1.0, 0.1, halve=True))
    assert len(full) == 25 and len(half) == 15


def test_halved_grid_matches_full_grid_for_symmetric_format():
    c = build_64prs()
    halved = worst_case_gmi(c, 8.0, 10.0, 1.0, 5.0, 0.5, 10_000, final_samples=10_000)
    cells = list(imbalance_cells(10.0, 1.0, 5.0, 0.5, halve=False))
    full = min(impaired_gmi(c, imb, 8.0, 10_000) for imb in cells)
    assert halved.min_gmi == pytest.approx(full, abs=1e-9)


@pytest.mark.parametrize("build", [build_rs64, build_64prs, build_2a8psk])
def test_quadrature_offset_sign_symmetry(build):
    c = build()
    a = impaired_gmi(c, MzmImbalance(78.0, 78.0, 1.0, 1.0), 8.0, 100_000, seed=1)
    b = impaired_gmi(c, MzmImbalance(102.0, 102.0, 1.0, 1.0), 8.0, 100_000, seed=1)
    assert abs(a - b) < 0.02


def test_demapper_option():
    c = build_rs64()
    imb = MzmImbalance(80.0, 100.0, 1.0, 1.0)
    matched = impaired_gmi(c, imb, 8.0, 20_000)
    nominal = impaired_gmi(c, imb, 8.0, 20_000, demapper="nominal")
    assert nominal < matched
    with pytest.raises(ValueError):
        impaired_gmi(c, imb, 8.0, 20_000, demapper="bogus")


def test_heatmap_csv(tmp_path):
    rows = imbalance_heatmap([build_rs64()], 8.0, [0.0, 10.0], [0.0, 1.0], 10_000)
    assert len(rows) == 4
    p = tmp_path / "h.csv"
    write_heatmap_csv(p, rows)
    back = list(csv.DictReader(open(p)))
    assert list(back[0]) == ["theta_dev", "gain_db", "4D-2A-RS64"]


# --------------------------------------------------------------------------
# pulse shaping and DAC


def test_rrc_taps_nyquist():
    sps, span = 2, 64
    h = rrc_taps(sps, 0.1, span)
    assert np.isclose(np.sum(h ** 2), 1.0)
    rc = np.convolve(h, h)
    mid = len(rc) // 2
    samples = rc[mid % sps::sps]
    peak = rc[mid]
    isi = np.delete(samples, np.argmin(np.abs(np.arange(mid % sps, len(rc), sps) - mid)))
    assert np.max(np.abs(isi)) / peak <= 1e-3


def test_rrc_taps_validation():
    with pytest.raises(ValueError):
        rrc_taps(2, 0.1, 63)


def test_shape_matched_filter_loopback_qpsk():
    rng = np.random.default_rng(0)
    n = 4096
    sym = (rng.choice([-1, 1], (n, 2)) + 1j * rng.choice([-1, 1], (n, 2))) / np.sqrt(2)
    w = rrc_shape(sym, 2, 0.1, 64)
    clean = matched_filter(w, n, 2, 0.1, 64)
    assert np.sqrt(np.mean(np.abs(clean - sym) ** 2)) < 5e-3  # truncation ISI only
    # 30 dB per-symbol SNR: unit-energy taps pass sigma^2 per sample to the symbol
    snr = 10 ** (30 / 10)
    sigma = np.sqrt(1 / snr / 2)
    noise = sigma * (rng.standard_normal((2, len(w))) + 1j * rng.standard_normal((2, len(w))))
    rx = matched_filter(w.with_rails(w.x + noise[0], w.y + noise[1]), n, 2, 0.1, 64)
    evm = np.sqrt(np.mean(np.abs(rx - sym) ** 2) / np.mean(np.abs(sym) ** 2))
    assert abs(evm / np.sqrt(1 / snr) - 1) < 0.05


def test_shaped_constant_modulus_papr_above_one():
    c = build_rs64()
    labels = np.random.default_rng(1).integers(0, 64, 4096)
    w = rrc_shape(symbols_from_labels(c, labels), 2, 0.1, 64)
    assert w.papr() > 1.0


def test_quantizer_levels_and_idempotence():
    c = build_rs64()
    labels = np.random.default_rng(2).integers(0, 64, 2048)
    w = rrc_shape(symbols_from_labels(c, labels), 2, 0.1, 64)
    for bits in (3, 4, 8):
        cfg = DacConfig(bits=bits)
        q = dac_quantize(w, cfg)
        for rail in (q.x.real, q.x.imag, q.y.real, q.y.imag):
            assert len(np.unique(np.round(rail, 12))) <= 2 ** bits
        qq = dac_quantize(q, cfg)
        assert np.allclose(qq.rails, q.rails, atol=1e-12)
    assert dac_quantize(w, DacConfig(bits=None)) is w


def test_quantizer_rejects_zero_rail():
    w = SampledWaveform(np.ones(8, dtype=complex), np.zeros(8, dtype=complex), 64.0)
    with pytest.raises(ValueError):
        dac_quantize(w, DacConfig(bits=4))


def test_dac_config_validation():
    with pytest.raises(ValueError):
        DacConfig(bits=0)
    with pytest.raises(ValueError):
        DacConfig(rolloff=1.5)


def test_dac_chain_error_shrinks_with_bits():
    c = build_64prs()
    errs = []
    for b in (3, 5, 8):
        idx, rx = dac_symbols(c, DacConfig(bits=b), 1 << 14)
        tx = np.stack([c.x[idx], c.y[idx]], axis=1)
        errs.append(np.mean(np.abs(rx - tx) ** 2))
    assert errs[0] > errs[1] > errs[2]
    idx, rx = dac_symbols(c, DacConfig(bits=None), 1 << 14)
    assert np.allclose(rx, np.stack([c.x[idx], c.y[idx]], axis=1), atol=5e-3)


@settings(max_examples=20, deadline=None)
@given(bits=st.integers(2, 10), seed=st.integers(0, 2 ** 16))
def test_quantization_error_bounded_by_half_step(bits, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(256) + 1j * rng.standard_normal(256)
    y = rng.standard_normal(256) + 1j * rng.standard_normal(256)
    w = SampledWaveform(x, y, 64.0)
    q = dac_quantize(w, DacConfig(bits=bits))
    for a, b in ((x.real, q.x.real), (x.imag, q.x.imag), (y.real, q.y.real), (y.imag, q.y.imag)):
        step = 2 * np.max(np.abs(a)) / (2 ** bits - 1)
        assert np.max(np.abs(a - b)) <= step / 2 + 1e-12


def test_waveform_snapshot_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    w = SampledWaveform(rng.standard_normal(100) + 1j * rng.standard_normal(100),
                        rng.standard_normal(100) + 1j * rng.standard_normal(100), 192.0, -50.0)
    p = tmp_path / "w.bin"
    save_snapshot(w, p)
    back = load_snapshot(p)
    assert np.array_equal(back.x, w.x) and np.array_equal(back.y, w.y)
    assert back.sample_rate == 192.0 and back.center_freq_offset == -50.0
    raw = p.read_bytes()
    assert raw.startswith(b"ringswitch-waveform v1\n")
    with pytest.raises(ValueError):
        SampledWaveform(np.ones(3), np.ones(4), 1.0)
