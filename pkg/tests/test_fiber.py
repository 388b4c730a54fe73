import csv
from dataclasses import replace

import numpy as np
import pytest

from ringswitch.constellation import build_2a8psk, build_pdm8qamstar, build_rs64
from ringswitch.fiber import (
    BER_THRESHOLD, LinkConfig, StepCountError, WdmConfig, ber_awgn, draw_waveplates,
    dgd_from_jones, profile, receive_center_channel, required_snr_for_ber, ssfm_propagate,
    wdm_transmit, write_csv,
)
from ringswitch.fiber.config import with_power
from ringswitch.fiber.sweep import distance_sweep, optima, power_sweep
from ringswitch.waveform import SampledWaveform

SMALL_WDM = WdmConfig(n_channels=1, baud=32.0, spacing=50.0, n_symbols=1 << 12)
SMALL_LINK = LinkConfig(n_spans=2, n_waveplates_per_span=10, steps_per_waveplate=2)


def test_beta2_from_dispersion():
    # D = 17 ps/nm/km at 1550 nm is about -21.7 ps^2/km
    assert LinkConfig().beta2 * 1e24 * 1e3 == pytest.approx(-21.68, abs=0.01)


def test_wdm_config_validation():
    with pytest.raises(ValueError):
        WdmConfig(n_channels=3, baud=32.0, spacing=30.0)
    with pytest.raises(ValueError):
        WdmConfig(n_channels=3, samples_per_symbol=2)
    with pytest.raises(ValueError):
        WdmConfig(n_channels=2)
    with pytest.raises(ValueError):
        WdmConfig(n_channels=3, baud=30.0, spacing=50.0, n_symbols=1000 + 1)
    with pytest.raises(ValueError):
        LinkConfig(n_waveplates_per_span=0)


def test_full_profile_band():
    link, wdm = profile("full")
    assert wdm.n_channels == 11 and wdm.baud == 90.0 and wdm.spacing == 100.0
    assert 1.0e3 < wdm.occupied_band < 1.2e3
    assert wdm.sample_rate >= 1.2 * wdm.occupied_band


def _psd(w):
    s = np.abs(np.fft.fft(w.x)) ** 2 + np.abs(np.fft.fft(w.y)) ** 2
    f = np.fft.fftfreq(len(w), 1 / w.sample_rate)
    return f, s


def test_single_channel_spectrum_confined():
    wdm = replace(SMALL_WDM, launch_power_dbm_per_channel=0.0)
    w, _ = wdm_transmit(build_rs64(), wdm)
    f, s = _psd(w)
    outside = np.abs(f) > wdm.baud * (1 + wdm.rolloff) / 2 + 1e-9
    assert s[outside].max() < 1e-4 * s.max()


def test_per_channel_power_periodogram():
    wdm = WdmConfig(n_channels=3, baud=32.0, spacing=50.0, n_symbols=1 << 13,
                    launch_power_dbm_per_channel=2.0)
    w, _ = wdm_transmit(build_2a8psk(), wdm)
    f, s = _psd(w)
    n = len(w)
    for off in wdm.offsets:
        band = np.abs(f - off) <= wdm.spacing / 2
        p_mw = s[band].sum() / n ** 2 * 1e3
        assert 10 * np.log10(p_mw) == pytest.approx(2.0, abs=0.05)


def test_lossless_linear_propagation_unitary_and_invertible():
    link = replace(SMALL_LINK, gamma=0.0, alpha_db=0.0, ase=False, pmd_coeff=0.5)
    wdm = SMALL_WDM
    w, tx = wdm_transmit(build_rs64(), wdm)
    p = ssfm_propagate(w, link, seed=3)
    assert abs(p.waveform.energy() / w.energy() - 1) < 1e-9
    rx = receive_center_channel(p.waveform, p.record, wdm, tx, phase_window=None)
    assert rx.evm < 1e-3


def test_genie_null_with_loss_and_pmd():
    link = replace(SMALL_LINK, gamma=0.0, ase=False)
    w, tx = wdm_transmit(build_pdm8qamstar(), SMALL_WDM)
    p = ssfm_propagate(w, link, seed=1)
    rx = receive_center_channel(p.waveform, p.record, SMALL_WDM, tx)
    assert rx.evm < 1e-3 and rx.pre_fec_ber == 0.0


@pytest.mark.parametrize("factor", [8 / 9, 1.0])
def test_cw_spm_phase(factor):
    link = LinkConfig(span_length=10.0, n_spans=2, dispersion_D=0.0, alpha_db=0.0, pmd_coeff=0.0,
                      ase=False, n_waveplates_per_span=5, steps_per_waveplate=3,
                      manakov_factor=factor)
    p_w = 0.05
    n = 256
    w = SampledWaveform(np.full(n, np.sqrt(p_w), dtype=complex), np.zeros(n, dtype=complex), 64.0)
    out = ssfm_propagate(w, link, seed=0).waveform
    expected = factor * link.gamma_si * p_w * link.n_spans * link.span_length * 1e3
    steps = link.n_spans * link.n_waveplates_per_span * link.steps_per_waveplate
    phase = np.unwrap(np.angle(out.x))
    assert np.max(np.abs(phase - expected)) < 1e-6 * steps
    assert np.allclose(np.abs(out.y), 0.0)


def test_step_halving_convergence():
    link = LinkConfig(n_spans=1, n_waveplates_per_span=10, steps_per_waveplate=4, ase=False)
    wdm = replace(SMALL_WDM, launch_power_dbm_per_channel=4.0)
    w, _ = wdm_transmit(build_rs64(), wdm)
    a = ssfm_propagate(w, link, seed=2).waveform
    b = ssfm_propagate(w, replace(link, steps_per_waveplate=8), seed=2).waveform
    c = ssfm_propagate(w, replace(link, steps_per_waveplate=16), seed=2).waveform
    e1 = np.sqrt(np.sum(np.abs(a.rails - b.rails) ** 2) / np.sum(np.abs(b.rails) ** 2))
    e2 = np.sqrt(np.sum(np.abs(b.rails - c.rails) ** 2) / np.sum(np.abs(c.rails) ** 2))
    assert e1 < 1e-4
    assert e2 < e1 / 2  # order >= 1 in the step size


@pytest.mark.parametrize("model", ["fixed", "gaussian"])
def test_pmd_mean_dgd(model):
    link = LinkConfig(n_spans=10, pmd_coeff=0.1, dgd_model=model)
    dgd = [dgd_from_jones(draw_waveplates(link, link.n_spans, s)) for s in range(300)]
    expected = link.pmd_coeff * 1e-12 * np.sqrt(link.n_spans * link.span_length)
    assert np.mean(dgd) == pytest.approx(expected, rel=0.1)


def test_edfa_restores_span_power():
    link = replace(SMALL_LINK, n_spans=4)
    wdm = replace(SMALL_WDM, launch_power_dbm_per_channel=0.0)
    w, _ = wdm_transmit(build_rs64(), wdm)
    p = ssfm_propagate(w, link, seed=0)
    pw = 10 * np.log10(np.array(p.span_powers) / p.span_powers[0])
    assert np.all(np.abs(pw) < 0.1)


def test_step_count_guard():
    link = replace(SMALL_LINK, steps_per_waveplate=1, n_waveplates_per_span=1)
    wdm = replace(SMALL_WDM, launch_power_dbm_per_channel=20.0)
    w, _ = wdm_transmit(build_rs64(), wdm)
    with pytest.raises(StepCountError):
        ssfm_propagate(w, link)


def test_back_to_back_high_snr():
    wdm = SMALL_WDM
    w, tx = wdm_transmit(build_rs64(), wdm)
    rng = np.random.default_rng(0)
    # 30 dB SNR inside the symbol bandwidth (noise spread over the sample rate)
    noise_var = w.power() / 2 / 10 ** 3 * wdm.sps
    n = rng.standard_normal((4, len(w))) * np.sqrt(noise_var / 2)
    noisy = w.with_rails(w.x + n[0] + 1j * n[1], w.y + n[2] + 1j * n[3])
    rx = receive_center_channel(noisy, None, wdm, tx)
    assert rx.pre_fec_ber < 1e-4
    assert rx.gmi > 5.99
    assert rx.snr_elec_db == pytest.approx(30.0, abs=0.5)


def test_required_snr_for_ber():
    c = build_rs64()
    s = required_snr_for_ber(c)
    assert ber_awgn(c, s) == pytest.approx(BER_THRESHOLD, rel=0.02)
    assert required_snr_for_ber(c) == s  # cached


def test_distance_sweep_monotone_and_csv(tmp_path):
    link = replace(SMALL_LINK, n_spans=4)
    pts, summary = distance_sweep([build_rs64()], SMALL_WDM, link, [1, 2, 3, 4], [-12.0], seed=0)
    g = [p.rx.gmi for p in pts]
    assert np.all(np.diff(g) <= 1e-9)
    assert summary["4D-2A-RS64"]["reach_spans"] in (None, 1, 2, 3, 4)
    out = tmp_path / "d.csv"
    write_csv(out, pts)
    rows = list(csv.DictReader(open(out)))
    assert list(rows[0]) == ["format", "baud", "n_channels", "n_spans", "power_dbm",
                             "snr_elec_db", "gmi", "ber", "margin_db", "seed"]


def test_power_sweep_deterministic_and_optimum():
    a = power_sweep([build_rs64()], SMALL_WDM, SMALL_LINK, [-4.0, 4.0], seeds=[1])
    b = power_sweep([build_rs64()], SMALL_WDM, SMALL_LINK, [-4.0, 4.0], seeds=[1])
    assert [p.row() for p in a] == [p.row() for p in b]
    best = optima(a)
    assert len(best) == 1
    for p in a:
        assert 0.0 <= p.rx.pre_fec_ber <= 0.5 and 0.0 <= p.rx.gmi <= 6.0


def test_with_power():
    assert with_power(SMALL_WDM, 3.0).launch_power_w == pytest.approx(10 ** 0.3 * 1e-3)
