# Copyright 2026 tdsep authors
# License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
"""Smoke tests for the Python bindings: every exposed operation runs and
returns numerically sane results. Deep numerical coverage lives in the
C++ test suites."""

import json
import math

import numpy as np
import pytest

import tdsep

RATE = 8000.0


def rng(seed):
    return np.random.default_rng(seed)


def test_stft_istft_interior_roundtrip():
    x = rng(1).standard_normal(4000)
    spec = tdsep.stft(x, window_length=256, hop=128)
    assert spec.dtype == np.complex128
    assert spec.shape[1] == 129
    back = tdsep.istft(spec, window_length=256, hop=128)
    interior = slice(256, min(len(back), len(x)) - 256)
    np.testing.assert_allclose(back[interior], x[interior], atol=1e-9)


def test_conv_analysis_matches_stft_magnitudes():
    x = rng(2).standard_normal(2000)
    bank = tdsep.make_stft_kernels(64, 32)
    re, im = tdsep.conv_analysis(x, bank)
    mag_kernel = np.hypot(re, im)
    mag_stft = np.abs(tdsep.stft(x, window_length=64, hop=32))
    frames = min(mag_kernel.shape[0], mag_stft.shape[0])
    np.testing.assert_allclose(
        mag_kernel[:frames], mag_stft[:frames], atol=1e-10
    )


def test_kernel_bank_window_update_changes_kernels():
    bank = tdsep.make_stft_kernels(32, 16, mode="window_constrained")
    assert bank.k_re.shape == (17, 32)
    before = bank.k_re.copy()
    bank.set_window(np.ones(32))
    assert not np.allclose(bank.k_re, before)
    fixed = tdsep.make_stft_kernels(32, 16, mode="fixed")
    with pytest.raises(ValueError):
        fixed.set_window(np.ones(32))


def test_ipd_routes_agree():
    base = rng(3).standard_normal(1600)
    audio = np.stack([base, np.roll(base, 3)])
    spectra = tdsep.ipd_from_spectra(
        audio, RATE, "1-2", window_length=64, hop=32
    )
    kernels = tdsep.ipd_from_kernels(
        audio, RATE, "1-2", tdsep.make_stft_kernels(64, 32)
    )
    frames = min(spectra.shape[0], kernels.shape[0])
    delta = spectra[:frames] - kernels[:frames]
    wrapped = np.angle(np.exp(1j * delta))
    assert np.max(np.abs(wrapped)) < 1e-6


def test_si_snr_scale_invariance_and_pit():
    ref = rng(4).standard_normal(800)
    est = ref + 0.3 * rng(5).standard_normal(800)
    base = tdsep.si_snr(est, ref)
    assert abs(tdsep.si_snr(7.5 * est, ref) - base) < 1e-10
    assert tdsep.si_snr(2.0 * ref, ref) == 60.0

    refs = np.stack([ref, rng(6).standard_normal(800)])
    ests = refs[::-1] + 0.1 * rng(7).standard_normal((2, 800))
    perm, pair_db, mean_db = tdsep.pit_si_snr(ests, refs)
    assert perm == [1, 0]
    assert mean_db == pytest.approx(np.mean(pair_db))
    assert mean_db > 10.0

    mix = ref + refs[1]
    assert tdsep.si_snr_improvement(est, ref, mix) == pytest.approx(
        base - tdsep.si_snr(mix, ref)
    )


def test_oracle_separate_improves_over_mixture():
    a = rng(8).standard_normal(4000)
    b = rng(9).standard_normal(4000)
    mixture = a + b
    result = tdsep.oracle_separate(mixture, [a, b], RATE, kind="irm")
    assert result["estimates"].shape[0] == 2
    assert all(v > 3.0 for v in result["si_snri"])
    ipsm = tdsep.oracle_separate(mixture, [a, b], RATE, kind="ipsm")
    assert np.mean(ipsm["si_snri"]) >= np.mean(result["si_snri"])


def test_rir_direct_path_timing():
    rir = tdsep.image_method_rir(
        room_dimensions=(6.0, 5.0, 3.0),
        t60=0.0,
        source=(2.0, 1.5, 1.4),
        microphone=(4.0, 3.3, 1.6),
        sample_rate=RATE,
        max_order=0,
    )
    distance = math.sqrt(2.0**2 + 1.8**2 + 0.2**2)
    expected = distance / 343.0 * RATE
    assert abs(int(np.argmax(np.abs(rir))) - expected) <= 1.0
    assert np.sum(rir) == pytest.approx(1.0 / (4.0 * math.pi * distance),
                                        rel=0.02)
    wet = tdsep.image_method_rir(
        room_dimensions=(6.0, 5.0, 3.0),
        t60=0.3,
        source=(2.0, 1.5, 1.4),
        microphone=(4.0, 3.3, 1.6),
        sample_rate=RATE,
    )
    assert len(wet) > len(rir)


def test_checkpoint_init_and_separate(tmp_path):
    config = {
        "kind": "tasnet",
        "num_basis": 16,
        "encoder_kernel": 16,
        "encoder_stride": 8,
        "tcn_repeats": 2,
        "blocks_per_repeat": 2,
        "bottleneck_dim": 8,
        "conv_channels": 12,
        "num_speakers": 2,
        "normalization": "global_layer_norm",
        "num_channels": 2,
        "sample_rate": RATE,
    }
    path = str(tmp_path / "model.ckpt")
    count = tdsep.init_checkpoint(path, json.dumps(config), seed=3)
    assert count > 0
    echoed = json.loads(tdsep.checkpoint_config(path))
    assert echoed["num_basis"] == 16

    mixture = rng(10).standard_normal((2, 1600))
    waves = tdsep.separate(path, mixture, RATE)
    assert waves.shape[0] == 2
    assert abs(waves.shape[1] - 1600) <= 8
    assert np.all(np.isfinite(waves))

    with pytest.raises(ValueError):
        tdsep.init_checkpoint(path, json.dumps({**config, "kind": "nope"}))


def test_run_cli_help_and_errors():
    assert tdsep.run_cli(["--help"]) == 0
    assert tdsep.run_cli(["not-a-command"]) == 2
