import numpy as np
import pytest

from nint.metrics import MetricRecord, mse, psnr, psnr_from_mse, si_snr, ssim, ssim_multichannel


def test_mse_basic():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    b = np.array([[0.0, 0.0], [0.0, 0.0]])
    assert mse(a, b) == 0.5
    assert mse(a, a) == 0.0


def test_mse_shape_mismatch():
    with pytest.raises(ValueError):
        mse(np.zeros((3, 1)), np.zeros((4, 1)))


def test_psnr_known_values():
    # mse 0.01 -> 20 dB, mse 1 -> 0 dB
    assert psnr_from_mse(0.01) == 20.0
    assert psnr_from_mse(1.0) == 0.0
    assert psnr(np.full(100, 0.1), np.zeros(100)) == pytest.approx(20.0, abs=1e-12)
    assert psnr(np.ones(10), np.zeros(10)) == 0.0
    with pytest.raises(ValueError):
        psnr_from_mse(-0.5)


def test_psnr_identical_is_inf():
    x = np.random.default_rng(0).uniform(0, 1, 50)
    assert psnr(x, x) == np.inf


def test_psnr_monotone_in_mse():
    target = np.zeros(64)
    values = [psnr(np.full(64, np.sqrt(m)), target) for m in [1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0]]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_ssim_identical_is_one():
    rng = np.random.default_rng(1)
    img = rng.uniform(0, 1, (16, 16))
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)


def test_ssim_symmetric():
    rng = np.random.default_rng(2)
    for _ in range(5):
        a = rng.uniform(0, 1, (14, 17))
        b = rng.uniform(0, 1, (14, 17))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


def test_ssim_range_and_one_iff_identical():
    rng = np.random.default_rng(3)
    for _ in range(10):
        a = rng.uniform(0, 1, (12, 12))
        b = rng.uniform(0, 1, (12, 12))
        v = ssim(a, b)
        assert -1.0 <= v <= 1.0
        assert v < 1.0 - 1e-12


def test_ssim_window_guard():
    with pytest.raises(ValueError):
        ssim(np.zeros((10, 12)), np.zeros((10, 12)))


def _ssim_oracle(a: np.ndarray, b: np.ndarray) -> float:
    """Windowed SSIM computed the slow way: explicit loops per window."""
    win, sigma, k1, k2 = 11, 1.5, 0.01, 0.03
    c1, c2 = k1 * k1, k2 * k2
    half = win // 2
    weights = np.empty((win, win))
    for dy in range(win):
        for dx in range(win):
            weights[dy, dx] = np.exp(-((dy - half) ** 2 + (dx - half) ** 2) / (2 * sigma**2))
    weights /= weights.sum()
    h, w = a.shape
    vals = []
    for i in range(h - win + 1):
        for j in range(w - win + 1):
            pa = a[i : i + win, j : j + win]
            pb = b[i : i + win, j : j + win]
            mu_a = (weights * pa).sum()
            mu_b = (weights * pb).sum()
            var_a = (weights * pa * pa).sum() - mu_a**2
            var_b = (weights * pb * pb).sum() - mu_b**2
            cov = (weights * pa * pb).sum() - mu_a * mu_b
            vals.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
            )
    return float(np.mean(vals))


def test_ssim_matches_independent_oracle():
    rng = np.random.default_rng(7)
    a = rng.uniform(0, 1, (16, 16))
    b = np.clip(a + rng.normal(0, 0.1, (16, 16)), 0, 1)
    assert ssim(a, b) == pytest.approx(_ssim_oracle(a, b), abs=1e-9)
    assert ssim(a, a) == pytest.approx(_ssim_oracle(a, a), abs=1e-9)


def test_ssim_multichannel_is_channel_mean():
    rng = np.random.default_rng(8)
    a = rng.uniform(0, 1, (12, 12, 3))
    b = rng.uniform(0, 1, (12, 12, 3))
    per_channel = [ssim(a[:, :, c], b[:, :, c]) for c in range(3)]
    assert ssim_multichannel(a, b) == pytest.approx(np.mean(per_channel), abs=1e-12)


def test_si_snr_scale_invariance_sentinel():
    rng = np.random.default_rng(9)
    target = rng.normal(size=256)
    for c in (2.0, -0.5, 1e-3):
        assert si_snr(c * target, target) == np.inf


def test_si_snr_orthogonal_equal_norm_is_zero():
    # after mean removal: pred = target + e with e orthogonal to target
    # and ||e|| = ||target|| gives 10*log10(1) = 0 dB
    n = 128
    t = np.sin(2 * np.pi * np.arange(n) / n)
    e = np.cos(2 * np.pi * np.arange(n) / n)
    e *= np.linalg.norm(t) / np.linalg.norm(e)
    assert si_snr(t + e, t) == pytest.approx(0.0, abs=1e-10)


def test_si_snr_matches_direct_formula():
    rng = np.random.default_rng(10)
    for _ in range(10):
        t = rng.normal(size=200)
        p = rng.normal(size=200)
        tz = t - t.mean()
        pz = p - p.mean()
        s = (pz @ tz / (tz @ tz)) * tz
        e = pz - s
        expected = 10 * np.log10((s @ s) / (e @ e))
        assert si_snr(p, t) == pytest.approx(expected, abs=1e-10)


def test_si_snr_offset_invariance():
    rng = np.random.default_rng(11)
    t = rng.normal(size=100)
    p = rng.normal(size=100)
    assert si_snr(p + 3.7, t - 1.2) == pytest.approx(si_snr(p, t), abs=1e-9)


def test_si_snr_constant_target_rejected():
    with pytest.raises(ValueError):
        si_snr(np.arange(10.0), np.full(10, 0.5))
    with pytest.raises(ValueError):
        si_snr(np.array([1.0]), np.array([1.0]))


def test_metric_record_fields():
    rec = MetricRecord(mse=0.01, psnr=20.0, ssim=0.9)
    assert rec.mse == 0.01 and rec.psnr == 20.0 and rec.ssim == 0.9 and rec.si_snr is None
