import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harqpost.phy.modem import QAM64, bits_to_labels, chase_llr, gray_qam, modulate


def brute_llr(points, label_bits, ys, hs, sigma2):
    """Direct per-bit evaluation of the combined likelihood ratio."""
    out = []
    for b in range(label_bits.shape[1]):
        num = den = 0.0
        for s, bits in zip(points, label_bits):
            w = np.exp(-sum(abs(y - h * s) ** 2 for y, h in zip(ys, hs)) / sigma2)
            if bits[b] == 0:
                num += w
            else:
                den += w
        out.append(np.log(num) - np.log(den))
    return np.array(out)


def test_table_properties():
    pts = QAM64.points
    assert pts.size == 64 and np.unique(np.round(pts, 12)).size == 64
    assert np.mean(np.abs(pts) ** 2) == pytest.approx(1.0, abs=1e-14)


def test_gray_neighbours_differ_in_one_bit():
    pts, lb = QAM64.points, QAM64.label_bits.astype(int)
    dmin = np.min(np.abs(pts[:, None] - pts[None, :])[~np.eye(64, dtype=bool)])
    for i in range(64):
        for j in range(64):
            if i != j and abs(abs(pts[i] - pts[j]) - dmin) < 1e-9:
                assert np.sum(lb[i] != lb[j]) == 1


def test_label_zero_round_trip():
    y = QAM64.points[0]
    llr = chase_llr(QAM64, np.array([y]), np.array([1.0 + 0j]), 1e-3)
    assert np.all(llr > 0)


def test_modulate_block_length():
    bits = np.random.default_rng(1).integers(0, 2, 2400)
    assert modulate(QAM64, bits).shape == (400,)
    with pytest.raises(ValueError):
        bits_to_labels(QAM64, np.zeros(7, dtype=int))


def test_bits_to_labels_msb_first():
    np.testing.assert_array_equal(bits_to_labels(QAM64, [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 1]), [33, 3])


def test_single_round_matches_exact_llr():
    rng = np.random.default_rng(2)
    for _ in range(5):
        y = complex(*rng.standard_normal(2))
        ref = brute_llr(QAM64.points, QAM64.label_bits, [y], [1.0], 0.3)
        np.testing.assert_allclose(chase_llr(QAM64, np.array([y]), np.array([1.0 + 0j]), 0.3), ref, atol=1e-9)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
@settings(max_examples=20, deadline=None)
def test_combined_llr_matches_brute_force(seed, rounds):
    rng = np.random.default_rng(seed)
    hs = rng.standard_normal(rounds) + 1j * rng.standard_normal(rounds)
    s = QAM64.points[rng.integers(64)]
    ys = hs * s + 0.4 * (rng.standard_normal(rounds) + 1j * rng.standard_normal(rounds))
    ref = brute_llr(QAM64.points, QAM64.label_bits, ys, hs, 0.5)
    np.testing.assert_allclose(chase_llr(QAM64, ys, hs, 0.5), ref, rtol=1e-9, atol=1e-9)


def test_repeated_round_halves_noise():
    rng = np.random.default_rng(3)
    y, h = complex(*rng.standard_normal(2)), complex(*rng.standard_normal(2))
    two = chase_llr(QAM64, np.array([y, y]), np.array([h, h]), 0.4)
    one = chase_llr(QAM64, np.array([y]), np.array([h]), 0.2)
    np.testing.assert_allclose(two, one, rtol=1e-12, atol=1e-12)


def test_noiseless_signs_follow_labels():
    lb = QAM64.label_bits
    for label in range(64):
        llr = chase_llr(QAM64, np.array([QAM64.points[label]]), np.array([1.0 + 0j]), 1e-6)
        np.testing.assert_array_equal(llr < 0, lb[label] == 1)


def test_batched_shape_and_validation():
    y = np.ones((2, 5), dtype=complex)
    assert chase_llr(QAM64, y, y, 1.0).shape == (5, 6)
    with pytest.raises(ValueError):
        chase_llr(QAM64, y, y[:1], 1.0)
    with pytest.raises(ValueError):
        chase_llr(QAM64, y, y, 0.0)


def test_other_orders():
    qpsk = gray_qam(2)
    assert qpsk.order == 4
    np.testing.assert_allclose(np.abs(qpsk.points), 1.0)
    with pytest.raises(ValueError):
        gray_qam(3)
