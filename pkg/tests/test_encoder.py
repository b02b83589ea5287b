import numpy as np
import pytest

from helpers import scalar_gru
from mmattn import tensor as T
from mmattn.encoder import GruParams, encode_image, encode_text, gru_step
from mmattn.tensor import ContractError, DimensionError, Tensor


def random_gru(rng, n_in, n_hid, scale=0.8):
    def t(*shape):
        return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True)

    return GruParams(t(n_in, n_hid), t(n_in, n_hid), t(n_in, n_hid),
                     t(n_hid, n_hid), t(n_hid, n_hid), t(n_hid, n_hid),
                     t(n_hid), t(n_hid), t(n_hid))


def test_gru_zero_fixed_point(rng):
    p = GruParams.zeros(5, 3)
    out = gru_step(p, Tensor(rng.normal(size=5)), Tensor(np.zeros(3)))
    np.testing.assert_array_equal(out.data, np.zeros(3))


def test_gru_closed_update_gate_keeps_state(rng):
    p = random_gru(rng, 4, 3)
    p.b_z.data[:] = -1e3
    h = rng.uniform(-1, 1, size=3)
    out = gru_step(p, Tensor(rng.normal(size=4)), Tensor(h))
    np.testing.assert_allclose(out.data, h, rtol=0, atol=1e-12)


def test_gru_matches_scalar_oracle(rng):
    p = random_gru(rng, 4, 3)
    x, h = rng.uniform(-1, 1, size=4), rng.uniform(-1, 1, size=3)
    out = gru_step(p, Tensor(x), Tensor(h)).data
    assert T.relative_error(out, scalar_gru(p, x, h)).max() < 1e-12


def test_gru_batched_rows_are_independent(rng):
    p = random_gru(rng, 2, 3)
    X, H = rng.normal(size=(4, 2)), rng.normal(size=(4, 3))
    out = gru_step(p, Tensor(X), Tensor(H)).data
    for b in range(4):
        np.testing.assert_allclose(out[b], gru_step(p, Tensor(X[b]), Tensor(H[b])).data, rtol=1e-15, atol=0)


def test_gru_shape_mismatch(rng):
    with pytest.raises(DimensionError):
        gru_step(random_gru(rng, 4, 3), Tensor(np.zeros(5)), Tensor(np.zeros(3)))


def check_rows(A, emb, fwd, bwd, ids):
    """Unrolled scalar oracle for both directions."""
    X = [emb.data[i] for i in ids]
    D = fwd.hidden_size
    h, f = [0.0] * D, []
    for x in X:
        h = scalar_gru(fwd, x, h)
        f.append(h)
    h, b = [0.0] * D, [None] * len(X)
    for i in reversed(range(len(X))):
        h = scalar_gru(bwd, X[i], h)
        b[i] = h
    expect = np.array([fi + bi for fi, bi in zip(f, b)])
    assert T.relative_error(A, expect).max() < 1e-12


def test_encode_text_single_token(rng):
    emb = Tensor(rng.normal(size=(6, 4)))
    fwd, bwd = random_gru(rng, 4, 3), random_gru(rng, 4, 3)
    A = encode_text([5], emb, fwd, bwd).data
    assert A.shape == (1, 6)
    zero = Tensor(np.zeros(3))
    expect = np.concatenate([gru_step(fwd, Tensor(emb.data[5]), zero).data, gru_step(bwd, Tensor(emb.data[5]), zero).data])
    np.testing.assert_array_equal(A[0], expect)


def test_encode_text_unrolled_oracle(rng):
    emb = Tensor(rng.normal(size=(6, 3)))
    fwd, bwd = random_gru(rng, 3, 2), random_gru(rng, 3, 2)
    ids = [4, 2, 5]
    check_rows(encode_text(ids, emb, fwd, bwd).data, emb, fwd, bwd, ids)


def test_encode_text_palindrome_symmetry(rng):
    emb = Tensor(rng.normal(size=(8, 3)))
    g = random_gru(rng, 3, 2)
    ids = [4, 6, 7, 6, 4]
    A = encode_text(ids, emb, g, g).data
    D = 2
    for i in range(len(ids)):
        mirror = A[len(ids) - 1 - i]
        np.testing.assert_allclose(A[i], np.concatenate([mirror[D:], mirror[:D]]), rtol=1e-14, atol=1e-15)


def test_encode_text_prefix_suffix_dependence(rng):
    emb = Tensor(rng.normal(size=(9, 3)))
    fwd, bwd = random_gru(rng, 3, 2), random_gru(rng, 3, 2)
    ids = [4, 5, 6, 7]
    base = encode_text(ids, emb, fwd, bwd).data
    for j in range(len(ids)):
        alt = list(ids)
        alt[j] = 8
        A = encode_text(alt, emb, fwd, bwd).data
        for i in range(len(ids)):
            if j > i:
                np.testing.assert_array_equal(A[i, :2], base[i, :2])
            if j < i:
                np.testing.assert_array_equal(A[i, 2:], base[i, 2:])


def test_encode_text_padding_matches_unpadded(rng):
    emb = Tensor(rng.normal(size=(9, 3)))
    fwd, bwd = random_gru(rng, 3, 2), random_gru(rng, 3, 2)
    ids = np.array([[4, 5, 6, 7], [8, 6, 0, 0]])
    A = encode_text(ids, emb, fwd, bwd, ids != 0).data
    short = encode_text([8, 6], emb, fwd, bwd).data
    np.testing.assert_allclose(A[1, :2], short, rtol=1e-14, atol=1e-15)


def test_encode_text_empty_is_contract_error(rng):
    g = random_gru(rng, 3, 2)
    with pytest.raises(ContractError):
        encode_text([], Tensor(np.zeros((5, 3))), g, g)


def test_encode_text_finite_for_large_inputs(rng):
    emb = Tensor(rng.uniform(-10, 10, size=(6, 3)))
    g = random_gru(rng, 3, 4, scale=10.0)
    assert np.isfinite(encode_text([4, 5, 1, 3], emb, g, g).data).all()


def test_encode_image_examples(rng):
    F = rng.normal(size=(4, 6))
    np.testing.assert_array_equal(encode_image(Tensor(F), Tensor(np.eye(6))).data, F)
    np.testing.assert_array_equal(encode_image(Tensor(np.zeros((4, 6))), Tensor(rng.normal(size=(6, 2)))).data, 0.0)


def test_encode_image_direct_product_oracle(rng):
    F, W = rng.normal(size=(4, 3)), rng.normal(size=(3, 2))
    expect = np.array([[sum(F[r, c] * W[c, k] for c in range(3)) for k in range(2)] for r in range(4)])
    assert T.relative_error(encode_image(Tensor(F), Tensor(W)).data, expect).max() < 1e-12
    batched = encode_image(Tensor(np.stack([F, 2 * F])), Tensor(W)).data
    np.testing.assert_allclose(batched[1], 2 * expect, rtol=1e-12)


def test_encode_image_is_linear(rng):
    W = Tensor(rng.normal(size=(3, 2)))
    F1, F2 = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    a, b = 0.7, -1.3
    lhs = encode_image(Tensor(a * F1 + b * F2), W).data
    rhs = a * encode_image(Tensor(F1), W).data + b * encode_image(Tensor(F2), W).data
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-10)


def test_encode_image_channel_mismatch(rng):
    with pytest.raises(DimensionError):
        encode_image(Tensor(np.zeros((4, 3))), Tensor(np.zeros((5, 2))))
