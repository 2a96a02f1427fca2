import numpy as np
import pytest

from kernelfusion.errors import ConfigError, DataError, DimensionError, ParameterError, VersionError
from kernelfusion.kernels import (GaussianParams, GramMatrix, correlation_block, correlation_kernel,
                                  correlation_matrix, cross_kernel, enumerate_compositions,
                                  export_gram_csv, gaussian_kernel, gamma_grid, intersection_kernel,
                                  kfold_indices, min_eigenvalue_ok, psd_correct, read_gram,
                                  select_gamma, write_gram)


def test_gaussian_closed_form():
    K = gaussian_kernel(np.array([[0.0], [1.0]]), GaussianParams(1.0)).K
    np.testing.assert_allclose(K, [[1, np.exp(-1)], [np.exp(-1), 1]])


def test_gaussian_diag_and_range(rng):
    K = gaussian_kernel(rng.normal(size=(30, 4)), 0.3).K
    assert np.all(np.diag(K) == 1.0)
    assert np.all((K > 0) & (K <= 1)) and np.array_equal(K, K.T)
    far = gaussian_kernel(np.array([[0.0], [1e3]]), 1.0).K
    assert far[0, 1] == 0.0


def test_gaussian_rejects_bad_gamma():
    with pytest.raises(ParameterError):
        GaussianParams(0.0)
    with pytest.raises(ParameterError):
        gaussian_kernel(np.zeros((2, 1)), -1.0)


def _cv_oracle(X, y, gamma, folds, seed):
    """Loop-based kernel nearest-class-mean CV accuracy."""
    def k(a, b):
        return np.exp(-gamma * np.sum((a - b) ** 2))

    accs = []
    for val in kfold_indices(len(X), folds, seed):
        tr = [i for i in range(len(X)) if i not in val]
        correct = 0
        for v in val:
            best, label = np.inf, None
            for c in sorted(set(y[tr])):
                mem = [i for i in tr if y[i] == c]
                d = 1 - 2 * np.mean([k(X[v], X[i]) for i in mem]) + np.mean(
                    [k(X[i], X[j]) for i in mem for j in mem])
                if d < best:
                    best, label = d, c
            correct += label == y[v]
        accs.append(correct / len(val))
    return np.mean(accs)


def test_select_gamma_single_value(rng):
    assert select_gamma(rng.normal(size=(10, 2)), np.arange(10) % 2, [0.7]).gamma == 0.7


def test_select_gamma_is_cv_argmax(rng):
    X = np.vstack([rng.normal(0, 1, size=(15, 2)), rng.normal(2.0, 1, size=(15, 2))])
    y = np.repeat([0, 1], 15)
    grid = gamma_grid(X)
    chosen = select_gamma(X, y, grid, folds=3, seed=4).gamma
    scores = {g: _cv_oracle(X, y, g, 3, 4) for g in grid}
    best = max(scores.values())
    assert scores[chosen] == pytest.approx(best)
    assert chosen == min(g for g, s in scores.items() if s == pytest.approx(best))
    assert select_gamma(X, y, grid, folds=3, seed=4).gamma == chosen


def test_intersection_examples():
    K = intersection_kernel(np.array([[0.25, 0.75], [0.5, 0.5], [1.0, 0.0], [0.0, 1.0]])).K
    assert K[0, 1] == pytest.approx(0.75)
    assert K[2, 3] == 0.0
    np.testing.assert_allclose(np.diag(K), 1.0)
    with pytest.raises(DataError):
        intersection_kernel(np.array([[-0.1, 1.1]]))


def test_intersection_bounded_and_psd(rng):
    for _ in range(50):
        H = rng.random((20, 8)) ** 3
        H /= H.sum(axis=1, keepdims=True)
        K = intersection_kernel(H).K
        assert K.min() >= 0 and K.max() <= 1 + 1e-12
        assert min_eigenvalue_ok(K)


def _corr_oracle(x, y, max_shift):
    """Brute-force max |Pearson| over shifts for two 1-axis series."""
    L = len(x)
    best = 0.0
    for s in range(-max_shift, max_shift + 1):
        a = x[s:] if s >= 0 else x[: L + s]
        b = y[: L - s] if s >= 0 else y[-s:]
        if a.std() == 0 or b.std() == 0:
            continue
        best = max(best, abs(np.corrcoef(a, b)[0, 1]))
    return best


def test_correlation_matches_brute_force(rng):
    X = rng.normal(size=(4, 80, 2))
    X[1] = np.roll(X[0], 3, axis=0) + 0.3 * rng.normal(size=(80, 2))
    R = correlation_block(X, X, 6)
    for i in range(4):
        for j in range(4):
            want = np.mean([_corr_oracle(X[i, :, a], X[j, :, a], 6) for a in range(2)])
            assert R[i, j] == pytest.approx(want, abs=1e-12)


def test_correlation_self_and_delayed_copy(rng):
    base = rng.normal(size=(600, 3))
    X = np.stack([base[100:600], base[93:593]])  # second frame is the first delayed by 7
    R = correlation_matrix(X, 10)
    np.testing.assert_allclose(np.diag(R), 1.0)
    assert R[0, 1] == pytest.approx(1.0, abs=1e-12)


def test_correlation_white_noise_is_small(rng):
    X = rng.normal(size=(200, 500, 1))
    C = correlation_block(X[:100], X[100:], 50)
    assert np.mean(np.diag(C)) < 0.2


def test_correlation_zero_variance_contributes_zero():
    X = np.zeros((2, 20, 1))
    X[1, :, 0] = np.arange(20.0)
    R = correlation_matrix(X, 3)
    assert R[0, 1] == 0.0 and R[0, 0] == 0.0 and R[1, 1] == 1.0


def test_correlation_kernel_is_psd(rng):
    X = rng.normal(size=(25, 60, 3))
    g = correlation_kernel(X, 5)
    assert g.kind == "correlation" and g.psd_checked
    assert np.array_equal(g.K, g.K.T)
    assert min_eigenvalue_ok(g.K)


def test_psd_correct_examples(rng):
    out = psd_correct(np.array([[1.0, -2.0], [-2.0, 1.0]])).K
    # oracle: clamp via an independent eigendecomposition
    w, q = np.linalg.eigh(np.array([[1.0, -2.0], [-2.0, 1.0]]))
    want = q @ np.diag(np.maximum(w, 0)) @ q.T
    np.testing.assert_allclose(out, want, atol=1e-12)
    np.testing.assert_allclose(out, [[1.5, -1.5], [-1.5, 1.5]], atol=1e-12)
    np.testing.assert_allclose(psd_correct(-np.eye(3)).K, 0, atol=1e-15)
    a = rng.normal(size=(10, 4))
    P = a @ a.T
    assert np.linalg.norm(psd_correct(P).K - P) <= 1e-10


def test_psd_correct_idempotent(rng):
    a = rng.normal(size=(30, 30))
    once = psd_correct(a + a.T).K
    twice = psd_correct(once).K
    assert np.linalg.norm(twice - once) <= 1e-10


def _gram(K, kind="statistics"):
    return GramMatrix(np.asarray(K, dtype=float), kind, psd_checked=True)


def test_enumerate_three_bases(rng):
    mats = []
    for _ in range(3):
        a = rng.normal(size=(5, 5))
        mats.append(a @ a.T)
    ks = enumerate_compositions([_gram(m) for m in mats])
    assert ks.M == 3 and ks.M_tilde == 7
    assert [s for s, _ in ks] == [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]
    np.testing.assert_array_equal(dict(ks.members)[(0, 2)].K, mats[0] + mats[2])
    for _, g in ks:
        assert min_eigenvalue_ok(g.K)


def test_enumerate_one_and_four():
    one = enumerate_compositions([_gram(np.eye(2))])
    assert one.M_tilde == 1
    np.testing.assert_array_equal(one[0][1].K, np.eye(2))
    assert enumerate_compositions([_gram(np.eye(2))] * 4).M_tilde == 15


def test_enumerate_rejects_mismatch():
    with pytest.raises(DimensionError):
        enumerate_compositions([_gram(np.eye(2)), _gram(np.eye(3))])


def test_cross_kernel_matches_training_columns(rng):
    X = rng.normal(size=(8, 3))
    H = rng.random((8, 5))
    H /= H.sum(1, keepdims=True)
    K = gaussian_kernel(X, 0.5).K
    C = cross_kernel(X, X[[2, 5]], "statistics", gamma=0.5)
    np.testing.assert_allclose(C, K[:, [2, 5]].T, atol=1e-10)
    Kh = intersection_kernel(H).K
    np.testing.assert_allclose(cross_kernel(H, H[[1]], "shape"), Kh[[1]], atol=1e-10)
    assert cross_kernel(X, X[:0], "statistics", gamma=0.5).shape == (0, 8)
    assert np.all((C > 0) & (C <= 1))


def test_cross_kernel_parameter_mismatch(rng):
    with pytest.raises(ConfigError):
        cross_kernel(rng.normal(size=(3, 2)), rng.normal(size=(2, 3)), "statistics", gamma=1.0)
    with pytest.raises(ConfigError):
        cross_kernel(rng.normal(size=(3, 2)), rng.normal(size=(2, 2)), "statistics")
    with pytest.raises(ConfigError):
        cross_kernel(None, None, "polynomial")


@pytest.mark.parametrize("builder", ["statistics", "shape", "correlation"])
def test_permutation_equivariance(builder, rng):
    n = 12
    perm = rng.permutation(n)
    if builder == "statistics":
        X = rng.normal(size=(n, 3))
        f = lambda x: gaussian_kernel(x, 0.4).K
    elif builder == "shape":
        X = rng.random((n, 6))
        X /= X.sum(1, keepdims=True)
        f = lambda x: intersection_kernel(x).K
    else:
        X = rng.normal(size=(n, 40, 2))
        f = lambda x: correlation_kernel(x, 4).K
    np.testing.assert_allclose(f(X[perm]), f(X)[np.ix_(perm, perm)], atol=1e-10)


def test_gram_file_round_trip(tmp_path, rng):
    K = rng.normal(size=(4, 3))
    write_gram(tmp_path / "k.gram", K, "composition", 0b101)
    K2, kind, mask = read_gram(tmp_path / "k.gram")
    assert K2.tobytes() == K.tobytes() and kind == "composition" and mask == 5
    export_gram_csv(tmp_path / "k.csv", K)
    np.testing.assert_array_equal(np.loadtxt(tmp_path / "k.csv", delimiter=","), K)


def test_gram_file_errors(tmp_path):
    p = tmp_path / "k.gram"
    write_gram(p, np.eye(2), "shape", 2)
    data = bytearray(p.read_bytes())
    data[4] = 9
    p.write_bytes(bytes(data))
    with pytest.raises(VersionError):
        read_gram(p)
    p.write_bytes(b"nope" + bytes(40))
    with pytest.raises(DataError):
        read_gram(p)
