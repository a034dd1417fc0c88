import numpy as np
import pytest

from glrnet import seeding
from glrnet.errors import ConfigurationError, UnsupportedActivationError
from glrnet.estimators import (
    block_rng,
    bp_gradient,
    fd_expected_gradient,
    fd_expected_gradient_all,
    flatten,
    glr_gradient,
    glr_gradient_averaged,
    glr_gradient_stats,
    replicate_blocks,
)
from glrnet.losses import cross_entropy, cross_entropy_grad, zero_one_loss
from glrnet.network import (
    NoiseSpec,
    ParameterSet,
    forward,
    forward_deterministic,
    forward_with_noise,
)

from conftest import net, random_input, random_params


def hot(k, m):
    return np.eye(m)[k]


def test_glr_entry_by_substitution():
    spec = net((1, 1))
    params = ParameterSet([np.array([[0.0, 1.0]])])
    trace = forward_with_noise(spec, params, [1.0, 0.3], [np.array([2.0])])
    g = glr_gradient(trace, 1.0, NoiseSpec(4.0))
    assert g[0][0, 0] == 0.5            # bias entry: L * 1 * r / sigma2
    assert g[0][0, 1] == pytest.approx(1.0 * 0.3 * 2.0 / 4.0, abs=1e-15)


def test_glr_zero_loss_gives_zero_estimate(rng):
    spec = net((3, 4, 2), "threshold")
    params = random_params(spec, rng)
    trace = forward(spec, params, random_input(spec, rng), rng)
    assert all(np.all(g == 0) for g in glr_gradient(trace, 0.0, spec.noise))


def test_glr_rejects_non_positive_variance(rng):
    spec = net((2, 2))
    trace = forward(spec, random_params(spec, rng), random_input(spec, rng), rng)
    with pytest.raises(ConfigurationError):
        glr_gradient(trace, 1.0, 0.0)


@pytest.mark.parametrize("kind", ["sigmoid", "threshold", "abs"])
def test_estimators_are_shape_congruent(kind, rng):
    spec = net((5, 4, 3, 2), kind)
    params = random_params(spec, rng)
    x = random_input(spec, rng, batch=(6,))
    o = np.eye(2)[rng.integers(0, 2, 6)]
    trace = forward(spec, params, x, rng)
    shapes = spec.shapes
    assert [g.shape for g in glr_gradient(trace, cross_entropy(trace.output, o), spec.noise)] == shapes
    assert [g.shape for g in glr_gradient_averaged(spec, params, x, o, 7, rng)] == shapes
    est, err = fd_expected_gradient_all(spec, params, x[0], o[0], M=10, rng=rng)
    assert est.shape == err.shape == (spec.n_params,)
    if kind == "sigmoid":
        assert [g.shape for g in bp_gradient(trace, spec, params, cross_entropy_grad(trace.output, o))] == shapes


def test_glr_batched_mean_equals_mean_of_single_estimates(rng):
    spec = net((3, 2, 2))
    params = random_params(spec, rng)
    trace = forward(spec, params, random_input(spec, rng), rng, replicates=5)
    L = cross_entropy(trace.output, hot(1, 2))
    mean = glr_gradient(trace, L, spec.noise)
    per = glr_gradient(trace, L, spec.noise, reduce=False)
    for k in range(5):
        single = forward_with_noise(spec, params, trace.inputs[0][k], [r[k] for r in trace.noise])
        for g, s in zip(glr_gradient(single, L[k], spec.noise), per):
            assert np.allclose(g, s[k], atol=1e-15)
    for m, s in zip(mean, per):
        assert np.allclose(m, s.mean(axis=0), atol=1e-14)


def test_glr_averaged_with_one_replicate_is_one_estimate(rng):
    spec = net((3, 2, 2))
    params = random_params(spec, rng)
    x = random_input(spec, rng)
    o = hot(0, 2)
    root = seeding.entropy_from(np.random.default_rng(99))
    avg = glr_gradient_averaged(spec, params, x, o, 1, np.random.default_rng(99))
    trace = forward(spec, params, x, block_rng(root, 0), replicates=1)
    single = glr_gradient(trace, cross_entropy(trace.output, o), spec.noise)
    for a, s in zip(avg, single):
        assert np.array_equal(a, s)


def test_glr_averaged_variance_scales_inverse_in_k():
    spec = net((2, 2, 2))
    rng = np.random.default_rng(3)
    params = random_params(spec, rng)
    x = random_input(spec, rng)
    o = hot(1, 2)
    ks = (1, 10, 100)
    variances = []
    for k in ks:
        draws = np.array([flatten(glr_gradient_averaged(spec, params, x, o, k,
                                                        seeding.derive(5, k, rep)))
                          for rep in range(1000)])
        variances.append(draws.var(axis=0).mean())
    slope = np.polyfit(np.log(ks), np.log(variances), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.2)


def test_glr_averaged_parallel_equals_serial(rng):
    spec = net((4, 3, 2))
    params = random_params(spec, rng)
    x = random_input(spec, rng, batch=(5,))
    o = np.eye(2)[rng.integers(0, 2, 5)]
    serial = glr_gradient_averaged(spec, params, x, o, 2500, np.random.default_rng(4),
                                   block_size=300, workers=1)
    parallel = glr_gradient_averaged(spec, params, x, o, 2500, np.random.default_rng(4),
                                     block_size=300, workers=4)
    for s, p in zip(serial, parallel):
        assert np.max(np.abs(s - p)) <= 1e-12


def test_replicate_blocks():
    assert replicate_blocks(2500, 1000) == [1000, 1000, 500]
    assert replicate_blocks(3, 1000) == [3]
    with pytest.raises(ConfigurationError):
        replicate_blocks(0, 10)


def test_glr_averaged_needs_noise(rng):
    spec = net((2, 2), sigma2=None)
    with pytest.raises(ConfigurationError):
        glr_gradient_averaged(spec, random_params(spec, rng), random_input(spec, rng), hot(0, 2), 2, rng)


def test_bp_hand_chain_rule():
    # 2 -> 1 net, theta = (0, 1, 1), input (1, .5, .5), no noise: v = 1
    spec = net((2, 1), sigma2=None)
    params = ParameterSet([np.array([[0.0, 1.0, 1.0]])])
    trace = forward_deterministic(spec, params, [1.0, 0.5, 0.5])
    e = np.array([0.7])
    s = 1 / (1 + np.exp(-1.0))
    expected = 0.7 * s * (1 - s) * np.array([1.0, 0.5, 0.5])
    assert np.allclose(bp_gradient(trace, spec, params, e)[0][0], expected, atol=1e-15)


def test_bp_respects_slope():
    spec = net((1, 1), sigma2=None, slope=3.0)
    params = ParameterSet([np.array([[0.2, -0.4]])])
    trace = forward_deterministic(spec, params, [1.0, 0.5])
    v = 0.2 - 0.2
    s = 1 / (1 + np.exp(-3.0 * v))
    assert bp_gradient(trace, spec, params, [1.0])[0][0, 0] == pytest.approx(3 * s * (1 - s))


def test_bp_zero_loss_grad_gives_zero(rng):
    spec = net((3, 4, 2))
    params = random_params(spec, rng)
    trace = forward(spec, params, random_input(spec, rng), rng)
    assert all(np.all(g == 0) for g in bp_gradient(trace, spec, params, np.zeros(2)))


@pytest.mark.parametrize("kind", ["threshold", "abs"])
def test_bp_refuses_non_smooth_activations(kind, rng):
    spec = net((3, 2), kind)
    params = random_params(spec, rng)
    trace = forward(spec, params, random_input(spec, rng), rng)
    with pytest.raises(UnsupportedActivationError):
        bp_gradient(trace, spec, params, np.ones(2))


def test_bp_matches_central_differences_on_deterministic_net():
    rng = np.random.default_rng(8)
    spec = net((3, 4, 2), sigma2=None)
    params = random_params(spec, rng)
    x = random_input(spec, rng)
    o = hot(1, 2)
    trace = forward_deterministic(spec, params, x)
    bp = flatten(bp_gradient(trace, spec, params, cross_entropy_grad(trace.output, o)))
    fd, err = fd_expected_gradient_all(spec, params, x, o, h=1e-5)
    assert np.all(err == 0)
    rel = np.abs(bp - fd) / np.maximum(np.abs(fd), 1e-6)
    assert rel.max() <= 1e-5


def test_fd_constant_loss_is_exactly_zero(rng, monkeypatch):
    spec = net((2, 2, 2))
    params = random_params(spec, rng)
    from glrnet import losses
    monkeypatch.setitem(losses.LOSSES, "constant", lambda x, o: np.full(x.shape[:-1], 3.0))
    est, err = fd_expected_gradient_all(spec, params, random_input(spec, rng), hot(0, 2),
                                        M=1000, rng=rng, loss="constant")
    assert np.all(est == 0) and np.all(err == 0)


def test_fd_second_order_in_step():
    rng = np.random.default_rng(2)
    spec = net((2, 2), sigma2=None)
    params = random_params(spec, rng)
    x = random_input(spec, rng)
    o = hot(0, 2)
    trace = forward_deterministic(spec, params, x)
    exact = bp_gradient(trace, spec, params, cross_entropy_grad(trace.output, o))[0][1, 2]
    errs = [abs(fd_expected_gradient(spec, params, x, o, (0, 1, 2), h=h)[0] - exact)
            for h in (0.1, 0.05)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_fd_threshold_zero_one_gives_finite_nonzero_derivative():
    rng = np.random.default_rng(11)
    spec = net((2, 2, 2), "threshold")
    params = random_params(spec, rng)
    x = random_input(spec, rng)
    est, err = fd_expected_gradient_all(spec, params, x, hot(0, 2), M=200_000,
                                        rng=np.random.default_rng(1), loss="zero_one")
    assert np.all(np.isfinite(est))
    assert np.max(np.abs(est) / np.maximum(err, 1e-300)) > 5


def test_fd_single_entry_matches_all(rng):
    spec = net((2, 2, 2))
    params = random_params(spec, rng)
    x = random_input(spec, rng)
    est, err = fd_expected_gradient_all(spec, params, x, hot(1, 2), M=5000,
                                        rng=np.random.default_rng(6))
    one = fd_expected_gradient(spec, params, x, hot(1, 2), 4, M=5000, rng=np.random.default_rng(6))
    assert one == (est[4], err[4])
    assert fd_expected_gradient(spec, params, x, hot(1, 2), params.index(4), M=5000,
                                rng=np.random.default_rng(6)) == one


def test_fd_input_validation(rng):
    spec = net((2, 2))
    params = random_params(spec, rng)
    x = random_input(spec, rng)
    with pytest.raises(ConfigurationError):
        fd_expected_gradient_all(spec, params, x, hot(0, 2), h=0.0, rng=rng)
    with pytest.raises(ConfigurationError):
        fd_expected_gradient_all(spec, params, x, hot(0, 2), M=0, rng=rng)
    with pytest.raises(ConfigurationError):
        fd_expected_gradient_all(spec, params, x, hot(0, 2))


@pytest.mark.parametrize("kind,loss", [("sigmoid", "cross_entropy"), ("threshold", "zero_one")])
def test_glr_unbiased_on_two_two_two_net(kind, loss):
    rng = np.random.default_rng(21)
    spec = net((2, 2, 2), kind)
    params = random_params(spec, rng)
    x = random_input(spec, rng)
    o = hot(1, 2)
    trace = forward(spec, params, x, np.random.default_rng(0), replicates=400_000)
    L = (cross_entropy if loss == "cross_entropy" else zero_one_loss)(trace.output, o)
    mean, err = glr_gradient_stats(trace, L, spec.noise)
    o_mean, o_err = fd_expected_gradient_all(spec, params, x, o, M=100_000,
                                             rng=np.random.default_rng(1), loss=loss)
    z = (flatten(mean) - o_mean) / np.sqrt(flatten(err) ** 2 + o_err ** 2)
    assert np.all(np.abs(z) < 4)
