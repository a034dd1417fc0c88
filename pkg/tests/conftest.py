import numpy as np
import pytest

from glrnet.network import ActivationSpec, NetworkSpec, NoiseSpec, ParameterSet


def net(widths, kind="sigmoid", sigma2=4.0, slope=1.0):
    noise = None if sigma2 is None else NoiseSpec(sigma2)
    return NetworkSpec(tuple(widths), ActivationSpec(kind, slope), noise)


def random_params(spec, rng, scale=1.0):
    return ParameterSet([rng.normal(0.0, scale, size=s) for s in spec.shapes])


def random_input(spec, rng, batch=()):
    x = np.ones(batch + (spec.input_size,))
    x[..., 1:] = rng.uniform(0.0, 1.0, size=batch + (spec.widths[0],))
    return x


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- trained models shared by the attack tests and the acceptance suite -------

from glrnet import seeding  # noqa: E402
from glrnet.data import default_mnist_paths, load_mnist  # noqa: E402
from glrnet.training import TrainConfig, train  # noqa: E402

MNIST_SEED = 0


@pytest.fixture(scope="session")
def mnist():
    return load_mnist(*default_mnist_paths(), seed=MNIST_SEED)


@pytest.fixture(scope="session")
def mnist_reduced(mnist):
    return mnist.reduced(1000, 400)


@pytest.fixture(scope="session")
def surrogate(mnist):
    """BP-trained noise-free 196-20-20-10 sigmoid net on the full training split."""
    spec = net((196, 20, 20, 10), sigma2=None)
    cfg = TrainConfig(estimator="bp", learning_rate=3.0, epochs=30, seed=MNIST_SEED)
    params, _ = train(spec, mnist.train, cfg)
    return spec, params


@pytest.fixture(scope="session")
def bp_victim(mnist_reduced):
    """BP-trained noise-free 196-20-10 sigmoid victim on the reduced training set."""
    spec = net((196, 20, 10), sigma2=None)
    cfg = TrainConfig(estimator="bp", learning_rate=3.0, epochs=60, seed=MNIST_SEED)
    params, _ = train(spec, mnist_reduced.train, cfg)
    return spec, params


@pytest.fixture(scope="session")
def glr_threshold_victim(mnist_reduced):
    """GLR-trained noisy 196-20-10 threshold victim on the reduced training set."""
    spec = net((196, 20, 10), "threshold", sigma2=4.0)
    cfg = TrainConfig(estimator="glr", learning_rate=3.0, replicates=500, epochs=100,
                      max_iterations=3000, seed=MNIST_SEED)
    params, _ = train(spec, mnist_reduced.train, cfg)
    return spec, params


@pytest.fixture(scope="session")
def attack_slice(mnist):
    """500 test images drawn with the attack stream of the master seed."""
    idx = np.sort(seeding.derive(MNIST_SEED, seeding.ATTACK).choice(len(mnist.test), 500, replace=False))
    return mnist.test.take(idx)


# --- acceptance summary --------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
