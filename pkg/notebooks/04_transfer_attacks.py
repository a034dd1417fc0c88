# %% [markdown]
# # Transfer attacks from a BP surrogate
#
# FGSM and L-BFGS images are crafted against a two-hidden-layer BP network
# and then shown to victims that never took part in their generation.

# %%
import numpy as np

from glrnet import seeding
from glrnet.attacks import AttackConfig, AttackMethod, adversarial_test, generate
from glrnet.data import default_mnist_paths, load_mnist
from glrnet.network import ActivationSpec, NetworkSpec, NoiseSpec
from glrnet.training import TrainConfig, evaluate, train

data = load_mnist(*default_mnist_paths(), seed=0)
reduced = data.reduced(1000, 400)
pick = np.sort(seeding.derive(0, seeding.ATTACK).choice(len(data.test), 200, replace=False))
images = data.test.take(pick)

# %%
sur_spec = NetworkSpec((196, 20, 20, 10), ActivationSpec("sigmoid"), None)
sur, _ = train(sur_spec, data.train, TrainConfig(estimator="bp", learning_rate=3.0, epochs=30))
print("surrogate test accuracy", evaluate(sur_spec, sur, reduced.test))

fgsm_set = generate(sur_spec, sur, images, AttackConfig(AttackMethod.FGSM, epsilon=0.25))
lbfgs_set = generate(sur_spec, sur, images, AttackConfig(AttackMethod.LBFGS))
print("surrogate on FGSM", adversarial_test(fgsm_set, sur_spec, sur))
print("L-BFGS success", lbfgs_set.success.mean(),
      "mean L2", np.linalg.norm(lbfgs_set.adversarial - lbfgs_set.originals, axis=1).mean())

# %%
victims = {
    "BP sigmoid": (NetworkSpec((196, 20, 10), ActivationSpec("sigmoid"), None),
                   TrainConfig(estimator="bp", learning_rate=3.0, epochs=60)),
    "GLR threshold": (NetworkSpec((196, 20, 10), ActivationSpec("threshold"), NoiseSpec(4.0)),
                      TrainConfig(learning_rate=3.0, replicates=200, epochs=100, max_iterations=1500)),
}
print(f"{'model':<14} {'Orig':>6} {'L-BFGS':>7} {'FGSM':>6}")
for name, (spec, cfg) in victims.items():
    params, _ = train(spec, reduced.train, cfg)
    print(f"{name:<14} {evaluate(spec, params, images):6.3f} "
          f"{adversarial_test(lbfgs_set, spec, params):7.3f} {adversarial_test(fgsm_set, spec, params):6.3f}")

# %%
try:
    from glrnet.attacks import save_pairs_png
    save_pairs_png("fgsm_pairs.png", fgsm_set, count=8)
    print("wrote fgsm_pairs.png")
except ImportError:
    print("Pillow not installed; skipping the PNG dump")
