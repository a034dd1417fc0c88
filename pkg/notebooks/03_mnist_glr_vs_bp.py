# %% [markdown]
# # Reduced MNIST: GLR against back-propagation
#
# 1000 training and 400 test digits at 14x14. The GLR run uses K = 500
# noise replicates per step; BP trains a noise-free copy of the same shape.

# %%
from glrnet.data import default_mnist_paths, load_mnist
from glrnet.network import ActivationSpec, NetworkSpec, NoiseSpec
from glrnet.training import TrainConfig, evaluate, train

data = load_mnist(*default_mnist_paths(), seed=0).reduced(1000, 400)
print(len(data.train), "train /", len(data.test), "test;", data.provenance["pool_digest"])

# %%
glr_spec = NetworkSpec((196, 20, 10), ActivationSpec("sigmoid"), NoiseSpec(4.0))
glr_cfg = TrainConfig(learning_rate=3.0, replicates=500, epochs=100, max_iterations=1000)
params, log = train(glr_spec, data.train, glr_cfg, validation=data.test)
for r in log.evaluated:
    print(f"GLR epoch {r.epoch:2d}  iteration {r.iteration:4d}  val loss {r.val_loss:.3f}  acc {r.val_acc:.3f}")

# %%
bp_spec = NetworkSpec((196, 20, 10), ActivationSpec("sigmoid"), None)
bp_params, _ = train(bp_spec, data.train, TrainConfig(estimator="bp", learning_rate=3.0, epochs=60))
print("BP  test accuracy:", evaluate(bp_spec, bp_params, data.test))
print("GLR test accuracy:", evaluate(glr_spec, params, data.test))
