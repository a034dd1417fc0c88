# %% [markdown]
# # Learning two Gaussian blobs with GLR
#
# Every activation trains with the same loss-value-only estimator, including
# the threshold unit with the 0-1 loss that back-propagation cannot handle.

# %%
from glrnet.network import ActivationSpec, NetworkSpec, NoiseSpec
from glrnet.training import TrainConfig, train, two_blobs

train_set, val_set = two_blobs(500, seed=0), two_blobs(200, seed=1)

# %%
for kind, loss, budget in [("sigmoid", "cross_entropy", 500), ("threshold", "cross_entropy", 500),
                           ("abs", "cross_entropy", 500), ("threshold", "zero_one", 1000)]:
    spec = NetworkSpec((2, 4, 2), ActivationSpec(kind), NoiseSpec(4.0))
    cfg = TrainConfig(learning_rate=0.1, replicates=100, epochs=1000, max_iterations=budget,
                      eval_every=50, loss=loss)
    _, log = train(spec, train_set, cfg, validation=val_set)
    curve = " ".join(f"{r.val_acc:.2f}" for r in log.evaluated)
    print(f"{kind:>9} / {loss:<13} validation accuracy every 50 iterations: {curve}")
