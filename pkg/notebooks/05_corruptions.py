# %% [markdown]
# # Natural corruptions at five severities
#
# Four corruption families applied to 14x14 digits, and the
# severity-averaged accuracy of a BP-trained classifier.

# %%
import numpy as np

from glrnet import seeding
from glrnet.corruptions import Corruption, corrupt, parameter_table, severity_averaged_accuracy
from glrnet.data import SampleSet, default_mnist_paths, load_mnist
from glrnet.network import ActivationSpec, NetworkSpec
from glrnet.training import TrainConfig, evaluate, train

data = load_mnist(*default_mnist_paths(), seed=0).reduced(1000, 1000)
for kind, values in parameter_table().items():
    print(f"{kind:<15} {values}")

# %%
spec = NetworkSpec((196, 20, 10), ActivationSpec("sigmoid"), None)
params, _ = train(spec, data.train, TrainConfig(estimator="bp", learning_rate=3.0, epochs=60))
print("clean accuracy", evaluate(spec, params, data.test))

# %%
def ascii_digit(x):
    return "\n".join("".join(" .:-=+*#%@"[int(v * 9.99)] for v in row) for row in x[1:].reshape(14, 14))

for k, kind in enumerate(Corruption):
    accs = []
    for s in range(1, 6):
        x = corrupt(data.test.x, kind, s, seeding.derive(0, seeding.CORRUPT, k + 1, s))
        accs.append(evaluate(spec, params, SampleSet(x, data.test.labels)))
    print(f"{kind.value:<15} per severity {np.round(accs, 3)}  average {severity_averaged_accuracy(accs):.3f}")

print(ascii_digit(corrupt(data.test.x[:1], Corruption.GLASS_BLUR, 3, seeding.derive(0, 99))[0]))
