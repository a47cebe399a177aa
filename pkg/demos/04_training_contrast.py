# Training a 15-layer sigmoid MLP on synthetic 10-class blobs, three ways:
# plain weights with Glorot init, zero-sum weights with minibatch init, and zero-sum
# weights with batch norm.
#
# Run:  python demos/04_training_contrast.py   (about 30 s)

from pathlib import Path

from lcwnet.config import load_config
from lcwnet.train import train

CONFIGS = Path(__file__).parents[1] / "configs"
runs = {}
for name in ("mlp15_sigmoid_plain", "mlp15_sigmoid_lcw", "mlp15_sigmoid_bn_lcw"):
    config = load_config(CONFIGS / f"{name}.json")
    config.output_dir = None  # keep the demo free of side effects
    runs[name] = train(config).metrics.rows

print("epoch " + "".join(f"{n:>26s}" for n in runs))
for epoch in (0, 1, 2, 4, 9, 19, 29):
    cells = []
    for rows in runs.values():
        r = rows[epoch]
        cells.append(f"loss {r.train_loss:6.3f} acc {r.train_accuracy:5.3f}")
    print(f"{epoch:5d} " + "".join(f"{c:>26s}" for c in cells))

# The plain network never leaves chance level (0.1): its gradients vanish before they
# reach the early layers. The zero-sum networks fit the training set.

for name, rows in runs.items():
    print(f"{name}: final test accuracy {rows[-1].test_accuracy:.3f}")
