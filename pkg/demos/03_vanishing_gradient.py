# Vanishing gradients in a deep sigmoid MLP right after minibatch initialization.
#
# Both networks are rescaled so that every layer's preactivation has unit variance on a
# 100-sample batch. With standard weights, the backward gain of each fully connected
# layer is far smaller than its forward gain, and the gradient variance collapses toward
# the input. With zero-sum weights the two gains match and the gradient survives.
#
# Run:  python demos/03_vanishing_gradient.py

from pathlib import Path

from lcwnet.config import load_config
from lcwnet.data import to_network_input
from lcwnet.diagnostics import activation_quantiles, layer_profile, quantile_table
from lcwnet.linalg import Rng
from lcwnet.train import STREAM_SHUFFLE, load_data, prepare_network

config = load_config(Path(__file__).parents[1] / "configs" / "mlp20_sigmoid_profile.json")
train_data, _ = load_data(config)

profiles, quantiles = {}, {}
for lcw in (False, True):
    config.model.lcw = lcw
    net, order = prepare_network(config, train_data, Rng(config.seed, STREAM_SHUFFLE))
    probe = train_data.subset(order[:100])
    x = to_network_input(probe.inputs)
    profiles[lcw] = layer_profile(net, x, probe.labels)
    quantiles[lcw] = quantile_table(activation_quantiles(net, x, [1, 5, 9, 13, 17], 20))

print("layer   V(z) std   V(grad z) std   V(z) lcw   V(grad z) lcw")
for l in range(len(profiles[False])):
    s, c = profiles[False], profiles[True]
    print(f"{l + 1:5d}   {s.preactivation[l].variance:8.4f}   {s.gradient[l].variance:13.3e}"
          f"   {c.preactivation[l].variance:8.4f}   {c.gradient[l].variance:13.3e}")

for lcw, label in ((False, "standard"), (True, "zero-sum")):
    print(f"\n{label}: V(grad z^1) / V(grad z^19) = "
          f"{profiles[lcw].gradient_variance_ratio(1, 19):.3g}")

# Where do the sigmoid outputs sit? With zero-sum weights each neuron's activations are
# centred near 0.5. Standard weights push many neurons toward one side.

for lcw, label in ((False, "standard"), (True, "zero-sum")):
    print(f"\n{label}: median activation of the first 5 neurons per layer")
    for layer in (1, 5, 9, 13, 17):
        medians = [quantiles[lcw][(layer, i)]["q50"] for i in range(5)]
        print(f"  layer {layer:2d}: " + "  ".join(f"{m:.3f}" for m in medians))
