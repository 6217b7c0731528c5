"""Dense feed-forward networks with analytic backprop, sized for small
actor/critic policies. Everything is float64 numpy; there is no autograd,
the backward pass is written out against the forward pass by hand.

Networks are plain parameter containers. The forward/backward functions accept
a single input vector or a batch (rows are samples); gradients returned by
``backward`` are summed over the batch, callers divide by the batch size when
they want means.
"""

from dataclasses import dataclass, field
import json

import numpy as np

CHECKPOINT_FORMAT_VERSION = 1

_HIDDEN_ACTS = ("relu", "tanh")
_OUTPUT_ACTS = ("tanh", "linear")


class InvalidInputError(ValueError):
    """Raised on shape or architecture mismatches."""


class TrainingDivergenceError(RuntimeError):
    """Raised when gradients or parameters stop being finite."""


@dataclass
class Mlp:
    """Fully connected network.

    weights[i] has shape (layer_sizes[i], layer_sizes[i+1]) and acts by
    right-multiplication, x @ W + b. ``output_scale`` and ``output_offset``
    map a tanh head onto an arbitrary action box (offset + scale * tanh(z));
    ``input_scale`` divides inputs componentwise so badly conditioned state
    spaces can be normalized without touching callers.
    """

    layer_sizes: list
    weights: list
    biases: list
    hidden_activation: str = "relu"
    output_activation: str = "tanh"
    output_scale: np.ndarray = None
    output_offset: np.ndarray = None
    input_scale: np.ndarray = None

    def __post_init__(self):
        if self.hidden_activation not in _HIDDEN_ACTS:
            raise InvalidInputError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in _OUTPUT_ACTS:
            raise InvalidInputError(f"unknown output activation {self.output_activation!r}")
        out = self.layer_sizes[-1]
        if self.output_scale is None:
            self.output_scale = np.ones(out)
        if self.output_offset is None:
            self.output_offset = np.zeros(out)
        if self.input_scale is None:
            self.input_scale = np.ones(self.layer_sizes[0])
        self.output_scale = np.asarray(self.output_scale, dtype=float)
        self.output_offset = np.asarray(self.output_offset, dtype=float)
        self.input_scale = np.asarray(self.input_scale, dtype=float)
        if self.output_scale.shape != (out,):
            raise InvalidInputError("output_scale length must equal the final layer size")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expect = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if w.shape != expect or b.shape != (expect[1],):
                raise InvalidInputError(f"layer {i} parameter shapes inconsistent with layer_sizes")

    @property
    def n_layers(self):
        return len(self.weights)

    def parameters(self):
        """Flat list of parameter arrays, weights and biases interleaved."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self):
        return Mlp(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hidden_activation,
            self.output_activation,
            self.output_scale.copy(),
            self.output_offset.copy(),
            self.input_scale.copy(),
        )


def init_mlp(layer_sizes, rng, hidden_activation="relu", output_activation="tanh",
             output_scale=None, output_offset=None, input_scale=None,
             final_layer_scale=3e-3):
    """Create a network with uniform +-1/sqrt(fan_in) weights.

    The final layer is drawn from +-final_layer_scale instead, which keeps an
    actor's initial actions near the center of its box.
    """
    weights, biases = [], []
    n = len(layer_sizes) - 1
    for i in range(n):
        fan_in = layer_sizes[i]
        lim = final_layer_scale if i == n - 1 else 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-lim, lim, size=(layer_sizes[i], layer_sizes[i + 1])))
        biases.append(rng.uniform(-lim, lim, size=layer_sizes[i + 1]))
    return Mlp(list(layer_sizes), weights, biases, hidden_activation, output_activation,
               output_scale, output_offset, input_scale)


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def forward(net: Mlp, x):
    """Evaluate the network. x is (d,) or (batch, d); the output matches."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = np.atleast_2d(x)
    if h.shape[1] != net.layer_sizes[0]:
        raise InvalidInputError(
            f"input width {h.shape[1]} != expected {net.layer_sizes[0]}")
    h = h / net.input_scale
    last = net.n_layers - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        if i < last:
            h = _act(z, net.hidden_activation)
        elif net.output_activation == "tanh":
            h = net.output_offset + net.output_scale * np.tanh(z)
        else:
            h = z
    return h[0] if single else h


def backward(net: Mlp, x, output_gradient):
    """Backpropagate d(objective)/d(output) through the network.

    Returns (grads, input_gradient) where grads is a flat list matching
    ``net.parameters()`` (summed over the batch) and input_gradient has the
    shape of x. The forward pass is recomputed internally, which is cheap for
    networks of this size and keeps call sites stateless.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(output_gradient, dtype=float)
    single = x.ndim == 1
    h = np.atleast_2d(x)
    g = np.atleast_2d(g)
    if h.shape[1] != net.layer_sizes[0]:
        raise InvalidInputError("input width mismatch")
    if g.shape[1] != net.layer_sizes[-1] or g.shape[0] != h.shape[0]:
        raise InvalidInputError("output_gradient shape mismatch")

    h = h / net.input_scale
    acts = [h]      # post-activation values per layer boundary
    zs = []
    last = net.n_layers - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ w + b
        zs.append(z)
        if i < last:
            acts.append(_act(z, net.hidden_activation))
        elif net.output_activation == "tanh":
            acts.append(np.tanh(z))
        else:
            acts.append(z)

    if net.output_activation == "tanh":
        delta = g * net.output_scale * (1.0 - acts[-1] ** 2)
    else:
        delta = g.copy()

    w_grads = [None] * net.n_layers
    b_grads = [None] * net.n_layers
    for i in range(last, -1, -1):
        w_grads[i] = acts[i].T @ delta
        b_grads[i] = delta.sum(axis=0)
        delta = delta @ net.weights[i].T
        if i > 0:
            if net.hidden_activation == "relu":
                delta = delta * (zs[i - 1] > 0)
            else:
                delta = delta * (1.0 - np.tanh(zs[i - 1]) ** 2)

    delta = delta / net.input_scale
    grads = []
    for wg, bg in zip(w_grads, b_grads):
        grads.append(wg)
        grads.append(bg)
    return grads, (delta[0] if single else delta)


@dataclass
class OptimizerState:
    """Per-parameter state for Adam, or none at all for plain gradient descent."""

    learning_rate: float
    kind: str = "adam"          # "adam" or "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_net(cls, net: Mlp, learning_rate, kind="adam", **kw):
        st = cls(learning_rate=learning_rate, kind=kind, **kw)
        if kind == "adam":
            st.m = [np.zeros_like(p) for p in net.parameters()]
            st.v = [np.zeros_like(p) for p in net.parameters()]
        return st


def apply_gradients(net: Mlp, grads, opt: OptimizerState):
    """Descend along grads in place. Returns (net, opt) for chaining."""
    params = net.parameters()
    if len(grads) != len(params):
        raise InvalidInputError("gradient list length mismatch")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingDivergenceError("non-finite gradient")
    opt.step_count += 1
    if opt.kind == "sgd":
        for p, g in zip(params, grads):
            p -= opt.learning_rate * g
    else:
        t = opt.step_count
        bc1 = 1.0 - opt.beta1 ** t
        bc2 = 1.0 - opt.beta2 ** t
        for p, g, m, v in zip(params, grads, opt.m, opt.v):
            m *= opt.beta1
            m += (1.0 - opt.beta1) * g
            v *= opt.beta2
            v += (1.0 - opt.beta2) * g * g
            p -= opt.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + opt.epsilon)
    for p in params:
        if not np.all(np.isfinite(p)):
            raise TrainingDivergenceError("non-finite parameter after update")
    return net, opt


def soft_update(target: Mlp, source: Mlp, tau):
    """target <- (1 - tau) * target + tau * source, elementwise, in place."""
    if target.layer_sizes != source.layer_sizes:
        raise InvalidInputError("architecture mismatch in soft_update")
    if not 0.0 <= tau <= 1.0:
        raise InvalidInputError("tau must lie in [0, 1]")
    for pt, ps in zip(target.parameters(), source.parameters()):
        pt *= 1.0 - tau
        pt += tau * ps
    return target


def _fmt(a):
    # 17 significant digits round-trips every float64 exactly
    return [[f"{x:.17g}" for x in row] for row in np.atleast_2d(a)]


def net_to_doc(net: Mlp):
    """JSON-safe dict with every float as a round-trip-exact string."""
    return {
        "layer_sizes": list(net.layer_sizes),
        "hidden_activation": net.hidden_activation,
        "output_activation": net.output_activation,
        "output_scale": _fmt(net.output_scale)[0],
        "output_offset": _fmt(net.output_offset)[0],
        "input_scale": _fmt(net.input_scale)[0],
        "weights": [_fmt(w) for w in net.weights],
        "biases": [_fmt(b)[0] for b in net.biases],
    }


def net_from_doc(doc):
    to_arr = lambda rows: np.array([[float(x) for x in r] for r in rows])
    to_vec = lambda row: np.array([float(x) for x in row])
    return Mlp(
        list(doc["layer_sizes"]),
        [to_arr(w) for w in doc["weights"]],
        [to_vec(b) for b in doc["biases"]],
        doc["hidden_activation"],
        doc["output_activation"],
        to_vec(doc["output_scale"]),
        to_vec(doc["output_offset"]),
        to_vec(doc["input_scale"]),
    )


def save_checkpoint(net: Mlp, path):
    """Write the network as a standalone JSON document."""
    doc = {"format_version": CHECKPOINT_FORMAT_VERSION, **net_to_doc(net)}
    with open(path, "w") as f:
        json.dump(doc, f)
        f.write("\n")


def load_checkpoint(path):
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise InvalidInputError(f"unsupported checkpoint format {doc.get('format_version')!r}")
    return net_from_doc(doc)
