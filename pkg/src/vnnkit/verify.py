"""Over-approximation robustness certification.

Two sound-but-incomplete methods over the L-infinity input box
[center - delta, center + delta]:

* ``interval``: sign-split interval arithmetic through affine layers,
  max(0, .) through ReLU.
* ``polyhedral``: a DeepPoly-style domain keeping, per neuron, a symbolic
  affine lower and upper bound over the previous layer plus concrete bounds
  obtained by back-substituting those expressions down to the input box.
  Concrete bounds are intersected with one-step interval bounds at every
  layer, so the polyhedral bounds can never be looser than the interval
  baseline.

Robustness margins (logit_label - logit_i) are bounded as symbolic affine
rows folded through the final layer and back-substituted, never by
subtracting already-concretized per-class bounds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InputShapeError
from .network import IDENTITY, Network

INTERVAL = "interval"
POLYHEDRAL = "polyhedral"
VERIFIED = "verified"
UNKNOWN = "unknown"


@dataclass(frozen=True)
class RobustnessProperty:
    """L-infinity robustness query around one input."""

    center: np.ndarray
    delta: float
    label: int
    clip: bool = False

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", center)
        if self.delta < 0:
            raise ValueError("delta must be >= 0")

    def input_box(self) -> tuple[np.ndarray, np.ndarray]:
        lb = self.center - self.delta
        ub = self.center + self.delta
        if self.clip:
            lb, ub = np.clip(lb, 0.0, 1.0), np.clip(ub, 0.0, 1.0)
        return lb, ub


@dataclass
class LayerBounds:
    """Concrete bounds for one layer; pre-activation ones where they exist."""

    lower: np.ndarray
    upper: np.ndarray
    pre_lower: np.ndarray | None = None
    pre_upper: np.ndarray | None = None


@dataclass
class AbstractElement(LayerBounds):
    """Layer bounds plus symbolic affine bounds over the previous layer.

    ``lower_weights @ x_prev + lower_bias <= x <= upper_weights @ x_prev +
    upper_bias`` holds for every input in the property's box.
    """

    lower_weights: np.ndarray | None = None
    lower_bias: np.ndarray | None = None
    upper_weights: np.ndarray | None = None
    upper_bias: np.ndarray | None = None


@dataclass
class VerificationResult:
    verdict: str
    output_lower: np.ndarray
    output_upper: np.ndarray
    min_margin_lb: float
    method: str
    time_seconds: float


def _check_property(net: Network, prop: RobustnessProperty) -> None:
    if prop.center.shape != (net.in_dim,):
        raise InputShapeError(
            f"property center has shape {prop.center.shape}, "
            f"network expects ({net.in_dim},)"
        )
    if not 0 <= prop.label < net.out_dim:
        raise InputShapeError(f"label {prop.label} out of range for {net.out_dim} classes")


def _affine_interval(W, b, lb, ub):
    pos, neg = np.maximum(W, 0.0), np.minimum(W, 0.0)
    return pos @ lb + neg @ ub + b, pos @ ub + neg @ lb + b


def interval_bounds(net: Network, prop: RobustnessProperty) -> list[LayerBounds]:
    """Per-layer interval propagation; entry 0 is the input box itself."""
    _check_property(net, prop)
    lb, ub = prop.input_box()
    out = [LayerBounds(lb, ub)]
    for layer in net.layers:
        pre_l, pre_u = _affine_interval(layer.weights, layer.biases, lb, ub)
        if layer.activation == IDENTITY:
            lb, ub = pre_l, pre_u
        else:
            lb, ub = np.maximum(pre_l, 0.0), np.maximum(pre_u, 0.0)
        out.append(LayerBounds(lb, ub, pre_l, pre_u))
    return out


def _relu_relaxation(pre_l: np.ndarray, pre_u: np.ndarray):
    """Per-neuron (lambda_low, lambda_up, gamma_up) for y = ReLU(x).

    Stable-active neurons keep the identity, stable-inactive collapse to
    zero. Unstable neurons get the chord upper bound
    y <= u (x - l) / (u - l) and the minimum-area lower bound y >= lam x
    with lam = 1 when u > |l|, else 0 (the tie u == |l| breaks toward 0).
    """
    n = pre_l.shape[0]
    lam_lo = np.zeros(n)
    lam_up = np.zeros(n)
    gamma_up = np.zeros(n)

    active = pre_l >= 0.0
    inactive = pre_u <= 0.0
    unstable = ~(active | inactive)

    lam_lo[active] = 1.0
    lam_up[active] = 1.0
    if unstable.any():
        l, u = pre_l[unstable], pre_u[unstable]
        slope = u / (u - l)
        lam_up[unstable] = slope
        gamma_up[unstable] = -slope * l
        lam_lo[unstable] = (u > -l).astype(float)
    return lam_lo, lam_up, gamma_up


class _PolyDomain:
    """Symbolic transformers per layer plus fused concrete bounds."""

    def __init__(self, net: Network, prop: RobustnessProperty):
        self.net = net
        self.in_lb, self.in_ub = prop.input_box()
        # per layer k >= 1: (Lw, Lb, Uw, Ub) over layer k-1 post-activations
        self.transformers: list[tuple[np.ndarray, ...]] = []
        self.layers: list[AbstractElement] = [
            AbstractElement(self.in_lb, self.in_ub)
        ]
        for layer in net.layers:
            self._push(layer)

    def back_substitute(self, rows: np.ndarray, bias: np.ndarray, depth: int):
        """Concrete (lower, upper) of ``rows @ x_depth + bias`` over the box."""
        lo_w, lo_b = rows, bias.copy()
        up_w, up_b = rows, bias.copy()
        for k in range(depth, 0, -1):
            Lw, Lb, Uw, Ub = self.transformers[k - 1]
            pos, neg = np.maximum(lo_w, 0.0), np.minimum(lo_w, 0.0)
            lo_w, lo_b = pos @ Lw + neg @ Uw, lo_b + pos @ Lb + neg @ Ub
            pos, neg = np.maximum(up_w, 0.0), np.minimum(up_w, 0.0)
            up_w, up_b = pos @ Uw + neg @ Lw, up_b + pos @ Ub + neg @ Lb
        pos, neg = np.maximum(lo_w, 0.0), np.minimum(lo_w, 0.0)
        lower = pos @ self.in_lb + neg @ self.in_ub + lo_b
        pos, neg = np.maximum(up_w, 0.0), np.minimum(up_w, 0.0)
        upper = pos @ self.in_ub + neg @ self.in_lb + up_b
        return lower, upper

    def _push(self, layer) -> None:
        k = len(self.transformers)  # this layer becomes k+1
        prev = self.layers[-1]
        bs_l, bs_u = self.back_substitute(
            layer.weights, layer.biases, depth=k
        ) if k else (None, None)
        iv_l, iv_u = _affine_interval(
            layer.weights, layer.biases, prev.lower, prev.upper
        )
        pre_l = np.maximum(bs_l, iv_l) if bs_l is not None else iv_l
        pre_u = np.minimum(bs_u, iv_u) if bs_u is not None else iv_u

        if layer.activation == IDENTITY:
            Lw, Lb = layer.weights, layer.biases
            Uw, Ub = layer.weights, layer.biases
            post_l, post_u = pre_l, pre_u
        else:
            lam_lo, lam_up, gamma_up = _relu_relaxation(pre_l, pre_u)
            Lw = lam_lo[:, None] * layer.weights
            Lb = lam_lo * layer.biases
            Uw = lam_up[:, None] * layer.weights
            Ub = lam_up * layer.biases + gamma_up
            post_l = np.maximum(pre_l, 0.0)
            post_u = np.maximum(pre_u, 0.0)
        self.transformers.append((Lw, Lb, Uw, Ub))
        self.layers.append(
            AbstractElement(
                post_l, post_u, pre_l, pre_u,
                lower_weights=Lw, lower_bias=Lb,
                upper_weights=Uw, upper_bias=Ub,
            )
        )

    def margin_lower_bounds(self, label: int) -> np.ndarray:
        """Lower bounds of logit_label - logit_i for i != label.

        Folded through the output layer as difference rows, then
        back-substituted; intersected with the sign-split interval bound from
        the (fused) bounds of the last hidden layer.
        """
        out_layer = self.net.layers[-1]
        n_out = out_layer.out_dim
        others = [i for i in range(n_out) if i != label]
        rows = out_layer.weights[label] - out_layer.weights[others]
        bias = out_layer.biases[label] - out_layer.biases[others]
        depth = len(self.net.layers) - 1
        bs_lo, _ = self.back_substitute(rows, bias, depth)
        prev = self.layers[depth]
        iv_lo, _ = _affine_interval(rows, bias, prev.lower, prev.upper)
        return np.maximum(bs_lo, iv_lo)


def polyhedral_bounds(net: Network, prop: RobustnessProperty) -> list[AbstractElement]:
    """DeepPoly-style per-layer bounds; entry 0 is the input box."""
    _check_property(net, prop)
    return _PolyDomain(net, prop).layers


def _interval_margin_lbs(net: Network, prop: RobustnessProperty,
                         bounds: list[LayerBounds]) -> np.ndarray:
    out_layer = net.layers[-1]
    others = [i for i in range(net.out_dim) if i != prop.label]
    rows = out_layer.weights[prop.label] - out_layer.weights[others]
    bias = out_layer.biases[prop.label] - out_layer.biases[others]
    prev = bounds[len(net.layers) - 1]
    lo, _ = _affine_interval(rows, bias, prev.lower, prev.upper)
    return lo


def verify_robustness(net: Network, prop: RobustnessProperty,
                      method: str = POLYHEDRAL) -> VerificationResult:
    """Sound robustness check: ``verified`` iff every margin lower bound > 0."""
    _check_property(net, prop)
    start = time.perf_counter()
    if method == INTERVAL:
        bounds = interval_bounds(net, prop)
        margin_lbs = _interval_margin_lbs(net, prop, bounds)
        out = bounds[-1]
        out_lower, out_upper = out.lower, out.upper
    elif method == POLYHEDRAL:
        domain = _PolyDomain(net, prop)
        margin_lbs = domain.margin_lower_bounds(prop.label)
        out = domain.layers[-1]
        out_lower, out_upper = out.lower, out.upper
    else:
        raise ValueError(f"unknown method {method!r}")
    min_margin = float(margin_lbs.min()) if margin_lbs.size else np.inf
    verdict = VERIFIED if min_margin > 0.0 else UNKNOWN
    elapsed = time.perf_counter() - start
    return VerificationResult(verdict, out_lower, out_upper, min_margin, method, elapsed)
