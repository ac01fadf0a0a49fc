"""Bayesian KAN and Bayesian dense layers over a flat variational parameter vector.

All ``mu``/``rho`` values of a model live in two flat arrays. The traversal
order, which is also the order in which standard-normal ``eps`` values are
consumed by a sample-mode draw, is fixed:

* layers in order;
* within a KAN layer: for each output unit ``j``, for each input ``i``, the
  edge's base weight followed by its spline coefficients in ascending order;
  then the ``out_dim`` biases;
* within a dense layer: ``w[j, i]`` row-major, then the ``out_dim`` biases.

A KAN edge computes ``w_base * relu(x) + sum_m c_m * B_m(clamp(x))`` and a KAN
layer sums its edges plus a bias per output, with no node-wise activation.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .splines import KnotVector, basis_and_derivatives, basis_values, build_knots
from .variational import GaussianVariational, PriorSpec, inverse_softplus, kl_terms, softplus

FORMAT_TAG = "bkan-model/1"
PROB_CLAMP = 1e-7
ACTIVATIONS = ("relu", "sigmoid", "identity")


class ModelFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# architecture description


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    width: int
    activation: str = "identity"

    def __post_init__(self):
        if self.kind not in ("kan", "dense"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if int(self.width) != self.width or self.width < 1:
            raise ValueError(f"layer width must be a positive integer, got {self.width}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind == "kan" and self.activation != "identity":
            raise ValueError("KAN layers have no node-wise activation")


@dataclass(frozen=True)
class SplineConfig:
    grid_size: int = 5
    degree: int = 3
    domain: tuple[float, float] = (-2.0, 2.0)

    def knots(self) -> KnotVector:
        return build_knots(self.domain[0], self.domain[1], self.grid_size, self.degree)


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    layers: tuple[LayerSpec, ...]
    spline: SplineConfig = field(default_factory=SplineConfig)
    prior: PriorSpec = field(default_factory=PriorSpec)

    def __post_init__(self):
        if int(self.input_dim) != self.input_dim or self.input_dim < 1:
            raise ValueError(f"input_dim must be a positive integer, got {self.input_dim}")
        if not self.layers:
            raise ValueError("a model needs at least one layer")
        if self.layers[-1].width != 1:
            raise ValueError("the output layer must have width 1 (binary logit)")
        if self.layers[-1].kind == "dense" and self.layers[-1].activation != "identity":
            raise ValueError("the output layer must emit a raw logit (identity activation)")
        object.__setattr__(self, "layers", tuple(self.layers))
        self.spline.knots()  # validates the spline configuration

    @classmethod
    def bkan(cls, input_dim: int, hidden=None, spline=None, prior=None) -> "ModelSpec":
        """KAN layers of widths ``[2n+1, 8, 4]`` then a single-logit KAN layer."""
        hidden = [2 * input_dim + 1, 8, 4] if hidden is None else list(hidden)
        layers = tuple(LayerSpec("kan", w) for w in [*hidden, 1])
        return cls(input_dim, layers, spline or SplineConfig(), prior or PriorSpec())

    @classmethod
    def bayes_mlp(cls, input_dim: int, hidden=None, activation="relu", spline=None, prior=None) -> "ModelSpec":
        """Bayesian dense layers with the same default widths as :meth:`bkan`."""
        hidden = [2 * input_dim + 1, 8, 4] if hidden is None else list(hidden)
        layers = tuple(LayerSpec("dense", w, activation) for w in hidden) + (LayerSpec("dense", 1),)
        return cls(input_dim, layers, spline or SplineConfig(), prior or PriorSpec())

    @property
    def dims(self) -> list[tuple[int, int]]:
        widths = [self.input_dim] + [layer.width for layer in self.layers]
        return list(zip(widths[:-1], widths[1:]))

    @property
    def param_count(self) -> int:
        n_basis = self.spline.grid_size + self.spline.degree
        total = 0
        for layer, (n_in, n_out) in zip(self.layers, self.dims):
            if layer.kind == "kan":
                total += n_out * n_in * (n_basis + 1) + n_out
            else:
                total += n_out * n_in + n_out
        return total

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "layers": [asdict(layer) for layer in self.layers],
            "spline": {
                "grid_size": self.spline.grid_size,
                "degree": self.spline.degree,
                "domain": list(self.spline.domain),
            },
            "prior": {"mu0": self.prior.mu0, "sigma0": self.prior.sigma0},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        spline = d["spline"]
        return cls(
            input_dim=d["input_dim"],
            layers=tuple(LayerSpec(**layer) for layer in d["layers"]),
            spline=SplineConfig(spline["grid_size"], spline["degree"], tuple(spline["domain"])),
            prior=PriorSpec(**d["prior"]),
        )


# ---------------------------------------------------------------------------
# layers


@dataclass(frozen=True, eq=False)
class BayesKanLayer:
    in_dim: int
    out_dim: int
    knots: KnotVector
    offset: int

    kind = "kan"

    @property
    def n_coef(self) -> int:
        return self.knots.n_basis + 1

    @property
    def n_params(self) -> int:
        return self.out_dim * self.in_dim * self.n_coef + self.out_dim

    def split(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n_w = self.out_dim * self.in_dim * self.n_coef
        return theta[:n_w].reshape(self.out_dim, self.in_dim, self.n_coef), theta[n_w:]

    def forward(self, x: np.ndarray, theta: np.ndarray, need_input_grad: bool = True):
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"KAN layer expects {self.in_dim} inputs, got {x.shape[-1]}")
        weights, bias = self.split(theta)
        if need_input_grad:
            basis, dbasis = basis_and_derivatives(x, self.knots)
        else:
            basis, dbasis = basis_values(x, self.knots), None
        feats = np.concatenate([np.maximum(x, 0.0)[..., None], basis], axis=-1)
        flat = feats.reshape(len(x), -1)
        out = flat @ weights.reshape(self.out_dim, -1).T + bias
        return out, (x, flat, dbasis)

    def backward(self, cache, dout: np.ndarray, theta: np.ndarray):
        x, flat, dbasis = cache
        weights, _ = self.split(theta)
        w_flat = weights.reshape(self.out_dim, -1)
        grad = np.concatenate([(dout.T @ flat).ravel(), dout.sum(axis=0)])
        if dbasis is None:
            return None, grad
        dfeat = (dout @ w_flat).reshape(len(x), self.in_dim, self.n_coef)
        dx = dfeat[..., 0] * (x > 0) + np.einsum("nim,nim->ni", dfeat[..., 1:], dbasis)
        return dx, grad


@dataclass(frozen=True, eq=False)
class BayesDenseLayer:
    in_dim: int
    out_dim: int
    activation: str
    offset: int

    kind = "dense"

    @property
    def n_params(self) -> int:
        return self.out_dim * self.in_dim + self.out_dim

    def split(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n_w = self.out_dim * self.in_dim
        return theta[:n_w].reshape(self.out_dim, self.in_dim), theta[n_w:]

    def forward(self, z: np.ndarray, theta: np.ndarray, need_input_grad: bool = True):
        if z.shape[-1] != self.in_dim:
            raise ValueError(f"dense layer expects {self.in_dim} inputs, got {z.shape[-1]}")
        weights, bias = self.split(theta)
        pre = z @ weights.T + bias
        if self.activation == "relu":
            out = np.maximum(pre, 0.0)
        elif self.activation == "sigmoid":
            out = expit(pre)
        else:
            out = pre
        return out, (z, pre, out, need_input_grad)

    def backward(self, cache, dout: np.ndarray, theta: np.ndarray):
        z, pre, out, need_input_grad = cache
        if self.activation == "relu":
            dpre = dout * (pre > 0)
        elif self.activation == "sigmoid":
            dpre = dout * out * (1.0 - out)
        else:
            dpre = dout
        weights, _ = self.split(theta)
        grad = np.concatenate([(dpre.T @ z).ravel(), dpre.sum(axis=0)])
        return (dpre @ weights if need_input_grad else None), grad


@dataclass(frozen=True, eq=False)
class EdgeFunction:
    """View of one edge's parameters: a base weight and ``G + k`` spline coefficients."""

    base_weight: GaussianVariational
    coeffs: list[GaussianVariational]
    knots: KnotVector
    offset: int


@dataclass(frozen=True, eq=False)
class ParameterDraw:
    """One realized value per variational parameter, with the ``eps`` that produced it."""

    values: np.ndarray
    eps: np.ndarray


# ---------------------------------------------------------------------------
# the model


class BayesKanModel:
    def __init__(self, spec: ModelSpec, mu, rho, metadata: dict | None = None):
        self.spec = spec
        self.knots = spec.spline.knots()
        self.layers = []
        offset = 0
        for layer_spec, (n_in, n_out) in zip(spec.layers, spec.dims):
            if layer_spec.kind == "kan":
                layer = BayesKanLayer(n_in, n_out, self.knots, offset)
            else:
                layer = BayesDenseLayer(n_in, n_out, layer_spec.activation, offset)
            self.layers.append(layer)
            offset += layer.n_params
        self.mu = np.array(mu, dtype=float)
        self.rho = np.array(rho, dtype=float)
        if self.mu.shape != (offset,) or self.rho.shape != (offset,):
            raise ValueError(f"expected {offset} parameters, got mu{self.mu.shape} rho{self.rho.shape}")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.rho))):
            raise ValueError("variational parameters must be finite")
        self.metadata = dict(metadata or {})

    @classmethod
    def initialize(cls, spec: ModelSpec, rng: np.random.Generator, sigma_init: float = 0.05,
                   metadata: dict | None = None) -> "BayesKanModel":
        """Means uniform on ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``; every scale set to ``sigma_init``."""
        radius = []
        n_basis = spec.spline.grid_size + spec.spline.degree
        for layer, (n_in, n_out) in zip(spec.layers, spec.dims):
            per_unit = n_in * (n_basis + 1) if layer.kind == "kan" else n_in
            radius.append(np.full(n_out * per_unit + n_out, 1.0 / math.sqrt(n_in)))
        radius = np.concatenate(radius)
        mu = rng.uniform(-1.0, 1.0, size=radius.size) * radius
        rho = np.full(radius.size, float(inverse_softplus(sigma_init)))
        return cls(spec, mu, rho, metadata)

    @property
    def n_params(self) -> int:
        return self.mu.size

    @property
    def sigma(self) -> np.ndarray:
        return softplus(self.rho)

    def copy(self) -> "BayesKanModel":
        return BayesKanModel(self.spec, self.mu.copy(), self.rho.copy(), dict(self.metadata))

    def param(self, index: int) -> GaussianVariational:
        return GaussianVariational(float(self.mu[index]), float(self.rho[index]))

    # draws ---------------------------------------------------------------

    def draw(self, eps: np.ndarray) -> ParameterDraw:
        eps = np.asarray(eps, dtype=float)
        if eps.shape != self.mu.shape:
            raise ValueError(f"need {self.n_params} eps values, got {eps.shape}")
        return ParameterDraw(self.mu + self.sigma * eps, eps)

    def mean_draw(self) -> ParameterDraw:
        return ParameterDraw(self.mu.copy(), np.zeros_like(self.mu))

    def sample_draw(self, rng: np.random.Generator) -> ParameterDraw:
        return self.draw(rng.standard_normal(self.n_params))

    # forward / backward --------------------------------------------------

    def _theta(self, layer, values: np.ndarray) -> np.ndarray:
        return values[layer.offset : layer.offset + layer.n_params]

    def logits(self, X: np.ndarray, draw: ParameterDraw, keep_cache: bool = False):
        h = np.atleast_2d(np.asarray(X, dtype=float))
        if h.shape[1] != self.spec.input_dim:
            raise ValueError(f"model expects {self.spec.input_dim} features, got {h.shape[1]}")
        caches = []
        for idx, layer in enumerate(self.layers):
            h, cache = layer.forward(h, self._theta(layer, draw.values), need_input_grad=keep_cache and idx > 0)
            caches.append(cache)
        out = h[:, 0]
        return (out, caches) if keep_cache else out

    def backprop(self, caches, dlogits: np.ndarray, draw: ParameterDraw) -> np.ndarray:
        """Gradient of a scalar with respect to every drawn parameter value."""
        grad = np.empty(self.n_params)
        dh = dlogits[:, None]
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dh, g = layer.backward(cache, dh, self._theta(layer, draw.values))
            grad[layer.offset : layer.offset + layer.n_params] = g
        return grad

    def kl(self) -> float:
        return float(np.sum(kl_terms(self.mu, self.rho, self.spec.prior)))

    # inspection ----------------------------------------------------------

    def edge(self, layer_idx: int, out_idx: int, in_idx: int) -> EdgeFunction:
        layer = self.layers[layer_idx]
        if layer.kind != "kan":
            raise ValueError(f"layer {layer_idx} is a dense layer and has no spline edges")
        if not (0 <= out_idx < layer.out_dim and 0 <= in_idx < layer.in_dim):
            raise IndexError(f"edge ({out_idx}, {in_idx}) outside a {layer.out_dim}x{layer.in_dim} layer")
        start = layer.offset + (out_idx * layer.in_dim + in_idx) * layer.n_coef
        params = [self.param(start + c) for c in range(layer.n_coef)]
        return EdgeFunction(params[0], params[1:], self.knots, start)

    # serialization -------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "format": FORMAT_TAG,
            "spec": self.spec.to_dict(),
            "knots": self.knots.knots.tolist(),
            "mu": self.mu.tolist(),
            "rho": self.rho.tolist(),
            "metadata": self.metadata,
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "BayesKanModel":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"model file is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict) or doc.get("format") != FORMAT_TAG:
            raise ModelFormatError(f"not a {FORMAT_TAG} document")
        try:
            spec = ModelSpec.from_dict(doc["spec"])
            return cls(spec, doc["mu"], doc["rho"], doc.get("metadata"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"malformed model document: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "BayesKanModel":
        return cls.from_json(Path(path).read_text())


# ---------------------------------------------------------------------------
# functional surface


def edge_eval(edge: EdgeFunction, x, draw: ParameterDraw):
    n_coef = len(edge.coeffs) + 1
    values = draw.values[edge.offset : edge.offset + n_coef]
    x = np.asarray(x, dtype=float)
    return values[0] * np.maximum(x, 0.0) + basis_values(x, edge.knots) @ values[1:]


def kan_layer_forward(layer: BayesKanLayer, x, draw: ParameterDraw) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out, _ = layer.forward(np.atleast_2d(x), draw.values[layer.offset : layer.offset + layer.n_params], False)
    return out[0] if x.ndim == 1 else out


def dense_layer_forward(layer: BayesDenseLayer, z, draw: ParameterDraw) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out, _ = layer.forward(np.atleast_2d(z), draw.values[layer.offset : layer.offset + layer.n_params], False)
    return out[0] if z.ndim == 1 else out


def model_forward(m: BayesKanModel, x, rng: np.random.Generator | None = None):
    """Logit(s) for ``x``: mean mode when ``rng`` is None, otherwise one sampled draw."""
    draw = m.mean_draw() if rng is None else m.sample_draw(rng)
    x = np.asarray(x, dtype=float)
    out = m.logits(x, draw)
    return float(out[0]) if x.ndim == 1 else out


def clamp_proba(p):
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def predict_proba(m: BayesKanModel, x, rng: np.random.Generator | None = None):
    logit = model_forward(m, x, rng)
    p = clamp_proba(expit(logit))
    return float(p) if np.ndim(p) == 0 else p


def model_kl(m: BayesKanModel) -> float:
    return m.kl()
