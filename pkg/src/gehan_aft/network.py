"""Dense predictor with entity embeddings and hand-written backpropagation.

Each hidden block is ``linear -> batch-norm -> ReLU -> dropout``; the output
layer is a single linear unit without bias, so predictions carry no free
location term (the rank loss cannot identify one).
"""

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

BN_MOMENTUM = 0.1
BN_EPS = 1e-5
EMBED_INIT_STD = 0.01


@dataclass(frozen=True)
class NetworkConfig:
    num_layers: int = 2
    nodes_per_layer: int = 32
    dropout_rate: float = 0.1
    use_batch_norm: bool = True
    embedding_dims: Optional[tuple] = None
    seed: int = 0

    def __post_init__(self):
        if self.num_layers < 0 or self.nodes_per_layer < 1:
            raise ValueError("num_layers must be >= 0 and nodes_per_layer >= 1")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.embedding_dims is not None:
            object.__setattr__(self, "embedding_dims", tuple(int(d) for d in self.embedding_dims))

    def to_dict(self):
        d = asdict(self)
        d["embedding_dims"] = None if self.embedding_dims is None else list(self.embedding_dims)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def default_embedding_dims(cardinalities):
    """Half the number of categories, at least one."""
    return tuple(max(1, c // 2) for c in cardinalities)


class NetworkModel:
    """Predictor ``g(x; theta)`` returning one scalar per row.

    Parameters live in ``params`` (an ordered dict of arrays, keyed by
    name); after :meth:`backward`, ``grads`` holds arrays of matching shape.
    Batch-norm running statistics live in ``buffers``.
    """

    def __init__(self, config, schema):
        self.config = config
        self.schema = schema
        self.n_numeric = len(schema.numeric_names)
        cards = schema.cardinalities
        if len(cards) != len(schema.categorical_names):
            raise ValueError("schema lacks vocabularies for its categorical features")
        dims = config.embedding_dims
        if dims is None:
            dims = default_embedding_dims(cards)
        if len(dims) != len(cards):
            raise ValueError("one embedding dimension per categorical feature expected")
        self.embedding_dims = tuple(dims)

        rng = np.random.default_rng(config.seed)
        self.params = {}
        self.buffers = {}
        for f, (card, dim) in enumerate(zip(cards, self.embedding_dims)):
            # Row ``card`` is reserved for levels unseen at training time.
            self.params[f"embed.{f}"] = rng.normal(0.0, EMBED_INIT_STD, size=(card + 1, dim))
        width = self.n_numeric + sum(self.embedding_dims)
        if width == 0:
            raise ValueError("network needs at least one input feature")
        self.input_width = width
        for layer in range(config.num_layers):
            n_out = config.nodes_per_layer
            limit = np.sqrt(6.0 / width)
            self.params[f"dense.{layer}.weight"] = rng.uniform(-limit, limit, size=(width, n_out))
            self.params[f"dense.{layer}.bias"] = np.zeros(n_out)
            if config.use_batch_norm:
                self.params[f"bn.{layer}.gamma"] = np.ones(n_out)
                self.params[f"bn.{layer}.beta"] = np.zeros(n_out)
                self.buffers[f"bn.{layer}.running_mean"] = np.zeros(n_out)
                self.buffers[f"bn.{layer}.running_var"] = np.ones(n_out)
            width = n_out
        limit = np.sqrt(6.0 / width)
        self.params["output.weight"] = rng.uniform(-limit, limit, size=(width, 1))
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.training = True
        # Set by the trainer or checkpoint loader; checked at prediction time.
        self.standardization = None
        self._dropout_rng = np.random.default_rng([config.seed, 1])
        self._cache = None

    # -- modes ---------------------------------------------------------------

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    @property
    def n_parameters(self):
        return int(sum(v.size for v in self.params.values()))

    # -- forward / backward --------------------------------------------------

    def _inputs(self, x_num, x_cat):
        if x_num is None:
            x_num = np.zeros((np.shape(x_cat)[0], 0))
        x_num = np.asarray(x_num, dtype=np.float64)
        n = x_num.shape[0]
        x_cat = np.zeros((n, 0), dtype=np.int64) if x_cat is None else np.asarray(x_cat, dtype=np.int64)
        if x_num.ndim != 2 or x_cat.ndim != 2:
            raise ValueError("feature blocks must be 2-D (rows x features)")
        if x_num.shape[1] != self.n_numeric or x_cat.shape[1] != len(self.embedding_dims):
            raise ValueError(
                f"batch layout ({x_num.shape[1]} numeric, {x_cat.shape[1]} categorical) does not "
                f"match schema ({self.n_numeric}, {len(self.embedding_dims)})"
            )
        if x_cat.shape[0] != n:
            raise ValueError("numeric and categorical blocks differ in row count")
        parts = [x_num]
        for f in range(x_cat.shape[1]):
            table = self.params[f"embed.{f}"]
            if np.any(x_cat[:, f] < 0) or np.any(x_cat[:, f] >= table.shape[0]):
                raise ValueError(f"category index out of range for feature {f}")
            parts.append(table[x_cat[:, f]])
        return np.hstack(parts), x_cat

    def forward(self, x_num, x_cat=None):
        """Predictions in standardized log-time units, shape (N,)."""
        a, x_cat = self._inputs(x_num, x_cat)
        n = a.shape[0]
        cfg = self.config
        if self.training and cfg.use_batch_norm and cfg.num_layers and n < 2:
            raise ValueError("batch-norm in train mode needs a batch of at least 2")
        cache = {"x_cat": x_cat, "layers": []}
        for layer in range(cfg.num_layers):
            lc = {"input": a}
            h = a @ self.params[f"dense.{layer}.weight"] + self.params[f"dense.{layer}.bias"]
            if cfg.use_batch_norm:
                gamma = self.params[f"bn.{layer}.gamma"]
                beta = self.params[f"bn.{layer}.beta"]
                if self.training:
                    mean = h.mean(axis=0)
                    var = h.var(axis=0)
                    rm = self.buffers[f"bn.{layer}.running_mean"]
                    rv = self.buffers[f"bn.{layer}.running_var"]
                    rm *= 1.0 - BN_MOMENTUM
                    rm += BN_MOMENTUM * mean
                    rv *= 1.0 - BN_MOMENTUM
                    rv += BN_MOMENTUM * var * n / (n - 1)
                else:
                    mean = self.buffers[f"bn.{layer}.running_mean"]
                    var = self.buffers[f"bn.{layer}.running_var"]
                inv_std = 1.0 / np.sqrt(var + BN_EPS)
                xhat = (h - mean) * inv_std
                lc["xhat"], lc["inv_std"] = xhat, inv_std
                h = gamma * xhat + beta
            mask = h > 0
            a = np.where(mask, h, 0.0)
            lc["relu"] = mask
            if self.training and cfg.dropout_rate > 0:
                keep = self._dropout_rng.random(a.shape) >= cfg.dropout_rate
                drop = keep / (1.0 - cfg.dropout_rate)
                a = a * drop
                lc["dropout"] = drop
            cache["layers"].append(lc)
        cache["hidden"] = a
        cache["train"] = self.training
        self._cache = cache
        return (a @ self.params["output.weight"]).ravel()

    __call__ = forward

    def hidden(self, x_num, x_cat=None):
        """Last hidden representation ``W`` feeding the output layer."""
        self.forward(x_num, x_cat)
        return self._cache["hidden"]

    def backward(self, upstream):
        """Accumulate exact gradients of ``sum(upstream * prediction)`` into ``grads``.

        Gradients are overwritten, not summed across calls.
        """
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        cache = self._cache
        hidden = cache["hidden"]
        dy = np.asarray(upstream, dtype=np.float64).reshape(-1, 1)
        if dy.shape[0] != hidden.shape[0]:
            raise ValueError("upstream gradient length does not match the batch")
        cfg = self.config
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        grads["output.weight"] = hidden.T @ dy
        da = dy @ self.params["output.weight"].T
        for layer in range(cfg.num_layers - 1, -1, -1):
            lc = cache["layers"][layer]
            if "dropout" in lc:
                da = da * lc["dropout"]
            dh = np.where(lc["relu"], da, 0.0)
            if cfg.use_batch_norm:
                xhat, inv_std = lc["xhat"], lc["inv_std"]
                grads[f"bn.{layer}.gamma"] = np.sum(dh * xhat, axis=0)
                grads[f"bn.{layer}.beta"] = np.sum(dh, axis=0)
                dxhat = dh * self.params[f"bn.{layer}.gamma"]
                if cache["train"]:
                    n = dxhat.shape[0]
                    dh = inv_std / n * (
                        n * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0)
                    )
                else:
                    dh = dxhat * inv_std
            grads[f"dense.{layer}.weight"] = lc["input"].T @ dh
            grads[f"dense.{layer}.bias"] = dh.sum(axis=0)
            da = dh @ self.params[f"dense.{layer}.weight"].T
        col = self.n_numeric
        x_cat = cache["x_cat"]
        for f, dim in enumerate(self.embedding_dims):
            np.add.at(grads[f"embed.{f}"], x_cat[:, f], da[:, col:col + dim])
            col += dim
        self.grads = grads
        return grads

    # -- state -----------------------------------------------------------------

    def state_dict(self):
        return {
            "params": {k: v.copy() for k, v in self.params.items()},
            "buffers": {k: v.copy() for k, v in self.buffers.items()},
        }

    def load_state_dict(self, state):
        for group, target in (("params", self.params), ("buffers", self.buffers)):
            src = state[group]
            if set(src) != set(target):
                raise ValueError(f"state {group} keys do not match the model")
            for k in target:
                value = np.asarray(src[k], dtype=np.float64).reshape(target[k].shape)
                target[k] = value.copy()
        self._cache = None
