"""An executable network built from an :class:`~coldcarve.ir.IRModel`."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from ..ir import IRModel, pack_weights, read_ir, total_params, unpack_weights, write_ir
from .layers import KERNELS, init_params


class Network:
    """Layers of ``spec`` in execution order plus their parameters.

    ``params`` maps layer id to that layer's arrays in blob order (weights,
    then biases).  ``training`` switches dropout on.
    """

    def __init__(self, spec: IRModel, params: dict[int, list[np.ndarray]] | None = None,
                 *, seed: int = 0, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.training = False
        self._rng = np.random.default_rng([seed, 2])
        init_rng = np.random.default_rng([seed, 3])
        self.params: dict[int, list[np.ndarray]] = {}
        self.layers = []
        for ls in spec.ordered_layers:
            if params is not None and ls.param_shapes:
                arrays = [np.array(a, dtype=self.dtype) for a in params.get(ls.id, [])]
                shapes = [tuple(a.shape) for a in arrays]
                if shapes != [tuple(s) for s in ls.param_shapes]:
                    raise ShapeMismatch(f"layer {ls.id}: parameters {shapes} do not match "
                                        f"{ls.param_shapes}")
            else:
                arrays = init_params(ls, init_rng, self.dtype)
            if arrays:
                self.params[ls.id] = arrays
            self.layers.append(KERNELS[ls.kind](ls, arrays))
        self.input_grad: np.ndarray | None = None

    def reseed(self, seed: int) -> None:
        """Restart the dropout stream."""
        self._rng = np.random.default_rng([seed, 2])

    # construction helpers

    @classmethod
    def from_blob(cls, spec: IRModel, blob, **kw) -> "Network":
        return cls(spec, unpack_weights(spec, blob), **kw)

    @classmethod
    def load(cls, stem, **kw) -> "Network":
        spec, blob = read_ir(stem)
        return cls.from_blob(spec, blob, **kw)

    def save(self, stem, cli_parameters=None) -> tuple[str, str]:
        return write_ir(self.spec, self.blob(), stem, cli_parameters)

    def blob(self) -> bytes:
        return pack_weights(self.spec, self.params)

    def copy(self, *, seed: int = 0) -> "Network":
        return Network(self.spec, self.params, seed=seed, dtype=self.dtype)

    def parameter_vector(self) -> np.ndarray:
        parts = [a.reshape(-1) for ls in self.spec.ordered_layers for a in self.params.get(ls.id, [])]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=self.dtype)

    def load_vector(self, vec) -> None:
        vec = np.asarray(vec)
        if vec.size != self.n_params:
            raise ShapeMismatch(f"expected {self.n_params} values, got {vec.size}")
        pos = 0
        for ls in self.spec.ordered_layers:
            for a in self.params.get(ls.id, []):
                a[...] = vec[pos:pos + a.size].reshape(a.shape)
                pos += a.size

    @property
    def n_params(self) -> int:
        return total_params(self.spec)

    @property
    def ends_in_softmax(self) -> bool:
        return self.layers[-1].spec.kind == "Softmax"

    # execution

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.spec.input_shape:
            raise ShapeMismatch(f"expected input shape (batch, {self.spec.input_shape}), "
                                f"got {x.shape}")
        return x

    def forward(self, x) -> np.ndarray:
        """Output of the final layer for a batch ``x``."""
        x = self._check(x)
        for layer in self.layers:
            x = layer.forward(x, self.training, self._rng)
        return x

    def backward(self, grad, *, from_logits: bool = False) -> dict[int, list[np.ndarray]]:
        """Back-propagate ``grad`` from the output of the most recent forward.

        With ``from_logits`` the gradient is taken to be with respect to the
        input of the final Softmax, which is skipped.
        """
        g = np.asarray(grad, dtype=self.dtype)
        layers = self.layers
        if from_logits:
            if not self.ends_in_softmax:
                raise ShapeMismatch("from_logits requires a final Softmax layer")
            layers = layers[:-1]
        out_shape = (g.shape[0], *layers[-1].spec.out_shape)
        if g.shape != out_shape:
            raise ShapeMismatch(f"gradient shape {g.shape} does not match output {out_shape}")
        for layer in reversed(layers):
            g = layer.backward(g)
        self.input_grad = g
        return self.grads

    @property
    def grads(self) -> dict[int, list[np.ndarray]]:
        return {layer.spec.id: layer.grads for layer in self.layers if layer.params}

    def predict_proba(self, x, batch: int = 1024) -> np.ndarray:
        training, self.training = self.training, False
        try:
            x = self._check(x)
            return np.concatenate([self.forward(x[i:i + batch])
                                   for i in range(0, max(len(x), 1), batch)])
        finally:
            self.training = training

    def predict(self, x, batch: int = 1024) -> np.ndarray:
        return self.predict_proba(x, batch).argmax(axis=-1)
