"""Small fully connected Q-network trained by plain SGD."""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import DomainError, ShapeError, TrainingError

logger = logging.getLogger(__name__)


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def relu_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, 1.0, 0.0)


class QNetwork:
    """Feedforward approximator: ReLU hidden layers, linear output.

    Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``X`` of
    shape ``(B, fan_in)`` maps to ``X @ W + b``.
    """

    def __init__(
        self,
        layer_sizes: Sequence[int],
        learning_rate: float = 0.001,
        rng: Optional[np.random.Generator] = None,
        grad_clip: Optional[float] = None,
    ):
        """
        Initialize weights uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)].

        Args:
            layer_sizes: Input size, hidden sizes, output size
            learning_rate: SGD step size
            rng: Seeded random source for the initialization
            grad_clip: Elementwise gradient clip, None to disable
        """
        if len(layer_sizes) < 2 or any(int(s) <= 0 for s in layer_sizes):
            raise ShapeError(f"invalid layer sizes {list(layer_sizes)}")
        if learning_rate <= 0:
            raise DomainError("learning_rate must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.layer_sizes = [int(s) for s in layer_sizes]
        self.learning_rate = float(learning_rate)
        self.grad_clip = grad_clip
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim not in (1, 2) or x.shape[-1] != self.n_inputs:
            raise ShapeError(f"expected input of length {self.n_inputs}, got shape {x.shape}")
        return x

    def _forward_cache(self, x: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        activations = [x]
        pre_activations = []
        a = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            pre_activations.append(z)
            a = z if i == last else relu(z)
            activations.append(a)
        return activations, pre_activations

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Q-values for one input vector or a batch of rows."""
        activations, _ = self._forward_cache(self._check_input(x))
        return activations[-1]

    def gradients(
        self, x: np.ndarray, action: int, target_value: float
    ) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
        """
        Loss (target - Q(x)[action])^2 and its unclipped gradients.

        Only the selected action's output carries an error signal.
        """
        x = self._check_input(x)
        if x.ndim != 1:
            raise ShapeError("gradients take a single input vector")
        if not 0 <= action < self.n_outputs:
            raise DomainError(f"action {action} outside 0..{self.n_outputs - 1}")
        activations, pre_activations = self._forward_cache(x)
        y = activations[-1]
        error = float(y[action] - target_value)
        loss = error * error

        delta = np.zeros(self.n_outputs)
        delta[action] = 2.0 * error
        grads_w: List[np.ndarray] = [np.empty(0)] * len(self.weights)
        grads_b: List[np.ndarray] = [np.empty(0)] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = np.outer(activations[i], delta)
            grads_b[i] = delta.copy()
            if i > 0:
                delta = (self.weights[i] @ delta) * relu_grad(pre_activations[i - 1])
        return loss, grads_w, grads_b

    def train_step(self, x: np.ndarray, action: int, target_value: float) -> float:
        """
        One SGD step on (target - Q(x)[action])^2.

        Returns:
            float: The loss before the step
        """
        if not np.isfinite(target_value):
            raise TrainingError(f"non-finite target value {target_value}")
        loss, grads_w, grads_b = self.gradients(x, action, target_value)
        if loss == 0.0:
            return loss
        lr = self.learning_rate
        clip = self.grad_clip
        for i in range(len(self.weights)):
            gw, gb = grads_w[i], grads_b[i]
            if clip is not None:
                gw = np.clip(gw, -clip, clip)
                gb = np.clip(gb, -clip, clip)
            self.weights[i] -= lr * gw
            self.biases[i] -= lr * gb
        return loss

    def copy(self) -> "QNetwork":
        clone = QNetwork.__new__(QNetwork)
        clone.layer_sizes = list(self.layer_sizes)
        clone.learning_rate = self.learning_rate
        clone.grad_clip = self.grad_clip
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def load_from(self, other: "QNetwork") -> None:
        """Overwrite parameters in place with a copy of ``other``'s."""
        if other.layer_sizes != self.layer_sizes:
            raise ShapeError(f"layer sizes differ: {other.layer_sizes} vs {self.layer_sizes}")
        self.weights = [w.copy() for w in other.weights]
        self.biases = [b.copy() for b in other.biases]

    def equals(self, other: "QNetwork") -> bool:
        return self.layer_sizes == other.layer_sizes and all(
            np.array_equal(a, b)
            for a, b in zip(self.weights + self.biases, other.weights + other.biases)
        )

    def is_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.weights + self.biases)


def forward(net: QNetwork, x: np.ndarray) -> np.ndarray:
    return net.forward(x)


def train_step(net: QNetwork, x: np.ndarray, action: int, target_value: float) -> float:
    return net.train_step(x, action, target_value)


def sync_target(source: QNetwork) -> QNetwork:
    """Independent value copy of ``source`` (the delayed target network)."""
    return source.copy()


def finite_difference_check(
    net: QNetwork,
    x: np.ndarray,
    action: int,
    target_value: float,
    eps: float = 1e-6,
    tolerance: float = 1e-5,
) -> Tuple[bool, float]:
    """
    Compare backprop gradients with central differences on every parameter.

    Returns:
        Tuple[bool, float]: Pass flag and the worst relative error seen
    """
    _, grads_w, grads_b = net.gradients(x, action, target_value)
    scratch = net.copy()
    worst = 0.0
    for params, grads in ((scratch.weights, grads_w), (scratch.biases, grads_b)):
        for p, g in zip(params, grads):
            flat = p.reshape(-1)
            g_flat = g.reshape(-1)
            for k in range(flat.size):
                original = flat[k]
                flat[k] = original + eps
                plus = (scratch.forward(x)[action] - target_value) ** 2
                flat[k] = original - eps
                minus = (scratch.forward(x)[action] - target_value) ** 2
                flat[k] = original
                numeric = (plus - minus) / (2.0 * eps)
                scale = max(abs(numeric), abs(g_flat[k]), 1e-4)
                worst = max(worst, abs(numeric - g_flat[k]) / scale)
    return worst <= tolerance, worst
