"""
Deep fully connected network

N fully connected hidden layers of K neurons, a dropout layer between the last
hidden layer and a two-logit output, and a logistic head:

    P(t=1|x) = sigma(z1 - z0),  P(t=0|x) = 1 - P(t=1|x)

Challenges enter the network as +-1 vectors (bit 0 -> -1). Training minimizes
cross entropy with Adam (or plain mini-batch gradient descent) and stops when
the full training-set accuracy stops moving at the 4th decimal digit.

Contains:
- MlpConfig, MlpModel, TrainTrace
- count_weights(), count_biases(), build_mlp()
- forward(), predict_proba(), loss_and_gradients()
- train_mlp(), train_on_arrays(), accuracy()
- save_model(), load_model(), write_trace()
"""

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from ptlibs.ptprinthelper import ptprint
from scipy.special import expit

from .crp import CrpDataset
from .errors import DimensionError, InvalidParameterError, TrainingDivergedError
from .seeds import derive_seed

MODEL_FORMAT_VERSION = 1
EVAL_CHUNK = 8192

PLATEAU = "plateau"
MAX_ITERATIONS = "max_iterations"

ACTIVATIONS = ("relu", "tanh", "sigmoid")
OPTIMIZERS = ("adam", "sgd")
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8


@dataclass(frozen=True)
class MlpConfig:
    """
    Network topology and training regimen.

    layers is N (fully connected hidden layers), neurons is K (width of each).
    One iteration is one mini-batch update; the plateau rule is checked every
    checkpoint_every iterations.
    """
    m: int
    layers: int = 4
    neurons: int = 256
    dropout_rate: float = 0.2
    learning_rate: float = 1e-4
    batch_size: int = 256
    max_iterations: int = 1_000_000
    checkpoint_every: int = 1000
    stop_window: int = 5
    stop_digits: int = 4
    activation: str = "relu"
    optimizer: str = "adam"
    dtype: str = "float32"
    seed: int = 0

    def validate(self) -> None:
        for name in ("m", "layers", "neurons", "batch_size", "max_iterations", "checkpoint_every", "stop_window"):
            if getattr(self, name) < 1:
                raise InvalidParameterError(name, f"must be >= 1, got {getattr(self, name)}")
        if not 0 <= self.dropout_rate < 1:
            raise InvalidParameterError("dropout_rate", f"must lie in [0, 1), got {self.dropout_rate}")
        if not self.learning_rate > 0:
            raise InvalidParameterError("learning_rate", f"must be positive, got {self.learning_rate}")
        if self.activation not in ACTIVATIONS:
            raise InvalidParameterError("activation", f"expected one of {', '.join(ACTIVATIONS)}")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidParameterError("optimizer", f"expected one of {', '.join(OPTIMIZERS)}")
        if self.dtype not in ("float32", "float64"):
            raise InvalidParameterError("dtype", "expected float32 or float64")

    @property
    def N(self) -> int:
        return self.layers

    @property
    def K(self) -> int:
        return self.neurons


@dataclass(eq=False)
class MlpModel:
    weights: list
    biases: list
    config: MlpConfig
    trained_iterations: int = 0

    def weight_count(self) -> int:
        return sum(w.size for w in self.weights)

    def bias_count(self) -> int:
        return sum(b.size for b in self.biases)

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        self.config, self.trained_iterations)


@dataclass
class TrainTrace:
    checkpoints: list = field(default_factory=list)
    stop_reason: str = MAX_ITERATIONS

    @property
    def iterations(self) -> int:
        return self.checkpoints[-1][0] if self.checkpoints else 0

    @property
    def final_loss(self) -> float:
        return self.checkpoints[-1][1] if self.checkpoints else float("nan")

    @property
    def final_accuracy(self) -> float:
        return self.checkpoints[-1][2] if self.checkpoints else float("nan")


def count_weights(cfg: MlpConfig) -> int:
    """(m x K) + (N - 1) x K^2 + (K x 2); biases are counted by count_biases()"""
    return cfg.m * cfg.neurons + (cfg.layers - 1) * cfg.neurons ** 2 + cfg.neurons * 2


def count_biases(cfg: MlpConfig) -> int:
    return cfg.layers * cfg.neurons + 2


def build_mlp(cfg: MlpConfig, zero_init: bool = False) -> MlpModel:
    """
    Builds the network with variance-scaled normal weights (std = sqrt(2 / fan_in))
    drawn from cfg.seed; zero_init gives the all-zero network.
    """
    cfg.validate()
    dtype = np.dtype(cfg.dtype)
    rng = np.random.default_rng(derive_seed(cfg.seed, "init"))
    shapes = [(cfg.m, cfg.neurons)] + [(cfg.neurons, cfg.neurons)] * (cfg.layers - 1) + [(cfg.neurons, 2)]
    weights, biases = [], []
    for fan_in, fan_out in shapes:
        if zero_init:
            weights.append(np.zeros((fan_in, fan_out), dtype=dtype))
        else:
            weights.append((rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpModel(weights, biases, cfg)


def encode_challenges(challenges, dtype="float64") -> np.ndarray:
    """0 -> -1, 1 -> +1"""
    return (2.0 * np.asarray(challenges, dtype=dtype) - 1.0).astype(dtype, copy=False)


def _activate(name: str, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(a, 0)
    if name == "tanh":
        return np.tanh(a)
    return expit(a)


def _activation_slope(name: str, a: np.ndarray, h: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (a > 0).astype(a.dtype)
    if name == "tanh":
        return 1 - h * h
    return h * (1 - h)


def _forward_pass(model: MlpModel, x: np.ndarray, train_mode: bool, rng: Optional[np.random.Generator]):
    cfg = model.config
    if x.ndim != 2 or x.shape[1] != cfg.m:
        raise DimensionError(cfg.m, x.shape[-1], what="network input")
    hidden = [x]
    pre = []
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a = hidden[-1] @ w + b
        pre.append(a)
        hidden.append(_activate(cfg.activation, a))

    mask = None
    top = hidden[-1]
    if train_mode and cfg.dropout_rate > 0:
        rng = rng if rng is not None else np.random.default_rng(derive_seed(cfg.seed, "dropout"))
        keep = 1.0 - cfg.dropout_rate
        mask = ((rng.random(top.shape) < keep) / keep).astype(top.dtype)
        top = top * mask
    logits = top @ model.weights[-1] + model.biases[-1]
    z = logits[:, 1] - logits[:, 0]
    return z, (hidden, pre, mask, top)


def predict_proba(model: MlpModel, x, train_mode: bool = False,
                  rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """P(t=1|x) for already encoded inputs"""
    x = np.asarray(x, dtype=model.weights[0].dtype)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if train_mode:
        return expit(_forward_pass(model, x, True, rng)[0])
    out = np.empty(x.shape[0], dtype=np.float64)
    for start in range(0, x.shape[0], EVAL_CHUNK):
        out[start:start + EVAL_CHUNK] = expit(_forward_pass(model, x[start:start + EVAL_CHUNK], False, None)[0])
    return out


def forward(model: MlpModel, challenges, train_mode: bool = False,
            rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """P(t=1|x) for a batch of 0/1 challenges; dropout only acts when train_mode is set"""
    challenges = np.asarray(challenges)
    if challenges.ndim == 1:
        challenges = challenges[np.newaxis, :]
    if challenges.shape[1] != model.config.m:
        raise DimensionError(model.config.m, challenges.shape[1])
    return predict_proba(model, encode_challenges(challenges, model.weights[0].dtype), train_mode, rng)


def loss_and_gradients(model: MlpModel, x, y, train_mode: bool = False,
                       rng: Optional[np.random.Generator] = None) -> tuple[float, list, list]:
    """
    Mean cross entropy of encoded inputs x against 0/1 labels y, with the
    gradients of every weight matrix and bias vector.
    """
    cfg = model.config
    dtype = model.weights[0].dtype
    x = np.asarray(x, dtype=dtype)
    y = np.asarray(y, dtype=dtype)
    n = x.shape[0]
    z, (hidden, pre, mask, top) = _forward_pass(model, x, train_mode, rng)

    loss = float(np.mean(np.logaddexp(0, z) - y * z))
    dz = (expit(z) - y) / n
    dlogits = np.column_stack([-dz, dz])

    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.biases)
    grad_w[-1] = top.T @ dlogits
    grad_b[-1] = dlogits.sum(axis=0)
    dh = dlogits @ model.weights[-1].T
    if mask is not None:
        dh = dh * mask
    for layer in range(cfg.layers - 1, -1, -1):
        da = dh * _activation_slope(cfg.activation, pre[layer], hidden[layer + 1])
        grad_w[layer] = hidden[layer].T @ da
        grad_b[layer] = da.sum(axis=0)
        if layer:
            dh = da @ model.weights[layer].T
    return loss, grad_w, grad_b


class _Adam:
    def __init__(self, params: list, learning_rate: float):
        self.params = params
        self.learning_rate = learning_rate
        self.first = [np.zeros_like(p) for p in params]
        self.second = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list) -> None:
        self.t += 1
        correction1 = 1 - ADAM_BETA1 ** self.t
        correction2 = 1 - ADAM_BETA2 ** self.t
        for p, g, m1, m2 in zip(self.params, grads, self.first, self.second):
            m1 *= ADAM_BETA1
            m1 += (1 - ADAM_BETA1) * g
            m2 *= ADAM_BETA2
            m2 += (1 - ADAM_BETA2) * g * g
            p -= self.learning_rate * (m1 / correction1) / (np.sqrt(m2 / correction2) + ADAM_EPSILON)


class _Sgd:
    def __init__(self, params: list, learning_rate: float):
        self.params = params
        self.learning_rate = learning_rate

    def step(self, grads: list) -> None:
        for p, g in zip(self.params, grads):
            p -= self.learning_rate * g


def _full_loss_and_accuracy(model: MlpModel, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    total, correct = 0.0, 0
    for start in range(0, x.shape[0], EVAL_CHUNK):
        z = _forward_pass(model, x[start:start + EVAL_CHUNK], False, None)[0].astype(np.float64)
        labels = y[start:start + EVAL_CHUNK]
        total += float(np.sum(np.logaddexp(0, z) - labels * z))
        correct += int(np.count_nonzero((z >= 0) == (labels == 1)))
    return total / x.shape[0], correct / x.shape[0]


def train_on_arrays(model: MlpModel, x, y, cfg: Optional[MlpConfig] = None,
                    verbose: bool = False) -> tuple[MlpModel, TrainTrace]:
    """
    Trains a copy of the model on encoded inputs x and 0/1 labels y.

    Mini-batches come from a fresh seeded permutation every pass over the data.
    Every checkpoint_every iterations the full training set is scored; training
    stops once stop_window consecutive checkpoints agree on the accuracy rounded
    to stop_digits decimals, or after max_iterations.
    """
    cfg = cfg or model.config
    cfg.validate()
    x = np.asarray(x, dtype=model.weights[0].dtype)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        raise InvalidParameterError("train", "training set is empty")
    if np.any((y != 0) & (y != 1)):
        raise InvalidParameterError("train", "labels must be 0 or 1")
    if x.shape[1] != model.config.m:
        raise DimensionError(model.config.m, x.shape[1], what="training input")

    trained = model.copy()
    params = trained.weights + trained.biases
    optimizer = (_Adam if cfg.optimizer == "adam" else _Sgd)(params, cfg.learning_rate)
    batch_rng = np.random.default_rng(derive_seed(cfg.seed, "batches"))
    dropout_rng = np.random.default_rng(derive_seed(cfg.seed, "dropout"))
    batch = min(cfg.batch_size, n)
    y_batch = y.astype(x.dtype)

    trace = TrainTrace()
    order, position = batch_rng.permutation(n), 0
    last_rounded, agreeing = None, 0
    iteration = 0
    for iteration in range(1, cfg.max_iterations + 1):
        if position + batch > n:
            order, position = batch_rng.permutation(n), 0
        index = order[position:position + batch]
        position += batch

        loss, grad_w, grad_b = loss_and_gradients(trained, x[index], y_batch[index], train_mode=True, rng=dropout_rng)
        if not np.isfinite(loss):
            raise TrainingDivergedError(iteration, loss)
        optimizer.step(grad_w + grad_b)

        if iteration % cfg.checkpoint_every and iteration != cfg.max_iterations:
            continue
        full_loss, full_accuracy = _full_loss_and_accuracy(trained, x, y)
        if not np.isfinite(full_loss):
            raise TrainingDivergedError(iteration, full_loss)
        trace.checkpoints.append((iteration, full_loss, full_accuracy))
        ptprint(f"Iteration {iteration}: loss={full_loss:.6f} accuracy={full_accuracy:.4f}",
                "ADDITIONS", verbose, indent=8, colortext=True)

        rounded = round(full_accuracy, cfg.stop_digits)
        agreeing = agreeing + 1 if rounded == last_rounded else 1
        last_rounded = rounded
        if agreeing >= cfg.stop_window:
            trace.stop_reason = PLATEAU
            break

    trained.trained_iterations = model.trained_iterations + iteration
    return trained, trace


def train_mlp(model: MlpModel, train: CrpDataset, cfg: Optional[MlpConfig] = None,
              verbose: bool = False) -> tuple[MlpModel, TrainTrace]:
    if len(train) == 0:
        raise InvalidParameterError("train", "training set is empty")
    x = encode_challenges(train.challenges, model.weights[0].dtype)
    return train_on_arrays(model, x, train.responses, cfg, verbose)


def accuracy(model: MlpModel, test: CrpDataset) -> float:
    """Fraction of test CRPs whose response matches P(t=1|x) >= 0.5"""
    if len(test) == 0:
        raise InvalidParameterError("test", "test set is empty")
    predictions = forward(model, test.challenges) >= 0.5
    return float(np.count_nonzero(predictions == (test.responses == 1)) / len(test))


def save_model(model: MlpModel, path) -> None:
    arrays = {f"w{i}": w for i, w in enumerate(model.weights)}
    arrays.update({f"b{i}": b for i, b in enumerate(model.biases)})
    header = {"format_version": MODEL_FORMAT_VERSION, "config": asdict(model.config),
              "trained_iterations": model.trained_iterations}
    with open(path, "wb") as f:
        np.savez(f, header=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_model(path) -> MlpModel:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format_version") != MODEL_FORMAT_VERSION:
            raise InvalidParameterError("model", f"unsupported model format {header.get('format_version')}")
        cfg = MlpConfig(**header["config"])
        weights = [data[f"w{i}"] for i in range(cfg.layers + 1)]
        biases = [data[f"b{i}"] for i in range(cfg.layers + 1)]
    return MlpModel(weights, biases, cfg, int(header["trained_iterations"]))


def write_trace(trace: TrainTrace, path) -> None:
    with open(Path(path), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "loss", "accuracy"])
        for iteration, loss, acc in trace.checkpoints:
            writer.writerow([iteration, repr(loss), repr(acc)])
