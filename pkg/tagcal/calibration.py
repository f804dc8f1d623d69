"""Feature assembly and the single-hidden-layer calibration network.

The network maps one record's raw measurements to a 2-D position. It is
trained by Levenberg-Marquardt on the Gauss-Newton approximation of
``F = beta * E_D + alpha * E_W`` with the hyperparameters re-estimated after
every accepted step (Bayesian regularisation). Inputs and outputs are min-max
scaled to [-1, 1] using the training data only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Final, Iterable, Optional, Sequence, Tuple

import numpy as np

from .core import (
    DEFAULT_SMOOTHING_WINDOW,
    BleRecord,
    Point2,
    Record,
    Session,
    Technology,
    UwbRecord,
    moving_average,
)

logger = logging.getLogger(__name__)

HIDDEN_NODES: Final[int] = 50
N_OUTPUTS: Final[int] = 2
FEATURE_SIZES: Final[dict[Technology, int]] = {Technology.BLE: 16, Technology.UWB: 12}
HYPERPARAMETER_CAP: Final[float] = 1e10
MODEL_MAGIC: Final[str] = "tagcal-model"
MODEL_VERSION: Final[int] = 1
_CHUNK: Final[int] = 1024


class TrainingError(RuntimeError):
    """Raised when Levenberg-Marquardt training cannot continue."""


class ModelFormatError(ValueError):
    """Raised when a saved model file cannot be parsed."""


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    technology: Technology

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        expected = FEATURE_SIZES[self.technology]
        if values.shape != (expected,):
            raise ValueError(
                f"{self.technology.value} features need {expected} values, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("Feature values must be finite")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)


def assemble_features(record: Record) -> FeatureVector:
    """BLE: rssi1..8 then aoa1..8. UWB: cir1..4, psa1..4, then d1..4."""

    if isinstance(record, BleRecord):
        return FeatureVector(
            np.array([*record.rssi, *record.aoa], dtype=float), Technology.BLE
        )
    if isinstance(record, UwbRecord):
        return FeatureVector(
            np.array([*record.cir, *record.psa, *record.dist], dtype=float),
            Technology.UWB,
        )
    raise TypeError(f"Unsupported record type: {type(record).__name__}")


def feature_matrix(records: Iterable[Record]) -> np.ndarray:
    rows = [assemble_features(record).values for record in records]
    if not rows:
        return np.empty((0, 0))
    return np.vstack(rows)


# -- parameter vector layout: W1, b1, W2, b2 ---------------------------------


def n_weights(n_inputs: int, n_hidden: int = HIDDEN_NODES) -> int:
    return n_hidden * n_inputs + n_hidden + N_OUTPUTS * n_hidden + N_OUTPUTS


def unpack(
    params: np.ndarray, n_inputs: int, n_hidden: int = HIDDEN_NODES
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    i = n_hidden * n_inputs
    w1 = params[:i].reshape(n_hidden, n_inputs)
    b1 = params[i : i + n_hidden]
    i += n_hidden
    w2 = params[i : i + N_OUTPUTS * n_hidden].reshape(N_OUTPUTS, n_hidden)
    b2 = params[i + N_OUTPUTS * n_hidden :]
    return w1, b1, w2, b2


def pack(w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: np.ndarray) -> np.ndarray:
    return np.concatenate([w1.ravel(), b1, w2.ravel(), b2])


def outputs(params: np.ndarray, inputs: np.ndarray, n_hidden: int = HIDDEN_NODES) -> np.ndarray:
    """Network outputs in scaled space, shape (n, 2)."""

    w1, b1, w2, b2 = unpack(params, inputs.shape[1], n_hidden)
    return np.tanh(inputs @ w1.T + b1) @ w2.T + b2


def jacobian(params: np.ndarray, inputs: np.ndarray, n_hidden: int = HIDDEN_NODES) -> np.ndarray:
    """d outputs / d params, rows ordered (sample, output)."""

    n, d = inputs.shape
    w1, b1, w2, _ = unpack(params, d, n_hidden)
    hidden = np.tanh(inputs @ w1.T + b1)
    slope = 1.0 - hidden**2
    first = n_hidden * d
    J = np.zeros((n, N_OUTPUTS, params.size))
    for o in range(N_OUTPUTS):
        g = w2[o] * slope
        J[:, o, :first] = (g[:, :, None] * inputs[:, None, :]).reshape(n, first)
        J[:, o, first : first + n_hidden] = g
        start = first + n_hidden + o * n_hidden
        J[:, o, start : start + n_hidden] = hidden
        J[:, o, first + (N_OUTPUTS + 1) * n_hidden + o] = 1.0
    return J.reshape(n * N_OUTPUTS, params.size)


def normal_equations(
    params: np.ndarray,
    inputs: np.ndarray,
    targets: np.ndarray,
    n_hidden: int = HIDDEN_NODES,
) -> Tuple[np.ndarray, np.ndarray, float]:
    """``(J^T J, J^T e, e^T e)`` without materialising the Jacobian.

    Every output shares the first-layer columns ``slope * [x, 1]`` scaled by
    its own output weights, and touches only its own second-layer columns.
    """

    n, d = inputs.shape
    w1, b1, w2, b2 = unpack(params, d, n_hidden)
    hidden = np.tanh(inputs @ w1.T + b1)
    slope = 1.0 - hidden**2
    residual = hidden @ w2.T + b2 - targets

    first = n_hidden * d
    m = first + n_hidden
    z = np.empty((n, m))
    z[:, :first] = (slope[:, :, None] * inputs[:, None, :]).reshape(n, first)
    z[:, first:] = slope
    scale = np.hstack([np.repeat(w2, d, axis=1), w2])

    jtj = np.zeros((params.size, params.size))
    jte = np.zeros(params.size)
    jtj[:m, :m] = (z.T @ z) * (scale.T @ scale)
    jte[:m] = np.sum((z.T @ residual) * scale.T, axis=1)

    zh = z.T @ hidden
    z_sum = z.sum(axis=0)
    hh = hidden.T @ hidden
    h_sum = hidden.sum(axis=0)
    for o in range(N_OUTPUTS):
        cols = slice(m + o * n_hidden, m + (o + 1) * n_hidden)
        bias = m + N_OUTPUTS * n_hidden + o
        cross = scale[o][:, None] * zh
        jtj[:m, cols] = cross
        jtj[cols, :m] = cross.T
        jtj[:m, bias] = jtj[bias, :m] = scale[o] * z_sum
        jtj[cols, cols] = hh
        jtj[cols, bias] = jtj[bias, cols] = h_sum
        jtj[bias, bias] = n
        jte[cols] = hidden.T @ residual[:, o]
        jte[bias] = residual[:, o].sum()
    return jtj, jte, float(np.sum(residual**2))


def regularised_loss(
    params: np.ndarray,
    inputs: np.ndarray,
    targets: np.ndarray,
    alpha: float,
    beta: float,
    n_hidden: int = HIDDEN_NODES,
) -> float:
    residual = outputs(params, inputs, n_hidden) - targets
    return float(beta * np.sum(residual**2) + alpha * params @ params)


def loss_gradient(
    params: np.ndarray,
    inputs: np.ndarray,
    targets: np.ndarray,
    alpha: float,
    beta: float,
    n_hidden: int = HIDDEN_NODES,
) -> np.ndarray:
    residual = (outputs(params, inputs, n_hidden) - targets).reshape(-1)
    return 2.0 * (beta * jacobian(params, inputs, n_hidden).T @ residual + alpha * params)


# -- scaling -----------------------------------------------------------------


def _ranges(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    low = values.min(axis=0)
    high = values.max(axis=0)
    # a constant column gets a unit span
    high = np.where(high > low, high, low + 1.0)
    return low, high


def _scale(values: np.ndarray, low: np.ndarray, high: np.ndarray) -> np.ndarray:
    return 2.0 * (values - low) / (high - low) - 1.0


def _unscale(values: np.ndarray, low: np.ndarray, high: np.ndarray) -> np.ndarray:
    return (values + 1.0) / 2.0 * (high - low) + low


@dataclass(frozen=True, eq=False)
class CalibModel:
    technology: Optional[Technology]
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    input_min: np.ndarray
    input_max: np.ndarray
    output_min: np.ndarray
    output_max: np.ndarray
    alpha: float = 0.0
    beta: float = 1.0
    gamma: float = 0.0

    def __post_init__(self) -> None:
        n_hidden, n_inputs = self.w1.shape
        if self.b1.shape != (n_hidden,) or self.w2.shape != (N_OUTPUTS, n_hidden):
            raise ValueError("Hidden layer shapes are inconsistent")
        if self.b2.shape != (N_OUTPUTS,):
            raise ValueError("Output layer must have 2 nodes")
        if self.input_min.shape != (n_inputs,) or self.input_max.shape != (n_inputs,):
            raise ValueError("Input ranges must match the input size")
        if np.any(self.input_max <= self.input_min) or np.any(
            self.output_max <= self.output_min
        ):
            raise ValueError("Normalisation ranges must be non-degenerate")
        if self.technology is not None and FEATURE_SIZES[self.technology] != n_inputs:
            raise ValueError(
                f"{self.technology.value} model needs {FEATURE_SIZES[self.technology]} inputs"
            )

    @property
    def n_inputs(self) -> int:
        return int(self.w1.shape[1])

    @property
    def n_hidden(self) -> int:
        return int(self.w1.shape[0])

    @property
    def params(self) -> np.ndarray:
        return pack(self.w1, self.b1, self.w2, self.b2)

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Positions for a (n, d) feature matrix, shape (n, 2)."""

        features = np.atleast_2d(np.asarray(features, dtype=float))
        if features.shape[1] != self.n_inputs:
            raise ValueError(
                f"Model expects {self.n_inputs} features, got {features.shape[1]}"
            )
        scaled = _scale(features, self.input_min, self.input_max)
        raw = outputs(self.params, scaled, self.n_hidden)
        return _unscale(raw, self.output_min, self.output_max)


def forward(model: CalibModel, f: FeatureVector) -> Point2:
    if len(f) != model.n_inputs:
        raise ValueError(f"Model expects {model.n_inputs} features, got {len(f)}")
    return Point2.from_array(model.predict(f.values[None, :])[0])


# -- training ----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class TrainConfig:
    max_epochs: int = 300
    hidden_nodes: int = HIDDEN_NODES
    mu: float = 1e-3
    mu_mult: float = 10.0
    mu_max: float = 1e10
    grad_min: float = 1e-7
    min_improvement: float = 1e-3
    patience: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_epochs < 1 or self.hidden_nodes < 1 or self.patience < 1:
            raise ValueError("max_epochs, hidden_nodes and patience must be positive")
        if self.min_improvement < 0:
            raise ValueError(f"min_improvement must be >= 0, got {self.min_improvement}")
        if self.mu <= 0 or self.mu_max <= self.mu or self.grad_min <= 0:
            raise ValueError("LM damping and stop criteria must be positive")
        if self.mu_mult <= 1:
            raise ValueError(f"mu_mult must be > 1, got {self.mu_mult}")


@dataclass(frozen=True, slots=True)
class EpochLog:
    epoch: int
    loss_before: float
    loss_after: float
    alpha: float
    beta: float
    gamma: float
    mu: float


@dataclass
class TrainingResult:
    model: CalibModel
    history: list[EpochLog] = field(default_factory=list)
    stop_reason: str = "max_epochs"

    def rmse(self, features: np.ndarray, targets: np.ndarray) -> float:
        error = self.model.predict(features) - targets
        return math.sqrt(float(np.mean(np.sum(error**2, axis=1))))


def _clip(value: float) -> float:
    return float(min(max(value, 1.0 / HYPERPARAMETER_CAP), HYPERPARAMETER_CAP))


def _beta(n_errors: int, gamma: float, sse: float) -> float:
    if sse <= 0:
        return HYPERPARAMETER_CAP
    estimate = (n_errors - gamma) / (2.0 * sse)
    return _clip(estimate) if estimate > 0 else 1.0


class Trainer:
    def __init__(self, config: Optional[TrainConfig] = None) -> None:
        self.config = config or TrainConfig()

    def _initial_params(self, n_inputs: int) -> np.ndarray:
        rng = np.random.default_rng(self.config.seed)
        h = self.config.hidden_nodes
        w1_bound = 1.0 / math.sqrt(n_inputs)
        w2_bound = 1.0 / math.sqrt(h)
        return pack(
            rng.uniform(-w1_bound, w1_bound, size=(h, n_inputs)),
            rng.uniform(-w1_bound, w1_bound, size=h),
            rng.uniform(-w2_bound, w2_bound, size=(N_OUTPUTS, h)),
            rng.uniform(-w2_bound, w2_bound, size=N_OUTPUTS),
        )

    def _normal_equations(
        self, params: np.ndarray, inputs: np.ndarray, targets: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, float]:
        h = self.config.hidden_nodes
        jtj = np.zeros((params.size, params.size))
        jte = np.zeros(params.size)
        sse = 0.0
        for start in range(0, len(inputs), _CHUNK):
            block = slice(start, start + _CHUNK)
            part_jtj, part_jte, part_sse = normal_equations(
                params, inputs[block], targets[block], h
            )
            jtj += part_jtj
            jte += part_jte
            sse += part_sse
        return jtj, jte, sse

    def _sse(self, params: np.ndarray, inputs: np.ndarray, targets: np.ndarray) -> float:
        residual = outputs(params, inputs, self.config.hidden_nodes) - targets
        return float(np.sum(residual**2))

    def fit(
        self,
        features: np.ndarray,
        targets: np.ndarray,
        technology: Optional[Technology] = None,
    ) -> TrainingResult:
        cfg = self.config
        features = np.asarray(features, dtype=float)
        targets = np.asarray(targets, dtype=float)
        if features.ndim != 2 or targets.shape != (len(features), N_OUTPUTS):
            raise ValueError("Need an (n, d) feature matrix and (n, 2) targets")
        n_samples, n_inputs = features.shape
        if n_samples < n_inputs + 1:
            raise TrainingError(
                f"Need at least {n_inputs + 1} samples for {n_inputs} features, got {n_samples}"
            )

        in_low, in_high = _ranges(features)
        out_low, out_high = _ranges(targets)
        x = _scale(features, in_low, in_high)
        t = _scale(targets, out_low, out_high)

        params = self._initial_params(n_inputs)
        n_w = params.size
        n_errors = N_OUTPUTS * n_samples
        identity = np.eye(n_w)

        gamma = float(n_w)
        sse = self._sse(params, x, t)
        ssw = float(params @ params)
        beta = _beta(n_errors, gamma, sse)
        alpha = _clip(gamma / (2.0 * ssw)) if ssw > 0 else 1.0
        mu = cfg.mu
        history: list[EpochLog] = []
        stop_reason = "max_epochs"
        stalled = 0

        for epoch in range(1, cfg.max_epochs + 1):
            jtj, jte, sse = self._normal_equations(params, x, t)
            ssw = float(params @ params)
            loss = beta * sse + alpha * ssw
            gradient = 2.0 * (beta * jte + alpha * params)
            if float(np.linalg.norm(gradient)) < cfg.grad_min:
                stop_reason = "gradient"
                break

            accepted: Optional[Tuple[np.ndarray, float, float]] = None
            singular = False
            while mu <= cfg.mu_max:
                try:
                    step = np.linalg.solve(
                        beta * jtj + (alpha + mu) * identity, -(beta * jte + alpha * params)
                    )
                except np.linalg.LinAlgError:
                    singular = True
                    mu *= cfg.mu_mult
                    continue
                singular = False
                trial = params + step
                trial_sse = self._sse(trial, x, t)
                trial_ssw = float(trial @ trial)
                trial_loss = beta * trial_sse + alpha * trial_ssw
                if not math.isfinite(trial_loss):
                    raise TrainingError(f"Loss became {trial_loss} at epoch {epoch}")
                if trial_loss < loss:
                    accepted = (trial, trial_sse, trial_ssw)
                    mu /= cfg.mu_mult
                    break
                mu *= cfg.mu_mult

            if accepted is None:
                if singular:
                    raise TrainingError(
                        f"LM system singular at maximum damping (mu={mu:.3e}, epoch {epoch})"
                    )
                stop_reason = "mu_max"
                break

            params, sse, ssw = accepted
            trial_loss = beta * sse + alpha * ssw
            try:
                trace = float(np.trace(np.linalg.inv(beta * jtj + alpha * identity)))
            except np.linalg.LinAlgError as exc:
                raise TrainingError(f"Cannot re-estimate hyperparameters: {exc}") from exc
            gamma = float(np.clip(n_w - alpha * trace, 0.0, n_w))
            alpha = _clip(gamma / (2.0 * ssw)) if ssw > 0 else 1.0
            beta = _beta(n_errors, gamma, sse)
            history.append(
                EpochLog(
                    epoch=epoch,
                    loss_before=loss,
                    loss_after=trial_loss,
                    alpha=alpha,
                    beta=beta,
                    gamma=gamma,
                    mu=mu,
                )
            )
            logger.debug(
                "epoch %d: F %.6g -> %.6g, gamma %.2f, mu %.1e",
                epoch,
                loss,
                trial_loss,
                gamma,
                mu,
            )
            if loss - trial_loss < cfg.min_improvement * loss:
                stalled += 1
                if stalled >= cfg.patience:
                    stop_reason = "plateau"
                    break
            else:
                stalled = 0

        w1, b1, w2, b2 = unpack(params, n_inputs, cfg.hidden_nodes)
        model = CalibModel(
            technology=technology,
            w1=w1.copy(),
            b1=b1.copy(),
            w2=w2.copy(),
            b2=b2.copy(),
            input_min=in_low,
            input_max=in_high,
            output_min=out_low,
            output_max=out_high,
            alpha=alpha,
            beta=beta,
            gamma=gamma,
        )
        logger.info(
            "Trained on %d samples in %d epochs (%s), gamma %.1f of %d",
            n_samples,
            len(history),
            stop_reason,
            gamma,
            n_w,
        )
        return TrainingResult(model=model, history=history, stop_reason=stop_reason)


def train_records(
    records: Sequence[Record], cfg: Optional[TrainConfig] = None
) -> TrainingResult:
    if not records:
        raise TrainingError("No training records")
    vectors = [assemble_features(record) for record in records]
    targets = np.array([[r.truth.x, r.truth.y] for r in records])
    return Trainer(cfg).fit(
        np.vstack([v.values for v in vectors]), targets, vectors[0].technology
    )


def train(
    data: Sequence[Tuple[FeatureVector, Point2]], cfg: Optional[TrainConfig] = None
) -> CalibModel:
    if not data:
        raise TrainingError("No training data")
    technologies = {vector.technology for vector, _ in data}
    if len(technologies) != 1:
        raise TrainingError("Training data mixes technologies")
    features = np.vstack([vector.values for vector, _ in data])
    targets = np.array([[truth.x, truth.y] for _, truth in data])
    return Trainer(cfg).fit(features, targets, technologies.pop()).model


def calibrate_session(
    model: CalibModel, session: Session, window: int = DEFAULT_SMOOTHING_WINDOW
) -> list[Point2]:
    if not session.records:
        return []
    if model.technology is not None and session.technology is not model.technology:
        raise ValueError(
            f"{model.technology.value} model cannot calibrate a "
            f"{session.technology.value if session.technology else 'empty'} session"
        )
    predicted = model.predict(feature_matrix(session.records))
    return moving_average([Point2.from_array(row) for row in predicted], window)


# -- persistence -------------------------------------------------------------


def _row(values: Iterable[float]) -> str:
    return " ".join(format(float(v), ".17g") for v in values)


def dumps_model(model: CalibModel) -> str:
    lines = [
        f"{MODEL_MAGIC} {MODEL_VERSION}",
        f"technology {model.technology.value if model.technology else 'none'}",
        f"inputs {model.n_inputs}",
        f"hidden {model.n_hidden}",
        f"outputs {N_OUTPUTS}",
        f"alpha {format(model.alpha, '.17g')}",
        f"beta {format(model.beta, '.17g')}",
        f"gamma {format(model.gamma, '.17g')}",
        f"input_min {_row(model.input_min)}",
        f"input_max {_row(model.input_max)}",
        f"output_min {_row(model.output_min)}",
        f"output_max {_row(model.output_max)}",
    ]
    for name, matrix in (
        ("W1", model.w1),
        ("b1", model.b1[None, :]),
        ("W2", model.w2),
        ("b2", model.b2[None, :]),
    ):
        lines.append(f"{name} {matrix.shape[0]} {matrix.shape[1]}")
        lines.extend(_row(row) for row in matrix)
    return "\n".join(lines) + "\n"


class _Lines:
    def __init__(self, text: str, source: str) -> None:
        self._lines = text.splitlines()
        self._index = 0
        self.source = source

    def next(self) -> list[str]:
        if self._index >= len(self._lines):
            raise ModelFormatError(f"{self.source}: unexpected end of file")
        self._index += 1
        return self._lines[self._index - 1].split()

    def error(self, message: str) -> ModelFormatError:
        return ModelFormatError(f"{self.source}:{self._index}: {message}")

    def field(self, key: str) -> list[str]:
        tokens = self.next()
        if not tokens or tokens[0] != key:
            raise self.error(f"expected '{key}'")
        return tokens[1:]

    def floats(self, tokens: list[str], count: int) -> np.ndarray:
        if len(tokens) != count:
            raise self.error(f"expected {count} values, got {len(tokens)}")
        try:
            return np.array([float(token) for token in tokens])
        except ValueError as exc:
            raise self.error(str(exc)) from exc

    def integer(self, key: str) -> int:
        tokens = self.field(key)
        try:
            return int(tokens[0])
        except (IndexError, ValueError):
            raise self.error(f"'{key}' needs an integer") from None


def loads_model(text: str, source: str = "<model>") -> CalibModel:
    lines = _Lines(text, source)
    header = lines.next()
    if header != [MODEL_MAGIC, str(MODEL_VERSION)]:
        raise lines.error(f"not a {MODEL_MAGIC} v{MODEL_VERSION} file")
    tech_token = lines.field("technology")
    try:
        technology = None if tech_token == ["none"] else Technology(tech_token[0])
    except (IndexError, ValueError):
        raise lines.error(f"unknown technology {tech_token}") from None
    n_inputs = lines.integer("inputs")
    n_hidden = lines.integer("hidden")
    if lines.integer("outputs") != N_OUTPUTS:
        raise lines.error(f"only {N_OUTPUTS} outputs are supported")
    scalars = {
        key: float(lines.floats(lines.field(key), 1)[0]) for key in ("alpha", "beta", "gamma")
    }
    ranges = {
        key: lines.floats(lines.field(key), n_inputs if key.startswith("input") else N_OUTPUTS)
        for key in ("input_min", "input_max", "output_min", "output_max")
    }
    blocks = {}
    for name, shape in (
        ("W1", (n_hidden, n_inputs)),
        ("b1", (1, n_hidden)),
        ("W2", (N_OUTPUTS, n_hidden)),
        ("b2", (1, N_OUTPUTS)),
    ):
        dims = lines.field(name)
        if dims != [str(shape[0]), str(shape[1])]:
            raise lines.error(f"{name} must be {shape[0]} x {shape[1]}")
        blocks[name] = np.vstack([lines.floats(lines.next(), shape[1]) for _ in range(shape[0])])
    try:
        return CalibModel(
            technology=technology,
            w1=blocks["W1"],
            b1=blocks["b1"][0],
            w2=blocks["W2"],
            b2=blocks["b2"][0],
            **ranges,
            **scalars,
        )
    except ValueError as exc:
        raise ModelFormatError(f"{source}: {exc}") from exc


def save_model(model: CalibModel, path: Path) -> None:
    path.write_text(dumps_model(model), encoding="utf-8")


def load_model(path: Path) -> CalibModel:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFormatError(f"Cannot read model {path}: {exc}") from exc
    return loads_model(text, source=str(path))
