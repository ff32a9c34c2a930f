"""Standard and head-first fine-tuning of :class:`RegressionModel`.

SFiT trains every parameter from the first step.  HeFiT first trains only the
regression head with the encoder frozen, then unfreezes everything and
continues at half the learning rate.  Both minimise the MSE between raw
scores and labels with Adam at a constant per-stage learning rate.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .data import Dataset
from .errors import LabError, NumericError, ParameterError, UndefinedCorrelationError
from .evaluation import PredictionSet, pearson_r
from .model import ModelConfig, RegressionModel, forward, init_model, predict_batch
from .optim import AdamState, optimizer_step

log = logging.getLogger(__name__)

GRID_EPOCHS = tuple(range(4, 11))
GRID_DROPOUTS = (0.0, 0.05, 0.10, 0.15, 0.20)


@dataclass(frozen=True)
class HypSet:
    name: str
    epochs: int
    head_hidden_dropout_p: float
    learning_rate: float = 4e-5
    batch_size: int = 8

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if not 0.0 <= self.head_hidden_dropout_p < 1.0:
            raise ParameterError("dropout must be in [0, 1)")
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be positive")


HYP_SET_1 = HypSet("hyp-set-1", epochs=4, head_hidden_dropout_p=0.10)
HYP_SET_2 = HypSet("hyp-set-2", epochs=10, head_hidden_dropout_p=0.0)


@dataclass(frozen=True)
class HeFiTConfig:
    head_epochs: int = 3
    full_epochs: int = 6
    base_learning_rate: float = 4e-5
    stage2_lr_factor: float = 0.5
    head_hidden_dropout_p: float = 0.05
    batch_size: int = 8

    def __post_init__(self) -> None:
        if self.head_epochs < 1 or self.full_epochs < 1:
            raise ParameterError("both HeFiT stages need at least one epoch")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if not 0.0 <= self.head_hidden_dropout_p < 1.0:
            raise ParameterError("dropout must be in [0, 1)")

    @property
    def stage2_learning_rate(self) -> float:
        return self.base_learning_rate * self.stage2_lr_factor


@dataclass
class TrainingHistory:
    plan: str
    seed: int
    planned_epochs: int
    epoch_losses: list[float] = field(default_factory=list)
    dev_r: list[float | None] = field(default_factory=list)
    # index of the first epoch of every stage after the first
    stage_boundaries: list[int] = field(default_factory=list)
    epoch_lrs: list[float] = field(default_factory=list)
    step_lrs: list[float] = field(default_factory=list)
    success: bool = False
    failure_reason: str | None = None

    @property
    def epochs(self) -> int:
        return len(self.epoch_losses)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "TrainingHistory":
        return cls(**dict(data))


Batch = tuple[np.ndarray, np.ndarray]


def run_batch(
    model: RegressionModel,
    batch: Batch,
    mode: str = "train",
    rng: np.random.Generator | None = None,
) -> tuple[ad.Tensor, np.ndarray]:
    """Forward one batch; returns the MSE loss tensor and the raw predictions.

    In ``eval`` mode no graph is built and dropout is off.
    """
    ids, labels = batch
    if len(labels) == 0:
        raise ParameterError("empty batch")
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be train or eval, got {mode!r}")
    if mode == "eval":
        with ad.no_grad():
            out = forward(model, ids, training=False)
            loss = ad.mse(out, labels)
    else:
        out = forward(model, ids, training=True, rng=rng)
        loss = ad.mse(out, labels)
    return loss, out.data.copy()


# called after every epoch with the model and the history so far
EpochCallback = Callable[[RegressionModel, "TrainingHistory"], None]


class _RunFailed(LabError):
    pass


@dataclass
class _Run:
    model: RegressionModel
    ids: np.ndarray
    labels: np.ndarray
    seed: int
    history: TrainingHistory
    dev: tuple[np.ndarray, np.ndarray] | None
    on_epoch: EpochCallback | None = None
    dropout_rng: np.random.Generator = field(init=False)

    def __post_init__(self) -> None:
        self.dropout_rng = np.random.default_rng([self.seed, 2])

    def stage(self, epochs: int, lr: float, batch_size: int) -> None:
        """Run ``epochs`` epochs with a fresh Adam state at constant ``lr``."""
        state = AdamState()
        n = len(self.labels)
        for _ in range(epochs):
            epoch = self.history.epochs
            order = np.random.default_rng([self.seed, 1, epoch]).permutation(n)
            total = 0.0
            for start in range(0, n, batch_size):
                rows = order[start : start + batch_size]
                self.model.zero_grad()
                try:
                    loss, _ = run_batch(self.model, (self.ids[rows], self.labels[rows]), "train", self.dropout_rng)
                    ad.backward(loss)
                    grads = {k: t.grad for k, t in self.model.trainable_params().items() if t.grad is not None}
                    optimizer_step(self.model.params, grads, lr, state)
                except NumericError as exc:
                    raise _RunFailed(f"epoch {epoch + 1}: {exc}") from exc
                self.history.step_lrs.append(lr)
                total += loss.item() * len(rows)
            self.history.epoch_losses.append(total / n)
            self.history.epoch_lrs.append(lr)
            if self.dev is not None:
                self.history.dev_r.append(_dev_r(self.model, *self.dev))
            log.debug("%s seed=%d epoch=%d loss=%.4f", self.history.plan, self.seed, epoch + 1, total / n)
            if self.on_epoch is not None:
                self.on_epoch(self.model, self.history)


def _dev_r(model: RegressionModel, ids: np.ndarray, labels: np.ndarray) -> float | None:
    try:
        preds = predict_batch(model, ids)
        return pearson_r(preds, labels)
    except (UndefinedCorrelationError, NumericError):
        return None


def _prepare(model: RegressionModel, train_set: Dataset, dev_set: Dataset | None):
    if len(train_set) == 0:
        raise ParameterError("training set is empty")
    ids = train_set.tokens(model.config.max_len)
    dev = None if dev_set is None else (dev_set.tokens(model.config.max_len), dev_set.scores)
    return ids, train_set.scores, dev


def _finish(run: _Run, failure: str | None) -> TrainingHistory:
    hist = run.history
    if failure is None and not all(math.isfinite(x) for x in hist.epoch_losses):
        failure = "non-finite training loss"
    if failure is None and hist.epochs != hist.planned_epochs:
        failure = f"ran {hist.epochs} of {hist.planned_epochs} epochs"
    if failure is None and run.dev is not None:
        final = hist.dev_r[-1] if hist.dev_r else None
        if final is None:
            failure = "dev correlation undefined"
        elif final <= 0.0:
            failure = f"final dev r {final:.4f} is not positive"
    hist.success = failure is None
    hist.failure_reason = failure
    return hist


def sfit(
    model: RegressionModel,
    train_set: Dataset,
    hyp: HypSet,
    seed: int,
    dev_set: Dataset | None = None,
    on_epoch: EpochCallback | None = None,
) -> tuple[RegressionModel, TrainingHistory]:
    """Fine-tune all parameters for ``hyp.epochs`` epochs (in place)."""
    ids, labels, dev = _prepare(model, train_set, dev_set)
    model.with_head_dropout(hyp.head_hidden_dropout_p)
    model.set_trainable("encoder", True)
    model.set_trainable("head", True)
    run = _Run(model, ids, labels, seed, TrainingHistory("sfit", seed, hyp.epochs), dev, on_epoch)
    failure = None
    try:
        run.stage(hyp.epochs, hyp.learning_rate, hyp.batch_size)
    except _RunFailed as exc:
        failure = str(exc)
    return model, _finish(run, failure)


def hefit(
    model: RegressionModel,
    train_set: Dataset,
    cfg: HeFiTConfig,
    seed: int,
    dev_set: Dataset | None = None,
    on_epoch: EpochCallback | None = None,
) -> tuple[RegressionModel, TrainingHistory]:
    """Head-only stage at the base rate, then all parameters at ``base * factor`` (in place)."""
    ids, labels, dev = _prepare(model, train_set, dev_set)
    model.with_head_dropout(cfg.head_hidden_dropout_p)
    history = TrainingHistory("hefit", seed, cfg.head_epochs + cfg.full_epochs)
    run = _Run(model, ids, labels, seed, history, dev, on_epoch)
    failure = None
    try:
        model.set_trainable("encoder", False)
        model.set_trainable("head", True)
        run.stage(cfg.head_epochs, cfg.base_learning_rate, cfg.batch_size)
        history.stage_boundaries.append(history.epochs)
        model.set_trainable("encoder", True)
        run.stage(cfg.full_epochs, cfg.stage2_learning_rate, cfg.batch_size)
    except _RunFailed as exc:
        failure = str(exc)
    finally:
        model.set_trainable("encoder", True)
        model.set_trainable("head", True)
    return model, _finish(run, failure)


# ---------------------------------------------------------------------------
# plans, repeated runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FineTuner:
    """Builds, optionally warm-starts and fine-tunes a fresh model per seed.

    Calling the instance matches the evaluation ``Trainer`` signature and
    returns dev-set predictions.
    """

    model_config: ModelConfig
    plan: str
    hyp: HypSet | None = None
    hefit_config: HeFiTConfig | None = None
    encoder_state: Mapping[str, np.ndarray] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.plan == "sfit" and self.hyp is None:
            raise ParameterError("an sfit plan needs a HypSet")
        if self.plan == "hefit" and self.hefit_config is None:
            object.__setattr__(self, "hefit_config", HeFiTConfig())
        if self.plan not in ("sfit", "hefit"):
            raise ParameterError(f"plan must be sfit or hefit, got {self.plan!r}")

    def build(self, seed: int) -> RegressionModel:
        model = init_model(self.model_config, seed)
        if self.encoder_state is not None:
            model.load_state(dict(self.encoder_state), group="encoder")
        return model

    def fit(self, train_set: Dataset, seed: int, dev_set: Dataset | None = None):
        model = self.build(seed)
        if self.plan == "sfit":
            return sfit(model, train_set, self.hyp, seed, dev_set)  # type: ignore[arg-type]
        return hefit(model, train_set, self.hefit_config, seed, dev_set)  # type: ignore[arg-type]

    def __call__(self, train_set: Dataset, dev_set: Dataset, seed: int) -> PredictionSet:
        model, _ = self.fit(train_set, seed)
        return PredictionSet.from_dataset(dev_set, predict_batch(model, dev_set.tokens(model.config.max_len)))


def successful_runs(
    run: Callable[[int], tuple[object, TrainingHistory]],
    n_success: int,
    seeds: Iterable[int] | None = None,
    max_attempts: int | None = None,
) -> list[tuple[object, TrainingHistory]]:
    """Call ``run(seed)`` on successive seeds until ``n_success`` runs succeed.

    Failed runs are skipped (re-seeded), as averages are only taken over
    successful runs.
    """
    seeds = iter(seeds if seeds is not None else itertools.count())
    limit = max_attempts if max_attempts is not None else 3 * n_success
    done: list[tuple[object, TrainingHistory]] = []
    attempts = 0
    while len(done) < n_success:
        if attempts >= limit:
            raise NumericError(f"only {len(done)} of {n_success} runs succeeded in {attempts} attempts")
        seed = next(seeds)
        attempts += 1
        result = run(seed)
        if result[1].success:
            done.append(result)
        else:
            log.info("seed %d failed: %s", seed, result[1].failure_reason)
    return done


# ---------------------------------------------------------------------------
# grid search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridResult:
    hyp: HypSet
    dev_r: float | None
    success: bool


def default_grid_space(learning_rate: float = 4e-5, batch_size: int = 8) -> list[HypSet]:
    return [
        HypSet(f"e{e}-p{p:.2f}", e, p, learning_rate, batch_size)
        for e, p in itertools.product(GRID_EPOCHS, GRID_DROPOUTS)
    ]


def grid_search(
    model_factory: Callable[[int], RegressionModel],
    train_set: Dataset,
    dev_set: Dataset,
    space: Sequence[HypSet] | None = None,
    seed: int = 0,
    top_k: int | None = 2,
) -> list[GridResult]:
    """SFiT every cell once and rank by dev r (failed cells last).

    Cells that differ only in epoch count share one run, since a shorter run
    is an exact prefix of a longer one with the same seed.
    """
    space = list(space) if space is not None else default_grid_space()
    if not space:
        raise ParameterError("grid search space is empty")
    groups: dict[tuple[float, float, int], list[HypSet]] = {}
    for hyp in space:
        groups.setdefault((hyp.head_hidden_dropout_p, hyp.learning_rate, hyp.batch_size), []).append(hyp)
    results: list[GridResult] = []
    for cells in groups.values():
        longest = max(cells, key=lambda h: h.epochs)
        _, hist = sfit(model_factory(seed), train_set, longest, seed, dev_set)
        for hyp in cells:
            losses = hist.epoch_losses[: hyp.epochs]
            reached = len(losses) == hyp.epochs and all(math.isfinite(x) for x in losses)
            r = hist.dev_r[hyp.epochs - 1] if reached else None
            results.append(GridResult(hyp, r, reached and r is not None and r > 0))
    order = {id(h): i for i, h in enumerate(space)}
    results.sort(key=lambda g: (not g.success, -(g.dev_r if g.dev_r is not None else -math.inf), order[id(g.hyp)]))
    return results if top_k is None else results[:top_k]
