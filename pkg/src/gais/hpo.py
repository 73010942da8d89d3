"""Gaussian-process Bayesian optimisation of the selector's hyperparameters."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.stats import norm

from .classifiers import DEFAULT_CLASSIFIER, ClassifierKind, fit
from .dataset import Dataset
from .errors import GaisError, NumericalFailure, OutOfSpace
from .gat import GatHyperParams
from .graph import METRIC_ORDER
from .trainer import gais_select

logger = logging.getLogger(__name__)

N_CANDIDATES = 1024
N_WARMUP = 8
JITTER = 1e-6
MAX_JITTER = 1e-2
DEFAULT_KAPPA = 2.0


@dataclass(frozen=True)
class IntParam:
    name: str
    low: int
    high: int

    @property
    def width(self) -> int:
        return 1

    def encode(self, value) -> list[float]:
        if not self.low <= value <= self.high or int(value) != value:
            raise OutOfSpace(f"{self.name}={value} outside integers [{self.low}, {self.high}]")
        span = self.high - self.low
        return [(value - self.low) / span if span else 0.0]

    def sample(self, rng):
        return int(rng.integers(self.low, self.high + 1))


@dataclass(frozen=True)
class FloatParam:
    name: str
    low: float
    high: float

    @property
    def width(self) -> int:
        return 1

    def encode(self, value) -> list[float]:
        if not self.low <= value <= self.high:
            raise OutOfSpace(f"{self.name}={value} outside [{self.low}, {self.high}]")
        span = self.high - self.low
        return [(value - self.low) / span if span else 0.0]

    def sample(self, rng):
        return float(rng.uniform(self.low, self.high))


@dataclass(frozen=True)
class CategoricalParam:
    name: str
    choices: tuple

    @property
    def width(self) -> int:
        return len(self.choices)

    def encode(self, value) -> list[float]:
        if value not in self.choices:
            raise OutOfSpace(f"{self.name}={value!r} not one of {self.choices}")
        return [1.0 if c == value else 0.0 for c in self.choices]

    def sample(self, rng):
        return self.choices[int(rng.integers(len(self.choices)))]


@dataclass(frozen=True)
class SearchSpace:
    params: tuple

    def __post_init__(self):
        for p in self.params:
            if isinstance(p, (IntParam, FloatParam)) and p.low > p.high:
                raise ValueError(f"bounds of {p.name} are reversed")
            if isinstance(p, CategoricalParam) and not p.choices:
                raise ValueError(f"{p.name} has no choices")

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def dim(self) -> int:
        return sum(p.width for p in self.params)

    def encode(self, point: dict) -> np.ndarray:
        out = []
        for p in self.params:
            if p.name not in point:
                raise OutOfSpace(f"missing parameter {p.name}")
            out.extend(p.encode(point[p.name]))
        return np.array(out)

    def sample(self, rng) -> dict:
        return {p.name: p.sample(rng) for p in self.params}

    def contains(self, point: dict) -> bool:
        try:
            self.encode(point)
        except OutOfSpace:
            return False
        return True


def gais_space(
    hidden=(4, 16),
    heads_in=(5, 15),
    heads_out=(1, 4),
    dropout=(0.005, 0.67),
    theta_r=(0.0, 0.95),
    theta_s=(0.0, 0.95),
    theta_c=(0.5, 0.95),
    metrics: Sequence[str] = tuple(m.value for m in METRIC_ORDER),
) -> SearchSpace:
    return SearchSpace((
        IntParam("hidden", *hidden),
        IntParam("heads_in", *heads_in),
        IntParam("heads_out", *heads_out),
        FloatParam("dropout", *dropout),
        FloatParam("theta_r", *theta_r),
        FloatParam("theta_s", *theta_s),
        FloatParam("theta_c", *theta_c),
        CategoricalParam("metric", tuple(metrics)),
    ))


DEFAULT_SPACE = gais_space()


@dataclass
class TrialRecord:
    params: dict
    objective: float
    seconds: float
    failed: bool = False
    error: str | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "params": self.params,
            "objective": self.objective,
            "seconds": self.seconds,
            "failed": self.failed,
            "error": self.error,
            **({"details": self.details} if self.details else {}),
        }


def rbf_kernel(A, B, signal_var, length_scale):
    sq = np.sum(A ** 2, axis=1)[:, None] + np.sum(B ** 2, axis=1)[None, :] - 2.0 * A @ B.T
    return signal_var * np.exp(-np.maximum(sq, 0.0) / (2.0 * length_scale ** 2))


SIGNAL_GRID = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
LENGTH_GRID = (0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0)
NOISE_GRID = (0.0, 1e-3, 3e-3, 1e-2, 3e-2)


@dataclass
class GpPosterior:
    X: np.ndarray
    y_mean: float
    y_scale: float
    signal_var: float
    length_scale: float
    jitter: float
    noise_var: float
    chol: np.ndarray
    weights: np.ndarray
    log_marginal: float
    y: np.ndarray

    def predict(self, Xq) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation in objective units."""
        Xq = np.atleast_2d(np.asarray(Xq, dtype=np.float64))
        Ks = rbf_kernel(Xq, self.X, self.signal_var, self.length_scale)
        mu = Ks @ self.weights
        v = cho_solve((self.chol, True), Ks.T)
        var = np.maximum(self.signal_var - np.sum(Ks * v.T, axis=1), 0.0)
        return self.y_mean + self.y_scale * mu, self.y_scale * np.sqrt(var)

    @property
    def best_observed(self) -> float:
        """Largest posterior mean over the observed inputs (the EI incumbent)."""
        return float(self.predict(self.X)[0].max())

    @property
    def prior_std(self) -> float:
        return self.y_scale * math.sqrt(self.signal_var)


def _factor(K, jitter):
    n = len(K)
    while True:
        try:
            return cholesky(K + jitter * np.eye(n), lower=True), jitter
        except np.linalg.LinAlgError:
            jitter *= 10
            if jitter > MAX_JITTER:
                raise NumericalFailure("kernel matrix is not positive definite even with 1e-2 jitter") from None


def gp_fit(X, y) -> GpPosterior:
    """Zero-mean GP on standardised targets; signal variance and length scale
    chosen by log marginal likelihood over a fixed grid."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if len(y) < 1 or len(X) != len(y):
        raise ValueError("gp_fit needs at least one (x, y) pair")
    y_mean = float(y.mean())
    y_scale = float(y.std()) if len(y) > 1 else 1.0
    if not y_scale > 0:
        y_scale = 1.0
    z = (y - y_mean) / y_scale
    best = None
    n = len(z)
    for signal_var in SIGNAL_GRID:
        for length_scale in LENGTH_GRID:
            K = rbf_kernel(X, X, signal_var, length_scale)
            for noise_var in NOISE_GRID:
                L, jitter = _factor(K + noise_var * np.eye(n), JITTER)
                alpha = cho_solve((L, True), z)
                lml = -0.5 * z @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * math.log(2 * math.pi)
                if best is None or lml > best.log_marginal:
                    best = GpPosterior(X, y_mean, y_scale, signal_var, length_scale, jitter, noise_var,
                                       L, alpha, float(lml), y)
    return best


def expected_improvement(mu, sigma, f_best):
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    gain = mu - f_best
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        z = np.where(sigma > 0, gain / np.where(sigma > 0, sigma, 1.0), 0.0)
        ei = gain * norm.cdf(z) + sigma * norm.pdf(z)
    return np.where(sigma > 0, np.maximum(ei, 0.0), np.maximum(gain, 0.0))


def upper_confidence_bound(mu, sigma, kappa=DEFAULT_KAPPA):
    return np.asarray(mu) + kappa * np.asarray(sigma)


def acquisition_values(posterior: GpPosterior, X, acquisition: str, f_best: float, kappa=DEFAULT_KAPPA):
    mu, sigma = posterior.predict(X)
    if acquisition == "ei":
        return expected_improvement(mu, sigma, f_best)
    if acquisition == "ucb":
        return upper_confidence_bound(mu, sigma, kappa)
    raise ValueError(f"unknown acquisition {acquisition!r}")


def suggest_next(posterior: GpPosterior, space: SearchSpace, acquisition: str, seed,
                 f_best: float | None = None, kappa=DEFAULT_KAPPA, n_candidates=N_CANDIDATES) -> dict:
    """Best of ``n_candidates`` seeded uniform draws; ties go to the first draw."""
    rng = np.random.default_rng(seed)
    candidates = [space.sample(rng) for _ in range(n_candidates)]
    X = np.stack([space.encode(c) for c in candidates])
    if f_best is None:
        f_best = posterior.best_observed
    scores = acquisition_values(posterior, X, acquisition, f_best, kappa)
    return candidates[int(np.argmax(scores))]


def optimize(objective: Callable[[dict], float], space: SearchSpace, budget: int, acquisition="ei",
             seed=0, kappa=DEFAULT_KAPPA, n_warmup=N_WARMUP, recommend="observed") -> tuple[dict, list[TrialRecord]]:
    """Sequential Bayesian optimisation; returns the best point and every trial.

    ``objective`` returns a float, or a ``(float, details)`` pair.  Package
    errors raised inside it are recorded as failed trials with objective 0.

    ``recommend="observed"`` returns the trial with the highest objective;
    ``"posterior"`` returns the evaluated point with the highest posterior
    mean, which is steadier when the objective is noisy.
    """
    if recommend not in ("observed", "posterior"):
        raise ValueError(f"unknown recommendation rule {recommend!r}")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if acquisition not in ("ei", "ucb"):
        raise ValueError(f"unknown acquisition {acquisition!r}")
    warm_rng = np.random.default_rng([seed, 0])
    trials: list[TrialRecord] = []
    for t in range(budget):
        if t < min(budget, n_warmup):
            point = space.sample(warm_rng)
        else:
            X = np.stack([space.encode(tr.params) for tr in trials])
            y = np.array([tr.objective for tr in trials])
            posterior = gp_fit(X, y)
            point = suggest_next(posterior, space, acquisition, [seed, 1, t], kappa=kappa)
        t0 = time.perf_counter()
        try:
            value = objective(point)
            details = {}
            if isinstance(value, tuple):
                value, details = value
            record = TrialRecord(point, float(value), time.perf_counter() - t0, details=details)
        except GaisError as exc:
            record = TrialRecord(point, 0.0, time.perf_counter() - t0, failed=True, error=f"{type(exc).__name__}: {exc}")
        logger.info("trial %d/%d objective %.4f %s", t + 1, budget, record.objective, point)
        trials.append(record)
    scores = np.array([tr.objective for tr in trials])
    if recommend == "posterior" and len(trials) > 1:
        X = np.stack([space.encode(tr.params) for tr in trials])
        scores = gp_fit(X, scores).predict(X)[0]
    return trials[int(np.argmax(scores))].params, trials


def with_params(base: GatHyperParams, point: dict) -> GatHyperParams:
    return replace(base, **point)


def validation_effectiveness(train: Dataset, val: Dataset, hp: GatHyperParams,
                             classifier: ClassifierKind = DEFAULT_CLASSIFIER) -> tuple[float, dict]:
    result, _, _ = gais_select(train, hp)
    details = {"n_selected": result.n_selected, "reduction_rate": result.reduction_rate,
               "t_is_seconds": result.t_is_seconds}
    idx = result.selected_idx
    model = fit(classifier, train.features[idx], train.labels[idx], train.class_count)
    accuracy = float(np.mean(model.predict(val.features) == val.labels))
    details["val_accuracy"] = accuracy
    return accuracy * result.reduction_rate, details


def tune(train: Dataset, val: Dataset, space: SearchSpace = DEFAULT_SPACE, budget: int = 25,
         acquisition="ei", seed=0, base: GatHyperParams | None = None,
         classifier: ClassifierKind = DEFAULT_CLASSIFIER, kappa=DEFAULT_KAPPA) -> tuple[GatHyperParams, list[TrialRecord]]:
    """Maximise validation effectiveness (accuracy x reduction rate)."""
    base = base or GatHyperParams(seed=seed)

    def objective(point):
        return validation_effectiveness(train, val, with_params(base, point), classifier)

    best, trials = optimize(objective, space, budget, acquisition, seed, kappa)
    return with_params(base, best), trials
