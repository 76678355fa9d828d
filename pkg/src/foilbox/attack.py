"""Evolution-strategy attack that molds a model's explanation map.

The search keeps a Gaussian distribution over perturbations, centered on
an evolving attack vector ``V`` with shared scalar standard deviation
``sigma``. Each generation draws a population of offsets (iid or Latin
hypercube), scores them through the black-box oracle with a weighted
explanation/prediction loss, rank-normalizes the losses into centered
utilities, estimates the distribution's search gradient from the
log-density derivatives, and steps ``V`` and ``sigma``. The lowest-loss
candidate ever seen defines the adversarial image.

All randomness flows through a single generator and every generation's
draws complete before any fitness evaluation starts, so results are
bit-identical regardless of how many workers evaluate the population.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

from .errors import BudgetExhausted, ConfigError
from .oracle import DEFAULT_BUDGET

__all__ = [
    "AttackConfig",
    "AttackState",
    "Candidate",
    "GenerationStats",
    "AttackResult",
    "sample_population",
    "fitness",
    "rank_normalize",
    "estimate_gradients",
    "step",
    "run_attack",
    "write_trace_csv",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = ("generation", "best_loss", "mean_loss", "expl_loss", "pred_loss", "sigma", "queries_used")


@dataclass(frozen=True)
class AttackConfig:
    """Hyperparameters of one attack run.

    ``decay`` multiplies both sigma and the attack-vector learning rate
    after every generation; ``sigma_decay``/``lr_decay`` override it
    individually when set.
    """

    generations: int
    pop_size: int
    sigma0: float
    alpha: float
    beta: float
    lr_v: float
    lr_sigma: float = 0.0
    decay: float = 0.999
    sampling: str = "iid"
    seed: int = 0
    budget: int = DEFAULT_BUDGET
    workers: int = 1
    sigma_decay: float | None = None
    lr_decay: float | None = None

    def __post_init__(self):
        if self.generations < 0:
            raise ConfigError("generations must be >= 0")
        if self.pop_size < 2:
            raise ConfigError("pop_size must be >= 2")
        if self.sigma0 <= 0:
            raise ConfigError("sigma0 must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be non-negative")
        if self.lr_v <= 0:
            raise ConfigError("lr_v must be positive")
        if self.lr_sigma < 0:
            raise ConfigError("lr_sigma must be non-negative")
        for name in ("decay", "sigma_decay", "lr_decay"):
            v = getattr(self, name)
            if v is not None and not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must lie in (0,1]")
        if self.sampling not in ("iid", "lhs"):
            raise ConfigError(f"sampling must be 'iid' or 'lhs', got {self.sampling!r}")
        if self.budget < 1:
            raise ConfigError("budget must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def effective_sigma_decay(self) -> float:
        return self.decay if self.sigma_decay is None else self.sigma_decay

    @property
    def effective_lr_decay(self) -> float:
        return self.decay if self.lr_decay is None else self.lr_decay


@dataclass
class AttackState:
    """Mutable search state; owned by the generation loop."""

    V: np.ndarray
    sigma: float
    lr_v: float
    generation: int
    best_loss: float
    best_V: np.ndarray
    rng: np.random.Generator


@dataclass(frozen=True)
class Candidate:
    """One evaluated perturbation sample."""

    z: np.ndarray
    loss: float
    expl_loss: float
    pred_loss: float


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_loss: float
    mean_loss: float
    expl_loss: float
    pred_loss: float
    sigma: float
    queries_used: int


@dataclass(frozen=True)
class AttackResult:
    """Outcome of one attack: best-so-far image plus the full trace.

    ``best_expl``/``best_probs`` are the oracle outputs at the winning
    candidate, i.e. at ``x_adv`` itself; they are None when no generation
    completed. ``queries_used`` counts everything charged to the oracle's
    meter, including any bookkeeping queries the caller made before the
    attack.
    """

    x_adv: np.ndarray
    final_loss: float
    best_loss: float
    trace: tuple
    queries_used: int
    best_expl: np.ndarray | None = None
    best_probs: np.ndarray | None = None


def sample_population(rng: np.random.Generator, pop_size: int, sigma: float, dims, mode: str) -> np.ndarray:
    """Draw ``pop_size`` zero-mean Gaussian offsets of shape ``dims``.

    ``iid`` draws every coordinate independently from N(0, sigma^2).
    ``lhs`` stratifies per coordinate: the samples' standard-normal CDF
    values occupy the ``pop_size`` equal probability intervals exactly
    once, with a random interval assignment per coordinate and a uniform
    point inside each interval.
    """
    if pop_size < 2:
        raise ConfigError("population size must be >= 2")
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    dims = tuple(int(d) for d in dims)
    if mode == "iid":
        return rng.standard_normal((pop_size,) + dims) * sigma
    if mode == "lhs":
        n = int(np.prod(dims))
        # per-coordinate random permutation of the pop_size intervals
        order = np.argsort(rng.random((pop_size, n)), axis=0)
        offsets = rng.random((pop_size, n))
        u = (order + offsets) / pop_size
        return (ndtri(u) * sigma).reshape((pop_size,) + dims)
    raise ConfigError(f"unknown sampling mode {mode!r}")


def _evaluate(z, V, x, y, oracle, target_expl, base_probs, alpha, beta):
    x_hat = np.clip(x + V + z, 0.0, 1.0)
    resp = oracle.query(x_hat, y)
    expl_loss = float(np.sum((resp.expl - target_expl) ** 2))
    pred_loss = float(np.sum((resp.probs - base_probs) ** 2))
    loss = alpha * expl_loss + beta * pred_loss
    return Candidate(z=z, loss=loss, expl_loss=expl_loss, pred_loss=pred_loss), resp


def fitness(z, V, x, y, oracle, target_expl, base_probs, alpha: float, beta: float) -> Candidate:
    """Score one perturbation sample through the oracle.

    The candidate image is ``clamp(x + V + z)``; its loss is
    ``alpha * sum((expl - target_expl)^2) + beta * sum((probs - base_probs)^2)``.
    Consumes exactly one oracle query.
    """
    return _evaluate(z, V, x, y, oracle, target_expl, base_probs, alpha, beta)[0]


def rank_normalize(losses) -> np.ndarray:
    """Map losses to centered rank utilities in [-0.5, +0.5].

    The lowest loss gets +0.5, the highest -0.5, ties share the mean
    utility of their rank span, and the utilities always sum to zero.
    """
    losses = np.asarray(losses, dtype=np.float64)
    n = losses.shape[0]
    if n < 2:
        raise ConfigError("rank normalization needs at least 2 losses")
    ranks = rankdata(losses, method="average")  # 1 = lowest loss
    return 0.5 - (ranks - 1.0) / (n - 1.0)


def estimate_gradients(samples: np.ndarray, utilities: np.ndarray, sigma: float):
    """Monte-Carlo search gradient of expected utility over the Gaussian.

    For offsets z around a zero mean the log-density derivatives are
    ``z / sigma^2`` for the mean and ``(z^2 - sigma^2) / sigma^3`` for the
    shared scalar sigma (averaged over coordinates), so the estimates are
    utility-weighted means of those quantities over the population.
    """
    pop = samples.shape[0]
    zflat = samples.reshape(pop, -1)
    utilities = np.asarray(utilities, dtype=np.float64)
    grad_v = (zflat.T @ utilities / (pop * sigma**2)).reshape(samples.shape[1:])
    per_sample = ((zflat**2).mean(axis=1) - sigma**2) / sigma**3
    grad_sigma = float(per_sample @ utilities / pop)
    return grad_v, grad_sigma


def step(
    state: AttackState,
    grad_v: np.ndarray,
    grad_sigma: float,
    cfg: AttackConfig,
    *,
    candidate_loss: float | None = None,
    candidate_v: np.ndarray | None = None,
) -> AttackState:
    """Apply one generation's update to the search state.

    Ascent on the rank utilities is descent on the loss, so ``V`` moves
    with ``+lr_v * grad_v``. Sigma takes its gradient step, is clamped to
    a floor of ``1e-6 * sigma0``, then decays; the learning rate decays by
    the same schedule. Best-so-far bookkeeping updates only on strict
    improvement.
    """
    state.V = state.V + state.lr_v * grad_v
    floor = 1e-6 * cfg.sigma0
    state.sigma = max(state.sigma + cfg.lr_sigma * grad_sigma, floor) * cfg.effective_sigma_decay
    state.lr_v = state.lr_v * cfg.effective_lr_decay
    state.generation += 1
    if candidate_loss is not None and candidate_loss < state.best_loss:
        state.best_loss = float(candidate_loss)
        state.best_V = np.array(candidate_v)
    return state


def run_attack(
    cfg: AttackConfig,
    oracle,
    x: np.ndarray,
    y: int,
    target_expl: np.ndarray,
    base_probs: np.ndarray,
    *,
    rng: np.random.Generator | None = None,
) -> AttackResult:
    """Run the full generation loop against one image.

    The caller supplies the target map and the clean probability vector
    (obtained through its own metered queries). The loop runs for at most
    ``cfg.generations`` generations and stops early, gracefully, when the
    oracle cannot afford a full population; a generation interrupted by
    budget exhaustion is discarded.
    """
    x = np.asarray(x, dtype=np.float64)
    target_expl = np.asarray(target_expl, dtype=np.float64)
    base_probs = np.asarray(base_probs, dtype=np.float64)
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
    state = AttackState(
        V=np.zeros_like(x),
        sigma=cfg.sigma0,
        lr_v=cfg.lr_v,
        generation=0,
        best_loss=np.inf,
        best_V=np.zeros_like(x),
        rng=rng,
    )
    rows = []
    best_expl = None
    best_probs = None
    final_loss = np.inf
    executor = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        for gen in range(1, cfg.generations + 1):
            if oracle.peek_remaining() < cfg.pop_size:
                break
            samples = sample_population(state.rng, cfg.pop_size, state.sigma, x.shape, cfg.sampling)
            v_now = state.V

            def score(z, _v=v_now):
                return _evaluate(z, _v, x, y, oracle, target_expl, base_probs, cfg.alpha, cfg.beta)

            try:
                if executor is None:
                    evaluated = [score(z) for z in samples]
                else:
                    evaluated = list(executor.map(score, samples))
            except BudgetExhausted:
                break  # partial generation: discard and salvage best-so-far
            cands = [c for c, _ in evaluated]
            losses = np.array([c.loss for c in cands])
            utilities = rank_normalize(losses)
            grad_v, grad_sigma = estimate_gradients(samples, utilities, state.sigma)
            k = int(np.argmin(losses))
            improved = losses[k] < state.best_loss
            step(
                state,
                grad_v,
                grad_sigma,
                cfg,
                candidate_loss=losses[k],
                candidate_v=v_now + samples[k],
            )
            if improved:
                best_expl = evaluated[k][1].expl
                best_probs = evaluated[k][1].probs
            final_loss = float(losses[k])
            rows.append(
                GenerationStats(
                    generation=gen,
                    best_loss=float(state.best_loss),
                    mean_loss=float(losses.mean()),
                    expl_loss=cands[k].expl_loss,
                    pred_loss=cands[k].pred_loss,
                    sigma=float(state.sigma),
                    queries_used=cfg.budget - oracle.peek_remaining(),
                )
            )
    finally:
        if executor is not None:
            executor.shutdown(wait=True)
    return AttackResult(
        x_adv=np.clip(x + state.best_V, 0.0, 1.0),
        final_loss=final_loss,
        best_loss=float(state.best_loss),
        trace=tuple(rows),
        queries_used=cfg.budget - oracle.peek_remaining(),
        best_expl=best_expl,
        best_probs=best_probs,
    )


def write_trace_csv(trace, path) -> None:
    """Persist per-generation statistics with stable, re-parsable floats."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for row in trace:
            writer.writerow(
                [
                    row.generation,
                    repr(row.best_loss),
                    repr(row.mean_loss),
                    repr(row.expl_loss),
                    repr(row.pred_loss),
                    repr(row.sigma),
                    row.queries_used,
                ]
            )
