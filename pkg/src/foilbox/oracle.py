"""The black-box boundary between a model and the attacker.

An :class:`Oracle` bundles a network with one attribution method behind a
single ``query`` call that returns exactly what the attacker may see: the
probability vector and the explanation map. Every successful query
consumes one unit of a hard budget; nothing else about the model leaks
through the interface.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .attribution import METHODS, DeepLiftConfig, LrpConfig, explain
from .engine import Network, forward
from .errors import BudgetExhausted, ShapeError

__all__ = ["DEFAULT_BUDGET", "OracleResponse", "QueryMeter", "Oracle"]

DEFAULT_BUDGET = 50_000


@dataclass(frozen=True)
class OracleResponse:
    """One query's worth of attacker-visible output."""

    probs: np.ndarray
    expl: np.ndarray


class QueryMeter:
    """Thread-safe counter enforcing ``used <= budget``."""

    def __init__(self, budget: int = DEFAULT_BUDGET):
        if budget < 1:
            raise ValueError("budget must be positive")
        self.budget = int(budget)
        self.used = 0
        self._lock = threading.Lock()

    def consume(self) -> None:
        """Atomically charge one query or raise BudgetExhausted."""
        with self._lock:
            if self.used >= self.budget:
                raise BudgetExhausted(self.used, self.budget)
            self.used += 1

    @property
    def remaining(self) -> int:
        return self.budget - self.used


class Oracle:
    """Metered (probability vector, explanation map) query interface."""

    def __init__(
        self,
        net: Network,
        method: str,
        *,
        budget: int = DEFAULT_BUDGET,
        lrp: LrpConfig | None = None,
        deeplift: DeepLiftConfig | None = None,
        reduce: str = "sum",
    ):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
        self._net = net
        self.method = method
        self.meter = QueryMeter(budget)
        self._lrp = lrp
        self._deeplift = deeplift
        self._reduce = reduce
        # the reference forward pass is per-oracle setup, not an attacker query
        self._ref_trace = None
        if method == "deeplift":
            cfg = deeplift or DeepLiftConfig()
            ref = cfg.reference if cfg.reference is not None else np.zeros(net.input_dims)
            self._ref_trace = forward(net, ref)[2]

    @property
    def input_dims(self) -> tuple:
        return self._net.input_dims

    @property
    def num_classes(self) -> int:
        return self._net.num_classes

    def query(self, x: np.ndarray, y: int) -> OracleResponse:
        """Evaluate the model once; charges exactly one budget unit.

        Malformed requests are rejected before the meter is touched.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape != tuple(self._net.input_dims):
            raise ShapeError(f"query shape {x.shape} != oracle input {self._net.input_dims}")
        if not 0 <= int(y) < self._net.num_classes:
            raise IndexError(f"class {y} out of range [0,{self._net.num_classes})")
        self.meter.consume()
        _, probs, trace = forward(self._net, x)
        expl = explain(
            self._net,
            x,
            int(y),
            self.method,
            lrp=self._lrp,
            deeplift=self._deeplift,
            trace=trace,
            reference_trace=self._ref_trace,
            reduce=self._reduce,
        )
        return OracleResponse(probs=probs, expl=expl)

    def peek_remaining(self) -> int:
        return self.meter.remaining
