"""Solved policy container shared by the decomposer and the extensive form."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np


@dataclass
class Solution:
    """Per-node policy plus run metadata.

    Arrays are indexed by node id. ``x`` has one column for cash and one per
    asset, ``buy``/``sell`` one per asset.
    """

    status: str
    method: str
    objective: float
    k0: float
    x: np.ndarray
    buy: np.ndarray
    sell: np.ndarray
    b: np.ndarray
    b_buy: np.ndarray
    b_sell: np.ndarray
    v: np.ndarray
    w: np.ndarray
    iterations: int = 0
    counts: Dict[str, int] = field(default_factory=dict)
    log: List[Dict[str, Any]] = field(default_factory=list)
    event_cuts: Dict[int, List[Dict[str, Any]]] = field(default_factory=dict)
    phi: float = 0.0
    config_text: Optional[str] = None
    tree_path: Optional[str] = None
    baseline: Optional["Solution"] = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def n_nodes(self) -> int:
        return self.x.shape[0]

    def state(self, node_id: int) -> np.ndarray:
        return np.concatenate([self.x[node_id], [self.b[node_id]]])

    def portfolio_value(self, node_id: Optional[int] = None):
        """Sum of holdings including cash at one node or at all nodes."""

        if node_id is None:
            return self.x.sum(axis=1)
        return float(self.x[node_id].sum())

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {
            "status": self.status,
            "method": self.method,
            "objective": _finite(self.objective),
            "k0": _finite(self.k0),
            "iterations": self.iterations,
            "counts": dict(self.counts),
            "log": list(self.log),
            "phi": self.phi,
            "config_text": self.config_text,
            "tree_path": self.tree_path,
            "event_cuts": {str(k): v for k, v in self.event_cuts.items()},
            "nodes": {
                "x": self.x.tolist(),
                "buy": self.buy.tolist(),
                "sell": self.sell.tolist(),
                "b": self.b.tolist(),
                "b_buy": self.b_buy.tolist(),
                "b_sell": self.b_sell.tolist(),
                "v": [_finite(v) for v in self.v],
                "w": [_finite(w) for w in self.w],
            },
        }
        if self.baseline is not None:
            payload["baseline"] = self.baseline.to_dict()
        return payload

    def to_json(self, pretty: bool = False) -> str:
        return json.dumps(self.to_dict(), indent=2 if pretty else None)


def _finite(value: float) -> Optional[float]:
    value = float(value)
    return value if math.isfinite(value) else None


def _array(values, width: Optional[int] = None) -> np.ndarray:
    arr = np.array([np.nan if v is None else v for v in values] if width is None else values, dtype=float)
    if width is not None and arr.size == 0:
        arr = arr.reshape(0, width)
    return arr


def solution_from_dict(payload: Dict[str, Any]) -> Solution:
    nodes = payload["nodes"]
    x = np.array(nodes["x"], dtype=float)
    n_assets = x.shape[1] - 1 if x.ndim == 2 else 0
    buy = np.array(nodes["buy"], dtype=float).reshape(x.shape[0], n_assets)
    sell = np.array(nodes["sell"], dtype=float).reshape(x.shape[0], n_assets)
    baseline = payload.get("baseline")
    return Solution(
        status=payload["status"],
        method=payload.get("method", "decomposition"),
        objective=float("nan") if payload.get("objective") is None else payload["objective"],
        k0=float("nan") if payload.get("k0") is None else payload["k0"],
        x=x,
        buy=buy,
        sell=sell,
        b=np.array(nodes["b"], dtype=float),
        b_buy=np.array(nodes["b_buy"], dtype=float),
        b_sell=np.array(nodes["b_sell"], dtype=float),
        v=_array(nodes["v"]),
        w=_array(nodes["w"]),
        iterations=int(payload.get("iterations", 0)),
        counts=dict(payload.get("counts", {})),
        log=list(payload.get("log", [])),
        event_cuts={int(k): v for k, v in payload.get("event_cuts", {}).items()},
        phi=float(payload.get("phi", 0.0)),
        config_text=payload.get("config_text"),
        tree_path=payload.get("tree_path"),
        baseline=solution_from_dict(baseline) if baseline else None,
    )


def solution_from_json(text: str) -> Solution:
    return solution_from_dict(json.loads(text))


def empty_arrays(n_nodes: int, n_assets: int) -> Dict[str, np.ndarray]:
    return {
        "x": np.zeros((n_nodes, n_assets + 1)),
        "buy": np.zeros((n_nodes, n_assets)),
        "sell": np.zeros((n_nodes, n_assets)),
        "b": np.zeros(n_nodes),
        "b_buy": np.zeros(n_nodes),
        "b_sell": np.zeros(n_nodes),
        "v": np.full(n_nodes, np.nan),
        "w": np.full(n_nodes, np.nan),
    }


def fill_node(arrays: Dict[str, np.ndarray], node_id: int, values: Dict[str, float], n_assets: int) -> None:
    """Copy named LP values (x0.., buy1.., sell1.., b, b_buy, b_sell) into ``arrays``."""

    for i in range(n_assets + 1):
        arrays["x"][node_id, i] = values.get(f"x{i}", 0.0)
    for i in range(1, n_assets + 1):
        arrays["buy"][node_id, i - 1] = values.get(f"buy{i}", 0.0)
        arrays["sell"][node_id, i - 1] = values.get(f"sell{i}", 0.0)
    arrays["b"][node_id] = values.get("b", 0.0)
    arrays["b_buy"][node_id] = values.get("b_buy", 0.0)
    arrays["b_sell"][node_id] = values.get("b_sell", 0.0)


__all__ = ["Solution", "empty_arrays", "fill_node", "solution_from_dict", "solution_from_json"]
