"""Deterministic simulator of federated AltGD-Min.

Node ``l`` stores the sketches of a column shard ``S_l``.  Per iteration it
receives the current basis, updates its own ``b_k`` locally and sends back
only the n x r partial gradient.  The center sums the partials in node
order, takes the projected gradient step and broadcasts the new basis.
The initialization runs the block power method the same way.

Every message crosses :meth:`Center.broadcast` / :meth:`Center.gather`, which
check the schema (only n x r blocks and scalar statistics may travel) and
meter the payload in a :class:`CommLedger`.

Metrics in the run trace read the nodes' ``B`` blocks through an
evaluation-only tap that is not part of the protocol and is not metered.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._linalg import auto_power_iters, fix_signs, orthonormalize
from .exceptions import ContractViolation, DimensionError
from .gdmin import (
    GdConfig,
    drive,
    gd_project_step,
    gradient_U,
    project_designs,
    solve_columns,
)
from .initialization import InitConfig, build_init_matrix, init_rows
from .model import partition_sizes, split_for_sampling

UP = "node->center"
DOWN = "center->node"

BLOCK_KINDS = {"partial_grad", "pm_partial", "broadcast_U", "broadcast_V"}
STAT_KINDS = {"init_stat"}


@dataclass
class Topology:
    L: int
    shards: list

    def __post_init__(self):
        flat = np.concatenate([np.asarray(s, dtype=int) for s in self.shards]) if self.shards else []
        if len(self.shards) != self.L or any(len(s) == 0 for s in self.shards):
            raise DimensionError("every one of the L shards must be nonempty")
        if len(np.unique(flat)) != len(flat):
            raise DimensionError("shards overlap")

    @property
    def q(self):
        return sum(len(s) for s in self.shards)

    @property
    def sizes(self):
        return [len(s) for s in self.shards]


def partition_columns(q, L, strategy="contiguous"):
    """Split columns ``0..q-1`` over ``L`` nodes (larger shards first)."""
    if not 1 <= L <= q:
        raise DimensionError(f"need 1 <= L <= q, got L={L}, q={q}")
    if strategy == "contiguous":
        shards, start = [], 0
        for size in partition_sizes(q, L):
            shards.append(list(range(start, start + size)))
            start += size
    elif strategy == "round_robin":
        shards = [list(range(l, q, L)) for l in range(L)]
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return Topology(L, shards)


@dataclass
class Message:
    round: int
    node_id: int
    kind: str
    payload: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return tuple(self.payload.shape)

    @property
    def floats(self):
        return int(self.payload.size)

    def record(self, direction):
        return {"round": self.round, "node_id": self.node_id, "kind": self.kind,
                "direction": direction, "shape": list(self.shape), "floats": self.floats}


class CommLedger:
    def __init__(self):
        self.records = []

    def add(self, msg: Message, direction):
        self.records.append(msg.record(direction))

    @property
    def total(self):
        return sum(r["floats"] for r in self.records)

    def total_by(self, kind=None, direction=None):
        return sum(r["floats"] for r in self.records
                   if (kind is None or r["kind"] == kind)
                   and (direction is None or r["direction"] == direction))

    def per_node(self, node_id):
        return sum(r["floats"] for r in self.records if r["node_id"] == node_id)

    def write_jsonl(self, fh):
        for r in self.records:
            fh.write(json.dumps(r) + "\n")


class Node:
    """Holds one column shard; its ``B`` block never leaves the node."""

    def __init__(self, node_id, ms, sample_split=False, T=None):
        self.node_id = node_id
        self.ms = ms
        self.split = split_for_sampling(ms, T) if sample_split else None
        self._X0 = None
        self._B = None
        self._U = None

    def part(self, tau):
        if self.split is None or tau is None:
            return self.ms
        return self.split[tau]

    def receive_basis(self, U):
        self._U = U

    def init_stat(self, c_tilde_mode, split_alpha):
        """Local sum of squared init observations (and max column energy for auto C~)."""
        alpha_ms, _ = init_rows(self.part(0), split_alpha)
        y = alpha_ms.y
        stat = [np.sum(y ** 2)]
        if c_tilde_mode == "auto":
            stat.append(np.max(np.sum(y ** 2, axis=1)))
        return np.array(stat)

    def build_X0(self, alpha, split_alpha):
        _, x0_ms = init_rows(self.part(0), split_alpha)
        self._X0 = build_init_matrix(x0_ms, alpha)

    def pm_partial(self, V):
        return self._X0 @ (self._X0.T @ V)

    def local_min_B(self, tau):
        ms = self.part(tau)
        self._B = solve_columns(project_designs(ms.A, self._U), ms.y)

    def partial_grad(self, tau):
        return gradient_U(self._U, self._B, self.part(tau))

    def evaluation_tap_B(self):
        return self._B


class Center:
    def __init__(self, nodes, n, r, max_workers=None):
        self.nodes = nodes
        self.n, self.r = n, r
        self.ledger = CommLedger()
        self.round = 0
        self._pool = ThreadPoolExecutor(max_workers) if max_workers and max_workers > 1 else None

    def _map(self, fn):
        if self._pool is None:
            return [fn(node) for node in self.nodes]
        return list(self._pool.map(fn, self.nodes))

    def _check(self, msg):
        if msg.kind in BLOCK_KINDS:
            if msg.shape != (self.n, self.r):
                raise ContractViolation(f"{msg.kind} from node {msg.node_id} has shape {msg.shape}")
        elif msg.kind in STAT_KINDS:
            if msg.payload.ndim != 1 or msg.payload.size > 2:
                raise ContractViolation(f"{msg.kind} payload must be at most two scalars")
        else:
            raise ContractViolation(f"unknown message kind {msg.kind!r}")

    def broadcast(self, kind, block):
        for node in self.nodes:
            msg = Message(self.round, node.node_id, kind, block)
            self._check(msg)
            self.ledger.add(msg, DOWN)

    def gather(self, kind, fn):
        """Collect one message per node; payloads are returned in node order."""
        out = []
        for node, p in zip(self.nodes, self._map(fn)):
            msg = Message(self.round, node.node_id, kind, np.asarray(p))
            self._check(msg)
            self.ledger.add(msg, UP)
            out.append(msg.payload)
        return out

    def gather_sum(self, kind, fn):
        total = None
        for p in self.gather(kind, fn):
            total = p.copy() if total is None else total + p
        return total


def federated_power_init(center: Center, r, iters=None, tol=1e-9, seed=0, q=None):
    """Block power method on ``X0 X0^T`` with node-local ``X0`` shards.

    Mirrors :func:`lrccs._linalg.power_method` step for step; each round
    broadcasts V and gathers ``X0_l (X0_l^T V)``.
    """
    n = center.n
    if iters is None:
        iters = auto_power_iters(n, q or n)
    V = orthonormalize(np.random.default_rng(seed).standard_normal((n, r)), "power-method start")
    evals = np.zeros(r)
    rounds = 0
    for _ in range(iters):
        center.broadcast("broadcast_V", V)
        W = center.gather_sum("pm_partial", lambda node: node.pm_partial(V))
        if not np.any(W):
            raise ContractViolation("zero matrix has no top-r subspace")
        center.round += 1
        rounds += 1
        evals = np.sort(np.linalg.eigvalsh(V.T @ W))[::-1]
        Vn = orthonormalize(W, "power-method iterate")
        gap = float(np.linalg.norm(Vn - V @ (V.T @ Vn)))
        V = Vn
        if gap < tol:
            break
    if evals[0] <= 0:
        raise ContractViolation("zero matrix has no top-r subspace")
    return fix_signs(V), evals, rounds


class FederatedEngine:
    def __init__(self, ms, topology: Topology, r, sample_split=False, T=None, max_workers=None):
        if topology.q != ms.q:
            raise DimensionError(f"topology covers {topology.q} columns, data has {ms.q}")
        self.n, self.q, self.m = ms.n, ms.q, ms.m
        self.topology = topology
        self.nodes = [Node(l, ms.columns(s), sample_split, T)
                      for l, s in enumerate(topology.shards)]
        self.center = Center(self.nodes, ms.n, r, max_workers)
        self.sample_split = sample_split
        self._T = T
        self._U_at_nodes = None
        self.pm_rounds = 0

    @property
    def comm_floats(self):
        return self.center.ledger.total

    @property
    def ledger(self):
        return self.center.ledger

    def _part_size(self, tau):
        return self.nodes[0].part(tau).m

    def initialize(self, r, init_cfg: InitConfig, rank_b=85.0):
        if r == "auto" or r != self.center.r:
            raise ValueError("the federated solver needs the explicit rank it was built with")
        c = self.center
        stats = c.gather("init_stat", lambda node: node.init_stat(init_cfg.c_tilde_mode,
                                                                  init_cfg.split_alpha))
        rows = self.nodes[0].part(0)
        m0 = init_rows(rows, init_cfg.split_alpha)[0].m
        energy = sum(s[0] for s in stats)
        if init_cfg.c_tilde_mode == "auto":
            if energy == 0:
                raise ValueError("all-zero observations")
            c_tilde = 9.0 * self.q * max(s[1] for s in stats) / energy
        else:
            c_tilde = init_cfg.c_tilde
        alpha = c_tilde * energy / (m0 * self.q)
        for node in self.nodes:
            node.build_X0(alpha, init_cfg.split_alpha)
        U0, evals, rounds = federated_power_init(c, r, init_cfg.power_iters, init_cfg.power_tol,
                                                 init_cfg.power_seed, self.q)
        self.pm_rounds = rounds
        return U0, float(math.sqrt(evals[0])), {"method": "federated-power", "rounds": rounds,
                                                "alpha": alpha, "c_tilde": c_tilde, "rank": r}

    def _ensure_basis(self, U):
        if self._U_at_nodes is not U:
            self.center.broadcast("broadcast_U", U)
            for node in self.nodes:
                node.receive_basis(U)
            self._U_at_nodes = U

    def min_B(self, U, t):
        self._ensure_basis(U)
        tau = None if (t is None or not self.sample_split) else t + 1
        for node in self.nodes:
            node.local_min_B(tau)
        return self._assemble_B()

    def _assemble_B(self):
        B = np.empty((self.center.r, self.q))
        for s, node in zip(self.topology.shards, self.nodes):
            B[:, s] = node.evaluation_tap_B()
        return B

    def grad_step(self, U, B, t, eta):
        tau = None if not self.sample_split else self._T + t + 1
        grad = self.center.gather_sum("partial_grad", lambda node: node.partial_grad(tau))
        self.center.round += 1
        return gd_project_step(U, grad, eta, self._part_size(tau))


def run_federated(ms, topology: Topology, cfg: GdConfig | None = None,
                  init_cfg: InitConfig | None = None, gt=None, max_workers=None):
    """Federated AltGD-Min; returns ``(FactoredEstimate, RunTrace, CommLedger)``.

    The trace's ``comm_floats`` column is the cumulative metered payload.
    """
    cfg = cfg or GdConfig()
    r = cfg.rank
    if r == "auto":
        if gt is None:
            raise ValueError("the federated solver needs an explicit rank")
        r = gt.r
        cfg = GdConfig(**{**cfg.__dict__, "rank": r})
    engine = FederatedEngine(ms, topology, r, cfg.sample_split, cfg.T_max, max_workers)
    est, trace = drive(engine, cfg, init_cfg, gt)
    trace.aux["pm_rounds"] = engine.pm_rounds
    return est, trace, engine.ledger


def closed_form_comm(L, n, r, pm_rounds, gd_steps, n_stats=1):
    """Expected ledger totals: 2 L n r per power round and per gradient step,
    one extra basis broadcast for the final B solve, and the init scalars."""
    block = L * n * r
    return {
        "pm": 2 * block * pm_rounds,
        "gd": 2 * block * gd_steps + block,
        "init_stat": L * n_stats,
    }
