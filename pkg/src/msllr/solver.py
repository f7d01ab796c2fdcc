"""Manifold-structured + locally low-rank (MS-LLR) MRF reconstruction.

Each outer iteration runs

1. a subgradient step on the data term and the patch-graph penalty followed
   by projection onto the dictionary subspace (``subgradient_step``),
2. singular value thresholding of every patch (``svt_patches``),
3. the closed-form data update of the split proximal problem (``x_update``),

then evaluates the objective, tests the relative-cost stopping rule and, if
the loop continues, re-matches the parameter maps, rebuilds the graph
Laplacian and rescales the manifold weight.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import patches as pg
from .acquisition import AcquisitionOperator
from .dictionary import Dictionary, SubspaceBasis, compute_subspace_basis, match, project_fingerprints
from .phantom import ParameterMaps

log = logging.getLogger(__name__)

LAMBDA1_RULES = ("max_entry", "max_degree", "spectral_norm", "inverse_max_entry", "constant")


class DivergenceError(RuntimeError):
    """The cost grew by more than the guard factor over the guard window."""


@dataclass(frozen=True)
class SolverConfig:
    mu: float = 1.0
    lambda1_0: float = 0.1
    lambda2: float = 0.1
    beta: float = 0.2
    n_max: int = 50
    tol: float = 1e-5
    patch_size: int = 11
    stride: int = 5
    sigma: float | str = 2.0
    knn: int | None = None
    subspace_energy: float = 0.9999
    subspace_rank: int | None = None
    coverage_exact: bool = True
    lambda1_rule: str = "inverse_max_entry"
    density_compensated_init: bool = False
    background_threshold: float = 0.1
    divergence_factor: float = 10.0
    divergence_window: int = 5

    def __post_init__(self):
        if not (self.mu > 0 and self.beta > 0):
            raise ValueError("mu and beta must be positive")
        if self.lambda1_0 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1_0 and lambda2 must be nonnegative")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.lambda1_rule not in LAMBDA1_RULES:
            raise ValueError(f"lambda1_rule must be one of {LAMBDA1_RULES}")
        if not 0.0 <= self.background_threshold < 1.0:
            raise ValueError("background_threshold must lie in [0, 1)")
        if self.sigma != "auto" and not (isinstance(self.sigma, (int, float)) and self.sigma > 0):
            raise ValueError("sigma must be 'auto' or a positive number")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class SolverState:
    x: np.ndarray
    maps: ParameterMaps
    laplacian: np.ndarray
    lambda1_n: float
    z: np.ndarray | None = None
    p_patches: np.ndarray | None = None  # (Npatch, p*p, L) stack
    cost_history: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


@dataclass
class Problem:
    """Everything the iterations need besides the state."""

    b: np.ndarray
    op: AcquisitionOperator
    dictionary: Dictionary
    basis: SubspaceBasis
    idx: pg.PatchIndex
    cfg: SolverConfig


def make_problem(b, op: AcquisitionOperator, d: Dictionary, cfg: SolverConfig,
                 basis: SubspaceBasis | None = None) -> Problem:
    b = np.asarray(b)
    if b.size == 0:
        raise ValueError("empty measurements")
    if b.shape != op.measurement_shape:
        raise ValueError(f"measurements of shape {b.shape} do not match the operator {op.measurement_shape}")
    if op.frames != d.length:
        raise ValueError(f"operator has {op.frames} frames, dictionary atoms have {d.length}")
    if basis is None:
        basis = compute_subspace_basis(d, cfg.subspace_energy, cfg.subspace_rank)
    idx = pg.build_patch_index(*op.shape, cfg.patch_size, cfg.stride)
    return Problem(b, op, d, basis, idx, cfg)


def laplacian_scale(lap: np.ndarray, rule: str) -> float:
    """The factor multiplying ``lambda1_0`` for a given Laplacian."""
    if rule == "max_entry":
        return float(lap.max())
    if rule == "max_degree":
        return float(np.diag(lap).max())
    if rule == "spectral_norm":
        return float(np.linalg.eigvalsh(lap)[-1])
    if rule == "inverse_max_entry":
        m = float(lap.max())
        return 1.0 / m if m > 0 else 0.0
    if rule == "constant":
        return 1.0
    raise ValueError(f"unknown lambda1 rule {rule!r}")


def graph_from_maps(maps: ParameterMaps, prob: Problem) -> np.ndarray:
    cfg = prob.cfg
    w = pg.compute_weights(maps, prob.idx, cfg.sigma, cfg.knn)
    return pg.build_laplacian(w)


def initialize(b, op: AcquisitionOperator, d: Dictionary, cfg: SolverConfig,
               basis: SubspaceBasis | None = None) -> tuple[SolverState, Problem]:
    """``X0 = A* b``, ``M0 = match(X0)``, ``L0`` from ``M0``.

    The scaling rule that rescales ``lambda1`` after every refresh is applied
    to ``L0`` as well, so the first step already sees a normalized weight.
    """
    prob = make_problem(b, op, d, cfg, basis)
    if cfg.density_compensated_init:
        x = op.adjoint_density_compensated(prob.b)
    else:
        x = op.adjoint(prob.b)
    maps = match(x, d, pd_threshold=cfg.background_threshold)
    if cfg.lambda1_0 > 0:
        lap = graph_from_maps(maps, prob)
        lambda1 = cfg.lambda1_0 * laplacian_scale(lap, cfg.lambda1_rule)
    else:
        lap = np.zeros((prob.idx.n_patches,) * 2)
        lambda1 = 0.0
    state = SolverState(x=x, maps=maps, laplacian=lap, lambda1_n=lambda1)
    return state, prob


def _graph_term(stack, lap):
    # Q(X) L with patches along the first axis of the stack
    n = stack.shape[0]
    flat = stack.reshape(n, -1)
    return (lap.T @ flat).reshape(stack.shape)


def subgradient_step(state: SolverState, prob: Problem) -> np.ndarray:
    """``Z = P_S(X - mu [A*(A X - b) + lambda1 Q*(Q(X) L)])``.

    The graph term carries the constant 1 of the update rule, i.e. it is half
    the gradient of ``lambda1 Tr(Q L Q^H)``.
    """
    cfg = prob.cfg
    x = state.x
    grad = prob.op.adjoint(prob.op.forward(x) - prob.b)
    if state.lambda1_n != 0:
        stack = pg.patch_stack(x, prob.idx)
        grad = grad + state.lambda1_n * pg.scatter_stack(_graph_term(stack, state.laplacian), prob.idx)
    return project_fingerprints(x - cfg.mu * grad, prob.basis)


def svt(mat, threshold: float) -> np.ndarray:
    """Soft-threshold the singular values of ``mat`` (or of every matrix in a stack)."""
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    s = np.maximum(s - threshold, 0.0)
    return (u * s[..., None, :]) @ vh


def svt_patches(x, idx: pg.PatchIndex, beta: float) -> np.ndarray:
    """Per-patch SVT of the ``p*p x L`` patch matrices at threshold ``1 / beta``.

    Returns the ``(Npatch, p*p, L)`` stack of thresholded patches.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    return svt(pg.patch_stack(x, idx), 1.0 / beta)


def x_update(z, p_stack, idx: pg.PatchIndex, cfg: SolverConfig) -> np.ndarray:
    """Closed-form minimizer over X of ``||X - Z||^2 / (2 mu) + lambda2 beta / 2 sum_i ||P_i - Q_i(X)||^2``.

    With ``coverage_exact`` the denominator counts the patches covering each
    pixel; otherwise the scalar ``1 + mu lambda2 beta`` is used, which is the
    exact minimizer only for non-overlapping patches.
    """
    c = cfg.mu * cfg.lambda2 * cfg.beta
    if c == 0:
        return np.array(z, copy=True)
    back = pg.scatter_stack(p_stack, idx)
    if cfg.coverage_exact:
        denom = 1.0 + c * idx.coverage[:, :, None]
    else:
        denom = 1.0 + c
    return (np.asarray(z) + c * back) / denom


def cost_terms(x, lambda1: float, lap, prob: Problem) -> dict:
    """The three objective terms at ``x``, already weighted, plus their sum."""
    cfg = prob.cfg
    r = prob.op.forward(x) - prob.b
    data = 0.5 * np.vdot(r, r).real
    stack = pg.patch_stack(x, prob.idx)
    manifold = 0.0
    if lambda1 != 0:
        manifold = lambda1 * max(np.vdot(stack, _graph_term(stack, lap)).real, 0.0)
    nuclear = 0.0
    if cfg.lambda2 != 0:
        nuclear = cfg.lambda2 * float(np.linalg.svd(stack, compute_uv=False).sum())
    return {"data_term": float(data), "manifold_term": float(manifold),
            "nuclear_term": float(nuclear), "cost": float(data + manifold + nuclear)}


def compute_cost(state: SolverState, prob: Problem) -> float:
    return cost_terms(state.x, state.lambda1_n, state.laplacian, prob)["cost"]


def _stop(prev: float, cur: float, tol: float) -> bool:
    if cur == 0.0:
        return True
    return prev / cur - 1.0 < tol


def check_divergence(history, factor: float = 10.0, window: int = 5) -> None:
    """Raise ``DivergenceError`` if the last cost exceeds ``factor`` times the cost ``window`` steps earlier.

    With the relative-cost stopping rule a single increase already ends the
    loop, so in practice this guard catches oscillating or non-finite costs.
    """
    cost = history[-1]
    if not np.isfinite(cost):
        raise DivergenceError(f"non-finite cost at iteration {len(history) - 1}")
    if len(history) > window and cost > factor * history[-1 - window]:
        raise DivergenceError(
            f"cost grew from {history[-1 - window]:.4e} to {cost:.4e} over {window} iterations "
            f"(iteration {len(history) - 1}); reduce mu or lambda1_0")


def iterate(state: SolverState, prob: Problem, callback=None) -> SolverState:
    """Run the outer loop in place on ``state`` and return it."""
    cfg = prob.cfg
    if not state.cost_history:
        state.cost_history.append(compute_cost(state, prob))
    for n in range(1, cfg.n_max + 1):
        t0 = time.perf_counter()
        state.z = subgradient_step(state, prob)
        state.p_patches = svt_patches(state.z, prob.idx, cfg.beta)
        state.x = x_update(state.z, state.p_patches, prob.idx, cfg)
        terms = cost_terms(state.x, state.lambda1_n, state.laplacian, prob)
        cost = terms["cost"]
        prev = state.cost_history[-1]
        state.cost_history.append(cost)
        state.iterations = n
        state.diagnostics.append({"iter": n, **terms, "lambda1_n": state.lambda1_n,
                                  "wall_ms": 1e3 * (time.perf_counter() - t0)})
        log.debug("iter %d cost %.6e (data %.3e, manifold %.3e, nuclear %.3e)", n, cost,
                  terms["data_term"], terms["manifold_term"], terms["nuclear_term"])
        if callback is not None:
            callback(state)
        check_divergence(state.cost_history, cfg.divergence_factor, cfg.divergence_window)
        if _stop(prev, cost, cfg.tol):
            state.converged = True
            break
        if cfg.lambda1_0 > 0:
            state.maps = match(state.x, prob.dictionary, pd_threshold=cfg.background_threshold)
            state.laplacian = graph_from_maps(state.maps, prob)
            state.lambda1_n = cfg.lambda1_0 * laplacian_scale(state.laplacian, cfg.lambda1_rule)
    return state


@dataclass
class Reconstruction:
    x: np.ndarray
    maps: ParameterMaps
    cost_history: list
    diagnostics: list
    iterations: int
    converged: bool


def reconstruct(b, op: AcquisitionOperator, d: Dictionary, cfg: SolverConfig = SolverConfig(),
                basis: SubspaceBasis | None = None, callback=None) -> Reconstruction:
    """Full MS-LLR reconstruction; ``lambda1_0 = 0`` gives the LLR-only variant."""
    state, prob = initialize(b, op, d, cfg, basis)
    iterate(state, prob, callback)
    maps = match(state.x, d, pd_threshold=cfg.background_threshold)
    return Reconstruction(state.x, maps, state.cost_history, state.diagnostics, state.iterations, state.converged)


def reconstruct_llr(b, op, d, cfg: SolverConfig = SolverConfig(), basis=None) -> Reconstruction:
    return reconstruct(b, op, d, replace(cfg, lambda1_0=0.0), basis)


def zero_filled(b, op: AcquisitionOperator, d: Dictionary, density_compensated: bool = False,
                background_threshold: float = SolverConfig.background_threshold):
    """Baseline ``match(A* b)`` without iterations; returns ``(x, maps)``."""
    x = op.adjoint_density_compensated(b) if density_compensated else op.adjoint(b)
    return x, match(x, d, pd_threshold=background_threshold)
