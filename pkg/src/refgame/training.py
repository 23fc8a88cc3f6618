"""KL-divergence training with analytic Jacobian and Hessian.

The loss over a set of identification tasks is

    L(beta) = sum_tasks KL(p || q) + ridge * ||beta||^2

where p is the task's target distribution and q the model posterior.
With Phi the per-task feature matrix (rows = global parameter layout,
columns = environment objects, rows of symbols outside the description
zeroed), the gradient of one task is Phi (q - p) and its Hessian is
Phi [diag(q) - q q^T] Phi^T, which is positive semidefinite; the ridge
adds 2*ridge*beta and 2*ridge*I. Tasks sharing an (environment,
description) pair also share Phi and q, so the objective is compiled
into per-group blocks once and evaluated in vectorized form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptySelection,
    MassOverflow,
    NonFiniteLoss,
    UnknownEnvironment,
)
from .features import compute_env_stats, symbol_features
from .lexicon import Description, Lexicon, default_lexicon
from .model import Environment, ModelParams

# Probability mass a non-selected object keeps in a target distribution.
UNSELECTED_MASS = 0.005


@dataclass(frozen=True)
class IdentificationTask:
    """One identification data point: who was asked what, and what they picked."""

    env_id: str
    desc: Description
    selected: frozenset
    target: np.ndarray


@dataclass
class FitConfig:
    method: str = "bfgs"
    grad_tol: float = 1e-6
    max_iters: int = 500
    ridge: float = 1e-6
    init: str = "zeros"
    init_seed: int = 0

    def __post_init__(self):
        if self.method not in ("bfgs", "newton"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.init not in ("zeros", "gaussian"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")


@dataclass
class FitReport:
    method: str
    iterations: int
    loss: float
    grad_norm: float
    converged: bool


def target_distribution(selected: set, env: Environment) -> np.ndarray:
    """Target distribution with fixed low mass on non-selected objects.

    Non-selected objects get UNSELECTED_MASS each; the remainder is
    uniform over the selected set.
    """
    if not selected:
        raise EmptySelection("selected set is empty")
    ids = env.object_ids()
    unknown = set(selected) - set(ids)
    if unknown:
        raise KeyError(f"selected ids not in environment: {sorted(unknown)}")
    n_unselected = len(ids) - len(selected)
    rest = UNSELECTED_MASS * n_unselected
    if rest >= 1.0:
        raise MassOverflow(
            f"{n_unselected} non-selected objects at {UNSELECTED_MASS} exceed unit mass"
        )
    share = (1.0 - rest) / len(selected)
    return np.array([share if oid in selected else UNSELECTED_MASS for oid in ids])


def task_feature_matrix(
    task_desc: Description, env: Environment, lexicon: Lexicon
) -> np.ndarray:
    """The Phi matrix of one (environment, description) pair.

    Shape (total parameter dim, number of objects); rows of symbols not
    in the description stay zero.
    """
    stats = compute_env_stats(env)
    phi = np.zeros((lexicon.total_dim, len(env.objects)))
    for idx in task_desc.sorted_indices():
        sym = lexicon.symbols[idx]
        off = lexicon.offset(sym)
        for j, obj in enumerate(env.objects):
            phi[off : off + sym.dim, j] = symbol_features(sym, obj.features, stats)
    return phi


@dataclass
class _Compiled:
    """Tasks grouped by (env, description) and stacked for vectorized evaluation."""

    phi: np.ndarray  # (P, C) feature blocks stacked column-wise
    starts: np.ndarray  # (G,) first column of each group
    seg_ids: np.ndarray  # (C,) group index of each column
    replicas: np.ndarray  # (G,) number of tasks sharing each group
    p_sum: np.ndarray  # (C,) targets summed over a group's tasks
    plogp: float  # sum over tasks of sum_o p log p (constant in beta)
    n_tasks: int

    def scores(self, flat: np.ndarray) -> np.ndarray:
        return flat @ self.phi

    def softmax_segments(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-group softmax and log-sum-exp over the stacked score vector."""
        m = np.maximum.reduceat(s, self.starts)
        e = np.exp(s - m[self.seg_ids])
        z = np.add.reduceat(e, self.starts)
        return e / z[self.seg_ids], m + np.log(z)

    def loss(self, flat: np.ndarray, ridge: float) -> float:
        s = self.scores(flat)
        _, lse = self.softmax_segments(s)
        value = self.plogp - float(self.p_sum @ s) + float(self.replicas @ lse)
        return value + ridge * float(flat @ flat)

    def loss_grad(self, flat: np.ndarray, ridge: float) -> tuple[float, np.ndarray]:
        s = self.scores(flat)
        q, lse = self.softmax_segments(s)
        value = self.plogp - float(self.p_sum @ s) + float(self.replicas @ lse)
        value += ridge * float(flat @ flat)
        w = self.replicas[self.seg_ids] * q - self.p_sum
        grad = self.phi @ w + 2.0 * ridge * flat
        return value, grad

    def hessian(self, flat: np.ndarray, ridge: float) -> np.ndarray:
        s = self.scores(flat)
        q, _ = self.softmax_segments(s)
        rq = self.replicas[self.seg_ids] * q
        h = (self.phi * rq) @ self.phi.T
        # Per-group Phi q, then the rank-one corrections weighted by replicas.
        m = np.add.reduceat(self.phi * q, self.starts, axis=1)
        h -= (m * self.replicas) @ m.T
        h += 2.0 * ridge * np.eye(flat.shape[0])
        return (h + h.T) / 2.0


def compile_tasks(
    tasks: Sequence[IdentificationTask],
    envs: Mapping[str, Environment],
    lexicon: Lexicon,
) -> _Compiled:
    groups: dict[tuple, list[IdentificationTask]] = {}
    for task in tasks:
        if task.env_id not in envs:
            raise UnknownEnvironment(task.env_id)
        groups.setdefault((task.env_id, task.desc.symbols), []).append(task)

    blocks = []
    starts = []
    seg_ids = []
    replicas = []
    p_sums = []
    plogp = 0.0
    col = 0
    for gi, ((env_id, _), members) in enumerate(groups.items()):
        env = envs[env_id]
        n = len(env.objects)
        phi = task_feature_matrix(members[0].desc, env, lexicon)
        p_sum = np.zeros(n)
        for task in members:
            p = np.asarray(task.target, dtype=np.float64)
            if p.shape != (n,):
                raise DimensionMismatch(
                    f"task target has {p.shape[0]} entries, environment "
                    f"{env_id!r} has {n} objects"
                )
            p_sum += p
            nz = p > 0
            plogp += float((p[nz] * np.log(p[nz])).sum())
        blocks.append(phi)
        starts.append(col)
        seg_ids.extend([gi] * n)
        replicas.append(len(members))
        p_sums.append(p_sum)
        col += n

    if not blocks:
        p_dim = lexicon.total_dim
        return _Compiled(
            phi=np.zeros((p_dim, 0)),
            starts=np.zeros(0, dtype=np.intp),
            seg_ids=np.zeros(0, dtype=np.intp),
            replicas=np.zeros(0),
            p_sum=np.zeros(0),
            plogp=0.0,
            n_tasks=0,
        )
    return _Compiled(
        phi=np.concatenate(blocks, axis=1),
        starts=np.asarray(starts, dtype=np.intp),
        seg_ids=np.asarray(seg_ids, dtype=np.intp),
        replicas=np.asarray(replicas, dtype=np.float64),
        p_sum=np.concatenate(p_sums),
        plogp=plogp,
        n_tasks=len(tasks),
    )


def kl_loss(
    params: ModelParams,
    tasks: Sequence[IdentificationTask],
    envs: Mapping[str, Environment],
    ridge: float = 0.0,
) -> float:
    """Summed KL(p || q) over tasks, plus the optional ridge penalty."""
    compiled = compile_tasks(tasks, envs, params.lexicon)
    return compiled.loss(params.flat, ridge)


def loss_jacobian(
    params: ModelParams,
    tasks: Sequence[IdentificationTask],
    envs: Mapping[str, Environment],
    ridge: float = 0.0,
) -> np.ndarray:
    """Exact gradient of kl_loss in the global parameter layout."""
    compiled = compile_tasks(tasks, envs, params.lexicon)
    return compiled.loss_grad(params.flat, ridge)[1]


def loss_hessian(
    params: ModelParams,
    tasks: Sequence[IdentificationTask],
    envs: Mapping[str, Environment],
    ridge: float = 0.0,
) -> np.ndarray:
    """Exact Hessian of kl_loss; symmetric, PSD for ridge = 0."""
    compiled = compile_tasks(tasks, envs, params.lexicon)
    return compiled.hessian(params.flat, ridge)


def gradient_check(
    params: ModelParams,
    tasks: Sequence[IdentificationTask],
    envs: Mapping[str, Environment],
    h: float,
    ridge: float = 0.0,
) -> float:
    """Max relative error of the analytic gradient against central differences."""
    if h <= 0:
        raise ValueError("step h must be positive")
    compiled = compile_tasks(tasks, envs, params.lexicon)
    flat = params.flat.copy()
    analytic = compiled.loss_grad(flat, ridge)[1]
    worst = 0.0
    for i in range(flat.shape[0]):
        orig = flat[i]
        flat[i] = orig + h
        up = compiled.loss(flat, ridge)
        flat[i] = orig - h
        down = compiled.loss(flat, ridge)
        flat[i] = orig
        numeric = (up - down) / (2.0 * h)
        err = abs(numeric - analytic[i]) / max(1e-8, abs(analytic[i]))
        worst = max(worst, err)
    return worst


def _check_finite(value: float, grad: np.ndarray) -> None:
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NonFiniteLoss("loss or gradient became non-finite; check feature scaling")


def _wolfe_line_search(fg, x, p, f0, g0, c1=1e-4, c2=0.9, max_steps=60):
    """Strong-Wolfe line search (bracket then zoom with bisection).

    Returns (alpha, f_new, g_new) or None when no acceptable step exists
    within the iteration budget.
    """
    d0 = float(g0 @ p)
    if d0 >= 0:
        return None

    def phi(alpha):
        f, g = fg(x + alpha * p)
        return f, g, float(g @ p)

    alpha_prev, f_prev = 0.0, f0
    alpha = 1.0
    bracket = None
    for _ in range(max_steps):
        f, g, d = phi(alpha)
        if f > f0 + c1 * alpha * d0 or (alpha_prev > 0 and f >= f_prev):
            bracket = (alpha_prev, f_prev, alpha)
            break
        if abs(d) <= -c2 * d0:
            return alpha, f, g
        if d >= 0:
            bracket = (alpha, f, alpha_prev)
            break
        alpha_prev, f_prev = alpha, f
        alpha *= 2.0
    if bracket is None:
        return None

    lo, f_lo, hi = bracket
    for _ in range(max_steps):
        alpha = 0.5 * (lo + hi)
        f, g, d = phi(alpha)
        if f > f0 + c1 * alpha * d0 or f >= f_lo:
            hi = alpha
        else:
            if abs(d) <= -c2 * d0:
                return alpha, f, g
            if d * (hi - lo) >= 0:
                hi = lo
            lo, f_lo = alpha, f
        if abs(hi - lo) < 1e-16:
            break
    return None


def _bfgs(fg, x0, grad_tol, max_iters):
    """BFGS with inverse-Hessian updates and a strong-Wolfe line search.

    Once the predicted decrease falls below float resolution of the loss
    the Wolfe conditions cannot be certified, so unit steps are taken
    directly; the gradient-norm test still governs termination.
    """
    x = x0.copy()
    f, g = fg(x)
    _check_finite(f, g)
    n = x.shape[0]
    h_inv = np.eye(n)
    first_update = True
    iterations = 0
    while np.abs(g).max() > grad_tol and iterations < max_iters:
        p = -(h_inv @ g)
        d0 = float(g @ p)
        if d0 >= 0:
            h_inv = np.eye(n)
            p = -g
            d0 = float(g @ p)
        noise_floor = 16.0 * np.finfo(np.float64).eps * max(1.0, abs(f))
        if -d0 <= noise_floor:
            f_new, g_new = fg(x + p)
            step = (1.0, f_new, g_new)
        else:
            step = _wolfe_line_search(fg, x, p, f, g)
        if step is None:
            break
        alpha, f_new, g_new = step
        _check_finite(f_new, g_new)
        s = alpha * p
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            if first_update:
                h_inv *= sy / float(y @ y)
                first_update = False
            rho = 1.0 / sy
            hy = h_inv @ y
            h_inv -= rho * (np.outer(s, hy) + np.outer(hy, s))
            h_inv += rho * (rho * float(y @ hy) + 1.0) * np.outer(s, s)
        x = x + s
        f, g = f_new, g_new
        iterations += 1
    return x, f, g, iterations


def _newton(fg, hess, x0, grad_tol, max_iters):
    """Damped Newton: Cholesky solves with a Levenberg shift, Armijo backtracking."""
    x = x0.copy()
    f, g = fg(x)
    _check_finite(f, g)
    n = x.shape[0]
    iterations = 0
    while np.abs(g).max() > grad_tol and iterations < max_iters:
        h = hess(x)
        shift = 1e-8
        while True:
            try:
                chol = np.linalg.cholesky(h + shift * np.eye(n))
                break
            except np.linalg.LinAlgError:
                shift *= 10.0
                if shift > 1e12:
                    raise NonFiniteLoss("Hessian could not be regularized")
        d = -np.linalg.solve(chol.T, np.linalg.solve(chol, g))
        slope = float(g @ d)
        noise_floor = 16.0 * np.finfo(np.float64).eps * max(1.0, abs(f))
        if -slope <= noise_floor:
            # Decrease below float resolution: pure Newton phase, take the step.
            f_new, g_new = fg(x + d)
            t = 1.0
        else:
            t = 1.0
            while t > 1e-12:
                f_new, g_new = fg(x + t * d)
                if np.isfinite(f_new) and f_new <= f + 1e-4 * t * slope:
                    break
                t *= 0.5
            else:
                break
        _check_finite(f_new, g_new)
        x = x + t * d
        f, g = f_new, g_new
        iterations += 1
    return x, f, g, iterations


def fit(
    tasks: Sequence[IdentificationTask],
    envs: Mapping[str, Environment],
    config: FitConfig | None = None,
    lexicon: Lexicon | None = None,
) -> tuple[ModelParams, FitReport]:
    """Minimize the KL training loss; returns fitted params and a report.

    The objective is convex, so with a positive ridge both methods reach
    the same unique optimum.
    """
    if not tasks:
        raise ValueError("tasks must be nonempty")
    config = config or FitConfig()
    lexicon = lexicon or default_lexicon()
    compiled = compile_tasks(tasks, envs, lexicon)

    if config.init == "zeros":
        x0 = np.zeros(lexicon.total_dim)
    else:
        rng = np.random.default_rng(config.init_seed)
        x0 = rng.normal(0.0, 0.01, size=lexicon.total_dim)

    def fg(x):
        value, grad = compiled.loss_grad(x, config.ridge)
        _check_finite(value, grad)
        return value, grad

    if config.method == "bfgs":
        x, f, g, iterations = _bfgs(fg, x0, config.grad_tol, config.max_iters)
    else:
        x, f, g, iterations = _newton(
            fg, lambda x_: compiled.hessian(x_, config.ridge), x0, config.grad_tol, config.max_iters
        )

    grad_norm = float(np.abs(g).max())
    report = FitReport(
        method=config.method,
        iterations=iterations,
        loss=float(f),
        grad_norm=grad_norm,
        converged=grad_norm <= config.grad_tol,
    )
    return ModelParams(lexicon, x), report
