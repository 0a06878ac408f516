"""Discrete optimal transport solvers.

* :func:`transport_simplex` -- exact LP solution by the transportation simplex
  (north-west corner start, MODI potentials, Bland tie-breaking).
* :func:`sinkhorn` / :func:`sinkhorn_unbalanced` -- entropic OT in the log
  domain, the latter with a KL-relaxed target marginal.
* :func:`assignment_bruteforce` -- permutation enumeration, a test oracle for
  uniform square problems.
"""

from collections import deque
from dataclasses import dataclass
import itertools

import numpy as np

from ._validation import NumericalError, ValidationError, check_cost_matrix, check_probability_vector

__all__ = [
    "OtProblem",
    "TransportPlan",
    "SinkhornConfig",
    "transport_simplex",
    "sinkhorn",
    "sinkhorn_unbalanced",
    "sinkhorn_batch",
    "assignment_bruteforce",
    "round_to_feasible",
    "wasserstein1",
]


@dataclass(frozen=True, eq=False)
class OtProblem:
    """Cost matrix ``C`` (n x m) with source weights ``a`` and target weights ``b``."""

    cost: np.ndarray
    source_weights: np.ndarray = None
    target_weights: np.ndarray = None

    def __post_init__(self):
        C = check_cost_matrix(self.cost)
        n, m = C.shape
        a = np.full(n, 1.0 / n) if self.source_weights is None else self.source_weights
        b = np.full(m, 1.0 / m) if self.target_weights is None else self.target_weights
        a = check_probability_vector(a, "source_weights")
        b = check_probability_vector(b, "target_weights")
        if a.size != n or b.size != m:
            raise ValidationError(f"weights of length {a.size}, {b.size} do not match cost shape {C.shape}")
        object.__setattr__(self, "cost", C)
        object.__setattr__(self, "source_weights", a)
        object.__setattr__(self, "target_weights", b)

    @property
    def shape(self):
        return self.cost.shape

    def to_dict(self):
        return {
            "cost": self.cost.tolist(),
            "source_weights": self.source_weights.tolist(),
            "target_weights": self.target_weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        if "cost" not in d:
            raise ValidationError("OT problem needs a 'cost' matrix")
        return cls(d["cost"], d.get("source_weights"), d.get("target_weights"))


@dataclass(frozen=True, eq=False)
class TransportPlan:
    coupling: np.ndarray
    cost: float
    marginal_violation: float
    target_kl: float = 0.0
    n_iter: int = 0

    def to_dict(self):
        return {
            "coupling": self.coupling.tolist(),
            "cost": self.cost,
            "marginal_violation": self.marginal_violation,
            "target_kl": self.target_kl,
            "n_iter": self.n_iter,
        }


@dataclass(frozen=True)
class SinkhornConfig:
    """Entropic regularization ``eta``, sweep count and optional soft-marginal weight.

    ``tol`` enables an early exit once the row-marginal error falls below it;
    by default the solver runs exactly ``iterations`` sweeps.
    """

    eta: float = 0.02
    iterations: int = 500
    xi_b: float = None
    tol: float = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ValidationError("eta must be positive")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if self.xi_b is not None and not self.xi_b > 0:
            raise ValidationError("xi_b must be positive when given")


def _marginal_violation(T, a, b):
    return float(max(np.abs(T.sum(axis=1) - a).max(), np.abs(T.sum(axis=0) - b).max()))


# -- transportation simplex -------------------------------------------------


def _northwest_corner(a, b):
    n, m = a.size, b.size
    X = np.zeros((n, m))
    basis = []
    supply, demand = a.copy(), b.copy()
    i = j = 0
    while True:
        q = min(supply[i], demand[j])
        X[i, j] = q
        basis.append((i, j))
        supply[i] -= q
        demand[j] -= q
        if i == n - 1 and j == m - 1:
            break
        # Exactly one index advances per cell so the basis is a spanning tree
        # of n + m - 1 cells even when some of them carry zero flow.
        if j == m - 1 or (i < n - 1 and supply[i] <= demand[j]):
            i += 1
        else:
            j += 1
    return X, basis


def _potentials(C, basis, n, m):
    u = np.full(n, np.nan)
    v = np.full(m, np.nan)
    rows = [[] for _ in range(n)]
    cols = [[] for _ in range(m)]
    for i, j in basis:
        rows[i].append(j)
        cols[j].append(i)
    u[0] = 0.0
    stack = [("r", 0)]
    while stack:
        kind, k = stack.pop()
        if kind == "r":
            for j in rows[k]:
                if np.isnan(v[j]):
                    v[j] = C[k, j] - u[k]
                    stack.append(("c", j))
        else:
            for i in cols[k]:
                if np.isnan(u[i]):
                    u[i] = C[i, k] - v[k]
                    stack.append(("r", i))
    return u, v, rows, cols


def _tree_path(rows, cols, start_row, end_col):
    """Cells on the unique tree path from row ``start_row`` to column ``end_col``."""
    prev = {("r", start_row): None}
    queue = deque([("r", start_row)])
    target = ("c", end_col)
    while queue:
        node = queue.popleft()
        if node == target:
            break
        kind, k = node
        nbrs = [("c", j) for j in rows[k]] if kind == "r" else [("r", i) for i in cols[k]]
        for nb in nbrs:
            if nb not in prev:
                prev[nb] = node
                queue.append(nb)
    cells = []
    node = target
    while prev[node] is not None:
        p = prev[node]
        cells.append((p[1], node[1]) if p[0] == "r" else (node[1], p[1]))
        node = p
    cells.reverse()
    return cells


def _flows_on_tree(basis, a, b):
    """Solve the transportation equalities restricted to a spanning-tree basis."""
    n, m = a.size, b.size
    X = np.zeros((n, m))
    rem_r, rem_c = a.astype(float).copy(), b.astype(float).copy()
    deg_r = np.zeros(n, dtype=int)
    deg_c = np.zeros(m, dtype=int)
    adj_r = [set() for _ in range(n)]
    adj_c = [set() for _ in range(m)]
    for i, j in basis:
        adj_r[i].add(j)
        adj_c[j].add(i)
        deg_r[i] += 1
        deg_c[j] += 1
    leaves = deque([("r", i) for i in range(n) if deg_r[i] == 1] + [("c", j) for j in range(m) if deg_c[j] == 1])
    remaining = len(basis)
    while remaining:
        kind, k = leaves.popleft()
        if kind == "r":
            if deg_r[k] != 1:
                continue
            (j,) = adj_r[k]
            X[k, j] = rem_r[k]
            rem_c[j] -= rem_r[k]
            adj_r[k].clear()
            adj_c[j].discard(k)
            deg_r[k] = 0
            deg_c[j] -= 1
            if deg_c[j] == 1:
                leaves.append(("c", j))
        else:
            if deg_c[k] != 1:
                continue
            (i,) = adj_c[k]
            X[i, k] = rem_c[k]
            rem_r[i] -= rem_c[k]
            adj_c[k].clear()
            adj_r[i].discard(k)
            deg_c[k] = 0
            deg_r[i] -= 1
            if deg_r[i] == 1:
                leaves.append(("r", i))
        remaining -= 1
    return X


def transport_simplex(problem, max_pivots=None):
    """Exact optimal transport by the transportation simplex method.

    Parameters
    ----------
    problem : OtProblem
    max_pivots : int, optional
        Safety cap on pivots (default ``50 * n * m + 100``).

    Returns
    -------
    TransportPlan
        ``n_iter`` holds the number of pivots performed.

    Notes
    -----
    Pivoting runs on weights perturbed by ``a_i + delta``, ``b_m + n * delta``,
    which makes every basis nondegenerate; the flows of the final basis are then
    recomputed for the original weights. The entering cell has the most negative
    reduced cost; ties in entering and leaving cells go to the first cell in
    row-major order (Bland's rule).
    """
    C, a, b = problem.cost, problem.source_weights, problem.target_weights
    n, m = C.shape
    if n * m > 10**6:
        raise ValidationError("transport_simplex supports at most 10^6 cells")
    if n == 1 or m == 1:
        X = np.outer(a, b)
        return TransportPlan(X, float((X * C).sum()), _marginal_violation(X, a, b))

    delta = 1e-9 / (n + m)
    ap = a + delta
    bp = b.copy()
    bp[-1] += n * delta
    X, basis = _northwest_corner(ap, bp)
    in_basis = np.zeros((n, m), dtype=bool)
    for cell in basis:
        in_basis[cell] = True
    tol = 1e-12 * max(1.0, float(C.max()))
    limit = max_pivots if max_pivots is not None else 50 * n * m + 100
    pivots = 0
    while True:
        u, v, rows, cols = _potentials(C, basis, n, m)
        R = C - u[:, None] - v[None, :]
        R[in_basis] = 0.0
        k = int(np.argmin(R))  # most negative; argmin takes the first on ties
        if R.flat[k] >= -tol:
            break
        if pivots >= limit:
            raise NumericalError(f"transport_simplex exceeded {limit} pivots")
        ei, ej = divmod(k, m)
        path = _tree_path(rows, cols, ei, ej)
        minus = path[0::2]
        plus = path[1::2]
        theta = min(X[c] for c in minus)
        leaving = min(c for c in minus if X[c] <= theta)
        for c in minus:
            X[c] -= theta
        for c in plus:
            X[c] += theta
        X[ei, ej] = theta
        X[leaving] = 0.0
        basis.remove(leaving)
        basis.append((ei, ej))
        in_basis[leaving] = False
        in_basis[ei, ej] = True
        pivots += 1

    X = _flows_on_tree(basis, a, b)
    np.maximum(X, 0.0, out=X)
    return TransportPlan(X, float((X * C).sum()), _marginal_violation(X, a, b), n_iter=pivots)


def wasserstein1(x, y, metric=None):
    """Exact W1 between uniform empirical measures on point sets ``x`` and ``y``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[0] == 1 and x.shape[1] != y.shape[1]:
        x = x.T
    if y.shape[0] == 1 and y.shape[1] != x.shape[1]:
        y = y.T
    C = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=-1) if metric is None else metric(x, y)
    return transport_simplex(OtProblem(C)).cost


# -- Sinkhorn ---------------------------------------------------------------

# Below this bound on C / eta the kernel exp(-C / eta) has no underflow in
# float64, and log-sum-exp can be evaluated as a stabilized kernel product.
_KERNEL_SAFE = 600.0


def _lse_rows(logK, g):
    """log sum_j exp(logK[..., i, j] + g[..., j]) for batched inputs."""
    x = logK + g[..., None, :]
    mx = x.max(axis=-1)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(x - mx[..., None]).sum(axis=-1)) + mx


def _log_kernel_product(K, g):
    """log(K @ exp(g)) with the max of ``g`` factored out."""
    mx = g.max(axis=-1, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.matmul(K, np.exp(g - mx)[..., None])[..., 0]) + mx


def _log_weights(w):
    with np.errstate(divide="ignore"):
        return np.log(w)


def sinkhorn_batch(costs, a, b, cfg):
    """Run log-domain Sinkhorn on a stack of cost matrices sharing marginals.

    Parameters
    ----------
    costs : ndarray of shape (batch, n, m)
    a, b : ndarray of shape (n,) and (m,)
    cfg : SinkhornConfig

    Returns
    -------
    couplings : ndarray of shape (batch, n, m)
    n_iter : int
        Sweeps actually run.
    """
    C = np.asarray(costs, dtype=float)
    eta = cfg.eta
    scaled = C / eta
    if not np.all(np.isfinite(scaled)):
        finite = scaled[np.isfinite(scaled)]
        lo, hi = (finite.min(), finite.max()) if finite.size else (np.nan, np.nan)
        raise NumericalError(f"non-finite kernel exponent: C/eta has non-finite entries, finite range [{lo:.3g}, {hi:.3g}]")
    logK = -scaled
    loga, logb = _log_weights(a), _log_weights(b)
    fi = 1.0 if cfg.xi_b is None else cfg.xi_b / (cfg.xi_b + eta)
    B, n, m = C.shape
    f = np.zeros((B, n))
    g = np.zeros((B, m))

    fast = scaled.max() < _KERNEL_SAFE
    if fast:
        K = np.exp(logK)
        Kt = np.ascontiguousarray(np.swapaxes(K, 1, 2))

        def row_lse(g):
            return _log_kernel_product(K, g)

        def col_lse(f):
            return _log_kernel_product(Kt, f)
    else:
        logKt = np.ascontiguousarray(np.swapaxes(logK, 1, 2))

        def row_lse(g):
            return _lse_rows(logK, g)

        def col_lse(f):
            return _lse_rows(logKt, f)

    it = 0
    for it in range(1, cfg.iterations + 1):
        f = loga - row_lse(g)
        g = fi * (logb - col_lse(f))
        if cfg.tol is not None and cfg.xi_b is None:
            # columns are exact right after their update, so test the rows
            rows = np.exp(f + row_lse(g))
            if np.abs(rows - a).max() < cfg.tol:
                break
    f = loga - row_lse(g)
    logT = f[:, :, None] + logK + g[:, None, :]
    T = np.exp(logT)
    if not np.all(np.isfinite(T)):
        raise NumericalError(
            f"Sinkhorn produced non-finite coupling: C/eta in [{scaled.min():.3g}, {scaled.max():.3g}]"
        )
    return T, it


def _as_plan(T, C, a, b, n_iter, soft_target=False):
    cost = float((T * C).sum())
    if soft_target:
        q = T.sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(q > 0, q * np.log(q / b), 0.0)
        kl = float(terms.sum() - q.sum() + b.sum())
        viol = float(np.abs(T.sum(axis=1) - a).max())
        return TransportPlan(T, cost, viol, target_kl=kl, n_iter=n_iter)
    return TransportPlan(T, cost, _marginal_violation(T, a, b), n_iter=n_iter)


def sinkhorn(problem, cfg=None):
    """Entropic OT by Sinkhorn scaling in the log domain.

    Runs ``cfg.iterations`` alternating row/column sweeps on the Gibbs kernel
    ``exp(-C / eta)``, then a final row sweep so the row marginals are exact.
    The column violation is reported in ``marginal_violation``.
    """
    cfg = cfg or SinkhornConfig()
    if cfg.xi_b is not None:
        cfg = SinkhornConfig(cfg.eta, cfg.iterations, None, cfg.tol)
    C, a, b = problem.cost, problem.source_weights, problem.target_weights
    T, it = sinkhorn_batch(C[None], a, b, cfg)
    return _as_plan(T[0], C, a, b, it)


def sinkhorn_unbalanced(problem, cfg):
    """Sinkhorn with a hard source marginal and a KL-relaxed target marginal.

    Minimizes ``<C, T> + eta * sum T (log T - 1) + xi_b * KL(T^T 1 | b)``
    subject to ``T 1 = a``. The target-side dual update is damped by
    ``xi_b / (xi_b + eta)``; ``target_kl`` reports ``KL(T^T 1 | b)``.
    """
    if cfg.xi_b is None:
        raise ValidationError("sinkhorn_unbalanced needs cfg.xi_b")
    C, a, b = problem.cost, problem.source_weights, problem.target_weights
    T, it = sinkhorn_batch(C[None], a, b, cfg)
    return _as_plan(T[0], C, a, b, it, soft_target=True)


def round_to_feasible(T, a, b):
    """Project a near-feasible coupling onto ``U(a, b)`` (Altschuler et al. rounding)."""
    T = np.asarray(T, dtype=float)
    r = T.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(r > 0, np.minimum(a / r, 1.0), 1.0)
    T1 = T * x[:, None]
    c = T1.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.where(c > 0, np.minimum(b / c, 1.0), 1.0)
    T2 = T1 * y[None, :]
    err_a = a - T2.sum(axis=1)
    err_b = b - T2.sum(axis=0)
    s = np.abs(err_a).sum()
    if s > 0:
        T2 = T2 + np.outer(err_a, err_b) / s
    return T2


def assignment_bruteforce(cost):
    """Minimum over all permutations of the mean matched cost (n <= 8)."""
    C = np.asarray(cost, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValidationError("assignment_bruteforce needs a square cost matrix")
    n = C.shape[0]
    if n > 8:
        raise ValidationError("assignment_bruteforce refuses n > 8")
    rows = np.arange(n)
    best = min(C[rows, list(p)].sum() for p in itertools.permutations(range(n)))
    return float(best) / n
