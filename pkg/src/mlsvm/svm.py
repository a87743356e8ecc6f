"""Soft-margin and class-weighted SVM training in the dual, with an RBF kernel.

The solver is sequential minimal optimization over the dual box/equality
constraints: maximal-violating-pair working-set selection (optionally the
second-order variant), an LRU kernel-row cache with a byte budget, and an
optional shrinking heuristic with gradient reconstruction. Training is fully
deterministic for fixed inputs and configuration.
"""

from __future__ import annotations

import warnings
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from mlsvm.data import BinaryView

_TAU = 1e-12


@dataclass(frozen=True)
class KernelParams:
    """RBF bandwidth: k(u, v) = exp(-gamma * ||u - v||^2)."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class ClassWeights:
    """Penalty caps per class; equal caps reduce to the standard SVM at C."""

    c_plus: float
    c_minus: float

    def __post_init__(self):
        if not (self.c_plus > 0 and self.c_minus > 0):
            raise ValueError("class penalties must be strictly positive")

    @staticmethod
    def uniform(c: float) -> "ClassWeights":
        return ClassWeights(c, c)

    @staticmethod
    def inverse_size(c: float, n_pos: int, n_neg: int) -> "ClassWeights":
        """Caps inversely proportional to class size: C+/C- = n-/n+."""
        if n_pos <= 0 or n_neg <= 0:
            raise ValueError("both classes must be nonempty")
        return ClassWeights(c_plus=c * n_neg / n_pos, c_minus=c)


@dataclass(frozen=True)
class SolverConfig:
    kkt_tolerance: float = 1e-3
    max_passes: int = 1_000_000
    cache_bytes: int = 512 * 1024 * 1024
    shrinking: bool = False
    second_order: bool = True

    def __post_init__(self):
        if not self.kkt_tolerance > 0:
            raise ValueError("kkt_tolerance must be positive")


@dataclass
class SvmModel:
    """Support vectors with dual coefficients and bias.

    Decision function: f(x) = sum_i alpha_i y_i k(sv_i, x) + bias; the
    predicted label is +1 when f(x) > 0, else -1.
    """

    sv_features: np.ndarray
    sv_labels: np.ndarray
    sv_alphas: np.ndarray
    bias: float
    kernel: KernelParams
    weights: ClassWeights
    sv_rows: np.ndarray | None = None   # original dataset rows (not serialized)

    def __post_init__(self):
        if self.sv_features.ndim != 2:
            raise ValueError("sv_features must be 2-d")
        m = self.sv_features.shape[0]
        if self.sv_labels.shape != (m,) or self.sv_alphas.shape != (m,):
            raise ValueError("support vector arrays have inconsistent lengths")
        if m and (self.sv_alphas <= 0).any():
            raise ValueError("stored dual coefficients must be strictly positive")

    @property
    def n_sv(self) -> int:
        return self.sv_features.shape[0]

    @property
    def n_features(self) -> int:
        return self.sv_features.shape[1]


def _rbf_block(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """Kernel matrix exp(-gamma ||a_i - b_j||^2), shape (len(a), len(b))."""
    sq_a = np.einsum("ij,ij->i", a, a)
    sq_b = np.einsum("ij,ij->i", b, b)
    d2 = sq_a[:, None] + sq_b[None, :] - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


class _RowCache:
    """LRU cache of full-length kernel rows, sliced per active set on fetch.

    Full rows survive shrink/unshrink events, so the cache never needs
    invalidating; eviction is pure LRU under the byte budget.
    """

    def __init__(self, x: np.ndarray, gamma: float, budget_bytes: int):
        self.x = x
        self.gamma = gamma
        self.sq = np.einsum("ij,ij->i", x, x)
        n = x.shape[0]
        self.max_rows = max(2, int(budget_bytes // (8 * max(n, 1)))) if budget_bytes > 0 else 0
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()

    def row(self, i: int, active_idx: np.ndarray | None) -> np.ndarray:
        r = self._rows.get(i) if self.max_rows else None
        if r is None:
            d2 = self.sq + self.sq[i] - 2.0 * (self.x @ self.x[i])
            np.maximum(d2, 0.0, out=d2)
            r = np.exp(-self.gamma * d2)
            if self.max_rows:
                self._rows[i] = r
                if len(self._rows) > self.max_rows:
                    self._rows.popitem(last=False)
        elif self.max_rows:
            self._rows.move_to_end(i)
        if active_idx is None:
            return r
        return r[active_idx]


def _smo_solve(x, y, caps, gamma, config: SolverConfig):
    """Minimize 0.5 a'Qa - e'a s.t. y'a = 0, 0 <= a <= caps (Q = yy' * K).

    State is kept compacted over the active set: v = -(y * gradient) is
    updated in place (v -= delta * (K_i - K_j), since y^2 = 1) and the up/low
    memberships change only at the two touched coordinates per step.
    """
    n = x.shape[0]
    tol = config.kkt_tolerance
    alpha = np.zeros(n)
    cache = _RowCache(x, gamma, config.cache_bytes)
    shrink_enabled = config.shrinking and n > 64
    interval = min(n, 1000)

    idx = np.arange(n)              # active global indices
    ya = y.astype(np.float64).copy()
    aa = np.zeros(n)
    ca = caps.astype(np.float64).copy()
    v = ya.copy()                   # -(y * grad) at alpha = 0 is y
    up = ya > 0
    low = ya < 0

    since_shrink = 0
    it = 0
    converged = False
    sel_buf = np.empty(n)
    quad_buf = np.empty(n)
    mask_buf = np.empty(n, dtype=bool)

    def flush_active():
        alpha[idx] = aa

    def rebuild_full():
        """Write back alphas and recompute state over the whole problem."""
        nonlocal idx, ya, aa, ca, v, up, low
        flush_active()
        idx = np.arange(n)
        ya = y.astype(np.float64).copy()
        aa = alpha.copy()
        ca = caps.astype(np.float64).copy()
        sv = np.flatnonzero(alpha > 0)
        if sv.size:
            f = _rbf_block(x, x[sv], gamma) @ (alpha[sv] * y[sv])
        else:
            f = np.zeros(n)
        v = y - f
        up = ((y > 0) & (alpha < caps)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < caps))

    while it < config.max_passes:
        sz = idx.size
        sel = sel_buf[:sz]
        sel.fill(-np.inf)
        np.copyto(sel, v, where=up)
        ii = int(np.argmax(sel))
        m = sel[ii]
        M = float(np.min(v, initial=np.inf, where=low))
        if m - M <= tol:
            if sz == n:
                converged = True
                break
            rebuild_full()
            shrink_enabled = False
            continue
        act = None if sz == n else idx
        ki = cache.row(int(idx[ii]), act)
        if config.second_order:
            quad = quad_buf[:sz]
            np.multiply(ki, -2.0, out=quad)
            quad += 2.0
            np.maximum(quad, _TAU, out=quad)
            cand = mask_buf[:sz]
            np.less(v, m, out=cand)
            cand &= low
            np.subtract(m, v, out=sel)
            np.square(sel, out=sel)
            sel /= quad
            np.logical_not(cand, out=cand)
            sel[cand] = -np.inf
            jj = int(np.argmax(sel))
        else:
            sel.fill(np.inf)
            np.copyto(sel, v, where=low)
            jj = int(np.argmin(sel))
        kj = cache.row(int(idx[jj]), act)
        a_quad = max(2.0 - 2.0 * ki[jj], _TAU)
        delta = (m - v[jj]) / a_quad
        yi, yj = ya[ii], ya[jj]
        bound_i = (ca[ii] - aa[ii]) if yi > 0 else aa[ii]
        bound_j = aa[jj] if yj > 0 else (ca[jj] - aa[jj])
        delta = min(delta, bound_i, bound_j)
        aa[ii] += yi * delta
        aa[jj] -= yj * delta
        # snap exactly onto the binding box face
        if delta == bound_i:
            aa[ii] = ca[ii] if yi > 0 else 0.0
        if delta == bound_j:
            aa[jj] = 0.0 if yj > 0 else ca[jj]
        work = quad_buf[:sz]
        np.subtract(ki, kj, out=work)
        work *= delta
        v -= work
        for t in (ii, jj):
            pos = ya[t] > 0
            up[t] = (pos and aa[t] < ca[t]) or (not pos and aa[t] > 0)
            low[t] = (pos and aa[t] > 0) or (not pos and aa[t] < ca[t])
        it += 1
        since_shrink += 1
        if shrink_enabled and since_shrink >= interval:
            since_shrink = 0
            free = (aa > 0) & (aa < ca)
            keep = free | (up & (v > M)) | (low & (v < m))
            if keep.sum() >= 2 and keep.sum() < idx.size:
                flush_active()
                idx = idx[keep]
                ya = ya[keep]
                aa = aa[keep]
                ca = ca[keep]
                v = v[keep]
                up = up[keep]
                low = low[keep]

    if idx.size != n:
        rebuild_full()
    else:
        flush_active()
    if not converged and it >= config.max_passes:
        warnings.warn("SMO hit the iteration cap (%d) before reaching tolerance"
                      % config.max_passes)
    v_full, up_f, low_f = v, up, low
    free = (alpha > 0) & (alpha < caps)
    if free.any():
        bias = float(np.mean(v_full[free]))
    else:
        hi = np.max(np.where(up_f, v_full, -np.inf))
        lo = np.min(np.where(low_f, v_full, np.inf))
        if not np.isfinite(hi):
            hi = lo
        if not np.isfinite(lo):
            lo = hi
        bias = float((hi + lo) / 2.0)
    return alpha, bias, it


def train_svm(view: BinaryView, weights: ClassWeights, kernel: KernelParams,
              config: SolverConfig | None = None, rows=None) -> SvmModel:
    """Train a (class-weighted) soft-margin SVM on rows of the view's dataset."""
    config = config or SolverConfig()
    if rows is None:
        rows = np.arange(view.base.n_rows)
    rows = np.asarray(rows, dtype=np.int64)
    x = view.base.features[rows]
    if not np.isfinite(x).all():
        raise ValueError("training rows contain non-finite values (impute first)")
    y = view.y()[rows]
    if (y > 0).all() or (y < 0).all():
        raise ValueError("training subset contains a single class")
    caps = np.where(y > 0, weights.c_plus, weights.c_minus)
    alpha, bias, _ = _smo_solve(x, y, caps, kernel.gamma, config)
    sv = np.flatnonzero(alpha > 0)
    return SvmModel(
        sv_features=x[sv].copy(),
        sv_labels=y[sv].copy(),
        sv_alphas=alpha[sv].copy(),
        bias=bias,
        kernel=kernel,
        weights=weights,
        sv_rows=rows[sv].copy(),
    )


def decision_values(model: SvmModel, points: np.ndarray, block: int = 2048) -> np.ndarray:
    """f(x) for each row of points."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != model.n_features:
        raise ValueError("points must be (n, %d)" % model.n_features)
    coef = model.sv_alphas * model.sv_labels
    out = np.empty(points.shape[0])
    for start in range(0, points.shape[0], block):
        stop = min(start + block, points.shape[0])
        k = _rbf_block(points[start:stop], model.sv_features, model.kernel.gamma)
        out[start:stop] = k @ coef
    return out + model.bias


def predict(model: SvmModel, points: np.ndarray):
    """Labels (+1/-1; f(x)=0 resolves to -1) and raw margins for each point."""
    margins = decision_values(model, points)
    labels = np.where(margins > 0, 1.0, -1.0)
    return labels, margins


def dual_objective(model: SvmModel) -> float:
    """sum(alpha) - 0.5 * sum_ij alpha_i alpha_j y_i y_j k(x_i, x_j)."""
    if model.n_sv == 0:
        return 0.0
    k = _rbf_block(model.sv_features, model.sv_features, model.kernel.gamma)
    coef = model.sv_alphas * model.sv_labels
    return float(model.sv_alphas.sum() - 0.5 * coef @ k @ coef)


def kkt_violation(model: SvmModel, view: BinaryView, rows=None) -> float:
    """Largest dual-optimality violation over the model's training rows.

    Zero means every point satisfies its condition exactly: margin >= 1 at
    alpha = 0, margin <= 1 at the class cap, margin = 1 in between. Requires
    a model trained in-process (sv_rows intact).
    """
    if model.sv_rows is None:
        raise ValueError("model has no training-row bookkeeping")
    if rows is None:
        rows = np.arange(view.base.n_rows)
    rows = np.asarray(rows, dtype=np.int64)
    x = view.base.features[rows]
    y = view.y()[rows]
    f = decision_values(model, x)
    yf = y * f
    caps = np.where(y > 0, model.weights.c_plus, model.weights.c_minus)
    alpha = np.zeros(rows.size)
    pos_of = {int(r): i for i, r in enumerate(rows)}
    for i in range(model.n_sv):
        alpha[pos_of[int(model.sv_rows[i])]] = model.sv_alphas[i]
    worst = 0.0
    at_zero = alpha == 0
    at_cap = alpha >= caps
    free = ~at_zero & ~at_cap
    if at_zero.any():
        worst = max(worst, float(np.max(1.0 - yf[at_zero], initial=0.0)))
    if at_cap.any():
        worst = max(worst, float(np.max(yf[at_cap] - 1.0, initial=0.0)))
    if free.any():
        worst = max(worst, float(np.max(np.abs(yf[free] - 1.0), initial=0.0)))
    return worst


def model_lines(model: SvmModel) -> list[str]:
    """Model as structured text lines (17 significant digits)."""
    lines = [
        "mlsvm-model v1",
        "kernel rbf",
        "gamma %.17g" % model.kernel.gamma,
        "c_plus %.17g" % model.weights.c_plus,
        "c_minus %.17g" % model.weights.c_minus,
        "bias %.17g" % model.bias,
        "n_features %d" % model.n_features,
        "n_sv %d" % model.n_sv,
    ]
    for i in range(model.n_sv):
        feats = " ".join("%.17g" % v for v in model.sv_features[i])
        lines.append("sv %d %.17g %s" % (int(model.sv_labels[i]),
                                         model.sv_alphas[i], feats))
    return lines


def model_from_lines(lines: list[str]) -> SvmModel:
    if not lines or lines[0] != "mlsvm-model v1":
        raise ValueError("not a model block")
    header = {}
    sv_lines = []
    for ln in lines[1:]:
        if ln.startswith("sv "):
            sv_lines.append(ln)
        elif ln.strip():
            k, v = ln.split(None, 1)
            header[k] = v
    n_features = int(header["n_features"])
    n_sv = int(header["n_sv"])
    if len(sv_lines) != n_sv:
        raise ValueError("expected %d support vectors, found %d"
                         % (n_sv, len(sv_lines)))
    feats = np.zeros((n_sv, n_features))
    labels = np.zeros(n_sv)
    alphas = np.zeros(n_sv)
    for i, ln in enumerate(sv_lines):
        toks = ln.split()
        labels[i] = float(toks[1])
        alphas[i] = float(toks[2])
        feats[i] = [float(t) for t in toks[3:]]
    return SvmModel(
        sv_features=feats,
        sv_labels=labels,
        sv_alphas=alphas,
        bias=float(header["bias"]),
        kernel=KernelParams(float(header["gamma"])),
        weights=ClassWeights(float(header["c_plus"]), float(header["c_minus"])),
    )


def save_model(model: SvmModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(model_lines(model)) + "\n")


def load_model(path) -> SvmModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    try:
        return model_from_lines(lines)
    except ValueError as exc:
        raise ValueError("%s: %s" % (path, exc)) from exc
