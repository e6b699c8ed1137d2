"""Nonlinear conjugate-gradient local descent.

Polak-Ribiere with a non-negativity clamp on beta, restarts every
``restart_interval`` iterations, and a backtracking (sufficient-decrease only)
line search refined by one quadratic-interpolation trial.  The batch driver
advances many independent starts at once; each row follows exactly the
arithmetic it would follow on its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .objective import ObjectiveSpec

CONVERGED = "converged"
MAX_ITERS = "max_iters"
LINE_SEARCH_FAILED = "line_search_failed"


@dataclass(frozen=True)
class LineSearchConfig:
    initial_step: float = 1.0
    sufficient_decrease: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    max_expand: float = 1e6

    def __post_init__(self):
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if not 0.0 < self.sufficient_decrease < 1.0:
            raise ValueError("sufficient-decrease constant must lie in (0, 1)")
        if self.initial_step <= 0 or self.max_backtracks < 1:
            raise ValueError("initial_step > 0 and max_backtracks >= 1 required")


@dataclass(frozen=True)
class DescentConfig:
    """``grad_tol`` and ``max_iters`` are the gradient tolerance and iteration
    cap of the hill climber.  ``max_iters``/``restart_interval`` of None mean
    ``200 * N`` and ``N``."""

    grad_tol: float = 1e-6
    max_iters: int | None = None
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)
    restart_interval: int | None = None

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.restart_interval is not None and self.restart_interval < 1:
            raise ValueError("restart_interval must be >= 1")

    def iters_for(self, n_dims: int) -> int:
        return self.max_iters if self.max_iters is not None else 200 * n_dims

    def restart_for(self, n_dims: int) -> int:
        return self.restart_interval if self.restart_interval is not None else n_dims


@dataclass(frozen=True)
class DescentResult:
    start: np.ndarray
    end: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    status: str

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


@dataclass
class DescentBatch:
    """Column-wise outcome of :func:`descend_batch`."""

    start: np.ndarray
    end: np.ndarray
    value: np.ndarray
    grad_norm: np.ndarray
    iterations: np.ndarray
    status: np.ndarray

    def __len__(self):
        return self.start.shape[0]

    def result(self, i: int) -> DescentResult:
        return DescentResult(
            self.start[i].copy(),
            self.end[i].copy(),
            float(self.value[i]),
            float(self.grad_norm[i]),
            int(self.iterations[i]),
            str(self.status[i]),
        )

    def results(self) -> list[DescentResult]:
        return [self.result(i) for i in range(len(self))]

    @classmethod
    def concat(cls, parts: list["DescentBatch"]) -> "DescentBatch":
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                     ("start", "end", "value", "grad_norm", "iterations", "status")))


def _rownorm(G):
    return np.sqrt(np.sum(G * G, axis=1))


def _line_search(spec, X, F, D, slope, alpha0, ls: LineSearchConfig):
    """Armijo backtracking along D for every row, followed by a bracketing
    expansion for rows whose first trial was accepted.

    Rejected trials shrink the step towards the minimiser of the quadratic
    through f(0), f'(0) and the trial value.  An accepted first trial is
    doubled while the value keeps falling (at most ``max_expand`` overall),
    and the step is then refined by the vertex of the parabola through the
    last three trials.  The expansion never steps past a rise in the value,
    so it cannot leave the basin through a barrier it samples.

    Returns (alpha, f_new, ok); ok is False where no trial satisfied the
    sufficient-decrease test within ``max_backtracks``.
    """
    B = X.shape[0]
    c1 = ls.sufficient_decrease
    alpha = alpha0.copy()
    out_alpha = np.zeros(B)
    out_f = F.copy()
    ok = np.zeros(B, dtype=bool)
    first = np.zeros(B, dtype=bool)
    model = np.full(B, np.nan)   # quadratic-model minimiser at acceptance
    pending = np.arange(B)
    for trial in range(ls.max_backtracks):
        if pending.size == 0:
            break
        a = alpha[pending]
        f0 = F[pending]
        sl = slope[pending]
        ft = spec.values(X[pending] + a[:, None] * D[pending])
        finite = np.isfinite(ft)
        armijo = finite & (ft <= f0 + c1 * a * sl)
        # minimiser of the quadratic through f(0), f'(0) and the trial
        curv = ft - f0 - sl * a
        with np.errstate(divide="ignore", invalid="ignore"):
            aq = np.where(finite & (curv > 0), -sl * a * a / (2.0 * curv), np.nan)
        rows = pending[armijo]
        out_alpha[rows] = a[armijo]
        out_f[rows] = ft[armijo]
        ok[rows] = True
        first[rows] = trial == 0
        model[rows] = aq[armijo]

        rej = ~armijo
        if np.any(rej):
            ar = a[rej]
            nxt = np.where(np.isfinite(aq[rej]),
                           np.clip(aq[rej], 0.1 * ar, ls.backtrack * ar), ls.backtrack * ar)
            alpha[pending[rej]] = nxt
        pending = pending[rej]

    # a model minimiser beyond an accepted first trial: search further out
    grow = np.flatnonzero(first & (model > out_alpha))
    if grow.size and ls.max_expand > 1.0:
        _expand(spec, X, F, D, slope, out_alpha, out_f, grow, ls)
    # a model minimiser short of the accepted step: try it
    inner = np.flatnonzero(ok & (model > 0) & (model < out_alpha))
    if inner.size:
        aq = model[inner]
        fq = spec.values(X[inner] + aq[:, None] * D[inner])
        better = np.isfinite(fq) & (fq < out_f[inner])
        sel = inner[better]
        out_alpha[sel] = aq[better]
        out_f[sel] = fq[better]
    return out_alpha, out_f, ok


def _cubic_min(a0, f0, s0, a1, f1, s1):
    """Minimiser of the cubic matching values and slopes at a0 and a1
    (NaN where the cubic has no interior minimum)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = s0 + s1 - 3.0 * (f0 - f1) / (a0 - a1)
        d2 = np.sign(a1 - a0) * np.sqrt(d1 * d1 - s0 * s1)
        a = a1 - (a1 - a0) * (s1 + d2 - d1) / (s1 - s0 + 2.0 * d2)
    lo, hi = np.minimum(a0, a1), np.maximum(a0, a1)
    return np.where(np.isfinite(a) & (a > lo) & (a < hi), a, np.nan)


def _expand(spec, X, F, D, slope, out_alpha, out_f, rows, ls: LineSearchConfig):
    """Step doubling in place on ``out_alpha``/``out_f`` for ``rows``.

    A row keeps doubling only while the value falls and the slope along D
    stays negative, so it stops at the first sampled sign change of the
    slope.  The step is then refined by cubic interpolation inside that
    bracket.
    """
    c1 = ls.sufficient_decrease

    def slope_at(r, t):
        return np.sum(spec.gradients(X[r] + t[:, None] * D[r]) * D[r], axis=1)

    a_lo = out_alpha[rows].copy()
    f_lo = out_f[rows].copy()
    s_lo = slope_at(rows, a_lo)
    limit = ls.max_expand * a_lo
    live = np.flatnonzero(np.isfinite(s_lo) & (s_lo < 0))
    while live.size:
        t = 2.0 * a_lo[live]
        live = live[t <= limit[live]]
        if live.size == 0:
            break
        t = 2.0 * a_lo[live]
        r = rows[live]
        ft = spec.values(X[r] + t[:, None] * D[r])
        st = slope_at(r, t)
        fine = np.isfinite(ft) & np.isfinite(st)
        lower = fine & (ft < f_lo[live]) & (ft <= F[r] + c1 * t * slope[r])
        # past a rise in value, or past the 1-D minimum: bracket found
        turned = fine & (st >= 0)
        cand = _cubic_min(a_lo[live], f_lo[live], s_lo[live], t, ft, st)
        cand = np.where(turned, cand, np.nan)
        adv = lower & ~turned
        take = lower & turned
        a_lo[live[take]], f_lo[live[take]], s_lo[live[take]] = t[take], ft[take], st[take]
        a_lo[live[adv]], f_lo[live[adv]], s_lo[live[adv]] = t[adv], ft[adv], st[adv]

        tried = np.flatnonzero(np.isfinite(cand))
        if tried.size:
            rr = rows[live[tried]]
            ac = cand[tried]
            fc = spec.values(X[rr] + ac[:, None] * D[rr])
            better = (np.isfinite(fc) & (fc < f_lo[live[tried]])
                      & (fc <= F[rr] + c1 * ac * slope[rr]))
            idx = live[tried[better]]
            a_lo[idx], f_lo[idx] = ac[better], fc[better]
        live = live[adv]
    out_alpha[rows] = a_lo
    out_f[rows] = f_lo


def descend_batch(spec: ObjectiveSpec, starts, config: DescentConfig | None = None) -> DescentBatch:
    """Run an independent descent from every row of ``starts``."""
    config = config or DescentConfig()
    X = np.array(starts, dtype=float, ndmin=2)
    B, N = X.shape
    if N != spec.dimension:
        raise ValueError(f"starts must have {spec.dimension} columns")
    ls = config.line_search
    max_iters = config.iters_for(N)
    restart = config.restart_for(N)
    start = X.copy()

    F = spec.values(X)
    G = spec.gradients(X)
    bad = ~(np.isfinite(F) & np.all(np.isfinite(G), axis=1))
    gnorm = _rownorm(G)
    iters = np.zeros(B, dtype=np.int64)
    status = np.full(B, MAX_ITERS, dtype=object)
    status[bad] = LINE_SEARCH_FAILED
    done = gnorm <= config.grad_tol
    status[done & ~bad] = CONVERGED
    active = ~(done | bad)
    D = -G
    since_restart = np.zeros(B, dtype=np.int64)

    while True:
        idx = np.flatnonzero(active & (iters < max_iters))
        if idx.size == 0:
            break
        Xa, Fa, Ga, Da = X[idx], F[idx], G[idx], D[idx]
        slope = np.sum(Ga * Da, axis=1)
        uphill = ~(slope < 0)
        if np.any(uphill):
            Da[uphill] = -Ga[uphill]
            slope[uphill] = -gnorm[idx][uphill] ** 2
            since_restart[idx[uphill]] = 0
        alpha0 = ls.initial_step / (1.0 + gnorm[idx])
        alpha, fnew, ok = _line_search(spec, Xa, Fa, Da, slope, alpha0, ls)

        failed = idx[~ok]
        status[failed] = LINE_SEARCH_FAILED
        active[failed] = False

        moved = np.flatnonzero(ok)
        if moved.size == 0:
            continue
        rows = idx[moved]
        Xn = Xa[moved] + alpha[moved, None] * Da[moved]
        Gn = spec.gradients(Xn)
        finite = np.all(np.isfinite(Gn), axis=1)
        if not np.all(finite):
            lost = rows[~finite]
            status[lost] = LINE_SEARCH_FAILED
            active[lost] = False
            rows, Xn, Gn = rows[finite], Xn[finite], Gn[finite]
            fnew_m = fnew[moved][finite]
            Gold, Dold = Ga[moved][finite], Da[moved][finite]
        else:
            fnew_m = fnew[moved]
            Gold, Dold = Ga[moved], Da[moved]

        X[rows] = Xn
        F[rows] = fnew_m
        G[rows] = Gn
        iters[rows] += 1
        since_restart[rows] += 1
        gn = _rownorm(Gn)
        gnorm[rows] = gn

        conv = gn <= config.grad_tol
        status[rows[conv]] = CONVERGED
        active[rows[conv]] = False

        gg_old = np.sum(Gold * Gold, axis=1)
        beta = np.maximum(0.0, np.sum(Gn * (Gn - Gold), axis=1) / gg_old)
        reset = since_restart[rows] >= restart
        beta[reset] = 0.0
        since_restart[rows[reset]] = 0
        D[rows] = -Gn + beta[:, None] * Dold

    return DescentBatch(start, X, F, gnorm, iters, status.astype(str))


def descend(spec: ObjectiveSpec, start, config: DescentConfig | None = None) -> DescentResult:
    """Local descent from a single model."""
    start = np.asarray(start, dtype=float)
    if start.shape != (spec.dimension,):
        raise ValueError(f"start must have {spec.dimension} coordinates")
    return descend_batch(spec, start[None, :], config).result(0)
