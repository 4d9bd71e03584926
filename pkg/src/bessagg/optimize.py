"""Day-ahead and real-time stochastic programs as convex QPs, and their solver.

Programs are stored in the form::

    minimize    0.5 z'Pz + q'z + offset
    subject to  A z = b,   G z <= h

The solver is a Mehrotra predictor-corrector interior-point method.
Its Newton systems are solved either by a general sparse LDL
factorization or, for programs produced by :func:`build_da` and
:func:`build_rt`, by eliminating the storage states through the battery
dynamics and factoring one small dense block per scenario.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.io import mmwrite
from scipy.sparse.linalg import splu

from .core import HOURS, AggregatorSpec, BidSchedule, InvalidArgumentError
from .scenario import JointScenarioSet, single_joint

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
MAX_ITERATIONS = "max-iterations"
INFEASIBLE = "infeasible"


class InfeasibleStateError(InvalidArgumentError):
    """Storage state outside the battery bounds."""


@dataclass(frozen=True)
class ScenarioLayout:
    """Row and column positions of a scenario program, used by the fast KKT solver.

    ``mode`` is ``"da"`` (commitments ``c`` shared by all scenarios and
    entering every hour next to ``x``) or ``"rt"`` (one here-and-now
    trade that sets every scenario's first storage state).
    """

    mode: str
    eta: float
    x: np.ndarray
    s: np.ndarray
    u: np.ndarray
    link: np.ndarray
    eq_init: np.ndarray
    eq_dyn: np.ndarray
    abs_pos: np.ndarray
    abs_neg: np.ndarray
    s_up: np.ndarray
    s_lo: np.ndarray
    link_rows: tuple
    s_quad: np.ndarray
    anchor: bool

    @property
    def n_scen(self) -> int:
        return self.x.shape[0]

    @property
    def horizon(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class QuadraticProgram:
    P: sp.csr_matrix
    q: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    index: dict
    offset: float = 0.0
    layout: ScenarioLayout | None = None

    def __post_init__(self):
        n = self.q.size
        if self.P.shape != (n, n) or self.A.shape[1] != n or self.G.shape[1] != n:
            raise InvalidArgumentError("QP matrix dimensions are inconsistent")
        if self.A.shape[0] != self.b.size or self.G.shape[0] != self.h.size:
            raise InvalidArgumentError("QP right-hand sides do not match constraint rows")

    @property
    def n_vars(self) -> int:
        return self.q.size

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ (self.P @ z) + self.q @ z + self.offset)

    def variable_names(self) -> list[str]:
        """One readable name per variable position."""
        names = [""] * self.n_vars
        for key, idx in self.index.items():
            arr = np.asarray(idx)
            for pos, col in np.ndenumerate(arr):
                label = ",".join(str(p) for p in pos)
                names[int(col)] = f"{key}[{label}]" if label else key
        return names


@dataclass(frozen=True)
class Solution:
    z: np.ndarray
    objective: float
    y: np.ndarray
    lam: np.ndarray
    kkt: dict
    status: str
    iterations: int
    index: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.kkt.values())

    def __getitem__(self, name: str) -> np.ndarray:
        return self.z[np.asarray(self.index[name])]


def _coo(rows, cols, vals, shape) -> sp.csr_matrix:
    return sp.csr_matrix(
        (np.concatenate([np.ravel(v) for v in vals]),
         (np.concatenate([np.ravel(r) for r in rows]), np.concatenate([np.ravel(c) for c in cols]))),
        shape=shape,
    )


def _full(shape_like, value):
    return np.broadcast_to(np.asarray(value, dtype=float), np.shape(shape_like))


def _chain_quadratic(s_idx: np.ndarray, weight: np.ndarray, anchor: bool):
    """COO triplets of P for ``sum_k w_k/2 * sum_j (s_{j+1} - s_j)^2`` (+ anchor on s_0)."""
    k, n_states = s_idx.shape
    w = weight[:, None] * np.ones((1, max(n_states - 1, 0)))
    lo, hi = s_idx[:, :-1], s_idx[:, 1:]
    rows = [lo, hi, lo, hi]
    cols = [lo, hi, hi, lo]
    vals = [w, w, -w, -w]
    if anchor:
        rows.append(s_idx[:, 0])
        cols.append(s_idx[:, 0])
        vals.append(weight)
    return rows, cols, vals


def _check_joint(joint: JointScenarioSet, horizon: int):
    if joint is None or len(joint) == 0:
        raise InvalidArgumentError("scenario set is empty")
    if joint.horizon != horizon:
        raise InvalidArgumentError(f"scenarios span {joint.horizon} hours, expected {horizon}")
    for name in ("rt_price", "pv", "demand"):
        if name not in joint.components:
            raise InvalidArgumentError(f"joint scenario set lacks {name}")


def build_da(agg: AggregatorSpec, da_prices, joint: JointScenarioSet) -> QuadraticProgram:
    """Day-ahead program: shared commitments plus per-scenario recourse.

    Variables are ``c`` (H), then per scenario ``x`` (H), ``s`` (H+1)
    and ``u`` (H), where ``u >= |c + x|`` carries the network cost. The
    horizon H is the length of ``da_prices``, 24 in daily operation;
    shorter horizons serve small test instances.
    """
    p_da = np.asarray(da_prices, dtype=float).ravel()
    if p_da.size == 0 or not np.all(np.isfinite(p_da)):
        raise InvalidArgumentError("day-ahead prices must be a non-empty finite vector")
    _check_joint(joint, p_da.size)
    bat = agg.battery
    H, K = p_da.size, len(joint)
    eps = joint.probabilities
    p_rt, pv, dem = joint["rt_price"], joint["pv"], joint["demand"]
    block = 3 * H + 1
    n = H + K * block

    c = np.arange(H)
    base = H + np.arange(K)[:, None] * block
    x = base + np.arange(H)
    s = base + H + np.arange(H + 1)
    u = base + 2 * H + 1 + np.arange(H)

    q = np.zeros(n)
    q[c] = -p_da
    q[x] = -eps[:, None] * p_rt
    q[u] = agg.beta * eps[:, None] * np.ones(H)
    s_quad = 2.0 * agg.alpha * eps
    P = _coo(*_chain_quadratic(s, s_quad, anchor=False), (n, n))

    eq_init = np.arange(K) * (H + 1)
    eq_dyn = eq_init[:, None] + 1 + np.arange(H)
    eta = bat.eta
    cc = np.broadcast_to(c, (K, H))
    A = _coo(
        [eq_init, eq_dyn, eq_dyn, eq_dyn, eq_dyn],
        [s[:, 0], s[:, 1:], s[:, :-1], cc, x],
        [np.ones(K), _full(x, 1.0), _full(x, -1.0), _full(x, eta), _full(x, eta)],
        (K * (H + 1), n),
    )
    b = np.zeros(K * (H + 1))
    b[eq_init] = bat.s_init
    b[eq_dyn] = eta * (pv - dem)

    rows_per = 4 * H
    r0 = np.arange(K)[:, None] * rows_per
    abs_pos = r0 + np.arange(H)
    abs_neg = r0 + H + np.arange(H)
    s_up = np.full((K, H + 1), -1)
    s_lo = np.full((K, H + 1), -1)
    s_up[:, 1:] = r0 + 2 * H + np.arange(H)
    s_lo[:, 1:] = r0 + 3 * H + np.arange(H)
    c_up = K * rows_per + np.arange(H)
    c_lo = c_up + H
    m = K * rows_per + 2 * H
    one = _full(x, 1.0)
    G = _coo(
        [abs_pos, abs_pos, abs_pos, abs_neg, abs_neg, abs_neg, s_up[:, 1:], s_lo[:, 1:], c_up, c_lo],
        [cc, x, u, cc, x, u, s[:, 1:], s[:, 1:], c, c],
        [one, one, -one, -one, -one, -one, one, -one, np.ones(H), -np.ones(H)],
        (m, n),
    )
    h = np.zeros(m)
    h[s_up[:, 1:]] = bat.s_max
    h[s_lo[:, 1:]] = -bat.s_min
    h[c_up] = agg.c_max
    h[c_lo] = agg.c_max

    layout = ScenarioLayout("da", eta, x, s, u, c, eq_init, eq_dyn, abs_pos, abs_neg, s_up, s_lo,
                            (c_up, c_lo), s_quad, anchor=False)
    index = {"c": c, "x": x, "s": s, "u": u}
    return QuadraticProgram(P, q, A, b, G, h, index, 0.0, layout)


def build_rt(agg: AggregatorSpec, t: int, s_t: float, commitments, observed: dict,
             joint: JointScenarioSet | None) -> QuadraticProgram:
    """Real-time program at hour ``t`` (1-based).

    Variables are the here-and-now trade ``x_now`` and its network
    epigraph ``u_now``, then per scenario ``x``, ``u`` over hours
    ``t+1..24`` and ``s`` over states ``s_{t+1}..s_25``. At ``t = 24``
    a single block holding ``s_25`` remains.
    """
    if not 1 <= t <= HOURS:
        raise InvalidArgumentError("hour t must lie in 1..24")
    bat = agg.battery
    tol = 1e-6 * max(1.0, bat.s_max)
    if not bat.s_min - tol <= s_t <= bat.s_max + tol:
        raise InfeasibleStateError(f"storage {s_t} outside [{bat.s_min}, {bat.s_max}] at hour {t}")
    c_all = commitments.commitments if isinstance(commitments, BidSchedule) else np.asarray(commitments, dtype=float)
    c_now = float(c_all[t - 1])
    c_fut = c_all[t:]
    H = HOURS - t
    if H == 0:
        K, eps = 1, np.ones(1)
        p_rt = pv = dem = np.zeros((1, 0))
    else:
        _check_joint(joint, H)
        K, eps = len(joint), joint.probabilities
        p_rt, pv, dem = joint["rt_price"], joint["pv"], joint["demand"]
    block = 3 * H + 1
    n = 2 + K * block
    x_now, u_now = 0, 1
    base = 2 + np.arange(K)[:, None] * block
    x = base + np.arange(H)
    s = base + H + np.arange(H + 1)
    u = base + 2 * H + 1 + np.arange(H)

    q = np.zeros(n)
    q[x_now] = -float(observed["rt_price"])
    q[u_now] = agg.beta
    q[x] = -eps[:, None] * p_rt
    q[u] = agg.beta * eps[:, None] * np.ones(H)
    s_quad = 2.0 * agg.alpha * eps
    # the hour-t swing alpha*(s_{t+1} - s_t)^2 with s_t known
    q[s[:, 0]] += -s_quad * s_t
    offset = float(agg.alpha * s_t ** 2)
    P = _coo(*_chain_quadratic(s, s_quad, anchor=True), (n, n))

    eta = bat.eta
    eq_init = np.arange(K) * (H + 1)
    eq_dyn = eq_init[:, None] + 1 + np.arange(H)
    A = _coo(
        [eq_init, eq_init, eq_dyn, eq_dyn, eq_dyn],
        [s[:, 0], np.full(K, x_now), s[:, 1:], s[:, :-1], x],
        [np.ones(K), np.full(K, eta), _full(x, 1.0), _full(x, -1.0), _full(x, eta)],
        (K * (H + 1), n),
    )
    b = np.zeros(K * (H + 1))
    v_t, d_t = float(observed["pv"]), float(observed["demand"])
    b[eq_init] = s_t + eta * (v_t - d_t - c_now)
    b[eq_dyn] = eta * (pv - dem - c_fut[None, :])

    rows_per = 2 * H + 2 * (H + 1)
    r0 = np.arange(K)[:, None] * rows_per
    abs_pos = r0 + np.arange(H)
    abs_neg = r0 + H + np.arange(H)
    s_up = r0 + 2 * H + np.arange(H + 1)
    s_lo = r0 + 3 * H + 1 + np.arange(H + 1)
    now_pos = K * rows_per
    now_neg = now_pos + 1
    m = K * rows_per + 2
    one = _full(x, 1.0)
    G = _coo(
        [abs_pos, abs_pos, abs_neg, abs_neg, s_up, s_lo, [now_pos, now_pos, now_neg, now_neg]],
        [x, u, x, u, s, s, [x_now, u_now, x_now, u_now]],
        [one, -one, -one, -one, _full(s, 1.0), _full(s, -1.0), [1.0, -1.0, -1.0, -1.0]],
        (m, n),
    )
    h = np.zeros(m)
    h[abs_pos] = -np.broadcast_to(c_fut, (K, H))
    h[abs_neg] = np.broadcast_to(c_fut, (K, H))
    h[s_up] = bat.s_max
    h[s_lo] = -bat.s_min
    h[now_pos] = -c_now
    h[now_neg] = c_now

    layout = ScenarioLayout("rt", eta, x, s, u, np.array([x_now, u_now]), eq_init, eq_dyn, abs_pos, abs_neg,
                            s_up, s_lo, (np.array([now_pos]), np.array([now_neg])), s_quad, anchor=True)
    index = {"x_now": np.array(x_now), "u_now": np.array(u_now), "x": x, "s": s, "u": u}
    return QuadraticProgram(P, q, A, b, G, h, index, offset, layout)


# ---------------------------------------------------------------------------
# KKT systems:  (P + G'WG) dz + A'dy = r1,  A dz = r2


class SparseKKT:
    """Quasi-definite sparse factorization of the reduced KKT matrix."""

    def __init__(self, qp: QuadraticProgram, reg: float = 1e-10):
        self.qp = qp
        self.reg = reg
        self.n = qp.n_vars
        self.p = qp.A.shape[0]
        self.Gt = qp.G.T.tocsr()

    def factor(self, w: np.ndarray):
        qp = self.qp
        M = qp.P + self.Gt @ sp.diags(w) @ qp.G
        K = sp.bmat([[M + self.reg * sp.eye(self.n), qp.A.T], [qp.A, -self.reg * sp.eye(self.p)]], format="csc")
        self.lu = splu(K)

    def solve(self, r1: np.ndarray, r2: np.ndarray):
        sol = self.lu.solve(np.concatenate([r1, r2]))
        return sol[: self.n], sol[self.n:]


def _lower_inverse(low: np.ndarray) -> np.ndarray:
    """Batched inverse of lower-triangular matrices by forward substitution."""
    n = low.shape[-1]
    inv = np.zeros_like(low)
    recip = 1.0 / np.diagonal(low, axis1=1, axis2=2)
    for i in range(n):
        row = -(low[:, i:i + 1, :i] @ inv[:, :i, :])[:, 0, :]
        row[:, i] += 1.0
        inv[:, i, :] = row * recip[:, i:i + 1]
    return inv


class StructuredKKT:
    """Newton systems of scenario programs, solved block by block.

    Storage states follow from the trades through the dynamics rows, so
    each scenario reduces to a dense ``H x H`` system in its trades. In
    day-ahead mode the shared commitments drop out after the change of
    variables ``y = c + x``; in real-time mode the here-and-now trade is
    handled by a 2x2 Schur complement.
    """

    def __init__(self, qp: QuadraticProgram):
        L = qp.layout
        self.qp = qp
        self.L = L
        K, H = L.n_scen, L.horizon
        self.K, self.H = K, H
        diff = np.zeros((H, H + 1))
        diff[np.arange(H), np.arange(H)] = -1.0
        diff[np.arange(H), np.arange(H) + 1] = 1.0
        q0 = diff.T @ diff
        if L.anchor:
            q0[0, 0] += 1.0
        self.q0 = q0
        # ds = E dy: state i accumulates -eta * trades of hours < i
        self.E = -L.eta * np.tril(np.ones((H + 1, H)), -1)
        self.later = np.maximum.outer(np.arange(H), np.arange(H))
        self.bounded_up = L.s_up >= 0
        self.bounded_lo = L.s_lo >= 0
        self.s_up_rows = np.where(self.bounded_up, L.s_up, 0)
        self.s_lo_rows = np.where(self.bounded_lo, L.s_lo, 0)
        self.n = qp.n_vars
        self.p = qp.A.shape[0]

    def factor(self, w: np.ndarray):
        L, K, H = self.L, self.K, self.H
        wp, wn = w[L.abs_pos], w[L.abs_neg]
        wsum = wp + wn
        self.mxu = wn - wp
        self.muu = wsum
        gamma = np.where(wsum > 0, 4.0 * wp * wn / np.where(wsum > 0, wsum, 1.0), 0.0)
        diag_s = np.where(self.bounded_up, w[self.s_up_rows], 0.0) + np.where(self.bounded_lo, w[self.s_lo_rows], 0.0)
        self.diag_s = diag_s
        if H:
            # D E = -eta I, so E' q0 E = eta^2 I; the bound weights on state i
            # couple every pair of trades made before hour i
            eta2 = self.L.eta ** 2
            tail = eta2 * np.cumsum(diag_s[:, :0:-1], axis=1)[:, ::-1]
            hk = tail[:, self.later]
            hk[:, np.arange(H), np.arange(H)] += eta2 * L.s_quad[:, None] + gamma
            self.chol = self._cholesky(hk)
        if L.mode == "da":
            self.wc = w[L.link_rows[0]] + w[L.link_rows[1]]
        else:
            F = -L.eta * np.ones(H + 1)
            self.F = F
            f = self._mss_mul(np.broadcast_to(F, (self.K, H + 1))) @ F
            wpn, wnn = float(w[L.link_rows[0][0]]), float(w[L.link_rows[1][0]])
            sxx = wpn + wnn + f.sum()
            if H:
                bk = self._mss_mul(np.broadcast_to(F, (self.K, H + 1))) @ self.E
                self.bk = bk
                self.hinv_b = self._chol_solve(bk)
                sxx -= float(np.sum(bk * self.hinv_b))
            S = np.array([[sxx, wnn - wpn], [wnn - wpn, wpn + wnn]])
            S[np.diag_indices(2)] += 1e-14 * max(1.0, float(np.max(np.abs(S))))
            self.S = S

    def _cholesky(self, hk: np.ndarray) -> np.ndarray:
        """Inverse Cholesky factors, so block solves become matrix products."""
        try:
            chol = np.linalg.cholesky(hk)
        except np.linalg.LinAlgError:
            scale = np.max(np.abs(hk[:, np.arange(self.H), np.arange(self.H)]), axis=1)
            hk = hk + (1e-12 * np.maximum(scale, 1.0))[:, None, None] * np.eye(self.H)
            chol = np.linalg.cholesky(hk)
        return _lower_inverse(chol)

    def _chol_solve(self, rhs: np.ndarray) -> np.ndarray:
        tmp = (self.chol @ rhs[..., None])
        return (np.swapaxes(self.chol, 1, 2) @ tmp)[..., 0]

    def _mss_mul(self, v: np.ndarray) -> np.ndarray:
        return self.L.s_quad[:, None] * (v @ self.q0) + self.diag_s * v

    def solve(self, r1: np.ndarray, r2: np.ndarray):
        L, H = self.L, self.H
        r1x, r1u, r1s = r1[L.x], r1[L.u], r1[L.s]
        s_p = np.cumsum(np.concatenate([r2[L.eq_init][:, None], r2[L.eq_dyn]], axis=1), axis=1)
        g_s = r1s - self._mss_mul(s_p)
        ratio = np.divide(self.mxu, self.muu, out=np.zeros_like(self.muu), where=self.muu > 0)
        rhs_x = r1x + g_s @ self.E - ratio * r1u if H else np.zeros((self.K, 0))

        dz = np.zeros(self.n)
        if L.mode == "da":
            dc = (r1[L.link] - r1x.sum(axis=0)) / self.wc
            dyy = self._chol_solve(rhs_x)
            dz[L.link] = dc
            dz[L.x] = dyy - dc[None, :]
            ds = s_p + dyy @ self.E.T
            trade = dyy
        else:
            rhs_l = np.array([r1[L.link[0]] + float(np.sum(g_s @ self.F)), r1[L.link[1]]])
            hinv_rhs = self._chol_solve(rhs_x) if H else rhs_x
            if H:
                rhs_l[0] -= float(np.sum(self.bk * hinv_rhs))
            dl = np.linalg.solve(self.S, rhs_l)
            dx = hinv_rhs - self.hinv_b * dl[0] if H else hinv_rhs
            dz[L.link] = dl
            dz[L.x] = dx
            ds = s_p + dx @ self.E.T + self.F[None, :] * dl[0]
            trade = dx
        du = np.divide(r1u - self.mxu * trade, self.muu, out=np.zeros_like(self.muu), where=self.muu > 0)
        dz[L.u] = du
        dz[L.s] = ds
        g = r1s - self._mss_mul(ds)
        mult = np.cumsum(g[:, ::-1], axis=1)[:, ::-1]
        dy = np.zeros(self.p)
        dy[L.eq_init] = mult[:, 0]
        dy[L.eq_dyn] = mult[:, 1:]
        return dz, dy


# ---------------------------------------------------------------------------


def kkt_residuals(qp: QuadraticProgram, z, y, lam) -> dict:
    """KKT violations of a primal-dual point.

    Besides the elementwise residuals, ``gap`` is the summed
    complementarity relative to ``1 + |objective|``; it bounds how far
    the objective can sit above the optimum.
    """
    slack = qp.h - qp.G @ z
    stat = qp.P @ z + qp.q + qp.A.T @ y + qp.G.T @ lam
    eq = qp.A @ z - qp.b
    return {
        "gap": float(abs(lam @ slack) / (1.0 + abs(qp.objective(z)))) if slack.size else 0.0,
        "stationarity": float(np.max(np.abs(stat), initial=0.0)),
        "primal": float(max(np.max(np.abs(eq), initial=0.0), np.max(-slack, initial=0.0), 0.0)),
        "complementarity": float(np.max(np.abs(lam * slack), initial=0.0)),
        "dual": float(max(np.max(-lam, initial=0.0), 0.0)),
    }


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def solve(qp: QuadraticProgram, tol: float = 1e-6, max_iter: int = 10_000, structured: bool | None = None) -> Solution:
    """Interior-point solve; ``optimal`` means every KKT residual is at most ``tol``."""
    use_structured = qp.layout is not None if structured is None else structured
    kkt = StructuredKKT(qp) if use_structured else SparseKKT(qp)
    P, A, G, q, b, h = qp.P, qp.A, qp.G, qp.q, qp.b, qp.h
    At, Gt = A.T.tocsr(), G.T.tocsr()
    m = h.size
    target = 0.5 * tol

    def newton(w, r1, r2):
        dz, dy = kkt.solve(r1, r2)
        for _ in range(2):
            res1 = r1 - (P @ dz + Gt @ (w * (G @ dz)) + At @ dy)
            res2 = r2 - A @ dz
            err = max(np.max(np.abs(res1), initial=0.0), np.max(np.abs(res2), initial=0.0))
            if err < 1e-13 * (1.0 + np.max(np.abs(r1), initial=0.0)):
                break
            cz, cy = kkt.solve(res1, res2)
            dz, dy = dz + cz, dy + cy
        return dz, dy

    # starting point: least-squares fit of G z ~ h under the equalities
    w = np.ones(m)
    kkt.factor(w)
    z, y = newton(w, -q + Gt @ h, b.copy())
    sig = np.maximum(h - G @ z, 1.0)
    lam = np.ones(m)

    status = MAX_ITERATIONS
    best = (math.inf, z, y, lam)
    stall = 0
    it = 0
    for it in range(1, max_iter + 1):
        res = kkt_residuals(qp, z, y, lam)
        worst = max(res.values())
        if worst < best[0] * 0.999:
            best = (worst, z, y, lam)
            stall = 0
        else:
            stall += 1
        if worst <= target:
            status = OPTIMAL
            break
        if _infeasibility_certificate(qp, y, lam, res["primal"], tol):
            status = INFEASIBLE
            break
        if stall > 25:
            break

        r_d = P @ z + q + At @ y + Gt @ lam
        r_p = A @ z - b
        r_g = G @ z + sig - h
        mu = float(sig @ lam) / m if m else 0.0
        w = lam / sig
        kkt.factor(w)

        def direction(r_c):
            tmp = (r_c + lam * r_g) / sig
            dz, dy = newton(w, -r_d - Gt @ tmp, -r_p)
            gdz = G @ dz
            dlam = w * gdz + tmp
            dsig = -r_g - gdz
            return dz, dy, dlam, dsig

        dz, dy, dlam, dsig = direction(-sig * lam)
        a_aff = min(_max_step(sig, dsig), _max_step(lam, dlam))
        mu_aff = float((sig + a_aff * dsig) @ (lam + a_aff * dlam)) / m if m else 0.0
        centering = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        dz, dy, dlam, dsig = direction(-sig * lam - dsig * dlam + centering * mu)
        step = 0.99 * min(_max_step(sig, dsig), _max_step(lam, dlam))
        step = min(step, 1.0)
        z = z + step * dz
        y = y + step * dy
        lam = lam + step * dlam
        sig = sig + step * dsig

    if status == MAX_ITERATIONS:
        worst, z, y, lam = best
        if worst <= tol:
            status = OPTIMAL
    if status == OPTIMAL and qp.layout is not None:
        z = _tighten_epigraph(qp, z)
    res = kkt_residuals(qp, z, y, lam)
    if status == OPTIMAL and max(res.values()) > tol:
        status = MAX_ITERATIONS
    if status != OPTIMAL:
        logger.warning("QP solve ended with status %s after %d iterations: %s", status, it, res)
    return Solution(z, qp.objective(z), y, lam, res, status, it, qp.index)


def _tighten_epigraph(qp: QuadraticProgram, z: np.ndarray) -> np.ndarray:
    """Lower each network epigraph variable onto ``|c + x|``.

    Interior iterates keep ``u`` strictly above the absolute value; the
    snap is feasible and can only lower the objective.
    """
    lay = qp.layout
    slack = qp.h - qp.G @ z
    z = z.copy()
    pairs = [(lay.u, lay.abs_pos, lay.abs_neg)]
    if lay.mode == "rt":
        pairs.append((lay.link[1:2], lay.link_rows[0], lay.link_rows[1]))
    for cols, pos, neg in pairs:
        if np.size(cols):
            z[cols] -= np.maximum(np.minimum(slack[pos], slack[neg]), 0.0)
    return z


def _infeasibility_certificate(qp: QuadraticProgram, y, lam, primal_res, tol) -> bool:
    """Farkas check: A'y + G'lam ~ 0 with b'y + h'lam < 0 after normalization."""
    if primal_res <= tol:
        return False
    scale = np.sum(np.abs(y)) + np.sum(np.abs(lam))
    if scale < 1e6:
        return False
    yn, ln = y / scale, lam / scale
    ray = qp.A.T @ yn + qp.G.T @ ln
    return float(np.max(np.abs(ray), initial=0.0)) < 1e-6 and float(qp.b @ yn + qp.h @ ln) < -1e-9


def certificate_residual(qp: QuadraticProgram, sol: Solution) -> float:
    """Norm of the normalized Farkas ray; small values certify infeasibility."""
    scale = np.sum(np.abs(sol.y)) + np.sum(np.abs(sol.lam))
    if scale == 0:
        return math.inf
    return float(np.max(np.abs(qp.A.T @ (sol.y / scale) + qp.G.T @ (sol.lam / scale)), initial=0.0))


# ---------------------------------------------------------------------------


def commitments_from(sol: Solution, agg: AggregatorSpec) -> BidSchedule:
    c = np.clip(sol["c"], -agg.c_max, agg.c_max)
    return BidSchedule(c, agg.c_max)


def naive_baseline_da(agg: AggregatorSpec, da_prices, yesterday: dict, tol: float = 1e-6):
    """Deterministic day-ahead bids assuming yesterday repeats."""
    joint = single_joint({k: yesterday[k] for k in ("rt_price", "pv", "demand")}, range(1, HOURS + 1))
    qp = build_da(agg, da_prices, joint)
    sol = solve(qp, tol)
    return commitments_from(sol, agg), sol


def naive_baseline_rt(agg: AggregatorSpec, t: int, s_t: float, commitments, observed: dict,
                      yesterday: dict, tol: float = 1e-6):
    """Real-time trade at hour ``t`` assuming yesterday's remaining hours repeat."""
    joint = None
    if t < HOURS:
        joint = single_joint({k: np.asarray(yesterday[k], dtype=float)[t:] for k in ("rt_price", "pv", "demand")},
                             range(t + 1, HOURS + 1))
    qp = build_rt(agg, t, s_t, commitments, observed, joint)
    sol = solve(qp, tol)
    return float(sol["x_now"]), sol


def dump_qp(qp: QuadraticProgram, directory) -> Path:
    """Write the program as Matrix Market files plus a variable-name list."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for name, mat in (("P", qp.P), ("A", qp.A), ("G", qp.G)):
        mmwrite(str(out / f"{name}.mtx"), sp.coo_matrix(mat), precision=17)
    for name, vec in (("q", qp.q), ("b", qp.b), ("h", qp.h)):
        mmwrite(str(out / f"{name}.mtx"), vec.reshape(-1, 1), precision=17)
    (out / "variables.txt").write_text("\n".join(qp.variable_names()) + "\n")
    (out / "offset.txt").write_text(repr(qp.offset) + "\n")
    return out
