"""Empirical distributions on [0, 1], the K_inf functional and the
empirical-likelihood upper confidence bound.

``kinf(nu, mu)`` is the smallest KL divergence ``KL(nu, nu')`` over finitely
supported ``nu'`` on [0, 1] with mean above ``mu``.  It is computed from its
one-dimensional dual::

    K_inf(nu, mu) = max_{0 <= lam <= 1/(1-mu)}  E_nu log(1 - lam (X - mu))

``el_upper_bound(nu, eps)`` is the largest mean of a distribution supported
on ``Supp(nu) + {1}`` within KL radius ``eps`` of ``nu``.  Its optimizer is an
exponential-type tilt ``q_i ~ p_i / (1 - eta x_i)`` of the empirical weights,
so the bound reduces to a scalar root in ``eta``; when ``eta`` reaches 1 the
remaining mass moves to the point 1 and the bound has a closed form.

The ``*_rows`` functions work on 2-D arrays, one distribution per row, with
zero weights allowed as padding.
"""

from __future__ import annotations

import math

import numpy as np

from .divergence import DomainError

__all__ = [
    "EmpiricalDistribution",
    "add_observation",
    "mean",
    "kinf",
    "kinf_rows",
    "kinf_maximizer",
    "kinf_upper_bound",
    "el_upper_bound",
    "el_upper_bound_rows",
]

_NEWTON_MAX = 100


class EmpiricalDistribution:
    """Counts of observed values in [0, 1].

    Observations are appended in place with :meth:`add`; :attr:`support` and
    :attr:`counts` give the sorted view.  Running power sums are kept so that
    the first three moments are available in O(1).
    """

    def __init__(self, values=(), counts=None):
        self._values = np.empty(16)
        self._counts = np.empty(16, dtype=np.int64)
        self._size = 0
        self._slot = {}
        self.n = 0
        self.sums = [0.0, 0.0, 0.0]
        self._sorted = None
        if counts is None:
            counts = [1] * len(values)
        if len(counts) != len(values):
            raise ValueError("values and counts differ in length")
        for x, c in zip(values, counts):
            if int(c) != c or c < 1:
                raise ValueError(f"counts must be positive integers, got {c!r}")
            self.add(x, int(c))

    def add(self, x: float, count: int = 1) -> "EmpiricalDistribution":
        """Record ``count`` observations of ``x`` (in place)."""
        x = float(x)
        if not 0.0 <= x <= 1.0:
            raise DomainError(f"observation {x} outside [0, 1]")
        slot = self._slot.get(x)
        if slot is None:
            if self._size == self._values.size:
                self._values = np.resize(self._values, 2 * self._size)
                self._counts = np.resize(self._counts, 2 * self._size)
            slot = self._size
            self._slot[x] = slot
            self._values[slot] = x
            self._counts[slot] = 0
            self._size += 1
        self._counts[slot] += count
        self.n += count
        self.sums[0] += count * x
        self.sums[1] += count * x * x
        self.sums[2] += count * x * x * x
        self._sorted = None
        return self

    def copy(self) -> "EmpiricalDistribution":
        out = EmpiricalDistribution()
        out._values = self._values.copy()
        out._counts = self._counts.copy()
        out._size = self._size
        out._slot = dict(self._slot)
        out.n = self.n
        out.sums = list(self.sums)
        return out

    def _sort(self):
        if self._sorted is None:
            order = np.argsort(self._values[: self._size], kind="stable")
            self._sorted = (
                self._values[: self._size][order],
                self._counts[: self._size][order],
            )
        return self._sorted

    @property
    def support(self) -> np.ndarray:
        return self._sort()[0]

    @property
    def counts(self) -> np.ndarray:
        return self._sort()[1]

    @property
    def values(self) -> np.ndarray:
        """Distinct values in insertion order (no sorting cost)."""
        return self._values[: self._size]

    @property
    def weights(self) -> np.ndarray:
        """Probabilities aligned with :attr:`values`."""
        return self._counts[: self._size] / self.n

    def mean(self) -> float:
        if self.n == 0:
            raise ValueError("empty distribution has no mean")
        return float(np.dot(self.weights, self.values))

    def __len__(self):
        return self._size

    def __repr__(self):
        pairs = ", ".join(f"{v:g}:{c}" for v, c in zip(self.support, self.counts))
        return f"EmpiricalDistribution({{{pairs}}})"


def add_observation(dist: EmpiricalDistribution, x: float) -> EmpiricalDistribution:
    """Return a copy of ``dist`` with one more observation of ``x``."""
    return dist.copy().add(x)


def mean(dist: EmpiricalDistribution) -> float:
    return dist.mean()


def _as_rows(values, weights):
    x = np.atleast_2d(np.asarray(values, dtype=float))
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    x, w = np.broadcast_arrays(x, w)
    return x, w


# -- K_inf -------------------------------------------------------------------


def kinf_rows(values, weights, mu):
    """K_inf for each row of ``(values, weights)``; ``mu`` broadcasts per row."""
    x, w = _as_rows(values, weights)
    w = w / w.sum(axis=1, keepdims=True)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (x.shape[0],)).copy()
    if np.any(~(mu > 0.0)) or np.any(~(mu < 1.0)):
        raise DomainError("kinf needs 0 < mu < 1")
    out = np.zeros(x.shape[0])
    m = np.einsum("ij,ij->i", w, x)
    todo = np.flatnonzero(m < mu)
    if todo.size:
        out[todo] = _kinf_dual(x[todo], w[todo], mu[todo])[0]
    return out


def kinf_maximizer(dist: EmpiricalDistribution, mu: float):
    """``(K_inf, lam)`` where ``lam`` maximizes the dual objective
    ``E log(1 - lam (X - mu))`` over ``[0, 1/(1-mu)]``."""
    if not 0.0 < mu < 1.0:
        raise DomainError(f"kinf needs 0 < mu < 1, got {mu}")
    if dist.mean() >= mu:
        return 0.0, 0.0
    x, w = _as_rows(dist.values, dist.weights)
    val, tau = _kinf_dual(x, w / w.sum(), np.array([float(mu)]))
    return float(val[0]), float(tau[0]) / (1.0 - mu)


def _kinf_dual(x, w, mu):
    """Maximize ``E log(1 - lam (X - mu))`` over ``lam in [0, 1/(1-mu)]``.

    With ``lam = tau / (1 - mu)`` the argument becomes
    ``(1 - mu - tau (x - mu)) / (1 - mu)``, positive for ``tau < 1``.  The
    derivative in ``tau`` is decreasing, so a safeguarded Newton iteration on
    it converges from any bracket.
    """
    mu_c = mu[:, None]
    dx = x - mu_c
    one_m = 1.0 - mu_c
    has_top = np.any((x >= 1.0) & (w > 0), axis=1)

    def grad(tau, rows=slice(None)):
        den = one_m[rows] - tau[:, None] * dx[rows]
        r = dx[rows] / den
        wr = w[rows]
        return -np.einsum("ij,ij->i", wr, r), np.einsum("ij,ij->i", wr, r * r)

    # boundary optimum: no mass at 1 and the derivative still nonnegative at tau = 1
    with np.errstate(divide="ignore", invalid="ignore"):
        g1, _ = grad(np.ones(x.shape[0]))
    boundary = ~has_top & (g1 >= 0.0)

    lo = np.zeros(x.shape[0])
    hi = np.ones(x.shape[0])
    tau = np.full(x.shape[0], 0.5)
    active = ~boundary
    for _ in range(_NEWTON_MAX):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        g, h = grad(tau[idx], idx)
        pos = g > 0
        lo[idx] = np.where(pos, tau[idx], lo[idx])
        hi[idx] = np.where(pos, hi[idx], tau[idx])
        with np.errstate(divide="ignore", invalid="ignore"):
            step = tau[idx] + g / h
        inside = np.isfinite(step) & (step > lo[idx]) & (step < hi[idx])
        new = np.where(inside, step, 0.5 * (lo[idx] + hi[idx]))
        done = np.abs(g) <= 1e-13
        conv = done | (np.abs(new - tau[idx]) <= 1e-15) | (hi[idx] - lo[idx] <= 1e-15)
        tau[idx] = np.where(done, tau[idx], new)
        active[idx[conv]] = False
    tau = np.where(boundary, 1.0, tau)
    with np.errstate(divide="ignore"):
        arg = (one_m - tau[:, None] * dx) / one_m
        terms = np.where(w > 0, w * np.log(np.where(w > 0, arg, 1.0)), 0.0)
    return np.maximum(terms.sum(axis=1), 0.0), tau


def kinf(dist: EmpiricalDistribution, mu: float) -> float:
    """K_inf of an empirical distribution at level ``mu`` in (0, 1)."""
    if not 0.0 < mu < 1.0:
        raise DomainError(f"kinf needs 0 < mu < 1, got {mu}")
    if dist.mean() >= mu:
        return 0.0
    return float(kinf_rows(dist.values, dist.weights, mu)[0])


def kinf_upper_bound(n: int, sums, mu: float) -> float:
    """Cheap upper bound on K_inf from the first three power sums.

    Uses ``log(1 + u) <= u - u^2/2 + u^3/3`` for ``u > -1``; the resulting cubic
    in the dual variable is maximized exactly over ``[0, 1/(1-mu)]``.
    """
    m1, m2, m3 = sums[0] / n, sums[1] / n, sums[2] / n
    a = mu - m1
    if a <= 0.0:
        return 0.0
    b = mu * mu - 2.0 * mu * m1 + m2
    c = mu**3 - 3.0 * mu * mu * m1 + 3.0 * mu * m2 - m3
    cap = 1.0 / (1.0 - mu)

    def cubic(lam):
        return lam * (a - lam * (b / 2.0 - lam * c / 3.0))

    best = max(0.0, cubic(cap))
    # stationary points of the cubic: a - b lam + c lam^2 = 0
    if abs(c) < 1e-300:
        roots = [a / b] if b > 0 else []
    else:
        disc = b * b - 4.0 * a * c
        if disc < 0:
            roots = []
        else:
            sq = math.sqrt(disc)
            roots = [(b - sq) / (2.0 * c), (b + sq) / (2.0 * c)]
    for lam in roots:
        if 0.0 < lam < cap:
            best = max(best, cubic(lam))
    return best


# -- empirical-likelihood bound ----------------------------------------------


def el_upper_bound_rows(values, weights, eps):
    """Augmented-support EL upper bound for each row.

    For rows with no mass at 1 and ``eps >= h(1)`` the optimum moves mass to
    the point 1 and ``U = 1 - exp(E log(1 - X) - eps)``.  Otherwise ``U`` is the
    mean of the tilt ``q ~ p / (1 - eta x)`` where ``eta in (0, 1)`` solves::

        h(eta) = E log(1 - eta X) + log E[1 / (1 - eta X)] = eps

    ``h`` is the KL divergence of the tilt and increases with ``eta``.
    """
    x, w = _as_rows(values, weights)
    w = w / w.sum(axis=1, keepdims=True)
    rows = x.shape[0]
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (rows,)).copy()
    if np.any(np.isnan(eps)) or np.any(eps < 0):
        raise DomainError("epsilon must be nonnegative")
    live = w > 0
    mean_ = np.einsum("ij,ij->i", w, x)
    out = mean_.copy()
    top_mass = np.where(live & (x >= 1.0), w, 0.0).sum(axis=1)

    # h at eta = 1 for rows without an atom at 1
    no_top = top_mass == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        one_m = np.where(live, 1.0 - x, 1.0)
        elog = np.where(live, w * np.log(one_m), 0.0).sum(axis=1)
        h_one = elog + np.log(np.where(live, w / one_m, 0.0).sum(axis=1))
    h_one = np.where(no_top, h_one, np.inf)

    degenerate = (eps == 0.0) | (mean_ >= 1.0)
    at_boundary = ~degenerate & (eps >= h_one)
    out = np.where(at_boundary, 1.0 - np.exp(np.where(at_boundary, elog, 0.0) - eps), out)
    # all-infinite budget puts everything at 1
    out = np.where(~degenerate & np.isinf(eps), 1.0, out)

    # below this radius h(eta) drowns in rounding; U = mean + sqrt(2 eps var) + O(eps)
    tiny = ~degenerate & ~at_boundary & (eps < 1e-14)
    if np.any(tiny):
        var = np.einsum("ij,ij->i", w, (x - mean_[:, None]) ** 2)
        out = np.where(tiny, mean_ + np.sqrt(2.0 * eps * var), out)
    todo = np.flatnonzero(~degenerate & ~at_boundary & ~tiny & np.isfinite(eps))
    if todo.size:
        out[todo] = _el_tilt(x[todo], w[todo], eps[todo])
    return np.clip(out, mean_, 1.0)


def _el_tilt(x, w, eps):
    # zero-weight atoms are moved to 0, where they contribute nothing
    x = np.where(w > 0, x, 0.0)
    rows = x.shape[0]
    m1 = (w * x).sum(axis=1)
    var = np.maximum((w * x * x).sum(axis=1) - m1 * m1, 1e-300)
    # small-eta expansion h ~ eta^2 var / 2
    eta = np.clip(np.sqrt(2.0 * eps / var), 1e-300, 0.5)
    out = eta.copy()
    idx = np.arange(rows)
    xa, wa, ea = x, w, eps
    lo = np.zeros(rows)
    hi = np.ones(rows)
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(_NEWTON_MAX):
            den = 1.0 - eta[:, None] * xa
            inv = 1.0 / den
            q = wa * inv
            e_inv = q.sum(axis=1)
            qx = q * xa
            e_xinv = qx.sum(axis=1)
            e_xinv2 = (qx * inv).sum(axis=1)
            h = (wa * np.log(den)).sum(axis=1) + np.log(e_inv)
            gap = h - ea
            below = gap < 0
            lo = np.where(below, eta, lo)
            hi = np.where(below, hi, eta)
            step = eta - gap / (e_xinv2 / e_inv - e_xinv)
            inside = np.isfinite(step) & (step > lo) & (step < hi)
            new = np.where(inside, step, 0.5 * (lo + hi))
            conv = (
                (np.abs(gap) <= 1e-14 * np.minimum(1.0, ea))
                | (hi - lo <= 1e-15 * hi)
                | (np.abs(new - eta) <= 1e-16 * eta)
            )
            eta = np.where(conv, eta, new)
            if conv.any():
                out[idx[conv]] = eta[conv]
                keep = ~conv
                if not keep.any():
                    break
                idx, xa, wa, ea = idx[keep], xa[keep], wa[keep], ea[keep]
                eta, lo, hi = eta[keep], lo[keep], hi[keep]
        else:
            out[idx] = eta
    with np.errstate(divide="ignore", invalid="ignore"):
        q = w / (1.0 - out[:, None] * x)
        res = (q * x).sum(axis=1) / q.sum(axis=1)
    # eta rounded to 1 with an atom at 1: all tilted mass sits at 1
    return np.where(np.isfinite(res), res, 1.0)


def el_upper_bound(dist: EmpiricalDistribution, epsilon: float) -> float:
    """Largest mean within KL radius ``epsilon`` of ``dist`` on its support
    augmented with the point 1."""
    if not epsilon >= 0:
        raise DomainError("epsilon must be nonnegative")
    return float(el_upper_bound_rows(dist.values, dist.weights, epsilon)[0])
