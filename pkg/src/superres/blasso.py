"""Spike measures, observations and a Frank-Wolfe solver for the BLASSO

    min_m  |m|(X) + 1/(2 lam) ||Phi m - y||^2

with ``y = Phi m0 + w``. The observation is kept implicit as a weighted sum of
atoms, so every quantity (residual correlation, objective, gradients) is
assembled from kernel evaluations only.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment, minimize, root

from .certificate import n_workers, scaled_spikes
from .domain import DomainError


@dataclass
class SpikeMeasure:
    """``m = sum_i a_i delta_{z_i}``."""

    positions: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.amplitudes = np.asarray(self.amplitudes, dtype=float).reshape(-1)
        if self.positions.ndim == 1:
            self.positions = self.positions.reshape(len(self.amplitudes), -1)
        if len(self.positions) != len(self.amplitudes):
            raise ValueError("positions and amplitudes must have equal length")

    @classmethod
    def empty(cls, dim: int) -> "SpikeMeasure":
        return cls(np.zeros((0, dim)), np.zeros(0))

    def __len__(self):
        return len(self.amplitudes)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def tv_norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes)))

    def scaled(self, c: float) -> "SpikeMeasure":
        return SpikeMeasure(self.positions.copy(), c * self.amplitudes)

    def merged(self, radius: float, domain=None) -> "SpikeMeasure":
        """Merge spikes closer than `radius` (amplitude-weighted position, summed amplitude)."""
        pos = [p for p in self.positions]
        amp = list(self.amplitudes)
        i = 0
        while i < len(pos):
            j = i + 1
            while j < len(pos):
                dist = domain.distance(pos[i], pos[j]) if domain is not None else np.linalg.norm(pos[i] - pos[j])
                if dist < radius:
                    tot = amp[i] + amp[j]
                    w = abs(amp[i]) + abs(amp[j])
                    if w > 0:
                        pos[i] = (abs(amp[i]) * pos[i] + abs(amp[j]) * pos[j]) / w
                    amp[i] = tot
                    del pos[j], amp[j]
                else:
                    j += 1
            i += 1
        return SpikeMeasure(np.array(pos).reshape(-1, self.dim), np.array(amp))

    def pruned(self, tol: float = 0.0) -> "SpikeMeasure":
        keep = np.abs(self.amplitudes) > tol
        return SpikeMeasure(self.positions[keep], self.amplitudes[keep])

    def to_json(self) -> dict:
        return {"positions": self.positions.tolist(), "amplitudes": self.amplitudes.tolist()}

    @classmethod
    def from_json(cls, data: dict, dim: int | None = None) -> "SpikeMeasure":
        pos = np.asarray(data["positions"], dtype=float)
        if pos.ndim == 1:
            pos = pos.reshape(-1, dim or 1)
        amp = data.get("amplitudes")
        amp = np.ones(len(pos)) if amp is None else amp
        return cls(pos, amp)


def noise_measure(seed, Q: int = 20, std: float = 1e-3, domain=None) -> SpikeMeasure:
    """`Q` uniform positions in `domain`, centred Gaussian amplitudes of deviation `std`."""
    if Q < 1:
        raise ValueError("Q must be >= 1")
    rng = np.random.default_rng(seed)
    pos = domain.sample(rng, Q)
    amp = rng.normal(0.0, 1.0, Q) * std
    return SpikeMeasure(pos, amp)


@dataclass
class Observation:
    """``y = Phi clean + noise_gain * Phi noise``, kept as atoms."""

    kernel: object
    clean: SpikeMeasure
    noise: SpikeMeasure | None = None
    noise_gain: float = 0.0

    def __post_init__(self):
        self.kernel.check_points(self.clean.positions)
        if self.noise is not None:
            self.kernel.check_points(self.noise.positions)

    def atoms(self):
        if self.noise is None or self.noise_gain == 0.0 or len(self.noise) == 0:
            return self.clean.positions, self.clean.amplitudes
        return (
            np.vstack([self.clean.positions, self.noise.positions]),
            np.r_[self.clean.amplitudes, self.noise_gain * self.noise.amplitudes],
        )

    def correlate(self, x) -> np.ndarray:
        """``<phi(x), y>`` for points of shape ``(..., d)``."""
        P, w = self.atoms()
        return _combo(self.kernel, x, P, w)

    @property
    def y_norm2(self) -> float:
        P, w = self.atoms()
        return float(w @ self.kernel.gram(P) @ w)

    @property
    def noise_norm(self) -> float:
        if self.noise is None or len(self.noise) == 0:
            return 0.0
        a = self.noise.amplitudes
        return abs(self.noise_gain) * math.sqrt(max(float(a @ self.kernel.gram(self.noise.positions) @ a), 0.0))


def _combo(kernel, x, P, w, chunk: int = 8192) -> np.ndarray:
    """``sum_k w_k Corr(x, P_k)`` with deterministic chunking over `x`."""
    x = np.asarray(x, dtype=float)
    lead = x.shape[:-1]
    X = x.reshape(-1, kernel.dim)
    if len(P) == 0:
        return np.zeros(lead)

    def run(block):
        return kernel.corr(block[:, None, :], P[None, :, :]) @ w

    if len(X) <= chunk:
        out = run(X)
    else:
        pieces = [X[i:i + chunk] for i in range(0, len(X), chunk)]
        with ThreadPoolExecutor(n_workers()) as ex:
            out = np.concatenate(list(ex.map(run, pieces)))
    return out.reshape(lead)


def _combo_grad(kernel, x, P, w) -> np.ndarray:
    """``sum_k w_k d_1 Corr(x, P_k)``, shape ``(n, d)`` for ``x`` of shape ``(n, d)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = kernel.dim
    if len(P) == 0:
        return np.zeros_like(x)
    D = kernel.partials(x[:, None, :], P[None, :, :], 1, 0)
    zero = (0,) * d
    cols = [D[(tuple(int(i == k) for i in range(d)), zero)] @ w for k in range(d)]
    return np.stack(cols, axis=-1)


def residual_correlation(obs: Observation, m: SpikeMeasure, lam: float, x) -> np.ndarray:
    """``eta(x) = <phi(x), y - Phi m> / lam``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return (obs.correlate(x) - _combo(obs.kernel, x, m.positions, m.amplitudes)) / lam


def _residual_norm2(obs: Observation, m: SpikeMeasure) -> float:
    P, w = obs.atoms()
    k = obs.kernel
    a = m.amplitudes
    val = obs.y_norm2
    if len(m):
        val += float(a @ k.gram(m.positions) @ a)
        val -= 2.0 * float(a @ (k.corr(m.positions[:, None, :], P[None, :, :]) @ w))
    return max(val, 0.0)


def objective(obs: Observation, m: SpikeMeasure, lam: float) -> float:
    """``|m|(X) + ||Phi m - y||^2 / (2 lam)``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return m.tv_norm + _residual_norm2(obs, m) / (2.0 * lam)


@dataclass
class SolveOptions:
    grid: int = 256
    max_iters: int = 40
    eps: float = 1e-6
    nonneg: bool = False
    merge_radius: float = 1e-6  # relative to the domain diameter
    candidates: int = 5
    refine_iters: int = 500
    search_points: np.ndarray | None = None


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)
    reason: str = ""
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"records": self.records, "reason": self.reason, "notes": self.notes}


def _search_grid(obs: Observation, opts: SolveOptions):
    if opts.search_points is not None:
        return np.asarray(opts.search_points, dtype=float), None
    pts, mask, shape = obs.kernel.domain.grid(opts.grid)
    return pts[mask], (mask, shape)


def _local_candidates(vals: np.ndarray, pts: np.ndarray, grid_info, n: int, periodic: bool):
    from .certificate import _grid_local_max

    if grid_info is None:
        order = np.argsort(-vals)
        return pts[order[:n]]
    mask, shape = grid_info
    full = np.full(mask.shape, -np.inf)
    full[mask] = vals
    lm = _grid_local_max(full.reshape(shape), periodic=periodic).ravel()[mask]
    idx = np.flatnonzero(lm)
    if len(idx) == 0:
        idx = np.arange(len(vals))
    idx = idx[np.argsort(-vals[idx])][:n]
    return pts[idx]


def _polish_max(obs, m, lam, x0, signed: bool):
    """Local ascent of ``|eta|`` (or ``eta`` when `signed`) from `x0`."""
    k = obs.kernel
    dom = k.domain
    P, w = obs.atoms()

    def f(v):
        if not np.all(np.isfinite(v)):
            return 0.0, np.zeros_like(v)
        x, jac = dom.from_free(v)
        try:
            val = (float(_combo(k, x[None], P, w)[0]) - float(_combo(k, x[None], m.positions, m.amplitudes)[0])) / lam
            g = (_combo_grad(k, x[None], P, w)[0] - _combo_grad(k, x[None], m.positions, m.amplitudes)[0]) / lam
        except DomainError:
            return 0.0, np.zeros_like(v)
        s = 1.0 if signed else np.sign(val)
        return -s * val, -s * (jac.T @ g)

    bounds = dom.bounds() if dom.kind == "box" else None
    try:
        v0 = dom.to_free(x0)
    except DomainError:
        return np.asarray(x0, dtype=float)
    res = minimize(f, v0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": 200, "gtol": 1e-12, "ftol": 1e-15})
    x = dom.from_free(res.x)[0] if np.all(np.isfinite(res.x)) else np.asarray(x0, dtype=float)
    return dom.normalize_point(x)


def _refine(obs, m: SpikeMeasure, lam: float, opts: SolveOptions):
    """Joint descent over positions and amplitudes with signs held fixed.

    With the sign of every amplitude fixed by bounds, ``|a|_1`` is linear and
    the objective is smooth, so L-BFGS-B applies directly. Amplitudes that
    reach zero are pruned by the caller.
    """
    k = obs.kernel
    dom = k.domain
    n, d = m.positions.shape
    signs = np.where(m.amplitudes >= 0, 1.0, -1.0)
    if opts.nonneg:
        signs = np.ones(n)
    P, w = obs.atoms()
    free0 = dom.to_free(m.positions)
    ynorm2 = obs.y_norm2

    def unpack(z):
        v = z[: n * d].reshape(n, d)
        a = z[n * d:]
        x, jac = dom.from_free(v)
        return x, jac, a

    def f(z):
        if not np.all(np.isfinite(z)):
            return np.inf, np.zeros_like(z)
        x, jac, a = unpack(z)
        try:
            K = k.gram(x)
            C = k.corr(x[:, None, :], P[None, :, :]) @ w
            D = k.partials(x[:, None, :], x[None, :, :], 1, 0)
            Dp = k.partials(x[:, None, :], P[None, :, :], 1, 0)
        except DomainError:
            return np.inf, np.zeros_like(z)
        Ka = K @ a
        res2 = max(ynorm2 + a @ Ka - 2 * a @ C, 0.0)
        val = float(signs @ a + res2 / (2 * lam))
        ga = signs + (Ka - C) / lam
        zero = (0,) * d
        gx = np.zeros((n, d))
        for kk in range(d):
            e = (tuple(int(i == kk) for i in range(d)), zero)
            # d/dx_i of 1/2 |Phi m - y|^2 = a_i (sum_j a_j d1 K(x_i,x_j) - sum_k w_k d1 K(x_i,p_k))
            gx[:, kk] = a * (D[e] @ a - Dp[e] @ w) / lam
        gv = np.einsum("nij,ni->nj", jac, gx)
        return val, np.r_[gv.ravel(), ga]

    z0 = np.r_[free0.ravel(), m.amplitudes]
    pos_bounds = dom.bounds()
    xb = (pos_bounds * n) if pos_bounds is not None else [(None, None)] * (n * d)
    ab = [(0.0, None) if s > 0 else (None, 0.0) for s in signs]
    f0 = f(z0)[0]
    res = minimize(f, z0, jac=True, method="L-BFGS-B", bounds=xb + ab,
                   options={"maxiter": opts.refine_iters, "gtol": 1e-13, "ftol": 1e-16, "maxcor": 30})
    note = None
    if not res.success and "ABNORMAL" in str(res.message):
        note = str(res.message)
    z = res.x if res.fun <= f0 else z0
    z = _stationary_polish(f, z, signs, n * d, xb)
    x, _, a = unpack(z)
    x = dom.normalize_point(x)
    return SpikeMeasure(x, a), note


def _stationary_polish(f, z, signs, npos, pos_bounds):
    """Newton-type solve of ``grad f = 0`` started from the L-BFGS point.

    For small lambda the objective is evaluated with cancellation (its
    residual term is ``O(lam^2)`` against ``O(|y|^2)`` rounding), while the
    gradient stays accurate. The step is kept only if it preserves the
    amplitude signs and bounds, reduces the gradient, and the trapezoid
    estimate ``(g0 + g1) . dz / 2`` of the objective change is nonpositive.
    """
    g0 = f(z)[1]
    if not np.all(np.isfinite(g0)) or len(z) == 0:
        return z
    active = np.r_[np.zeros(npos, dtype=bool), np.abs(z[npos:]) == 0]
    if np.any(active):
        return z
    sol = root(lambda q: f(q)[1], z, method="hybr", options={"xtol": 1e-15, "maxfev": 200 * (len(z) + 1)})
    z1 = sol.x
    if not np.all(np.isfinite(z1)) or np.any(signs * z1[npos:] <= 0):
        return z
    for (lo, hi), v in zip(pos_bounds, z1[:npos]):
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            return z
    g1 = f(z1)[1]
    if not np.all(np.isfinite(g1)) or np.linalg.norm(g1) >= np.linalg.norm(g0):
        return z
    if 0.5 * float((g0 + g1) @ (z1 - z)) > 0:
        return z
    return z1


def fw_solve(obs: Observation, lam: float, opts: SolveOptions | None = None,
             init: SpikeMeasure | None = None):
    """Frank-Wolfe with joint non-convex refinement.

    Each iteration scans ``eta`` on a grid, polishes the best `candidates`
    grid peaks by local ascent, stops when ``max |eta| <= 1 + eps``,
    otherwise inserts a spike at the maximiser with the soft-threshold
    amplitude ``lam sign(eta) (|eta| - 1) / Corr(x, x)`` and refines all
    positions and amplitudes jointly.

    Returns
    -------
    (SpikeMeasure, SolveTrace)
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    opts = opts or SolveOptions()
    k = obs.kernel
    dom = k.domain
    pts, grid_info = _search_grid(obs, opts)
    base = obs.correlate(pts)
    m = init if init is not None else SpikeMeasure.empty(k.dim)
    trace = SolveTrace()
    merge = opts.merge_radius * dom.diameter
    for it in range(opts.max_iters + 1):
        eta_grid = (base - _combo(k, pts, m.positions, m.amplitudes)) / lam
        score = eta_grid if opts.nonneg else np.abs(eta_grid)
        cands = _local_candidates(score, pts, grid_info, opts.candidates, dom.periodic)
        best_x, best_v = None, -np.inf
        for c in cands:
            x = _polish_max(obs, m, lam, c, signed=opts.nonneg)
            v = float(residual_correlation(obs, m, lam, x[None])[0])
            s = v if opts.nonneg else abs(v)
            if s > best_v:
                best_x, best_v, best_eta = x, s, v
        record = {
            "iter": it,
            "spikes": len(m),
            "objective": objective(obs, m, lam),
            "max_eta": best_v,
            "argmax": best_x.tolist(),
            "argmax_on_boundary": bool(
                dom.kind == "box" and np.any(np.isclose(best_x, dom.lo) | np.isclose(best_x, dom.hi))
            ),
        }
        if best_v <= 1 + opts.eps:
            trace.records.append(record)
            trace.reason = "certificate"
            break
        if it == opts.max_iters:
            trace.records.append(record)
            trace.reason = "max_iters"
            break
        corr_xx = float(k.corr(best_x, best_x))
        a_new = lam * math.copysign(best_v - 1.0, best_eta) / corr_xx
        m = SpikeMeasure(np.vstack([m.positions, best_x[None]]), np.r_[m.amplitudes, a_new])
        before = objective(obs, m, lam)
        m_ref, note = _refine(obs, m, lam, opts)
        after = objective(obs, m_ref, lam)
        if note:
            trace.notes.append(f"iter {it}: {note}")
        m = m_ref.pruned(0.0).merged(merge, dom)
        record.update(inserted=best_x.tolist(), objective_before_refine=before, objective_after_refine=after)
        trace.records.append(record)
    return m, trace


# -- experiments ------------------------------------------------------------


def match_spikes(m: SpikeMeasure, truth: SpikeMeasure, domain=None):
    """Optimal one-to-one assignment by distance; returns index arrays."""
    A = m.positions[:, None, :] - truth.positions[None, :, :]
    if domain is not None:
        A = domain.displacement(m.positions[:, None, :], truth.positions[None, :, :])
    cost = np.linalg.norm(A, axis=-1)
    return linear_sum_assignment(cost)


def support_errors(m: SpikeMeasure, truth: SpikeMeasure, domain=None):
    """Max position and amplitude error under the optimal matching (inf if counts differ)."""
    if len(m) != len(truth) or len(m) == 0:
        return float("inf"), float("inf")
    r, c = match_spikes(m, truth, domain)
    disp = m.positions[r] - truth.positions[c]
    if domain is not None:
        disp = domain.displacement(m.positions[r], truth.positions[c])
    pos = float(np.max(np.linalg.norm(disp, axis=-1)))
    amp = float(np.max(np.abs(m.amplitudes[r] - truth.amplitudes[c])))
    return pos, amp


def make_observation(kernel, Z, amplitudes, t: float, lam: float, seed=0, noise_ratio: float | None = None,
                     Q: int = 20, std: float = 1e-3) -> Observation:
    """Clean spikes at ``z0 + t (Z - z0)`` plus noise ``gain * Phi m_bar``.

    By default the gain is ``lam`` (noise proportional to lambda). With
    `noise_ratio`, the gain is chosen so that ``||w|| = noise_ratio * lam``.
    """
    pos = scaled_spikes(kernel, Z, t)
    clean = SpikeMeasure(pos, amplitudes)
    noise = noise_measure(seed, Q, std, kernel.domain)
    obs = Observation(kernel, clean, noise, lam)
    if noise_ratio is not None:
        base = Observation(kernel, clean, noise, 1.0).noise_norm
        obs.noise_gain = noise_ratio * lam / base if base > 0 else 0.0
    return obs


def lambda_path(kernel, Z, amplitudes, t: float, lambdas, seed=0, opts: SolveOptions | None = None):
    """Solve along a decreasing lambda path with noise proportional to lambda."""
    rows = []
    truth = SpikeMeasure(scaled_spikes(kernel, Z, t), amplitudes)
    for lam in lambdas:
        obs = make_observation(kernel, Z, amplitudes, t, lam, seed)
        m, trace = fw_solve(obs, lam, opts)
        pos, amp = support_errors(m, truth, kernel.domain)
        rows.append({
            "lambda": float(lam), "noise_norm": obs.noise_norm, "spikes": len(m),
            "pos_error": pos, "amp_error": amp, "iterations": len(trace.records) - 1,
            "reason": trace.reason, "measure": m.to_json(),
        })
    return rows


def two_spike_sweep(kernel, Z0, a0, t_list, c: float = 1.0, noise_ratio: float = 0.1, seed=0,
                    opts: SolveOptions | None = None):
    """Recovery of two spikes at ``z0 + t (Z0 - z0)`` with ``lam = c t^4``.

    Errors are measured in the unscaled geometry (positions divided by t) and
    `ratio` is ``err * t^3 / (lam + ||w||)``, which stays bounded when the
    recovery is support stable at the predicted rate.
    """
    rows = []
    for t in t_list:
        lam = c * t**4
        obs = make_observation(kernel, Z0, a0, t, lam, seed, noise_ratio=noise_ratio)
        truth = obs.clean
        try:
            m, trace = fw_solve(obs, lam, opts)
            pos, amp = support_errors(m, truth, kernel.domain)
            err = max(pos / t, amp)
            wn = obs.noise_norm
            rows.append({
                "t": float(t), "lambda": lam, "noise_norm": wn, "spikes": len(m),
                "pos_error": pos / t, "amp_error": amp, "ratio": err * t**3 / (lam + wn),
                "reason": trace.reason, "error": "",
            })
        except Exception as exc:  # recorded per row, the sweep goes on
            rows.append({
                "t": float(t), "lambda": lam, "noise_norm": float("nan"), "spikes": -1,
                "pos_error": float("nan"), "amp_error": float("nan"), "ratio": float("nan"),
                "reason": "error", "error": repr(exc),
            })
    return rows
