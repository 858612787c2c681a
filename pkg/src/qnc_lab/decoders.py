"""Message recovery from the assembled measurement system.

Two decoders work in the sparse domain (A = Psi @ phi):

* l1_decode -- residual-constrained l1 minimization, solved by monotone
  FISTA on the penalized form with a continuation path in the penalty
  weight. For a zero residual budget the path is driven toward the
  minimum-l1 interpolant and the result is accepted early when a dual
  certificate confirms optimality.
* mixture_mmse_decode -- alternates soft state posteriors with the exact
  linear-Gaussian posterior under the induced diagonal prior; the state
  responsibilities come from the likelihood ratio at each coordinate's
  cavity marginal, and the final estimate hedges over a small beam of
  hard state patterns weighted by their exact evidence.

exact_mmse_oracle enumerates all state vectors and is the Bayes-optimal
reference for small n; l1_lp_oracle solves the equality-constrained l1
problem as a linear program.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy import optimize as sopt
from scipy.special import logsumexp

from .messages import SourceModel
from .qnc import MeasurementSystem

SNR_CAP_DB = 120.0


@dataclass(frozen=True)
class DecoderProblem:
    """Sparse-domain sensing problem: z = A s + noise, A = Psi @ phi."""

    A: np.ndarray
    z: np.ndarray
    noise_var: np.ndarray
    prior: SourceModel
    phi: np.ndarray

    def __post_init__(self):
        if np.any(self.noise_var <= 0):
            raise ValueError("noise variances must be positive")

    @classmethod
    def from_measurement(cls, ms: MeasurementSystem, prior: SourceModel,
                         phi: np.ndarray, rows: np.ndarray | None = None,
                         noise_floor: float = 1e-18) -> "DecoderProblem":
        """Build the problem from (a row subset of) a measurement system.

        Rows with zero modeled noise (a gateway packet with no in-edges) are
        floored so the Gaussian machinery stays defined.
        """
        if rows is None:
            rows = np.arange(ms.m)
        A = ms.Psi[rows] @ phi
        var = np.maximum(ms.row_noise_var[rows], noise_floor)
        return cls(A=A, z=ms.Z[rows].copy(), noise_var=var, prior=prior, phi=phi)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]


@dataclass
class DecodeResult:
    x_hat: np.ndarray
    s_hat: np.ndarray
    iterations: int
    converged: bool
    objective_trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    jittered: bool = False
    state_probs: np.ndarray | None = None  # mixture decoder's final q


def default_epsilon(p: DecoderProblem, safety: float = 1.2) -> float:
    """Residual budget from the modeled per-row noise variances."""
    if safety < 1.0:
        raise ValueError("safety must be >= 1")
    return float(safety * np.sqrt(float(np.sum(p.noise_var))))


def snr_db(x_true: np.ndarray, x_hat: np.ndarray) -> float:
    """10 log10(signal energy / error energy); +inf for an exact estimate."""
    sig = float(x_true @ x_true)
    if sig <= 0:
        raise ValueError("reference signal has no energy")
    err = x_true - x_hat
    den = float(err @ err)
    if den == 0.0:
        return float("inf")
    return float(10.0 * np.log10(sig / den))


def pooled_snr_db(signal_energies, error_energies) -> float:
    """Ratio-of-sums aggregate across trials."""
    num = float(np.sum(signal_energies))
    den = float(np.sum(error_energies))
    if den == 0.0:
        return float("inf")
    return float(10.0 * np.log10(num / den))


def cap_snr(value: float, cap: float = SNR_CAP_DB) -> float:
    return min(value, cap)


# ---------------------------------------------------------------------------
# l1 minimization
# ---------------------------------------------------------------------------

def _soft(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _exact_lasso_on_support(A: np.ndarray, G: np.ndarray, b: np.ndarray,
                            z: np.ndarray, lam: float, s: np.ndarray,
                            max_rounds: int = 80) -> np.ndarray | None:
    """Snap the iterate to the exact penalized-subproblem solution.

    Feature-sign search seeded from the iterate's support: solve
    (A_S' A_S) u = b_S - lam * sign(u) on the active set, drop entries whose
    sign flips, pull in the worst off-support optimality violator, repeat.
    Returns None if no consistent solution emerges within the round budget.
    """
    m, n = A.shape
    smax = float(np.abs(s).max()) if s.size else 0.0
    if smax == 0.0:
        return None
    cap = min(m, n)
    S = np.flatnonzero(np.abs(s) > 1e-9 * smax)
    if len(S) == 0 or len(S) > cap:
        S = np.sort(np.argsort(np.abs(s))[-cap:])
    sgn = np.sign(s[S])
    sgn[sgn == 0] = 1.0
    seen: set[bytes] = set()
    for _ in range(max_rounds):
        try:
            u = np.linalg.solve(G[np.ix_(S, S)], b[S] - lam * sgn)
        except np.linalg.LinAlgError:
            return None
        new_sgn = np.sign(u)
        if np.any(new_sgn != sgn):
            flipped = new_sgn != sgn
            key = S.tobytes() + new_sgn.tobytes()
            if key in seen:
                # oscillating signs mean those entries want to be zero:
                # retire the small ones and start fresh
                cut = 3.0 * np.abs(u[flipped]).min()
                keep = ~(flipped & (np.abs(u) <= cut))
                if not keep.any():
                    return None
                S, sgn = S[keep], new_sgn[keep]
                seen.clear()
                continue
            seen.add(key)
            # reassign disagreeing signs; drop only entries pinned at zero
            keep = new_sgn != 0
            if not keep.any():
                return None
            S, sgn = S[keep], new_sgn[keep]
            continue
        grad = b - G[:, S] @ u
        grad[S] = 0.0
        viol = np.flatnonzero(np.abs(grad) > lam * (1.0 + 1e-9))
        if len(viol) == 0:
            out = np.zeros(n)
            out[S] = u
            return out
        room = cap - len(S)
        if room <= 0:
            # swap: make room by retiring the smallest active entries
            drop = np.argsort(np.abs(u))[:len(viol)]
            keep = np.ones(len(S), dtype=bool)
            keep[drop] = False
            S, sgn = S[keep], sgn[keep]
            room = cap - len(S)
        cap_add = min(room, 8)  # grow gradually: big batches overshoot
        if len(viol) > cap_add:
            viol = viol[np.argsort(np.abs(grad[viol]))[-cap_add:]]
        S = np.append(S, viol)
        sgn = np.append(sgn, np.sign(grad[viol]))
    return None


def _l1_lower_bound(A: np.ndarray, z: np.ndarray, s: np.ndarray) -> float:
    """Dual lower bound on min ||.||_1 s.t. A.=z from the scaled residual.

    nu = r / ||A' r||_inf is feasible for the dual (max z' nu, |A' nu| <= 1),
    so z' nu bounds the optimum from below; it tightens as the penalty path
    approaches zero.
    """
    r = z - A @ s
    denom = float(np.abs(A.T @ r).max())
    if denom <= 0.0:
        return 0.0
    return float(z @ r) / denom


def _certify_interpolant(A: np.ndarray, z: np.ndarray, s: np.ndarray,
                         feas_tol: float, lower_bound: float):
    """Try to jump to the exact minimum-l1 interpolant from the iterate.

    Least-squares fits on candidate supports give feasible vertices; one is
    accepted if the classic sign certificate holds (a dual vector matching
    sign(s) on the support with |A^T nu| <= 1 everywhere) or if its l1 norm
    meets the best dual lower bound to relative 1e-7, which pins the optimal
    vertex. Returns None when nothing certifies.
    """
    m, n = A.shape
    smax = float(np.abs(s).max()) if s.size else 0.0
    candidates = []
    if smax > 0:
        candidates.append(np.flatnonzero(np.abs(s) > 1e-6 * smax))
        order = np.argsort(np.abs(s))
        for k in {min(m, n), max(min(m, n) - 1, 1), max(min(m, n) - 2, 1)}:
            candidates.append(np.sort(order[-k:]))
    if m >= n:
        candidates.append(np.arange(n))
    seen = set()
    for S in candidates:
        key = tuple(S.tolist())
        if key in seen or len(S) == 0 or len(S) > m:
            continue
        seen.add(key)
        rank = 0
        for _ in range(3):  # shrink the support until no near-zero entries remain
            sS, _, rank, _ = sla.lstsq(A[:, S], z, lapack_driver="gelsy")
            keep = np.abs(sS) > 1e-12 * max(smax, 1.0)
            if keep.all() or not keep.any():
                break
            S = S[keep]
        else:
            continue
        if not keep.any():
            continue
        if np.linalg.norm(z - A[:, S] @ sS) > feas_tol:
            continue
        cand = np.zeros(n)
        cand[S] = sS
        if m >= n and rank == n:
            return cand  # unique interpolant, nothing to optimize
        sgn = np.sign(sS)
        nu, *_ = sla.lstsq(A[:, S].T, sgn, lapack_driver="gelsy")
        if (np.linalg.norm(A[:, S].T @ nu - sgn) <= 1e-9
                and np.max(np.abs(A.T @ nu)) <= 1.0 + 1e-7):
            return cand
        l1 = float(np.abs(sS).sum())
        if l1 <= lower_bound * (1.0 + 1e-7) + 1e-12:
            return cand
    return None


def _mfista(G: np.ndarray, b: np.ndarray, zz: float, lam: float, lip: float,
            s0: np.ndarray, max_iters: int, rel_tol: float):
    """Monotone FISTA with adaptive restart on
    0.5 s'Gs - b's + 0.5 zz + lam ||s||_1.

    Momentum resets whenever it would increase the objective. Returns
    (s, iterations, objective trace); the trace is non-increasing by
    construction.
    """
    def fval(v, Gv):
        return 0.5 * float(v @ Gv) - float(b @ v) + 0.5 * zz + lam * float(np.abs(v).sum())

    s = s0.copy()
    s_prev = s
    Gs = G @ s
    Gs_prev = Gs
    best = fval(s, Gs)
    y, Gy = s, Gs
    t = 1.0
    trace = [best]
    prox_prev = s
    it = 0
    for it in range(1, max_iters + 1):
        prox = _soft(y - (Gy - b) / lip, lam / lip)
        Gprox = G @ prox  # the only matvec; G y is tracked by linearity
        fz = fval(prox, Gprox)
        if fz <= best:
            s_prev, Gs_prev = s, Gs
            s, Gs = prox, Gprox
            best = fz
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            c = (t - 1.0) / t_next
            y = s + c * (s - s_prev)
            Gy = Gs + c * (Gs - Gs_prev)
            t = t_next
        else:
            # overshoot: keep the incumbent and restart the momentum
            y, Gy = s, Gs
            t = 1.0
        trace.append(best)
        d = prox - prox_prev
        prox_prev = prox
        if float(d @ d) <= rel_tol ** 2 * max(float(prox @ prox), 1e-24):
            break
    return s, it, trace


def l1_decode(p: DecoderProblem, epsilon: float, max_iters: int = 5000) -> DecodeResult:
    """minimize ||s||_1 subject to ||z - A s||_2 <= epsilon.

    Penalty continuation: lam sweeps down geometrically from the largest
    useful weight; for epsilon > 0 the sweep stops at the first feasible
    stage and bisects back toward the weight where the residual ball binds.
    An infeasible epsilon (below the distance from z to the range of A)
    comes back with converged=False.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    n = p.n
    if p.m == 0:
        return DecodeResult(x_hat=np.zeros(n), s_hat=np.zeros(n), iterations=0,
                            converged=True)
    A, z = p.A, p.z
    znorm = float(np.linalg.norm(z))
    if znorm == 0.0:
        return DecodeResult(x_hat=np.zeros(n), s_hat=np.zeros(n), iterations=0,
                            converged=True)
    feas0 = max(1e-10 * znorm, 1e-14)
    feas_target = max(epsilon, feas0)

    G = A.T @ A
    b = A.T @ z
    zz = znorm ** 2
    lam_max = float(np.abs(b).max())
    if lam_max == 0.0:  # z orthogonal to the range: s = 0 is the only candidate
        ok = znorm <= feas_target * (1.0 + 1e-6)
        return DecodeResult(x_hat=np.zeros(n), s_hat=np.zeros(n), iterations=0,
                            converged=ok)
    lip = float(np.linalg.eigvalsh(G)[-1]) * (1.0 + 1e-10) + 1e-30

    def resid(v):
        return float(np.linalg.norm(z - A @ v))

    s = np.zeros(n)
    total = 0
    trace = np.empty(0)
    eta = 0.2
    lam = lam_max
    lam_floor = lam_max * 1e-13
    prev_lam = lam_max
    lower = 0.0
    feasible_at = None  # (lam, s) of the first feasible stage when epsilon > 0
    prev_exact = None
    while lam > lam_floor and total < max_iters:
        lam *= eta
        # homotopy: adjacent stages share most of their support, so the
        # exact subproblem solve usually transitions straight from the last
        # stage's solution; the proximal pass is the fallback proposer,
        # escalating its budget when the snap keeps failing
        exact = None
        if prev_exact is not None:
            exact = _exact_lasso_on_support(A, G, b, z, lam, prev_exact)
        budget = 80
        while exact is None:
            s, it, tr = _mfista(G, b, zz, lam, lip, s,
                                min(budget, max_iters - total), 1e-8)
            total += it
            trace = np.asarray(tr)
            exact = _exact_lasso_on_support(A, G, b, z, lam, s)
            if budget >= 1500 or total >= max_iters:
                break
            budget = min(budget * 4, 1500)
        prev_exact = exact
        if exact is not None:
            s = exact
        r = resid(s)
        if epsilon > feas0:
            if r <= epsilon:
                feasible_at = (lam, s.copy())
                break
            prev_lam = lam
        elif exact is not None and (lam <= lam_max * 2e-3 or p.m >= n):
            lower = max(lower, _l1_lower_bound(A, z, s))
            cand = _certify_interpolant(A, z, s, feas0, lower)
            if cand is not None:
                return DecodeResult(x_hat=p.phi @ cand, s_hat=cand, iterations=total,
                                    converged=True, objective_trace=trace)

    if epsilon > feas0 and feasible_at is not None:
        # bisect back toward the largest feasible weight (the bound solution)
        lo, _ = feasible_at
        hi = prev_lam
        s_best = feasible_at[1]
        for _ in range(10):
            if total >= max_iters or hi / lo < 1.02:
                break
            mid = np.sqrt(lo * hi)
            budget = min(300, max_iters - total)
            s_mid, it, tr = _mfista(G, b, zz, mid, lip, s_best, budget, 1e-8)
            total += it
            trace = np.asarray(tr)
            if resid(s_mid) <= epsilon:
                lo, s_best = mid, s_mid
            else:
                hi = mid
        s = s_best

    if epsilon <= feas0:
        lower = max(lower, _l1_lower_bound(A, z, s))
        cand = _certify_interpolant(A, z, s, feas0, lower)
        if cand is not None:
            return DecodeResult(x_hat=p.phi @ cand, s_hat=cand, iterations=total,
                                converged=True, objective_trace=trace)

    ok = resid(s) <= feas_target * (1.0 + 1e-6)
    return DecodeResult(x_hat=p.phi @ s, s_hat=s, iterations=total, converged=ok,
                        objective_trace=trace)


def l1_lp_oracle(A: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Simplex solution of min ||s||_1 s.t. A s = z via the positive split."""
    m, n = A.shape
    c = np.ones(2 * n)
    A_eq = np.hstack([A, -A])
    res = sopt.linprog(c, A_eq=A_eq, b_eq=z, bounds=[(0, None)] * (2 * n),
                       method="highs")
    if not res.success:
        raise RuntimeError(f"LP oracle failed: {res.message}")
    u = res.x[:n]
    w = res.x[n:]
    return u - w


# ---------------------------------------------------------------------------
# Mixture MMSE
# ---------------------------------------------------------------------------

def _log_normal(x: np.ndarray, var: np.ndarray) -> np.ndarray:
    return -0.5 * (np.log(2.0 * np.pi * var) + x * x / var)


def _gaussian_posterior(A: np.ndarray, z: np.ndarray, D: np.ndarray,
                        R: np.ndarray, jitter: float = 1e-12,
                        rhs: np.ndarray | None = None):
    """Posterior mean and marginal variances of s ~ N(0, diag(D)) given
    z = A s + N(0, diag(R)); solved in the m x m form for stability."""
    m = A.shape[0]
    C = (A * D) @ A.T
    C[np.diag_indices(m)] += R
    jittered = False
    try:
        cf = sla.cho_factor(C, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        C[np.diag_indices(m)] += jitter
        cf = sla.cho_factor(C, lower=True, check_finite=False)
        jittered = True
    if rhs is None:
        rhs = np.asfortranarray(np.hstack([z[:, None], A]))
    W = sla.cho_solve(cf, rhs, check_finite=False)
    w = W[:, 0]
    CA = W[:, 1:]
    mu = D * (A.T @ w)
    V = D - (D ** 2) * np.einsum("ij,ij->j", A, CA)
    V = np.clip(V, 1e-300, D)
    # Gaussian evidence, recorded as the objective trace
    loglik = -0.5 * (float(z @ w) + 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
                     + m * np.log(2.0 * np.pi))
    return mu, V, loglik, jittered


def _hard_state_log_evidence(p: DecoderProblem, q_hard: np.ndarray,
                             full: bool = False):
    """Log joint of a hard state pattern plus the pieces for rank-1 flips.

    Returns (log evidence, g = A' C^-1 z, h = diag(A' C^-1 A)) and, with
    full=True, also the conditional mean D g and the n x n product A' C^-1 A
    used to update neighbor means in O(n) per flip.
    """
    prior = p.prior
    m = p.m
    D = q_hard * prior.sigma_s2 + (1.0 - q_hard) * prior.sigma_z2
    C = (p.A * D) @ p.A.T
    C[np.diag_indices(m)] += p.noise_var
    scale = float(np.mean(np.diag(C))) or 1.0
    for jitter in (0.0, 1e-12, 1e-9, 1e-6):
        try:
            if jitter:
                C[np.diag_indices(m)] += jitter * scale
            cf = sla.cho_factor(C, lower=True, check_finite=False)
            break
        except np.linalg.LinAlgError:
            if jitter == 1e-6:
                raise
    w = sla.cho_solve(cf, p.z, check_finite=False)
    CA = sla.cho_solve(cf, p.A, check_finite=False)
    g = p.A.T @ w
    h = np.einsum("ij,ij->j", p.A, CA)
    loglik = -0.5 * (float(p.z @ w) + 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
                     + m * np.log(2.0 * np.pi))
    p0 = prior.sparsity_prob
    k1 = float(q_hard.sum())
    logprior = k1 * np.log(p0) + (len(q_hard) - k1) * (np.log1p(-p0)
                                                       if p0 < 1.0 else 0.0)
    ev = loglik + logprior
    if not full:
        return ev, g, h
    return ev, g, h, D * g, p.A.T @ CA


def _greedy_state_search(p: DecoderProblem, q_start: np.ndarray,
                         max_flips: int):
    """Coordinate-flip ascent on the exact per-state log joint.

    Each round scores every single flip with a Sherman-Morrison update of
    the current factorization, takes the best improving one, and stops at a
    local maximum. Returns (hard state, rounds used).
    """
    prior = p.prior
    p0 = prior.sparsity_prob
    if not 0.0 < p0 < 1.0:
        return q_start, 0
    gap = prior.sigma_s2 - prior.sigma_z2
    prior_gain = np.log(p0) - np.log1p(-p0)
    q_hard = q_start.copy()
    rounds = 0
    for rounds in range(1, max_flips + 1):
        _, g, h = _hard_state_log_evidence(p, q_hard)
        delta_var = np.where(q_hard > 0.5, -gap, gap)
        denom = 1.0 + delta_var * h
        denom = np.maximum(denom, 1e-300)
        dlik = -0.5 * (np.log(denom) - delta_var * g * g / denom)
        dprior = np.where(q_hard > 0.5, -prior_gain, prior_gain)
        gain = dlik + dprior
        j = int(np.argmax(gain))
        if gain[j] <= 1e-12:
            return q_hard, rounds
        q_hard[j] = 1.0 - q_hard[j]
    return q_hard, rounds


def mixture_mmse_decode(p: DecoderProblem, max_iters: int = 50, tol: float = 1e-6,
                        q_clamp: np.ndarray | None = None,
                        q_init: np.ndarray | None = None,
                        refine: bool = True, restarts: int = 3,
                        restart_seed: int = 0) -> DecodeResult:
    """Iterative MMSE under the two-state mixture prior.

    Each pass: (a) state responsibilities fix per-coordinate prior variances,
    (b) the linear-Gaussian posterior is computed exactly for that diagonal
    prior, (c) responsibilities are refreshed from the two-state likelihood
    ratio at each coordinate's cavity marginal. With q_clamp the
    responsibilities are frozen and a single pass returns the conditional
    linear MMSE estimate.

    The alternation can settle on the wrong support, so by default the
    estimate is refined over a small beam of hard states: endpoints of the
    alternation from `restarts` extra seeds, their greedy flip ascents on
    the exact per-state evidence, and the one-flip neighborhood of the best
    state (rank-1 updates make these nearly free). The returned mean is the
    evidence-weighted mix of the beam's conditional means, with restart
    draws fixed by restart_seed so results stay reproducible.
    """
    n = p.n
    prior = p.prior
    if p.m == 0:
        return DecodeResult(x_hat=np.zeros(n), s_hat=np.zeros(n), iterations=0,
                            converged=True)
    p0 = prior.sparsity_prob
    rhs = np.asfortranarray(np.hstack([p.z[:, None], p.A]))

    def alternate(q_seed, clamp):
        q = q_seed.copy()
        mu = np.zeros(n)
        trace = []
        jittered = False
        converged = False
        it = 0
        for it in range(1, max_iters + 1):
            D = q * prior.sigma_s2 + (1.0 - q) * prior.sigma_z2
            mu_new, V, loglik, jit = _gaussian_posterior(
                p.A, p.z, D, p.noise_var, rhs=rhs)
            jittered = jittered or jit
            trace.append(loglik)
            delta = np.linalg.norm(mu_new - mu) / max(np.linalg.norm(mu_new),
                                                      1e-12)
            mu = mu_new
            if clamp:
                converged = True
                break
            if delta < tol and it > 1:
                converged = True
                break
            # cavity (prior removed) marginal for the state likelihood ratio
            cav_prec = np.maximum(1.0 / V - 1.0 / D, 0.0)
            informative = cav_prec > 1e-300
            q_next = np.full(n, p0)
            vt = 1.0 / cav_prec[informative]
            mt = vt * (mu[informative] / V[informative])
            llr = (np.log(p0) - np.log1p(-p0)
                   + _log_normal(mt, prior.sigma_s2 + vt)
                   - _log_normal(mt, prior.sigma_z2 + vt)) if p0 < 1.0 else None
            if p0 >= 1.0:
                q_next[:] = 1.0
            else:
                q_next[informative] = 1.0 / (1.0 + np.exp(-np.clip(llr, -700, 700)))
            q = q_next
        return mu, q, trace, it, converged, jittered

    if q_clamp is not None:
        q_seed = np.asarray(q_clamp, dtype=float)
    elif q_init is not None:
        q_seed = np.clip(np.asarray(q_init, dtype=float), 0.0, 1.0)
    else:
        q_seed = np.full(n, p0)
    mu, q, trace, it, converged, jittered = alternate(q_seed, q_clamp is not None)
    total = it

    if (refine and q_clamp is None and 0.0 < p0 < 1.0
            and prior.sigma_s2 > prior.sigma_z2):
        # beam over hard states: alternation endpoints, ranked prefix
        # initializations, greedy ascents from the most promising states and
        # the single-flip neighborhood of the best one; the estimate is the
        # evidence-weighted mix of the conditional means
        evaluated: dict[bytes, tuple] = {}  # key -> (ev, state, mean)

        def evaluate(state):
            key = state.astype(np.int8).tobytes()
            if key not in evaluated:
                ev, g, _ = _hard_state_log_evidence(p, state)
                D = state * prior.sigma_s2 + (1.0 - state) * prior.sigma_z2
                evaluated[key] = (ev, state.astype(float), D * g)
            return evaluated[key][0]

        evaluate((q > 0.5).astype(float))
        if q_init is None:  # a supplied warm start asserts the basin
            restart_rng = np.random.default_rng(restart_seed)
            for _ in range(restarts):
                seed_q = (restart_rng.random(n) < p0).astype(float)
                seed_q = np.clip(seed_q, 1e-3, 1.0 - 1e-3)
                _, q_r, _, it_r, _, _ = alternate(seed_q, False)
                total += it_r
                evaluate((q_r > 0.5).astype(float))
        # ranked family: score each coordinate's activation from the
        # all-small state and take prefixes of the ranking
        zero_state = np.zeros(n)
        _, g0, h0 = _hard_state_log_evidence(p, zero_state)
        gap = prior.sigma_s2 - prior.sigma_z2
        den0 = np.maximum(1.0 + gap * h0, 1e-300)
        gain0 = -0.5 * (np.log(den0) - gap * g0 * g0 / den0)
        order0 = np.argsort(gain0)[::-1]
        j_max = min(n, int(np.ceil(2 * p0 * n)) + 2, 16)
        evaluate(zero_state)
        for j in range(1, j_max + 1):
            state = np.zeros(n)
            state[order0[:j]] = 1.0
            evaluate(state)
        # greedy flip ascent from the most promising states
        tops = sorted(evaluated.values(), key=lambda e: e[0], reverse=True)[:8]
        for _, state, _ in tops:
            endpoint, rounds = _greedy_state_search(p, state.copy(),
                                                    max_flips=2 * n)
            total += rounds
            evaluate(endpoint)

        best_ev, best_state, _ = max(evaluated.values(), key=lambda e: e[0])
        _, g, h, _, M = _hard_state_log_evidence(p, best_state, full=True)
        prior_gain = np.log(p0) - np.log1p(-p0)
        delta_var = np.where(best_state > 0.5, -gap, gap)
        denom = np.maximum(1.0 + delta_var * h, 1e-300)
        dlik = -0.5 * (np.log(denom) - delta_var * g * g / denom)
        dprior = np.where(best_state > 0.5, -prior_gain, prior_gain)
        evs = [e[0] for e in evaluated.values()]
        states_list = [e[1] for e in evaluated.values()]
        means = [e[2] for e in evaluated.values()]
        seen = set(evaluated.keys())
        for v in range(n):
            flipped = best_state.copy()
            flipped[v] = 1.0 - flipped[v]
            if flipped.astype(np.int8).tobytes() in seen:
                continue
            coef = delta_var[v] * g[v] / denom[v]
            g_flip = g - coef * M[:, v]
            D_flip = flipped * prior.sigma_s2 + (1.0 - flipped) * prior.sigma_z2
            evs.append(best_ev + dlik[v] + dprior[v])
            means.append(D_flip * g_flip)
            states_list.append(flipped)
        weights = np.exp(np.asarray(evs) - logsumexp(evs))
        mu = weights @ np.asarray(means)
        q = weights @ np.asarray(states_list)
    return DecodeResult(x_hat=p.phi @ mu, s_hat=mu, iterations=total,
                        converged=converged, objective_trace=np.asarray(trace),
                        jittered=jittered, state_probs=np.clip(q, 0.0, 1.0))


def exact_mmse_oracle(p: DecoderProblem) -> DecodeResult:
    """Bayes-optimal estimate by enumerating all 2**n state vectors.

    Posterior weight of a state pattern is prior mass times the Gaussian
    evidence of z under that pattern; the estimate averages the conditional
    Gaussian means. Guarded to n <= 14.
    """
    n = p.n
    if n > 14:
        raise ValueError(f"state enumeration is limited to n <= 14, got {n}")
    if p.m == 0:
        return DecodeResult(x_hat=np.zeros(n), s_hat=np.zeros(n), iterations=0,
                            converged=True)
    prior = p.prior
    p0 = prior.sparsity_prob
    A, z, R = p.A, p.z, p.noise_var
    log_p1 = np.log(p0)
    log_p0 = np.log1p(-p0) if p0 < 1.0 else -np.inf
    states = ((np.arange(2 ** n)[:, None] >> np.arange(n)) & 1).astype(float)
    logw = np.empty(2 ** n)
    means = np.empty((2 ** n, n))
    m = p.m
    for i, qv in enumerate(states):
        D = qv * prior.sigma_s2 + (1.0 - qv) * prior.sigma_z2
        C = (A * D) @ A.T
        C[np.diag_indices(m)] += R
        cf = sla.cho_factor(C, lower=True)
        w = sla.cho_solve(cf, z)
        loglik = -0.5 * (float(z @ w) + 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
                         + m * np.log(2.0 * np.pi))
        k1 = float(qv.sum())
        logw[i] = loglik + k1 * log_p1 + (n - k1) * (log_p0 if n > k1 else 0.0)
        means[i] = D * (A.T @ w)
    logw -= logsumexp(logw)
    s_hat = np.exp(logw) @ means
    return DecodeResult(x_hat=p.phi @ s_hat, s_hat=s_hat, iterations=2 ** n,
                        converged=True)
