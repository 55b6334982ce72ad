"""Dense primal-dual interior-point kernel for linear matrix inequalities.

Problem form (all matrices real, blocks symmetric)::

    minimize    c^T x
    subject to  A x = b
                F_l x + C_l >= 0           (componentwise)
                F_k x + C_k  PSD           (k = 1..K, entries flattened row-major)

The dual is ``maximize b^T y - <C, Z>`` over ``F^T Z + A^T y = c, Z PSD``.
The method is Mehrotra predictor-corrector with Nesterov-Todd scaling and an
infeasible start. Everything is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp


@dataclass
class IpmResult:
    status: str
    x: np.ndarray
    y: np.ndarray
    z_lin: np.ndarray
    z_psd: list
    s_lin: np.ndarray
    s_psd: list
    primal_obj: float
    dual_obj: float
    primal_residual: float
    dual_residual: float
    gap: float
    rel_gap: float
    iterations: int
    message: str = ""


def _chunks(n: int, size: int):
    for a in range(0, n, size):
        yield a, min(n, a + size)


class _Block:
    """One PSD block restricted to the variables it touches."""

    def __init__(self, F: sp.csc_matrix, C: np.ndarray):
        s2 = F.shape[0]
        self.size = int(round(np.sqrt(s2)))
        F = sp.csc_matrix(F)
        self.cols = np.flatnonzero(np.diff(F.indptr))
        self.F = F
        self.Fsub = F[:, self.cols].tocsc()
        self.FsubT = self.Fsub.T.tocsr()
        self.C = np.asarray(C, dtype=float).reshape(self.size, self.size)
        self._stack = None

    def apply(self, x) -> np.ndarray:
        return (self.F @ x).reshape(self.size, self.size) + self.C

    def apply_lin(self, dx) -> np.ndarray:
        return (self.F @ dx).reshape(self.size, self.size)

    def adjoint(self, Z) -> np.ndarray:
        return self.F.T @ Z.reshape(-1)

    def hessian(self, V: np.ndarray) -> np.ndarray:
        """F^T (V kron V) F restricted to ``cols``."""
        s = self.size
        k = len(self.cols)
        if self._stack is None:
            # rows (j, i) hold row i of the symmetric matrix F_j, so F_j V is sparse work
            T = self.FsubT.tocoo()
            i, l = np.divmod(T.col, s)
            self._stack = sp.csr_matrix((T.data, (T.row * s + i, l)), shape=(k * s, s))
        H = np.empty((k, k))
        step = max(1, int(2e6 // max(s * s, 1)))
        for a, b in _chunks(k, step):
            m = b - a
            Y = (self._stack[a * s:b * s] @ V).reshape(m, s, s)      # F_j V
            Y = np.ascontiguousarray(Y.transpose(0, 2, 1)).reshape(m * s, s)
            T = (Y @ V).reshape(m, s * s)                             # V F_j V
            H[a:b] = (self.FsubT @ T.T).T
        return 0.5 * (H + H.T)


def _min_eig(M: np.ndarray) -> float:
    return float(la.eigvalsh(M, subset_by_index=[0, 0])[0]) if M.shape[0] else np.inf


def _step_to_boundary(lam: np.ndarray, D: np.ndarray) -> float:
    """Largest alpha with diag(lam) + alpha*D PSD (inf when unrestricted)."""
    r = 1.0 / np.sqrt(lam)
    m = _min_eig(r[:, None] * D * r[None, :])
    return np.inf if m >= 0 else -1.0 / m


def _nt_scaling(S: np.ndarray, Z: np.ndarray):
    Ls = la.cholesky(S, lower=True)
    Lz = la.cholesky(Z, lower=True)
    U, lam, Vt = la.svd(Lz.T @ Ls)
    isq = 1.0 / np.sqrt(lam)
    R = Ls @ Vt.T * isq[None, :]
    Rti = Lz @ U * isq[None, :]
    return R, Rti, lam


def _solve_sym_lambda(lam: np.ndarray, Rc: np.ndarray) -> np.ndarray:
    return 2.0 * Rc / (lam[:, None] + lam[None, :])


def _sym_prod(A, B):
    P = A @ B
    return 0.5 * (P + P.T)


def _interior_shift(mats, vec):
    worst = min([_min_eig(M) for M in mats] + ([vec.min()] if vec.size else []) + [np.inf])
    return worst


def solve_ipm(c, A, b, Fl, Cl, blocks, tol=1e-8, max_iter=100, verbose=False) -> IpmResult:
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    A = sp.csr_matrix(A) if A is not None else sp.csr_matrix((0, n))
    b = np.asarray(b, dtype=float) if b is not None else np.zeros(0)
    Fl = sp.csr_matrix(Fl) if Fl is not None else sp.csr_matrix((0, n))
    Cl = np.asarray(Cl, dtype=float) if Cl is not None else np.zeros(0)
    blks = [_Block(F, C) for F, C in blocks]
    p = A.shape[0]
    ml = Fl.shape[0]
    nu = ml + sum(B.size for B in blks)
    Ad = A.toarray()
    AtA = Ad.T @ Ad

    def kkt_factor(H):
        """LU of the equilibrated system [[H + A'A, A'], [A, 0]]."""
        H1 = H + AtA
        d = np.sqrt(np.maximum(np.abs(np.diag(H1)), 1e-300))
        dmax = d.max() if n else 1.0
        d = np.maximum(d, 1e-8 * dmax)
        D = 1.0 / d
        K = np.zeros((n + p, n + p))
        K[:n, :n] = H1 * D[:, None] * D[None, :]
        K[:n, :n] += 1e-14 * np.eye(n)
        AD = Ad * D[None, :]
        K[:n, n:] = AD.T
        K[n:, :n] = AD
        return (K, D), la.lu_factor(K, check_finite=False)

    def kkt_solve(Kd, fac, r1, r2, apply_h=None, refine=3):
        K, D = Kd
        rhs = np.concatenate([r1 + Ad.T @ r2, r2])

        def lu(res):
            t = la.lu_solve(fac, np.concatenate([D * res[:n], res[n:]]), check_finite=False)
            return np.concatenate([D * t[:n], t[n:]])

        sol = lu(rhs)
        for _ in range(refine):
            dx, v = sol[:n], sol[n:]
            if apply_h is None:
                hx = (K[:n, :n] @ (dx / D)) / D - AtA @ dx - 1e-14 * dx / D ** 2
            else:
                # residual against the exact operator, not its rounded matrix
                hx = apply_h(dx)
            res = rhs - np.concatenate([hx + AtA @ dx + Ad.T @ v, Ad @ dx])
            sol = sol + lu(res)
        return sol[:n], sol[n:]

    def hessian_all(dl, Vs):
        H = np.zeros((n, n))
        if ml:
            H += (Fl.T @ sp.diags(dl) @ Fl).toarray()
        for B, V in zip(blks, Vs):
            if len(B.cols):
                H[np.ix_(B.cols, B.cols)] += B.hessian(V)
        return H

    # starting point: least-norm slacks, as in standard cone QP codes
    H0 = hessian_all(np.ones(ml), [np.eye(B.size) for B in blks])
    K0, f0 = kkt_factor(H0)
    rhs_x = -(Fl.T @ Cl if ml else np.zeros(n)) - sum((B.adjoint(B.C) for B in blks), np.zeros(n))
    x, _ = kkt_solve(K0, f0, rhs_x, b)
    sl = Fl @ x + Cl if ml else np.zeros(0)
    Sk = [B.apply(x) for B in blks]
    w, y = kkt_solve(K0, f0, c, np.zeros(p))
    zl = Fl @ w if ml else np.zeros(0)
    Zk = [B.apply_lin(w) for B in blks]
    Zk = [0.5 * (Z + Z.T) for Z in Zk]

    def shift(vec, mats):
        a = -_interior_shift(mats, vec)
        nrm = np.sqrt(vec @ vec + sum(np.sum(M * M) for M in mats))
        if a >= -1e-8 * max(nrm, 1.0):
            vec = vec + (1.0 + a)
            mats = [M + (1.0 + a) * np.eye(M.shape[0]) for M in mats]
        return vec, mats

    sl, Sk = shift(sl, Sk)
    zl, Zk = shift(zl, Zk)

    nb = max(1.0, np.linalg.norm(b))
    nC = max(1.0, np.sqrt(Cl @ Cl + sum(np.sum(B.C ** 2) for B in blks)))
    nc = max(1.0, np.linalg.norm(c))

    best = None
    worse = 0
    status = "max-iterations"
    message = ""
    it = 0
    for it in range(max_iter + 1):
        # residuals
        Fz = (Fl.T @ zl if ml else np.zeros(n)) + sum((B.adjoint(Z) for B, Z in zip(blks, Zk)), np.zeros(n))
        rd = c - Fz - A.T @ y
        rp = b - A @ x
        rsl = (Fl @ x + Cl - sl) if ml else np.zeros(0)
        rsk = [B.apply(x) - S for B, S in zip(blks, Sk)]
        gap = float(sl @ zl + sum(np.sum(S * Z) for S, Z in zip(Sk, Zk)))
        pobj = float(c @ x)
        dobj = float(b @ y - Cl @ zl - sum(np.sum(B.C * Z) for B, Z in zip(blks, Zk)))
        pres = max(np.linalg.norm(rp) / nb,
                   np.sqrt(rsl @ rsl + sum(np.sum(R * R) for R in rsk)) / nC)
        dres = np.linalg.norm(rd) / nc
        relgap = abs(pobj - dobj) / max(1.0, min(abs(pobj), abs(dobj)))
        merit = max(pres, dres, min(gap, relgap))
        if verbose:
            print(f"{it:3d} p={pobj:.9e} d={dobj:.9e} gap={gap:.2e} pres={pres:.2e} dres={dres:.2e}")
        snap = (merit, x.copy(), y.copy(), zl.copy(), [Z.copy() for Z in Zk], sl.copy(),
                [S.copy() for S in Sk], pobj, dobj, pres, dres, gap, relgap, it)
        if best is None or merit < best[0]:
            best = snap
            worse = 0
        else:
            worse += 1
        if pres <= tol and dres <= tol and (gap <= tol or relgap <= tol):
            status = "optimal"
            best = snap
            break
        if it == max_iter:
            break
        if worse >= 4:
            status, message = "numerical-failure", f"stalled at accuracy {best[0]:.1e}"
            break
        # crude divergence detection
        xn = np.linalg.norm(x)
        zn = np.sqrt(zl @ zl + sum(np.sum(Z * Z) for Z in Zk))
        if dres <= 1e-6 and zn > 1e10 * nc and pres > 1e-6:
            status, message = "infeasible", "dual iterates diverge along a ray"
            break
        if pres <= 1e-6 and xn > 1e10 * nb and dres > 1e-6:
            status, message = "unbounded", "primal iterates diverge along a ray"
            break

        # scaling
        try:
            lam_l = np.sqrt(sl * zl)
            wl = np.sqrt(sl / zl)
            scal = [_nt_scaling(S, Z) for S, Z in zip(Sk, Zk)]
        except (la.LinAlgError, ValueError, FloatingPointError):
            message = "lost positive definiteness"
            status = "numerical-failure"
            break
        Vs = [Rti @ Rti.T for _, Rti, _ in scal]
        H = hessian_all(zl / sl if ml else np.zeros(0), Vs)
        try:
            K, fac = kkt_factor(H)
        except (la.LinAlgError, ValueError):
            status, message = "numerical-failure", "singular Newton system"
            break
        mu = gap / nu
        dl_now = zl / sl if ml else np.zeros(0)

        def apply_h(dx, Vs=Vs, dl_now=dl_now):
            out = (Fl.T @ (dl_now * (Fl @ dx))) if ml else np.zeros(n)
            for B, V in zip(blks, Vs):
                out = out + B.adjoint(V @ B.apply_lin(dx) @ V)
            return out

        def direction(ul, uk):
            # ul, uk: scaled complementarity right-hand sides already divided by lambda
            # W^{-1} u  and  W^{-1} r_s terms
            tl = (ul / wl - rsl * zl / sl) if ml else np.zeros(0)
            tk = [Rti @ (U - Rti.T @ Rs @ Rti) @ Rti.T for (R, Rti, lam), U, Rs in zip(scal, uk, rsk)]
            r1 = (Fl.T @ tl if ml else np.zeros(n)) + sum((B.adjoint(T) for B, T in zip(blks, tk)), np.zeros(n)) - rd
            dx, dyn = kkt_solve(K, fac, r1, rp, apply_h)
            # slack steps from the exact linear relation ds = F dx + r_s
            dsl = (Fl @ dx + rsl) if ml else np.zeros(0)
            dzl = (ul - dsl / wl) / wl if ml else np.zeros(0)
            dsk = [B.apply_lin(dx) + Rs for B, Rs in zip(blks, rsk)]
            # in the scaled space dz~ = U - ds~; mapping back with Rti avoids the
            # cancellation of V (R U R' - ds) V
            dsk_s = [Rti.T @ D @ Rti for (R, Rti, lam), D in zip(scal, dsk)]
            dsk_s = [0.5 * (D + D.T) for D in dsk_s]
            dzk_s = [U - D for U, D in zip(uk, dsk_s)]
            dzk = [Rti @ D @ Rti.T for (R, Rti, lam), D in zip(scal, dzk_s)]
            dzk = [0.5 * (D + D.T) for D in dzk]
            dzl_s = dzl * wl if ml else np.zeros(0)
            dsl_s = dsl / wl if ml else np.zeros(0)
            steps["dsl"], steps["dsk"] = dsl, dsk
            return dx, -dyn, dzl, dzk, dzl_s, dsl_s, dzk_s, dsk_s

        def max_step(dzl_s, dsl_s, dzk_s, dsk_s):
            a = np.inf
            if ml:
                for d in (dzl_s, dsl_s):
                    neg = d < 0
                    if neg.any():
                        a = min(a, float(np.min(-lam_l[neg] / d[neg])))
            for (R, Rti, lam), Dz, Ds in zip(scal, dzk_s, dsk_s):
                a = min(a, _step_to_boundary(lam, Dz), _step_to_boundary(lam, Ds))
            return a

        steps = {}

        # predictor
        ul_a = -lam_l
        uk_a = [-np.diag(lam) for _, _, lam in scal]
        dx, dy, dzl, dzk, dzl_s, dsl_s, dzk_s, dsk_s = direction(ul_a, uk_a)
        a_aff = min(1.0, max_step(dzl_s, dsl_s, dzk_s, dsk_s))
        sigma = (1.0 - a_aff) ** 3
        # corrector
        rcl = sigma * mu - lam_l * lam_l - dsl_s * dzl_s if ml else np.zeros(0)
        ul_c = rcl / lam_l if ml else np.zeros(0)
        uk_c = []
        for (_, _, lam), Dz, Ds in zip(scal, dzk_s, dsk_s):
            Rc = sigma * mu * np.eye(lam.size) - np.diag(lam * lam) - _sym_prod(Ds, Dz)
            uk_c.append(_solve_sym_lambda(lam, Rc))
        dx, dy, dzl, dzk, dzl_s, dsl_s, dzk_s, dsk_s = direction(ul_c, uk_c)
        amax = max_step(dzl_s, dsl_s, dzk_s, dsk_s)
        alpha = min(1.0, 0.99 * amax)
        if not np.isfinite(alpha) or alpha < 1e-10:
            status, message = "numerical-failure", "step length collapsed"
            break
        x = x + alpha * dx
        y = y + alpha * dy
        if ml:
            zl = zl + alpha * dzl
            sl = sl + alpha * steps["dsl"]
        newZ, newS = [], []
        for Z, S, Dz, Ds in zip(Zk, Sk, dzk, steps["dsk"]):
            Zn = Z + alpha * Dz
            Sn = S + alpha * Ds
            newZ.append(0.5 * (Zn + Zn.T))
            newS.append(0.5 * (Sn + Sn.T))
        Zk, Sk = newZ, newS

    (_, x, y, zl, Zk, sl, Sk, pobj, dobj, pres, dres, gap, relgap, iters) = best
    if status in ("max-iterations", "numerical-failure") and not message:
        message = "stopped before reaching the requested tolerance"
    return IpmResult(status, x, y, zl, Zk, sl, Sk, pobj, dobj, pres, dres, gap, relgap, iters, message)
