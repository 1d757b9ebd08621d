"""Independent reference solutions used by the unit and acceptance tests."""

from contextlib import contextmanager

import numpy as np

from securemec import bcd_perfect as bp
from securemec import bcd_robust as br
from securemec import cone
from securemec.metrics import EveCsi, required_rate
from securemec.scenario import effective_channels

from _runs import channels


# ----------------------------------------------------------------------------
# linear SDP corpus


def _rand_herm(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (A + A.conj().T)


def sdp_corpus(seed: int = 7):
    """20 (name, solve, optimum) triples of linear SDPs with orders <= 8.

    min Tr(C X) over Tr X = 1, X PSD equals lambda_min(C); min t with
    t I - C PSD equals lambda_max(C); the minimal certified beta of the
    structured robust LMI is (||t|| + xi_e + xi_g ||e||)^2 and is also
    recovered by bisection on LMI feasibility.
    """
    rng = np.random.default_rng(seed)
    out = []
    for n in range(1, 9):
        C = _rand_herm(rng, n)

        def solve(C=C, n=n):
            b = cone.ProgramBuilder()
            sl, basis = b.hermitian_psd("X", n)
            tr = basis.inner(np.eye(n))
            b.eq({sl.start + j: v for j, v in enumerate(tr) if v}, 1.0)
            c = np.zeros(b.n)
            c[sl] = basis.inner(C)
            res = cone.solve_cone_program(b.build(c=c, x0=basis.from_matrix(np.eye(n) / n)),
                                          tol=1e-10)
            return res.objective

        out.append((f"lambda_min n={n}", solve, float(np.linalg.eigvalsh(C)[0])))
    for n in range(3, 9):
        C = _rand_herm(rng, n)

        def solve(C=C, n=n):
            b = cone.ProgramBuilder()
            b.var("t", 1)
            b.add_lmi(cone.LMI(-C, np.array([0]), np.eye(n)[None].astype(complex)))
            prog = b.build(c=np.array([1.0]), x0=np.array([float(np.abs(C).sum()) + 1.0]))
            return cone.solve_cone_program(prog, tol=1e-10).objective

        out.append((f"lambda_max n={n}", solve, float(np.linalg.eigvalsh(C)[-1])))
    for Ne in (1, 2):
        for j in range(3):
            t = rng.standard_normal(Ne) + 1j * rng.standard_normal(Ne)
            xe, xg, nE = 0.1 * (j + 1), 0.05 * (j + 1), float(2 + j)
            beta = (np.linalg.norm(t) + xe + xg * np.sqrt(nE)) ** 2
            out.append((f"robust beta Ne={Ne} #{j}",
                        lambda t=t, xe=xe, xg=xg, nE=nE: br.lmi_min_beta(t, xe, xg, nE)[0],
                        float(beta)))
    return out


# ----------------------------------------------------------------------------
# finite differences


def _richardson(f, x, i, h):
    def d(step):
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        return (np.asarray(f(xp), float) - np.asarray(f(xm), float)) / (2.0 * step)

    return (4.0 * d(h / 2.0) - d(h)) / 3.0


def fd_jacobian(f, x, h_rel: float = 1e-5):
    """Columns d f / d x_i by Richardson-extrapolated central differences."""
    cols = [_richardson(f, x, i, h_rel * max(1.0, abs(x[i]))) for i in range(x.size)]
    return np.stack(cols, axis=-1)


def _rel(an, fd):
    an, fd = np.asarray(an, float), np.asarray(fd, float)
    scale = max(np.max(np.abs(an), initial=0.0), np.max(np.abs(fd), initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(an - fd)) / scale)


def _dense_hess(H, q, n):
    if H is None:
        return np.zeros((q, n, n))
    if isinstance(H, cone.LowRank):
        return H.dense()
    return np.asarray(H, float)


def callback_errors(prog: cone.ConeProgram, x: np.ndarray) -> list:
    """(name, grad error, hessian error) for the objective and every smooth row.

    Errors are max-abs differences divided by the largest entry, taken per
    row so a large row cannot hide a wrong small one.
    """
    out = []
    if prog.objective is not None:
        f, g, H = prog.objective.full(x)
        fdg = fd_jacobian(lambda z: np.atleast_1d(prog.objective.value(z)), x)[0]
        fdH = fd_jacobian(lambda z: prog.objective.full(z)[1], x)
        Hd = np.zeros((x.size, x.size)) if H is None else np.asarray(H, float)
        out.append(("objective", _rel(g, fdg), _rel(Hd, fdH)))
    for sc in prog.smooth:
        v, J, H = sc.full(x)
        v = np.atleast_1d(v)
        fdJ = fd_jacobian(lambda z: np.atleast_1d(sc.value(z)), x)
        fdH = fd_jacobian(lambda z: sc.full(z)[1], x)          # (q, n, n)
        Hd = _dense_hess(H, v.size, x.size)
        for k in range(v.size):
            out.append((f"{sc.name or 'smooth'}[{k}]", _rel(J[k], fdJ[k]), _rel(Hd[k], fdH[k])))
    return out


@contextmanager
def recorded_programs():
    """Collect (program, solution) for every barrier solve inside the block."""
    seen = []
    solve, margin = cone.solve_cone_program, cone.max_margin_feasibility

    def rec_solve(prog, *a, **kw):
        res = solve(prog, *a, **kw)
        seen.append((prog, res.x))
        return res

    def rec_margin(prog, *a, **kw):
        res = margin(prog, *a, **kw)
        seen.append((prog, res.x))
        return res

    cone.solve_cone_program, cone.max_margin_feasibility = rec_solve, rec_margin
    try:
        yield seen
    finally:
        cone.solve_cone_program, cone.max_margin_feasibility = solve, margin


def solver_callback_errors(seed: int = 3, **kw) -> list:
    """Finite-difference errors of every callback built during short BCD runs.

    Covers the allocation, detection and phase programs of both algorithms.
    """
    cfg, ch, streams = channels(seed, K=2, M=3, max_iter=2, rand_count=20, **kw)
    with recorded_programs() as seen:
        bp.run(cfg, ch, streams=streams)
        br.run_robust(cfg, ch, streams=streams, audit_samples=10)
    errs = []
    by_kind = {}
    for prog, x in seen:
        kinds = tuple(sorted({sc.name for sc in prog.smooth})) + \
            (("objective",) if prog.objective is not None else ())
        # two programs of each kind keep the check affordable
        if by_kind.get(kinds, 0) >= 2:
            continue
        by_kind[kinds] = by_kind.get(kinds, 0) + 1
        errs.extend(callback_errors(prog, np.asarray(x, float)))
    return errs


# ----------------------------------------------------------------------------
# small-instance oracles


def k1_allocation(seed: int, n_grid: int = 400):
    """(E from the allocation block, E on the n x n (l, p) grid, exact 1-D optimum).

    With one user the secrecy rate depends on p alone, so for each p the best
    l is max(0, L - B T Rs(p)); a fine p grid of that gives the exact optimum.
    """
    cfg, ch, streams = channels(seed, K=1)
    s = bp.initial_state(cfg, ch, streams)
    bp.allocation_block(cfg, ch, s)
    h, g = effective_channels(ch, s.e)
    a = np.abs(np.vdot(s.W[:, 0], h[0])) ** 2 / (cfg.sigma_a2 * np.vdot(s.W[:, 0], s.W[:, 0]).real)
    z = np.sum(np.abs(g[0]) ** 2) / cfg.sigma_e2
    L, P, c = cfg.L_vec[0], cfg.P_max, cfg.local_coeff[0]
    ls, ps = np.linspace(0.0, L, n_grid), np.linspace(0.0, P, n_grid)
    Rs = np.log2(1 + ps * a) - np.log2(1 + ps * z)
    ok = Rs[None, :] >= (L - ls[:, None]) / (cfg.B * cfg.T)
    E_grid = float(np.min(np.where(ok, c * ls[:, None] ** 3 + cfg.T * ps[None, :], np.inf)))
    pf = np.linspace(0.0, P, 400001)
    lf = np.maximum(0.0, L - cfg.B * cfg.T * np.maximum(np.log2((1 + pf * a) / (1 + pf * z)), 0))
    E_exact = float(np.min(c * lf ** 3 + cfg.T * pf))
    return s.energy(cfg), E_grid, E_exact


def k1_detection_overlap(seed: int, robust: bool = False) -> float:
    """|w^H h| / ||h|| of the single-user detector after one detection block.

    Starts from a random detector and a positive power so the block has to move.
    """
    cfg, ch, streams = channels(seed, K=1)
    s = bp.initial_state(cfg, ch, streams)
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(cfg.N_a) + 1j * rng.standard_normal(cfg.N_a)
    s.W = (w / np.linalg.norm(w))[:, None]
    s.p = np.array([0.5 * cfg.P_max])
    s.l = 0.99 * cfg.L_vec
    if robust:
        rs = br.robust_state(cfg, ch, EveCsi.from_channels(ch, cfg.eps_e, cfg.eps_g), s)
        W, _ = br.solve_detection_robust(cfg, ch, rs, rng)
    else:
        W, _ = bp.solve_detection(cfg, ch, s, rng)
    h, _ = effective_channels(ch, s.e)
    return float(np.abs(np.vdot(W[:, 0], h[0])) / (np.linalg.norm(W[:, 0]) * np.linalg.norm(h[0])))


def m2_phase(seed: int, n_grid: int = 64, max_blocks: int = 15):
    """(summed secrecy rate of the phase block, best on the n x n phase grid).

    K = 2, M = 2 with (l, p) from one allocation block and W fixed; the phase
    block is repeated until it stops moving (the subproblem's own SCA loop).
    Only margin-feasible grid points count. Returns None when a user is idle.
    """
    cfg, ch, streams = channels(seed, K=2, M=2)
    s = bp.initial_state(cfg, ch, streams)
    bp.allocation_block(cfg, ch, s)
    if np.any(bp.idle_users(cfg, s.p)):
        return None
    quality, margin = bp.phase_quality(cfg, ch, s.W, s.p, s.l)
    shift = float(np.sum(required_rate(cfg, s.l)))
    rng = np.random.default_rng(seed)
    for _ in range(max_blocks):
        e, order, st = bp.solve_phases(cfg, ch, s, rng)
        if not st.accepted:
            break
        s.e, s.order = e, order
    got = quality(np.append(s.e, 1.0)) + shift
    th = np.exp(2j * np.pi * np.arange(n_grid) / n_grid)
    best = -np.inf
    for a in th:
        for b in th:
            eb = np.array([a, b, 1.0])
            if margin(eb) >= -1e-6:
                best = max(best, quality(eb) + shift)
    return got, best
