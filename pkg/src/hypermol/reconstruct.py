"""Ab-initio hyper-volume estimation by template matching and SGD."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .hypervolume import HyperVolumeCoeffs, ShellGrid
from .imaging import CircleStack, ImageCircleCoeffs, rotate_restrict, rotate_restrict_adjoint
from .parambasis import BasisKind, ParamBasisSpec, eval_param_basis
from .sphharm import Rotation, equator_values, random_euler, wigner_D_batch

log = logging.getLogger(__name__)


class RankDeficiencyError(np.linalg.LinAlgError):
    pass


# ---------------------------------------------------------------------------
# known assignments


def solve_known_assignments(
    circles: CircleStack,
    eulers: np.ndarray,
    ts: np.ndarray,
    grid: ShellGrid,
    basis: ParamBasisSpec,
    ridge: float = 0.0,
    chunk: int = 128,
) -> HyperVolumeCoeffs:
    """Ridge-regularized least squares for the hyper-volume given true labels.

    Solved shell by shell through the normal equations
    ``(A^H A + ridge I) v = A^H y``; the zero frequency is fitted in ``t`` alone.
    """
    eulers = np.asarray(eulers, dtype=float)
    ts = np.asarray(ts, dtype=float)
    if len(eulers) != len(circles) or len(ts) != len(circles):
        raise ValueError("labels and circles differ in length")
    P, K, nq = grid.P, grid.K, basis.Q + 1
    Pt = eval_param_basis(basis, ts)
    data = circles.padded()
    hv = HyperVolumeCoeffs.zeros(grid, basis)
    eq = equator_values(P)

    gram = [np.zeros((nq, nq, s, s), dtype=complex) for s in grid.shell_sizes]
    rhs = [np.zeros((nq, s), dtype=complex) for s in grid.shell_sizes]
    for s0 in range(0, len(ts), chunk):
        sl = slice(s0, s0 + chunk)
        blocks = wigner_D_batch(P, eulers[sl, 0], eulers[sl, 1], eulers[sl, 2])
        for k, p in enumerate(grid.p):
            # per-image operator from shell coefficients (p+1)^2 to circle entries 2p+1
            M = np.zeros((len(blocks[0]), 2 * p + 1, (p + 1) ** 2), dtype=complex)
            for n in range(p + 1):
                M[:, p - n : p + n + 1, n * n : (n + 1) ** 2] = blocks[n] * eq[n * n : (n + 1) ** 2, None]
            y = data[sl, k, P - p : P + p + 1]
            MhM = np.einsum("bmi,bmj->bij", M.conj(), M)
            Mhy = np.einsum("bmi,bm->bi", M.conj(), y)
            w = Pt[sl]
            gram[k] += np.einsum("bq,br,bij->qrij", w, w, MhM)
            rhs[k] += np.einsum("bq,bi->qi", w, Mhy)

    for k, s in enumerate(grid.shell_sizes):
        A = gram[k].transpose(0, 2, 1, 3).reshape(nq * s, nq * s)
        A = 0.5 * (A + A.conj().T) + ridge * np.eye(nq * s)
        evals = np.linalg.eigvalsh(A)
        if evals[0] <= max(evals[-1], 1e-300) * 1e-13:
            raise RankDeficiencyError(
                f"normal equations of shell {k + 1} are rank deficient "
                f"(smallest eigenvalue {evals[0]:.3g}); increase the ridge parameter"
            )
        sol = np.linalg.solve(A, rhs[k].reshape(-1))
        hv.data[:, grid.shell_slice(k + 1)] = sol.reshape(nq, s)

    G = Pt.T @ Pt + ridge * np.eye(nq)
    hv.dc[:] = np.linalg.solve(G, Pt.T @ circles.dc)
    return hv


# ---------------------------------------------------------------------------
# objective and gradient


def shell_weights(grid: ShellGrid, K_active: int | None = None) -> np.ndarray:
    """Matching/objective weight ``w_k = r_k`` for active shells, 0 beyond."""
    K_active = grid.K if K_active is None else K_active
    w = grid.radii.copy()
    w[K_active:] = 0.0
    return w


def _masked_padded(hv: HyperVolumeCoeffs, K_active: int, Q_active: int) -> np.ndarray:
    pad = hv.padded()[: Q_active + 1].copy()
    pad[:, K_active:] = 0.0
    return pad


def batch_objective_and_gradient(
    hv: HyperVolumeCoeffs,
    observed: np.ndarray,
    eulers: np.ndarray,
    ts: np.ndarray,
    K_active: int | None = None,
    Q_active: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-image costs ``(B,)`` and summed gradient ``(Q+1, size)``.

    ``observed`` is padded circles ``(B, K, 2P+1)``.  The gradient is
    ``dC/dRe(v) + i dC/dIm(v)``; coefficients outside the active bands get 0.
    """
    grid, P = hv.grid, hv.grid.P
    K_active = grid.K if K_active is None else K_active
    Q_active = hv.Q if Q_active is None else Q_active
    w = shell_weights(grid, K_active)
    Pt = eval_param_basis(hv.basis, np.asarray(ts, dtype=float))[:, : Q_active + 1]
    eulers = np.atleast_2d(np.asarray(eulers, dtype=float))
    blocks = wigner_D_batch(P, eulers[:, 0], eulers[:, 1], eulers[:, 2])
    inst = np.einsum("bq,qkl->bkl", Pt, _masked_padded(hv, K_active, Q_active))
    resid = rotate_restrict(inst, eulers, P, blocks) - observed
    resid[:, K_active:] = 0.0
    costs = np.einsum("k,bkm->b", w, np.abs(resid) ** 2)
    back = rotate_restrict_adjoint(2.0 * w[None, :, None] * resid, eulers, P, blocks)
    grad = np.zeros_like(hv.data)
    grad[: Q_active + 1] = grid.from_padded(np.einsum("bq,bkl->qkl", Pt, back))
    grad[:, int(grid.offsets[K_active]) :] = 0.0
    return costs, grad


def objective_and_gradient(
    hv: HyperVolumeCoeffs,
    img: ImageCircleCoeffs,
    rot: Rotation,
    t: float,
    K_active: int | None = None,
    Q_active: int | None = None,
) -> tuple[float, np.ndarray]:
    """Cost ``sum_k w_k sum_m |A(rot, t) hv - img|^2`` and its gradient (flat)."""
    costs, grad = batch_objective_and_gradient(
        hv, img.padded()[None], np.array([rot.angles]), np.array([t]), K_active, Q_active
    )
    return float(costs[0]), grad.reshape(-1)


def sgd_step(
    hv: HyperVolumeCoeffs,
    circles: CircleStack,
    assignments: list["Assignment"],
    step,
    K_active: int | None = None,
    Q_active: int | None = None,
) -> HyperVolumeCoeffs:
    """``hv - step * mean gradient`` over the minibatch (returns a new object).

    ``step`` is a scalar or a per-shell array of length K.  Images are
    accumulated in ascending image-index order.
    """
    if np.any(np.asarray(step) <= 0):
        raise ValueError("step must be positive")
    order = sorted(range(len(assignments)), key=lambda i: assignments[i].image_index)
    asg = [assignments[i] for i in order]
    idx = np.array([a.image_index for a in asg])
    eulers = np.array([a.rot.angles for a in asg])
    ts = np.array([a.t for a in asg])
    _, grad = batch_objective_and_gradient(hv, circles.subset(idx).padded(), eulers, ts, K_active, Q_active)
    grad /= len(asg)
    out = hv.copy()
    step = np.asarray(step, dtype=float)
    if step.ndim == 0:
        out.axpy(-float(step), grad)
    else:
        per_coeff = np.repeat(step, hv.grid.shell_sizes)
        out.axpy(-1.0, grad * per_coeff)
    return out


# ---------------------------------------------------------------------------
# templates and matching


@dataclass(frozen=True)
class Assignment:
    image_index: int
    rot: Rotation
    t: float
    score: float


@dataclass
class TemplateSet:
    """Viewing directions ``(beta, gamma)`` with per-q circle coefficients.

    ``circles[d, q]`` are the circles of ``ZYZ(0, beta_d, gamma_d) o hv_q``.
    The in-plane angle ``psi`` (first Euler angle) multiplies entry ``m`` by
    ``exp(-i m psi)``, and ``t`` enters linearly through ``P_q(t)``, so the
    template for direction ``d`` and sample ``ts[i]`` is
    ``sum_q basis_values[i, q] * circles[d, q]``.
    """

    directions: np.ndarray  # (D, 2)
    ts: np.ndarray  # (T,)
    basis_values: np.ndarray  # (T, Q_active+1)
    circles: np.ndarray  # (D, Q_active+1, K, 2P+1)
    weights: np.ndarray  # (K,)  shell weights, zero beyond the active band
    basis: ParamBasisSpec
    n_dof: int = 0  # complex circle entries on the active shells

    def basis_at(self, t: float) -> np.ndarray:
        return eval_param_basis(self.basis, t)[: self.basis_values.shape[1]]

    @property
    def n_templates(self) -> int:
        return len(self.directions) * len(self.ts)

    def template_circles(self, d: int, ti: int) -> np.ndarray:
        return np.einsum("q,qkm->km", self.basis_values[ti], self.circles[d])


def make_templates(
    hv: HyperVolumeCoeffs,
    directions: np.ndarray,
    ts: np.ndarray,
    K_active: int | None = None,
    Q_active: int | None = None,
    chunk: int = 128,
) -> TemplateSet:
    """Precompute per-q template circles; all ``t`` samples share one rotate-restrict pass."""
    grid = hv.grid
    K_active = grid.K if K_active is None else K_active
    Q_active = hv.Q if Q_active is None else Q_active
    P = int(grid.p[K_active - 1])
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    nq = Q_active + 1
    pad = _masked_padded(hv, K_active, Q_active)[:, :K_active, : (P + 1) ** 2]
    flat = pad.reshape(1, nq * K_active, (P + 1) ** 2)
    out = np.zeros((len(directions), nq, grid.K, 2 * grid.P + 1), dtype=complex)
    for s in range(0, len(directions), chunk):
        d = directions[s : s + chunk]
        eul = np.stack([np.zeros(len(d)), d[:, 0], d[:, 1]], axis=-1)
        coeffs = np.broadcast_to(flat, (len(d),) + flat.shape[1:])
        circ = rotate_restrict(coeffs, eul, P).reshape(len(d), nq, K_active, 2 * P + 1)
        out[s : s + chunk, :, :K_active, grid.P - P : grid.P + P + 1] = circ
    basis_values = eval_param_basis(hv.basis, ts)[:, :nq]
    n_dof = int(sum(2 * p + 1 for p in grid.p[:K_active]))
    return TemplateSet(directions, ts, basis_values, out, shell_weights(grid, K_active), hv.basis, n_dof)


def random_directions(rng: np.random.Generator, n: int) -> np.ndarray:
    """Viewing directions ``(beta, gamma)`` of Haar-random rotations."""
    return random_euler(rng, n)[:, 1:]


def _parabola_vertex(x, y) -> float | None:
    (x0, x1, x2), (y0, y1, y2) = x, y
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom
    if not a > 0:
        return None
    return -b / (2 * a)


@dataclass
class MatchResult:
    assignments: list[Assignment]
    degenerate: list[int] = field(default_factory=list)  # image indices with all-zero circles


def match_batch(
    observed: np.ndarray,
    templates: TemplateSet,
    image_indices=None,
    n_psi: int = 64,
    refine_t: bool = True,
    chunk: int = 8,
    temperature: float | None = None,
) -> MatchResult:
    """Best (rotation, t) of each image over all templates and in-plane angles.

    ``observed`` is padded circles ``(B, K, 2P+1)``.  The cost is
    ``sum_k w_k sum_m |template - image|^2``.  In-plane angles are scanned on
    ``n_psi`` equispaced values with one FFT per (image, direction, q), and
    ``t`` on ``templates.ts`` via the factored form ``sum_q P_q(t) X_q``.
    Ties go to the smallest template index (direction-major, then t) and then
    the smallest angle index.  With ``refine_t`` the best ``t`` is refined by
    a three-point parabola and kept only if the exact cost decreases.

    With ``temperature`` set, ``t`` is instead the posterior mean over
    ``templates.ts`` under weights ``exp(-cost / tau)`` summed over
    directions and angles, with ``tau = temperature * best / n_dof`` (the
    weighted cost is proportional to the white-noise log-likelihood and
    ``best / n_dof`` estimates the noise level per circle entry).  The
    rotation and score remain those of the best template.
    """
    observed = np.asarray(observed)
    B, K, M = observed.shape
    P = (M - 1) // 2
    if n_psi < M:
        raise ValueError("n_psi must be at least 2P+1")
    image_indices = np.arange(B) if image_indices is None else np.asarray(image_indices)
    C, Pt, w = templates.circles, templates.basis_values, templates.weights
    D, nq = C.shape[:2]
    T = len(templates.ts)
    m = np.arange(-P, P + 1)
    psi = 2 * np.pi * np.arange(n_psi) / n_psi
    wC = C * w[None, None, :, None]
    gram = np.einsum("dqkm,drkm->dqr", wC.conj(), C).real
    norms = np.einsum("tq,dqr,tr->dt", Pt, gram, Pt)  # (D, T)

    result = MatchResult([])
    for s in range(0, B, chunk):
        obs = observed[s : s + chunk]
        b = len(obs)
        inorm = np.einsum("k,bkm->b", w, np.abs(obs) ** 2)
        Y = np.einsum("bkm,dqkm->bdqm", obs.conj(), wC)
        buf = np.zeros((b, D, nq, n_psi), dtype=complex)
        buf[..., m % n_psi] = Y
        Z = np.fft.fft(buf, axis=-1).real  # Re sum_m Y_m exp(-i m psi_j)
        cost = norms[None, :, :, None] - 2.0 * np.einsum("tq,bdqj->bdtj", Pt, Z) + inorm[:, None, None, None]
        flat = cost.reshape(b, -1)
        best = np.argmin(flat, axis=1)
        for i in range(b):
            idx = int(image_indices[s + i])
            if inorm[i] == 0.0:
                result.degenerate.append(idx)
                beta, gamma = templates.directions[0]
                result.assignments.append(Assignment(idx, Rotation(0.0, float(beta), float(gamma)), float(templates.ts[0]), float(norms[0, 0])))
                continue
            d, ti, j = np.unravel_index(best[i], (D, T, n_psi))
            t_best, score = float(templates.ts[ti]), float(flat[i, best[i]])
            if temperature is not None and score > 0.0:
                tau = temperature * score / max(templates.n_dof, 1)
                lw = special.logsumexp(-(cost[i] - score) / tau, axis=(0, 2))
                pw = np.exp(lw - lw.max())
                t_best = float(np.clip(pw @ templates.ts / pw.sum(), 0.0, 1.0))
            elif refine_t and T >= 3:
                lo = min(max(ti - 1, 0), T - 3)
                xs = templates.ts[lo : lo + 3]
                tv = _parabola_vertex(xs, cost[i, d, lo : lo + 3, j])
                if tv is not None:
                    tv = float(np.clip(tv, max(xs[0], 0.0), min(xs[2], 1.0)))
                    pv = templates.basis_at(tv)
                    c_ref = pv @ gram[d] @ pv - 2.0 * (pv @ Z[i, d, :, j]) + inorm[i]
                    if c_ref < score:
                        t_best, score = tv, float(c_ref)
            beta, gamma = templates.directions[d]
            result.assignments.append(Assignment(idx, Rotation(float(psi[j]), float(beta), float(gamma)), t_best, max(score, 0.0)))
    return result


def match_image(img: ImageCircleCoeffs, templates: TemplateSet, n_psi: int = 64, index: int = 0) -> Assignment:
    """Single-image convenience wrapper around :func:`match_batch`."""
    return match_batch(img.padded()[None], templates, [index], n_psi=n_psi).assignments[0]


# ---------------------------------------------------------------------------
# initialization, schedule, driver


def init_spherical_average(circles: CircleStack, basis: ParamBasisSpec | None = None) -> HyperVolumeCoeffs:
    """Rotation-invariant start: each shell set to the mean of the image circles.

    Only ``(q, n, m) = (0, 0, 0)`` is set, to ``mean_i alpha_i[k, 0] / Y_0^0``,
    so that restricting the shell to any central circle reproduces the mean
    circle value.  The zero frequency is the mean image DC.
    """
    if len(circles) == 0:
        raise ValueError("need at least one image")
    grid = circles.grid
    basis = ParamBasisSpec(BasisKind.LEGENDRE, 0) if basis is None else basis
    hv = HyperVolumeCoeffs.zeros(grid, basis)
    mean0 = circles.padded()[:, :, grid.P].mean(axis=0)  # m = 0 entries, (K,)
    y00 = equator_values(0)[0].real
    hv.data[0, grid.offsets[:-1]] = mean0 / y00
    hv.dc[0] = circles.dc.mean()
    return hv


@dataclass(frozen=True)
class Stage:
    K: int
    Q: int
    iters: int
    step: float


@dataclass(frozen=True)
class MarchingSchedule:
    stages: tuple[Stage, ...]

    def __post_init__(self):
        st = tuple(s if isinstance(s, Stage) else Stage(*s) for s in self.stages)
        object.__setattr__(self, "stages", st)
        if not st:
            raise ValueError("schedule has no stages")
        if st[0].Q != 0:
            raise ValueError("the first stage must have Q = 0")
        for a, b in zip(st, st[1:]):
            if b.K < a.K or b.Q < a.Q:
                raise ValueError("K and Q must be non-decreasing across stages")
        for s in st:
            if s.K < 1 or s.iters < 0 or not s.step > 0:
                raise ValueError(f"invalid stage {s}")

    @property
    def K_max(self) -> int:
        return max(s.K for s in self.stages)

    @property
    def Q_max(self) -> int:
        return max(s.Q for s in self.stages)

    @classmethod
    def alternating(cls, K_start: int, K_end: int, Q_end: int, iters: int, step: float, decay: float = 0.5, K_step: int = 2, min_step: float = 0.0):
        """Default pattern ``K, K, Q, K, Q, ...``: two K increments, then alternate.

        The step decays geometrically by ``decay`` per stage, floored at ``min_step``.
        """
        K, Q = K_start, 0
        pairs = [(K, Q)]
        moves = ["K", "K"]
        while K < K_end or Q < Q_end:
            move = moves.pop(0) if moves else ("Q" if pairs[-1][1] == pairs[-2][1] or K >= K_end else "K")
            if move == "K" and K < K_end:
                K = min(K + K_step, K_end)
            elif Q < Q_end:
                Q += 1
            else:
                K = min(K + K_step, K_end)
            pairs.append((K, Q))
        stages = [Stage(k, q, iters, max(step * decay**i, min_step)) for i, (k, q) in enumerate(pairs)]
        return cls(tuple(stages))


@dataclass
class ReconConfig:
    """Settings of :func:`reconstruct` (defaults are the desk-scale preset)."""

    schedule: MarchingSchedule
    basis_kind: BasisKind = BasisKind.LEGENDRE
    minibatch: int = 64
    n_directions: int = 256
    n_t: int = 21
    t_sampling: str = "grid"  # "grid" (uniform, deterministic) or "random"
    n_psi: int = 64
    final_directions: int = 1024
    new_q_scale: float = 0.05
    t_temperature: float | None = 8.0  # final t estimate: posterior mean (None: best template)
    seed: int = 0

    def validate(self, grid: ShellGrid) -> None:
        if self.schedule.K_max > grid.K:
            raise ValueError("schedule uses more shells than the grid has")
        if self.minibatch < 1 or self.n_directions < 1 or self.n_t < 3 or self.final_directions < 1:
            raise ValueError("minibatch, template counts must be positive (n_t >= 3)")
        if self.t_sampling not in ("grid", "random"):
            raise ValueError("t_sampling must be 'grid' or 'random'")
        if self.t_temperature is not None and not self.t_temperature > 0:
            raise ValueError("t_temperature must be positive or None")
        if self.n_psi < 2 * grid.P + 1:
            raise ValueError(f"n_psi must be at least {2 * grid.P + 1}")


@dataclass
class StageDiagnostics:
    stage: int
    K: int
    Q: int
    step: float
    mean_score: float
    t_histogram: np.ndarray
    degenerate: int


@dataclass
class ReconResult:
    hv: HyperVolumeCoeffs
    assignments: list[Assignment]
    diagnostics: list[StageDiagnostics]
    degenerate: list[int]


def preconditioned_step(grid: ShellGrid, base: float) -> np.ndarray:
    """Per-shell step ``base * 2 pi / r_k``.

    The orientation-averaged curvature of the objective for shell ``k`` is
    ``r_k / (2 pi)`` per coefficient, so ``base = 1`` is a Newton step on the
    minibatch average and smaller values average over more minibatches.
    """
    return base * 2.0 * np.pi / grid.radii


def _t_samples(cfg: ReconConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.t_sampling == "grid":
        return np.linspace(0.0, 1.0, cfg.n_t)
    return np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0.0, 1.0, cfg.n_t - 2)]))


def fit_dc(hv: HyperVolumeCoeffs, circles: CircleStack, ts: np.ndarray) -> None:
    """Least-squares fit of the zero frequency in ``t`` (in place)."""
    Pt = eval_param_basis(hv.basis, ts)
    hv.dc[:] = np.linalg.lstsq(Pt, circles.dc, rcond=None)[0]


def match_all(hv, circles, cfg: ReconConfig, rng, K_active=None, Q_active=None, n_directions=None, batch=256, temperature=None) -> MatchResult:
    """Match every image against one freshly drawn template set."""
    dirs = random_directions(rng, cfg.final_directions if n_directions is None else n_directions)
    tmpl = make_templates(hv, dirs, _t_samples(cfg, rng), K_active, Q_active)
    obs = circles.padded()
    out = MatchResult([])
    for s in range(0, len(circles), batch):
        r = match_batch(obs[s : s + batch], tmpl, np.arange(s, min(s + batch, len(circles))), n_psi=cfg.n_psi, temperature=temperature)
        out.assignments += r.assignments
        out.degenerate += r.degenerate
    return out


def reconstruct(circles: CircleStack, cfg: ReconConfig, callback=None) -> ReconResult:
    """Ab-initio estimate by alternating template matching and SGD with marching.

    Starts from :func:`init_spherical_average`.  For every stage and
    iteration a minibatch and fresh templates (Haar-random directions and the
    configured ``t`` samples) are drawn from a generator seeded by
    ``cfg.seed``; the minibatch is matched and one preconditioned SGD step is
    taken on the active bands.  When ``Q`` grows the new coefficients start
    as small seeded noise so the ``t`` symmetry can break.  Finally all
    images are matched against the final estimate; with
    ``cfg.t_temperature`` set their ``t`` is the posterior mean (see
    :func:`match_batch`), which ranks images more reliably than the single
    best template at low SNR.
    """
    grid = circles.grid
    cfg.validate(grid)
    rng = np.random.default_rng(cfg.seed)
    sched = cfg.schedule
    basis = ParamBasisSpec(cfg.basis_kind, sched.Q_max)
    hv = init_spherical_average(circles, ParamBasisSpec(cfg.basis_kind, 0)).with_basis(basis)
    n = len(circles)
    B = min(cfg.minibatch, n)
    obs = circles.padded()
    diags: list[StageDiagnostics] = []
    degenerate: set[int] = set()
    Q_prev = 0
    for si, st in enumerate(sched.stages):
        if st.Q > Q_prev:
            for q in range(Q_prev + 1, st.Q + 1):
                for k in range(1, grid.K + 1):
                    sl = grid.shell_slice(k)
                    scale = cfg.new_q_scale * np.sqrt(np.mean(np.abs(hv.data[0, sl]) ** 2))
                    noise = rng.standard_normal(hv.data[q, sl].shape) + 1j * rng.standard_normal(hv.data[q, sl].shape)
                    hv.data[q, sl] = scale * noise / np.sqrt(2.0)
            Q_prev = st.Q
        step = preconditioned_step(grid, st.step)
        scores, tvals, degen = [], [], 0
        for it in range(st.iters):
            idx = np.sort(rng.choice(n, size=B, replace=False))
            tmpl = make_templates(hv, random_directions(rng, cfg.n_directions), _t_samples(cfg, rng), st.K, st.Q)
            res = match_batch(obs[idx], tmpl, idx, n_psi=cfg.n_psi)
            degenerate.update(res.degenerate)
            degen += len(res.degenerate)
            hv = sgd_step(hv, circles, res.assignments, step, st.K, st.Q)
            scores += [a.score for a in res.assignments]
            tvals += [a.t for a in res.assignments]
        hist = np.histogram(tvals, bins=10, range=(0.0, 1.0))[0]
        d = StageDiagnostics(si, st.K, st.Q, st.step, float(np.mean(scores)) if scores else float("nan"), hist, degen)
        diags.append(d)
        log.info("stage %d K=%d Q=%d step=%.3g mean score %.6g t-hist %s", si, st.K, st.Q, st.step, d.mean_score, hist.tolist())
        if callback is not None:
            callback(si, hv, d)
    final = match_all(hv, circles, cfg, rng, sched.stages[-1].K, sched.stages[-1].Q, temperature=cfg.t_temperature)
    degenerate.update(final.degenerate)
    fit_dc(hv, circles, np.array([a.t for a in final.assignments]))
    return ReconResult(hv, final.assignments, diags, sorted(degenerate))
