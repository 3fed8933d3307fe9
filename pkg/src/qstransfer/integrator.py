"""Lindblad master-equation propagation with piecewise-constant controls.

Within one schedule segment the Liouvillian is constant, so three
methods are offered:

``krylov`` (default)
    Restarted Arnoldi evaluation of exp(dt L) rho between consecutive
    sample times: the basis grows until Saad's residual estimate meets
    the local tolerance, else the step shrinks to the largest feasible
    sub-interval.  Steps never cross segment boundaries and the basis
    adapts to the spectrum actually explored by the state, which is far
    narrower than the operator norm for these detuned ladder models.
``rk45``
    Adaptive Dormand-Prince 4(5) pair with elementwise mixed-tolerance
    error control and step clipping at boundaries and sample times.
``rk4``
    Fixed-step classic Runge-Kutta (step = max_step) for convergence
    studies against the exact oracle.

The right-hand side is evaluated as matrix products with the folded
effective Hamiltonian H_eff = H - (i/2) sum L^dag L plus sparse jump
terms, never materializing the d^2 x d^2 superoperator; the dense
vectorized Liouvillian exists only inside expm_oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.linalg import blas

from .errors import DimensionError, IntegrationError, LayoutError, StateError
from .hilbert import (CAVITY, MODE_I, MODE_R, MODE_S, POSITIVITY_TOL, QUBIT,
                      DensityMatrix, Operator, SpaceLayout, occupation_diagonal)
from .model import TransferModel
from .pulses import PulseSchedule

METHODS = ("krylov", "rk45", "rk4")

#: trajectory-level invariant tolerances
TRACE_DRIFT_TOL = 1e-6
HERMITICITY_DRIFT_TOL = 1e-8
IMAG_RESIDUE_TOL = 1e-10


@dataclass(frozen=True)
class IntegratorConfig:
    """Propagation settings.

    ``samples`` is either a point count (uniform grid over the schedule
    span, endpoints included) or an explicit increasing grid inside the
    span.  ``max_step`` caps adaptive steps and is the fixed step of
    rk4.  Positivity is enforced at every sample: samples on the
    ``positivity_stride`` grid (every k-th) record the exact smallest
    eigenvalue, the rest certify the floor by an attempted Cholesky
    factorization.  ``krylov_dim`` caps the Arnoldi basis; the
    effective cap also obeys a memory budget so large models degrade to
    shorter steps instead of exhausting RAM.
    """

    method: str = "krylov"
    rel_tol: float = 1e-7
    abs_tol: float = 1e-10
    max_step: float | None = None
    samples: int | Sequence[float] = 61
    positivity_stride: int = 8
    krylov_dim: int = 80

    def __post_init__(self):
        if self.method not in METHODS:
            raise IntegrationError(
                f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise IntegrationError("tolerances must be positive")
        if self.max_step is not None and self.max_step <= 0:
            raise IntegrationError("max_step must be positive")
        if isinstance(self.samples, int) and self.samples < 2:
            raise IntegrationError("need at least 2 sample points")
        if self.positivity_stride < 0:
            raise IntegrationError("positivity_stride must be >= 0")
        if self.krylov_dim < 2:
            raise IntegrationError("krylov_dim must be >= 2")


def _as_matrix(obj) -> np.ndarray:
    if isinstance(obj, (Operator, DensityMatrix)):
        return obj.matrix
    return np.asarray(obj, dtype=complex)


def lindblad_rhs(rho, hamiltonian, collapse=()) -> np.ndarray:
    """Textbook Lindblad generator -i[H, rho] + sum_k D[L_k] rho."""
    r = _as_matrix(rho)
    h = _as_matrix(hamiltonian)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise DimensionError(f"state must be square, got shape {r.shape}")
    if h.shape != r.shape:
        raise DimensionError(
            f"Hamiltonian shape {h.shape} mismatches state shape {r.shape}")
    out = -1j * (h @ r - r @ h)
    for op in collapse:
        l_mat = _as_matrix(op)
        if l_mat.shape != r.shape:
            raise DimensionError(
                f"collapse operator shape {l_mat.shape} mismatches state {r.shape}")
        ldl = l_mat.conj().T @ l_mat
        out += l_mat @ r @ l_mat.conj().T - 0.5 * (ldl @ r + r @ ldl)
    return out


class LindbladAction:
    """Matrix-free Liouvillian for one constant-control segment.

    Folds the anticommutator part into H_eff = H - (i/2) sum L^dag L
    and keeps every operator sparse: Hamiltonians and collapse
    operators here are Kronecker embeddings of few-band ladder blocks
    with O(d) nonzeros, so one evaluation costs a handful of
    sparse-times-dense products (O(d^2) each) instead of dense d^3
    matrix products.  Right multiplications go through the transpose
    identity X A = (A^T X^T)^T.
    """

    def __init__(self, hamiltonian: np.ndarray, collapse: Sequence[Operator]):
        h = np.asarray(hamiltonian, dtype=complex)
        self.dim = h.shape[0]
        fold = np.zeros_like(h)
        self.diag_jumps: list[np.ndarray] = []
        self.gather_jumps: list[tuple] = []
        self.csr_jumps: list[tuple[sp.csr_array, sp.csr_array]] = []
        for op in collapse:
            l_dense = _as_matrix(op)
            l_csr = sp.csr_array(l_dense)
            fold += (l_csr.conj().T @ l_csr).toarray()
            per_row = np.diff(l_csr.indptr)
            if per_row.max(initial=0) <= 1:
                # single entry per row: L rho L^dag is a weighted gather,
                # (L rho L^dag)[i, j] = w_i conj(w_j) rho[src_i, src_j]
                rows = np.flatnonzero(per_row)
                src = l_csr.indices[l_csr.indptr[rows]]
                w = l_csr.data[l_csr.indptr[rows]]
                wmat = np.outer(w, w.conj())
                if rows.size == self.dim and np.array_equal(rows, src):
                    self.diag_jumps.append(wmat)
                else:
                    self.gather_jumps.append(
                        (np.ix_(rows, rows), np.ix_(src, src), wmat))
            else:
                self.csr_jumps.append((l_csr, sp.csr_array(l_dense.conj())))
        h_eff = h - 0.5j * fold
        self.h_eff = h_eff
        self.left = sp.csr_array(-1j * h_eff)
        self.right_t = sp.csr_array(1j * h_eff.conj())
        self.evals = 0

    def rhs(self, rho: np.ndarray) -> np.ndarray:
        """-i (H_eff rho - rho H_eff^dag) + sum_k L_k rho L_k^dag.

        Linear in rho (no hermiticity assumed), so it is safe both as
        an integrator right-hand side and as a Krylov matvec.
        """
        self.evals += 1
        out = self.left @ rho
        out += (self.right_t @ rho.T).T
        for wmat in self.diag_jumps:
            out += wmat * rho
        for dst_ix, src_ix, wmat in self.gather_jumps:
            sub = rho[src_ix]
            np.multiply(wmat, sub, out=sub)
            out[dst_ix] += sub
        for l_csr, l_conj in self.csr_jumps:
            out += (l_conj @ (l_csr @ rho).T).T
        return out


@dataclass
class Trajectory:
    """Sampled observables and the final state of one propagation."""

    times: np.ndarray
    pq: np.ndarray
    nc: np.ndarray
    ni: np.ndarray
    nr: np.ndarray
    ns: np.ndarray
    trace: np.ndarray
    purity: np.ndarray
    min_eig: np.ndarray
    final: DensityMatrix
    stats: dict = field(default_factory=dict)

    CSV_HEADER = "t,pq,nc,ni,nr,ns,trace,purity"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        cols = (self.times, self.pq, self.nc, self.ni, self.nr, self.ns,
                self.trace, self.purity)
        for row in zip(*cols):
            lines.append(",".join(format(v, ".17g") for v in row))
        return "\n".join(lines) + "\n"


class _Recorder:
    """Accumulates observables and enforces state invariants at samples."""

    def __init__(self, layout: SpaceLayout, n_samples: int, stride: int):
        self.layout = layout
        self.diags = {}
        for key, label in (("pq", QUBIT), ("nc", CAVITY), ("ni", MODE_I),
                           ("nr", MODE_R), ("ns", MODE_S)):
            self.diags[key] = (occupation_diagonal(layout, label)
                               if layout.has(label) else None)
        self.data = {k: np.zeros(n_samples) for k in
                     ("pq", "nc", "ni", "nr", "ns", "trace", "purity")}
        self.min_eig = np.full(n_samples, np.nan)
        self.stride = stride
        self.count = 0
        # floor shift for the Cholesky positivity certificate
        self.shift = (-POSITIVITY_TOL) * np.eye(layout.total_dim)

    def record(self, idx: int, t: float, rho: np.ndarray) -> None:
        diag = np.diagonal(rho)
        tr = complex(diag.sum())
        residue = abs(tr.imag)
        for key, vec in self.diags.items():
            if vec is None:
                value = 0.0
            else:
                expect = complex(vec.dot(diag))
                residue = max(residue, abs(expect.imag))
                value = expect.real
            self.data[key][idx] = value
        if residue > IMAG_RESIDUE_TOL:
            raise IntegrationError(
                f"imaginary residue {residue:.3e} in observables at t={t:.6e}")
        if abs(tr.real - 1.0) > TRACE_DRIFT_TOL:
            raise IntegrationError(
                f"trace drifted to {tr.real!r} at t={t:.6e} "
                f"(|1 - tr| = {abs(tr.real - 1):.3e} > {TRACE_DRIFT_TOL:.1e})")
        norm = np.linalg.norm(rho)
        defect = np.linalg.norm(rho - rho.conj().T) / max(norm, 1e-300)
        if defect > HERMITICITY_DRIFT_TOL:
            raise IntegrationError(
                f"hermiticity defect {defect:.3e} at t={t:.6e}")
        self.data["trace"][idx] = tr.real
        self.data["purity"][idx] = float(np.vdot(rho, rho).real)
        herm = (rho + rho.conj().T) / 2
        if self.stride and self.count % self.stride == 0:
            lo = float(np.linalg.eigvalsh(herm).min())
            self.min_eig[idx] = lo
            if lo < POSITIVITY_TOL:
                raise IntegrationError(
                    f"negative eigenvalue {lo:.3e} at t={t:.6e} "
                    f"(floor {POSITIVITY_TOL:.1e})")
        else:
            # success certifies min eig > POSITIVITY_TOL at a fraction of
            # the eigvalsh cost; only a genuine violation pays for the
            # exact spectrum
            try:
                np.linalg.cholesky(herm + self.shift)
            except np.linalg.LinAlgError:
                lo = float(np.linalg.eigvalsh(herm).min())
                self.min_eig[idx] = lo
                if lo < POSITIVITY_TOL:
                    raise IntegrationError(
                        f"negative eigenvalue {lo:.3e} at t={t:.6e} "
                        f"(floor {POSITIVITY_TOL:.1e})")
        self.count += 1


# Dormand-Prince 4(5) tableau (FSAL)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
          187 / 2100, 1 / 40)


class _RK45Stepper:
    def __init__(self, action: LindbladAction, rel_tol: float, abs_tol: float,
                 max_step: float | None):
        self.action = action
        self.rel_tol = rel_tol
        self.abs_tol = abs_tol
        self.max_step = max_step or math.inf
        self.h = None
        self.k1 = None

    def _initial_step(self, rho: np.ndarray, interval: float) -> float:
        f0 = self.action.rhs(rho)
        scale = self.abs_tol + self.rel_tol * np.abs(rho).max()
        d1 = np.abs(f0).max()
        h = 0.01 * scale / d1 if d1 > 0 else interval
        self.k1 = f0
        return min(h, interval, self.max_step)

    def advance(self, rho: np.ndarray, interval: float) -> np.ndarray:
        """Integrate over ``interval`` (one inter-sample span)."""
        remaining = interval
        if self.h is None:
            self.h = self._initial_step(rho, interval)
        if self.k1 is None:
            self.k1 = self.action.rhs(rho)
        while interval > 0 and remaining > 1e-18 * interval:
            h = min(self.h, remaining, self.max_step)
            if h < 1e-14 * interval:
                raise IntegrationError(
                    f"step size underflow (h = {h:.3e} s) - the problem is "
                    "stiffer than the tolerances allow")
            ks = [self.k1]
            for row in _DP_A[1:]:
                y = rho
                for a, k in zip(row, ks):
                    if a != 0.0:
                        y = y + (h * a) * k
                ks.append(self.action.rhs(y))
            y5 = rho
            for b, k in zip(_DP_B5, ks):
                if b != 0.0:
                    y5 = y5 + (h * b) * k
            err = np.zeros_like(rho)
            for b5, b4, k in zip(_DP_B5, _DP_B4, ks):
                if b5 != b4:
                    err = err + (h * (b5 - b4)) * k
            scale = self.abs_tol + self.rel_tol * np.maximum(np.abs(rho),
                                                             np.abs(y5))
            err_norm = float(np.abs(err / scale).max())
            if err_norm <= 1.0:
                rho = y5
                remaining -= h
                self.k1 = ks[6]     # FSAL: last stage is f at the new point
            else:
                self.k1 = ks[0]
            factor = 0.9 * (err_norm ** -0.2) if err_norm > 0 else 5.0
            self.h = h * min(5.0, max(0.2, factor))
        return rho


def _advance_rk4(action: LindbladAction, rho: np.ndarray, interval: float,
                 step: float) -> np.ndarray:
    n = max(1, int(math.ceil(interval / step - 1e-12)))
    h = interval / n
    for _ in range(n):
        k1 = action.rhs(rho)
        k2 = action.rhs(rho + (0.5 * h) * k1)
        k3 = action.rhs(rho + (0.5 * h) * k2)
        k4 = action.rhs(rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return rho


#: Arnoldi basis memory budget in bytes; the effective basis size is
#: min(krylov_dim, budget / state size) so huge models trade step size
#: for memory instead of failing.
KRYLOV_BASIS_BYTES = 1_500_000_000

_KRYLOV_MIN_TEST = 4         # first basis size at which convergence is tested
_KRYLOV_BREAKDOWN = 1e-12    # happy-breakdown threshold relative to column norm
_KRYLOV_SAFETY = 0.7


class _KrylovStepper:
    """Restarted Arnoldi approximation of exp(t L) rho over one segment.

    The state (a d x d matrix) is treated as a vector of length d^2
    with the Frobenius inner product; basis vectors stay in matrix form
    so the matvec is the ordinary Lindblad right-hand side.  Per chunk
    the basis grows until either Saad's residual estimate
    beta * dt * h_{m+1,m} * |[exp(dt H_m)]_{m,1}| meets the local error
    budget or the cap is reached, in which case dt shrinks on the
    already-built basis.  Chunks ignore the sample grid: the state at
    any time inside a chunk comes from the same basis with a different
    small-matrix exponential, so dense sampling costs no extra matvecs.
    Exact invariant subspaces (happy breakdown) finish the segment in
    one chunk.
    """

    def __init__(self, action: LindbladAction, rel_tol: float, abs_tol: float,
                 krylov_dim: int):
        self.action = action
        self.rel_tol = rel_tol
        self.abs_tol = abs_tol
        d = action.dim
        mem_cap = max(_KRYLOV_MIN_TEST, KRYLOV_BASIS_BYTES // (16 * d * d))
        self.m_cap = int(max(2, min(krylov_dim, mem_cap, d * d)))
        self.basis = np.empty((self.m_cap + 1, d, d), dtype=complex)
        self.h_prev: float | None = None
        self.grow = 1.5

    def _phase_entry(self, hess: np.ndarray, m: int, dt: float) -> float:
        w = scipy.linalg.expm(dt * hess[:m, :m])[:, 0]
        self._w_small = w
        return abs(w[m - 1])

    def _eval_at(self, beta: float, m: int, hess: np.ndarray, tau: float
                 ) -> np.ndarray:
        self._phase_entry(hess, m, tau)
        return beta * np.tensordot(self._w_small, self.basis[:m], axes=(0, 0))

    def advance(self, rho: np.ndarray, interval: float) -> np.ndarray:
        """Propagate over a plain interval with no intermediate output."""
        if interval <= 0:
            return rho
        return self.run_segment(rho, 0.0, [interval], [False],
                                lambda t, state, sampled: None)

    def run_segment(self, rho: np.ndarray, t_start: float,
                    targets: Sequence[float], is_sample: Sequence[bool],
                    emit) -> np.ndarray:
        """Propagate to each target time in order; return the final state.

        ``targets`` are absolute, strictly increasing, and end at the
        segment boundary; ``emit(t, state, sampled)`` is called for every
        target in order.
        """
        t_end = targets[-1]
        span = t_end - t_start
        v = rho
        if span <= 0:
            for tt, sampled in zip(targets, is_sample):
                emit(tt, v, sampled)
            return v
        t = t_start
        j = 0
        chunks = 0
        while j < len(targets):
            chunks += 1
            if chunks > 100_000:
                raise IntegrationError(
                    "krylov propagation exceeded 100000 restarts; "
                    "tolerances are too tight for this segment")
            beta = float(np.linalg.norm(v))
            if beta == 0.0:
                while j < len(targets):
                    emit(targets[j], v, is_sample[j])
                    j += 1
                return v
            budget = max(self.abs_tol, self.rel_tol * beta)
            hess = np.zeros((self.m_cap + 1, self.m_cap), dtype=complex)
            self.basis[0] = v / beta
            remaining = t_end - t
            dt = remaining if self.h_prev is None else min(
                remaining, self.grow * self.h_prev)
            m_used = 0
            happy = False
            converged = False
            d = self.action.dim
            for k in range(self.m_cap):
                w_flat = self.action.rhs(self.basis[k]).reshape(-1)
                flat_t = self.basis[:k + 1].reshape(k + 1, -1).T
                norm0 = float(np.linalg.norm(w_flat))
                # modified-free classical GS via BLAS: coef = V^H w, then
                # w -= V coef in place; one extra pass only on cancellation
                coef = blas.zgemv(1.0, flat_t, w_flat, trans=2)
                w_flat = blas.zgemv(-1.0, flat_t, coef, beta=1.0, y=w_flat,
                                    overwrite_y=1, trans=0)
                hn = float(np.linalg.norm(w_flat))
                if hn < 0.7071 * norm0:
                    coef2 = blas.zgemv(1.0, flat_t, w_flat, trans=2)
                    coef += coef2
                    w_flat = blas.zgemv(-1.0, flat_t, coef2, beta=1.0,
                                        y=w_flat, overwrite_y=1, trans=0)
                    hn = float(np.linalg.norm(w_flat))
                hess[:k + 1, k] = coef
                hess[k + 1, k] = hn
                col_scale = float(np.linalg.norm(hess[:k + 2, k]))
                m_used = k + 1
                if hn <= _KRYLOV_BREAKDOWN * max(col_scale, 1e-300):
                    happy = True
                    dt = remaining
                    break
                self.basis[k + 1] = (w_flat / hn).reshape(d, d)
                if m_used >= _KRYLOV_MIN_TEST:
                    err = beta * dt * hn * self._phase_entry(hess, m_used, dt)
                    if err <= _KRYLOV_SAFETY * budget * (dt / span):
                        converged = True
                        break
            if not (happy or converged):
                # basis is dt-independent: shrink dt on the built basis
                hn = abs(hess[m_used, m_used - 1])
                for _ in range(200):
                    err = beta * dt * hn * self._phase_entry(hess, m_used, dt)
                    if err <= _KRYLOV_SAFETY * budget * (dt / span):
                        break
                    shrink = (_KRYLOV_SAFETY * budget * (dt / span)
                              / err) ** (1.0 / m_used)
                    dt *= min(0.9, max(0.1, 0.8 * shrink))
                    if dt < 1e-12 * span:
                        raise IntegrationError(
                            "krylov step underflow; the segment generator "
                            "is too stiff for the configured krylov_dim")
                else:
                    raise IntegrationError(
                        "krylov step selection failed to converge")
            # grow the trial step only when the cap clearly was not the
            # limit, else repeated cap hits waste a restart per chunk
            self.grow = 1.5 if m_used <= 0.75 * self.m_cap else 1.0
            self.h_prev = dt
            eps = 1e-12 * span
            new_t = t + dt
            state = None
            while j < len(targets) and targets[j] <= new_t + eps:
                state = self._eval_at(beta, m_used, hess, targets[j] - t)
                emit(targets[j], state, is_sample[j])
                j += 1
            if j >= len(targets):
                return state if state is not None else v
            if state is not None and abs(targets[j - 1] - new_t) <= eps:
                v = state
            else:
                v = self._eval_at(beta, m_used, hess, dt)
            t = new_t
        return v


def _sample_grid(config: IntegratorConfig, duration: float) -> np.ndarray:
    if isinstance(config.samples, int):
        return np.linspace(0.0, duration, config.samples)
    grid = np.asarray(config.samples, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise IntegrationError("sample grid must be a non-empty 1-d sequence")
    if np.any(np.diff(grid) <= 0):
        raise IntegrationError("sample grid must be strictly increasing")
    if grid[0] < 0 or grid[-1] > duration * (1 + 1e-12):
        raise IntegrationError(
            f"sample grid [{grid[0]}, {grid[-1]}] outside the schedule "
            f"span [0, {duration}]")
    return grid


def propagate(rho0: DensityMatrix, schedule: PulseSchedule, model: TransferModel,
              config: IntegratorConfig = IntegratorConfig()) -> Trajectory:
    """Evolve rho0 under the model's Lindblad generator along the schedule.

    Observables are sampled on the config grid from the exactly
    propagated state.  Trace, hermiticity and (strided) positivity are
    enforced at each sample; violations abort with diagnostics.
    """
    layout = model.layout
    if rho0.layout != layout:
        raise LayoutError("initial state layout differs from the model layout")
    try:
        rho0.validate()
    except StateError as exc:
        raise IntegrationError(f"invalid initial state: {exc}") from exc
    duration = schedule.duration
    grid = _sample_grid(config, duration)
    rec = _Recorder(layout, grid.size, config.positivity_stride)
    rho = rho0.matrix.copy()
    stats: dict = {"method": config.method, "segment_evals": []}

    idx = 0
    if grid[0] == 0.0:
        rec.record(0, 0.0, rho)
        idx = 1

    if config.method == "rk4" and config.max_step is None:
        raise IntegrationError("rk4 is fixed-step: set max_step")

    for seg in schedule.segments:
        action = LindbladAction(model.hamiltonian(seg.controls), model.collapse)
        t = seg.t_start
        targets = [float(g) for g in grid[(grid > t) & (grid <= seg.t_end)]]
        is_sample = [True] * len(targets)
        if not targets or targets[-1] < seg.t_end:
            targets.append(seg.t_end)
            is_sample.append(False)
        if config.method == "krylov":
            stepper = _KrylovStepper(action, config.rel_tol, config.abs_tol,
                                     config.krylov_dim)

            def emit(tt, state, sampled):
                nonlocal idx
                if sampled:
                    rec.record(idx, tt, state)
                    idx += 1

            rho = stepper.run_segment(rho, t, targets, is_sample, emit)
        else:
            stepper = (_RK45Stepper(action, config.rel_tol, config.abs_tol,
                                    config.max_step)
                       if config.method == "rk45" else None)
            for target, sampled in zip(targets, is_sample):
                dt = target - t
                if dt > 0:
                    if stepper is not None:
                        rho = stepper.advance(rho, dt)
                    else:
                        rho = _advance_rk4(action, rho, dt, config.max_step)
                t = target
                if sampled:
                    rec.record(idx, t, rho)
                    idx += 1
        stats["segment_evals"].append(action.evals)

    stats["rhs_evals"] = int(sum(stats["segment_evals"]))
    final = DensityMatrix(rho, layout)
    try:
        # propagated states carry integration error, so check them at the
        # trajectory tolerances, not the construction tolerances
        final.validate(herm_tol=HERMITICITY_DRIFT_TOL,
                       trace_tol=TRACE_DRIFT_TOL, eig_floor=POSITIVITY_TOL)
    except StateError as exc:
        raise IntegrationError(f"final state invalid: {exc}") from exc
    lo = float(np.linalg.eigvalsh((rho + rho.conj().T) / 2).min())
    if grid[-1] == duration:
        rec.min_eig[-1] = lo
    d = rec.data
    return Trajectory(grid, d["pq"], d["nc"], d["ni"], d["nr"], d["ns"],
                      d["trace"], d["purity"], rec.min_eig, final, stats)


def liouvillian_matrix(hamiltonian, collapse=()) -> np.ndarray:
    """Dense vectorized Liouvillian in the column-stacking convention.

    vec(A X B) = (B^T kron A) vec(X) with Fortran-order vec.
    """
    h = _as_matrix(hamiltonian)
    d = h.shape[0]
    eye = np.eye(d)
    sup = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for op in collapse:
        l_mat = _as_matrix(op)
        if l_mat.shape != h.shape:
            raise DimensionError(
                f"collapse operator shape {l_mat.shape} mismatches "
                f"Hamiltonian {h.shape}")
        ldl = l_mat.conj().T @ l_mat
        sup += (np.kron(l_mat.conj(), l_mat)
                - 0.5 * np.kron(eye, ldl) - 0.5 * np.kron(ldl.T, eye))
    return sup


def expm_oracle(rho0: DensityMatrix, hamiltonian, collapse, t: float
                ) -> DensityMatrix:
    """Exact propagation by exponentiating the dense Liouvillian.

    Only for small systems (total_dim^2 <= 4096); cross-validates the
    matrix-free integrators on static segments.
    """
    d = rho0.matrix.shape[0]
    if d * d > 4096:
        raise DimensionError(
            f"dense Liouvillian would be {d * d} x {d * d}; expm_oracle "
            "requires total_dim^2 <= 4096")
    sup = liouvillian_matrix(hamiltonian, collapse)
    vec = rho0.matrix.ravel(order="F")
    out = scipy.linalg.expm(t * sup) @ vec
    return DensityMatrix(out.reshape(d, d, order="F"), rho0.layout)
