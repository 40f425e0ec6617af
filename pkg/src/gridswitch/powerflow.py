"""AC power flow for a switched topology: admittance assembly, connectivity,
Newton-Raphson in polar coordinates, and branch flows/losses.

Dispatch is fixed at the case set-points; the slack bus absorbs the residual.
Generator reactive limits are not enforced.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from .case import BusKind, GridCase
from .errors import DimensionMismatch, IslandedInput

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 20
# grids up to this many buses are solved with dense linear algebra
DENSE_LIMIT = 300


def as_status(case: GridCase, status=None) -> np.ndarray:
    """Normalize a line-status vector to a boolean array of length N_L."""
    if status is None:
        return case.arrays.status_init.astype(bool)
    status = np.asarray(status)
    if status.shape != (case.n_branch,):
        raise DimensionMismatch(f"status has shape {status.shape}, expected ({case.n_branch},)")
    return status.astype(bool)


@dataclass(frozen=True)
class AdmittanceModel:
    y_bus: sp.csr_matrix
    y_ff: np.ndarray  # per-branch pi-model quadruple, zero for open lines
    y_ft: np.ndarray
    y_tf: np.ndarray
    y_tt: np.ndarray


def _branch_admittances(case: GridCase, on: np.ndarray):
    a = case.arrays
    ys = np.zeros(case.n_branch, dtype=complex)
    ys[on] = 1.0 / (a.r[on] + 1j * a.x[on])
    y_tt = ys + 0.5j * np.where(on, a.b_charging, 0.0)
    y_ff = y_tt / (a.tap * np.conj(a.tap))
    y_ft = -ys / np.conj(a.tap)
    y_tf = -ys / a.tap
    return y_ff, y_ft, y_tf, y_tt


def _stamps(case: GridCase, quads):
    a = case.arrays
    f, t = a.f_bus, a.t_bus
    diag = np.arange(case.n_bus)
    y_sh = (a.g_shunt + 1j * a.b_shunt) / case.base_mva
    rows = np.r_[f, f, t, t, diag]
    cols = np.r_[f, t, f, t, diag]
    return rows, cols, np.r_[(*quads, y_sh)]


def build_admittance(case: GridCase, status=None) -> AdmittanceModel:
    """Assemble the bus admittance matrix (per unit) with open lines left out."""
    quads = _branch_admittances(case, as_status(case, status))
    rows, cols, vals = _stamps(case, quads)
    y_bus = sp.csr_matrix((vals, (rows, cols)), shape=(case.n_bus, case.n_bus))
    y_bus.eliminate_zeros()
    return AdmittanceModel(y_bus, *quads)


def _dense_ybus(case: GridCase, quads) -> np.ndarray:
    rows, cols, vals = _stamps(case, quads)
    y = np.zeros((case.n_bus, case.n_bus), dtype=complex)
    np.add.at(y, (rows, cols), vals)
    return y


@dataclass(frozen=True)
class Connectivity:
    connected: bool
    component_of: np.ndarray  # component label per bus position
    energized: np.ndarray  # bool mask: bus shares the slack bus's component


def check_connectivity(case: GridCase, status=None) -> Connectivity:
    """Whether every bus with load or in-service generation reaches the slack bus."""
    a = case.arrays
    on = as_status(case, status)
    nb = case.n_bus
    adj = sp.csr_matrix(
        (np.ones(int(on.sum())), (a.f_bus[on], a.t_bus[on])), shape=(nb, nb)
    )
    _, labels = connected_components(adj, directed=False)
    energized = labels == labels[case.slack_position]
    needs = (a.p_load != 0) | (a.q_load != 0)
    needs[a.gen_bus[a.gen_on]] = True
    return Connectivity(bool(np.all(energized[needs])), labels, energized)


@dataclass(frozen=True)
class PowerFlowSolution:
    v_mag: np.ndarray  # pu; 0 on de-energized buses
    v_ang: np.ndarray  # radians
    p_gen: np.ndarray  # MW per generator, slack share included; 0 when out of service
    s_from: np.ndarray  # complex MVA per branch
    s_to: np.ndarray
    p_loss_per_line: np.ndarray  # MW
    total_loss: float  # MW
    converged: bool
    iterations: int
    max_mismatch: float  # pu, infinity norm
    energized: np.ndarray

    @property
    def voltage(self) -> np.ndarray:
        return self.v_mag * np.exp(1j * self.v_ang)


def _bus_types(case: GridCase, energized: np.ndarray):
    a = case.arrays
    has_gen = np.zeros(case.n_bus, dtype=bool)
    has_gen[a.gen_bus[a.gen_on]] = True
    ref = case.slack_position
    pv = np.flatnonzero(energized & (a.bus_kind == BusKind.PV) & has_gen)
    pq = np.flatnonzero(energized & ~np.isin(np.arange(case.n_bus), pv))
    pq = pq[pq != ref]
    return ref, pv, pq


def _mismatch(y_bus, v, s_bus, pvpq, pq):
    mis = v * np.conj(y_bus @ v) - s_bus
    return np.r_[mis[pvpq].real, mis[pq].imag]


def _jacobian_dense(y_bus, v, pvpq, pq):
    i_bus = y_bus @ v
    vn = v / np.abs(v)
    ds_dva = 1j * (np.diag(v * np.conj(i_bus)) - v[:, None] * np.conj(y_bus * v[None, :]))
    ds_dvm = v[:, None] * np.conj(y_bus * vn[None, :]) + np.diag(np.conj(i_bus) * vn)
    return np.block([
        [ds_dva[np.ix_(pvpq, pvpq)].real, ds_dvm[np.ix_(pvpq, pq)].real],
        [ds_dva[np.ix_(pq, pvpq)].imag, ds_dvm[np.ix_(pq, pq)].imag],
    ])


def _jacobian_sparse(y_bus, v, pvpq, pq):
    i_bus = y_bus @ v
    diag_v = sp.diags(v)
    diag_i = sp.diags(i_bus)
    diag_vn = sp.diags(v / np.abs(v))
    ds_dva = 1j * diag_v @ np.conj(diag_i - y_bus @ diag_v)
    ds_dvm = diag_v @ np.conj(y_bus @ diag_vn) + np.conj(diag_i) @ diag_vn
    ds_dva = ds_dva.tocsr()
    ds_dvm = ds_dvm.tocsr()
    j11 = ds_dva[pvpq][:, pvpq].real
    j12 = ds_dvm[pvpq][:, pq].real
    j21 = ds_dva[pq][:, pvpq].imag
    j22 = ds_dvm[pq][:, pq].imag
    return sp.bmat([[j11, j12], [j21, j22]], format="csc")


def solve_newton_raphson(
    case: GridCase, status=None, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> PowerFlowSolution:
    """Solve the AC power-balance equations by full Newton-Raphson.

    Starts from the case-file voltages (PV and slack magnitudes pinned at the
    generator set-points).  A singular Jacobian, a non-finite iterate or
    running out of iterations all return ``converged=False``.

    Raises
    ------
    IslandedInput
        If a bus with load or in-service generation is cut off from the slack.
    """
    on = as_status(case, status)
    conn = check_connectivity(case, on)
    if not conn.connected:
        raise IslandedInput("buses with load or generation are disconnected from the slack bus")
    energized = conn.energized
    a = case.arrays
    quads = _branch_admittances(case, on)
    ref, pv, pq = _bus_types(case, energized)
    pvpq = np.r_[pv, pq]
    npv, npq = len(pv), len(pq)

    live = a.gen_on
    s_gen = np.zeros(case.n_bus, dtype=complex)
    np.add.at(s_gen, a.gen_bus[live], a.gen_p[live] + 1j * a.gen_q[live])
    s_bus = (s_gen - (a.p_load + 1j * a.q_load)) / case.base_mva

    v_mag = a.v_mag_init.copy()
    v_ang = a.v_ang_init.copy()
    # first in-service generator at each bus sets its voltage
    for g in np.flatnonzero(live)[::-1]:
        v_mag[a.gen_bus[g]] = a.gen_v[g]
    v_mag[~energized] = 0.0
    v_ang[~energized] = 0.0
    v = v_mag * np.exp(1j * v_ang)

    dense = case.n_bus <= DENSE_LIMIT
    y_bus = _dense_ybus(case, quads) if dense else build_admittance(case, on).y_bus
    f = _mismatch(y_bus, v, s_bus, pvpq, pq)
    norm = float(np.max(np.abs(f))) if f.size else 0.0
    converged = norm < tol
    iterations = 0
    while not converged and iterations < max_iter:
        iterations += 1
        with warnings.catch_warnings(), np.errstate(all="ignore"):
            warnings.simplefilter("error", MatrixRankWarning)
            try:
                if dense:
                    dx = -np.linalg.solve(_jacobian_dense(y_bus, v, pvpq, pq), f)
                else:
                    dx = -spsolve(_jacobian_sparse(y_bus, v, pvpq, pq), f)
            except (MatrixRankWarning, RuntimeError, np.linalg.LinAlgError):
                log.debug("singular Jacobian at iteration %d", iterations)
                break
        if not np.all(np.isfinite(dx)):
            break
        v_ang[pvpq] += dx[: npv + npq]
        v_mag[pq] += dx[npv + npq:]
        v = v_mag * np.exp(1j * v_ang)
        f = _mismatch(y_bus, v, s_bus, pvpq, pq)
        norm = float(np.max(np.abs(f))) if f.size else 0.0
        if not np.isfinite(norm):
            break
        converged = norm < tol

    # slack bus output from the solved injection, shared among its units by p_max
    p_gen = np.where(live, a.gen_p, 0.0)
    s_ref = v[ref] * np.conj(np.ravel(y_bus[ref] @ v)[0])
    p_ref_total = float(np.real(s_ref)) * case.base_mva + a.p_load[ref]
    at_ref = np.flatnonzero(live & (a.gen_bus == ref))
    weights = a.gen_p_max[at_ref]
    weights = weights / weights.sum() if weights.sum() > 0 else np.full(len(at_ref), 1 / len(at_ref))
    p_gen[at_ref] = p_ref_total * weights

    s_from, s_to, p_loss, total = compute_branch_quantities(case, on, v, quads)
    return PowerFlowSolution(
        v_mag=np.abs(v), v_ang=np.where(energized, np.angle(v), 0.0), p_gen=p_gen,
        s_from=s_from, s_to=s_to, p_loss_per_line=p_loss, total_loss=total,
        converged=bool(converged), iterations=iterations, max_mismatch=norm,
        energized=energized,
    )


def compute_branch_quantities(case: GridCase, status, voltage, quads=None):
    """Complex end flows (MVA), per-line active losses (MW) and their total."""
    on = as_status(case, status)
    if quads is None:
        quads = _branch_admittances(case, on)
    y_ff, y_ft, y_tf, y_tt = quads
    a = case.arrays
    voltage = np.asarray(voltage, dtype=complex)
    v_f, v_t = voltage[a.f_bus], voltage[a.t_bus]
    s_from = v_f * np.conj(y_ff * v_f + y_ft * v_t) * case.base_mva
    s_to = v_t * np.conj(y_tf * v_f + y_tt * v_t) * case.base_mva
    s_from[~on] = 0.0
    s_to[~on] = 0.0
    p_loss = s_from.real + s_to.real
    return s_from, s_to, p_loss, float(p_loss.sum())
