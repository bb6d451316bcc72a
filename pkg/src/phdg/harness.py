"""Manufactured-solution runs, error norms and convergence sweeps.

Exact standing wave on [-1, 1]^2 with unit density and stiffness:

    u     = sin(2 pi t) (sin 2 pi x + sin 2 pi y) / (2 pi)
    V     = u_t = cos(2 pi t) (sin 2 pi x + sin 2 pi y)
    grad u = sin(2 pi t) (cos 2 pi x, cos 2 pi y)

The stress unknown is the 1-form *du = -u_y dx + u_x dy, i.e. grad u rotated
by a quarter turn, so that d(sigma) = laplacian(u) dx^dy.  It has the same
pointwise magnitude as grad u.
"""

import csv
import logging
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import assembly
from .assembly import BoundaryData, assemble_system
from .mesh import build_structured_mesh
from .quadrature import triangle_rule
from .spaces import FieldCoeffs, project_field
from .timeint import IntegratorConfig, integrate, resolve_dt

log = logging.getLogger(__name__)
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ExactValues:
    u: float
    V: float
    sigma: tuple  # components of grad u, the stress vector field


def exact_solution(t, point):
    x, y = float(point[0]), float(point[1])
    sx, sy = np.sin(TWO_PI * x), np.sin(TWO_PI * y)
    st, ct = np.sin(TWO_PI * t), np.cos(TWO_PI * t)
    return ExactValues(
        u=st * (sx + sy) / TWO_PI,
        V=ct * (sx + sy),
        sigma=(st * np.cos(TWO_PI * x), st * np.cos(TWO_PI * y)),
    )


def stress_vector_to_form(components):
    """Rotate a stress vector field (a, b) into the 1-form -b dx + a dy."""
    c = np.asarray(components, dtype=float)
    return np.stack([-c[..., 1], c[..., 0]], axis=-1)


def exact_velocity(t, x, y):
    return np.cos(TWO_PI * t) * (np.sin(TWO_PI * x) + np.sin(TWO_PI * y))


def exact_stress_form(t, x, y):
    st = np.sin(TWO_PI * t)
    return np.stack([-st * np.cos(TWO_PI * y), st * np.cos(TWO_PI * x)], axis=-1)


def exact_velocity_dt(t, x, y):
    return -TWO_PI * np.sin(TWO_PI * t) * (np.sin(TWO_PI * x) + np.sin(TWO_PI * y))


def exact_stress_form_dt(t, x, y):
    ct = np.cos(TWO_PI * t)
    return TWO_PI * np.stack([-ct * np.cos(TWO_PI * y), ct * np.cos(TWO_PI * x)], axis=-1)


def exact_boundary_data():
    return BoundaryData(exact_velocity, exact_stress_form)


def project_exact(system, t):
    v = project_field(system.E_p, exact_velocity, t).values
    s = project_field(system.E_q, exact_stress_form, t).values
    return np.concatenate([v, s])


@dataclass
class ErrorReport:
    l2_velocity: float
    l2_stress: float
    linf_velocity: float
    linf_stress: float
    order_l2_velocity: float = float("nan")
    order_l2_stress: float = float("nan")


def compute_errors(state, t, spaces, chunk=4096) -> ErrorReport:
    """L2 and nodal max errors against the exact solution at time t.

    ``state`` is a flat (v, s) vector or a pair of FieldCoeffs; ``spaces`` is
    the (E_p, E_q) pair.
    """
    E_p, E_q = spaces
    if isinstance(state, tuple):
        v, s = (c.values if isinstance(c, FieldCoeffs) else c for c in state)
    else:
        x = np.asarray(state)
        v, s = x[:E_p.total_dofs], x[E_p.total_dofs:]
    mesh = E_p.mesh
    rule = triangle_rule(min(2 * E_q.poly_degree + 4, 20))
    l2v = l2s = 0.0
    infv = infs = 0.0
    npv, npq = E_p.dofs_per_element, E_q.dofs_per_element
    for start in range(0, mesh.n_elements, chunk):
        stop = min(start + chunk, mesh.n_elements)
        sub = slice(start, stop)
        X = mesh.map_points(rule.points, sub)
        ev = _eval_block(E_p, v[start * npv:stop * npv], rule.points, sub) \
            - exact_velocity(t, X[..., 0], X[..., 1])
        es = _eval_block(E_q, s[start * npq:stop * npq], rule.points, sub) \
            - exact_stress_form(t, X[..., 0], X[..., 1])
        es2 = np.sum(es ** 2, axis=-1)
        wd = mesh.dets[sub, None] * rule.weights
        l2v += float(np.sum(wd * ev ** 2))
        l2s += float(np.sum(wd * es2))
        infv = max(infv, float(np.abs(ev).max()))
        infs = max(infs, float(np.sqrt(es2.max())))
    return ErrorReport(float(np.sqrt(l2v)), float(np.sqrt(l2s)), infv, infs)


def _eval_block(space, values, ref_points, sub):
    from .spaces import orthonormal_scalar_basis, tabulate_scalar
    phi, _ = tabulate_scalar(orthonormal_scalar_basis(space.poly_degree), ref_points)
    c = values.reshape(-1, space.dofs_per_element)
    if space.form_rank == 0:
        return c @ phi
    ns = space.n_scalar
    ref = np.stack([c[:, :ns] @ phi, c[:, ns:] @ phi], axis=-1)
    Binv = np.linalg.inv(space.mesh.jacobians[sub])
    return np.einsum("kji,kpj->kpi", Binv, ref)


@dataclass(frozen=True)
class CaseSpec:
    r: int
    theta: float
    n: int
    t_final: float = 1.0
    dt: object = "auto"
    bc_mode: str = "data"
    cfl: float = 0.2

    def __post_init__(self):
        if self.r not in (0, 1, 2, 3, 4):
            raise ValueError(f"unsupported polynomial order {self.r}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if self.n < 1:
            raise ValueError("need at least one cell per axis")
        if self.bc_mode not in assembly.BC_MODES:
            raise ValueError(f"unknown boundary mode {self.bc_mode!r}")


@dataclass
class CaseResult:
    spec: CaseSpec
    errors: ErrorReport
    energy_trace: np.ndarray
    dt: float
    steps: int
    seconds: float
    state: np.ndarray = field(repr=False, default=None)


def run_case(spec: CaseSpec, keep_state=False) -> CaseResult:
    t0 = time.perf_counter()
    mesh = build_structured_mesh(spec.n)
    system = assemble_system(mesh, spec.r, spec.theta, spec.bc_mode, exact_boundary_data())
    x0 = project_exact(system, 0.0)
    config = IntegratorConfig(spec.dt, spec.t_final, spec.cfl,
                              record_every=max(1, spec.n // 8))
    x, trace = integrate(system, x0, config)
    errors = compute_errors(x, spec.t_final, (system.E_p, system.E_q))
    dt = resolve_dt(config, mesh.h, spec.r)
    elapsed = time.perf_counter() - t0
    log.info("r=%d theta=%.4g n=%d: L2(V)=%.4e L2(sigma)=%.4e in %.1fs",
             spec.r, spec.theta, spec.n, errors.l2_velocity, errors.l2_stress, elapsed)
    return CaseResult(spec, errors, trace, dt, int(np.ceil(spec.t_final / dt - 1e-9)), elapsed,
                      x if keep_state else None)


def observed_order(e_coarse, e_fine, ratio=2.0):
    if e_coarse <= 0 or e_fine <= 0:
        return float("nan")
    return float(np.log(e_coarse / e_fine) / np.log(ratio))


def fill_orders(results):
    """Orders between consecutive levels of one (r, theta) series, in place."""
    results = sorted(results, key=lambda c: c.spec.n)
    for coarse, fine in zip(results, results[1:]):
        ratio = fine.spec.n / coarse.spec.n
        fine.errors.order_l2_velocity = observed_order(
            coarse.errors.l2_velocity, fine.errors.l2_velocity, ratio)
        fine.errors.order_l2_stress = observed_order(
            coarse.errors.l2_stress, fine.errors.l2_stress, ratio)
    return results


CSV_COLUMNS = ("theta", "h", "l2_V", "order_V", "l2_sigma", "order_sigma", "linf_V", "linf_sigma")


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else f"{v:.10e}"


def convergence_rows(results):
    rows = []
    for c in sorted(results, key=lambda c: (c.spec.theta, c.spec.n)):
        e = c.errors
        rows.append({
            "theta": f"{c.spec.theta:.6g}", "h": _fmt(2.0 / c.spec.n),
            "l2_V": _fmt(e.l2_velocity), "order_V": _fmt(e.order_l2_velocity),
            "l2_sigma": _fmt(e.l2_stress), "order_sigma": _fmt(e.order_l2_stress),
            "linf_V": _fmt(e.linf_velocity), "linf_sigma": _fmt(e.linf_stress),
        })
    return rows


def write_csv(path, rows, columns=CSV_COLUMNS):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def write_energy_csv(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "E_h", "boundary_power"])
        for t, e, p in trace:
            w.writerow([f"{t:.12e}", f"{e:.16e}", f"{p:.16e}"])


def plot_convergence(path, results, r):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "phdg"
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), sharex=True)
    by_theta = {}
    for c in results:
        by_theta.setdefault(c.spec.theta, []).append(c)
    for ax, key, label in ((axes[0], "l2_velocity", "velocity"), (axes[1], "l2_stress", "stress")):
        hs_all = []
        for theta in sorted(by_theta):
            cs = sorted(by_theta[theta], key=lambda c: c.spec.n)
            hs = np.array([2.0 / c.spec.n for c in cs])
            es = np.array([getattr(c.errors, key) for c in cs])
            ax.loglog(hs, es, "o-", label=f"theta={theta:.3g}")
            hs_all.append((hs, es))
        hs, es = hs_all[0]
        ref = es[-1] * (hs / hs[-1]) ** (r + 1)
        ax.loglog(hs, ref, "k--", lw=1, label=f"slope {r + 1}")
        ax.set_xlabel("h")
        ax.set_ylabel(f"L2 error ({label})")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
    fig.suptitle(f"r = {r}")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def run_convergence(r_values, thetas, levels, out_dir=None, t_final=1.0, dt="auto", cfl=0.2,
                    bc_mode="data"):
    """Run every (r, theta, n) case; writes CSV and SVG per r when out_dir is given.

    Returns {r: list of CaseResult with orders filled in}.
    """
    levels = sorted(set(int(n) for n in levels))
    out = {}
    for r in r_values:
        results = []
        for theta in thetas:
            series = [run_case(CaseSpec(r, float(theta), n, t_final, dt, bc_mode, cfl))
                      for n in levels]
            results.extend(fill_orders(series))
        out[r] = results
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            write_csv(os.path.join(out_dir, f"convergence_r{r}.csv"), convergence_rows(results))
            if len(levels) >= 2:
                plot_convergence(os.path.join(out_dir, f"convergence_r{r}.svg"), results, r)
    return out


def case_summary(result: CaseResult):
    d = asdict(result.errors)
    d.update(asdict(result.spec))
    d.update(dt=result.dt, steps=result.steps, seconds=round(result.seconds, 3))
    return d
