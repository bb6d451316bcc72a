"""Classical fourth-order Runge-Kutta integration of the semi-discrete system."""

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_CFL = 0.2
ENERGY_BLOWUP = 1e6


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    dt: object = "auto"
    t_final: float = 1.0
    cfl_coefficient: float = DEFAULT_CFL
    record_every: int = 1

    def __post_init__(self):
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if self.dt != "auto" and not float(self.dt) > 0:
            raise ValueError("dt must be positive or 'auto'")
        if not self.cfl_coefficient > 0:
            raise ValueError("cfl coefficient must be positive")


def auto_dt(h, r, cfl=DEFAULT_CFL):
    """Stable step for RK4: the spectral radius of the DG operator grows like (2r+1)/h."""
    return cfl * h / (2 * r + 1)


def resolve_dt(config: IntegratorConfig, h, r):
    return auto_dt(h, r, config.cfl_coefficient) if config.dt == "auto" else float(config.dt)


def rk4_increment(system, state, t, dt):
    """x(t + dt) - x(t) for one RK4 step, without forming x(t + dt)."""
    x = np.asarray(state, dtype=float)
    k1 = system(t, x)
    k2 = system(t + 0.5 * dt, x + (0.5 * dt) * k1)
    k3 = system(t + 0.5 * dt, x + (0.5 * dt) * k2)
    k4 = system(t + dt, x + dt * k3)
    return (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def rk4_step(system, state, t, dt):
    """One classical RK4 step of x' = f(t, x); ``system`` is any callable f(t, x)."""
    x = np.asarray(state, dtype=float)
    out = x + rk4_increment(system, x, t, dt)
    if not np.all(np.isfinite(out)):
        raise IntegrationError(f"non-finite state after step from t={t:.6g} with dt={dt:.3g}")
    return out


def fd_energy_rate(system, state, t, delta=1e-6):
    """Central difference of E_h along the flow over [t - delta, t + delta].

    E(x + a) - E(x + b) = (a - b)^T M (2x + a + b) is used so that the
    increments never cancel against the (much larger) state.
    """
    x = np.asarray(state, dtype=float)
    a = rk4_increment(system, x, t, delta)
    b = rk4_increment(system, x, t, -delta)
    w = 2.0 * x + a + b
    d = a - b
    nv = system.n_v
    dv, ds = d[:nv], d[nv:]
    diff = dv @ system.M_p.matvec(w[:nv]).ravel() + ds @ system.M_q.matvec(w[nv:]).ravel()
    return float(diff) / (2.0 * delta)


def step_schedule(t0, t_final, dt):
    """Step sizes from t0 to t_final; the last one is shortened to land exactly."""
    span = t_final - t0
    nfull = int(np.floor(span / dt * (1 + 1e-12)))
    steps = [dt] * nfull
    rest = span - nfull * dt
    if rest > 1e-12 * max(dt, span):
        steps.append(rest)
    elif not steps:
        steps = [span]
    return steps


def integrate(system, initial_state, config: IntegratorConfig, t0=0.0, energy=None,
              boundary_power=None, homogeneous=None, callback=None):
    """Integrate from t0 to config.t_final.

    ``system`` is a SemiDiscreteSystem (energy and boundary power are then
    recorded automatically) or a bare callable f(t, x).  Returns
    (final state, records) with records an array of rows (t, E_h, boundary power).
    """
    from . import assembly

    is_sys = isinstance(system, assembly.SemiDiscreteSystem)
    if is_sys:
        energy = energy or (lambda x: assembly.discrete_energy(system, x))
        if boundary_power is None:
            boundary_power = lambda x, t: 2.0 * assembly.boundary_pairing(system, x, t)
        if homogeneous is None:
            data = system.boundary.data
            homogeneous = system.bc_mode == "trace" or getattr(data, "homogeneous", False)
        h, r = system.mesh.h, system.E_p.poly_degree
        dt = resolve_dt(config, h, r)
    else:
        if config.dt == "auto":
            raise ValueError("automatic dt needs an assembled system")
        dt = float(config.dt)

    x = np.array(initial_state, dtype=float)
    t = float(t0)
    records = []

    def record(x, t):
        e = energy(x) if energy else np.nan
        bp = boundary_power(x, t) if boundary_power else np.nan
        records.append((t, e, bp))
        return e

    e0 = record(x, t)
    steps = step_schedule(t, config.t_final, dt)
    log.debug("integrating %d steps of dt=%.4g to t=%.4g", len(steps), dt, config.t_final)
    for i, h_step in enumerate(steps):
        x = rk4_step(system, x, t, h_step)
        t = config.t_final if i == len(steps) - 1 else t + h_step
        last = i == len(steps) - 1
        if last or (i + 1) % config.record_every == 0:
            e = record(x, t)
            if homogeneous and energy and e > ENERGY_BLOWUP * max(e0, 1e-300):
                raise IntegrationError(
                    f"energy grew from {e0:.3e} to {e:.3e} by t={t:.4g}; dt={dt:.3g} is unstable"
                )
        if callback is not None:
            callback(i, t, x)
    return x, np.array(records)
