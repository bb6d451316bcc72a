"""Command line entry point: ``phdg solve``, ``phdg convergence``, ``phdg verify-dirac``."""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import assembly, dirac, harness
from .mesh import write_vtk

log = logging.getLogger("phdg")


def read_config(path):
    """Plain ``key = value`` lines; ``#`` starts a comment.  Keys use dashes or underscores."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value, got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _float_list(s):
    return [float(eval_fraction(v)) for v in str(s).replace(",", " ").split()]


def _int_list(s):
    return [int(v) for v in str(s).replace(",", " ").split()]


def eval_fraction(text):
    """Parse '0.5' or '1/3'."""
    text = str(text).strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _dt(s):
    return "auto" if str(s).strip().lower() == "auto" else float(s)


def build_parser():
    p = argparse.ArgumentParser(prog="phdg", description="Port-Hamiltonian DG solver for the 2D wave equation.")
    p.add_argument("--config", help="key = value file with defaults for the chosen command")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run a single case")
    s.add_argument("--r", type=int)
    s.add_argument("--theta", type=eval_fraction)
    s.add_argument("--n", type=int)
    s.add_argument("--t-final", type=float)
    s.add_argument("--dt", type=_dt)
    s.add_argument("--cfl", type=float)
    s.add_argument("--bc", choices=assembly.BC_MODES)
    s.add_argument("--out", help="results CSV")
    s.add_argument("--energy-out", help="energy trace CSV (t, E_h, boundary_power)")
    s.add_argument("--vtk", help="write the final fields as legacy VTK")

    c = sub.add_parser("convergence", help="sweep over levels and theta values")
    c.add_argument("--r", type=_int_list)
    c.add_argument("--theta", type=_float_list)
    c.add_argument("--levels", type=_int_list)
    c.add_argument("--t-final", type=float)
    c.add_argument("--dt", type=_dt)
    c.add_argument("--cfl", type=float)
    c.add_argument("--bc", choices=assembly.BC_MODES)
    c.add_argument("--out-dir")

    d = sub.add_parser("verify-dirac", help="power and dimension checks of the element structures")
    d.add_argument("--r", type=_int_list)
    d.add_argument("--theta", type=_float_list)
    d.add_argument("--seed", type=int)
    d.add_argument("--samples", type=int)
    return p


DEFAULTS = {
    "solve": dict(r=1, theta=0.5, n=16, t_final=1.0, dt="auto", cfl=0.2, bc="data", out=None,
                  energy_out=None, vtk=None),
    "convergence": dict(r=[0, 1, 2], theta=[0.0, 0.5, 1.0], levels=[8, 16, 32], t_final=1.0,
                        dt="auto", cfl=0.2, bc="data", out_dir="results"),
    "verify-dirac": dict(r=[0, 1, 2], theta=list(dirac.THETAS), seed=0, samples=100),
}

_CONVERTERS = {
    "solve": dict(r=int, theta=eval_fraction, n=int, t_final=float, dt=_dt, cfl=float),
    "convergence": dict(r=_int_list, theta=_float_list, levels=_int_list, t_final=float, dt=_dt,
                        cfl=float),
    "verify-dirac": dict(r=_int_list, theta=_float_list, seed=int, samples=int),
}


def resolve_options(args):
    """Command-line values override the config file, which overrides the defaults."""
    opts = dict(DEFAULTS[args.command])
    if args.config:
        conv = _CONVERTERS[args.command]
        for key, value in read_config(args.config).items():
            if key not in opts:
                raise SystemExit(f"unknown key {key!r} in {args.config} for {args.command}")
            opts[key] = conv.get(key, str)(value)
    for key in opts:
        v = getattr(args, key, None)
        if v is not None:
            opts[key] = v
    return argparse.Namespace(**opts)


def cmd_solve(o):
    spec = harness.CaseSpec(o.r, o.theta, o.n, o.t_final, o.dt, o.bc, o.cfl)
    res = harness.run_case(spec, keep_state=True)
    harness.fill_orders([res])
    summary = harness.case_summary(res)
    print(json.dumps(summary, indent=1, default=float))
    if o.out:
        _ensure_dir(o.out)
        harness.write_csv(o.out, harness.convergence_rows([res]))
    if o.energy_out:
        _ensure_dir(o.energy_out)
        harness.write_energy_csv(o.energy_out, res.energy_trace)
    if o.vtk:
        _ensure_dir(o.vtk)
        _dump_vtk(o.vtk, spec, res.state)
    return 0


def _dump_vtk(path, spec, state):
    from .mesh import build_structured_mesh
    from .spaces import make_spaces

    mesh = build_structured_mesh(spec.n)
    E_p, E_q = make_spaces(mesh, spec.r)
    v, s = state[:E_p.total_dofs], state[E_p.total_dofs:]
    centroid = np.array([[1.0 / 3.0, 1.0 / 3.0]])
    vel = E_p.evaluate(v, centroid)[:, 0]
    sig = E_q.evaluate(s, centroid)[:, 0]
    write_vtk(mesh, path, cell_data={"velocity": vel, "stress": sig})


def _ensure_dir(path):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)


def cmd_convergence(o):
    if len(o.levels) < 2:
        log.warning("a single level gives no observed orders")
    out = harness.run_convergence(o.r, o.theta, o.levels, o.out_dir, o.t_final, o.dt, o.cfl, o.bc)
    for r, results in out.items():
        print(f"r = {r}")
        print("  theta       n   L2(V)        order   L2(sigma)    order")
        for c in sorted(results, key=lambda c: (c.spec.theta, c.spec.n)):
            e = c.errors
            print(f"  {c.spec.theta:<8.4g} {c.spec.n:4d}   {e.l2_velocity:.4e}  {e.order_l2_velocity:6.3f}"
                  f"  {e.l2_stress:.4e}  {e.order_l2_stress:6.3f}")
    print(f"wrote results to {o.out_dir}")
    return 0


def cmd_verify_dirac(o):
    rows = dirac.verify(o.r, o.theta, o.samples, o.seed)
    ok = True
    print(f"{'check':<44} {'r':>2} {'theta':>6} {'residual':>11} {'tol':>8}  result")
    for name, r, theta, resid, tol, passed in rows:
        th = "" if theta is None else f"{theta:.3g}"
        print(f"{name:<44} {r:>2} {th:>6} {resid:11.3e} {tol:8.1e}  {'PASS' if passed else 'FAIL'}")
        ok &= bool(passed)
    print("all checks passed" if ok else "SOME CHECKS FAILED")
    return 0 if ok else 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve_options(args)
        handler = {"solve": cmd_solve, "convergence": cmd_convergence,
                   "verify-dirac": cmd_verify_dirac}[args.command]
        return handler(opts)
    except (ValueError, OSError) as exc:
        print(f"phdg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
