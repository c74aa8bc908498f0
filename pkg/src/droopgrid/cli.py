"""Command-line front end: equilibria, linear models, eigenloci, stability
regions, time-domain runs and the reduced-model accuracy report."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import equilibrium, linearize, models, sim, stability
from .config import PRESET_LINES, ConfigError, MicrogridConfig, parse_config, preset_config, preset_name
from .models import ALL_KINDS, ModelKind

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

NUMERICAL_ERRORS = (
    equilibrium.EquilibriumError,
    linearize.SingularGammaError,
    stability.EigenSolverError,
    models.SingularMassMatrixError,
    sim.SimulationError,
    np.linalg.LinAlgError,
)

UNITS = {
    "delta": "rad", "omega": "rad/s", "V": "V", "phi": "V*s", "gamma": "A*s",
    "il": "A", "vo": "V", "I": "A",
}
KP_UNIT = "rad/(s*W)"
KQ_UNIT = "V/var"


def state_unit(label: str) -> str:
    for prefix, unit in UNITS.items():
        if label.startswith(prefix):
            return unit
    return "1"


def fmt(v) -> str:
    """Full-precision float text (round-trips through float())."""
    return repr(float(v))


def parse_range(text: str, with_count: bool = True):
    """'lo:hi:n' (or 'lo:hi') -> (lo, hi, n)."""
    parts = text.split(":")
    try:
        if with_count:
            if len(parts) != 3:
                raise ValueError
            lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
            if n < 1:
                raise ValueError
            return lo, hi, n
        if len(parts) != 2:
            raise ValueError
        return float(parts[0]), float(parts[1])
    except ValueError:
        form = "lo:hi:n" if with_count else "lo:hi"
        raise ConfigError(f"expected {form}, got {text!r}") from None


def kq_grid(text: str | None):
    if text is None:
        return np.array(stability.DEFAULT_KQ_GRID)
    lo, hi, n = parse_range(text)
    if not 0 < lo <= hi:
        raise ConfigError("--kq-grid needs 0 < lo <= hi")
    return np.geomspace(lo, hi, n)


def selected_models(name: str):
    return ALL_KINDS if name == "all" else (ModelKind.parse(name),)


def load_config(args) -> tuple[MicrogridConfig, str | None]:
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        cfg, preset = parse_config(text), None
    else:
        preset = preset_name(args.preset or "rx-eq1")
        cfg = preset_config(preset)
    if args.kp is not None or args.kq is not None:
        cfg = cfg.with_gains(args.kp, args.kq)
    return cfg, preset


def write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


# ---------------------------------------------------------------------------
# subcommands

def cmd_equilibrium(args, cfg, preset):
    for kind in selected_models(args.model):
        eq = equilibrium.find_equilibrium(kind, cfg)
        P, Q = models.injected_powers(kind, eq.x_star, eq.cfg)
        print(f"{kind.value}: omega0 = {eq.omega0:.6f} rad/s, residual = {eq.residual_norm:.2e}, "
              f"P = ({P[0]:.2f}, {P[1]:.2f}) W, Q = ({Q[0]:.2f}, {Q[1]:.2f}) var")
        rows = [("omega0", eq.omega0, "rad/s")]
        rows += [(lab, v, state_unit(lab)) for lab, v in zip(kind.labels, eq.x_star)]
        rows += [("P_i", P[0], "W"), ("P_k", P[1], "W"), ("Q_i", Q[0], "var"), ("Q_k", Q[1], "var")]
        write_csv(args.out / f"equilibrium_{kind.value}.csv", ["quantity", "value", "unit"], rows)


def cmd_linearize(args, cfg, preset):
    for kind in selected_models(args.model):
        eq = equilibrium.find_equilibrium(kind, cfg)
        lin = linearize.linearize_analytic(kind, cfg, eq)
        M = lin.state_matrix()
        es = stability.eigen(kind, cfg, eq)
        print(f"{kind.value}: {M.shape[0]} states, cond(Gamma) = {lin.gamma_condition:.2e}, "
              f"spectral abscissa = {es.spectral_abscissa:.6g} 1/s")
        # Gamma dx/dt = A x; droop rows are divided by their gain
        header = ["row \\ col"]
        header += [f"{lab} [{state_unit(lab)}]" for lab in kind.labels]
        for name, mat in (("state_matrix", M), ("gamma", lin.gamma), ("a", lin.a)):
            rows = [[lab, *map(float, mat[j])] for j, lab in enumerate(kind.labels)]
            write_csv(args.out / f"{name}_{kind.value}.csv", header, rows)
        write_csv(args.out / f"eigenvalues_{kind.value}.csv", ["Re [1/s]", "Im [1/s]"],
                  [(float(l.real), float(l.imag)) for l in es.eigenvalues])


def cmd_eigenloci(args, cfg, preset):
    lo, hi, n = parse_range(args.kp_range) if args.kp_range else (6e-5, 4.4e-3, 20)
    k_q = args.kq if args.kq is not None else cfg.inverter_i.k_q
    for kind in selected_models(args.model):
        sweep = stability.eigenloci_sweep(kind, cfg, (lo, hi), n, k_q)
        nst = kind.n_states
        header = [f"k_p [{KP_UNIT}]"] + [f"Re l{j + 1} [1/s]" for j in range(nst)] \
            + [f"Im l{j + 1} [1/s]" for j in range(nst)]
        rows = [[es.gains[0], *es.eigenvalues.real, *es.eigenvalues.imag] for es in sweep]
        write_csv(args.out / f"eigenloci_{kind.value}.csv", header, rows)
        crossing = next((es.gains[0] for es in sweep if not es.is_stable()), None)
        msg = f"{kind.value}: {len(sweep)} points"
        msg += f", first unstable k_p = {crossing:.4g}" if crossing is not None else ", stable throughout"
        if sweep.truncated_at is not None:
            msg += f"; equilibrium lost at k_p = {sweep.truncated_at:.4g}"
        print(msg)


def _boundary_rows(b):
    return [(p.k_q, p.k_p_crit, p.status) for p in b.points]


def cmd_region(args, cfg, preset):
    grid = kq_grid(args.kq_grid)
    bracket = parse_range(args.kp_range, with_count=False) if args.kp_range else stability.DEFAULT_BRACKET
    for kind in selected_models(args.model):
        b = stability.stability_boundary(kind, cfg, grid, bracket, rx_preset=preset, workers=args.workers)
        write_csv(args.out / f"region_{kind.value}.csv",
                  [f"k_q [{KQ_UNIT}]", f"k_p_crit [{KP_UNIT}]", "status"], _boundary_rows(b))
        print(f"{kind.value}: " + ", ".join(
            f"{p.k_q:.3g}->{p.k_p_crit:.4g}" if p.status in (stability.CROSSING, stability.EQUILIBRIUM_LOSS)
            else f"{p.k_q:.3g}->{p.status}" for p in b.points))


def cmd_simulate(args, cfg, preset):
    opts = sim.SimOptions(t_end=args.t_end, rel_tol=args.rtol, abs_tol=args.atol, init=args.init)
    for kind in selected_models(args.model):
        if args.init == "cold-start":
            run_cfg, x0 = cfg, models.cold_start(kind, cfg)
        else:
            eq = equilibrium.find_equilibrium(kind, cfg)
            run_cfg, x0 = eq.cfg, sim.perturbed_start(eq, args.perturbation)
        traj = sim.simulate(kind, run_cfg, x0, opts)
        header = ["t [s]", "f_i [Hz]", "f_k [Hz]", "V_i [V]", "V_k [V]", "P_i [W]", "P_k [W]"]
        write_csv(args.out / f"simulate_{kind.value}.csv", header, traj.channels().tolist())
        end = traj.channels()[-1]
        print(f"{kind.value}: {traj.status} at t = {end[0]:.4g} s, f = ({end[1]:.4f}, {end[2]:.4f}) Hz, "
              f"V = ({end[3]:.2f}, {end[4]:.2f}) V")


def report(preset: str, k_q_grid=stability.DEFAULT_KQ_GRID, max_excess: float = 0.10,
           max_fraction: float = 0.5, workers: int | None = None) -> stability.Comparison:
    """Stability boundaries of all four models and the reduced-model verdicts for a preset."""
    name = preset_name(preset)
    return stability.compare_models(preset_config(name), k_q_grid, max_excess=max_excess,
                                    max_fraction=max_fraction, rx_preset=name, workers=workers)


def cmd_report(args, cfg, preset):
    if args.config:
        raise ConfigError("report runs on the line presets; use --preset rather than --config")
    if args.presets:
        presets = [preset_name(p) for p in args.presets]
    elif args.preset:
        presets = [preset]
    else:
        presets = list(PRESET_LINES)
    grid = kq_grid(args.kq_grid)
    rows, brows = [], []
    reduced = [k for k in ALL_KINDS if k is not ModelKind.DETAILED]
    print(f"{'preset':<8}" + "".join(f"{k.value:>14}" for k in reduced))
    for p in presets:
        comp = report(p, grid, args.max_excess, args.max_fraction, args.workers)
        print(f"{p:<8}" + "".join(f"{comp.verdicts[k].label:>14}" for k in reduced))
        for k in reduced:
            v = comp.verdicts[k]
            rows.append((p, k.value, v.label, v.n_exceed, v.n_points, float(np.max(v.excess))))
        for k, b in comp.boundaries.items():
            brows += [(p, k.value, *r) for r in _boundary_rows(b)]
    write_csv(args.out / "report.csv",
              ["preset", "model", "verdict", "points_exceeding", "points", "max_relative_excess [1]"], rows)
    write_csv(args.out / "report_boundaries.csv",
              ["preset", "model", f"k_q [{KQ_UNIT}]", f"k_p_crit [{KP_UNIT}]", "status"], brows)


COMMANDS = {
    "equilibrium": cmd_equilibrium,
    "linearize": cmd_linearize,
    "eigenloci": cmd_eigenloci,
    "region": cmd_region,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--preset", help="line preset: rx-gg1, rx-eq1 (default) or rx-ll1")
    src.add_argument("--config", help="INI parameter file (omitted keys take default values)")
    common.add_argument("--model", default="all", choices=[k.value for k in ALL_KINDS] + ["all"])
    common.add_argument("--kp", type=float, help=f"active-power droop gain, both inverters [{KP_UNIT}]")
    common.add_argument("--kq", type=float, help=f"reactive-power droop gain, both inverters [{KQ_UNIT}]")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="droopgrid", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("equilibrium", parents=[common], help="steady operating point")
    sub.add_parser("linearize", parents=[common], help="state matrix and eigenvalues")
    s = sub.add_parser("eigenloci", parents=[common], help="eigenvalues along a k_p sweep")
    s.add_argument("--kp-range", help="lo:hi:n (default 6e-5:4.4e-3:20)")
    s = sub.add_parser("region", parents=[common], help="critical k_p along a k_q grid")
    s.add_argument("--kq-grid", help="lo:hi:n, log-spaced")
    s.add_argument("--kp-range", help="search bracket lo:hi")
    s.add_argument("--workers", type=int, default=None)
    s = sub.add_parser("simulate", parents=[common], help="nonlinear time response")
    s.add_argument("--t-end", type=float, default=1.0)
    s.add_argument("--rtol", type=float, default=1e-6)
    s.add_argument("--atol", type=float, default=1e-6)
    s.add_argument("--init", choices=["cold-start", "equilibrium-perturbed"], default="cold-start")
    s.add_argument("--perturbation", type=float, default=1e-3, help="relative size for equilibrium-perturbed")
    s = sub.add_parser("report", parents=[common], help="Good/Acceptable/Unacceptable verdicts")
    s.add_argument("--presets", nargs="+", help="several presets (default: all three, or --preset)")
    s.add_argument("--kq-grid", help="lo:hi:n, log-spaced")
    s.add_argument("--max-excess", type=float, default=0.10,
                   help="largest relative excess still Acceptable")
    s.add_argument("--max-fraction", type=float, default=0.5,
                   help="exceeding points must be fewer than this fraction of the grid")
    s.add_argument("--workers", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, preset = load_config(args)
        COMMANDS[args.command](args, cfg, preset)
    except NUMERICAL_ERRORS as exc:  # before ValueError: LinAlgError subclasses it
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
