"""Command-line scenario runner.

Every report is a JSON object holding the resolved configuration, the
library version, the result, a warnings list and a timestamp.  Exit codes:
0 success (possibly with warnings), 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import enum
import io
import json
import logging
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .anomaly import DeformationFamily, bump, c_j, check_chi_identity, check_factorization
from .beltrami import SOLVER_SUP_LIMIT, BeltramiField, check_pfaff, solve_beltrami
from .determinants import HeatConfig, Method, operator_spectrum, quillen_gamma, zeta_log_det
from .errors import BeltramiLabError, ConfigError, NonConvergence, NumericalFailure
from .geometry import MetricDensity
from .operators import build_laplacian, eigensystem, kernel_basis, riemann_roch
from .torus_grid import Grid, make_grid

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def parse_complex(text: str) -> complex:
    """Accepts 're,im', 'i', or a Python complex literal such as '0.3+1.1j'."""
    s = text.strip().replace(" ", "")
    if "," in s:
        parts = s.split(",")
        if len(parts) != 2:
            raise ConfigError(f"expected 're,im', got {text!r}")
        return complex(float(parts[0]), float(parts[1]))
    s = s.replace("i", "j")
    if s in ("j", "+j"):
        return 1j
    if s == "-j":
        return -1j
    try:
        return complex(s)
    except ValueError:
        raise ConfigError(f"cannot parse complex number {text!r}") from None


def parse_mu(spec: str) -> dict:
    """'const:v' or 'mode:amp,m,k[,amp,m,k,...]'."""
    kind, _, body = spec.partition(":")
    if kind == "const":
        return {"kind": "const", "value": parse_complex(body or "0")}
    if kind == "mode":
        vals = body.split(",")
        if not body or len(vals) % 3:
            raise ConfigError("mode spec needs triples amp,m,k")
        modes = []
        for a in range(0, len(vals), 3):
            try:
                m, k = int(vals[a + 1]), int(vals[a + 2])
            except ValueError:
                raise ConfigError(f"mode numbers must be integers in {spec!r}") from None
            modes.append({"amplitude": parse_complex(vals[a]), "m": m, "k": k})
        return {"kind": "mode", "modes": modes}
    raise ConfigError(f"unknown mu spec {spec!r}")


def parse_rho(spec: str) -> dict:
    """'flat', 'flat:value' or 'bump:amp,width'."""
    kind, _, body = spec.partition(":")
    if kind == "flat":
        value = float(body) if body else 1.0
        if value <= 0:
            raise ConfigError("flat rho must be positive")
        return {"kind": "flat", "value": value}
    if kind == "bump":
        vals = [float(v) for v in body.split(",")] if body else []
        if len(vals) != 2:
            raise ConfigError("bump spec is bump:amp,width")
        return {"kind": "bump", "amplitude": vals[0], "width": vals[1]}
    raise ConfigError(f"unknown rho spec {spec!r}")


@dataclasses.dataclass(frozen=True)
class ScenarioConfig:
    command: str
    tau: complex
    n: int
    j: int | None
    mu_spec: dict
    rho_spec: dict
    method: str
    step: float
    t: complex
    tol: float | None
    weyl_spec: dict | None
    output: str | None
    format: str
    threads: int | None

    def grid(self) -> Grid:
        return make_grid(self.tau, self.n)

    def mu_field(self, grid: Grid):
        if self.mu_spec["kind"] == "const":
            return grid.constant(self.mu_spec["value"])
        f = grid.constant(0.0)
        for md in self.mu_spec["modes"]:
            f = f + grid.mode(md["m"], md["k"], md["amplitude"])
        return f

    def rho(self, grid: Grid) -> MetricDensity:
        return rho_from_spec(self.rho_spec, grid)


def rho_from_spec(spec: dict, grid: Grid) -> MetricDensity:
    if spec["kind"] == "flat":
        return MetricDensity.flat(grid, spec["value"])
    return MetricDensity.flat(grid).weyl(bump(grid, spec["amplitude"], spec["width"]))


def build_config(args: argparse.Namespace) -> ScenarioConfig:
    cfg = ScenarioConfig(
        command=args.command,
        tau=parse_complex(args.tau),
        n=args.n,
        j=args.j,
        mu_spec=parse_mu(args.mu),
        rho_spec=parse_rho(args.rho),
        method=Method(args.method).value,
        step=args.step,
        t=parse_complex(args.t),
        tol=args.tol,
        weyl_spec=parse_rho(args.weyl) if args.weyl else None,
        output=args.out,
        format=args.format,
        threads=args.threads,
    )
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig) -> None:
    """All preconditions are checked before any numerical work."""
    if cfg.command == "cj":
        return
    grid = cfg.grid()
    mu = cfg.mu_field(grid)
    if mu.sup() >= SOLVER_SUP_LIMIT:
        raise ConfigError(f"sup|mu| = {mu.sup():.4g} must be below {SOLVER_SUP_LIMIT}")
    cfg.rho(grid)
    if cfg.step <= 0:
        raise ConfigError("--step must be positive")
    if cfg.tol is not None and cfg.tol <= 0:
        raise ConfigError("--tol must be positive")
    if cfg.threads is not None and cfg.threads < 1:
        raise ConfigError("--threads must be >= 1")
    if cfg.weyl_spec is not None and cfg.weyl_spec["kind"] != "bump":
        raise ConfigError("--weyl takes a bump:amp,width spec")
    if cfg.command in ("spectrum", "riemann-roch", "zeta-det", "check-factorization") and cfg.n > 32:
        if not (cfg.command in ("zeta-det", "check-factorization") and cfg.method == "oracle"):
            raise ConfigError("eigen-work is limited to n <= 32")
    if cfg.method == "oracle" and cfg.command in ("zeta-det", "check-factorization"):
        if cfg.mu_spec["kind"] != "const" or cfg.rho_spec["kind"] != "flat":
            raise ConfigError("the oracle method needs constant mu and flat rho")
        if cfg.weyl_spec is not None:
            raise ConfigError("the Weyl check needs --method numerical")


def _family(cfg: ScenarioConfig, grid: Grid) -> DeformationFamily:
    if cfg.mu_spec["kind"] == "const":
        # mu_t = mu_0 + t around t = 0
        return DeformationFamily.constant(grid, cfg.mu_spec["value"], t=0.0, step=cfg.step)
    return DeformationFamily([cfg.mu_field(grid)], t=cfg.t, step=cfg.step)


def _j(cfg: ScenarioConfig, default: int = 0) -> int:
    return default if cfg.j is None else cfg.j


def run_solve(cfg, warnings):
    grid = cfg.grid()
    mu = BeltramiField(cfg.mu_field(grid))
    kw = {} if cfg.tol is None else {"tol": cfg.tol}
    try:
        sol = solve_beltrami(mu, **kw)
    except NonConvergence as exc:
        warnings.append(f"non-convergence: {exc}")
        return {"converged": False, "residual": exc.residual, "iterations": exc.iterations}, None
    result = {
        "converged": True,
        "residual": sol.residual,
        "pfaff_residual": check_pfaff(sol, mu),
        "iterations": sol.iterations,
        "c": sol.c,
        "tau_prime": sol.image_modulus.tau,
        "lambda_deviation_from_one": float(np.max(np.abs(sol.lam.values - 1))),
    }
    x, y = grid.xy
    rows = [
        {"x": float(a), "y": float(b), "w": complex(wv), "lam": complex(lv)}
        for a, b, wv, lv in zip(x.ravel(), y.ravel(), sol.w.flat(), sol.lam.flat())
    ]
    return result, rows


def run_spectrum(cfg, warnings):
    grid = cfg.grid()
    j = _j(cfg)
    op = build_laplacian(j, BeltramiField(cfg.mu_field(grid)), cfg.rho(grid))
    eig = eigensystem(op)
    kb = kernel_basis(op, cfg.tol, eig=eig)
    vals = eig.values
    result = {
        "j": j,
        "count": int(vals.size),
        "n_zero": kb.dimension,
        "kernel_tol": kb.tol,
        "eigenvalues": vals,
    }
    rows = [{"index": i, "eigenvalue": float(v)} for i, v in enumerate(vals)]
    return result, rows


def run_zeta_det(cfg, warnings):
    grid = cfg.grid()
    j = _j(cfg)
    mu = BeltramiField(cfg.mu_field(grid))
    rho = cfg.rho(grid)
    heat = HeatConfig() if cfg.tol is None else HeatConfig(tail_tol=cfg.tol)
    q = quillen_gamma(j, mu, rho, cfg.method, heat)
    result = {
        "j": j,
        "method": q.method.value,
        "log_det_zeta": q.log_det_zeta,
        "log_l2_norm": q.log_l2_norm,
        "gamma": q.gamma,
        "flags": list(q.flags),
    }
    if q.method is Method.numerical_heat_kernel:
        spec, _ = operator_spectrum(j, mu, rho)
        zd = zeta_log_det(spec, heat)
        result["heat"] = {"t0": zd.t0, "zeta0": zd.zeta0, "c1": zd.c1, "fit_spread": zd.fit_spread}
    warnings.extend(q.flags)
    return result, None


def run_chi(cfg, warnings):
    grid = cfg.grid()
    rep = check_chi_identity(_family(cfg, grid), cfg.rho(grid))
    out = rep.as_dict()
    out["holds"] = rep.holds()
    return out, None


def run_factorization(cfg, warnings):
    grid = cfg.grid()
    j = _j(cfg)
    sigma = None
    if cfg.weyl_spec is not None:
        sigma = bump(grid, cfg.weyl_spec["amplitude"], cfg.weyl_spec["width"])
    rep = check_factorization(j, _family(cfg, grid), cfg.rho(grid), cfg.method, sigma)
    warnings.extend(rep.flags)
    out = rep.as_dict()
    if rep.weyl is not None:
        out["weyl"]["holds"] = rep.weyl.holds()
    return out, None


def run_riemann_roch(cfg, warnings):
    grid = cfg.grid()
    return riemann_roch(_j(cfg), BeltramiField(cfg.mu_field(grid)), cfg.rho(grid)), None


def run_cj(cfg, warnings):
    if cfg.j is not None:
        return {"j": cfg.j, "C_j": c_j(cfg.j)}, None
    table = [{"j": j, "C_j": c_j(j)} for j in (0, 1, 2)]
    return {"table": table}, table


COMMANDS = {
    "solve": run_solve,
    "spectrum": run_spectrum,
    "zeta-det": run_zeta_det,
    "check-chi-identity": run_chi,
    "check-factorization": run_factorization,
    "riemann-roch": run_riemann_roch,
    "cj": run_cj,
}


def to_jsonable(obj):
    """Complex numbers become [re, im]; arrays become lists."""
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, enum.Enum):
        return obj.value
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj


def render_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    flat_rows = []
    for r in rows:
        flat = {}
        for k, v in r.items():
            if isinstance(v, complex):
                flat[f"{k}_re"], flat[f"{k}_im"] = v.real, v.imag
            else:
                flat[k] = v
        flat_rows.append(flat)
    writer = csv.DictWriter(buf, fieldnames=list(flat_rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(flat_rows)
    return buf.getvalue()


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tau", default="0,1", help="torus modulus as re,im (default 0,1)")
    common.add_argument("--n", type=int, default=24, help="grid resolution")
    common.add_argument("--j", type=int, default=None, help="conformal weight (default 0)")
    common.add_argument("--mu", default="const:0", help="const:v | mode:amp,m,k[,...]")
    common.add_argument("--rho", default="flat", help="flat[:value] | bump:amp,width")
    common.add_argument("--method", default="numerical", choices=[m.value for m in Method])
    common.add_argument("--step", type=float, default=1e-2, help="finite-difference step in t")
    common.add_argument("--t", default="0.1,0", help="base point of the family mu_t = t * mu")
    common.add_argument("--weyl", default=None, help="bump:amp,width for the Weyl check")
    common.add_argument("--tol", type=float, default=None, help="solver / kernel / tail tolerance")
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument("--format", default="json", choices=["json", "csv"])
    common.add_argument("--threads", type=int, default=None, help="BLAS threads (default all)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="beltrami-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "solve the Beltrami equation and report residuals",
        "spectrum": "eigenvalues of Delta_{j,mu}",
        "zeta-det": "zeta determinant, L2 norm and Quillen functional",
        "check-chi-identity": "compare the fiber integral of c1^2 with d_tbar d_t of integrated chi",
        "check-factorization": "harmonicity (and optional Weyl) check of the factorized functional",
        "riemann-roch": "kernel dimensions N_j, N_(1-j)",
        "cj": "the constants C_j",
    }
    for name, h in helps.items():
        sub.add_parser(name, parents=[common], help=h)
    return p


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _error_text(kind: str, exc: Exception) -> str:
    err = {"error": kind, "type": type(exc).__name__, "message": str(exc), "version": __version__}
    return json.dumps(err, sort_keys=True) + "\n"


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(name)s: %(message)s")
    try:
        cfg = build_config(args)
    except (ConfigError, ValueError) as exc:
        sys.stderr.write(_error_text("config", exc))
        return EXIT_CONFIG

    code, text = run(cfg.command, cfg)
    if code == EXIT_OK:
        _emit(text, cfg.output)
    else:
        sys.stderr.write(text)
    return code


def run(command: str, cfg: ScenarioConfig) -> tuple[int, str]:
    """Execute one scenario; returns the exit status and the rendered report or error."""
    if command != cfg.command:
        cfg = dataclasses.replace(cfg, command=command)
    warnings: list[str] = []
    try:
        if cfg.threads is not None:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=cfg.threads):
                result, rows = COMMANDS[cfg.command](cfg, warnings)
        else:
            result, rows = COMMANDS[cfg.command](cfg, warnings)
    except ConfigError as exc:
        return EXIT_CONFIG, _error_text("config", exc)
    except (NumericalFailure, BeltramiLabError) as exc:
        return EXIT_NUMERICAL, _error_text("numerical", exc)

    if cfg.format == "csv":
        if rows is None:
            rows = [{"key": k, "value": json.dumps(to_jsonable(v))} for k, v in result.items()]
        return EXIT_OK, render_csv(rows)
    report = {
        "command": cfg.command,
        "version": __version__,
        "config": cfg,
        "result": result,
        "warnings": sorted(set(warnings)),
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    return EXIT_OK, json.dumps(to_jsonable(report), sort_keys=True, indent=2) + "\n"


if __name__ == "__main__":
    sys.exit(main())
