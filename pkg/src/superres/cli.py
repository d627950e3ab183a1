"""Command-line front end.

Subcommands: basis, etav, etaw, check-nd, converge, solve, sweep, figure.
Grids and tables go to CSV files under ``--out`` (``# key=value`` metadata
lines, then a header row, then rows in row-major order); reports are JSON on
stdout. Exit status is 0 on success, 1 for configuration errors and 2 for
numerical failures, in which case a diagnostic JSON object goes to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import blasso, certificate
from .config import ConfigError, ExperimentConfig, load_spikes
from .domain import DomainError
from .leastspace import least_basis, least_basis_1d

FIGURES = ("fig-etav-conv", "fig-etaw", "fig-frank-wolfe", "fig-frank-wolfe-fixed")
# figure aliases: etaw-<kernel> selects the fig-etaw panel row of one operator
ETAW_ALIASES = {"etaw-gaussian": "gaussian2d", "etaw-neuro": "neuro_disc", "etaw-gmixture": "gmixture1d"}


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; that code is reserved here
    def error(self, message):
        raise ConfigError(message)


# -- output helpers -----------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)


def _meta_lines(meta: dict) -> str:
    return "".join(f"# {k}={json.dumps(_jsonable(v), sort_keys=True)}\n" for k, v in meta.items())


def write_table(path, header, rows, meta) -> str:
    buf = io.StringIO()
    buf.write(_meta_lines(meta))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    _write(path, buf.getvalue())
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_grid(path, kernel, values_fn, n: int, meta) -> str:
    """Evaluate on the domain grid; points outside the mask are written as nan."""
    pts, mask, _ = kernel.domain.grid(n)
    vals = np.full(len(pts), np.nan)
    vals[mask] = values_fn(pts[mask])
    d = pts.shape[1]
    names = ["x", "y"][:d] if d <= 2 else [f"x{k + 1}" for k in range(d)]
    rows = [list(p) + [v] for p, v in zip(pts, vals)]
    return write_table(path, names + ["value"], rows, meta)


def _write(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _display(P) -> str:
    # flip sign so the first top-degree term is positive; spans do not care
    top = max(sum(a) for a, _ in P.items())
    lead = min((a for a, _ in P.items() if sum(a) == top))
    return str(-P if P.coef(lead) < 0 else P)


# -- configuration --------------------------------------------------------------


def _common(p):
    p.add_argument("--config", help="ExperimentConfig JSON file")
    p.add_argument("--kernel", help="gaussian2d, gmixture1d, neuro_disc or lowpass_torus")
    p.add_argument("--sigma", type=float, help="gaussian2d width")
    p.add_argument("--fc", type=int, help="lowpass_torus cutoff frequency")
    p.add_argument("--spikes", help="JSON file: list of points or {positions, amplitudes}")
    p.add_argument("--t", type=float, help="cluster scale")
    p.add_argument("--lambda", dest="lam", type=float, help="regularization")
    p.add_argument("--lambdas", help="comma separated lambda schedule")
    p.add_argument("--t-list", help="comma separated scales")
    p.add_argument("--seed", type=int)
    p.add_argument("--grid", type=int, help="points per axis")
    p.add_argument("--out", help="output directory")
    p.add_argument("--nonneg", action="store_true", default=None)
    p.add_argument("--max-iters", type=int)


def _floats(text, flag):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{flag} expects comma separated numbers") from None


def _read(path, what):
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read {what} {path!r}: {err.strerror}") from None


def build_config(args, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    if args.config:
        cfg = ExperimentConfig.from_json(_read(args.config, "config"))
    d = cfg.to_dict()
    if args.kernel:
        if args.kernel != d["kernel"]["name"]:
            d["kernel"] = {"name": args.kernel}
            if not args.spikes:
                d["spikes"] = {"positions": None, "amplitudes": None}
    for flag, key, kernel in (("sigma", "sigma", "gaussian2d"), ("fc", "fc", "lowpass_torus")):
        value = getattr(args, flag)
        if value is not None:
            if d["kernel"]["name"] != kernel:
                raise ConfigError(f"--{flag} only applies to {kernel}")
            d["kernel"][key] = value
    if args.spikes:
        d["spikes"] = load_spikes(_read(args.spikes, "spikes file"))
    for attr, key in (("t", "t"), ("lam", "lambda"), ("seed", "seed"), ("grid", "grid"), ("out", "out"),
                      ("nonneg", "nonneg"), ("max_iters", "max_iters")):
        value = getattr(args, attr)
        if value is not None:
            d[key] = value
    if args.lambdas:
        d["lambdas"] = _floats(args.lambdas, "--lambdas")
    if args.t_list:
        d["t_list"] = _floats(args.t_list, "--t-list")
    cfg = ExperimentConfig.from_dict(d)
    kernel = cfg.make_kernel()
    pos = cfg.positions()
    if pos.shape[1] != kernel.dim:
        raise ConfigError(f"{cfg.kernel_name} spikes need {kernel.dim} coordinates")
    kernel.check_points(pos)
    return cfg


def _meta(cfg: ExperimentConfig, **extra) -> dict:
    meta = cfg.to_dict()
    meta.update(extra)
    return meta


def _solve_opts(cfg: ExperimentConfig) -> blasso.SolveOptions:
    return blasso.SolveOptions(grid=cfg.grid, max_iters=cfg.max_iters, nonneg=cfg.nonneg)


# -- subcommands ----------------------------------------------------------------


def cmd_basis(cfg, args):
    kernel = cfg.make_kernel()
    Z = cfg.positions()
    lb = least_basis_1d(len(Z)) if kernel.dim == 1 else least_basis(Z)
    _write(os.path.join(cfg.out, "basis.json"), dumps({"config": cfg.to_dict(), "basis": lb.to_json()}) + "\n")
    print("{" + ", ".join(_display(P) for P in lb.basis) + "}")
    return 0


def _nd_json(rep):
    out = rep.to_json()
    out["sup_gt_1"] = bool(rep.sup_away > 1.0)
    return out


def cmd_etav(cfg, args):
    kernel = cfg.make_kernel()
    V = certificate.eta_v(kernel, cfg.positions(), cfg.t)
    path = write_grid(os.path.join(cfg.out, "etav.csv"), kernel, V, cfg.grid, _meta(cfg, certificate="eta_v"))
    rep = certificate.check_nd(V, grid=cfg.grid)
    print(dumps({
        "certificate": V.to_json(), "residual": float(np.max(np.abs(V.constraint_residuals()))),
        "nd": _nd_json(rep), "grid_csv": path,
    }))
    return 0


def cmd_etaw(cfg, args):
    kernel = cfg.make_kernel()
    Z = cfg.positions()
    rep = certificate.check_nd_limit(kernel, Z, grid=cfg.grid)
    out = {"nd": _nd_json(rep)}
    if rep.singular:
        # no limit certificate: tabulate the smallest-scale pre-certificate probe
        t = rep.probes[-1][0] if rep.probes else 1.0
        V = certificate.eta_v(kernel, Z, t)
        out["grid_csv"] = write_grid(os.path.join(cfg.out, "etaw.csv"), kernel, V, cfg.grid,
                                     _meta(cfg, certificate="eta_v_probe", probe_t=t))
        out["note"] = "limit system inconsistent; grid shows eta_V at the smallest probe scale"
    else:
        W = certificate.eta_w(kernel, Z)
        out["certificate"] = W.to_json()
        out["residual"] = float(np.max(np.abs(W.constraint_residuals())))
        out["grid_csv"] = write_grid(os.path.join(cfg.out, "etaw.csv"), kernel, W, cfg.grid,
                                     _meta(cfg, certificate="eta_w"))
    print(dumps(out))
    return 0


def cmd_check_nd(cfg, args):
    kernel = cfg.make_kernel()
    Z = cfg.positions()
    if args.which == "etav":
        rep = certificate.check_nd(certificate.eta_v(kernel, Z, cfg.t), grid=cfg.grid)
    else:
        rep = certificate.check_nd_limit(kernel, Z, grid=cfg.grid)
    print(dumps({"which": args.which, "nd": _nd_json(rep)}))
    return 0


def cmd_converge(cfg, args):
    kernel = cfg.make_kernel()
    tab = certificate.convergence_study(kernel, cfg.positions(), cfg.t_list, grid=cfg.grid)
    path = write_table(os.path.join(cfg.out, "converge.csv"), ["t", "sup_diff", "cond"], tab.rows(),
                       _meta(cfg, slope=tab.slope))
    print(dumps({
        "slope": tab.slope, "sup_diff": tab.sup_diff, "t": tab.t,
        "last_over_first": float(tab.sup_diff[-1] / tab.sup_diff[0]), "table_csv": path,
    }))
    return 0


def _path_rows(rows):
    return [[r["lambda"], r["noise_norm"], r["spikes"], r["pos_error"], r["amp_error"], r["iterations"],
             r["reason"]] for r in rows]


def cmd_solve(cfg, args):
    kernel = cfg.make_kernel()
    Z, a = cfg.positions(), cfg.amplitudes()
    opts = _solve_opts(cfg)
    if cfg.lambdas:
        rows = blasso.lambda_path(kernel, Z, a, cfg.t, cfg.lambdas, cfg.seed, opts)
        path = write_table(os.path.join(cfg.out, "lambda_path.csv"),
                           ["lambda", "noise_norm", "spikes", "pos_error", "amp_error", "iterations", "reason"],
                           _path_rows(rows), _meta(cfg))
        _write(os.path.join(cfg.out, "lambda_path.json"), dumps(rows) + "\n")
        print(dumps({"path": rows, "table_csv": path}))
        return 0
    obs = blasso.make_observation(kernel, Z, a, cfg.t, cfg.lam, cfg.seed, cfg.noise_ratio)
    m, trace = blasso.fw_solve(obs, cfg.lam, opts)
    pos_err, amp_err = blasso.support_errors(m, obs.clean, kernel.domain)
    recs = [[r["iter"], r["spikes"], r["objective"], r["max_eta"]] for r in trace.records]
    path = write_table(os.path.join(cfg.out, "trace.csv"), ["iter", "spikes", "objective", "max_eta"], recs,
                       _meta(cfg))
    report = {
        "measure": m.to_json(), "truth": obs.clean.to_json(), "reason": trace.reason,
        "iterations": len(trace.records) - 1, "spikes": len(m), "pos_error": pos_err,
        "amp_error": amp_err, "objective": blasso.objective(obs, m, cfg.lam), "notes": trace.notes,
        "trace_csv": path,
    }
    _write(os.path.join(cfg.out, "solution.json"), dumps(report) + "\n")
    print(dumps(report))
    return 0


SWEEP_COLUMNS = ["t", "lambda", "noise_norm", "spikes", "pos_error", "amp_error", "ratio", "reason"]


def cmd_sweep(cfg, args):
    kernel = cfg.make_kernel()
    Z, a = cfg.positions(), cfg.amplitudes()
    if len(Z) != 2:
        raise ConfigError("sweep needs exactly two spikes")
    ratio = 0.1 if cfg.noise_ratio is None else cfg.noise_ratio
    rows = blasso.two_spike_sweep(kernel, Z, a, cfg.t_list, cfg.sweep_c, ratio, cfg.seed, _solve_opts(cfg))
    path = write_table(os.path.join(cfg.out, "sweep.csv"), SWEEP_COLUMNS,
                       [[r[c] for c in SWEEP_COLUMNS] for r in rows], _meta(cfg))
    good = [r["ratio"] for r in rows if math.isfinite(r["ratio"])]
    spread = max(good) / min(good) if good else float("nan")
    print(dumps({"rows": rows, "ratio_spread": spread, "table_csv": path}))
    return 0


# -- figure presets ---------------------------------------------------------------


def _parse_range(text):
    if text is None:
        return None
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"--N expects 'a..b' or a comma separated list, got {text!r}") from None


def _random_config(kernel, N, seed):
    """Seeded cluster of N points around z0, inside the domain."""
    rng = np.random.default_rng(seed + 1000 * N)
    if kernel.name == "gaussian2d":
        return rng.uniform(-1, 1, size=(N, 2))
    if kernel.name == "lowpass_torus":
        return np.sort(rng.uniform(0, 0.5, size=(N, 1)), axis=0)
    if kernel.name == "neuro_disc":
        return kernel.z0 + 0.1 * rng.uniform(-1, 1, size=(N, 2))
    return kernel.z0 + 0.2 * rng.uniform(-1, 1, size=(N, 2))


def _fig_etav_conv(cfg, Ns):
    kernel = cfg.make_kernel()
    Z = cfg.positions()
    files = []
    ts = [1.0, 0.5, 0.2, 0.01]
    for t in ts:
        V = certificate.eta_v(kernel, Z, t)
        files.append(write_grid(os.path.join(cfg.out, f"etav-conv-t{t:g}.csv"), kernel, V, cfg.grid,
                                _meta(cfg, certificate="eta_v", figure_t=t)))
    W = certificate.eta_w(kernel, Z)
    files.append(write_grid(os.path.join(cfg.out, "etav-conv-limit.csv"), kernel, W, cfg.grid,
                            _meta(cfg, certificate="eta_w")))
    return {"files": files}


def _fig_etaw(cfg, Ns, kernel_name=None):
    if kernel_name and kernel_name != cfg.kernel_name:
        cfg = cfg.replace(kernel={"name": kernel_name}, spikes={"positions": None, "amplitudes": None})
    kernel = cfg.make_kernel()
    Ns = Ns or [2, 3, 4, 5]
    files, verdicts = [], {}
    for N in Ns:
        Z = _random_config(kernel, N, cfg.seed)
        sub = cfg.replace(spikes={"positions": Z.tolist(), "amplitudes": None})
        rep = certificate.check_nd_limit(kernel, Z, grid=cfg.grid)
        verdicts[N] = rep.verdict
        name = os.path.join(cfg.out, f"{kernel.name}-etaw-N{N}.csv")
        if rep.singular:
            t = rep.probes[-1][0] if rep.probes else 1.0
            fn, label = certificate.eta_v(kernel, Z, t), "eta_v_probe"
        else:
            fn, label = certificate.eta_w(kernel, Z), "eta_w"
        files.append(write_grid(name, kernel, fn, cfg.grid, _meta(sub, certificate=label, verdict=rep.verdict)))
    return {"files": files, "verdicts": verdicts}


def _fig_fw(cfg, Ns, fixed: bool):
    kernel = cfg.make_kernel()
    Z, a = cfg.positions(), cfg.amplitudes()
    opts = _solve_opts(cfg)
    if not fixed:
        lambdas = cfg.lambdas or [1e-2, 3e-3, 1e-3, 3e-4, 1e-4]
        rows = blasso.lambda_path(kernel, Z, a, cfg.t, lambdas, cfg.seed, opts)
        spikes = []
        for r in rows:
            for p, amp in zip(r["measure"]["positions"], r["measure"]["amplitudes"]):
                spikes.append([r["lambda"]] + list(p) + [amp])
        d = kernel.dim
        names = ["x", "y"][:d]
        f1 = write_table(os.path.join(cfg.out, "frank-wolfe-path.csv"), ["lambda"] + names + ["amplitude"],
                         spikes, _meta(cfg, lambdas=lambdas))
        V = certificate.eta_v(kernel, Z, cfg.t)
        f2 = write_grid(os.path.join(cfg.out, "frank-wolfe-etav.csv"), kernel, V, cfg.grid,
                        _meta(cfg, certificate="eta_v"))
        return {"files": [f1, f2], "spike_counts": [r["spikes"] for r in rows]}
    obs = blasso.make_observation(kernel, Z, a, cfg.t, cfg.lam, cfg.seed, cfg.noise_ratio)
    m, trace = blasso.fw_solve(obs, cfg.lam, opts)
    names = ["x", "y"][:kernel.dim]
    f1 = write_table(os.path.join(cfg.out, "frank-wolfe-fixed-measure.csv"), names + ["amplitude"],
                     [list(p) + [amp] for p, amp in zip(m.positions, m.amplitudes)], _meta(cfg))
    f2 = write_table(os.path.join(cfg.out, "frank-wolfe-fixed-trace.csv"), ["iter", "spikes", "objective", "max_eta"],
                     [[r["iter"], r["spikes"], r["objective"], r["max_eta"]] for r in trace.records], _meta(cfg))
    residual = lambda x: blasso.residual_correlation(obs, m, cfg.lam, x)  # noqa: E731
    f3 = write_grid(os.path.join(cfg.out, "frank-wolfe-fixed-eta.csv"), kernel, residual, cfg.grid,
                    _meta(cfg, certificate="eta_iterate"))
    return {"files": [f1, f2, f3], "spikes": len(m), "reason": trace.reason}


# preset configurations; CLI flags given explicitly still override them
PRESETS = {
    "fig-etav-conv": {"kernel": {"name": "gaussian2d"}, "grid": 96},
    "fig-etaw": {"kernel": {"name": "gaussian2d"}, "grid": 96},
    "fig-frank-wolfe": {
        "kernel": {"name": "gaussian2d"}, "t": 0.5, "nonneg": True, "grid": 128,
        "spikes": {"positions": [[-0.6, -0.4], [0.7, -0.2], [0.2, 0.8]], "amplitudes": None},
    },
    "fig-frank-wolfe-fixed": {
        "kernel": {"name": "neuro_disc"}, "lambda": 1e-4, "nonneg": True, "grid": 64,
        "spikes": {"positions": [[0.31, 0.24], [0.505, 0.27], [0.43, 0.42]], "amplitudes": None},
    },
}


def cmd_figure(cfg, args):
    name = args.name
    Ns = _parse_range(args.N)
    if name in ETAW_ALIASES:
        out = _fig_etaw(cfg, Ns, ETAW_ALIASES[name])
    elif name == "fig-etav-conv":
        out = _fig_etav_conv(cfg, Ns)
    elif name == "fig-etaw":
        out = _fig_etaw(cfg, Ns)
    else:
        out = _fig_fw(cfg, Ns, fixed=name == "fig-frank-wolfe-fixed")
    print(dumps({"figure": name, **out}))
    return 0


COMMANDS = {
    "basis": cmd_basis, "etav": cmd_etav, "etaw": cmd_etaw, "check-nd": cmd_check_nd,
    "converge": cmd_converge, "solve": cmd_solve, "sweep": cmd_sweep, "figure": cmd_figure,
}


def build_parser():
    p = _Parser(prog="superres", description="Super-resolution certificates and BLASSO experiments")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        _common(sp)
        if name == "check-nd":
            sp.add_argument("--which", choices=["etaw", "etav"], default="etaw")
        if name == "figure":
            sp.add_argument("--name", required=True, choices=list(FIGURES) + list(ETAW_ALIASES))
            sp.add_argument("--N", help="spike counts, e.g. 2..5")
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise ConfigError("a subcommand is required: " + ", ".join(COMMANDS))
        base = None
        if args.command == "figure" and args.name in PRESETS:
            base = ExperimentConfig.from_dict(PRESETS[args.name])
        cfg = build_config(args, base)
        return COMMANDS[args.command](cfg, args)
    except np.linalg.LinAlgError as err:
        info = {"error": type(err).__name__, "message": str(err)}
        for key in ("rank", "size", "consistent"):
            if hasattr(err, key):
                info[key] = getattr(err, key)
        print(dumps(info), file=sys.stderr)
        return 2
    except ArithmeticError as err:
        info = {"error": type(err).__name__, "message": str(err)}
        print(dumps(info), file=sys.stderr)
        return 2
    except (ConfigError, DomainError, ValueError) as err:
        print(f"superres: error: {err}", file=sys.stderr)
        return 1


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
