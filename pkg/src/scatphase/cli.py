"""Command-line drivers: forward, spectrum, invert, catastrophe, phase-recon, family.

Each run reads an optional YAML config, writes one CSV (17 significant
digits, written atomically) plus ``manifest.json`` in the output directory.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from . import __version__, config
from .config import ConfigError, RunConfig
from .dispersion import transmission_phase
from .errors import GridError, InvalidDataError, ScatteringError, ScatteringWarning
from .forward import ScatteringData, born2_from_samples, born_split, scattering_matrix
from .marchenko import (accumulation_demo, build_kernel, kernel_from_scattering, kernel_t_grid,
                        solve_marchenko)
from .numgrid import Grid, family_metrics
from .phase_recon import (aligned_k_grid, degeneracy, potential_sup_bound, q_representation_iterate,
                          r_terms, uv_bound_check, uv_system)
from .potential import CATALOG, Potential
from .spectrum import BoundStateSet, bound_states, norming_constants

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

CONVENTIONS = {
    "fourier_transform": "F(k) = int f(x) exp(-ikx) dx; x_j = -L + j h, k_m = pi m / L",
    "born_transform": "Q(k) = int q(x) exp(+2ikx) dx",
    "scattering_labels": "s11 = s22 = transmission; s21 = right reflection (Marchenko input)",
    "recovery_sign": "q(x) = -2 d/dx K(x, x)",
}


# --- output -----------------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    atomic_write(path, buf.getvalue())


def _columns(cols: dict) -> tuple[list, list]:
    header = list(cols)
    arrays = [np.asarray(c) for c in cols.values()]
    return header, list(zip(*arrays))


# --- inputs -----------------------------------------------------------------------------------

def make_grid(cfg: RunConfig) -> Grid:
    return Grid(cfg.grid["L"], cfg.grid["N"])


def make_k_grid(cfg: RunConfig) -> np.ndarray:
    b = cfg.band
    return np.linspace(b["k_min"], b["k_max"], b["n_k"])


def _as_list(v, what: str) -> list[float]:
    arr = np.atleast_1d(np.asarray(v, dtype=float)) if v is not None else np.empty(0)
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{what} must be a number or a list of numbers")
    return [float(a) for a in arr]


def soliton_set(params: dict) -> BoundStateSet:
    """soliton_data(kappa, M): decay rates and norming constants of a reflectionless potential."""
    if set(params) - {"kappa", "M"}:
        raise ConfigError(f"soliton_data takes kappa and M, got {sorted(params)}")
    try:
        kap = _as_list(params.get("kappa", []), "soliton_data.kappa")
        mj = _as_list(params.get("M", [2.0 * k for k in kap]), "soliton_data.M")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"soliton_data: {exc}") from None
    if len(kap) != len(mj):
        raise ConfigError("soliton_data needs one M per kappa")
    order = np.argsort(kap)
    try:
        return BoundStateSet(np.asarray(kap)[order], np.asarray(mj)[order])
    except ValueError as exc:
        raise ConfigError(f"soliton_data: {exc}") from None


def read_potential_csv(path: str, grid: Grid) -> Potential:
    """Two-column (x, q) CSV resampled to the grid by a cubic spline; zero outside the data."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"potential file not found: {path}")
    try:
        data = np.loadtxt(p, delimiter=",", comments="#", ndmin=2, skiprows=_header_rows(p))
    except ValueError as exc:
        raise ConfigError(f"malformed potential file {path}: {exc}") from None
    if data.shape[1] != 2 or data.shape[0] < 4:
        raise ConfigError(f"potential file {path} must have two columns (x, q) and at least 4 rows")
    if not np.all(np.isfinite(data)):
        raise ConfigError(f"potential file {path} contains non-finite values")
    xd, qd = data[:, 0], data[:, 1]
    if np.any(np.diff(xd) <= 0):
        raise ConfigError(f"potential file {path}: x must be strictly increasing")
    spline = CubicSpline(xd, qd)
    x = grid.x
    inside = (x >= xd[0]) & (x <= xd[-1])
    if not inside.all():
        warnings.warn(f"potential data cover [{xd[0]:.6g}, {xd[-1]:.6g}]; zero-filled outside",
                      ScatteringWarning, stacklevel=2)

    def func(s):
        s = np.asarray(s, dtype=float)
        return np.where((s >= xd[0]) & (s <= xd[-1]), spline(np.clip(s, xd[0], xd[-1])), 0.0)

    try:
        return Potential.from_function(grid, func, name=p.name, params={"path": str(path)})
    except GridError as exc:
        raise ConfigError(str(exc)) from None


def _header_rows(p: Path) -> int:
    with p.open() as fh:
        first = fh.readline()
    try:
        [float(t) for t in first.split(",")]
        return 0
    except ValueError:
        return 1


def _soliton_potential(B: BoundStateSet, grid: Grid) -> Potential:
    sol = solve_marchenko(build_kernel(B, kernel_t_grid(grid)), grid, method="separable")
    return Potential.from_samples(grid, sol.q.values.real, name="soliton_data")


def make_potential(cfg: RunConfig, grid: Grid) -> Potential:
    pot = cfg.potential
    if "path" in pot:
        return read_potential_csv(pot["path"], grid)
    name, params = pot["builtin"], pot.get("params", {})
    if name == "soliton_data":
        return _soliton_potential(soliton_set(params), grid)
    try:
        return CATALOG[name](grid, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for builtin {name!r}: {exc}") from None
    except GridError as exc:
        raise ConfigError(f"builtin {name!r} does not fit the grid: {exc}") from None


def _soliton_scattering(B: BoundStateSet, k: np.ndarray) -> ScatteringData:
    s11 = np.ones(k.size, dtype=complex)
    for kap in B.kappas:
        s11 *= (k + 1j * kap) / (k - 1j * kap)
    z = np.zeros(k.size, dtype=complex)
    delta = np.unwrap(np.angle(s11)[::-1])[::-1]
    return ScatteringData(k, s11, z, z.copy(), s11.copy(), delta)


def read_scattering_csv(path: str) -> tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """(k, s21, s12 or None) from a CSV with header k, re_s21, im_s21[, re_s12, im_s12]."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"scattering data file not found: {path}")
    with p.open() as fh:
        header = [h.strip() for h in fh.readline().split(",")]
    need = ["k", "re_s21", "im_s21"]
    if any(n not in header for n in need):
        raise ConfigError(f"scattering data {path} needs columns {need}")
    try:
        data = np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise ConfigError(f"malformed scattering data {path}: {exc}") from None
    col = {h: data[:, i] for i, h in enumerate(header)}
    k = col["k"]
    if k.size < 4 or np.any(np.diff(k) <= 0) or k[0] <= 0:
        raise ConfigError(f"scattering data {path}: k must be positive and increasing (>= 4 rows)")
    s21 = col["re_s21"] + 1j * col["im_s21"]
    s12 = col["re_s12"] + 1j * col["im_s12"] if "re_s12" in col and "im_s12" in col else None
    return k, s21, s12


# --- commands ---------------------------------------------------------------------------------

def cmd_forward(cfg: RunConfig, out: Path) -> list[Path]:
    grid = make_grid(cfg)
    k = make_k_grid(cfg)
    if cfg.potential.get("builtin") == "soliton_data":
        S = _soliton_scattering(soliton_set(cfg.potential.get("params", {})), k)
    else:
        S = scattering_matrix(make_potential(cfg, grid), k)
    P = transmission_phase(S)
    unit = np.abs(np.abs(S.s11) ** 2 + np.abs(S.s12) ** 2 - 1.0)
    header, rows = _columns({
        "k": k,
        "re_s11": S.s11.real, "im_s11": S.s11.imag,
        "re_s12": S.s12.real, "im_s12": S.s12.imag,
        "re_s21": S.s21.real, "im_s21": S.s21.imag,
        "re_s22": S.s22.real, "im_s22": S.s22.imag,
        "delta_unwrapped": P.delta,
        "unitarity_residual": unit,
    })
    path = out / "forward.csv"
    write_csv(path, header, rows)
    return [path]


def cmd_spectrum(cfg: RunConfig, out: Path) -> list[Path]:
    grid = make_grid(cfg)
    if cfg.potential.get("builtin") == "soliton_data":
        B = soliton_set(cfg.potential.get("params", {}))
    else:
        q = make_potential(cfg, grid)
        B = norming_constants(q, bound_states(q))
    norming = B.norming if B.norming is not None else np.full(B.count, np.nan)
    path = out / "spectrum.csv"
    write_csv(path, ["kappa", "energy", "norming"], zip(B.kappas, B.energies, norming))
    return [path]


def cmd_invert(cfg: RunConfig, out: Path) -> list[Path]:
    grid = make_grid(cfg)
    opts = cfg.options
    tol = cfg.tolerances
    if "data" in opts:
        k, s21, s12 = read_scattering_csv(str(opts["data"]))
        refl = np.abs(s21) if s12 is None else np.maximum(np.abs(s21), np.abs(s12))
        if np.any(refl >= 1.0):
            raise InvalidDataError("reflection modulus >= 1 in the scattering data: non-physical input")
        B = soliton_set(opts.get("bound_states", {}) or {})
        K = kernel_from_scattering(s21, k, B, grid)
    elif cfg.potential.get("builtin") == "soliton_data":
        B = soliton_set(cfg.potential.get("params", {}))
        K = build_kernel(B, kernel_t_grid(grid))
    else:
        # synthetic data: forward-scatter the configured potential, then invert
        q = make_potential(cfg, grid)
        k = make_k_grid(cfg)
        S = scattering_matrix(q, k)
        B = norming_constants(q, bound_states(q)) if not q.is_zero else BoundStateSet.empty()
        K = kernel_from_scattering(S.s21, k, B, grid)
    sol = solve_marchenko(K, grid, tol=tol["marchenko_tol"], tail_rel=tol["tail_rel"],
                          method=str(opts.get("method", "auto")))
    path = out / "invert.csv"
    write_csv(path, ["x", "q"], zip(sol.x, sol.q.values.real))
    return [path]


def _n_list(opts: dict, default) -> list[int]:
    raw = opts.get("n_list", default)
    try:
        n = [int(v) for v in np.atleast_1d(raw)]
    except (TypeError, ValueError):
        raise ConfigError("options.n_list must be a list of positive integers") from None
    if not n or any(v < 1 for v in n) or any(b <= a for a, b in zip(n, n[1:])):
        raise ConfigError("options.n_list must be increasing positive integers")
    return n


def _kappa_seq(opts: dict):
    raw = opts.get("kappa_seq", "one_minus_two_pow")
    if raw == "one_minus_two_pow":
        return lambda j: 1.0 - 2.0 ** (-j)
    return _as_list(raw, "options.kappa_seq")


def cmd_catastrophe(cfg: RunConfig, out: Path) -> list[Path]:
    grid = make_grid(cfg)
    opts = cfg.options
    mode = opts.get("mode", "accumulation")
    if mode == "family":
        return _family(cfg, out, "catastrophe.csv")
    if mode != "accumulation":
        raise ConfigError("options.mode must be 'accumulation' or 'family'")
    n_list = _n_list(opts, [1, 2, 4, 8])
    try:
        rows = accumulation_demo(_kappa_seq(opts), n_list, grid, gap_tol=cfg.tolerances["gap_tol"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    keys = ["n", "sup_q", "sup_dq", "l2_norm", "min_gap", "alarm"]
    path = out / "catastrophe.csv"
    write_csv(path, keys, ([r[c] for c in keys] for r in rows))
    return [path]


def _family(cfg: RunConfig, out: Path, name: str) -> list[Path]:
    rows = family_metrics(_n_list(cfg.options, [1, 2, 4, 8, 16]), make_grid(cfg))
    keys = ["n", "l2_norm", "grad_l2", "sup_abs", "sup_grad"]
    path = out / name
    write_csv(path, keys, ([r[c] for c in keys] for r in rows))
    return [path]


def cmd_family(cfg: RunConfig, out: Path) -> list[Path]:
    return _family(cfg, out, "family.csv")


def cmd_phase_recon(cfg: RunConfig, out: Path) -> list[Path]:
    grid = make_grid(cfg)
    opts = cfg.options
    tol = cfg.tolerances
    system = str(opts.get("system", "derived"))
    i_terms = str(opts.get("i_terms", "born2"))
    if i_terms not in ("born2", "exact"):
        raise ConfigError("options.i_terms must be 'born2' or 'exact'")
    q = make_potential(cfg, grid)
    k = make_k_grid(cfg)
    S = scattering_matrix(q, k)
    split = born_split(q, S)
    phi = 2.0 * transmission_phase(S).delta
    if i_terms == "exact":
        i12, i21 = split.i12, split.i21
    else:
        i12, i21 = born2_from_samples(q.values, grid.x, grid.h, k)
    try:
        r12, r21 = r_terms(i12, i21, phi, str(opts.get("reading", "derived")))
        sys_ = uv_system(k, phi, r12, r21, system, tol["sin_floor"], tol["tikhonov"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    dev = np.abs(sys_.q2k - split.qhat2k)
    header, rows = _columns({
        "k": k, "phi": phi, "r12": r12, "r21": r21, "u": sys_.u, "v": sys_.v,
        "re_qhat2k": split.qhat2k.real, "im_qhat2k": split.qhat2k.imag,
        "uv_vs_qhat": dev,
        "degeneracy": degeneracy(phi, "derived" if system == "derived" else "literal"),
        "phase_singular": sys_.singular,
    })
    paths = [out / "phase_recon.csv"]
    write_csv(paths[0], header, rows)
    rep = uv_bound_check(sys_)
    sup_bound = potential_sup_bound(split.i12, split.i21, k)
    paths.append(out / "phase_recon_bounds.csv")
    write_csv(paths[1], ["margin_u", "margin_v", "constant", "gradient_share", "sup_q", "sup_bound",
                         "max_uv_vs_qhat", "singular_count"],
              [[rep.margin_u, rep.margin_v, rep.constant, rep.gradient_share,
                float(np.max(np.abs(q.values))), sup_bound, float(np.max(dev)), int(sys_.singular.sum())]])
    if opts.get("iterate", False):
        ka = aligned_k_grid(cfg.band["k_max"], cfg.band["n_k"])
        B = bound_states(q) if not q.is_zero else BoundStateSet.empty()
        res = q_representation_iterate(q, B, tol=float(opts.get("iter_tol", 1e-8)),
                                       max_iter=int(opts.get("max_iter", 10)), k_grid=ka,
                                       damping=tol["damping"], sin_floor=tol["sin_floor"])
        hist = res.residual_history
        paths.append(out / "iteration.csv")
        write_csv(paths[-1], ["iteration", "residual", "converged", "reason"],
                  [[i + 1, r, res.converged, res.reason] for i, r in enumerate(hist)])
    return paths


COMMAND_TABLE = {
    "forward": cmd_forward,
    "spectrum": cmd_spectrum,
    "invert": cmd_invert,
    "catastrophe": cmd_catastrophe,
    "phase-recon": cmd_phase_recon,
    "family": cmd_family,
}


# --- entry point ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scatphase", description="1D scattering: forward, inverse and phase experiments")
    ap.add_argument("command", choices=list(COMMAND_TABLE), help="experiment to run")
    ap.add_argument("--config", help="YAML run configuration")
    ap.add_argument("--out", help="output directory (default: config 'out' or ./out)")
    ap.add_argument("--grid-L", type=float, dest="grid_L", help="grid half width L")
    ap.add_argument("--grid-N", type=int, dest="grid_N", help="number of grid points (power of two)")
    ap.add_argument("--kmax", type=float, help="upper end of the k band")
    ap.add_argument("--nk", type=int, help="number of k samples")
    ap.add_argument("--tol-override", action="append", default=[], metavar="KEY=VAL",
                    help="override a tolerance (repeatable)")
    ap.add_argument("--seed", type=int, help="seed for randomized test data")
    return ap


def _overrides(args: argparse.Namespace) -> dict:
    ov: dict = {"grid": {}, "band": {}, "tolerances": {}, "out": args.out, "seed": args.seed}
    if args.grid_L is not None:
        ov["grid"]["L"] = args.grid_L
    if args.grid_N is not None:
        ov["grid"]["N"] = args.grid_N
    if args.kmax is not None:
        ov["band"]["k_max"] = args.kmax
    if args.nk is not None:
        ov["band"]["n_k"] = args.nk
    for item in args.tol_override:
        key, val = config.parse_override(item)
        ov["tolerances"][key] = val
    return ov


def _manifest(cfg_echo, status: str, code: int, error: Optional[str], outputs, wall: float, caught) -> dict:
    msgs = []
    for w in caught:
        m = f"{w.category.__name__}: {w.message}"
        if m not in msgs:
            msgs.append(m)
    return {
        "status": status,
        "exit_code": code,
        "error": error,
        "config": cfg_echo,
        "version": __version__,
        "conventions": {**CONVENTIONS, "calibrated_C": config.CALIBRATED_C},
        "outputs": [str(p) for p in outputs],
        "wall_time_s": wall,
        "warnings": msgs,
    }


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    out = Path(args.out or "out")
    cfg_echo: dict = {"command": args.command, "config_path": args.config}
    outputs: list = []
    code, status, error = EXIT_OK, "ok", None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            cfg = config.load_config(args.config, args.command, _overrides(args))
            out = Path(cfg.out)
            cfg_echo = cfg.echo()
            np.random.seed(cfg.seed)
            with np.errstate(over="ignore"):
                outputs = COMMAND_TABLE[args.command](cfg, out)
        except (ConfigError, GridError) as exc:
            code, status, error = EXIT_CONFIG, "config_error", str(exc)
        except (ScatteringError, np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
            code, status, error = EXIT_NUMERIC, "numeric_failure", f"{type(exc).__name__}: {exc}"
        except Exception as exc:  # anything else is reported as a numerical failure
            code, status, error = EXIT_NUMERIC, "numeric_failure", f"{type(exc).__name__}: {exc}"
    if error:
        print(f"scatphase {args.command}: {error}", file=sys.stderr)
    manifest = _manifest(cfg_echo, status, code, error, outputs, time.perf_counter() - t0, caught)
    try:
        atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, default=str) + "\n")
    except OSError as exc:
        print(f"scatphase: could not write manifest: {exc}", file=sys.stderr)
        if code == EXIT_OK:
            code = EXIT_CONFIG
    return code


if __name__ == "__main__":
    sys.exit(main())
