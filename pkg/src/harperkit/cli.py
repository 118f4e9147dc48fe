"""Command-line front end.

    harperkit [--config PATH] [--out DIR] [--format csv|json] [--threads N] COMMAND

Every command reads one JSON config.  Common keys:

``potential``  ``{"fourier": [[k, re, im], ...], "rho": r}`` or ``{"amo": b}``
``frequency``  ``"golden"``, ``"silver"`` or a number in (0, 1)

Exit codes: 0 success, 2 configuration error, 3 a numerical gate failed,
4 no localized state / resonant phase refused, 5 reduction breakdown.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import cocycle, duality, moser_poschel, reducibility, spectrum
from .params import Frequency, Potential, resonant_phase_violations

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NOSTATE, EXIT_REDUCTION = 0, 2, 3, 4, 5


class ConfigError(ValueError):
    pass


class CommandFailure(RuntimeError):
    def __init__(self, code: int, message: str, payload: Optional[dict] = None):
        super().__init__(message)
        self.code = code
        self.payload = payload or {}


# ---------------------------------------------------------------------------
# config access
# ---------------------------------------------------------------------------


class RunConfig:
    """Validated view of a JSON config; every read names its field on error."""

    def __init__(self, data: dict, out: Path, fmt: str, threads: int):
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a JSON object")
        self.data = data
        self.out = out
        self.format = fmt
        self.threads = threads

    def num(self, key, default=None, lo=-math.inf, hi=math.inf, integer=False, required=False):
        if key not in self.data:
            if required or default is None:
                if required:
                    raise ConfigError(f"{key}: required")
                return None
            val = default
        else:
            val = self.data[key]
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {val!r}")
        if integer and int(val) != val:
            raise ConfigError(f"{key}: expected an integer, got {val!r}")
        if not math.isfinite(val) or not (lo <= val <= hi):
            raise ConfigError(f"{key}: {val!r} outside [{lo}, {hi}]")
        return int(val) if integer else float(val)

    def flag(self, key, default=False) -> bool:
        val = self.data.get(key, default)
        if not isinstance(val, bool):
            raise ConfigError(f"{key}: expected true/false")
        return val

    def nums(self, key, default=None, lo=-math.inf, hi=math.inf, min_len=1):
        val = self.data.get(key, default)
        if val is None:
            raise ConfigError(f"{key}: required")
        if not isinstance(val, list) or len(val) < min_len:
            raise ConfigError(f"{key}: expected a list of at least {min_len} numbers")
        out = []
        for x in val:
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not (lo <= x <= hi):
                raise ConfigError(f"{key}: bad entry {x!r}")
            out.append(float(x))
        return out

    def grid(self, key="grid", default=(-3.0, 3.0, 601)) -> np.ndarray:
        val = self.data.get(key)
        if val is None:
            lo, hi, n = default
        elif isinstance(val, dict):
            try:
                lo, hi, n = val["lo"], val["hi"], val["points"]
            except KeyError as e:
                raise ConfigError(f"{key}: missing {e.args[0]}") from None
        elif isinstance(val, list):
            g = self.nums(key, min_len=1)
            if any(b <= a for a, b in zip(g, g[1:])):
                raise ConfigError(f"{key}: explicit grids must be strictly increasing")
            return np.array(g)
        else:
            raise ConfigError(f"{key}: expected {{lo, hi, points}} or a list")
        for name, x in (("lo", lo), ("hi", hi), ("points", n)):
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
                raise ConfigError(f"{key}.{name}: expected a number")
        if int(n) != n or n < 2 or n > 1_000_000:
            raise ConfigError(f"{key}.points: expected an integer in [2, 1000000]")
        if not hi > lo:
            raise ConfigError(f"{key}: hi must exceed lo")
        return np.linspace(float(lo), float(hi), int(n))

    def potential(self, key="potential", default=None) -> Potential:
        val = self.data.get(key, default)
        if val is None:
            raise ConfigError(f"{key}: required")
        try:
            if isinstance(val, dict) and "amo" in val:
                b = val["amo"]
                if isinstance(b, bool) or not isinstance(b, (int, float)):
                    raise ValueError("amo coupling must be a number")
                return Potential.cosine(float(b), rho=float(val.get("rho", 1.0)))
            if isinstance(val, dict):
                return Potential.from_json(val)
        except (ValueError, TypeError) as e:
            raise ConfigError(f"{key}: {e}") from None
        raise ConfigError(f"{key}: expected an object")

    def frequency(self, key="frequency") -> Frequency:
        val = self.data.get(key, "golden")
        try:
            f = Frequency.from_spec(val)
        except (ValueError, TypeError) as e:
            raise ConfigError(f"{key}: {e}") from None
        return f


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def fmt_num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    return x


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=1, sort_keys=False) + "\n")


def write_table(cfg: RunConfig, stem: str, header, rows) -> Path:
    """Write rows as CSV (default) or as a JSON list of records."""
    rows = list(rows)
    if cfg.format == "json":
        path = cfg.out / f"{stem}.json"
        write_json(path, [dict(zip(header, r)) for r in rows])
        return path
    path = cfg.out / f"{stem}.csv"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt_num(v) for v in r])
    path.write_text(buf.getvalue())
    return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_scan(cfg: RunConfig) -> dict:
    V = cfg.potential()
    W = cfg.potential("hopping", default=spectrum.TWO_COS.to_json())
    om = cfg.frequency()
    grid = cfg.grid()
    N = cfg.num("N", 2000, 8, 1_000_000, integer=True)
    phases = cfg.nums("phases", list(spectrum.DEFAULT_PHASES))
    steps = cfg.num("steps", 100_000, 2, 10**9, integer=True)
    kmax = cfg.num("kmax", 20, 0, 10_000, integer=True)
    label_tol = cfg.num("label_tol", 2e-3, 0, 0.5)
    plateau_tol = cfg.num("plateau_tol", spectrum.default_plateau_tol(N), 0, 1)
    use_cocycle = cfg.flag("cocycle", spectrum.is_two_cos(W))
    if use_cocycle and not spectrum.is_two_cos(W):
        raise ConfigError("cocycle: only available for the Schrödinger hopping 2cos")
    s = spectrum.scan(W, V, om, grid, N, phases, cocycle=use_cocycle, steps=steps, threads=cfg.threads)
    if np.any(np.diff(s.ids) < 0):
        raise CommandFailure(EXIT_NUMERIC, "ids is not monotone")
    gaps = spectrum.find_gaps(s, plateau_tol, omega=om, kmax=kmax, label_tol=label_tol)
    write_table(cfg, "scan", ["a", "ids", "ids_err", "lyap", "rot"], s.rows())
    write_json(cfg.out / "gaps.json", [g.to_json() for g in gaps])
    return {"gaps": len(gaps)}


def cmd_bloch(cfg: RunConfig) -> dict:
    V = cfg.potential()
    om = cfg.frequency()
    phi = cfg.num("phi", required=True)
    N = cfg.num("N", 400, 8, (duality.DENSE_CAP - 1) // 2, integer=True)
    thr = cfg.num("decay_threshold", 0.1, 0, math.inf)
    tau = cfg.num("tau", 2.0, 1e-3, 100)
    kmax = cfg.num("kmax", 50, 1, 10**6, integer=True)
    rtol = cfg.num("resonance_tol", 1e-8, 0, 1)
    allow = cfg.flag("allow_resonant") or cfg.data.get("_allow_resonant_cli", False)
    viol = resonant_phase_violations(phi, om, tau, kmax)
    dep = reducibility.dependence_test(phi, om, rtol)
    report = {"phi": phi, "violations": viol,
              "resonance": {"dependent": dep.dependent, "k": dep.k, "j": dep.j}}
    if dep.dependent and not allow:
        raise CommandFailure(EXIT_NOSTATE,
                             f"phi = pi*({dep.j}) + pi*({dep.k})*omega is resonant; "
                             "pass --allow-resonant to emit gap-edge states", report)
    states = duality.localized_states(V, om, phi, N, thr)
    if not states:
        raise CommandFailure(EXIT_NOSTATE, "no eigenvector passed the localization gate "
                             "(|V|_rho may be too large or N too small)", report)
    report["states"] = [w.to_json() for _, w in states]
    write_json(cfg.out / "bloch.json", report)
    return {"states": len(states), "max_residual": max(w.residual for _, w in states)}


def _load_wave(cfg: RunConfig, V, om):
    if "bloch_file" in cfg.data:
        path = Path(cfg.data["bloch_file"])
        try:
            rec = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"bloch_file: {e}") from None
        states = rec.get("states", rec if isinstance(rec, list) else [])
        waves = [duality.BlochWave.from_json(s) for s in states]
    else:
        phi = cfg.num("phi", required=True)
        N = cfg.num("N", 400, 8, (duality.DENSE_CAP - 1) // 2, integer=True)
        waves = [w for _, w in duality.localized_states(V, om, phi, N, cfg.num("decay_threshold", 0.1, 0))]
    if not waves:
        raise CommandFailure(EXIT_NOSTATE, "no localized state available")
    if "energy" in cfg.data:
        e = cfg.num("energy")
        return min(waves, key=lambda w: abs(w.a - e))
    idx = cfg.num("index", 0, -len(waves), len(waves) - 1, integer=True)
    return waves[idx]


def _reduction(cfg: RunConfig, V, om, w):
    M = cfg.num("M", 256, 16, 1 << 16, integer=True)
    Kcut = cfg.num("Kcut", 256, 1, 1 << 15, integer=True)
    Mres = cfg.num("M_resonant", max(1024, 4 * Kcut), 2 * Kcut + 1, 1 << 18, integer=True)
    rtol = cfg.num("resonance_tol", 1e-8, 0, 1)
    try:
        if reducibility.dependence_test(w.phi, om, rtol).dependent:
            f = reducibility.real_solution(w, om, rtol)
            return reducibility.resonant_reduce(f, V, om, w.a, M=Mres, Kcut=Kcut)
        return reducibility.realify(reducibility.build_y(w, V, om, M))
    except reducibility.ReductionError as e:
        raise CommandFailure(EXIT_REDUCTION, f"{type(e).__name__}: {e}",
                             {"error": type(e).__name__, **e.payload}) from None


def cmd_reduce(cfg: RunConfig) -> dict:
    V = cfg.potential()
    om = cfg.frequency()
    w = _load_wave(cfg, V, om)
    conj = _reduction(cfg, V, om, w)
    gate = cfg.num("residual_gate", 1e-6 if conj.kind == "Rotation" else 1e-5, 0)
    check = reducibility.verify_conjugation(conj)
    rec = conj.to_json()
    rec["verify"] = check
    if conj.kind == "Rotation":
        rec["winding"] = reducibility.winding_degree(conj.zfunc)
    write_json(cfg.out / "conjugation.json", rec)
    if not (check["max"] <= gate and conj.detStats[1] <= 1e-6):
        raise CommandFailure(EXIT_NUMERIC, f"conjugation residual {check['max']:.3g} above gate {gate:.3g}")
    return {"kind": conj.kind, "residual": check["max"]}


def cmd_mp(cfg: RunConfig) -> dict:
    V = cfg.potential()
    om = cfg.frequency()
    W = cfg.potential("W", default={"fourier": [[0, 1.0, 0.0]]})
    cfg.data.setdefault("phi", 0.0)
    if "energy" not in cfg.data and "index" not in cfg.data:
        raise ConfigError("energy: required (approximate gap-edge energy)")
    w = _load_wave(cfg, V, om)
    conj = _reduction(cfg, V, om, w)
    if conj.kind != "Triangular":
        raise ConfigError("phi: mp needs a resonant phase (pi*j + pi*k*omega with k, j even)")
    al = cfg.grid("alphas", default=(1e-6, 1e-3, 7))
    if np.any(al <= 0):
        raise ConfigError("alphas: must be positive")
    steps = cfg.num("steps", 1_000_000, 1000, 10**9, integer=True)
    burn = cfg.num("burn", 100_000, 0, 10**9, integer=True)
    M = cfg.num("M_avg", 1024, 256, 1 << 18, integer=True)
    rep = moser_poschel.analyze(conj.c, moser_poschel.averages(conj, W, M), (float(al.min()), float(al.max())))
    plus = moser_poschel.potential_sweep(V, W, om, conj.a, al, steps, burn)
    minus = moser_poschel.potential_sweep(V, W, om, conj.a, -al, steps, burn)
    gap, spec_side = (plus, minus) if rep.predictedGapSide != "Left" else (minus, plus)
    fits = {}
    for name, sw, vals in (("gamma", gap, gap.gamma), ("rot", spec_side, spec_side.drot)):
        try:
            fits[name] = moser_poschel.sqrt_fit(np.c_[sw.alpha, vals]).__dict__
        except ValueError as e:
            fits[name] = {"error": str(e)}
    rows = [(float(x), float(g), float(r), float(d)) for sw in (minus, plus)
            for x, g, r, d in zip(sw.alpha, sw.gamma, sw.rot, sw.drot)]
    rows.sort()
    write_table(cfg, "mp_sweep", ["alpha", "gamma", "rot", "drot"], rows)
    out = rep.to_json()
    out.update({"a": conj.a, "residual": conj.residual, "fits": fits})
    write_json(cfg.out / "mp_report.json", out)
    if conj.residual > cfg.num("residual_gate", 1e-5, 0):
        raise CommandFailure(EXIT_NUMERIC, f"triangular reduction residual {conj.residual:.3g} above gate")
    return {"c": conj.c, "dichotomy": rep.dichotomy}


def cmd_duality(cfg: RunConfig) -> dict:
    V = cfg.potential()
    om = cfg.frequency()
    grid = cfg.grid(default=(-3.0, 3.0, 101))
    N = cfg.num("N", 400, 8, 1_000_000, integer=True)
    phases = cfg.nums("phases", list(spectrum.DEFAULT_PHASES))
    kh, kl = duality.ids_duality_table(V, om, grid, N, phases)
    diff = np.abs(kh - kl)
    write_table(cfg, "duality", ["a", "ids_H", "ids_L", "diff"], zip(grid, kh, kl, diff))
    print(f"max_discrepancy={fmt_num(diff.max())}")
    return {"max_discrepancy": float(diff.max())}


def cmd_classify(cfg: RunConfig) -> dict:
    V = cfg.potential()
    om = cfg.frequency()
    energies = cfg.nums("energies")
    h = cfg.nums("h", [1e-2, 3e-3, 1e-3, 3e-4, 1e-4], 0, math.inf, min_len=3)
    method = cfg.data.get("method", "rotation")
    if method not in ("rotation", "count"):
        raise ConfigError("method: expected 'rotation' or 'count'")
    ctx = spectrum.IDSContext(V, om, method=method,
                              N=cfg.num("N", 2000, 8, 10**6, integer=True),
                              steps=cfg.num("steps", 400_000, 100, 10**9, integer=True))
    try:
        recs = []
        for a in energies:
            r = spectrum.classify_energy(a, V, om, h, ctx)
            recs.append({"a": a, "kind": r.kind, "exponent": r.exponent, "r2": r.r2,
                         "h": list(r.h), "delta": list(r.delta)})
    except ValueError as e:
        raise ConfigError(f"h: {e}") from None
    write_json(cfg.out / "classify.json", recs)
    return {"classified": len(recs)}


def _orbit_table(cfg: RunConfig, key: str) -> dict:
    V = cfg.potential()
    om = cfg.frequency()
    grid = cfg.grid(default=(-3.0, 3.0, 61))
    steps = cfg.num("steps", 100_000, 2, 10**10, integer=True)
    burn = cfg.num("burn", 0, 0, 10**10, integer=True)
    nph = cfg.num("phases", 1, 1, 4096, integer=True)
    thetas = cocycle.phase_average_thetas(nph) if nph > 1 else [cfg.num("theta0", 0.0)]
    st = cocycle.orbit_stats_grid(V, om, grid, thetas, steps, burn)
    write_table(cfg, key, ["a", key, "err"], zip(grid, st["lyap" if key == "lyapunov" else "rot"], st["err"]))
    return {"points": len(grid)}


def cmd_lyapunov(cfg: RunConfig) -> dict:
    return _orbit_table(cfg, "lyapunov")


def cmd_rotation(cfg: RunConfig) -> dict:
    return _orbit_table(cfg, "rotation")


COMMANDS: dict[str, Callable[[RunConfig], dict]] = {
    "scan": cmd_scan,
    "bloch": cmd_bloch,
    "reduce": cmd_reduce,
    "mp": cmd_mp,
    "duality": cmd_duality,
    "classify": cmd_classify,
    "lyapunov": cmd_lyapunov,
    "rotation": cmd_rotation,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="JSON config file")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="harperkit", description=__doc__.split("\n\n")[0],
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "bloch":
            sp.add_argument("--allow-resonant", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    config = getattr(args, "config", None)
    out = getattr(args, "out", Path("."))
    fmt = getattr(args, "format", "csv")
    threads = getattr(args, "threads", 1)
    try:
        if threads < 1:
            raise ConfigError("--threads: must be >= 1")
        if config is None:
            raise ConfigError("--config: required")
        try:
            data = json.loads(Path(config).read_text())
        except OSError as e:
            raise ConfigError(f"--config: {e}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"--config: malformed JSON ({e})") from None
        if getattr(args, "allow_resonant", False) and isinstance(data, dict):
            data["_allow_resonant_cli"] = True
        out.mkdir(parents=True, exist_ok=True)
        cfg = RunConfig(data, out, fmt, threads)
        summary = COMMANDS[args.command](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CommandFailure as e:
        if e.payload:
            write_json(out / "failure.json", {"message": str(e), **e.payload})
        print(f"{args.command}: {e}", file=sys.stderr)
        return e.code
    except (FloatingPointError, np.linalg.LinAlgError, duality.NonConvergence) as e:
        print(f"{args.command}: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    print(" ".join(f"{k}={fmt_num(v) if not isinstance(v, str) else v}" for k, v in summary.items()))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
