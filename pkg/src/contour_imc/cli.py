"""``contour-imc`` command line: run, compare and report.

Exit codes: 0 success, 1 configuration or input error, 2 synthesis failure,
3 contour assumption failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import (
    AssumptionFailure,
    ConfigError,
    DegenerateL,
    DomainError,
    Infeasible,
    MaxIterations,
    MonotonicityViolation,
    SingularSystem,
    SynthesisFailure,
)
from .plant import PlantDT, fitted_paper_plants, paper_plants
from .simulation import (
    CONTROLLERS,
    MASTER_MODES,
    Scenario,
    builtin_scenarios,
    read_csv,
    run_closed_loop,
    scenario_metrics,
    sweep,
    with_controller,
    write_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_SYNTHESIS, EXIT_ASSUMPTION = 0, 1, 2, 3


class ParseError(ConfigError):
    pass


def _float(v: str) -> float:
    try:
        return float(v)
    except ValueError:
        raise ConfigError(f"expected a number, got {v!r}") from None


def _int(v: str) -> int:
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"expected an integer, got {v!r}") from None


def _choice(options):
    def conv(v: str) -> str:
        if v not in options:
            raise ConfigError(f"expected one of {', '.join(options)}, got {v!r}")
        return v

    return conv


def _floats(v: str) -> List[float]:
    body = v.strip()
    if body.startswith("[") and body.endswith("]"):
        body = body[1:-1]
    try:
        return [float(x) for x in body.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"expected a list of numbers, got {v!r}") from None


# key -> converter; the value lands on the scenario in apply_overrides
SCHEMA = {
    "scenario": _choice(("sinusoid", "circle", "heart", "four_axis")),
    "Ts": _float,
    "horizon": _float,
    "master_mode": _choice(MASTER_MODES),
    "slave_controller": _choice(CONTROLLERS),
    "seed": _int,
    "plants": _choice(("fitted", "printed")),
    "gains.Kp": _float,
    "gains.Ki": _float,
    "gains.Kd": _float,
    "gains.Kx": _float,
    "gains.Ky": _float,
    "grid.N": _int,
    "grid.pad": _float,
    "observer.pole": _float,
    "solver.margin": _float,
    "schedule": _choice(("consistent", "frozen")),
}
for _axis in ("master", "slave"):
    for _m in ("G", "H", "C"):
        SCHEMA[f"{_axis}.plant.{_m}"] = _floats

GAIN_KEYS = {
    "gains.Kp": "Kp",
    "gains.Ki": "Ki",
    "gains.Kd": "Kd",
    "gains.Kx": "Kx",
    "gains.Ky": "Ky",
    "grid.N": "grid_N",
    "grid.pad": "grid_pad",
    "observer.pole": "observer_pole",
    "solver.margin": "lmi_margin",
    "schedule": "schedule",
}


def parse_pairs(lines: Sequence[str], source: str = "--set") -> Dict[str, object]:
    """``key = value`` lines into typed values; ``#`` starts a comment."""
    out: Dict[str, object] = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key = value, got {raw.strip()!r}")
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        try:
            out[key] = SCHEMA[key](val)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{n}: {key}: {exc}") from None
    return out


def load_config(path) -> Dict[str, object]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_pairs(text.splitlines(), str(path))


def _plant_override(base: PlantDT, values: Dict[str, object], axis: str) -> PlantDT:
    G = values.get(f"{axis}.plant.G")
    H = values.get(f"{axis}.plant.H")
    C = values.get(f"{axis}.plant.C")
    if G is None and H is None and C is None:
        return base
    n = base.n
    try:
        G = base.G2 if G is None else np.reshape(G, (n, n))
        H = base.H2 if H is None else np.reshape(H, n)
        C = base.C2 if C is None else np.reshape(C, n)
    except ValueError:
        raise ConfigError(f"{axis}.plant matrices must match a {n}-state model") from None
    return PlantDT(G, H, C, base.Ts)


def apply_overrides(sc: Scenario, values: Dict[str, object]) -> Scenario:
    gains = sc.gains
    gkw = {GAIN_KEYS[k]: v for k, v in values.items() if k in GAIN_KEYS}
    if gkw:
        gains = replace(gains, **gkw)
    kw = {k: values[k] for k in ("Ts", "horizon", "master_mode", "slave_controller", "seed") if k in values}
    Ts = kw.get("Ts", sc.Ts)
    plant_set = values.get("plants", "fitted")
    if plant_set == "fitted":
        plants = fitted_paper_plants(Ts)
    elif Ts != paper_plants()[0].Ts:
        raise ConfigError("the printed plant matrices are sampled at 1e-4 s; use plants = fitted to change Ts")
    else:
        plants = paper_plants()
    plants = tuple(_plant_override(p, values, ax) for p, ax in zip(plants, ("master", "slave")))
    return replace(sc, gains=gains, plants=plants, **kw)


def build_scenario(args) -> Scenario:
    values: Dict[str, object] = {}
    if args.config:
        values.update(load_config(args.config))
    values.update(parse_pairs(args.set or []))
    name = args.scenario or values.get("scenario", "sinusoid")
    scenarios = builtin_scenarios()
    if name not in scenarios:
        raise ConfigError(f"unknown scenario {name!r}")
    if args.ts is not None:
        values["Ts"] = args.ts
    if args.horizon is not None:
        values["horizon"] = args.horizon
    return apply_overrides(scenarios[name], values)


def _stem(sc: Scenario) -> str:
    return f"{sc.name}_{sc.slave_controller}"


def _summary(sc: Scenario, trace) -> Dict[str, object]:
    m = scenario_metrics(sc, trace)
    e2 = trace.columns["e2"]
    return {
        "scenario": sc.name,
        "controller": sc.slave_controller,
        "rms_um": m.rms,
        "max_um": m.max,
        "settling_index": m.settling_index,
        "samples": m.n_samples,
        "e2_abs_max_final_half": float(np.max(np.abs(e2[len(trace) // 2 :]))),
    }


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_run(args) -> int:
    sc = build_scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = run_closed_loop(sc)
    stem = _stem(sc)
    trace.to_csv(out / f"{stem}_trace.csv")
    _dump_json(out / f"{stem}_metrics.json", _summary(sc, trace))
    _dump_json(out / f"{stem}_synthesis.json", trace.metadata)
    print(f"wrote {out / (stem + '_trace.csv')} ({len(trace)} rows)")
    return EXIT_OK


def cmd_compare(args) -> int:
    controllers = [c for c in (args.controllers or "").split(",") if c]
    if not controllers:
        raise ConfigError("empty controller list")
    for c in controllers:
        if c not in CONTROLLERS:
            raise ConfigError(f"unknown controller {c!r}")
    names = [s for s in (args.scenarios or "").split(",") if s]
    if not names:
        names = [args.scenario or "sinusoid"]
    base_args = argparse.Namespace(**vars(args))
    runs = []
    for name in names:
        base_args.scenario = name
        sc = build_scenario(base_args)
        for c in controllers:
            if c == "ccc" and sc.contour.n_axes != 2:
                continue
            runs.append(with_controller(sc, c))
    traces = sweep(runs)
    rows = [_summary(sc, tr) for sc, tr in zip(runs, traces)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "compare.csv", "w") as fh:
        fh.write("scenario,controller,rms_um,max_um\n")
        for r in rows:
            fh.write(f"{r['scenario']},{r['controller']},{r['rms_um']:.17g},{r['max_um']:.17g}\n")
    lines = [f"{'scenario':<10} {'controller':<10} {'RMS (um)':>12} {'max (um)':>12}"]
    lines += [f"{r['scenario']:<10} {r['controller']:<10} {r['rms_um']:>12.4g} {r['max_um']:>12.4g}" for r in rows]
    (out / "compare.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def cmd_report(args) -> int:
    if not args.traces:
        raise ConfigError("no trace files given")
    if args.downsample < 1:
        raise ConfigError("downsample must be >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in args.traces:
        path = Path(path)
        if not path.is_file():
            raise ParseError(f"missing trace file {path}")
        try:
            header, data = read_csv(path)
        except ValueError as exc:
            raise ParseError(f"cannot parse {path}: {exc}") from None
        need = {"t", "x1", "contour_error"}
        if not need <= set(header) or data.shape[1] != len(header):
            raise ParseError(f"{path} is not a trace file")
        idx = {h: i for i, h in enumerate(header)}
        sel = data[:: args.downsample]
        y_cols = [h for h in header if h == "y2" or h.startswith("y2_")]
        stem = path.name[: -len("_trace.csv")] if path.name.endswith("_trace.csv") else path.stem
        write_csv(out / f"{stem}_path.csv", ["t", "x1"] + y_cols, sel[:, [idx["t"], idx["x1"]] + [idx[c] for c in y_cols]])
        write_csv(out / f"{stem}_error.csv", ["t", "contour_error"], sel[:, [idx["t"], idx["contour_error"]]])
        print(f"wrote {stem}_path.csv and {stem}_error.csv ({len(sel)} rows)")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are configuration errors; keep 2 for synthesis failures
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="contour-imc", description="Simulate master/slave contour following: run, compare and report.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", help="built-in scenario name")
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one key (repeatable)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--ts", type=float, help="sample time in seconds")
        sp.add_argument("--horizon", type=float, help="simulated time in seconds")

    run = sub.add_parser("run", help="simulate one scenario and write its trace")
    common(run)
    run.set_defaults(func=cmd_run)
    cmp_ = sub.add_parser("compare", help="RMS/max contour error table across controllers")
    common(cmp_)
    cmp_.add_argument("--scenarios", help="comma-separated scenario names")
    cmp_.add_argument("--controllers", default="pid,ccc,tvimcc", help="comma-separated controllers")
    cmp_.set_defaults(func=cmd_compare)
    rep = sub.add_parser("report", help="downsampled plot-ready series from trace files")
    rep.add_argument("traces", nargs="*")
    rep.add_argument("--out", default=".")
    rep.add_argument("--downsample", type=int, default=10)
    rep.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SynthesisFailure, Infeasible, MaxIterations, SingularSystem) as exc:
        print(f"synthesis failure: {exc}", file=sys.stderr)
        return EXIT_SYNTHESIS
    except (AssumptionFailure, MonotonicityViolation, DomainError, DegenerateL) as exc:
        print(f"assumption failure: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION


if __name__ == "__main__":
    sys.exit(main())
