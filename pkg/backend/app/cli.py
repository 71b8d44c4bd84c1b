"""
Command-line front end.

    python -m app.cli build family-b --n-max 4
    python -m app.cli verify tq --n 5 --m 5
    python -m app.cli probe sensitivity --system cat-map --depth 12 --seed 7
    python -m app.cli probe orbit --system cat-map --point 1/5,2/5

Exit codes: 0 success (probes always, whatever the verdict), 1 a verification
that was not Established, 2 bad parameters or an unknown system.
"""

import argparse
import logging
import sys
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .config import configure_logging, load_config_file, resolve
from .diagnostics import (
    default_start,
    halo_dichotomy_probe,
    naive_sensitivity_demo,
    probe_dpo,
    probe_orbit,
    probe_sensitivity,
    probe_transitivity,
)
from .exact import parse_point, rat, rat_to_str
from .exceptions import BadParams, PseudodynError, SearchFailed, UnknownSystem, VerificationFailed
from .pseudogroup import BiSeq, CantorPoint, LevelPoint, LinePoint
from .regions import FULL, IntervalSet, LevelRegion
from .schemas import SCHEMA_VERSION, ProbeReport, RunConfig, Verdict
from .systems import SYSTEM_NAMES, BuiltSystem, FamilyAData, FamilyBData, build_system, level_slice
from .utils.serialization import write_csv, write_json
from .verification import LEMMAS, verify

logger = logging.getLogger(__name__)

PROBES = ("transitivity", "dpo", "sensitivity", "halo", "naive-demo", "orbit")

# flag dest -> keyword of the lemma check
LEMMA_FLAGS: Dict[str, Dict[str, str]] = {
    "tq": {"n": "n", "m": "m"},
    "finiteorbits": {"n_max": "n_max"},
    "gna": {"period": "period", "levels": "levels", "count": "count"},
    "radii": {"n_max": "n_max", "seed": "seed", "probes": "probes"},
    "isometry-b": {"n_max": "n_max"},
    "isometry-a": {"m_max": "m_max", "depth": "depth", "seed": "seed"},
    "cantor-mu": {"levels": "levels"},
    "dpo-rz": {"samples": "samples"},
}

SYSTEM_FLAGS = ("n_max", "m_max", "h", "v", "step", "radius_cap")


def _fraction_list(text: str) -> List[Fraction]:
    try:
        return [rat(part.strip()) for part in text.split(",") if part.strip()]
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"expected comma-separated rationals, got {text!r}") from None


def _fraction(text: str) -> Fraction:
    try:
        return rat(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"expected a rational number, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pseudodyn", description="Exact experiments on pseudogroup dynamics.")
    parser.add_argument("command", choices=("build", "verify", "probe"))
    parser.add_argument("name", help="system name, lemma id or probe name")
    parser.add_argument("--config", help="flat key = value file mirroring these flags")
    parser.add_argument("--out", dest="output_dir", help="output directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--mode", choices=("exact", "float", "both"))
    parser.add_argument("--log-level", dest="log_level")

    systems = parser.add_argument_group("systems")
    systems.add_argument("--system", help="system a probe runs on")
    systems.add_argument("--n-max", dest="n_max", type=int)
    systems.add_argument("--m-max", dest="m_max", type=int)
    systems.add_argument("--h", action="append", help="horizontal twist '[a,b]:k' or '[a,b]:k@c'")
    systems.add_argument("--v", action="append", help="vertical twist '[a,b]:k' or '[a,b]:k@c'")
    systems.add_argument("--step", type=_fraction, help="translation length of the line system")
    systems.add_argument("--radius-cap", dest="radius_cap", type=int)

    lemmas = parser.add_argument_group("verify")
    lemmas.add_argument("--n", type=int)
    lemmas.add_argument("--m", type=int)
    lemmas.add_argument("--period", type=int)
    lemmas.add_argument("--levels", type=int)
    lemmas.add_argument("--count", type=int)
    lemmas.add_argument("--probes", type=int)

    probes = parser.add_argument_group("probe")
    probes.add_argument("--level", type=int)
    probes.add_argument("--steps", type=int)
    probes.add_argument("--grid", type=int)
    probes.add_argument("--depth", type=int)
    probes.add_argument("--samples", type=int)
    probes.add_argument("--radius", type=_fraction_list, help="radius schedule, e.g. 1/64,1/256")
    probes.add_argument("--threshold", type=_fraction)
    probes.add_argument("--point", help="'x,y' on a torus, a rational on the line, a sequence on the Cantor space")
    probes.add_argument("--rho", type=_fraction_list, help="halo radius schedule")
    probes.add_argument("--u", help="open set U for dpo, e.g. '0:3/2' on the line")
    probes.add_argument("--denominator", type=int)
    probes.add_argument("--trace", type=int, help="record the first N steps of a transitivity walk")
    probes.add_argument("--max-nodes", dest="max_nodes", type=int, help="node bound of an orbit")
    probes.add_argument("--max-level", dest="max_level", type=int, help="level bound of an orbit")
    return parser


def _config_argv(path: str) -> List[str]:
    argv: List[str] = []
    for key, value in load_config_file(path).items():
        flag = "out" if key == "output_dir" else key.replace("_", "-")
        argv += [f"--{flag}", value]
    return argv


def parse_args(argv: Optional[Sequence[str]] = None) -> Dict[str, object]:
    """Parse flags; config file values are parsed first so explicit flags win."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        argv = _config_argv(known.config) + argv
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code:
            raise BadParams("invalid command line") from None
        raise
    return resolve(vars(args))


# -----------------------------
# Helpers
# -----------------------------
def _system_params(values: Dict[str, object]) -> Dict[str, object]:
    return {k: values[k] for k in SYSTEM_FLAGS if values.get(k) is not None}


def _run_config(values: Dict[str, object], system: Optional[str] = None, system_params=None,
                params=None, mode: str = "exact") -> RunConfig:
    clean = {k: (rat_to_str(v) if isinstance(v, Fraction) else v) for k, v in (params or {}).items()}
    sp = {k: (rat_to_str(v) if isinstance(v, Fraction) else v) for k, v in (system_params or {}).items()}
    return RunConfig(command=str(values["command"]), system=system, system_params=sp, target=str(values["name"]),
                     params=clean, seed=int(values["seed"]), mode=mode, output_dir=str(values["output_dir"]))


def _parse_probe_point(system: BuiltSystem, text: Optional[str], level: int):
    space = system.space
    if text is None:
        if space == "cantor":
            return CantorPoint(level, BiSeq.periodic("01"))
        return default_start(space, level)
    try:
        if space == "torus":
            return parse_point(text)
        if space == "torus-level":
            return LevelPoint(level, parse_point(text))
        if space == "line":
            return LinePoint(rat(text))
        return CantorPoint(level, BiSeq.parse(text))
    except ValueError as exc:
        raise BadParams(str(exc)) from exc


def _dpo_region(system: BuiltSystem, text: Optional[str]):
    if text is None:
        return None
    if text.strip().lower() == "full":
        return LevelRegion({n: FULL for n in system.data.levels}) if system.space == "torus-level" else FULL
    if system.space != "line":
        raise BadParams("--u accepts 'full' or, on the line, intervals like '0:3/2'")
    try:
        return IntervalSet.parse(text)
    except ValueError as exc:
        raise BadParams(str(exc)) from exc


def _write_report(out: Path, stem: str, report) -> Path:
    path = write_json(out / f"{stem}.json", report.payload())
    if isinstance(report, ProbeReport):
        for name, rows in report.tables.items():
            if rows:
                write_csv(out / f"{stem}-{name}.csv", rows)
    return path


# -----------------------------
# Commands
# -----------------------------
def cmd_build(values: Dict[str, object]) -> int:
    name = str(values["name"])
    params = _system_params(values)
    system = build_system(name, **params)
    out = Path(str(values["output_dir"]))
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "systems": [system.manifest()],
        "run": _run_config(values, name, system.params).dict(),
    }
    write_json(out / "systems.json", manifest)
    data = system.data
    if isinstance(data, FamilyBData):
        rows_q = [{"n": n, "x": p.x, "y": p.y} for n in range(1, data.n_max + 1) for p in data.Q[n]]
        rows_qt = [{"n": n, "x": p.x, "y": p.y} for n in range(1, data.n_max + 1) for p in data.Q_tilde[n]]
        write_csv(out / "family-b-Q.csv", rows_q, columns=["n", "x", "y"])
        write_csv(out / "family-b-Q_tilde.csv", rows_qt, columns=["n", "x", "y"])
        write_csv(out / "family-b-radii.csv",
                  [{"n": n, "exponent": k, "r_sq_rational": r.a, "r_sq_sqrt2": r.b}
                   for n, (k, r) in enumerate(zip(data.radii.exponents, data.r_sq))])
    elif isinstance(data, FamilyAData):
        write_csv(out / "family-a-breakpoints.csv",
                  [{"z": int(z), "breakpoint": b} for z, b in data.constants()["breakpoints"].items()])
    print(f"built {name}: {len(system.generators)} generator(s) on {system.space}; wrote {out / 'systems.json'}")
    return 0


def cmd_verify(values: Dict[str, object]) -> int:
    lemma = str(values["name"])
    if lemma not in LEMMAS:
        raise BadParams(f"unknown lemma {lemma!r}; expected one of {', '.join(LEMMAS)}")
    params = {kw: values[dest] for dest, kw in LEMMA_FLAGS[lemma].items() if values.get(dest) is not None}
    out = Path(str(values["output_dir"]))
    run = _run_config(values, params=params).dict()
    try:
        report = verify(lemma, **params)
    except VerificationFailed as exc:
        exc.report.run = run
        path = _write_report(out, f"verify-{lemma}", exc.report)
        print(f"{lemma}: {exc.report.verdict}; witness in {path}")
        return 1
    report.run = run
    path = _write_report(out, f"verify-{lemma}", report)
    if report.certificate is not None:
        write_json(out / f"certificate-{lemma}.json", report.certificate.dict())
    print(f"{lemma}: {report.verdict} ({report.claim}); report in {path}")
    return 0


def _given(values: Dict[str, object], **renames: str) -> Dict[str, object]:
    """Flags that were set, under the keyword names the probe functions use."""
    return {kw: values[flag] for flag, kw in renames.items() if values.get(flag) is not None}


def _as_torus_system(system: BuiltSystem, level: Optional[int]) -> BuiltSystem:
    if isinstance(system.data, (FamilyAData, FamilyBData)) and level is not None:
        return level_slice(system, level)
    return system


def run_probe(probe: str, system: BuiltSystem, values: Dict[str, object]) -> ProbeReport:
    seed = int(values["seed"])
    level = values.get("level")

    if probe == "transitivity":
        target_system = _as_torus_system(system, level)
        return probe_transitivity(target_system, seed=seed,
                                  **_given(values, grid="grid", steps="max_steps", trace="trace_len"))
    if probe == "sensitivity":
        mode = values.get("mode") or "float"
        kwargs = dict(seed=seed, level=int(level or 0), compact=system.compact,
                      **_given(values, depth="depth", radius="radius_schedule", threshold="threshold",
                               samples="samples"))
        if mode != "both":
            return probe_sensitivity(system, mode=mode, **kwargs)
        exact = probe_sensitivity(system, mode="exact", **kwargs)
        floating = probe_sensitivity(system, mode="float", **kwargs)
        exact.metrics["c_hat_float"] = floating.metrics["c_hat"]
        exact.metrics["float_exact_gap"] = abs(floating.metrics["c_hat"] - exact.metrics["c_hat"])
        exact.params["mode"] = "both"
        return exact
    if probe == "dpo":
        kwargs = dict(seed=seed, **_given(values, grid="grid", samples="samples", denominator="denominator"))
        if level is not None:
            kwargs["levels"] = [int(level)]
        return probe_dpo(system, U=_dpo_region(system, values.get("u")), **kwargs)
    if probe == "halo":
        if system.compact is None:
            raise BadParams(f"{system.name} has no compact generation system")
        x = _parse_probe_point(system, values.get("point"), int(level or 0))
        return halo_dichotomy_probe(system.compact, x, seed=seed, system_name=system.name,
                                    **_given(values, depth="depth", rho="rho_schedule"))
    if probe == "naive-demo":
        target_system = _as_torus_system(system, level if level is not None else 0)
        x = _parse_probe_point(target_system, values.get("point"), 0)
        try:
            return naive_sensitivity_demo(target_system, x,
                                          **_given(values, depth="depth", denominator="denominator"))
        except SearchFailed as exc:
            logger.warning("naive-sensitivity demo: %s", exc)
            return ProbeReport(probe=probe, system=target_system.name,
                               claim="a transitive pseudogroup separates x from nearby points by c "
                                     "using the identity near x",
                               presentation=target_system.generators.ids, verdict=Verdict.NO_WITNESS,
                               bounds={"reason": str(exc)})
    if probe == "orbit":
        x = _parse_probe_point(system, values.get("point"), int(level or 0))
        return probe_orbit(system, x, **_given(values, max_nodes="max_nodes", max_level="max_level"))
    raise BadParams(f"unknown probe {probe!r}; expected one of {', '.join(PROBES)}")


def cmd_probe(values: Dict[str, object]) -> int:
    probe = str(values["name"])
    if probe not in PROBES:
        raise BadParams(f"unknown probe {probe!r}; expected one of {', '.join(PROBES)}")
    name = values.get("system") or "cat-map"
    if name not in SYSTEM_NAMES:
        raise UnknownSystem(f"unknown system {name!r}; expected one of {', '.join(SYSTEM_NAMES)}")
    system_params = _system_params(values)
    system = build_system(str(name), **system_params)
    report = run_probe(probe, system, values)
    probe_keys = ("level", "steps", "grid", "depth", "samples", "radius", "threshold", "point", "rho", "u",
                  "denominator", "trace")
    params = {k: values[k] for k in probe_keys if values.get(k) is not None}
    if isinstance(params.get("radius"), list):
        params["radius"] = [rat_to_str(r) for r in params["radius"]]
    if isinstance(params.get("rho"), list):
        params["rho"] = [rat_to_str(r) for r in params["rho"]]
    mode = values.get("mode") or ("float" if probe == "sensitivity" else "exact")
    report.run = _run_config(values, str(name), system.params, params, mode).dict()
    out = Path(str(values["output_dir"]))
    path = _write_report(out, f"probe-{probe}-{name}", report)
    if probe == "orbit":
        write_json(out / f"orbit-{name}.json", report.witnesses[0])
    print(f"{probe} on {name}: {report.verdict}; report in {path}")
    return 0


COMMANDS = {"build": cmd_build, "verify": cmd_verify, "probe": cmd_probe}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        values = parse_args(argv)
        configure_logging(str(values.get("log_level") or "INFO"))
        return COMMANDS[str(values["command"])](values)
    except PseudodynError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
