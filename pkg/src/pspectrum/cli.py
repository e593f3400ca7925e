"""Command line interface: ``pspectrum {generate,analyze,theory,validate}``.

Values are resolved as defaults < config file (TOML or JSON) < flags, and
every run writes a manifest with the resolved values next to its outputs.

Exit codes: 0 success, 1 failed validation gate, 2 configuration or domain
error, 3 refused computation (a guarded precondition does not hold).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .dyadic import DomainError, TreeParseError, read_tree, write_tree
from .largedev import (
    AGGREGATIONS,
    DEFAULT_EPSILON,
    EstimationError,
    RefusalError,
    dumps,
    empirical_spectrum,
    estimate_scaling,
)
from .rws import (
    SpecError,
    asymptotics,
    sample,
    spec_from_config,
    theoretical_spectrum,
    validate_montecarlo,
)
from .snu import AdmissibleProfile, p_nu

log = logging.getLogger("pspectrum")

EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_REFUSED = 0, 1, 2, 3
FORMATS = ("binary", "json", "csv")
SUFFIX = {".mfa": "binary", ".bin": "binary", ".json": "json", ".csv": "csv"}

DEFAULTS = {
    "out": ".",
    "format": None,
    "seed": 0,
    "threads": None,
    "family": None,
    "alpha": None,
    "eta": None,
    "atoms": None,
    "profile": None,
    "J": 14,
    "signs": False,
    "input": None,
    "p": ["2"],
    "epsilon": DEFAULT_EPSILON,
    "window": None,
    "aggregation": "max_over_scales",
    "h_grid": None,
    "reference": None,
    "what": "spectrum",
    "R": 8,
    "tolerance": None,
    "tol": [],
    "h_range": None,
}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# parsing helpers


def parse_p(text) -> float:
    s = str(text).strip().lower()
    if s in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        p = float(s)
    except ValueError:
        raise ConfigError(f"cannot parse p value {text!r}") from None
    if not p > 0 or math.isnan(p):
        raise ConfigError(f"p must be positive, got {text!r}")
    return p


def parse_p_list(values) -> list:
    out = []
    for v in (values if isinstance(values, (list, tuple)) else [values]):
        out += [parse_p(x) for x in str(v).split(",") if x.strip()]
    if not out:
        raise ConfigError("no p value given")
    return out


def parse_pair(text, name, kind=int):
    if text is None:
        return None
    parts = text if isinstance(text, (list, tuple)) else str(text).replace(":", ",").split(",")
    try:
        a, b = (kind(x) for x in parts)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be two numbers 'a,b', got {text!r}") from None
    if a > b:
        raise ConfigError(f"{name} must satisfy a <= b, got {text!r}")
    return a, b


def parse_grid(text):
    """``lo:hi:n`` to an inclusive linspace."""
    if text is None:
        return None
    try:
        lo, hi, n = str(text).split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise ConfigError(f"grid must be 'lo:hi:n', got {text!r}") from None
    if n < 2 or not hi > lo:
        raise ConfigError(f"grid needs hi > lo and n >= 2, got {text!r}")
    return np.linspace(lo, hi, n)


def p_label(p: float) -> str:
    return "inf" if math.isinf(p) else format(p, "g")


def load_config(path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        try:
            doc = tomllib.loads(raw.decode())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"bad TOML in {path}: {exc}") from None
    else:
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad JSON in {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a table/object")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and explicit flags (flags win)."""
    cfg = dict(DEFAULTS)
    cfg["threads"] = os.environ.get("MFA_THREADS")
    explicit = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    if explicit.get("config"):
        file_cfg = load_config(explicit["config"])
        unknown = set(file_cfg) - set(DEFAULTS) - {"spec"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    cfg.update({k: v for k, v in explicit.items() if k != "config"})
    cfg["config"] = explicit.get("config")
    cfg["command"] = args.command
    try:
        cfg["threads"] = max(1, int(cfg["threads"])) if cfg["threads"] is not None else 1
        cfg["seed"] = int(cfg["seed"])
        cfg["J"] = int(cfg["J"])
        cfg["R"] = int(cfg["R"])
        cfg["epsilon"] = float(cfg["epsilon"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad numeric setting: {exc}") from None
    if cfg["format"] is not None and cfg["format"] not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}")
    if cfg["aggregation"] not in AGGREGATIONS:
        raise ConfigError(f"aggregation must be one of {AGGREGATIONS}")
    if not cfg["epsilon"] > 0:
        raise ConfigError("epsilon must be positive")
    if cfg["R"] < 0:
        raise ConfigError("R must be >= 0")
    return cfg


def build_spec(cfg: dict):
    """Scale distribution from ``spec`` table, family flags or a profile."""
    if isinstance(cfg.get("spec"), dict):
        return spec_from_config(cfg["spec"])
    family = cfg.get("family")
    if family is None and cfg.get("profile"):
        family = "profile"
    if family is None:
        return None
    if family == "lacunary":
        if cfg.get("alpha") is None or cfg.get("eta") is None:
            raise ConfigError("lacunary family needs --alpha and --eta")
        return spec_from_config({"family": "lacunary", "alpha": cfg["alpha"], "eta": cfg["eta"]})
    if family == "atoms":
        atoms = cfg.get("atoms")
        if isinstance(atoms, str):
            try:
                atoms = [tuple(float(x) for x in a.split(":")) for a in atoms.split(",")]
            except ValueError:
                raise ConfigError(f"atoms must be 'alpha:eta,...', got {atoms!r}") from None
        if not atoms:
            raise ConfigError("atoms family needs --atoms alpha:eta,...")
        return spec_from_config({"family": "atoms", "atoms": atoms})
    if family == "profile":
        return spec_from_config({"family": "profile", "profile": load_profile(cfg["profile"])})
    raise ConfigError(f"unknown family {family!r}")


def load_profile(src) -> dict:
    if isinstance(src, dict):
        return src
    if src is None:
        raise ConfigError("no profile given")
    try:
        return json.loads(Path(src).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read profile {src}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad profile JSON in {src}: {exc}") from None


# --------------------------------------------------------------------------
# output


class Outputs:
    """Output location: a directory, or a single file for ``generate``."""

    def __init__(self, out: str, single_file: bool = False):
        path = Path(out)
        self.file = path if single_file and path.suffix else None
        self.dir = path.parent if self.file is not None else path
        self.written = []

    def path(self, name: str) -> Path:
        return self.dir / name

    def write_text(self, name: str, text: str) -> Path:
        return self.write_bytes(name, text.encode())

    def write_bytes(self, name: str, data: bytes, path=None) -> Path:
        target = path if path is not None else self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
        self.written.append(str(target))
        return target

    def manifest(self, cfg: dict, extra=None) -> Path:
        doc = {"command": cfg["command"], "version": __version__, "seed": cfg["seed"],
               "kernel_backend": kernels.BACKEND, "python": platform.python_version(),
               "numpy": np.__version__,
               "config": {k: _plain(v) for k, v in sorted(cfg.items())},
               "outputs": list(self.written)}
        if extra:
            doc.update(extra)
        name = (self.file.name + ".manifest.json") if self.file is not None else "manifest.json"
        target = self.dir / name
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return target


def _plain(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else None)
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    return v


def _fmt_for(cfg: dict, path: Path) -> str:
    if cfg["format"] is not None:
        return cfg["format"]
    return SUFFIX.get(path.suffix.lower(), "binary")


def _csv_num(x) -> str:
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _read_curve(path) -> tuple:
    """``(h, D)`` from a spectrum CSV or JSON written by this tool."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read reference {path}: {exc.strerror}") from None
    if path.suffix.lower() == ".json":
        doc = json.loads(text)
        doc = doc.get("curve", doc)
        h = np.array(doc["h"], dtype=float)
        D = np.array([float(x) if x is not None else math.nan for x in doc["D"]])
        return h, D
    rows = [r.split(",") for r in text.strip().splitlines()[1:]]
    return np.array([float(r[0]) for r in rows]), np.array([float(r[1]) for r in rows])


def max_abs_delta(h, D, ref_h, ref_D) -> float:
    """Largest ``|D - D_ref|`` over points of ``h`` inside the reference support."""
    ok = np.isfinite(ref_D)
    if not ok.any():
        return math.nan
    lo, hi = ref_h[ok].min(), ref_h[ok].max()
    sel = (h >= lo) & (h <= hi)
    if not sel.any():
        return math.nan
    ref = np.interp(h[sel], ref_h[ok], ref_D[ok])
    with np.errstate(invalid="ignore"):
        d = np.abs(np.asarray(D, float)[sel] - ref)
    return float(np.max(np.where(np.isnan(d), np.inf, d)))


# --------------------------------------------------------------------------
# commands


def cmd_generate(cfg: dict) -> int:
    spec = build_spec(cfg)
    if spec is None:
        raise ConfigError("generate needs a family (--family or a spec table) or --profile")
    tree = sample(spec, cfg["J"], cfg["seed"], signs=bool(cfg["signs"]))
    outs = Outputs(cfg["out"], single_file=True)
    target = outs.file if outs.file is not None else outs.path("tree.mfa")
    fmt = _fmt_for(cfg, target)
    outs.write_bytes(target.name, write_tree(tree, fmt), path=target)
    outs.manifest(cfg, {"spec": spec.to_config(), "nodes": tree.n_nodes})
    print(f"wrote {target} ({tree.n_nodes} nodes, J={tree.max_scale}, format={fmt})")
    return EXIT_OK


def cmd_analyze(cfg: dict) -> int:
    if not cfg["input"]:
        raise ConfigError("analyze needs --input TREE")
    src = Path(cfg["input"])
    try:
        data = src.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {src}: {exc.strerror}") from None
    fmt = cfg["format"] or SUFFIX.get(src.suffix.lower(), "binary")
    tree = read_tree(data, fmt)
    ps = parse_p_list(cfg["p"])
    window = parse_pair(cfg["window"], "window")
    h_grid = parse_grid(cfg["h_grid"])
    outs = Outputs(cfg["out"])
    finite = [p for p in ps if math.isfinite(p)]
    summary = {"input": str(src), "J": tree.max_scale, "spectra": {}}
    if finite:
        grid = sorted(set(finite) | {0.5, 1.0, 2.0, 4.0, 8.0})
        scaling = estimate_scaling(tree, grid, window)
        outs.write_text("scaling.json", dumps(scaling.to_json()))
        summary["p0_hat"] = scaling.p0
    ref = _read_curve(cfg["reference"]) if cfg["reference"] else None
    for p in ps:
        es = empirical_spectrum(tree, p, cfg["epsilon"], window, h_grid,
                                aggregation=cfg["aggregation"])
        tag = p_label(p)
        dens = es.coefficient_density
        outs.write_text(f"density_p{tag}.json", dumps(dens.to_json()))
        outs.write_text(f"density_p{tag}.csv", "alpha,rho,nu\n" + "".join(
            f"{float(a)!r},{_csv_num(r)},{_csv_num(n)}\n"
            for a, r, n in zip(dens.alpha_grid, dens.rho, dens.nu)))
        outs.write_text(f"leader_density_p{tag}.json", dumps(es.leader_density.to_json()))
        outs.write_text(f"spectrum_p{tag}.json", dumps(es.formalism.to_json()))
        outs.write_text(f"spectrum_p{tag}.csv", es.formalism.to_csv())
        outs.write_text(f"leader_spectrum_p{tag}.csv", es.leader.to_csv())
        entry = {"h_min": es.formalism.h_min, "h_max": es.formalism.h_max,
                 "leader_h_max": es.leader.h_max}
        if ref is not None:
            entry["max_abs_delta_to_reference"] = max_abs_delta(es.formalism.h, es.formalism.D, *ref)
            print(f"p={tag}: max |D - reference| = {entry['max_abs_delta_to_reference']:.4g}")
        summary["spectra"][tag] = entry
        print(f"p={tag}: h_min={es.formalism.h_min:.4g} h_max={es.formalism.h_max:.4g}")
    outs.write_text("summary.json", json.dumps(_plain(summary), indent=2) + "\n")
    outs.manifest(cfg)
    return EXIT_OK


def cmd_theory(cfg: dict) -> int:
    outs = Outputs(cfg["out"])
    what = cfg["what"]
    if what == "p_nu":
        prof = AdmissibleProfile.from_json(load_profile(cfg["profile"]))
        value = p_nu(prof)
        outs.write_text("p_nu.json", json.dumps({"p_nu": _plain(value), "profile": prof.to_json()},
                                                indent=2) + "\n")
        outs.manifest(cfg)
        print(f"p_nu = {p_label(value)}")
        return EXIT_OK
    spec = build_spec(cfg)
    if spec is None:
        raise ConfigError("theory needs a family (--family or a spec table) or --profile")
    if what == "asymptotics":
        asym = asymptotics(spec)
        doc = {"atoms": asym.atom_alphas.tolist(), "rates": _plain(asym.atom_rates.tolist()),
               "W": list(asym.W), "W_undetermined": list(asym.W_undetermined),
               "h_min": asym.h_min, "discontinuities": list(asym.discontinuities)}
        outs.write_text("asymptotics.json", json.dumps(doc, indent=2) + "\n")
        outs.manifest(cfg)
        print(f"h_min = {asym.h_min:.6g}")
        return EXIT_OK
    if what != "spectrum":
        raise ConfigError(f"--what must be spectrum, asymptotics or p_nu, got {what!r}")
    for p in parse_p_list(cfg["p"]):
        ts = theoretical_spectrum(spec, p, parse_grid(cfg["h_grid"]))
        tag = p_label(p)
        doc = ts.curve.to_json()
        doc["p0"] = _plain(ts.p0)
        outs.write_text(f"theory_p{tag}.json", dumps(doc))
        outs.write_text(f"theory_p{tag}.csv", ts.curve.to_csv())
        print(f"p={tag}: support [{ts.curve.h_min:.6g}, {ts.h_max:.6g}], p0={p_label(ts.p0)}")
    outs.manifest(cfg)
    return EXIT_OK


def default_suite() -> list:
    """The lacunary acceptance suite: spectrum, density and scaling gates."""
    return [
        {"spec": {"family": "lacunary", "alpha": 0.5, "eta": 0.5}, "p": 2.0,
         "tolerances": {"spectrum": 0.10, "h_max": 0.10, "density": 0.05, "scaling": 0.10}},
        {"spec": {"family": "lacunary", "alpha": -0.25, "eta": 0.5}, "p": 1.0,
         "tolerances": {"scaling": 0.10, "p0": 0.05}},
    ]


def cmd_validate(cfg: dict) -> int:
    outs = Outputs(cfg["out"])
    spec = build_spec(cfg)
    overrides = {}
    for item in cfg["tol"] or []:
        name, _, val = str(item).partition("=")
        try:
            overrides[name.strip()] = float(val)
        except ValueError:
            raise ConfigError(f"--tol expects name=value, got {item!r}") from None
    if spec is None:
        runs = default_suite()
    else:
        runs = [{"spec": spec.to_config(), "p": parse_p_list(cfg["p"])[0], "tolerances": None,
                 "_spec": spec}]
    if cfg["R"] == 0:
        log.warning("R = 0: no realizations, the report is empty")
    reports = []
    settings = {"seed": cfg["seed"]}
    if cfg["h_range"] is not None:
        settings["h_range"] = parse_pair(cfg["h_range"], "h_range", float)
    for run in runs:
        s = run.get("_spec") or spec_from_config(run["spec"])
        tol = dict(run["tolerances"]) if run["tolerances"] is not None else None
        if tol is None:
            from .rws import DEFAULT_TOLERANCES
            tol = dict(DEFAULT_TOLERANCES)
        if cfg["tolerance"] is not None:
            tol = {k: float(cfg["tolerance"]) for k in tol}
        tol.update(overrides)
        reports.append(validate_montecarlo(s, run["p"], cfg["J"], cfg["R"], tol, settings,
                                           threads=cfg["threads"]))
    passed = all(r.passed for r in reports)
    table = "\n\n".join(r.table() for r in reports)
    outs.write_text("report.json", json.dumps({"passed": passed,
                                               "reports": [r.to_json() for r in reports]},
                                              indent=2) + "\n")
    outs.write_text("report.txt", table + "\n")
    outs.manifest(cfg, {"passed": passed})
    print(table)
    print("ALL GATES PASS" if passed else "GATE FAILURE")
    return EXIT_OK if passed else EXIT_GATE


# --------------------------------------------------------------------------
# argument parser


def _common() -> argparse.ArgumentParser:
    c = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    c.add_argument("--config", default=S, help="TOML or JSON file with option values")
    c.add_argument("--out", default=S, help="output directory (generate: file or directory)")
    c.add_argument("--format", default=S, choices=FORMATS, help="tree format")
    c.add_argument("--seed", default=S, type=int, help="RNG key / first seed")
    c.add_argument("--threads", default=S, type=int, help="worker threads (default MFA_THREADS or 1)")
    return c


def _spec_args(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--family", default=S, choices=("lacunary", "atoms", "profile"))
    p.add_argument("--alpha", default=S, type=float)
    p.add_argument("--eta", default=S, type=float)
    p.add_argument("--atoms", default=S, help="alpha:eta pairs, comma separated")
    p.add_argument("--profile", default=S, help="profile JSON file")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = _common()
    ap = argparse.ArgumentParser(prog="pspectrum", parents=[common],
                                 description="p-leader multifractal analysis of wavelet coefficient trees")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="sample a random wavelet series")
    _spec_args(g)
    g.add_argument("--J", default=S, type=int, help="finest scale")
    g.add_argument("--signs", default=S, action="store_true", help="attach Rademacher signs")
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("analyze", parents=[common], help="estimate densities and spectra of a tree")
    a.add_argument("--input", default=S, help="tree file")
    a.add_argument("--p", default=S, action="append", help="exponent(s), e.g. 2 or 1,2,inf")
    a.add_argument("--epsilon", default=S, type=float)
    a.add_argument("--window", default=S, help="scale window j_min,j_max")
    a.add_argument("--aggregation", default=S, choices=AGGREGATIONS)
    a.add_argument("--h-grid", dest="h_grid", default=S, help="lo:hi:n")
    a.add_argument("--reference", default=S, help="spectrum CSV/JSON to compare against")
    a.set_defaults(func=cmd_analyze)

    t = sub.add_parser("theory", parents=[common], help="closed-form spectra and indices")
    _spec_args(t)
    t.add_argument("--p", default=S, action="append")
    t.add_argument("--what", default=S, choices=("spectrum", "asymptotics", "p_nu"))
    t.add_argument("--h-grid", dest="h_grid", default=S, help="lo:hi:n")
    t.set_defaults(func=cmd_theory)

    v = sub.add_parser("validate", parents=[common], help="Monte Carlo validation gates")
    _spec_args(v)
    v.add_argument("--p", default=S, action="append")
    v.add_argument("--J", default=S, type=int)
    v.add_argument("--R", default=S, type=int, help="number of realizations")
    v.add_argument("--tolerance", default=S, type=float, help="one tolerance for every gate")
    v.add_argument("--tol", default=S, action="append", help="gate=value, repeatable")
    v.add_argument("--h-range", dest="h_range", default=S, help="lo,hi")
    v.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        return args.func(cfg)
    except RefusalError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except (ConfigError, DomainError, SpecError, TreeParseError, EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
