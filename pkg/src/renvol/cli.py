"""Command-line entry point.

Settings come from built-in defaults, then an INI config file (``--config``),
then ``RENVOL_<SECTION>_<KEY>`` environment variables, then flags; later
sources win.  Exit codes: 0 pass, 1 verification failure, 2 config or usage
error.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import verifier
from .conformal import ConformalPath
from .curvature import CurvatureBundle
from .errors import ContractViolation, DomainError, EvaluationError, PreconditionError
from .metric_zoo import family_from_config, quadrature_grid, random_trig_field, read_config

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
ENV_PREFIX = "RENVOL_"

DEFAULTS = {
    "family.kind": "perturbed_torus",
    "family.n": 7,
    "family.eps": 0.05,
    "family.seed": 0,
    "run.order": 5,
    "run.resolution": None,
    "run.seed": 0,
    "run.seeds": None,
    "run.samples": 20,
    "run.h": 1e-2,
    "run.levels": 2,
    "run.tol": None,
    "run.out": None,
    "run.jobs": None,
    "run.format": "text",
    "run.suites": None,
    "bundle.point": None,
    "variation.phi": None,
    "variation.psi": "none",
    "variation.scale": 0.2,
    "stability.families": "sphere7,product34,sphere5",
}

FLAG_KEYS = {
    "family": "family.kind",
    "n": "family.n",
    "order": "run.order",
    "resolution": "run.resolution",
    "seed": "run.seed",
    "h": "run.h",
    "tol": "run.tol",
    "out": "run.out",
    "jobs": "run.jobs",
    "format": "run.format",
}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    @property
    def n(self) -> int:
        return int(self.get("family.n"))

    @property
    def order(self) -> int:
        return int(self.get("run.order"))

    @property
    def seed(self) -> int:
        return int(self.get("run.seed"))

    @property
    def jobs(self) -> int:
        return int(self.get("run.jobs", os.cpu_count() or 1))

    @property
    def tol(self):
        t = self.get("run.tol")
        return None if t is None else float(t)

    def validate(self):
        if self.n < 5:
            raise UsageError(f"n must be >= 5, got {self.n}")
        if not 4 <= self.order <= 6:
            raise UsageError(f"jet order must lie in [4, 6], got {self.order}")
        res = self.get("run.resolution")
        if res is not None and int(res) < 8:
            raise UsageError(f"resolution must be >= 8, got {res}")
        if self.get("run.format") not in ("json", "csv", "text"):
            raise UsageError(f"format must be json, csv or text, got {self.get('run.format')!r}")
        if self.jobs < 1:
            raise UsageError("jobs must be >= 1")


def _literal(text: str):
    import ast

    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def env_overrides(environ=None) -> dict:
    """``RENVOL_FAMILY_N=9`` -> ``{"family.n": 9}``."""
    environ = os.environ if environ is None else environ
    out = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX) :].lower()
        if "_" not in rest:
            continue
        section, key = rest.split("_", 1)
        out[f"{section}.{key}"] = _literal(raw)
    return out


def build_parser() -> argparse.ArgumentParser:
    # suppressed defaults keep a subcommand from clobbering flags given before it
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", metavar="PATH", help="INI config with [family]/[run]/... sections")
    common.add_argument("--family", help="family kind (flat_torus, conformal_torus, perturbed_torus, round_sphere, einstein_product)")
    common.add_argument("--n", type=int, help="dimension")
    common.add_argument("--order", type=int, help="metric jet order (4..6)")
    common.add_argument("--resolution", type=int, help="quadrature nodes per axis (>= 8)")
    common.add_argument("--seed", type=int, help="base random seed")
    common.add_argument("--h", type=float, help="finite-difference step")
    common.add_argument("--tol", type=float, help="override every tolerance")
    common.add_argument("--out", metavar="PATH", help="write the report here")
    common.add_argument("--jobs", type=int, help="worker processes (default: CPU count)")
    common.add_argument("--format", choices=("json", "csv", "text"), help="stdout format")

    parser = argparse.ArgumentParser(
        prog="renvol", parents=[common], description="Curvature and variational verification runs."
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    p = sub.add_parser("bundle", parents=[common], help="curvature summary at a point")
    p.add_argument("--point", help="comma-separated chart coordinates")
    p = sub.add_parser("identities", parents=[common], help="pointwise identity suites")
    p.add_argument("--suite", action="append", help="suite name (repeatable; default: all)")
    p = sub.add_parser("variation", parents=[common], help="finite-difference vs closed-form variations")
    p.add_argument("--phi", help="'random', 'constant', 'harmonic:K' or 'harmonic:FACTOR:K'")
    p.add_argument("--psi", help="'none', 'random' or a harmonic spec")
    sub.add_parser("stability", parents=[common], help="second-variation sign table on Einstein families")
    sub.add_parser("run", parents=[common], help="full acceptance run (the default)")
    return parser


def load_config(args: argparse.Namespace, environ=None) -> RunConfig:
    values = dict(DEFAULTS)
    path = getattr(args, "config", None)
    if path:
        try:
            values.update(read_config(path))
        except configparser.Error as exc:
            raise UsageError(f"config {path}: {exc}") from exc
        except OSError as exc:
            raise UsageError(f"config {path}: {exc.strerror}") from exc
    values.update(env_overrides(environ))
    for flag, key in FLAG_KEYS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    for flag, key in (("point", "bundle.point"), ("phi", "variation.phi"), ("psi", "variation.psi")):
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    if getattr(args, "suite", None):
        values["run.suites"] = list(args.suite)
    cfg = RunConfig(getattr(args, "command", None) or "run", values)
    cfg.validate()
    return cfg


def _family(cfg: RunConfig, default_dims=None):
    values = dict(cfg.values)
    if values.get("family.effective_dims") is None and default_dims is not None:
        values["family.effective_dims"] = default_dims
    try:
        return family_from_config(values)
    except (ContractViolation, DomainError, ValueError, TypeError) as exc:
        raise UsageError(f"family: {exc}") from exc


def _seeds(cfg: RunConfig):
    seeds = cfg.get("run.seeds")
    if seeds is None:
        return (cfg.seed, cfg.seed + 1, cfg.seed + 2)
    if isinstance(seeds, int):
        return (seeds,)
    if isinstance(seeds, str):
        seeds = [s for s in seeds.replace(",", " ").split()]
    return tuple(int(s) for s in seeds)


def _emit(cfg: RunConfig, report: dict, text: str):
    fmt = cfg.get("run.format")
    body = verifier.emit_report(report)
    out = cfg.get("run.out")
    if out:
        verifier.emit_report(report, out) if fmt != "csv" else _write(out, verifier.suites_csv(report["suites"]))
    if fmt == "json":
        sys.stdout.write(body)
    elif fmt == "csv":
        sys.stdout.write(verifier.suites_csv(report["suites"]))
    else:
        sys.stdout.write(text)


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


# ---------------------------------------------------------------------------
# commands


def cmd_bundle(cfg: RunConfig) -> int:
    fam = _family(cfg)
    point = cfg.get("bundle.point")
    if point is None:
        pts = np.full((1, fam.n), 1.0)
    else:
        if isinstance(point, str):
            point = [float(x) for x in point.split(",")]
        pts = np.atleast_2d(np.asarray(point, dtype=float))
        if pts.shape[1] != fam.n:
            raise UsageError(f"point needs {fam.n} coordinates, got {pts.shape[1]}")
    try:
        b = CurvatureBundle(fam.metric_jets(pts, cfg.order))
    except DomainError as exc:
        raise UsageError(str(exc)) from exc
    summary = b.summary(0)
    summary["family"] = fam.descriptor()
    summary["point"] = pts[0].tolist()
    if cfg.get("run.format") == "text":
        lines = [f"family {fam.kind} n={fam.n} at {pts[0].tolist()}"]
        for key in ("R", "sigma1", "sigma2", "sigma3", "norm_W", "norm_C", "norm_B", "v2", "v4", "v6"):
            lines.append(f"  {key:7s} {summary[key]!r}")
        sys.stdout.write("\n".join(lines) + "\n")
    text = verifier.emit_report(summary)
    if cfg.get("run.format") != "text":
        sys.stdout.write(text)
    if cfg.get("run.out"):
        verifier.emit_report(summary, cfg.get("run.out"))
    return EXIT_PASS


def cmd_identities(cfg: RunConfig) -> int:
    names = cfg.get("run.suites")
    if isinstance(names, str):
        names = [s for s in names.replace(",", " ").split()]
    known = list(verifier.IDENTITIES) + list(verifier.LAWS)
    names = names or list(verifier.IDENTITIES)
    unknown = [s for s in names if s not in known]
    if unknown:
        raise UsageError(f"unknown suite(s) {unknown}; known: {known}")
    fam = _family(cfg)
    seeds = _seeds(cfg)
    samples = int(cfg.get("run.samples"))
    results = []
    for name in names:
        if name in verifier.LAWS:
            results.append(verifier.run_law_suite(name, fam, seeds, tolerance=cfg.tol))
        else:
            results.append(verifier.run_identity_suite(name, fam, seeds, samples, cfg.tol, order=max(cfg.order, 5)))
    report = verifier.build_report(suites=results, seed=cfg.seed, tolerances=_tolerances(cfg))
    lines = [
        f"{'PASS' if r.passed else 'FAIL'} {r.name:22s} max_rel={r.max_rel_residual:.3e} tol={r.tolerance:.1e}"
        for r in results
    ]
    _emit(cfg, report, "\n".join(lines) + "\n")
    failed = [r.name for r in results if not r.passed]
    if failed:
        sys.stderr.write(f"failing suites: {', '.join(failed)}\n")
        return EXIT_FAIL
    return EXIT_PASS


def _tolerances(cfg: RunConfig) -> dict:
    t = dict(verifier.DEFAULT_TOLERANCES)
    if cfg.tol is not None:
        t = {k: cfg.tol for k in t}
    return t


def _field(spec, fam, rng, scale):
    if spec is None or str(spec).lower() == "none":
        return None
    spec = str(spec)
    if spec == "random":
        if fam.factors:
            raise UsageError("random fields live on tori; use harmonic:K on sphere families")
        return random_trig_field(rng, fam.n, fam.effective_dims, scale=scale)
    if spec == "constant":
        if fam.factors:
            return fam.zonal(0, (scale,))
        from .metric_zoo import TrigField

        return TrigField.constant(fam.n, scale)
    if spec.startswith("harmonic:"):
        if not fam.factors:
            raise UsageError("harmonic fields need a sphere family")
        parts = spec.split(":")[1:]
        factor, degree = (0, int(parts[0])) if len(parts) == 1 else (int(parts[0]), int(parts[1]))
        if not 0 <= factor < len(fam.factors):
            raise UsageError(f"unknown sphere factor {factor}")
        return fam.harmonic(factor, degree)[0].scaled(scale)
    raise UsageError(f"unrecognized field spec {spec!r}")


def cmd_variation(cfg: RunConfig) -> int:
    kind = cfg.get("family.kind")
    fam = _family(cfg, default_dims=(0, 1) if str(kind).endswith("torus") else None)
    rng = np.random.default_rng(cfg.seed)
    scale = float(cfg.get("variation.scale"))
    phi_spec = cfg.get("variation.phi") or ("harmonic:1" if fam.factors else "random")
    phi = _field(phi_spec, fam, rng, scale)
    psi = _field(cfg.get("variation.psi"), fam, rng, scale)
    if phi is None:
        raise UsageError("phi must be a field")
    if fam.factors:
        axes = sorted(phi.axes() | (psi.axes() if psi is not None else set()))
        res = int(cfg.get("run.resolution", 24))
        grid = quadrature_grid(fam, res, axes or None)
    else:
        grid = quadrature_grid(fam, int(cfg.get("run.resolution", 32)))
    t = _tolerances(cfg)
    try:
        h = verifier.invariance_step(fam.n, float(cfg.get("run.h")))
        levels = verifier.einstein_levels(fam, int(cfg.get("run.levels")))
        rep = verifier.fd_variation(ConformalPath(fam, phi, psi), grid, h=h, levels=levels)
    except EvaluationError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_FAIL
    tol_first = t["first"]
    if fam.n == 6 and cfg.tol is None:
        tol_first = 1e-9
    entry = verifier.variation_entry(f"{fam.kind}_n{fam.n}", rep, tol_first, t["second"])
    report = verifier.build_report(variations=[entry], seed=cfg.seed, tolerances=t)
    text = (
        f"{'PASS' if entry['passed'] else 'FAIL'} {entry['label']} ({rep.second_form} second variation)\n"
        f"  dF3/dt    fd={rep.fd_first:.12g} closed={rep.closed_first:.12g} rel={rep.rel_error_first:.3e}\n"
        f"  d2F3/dt2  fd={rep.fd_second:.12g} closed={rep.closed_second:.12g} rel={rep.rel_error_second:.3e}\n"
        f"  d2F/dt2   fd={rep.fd_second_F:.12g} closed={rep.closed_second_F:.12g} rel={rep.rel_error_second_F:.3e}\n"
        f"  observed order {rep.order_second}\n"
    )
    _emit(cfg, report, text)
    return EXIT_PASS if entry["passed"] else EXIT_FAIL


def cmd_stability(cfg: RunConfig) -> int:
    from .metric_zoo import einstein_product, round_sphere

    t = _tolerances(cfg)
    labels = cfg.get("stability.families")
    named = {"sphere7": round_sphere(7), "product34": einstein_product(3, 4), "sphere5": round_sphere(5)}
    if cfg.get("family.kind") in ("round_sphere", "einstein_product"):
        fams = [_family(cfg)]
    else:
        labels = [s for s in str(labels).replace(",", " ").split()]
        bad = [s for s in labels if s not in named]
        if bad:
            raise UsageError(f"unknown stability families {bad}; known: {sorted(named)}")
        fams = [named[s] for s in labels]
    verdicts = []
    for fam in fams:
        try:
            verdicts.extend(verifier.stability_test(fam, zero_tol=t["zero"], margin=t["margin"]))
        except PreconditionError as exc:
            raise UsageError(f"stability needs an Einstein family: {exc}") from exc
    report = verifier.build_report(stability=verdicts, seed=cfg.seed, tolerances=t)
    lines = [f"{'family':18s} {'mode':18s} {'lambda':>10s} {'per_unit':>12s} {'class':>10s} {'expected':>10s}"]
    for v in verdicts:
        lines.append(
            f"{v.family['kind'] + str(v.family['n']):18s} {v.label:18s} {v.eigenvalue:10.5g} {v.per_unit:12.6g} "
            f"{v.classification:>10s} {'/'.join(v.expected):>10s} {'ok' if v.match else 'MISMATCH'}"
        )
    _emit(cfg, report, "\n".join(lines) + "\n")
    return EXIT_PASS if all(v.match for v in verdicts) else EXIT_FAIL


def cmd_run(cfg: RunConfig) -> int:
    report = verifier.acceptance_run(
        seed=cfg.seed, h=float(cfg.get("run.h")), levels=int(cfg.get("run.levels")), tol=cfg.tol, jobs=cfg.jobs
    )
    lines = [
        f"{'PASS' if s['passed'] else 'FAIL'} suite {s['name']} ({s['family']['kind']}) max_rel={s['max_rel_residual']:.3e}"
        for s in report["suites"]
    ]
    lines += [
        f"{'PASS' if v['passed'] else 'FAIL'} variation {v['label']} rel1={v['rel_error_first']:.3e} rel2={v['rel_error_second']:.3e}"
        for v in report["variations"]
    ]
    lines += [
        f"{'PASS' if v['match'] else 'FAIL'} stability {v['family']['kind']}{v['family']['n']} {v['label']} {v['classification']}"
        for v in report["stability"]
    ]
    lines += [
        f"{'PASS' if e.get('passed', True) else 'FAIL'} erratum {e['name']}" for e in report["errata"]
    ]
    _emit(cfg, report, "\n".join(lines) + "\n")
    bad = verifier.failures(report)
    if bad:
        sys.stderr.write("failures: " + "; ".join(bad) + "\n")
        return EXIT_FAIL
    return EXIT_PASS


COMMANDS = {
    "bundle": cmd_bundle,
    "identities": cmd_identities,
    "variation": cmd_variation,
    "stability": cmd_stability,
    "run": cmd_run,
}


def main(argv=None, environ=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors
        return int(exc.code or 0)
    try:
        cfg = load_config(args, environ)
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        sys.stderr.write(f"renvol: error: {exc}\n")
        return EXIT_USAGE
    except (ContractViolation, DomainError, PreconditionError, KeyError) as exc:
        sys.stderr.write(f"renvol: error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        sys.stderr.write(f"renvol: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
