"""Command-line front end: ``aeds <command> <file>``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import config
from .algebroid import calculus_check, validate
from .eds import dependency_residual, integral_residual, is_differential_ideal
from .errors import AedsError, InputError, NotAffine, PreconditionFailed
from .ip import (
    cohomology_obstruction,
    extended_from_multiplier,
    extract_mu_nu,
    helmholtz_residuals,
    ip_report,
    sigma_residual,
    two_form_checks,
)
from .odesim import compare_closed_form, rk4
from .report import Report
from .solver import search_multiplier

REPORT_VERSION = 1
EXAMPLES_DIR = Path(__file__).parent / "examples"


def list_examples(directory=None):
    """``(name, description)`` for every bundled problem file."""
    directory = Path(directory) if directory is not None else EXAMPLES_DIR
    if not directory.is_dir():
        return []
    out = []
    for path in sorted(directory.glob("*.toml")):
        try:
            desc = config.load(path).description
        except AedsError as err:
            desc = f"(unreadable: {err})"
        out.append((path.stem, desc))
    return out


def resolve(name):
    """A path, or the name of a bundled example."""
    p = Path(name)
    if p.exists():
        return p
    bundled = EXAMPLES_DIR / (name if name.endswith(".toml") else name + ".toml")
    if bundled.exists():
        return bundled
    return p


# ---------------------------------------------------------------- commands


def cmd_validate(prob, spec, opts):
    A = prob.carrier() if prob.has("prolongation") else prob.algebroid()
    return validate(A, spec)


def cmd_calculus(prob, spec, opts):
    A = prob.carrier() if prob.has("prolongation") else prob.algebroid()
    return calculus_check(A, spec)


def cmd_ideal_check(prob, spec, opts):
    rep = is_differential_ideal(prob.ideal(), spec)
    rep.details["closure"] = prob.ideal().closure
    return rep


def cmd_integral_check(prob, spec, opts):
    P = prob.prolongation()
    ideal = prob.ideal()
    section = prob.section()
    rep = integral_residual(P, ideal, section, spec)
    fams = list(rep.families)
    if P.connection is None:
        fams += dependency_residual(P, ideal, section, spec).families
        note = None
    else:
        note = "dependency residual skipped: defined for trivial prolongations only"
    out = Report("integral-check", fams, details={"section": {k: str(v) for k, v in section.items()}},
                 sampling=rep.sampling)
    if note:
        out.details["note"] = note
    return out


def cmd_ip_report(prob, spec, opts):
    return ip_report(prob.ip(), spec)


def _k(prob):
    n = prob.ip().n
    if prob.has_candidate("k"):
        return prob.candidate("k", 2)
    if prob.has_candidate("l"):
        from .ip import hessian_multiplier

        return hessian_multiplier(prob.ip(), prob.candidate("l", 0))
    raise config.ConfigError(f"[candidate] needs an {n}x{n} 'k' or a Lagrangian 'l'", None, None, "candidate.k")


def cmd_helmholtz(prob, spec, opts):
    return helmholtz_residuals(prob.ip(), _k(prob), spec)


def cmd_two_form(prob, spec, opts):
    return two_form_checks(prob.ip(), _k(prob), spec)


def cmd_sigma_check(prob, spec, opts):
    ip = prob.ip()
    if prob.has_candidate("s"):
        ext = prob.extended()
    else:
        ext = extended_from_multiplier(ip, _k(prob))
    return sigma_residual(ip, ext, spec)


def cmd_solve(prob, spec, opts):
    o = prob.solve_options()
    if opts.max_degree is not None:
        o["max_degree"] = opts.max_degree
    if opts.trials is not None:
        o["trials"] = opts.trials
    _, rep = search_multiplier(prob.ip(), o["max_degree"], spec, o["trials"], o["min_degree"], o["exhaustive"])
    return rep


def cmd_cohomology(prob, spec, opts):
    ip = prob.ip()
    fams = []
    if prob.has_candidate("mu"):
        mu, nu = prob.candidate("mu", 2), prob.candidate("nu", 1)
    else:
        mu, nu, aff = extract_mu_nu(ip, prob.candidate("l", 0), spec)
        fams.append(aff)
    tspec = replace(spec, box=())
    rep = cohomology_obstruction(prob.cohomology_problem(mu, nu), tspec)
    rep.families = fams + rep.families
    rep.details["mu"] = [[str(x) for x in row] for row in mu]
    rep.details["nu"] = [str(x) for x in nu]
    return rep


def cmd_ode(prob, spec, opts):
    system, x0, (t0, t1), h, exact, tol = prob.ode()
    traj = rk4(system, x0, t0, t1, h)
    if exact is None:
        return Report("ode", [], details={"final": dict(zip(system.state, traj.states[-1].tolist())),
                                          "steps": len(traj.times) - 1})
    rep = compare_closed_form(traj, exact, system.time, list(system.state), tol)
    rep.details["final"] = dict(zip(system.state, traj.states[-1].tolist()))
    return rep


COMMANDS = {
    "validate": cmd_validate,
    "calculus": cmd_calculus,
    "ideal-check": cmd_ideal_check,
    "integral-check": cmd_integral_check,
    "ip-report": cmd_ip_report,
    "helmholtz": cmd_helmholtz,
    "two-form": cmd_two_form,
    "sigma-check": cmd_sigma_check,
    "solve": cmd_solve,
    "cohomology": cmd_cohomology,
    "ode": cmd_ode,
}


# ---------------------------------------------------------------- driver


def _spec(prob, opts):
    spec = prob.sampling()
    changes = {}
    if opts.seed is not None:
        changes["seed"] = opts.seed
    if opts.samples is not None:
        changes["count"] = opts.samples
    if opts.tol_abs is not None:
        changes["tol_abs"] = opts.tol_abs
    if opts.tol_rel is not None:
        changes["tol_rel"] = opts.tol_rel
    return replace(spec, **changes) if changes else spec


def run(command, path, opts=None):
    """Run one command; returns ``(document, exit_code, text)``."""
    opts = opts or parse_args([command, str(path)])
    start = time.perf_counter()
    doc = {"report_version": REPORT_VERSION, "command": command}
    try:
        prob = config.load(resolve(str(path)))
        doc["input"] = {"file": Path(path).name, "sha256": prob.sha256}
        spec = _spec(prob, opts)
        rep = COMMANDS[command](prob, spec, opts)
        code = 0 if rep.passed else 1
        body, text = rep.to_dict(), rep.render()
    except PreconditionFailed as err:
        rep = err.report
        body = rep.to_dict() if rep is not None else {}
        body["error"] = str(err)
        text = (rep.render() + "\n" if rep is not None else "") + f"precondition failed: {err}"
        code = 1
    except NotAffine as err:
        fam = getattr(err, "family", None)
        rep = Report(command, [fam] if fam else [], verdict="not affine")
        body, text, code = rep.to_dict(), rep.render() + f"\n{err}", 1
        body["error"] = str(err)
    except (InputError, ValueError) as err:
        body, text, code = {"verdict": "input error", "error": str(err)}, f"input error: {err}", 2
    except AedsError as err:
        body, text, code = {"verdict": "error", "error": f"{type(err).__name__}: {err}"}, \
            f"error: {type(err).__name__}: {err}", 1
    doc["exit_code"] = code
    doc["report"] = body
    if not opts.no_timing:
        doc["wall_time"] = round(time.perf_counter() - start, 6)
    return doc, code, text


def parse_args(argv):
    p = argparse.ArgumentParser(prog="aeds", description="Exterior differential systems on Lie algebroids.")
    p.add_argument("command", choices=sorted(COMMANDS) + ["list"])
    p.add_argument("file", nargs="?", help="problem file or bundled example name")
    p.add_argument("--json", action="store_true", help="emit one JSON document")
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--tol-abs", type=float)
    p.add_argument("--tol-rel", type=float)
    p.add_argument("--max-degree", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--no-timing", action="store_true", help="omit wall time so reports are byte-identical")
    p.add_argument("--examples-dir", help=argparse.SUPPRESS)
    return p.parse_args(argv)


def main(argv=None):
    try:
        opts = parse_args(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if opts.command == "list":
        items = list_examples(opts.examples_dir)
        if opts.json:
            print(json.dumps({"report_version": REPORT_VERSION, "command": "list",
                              "examples": [{"name": n, "description": d} for n, d in items]}, indent=2))
        else:
            width = max((len(n) for n, _ in items), default=0)
            for n, d in items:
                print(f"{n:<{width}}  {d}")
        return 0
    if not opts.file:
        print("aeds: error: a problem file is required", file=sys.stderr)
        return 2
    doc, code, text = run(opts.command, opts.file, opts)
    if opts.json:
        print(json.dumps(doc, indent=2, sort_keys=False))
    else:
        print(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
