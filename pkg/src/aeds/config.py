"""Problem files: TOML documents with a fixed block structure."""

from __future__ import annotations

import hashlib
import re
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .algebroid import Algebroid, Form, tangent_algebroid
from .eds import IdealSpec
from .errors import ConfigError, InputError
from .expr import ZERO, Chart
from .ip import CohomologyProblem, ExtendedSection, build_ip, structure_constants_from_entries
from .odesim import OdeSystem
from .prolong import prolong_connection, prolong_trivial
from .sampling import SampleSpec

FREE = object()

SCHEMA = {
    "description": None,
    "commands": None,
    "expected_exit": FREE,
    "chart": {"coordinates": None, "domain": FREE},
    "algebroid": {"name": None, "basis": None, "tangent": None, "anchor": FREE, "structure": FREE},
    "prolongation": {"fiber": None, "fiber_basis": None, "connection": FREE, "domain": FREE},
    "ideal": {"generators": FREE, "closure": None},
    "section": FREE,
    "ip": {"n": None, "C": None, "gamma": None, "t_interval": None, "domain": FREE, "name": None},
    "candidate": {"k": None, "l": None, "s": None, "P": None, "Q": None, "mu": None, "nu": None},
    "solve": {"max_degree": None, "min_degree": None, "trials": None, "exhaustive": None},
    "ode": {"time": None, "state": None, "rhs": None, "initial": None, "interval": None,
            "h": None, "exact": None, "tol": None},
    "sampling": {"seed": None, "count": None, "tol_abs": None, "tol_rel": None, "box": FREE},
}


def _locate(text, key):
    """Line and column of the first occurrence of ``key`` as a TOML key or table name."""
    leaf = key.split(".")[-1]
    pat = re.compile(r'^\s*(\[+\s*)?([\w."\s,-]*\.)?"?' + re.escape(leaf) + r'"?\s*(=|\]|\.)', re.M)
    m = pat.search(text)
    if not m:
        return None, None
    line = text.count("\n", 0, m.start()) + 1
    col = m.start() - (text.rfind("\n", 0, m.start()) + 1) + 1
    return line, col


def _check_keys(doc, schema, text, prefix=""):
    for key, value in doc.items():
        path = f"{prefix}{key}"
        if key not in schema:
            line, col = _locate(text, path)
            raise ConfigError(f"unknown key {path!r}", line, col, path)
        sub = schema[key]
        if isinstance(sub, dict):
            if not isinstance(value, dict):
                line, col = _locate(text, path)
                raise ConfigError(f"{path!r} must be a table", line, col, path)
            _check_keys(value, sub, text, path + ".")


def _expr_text(v):
    if isinstance(v, bool):
        raise InputError(f"expected an expression, got {v!r}")
    if isinstance(v, (int, float)):
        return repr(float(v)) if isinstance(v, float) else str(v)
    if isinstance(v, str):
        return v
    raise InputError(f"expected an expression string, got {type(v).__name__}")


def _nested(v, depth):
    if depth == 0:
        return _expr_text(v)
    if not isinstance(v, list):
        raise InputError("expected a nested list of expressions")
    return [_nested(x, depth - 1) for x in v]


def _domain(d):
    return {k: (float(v[0]), float(v[1])) for k, v in (d or {}).items()}


class Problem:
    """A parsed problem file.  Objects are built on first use."""

    def __init__(self, doc, text, path=None):
        self.doc = doc
        self.text = text
        self.path = path
        self.sha256 = hashlib.sha256(text.encode("utf-8")).hexdigest()
        self._cache = {}

    # -------------------------------------------------------------- helpers

    def block(self, name):
        if name not in self.doc:
            line = None
            raise ConfigError(f"command needs a [{name}] block", line, None, name)
        return self.doc[name]

    def has(self, name):
        return name in self.doc

    def _fail(self, message, key):
        line, col = _locate(self.text, key)
        return ConfigError(message, line, col, key)

    def _cached(self, name, build):
        if name not in self._cache:
            self._cache[name] = build()
        return self._cache[name]

    @property
    def description(self):
        return self.doc.get("description", "")

    @property
    def commands(self):
        return list(self.doc.get("commands", []))

    def expected_exit(self, command):
        exp = self.doc.get("expected_exit", {})
        if isinstance(exp, int):
            return exp
        return int(exp.get(command, 0))

    # -------------------------------------------------------------- blocks

    def sampling(self):
        s = self.doc.get("sampling", {})
        return SampleSpec(
            seed=int(s.get("seed", 0)),
            count=int(s.get("count", 64)),
            box=_domain(s.get("box")),
            tol_abs=float(s.get("tol_abs", 1e-9)),
            tol_rel=float(s.get("tol_rel", 1e-7)),
        )

    def chart(self):
        def build():
            c = self.block("chart")
            if "coordinates" not in c:
                raise self._fail("[chart] needs 'coordinates'", "chart")
            return Chart(tuple(c["coordinates"]), _domain(c.get("domain")))

        return self._cached("chart", build)

    def algebroid(self):
        def build():
            if not self.has("algebroid"):
                if self.has("ip"):
                    return self.ip().algebroid
                raise ConfigError("command needs an [algebroid] or [ip] block", None, None, "algebroid")
            a = self.doc["algebroid"]
            chart = self.chart()
            if a.get("tangent", False):
                for k in ("anchor", "structure"):
                    if k in a:
                        raise self._fail(f"tangent algebroid takes no '{k}' entries", f"algebroid.{k}")
                return tangent_algebroid(chart, a.get("basis"))
            if "basis" not in a:
                raise self._fail("[algebroid] needs 'basis' (or tangent = true)", "algebroid")
            basis = tuple(a["basis"])
            r, m = len(basis), chart.dim
            anchor = [[ZERO] * m for _ in range(r)]
            for lab, row in a.get("anchor", {}).items():
                if lab not in basis:
                    raise self._fail(f"anchor for unknown basis element {lab!r}", f"algebroid.anchor.{lab}")
                for coord, v in row.items():
                    if coord not in chart.coordinates:
                        raise self._fail(f"anchor component for unknown coordinate {coord!r}",
                                         f"algebroid.anchor.{lab}.{coord}")
                    anchor[basis.index(lab)][chart.index(coord)] = chart.parse(_expr_text(v))
            L = [[[ZERO] * r for _ in range(r)] for _ in range(r)]
            for pair, row in a.get("structure", {}).items():
                parts = [p.strip() for p in pair.split(",")]
                if len(parts) != 2 or any(p not in basis for p in parts):
                    raise self._fail(f"structure key {pair!r} must be 'a,b' with basis labels",
                                     f"algebroid.structure.{pair}")
                for lab, v in row.items():
                    if lab not in basis:
                        raise self._fail(f"structure component for unknown basis element {lab!r}",
                                         f"algebroid.structure.{lab}")
                    L[basis.index(parts[0])][basis.index(parts[1])][basis.index(lab)] = chart.parse(_expr_text(v))
            return Algebroid(chart, anchor, L, basis, name=a.get("name", ""))

        return self._cached("algebroid", build)

    def prolongation(self):
        def build():
            p = self.block("prolongation")
            A = self.algebroid()
            fiber = tuple(p.get("fiber", ()))
            if not fiber:
                raise self._fail("[prolongation] needs a nonempty 'fiber' list", "prolongation")
            fb = p.get("fiber_basis")
            dom = _domain(p.get("domain"))
            conn = p.get("connection")
            if not conn:
                return prolong_trivial(A, fiber, fb, dom)
            chart = A.chart.extend(fiber, dom)
            coeffs = [[ZERO] * A.chart.dim for _ in fiber]
            for y, row in conn.items():
                if y not in fiber:
                    raise self._fail(f"connection for unknown fiber coordinate {y!r}", f"prolongation.connection.{y}")
                for x, v in row.items():
                    if x not in A.chart.coordinates:
                        raise self._fail(f"connection component for unknown base coordinate {x!r}",
                                         f"prolongation.connection.{y}.{x}")
                    coeffs[fiber.index(y)][A.chart.index(x)] = chart.parse(_expr_text(v))
            return prolong_connection(A, fiber, coeffs, fb, dom)

        return self._cached("prolongation", build)

    def carrier(self):
        """The algebroid the ideal lives on: the prolongation if declared, else the algebroid."""
        return self.prolongation() if self.has("prolongation") else self.algebroid()

    def ideal(self):
        def build():
            block = self.block("ideal")
            A = self.carrier()
            gens, names = [], []
            for name, entries in block.get("generators", {}).items():
                if not isinstance(entries, dict) or not entries:
                    raise self._fail(f"generator {name!r} must be a nonempty table", f"ideal.generators.{name}")
                coeffs, degree = {}, None
                for key, v in entries.items():
                    labels = [] if key.strip() == "1" else [s.strip() for s in key.split("^")]
                    for lab in labels:
                        if lab not in A.basis:
                            raise self._fail(f"unknown basis label {lab!r} in generator {name!r}",
                                             f"ideal.generators.{name}")
                    if degree is None:
                        degree = len(labels)
                    elif degree != len(labels):
                        raise self._fail(f"generator {name!r} mixes degrees", f"ideal.generators.{name}")
                    idx = [A.index(lab) for lab in labels]
                    if len(set(idx)) != len(idx):
                        continue
                    order = sorted(range(len(idx)), key=lambda i: idx[i])
                    inv = sum(1 for i in range(len(order)) for j in range(i + 1, len(order)) if order[i] > order[j])
                    e = A.chart.parse(_expr_text(v))
                    coeffs[tuple(sorted(idx))] = -e if inv % 2 else e
                form = Form(A, degree, coeffs)
                if not form.coeffs:
                    raise self._fail(f"generator {name!r} is zero", f"ideal.generators.{name}")
                gens.append(form)
                names.append(name)
            if not gens:
                raise self._fail("[ideal] needs at least one generator", "ideal")
            return IdealSpec(A, gens, names, block.get("closure", "differential"))

        return self._cached("ideal", build)

    def section(self):
        P = self.prolongation()
        s = self.block("section")
        extra = [k for k in s if k not in P.fiber]
        if extra:
            raise self._fail(f"section entry for unknown fiber coordinate {extra[0]!r}", f"section.{extra[0]}")
        missing = [y for y in P.fiber if y not in s]
        if missing:
            raise ConfigError(f"section is missing fiber coordinates {missing}", None, None, "section")
        return {y: P.base.chart.parse(_expr_text(s[y])) for y in P.fiber}

    def ip(self):
        def build():
            b = self.block("ip")
            if "n" not in b:
                raise self._fail("[ip] needs 'n'", "ip")
            n = int(b["n"])
            C = structure_constants_from_entries(n, [(int(e[0]), int(e[1]), int(e[2]), float(e[3]))
                                                     for e in b.get("C", [])])
            gamma = [_expr_text(g) for g in b.get("gamma", ["0"] * n)]
            return build_ip(n, C, gamma, _domain(b.get("domain")), b.get("name", ""))

        return self._cached("ip", build)

    def t_interval(self):
        b = self.block("ip")
        iv = b.get("t_interval", [0.0, 1.0])
        return (float(iv[0]), float(iv[1]))

    def candidate(self, key, depth):
        c = self.block("candidate")
        if key not in c:
            raise ConfigError(f"[candidate] needs '{key}'", None, None, f"candidate.{key}")
        return _nested(c[key], depth)

    def has_candidate(self, key):
        return key in self.doc.get("candidate", {})

    def extended(self):
        return ExtendedSection(self.candidate("s", 2), self.candidate("P", 3), self.candidate("Q", 3))

    def cohomology_problem(self, mu, nu):
        ip = self.ip()
        return CohomologyProblem(ip.C, mu, nu, self.t_interval())

    def solve_options(self):
        s = self.doc.get("solve", {})
        return {
            "max_degree": int(s.get("max_degree", 2)),
            "min_degree": int(s.get("min_degree", 0)),
            "trials": int(s.get("trials", 32)),
            "exhaustive": bool(s.get("exhaustive", False)),
        }

    def ode(self):
        o = self.block("ode")
        for k in ("state", "rhs", "initial", "interval", "h"):
            if k not in o:
                raise self._fail(f"[ode] needs '{k}'", "ode")
        system = OdeSystem(o.get("time", "t"), tuple(o["state"]), [_expr_text(e) for e in o["rhs"]])
        exact = [_expr_text(e) for e in o["exact"]] if "exact" in o else None
        return system, [float(x) for x in o["initial"]], (float(o["interval"][0]), float(o["interval"][1])), \
            float(o["h"]), exact, (float(o["tol"]) if "tol" in o else None)


def loads(text, path=None):
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        m = re.search(r"line (\d+), column (\d+)", str(err))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        if m is None and "end of document" in str(err):
            line = text.count("\n") + (0 if text.endswith("\n") else 1)
        msg = re.sub(r"\s*\(at (line \d+, column \d+|end of document)\)", "", str(err))
        raise ConfigError(f"invalid TOML: {msg}", line, col) from None
    _check_keys(doc, SCHEMA, text)
    return Problem(doc, text, path)


def load(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from None
    return loads(text, str(path))
