"""Structured results shared by the library entry points and the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field

PASSING_VERDICTS = ("pass", "found", "invariant Lagrangian obstruction vanishes")


@dataclass
class Report:
    """A list of residual families plus free-form details.

    The verdict passes iff every required family passes, unless a command
    sets ``verdict`` explicitly (the multiplier search does).
    """

    title: str
    families: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    verdict: str | None = None
    sampling: dict | None = None

    @property
    def passed(self):
        if self.verdict is not None:
            return self.verdict in PASSING_VERDICTS
        return all(f.passed for f in self.families if f.required)

    def family(self, name):
        for f in self.families:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def max_residual(self):
        vals = [f.max_residual for f in self.families if f.required]
        return max(vals) if vals else 0.0

    def to_dict(self):
        out = {
            "title": self.title,
            "verdict": self.verdict or ("pass" if self.passed else "fail"),
            "families": [f.to_dict() for f in self.families],
        }
        if self.sampling is not None:
            out["sampling"] = self.sampling
        if self.details:
            out["details"] = self.details
        return out

    def render(self):
        lines = [f"{self.title}: {self.verdict or ('PASS' if self.passed else 'FAIL')}"]
        for f in self.families:
            mark = "ok " if f.passed else "BAD"
            opt = "" if f.required else " (informational)"
            lines.append(f"  [{mark}] {f.name}: max residual {f.max_residual:.3e} over {f.count} instance(s){opt}")
            if not f.passed and f.worst_point:
                pt = ", ".join(f"{k}={v:.6g}" for k, v in f.worst_point.items())
                lines.append(f"        worst at {pt}")
            if f.note:
                lines.append(f"        {f.note}")
        return "\n".join(lines)


ValidationReport = Report
ResidualReport = Report
