# SPDX-License-Identifier: copyleft-next-0.3.1
"""
Report plumbing: ratio records and acceptance flags, the config hash,
and atomic writers for JSON, CSV, mesh/field text and the xUnit
results file read back by the report subcommand.

Every file carries the tool version, the config hash and the seed.
"""

import csv
import hashlib
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
from junitparser import Failure, JUnitXml, TestCase, TestSuite

from navier import __version__

RATIO_EPSILON = 1e-300
SLOPE_LIMIT = 0.05


def config_hash(config):
    """First 16 hex digits of the SHA-256 of the canonical JSON config."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def meta_block(config_digest, seed):
    return {"version": __version__, "config": config_digest, "seed": seed}


def comment_line(meta):
    return "# navier-bench %s config=%s seed=%s" % (meta["version"], meta["config"],
                                                   meta["seed"])


def atomic_write(path, text):
    with open(path + ".new", "w") as out:
        out.write(text)
    os.rename(path + ".new", path)


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def dump_json(payload):
    return json.dumps(_plain(payload), sort_keys=True, indent=2) + "\n"


def write_json(path, payload, meta):
    body = dict(payload)
    body["meta"] = meta
    atomic_write(path, dump_json(body))


def write_csv(path, header, rows, meta):
    buf = io.StringIO()
    buf.write(comment_line(meta) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["%.17g" % v if isinstance(v, float) else v for v in row])
    atomic_write(path, buf.getvalue())


def read_csv(path):
    with open(path) as f:
        lines = [line for line in f if not line.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, list(reader)


def ratio(lhs, rhs):
    return float(lhs) / max(float(rhs), RATIO_EPSILON) if lhs else 0.0


def loglog_slope(xs, ys):
    """Least squares slope of log y against log x over the positive samples."""
    pts = [(x, y) for x, y in zip(xs, ys) if x > 0 and y > 0]
    if len(pts) < 2:
        return 0.0
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    return float(np.polyfit(lx, ly, 1)[0])


@dataclass(frozen=True)
class RatioRecord:
    theorem: str
    T: float
    level: int
    seed: int
    lhs: float
    rhs: float
    factor: str = "1"
    label: str = ""

    @property
    def ratio(self):
        return ratio(self.lhs, self.rhs)

    def sort_key(self):
        return (self.theorem, self.T, self.level, self.seed, self.label)

    def as_dict(self):
        return {"theorem": self.theorem, "T": self.T, "level": self.level,
                "seed": self.seed, "lhs": self.lhs, "rhs": self.rhs,
                "ratio": self.ratio, "factor": self.factor, "label": self.label}


RECORD_HEADER = ("theorem", "T", "level", "seed", "label", "lhs", "rhs", "ratio", "factor")


@dataclass
class Flag:
    name: str
    passed: bool
    value: float
    threshold: float
    rule: str = ""

    def message(self):
        return "%s: measured %.6g, %s %.6g" % (self.name, self.value, self.rule or "limit",
                                               self.threshold)


@dataclass
class RatioReport:
    theorem: str
    records: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    # name -> (header, rows), written as extra CSV files next to the report
    tables: dict = field(default_factory=dict)

    def add(self, record):
        self.records.append(record)

    def sort(self):
        self.records.sort(key=RatioRecord.sort_key)

    def flag(self, name, value, threshold, rule="<="):
        value = float(value)
        if rule == "<=":
            ok = value <= threshold
        elif rule == ">=":
            ok = value >= threshold
        elif rule == "in":
            low, threshold = threshold
            ok = low <= value <= threshold
            rule = "in [%g, %g]" % (low, threshold)
        else:
            raise ValueError("unknown flag rule %r" % rule)
        f = Flag(name, bool(ok and math.isfinite(value)), value, float(threshold), rule)
        self.flags.append(f)
        return f

    @property
    def passed(self):
        return all(f.passed for f in self.flags)

    def select(self, label=None):
        """Records whose label is `label` or starts with `label/`."""
        if label is None:
            return list(self.records)
        return [r for r in self.records
                if r.label == label or r.label.startswith(label + "/")]

    def sup_ratio_by_T(self, label=None):
        sup = {}
        for r in self.select(label):
            sup[r.T] = max(sup.get(r.T, 0.0), r.ratio)
        return dict(sorted(sup.items()))

    def slope(self, label=None):
        sup = self.sup_ratio_by_T(label)
        return loglog_slope(list(sup), list(sup.values()))

    def max_ratio(self, label=None):
        return max((r.ratio for r in self.select(label)), default=0.0)

    def as_dict(self):
        return {
            "theorem": self.theorem,
            "records": [r.as_dict() for r in sorted(self.records, key=RatioRecord.sort_key)],
            "flags": [{"name": f.name, "passed": f.passed, "value": f.value,
                       "threshold": f.threshold, "rule": f.rule} for f in self.flags],
            "summary": dict(self.summary),
            "passed": self.passed,
            "max_ratio": self.max_ratio(),
        }

    def rows(self):
        for r in sorted(self.records, key=RatioRecord.sort_key):
            yield (r.theorem, r.T, r.level, r.seed, r.label, r.lhs, r.rhs, r.ratio, r.factor)


def write_ratio_csv(path, report, meta):
    write_csv(path, RECORD_HEADER, report.rows(), meta)


def write_results_xml(path, reports, meta):
    """One test suite per experiment section, one test case per flag."""
    xml = JUnitXml("navier-bench")
    for report in reports:
        suite = TestSuite(report.theorem)
        suite.add_property("version", meta["version"])
        suite.add_property("config", meta["config"])
        suite.add_property("seed", str(meta["seed"]))
        for f in report.flags:
            case = TestCase(f.name, classname="navier.%s" % report.theorem)
            if not f.passed:
                case.result = [Failure(f.message())]
            suite.add_testcase(case)
        suite.update_statistics()
        xml.add_testsuite(suite)
    xml.update_statistics()
    xml.write(path + ".new", pretty=True)
    os.rename(path + ".new", path)


def read_results(path):
    """(suite, case, status, message) for every test case of results.xml."""
    xml = JUnitXml.fromfile(path)
    out = []
    for suite in xml:
        for case in suite:
            status, message = "pass", ""
            for result in case.result:
                if isinstance(result, Failure):
                    status, message = "fail", result.message or ""
            out.append((suite.name, case.name, status, message))
    return out


def summary_table(bundle, results):
    """Markdown table: experiment, flag, status, max ratio, slope."""
    sections = bundle.get("experiments", {})
    lines = ["| experiment | flag | status | max ratio | slope |",
             "|---|---|---|---|---|"]
    for suite, case, status, _ in results:
        sec = sections.get(suite, {})
        summary = sec.get("summary", {})
        lines.append("| %s | %s | %s | %.4g | %s |" % (
            suite, case, status.upper(), sec.get("max_ratio", 0.0),
            "%.3f" % summary["slope"] if "slope" in summary else "-"))
    failed = sum(1 for r in results if r[2] != "pass")
    lines.append("")
    lines.append("%d flags, %d failed" % (len(results), failed))
    return "\n".join(lines) + "\n"


def write_field(path, field_, meta):
    """Field text format: header line then one row of components per scalar dof."""
    space = field_.space
    buf = io.StringIO()
    buf.write(comment_line(meta) + "\n")
    buf.write("field %d %d %d %s\n" % (space.num_scalar, space.ncomp, space.degree,
                                       "%.17g" % field_.t if field_.t is not None else "-"))
    for row in field_.values():
        buf.write(" ".join("%.17g" % v for v in row) + "\n")
    atomic_write(path, buf.getvalue())


def read_field_values(path):
    with open(path) as f:
        lines = [line.split() for line in f if not line.startswith("#")]
    _, nscalar, ncomp, _, t = lines[0]
    values = np.array([[float(v) for v in row] for row in lines[1:]])
    if values.shape != (int(nscalar), int(ncomp)):
        raise ValueError("field file %s is truncated" % path)
    return values, (None if t == "-" else float(t))


def write_energy_csv(path, traj, forms, meta):
    from navier.spaces import h1_norm, l2_norm

    times = traj.grid.times()
    rows = ((n, float(times[n]), float(traj.energy[n]), l2_norm(forms, traj.v[n]),
             h1_norm(forms, traj.u[n])) for n in range(len(times)))
    write_csv(path, ("step", "t", "energy", "v_l2", "u_h1"), rows, meta)


def write_trace_csv(path, trace, meta):
    rows = []
    s, nf, nq, nc = trace.values.shape
    for n in range(s):
        for f in range(nf):
            for q in range(nq):
                rows.append((n, f, q) + tuple(float(v) for v in trace.values[n, f, q]))
    write_csv(path, ("step", "facet", "point") + tuple("c%d" % i for i in range(nc)),
              rows, meta)


def write_norm_report(stem, report, meta):
    write_json(stem + ".json", report.as_dict(), meta)
    write_csv(stem + ".csv", ("norm", "value"), sorted(report.values.items()), meta)


def log_record(record):
    logging.info("%s T=%g level=%d seed=%d %s ratio=%.4g"
                 % (record.theorem, record.T, record.level, record.seed, record.label,
                    record.ratio))
