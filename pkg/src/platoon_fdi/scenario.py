"""Scenario files, the shipped catalog and end-to-end runs with CSV output.

A scenario is an INI document::

    [scenario]
    name = s1_accel
    dt = 0.001
    horizon = 20

    [platoon]
    n = 10
    gap = 10
    architecture = PF

    [reference]
    initial_speed = 0
    segments = accelerate 10 2; cruise 20; brake 5 2

    [fault]
    k = 4
    t_f = 5
    driver = distracted

Optional sections are ``[identifier]``, ``[blend]``, ``[noise]`` and
``[output]``; every key has a default except those shown above.
"""

from __future__ import annotations

import configparser
import csv
import re
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .blender import BlendConfig, BlendingIdentifier, BlendResult, Integerization
from .driver import DriverKind, FaultScenario
from .identifier import (Hypothesis, IdentificationResult, IdentifierConfig,
                         MultiModelIdentifier, convergence_time, tail_output)
from .platoon import (Architecture, ControllerGains, PlatoonConfig, ReferenceProfile,
                      Segment, simulate)

MODES = ("full-bank", "blending", "both")
FMT = ".17g"


class ScenarioError(ValueError):
    """Schema or invariant violation, tagged with the offending field and line."""

    def __init__(self, message: str, path: str = "", line: Optional[int] = None):
        self.path = path
        self.line = line
        where = path + (f" (line {line})" if line else "")
        super().__init__(f"{where}: {message}" if where else message)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    platoon: PlatoonConfig
    reference: ReferenceProfile
    fault: FaultScenario
    identifier: IdentifierConfig = field(default_factory=IdentifierConfig)
    blend: Optional[BlendConfig] = None
    dt: float = 1e-3
    horizon: float = 20.0
    noise: float = 0.0
    seed: int = 0
    output: Optional[str] = None
    description: str = ""

    def __post_init__(self):
        if not self.dt > 0:
            raise ScenarioError("must be positive", "scenario.dt")
        if not self.horizon > self.fault.t_f:
            raise ScenarioError("horizon must exceed the fault time", "scenario.horizon")
        if self.noise < 0:
            raise ScenarioError("must be non-negative", "noise.sigma")
        try:
            self.fault.validate_for(self.platoon.n)
        except ValueError as exc:
            raise ScenarioError(str(exc), "fault.k") from None
        if self.blend is not None and self.blend.max_length > self.platoon.n:
            raise ScenarioError("exceeds the platoon size", "blend.max_length")

    @property
    def truth(self) -> Hypothesis:
        return Hypothesis(self.fault.k, self.fault.driver)


def _bool(text):
    key = text.strip().lower()
    if key in ("1", "true", "yes", "on"):
        return True
    if key in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    return tuple(float(x) for x in re.split(r"[,\s]+", text.strip()) if x)


def _segments(text):
    out = []
    for part in text.split(";"):
        words = part.split()
        if not words:
            continue
        mode = words[0].lower()
        nums = [float(x) for x in words[1:]]
        if mode == "cruise" and len(nums) == 1:
            out.append(Segment(nums[0], mode))
        elif mode in ("accelerate", "brake") and len(nums) == 2:
            out.append(Segment(nums[0], mode, nums[1]))
        else:
            raise ValueError(f"bad segment {part.strip()!r}; use 'cruise T' or "
                             "'accelerate T A' / 'brake T A'")
    return tuple(out)


def _channels(text):
    return tuple(c.strip() for c in text.split(",") if c.strip())


# section -> key -> (converter, required)
SCHEMA = {
    "scenario": {"name": (str, True), "description": (str, False), "dt": (float, False),
                 "horizon": (float, True)},
    "platoon": {"n": (int, True), "gap": (float, False), "gaps": (_floats, False),
                "architecture": (Architecture.parse, False), "k0": (float, False),
                "b0": (float, False), "sever_both": (_bool, False)},
    "reference": {"initial_speed": (float, False), "segments": (_segments, False)},
    "fault": {"k": (int, True), "t_f": (float, True), "driver": (DriverKind.parse, True),
              "a_saf": (float, False)},
    "identifier": {"alpha": (float, False), "beta": (float, False), "lambda": (float, False),
                   "eps_det": (float, False), "channels": (_channels, False),
                   "max_lag": (float, False), "onset_fit": (float, False),
                   "onset_span": (float, False)},
    "blend": {"min_length": (int, False), "max_length": (int, False), "window": (float, False),
              "driver": (DriverKind.parse, False), "mode": (Integerization.parse, False),
              "overlap": (float, False)},
    "noise": {"sigma": (float, False), "seed": (int, False)},
    "output": {"dir": (str, False)},
}
REQUIRED_SECTIONS = ("scenario", "platoon", "fault")


def _line_index(text: str):
    """``(section, key) -> line number`` for diagnostics."""
    where, section = {}, None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            where.setdefault((section, None), no)
        elif section and line and line[0] not in "#;":
            key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
            where.setdefault((section, key), no)
    return where


def parse_scenario(text: str) -> ScenarioSpec:
    """Parse and validate a scenario document, filling every default."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"malformed document: {exc}") from None
    lines = _line_index(text)
    values = {}
    for section in cp.sections():
        sec = section.lower()
        if sec not in SCHEMA:
            raise ScenarioError("unknown section", sec, lines.get((sec, None)))
        values[sec] = {}
        for key, raw in cp.items(section):
            path, line = f"{sec}.{key}", lines.get((sec, key))
            if key not in SCHEMA[sec]:
                raise ScenarioError("unknown key", path, line)
            conv, _ = SCHEMA[sec][key]
            try:
                values[sec][key] = conv(raw)
            except ValueError as exc:
                raise ScenarioError(str(exc), path, line) from None
    for sec in REQUIRED_SECTIONS:
        if sec not in values:
            raise ScenarioError("missing section", sec)
    for sec, keys in SCHEMA.items():
        for key, (_, required) in keys.items():
            if required and key not in values.get(sec, {}):
                raise ScenarioError("missing required key", f"{sec}.{key}",
                                    lines.get((sec, None)))

    def build(path, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ScenarioError as exc:
            if exc.line is not None or not exc.path:
                raise
            sec, _, key = exc.path.partition(".")
            raise ScenarioError(str(exc).split(": ", 1)[-1], exc.path,
                                lines.get((sec, key or None))) from None
        except ValueError as exc:
            sec, _, key = path.partition(".")
            raise ScenarioError(str(exc), path, lines.get((sec, key or None))) from None

    sc, pl, rf, ft = (values.get(s, {}) for s in ("scenario", "platoon", "reference", "fault"))
    n = pl["n"]
    if "gaps" in pl and "gap" in pl:
        raise ScenarioError("give either gap or gaps, not both", "platoon.gaps",
                            lines.get(("platoon", "gaps")))
    gaps = pl.get("gaps", (pl.get("gap", 10.0),) * n if n > 0 else ())
    gains = build("platoon.k0", ControllerGains, pl.get("k0", 1.0), pl.get("b0", 2.0))
    platoon = build("platoon.gaps" if "gaps" in pl else "platoon.n", PlatoonConfig, n, gaps,
                    gains, pl.get("architecture", Architecture.PF), pl.get("sever_both", False))
    reference = ReferenceProfile(rf.get("segments", ()), rf.get("initial_speed", 0.0))
    fault = build("fault.k", FaultScenario, ft["k"], ft["t_f"], ft["driver"], ft.get("a_saf", 2.0))
    idv = values.get("identifier", {})
    ident = build("identifier", IdentifierConfig,
                  **{("lam" if k == "lambda" else k): v for k, v in idv.items()})
    blend = None
    if "blend" in values:
        bv = values["blend"]
        blend = build("blend", BlendConfig, **bv)
    noise = values.get("noise", {})
    out = values.get("output", {}).get("dir")
    spec = build("scenario", ScenarioSpec, sc["name"], platoon, reference, fault, ident, blend,
                 sc.get("dt", 1e-3), sc["horizon"], noise.get("sigma", 0.0),
                 noise.get("seed", 0), out, sc.get("description", ""))
    return spec


def _num(x) -> str:
    # shortest text that parses back to the same float
    return repr(float(x))


def serialize(spec: ScenarioSpec) -> str:
    """Canonical scenario text with every field written out."""
    p, f, ic = spec.platoon, spec.fault, spec.identifier
    segs = "; ".join(f"{s.mode} {_num(s.duration)}" + ("" if s.mode == "cruise" else f" {_num(s.accel)}")
                     for s in spec.reference.segments)
    lines = ["[scenario]", f"name = {spec.name}"]
    if spec.description:
        lines.append(f"description = {spec.description}")
    lines += [f"dt = {_num(spec.dt)}", f"horizon = {_num(spec.horizon)}", "",
              "[platoon]", f"n = {p.n}"]
    if len(set(p.gaps)) == 1:
        lines.append(f"gap = {_num(p.gaps[0])}")
    else:
        lines.append("gaps = " + ", ".join(_num(g) for g in p.gaps))
    lines += [f"architecture = {p.architecture.value}", f"k0 = {_num(p.gains.k0)}",
              f"b0 = {_num(p.gains.b0)}", f"sever_both = {str(p.sever_both).lower()}", "",
              "[reference]", f"initial_speed = {_num(spec.reference.initial_speed)}",
              f"segments = {segs}", "",
              "[fault]", f"k = {f.k}", f"t_f = {_num(f.t_f)}", f"driver = {f.driver.value}",
              f"a_saf = {_num(f.a_saf)}", "",
              "[identifier]", f"alpha = {_num(ic.alpha)}", f"beta = {_num(ic.beta)}",
              f"lambda = {_num(ic.lam)}", f"eps_det = {_num(ic.eps_det)}",
              f"channels = {', '.join(ic.channels)}", f"max_lag = {_num(ic.max_lag)}",
              f"onset_fit = {_num(ic.onset_fit)}", f"onset_span = {_num(ic.onset_span)}", ""]
    if spec.blend is not None:
        b = spec.blend
        lines += ["[blend]", f"min_length = {b.min_length}", f"max_length = {b.max_length}",
                  f"window = {_num(b.window)}", f"driver = {b.driver.value}",
                  f"mode = {b.mode.value}", f"overlap = {_num(b.overlap)}", ""]
    lines += ["[noise]", f"sigma = {_num(spec.noise)}", f"seed = {spec.seed}", ""]
    if spec.output:
        lines += ["[output]", f"dir = {spec.output}", ""]
    return "\n".join(lines)


def load_scenario(path) -> ScenarioSpec:
    return parse_scenario(Path(path).read_text())


def catalog_names() -> list:
    files = resources.files("platoon_fdi") / "scenarios"
    return sorted(p.name[:-4] for p in files.iterdir() if p.name.endswith(".scn"))


def catalog_text(name: str) -> str:
    return (resources.files("platoon_fdi") / "scenarios" / f"{name}.scn").read_text()


def catalog() -> list:
    """Shipped scenarios: three maneuvers under both architectures plus a blending run."""
    return [parse_scenario(catalog_text(n)) for n in catalog_names()]


def resolve_scenario(name_or_path: str) -> ScenarioSpec:
    path = Path(name_or_path)
    if path.exists():
        return load_scenario(path)
    if name_or_path in catalog_names():
        return parse_scenario(catalog_text(name_or_path))
    raise FileNotFoundError(f"no scenario file or catalog entry named {name_or_path!r}")


@dataclass
class RunReport:
    name: str
    mode: str
    truth: Hypothesis
    identified: Optional[Hypothesis]
    correct: bool
    convergence_time: Optional[float]
    t_detect: Optional[float]
    t_f_hat: Optional[float]
    blend_n_fin: Optional[int] = None
    blend_hypothesis: Optional[Hypothesis] = None
    wall_time: float = 0.0

    def text(self) -> str:
        def hyp(h):
            return "none" if h is None else f"k={h.k} driver={h.d.value}"

        def num(x, unit="s"):
            return "n/a" if x is None else f"{x:.3f} {unit}"

        lines = [f"scenario          {self.name}", f"mode              {self.mode}",
                 f"truth             {hyp(self.truth)}"]
        lines += [f"identified        {hyp(self.identified)}",
                  f"correct           {str(self.correct).lower()}",
                  f"detected at       {num(self.t_detect)}",
                  f"fault time est.   {num(self.t_f_hat)}",
                  f"converged at      {num(self.convergence_time)}"]
        if self.blend_n_fin is not None:
            lines += [f"blend length      {self.blend_n_fin}",
                      f"blend identified  {hyp(self.blend_hypothesis)}"]
        lines.append(f"wall time         {self.wall_time:.2f} s")
        return "\n".join(lines) + "\n"


def measured_output(spec: ScenarioSpec):
    """Faulted simulation and the (optionally noisy) tail measurement."""
    trace = simulate(spec.platoon, spec.reference, spec.horizon, spec.dt, fault=spec.fault)
    y = tail_output(trace, spec.identifier.channels)
    if spec.noise > 0:
        rng = np.random.default_rng(spec.seed)
        y = y + rng.normal(0.0, spec.noise, y.shape)
    return trace, y


def trace_rows(trace):
    n = trace.p.shape[1]
    header = ["t"] + [f"p{i}" for i in range(1, n + 1)] + [f"v{i}" for i in range(1, n + 1)] \
        + [f"u{i}" for i in range(1, n + 1)]
    data = np.column_stack([trace.t, trace.p, trace.v, trace.u])
    return header, data


def identification_rows(result: IdentificationResult):
    labels = [h.label for h in result.hypotheses]
    header = ["t"] + [f"J_{l}" for l in labels] + ["k_hat", "d_hat"]
    rows = []
    for j, t in enumerate(result.t):
        h = result.hypotheses[result.selected[j]]
        rows.append([format(t, FMT)] + [format(c, FMT) for c in result.costs[j]]
                    + [str(h.k), h.d.letter])
    return header, rows


def blend_rows(result: BlendResult):
    header = ["t", "W1", "W2", "N_eff"]
    return header, [[format(x, FMT) for x in r] for r in result.rows()]


def report_from_rows(name: str, mode: str, truth: Hypothesis, header, rows,
                     t_detect=None, t_f_hat=None, **extra) -> RunReport:
    """Report assembled only from identification CSV rows."""
    if rows:
        t = [float(r[0]) for r in rows]
        sel = [Hypothesis(int(r[-2]), DriverKind.parse(r[-1])) for r in rows]
        final = sel[-1]
        conv = convergence_time(np.array(t), sel, truth)
    else:
        final, conv = None, None
    return RunReport(name, mode, truth, final, final == truth, conv, t_detect, t_f_hat, **extra)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def run(spec: ScenarioSpec, mode: str = "full-bank", out_dir=None) -> RunReport:
    """Simulate, identify and write ``trace.csv``, ``identification.csv``,
    ``blend.csv`` and ``report.txt`` into ``out_dir`` (if given)."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode != "full-bank" and spec.blend is None:
        spec = replace(spec, blend=BlendConfig())
    out = Path(out_dir) if out_dir is not None else (Path(spec.output) if spec.output else None)
    start = time.perf_counter()
    trace, y = measured_output(spec)
    truth = spec.truth
    id_rows, id_header, t_detect, t_f_hat = [], ["t", "k_hat", "d_hat"], None, None
    if mode in ("full-bank", "both"):
        ident = MultiModelIdentifier(spec.platoon, spec.reference, spec.horizon, spec.dt,
                                     spec.fault.a_saf, spec.identifier)
        res = ident.identify(y)
        id_header, id_rows = identification_rows(res)
        t_detect, t_f_hat = res.t_detect, res.t_f_hat
    blend_res = None
    if mode in ("blending", "both"):
        blend_res = BlendingIdentifier(spec.platoon, spec.reference, spec.horizon, spec.dt,
                                       spec.fault.a_saf, spec.identifier, spec.blend).identify(y)
        if mode == "blending":
            id_header, id_rows = identification_rows(blend_res.second_step)
            t_detect, t_f_hat = blend_res.t_detect, blend_res.t_f_hat
    extra = {}
    if blend_res is not None:
        extra = {"blend_n_fin": blend_res.n_fin, "blend_hypothesis": blend_res.hypothesis}
    report = report_from_rows(spec.name, mode, truth, id_header, id_rows, t_detect, t_f_hat, **extra)
    report.wall_time = time.perf_counter() - start
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        header, data = trace_rows(trace)
        _write_csv(out / "trace.csv", header,
                   ([format(x, FMT) for x in row] for row in data))
        _write_csv(out / "identification.csv", id_header, id_rows)
        if blend_res is not None:
            _write_csv(out / "blend.csv", *blend_rows(blend_res))
        (out / "report.txt").write_text(report.text())
    return report
