"""Flat ``section.key = value`` run configuration.

Blank lines and lines starting with ``#`` are ignored. Every key has a
documented default; unknown keys, duplicates, bad types and violated
constraints are all reported together, each with its line number.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .field import default_grid, discretization
from .functional import ProblemParams, constant_external, cosine_external
from .nonlinear import HypothesisConstants, SolerG, SolerPower, Smoothed, default_constants
from .solver import FlowConfig, NewtonConfig, eps_schedule
from .spectral import LatticeSpec


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


_CONST_KEYS = ("A1", "A2", "A3", "A4", "A5", "alpha", "beta", "nu", "alpha1", "alpha2")

# key -> (type, default)
SCHEMA: dict[str, tuple[type, object]] = {
    "lattice.l1": (float, 1.0),
    "lattice.l2": (float, 1.0),
    "lattice.l3": (float, 1.0),
    "lattice.K": (int, 8),
    "grid.n1": (int, 0),  # 0: 2(2K+1)
    "grid.n2": (int, 0),
    "grid.n3": (int, 0),
    "params.m": (float, 1.0),
    "params.a": (float, 0.5),
    "params.eps0": (float, 0.5),
    "params.eps_min": (float, 1e-3),
    "params.eps_steps": (int, 12),
    "external.kind": (str, "none"),
    "external.amplitude": (float, 0.1),
    "external.axis": (int, 1),
    "model.type": (str, "soler_power"),
    "model.p": (float, 1.25),
    "model.b": (float, 0.0),
    "model.delta": (float, 1e-6),
    **{f"model.{k}": (float, None) for k in _CONST_KEYS},
    "solver.neg_cutoff": (float, 3.0),
    "solver.flow_lambda": (int, 32),
    "solver.flow_neg": (int, 16),
    "solver.lambda_floor": (float, 1e-4),
    "solver.tol_level": (float, 1e-6),
    "solver.max_sweeps": (int, 200),
    "solver.newton_tol": (float, 1e-12),
    "solver.newton_max_iter": (int, 40),
    "solver.jac_delta": (float, 1e-6),
    "solver.final_tol": (float, 1e-6),
    "solver.seed": (int, 1729),
    "solver.c2_samples": (int, 10_000),
    "solver.c2_margin": (float, 1e-3),
    "solver.embed_samples": (int, 200),
    "solver.audit_samples": (int, 1000),
    "output.dir": (str, "runs/default"),
}

_CHOICES = {
    "external.kind": ("none", "constant", "cosine"),
    "model.type": ("soler_power", "smoothed", "soler_g"),
}


def _convert(typ, raw: str):
    if typ is str:
        if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
            return raw[1:-1]
        return raw
    if typ is int:
        v = float(raw) if any(ch in raw for ch in ".eE") else int(raw)
        if int(v) != v:
            raise ValueError
        return int(v)
    return float(raw)


@dataclass
class RunConfig:
    values: dict
    lines: dict = field(default_factory=dict)  # key -> line number where set

    def __getitem__(self, key):
        return self.values[key]

    # derived objects ------------------------------------------------------

    @property
    def lattice(self) -> LatticeSpec:
        v = self.values
        return LatticeSpec(v["lattice.l1"], v["lattice.l2"], v["lattice.l3"], v["lattice.K"])

    @property
    def grid(self) -> tuple[int, int, int]:
        lat = self.lattice
        auto = default_grid(lat)
        return tuple(self.values[f"grid.n{i}"] or auto[i - 1] for i in (1, 2, 3))

    def external(self):
        v = self.values
        if v["external.kind"] == "none":
            return None
        if v["external.kind"] == "constant":
            return constant_external(self.grid, v["external.amplitude"])
        return cosine_external(self.lattice, self.grid, v["external.amplitude"], v["external.axis"] - 1)

    def params(self, eps: float | None = None) -> ProblemParams:
        v = self.values
        return ProblemParams(v["params.m"], v["params.a"], v["params.eps0"] if eps is None else eps,
                             self.lattice, self.external())

    def constants(self) -> HypothesisConstants:
        v = self.values
        base = default_constants(v["model.p"], v["model.b"])
        over = {k: v[f"model.{k}"] for k in _CONST_KEYS if v[f"model.{k}"] is not None}
        c = HypothesisConstants(**{**base.__dict__, **over})
        c.validate()
        return c

    def model(self):
        v = self.values
        kind = v["model.type"]
        if kind == "soler_g":
            return SolerG.positive_power(v["model.p"], self.constants())
        SolerPower(v["model.p"], v["model.b"])  # exponent window before the derived constants
        base = SolerPower(v["model.p"], v["model.b"], self.constants())
        if kind == "smoothed":
            return Smoothed(base, v["model.delta"])
        return base

    def schedule(self) -> list[float]:
        v = self.values
        return eps_schedule(v["params.eps0"], v["params.eps_min"], v["params.eps_steps"])

    def flow_config(self) -> FlowConfig:
        v = self.values
        return FlowConfig(n_lambda=v["solver.flow_lambda"], n_neg=v["solver.flow_neg"],
                          lambda_floor=v["solver.lambda_floor"], tol_level=v["solver.tol_level"],
                          max_sweeps=v["solver.max_sweeps"])

    def newton_config(self) -> NewtonConfig:
        v = self.values
        return NewtonConfig(tol=v["solver.newton_tol"], max_iter=v["solver.newton_max_iter"],
                            jac_delta=v["solver.jac_delta"])

    def prepare_kwargs(self) -> dict:
        v = self.values
        return dict(grid=self.grid, neg_cutoff=v["solver.neg_cutoff"], seed=v["solver.seed"],
                    embed_samples=v["solver.embed_samples"], audit_samples=v["solver.audit_samples"],
                    c2_samples=v["solver.c2_samples"], c2_margin=v["solver.c2_margin"])

    # identity -------------------------------------------------------------

    def canonical_text(self) -> str:
        """All keys with resolved values in schema order; the basis of the config hash."""
        out = []
        for key in SCHEMA:
            val = self.values[key]
            out.append(f"{key} = {'' if val is None else repr(val) if isinstance(val, float) else val}")
        return "\n".join(out) + "\n"

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises ConfigError listing every problem with its line number."""
    values = {k: d for k, (_, d) in SCHEMA.items()}
    lines: dict[str, int] = {}
    errors: list[str] = []
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            errors.append(f"line {no}: expected 'section.key = value', got {line!r}")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if "#" in val and not val.startswith(("'", '"')):
            val = val.split("#", 1)[0].strip()
        if key not in SCHEMA:
            errors.append(f"line {no}: unknown key {key!r}")
            continue
        if key in lines:
            errors.append(f"line {no}: duplicate key {key!r} (first set on line {lines[key]})")
            continue
        typ = SCHEMA[key][0]
        try:
            conv = _convert(typ, val)
        except ValueError:
            errors.append(f"line {no}: {key} expects {typ.__name__}, got {val!r}")
            continue
        if key in _CHOICES and conv not in _CHOICES[key]:
            errors.append(f"line {no}: {key} must be one of {', '.join(_CHOICES[key])}, got {conv!r}")
            continue
        values[key] = conv
        lines[key] = no
    cfg = RunConfig(values, lines)
    if not errors:
        errors.extend(_validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def _where(cfg, *keys):
    nos = sorted({cfg.lines[k] for k in keys if k in cfg.lines})
    if not nos:
        return "defaults: "
    return f"line {nos[0]}: " if len(nos) == 1 else f"lines {', '.join(map(str, nos))}: "


def _validate(cfg: RunConfig) -> list[str]:
    """Re-run the owning modules' constructors so their rules apply at parse time."""
    errs = []
    v = cfg.values
    checks = [
        (("lattice.l1", "lattice.l2", "lattice.l3", "lattice.K"), lambda: cfg.lattice),
        (("grid.n1", "grid.n2", "grid.n3", "lattice.K"), lambda: discretization(cfg.lattice, cfg.grid)),
        (("params.a", "params.m", "external.amplitude", "external.kind"), lambda: cfg.params()),
        (("model.type", "model.p", "model.b", "model.delta") + tuple(f"model.{k}" for k in _CONST_KEYS),
         lambda: cfg.model()),
        (("params.eps0", "params.eps_min", "params.eps_steps"), lambda: cfg.schedule()),
    ]
    for keys, build in checks:
        try:
            build()
        except (ValueError, TypeError) as err:
            errs.append(f"{_where(cfg, *keys)}{err}")
    if not 1 <= v["external.axis"] <= 3:
        errs.append(f"{_where(cfg, 'external.axis')}external.axis must be 1, 2 or 3")
    positive = ("solver.neg_cutoff", "solver.tol_level", "solver.newton_tol", "solver.final_tol",
                "solver.lambda_floor", "solver.c2_margin")
    for k in positive:
        if not v[k] > 0:
            errs.append(f"{_where(cfg, k)}{k} must be > 0")
    for k in ("solver.flow_lambda", "solver.flow_neg", "solver.max_sweeps", "solver.newton_max_iter",
              "solver.c2_samples", "solver.embed_samples", "solver.audit_samples"):
        if v[k] < 1:
            errs.append(f"{_where(cfg, k)}{k} must be >= 1")
    if v["solver.flow_lambda"] < 2:
        errs.append(f"{_where(cfg, 'solver.flow_lambda')}solver.flow_lambda must be >= 2")
    if not 0 < v["solver.lambda_floor"] < 1:
        errs.append(f"{_where(cfg, 'solver.lambda_floor')}solver.lambda_floor must lie in (0, 1)")
    return errs


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())

