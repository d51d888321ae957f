"""Seeded experiment runner: JSON configs in, JSON/CSV reports out.

A config is a JSON object with a ``battery`` name, a ``name`` used for the
report files, explicit ``seeds`` and battery parameters.  Top-level
parameters are defaults; an optional ``cases`` list overrides them per case.
Validation errors name the file, the line and the offending key.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import multiindex as mi
from . import symdiff
from .aae import build_extension, build_family_extensions, decay_fit
from .expansion import (GL, G, acommb_residual, basestep_residual, bound_experiment, check_hypotheses,
                        hadamard_probe, leibniz_residual, lemma1_residual, make_instance,
                        remainder_direct, remainder_quad_error, taylor_terms, REMAINDER_METHODS)
from .functions import FAMILIES, cutoff_family, make_family
from .hs_calculus import (calibrate_constant, default_quadrature, hs_apply, hs_apply_cutoff,
                          hs_constant)
from .operator_model import commutator, make_commuting_tuple, op_norm, spectral_apply

BATTERIES = ("verify-symbolic", "verify-lemmas", "verify-theorem", "hs-apply",
             "bound-sweep", "hadamard-probe", "aae-probe")


class ConfigError(ValueError):
    """A config problem located at ``source:line``."""

    def __init__(self, source: str, line: int | None, path: tuple, message: str):
        self.source, self.line, self.path, self.message = source, line, path, message
        where = f"{source}:{line}" if line else source
        key = ".".join(str(p) for p in path)
        super().__init__(f"{where}: {key + ': ' if key else ''}{message}")


# ---------------------------------------------------------------------------
# locating keys in JSON text


def key_lines(text: str) -> dict[tuple, int]:
    """Map each key path (and array element path) of a JSON document to its line."""
    lines: dict[tuple, int] = {}
    stack: list[list] = []   # [kind, key-or-index, expecting-key-or-recorded]
    line, i, n = 1, 0, len(text)

    def here():
        return tuple(e[1] for e in stack if e[1] is not None)

    def value_start():
        # first token of an array element records its line
        if stack and stack[-1][0] == "arr" and not stack[-1][2]:
            lines[here()] = line
            stack[-1][2] = True

    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
        elif c == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            s = json.loads(text[i:j + 1]) if j < n else text[i + 1:]
            if stack and stack[-1][0] == "obj" and stack[-1][2]:
                stack[-1][1] = s
                stack[-1][2] = False
                lines[here()] = line
            else:
                value_start()
            i = j
        elif c == "{":
            value_start()
            stack.append(["obj", None, True])
        elif c == "[":
            value_start()
            stack.append(["arr", 0, False])
        elif c in "}]":
            if stack:
                stack.pop()
        elif c == ",":
            if stack and stack[-1][0] == "obj":
                stack[-1][2] = True
            elif stack:
                stack[-1][1] += 1
                stack[-1][2] = False
        elif not c.isspace() and c != ":":
            value_start()
        i += 1
    return lines


# ---------------------------------------------------------------------------
# schema


REQUIRED = object()


@dataclass(frozen=True)
class Field:
    kind: str                      # int, float, bool, str, ints, floats, strs, seeds, family, quad, any
    default: Any = REQUIRED
    choices: tuple | None = None
    low: float | None = None
    high: float | None = None
    doc: str = ""


def _f(kind, default=REQUIRED, **kw):
    return Field(kind, default, **kw)


COMMON = {
    "battery": _f("str", choices=BATTERIES),
    "name": _f("str"),
    "seeds": _f("seeds"),
    "description": _f("str", ""),
    "out": _f("str", "reports"),
    "cases": _f("any", None),
}

QUAD_KEYS = {"nodes": "int", "levels": "int", "u_panels": "int", "w_nodes": "int",
             "layout": "str", "grading": "int", "u_min": "float", "angles": "int"}

SCHEMAS = {
    "verify-symbolic": {
        "checks": _f("strs", ["lemma0", "h1", "h2"], choices=("lemma0", "h1", "h2")),
        "nus": _f("ints", [1, 2, 3], low=1),
        "max_degree": _f("int", 6, low=0),
        "time_limit": _f("float", 60.0, low=0),
    },
    "verify-lemmas": {
        "identity": _f("str", choices=("basestep", "lemma1", "acommb", "leibniz")),
        "nus": _f("ints", [1, 2], low=1),
        "dims": _f("ints", [8], low=1),
        "n_max": _f("int", 0, low=0),
        "alpha0_max": _f("int", 0, low=0),
        "factor_counts": _f("ints", [2, 3], low=1),
        "tolerance": _f("float", 1e-9, low=0),
        "spectrum_scale": _f("float", 2.0, low=0),
    },
    "verify-theorem": {
        "nu": _f("int", low=1, high=2),
        "d": _f("int", low=1),
        "ns": _f("ints", [0, 1, 2], low=0),
        "family": _f("family", {"name": "shifted_inverse_bracket"}),
        "N": _f("int", None, low=1),
        "quad": _f("quad", {}),
        "method": _f("str", "taylor", choices=REMAINDER_METHODS),
        "factor": _f("float", 3.0, low=0),
        "spectrum_scale": _f("float", 2.0, low=0),
        "adjoint_tolerance": _f("float", 1e-9, low=0),
        "operator": _f("str", "random", choices=("random", "identity", "commuting")),
    },
    "hs-apply": {
        "nu": _f("int", low=1),
        "d": _f("int", low=1),
        "family": _f("family", {"name": "bracket_power", "s": -2.0}),
        "N": _f("int", 3, low=1),
        "quad": _f("quad", {}),
        "tolerance": _f("float", None, low=0),
        "estimate": _f("bool", True),
        "estimate_factor": _f("float", 3.0, low=0),
        "calibrate": _f("bool", False),
        "calibration_tolerance": _f("float", None, low=0),
        "spectrum_scale": _f("float", 1.0, low=0),
        "time_limit": _f("float", None, low=0),
        "cutoff_ks": _f("floats", None, low=0),
    },
    "bound-sweep": {
        "nu": _f("int", low=1),
        "n": _f("int", low=0),
        "t1": _f("float"),
        "t2": _f("float"),
        "family": _f("family", {"name": "bracket_power", "s": -2.0}),
        "dims": _f("ints", [4, 8, 16], low=1),
        "spread_limit": _f("float", 10.0, low=1),
        "spectrum_scale": _f("float", 2.0, low=0),
    },
    "hadamard-probe": {
        "nu": _f("int", low=1),
        "n": _f("int", low=0),
        "t1": _f("float", 0.0),
        "t2": _f("float", 0.0),
        "d": _f("int", 6, low=1),
        "ell": _f("int", 1, low=1),
        "v_max": _f("float", 1e-1, low=0),
        "v_min": _f("float", 1e-4, low=0),
        "v_count": _f("int", 16, low=2),
        "u0": _f("any", "eigenpoint"),
        "slack": _f("float", 0.2, low=0),
        "spectrum_scale": _f("float", 1.0, low=0),
    },
    "aae-probe": {
        "nu": _f("int", low=1),
        "N": _f("int", low=1),
        "family": _f("family", {"name": "bracket_power", "s": -2.0}),
        "u0": _f("floats", None),
        "tolerance": _f("float", 0.2, low=0),
    },
}


@dataclass
class ExperimentConfig:
    battery: str
    name: str
    seeds: list[int]
    cases: list[dict]
    out: str = "reports"
    description: str = ""
    source: str = "<config>"
    raw: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {"battery": self.battery, "name": self.name, "seeds": self.seeds,
                "description": self.description, "cases": self.cases}


def _check_value(f: Field, value, err: Callable[[str], ConfigError]):
    kind = f.kind
    if value is None and f.default is None:
        return None
    if kind == "any":
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise err(f"expected an integer, got {value!r}")
    elif kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise err(f"expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise err("expected a finite number")
    elif kind == "bool":
        if not isinstance(value, bool):
            raise err(f"expected true or false, got {value!r}")
    elif kind == "str":
        if not isinstance(value, str):
            raise err(f"expected a string, got {value!r}")
    elif kind in ("ints", "floats", "strs"):
        if not isinstance(value, list) or not value:
            raise err("expected a non-empty list")
        sub = Field(kind[:-1] if kind != "strs" else "str", choices=f.choices, low=f.low, high=f.high)
        return [_check_value(sub, x, lambda m, i=i: err(f"element {i}: {m}")) for i, x in enumerate(value)]
    if f.choices is not None and value not in f.choices:
        raise err(f"must be one of {list(f.choices)}, got {value!r}")
    if f.low is not None and value < f.low:
        raise err(f"must be >= {f.low}, got {value!r}")
    if f.high is not None and value > f.high:
        raise err(f"must be <= {f.high}, got {value!r}")
    return value


def _parse_seeds(value, err):
    if isinstance(value, dict):
        extra = set(value) - {"start", "count"}
        if extra or set(value) != {"start", "count"}:
            raise err('seed ranges need exactly the keys "start" and "count"')
        start, count = value["start"], value["count"]
        if not all(isinstance(x, int) and not isinstance(x, bool) for x in (start, count)) or count < 1:
            raise err("seed range start and count must be integers with count >= 1")
        return list(range(start, start + count))
    if isinstance(value, list) and value and all(isinstance(x, int) and not isinstance(x, bool)
                                                 for x in value):
        return list(value)
    raise err('expected a list of integers or {"start": s, "count": c}')


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path), seed)


def parse_config(text: str, source: str = "<config>", seed: int | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(source, exc.lineno, (), f"invalid JSON: {exc.msg}") from None
    lines = key_lines(text)

    def err_at(path):
        line = None
        for k in range(len(path), -1, -1):
            if path[:k] in lines:
                line = lines[path[:k]]
                break
        return lambda msg: ConfigError(source, line, path, msg)

    if not isinstance(raw, dict):
        raise ConfigError(source, 1, (), "the config must be a JSON object")
    battery = raw.get("battery")
    if battery not in SCHEMAS:
        if "battery" not in raw:
            raise ConfigError(source, 1, ("battery",), f"missing; choose one of {list(BATTERIES)}")
        raise err_at(("battery",))(f"unknown battery {battery!r}; choose one of {list(BATTERIES)}")
    schema = SCHEMAS[battery]
    for key in raw:
        if key not in COMMON and key not in schema:
            raise err_at((key,))(f"unknown key for battery {battery}")
    for key, f in COMMON.items():
        if f.default is REQUIRED and key not in raw:
            raise ConfigError(source, 1, (key,), "missing required key")
    seeds = _parse_seeds(raw["seeds"], err_at(("seeds",)))
    if seed is not None:
        seeds = list(range(seed, seed + len(seeds)))
    name = _check_value(COMMON["name"], raw["name"], err_at(("name",)))
    out = _check_value(COMMON["out"], raw.get("out", "reports"), err_at(("out",)))
    desc = _check_value(COMMON["description"], raw.get("description", ""), err_at(("description",)))

    defaults = {k: raw[k] for k in schema if k in raw}
    case_list = raw.get("cases")
    if case_list is None:
        case_items = [((), {})]
    else:
        if not isinstance(case_list, list) or not case_list:
            raise err_at(("cases",))("expected a non-empty list of objects")
        case_items = []
        for i, c in enumerate(case_list):
            if not isinstance(c, dict):
                raise err_at(("cases", i))("each case must be an object")
            for key in c:
                if key not in schema:
                    raise err_at(("cases", i, key))(f"unknown key for battery {battery}")
            case_items.append((("cases", i), c))
    cases = []
    for prefix, override in case_items:
        case = {}
        for key, f in schema.items():
            if key in override:
                value, where = override[key], prefix + (key,)
            elif key in defaults:
                value, where = defaults[key], (key,)
            elif f.default is REQUIRED:
                raise err_at(prefix or ())(f"missing required key {key!r}")
            else:
                case[key] = f.default
                continue
            case[key] = _validate_field(battery, key, f, value, where, err_at)
        def locate(key, prefix=prefix, override=override):
            if key in override:
                return err_at(prefix + (key,))
            return err_at((key,) if key in defaults else prefix)

        _validate_case(battery, case, locate)
        cases.append(case)
    return ExperimentConfig(battery, name, seeds, cases, out, desc, source, raw)


def _validate_field(battery, key, f, value, where, err_at):
    if f.kind == "family":
        if not isinstance(value, dict) or "name" not in value:
            raise err_at(where)('expected an object with a "name"')
        if value["name"] not in FAMILIES:
            raise err_at(where + ("name",))(f"unknown family {value['name']!r}; known: {sorted(FAMILIES)}")
        for k, v in value.items():
            if k == "name":
                continue
            if k == "s":
                _check_value(Field("float"), v, err_at(where + (k,)))
            elif k == "params":
                _check_value(Field("floats"), v, err_at(where + (k,)))
            else:
                raise err_at(where + (k,))('family options are "s" and "params"')
        return dict(value)
    if f.kind == "quad":
        if not isinstance(value, dict):
            raise err_at(where)("expected an object of quadrature settings")
        out = {}
        for k, v in value.items():
            if k not in QUAD_KEYS:
                raise err_at(where + (k,))(f"unknown quadrature setting; known: {sorted(QUAD_KEYS)}")
            out[k] = _check_value(Field(QUAD_KEYS[k]), v, err_at(where + (k,)))
        return out
    return _check_value(f, value, err_at(where))


def _family_kwargs(spec):
    return {k: v for k, v in spec.items() if k != "name"}


def _validate_case(battery, case, locate):
    """Cross-field checks; ``locate(key)`` builds an error at the line that set ``key``."""
    if battery == "bound-sweep":
        fam = make_family(case["family"]["name"], case["nu"], **_family_kwargs(case["family"]))
        try:
            check_hypotheses(case["n"], case["t1"], case["t2"], fam.s)
        except ValueError as exc:
            raise locate("t1")(str(exc)) from None
    if battery == "hadamard-probe":
        try:
            check_hypotheses(case["n"], case["t1"], case["t2"])
        except ValueError as exc:
            raise locate("t1")(str(exc)) from None
        if not case["v_min"] < case["v_max"]:
            raise locate("v_min")("v_min must be below v_max")
        if not 1 <= case["ell"] <= case["nu"]:
            raise locate("ell")(f"ell must lie in 1..{case['nu']}")
        u0 = case["u0"]
        if not (u0 == "eigenpoint" or (isinstance(u0, list) and len(u0) == case["nu"]
                                       and all(isinstance(x, (int, float)) for x in u0))):
            raise locate("u0")('u0 must be "eigenpoint" or a list of nu numbers')
    if battery == "aae-probe" and case["u0"] is not None and len(case["u0"]) != case["nu"]:
        raise locate("u0")("u0 needs one entry per component")
    if battery == "hs-apply" and case["cutoff_ks"] is None:
        fam = make_family(case["family"]["name"], case["nu"], **_family_kwargs(case["family"]))
        if fam.s >= 0:
            raise locate("family")(f"s = {fam.s:g} >= 0 needs cutoff_ks (increasing cutoff scales)")
    if battery in ("hs-apply",) and case["cutoff_ks"] is not None:
        ks = case["cutoff_ks"]
        if any(b <= a for a, b in zip(ks, ks[1:])) or ks[0] <= 0:
            raise locate("cutoff_ks")("cutoff_ks must be positive and increasing")
    if battery == "verify-theorem" and case["method"] == "sandwich" and case["nu"] > 1 and case["d"] > 4:
        raise locate("method")("the sandwich method is limited to d <= 4 when nu = 2")


# ---------------------------------------------------------------------------
# batteries; each returns (cases report, csv tables, passed)


def _symbolic(cfg, case):
    t0 = time.perf_counter()
    counts = {c: 0 for c in case["checks"]}
    failures = []
    for nu in case["nus"]:
        for alpha in mi.enumerate_upto(nu, case["max_degree"]):
            if "lemma0" in counts:
                counts["lemma0"] += 1
                if symdiff.derivative_of_g(alpha) != symdiff.lemma0_closed_form(alpha):
                    failures.append({"check": "lemma0", "alpha": list(alpha)})
            for beta in mi.enumerate_half(alpha):
                for j in range(1, nu + 1):
                    for chk, fn in (("h1", symdiff.check_h1), ("h2", symdiff.check_h2)):
                        if chk in counts:
                            counts[chk] += 1
                            if not fn(alpha, beta, j):
                                failures.append({"check": chk, "alpha": list(alpha), "beta": list(beta),
                                                 "axis": j})
    elapsed = time.perf_counter() - t0
    rep = {"checks": counts, "failures": failures}
    return rep, {}, not failures, {"seconds": elapsed, "time_limit_ok": elapsed < case["time_limit"]}


def _lemmas(cfg, case):
    ident = case["identity"]
    worst, count = 0.0, 0
    rows = []
    for seed in cfg.seeds:
        rng = np.random.default_rng(seed)
        for nu in case["nus"]:
            for d in case["dims"]:
                A, B = make_instance(seed, nu, d, case["spectrum_scale"])
                z = rng.standard_normal(nu) + 1j * rng.standard_normal(nu)
                res = []
                if ident == "basestep":
                    for a0 in mi.enumerate_upto(nu, case["alpha0_max"]):
                        res.append(basestep_residual(A, B, a0, z))
                elif ident == "lemma1":
                    for n in range(case["n_max"] + 1):
                        for a0 in mi.enumerate_upto(nu, case["alpha0_max"]):
                            res.append(lemma1_residual(A, B, a0, n, z))
                elif ident == "acommb":
                    for n in range(case["n_max"] + 1):
                        for ell in range(1, nu + 1):
                            res.append(acommb_residual(A, B, ell, n, z))
                else:
                    kinds = [G] + [GL(l) for l in range(1, nu + 1)]
                    for k in case["factor_counts"]:
                        for combo in np.ndindex(*([len(kinds)] * k)):
                            factors = [kinds[c] for c in combo]
                            for n in range(case["n_max"] + 1):
                                res.append(leibniz_residual(A, B, factors, n, z))
                count += len(res)
                m = max(res) if res else 0.0
                worst = max(worst, m)
                rows.append([seed, nu, d, m])
    rep = {"identity": ident, "evaluations": count, "max_residual": worst, "tolerance": case["tolerance"]}
    return rep, {"residuals": (["seed", "nu", "d", "max_residual"], rows)}, worst <= case["tolerance"], {}


def _theorem(cfg, case):
    nu, d = case["nu"], case["d"]
    fam = make_family(case["family"]["name"], nu, **_family_kwargs(case["family"]))
    out, ok, rows = [], True, []
    for seed in cfg.seeds:
        A, B = make_instance(seed, nu, d, case["spectrum_scale"])
        if case["operator"] == "identity":
            B = np.eye(d, dtype=complex)
        elif case["operator"] == "commuting":
            B = A.diag_to_matrix(np.diagonal(A.to_eigenbasis(B)))
        for n in case["ns"]:
            N = case["N"] if case["N"] is not None else n + 2 * nu + 1
            exts = build_family_extensions(fam, N)
            quad = default_quadrature(exts[0], A, **case["quad"])
            vals, ests = remainder_quad_error(A, B, exts, n, quad, case["method"])
            for f, R, est in zip(fam.members(), vals, ests):
                direct = remainder_direct(A, B, f, n)
                err = op_norm(R - direct)
                # adjoint symmetry: R(A, -B*, f, right) = R(A, B, f, left)*
                adj = op_norm(remainder_direct(A, -B.conj().T, f, n, side="right") - direct.conj().T)
                adj_rel = adj / (op_norm(B) * max(1.0, op_norm(spectral_apply(A, f))))
                # rounding floor, so that B commuting with A (exact answer 0) can pass
                floor = 1e-12 * op_norm(B) * max(1.0, op_norm(spectral_apply(A, f)))
                good = err <= case["factor"] * est + floor and adj_rel <= case["adjoint_tolerance"]
                ok &= good
                out.append({"seed": seed, "n": n, "N": N, "member": f.name, "error": err,
                            "estimate": est, "ratio": err / est if est > 0 else None,
                            "remainder_norm": op_norm(direct), "adjoint_residual": adj_rel,
                            "passed": good})
                rows.append([seed, n, N, f.name, err, est])
            out[-1]["quadrature"] = quad.to_dict()
    return ({"results": out}, {"route": (["seed", "n", "N", "member", "error", "estimate"], rows)},
            ok, {})


def _hs(cfg, case):
    nu, d = case["nu"], case["d"]
    fam = make_family(case["family"]["name"], nu, **_family_kwargs(case["family"]))
    f = fam.members()[0]
    t0 = time.perf_counter()
    out, ok = [], True
    for seed in cfg.seeds:
        A = make_commuting_tuple(seed, nu, d, case["spectrum_scale"])
        exact = spectral_apply(A, f)
        entry = {"seed": seed, "function": f.name, "N": case["N"]}
        if case["cutoff_ks"] is not None:
            # s >= 0 route: f_k = chi(x/k) f for increasing k
            conv = hs_apply_cutoff(A, f, case["N"], case["cutoff_ks"], estimate=case["estimate"],
                                   **case["quad"])
            F, est = conv.values[-1], conv.estimates[-1]
            entry["cutoff"] = conv.to_dict()
            ext = build_extension(cutoff_family(f, None, conv.ks[-1]), case["N"])
        else:
            ext = build_extension(f, case["N"])
            quad = default_quadrature(ext, A, **case["quad"])
            F = hs_apply(A, ext, quad)
            est = op_norm(F - hs_apply(A, ext, quad.refined())) if case["estimate"] else None
            entry["quadrature"] = quad.to_dict()
        err = op_norm(F - exact)
        entry.update({"error": err, "hermitian_defect": op_norm(F - F.conj().T)})
        good = True
        if case["tolerance"] is not None:
            good &= err <= case["tolerance"]
        if case["estimate"]:
            entry["estimate"] = est
            entry["estimate_consistent"] = err <= case["estimate_factor"] * est
            good &= entry["estimate_consistent"]
        if case["calibrate"]:
            cal = calibrate_constant(A, ext, default_quadrature(ext, A, **case["quad"]))
            entry["calibration"] = cal.to_dict()
            if case["calibration_tolerance"] is not None:
                good &= cal.relative_error <= case["calibration_tolerance"]
        entry["passed"] = bool(good)
        ok &= good
        out.append(entry)
    elapsed = time.perf_counter() - t0
    timing = {"seconds": elapsed}
    if case["time_limit"] is not None:
        timing["time_limit_ok"] = elapsed < case["time_limit"]
    return {"constant": hs_constant(nu), "results": out}, {}, ok, timing


def _bound(cfg, case):
    fam = make_family(case["family"]["name"], case["nu"], **_family_kwargs(case["family"]))
    rep = bound_experiment(fam, case["n"], case["t1"], case["t2"], cfg.seeds, case["dims"],
                           case["spectrum_scale"])
    data = rep.to_dict()
    data["spread_limit"] = case["spread_limit"]
    ok = bool(np.isfinite(rep.spread) and rep.spread < case["spread_limit"])
    rows = [[d, i, r] for d in rep.ratios for i, r in enumerate(rep.ratios[d])]
    return data, {"ratios": (["d", "instance", "max_ratio_over_family"], rows)}, ok, {}


def _hadamard(cfg, case):
    nu, n = case["nu"], case["n"]
    v = np.geomspace(case["v_max"], case["v_min"], case["v_count"])
    out, rows, ok = [], [], True
    for seed in cfg.seeds:
        A, B = make_instance(seed, nu, case["d"], case["spectrum_scale"])
        u0 = A.spectrum[0] if case["u0"] == "eigenpoint" else np.array(case["u0"], dtype=float)
        res = hadamard_probe(A, B, case["ell"], n, case["t1"], case["t2"], v, u0)
        good = res.degenerate or res.slope >= res.bound - case["slack"]
        ok &= good
        out.append({"seed": seed, "u0": [float(x) for x in u0], "slope": res.slope, "bound": res.bound,
                    "degenerate": res.degenerate, "passed": bool(good)})
        rows += [[seed, float(a), float(b), res.slope] for a, b in zip(res.v, res.norms)]
    return {"results": out}, {"slopes": (["seed", "v", "norm", "fitted_slope"], rows)}, ok, {}


def _aae(cfg, case):
    nu, N = case["nu"], case["N"]
    fam = make_family(case["family"]["name"], nu, **_family_kwargs(case["family"]))
    out, rows, ok = [], [], True
    for f in fam.members():
        ext = build_extension(f, N)
        for seed in cfg.seeds:
            if case["u0"] is not None:
                u0 = np.array(case["u0"], dtype=float)
            else:
                u0 = np.random.default_rng(seed).uniform(-2, 2, nu)
            v, mag, slope = decay_fit(ext, u0)
            good = abs(slope - N) <= case["tolerance"]
            ok &= good
            out.append({"function": f.name, "seed": seed, "u0": [float(x) for x in u0], "N": N,
                        "fitted_order": slope, "passed": bool(good)})
            rows += [[float(a), float(b), slope] for a, b in zip(v, mag)]
    return {"results": out}, {"decay": (["abs_v", "abs_dbar", "fitted_slope"], rows)}, ok, {}


RUNNERS = {"verify-symbolic": _symbolic, "verify-lemmas": _lemmas, "verify-theorem": _theorem,
           "hs-apply": _hs, "bound-sweep": _bound, "hadamard-probe": _hadamard, "aae-probe": _aae}


# ---------------------------------------------------------------------------
# reports


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


@dataclass
class SuiteResult:
    config: ExperimentConfig
    passed: bool
    report: dict
    files: list[Path]


def run_suite(config: ExperimentConfig, out_dir=None) -> SuiteResult:
    """Run every case of ``config``; write ``<name>.json`` and any CSV tables."""
    out_dir = Path(out_dir if out_dir is not None else config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    runner = RUNNERS[config.battery]
    cases, timings, passed, files = [], [], True, []
    for i, case in enumerate(config.cases):
        rep, tables, ok, timing = runner(config, case)
        ok = bool(ok and timing.get("time_limit_ok", True))
        passed &= ok
        cases.append({"parameters": case, "passed": ok, **rep})
        timings.append(timing)
        for tname, (header, rows) in tables.items():
            path = out_dir / f"{config.name}.case{i}.{tname}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows([[repr(x) if isinstance(x, float) else x for x in r] for r in rows])
            files.append(path)
    report = {
        "name": config.name,
        "battery": config.battery,
        "config": config.to_dict(),
        "passed": passed,
        "cases": cases,
        # the only field allowed to differ between identical runs
        "timestamp": {"started": started, "elapsed_seconds": time.perf_counter() - t0, "cases": timings},
    }
    report = _clean(report)
    path = out_dir / f"{config.name}.json"
    path.write_text(json.dumps(report, indent=2) + "\n")
    files.insert(0, path)
    return SuiteResult(config, passed, report, files)


def list_families(order: int = 2, nu: int = 1, check: bool = True) -> list[dict]:
    """Catalog of built-in families with their decay constants and a self-check flag."""
    out = []
    for name, (_, doc) in sorted(FAMILIES.items()):
        fam = make_family(name, nu)
        entry = {"name": name, "summary": doc, **fam.describe(order)}
        if check:
            entry["self_check"] = bool(fam.check(order))
        out.append(entry)
    return out
