"""INI-style experiment configs.

A file has one ``[suite]`` section and any number of ``[run:<name>]``
sections.  Keys left out of a run fall back to ``DEFAULTS``.  Example::

    [suite]
    name = demo
    seeds = 1, 2
    comparison = resist-vs-dgd

    [run:resist]
    algorithm = resist
    graph = er
    M = 10
    rho = 0.8
    b = 1
    attack_policy = static
    static_links = 0>1
    objective = quadratic
    J = 6
    h = 0.05
    T_max = 1200
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

DEFAULTS: dict[str, str] = {
    "algorithm": "resist",
    "graph": "complete",
    "M": "5",
    "rho": "1.0",
    "graph_file": "",
    "b": "1",
    "attack_policy": "dynamic-random",
    "attack_strategy": "random-value",
    "attack_R": "100.0",
    "attack_constant": "",
    "B_actual": "0",
    "static_links": "",
    "byzantine": "",
    "rule": "cwtm",
    "J": "2",
    "schedule": "constant",
    "h": "0.1",
    "p": "0.05",
    "omega": "0.6",
    "S": "1",
    "T_max": "100",
    "init_radius": "1.0",
    "objective": "quadratic",
    "d": "2",
    "target_scale": "1.0",
    "lam": "0.0",
    "n_per_node": "50",
    "classes": "3",
    "features": "4",
    "partition": "iid",
    "label_flip_nodes": "",
    "mnist_images": "",
    "mnist_labels": "",
    "record_mixing": "blocks",
}

INT_KEYS = {"M", "b", "B_actual", "J", "S", "T_max", "d", "n_per_node", "classes", "features"}
FLOAT_KEYS = {"rho", "attack_R", "h", "p", "omega", "init_radius", "target_scale", "lam"}
CHOICES = {
    "algorithm": ("resist", "dgd"),
    "graph": ("complete", "er", "cycle", "file"),
    "attack_policy": ("dynamic-random", "static"),
    "attack_strategy": ("random-value", "sign-flip", "constant", "none"),
    "rule": ("cwtm", "median", "krum", "bulyan", "mean"),
    "schedule": ("constant", "diminishing", "fixed-horizon"),
    "objective": ("quadratic", "quadratic-identical", "logistic", "pl-sine", "pl-sum"),
    "partition": ("iid", "moderate", "extreme"),
    "record_mixing": ("none", "blocks"),
}
SUITE_KEYS = {"name", "seeds", "comparison"}


class ConfigError(ValueError):
    pass


@dataclass
class RunSpec:
    name: str
    params: dict

    def __getitem__(self, key):
        return self.params[key]


@dataclass
class SuiteSpec:
    name: str = "suite"
    seeds: list[int] = field(default_factory=lambda: [0])
    comparison: str = "none"
    runs: list[RunSpec] = field(default_factory=list)


def _parse_value(key: str, text: str):
    text = text.strip()
    try:
        if key in INT_KEYS:
            return int(text)
        if key in FLOAT_KEYS:
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as a number") from None
    if key in CHOICES and text not in CHOICES[key]:
        raise ConfigError(f"{key}: {text!r} is not one of {', '.join(CHOICES[key])}")
    return text


def parse_int_list(text: str) -> list[int]:
    return [int(x) for x in text.replace(" ", "").split(",") if x]


def parse_links(text: str) -> list[tuple[int, int]]:
    out = []
    for item in text.replace(" ", "").split(","):
        if not item:
            continue
        try:
            i, j = item.split(">")
            out.append((int(i), int(j)))
        except ValueError:
            raise ConfigError(f"malformed link {item!r}; use i>j") from None
    return out


def parse_config(text: str) -> SuiteSpec:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    suite = SuiteSpec()
    if cp.has_section("suite"):
        sec = cp["suite"]
        unknown = set(sec) - SUITE_KEYS
        if unknown:
            raise ConfigError(f"unknown suite keys: {sorted(unknown)}")
        suite.name = sec.get("name", suite.name)
        try:
            suite.seeds = parse_int_list(sec.get("seeds", "0"))
        except ValueError:
            raise ConfigError("seeds must be a comma-separated integer list") from None
        suite.comparison = sec.get("comparison", "none")
    for name in cp.sections():
        if name == "suite":
            continue
        if not name.startswith("run:") or len(name) == 4:
            raise ConfigError(f"unexpected section [{name}]")
        sec = cp[name]
        unknown = set(sec) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"[{name}] unknown keys: {sorted(unknown)}")
        params = {k: _parse_value(k, sec.get(k, v)) for k, v in DEFAULTS.items()}
        suite.runs.append(RunSpec(name[4:], params))
    names = [r.name for r in suite.runs]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate run names")
    return suite


def serialize_config(suite: SuiteSpec) -> str:
    """Inverse of ``parse_config``; emits every key explicitly."""
    lines = ["[suite]", f"name = {suite.name}", f"seeds = {', '.join(map(str, suite.seeds))}",
             f"comparison = {suite.comparison}", ""]
    for r in suite.runs:
        lines.append(f"[run:{r.name}]")
        for k in DEFAULTS:
            v = r.params[k]
            lines.append(f"{k} = {repr(v) if isinstance(v, float) else v}")
        lines.append("")
    return "\n".join(lines)


def load_config(path: str | Path) -> SuiteSpec:
    return parse_config(Path(path).read_text())
