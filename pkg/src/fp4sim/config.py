"""INI-style experiment recipes.

Example::

    [run]
    seed = 0
    steps = 2000
    modes = full, w4a4, w4a4-dge-occ

    [model]
    hidden = 64

    [dge]
    k = 5

Unknown sections or keys are rejected so typos in checked-in recipes fail loudly.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace

from .dge import DgeConfig
from .formats import get_format
from .occ import OccConfig
from .qtrain.data import ByteCorpus, InContextMarkovTask, MarkovTask
from .qtrain.layers import QuantLinearConfig
from .qtrain.model import ModelDims
from .qtrain.train import TrainRun


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


SCHEMA = {
    "run": {"seed": int, "steps": int, "batch": int, "lr": float, "warmup_frac": float,
            "final_lr_frac": float, "weight_decay": float, "grad_clip": float,
            "modes": str, "mode": str, "granularity": str, "format": str, "output": str},
    "model": {"vocab": int, "hidden": int, "seq": int, "layers": int, "heads": int,
              "mlp_ratio": int, "arch": str},
    "dge": {"k": float, "clip": float, "epsilon": float},
    "occ": {"alpha": float, "compensation": bool},
    "data": {"task": str, "seed": int, "order": int, "branching": int,
             "concentration": float, "corpus": str},
}


@dataclass
class ExperimentConfig:
    modes: list = field(default_factory=lambda: ["full"])
    run: TrainRun = field(default_factory=TrainRun)
    data: dict = field(default_factory=dict)
    output: str = "runs"

    def run_for(self, mode: str) -> TrainRun:
        q = self.run.quant
        cfg = QuantLinearConfig.from_mode(mode, format=q.format, dge=q.dge, occ=q.occ,
                                          weight_granularity=q.weight_granularity,
                                          act_granularity=q.act_granularity)
        return replace(self.run, quant=cfg)

    def dataset(self):
        d = self.data
        dims = self.run.dims
        task = d.get("task", "incontext")
        if task == "bytes":
            if "corpus" not in d:
                raise ConfigError(["data.corpus is required for task = bytes"])
            return ByteCorpus(d["corpus"], seq=dims.seq)
        if task == "incontext":
            return InContextMarkovTask(vocab=dims.vocab, seq=dims.seq,
                                       concentration=d.get("concentration", 0.1))
        return MarkovTask(vocab=dims.vocab, seq=dims.seq, seed=d.get("seed", 1234),
                          order=d.get("order", 1), branching=d.get("branching", 4),
                          concentration=d.get("concentration", 0.5))


def _convert(kind, raw: str):
    if kind is bool:
        v = raw.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return kind(raw.strip())


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    problems, values = [], {}
    for section in cp.sections():
        if section not in SCHEMA:
            problems.append(f"unknown section [{section}]")
            continue
        for key, raw in cp.items(section):
            kind = SCHEMA[section].get(key)
            if kind is None:
                problems.append(f"unknown key {section}.{key}")
                continue
            try:
                values[(section, key)] = _convert(kind, raw)
            except ValueError as exc:
                problems.append(f"bad value for {section}.{key}: {exc}")
    if problems:
        raise ConfigError(problems)

    def get(section, key, default):
        return values.get((section, key), default)

    try:
        dims = ModelDims(**{k: v for (s, k), v in values.items() if s == "model"})
        dge = DgeConfig(k=get("dge", "k", 5.0), clip_cap=get("dge", "clip", 3.0),
                        epsilon=get("dge", "epsilon", 0.0))
        occ = OccConfig(alpha=get("occ", "alpha", 0.99),
                        enable_compensation=get("occ", "compensation", True))
        gran = get("run", "granularity", "vector")
        quant = QuantLinearConfig(format=get_format(get("run", "format", "e2m1")), dge=dge, occ=occ,
                                  weight_granularity=gran, act_granularity=gran)
        defaults = TrainRun()
        run = TrainRun(
            seed=get("run", "seed", 0), dims=dims, steps=get("run", "steps", defaults.steps),
            batch=get("run", "batch", defaults.batch), peak_lr=get("run", "lr", defaults.peak_lr),
            warmup_frac=get("run", "warmup_frac", defaults.warmup_frac),
            final_lr_frac=get("run", "final_lr_frac", defaults.final_lr_frac),
            weight_decay=get("run", "weight_decay", defaults.weight_decay),
            grad_clip=get("run", "grad_clip", defaults.grad_clip), quant=quant)
        modes_raw = get("run", "modes", None) or get("run", "mode", "full")
        modes = [m.strip() for m in modes_raw.split(",") if m.strip()]
        for m in modes:
            QuantLinearConfig.from_mode(m)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from None
    data = {k: v for (s, k), v in values.items() if s == "data"}
    if data.get("task", "incontext") not in ("incontext", "markov", "bytes"):
        raise ConfigError([f"unknown data.task {data['task']!r} (incontext, markov, bytes)"])
    return ExperimentConfig(modes=modes, run=run, data=data, output=get("run", "output", "runs"))


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())
