"""Run configuration: one JSON object per experiment.

Example::

    {"experiment": "ondiag", "d1": 1, "d2": 1, "alpha": 0.5, "law": "pareto",
     "t_grid": {"base": 2, "min_exp": 6, "max_exp": 12}, "n_samples": 200000,
     "scenery_seeds": [1, 2, 3], "mode": "indicator", "output": "runs/ondiag"}

Experiment-specific knobs (rho, eps, delta, targets, ...) live in
``options``.  Serialization is canonical (sorted keys), so the config hash
is stable.
"""

from dataclasses import dataclass, field, asdict, fields
import hashlib
import json
import os

EXPERIMENTS = ("rwrs-tail", "rwrs-lower", "hitting", "returns", "ondiag", "moddev", "green", "lclt",
               "oracle-prob", "oracle-green", "theory-table", "acceptance")
LAWS = ("pareto", "capped", "constant", "bernoulli")
THREADS_ENV = "LAYERWALK_THREADS"


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message

    def as_json(self):
        return {"error": "ConfigError", "field": self.path, "message": self.message}


@dataclass(frozen=True)
class Grid:
    """base^k for k = min_exp..max_exp (inclusive); ``per_step`` > 1 subdivides each step geometrically."""

    base: float = 2.0
    min_exp: int = 0
    max_exp: int = 0
    per_step: int = 1

    def __post_init__(self):
        object.__setattr__(self, "base", float(self.base))
        for k in ("min_exp", "max_exp", "per_step"):
            object.__setattr__(self, k, int(getattr(self, k)))

    def values(self):
        n = (self.max_exp - self.min_exp) * self.per_step
        return [float(self.base) ** (self.min_exp + j / self.per_step) for j in range(n + 1)]

    @classmethod
    def parse(cls, obj, path):
        if isinstance(obj, str):
            # "base:min:max" shorthand
            parts = obj.split(":")
            if len(parts) not in (3, 4):
                raise ConfigError(path, "grid shorthand is base:min_exp:max_exp[:per_step]")
            try:
                obj = {"base": float(parts[0]), "min_exp": int(parts[1]), "max_exp": int(parts[2]),
                       "per_step": int(parts[3]) if len(parts) == 4 else 1}
            except ValueError as e:
                raise ConfigError(path, str(e)) from None
        if not isinstance(obj, dict):
            raise ConfigError(path, "grid must be an object {base, min_exp, max_exp}")
        unknown = set(obj) - {"base", "min_exp", "max_exp", "per_step"}
        if unknown:
            raise ConfigError(path, f"unknown grid keys {sorted(unknown)}")
        try:
            g = cls(float(obj.get("base", 2.0)), int(obj["min_exp"]), int(obj["max_exp"]), int(obj.get("per_step", 1)))
        except KeyError as e:
            raise ConfigError(path, f"missing {e.args[0]}") from None
        if g.base <= 1:
            raise ConfigError(path, "base must exceed 1")
        if g.max_exp < g.min_exp or g.per_step < 1:
            raise ConfigError(path, "grid is empty")
        return g


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    d1: int = 1
    d2: int = 1
    alpha: float = 1.0
    law: str = "pareto"
    cap: float | None = None
    value: float | None = None
    t_grid: Grid | None = None
    n_grid: Grid | None = None
    n_samples: int = 10_000
    scenery_seeds: tuple = (1,)
    walk_seed: int = 0
    mode: str | None = None
    output: str = "runs/out"
    threads: int | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"must be one of {list(EXPERIMENTS)}")
        if self.d1 < 1 or self.d2 < 1:
            raise ConfigError("d1/d2", "dimensions must be positive")
        if self.law not in LAWS:
            raise ConfigError("law", f"must be one of {list(LAWS)}")
        if self.law != "constant" and not self.alpha > 0:
            raise ConfigError("alpha", "must be positive")
        if self.law == "capped" and (self.cap is None or self.cap < 1):
            raise ConfigError("cap", "capped law needs cap >= 1")
        if self.law == "constant" and (self.value is None or self.value < 0):
            raise ConfigError("value", "constant law needs value >= 0")
        if self.n_samples < 1:
            raise ConfigError("n_samples", "must be positive")
        if not self.scenery_seeds:
            raise ConfigError("scenery_seeds", "need at least one seed")
        if len(set(self.scenery_seeds)) != len(self.scenery_seeds):
            raise ConfigError("scenery_seeds", "seeds must be distinct")
        if any(int(s) < 0 for s in self.scenery_seeds):
            raise ConfigError("scenery_seeds", "seeds must be nonnegative")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads", "must be positive")
        needs_t = {"rwrs-tail", "rwrs-lower", "hitting", "ondiag", "moddev"}
        if self.experiment in needs_t and self.t_grid is None:
            raise ConfigError("t_grid", f"required for {self.experiment}")
        if self.experiment == "green" and self.n_grid is None:
            raise ConfigError("n_grid", "required for green")

    @property
    def seeds(self):
        return [int(s) for s in self.scenery_seeds]

    def thread_budget(self):
        if self.threads is not None:
            return int(self.threads)
        env = os.environ.get(THREADS_ENV)
        return int(env) if env else 1

    def to_json(self):
        out = asdict(self)
        out["scenery_seeds"] = list(self.scenery_seeds)
        return out

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True)

    def hash(self):
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown config key")
        if "experiment" not in obj:
            raise ConfigError("experiment", "missing")
        kw = dict(obj)
        for g in ("t_grid", "n_grid"):
            if kw.get(g) is not None:
                kw[g] = Grid.parse(kw[g], g)
        if "scenery_seeds" in kw:
            seeds = kw["scenery_seeds"]
            if not isinstance(seeds, (list, tuple)):
                raise ConfigError("scenery_seeds", "must be a list")
            kw["scenery_seeds"] = tuple(int(s) for s in seeds)
        if "options" in kw and not isinstance(kw["options"], dict):
            raise ConfigError("options", "must be an object")
        try:
            return cls(**kw)
        except TypeError as e:
            raise ConfigError("<root>", str(e)) from None

    @classmethod
    def loads(cls, text):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("<root>", f"invalid JSON: {e}") from None
        return cls.from_json(obj)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())

    def override(self, **leaves):
        """Copy with the given top-level fields (or ``options.<key>``) replaced; None values are ignored."""
        obj = self.to_json()
        for k, v in leaves.items():
            if v is None:
                continue
            if k.startswith("options."):
                obj["options"] = dict(obj["options"], **{k[len("options."):]: v})
            else:
                obj[k] = v
        return RunConfig.from_json(obj)
