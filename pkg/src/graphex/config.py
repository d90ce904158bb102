"""Flat ``key=value`` run configuration."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

from graphex.inference import FitConfig
from graphex.simulate import ModelHyperparams


class ConfigError(ValueError):
    pass


def read_kv(path: str | os.PathLike) -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value
    return out


def write_kv(path: str | os.PathLike, values: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in values.items():
            fh.write(f"{k}={_show(v)}\n")


def _show(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass
class RunConfig:
    """Every tunable of a pipeline run in one flat namespace.

    ``explicit`` records which keys were set by a file or a flag rather
    than taken from the defaults.
    """

    # model
    sigma_U: float = 0.2
    tau_U: float = 1.0
    sigma_I: float = 0.2
    tau_I: float = 1.0
    a: float = 0.1
    b: float = 0.1
    c: float = 0.1
    d: float = 0.1
    K: int = 30
    s: float = 120.0
    alpha: float = 120.0
    # inference
    max_iters: int = 200
    conv_tol: float = 1e-4
    mc_samples: int = 64
    mode: str = "sparse"
    dense_sigma: float = -0.1
    literal_leftover: bool = False
    # split and evaluation
    p: float = 0.2
    q: float = 0.2
    m: int = 20
    unpopular_pct: float = 0.05
    # diagnostics and estimation
    reps: int = 10
    n_sims: int = 20
    rounds: int = 3
    draws: int = 10
    max_expected_edges: float = 5e7
    # run
    seed: int | None = None
    threads: int = 1
    explicit: set = field(default_factory=set, repr=False, compare=False)

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls) if f.name != "explicit"]

    def update(self, values: dict, source: str = "config") -> "RunConfig":
        """Set keys from strings or typed values; unknown keys are rejected."""
        known = {f.name: f for f in fields(self) if f.name != "explicit"}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"{source}: unknown key {key!r}")
            if raw is None:
                continue
            default = getattr(RunConfig, key, None)
            try:
                if isinstance(raw, str):
                    if key == "seed":
                        val = int(raw)
                    elif isinstance(default, bool):
                        val = _bool(raw)
                    elif isinstance(default, int):
                        val = int(raw)
                    elif isinstance(default, float):
                        val = float(raw)
                    else:
                        val = raw
                else:
                    val = raw
            except ValueError as exc:
                raise ConfigError(f"{source}: bad value for {key!r}: {exc}") from None
            setattr(self, key, val)
            self.explicit.add(key)
        return self

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls().update(read_kv(path), source=os.fspath(path))

    def hyperparams(self) -> ModelHyperparams:
        names = [f.name for f in fields(ModelHyperparams)]
        return ModelHyperparams(**{n: getattr(self, n) for n in names})

    def fit_config(self) -> FitConfig:
        return FitConfig(K=self.K, max_iters=self.max_iters, conv_tol=self.conv_tol,
                         mc_samples=self.mc_samples, seed=self.seed or 0, mode=self.mode,
                         dense_sigma=self.dense_sigma, literal_leftover=self.literal_leftover)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.keys()}

    def write(self, path) -> None:
        write_kv(path, {k: v for k, v in self.to_dict().items() if v is not None})
