"""Declarative run configuration for the command-line interface.

One YAML file describes the inputs, variable roles, cleaning toggles,
basis choices and bootstrap settings; command-line flags override the
file, and the CONDNORM_OUT environment variable may override only the
output directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .basis import BasisSpec
from .errors import SchemaError


@dataclass(frozen=True)
class RunConfig:
    data: str = ""
    flags: str | None = None
    delta_seconds: int | None = None

    response: str | None = None
    upstream: str | None = None
    downstream: str | None = None
    covariates: tuple = ()

    range_flags: bool = True
    wiper_variables: tuple = ()
    wiper_period: int = 5
    wiper_phase: object = "auto"
    aggregate_seconds: int | None = None
    interpolate_covariates: bool = True

    basis_default: dict = field(default_factory=dict)
    basis_per_covariate: dict = field(default_factory=dict)
    fourier_period_seconds: int | None = None
    fourier_pairs: int = 5

    max_lag: int = 24
    impute_max_order: int = 10
    nonnegative: bool = False

    replicates: int = 1000
    seed: int = 0
    levels: tuple = (0.2, 0.05)
    threads: int = 1

    synth: dict = field(default_factory=dict)
    output: str = "out"

    def basis_specs(self, names) -> list:
        """Resolve one BasisSpec per covariate name."""
        specs = []
        for name in names:
            params = dict(self.basis_default)
            params.update(self.basis_per_covariate.get(name, {}))
            try:
                specs.append(BasisSpec(**params))
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"bad basis settings for {name!r}: {exc}") from None
        return specs


def _section(raw, name) -> dict:
    value = raw.get(name, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise SchemaError(f"config section {name!r} must be a mapping")
    return dict(value)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise SchemaError(f"{path}: invalid YAML: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise SchemaError(f"{path}: config must be a mapping")

    inp = _section(raw, "input")
    roles = _section(raw, "roles")
    clean = _section(raw, "clean")
    wiper = clean.get("wiper") or {}
    basis = _section(raw, "basis")
    fourier = _section(raw, "fourier")
    lags = _section(raw, "lags")
    impute = _section(raw, "impute")
    boot = _section(raw, "bootstrap")
    synth = _section(raw, "synth")

    def rel(p):
        if p is None:
            return None
        p = Path(p)
        return str(p if p.is_absolute() else path.parent / p)

    try:
        return RunConfig(
            data=rel(inp.get("data")) or "",
            flags=rel(inp.get("flags")),
            delta_seconds=inp.get("delta_seconds"),
            response=roles.get("response"),
            upstream=roles.get("upstream"),
            downstream=roles.get("downstream"),
            covariates=tuple(roles.get("covariates", ())),
            range_flags=bool(clean.get("range_flags", True)),
            wiper_variables=tuple(wiper.get("variables", ())),
            wiper_period=int(wiper.get("period", 5)),
            wiper_phase=wiper.get("phase", "auto"),
            aggregate_seconds=clean.get("aggregate_seconds"),
            interpolate_covariates=bool(clean.get("interpolate_covariates", True)),
            basis_default=_section(basis, "default") if "default" in basis else {},
            basis_per_covariate=_section(basis, "per_covariate") if "per_covariate" in basis else {},
            fourier_period_seconds=fourier.get("period_seconds"),
            fourier_pairs=int(fourier.get("pairs", 5)),
            max_lag=int(lags.get("max_lag", 24)),
            impute_max_order=int(impute.get("max_order", 10)),
            nonnegative=bool(impute.get("nonnegative", False)),
            replicates=int(boot.get("replicates", 1000)),
            seed=int(boot.get("seed", 0)),
            levels=tuple(float(v) for v in boot.get("levels", (0.2, 0.05))),
            synth=synth,
            output=rel(raw.get("output", "out")),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: bad config value: {exc}") from None


def apply_overrides(config: RunConfig, seed=None, threads=None, out=None, env=None) -> RunConfig:
    """Apply flag and environment overrides; flags win over everything."""
    env = env or {}
    output = config.output
    if env.get("CONDNORM_OUT"):
        output = env["CONDNORM_OUT"]
    if out is not None:
        output = out
    updates = {"output": str(output)}
    if seed is not None:
        updates["seed"] = int(seed)
    if threads is not None:
        updates["threads"] = int(threads)
    return replace(config, **updates)
