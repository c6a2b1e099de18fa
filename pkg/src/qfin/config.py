"""INI run configuration: schema, defaults, flag overrides, canonical hash."""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(" ", "").split(",") if t]


def _strs(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _optional_int(text: str) -> Optional[int]:
    return None if text.strip().lower() in ("", "none") else int(text)


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}; got {text!r}")
        return text
    parse.__name__ = "choice"
    return parse


@dataclass(frozen=True)
class Field:
    section: str
    key: str
    parse: Callable[[str], Any]
    default: str
    help: str


FIELDS: tuple[Field, ...] = (
    Field("data", "source", _choice("synthetic", "csv"), "synthetic",
          "training data: synthetic log-normal draws or a close-price CSV"),
    Field("data", "csv", str, "", "close-price CSV (close_time,<SYMBOL>,...) when source = csv"),
    Field("data", "features", _strs, "", "comma-separated CSV columns to model jointly"),
    Field("data", "resolutions", _ints, "3", "qubits per feature, comma-separated"),
    Field("data", "clip_lo", float, "0.05", "lower clipping quantile"),
    Field("data", "clip_hi", float, "0.95", "upper clipping quantile"),
    Field("data", "synthetic_samples", int, "6000", "number of synthetic draws"),
    Field("data", "synthetic_seed", int, "1", "seed of the synthetic draws"),
    Field("data", "synthetic_sigma", float, "0.5", "log-normal shape of the synthetic draws"),
    Field("qgan", "layers", int, "2", "generator layers (5n parameters each)"),
    Field("qgan", "epochs", int, "2000", "training epochs"),
    Field("qgan", "batch_size", int, "1000", "real samples drawn per epoch (shots in sampled mode)"),
    Field("qgan", "generator_lr", float, "0.01", "generator Adam learning rate"),
    Field("qgan", "discriminator_lr", float, "0.02", "discriminator Adam learning rate"),
    Field("qgan", "d_steps", int, "5", "discriminator steps per generator step"),
    Field("qgan", "seed", int, "0", "training seed"),
    Field("qgan", "mode", _choice("exact", "sampled"), "exact", "exact expectations or finite shots"),
    Field("qgan", "saturating", _bool, "false", "use the saturating generator loss E[log(1 - D)]"),
    Field("qgan", "hidden", _ints, "50,20", "discriminator hidden layer widths"),
    Field("qcbm", "layers", int, "5", "Born machine layers (odd: rotations, even: CRZ ring)"),
    Field("qcbm", "epsilon", float, "1e-8", "probability floor inside the log-likelihood"),
    Field("qcbm", "optimizer", _choice("cobyla", "spsa", "nelder-mead"), "cobyla", "optimizer"),
    Field("qcbm", "max_evals", int, "3000", "objective evaluation budget"),
    Field("qcbm", "seed", int, "0", "seed for the initial parameters and SPSA directions"),
    Field("qcbm", "shots", int, "10000", "shots for the final model histogram"),
    Field("qcbm", "cost_shots", _optional_int, "none", "finite-shot cost estimate (none = exact)"),
    Field("qcbm", "rho_begin", float, "0.5", "COBYLA initial trust radius"),
    Field("qcbm", "rho_end", float, "1e-6", "COBYLA final trust radius"),
    Field("qcbm", "spsa_a0", float, "0.2", "SPSA step-size numerator"),
    Field("qcbm", "spsa_c0", float, "0.1", "SPSA perturbation numerator"),
    Field("qcbm", "spsa_alpha", float, "0.602", "SPSA step-size decay exponent"),
    Field("qcbm", "spsa_gamma", float, "0.101", "SPSA perturbation decay exponent"),
    Field("qcbm", "nelder_mead_step", float, "0.1", "Nelder-Mead initial simplex step"),
    Field("compare", "optimizers", _strs, "cobyla,spsa,nelder-mead", "optimizers to compare"),
    Field("compare", "seeds", int, "5", "seeds per optimizer"),
    Field("compare", "budget", int, "3000", "evaluations allowed per run"),
    Field("compare", "base_seed", int, "0", "first seed"),
    Field("compare", "workers", int, "1", "concurrent runs"),
)

COMMAND_SECTIONS = {
    "train-qgan": ("data", "qgan"),
    "train-qcbm": ("data", "qcbm"),
    "compare-optim": ("data", "qcbm", "compare"),
}


def fields_for(sections: Sequence[str]) -> list[Field]:
    return [f for f in FIELDS if f.section in sections]


def resolve(sections: Sequence[str], path: Optional[str] = None,
            overrides: Optional[dict[tuple[str, str], str]] = None) -> dict[str, dict[str, str]]:
    """Merge defaults < config file < overrides; returns raw strings per section."""
    raw = {s: {f.key: f.default for f in fields_for([s])} for s in sections}
    if path:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for section in parser.sections():
            if section not in raw:
                if section in {f.section for f in FIELDS}:
                    continue
                raise ConfigError(f"[{section}]: unknown section")
            for key, value in parser.items(section):
                if key not in raw[section]:
                    raise ConfigError(f"[{section}] {key}: unknown field")
                raw[section][key] = value
    for (section, key), value in (overrides or {}).items():
        raw[section][key] = value
    return raw


def parse(raw: dict[str, dict[str, str]]) -> dict[str, dict[str, Any]]:
    out: dict[str, dict[str, Any]] = {}
    for section, values in raw.items():
        out[section] = {}
        for f in fields_for([section]):
            try:
                out[section][f.key] = f.parse(values[f.key])
            except ValueError as exc:
                raise ConfigError(f"[{section}] {f.key}: {exc}") from exc
    return out


def to_ini(raw: dict[str, dict[str, str]]) -> str:
    lines = []
    for section, values in raw.items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in values.items())
        lines.append("")
    return "\n".join(lines)


def config_hash(parsed: dict[str, dict[str, Any]]) -> str:
    """SHA-256 of the parsed (typed) configuration in canonical JSON form."""
    canonical = json.dumps(parsed, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()
