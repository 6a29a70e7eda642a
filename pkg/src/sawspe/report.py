"""Structured fit reports with deterministic text rendering.

A FitReport is the common result object of every fitting operation in the
toolkit.  Rendering is byte-stable: field order is fixed, config keys are
sorted, floats are formatted with 9 significant digits, and nothing
time- or host-dependent (timestamps, hostnames, paths) is ever included,
so identical inputs produce identical report files.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

FLOAT_FMT = "%.9g"


def _fmt(value: float) -> str:
    return FLOAT_FMT % float(value)


@dataclass(frozen=True)
class Parameter:
    """One fitted parameter: value, standard error, and unit label."""

    name: str
    value: float
    stderr: float = 0.0
    unit: str = ""

    def __post_init__(self):
        if not self.name:
            raise ValueError("parameter name must not be empty")
        if not np.isfinite(self.value):
            raise ValueError(f"parameter {self.name} has non-finite value")
        if not np.isfinite(self.stderr) or self.stderr < 0:
            raise ValueError(f"parameter {self.name} stderr must be >= 0")


@dataclass
class FitReport:
    """Result of a fit: model id, parameters, residual norm, and provenance.

    residual_norm is the 2-norm of the residual vector at the solution (for
    complex-valued fits the residual stacks real and imaginary parts).
    input_digest is a content hash of the fitted data; config_snapshot holds
    the full effective configuration the fit ran under.
    """

    model_name: str
    parameters: list[Parameter]
    residual_norm: float
    n_points: int
    converged: bool
    warnings: list[str] = field(default_factory=list)
    input_digest: str = ""
    config_snapshot: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_points < 0:
            raise ValueError("n_points must be >= 0")
        if not np.isfinite(self.residual_norm) or self.residual_norm < 0:
            raise ValueError("residual_norm must be finite and >= 0")
        if self.converged and self.n_points < len(self.parameters):
            raise ValueError("a converged fit needs n_points >= number of "
                             "parameters")
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names in report")

    def parameter(self, name: str) -> Parameter:
        for p in self.parameters:
            if p.name == name:
                return p
        raise KeyError(f"no parameter named {name!r} in report")

    def value(self, name: str) -> float:
        return self.parameter(name).value

    def stderr(self, name: str) -> float:
        return self.parameter(name).stderr

    def render(self) -> str:
        """Deterministic plain-text form (stable field order, sorted config)."""
        lines = [
            "# fit report",
            f"model: {self.model_name}",
            f"converged: {'true' if self.converged else 'false'}",
            f"n_points: {self.n_points}",
            f"residual_norm: {_fmt(self.residual_norm)}",
            f"input_digest: {self.input_digest or '-'}",
            "parameters:",
        ]
        for p in self.parameters:
            unit = f" {p.unit}" if p.unit else ""
            lines.append(f"  {p.name} = {_fmt(p.value)} +/- {_fmt(p.stderr)}{unit}")
        lines.append("warnings:")
        for w in self.warnings:
            lines.append(f"  - {w}")
        lines.append("config:")
        for key in sorted(self.config_snapshot):
            val = self.config_snapshot[key]
            if isinstance(val, bool):
                text = "true" if val else "false"
            elif isinstance(val, float):
                text = _fmt(val)
            else:
                text = str(val)
            lines.append(f"  {key} = {text}")
        return "\n".join(lines) + "\n"


def digest_arrays(*arrays) -> str:
    """Content hash of numeric input data, stable across runs and platforms."""
    h = hashlib.sha256()
    for arr in arrays:
        a = np.ascontiguousarray(arr)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return "sha256:" + h.hexdigest()


def digest_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return "sha256:" + h.hexdigest()
