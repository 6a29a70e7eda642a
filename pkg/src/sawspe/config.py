"""Run configuration: documented defaults, plain-text config files, and the
two environment overrides.

Config files hold one `key = value` per line with `#` comments.  Unknown
keys are rejected so typos fail loudly.  Environment variables override only
the seed and thread count (SAWSPE_SEED, SAWSPE_THREADS); everything else
must come from the file or explicit overrides, which always win last.
"""

from __future__ import annotations

import os

from .errors import DataFormatError

ENV_PREFIX = "SAWSPE"

# Every supported key with its default; the default's type fixes the key's
# type (booleans accept true/false, yes/no, 1/0 in files).
DEFAULTS = {
    "seed": 12345,
    "threads": 1,
    "s11.window_linewidths": 5.0,
    "s11.dip_prominence": 0.05,
    "s11.background": False,
    "fit.param_tol": 1e-8,
    "fit.max_iter": 200,
    "emitter.phase_samples": 512,
    "strobe.bins": 128,
    "strobe.pulse_period_ps": 12500.0,
    "strobe.lifetime_ps": 2000.0,
    "strobe.jitter_sigma_ps": 0.0,
    "strobe.chunk_size": 262144,
    "strobe.filter_low_mev": 0.5,
    "strobe.filter_high_mev": 3.5,
    "strobe.edge_width_mev": 0.0,
    "g2.window_ps": 5e6,
    "g2.bin_width_ps": 1e5,
    "sweep.min_improvement": 0.2,
    "strain.d_coupling": 30.0,
    "io.spectrum_unit": "mev",
}

_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def _coerce(key: str, raw, path=None, line_no: int = 0):
    default = DEFAULTS[key]
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            word = str(raw).lower()
            if word not in _BOOL_WORDS:
                raise ValueError(f"not a boolean: {raw!r}")
            return _BOOL_WORDS[word]
        if isinstance(default, int):
            num = float(raw)  # accept "2e5" style in files
            if num != int(num):
                raise ValueError(f"not an integer: {raw!r}")
            return int(num)
        if isinstance(default, float):
            return float(raw)
        return str(raw)
    except (TypeError, ValueError) as exc:
        if path is not None:
            raise DataFormatError(f"bad value for {key}: {exc}", path, line_no)
        raise ValueError(f"bad value for {key}: {exc}")


class RunConfig:
    """Immutable-ish mapping of effective settings.

    Precedence, lowest to highest: DEFAULTS, config file, environment
    (seed/threads only), explicit overrides.
    """

    def __init__(self, values=None):
        self._values = dict(DEFAULTS)
        for k, v in (values or {}).items():
            if k not in DEFAULTS:
                raise KeyError(f"unknown config key: {k}")
            self._values[k] = _coerce(k, v)

    def __getitem__(self, key: str):
        return self._values[key]

    def get(self, key: str, default=None):
        return self._values.get(key, default)

    def as_dict(self) -> dict:
        return dict(self._values)

    def keys(self):
        return self._values.keys()

    @classmethod
    def load(cls, path=None, env=None, overrides=None) -> "RunConfig":
        """Build the effective configuration.

        path: optional config file; env: mapping to read (defaults to
        os.environ); overrides: explicit key->value mapping applied last.
        """
        values = {}
        if path is not None:
            values.update(cls._parse_file(path))
        env = os.environ if env is None else env
        for env_key, key in ((f"{ENV_PREFIX}_SEED", "seed"),
                             (f"{ENV_PREFIX}_THREADS", "threads")):
            if env_key in env and str(env[env_key]).strip():
                values[key] = env[env_key]
        for k, v in (overrides or {}).items():
            if v is not None:
                values[k] = v
        return cls(values)

    @staticmethod
    def _parse_file(path) -> dict:
        values = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise DataFormatError("expected 'key = value'",
                                          path, line_no)
                key, _, val = line.partition("=")
                key = key.strip()
                val = val.strip()
                if key not in DEFAULTS:
                    raise DataFormatError(f"unknown config key: {key}",
                                          path, line_no)
                if not val:
                    raise DataFormatError(f"empty value for {key}",
                                          path, line_no)
                values[key] = _coerce(key, val, path, line_no)
        return values

    def dumps(self) -> str:
        """Config-file text that parses back to the same values."""
        lines = []
        for k in sorted(self._values):
            v = self._values[k]
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = "%.12g" % v
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def snapshot(self) -> dict:
        """Plain dict for FitReport.config_snapshot."""
        return dict(self._values)
