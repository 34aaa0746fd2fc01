"""Machine-readable output: number formatting, CSV and JSON writers, run manifests."""

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from heritable_growth import __version__
from heritable_growth.errors import ValidationError

FULL_PRECISION = 17
MANIFEST_SUFFIX = ".manifest.json"


def _check_precision(precision: int) -> None:
    if not 1 <= precision <= FULL_PRECISION:
        raise ValidationError(f"precision must lie in 1..{FULL_PRECISION}, got {precision!r}")


def format_number(x: float, precision: int = FULL_PRECISION) -> str:
    """Format with ``precision`` significant digits; non-finite values as inf, -inf, nan."""
    _check_precision(precision)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"%.{precision}g" % x


def _rounded(value: Any, precision: int) -> Any:
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return format_number(value)
        return float(format_number(value, precision))
    if isinstance(value, dict):
        return {str(k): _rounded(v, precision) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_rounded(v, precision) for v in value]
    return value


def dumps_json(obj: Any, precision: int = FULL_PRECISION, indent: Optional[int] = 2) -> str:
    """Serialize ``obj`` with floats cut to ``precision`` significant digits.

    numpy scalars and arrays are converted; infinities and NaN become the
    strings ``"inf"``, ``"-inf"`` and ``"nan"`` so the result is strict JSON.
    """
    _check_precision(precision)
    return json.dumps(_rounded(obj, precision), indent=indent)


def write_csv(
    frame: pd.DataFrame,
    path: Optional[Union[str, Path]] = None,
    precision: int = FULL_PRECISION,
) -> Optional[str]:
    """Write ``frame`` as LF-terminated CSV; returns the text when ``path`` is None."""
    _check_precision(precision)
    # "%g" already spells infinities as inf and -inf
    return frame.to_csv(
        path,
        index=False,
        float_format=f"%.{precision}g",
        lineterminator="\n",
        na_rep="nan",
    )


@dataclass
class RunManifest:
    """Everything needed to reproduce one CLI output exactly."""

    command: str
    parameters: Dict[str, Any]
    seeds: List[int] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    tool_version: str = __version__
    rng_algorithm: Optional[str] = None

    def to_json(self) -> str:
        # Parameters are stored verbatim: rounding them would change the replay.
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def write(self, output: Union[str, Path]) -> Path:
        """Write the manifest next to ``output`` and return its path."""
        path = manifest_path(output)
        path.write_text(self.to_json() + "\n")
        return path

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "RunManifest":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read manifest {path}: {exc}") from exc
        if not isinstance(data, dict) or "command" not in data or "parameters" not in data:
            raise ValidationError(f"manifest {path} needs 'command' and 'parameters'")
        known = {"command", "parameters", "seeds", "outputs", "tool_version", "rng_algorithm"}
        return cls(**{k: v for k, v in data.items() if k in known})


def manifest_path(output: Union[str, Path]) -> Path:
    output = Path(output)
    return output.with_name(output.name + MANIFEST_SUFFIX)
