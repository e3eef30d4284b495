"""Model files.

Models are stored as JSON with every real written as a 17-significant-digit
decimal string, which round-trips IEEE doubles exactly. Grids are restored
from the stored edges and midpoints rather than rebuilt, so a loaded model
predicts bit-identically to the saved one. No pickle serialization is used.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from .complete import CPModel, LossRegime
from .constants import MODEL_FORMAT_VERSION, REAL_FORMAT
from .infer import ExtrapolationModel, PerformanceModel
from .space import Grid, ParameterKind, ParameterSpec
from .spline import HingeSpline, HingeTerm


if TYPE_CHECKING:
    from numpy.typing import NDArray


__all__ = [
    "ModelFile",
    "ModelFileError",
    "ModelVersionError",
    "dumps_model",
    "load_model",
    "loads_model",
    "save_model",
]

logger = logging.getLogger(__name__)

FORMAT_NAME = "perftensor-model"


class ModelFileError(ValueError):
    """Raised when a model file is corrupt or incomplete."""


class ModelVersionError(ModelFileError):
    """Raised when a model file has an unsupported format version."""


@dataclass(frozen=True)
class ModelFile:
    """A performance model plus the training summary stored alongside it."""

    model: PerformanceModel
    density: float | None = None
    reg: float | None = None
    objective: float | None = None
    sweeps: int | None = None
    observations: int | None = None


def _real(value: float) -> str:
    return format(float(value), REAL_FORMAT)


def _reals(values: NDArray[np.float64]) -> list[str]:
    return [_real(v) for v in np.asarray(values, dtype=np.float64).ravel()]


def _matrix(values: NDArray[np.float64]) -> list[list[str]]:
    return [_reals(row) for row in np.asarray(values, dtype=np.float64)]


def _optional_real(value: float | None) -> str | None:
    return None if value is None else _real(value)


def _encode(mf: ModelFile) -> dict[str, Any]:
    model = mf.model
    grid = model.grid
    space = []
    for spec in grid.specs:
        entry: dict[str, Any] = {"name": spec.name, "kind": spec.kind.value}
        if spec.is_numerical:
            assert spec.lower is not None
            assert spec.upper is not None
            entry.update(lower=_real(spec.lower), upper=_real(spec.upper), cells=spec.cells)
        else:
            entry["categories"] = list(spec.categories)
        space.append(entry)

    extrapolation = [
        {
            "mode": e.mode,
            "u_hat": _reals(e.u_hat),
            "sigma_hat": _real(e.sigma_hat),
            "v_hat": _reals(e.v_hat),
            "spline": {
                "intercept": _real(e.spline.intercept),
                "terms": [
                    {
                        "knot": _real(term.knot),
                        "direction": term.direction,
                        "coefficient": _real(term.coefficient),
                    }
                    for term in e.spline.terms
                ],
            },
        }
        for e in model.extrapolation.values()
    ]
    return {
        "format": FORMAT_NAME,
        "version": MODEL_FORMAT_VERSION,
        "space": space,
        "grid": {
            "edges": [None if e is None else _reals(e) for e in grid.edges],
            "midpoints": [_reals(m) for m in grid.midpoints],
        },
        "regime": model.cp.regime.value,
        "rank": model.cp.rank,
        "factors": [_matrix(f) for f in model.cp.factors],
        "extrapolation": extrapolation,
        "training": {
            "density": _optional_real(mf.density),
            "reg": _optional_real(mf.reg),
            "objective": _optional_real(mf.objective),
            "sweeps": mf.sweeps,
            "observations": mf.observations,
        },
    }


def dumps_model(mf: ModelFile) -> str:
    """Serialize a model file to its canonical JSON text."""
    return json.dumps(_encode(mf), indent=2, sort_keys=True) + "\n"


def save_model(path: str | Path, mf: ModelFile) -> Path:
    """Write a model file; returns the path written."""
    out = Path(path).expanduser()
    out.write_text(dumps_model(mf), encoding="utf-8")
    logger.info("Saved %s model to %s", mf.model.cp.regime.value, out)
    return out


def _parse_real(value: Any) -> float:
    if not isinstance(value, str):
        raise ModelFileError(f"expected a decimal string, got {value!r}")
    try:
        return float(value)
    except ValueError:
        raise ModelFileError(f"invalid real '{value}'") from None


def _array(values: Any) -> NDArray[np.float64]:
    if not isinstance(values, list):
        raise ModelFileError(f"expected a list of reals, got {type(values).__name__}")
    return np.asarray([_parse_real(v) for v in values], dtype=np.float64)


def _optional(values: dict[str, Any], key: str) -> float | None:
    raw = values.get(key)
    return None if raw is None else _parse_real(raw)


def _decode_spec(entry: dict[str, Any]) -> ParameterSpec:
    kind = ParameterKind(entry["kind"])
    if kind is ParameterKind.CATEGORICAL:
        return ParameterSpec.categorical(entry["name"], entry["categories"])
    return ParameterSpec(
        entry["name"],
        kind,
        _parse_real(entry["lower"]),
        _parse_real(entry["upper"]),
        int(entry["cells"]),
    )


def _decode(data: Any) -> ModelFile:
    if not isinstance(data, dict) or data.get("format") != FORMAT_NAME:
        raise ModelFileError("not a perftensor model file")
    version = data.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelVersionError(
            f"unsupported model format version {version!r} (expected {MODEL_FORMAT_VERSION})"
        )
    specs = tuple(_decode_spec(entry) for entry in data["space"])
    edges = tuple(None if e is None else _array(e) for e in data["grid"]["edges"])
    midpoints = tuple(_array(m) for m in data["grid"]["midpoints"])
    grid = Grid(specs, edges, midpoints)

    rank = int(data["rank"])
    factors = tuple(
        np.asarray([_array(row) for row in f], dtype=np.float64).reshape(n, rank)
        for f, n in zip(data["factors"], grid.dims, strict=True)
    )
    cp = CPModel(grid.dims, rank, factors, LossRegime(data["regime"]))

    extrapolation: dict[int, ExtrapolationModel] = {}
    for entry in data["extrapolation"]:
        spline = HingeSpline(
            _parse_real(entry["spline"]["intercept"]),
            tuple(
                HingeTerm(
                    _parse_real(t["knot"]), int(t["direction"]), _parse_real(t["coefficient"])
                )
                for t in entry["spline"]["terms"]
            ),
        )
        mode = int(entry["mode"])
        extrapolation[mode] = ExtrapolationModel(
            mode,
            _array(entry["u_hat"]),
            _parse_real(entry["sigma_hat"]),
            _array(entry["v_hat"]),
            spline,
        )

    training = data.get("training") or {}
    sweeps = training.get("sweeps")
    observations = training.get("observations")
    return ModelFile(
        PerformanceModel(grid, cp, extrapolation),
        density=_optional(training, "density"),
        reg=_optional(training, "reg"),
        objective=_optional(training, "objective"),
        sweeps=None if sweeps is None else int(sweeps),
        observations=None if observations is None else int(observations),
    )


def loads_model(text: str) -> ModelFile:
    """Parse model-file JSON text.

    Raises:
        ModelVersionError: If the format version is unsupported.
        ModelFileError: If the text is not a complete, valid model file.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"corrupt model file: {exc}") from exc
    try:
        return _decode(data)
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ModelFileError(f"invalid model file: {exc!r}") from exc


def load_model(path: str | Path) -> ModelFile:
    """Read a model file written by :func:`save_model`."""
    src = Path(path).expanduser()
    mf = loads_model(src.read_text(encoding="utf-8"))
    logger.info(
        "Loaded rank-%d %s model over %s from %s",
        mf.model.cp.rank,
        mf.model.cp.regime.value,
        "x".join(map(str, mf.model.grid.dims)),
        src,
    )
    return mf
