"""
KDEXP - Posterior Samples
Container for retained draws, interval summaries and the CSV + JSON sidecar format
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from packages.shared.exceptions import DataFormatError, InvalidParameterError
from packages.shared.utils import atomic_write_json, atomic_write_text, get_timestamp

logger = logging.getLogger("KDEXP.Posterior")

LIBRARY_VERSION = "1.0.0"
FLOAT_FORMAT = "%.17g"


@dataclass
class PosteriorSamples:
    """s x q draws with one named column per parameter"""

    draws: np.ndarray
    names: List[str]
    method: str
    seed: Dict[str, Any] = field(default_factory=dict)
    chain: Optional[np.ndarray] = None
    source_column: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.draws = np.atleast_2d(np.asarray(self.draws, dtype=float))
        if self.draws.shape[1] != len(self.names):
            raise InvalidParameterError("draws and parameter names disagree")
        for name in ("chain", "source_column"):
            value = getattr(self, name)
            if value is not None:
                value = np.asarray(value, dtype=np.int64)
                if value.shape != (self.n_draws,):
                    raise InvalidParameterError(f"{name} must have one entry per draw")
                setattr(self, name, value)

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.draws[:, self.names.index(name)]
        except ValueError as exc:
            raise KeyError(f"no parameter named {name}") from exc

    @property
    def theta(self) -> np.ndarray:
        return self.column("theta")

    def chain_draws(self, chain: int) -> "PosteriorSamples":
        if self.chain is None:
            if chain != 0:
                raise KeyError(f"no chain {chain}")
            return self
        keep = self.chain == chain
        return PosteriorSamples(
            draws=self.draws[keep],
            names=list(self.names),
            method=self.method,
            seed=dict(self.seed),
            chain=self.chain[keep],
            source_column=None if self.source_column is None else self.source_column[keep],
        )

    @property
    def chains(self) -> List[int]:
        return [0] if self.chain is None else sorted(set(self.chain.tolist()))

    def summary(self, level: float = 0.95) -> pd.DataFrame:
        """Posterior mean, sd and equal-tailed credible interval per parameter"""
        if not 0.0 < level < 1.0:
            raise InvalidParameterError("level must be in (0, 1)")
        tail = 0.5 * (1.0 - level)
        lower, upper = np.quantile(self.draws, [tail, 1.0 - tail], axis=0)
        return pd.DataFrame(
            {
                "mean": self.draws.mean(axis=0),
                "sd": self.draws.std(axis=0, ddof=1) if self.n_draws > 1 else np.zeros(len(self.names)),
                "lower": lower,
                "upper": upper,
            },
            index=pd.Index(self.names, name="parameter"),
        )

    def theta_summary(self, level: float = 0.95) -> Dict[str, float]:
        return {key: float(value) for key, value in self.summary(level).loc["theta"].items()}

    def relative_risk(self, level: float = 0.95) -> Dict[str, float]:
        """exp(theta) summaries for the logit-link families"""
        rr = np.exp(self.theta)
        tail = 0.5 * (1.0 - level)
        lower, upper = np.quantile(rr, [tail, 1.0 - tail])
        return {"mean": float(rr.mean()), "median": float(np.median(rr)), "lower": float(lower), "upper": float(upper)}

    @classmethod
    def concat(cls, parts: Sequence["PosteriorSamples"], method: Optional[str] = None) -> "PosteriorSamples":
        if not parts:
            raise InvalidParameterError("nothing to concatenate")
        names = parts[0].names
        if any(part.names != names for part in parts):
            raise InvalidParameterError("parameter names differ between parts")

        def stacked(attr: str) -> Optional[np.ndarray]:
            values = [getattr(part, attr) for part in parts]
            if all(value is None for value in values):
                return None
            return np.concatenate(
                [np.full(part.n_draws, -1) if value is None else value for part, value in zip(parts, values)]
            )

        return cls(
            draws=np.vstack([part.draws for part in parts]),
            names=list(names),
            method=method or parts[0].method,
            seed=dict(parts[0].seed),
            chain=stacked("chain"),
            source_column=stacked("source_column"),
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.draws, columns=self.names)
        if self.chain is not None:
            frame.insert(0, "chain", self.chain)
        if self.source_column is not None:
            frame.insert(0, "source_column", self.source_column)
        return frame


def sidecar_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_samples(path: Union[str, Path], samples: PosteriorSamples, config: Optional[Dict[str, Any]] = None) -> Path:
    """One CSV row per draw plus a JSON sidecar with seed, config, method and runtime"""
    path = Path(path)
    text = samples.to_frame().to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    atomic_write_text(path, text)
    atomic_write_json(
        sidecar_path(path),
        {
            "method": samples.method,
            "parameters": samples.names,
            "draws": samples.n_draws,
            "seed": samples.seed,
            "config": config or {},
            "runtime_seconds": samples.metadata.get("runtime_seconds"),
            "metadata": samples.metadata,
            "library_version": LIBRARY_VERSION,
            "written_at": get_timestamp(),
        },
    )
    logger.info(f"Wrote {samples.n_draws} {samples.method} draws to {path}")
    return path


def read_samples(path: Union[str, Path]) -> PosteriorSamples:
    path = Path(path)
    if not path.exists():
        raise DataFormatError("sample file not found", path=str(path))
    meta: Dict[str, Any] = {}
    if sidecar_path(path).exists():
        try:
            meta = json.loads(sidecar_path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"invalid sidecar: {exc}", path=str(sidecar_path(path)), line=exc.lineno) from exc
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataFormatError(f"cannot parse sample file: {exc}", path=str(path)) from exc

    chain = frame.pop("chain").to_numpy() if "chain" in frame.columns else None
    source = frame.pop("source_column").to_numpy() if "source_column" in frame.columns else None
    if "theta" not in frame.columns:
        raise DataFormatError("missing parameter column", path=str(path), field="theta")
    return PosteriorSamples(
        draws=frame.to_numpy(dtype=float),
        names=[str(c) for c in frame.columns],
        method=meta.get("method", "unknown"),
        seed=meta.get("seed", {}),
        chain=chain,
        source_column=source,
        metadata=meta.get("metadata", {}),
    )
