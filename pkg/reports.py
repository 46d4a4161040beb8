"""
Escritura de resultados: tablas CSV con columnas fijas y documentos JSON.

Los flotantes se escriben en notación decimal con 17 cifras significativas para
que la lectura recupere exactamente el mismo valor.
"""
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from analysis import belief_envelope, final_belief_histogram, fluctuation_monitor
from errors import TooShortError
from graph import format_decimal
from montecarlo import ExperimentSummary, SweepRow, TrialOutcome, TrialStatus

logger = logging.getLogger(__name__)

FLOAT_FORMAT = format_decimal
FAILED_CLASS = "Failed"

TRIALS_COLUMNS = ["trial_id", "seed", "class", "steps", "q0", "q_final"]
TRAJECTORY_COLUMNS = ["trial_id", "t", "agent", "x"]
ENVELOPE_COLUMNS = ["trial_id", "t", "x_min", "x_max", "x_mean", "q"]
HISTOGRAM_COLUMNS = ["bin_lo", "bin_hi", "count"]
FLUCTUATION_COLUMNS = ["trial_id", "agent", "x_min", "x_max", "min_rolling_std", "nonconvergent"]
SWEEP_COLUMNS = ["p0", "mean_final", "var_final", "herd1_freq", "ci"]


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any]
    version: str
    master_seed: int
    started_at: str
    finished_at: Optional[str] = None
    outputs: List[str] = field(default_factory=list)
    plan: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "version": self.version,
            "master_seed": self.master_seed,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "outputs": self.outputs,
            "plan": self.plan,
            "config": self.config,
        }


def _json_safe(value: Any) -> Any:
    """NaN e infinitos pasan a null; tipos numpy a tipos nativos."""
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def config_digest(config: Dict[str, Any]) -> str:
    canonical = json.dumps(_json_safe(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_table(df: pd.DataFrame, path: Path, columns: Sequence[str]) -> Path:
    df = df.reindex(columns=list(columns))
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.debug(f"Tabla escrita: {path} ({len(df)} filas)")
    return path


def write_json(data: Dict[str, Any], path: Path) -> Path:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_json_safe(data), f, indent=2, ensure_ascii=False)
        f.write("\n")
    return path


def write_trials_csv(outcomes: Sequence[TrialOutcome], path: Path) -> Path:
    filas = [
        {
            "trial_id": o.trial_id,
            "seed": o.seed,
            "class": o.absorption.value if o.status is TrialStatus.OK else FAILED_CLASS,
            "steps": o.steps,
            "q0": o.q0,
            "q_final": o.q_final,
        }
        for o in outcomes
    ]
    return write_table(pd.DataFrame(filas, columns=TRIALS_COLUMNS), path, TRIALS_COLUMNS)


def _belief_times(outcome: TrialOutcome, sample_every: int) -> np.ndarray:
    """Pasos a los que corresponde cada fila de belief_samples."""
    k = len(outcome.belief_samples)
    times = np.arange(k) * sample_every
    if k and times[-1] != outcome.steps:
        times[-1] = outcome.steps
    return times


def write_trajectory_csv(outcomes: Sequence[TrialOutcome], sample_every: int, path: Path) -> Path:
    partes = []
    for o in outcomes:
        if o.belief_samples is None:
            continue
        times = _belief_times(o, sample_every)
        k, n = o.belief_samples.shape
        partes.append(
            pd.DataFrame(
                {
                    "trial_id": o.trial_id,
                    "t": np.repeat(times, n),
                    "agent": np.tile(np.arange(n), k),
                    "x": o.belief_samples.ravel(),
                }
            )
        )
    df = pd.concat(partes, ignore_index=True) if partes else pd.DataFrame(columns=TRAJECTORY_COLUMNS)
    return write_table(df, path, TRAJECTORY_COLUMNS)


def write_envelope_csv(outcomes: Sequence[TrialOutcome], sample_every: int, pi: np.ndarray, path: Path) -> Path:
    partes = []
    for o in outcomes:
        if o.belief_samples is None:
            continue
        envelope = belief_envelope(o.belief_samples)
        partes.append(
            pd.DataFrame(
                {
                    "trial_id": o.trial_id,
                    "t": _belief_times(o, sample_every),
                    "x_min": envelope[:, 0],
                    "x_max": envelope[:, 1],
                    "x_mean": envelope[:, 2],
                    "q": np.clip(o.belief_samples @ pi, 0.0, 1.0),
                }
            )
        )
    df = pd.concat(partes, ignore_index=True) if partes else pd.DataFrame(columns=ENVELOPE_COLUMNS)
    return write_table(df, path, ENVELOPE_COLUMNS)


def write_histogram_csv(outcomes: Sequence[TrialOutcome], path: Path, bins: int = 20) -> Path:
    finales = [o.q_final for o in outcomes if o.status is TrialStatus.OK]
    edges, counts = final_belief_histogram(np.array(finales), bins=bins)
    df = pd.DataFrame({"bin_lo": edges[:-1], "bin_hi": edges[1:], "count": counts})
    return write_table(df, path, HISTOGRAM_COLUMNS)


def write_fluctuation_csv(
    outcomes: Sequence[TrialOutcome],
    sample_every: int,
    window: int,
    burn_in: int,
    threshold: float,
    path: Path,
) -> Path:
    """Envolvente y certificado de no convergencia por agente (ventana en muestras)."""
    filas = []
    for o in outcomes:
        if o.belief_samples is None:
            continue
        times = _belief_times(o, sample_every)
        muestras = o.belief_samples[times >= burn_in]
        try:
            report = fluctuation_monitor(muestras, window)
        except TooShortError as e:
            logger.warning(f"⚠️ Ensayo {o.trial_id}: trayectoria demasiado corta para la ventana ({e})")
            continue
        minimo = report.min_rolling_std()
        no_converge = report.nonconvergent(threshold)
        for agent in range(muestras.shape[1]):
            filas.append(
                {
                    "trial_id": o.trial_id,
                    "agent": agent,
                    "x_min": report.minimum[agent],
                    "x_max": report.maximum[agent],
                    "min_rolling_std": minimo[agent],
                    "nonconvergent": bool(no_converge[agent]),
                }
            )
    return write_table(pd.DataFrame(filas, columns=FLUCTUATION_COLUMNS), path, FLUCTUATION_COLUMNS)


def write_summary_json(summary: ExperimentSummary, digest: str, path: Path) -> Path:
    return write_json({**summary.to_dict(), "config_digest": digest}, path)


def write_sweep_csv(rows: Sequence[SweepRow], path: Path) -> Path:
    df = pd.DataFrame([vars(r) for r in rows], columns=SWEEP_COLUMNS)
    return write_table(df, path, SWEEP_COLUMNS)


def write_manifest(manifest: RunManifest, path: Path) -> Path:
    return write_json(manifest.to_dict(), path)
