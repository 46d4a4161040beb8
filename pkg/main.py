import argparse
import logging
import os
import re
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from pydantic import ValidationError

from config import APP_VERSION, HerdingModelConfig
from errors import ConfigError, ConfigParseError, ConfigValidationError, GraphError, HerdsimError, UnknownKeyError
from graph import parse_graph_model, random_graph, write_graph
from montecarlo import run_diagnostics, run_experiment, sweep_p0
from processors import ExperimentProcessor, resolve_graph_path
from reports import (
    RunManifest,
    config_digest,
    write_envelope_csv,
    write_fluctuation_csv,
    write_histogram_csv,
    write_manifest,
    write_summary_json,
    write_sweep_csv,
    write_table,
    write_trajectory_csv,
    write_trials_csv,
)
from schemas import ExperimentConfig

# --- Configuración de Logging ---
# Nivel configurable con HERDSIM_LOG_LEVEL; los mensajes van a stderr.
logging.basicConfig(
    level=os.getenv("HERDSIM_LOG_LEVEL", "INFO").upper(),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    handlers=[
        logging.StreamHandler()
    ]
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3

MODEL_CONFIG = HerdingModelConfig()
processor = ExperimentProcessor()

ConfigSource = Union[str, Path, ExperimentConfig]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _translate_validation_error(e: ValidationError) -> ConfigError:
    """Primer error de pydantic como ConfigValidationError(campo) o UnknownKeyError."""
    error = e.errors()[0]
    campo = ".".join(str(p) for p in error["loc"]) or "config"
    if error["type"] == "extra_forbidden":
        return UnknownKeyError(campo)
    return ConfigValidationError(campo, error["msg"])


def prepare_config(data: Dict[str, Any]) -> ExperimentConfig:
    """
    Valida un documento de configuración ya leído y aplica los valores por defecto.
    Es el mismo camino para el TOML de entrada y para el eco del manifiesto.
    """
    # 1. Validar la estructura básica con Pydantic
    try:
        validated = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise _translate_validation_error(e) from e

    # 2. Defaults y reglas entre campos
    prepared = MODEL_CONFIG.apply_defaults(validated.model_dump())
    MODEL_CONFIG.validate_semantics(prepared)

    try:
        return ExperimentConfig.model_validate(prepared)
    except ValidationError as e:
        raise _translate_validation_error(e) from e


def _toml_error_line(e: tomllib.TOMLDecodeError) -> Optional[int]:
    lineno = getattr(e, "lineno", None)
    if lineno is not None:
        return lineno
    match = re.search(r"at line (\d+)", str(e))
    return int(match.group(1)) if match else None


def parse_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigParseError(f"No se pudo leer la configuración {path}: {e}") from e
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigParseError(f"{path}: {e}", line=_toml_error_line(e)) from e

    if isinstance(data.get("graph"), dict):
        data["graph"] = resolve_graph_path(data["graph"], path.parent)
    cfg = prepare_config(data)
    logger.info(
        f"📄 Configuración {path.name}: regla={cfg.dynamics.rule}, ensayos={cfg.trials}, "
        f"pasos máx. totales={MODEL_CONFIG.estimate_max_steps(cfg.model_dump())}"
    )
    return cfg


def _load(config: ConfigSource, seed: Optional[int]) -> ExperimentConfig:
    cfg = config if isinstance(config, ExperimentConfig) else parse_config(config)
    if seed is not None:
        cfg = prepare_config({**cfg.model_dump(), "master_seed": seed})
    return cfg


def resolve_threads(cli_threads: Optional[int]) -> int:
    """HERDSIM_THREADS tiene prioridad sobre --threads; por defecto 1."""
    env = os.getenv("HERDSIM_THREADS")
    if env:
        try:
            threads = int(env)
        except ValueError:
            raise ConfigValidationError("HERDSIM_THREADS", f"debe ser un entero, se recibió '{env}'.")
    else:
        threads = cli_threads if cli_threads is not None else 1
    if threads < 1:
        raise ConfigValidationError("threads", f"debe ser al menos 1, se recibió {threads}.")
    return threads


def parse_grid(spec: str) -> List[float]:
    """'a:b:paso' (extremos incluidos) o lista separada por comas."""
    try:
        if ":" in spec:
            a, b, paso = (float(p) for p in spec.split(":"))
            if paso <= 0 or b < a:
                raise ValueError("se requiere paso > 0 y a ≤ b")
            count = int(round((b - a) / paso)) + 1
            return [round(a + i * paso, 10) for i in range(count)]
        return [float(p) for p in spec.split(",") if p.strip()]
    except ValueError as e:
        raise ConfigValidationError("p0", f"malla inválida '{spec}': {e}") from e


def _manifest(command: str, cfg: ExperimentConfig, started_at: str) -> RunManifest:
    return RunManifest(
        command=command,
        config=cfg.model_dump(),
        version=APP_VERSION,
        master_seed=cfg.master_seed,
        started_at=started_at,
    )


def _finish(manifest: RunManifest, outputs: Sequence[Path], out: Path) -> None:
    manifest_path = out / "manifest.json"
    manifest.outputs = [str(p) for p in outputs] + [str(manifest_path)]
    manifest.finished_at = _now()
    write_manifest(manifest, manifest_path)


def _exit_code(command: str, e: Exception) -> int:
    if isinstance(e, ConfigError):
        print(f"herdsim {command}: error de configuración: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    if not isinstance(e, HerdsimError):
        logger.exception(f"❌ Error inesperado en {command}")
    print(f"herdsim {command}: error: {e}", file=sys.stderr)
    return EXIT_RUNTIME_ERROR


def cmd_run(config: ConfigSource, out_dir: Union[str, Path], seed: Optional[int] = None, threads: Optional[int] = None) -> int:
    started_at = _now()
    try:
        cfg = _load(config, seed)
        workers = resolve_threads(threads)
        plan = processor.build_plan(cfg)
        summary, outcomes = run_experiment(plan, workers)

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        echo = cfg.model_dump()
        outputs = [
            write_trials_csv(outcomes, out / "trials.csv"),
            write_summary_json(summary, config_digest(echo), out / "summary.json"),
            write_histogram_csv(outcomes, out / "histogram.csv"),
        ]
        if any(o.belief_samples is not None for o in outcomes):
            outputs.append(write_trajectory_csv(outcomes, plan.sample_every, out / "trajectory.csv"))
            outputs.append(write_envelope_csv(outcomes, plan.sample_every, plan.pi.pi, out / "envelope.csv"))
            outputs.append(
                write_fluctuation_csv(
                    outcomes,
                    plan.sample_every,
                    cfg.fluctuation.window,
                    cfg.fluctuation.burn_in,
                    cfg.fluctuation.threshold,
                    out / "fluctuation.csv",
                )
            )

        manifest = _manifest("run", cfg, started_at)
        manifest.plan = processor.generar_analisis(plan)
        _finish(manifest, outputs, out)
    except Exception as e:
        return _exit_code("run", e)
    logger.info(f"✅ Resultados escritos en {out_dir}")
    return EXIT_OK


def cmd_sweep(
    config: ConfigSource,
    grid: Union[str, Sequence[float]],
    out_dir: Union[str, Path],
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> int:
    started_at = _now()
    try:
        cfg = _load(config, seed)
        valores = parse_grid(grid) if isinstance(grid, str) else [float(v) for v in grid]
        workers = resolve_threads(threads)
        plan = processor.build_plan(cfg)
        filas = sweep_p0(plan, valores, workers)

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        outputs = [write_sweep_csv(filas, out / "sweep.csv")]
        manifest = _manifest("sweep", cfg, started_at)
        manifest.plan = {**processor.generar_analisis(plan), "p0_grid": valores}
        _finish(manifest, outputs, out)
    except Exception as e:
        return _exit_code("sweep", e)
    logger.info(f"✅ Barrido de {len(valores)} valores de p0 escrito en {out_dir}")
    return EXIT_OK


def cmd_diagnose(
    config: ConfigSource, out_dir: Union[str, Path], oracle: bool = False, seed: Optional[int] = None
) -> int:
    started_at = _now()
    try:
        cfg = _load(config, seed)
        plan = processor.build_plan(cfg)
        report = run_diagnostics(plan, cfg.diagnose.samples, cfg.diagnose.states, oracle)

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        tablas = {
            "diagnose_states.csv": report.states,
            "drift.csv": report.drift,
            "variance.csv": report.variance,
        }
        if report.oracle is not None:
            tablas["oracle.csv"] = report.oracle
        outputs = [write_table(df, out / nombre, df.columns) for nombre, df in tablas.items()]

        manifest = _manifest("diagnose", cfg, started_at)
        manifest.plan = processor.generar_analisis(plan)
        _finish(manifest, outputs, out)
    except Exception as e:
        return _exit_code("diagnose", e)
    return EXIT_OK


def cmd_gen_graph(model: str, seed: int, path: Union[str, Path]) -> int:
    try:
        try:
            n, graph_model = parse_graph_model(model)
        except GraphError as e:
            raise ConfigValidationError("model", str(e)) from e
        g = random_graph(n, graph_model, seed=seed)
        write_graph(g, path)
    except Exception as e:
        return _exit_code("gen-graph", e)
    logger.info(f"✅ Grafo {model} (semilla {seed}) escrito en {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="herdsim",
        description="Simulación Monte Carlo de dinámicas de opinión guiadas por acciones.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Ejecuta un experimento completo.")
    run.add_argument("-c", "--config", required=True, help="Archivo de configuración TOML.")
    run.add_argument("-o", "--out", required=True, help="Directorio de salida.")
    run.add_argument("--seed", type=int, default=None, help="Sustituye master_seed.")
    run.add_argument("--threads", type=int, default=None, help="Procesos de trabajo (HERDSIM_THREADS tiene prioridad).")

    sweep = sub.add_parser("sweep", help="Barrido de la creencia inicial p0.")
    sweep.add_argument("-c", "--config", required=True)
    sweep.add_argument("-o", "--out", required=True)
    sweep.add_argument("--p0", required=True, help="Malla 'a:b:paso' o lista '0.2,0.5,0.8'.")
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--threads", type=int, default=None)

    diagnose = sub.add_parser("diagnose", help="Deriva y varianza de Δq, y prueba contra el oráculo exacto.")
    diagnose.add_argument("-c", "--config", required=True)
    diagnose.add_argument("-o", "--out", required=True)
    diagnose.add_argument("--oracle", action="store_true", help="Chi-cuadrado contra la enumeración exacta (N ≤ 12).")
    diagnose.add_argument("--seed", type=int, default=None)

    gen = sub.add_parser("gen-graph", help="Genera un grafo aleatorio en formato herdsim-graph v1.")
    gen.add_argument("--model", required=True, help="er:<n>:<p>, ring:<n>:<k>, complete:<n> o star:<n>.")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("-o", "--out", required=True, help="Archivo de salida.")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out, seed=args.seed, threads=args.threads)
    if args.command == "sweep":
        return cmd_sweep(args.config, args.p0, args.out, seed=args.seed, threads=args.threads)
    if args.command == "diagnose":
        return cmd_diagnose(args.config, args.out, oracle=args.oracle, seed=args.seed)
    return cmd_gen_graph(args.model, args.seed, args.out)


if __name__ == "__main__":
    sys.exit(main())
