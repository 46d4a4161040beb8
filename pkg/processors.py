import logging
from pathlib import Path
from typing import Any, Dict

import numpy as np

from dynamics import DynamicsSpec, Rule, expected_step_operator
from errors import ConfigValidationError, GraphError
from graph import (
    WeightedGraph,
    derive_graph_seed,
    is_irreducible,
    parse_graph_model,
    random_graph,
    read_graph,
    stationary_distribution,
)
from montecarlo import ExperimentPlan, InitMode, InitSpec
from schemas import DynamicsSection, ExperimentConfig, GraphSource, InitSection

logger = logging.getLogger(__name__)


class ExperimentProcessor:
    """Convierte un ExperimentConfig validado en un ExperimentPlan ejecutable."""

    def load_graph(self, source: GraphSource, master_seed: int = 0) -> WeightedGraph:
        if source.file is not None:
            return read_graph(source.file)
        try:
            n, model = parse_graph_model(source.model)
        except GraphError as e:
            raise ConfigValidationError("graph.model", str(e)) from e
        seed = source.seed if source.seed is not None else derive_graph_seed(master_seed)
        return random_graph(n, model, seed=seed)

    def build_dynamics(self, section: DynamicsSection, n: int) -> DynamicsSpec:
        alpha = section.alpha
        if isinstance(alpha, list):
            if len(alpha) != n:
                raise ConfigValidationError("dynamics.alpha", f"el vector por nodo debe tener {n} componentes.")
            alpha = np.array(alpha, dtype=float)
        return DynamicsSpec(
            rule=Rule(section.rule),
            alpha=alpha,
            tau=section.tau,
            scheme=section.scheme,
            edge_p=section.edge_p if section.edge_p is not None else 1.0,
            frozen_bystanders=section.frozen_bystanders if section.frozen_bystanders is not None else True,
            pair_selection=section.pair_selection or "weighted",
        )

    def build_init(self, section: InitSection, n: int) -> InitSpec:
        mode = InitMode(section.mode)
        if mode is InitMode.EXPLICIT:
            if len(section.vector) != n:
                raise ConfigValidationError("init.vector", f"x(0) debe tener {n} componentes, tiene {len(section.vector)}.")
            return InitSpec(mode=mode, vector=tuple(float(v) for v in section.vector))
        return InitSpec(mode=mode, p0=float(section.p0))

    def build_plan(self, cfg: ExperimentConfig) -> ExperimentPlan:
        """Carga el grafo, verifica irreducibilidad y calcula la π con que se mide q(t)."""
        g = self.load_graph(cfg.graph, cfg.master_seed)
        if not is_irreducible(g):
            raise GraphError("El grafo de influencia no es fuertemente conexo (W no es irreducible).")

        dynamics = self.build_dynamics(cfg.dynamics, g.n)
        if dynamics.rule in (Rule.CONSENSUS, Rule.RANDOM_INTERACTIONS):
            # q(t) es martingala respecto a la π del operador de un paso (W_α, o E[W(t)]_α).
            pi = stationary_distribution(expected_step_operator(g, dynamics).as_graph())
        else:
            pi = stationary_distribution(g)

        plan = ExperimentPlan(
            graph=g,
            dynamics=dynamics,
            init=self.build_init(cfg.init, g.n),
            pi=pi,
            trials=cfg.trials,
            max_steps=cfg.max_steps,
            epsilon=cfg.epsilon,
            master_seed=cfg.master_seed,
            sample_every=cfg.sample_every,
            trajectory_trials=cfg.trajectory_trials,
        )
        logger.info(f"📋 Plan listo: n={g.n}, regla={dynamics.rule.value}, ensayos={plan.trials}")
        return plan

    def generar_analisis(self, plan: ExperimentPlan) -> Dict[str, Any]:
        """Resumen descriptivo del plan para el manifiesto."""
        g = plan.graph
        grados = [g.degree(i) for i in range(g.n)]
        return {
            "agents": g.n,
            "undirected_edges": int(len(g.undirected_edges)),
            "directed": g.directed,
            "min_degree": int(min(grados)),
            "max_degree": int(max(grados)),
            "rule": plan.dynamics.rule.value,
            "pi_min": float(plan.pi.pi.min()),
            "pi_max": float(plan.pi.pi.max()),
            "init_mode": plan.init.mode.value,
            "max_total_steps": plan.trials * plan.max_steps,
        }


def resolve_graph_path(source: Dict[str, Any], base_dir: Path) -> Dict[str, Any]:
    """Vuelve absoluta una ruta de grafo relativa al archivo de configuración."""
    if source.get("file"):
        path = Path(source["file"])
        if not path.is_absolute():
            source = {**source, "file": str((base_dir / path).resolve())}
    return source
