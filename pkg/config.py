from typing import Any, Dict, List

from config_base import ModelConfigBase
from errors import ConfigValidationError
from graph import derive_graph_seed

APP_VERSION = "1.0.0"


class HerdingModelConfig(ModelConfigBase):
    """Configuración de la dinámica de opinión guiada por acciones."""

    # --- Implementation of Abstract Properties ---

    @property
    def VALID_RULES(self) -> List[str]:
        return ["consensus", "random_interactions", "bounded_confidence", "reinforcement"]

    @property
    def VALID_SCHEMES(self) -> List[str]:
        return ["pairwise_gossip", "edge_sampling"]

    @property
    def VALID_GRAPH_MODELS(self) -> List[str]:
        return ["er", "ring", "complete", "star"]

    @property
    def VALID_INIT_MODES(self) -> List[str]:
        return ["constant", "iid_uniform_mean", "explicit"]

    @property
    def VALID_PAIR_SELECTIONS(self) -> List[str]:
        return ["weighted", "uniform"]

    @property
    def DEFAULT_ALPHA(self) -> float:
        return 0.3

    @property
    def DEFAULT_EPSILON(self) -> float:
        return 1e-6

    @property
    def DEFAULT_MAX_STEPS(self) -> int:
        return 1_000_000

    @property
    def DEFAULT_SAMPLE_EVERY(self) -> int:
        return 100

    @property
    def DEFAULT_TRAJECTORY_TRIALS(self) -> int:
        return 1

    @property
    def DEFAULT_FLUCTUATION_WINDOW(self) -> int:
        return 1000

    @property
    def DEFAULT_FLUCTUATION_THRESHOLD(self) -> float:
        return 1e-3

    @property
    def DEFAULT_DIAGNOSE_SAMPLES(self) -> int:
        return 10_000

    @property
    def DEFAULT_DIAGNOSE_STATES(self) -> int:
        return 8

    @property
    def DEFAULT_MASTER_SEED(self) -> int:
        return 0

    @property
    def DEFAULT_INIT(self) -> Dict[str, Any]:
        return {"mode": "constant", "p0": 0.5}

    # --- Helper Methods ---

    def is_valid_rule(self, rule: str) -> bool:
        return rule in self.VALID_RULES

    def is_valid_scheme(self, scheme: str) -> bool:
        return scheme in self.VALID_SCHEMES

    def is_valid_init_mode(self, mode: str) -> bool:
        return mode in self.VALID_INIT_MODES

    def is_valid_pair_selection(self, selection: str) -> bool:
        return selection in self.VALID_PAIR_SELECTIONS

    def apply_defaults(self, data: Dict[str, Any]) -> Dict[str, Any]:
        """Completa los valores omitidos del documento (ya validado estructuralmente)."""
        data = dict(data)
        for key, default in (
            ("epsilon", self.DEFAULT_EPSILON),
            ("max_steps", self.DEFAULT_MAX_STEPS),
            ("sample_every", self.DEFAULT_SAMPLE_EVERY),
            ("trajectory_trials", self.DEFAULT_TRAJECTORY_TRIALS),
            ("master_seed", self.DEFAULT_MASTER_SEED),
        ):
            if data.get(key) is None:
                data[key] = default

        graph = dict(data.get("graph") or {})
        if graph.get("model") is not None and graph.get("seed") is None:
            graph["seed"] = derive_graph_seed(data["master_seed"])
        data["graph"] = graph

        dynamics = dict(data.get("dynamics") or {})
        if dynamics.get("alpha") is None:
            dynamics["alpha"] = self.DEFAULT_ALPHA
        if dynamics.get("rule") == "random_interactions":
            if dynamics.get("edge_p") is None:
                dynamics["edge_p"] = 1.0
            if dynamics.get("frozen_bystanders") is None:
                dynamics["frozen_bystanders"] = True
        if dynamics.get("rule") == "reinforcement" and dynamics.get("pair_selection") is None:
            dynamics["pair_selection"] = "weighted"
        data["dynamics"] = dynamics

        init = dict(data.get("init") or {})
        if all(v is None for v in init.values()):
            init = dict(self.DEFAULT_INIT)
        if init.get("mode") is None:
            init["mode"] = self.DEFAULT_INIT["mode"]
        data["init"] = init

        fluctuation = dict(data.get("fluctuation") or {})
        if fluctuation.get("window") is None:
            fluctuation["window"] = self.DEFAULT_FLUCTUATION_WINDOW
        if fluctuation.get("burn_in") is None:
            fluctuation["burn_in"] = 0
        if fluctuation.get("threshold") is None:
            fluctuation["threshold"] = self.DEFAULT_FLUCTUATION_THRESHOLD
        data["fluctuation"] = fluctuation

        diagnose = dict(data.get("diagnose") or {})
        if diagnose.get("samples") is None:
            diagnose["samples"] = self.DEFAULT_DIAGNOSE_SAMPLES
        if diagnose.get("states") is None:
            diagnose["states"] = self.DEFAULT_DIAGNOSE_STATES
        data["diagnose"] = diagnose
        return data

    def validate_semantics(self, data: Dict[str, Any]) -> None:
        """Reglas que dependen de varios campos a la vez."""
        dynamics = data["dynamics"]
        rule = dynamics.get("rule")
        if not self.is_valid_rule(rule):
            raise ConfigValidationError("dynamics.rule", f"debe ser uno de {self.VALID_RULES}, se recibió '{rule}'.")

        if rule == "bounded_confidence" and dynamics.get("tau") is None:
            raise ConfigValidationError("dynamics.tau", "bounded_confidence requiere tau en (0, 1).")
        if rule == "random_interactions":
            scheme = dynamics.get("scheme")
            if not self.is_valid_scheme(scheme):
                raise ConfigValidationError(
                    "dynamics.scheme", f"debe ser uno de {self.VALID_SCHEMES}, se recibió '{scheme}'."
                )
        selection = dynamics.get("pair_selection")
        if selection is not None and not self.is_valid_pair_selection(selection):
            raise ConfigValidationError(
                "dynamics.pair_selection", f"debe ser uno de {self.VALID_PAIR_SELECTIONS}, se recibió '{selection}'."
            )

        init = data["init"]
        mode = init.get("mode")
        if not self.is_valid_init_mode(mode):
            raise ConfigValidationError("init.mode", f"debe ser uno de {self.VALID_INIT_MODES}, se recibió '{mode}'.")
        if mode == "explicit" and not init.get("vector"):
            raise ConfigValidationError("init.vector", "el modo explicit requiere el vector x(0).")
        if mode != "explicit" and init.get("p0") is None:
            raise ConfigValidationError("init.p0", f"el modo {mode} requiere p0.")

        graph = data["graph"]
        model = graph.get("model")
        if model is not None and model.split(":")[0].lower() not in self.VALID_GRAPH_MODELS + ["erdos_renyi"]:
            raise ConfigValidationError(
                "graph.model", f"debe comenzar por uno de {self.VALID_GRAPH_MODELS}, se recibió '{model}'."
            )

    def estimate_max_steps(self, data: Dict[str, Any]) -> int:
        """Cota superior del número total de pasos del experimento."""
        return int(data.get("trials") or 0) * int(data.get("max_steps") or self.DEFAULT_MAX_STEPS)
