from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import List, Optional, Union


class StrictModel(BaseModel):
    """Base de los modelos del documento de configuración: claves desconocidas se rechazan."""
    model_config = ConfigDict(extra="forbid")


class GraphSource(StrictModel):
    file: Optional[str] = Field(None, description="Ruta a un archivo herdsim-graph v1.")
    model: Optional[str] = Field(None, description="Generador: er:<n>:<p>, ring:<n>:<k>, complete:<n>, star:<n>.")
    seed: Optional[int] = Field(None, ge=0, description="Semilla del generador aleatorio de grafos.")

    @model_validator(mode="after")
    def exactly_one_source(self):
        """El grafo viene de un archivo o de un generador, no de ambos."""
        if (self.file is None) == (self.model is None):
            raise ValueError("indique exactamente uno de graph.file o graph.model")
        return self


class DynamicsSection(StrictModel):
    rule: str = Field(..., description="consensus, random_interactions, bounded_confidence o reinforcement.")
    alpha: Optional[Union[float, List[float]]] = Field(None, description="Tasa de actualización, escalar o por nodo.")
    tau: Optional[float] = Field(None, description="Umbral de confianza (bounded_confidence).")
    scheme: Optional[str] = Field(None, description="pairwise_gossip o edge_sampling (random_interactions).")
    edge_p: Optional[float] = Field(None, ge=0.0, le=1.0, description="Probabilidad de conservar cada arista.")
    frozen_bystanders: Optional[bool] = Field(None, description="Los agentes que no interactúan no se actualizan.")
    pair_selection: Optional[str] = Field(None, description="weighted o uniform (reinforcement).")

    @field_validator("rule", "scheme", "pair_selection", mode="before")
    def normalize_names(cls, v):
        """Acepta mayúsculas y guiones: 'Bounded-Confidence' -> 'bounded_confidence'."""
        if isinstance(v, str):
            return v.strip().lower().replace("-", "_")
        return v

    @field_validator("alpha")
    def alpha_in_range(cls, v):
        if v is None:
            return v
        valores = v if isinstance(v, list) else [v]
        if not valores or any(not 0.0 < a <= 1.0 for a in valores):
            raise ValueError(f"alpha debe estar en (0, 1], se recibió {v}")
        return v

    @field_validator("tau")
    def tau_below_one(cls, v):
        if v is not None and not 0.0 < v < 1.0:
            raise ValueError(f"tau debe estar en (0, 1), se recibió {v}")
        return v


class InitSection(StrictModel):
    mode: Optional[str] = Field(None, description="constant, iid_uniform_mean o explicit.")
    p0: Optional[float] = Field(None, ge=0.0, le=1.0, description="Creencia inicial media.")
    vector: Optional[List[float]] = Field(None, description="x(0) explícito.")

    @field_validator("vector")
    def vector_in_unit_interval(cls, v):
        if v is not None and any(not 0.0 <= x <= 1.0 for x in v):
            raise ValueError("todas las componentes de x(0) deben estar en [0, 1]")
        return v


class FluctuationSection(StrictModel):
    window: Optional[int] = Field(None, ge=1, description="Ventana móvil, en muestras.")
    burn_in: Optional[int] = Field(None, ge=0, description="Pasos descartados al inicio.")
    threshold: Optional[float] = Field(None, gt=0.0, description="Desviación mínima para declarar no convergencia.")


class DiagnoseSection(StrictModel):
    samples: Optional[int] = Field(None, ge=2, description="Pasos muestreados por estado.")
    states: Optional[int] = Field(None, ge=0, description="Estados dispersos adicionales.")


class ExperimentConfig(StrictModel):
    """
    Documento de configuración de un experimento. La estructura y los rangos se
    validan aquí; los valores por defecto y las reglas entre campos los aplica
    la clase de configuración del modelo.
    """
    graph: GraphSource
    dynamics: DynamicsSection
    init: Optional[InitSection] = None
    trials: int = Field(..., ge=1, description="Número de ensayos Monte Carlo.")
    max_steps: Optional[int] = Field(None, ge=1)
    epsilon: Optional[float] = Field(None, gt=0.0, lt=0.5)
    master_seed: Optional[int] = Field(None, ge=0, lt=2**64)
    sample_every: Optional[int] = Field(None, ge=1)
    trajectory_trials: Optional[int] = Field(None, ge=0)
    fluctuation: Optional[FluctuationSection] = None
    diagnose: Optional[DiagnoseSection] = None
