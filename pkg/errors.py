"""
Jerarquía de excepciones del simulador.

Las condiciones de entrada inválida heredan de ValueError para que el código
que ya captura ValueError (validación de configuración, CLI) siga funcionando.
"""
from typing import Optional


class HerdsimError(Exception):
    """Raíz de todos los errores propios del simulador."""


# --- Grafo ---

class GraphError(HerdsimError, ValueError):
    pass


class EmptyRowError(GraphError):
    def __init__(self, agent: int):
        self.agent = agent
        super().__init__(f"El agente {agent} no tiene influencias (fila vacía).")


class NegativeWeightError(GraphError):
    def __init__(self, source: int, target: int, weight: float):
        self.source, self.target, self.weight = source, target, weight
        super().__init__(f"Peso negativo {weight} en la arista ({source}, {target}).")


class IndexOutOfRangeError(GraphError):
    def __init__(self, index: int, n: int):
        self.index, self.n = index, n
        super().__init__(f"Índice {index} fuera de rango [0, {n}).")


class NotIrreducibleError(GraphError):
    pass


class AlphaOutOfRangeError(GraphError):
    pass


class ConnectivityFailureError(GraphError):
    pass


class GraphFormatError(GraphError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"línea {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class NoConvergenceError(HerdsimError, RuntimeError):
    def __init__(self, max_iter: int, residual: float):
        self.max_iter, self.residual = max_iter, residual
        super().__init__(f"Sin convergencia tras {max_iter} iteraciones (residuo {residual:.3e}).")


# --- Dinámica ---

class DynamicsError(HerdsimError, ValueError):
    pass


class DimensionMismatchError(DynamicsError):
    pass


class NoEdgesError(DynamicsError):
    pass


class NeighborhoodTooLargeError(DynamicsError):
    def __init__(self, agent: int, degree: int, limit: int):
        self.agent, self.degree, self.limit = agent, degree, limit
        super().__init__(f"El agente {agent} tiene {degree} vecinos; el límite de enumeración es {limit}.")


# --- Análisis ---

class AnalysisError(HerdsimError, ValueError):
    pass


class TooLargeError(AnalysisError):
    pass


class NoResolvedTrialsError(AnalysisError):
    pass


class TooShortError(AnalysisError):
    pass


# --- Configuración ---

class ConfigError(HerdsimError, ValueError):
    pass


class ConfigParseError(ConfigError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(message)


class ConfigValidationError(ConfigError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class UnknownKeyError(ConfigError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"Clave desconocida en la configuración: '{key}'")
