from abc import ABC, abstractmethod
from typing import List


class ModelConfigBase(ABC):
    """
    Abstract Base Class that defines the contract for any model configuration.
    A concrete class lists the valid rules, schemes, graph models and init
    modes, and provides the defaults applied to a parsed config document.
    """

    # --- Abstract Class-level Properties ---
    # These must be defined in the concrete subclass.

    @property
    @abstractmethod
    def VALID_RULES(self) -> List[str]: ...

    @property
    @abstractmethod
    def VALID_SCHEMES(self) -> List[str]: ...

    @property
    @abstractmethod
    def VALID_GRAPH_MODELS(self) -> List[str]: ...

    @property
    @abstractmethod
    def VALID_INIT_MODES(self) -> List[str]: ...

    @property
    @abstractmethod
    def VALID_PAIR_SELECTIONS(self) -> List[str]: ...

    @property
    @abstractmethod
    def DEFAULT_ALPHA(self) -> float: ...

    @property
    @abstractmethod
    def DEFAULT_EPSILON(self) -> float: ...

    @property
    @abstractmethod
    def DEFAULT_MAX_STEPS(self) -> int: ...

    @property
    @abstractmethod
    def DEFAULT_SAMPLE_EVERY(self) -> int: ...

    @property
    @abstractmethod
    def DEFAULT_TRAJECTORY_TRIALS(self) -> int: ...

    @property
    @abstractmethod
    def DEFAULT_FLUCTUATION_WINDOW(self) -> int: ...

    @property
    @abstractmethod
    def DEFAULT_FLUCTUATION_THRESHOLD(self) -> float: ...

    @property
    @abstractmethod
    def DEFAULT_DIAGNOSE_SAMPLES(self) -> int: ...

    # --- Abstract Helper Methods ---

    @abstractmethod
    def is_valid_rule(self, rule: str) -> bool: ...

    @abstractmethod
    def is_valid_scheme(self, scheme: str) -> bool: ...

    @abstractmethod
    def is_valid_init_mode(self, mode: str) -> bool: ...
