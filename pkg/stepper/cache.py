import hashlib
from abc import ABC, abstractmethod
from collections import OrderedDict
from typing import TYPE_CHECKING

from models.core import GridSpec
from models.params import ModelParams

if TYPE_CHECKING:
    from stepper.stepper import LinearSystemCache

# Hysteresis in dt selection keeps at most a couple of systems alive
DEFAULT_CAPACITY: int = 4


class FactorizationCache(ABC):
    """An abstract class for stores of factorized implicit systems."""

    @abstractmethod
    def add_system(self, key: str, system: "LinearSystemCache") -> None:
        """Store a factorized system under key. Abstract method."""
        pass

    @abstractmethod
    def get_system(self, key: str) -> "LinearSystemCache | None":
        """Get a factorized system from the cache. Abstract method."""
        pass

    @abstractmethod
    def has_system(self, key: str) -> bool:
        """Check if the cache has the system. Abstract method."""
        pass


class LocalFactorizationCache(FactorizationCache):
    """In-process cache evicting the least recently used system past its capacity."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY) -> None:
        self.capacity: int = capacity
        self.cache: OrderedDict[str, "LinearSystemCache"] = OrderedDict()

    def add_system(self, key: str, system: "LinearSystemCache") -> None:
        self.cache[key] = system
        self.cache.move_to_end(key)
        while len(self.cache) > self.capacity:
            self.cache.popitem(last=False)

    def has_system(self, key: str) -> bool:
        return key in self.cache

    def get_system(self, key: str) -> "LinearSystemCache | None":
        system: "LinearSystemCache | None" = self.cache.get(key)
        if system is not None:
            self.cache.move_to_end(key)
        return system


def generate_cache_key(
    spec: GridSpec, params: ModelParams, dt: float, theta: float
) -> str:
    """
    Generate a cache key for the implicit system of one (grid, params, dt, theta).

    The forcing does not enter the implicit operator, so it is left out of the key.
    dt and theta are written with repr so that keys differ whenever the floats do.

    Args:
        spec (GridSpec): Grid resolution and transverse boundary type.
        params (ModelParams): Model coefficients.
        dt (float): Time step.
        theta (float): Implicit weight.

    Returns:
        str: A sha256 hex digest used as the cache key.
    """
    parts: list[str] = [
        spec.model_dump_json(),
        repr(float(params.c)),
        repr(float(params.epsilon)),
        repr(float(dt)),
        repr(float(theta)),
    ]
    return hashlib.sha256("|".join(parts).encode()).hexdigest()
