from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib.metadata import version


@lru_cache(maxsize=1)
def minhash_scheme() -> str:
    """MinHash implementation in use; hash values change across major releases."""
    return f"datasketch-{version('datasketch').split('.')[0]}"


@dataclass(frozen=True)
class MinHashParams:
    k_per_band: int = 4
    num_bands: int = 32
    master_seed: int = 1
    scheme: str = field(default_factory=minhash_scheme)

    def __post_init__(self):
        if self.k_per_band < 1 or self.num_bands < 1:
            raise ValueError("MinHash K and L must be >= 1")

    @property
    def num_functions(self) -> int:
        return self.k_per_band * self.num_bands


@dataclass(frozen=True)
class JsLshParams:
    """Parameters of a p-stable family h = ceil((a . x + b) / r).

    Also used for the L2 family over dataset centers.
    """

    k_per_band: int = 10
    num_bands: int = 30
    r: float = 1.5
    master_seed: int = 2

    def __post_init__(self):
        if self.k_per_band < 1 or self.num_bands < 1:
            raise ValueError("JS-LSH K and L must be >= 1")
        if not self.r > 0:
            raise ValueError("bucket width r must be positive")

    @property
    def num_functions(self) -> int:
        return self.k_per_band * self.num_bands

    def with_width(self, r: float) -> "JsLshParams":
        return replace(self, r=r)


@dataclass(frozen=True)
class Signature:
    """One band's concatenation of K hash values."""

    band_index: int
    values: tuple[int, ...]
