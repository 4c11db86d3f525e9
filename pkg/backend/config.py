import os
from dataclasses import dataclass, field

try:
    from dotenv import load_dotenv

    load_dotenv()
except ImportError:
    pass


def _env_bool(name: str, default: str) -> bool:
    return os.environ.get(name, default).strip().lower() in ("1", "true", "yes", "on")


@dataclass
class Settings:
    REGISTRY_PATH: str = field(
        default_factory=lambda: os.environ.get("REGISTRY_PATH", "./registry.db")
    )
    HOST: str = field(default_factory=lambda: os.environ.get("HOST", "0.0.0.0"))
    PORT: int = field(default_factory=lambda: int(os.environ.get("PORT", "8000")))
    LOG_LEVEL: str = field(
        default_factory=lambda: os.environ.get("LOG_LEVEL", "INFO").upper()
    )

    # Sketching
    BINS_PER_NUMERIC_FEATURE: int = field(
        default_factory=lambda: int(os.environ.get("BINS_PER_NUMERIC_FEATURE", "32"))
    )
    PARTITION_SIZE: int = field(
        default_factory=lambda: int(os.environ.get("PARTITION_SIZE", "500"))
    )

    # Hash families
    MINHASH_K: int = field(
        default_factory=lambda: int(os.environ.get("MINHASH_K", "4"))
    )
    MINHASH_L: int = field(
        default_factory=lambda: int(os.environ.get("MINHASH_L", "32"))
    )
    MINHASH_SEED: int = field(
        default_factory=lambda: int(os.environ.get("MINHASH_SEED", "1"))
    )
    JSLSH_K: int = field(default_factory=lambda: int(os.environ.get("JSLSH_K", "10")))
    JSLSH_L: int = field(default_factory=lambda: int(os.environ.get("JSLSH_L", "30")))
    JSLSH_R: float = field(
        default_factory=lambda: float(os.environ.get("JSLSH_R", "1.5"))
    )
    JSLSH_SEED: int = field(
        default_factory=lambda: int(os.environ.get("JSLSH_SEED", "2"))
    )
    L2LSH_K: int = field(default_factory=lambda: int(os.environ.get("L2LSH_K", "6")))
    L2LSH_L: int = field(default_factory=lambda: int(os.environ.get("L2LSH_L", "24")))
    L2LSH_R: float = field(
        default_factory=lambda: float(os.environ.get("L2LSH_R", "0.25"))
    )
    L2LSH_SEED: int = field(
        default_factory=lambda: int(os.environ.get("L2LSH_SEED", "3"))
    )

    # Search thresholds
    T1: float = field(default_factory=lambda: float(os.environ.get("T1", "0.5")))
    T2: float = field(default_factory=lambda: float(os.environ.get("T2", "0.5")))
    T_ADAPTIVITY: float = field(
        default_factory=lambda: float(os.environ.get("T_ADAPTIVITY", "0.5"))
    )
    T_JS: float = field(default_factory=lambda: float(os.environ.get("T_JS", "0.1")))
    RESCORING_MAX_CANDIDATES: int = field(
        default_factory=lambda: int(os.environ.get("RESCORING_MAX_CANDIDATES", "64"))
    )

    # Service
    ASYNC_REGISTRATION_PARTITIONS: int = field(
        default_factory=lambda: int(
            os.environ.get("ASYNC_REGISTRATION_PARTITIONS", "2000")
        )
    )

    REPORT_BITS: bool = field(default_factory=lambda: _env_bool("REPORT_BITS", "0"))

    @property
    def REGISTRY_URL(self) -> str:
        return f"sqlite+aiosqlite:///{self.REGISTRY_PATH}"


settings = Settings()
