"""Process-wide settings loaded from environment variables."""

import os


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        value = int(raw)
    except ValueError:
        return default
    return value if value >= 1 else default


class Settings:
    """Application settings loaded from environment variables."""

    THREADS: int = _env_int("YNET_THREADS", os.cpu_count() or 1)
    LOG_LEVEL: str = os.getenv("YNET_LOG_LEVEL", "INFO").upper()
    ENVIRONMENT: str = os.getenv("YNET_ENVIRONMENT", "development")

    @property
    def is_production(self) -> bool:
        """Check if running in production environment."""
        return self.ENVIRONMENT == "production"

    @property
    def debug(self) -> bool:
        """Enable debug diagnostics in non-production environments."""
        return not self.is_production

    @property
    def threads(self) -> int:
        """Worker thread cap for evaluation, loading and generation pools."""
        return max(1, self.THREADS)


settings = Settings()
