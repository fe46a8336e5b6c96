"""Configuration settings loaded from environment variables."""

from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="W2RECON_",
        extra="ignore",
    )

    # Where experiment reports are written unless --out is given
    out_dir: Path = Field(default=Path("runs"), description="Report output directory")

    # Where --data paths are resolved when relative
    data_dir: Path = Field(default=Path("data"), description="Dataset directory")

    log_level: str = Field(default="INFO", description="Root logging level")

    # Repeats and sweep points run in a process pool of this size
    workers: int = Field(default=1, ge=1, description="Parallel worker processes")

    # Intra-op threads per torch process; 1 keeps reductions reproducible
    torch_threads: int = Field(default=1, ge=1, description="Torch CPU threads")

    default_seed: int = Field(default=0, ge=0, description="Seed when --seed is omitted")

    def resolve_data_path(self, path: Path) -> Path:
        """Resolve a dataset path against the data directory."""
        if path.is_absolute() or path.exists():
            return path
        return self.data_dir / path

    def ensure_out_dir(self) -> None:
        """Create output directory if it doesn't exist."""
        self.out_dir.mkdir(parents=True, exist_ok=True)


# Global settings instance
settings = Settings()
