"""
Конфигурация решателя Biot FETI-DP
Все настройки загружаются из переменных окружения с fallback на значения по умолчанию.
"""
import os

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Основные настройки приложения"""

    # ==================== Logging ====================
    log_level: str = os.getenv("LOG_LEVEL", "INFO")
    log_dir: str = os.getenv("LOG_DIR", "")

    # ==================== Output ====================
    output_dir: str = os.getenv("OUTPUT_DIR", "results")

    # ==================== Parallelism ====================
    # 0 means "use every available core"
    solver_threads: int = int(os.getenv("SOLVER_THREADS", "0"))
    # independent (nd, H/h, ν, κ) cells of the scalability sweep run side by side
    scalability_cell_workers: int = int(os.getenv("SCALABILITY_CELL_WORKERS", "2"))

    # ==================== PCG ====================
    pcg_tolerance: float = float(os.getenv("PCG_TOLERANCE", "1e-8"))
    pcg_max_iterations: int = int(os.getenv("PCG_MAX_ITERATIONS", "500"))

    # ==================== Checks ====================
    consistency_tolerance: float = float(os.getenv("CONSISTENCY_TOLERANCE", "1e-6"))
    oracle_tolerance: float = float(os.getenv("ORACLE_TOLERANCE", "1e-6"))
    oracle_max_elements_per_side: int = int(os.getenv("ORACLE_MAX_ELEMENTS_PER_SIDE", "32"))

    # ==================== Factorization ====================
    zero_pivot_tolerance: float = float(os.getenv("ZERO_PIVOT_TOLERANCE", "1e-14"))
    dense_inertia_limit: int = int(os.getenv("DENSE_INERTIA_LIMIT", "3000"))

    class Config:
        env_file = ".env"
        case_sensitive = False
        extra = "ignore"

    @property
    def threads(self) -> int:
        """Effective worker count for subdomain-level parallelism."""
        if self.solver_threads > 0:
            return self.solver_threads
        return os.cpu_count() or 1


# Глобальный экземпляр настроек
settings = Settings()


def get_settings() -> Settings:
    """Возвращает экземпляр настроек."""
    return settings
