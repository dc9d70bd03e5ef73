"""Shared service instances for the HTTP surface"""
from core.config import settings
from core.logging import get_logger
from services.experiment_runner import ExperimentRunner

logger = get_logger("core.dependencies")


class Services:
    _instance = None
    _initialized = False

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(Services, cls).__new__(cls)
            cls._instance.experiment_runner = ExperimentRunner()
        return cls._instance

    def __init__(self):
        if not Services._initialized:
            self.initialize()
            Services._initialized = True

    def initialize(self) -> None:
        """Check the data and output roots; missing data is a warning, not a startup failure"""
        try:
            logger.info("Starting services initialization...")
            if not settings.DATA_ROOT.exists():
                logger.warning(
                    f"data root {settings.DATA_ROOT} does not exist; run {settings.FETCH_SCRIPT} before training"
                )
            self.experiment_runner.output_root.mkdir(parents=True, exist_ok=True)
            logger.info(f"Experiment runner writing under {self.experiment_runner.output_root}")
            Services._initialized = True
        except Exception as e:
            logger.error(f"Error initializing services: {str(e)}")
            Services._initialized = False
            raise

    async def cleanup(self) -> None:
        logger.info("Services cleaned up")
        Services._initialized = False

    @classmethod
    def reset(cls) -> None:
        """Drop the singleton so the next access re-reads settings"""
        cls._instance = None
        cls._initialized = False


def get_services() -> Services:
    """Dependency injection entry point"""
    return Services()
