from pydantic_settings import BaseSettings
from pydantic import ConfigDict


class Settings(BaseSettings):
    model_config = ConfigDict(
        env_file=".env",
        env_prefix="AAVIT_",
        case_sensitive=False
    )

    log_level: str = "INFO"
    checkpoint_path: str = "runs/model.aavt"  # checkpoint served by main.py
    decision_threshold: float = 0.5
    host: str = "0.0.0.0"
    port: int = 8088
    score_workers: int = 1


settings = Settings()
