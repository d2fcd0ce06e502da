from src.cli.run_config import RunConfig, Stage, resolve_run_config

__all__ = ["RunConfig", "Stage", "resolve_run_config"]
