__version__ = "0.1.0"

from .pipeline import PipelineProcessor, StageResult  # noqa: E402

__all__ = ['PipelineProcessor', 'StageResult', '__version__']
